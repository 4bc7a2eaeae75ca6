//! The PIO network driver's receive path, as a microprogram.

use super::profile::CoreProfile;
use super::program::{Count, Microprogram, Op, Sink, Source, Transform};
use crate::netfabric::pac;

/// DDR offset of the mbuf the driver copies frames into.
pub const MBUF_OFFSET: u64 = 0x0010_0000;

const LEN: u8 = 0;
const META: u8 = 1;

/// Receive one frame from the PAC, answer ICMP echo requests on the port
/// the request came from, and pay the per-packet stack cost.
///
/// `pac_base` is the bus address of the PAC register block. Anything that
/// is not an echo request is read fully and then dropped.
pub fn icmp_echo_handler(profile: &CoreProfile, pac_base: u32) -> Microprogram {
    icmp_echo_handler_with(profile, pac_base, &[])
}

/// As [`icmp_echo_handler`], with `before_tx` spliced in between receive
/// processing and transmit.
pub fn icmp_echo_handler_with(profile: &CoreProfile, pac_base: u32, before_tx: &[Op]) -> Microprogram {
    let reg = |off: u64| pac_base + off as u32;
    let mut ops = vec![
        Op::RegRead {
            addr: reg(pac::RX_LEN),
            sink: Sink::Slot(LEN),
        },
        Op::RegRead {
            addr: reg(pac::RX_META),
            sink: Sink::Slot(META),
        },
        Op::Loop {
            count: Count::WordsInSlot(LEN),
            body: vec![
                Op::RegRead {
                    addr: reg(pac::RX_DATA),
                    sink: Sink::RxBuffer,
                },
                Op::Compute(profile.c_word_compute),
            ]
            .into(),
        },
    ];
    if profile.mbuf_copy {
        ops.push(Op::MemAccess {
            addr: MBUF_OFFSET,
            len: Count::SlotValue(LEN),
            write: true,
        });
    }
    ops.push(Op::Transform(Transform::EchoReply { len_slot: LEN }));
    ops.extend(before_tx.iter().cloned());

    let mut tx = Vec::new();
    if profile.mbuf_copy {
        tx.push(Op::MemAccess {
            addr: MBUF_OFFSET,
            len: Count::SlotValue(LEN),
            write: false,
        });
    }
    tx.extend([
        Op::RegWrite {
            addr: reg(pac::TX_LEN),
            value: Source::TxLen,
        },
        Op::RegWrite {
            addr: reg(pac::TX_META),
            value: Source::ReplyMeta(META),
        },
        Op::Loop {
            count: Count::TxWords,
            body: vec![Op::RegWrite {
                addr: reg(pac::TX_DATA),
                value: Source::TxWord,
            }]
            .into(),
        },
        Op::RegWrite {
            addr: reg(pac::TX_CMD),
            value: Source::Const(1),
        },
    ]);
    ops.push(Op::Loop {
        count: Count::HasReply,
        body: tx.into(),
    });
    ops.push(Op::Compute(profile.c_stack));
    ops.into()
}

/// Driver attach: unmask the receive interrupt.
pub fn driver_attach(pac_base: u32) -> Microprogram {
    vec![Op::RegWrite {
        addr: pac_base + pac::INT_MASK as u32,
        value: Source::Const(pac::RX_AVAIL),
    }]
    .into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mbuf_copy_controls_mem_access() {
        let p = CoreProfile::beri();
        assert!(icmp_echo_handler(&p, 0).has_mem_access());
        let pure = CoreProfile {
            mbuf_copy: false,
            ..p
        };
        assert!(!icmp_echo_handler(&pure, 0).has_mem_access());
    }
}
