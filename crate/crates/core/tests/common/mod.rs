//! Strategies and checks shared by the property suite and the acceptance
//! run. Each `check_*` takes one generated case and fails with a
//! `TestCaseError` naming the violated invariant.

#![allow(dead_code)]

use std::collections::HashMap;
use std::sync::Arc;

use proptest::prelude::*;
use proptest::test_runner::{Config as RunnerConfig, TestRunner};

use netsoc_core::cpu::checksum::{checksum16, verify};
use netsoc_core::cpu::{CoreProfile, Microprogram, Op, Sink, Source};
use netsoc_core::frame::{arp_request, icmp_echo_request, DEVICE, HOST};
use netsoc_core::interconnect::{
    AddressMap, BusRequest, DeviceId, Interconnect, Master, MasterSet, RegisterTransaction,
};
use netsoc_core::netfabric::packet::{port_from_bitmap, Packet};
use netsoc_core::netfabric::Arbiter;
use netsoc_core::sim::{ClockDomain, DropReason, SimTime};
use netsoc_core::soc::OAR_FROM_PAC;
use netsoc_core::{CoreKind, Soc, SocConfig};

pub const CASES: u32 = 1000;

pub type Check = std::result::Result<(), TestCaseError>;

/// Runs `check` over `CASES` generated inputs with a fixed seed.
pub fn run<S: Strategy>(strategy: S, check: impl Fn(S::Value) -> Check) -> Result<u32, String> {
    let mut runner = TestRunner::new_with_rng(
        RunnerConfig {
            cases: CASES,
            failure_persistence: None,
            ..RunnerConfig::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    runner.run(&strategy, check).map(|_| CASES).map_err(|e| e.to_string())
}

/// True if every run of `k` consecutive grants names `k` distinct inputs.
pub fn k_regular(grants: &[usize], k: usize) -> bool {
    grants.windows(k).all(|w| {
        let mut seen = w.to_vec();
        seen.sort_unstable();
        seen.dedup();
        seen.len() == k
    })
}

/// Grants made while every input in `backlog` still had work queued.
pub fn saturated_prefix(grants: &[usize], backlog: &HashMap<usize, usize>) -> usize {
    let mut left = backlog.clone();
    for (i, g) in grants.iter().enumerate() {
        let n = left.get_mut(g).expect("grant to an input that never queued");
        *n -= 1;
        if *n == 0 {
            return i + 1;
        }
    }
    grants.len()
}

fn dummy_packet(id: u64) -> Packet {
    let bytes: Arc<[u8]> = vec![0u8; 64].into();
    Packet::ingress(id, bytes, 0, SimTime::ZERO).unwrap()
}

// ---- fabric workloads ----

#[derive(Debug, Clone, PartialEq)]
pub enum Kind {
    Echo,
    Arp,
    Runt,
    Oversize,
}

#[derive(Debug, Clone)]
pub struct Arrival {
    pub gap_ns: u64,
    pub port: usize,
    pub kind: Kind,
    pub len: usize,
}

#[derive(Debug, Clone)]
pub struct FabricCase {
    pub arrivals: Vec<Arrival>,
    pub depth: usize,
    pub c_stack: u64,
}

fn arrival() -> impl Strategy<Value = Arrival> {
    let kind = prop_oneof![
        8 => Just(Kind::Echo),
        1 => Just(Kind::Arp),
        1 => Just(Kind::Runt),
        1 => Just(Kind::Oversize),
    ];
    (0u64..3_000, 0usize..4, kind, 60usize..400).prop_map(|(gap_ns, port, kind, len)| Arrival {
        gap_ns,
        port,
        kind,
        len,
    })
}

pub fn fabric_case(max_packets: usize) -> impl Strategy<Value = FabricCase> {
    (
        prop::collection::vec(arrival(), 1..max_packets),
        1usize..5,
        0u64..3_000,
    )
        .prop_map(|(arrivals, depth, c_stack)| FabricCase {
            arrivals,
            depth,
            c_stack,
        })
}

fn frame(a: &Arrival, seq: u16) -> Vec<u8> {
    match a.kind {
        Kind::Echo => icmp_echo_request(HOST, DEVICE, 7, seq, a.len),
        Kind::Arp => arp_request(HOST, DEVICE.ip),
        Kind::Runt => vec![0u8; 59],
        Kind::Oversize => vec![0u8; 9001],
    }
}

fn fabric_soc(case: &FabricCase, tracing: bool) -> Soc {
    let mut cfg = SocConfig {
        profile: CoreProfile {
            c_stack: case.c_stack,
            mbuf_copy: false,
            ..CoreProfile::beri()
        },
        ..SocConfig::default()
    };
    cfg.fabric.rx_depth = case.depth;
    let mut s = Soc::new(cfg).unwrap();
    s.set_packet_log(true);
    s.set_tracing(tracing);
    s.attach_echo_driver().unwrap();
    s
}

/// Injects the arrivals in order and returns their ingress ids.
fn inject(s: &mut Soc, arrivals: &[Arrival]) -> Vec<u64> {
    let mut t = s.now();
    let mut ids = Vec::with_capacity(arrivals.len());
    for (i, a) in arrivals.iter().enumerate() {
        t += SimTime::from_ns(a.gap_ns);
        ids.push(s.port_ingress(a.port, frame(a, i as u16), t).unwrap());
    }
    ids
}

/// Conservation, per-port ordering in both directions, one reply per
/// delivered echo request.
pub fn check_fabric(case: FabricCase) -> Check {
    let mut s = fabric_soc(&case, false);
    let ids = inject(&mut s, &case.arrivals);
    let mut per_port = vec![Vec::new(); 4];
    for (a, id) in case.arrivals.iter().zip(&ids) {
        per_port[a.port].push(*id);
    }
    s.run_to_quiescence();
    let st = s.stats().clone();

    let front_drops =
        st.dropped(DropReason::Oversize) + st.dropped(DropReason::Runt) + st.dropped(DropReason::RxFull);
    prop_assert_eq!(st.ingress, case.arrivals.len() as u64);
    prop_assert_eq!(st.ingress, st.delivered + front_drops);
    let mut seen: Vec<u64> = s.delivered().iter().map(|d| d.packet_id).collect();
    seen.extend(
        s.drops()
            .iter()
            .filter(|d| d.reason != DropReason::BadDst)
            .map(|d| d.packet_id),
    );
    seen.sort_unstable();
    let mut all = ids.clone();
    all.sort_unstable();
    prop_assert_eq!(seen, all, "each ingress packet accounted for exactly once");

    prop_assert_eq!(st.committed, st.egressed + st.dropped(DropReason::BadDst));
    prop_assert_eq!(s.in_flight_packets(), 0);

    for (port, ids) in per_port.iter().enumerate() {
        let delivered: Vec<u64> = s
            .delivered()
            .iter()
            .filter(|d| d.src_port == port)
            .map(|d| d.packet_id)
            .collect();
        let expected: Vec<u64> = ids.iter().copied().filter(|id| delivered.contains(id)).collect();
        prop_assert_eq!(delivered, expected, "port {} delivered out of order", port);
    }

    for port in 0..4 {
        let committed: Vec<u64> = s
            .commits()
            .iter()
            .filter(|c| port_from_bitmap(c.meta.dst_port) == Some(port))
            .map(|c| c.packet_id)
            .collect();
        let egressed: Vec<u64> = s
            .egress()
            .iter()
            .filter(|e| e.port == port && e.source == OAR_FROM_PAC)
            .map(|e| e.packet_id)
            .collect();
        prop_assert_eq!(committed, egressed, "port {} egressed out of commit order", port);
    }

    let echo_ids: Vec<u64> = case
        .arrivals
        .iter()
        .zip(&ids)
        .filter(|(a, _)| a.kind == Kind::Echo)
        .map(|(_, id)| *id)
        .collect();
    let delivered_echo = s
        .delivered()
        .iter()
        .filter(|d| echo_ids.contains(&d.packet_id))
        .count();
    prop_assert_eq!(st.committed as usize, delivered_echo);
    Ok(())
}

/// The latched line equals `(INT_STATUS & INT_MASK) != 0` after every event.
pub fn check_interrupt_coherence(case: FabricCase) -> Check {
    let mut s = fabric_soc(&case, false);
    inject(&mut s, &case.arrivals);
    prop_assert!(s.interrupt_coherent());
    while s.step() {
        let pending = s.pac().int_status() & s.pac().int_mask() != 0;
        prop_assert_eq!(s.interrupt_state(0).line, pending);
        prop_assert!(s.interrupt_coherent());
    }
    Ok(())
}

pub fn check_determinism(case: FabricCase) -> Check {
    let digest = || {
        let mut s = fabric_soc(&case, true);
        inject(&mut s, &case.arrivals);
        s.run_to_quiescence();
        s.trace().digest()
    };
    prop_assert_eq!(digest(), digest());
    Ok(())
}

// ---- arbitration ----

#[derive(Debug, Clone)]
pub struct ArbiterCase {
    pub inputs: usize,
    pub mask: u16,
    pub depth: usize,
    pub extra: Vec<usize>,
}

pub fn arbiter_case() -> impl Strategy<Value = ArbiterCase> {
    (1usize..9, 1u16..256, 1usize..8, prop::collection::vec(0usize..4, 8)).prop_map(
        |(inputs, mask, depth, extra)| ArbiterCase {
            inputs,
            mask,
            depth,
            extra,
        },
    )
}

/// IAR and OAR share this arbiter; inputs are ports or packet sources.
pub fn check_arbiter(case: ArbiterCase) -> Check {
    let active: Vec<usize> = (0..case.inputs).filter(|i| case.mask & (1 << i) != 0).collect();
    prop_assume!(!active.is_empty());
    let mut arb = Arbiter::new(case.inputs).with_grant_log();
    let mut backlog = HashMap::new();
    let mut id = 0;
    for &i in &active {
        let n = case.depth + case.extra[i];
        backlog.insert(i, n);
        for _ in 0..n {
            arb.enqueue(i, dummy_packet(id));
            id += 1;
        }
    }
    let mut order: HashMap<usize, Vec<u64>> = HashMap::new();
    while let Some((i, p)) = arb.grant() {
        order.entry(i).or_default().push(p.id);
    }
    let grants = arb.grant_log().to_vec();
    prop_assert_eq!(grants.len(), id as usize);
    let prefix = saturated_prefix(&grants, &backlog);
    prop_assert!(k_regular(&grants[..prefix], active.len()), "grants {:?}", grants);
    prop_assert!(order.values().all(|ids| ids.windows(2).all(|w| w[0] < w[1])));
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BusCase {
    pub cores: usize,
    /// (master, write, word offset, data)
    pub reqs: Vec<(usize, bool, u32, u32)>,
}

pub fn bus_case() -> impl Strategy<Value = BusCase> {
    (
        1usize..8,
        prop::collection::vec((0usize..8, any::<bool>(), 0u32..64, any::<u32>()), 1..200),
    )
        .prop_map(|(cores, reqs)| BusCase { cores, reqs })
}

/// Round-robin k-regularity and per-master FIFO completion order.
pub fn check_interconnect(case: BusCase) -> Check {
    let map = AddressMap::default_map(false);
    let clock = ClockDomain::new("cpu", 120_000_000).unwrap();
    let masters = MasterSet::new(case.cores).unwrap();
    let mut bus = Interconnect::new(map.clone(), masters, clock, 4);
    let ddr = map.addr(DeviceId::Ddr, 0);
    let mut backlog: HashMap<usize, usize> = HashMap::new();
    for (id, (m, write, word, data)) in case.reqs.iter().enumerate() {
        let core = m % case.cores;
        let master = Master::Core(core);
        let addr = ddr + word * 4;
        let t = if *write {
            RegisterTransaction::write(id as u64, master, addr, *data, SimTime::ZERO)
        } else {
            RegisterTransaction::read(id as u64, master, addr, SimTime::ZERO)
        };
        *backlog.entry(core).or_default() += 1;
        bus.submit(BusRequest::Word(t));
    }
    let mut now = SimTime::ZERO;
    let mut grants = Vec::new();
    let mut done: HashMap<usize, Vec<u64>> = HashMap::new();
    while bus.try_grant(now, |_, _| SimTime::ZERO).is_some() {
        let f = bus.finish().unwrap();
        now = f.complete_time;
        let Master::Core(c) = f.request.master() else {
            unreachable!("only cores were submitted")
        };
        grants.push(c);
        done.entry(c).or_default().push(f.request.id());
    }
    prop_assert_eq!(grants.len(), case.reqs.len());
    let prefix = saturated_prefix(&grants, &backlog);
    prop_assert!(k_regular(&grants[..prefix], backlog.len()));
    prop_assert!(done.values().all(|ids| ids.windows(2).all(|w| w[0] < w[1])));
    Ok(())
}

#[derive(Debug, Clone)]
pub struct MultiCoreCase {
    pub cores: usize,
    pub reads: usize,
    pub freq_mhz: u64,
}

pub fn multicore_case() -> impl Strategy<Value = MultiCoreCase> {
    (2usize..6, 2usize..12, 25u64..200).prop_map(|(cores, reads, freq_mhz)| MultiCoreCase {
        cores,
        reads,
        freq_mhz,
    })
}

/// Cores that reissue immediately keep the bus saturated, so grants cycle
/// through every core.
pub fn check_multicore_bus(case: MultiCoreCase) -> Check {
    let cfg = SocConfig {
        cores: case.cores,
        profile: CoreProfile {
            c_reg_setup: 0,
            ..CoreProfile::zero_cost(CoreKind::Beri)
        }
        .with_freq(case.freq_mhz * 1_000_000),
        ..SocConfig::default()
    };
    let mut s = Soc::new(cfg).unwrap();
    s.set_tracing(true);
    let status = s.addr(DeviceId::Console, 8);
    let prog = Microprogram::new(
        (0..case.reads)
            .map(|_| Op::RegRead {
                addr: status,
                sink: Sink::Discard,
            })
            .collect(),
    );
    for c in 0..case.cores {
        s.start_program(c, prog.clone()).unwrap();
    }
    s.run_to_quiescence();
    let grants: Vec<usize> = s
        .trace()
        .iter()
        .filter(|r| r.kind.to_string() == "bus-grant")
        .map(|r| r.get("master").unwrap().trim_start_matches("core").parse().unwrap())
        .collect();
    prop_assert_eq!(grants.len(), case.cores * case.reads);
    prop_assert!(k_regular(&grants, case.cores), "grants {:?}", grants);
    Ok(())
}

pub fn check_read_after_write(writes: Vec<(u32, u32)>) -> Check {
    let mut s = Soc::new(SocConfig {
        profile: CoreProfile::zero_cost(CoreKind::Beri),
        ..SocConfig::default()
    })
    .unwrap();
    let mut ops = Vec::new();
    for (word, v) in &writes {
        let addr = s.addr(DeviceId::Ddr, *word as u64 * 4);
        ops.push(Op::RegWrite {
            addr,
            value: Source::Const(*v),
        });
        ops.push(Op::RegRead {
            addr,
            sink: Sink::Slot(0),
        });
    }
    let report = s.execute(0, Microprogram::new(ops)).unwrap();
    prop_assert_eq!(report.transactions.len(), writes.len() * 2);
    for (pair, (_, v)) in report.transactions.chunks(2).zip(&writes) {
        prop_assert_eq!(pair[1].data, *v);
        prop_assert!(pair[1].issue_time >= pair[0].complete_time.unwrap());
    }
    Ok(())
}

// ---- checksum ----

/// Folded 16-bit one's complement sum, written independently of the crate.
pub fn oracle_sum(data: &[u8]) -> u16 {
    let mut sum: u64 = 0;
    for (i, b) in data.iter().enumerate() {
        sum += if i % 2 == 0 { (*b as u64) << 8 } else { *b as u64 };
    }
    while sum > 0xFFFF {
        sum = (sum & 0xFFFF) + (sum >> 16);
    }
    sum as u16
}

pub fn checksum_case() -> impl Strategy<Value = (Vec<u8>, usize)> {
    (prop::collection::vec(any::<u8>(), 2..256), 0usize..128)
}

/// Zero a 16-bit field, checksum, store it in the field: the whole message
/// then sums to all ones.
pub fn check_checksum((mut msg, field): (Vec<u8>, usize)) -> Check {
    let at = (field * 2) % (msg.len() & !1);
    msg[at] = 0;
    msg[at + 1] = 0;
    let c = checksum16(&msg);
    prop_assert_eq!(c, !oracle_sum(&msg));
    msg[at..at + 2].copy_from_slice(&c.to_be_bytes());
    prop_assert_eq!(oracle_sum(&msg), 0xFFFF);
    prop_assert!(verify(&msg));
    Ok(())
}
