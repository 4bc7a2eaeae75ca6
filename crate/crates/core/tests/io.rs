//! pcap output, configuration files and boot flows through the public API.

use std::fs;
use std::sync::Arc;
use std::time::Duration;

use pcap_file::pcap::PcapReader;
use pcap_file::{DataLink, TsResolution};

use netsoc_core::frame::{icmp_echo_request, DEVICE, HOST};
use netsoc_core::host::{run_boot, BootConfig, BootState};
use netsoc_core::pcap::{self, HEADER_LEN};
use netsoc_core::sim::SimTime;
use netsoc_core::soc::CapturedFrame;
use netsoc_core::{Config, CoreKind, Soc, SocConfig};

fn read_back(bytes: &[u8]) -> (pcap_file::pcap::PcapHeader, Vec<(Duration, u32, Vec<u8>)>) {
    let mut r = PcapReader::new(bytes).unwrap();
    let header = r.header();
    let mut out = Vec::new();
    while let Some(p) = r.next_packet() {
        let p = p.unwrap();
        out.push((p.timestamp, p.orig_len, p.data.into_owned()));
    }
    (header, out)
}

#[test]
fn empty_capture_parses() {
    let bytes = pcap::to_bytes(&[]);
    assert_eq!(bytes.len(), HEADER_LEN);
    let (h, packets) = read_back(&bytes);
    assert_eq!((h.version_major, h.version_minor), (2, 4));
    assert_eq!(h.ts_resolution, TsResolution::NanoSecond);
    assert_eq!(h.datalink, DataLink::ETHERNET);
    assert!(packets.is_empty());
}

#[test]
fn one_frame_at_one_microsecond() {
    let frame = CapturedFrame {
        time: SimTime::from_us(1),
        bytes: Arc::from(vec![0xAB; 64]),
    };
    let bytes = pcap::to_bytes(&[frame]);
    let rec = &bytes[HEADER_LEN..];
    let word = |i: usize| u32::from_le_bytes(rec[i..i + 4].try_into().unwrap());
    assert_eq!((word(0), word(4), word(8), word(12)), (0, 1000, 64, 64));
}

#[test]
fn simulated_echo_capture_round_trips() {
    let mut s = Soc::new(SocConfig::default()).unwrap();
    s.enable_capture();
    s.attach_echo_driver().unwrap();
    for i in 0..5u16 {
        let at = s.now() + SimTime::from_us(100 * i as u64);
        s.port_ingress(i as usize % 4, icmp_echo_request(HOST, DEVICE, 1, i, 98 + 4 * i as usize), at)
            .unwrap();
    }
    s.run_to_quiescence();
    // The tap sees each request on ingress and each reply on egress.
    let frames = s.capture().to_vec();
    assert_eq!(frames.len(), 10);
    assert!(frames.windows(2).all(|w| w[0].time <= w[1].time));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("echo.pcap");
    pcap::write_file(&path, &frames).unwrap();
    let (_, packets) = read_back(&fs::read(&path).unwrap());
    assert_eq!(packets.len(), frames.len());
    for (f, (ts, orig, data)) in frames.iter().zip(packets) {
        assert_eq!(ts.as_nanos() as u64, f.time.as_ps() / 1000);
        assert_eq!(orig as usize, f.bytes.len());
        assert_eq!(&data[..], &f.bytes[..]);
    }
}

#[test]
fn unwritable_pcap_path_errors() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("missing").join("x.pcap");
    let e = pcap::write_file(&path, &[]).unwrap_err();
    assert!(e.to_string().contains("x.pcap"));
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.cfg");
    fs::write(
        &path,
        "# sweep the RISC-V build\ncpu.name = riscv\nexperiment.freqs = 25e6, 50e6\nexperiment.count = 10\n",
    )
    .unwrap();
    let c = Config::load(Some(&path), &["experiment.count=20".into(), "cpu.c_stack=0x10".into()]).unwrap();
    assert_eq!(c.core, CoreKind::Riscv);
    assert_eq!(c.freqs, vec![25_000_000, 50_000_000]);
    assert_eq!(c.ping.count, 20);
    assert_eq!(c.c_stack, 16);
    let header = c.csv_header();
    assert!(header.lines().all(|l| l.starts_with("# ")));
    assert!(header.contains("# cpu.name=riscv\n"));
    assert!(header.contains("# experiment.seed=1\n"));
}

#[test]
fn malformed_config_line_reported() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    fs::write(&path, "cpu.name = beri\nthis line has no equals\n").unwrap();
    let e = Config::load(Some(&path), &[]).unwrap_err();
    assert!(e.to_string().contains('2'), "{e}");
}

fn kernel(dir: &tempfile::TempDir, len: usize) -> std::path::PathBuf {
    let path = dir.path().join("kernel.bin");
    fs::write(&path, (0..len).map(|i| (i % 251) as u8).collect::<Vec<_>>()).unwrap();
    path
}

#[test]
fn beri_boot_trace_csv() {
    let dir = tempfile::tempdir().unwrap();
    let image = kernel(&dir, 3 << 20);
    let mut soc = Soc::new(SocConfig::for_core(CoreKind::Beri)).unwrap();
    let t = run_boot(&mut soc, CoreKind::Beri, &image, &BootConfig::default());
    assert!(t.success(), "{:?}", t.error);
    let csv = t.to_csv();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows[0], "time_ps,state");
    assert_eq!(rows.len(), 10);
    assert!(rows[9].ends_with(",NfsMounted"));
    let times: Vec<SimTime> = t.states.iter().map(|(t, _)| *t).collect();
    assert!(times.windows(2).all(|w| w[0] <= w[1]));
    assert!(String::from_utf8_lossy(&t.console).contains("kernel up"));
}

#[test]
fn missing_kernel_stops_at_load() {
    let dir = tempfile::tempdir().unwrap();
    let mut soc = Soc::new(SocConfig::for_core(CoreKind::Beri)).unwrap();
    let t = run_boot(&mut soc, CoreKind::Beri, &dir.path().join("nope.bin"), &BootConfig::default());
    assert!(!t.success());
    assert_eq!(t.terminal(), Some(BootState::LoadKernelToDdr3));
    let e = t.result().unwrap_err().to_string();
    assert!(e.contains("LoadKernelToDdr3"), "{e}");
}

#[test]
fn missing_card_stops_at_spi_copy() {
    let dir = tempfile::tempdir().unwrap();
    let mut soc = Soc::new(SocConfig::for_core(CoreKind::Riscv)).unwrap();
    let t = run_boot(&mut soc, CoreKind::Riscv, &dir.path().join("nope.bin"), &BootConfig::default());
    assert_eq!(t.terminal(), Some(BootState::SpiSdCopy));
    assert!(t.error.is_some());
}

#[test]
fn riscv_boot_copies_kernel_into_ddr() {
    let dir = tempfile::tempdir().unwrap();
    let image = kernel(&dir, 1 << 20);
    let mut soc = Soc::new(SocConfig::for_core(CoreKind::Riscv)).unwrap();
    let t = run_boot(&mut soc, CoreKind::Riscv, &image, &BootConfig::default());
    assert!(t.success(), "{:?}", t.error);
    assert_eq!(t.visited(), BootState::sequence(CoreKind::Riscv));
    let want = fs::read(&image).unwrap();
    let got = soc.memory().read(BootConfig::default().load_offset, want.len() as u64).unwrap();
    assert_eq!(got, want);
}
