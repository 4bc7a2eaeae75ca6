//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion with
//! its wall-clock time and exits non-zero if any criterion fails.

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use netsoc_core::cpu::{icmp_echo_handler_with, CoreProfile, Count, Op};
use netsoc_core::experiments::{
    percentile, run_ping, run_ping_with_isr, run_throughput, sweep_frequency, PingConfig, PingMode,
    ThroughputConfig,
};
use netsoc_core::host::{run_boot, BootConfig, BootState};
use netsoc_core::interconnect::DeviceId;
use netsoc_core::memory::MemoryTiming;
use netsoc_core::resources::{self, LutFf, ResourceReport};
use netsoc_core::sim::SimTime;
use netsoc_core::{CoreKind, Soc, SocConfig};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

struct Runner {
    failed: Vec<u32>,
}

impl Runner {
    fn criterion(&mut self, id: u32, name: &str, budget: Duration, f: impl FnOnce() -> Outcome) {
        let start = Instant::now();
        let mut res = f();
        let took = start.elapsed();
        if res.is_ok() && took > budget {
            res = Err(format!("took {took:.2?}, budget {budget:.0?}"));
        }
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("{tag} [{id}] {name} ({:.3}s): {detail}", took.as_secs_f64());
        std::io::stdout().flush().ok();
        if res.is_err() {
            self.failed.push(id);
        }
    }
}

// ---- 1: resource table ----

/// Printed K-values and percentages per build, rows RISC(s)/Inter/Peri/Unused,
/// each `(lut_k, ff_k, lut_pct, ff_pct)`. Unused K-values are outputs and are
/// checked only through their percentages.
type Row = (f64, f64, f64, f64);

const PRINTED: [(CoreKind, u32, [Row; 4]); 4] = [
    (
        CoreKind::Beri,
        1,
        [
            (72.1, 29.8, 16.6, 3.4),
            (16.9, 18.7, 3.9, 2.1),
            (47.8, 47.2, 11.0, 5.4),
            (296.0, 770.0, 68.4, 88.9),
        ],
    ),
    (
        CoreKind::Beri,
        4,
        [
            (289.0, 118.0, 66.7, 13.6),
            (21.0, 19.0, 4.9, 21.9),
            (47.5, 47.3, 10.9, 5.4),
            (75.7, 681.0, 17.4, 78.7),
        ],
    ),
    (
        CoreKind::Riscv,
        1,
        [
            (40.8, 16.7, 9.4, 1.9),
            (6.1, 6.2, 1.4, 0.7),
            (35.8, 35.4, 8.2, 4.1),
            (350.0, 808.0, 80.8, 93.2),
        ],
    ),
    (
        CoreKind::Riscv,
        8,
        [
            (326.0, 133.0, 75.3, 15.4),
            (16.9, 13.4, 3.9, 1.6),
            (35.6, 35.4, 8.2, 4.1),
            (54.1, 683.0, 12.5, 78.9),
        ],
    ),
];

/// The quad-BERI interconnect FF share is printed as 21.9% although
/// 19.0K of 866.4K is 2.19%; that cell is skipped.
fn excluded(kind: CoreKind, n: u32, row: usize, ff: bool) -> bool {
    kind == CoreKind::Beri && n == 4 && row == 1 && ff
}

fn resource_table() -> Outcome {
    let mut cells = 0;
    let mut worst: f64 = 0.0;
    for (kind, n, rows) in PRINTED {
        let r: ResourceReport = resources::estimate(kind, n).map_err(|e| e.to_string())?;
        for (i, ((name, v), (lut_k, ff_k, lut_pct, ff_pct))) in r.rows().into_iter().zip(rows).enumerate() {
            if i < 3 {
                let want = LutFf::k(lut_k, ff_k);
                ensure(
                    (v.lut - want.lut).abs() < 1e-6 && (v.ff - want.ff).abs() < 1e-6,
                    format!("{kind} x{n} {name}: {v:?} != {want:?}"),
                )?;
            }
            let (lp, fp) = r.percent(v);
            for (got, printed, ff) in [(lp, lut_pct, false), (fp, ff_pct, true)] {
                if excluded(kind, n, i, ff) {
                    continue;
                }
                let err = (got - printed).abs();
                worst = worst.max(err);
                cells += 1;
                ensure(
                    err <= 0.2 + 1e-9,
                    format!("{kind} x{n} {name} {}: {got:.2}% vs {printed}%", if ff { "FF" } else { "LUT" }),
                )?;
            }
        }
    }
    Ok(format!("{cells} percentage cells, worst error {worst:.3} pp"))
}

// ---- 2: maxima ----

fn core_maxima() -> Outcome {
    let beri = resources::max_cores(CoreKind::Beri);
    let riscv = resources::max_cores(CoreKind::Riscv);
    ensure(beri == 4, format!("max_cores(beri) = {beri}"))?;
    ensure(riscv == 8, format!("max_cores(riscv) = {riscv}"))?;
    for (kind, max) in [(CoreKind::Beri, beri), (CoreKind::Riscv, riscv)] {
        let at = resources::estimate(kind, max).unwrap();
        let over = resources::estimate(kind, max + 1).unwrap();
        ensure(at.feasible && !over.feasible, format!("{kind}: boundary not at {max}"))?;
    }
    let over = resources::estimate(CoreKind::Beri, 5).unwrap().lut_utilization();
    Ok(format!("beri 4, riscv 8; 5 BERI cores would use {:.1}% LUT", over * 100.0))
}

// ---- 3: frequency sweep ----

fn frequency_sweep() -> Outcome {
    let freqs = [60_000_000, 120_000_000];
    let ping = PingConfig::default();
    let sweep = sweep_frequency(&SocConfig::default(), &ping, &freqs).map_err(|e| e.to_string())?;
    for s in &sweep.samples {
        ensure(s.lost == 0 && s.len() == 1000, format!("{} Hz: {} replies, {} lost", s.freq_hz, s.len(), s.lost))?;
    }
    let delta = sweep.rows[0].delta_pct;
    ensure(delta.abs() < 15.0, format!("default calibration delta {delta:.2}%"))?;

    let mut pure = SocConfig::default();
    pure.profile.mbuf_copy = false;
    let pure_sweep = sweep_frequency(&pure, &ping, &freqs).map_err(|e| e.to_string())?;
    let (lo, hi) = (&pure_sweep.rows[0], &pure_sweep.rows[1]);
    ensure(
        lo.median_cycles == hi.median_cycles && lo.delta_pct == 0.0,
        format!("pure-cycle ISR: {} vs {} cycles", lo.median_cycles, hi.median_cycles),
    )?;
    Ok(format!(
        "median {} cycles @60 MHz vs {} @120 MHz ({delta:+.2}%); pure ISR {} cycles at both",
        sweep.rows[0].median_cycles, sweep.rows[1].median_cycles, hi.median_cycles
    ))
}

// ---- 4: throughput ----

fn throughput() -> Outcome {
    let cfg = ThroughputConfig::default();
    let at = |f: u64| {
        let mut soc = SocConfig::default();
        soc.profile.freq_hz = f;
        run_throughput(&soc, &cfg).map_err(|e| e.to_string())
    };
    let hi = at(120_000_000)?;
    let lo = at(60_000_000)?;
    ensure(
        (hi.mbps - 6.9).abs() <= 6.9 * 0.15,
        format!("{:.3} Mbps at 120 MHz", hi.mbps),
    )?;
    let ratio = lo.mbps / hi.mbps;
    ensure((ratio - 0.5).abs() <= 0.5 * 0.05, format!("60/120 MHz goodput ratio {ratio:.4}"))?;
    Ok(format!(
        "{:.3} Mbps @120 MHz, {:.3} Mbps @60 MHz (ratio {ratio:.4})",
        hi.mbps, lo.mbps
    ))
}

// ---- 5: hardware reflector ----

fn hw_baseline() -> Outcome {
    let ping = PingConfig {
        count: 10_000,
        mode: PingMode::HwBaseline,
        ..PingConfig::default()
    };
    let s = run_ping(&SocConfig::default(), &ping).map_err(|e| e.to_string())?;
    ensure(s.lost == 0 && s.len() == 10_000, format!("{} samples, {} lost", s.len(), s.lost))?;
    let d = s.device_ps();
    let median = percentile(&d, 50.0).unwrap();
    let (min, max) = (*d.iter().min().unwrap(), *d.iter().max().unwrap());
    ensure(median.abs_diff(1_270_000) <= 1_000, format!("median {median} ps"))?;
    ensure(
        min >= 1_170_000 && max <= 1_370_000,
        format!("support [{min}, {max}] ps"),
    )?;
    Ok(format!("median {median} ps, support [{min}, {max}] ps"))
}

// ---- 6: analytic cycles law ----

/// Cycles from interrupt to TX_CMD completion for a `frame_bytes` echo with
/// no bus contention, counted operation by operation.
fn expected_cycles(p: &CoreProfile, bus_cycles: u64, frame_bytes: u64, extra: u64, l_fixed_ps: u64) -> u64 {
    let w = frame_bytes.div_ceil(4);
    let reg = p.c_reg_setup + bus_cycles;
    let rx = (2 + w) * reg + w * p.c_word_compute;
    let tx = (3 + w) * reg;
    let pure = p.c_isr_entry + rx + extra + tx;
    let fixed = (l_fixed_ps as u128 * p.freq_hz as u128).div_ceil(1_000_000_000_000) as u64;
    pure + fixed
}

fn analytic_law() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0i64;
    for trial in 0..100 {
        let freq_hz = rng.random_range(25_000_000..=200_000_000u64);
        let l_fixed = rng.random_range(1_000..=20_000_000u64);
        let extra = rng.random_range(0..20_000u64);
        let profile = CoreProfile {
            freq_hz,
            c_isr_entry: rng.random_range(0..3_000),
            c_reg_setup: rng.random_range(0..20),
            c_word_compute: rng.random_range(0..30),
            mbuf_copy: false,
            ..CoreProfile::beri()
        };
        let soc = SocConfig {
            profile: profile.clone(),
            memory_timing: MemoryTiming {
                t_access: SimTime(l_fixed),
                t_word: SimTime(1),
            },
            ..SocConfig::default()
        };
        let pac = soc.map.addr(DeviceId::Pac, 0);
        let isr = icmp_echo_handler_with(
            &profile,
            pac,
            &[
                Op::Compute(extra),
                Op::MemAccess {
                    addr: 0,
                    len: Count::Const(4),
                    write: false,
                },
            ],
        );
        let ping = PingConfig {
            count: 3,
            ..PingConfig::default()
        };
        let s = run_ping_with_isr(&soc, &ping, &isr).map_err(|e| e.to_string())?;
        let got = s.median_cycles().map_err(|e| e.to_string())?;
        let want = expected_cycles(&profile, soc.bus_latency_cycles, ping.frame_bytes as u64, extra, l_fixed);
        let err = got as i64 - want as i64;
        worst = worst.max(err.abs());
        ensure(
            err.abs() <= 1,
            format!("trial {trial}: f={freq_hz} L={l_fixed}ps simulated {got} vs analytic {want}"),
        )?;
    }
    Ok(format!("100 triples, worst deviation {worst} cycle(s)"))
}

// ---- 7: property suites ----

type Suite = Box<dyn Fn() -> Result<u32, String>>;

fn property_suites() -> Outcome {
    use common::*;
    let suites: Vec<(&str, Suite)> = vec![
        ("conservation+ordering", Box::new(|| run(fabric_case(12), check_fabric))),
        ("iar/oar k-regularity", Box::new(|| run(arbiter_case(), check_arbiter))),
        ("bus k-regularity", Box::new(|| run(bus_case(), check_interconnect))),
        ("multi-core bus", Box::new(|| run(multicore_case(), check_multicore_bus))),
        ("interrupt coherence", Box::new(|| run(fabric_case(10), check_interrupt_coherence))),
        ("checksum involution", Box::new(|| run(checksum_case(), check_checksum))),
        ("determinism", Box::new(|| run(fabric_case(8), check_determinism))),
        (
            "read-after-write",
            Box::new(|| {
                run(
                    prop::collection::vec((0u32..1024, any::<u32>()), 1..16),
                    check_read_after_write,
                )
            }),
        ),
    ];
    let mut summary = Vec::new();
    for (name, suite) in suites {
        let cases = suite().map_err(|e| format!("{name}: {e}"))?;
        summary.push(format!("{name} {cases}"));
    }
    Ok(summary.join(", "))
}

// ---- 8: boot ----

fn boot() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let image = dir.path().join("kernel.bin");
    let bytes: Vec<u8> = (0..32u32 << 20).map(|i| (i.wrapping_mul(2_654_435_761) >> 24) as u8).collect();
    std::fs::write(&image, bytes).map_err(|e| e.to_string())?;
    let cfg = BootConfig::default();

    let mut soc = Soc::new(SocConfig::for_core(CoreKind::Beri)).map_err(|e| e.to_string())?;
    let beri = run_boot(&mut soc, CoreKind::Beri, &image, &cfg);
    beri.result().map_err(|e| e.to_string())?;
    let visited = beri.visited();
    ensure(visited.len() == 9, format!("beri visited {} states", visited.len()))?;
    ensure(
        visited == BootState::sequence(CoreKind::Beri),
        format!("beri order {visited:?}"),
    )?;
    let early = beri.console_at_active.unwrap_or(0);
    ensure(early >= 1, "no console output before ConsoleActive")?;

    let mut soc = Soc::new(SocConfig::for_core(CoreKind::Riscv)).map_err(|e| e.to_string())?;
    let riscv = run_boot(&mut soc, CoreKind::Riscv, &image, &cfg);
    riscv.result().map_err(|e| e.to_string())?;
    let visited = riscv.visited();
    ensure(
        visited.contains(&BootState::SpiSdCopy) && !visited.contains(&BootState::UnpauseCore),
        format!("riscv order {visited:?}"),
    )?;
    ensure(
        visited == BootState::sequence(CoreKind::Riscv),
        format!("riscv order {visited:?}"),
    )?;
    Ok(format!(
        "beri 9 states, {early} console bytes before ConsoleActive; riscv {} states via SpiSdCopy",
        visited.len()
    ))
}

fn main() {
    let mut r = Runner { failed: Vec::new() };
    let sec = Duration::from_secs;
    r.criterion(1, "resource table reconstruction", sec(1), resource_table);
    r.criterion(2, "core maxima under 90% threshold", sec(1), core_maxima);
    r.criterion(3, "cycles-per-ping frequency sweep", sec(60), frequency_sweep);
    r.criterion(4, "PIO UDP throughput", sec(60), throughput);
    r.criterion(5, "hardware echo baseline", sec(60), hw_baseline);
    r.criterion(6, "analytic cycles law", sec(60), analytic_law);
    r.criterion(7, "property suites", sec(600), property_suites);
    r.criterion(8, "boot sequences", sec(5), boot);
    if r.failed.is_empty() {
        println!("acceptance: all 8 criteria passed");
    } else {
        println!("acceptance: failed {:?}", r.failed);
        std::process::exit(1);
    }
}
