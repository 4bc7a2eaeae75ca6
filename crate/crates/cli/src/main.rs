//! `netsoc`: run the simulator experiments from the command line.
//!
//! Configuration is layered: built-in defaults, then `--config FILE`, then
//! each `--set key=value`, then the dedicated flags. Every CSV written
//! starts with `# key=value` lines echoing the effective configuration.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use netsoc_core::experiments::{self, cdf_csv, percentile, results_csv, summary_csv};
use netsoc_core::host::run_boot;
use netsoc_core::resources::{self, ResourceTable};
use netsoc_core::{pcap, Config, CoreKind, PingMode, Soc};

#[derive(Parser)]
#[command(name = "netsoc", version, about = "Transaction-level simulator of a network-attached SoC")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override one configuration key; may be repeated.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Directory for output files.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write the frames seen on the ports to a pcap file (ping only).
    #[arg(long, global = true, value_name = "PATH")]
    pcap: Option<PathBuf>,
    /// Print the simulated UART output to stderr.
    #[arg(long, global = true)]
    console: bool,
    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Ping the device and record RTT and ISR cycle counts.
    Ping {
        /// `netsoc` or `hw-baseline`.
        #[arg(long)]
        mode: Option<String>,
        #[arg(long)]
        count: Option<usize>,
        /// Core clock in Hz (accepts `120e6`).
        #[arg(long)]
        freq: Option<String>,
        /// Also write the event trace CSV.
        #[arg(long)]
        trace: bool,
    },
    /// Repeat the ping experiment at several core clocks.
    Sweep {
        /// Comma-separated list, e.g. `60e6,120e6`.
        #[arg(long)]
        freqs: Option<String>,
        #[arg(long)]
        count: Option<usize>,
    },
    /// Saturate one port and report delivered goodput.
    Throughput {
        /// `udp` or `tcp-approx`.
        #[arg(long)]
        proto: Option<String>,
        #[arg(long)]
        freq: Option<String>,
        /// Simulated duration in picoseconds.
        #[arg(long)]
        duration_ps: Option<String>,
    },
    /// FPGA utilization of a build and the largest core count that fits.
    Resources {
        #[arg(long)]
        core: Option<String>,
        #[arg(long)]
        cores: Option<u32>,
        /// Utilization limit as a fraction.
        #[arg(long, default_value_t = resources::DEFAULT_THRESHOLD)]
        threshold: f64,
    },
    /// Walk the boot flow with a kernel image.
    Boot {
        #[arg(long)]
        core: Option<String>,
        #[arg(long, value_name = "PATH")]
        kernel: Option<PathBuf>,
    },
    /// Run a quick set of consistency checks.
    Selftest,
}

impl Command {
    /// Dedicated flags expressed as configuration overrides.
    fn overrides(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut push = |key: &str, v: Option<String>| {
            if let Some(v) = v {
                out.push(format!("{key}={v}"));
            }
        };
        match self {
            Command::Ping { mode, count, freq, trace } => {
                push("experiment.mode", mode.clone());
                push("experiment.count", count.map(|c| c.to_string()));
                push("cpu.freq_hz", freq.clone());
                push("output.trace", trace.then(|| "true".into()));
            }
            Command::Sweep { freqs, count } => {
                push("experiment.freqs", freqs.clone());
                push("experiment.count", count.map(|c| c.to_string()));
            }
            Command::Throughput { proto, freq, duration_ps } => {
                push("experiment.proto", proto.clone());
                push("cpu.freq_hz", freq.clone());
                push("experiment.duration_ps", duration_ps.clone());
            }
            Command::Resources { core, .. } => push("cpu.name", core.clone()),
            Command::Boot { core, kernel } => {
                push("cpu.name", core.clone());
                push("mem.image", kernel.as_ref().map(|p| p.display().to_string()));
            }
            Command::Selftest => {}
        }
        out
    }
}

fn load_config(cli: &Cli) -> Result<Config> {
    let g = &cli.global;
    let mut overrides = g.set.clone();
    if let Some(seed) = g.seed {
        overrides.push(format!("experiment.seed={seed}"));
    }
    if let Some(out) = &g.out {
        overrides.push(format!("output.dir={}", out.display()));
    }
    if let Some(p) = &g.pcap {
        overrides.push(format!("output.pcap={}", p.display()));
    }
    overrides.extend(cli.command.overrides());
    Config::load(g.config.as_deref(), &overrides).context("invalid configuration")
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn ping(cfg: &Config) -> Result<()> {
    let soc = cfg.soc()?;
    let mut ping = cfg.ping.clone();
    ping.trace = cfg.output_trace;
    ping.capture = cfg.output_pcap.is_some();
    let run = experiments::run_ping(&soc, &ping)?;
    let header = cfg.csv_header();
    let dir = &cfg.output_dir;

    let results = write(dir, "ping.csv", &results_csv(&header, std::slice::from_ref(&run)))?;
    let samples = match run.mode {
        PingMode::NetSoc => run.rtt_ps(),
        PingMode::HwBaseline => run.device_ps(),
    };
    write(dir, "ping_cdf.csv", &cdf_csv(&header, &samples)?)?;
    if let Some(trace) = &run.trace {
        let mut csv = header.clone();
        csv.push_str(&format!("# trace_sha256={}\n", trace.digest()));
        csv.push_str(&trace.to_csv());
        write(dir, "ping_trace.csv", &csv)?;
    }
    if let Some(path) = &cfg.output_pcap {
        pcap::write_file(path, &run.frames)?;
    }

    println!("mode={} freq_hz={} samples={} lost={}", run.mode, run.freq_hz, run.len(), run.lost);
    println!(
        "rtt_ps median={} p99={}",
        percentile(&run.rtt_ps(), 50.0)?,
        percentile(&run.rtt_ps(), 99.0)?
    );
    match run.mode {
        PingMode::NetSoc => println!("cycles median={} p99={}", run.median_cycles()?, run.p99_cycles()?),
        PingMode::HwBaseline => println!(
            "device_ps median={} p99={}",
            percentile(&run.device_ps(), 50.0)?,
            percentile(&run.device_ps(), 99.0)?
        ),
    }
    println!("wrote {}", results.display());
    Ok(())
}

fn sweep(cfg: &Config) -> Result<()> {
    if cfg.ping.mode != PingMode::NetSoc {
        bail!("sweep measures ISR cycles and needs experiment.mode=netsoc");
    }
    let sweep = experiments::sweep_frequency(&cfg.soc()?, &cfg.ping, &cfg.freqs)?;
    let header = cfg.csv_header();
    let summary = summary_csv(&header, &sweep);
    write(&cfg.output_dir, "sweep_summary.csv", &summary)?;
    write(&cfg.output_dir, "sweep_results.csv", &results_csv(&header, &sweep.samples))?;
    print!("{}", summary.lines().filter(|l| !l.starts_with('#')).map(|l| format!("{l}\n")).collect::<String>());
    Ok(())
}

fn throughput(cfg: &Config) -> Result<()> {
    let r = experiments::run_throughput(&cfg.soc()?, &cfg.throughput)?;
    let mut csv = cfg.csv_header();
    csv.push_str("freq_hz,proto,duration_ps,offered,delivered_packets,delivered_bytes,dropped,mbps\n");
    let row = format!(
        "{},{},{},{},{},{},{},{:.4}\n",
        r.freq_hz,
        cfg.throughput.proto.as_str(),
        r.duration.as_ps(),
        r.offered,
        r.delivered_packets,
        r.delivered_bytes,
        r.dropped,
        r.mbps
    );
    csv.push_str(&row);
    write(&cfg.output_dir, "throughput.csv", &csv)?;
    println!("{:.3} Mbps at {} Hz ({} of {} packets delivered)", r.mbps, r.freq_hz, r.delivered_packets, r.offered);
    Ok(())
}

fn resources(cfg: &Config, cores: Option<u32>, threshold: f64) -> Result<()> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        bail!("threshold must lie in (0, 1], got {threshold}");
    }
    let table = ResourceTable::for_core(cfg.core);
    let n = cores.unwrap_or(1);
    let r = resources::estimate_with(&table, n, threshold)?;
    let max = resources::max_cores_with(&table, threshold);
    let mut csv = cfg.csv_header();
    csv.push_str(&format!("# cores={n}\n# max_cores={max}\n"));
    csv.push_str(&r.to_csv());
    write(&cfg.output_dir, "resources.csv", &csv)?;
    print!("{}", r.to_csv());
    println!(
        "{} x{n}: LUT {:.1}% FF {:.1}% {} (max {max} at {:.0}%)",
        cfg.core,
        100.0 * r.lut_utilization(),
        100.0 * r.ff_utilization(),
        if r.feasible { "fits" } else { "does not fit" },
        100.0 * threshold
    );
    Ok(())
}

fn boot(cfg: &Config, console: bool) -> Result<()> {
    let Some(image) = &cfg.mem_image else {
        bail!("boot needs a kernel image (--kernel PATH or mem.image)");
    };
    let mut soc = Soc::new(cfg.soc()?)?;
    let trace = run_boot(&mut soc, cfg.core, image, &cfg.boot);
    let mut csv = cfg.csv_header();
    csv.push_str(&trace.to_csv());
    write(&cfg.output_dir, "boot_trace.csv", &csv)?;
    print!("{}", trace.to_csv());
    if console {
        eprint!("{}", String::from_utf8_lossy(&trace.console));
    }
    trace.result().context("boot failed")?;
    Ok(())
}

/// Short end-to-end checks that need no input files.
fn selftest(cfg: &Config) -> Result<()> {
    let mut failures = 0;
    let mut check = |name: &str, r: Result<String>| match r {
        Ok(detail) => println!("PASS {name}: {detail}"),
        Err(e) => {
            failures += 1;
            println!("FAIL {name}: {e:#}");
        }
    };

    let soc = cfg.soc()?;
    let ping = experiments::PingConfig {
        count: 20,
        trace: true,
        ..cfg.ping.clone()
    };
    check(
        "deterministic replay",
        (|| {
            let a = experiments::run_ping(&soc, &ping)?;
            let b = experiments::run_ping(&soc, &ping)?;
            let (da, db) = (a.trace.map(|t| t.digest()), b.trace.map(|t| t.digest()));
            if da != db || a.rtt != b.rtt {
                bail!("two identical runs diverged");
            }
            Ok(format!("trace sha256 {}", da.unwrap_or_default()))
        })(),
    );
    check(
        "frequency sweep",
        (|| {
            let s = experiments::sweep_frequency(&soc, &ping, &[60_000_000, 120_000_000])?;
            let (lo, hi) = (&s.rows[0], &s.rows[1]);
            if lo.median_cycles > hi.median_cycles {
                bail!("cycles fell with frequency: {} > {}", lo.median_cycles, hi.median_cycles);
            }
            Ok(format!("{} cycles at 60 MHz, {} at 120 MHz", lo.median_cycles, hi.median_cycles))
        })(),
    );
    check(
        "core maxima",
        (|| {
            let (b, r) = (resources::max_cores(CoreKind::Beri), resources::max_cores(CoreKind::Riscv));
            if b < 1 || r < b {
                bail!("beri {b}, riscv {r}");
            }
            Ok(format!("beri {b}, riscv {r}"))
        })(),
    );
    check(
        "pcap encoding",
        (|| {
            let bytes = pcap::to_bytes(&[]);
            if bytes.len() != pcap::HEADER_LEN || bytes[..4] != pcap::MAGIC_NS.to_le_bytes() {
                bail!("bad global header");
            }
            Ok("global header ok".into())
        })(),
    );

    if failures > 0 {
        bail!("{failures} self-test check(s) failed");
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    if cfg.output_pcap.is_some() && !matches!(cli.command, Command::Ping { .. }) {
        bail!("--pcap is only supported by the ping command");
    }
    match &cli.command {
        Command::Ping { .. } => ping(&cfg),
        Command::Sweep { .. } => sweep(&cfg),
        Command::Throughput { .. } => throughput(&cfg),
        Command::Resources { cores, threshold, .. } => resources(&cfg, *cores, *threshold),
        Command::Boot { .. } => boot(&cfg, cli.global.console),
        Command::Selftest => selftest(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
