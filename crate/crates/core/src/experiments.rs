//! Ping latency, cycles-per-ping frequency sweeps and PIO throughput.
//!
//! Host-side latency is not simulated. A ping's RTT is the constant host
//! baseline plus the device time, where device time is the interval from
//! the request's first bit on the wire to the reply's last bit, less the
//! fixed wire/MAC/stream path. Cycles-per-ping is the device time in CPU
//! cycles.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::cpu::Microprogram;
use crate::error::{Error, Result};
use crate::frame::{icmp_echo_request, parse_icmp, udp_datagram, DEVICE, HOST, ICMP_ECHO_REPLY};
use crate::netfabric::packet::validate_len;
use crate::sim::{SimTime, PS_PER_SECOND};
use crate::sim::EventTrace;
use crate::soc::{CapturedFrame, ReflectorConfig, Soc, SocConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PingMode {
    NetSoc,
    HwBaseline,
}

impl PingMode {
    pub fn as_str(self) -> &'static str {
        match self {
            PingMode::NetSoc => "netsoc",
            PingMode::HwBaseline => "hw-baseline",
        }
    }
}

impl fmt::Display for PingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PingMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "netsoc" => Ok(PingMode::NetSoc),
            "hw-baseline" | "hw" => Ok(PingMode::HwBaseline),
            _ => Err(Error::InvalidArgument(format!("unknown ping mode `{s}` (netsoc|hw-baseline)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PingConfig {
    pub count: usize,
    pub frame_bytes: usize,
    pub mode: PingMode,
    pub hw: ReflectorConfig,
    /// Host-side RTT added to every sample.
    pub baseline: SimTime,
    pub seed: u64,
    /// Gap between pings as a multiple of one ping's service time.
    pub spacing_factor: u64,
    pub port: usize,
    /// Keep the event trace of the run.
    pub trace: bool,
    /// Keep every frame crossing the ports.
    pub capture: bool,
}

impl Default for PingConfig {
    fn default() -> Self {
        Self {
            count: 1_000,
            frame_bytes: 98,
            mode: PingMode::NetSoc,
            hw: ReflectorConfig::default(),
            baseline: SimTime::from_us(15),
            seed: 1,
            spacing_factor: 10,
            port: 0,
            trace: false,
            capture: false,
        }
    }
}

impl PingConfig {
    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::InvalidArgument("ping count must be at least 1".into()));
        }
        validate_len(self.frame_bytes)?;
        if self.frame_bytes < 42 {
            return Err(Error::InvalidFrame(self.frame_bytes));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatencySamples {
    pub freq_hz: u64,
    pub mode: PingMode,
    pub rtt: Vec<SimTime>,
    /// Device share of each RTT.
    pub device: Vec<SimTime>,
    /// Cycles per ping; only in NetSoC mode.
    pub cycles: Option<Vec<u64>>,
    pub lost: usize,
    /// Event trace, when requested.
    pub trace: Option<EventTrace>,
    /// Port tap, when requested.
    pub frames: Vec<CapturedFrame>,
}

impl LatencySamples {
    pub fn len(&self) -> usize {
        self.rtt.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rtt.is_empty()
    }

    pub fn median_cycles(&self) -> Result<u64> {
        percentile(self.cycles.as_deref().unwrap_or(&[]), 50.0)
    }

    pub fn p99_cycles(&self) -> Result<u64> {
        percentile(self.cycles.as_deref().unwrap_or(&[]), 99.0)
    }

    pub fn device_ps(&self) -> Vec<u64> {
        self.device.iter().map(|t| t.as_ps()).collect()
    }

    pub fn rtt_ps(&self) -> Vec<u64> {
        self.rtt.iter().map(|t| t.as_ps()).collect()
    }
}

/// Nearest-rank percentile: the smallest sample with at least `p` percent
/// of the samples at or below it.
pub fn percentile(samples: &[u64], p: f64) -> Result<u64> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    if !(0.0..=100.0).contains(&p) {
        return Err(Error::InvalidPercentile(p));
    }
    let mut v = samples.to_vec();
    v.sort_unstable();
    let rank = ((p / 100.0) * v.len() as f64).ceil().max(1.0) as usize;
    Ok(v[rank.min(v.len()) - 1])
}

/// Empirical CDF as `(value, fraction <= value)` at each distinct value.
pub fn cdf(samples: &[u64]) -> Result<Vec<(u64, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptySamples);
    }
    let mut v = samples.to_vec();
    v.sort_unstable();
    let n = v.len() as f64;
    let mut out: Vec<(u64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let frac = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = frac,
            _ => out.push((*x, frac)),
        }
    }
    Ok(out)
}

fn ping_soc(soc: &SocConfig, ping: &PingConfig, isr: Option<&Microprogram>) -> Result<Soc> {
    let mut cfg = soc.clone();
    cfg.seed = ping.seed;
    if ping.mode == PingMode::HwBaseline {
        cfg.reflector = Some(ping.hw.clone());
    }
    if ping.port >= cfg.fabric.ports {
        return Err(Error::InvalidPort {
            port: ping.port,
            ports: cfg.fabric.ports,
        });
    }
    let mut s = Soc::new(cfg)?;
    s.set_tracing(ping.trace);
    if ping.capture {
        s.enable_capture();
    }
    if ping.mode == PingMode::NetSoc {
        s.attach_echo_driver()?;
        if let Some(isr) = isr {
            s.bind_isr(0, isr.clone())?;
        }
    }
    Ok(s)
}

/// Time one isolated ping keeps the device busy (reply egress or ISR end,
/// whichever is later).
fn service_time(soc: &SocConfig, ping: &PingConfig, isr: Option<&Microprogram>) -> Result<SimTime> {
    let quiet = PingConfig {
        trace: false,
        capture: false,
        mode: ping.mode,
        hw: ReflectorConfig {
            jitter: SimTime::ZERO,
            latency: ping.hw.latency + ping.hw.jitter,
        },
        ..ping.clone()
    };
    let mut s = ping_soc(soc, &quiet, isr)?;
    let t0 = s.now();
    let frame = icmp_echo_request(HOST, DEVICE, 0x1234, 0, ping.frame_bytes);
    s.port_ingress(ping.port, frame, t0)?;
    s.run_to_quiescence();
    let end = s
        .egress()
        .iter()
        .map(|e| e.time)
        .chain(s.activations().iter().map(|a| a.end))
        .max()
        .ok_or_else(|| Error::Fault("calibration ping produced no activity".into()))?;
    Ok(end - t0)
}

pub fn run_ping(soc: &SocConfig, ping: &PingConfig) -> Result<LatencySamples> {
    ping_with(soc, ping, None)
}

/// As [`run_ping`] with `isr` bound on core 0 in place of the stock echo
/// handler. The handler must still transmit one reply per request.
pub fn run_ping_with_isr(soc: &SocConfig, ping: &PingConfig, isr: &Microprogram) -> Result<LatencySamples> {
    ping_with(soc, ping, Some(isr))
}

fn ping_with(soc: &SocConfig, ping: &PingConfig, isr: Option<&Microprogram>) -> Result<LatencySamples> {
    ping.validate()?;
    let spacing = SimTime(service_time(soc, ping, isr)?.as_ps() * ping.spacing_factor.max(1));
    let mut s = ping_soc(soc, ping, isr)?;
    let start = s.now() + spacing;
    let mut sent = Vec::with_capacity(ping.count);
    let mut by_seq: HashMap<u16, VecDeque<usize>> = HashMap::new();
    for i in 0..ping.count {
        let seq = i as u16;
        let at = start + SimTime(spacing.as_ps() * i as u64);
        let frame = icmp_echo_request(HOST, DEVICE, 0x1234, seq, ping.frame_bytes);
        s.port_ingress(ping.port, frame, at)?;
        sent.push(at);
        by_seq.entry(seq).or_default().push_back(i);
    }
    s.run_to_quiescence();

    let fabric = &s.config().fabric;
    let mut device: Vec<Option<SimTime>> = vec![None; ping.count];
    for e in s.egress() {
        let Some(icmp) = parse_icmp(&e.bytes).filter(|i| i.icmp_type == ICMP_ECHO_REPLY) else {
            continue;
        };
        let Some(i) = by_seq.get_mut(&icmp.seq).and_then(VecDeque::pop_front) else {
            continue;
        };
        let fixed = fabric.round_trip_fixed(ping.frame_bytes, e.bytes.len());
        device[i] = Some((e.time - sent[i]).saturating_sub(fixed));
    }
    let device: Vec<SimTime> = device.into_iter().flatten().collect();
    let lost = ping.count - device.len();
    let clock = s.core(0)?.clock().clone();
    let cycles = (ping.mode == PingMode::NetSoc)
        .then(|| device.iter().map(|d| clock.time_to_cycles(*d)).collect());
    Ok(LatencySamples {
        freq_hz: clock.freq_hz(),
        mode: ping.mode,
        rtt: device.iter().map(|d| ping.baseline + *d).collect(),
        device,
        cycles,
        lost,
        trace: ping.trace.then(|| s.take_trace()),
        frames: {
            // Ingress frames are logged when they clear the MAC, stamped
            // with their earlier wire arrival.
            let mut f = s.capture().to_vec();
            f.sort_by_key(|c| c.time);
            f
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub freq_hz: u64,
    pub median_cycles: u64,
    pub p99_cycles: u64,
    /// Median change relative to the highest frequency, in percent.
    pub delta_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub rows: Vec<SweepRow>,
    pub samples: Vec<LatencySamples>,
}

/// Runs [`run_ping`] once per frequency, varying only the CPU clock. Runs
/// are independent and execute on separate threads.
pub fn sweep_frequency(soc: &SocConfig, ping: &PingConfig, freqs: &[u64]) -> Result<Sweep> {
    if freqs.is_empty() {
        return Err(Error::InvalidArgument("frequency list is empty".into()));
    }
    if ping.mode != PingMode::NetSoc {
        return Err(Error::InvalidArgument("a frequency sweep needs netsoc mode".into()));
    }
    let results: Vec<Result<LatencySamples>> = std::thread::scope(|scope| {
        let handles: Vec<_> = freqs
            .iter()
            .map(|&f| {
                let mut cfg = soc.clone();
                cfg.profile.freq_hz = f;
                scope.spawn(move || run_ping(&cfg, ping))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("ping worker panicked"))
            .collect()
    });
    let samples = results.into_iter().collect::<Result<Vec<_>>>()?;
    let top = samples
        .iter()
        .max_by_key(|s| s.freq_hz)
        .expect("non-empty")
        .median_cycles()? as f64;
    let rows = samples
        .iter()
        .map(|s| {
            let median = s.median_cycles()?;
            Ok(SweepRow {
                freq_hz: s.freq_hz,
                median_cycles: median,
                p99_cycles: s.p99_cycles()?,
                delta_pct: if top == 0.0 {
                    0.0
                } else {
                    100.0 * (median as f64 - top) / top
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Sweep { rows, samples })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Proto {
    Udp,
    /// UDP with the per-packet stack cost scaled.
    TcpApprox,
}

impl Proto {
    pub fn as_str(self) -> &'static str {
        match self {
            Proto::Udp => "udp",
            Proto::TcpApprox => "tcp-approx",
        }
    }
}

impl FromStr for Proto {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "udp" => Ok(Proto::Udp),
            "tcp-approx" | "tcp" => Ok(Proto::TcpApprox),
            _ => Err(Error::InvalidArgument(format!("unknown protocol `{s}` (udp|tcp-approx)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputConfig {
    pub proto: Proto,
    pub duration: SimTime,
    pub frame_bytes: usize,
    pub tcp_stack_multiplier: f64,
    /// Offered frames are injected one window at a time.
    pub window: SimTime,
    pub port: usize,
}

impl Default for ThroughputConfig {
    fn default() -> Self {
        Self {
            proto: Proto::Udp,
            duration: SimTime(PS_PER_SECOND),
            frame_bytes: 1500,
            tcp_stack_multiplier: 1.0,
            window: SimTime::from_us(1_000),
            port: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub freq_hz: u64,
    pub duration: SimTime,
    pub offered: u64,
    pub delivered_packets: u64,
    pub delivered_bytes: u64,
    pub dropped: u64,
    pub mbps: f64,
}

/// Floods one port at line rate and counts frames whose ISR activation
/// finished within the duration.
pub fn run_throughput(soc: &SocConfig, cfg: &ThroughputConfig) -> Result<ThroughputReport> {
    if cfg.duration == SimTime::ZERO {
        return Err(Error::InvalidArgument("duration must be positive".into()));
    }
    validate_len(cfg.frame_bytes)?;
    if cfg.frame_bytes < 42 {
        return Err(Error::InvalidFrame(cfg.frame_bytes));
    }
    let mut sc = soc.clone();
    if cfg.proto == Proto::TcpApprox {
        if !(cfg.tcp_stack_multiplier.is_finite() && cfg.tcp_stack_multiplier >= 0.0) {
            return Err(Error::InvalidArgument("tcp stack multiplier must be >= 0".into()));
        }
        sc.profile.c_stack = (sc.profile.c_stack as f64 * cfg.tcp_stack_multiplier).round() as u64;
    }
    let mut s = Soc::new(sc)?;
    s.set_tracing(false);
    s.set_packet_log(false);
    s.attach_echo_driver()?;
    let frame: Arc<[u8]> = udp_datagram(HOST, DEVICE, 5001, 5001, cfg.frame_bytes).into();
    let gap = s.config().fabric.serialization(cfg.frame_bytes);
    let start = s.now();
    let end = start + cfg.duration;
    let window = cfg.window.max(gap);
    let mut next = start;
    let mut offered = 0;
    while next < end {
        let until = (next + window).min(end);
        while next < until {
            s.port_ingress(cfg.port, frame.clone(), next)?;
            offered += 1;
            next += gap;
        }
        s.run_until(until);
    }
    let done: Vec<_> = s.activations().iter().filter(|a| a.end <= end).collect();
    let bytes: u64 = done.iter().map(|a| a.bytes).sum();
    let packets: u64 = done.iter().map(|a| a.packets as u64).sum();
    let secs = cfg.duration.as_secs_f64();
    Ok(ThroughputReport {
        freq_hz: s.core(0)?.clock().freq_hz(),
        duration: cfg.duration,
        offered,
        delivered_packets: packets,
        delivered_bytes: bytes,
        dropped: s.stats().total_drops(),
        mbps: bytes as f64 * 8.0 / secs / 1e6,
    })
}

/// `freq_hz,sample_idx,rtt_ps,cycles`; cycles is empty in HW mode.
pub fn results_csv(header: &str, runs: &[LatencySamples]) -> String {
    let mut out = String::from(header);
    out.push_str("freq_hz,sample_idx,rtt_ps,cycles\n");
    for run in runs {
        for (i, rtt) in run.rtt.iter().enumerate() {
            let cycles = run
                .cycles
                .as_ref()
                .map(|c| c[i].to_string())
                .unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", run.freq_hz, i, rtt.as_ps(), cycles));
        }
    }
    out
}

/// `freq_hz,median_cycles,p99_cycles,delta_pct`.
pub fn summary_csv(header: &str, sweep: &Sweep) -> String {
    let mut out = String::from(header);
    out.push_str("freq_hz,median_cycles,p99_cycles,delta_pct\n");
    for r in &sweep.rows {
        out.push_str(&format!(
            "{},{},{},{:.3}\n",
            r.freq_hz, r.median_cycles, r.p99_cycles, r.delta_pct
        ));
    }
    out
}

/// `value_ps,fraction` rows for plotting.
pub fn cdf_csv(header: &str, samples: &[u64]) -> Result<String> {
    let mut out = String::from(header);
    out.push_str("value,fraction\n");
    for (v, f) in cdf(samples)? {
        out.push_str(&format!("{v},{f:.6}\n"));
    }
    Ok(out)
}
