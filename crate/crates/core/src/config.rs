//! Flat `key=value` configuration.
//!
//! The effective configuration is the defaults, then a file, then explicit
//! overrides, later entries winning. Unknown keys and unparsable values are
//! rejected with the offending key in the message. Every key is listed in
//! [`KEYS`] with its default.
//!
//! ```text
//! # comment
//! cpu.name = riscv
//! cpu.freq_hz = 50e6
//! bus.map.console = 0x10000:4096
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use crate::cpu::{CoreKind, CoreProfile};
use crate::error::{Error, Result};
use crate::experiments::{PingConfig, PingMode, Proto, ThroughputConfig};
use crate::host::BootConfig;
use crate::interconnect::{AddressMap, AddressRange, DeviceId};
use crate::memory::MemoryTiming;
use crate::netfabric::FabricConfig;
use crate::sim::SimTime;
use crate::soc::{ReflectorConfig, SocConfig};

/// Every accepted key with its default value.
pub const KEYS: &[(&str, &str)] = &[
    ("cpu.name", "beri"),
    ("cpu.freq_hz", "auto"),
    ("cpu.cores", "1"),
    ("cpu.c_isr_entry", "1500"),
    ("cpu.c_isr_exit", "500"),
    ("cpu.c_reg_setup", "10"),
    ("cpu.c_word_compute", "12"),
    ("cpu.c_stack", "200000"),
    ("cpu.mbuf_copy", "true"),
    ("mem.capacity_bytes", "4294967296"),
    ("mem.t_access_ps", "50000"),
    ("mem.t_word_ps", "5000"),
    ("mem.image", ""),
    ("fabric.ports", "4"),
    ("fabric.stream_width_bytes", "32"),
    ("fabric.clock_hz", "156250000"),
    ("fabric.rx_depth", "16"),
    ("fabric.mac_latency_ps", "500000"),
    ("fabric.line_rate_bps", "10000000000"),
    ("bus.latency_cycles", "4"),
    ("bus.map.pac", "auto"),
    ("bus.map.console", "auto"),
    ("bus.map.debugger", "auto"),
    ("bus.map.spi", "auto"),
    ("bus.map.ddr", "auto"),
    ("host.pcie_latency_ps", "900000"),
    ("host.spi_clock_hz", "25000000"),
    ("host.bulk_chunk_bytes", "1048576"),
    ("host.fpga_program_ps", "20000000000"),
    ("host.kernel_entry_ps", "1000000000"),
    ("host.netif_up_ps", "2000000000"),
    ("host.nfs_mount_ps", "50000000000"),
    ("experiment.count", "1000"),
    ("experiment.frame_bytes", "98"),
    ("experiment.freqs", "60000000,120000000"),
    ("experiment.seed", "1"),
    ("experiment.mode", "netsoc"),
    ("experiment.hw_latency_ps", "1270000"),
    ("experiment.hw_jitter_ps", "100000"),
    ("experiment.baseline_ps", "15000000"),
    ("experiment.spacing_factor", "10"),
    ("experiment.port", "0"),
    ("experiment.proto", "udp"),
    ("experiment.duration_ps", "1000000000000"),
    ("experiment.window_ps", "1000000000"),
    ("experiment.tcp_stack_multiplier", "1.0"),
    ("experiment.throughput_frame_bytes", "1500"),
    ("output.dir", "."),
    ("output.pcap", ""),
    ("output.trace", "false"),
];

#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub core: CoreKind,
    pub freq_hz: Option<u64>,
    pub cores: usize,
    pub c_isr_entry: u64,
    pub c_isr_exit: u64,
    pub c_reg_setup: u64,
    pub c_word_compute: u64,
    pub c_stack: u64,
    pub mbuf_copy: bool,
    pub mem_capacity: u64,
    pub mem_timing: MemoryTiming,
    pub mem_image: Option<PathBuf>,
    pub fabric: FabricConfig,
    pub bus_latency_cycles: u64,
    pub map_overrides: Vec<AddressRange>,
    pub pcie_latency: SimTime,
    pub spi_clock_hz: u64,
    pub boot: BootConfig,
    pub ping: PingConfig,
    pub freqs: Vec<u64>,
    pub throughput: ThroughputConfig,
    pub output_dir: PathBuf,
    pub output_pcap: Option<PathBuf>,
    pub output_trace: bool,
}

impl Default for Config {
    fn default() -> Self {
        let mut c = Self {
            core: CoreKind::Beri,
            freq_hz: None,
            cores: 1,
            c_isr_entry: 0,
            c_isr_exit: 0,
            c_reg_setup: 0,
            c_word_compute: 0,
            c_stack: 0,
            mbuf_copy: false,
            mem_capacity: 0,
            mem_timing: MemoryTiming::default(),
            mem_image: None,
            fabric: FabricConfig::default(),
            bus_latency_cycles: 0,
            map_overrides: Vec::new(),
            pcie_latency: SimTime::ZERO,
            spi_clock_hz: 0,
            boot: BootConfig::default(),
            ping: PingConfig::default(),
            freqs: Vec::new(),
            throughput: ThroughputConfig::default(),
            output_dir: PathBuf::from("."),
            output_pcap: None,
            output_trace: false,
        };
        for (k, v) in KEYS {
            c.set(k, v).expect("documented defaults parse");
        }
        c
    }
}

fn invalid(key: &str, value: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: reason.into(),
    }
}

/// Integer with optional `_` separators, `0x` prefix or exact `e` notation
/// (`60e6`).
fn parse_u64(key: &str, v: &str) -> Result<u64> {
    let s = v.replace('_', "");
    if let Some(hex) = s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        return u64::from_str_radix(hex, 16).map_err(|e| invalid(key, v, e.to_string()));
    }
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    match s.parse::<f64>() {
        Ok(f) if f >= 0.0 && f.fract() == 0.0 && f < 1.8e19 => Ok(f as u64),
        _ => Err(invalid(key, v, "expected a non-negative integer")),
    }
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    usize::try_from(parse_u64(key, v)?).map_err(|e| invalid(key, v, e.to_string()))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(invalid(key, v, "expected true or false")),
    }
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|f| f.is_finite())
        .ok_or_else(|| invalid(key, v, "expected a number"))
}

fn parse_path(v: &str) -> Option<PathBuf> {
    (!v.is_empty()).then(|| PathBuf::from(v))
}

fn parse_range(key: &str, device: DeviceId, v: &str) -> Result<Option<AddressRange>> {
    if v == "auto" {
        return Ok(None);
    }
    let (base, size) = v
        .split_once(':')
        .ok_or_else(|| invalid(key, v, "expected base:size"))?;
    Ok(Some(AddressRange {
        device,
        base: parse_u64(key, base.trim())?,
        size: parse_u64(key, size.trim())?,
    }))
}

impl Config {
    /// Defaults, then `path` if given, then `overrides` (`key=value` each).
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut c = Config::default();
        if let Some(p) = path {
            let text = fs::read_to_string(p).map_err(|source| Error::Io {
                path: p.to_path_buf(),
                source,
            })?;
            c.apply_text(&text)?;
        }
        for o in overrides {
            let (k, v) = o.split_once('=').ok_or_else(|| Error::MalformedConfig {
                line: 0,
                text: o.clone(),
            })?;
            c.set(k.trim(), v.trim())?;
        }
        Ok(c)
    }

    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::MalformedConfig {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "cpu.name" => self.core = v.parse().map_err(|_| invalid(key, v, "expected beri or riscv"))?,
            "cpu.freq_hz" => {
                self.freq_hz = match v {
                    "auto" => None,
                    _ => match parse_u64(key, v)? {
                        0 => return Err(invalid(key, v, "frequency must be positive")),
                        f => Some(f),
                    },
                }
            }
            "cpu.cores" => {
                self.cores = parse_usize(key, v)?;
                if self.cores == 0 {
                    return Err(invalid(key, v, "at least one core"));
                }
            }
            "cpu.c_isr_entry" => self.c_isr_entry = parse_u64(key, v)?,
            "cpu.c_isr_exit" => self.c_isr_exit = parse_u64(key, v)?,
            "cpu.c_reg_setup" => self.c_reg_setup = parse_u64(key, v)?,
            "cpu.c_word_compute" => self.c_word_compute = parse_u64(key, v)?,
            "cpu.c_stack" => self.c_stack = parse_u64(key, v)?,
            "cpu.mbuf_copy" => self.mbuf_copy = parse_bool(key, v)?,
            "mem.capacity_bytes" => self.mem_capacity = parse_u64(key, v)?,
            "mem.t_access_ps" => self.mem_timing.t_access = SimTime(parse_u64(key, v)?),
            "mem.t_word_ps" => self.mem_timing.t_word = SimTime(parse_u64(key, v)?),
            "mem.image" => self.mem_image = parse_path(v),
            "fabric.ports" => self.fabric.ports = parse_usize(key, v)?,
            "fabric.stream_width_bytes" => self.fabric.stream_width = parse_usize(key, v)?,
            "fabric.clock_hz" => self.fabric.clock_hz = parse_u64(key, v)?,
            "fabric.rx_depth" => self.fabric.rx_depth = parse_usize(key, v)?,
            "fabric.mac_latency_ps" => self.fabric.mac_latency = SimTime(parse_u64(key, v)?),
            "fabric.line_rate_bps" => self.fabric.line_rate_bps = parse_u64(key, v)?,
            "bus.latency_cycles" => self.bus_latency_cycles = parse_u64(key, v)?,
            _ if key.starts_with("bus.map.") => {
                let device = DeviceId::parse(&key["bus.map.".len()..])
                    .ok_or_else(|| Error::UnknownKey(key.into()))?;
                self.map_overrides.retain(|r| r.device != device);
                if let Some(r) = parse_range(key, device, v)? {
                    self.map_overrides.push(r);
                }
            }
            "host.pcie_latency_ps" => self.pcie_latency = SimTime(parse_u64(key, v)?),
            "host.spi_clock_hz" => self.spi_clock_hz = parse_u64(key, v)?,
            "host.bulk_chunk_bytes" => self.boot.chunk_bytes = parse_usize(key, v)?,
            "host.fpga_program_ps" => self.boot.fpga_program = SimTime(parse_u64(key, v)?),
            "host.kernel_entry_ps" => self.boot.kernel_entry = SimTime(parse_u64(key, v)?),
            "host.netif_up_ps" => self.boot.netif_up = SimTime(parse_u64(key, v)?),
            "host.nfs_mount_ps" => self.boot.nfs_mount = SimTime(parse_u64(key, v)?),
            "experiment.count" => self.ping.count = parse_usize(key, v)?,
            "experiment.frame_bytes" => self.ping.frame_bytes = parse_usize(key, v)?,
            "experiment.freqs" => {
                self.freqs = v
                    .split(',')
                    .map(|f| parse_u64(key, f.trim()))
                    .collect::<Result<_>>()?;
                if self.freqs.is_empty() || self.freqs.contains(&0) {
                    return Err(invalid(key, v, "expected positive frequencies"));
                }
            }
            "experiment.seed" => self.ping.seed = parse_u64(key, v)?,
            "experiment.mode" => {
                self.ping.mode = v.parse::<PingMode>().map_err(|e| invalid(key, v, e.to_string()))?
            }
            "experiment.hw_latency_ps" => self.ping.hw.latency = SimTime(parse_u64(key, v)?),
            "experiment.hw_jitter_ps" => self.ping.hw.jitter = SimTime(parse_u64(key, v)?),
            "experiment.baseline_ps" => self.ping.baseline = SimTime(parse_u64(key, v)?),
            "experiment.spacing_factor" => self.ping.spacing_factor = parse_u64(key, v)?,
            "experiment.port" => {
                self.ping.port = parse_usize(key, v)?;
                self.throughput.port = self.ping.port;
            }
            "experiment.proto" => {
                self.throughput.proto = v.parse::<Proto>().map_err(|e| invalid(key, v, e.to_string()))?
            }
            "experiment.duration_ps" => self.throughput.duration = SimTime(parse_u64(key, v)?),
            "experiment.window_ps" => self.throughput.window = SimTime(parse_u64(key, v)?),
            "experiment.tcp_stack_multiplier" => {
                self.throughput.tcp_stack_multiplier = parse_f64(key, v)?
            }
            "experiment.throughput_frame_bytes" => self.throughput.frame_bytes = parse_usize(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "output.pcap" => self.output_pcap = parse_path(v),
            "output.trace" => self.output_trace = parse_bool(key, v)?,
            _ => return Err(Error::UnknownKey(key.into())),
        }
        Ok(())
    }

    pub fn effective_freq_hz(&self) -> u64 {
        self.freq_hz.unwrap_or(self.core.nominal_freq_hz())
    }

    pub fn profile(&self) -> CoreProfile {
        CoreProfile {
            kind: self.core,
            freq_hz: self.effective_freq_hz(),
            c_isr_entry: self.c_isr_entry,
            c_isr_exit: self.c_isr_exit,
            c_reg_setup: self.c_reg_setup,
            c_word_compute: self.c_word_compute,
            c_stack: self.c_stack,
            mbuf_copy: self.mbuf_copy,
        }
    }

    pub fn address_map(&self) -> Result<AddressMap> {
        let mut map = AddressMap::default_map(self.core == CoreKind::Riscv);
        for r in &self.map_overrides {
            map = map.with_override(*r)?;
        }
        Ok(map)
    }

    pub fn soc(&self) -> Result<SocConfig> {
        Ok(SocConfig {
            profile: self.profile(),
            cores: self.cores,
            bus_latency_cycles: self.bus_latency_cycles,
            map: self.address_map()?,
            memory_capacity: self.mem_capacity,
            memory_timing: self.mem_timing,
            fabric: self.fabric.clone(),
            pcie_latency: self.pcie_latency,
            spi_clock_hz: self.spi_clock_hz,
            reflector: (self.ping.mode == PingMode::HwBaseline).then_some(ReflectorConfig {
                latency: self.ping.hw.latency,
                jitter: self.ping.hw.jitter,
            }),
            seed: self.ping.seed,
        })
    }

    /// Effective value of every key, in [`KEYS`] order.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let range = |d: DeviceId| {
            self.map_overrides
                .iter()
                .find(|r| r.device == d)
                .map_or("auto".to_string(), |r| format!("{:#x}:{}", r.base, r.size))
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        let freqs = self.freqs.iter().map(u64::to_string).collect::<Vec<_>>().join(",");
        let values: Vec<String> = vec![
            self.core.to_string(),
            self.effective_freq_hz().to_string(),
            self.cores.to_string(),
            self.c_isr_entry.to_string(),
            self.c_isr_exit.to_string(),
            self.c_reg_setup.to_string(),
            self.c_word_compute.to_string(),
            self.c_stack.to_string(),
            self.mbuf_copy.to_string(),
            self.mem_capacity.to_string(),
            self.mem_timing.t_access.as_ps().to_string(),
            self.mem_timing.t_word.as_ps().to_string(),
            path(&self.mem_image),
            self.fabric.ports.to_string(),
            self.fabric.stream_width.to_string(),
            self.fabric.clock_hz.to_string(),
            self.fabric.rx_depth.to_string(),
            self.fabric.mac_latency.as_ps().to_string(),
            self.fabric.line_rate_bps.to_string(),
            self.bus_latency_cycles.to_string(),
            range(DeviceId::Pac),
            range(DeviceId::Console),
            range(DeviceId::Debugger),
            range(DeviceId::Spi),
            range(DeviceId::Ddr),
            self.pcie_latency.as_ps().to_string(),
            self.spi_clock_hz.to_string(),
            self.boot.chunk_bytes.to_string(),
            self.boot.fpga_program.as_ps().to_string(),
            self.boot.kernel_entry.as_ps().to_string(),
            self.boot.netif_up.as_ps().to_string(),
            self.boot.nfs_mount.as_ps().to_string(),
            self.ping.count.to_string(),
            self.ping.frame_bytes.to_string(),
            freqs,
            self.ping.seed.to_string(),
            self.ping.mode.to_string(),
            self.ping.hw.latency.as_ps().to_string(),
            self.ping.hw.jitter.as_ps().to_string(),
            self.ping.baseline.as_ps().to_string(),
            self.ping.spacing_factor.to_string(),
            self.ping.port.to_string(),
            self.throughput.proto.as_str().to_string(),
            self.throughput.duration.as_ps().to_string(),
            self.throughput.window.as_ps().to_string(),
            self.throughput.tcp_stack_multiplier.to_string(),
            self.throughput.frame_bytes.to_string(),
            self.output_dir.display().to_string(),
            path(&self.output_pcap),
            self.output_trace.to_string(),
        ];
        debug_assert_eq!(values.len(), KEYS.len());
        KEYS.iter()
            .zip(values)
            .map(|((k, _), v)| (k.to_string(), v))
            .collect()
    }

    /// `# key=value` lines echoing the effective configuration.
    pub fn csv_header(&self) -> String {
        csv_header(&self.to_pairs())
    }
}

pub fn csv_header(pairs: &[(String, String)]) -> String {
    pairs.iter().map(|(k, v)| format!("# {k}={v}\n")).collect()
}
