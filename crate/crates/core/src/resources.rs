//! FPGA resource cost per build and multi-core feasibility.
//!
//! Each block (cores, interconnect, peripherals) has a measured LUT/FF cost
//! at one core and at the largest tabulated core count. Costs for other
//! core counts lie on the straight line through those two points, so both
//! measured configurations are reproduced exactly.

use crate::cpu::CoreKind;
use crate::error::{Error, Result};

/// Virtex-7 690T logic budget.
pub const BUDGET_LUT: f64 = 433_200.0;
pub const BUDGET_FF: f64 = 866_400.0;
/// Largest LUT/FF utilization that still routes.
pub const DEFAULT_THRESHOLD: f64 = 0.90;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LutFf {
    pub lut: f64,
    pub ff: f64,
}

impl LutFf {
    pub const fn k(lut: f64, ff: f64) -> Self {
        Self {
            lut: lut * 1000.0,
            ff: ff * 1000.0,
        }
    }

    fn lerp(a: LutFf, b: LutFf, t: f64) -> LutFf {
        LutFf {
            lut: a.lut + (b.lut - a.lut) * t,
            ff: a.ff + (b.ff - a.ff) * t,
        }
    }
}

impl std::ops::Add for LutFf {
    type Output = LutFf;
    fn add(self, o: LutFf) -> LutFf {
        LutFf {
            lut: self.lut + o.lut,
            ff: self.ff + o.ff,
        }
    }
}

impl std::ops::Sub for LutFf {
    type Output = LutFf;
    fn sub(self, o: LutFf) -> LutFf {
        LutFf {
            lut: self.lut - o.lut,
            ff: self.ff - o.ff,
        }
    }
}

/// A block's cost at one core and at `ResourceTable::tabulated_cores`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockCost {
    pub single: LutFf,
    pub multi: LutFf,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceTable {
    pub kind: CoreKind,
    pub tabulated_cores: u32,
    pub cores: BlockCost,
    pub interconnect: BlockCost,
    pub peripherals: BlockCost,
    pub budget: LutFf,
}

impl ResourceTable {
    pub fn for_core(kind: CoreKind) -> Self {
        let budget = LutFf {
            lut: BUDGET_LUT,
            ff: BUDGET_FF,
        };
        match kind {
            CoreKind::Beri => Self {
                kind,
                tabulated_cores: 4,
                cores: BlockCost {
                    single: LutFf::k(72.1, 29.8),
                    multi: LutFf::k(289.0, 118.0),
                },
                interconnect: BlockCost {
                    single: LutFf::k(16.9, 18.7),
                    multi: LutFf::k(21.0, 19.0),
                },
                peripherals: BlockCost {
                    single: LutFf::k(47.8, 47.2),
                    multi: LutFf::k(47.5, 47.3),
                },
                budget,
            },
            CoreKind::Riscv => Self {
                kind,
                tabulated_cores: 8,
                cores: BlockCost {
                    single: LutFf::k(40.8, 16.7),
                    multi: LutFf::k(326.0, 133.0),
                },
                interconnect: BlockCost {
                    single: LutFf::k(6.1, 6.2),
                    multi: LutFf::k(16.9, 13.4),
                },
                peripherals: BlockCost {
                    single: LutFf::k(35.8, 35.4),
                    multi: LutFf::k(35.6, 35.4),
                },
                budget,
            },
        }
    }

    fn block(&self, b: BlockCost, n: u32) -> LutFf {
        let t = (n as f64 - 1.0) / (self.tabulated_cores as f64 - 1.0);
        LutFf::lerp(b.single, b.multi, t)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResourceReport {
    pub kind: CoreKind,
    pub n: u32,
    pub cores: LutFf,
    pub interconnect: LutFf,
    pub peripherals: LutFf,
    pub total: LutFf,
    pub unused: LutFf,
    pub budget: LutFf,
    pub threshold: f64,
    pub feasible: bool,
}

impl ResourceReport {
    pub fn lut_utilization(&self) -> f64 {
        self.total.lut / self.budget.lut
    }

    pub fn ff_utilization(&self) -> f64 {
        self.total.ff / self.budget.ff
    }

    /// Share of the budget, in percent.
    pub fn percent(&self, v: LutFf) -> (f64, f64) {
        (100.0 * v.lut / self.budget.lut, 100.0 * v.ff / self.budget.ff)
    }

    /// Rows in table order: RISC(s), Inter, Peri, Unused.
    pub fn rows(&self) -> [(&'static str, LutFf); 4] {
        [
            ("RISC(s)", self.cores),
            ("Inter", self.interconnect),
            ("Peri", self.peripherals),
            ("Unused", self.unused),
        ]
    }

    /// `block,lut_k,ff_k,lut_pct,ff_pct`, one row per block.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("block,lut_k,ff_k,lut_pct,ff_pct\n");
        for (name, v) in self.rows() {
            let (lp, fp) = self.percent(v);
            out.push_str(&format!(
                "{name},{:.1},{:.1},{lp:.1},{fp:.1}\n",
                v.lut / 1000.0,
                v.ff / 1000.0
            ));
        }
        out
    }
}

pub fn estimate(kind: CoreKind, n: u32) -> Result<ResourceReport> {
    estimate_with(&ResourceTable::for_core(kind), n, DEFAULT_THRESHOLD)
}

pub fn estimate_with(table: &ResourceTable, n: u32, threshold: f64) -> Result<ResourceReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("core count must be at least 1".into()));
    }
    let cores = table.block(table.cores, n);
    let interconnect = table.block(table.interconnect, n);
    let peripherals = table.block(table.peripherals, n);
    let total = cores + interconnect + peripherals;
    let mut r = ResourceReport {
        kind: table.kind,
        n,
        cores,
        interconnect,
        peripherals,
        total,
        unused: table.budget - total,
        budget: table.budget,
        threshold,
        feasible: false,
    };
    r.feasible = r.lut_utilization() <= threshold && r.ff_utilization() <= threshold;
    Ok(r)
}

pub fn max_cores(kind: CoreKind) -> u32 {
    max_cores_with(&ResourceTable::for_core(kind), DEFAULT_THRESHOLD)
}

/// Largest feasible core count (0 if even one core does not fit).
pub fn max_cores_with(table: &ResourceTable, threshold: f64) -> u32 {
    let mut n = 0;
    while n < 4096 {
        match estimate_with(table, n + 1, threshold) {
            Ok(r) if r.feasible => n += 1,
            _ => break,
        }
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_recovered_from_printed_shares() {
        // 72.1K is printed as 16.6% and 29.8K as 3.4%.
        let lut = 72_100.0 / 0.166;
        assert!((lut - BUDGET_LUT).abs() / BUDGET_LUT < 0.005);
        let ff = 29_800.0 / 0.034;
        assert!((ff - BUDGET_FF).abs() / BUDGET_FF < 0.02);
    }

    #[test]
    fn quad_beri() {
        let r = estimate(CoreKind::Beri, 4).unwrap();
        assert!((r.total.lut - 357_500.0).abs() < 1e-6);
        assert!((r.lut_utilization() - 0.825).abs() < 0.001);
        assert!(r.feasible);
    }

    #[test]
    fn tabulated_points_exact() {
        let r = estimate(CoreKind::Riscv, 1).unwrap();
        assert!((r.cores.lut - 40_800.0).abs() < 1e-6);
        assert!((r.interconnect.ff - 6_200.0).abs() < 1e-6);
        let r = estimate(CoreKind::Riscv, 8).unwrap();
        assert!((r.cores.ff - 133_000.0).abs() < 1e-6);
        assert!((r.peripherals.lut - 35_600.0).abs() < 1e-6);
    }

    #[test]
    fn maxima() {
        assert_eq!(max_cores(CoreKind::Beri), 4);
        assert_eq!(max_cores(CoreKind::Riscv), 8);
        let t = ResourceTable::for_core(CoreKind::Beri);
        assert_eq!(max_cores_with(&t, 1.0), 5);
    }

    #[test]
    fn zero_cores_rejected() {
        assert!(estimate(CoreKind::Beri, 0).is_err());
    }

    #[test]
    fn csv_shape() {
        let csv = estimate(CoreKind::Beri, 1).unwrap().to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[1], "RISC(s),72.1,29.8,16.6,3.4");
    }
}
