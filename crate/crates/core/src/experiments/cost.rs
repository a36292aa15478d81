//! Per-decision latency and energy estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{AcamArray, Strategy};
use crate::tree::TreeKind;

/// Published per-decision totals for the ACAM implementation, used as
/// calibration targets.
pub const ACAM_DT_LATENCY_NS: f64 = 8.21;
pub const ACAM_DT_ENERGY_NJ: f64 = 7.24;
pub const ACAM_BDT_LATENCY_NS: f64 = 1.24e3;
pub const ACAM_BDT_ENERGY_NJ: f64 = 9.21e2;
/// Iterations behind the BDT totals.
pub const CALIBRATION_N_ITER: usize = 100;
/// Share of search and GRNG cost attributed to peripheral circuits.
pub const DEFAULT_PERIPHERAL_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Baseline {
    CpuDt,
    CpuBdt,
    GpuBdt,
}

impl Baseline {
    pub const ALL: [Baseline; 3] = [Baseline::CpuDt, Baseline::CpuBdt, Baseline::GpuBdt];

    /// (latency ns, energy nJ) per decision.
    pub fn cost(self) -> (f64, f64) {
        match self {
            Baseline::CpuDt => (1.02e3, 1.08e5),
            Baseline::CpuBdt => (3.62e6, 6.48e7),
            Baseline::GpuBdt => (5.96e4, 5.24e5),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Baseline::CpuDt => "CPU_DT",
            Baseline::CpuBdt => "CPU_BDT",
            Baseline::GpuBdt => "GPU_BDT",
        }
    }
}

impl std::str::FromStr for Baseline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Baseline::ALL
            .into_iter()
            .find(|b| b.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Usage(format!("unknown baseline {s:?} (CPU_DT, CPU_BDT, GPU_BDT)")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    pub search_latency_ns: f64,
    /// One GRNG batch covers every node of one iteration.
    pub grng_latency_ns: f64,
    pub program_latency_ns: f64,
    pub search_energy_nj: f64,
    pub grng_energy_nj: f64,
    pub program_energy_nj: f64,
    /// Peripheral latency as a fraction of search + GRNG latency.
    pub peripheral_latency_factor: f64,
    pub peripheral_energy_factor: f64,
}

impl Default for CostModel {
    fn default() -> Self {
        CostModel::calibrated(
            (ACAM_DT_LATENCY_NS, ACAM_DT_ENERGY_NJ),
            (ACAM_BDT_LATENCY_NS, ACAM_BDT_ENERGY_NJ),
            CALIBRATION_N_ITER,
            DEFAULT_PERIPHERAL_FRACTION,
        )
        .expect("published totals calibrate")
    }
}

impl CostModel {
    /// Back-solves per-operation costs from a DT total (one search) and a BDT
    /// total (`n_iter` searches and GRNG batches), both including a
    /// peripheral share `peripheral`.
    ///
    /// Programming is not constrained by either total; the defaults of
    /// 100 ns and 0.01 nJ per cell write are illustrative.
    pub fn calibrated(dt: (f64, f64), bdt: (f64, f64), n_iter: usize, peripheral: f64) -> Result<Self> {
        if n_iter == 0 {
            return Err(Error::Config("calibration needs n_iter >= 1".into()));
        }
        let scale = 1.0 + peripheral;
        let n = n_iter as f64;
        let search_latency_ns = dt.0 / scale;
        let search_energy_nj = dt.1 / scale;
        let m = CostModel {
            search_latency_ns,
            grng_latency_ns: bdt.0 / (n * scale) - search_latency_ns,
            program_latency_ns: 100.0,
            search_energy_nj,
            grng_energy_nj: bdt.1 / (n * scale) - search_energy_nj,
            program_energy_nj: 0.01,
            peripheral_latency_factor: peripheral,
            peripheral_energy_factor: peripheral,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.search_latency_ns,
            self.grng_latency_ns,
            self.program_latency_ns,
            self.search_energy_nj,
            self.grng_energy_nj,
            self.program_energy_nj,
            self.peripheral_latency_factor,
            self.peripheral_energy_factor,
        ];
        if fields.iter().all(|v| v.is_finite() && *v >= 0.0) {
            Ok(())
        } else {
            Err(Error::Config(format!("cost model entries must be finite and >= 0: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CostPart {
    pub latency_ns: f64,
    pub energy_nj: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakdown {
    pub search: CostPart,
    pub grng: CostPart,
    pub program: CostPart,
    pub peripheral: CostPart,
}

impl Breakdown {
    fn parts(&self) -> [CostPart; 4] {
        [self.search, self.grng, self.program, self.peripheral]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub kind: TreeKind,
    pub strategy: Strategy,
    pub n_iter: usize,
    pub searches: usize,
    pub grng_batches: usize,
    pub write_count: usize,
    pub latency_ns_per_decision: f64,
    pub energy_nj_per_decision: f64,
    pub breakdown: Breakdown,
}

/// Counts operations for one decision and prices them. DT runs a single
/// search; BDT runs `n_iter` searches and GRNG batches, plus a full rewrite
/// of the programmable cells per iteration on feature-wise arrays.
pub fn estimate_cost(a: &AcamArray, kind: TreeKind, n_iter: usize, c: &CostModel) -> Result<CostReport> {
    c.validate()?;
    let (searches, grng_batches, write_count) = match kind {
        TreeKind::Dt => (1, 0, 0),
        TreeKind::Bdt => {
            if n_iter == 0 {
                return Err(Error::domain("n_iter must be at least 1"));
            }
            let writes = match a.strategy() {
                Strategy::NodeWise => 0,
                Strategy::FeatureWise => n_iter * a.programmable_cells(),
            };
            (n_iter, n_iter, writes)
        }
    };
    let part = |count: usize, lat: f64, en: f64| CostPart {
        latency_ns: count as f64 * lat,
        energy_nj: count as f64 * en,
    };
    let search = part(searches, c.search_latency_ns, c.search_energy_nj);
    let grng = part(grng_batches, c.grng_latency_ns, c.grng_energy_nj);
    let program = part(write_count, c.program_latency_ns, c.program_energy_nj);
    let peripheral = CostPart {
        latency_ns: (search.latency_ns + grng.latency_ns) * c.peripheral_latency_factor,
        energy_nj: (search.energy_nj + grng.energy_nj) * c.peripheral_energy_factor,
    };
    let breakdown = Breakdown { search, grng, program, peripheral };
    Ok(CostReport {
        kind,
        strategy: a.strategy(),
        n_iter: if kind == TreeKind::Dt { 1 } else { n_iter },
        searches,
        grng_batches,
        write_count,
        latency_ns_per_decision: breakdown.parts().iter().map(|p| p.latency_ns).sum(),
        energy_nj_per_decision: breakdown.parts().iter().map(|p| p.energy_nj).sum(),
        breakdown,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub baseline: Baseline,
    pub speedup: f64,
    pub energy_ratio: f64,
}

pub fn compare_reference(r: &CostReport, baseline: Baseline) -> Comparison {
    let (lat, en) = baseline.cost();
    Comparison {
        baseline,
        speedup: lat / r.latency_ns_per_decision,
        energy_ratio: en / r.energy_nj_per_decision,
    }
}

/// A cost report together with its ratios against every baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostSummary {
    pub report: CostReport,
    pub comparisons: Vec<Comparison>,
}

impl CostSummary {
    pub fn new(report: CostReport) -> Self {
        let comparisons = Baseline::ALL.iter().map(|&b| compare_reference(&report, b)).collect();
        CostSummary { report, comparisons }
    }
}

/// Ratios of `other` against `r`; 1.0 for a report compared with itself.
pub fn compare_reports(r: &CostReport, other: &CostReport) -> (f64, f64) {
    (
        other.latency_ns_per_decision / r.latency_ns_per_decision,
        other.energy_nj_per_decision / r.energy_nj_per_decision,
    )
}
