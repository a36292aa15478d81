//! Behavioral ACAM search.
//!
//! Match lines are modeled as current sums. A matching cell leaks only its
//! off-state current; a mismatching cell turns one of its FeFETs on and adds
//! a branch current that grows exponentially with the overdrive (distance
//! of the search voltage past the violated bound) until it saturates. The
//! winning row is the one carrying the least current.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mapping::{AcamArray, AcamCell};
use crate::seed::{self, Stream};

/// Non-idealities applied during an experiment. All sigmas are in
/// normalized units where 0.1 corresponds to 0.1 V of V_TH shift.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseSpec {
    /// Gaussian noise on dataset features (clipped to `[0, 1]`).
    pub input_sigma: f64,
    /// Fresh V_TH perturbation of every stored bound on every search.
    pub read_sigma: f64,
    /// One-time V_TH error when a bound is programmed.
    pub write_sigma: f64,
    /// Threshold quantization; `None` keeps full precision.
    pub bits: Option<u32>,
    /// Constant V_TH offset added to every stored bound at read time.
    pub drift: f64,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        NoiseSpec {
            input_sigma: 0.0,
            read_sigma: 0.0,
            write_sigma: 0.0,
            bits: None,
            drift: 0.0,
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("input_sigma", self.input_sigma),
            ("read_sigma", self.read_sigma),
            ("write_sigma", self.write_sigma),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::domain(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        if let Some(b) = self.bits {
            if !(1..=32).contains(&b) {
                return Err(Error::domain(format!("bits must be in 1..=32, got {b}")));
            }
        }
        if !self.drift.is_finite() {
            return Err(Error::domain("drift must be finite"));
        }
        Ok(())
    }
}

/// Shape of a FeFET's transfer curve as seen by the match line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellIvModel {
    /// Saturated on-branch current at unit read bias (arbitrary units).
    pub on_conductance: f64,
    /// Decades of current per normalized volt of overdrive.
    pub subthreshold_slope: f64,
    /// Leakage of a cell whose devices are both off.
    pub off_current: f64,
}

impl Default for CellIvModel {
    /// 20 dec/V gives a 100x contrast at 0.1 V overdrive; the branch
    /// saturates 0.15 V past the bound.
    fn default() -> Self {
        CellIvModel {
            on_conductance: 1.0,
            subthreshold_slope: 20.0,
            off_current: 1e-3,
        }
    }
}

impl CellIvModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.on_conductance > 0.0 && self.subthreshold_slope > 0.0 && self.off_current >= 0.0)
        {
            return Err(Error::domain(format!("invalid I-V model {self:?}")));
        }
        if self.off_current >= self.on_conductance {
            return Err(Error::domain("off current must be below the on current"));
        }
        Ok(())
    }

    /// Extra current of an on branch at overdrive `d >= 0`.
    pub fn branch_current(&self, overdrive: f64) -> f64 {
        let i = self.off_current * 10f64.powf(self.subthreshold_slope * overdrive.max(0.0));
        i.min(self.on_conductance)
    }
}

/// Match-line current of one cell. `lo_shift` / `hi_shift` are the read-time
/// V_TH perturbations of the two stored bounds.
pub fn cell_current(c: &AcamCell, v: f64, iv: &CellIvModel, lo_shift: f64, hi_shift: f64) -> f64 {
    if c.dont_care {
        return iv.off_current;
    }
    let below = c.lo.map(|lo| lo + lo_shift).filter(|&lo| v <= lo).map(|lo| lo - v);
    let above = c.hi.map(|hi| hi + hi_shift).filter(|&hi| v > hi).map(|hi| v - hi);
    match below.into_iter().chain(above).reduce(f64::max) {
        Some(d) => iv.off_current + iv.branch_current(d),
        None => iv.off_current,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub row_currents: Vec<f64>,
    pub matched_row: usize,
    pub margins: Vec<f64>,
}

impl SearchResult {
    /// Whether the runner-up sits within `margin_threshold` of the winner.
    pub fn is_ambiguous(&self, margin_threshold: f64) -> bool {
        self.margins
            .iter()
            .enumerate()
            .any(|(r, &m)| r != self.matched_row && m <= margin_threshold)
    }
}

/// Row currents for one search. `enabled`, when given, excludes rows from
/// the winner selection (their current is reported as infinite).
pub(crate) fn row_currents<R: Rng>(
    a: &AcamArray,
    query: &[f64],
    noise: &NoiseSpec,
    iv: &CellIvModel,
    rng: &mut R,
    enabled: Option<&[bool]>,
) -> (Vec<f64>, Option<usize>) {
    let read = (noise.read_sigma > 0.0)
        .then(|| Normal::new(0.0, noise.read_sigma).expect("validated sigma"));
    let mut draw = |bound: Option<f64>| -> f64 {
        match (&read, bound) {
            (Some(n), Some(_)) => noise.drift + n.sample(rng),
            _ => noise.drift,
        }
    };
    let cols = a.cols();
    let mut currents = Vec::with_capacity(a.rows());
    let mut best: Option<(usize, f64)> = None;
    for (r, active) in a.active_cells().iter().enumerate() {
        if enabled.is_some_and(|e| !e[r]) {
            currents.push(f64::INFINITY);
            continue;
        }
        let mut i = (cols - active.len()) as f64 * iv.off_current;
        for &(c, cell) in active {
            let lo_shift = draw(cell.lo);
            let hi_shift = draw(cell.hi);
            i += cell_current(&cell, query[c], iv, lo_shift, hi_shift);
        }
        if best.is_none_or(|(_, b)| i < b) {
            best = Some((r, i));
        }
        currents.push(i);
    }
    (currents, best.map(|b| b.0))
}

fn check_query(a: &AcamArray, query: &[f64]) -> Result<()> {
    if query.len() != a.cols() {
        return Err(Error::domain(format!(
            "query has {} values but the array has {} columns",
            query.len(),
            a.cols()
        )));
    }
    Ok(())
}

/// One parallel search. Read noise is drawn per stored bound from a stream
/// derived from `seed`; ties go to the lowest row.
pub fn search(
    a: &AcamArray,
    query: &[f64],
    noise: &NoiseSpec,
    iv: &CellIvModel,
    seed: u64,
) -> Result<SearchResult> {
    check_query(a, query)?;
    let mut rng = seed::rng(Stream::ReadNoise, &[seed]);
    let (row_currents, best) = row_currents(a, query, noise, iv, &mut rng, None);
    let matched_row = best.expect("arrays have at least one row");
    let winner = row_currents[matched_row];
    let margins = row_currents.iter().map(|&i| i - winner).collect();
    Ok(SearchResult {
        row_currents,
        matched_row,
        margins,
    })
}

/// Noise-free reference: every row whose cells all satisfy `lo < v <= hi`.
pub fn digital_match(a: &AcamArray, query: &[f64]) -> Vec<usize> {
    (0..a.rows())
        .filter(|&r| a.row_cells(r).iter().zip(query).all(|(c, &v)| c.matches(v)))
        .collect()
}

/// Parses two-column `voltage,current` text. A non-numeric first line is
/// taken as a header; blank lines and `#` comments are skipped.
pub fn parse_iv_csv(text: &str) -> Result<Vec<(f64, f64)>> {
    let mut points = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: Vec<Option<f64>> = fields.iter().map(|f| f.parse().ok()).collect();
        match parsed.as_slice() {
            [Some(v), Some(c)] => points.push((*v, *c)),
            _ if i == 0 && points.is_empty() => continue,
            _ => {
                return Err(Error::Malformed {
                    row: i + 1,
                    column: parsed.iter().position(Option::is_none).map_or(fields.len(), |c| c + 1),
                    message: format!("expected two numeric columns, got {line:?}"),
                })
            }
        }
    }
    Ok(points)
}

/// Fits a [`CellIvModel`] to measured `(overdrive, current)` pairs of a
/// single mismatching cell, which carries `off + branch(overdrive)`.
///
/// Off current is the median of points at non-positive overdrive (or the
/// smallest current when there are none). Saturation is the largest
/// current minus the off level. The slope is a least-squares fit through
/// the origin of `log10((I - off) / off)` against overdrive, over points
/// below 90% of saturation.
pub fn calibrate_iv(points: &[(f64, f64)]) -> Result<CellIvModel> {
    if points.iter().any(|&(v, i)| !v.is_finite() || !(i > 0.0)) {
        return Err(Error::domain("I-V points need finite voltages and positive currents"));
    }
    let mut off: Vec<f64> = points.iter().filter(|p| p.0 <= 0.0).map(|p| p.1).collect();
    off.sort_by(f64::total_cmp);
    let off_current = match off.len() {
        0 => points
            .iter()
            .map(|p| p.1)
            .reduce(f64::min)
            .ok_or_else(|| Error::domain("no I-V points"))?,
        n => off[n / 2],
    };
    let on_conductance = points.iter().map(|p| p.1).fold(0.0, f64::max) - off_current;
    let (sxy, sxx, n) = points
        .iter()
        .map(|&(v, i)| (v, i - off_current))
        .filter(|&(v, b)| v > 0.0 && b > 0.0 && b < 0.9 * on_conductance)
        .fold((0.0, 0.0, 0usize), |(sxy, sxx, n), (v, b)| {
            (sxy + v * (b / off_current).log10(), sxx + v * v, n + 1)
        });
    if n < 2 {
        return Err(Error::domain(format!(
            "need at least two points in the exponential region, found {n}"
        )));
    }
    let model = CellIvModel {
        on_conductance,
        subthreshold_slope: sxy / sxx,
        off_current,
    };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mapping::{map_node_wise, tests::depth2};
    use proptest::prelude::*;

    const IV: CellIvModel = CellIvModel {
        on_conductance: 1.0,
        subthreshold_slope: 20.0,
        off_current: 1e-3,
    };

    #[test]
    fn iv_csv_parsing() {
        let pts = parse_iv_csv("voltage,current\n0.0, 1e-3\n# note\n\n0.1,0.1\n").unwrap();
        assert_eq!(pts, vec![(0.0, 1e-3), (0.1, 0.1)]);
        assert!(matches!(
            parse_iv_csv("0,1\n0.1,x\n"),
            Err(Error::Malformed { row: 2, column: 2, .. })
        ));
    }

    #[test]
    fn dont_care_leaks_off_current() {
        for v in [-3.0, 0.0, 0.5, 7.0] {
            assert_eq!(cell_current(&AcamCell::DONT_CARE, v, &IV, 0.2, -0.2), IV.off_current);
        }
    }

    #[test]
    fn interior_and_exterior_currents() {
        let c = AcamCell::interval(Some(0.3), Some(0.7));
        assert_eq!(cell_current(&c, 0.5, &IV, 0.0, 0.0), IV.off_current);
        let near = cell_current(&c, 0.75, &IV, 0.0, 0.0);
        let far = cell_current(&c, 0.9, &IV, 0.0, 0.0);
        assert!(far > near && near > IV.off_current);
        // 10x contrast or better at 0.1 overdrive.
        assert!(cell_current(&c, 0.8, &IV, 0.0, 0.0) >= 10.0 * IV.off_current);
    }

    #[test]
    fn boundary_convention() {
        let upper = AcamCell::upper(0.4);
        assert_eq!(cell_current(&upper, 0.4, &IV, 0.0, 0.0), IV.off_current);
        let lower = AcamCell::lower(0.4);
        assert!(cell_current(&lower, 0.4, &IV, 0.0, 0.0) > IV.off_current);
        assert!(upper.matches(0.4) && !lower.matches(0.4));
    }

    #[test]
    fn noiseless_search_picks_unique_match() {
        let a = map_node_wise(&depth2()).unwrap();
        // x0 = 0.6 > 0.5, x2 = 0.9 > 0.7 -> row 3.
        let q = a.query(&[0.6, 0.1, 0.9], None);
        let s = search(&a, &q, &NoiseSpec::default(), &IV, 0).unwrap();
        assert_eq!(s.matched_row, 3);
        assert_eq!(digital_match(&a, &q), vec![3]);
        assert!((s.row_currents[3] - 3.0 * IV.off_current).abs() < 1e-15);
        assert!(s.margins.iter().enumerate().all(|(r, &m)| r == 3 || m > 0.0));
    }

    #[test]
    fn query_outside_every_region_still_resolves() {
        use crate::mapping::program;
        use rand::{Rng, SeedableRng};
        // Heavy write noise breaks the tiling, leaving gaps no row covers.
        let noisy = NoiseSpec { write_sigma: 0.3, ..NoiseSpec::default() };
        let a = program(&map_node_wise(&depth2()).unwrap(), &noisy, 4).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        let mut checked = 0;
        for _ in 0..2000 {
            let q: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            if !digital_match(&a, &q).is_empty() {
                continue;
            }
            let s = search(&a, &q, &NoiseSpec::default(), &IV, 0).unwrap();
            let manual: Vec<f64> = (0..a.rows())
                .map(|r| {
                    a.row_cells(r)
                        .iter()
                        .zip(&q)
                        .map(|(c, &v)| cell_current(c, v, &IV, 0.0, 0.0))
                        .sum()
                })
                .collect();
            let least = manual.iter().copied().fold(f64::INFINITY, f64::min);
            // Saturated rows can tie exactly; summation order then decides.
            assert!(manual[s.matched_row] - least < 1e-12);
            checked += 1;
        }
        assert!(checked > 0);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let a = map_node_wise(&depth2()).unwrap();
        assert!(matches!(
            search(&a, &[0.1], &NoiseSpec::default(), &IV, 0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn all_dont_care_row_always_matches() {
        let a = map_node_wise(&depth2()).unwrap();
        let mut doc = serde_json::to_value(&a).unwrap();
        let cells = doc["cells"].as_array_mut().unwrap();
        for c in cells.iter_mut().take(3) {
            *c = serde_json::to_value(AcamCell::DONT_CARE).unwrap();
        }
        let a: AcamArray = serde_json::from_value(doc).unwrap();
        for q in [[0.0, 0.0, 0.0], [0.9, 0.9, 0.9], [0.5, 0.2, 0.7]] {
            assert!(digital_match(&a, &q).contains(&0));
        }
    }

    #[test]
    fn read_noise_is_seeded() {
        let a = map_node_wise(&depth2()).unwrap();
        let noise = NoiseSpec { read_sigma: 0.1, ..NoiseSpec::default() };
        let q = a.query(&[0.45, 0.31, 0.2], None);
        let s1 = search(&a, &q, &noise, &IV, 17).unwrap();
        let s2 = search(&a, &q, &noise, &IV, 17).unwrap();
        assert_eq!(s1, s2);
        let s3 = search(&a, &q, &noise, &IV, 18).unwrap();
        assert_ne!(s1.row_currents, s3.row_currents);
    }

    #[test]
    fn calibration_recovers_model() {
        let truth = CellIvModel {
            on_conductance: 2.0,
            subthreshold_slope: 14.0,
            off_current: 1e-4,
        };
        let pts: Vec<(f64, f64)> = (-10..60)
            .map(|k| {
                let v = k as f64 * 0.01;
                (v, truth.off_current + if v > 0.0 { truth.branch_current(v) } else { 0.0 })
            })
            .collect();
        let fit = calibrate_iv(&pts).unwrap();
        assert!((fit.subthreshold_slope - 14.0).abs() < 1e-9, "{fit:?}");
        assert_eq!(fit.off_current, 1e-4);
        assert!((fit.on_conductance - 2.0).abs() < 1e-12);
        assert!(calibrate_iv(&pts[..3]).is_err());
    }

    proptest! {
        #[test]
        fn current_monotone_outside(lo in 0.0f64..0.5, w in 0.01f64..0.5, d1 in 0.0f64..2.0, d2 in 0.0f64..2.0) {
            let c = AcamCell::interval(Some(lo), Some(lo + w));
            let (near, far) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            prop_assert!(cell_current(&c, lo + w + far, &IV, 0.0, 0.0) >= cell_current(&c, lo + w + near, &IV, 0.0, 0.0));
            prop_assert!(cell_current(&c, lo - far, &IV, 0.0, 0.0) >= cell_current(&c, lo - near, &IV, 0.0, 0.0));
        }

        #[test]
        fn dont_care_column_shifts_all_rows_equally(x0 in 0.0f64..1.0, x1 in 0.0f64..1.0, x2 in 0.0f64..1.0) {
            let a = map_node_wise(&depth2()).unwrap();
            let q = a.query(&[x0, x1, x2], None);
            let base = search(&a, &q, &NoiseSpec::default(), &IV, 0).unwrap();
            let mut doc = serde_json::to_value(&a).unwrap();
            let rows = a.rows();
            let cols = a.cols();
            let cells = doc["cells"].as_array().unwrap().clone();
            let mut widened = Vec::new();
            for r in 0..rows {
                widened.extend_from_slice(&cells[r * cols..(r + 1) * cols]);
                widened.push(serde_json::to_value(AcamCell::DONT_CARE).unwrap());
            }
            doc["cells"] = serde_json::Value::Array(widened);
            doc["cols"] = (cols + 1).into();
            doc["query_map"].as_array_mut().unwrap().push(0.into());
            doc["col_meta"].as_array_mut().unwrap().push(serde_json::json!({"feature": 0, "node": null}));
            let b: AcamArray = serde_json::from_value(doc).unwrap();
            let mut q2 = q.clone();
            q2.push(x0);
            let wide = search(&b, &q2, &NoiseSpec::default(), &IV, 0).unwrap();
            prop_assert_eq!(wide.matched_row, base.matched_row);
            for (w, n) in wide.row_currents.iter().zip(&base.row_currents) {
                prop_assert!((w - n - IV.off_current).abs() < 1e-12);
            }
        }
    }
}
