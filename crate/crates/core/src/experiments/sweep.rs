//! Accuracy sweeps over one noise or model axis.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::{add_input_noise, Dataset};
use crate::error::{Error, Result};
use crate::grng::GrngConfig;
use crate::inference::{pipelines_for, predict_batch, InferenceOptions, Predictor};
use crate::mapping::{map_node_wise, program};
use crate::seed::{self, Stream};
use crate::sim::{CellIvModel, NoiseSpec};
use crate::training::{train_with, TrainConfig};
use crate::tree::{TreeKind, TreeModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Axis {
    InputNoise,
    DeviceNoise,
    Bits,
    Depth,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::InputNoise => "INPUT_NOISE",
            Axis::DeviceNoise => "DEVICE_NOISE",
            Axis::Bits => "BITS",
            Axis::Depth => "DEPTH",
        }
    }

    /// Grid used when a config names the axis without values. Bits use
    /// `f64::INFINITY` for "quantization disabled".
    pub fn default_values(self) -> Vec<f64> {
        match self {
            Axis::InputNoise | Axis::DeviceNoise => vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.3],
            Axis::Bits => vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, f64::INFINITY],
            Axis::Depth => vec![2.0, 4.0, 8.0, 12.0, 16.0, 20.0],
        }
    }
}

impl std::str::FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "INPUT_NOISE" => Ok(Axis::InputNoise),
            "DEVICE_NOISE" => Ok(Axis::DeviceNoise),
            "BITS" => Ok(Axis::Bits),
            "DEPTH" => Ok(Axis::Depth),
            _ => Err(Error::Config(format!("unknown sweep axis {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: TreeKind,
    pub max_depth: usize,
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.kind, self.max_depth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: Axis,
    pub values: Vec<f64>,
    pub models: Vec<ModelSpec>,
    pub n_iter: usize,
    pub trials: usize,
    pub seed: u64,
    /// Noise applied at every point; the swept knob overrides its field.
    pub base_noise: NoiseSpec,
    pub min_samples: usize,
    pub sigma_max: f64,
    pub iv: CellIvModel,
    pub grng: GrngConfig,
}

impl SweepSpec {
    pub fn new(axis: Axis, values: Vec<f64>, models: Vec<ModelSpec>) -> Self {
        let d = TrainConfig::new(TreeKind::Bdt, 1);
        SweepSpec {
            axis,
            values,
            models,
            n_iter: crate::inference::DEFAULT_N_ITER,
            trials: 5,
            seed: 0,
            base_noise: NoiseSpec::default(),
            min_samples: d.min_samples,
            sigma_max: d.sigma_max,
            iv: CellIvModel::default(),
            grng: GrngConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.values.is_empty() {
            return bad("sweep needs at least one axis value".into());
        }
        if self.values.windows(2).any(|w| !(w[0] < w[1])) {
            return bad(format!("sweep values must be strictly increasing: {:?}", self.values));
        }
        if self.models.is_empty() {
            return bad("sweep needs at least one model".into());
        }
        if self.trials < 1 || self.n_iter < 1 {
            return bad("trials and n_iter must be at least 1".into());
        }
        for &v in &self.values {
            let ok = match self.axis {
                Axis::InputNoise | Axis::DeviceNoise => v.is_finite() && v >= 0.0,
                Axis::Bits => v == f64::INFINITY || (v.fract() == 0.0 && (1.0..=32.0).contains(&v)),
                Axis::Depth => v.is_finite() && v.fract() == 0.0 && v >= 1.0,
            };
            if !ok {
                return bad(format!("{v} is not a valid {} value", self.axis.label()));
            }
        }
        if self.axis == Axis::Bits && self.base_noise.bits.is_some() {
            return bad("BITS sweep conflicts with a fixed base quantization".into());
        }
        self.base_noise.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.iv.validate().map_err(|e| Error::Config(e.to_string()))
    }

    fn noise_at(&self, v: f64) -> NoiseSpec {
        let mut n = self.base_noise;
        match self.axis {
            Axis::InputNoise => n.input_sigma = v,
            Axis::DeviceNoise => n.read_sigma = v,
            Axis::Bits => n.bits = v.is_finite().then_some(v as u32),
            Axis::Depth => {}
        }
        n
    }

    fn model_at(&self, m: ModelSpec, v: f64) -> ModelSpec {
        match self.axis {
            Axis::Depth => ModelSpec { max_depth: v as usize, ..m },
            _ => m,
        }
    }
}

/// Formats an axis value for tables: integers plainly, disabled bits as
/// "float".
pub fn value_label(axis: Axis, v: f64) -> String {
    match axis {
        Axis::Bits if v.is_infinite() => "float".into(),
        Axis::Bits | Axis::Depth => format!("{}", v as u64),
        _ => format!("{v}"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    /// `None` for disabled quantization.
    pub value: Option<f64>,
    pub label: String,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub trials: usize,
    pub accuracies: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub model: String,
    pub points: Vec<SweepPoint>,
}

/// Plot-ready sweep output: one series per model, points in axis order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub axis: Axis,
    pub n_iter: usize,
    pub seed: u64,
    pub series: Vec<Series>,
}

impl SweepReport {
    pub fn series(&self, model: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.model == model)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Accuracy of one (model, noise) configuration for one trial. Write noise,
/// quantization and input noise all draw from `trial_seed`, so models
/// compared at the same point see the same noisy test set.
pub fn evaluate(
    tree: &TreeModel,
    test: &Dataset,
    noise: &NoiseSpec,
    n_iter: usize,
    iv: &CellIvModel,
    grng: &GrngConfig,
    trial_seed: u64,
) -> Result<f64> {
    let mapped = map_node_wise(tree)?;
    let array = if noise.bits.is_some() || noise.write_sigma > 0.0 {
        program(&mapped, noise, trial_seed)?
    } else {
        mapped
    };
    let noisy = add_input_noise(test, noise.input_sigma, trial_seed)?;
    let pipelines = pipelines_for(&array, grng)?;
    let opts = InferenceOptions {
        n_iter: if tree.kind() == TreeKind::Dt { 1 } else { n_iter },
        noise: *noise,
        iv: *iv,
        trace: false,
    };
    Ok(predict_batch(Predictor::Array(&array), &noisy, &opts, &pipelines, trial_seed)?.accuracy)
}

pub fn run_sweep(spec: &SweepSpec, train: &Dataset, test: &Dataset) -> Result<SweepReport> {
    spec.validate()?;
    let mut trees: BTreeMap<(usize, usize), TreeModel> = BTreeMap::new();
    let mut series: Vec<Series> = spec
        .models
        .iter()
        .map(|m| Series { model: m.to_string(), points: Vec::new() })
        .collect();
    for (vi, &v) in spec.values.iter().enumerate() {
        let noise = spec.noise_at(v);
        for (mi, &m) in spec.models.iter().enumerate() {
            let m = spec.model_at(m, v);
            let key = (m.kind as usize, m.max_depth);
            let tree = match trees.entry(key) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    let cfg = TrainConfig {
                        min_samples: spec.min_samples,
                        sigma_max: spec.sigma_max,
                        ..TrainConfig::new(m.kind, m.max_depth)
                    };
                    e.insert(train_with(train, &cfg)?)
                }
            };
            let tree = &*tree;
            let accuracies = (0..spec.trials)
                .map(|trial| {
                    let trial_seed = seed::derive(Stream::Sweep, &[spec.seed, vi as u64, trial as u64]);
                    evaluate(tree, test, &noise, spec.n_iter, &spec.iv, &spec.grng, trial_seed)
                })
                .collect::<Result<Vec<_>>>()?;
            let (mean_acc, std_acc) = mean_std(&accuracies);
            series[mi].points.push(SweepPoint {
                value: v.is_finite().then_some(v),
                label: value_label(spec.axis, v),
                mean_acc,
                std_acc,
                trials: spec.trials,
                accuracies,
            });
        }
    }
    Ok(SweepReport { axis: spec.axis, n_iter: spec.n_iter, seed: spec.seed, series })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
}

impl ReportFormat {
    /// Picks the format from a file extension (`.csv` or anything else).
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => ReportFormat::Csv,
            _ => ReportFormat::Json,
        }
    }
}

pub fn report_csv(r: &SweepReport) -> String {
    let mut out = String::from("axis,model,mean_acc,std_acc,trials\n");
    let n_points = r.series.first().map_or(0, |s| s.points.len());
    for p in 0..n_points {
        for s in &r.series {
            let pt = &s.points[p];
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{}\n",
                pt.label, s.model, pt.mean_acc, pt.std_acc, pt.trials
            ));
        }
    }
    out
}

pub fn emit_report(r: &SweepReport, format: ReportFormat, path: &Path) -> Result<()> {
    if r.series.iter().all(|s| s.points.is_empty()) {
        return Err(Error::domain("refusing to write an empty report"));
    }
    let body = match format {
        ReportFormat::Csv => report_csv(r),
        ReportFormat::Json => serde_json::to_string_pretty(r)? + "\n",
    };
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(body.as_bytes()))
        .map_err(|e| Error::io(path, e))
}

pub fn load_report(path: &Path) -> Result<SweepReport> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}
