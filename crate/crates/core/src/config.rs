//! TOML run configuration shared by the CLI subcommands.
//!
//! Every section and key is optional. Relative data paths resolve against
//! the directory holding the config file.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! dataset = "wdbc"            # or "mnist"
//! wdbc = "data/wdbc.data"
//! wdbc_test_fraction = 0.25
//! mnist_train_limit = 2000
//! mnist_test_limit = 1000
//!
//! [train]
//! kind = "BDT"
//! max_depth = 2
//!
//! [noise]
//! read_sigma = 0.1
//! bits = 2
//!
//! [inference]
//! n_iter = 100
//! strategy = "NODE_WISE"
//!
//! [sweep]
//! axis = "DEVICE_NOISE"
//! values = [0.0, 0.05, 0.1, 0.2]
//! models = [{ kind = "DT", max_depth = 8 }, { kind = "BDT", max_depth = 8 }]
//! trials = 5
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{load_mnist_idx, load_wdbc_split, Dataset};
use crate::error::{Error, Result};
use crate::experiments::cost::CostModel;
use crate::experiments::sweep::{Axis, ModelSpec, SweepSpec};
use crate::grng::GrngConfig;
use crate::inference::DEFAULT_N_ITER;
use crate::mapping::Strategy;
use crate::sim::{CellIvModel, NoiseSpec};
use crate::training::TrainConfig;
use crate::tree::TreeKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Wdbc,
    Mnist,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub dataset: DatasetKind,
    pub wdbc: PathBuf,
    pub wdbc_test_fraction: f64,
    pub mnist_train_images: PathBuf,
    pub mnist_train_labels: PathBuf,
    pub mnist_test_images: PathBuf,
    pub mnist_test_labels: PathBuf,
    pub mnist_train_limit: Option<usize>,
    pub mnist_test_limit: Option<usize>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            dataset: DatasetKind::Wdbc,
            wdbc: "data/wdbc.data".into(),
            wdbc_test_fraction: 0.25,
            mnist_train_images: "data/train-images-idx3-ubyte.gz".into(),
            mnist_train_labels: "data/train-labels-idx1-ubyte.gz".into(),
            mnist_test_images: "data/t10k-images-idx3-ubyte.gz".into(),
            mnist_test_labels: "data/t10k-labels-idx1-ubyte.gz".into(),
            mnist_train_limit: Some(2000),
            mnist_test_limit: Some(1000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub kind: TreeKind,
    pub max_depth: usize,
    pub min_samples: usize,
    pub sigma_max: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::new(TreeKind::Bdt, 2);
        TrainSection {
            kind: d.kind,
            max_depth: d.max_depth,
            min_samples: d.min_samples,
            sigma_max: d.sigma_max,
        }
    }
}

impl TrainSection {
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            kind: self.kind,
            max_depth: self.max_depth,
            min_samples: self.min_samples,
            sigma_max: self.sigma_max,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceSection {
    pub n_iter: usize,
    pub strategy: Strategy,
}

impl Default for InferenceSection {
    fn default() -> Self {
        InferenceSection {
            n_iter: DEFAULT_N_ITER,
            strategy: Strategy::NodeWise,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    pub axis: Axis,
    /// Axis grid; omitted means the axis default. Use `inf` for
    /// unquantized on the BITS axis.
    pub values: Option<Vec<f64>>,
    pub models: Vec<ModelSpec>,
    pub trials: usize,
    /// Falls back to `inference.n_iter`.
    pub n_iter: Option<usize>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            axis: Axis::DeviceNoise,
            values: None,
            models: vec![
                ModelSpec { kind: TreeKind::Dt, max_depth: 8 },
                ModelSpec { kind: TreeKind::Bdt, max_depth: 8 },
            ],
            trials: 5,
            n_iter: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostSection {
    pub n_iter: usize,
    /// Per-operation costs; omitted means the calibrated defaults.
    pub model: Option<CostModel>,
}

impl Default for CostSection {
    fn default() -> Self {
        CostSection {
            n_iter: DEFAULT_N_ITER,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub data: DataSection,
    pub train: TrainSection,
    pub noise: NoiseSpec,
    pub inference: InferenceSection,
    pub grng: GrngConfig,
    pub iv_model: CellIvModel,
    pub sweep: SweepSection,
    pub cost: CostSection,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Config> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    /// Reads a config file and rebases its relative data paths onto the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Config::from_toml(&text)?;
        if let Some(dir) = path.parent() {
            c.data.rebase(dir);
        }
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |r: Result<()>| r.map_err(|e| Error::Config(e.to_string()));
        wrap(self.noise.validate())?;
        wrap(self.iv_model.validate())?;
        if let Some(m) = &self.cost.model {
            m.validate()?;
        }
        if !(self.data.wdbc_test_fraction > 0.0 && self.data.wdbc_test_fraction < 1.0) {
            return Err(Error::Config("data.wdbc_test_fraction must be in (0, 1)".into()));
        }
        if self.inference.n_iter == 0 || self.cost.n_iter == 0 {
            return Err(Error::Config("n_iter must be at least 1".into()));
        }
        if self.train.max_depth == 0 {
            return Err(Error::Config("train.max_depth must be at least 1".into()));
        }
        Ok(())
    }

    pub fn cost_model(&self) -> CostModel {
        self.cost.model.unwrap_or_default()
    }

    /// Train and test splits of the configured dataset.
    pub fn load_data(&self) -> Result<(Dataset, Dataset)> {
        let d = &self.data;
        match d.dataset {
            DatasetKind::Wdbc => load_wdbc_split(&d.wdbc, d.wdbc_test_fraction, self.seed),
            DatasetKind::Mnist => Ok((
                load_mnist_idx(&d.mnist_train_images, &d.mnist_train_labels, d.mnist_train_limit)?,
                load_mnist_idx(&d.mnist_test_images, &d.mnist_test_labels, d.mnist_test_limit)?,
            )),
        }
    }

    pub fn sweep_spec(&self) -> SweepSpec {
        let s = &self.sweep;
        SweepSpec {
            n_iter: s.n_iter.unwrap_or(self.inference.n_iter),
            trials: s.trials,
            seed: self.seed,
            base_noise: self.noise,
            min_samples: self.train.min_samples,
            sigma_max: self.train.sigma_max,
            iv: self.iv_model,
            grng: self.grng,
            ..SweepSpec::new(
                s.axis,
                s.values.clone().unwrap_or_else(|| s.axis.default_values()),
                s.models.clone(),
            )
        }
    }
}

impl DataSection {
    fn rebase(&mut self, dir: &Path) {
        for p in [
            &mut self.wdbc,
            &mut self.mnist_train_images,
            &mut self.mnist_train_labels,
            &mut self.mnist_test_images,
            &mut self.mnist_test_labels,
        ] {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
    }
}
