//! Classification datasets: WDBC (CSV) and MNIST (IDX), min-max
//! normalization, and test-time Gaussian input corruption.

use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};

pub const WDBC_FEATURES: [&str; 30] = [
    "mean radius",
    "mean texture",
    "mean perimeter",
    "mean area",
    "mean smoothness",
    "mean compactness",
    "mean concavity",
    "mean concave points",
    "mean symmetry",
    "mean fractal dimension",
    "radius error",
    "texture error",
    "perimeter error",
    "area error",
    "smoothness error",
    "compactness error",
    "concavity error",
    "concave points error",
    "symmetry error",
    "fractal dimension error",
    "worst radius",
    "worst texture",
    "worst perimeter",
    "worst area",
    "worst smoothness",
    "worst compactness",
    "worst concavity",
    "worst concave points",
    "worst symmetry",
    "worst fractal dimension",
];

/// Per-feature min-max constants. Values are mapped with
/// `(x - min) / (max - min)` and clipped to `[0, 1]`; a constant column
/// (`min == max`) maps to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMax {
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let n_features = rows.first().map_or(0, Vec::len);
        let mut min = vec![f64::INFINITY; n_features];
        let mut max = vec![f64::NEG_INFINITY; n_features];
        for row in rows {
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        MinMax { min, max }
    }

    pub fn apply(&self, j: usize, v: f64) -> f64 {
        let span = self.max[j] - self.min[j];
        if span <= 0.0 {
            return 0.0;
        }
        ((v - self.min[j]) / span).clamp(0.0, 1.0)
    }

    pub fn invert(&self, j: usize, v: f64) -> f64 {
        self.min[j] + v * (self.max[j] - self.min[j])
    }
}

/// Un-normalized feature rows as read from disk.
#[derive(Debug, Clone)]
pub struct RawTable {
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub feature_names: Option<Vec<String>>,
}

impl RawTable {
    /// Seeded shuffle followed by a head/tail split; the tail gets
    /// `round(test_fraction * n)` samples.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(RawTable, RawTable)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(Error::domain(format!(
                "test fraction must lie in [0, 1), got {test_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..self.rows.len()).collect();
        order.shuffle(&mut seed::rng(Stream::Split, &[seed]));
        let n_test = (test_fraction * self.rows.len() as f64).round() as usize;
        let (train_idx, test_idx) = order.split_at(self.rows.len() - n_test);
        Ok((self.select(train_idx), self.select(test_idx)))
    }

    fn select(&self, idx: &[usize]) -> RawTable {
        RawTable {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
        }
    }

    pub fn normalize(&self, constants: &MinMax) -> Dataset {
        let n_features = constants.min.len();
        let features = self
            .rows
            .iter()
            .flat_map(|row| row.iter().enumerate().map(|(j, &v)| constants.apply(j, v)))
            .collect();
        Dataset {
            features,
            n_features,
            labels: self.labels.clone(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            normalization: Some(constants.clone()),
        }
    }
}

/// Row-major feature matrix with values in `[0, 1]` and dense class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<f64>,
    n_features: usize,
    labels: Vec<usize>,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    normalization: Option<MinMax>,
}

impl Dataset {
    pub fn new(rows: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if rows.len() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} feature rows but {} labels",
                rows.len(),
                labels.len()
            )));
        }
        let n_features = rows.first().map_or(0, Vec::len);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_features {
                return Err(Error::Consistency(format!(
                    "row {i} has {} features, expected {n_features}",
                    row.len()
                )));
            }
            if let Some(j) = row.iter().position(|v| !(0.0..=1.0).contains(v)) {
                return Err(Error::domain(format!(
                    "feature value {} at row {i}, column {j} is outside [0, 1]",
                    row[j]
                )));
            }
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
            return Err(Error::domain(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        Ok(Dataset {
            features: rows.into_iter().flatten().collect(),
            n_features,
            labels,
            n_classes,
            feature_names: None,
            normalization: None,
        })
    }

    pub fn with_feature_names(mut self, names: Vec<String>) -> Self {
        self.feature_names = Some(names);
        self
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.features.chunks_exact(self.n_features.max(1)).take(self.len())
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.n_features + j]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn normalization(&self) -> Option<&MinMax> {
        self.normalization.as_ref()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            features: idx.iter().flat_map(|&i| self.row(i).iter().copied()).collect(),
            n_features: self.n_features,
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            feature_names: self.feature_names.clone(),
            normalization: self.normalization.clone(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }
}

fn parse_wdbc_line(line: &str, row: usize) -> Result<(Vec<f64>, usize)> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() != 32 {
        return Err(Error::Malformed {
            row,
            column: fields.len(),
            message: format!("expected 32 fields, found {}", fields.len()),
        });
    }
    let label = match fields[1] {
        "B" => 0,
        "M" => 1,
        other => {
            return Err(Error::Malformed {
                row,
                column: 1,
                message: format!("diagnosis must be 'M' or 'B', got {other:?}"),
            })
        }
    };
    let features = fields[2..]
        .iter()
        .enumerate()
        .map(|(k, s)| match s.parse::<f64>() {
            Ok(v) if v.is_finite() => Ok(v),
            _ => Err(Error::Malformed {
                row,
                column: k + 2,
                message: format!("non-numeric feature {s:?}"),
            }),
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok((features, label))
}

/// Reads the 32-column WDBC CSV (`id, M|B, 30 features`) without
/// normalizing. Label 0 is benign, 1 is malignant.
pub fn read_wdbc_raw(path: impl AsRef<Path>) -> Result<RawTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (features, label) = parse_wdbc_line(&line, i + 1)?;
        rows.push(features);
        labels.push(label);
    }
    Ok(RawTable {
        rows,
        labels,
        n_classes: 2,
        feature_names: Some(WDBC_FEATURES.iter().map(|s| s.to_string()).collect()),
    })
}

/// Loads WDBC and min-max normalizes every column over the whole file.
pub fn load_wdbc(path: impl AsRef<Path>) -> Result<Dataset> {
    let raw = read_wdbc_raw(path)?;
    let constants = MinMax::fit(&raw.rows);
    Ok(raw.normalize(&constants))
}

/// Loads WDBC, splits it with a seeded shuffle, and normalizes both halves
/// with constants fitted on the training half only.
pub fn load_wdbc_split(
    path: impl AsRef<Path>,
    test_fraction: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    let (train, test) = read_wdbc_raw(path)?.split(test_fraction, seed)?;
    let constants = MinMax::fit(&train.rows);
    Ok((train.normalize(&constants), test.normalize(&constants)))
}

fn read_all(path: &Path) -> Result<Vec<u8>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(bytes.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        return Ok(out);
    }
    Ok(bytes)
}

struct IdxReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl IdxReader<'_> {
    fn u32(&mut self) -> Result<u32> {
        let end = self.pos + 4;
        let chunk = self.bytes.get(self.pos..end).ok_or(Error::Format {
            offset: self.bytes.len() as u64,
            message: "file truncated inside header".into(),
        })?;
        self.pos = end;
        Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
    }

    fn body(&self, len: usize) -> Result<&[u8]> {
        self.bytes.get(self.pos..self.pos + len).ok_or(Error::Format {
            offset: self.bytes.len() as u64,
            message: format!(
                "file truncated: header promises {len} data bytes starting at offset {}",
                self.pos
            ),
        })
    }
}

const IDX_IMAGES: u32 = 0x0000_0803;
const IDX_LABELS: u32 = 0x0000_0801;

/// Loads an IDX image/label pair (optionally gzip-compressed). Pixels are
/// scaled by 1/255. `limit` keeps only the first `limit` samples.
pub fn load_mnist_idx(
    images: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    limit: Option<usize>,
) -> Result<Dataset> {
    let image_bytes = read_all(images.as_ref())?;
    let label_bytes = read_all(labels.as_ref())?;

    let mut img = IdxReader { bytes: &image_bytes, pos: 0 };
    let magic = img.u32()?;
    if magic != IDX_IMAGES {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad image magic {magic:#010x}, expected {IDX_IMAGES:#010x}"),
        });
    }
    let n_images = img.u32()? as usize;
    let n_pixels = img.u32()? as usize * img.u32()? as usize;

    let mut lab = IdxReader { bytes: &label_bytes, pos: 0 };
    let magic = lab.u32()?;
    if magic != IDX_LABELS {
        return Err(Error::Format {
            offset: 0,
            message: format!("bad label magic {magic:#010x}, expected {IDX_LABELS:#010x}"),
        });
    }
    let n_labels = lab.u32()? as usize;
    if n_images != n_labels {
        return Err(Error::Consistency(format!(
            "{n_images} images but {n_labels} labels"
        )));
    }

    let n = limit.map_or(n_images, |l| l.min(n_images));
    let pixels = img.body(n_images * n_pixels)?;
    let label_body = lab.body(n_labels)?;

    let features = pixels[..n * n_pixels]
        .iter()
        .map(|&p| f64::from(p) / 255.0)
        .collect();
    let labels: Vec<usize> = label_body[..n].iter().map(|&y| usize::from(y)).collect();
    if let Some(bad) = labels.iter().find(|&&y| y >= 10) {
        return Err(Error::Format {
            offset: 8,
            message: format!("label {bad} outside 0..10"),
        });
    }
    Ok(Dataset {
        features,
        n_features: n_pixels,
        labels,
        n_classes: 10,
        feature_names: None,
        normalization: None,
    })
}

/// Adds i.i.d. `N(0, sigma^2)` noise to every feature value and clips the
/// result back into `[0, 1]`.
pub fn add_input_noise(d: &Dataset, sigma: f64, seed: u64) -> Result<Dataset> {
    if !(sigma >= 0.0) {
        return Err(Error::domain(format!("noise sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(d.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let mut rng = seed::rng(Stream::InputNoise, &[seed]);
    let features = d
        .features
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 1.0))
        .collect();
    Ok(Dataset {
        features,
        ..d.clone()
    })
}
