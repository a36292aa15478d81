//! Tree-to-ACAM mapping.
//!
//! Every row of an array is one root-to-leaf path. Two column layouts are
//! supported:
//!
//! * **node-wise**: one column per internal node. The node's mean threshold
//!   is programmed once; a row takes `hi = mu` when its path goes left
//!   (`x <= mu`) and `lo = mu` when it goes right (`x > mu`). Rows whose path
//!   skips the node hold a don't-care cell. Threshold sampling happens on the
//!   query side, so the array never needs rewriting.
//! * **feature-wise**: one column per distinct feature. A cell stores the
//!   intersection of every constraint the path places on that feature, so
//!   sampled thresholds force the whole array to be rewritten each iteration.

use std::collections::HashMap;
use std::sync::OnceLock;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::{self, Stream};
use crate::sim::NoiseSpec;
use crate::tree::{Direction, Step, TreeModel, TreeNode};

/// One analog CAM cell: a two-FeFET pair storing a lower and an upper
/// bound. `None` marks a bound left open (its FeFET sits at high V_TH).
/// The cell matches `lo < v <= hi`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AcamCell {
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub dont_care: bool,
}

impl AcamCell {
    pub const DONT_CARE: AcamCell = AcamCell {
        lo: None,
        hi: None,
        dont_care: true,
    };

    /// Matches `v <= t`.
    pub fn upper(t: f64) -> Self {
        AcamCell {
            lo: None,
            hi: Some(t),
            dont_care: false,
        }
    }

    /// Matches `v > t`.
    pub fn lower(t: f64) -> Self {
        AcamCell {
            lo: Some(t),
            hi: None,
            dont_care: false,
        }
    }

    pub fn interval(lo: Option<f64>, hi: Option<f64>) -> Self {
        if lo.is_none() && hi.is_none() {
            return AcamCell::DONT_CARE;
        }
        AcamCell {
            lo,
            hi,
            dont_care: false,
        }
    }

    pub fn matches(&self, v: f64) -> bool {
        self.dont_care
            || (self.lo.is_none_or(|lo| v > lo) && self.hi.is_none_or(|hi| v <= hi))
    }

    fn map_bounds(self, mut f: impl FnMut(f64) -> f64) -> Self {
        if self.dont_care {
            return self;
        }
        AcamCell {
            lo: self.lo.map(&mut f),
            hi: self.hi.map(&mut f),
            dont_care: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    #[serde(rename = "FEATURE_WISE")]
    FeatureWise,
    #[serde(rename = "NODE_WISE")]
    NodeWise,
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Strategy::NodeWise => "node-wise",
            Strategy::FeatureWise => "feature-wise",
        })
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "node-wise" | "node" => Ok(Strategy::NodeWise),
            "feature-wise" | "feature" => Ok(Strategy::FeatureWise),
            _ => Err(Error::Config(format!(
                "unknown mapping strategy {s:?} (expected node-wise or feature-wise)"
            ))),
        }
    }
}

/// Threshold parameters of an internal node. The position of a node in
/// [`AcamArray::nodes`] is its ordinal; GRNG pipelines are indexed by it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeParams {
    pub node_id: usize,
    pub feature: usize,
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowMeta {
    pub path_id: usize,
    pub label: usize,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColumnMeta {
    /// Feature whose value drives this column's search line.
    pub feature: usize,
    /// Node-wise only: ordinal of the node this column holds.
    pub node: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProgramState {
    pub bits: Option<u32>,
    pub write_sigma: f64,
    pub seed: u64,
}

type ActiveRows = Vec<Vec<(usize, AcamCell)>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcamArray {
    strategy: Strategy,
    rows: usize,
    cols: usize,
    cells: Vec<AcamCell>,
    row_meta: Vec<RowMeta>,
    col_meta: Vec<ColumnMeta>,
    query_map: Vec<usize>,
    nodes: Vec<NodeParams>,
    n_features: usize,
    n_classes: usize,
    /// Feature-wise BDT inference rewrites the array every iteration.
    reprogram_per_iteration: bool,
    programmed: Option<ProgramState>,
    #[serde(skip)]
    active: OnceLock<ActiveRows>,
}

impl AcamArray {
    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cell(&self, row: usize, col: usize) -> &AcamCell {
        &self.cells[row * self.cols + col]
    }

    pub fn row_cells(&self, row: usize) -> &[AcamCell] {
        &self.cells[row * self.cols..(row + 1) * self.cols]
    }

    pub fn row_meta(&self) -> &[RowMeta] {
        &self.row_meta
    }

    pub fn col_meta(&self) -> &[ColumnMeta] {
        &self.col_meta
    }

    pub fn query_map(&self) -> &[usize] {
        &self.query_map
    }

    pub fn nodes(&self) -> &[NodeParams] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn reprogram_per_iteration(&self) -> bool {
        self.reprogram_per_iteration
    }

    pub fn programmed(&self) -> Option<&ProgramState> {
        self.programmed.as_ref()
    }

    pub fn row_label(&self, row: usize) -> usize {
        self.row_meta[row].label
    }

    /// Cells that hold at least one bound (everything but don't-care).
    pub fn programmable_cells(&self) -> usize {
        self.cells.iter().filter(|c| !c.dont_care).count()
    }

    /// Non-don't-care cells of each row with their column index.
    pub fn active_cells(&self) -> &ActiveRows {
        self.active.get_or_init(|| {
            (0..self.rows)
                .map(|r| {
                    self.row_cells(r)
                        .iter()
                        .enumerate()
                        .filter(|(_, c)| !c.dont_care)
                        .map(|(j, c)| (j, *c))
                        .collect()
                })
                .collect()
        })
    }

    /// Builds the search query from a feature vector, adding `offsets[c]` to
    /// column `c` when given.
    pub fn query(&self, x: &[f64], offsets: Option<&[f64]>) -> Vec<f64> {
        self.query_map
            .iter()
            .enumerate()
            .map(|(c, &f)| x[f] + offsets.map_or(0.0, |o| o[c]))
            .collect()
    }

    fn with_cells(&self, cells: Vec<AcamCell>, programmed: Option<ProgramState>) -> AcamArray {
        AcamArray {
            cells,
            programmed,
            active: OnceLock::new(),
            ..self.clone()
        }
    }

    /// Copy of this array holding different cell contents (same layout).
    pub fn with_cell_contents(&self, cells: Vec<AcamCell>) -> AcamArray {
        assert_eq!(cells.len(), self.rows * self.cols, "cell count must match the layout");
        self.with_cells(cells, self.programmed)
    }

    /// Reads node-wise rows back into path predicates (root to leaf, by
    /// ascending node id).
    pub fn decode_paths(&self) -> Result<Vec<Vec<Step>>> {
        if self.strategy != Strategy::NodeWise {
            return Err(Error::Usage("only node-wise arrays decode to node predicates".into()));
        }
        (0..self.rows)
            .map(|r| {
                self.row_cells(r)
                    .iter()
                    .zip(&self.col_meta)
                    .filter(|(c, _)| !c.dont_care)
                    .map(|(c, meta)| {
                        let node = self.nodes[meta.node.expect("node-wise column")].node_id;
                        match (c.lo, c.hi) {
                            (None, Some(_)) => Ok(Step { node, dir: Direction::Le }),
                            (Some(_), None) => Ok(Step { node, dir: Direction::Gt }),
                            _ => Err(Error::Mapping(format!(
                                "row {r}: node-wise cell must hold exactly one bound"
                            ))),
                        }
                    })
                    .collect()
            })
            .collect()
    }

    /// Rebuilds feature-wise cells from per-node thresholds (indexed by node
    /// ordinal). Rows whose constraints on some feature leave an empty
    /// interval come back as `None`.
    pub fn feature_wise_cells(&self, thresholds: &[f64]) -> Vec<Option<Vec<AcamCell>>> {
        let ordinal: HashMap<usize, usize> =
            self.nodes.iter().enumerate().map(|(k, n)| (n.node_id, k)).collect();
        let column_of: HashMap<usize, usize> = self
            .col_meta
            .iter()
            .enumerate()
            .map(|(c, m)| (m.feature, c))
            .collect();
        self.row_meta
            .iter()
            .map(|row| {
                let mut bounds = vec![(None::<f64>, None::<f64>); self.cols];
                for s in &row.steps {
                    let k = ordinal[&s.node];
                    let t = thresholds[k];
                    let b = &mut bounds[column_of[&self.nodes[k].feature]];
                    match s.dir {
                        Direction::Le => b.1 = Some(b.1.map_or(t, |h| h.min(t))),
                        Direction::Gt => b.0 = Some(b.0.map_or(t, |l| l.max(t))),
                    }
                }
                bounds
                    .into_iter()
                    .map(|(lo, hi)| match (lo, hi) {
                        (Some(l), Some(h)) if l >= h => None,
                        _ => Some(AcamCell::interval(lo, hi)),
                    })
                    .collect()
            })
            .collect()
    }
}

fn node_params(t: &TreeModel) -> Result<Vec<NodeParams>> {
    let nodes: Vec<NodeParams> = t
        .internal_nodes()
        .into_iter()
        .map(|id| match *t.node(id) {
            TreeNode::Internal { feature, mu, sigma, .. } => NodeParams {
                node_id: id,
                feature,
                mu,
                sigma,
            },
            TreeNode::Leaf { .. } => unreachable!(),
        })
        .collect();
    if nodes.is_empty() {
        return Err(Error::Mapping("tree has no internal node to map".into()));
    }
    Ok(nodes)
}

fn row_meta(t: &TreeModel) -> Vec<RowMeta> {
    t.paths()
        .iter()
        .map(|p| RowMeta {
            path_id: p.id,
            label: p.label,
            steps: p.steps.clone(),
        })
        .collect()
}

/// One column per internal node; rows are the tree's paths in order.
pub fn map_node_wise(t: &TreeModel) -> Result<AcamArray> {
    let nodes = node_params(t)?;
    let ordinal: HashMap<usize, usize> =
        nodes.iter().enumerate().map(|(k, n)| (n.node_id, k)).collect();
    let cols = nodes.len();
    let rows = t.paths().len();
    let mut cells = vec![AcamCell::DONT_CARE; rows * cols];
    for (r, p) in t.paths().iter().enumerate() {
        for s in &p.steps {
            let c = ordinal[&s.node];
            let mu = nodes[c].mu;
            cells[r * cols + c] = match s.dir {
                Direction::Le => AcamCell::upper(mu),
                Direction::Gt => AcamCell::lower(mu),
            };
        }
    }
    Ok(AcamArray {
        strategy: Strategy::NodeWise,
        rows,
        cols,
        cells,
        row_meta: row_meta(t),
        col_meta: (0..cols)
            .map(|c| ColumnMeta {
                feature: nodes[c].feature,
                node: Some(c),
            })
            .collect(),
        query_map: nodes.iter().map(|n| n.feature).collect(),
        nodes,
        n_features: t.n_features(),
        n_classes: t.n_classes(),
        reprogram_per_iteration: false,
        programmed: None,
        active: OnceLock::new(),
    })
}

/// One column per distinct feature used by the tree.
pub fn map_feature_wise(t: &TreeModel) -> Result<AcamArray> {
    let nodes = node_params(t)?;
    let features = t.used_features();
    let mut a = AcamArray {
        strategy: Strategy::FeatureWise,
        rows: t.paths().len(),
        cols: features.len(),
        cells: Vec::new(),
        row_meta: row_meta(t),
        col_meta: features
            .iter()
            .map(|&f| ColumnMeta {
                feature: f,
                node: None,
            })
            .collect(),
        query_map: features.clone(),
        reprogram_per_iteration: nodes.iter().any(|n| n.sigma > 0.0),
        nodes,
        n_features: t.n_features(),
        n_classes: t.n_classes(),
        programmed: None,
        active: OnceLock::new(),
    };
    let means: Vec<f64> = a.nodes.iter().map(|n| n.mu).collect();
    let mut cells = Vec::with_capacity(a.rows * a.cols);
    for (r, row) in a.feature_wise_cells(&means).into_iter().enumerate() {
        let row = row.ok_or_else(|| {
            Error::Mapping(format!(
                "path {} constrains a feature to an empty interval",
                a.row_meta[r].path_id
            ))
        })?;
        cells.extend(row);
    }
    a.cells = cells;
    Ok(a)
}

/// Snaps `v` to the nearest of `2^bits` evenly spaced levels on `[0, 1]`
/// (both endpoints included); halfway values round up.
pub fn quantize(v: f64, bits: u32) -> f64 {
    let steps = ((1u64 << bits) - 1) as f64;
    (v.clamp(0.0, 1.0) * steps + 0.5).floor() / steps
}

fn check_bits(bits: Option<u32>) -> Result<()> {
    match bits {
        Some(b) if !(1..=32).contains(&b) => Err(Error::domain(format!(
            "quantization bits must be in 1..=32, got {b}"
        ))),
        _ => Ok(()),
    }
}

/// Applies write non-idealities to a cell list: quantization to
/// `noise.bits` levels, then additive `N(0, write_sigma^2)` per finite bound.
/// Don't-care cells are left untouched.
pub fn program_cells(cells: &[AcamCell], noise: &NoiseSpec, seed: u64) -> Result<Vec<AcamCell>> {
    check_bits(noise.bits)?;
    if !(noise.write_sigma >= 0.0) {
        return Err(Error::domain(format!("write sigma must be >= 0, got {}", noise.write_sigma)));
    }
    let write = (noise.write_sigma > 0.0)
        .then(|| Normal::new(0.0, noise.write_sigma).expect("validated sigma"));
    let mut rng = seed::rng(Stream::WriteNoise, &[seed]);
    Ok(cells
        .iter()
        .map(|c| {
            c.map_bounds(|v| {
                let q = noise.bits.map_or(v, |b| quantize(v, b));
                match &write {
                    Some(n) => q + n.sample(&mut rng),
                    None => q,
                }
            })
        })
        .collect())
}

/// Programs an array: see [`program_cells`].
pub fn program(a: &AcamArray, noise: &NoiseSpec, seed: u64) -> Result<AcamArray> {
    let cells = program_cells(&a.cells, noise, seed)?;
    Ok(a.with_cells(
        cells,
        Some(ProgramState {
            bits: noise.bits,
            write_sigma: noise.write_sigma,
            seed,
        }),
    ))
}
