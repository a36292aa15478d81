//! Sampling-based inference on mapped arrays, plus a software traversal
//! reference.
//!
//! Each iteration draws one perturbation `eps_k` per internal node from that
//! node's GRNG pipeline. Node-wise arrays add it to the column query
//! (`x' = x + eps`); feature-wise arrays instead rewrite their cells with
//! thresholds `mu - eps` and search with the raw `x`. Both realize the same
//! predicate `x + eps <= mu`, so given the same draws they select the same
//! row. Because `eps` is symmetric about zero this is also distributed like
//! sampling `t ~ N(mu, sigma^2)` and testing `x <= t`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::grng::{GrngConfig, GrngPipeline};
use crate::mapping::{program_cells, AcamArray, Strategy};
use crate::seed::{self, Stream};
use crate::sim::{row_currents, CellIvModel, NoiseSpec};
use crate::tree::{Direction, TreeModel, TreeNode};

pub const DEFAULT_N_ITER: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceOptions {
    pub n_iter: usize,
    pub noise: NoiseSpec,
    pub iv: CellIvModel,
    /// Record the matched row of every iteration.
    pub trace: bool,
}

impl Default for InferenceOptions {
    fn default() -> Self {
        InferenceOptions {
            n_iter: DEFAULT_N_ITER,
            noise: NoiseSpec::default(),
            iv: CellIvModel::default(),
            trace: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferenceResult {
    /// Wins per row (or per path for software inference).
    pub visit_counts: Vec<usize>,
    /// Iterations in which no row could match (feature-wise only).
    pub no_match: usize,
    pub predicted: usize,
    /// Fraction of iterations that landed on a row of the predicted class.
    pub confidence: f64,
    pub n_iter: usize,
    pub per_iter_rows: Option<Vec<Option<usize>>>,
}

impl InferenceResult {
    fn from_rows(rows: &[Option<usize>], labels: &[usize], n_classes: usize, trace: bool) -> Self {
        let mut visit_counts = vec![0; labels.len()];
        let mut votes = vec![0usize; n_classes];
        let mut no_match = 0;
        for r in rows {
            match *r {
                Some(r) => {
                    visit_counts[r] += 1;
                    votes[labels[r]] += 1;
                }
                None => no_match += 1,
            }
        }
        let predicted = (0..n_classes).rev().max_by_key(|&c| votes[c]).unwrap_or(0);
        let n_iter = rows.len();
        InferenceResult {
            visit_counts,
            no_match,
            predicted,
            confidence: votes.get(predicted).copied().unwrap_or(0) as f64 / n_iter as f64,
            n_iter,
            per_iter_rows: trace.then(|| rows.to_vec()),
        }
    }

    /// Summed visits per class.
    pub fn class_votes(&self, labels: &[usize], n_classes: usize) -> Vec<usize> {
        let mut votes = vec![0; n_classes];
        for (r, &v) in self.visit_counts.iter().enumerate() {
            votes[labels[r]] += v;
        }
        votes
    }
}

/// One pipeline per internal node (array node ordinal), each scaled to that
/// node's sigma.
pub fn pipelines_for(a: &AcamArray, cfg: &GrngConfig) -> Result<Vec<GrngPipeline>> {
    a.nodes().iter().map(|n| GrngPipeline::new(cfg, n.sigma)).collect()
}

/// Same as [`pipelines_for`], keyed by the tree's internal nodes in id order.
pub fn tree_pipelines(t: &TreeModel, cfg: &GrngConfig) -> Result<Vec<GrngPipeline>> {
    t.internal_nodes()
        .into_iter()
        .map(|id| match *t.node(id) {
            TreeNode::Internal { sigma, .. } => GrngPipeline::new(cfg, sigma),
            TreeNode::Leaf { .. } => unreachable!(),
        })
        .collect()
}

/// Per-node perturbations for one iteration. Pipeline `k` draws from its
/// own stream derived from `(seed, iteration, k)`.
pub fn draw_epsilons(pipelines: &[GrngPipeline], seed: u64, iteration: usize) -> Vec<f64> {
    pipelines
        .iter()
        .enumerate()
        .map(|(k, p)| {
            if p.sigma_target() == 0.0 {
                return 0.0;
            }
            p.sample_epsilon(&mut seed::rng(Stream::Epsilon, &[seed, iteration as u64, k as u64]))
        })
        .collect()
}

fn read_noise_rng(seed: u64, iteration: usize) -> rand_chacha::ChaCha8Rng {
    seed::rng(Stream::ReadNoise, &[seed, iteration as u64])
}

fn check_inputs(a: &AcamArray, x: &[f64], opts: &InferenceOptions, pipelines: &[GrngPipeline]) -> Result<()> {
    if opts.n_iter < 1 {
        return Err(Error::domain("n_iter must be at least 1"));
    }
    if x.len() != a.n_features() {
        return Err(Error::domain(format!(
            "sample has {} features, array expects {}",
            x.len(),
            a.n_features()
        )));
    }
    if pipelines.len() != a.nodes().len() {
        return Err(Error::domain(format!(
            "{} pipelines for {} nodes",
            pipelines.len(),
            a.nodes().len()
        )));
    }
    opts.noise.validate()
}

fn row_labels(a: &AcamArray) -> Vec<usize> {
    a.row_meta().iter().map(|r| r.label).collect()
}

/// Node-wise inference: the array is never rewritten.
pub fn infer_acam(
    a: &AcamArray,
    x: &[f64],
    opts: &InferenceOptions,
    pipelines: &[GrngPipeline],
    seed: u64,
) -> Result<InferenceResult> {
    if a.strategy() != Strategy::NodeWise {
        return Err(Error::Usage(
            "feature-wise arrays need per-iteration reprogramming; use infer_feature_wise".into(),
        ));
    }
    check_inputs(a, x, opts, pipelines)?;
    let rows: Vec<Option<usize>> = (0..opts.n_iter)
        .map(|i| {
            let eps = draw_epsilons(pipelines, seed, i);
            let q = a.query(x, Some(&eps));
            row_currents(a, &q, &opts.noise, &opts.iv, &mut read_noise_rng(seed, i), None).1
        })
        .collect();
    Ok(InferenceResult::from_rows(&rows, &row_labels(a), a.n_classes(), opts.trace))
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ReprogramStats {
    pub writes: usize,
    /// Row-iterations whose sampled thresholds left an empty interval.
    pub empty_rows: usize,
}

/// Feature-wise inference: every iteration rewrites all programmable cells
/// from freshly sampled thresholds and then searches the unperturbed `x`.
pub fn infer_feature_wise(
    a: &AcamArray,
    x: &[f64],
    opts: &InferenceOptions,
    pipelines: &[GrngPipeline],
    seed: u64,
) -> Result<(InferenceResult, ReprogramStats)> {
    if a.strategy() != Strategy::FeatureWise {
        return Err(Error::Usage("infer_feature_wise needs a feature-wise array".into()));
    }
    check_inputs(a, x, opts, pipelines)?;
    let writes_per_iter = a.programmable_cells();
    let q = a.query(x, None);
    let mut stats = ReprogramStats::default();
    let mut rows = Vec::with_capacity(opts.n_iter);
    for i in 0..opts.n_iter {
        let eps = draw_epsilons(pipelines, seed, i);
        let thresholds: Vec<f64> = a.nodes().iter().zip(&eps).map(|(n, e)| n.mu - e).collect();
        let derived = a.feature_wise_cells(&thresholds);
        let enabled: Vec<bool> = derived.iter().map(Option::is_some).collect();
        stats.empty_rows += enabled.iter().filter(|e| !**e).count();
        let flat: Vec<_> = derived
            .into_iter()
            .flat_map(|r| r.unwrap_or_else(|| vec![crate::mapping::AcamCell::DONT_CARE; a.cols()]))
            .collect();
        let write_seed = seed::derive(Stream::WriteNoise, &[seed, i as u64]);
        let cells = program_cells(&flat, &opts.noise, write_seed)?;
        let iteration_array = a.with_cell_contents(cells);
        stats.writes += writes_per_iter;
        let (_, best) = row_currents(
            &iteration_array,
            &q,
            &opts.noise,
            &opts.iv,
            &mut read_noise_rng(seed, i),
            Some(&enabled),
        );
        rows.push(best);
    }
    Ok((
        InferenceResult::from_rows(&rows, &row_labels(a), a.n_classes(), opts.trace),
        stats,
    ))
}

/// Walks the tree testing `x[f] + eps[node] <= mu` at each node (the same
/// floating-point expression the node-wise array evaluates) and returns the
/// reached path id. `eps` is indexed by node id.
pub fn traverse_software(t: &TreeModel, x: &[f64], eps: &[f64]) -> usize {
    let leaf_path = t.leaf_to_path();
    let mut id = 0;
    loop {
        match *t.node(id) {
            TreeNode::Internal { feature, mu, left, right, .. } => {
                id = if x[feature] + eps.get(id).copied().unwrap_or(0.0) <= mu { left } else { right };
            }
            TreeNode::Leaf { .. } => return leaf_path[id].expect("leaf has a path"),
        }
    }
}

/// Exact probability of reaching each path when node `k` compares
/// `x + eps` with `mu`, `eps ~ N(0, sigma_k^2)`. Zero-sigma nodes are
/// deterministic.
pub fn path_probabilities(t: &TreeModel, x: &[f64]) -> Vec<f64> {
    let std_normal = Normal::standard();
    t.paths()
        .iter()
        .map(|p| {
            p.steps
                .iter()
                .map(|s| {
                    let TreeNode::Internal { feature, mu, sigma, .. } = *t.node(s.node) else {
                        unreachable!("path steps are internal nodes")
                    };
                    let le = if sigma > 0.0 {
                        std_normal.cdf((mu - x[feature]) / sigma)
                    } else {
                        f64::from(u8::from(x[feature] <= mu))
                    };
                    match s.dir {
                        Direction::Le => le,
                        Direction::Gt => 1.0 - le,
                    }
                })
                .product()
        })
        .collect()
}

/// Sampling inference in software (no array, no device effects).
pub fn infer_software(
    t: &TreeModel,
    x: &[f64],
    n_iter: usize,
    pipelines: &[GrngPipeline],
    seed: u64,
    trace: bool,
) -> Result<InferenceResult> {
    if n_iter < 1 {
        return Err(Error::domain("n_iter must be at least 1"));
    }
    let internal = t.internal_nodes();
    if pipelines.len() != internal.len() {
        return Err(Error::domain(format!(
            "{} pipelines for {} internal nodes",
            pipelines.len(),
            internal.len()
        )));
    }
    let mut eps_by_id = vec![0.0; t.nodes().len()];
    let rows: Vec<Option<usize>> = (0..n_iter)
        .map(|i| {
            for (k, e) in draw_epsilons(pipelines, seed, i).into_iter().enumerate() {
                eps_by_id[internal[k]] = e;
            }
            Some(traverse_software(t, x, &eps_by_id))
        })
        .collect();
    let labels: Vec<usize> = t.paths().iter().map(|p| p.label).collect();
    Ok(InferenceResult::from_rows(&rows, &labels, t.n_classes(), trace))
}

#[derive(Debug, Clone, Copy)]
pub enum Predictor<'a> {
    Software(&'a TreeModel),
    Array(&'a AcamArray),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchResult {
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub results: Vec<InferenceResult>,
    /// Total cell writes (feature-wise arrays only).
    pub writes: usize,
}

/// Runs inference on every sample in parallel; sample `s` uses the seed
/// derived from `(seed, s)`.
pub fn predict_batch(
    model: Predictor<'_>,
    d: &Dataset,
    opts: &InferenceOptions,
    pipelines: &[GrngPipeline],
    seed: u64,
) -> Result<BatchResult> {
    if d.is_empty() {
        return Err(Error::domain("accuracy is undefined on an empty dataset"));
    }
    let outcomes: Vec<(InferenceResult, usize)> = (0..d.len())
        .into_par_iter()
        .map(|s| {
            let sample_seed = seed::derive(Stream::Sweep, &[seed, s as u64]);
            let x = d.row(s);
            match model {
                Predictor::Software(t) => {
                    infer_software(t, x, opts.n_iter, pipelines, sample_seed, opts.trace).map(|r| (r, 0))
                }
                Predictor::Array(a) => match a.strategy() {
                    Strategy::NodeWise => infer_acam(a, x, opts, pipelines, sample_seed).map(|r| (r, 0)),
                    Strategy::FeatureWise => infer_feature_wise(a, x, opts, pipelines, sample_seed)
                        .map(|(r, st)| (r, st.writes)),
                },
            }
        })
        .collect::<Result<_>>()?;
    let correct = outcomes
        .iter()
        .enumerate()
        .filter(|(s, (r, _))| r.predicted == d.label(*s))
        .count();
    let n = d.len() as f64;
    Ok(BatchResult {
        accuracy: correct as f64 / n,
        mean_confidence: outcomes.iter().map(|(r, _)| r.confidence).sum::<f64>() / n,
        writes: outcomes.iter().map(|(_, w)| w).sum(),
        results: outcomes.into_iter().map(|(r, _)| r).collect(),
    })
}
