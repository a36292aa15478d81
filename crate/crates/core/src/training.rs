//! Greedy top-down training of deterministic (DT) and Bayesian (BDT)
//! decision trees.
//!
//! Both kinds choose the split feature by the largest weighted Gini
//! reduction. A DT node stores the best midpoint threshold. A BDT node
//! instead turns the gains of *all* candidate thresholds of the chosen
//! feature into a probability distribution
//!
//! ```text
//! w(t) = max(dG(t), 0),   p(t) = w(t) / sum w,
//! mu = sum p(t) t,        sigma^2 = sum p(t) (t - mu)^2
//! ```
//!
//! and stores the Gaussian `N(mu, sigma^2)` summarizing it. Training data is
//! partitioned at `mu`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::tree::{TreeKind, TreeModel, TreeNode};

/// Gains at or below this are treated as zero weight. Sums of squared
/// proportions leave residues of order 1e-17 where the exact gain is 0.
pub const GAIN_EPS: f64 = 1e-12;

fn gini_counts(counts: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts
        .iter()
        .map(|&c| {
            let p = c as f64 / n;
            p * p
        })
        .sum::<f64>()
}

fn class_counts(labels: &[usize]) -> Vec<usize> {
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![0; k];
    for &y in labels {
        counts[y] += 1;
    }
    counts
}

/// Gini index `1 - sum_k (n_k / n)^2` of a label multiset.
pub fn gini(labels: &[usize]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::domain("gini of an empty label set"));
    }
    Ok(gini_counts(&class_counts(labels), labels.len()))
}

/// Weighted Gini reduction of splitting at `x <= t` / `x > t`. An empty side
/// contributes nothing.
pub fn impurity_reduction(values: &[f64], labels: &[usize], t: f64) -> Result<f64> {
    if values.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} values but {} labels",
            values.len(),
            labels.len()
        )));
    }
    if values.is_empty() {
        return Err(Error::domain("impurity reduction of an empty node"));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let mut left = vec![0; k];
    let mut right = vec![0; k];
    for (&x, &y) in values.iter().zip(labels) {
        if x <= t {
            left[y] += 1;
        } else {
            right[y] += 1;
        }
    }
    let n_left: usize = left.iter().sum();
    let n_right = values.len() - n_left;
    Ok(split_gain(&class_counts(labels), &left, n_left, &right, n_right))
}

fn split_gain(parent: &[usize], left: &[usize], n_left: usize, right: &[usize], n_right: usize) -> f64 {
    let n = (n_left + n_right) as f64;
    gini_counts(parent, n_left + n_right)
        - n_left as f64 / n * gini_counts(left, n_left)
        - n_right as f64 / n * gini_counts(right, n_right)
}

/// Summary of the gain-weighted distribution over one feature's candidate
/// thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdDistribution {
    pub mu: f64,
    pub sigma: f64,
    /// Candidate with the largest gain (lowest threshold on ties).
    pub best_threshold: f64,
    pub best_gain: f64,
    /// No candidate had positive gain; `mu` is then `best_threshold` and
    /// `sigma` is 0.
    pub flat_gain: bool,
}

/// Candidate thresholds (midpoints of consecutive distinct sorted values)
/// and their gains, ascending by threshold.
pub fn candidate_gains(values: &[f64], labels: &[usize]) -> Result<Vec<(f64, f64)>> {
    if values.len() != labels.len() {
        return Err(Error::domain(format!(
            "{} values but {} labels",
            values.len(),
            labels.len()
        )));
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let k = labels.iter().max().map_or(0, |m| m + 1);
    Ok(sweep(values, labels, &order, k))
}

fn sweep(values: &[f64], labels: &[usize], order: &[usize], k: usize) -> Vec<(f64, f64)> {
    let n = order.len();
    let mut parent = vec![0; k];
    for &i in order {
        parent[labels[i]] += 1;
    }
    let mut left = vec![0; k];
    let mut right = parent.clone();
    let mut out = Vec::new();
    for pos in 0..n.saturating_sub(1) {
        let i = order[pos];
        left[labels[i]] += 1;
        right[labels[i]] -= 1;
        let (a, b) = (values[i], values[order[pos + 1]]);
        if a < b {
            let t = 0.5 * (a + b);
            out.push((t, split_gain(&parent, &left, pos + 1, &right, n - pos - 1)));
        }
    }
    out
}

fn distribution_from_gains(gains: &[(f64, f64)]) -> Option<ThresholdDistribution> {
    let (mut best_threshold, mut best_gain) = *gains.first()?;
    for &(t, g) in &gains[1..] {
        if g > best_gain {
            best_threshold = t;
            best_gain = g;
        }
    }
    let weight = |g: f64| if g > GAIN_EPS { g } else { 0.0 };
    let total: f64 = gains.iter().map(|&(_, g)| weight(g)).sum();
    if total == 0.0 {
        return Some(ThresholdDistribution {
            mu: best_threshold,
            sigma: 0.0,
            best_threshold,
            best_gain,
            flat_gain: true,
        });
    }
    let mu: f64 = gains.iter().map(|&(t, g)| weight(g) / total * t).sum();
    let var: f64 = gains
        .iter()
        .map(|&(t, g)| weight(g) / total * (t - mu) * (t - mu))
        .sum();
    Some(ThresholdDistribution {
        mu,
        sigma: var.max(0.0).sqrt(),
        best_threshold,
        best_gain,
        flat_gain: false,
    })
}

/// Mean and standard deviation of the gain-weighted threshold distribution
/// for one feature. Requires at least two distinct values.
pub fn threshold_distribution(values: &[f64], labels: &[usize]) -> Result<ThresholdDistribution> {
    let gains = candidate_gains(values, labels)?;
    distribution_from_gains(&gains)
        .ok_or_else(|| Error::domain("threshold distribution needs at least two distinct values"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: TreeKind,
    pub max_depth: usize,
    pub min_samples: usize,
    /// Upper clip on BDT node sigma, in normalized units.
    pub sigma_max: f64,
}

impl TrainConfig {
    pub fn new(kind: TreeKind, max_depth: usize) -> Self {
        TrainConfig {
            kind,
            max_depth,
            min_samples: 2,
            sigma_max: 0.2,
        }
    }
}

/// Trains with `min_samples` and the default sigma clip.
pub fn train(d: &Dataset, kind: TreeKind, max_depth: usize, min_samples: usize) -> Result<TreeModel> {
    train_with(
        d,
        &TrainConfig {
            min_samples,
            ..TrainConfig::new(kind, max_depth)
        },
    )
}

struct NodeSplit {
    feature: usize,
    mu: f64,
    sigma: f64,
}

struct Builder<'a> {
    d: &'a Dataset,
    cfg: &'a TrainConfig,
    nodes: Vec<TreeNode>,
}

impl Builder<'_> {
    fn majority(&self, idx: &[usize]) -> usize {
        let mut counts = vec![0usize; self.d.n_classes()];
        for &i in idx {
            counts[self.d.label(i)] += 1;
        }
        // max_by_key keeps the last maximum; scan in reverse for lowest class.
        (0..counts.len()).rev().max_by_key(|&c| counts[c]).unwrap_or(0)
    }

    fn best_split(&self, idx: &[usize]) -> Option<NodeSplit> {
        let labels: Vec<usize> = idx.iter().map(|&i| self.d.label(i)).collect();
        let k = self.d.n_classes();
        let per_feature: Vec<Option<(usize, ThresholdDistribution)>> = (0..self.d.n_features())
            .into_par_iter()
            .map(|f| {
                let values: Vec<f64> = idx.iter().map(|&i| self.d.value(i, f)).collect();
                let mut order: Vec<usize> = (0..values.len()).collect();
                order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
                if values[order[0]] == values[order[order.len() - 1]] {
                    return None;
                }
                let gains = sweep(&values, &labels, &order, k);
                distribution_from_gains(&gains).map(|dist| (f, dist))
            })
            .collect();

        let (feature, dist) = per_feature
            .into_iter()
            .flatten()
            .fold(None::<(usize, ThresholdDistribution)>, |best, cand| match best {
                Some(b) if b.1.best_gain >= cand.1.best_gain => Some(b),
                _ => Some(cand),
            })?;
        if dist.best_gain <= GAIN_EPS {
            return None;
        }
        Some(match self.cfg.kind {
            TreeKind::Dt => NodeSplit {
                feature,
                mu: dist.best_threshold,
                sigma: 0.0,
            },
            TreeKind::Bdt => NodeSplit {
                feature,
                mu: dist.mu,
                sigma: dist.sigma.min(self.cfg.sigma_max),
            },
        })
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let id = self.nodes.len();
        let labels: Vec<usize> = idx.iter().map(|&i| self.d.label(i)).collect();
        let pure = gini_counts(&class_counts(&labels), labels.len()) == 0.0;
        let split = if depth >= self.cfg.max_depth || idx.len() < self.cfg.min_samples || pure {
            None
        } else {
            self.best_split(&idx)
        };
        let Some(NodeSplit { feature, mu, sigma }) = split else {
            let label = self.majority(&idx);
            self.nodes.push(TreeNode::Leaf { label });
            return id;
        };
        let (left_idx, right_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| self.d.value(i, feature) <= mu);
        debug_assert!(!left_idx.is_empty() && !right_idx.is_empty());
        self.nodes.push(TreeNode::Leaf { label: 0 });
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[id] = TreeNode::Internal { feature, mu, sigma, left, right };
        id
    }
}

pub fn train_with(d: &Dataset, cfg: &TrainConfig) -> Result<TreeModel> {
    if d.is_empty() {
        return Err(Error::domain("cannot train on an empty dataset"));
    }
    if cfg.max_depth < 1 {
        return Err(Error::domain("max_depth must be at least 1"));
    }
    if !(cfg.sigma_max >= 0.0) {
        return Err(Error::domain(format!("sigma_max must be >= 0, got {}", cfg.sigma_max)));
    }
    let mut b = Builder {
        d,
        cfg,
        nodes: Vec::new(),
    };
    b.grow((0..d.len()).collect(), 0);
    Ok(TreeModel::new(b.nodes, cfg.kind, d.n_features(), d.n_classes())?
        .with_feature_names(d.feature_names().map(<[String]>::to_vec))
        .with_normalization(d.normalization().cloned()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn gini_examples() {
        assert_eq!(gini(&[0, 0, 0]).unwrap(), 0.0);
        assert_eq!(gini(&[0, 1]).unwrap(), 0.5);
        assert_abs_diff_eq!(gini(&[0, 0, 0, 1]).unwrap(), 0.375, epsilon = 1e-15);
        assert!(gini(&[]).is_err());
    }

    #[test]
    fn impurity_reduction_examples() {
        assert_abs_diff_eq!(
            impurity_reduction(&[0.1, 0.9], &[0, 1], 0.5).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(impurity_reduction(&[0.1, 0.9], &[0, 1], 0.0).unwrap(), 0.0);
        assert_abs_diff_eq!(
            impurity_reduction(&[0.2, 0.4, 0.6, 0.8], &[0, 0, 1, 1], 0.5).unwrap(),
            0.5,
            epsilon = 1e-15
        );
        assert!(impurity_reduction(&[0.1], &[0, 1], 0.5).is_err());
    }

    #[test]
    fn point_mass_distribution() {
        // One candidate (0.3) with positive gain.
        let d = threshold_distribution(&[0.2, 0.4], &[0, 1]).unwrap();
        assert_abs_diff_eq!(d.mu, 0.3, epsilon = 1e-15);
        assert_eq!(d.sigma, 0.0);
        assert!(!d.flat_gain);
    }

    #[test]
    fn two_equal_weight_candidates() {
        // Candidates 0.2 and 0.4; labels A,B,A give equal gains 1/9 each.
        let d = threshold_distribution(&[0.1, 0.3, 0.5], &[0, 1, 0]).unwrap();
        assert_abs_diff_eq!(d.mu, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(d.sigma, 0.1, epsilon = 1e-15);
    }

    #[test]
    fn pure_node_is_flat() {
        let d = threshold_distribution(&[0.1, 0.3, 0.5], &[1, 1, 1]).unwrap();
        assert!(d.flat_gain);
        assert_eq!(d.sigma, 0.0);
        assert_abs_diff_eq!(d.mu, 0.2, epsilon = 1e-15);
    }

    #[test]
    fn constant_feature_rejected() {
        assert!(threshold_distribution(&[0.4, 0.4], &[0, 1]).is_err());
    }

    fn xy(rows: &[(f64, f64, usize)]) -> Dataset {
        Dataset::new(
            rows.iter().map(|&(a, b, _)| vec![a, b]).collect(),
            rows.iter().map(|&(.., y)| y).collect(),
            2,
        )
        .unwrap()
    }

    #[test]
    fn pure_dataset_gives_single_leaf() {
        let d = xy(&[(0.1, 0.2, 1), (0.5, 0.9, 1), (0.7, 0.3, 1)]);
        let t = train(&d, TreeKind::Bdt, 4, 2).unwrap();
        assert_eq!(t.nodes(), &[TreeNode::Leaf { label: 1 }]);
    }

    #[test]
    fn dt_and_bdt_share_topology_rules() {
        let d = xy(&[
            (0.1, 0.9, 0),
            (0.2, 0.1, 0),
            (0.3, 0.8, 1),
            (0.6, 0.2, 1),
            (0.7, 0.7, 1),
            (0.9, 0.3, 0),
        ]);
        let dt = train(&d, TreeKind::Dt, 3, 2).unwrap();
        assert!(dt.nodes().iter().all(|n| match n {
            TreeNode::Internal { sigma, .. } => *sigma == 0.0,
            _ => true,
        }));
        let bdt = train(&d, TreeKind::Bdt, 3, 2).unwrap();
        assert!(bdt.nodes().iter().any(|n| matches!(n, TreeNode::Internal { sigma, .. } if *sigma > 0.0)));
        assert_eq!(train(&d, TreeKind::Dt, 3, 2).unwrap(), dt);
    }

    #[test]
    fn feature_ties_pick_lowest_index() {
        // Both features separate the classes perfectly.
        let d = xy(&[(0.1, 0.1, 0), (0.9, 0.9, 1)]);
        let t = train(&d, TreeKind::Dt, 1, 2).unwrap();
        assert!(matches!(t.node(0), TreeNode::Internal { feature: 0, .. }));
    }

    #[test]
    fn empty_dataset_rejected() {
        let d = Dataset::new(vec![], vec![], 2).unwrap();
        assert!(train(&d, TreeKind::Dt, 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn gini_bounds(labels in prop::collection::vec(0usize..4, 1..40)) {
            let g = gini(&labels).unwrap();
            let k = labels.iter().max().unwrap() + 1;
            prop_assert!(g >= 0.0);
            prop_assert!(g <= 1.0 - 1.0 / k as f64 + 1e-12);
        }

        #[test]
        fn distribution_moments_are_consistent(
            pts in prop::collection::vec((0.0f64..1.0, 0usize..3), 2..30),
        ) {
            let values: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let labels: Vec<usize> = pts.iter().map(|p| p.1).collect();
            let gains = candidate_gains(&values, &labels).unwrap();
            prop_assume!(!gains.is_empty());
            let d = threshold_distribution(&values, &labels).unwrap();
            let w: Vec<f64> = gains.iter().map(|&(_, g)| if g > GAIN_EPS { g } else { 0.0 }).collect();
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                let psum: f64 = w.iter().map(|x| x / total).sum();
                prop_assert!((psum - 1.0).abs() < 1e-12);
                let positive = w.iter().filter(|&&x| x > 0.0).count();
                prop_assert_eq!(d.sigma == 0.0, positive == 1);
            } else {
                prop_assert!(d.flat_gain);
            }
            prop_assert!(d.sigma >= 0.0);
            let lo = gains.first().unwrap().0;
            let hi = gains.last().unwrap().0;
            prop_assert!(d.mu >= lo - 1e-12 && d.mu <= hi + 1e-12);
        }
    }
}
