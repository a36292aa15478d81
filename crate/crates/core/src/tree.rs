//! Binary decision trees with Gaussian node thresholds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::MinMax;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TreeKind {
    #[serde(rename = "DT")]
    Dt,
    #[serde(rename = "BDT")]
    Bdt,
}

impl std::str::FromStr for TreeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dt" => Ok(TreeKind::Dt),
            "bdt" => Ok(TreeKind::Bdt),
            _ => Err(Error::Config(format!("unknown tree kind {s:?} (expected dt or bdt)"))),
        }
    }
}

impl std::fmt::Display for TreeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TreeKind::Dt => "DT",
            TreeKind::Bdt => "BDT",
        })
    }
}

/// Which child a path takes at a node: `Le` is `x <= t`, `Gt` is `x > t`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    #[serde(rename = "le")]
    Le,
    #[serde(rename = "gt")]
    Gt,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Internal {
        feature: usize,
        mu: f64,
        sigma: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        label: usize,
    },
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, TreeNode::Leaf { .. })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Step {
    pub node: usize,
    pub dir: Direction,
}

/// One root-to-leaf path. Paths are enumerated depth-first, `Le` child first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreePath {
    pub id: usize,
    pub steps: Vec<Step>,
    pub leaf: usize,
    pub label: usize,
}

/// A trained tree. Node ids are arena indices, the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<TreeNode>,
    kind: TreeKind,
    depth: usize,
    n_features: usize,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    normalization: Option<MinMax>,
    paths: Vec<TreePath>,
}

impl TreeModel {
    pub fn new(
        nodes: Vec<TreeNode>,
        kind: TreeKind,
        n_features: usize,
        n_classes: usize,
    ) -> Result<Self> {
        let paths = enumerate_paths(&nodes)?;
        for (id, node) in nodes.iter().enumerate() {
            match *node {
                TreeNode::Internal { feature, mu, sigma, .. } => {
                    if feature >= n_features {
                        return Err(Error::domain(format!(
                            "node {id} splits on feature {feature} but the tree has {n_features} features"
                        )));
                    }
                    if !(0.0..=1.0).contains(&mu) {
                        return Err(Error::domain(format!("node {id}: mu {mu} outside [0, 1]")));
                    }
                    if !(sigma >= 0.0 && sigma.is_finite()) {
                        return Err(Error::domain(format!("node {id}: invalid sigma {sigma}")));
                    }
                    if kind == TreeKind::Dt && sigma != 0.0 {
                        return Err(Error::domain(format!(
                            "node {id}: DT trees carry sigma = 0, found {sigma}"
                        )));
                    }
                }
                TreeNode::Leaf { label } => {
                    if label >= n_classes {
                        return Err(Error::domain(format!(
                            "leaf {id}: label {label} outside 0..{n_classes}"
                        )));
                    }
                }
            }
        }
        let depth = paths.iter().map(|p| p.steps.len()).max().unwrap_or(0);
        Ok(TreeModel {
            nodes,
            kind,
            depth,
            n_features,
            n_classes,
            feature_names: None,
            normalization: None,
            paths,
        })
    }

    pub fn with_feature_names(mut self, names: Option<Vec<String>>) -> Self {
        self.feature_names = names;
        self
    }

    pub fn with_normalization(mut self, norm: Option<MinMax>) -> Self {
        self.normalization = norm;
        self
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node(&self, id: usize) -> &TreeNode {
        &self.nodes[id]
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn feature_names(&self) -> Option<&[String]> {
        self.feature_names.as_deref()
    }

    pub fn normalization(&self) -> Option<&MinMax> {
        self.normalization.as_ref()
    }

    pub fn paths(&self) -> &[TreePath] {
        &self.paths
    }

    /// Ids of internal nodes in ascending order. Position in this list is
    /// the node's column in a node-wise array.
    pub fn internal_nodes(&self) -> Vec<usize> {
        (0..self.nodes.len()).filter(|&i| !self.nodes[i].is_leaf()).collect()
    }

    pub fn n_leaves(&self) -> usize {
        self.paths.len()
    }

    /// Distinct features tested anywhere in the tree, ascending.
    pub fn used_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Internal { feature, .. } => Some(*feature),
                TreeNode::Leaf { .. } => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }

    /// Path id ending at each leaf node (`None` for internal nodes).
    pub fn leaf_to_path(&self) -> Vec<Option<usize>> {
        let mut map = vec![None; self.nodes.len()];
        for p in &self.paths {
            map[p.leaf] = Some(p.id);
        }
        map
    }

    /// Returns a copy with every threshold sigma replaced by 0 (the tree
    /// becomes a DT of the same topology).
    pub fn to_deterministic(&self) -> TreeModel {
        let nodes = self
            .nodes
            .iter()
            .map(|n| match *n {
                TreeNode::Internal { feature, mu, left, right, .. } => TreeNode::Internal {
                    feature,
                    mu,
                    sigma: 0.0,
                    left,
                    right,
                },
                ref leaf => leaf.clone(),
            })
            .collect();
        TreeModel {
            nodes,
            kind: TreeKind::Dt,
            ..self.clone()
        }
    }

    /// Random interval-consistent tree for simulation studies: every node's
    /// threshold lies strictly inside the region its ancestors leave open on
    /// that feature. Nodes above `max_depth` become leaves with probability
    /// `leaf_prob` (the root always splits).
    pub fn random<R: Rng>(
        rng: &mut R,
        max_depth: usize,
        n_features: usize,
        n_classes: usize,
        kind: TreeKind,
        leaf_prob: f64,
    ) -> TreeModel {
        fn grow<R: Rng>(
            rng: &mut R,
            nodes: &mut Vec<TreeNode>,
            bounds: &mut [(f64, f64)],
            depth: usize,
            args: (usize, usize, usize, TreeKind, f64),
        ) -> usize {
            let (max_depth, n_features, n_classes, kind, leaf_prob) = args;
            let id = nodes.len();
            let stop = depth == max_depth || (depth > 0 && rng.random_bool(leaf_prob));
            if stop {
                nodes.push(TreeNode::Leaf {
                    label: rng.random_range(0..n_classes),
                });
                return id;
            }
            let feature = rng.random_range(0..n_features);
            let (lo, hi) = bounds[feature];
            let mu = lo + (hi - lo) * rng.random_range(0.05..0.95);
            let sigma = match kind {
                TreeKind::Dt => 0.0,
                TreeKind::Bdt => rng.random_range(0.0..0.2),
            };
            nodes.push(TreeNode::Leaf { label: 0 });
            bounds[feature] = (lo, mu);
            let left = grow(rng, nodes, bounds, depth + 1, args);
            bounds[feature] = (mu, hi);
            let right = grow(rng, nodes, bounds, depth + 1, args);
            bounds[feature] = (lo, hi);
            nodes[id] = TreeNode::Internal { feature, mu, sigma, left, right };
            id
        }

        let mut nodes = Vec::new();
        let mut bounds = vec![(0.0, 1.0); n_features];
        grow(
            rng,
            &mut nodes,
            &mut bounds,
            0,
            (max_depth.max(1), n_features, n_classes, kind, leaf_prob),
        );
        TreeModel::new(nodes, kind, n_features, n_classes).expect("random tree is well formed")
    }
}

fn enumerate_paths(nodes: &[TreeNode]) -> Result<Vec<TreePath>> {
    if nodes.is_empty() {
        return Err(Error::domain("tree has no nodes"));
    }
    let mut visited = vec![false; nodes.len()];
    let mut paths = Vec::new();
    let mut stack: Vec<(usize, Vec<Step>)> = vec![(0, Vec::new())];
    while let Some((id, steps)) = stack.pop() {
        let node = nodes
            .get(id)
            .ok_or_else(|| Error::domain(format!("child reference {id} out of range")))?;
        if std::mem::replace(&mut visited[id], true) {
            return Err(Error::domain(format!("node {id} is reachable twice")));
        }
        match *node {
            TreeNode::Leaf { label } => paths.push(TreePath {
                id: paths.len(),
                steps,
                leaf: id,
                label,
            }),
            TreeNode::Internal { left, right, .. } => {
                let mut r = steps.clone();
                r.push(Step { node: id, dir: Direction::Gt });
                let mut l = steps;
                l.push(Step { node: id, dir: Direction::Le });
                stack.push((right, r));
                stack.push((left, l));
            }
        }
    }
    if let Some(orphan) = visited.iter().position(|v| !v) {
        return Err(Error::domain(format!("node {orphan} is unreachable from the root")));
    }
    Ok(paths)
}

#[derive(Serialize, Deserialize)]
struct NodeRecord {
    id: usize,
    feature: Option<usize>,
    mu: Option<f64>,
    sigma: Option<f64>,
    left: Option<usize>,
    right: Option<usize>,
    label: Option<usize>,
}

#[derive(Serialize, Deserialize)]
struct TreeMetadata {
    kind: TreeKind,
    depth: usize,
    n_features: usize,
    n_classes: usize,
    feature_names: Option<Vec<String>>,
    normalization: Option<MinMax>,
}

#[derive(Serialize, Deserialize)]
struct TreeDocument {
    metadata: TreeMetadata,
    nodes: Vec<NodeRecord>,
}

impl Serialize for TreeModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .map(|(id, n)| match *n {
                TreeNode::Internal { feature, mu, sigma, left, right } => NodeRecord {
                    id,
                    feature: Some(feature),
                    mu: Some(mu),
                    sigma: Some(sigma),
                    left: Some(left),
                    right: Some(right),
                    label: None,
                },
                TreeNode::Leaf { label } => NodeRecord {
                    id,
                    feature: None,
                    mu: None,
                    sigma: None,
                    left: None,
                    right: None,
                    label: Some(label),
                },
            })
            .collect();
        TreeDocument {
            metadata: TreeMetadata {
                kind: self.kind,
                depth: self.depth,
                n_features: self.n_features,
                n_classes: self.n_classes,
                feature_names: self.feature_names.clone(),
                normalization: self.normalization.clone(),
            },
            nodes,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for TreeModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = TreeDocument::deserialize(d)?;
        let mut nodes = Vec::with_capacity(doc.nodes.len());
        for (pos, r) in doc.nodes.into_iter().enumerate() {
            if r.id != pos {
                return Err(D::Error::custom(format!(
                    "node ids must be dense and ordered: found id {} at position {pos}",
                    r.id
                )));
            }
            let node = match (r.feature, r.mu, r.sigma, r.left, r.right, r.label) {
                (Some(feature), Some(mu), Some(sigma), Some(left), Some(right), None) => {
                    TreeNode::Internal { feature, mu, sigma, left, right }
                }
                (None, None, None, None, None, Some(label)) => TreeNode::Leaf { label },
                _ => {
                    return Err(D::Error::custom(format!(
                        "node {pos} is neither a complete internal node nor a leaf"
                    )))
                }
            };
            nodes.push(node);
        }
        let m = doc.metadata;
        let tree = TreeModel::new(nodes, m.kind, m.n_features, m.n_classes)
            .map_err(D::Error::custom)?;
        if tree.depth != m.depth {
            return Err(D::Error::custom(format!(
                "metadata depth {} does not match tree depth {}",
                m.depth, tree.depth
            )));
        }
        Ok(tree
            .with_feature_names(m.feature_names)
            .with_normalization(m.normalization))
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    pub(crate) fn stump(mu: f64, sigma: f64) -> TreeModel {
        TreeModel::new(
            vec![
                TreeNode::Internal { feature: 0, mu, sigma, left: 1, right: 2 },
                TreeNode::Leaf { label: 0 },
                TreeNode::Leaf { label: 1 },
            ],
            if sigma == 0.0 { TreeKind::Dt } else { TreeKind::Bdt },
            1,
            2,
        )
        .unwrap()
    }

    #[test]
    fn stump_paths() {
        let t = stump(0.4, 0.0);
        assert_eq!(t.paths().len(), 2);
        assert_eq!(t.paths()[0].steps, vec![Step { node: 0, dir: Direction::Le }]);
        assert_eq!(t.paths()[1].label, 1);
        assert_eq!(t.depth(), 1);
    }

    #[test]
    fn rejects_malformed_trees() {
        let cyclic = vec![TreeNode::Internal { feature: 0, mu: 0.5, sigma: 0.0, left: 0, right: 0 }];
        assert!(TreeModel::new(cyclic, TreeKind::Dt, 1, 2).is_err());
        let orphan = vec![TreeNode::Leaf { label: 0 }, TreeNode::Leaf { label: 1 }];
        assert!(TreeModel::new(orphan, TreeKind::Dt, 1, 2).is_err());
        assert!(TreeModel::new(stump(0.4, 0.1).nodes().to_vec(), TreeKind::Dt, 1, 2).is_err());
    }

    #[test]
    fn random_trees_enumerate_each_leaf_once() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let t = TreeModel::random(&mut rng, 6, 4, 3, TreeKind::Bdt, 0.2);
            let mut leaves: Vec<usize> = t.paths().iter().map(|p| p.leaf).collect();
            leaves.sort_unstable();
            let expected: Vec<usize> =
                (0..t.nodes().len()).filter(|&i| t.node(i).is_leaf()).collect();
            assert_eq!(leaves, expected);
            assert_eq!(t.internal_nodes().len() + 1, t.n_leaves());
        }
    }

    #[test]
    fn json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let t = TreeModel::random(&mut rng, 4, 3, 2, TreeKind::Bdt, 0.3)
            .with_feature_names(Some(vec!["a".into(), "b".into(), "c".into()]));
        let s = serde_json::to_string(&t).unwrap();
        let back: TreeModel = serde_json::from_str(&s).unwrap();
        assert_eq!(t, back);
    }
}
