use serde::{Deserialize, Serialize};

use super::ForestHyper;
use crate::kernels::{sample_gamma, sample_std_normal, RngStream};

/// Logistic gate `1 / (1 + exp(-(x - cut) / bandwidth))`: the probability of
/// routing right at a branch.
#[inline]
pub fn gate(x: f64, cut: f64, bandwidth: f64) -> f64 {
    1.0 / (1.0 + (-(x - cut) / bandwidth).exp())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        mu: f64,
    },
    Branch {
        coord: usize,
        cut: f64,
        left: usize,
        right: usize,
    },
}

/// A soft decision tree with one shared bandwidth. `nodes[0]` is the root.
///
/// Inputs have coordinate 0 = scaled time and coordinates 1..=p = scaled
/// covariates; every cutpoint lies in [0, 1]. Leaves are numbered in
/// left-first depth-first order, which is the order used by
/// [`SoftTree::leaf_weights`] and [`SoftTree::leaf_values`]. Equality compares
/// the tree structure, not the node storage order.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SoftTree {
    nodes: Vec<Node>,
    bandwidth: f64,
}

impl SoftTree {
    pub fn stump(mu: f64, bandwidth: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { mu }],
            bandwidth,
        }
    }

    /// Builds a tree from a node arena. Returns `None` unless the nodes form a
    /// proper binary tree rooted at index 0 with cutpoints in [0, 1].
    pub fn from_nodes(nodes: Vec<Node>, bandwidth: f64) -> Option<Self> {
        if nodes.is_empty() || !(bandwidth > 0.0) {
            return None;
        }
        let mut seen = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= nodes.len() || seen[i] {
                return None;
            }
            seen[i] = true;
            if let Node::Branch { cut, left, right, .. } = nodes[i] {
                if !(0.0..=1.0).contains(&cut) {
                    return None;
                }
                stack.push(right);
                stack.push(left);
            }
        }
        if seen.iter().any(|s| !s) {
            return None;
        }
        Some(Self { nodes, bandwidth })
    }

    /// Builds a tree from a preorder node listing (children follow their parent,
    /// left subtree first).
    pub fn from_preorder(preorder: &[PreorderNode], bandwidth: f64) -> Option<Self> {
        fn build(
            items: &[PreorderNode],
            pos: &mut usize,
            nodes: &mut Vec<Node>,
        ) -> Option<usize> {
            let item = *items.get(*pos)?;
            *pos += 1;
            let idx = nodes.len();
            match item {
                PreorderNode::Leaf(mu) => nodes.push(Node::Leaf { mu }),
                PreorderNode::Branch(coord, cut) => {
                    nodes.push(Node::Leaf { mu: 0.0 });
                    let left = build(items, pos, nodes)?;
                    let right = build(items, pos, nodes)?;
                    nodes[idx] = Node::Branch {
                        coord,
                        cut,
                        left,
                        right,
                    };
                }
            }
            Some(idx)
        }
        let mut nodes = Vec::with_capacity(preorder.len());
        let mut pos = 0;
        build(preorder, &mut pos, &mut nodes)?;
        if pos != preorder.len() {
            return None;
        }
        Self::from_nodes(nodes, bandwidth)
    }

    pub fn preorder(&self) -> Vec<PreorderNode> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { mu } => out.push(PreorderNode::Leaf(mu)),
                Node::Branch {
                    coord,
                    cut,
                    left,
                    right,
                } => {
                    out.push(PreorderNode::Branch(coord, cut));
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn set_bandwidth(&mut self, bandwidth: f64) {
        debug_assert!(bandwidth > 0.0);
        self.bandwidth = bandwidth;
    }

    /// Leaf node indices (left-first DFS) paired with their depth.
    pub fn leaves(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { .. } => out.push((i, d)),
                Node::Branch { left, right, .. } => {
                    stack.push((right, d + 1));
                    stack.push((left, d + 1));
                }
            }
        }
        out
    }

    /// Branch node indices paired with their depth.
    pub fn branches(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut stack = vec![(0usize, 0usize)];
        while let Some((i, d)) = stack.pop() {
            if let Node::Branch { left, right, .. } = self.nodes[i] {
                out.push((i, d));
                stack.push((right, d + 1));
                stack.push((left, d + 1));
            }
        }
        out
    }

    /// Branches whose two children are both leaves (the prunable set).
    pub fn prunable(&self) -> Vec<(usize, usize)> {
        self.branches()
            .into_iter()
            .filter(|&(i, _)| match self.nodes[i] {
                Node::Branch { left, right, .. } => {
                    matches!(self.nodes[left], Node::Leaf { .. })
                        && matches!(self.nodes[right], Node::Leaf { .. })
                }
                Node::Leaf { .. } => false,
            })
            .collect()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn depth(&self) -> usize {
        self.leaves().iter().map(|&(_, d)| d).max().unwrap_or(0)
    }

    pub fn leaf_values(&self) -> Vec<f64> {
        self.leaves()
            .into_iter()
            .map(|(i, _)| match self.nodes[i] {
                Node::Leaf { mu } => mu,
                Node::Branch { .. } => unreachable!(),
            })
            .collect()
    }

    /// Assigns leaf means in left-first DFS order.
    pub fn set_leaf_values(&mut self, values: &[f64]) {
        let leaves = self.leaves();
        assert_eq!(leaves.len(), values.len(), "leaf count mismatch");
        for ((i, _), &v) in leaves.into_iter().zip(values) {
            self.nodes[i] = Node::Leaf { mu: v };
        }
    }

    /// Routing probabilities of `input` over the leaves, written into `out`.
    pub fn leaf_weights_into(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        let mut stack: Vec<(usize, f64)> = Vec::with_capacity(16);
        stack.push((0, 1.0));
        while let Some((i, w)) = stack.pop() {
            match self.nodes[i] {
                Node::Leaf { .. } => out.push(w),
                Node::Branch {
                    coord,
                    cut,
                    left,
                    right,
                } => {
                    let g = gate(input[coord], cut, self.bandwidth);
                    stack.push((right, w * g));
                    stack.push((left, w * (1.0 - g)));
                }
            }
        }
    }

    pub fn leaf_weights(&self, input: &[f64]) -> Vec<f64> {
        let mut out = Vec::new();
        self.leaf_weights_into(input, &mut out);
        out
    }

    /// `g(input) = sum over leaves of weight * mean`.
    pub fn evaluate(&self, input: &[f64]) -> f64 {
        fn walk(nodes: &[Node], i: usize, input: &[f64], bw: f64) -> f64 {
            match nodes[i] {
                Node::Leaf { mu } => mu,
                Node::Branch {
                    coord,
                    cut,
                    left,
                    right,
                } => {
                    let g = gate(input[coord], cut, bw);
                    (1.0 - g) * walk(nodes, left, input, bw) + g * walk(nodes, right, input, bw)
                }
            }
        }
        walk(&self.nodes, 0, input, self.bandwidth)
    }

    /// Hard-threshold evaluation (`x[coord] <= cut` goes left).
    pub fn evaluate_hard(&self, input: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { mu } => return mu,
                Node::Branch {
                    coord,
                    cut,
                    left,
                    right,
                } => i = if input[coord] <= cut { left } else { right },
            }
        }
    }

    /// Turns the leaf at `leaf` into a branch with two zero-mean leaves.
    pub(crate) fn grow(&mut self, leaf: usize, coord: usize, cut: f64) {
        debug_assert!(matches!(self.nodes[leaf], Node::Leaf { .. }));
        let left = self.nodes.len();
        self.nodes.push(Node::Leaf { mu: 0.0 });
        self.nodes.push(Node::Leaf { mu: 0.0 });
        self.nodes[leaf] = Node::Branch {
            coord,
            cut,
            left,
            right: left + 1,
        };
    }

    /// Collapses a prunable branch into a leaf and compacts the arena.
    pub(crate) fn prune(&mut self, branch: usize) {
        self.nodes[branch] = Node::Leaf { mu: 0.0 };
        self.compact();
    }

    pub(crate) fn set_rule(&mut self, branch: usize, new_coord: usize, new_cut: f64) {
        if let Node::Branch {
            ref mut coord,
            ref mut cut,
            ..
        } = self.nodes[branch]
        {
            *coord = new_coord;
            *cut = new_cut;
        }
    }

    fn compact(&mut self) {
        let pre = self.preorder();
        *self = Self::from_preorder(&pre, self.bandwidth).expect("compaction keeps a valid tree");
    }
}

impl PartialEq for SoftTree {
    fn eq(&self, other: &Self) -> bool {
        self.bandwidth == other.bandwidth && self.preorder() == other.preorder()
    }
}

/// Flat preorder encoding of a node, used by the draw store.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum PreorderNode {
    Leaf(f64),
    Branch(usize, f64),
}

/// Probability that a node at `depth` is a branch: `gamma * (1 + depth)^-beta`.
#[inline]
pub fn branch_probability(hyper: &ForestHyper, depth: usize) -> f64 {
    hyper.gamma * (1.0 + depth as f64).powf(-hyper.beta)
}

/// Draws a tree from the branching-process prior. `dim` is the input
/// dimension (time plus covariates).
pub fn sample_tree_prior(hyper: &ForestHyper, dim: usize, rng: &mut RngStream) -> SoftTree {
    let bandwidth = sample_gamma(1.0, hyper.bandwidth_rate, rng).expect("positive bandwidth rate");
    let sigma = hyper.sigma_mu;
    let mut tree = SoftTree::stump(0.0, bandwidth);
    // (node, depth) pending a branch/leaf decision, processed in creation order
    let mut pending = vec![(0usize, 0usize)];
    let mut k = 0;
    while k < pending.len() {
        let (i, d) = pending[k];
        k += 1;
        if rng.uniform() < branch_probability(hyper, d) {
            let coord = rng.index(dim);
            let cut = rng.uniform();
            let left = tree.nodes.len();
            tree.grow(i, coord, cut);
            pending.push((left, d + 1));
            pending.push((left + 1, d + 1));
        }
    }
    let values: Vec<f64> = (0..tree.leaf_count())
        .map(|_| sigma * sample_std_normal(rng))
        .collect();
    tree.set_leaf_values(&values);
    tree
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn one_split(cut: f64, bw: f64, lo: f64, hi: f64) -> SoftTree {
        SoftTree::from_nodes(
            vec![
                Node::Branch {
                    coord: 0,
                    cut,
                    left: 1,
                    right: 2,
                },
                Node::Leaf { mu: lo },
                Node::Leaf { mu: hi },
            ],
            bw,
        )
        .unwrap()
    }

    #[test]
    fn gate_values() {
        assert_eq!(gate(0.3, 0.3, 0.05), 0.5);
        assert!((gate(0.7, 0.5, 0.1) - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-15);
        assert!((gate(0.7, 0.5, 0.1) - 0.880797).abs() < 1e-6);
        // hard-threshold limit
        let bw = 1e-3;
        assert!(1.0 - gate(0.5 + 14.0 * bw + 1e-9, 0.5, bw) < 1e-6);
    }

    #[test]
    fn stump_weights() {
        let t = SoftTree::stump(1.3, 0.1);
        assert_eq!(t.leaf_weights(&[0.4, 0.2]), vec![1.0]);
        assert_eq!(t.evaluate(&[0.4, 0.2]), 1.3);
    }

    #[test]
    fn symmetric_split_weights() {
        let t = one_split(0.5, 0.1, -1.0, 1.0);
        assert_eq!(t.leaf_weights(&[0.5]), vec![0.5, 0.5]);
        // left leaf dominates below the cut, matching the hard rule
        let w = t.leaf_weights(&[0.2]);
        assert!(w[0] > 0.95);
        assert_eq!(t.evaluate_hard(&[0.2]), -1.0);
    }

    #[test]
    fn zero_gamma_gives_stumps() {
        let hyper = ForestHyper {
            gamma: 0.0,
            ..ForestHyper::default()
        };
        let mut rng = RngStream::new(1, 0);
        for _ in 0..1000 {
            assert_eq!(sample_tree_prior(&hyper, 6, &mut rng).leaf_count(), 1);
        }
    }

    #[test]
    fn prior_branching_rates() {
        let hyper = ForestHyper::default();
        let mut rng = RngStream::new(2, 0);
        let n = 100_000;
        let (mut root, mut depth1_nodes, mut depth1_branches) = (0usize, 0usize, 0usize);
        for _ in 0..n {
            let t = sample_tree_prior(&hyper, 6, &mut rng);
            if let Node::Branch { left, right, .. } = t.nodes()[0] {
                root += 1;
                for c in [left, right] {
                    depth1_nodes += 1;
                    if matches!(t.nodes()[c], Node::Branch { .. }) {
                        depth1_branches += 1;
                    }
                }
            }
        }
        assert!((root as f64 / n as f64 - 0.95).abs() < 0.005);
        let q1 = depth1_branches as f64 / depth1_nodes as f64;
        assert!((q1 - 0.95 / 4.0).abs() < 0.01, "{q1}");
    }

    #[test]
    fn grow_prune_roundtrip() {
        let mut t = SoftTree::stump(0.0, 0.1);
        t.grow(0, 1, 0.3);
        t.grow(2, 0, 0.6);
        assert_eq!(t.leaf_count(), 3);
        assert_eq!(t.prunable(), vec![(2, 1)]);
        t.prune(2);
        assert_eq!(t.leaf_count(), 2);
        t.prune(0);
        assert_eq!(t.nodes(), &[Node::Leaf { mu: 0.0 }]);
    }

    #[test]
    fn from_nodes_rejects_malformed() {
        assert!(SoftTree::from_nodes(vec![], 0.1).is_none());
        assert!(SoftTree::from_nodes(vec![Node::Leaf { mu: 0.0 }], 0.0).is_none());
        let cyc = vec![Node::Branch {
            coord: 0,
            cut: 0.5,
            left: 0,
            right: 0,
        }];
        assert!(SoftTree::from_nodes(cyc, 0.1).is_none());
        let bad_cut = vec![
            Node::Branch {
                coord: 0,
                cut: 1.5,
                left: 1,
                right: 2,
            },
            Node::Leaf { mu: 0.0 },
            Node::Leaf { mu: 0.0 },
        ];
        assert!(SoftTree::from_nodes(bad_cut, 0.1).is_none());
    }

    proptest! {
        #[test]
        fn weights_telescope(seed in any::<u64>(), x in proptest::collection::vec(0.0f64..=1.0, 4)) {
            let hyper = ForestHyper { gamma: 0.95, beta: 1.0, ..ForestHyper::default() };
            let mut rng = RngStream::new(seed, 0);
            let t = sample_tree_prior(&hyper, 4, &mut rng);
            let w = t.leaf_weights(&x);
            prop_assert_eq!(w.len(), t.leaf_count());
            prop_assert!(w.iter().all(|&v| v >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            let direct: f64 = w.iter().zip(t.leaf_values()).map(|(a, b)| a * b).sum();
            prop_assert!((direct - t.evaluate(&x)).abs() < 1e-12);
        }

        #[test]
        fn preorder_roundtrip(seed in any::<u64>()) {
            let mut rng = RngStream::new(seed, 1);
            let t = sample_tree_prior(&ForestHyper::default(), 3, &mut rng);
            let back = SoftTree::from_preorder(&t.preorder(), t.bandwidth()).unwrap();
            prop_assert_eq!(back.preorder(), t.preorder());
            prop_assert_eq!(back.leaf_values(), t.leaf_values());
        }
    }
}
