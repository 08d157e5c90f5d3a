//! Regression trees over binned features, grown on per-row gradient and
//! hessian statistics with second-order leaf values.
//!
//! Growth is depth-first with histogram subtraction: a split scans rows only
//! for the smaller child and derives the larger child's histograms by
//! subtracting from the parent's, so per-level work tracks the smaller sides.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::binning::{BinnedMatrix, MISSING_BIN};

/// Per-leaf hessian sums are floored here before any division, which keeps
/// leaf values and split gains bounded when the loss curvature collapses.
pub const HESSIAN_FLOOR: f64 = 1e-6;

const MIN_SPLIT_GAIN: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Split {
        feature: u32,
        threshold: f64,
        default_left: bool,
        left: u32,
        right: u32,
    },
    Leaf {
        value: f64,
    },
}

/// A single regression tree; node 0 is the root.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut idx = 0usize;
        loop {
            match &self.nodes[idx] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    default_left,
                    left,
                    right,
                } => {
                    let v = row[*feature as usize];
                    let go_left = if v.is_nan() { *default_left } else { v <= *threshold };
                    idx = if go_left { *left as usize } else { *right as usize };
                }
            }
        }
    }

    pub fn num_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }
}

pub struct GrowParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub lambda: f64,
    /// Multiplier applied to every leaf value (the learning rate).
    pub leaf_scale: f64,
    pub colsample_per_node: f64,
    /// Mixed with the node counter to seed per-node column sampling.
    pub column_seed: u64,
}

#[derive(Clone, Copy, Default)]
struct Stats {
    grad: f64,
    hess: f64,
    count: u32,
}

impl Stats {
    fn add(&mut self, g: f64, h: f64) {
        self.grad += g;
        self.hess += h;
        self.count += 1;
    }

    fn minus(&self, other: &Stats) -> Stats {
        Stats {
            grad: self.grad - other.grad,
            hess: self.hess - other.hess,
            count: self.count - other.count,
        }
    }
}

fn leaf_objective(s: &Stats, lambda: f64) -> f64 {
    s.grad * s.grad / (s.hess.max(HESSIAN_FLOOR) + lambda)
}

/// Per-feature histograms for one node: bin stats plus the missing-value
/// bucket and the occupied bin range.
struct NodeHists {
    bins: Vec<Stats>, // features * stride
    missing: Vec<Stats>,
    lo: Vec<usize>,
    hi: Vec<usize>, // inclusive; lo > hi means no non-missing rows
    stride: usize,
}

impl NodeHists {
    fn new(n_features: usize, stride: usize) -> Self {
        Self {
            bins: vec![Stats::default(); n_features * stride],
            missing: vec![Stats::default(); n_features],
            lo: vec![0; n_features],
            hi: vec![0; n_features],
            stride,
        }
    }

    fn feature(&self, f: usize) -> &[Stats] {
        &self.bins[f * self.stride..(f + 1) * self.stride]
    }

    /// Fill by scanning the node's rows. Only the previously occupied range
    /// is cleared first, so reuse cost tracks node size rather than the
    /// global bin count; slots outside every tracked range stay zero.
    fn scan(&mut self, binned: &BinnedMatrix, rows: &[u32], grad: &[f64], hess: &[f64]) {
        for f in 0..binned.n_features {
            let n_bins = binned.n_bins(f);
            let codes = &binned.codes[f];
            let base = f * self.stride;
            if self.lo[f] <= self.hi[f] {
                for s in &mut self.bins[base + self.lo[f]..=base + self.hi[f]] {
                    if s.count != 0 || s.grad != 0.0 || s.hess != 0.0 {
                        *s = Stats::default();
                    }
                }
            }
            self.missing[f] = Stats::default();
            let slot = &mut self.bins[base..base + n_bins];
            let mut lo = n_bins;
            let mut hi = 0usize;
            for &row in rows {
                let r = row as usize;
                let code = codes[r];
                if code == MISSING_BIN {
                    self.missing[f].add(grad[r], hess[r]);
                } else {
                    let c = code as usize;
                    slot[c].add(grad[r], hess[r]);
                    lo = lo.min(c);
                    hi = hi.max(c);
                }
            }
            self.lo[f] = lo;
            self.hi[f] = hi;
        }
    }

    /// Subtract a child's histograms in place, leaving the sibling's, and
    /// re-tighten the occupied range so later candidate scans stay
    /// proportional to the sibling.
    fn subtract(&mut self, child: &NodeHists, n_features: usize) {
        for f in 0..n_features {
            if child.lo[f] <= child.hi[f] {
                for bin in child.lo[f]..=child.hi[f] {
                    let child_slot = &child.bins[f * child.stride + bin];
                    if child_slot.count == 0 {
                        continue; // scanned hists hold exact zeros there
                    }
                    let idx = f * self.stride + bin;
                    self.bins[idx] = self.bins[idx].minus(child_slot);
                }
            }
            self.missing[f] = self.missing[f].minus(&child.missing[f]);
            if self.lo[f] <= self.hi[f] {
                let base = f * self.stride;
                let mut lo = self.lo[f];
                let mut hi = self.hi[f];
                while lo <= hi && self.bins[base + lo].count == 0 {
                    lo += 1;
                }
                while hi > lo && self.bins[base + hi].count == 0 {
                    hi -= 1;
                }
                if lo > hi || self.bins[base + lo].count == 0 {
                    // Sibling holds no non-missing rows; mark empty but keep
                    // the old bounds as the dirty range to clear.
                    self.clear_range(f);
                    self.lo[f] = 1;
                    self.hi[f] = 0;
                } else {
                    // Shrunk-off slots are zero by construction (count 0 and
                    // exact cancellation does not matter for scans, but they
                    // must be cleared so later reuse stays consistent).
                    for bin in self.lo[f]..lo {
                        self.bins[base + bin] = Stats::default();
                    }
                    for bin in hi + 1..=self.hi[f] {
                        self.bins[base + bin] = Stats::default();
                    }
                    self.lo[f] = lo;
                    self.hi[f] = hi;
                }
            }
        }
    }

    fn clear_range(&mut self, f: usize) {
        if self.lo[f] <= self.hi[f] {
            let base = f * self.stride;
            for bin in self.lo[f]..=self.hi[f] {
                self.bins[base + bin] = Stats::default();
            }
        }
    }
}

struct BestSplit {
    gain: f64,
    feature: usize,
    split_bin: u16,
    threshold: f64,
    missing_left: bool,
    left: Stats,
}

/// Reusable buffers for tree growth; one per boosting worker, so repeated
/// fits do not reallocate histograms and index arrays per tree.
pub struct GrowWorkspace {
    order: Vec<u32>,
    scratch: Vec<u32>,
    pool: Vec<NodeHists>,
    all_features: Vec<usize>,
    stride: usize,
}

impl GrowWorkspace {
    pub fn new() -> Self {
        Self {
            order: Vec::new(),
            scratch: Vec::new(),
            pool: Vec::new(),
            all_features: Vec::new(),
            stride: 0,
        }
    }

    fn prepare(&mut self, binned: &BinnedMatrix, max_depth: usize) {
        let n_rows = binned.n_rows;
        let stride = (0..binned.n_features)
            .map(|f| binned.n_bins(f))
            .max()
            .unwrap_or(1);
        let rebuild = self.stride != stride
            || self.pool.len() < max_depth + 1
            || self
                .pool
                .first()
                .is_none_or(|h| h.missing.len() != binned.n_features);
        if rebuild {
            self.stride = stride;
            self.pool = (0..max_depth + 1)
                .map(|_| NodeHists::new(binned.n_features, stride))
                .collect();
        }
        self.order.clear();
        self.order.extend(0..n_rows as u32);
        self.scratch.resize(n_rows, 0);
        if self.all_features.len() != binned.n_features {
            self.all_features = (0..binned.n_features).collect();
        }
    }
}

impl Default for GrowWorkspace {
    fn default() -> Self {
        Self::new()
    }
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GrowParams,
    all_features: &'a [usize],
    order: &'a mut [u32],
    scratch: &'a mut [u32],
    pool: &'a mut [NodeHists],
    nodes: Vec<Node>,
    deltas: &'a mut [f64],
}

/// Grow one tree on (grad, hess) and record each training row's leaf value in
/// `deltas`. Rows are partitioned in stable order and splits are picked
/// scanning features and bins in ascending order, so the result does not
/// depend on scheduling.
pub fn grow_tree(
    binned: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
    deltas: &mut [f64],
) -> Tree {
    let mut workspace = GrowWorkspace::new();
    grow_tree_with(&mut workspace, binned, grad, hess, params, deltas)
}

/// As [`grow_tree`], reusing the caller's workspace buffers.
pub fn grow_tree_with(
    workspace: &mut GrowWorkspace,
    binned: &BinnedMatrix,
    grad: &[f64],
    hess: &[f64],
    params: &GrowParams,
    deltas: &mut [f64],
) -> Tree {
    let n_rows = binned.n_rows;
    workspace.prepare(binned, params.max_depth);
    let mut root_stats = Stats::default();
    for row in 0..n_rows {
        root_stats.add(grad[row], hess[row]);
    }
    workspace.pool[0].scan(binned, &workspace.order, grad, hess);
    let mut grower = Grower {
        binned,
        grad,
        hess,
        params,
        all_features: &workspace.all_features,
        order: &mut workspace.order,
        scratch: &mut workspace.scratch,
        pool: &mut workspace.pool,
        nodes: vec![Node::Leaf { value: 0.0 }],
        deltas,
    };
    grower.grow(0, 0, n_rows, root_stats, 0, 0);
    Tree {
        nodes: grower.nodes,
    }
}

impl Grower<'_> {
    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        node: usize,
        start: usize,
        len: usize,
        stats: Stats,
        depth: usize,
        hist_idx: usize,
    ) {
        let split = if depth < self.params.max_depth && len >= 2 * self.params.min_samples_leaf {
            self.best_split(node, &stats, hist_idx)
        } else {
            None
        };
        let best = match split {
            None => {
                let value = -self.params.leaf_scale * stats.grad
                    / (stats.hess.max(HESSIAN_FLOOR) + self.params.lambda);
                for &row in &self.order[start..start + len] {
                    self.deltas[row as usize] = value;
                }
                self.nodes[node] = Node::Leaf { value };
                return;
            }
            Some(best) => best,
        };

        // Stable two-way partition of this node's segment, left side first.
        let codes = &self.binned.codes[best.feature];
        let n_left = best.left.count as usize;
        let (mut l, mut r) = (0usize, n_left);
        for &row in &self.order[start..start + len] {
            let code = codes[row as usize];
            let go_left = if code == MISSING_BIN {
                best.missing_left
            } else {
                code <= best.split_bin
            };
            if go_left {
                self.scratch[l] = row;
                l += 1;
            } else {
                self.scratch[r] = row;
                r += 1;
            }
        }
        self.order[start..start + len].copy_from_slice(&self.scratch[..len]);

        let left_node = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        let right_node = self.nodes.len();
        self.nodes.push(Node::Leaf { value: 0.0 });
        self.nodes[node] = Node::Split {
            feature: best.feature as u32,
            threshold: best.threshold,
            default_left: best.missing_left,
            left: left_node as u32,
            right: right_node as u32,
        };
        let right_stats = stats.minus(&best.left);

        // Scan histograms for the smaller child into this depth's buffer and
        // subtract them from the parent's in place for the sibling.
        let (small, large) = if n_left <= len - n_left {
            (
                (left_node, start, n_left, best.left),
                (right_node, start + n_left, len - n_left, right_stats),
            )
        } else {
            (
                (right_node, start + n_left, len - n_left, right_stats),
                (left_node, start, n_left, best.left),
            )
        };
        let child_idx = depth + 1;
        // Children at max depth never split, so their histograms are not
        // needed at all.
        if child_idx < self.params.max_depth {
            let rows: &[u32] = &self.order[small.1..small.1 + small.2];
            // Split the pool so the child buffer can be filled while the
            // parent buffer is subtracted from.
            let (head, tail) = self.pool.split_at_mut(child_idx);
            let child_hist = &mut tail[0];
            child_hist.scan(self.binned, rows, self.grad, self.hess);
            head[hist_idx].subtract(child_hist, self.binned.n_features);
        }
        let (s_node, s_start, s_len, s_stats) = small;
        self.grow(s_node, s_start, s_len, s_stats, depth + 1, child_idx);
        let (l_node, l_start, l_len, l_stats) = large;
        self.grow(l_node, l_start, l_len, l_stats, depth + 1, hist_idx);
    }

    fn best_split(&mut self, node: usize, stats: &Stats, hist_idx: usize) -> Option<BestSplit> {
        let params = self.params;
        let parent_objective = leaf_objective(stats, params.lambda);
        let min_leaf = params.min_samples_leaf as u32;
        let mut best: Option<BestSplit> = None;

        let sampled;
        let features: &[usize] = if params.colsample_per_node >= 1.0 {
            self.all_features
        } else {
            sampled = sampled_features(self.binned.n_features, params, node);
            &sampled
        };
        let hists = &self.pool[hist_idx];
        for &feature in features {
            let n_bins = self.binned.n_bins(feature);
            if n_bins < 2 || hists.lo[feature] > hists.hi[feature] {
                continue;
            }
            let slot = hists.feature(feature);
            let missing = hists.missing[feature];
            let non_missing = stats.minus(&missing);
            let mut prefix = Stats::default();
            let last_bin = hists.hi[feature].min(n_bins - 2);
            // Missing rows can join either side; with none present the two
            // placements coincide and one evaluation suffices.
            let placements: &[bool] = if missing.count == 0 {
                &[false]
            } else {
                &[false, true]
            };
            #[allow(clippy::needless_range_loop)] // bin also indexes the cut table
            for bin in hists.lo[feature]..=last_bin {
                // An empty bin repeats the previous candidate's partition and
                // can never win against it, so it is skipped outright.
                if slot[bin].count == 0 {
                    continue;
                }
                prefix.grad += slot[bin].grad;
                prefix.hess += slot[bin].hess;
                prefix.count += slot[bin].count;
                let rest = non_missing.minus(&prefix);
                for &missing_left in placements {
                    let (left, right) = if missing_left {
                        (
                            Stats {
                                grad: prefix.grad + missing.grad,
                                hess: prefix.hess + missing.hess,
                                count: prefix.count + missing.count,
                            },
                            rest,
                        )
                    } else {
                        (
                            prefix,
                            Stats {
                                grad: rest.grad + missing.grad,
                                hess: rest.hess + missing.hess,
                                count: rest.count + missing.count,
                            },
                        )
                    };
                    if left.count < min_leaf || right.count < min_leaf {
                        continue;
                    }
                    let gain = 0.5
                        * (leaf_objective(&left, params.lambda)
                            + leaf_objective(&right, params.lambda)
                            - parent_objective);
                    if gain > MIN_SPLIT_GAIN && best.as_ref().is_none_or(|b| gain > b.gain) {
                        best = Some(BestSplit {
                            gain,
                            feature,
                            split_bin: bin as u16,
                            threshold: self.binned.cuts[feature][bin],
                            missing_left,
                            left,
                        });
                    }
                }
            }
        }
        best
    }
}

fn sampled_features(total: usize, params: &GrowParams, node: usize) -> Vec<usize> {
    let take = ((params.colsample_per_node * total as f64).round() as usize).clamp(1, total);
    if take == total {
        return (0..total).collect();
    }
    let seed = splitmix(params.column_seed ^ splitmix(node as u64));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, total, take).into_vec();
    picked.sort_unstable();
    picked
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e3779b97f4a7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d049bb133111eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> GrowParams {
        GrowParams {
            max_depth: 3,
            min_samples_leaf: 1,
            lambda: 1.0,
            leaf_scale: 1.0,
            colsample_per_node: 1.0,
            column_seed: 0,
        }
    }

    #[test]
    fn pure_gradient_signal_splits_at_boundary() {
        // Feature x in 0..8; gradient -1 for x < 4, +1 for x >= 4.
        let features: Vec<f64> = (0..8).map(f64::from).collect();
        let binned = BinnedMatrix::build(&features, 1).unwrap();
        let grad: Vec<f64> = (0..8).map(|i| if i < 4 { -1.0 } else { 1.0 }).collect();
        let hess = vec![1.0; 8];
        let mut deltas = vec![0.0; 8];
        let tree = grow_tree(&binned, &grad, &hess, &params(), &mut deltas);
        match &tree.nodes[0] {
            Node::Split { feature, threshold, .. } => {
                assert_eq!(*feature, 0);
                assert_eq!(*threshold, 3.5);
            }
            other => panic!("expected root split, got {other:?}"),
        }
        // Left leaf pulls scores up (negative gradient), right leaf down.
        assert!(deltas[0] > 0.0 && deltas[7] < 0.0);
        assert!(tree.predict_row(&[2.0]) > 0.0);
        assert!(tree.predict_row(&[6.0]) < 0.0);
    }

    #[test]
    fn constant_gradient_stays_a_leaf() {
        let features: Vec<f64> = (0..10).map(f64::from).collect();
        let binned = BinnedMatrix::build(&features, 1).unwrap();
        let grad = vec![0.5; 10];
        let hess = vec![0.25; 10];
        let mut deltas = vec![0.0; 10];
        let tree = grow_tree(&binned, &grad, &hess, &params(), &mut deltas);
        assert_eq!(tree.nodes.len(), 1);
        let expected = -0.5 * 10.0 / (0.25 * 10.0 + 1.0);
        assert!((deltas[0] - expected).abs() < 1e-12);
    }

    #[test]
    fn min_samples_leaf_blocks_small_splits() {
        let features: Vec<f64> = (0..6).map(f64::from).collect();
        let binned = BinnedMatrix::build(&features, 1).unwrap();
        // A lone outlier gradient in the last row.
        let grad = vec![0.0, 0.0, 0.0, 0.0, 0.0, 10.0];
        let hess = vec![1.0; 6];
        let mut deltas = vec![0.0; 6];
        let mut p = params();
        p.min_samples_leaf = 3;
        let tree = grow_tree(&binned, &grad, &hess, &p, &mut deltas);
        for node in &tree.nodes {
            if let Node::Split { threshold, .. } = node {
                assert!(
                    (2.5..=3.5).contains(threshold),
                    "split must keep 3 rows per side, got {threshold}"
                );
            }
        }
    }

    #[test]
    fn missing_rows_follow_learned_direction() {
        // x = NaN rows share the gradient sign of the high-x group.
        let features = vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0, f64::NAN, f64::NAN];
        let binned = BinnedMatrix::build(&features, 1).unwrap();
        let grad = vec![-1.0, -1.0, -1.0, 1.0, 1.0, 1.0, 1.0, 1.0];
        let hess = vec![1.0; 8];
        let mut deltas = vec![0.0; 8];
        let tree = grow_tree(&binned, &grad, &hess, &params(), &mut deltas);
        match &tree.nodes[0] {
            Node::Split { default_left, .. } => assert!(!default_left),
            other => panic!("expected split, got {other:?}"),
        }
        assert_eq!(tree.predict_row(&[f64::NAN]), tree.predict_row(&[1.0]));
    }

    #[test]
    fn hessian_floor_bounds_leaf_values() {
        let features: Vec<f64> = (0..4).map(f64::from).collect();
        let binned = BinnedMatrix::build(&features, 1).unwrap();
        let grad = vec![-2.0; 4];
        let hess = vec![-5.0; 4]; // negative curvature gets floored
        let mut deltas = vec![0.0; 4];
        let mut p = params();
        p.max_depth = 0;
        let tree = grow_tree(&binned, &grad, &hess, &p, &mut deltas);
        let expected = 8.0 / (HESSIAN_FLOOR + 1.0);
        match &tree.nodes[0] {
            Node::Leaf { value } => assert!((value - expected).abs() < 1e-9),
            other => panic!("expected leaf, got {other:?}"),
        }
    }

    #[test]
    fn subtracted_histograms_match_scanned_ones() {
        // Deep growth on two features with repeated codes exercises the
        // subtraction path; leaf deltas must cover every row exactly once.
        let mut features = Vec::new();
        for i in 0..64 {
            features.push((i % 16) as f64);
            features.push(((i * 7) % 9) as f64);
        }
        let binned = BinnedMatrix::build(&features, 2).unwrap();
        let grad: Vec<f64> = (0..64).map(|i| ((i * 13) % 29) as f64 / 29.0 - 0.5).collect();
        let hess = vec![0.3; 64];
        let mut deltas = vec![f64::NAN; 64];
        let mut p = params();
        p.max_depth = 5;
        let tree = grow_tree(&binned, &grad, &hess, &p, &mut deltas);
        assert!(deltas.iter().all(|d| d.is_finite()), "every row gets a leaf");
        assert!(tree.num_leaves() > 4);
        // Leaf predictions agree with the recorded deltas.
        for i in 0..64 {
            let row = [features[2 * i], features[2 * i + 1]];
            assert_eq!(tree.predict_row(&row), deltas[i], "row {i}");
        }
    }

    #[test]
    fn column_sampling_is_deterministic() {
        let mut p = params();
        p.colsample_per_node = 0.5;
        p.column_seed = 99;
        let a = sampled_features(4, &p, 7);
        let b = sampled_features(4, &p, 7);
        assert_eq!(a, b);
        assert_eq!(a.len(), 2);
        assert!(a.windows(2).all(|w| w[0] < w[1]));
    }
}
