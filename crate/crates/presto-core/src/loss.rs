//! Structured cross-entropy over weighted partition sets of class labels.
//!
//! Standard cross-entropy scores only the probability on the exact class.
//! The structured variant also credits probability placed in the same block
//! of each partition as the true class: the loss is the weighted average of
//! block-level log losses across the partitions. With only the singleton
//! partition it reduces to standard cross-entropy exactly.

use serde::{Deserialize, Serialize};

use crate::error::{PrestoError, Result};

/// Guards divisions by a block probability that underflowed to zero.
const BLOCK_PROB_FLOOR: f64 = 1e-300;

/// One partition of the classes `{0, .., k-1}` into disjoint blocks, with a
/// constant-time class-to-block lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    blocks: Vec<Vec<usize>>,
    block_of: Vec<usize>,
}

impl Partition {
    pub fn new(blocks: Vec<Vec<usize>>, num_classes: usize) -> Result<Self> {
        let mut block_of = vec![usize::MAX; num_classes];
        let mut seen = 0usize;
        for (b, block) in blocks.iter().enumerate() {
            if block.is_empty() {
                return Err(PrestoError::BadPartitionSet(format!("block {b} is empty")));
            }
            for &class in block {
                if class >= num_classes {
                    return Err(PrestoError::BadPartitionSet(format!(
                        "class {class} out of range for {num_classes} classes"
                    )));
                }
                if block_of[class] != usize::MAX {
                    return Err(PrestoError::BadPartitionSet(format!(
                        "class {class} appears in more than one block"
                    )));
                }
                block_of[class] = b;
                seen += 1;
            }
        }
        if seen != num_classes {
            return Err(PrestoError::BadPartitionSet(format!(
                "blocks cover {seen} of {num_classes} classes"
            )));
        }
        Ok(Self { blocks, block_of })
    }

    pub fn blocks(&self) -> &[Vec<usize>] {
        &self.blocks
    }

    /// The block containing `class`.
    pub fn block_containing(&self, class: usize) -> &[usize] {
        &self.blocks[self.block_of[class]]
    }
}

/// Partitions of the class labels with positive weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPartitionSet {
    num_classes: usize,
    partitions: Vec<Partition>,
    weights: Vec<f64>,
}

impl WeightedPartitionSet {
    pub fn new(num_classes: usize, partitions: Vec<Partition>, weights: Vec<f64>) -> Result<Self> {
        if partitions.is_empty() || partitions.len() != weights.len() {
            return Err(PrestoError::BadPartitionSet(format!(
                "{} partitions vs {} weights",
                partitions.len(),
                weights.len()
            )));
        }
        if let Some(&w) = weights.iter().find(|&&w| w <= 0.0 || w.is_nan()) {
            return Err(PrestoError::BadPartitionSet(format!(
                "weights must be positive, got {w}"
            )));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(PrestoError::BadPartitionSet(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        Ok(Self {
            num_classes,
            partitions,
            weights,
        })
    }

    /// The singleton partition with weight 1; structured cross-entropy over
    /// this set equals standard cross-entropy bit for bit.
    pub fn singleton_only(num_classes: usize) -> Self {
        let blocks = (0..num_classes).map(|c| vec![c]).collect();
        let partition = Partition::new(blocks, num_classes).unwrap();
        Self {
            num_classes,
            partitions: vec![partition],
            weights: vec![1.0],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn partitions(&self) -> &[Partition] {
        &self.partitions
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// The standard random ordinal partition on `k` classes: the singleton
/// partition with weight `singleton_weight`, plus the `block_size`
/// phase-shifted groupings of consecutive classes into runs of `block_size`
/// (ragged leading/trailing blocks), each weighted `(1 - w0) / block_size`.
pub fn standard_ordinal_partition(
    num_classes: usize,
    singleton_weight: f64,
    block_size: usize,
) -> Result<WeightedPartitionSet> {
    if !(singleton_weight > 0.0 && singleton_weight < 1.0) {
        return Err(PrestoError::BadSingletonWeight(singleton_weight));
    }
    if num_classes < 2 || block_size < 1 || (block_size as f64) >= num_classes as f64 / 2.0 {
        return Err(PrestoError::BadBlockSize {
            block_size,
            num_classes,
        });
    }
    let singletons = Partition::new((0..num_classes).map(|c| vec![c]).collect(), num_classes)?;
    let mut partitions = vec![singletons];
    let mut weights = vec![singleton_weight];
    let shared = (1.0 - singleton_weight) / block_size as f64;
    for shift in 1..=block_size {
        let mut blocks: Vec<Vec<usize>> = Vec::new();
        if shift >= 2 {
            blocks.push((0..shift - 1).collect());
        }
        let mut start = shift - 1;
        while start < num_classes {
            let end = (start + block_size).min(num_classes);
            blocks.push((start..end).collect());
            start = end;
        }
        partitions.push(Partition::new(blocks, num_classes)?);
        weights.push(shared);
    }
    WeightedPartitionSet::new(num_classes, partitions, weights)
}

/// Default block size for `k` classes: round(sqrt(k)), clamped so that
/// `1 <= s < k/2`. Returns None when no valid size exists (k <= 2), in which
/// case the singleton-only set is the sensible fallback.
pub fn default_block_size(num_classes: usize) -> Option<usize> {
    if num_classes < 3 {
        return None;
    }
    let max_valid = (num_classes - 1) / 2;
    Some(((num_classes as f64).sqrt().round() as usize).clamp(1, max_valid))
}

/// Numerically stable softmax.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; scores.len()];
    softmax_into(scores, &mut out);
    out
}

pub fn softmax_into(scores: &[f64], out: &mut [f64]) {
    debug_assert_eq!(scores.len(), out.len());
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Standard cross-entropy of a probability vector at the true class.
pub fn standard_ce(probs: &[f64], true_class: usize) -> f64 {
    -probs[true_class].ln()
}

/// Gradient and diagonal Hessian of standard softmax cross-entropy with
/// respect to the pre-softmax scores, written into `grad` and `hess`.
pub fn standard_grad_hess_into(probs: &[f64], true_class: usize, grad: &mut [f64], hess: &mut [f64]) {
    for m in 0..probs.len() {
        let p = probs[m];
        grad[m] = p;
        hess[m] = p * (1.0 - p);
    }
    grad[true_class] -= 1.0;
}

/// Structured cross-entropy: the weighted sum over partitions of the
/// negative log probability of the block containing the true class. A zero
/// block probability contributes `+inf`; callers that need a finite value
/// clip before taking the log.
pub fn structured_ce(probs: &[f64], true_class: usize, wps: &WeightedPartitionSet) -> f64 {
    assert_eq!(probs.len(), wps.num_classes(), "probability vector length");
    assert!(true_class < probs.len(), "true class out of range");
    let mut total = 0.0;
    for (partition, &w) in wps.partitions().iter().zip(wps.weights()) {
        let block_prob: f64 = partition
            .block_containing(true_class)
            .iter()
            .map(|&c| probs[c])
            .sum();
        total += w * -block_prob.ln();
    }
    total
}

/// Gradient and exact diagonal Hessian of the structured cross-entropy with
/// respect to pre-softmax scores, from precomputed probabilities.
///
/// Per partition with weight `w` and true block `B` holding probability `P`:
/// the gradient of `-log P` is `p_m - [m in B] * p_m / P`, and its second
/// derivative in `score_m` is `p_m (1 - p_m) - [m in B] * q (1 - q)` with
/// `q = p_m / P`. Terms are accumulated with partition weights.
pub fn structured_grad_hess_into(
    probs: &[f64],
    true_class: usize,
    wps: &WeightedPartitionSet,
    grad: &mut [f64],
    hess: &mut [f64],
) {
    assert_eq!(probs.len(), wps.num_classes(), "probability vector length");
    for m in 0..probs.len() {
        let p = probs[m];
        grad[m] = p;
        hess[m] = p * (1.0 - p);
    }
    for (partition, &w) in wps.partitions().iter().zip(wps.weights()) {
        let block = partition.block_containing(true_class);
        let block_prob: f64 = block.iter().map(|&c| probs[c]).sum();
        let safe = block_prob.max(BLOCK_PROB_FLOOR);
        for &m in block {
            let q = probs[m] / safe;
            grad[m] -= w * q;
            hess[m] -= w * (q * (1.0 - q));
        }
    }
}

/// As [`structured_grad_hess_into`] but starting from raw scores.
pub fn structured_ce_grad_hess(
    scores: &[f64],
    true_class: usize,
    wps: &WeightedPartitionSet,
) -> (Vec<f64>, Vec<f64>) {
    let probs = softmax(scores);
    let mut grad = vec![0.0; scores.len()];
    let mut hess = vec![0.0; scores.len()];
    structured_grad_hess_into(&probs, true_class, wps, &mut grad, &mut hess);
    (grad, hess)
}

/// Loss used to train the base classifiers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossConfig {
    /// Standard softmax cross-entropy.
    StandardCe,
    /// Structured cross-entropy over the standard random ordinal partition.
    /// `block_size` of None picks round(sqrt(k)) clamped to a valid value.
    StructuredCe {
        singleton_weight: f64,
        #[serde(default)]
        block_size: Option<usize>,
    },
    /// Structured machinery restricted to the singleton partition; trains
    /// identically to `StandardCe` and exists to verify that reduction.
    SingletonStructuredCe,
}

impl LossConfig {
    /// Materialize the partition set for a given class count, or None when
    /// the loss is plain cross-entropy.
    pub fn build_partition_set(&self, num_classes: usize) -> Result<Option<WeightedPartitionSet>> {
        match self {
            LossConfig::StandardCe => Ok(None),
            LossConfig::SingletonStructuredCe => {
                Ok(Some(WeightedPartitionSet::singleton_only(num_classes)))
            }
            LossConfig::StructuredCe {
                singleton_weight,
                block_size,
            } => {
                let size = match block_size {
                    Some(s) => Some(*s),
                    None => default_block_size(num_classes),
                };
                match size {
                    // No valid ordinal blocks for k <= 2: fall back to singletons.
                    None => Ok(Some(WeightedPartitionSet::singleton_only(num_classes))),
                    Some(s) => Ok(Some(standard_ordinal_partition(
                        num_classes,
                        *singleton_weight,
                        s,
                    )?)),
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper_example_set() -> WeightedPartitionSet {
        standard_ordinal_partition(10, 0.2, 2).unwrap()
    }

    #[test]
    fn ordinal_partition_layout_k10_s2() {
        let wps = paper_example_set();
        assert_eq!(wps.weights(), &[0.2, 0.4, 0.4]);
        let p: Vec<Vec<Vec<usize>>> = wps
            .partitions()
            .iter()
            .map(|p| p.blocks().to_vec())
            .collect();
        assert_eq!(p[0], (0..10).map(|c| vec![c]).collect::<Vec<_>>());
        assert_eq!(
            p[1],
            vec![vec![0, 1], vec![2, 3], vec![4, 5], vec![6, 7], vec![8, 9]]
        );
        assert_eq!(
            p[2],
            vec![
                vec![0],
                vec![1, 2],
                vec![3, 4],
                vec![5, 6],
                vec![7, 8],
                vec![9]
            ]
        );
    }

    #[test]
    fn ordinal_partition_blocks_are_contiguous() {
        for (k, s) in [(10, 3), (9, 2), (12, 4), (7, 3), (27, 5)] {
            let wps = standard_ordinal_partition(k, 0.1, s).unwrap();
            assert!((wps.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for partition in wps.partitions() {
                let mut seen = vec![false; k];
                for block in partition.blocks() {
                    for pair in block.windows(2) {
                        assert_eq!(pair[1], pair[0] + 1, "blocks must be contiguous runs");
                    }
                    for &c in block {
                        assert!(!seen[c]);
                        seen[c] = true;
                    }
                }
                assert!(seen.iter().all(|&s| s), "partition must cover all classes");
            }
        }
    }

    #[test]
    fn ordinal_partition_rejects_bad_params() {
        assert!(matches!(
            standard_ordinal_partition(10, 0.2, 5),
            Err(PrestoError::BadBlockSize { .. })
        ));
        assert!(standard_ordinal_partition(10, 0.0, 2).is_err());
        assert!(standard_ordinal_partition(10, 1.0, 2).is_err());
        assert!(standard_ordinal_partition(2, 0.1, 1).is_err());
    }

    #[test]
    fn block_size_one_gives_singleton_partitions() {
        let wps = standard_ordinal_partition(4, 0.3, 1).unwrap();
        assert_eq!(wps.partitions().len(), 2);
        for partition in wps.partitions() {
            assert!(partition.blocks().iter().all(|b| b.len() == 1));
        }
        // Structured CE over all-singleton partitions is standard CE.
        let probs = [0.1, 0.2, 0.3, 0.4];
        for c in 0..4 {
            let diff = structured_ce(&probs, c, &wps) - standard_ce(&probs, c);
            assert!(diff.abs() < 1e-12, "class {c}: diff {diff}");
        }
    }

    #[test]
    fn worked_example_values() {
        // True class is the second of ten; partitions and weights as in the
        // ordinal example with singleton weight 0.2 and block size 2.
        let wps = paper_example_set();
        let p_a = [0.1, 0.2, 0.4, 0.1, 0.05, 0.05, 0.025, 0.025, 0.025, 0.025];
        let p_b = [0.1, 0.2, 0.1, 0.1, 0.1, 0.1, 0.1, 0.1, 0.05, 0.05];
        assert!((standard_ce(&p_a, 1) - 1.609).abs() < 1e-3);
        assert!((structured_ce(&p_a, 1, &wps) - 1.008).abs() < 1e-3);
        assert!((structured_ce(&p_b, 1, &wps) - 1.285).abs() < 1e-3);
        let singles = WeightedPartitionSet::singleton_only(10);
        assert!((structured_ce(&p_a, 1, &singles) - 1.609).abs() < 1e-3);
    }

    #[test]
    fn zero_block_probability_is_infinite() {
        let wps = WeightedPartitionSet::singleton_only(3);
        assert_eq!(structured_ce(&[0.0, 0.5, 0.5], 0, &wps), f64::INFINITY);
    }

    #[test]
    fn singleton_reduction_is_bit_exact() {
        let wps = WeightedPartitionSet::singleton_only(6);
        let scores = [0.3, -1.2, 2.0, 0.0, -0.5, 1.1];
        let probs = softmax(&scores);
        let (mut g_std, mut h_std) = (vec![0.0; 6], vec![0.0; 6]);
        let (mut g_str, mut h_str) = (vec![0.0; 6], vec![0.0; 6]);
        for c in 0..6 {
            standard_grad_hess_into(&probs, c, &mut g_std, &mut h_std);
            structured_grad_hess_into(&probs, c, &wps, &mut g_str, &mut h_str);
            assert_eq!(g_std, g_str, "gradient must match exactly for class {c}");
            assert_eq!(h_std, h_str, "hessian must match exactly for class {c}");
            assert_eq!(structured_ce(&probs, c, &wps), standard_ce(&probs, c));
        }
    }

    #[test]
    fn gradient_components_sum_to_zero() {
        let wps = standard_ordinal_partition(9, 0.15, 3).unwrap();
        let scores = [1.0, -2.0, 0.5, 0.0, 3.0, -1.0, 0.25, 2.0, -0.75];
        for c in 0..9 {
            let (grad, _) = structured_ce_grad_hess(&scores, c, &wps);
            let total: f64 = grad.iter().sum();
            assert!(total.abs() < 1e-10, "class {c}: gradient sum {total}");
        }
    }

    #[test]
    fn partition_validation() {
        assert!(Partition::new(vec![vec![0], vec![0, 1]], 2).is_err());
        assert!(Partition::new(vec![vec![0]], 2).is_err());
        assert!(Partition::new(vec![vec![0], vec![2]], 2).is_err());
        assert!(Partition::new(vec![vec![0], vec![]], 1).is_err());
        let p = Partition::new(vec![vec![0, 1], vec![2]], 3).unwrap();
        assert_eq!(p.block_containing(1), &[0, 1]);
        assert_eq!(p.block_containing(2), &[2]);
    }

    #[test]
    fn default_block_size_clamps() {
        assert_eq!(default_block_size(2), None);
        assert_eq!(default_block_size(3), Some(1));
        assert_eq!(default_block_size(4), Some(1));
        assert_eq!(default_block_size(7), Some(3));
        assert_eq!(default_block_size(10), Some(3));
        assert_eq!(default_block_size(27), Some(5));
        for k in 3..60 {
            let s = default_block_size(k).unwrap();
            assert!(s >= 1 && (s as f64) < k as f64 / 2.0, "k={k} s={s}");
        }
    }

    #[test]
    fn loss_config_materializes() {
        assert!(LossConfig::StandardCe.build_partition_set(5).unwrap().is_none());
        let wps = LossConfig::StructuredCe {
            singleton_weight: 0.1,
            block_size: None,
        }
        .build_partition_set(10)
        .unwrap()
        .unwrap();
        assert_eq!(wps.partitions().len(), 4); // singletons + 3 shifts
        // k = 2 falls back to singleton-only rather than failing.
        let tiny = LossConfig::StructuredCe {
            singleton_weight: 0.1,
            block_size: None,
        }
        .build_partition_set(2)
        .unwrap()
        .unwrap();
        assert_eq!(tiny.partitions().len(), 1);
        assert!(LossConfig::StructuredCe {
            singleton_weight: 0.1,
            block_size: Some(6),
        }
        .build_partition_set(10)
        .is_err());
    }
}
