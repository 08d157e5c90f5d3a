//! Piecewise-constant densities over a bin partition.
//!
//! A multi-class probability vector over `k` target intervals becomes a
//! probability density function by dividing each bin's mass by its width.
//! Averaging many such densities (each built on different bins) yields the
//! final predicted density, which is still piecewise constant but on the
//! merged edge set.

use serde::{Deserialize, Serialize};

use crate::error::{PrestoError, Result};

/// Integrals and probability sums must match 1 within this tolerance.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-9;

/// Sorted interval endpoints defining bins over the target range.
///
/// `edges[0] < edges[1] < ... < edges[k]` define `k` bins. A value equal to
/// the last edge belongs to the last bin; interior edges are left-closed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct BinPartition {
    edges: Vec<f64>,
}

impl BinPartition {
    pub fn new(edges: Vec<f64>) -> Result<Self> {
        if edges.len() < 2 {
            return Err(PrestoError::TooFewEdges(edges.len()));
        }
        for (i, pair) in edges.windows(2).enumerate() {
            if !pair[0].is_finite() || !pair[1].is_finite() || pair[0] >= pair[1] {
                return Err(PrestoError::NonIncreasingEdges {
                    index: i,
                    left: pair[0],
                    right: pair[1],
                });
            }
        }
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    pub fn num_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn low(&self) -> f64 {
        self.edges[0]
    }

    pub fn high(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    pub fn width(&self, bin: usize) -> f64 {
        self.edges[bin + 1] - self.edges[bin]
    }

    /// Bin index containing `x`, or None outside `[low, high]`.
    ///
    /// Bins are left-closed; `x == high` maps to the last bin so the maximum
    /// observed target keeps a class during discretization.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if x.is_nan() || x < self.low() || x > self.high() {
            return None;
        }
        let idx = self.edges.partition_point(|&e| e <= x);
        Some((idx - 1).min(self.num_bins() - 1))
    }
}

impl TryFrom<Vec<f64>> for BinPartition {
    type Error = PrestoError;
    fn try_from(edges: Vec<f64>) -> Result<Self> {
        Self::new(edges)
    }
}

impl From<BinPartition> for Vec<f64> {
    fn from(p: BinPartition) -> Vec<f64> {
        p.edges
    }
}

/// A probability density that is constant on each bin of a [`BinPartition`].
///
/// Serializes as a flat `{edges, heights}` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DensityRecord", into = "DensityRecord")]
pub struct PiecewiseConstantDensity {
    partition: BinPartition,
    heights: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct DensityRecord {
    edges: Vec<f64>,
    heights: Vec<f64>,
}

impl TryFrom<DensityRecord> for PiecewiseConstantDensity {
    type Error = PrestoError;
    fn try_from(rec: DensityRecord) -> Result<Self> {
        Self::new(BinPartition::new(rec.edges)?, rec.heights)
    }
}

impl From<PiecewiseConstantDensity> for DensityRecord {
    fn from(d: PiecewiseConstantDensity) -> DensityRecord {
        DensityRecord {
            edges: d.partition.edges,
            heights: d.heights,
        }
    }
}

impl PiecewiseConstantDensity {
    /// Build from explicit bin heights, validating that they integrate to 1.
    pub fn new(partition: BinPartition, heights: Vec<f64>) -> Result<Self> {
        if heights.len() != partition.num_bins() {
            return Err(PrestoError::ProbabilityLengthMismatch {
                expected: partition.num_bins(),
                actual: heights.len(),
            });
        }
        for (i, &h) in heights.iter().enumerate() {
            if h < 0.0 || h.is_nan() {
                return Err(PrestoError::NegativeProbability { index: i, value: h });
            }
        }
        let mut cumulative = Vec::with_capacity(heights.len() + 1);
        cumulative.push(0.0);
        let mut total = 0.0;
        for (i, &h) in heights.iter().enumerate() {
            total += h * partition.width(i);
            cumulative.push(total);
        }
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(PrestoError::ProbabilitiesNotNormalized {
                sum: total,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        Ok(Self {
            partition,
            heights,
            cumulative,
        })
    }

    /// Convert a class probability vector into a density over `partition`:
    /// the height over bin `i` is `probs[i] / width(i)`, zero outside the
    /// partition range, with `x == high` assigned to the last bin.
    pub fn from_probabilities(probs: &[f64], partition: BinPartition) -> Result<Self> {
        if probs.len() != partition.num_bins() {
            return Err(PrestoError::ProbabilityLengthMismatch {
                expected: partition.num_bins(),
                actual: probs.len(),
            });
        }
        let mut sum = 0.0;
        for (i, &p) in probs.iter().enumerate() {
            if p < 0.0 || p.is_nan() {
                return Err(PrestoError::NegativeProbability { index: i, value: p });
            }
            sum += p;
        }
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(PrestoError::ProbabilitiesNotNormalized {
                sum,
                tolerance: NORMALIZATION_TOLERANCE,
            });
        }
        let heights = probs
            .iter()
            .enumerate()
            .map(|(i, &p)| p / partition.width(i))
            .collect();
        Self::new(partition, heights)
    }

    /// Pointwise arithmetic mean of several densities.
    ///
    /// The result lives on the union of all input edges; on each merged
    /// sub-interval the height is the mean of the input pdf values there.
    /// Accumulated float drift beyond the normalization tolerance is
    /// corrected by renormalizing (and logged).
    pub fn average(densities: &[PiecewiseConstantDensity]) -> Result<Self> {
        if densities.is_empty() {
            return Err(PrestoError::EmptyAverage);
        }
        if densities.len() == 1 {
            return Ok(densities[0].clone());
        }
        let mut edges: Vec<f64> = densities
            .iter()
            .flat_map(|d| d.partition.edges().iter().copied())
            .collect();
        edges.sort_by(f64::total_cmp);
        edges.dedup();
        let partition = BinPartition::new(edges)?;

        let inv_m = 1.0 / densities.len() as f64;
        let mut heights = Vec::with_capacity(partition.num_bins());
        let mut integral = 0.0;
        for bin in 0..partition.num_bins() {
            let mid = 0.5 * (partition.edges()[bin] + partition.edges()[bin + 1]);
            let mut sum = 0.0;
            for d in densities {
                sum += d.pdf_at(mid);
            }
            let h = sum * inv_m;
            integral += h * partition.width(bin);
            heights.push(h);
        }
        let drift = (integral - 1.0).abs();
        if drift > NORMALIZATION_TOLERANCE {
            log::warn!("averaged density drifted from unit mass by {drift:.3e}; renormalizing");
            for h in &mut heights {
                *h /= integral;
            }
        }
        Self::new(partition, heights)
    }

    pub fn partition(&self) -> &BinPartition {
        &self.partition
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    /// Probability mass of each bin (height times width).
    pub fn bin_masses(&self) -> Vec<f64> {
        (0..self.heights.len())
            .map(|i| self.heights[i] * self.partition.width(i))
            .collect()
    }

    /// Density value at `x`: the height of the containing bin, zero outside
    /// the support, last-bin height at `x == high` exactly.
    pub fn pdf_at(&self, x: f64) -> f64 {
        match self.partition.bin_of(x) {
            Some(bin) => self.heights[bin],
            None => 0.0,
        }
    }

    /// Exact integral of the pdf from -inf to `x`; piecewise linear in `x`.
    pub fn cdf_at(&self, x: f64) -> f64 {
        if x.is_nan() || x <= self.partition.low() {
            return 0.0;
        }
        if x >= self.partition.high() {
            return 1.0;
        }
        let bin = self.partition.bin_of(x).unwrap();
        let partial = self.heights[bin] * (x - self.partition.edges()[bin]);
        (self.cumulative[bin] + partial).min(1.0)
    }

    /// Smallest `x` with `cdf(x) >= q`, by linear interpolation within the
    /// containing bin. Where a zero-height bin makes the inverse non-unique
    /// this returns the left edge of the flat region.
    pub fn quantile(&self, q: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&q) || q.is_nan() {
            return Err(PrestoError::QuantileOutOfRange(q));
        }
        if q == 0.0 {
            return Ok(self.partition.low());
        }
        // First bin whose cumulative mass reaches q.
        let k = self.heights.len();
        let bin = self.cumulative[1..].partition_point(|&c| c < q);
        if bin >= k {
            return Ok(self.partition.high());
        }
        let left = self.partition.edges()[bin];
        let h = self.heights[bin];
        if h <= 0.0 {
            return Ok(left);
        }
        let x = left + (q - self.cumulative[bin]) / h;
        Ok(x.min(self.partition.edges()[bin + 1]))
    }

    /// Expected value: sum of bin mass times bin midpoint, exact for a
    /// piecewise-constant density.
    pub fn mean(&self) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.heights.len() {
            let mass = self.heights[i] * self.partition.width(i);
            let mid = 0.5 * (self.partition.edges()[i] + self.partition.edges()[i + 1]);
            acc += mass * mid;
        }
        acc
    }

    /// Negative log density at `y`; `+inf` when the density is zero there.
    pub fn nll(&self, y: f64) -> f64 {
        -self.pdf_at(y).ln()
    }

    /// Like [`nll`](Self::nll) but reports a zero-density observation as an
    /// error so callers can count support violations.
    pub fn nll_checked(&self, y: f64) -> Result<f64> {
        let p = self.pdf_at(y);
        if p <= 0.0 {
            return Err(PrestoError::ZeroDensityAt(y));
        }
        Ok(-p.ln())
    }
}

/// Total variation distance between two piecewise-constant densities,
/// computed exactly on their merged edge set.
pub fn total_variation(a: &PiecewiseConstantDensity, b: &PiecewiseConstantDensity) -> f64 {
    let mut edges: Vec<f64> = a
        .partition()
        .edges()
        .iter()
        .chain(b.partition().edges())
        .copied()
        .collect();
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let mut acc = 0.0;
    for pair in edges.windows(2) {
        let mid = 0.5 * (pair[0] + pair[1]);
        acc += (a.pdf_at(mid) - b.pdf_at(mid)).abs() * (pair[1] - pair[0]);
    }
    0.5 * acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn density(probs: &[f64], edges: &[f64]) -> PiecewiseConstantDensity {
        PiecewiseConstantDensity::from_probabilities(
            probs,
            BinPartition::new(edges.to_vec()).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn partition_rejects_bad_edges() {
        assert!(BinPartition::new(vec![0.0]).is_err());
        assert!(BinPartition::new(vec![1.0, 1.0, 2.0]).is_err());
        assert!(BinPartition::new(vec![2.0, 1.0]).is_err());
        assert!(BinPartition::new(vec![0.0, f64::NAN]).is_err());
        assert!(BinPartition::new(vec![0.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn single_bin_density() {
        let d = density(&[1.0], &[0.0, 1.0]);
        assert_eq!(d.heights(), &[1.0]);
        assert_eq!(d.pdf_at(0.5), 1.0);
    }

    #[test]
    fn heights_divide_mass_by_width() {
        let d = density(&[0.2, 0.8], &[0.0, 1.0, 3.0]);
        assert_eq!(d.heights(), &[0.2, 0.4]);
        let uniform = density(&[0.5, 0.5], &[0.0, 1.0, 2.0]);
        assert_eq!(uniform.heights(), &[0.5, 0.5]);
        let masses = uniform.bin_masses();
        assert!((masses.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn from_probabilities_validates() {
        let part = || BinPartition::new(vec![0.0, 1.0, 2.0]).unwrap();
        assert!(matches!(
            PiecewiseConstantDensity::from_probabilities(&[1.0], part()),
            Err(PrestoError::ProbabilityLengthMismatch { .. })
        ));
        assert!(matches!(
            PiecewiseConstantDensity::from_probabilities(&[0.7, 0.7], part()),
            Err(PrestoError::ProbabilitiesNotNormalized { .. })
        ));
        assert!(matches!(
            PiecewiseConstantDensity::from_probabilities(&[-0.1, 1.1], part()),
            Err(PrestoError::NegativeProbability { .. })
        ));
    }

    #[test]
    fn pdf_respects_boundaries() {
        let d = density(&[1.0], &[0.0, 10.0]);
        assert_eq!(d.pdf_at(5.0), 0.1);
        assert_eq!(d.pdf_at(-1.0), 0.0);
        assert_eq!(d.pdf_at(10.0), 0.1, "right endpoint belongs to last bin");
        assert_eq!(d.pdf_at(10.0 + 1e-12), 0.0);
        assert_eq!(d.pdf_at(0.0), 0.1);
    }

    #[test]
    fn cdf_linear_accumulation() {
        let d = density(&[1.0], &[0.0, 10.0]);
        assert!((d.cdf_at(2.5) - 0.25).abs() < 1e-12);
        let d = density(&[0.2, 0.8], &[0.0, 1.0, 3.0]);
        assert!((d.cdf_at(2.0) - 0.6).abs() < 1e-12);
        assert_eq!(d.cdf_at(100.0), 1.0);
        assert_eq!(d.cdf_at(d.partition().low()), 0.0);
        assert_eq!(d.cdf_at(d.partition().high()), 1.0);
    }

    #[test]
    fn quantile_inverts_cdf() {
        let d = density(&[1.0], &[0.0, 10.0]);
        assert!((d.quantile(0.5).unwrap() - 5.0).abs() < 1e-12);
        let d = density(&[0.2, 0.8], &[0.0, 1.0, 3.0]);
        assert!((d.quantile(0.2).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(d.quantile(0.0).unwrap(), 0.0);
        assert_eq!(d.quantile(1.0).unwrap(), 3.0);
        assert!(d.quantile(-0.1).is_err());
        assert!(d.quantile(1.5).is_err());
    }

    #[test]
    fn quantile_zero_height_returns_left_edge() {
        // Mass 0.5 on [0,1), nothing on [1,2), mass 0.5 on [2,3).
        let d = density(&[0.5, 0.0, 0.5], &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(d.quantile(0.5).unwrap(), 1.0);
        assert!((d.quantile(0.25).unwrap() - 0.5).abs() < 1e-12);
        assert!((d.quantile(0.75).unwrap() - 2.5).abs() < 1e-12);
    }

    #[test]
    fn mean_is_mass_weighted_midpoint() {
        assert!((density(&[1.0], &[0.0, 10.0]).mean() - 5.0).abs() < 1e-12);
        let d = density(&[0.2, 0.8], &[0.0, 1.0, 3.0]);
        assert!((d.mean() - 1.7).abs() < 1e-12);
        // Symmetric about 1.
        let sym = density(&[0.3, 0.4, 0.3], &[0.0, 0.5, 1.5, 2.0]);
        assert!((sym.mean() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nll_values() {
        let d = density(&[1.0], &[0.0, 10.0]);
        assert!((d.nll(3.0) - std::f64::consts::LN_10).abs() < 1e-12);
        let unit = density(&[1.0], &[0.0, 1.0]);
        assert_eq!(unit.nll(0.5), 0.0);
        assert_eq!(d.nll(-3.0), f64::INFINITY);
        assert!(matches!(
            d.nll_checked(-3.0),
            Err(PrestoError::ZeroDensityAt(_))
        ));
        assert!(d.nll_checked(3.0).is_ok());
    }

    #[test]
    fn average_identity_and_overlap() {
        let d = density(&[0.2, 0.8], &[0.0, 1.0, 3.0]);
        let avg = PiecewiseConstantDensity::average(std::slice::from_ref(&d)).unwrap();
        for x in [-0.5, 0.0, 0.5, 1.0, 2.0, 3.0, 3.5] {
            assert_eq!(avg.pdf_at(x), d.pdf_at(x));
        }

        let a = density(&[1.0], &[0.0, 2.0]);
        let b = density(&[1.0], &[1.0, 3.0]);
        let avg = PiecewiseConstantDensity::average(&[a, b]).unwrap();
        assert_eq!(avg.partition().edges(), &[0.0, 1.0, 2.0, 3.0]);
        assert_eq!(avg.heights(), &[0.25, 0.5, 0.25]);

        assert!(matches!(
            PiecewiseConstantDensity::average(&[]),
            Err(PrestoError::EmptyAverage)
        ));
    }

    #[test]
    fn total_variation_of_disjoint_is_one() {
        let a = density(&[1.0], &[0.0, 1.0]);
        let b = density(&[1.0], &[2.0, 3.0]);
        assert!((total_variation(&a, &b) - 1.0).abs() < 1e-12);
        assert_eq!(total_variation(&a, &a), 0.0);
    }

    #[test]
    fn serde_flat_record_round_trip() {
        let d = density(&[0.2, 0.8], &[0.0, 1.0, 3.0]);
        let json = serde_json::to_string(&d).unwrap();
        assert!(json.contains("\"edges\""), "{json}");
        assert!(json.contains("\"heights\""), "{json}");
        let back: PiecewiseConstantDensity = serde_json::from_str(&json).unwrap();
        assert_eq!(back.heights(), d.heights());
        // Invalid records are rejected on load.
        let bad = r#"{"edges":[0.0,1.0],"heights":[5.0]}"#;
        assert!(serde_json::from_str::<PiecewiseConstantDensity>(bad).is_err());
    }
}
