//! Feature pre-binning for histogram split finding.
//!
//! Each feature is quantile-binned once per fit into at most [`MAX_BINS`]
//! bins. Cut points sit at midpoints between neighboring distinct values, so
//! on small data (fewer distinct values than bins) histogram split finding
//! scans exactly the same candidate thresholds as an exact scan.

use crate::error::{PrestoError, Result};

pub const MAX_BINS: usize = 256;
pub const MISSING_BIN: u16 = u16::MAX;

/// Column-major binned copy of the training features.
pub struct BinnedMatrix {
    pub n_rows: usize,
    pub n_features: usize,
    /// Per feature, per row: bin code, or [`MISSING_BIN`] for NaN.
    pub codes: Vec<Vec<u16>>,
    /// Per feature: ascending thresholds; bin `b` covers `(cuts[b-1], cuts[b]]`.
    pub cuts: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub fn build(features: &[f64], n_features: usize) -> Result<Self> {
        if n_features == 0 || !features.len().is_multiple_of(n_features) {
            return Err(PrestoError::RaggedMatrix {
                actual: features.len(),
                n_features,
            });
        }
        let n_rows = features.len() / n_features;
        let mut codes = Vec::with_capacity(n_features);
        let mut cuts = Vec::with_capacity(n_features);
        for feature in 0..n_features {
            let column: Vec<f64> = (0..n_rows)
                .map(|row| features[row * n_features + feature])
                .collect();
            for (row, &v) in column.iter().enumerate() {
                if v.is_infinite() {
                    return Err(PrestoError::NonFiniteFeature {
                        row,
                        column: feature,
                        value: v,
                    });
                }
            }
            let feature_cuts = quantile_cuts(&column);
            let feature_codes = column
                .iter()
                .map(|&v| {
                    if v.is_nan() {
                        MISSING_BIN
                    } else {
                        bin_code(&feature_cuts, v)
                    }
                })
                .collect();
            codes.push(feature_codes);
            cuts.push(feature_cuts);
        }
        Ok(Self {
            n_rows,
            n_features,
            codes,
            cuts,
        })
    }

    /// Number of non-missing bins for a feature.
    pub fn n_bins(&self, feature: usize) -> usize {
        self.cuts[feature].len() + 1
    }
}

fn bin_code(cuts: &[f64], value: f64) -> u16 {
    cuts.partition_point(|&c| c < value) as u16
}

/// Choose up to MAX_BINS - 1 cut points for one column. With few distinct
/// values every midpoint between neighbors becomes a cut; otherwise cuts are
/// placed at evenly spaced quantile positions.
fn quantile_cuts(column: &[f64]) -> Vec<f64> {
    let mut sorted: Vec<f64> = column.iter().copied().filter(|v| !v.is_nan()).collect();
    if sorted.len() < 2 {
        return Vec::new();
    }
    sorted.sort_by(f64::total_cmp);

    let mut distinct = 0usize;
    for i in 0..sorted.len() {
        if i == 0 || sorted[i] > sorted[i - 1] {
            distinct += 1;
        }
    }

    let mut cuts = Vec::new();
    if distinct <= MAX_BINS {
        for pair in sorted.windows(2) {
            if pair[1] > pair[0] {
                let mid = 0.5 * (pair[0] + pair[1]);
                // Adjacent floats can collapse onto an endpoint; keep cuts
                // strictly increasing regardless.
                if cuts.last().is_none_or(|&last| mid > last) {
                    cuts.push(mid);
                }
            }
        }
    } else {
        let n = sorted.len();
        for b in 1..MAX_BINS {
            let pos = b * n / MAX_BINS;
            if pos == 0 || pos >= n || sorted[pos] <= sorted[pos - 1] {
                continue;
            }
            let mid = 0.5 * (sorted[pos - 1] + sorted[pos]);
            if cuts.last().is_none_or(|&last| mid > last) {
                cuts.push(mid);
            }
        }
    }
    cuts
}
