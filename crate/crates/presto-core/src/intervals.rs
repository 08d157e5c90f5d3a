//! Interval selection: how the target range is carved into bins for each
//! coarse classifier.
//!
//! Three methods are supported. `RandQuantile` samples uniform quantile
//! levels, maps them to empirical quantiles of the training target, and takes
//! midpoints of neighboring values so observed targets sit inside bins rather
//! than on endpoints. `Fixed` uses a caller-supplied grid verbatim, and
//! `FixedRss` keeps a random subset of a grid's interior points.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::density::BinPartition;
use crate::error::{PrestoError, Result};

/// Widens the partition by one extra bin on each side of the observed target
/// range, sized as `scale` times the spread between two empirical quantiles.
/// `(0.25, 0.75, 1.0)` adds a bin of one interquartile range per side.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtendParams {
    pub lower_quantile: f64,
    pub upper_quantile: f64,
    pub scale: f64,
}

impl ExtendParams {
    pub fn new(lower_quantile: f64, upper_quantile: f64, scale: f64) -> Result<Self> {
        let p = Self {
            lower_quantile,
            upper_quantile,
            scale,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.lower_quantile)
            && (0.0..=1.0).contains(&self.upper_quantile)
            && self.lower_quantile < self.upper_quantile
            && self.scale >= 0.0
            && self.scale.is_finite();
        if ok {
            Ok(())
        } else {
            Err(PrestoError::BadExtendParams {
                lower: self.lower_quantile,
                upper: self.upper_quantile,
                scale: self.scale,
            })
        }
    }
}

/// How each classifier's bin partition is produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case", deny_unknown_fields)]
pub enum IntervalMethod {
    /// Sample `num_quantiles` uniform levels and bin at midpoints of the
    /// corresponding empirical quantiles.
    RandQuantile {
        num_quantiles: usize,
        #[serde(default)]
        extend: Option<ExtendParams>,
    },
    /// Use this grid as the bin edges, verbatim.
    Fixed { grid: Vec<f64> },
    /// Keep the grid's endpoints plus a random subset of its interior points.
    FixedRss { grid: Vec<f64>, subset_size: usize },
}

impl IntervalMethod {
    pub fn validate(&self) -> Result<()> {
        match self {
            IntervalMethod::RandQuantile {
                num_quantiles,
                extend,
            } => {
                if *num_quantiles < 1 {
                    return Err(PrestoError::BadQuantileCount(*num_quantiles));
                }
                if let Some(e) = extend {
                    e.validate()?;
                }
                Ok(())
            }
            IntervalMethod::Fixed { grid } => BinPartition::new(grid.clone()).map(|_| ()),
            IntervalMethod::FixedRss { grid, subset_size } => {
                let p = BinPartition::new(grid.clone())?;
                let interior = p.edges().len() - 2;
                if *subset_size > interior {
                    return Err(PrestoError::SubsetTooLarge {
                        subset: *subset_size,
                        interior,
                    });
                }
                Ok(())
            }
        }
    }

    /// Draw a partition for one classifier, consuming randomness from `rng`
    /// only where the method calls for it.
    pub fn generate(&self, y_train: &[f64], rng: &mut impl Rng) -> Result<BinPartition> {
        self.validate()?;
        match self {
            IntervalMethod::RandQuantile {
                num_quantiles,
                extend,
            } => rand_quantile_edges(y_train, *num_quantiles, *extend, rng),
            IntervalMethod::Fixed { grid } => fixed_edges(grid),
            IntervalMethod::FixedRss { grid, subset_size } => {
                fixed_rss_edges(grid, *subset_size, rng)
            }
        }
    }
}

/// Empirical quantile by linear interpolation between order statistics
/// (position `(n - 1) * level` in the sorted sample).
fn quantile_of_sorted(sorted: &[f64], level: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = (n - 1) as f64 * level.clamp(0.0, 1.0);
    let idx = pos.floor() as usize;
    let frac = pos - idx as f64;
    if idx + 1 >= n {
        sorted[n - 1]
    } else {
        sorted[idx] + frac * (sorted[idx + 1] - sorted[idx])
    }
}

/// Deterministic core of the RandQuantile method: turn already-drawn levels
/// into bin edges. Exposed separately so traced level sequences can be
/// injected in tests.
pub fn edges_from_quantile_levels(
    y_train: &[f64],
    levels: &[f64],
    extend: Option<ExtendParams>,
) -> Result<BinPartition> {
    if y_train.is_empty() {
        return Err(PrestoError::EmptyTarget);
    }
    if levels.is_empty() {
        return Err(PrestoError::BadQuantileCount(0));
    }
    let mut sorted = y_train.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut sorted_levels = levels.to_vec();
    sorted_levels.sort_by(f64::total_cmp);

    let y_min = sorted[0];
    let y_max = sorted[sorted.len() - 1];
    let mut anchors = Vec::with_capacity(levels.len() + 2);
    anchors.push(y_min);
    anchors.extend(sorted_levels.iter().map(|&z| quantile_of_sorted(&sorted, z)));
    anchors.push(y_max);

    // Min, midpoints of neighboring anchors, max; extend bins if requested.
    let mut edges = Vec::with_capacity(anchors.len() + 3);
    edges.push(y_min);
    edges.extend(anchors.windows(2).map(|p| 0.5 * (p[0] + p[1])));
    edges.push(y_max);
    if let Some(params) = extend {
        params.validate()?;
        let u = quantile_of_sorted(&sorted, params.lower_quantile);
        let v = quantile_of_sorted(&sorted, params.upper_quantile);
        let w = (v - u) * params.scale;
        edges.push(y_min - w);
        edges.push(y_max + w);
    }
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    if edges.len() < 2 {
        return Err(PrestoError::DegeneratePartition(y_min));
    }
    BinPartition::new(edges)
}

/// RandQuantile: draw `num_quantiles` iid Uniform[0,1] levels and bin the
/// target at midpoints of the corresponding empirical quantiles. Duplicate
/// values collapse, so the bin count may come out below `num_quantiles + 2`.
pub fn rand_quantile_edges(
    y_train: &[f64],
    num_quantiles: usize,
    extend: Option<ExtendParams>,
    rng: &mut impl Rng,
) -> Result<BinPartition> {
    if num_quantiles < 1 {
        return Err(PrestoError::BadQuantileCount(num_quantiles));
    }
    let levels: Vec<f64> = (0..num_quantiles).map(|_| rng.random::<f64>()).collect();
    edges_from_quantile_levels(y_train, &levels, extend)
}

/// The fixed method: the grid itself is the partition.
pub fn fixed_edges(grid: &[f64]) -> Result<BinPartition> {
    BinPartition::new(grid.to_vec())
}

/// The fixed-rss method: always keep the grid endpoints, sample
/// `subset_size` interior points uniformly without replacement.
pub fn fixed_rss_edges(
    grid: &[f64],
    subset_size: usize,
    rng: &mut impl Rng,
) -> Result<BinPartition> {
    let full = BinPartition::new(grid.to_vec())?;
    let interior = full.edges().len() - 2;
    if subset_size > interior {
        return Err(PrestoError::SubsetTooLarge {
            subset: subset_size,
            interior,
        });
    }
    let mut edges = Vec::with_capacity(subset_size + 2);
    edges.push(full.low());
    if subset_size > 0 {
        let picks = rand::seq::index::sample(rng, interior, subset_size);
        edges.extend(picks.iter().map(|i| full.edges()[i + 1]));
    }
    edges.push(full.high());
    edges.sort_by(f64::total_cmp);
    BinPartition::new(edges)
}

/// Map each target value to its 0-indexed bin. Values must lie inside the
/// partition range; the maximum edge maps to the last bin.
pub fn discretize(y: &[f64], partition: &BinPartition) -> Result<Vec<usize>> {
    y.iter()
        .map(|&v| {
            partition.bin_of(v).ok_or(PrestoError::OutOfPartitionRange {
                value: v,
                low: partition.low(),
                high: partition.high(),
            })
        })
        .collect()
}

/// Like [`discretize`] but values beyond the partition range take the nearest
/// outer bin. Validation folds are labeled this way: a partition is drawn
/// from training targets only, so a validation extreme can fall past its
/// ends, and the outer bin is the class such a value would belong to.
pub fn discretize_clamped(y: &[f64], partition: &BinPartition) -> Vec<usize> {
    y.iter()
        .map(|&v| match partition.bin_of(v) {
            Some(bin) => bin,
            None if v < partition.low() => 0,
            None => partition.num_bins() - 1,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zero_to_ten() -> Vec<f64> {
        (0..=10).map(f64::from).collect()
    }

    #[test]
    fn quantile_rule_interpolates_order_statistics() {
        let sorted = zero_to_ten();
        assert_eq!(quantile_of_sorted(&sorted, 0.5), 5.0);
        assert_eq!(quantile_of_sorted(&sorted, 0.25), 2.5);
        assert_eq!(quantile_of_sorted(&sorted, 0.0), 0.0);
        assert_eq!(quantile_of_sorted(&sorted, 1.0), 10.0);
    }

    #[test]
    fn traced_single_level_midpoints() {
        let edges = edges_from_quantile_levels(&zero_to_ten(), &[0.5], None).unwrap();
        assert_eq!(edges.edges(), &[0.0, 2.5, 7.5, 10.0]);
    }

    #[test]
    fn traced_single_level_with_extend() {
        let extend = ExtendParams::new(0.25, 0.75, 1.0).unwrap();
        let edges = edges_from_quantile_levels(&zero_to_ten(), &[0.5], Some(extend)).unwrap();
        assert_eq!(edges.edges(), &[-5.0, 0.0, 2.5, 7.5, 10.0, 15.0]);
    }

    #[test]
    fn constant_target_is_degenerate() {
        let y = vec![3.0; 8];
        assert!(matches!(
            edges_from_quantile_levels(&y, &[0.5], None),
            Err(PrestoError::DegeneratePartition(_))
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(rand_quantile_edges(&y, 5, None, &mut rng).is_err());
    }

    #[test]
    fn rand_quantile_contains_observed_range() {
        let y: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin() * 4.0).collect();
        let y_min = y.iter().copied().fold(f64::INFINITY, f64::min);
        let y_max = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let part = rand_quantile_edges(&y, 25, None, &mut rng).unwrap();
        assert!(part.edges().contains(&y_min));
        assert!(part.edges().contains(&y_max));
        assert!(part.edges().windows(2).all(|p| p[0] < p[1]));

        let extend = ExtendParams::new(0.25, 0.75, 0.25).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let wide = rand_quantile_edges(&y, 25, Some(extend), &mut rng).unwrap();
        assert!(wide.low() < y_min && wide.high() > y_max);
        // Every training value maps to a class.
        assert!(discretize(&y, &wide).is_ok());
    }

    #[test]
    fn fixed_grid_verbatim() {
        let grid = [2.0, 2.5, 3.5, 4.5, 5.5, 6.5, 7.5, 8.0];
        let part = fixed_edges(&grid).unwrap();
        assert_eq!(part.edges(), &grid);
        assert_eq!(part.num_bins(), 7);

        assert_eq!(fixed_edges(&[0.0, 1.0]).unwrap().num_bins(), 1);
        assert!(fixed_edges(&[1.0, 1.0, 2.0]).is_err());
    }

    #[test]
    fn fixed_rss_keeps_endpoints() {
        let grid = [0.0, 1.0, 2.0, 3.0];
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let all = fixed_rss_edges(&grid, 2, &mut rng).unwrap();
        assert_eq!(all.edges(), &grid);
        let none = fixed_rss_edges(&grid, 0, &mut rng).unwrap();
        assert_eq!(none.edges(), &[0.0, 3.0]);
        assert!(matches!(
            fixed_rss_edges(&grid, 3, &mut rng),
            Err(PrestoError::SubsetTooLarge { .. })
        ));
    }

    #[test]
    fn fixed_rss_naval_style_count() {
        let grid: Vec<f64> = (0..=50).map(|i| 0.950 + 0.001 * i as f64).collect();
        assert_eq!(grid.len(), 51);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let part = fixed_rss_edges(&grid, 20, &mut rng).unwrap();
        assert_eq!(part.edges().len(), 22);
        assert_eq!(part.low(), 0.950);
        assert_eq!(part.high(), 1.0);
    }

    #[test]
    fn discretize_boundary_rules() {
        let part = BinPartition::new(vec![0.0, 2.5, 7.5, 10.0]).unwrap();
        assert_eq!(discretize(&[2.5], &part).unwrap(), vec![1]);
        assert_eq!(discretize(&[10.0], &part).unwrap(), vec![2]);
        assert_eq!(discretize(&[0.0], &part).unwrap(), vec![0]);
        let err = discretize(&[11.0], &part).unwrap_err();
        assert!(err.to_string().contains("11"), "{err}");
    }

    #[test]
    fn clamped_discretize_uses_outer_bins() {
        let part = BinPartition::new(vec![0.0, 2.5, 7.5, 10.0]).unwrap();
        assert_eq!(discretize_clamped(&[-3.0, 5.0, 14.0], &part), vec![0, 1, 2]);
    }

    #[test]
    fn method_validation() {
        assert!(IntervalMethod::RandQuantile {
            num_quantiles: 0,
            extend: None
        }
        .validate()
        .is_err());
        assert!(ExtendParams::new(0.75, 0.25, 1.0).is_err());
        assert!(ExtendParams::new(0.25, 0.75, -1.0).is_err());
        assert!(IntervalMethod::Fixed { grid: vec![1.0] }.validate().is_err());
        assert!(IntervalMethod::FixedRss {
            grid: vec![0.0, 1.0, 2.0],
            subset_size: 2
        }
        .validate()
        .is_err());
    }

    #[test]
    fn method_serde_tagging() {
        let m = IntervalMethod::RandQuantile {
            num_quantiles: 25,
            extend: Some(ExtendParams::new(0.25, 0.75, 0.25).unwrap()),
        };
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"method\":\"rand_quantile\""), "{json}");
        let back: IntervalMethod = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
        assert!(serde_json::from_str::<IntervalMethod>(
            r#"{"method":"rand_quantile","num_quantiles":5,"typo":1}"#
        )
        .is_err());
    }
}
