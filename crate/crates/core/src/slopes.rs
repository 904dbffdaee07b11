//! Pairwise slopes and the three pairing strategies.
//!
//! * all pairs: `C(n, 2)` slopes, used by full Theil-Sen.
//! * sorted half: `floor(n/2)` slopes between the j-th smallest point and
//!   the one `ceil(n/2)` positions above it.
//! * partition and permute, then `k` random circular matchings between the
//!   low-x bin and the high-x bin: `k * floor(n/2)` slopes.

use std::cmp::Ordering;
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::{DataPoint, Dataset};
use crate::error::{Error, Result};

/// A slope on the extended real line. Never NaN.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSlope(f64);

impl ExtendedSlope {
    pub const POS_INFINITY: Self = Self(f64::INFINITY);
    pub const NEG_INFINITY: Self = Self(f64::NEG_INFINITY);

    /// `None` for NaN.
    pub fn new(value: f64) -> Option<Self> {
        (!value.is_nan()).then_some(Self(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    /// Clamps into `[-range, range]`; infinities land on the endpoints.
    pub fn clamp_to_range(self, range: f64) -> f64 {
        self.0.clamp(-range, range)
    }
}

impl Eq for ExtendedSlope {}

impl PartialOrd for ExtendedSlope {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedSlope {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl fmt::Display for ExtendedSlope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Slope of the unordered pair `{a, b}`.
///
/// The pair is put in `(x, y)` order first, so the sign of a vertical
/// slope does not depend on argument order. Coincident points have slope 0.
pub fn slope(a: DataPoint, b: DataPoint) -> ExtendedSlope {
    let (lo, hi) = match a.canonical_cmp(&b) {
        Ordering::Greater => (b, a),
        _ => (a, b),
    };
    let dx = hi.x - lo.x;
    let dy = hi.y - lo.y;
    if dx == 0.0 {
        if dy == 0.0 {
            ExtendedSlope(0.0)
        } else {
            ExtendedSlope(dy.signum() * f64::INFINITY)
        }
    } else {
        let s = dy / dx;
        if s.is_nan() {
            // both differences overflowed
            ExtendedSlope((hi.y / 2.0 - lo.y / 2.0) / (hi.x / 2.0 - lo.x / 2.0))
        } else {
            ExtendedSlope(s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SlopeMultiset {
    slopes: Vec<ExtendedSlope>,
}

impl SlopeMultiset {
    pub fn new(slopes: Vec<ExtendedSlope>) -> Self {
        Self { slopes }
    }

    /// Builds a multiset from raw values. NaN is rejected.
    pub fn from_values(values: &[f64]) -> Result<Self> {
        values
            .iter()
            .map(|&v| {
                if v.is_nan() {
                    Err(Error::invalid("slope", v, "must not be NaN"))
                } else {
                    Ok(ExtendedSlope(v))
                }
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.slopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slopes.is_empty()
    }

    pub fn as_slice(&self) -> &[ExtendedSlope] {
        &self.slopes
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.slopes.iter().map(|s| s.0)
    }

    pub fn sorted(&self) -> Vec<ExtendedSlope> {
        let mut v = self.slopes.clone();
        v.sort_unstable();
        v
    }
}

impl FromIterator<ExtendedSlope> for SlopeMultiset {
    fn from_iter<I: IntoIterator<Item = ExtendedSlope>>(iter: I) -> Self {
        Self::new(iter.into_iter().collect())
    }
}

/// Slopes over all `C(n, 2)` unordered pairs, degenerate pairs included.
pub fn all_pairs_slopes(d: &Dataset) -> SlopeMultiset {
    let pts = d.points();
    let n = pts.len();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for (i, &a) in pts.iter().enumerate() {
        for &b in &pts[i + 1..] {
            out.push(slope(a, b));
        }
    }
    SlopeMultiset::new(out)
}

/// Slopes of the abbreviated ("half") method on `(x, y)`-sorted points.
pub fn sorted_half_slopes(d: &Dataset) -> SlopeMultiset {
    let sorted = d.canonical_order();
    let n = sorted.len();
    let half = n / 2;
    let offset = n.div_ceil(2);
    (0..half)
        .map(|j| slope(sorted[j], sorted[offset + j]))
        .collect()
}

/// One side of the low-x / high-x split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bin(pub Vec<DataPoint>);

impl Bin {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.0
    }
}

/// Splits into the `floor(n/2)` smallest and `ceil(n/2)` largest points
/// under `(x, y)` order, then shuffles each bin uniformly.
pub fn partition_and_permute<R: Rng + ?Sized>(d: &Dataset, rng: &mut R) -> (Bin, Bin) {
    let mut lower = d.canonical_order();
    let mut upper = lower.split_off(d.len() / 2);
    lower.shuffle(rng);
    upper.shuffle(rng);
    (Bin(lower), Bin(upper))
}

/// The concatenation of `k` circular matchings between two bins.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matching {
    pub pairs: Vec<(DataPoint, DataPoint)>,
    pub k: usize,
    /// The drawn shift `r_p` of each matching, in `1..=|upper bin|`.
    pub offsets: Vec<usize>,
}

impl Matching {
    pub fn slopes(&self) -> SlopeMultiset {
        self.pairs.iter().map(|&(a, b)| slope(a, b)).collect()
    }
}

fn check_bins(lower: &Bin, upper: &Bin) -> Result<()> {
    if lower.is_empty() || upper.is_empty() {
        return Err(Error::EmptyBin);
    }
    if upper.len() != lower.len() && upper.len() != lower.len() + 1 {
        return Err(Error::BinSizeMismatch {
            lower: lower.len(),
            upper: upper.len(),
        });
    }
    Ok(())
}

/// Draws `k` shifts uniformly from `1..=|upper|`, with replacement, and
/// matches the bins with them.
pub fn match_bins<R: Rng + ?Sized>(
    lower: &Bin,
    upper: &Bin,
    k: usize,
    rng: &mut R,
) -> Result<Matching> {
    check_bins(lower, upper)?;
    if k == 0 {
        return Err(Error::invalid("k", 0.0, "must be at least 1"));
    }
    let m = upper.len();
    let offsets: Vec<usize> = (0..k).map(|_| rng.random_range(1..=m)).collect();
    match_bins_with_offsets(lower, upper, &offsets)
}

/// Deterministic core of [`match_bins`]: for each shift `r`, the i-th
/// lower point (1-indexed) is paired with upper point `(i + r) mod m`
/// (0-indexed).
pub fn match_bins_with_offsets(lower: &Bin, upper: &Bin, offsets: &[usize]) -> Result<Matching> {
    check_bins(lower, upper)?;
    if offsets.is_empty() {
        return Err(Error::invalid("k", 0.0, "must be at least 1"));
    }
    let m = upper.len();
    let mut pairs = Vec::with_capacity(offsets.len() * lower.len());
    for &r in offsets {
        for (i, &a) in lower.0.iter().enumerate() {
            pairs.push((a, upper.0[(i + 1 + r) % m]));
        }
    }
    Ok(Matching {
        pairs,
        k: offsets.len(),
        offsets: offsets.to_vec(),
    })
}

/// Partition, permute, and draw `k` matchings in one go; returns their slopes.
pub fn k_matching_slopes<R: Rng + ?Sized>(
    d: &Dataset,
    k: usize,
    rng: &mut R,
) -> Result<SlopeMultiset> {
    let (lower, upper) = partition_and_permute(d, rng);
    Ok(match_bins(&lower, &upper, k, rng)?.slopes())
}
