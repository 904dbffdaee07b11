//! The widened exponential mechanism for quantiles.
//!
//! Candidate outputs are the reals in `[-R, R]`. For a slope multiset `s`
//! of size `N` (clamped to the range) and a target quantile `q`, the utility
//! of `y` is
//!
//! ```text
//! u(y) = -min { dist(qN, rank(z)) : z in [y - theta, y + theta] ∩ [-R, R] }
//! rank(z) = [ #{ i : s_i < z }, #{ i : s_i <= z } ]
//! ```
//!
//! The rank of `z` is the integer range it can take when ties at `z` are
//! split either way; for distinct slopes this is the usual strict rank
//! almost everywhere. A point mass of slopes therefore has utility 0 within
//! `theta` of it, which is what lets the mechanism concentrate there.
//!
//! The mechanism draws `y` with density proportional to
//! `exp(eps_mech * u(y) / 2)`. Changing one slope moves both ends of every
//! `rank(z)` by at most one, so `u` has sensitivity 1 and the mechanism is
//! `eps_mech`-DP with respect to single-slope changes.
//!
//! `u` is constant between consecutive points of
//! `{-R, R} ∪ {s_i ± theta}`, so the output density is piecewise constant
//! and can be computed exactly ([`exact_density`]). Sampling picks a piece
//! by the Gumbel-max trick on log masses and then a uniform point inside it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::slopes::{ExtendedSlope, SlopeMultiset};

/// Parameters of one mechanism invocation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileQuery {
    /// Target quantile in `(0, 1)`.
    pub q: f64,
    /// Half-width `R` of the output range `[-R, R]`.
    pub range: f64,
    /// Widening radius.
    pub theta: f64,
    /// Privacy parameter with respect to changing a single slope.
    pub eps_mech: f64,
}

impl QuantileQuery {
    /// Validates the query. `theta >= range` is allowed here (the utility
    /// is then constant); the estimators require `theta < range`.
    pub fn new(q: f64, range: f64, theta: f64, eps_mech: f64) -> Result<Self> {
        error::open_unit("q", q)?;
        error::positive("range", range)?;
        error::positive("theta", theta)?;
        error::positive("eps_mech", eps_mech)?;
        Ok(Self {
            q,
            range,
            theta,
            eps_mech,
        })
    }

    pub fn median(range: f64, theta: f64, eps_mech: f64) -> Result<Self> {
        Self::new(0.5, range, theta, eps_mech)
    }

    fn validate(&self) -> Result<()> {
        Self::new(self.q, self.range, self.theta, self.eps_mech).map(|_| ())
    }
}

/// Maps every slope into `[-range, range]`; `±inf` become `±range`.
pub fn clamp_slopes(s: &SlopeMultiset, range: f64) -> SlopeMultiset {
    s.as_slice()
        .iter()
        .map(|v| ExtendedSlope::new(v.clamp_to_range(range)).expect("clamped slope is a number"))
        .collect()
}

/// Sorted clamped slopes and the target rank.
#[derive(Debug, Clone)]
struct RankProfile {
    sorted: Vec<f64>,
    target: f64,
    range: f64,
    theta: f64,
}

impl RankProfile {
    fn new(s: &SlopeMultiset, query: &QuantileQuery) -> Self {
        let mut sorted: Vec<f64> = s.values().map(|v| v.clamp(-query.range, query.range)).collect();
        sorted.sort_unstable_by(f64::total_cmp);
        Self {
            target: query.q * sorted.len() as f64,
            sorted,
            range: query.range,
            theta: query.theta,
        }
    }

    fn utility(&self, y: f64) -> f64 {
        // Over the window, rank(z) sweeps [#{s < y - theta}, #{s <= y + theta}]
        // (a tie at z may be split either way). Clipping the window to the
        // range changes neither count since the slopes are clamped.
        let below = self.sorted.partition_point(|&v| v < y - self.theta) as f64;
        let through = self.sorted.partition_point(|&v| v <= y + self.theta) as f64;
        -(below - self.target).max(self.target - through).max(0.0)
    }

    fn breakpoints(&self) -> Vec<f64> {
        let r = self.range;
        let mut pts = Vec::with_capacity(2 * self.sorted.len() + 2);
        pts.push(-r);
        pts.push(r);
        for &s in &self.sorted {
            for b in [s - self.theta, s + self.theta] {
                if b > -r && b < r {
                    pts.push(b);
                }
            }
        }
        pts.sort_unstable_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

/// Utility of `y` (at most 0; half-integral when `qN` is).
///
/// Slopes are clamped to the query range before ranking.
pub fn widened_utility(s: &SlopeMultiset, query: &QuantileQuery, y: f64) -> Result<f64> {
    query.validate()?;
    if !(y >= -query.range && y <= query.range) {
        return Err(Error::OutsideRange {
            y,
            range: query.range,
        });
    }
    Ok(RankProfile::new(s, query).utility(y))
}

/// One constant piece of the output density.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityPiece {
    pub lo: f64,
    pub hi: f64,
    pub utility: f64,
    /// `eps_mech * utility / 2 + ln(hi - lo)`: unnormalized log mass.
    pub log_weight: f64,
}

/// The exact output density of the mechanism, piecewise constant on
/// `[-R, R]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseDensity {
    pieces: Vec<DensityPiece>,
    log_normalizer: f64,
    eps_mech: f64,
}

impl PiecewiseDensity {
    pub fn pieces(&self) -> &[DensityPiece] {
        &self.pieces
    }

    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    /// Piece boundaries, from `-R` to `R`.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut b: Vec<f64> = self.pieces.iter().map(|p| p.lo).collect();
        if let Some(last) = self.pieces.last() {
            b.push(last.hi);
        }
        b
    }

    /// Probability of piece `i`.
    pub fn mass(&self, i: usize) -> f64 {
        (self.pieces[i].log_weight - self.log_normalizer).exp()
    }

    pub fn total_mass(&self) -> f64 {
        (0..self.pieces.len()).map(|i| self.mass(i)).sum()
    }

    fn piece_index(&self, y: f64) -> Option<usize> {
        let first = self.pieces.first()?;
        let last = self.pieces.last()?;
        if y < first.lo || y > last.hi {
            return None;
        }
        let i = self.pieces.partition_point(|p| p.hi <= y);
        Some(i.min(self.pieces.len() - 1))
    }

    /// Log density at `y`; `-inf` outside the range.
    pub fn log_density(&self, y: f64) -> f64 {
        match self.piece_index(y) {
            Some(i) => self.eps_mech * self.pieces[i].utility / 2.0 - self.log_normalizer,
            None => f64::NEG_INFINITY,
        }
    }

    pub fn density(&self, y: f64) -> f64 {
        self.log_density(y).exp()
    }

    /// Probability of `[a, b]`.
    pub fn probability(&self, a: f64, b: f64) -> f64 {
        self.pieces
            .iter()
            .map(|p| {
                let len = (p.hi.min(b) - p.lo.max(a)).max(0.0);
                if len == 0.0 {
                    0.0
                } else {
                    (self.eps_mech * p.utility / 2.0 - self.log_normalizer).exp() * len
                }
            })
            .sum()
    }

    /// Largest `|ln f(y) - ln g(y)|` over the range. Both densities are
    /// constant between points of the union of their breakpoints, so
    /// checking the midpoints of that partition is exhaustive.
    pub fn max_abs_log_ratio(&self, other: &Self) -> f64 {
        let mut pts = self.breakpoints();
        pts.extend(other.breakpoints());
        pts.sort_unstable_by(f64::total_cmp);
        pts.dedup();
        pts.windows(2)
            .filter(|w| w[1] > w[0])
            .map(|w| {
                let mid = 0.5 * (w[0] + w[1]);
                (self.log_density(mid) - other.log_density(mid)).abs()
            })
            .fold(0.0, f64::max)
    }

    /// Draws one output: a piece by Gumbel-max over log masses, then a
    /// uniform point inside it.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut best = (f64::NEG_INFINITY, 0);
        for (i, p) in self.pieces.iter().enumerate() {
            let key = p.log_weight + standard_gumbel(rng);
            if key > best.0 {
                best = (key, i);
            }
        }
        let p = &self.pieces[best.1];
        let y = p.lo + (p.hi - p.lo) * rng.random::<f64>();
        y.clamp(p.lo, p.hi)
    }
}

fn standard_gumbel<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return -(-u.ln()).ln();
        }
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// The exact, normalized density that [`dpwide_sample`] draws from.
pub fn exact_density(s: &SlopeMultiset, query: &QuantileQuery) -> Result<PiecewiseDensity> {
    query.validate()?;
    if s.is_empty() {
        return Err(Error::EmptySlopes);
    }
    let profile = RankProfile::new(s, query);
    let pieces: Vec<DensityPiece> = profile
        .breakpoints()
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let utility = profile.utility(0.5 * (w[0] + w[1]));
            DensityPiece {
                lo: w[0],
                hi: w[1],
                utility,
                log_weight: query.eps_mech * utility / 2.0 + (w[1] - w[0]).ln(),
            }
        })
        .collect();
    let log_normalizer = log_sum_exp(pieces.iter().map(|p| p.log_weight));
    Ok(PiecewiseDensity {
        pieces,
        log_normalizer,
        eps_mech: query.eps_mech,
    })
}

/// One draw of the widened exponential mechanism. Always in `[-R, R]`.
pub fn dpwide_sample<R: Rng + ?Sized>(
    s: &SlopeMultiset,
    query: &QuantileQuery,
    rng: &mut R,
) -> Result<f64> {
    Ok(exact_density(s, query)?.sample(rng))
}
