//! Slope estimators: OLS, Theil-Sen, Theil-Sen Half, and the private
//! `DPTheilSen` / `DPTheilSenkHalf`.
//!
//! The private estimators feed their slopes to the widened exponential
//! mechanism with the dataset-level budget divided by the number of slopes a
//! single point can touch: `n - 1` for all pairs, `2k` for `k` matchings
//! (each point sits in at most `k` slopes, and replacing a point can change
//! one member of each bin).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dpwide::{dpwide_sample, exact_density, PiecewiseDensity, QuantileQuery};
use crate::error::{self, Error, Result};
use crate::slopes::{all_pairs_slopes, k_matching_slopes, sorted_half_slopes, ExtendedSlope, SlopeMultiset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Ols,
    TheilSen,
    TheilSenHalf,
    DpTheilSen,
    DpTheilSenKHalf,
}

impl Variant {
    pub fn is_private(self) -> bool {
        matches!(self, Variant::DpTheilSen | Variant::DpTheilSenKHalf)
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::Ols => "ols",
            Variant::TheilSen => "theil-sen",
            Variant::TheilSenHalf => "theil-sen-half",
            Variant::DpTheilSen => "dp-theil-sen",
            Variant::DpTheilSenKHalf => "dp-theil-sen-k-half",
        }
    }
}

/// What a fit consumed and saw.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FitMeta {
    /// Dataset-level privacy budget spent.
    pub epsilon: Option<f64>,
    /// Budget handed to the mechanism per slope.
    pub eps_mech: Option<f64>,
    pub range: Option<f64>,
    pub theta: Option<f64>,
    pub k: Option<usize>,
    pub n: usize,
    pub n_slopes: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta: f64,
    pub alpha: Option<f64>,
    pub variant: Variant,
    pub meta: FitMeta,
}

/// Hyperparameters shared by the private estimators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivateParams {
    pub epsilon: f64,
    pub range: f64,
    pub theta: f64,
}

impl PrivateParams {
    pub fn new(epsilon: f64, range: f64, theta: f64) -> Result<Self> {
        error::positive("epsilon", epsilon)?;
        error::positive("range", range)?;
        error::positive("theta", theta)?;
        if theta >= range {
            return Err(Error::invalid("theta", theta, "must be smaller than range"));
        }
        Ok(Self {
            epsilon,
            range,
            theta,
        })
    }
}

/// Median of an extended-real multiset; even sizes average the two middle
/// order statistics. Infinite results are errors.
pub fn median(slopes: &SlopeMultiset) -> Result<f64> {
    if slopes.is_empty() {
        return Err(Error::EmptySlopes);
    }
    let mut v: Vec<ExtendedSlope> = slopes.as_slice().to_vec();
    let n = v.len();
    let (_, &mut hi, _) = v.select_nth_unstable(n / 2);
    let m = if n % 2 == 1 {
        hi.value()
    } else {
        let lo = *v[..n / 2].iter().max().expect("non-empty lower half");
        0.5 * (lo.value() + hi.value())
    };
    if m.is_finite() {
        Ok(m)
    } else {
        Err(Error::NonFiniteMedian(m))
    }
}

pub fn ols_fit(d: &Dataset) -> Result<FitResult> {
    if !d.has_x_variation() {
        return Err(Error::ZeroXVariance);
    }
    let (mx, my) = (d.mean_x(), d.mean_y());
    let (sxy, sxx) = d.points().iter().fold((0.0, 0.0), |(sxy, sxx), p| {
        let dx = p.x - mx;
        (sxy + dx * (p.y - my), sxx + dx * dx)
    });
    let beta = sxy / sxx;
    Ok(FitResult {
        beta,
        alpha: Some(my - beta * mx),
        variant: Variant::Ols,
        meta: FitMeta {
            n: d.len(),
            ..FitMeta::default()
        },
    })
}

fn non_private(d: &Dataset, slopes: SlopeMultiset, variant: Variant) -> Result<FitResult> {
    Ok(FitResult {
        beta: median(&slopes)?,
        alpha: None,
        variant,
        meta: FitMeta {
            n: d.len(),
            n_slopes: slopes.len(),
            ..FitMeta::default()
        },
    })
}

pub fn theil_sen(d: &Dataset) -> Result<FitResult> {
    non_private(d, all_pairs_slopes(d), Variant::TheilSen)
}

pub fn theil_sen_half(d: &Dataset) -> Result<FitResult> {
    non_private(d, sorted_half_slopes(d), Variant::TheilSenHalf)
}

/// Mechanism budget of `DPTheilSen`: one point touches `n - 1` slopes.
pub fn dp_theil_sen_eps_mech(epsilon: f64, n: usize) -> f64 {
    epsilon / (n - 1) as f64
}

/// Mechanism budget of `DPTheilSenkHalf`.
pub fn dp_theil_sen_k_half_eps_mech(epsilon: f64, k: usize) -> f64 {
    epsilon / (2 * k) as f64
}

/// The exact output density of [`dp_theil_sen`] on `d`.
pub fn dp_theil_sen_density(d: &Dataset, params: &PrivateParams) -> Result<PiecewiseDensity> {
    let query = QuantileQuery::median(
        params.range,
        params.theta,
        dp_theil_sen_eps_mech(params.epsilon, d.len()),
    )?;
    exact_density(&all_pairs_slopes(d), &query)
}

pub fn dp_theil_sen<R: Rng + ?Sized>(
    d: &Dataset,
    params: &PrivateParams,
    rng: &mut R,
) -> Result<FitResult> {
    let slopes = all_pairs_slopes(d);
    let eps_mech = dp_theil_sen_eps_mech(params.epsilon, d.len());
    let query = QuantileQuery::median(params.range, params.theta, eps_mech)?;
    let beta = dpwide_sample(&slopes, &query, rng)?;
    Ok(private_result(d, params, Variant::DpTheilSen, eps_mech, None, slopes.len(), beta))
}

pub fn dp_theil_sen_k_half<R: Rng + ?Sized>(
    d: &Dataset,
    params: &PrivateParams,
    k: usize,
    rng: &mut R,
) -> Result<FitResult> {
    if k == 0 {
        return Err(Error::invalid("k", 0.0, "must be at least 1"));
    }
    let eps_mech = dp_theil_sen_k_half_eps_mech(params.epsilon, k);
    let query = QuantileQuery::median(params.range, params.theta, eps_mech)?;
    let slopes = k_matching_slopes(d, k, rng)?;
    let beta = dpwide_sample(&slopes, &query, rng)?;
    Ok(private_result(
        d,
        params,
        Variant::DpTheilSenKHalf,
        eps_mech,
        Some(k),
        slopes.len(),
        beta,
    ))
}

fn private_result(
    d: &Dataset,
    params: &PrivateParams,
    variant: Variant,
    eps_mech: f64,
    k: Option<usize>,
    n_slopes: usize,
    beta: f64,
) -> FitResult {
    FitResult {
        beta,
        alpha: None,
        variant,
        meta: FitMeta {
            epsilon: Some(params.epsilon),
            eps_mech: Some(eps_mech),
            range: Some(params.range),
            theta: Some(params.theta),
            k,
            n: d.len(),
            n_slopes,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn line(n: usize, beta: f64, alpha: f64) -> Dataset {
        let xs: Vec<f64> = (0..n).map(|i| i as f64 * 0.5 - 1.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| alpha + beta * x).collect();
        Dataset::from_xy(&xs, &ys).unwrap()
    }

    #[test]
    fn ols_examples() {
        let f = ols_fit(&Dataset::from_xy(&[0.0, 1.0, 2.0, 3.0], &[1.0, 3.0, 5.0, 7.0]).unwrap()).unwrap();
        assert_eq!((f.beta, f.alpha), (2.0, Some(1.0)));
        let f = ols_fit(&Dataset::from_xy(&[0.0, 1.0], &[0.0, 3.0]).unwrap()).unwrap();
        assert_eq!(f.beta, 3.0);
        let f = ols_fit(&Dataset::from_xy(&[0.0, 1.0, 2.0], &[0.0, 0.0, 3.0]).unwrap()).unwrap();
        assert!((f.beta - 1.5).abs() < 1e-15);
        let flat = Dataset::from_xy(&[1.0, 1.0], &[0.0, 3.0]).unwrap();
        assert_eq!(ols_fit(&flat), Err(Error::ZeroXVariance));
    }

    #[test]
    fn theil_sen_examples() {
        let d = Dataset::from_xy(&[0.0, 1.0, 2.0], &[0.0, 1.0, 4.0]).unwrap();
        assert_eq!(theil_sen(&d).unwrap().beta, 2.0);
        let d = Dataset::from_xy(&[0.0, 1.0, 2.0, 3.0], &[0.0, 2.0, 3.0, 9.0]).unwrap();
        assert_eq!(theil_sen_half(&d).unwrap().beta, 2.5);
        let d = Dataset::from_xy(&[0.0, 2.0, 1.0], &[0.0, 5.0, 7.0]).unwrap();
        assert_eq!(theil_sen_half(&d).unwrap().beta, 2.5);
    }

    #[test]
    fn median_conventions() {
        let m = |v: &[f64]| median(&SlopeMultiset::from_values(v).unwrap());
        assert_eq!(m(&[3.0, 1.0, 2.0]), Ok(2.0));
        assert_eq!(m(&[4.0, 1.0, 2.0, 3.0]), Ok(2.5));
        assert_eq!(m(&[f64::INFINITY, 1.0, 2.0]), Ok(2.0));
        assert!(matches!(m(&[f64::INFINITY, f64::NEG_INFINITY]), Err(Error::NonFiniteMedian(_))));
        assert!(matches!(m(&[f64::INFINITY, f64::INFINITY, 0.0]), Err(Error::NonFiniteMedian(_))));
        assert_eq!(m(&[]), Err(Error::EmptySlopes));
        // all points share x: every slope is vertical
        let flat = Dataset::from_xy(&[1.0, 1.0, 1.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!(theil_sen(&flat).is_err());
    }

    #[test]
    fn exact_recovery_on_lines() {
        for n in [2, 3, 10, 101] {
            let d = line(n, -1.75, 4.0);
            assert!((ols_fit(&d).unwrap().beta + 1.75).abs() < 1e-12);
            assert!((theil_sen(&d).unwrap().beta + 1.75).abs() < 1e-12);
            assert!((theil_sen_half(&d).unwrap().beta + 1.75).abs() < 1e-12);
        }
    }

    #[test]
    fn private_params_validation() {
        assert!(PrivateParams::new(1.0, 1.0, 1.0).is_err());
        assert!(PrivateParams::new(0.0, 1.0, 0.1).is_err());
        assert!(PrivateParams::new(1.0, f64::NAN, 0.1).is_err());
        let d = line(6, 1.0, 0.0);
        let p = PrivateParams::new(1.0, 5.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(dp_theil_sen_k_half(&d, &p, 0, &mut rng).is_err());
    }

    #[test]
    fn private_estimators_concentrate_at_huge_epsilon() {
        let d = line(30, 0.8, -2.0);
        let p = PrivateParams::new(1e7, 10.0, 1e-4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..50 {
            let f = dp_theil_sen(&d, &p, &mut rng).unwrap();
            assert!((f.beta - 0.8).abs() <= 1e-4 + 1e-12);
            assert_eq!(f.meta.n_slopes, 435);
            let g = dp_theil_sen_k_half(&d, &p, 3, &mut rng).unwrap();
            assert!((g.beta - 0.8).abs() <= 1e-4 + 1e-12);
            assert_eq!(g.meta.n_slopes, 45);
            assert_eq!(g.meta.eps_mech, Some(1e7 / 6.0));
        }
    }

    #[test]
    fn private_output_in_range() {
        let d = Dataset::from_xy(&[0.0, 0.0, 1.0, 1.0, 2.0], &[0.0, 50.0, -40.0, 3.0, 100.0]).unwrap();
        let p = PrivateParams::new(0.5, 2.0, 0.1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let f = dp_theil_sen(&d, &p, &mut rng).unwrap();
            assert!((-2.0..=2.0).contains(&f.beta));
            let g = dp_theil_sen_k_half(&d, &p, 2, &mut rng).unwrap();
            assert!((-2.0..=2.0).contains(&g.beta));
        }
    }

    proptest! {
        #[test]
        fn non_private_estimators_are_order_invariant(
            pts in prop::collection::vec((-30i32..30, -60i32..60), 3..20),
            seed: u64,
        ) {
            let v: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (f64::from(x), f64::from(y) / 3.0)).collect();
            let mut w = v.clone();
            w.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            let a = Dataset::new(v.into_iter().map(Into::into).collect()).unwrap();
            let b = Dataset::new(w.into_iter().map(Into::into).collect()).unwrap();
            prop_assert_eq!(theil_sen(&a).ok().map(|f| f.beta), theil_sen(&b).ok().map(|f| f.beta));
            prop_assert_eq!(theil_sen_half(&a).ok().map(|f| f.beta), theil_sen_half(&b).ok().map(|f| f.beta));
            if let (Ok(fa), Ok(fb)) = (ols_fit(&a), ols_fit(&b)) {
                prop_assert!((fa.beta - fb.beta).abs() <= 1e-9 * (1.0 + fa.beta.abs()));
            }
        }

        #[test]
        fn theil_sen_within_slope_range(
            pts in prop::collection::vec((-30i32..30, -60i32..60), 3..20),
            gamma in -10i32..10,
        ) {
            let v: Vec<(f64, f64)> = pts.iter().map(|&(x, y)| (f64::from(x), f64::from(y))).collect();
            let a = Dataset::new(v.iter().map(|&p| p.into()).collect()).unwrap();
            if let Ok(f) = theil_sen(&a) {
                let s = all_pairs_slopes(&a).sorted();
                prop_assert!(f.beta >= s[0].value() && f.beta <= s[s.len() - 1].value());
                let g = f64::from(gamma) / 4.0;
                let shifted = Dataset::new(v.iter().map(|&(x, y)| (x, y + g * x).into()).collect()).unwrap();
                // vertical slopes stay put, so the shift is exact only without them
                if s.iter().all(|s| s.is_finite()) && v.iter().enumerate().all(|(i, p)| v[i + 1..].iter().all(|q| q.0 != p.0)) {
                    let f2 = theil_sen(&shifted).unwrap();
                    prop_assert!((f2.beta - f.beta - g).abs() < 1e-9);
                }
            }
        }
    }
}
