//! Private confidence intervals for the slope.
//!
//! Two draws of the widened exponential mechanism, aimed at quantiles
//! `1/2 - b - t` and `1/2 + b + t` of the slope multiset, then pushed outward
//! by `theta`. `b` covers the sampling spread of the slope ranks and `t` the
//! rank error of the mechanism.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::dpwide::{dpwide_sample, QuantileQuery};
use crate::error::{self, Error, Result};
use crate::slopes::{all_pairs_slopes, k_matching_slopes, SlopeMultiset};

/// `Φ⁻¹(q)`, the standard normal quantile.
///
/// Wichura's AS241 (PPND16) rational approximations, accurate to about
/// 1e-16 relative.
pub fn normal_quantile(q: f64) -> Result<f64> {
    error::open_unit("q", q)?;
    Ok(ppnd16(q))
}

#[allow(clippy::excessive_precision)]
fn ppnd16(p: f64) -> f64 {
    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        133.141_667_891_784_377_45,
        1_971.590_950_306_551_442_7,
        13_731.693_765_509_461_125,
        45_921.953_931_549_871_457,
        67_265.770_927_008_700_853,
        33_430.575_583_588_128_105,
        2_509.080_928_730_122_672_7,
    ];
    const B: [f64; 8] = [
        1.0,
        42.313_330_701_600_911_252,
        687.187_007_492_057_908_3,
        5_394.196_021_424_751_107_7,
        21_213.794_301_586_595_867,
        39_307.895_800_092_710_61,
        28_729.085_735_721_942_674,
        5_226.495_278_852_545_925,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        0.241_780_725_177_450_611_77,
        0.022_723_844_989_269_184_583_3,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 8] = [
        1.0,
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        0.689_767_334_985_100_004_55,
        0.148_103_976_427_480_074_59,
        0.015_198_666_563_616_457_196_6,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        0.296_560_571_828_504_891_23,
        0.026_532_189_526_576_123_093,
        0.001_242_660_947_388_078_438_6,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 8] = [
        1.0,
        0.599_832_206_555_887_937_69,
        0.136_929_880_922_735_805_31,
        0.014_875_361_290_850_614_852_5,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];
    fn poly(c: &[f64; 8], x: f64) -> f64 {
        c.iter().rev().fold(0.0, |acc, &k| acc * x + k)
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * poly(&A, r) / poly(&B, r);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let v = if r <= 5.0 {
        r -= 1.6;
        poly(&C, r) / poly(&D, r)
    } else {
        r -= 5.0;
        poly(&E, r) / poly(&F, r)
    };
    if q < 0.0 {
        -v
    } else {
        v
    }
}

/// `c_{q,n} = Φ⁻¹(1 - q) / √n`.
pub fn normal_critical(q: f64, n: usize) -> Result<f64> {
    Ok(normal_quantile(1.0 - q)? / (n as f64).sqrt())
}

/// Which slope construction the interval is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "kebab-case")]
pub enum CiVariant {
    /// All `C(n, 2)` pairs.
    Full,
    /// Low/high partition with a single random matching.
    Half,
    /// Low/high partition with `k` random matchings.
    KHalf { k: usize },
}

impl CiVariant {
    pub fn name(self) -> &'static str {
        match self {
            CiVariant::Full => "ts",
            CiVariant::Half => "half",
            CiVariant::KHalf { .. } => "khalf",
        }
    }

    pub fn k(self) -> Option<usize> {
        match self {
            CiVariant::Full => None,
            CiVariant::Half => Some(1),
            CiVariant::KHalf { k } => Some(k),
        }
    }

    /// Number of slopes the variant builds from `n` points.
    pub fn slope_count(self, n: usize) -> usize {
        match self {
            CiVariant::Full => n * (n - 1) / 2,
            CiVariant::Half => n / 2,
            CiVariant::KHalf { k } => k * (n / 2),
        }
    }

    /// Most slopes one replaced point can change.
    pub fn group_factor(self, n: usize) -> usize {
        match self {
            CiVariant::Full => n - 1,
            CiVariant::Half => 2,
            CiVariant::KHalf { k } => 2 * k,
        }
    }

    /// Multiplier of `c_{p/4,n}` in the rank half-width `b`.
    pub fn spread_factor(self) -> f64 {
        match self {
            CiVariant::Full => (4.0f64 / 9.0).sqrt(),
            CiVariant::Half => std::f64::consts::SQRT_2,
            CiVariant::KHalf { k } => {
                let k = k as f64;
                ((2.0 * k + 1.0) / (3.0 * k)).sqrt()
            }
        }
    }

    /// `b` for Half rests on independent slopes and holds in finite
    /// samples; the other two rely on limiting distributions.
    pub fn asymptotic(self) -> bool {
        !matches!(self, CiVariant::Half)
    }

    pub fn validate(self) -> Result<()> {
        match self {
            CiVariant::KHalf { k: 0 } => Err(Error::invalid("k", 0.0, "must be at least 1")),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiParams {
    /// Dataset-level budget for both draws together.
    pub epsilon: f64,
    /// Miscoverage; the nominal coverage is `1 - p`.
    pub p: f64,
    pub range: f64,
    pub theta: f64,
}

impl CiParams {
    pub fn new(epsilon: f64, p: f64, range: f64, theta: f64) -> Result<Self> {
        error::positive("epsilon", epsilon)?;
        error::open_unit("p", p)?;
        error::positive("range", range)?;
        error::positive("theta", theta)?;
        if theta >= range {
            return Err(Error::invalid("theta", theta, "must be smaller than range"));
        }
        Ok(Self {
            epsilon,
            p,
            range,
            theta,
        })
    }
}

/// Everything about an interval that is fixed before the data are read:
/// it depends on `n` and the hyperparameters only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiPlan {
    pub n: usize,
    pub n_slopes: usize,
    /// Budget of each of the two mechanism draws, per slope.
    pub eps_call: f64,
    pub b: f64,
    pub t: f64,
    pub lower_q: f64,
    pub upper_q: f64,
}

impl CiPlan {
    pub fn new(n: usize, params: &CiParams, variant: CiVariant) -> Result<Self> {
        variant.validate()?;
        if n < Dataset::MIN_POINTS {
            return Err(Error::TooFewPoints {
                required: Dataset::MIN_POINTS,
                actual: n,
            });
        }
        let n_slopes = variant.slope_count(n);
        let eps_call = params.epsilon / 2.0 / variant.group_factor(n) as f64;
        let b = variant.spread_factor() * normal_critical(params.p / 4.0, n)?;
        let log_term =
            (4.0 * (params.range - params.theta) / (params.theta * params.p)).ln().max(0.0);
        let t = log_term / (params.epsilon * n_slopes as f64);
        let spread = b + t;
        let (lower_q, upper_q) = (0.5 - spread, 0.5 + spread);
        if !(lower_q > 0.0 && upper_q < 1.0) {
            return Err(Error::QuantileOutOfRange {
                lower_q,
                upper_q,
                spread,
            });
        }
        Ok(Self {
            n,
            n_slopes,
            eps_call,
            b,
            t,
            lower_q,
            upper_q,
        })
    }

    pub fn lower_query(&self, params: &CiParams) -> Result<QuantileQuery> {
        QuantileQuery::new(self.lower_q, params.range, params.theta, self.eps_call)
    }

    pub fn upper_query(&self, params: &CiParams) -> Result<QuantileQuery> {
        QuantileQuery::new(self.upper_q, params.range, params.theta, self.eps_call)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiMeta {
    pub epsilon: f64,
    pub eps_call: f64,
    pub p: f64,
    pub range: f64,
    pub theta: f64,
    pub k: Option<usize>,
    pub b: f64,
    pub t: f64,
    pub n: usize,
    pub n_slopes: usize,
    pub lower_q: f64,
    pub upper_q: f64,
    pub asymptotic: bool,
    /// The two draws came out inverted and were swapped.
    pub swapped: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lower: f64,
    pub upper: f64,
    pub nominal_coverage: f64,
    pub variant: CiVariant,
    pub meta: CiMeta,
}

impl ConfidenceInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, beta: f64) -> bool {
        self.lower <= beta && beta <= self.upper
    }
}

/// Slopes of `variant` on `d`; random for the matching variants.
pub fn variant_slopes<R: Rng + ?Sized>(
    d: &Dataset,
    variant: CiVariant,
    rng: &mut R,
) -> Result<SlopeMultiset> {
    match variant {
        CiVariant::Full => Ok(all_pairs_slopes(d)),
        CiVariant::Half => k_matching_slopes(d, 1, rng),
        CiVariant::KHalf { k } => k_matching_slopes(d, k, rng),
    }
}

/// `ε`-DP interval for the slope with nominal coverage `1 - p`.
pub fn dp_theil_sen_ci<R: Rng + ?Sized>(
    d: &Dataset,
    params: &CiParams,
    variant: CiVariant,
    rng: &mut R,
) -> Result<ConfidenceInterval> {
    let plan = CiPlan::new(d.len(), params, variant)?;
    let slopes = variant_slopes(d, variant, rng)?;
    debug_assert_eq!(slopes.len(), plan.n_slopes);
    let lo = dpwide_sample(&slopes, &plan.lower_query(params)?, rng)? - params.theta;
    let hi = dpwide_sample(&slopes, &plan.upper_query(params)?, rng)? + params.theta;
    let swapped = lo > hi;
    let (lower, upper) = if swapped { (hi, lo) } else { (lo, hi) };
    Ok(ConfidenceInterval {
        lower,
        upper,
        nominal_coverage: 1.0 - params.p,
        variant,
        meta: CiMeta {
            epsilon: params.epsilon,
            eps_call: plan.eps_call,
            p: params.p,
            range: params.range,
            theta: params.theta,
            k: variant.k(),
            b: plan.b,
            t: plan.t,
            n: plan.n,
            n_slopes: plan.n_slopes,
            lower_q: plan.lower_q,
            upper_q: plan.upper_q,
            asymptotic: variant.asymptotic(),
            swapped,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Upper tail `1 - Φ(x)` for `x >= 0`: composite Simpson on the pdf
    /// over `[x, x + 12]`.
    fn upper_tail(x: f64) -> f64 {
        let pdf = |t: f64| (-0.5 * t * t).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let steps = 20_000;
        let h = 12.0 / steps as f64;
        let mut acc = pdf(x) + pdf(x + 12.0);
        for i in 1..steps {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * pdf(x + h * i as f64);
        }
        acc * h / 3.0
    }

    fn cdf(x: f64) -> f64 {
        if x >= 0.0 {
            1.0 - upper_tail(x)
        } else {
            upper_tail(-x)
        }
    }

    /// Solves `Φ(x) = q` by bisection on the quadrature CDF.
    fn inverse_by_bisection(q: f64) -> f64 {
        let (mut lo, mut hi) = (-12.0, 12.0);
        // work in the smaller tail for precision
        let (target, flip) = if q > 0.5 { (1.0 - q, true) } else { (q, false) };
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let x = 0.5 * (lo + hi);
        if flip {
            -x
        } else {
            x
        }
    }

    #[test]
    fn quantile_reference_values() {
        assert_eq!(normal_quantile(0.5).unwrap(), 0.0);
        assert!((normal_quantile(0.975).unwrap() - 1.959_963_984_540_054).abs() < 1e-12);
        assert!((normal_quantile(0.95).unwrap() - 1.644_853_626_951_472_2).abs() < 1e-12);
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn quantile_matches_quadrature_inverse() {
        let mut qs: Vec<f64> = (1..100).map(|i| f64::from(i) / 100.0).collect();
        qs.extend([1e-6, 1e-5, 1e-4, 0.001, 0.00625, 0.025, 0.975, 0.999, 1.0 - 1e-6]);
        for q in qs {
            let fast = normal_quantile(q).unwrap();
            let slow = inverse_by_bisection(q);
            assert!((fast - slow).abs() < 1e-9, "q={q}: {fast} vs {slow}");
            assert!((cdf(fast) - q).abs() < 1e-9, "q={q}");
        }
    }

    #[test]
    fn half_variant_b_value() {
        let params = CiParams::new(1.0, 0.1, 10.0, 0.05).unwrap();
        let plan = CiPlan::new(100, &params, CiVariant::Half).unwrap();
        let expected = std::f64::consts::SQRT_2 * 1.959_963_984_540_054 / 10.0;
        assert!((plan.b - expected).abs() < 1e-12);
        assert!((plan.b - 0.2772).abs() < 1e-4);
        assert_eq!(plan.n_slopes, 50);
        assert_eq!(plan.eps_call, 0.25);
    }

    #[test]
    fn plan_rejects_infeasible_quantiles() {
        let params = CiParams::new(0.01, 0.01, 10.0, 0.01).unwrap();
        let err = CiPlan::new(10, &params, CiVariant::Full).unwrap_err();
        assert!(matches!(err, Error::QuantileOutOfRange { .. }));
        assert!(CiParams::new(1.0, 0.1, 1.0, 1.0).is_err());
        assert!(CiParams::new(1.0, 1.0, 1.0, 0.1).is_err());
    }

    #[test]
    fn target_quantiles_straddle_median() {
        let params = CiParams::new(2.0, 0.1, 10.0, 0.05).unwrap();
        for variant in [CiVariant::Full, CiVariant::Half, CiVariant::KHalf { k: 4 }] {
            let plan = CiPlan::new(400, &params, variant).unwrap();
            assert!(plan.lower_q < 0.5 && plan.upper_q > 0.5);
            assert!((plan.upper_q - 0.5 - (0.5 - plan.lower_q)).abs() < 1e-15);
        }
    }

    #[test]
    fn noiseless_line_huge_epsilon_gives_tight_interval() {
        let xs: Vec<f64> = (0..60).map(f64::from).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 * x - 3.0).collect();
        let d = Dataset::from_xy(&xs, &ys).unwrap();
        let theta = 1e-3;
        let params = CiParams::new(1e7, 0.1, 10.0, theta).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for variant in [CiVariant::Full, CiVariant::Half, CiVariant::KHalf { k: 3 }] {
            let ci = dp_theil_sen_ci(&d, &params, variant, &mut rng).unwrap();
            assert!(ci.contains(1.5), "{ci:?}");
            assert!(ci.width() <= 4.0 * theta + 1e-12);
            assert!(ci.lower <= ci.upper);
        }
    }

    #[test]
    fn interval_is_ordered_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..200).map(|i| f64::from(i) / 199.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 2.0 * x + (x * 91.0).sin() * 3.0).collect();
        let d = Dataset::from_xy(&xs, &ys).unwrap();
        let params = CiParams::new(0.5, 0.2, 4.0, 0.2).unwrap();
        for _ in 0..100 {
            let ci = dp_theil_sen_ci(&d, &params, CiVariant::Half, &mut rng).unwrap();
            assert!(ci.lower <= ci.upper);
            assert!(ci.lower >= -4.2 && ci.upper <= 4.2);
        }
    }
}
