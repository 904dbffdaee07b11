//! Closed-form `(1 - p)`-convergence bounds on `|β̂ - β|` and the widening
//! parameter rule.
//!
//! All rows assume equally spaced x with population standard deviation
//! `sigma_x` and Gaussian errors with standard deviation `sigma_e`.
//! `(1 + o(1))` factors are dropped; rows whose statement is asymptotic
//! carry `asymptotic = true`. Side conditions are evaluated and reported
//! alongside the value, never enforced.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{self, Error, Result};
use crate::intervals::normal_quantile;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundEstimator {
    Ols,
    TheilSen,
    TheilSenHalf,
    DpSuffStats,
    DpTheilSen,
    DpTheilSenHalf,
    DpTheilSenKHalf,
}

impl BoundEstimator {
    pub const ALL: [BoundEstimator; 7] = [
        BoundEstimator::Ols,
        BoundEstimator::TheilSen,
        BoundEstimator::TheilSenHalf,
        BoundEstimator::DpSuffStats,
        BoundEstimator::DpTheilSen,
        BoundEstimator::DpTheilSenHalf,
        BoundEstimator::DpTheilSenKHalf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BoundEstimator::Ols => "ols",
            BoundEstimator::TheilSen => "theil-sen",
            BoundEstimator::TheilSenHalf => "theil-sen-half",
            BoundEstimator::DpSuffStats => "dp-suff-stats",
            BoundEstimator::DpTheilSen => "dp-theil-sen",
            BoundEstimator::DpTheilSenHalf => "dp-theil-sen-half",
            BoundEstimator::DpTheilSenKHalf => "dp-theil-sen-k-half",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|e| e.name() == s)
    }

    pub fn is_asymptotic(self) -> bool {
        matches!(
            self,
            BoundEstimator::TheilSen | BoundEstimator::DpTheilSen | BoundEstimator::DpTheilSenKHalf
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    pub sigma_e: f64,
    pub sigma_x: f64,
    pub n: usize,
    pub p: f64,
    pub epsilon: Option<f64>,
    pub range: Option<f64>,
    pub theta: Option<f64>,
    pub k: Option<usize>,
    pub abs_beta: Option<f64>,
    /// Bound on the magnitude of the input data (DPSuffStats only).
    pub r_u: Option<f64>,
    /// Largest `tau` for which the normal approximation is trusted.
    /// Defaults to `1 / √n`.
    pub tau_n: Option<f64>,
}

impl BoundParams {
    pub fn new(sigma_e: f64, sigma_x: f64, n: usize, p: f64) -> Self {
        Self {
            sigma_e,
            sigma_x,
            n,
            p,
            epsilon: None,
            range: None,
            theta: None,
            k: None,
            abs_beta: None,
            r_u: None,
            tau_n: None,
        }
    }

    pub fn with_privacy(mut self, epsilon: f64, range: f64, theta: f64) -> Self {
        self.epsilon = Some(epsilon);
        self.range = Some(range);
        self.theta = Some(theta);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_e.is_finite() && self.sigma_e >= 0.0) {
            return Err(Error::invalid("sigma_e", self.sigma_e, "must be finite and >= 0"));
        }
        error::positive("sigma_x", self.sigma_x)?;
        if self.n < 2 {
            return Err(Error::invalid("n", self.n as f64, "must be at least 2"));
        }
        error::open_unit("p", self.p)?;
        for (name, v) in [
            ("epsilon", self.epsilon),
            ("range", self.range),
            ("theta", self.theta),
            ("r_u", self.r_u),
            ("tau_n", self.tau_n),
        ] {
            if let Some(v) = v {
                error::positive(name, v)?;
            }
        }
        if let Some(b) = self.abs_beta {
            if !(b.is_finite() && b >= 0.0) {
                return Err(Error::invalid("abs_beta", b, "must be finite and >= 0"));
            }
        }
        if self.k == Some(0) {
            return Err(Error::invalid("k", 0.0, "must be at least 1"));
        }
        Ok(())
    }

    pub fn tau_n(&self) -> f64 {
        self.tau_n.unwrap_or_else(|| 1.0 / (self.n as f64).sqrt())
    }

    fn require(v: Option<f64>, name: &'static str) -> Result<f64> {
        v.ok_or(Error::MissingParameter(name))
    }

    fn ratio(&self) -> f64 {
        self.sigma_e / self.sigma_x
    }

    fn root_n(&self) -> f64 {
        (self.n as f64).sqrt()
    }
}

/// One evaluated side condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub name: String,
    pub satisfied: bool,
}

impl Constraint {
    fn new(name: impl Into<String>, satisfied: bool) -> Self {
        Self {
            name: name.into(),
            satisfied,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub estimator: BoundEstimator,
    pub value: f64,
    /// Privacy term of the private rows.
    pub tau: Option<f64>,
    pub constraints: Vec<Constraint>,
    pub asymptotic: bool,
}

impl BoundResult {
    pub fn constraints_ok(&self) -> bool {
        self.constraints.iter().all(|c| c.satisfied)
    }
}

/// `c_q = Φ⁻¹(1 - q)`.
fn c(q: f64) -> f64 {
    normal_quantile(1.0 - q).expect("q in (0, 1)")
}

/// Leading constant of the row (multiplies `σ_e/σ_x`).
pub fn efficiency_constant(estimator: BoundEstimator, k: Option<usize>) -> Result<f64> {
    Ok(match estimator {
        BoundEstimator::Ols | BoundEstimator::DpSuffStats => 1.0,
        BoundEstimator::TheilSen | BoundEstimator::DpTheilSen => (PI / 3.0).sqrt(),
        BoundEstimator::TheilSenHalf | BoundEstimator::DpTheilSenHalf => (2.0 * PI / 3.0).sqrt(),
        BoundEstimator::DpTheilSenKHalf => {
            let k = k.ok_or(Error::MissingParameter("k"))? as f64;
            (2.0 * PI * (2.0 * k + 1.0) / (9.0 * k)).sqrt()
        }
    })
}

fn theil_sen_log_argument(params: &BoundParams) -> Result<f64> {
    let range = BoundParams::require(params.range, "range")?;
    let theta = BoundParams::require(params.theta, "theta")?;
    Ok(range / (PI.sqrt() * params.p * theta * params.sigma_e))
}

/// Privacy term `tau` of a private row.
///
/// For the Theil-Sen rows `tau = ln(R / (√π p θ σ_e)) / (ε n)`, which needs
/// `p < R / (√π θ σ_e)` to be positive; a violation is an error here.
pub fn tau(estimator: BoundEstimator, params: &BoundParams) -> Result<f64> {
    params.validate()?;
    let epsilon = BoundParams::require(params.epsilon, "epsilon")?;
    let n = params.n as f64;
    match estimator {
        BoundEstimator::DpSuffStats => {
            let r_u = BoundParams::require(params.r_u, "r_u")?;
            Ok((1.0 - 1.0 / n) * r_u * r_u * (3.0 / params.p).ln()
                / (epsilon * n * params.sigma_x * params.sigma_x))
        }
        BoundEstimator::DpTheilSen | BoundEstimator::DpTheilSenHalf | BoundEstimator::DpTheilSenKHalf => {
            let arg = theil_sen_log_argument(params)?;
            if arg <= 1.0 {
                return Err(Error::InvalidParameter {
                    name: "p",
                    value: params.p,
                    reason: "violates p < R / (sqrt(pi) theta sigma_e); tau would be <= 0",
                });
            }
            Ok(arg.ln() / (epsilon * n))
        }
        _ => Err(Error::InvalidConfig(format!(
            "{} has no privacy term",
            estimator.name()
        ))),
    }
}

pub fn convergence_bound(estimator: BoundEstimator, params: &BoundParams) -> Result<BoundResult> {
    params.validate()?;
    let ratio = params.ratio();
    let root_n = params.root_n();
    let n = params.n as f64;
    let p = params.p;
    let lead = efficiency_constant(estimator, params.k)?;
    let mut constraints = Vec::new();
    let mut tau_value = None;

    let value = match estimator {
        BoundEstimator::Ols | BoundEstimator::TheilSen => lead * ratio * c(p / 4.0) / root_n,
        BoundEstimator::TheilSenHalf => {
            constraints.push(Constraint::new("n > ln(4/p)", n > (4.0 / p).ln()));
            lead * ratio * c(p / 4.0) / root_n
        }
        BoundEstimator::DpSuffStats => {
            let t = tau(estimator, params)?;
            let abs_beta = BoundParams::require(params.abs_beta, "abs_beta")?;
            tau_value = Some(t);
            ratio * c(p / 12.0) / root_n * (1.0 + t) + t * (1.0 + t + abs_beta)
        }
        BoundEstimator::DpTheilSen | BoundEstimator::DpTheilSenHalf | BoundEstimator::DpTheilSenKHalf => {
            let epsilon = BoundParams::require(params.epsilon, "epsilon")?;
            let theta = BoundParams::require(params.theta, "theta")?;
            let arg = theil_sen_log_argument(params)?;
            // reported even when the log argument is out of range
            let t = arg.ln() / (epsilon * n);
            tau_value = Some(t);
            constraints.push(Constraint::new(
                "p < R / (sqrt(pi) theta sigma_e)",
                arg > 1.0,
            ));
            constraints.push(Constraint::new("tau <= tau_n", t <= params.tau_n()));
            if estimator == BoundEstimator::DpTheilSenHalf {
                constraints.push(Constraint::new(
                    "n > 16 ln(16/p)",
                    n > 16.0 * (16.0 / p).ln(),
                ));
            }
            lead * ratio * (c(p / 16.0) / root_n + t) + theta
        }
    };

    Ok(BoundResult {
        estimator,
        value: value.max(0.0),
        tau: tau_value,
        constraints,
        asymptotic: estimator.is_asymptotic(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThetaTerm {
    /// `σ_e / (ε n σ_x)`: spread of the slopes.
    Sampling,
    /// `R exp(-ε n ln(2/p) τ_n)`: keeps `θ` away from 0 for concentrated slopes.
    Concentration,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThetaSuggestion {
    pub theta: f64,
    pub sampling_term: f64,
    pub concentration_term: f64,
    pub dominant: ThetaTerm,
    pub tau_n: f64,
}

/// `θ ≈ max(σ_e / (ε n σ_x), R exp(-ε n ln(2/p) τ_n))`.
pub fn suggest_theta(params: &BoundParams) -> Result<ThetaSuggestion> {
    params.validate()?;
    let epsilon = BoundParams::require(params.epsilon, "epsilon")?;
    let range = BoundParams::require(params.range, "range")?;
    let n = params.n as f64;
    let tau_n = params.tau_n();
    let sampling_term = params.sigma_e / (epsilon * n * params.sigma_x);
    let concentration_term = range * (-epsilon * n * (2.0 / params.p).ln() * tau_n).exp();
    let (theta, dominant) = if sampling_term >= concentration_term {
        (sampling_term, ThetaTerm::Sampling)
    } else {
        (concentration_term, ThetaTerm::Concentration)
    };
    Ok(ThetaSuggestion {
        theta,
        sampling_term,
        concentration_term,
        dominant,
        tau_n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn base() -> BoundParams {
        let mut p = BoundParams::new(1.0, 0.3, 200, 0.1).with_privacy(2.0, 10.0, 0.01);
        p.k = Some(10);
        p.abs_beta = Some(2.0);
        p.r_u = Some(3.0);
        p
    }

    fn value(e: BoundEstimator, p: &BoundParams) -> f64 {
        convergence_bound(e, p).unwrap().value
    }

    #[test]
    fn closed_form_ratios() {
        let p = base();
        assert_relative_eq!(
            value(BoundEstimator::TheilSen, &p) / value(BoundEstimator::Ols, &p),
            (PI / 3.0).sqrt(),
            epsilon = 1e-12
        );
        assert_relative_eq!(
            value(BoundEstimator::TheilSenHalf, &p) / value(BoundEstimator::TheilSen, &p),
            2f64.sqrt(),
            epsilon = 1e-12
        );
        assert!(((PI / 3.0).sqrt() - 1.0233).abs() < 1e-4);
    }

    #[test]
    fn ols_row_by_hand() {
        let p = BoundParams::new(2.0, 0.5, 100, 0.2);
        // Φ⁻¹(0.95) = 1.6448536269514722
        let expected = 4.0 * 1.644_853_626_951_472_2 / 10.0;
        assert_relative_eq!(value(BoundEstimator::Ols, &p), expected, epsilon = 1e-12);
    }

    #[test]
    fn private_limit_recovers_non_private_leading_term() {
        let mut p = base();
        p.epsilon = Some(1e15);
        p.theta = Some(1e-9);
        let dp = value(BoundEstimator::DpTheilSen, &p);
        let np = (PI / 3.0).sqrt() * p.ratio() * c(p.p / 16.0) / p.root_n();
        assert!((dp - np).abs() < 1e-8);
    }

    #[test]
    fn private_rows_dominate_non_private_leading_terms() {
        for eps in [0.1, 1.0, 10.0] {
            for n in [20, 200, 5000] {
                let mut p = base();
                p.epsilon = Some(eps);
                p.n = n;
                let lead = |e| efficiency_constant(e, p.k).unwrap() * p.ratio() * c(p.p / 16.0) / p.root_n();
                for (e, base_row) in [
                    (BoundEstimator::DpTheilSen, BoundEstimator::TheilSen),
                    (BoundEstimator::DpTheilSenHalf, BoundEstimator::TheilSenHalf),
                    (BoundEstimator::DpTheilSenKHalf, BoundEstimator::DpTheilSenKHalf),
                ] {
                    assert!(value(e, &p) >= lead(base_row));
                }
                let suff = value(BoundEstimator::DpSuffStats, &p);
                assert!(suff >= p.ratio() * c(p.p / 12.0) / p.root_n());
            }
        }
    }

    #[test]
    fn k_half_decreases_in_k_toward_limit() {
        let mut p = base();
        let mut last = f64::INFINITY;
        for k in 1..=50 {
            p.k = Some(k);
            let v = value(BoundEstimator::DpTheilSenKHalf, &p);
            assert!(v < last);
            last = v;
        }
        let limit = (4.0 * PI / 9.0).sqrt();
        assert!(efficiency_constant(BoundEstimator::DpTheilSenKHalf, Some(1_000_000)).unwrap() - limit < 1e-6);
        assert!(limit > (PI / 3.0).sqrt());
        assert_relative_eq!(
            efficiency_constant(BoundEstimator::DpTheilSenKHalf, Some(1)).unwrap(),
            efficiency_constant(BoundEstimator::DpTheilSenHalf, None).unwrap(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn range_and_input_scaling() {
        // d bound / d ln R is constant for DPTheilSen
        let at = |r: f64| {
            let mut p = base();
            p.range = Some(r);
            value(BoundEstimator::DpTheilSen, &p)
        };
        let s1 = at(20.0) - at(10.0);
        let s2 = at(40.0) - at(20.0);
        assert_relative_eq!(s1, s2, epsilon = 1e-12);
        let expected = (PI / 3.0).sqrt() * base().ratio() * 2f64.ln() / (2.0 * 200.0);
        assert_relative_eq!(s1, expected, epsilon = 1e-12);

        // DPSuffStats tau is quadratic in r_u
        let tau_at = |r: f64| {
            let mut p = base();
            p.r_u = Some(r);
            tau(BoundEstimator::DpSuffStats, &p).unwrap()
        };
        assert_relative_eq!(tau_at(6.0) / tau_at(3.0), 4.0, epsilon = 1e-12);
        // and linear in |beta|
        let beta_at = |b: f64| {
            let mut p = base();
            p.abs_beta = Some(b);
            value(BoundEstimator::DpSuffStats, &p)
        };
        let t = tau(BoundEstimator::DpSuffStats, &base()).unwrap();
        assert_relative_eq!(beta_at(3.0) - beta_at(2.0), t, epsilon = 1e-12);
        assert_relative_eq!(beta_at(5.0) - beta_at(3.0), 2.0 * t, epsilon = 1e-12);
    }

    #[test]
    fn tau_behaviour() {
        let p = base();
        let t1 = tau(BoundEstimator::DpTheilSen, &p).unwrap();
        let mut q = p;
        q.epsilon = Some(4.0);
        assert_relative_eq!(tau(BoundEstimator::DpTheilSen, &q).unwrap(), t1 / 2.0, epsilon = 1e-15);
        let mut last = 0.0;
        for theta in [1e-2, 1e-4, 1e-8, 1e-16] {
            let mut q = p;
            q.theta = Some(theta);
            let t = tau(BoundEstimator::DpTheilSenHalf, &q).unwrap();
            assert!(t > last);
            last = t;
        }
        let mut bad = p;
        bad.theta = Some(9.0);
        bad.sigma_e = 20.0;
        assert!(tau(BoundEstimator::DpTheilSen, &bad).is_err());
        assert!(tau(BoundEstimator::Ols, &p).is_err());
    }

    #[test]
    fn constraints_are_reported_not_enforced() {
        let mut p = base();
        p.n = 50; // 16 ln(160) ≈ 81.2
        let r = convergence_bound(BoundEstimator::DpTheilSenHalf, &p).unwrap();
        assert!(r.value > 0.0);
        let c = r.constraints.iter().find(|c| c.name == "n > 16 ln(16/p)").unwrap();
        assert!(!c.satisfied);
        assert!(!r.constraints_ok());

        let ok = convergence_bound(BoundEstimator::DpTheilSenHalf, &base()).unwrap();
        assert!(ok.constraints_ok(), "{ok:?}");
    }

    #[test]
    fn missing_parameters_are_named() {
        let p = BoundParams::new(1.0, 0.3, 100, 0.1).with_privacy(1.0, 10.0, 0.01);
        assert_eq!(
            convergence_bound(BoundEstimator::DpSuffStats, &p),
            Err(Error::MissingParameter("r_u"))
        );
        assert_eq!(
            convergence_bound(BoundEstimator::DpTheilSenKHalf, &p),
            Err(Error::MissingParameter("k"))
        );
        let np = BoundParams::new(1.0, 0.3, 100, 0.1);
        assert_eq!(
            convergence_bound(BoundEstimator::DpTheilSen, &np),
            Err(Error::MissingParameter("epsilon"))
        );
        assert!(convergence_bound(BoundEstimator::Ols, &np).is_ok());
    }

    #[test]
    fn theta_rule() {
        // wide slopes: the sampling term wins
        let mut p = BoundParams::new(5.0, 0.1, 100, 0.1).with_privacy(1.0, 10.0, 0.01);
        p.tau_n = Some(1.0);
        let s = suggest_theta(&p).unwrap();
        assert_eq!(s.dominant, ThetaTerm::Sampling);
        assert_relative_eq!(s.theta, 5.0 / (100.0 * 0.1), epsilon = 1e-15);

        // concentrated slopes: the second term keeps theta away from 0
        let mut p = BoundParams::new(1e-12, 1.0, 100, 0.1).with_privacy(0.1, 10.0, 0.01);
        p.tau_n = Some(0.05);
        let s = suggest_theta(&p).unwrap();
        assert_eq!(s.dominant, ThetaTerm::Concentration);
        let expected = 10.0 * (-0.1 * 100.0 * 20f64.ln() * 0.05).exp();
        assert_relative_eq!(s.theta, expected, epsilon = 1e-15);
        assert!(s.theta > 1.0);

        // both terms vanish as eps * n grows
        let p = BoundParams::new(1.0, 0.3, 100_000, 0.1).with_privacy(100.0, 10.0, 0.01);
        assert!(suggest_theta(&p).unwrap().theta < 1e-6);
    }

    #[test]
    fn theta_non_increasing_in_eps_and_n() {
        let mut last = f64::INFINITY;
        for eps in [0.01, 0.1, 0.5, 1.0, 4.0, 20.0] {
            let p = BoundParams::new(1.0, 0.3, 100, 0.1).with_privacy(eps, 10.0, 0.01);
            let t = suggest_theta(&p).unwrap().theta;
            assert!(t <= last);
            last = t;
        }
        let mut last = f64::INFINITY;
        for n in [2, 5, 10, 50, 100, 1000, 10_000] {
            let p = BoundParams::new(1.0, 0.3, n, 0.1).with_privacy(0.3, 10.0, 0.01);
            let t = suggest_theta(&p).unwrap().theta;
            assert!(t <= last);
            last = t;
        }
    }
}
