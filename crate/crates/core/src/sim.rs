//! Monte-Carlo harness for `y = α + β x + e` with fixed x and Gaussian errors.
//!
//! Every trial draws from its own ChaCha8 substream: the key comes from
//! `seed` and the stream id is `(trial << 16) | slot`, where slot 0 generates
//! the data, slot `1 + j` drives estimator `j` and slot `1 + E + j` drives
//! interval `j` (`E` estimators). Trials are therefore independent of
//! scheduling and a report is a pure function of its config.

use std::io::Write;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{population_variance, Dataset};
use crate::error::{Error, Result};
use crate::estimators::{self, FitResult, PrivateParams, Variant};
use crate::intervals::{dp_theil_sen_ci, CiParams, CiVariant, ConfidenceInterval};

pub const SCHEMA_VERSION: u32 = 1;

/// Largest number of estimators plus intervals a config may carry.
pub const MAX_SLOTS: usize = (1 << 16) - 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum XDesign {
    /// `n` points from `lo` to `hi` inclusive.
    EquallySpaced { lo: f64, hi: f64 },
    /// `⌊n/2⌋` points at `lo`, the rest at `hi`.
    TwoPoint { lo: f64, hi: f64 },
    Custom { xs: Vec<f64> },
}

impl XDesign {
    pub fn xs(&self, n: usize) -> Result<Vec<f64>> {
        let xs = match self {
            XDesign::EquallySpaced { lo, hi } => {
                if n < 2 {
                    return Err(Error::InvalidConfig("design needs n >= 2".into()));
                }
                let step = (hi - lo) / (n - 1) as f64;
                (0..n).map(|i| lo + step * i as f64).collect()
            }
            XDesign::TwoPoint { lo, hi } => {
                let low = n / 2;
                (0..n).map(|i| if i < low { *lo } else { *hi }).collect()
            }
            XDesign::Custom { xs } => {
                if xs.len() != n {
                    return Err(Error::InvalidConfig(format!(
                        "custom design has {} x values but n = {n}",
                        xs.len()
                    )));
                }
                xs.clone()
            }
        };
        if xs.iter().any(|x: &f64| !x.is_finite()) {
            return Err(Error::InvalidConfig("design has non-finite x".into()));
        }
        if xs.iter().all(|&x| x == xs[0]) {
            return Err(Error::InvalidConfig("design has no x variation".into()));
        }
        Ok(xs)
    }

    pub fn name(&self) -> String {
        match self {
            XDesign::EquallySpaced { lo, hi } => format!("equally-spaced({lo},{hi})"),
            XDesign::TwoPoint { lo, hi } => format!("two-point({lo},{hi})"),
            XDesign::Custom { .. } => "custom".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub variant: Variant,
    pub epsilon: Option<f64>,
    pub range: Option<f64>,
    pub theta: Option<f64>,
    pub k: Option<usize>,
}

impl EstimatorSpec {
    pub fn non_private(variant: Variant) -> Self {
        Self {
            variant,
            epsilon: None,
            range: None,
            theta: None,
            k: None,
        }
    }

    pub fn private(variant: Variant, params: PrivateParams, k: Option<usize>) -> Self {
        Self {
            variant,
            epsilon: Some(params.epsilon),
            range: Some(params.range),
            theta: Some(params.theta),
            k,
        }
    }

    fn params(&self) -> Result<PrivateParams> {
        PrivateParams::new(
            self.epsilon.ok_or(Error::MissingParameter("epsilon"))?,
            self.range.ok_or(Error::MissingParameter("range"))?,
            self.theta.ok_or(Error::MissingParameter("theta"))?,
        )
    }

    pub fn validate(&self) -> Result<()> {
        if self.variant.is_private() {
            self.params()?;
        }
        if self.variant == Variant::DpTheilSenKHalf {
            match self.k {
                None => return Err(Error::MissingParameter("k")),
                Some(0) => return Err(Error::invalid("k", 0.0, "must be at least 1")),
                Some(_) => {}
            }
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        let mut s = self.variant.name().to_string();
        if let Some(k) = self.k.filter(|_| self.variant == Variant::DpTheilSenKHalf) {
            s.push_str(&format!("[k={k}]"));
        }
        if self.variant.is_private() {
            if let (Some(e), Some(r), Some(t)) = (self.epsilon, self.range, self.theta) {
                s.push_str(&format!("[eps={e},R={r},theta={t}]"));
            }
        }
        s
    }

    pub fn run(&self, d: &Dataset, rng: &mut ChaCha8Rng) -> Result<FitResult> {
        match self.variant {
            Variant::Ols => estimators::ols_fit(d),
            Variant::TheilSen => estimators::theil_sen(d),
            Variant::TheilSenHalf => estimators::theil_sen_half(d),
            Variant::DpTheilSen => estimators::dp_theil_sen(d, &self.params()?, rng),
            Variant::DpTheilSenKHalf => estimators::dp_theil_sen_k_half(
                d,
                &self.params()?,
                self.k.ok_or(Error::MissingParameter("k"))?,
                rng,
            ),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalSpec {
    pub variant: CiVariant,
    pub params: CiParams,
}

impl IntervalSpec {
    pub fn label(&self) -> String {
        let mut s = format!("ci-{}", self.variant.name());
        if let Some(k) = self.variant.k().filter(|_| matches!(self.variant, CiVariant::KHalf { .. })) {
            s.push_str(&format!("[k={k}]"));
        }
        let p = &self.params;
        s.push_str(&format!(
            "[eps={},p={},R={},theta={}]",
            p.epsilon, p.p, p.range, p.theta
        ));
        s
    }

    pub fn run(&self, d: &Dataset, rng: &mut ChaCha8Rng) -> Result<ConfidenceInterval> {
        dp_theil_sen_ci(d, &self.params, self.variant, rng)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma_e: f64,
    pub x_design: XDesign,
    pub trials: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSpec>,
    pub intervals: Vec<IntervalSpec>,
    /// Values of `p` at which the `(1 - p)` error quantile is reported.
    pub report_ps: Vec<f64>,
}

impl SimConfig {
    pub fn new(n: usize, beta: f64, sigma_e: f64, trials: usize, seed: u64) -> Self {
        Self {
            n,
            alpha: 0.0,
            beta,
            sigma_e,
            x_design: XDesign::EquallySpaced { lo: 0.0, hi: 1.0 },
            trials,
            seed,
            estimators: Vec::new(),
            intervals: Vec::new(),
            report_ps: vec![0.1, 0.05],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidConfig("trials must be at least 1".into()));
        }
        if self.n < Dataset::MIN_POINTS {
            return Err(Error::TooFewPoints {
                required: Dataset::MIN_POINTS,
                actual: self.n,
            });
        }
        if !(self.sigma_e.is_finite() && self.sigma_e >= 0.0) {
            return Err(Error::invalid("sigma_e", self.sigma_e, "must be finite and >= 0"));
        }
        if !(self.alpha.is_finite() && self.beta.is_finite()) {
            return Err(Error::InvalidConfig("alpha and beta must be finite".into()));
        }
        self.x_design.xs(self.n)?;
        if self.estimators.is_empty() && self.intervals.is_empty() {
            return Err(Error::InvalidConfig("empty grid: no estimators or intervals".into()));
        }
        if self.estimators.len() + self.intervals.len() > MAX_SLOTS {
            return Err(Error::InvalidConfig("too many grid entries".into()));
        }
        for e in &self.estimators {
            e.validate()?;
        }
        for i in &self.intervals {
            i.variant.validate()?;
        }
        for &p in &self.report_ps {
            crate::error::open_unit("p", p)?;
        }
        Ok(())
    }

    /// Population standard deviation of the x design.
    pub fn sigma_x(&self) -> Result<f64> {
        let xs = self.x_design.xs(self.n)?;
        Ok(population_variance(xs.iter().copied()).sqrt())
    }
}

/// Deterministic substream for `(trial, slot)` under `seed`.
pub fn substream(seed: u64, trial: usize, slot: usize) -> ChaCha8Rng {
    debug_assert!(slot <= MAX_SLOTS);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((trial as u64) << 16) | slot as u64);
    rng
}

/// One dataset from the model. Errors are `σ_e · z` with `z` drawn by the
/// ziggurat method over the ChaCha8 stream, so they are reproducible.
pub fn generate_dataset(config: &SimConfig, rng: &mut ChaCha8Rng) -> Result<Dataset> {
    let xs = config.x_design.xs(config.n)?;
    let ys: Vec<f64> = xs
        .iter()
        .map(|&x| {
            let z: f64 = StandardNormal.sample(rng);
            config.alpha + config.beta * x + config.sigma_e * z
        })
        .collect();
    Dataset::from_xy(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub spec: EstimatorSpec,
    pub trials: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    /// Signed `β̂ - β` of the successful trials, in trial order.
    #[serde(skip)]
    pub errors: Vec<f64>,
    pub mean_error: Option<f64>,
    /// Sample variance of `√n (β̂ - β)`.
    pub scaled_variance: Option<f64>,
}

impl EstimatorSummary {
    pub fn abs_errors(&self) -> Vec<f64> {
        self.errors.iter().map(|e| e.abs()).collect()
    }

    pub fn convergence(&self, p: f64) -> Result<f64> {
        empirical_convergence(&self.abs_errors(), p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub label: String,
    pub spec: IntervalSpec,
    pub trials: usize,
    pub failures: usize,
    pub first_failure: Option<String>,
    pub covered: usize,
    /// Fraction of successful trials whose interval contains `β`.
    pub coverage: Option<f64>,
    pub mean_width: Option<f64>,
    pub swapped: usize,
    pub nominal_coverage: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub schema_version: u32,
    pub config: SimConfig,
    pub sigma_x: f64,
    pub estimators: Vec<EstimatorSummary>,
    pub intervals: Vec<IntervalSummary>,
    /// Not serialized: it would break byte-identical reruns.
    #[serde(skip)]
    pub wall_time: Duration,
}

struct TrialOutcome {
    fits: Vec<Result<f64>>,
    cis: Vec<Result<(f64, f64, bool)>>,
}

fn run_one(config: &SimConfig, trial: usize) -> Result<TrialOutcome> {
    let d = generate_dataset(config, &mut substream(config.seed, trial, 0))?;
    let n_est = config.estimators.len();
    let fits = config
        .estimators
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut rng = substream(config.seed, trial, 1 + j);
            spec.run(&d, &mut rng).map(|f| f.beta)
        })
        .collect();
    let cis = config
        .intervals
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut rng = substream(config.seed, trial, 1 + n_est + j);
            spec.run(&d, &mut rng)
                .map(|ci| (ci.lower, ci.upper, ci.meta.swapped))
        })
        .collect();
    Ok(TrialOutcome { fits, cis })
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn sample_variance(v: &[f64]) -> Option<f64> {
    let m = mean(v)?;
    (v.len() >= 2).then(|| v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
}

/// Runs every trial (in parallel) and aggregates in trial order.
pub fn run_trials(config: &SimConfig) -> Result<SimReport> {
    config.validate()?;
    let start = Instant::now();
    let outcomes: Vec<TrialOutcome> = (0..config.trials)
        .into_par_iter()
        .map(|t| run_one(config, t))
        .collect::<Result<_>>()?;
    let root_n = (config.n as f64).sqrt();

    let estimators = config
        .estimators
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut errors = Vec::with_capacity(config.trials);
            let mut failures = 0;
            let mut first_failure = None;
            for o in &outcomes {
                match &o.fits[j] {
                    Ok(beta) => errors.push(beta - config.beta),
                    Err(e) => {
                        failures += 1;
                        first_failure.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            let scaled: Vec<f64> = errors.iter().map(|e| e * root_n).collect();
            EstimatorSummary {
                label: spec.label(),
                spec: *spec,
                trials: config.trials,
                failures,
                first_failure,
                mean_error: mean(&errors),
                scaled_variance: sample_variance(&scaled),
                errors,
            }
        })
        .collect();

    let intervals = config
        .intervals
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            let mut widths = Vec::with_capacity(config.trials);
            let (mut covered, mut failures, mut swapped) = (0, 0, 0);
            let mut first_failure = None;
            for o in &outcomes {
                match &o.cis[j] {
                    Ok((lo, hi, sw)) => {
                        widths.push(hi - lo);
                        covered += usize::from(*lo <= config.beta && config.beta <= *hi);
                        swapped += usize::from(*sw);
                    }
                    Err(e) => {
                        failures += 1;
                        first_failure.get_or_insert_with(|| e.to_string());
                    }
                }
            }
            IntervalSummary {
                label: spec.label(),
                spec: *spec,
                trials: config.trials,
                failures,
                first_failure,
                covered,
                coverage: (!widths.is_empty()).then(|| covered as f64 / widths.len() as f64),
                mean_width: mean(&widths),
                swapped,
                nominal_coverage: 1.0 - spec.params.p,
            }
        })
        .collect();

    Ok(SimReport {
        schema_version: SCHEMA_VERSION,
        config: config.clone(),
        sigma_x: config.sigma_x()?,
        estimators,
        intervals,
        wall_time: start.elapsed(),
    })
}

/// Empirical `(1 - p)` quantile of `abs_errors`: the smallest stored value
/// `v` with `#{e <= v} >= (1 - p) T`. `p = 1` returns 0. Needs at least
/// `⌈1/p⌉` trials so the quantile is not simply the maximum.
pub fn empirical_convergence(abs_errors: &[f64], p: f64) -> Result<f64> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::invalid("p", p, "must lie in (0, 1]"));
    }
    if p == 1.0 {
        return Ok(0.0);
    }
    let t = abs_errors.len();
    let required = (1.0 / p).ceil() as usize;
    if t < required {
        return Err(Error::InsufficientTrials { required, actual: t });
    }
    let mut sorted = abs_errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((1.0 - p) * t as f64).ceil() as usize;
    Ok(sorted[rank.max(1) - 1])
}

/// One long-format report row: config fields, a metric name and its value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub schema_version: u32,
    pub n: usize,
    pub alpha: f64,
    pub beta: f64,
    pub sigma_e: f64,
    pub sigma_x: f64,
    pub design: String,
    pub trials: usize,
    pub seed: u64,
    pub kind: &'static str,
    pub label: String,
    pub variant: String,
    pub epsilon: Option<f64>,
    pub range: Option<f64>,
    pub theta: Option<f64>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub metric: String,
    pub value: Option<f64>,
}

impl SimReport {
    pub fn estimator(&self, label: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.label == label)
    }

    pub fn rows(&self) -> Vec<ReportRow> {
        let c = &self.config;
        let design = c.x_design.name();
        let mut out = Vec::new();
        let mut push = |key: &RowKey, p: Option<f64>, metric: &str, value: Option<f64>| {
            out.push(ReportRow {
                schema_version: self.schema_version,
                n: c.n,
                alpha: c.alpha,
                beta: c.beta,
                sigma_e: c.sigma_e,
                sigma_x: self.sigma_x,
                design: design.clone(),
                trials: c.trials,
                seed: c.seed,
                kind: key.kind,
                label: key.label.clone(),
                variant: key.variant.to_string(),
                epsilon: key.epsilon,
                range: key.range,
                theta: key.theta,
                k: key.k,
                p,
                metric: metric.to_string(),
                value,
            })
        };
        for e in &self.estimators {
            let s = &e.spec;
            let key = RowKey {
                kind: "estimator",
                label: e.label.clone(),
                variant: s.variant.name(),
                epsilon: s.epsilon,
                range: s.range,
                theta: s.theta,
                k: s.k,
            };
            push(&key, None, "failures", Some(e.failures as f64));
            push(&key, None, "mean_error", e.mean_error);
            push(&key, None, "scaled_variance", e.scaled_variance);
            for &p in &c.report_ps {
                push(&key, Some(p), "abs_error_quantile", e.convergence(p).ok());
            }
        }
        for i in &self.intervals {
            let s = &i.spec;
            let key = RowKey {
                kind: "interval",
                label: i.label.clone(),
                variant: s.variant.name(),
                epsilon: Some(s.params.epsilon),
                range: Some(s.params.range),
                theta: Some(s.params.theta),
                k: s.variant.k(),
            };
            let p = Some(s.params.p);
            push(&key, p, "failures", Some(i.failures as f64));
            push(&key, p, "coverage", i.coverage);
            push(&key, p, "mean_width", i.mean_width);
            push(&key, p, "swapped", Some(i.swapped as f64));
        }
        out
    }
}

struct RowKey {
    kind: &'static str,
    label: String,
    variant: &'static str,
    epsilon: Option<f64>,
    range: Option<f64>,
    theta: Option<f64>,
    k: Option<usize>,
}

/// Writes rows as delimited text with a header.
pub fn write_delimited<W: Write>(rows: &[ReportRow], delimiter: u8, w: W) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().delimiter(delimiter).from_writer(w);
    for r in rows {
        wtr.serialize(r).map_err(|e| Error::InvalidConfig(format!("write failed: {e}")))?;
    }
    wtr.flush().map_err(|e| Error::InvalidConfig(format!("write failed: {e}")))
}

/// Writes one JSON object per row.
pub fn write_jsonl<W: Write>(rows: &[ReportRow], mut w: W) -> Result<()> {
    for r in rows {
        let line = serde_json::to_string(r).expect("rows serialize");
        writeln!(w, "{line}").map_err(|e| Error::InvalidConfig(format!("write failed: {e}")))?;
    }
    Ok(())
}
