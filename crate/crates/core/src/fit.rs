//! Sample-based EM for equal-weight, unit-variance Gaussian mixtures.
//!
//! Three variants share one E-step:
//!
//! * **naive** EM, `mu_k <- E[x w_k] / E[w_k]`;
//! * **regularized** EM, which ascends the log-likelihood penalized by
//!   `(M/2) ||sum_k mu_k||^2`:
//!   `mu_k <- (E[x w_k] + M K mu_k - M sum_j mu_j) / (M K + E[w_k])`;
//! * **stochastic** multi-objective EM, which redraws the penalty weight
//!   `lambda ~ Lambda` once per outer iteration and applies the regularized
//!   update with it.
//!
//! Expectations are averages over the supplied [`SampleSet`]. All components
//! are updated from the previous iterate (Jacobi style). The regularized
//! update maximizes the minorizer returned by [`surrogate`], which touches
//! the objective at the anchor, so the penalized objective never decreases.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::norm;
use crate::mixture::{log_likelihood, Means, MixtureModel, SampleSet};
use crate::rng::{self, tag};

/// Below this, a component has no responsibility mass and is frozen.
pub const EMPTY_COMPONENT_MASS: f64 = 1e-300;

/// Distribution of the penalty weight for the stochastic variant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum LambdaSchedule {
    LogUniform { lo: f64, hi: f64 },
    Uniform { lo: f64, hi: f64 },
    Constant { value: f64 },
}

impl Default for LambdaSchedule {
    fn default() -> Self {
        LambdaSchedule::LogUniform { lo: 1e-2, hi: 1.0 }
    }
}

impl LambdaSchedule {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            LambdaSchedule::LogUniform { lo, hi } => {
                lo.is_finite() && hi.is_finite() && lo > 0.0 && lo < hi
            }
            LambdaSchedule::Uniform { lo, hi } => {
                lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi
            }
            LambdaSchedule::Constant { value } => value.is_finite() && value >= 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid lambda schedule {self}")))
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            LambdaSchedule::LogUniform { lo, hi } => {
                let u: f64 = rng.random();
                (lo.ln() + u * (hi.ln() - lo.ln())).exp()
            }
            LambdaSchedule::Uniform { lo, hi } => {
                let u: f64 = rng.random();
                lo + u * (hi - lo)
            }
            LambdaSchedule::Constant { value } => value,
        }
    }
}

impl fmt::Display for LambdaSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LambdaSchedule::LogUniform { lo, hi } => write!(f, "loguniform:{lo},{hi}"),
            LambdaSchedule::Uniform { lo, hi } => write!(f, "uniform:{lo},{hi}"),
            LambdaSchedule::Constant { value } => write!(f, "constant:{value}"),
        }
    }
}

impl FromStr for LambdaSchedule {
    type Err = Error;

    /// `loguniform:LO,HI`, `uniform:LO,HI` or `constant:V`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::invalid(format!("cannot parse lambda schedule {s:?}"));
        let (kind, args) = s.split_once(':').ok_or_else(bad)?;
        let nums = args
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>>>()?;
        let sched = match (kind.trim().to_ascii_lowercase().as_str(), nums.as_slice()) {
            ("loguniform", [lo, hi]) => LambdaSchedule::LogUniform { lo: *lo, hi: *hi },
            ("uniform", [lo, hi]) => LambdaSchedule::Uniform { lo: *lo, hi: *hi },
            ("constant", [v]) => LambdaSchedule::Constant { value: *v },
            _ => return Err(bad()),
        };
        sched.validate()?;
        Ok(sched)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Algorithm {
    Naive,
    Regularized { m: f64 },
    Stochastic { schedule: LambdaSchedule },
}

impl Algorithm {
    pub fn validate(&self) -> Result<()> {
        match self {
            Algorithm::Naive => Ok(()),
            Algorithm::Regularized { m } if m.is_finite() && *m >= 0.0 => Ok(()),
            Algorithm::Regularized { m } => Err(Error::invalid(format!(
                "regularization coefficient must be >= 0, got {m}"
            ))),
            Algorithm::Stochastic { schedule } => schedule.validate(),
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Algorithm::Naive => f.write_str("naive"),
            Algorithm::Regularized { m } => write!(f, "regularized:{m}"),
            Algorithm::Stochastic { schedule } => write!(f, "stochastic:{schedule}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    /// Stop once `max_k ||mu_k^{t+1} - mu_k^t|| < param_tol`; zero runs all
    /// `max_iters` iterations.
    pub param_tol: f64,
    /// Seeds the penalty-weight stream of the stochastic variant.
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            algorithm: Algorithm::Naive,
            max_iters: 3000,
            param_tol: 1e-8,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::invalid("max_iters must be at least 1"));
        }
        if !(self.param_tol >= 0.0) {
            return Err(Error::invalid("param_tol must be non-negative"));
        }
        self.algorithm.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// 1-based; the record describes the iterate produced by this update.
    pub iter: usize,
    pub loglik: f64,
    /// `loglik - lambda/2 ||sum_k mu_k||^2` at this iteration's weight.
    pub objective: f64,
    pub moment_residual: f64,
    pub max_step: f64,
    /// Penalty weight used by this update (0 for naive).
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub means: Means,
    pub trace: Vec<TraceRecord>,
    pub converged: bool,
    pub iterations_used: usize,
    pub lambda_draws: Vec<f64>,
    /// Average log-likelihood of the initial means.
    pub initial_loglik: f64,
    /// Components frozen at least once for lack of responsibility mass.
    pub degenerate_components: Vec<usize>,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        self.trace.last().map_or(self.initial_loglik, |r| r.loglik)
    }
}

/// Output of a single EM update.
#[derive(Debug, Clone, PartialEq)]
pub struct EmStep {
    pub means: Means,
    pub degenerate_components: Vec<usize>,
}

/// Sample averages gathered in one pass: `E[w_k]`, `E[x w_k]` and the
/// average log-likelihood of the means they were computed at.
#[derive(Debug, Clone)]
struct Moments {
    loglik: f64,
    mass: Vec<f64>,
    first: Vec<f64>,
}

fn check_inputs(means: &Means, samples: &SampleSet) -> Result<()> {
    if samples.is_empty() {
        return Err(Error::invalid("EM needs at least one sample"));
    }
    if samples.d() != means.d() {
        return Err(Error::invalid(format!(
            "means have dimension {}, samples have {}",
            means.d(),
            samples.d()
        )));
    }
    Ok(())
}

fn e_step(means: &Means, samples: &SampleSet) -> Moments {
    let k = means.k();
    let d = means.d();
    let mu = means.as_slice();
    let mut mass = vec![0.0; k];
    let mut first = vec![0.0; k * d];
    let mut logits = vec![0.0; k];
    let mut loglik = 0.0;
    for x in samples.rows() {
        let mut max = f64::NEG_INFINITY;
        for (j, l) in logits.iter_mut().enumerate() {
            let m = &mu[j * d..(j + 1) * d];
            let mut sq = 0.0;
            for (a, b) in x.iter().zip(m) {
                let t = a - b;
                sq += t * t;
            }
            *l = -0.5 * sq;
            max = max.max(*l);
        }
        let mut s = 0.0;
        for l in logits.iter_mut() {
            *l = (*l - max).exp();
            s += *l;
        }
        loglik += max + s.ln();
        let inv = 1.0 / s;
        for (j, l) in logits.iter().enumerate() {
            let w = l * inv;
            mass[j] += w;
            for (acc, v) in first[j * d..(j + 1) * d].iter_mut().zip(x) {
                *acc += w * v;
            }
        }
    }
    let n = samples.n() as f64;
    mass.iter_mut().for_each(|v| *v /= n);
    first.iter_mut().for_each(|v| *v /= n);
    let log_norm = -0.5 * d as f64 * (2.0 * PI).ln() - (k as f64).ln();
    Moments {
        loglik: loglik / n + log_norm,
        mass,
        first,
    }
}

fn m_step(means: &Means, stats: &Moments, m: f64) -> EmStep {
    let k = means.k();
    let d = means.d();
    let mk = m * k as f64;
    let total = means.column_sum();
    let mut out = means.clone();
    let mut degenerate = Vec::new();
    for j in 0..k {
        let w = stats.mass[j];
        let denom = mk + w;
        if w < EMPTY_COMPONENT_MASS && denom < EMPTY_COMPONENT_MASS {
            degenerate.push(j);
            continue;
        }
        let prev = means.row(j);
        let first = &stats.first[j * d..(j + 1) * d];
        for (c, v) in out.row_mut(j).iter_mut().enumerate() {
            *v = (first[c] + mk * prev[c] - m * total[c]) / denom;
        }
    }
    EmStep {
        means: out,
        degenerate_components: degenerate,
    }
}

fn naive_m_step(means: &Means, stats: &Moments) -> EmStep {
    let d = means.d();
    let mut out = means.clone();
    let mut degenerate = Vec::new();
    for j in 0..means.k() {
        let w = stats.mass[j];
        if w < EMPTY_COMPONENT_MASS {
            degenerate.push(j);
            continue;
        }
        let first = &stats.first[j * d..(j + 1) * d];
        for (v, f) in out.row_mut(j).iter_mut().zip(first) {
            *v = f / w;
        }
    }
    EmStep {
        means: out,
        degenerate_components: degenerate,
    }
}

/// One naive EM update. Components with no responsibility mass keep their
/// mean and are listed in `degenerate_components`.
pub fn naive_em_step(means: &Means, samples: &SampleSet) -> Result<EmStep> {
    check_inputs(means, samples)?;
    Ok(naive_m_step(means, &e_step(means, samples)))
}

/// One moment-regularized EM update with coefficient `m`. With `m = 0` the
/// result equals [`naive_em_step`] exactly.
pub fn regularized_em_step(means: &Means, samples: &SampleSet, m: f64) -> Result<EmStep> {
    check_inputs(means, samples)?;
    Algorithm::Regularized { m }.validate()?;
    Ok(m_step(means, &e_step(means, samples), m))
}

fn penalty(means: &Means, m: f64) -> f64 {
    let s = norm(&means.column_sum());
    0.5 * m * s * s
}

/// Average log-likelihood minus `(m/2) ||sum_k mu_k||^2`.
pub fn regularized_objective(means: &Means, samples: &SampleSet, m: f64) -> Result<f64> {
    check_inputs(means, samples)?;
    Algorithm::Regularized { m }.validate()?;
    let ll = log_likelihood(&MixtureModel::gaussian(means.clone()), samples)?;
    Ok(ll - penalty(means, m))
}

/// The minorizer of [`regularized_objective`] built at `anchor`:
///
/// `E[sum_k w_k^a(x) log(f(x;mu_k)/f(x;mu_k^a))] - (mK/2) sum_k ||mu_k - mu_k^a||^2
///  - m <sum_k (mu_k - mu_k^a), sum_k mu_k^a> + g(anchor)`
///
/// where `w^a` are responsibilities at the anchor and `g` is the penalized
/// objective. It never exceeds `g(means)` and equals `g(anchor)` at the anchor.
pub fn surrogate(means: &Means, anchor: &Means, samples: &SampleSet, m: f64) -> Result<f64> {
    check_inputs(anchor, samples)?;
    if means.k() != anchor.k() || means.d() != anchor.d() {
        return Err(Error::invalid("means and anchor shapes differ"));
    }
    let g_anchor = regularized_objective(anchor, samples, m)?;
    let k = anchor.k();
    let model = MixtureModel::gaussian(anchor.clone());
    let mut logits = vec![0.0; k];
    let mut expected = 0.0;
    for x in samples.rows() {
        for (j, l) in logits.iter_mut().enumerate() {
            *l = model.component_log_density(j, x);
        }
        crate::math::softmax_in_place(&mut logits);
        for (j, w) in logits.iter().enumerate() {
            let new_sq = crate::math::squared_distance(x, means.row(j));
            let old_sq = crate::math::squared_distance(x, anchor.row(j));
            expected += w * (-0.5 * new_sq + 0.5 * old_sq);
        }
    }
    expected /= samples.n() as f64;

    let prox: f64 = (0..k)
        .map(|j| crate::math::squared_distance(means.row(j), anchor.row(j)))
        .sum();
    let anchor_sum = anchor.column_sum();
    let shift_sum: Vec<f64> = means
        .column_sum()
        .iter()
        .zip(&anchor_sum)
        .map(|(a, b)| a - b)
        .collect();
    let inner: f64 = shift_sum.iter().zip(&anchor_sum).map(|(a, b)| a * b).sum();
    Ok(expected - 0.5 * m * k as f64 * prox - m * inner + g_anchor)
}

fn max_step(a: &Means, b: &Means) -> f64 {
    a.rows()
        .zip(b.rows())
        .map(|(x, y)| crate::math::squared_distance(x, y).sqrt())
        .fold(0.0, f64::max)
}

/// Runs the configured EM variant from `init`.
pub fn fit(init: &Means, samples: &SampleSet, config: &FitConfig) -> Result<FitResult> {
    config.validate()?;
    check_inputs(init, samples)?;

    let mut lambda_rng = match config.algorithm {
        Algorithm::Stochastic { .. } => {
            Some(rng::stream(rng::derive_seed(config.seed, &[tag::LAMBDA])))
        }
        _ => None,
    };

    let mut means = init.clone();
    let mut stats = e_step(&means, samples);
    let initial_loglik = stats.loglik;
    let mut trace = Vec::with_capacity(config.max_iters.min(4096));
    let mut lambda_draws = Vec::new();
    let mut degenerate: Vec<usize> = Vec::new();
    let mut converged = false;

    for iter in 1..=config.max_iters {
        let (step, lambda) = match config.algorithm {
            Algorithm::Naive => (naive_m_step(&means, &stats), 0.0),
            Algorithm::Regularized { m } => (m_step(&means, &stats, m), m),
            Algorithm::Stochastic { schedule } => {
                let rng = lambda_rng.as_mut().expect("stochastic stream");
                let lambda = schedule.draw(rng);
                lambda_draws.push(lambda);
                (m_step(&means, &stats, lambda), lambda)
            }
        };
        for j in step.degenerate_components {
            if !degenerate.contains(&j) {
                degenerate.push(j);
            }
        }
        let next = step.means;
        let delta = max_step(&means, &next);
        if !delta.is_finite() {
            return Err(Error::numerical(
                format!("EM iterate became non-finite at iteration {iter}"),
                delta,
            ));
        }
        stats = e_step(&next, samples);
        let residual = norm(&next.column_sum());
        trace.push(TraceRecord {
            iter,
            loglik: stats.loglik,
            objective: stats.loglik - 0.5 * lambda * residual * residual,
            moment_residual: residual,
            max_step: delta,
            lambda,
        });
        means = next;
        if delta < config.param_tol {
            converged = true;
            break;
        }
    }
    degenerate.sort_unstable();
    Ok(FitResult {
        means,
        iterations_used: trace.len(),
        trace,
        converged,
        lambda_draws,
        initial_loglik,
        degenerate_components: degenerate,
    })
}
