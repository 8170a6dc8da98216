//! Random-restart success-rate studies.
//!
//! For every `(K, d)` cell and instance index, a ground-truth Gaussian mixture
//! is drawn with means `mu_k ~ N(0, 5 I)`, `n_samples` points are sampled
//! from it (and centered by default), and each configured algorithm is run
//! from `n_inits` random initializations. Every algorithm sees the same
//! models, samples and initializations, so the comparison is paired.
//!
//! Each trial's randomness is derived from `(master_seed, K, d, instance,
//! init)` alone, which makes the output independent of the number of worker
//! threads and lets any single trial be replayed.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Instant;

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit, Algorithm, FitConfig, LambdaSchedule};
use crate::io::{json_digest, write_table};
use crate::math::fmt17;
use crate::metrics::{match_components, moment_residual};
use crate::mixture::{center_samples, log_likelihood, sample, Means, MixtureModel, SampleSet};
use crate::rng::{self, derive_seed, tag};

/// Variance of the prior on true means and on random initializations.
pub const PRIOR_VARIANCE: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    /// Means drawn i.i.d. from `N(0, 5 I)`.
    Prior,
    /// `K` distinct data points.
    DataPoints,
    /// The true means in the fitting frame (diagnostic).
    GroundTruth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    #[serde(rename = "K_values")]
    pub k_values: Vec<usize>,
    pub d_values: Vec<usize>,
    pub n_samples: usize,
    pub n_inits: usize,
    pub max_iters: usize,
    #[serde(default = "default_param_tol")]
    pub param_tol: f64,
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_threshold")]
    pub success_threshold: f64,
    pub master_seed: u64,
    #[serde(default = "one")]
    pub n_instances: usize,
    #[serde(default = "yes")]
    pub center_data: bool,
    #[serde(default = "prior")]
    pub init_strategy: InitStrategy,
}

fn default_param_tol() -> f64 {
    1e-8
}
fn default_threshold() -> f64 {
    0.5
}
fn one() -> usize {
    1
}
fn yes() -> bool {
    true
}
fn prior() -> InitStrategy {
    InitStrategy::Prior
}

impl Default for ExperimentSpec {
    /// Full-scale protocol: 30,000 samples, 1,000 initializations, 3,000
    /// iterations, naive versus stochastic EM.
    fn default() -> Self {
        ExperimentSpec {
            k_values: vec![3, 6, 9],
            d_values: vec![1, 3],
            n_samples: 30_000,
            n_inits: 1_000,
            max_iters: 3_000,
            param_tol: default_param_tol(),
            algorithms: vec![
                Algorithm::Naive,
                Algorithm::Stochastic {
                    schedule: LambdaSchedule::default(),
                },
            ],
            success_threshold: default_threshold(),
            master_seed: 0,
            n_instances: 1,
            center_data: true,
            init_strategy: InitStrategy::Prior,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k_values.is_empty() || self.d_values.is_empty() {
            return Err(Error::invalid("K_values and d_values must be non-empty"));
        }
        if self.k_values.contains(&0) || self.d_values.contains(&0) {
            return Err(Error::invalid("K and d values must be at least 1"));
        }
        if self.n_samples == 0 || self.n_inits == 0 || self.max_iters == 0 || self.n_instances == 0
        {
            return Err(Error::invalid("all counts must be at least 1"));
        }
        if !(self.success_threshold > 0.0) {
            return Err(Error::invalid("success_threshold must be positive"));
        }
        if !(self.param_tol >= 0.0) {
            return Err(Error::invalid("param_tol must be non-negative"));
        }
        if self.algorithms.is_empty() {
            return Err(Error::invalid("at least one algorithm is required"));
        }
        if self.init_strategy == InitStrategy::DataPoints
            && self.k_values.iter().any(|&k| k > self.n_samples)
        {
            return Err(Error::invalid(
                "data-point initialization needs n_samples >= K",
            ));
        }
        for a in &self.algorithms {
            a.validate()?;
        }
        Ok(())
    }

    /// Hex SHA-256 of the canonical JSON encoding.
    pub fn digest(&self) -> String {
        json_digest(self)
    }

    fn fit_config(&self, algorithm: Algorithm, seed: u64) -> FitConfig {
        FitConfig {
            algorithm,
            max_iters: self.max_iters,
            param_tol: self.param_tol,
            seed,
        }
    }
}

fn prior_means<R: Rng>(k: usize, d: usize, rng: &mut R) -> Means {
    let sd = PRIOR_VARIANCE.sqrt();
    let data = (0..k * d)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    Means::new(k, d, data).expect("K, d >= 1")
}

/// Ground-truth model: unit-variance Gaussian with means i.i.d. `N(0, 5 I)`.
pub fn generate_instance(k: usize, d: usize, seed: u64) -> Result<MixtureModel> {
    if k == 0 || d == 0 {
        return Err(Error::invalid("K and d must be at least 1"));
    }
    let mut rng = rng::stream(seed);
    Ok(MixtureModel::gaussian(prior_means(k, d, &mut rng)))
}

/// Random initialization with means i.i.d. `N(0, 5 I)`.
pub fn generate_initialization(k: usize, d: usize, seed: u64) -> Result<Means> {
    if k == 0 || d == 0 {
        return Err(Error::invalid("K and d must be at least 1"));
    }
    let mut rng = rng::stream(seed);
    Ok(prior_means(k, d, &mut rng))
}

fn data_point_initialization(k: usize, samples: &SampleSet, seed: u64) -> Result<Means> {
    let mut rng = rng::stream(seed);
    let picks = index::sample(&mut rng, samples.n(), k);
    let data = picks.iter().flat_map(|i| samples.row(i).to_vec()).collect();
    Means::new(k, samples.d(), data)
}

/// One ground-truth draw together with the data the fits run on.
#[derive(Debug, Clone)]
pub struct Instance {
    pub k: usize,
    pub d: usize,
    pub index: usize,
    pub model: MixtureModel,
    /// Fitting data, centered when the spec asks for it.
    pub samples: SampleSet,
    /// Column mean removed from the data (zeros when not centered).
    pub shift: Vec<f64>,
    /// Average log-likelihood of the true means on the fitting data.
    pub truth_loglik: f64,
}

impl Instance {
    pub fn build(spec: &ExperimentSpec, k: usize, d: usize, index: usize) -> Result<Self> {
        let coords = [k as u64, d as u64, index as u64];
        let model = generate_instance(
            k,
            d,
            derive_seed(
                spec.master_seed,
                &[tag::INSTANCE, coords[0], coords[1], coords[2]],
            ),
        )?;
        let raw = sample(
            &model,
            spec.n_samples,
            derive_seed(
                spec.master_seed,
                &[tag::SAMPLES, coords[0], coords[1], coords[2]],
            ),
        );
        let (samples, shift) = if spec.center_data {
            center_samples(&raw)?
        } else {
            (raw, vec![0.0; d])
        };
        let neg: Vec<f64> = shift.iter().map(|s| -s).collect();
        let truth_fit = model.means().translated(&neg)?;
        let truth_loglik = log_likelihood(&model.with_means(truth_fit), &samples)?;
        Ok(Instance {
            k,
            d,
            index,
            model,
            samples,
            shift,
            truth_loglik,
        })
    }

    /// True means expressed in the (possibly centered) fitting frame.
    pub fn truth_in_fit_frame(&self) -> Means {
        let neg: Vec<f64> = self.shift.iter().map(|s| -s).collect();
        self.model.means().translated(&neg).expect("same dimension")
    }
}

/// Seed for trial `(K, d, instance, init)`.
pub fn trial_seed(master_seed: u64, k: usize, d: usize, instance: usize, init: usize) -> u64 {
    derive_seed(
        master_seed,
        &[tag::INIT, k as u64, d as u64, instance as u64, init as u64],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub instance_index: usize,
    pub init_index: usize,
    pub algorithm: String,
    pub success: bool,
    pub final_max_distance: f64,
    pub final_loglik: f64,
    pub truth_loglik: f64,
    pub moment_residual: f64,
    pub converged: bool,
    pub iterations_used: usize,
    pub wall_time: f64,
}

impl TrialResult {
    /// Equality ignoring `wall_time`.
    pub fn same_outcome(&self, other: &TrialResult) -> bool {
        let mut a = self.clone();
        a.wall_time = other.wall_time;
        &a == other
    }
}

/// Runs one algorithm from one initialization on one instance.
pub fn run_trial(
    instance: &Instance,
    init_index: usize,
    algorithm: &Algorithm,
    spec: &ExperimentSpec,
) -> Result<TrialResult> {
    let started = Instant::now();
    let seed = trial_seed(
        spec.master_seed,
        instance.k,
        instance.d,
        instance.index,
        init_index,
    );
    let init = match spec.init_strategy {
        InitStrategy::Prior => generate_initialization(instance.k, instance.d, seed)?,
        InitStrategy::DataPoints => data_point_initialization(instance.k, &instance.samples, seed)?,
        InitStrategy::GroundTruth => instance.truth_in_fit_frame(),
    };
    let result = fit(&init, &instance.samples, &spec.fit_config(*algorithm, seed))?;
    let estimate = result.means.translated(&instance.shift)?;
    let report = match_components(&estimate, instance.model.means())?;
    Ok(TrialResult {
        k: instance.k,
        d: instance.d,
        instance_index: instance.index,
        init_index,
        algorithm: algorithm.to_string(),
        success: report.max_distance <= spec.success_threshold,
        final_max_distance: report.max_distance,
        final_loglik: result.final_loglik(),
        truth_loglik: instance.truth_loglik,
        moment_residual: moment_residual(&result.means),
        converged: result.converged,
        iterations_used: result.iterations_used,
        wall_time: started.elapsed().as_secs_f64(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessRow {
    #[serde(rename = "K")]
    pub k: usize,
    pub d: usize,
    pub algorithm: String,
    pub n_instances: usize,
    pub n_inits: usize,
    pub n_trials: usize,
    pub n_success: usize,
    pub success_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuccessTable {
    pub spec_hash: String,
    pub success_threshold: f64,
    pub truncated: bool,
    pub rows: Vec<SuccessRow>,
}

pub const TABLE_HEADER: [&str; 8] = [
    "K",
    "d",
    "algorithm",
    "n_instances",
    "n_inits",
    "n_trials",
    "n_success",
    "success_rate",
];

pub const TRIAL_HEADER: [&str; 13] = [
    "K",
    "d",
    "instance",
    "init",
    "algorithm",
    "success",
    "final_max_distance",
    "final_loglik",
    "truth_loglik",
    "moment_residual",
    "converged",
    "iterations_used",
    "wall_time",
];

impl SuccessTable {
    pub fn row(&self, k: usize, d: usize, algorithm: &str) -> Option<&SuccessRow> {
        self.rows
            .iter()
            .find(|r| r.k == k && r.d == d && r.algorithm == algorithm)
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| {
                vec![
                    r.k.to_string(),
                    r.d.to_string(),
                    r.algorithm.clone(),
                    r.n_instances.to_string(),
                    r.n_inits.to_string(),
                    r.n_trials.to_string(),
                    r.n_success.to_string(),
                    fmt17(r.success_rate),
                ]
            })
            .collect();
        write_table(&TABLE_HEADER, &rows, w)
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

pub fn write_trials_csv<W: std::io::Write>(trials: &[TrialResult], w: W) -> Result<()> {
    let rows: Vec<Vec<String>> = trials
        .iter()
        .map(|t| {
            vec![
                t.k.to_string(),
                t.d.to_string(),
                t.instance_index.to_string(),
                t.init_index.to_string(),
                t.algorithm.clone(),
                t.success.to_string(),
                fmt17(t.final_max_distance),
                fmt17(t.final_loglik),
                fmt17(t.truth_loglik),
                fmt17(t.moment_residual),
                t.converged.to_string(),
                t.iterations_used.to_string(),
                fmt17(t.wall_time),
            ]
        })
        .collect();
    write_table(&TRIAL_HEADER, &rows, w)
}

/// Aggregates trial records into table rows, judging success against
/// `threshold` from the stored distances.
pub fn aggregate(spec: &ExperimentSpec, trials: &[TrialResult], threshold: f64) -> Vec<SuccessRow> {
    let mut rows = Vec::new();
    for &k in &spec.k_values {
        for &d in &spec.d_values {
            for alg in &spec.algorithms {
                let name = alg.to_string();
                let cell = trials
                    .iter()
                    .filter(|t| t.k == k && t.d == d && t.algorithm == name);
                let (n_trials, n_success) = cell.fold((0, 0), |(n, s), t| {
                    (n + 1, s + usize::from(t.final_max_distance <= threshold))
                });
                rows.push(SuccessRow {
                    k,
                    d,
                    algorithm: name,
                    n_instances: spec.n_instances,
                    n_inits: spec.n_inits,
                    n_trials,
                    n_success,
                    success_rate: if n_trials == 0 {
                        0.0
                    } else {
                        n_success as f64 / n_trials as f64
                    },
                });
            }
        }
    }
    rows
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Worker threads; `None` uses the global default.
    pub threads: Option<usize>,
    /// When set, remaining trials are skipped and the output is marked truncated.
    pub cancel: Option<Arc<AtomicBool>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub table: SuccessTable,
    /// Completed trials ordered by (K, d, instance, init, algorithm).
    pub trials: Vec<TrialResult>,
    pub truncated: bool,
}

/// Runs the full study.
pub fn run_experiment(spec: &ExperimentSpec, options: &RunOptions) -> Result<ExperimentOutput> {
    spec.validate()?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = options.threads {
        if n == 0 {
            return Err(Error::invalid("thread count must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::invalid(format!("cannot build worker pool: {e}")))?;
    let cancelled = || {
        options
            .cancel
            .as_ref()
            .is_some_and(|c| c.load(Ordering::Relaxed))
    };

    pool.install(|| {
        let cells: Vec<(usize, usize, usize)> = spec
            .k_values
            .iter()
            .flat_map(|&k| {
                spec.d_values
                    .iter()
                    .flat_map(move |&d| (0..spec.n_instances).map(move |i| (k, d, i)))
            })
            .collect();
        let instances: Vec<Instance> = cells
            .par_iter()
            .map(|&(k, d, i)| Instance::build(spec, k, d, i))
            .collect::<Result<_>>()?;

        let tasks: Vec<(usize, usize, usize)> = (0..instances.len())
            .flat_map(|i| {
                (0..spec.n_inits)
                    .flat_map(move |init| (0..spec.algorithms.len()).map(move |a| (i, init, a)))
            })
            .collect();
        let total = tasks.len();
        let done = AtomicUsize::new(0);
        let report_every = (total / 20).max(1);

        let outcomes: Vec<Option<TrialResult>> = tasks
            .par_iter()
            .map(|&(i, init, a)| {
                if cancelled() {
                    return Ok(None);
                }
                let r = run_trial(&instances[i], init, &spec.algorithms[a], spec)?;
                let n = done.fetch_add(1, Ordering::Relaxed) + 1;
                if n.is_multiple_of(report_every) || n == total {
                    log::info!("experiment progress: {n}/{total} trials");
                }
                Ok(Some(r))
            })
            .collect::<Result<_>>()?;

        let truncated = outcomes.iter().any(Option::is_none);
        let trials: Vec<TrialResult> = outcomes.into_iter().flatten().collect();
        let table = SuccessTable {
            spec_hash: spec.digest(),
            success_threshold: spec.success_threshold,
            truncated,
            rows: aggregate(spec, &trials, spec.success_threshold),
        };
        Ok(ExperimentOutput {
            table,
            trials,
            truncated,
        })
    })
}
