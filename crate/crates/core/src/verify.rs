//! Built-in self-checks, run by `mixem verify`.
//!
//! Each suite compares an implementation path with an independent one
//! (quadrature vs closed form, closed derivative vs finite differences,
//! Hungarian vs exhaustive search, ...). The closed forms are injectable
//! through [`ClosedForms`] so the suite's sensitivity can itself be tested.

use std::fmt;

use crate::error::Result;
use crate::fit::{fit, naive_em_step, regularized_em_step, Algorithm, FitConfig};
use crate::harness::generate_instance;
use crate::metrics::{match_components, solve_assignment};
use crate::mixture::{density, log_likelihood, responsibilities, sample, Means};
use crate::population::{
    contraction_constants, dm_deta_closed, dm_dlambda_closed, em_map_closed, em_map_quadrature,
    em_map_ratio_form, run_population_em,
};
use crate::quadrature::{integrate, QuadratureSettings};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Level {
    Fast,
    Full,
}

impl std::str::FromStr for Level {
    type Err = crate::Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fast" => Ok(Level::Fast),
            "full" => Ok(Level::Full),
            _ => Err(crate::Error::invalid(format!("unknown verify level {s:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{status}] {}: {}", self.name, self.detail)
    }
}

type Map2 = fn(f64, f64) -> Result<f64>;

/// The closed forms under test.
#[derive(Clone, Copy)]
pub struct ClosedForms {
    pub em_map: Map2,
    pub dm_dlambda: Map2,
    pub dm_deta: Map2,
}

impl Default for ClosedForms {
    fn default() -> Self {
        ClosedForms {
            em_map: em_map_closed,
            dm_dlambda: dm_dlambda_closed,
            dm_deta: dm_deta_closed,
        }
    }
}

pub fn run(level: Level) -> Vec<SuiteReport> {
    run_with(level, &ClosedForms::default())
}

pub fn run_with(level: Level, forms: &ClosedForms) -> Vec<SuiteReport> {
    let suites: [(&'static str, SuiteFn); 9] = [
        ("mixture-core", mixture_suite),
        ("fixed-points", fixed_point_suite),
        ("form-equivalence", form_suite),
        ("closed-form-map", closed_map_suite),
        ("closed-derivatives", derivative_suite),
        ("contraction", contraction_suite),
        ("em-ascent", ascent_suite),
        ("zero-penalty-reduction", reduction_suite),
        ("assignment-oracle", assignment_suite),
    ];
    suites
        .iter()
        .map(|(name, f)| {
            let (passed, detail) = match f(level, forms) {
                Ok(detail) => (true, detail),
                Err(detail) => (false, detail),
            };
            SuiteReport {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

type SuiteFn = fn(Level, &ClosedForms) -> std::result::Result<String, String>;

fn check(ok: bool, msg: impl FnOnce() -> String) -> std::result::Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn e(err: crate::Error) -> String {
    err.to_string()
}

fn mixture_suite(level: Level, _: &ClosedForms) -> std::result::Result<String, String> {
    let reps = if level == Level::Full { 50 } else { 10 };
    let mut r = rng::stream(101);
    for i in 0..reps {
        let model = generate_instance(1 + i % 5, 1, rng::derive_seed(7, &[i as u64])).map_err(e)?;
        let x = [rand::Rng::random_range(&mut r, -8.0..8.0)];
        let w = responsibilities(&model, &x).map_err(e)?;
        let s: f64 = w.iter().sum();
        check(
            (s - 1.0).abs() <= 1e-12 && w.iter().all(|v| (0.0..=1.0).contains(v)),
            || format!("responsibilities sum to {s}"),
        )?;
        let lo = model
            .means()
            .as_slice()
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min)
            - 40.0;
        let hi = model
            .means()
            .as_slice()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
            + 40.0;
        let total = integrate(
            |t| density(&model, &[t]).unwrap_or(f64::NAN),
            lo,
            hi,
            model.means().as_slice(),
            1e-12,
            1e-12,
            4000,
        )
        .map_err(e)?;
        check((total.value - 1.0).abs() <= 1e-8, || {
            format!("density integrates to {}", total.value)
        })?;
        let samples = sample(&model, 50, i as u64);
        let ll = log_likelihood(&model, &samples).map_err(e)?;
        let naive: f64 = samples
            .rows()
            .map(|x| density(&model, x).unwrap().ln())
            .sum::<f64>()
            / samples.n() as f64;
        check((ll - naive).abs() <= 1e-10, || {
            format!("loglik {ll} vs naive {naive}")
        })?;
    }
    Ok(format!("{reps} random models"))
}

fn fixed_point_suite(_: Level, _: &ClosedForms) -> std::result::Result<String, String> {
    let q = QuadratureSettings::default();
    let mut worst: f64 = 0.0;
    for x in [0.0, 0.5, -0.5, 1.0, -1.0, 2.0, -2.0, 4.0, -4.0] {
        let m = em_map_quadrature(x, x, &q).map_err(e)?;
        worst = worst.max((m - x).abs());
    }
    check(worst <= 1e-8, || format!("worst |M(x,x) - x| = {worst:e}"))?;
    Ok(format!("worst |M(x,x) - x| = {worst:.2e}"))
}

fn grid(n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|i| lo + (hi - lo) * (i as f64 + 0.5) / n as f64)
        .collect()
}

fn form_suite(level: Level, _: &ClosedForms) -> std::result::Result<String, String> {
    let n = if level == Level::Full { 20 } else { 5 };
    let q = QuadratureSettings::default();
    let mut worst: f64 = 0.0;
    for &l in &grid(n, -3.0, 3.0) {
        for &m in &grid(n, -3.0, 3.0) {
            let a = em_map_ratio_form(l, m, &q).map_err(e)?;
            let b = em_map_quadrature(l, m, &q).map_err(e)?;
            worst = worst.max((a - b).abs());
        }
    }
    check(worst <= 1e-7, || {
        format!("worst ratio/symmetric gap {worst:e}")
    })?;
    Ok(format!("{n}x{n} grid, worst gap {worst:.2e}"))
}

/// `(lambda, eta)` pairs with `0 < lambda < eta`.
fn triangle(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut i = 0;
    while out.len() < n {
        let lambda = 0.05 + 0.37 * (i % 11) as f64;
        let gap = 0.02 + 0.61 * (i / 11) as f64 + 0.13 * (i % 3) as f64;
        out.push((lambda, lambda + gap));
        i += 1;
    }
    out
}

fn closed_map_suite(level: Level, forms: &ClosedForms) -> std::result::Result<String, String> {
    let n = if level == Level::Full { 50 } else { 8 };
    let q = QuadratureSettings::default();
    let mut worst: f64 = 0.0;
    for (l, eta) in triangle(n) {
        let c = (forms.em_map)(l, eta).map_err(e)?;
        let m = em_map_quadrature(l, eta, &q).map_err(e)?;
        worst = worst.max((c - m).abs());
    }
    check(worst <= 1e-8, || format!("closed form off by {worst:e}"))?;
    Ok(format!("{n} pairs, worst gap {worst:.2e}"))
}

const FD_STEP: f64 = 1e-5;

fn derivative_suite(level: Level, forms: &ClosedForms) -> std::result::Result<String, String> {
    let n = if level == Level::Full { 20 } else { 6 };
    let q = QuadratureSettings {
        abs_tol: 1e-13,
        rel_tol: 1e-13,
        ..Default::default()
    };
    let mut worst: f64 = 0.0;
    for (i, (a, b)) in triangle(n).into_iter().enumerate() {
        // Alternate which argument is larger so both lambda-branches are hit.
        let (lambda, mu) = if i % 2 == 0 { (a, b) } else { (b, a) };
        let closed = (forms.dm_dlambda)(lambda, mu).map_err(e)?;
        let fd = (em_map_quadrature(lambda + FD_STEP, mu, &q).map_err(e)?
            - em_map_quadrature(lambda - FD_STEP, mu, &q).map_err(e)?)
            / (2.0 * FD_STEP);
        check(closed > 0.0, || {
            format!("dM/dlambda({lambda}, {mu}) = {closed} not positive")
        })?;
        let rel = (closed - fd).abs() / fd.abs();
        worst = worst.max(rel);
        check(rel <= 1e-4, || {
            format!("dM/dlambda({lambda}, {mu}) = {closed}, finite difference {fd}")
        })?;
    }
    for (lambda, eta) in triangle(n) {
        let closed = (forms.dm_deta)(lambda, eta).map_err(e)?;
        let fd = (em_map_quadrature(lambda, eta + FD_STEP, &q).map_err(e)?
            - em_map_quadrature(lambda, eta - FD_STEP, &q).map_err(e)?)
            / (2.0 * FD_STEP);
        check(closed > 0.0, || {
            format!("dM/deta({lambda}, {eta}) = {closed} not positive")
        })?;
        let rel = (closed - fd).abs() / fd.abs();
        worst = worst.max(rel);
        check(rel <= 1e-4, || {
            format!("dM/deta({lambda}, {eta}) = {closed}, finite difference {fd}")
        })?;
    }
    Ok(format!(
        "{} points, worst relative error {worst:.2e}",
        2 * n
    ))
}

fn contraction_suite(level: Level, _: &ClosedForms) -> std::result::Result<String, String> {
    let values: &[f64] = if level == Level::Full {
        &[0.1, 0.3, 1.0, 2.0, 4.0]
    } else {
        &[0.3, 1.0, 4.0]
    };
    let q = QuadratureSettings::default();
    let mut worst_margin = f64::NEG_INFINITY;
    for &l0 in values {
        for &mu in values {
            let t = run_population_em(l0, mu, 20_000, 1e-9, &q).map_err(e)?;
            let kappa = contraction_constants(l0, mu).map_err(e)?.kappa;
            check(kappa < 1.0, || format!("kappa({l0}, {mu}) = {kappa}"))?;
            if let Some(r) = t.max_ratio() {
                worst_margin = worst_margin.max(r - kappa);
                check(r <= kappa + 1e-6, || {
                    format!("({l0}, {mu}): ratio {r} exceeds kappa {kappa}")
                })?;
            }
            check(t.iterates.iter().all(|&x| x > 0.0), || {
                format!("({l0}, {mu}) changed sign")
            })?;
            check(t.converged, || format!("({l0}, {mu}) did not converge"))?;
        }
    }
    Ok(format!(
        "{} pairs, max(ratio - kappa) = {worst_margin:.3e}",
        values.len() * values.len()
    ))
}

fn ascent_suite(level: Level, _: &ClosedForms) -> std::result::Result<String, String> {
    let reps = if level == Level::Full { 8 } else { 2 };
    for i in 0..reps {
        let k = [2, 3, 5][i % 3];
        let d = [1, 3][i % 2];
        let model = generate_instance(k, d, 500 + i as u64).map_err(e)?;
        let samples = sample(&model, 600, 900 + i as u64);
        let init = crate::harness::generate_initialization(k, d, 1300 + i as u64).map_err(e)?;
        for algorithm in [
            Algorithm::Naive,
            Algorithm::Regularized { m: 0.01 },
            Algorithm::Regularized { m: 0.1 },
            Algorithm::Regularized { m: 1.0 },
        ] {
            let cfg = FitConfig {
                algorithm,
                max_iters: 80,
                param_tol: 0.0,
                seed: 0,
            };
            let r = fit(&init, &samples, &cfg).map_err(e)?;
            for w in r.trace.windows(2) {
                check(w[1].objective >= w[0].objective - 1e-9, || {
                    format!("{algorithm} objective fell at iteration {}", w[1].iter)
                })?;
            }
        }
    }
    Ok(format!("{reps} instances x 4 variants"))
}

fn reduction_suite(level: Level, _: &ClosedForms) -> std::result::Result<String, String> {
    let reps = if level == Level::Full { 10 } else { 3 };
    for i in 0..reps {
        let model = generate_instance(3, 2, 40 + i).map_err(e)?;
        let samples = sample(&model, 300, 41 + i);
        let mut means = crate::harness::generate_initialization(3, 2, 42 + i).map_err(e)?;
        for _ in 0..20 {
            let a = naive_em_step(&means, &samples).map_err(e)?.means;
            let b = regularized_em_step(&means, &samples, 0.0).map_err(e)?.means;
            check(a == b, || "M = 0 step differs from naive step".to_string())?;
            means = a;
        }
    }
    Ok(format!("{reps} instances x 20 steps"))
}

fn brute_force_min(cost: &[f64], n: usize) -> f64 {
    fn rec(cost: &[f64], n: usize, row: usize, used: &mut Vec<bool>, acc: f64, best: &mut f64) {
        if row == n {
            *best = best.min(acc);
            return;
        }
        for c in 0..n {
            if !used[c] {
                used[c] = true;
                rec(cost, n, row + 1, used, acc + cost[row * n + c], best);
                used[c] = false;
            }
        }
    }
    let mut best = f64::INFINITY;
    rec(cost, n, 0, &mut vec![false; n], 0.0, &mut best);
    best
}

fn assignment_suite(level: Level, _: &ClosedForms) -> std::result::Result<String, String> {
    let reps = if level == Level::Full { 200 } else { 40 };
    let mut r = rng::stream(77);
    for i in 0..reps {
        let k = 1 + i % 7;
        let d = 1 + i % 3;
        let a: Vec<f64> = (0..k * d)
            .map(|_| rand::Rng::random_range(&mut r, -3.0..3.0))
            .collect();
        let b: Vec<f64> = (0..k * d)
            .map(|_| rand::Rng::random_range(&mut r, -3.0..3.0))
            .collect();
        let (a, b) = (Means::new(k, d, a).unwrap(), Means::new(k, d, b).unwrap());
        let report = match_components(&a, &b).map_err(e)?;
        let cost: Vec<f64> = (0..k)
            .flat_map(|t| (0..k).map(move |j| (t, j)))
            .map(|(t, j)| crate::math::squared_distance(a.row(j), b.row(t)))
            .collect();
        let brute = brute_force_min(&cost, k);
        check(
            (report.total_sq_distance - brute).abs() <= 1e-9 * (1.0 + brute),
            || {
                format!(
                    "K={k}: hungarian {} vs brute force {brute}",
                    report.total_sq_distance
                )
            },
        )?;
        let (_, raw) = solve_assignment(&cost, k);
        check((raw - brute).abs() <= 1e-9 * (1.0 + brute), || {
            "raw solver off".to_string()
        })?;
    }
    Ok(format!("{reps} random pairs, K <= 7"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_level_passes() {
        for r in run(Level::Fast) {
            assert!(r.passed, "{r}");
        }
    }

    fn corrupted_map(l: f64, eta: f64) -> Result<f64> {
        em_map_closed(l, eta).map(|v| v * (1.0 + 1e-6))
    }

    fn corrupted_deta(l: f64, eta: f64) -> Result<f64> {
        // Drop the factor 1/2 from the e^{-eta} coefficient.
        let good = dm_deta_closed(l, eta)?;
        Ok(2.0 * good - l.tanh())
    }

    #[test]
    fn corrupted_closed_forms_are_caught() {
        let forms = ClosedForms {
            em_map: corrupted_map,
            ..Default::default()
        };
        let reports = run_with(Level::Fast, &forms);
        assert!(reports
            .iter()
            .any(|r| r.name == "closed-form-map" && !r.passed));

        let forms = ClosedForms {
            dm_deta: corrupted_deta,
            ..Default::default()
        };
        let reports = run_with(Level::Fast, &forms);
        assert!(reports
            .iter()
            .any(|r| r.name == "closed-derivatives" && !r.passed));
    }
}
