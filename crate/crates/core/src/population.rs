//! Population-level EM for the symmetric two-component Laplacian mixture
//! `p_mu(x) = 1/2 L(x; mu) + 1/2 L(x; -mu)` with unit scale.
//!
//! The EM update is the map `lambda -> M(lambda, mu)`. It is evaluated two
//! ways by quadrature (the posterior-ratio definition and the simplified
//! single-component expectation), and on `0 < lambda < mu` also in closed
//! form. Closed-form derivatives in both arguments give the monotonicity
//! facts behind the contraction constants in [`contraction_constants`].
//!
//! General scale `b` reduces to this case by rescaling `lambda, mu, x` by `b`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::logistic;
use crate::quadrature::{integrate, QuadratureSettings};

/// Below this distance from the fixed point, the per-step ratio is dominated
/// by quadrature error and is not reported.
pub const RATIO_RESOLUTION: f64 = 1e-6;

fn check_finite(lambda: f64, mu: f64) -> Result<()> {
    if !(lambda.is_finite() && mu.is_finite()) {
        return Err(Error::invalid(format!(
            "non-finite EM map arguments ({lambda}, {mu})"
        )));
    }
    Ok(())
}

/// `M(lambda, mu) = E_{x ~ L(mu)}[x tanh((|x + lambda| - |x - lambda|) / 2)]`.
///
/// The bracketed factor is `(L(x;l) - L(x;-l)) / (L(x;l) + L(x;-l))`.
pub fn em_map_quadrature(lambda: f64, mu: f64, settings: &QuadratureSettings) -> Result<f64> {
    check_finite(lambda, mu)?;
    settings.validate()?;
    let lo = mu - settings.tail_halfwidth;
    let hi = mu + settings.tail_halfwidth;
    let breaks = QuadratureSettings::breakpoints(lambda, mu, lo, hi);
    let f = |x: f64| {
        let t = 0.5 * ((x + lambda).abs() - (x - lambda).abs());
        x * t.tanh() * 0.5 * (-(x - mu).abs()).exp()
    };
    let r = integrate(
        f,
        lo,
        hi,
        &breaks,
        settings.abs_tol,
        settings.rel_tol,
        settings.max_panels,
    )?;
    Ok(r.value)
}

/// `M(lambda, mu)` from its definition as a ratio of two expectations under
/// the full mixture `p_mu`:
/// `E[x w(x)] / E[w(x)]` with `w(x) = 0.5 L(x; lambda) / p_lambda(x)`.
pub fn em_map_ratio_form(lambda: f64, mu: f64, settings: &QuadratureSettings) -> Result<f64> {
    check_finite(lambda, mu)?;
    settings.validate()?;
    let reach = mu.abs() + settings.tail_halfwidth;
    let (lo, hi) = (-reach, reach);
    let breaks = QuadratureSettings::breakpoints(lambda, mu, lo, hi);
    // w(x) = 1 / (1 + exp(|x - l| - |x + l|))
    let weight = |x: f64| logistic((x + lambda).abs() - (x - lambda).abs());
    let mixture = |x: f64| 0.25 * ((-(x - mu).abs()).exp() + (-(x + mu).abs()).exp());
    let run = |g: &dyn Fn(f64) -> f64| {
        integrate(
            g,
            lo,
            hi,
            &breaks,
            settings.abs_tol,
            settings.rel_tol,
            settings.max_panels,
        )
    };
    let num = run(&|x| x * weight(x) * mixture(x))?;
    let den = run(&|x| weight(x) * mixture(x))?;
    if !(den.value > 1e-300) {
        return Err(Error::numerical(
            "posterior weight expectation vanished",
            den.error,
        ));
    }
    Ok(num.value / den.value)
}

/// Coefficient of `e^{-eta}` in the closed form of `M(lambda, eta)`.
fn closed_coefficient(lambda: f64) -> f64 {
    let t = lambda.tanh();
    let ep = lambda.exp();
    let em = (-lambda).exp();
    0.5 * (t * (lambda + 1.0) * em + (lambda - 1.0) * ep + (lambda + 1.0) * em
        - (lambda - 1.0) * ep * t)
}

fn check_below(lambda: f64, eta: f64) -> Result<()> {
    check_finite(lambda, eta)?;
    if !(lambda > 0.0 && lambda < eta) {
        return Err(Error::invalid(format!(
            "closed form requires 0 < lambda < eta, got ({lambda}, {eta})"
        )));
    }
    Ok(())
}

/// Closed form of `M(lambda, eta)` valid for `0 < lambda < eta`:
///
/// `1/2 e^{-eta} { tanh(l)(l+1)e^{-l} + (l-1)e^{l} + (l+1)e^{-l} - (l-1)e^{l} tanh(l) } + tanh(l) eta`
pub fn em_map_closed(lambda: f64, eta: f64) -> Result<f64> {
    check_below(lambda, eta)?;
    Ok((-eta).exp() * closed_coefficient(lambda) + lambda.tanh() * eta)
}

/// `d/d eta` of [`em_map_closed`]: `tanh(lambda) - C(lambda) e^{-eta}`.
pub fn dm_deta_closed(lambda: f64, eta: f64) -> Result<f64> {
    check_below(lambda, eta)?;
    Ok(lambda.tanh() - closed_coefficient(lambda) * (-eta).exp())
}

fn dm_dlambda_above(lambda: f64, mu: f64) -> f64 {
    // mu < lambda
    let c = lambda.cosh();
    (lambda + 1.0) * (-lambda).exp() * mu.cosh() / (c * c)
}

fn dm_dlambda_below(lambda: f64, mu: f64) -> f64 {
    // mu > lambda
    let s = lambda.exp() + (-lambda).exp();
    2.0 / (s * s)
        * ((-mu).exp() * ((lambda + 1.0) * (-lambda).exp() - (lambda - 1.0) * lambda.exp())
            + 2.0 * mu)
}

/// `d/d lambda M(lambda, mu)` for positive arguments.
///
/// Two closed forms apply depending on whether `mu` is below or above
/// `lambda`; they meet continuously at `mu = lambda`.
pub fn dm_dlambda_closed(lambda: f64, mu: f64) -> Result<f64> {
    check_finite(lambda, mu)?;
    if !(lambda > 0.0 && mu > 0.0) {
        return Err(Error::invalid(format!(
            "derivative requires positive arguments, got ({lambda}, {mu})"
        )));
    }
    if mu > lambda {
        return Ok(dm_dlambda_below(lambda, mu));
    }
    let above = dm_dlambda_above(lambda, mu);
    if mu == lambda {
        let below = dm_dlambda_below(lambda, mu);
        debug_assert!(
            (above - below).abs() <= 1e-10 * (1.0 + above.abs()),
            "derivative branches disagree at lambda = mu = {lambda}: {above} vs {below}"
        );
    }
    Ok(above)
}

/// The contraction factors of the population EM iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionConstants {
    /// Bound on the per-step ratio while iterates sit above the fixed point.
    pub kappa1: f64,
    /// Bound while iterates sit below it, fixed by the initialization.
    pub kappa2: f64,
    pub kappa: f64,
}

/// `(t + 1) e^{-t} / cosh(t)`, written as `2 (t + 1) e^{-2t} / (1 + e^{-2t})`
/// so that it does not overflow.
fn contraction_profile(t: f64) -> f64 {
    let e = (-2.0 * t).exp();
    2.0 * (t + 1.0) * e / (1.0 + e)
}

/// `kappa1 = (mu*+1)e^{-mu*}/cosh(mu*)`,
/// `kappa2 = 2(l0 e^{-l0} + e^{-l0})/(e^{l0} + e^{-l0})`, `kappa = max`.
pub fn contraction_constants(lambda0: f64, mu_star: f64) -> Result<ContractionConstants> {
    check_finite(lambda0, mu_star)?;
    if !(lambda0 > 0.0 && mu_star > 0.0) {
        return Err(Error::invalid(format!(
            "contraction constants need positive lambda0 and mu_star, got ({lambda0}, {mu_star})"
        )));
    }
    let kappa1 = contraction_profile(mu_star);
    let kappa2 = {
        let em = (-lambda0).exp();
        let ep = lambda0.exp();
        if ep.is_finite() {
            2.0 * (lambda0 * em + em) / (ep + em)
        } else {
            contraction_profile(lambda0)
        }
    };
    Ok(ContractionConstants {
        kappa1,
        kappa2,
        kappa: kappa1.max(kappa2),
    })
}

/// Iterates of the population EM for one `(lambda0, mu_star)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationTrajectory {
    pub mu_star: f64,
    pub lambda0: f64,
    /// The fixed point the iteration is attracted to: `sign(lambda0) |mu_star|`.
    pub target: f64,
    pub iterates: Vec<f64>,
    /// `|l_{t+1} - target| / |l_t - target|`; `None` once `|l_t - target|`
    /// drops below [`RATIO_RESOLUTION`].
    pub ratios: Vec<Option<f64>>,
    pub kappa1: Option<f64>,
    pub kappa2: Option<f64>,
    pub kappa: Option<f64>,
    pub converged: bool,
}

impl PopulationTrajectory {
    pub fn abs_errors(&self) -> impl Iterator<Item = f64> + '_ {
        self.iterates.iter().map(move |l| (l - self.target).abs())
    }

    pub fn final_lambda(&self) -> f64 {
        *self.iterates.last().expect("trajectory holds lambda0")
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.ratios.iter().flatten().copied().reduce(f64::max)
    }
}

/// Runs `l_{t+1} = M(l_t, mu_star)` until `|l_t - target| < tol` or
/// `max_iters` updates.
pub fn run_population_em(
    lambda0: f64,
    mu_star: f64,
    max_iters: usize,
    tol: f64,
    settings: &QuadratureSettings,
) -> Result<PopulationTrajectory> {
    check_finite(lambda0, mu_star)?;
    if max_iters == 0 {
        return Err(Error::invalid("max_iters must be at least 1"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("tol must be positive"));
    }
    let target = if lambda0 == 0.0 {
        0.0
    } else {
        lambda0.signum() * mu_star.abs()
    };
    let constants = if lambda0 != 0.0 && mu_star != 0.0 {
        Some(contraction_constants(lambda0.abs(), mu_star.abs())?)
    } else {
        None
    };

    let mut iterates = vec![lambda0];
    let mut ratios = Vec::new();
    let mut lambda = lambda0;
    let mut converged = (lambda - target).abs() < tol;
    while !converged && ratios.len() < max_iters {
        let next = em_map_quadrature(lambda, mu_star, settings)?;
        let before = (lambda - target).abs();
        let after = (next - target).abs();
        ratios.push((before >= RATIO_RESOLUTION).then(|| after / before));
        iterates.push(next);
        lambda = next;
        converged = after < tol;
    }
    Ok(PopulationTrajectory {
        mu_star,
        lambda0,
        target,
        iterates,
        ratios,
        kappa1: constants.map(|c| c.kappa1),
        kappa2: constants.map(|c| c.kappa2),
        kappa: constants.map(|c| c.kappa),
        converged,
    })
}
