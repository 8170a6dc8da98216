//! Globally adaptive Gauss-Kronrod (7/15) integration over a finite interval
//! with user-supplied breakpoints.
//!
//! The integrands in this crate are smooth except at a handful of known kinks
//! (`|x - a|` terms), so the interval is pre-split at those points and every
//! panel sees an analytic function. The panel with the largest error estimate
//! is bisected until the total estimate meets the tolerance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerances and truncation for the population-level expectations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Tails are cut this far (in units of the unit scale) beyond the mass.
    pub tail_halfwidth: f64,
    /// Upper bound on the number of panels.
    pub max_panels: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        QuadratureSettings {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            tail_halfwidth: 40.0,
            max_panels: 4000,
        }
    }
}

impl QuadratureSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::invalid("quadrature tolerances must be positive"));
        }
        if !(self.tail_halfwidth >= 10.0) {
            return Err(Error::invalid("tail_halfwidth must be at least 10"));
        }
        if self.max_panels == 0 {
            return Err(Error::invalid("max_panels must be positive"));
        }
        Ok(())
    }

    /// Sorted, deduplicated kink locations of the EM integrand that fall
    /// strictly inside `(lo, hi)`.
    pub fn breakpoints(lambda: f64, mu: f64, lo: f64, hi: f64) -> Vec<f64> {
        let mut pts: Vec<f64> = [-lambda, lambda, -mu, mu]
            .into_iter()
            .filter(|p| *p > lo && *p < hi)
            .collect();
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Integral {
    pub value: f64,
    pub error: f64,
    pub panels: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

// Gauss weights for nodes XGK[1], XGK[3], XGK[5] and the center.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy)]
struct Panel {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Panel {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let pair = f(c - h * x) + f(c + h * x);
        kronrod += w * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    Panel {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    }
}

/// Integrates `f` over `[lo, hi]`, splitting first at `breaks` (which must
/// lie in the open interval; others are ignored).
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    lo: f64,
    hi: f64,
    breaks: &[f64],
    abs_tol: f64,
    rel_tol: f64,
    max_panels: usize,
) -> Result<Integral> {
    if !(lo.is_finite() && hi.is_finite()) || lo > hi {
        return Err(Error::invalid(format!(
            "bad integration range [{lo}, {hi}]"
        )));
    }
    if lo == hi {
        return Ok(Integral {
            value: 0.0,
            error: 0.0,
            panels: 0,
        });
    }
    let mut edges = vec![lo];
    let mut inner: Vec<f64> = breaks
        .iter()
        .copied()
        .filter(|p| *p > lo && *p < hi)
        .collect();
    inner.sort_by(f64::total_cmp);
    inner.dedup();
    edges.extend(inner);
    edges.push(hi);

    let mut panels: Vec<Panel> = edges.windows(2).map(|w| gk15(&f, w[0], w[1])).collect();
    loop {
        let value: f64 = panels.iter().map(|p| p.value).sum();
        let error: f64 = panels.iter().map(|p| p.error).sum();
        if !value.is_finite() {
            return Err(Error::numerical(
                "integrand produced a non-finite value",
                error,
            ));
        }
        if error <= abs_tol.max(rel_tol * value.abs()) {
            return Ok(Integral {
                value,
                error,
                panels: panels.len(),
            });
        }
        if panels.len() >= max_panels {
            return Err(Error::numerical(
                format!("quadrature did not converge within {max_panels} panels"),
                error,
            ));
        }
        let (worst, _) = panels
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("at least one panel");
        let p = panels.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            return Err(Error::numerical(
                "panel width reached machine precision",
                error,
            ));
        }
        panels.push(gk15(&f, p.a, mid));
        panels.push(gk15(&f, mid, p.b));
    }
}
