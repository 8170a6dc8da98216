//! Equal-weight Gaussian and Laplacian mixtures: densities, responsibilities,
//! sampling and centering.
//!
//! All density arithmetic stays in log space. A `d > 1` Laplacian is the
//! product of independent per-coordinate Laplacians; that extension is
//! experimental.

use std::f64::consts::PI;
use std::fmt;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_sum_exp, softmax_in_place};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Laplacian,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Gaussian => f.write_str("gaussian"),
            Family::Laplacian => f.write_str("laplacian"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "laplacian" | "laplace" => Ok(Family::Laplacian),
            other => Err(Error::invalid(format!("unknown family {other:?}"))),
        }
    }
}

/// A `K x d` matrix of component means, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Means {
    k: usize,
    d: usize,
    data: Vec<f64>,
}

impl Means {
    pub fn new(k: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if k == 0 || d == 0 {
            return Err(Error::invalid("means need K >= 1 and d >= 1"));
        }
        if data.len() != k * d {
            return Err(Error::invalid(format!(
                "means buffer has {} entries, expected {k} x {d}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("means must be finite"));
        }
        Ok(Means { k, d, data })
    }

    pub fn zeros(k: usize, d: usize) -> Result<Self> {
        Self::new(k, d, vec![0.0; k * d])
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let k = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("all mean vectors must share one dimension"));
        }
        Self::new(k, d, rows.concat())
    }

    /// Parses `"a,b;c,d"`: rows separated by `;`, coordinates by `,`.
    pub fn parse(s: &str) -> Result<Self> {
        let rows = s
            .split(';')
            .map(|row| {
                row.split(',')
                    .map(|v| {
                        v.trim()
                            .parse::<f64>()
                            .map_err(|_| Error::invalid(format!("bad number {v:?} in means")))
                    })
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_rows(&rows)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn row_mut(&mut self, k: usize) -> &mut [f64] {
        &mut self.data[k * self.d..(k + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    /// `sum_k mu_k`.
    pub fn column_sum(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.d];
        for row in self.rows() {
            for (acc, v) in s.iter_mut().zip(row) {
                *acc += v;
            }
        }
        s
    }

    /// Adds `shift` to every row.
    pub fn translated(&self, shift: &[f64]) -> Result<Self> {
        if shift.len() != self.d {
            return Err(Error::invalid("shift dimension mismatch"));
        }
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(self.d) {
            for (v, s) in row.iter_mut().zip(shift) {
                *v += s;
            }
        }
        Ok(out)
    }

    /// Reorders rows so that row `i` of the result is row `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let data = perm
            .iter()
            .flat_map(|&p| self.row(p).iter().copied())
            .collect();
        Means {
            k: self.k,
            d: self.d,
            data,
        }
    }
}

impl Serialize for Means {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_rows().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Means {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        Means::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// Equal-weight mixture of `K` location components sharing one scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel")]
pub struct MixtureModel {
    family: Family,
    scale: f64,
    means: Means,
}

#[derive(Deserialize)]
struct RawModel {
    family: Family,
    #[serde(default = "unit_scale")]
    scale: f64,
    means: Means,
}

fn unit_scale() -> f64 {
    1.0
}

impl TryFrom<RawModel> for MixtureModel {
    type Error = Error;

    fn try_from(raw: RawModel) -> Result<Self> {
        MixtureModel::new(raw.family, raw.means, raw.scale)
    }
}

impl MixtureModel {
    pub fn new(family: Family, means: Means, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "scale must be positive, got {scale}"
            )));
        }
        Ok(MixtureModel {
            family,
            scale,
            means,
        })
    }

    pub fn gaussian(means: Means) -> Self {
        MixtureModel {
            family: Family::Gaussian,
            scale: 1.0,
            means,
        }
    }

    pub fn laplacian(means: Means) -> Self {
        MixtureModel {
            family: Family::Laplacian,
            scale: 1.0,
            means,
        }
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn means(&self) -> &Means {
        &self.means
    }

    pub fn k(&self) -> usize {
        self.means.k()
    }

    pub fn d(&self) -> usize {
        self.means.d()
    }

    /// Same family and scale, different means.
    pub fn with_means(&self, means: Means) -> Self {
        MixtureModel {
            family: self.family,
            scale: self.scale,
            means,
        }
    }

    /// `log f(x; mu_k)` for component `k`. No dimension check.
    #[inline]
    pub(crate) fn component_log_density(&self, k: usize, x: &[f64]) -> f64 {
        let mu = self.means.row(k);
        let d = self.d() as f64;
        match self.family {
            Family::Gaussian => {
                let var = self.scale * self.scale;
                let sq: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
                -0.5 * d * (2.0 * PI * var).ln() - 0.5 * sq / var
            }
            Family::Laplacian => {
                let abs: f64 = x.iter().zip(mu).map(|(a, b)| (a - b).abs()).sum();
                -d * (2.0 * self.scale).ln() - abs / self.scale
            }
        }
    }

    fn check_dim(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d() {
            return Err(Error::invalid(format!(
                "point has dimension {}, model has {}",
                x.len(),
                self.d()
            )));
        }
        Ok(())
    }

    fn log_density_unchecked(&self, x: &[f64], scratch: &mut Vec<f64>) -> f64 {
        scratch.clear();
        scratch.extend((0..self.k()).map(|k| self.component_log_density(k, x)));
        log_sum_exp(scratch) - (self.k() as f64).ln()
    }
}

/// `log p(x)` of the equal-weight mixture.
pub fn log_density(model: &MixtureModel, x: &[f64]) -> Result<f64> {
    model.check_dim(x)?;
    Ok(model.log_density_unchecked(x, &mut Vec::with_capacity(model.k())))
}

/// `p(x) = (1/K) sum_k f(x; mu_k)`. Underflows to zero only where the true
/// value is below the smallest positive `f64`; use [`log_density`] there.
pub fn density(model: &MixtureModel, x: &[f64]) -> Result<f64> {
    log_density(model, x).map(f64::exp)
}

/// Posterior component probabilities `w_k(x)`, computed in log space.
pub fn responsibilities(model: &MixtureModel, x: &[f64]) -> Result<Vec<f64>> {
    model.check_dim(x)?;
    let mut w: Vec<f64> = (0..model.k())
        .map(|k| model.component_log_density(k, x))
        .collect();
    softmax_in_place(&mut w);
    Ok(w)
}

/// Average log-density over the sample set.
pub fn log_likelihood(model: &MixtureModel, samples: &SampleSet) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("log-likelihood of an empty sample set"));
    }
    if samples.d() != model.d() {
        return Err(Error::invalid(format!(
            "samples have dimension {}, model has {}",
            samples.d(),
            model.d()
        )));
    }
    let mut scratch = Vec::with_capacity(model.k());
    let total: f64 = samples
        .rows()
        .map(|x| model.log_density_unchecked(x, &mut scratch))
        .sum();
    Ok(total / samples.n() as f64)
}

/// An `n x d` data matrix with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    d: usize,
    data: Vec<f64>,
    pub seed: u64,
    pub centered: bool,
}

impl SampleSet {
    pub fn new(d: usize, data: Vec<f64>, seed: u64) -> Result<Self> {
        if d == 0 {
            return Err(Error::invalid("samples need d >= 1"));
        }
        if !data.len().is_multiple_of(d) {
            return Err(Error::invalid(
                "sample buffer is not a whole number of rows",
            ));
        }
        Ok(SampleSet {
            d,
            data,
            seed,
            centered: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], seed: u64) -> Result<Self> {
        let d = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid("cannot infer dimension from zero rows"))?;
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::invalid("ragged sample rows"));
        }
        Self::new(d, rows.concat(), seed)
    }

    pub fn n(&self) -> usize {
        self.data.len() / self.d
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.d)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.d];
        for row in self.rows() {
            for (acc, v) in m.iter_mut().zip(row) {
                *acc += v;
            }
        }
        let n = self.n() as f64;
        m.iter_mut().for_each(|v| *v /= n);
        m
    }
}

/// Draws `n` points: a uniform component index, then a draw from that
/// component. Bit-identical for identical `(model, n, seed)`.
pub fn sample(model: &MixtureModel, n: usize, seed: u64) -> SampleSet {
    let mut rng = rng::stream(seed);
    let d = model.d();
    let k = model.k();
    let s = model.scale();
    let mut data = Vec::with_capacity(n * d);
    for _ in 0..n {
        let j = rng.random_range(0..k);
        let mu = model.means().row(j);
        for &m in mu {
            let z = match model.family() {
                Family::Gaussian => rng.sample::<f64, _>(StandardNormal),
                Family::Laplacian => {
                    // Inverse CDF of the standard Laplacian; u in (-1/2, 1/2).
                    let u: f64 = rng.random::<f64>() - 0.5;
                    let tail = 1.0 - 2.0 * u.abs();
                    -u.signum() * tail.max(f64::MIN_POSITIVE).ln()
                }
            };
            data.push(m + s * z);
        }
    }
    SampleSet {
        d,
        data,
        seed,
        centered: false,
    }
}

/// Subtracts the empirical column mean. Returns the centered set and the
/// shift that was removed (add it back to undo).
pub fn center_samples(samples: &SampleSet) -> Result<(SampleSet, Vec<f64>)> {
    if samples.is_empty() {
        return Err(Error::invalid("cannot center an empty sample set"));
    }
    let shift = samples.column_means();
    let mut data = samples.data.clone();
    for row in data.chunks_exact_mut(samples.d) {
        for (v, m) in row.iter_mut().zip(&shift) {
            *v -= m;
        }
    }
    Ok((
        SampleSet {
            d: samples.d,
            data,
            seed: samples.seed,
            centered: true,
        },
        shift,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn means1(v: &[f64]) -> Means {
        Means::new(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn standard_normal_mode() {
        let m = MixtureModel::gaussian(means1(&[0.0]));
        let p = density(&m, &[0.0]).unwrap();
        assert!((p - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn laplacian_densities_at_origin() {
        let m = MixtureModel::laplacian(means1(&[0.0, 0.0]));
        assert!((density(&m, &[0.0]).unwrap() - 0.5).abs() < 1e-15);
        let m = MixtureModel::laplacian(means1(&[1.0, -1.0]));
        let expected = 0.5 * (0.5 * (-1.0f64).exp()) + 0.5 * (0.5 * (-1.0f64).exp());
        assert!((density(&m, &[0.0]).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.183_939_7).abs() < 1e-7);
    }

    #[test]
    fn far_points_stay_positive_in_log_space() {
        let g = MixtureModel::gaussian(means1(&[0.0, 1.0]));
        assert!(log_density(&g, &[700.0]).unwrap().is_finite());
        let l = MixtureModel::laplacian(means1(&[0.0, 1.0]));
        assert!(density(&l, &[701.0]).unwrap() > 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = MixtureModel::gaussian(Means::zeros(2, 3).unwrap());
        assert!(matches!(
            density(&m, &[0.0]),
            Err(Error::InvalidArgument(_))
        ));
        assert!(responsibilities(&m, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn single_point_loglik() {
        let m = MixtureModel::gaussian(means1(&[0.0]));
        let s = SampleSet::from_rows(&[vec![0.0]], 0).unwrap();
        let ll = log_likelihood(&m, &s).unwrap();
        assert!((ll + 0.5 * (2.0 * PI).ln()).abs() < 1e-15);
        assert!((ll + 0.918_938_5).abs() < 1e-7);
    }

    #[test]
    fn symmetric_pair_loglik() {
        let m = MixtureModel::gaussian(means1(&[-1.0, 1.0]));
        let s = SampleSet::from_rows(&[vec![0.0], vec![0.0]], 0).unwrap();
        let phi1 = (-0.5f64).exp() / (2.0 * PI).sqrt();
        let ll = log_likelihood(&m, &s).unwrap();
        assert!((ll - phi1.ln()).abs() < 1e-14);
        assert!((ll + 1.418_938_5).abs() < 1e-7);
    }

    #[test]
    fn empty_loglik_errors() {
        let m = MixtureModel::gaussian(means1(&[0.0]));
        let s = SampleSet::new(1, vec![], 0).unwrap();
        assert!(log_likelihood(&m, &s).is_err());
    }

    #[test]
    fn responsibilities_edge_cases() {
        let m = MixtureModel::gaussian(means1(&[3.0]));
        assert_eq!(responsibilities(&m, &[-2.0]).unwrap(), vec![1.0]);

        let m = MixtureModel::gaussian(
            Means::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.0]]).unwrap(),
        );
        // Origin is at unit distance from all three means.
        let w = responsibilities(&m, &[0.0, 0.0]).unwrap();
        for wk in w {
            assert!((wk - 1.0 / 3.0).abs() < 1e-15);
        }

        let m = MixtureModel::gaussian(means1(&[1.0, -1.0]));
        let w = responsibilities(&m, &[10.0]).unwrap();
        assert!(w[0] >= 1.0 - 1e-8);
        assert!((w[0] - 1.0 / (1.0 + (-20.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_deterministic() {
        let m = MixtureModel::gaussian(means1(&[-1.0, 1.0]));
        assert!(sample(&m, 0, 3).is_empty());
        assert_eq!(sample(&m, 50, 3), sample(&m, 50, 3));
        assert_ne!(sample(&m, 50, 3).as_slice(), sample(&m, 50, 4).as_slice());
    }

    #[test]
    fn sampling_moments() {
        let m = MixtureModel::gaussian(means1(&[-2.0, 2.0]));
        let s = sample(&m, 200_000, 11);
        let mean = s.column_means()[0];
        let var = s.rows().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / s.n() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!((var - 5.0).abs() < 0.1, "var {var}");
    }

    #[test]
    fn laplacian_sampling_variance() {
        // Var of a unit Laplacian is 2.
        let m = MixtureModel::laplacian(means1(&[0.0]));
        let s = sample(&m, 200_000, 1);
        let var = s.rows().map(|r| r[0] * r[0]).sum::<f64>() / s.n() as f64;
        assert!((var - 2.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn centering() {
        let s = SampleSet::from_rows(&[vec![1.0], vec![3.0]], 0).unwrap();
        let (c, shift) = center_samples(&s).unwrap();
        assert_eq!(c.as_slice(), &[-1.0, 1.0]);
        assert_eq!(shift, vec![2.0]);
        assert!(c.centered);

        let (again, shift2) = center_samples(&c).unwrap();
        assert!(shift2[0].abs() < 1e-15);
        assert!(again
            .as_slice()
            .iter()
            .zip(c.as_slice())
            .all(|(a, b)| (a - b).abs() < 1e-15));

        let s = SampleSet::from_rows(&[vec![1.0, 0.0], vec![3.0, 2.0], vec![5.0, 4.0]], 0).unwrap();
        let (c, _) = center_samples(&s).unwrap();
        for m in c.column_means() {
            assert!(m.abs() <= 1e-15);
        }
        assert!(center_samples(&SampleSet::new(2, vec![], 0).unwrap()).is_err());
    }

    #[test]
    fn model_json_validates_scale() {
        let bad = r#"{"family":"gaussian","scale":-1.0,"means":[[0.0]]}"#;
        assert!(serde_json::from_str::<MixtureModel>(bad).is_err());
        let ok = r#"{"family":"laplacian","means":[[0.0],[1.0]]}"#;
        let m: MixtureModel = serde_json::from_str(ok).unwrap();
        assert_eq!(m.scale(), 1.0);
        assert_eq!(m.k(), 2);
    }

    #[test]
    fn parse_means() {
        let m = Means::parse("-1;1").unwrap();
        assert_eq!((m.k(), m.d()), (2, 1));
        let m = Means::parse("1,2; 3,4").unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert!(Means::parse("1,2;3").is_err());
    }
}
