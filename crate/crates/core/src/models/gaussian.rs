use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::chi_square_upper_quantile;

/// Smallest accepted squared Cholesky pivot relative to its diagonal entry.
const PIVOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GaussianParams {
    mean: Vec<f64>,
    /// Row-major `d × d`.
    cov: Vec<f64>,
}

/// Multivariate normal with a validated Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GaussianParams", into = "GaussianParams")]
pub struct GaussianModel {
    mean: Vec<f64>,
    cov: Vec<f64>,
    /// Lower-triangular factor, row-major.
    chol: Vec<f64>,
    log_det: f64,
}

impl TryFrom<GaussianParams> for GaussianModel {
    type Error = Error;
    fn try_from(p: GaussianParams) -> Result<Self> {
        GaussianModel::new(p.mean, p.cov)
    }
}

impl From<GaussianModel> for GaussianParams {
    fn from(g: GaussianModel) -> Self {
        GaussianParams {
            mean: g.mean,
            cov: g.cov,
        }
    }
}

/// Lower Cholesky factor of a row-major SPD matrix, rejecting near-singular
/// pivots.
pub(crate) fn cholesky(d: usize, cov: &[f64]) -> Result<Vec<f64>> {
    if cov.iter().any(|c| !c.is_finite()) {
        return Err(Error::NotSpd("non-finite entry".into()));
    }
    for i in 0..d {
        for j in 0..i {
            let (a, b) = (cov[i * d + j], cov[j * d + i]);
            if (a - b).abs() > 1e-12 * (a.abs() + b.abs()).max(f64::MIN_POSITIVE) {
                return Err(Error::NotSpd(format!("asymmetric at ({i}, {j})")));
            }
        }
    }
    let m = DMatrix::from_row_slice(d, d, cov);
    let l = m
        .cholesky()
        .ok_or_else(|| Error::NotSpd("Cholesky factorization failed".into()))?
        .unpack();
    for i in 0..d {
        let pivot = l[(i, i)] * l[(i, i)];
        if !(pivot > PIVOT_REL_TOL * cov[i * d + i]) {
            return Err(Error::NotSpd(format!("near-singular pivot {i}")));
        }
    }
    let mut out = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            out[i * d + j] = l[(i, j)];
        }
    }
    Ok(out)
}

impl GaussianModel {
    pub fn new(mean: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mean.len();
        if d == 0 || cov.len() != d * d {
            return Err(Error::Schema(format!(
                "mean of length {d} with {} covariance entries",
                cov.len()
            )));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::Degenerate("non-finite mean".into()));
        }
        let chol = cholesky(d, &cov)?;
        let log_det = 2.0 * (0..d).map(|i| chol[i * d + i].ln()).sum::<f64>();
        Ok(Self {
            mean,
            cov,
            chol,
            log_det,
        })
    }

    pub fn standard(d: usize) -> Self {
        let mut cov = vec![0.0; d * d];
        for i in 0..d {
            cov[i * d + i] = 1.0;
        }
        Self::new(vec![0.0; d], cov).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major covariance.
    pub fn cov(&self) -> &[f64] {
        &self.cov
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.cov[i * self.dim() + i]
    }

    /// Squared Mahalanobis distance from the mean.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut buf = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if d <= 8 {
            &mut buf[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        let mut acc = 0.0;
        for i in 0..d {
            let row = &self.chol[i * d..i * d + i];
            let s: f64 = row.iter().zip(z.iter()).map(|(l, z)| l * z).sum();
            z[i] = (x[i] - self.mean[i] - s) / self.chol[i * d + i];
            acc += z[i] * z[i];
        }
        acc
    }

    pub fn log_pdf(&self, x: &[f64]) -> f64 {
        let d = self.dim() as f64;
        -0.5 * (d * (2.0 * std::f64::consts::PI).ln() + self.log_det + self.mahalanobis_sq(x))
    }

    /// One draw, written into `out`.
    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let d = self.dim();
        let mut buf = [0.0f64; 8];
        let mut heap;
        let z: &mut [f64] = if d <= 8 {
            &mut buf[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        for zi in z.iter_mut() {
            *zi = rng.sample(StandardNormal);
        }
        for i in 0..d {
            let row = &self.chol[i * d..=i * d + i];
            out[i] = self.mean[i] + row.iter().zip(z.iter()).map(|(l, z)| l * z).sum::<f64>();
        }
    }
}

/// Maximum-likelihood normal fit (covariance normalized by `n`).
pub fn fit_gaussian<P: AsRef<[f64]>>(points: &[P]) -> Result<GaussianModel> {
    let d = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
    if d == 0 || points.len() < d + 1 {
        return Err(Error::TooFew {
            what: "points for a Gaussian fit",
            needed: d.max(1) + 1,
            got: points.len(),
        });
    }
    let n = points.len() as f64;
    let mut mean = vec![0.0; d];
    for p in points {
        let p = p.as_ref();
        if p.len() != d {
            return Err(Error::Schema("points differ in dimension".into()));
        }
        for (m, x) in mean.iter_mut().zip(p) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = vec![0.0; d * d];
    for p in points {
        let p = p.as_ref();
        for i in 0..d {
            let di = p[i] - mean[i];
            for j in 0..=i {
                cov[i * d + j] += di * (p[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i * d + j] /= n;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    GaussianModel::new(mean, cov).map_err(|e| match e {
        Error::NotSpd(msg) => Error::Degenerate(format!("singular sample covariance ({msg})")),
        other => other,
    })
}

/// The noisy-rational action model with a quadratic cost is a Gaussian whose
/// rationality coefficient is absorbed into the covariance scale, so its fit
/// is the Gaussian fit.
pub fn fit_noisy_rational<P: AsRef<[f64]>>(points: &[P]) -> Result<GaussianModel> {
    fit_gaussian(points)
}

/// Mahalanobis radius whose ball holds Gaussian mass `1 - delta` in `dim`
/// dimensions.
pub fn region_radius(dim: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::range("delta", delta, "must lie in (0, 1)"));
    }
    Ok(chi_square_upper_quantile(dim, delta).sqrt())
}

pub fn gaussian_region_radius(model: &GaussianModel, delta: f64) -> Result<f64> {
    region_radius(model.dim(), delta)
}
