//! Gaussian mixtures fitted by EM, and Monte-Carlo highest-density regions.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gaussian::{fit_gaussian, GaussianModel};
use crate::error::{Error, Result};
use crate::rng::RngSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Stop once the mean per-point log-likelihood gains less than this.
    pub tol: f64,
    pub restarts: usize,
    /// Smallest eigenvalue allowed in a component covariance.
    pub cov_floor: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-8,
            restarts: 10,
            cov_floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmComponent {
    pub weight: f64,
    pub gaussian: GaussianModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmDiagnostics {
    pub iterations: usize,
    /// Total log-likelihood of the training data.
    pub log_likelihood: f64,
    /// Restart that produced the model.
    pub restart: usize,
    /// Restarts that ended in a collapsed component.
    pub failed_restarts: usize,
    /// Whether the covariance floor had to be applied.
    pub floored: bool,
    /// Total log-likelihood after every iteration.
    pub trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmModel {
    pub components: Vec<GmmComponent>,
    pub diagnostics: EmDiagnostics,
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn dim(&self) -> usize {
        self.components[0].gaussian.dim()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut buf = [0.0f64; 16];
        let mut heap;
        let terms: &mut [f64] = if self.k() <= 16 {
            &mut buf[..self.k()]
        } else {
            heap = vec![0.0; self.k()];
            &mut heap
        };
        for (t, c) in terms.iter_mut().zip(&self.components) {
            *t = c.weight.ln() + c.gaussian.log_pdf(x);
        }
        log_sum_exp(terms)
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn sample_into<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.k() - 1;
        for (i, c) in self.components.iter().enumerate() {
            acc += c.weight;
            if u < acc {
                pick = i;
                break;
            }
        }
        self.components[pick].gaussian.sample_into(rng, out);
    }
}

/// Raises covariance eigenvalues below `floor` to `floor`. Returns whether
/// anything changed; an untouched matrix is returned bit-for-bit.
fn floor_covariance(d: usize, cov: &mut [f64], floor: f64) -> bool {
    let m = DMatrix::from_row_slice(d, d, cov);
    let eig = SymmetricEigen::new(m);
    if eig.eigenvalues.iter().all(|&l| l >= floor) {
        return false;
    }
    let clamped = eig.eigenvalues.map(|l| l.max(floor));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] = 0.5 * (rebuilt[(i, j)] + rebuilt[(j, i)]);
        }
    }
    true
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeds: the first uniformly, the rest proportional to squared
/// distance from the nearest seed so far.
fn kmeanspp_seeds<P: AsRef<[f64]>>(points: &[P], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let mut seeds = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| sq_dist(p.as_ref(), points[seeds[0]].as_ref()))
        .collect();
    while seeds.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = n - 1;
            for (i, w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    pick = i;
                    break;
                }
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        seeds.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(p.as_ref(), points[next].as_ref()));
        }
    }
    seeds
}

struct Params {
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    covs: Vec<Vec<f64>>,
}

fn initial_params<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    global: &GaussianModel,
    cfg: &EmConfig,
    rng: &mut ChaCha8Rng,
) -> Params {
    let d = global.dim();
    let seeds = kmeanspp_seeds(points, k, rng);
    let mut groups: Vec<Vec<&[f64]>> = vec![Vec::new(); k];
    for p in points {
        let p = p.as_ref();
        let j = (0..k)
            .min_by(|&a, &b| {
                sq_dist(p, points[seeds[a]].as_ref()).total_cmp(&sq_dist(p, points[seeds[b]].as_ref()))
            })
            .unwrap();
        groups[j].push(p);
    }
    let n = points.len() as f64;
    let mut params = Params {
        weights: Vec::with_capacity(k),
        means: Vec::with_capacity(k),
        covs: Vec::with_capacity(k),
    };
    for (j, g) in groups.iter().enumerate() {
        params.means.push(points[seeds[j]].as_ref().to_vec());
        params.weights.push((g.len().max(1)) as f64 / n);
        let mut cov = match fit_gaussian(g) {
            Ok(fit) => fit.cov().to_vec(),
            Err(_) => global.cov().to_vec(),
        };
        floor_covariance(d, &mut cov, cfg.cov_floor);
        params.covs.push(cov);
    }
    let s: f64 = params.weights.iter().sum();
    params.weights.iter_mut().for_each(|w| *w /= s);
    params
}

fn build(params: &Params) -> Result<Vec<GmmComponent>> {
    params
        .weights
        .iter()
        .zip(&params.means)
        .zip(&params.covs)
        .map(|((&w, m), c)| {
            Ok(GmmComponent {
                weight: w,
                gaussian: GaussianModel::new(m.clone(), c.clone())
                    .map_err(|e| Error::Degenerate(format!("component covariance: {e}")))?,
            })
        })
        .collect()
}

fn run_em<P: AsRef<[f64]>>(
    points: &[P],
    k: usize,
    cfg: &EmConfig,
    global: &GaussianModel,
    restart: usize,
    rng: RngSpec,
) -> Result<GmmModel> {
    let n = points.len();
    let d = global.dim();
    let mut rng = rng.rng();
    let mut params = initial_params(points, k, global, cfg, &mut rng);
    let mut comps = build(&params)?;
    let mut resp = vec![0.0; n * k];
    let mut trace = Vec::new();
    let mut floored = false;
    let mut prev_ll = f64::NEG_INFINITY;
    let mut iterations = 0;
    loop {
        // E step
        let mut ll = 0.0;
        let mut row = vec![0.0; k];
        for (i, p) in points.iter().enumerate() {
            for (j, c) in comps.iter().enumerate() {
                row[j] = c.weight.ln() + c.gaussian.log_pdf(p.as_ref());
            }
            let lse = log_sum_exp(&row);
            ll += lse;
            for j in 0..k {
                resp[i * k + j] = (row[j] - lse).exp();
            }
        }
        trace.push(ll);
        debug_assert!(
            floored || ll >= prev_ll - 1e-9 * prev_ll.abs().max(1.0),
            "EM log-likelihood decreased: {prev_ll} -> {ll}"
        );
        let converged = iterations > 0 && (ll - prev_ll) / (n as f64) < cfg.tol;
        if converged || iterations >= cfg.max_iter {
            return Ok(GmmModel {
                components: comps,
                diagnostics: EmDiagnostics {
                    iterations,
                    log_likelihood: ll,
                    restart,
                    failed_restarts: 0,
                    floored,
                    trace,
                },
            });
        }
        prev_ll = ll;
        iterations += 1;

        // M step
        for j in 0..k {
            let nk: f64 = (0..n).map(|i| resp[i * k + j]).sum();
            if !(nk > 1e-10 * n as f64) {
                return Err(Error::Degenerate(format!("component {j} collapsed")));
            }
            let mut mean = vec![0.0; d];
            for (i, p) in points.iter().enumerate() {
                let r = resp[i * k + j];
                for (m, x) in mean.iter_mut().zip(p.as_ref()) {
                    *m += r * x;
                }
            }
            mean.iter_mut().for_each(|m| *m /= nk);
            let mut cov = vec![0.0; d * d];
            for (i, p) in points.iter().enumerate() {
                let r = resp[i * k + j];
                let p = p.as_ref();
                for a in 0..d {
                    let da = p[a] - mean[a];
                    for b in 0..=a {
                        cov[a * d + b] += r * da * (p[b] - mean[b]);
                    }
                }
            }
            for a in 0..d {
                for b in 0..=a {
                    cov[a * d + b] /= nk;
                    cov[b * d + a] = cov[a * d + b];
                }
            }
            floored |= floor_covariance(d, &mut cov, cfg.cov_floor);
            params.weights[j] = nk;
            params.means[j] = mean;
            params.covs[j] = cov;
        }
        let s: f64 = params.weights.iter().sum();
        params.weights.iter_mut().for_each(|w| *w /= s);
        comps = build(&params)?;
    }
}

/// Fits a `k`-component mixture: EM from k-means++ seeding, best of
/// `cfg.restarts` runs by log-likelihood (ties go to the lower restart).
pub fn fit_gmm<P: AsRef<[f64]> + Sync>(
    points: &[P],
    k: usize,
    cfg: &EmConfig,
    rng: RngSpec,
) -> Result<GmmModel> {
    if k == 0 {
        return Err(Error::range("k", 0.0, "need at least one component"));
    }
    let d = points.first().map(|p| p.as_ref().len()).unwrap_or(0);
    let needed = k * (d.max(1) + 1);
    if points.len() < needed {
        return Err(Error::TooFew {
            what: "points for the mixture",
            needed,
            got: points.len(),
        });
    }
    let global = fit_gaussian(points)?;
    let restarts = cfg.restarts.max(1);
    let runs: Vec<Result<GmmModel>> = (0..restarts)
        .into_par_iter()
        .map(|r| run_em(points, k, cfg, &global, r, rng.child(r as u64)))
        .collect();
    let failed = runs.iter().filter(|r| r.is_err()).count();
    let mut best: Option<GmmModel> = None;
    let mut last_err = None;
    for run in runs {
        match run {
            Ok(m) => {
                let better = best
                    .as_ref()
                    .is_none_or(|b| m.diagnostics.log_likelihood > b.diagnostics.log_likelihood);
                if better {
                    best = Some(m);
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    match best {
        Some(mut m) => {
            m.diagnostics.failed_restarts = failed;
            Ok(m)
        }
        None => Err(last_err.unwrap_or_else(|| Error::Degenerate("no EM restart succeeded".into()))),
    }
}

/// Log-density thresholds `ln t_δ` for each δ: the δ-quantile of the model's
/// own log-density over `mc_samples` draws, so `{x : p(x) >= t_δ}` holds
/// model mass `1 - δ` up to Monte-Carlo error.
pub fn gmm_log_density_thresholds(
    model: &GmmModel,
    deltas: &[f64],
    mc_samples: usize,
    rng: RngSpec,
) -> Result<Vec<f64>> {
    for &delta in deltas {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::range("delta", delta, "must lie in (0, 1)"));
        }
        let product = delta * mc_samples as f64;
        if product < 10.0 {
            return Err(Error::Resolution { product });
        }
    }
    let d = model.dim();
    let mut logs = rng.par_blocks(mc_samples, |r, _| {
        let mut x = [0.0f64; 8];
        let mut heap;
        let buf: &mut [f64] = if d <= 8 {
            &mut x[..d]
        } else {
            heap = vec![0.0; d];
            &mut heap
        };
        model.sample_into(r, buf);
        model.log_density(buf)
    });
    logs.par_sort_unstable_by(f64::total_cmp);
    Ok(deltas
        .iter()
        .map(|&delta| logs[(delta * mc_samples as f64).floor() as usize])
        .collect())
}

/// Density threshold `t_δ` for a single δ.
pub fn gmm_density_threshold(
    model: &GmmModel,
    delta: f64,
    mc_samples: usize,
    rng: RngSpec,
) -> Result<f64> {
    Ok(gmm_log_density_thresholds(model, &[delta], mc_samples, rng)?[0].exp())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn two_blobs(n: usize) -> Vec<[f64; 2]> {
        let mut rng = RngSpec::new(42, 0).rng();
        (0..n)
            .map(|i| {
                let cx = if i % 2 == 0 { -5.0 } else { 5.0 };
                let x: f64 = StandardNormal.sample(&mut rng);
                let y: f64 = StandardNormal.sample(&mut rng);
                [cx + x, y]
            })
            .collect()
    }

    #[test]
    fn single_component_is_the_gaussian_fit() {
        let pts = two_blobs(500);
        let g = fit_gaussian(&pts).unwrap();
        let m = fit_gmm(&pts, 1, &EmConfig::default(), RngSpec::new(1, 0)).unwrap();
        for (a, b) in m.components[0].gaussian.mean().iter().zip(g.mean()) {
            assert!((a - b).abs() < 1e-10);
        }
        for (a, b) in m.components[0].gaussian.cov().iter().zip(g.cov()) {
            assert!((a - b).abs() < 1e-10);
        }
        assert_eq!(m.components[0].weight, 1.0);
    }

    #[test]
    fn recovers_separated_blobs() {
        let pts = two_blobs(10_000);
        let m = fit_gmm(&pts, 2, &EmConfig::default(), RngSpec::new(1, 0)).unwrap();
        let mut xs: Vec<(f64, f64)> = m
            .components
            .iter()
            .map(|c| (c.gaussian.mean()[0], c.weight))
            .collect();
        xs.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert!((xs[0].0 + 5.0).abs() < 0.1 && (xs[1].0 - 5.0).abs() < 0.1, "{xs:?}");
        assert!((xs[0].1 - 0.5).abs() < 0.05 && (xs[1].1 - 0.5).abs() < 0.05);
        let wsum: f64 = m.components.iter().map(|c| c.weight).sum();
        assert!((wsum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn log_likelihood_never_decreases() {
        let pts = two_blobs(2_000);
        for k in 2..=4 {
            let m = fit_gmm(&pts, k, &EmConfig::default(), RngSpec::new(9, 0)).unwrap();
            for w in m.diagnostics.trace.windows(2) {
                assert!(w[1] >= w[0] - 1e-9 * w[0].abs(), "k={k}: {} -> {}", w[0], w[1]);
            }
        }
    }

    #[test]
    fn too_few_points() {
        let pts = two_blobs(20);
        assert!(matches!(
            fit_gmm(&pts, 50, &EmConfig::default(), RngSpec::new(1, 0)),
            Err(Error::TooFew { .. })
        ));
    }

    #[test]
    fn deterministic_under_thread_count() {
        let pts = two_blobs(3_000);
        let a = fit_gmm(&pts, 3, &EmConfig::default(), RngSpec::new(5, 2)).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| fit_gmm(&pts, 3, &EmConfig::default(), RngSpec::new(5, 2)).unwrap());
        assert_eq!(a, b);
    }

    fn standard_mixture() -> GmmModel {
        GmmModel {
            components: vec![GmmComponent {
                weight: 1.0,
                gaussian: GaussianModel::standard(2),
            }],
            diagnostics: EmDiagnostics {
                iterations: 0,
                log_likelihood: 0.0,
                restart: 0,
                failed_restarts: 0,
                floored: false,
                trace: vec![],
            },
        }
    }

    /// Order-statistic band around the δ-quantile: indices δm ± 4√(mδ(1-δ)).
    fn quantile_band(model: &GmmModel, delta: f64, m: usize, rng: RngSpec) -> (f64, f64) {
        let mut r = rng.rng();
        let mut v: Vec<f64> = (0..m)
            .map(|_| {
                let mut x = [0.0; 2];
                model.sample_into(&mut r, &mut x);
                model.density(&x)
            })
            .collect();
        v.sort_by(f64::total_cmp);
        let c = delta * m as f64;
        let s = 4.0 * (m as f64 * delta * (1.0 - delta)).sqrt();
        (v[(c - s).max(0.0) as usize], v[((c + s) as usize).min(m - 1)])
    }

    #[test]
    fn median_density_threshold_matches_closed_form() {
        let model = standard_mixture();
        let t = gmm_density_threshold(&model, 0.5, 1_000_000, RngSpec::new(2, 0)).unwrap();
        // r^2 = 2 ln 2 for the median ball; density there is exp(-ln 2) / 2π.
        let exact = 1.0 / (4.0 * std::f64::consts::PI);
        // 2π·p(X) = exp(-χ²₂/2) is uniform on (0, 1), so the δ-quantile of the
        // density has a binomial order-statistic band of ±4√(δ(1-δ)/m).
        let s = 4.0 * (0.25f64 / 1_000_000.0).sqrt();
        let lo = (0.5 - s) / (2.0 * std::f64::consts::PI);
        let hi = (0.5 + s) / (2.0 * std::f64::consts::PI);
        assert!(lo <= exact && exact <= hi);
        assert!(t >= lo && t <= hi, "{t} not in [{lo}, {hi}]");
    }

    #[test]
    fn threshold_agrees_across_sample_sizes() {
        let model = standard_mixture();
        let small = gmm_density_threshold(&model, 0.5, 10_000, RngSpec::new(4, 0)).unwrap();
        let large = gmm_density_threshold(&model, 0.5, 1_000_000, RngSpec::new(4, 1)).unwrap();
        let (lo_s, hi_s) = quantile_band(&model, 0.5, 10_000, RngSpec::new(4, 0));
        let (lo_l, hi_l) = quantile_band(&model, 0.5, 1_000_000, RngSpec::new(4, 1));
        let half = 0.5 * ((hi_s - lo_s) + (hi_l - lo_l));
        assert!((small - large).abs() <= half, "{small} vs {large} (±{half})");
    }

    #[test]
    fn resolution_guard() {
        let model = standard_mixture();
        assert!(matches!(
            gmm_density_threshold(&model, 1e-6, 100_000, RngSpec::new(1, 0)),
            Err(Error::Resolution { .. })
        ));
    }
}
