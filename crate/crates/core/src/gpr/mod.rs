//! Gaussian-process regression with a squared-exponential kernel, plus
//! the causal-vs-full forecasting benchmark.

mod benchmark;

pub use benchmark::{
    benchmark, build_design, nmae, write_predictions_csv, BenchmarkOutput, PredictionReport,
    PredictionRow, PredictorMode, PredictorSpec, VariableReport,
};

use log::trace;
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MAX_JITTER: f64 = 1e-4;
const LENGTHSCALE_GRID: [f64; 5] = [0.1, 0.3, 1.0, 3.0, 10.0];
const SIGNAL_GRID: [f64; 3] = [0.5, 1.0, 2.0];
const NOISE_GRID: [f64; 3] = [1e-4, 1e-2, 1e-1];

/// Squared-exponential hyperparameters. A single lengthscale is shared by
/// every input dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelParams {
    pub lengthscales: Vec<f64>,
    pub signal_variance: f64,
    pub noise_variance: f64,
}

impl KernelParams {
    pub fn new(lengthscales: Vec<f64>, signal_variance: f64, noise_variance: f64) -> Self {
        KernelParams {
            lengthscales,
            signal_variance,
            noise_variance,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.lengthscales.len() != 1 && self.lengthscales.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: self.lengthscales.len(),
            });
        }
        if self
            .lengthscales
            .iter()
            .any(|l| !(l.is_finite() && *l > 0.0))
        {
            return Err(Error::InvalidParameter(
                "lengthscales must be positive".into(),
            ));
        }
        if !(self.signal_variance.is_finite() && self.signal_variance > 0.0) {
            return Err(Error::InvalidParameter(
                "signal variance must be positive".into(),
            ));
        }
        if !(self.noise_variance.is_finite() && self.noise_variance >= 0.0) {
            return Err(Error::InvalidParameter(
                "noise variance must be >= 0".into(),
            ));
        }
        Ok(())
    }

    fn lengthscale(&self, i: usize) -> f64 {
        if self.lengthscales.len() == 1 {
            self.lengthscales[0]
        } else {
            self.lengthscales[i]
        }
    }

    /// `sigma_f^2 * exp(-0.5 * sum(((a_i - b_i) / l_i)^2))`
    pub fn kernel(&self, a: &[f64], b: &[f64]) -> f64 {
        let r2: f64 = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(i, (x, y))| {
                let d = (x - y) / self.lengthscale(i);
                d * d
            })
            .sum();
        self.signal_variance * (-0.5 * r2).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KernelConfig {
    /// Fixed hyperparameters; `None` fits them by marginal likelihood.
    pub params: Option<KernelParams>,
    /// Diagonal jitter; escalated x10 (up to 1e-4) when factorization fails.
    pub jitter: f64,
    /// Rows used for the hyperparameter search (evenly strided subset).
    pub fit_rows: usize,
    /// Coordinate-descent sweeps refining the best grid point.
    pub refine_steps: usize,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            params: None,
            jitter: 1e-8,
            fit_rows: 256,
            refine_steps: 20,
        }
    }
}

impl KernelConfig {
    pub fn fixed(params: KernelParams) -> Self {
        KernelConfig {
            params: Some(params),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.jitter.is_finite() && (0.0..=MAX_JITTER).contains(&self.jitter)) {
            return Err(Error::Config(format!(
                "jitter must lie in [0, {MAX_JITTER}]"
            )));
        }
        if self.fit_rows < 2 {
            return Err(Error::Config("fit_rows must be >= 2".into()));
        }
        Ok(())
    }
}

/// Fitted GP: training data, hyperparameters and the Cholesky factor of
/// `K + (sigma_n^2 + jitter) I`.
#[derive(Debug, Clone)]
pub struct GprModel {
    inputs: DMatrix<f64>,
    params: KernelParams,
    jitter: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    log_marginal_likelihood: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GprPrediction {
    pub mean: DVector<f64>,
    /// Latent-function variance, without observation noise.
    pub variance: DVector<f64>,
    pub noise_variance: f64,
}

impl GprModel {
    pub fn params(&self) -> &KernelParams {
        &self.params
    }

    /// Jitter actually added to the diagonal.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn n_train(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn log_marginal_likelihood(&self) -> f64 {
        self.log_marginal_likelihood
    }

    /// `(K + sigma_n^2 I)^-1 y` as cached at fit time.
    pub fn weights(&self) -> &DVector<f64> {
        &self.alpha
    }

    /// Lower Cholesky factor.
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }
}

fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    x.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Kernel matrix between the rows of `a` and `b`.
pub fn cross_kernel(params: &KernelParams, a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, rb) = (rows(a), rows(b));
    DMatrix::from_fn(ra.len(), rb.len(), |i, j| params.kernel(&ra[i], &rb[j]))
}

/// `K + (sigma_n^2 + jitter) I` over the rows of `x`.
pub fn regularized_gram(params: &KernelParams, x: &DMatrix<f64>, jitter: f64) -> DMatrix<f64> {
    let r = rows(x);
    let n = r.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..i {
            let v = params.kernel(&r[i], &r[j]);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
        k[(i, i)] = params.signal_variance + params.noise_variance + jitter;
    }
    k
}

/// Factor the regularized Gram matrix, escalating jitter on failure.
fn factor(
    params: &KernelParams,
    x: &DMatrix<f64>,
    jitter: f64,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let mut j = jitter;
    let base = regularized_gram(params, x, 0.0);
    loop {
        let mut k = base.clone();
        for i in 0..k.nrows() {
            k[(i, i)] += j;
        }
        if let Some(chol) = Cholesky::new(k) {
            return Ok((chol, j));
        }
        if j >= MAX_JITTER {
            return Err(Error::NotPositiveDefinite { jitter: j });
        }
        j = if j == 0.0 {
            1e-10
        } else {
            (j * 10.0).min(MAX_JITTER)
        };
        trace!("escalating GP jitter to {j:e}");
    }
}

fn lml_from(chol: &Cholesky<f64, Dyn>, y: &DVector<f64>, alpha: &DVector<f64>) -> f64 {
    let n = y.len() as f64;
    let l = chol.l_dirty();
    let log_det: f64 = (0..y.len()).map(|i| l[(i, i)].ln()).sum();
    -0.5 * y.dot(alpha) - log_det - 0.5 * n * (2.0 * std::f64::consts::PI).ln()
}

/// Log marginal likelihood of `y` under the given hyperparameters.
pub fn log_marginal_likelihood(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    params: &KernelParams,
    jitter: f64,
) -> Result<f64> {
    let (chol, _) = factor(params, x, jitter)?;
    let alpha = chol.solve(y);
    Ok(lml_from(&chol, y, &alpha))
}

fn check_training(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<()> {
    if x.nrows() == 0 || x.ncols() == 0 {
        return Err(Error::InvalidParameter(
            "GP needs at least one training row and one input dimension".into(),
        ));
    }
    if x.nrows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.nrows(),
            got: y.len(),
        });
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GP training data".into()));
    }
    Ok(())
}

/// Evenly strided subset of at most `max_rows` rows.
fn strided_subset(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    max_rows: usize,
) -> (DMatrix<f64>, DVector<f64>) {
    let n = x.nrows();
    if n <= max_rows {
        return (x.clone(), y.clone());
    }
    let idx: Vec<usize> = (0..max_rows).map(|k| k * n / max_rows).collect();
    (x.select_rows(idx.iter()), y.select_rows(idx.iter()))
}

/// Grid search over (shared lengthscale, signal variance, noise variance),
/// then coordinate descent in log space from the best grid point.
fn fit_hyperparameters(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &KernelConfig) -> KernelParams {
    let (xs, ys) = strided_subset(x, y, cfg.fit_rows);
    let score = |p: &KernelParams| {
        log_marginal_likelihood(&xs, &ys, p, cfg.jitter).unwrap_or(f64::NEG_INFINITY)
    };
    let mut best = KernelParams::new(vec![1.0], 1.0, 1e-2);
    let mut best_score = f64::NEG_INFINITY;
    for &l in &LENGTHSCALE_GRID {
        for &sf in &SIGNAL_GRID {
            for &sn in &NOISE_GRID {
                let p = KernelParams::new(vec![l], sf, sn);
                let s = score(&p);
                if s > best_score {
                    best = p;
                    best_score = s;
                }
            }
        }
    }
    // log-coordinates: shared lengthscale, signal, noise
    let mut theta = vec![
        best.lengthscales[0].ln(),
        best.signal_variance.ln(),
        best.noise_variance.ln(),
    ];
    let to_params = |t: &[f64]| {
        KernelParams::new(
            vec![t[0].exp().clamp(1e-3, 1e3)],
            t[1].exp().clamp(1e-4, 1e4),
            t[2].exp().clamp(1e-6, 1e2),
        )
    };
    let mut step = 0.5;
    for _ in 0..cfg.refine_steps {
        let mut improved = false;
        for c in 0..theta.len() {
            for dir in [1.0, -1.0] {
                let mut trial = theta.clone();
                trial[c] += dir * step;
                let s = score(&to_params(&trial));
                if s > best_score + 1e-10 {
                    theta = trial;
                    best_score = s;
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            step *= 0.5;
        }
    }
    let fitted = to_params(&theta);
    trace!("GP hyperparameters {fitted:?}, lml {best_score:.4}");
    fitted
}

/// Fit a GP to `m x d` inputs and `m` targets.
pub fn gpr_fit(x: &DMatrix<f64>, y: &DVector<f64>, cfg: &KernelConfig) -> Result<GprModel> {
    cfg.validate()?;
    check_training(x, y)?;
    let params = match &cfg.params {
        Some(p) => {
            p.validate(x.ncols())?;
            p.clone()
        }
        None => fit_hyperparameters(x, y, cfg),
    };
    let (chol, jitter) = factor(&params, x, cfg.jitter)?;
    let alpha = chol.solve(y);
    let log_marginal_likelihood = lml_from(&chol, y, &alpha);
    Ok(GprModel {
        inputs: x.clone(),
        params,
        jitter,
        chol,
        alpha,
        log_marginal_likelihood,
    })
}

/// Posterior mean `k*^T alpha` and latent variance `sigma_f^2 - |L^-1 k*|^2`.
pub fn gpr_predict(model: &GprModel, xq: &DMatrix<f64>) -> Result<GprPrediction> {
    if xq.ncols() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            got: xq.ncols(),
        });
    }
    if xq.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("GP query inputs".into()));
    }
    // n_train x q
    let k_star = cross_kernel(&model.params, &model.inputs, xq);
    let mean = k_star.tr_mul(&model.alpha);
    let v = model
        .chol
        .l_dirty()
        .solve_lower_triangular(&k_star)
        .expect("Cholesky factor has a nonzero diagonal");
    let sf = model.params.signal_variance;
    let variance = DVector::from_iterator(
        xq.nrows(),
        v.column_iter()
            .map(|c| (sf - c.norm_squared()).clamp(0.0, sf)),
    );
    Ok(GprPrediction {
        mean,
        variance,
        noise_variance: model.params.noise_variance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixed(l: f64, sf: f64, sn: f64, jitter: f64) -> KernelConfig {
        KernelConfig {
            params: Some(KernelParams::new(vec![l], sf, sn)),
            jitter,
            ..Default::default()
        }
    }

    #[test]
    fn single_point_gram() {
        let x = DMatrix::from_element(1, 1, 0.0);
        let y = DVector::from_element(1, 1.0);
        let m = gpr_fit(&x, &y, &fixed(1.0, 1.0, 0.0, 1e-8)).unwrap();
        assert!((m.factor()[(0, 0)].powi(2) - (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn one_point_posterior() {
        let x = DMatrix::from_element(1, 1, 0.0);
        let y = DVector::from_element(1, 1.0);
        let m = gpr_fit(&x, &y, &fixed(1.0, 1.0, 0.0, 0.0)).unwrap();
        let p = gpr_predict(&m, &DMatrix::from_element(1, 1, 1.0)).unwrap();
        assert!((p.mean[0] - (-0.5f64).exp()).abs() < 1e-12);
        assert!((p.variance[0] - (1.0 - (-1.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn duplicate_inputs_rescued_by_jitter() {
        let x = DMatrix::from_element(2, 1, 0.5);
        let y = DVector::from_vec(vec![1.0, 3.0]);
        let m = gpr_fit(&x, &y, &fixed(1.0, 1.0, 0.0, 0.0)).unwrap();
        assert!(m.jitter() > 0.0);
        let p = gpr_predict(&m, &DMatrix::from_element(1, 1, 0.5)).unwrap();
        assert!((p.mean[0] - 2.0).abs() < 1e-3);
    }

    #[test]
    fn far_query_reverts_to_prior() {
        let x = DMatrix::from_vec(3, 1, vec![0.0, 0.5, 1.0]);
        let y = DVector::from_vec(vec![1.0, -1.0, 2.0]);
        let m = gpr_fit(&x, &y, &fixed(0.5, 2.0, 1e-2, 1e-8)).unwrap();
        let p = gpr_predict(&m, &DMatrix::from_element(1, 1, 20.0)).unwrap();
        assert!(p.mean[0].abs() < 1e-4);
        assert!((p.variance[0] - 2.0).abs() < 1e-4);
        assert_eq!(p.noise_variance, 1e-2);
    }

    #[test]
    fn dimension_checks() {
        let x = DMatrix::from_element(3, 2, 0.0);
        assert!(gpr_fit(&x, &DVector::zeros(2), &KernelConfig::default()).is_err());
        let m = gpr_fit(
            &DMatrix::from_vec(2, 1, vec![0.0, 1.0]),
            &DVector::from_vec(vec![0.0, 1.0]),
            &fixed(1.0, 1.0, 0.1, 1e-8),
        )
        .unwrap();
        assert!(matches!(
            gpr_predict(&m, &x),
            Err(Error::DimensionMismatch {
                expected: 1,
                got: 2
            })
        ));
        let mut bad = DMatrix::from_element(2, 1, 0.0);
        bad[(1, 0)] = f64::NAN;
        assert!(matches!(
            gpr_fit(&bad, &DVector::zeros(2), &KernelConfig::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn fitted_hyperparameters_track_smooth_signal() {
        let n = 80;
        let x = DMatrix::from_fn(n, 1, |i, _| i as f64 / 10.0);
        let y = DVector::from_fn(n, |i, _| (i as f64 / 10.0).sin());
        let m = gpr_fit(&x, &y, &KernelConfig::default()).unwrap();
        assert!(m.params().noise_variance < 1e-2);
        let q = DMatrix::from_vec(1, 1, vec![3.05]);
        let p = gpr_predict(&m, &q).unwrap();
        assert!((p.mean[0] - 3.05f64.sin()).abs() < 1e-2);
    }
}
