//! Conditional-independence tests: partial correlation with a Student-t
//! null, and GP residuals scored by distance correlation with a permutation
//! null.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::gpr::{gpr_fit, gpr_predict, KernelConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    /// Number of samples entering the test.
    pub n: usize,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn check_inputs(x: &[f64], y: &[f64], z: &[&[f64]]) -> Result<usize> {
    let n = x.len();
    if y.len() != n || z.iter().any(|c| c.len() != n) {
        return Err(Error::LengthMismatch(
            "test series must have equal lengths".into(),
        ));
    }
    if n <= z.len() + 3 {
        return Err(Error::InsufficientSamples(format!(
            "{n} samples with {} conditioning series",
            z.len()
        )));
    }
    for (name, s) in [("x", x), ("y", y)] {
        if s.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name.into()));
        }
        if mean_std(s).1 == 0.0 {
            return Err(Error::Degenerate(format!("{name} is constant")));
        }
    }
    Ok(n)
}

fn standardized(v: &[f64]) -> DVector<f64> {
    let (m, s) = mean_std(v);
    let s = if s > 0.0 { s } else { 1.0 };
    DVector::from_iterator(v.len(), v.iter().map(|x| (x - m) / s))
}

fn pearson(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Residuals of `x` and `y` after least-squares projection on `[1, z...]`.
fn ols_residuals(
    x: &DVector<f64>,
    y: &DVector<f64>,
    z: &[&[f64]],
) -> Result<(DVector<f64>, DVector<f64>)> {
    let n = x.len();
    let mut design = DMatrix::from_element(n, z.len() + 1, 1.0);
    for (j, col) in z.iter().enumerate() {
        design.set_column(j + 1, &standardized(col));
    }
    let qr = design.qr();
    let r = qr.r();
    let tol = 1e-8 * (n as f64).sqrt();
    if (0..r.ncols()).any(|i| r[(i, i)].abs() < tol) {
        return Err(Error::Degenerate("conditioning set is collinear".into()));
    }
    let q = qr.q();
    let rx = x - &q * (q.transpose() * x);
    let ry = y - &q * (q.transpose() * y);
    Ok((rx, ry))
}

fn students_t_p_value(r: f64, dof: f64) -> f64 {
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let t = r * (dof / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, dof).expect("dof > 0");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Partial correlation of `x` and `y` given `z`, two-sided Student-t p-value
/// with `n - |z| - 2` degrees of freedom.
pub fn parcorr_test(x: &[f64], y: &[f64], z: &[&[f64]]) -> Result<CiTestResult> {
    let n = check_inputs(x, y, z)?;
    let (xs, ys) = (standardized(x), standardized(y));
    let (rx, ry) = ols_residuals(&xs, &ys, z)?;
    // residuals vanishing relative to the input mean the series lies in span(z)
    let floor = 1e-10 * (n as f64).sqrt();
    let statistic = if rx.norm() < floor || ry.norm() < floor {
        0.0
    } else {
        pearson(&rx, &ry)
    };
    let dof = (n - z.len() - 2) as f64;
    Ok(CiTestResult {
        statistic,
        p_value: students_t_p_value(statistic, dof),
        n,
    })
}

/// Double-centered pairwise distance matrix of a univariate sample.
#[derive(Debug, Clone)]
pub struct CenteredDistances {
    n: usize,
    values: Vec<f64>,
}

impl CenteredDistances {
    pub fn new(a: &[f64]) -> Self {
        let n = a.len();
        let mut values = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] = (a[i] - a[j]).abs();
            }
        }
        let row_means: Vec<f64> = (0..n)
            .map(|i| values[i * n..(i + 1) * n].iter().sum::<f64>() / n as f64)
            .collect();
        let grand = row_means.iter().sum::<f64>() / n as f64;
        for i in 0..n {
            for j in 0..n {
                values[i * n + j] += grand - row_means[i] - row_means[j];
            }
        }
        CenteredDistances { n, values }
    }

    fn at(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n + j]
    }

    /// Squared distance covariance (V-statistic) against `other`, with the
    /// rows and columns of `other` relabelled by `perm`.
    fn dcov2(&self, other: &CenteredDistances, perm: Option<&[usize]>) -> f64 {
        let n = self.n;
        let mut acc = 0.0;
        for i in 0..n {
            let pi = perm.map_or(i, |p| p[i]);
            let row = &self.values[i * n..(i + 1) * n];
            // symmetric: strict upper triangle twice plus the diagonal
            let mut off = 0.0;
            for j in (i + 1)..n {
                let pj = perm.map_or(j, |p| p[j]);
                off += row[j] * other.at(pi, pj);
            }
            acc += 2.0 * off + row[i] * other.at(pi, pi);
        }
        acc / (n * n) as f64
    }
}

fn dcor_from(a: &CenteredDistances, b: &CenteredDistances, perm: Option<&[usize]>) -> f64 {
    let denom = (a.dcov2(a, None) * b.dcov2(b, None)).sqrt();
    if denom <= 0.0 {
        return 0.0;
    }
    (a.dcov2(b, perm).max(0.0) / denom).sqrt().clamp(0.0, 1.0)
}

/// Sample distance correlation in `[0, 1]`.
pub fn distance_correlation(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(
            "series must have equal lengths".into(),
        ));
    }
    if a.len() < 4 {
        return Err(Error::InsufficientSamples(format!(
            "distance correlation needs n >= 4, got {}",
            a.len()
        )));
    }
    Ok(dcor_from(
        &CenteredDistances::new(a),
        &CenteredDistances::new(b),
        None,
    ))
}

/// Residual of a standardized target after GP regression on `z`; the
/// centered series when `z` is empty.
fn gp_residuals(target: &[f64], z: &[&[f64]]) -> Result<Vec<f64>> {
    let y = standardized(target);
    if z.is_empty() {
        return Ok(y.iter().copied().collect());
    }
    let n = target.len();
    let mut inputs = DMatrix::zeros(n, z.len());
    for (j, col) in z.iter().enumerate() {
        inputs.set_column(j, &standardized(col));
    }
    let model = gpr_fit(&inputs, &y, &KernelConfig::default())?;
    let pred = gpr_predict(&model, &inputs)?;
    Ok(y.iter().zip(&pred.mean).map(|(a, m)| a - m).collect())
}

/// GP regression of `x` and `y` on `z`, distance correlation of the
/// residuals, permutation p-value `(1 + #{perm >= obs}) / (1 + permutations)`.
pub fn gpdc_test(
    x: &[f64],
    y: &[f64],
    z: &[&[f64]],
    permutations: usize,
    seed: u64,
) -> Result<CiTestResult> {
    let n = check_inputs(x, y, z)?;
    if n < 4 {
        return Err(Error::InsufficientSamples("GPDC needs n >= 4".into()));
    }
    let rx = gp_residuals(x, z)?;
    let ry = gp_residuals(y, z)?;
    let (a, b) = (CenteredDistances::new(&rx), CenteredDistances::new(&ry));
    let observed = dcor_from(&a, &b, None);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    let mut exceed = 0usize;
    for _ in 0..permutations {
        perm.shuffle(&mut rng);
        if dcor_from(&a, &b, Some(&perm)) >= observed {
            exceed += 1;
        }
    }
    Ok(CiTestResult {
        statistic: observed,
        p_value: (1 + exceed) as f64 / (1 + permutations) as f64,
        n,
    })
}
