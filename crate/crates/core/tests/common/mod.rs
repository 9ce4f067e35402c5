#![allow(dead_code)]

use std::fmt::Write as _;
use std::path::Path;

use hsi_causal::gpr::KernelParams;
use hsi_causal::timeseries::TrackSet;
use nalgebra::{DMatrix, DVector};
use statrs::function::beta::beta_reg;

/// ATC layout: `time [s], id, x [mm], y [mm], z [mm], velocity, motion angle,
/// facing angle`, no header.
pub fn write_atc(tracks: &TrackSet, path: &Path) {
    let mut out = String::new();
    for row in rows(tracks) {
        let (t, id, x, y) = row;
        let _ = writeln!(
            out,
            "{t:.3},{id},{:.1},{:.1},1700.0,1000.0,0.1,0.1",
            x * 1e3,
            y * 1e3
        );
    }
    std::fs::write(path, out).unwrap();
}

/// THÖR flattened export with a header and millimetre positions.
pub fn write_thor(tracks: &TrackSet, path: &Path) {
    let mut out = String::from("frame,time,agent,x,y,z\n");
    for (k, (t, id, x, y)) in rows(tracks).into_iter().enumerate() {
        let _ = writeln!(out, "{k},{t:.3},{id},{:.1},{:.1},1500.0", x * 1e3, y * 1e3);
    }
    std::fs::write(path, out).unwrap();
}

/// Numeric agent ids (`agent` -> 1, `obstacle_i` -> 1 + i) in time order.
fn rows(tracks: &TrackSet) -> Vec<(f64, usize, f64, f64)> {
    let mut rows = Vec::new();
    for (i, tr) in tracks.tracks.iter().enumerate() {
        for s in &tr.samples {
            rows.push((s.t, 1 + i, s.x, s.y));
        }
    }
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    rows
}

/// Deterministic standard-normal stream.
pub fn normals(n: usize, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    use rand_distr::{Distribution, StandardNormal};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

pub fn uniforms(n: usize, seed: u64) -> Vec<f64> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

pub fn se(a: &[f64], b: &[f64], l: &[f64], sf2: f64) -> f64 {
    let q: f64 = a
        .iter()
        .zip(b)
        .zip(l)
        .map(|((x, y), l)| ((x - y) / l).powi(2))
        .sum();
    sf2 * (-0.5 * q).exp()
}

/// Posterior by explicit inverse of the dense (LU-factored) Gram matrix.
pub fn dense_posterior(
    x: &[[f64; 2]],
    y: &[f64],
    xq: &[[f64; 2]],
    p: &KernelParams,
    jitter: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let n = x.len();
    let l = &p.lengthscales;
    let k = DMatrix::from_fn(n, n, |i, j| {
        se(&x[i], &x[j], l, p.signal_variance)
            + if i == j {
                p.noise_variance + jitter
            } else {
                0.0
            }
    });
    let lu = k.clone().lu();
    let kinv = lu.try_inverse().unwrap();
    let yv = DVector::from_column_slice(y);
    let alpha = &kinv * &yv;
    let mut mean = Vec::new();
    let mut var = Vec::new();
    for q in xq {
        let ks = DVector::from_fn(n, |i, _| se(&x[i], q, l, p.signal_variance));
        mean.push(ks.dot(&alpha));
        var.push(p.signal_variance - (ks.transpose() * &kinv * &ks)[0]);
    }
    let det = k.lu().determinant();
    let lml =
        -0.5 * yv.dot(&alpha) - 0.5 * det.ln() - 0.5 * n as f64 * (2.0 * std::f64::consts::PI).ln();
    (mean, var, lml)
}

pub fn to_matrix(rows: &[[f64; 2]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), 2, |i, j| rows[i][j])
}

/// Simple-regression residuals of `y` on `[1, z]`, closed form.
pub fn residuals(y: &[f64], z: &[f64]) -> Vec<f64> {
    let n = y.len() as f64;
    let (mz, my) = (z.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let sxy: f64 = z.iter().zip(y).map(|(a, b)| (a - mz) * (b - my)).sum();
    let sxx: f64 = z.iter().map(|a| (a - mz) * (a - mz)).sum();
    let slope = sxy / sxx;
    y.iter()
        .zip(z)
        .map(|(b, a)| b - my - slope * (a - mz))
        .collect()
}

pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Two-sided Student-t p-value through the regularized incomplete beta.
pub fn t_p_value(r: f64, dof: f64) -> f64 {
    let t2 = r * r * dof / (1.0 - r * r);
    beta_reg(dof / 2.0, 0.5, dof / (dof + t2))
}

/// Point-to-ray distance for the symmetric cone about +x with half-angle
/// `alpha`, from elementary planar geometry.
pub fn ray_distances(p: [f64; 2], alpha: f64) -> f64 {
    let (s, c) = alpha.sin_cos();
    let to_ray = |sign: f64| {
        let along = p[0] * c + sign * p[1] * s;
        if along <= 0.0 {
            p[0].hypot(p[1])
        } else {
            (p[0] * sign * s - p[1] * c).abs()
        }
    };
    to_ray(1.0).min(to_ray(-1.0))
}
