use std::path::Path;

use log::{debug, info};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{gpr_fit, gpr_predict, KernelConfig};
use crate::discovery::{CausalGraph, LaggedVariable};
use crate::timeseries::TimeSeriesDataset;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PredictorMode {
    Causal,
    Full,
}

impl PredictorMode {
    pub fn name(self) -> &'static str {
        match self {
            PredictorMode::Causal => "causal",
            PredictorMode::Full => "full",
        }
    }
}

/// Target variable and the lagged features used to predict it, sorted by
/// `(var, lag)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PredictorSpec {
    pub target: usize,
    pub features: Vec<LaggedVariable>,
    pub mode: PredictorMode,
    /// Set when the target had no parents and its own lag was substituted.
    pub fallback: bool,
}

impl PredictorSpec {
    /// Parents of `target` in `graph` with lag `<= tau_max`; falls back to
    /// the self-lag when there are none.
    pub fn causal(graph: &CausalGraph, target: usize, tau_max: usize) -> Self {
        let mut features: Vec<LaggedVariable> = graph
            .parents(target)
            .into_iter()
            .filter(|p| p.lag <= tau_max)
            .collect();
        let fallback = features.is_empty();
        if fallback {
            features.push(LaggedVariable::new(target, 1));
        }
        features.sort();
        PredictorSpec {
            target,
            features,
            mode: PredictorMode::Causal,
            fallback,
        }
    }

    /// Every variable at every lag `1..=tau_max`.
    pub fn full(n_vars: usize, target: usize, tau_max: usize) -> Self {
        let features = (0..n_vars)
            .flat_map(|v| (1..=tau_max).map(move |l| LaggedVariable::new(v, l)))
            .collect();
        PredictorSpec {
            target,
            features,
            mode: PredictorMode::Full,
            fallback: false,
        }
    }
}

/// Lagged design matrix: row `t - tau_max` holds `var(t - lag)` for every
/// feature and the target `target(t)`, for `t = tau_max..T`.
pub fn build_design(
    dataset: &TimeSeriesDataset,
    spec: &PredictorSpec,
    tau_max: usize,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let t_len = dataset.len();
    if t_len <= tau_max + 1 {
        return Err(Error::InsufficientSamples(format!(
            "{t_len} steps for tau_max {tau_max}"
        )));
    }
    if spec.target >= dataset.n_vars() {
        return Err(Error::InvalidParameter(format!(
            "no variable {}",
            spec.target
        )));
    }
    if spec.features.is_empty() {
        return Err(Error::InvalidParameter("empty feature set".into()));
    }
    if let Some(f) = spec
        .features
        .iter()
        .find(|f| f.var >= dataset.n_vars() || f.lag == 0 || f.lag > tau_max)
    {
        return Err(Error::InvalidParameter(format!(
            "feature {f:?} outside the variable/lag range"
        )));
    }
    let rows = t_len - tau_max;
    let x = DMatrix::from_fn(rows, spec.features.len(), |r, j| {
        let f = spec.features[j];
        dataset.column(f.var)[r + tau_max - f.lag]
    });
    let y = DVector::from_fn(rows, |r, _| dataset.column(spec.target)[r + tau_max]);
    Ok((x, y))
}

/// Mean absolute error over the absolute mean of the actual series.
pub fn nmae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.len() != predicted.len() {
        return Err(Error::LengthMismatch(format!(
            "{} actual vs {} predicted values",
            actual.len(),
            predicted.len()
        )));
    }
    if actual.is_empty() {
        return Err(Error::Empty);
    }
    let n = actual.len() as f64;
    let mean = actual.iter().sum::<f64>() / n;
    if mean == 0.0 {
        return Err(Error::ZeroMean);
    }
    let mae = actual
        .iter()
        .zip(predicted)
        .map(|(a, p)| (a - p).abs())
        .sum::<f64>()
        / n;
    Ok(mae / mean.abs())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableReport {
    pub variable: String,
    pub causal_nmae: f64,
    pub full_nmae: f64,
    /// Causal features as `(variable, lag)`.
    pub causal_features: Vec<(String, usize)>,
    pub full_features: Vec<(String, usize)>,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionReport {
    pub variables: Vec<VariableReport>,
    pub mean_causal_nmae: f64,
    pub mean_full_nmae: f64,
    pub train_rows: usize,
    pub test_rows: usize,
    pub tau_max: usize,
}

/// One-step-ahead predictions at one test time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub t: f64,
    pub variable: String,
    pub actual: f64,
    pub causal: f64,
    pub full: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutput {
    pub report: PredictionReport,
    pub predictions: Vec<PredictionRow>,
}

impl PredictionReport {
    /// `variable,mode,nmae` rows followed by one `mean` row per mode.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["variable", "mode", "nmae"])?;
        for v in &self.variables {
            for (mode, value) in [("causal", v.causal_nmae), ("full", v.full_nmae)] {
                w.write_record([v.variable.as_str(), mode, &value.to_string()])?;
            }
        }
        w.write_record(["mean", "causal", &self.mean_causal_nmae.to_string()])?;
        w.write_record(["mean", "full", &self.mean_full_nmae.to_string()])?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

pub fn write_predictions_csv(rows: &[PredictionRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn column_stats(v: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = v.clone().count() as f64;
    let mean = v.clone().sum::<f64>() / n;
    let sd = (v.map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt();
    (mean, if sd > 0.0 { sd } else { 1.0 })
}

/// Fit on the first `n_train` design rows, predict the rest; returns
/// predictions in original units.
fn fit_predict(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    n_train: usize,
    kernel: &KernelConfig,
) -> Result<Vec<f64>> {
    let mut xs = x.clone();
    for j in 0..x.ncols() {
        let (m, s) = column_stats(x.column(j).rows(0, n_train).iter().copied());
        xs.column_mut(j).apply(|v| *v = (*v - m) / s);
    }
    let (ym, ysd) = column_stats(y.rows(0, n_train).iter().copied());
    let y_train = y.rows(0, n_train).map(|v| (v - ym) / ysd);
    let n_test = x.nrows() - n_train;
    let model = gpr_fit(&xs.rows(0, n_train).into_owned(), &y_train, kernel)?;
    let pred = gpr_predict(&model, &xs.rows(n_train, n_test).into_owned())?;
    Ok(pred.mean.iter().map(|m| m * ysd + ym).collect())
}

fn named(dataset: &TimeSeriesDataset, features: &[LaggedVariable]) -> Vec<(String, usize)> {
    features
        .iter()
        .map(|f| (dataset.names()[f.var].clone(), f.lag))
        .collect()
}

/// Causal-parent vs full-predictor GPR on a chronological split.
pub fn benchmark(
    dataset: &TimeSeriesDataset,
    graph: &CausalGraph,
    tau_max: usize,
    split: f64,
    kernel: &KernelConfig,
) -> Result<BenchmarkOutput> {
    if !(split > 0.0 && split < 1.0) {
        return Err(Error::Config(format!("split {split} must lie in (0, 1)")));
    }
    if tau_max < 1 {
        return Err(Error::Config("tau_max must be >= 1".into()));
    }
    if graph.variables.as_slice() != dataset.names() {
        return Err(Error::Config(format!(
            "graph variables {:?} do not match dataset columns {:?}",
            graph.variables,
            dataset.names()
        )));
    }
    let rows = dataset.len().saturating_sub(tau_max);
    let n_train = (split * rows as f64).floor() as usize;
    let n_test = rows.saturating_sub(n_train);
    if n_train < 2 || n_test < 20 {
        return Err(Error::InsufficientSamples(format!(
            "{rows} design rows give {n_train} train / {n_test} test rows; need >= 2 / 20"
        )));
    }
    let mut variables = Vec::new();
    let mut per_var_preds = Vec::new();
    for target in 0..dataset.n_vars() {
        let name = &dataset.names()[target];
        let causal = PredictorSpec::causal(graph, target, tau_max);
        let full = PredictorSpec::full(dataset.n_vars(), target, tau_max);
        let (xf, y) = build_design(dataset, &full, tau_max)?;
        let full_pred = fit_predict(&xf, &y, n_train, kernel)?;
        let causal_pred = if causal.features == full.features {
            full_pred.clone()
        } else {
            let (xc, _) = build_design(dataset, &causal, tau_max)?;
            fit_predict(&xc, &y, n_train, kernel)?
        };
        let actual: Vec<f64> = y.rows(n_train, n_test).iter().copied().collect();
        let causal_nmae = nmae(&actual, &causal_pred)?;
        let full_nmae = nmae(&actual, &full_pred)?;
        debug!("{name}: causal NMAE {causal_nmae:.5}, full NMAE {full_nmae:.5}");
        variables.push(VariableReport {
            variable: name.clone(),
            causal_nmae,
            full_nmae,
            causal_features: named(dataset, &causal.features),
            full_features: named(dataset, &full.features),
            fallback: causal.fallback,
        });
        per_var_preds.push((actual, causal_pred, full_pred));
    }
    let k = variables.len() as f64;
    let mean_causal_nmae = variables.iter().map(|v| v.causal_nmae).sum::<f64>() / k;
    let mean_full_nmae = variables.iter().map(|v| v.full_nmae).sum::<f64>() / k;
    info!("mean NMAE: causal {mean_causal_nmae:.5}, full {mean_full_nmae:.5}");

    let mut predictions = Vec::with_capacity(n_test * variables.len());
    for i in 0..n_test {
        let t = (tau_max + n_train + i) as f64 * dataset.dt();
        for (v, (actual, causal, full)) in variables.iter().zip(&per_var_preds) {
            predictions.push(PredictionRow {
                t,
                variable: v.variable.clone(),
                actual: actual[i],
                causal: causal[i],
                full: full[i],
            });
        }
    }
    Ok(BenchmarkOutput {
        report: PredictionReport {
            variables,
            mean_causal_nmae,
            mean_full_nmae,
            train_rows: n_train,
            test_rows: n_test,
            tau_max,
        },
        predictions,
    })
}
