//! Scenario variables of the human-goal setting (goal bearing `theta_g`,
//! goal distance `d_g`, speed `v`) and entropy-driven row subsampling.

use serde::{Deserialize, Serialize};

use crate::timeseries::{TimeSeriesDataset, Track};
use crate::{wrap_angle, Error, Result};

fn default_hysteresis() -> usize {
    10
}

/// Goals visited in list order, cyclically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoalSet {
    pub goals: Vec<[f64; 2]>,
    pub arrival_radius: f64,
    /// Steps after a switch during which the new goal cannot register an
    /// arrival.
    #[serde(default = "default_hysteresis")]
    pub hysteresis_steps: usize,
}

impl GoalSet {
    pub fn new(goals: Vec<[f64; 2]>, arrival_radius: f64) -> Self {
        GoalSet {
            goals,
            arrival_radius,
            hysteresis_steps: default_hysteresis(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.goals.is_empty() {
            return Err(Error::InvalidParameter("goal set is empty".into()));
        }
        if !(self.arrival_radius > 0.0) {
            return Err(Error::InvalidParameter("arrival_radius must be > 0".into()));
        }
        if self.goals.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::InvalidParameter(
                "goal coordinates must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn distance(&self, goal: usize, x: f64, y: f64) -> f64 {
        let [gx, gy] = self.goals[goal];
        (gx - x).hypot(gy - y)
    }
}

/// Arrival bookkeeping shared by [`assign_goals`] and the simulators, so
/// switch times agree step for step.
#[derive(Debug, Clone)]
pub struct GoalTracker {
    n_goals: usize,
    radius: f64,
    hysteresis: usize,
    active: usize,
    last_switch: Option<usize>,
}

impl GoalTracker {
    pub fn new(goals: &GoalSet) -> Self {
        GoalTracker {
            n_goals: goals.goals.len(),
            radius: goals.arrival_radius,
            hysteresis: goals.hysteresis_steps,
            active: 0,
            last_switch: None,
        }
    }

    pub fn active(&self) -> usize {
        self.active
    }

    /// Observe the distance to the active goal at `step`; returns `true` if
    /// the goal advances, taking effect at `step + 1`.
    pub fn observe(&mut self, step: usize, distance: f64) -> bool {
        let eligible = self.last_switch.is_none_or(|s| step >= s + self.hysteresis);
        if eligible && distance < self.radius {
            self.active = (self.active + 1) % self.n_goals;
            self.last_switch = Some(step + 1);
            true
        } else {
            false
        }
    }
}

/// Active goal index per time step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoalAssignment {
    pub active: Vec<usize>,
}

impl GoalAssignment {
    /// Steps at which the active goal differs from the previous step.
    pub fn switch_steps(&self) -> Vec<usize> {
        (1..self.active.len())
            .filter(|&t| self.active[t] != self.active[t - 1])
            .collect()
    }
}

pub fn assign_goals(track: &Track, goals: &GoalSet) -> Result<GoalAssignment> {
    goals.validate()?;
    let mut tracker = GoalTracker::new(goals);
    let mut active = Vec::with_capacity(track.len());
    for (t, s) in track.samples.iter().enumerate() {
        active.push(tracker.active());
        tracker.observe(t, goals.distance(tracker.active(), s.x, s.y));
    }
    Ok(GoalAssignment { active })
}

/// Per-step scenario variables of the human-goal setting.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioSeries {
    /// Signed bearing of the active goal relative to the heading, `(-pi, pi]`.
    pub theta_g: Vec<f64>,
    /// Euclidean distance to the active goal.
    pub d_g: Vec<f64>,
    pub v: Vec<f64>,
}

impl ScenarioSeries {
    pub fn len(&self) -> usize {
        self.d_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_g.is_empty()
    }
}

/// Bearing of `(gx, gy)` seen from `(x, y)`, relative to `heading`.
pub fn goal_bearing(x: f64, y: f64, heading: f64, gx: f64, gy: f64) -> f64 {
    wrap_angle((gy - y).atan2(gx - x) - heading)
}

pub fn goal_features(
    track: &Track,
    assignment: &GoalAssignment,
    goals: &GoalSet,
) -> Result<ScenarioSeries> {
    let kin = track.kinematics.as_ref().ok_or(Error::NotDifferentiated)?;
    if assignment.active.len() != track.len() {
        return Err(Error::LengthMismatch(format!(
            "assignment covers {} steps, track has {}",
            assignment.active.len(),
            track.len()
        )));
    }
    let mut out = ScenarioSeries::default();
    for ((s, k), &g) in track.samples.iter().zip(kin).zip(&assignment.active) {
        let [gx, gy] = *goals
            .goals
            .get(g)
            .ok_or_else(|| Error::InvalidParameter(format!("goal index {g} out of range")))?;
        out.theta_g.push(goal_bearing(s.x, s.y, k.heading, gx, gy));
        out.d_g.push((gx - s.x).hypot(gy - s.y));
        out.v.push(k.speed);
    }
    Ok(out)
}

/// Windowed-entropy subsampling parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SubsampleConfig {
    /// Quantization bins per variable and window.
    pub bins: usize,
    /// Base window length in steps.
    pub base_window: usize,
    /// Longest span a single representative row may stand for.
    pub max_window: usize,
    /// Mean per-variable entropy (bits) above which a window is kept whole.
    pub entropy_threshold: f64,
}

impl Default for SubsampleConfig {
    fn default() -> Self {
        SubsampleConfig {
            bins: 8,
            base_window: 10,
            max_window: 50,
            entropy_threshold: 1.0,
        }
    }
}

impl SubsampleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins < 2 {
            return Err(Error::InvalidParameter("bins must be >= 2".into()));
        }
        if self.base_window < 2 || self.base_window > self.max_window {
            return Err(Error::InvalidParameter(
                "need 2 <= base_window <= max_window".into(),
            ));
        }
        if !(self.entropy_threshold >= 0.0) {
            return Err(Error::InvalidParameter(
                "entropy_threshold must be >= 0".into(),
            ));
        }
        Ok(())
    }
}

/// Shannon entropy in bits of `values` after min-max quantization into
/// `bins` equal-width bins.
pub fn quantized_entropy(values: &[f64], bins: usize) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if values.is_empty() || hi <= lo {
        return 0.0;
    }
    let mut counts = vec![0usize; bins];
    for &v in values {
        let b = (((v - lo) / (hi - lo)) * bins as f64) as usize;
        counts[b.min(bins - 1)] += 1;
    }
    let n = values.len() as f64;
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum()
}

/// Keep every row of high-entropy base windows; runs of low-entropy windows
/// are merged into spans of at most `max_window` rows, each represented by
/// its first row. Returns the subset and the kept row indices.
pub fn entropy_subsample(
    dataset: &TimeSeriesDataset,
    cfg: &SubsampleConfig,
) -> Result<(TimeSeriesDataset, Vec<usize>)> {
    cfg.validate()?;
    let n = dataset.len();
    if n < cfg.base_window {
        return Err(Error::InsufficientSamples(format!(
            "{n} rows, base window is {}",
            cfg.base_window
        )));
    }
    let blocks_per_span = (cfg.max_window / cfg.base_window).max(1);
    let mut kept = Vec::new();
    // blocks already merged into the current low-entropy span
    let mut span_blocks = 0;
    let mut start = 0;
    while start < n {
        let end = (start + cfg.base_window).min(n);
        let entropy = dataset
            .columns()
            .iter()
            .map(|c| quantized_entropy(&c[start..end], cfg.bins))
            .sum::<f64>()
            / dataset.n_vars() as f64;
        if entropy > cfg.entropy_threshold {
            kept.extend(start..end);
            span_blocks = 0;
        } else {
            if span_blocks == 0 {
                kept.push(start);
            }
            span_blocks += 1;
            if span_blocks == blocks_per_span {
                span_blocks = 0;
            }
        }
        start = end;
    }
    Ok((dataset.select_rows(&kept), kept))
}
