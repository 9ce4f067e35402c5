//! Synthetic goal-seeking scenarios with known lag-1 causal structure.
//!
//! The selected agent walks a cyclic goal schedule. With `d`, `theta`, `v`
//! the goal distance, goal bearing relative to the heading and the speed,
//! one step reads
//!
//! ```text
//! switch_t = d[t-1] < arrival_radius            (goal tracker, hysteresis)
//! p[t]     = p[t-1] + v[t-1] * dt * dir(h[t-1])
//! d[t]     = |g[t] - p[t]|
//! theta[t] = bearing_t(g[t]) - h[t-1]               if switch_t
//!          = theta[t-1] - clamp(lambda * theta[t-1], +-omega * dt) + e_theta
//! h[t]     = bearing_t(g[t]) - theta[t]
//! v[t]     = max(0, min(v_max, kappa * d[t-1]) - beta * (risk[t-1] - 1) + e_v)
//! ```
//!
//! so between switches `d[t]` is an exact function of `(d, v, theta)` at
//! `t - 1`. In the moving-obstacle scenario `risk[t]` is the velocity-obstacle
//! risk of the agent at `p[t]` moving with its last velocity
//! `v[t-1] * dir(h[t-1])` against non-reactive obstacles.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::discovery::{CausalEdge, CausalGraph};
use crate::features::{GoalSet, GoalTracker, ScenarioSeries};
use crate::timeseries::{to_dataset, TimeSeriesDataset, Track, TrackSample, TrackSet};
use crate::vo::{risk, AgentDisc, DEFAULT_RADIUS};
use crate::{wrap_angle, Error, Result};

/// Track id of the selected agent.
pub const AGENT_ID: &str = "agent";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HumanGoalSimConfig {
    pub goals: GoalSet,
    pub start: [f64; 2],
    /// Initial heading in radians; `None` faces the first goal.
    pub initial_heading: Option<f64>,
    pub dt: f64,
    pub steps: usize,
    /// Speed gain kappa (1/s).
    pub gain: f64,
    pub v_max: f64,
    /// Maximum heading correction rate (rad/s).
    pub turn_rate: f64,
    /// Fraction of the goal bearing corrected per step.
    pub turn_gain: f64,
    pub noise_v: f64,
    pub noise_heading: f64,
    pub seed: u64,
}

impl Default for HumanGoalSimConfig {
    fn default() -> Self {
        HumanGoalSimConfig {
            goals: GoalSet::new(vec![[0.0, 0.0], [1.5, 0.0], [1.5, 1.5], [0.0, 1.5]], 0.3),
            start: [0.0, 1.5],
            initial_heading: None,
            dt: 0.2,
            steps: 2000,
            gain: 0.5,
            v_max: 1.5,
            turn_rate: 3.0,
            turn_gain: 0.3,
            noise_v: 0.3,
            noise_heading: 0.09,
            seed: 0,
        }
    }
}

impl HumanGoalSimConfig {
    pub fn validate(&self) -> Result<()> {
        self.goals
            .validate()
            .map_err(|e| Error::Config(e.to_string()))?;
        if self.steps == 0 {
            return Err(Error::Config("steps must be positive".into()));
        }
        let positive = [
            ("dt", self.dt),
            ("gain", self.gain),
            ("v_max", self.v_max),
            ("turn_rate", self.turn_rate),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if !(self.turn_gain > 0.0 && self.turn_gain <= 1.0) {
            return Err(Error::Config("turn_gain must lie in (0, 1]".into()));
        }
        for (name, v) in [
            ("noise_v", self.noise_v),
            ("noise_heading", self.noise_heading),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        if self
            .start
            .iter()
            .chain(self.initial_heading.iter())
            .any(|v| !v.is_finite())
        {
            return Err(Error::Config("start state must be finite".into()));
        }
        Ok(())
    }
}

/// Non-reactive obstacle walking its own goal loop at constant speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObstacleConfig {
    pub start: [f64; 2],
    pub goals: Vec<[f64; 2]>,
    pub speed: f64,
    #[serde(default = "default_radius")]
    pub radius: f64,
}

fn default_radius() -> f64 {
    DEFAULT_RADIUS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MovingObstacleSimConfig {
    pub agent: HumanGoalSimConfig,
    pub obstacles: Vec<ObstacleConfig>,
    /// Risk-avoidance gain beta.
    pub risk_gain: f64,
    pub agent_radius: f64,
}

impl Default for MovingObstacleSimConfig {
    fn default() -> Self {
        MovingObstacleSimConfig {
            agent: HumanGoalSimConfig::default(),
            obstacles: vec![
                ObstacleConfig {
                    start: [-3.0, 0.75],
                    goals: vec![[4.5, 0.75], [-3.0, 0.75]],
                    speed: 0.4,
                    radius: DEFAULT_RADIUS,
                },
                ObstacleConfig {
                    start: [0.75, 4.5],
                    goals: vec![[0.75, -3.0], [0.75, 4.5]],
                    speed: 0.3,
                    radius: DEFAULT_RADIUS,
                },
            ],
            risk_gain: 0.2,
            agent_radius: DEFAULT_RADIUS,
        }
    }
}

impl MovingObstacleSimConfig {
    pub fn validate(&self) -> Result<()> {
        self.agent.validate()?;
        if self.obstacles.is_empty() {
            return Err(Error::Config("at least one obstacle is required".into()));
        }
        if !(self.risk_gain.is_finite() && self.risk_gain >= 0.0) {
            return Err(Error::Config("risk_gain must be >= 0".into()));
        }
        if !(self.agent_radius.is_finite() && self.agent_radius > 0.0) {
            return Err(Error::Config("agent_radius must be positive".into()));
        }
        for (i, o) in self.obstacles.iter().enumerate() {
            if o.goals.is_empty() {
                return Err(Error::Config(format!("obstacle {i} has no goals")));
            }
            if !(o.speed.is_finite() && o.speed >= 0.0) {
                return Err(Error::Config(format!("obstacle {i} speed must be >= 0")));
            }
            if !(o.radius.is_finite() && o.radius > 0.0) {
                return Err(Error::Config(format!(
                    "obstacle {i} radius must be positive"
                )));
            }
        }
        Ok(())
    }
}

/// Simulated tracks, scenario series and the generative graph.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub tracks: TrackSet,
    pub series: ScenarioSeries,
    /// Collision risk, moving-obstacle scenario only.
    pub risk: Option<Vec<f64>>,
    pub ground_truth: CausalGraph,
    /// Steps at which the active goal changed.
    pub switch_steps: Vec<usize>,
    pub dt: f64,
}

impl SimulationOutput {
    /// Scenario variables in ground-truth order: `theta_g, d_g, v` or
    /// `d_g, v, risk`.
    pub fn dataset(&self) -> Result<TimeSeriesDataset> {
        let s = &self.series;
        let columns = match &self.risk {
            None => vec![
                ("theta_g".to_string(), s.theta_g.clone()),
                ("d_g".to_string(), s.d_g.clone()),
                ("v".to_string(), s.v.clone()),
            ],
            Some(r) => vec![
                ("d_g".to_string(), s.d_g.clone()),
                ("v".to_string(), s.v.clone()),
                ("risk".to_string(), r.clone()),
            ],
        };
        to_dataset(columns, self.dt)
    }
}

/// Generative graph of the human-goal scenario over `theta_g, d_g, v`.
pub fn human_goal_ground_truth() -> CausalGraph {
    let (theta, d, v) = (0, 1, 2);
    CausalGraph::structural(
        vec!["theta_g".into(), "d_g".into(), "v".into()],
        1,
        vec![
            CausalEdge::structural(d, 1, theta),
            CausalEdge::structural(theta, 1, d),
            CausalEdge::structural(v, 1, d),
            CausalEdge::structural(d, 1, v),
            CausalEdge::structural(theta, 1, theta),
            CausalEdge::structural(d, 1, d),
        ],
    )
}

/// Generative graph of the moving-obstacle scenario over `d_g, v, risk`.
pub fn moving_obstacle_ground_truth() -> CausalGraph {
    let (d, v, r) = (0, 1, 2);
    CausalGraph::structural(
        vec!["d_g".into(), "v".into(), "risk".into()],
        1,
        vec![
            CausalEdge::structural(v, 1, d),
            CausalEdge::structural(d, 1, v),
            CausalEdge::structural(r, 1, v),
            CausalEdge::structural(v, 1, r),
            CausalEdge::structural(d, 1, d),
        ],
    )
}

/// Gaussian noise truncated at five standard deviations.
struct Noise {
    dist: Option<Normal<f64>>,
    limit: f64,
}

impl Noise {
    fn new(std: f64) -> Self {
        Noise {
            dist: (std > 0.0).then(|| Normal::new(0.0, std).expect("finite std")),
            limit: 5.0 * std,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.dist
            .map_or(0.0, |d| d.sample(rng).clamp(-self.limit, self.limit))
    }
}

struct Obstacle {
    cfg: ObstacleConfig,
    position: [f64; 2],
    velocity: [f64; 2],
    goal: usize,
    track: Vec<TrackSample>,
}

impl Obstacle {
    fn new(cfg: &ObstacleConfig) -> Self {
        Obstacle {
            cfg: cfg.clone(),
            position: cfg.start,
            velocity: [0.0, 0.0],
            goal: 0,
            track: vec![],
        }
    }

    fn advance(&mut self, dt: f64) {
        let mut budget = self.cfg.speed * dt;
        let start = self.position;
        // walk through as many goals as the step length reaches
        for _ in 0..=self.cfg.goals.len() {
            let [gx, gy] = self.cfg.goals[self.goal];
            let (dx, dy) = (gx - self.position[0], gy - self.position[1]);
            let dist = dx.hypot(dy);
            if dist > budget {
                self.position[0] += budget * dx / dist;
                self.position[1] += budget * dy / dist;
                break;
            }
            budget -= dist;
            self.position = [gx, gy];
            self.goal = (self.goal + 1) % self.cfg.goals.len();
        }
        self.velocity = [
            (self.position[0] - start[0]) / dt,
            (self.position[1] - start[1]) / dt,
        ];
    }

    fn disc(&self) -> AgentDisc {
        AgentDisc::new(self.position, self.velocity, self.cfg.radius)
    }
}

struct Agent {
    position: [f64; 2],
    heading: f64,
    theta: f64,
    d: f64,
    v: f64,
}

fn bearing(from: [f64; 2], to: [f64; 2]) -> f64 {
    (to[1] - from[1]).atan2(to[0] - from[0])
}

fn run(
    cfg: &HumanGoalSimConfig,
    mut obstacles: Option<(&mut [Obstacle], f64, f64)>,
) -> (
    Vec<TrackSample>,
    ScenarioSeries,
    Option<Vec<f64>>,
    Vec<usize>,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise_v = Noise::new(cfg.noise_v);
    let noise_h = Noise::new(cfg.noise_heading);
    let goals = &cfg.goals;
    let mut tracker = GoalTracker::new(goals);

    let g0 = goals.goals[tracker.active()];
    let heading = cfg
        .initial_heading
        .unwrap_or_else(|| bearing(cfg.start, g0));
    let d0 = goals.distance(tracker.active(), cfg.start[0], cfg.start[1]);
    let mut a = Agent {
        position: cfg.start,
        heading,
        theta: if d0 > 0.0 {
            wrap_angle(bearing(cfg.start, g0) - heading)
        } else {
            0.0
        },
        d: d0,
        v: (cfg.gain * d0).min(cfg.v_max),
    };
    let mut samples = Vec::with_capacity(cfg.steps);
    let mut series = ScenarioSeries::default();
    let mut risks = obstacles.as_ref().map(|_| Vec::with_capacity(cfg.steps));
    let mut switches = Vec::new();
    // velocity vector that brought the agent to its current position
    let mut last_velocity = [0.0, 0.0];

    for t in 0..cfg.steps {
        if t > 0 {
            let switched = tracker.observe(t - 1, a.d);
            if switched {
                switches.push(t);
            }
            let step = a.v * cfg.dt;
            last_velocity = [a.v * a.heading.cos(), a.v * a.heading.sin()];
            a.position[0] += step * a.heading.cos();
            a.position[1] += step * a.heading.sin();
            let g = goals.goals[tracker.active()];
            let d_prev = a.d;
            a.d = goals.distance(tracker.active(), a.position[0], a.position[1]);
            let b = bearing(a.position, g);
            a.theta = if switched {
                wrap_angle(b - a.heading)
            } else {
                let limit = cfg.turn_rate * cfg.dt;
                let turn = (cfg.turn_gain * a.theta).clamp(-limit, limit);
                wrap_angle(a.theta - turn + noise_h.sample(&mut rng))
            };
            a.heading = wrap_angle(b - a.theta);
            let penalty = match (&mut obstacles, &risks) {
                (Some((_, beta, _)), Some(r)) => *beta * (r[t - 1] - 1.0),
                _ => 0.0,
            };
            a.v =
                ((cfg.gain * d_prev).min(cfg.v_max) - penalty + noise_v.sample(&mut rng)).max(0.0);
        }
        if let (Some((obs, _, radius)), Some(r)) = (&mut obstacles, &mut risks) {
            if t > 0 {
                obs.iter_mut().for_each(|o| o.advance(cfg.dt));
            }
            let discs: Vec<AgentDisc> = obs.iter().map(Obstacle::disc).collect();
            let agent = AgentDisc::new(a.position, last_velocity, *radius);
            r.push(risk(&agent, &discs).risk);
            let time = t as f64 * cfg.dt;
            for o in obs.iter_mut() {
                o.track.push(TrackSample {
                    t: time,
                    x: o.position[0],
                    y: o.position[1],
                });
            }
        }
        samples.push(TrackSample {
            t: t as f64 * cfg.dt,
            x: a.position[0],
            y: a.position[1],
        });
        series.theta_g.push(a.theta);
        series.d_g.push(a.d);
        series.v.push(a.v);
    }
    (samples, series, risks, switches)
}

/// Single agent walking its goal loop; variables `theta_g, d_g, v`.
pub fn simulate_human_goal(cfg: &HumanGoalSimConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let (samples, series, _, switch_steps) = run(cfg, None);
    Ok(SimulationOutput {
        tracks: TrackSet {
            tracks: vec![Track::new(AGENT_ID, samples)],
        },
        series,
        risk: None,
        ground_truth: human_goal_ground_truth(),
        switch_steps,
        dt: cfg.dt,
    })
}

/// Selected agent slowing down under collision risk from non-reactive
/// obstacles; variables `d_g, v, risk`.
pub fn simulate_moving_obstacles(cfg: &MovingObstacleSimConfig) -> Result<SimulationOutput> {
    cfg.validate()?;
    let mut obstacles: Vec<Obstacle> = cfg.obstacles.iter().map(Obstacle::new).collect();
    let (samples, series, risk, switch_steps) = run(
        &cfg.agent,
        Some((&mut obstacles, cfg.risk_gain, cfg.agent_radius)),
    );
    let mut tracks = vec![Track::new(AGENT_ID, samples)];
    tracks.extend(
        obstacles
            .into_iter()
            .enumerate()
            .map(|(i, o)| Track::new(format!("obstacle_{}", i + 1), o.track)),
    );
    Ok(SimulationOutput {
        tracks: TrackSet { tracks },
        series,
        risk,
        ground_truth: moving_obstacle_ground_truth(),
        switch_steps,
        dt: cfg.agent.dt,
    })
}
