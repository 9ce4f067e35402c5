//! Velocity-obstacle geometry and the scalar collision-risk signal
//! `risk = exp(d_OP + d_BP + v_a)`.
//!
//! The collision cone from the agent to the obstacle disc enlarged by the
//! agent radius is translated by the obstacle velocity into the agent's
//! velocity space. `d_OP` is the distance from the cone apex `O` to the agent
//! velocity point `P`, `d_BP` the distance from `P` to the nearest boundary
//! ray; both are zero outside the cone.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Default per-agent radius in meters.
pub const DEFAULT_RADIUS: f64 = 0.3;

/// Relative margin applied to the center distance of overlapping discs by
/// [`risk`].
const OVERLAP_CLAMP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentDisc {
    pub position: [f64; 2],
    pub velocity: [f64; 2],
    pub radius: f64,
}

impl AgentDisc {
    pub fn new(position: [f64; 2], velocity: [f64; 2], radius: f64) -> Self {
        AgentDisc {
            position,
            velocity,
            radius,
        }
    }

    pub fn speed(&self) -> f64 {
        self.velocity[0].hypot(self.velocity[1])
    }

    fn distance_to(&self, other: &AgentDisc) -> f64 {
        (other.position[0] - self.position[0]).hypot(other.position[1] - self.position[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoGeometry {
    /// Cone apex in velocity space, equal to the obstacle velocity.
    pub apex: [f64; 2],
    /// Unit vector from the agent towards the obstacle center.
    pub axis: [f64; 2],
    /// Boundary ray rotated counter-clockwise from the axis.
    pub left: [f64; 2],
    /// Boundary ray rotated clockwise from the axis.
    pub right: [f64; 2],
    pub half_angle: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoEvaluation {
    /// Agent velocity point `P`.
    pub point: [f64; 2],
    pub inside: bool,
    pub d_op: f64,
    pub d_bp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskSample {
    pub risk: f64,
    /// Agent speed.
    pub v_a: f64,
    pub d_op: f64,
    pub d_bp: f64,
    /// Index of the obstacle the VO was built for.
    pub obstacle: Option<usize>,
}

fn rotate(v: [f64; 2], angle: f64) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn cone(apex: [f64; 2], axis: [f64; 2], distance: f64, combined_radius: f64) -> VoGeometry {
    let half_angle = (combined_radius / distance).asin();
    VoGeometry {
        apex,
        axis,
        left: rotate(axis, half_angle),
        right: rotate(axis, -half_angle),
        half_angle,
    }
}

/// Collision cone from `agent` to `obstacle` (radius enlarged by the agent
/// radius), translated by the obstacle velocity.
pub fn build_vo(agent: &AgentDisc, obstacle: &AgentDisc) -> Result<VoGeometry> {
    let distance = agent.distance_to(obstacle);
    let combined_radius = agent.radius + obstacle.radius;
    if !(distance > combined_radius) {
        return Err(Error::Overlap {
            distance,
            combined_radius,
        });
    }
    let axis = [
        (obstacle.position[0] - agent.position[0]) / distance,
        (obstacle.position[1] - agent.position[1]) / distance,
    ];
    Ok(cone(obstacle.velocity, axis, distance, combined_radius))
}

/// Distance from `p` to the ray from the origin along unit `dir`.
fn ray_distance(p: [f64; 2], dir: [f64; 2]) -> f64 {
    let along = p[0] * dir[0] + p[1] * dir[1];
    if along <= 0.0 {
        p[0].hypot(p[1])
    } else {
        (dir[0] * p[1] - dir[1] * p[0]).abs()
    }
}

/// Membership of `v_a` in the open cone and its distance contributions.
pub fn evaluate_vo(vo: &VoGeometry, v_a: [f64; 2]) -> VoEvaluation {
    let rel = [v_a[0] - vo.apex[0], v_a[1] - vo.apex[1]];
    let along = vo.axis[0] * rel[0] + vo.axis[1] * rel[1];
    let across = vo.axis[0] * rel[1] - vo.axis[1] * rel[0];
    let inside = along > 0.0 && across.atan2(along).abs() < vo.half_angle;
    if !inside {
        return VoEvaluation {
            point: v_a,
            inside,
            d_op: 0.0,
            d_bp: 0.0,
        };
    }
    VoEvaluation {
        point: v_a,
        inside,
        d_op: rel[0].hypot(rel[1]),
        d_bp: ray_distance(rel, vo.left).min(ray_distance(rel, vo.right)),
    }
}

/// Constant-velocity rollout: does the center distance drop below the
/// combined radius at any of `steps + 1` instants over `[0, horizon]`?
pub fn collision_oracle(
    agent: &AgentDisc,
    obstacle: &AgentDisc,
    horizon: f64,
    steps: usize,
) -> bool {
    let combined = agent.radius + obstacle.radius;
    let steps = steps.max(1);
    (0..=steps).any(|k| {
        let t = horizon * k as f64 / steps as f64;
        let dx = (obstacle.position[0] + obstacle.velocity[0] * t)
            - (agent.position[0] + agent.velocity[0] * t);
        let dy = (obstacle.position[1] + obstacle.velocity[1] * t)
            - (agent.position[1] + agent.velocity[1] * t);
        dx.hypot(dy) < combined
    })
}

/// Index of the obstacle with the smallest center distance; ties go to the
/// lowest index.
pub fn closest_obstacle(agent: &AgentDisc, others: &[AgentDisc]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, o) in others.iter().enumerate() {
        let d = agent.distance_to(o);
        if best.is_none_or(|(_, bd)| d < bd) {
            best = Some((i, d));
        }
    }
    best.map(|(i, _)| i)
}

/// Collision risk against the closest obstacle. Without an obstacle, or when
/// the agent velocity lies outside its VO, the risk is `exp(speed)`.
/// Overlapping discs are evaluated with the center distance clamped just
/// above the combined radius.
pub fn risk(agent: &AgentDisc, others: &[AgentDisc]) -> RiskSample {
    let v_a = agent.speed();
    let Some(idx) = closest_obstacle(agent, others) else {
        return RiskSample {
            risk: v_a.exp(),
            v_a,
            d_op: 0.0,
            d_bp: 0.0,
            obstacle: None,
        };
    };
    let obstacle = &others[idx];
    let vo = build_vo(agent, obstacle).unwrap_or_else(|_| {
        let combined = agent.radius + obstacle.radius;
        let dx = obstacle.position[0] - agent.position[0];
        let dy = obstacle.position[1] - agent.position[1];
        let d = dx.hypot(dy);
        let axis = if d > 0.0 {
            [dx / d, dy / d]
        } else if v_a > 0.0 {
            [agent.velocity[0] / v_a, agent.velocity[1] / v_a]
        } else {
            [1.0, 0.0]
        };
        cone(
            obstacle.velocity,
            axis,
            combined * (1.0 + OVERLAP_CLAMP),
            combined,
        )
    });
    let eval = evaluate_vo(&vo, agent.velocity);
    RiskSample {
        risk: (eval.d_op + eval.d_bp + v_a).exp(),
        v_a,
        d_op: eval.d_op,
        d_bp: eval.d_bp,
        obstacle: Some(idx),
    }
}
