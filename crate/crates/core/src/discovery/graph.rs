use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DiscoveryConfig, LaggedVariable};
use crate::{Error, Result};

/// Lagged link `source(t - lag) -> target(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CausalEdge {
    pub source: LaggedVariable,
    pub target: usize,
    /// Signed MCI statistic; NaN for structural (ground-truth) edges.
    pub statistic: f64,
    /// NaN for structural edges.
    pub p_value: f64,
}

impl CausalEdge {
    /// Edge without test statistics.
    pub fn structural(source: usize, lag: usize, target: usize) -> Self {
        CausalEdge {
            source: LaggedVariable::new(source, lag),
            target,
            statistic: f64::NAN,
            p_value: f64::NAN,
        }
    }

    pub fn key(&self) -> (usize, usize, usize) {
        (self.source.var, self.source.lag, self.target)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CausalGraph {
    pub variables: Vec<String>,
    pub edges: Vec<CausalEdge>,
    pub tau_max: usize,
    /// Significance level the edges passed; `None` for structural graphs.
    pub alpha: Option<f64>,
    pub test: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Serialize, Deserialize)]
struct EdgeRecord {
    source: String,
    target: String,
    lag: usize,
    statistic: Option<f64>,
    p_value: Option<f64>,
}

#[derive(Serialize, Deserialize)]
struct GraphRecord {
    variables: Vec<String>,
    tau_max: usize,
    alpha: Option<f64>,
    test: Option<String>,
    seed: Option<u64>,
    edges: Vec<EdgeRecord>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl CausalGraph {
    /// Structural graph over `variables`, statistics left empty.
    pub fn structural(variables: Vec<String>, tau_max: usize, edges: Vec<CausalEdge>) -> Self {
        let mut g = CausalGraph {
            variables,
            edges,
            tau_max,
            alpha: None,
            test: None,
            seed: None,
        };
        g.sort_edges();
        g
    }

    pub(crate) fn from_links(
        variables: Vec<String>,
        links: Vec<CausalEdge>,
        cfg: &DiscoveryConfig,
    ) -> Self {
        let mut g = CausalGraph {
            variables,
            edges: links
                .into_iter()
                .filter(|e| e.p_value <= cfg.alpha)
                .collect(),
            tau_max: cfg.tau_max,
            alpha: Some(cfg.alpha),
            test: Some(cfg.test.name().to_string()),
            seed: Some(cfg.seed),
        };
        g.sort_edges();
        g
    }

    fn sort_edges(&mut self) {
        self.edges.sort_by_key(CausalEdge::key);
        self.edges.dedup_by_key(|e| e.key());
    }

    /// Edges surviving a stricter significance level.
    pub fn filter_alpha(&self, alpha: f64) -> CausalGraph {
        CausalGraph {
            edges: self
                .edges
                .iter()
                .copied()
                .filter(|e| e.p_value <= alpha)
                .collect(),
            alpha: Some(self.alpha.map_or(alpha, |a| a.min(alpha))),
            ..self.clone()
        }
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.variables.iter().position(|v| v == name)
    }

    /// Lagged parents of `target`, ordered by `(var, lag)`.
    pub fn parents(&self, target: usize) -> Vec<LaggedVariable> {
        let set: BTreeSet<LaggedVariable> = self
            .edges
            .iter()
            .filter(|e| e.target == target)
            .map(|e| e.source)
            .collect();
        set.into_iter().collect()
    }

    /// `(source name, lag, target name)` triples.
    pub fn edge_set(&self) -> BTreeSet<(String, usize, String)> {
        self.edges
            .iter()
            .map(|e| {
                (
                    self.variables[e.source.var].clone(),
                    e.source.lag,
                    self.variables[e.target].clone(),
                )
            })
            .collect()
    }

    pub fn contains(&self, source: &str, lag: usize, target: &str) -> bool {
        match (self.index_of(source), self.index_of(target)) {
            (Some(s), Some(t)) => self.edges.iter().any(|e| e.key() == (s, lag, t)),
            _ => false,
        }
    }

    /// Statistic of the strongest self-link of `var`.
    pub fn auto_strength(&self, var: usize) -> Option<f64> {
        self.edges
            .iter()
            .filter(|e| e.source.var == var && e.target == var)
            .map(|e| e.statistic)
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
    }

    pub fn to_json(&self) -> Result<String> {
        let record = GraphRecord {
            variables: self.variables.clone(),
            tau_max: self.tau_max,
            alpha: self.alpha,
            test: self.test.clone(),
            seed: self.seed,
            edges: self
                .edges
                .iter()
                .map(|e| EdgeRecord {
                    source: self.variables[e.source.var].clone(),
                    target: self.variables[e.target].clone(),
                    lag: e.source.lag,
                    statistic: finite(e.statistic),
                    p_value: finite(e.p_value),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&record)?)
    }

    pub fn from_json(text: &str) -> Result<CausalGraph> {
        let record: GraphRecord = serde_json::from_str(text)?;
        let lookup = |name: &str| {
            record
                .variables
                .iter()
                .position(|v| v == name)
                .ok_or_else(|| Error::Config(format!("edge refers to unknown variable `{name}`")))
        };
        let mut edges = Vec::with_capacity(record.edges.len());
        for e in &record.edges {
            if e.lag == 0 || e.lag > record.tau_max {
                return Err(Error::Config(format!(
                    "edge {} -> {} has lag {} outside 1..={}",
                    e.source, e.target, e.lag, record.tau_max
                )));
            }
            let p = e.p_value.unwrap_or(f64::NAN);
            if p.is_finite() && !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("p-value {p} outside [0, 1]")));
            }
            edges.push(CausalEdge {
                source: LaggedVariable::new(lookup(&e.source)?, e.lag),
                target: lookup(&e.target)?,
                statistic: e.statistic.unwrap_or(f64::NAN),
                p_value: p,
            });
        }
        let mut g = CausalGraph {
            variables: record.variables,
            edges,
            tau_max: record.tau_max,
            alpha: record.alpha,
            test: record.test,
            seed: record.seed,
        };
        g.sort_edges();
        Ok(g)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<CausalGraph> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        CausalGraph::from_json(&text)
    }

    /// Graphviz rendering: cross links labelled with lag and statistic, edge
    /// and node border widths scaled by `|statistic|` (auto-links go on the
    /// node border).
    pub fn to_dot(&self) -> String {
        let width = |s: f64| {
            if s.is_finite() {
                1.0 + 4.0 * s.abs()
            } else {
                1.0
            }
        };
        let mut out = String::from("digraph causal_graph {\n    rankdir=LR;\n");
        for (i, name) in self.variables.iter().enumerate() {
            match self.auto_strength(i) {
                Some(s) => {
                    let label = if s.is_finite() {
                        format!("{name}\\nauto={s:.3}")
                    } else {
                        format!("{name}\\nauto")
                    };
                    let _ = writeln!(
                        out,
                        "    \"{name}\" [label=\"{label}\", penwidth={:.3}];",
                        width(s)
                    );
                }
                None => {
                    let _ = writeln!(out, "    \"{name}\" [label=\"{name}\"];");
                }
            }
        }
        for e in self.edges.iter().filter(|e| e.source.var != e.target) {
            let stat = if e.statistic.is_finite() {
                format!("{:.3}", e.statistic)
            } else {
                "-".to_string()
            };
            let _ = writeln!(
                out,
                "    \"{}\" -> \"{}\" [label=\"τ={} | stat={}\", penwidth={:.3}];",
                self.variables[e.source.var],
                self.variables[e.target],
                e.source.lag,
                stat,
                width(e.statistic)
            );
        }
        out.push_str("}\n");
        out
    }
}
