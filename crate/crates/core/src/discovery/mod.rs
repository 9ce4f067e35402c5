//! Lagged causal discovery: PC1 parent preselection followed by MCI
//! validation of every candidate link.

mod citest;
mod graph;
mod pcmci;

pub use citest::{distance_correlation, gpdc_test, parcorr_test, CenteredDistances, CiTestResult};
pub use graph::{CausalEdge, CausalGraph};
pub use pcmci::{mci_links, mci_validate, pc1_parents, run_pcmci, CandidateParents};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// A variable observed `lag` steps in the past.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LaggedVariable {
    pub var: usize,
    pub lag: usize,
}

impl LaggedVariable {
    pub fn new(var: usize, lag: usize) -> Self {
        LaggedVariable { var, lag }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiTest {
    ParCorr,
    Gpdc,
}

impl CiTest {
    pub fn name(self) -> &'static str {
        match self {
            CiTest::ParCorr => "parcorr",
            CiTest::Gpdc => "gpdc",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiscoveryConfig {
    pub tau_max: usize,
    /// Significance level of the PC1 preselection.
    pub alpha_pc: f64,
    /// Significance level of the final MCI links.
    pub alpha: f64,
    pub test: CiTest,
    /// Size of the GPDC permutation null.
    pub permutations: usize,
    pub seed: u64,
    /// Strongest parents kept per side in an MCI condition set.
    pub max_conds_per_side: usize,
}

impl Default for DiscoveryConfig {
    fn default() -> Self {
        DiscoveryConfig {
            tau_max: 1,
            alpha_pc: 0.2,
            alpha: 0.05,
            test: CiTest::ParCorr,
            permutations: 500,
            seed: 0,
            max_conds_per_side: 3,
        }
    }
}

impl DiscoveryConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_max < 1 {
            return Err(Error::Config("tau_max must be >= 1".into()));
        }
        if !(self.alpha > 0.0 && self.alpha <= self.alpha_pc && self.alpha_pc < 1.0) {
            return Err(Error::Config("need 0 < alpha <= alpha_pc < 1".into()));
        }
        if self.test == CiTest::Gpdc && self.permutations < 100 {
            return Err(Error::Config("GPDC needs at least 100 permutations".into()));
        }
        Ok(())
    }
}
