use std::cmp::Ordering;

use log::debug;

use super::citest::{gpdc_test, parcorr_test, CiTestResult};
use super::graph::{CausalEdge, CausalGraph};
use super::{CiTest, DiscoveryConfig, LaggedVariable};
use crate::timeseries::TimeSeriesDataset;
use crate::{Error, Result};

/// Per-target candidate parents, strongest first.
pub type CandidateParents = Vec<Vec<LaggedVariable>>;

/// Standardized columns cut to a common window. Every test of a run sees
/// rows `max_lag..T` of the target, so lags up to `2 * tau_max` (the MCI
/// condition sets shift source parents back by the link lag) stay aligned.
struct LaggedData {
    columns: Vec<Vec<f64>>,
    max_lag: usize,
}

impl LaggedData {
    fn new(dataset: &TimeSeriesDataset, cfg: &DiscoveryConfig) -> Result<Self> {
        cfg.validate()?;
        let (t, n_vars) = (dataset.len(), dataset.n_vars());
        if t <= 10 * n_vars * cfg.tau_max {
            return Err(Error::InsufficientSamples(format!(
                "{t} steps for {n_vars} variables at tau_max {}; need more than {}",
                cfg.tau_max,
                10 * n_vars * cfg.tau_max
            )));
        }
        let columns = dataset
            .columns()
            .iter()
            .zip(dataset.names())
            .map(|(c, name)| {
                let n = c.len() as f64;
                let mean = c.iter().sum::<f64>() / n;
                let sd = (c.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
                if !(sd > 0.0) {
                    return Err(Error::ZeroVariance(name.clone()));
                }
                Ok(c.iter().map(|v| (v - mean) / sd).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        Ok(LaggedData {
            columns,
            max_lag: 2 * cfg.tau_max,
        })
    }

    fn n_vars(&self) -> usize {
        self.columns.len()
    }

    fn series(&self, var: usize, lag: usize) -> &[f64] {
        let t = self.columns[var].len();
        &self.columns[var][self.max_lag - lag..t - lag]
    }
}

fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Permutation seed for one test, independent of evaluation order.
fn link_seed(master: u64, stage: u64, target: usize, source: LaggedVariable, conds: usize) -> u64 {
    [
        stage,
        target as u64,
        source.var as u64,
        source.lag as u64,
        conds as u64,
    ]
    .iter()
    .fold(mix(master), |acc, &v| mix(acc ^ v))
}

fn run_test(
    data: &LaggedData,
    cfg: &DiscoveryConfig,
    source: LaggedVariable,
    target: usize,
    conds: &[LaggedVariable],
    seed: u64,
) -> Result<CiTestResult> {
    let x = data.series(source.var, source.lag);
    let y = data.series(target, 0);
    let z: Vec<&[f64]> = conds.iter().map(|c| data.series(c.var, c.lag)).collect();
    match cfg.test {
        CiTest::ParCorr => parcorr_test(x, y, &z),
        CiTest::Gpdc => gpdc_test(x, y, &z, cfg.permutations, seed),
    }
}

fn by_strength(a: &(LaggedVariable, f64), b: &(LaggedVariable, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// PC1 preselection: for every target, drop lagged candidates that test
/// independent given the strongest `p` other candidates, for growing `p`.
pub fn pc1_parents(dataset: &TimeSeriesDataset, cfg: &DiscoveryConfig) -> Result<CandidateParents> {
    let data = LaggedData::new(dataset, cfg)?;
    pc1_on(&data, cfg)
}

fn pc1_on(data: &LaggedData, cfg: &DiscoveryConfig) -> Result<CandidateParents> {
    let mut out = Vec::with_capacity(data.n_vars());
    for target in 0..data.n_vars() {
        // strength = smallest |statistic| seen so far
        let mut candidates: Vec<(LaggedVariable, f64)> = (0..data.n_vars())
            .flat_map(|v| {
                (1..=cfg.tau_max).map(move |l| (LaggedVariable::new(v, l), f64::INFINITY))
            })
            .collect();
        let mut p = 0;
        while candidates.len() > p {
            let snapshot = candidates.clone();
            let mut survivors = Vec::with_capacity(snapshot.len());
            for &(source, strength) in &snapshot {
                let conds: Vec<LaggedVariable> = snapshot
                    .iter()
                    .map(|c| c.0)
                    .filter(|c| *c != source)
                    .take(p)
                    .collect();
                let seed = link_seed(cfg.seed, 0, target, source, p);
                let res = run_test(data, cfg, source, target, &conds, seed)?;
                if res.p_value <= cfg.alpha_pc {
                    survivors.push((source, strength.min(res.statistic.abs())));
                }
            }
            survivors.sort_by(by_strength);
            debug!(
                "pc1 target {target} p={p}: {} of {} candidates survive",
                survivors.len(),
                snapshot.len()
            );
            candidates = survivors;
            p += 1;
        }
        out.push(candidates.into_iter().map(|c| c.0).collect());
    }
    Ok(out)
}

fn mci_condition_set(
    candidates: &CandidateParents,
    source: LaggedVariable,
    target: usize,
    k: usize,
) -> Vec<LaggedVariable> {
    let mut conds: Vec<LaggedVariable> = candidates[target]
        .iter()
        .copied()
        .filter(|c| *c != source)
        .take(k)
        .collect();
    for c in candidates[source.var].iter().take(k) {
        let shifted = LaggedVariable::new(c.var, c.lag + source.lag);
        if !conds.contains(&shifted) {
            conds.push(shifted);
        }
    }
    conds
}

/// MCI statistics for every candidate `(source, lag) -> target` link,
/// significant or not.
pub fn mci_links(
    dataset: &TimeSeriesDataset,
    candidates: &CandidateParents,
    cfg: &DiscoveryConfig,
) -> Result<Vec<CausalEdge>> {
    let data = LaggedData::new(dataset, cfg)?;
    mci_on(&data, candidates, cfg)
}

fn mci_on(
    data: &LaggedData,
    candidates: &CandidateParents,
    cfg: &DiscoveryConfig,
) -> Result<Vec<CausalEdge>> {
    let n = data.n_vars();
    if candidates.len() != n {
        return Err(Error::LengthMismatch(format!(
            "{} candidate lists for {n} variables",
            candidates.len()
        )));
    }
    if candidates
        .iter()
        .flatten()
        .any(|c| c.var >= n || c.lag == 0 || c.lag > cfg.tau_max)
    {
        return Err(Error::InvalidParameter(
            "candidate parents outside the variable/lag range".into(),
        ));
    }
    let mut links = Vec::new();
    for (target, parents) in candidates.iter().enumerate() {
        let mut sources = parents.clone();
        sources.sort();
        for source in sources {
            let conds = mci_condition_set(candidates, source, target, cfg.max_conds_per_side);
            let seed = link_seed(cfg.seed, 1, target, source, conds.len());
            let res = run_test(data, cfg, source, target, &conds, seed)?;
            links.push(CausalEdge {
                source,
                target,
                statistic: res.statistic,
                p_value: res.p_value,
            });
        }
    }
    Ok(links)
}

/// MCI validation; keeps links with `p_value <= alpha`.
pub fn mci_validate(
    dataset: &TimeSeriesDataset,
    candidates: &CandidateParents,
    cfg: &DiscoveryConfig,
) -> Result<CausalGraph> {
    let links = mci_links(dataset, candidates, cfg)?;
    Ok(CausalGraph::from_links(
        dataset.names().to_vec(),
        links,
        cfg,
    ))
}

/// PC1 followed by MCI on the same aligned window.
pub fn run_pcmci(dataset: &TimeSeriesDataset, cfg: &DiscoveryConfig) -> Result<CausalGraph> {
    let data = LaggedData::new(dataset, cfg)?;
    let candidates = pc1_on(&data, cfg)?;
    let links = mci_on(&data, &candidates, cfg)?;
    Ok(CausalGraph::from_links(
        dataset.names().to_vec(),
        links,
        cfg,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::timeseries::to_dataset;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn var1(n: usize, seed: u64, coupling: f64) -> TimeSeriesDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut e = || -> f64 { StandardNormal.sample(&mut rng) };
        let (mut x, mut y, mut z) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for t in 1..n {
            x[t] = 0.5 * x[t - 1] + e();
            y[t] = 0.4 * y[t - 1] + coupling * x[t - 1] + e();
            z[t] = 0.3 * z[t - 1] + e();
        }
        to_dataset(vec![("x".into(), x), ("y".into(), y), ("z".into(), z)], 1.0).unwrap()
    }

    #[test]
    fn pc1_keeps_true_driver() {
        let ds = var1(2000, 1, 0.8);
        let parents = pc1_parents(&ds, &DiscoveryConfig::default()).unwrap();
        assert!(parents[1].contains(&LaggedVariable::new(0, 1)));
        assert!(parents[1].contains(&LaggedVariable::new(1, 1)));
        assert!(!parents[1].contains(&LaggedVariable::new(2, 1)));
        assert_eq!(parents[1][0], LaggedVariable::new(0, 1));
    }

    #[test]
    fn single_ar_process() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = vec![0.0; 500];
        for t in 1..500 {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = 0.8 * x[t - 1] + e;
        }
        let ds = to_dataset(vec![("x".into(), x)], 1.0).unwrap();
        let parents = pc1_parents(&ds, &DiscoveryConfig::default()).unwrap();
        assert_eq!(parents, vec![vec![LaggedVariable::new(0, 1)]]);
    }

    #[test]
    fn empty_candidates_give_empty_graph() {
        let ds = var1(500, 2, 0.5);
        let graph = mci_validate(&ds, &vec![vec![]; 3], &DiscoveryConfig::default()).unwrap();
        assert!(graph.edges.is_empty());
    }

    #[test]
    fn insufficient_samples_rejected() {
        let ds = var1(30, 3, 0.5);
        assert!(matches!(
            run_pcmci(&ds, &DiscoveryConfig::default()),
            Err(Error::InsufficientSamples(_))
        ));
        let bad = DiscoveryConfig {
            tau_max: 0,
            ..Default::default()
        };
        assert!(matches!(
            run_pcmci(&var1(500, 3, 0.5), &bad),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn condition_set_shifts_source_parents() {
        let cands = vec![
            vec![LaggedVariable::new(0, 1)],
            vec![LaggedVariable::new(0, 1), LaggedVariable::new(1, 1)],
        ];
        let conds = mci_condition_set(&cands, LaggedVariable::new(0, 1), 1, 3);
        assert_eq!(
            conds,
            vec![LaggedVariable::new(1, 1), LaggedVariable::new(0, 2)]
        );
    }

    #[test]
    fn link_seeds_differ() {
        let a = link_seed(7, 1, 0, LaggedVariable::new(1, 1), 2);
        let b = link_seed(7, 1, 1, LaggedVariable::new(0, 1), 2);
        assert_ne!(a, b);
        assert_eq!(a, link_seed(7, 1, 0, LaggedVariable::new(1, 1), 2));
    }
}
