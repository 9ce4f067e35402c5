mod common;

use std::collections::BTreeSet;

use common::normals;
use hsi_causal::discovery::{
    mci_validate, pc1_parents, run_pcmci, CausalGraph, CiTest, DiscoveryConfig, LaggedVariable,
};
use hsi_causal::timeseries::{to_dataset, TimeSeriesDataset};
use proptest::prelude::*;

/// `x` autoregressive, `y` driven by `x` at lag `lag`, `z` independent noise.
fn var_dataset(n: usize, lag: usize, seed: u64) -> TimeSeriesDataset {
    let e = normals(3 * n, seed);
    let (mut x, mut y) = (vec![0.0; n], vec![0.0; n]);
    let z = e[2 * n..].to_vec();
    for t in 0..n {
        x[t] = if t > 0 { 0.6 * x[t - 1] } else { 0.0 } + e[t];
        y[t] = if t >= lag { 0.8 * x[t - lag] } else { 0.0 } + e[n + t];
    }
    to_dataset(vec![("x".into(), x), ("y".into(), y), ("z".into(), z)], 1.0).unwrap()
}

fn triples(list: &[(&str, usize, &str)]) -> BTreeSet<(String, usize, String)> {
    list.iter()
        .map(|(s, l, t)| (s.to_string(), *l, t.to_string()))
        .collect()
}

#[test]
fn pc1_keeps_true_parent_and_mostly_drops_unrelated() {
    // unrelated candidates survive the liberal alpha_pc = 0.2 with
    // probability about alpha_pc, the true ones always
    let mut kept_z = 0;
    for seed in 0..20 {
        let ds = var_dataset(2000, 1, seed);
        let cands = pc1_parents(&ds, &DiscoveryConfig::default()).unwrap();
        assert!(cands[1].contains(&LaggedVariable::new(0, 1)));
        assert!(cands[0].contains(&LaggedVariable::new(0, 1)));
        kept_z += cands[1].contains(&LaggedVariable::new(2, 1)) as usize;
    }
    assert!(kept_z <= 8, "{kept_z}/20");
}

#[test]
fn linear_var_recovered_exactly() {
    let ds = var_dataset(2000, 1, 2);
    let g = run_pcmci(&ds, &DiscoveryConfig::default()).unwrap();
    assert_eq!(g.edge_set(), triples(&[("x", 1, "x"), ("x", 1, "y")]));
    assert_eq!(g.seed, Some(0));
    assert!(g.edges.iter().all(|e| e.p_value <= 0.05));
}

#[test]
fn lag_two_link_resolved() {
    let ds = var_dataset(2000, 2, 3);
    let cfg = DiscoveryConfig {
        tau_max: 2,
        ..Default::default()
    };
    let g = run_pcmci(&ds, &cfg).unwrap();
    assert!(g.contains("x", 2, "y"));
    assert!(!g.contains("x", 1, "y"));
    assert!(g.contains("x", 1, "x"));
}

#[test]
fn empty_candidates_give_empty_graph() {
    let ds = var_dataset(300, 1, 4);
    let cfg = DiscoveryConfig::default();
    let g = mci_validate(&ds, &vec![Vec::new(); 3], &cfg).unwrap();
    assert!(g.edges.is_empty());
}

#[test]
fn null_edge_rate_is_calibrated() {
    let mut hits = 0;
    let runs = 30;
    for seed in 0..runs {
        let cols = (0..3)
            .map(|k| (format!("n{k}"), normals(1000, 1000 * seed + k)))
            .collect();
        let ds = to_dataset(cols, 1.0).unwrap();
        hits += run_pcmci(&ds, &DiscoveryConfig::default())
            .unwrap()
            .edges
            .len();
    }
    // nine candidate links per dataset
    let rate = hits as f64 / (9 * runs) as f64;
    assert!(rate <= 0.07, "{rate}");
}

#[test]
fn gpdc_recovers_nonlinear_link() {
    let n = 300;
    let e = normals(2 * n, 8);
    let x: Vec<f64> = e[..n].to_vec();
    let mut y = vec![0.0; n];
    for t in 1..n {
        y[t] = x[t - 1] * x[t - 1] + 0.3 * e[n + t];
    }
    let ds = to_dataset(vec![("x".into(), x), ("y".into(), y)], 1.0).unwrap();
    let cfg = DiscoveryConfig {
        test: CiTest::Gpdc,
        permutations: 200,
        ..Default::default()
    };
    let g = run_pcmci(&ds, &cfg).unwrap();
    assert!(g.contains("x", 1, "y"));
    assert!(!g.contains("y", 1, "x"));
}

#[test]
fn constant_column_and_short_series_rejected() {
    assert!(to_dataset(vec![("c".into(), vec![1.0; 50])], 1.0).is_err());
    let ds = var_dataset(20, 1, 0);
    let err = run_pcmci(&ds, &DiscoveryConfig::default()).unwrap_err();
    assert!(err.to_string().contains("insufficient"), "{err}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn graph_json_round_trip_and_p_values_bounded(seed in 0u64..1000) {
        let ds = var_dataset(400, 1, seed);
        let g = run_pcmci(&ds, &DiscoveryConfig::default()).unwrap();
        for e in &g.edges {
            prop_assert!((0.0..=0.05).contains(&e.p_value));
            prop_assert!(e.statistic.abs() <= 1.0);
            prop_assert!(e.source.lag >= 1 && e.source.lag <= g.tau_max);
        }
        let back = CausalGraph::from_json(&g.to_json().unwrap()).unwrap();
        prop_assert_eq!(back.edge_set(), g.edge_set());
        for (a, b) in back.edges.iter().zip(&g.edges) {
            prop_assert!(a.statistic == b.statistic && a.p_value == b.p_value);
        }
        // a stricter level never adds edges
        prop_assert!(g.filter_alpha(0.01).edge_set().is_subset(&g.edge_set()));
    }
}
