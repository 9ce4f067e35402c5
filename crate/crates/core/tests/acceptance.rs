//! Acceptance report: one PASS/FAIL line per criterion at the stated
//! tolerances. The process exits non-zero only if a check cannot run at
//! all; a FAIL line is a measured result, not a crash.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use common::{dense_posterior, normals, pearson, ray_distances, residuals, to_matrix, uniforms};
use hsi_causal::discovery::{
    distance_correlation, gpdc_test, parcorr_test, run_pcmci, DiscoveryConfig,
};
use hsi_causal::features::GoalSet;
use hsi_causal::gpr::{benchmark, gpr_fit, gpr_predict, nmae, KernelConfig, KernelParams};
use hsi_causal::pipeline::{run_pipeline, DatasetInput, InputSource, PipelineConfig, Scenario};
use hsi_causal::simulator::{
    simulate_human_goal, simulate_moving_obstacles, HumanGoalSimConfig, MovingObstacleSimConfig,
};
use hsi_causal::timeseries::{to_dataset, SchemaConfig};
use hsi_causal::vo::{build_vo, collision_oracle, evaluate_vo, risk, AgentDisc};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEEDS: u64 = 25;

struct Report {
    passed: usize,
    total: usize,
}

impl Report {
    fn line(&mut self, name: &str, ok: bool, detail: String) {
        self.total += 1;
        self.passed += ok as usize;
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
    }
}

type EdgeSet = std::collections::BTreeSet<(String, usize, String)>;

fn fmt_edges(edges: &EdgeSet) -> String {
    edges
        .iter()
        .map(|(s, l, t)| format!("{s}(-{l})->{t}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Exact-recovery rate plus per-edge hit counts and spurious edges.
fn recovery(
    name: &str,
    report: &mut Report,
    simulate: impl Fn(u64) -> hsi_causal::simulator::SimulationOutput,
) {
    let cfg = DiscoveryConfig::default();
    let mut exact = 0;
    let mut worst = 0.0f64;
    let mut hits: BTreeMap<String, usize> = BTreeMap::new();
    let mut spurious: BTreeMap<String, usize> = BTreeMap::new();
    let mut truth = EdgeSet::new();
    for seed in 0..SEEDS {
        let start = Instant::now();
        let sim = simulate(seed);
        let graph = run_pcmci(&sim.dataset().unwrap(), &cfg).unwrap();
        worst = worst.max(start.elapsed().as_secs_f64());
        truth = sim.ground_truth.edge_set();
        let found = graph.edge_set();
        exact += (found == truth) as usize;
        for e in &truth {
            *hits.entry(fmt_edges(&[e.clone()].into())).or_default() += found.contains(e) as usize;
        }
        for e in found.difference(&truth) {
            *spurious.entry(fmt_edges(&[e.clone()].into())).or_default() += 1;
        }
    }
    let rate = exact as f64 / SEEDS as f64;
    let per_edge: Vec<String> = hits
        .iter()
        .map(|(e, n)| format!("{e} {n}/{SEEDS}"))
        .collect();
    let extra: Vec<String> = spurious
        .iter()
        .map(|(e, n)| format!("{e} {n}/{SEEDS}"))
        .collect();
    report.line(
        name,
        rate >= 0.8 && worst < 60.0,
        format!(
            "exact {exact}/{SEEDS} ({:.0}%, need >= 80%); slowest seed {worst:.2} s (< 60 s); truth [{}]; per-edge [{}]; spurious [{}]",
            100.0 * rate,
            fmt_edges(&truth),
            per_edge.join(", "),
            if extra.is_empty() { "none".into() } else { extra.join(", ") }
        ),
    );
}

fn null_calibration(report: &mut Report) {
    let cfg = DiscoveryConfig::default();
    let mut per_link: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let runs = 100;
    for seed in 0..runs {
        let cols = (0..3)
            .map(|k| (format!("n{k}"), normals(1000, 7919 * seed + k)))
            .collect();
        let g = run_pcmci(&to_dataset(cols, 1.0).unwrap(), &cfg).unwrap();
        for e in &g.edges {
            *per_link.entry((e.source.var, e.target)).or_default() += 1;
        }
    }
    let total: usize = per_link.values().sum();
    let rate = total as f64 / (9 * runs) as f64;
    let max_link = per_link.values().copied().max().unwrap_or(0) as f64 / runs as f64;
    report.line(
        "null calibration",
        rate <= 0.07,
        format!("edge rate per link {rate:.4} over 9 links x {runs} datasets (need <= 0.07); highest single link {max_link:.2}"),
    )
}

fn prediction_direction(report: &mut Report) {
    let mut better = 0;
    let mut equal_targets = 0;
    let mut max_gap = 0.0f64;
    let mut means = Vec::new();
    for seed in 0..SEEDS {
        let sim = simulate_human_goal(&HumanGoalSimConfig {
            seed,
            ..Default::default()
        })
        .unwrap();
        let ds = sim.dataset().unwrap();
        let cfg = DiscoveryConfig {
            seed,
            ..Default::default()
        };
        let graph = run_pcmci(&ds, &cfg).unwrap();
        let out = benchmark(&ds, &graph, cfg.tau_max, 0.8, &KernelConfig::default()).unwrap();
        let r = &out.report;
        better += (r.mean_causal_nmae <= r.mean_full_nmae) as usize;
        means.push((r.mean_causal_nmae, r.mean_full_nmae));
        for v in r
            .variables
            .iter()
            .filter(|v| v.causal_features == v.full_features)
        {
            equal_targets += 1;
            max_gap = max_gap.max((v.causal_nmae - v.full_nmae).abs());
        }
    }
    let n = means.len() as f64;
    let (mc, mf) = means
        .iter()
        .fold((0.0, 0.0), |a, m| (a.0 + m.0 / n, a.1 + m.1 / n));
    let rate = better as f64 / SEEDS as f64;
    report.line(
        "prediction direction",
        rate >= 0.8 && equal_targets > 0 && max_gap <= 1e-12,
        format!(
            "causal <= full on {better}/{SEEDS} seeds (need >= 80%); seed-averaged mean NMAE causal {mc:.5} vs full {mf:.5}; {equal_targets} full-parent targets, max |causal - full| {max_gap:e} (need <= 1e-12)"
        ),
    );
}

fn nmae_oracle(report: &mut Report) {
    let hand = nmae(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
    let y: Vec<f64> = normals(50, 3).iter().map(|v| v + 4.0).collect();
    let same = nmae(&y, &y).unwrap();
    let mut worst = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for k in 0..100 {
        let a: Vec<f64> = normals(40, 100 + k).iter().map(|v| v + 2.0).collect();
        let p: Vec<f64> = normals(40, 300 + k).iter().map(|v| v + 2.0).collect();
        let c: f64 = rng.random_range(0.01..100.0);
        let scaled = nmae(
            &a.iter().map(|v| c * v).collect::<Vec<_>>(),
            &p.iter().map(|v| c * v).collect::<Vec<_>>(),
        )
        .unwrap();
        worst = worst.max((scaled - nmae(&a, &p).unwrap()).abs());
    }
    report.line(
        "NMAE oracle",
        hand == 1.0 / 3.0 && same == 0.0 && worst <= 1e-12,
        format!("hand case {hand} (exact 1/3: {}), nmae(y,y) = {same}, max scale deviation {worst:e} over 100 pairs", hand == 1.0 / 3.0),
    );
}

fn gpr_oracle(report: &mut Report) {
    let mut worst = 0.0f64;
    for seed in 0..50u64 {
        let u = uniforms(60, 500 + seed);
        let x: Vec<[f64; 2]> = (0..20)
            .map(|i| [4.0 * u[2 * i] - 2.0, 4.0 * u[2 * i + 1] - 2.0])
            .collect();
        let xq: Vec<[f64; 2]> = (20..30)
            .map(|i| [4.0 * u[2 * i] - 2.0, 4.0 * u[2 * i + 1] - 2.0])
            .collect();
        let y: Vec<f64> = normals(20, seed)
            .iter()
            .zip(&x)
            .map(|(e, p)| p[0] * p[1] + 0.2 * e)
            .collect();
        let params = KernelParams::new(vec![0.5 + u[58], 0.5 + u[59]], 1.2, 0.02);
        let model = gpr_fit(
            &to_matrix(&x),
            &DVector::from_vec(y.clone()),
            &KernelConfig::fixed(params.clone()),
        )
        .unwrap();
        let pred = gpr_predict(&model, &to_matrix(&xq)).unwrap();
        let (mean, var, _) = dense_posterior(&x, &y, &xq, &params, model.jitter());
        for i in 0..xq.len() {
            worst = worst.max((pred.mean[i] - mean[i]).abs());
            worst = worst.max((pred.variance[i] - var[i].max(0.0)).abs());
        }
    }
    let mut cfg = KernelConfig::fixed(KernelParams::new(vec![1.0], 1.0, 0.0));
    cfg.jitter = 0.0;
    let one = gpr_fit(
        &DMatrix::from_element(1, 1, 0.0),
        &DVector::from_element(1, 1.0),
        &cfg,
    )
    .unwrap();
    let p = gpr_predict(&one, &DMatrix::from_element(1, 1, 1.0)).unwrap();
    let dm = (p.mean[0] - (-0.5f64).exp()).abs();
    let dv = (p.variance[0] - (1.0 - (-1.0f64).exp())).abs();
    report.line(
        "GPR oracle",
        worst <= 1e-8 && dm <= 1e-9 && dv <= 1e-9,
        format!("max deviation from dense oracle {worst:e} over 50 problems (<= 1e-8); one-point mean err {dm:e}, variance err {dv:e} (<= 1e-9)"),
    );
}

fn vo_oracle(report: &mut Report) {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    let mut n = 0;
    while n < 1000 {
        let disc = |rng: &mut ChaCha8Rng| {
            AgentDisc::new(
                [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)],
                [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)],
                rng.random_range(0.1..0.5),
            )
        };
        let (a, b) = (disc(&mut rng), disc(&mut rng));
        let Ok(vo) = build_vo(&a, &b) else { continue };
        n += 1;
        agree +=
            (evaluate_vo(&vo, a.velocity).inside == collision_oracle(&a, &b, 20.0, 2000)) as usize;
    }
    let mut worst = 0.0f64;
    for &dist in &[1.0, 2.0, 4.0] {
        for &r in &[0.1, 0.25] {
            let vo = build_vo(
                &AgentDisc::new([0.0, 0.0], [0.0, 0.0], r),
                &AgentDisc::new([dist, 0.0], [0.0, 0.0], r),
            )
            .unwrap();
            let alpha = (2.0 * r / dist).asin();
            for &(vx, frac) in &[(0.5, 0.0), (1.0, 0.0), (1.0, 0.5), (2.0, -0.8)] {
                let p = [vx, frac * vx * alpha.tan()];
                let e = evaluate_vo(&vo, p);
                worst = worst.max((e.d_op - p[0].hypot(p[1])).abs());
                worst = worst.max((e.d_bp - ray_distances(p, alpha)).abs());
            }
        }
    }
    report.line(
        "VO oracle",
        agree >= 990 && worst <= 1e-9,
        format!("inside agrees with rollout on {agree}/1000 (need >= 990); max closed-form deviation {worst:e} (<= 1e-9)"),
    );
}

fn risk_branch(report: &mut Report) {
    let mut exact = true;
    for &v in &[0.0, 0.3, 1.0, 1.7] {
        let agent = AgentDisc::new([0.0, 0.0], [v, 0.0], 0.25);
        let behind = AgentDisc::new([-3.0, 0.5], [0.0, 0.0], 0.25);
        exact &= risk(&agent, &[]).risk == v.exp() && risk(&agent, &[behind]).risk == v.exp();
    }
    let agent = AgentDisc::new([0.0, 0.0], [1.0, 0.0], 0.25);
    let obstacle = AgentDisc::new([2.0, 0.0], [0.0, 0.0], 0.25);
    // geometry oracle: d_OP = |v_a| = 1, d_BP = |v_a| sin(asin(0.5 / 2))
    let oracle = (1.0 + (0.25f64).asin().sin() + 1.0f64).exp();
    let got = risk(&agent, &[obstacle]).risk;
    let err = (got - oracle).abs();
    report.line(
        "risk branch",
        exact && err <= 1e-6,
        format!(
            "no-interaction risk == exp(v) exactly: {exact}; inside-cone risk {got:.6} vs geometry oracle {oracle:.6} (err {err:e}, <= 1e-6); nominal e^2.2503 = {:.6}",
            2.2503f64.exp()
        ),
    );
}

fn ci_oracles(report: &mut Report) {
    let z = normals(2000, 1);
    let x: Vec<f64> = z.iter().zip(normals(2000, 2)).map(|(a, b)| a + b).collect();
    let y: Vec<f64> = z.iter().zip(normals(2000, 3)).map(|(a, b)| a + b).collect();
    let pc = parcorr_test(&x, &y, &[&z]).unwrap();
    let pc_err = (pc.statistic - pearson(&residuals(&x, &z), &residuals(&y, &z))).abs();

    let a = normals(300, 4);
    let b: Vec<f64> = a.iter().map(|v| 2.0 * v + 3.0).collect();
    let affine_err = (distance_correlation(&a, &b).unwrap() - 1.0).abs();
    let hand_err = (distance_correlation(&[0.0, 1.0, 2.0, 3.0], &[0.0, 1.0, 0.0, 1.0]).unwrap()
        - 13f64.powf(-0.25))
    .abs();

    let perms = DiscoveryConfig::default().permutations;
    let sx: Vec<f64> = uniforms(300, 5).iter().map(|u| 2.0 * u - 1.0).collect();
    let sy: Vec<f64> = sx.iter().map(|v| v * v).collect();
    let square = gpdc_test(&sx, &sy, &[], perms, 0).unwrap();
    let null_p: f64 = (0..100)
        .map(|s| {
            gpdc_test(
                &uniforms(300, 1000 + s),
                &uniforms(300, 2000 + s),
                &[],
                perms,
                s,
            )
            .unwrap()
            .p_value
        })
        .sum::<f64>()
        / 100.0;
    report.line(
        "CI-test oracles",
        pc_err <= 1e-10 && affine_err <= 1e-9 && hand_err <= 1e-12 && square.p_value < 0.05 && null_p > 0.3,
        format!(
            "parcorr err {pc_err:e} (<= 1e-10); dcor affine err {affine_err:e} (<= 1e-9); n=4 hand err {hand_err:e} (<= 1e-12); GPDC y=x^2 p {:.4} (< 0.05); GPDC null mean p {null_p:.3} over 100 seeds (> 0.3)",
            square.p_value
        ),
    );
}

fn determinism(report: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = PipelineConfig::synthetic(Scenario::HumanGoal);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&cfg, &a).unwrap();
    run_pipeline(&cfg, &b).unwrap();
    let files = [
        "graph.json",
        "graph.dot",
        "report.csv",
        "report.json",
        "predictions.csv",
    ];
    let same: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| std::fs::read(a.join(f)).unwrap() == std::fs::read(b.join(f)).unwrap())
        .collect();
    report.line(
        "determinism",
        same.len() == files.len(),
        format!(
            "{}/{} artifacts byte-identical across two runs ({})",
            same.len(),
            files.len(),
            same.join(", ")
        ),
    );
}

fn adapter_case(
    dir: &Path,
    name: &str,
    scenario: Scenario,
    schema: SchemaConfig,
    write: fn(&hsi_causal::timeseries::TrackSet, &Path),
) -> Result<String, String> {
    let mut sim_cfg = MovingObstacleSimConfig::default();
    sim_cfg.agent.seed = 3;
    let tracks = match scenario {
        Scenario::HumanGoal => simulate_human_goal(&sim_cfg.agent).unwrap().tracks,
        Scenario::MovingObstacles => simulate_moving_obstacles(&sim_cfg).unwrap().tracks,
    };
    let path = dir.join(format!("{name}.csv"));
    write(&tracks, &path);
    let cfg = PipelineConfig {
        input: InputSource::Dataset(DatasetInput {
            path,
            schema,
            agent: None,
            goals: GoalSet::new(sim_cfg.agent.goals.goals.clone(), 0.3),
            agent_radius: 0.3,
            obstacle_radius: 0.3,
        }),
        ..PipelineConfig::synthetic(scenario)
    };
    let out = dir.join(format!("{name}_out"));
    let manifest = run_pipeline(&cfg, &out).map_err(|e| format!("{name}: {e}"))?;
    let report = std::fs::read_to_string(out.join("report.csv")).map_err(|e| e.to_string())?;
    let rows = report.lines().count() - 1;
    let header_ok = report.starts_with("variable,mode,nmae\n");
    let json_ok = serde_json::from_str::<serde_json::Value>(
        &std::fs::read_to_string(out.join("report.json")).unwrap(),
    )
    .is_ok();
    if !(header_ok && json_ok && rows == 2 * 3 + 2) {
        return Err(format!("{name}: report schema invalid ({rows} rows)"));
    }
    Ok(format!(
        "{name}: {} stages, {rows} report rows",
        manifest.stages.len()
    ))
}

fn adapters(report: &mut Report) {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        adapter_case(
            dir.path(),
            "atc_human_goal",
            Scenario::HumanGoal,
            SchemaConfig::atc(),
            common::write_atc,
        ),
        adapter_case(
            dir.path(),
            "thor_moving_obstacles",
            Scenario::MovingObstacles,
            SchemaConfig::thor(),
            common::write_thor,
        ),
    ];
    let ok = cases.iter().all(Result::is_ok);
    let detail: Vec<String> = cases.into_iter().map(|c| c.unwrap_or_else(|e| e)).collect();
    report.line("dataset adapter path", ok, detail.join("; "));
}

fn main() {
    let mut report = Report {
        passed: 0,
        total: 0,
    };
    let start = Instant::now();
    recovery("graph recovery, human-goal", &mut report, |seed| {
        simulate_human_goal(&HumanGoalSimConfig {
            seed,
            ..Default::default()
        })
        .unwrap()
    });
    recovery("graph recovery, moving obstacles", &mut report, |seed| {
        let mut cfg = MovingObstacleSimConfig::default();
        cfg.agent.seed = seed;
        simulate_moving_obstacles(&cfg).unwrap()
    });
    null_calibration(&mut report);
    prediction_direction(&mut report);
    nmae_oracle(&mut report);
    gpr_oracle(&mut report);
    vo_oracle(&mut report);
    risk_branch(&mut report);
    ci_oracles(&mut report);
    determinism(&mut report);
    adapters(&mut report);
    println!(
        "acceptance: {}/{} criteria pass ({:.0} s)",
        report.passed,
        report.total,
        start.elapsed().as_secs_f64()
    );
}
