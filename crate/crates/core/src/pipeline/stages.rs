use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{debug, info};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    DatasetInput, FileDigest, InputSource, Manifest, PipelineConfig, Scenario, FEATURES_CSV,
    GRAPH_DOT, GRAPH_JSON, GROUND_TRUTH_JSON, KEPT_INDICES_CSV, MANIFEST_JSON, PREDICTIONS_CSV,
    REPORT_CSV, REPORT_JSON, SUBSAMPLED_CSV, TRACKS_CSV,
};
use crate::discovery::{run_pcmci, CausalGraph};
use crate::features::{assign_goals, entropy_subsample, goal_features};
use crate::gpr::{benchmark, write_predictions_csv, PredictionReport};
use crate::simulator::{simulate_human_goal, simulate_moving_obstacles, SimulationOutput};
use crate::timeseries::{
    differentiate, load_tracks, resample_track, split_at_gaps, to_dataset, TimeSeriesDataset,
    Track, TrackSet,
};
use crate::vo::{risk, AgentDisc};
use crate::{Error, Result};

/// One executed stage: hashed inputs and outputs plus a small summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub summary: BTreeMap<String, Value>,
}

struct StageBuilder<'a> {
    root: &'a Path,
    record: StageRecord,
}

impl<'a> StageBuilder<'a> {
    fn new(stage: &str, root: &'a Path) -> Self {
        StageBuilder {
            root,
            record: StageRecord {
                stage: stage.to_string(),
                inputs: Vec::new(),
                outputs: Vec::new(),
                summary: BTreeMap::new(),
            },
        }
    }

    fn input(&mut self, path: &Path) -> Result<()> {
        self.record.inputs.push(FileDigest::of(path, self.root)?);
        Ok(())
    }

    fn output(&mut self, path: &Path) -> Result<()> {
        self.record.outputs.push(FileDigest::of(path, self.root)?);
        Ok(())
    }

    fn note(&mut self, key: &str, value: Value) {
        self.record.summary.insert(key.to_string(), value);
    }
}

fn staged<T>(stage: &str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    f().map_err(|e| match e {
        e @ Error::Stage { .. } => e,
        e => Error::Stage {
            stage: stage.to_string(),
            source: Box::new(e),
        },
    })
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingInput(format!(
            "{} not found; {hint}",
            path.display()
        )))
    }
}

fn simulate(cfg: &PipelineConfig) -> Result<SimulationOutput> {
    let InputSource::Simulator { simulation } = &cfg.input else {
        return Err(Error::Config(
            "simulate needs `input.source = simulator`".into(),
        ));
    };
    match cfg.scenario {
        Scenario::HumanGoal => simulate_human_goal(&simulation.agent),
        Scenario::MovingObstacles => simulate_moving_obstacles(simulation),
    }
}

/// Simulate, write `tracks.csv` and `ground_truth.json`, then the features.
pub fn run_simulate(cfg: &PipelineConfig, out: &Path) -> Result<Vec<StageRecord>> {
    let sim = staged("simulate", || {
        cfg.validate()?;
        ensure_dir(out)?;
        simulate(cfg)
    })?;
    let sim_record = staged("simulate", || {
        let mut st = StageBuilder::new("simulate", out);
        let tracks = out.join(TRACKS_CSV);
        sim.tracks.write_csv(&tracks)?;
        let truth = out.join(GROUND_TRUTH_JSON);
        sim.ground_truth.write_json(&truth)?;
        st.output(&tracks)?;
        st.output(&truth)?;
        st.note("steps", json!(sim.series.len()));
        st.note("goal_switches", json!(sim.switch_steps.len()));
        info!(
            "simulated {} steps, {} goal switches",
            sim.series.len(),
            sim.switch_steps.len()
        );
        Ok(st.record)
    })?;
    let features = staged("features", || {
        let mut st = StageBuilder::new("features", out);
        st.input(&out.join(TRACKS_CSV))?;
        let ds = sim.dataset()?;
        write_features(&mut st, &ds, &out.join(FEATURES_CSV))?;
        Ok(st.record)
    })?;
    Ok(vec![sim_record, features])
}

fn write_features(st: &mut StageBuilder, ds: &TimeSeriesDataset, path: &Path) -> Result<()> {
    ds.write_csv(path)?;
    // read back: checks the file parses and no column became constant
    let back = TimeSeriesDataset::read_csv(path)?;
    if back.len() != ds.len() || back.names() != ds.names() {
        return Err(Error::Degenerate(format!(
            "{} does not round-trip",
            path.display()
        )));
    }
    st.output(path)?;
    st.note("rows", json!(ds.len()));
    st.note("variables", json!(ds.names()));
    info!("wrote {} rows of {:?}", ds.len(), ds.names());
    Ok(())
}

/// The agent track of a recorded scene: the configured id, else the agent
/// with most samples; longest gap-free segment, resampled and differentiated.
fn select_agent(tracks: &TrackSet, input: &DatasetInput, dt: f64) -> Result<Track> {
    let raw = match &input.agent {
        Some(id) => tracks
            .get(id)
            .ok_or_else(|| Error::Config(format!("agent `{id}` not found in dataset")))?,
        None => tracks
            .tracks
            .iter()
            .max_by_key(|t| t.len())
            .ok_or(Error::Empty)?,
    };
    let segment = split_at_gaps(raw, 5.0 * dt)
        .into_iter()
        .max_by(|a, b| a.duration().total_cmp(&b.duration()))
        .ok_or(Error::Empty)?;
    debug!(
        "agent {}: {} samples, longest segment {:.1} s",
        raw.agent_id,
        raw.len(),
        segment.duration()
    );
    differentiate(&resample_track(&segment, dt)?)
}

/// Scenario variables of `agent` (already resampled and differentiated),
/// with collision risk against every other track for the moving-obstacle
/// scenario.
pub fn extract_features(
    agent: &Track,
    others: &[&Track],
    scenario: Scenario,
    input: &DatasetInput,
    dt: f64,
) -> Result<TimeSeriesDataset> {
    let assignment = assign_goals(agent, &input.goals)?;
    let series = goal_features(agent, &assignment, &input.goals)?;
    match scenario {
        Scenario::HumanGoal => to_dataset(
            vec![
                ("theta_g".into(), series.theta_g),
                ("d_g".into(), series.d_g),
                ("v".into(), series.v),
            ],
            dt,
        ),
        Scenario::MovingObstacles => {
            let kin = agent.kinematics.as_ref().ok_or(Error::NotDifferentiated)?;
            let risk_series = agent
                .samples
                .iter()
                .zip(kin)
                .map(|(s, k)| {
                    let disc = AgentDisc::new([s.x, s.y], [k.vx, k.vy], input.agent_radius);
                    let obstacles: Vec<AgentDisc> = others
                        .iter()
                        .filter_map(|o| {
                            let (x, y) = o.position_at(s.t)?;
                            let (px, py) = o.position_at(s.t - dt)?;
                            Some(AgentDisc::new(
                                [x, y],
                                [(x - px) / dt, (y - py) / dt],
                                input.obstacle_radius,
                            ))
                        })
                        .collect();
                    risk(&disc, &obstacles).risk
                })
                .collect();
            to_dataset(
                vec![
                    ("d_g".into(), series.d_g),
                    ("v".into(), series.v),
                    ("risk".into(), risk_series),
                ],
                dt,
            )
        }
    }
}

/// Load a recorded log, write the normalized `tracks.csv`, then the features.
pub fn run_ingest(cfg: &PipelineConfig, out: &Path) -> Result<Vec<StageRecord>> {
    let InputSource::Dataset(input) = &cfg.input else {
        return Err(Error::Stage {
            stage: "ingest".into(),
            source: Box::new(Error::Config(
                "ingest needs `input.source = dataset`".into(),
            )),
        });
    };
    let (tracks, ingest) = staged("ingest", || {
        cfg.validate()?;
        ensure_dir(out)?;
        let mut st = StageBuilder::new("ingest", out);
        let tracks = load_tracks(&input.path, &input.schema)?;
        st.input(&input.path)?;
        let path = out.join(TRACKS_CSV);
        tracks.write_csv(&path)?;
        st.output(&path)?;
        st.note("agents", json!(tracks.tracks.len()));
        st.note("samples", json!(tracks.total_samples()));
        info!(
            "loaded {} agents, {} samples from {}",
            tracks.tracks.len(),
            tracks.total_samples(),
            input.path.display()
        );
        Ok((tracks, st.record))
    })?;
    let features = staged("features", || {
        let mut st = StageBuilder::new("features", out);
        st.input(&out.join(TRACKS_CSV))?;
        let agent = select_agent(&tracks, input, cfg.resample_dt)?;
        let others: Vec<&Track> = tracks
            .tracks
            .iter()
            .filter(|t| t.agent_id != agent.agent_id)
            .collect();
        let ds = extract_features(&agent, &others, cfg.scenario, input, cfg.resample_dt)?;
        st.note("agent", json!(agent.agent_id));
        write_features(&mut st, &ds, &out.join(FEATURES_CSV))?;
        Ok(st.record)
    })?;
    Ok(vec![ingest, features])
}

fn features_path(out: &Path) -> Result<PathBuf> {
    let path = out.join(FEATURES_CSV);
    require(&path, "run simulate or ingest first")?;
    Ok(path)
}

/// Entropy subsampling of `features.csv`; requires a `subsample` section.
pub fn run_subsample(cfg: &PipelineConfig, out: &Path) -> Result<StageRecord> {
    staged("subsample", || {
        let Some(sub) = &cfg.subsample else {
            return Err(Error::Config("no `subsample` section in config".into()));
        };
        sub.validate()?;
        let mut st = StageBuilder::new("subsample", out);
        let path = features_path(out)?;
        let ds = TimeSeriesDataset::read_csv(&path)?;
        st.input(&path)?;
        let (kept_ds, kept) = entropy_subsample(&ds, sub)?;
        let idx_path = out.join(KEPT_INDICES_CSV);
        let mut w = csv::Writer::from_path(&idx_path)?;
        w.write_record(["index"])?;
        for k in &kept {
            w.write_record([k.to_string()])?;
        }
        w.flush().map_err(|e| Error::io(&idx_path, e))?;
        st.output(&idx_path)?;
        let sub_path = out.join(SUBSAMPLED_CSV);
        kept_ds.write_csv(&sub_path)?;
        TimeSeriesDataset::read_csv(&sub_path)?;
        st.output(&sub_path)?;
        st.note("rows_in", json!(ds.len()));
        st.note("rows_kept", json!(kept.len()));
        info!("subsampled {} -> {} rows", ds.len(), kept.len());
        Ok(st.record)
    })
}

/// PCMCI on the (subsampled, if configured) features.
pub fn run_discover(cfg: &PipelineConfig, out: &Path) -> Result<StageRecord> {
    staged("discover", || {
        cfg.validate()?;
        let mut st = StageBuilder::new("discover", out);
        let path = if cfg.subsample.is_some() {
            let p = out.join(SUBSAMPLED_CSV);
            require(&p, "run subsample first")?;
            p
        } else {
            features_path(out)?
        };
        let ds = TimeSeriesDataset::read_csv(&path)?;
        st.input(&path)?;
        let d = &cfg.discovery;
        info!(
            "discovery: alpha={} tau_max={} test={} seed={}",
            d.alpha,
            d.tau_max,
            d.test.name(),
            d.seed
        );
        let graph = run_pcmci(&ds, d)?;
        let json_path = out.join(GRAPH_JSON);
        graph.write_json(&json_path)?;
        CausalGraph::read_json(&json_path)?;
        let dot_path = out.join(GRAPH_DOT);
        std::fs::write(&dot_path, graph.to_dot()).map_err(|e| Error::io(&dot_path, e))?;
        st.output(&json_path)?;
        st.output(&dot_path)?;
        st.note("alpha", json!(d.alpha));
        st.note("tau_max", json!(d.tau_max));
        st.note("test", json!(d.test.name()));
        st.note("seed", json!(d.seed));
        st.note("edges", json!(graph.edges.len()));
        for (s, lag, t) in graph.edge_set() {
            debug!("edge {s}(t-{lag}) -> {t}");
        }
        info!("{} edges", graph.edges.len());
        Ok(st.record)
    })
}

/// Causal-vs-full GP benchmark on the full-rate features.
pub fn run_predict(cfg: &PipelineConfig, out: &Path) -> Result<StageRecord> {
    staged("predict", || {
        cfg.validate()?;
        let mut st = StageBuilder::new("predict", out);
        let path = features_path(out)?;
        let graph_path = out.join(GRAPH_JSON);
        require(&graph_path, "run discover first")?;
        let ds = TimeSeriesDataset::read_csv(&path)?;
        let graph = CausalGraph::read_json(&graph_path)?;
        st.input(&path)?;
        st.input(&graph_path)?;
        let result = benchmark(&ds, &graph, graph.tau_max, cfg.split, &cfg.kernel)?;
        let report = &result.report;
        let csv_path = out.join(REPORT_CSV);
        report.write_csv(&csv_path)?;
        let json_path = out.join(REPORT_JSON);
        report.write_json(&json_path)?;
        let pred_path = out.join(PREDICTIONS_CSV);
        write_predictions_csv(&result.predictions, &pred_path)?;
        validate_report(&csv_path, &json_path, &pred_path, ds.n_vars())?;
        st.output(&csv_path)?;
        st.output(&json_path)?;
        st.output(&pred_path)?;
        st.note("mean_causal_nmae", json!(report.mean_causal_nmae));
        st.note("mean_full_nmae", json!(report.mean_full_nmae));
        for v in &report.variables {
            info!(
                "{}: causal NMAE {:.5}, full NMAE {:.5}",
                v.variable, v.causal_nmae, v.full_nmae
            );
        }
        Ok(st.record)
    })
}

/// Schema checks on the prediction artifacts.
fn validate_report(
    csv_path: &Path,
    json_path: &Path,
    pred_path: &Path,
    n_vars: usize,
) -> Result<()> {
    let bad = |what: String| Error::Degenerate(what);
    let mut r = csv::Reader::from_path(csv_path)?;
    if r.headers()?.iter().collect::<Vec<_>>() != ["variable", "mode", "nmae"] {
        return Err(bad(format!("{}: unexpected header", csv_path.display())));
    }
    let mut rows = 0;
    for rec in r.records() {
        let rec = rec?;
        let ok = matches!(rec.get(1), Some("causal" | "full"))
            && rec
                .get(2)
                .and_then(|v| v.parse::<f64>().ok())
                .is_some_and(f64::is_finite);
        if !ok {
            return Err(bad(format!("{}: malformed row {rows}", csv_path.display())));
        }
        rows += 1;
    }
    if rows != 2 * n_vars + 2 {
        return Err(bad(format!(
            "{}: {rows} rows, expected {}",
            csv_path.display(),
            2 * n_vars + 2
        )));
    }
    let text = std::fs::read_to_string(json_path).map_err(|e| Error::io(json_path, e))?;
    let _: PredictionReport = serde_json::from_str(&text)?;
    let mut p = csv::Reader::from_path(pred_path)?;
    if p.headers()?.iter().collect::<Vec<_>>() != ["t", "variable", "actual", "causal", "full"] {
        return Err(bad(format!("{}: unexpected header", pred_path.display())));
    }
    Ok(())
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Every stage in order, stopping at the first failure; writes
/// `manifest.json` on success.
pub fn run_pipeline(cfg: &PipelineConfig, out: &Path) -> Result<Manifest> {
    staged("config", || cfg.validate())?;
    let mut stages = match cfg.input {
        InputSource::Simulator { .. } => run_simulate(cfg, out)?,
        InputSource::Dataset(_) => run_ingest(cfg, out)?,
    };
    if cfg.subsample.is_some() {
        stages.push(run_subsample(cfg, out)?);
    }
    stages.push(run_discover(cfg, out)?);
    stages.push(run_predict(cfg, out)?);
    // every recorded output must still hash to what its stage wrote
    for rec in &stages {
        for f in &rec.outputs {
            let now = FileDigest::of(&out.join(&f.path), out)?;
            if now.sha256 != f.sha256 {
                return Err(Error::Degenerate(format!(
                    "{} changed during the run",
                    f.path
                )));
            }
        }
    }
    let manifest = Manifest {
        config_hash: cfg.hash()?,
        scenario: cfg.scenario,
        stages,
        created_unix: unix_now(),
    };
    manifest.write(&out.join(MANIFEST_JSON))?;
    info!("manifest written to {}", out.join(MANIFEST_JSON).display());
    Ok(manifest)
}
