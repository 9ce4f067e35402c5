//! Trajectory logs: loading, resampling onto a uniform grid, finite-difference
//! kinematics, and assembly of aligned variable columns.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{wrap_angle, Error, Result};

/// Speed below which the heading is carried over from the previous sample.
pub const STANDSTILL_SPEED: f64 = 1e-3;

/// Relative tolerance on step-size deviations for a grid to count as uniform.
const UNIFORM_GRID_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackSample {
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

/// Finite-difference kinematics attached to one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kinematics {
    pub vx: f64,
    pub vy: f64,
    pub speed: f64,
    /// Heading in `(-pi, pi]`.
    pub heading: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub agent_id: String,
    pub samples: Vec<TrackSample>,
    /// Present after [`differentiate`]; one entry per sample.
    pub kinematics: Option<Vec<Kinematics>>,
}

impl Track {
    pub fn new(agent_id: impl Into<String>, samples: Vec<TrackSample>) -> Self {
        Track {
            agent_id: agent_id.into(),
            samples,
            kinematics: None,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration(&self) -> f64 {
        match (self.samples.first(), self.samples.last()) {
            (Some(a), Some(b)) => b.t - a.t,
            _ => 0.0,
        }
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Linearly interpolated position at time `t`, `None` outside the
    /// recorded time range.
    pub fn position_at(&self, t: f64) -> Option<(f64, f64)> {
        let s = &self.samples;
        if s.is_empty() || t < s[0].t || t > s[s.len() - 1].t {
            return None;
        }
        let hi = s.partition_point(|p| p.t < t);
        if hi == 0 {
            return Some((s[0].x, s[0].y));
        }
        let (a, b) = (&s[hi - 1], &s[hi]);
        let w = (t - a.t) / (b.t - a.t);
        Some((a.x + (b.x - a.x) * w, a.y + (b.y - a.y) * w))
    }

    /// Uniform step of the track if every spacing agrees with the mean
    /// spacing to a relative tolerance.
    pub fn uniform_dt(&self) -> Option<f64> {
        if self.samples.len() < 2 {
            return None;
        }
        let dt = self.duration() / (self.samples.len() - 1) as f64;
        let uniform = self
            .samples
            .windows(2)
            .all(|w| ((w[1].t - w[0].t) - dt).abs() <= UNIFORM_GRID_TOL * dt);
        (uniform && dt > 0.0).then_some(dt)
    }
}

/// All tracks of a log, in order of first appearance of each agent.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackSet {
    pub tracks: Vec<Track>,
}

impl TrackSet {
    pub fn get(&self, agent_id: &str) -> Option<&Track> {
        self.tracks.iter().find(|t| t.agent_id == agent_id)
    }

    pub fn total_samples(&self) -> usize {
        self.tracks.iter().map(Track::len).sum()
    }

    /// Write `t,agent_id,x,y` rows with a header line, the layout read back by
    /// [`SchemaConfig::simulator`].
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "t,agent_id,x,y").map_err(io)?;
        // rows sorted by time, then by agent order
        let mut rows: Vec<(f64, usize, &TrackSample)> = self
            .tracks
            .iter()
            .enumerate()
            .flat_map(|(k, tr)| tr.samples.iter().map(move |s| (s.t, k, s)))
            .collect();
        rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (_, k, s) in rows {
            writeln!(w, "{},{},{},{}", s.t, self.tracks[k].agent_id, s.x, s.y).map_err(io)?;
        }
        w.flush().map_err(io)
    }
}

/// Column reference: zero-based index or header name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ColumnRef {
    Index(usize),
    Name(String),
}

fn default_scale() -> f64 {
    1.0
}

fn default_delimiter() -> char {
    ','
}

/// Maps the columns of a tracking log onto time, agent id, and position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaConfig {
    pub time: ColumnRef,
    pub agent: ColumnRef,
    pub x: ColumnRef,
    pub y: ColumnRef,
    /// Multiplier converting the time column to seconds.
    #[serde(default = "default_scale")]
    pub time_scale: f64,
    /// Multiplier converting positions to meters.
    #[serde(default = "default_scale")]
    pub position_scale: f64,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    #[serde(default)]
    pub has_header: bool,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            time: ColumnRef::Index(0),
            agent: ColumnRef::Index(1),
            x: ColumnRef::Index(2),
            y: ColumnRef::Index(3),
            time_scale: 1.0,
            position_scale: 1.0,
            delimiter: ',',
            has_header: false,
        }
    }
}

impl SchemaConfig {
    /// Layout written by [`TrackSet::write_csv`].
    pub fn simulator() -> Self {
        SchemaConfig {
            has_header: true,
            ..Default::default()
        }
    }

    /// ATC pedestrian logs: `time [s], person id, x [mm], y [mm], z [mm], ...`,
    /// no header.
    pub fn atc() -> Self {
        SchemaConfig {
            position_scale: 1e-3,
            ..Default::default()
        }
    }

    /// THÖR exports flattened to `time [s], agent id, x [mm], y [mm], z [mm]`
    /// with a header line.
    pub fn thor() -> Self {
        SchemaConfig {
            time: ColumnRef::Name("time".into()),
            agent: ColumnRef::Name("agent".into()),
            x: ColumnRef::Name("x".into()),
            y: ColumnRef::Name("y".into()),
            position_scale: 1e-3,
            has_header: true,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(Error::InvalidParameter("time_scale must be > 0".into()));
        }
        if !(self.position_scale > 0.0 && self.position_scale.is_finite()) {
            return Err(Error::InvalidParameter("position_scale must be > 0".into()));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::InvalidParameter("delimiter must be ASCII".into()));
        }
        let refs = [&self.time, &self.agent, &self.x, &self.y];
        for (i, a) in refs.iter().enumerate() {
            if refs[i + 1..].contains(a) {
                return Err(Error::InvalidParameter(format!(
                    "column {a:?} mapped more than once"
                )));
            }
            if matches!(a, ColumnRef::Name(_)) && !self.has_header {
                return Err(Error::InvalidParameter(
                    "named columns require has_header = true".into(),
                ));
            }
        }
        Ok(())
    }

    fn resolve(&self, headers: Option<&csv::StringRecord>) -> Result<[usize; 4]> {
        let idx = |c: &ColumnRef| -> Result<usize> {
            match c {
                ColumnRef::Index(i) => Ok(*i),
                ColumnRef::Name(n) => headers
                    .and_then(|h| h.iter().position(|f| f.trim() == n))
                    .ok_or_else(|| Error::InvalidParameter(format!("column `{n}` not in header"))),
            }
        };
        let cols = [
            idx(&self.time)?,
            idx(&self.agent)?,
            idx(&self.x)?,
            idx(&self.y)?,
        ];
        for i in 0..4 {
            if cols[i + 1..].contains(&cols[i]) {
                return Err(Error::InvalidParameter(format!(
                    "column {} mapped more than once",
                    cols[i]
                )));
            }
        }
        Ok(cols)
    }
}

/// Read a tracking log into one [`Track`] per agent, samples sorted by time
/// and converted to seconds and meters.
pub fn load_tracks(path: &Path, schema: &SchemaConfig) -> Result<TrackSet> {
    schema.validate()?;
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = if schema.has_header {
        Some(reader.headers()?.clone())
    } else {
        None
    };
    let [ti, ai, xi, yi] = schema.resolve(headers.as_ref())?;

    let mut order: Vec<String> = Vec::new();
    let mut by_agent: HashMap<String, Vec<TrackSample>> = HashMap::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let field = |i: usize, what: &str| -> Result<&str> {
            record.get(i).ok_or_else(|| Error::MalformedRow {
                line,
                reason: format!("missing {what} column {i}"),
            })
        };
        let num = |i: usize, what: &str| -> Result<f64> {
            let raw = field(i, what)?;
            let v: f64 = raw.parse().map_err(|_| Error::MalformedRow {
                line,
                reason: format!("{what} `{raw}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::MalformedRow {
                    line,
                    reason: format!("{what} is not finite"),
                });
            }
            Ok(v)
        };
        let t = num(ti, "time")? * schema.time_scale;
        let x = num(xi, "x")? * schema.position_scale;
        let y = num(yi, "y")? * schema.position_scale;
        let agent = field(ai, "agent")?.to_string();
        if agent.is_empty() {
            return Err(Error::MalformedRow {
                line,
                reason: "empty agent id".into(),
            });
        }
        by_agent
            .entry(agent.clone())
            .or_insert_with(|| {
                order.push(agent);
                Vec::new()
            })
            .push(TrackSample { t, x, y });
    }
    if order.is_empty() {
        return Err(Error::Empty);
    }

    let mut tracks = Vec::with_capacity(order.len());
    for agent in order {
        let mut samples = by_agent.remove(&agent).unwrap_or_default();
        samples.sort_by(|a, b| a.t.total_cmp(&b.t));
        if let Some(w) = samples.windows(2).find(|w| w[0].t == w[1].t) {
            return Err(Error::DuplicateSample { agent, t: w[0].t });
        }
        tracks.push(Track::new(agent, samples));
    }
    Ok(TrackSet { tracks })
}

/// Split a track wherever consecutive samples are more than `max_gap` apart.
pub fn split_at_gaps(track: &Track, max_gap: f64) -> Vec<Track> {
    let mut out = Vec::new();
    let mut current: Vec<TrackSample> = Vec::new();
    for s in &track.samples {
        if let Some(last) = current.last() {
            if s.t - last.t > max_gap {
                out.push(Track::new(
                    track.agent_id.clone(),
                    std::mem::take(&mut current),
                ));
            }
        }
        current.push(*s);
    }
    if !current.is_empty() {
        out.push(Track::new(track.agent_id.clone(), current));
    }
    out
}

/// Linear interpolation onto `t0, t0 + dt, ...` within the recorded range.
pub fn resample_track(track: &Track, target_dt: f64) -> Result<Track> {
    if !(target_dt > 0.0 && target_dt.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "target_dt must be > 0, got {target_dt}"
        )));
    }
    let s = &track.samples;
    if s.len() < 2 {
        return Err(Error::TrackTooShort(format!(
            "agent {} has {} sample(s)",
            track.agent_id,
            s.len()
        )));
    }
    let t0 = s[0].t;
    let span = s[s.len() - 1].t - t0;
    // slack so that a grid point landing on the final sample is not lost to rounding
    let steps = (span / target_dt + 1e-9).floor() as usize;
    if steps < 1 {
        return Err(Error::TrackTooShort(format!(
            "agent {} spans {span} s, shorter than target_dt {target_dt}",
            track.agent_id
        )));
    }

    let mut out = Vec::with_capacity(steps + 1);
    let mut seg = 0;
    for k in 0..=steps {
        let t = (t0 + k as f64 * target_dt).min(s[s.len() - 1].t);
        while seg + 2 < s.len() && s[seg + 1].t < t {
            seg += 1;
        }
        let (a, b) = (&s[seg], &s[seg + 1]);
        let sample = if t == a.t {
            *a
        } else if t == b.t {
            *b
        } else {
            let w = (t - a.t) / (b.t - a.t);
            TrackSample {
                t,
                x: a.x + (b.x - a.x) * w,
                y: a.y + (b.y - a.y) * w,
            }
        };
        out.push(TrackSample { t, ..sample });
    }
    Ok(Track::new(track.agent_id.clone(), out))
}

/// Attach velocity, speed, and heading from second-order central differences
/// (one-sided at the ends).
pub fn differentiate(track: &Track) -> Result<Track> {
    let s = &track.samples;
    if s.len() < 2 {
        return Err(Error::TrackTooShort(format!(
            "agent {} has {} sample(s)",
            track.agent_id,
            s.len()
        )));
    }
    let dt = track.uniform_dt().ok_or(Error::NonUniformGrid)?;
    let n = s.len();
    let mut kin = Vec::with_capacity(n);
    for i in 0..n {
        let (vx, vy) = if i == 0 {
            ((s[1].x - s[0].x) / dt, (s[1].y - s[0].y) / dt)
        } else if i == n - 1 {
            ((s[i].x - s[i - 1].x) / dt, (s[i].y - s[i - 1].y) / dt)
        } else {
            (
                (s[i + 1].x - s[i - 1].x) / (2.0 * dt),
                (s[i + 1].y - s[i - 1].y) / (2.0 * dt),
            )
        };
        kin.push(Kinematics {
            vx,
            vy,
            speed: vx.hypot(vy),
            heading: 0.0,
        });
    }
    // headings: carry forward through standstill, back-fill a leading standstill
    let first_moving = kin.iter().position(|k| k.speed >= STANDSTILL_SPEED);
    let mut heading = first_moving.map_or(0.0, |i| wrap_angle(kin[i].vy.atan2(kin[i].vx)));
    for k in kin.iter_mut() {
        if k.speed >= STANDSTILL_SPEED {
            heading = wrap_angle(k.vy.atan2(k.vx));
        }
        k.heading = heading;
    }
    Ok(Track {
        agent_id: track.agent_id.clone(),
        samples: s.clone(),
        kinematics: Some(kin),
    })
}

/// Aligned named columns over a uniform time index.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    dt: f64,
}

impl TimeSeriesDataset {
    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of time steps.
    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, i: usize) -> &[f64] {
        &self.columns[i]
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn row(&self, t: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[t]).collect()
    }

    /// Row subset at `indices`, without re-checking column variance.
    pub fn select_rows(&self, indices: &[usize]) -> TimeSeriesDataset {
        TimeSeriesDataset {
            names: self.names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            dt: self.dt,
        }
    }

    /// Write `t,<name>,...` with `t = k * dt`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(w, "t,{}", self.names.join(",")).map_err(io)?;
        for k in 0..self.len() {
            write!(w, "{}", k as f64 * self.dt).map_err(io)?;
            for c in &self.columns {
                write!(w, ",{}", c[k]).map_err(io)?;
            }
            writeln!(w).map_err(io)?;
        }
        w.flush().map_err(io)
    }

    /// Read a file written by [`TimeSeriesDataset::write_csv`]; `dt` comes
    /// from the first two time stamps.
    pub fn read_csv(path: &Path) -> Result<TimeSeriesDataset> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_reader(file);
        let headers = reader.headers()?.clone();
        if headers.len() < 2 || &headers[0] != "t" {
            return Err(Error::MalformedRow {
                line: 1,
                reason: "expected header `t,<variables...>`".into(),
            });
        }
        let names: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
        let mut times = Vec::new();
        let mut columns = vec![Vec::new(); names.len()];
        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let parse = |i: usize| -> Result<f64> {
                record
                    .get(i)
                    .and_then(|f| f.parse::<f64>().ok())
                    .ok_or_else(|| Error::MalformedRow {
                        line,
                        reason: format!("field {i} missing or not a number"),
                    })
            };
            times.push(parse(0)?);
            for (j, c) in columns.iter_mut().enumerate() {
                c.push(parse(j + 1)?);
            }
        }
        let dt = if times.len() >= 2 {
            times[1] - times[0]
        } else {
            0.0
        };
        to_dataset(names.into_iter().zip(columns).collect(), dt)
    }
}

/// Assemble named series into a dataset, rejecting mismatched lengths,
/// duplicate names, non-finite values, and constant columns.
pub fn to_dataset(columns: Vec<(String, Vec<f64>)>, dt: f64) -> Result<TimeSeriesDataset> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParameter(format!("dt must be > 0, got {dt}")));
    }
    let Some(first) = columns.first() else {
        return Err(Error::Empty);
    };
    let len = first.1.len();
    if len < 2 {
        return Err(Error::InsufficientSamples(format!(
            "series need at least 2 steps, got {len}"
        )));
    }
    let mut names = Vec::with_capacity(columns.len());
    let mut values = Vec::with_capacity(columns.len());
    for (name, series) in columns {
        if series.len() != len {
            return Err(Error::LengthMismatch(format!(
                "`{name}` has {} steps, expected {len}",
                series.len()
            )));
        }
        if names.contains(&name) {
            return Err(Error::DuplicateName(name));
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite(name));
        }
        let (lo, hi) = series
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
        if lo == hi {
            return Err(Error::ZeroVariance(name));
        }
        names.push(name);
        values.push(series);
    }
    Ok(TimeSeriesDataset {
        names,
        columns: values,
        dt,
    })
}
