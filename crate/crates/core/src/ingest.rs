//! Raw trajectory CSV parsing, chained-sample extraction, input
//! normalization, and the JSON-lines sample file.
//!
//! Raw CSV header: `vehicle_id,time,position,speed,accel,leader_id`, with an
//! empty `leader_id` for vehicles without a leader. Chains are followed
//! through `leader_id` pointers only; lane inference and smoothing of noisy
//! field data are left to whoever prepares the CSV.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::domain::{DatasetConfig, SplitIndex, TrajectorySample, VehicleState};
use crate::error::{Error, Result};

/// Allowed deviation of a timestamp from the uniform grid, in seconds.
pub const TIME_TOLERANCE: f64 = 1e-6;

pub const SAMPLE_FORMAT_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 6] = ["vehicle_id", "time", "position", "speed", "accel", "leader_id"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawTrajectoryRow {
    pub vehicle_id: i64,
    pub time: f64,
    pub position: f64,
    pub speed: f64,
    pub accel: f64,
    pub leader_id: Option<i64>,
}

/// One vehicle's rows on a gap-free `delta` grid, starting at grid index `start_step`.
#[derive(Debug, Clone, PartialEq)]
pub struct VehicleSeries {
    pub vehicle_id: i64,
    pub start_step: i64,
    pub rows: Vec<RawTrajectoryRow>,
}

impl VehicleSeries {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn at_step(&self, step: i64) -> Option<&RawTrajectoryRow> {
        let offset = step - self.start_step;
        if offset < 0 {
            return None;
        }
        self.rows.get(offset as usize)
    }

    fn end_step(&self) -> i64 {
        self.start_step + self.rows.len() as i64
    }
}

pub fn parse_trajectory_csv(path: impl AsRef<Path>, delta: f64) -> Result<Vec<VehicleSeries>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_trajectory_reader(file, delta)
}

/// Parses raw rows and groups them into validated per-vehicle series, in
/// order of each vehicle's first appearance.
pub fn parse_trajectory_reader<R: Read>(reader: R, delta: f64) -> Result<Vec<VehicleSeries>> {
    if !(delta > 0.0) {
        return Err(Error::Config(format!("delta must be > 0, got {delta}")));
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let headers = csv_reader.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::NoRows);
    }
    let mut columns = [0usize; 6];
    for (slot, name) in columns.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::parse(1, format!("missing column '{name}'")))?;
    }

    // (line, row) grouped per vehicle in first-appearance order
    let mut order: Vec<i64> = Vec::new();
    let mut grouped: HashMap<i64, Vec<(usize, RawTrajectoryRow)>> = HashMap::new();
    for record in csv_reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let field = |i: usize| record.get(columns[i]).unwrap_or("");
        let number = |i: usize| -> Result<f64> {
            let raw = field(i);
            let value: f64 = raw
                .parse()
                .map_err(|_| Error::parse(line, format!("bad {} value '{raw}'", CSV_HEADER[i])))?;
            if !value.is_finite() {
                return Err(Error::parse(line, format!("non-finite {}", CSV_HEADER[i])));
            }
            Ok(value)
        };
        let vehicle_id: i64 = field(0)
            .parse()
            .map_err(|_| Error::parse(line, format!("bad vehicle_id '{}'", field(0))))?;
        let leader_raw = field(5);
        let leader_id = if leader_raw.is_empty() || leader_raw.eq_ignore_ascii_case("none") {
            None
        } else {
            Some(
                leader_raw
                    .parse()
                    .map_err(|_| Error::parse(line, format!("bad leader_id '{leader_raw}'")))?,
            )
        };
        let row = RawTrajectoryRow {
            vehicle_id,
            time: number(1)?,
            position: number(2)?,
            speed: number(3)?,
            accel: number(4)?,
            leader_id,
        };
        if row.speed < 0.0 {
            return Err(Error::parse(line, "negative speed"));
        }
        grouped
            .entry(vehicle_id)
            .or_insert_with(|| {
                order.push(vehicle_id);
                Vec::new()
            })
            .push((line, row));
    }
    if order.is_empty() {
        return Err(Error::NoRows);
    }

    let mut series = Vec::with_capacity(order.len());
    for vehicle_id in order {
        let mut rows = grouped.remove(&vehicle_id).unwrap_or_default();
        rows.sort_by(|a, b| a.1.time.total_cmp(&b.1.time).then(a.0.cmp(&b.0)));
        let mut steps = Vec::with_capacity(rows.len());
        for (line, row) in &rows {
            let step = (row.time / delta).round();
            if (row.time - step * delta).abs() > TIME_TOLERANCE {
                return Err(Error::parse(
                    *line,
                    format!("time {} is off the {delta} s grid", row.time),
                ));
            }
            steps.push(step as i64);
        }
        for i in 1..rows.len() {
            let (line, row) = &rows[i];
            let dt = row.time - rows[i - 1].1.time;
            if dt.abs() <= TIME_TOLERANCE {
                return Err(Error::parse(
                    *line,
                    format!("duplicate time {} for vehicle {vehicle_id}", row.time),
                ));
            }
            if (dt - delta).abs() > TIME_TOLERANCE {
                return Err(Error::parse(
                    *line,
                    format!(
                        "non-uniform timestep {dt:.6} s (expected {delta}) for vehicle {vehicle_id}"
                    ),
                ));
            }
        }
        series.push(VehicleSeries {
            vehicle_id,
            start_step: steps[0],
            rows: rows.into_iter().map(|(_, row)| row).collect(),
        });
    }
    Ok(series)
}

/// Writes rows in the raw CSV schema.
pub fn write_trajectory_csv<W: Write>(writer: W, rows: &[RawTrajectoryRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    out.write_record(CSV_HEADER)?;
    for row in rows {
        out.write_record([
            row.vehicle_id.to_string(),
            row.time.to_string(),
            row.position.to_string(),
            row.speed.to_string(),
            row.accel.to_string(),
            row.leader_id.map(|id| id.to_string()).unwrap_or_default(),
        ])?;
    }
    out.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Emits one sample per stride-1 window start for every chain of
/// `k_vehicles` vehicles linked by `leader_id` over at least `T_b + T_f`
/// consecutive steps.
///
/// Output order is ego first-appearance order, then chain run, then window
/// start; sample ids are assigned in that order starting at 0. Windows with a
/// non-positive spacing are skipped.
pub fn extract_samples(series: &[VehicleSeries], config: &DatasetConfig) -> Result<Vec<TrajectorySample>> {
    config.validate()?;
    let by_id: HashMap<i64, &VehicleSeries> = series.iter().map(|s| (s.vehicle_id, s)).collect();
    let k = config.k_vehicles;
    let window = config.window_len();
    let mut samples = Vec::new();

    for ego in series {
        let mut run_start = ego.start_step;
        let mut current: Option<Vec<i64>> = None;
        // the extra iteration at end_step flushes the last run
        for step in ego.start_step..=ego.end_step() {
            let chain = if step < ego.end_step() {
                chain_at(ego, step, k, &by_id)
            } else {
                None
            };
            if chain != current {
                if let Some(ids) = current.take() {
                    let len = (step - run_start) as usize;
                    if len >= window {
                        let members: Vec<&VehicleSeries> = ids.iter().map(|id| by_id[id]).collect();
                        for start in run_start..=(step - window as i64) {
                            let sample = build_sample(&members, start, config, samples.len() as u64);
                            if sample.validate().is_ok() {
                                samples.push(sample);
                            }
                        }
                    }
                }
                current = chain;
                run_start = step;
            }
        }
    }
    Ok(samples)
}

/// Vehicle ids of the chain ending at `ego`, ordered lead first.
fn chain_at(
    ego: &VehicleSeries,
    step: i64,
    k: usize,
    by_id: &HashMap<i64, &VehicleSeries>,
) -> Option<Vec<i64>> {
    let mut ids = vec![ego.vehicle_id];
    let mut current = ego.at_step(step)?;
    while ids.len() < k {
        let leader = current.leader_id?;
        if ids.contains(&leader) {
            return None;
        }
        current = by_id.get(&leader)?.at_step(step)?;
        ids.push(leader);
    }
    ids.reverse();
    Some(ids)
}

fn build_sample(
    members: &[&VehicleSeries],
    start: i64,
    config: &DatasetConfig,
    sample_id: u64,
) -> TrajectorySample {
    let tb = config.t_back as i64;
    let tf = config.t_fwd as i64;
    let row = |k: usize, step: i64| members[k].at_step(step).expect("chain member missing row");
    let history_steps = start..start + tb;
    let t0 = start + tb - 1;

    let leader_history_positions: Vec<Vec<f64>> = (0..members.len())
        .map(|k| history_steps.clone().map(|s| row(k, s).position).collect())
        .collect();
    let history: Vec<Vec<VehicleState>> = (0..members.len())
        .map(|k| {
            history_steps
                .clone()
                .map(|s| {
                    let r = row(k, s);
                    VehicleState {
                        accel: r.accel,
                        speed: r.speed,
                        spacing: (k > 0).then(|| row(k - 1, s).position - r.position),
                    }
                })
                .collect()
        })
        .collect();
    let ego = members.len() - 1;
    let future = (t0 + 1)..=(t0 + tf);
    TrajectorySample {
        sample_id,
        ego_future_accel: future.clone().map(|s| row(ego, s).accel).collect(),
        ego_speed_at_t0: row(ego, t0).speed,
        leader_future_accel: (0..ego)
            .map(|k| future.clone().map(|s| row(k, s).accel).collect())
            .collect(),
        history,
        leader_history_positions,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub mean: f64,
    pub std: f64,
}

impl ChannelStats {
    fn from_values(name: &str, values: impl Iterator<Item = f64>) -> Result<Self> {
        let mut count = 0usize;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        let collected: Vec<f64> = values.collect();
        for &v in &collected {
            count += 1;
            sum += v;
        }
        if count == 0 {
            return Err(Error::Config(format!("no values for channel {name}")));
        }
        let mean = sum / count as f64;
        for &v in &collected {
            sum_sq += (v - mean) * (v - mean);
        }
        let std = (sum_sq / count as f64).sqrt();
        if !(std > 1e-12) || !std.is_finite() {
            return Err(Error::Numeric(format!("zero-variance input channel '{name}'")));
        }
        Ok(Self { mean, std })
    }

    pub fn apply(&self, value: f64) -> f64 {
        (value - self.mean) / self.std
    }
}

/// Z-score statistics per channel type, pooled over all vehicle slots of
/// the training samples. The lead vehicle's spacing is excluded.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub accel: ChannelStats,
    pub speed: ChannelStats,
    pub spacing: ChannelStats,
}

impl NormStats {
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a TrajectorySample> + Clone) -> Result<Self> {
        let states = || samples.clone().into_iter().flat_map(|s| s.history.iter().flatten());
        Ok(Self {
            accel: ChannelStats::from_values("accel", states().map(|s| s.accel))?,
            speed: ChannelStats::from_values("speed", states().map(|s| s.speed))?,
            spacing: ChannelStats::from_values("spacing", states().filter_map(|s| s.spacing))?,
        })
    }

    /// Row-major `[T_b][3K]` normalized input: for each step, `(a, v, gap)`
    /// per vehicle, lead to ego. The lead's unobserved gap is encoded as 0.
    pub fn input_matrix(&self, sample: &TrajectorySample) -> Vec<f64> {
        let k = sample.k();
        let tb = sample.t_back();
        let mut out = Vec::with_capacity(tb * 3 * k);
        for t in 0..tb {
            for vehicle in &sample.history {
                let s = vehicle[t];
                out.push(self.accel.apply(s.accel));
                out.push(self.speed.apply(s.speed));
                out.push(s.spacing.map_or(0.0, |gap| self.spacing.apply(gap)));
            }
        }
        out
    }
}

/// Normalization statistics from the training split only.
pub fn compute_norm_stats(samples: &[TrajectorySample], split: &SplitIndex) -> Result<NormStats> {
    if split.train_ids.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let train = select_samples(samples, &split.train_ids)?;
    NormStats::from_samples(train.iter().copied())
}

/// Looks up samples by id, in the order of `ids`.
pub fn select_samples<'a>(samples: &'a [TrajectorySample], ids: &[u64]) -> Result<Vec<&'a TrajectorySample>> {
    let index: HashMap<u64, &TrajectorySample> = samples.iter().map(|s| (s.sample_id, s)).collect();
    ids.iter()
        .map(|id| {
            index
                .get(id)
                .copied()
                .ok_or_else(|| Error::Config(format!("unknown sample id {id}")))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleFileHeader {
    pub format_version: u32,
    pub delta: f64,
    pub k_vehicles: usize,
    pub t_back: usize,
    pub t_fwd: usize,
}

impl SampleFileHeader {
    pub fn from_config(config: &DatasetConfig) -> Self {
        Self {
            format_version: SAMPLE_FORMAT_VERSION,
            delta: config.delta,
            k_vehicles: config.k_vehicles,
            t_back: config.t_back,
            t_fwd: config.t_fwd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleFile {
    pub header: SampleFileHeader,
    pub samples: Vec<TrajectorySample>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    sample_id: u64,
    accel: Vec<Vec<f64>>,
    speed: Vec<Vec<f64>>,
    /// Rows for vehicles 1..K; the lead has no spacing.
    spacing: Vec<Vec<f64>>,
    position: Vec<Vec<f64>>,
    ego_future_accel: Vec<f64>,
    ego_speed_at_t0: f64,
    leader_future_accel: Vec<Vec<f64>>,
}

impl From<&TrajectorySample> for SampleLine {
    fn from(s: &TrajectorySample) -> Self {
        let grid = |f: &dyn Fn(&VehicleState) -> f64| -> Vec<Vec<f64>> {
            s.history.iter().map(|row| row.iter().map(f).collect()).collect()
        };
        Self {
            sample_id: s.sample_id,
            accel: grid(&|v| v.accel),
            speed: grid(&|v| v.speed),
            spacing: s.history[1..]
                .iter()
                .map(|row| row.iter().map(VehicleState::spacing).collect())
                .collect(),
            position: s.leader_history_positions.clone(),
            ego_future_accel: s.ego_future_accel.clone(),
            ego_speed_at_t0: s.ego_speed_at_t0,
            leader_future_accel: s.leader_future_accel.clone(),
        }
    }
}

impl SampleLine {
    fn into_sample(self, header: &SampleFileHeader) -> std::result::Result<TrajectorySample, String> {
        let (k, tb, tf) = (header.k_vehicles, header.t_back, header.t_fwd);
        let grid_ok = |g: &Vec<Vec<f64>>, rows: usize, cols: usize| {
            g.len() == rows && g.iter().all(|r| r.len() == cols)
        };
        if !grid_ok(&self.accel, k, tb)
            || !grid_ok(&self.speed, k, tb)
            || !grid_ok(&self.spacing, k - 1, tb)
            || !grid_ok(&self.position, k, tb)
            || !grid_ok(&self.leader_future_accel, k - 1, tf)
            || self.ego_future_accel.len() != tf
        {
            return Err("array dimensions do not match the header".into());
        }
        let history = (0..k)
            .map(|vehicle| {
                (0..tb)
                    .map(|t| VehicleState {
                        accel: self.accel[vehicle][t],
                        speed: self.speed[vehicle][t],
                        spacing: (vehicle > 0).then(|| self.spacing[vehicle - 1][t]),
                    })
                    .collect()
            })
            .collect();
        let sample = TrajectorySample {
            sample_id: self.sample_id,
            history,
            ego_future_accel: self.ego_future_accel,
            ego_speed_at_t0: self.ego_speed_at_t0,
            leader_future_accel: self.leader_future_accel,
            leader_history_positions: self.position,
        };
        sample.validate().map_err(|e| e.to_string())?;
        Ok(sample)
    }
}

pub fn write_samples_to<W: Write>(mut writer: W, config: &DatasetConfig, samples: &[TrajectorySample]) -> Result<()> {
    let io = |e| Error::io("<sample writer>", e);
    serde_json::to_writer(&mut writer, &SampleFileHeader::from_config(config))?;
    writer.write_all(b"\n").map_err(io)?;
    for sample in samples {
        serde_json::to_writer(&mut writer, &SampleLine::from(sample))?;
        writer.write_all(b"\n").map_err(io)?;
    }
    writer.flush().map_err(io)
}

/// Writes the JSON-lines sample file: a header object, then one sample per line.
pub fn write_samples(path: impl AsRef<Path>, config: &DatasetConfig, samples: &[TrajectorySample]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    write_samples_to(BufWriter::new(file), config, samples)
}

pub fn read_samples_from<R: BufRead>(reader: R) -> Result<SampleFile> {
    let mut lines = reader.lines().enumerate();
    let header_line = match lines.next() {
        Some((_, line)) => line.map_err(|e| Error::io("<sample reader>", e))?,
        None => return Err(Error::parse(1, "missing header line")),
    };
    let header: SampleFileHeader =
        serde_json::from_str(&header_line).map_err(|e| Error::parse(1, format!("bad header: {e}")))?;
    if header.format_version != SAMPLE_FORMAT_VERSION {
        return Err(Error::parse(
            1,
            format!(
                "unsupported format_version {} (expected {SAMPLE_FORMAT_VERSION})",
                header.format_version
            ),
        ));
    }
    if header.k_vehicles < 2 || header.t_back < 1 || header.t_fwd < 1 || !(header.delta > 0.0) {
        return Err(Error::parse(1, "invalid dimensions in header"));
    }
    let mut samples = Vec::new();
    for (index, line) in lines {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::io("<sample reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: SampleLine =
            serde_json::from_str(&line).map_err(|e| Error::parse(line_no, e.to_string()))?;
        samples.push(parsed.into_sample(&header).map_err(|m| Error::parse(line_no, m))?);
    }
    Ok(SampleFile { header, samples })
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<SampleFile> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_samples_from(BufReader::new(file))
}
