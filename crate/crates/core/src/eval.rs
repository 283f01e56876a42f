//! Test metrics, the training-data-size sweep, and plot-ready CSV output.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calibrate::{monte_carlo_calibrate, CalibrationConfig, CalibrationReport, OptimizerSettings};
use crate::domain::{derive_seed, split_dataset, DatasetConfig, SplitIndex, TrajectorySample};
use crate::error::{Error, Result};
use crate::ingest::{select_samples, NormStats};
use crate::neuralnet::{Activation, AdamConfig, CellType, NetConfig};
use crate::physics::{PhysicsModel, PhysicsParams};
use crate::predictors::{
    predict_all, reconstruct_speed, train_variant, Artifacts, EpochRecord, PredictionRecord, TrainConfig, Variant,
};

/// `(MSE^a, MSE^v)` of raw acceleration predictions against `truth`, in
/// the same order. Speeds on both sides come from `reconstruct_speed`.
pub fn mse_pair(predicted: &[Vec<f64>], truth: &[&TrajectorySample], delta: f64) -> Result<(f64, f64)> {
    if predicted.len() != truth.len() || truth.is_empty() {
        return Err(Error::Shape(format!("{} predictions for {} samples", predicted.len(), truth.len())));
    }
    let mut sum_a = 0.0;
    let mut sum_v = 0.0;
    let mut count = 0usize;
    for (p, s) in predicted.iter().zip(truth) {
        let (a, v) = sample_errors(p, &reconstruct_speed(s.ego_speed_at_t0, p, delta), s, delta)?;
        sum_a += a;
        sum_v += v;
        count += p.len();
    }
    Ok((sum_a / count as f64, sum_v / count as f64))
}

/// Summed squared acceleration and speed errors of one sample.
fn sample_errors(accel: &[f64], speed: &[f64], s: &TrajectorySample, delta: f64) -> Result<(f64, f64)> {
    if accel.len() != s.ego_future_accel.len() || speed.len() != accel.len() {
        return Err(Error::Shape(format!(
            "sample {}: prediction has {} steps, truth has {}",
            s.sample_id,
            accel.len(),
            s.ego_future_accel.len()
        )));
    }
    let true_speed = reconstruct_speed(s.ego_speed_at_t0, &s.ego_future_accel, delta);
    let a = accel.iter().zip(&s.ego_future_accel).map(|(p, t)| (p - t) * (p - t)).sum();
    let v = speed.iter().zip(&true_speed).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((a, v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub sample_id: u64,
    pub mse_a: f64,
    pub mse_v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse_a: f64,
    pub mse_v: f64,
    pub per_sample: Vec<SampleError>,
    pub collisions: usize,
}

/// Means over all samples and horizon steps. Records and samples are
/// matched by id and accumulated in id order, so the result does not
/// depend on record order.
pub fn mse_metrics(records: &[PredictionRecord], truth: &[&TrajectorySample], delta: f64) -> Result<Metrics> {
    if records.is_empty() {
        return Err(Error::Config("no prediction records".into()));
    }
    let by_id: BTreeMap<u64, &TrajectorySample> = truth.iter().map(|s| (s.sample_id, *s)).collect();
    let mut sorted: Vec<&PredictionRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.sample_id);
    if sorted.windows(2).any(|w| w[0].sample_id == w[1].sample_id) {
        return Err(Error::Config("duplicate sample ids in prediction records".into()));
    }
    let mut per_sample = Vec::with_capacity(sorted.len());
    let (mut sum_a, mut sum_v, mut count) = (0.0, 0.0, 0usize);
    for r in &sorted {
        let s = by_id
            .get(&r.sample_id)
            .ok_or_else(|| Error::Config(format!("prediction for unknown sample id {}", r.sample_id)))?;
        let (a, v) = sample_errors(&r.predicted_accel, &r.predicted_speed, s, delta)?;
        let t = r.predicted_accel.len() as f64;
        per_sample.push(SampleError {
            sample_id: r.sample_id,
            mse_a: a / t,
            mse_v: v / t,
        });
        sum_a += a;
        sum_v += v;
        count += r.predicted_accel.len();
    }
    Ok(Metrics {
        mse_a: sum_a / count as f64,
        mse_v: sum_v / count as f64,
        per_sample,
        collisions: records.iter().filter(|r| r.collision).count(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub variant: Variant,
    pub data_size: usize,
    pub seed: u64,
    pub n_samples: usize,
    pub mse_a_test: f64,
    pub mse_v_test: f64,
    pub collisions: usize,
    pub physics: Option<PhysicsParams>,
    pub output_activation: Option<Activation>,
    pub best_epoch: Option<usize>,
    /// Per-epoch validation curve; empty for the physics variant.
    pub convergence: Vec<EpochRecord>,
    pub per_sample: Vec<SampleError>,
}

impl EvalReport {
    pub fn from_metrics(variant: Variant, data_size: usize, seed: u64, metrics: Metrics) -> Self {
        Self {
            variant,
            data_size,
            seed,
            n_samples: metrics.per_sample.len(),
            mse_a_test: metrics.mse_a,
            mse_v_test: metrics.mse_v,
            collisions: metrics.collisions,
            physics: None,
            output_activation: None,
            best_epoch: None,
            convergence: Vec::new(),
            per_sample: metrics.per_sample,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetShape {
    pub units1: usize,
    pub units2: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub output_activation: Activation,
}

impl Default for NetShape {
    fn default() -> Self {
        Self {
            units1: 32,
            units2: 16,
            dense_units: 16,
            dropout: 0.2,
            output_activation: Activation::Linear,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub patience: usize,
    pub mu: f64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        let t = TrainConfig::new(Variant::Nn, 0);
        Self {
            max_epochs: t.max_epochs,
            batch_size: t.batch_size,
            adam: t.adam,
            patience: t.patience,
            mu: t.mu,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub data_sizes: Vec<usize>,
    pub variants: Vec<Variant>,
    pub physics_model: PhysicsModel,
    pub cell: CellType,
    pub seeds: Vec<u64>,
    pub dataset: DatasetConfig,
    pub net: NetShape,
    pub train: TrainSettings,
    /// Monte-Carlo repetitions of the per-cell calibration; each draws the
    /// whole training subset.
    pub calibration_repetitions: usize,
    pub optimizer: OptimizerSettings,
}

impl SweepConfig {
    pub fn new(dataset: DatasetConfig, seeds: Vec<u64>) -> Self {
        Self {
            data_sizes: vec![300, 500, 1000, 2000, 5000, 10000, 12000],
            variants: vec![Variant::Physics, Variant::Nn, Variant::Pinn, Variant::Perl],
            physics_model: PhysicsModel::Idm,
            cell: CellType::Lstm,
            seeds,
            dataset,
            net: NetShape::default(),
            train: TrainSettings::default(),
            calibration_repetitions: 1,
            optimizer: OptimizerSettings::default(),
        }
    }

    pub fn validate(&self, train_available: usize) -> Result<()> {
        if self.data_sizes.is_empty() || self.variants.is_empty() || self.seeds.is_empty() {
            return Err(Error::Config("sweep needs at least one size, variant and seed".into()));
        }
        if let Some(size) = self.data_sizes.iter().find(|&&s| s == 0 || s > train_available) {
            return Err(Error::Config(format!(
                "data size {size} not in 1..={train_available} (training split size)"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub variant: Variant,
    pub data_size: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepOutcome {
    /// Ordered by (size, variant, seed).
    pub reports: Vec<EvalReport>,
    pub calibrations: Vec<SweepCalibration>,
    pub failures: Vec<CellFailure>,
    pub split: SplitIndex,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCalibration {
    pub data_size: usize,
    pub seed: u64,
    pub report: CalibrationReport,
}

/// Training subset for `size` and `seed`: a prefix of a seeded permutation
/// of the training ids, so smaller subsets are nested in larger ones.
pub fn nested_subset(train_ids: &[u64], size: usize, seed: u64) -> Vec<u64> {
    let mut ids = train_ids.to_vec();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x5B5E, 0)));
    ids.truncate(size);
    ids.sort_unstable();
    ids
}

/// Runs every (size, variant, seed) cell on `jobs` threads. Cell failures
/// are collected rather than aborting the sweep.
pub fn run_sweep(samples: &[TrajectorySample], sweep: &SweepConfig, jobs: usize) -> Result<SweepOutcome> {
    let ids: Vec<u64> = samples.iter().map(|s| s.sample_id).collect();
    let split = split_dataset(&ids, &sweep.dataset)?;
    sweep.validate(split.train_ids.len())?;
    let val = select_samples(samples, &split.val_ids)?;
    let test = select_samples(samples, &split.test_ids)?;
    let delta = sweep.dataset.delta;
    let needs_physics = sweep.variants.iter().any(|v| v.uses_physics());

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;

    let groups: Vec<(usize, u64)> = sweep
        .data_sizes
        .iter()
        .flat_map(|&size| sweep.seeds.iter().map(move |&seed| (size, seed)))
        .collect();

    // calibration and normalization are shared by the variants of a (size, seed) group
    let prepared: Vec<Result<(Vec<u64>, NormStats, Option<CalibrationReport>)>> = pool.install(|| {
        groups
            .par_iter()
            .map(|&(size, seed)| {
                let subset_ids = nested_subset(&split.train_ids, size, seed);
                let subset = select_samples(samples, &subset_ids)?;
                let norm = NormStats::from_samples(subset.iter().copied())?;
                let calibration = if needs_physics {
                    let config = CalibrationConfig {
                        repetitions: sweep.calibration_repetitions.max(1),
                        optimizer: sweep.optimizer.clone(),
                        ..CalibrationConfig::new(sweep.physics_model, size, derive_seed(seed, 0xCA1, size as u64))
                    };
                    Some(monte_carlo_calibrate(&subset, delta, &config)?)
                } else {
                    None
                };
                Ok((subset_ids, norm, calibration))
            })
            .collect()
    });

    let cells: Vec<(usize, Variant, u64, usize)> = sweep
        .data_sizes
        .iter()
        .flat_map(|&size| {
            sweep.variants.iter().flat_map(move |&variant| {
                sweep.seeds.iter().map(move |&seed| (size, variant, seed))
            })
        })
        .map(|(size, variant, seed)| {
            let group = groups.iter().position(|g| *g == (size, seed)).expect("group exists");
            (size, variant, seed, group)
        })
        .collect();

    let results: Vec<Result<EvalReport>> = pool.install(|| {
        cells
            .par_iter()
            .map(|&(size, variant, seed, group)| {
                let (subset_ids, norm, calibration) = match &prepared[group] {
                    Ok(p) => p,
                    Err(e) => return Err(Error::Calibration(format!("preparing size {size}, seed {seed}: {e}"))),
                };
                let subset = select_samples(samples, subset_ids)?;
                let physics = calibration.as_ref().map(|c| c.mean_params);
                run_cell(&subset, &val, &test, norm, physics.as_ref(), sweep, variant, size, seed)
            })
            .collect()
    });

    let mut reports = Vec::new();
    let mut failures = Vec::new();
    for (&(size, variant, seed, _), result) in cells.iter().zip(results) {
        match result {
            Ok(r) => reports.push(r),
            Err(e) => failures.push(CellFailure {
                variant,
                data_size: size,
                seed,
                error: e.to_string(),
            }),
        }
    }
    let calibrations = groups
        .iter()
        .zip(&prepared)
        .filter_map(|(&(data_size, seed), p)| {
            p.as_ref().ok().and_then(|(_, _, c)| c.clone()).map(|report| SweepCalibration {
                data_size,
                seed,
                report,
            })
        })
        .collect();
    Ok(SweepOutcome {
        reports,
        calibrations,
        failures,
        split,
    })
}

#[allow(clippy::too_many_arguments)]
fn run_cell(
    train: &[&TrajectorySample],
    val: &[&TrajectorySample],
    test: &[&TrajectorySample],
    norm: &NormStats,
    physics: Option<&PhysicsParams>,
    sweep: &SweepConfig,
    variant: Variant,
    size: usize,
    seed: u64,
) -> Result<EvalReport> {
    let first = train.first().ok_or_else(|| Error::Config("empty training subset".into()))?;
    let net_config = NetConfig {
        cell: sweep.cell,
        units1: sweep.net.units1,
        units2: sweep.net.units2,
        dense_units: sweep.net.dense_units,
        dropout: sweep.net.dropout,
        output_dim: first.t_fwd(),
        input_dim: 3 * first.k(),
        output_activation: sweep.net.output_activation,
        seed,
    };
    let train_config = TrainConfig {
        variant,
        max_epochs: sweep.train.max_epochs,
        batch_size: sweep.train.batch_size,
        adam: sweep.train.adam,
        patience: sweep.train.patience,
        seed,
        mu: sweep.train.mu,
    };
    let trained = train_variant(train, val, norm, &train_config, &net_config, physics, sweep.dataset.delta)?;
    let artifacts = Artifacts {
        net: trained.as_ref().map(|(net, _)| net),
        physics,
        delta: sweep.dataset.delta,
    };
    let records = predict_all(variant, test, &artifacts)?;
    let metrics = mse_metrics(&records, test, sweep.dataset.delta)?;
    let mut report = EvalReport::from_metrics(variant, size, seed, metrics);
    report.physics = physics.copied().filter(|_| variant.uses_physics());
    if let Some((_, train_report)) = trained {
        report.output_activation = Some(net_config.output_activation);
        report.best_epoch = Some(train_report.best_epoch);
        report.convergence = train_report.per_epoch;
    }
    Ok(report)
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub variant: Variant,
    pub data_size: usize,
    pub seed: u64,
    pub status: String,
    pub mse_a_test: Option<f64>,
    pub mse_v_test: Option<f64>,
}

pub fn aggregate_rows(outcome: &SweepOutcome) -> Vec<AggregateRow> {
    let mut rows: Vec<AggregateRow> = outcome
        .reports
        .iter()
        .map(|r| AggregateRow {
            variant: r.variant,
            data_size: r.data_size,
            seed: r.seed,
            status: "ok".into(),
            mse_a_test: Some(r.mse_a_test),
            mse_v_test: Some(r.mse_v_test),
        })
        .chain(outcome.failures.iter().map(|f| AggregateRow {
            variant: f.variant,
            data_size: f.data_size,
            seed: f.seed,
            status: "failed".into(),
            mse_a_test: None,
            mse_v_test: None,
        }))
        .collect();
    rows.sort_by_key(|r| (r.data_size, r.variant, r.seed));
    rows
}

/// Writes `sweep/<variant>/<size>/<seed>/report.json`, per-group
/// calibration reports and the aggregate table as CSV and JSON under
/// `out`. Returns the written paths.
pub fn write_sweep(outcome: &SweepOutcome, out: &Path) -> Result<Vec<PathBuf>> {
    let mut written = Vec::new();
    for r in &outcome.reports {
        let dir = out
            .join("sweep")
            .join(r.variant.as_str())
            .join(r.data_size.to_string())
            .join(r.seed.to_string());
        create_dir(&dir)?;
        let path = dir.join("report.json");
        write_json(&path, r)?;
        written.push(path);
    }
    for c in &outcome.calibrations {
        let dir = out.join("sweep").join("calibration").join(c.data_size.to_string());
        create_dir(&dir)?;
        let path = dir.join(format!("{}.json", c.seed));
        write_json(&path, &c.report)?;
        written.push(path);
    }
    let rows = aggregate_rows(outcome);
    create_dir(&out.join("sweep"))?;
    let json_path = out.join("sweep").join("aggregate.json");
    write_json(&json_path, &rows)?;
    let csv_path = out.join("sweep").join("aggregate.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record(["variant", "data_size", "seed", "status", "mse_a_test", "mse_v_test"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &rows {
        w.write_record([
            r.variant.to_string(),
            r.data_size.to_string(),
            r.seed.to_string(),
            r.status.clone(),
            opt(r.mse_a_test),
            opt(r.mse_v_test),
        ])?;
    }
    w.flush().map_err(|e| Error::io(&csv_path, e))?;
    written.push(json_path);
    written.push(csv_path);
    Ok(written)
}

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CONVERGENCE_FILE: &str = "convergence.csv";

/// Writes the long-format summary `variant,data_size,seed,metric,value`
/// and the convergence table `variant,data_size,seed,epoch,mse_a_val,mse_v_val`
/// into `dir`.
pub fn emit_plot_data(reports: &[EvalReport], dir: &Path) -> Result<(PathBuf, PathBuf)> {
    if reports.is_empty() {
        return Err(Error::Config("no reports to emit".into()));
    }
    create_dir(dir)?;
    let summary_path = dir.join(SUMMARY_FILE);
    let mut summary = csv::Writer::from_path(&summary_path)?;
    summary.write_record(["variant", "data_size", "seed", "metric", "value"])?;
    let convergence_path = dir.join(CONVERGENCE_FILE);
    let mut convergence = csv::Writer::from_path(&convergence_path)?;
    convergence.write_record(["variant", "data_size", "seed", "epoch", "mse_a_val", "mse_v_val"])?;
    for r in reports {
        let key = [r.variant.to_string(), r.data_size.to_string(), r.seed.to_string()];
        for (metric, value) in [("mse_a_test", r.mse_a_test), ("mse_v_test", r.mse_v_test)] {
            summary.write_record(key.iter().cloned().chain([metric.to_string(), value.to_string()]))?;
        }
        for e in &r.convergence {
            convergence.write_record(key.iter().cloned().chain([
                e.epoch.to_string(),
                e.mse_a_val.to_string(),
                e.mse_v_val.to_string(),
            ]))?;
        }
    }
    summary.flush().map_err(|e| Error::io(&summary_path, e))?;
    convergence.flush().map_err(|e| Error::io(&convergence_path, e))?;
    Ok((summary_path, convergence_path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VehicleState;
    use proptest::prelude::{prop_assert_eq, proptest};

    fn sample(id: u64, future: &[f64]) -> TrajectorySample {
        let lead = VehicleState { accel: 0.0, speed: 10.0, spacing: None };
        let follow = VehicleState { accel: 0.0, speed: 10.0, spacing: Some(20.0) };
        TrajectorySample {
            sample_id: id,
            history: vec![vec![lead; 2], vec![follow; 2]],
            ego_future_accel: future.to_vec(),
            ego_speed_at_t0: 10.0,
            leader_future_accel: vec![vec![0.0; future.len()]],
            leader_history_positions: vec![vec![20.0; 2], vec![0.0; 2]],
        }
    }

    fn record(id: u64, accel: &[f64]) -> PredictionRecord {
        PredictionRecord {
            sample_id: id,
            variant: Variant::Nn,
            predicted_accel: accel.to_vec(),
            predicted_speed: reconstruct_speed(10.0, accel, 0.1),
            physics_component: None,
            residual_component: None,
            collision: false,
        }
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() <= 4.0 * f64::EPSILON * b.abs()
    }

    #[test]
    fn hand_arithmetic_examples() {
        let s = sample(1, &[1.0]);
        let m = mse_metrics(&[record(1, &[0.8])], &[&s], 0.1).unwrap();
        assert!(close(m.mse_a, 0.04), "{}", m.mse_a);

        let (a, b) = (sample(1, &[0.0, 0.0]), sample(2, &[0.0, 0.0]));
        let m = mse_metrics(&[record(1, &[0.1, 0.1]), record(2, &[-0.1, 0.1])], &[&a, &b], 0.1).unwrap();
        assert!(close(m.mse_a, 0.01), "{}", m.mse_a);

        let m = mse_metrics(&[record(1, &[0.0, 0.0]), record(2, &[0.0, 0.0])], &[&a, &b], 0.1).unwrap();
        assert_eq!((m.mse_a, m.mse_v), (0.0, 0.0));
    }

    #[test]
    fn unknown_ids_are_errors() {
        let s = sample(1, &[1.0]);
        assert!(mse_metrics(&[record(9, &[0.8])], &[&s], 0.1).is_err());
        assert!(mse_metrics(&[record(1, &[0.8]), record(1, &[0.8])], &[&s], 0.1).is_err());
        assert!(mse_metrics(&[record(1, &[0.8, 1.0])], &[&s], 0.1).is_err());
    }

    #[test]
    fn nested_subsets() {
        let ids: Vec<u64> = (0..2000).collect();
        let small = nested_subset(&ids, 300, 4);
        let large = nested_subset(&ids, 500, 4);
        assert!(small.iter().all(|id| large.binary_search(id).is_ok()));
        assert_eq!(small.len(), 300);
        assert_ne!(nested_subset(&ids, 300, 5), small);
    }

    fn fake_report(variant: Variant, size: usize, epochs: usize) -> EvalReport {
        EvalReport {
            variant,
            data_size: size,
            seed: 0,
            n_samples: 1,
            mse_a_test: 0.1 + size as f64 * 1e-3,
            mse_v_test: 1.0 / 3.0,
            collisions: 0,
            physics: None,
            output_activation: None,
            best_epoch: None,
            convergence: (1..=epochs)
                .map(|epoch| EpochRecord { epoch, train_loss: 0.0, mse_a_val: 1.0 / epoch as f64, mse_v_val: 0.5 })
                .collect(),
            per_sample: Vec::new(),
        }
    }

    #[test]
    fn plot_data_cardinality_and_round_trip() {
        let reports: Vec<EvalReport> = [Variant::Nn, Variant::Perl]
            .into_iter()
            .flat_map(|v| [300, 500, 1000].into_iter().map(move |s| fake_report(v, s, s / 100)))
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let (summary, convergence) = emit_plot_data(&reports, dir.path()).unwrap();
        let mut rows = csv::Reader::from_path(&summary).unwrap();
        let parsed: Vec<csv::StringRecord> = rows.records().map(|r| r.unwrap()).collect();
        assert_eq!(parsed.len(), 12);
        assert_eq!(parsed[0][3].to_string(), "mse_a_test");
        assert_eq!(parsed[0][4].parse::<f64>().unwrap(), reports[0].mse_a_test);
        assert_eq!(parsed[1][4].parse::<f64>().unwrap(), 1.0 / 3.0);
        let conv = csv::Reader::from_path(&convergence).unwrap().records().count();
        assert_eq!(conv, reports.iter().map(|r| r.convergence.len()).sum::<usize>());
        assert!(emit_plot_data(&[], dir.path()).is_err());
    }

    proptest! {
        #[test]
        fn metrics_are_permutation_invariant(errs in proptest::collection::vec(-2.0f64..2.0, 2..30), rot in 0usize..29) {
            let samples: Vec<TrajectorySample> = (0..errs.len() as u64).map(|i| sample(i, &[0.5])).collect();
            let refs: Vec<&TrajectorySample> = samples.iter().collect();
            let records: Vec<PredictionRecord> = errs.iter().enumerate().map(|(i, e)| record(i as u64, &[0.5 + e])).collect();
            let mut rotated = records.clone();
            rotated.rotate_left(rot % records.len());
            let a = mse_metrics(&records, &refs, 0.1).unwrap();
            let b = mse_metrics(&rotated, &refs, 0.1).unwrap();
            prop_assert_eq!(a.mse_a.to_bits(), b.mse_a.to_bits());
            prop_assert_eq!(a.mse_v.to_bits(), b.mse_v.to_bits());
        }
    }
}
