use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use perl_core::calibrate::{monte_carlo_calibrate, CalibrationConfig, CalibrationReport};
use perl_core::domain::{split_dataset, DatasetConfig, SplitIndex, TrajectorySample};
use perl_core::eval::{emit_plot_data, mse_metrics, nested_subset, run_sweep, write_sweep, EvalReport, SweepConfig};
use perl_core::ingest::{extract_samples, parse_trajectory_csv, read_samples, select_samples, write_samples, NormStats, SampleFile};
use perl_core::neuralnet::{gradient_check, Activation, CellType, GradCheckConfig, NetConfig, RecurrentNet, WeightExtras};
use perl_core::physics::{IdmParams, PhysicsModel, PhysicsParams};
use perl_core::predictors::{predict_all, train_variant, Artifacts, PredictionRecord, TrainConfig, TrainReport, Variant};
use perl_core::synth::{write_corpus_csv, Generator, SynthConfig};

use crate::manifest::RunRecord;
use crate::settings::{usage, Settings};

pub const CORPUS_FILE: &str = "corpus.csv";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const WEIGHTS_FILE: &str = "weights.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";
pub const PREDICTIONS_FILE: &str = "predictions.json";
pub const EVAL_REPORT_FILE: &str = "eval_report.json";
pub const GRADCHECK_FILE: &str = "gradcheck.json";
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

/// Some sweep cells failed: exit status 4.
#[derive(Debug)]
pub struct PartialSweep(pub usize);

impl fmt::Display for PartialSweep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} sweep cell(s) failed; see sweep/aggregate.csv", self.0)
    }
}

impl std::error::Error for PartialSweep {}

pub const DATASET_KEYS: [&str; 3] = ["dataset.omega_train", "dataset.omega_val", "dataset.seed"];

pub const SYNTH_KEYS: &[&str] = &[
    "seed",
    "generator",
    "noise_sigma",
    "platoons",
    "vehicles_per_platoon",
    "duration_steps",
    "delta",
    "newell.w",
    "idm.v_free",
    "idm.a_max",
    "idm.b_comf",
    "idm.s0",
    "idm.t_gap",
];

pub const EXTRACT_KEYS: &[&str] = &[
    "input",
    "dataset.delta",
    "dataset.k_vehicles",
    "dataset.t_back",
    "dataset.t_fwd",
    "dataset.omega_train",
    "dataset.omega_val",
    "dataset.seed",
];

pub const CALIBRATE_KEYS: &[&str] = &[
    "samples",
    "split",
    "dataset.omega_train",
    "dataset.omega_val",
    "dataset.seed",
    "seed",
    "model",
    "sample_size",
    "repetitions",
    "optimizer.restarts",
    "optimizer.max_iterations",
];

const NET_KEYS: [&str; 6] = [
    "net.cell",
    "net.units1",
    "net.units2",
    "net.dense_units",
    "net.dropout",
    "net.output_activation",
];

const TRAIN_KEYS: [&str; 5] = ["train.max_epochs", "train.batch_size", "train.lr", "train.patience", "train.mu"];

pub const TRAINING_KEYS: &[&str] = &[
    "samples",
    "split",
    "dataset.omega_train",
    "dataset.omega_val",
    "dataset.seed",
    "seed",
    "variant",
    "physics",
    "train.size",
    "net.cell",
    "net.units1",
    "net.units2",
    "net.dense_units",
    "net.dropout",
    "net.output_activation",
    "train.max_epochs",
    "train.batch_size",
    "train.lr",
    "train.patience",
    "train.mu",
];

pub const PREDICT_KEYS: &[&str] = &[
    "samples",
    "split",
    "dataset.omega_train",
    "dataset.omega_val",
    "dataset.seed",
    "subset",
    "weights",
    "physics",
    "variant",
];

pub const EVALUATE_KEYS: &[&str] = &["predictions", "samples", "train_report", "plot_dir"];

pub const SWEEP_KEYS: &[&str] = &[
    "samples",
    "dataset.omega_train",
    "dataset.omega_val",
    "dataset.seed",
    "seed",
    "num_seeds",
    "sizes",
    "variants",
    "model",
    "calibration.repetitions",
    "jobs",
    "net.cell",
    "net.units1",
    "net.units2",
    "net.dense_units",
    "net.dropout",
    "net.output_activation",
    "train.max_epochs",
    "train.batch_size",
    "train.lr",
    "train.patience",
    "train.mu",
];

pub const GRADCHECK_KEYS: &[&str] = &[
    "cell",
    "dropout",
    "output_activation",
    "seed",
    "units1",
    "units2",
    "dense_units",
    "input_dim",
    "output_dim",
    "steps",
];

pub fn write_json<T: Serialize>(path: &Path, value: &T, run: &mut RunRecord) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    run.output(path.to_path_buf());
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text)
        .map_err(perl_core::Error::from)
        .with_context(|| format!("parsing {}", path.display()))
}

/// Accepts a calibration report (its mean parameters) or bare parameters.
fn load_physics(path: &Path, run: &mut RunRecord) -> Result<PhysicsParams> {
    run.input("physics", path)?;
    let value: serde_json::Value = read_json(path)?;
    let params = if value.get("mean_params").is_some() {
        serde_json::from_value::<CalibrationReport>(value).map(|r| r.mean_params)
    } else {
        serde_json::from_value::<PhysicsParams>(value)
    };
    let params = params
        .map_err(perl_core::Error::from)
        .with_context(|| format!("{} holds neither a calibration report nor physics parameters", path.display()))?;
    params.validate()?;
    Ok(params)
}

struct Dataset {
    file: SampleFile,
    config: DatasetConfig,
    split: SplitIndex,
}

impl Dataset {
    fn subset(&self, ids: &[u64]) -> Result<Vec<&TrajectorySample>> {
        Ok(select_samples(&self.file.samples, ids)?)
    }
}

fn dataset_config(s: &mut Settings, header: &perl_core::ingest::SampleFileHeader) -> Result<DatasetConfig> {
    let d = DatasetConfig::default();
    let config = DatasetConfig {
        delta: header.delta,
        k_vehicles: header.k_vehicles,
        t_back: header.t_back,
        t_fwd: header.t_fwd,
        omega_train: s.get(DATASET_KEYS[0], d.omega_train)?,
        omega_val: s.get(DATASET_KEYS[1], d.omega_val)?,
        seed: s.get(DATASET_KEYS[2], d.seed)?,
    };
    config.validate()?;
    Ok(config)
}

/// Samples file plus its split: read from `split` when given, otherwise
/// recomputed from the dataset keys.
fn load_dataset(s: &mut Settings, run: &mut RunRecord) -> Result<Dataset> {
    let path: PathBuf = s.require("samples", "--samples")?;
    run.input("samples", &path)?;
    let file = read_samples(&path).with_context(|| format!("reading samples {}", path.display()))?;
    let split_path: Option<PathBuf> = s.get_opt("split")?;
    let config = dataset_config(s, &file.header)?;
    let split = match split_path {
        Some(p) => {
            run.input("split", &p)?;
            read_json(&p)?
        }
        None => {
            let ids: Vec<u64> = file.samples.iter().map(|x| x.sample_id).collect();
            split_dataset(&ids, &config)?
        }
    };
    Ok(Dataset { file, config, split })
}

fn net_config(s: &mut Settings, dataset: &DatasetConfig, seed: u64) -> Result<NetConfig> {
    let d = NetConfig::desk(3 * dataset.k_vehicles, dataset.t_fwd, seed);
    let config = NetConfig {
        cell: s.get(NET_KEYS[0], d.cell)?,
        units1: s.get(NET_KEYS[1], d.units1)?,
        units2: s.get(NET_KEYS[2], d.units2)?,
        dense_units: s.get(NET_KEYS[3], d.dense_units)?,
        dropout: s.get(NET_KEYS[4], d.dropout)?,
        output_activation: s.get(NET_KEYS[5], d.output_activation)?,
        ..d
    };
    config.validate()?;
    Ok(config)
}

fn train_config(s: &mut Settings, variant: Variant, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::new(variant, seed);
    let mut config = TrainConfig {
        max_epochs: s.get(TRAIN_KEYS[0], d.max_epochs)?,
        batch_size: s.get(TRAIN_KEYS[1], d.batch_size)?,
        patience: s.get(TRAIN_KEYS[3], d.patience)?,
        mu: s.get(TRAIN_KEYS[4], d.mu)?,
        ..d
    };
    config.adam.lr = s.get(TRAIN_KEYS[2], d.adam.lr)?;
    config.validate()?;
    Ok(config)
}

pub struct SynthFlags {
    pub seed: u64,
    pub generator: Option<String>,
    pub noise: Option<f64>,
    pub w: Option<f64>,
    pub platoons: Option<usize>,
    pub steps: Option<usize>,
}

pub fn synth(f: SynthFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("seed", Some(f.seed))?;
    s.set("generator", f.generator)?;
    s.set("noise_sigma", f.noise)?;
    s.set("newell.w", f.w)?;
    s.set("platoons", f.platoons)?;
    s.set("duration_steps", f.steps)?;
    let seed = s.get("seed", f.seed)?;
    let mut config = match s.get("generator", Generator::Idm)? {
        Generator::Idm => {
            let r = IdmParams::REFERENCE;
            let params = IdmParams {
                v_free: s.get("idm.v_free", r.v_free)?,
                a_max: s.get("idm.a_max", r.a_max)?,
                b_comf: s.get("idm.b_comf", r.b_comf)?,
                s0: s.get("idm.s0", r.s0)?,
                t_gap: s.get("idm.t_gap", r.t_gap)?,
            };
            SynthConfig::idm(params, 0.0, seed)
        }
        Generator::NewellShift => SynthConfig::newell_shift(s.get("newell.w", 4.0)?, seed),
    };
    config.noise_sigma = s.get("noise_sigma", config.noise_sigma)?;
    config.platoons = s.get("platoons", config.platoons)?;
    config.vehicles_per_platoon = s.get("vehicles_per_platoon", config.vehicles_per_platoon)?;
    config.duration_steps = s.get("duration_steps", config.duration_steps)?;
    config.delta = s.get("delta", config.delta)?;
    config.validate()?;

    let path = out.join(CORPUS_FILE);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    let rows = write_corpus_csv(&config, BufWriter::new(file))?;
    run.output(path.clone());
    println!("wrote {rows} rows to {}", path.display());
    Ok(())
}

pub struct ExtractFlags {
    pub input: Option<PathBuf>,
    pub t_back: Option<usize>,
    pub t_fwd: Option<usize>,
    pub k_vehicles: Option<usize>,
    pub delta: Option<f64>,
    pub split_seed: Option<u64>,
}

pub fn extract(f: ExtractFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("input", f.input)?;
    s.set("dataset.t_back", f.t_back)?;
    s.set("dataset.t_fwd", f.t_fwd)?;
    s.set("dataset.k_vehicles", f.k_vehicles)?;
    s.set("dataset.delta", f.delta)?;
    s.set("dataset.seed", f.split_seed)?;
    let input: PathBuf = s.require("input", "--input")?;
    run.input("corpus", &input)?;
    let d = DatasetConfig::default();
    let config = DatasetConfig {
        delta: s.get("dataset.delta", d.delta)?,
        k_vehicles: s.get("dataset.k_vehicles", d.k_vehicles)?,
        t_back: s.get("dataset.t_back", d.t_back)?,
        t_fwd: s.get("dataset.t_fwd", d.t_fwd)?,
        omega_train: s.get("dataset.omega_train", d.omega_train)?,
        omega_val: s.get("dataset.omega_val", d.omega_val)?,
        seed: s.get("dataset.seed", d.seed)?,
    };
    config.validate()?;
    let series = parse_trajectory_csv(&input, config.delta)?;
    let samples = extract_samples(&series, &config)?;
    let path = out.join(SAMPLES_FILE);
    write_samples(&path, &config, &samples)?;
    run.output(path.clone());
    let ids: Vec<u64> = samples.iter().map(|x| x.sample_id).collect();
    let split = split_dataset(&ids, &config)?;
    write_json(&out.join(SPLIT_FILE), &split, run)?;
    println!(
        "extracted {} samples (train {}, val {}, test {}) to {}",
        samples.len(),
        split.train_ids.len(),
        split.val_ids.len(),
        split.test_ids.len(),
        path.display()
    );
    Ok(())
}

pub struct CalibrateFlags {
    pub samples: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub seed: u64,
    pub model: Option<String>,
    pub sample_size: Option<usize>,
    pub repetitions: Option<usize>,
}

pub fn calibrate(f: CalibrateFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("samples", f.samples)?;
    s.set("split", f.split)?;
    s.set("seed", Some(f.seed))?;
    s.set("model", f.model)?;
    s.set("sample_size", f.sample_size)?;
    s.set("repetitions", f.repetitions)?;
    let data = load_dataset(s, run)?;
    let train = data.subset(&data.split.train_ids)?;
    let model: PhysicsModel = s.get("model", PhysicsModel::Idm)?;
    let seed = s.get("seed", f.seed)?;
    let mut config = CalibrationConfig::new(model, s.get("sample_size", train.len())?, seed);
    config.repetitions = s.get("repetitions", config.repetitions)?;
    config.optimizer.restarts = s.get("optimizer.restarts", config.optimizer.restarts)?;
    config.optimizer.max_iterations = s.get("optimizer.max_iterations", config.optimizer.max_iterations)?;
    let report = monte_carlo_calibrate(&train, data.config.delta, &config)?;
    write_json(&out.join(CALIBRATION_FILE), &report, run)?;
    for p in &report.parameters {
        println!("{:<8} mean {:.6} variance {:.3e}", p.name, p.mean, p.variance);
    }
    Ok(())
}

pub struct TrainFlags {
    pub samples: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub seed: u64,
    pub variant: Option<String>,
    pub physics: Option<PathBuf>,
    pub cell: Option<String>,
    pub units1: Option<usize>,
    pub units2: Option<usize>,
    pub epochs: Option<usize>,
    pub train_size: Option<usize>,
    pub activation: Option<String>,
}

pub fn train(f: TrainFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("samples", f.samples)?;
    s.set("split", f.split)?;
    s.set("seed", Some(f.seed))?;
    s.set("variant", f.variant)?;
    s.set("physics", f.physics)?;
    s.set("net.cell", f.cell)?;
    s.set("net.units1", f.units1)?;
    s.set("net.units2", f.units2)?;
    s.set("net.output_activation", f.activation)?;
    s.set("train.max_epochs", f.epochs)?;
    s.set("train.size", f.train_size)?;
    let variant: Variant = s.require("variant", "--variant")?;
    if !variant.uses_net() {
        return Err(usage("the physics variant has no network to train; pass a calibration report to predict"));
    }
    let seed = s.get("seed", f.seed)?;
    let physics = if variant.uses_physics() {
        let path: PathBuf = s.require("physics", "--physics")?;
        Some(load_physics(&path, run)?)
    } else {
        None
    };
    let data = load_dataset(s, run)?;
    let train_ids = match s.get_opt::<usize>("train.size")? {
        Some(n) if n == 0 || n > data.split.train_ids.len() => {
            return Err(usage(format!("train.size {n} not in 1..={}", data.split.train_ids.len())))
        }
        Some(n) => nested_subset(&data.split.train_ids, n, seed),
        None => data.split.train_ids.clone(),
    };
    let train = data.subset(&train_ids)?;
    let val = data.subset(&data.split.val_ids)?;
    let norm = NormStats::from_samples(train.iter().copied())?;
    let net_config = net_config(s, &data.config, seed)?;
    let train_config = train_config(s, variant, seed)?;
    let (net, report) = train_variant(&train, &val, &norm, &train_config, &net_config, physics.as_ref(), data.config.delta)?
        .context("variant produced no network")?;
    let weights = out.join(WEIGHTS_FILE);
    net.save(
        &weights,
        WeightExtras {
            variant: Some(variant.to_string()),
            physics,
        },
    )?;
    run.output(weights);
    write_json(&out.join(TRAIN_REPORT_FILE), &report, run)?;
    println!(
        "{variant}: best epoch {} of {} with validation MSE_a {:.6}",
        report.best_epoch,
        report.per_epoch.len(),
        report.best_mse_a_val
    );
    Ok(())
}

pub struct PredictFlags {
    pub samples: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub subset: Option<String>,
    pub weights: Option<PathBuf>,
    pub physics: Option<PathBuf>,
    pub variant: Option<String>,
}

pub fn predict(f: PredictFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("samples", f.samples)?;
    s.set("split", f.split)?;
    s.set("subset", f.subset)?;
    s.set("weights", f.weights)?;
    s.set("physics", f.physics)?;
    s.set("variant", f.variant)?;
    let loaded = match s.get_opt::<PathBuf>("weights")? {
        Some(path) => {
            run.input("weights", &path)?;
            Some(RecurrentNet::load(&path).with_context(|| format!("loading weights {}", path.display()))?)
        }
        None => None,
    };
    let stored: Option<Variant> = loaded
        .as_ref()
        .and_then(|(_, file)| file.variant.as_deref())
        .map(|v| v.parse::<Variant>().map_err(perl_core::Error::Config))
        .transpose()?;
    let variant = match (s.get_opt::<Variant>("variant")?, stored) {
        (Some(a), Some(b)) if a != b => return Err(usage(format!("--variant {a} but the weights were trained as {b}"))),
        (Some(a), _) | (None, Some(a)) => a,
        (None, None) => return Err(usage("--variant is required when no weights carry one")),
    };
    let physics = match s.get_opt::<PathBuf>("physics")? {
        Some(path) => Some(load_physics(&path, run)?),
        None => loaded.as_ref().and_then(|(_, file)| file.physics),
    };
    let data = load_dataset(s, run)?;
    let ids = match s.get("subset", "test".to_string())?.as_str() {
        "train" => data.split.train_ids.clone(),
        "val" => data.split.val_ids.clone(),
        "test" => data.split.test_ids.clone(),
        "all" => data.file.samples.iter().map(|x| x.sample_id).collect(),
        other => return Err(usage(format!("unknown subset '{other}' (expected train, val, test or all)"))),
    };
    let samples = data.subset(&ids)?;
    let artifacts = Artifacts {
        net: loaded.as_ref().map(|(net, _)| net),
        physics: physics.as_ref(),
        delta: data.config.delta,
    };
    let records = predict_all(variant, &samples, &artifacts)?;
    write_json(&out.join(PREDICTIONS_FILE), &records, run)?;
    println!("{variant}: {} predictions", records.len());
    Ok(())
}

pub struct EvaluateFlags {
    pub predictions: Option<PathBuf>,
    pub samples: Option<PathBuf>,
    pub train_report: Option<PathBuf>,
    pub plot_dir: Option<PathBuf>,
}

pub fn evaluate(f: EvaluateFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("predictions", f.predictions)?;
    s.set("samples", f.samples)?;
    s.set("train_report", f.train_report)?;
    s.set("plot_dir", f.plot_dir)?;
    let predictions: PathBuf = s.require("predictions", "--predictions")?;
    run.input("predictions", &predictions)?;
    let records: Vec<PredictionRecord> = read_json(&predictions)?;
    let samples_path: PathBuf = s.require("samples", "--samples")?;
    run.input("samples", &samples_path)?;
    let file = read_samples(&samples_path)?;
    let truth: Vec<&TrajectorySample> = file.samples.iter().collect();
    let Some(first) = records.first() else { bail!(perl_core::Error::NoRows) };
    let variant = first.variant;
    if records.iter().any(|r| r.variant != variant) {
        bail!(perl_core::Error::Config("predictions mix several variants".into()));
    }
    let train_report: Option<TrainReport> = match s.get_opt::<PathBuf>("train_report")? {
        Some(path) => {
            run.input("train_report", &path)?;
            Some(read_json(&path)?)
        }
        None => None,
    };
    let metrics = mse_metrics(&records, &truth, file.header.delta)?;
    let (size, seed) = train_report.as_ref().map_or((0, 0), |t| (t.train_size, t.config.seed));
    let mut report = EvalReport::from_metrics(variant, size, seed, metrics);
    if let Some(t) = train_report {
        if t.variant != variant {
            bail!(perl_core::Error::Config(format!(
                "train report is for {} but predictions are {variant}",
                t.variant
            )));
        }
        report.physics = t.physics;
        report.output_activation = Some(t.net_config.output_activation);
        report.best_epoch = Some(t.best_epoch);
        report.convergence = t.per_epoch;
    }
    write_json(&out.join(EVAL_REPORT_FILE), &report, run)?;
    if let Some(dir) = s.get_opt::<PathBuf>("plot_dir")? {
        let (summary, convergence) = emit_plot_data(std::slice::from_ref(&report), &dir)?;
        run.output(summary);
        run.output(convergence);
    }
    println!(
        "{variant}: MSE_a {:.6} MSE_v {:.6} over {} samples ({} collisions)",
        report.mse_a_test, report.mse_v_test, report.n_samples, report.collisions
    );
    Ok(())
}

pub struct SweepFlags {
    pub samples: Option<PathBuf>,
    pub seed: u64,
    pub num_seeds: Option<usize>,
    pub sizes: Option<Vec<usize>>,
    pub variants: Option<Vec<String>>,
    pub model: Option<String>,
    pub jobs: Option<usize>,
}

pub fn sweep(f: SweepFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("samples", f.samples)?;
    s.set("seed", Some(f.seed))?;
    s.set("num_seeds", f.num_seeds)?;
    s.set("sizes", f.sizes)?;
    s.set("variants", f.variants)?;
    s.set("model", f.model)?;
    s.set("jobs", f.jobs)?;
    let path: PathBuf = s.require("samples", "--samples")?;
    run.input("samples", &path)?;
    let file = read_samples(&path)?;
    let dataset = dataset_config(s, &file.header)?;
    let base = s.get("seed", f.seed)?;
    let count: u64 = s.get("num_seeds", 5)?;
    let seeds: Vec<u64> = (0..count).map(|i| base.wrapping_add(i)).collect();
    let mut config = SweepConfig::new(dataset.clone(), seeds);
    config.data_sizes = s.get("sizes", config.data_sizes.clone())?;
    config.variants = s.get("variants", config.variants.clone())?;
    config.physics_model = s.get("model", config.physics_model)?;
    config.calibration_repetitions = s.get("calibration.repetitions", config.calibration_repetitions)?;
    let net = net_config(s, &dataset, 0)?;
    config.cell = net.cell;
    config.net.units1 = net.units1;
    config.net.units2 = net.units2;
    config.net.dense_units = net.dense_units;
    config.net.dropout = net.dropout;
    config.net.output_activation = net.output_activation;
    let train = train_config(s, Variant::Nn, 0)?;
    config.train.max_epochs = train.max_epochs;
    config.train.batch_size = train.batch_size;
    config.train.adam = train.adam;
    config.train.patience = train.patience;
    config.train.mu = train.mu;
    let jobs: usize = s.get("jobs", 1)?;

    let outcome = run_sweep(&file.samples, &config, jobs)?;
    for p in write_sweep(&outcome, out)? {
        run.output(p);
    }
    write_json(&out.join("sweep").join(SPLIT_FILE), &outcome.split, run)?;
    if !outcome.reports.is_empty() {
        let (summary, convergence) = emit_plot_data(&outcome.reports, &out.join("plots"))?;
        run.output(summary);
        run.output(convergence);
    }

    let mut by_cell: BTreeMap<(usize, String), Vec<f64>> = BTreeMap::new();
    for r in &outcome.reports {
        by_cell.entry((r.data_size, r.variant.to_string())).or_default().push(r.mse_a_test);
    }
    for ((size, variant), mut values) in by_cell {
        values.sort_by(f64::total_cmp);
        println!("size {size:>6} {variant:<8} median MSE_a {:.6} ({} seeds)", median(&values), values.len());
    }
    for failure in &outcome.failures {
        eprintln!(
            "failed: {} size {} seed {}: {}",
            failure.variant, failure.data_size, failure.seed, failure.error
        );
    }
    if !outcome.failures.is_empty() {
        return Err(PartialSweep(outcome.failures.len()).into());
    }
    Ok(())
}

/// Median of sorted values.
pub fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

pub struct GradcheckFlags {
    pub cell: Option<String>,
    pub dropout: Option<f64>,
    pub activation: Option<String>,
    pub seed: Option<u64>,
}

pub fn gradcheck(f: GradcheckFlags, s: &mut Settings, run: &mut RunRecord, out: &Path) -> Result<()> {
    s.set("cell", f.cell)?;
    s.set("dropout", f.dropout)?;
    s.set("output_activation", f.activation)?;
    s.set("seed", f.seed)?;
    let d = GradCheckConfig::default();
    let config = GradCheckConfig {
        cell: s.get::<CellType>("cell", d.cell)?,
        dropout: s.get("dropout", d.dropout)?,
        output_activation: s.get::<Activation>("output_activation", d.output_activation)?,
        seed: s.get("seed", d.seed)?,
        units1: s.get("units1", d.units1)?,
        units2: s.get("units2", d.units2)?,
        dense_units: s.get("dense_units", d.dense_units)?,
        input_dim: s.get("input_dim", d.input_dim)?,
        output_dim: s.get("output_dim", d.output_dim)?,
        steps: s.get("steps", d.steps)?,
        ..d
    };
    let report = gradient_check(&config)?;
    write_json(&out.join(GRADCHECK_FILE), &report, run)?;
    println!(
        "max relative error {:.3e} ({}[{}], {} parameters checked)",
        report.max_relative_error, report.worst_tensor, report.worst_index, report.parameters_checked
    );
    if !(report.max_relative_error < GRADCHECK_TOLERANCE) {
        bail!(perl_core::Error::Numeric(format!(
            "gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}",
            report.max_relative_error
        )));
    }
    Ok(())
}
