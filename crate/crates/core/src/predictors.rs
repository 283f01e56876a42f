//! The four predictor variants and their shared training loop.
//!
//! * physics: calibrated car-following rollout alone
//! * nn: network trained on ground-truth accelerations
//! * pinn: network trained on a blend of data error and physics deviation
//! * perl: physics rollout plus a network trained on the physics residual

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{derive_seed, TrajectorySample};
use crate::error::{Error, Result};
use crate::eval::mse_pair;
use crate::ingest::NormStats;
use crate::neuralnet::{adam_step, AdamConfig, AdamState, Mode, NetConfig, RecurrentNet};
use crate::physics::{physics_rollout, PhysicsParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Physics,
    Nn,
    Pinn,
    Perl,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Physics, Variant::Nn, Variant::Pinn, Variant::Perl];

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Physics => "physics",
            Variant::Nn => "nn",
            Variant::Pinn => "pinn",
            Variant::Perl => "perl",
        }
    }

    pub fn uses_net(self) -> bool {
        self != Variant::Physics
    }

    pub fn uses_physics(self) -> bool {
        matches!(self, Variant::Physics | Variant::Pinn | Variant::Perl)
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Variant {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Variant::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant '{s}' (expected physics, nn, pinn or perl)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub max_epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// Epochs without strict improvement of validation MSE^a before stopping.
    pub patience: usize,
    pub seed: u64,
    /// PINN weight on the data term.
    pub mu: f64,
}

impl TrainConfig {
    pub fn new(variant: Variant, seed: u64) -> Self {
        Self {
            variant,
            max_epochs: 200,
            batch_size: 64,
            adam: AdamConfig::default(),
            patience: 20,
            seed,
            mu: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return Err(Error::Config("batch_size, patience and max_epochs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::Config(format!("mu {} outside [0, 1]", self.mu)));
        }
        if !(self.adam.lr > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub mse_a_val: f64,
    pub mse_v_val: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub variant: Variant,
    pub config: TrainConfig,
    pub net_config: NetConfig,
    pub physics: Option<PhysicsParams>,
    pub train_size: usize,
    pub val_size: usize,
    pub per_epoch: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_mse_a_val: f64,
    pub stopped_early: bool,
}

/// Early-stopping bookkeeping on a metric to minimize.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    best_epoch: usize,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            best_epoch: 0,
            stale: 0,
        }
    }

    /// Records `value` for `epoch`; returns whether it is a new best and
    /// whether training should stop.
    pub fn observe(&mut self, epoch: usize, value: f64) -> (bool, bool) {
        if value < self.best {
            self.best = value;
            self.best_epoch = epoch;
            self.stale = 0;
            (true, false)
        } else {
            self.stale += 1;
            (false, self.stale >= self.patience)
        }
    }

    pub fn best(&self) -> (usize, f64) {
        (self.best_epoch, self.best)
    }
}

/// `r = a - a_phy` per future step.
pub fn make_residual_targets(samples: &[&TrajectorySample], params: &PhysicsParams, delta: f64) -> Vec<Vec<f64>> {
    samples
        .iter()
        .map(|s| {
            let phy = physics_rollout(s, params, delta).accel;
            s.ego_future_accel.iter().zip(&phy).map(|(a, p)| a - p).collect()
        })
        .collect()
}

fn physics_predictions(samples: &[&TrajectorySample], params: &PhysicsParams, delta: f64) -> Vec<Vec<f64>> {
    samples.iter().map(|s| physics_rollout(s, params, delta).accel).collect()
}

/// `v_j = v0 + delta * sum_{j' <= j} a_{j'}`.
pub fn reconstruct_speed(v0: f64, accel: &[f64], delta: f64) -> Vec<f64> {
    let mut sum = 0.0;
    accel
        .iter()
        .map(|a| {
            sum += a;
            v0 + delta * sum
        })
        .collect()
}

/// Per-sample loss and its gradient with respect to the network output.
/// With an anchor `(f_phy, mu)` the loss is
/// `mu * mean (y - g)^2 + (1 - mu) * mean (y - f_phy)^2`.
pub fn sample_loss(y: &[f64], target: &[f64], anchor: Option<(&[f64], f64)>) -> (f64, Vec<f64>) {
    let t = y.len() as f64;
    let sq = |a: &[f64]| -> (f64, Vec<f64>) {
        let loss = y.iter().zip(a).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / t;
        let grad = y.iter().zip(a).map(|(p, q)| 2.0 * (p - q) / t).collect();
        (loss, grad)
    };
    let (data, d_data) = sq(target);
    match anchor {
        None => (data, d_data),
        Some((phy, mu)) => {
            let (dev, d_dev) = sq(phy);
            let loss = mu * data + (1.0 - mu) * dev;
            let grad = d_data.iter().zip(&d_dev).map(|(a, b)| mu * a + (1.0 - mu) * b).collect();
            (loss, grad)
        }
    }
}

struct LoopData<'a> {
    train_inputs: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
    anchor: Option<(Vec<Vec<f64>>, f64)>,
    val: &'a [&'a TrajectorySample],
    val_inputs: Vec<Vec<f64>>,
    /// Added to network outputs before scoring validation predictions.
    val_offset: Option<Vec<Vec<f64>>>,
}

fn check_splits(train: &[&TrajectorySample], val: &[&TrajectorySample], net_config: &NetConfig) -> Result<()> {
    if train.is_empty() || val.is_empty() {
        return Err(Error::Config("training needs non-empty train and validation splits".into()));
    }
    let s = train[0];
    if net_config.input_dim != 3 * s.k() || net_config.output_dim != s.t_fwd() {
        return Err(Error::Shape(format!(
            "network expects input {} / output {}, samples give {} / {}",
            net_config.input_dim,
            net_config.output_dim,
            3 * s.k(),
            s.t_fwd()
        )));
    }
    Ok(())
}

fn run_training(
    data: LoopData,
    norm: &NormStats,
    config: &TrainConfig,
    net_config: &NetConfig,
    physics: Option<PhysicsParams>,
    delta: f64,
) -> Result<(RecurrentNet, TrainReport)> {
    config.validate()?;
    let mut net = RecurrentNet::init(net_config)?;
    net.norm_stats = Some(*norm);
    let mut adam = AdamState::new(config.adam, net.params().len());
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x0DE2, 0));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xD209, 0));
    let n = data.train_inputs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut grads = vec![0.0; net.params().len()];
    let mut stopper = EarlyStopping::new(config.patience);
    let mut best_params = net.params().to_vec();
    let mut per_epoch = Vec::new();
    let mut stopped_early = false;

    for epoch in 1..=config.max_epochs {
        order.shuffle(&mut order_rng);
        let mut epoch_loss = 0.0;
        for (batch_index, batch) in order.chunks(config.batch_size).enumerate() {
            grads.fill(0.0);
            let mut batch_loss = 0.0;
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let (y, cache) = net.forward(&data.train_inputs[i], Mode::Train, &mut dropout_rng)?;
                let anchor = data.anchor.as_ref().map(|(phy, mu)| (&phy[i][..], *mu));
                let (loss, dy) = sample_loss(&y, &data.targets[i], anchor);
                let dy: Vec<f64> = dy.iter().map(|g| g * scale).collect();
                net.backward_into(&cache, &dy, &mut grads)?;
                batch_loss += loss;
            }
            if !batch_loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}, batch {batch_index}")));
            }
            epoch_loss += batch_loss;
            adam_step(&mut net, &grads, &mut adam)?;
        }

        let preds = data
            .val_inputs
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let mut y = net.predict(x)?;
                if let Some(offset) = &data.val_offset {
                    for (a, b) in y.iter_mut().zip(&offset[i]) {
                        *a += b;
                    }
                }
                Ok(y)
            })
            .collect::<Result<Vec<_>>>()?;
        let (mse_a_val, mse_v_val) = mse_pair(&preds, data.val, delta)?;
        per_epoch.push(EpochRecord {
            epoch,
            train_loss: epoch_loss / n as f64,
            mse_a_val,
            mse_v_val,
        });
        let (improved, stop) = stopper.observe(epoch, mse_a_val);
        if improved {
            best_params.copy_from_slice(net.params());
        }
        if stop {
            stopped_early = true;
            break;
        }
    }
    net.params_mut().copy_from_slice(&best_params);
    let (best_epoch, best_mse_a_val) = stopper.best();
    let report = TrainReport {
        variant: config.variant,
        config: config.clone(),
        net_config: net_config.clone(),
        physics,
        train_size: n,
        val_size: data.val.len(),
        per_epoch,
        best_epoch,
        best_mse_a_val,
        stopped_early,
    };
    Ok((net, report))
}

fn inputs(samples: &[&TrajectorySample], norm: &NormStats) -> Vec<Vec<f64>> {
    samples.iter().map(|s| norm.input_matrix(s)).collect()
}

fn truth(samples: &[&TrajectorySample]) -> Vec<Vec<f64>> {
    samples.iter().map(|s| s.ego_future_accel.clone()).collect()
}

pub fn train_nn(
    train: &[&TrajectorySample],
    val: &[&TrajectorySample],
    norm: &NormStats,
    config: &TrainConfig,
    net_config: &NetConfig,
    delta: f64,
) -> Result<(RecurrentNet, TrainReport)> {
    check_splits(train, val, net_config)?;
    let data = LoopData {
        train_inputs: inputs(train, norm),
        targets: truth(train),
        anchor: None,
        val,
        val_inputs: inputs(val, norm),
        val_offset: None,
    };
    run_training(data, norm, config, net_config, None, delta)
}

/// Trains on `mu * data error + (1 - mu) * deviation from the frozen physics
/// prediction`.
pub fn train_pinn(
    train: &[&TrajectorySample],
    val: &[&TrajectorySample],
    norm: &NormStats,
    config: &TrainConfig,
    net_config: &NetConfig,
    physics: &PhysicsParams,
    delta: f64,
) -> Result<(RecurrentNet, TrainReport)> {
    check_splits(train, val, net_config)?;
    let data = LoopData {
        train_inputs: inputs(train, norm),
        targets: truth(train),
        anchor: Some((physics_predictions(train, physics, delta), config.mu)),
        val,
        val_inputs: inputs(val, norm),
        val_offset: None,
    };
    run_training(data, norm, config, net_config, Some(*physics), delta)
}

/// Trains the residual network; validation scores the composed prediction.
pub fn train_perl(
    train: &[&TrajectorySample],
    val: &[&TrajectorySample],
    norm: &NormStats,
    config: &TrainConfig,
    net_config: &NetConfig,
    physics: &PhysicsParams,
    delta: f64,
) -> Result<(RecurrentNet, TrainReport)> {
    check_splits(train, val, net_config)?;
    let data = LoopData {
        train_inputs: inputs(train, norm),
        targets: make_residual_targets(train, physics, delta),
        anchor: None,
        val,
        val_inputs: inputs(val, norm),
        val_offset: Some(physics_predictions(val, physics, delta)),
    };
    run_training(data, norm, config, net_config, Some(*physics), delta)
}

/// Dispatches to the variant's trainer. Physics has nothing to train.
#[allow(clippy::too_many_arguments)]
pub fn train_variant(
    train: &[&TrajectorySample],
    val: &[&TrajectorySample],
    norm: &NormStats,
    config: &TrainConfig,
    net_config: &NetConfig,
    physics: Option<&PhysicsParams>,
    delta: f64,
) -> Result<Option<(RecurrentNet, TrainReport)>> {
    let need = || physics.ok_or_else(|| Error::Config(format!("{} needs physics parameters", config.variant)));
    Ok(match config.variant {
        Variant::Physics => None,
        Variant::Nn => Some(train_nn(train, val, norm, config, net_config, delta)?),
        Variant::Pinn => Some(train_pinn(train, val, norm, config, net_config, need()?, delta)?),
        Variant::Perl => Some(train_perl(train, val, norm, config, net_config, need()?, delta)?),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub sample_id: u64,
    pub variant: Variant,
    pub predicted_accel: Vec<f64>,
    pub predicted_speed: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub physics_component: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_component: Option<Vec<f64>>,
    /// The physics rollout floored a non-positive gap.
    #[serde(default)]
    pub collision: bool,
}

/// What a variant needs at prediction time.
#[derive(Debug, Clone, Copy)]
pub struct Artifacts<'a> {
    pub net: Option<&'a RecurrentNet>,
    pub physics: Option<&'a PhysicsParams>,
    pub delta: f64,
}

pub fn predict(variant: Variant, sample: &TrajectorySample, artifacts: &Artifacts) -> Result<PredictionRecord> {
    let net_output = |net: &RecurrentNet| -> Result<Vec<f64>> {
        let norm = net
            .norm_stats
            .ok_or_else(|| Error::Config("network carries no normalization statistics".into()))?;
        net.predict(&norm.input_matrix(sample))
    };
    let net = || artifacts.net.ok_or_else(|| Error::Config(format!("{variant} needs network weights")));
    let physics = || artifacts.physics.ok_or_else(|| Error::Config(format!("{variant} needs physics parameters")));

    let mut collision = false;
    let (accel, physics_component, residual_component) = match variant {
        Variant::Physics => {
            let rollout = physics_rollout(sample, physics()?, artifacts.delta);
            collision = rollout.collision;
            (rollout.accel, None, None)
        }
        Variant::Nn | Variant::Pinn => (net_output(net()?)?, None, None),
        Variant::Perl => {
            let rollout = physics_rollout(sample, physics()?, artifacts.delta);
            collision = rollout.collision;
            let raw = net_output(net()?)?;
            let accel: Vec<f64> = rollout.accel.iter().zip(&raw).map(|(p, r)| p + r).collect();
            // stored residual is the rounded difference, so the composition identity is exact
            let residual = accel.iter().zip(&rollout.accel).map(|(a, p)| a - p).collect();
            (accel, Some(rollout.accel), Some(residual))
        }
    };
    if accel.len() != sample.t_fwd() {
        return Err(Error::Shape(format!("prediction has {} steps, expected {}", accel.len(), sample.t_fwd())));
    }
    Ok(PredictionRecord {
        sample_id: sample.sample_id,
        variant,
        predicted_speed: reconstruct_speed(sample.ego_speed_at_t0, &accel, artifacts.delta),
        predicted_accel: accel,
        physics_component,
        residual_component,
        collision,
    })
}

pub fn predict_all(variant: Variant, samples: &[&TrajectorySample], artifacts: &Artifacts) -> Result<Vec<PredictionRecord>> {
    samples.iter().map(|s| predict(variant, s, artifacts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::DatasetConfig;
    use crate::ingest::{extract_samples, parse_trajectory_reader};
    use crate::neuralnet::Activation;
    use crate::physics::IdmParams;
    use crate::synth::{write_corpus_csv, SynthConfig};
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn corpus(noise: f64, platoons: usize, t_back: usize) -> Vec<TrajectorySample> {
        let mut synth = SynthConfig::idm(IdmParams::REFERENCE, noise, 21);
        synth.platoons = platoons;
        let mut buf = Vec::new();
        write_corpus_csv(&synth, &mut buf).unwrap();
        let series = parse_trajectory_reader(&buf[..], 0.1).unwrap();
        let dataset = DatasetConfig { t_back, t_fwd: 1, ..DatasetConfig::default() };
        extract_samples(&series, &dataset).unwrap()
    }

    fn tiny_net(seed: u64) -> NetConfig {
        NetConfig {
            units1: 6,
            units2: 4,
            dense_units: 4,
            dropout: 0.1,
            ..NetConfig::desk(12, 1, seed)
        }
    }

    fn quick(variant: Variant, seed: u64) -> TrainConfig {
        TrainConfig {
            max_epochs: 4,
            batch_size: 16,
            ..TrainConfig::new(variant, seed)
        }
    }

    #[test]
    fn speed_reconstruction_examples() {
        assert_eq!(reconstruct_speed(10.0, &[1.0; 5], 0.1), vec![10.1, 10.2, 10.3, 10.4, 10.5]);
        assert_eq!(reconstruct_speed(10.0, &[0.0; 3], 0.1), vec![10.0; 3]);
        assert_eq!(reconstruct_speed(10.0, &[1.0, -1.0], 0.1), vec![10.1, 10.0]);
    }

    #[test]
    fn pinn_loss_hand_arithmetic() {
        let (loss, grad) = sample_loss(&[0.0], &[1.0], Some((&[0.5], 0.5)));
        assert_eq!(loss, 0.625);
        assert_eq!(grad, vec![0.5 * -2.0 + 0.5 * -1.0]);
    }

    #[test]
    fn residual_targets() {
        let samples = corpus(0.0, 1, 10);
        let refs: Vec<_> = samples.iter().take(20).collect();
        let params = PhysicsParams::Idm(IdmParams::REFERENCE);
        assert!(make_residual_targets(&refs, &params, 0.1).iter().flatten().all(|r| r.abs() < 1e-9));

        let mut shifted: Vec<TrajectorySample> = refs.iter().map(|s| (*s).clone()).collect();
        for s in &mut shifted {
            s.ego_future_accel = physics_rollout(s, &params, 0.1).accel.iter().map(|a| a + 0.3).collect();
        }
        let shifted_refs: Vec<_> = shifted.iter().collect();
        for r in make_residual_targets(&shifted_refs, &params, 0.1).iter().flatten() {
            assert!((r - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn early_stopping_contract() {
        let mut stop = EarlyStopping::new(1);
        assert_eq!(stop.observe(1, 1.0), (true, false));
        assert_eq!(stop.observe(2, 2.0), (false, true));
        assert_eq!(stop.best(), (1, 1.0));

        let mut stop = EarlyStopping::new(3);
        let stops: Vec<bool> = [5.0, 4.0, 4.0, 4.5, 3.9, 4.0, 4.0, 4.0].iter().enumerate().map(|(e, v)| stop.observe(e + 1, *v).1).collect();
        assert_eq!(stops, vec![false, false, false, false, false, false, false, true]);
        assert_eq!(stop.best(), (5, 3.9));
    }

    #[test]
    fn pinn_with_mu_one_matches_nn_bit_for_bit() {
        let samples = corpus(0.1, 1, 10);
        let refs: Vec<_> = samples.iter().collect();
        let (train, val) = refs.split_at(200);
        let norm = NormStats::from_samples(train.iter().copied()).unwrap();
        let params = PhysicsParams::Idm(IdmParams::REFERENCE);
        let (nn_net, nn) = train_nn(train, val, &norm, &quick(Variant::Nn, 3), &tiny_net(3), 0.1).unwrap();
        let pinn_cfg = TrainConfig { mu: 1.0, ..quick(Variant::Pinn, 3) };
        let (pinn_net, pinn) = train_pinn(train, val, &norm, &pinn_cfg, &tiny_net(3), &params, 0.1).unwrap();
        assert_eq!(nn.per_epoch, pinn.per_epoch);
        assert_eq!(nn_net.params(), pinn_net.params());
        for (a, b) in nn.per_epoch.iter().zip(&pinn.per_epoch) {
            assert_eq!(a.train_loss.to_bits(), b.train_loss.to_bits());
        }
    }

    #[test]
    fn training_is_deterministic_and_restores_best() {
        let samples = corpus(0.1, 1, 10);
        let refs: Vec<_> = samples.iter().collect();
        let (train, val) = refs.split_at(200);
        let norm = NormStats::from_samples(train.iter().copied()).unwrap();
        let params = PhysicsParams::Idm(IdmParams::REFERENCE);
        let cfg = quick(Variant::Perl, 4);
        let (net_a, a) = train_perl(train, val, &norm, &cfg, &tiny_net(4), &params, 0.1).unwrap();
        let (_, b) = train_perl(train, val, &norm, &cfg, &tiny_net(4), &params, 0.1).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());

        let artifacts = Artifacts { net: Some(&net_a), physics: Some(&params), delta: 0.1 };
        let records = predict_all(Variant::Perl, val, &artifacts).unwrap();
        let preds: Vec<_> = records.iter().map(|r| r.predicted_accel.clone()).collect();
        let (mse_a, _) = mse_pair(&preds, val, 0.1).unwrap();
        assert_eq!(mse_a, a.best_mse_a_val);
        assert_eq!(a.per_epoch[a.best_epoch - 1].mse_a_val, a.best_mse_a_val);
    }

    #[test]
    fn zero_targets_are_fit() {
        let mut samples = corpus(0.1, 1, 10);
        for s in &mut samples {
            s.ego_future_accel = vec![0.0];
        }
        let refs: Vec<_> = samples.iter().collect();
        let (train, val) = refs.split_at(200);
        let norm = NormStats::from_samples(train.iter().copied()).unwrap();
        let cfg = TrainConfig { max_epochs: 50, batch_size: 16, ..TrainConfig::new(Variant::Nn, 1) };
        let (_, report) = train_nn(train, val, &norm, &cfg, &tiny_net(1), 0.1).unwrap();
        assert!(report.best_mse_a_val < 1e-4, "{}", report.best_mse_a_val);
    }

    #[test]
    fn perl_with_zero_net_equals_physics() {
        let samples = corpus(0.1, 1, 10);
        let refs: Vec<_> = samples.iter().take(30).collect();
        let mut net = RecurrentNet::init(&tiny_net(0)).unwrap();
        net.params_mut().fill(0.0);
        net.norm_stats = Some(NormStats::from_samples(refs.iter().copied()).unwrap());
        let params = PhysicsParams::Idm(IdmParams { a_max: 1.3, ..IdmParams::REFERENCE });
        let artifacts = Artifacts { net: Some(&net), physics: Some(&params), delta: 0.1 };
        for s in &refs {
            let perl = predict(Variant::Perl, s, &artifacts).unwrap();
            let phy = predict(Variant::Physics, s, &artifacts).unwrap();
            assert_eq!(perl.predicted_accel, phy.predicted_accel);
            let nn = predict(Variant::Nn, s, &artifacts).unwrap();
            let pinn = predict(Variant::Pinn, s, &artifacts).unwrap();
            assert_eq!(nn.predicted_accel, pinn.predicted_accel);
            assert_eq!(nn.predicted_speed, pinn.predicted_speed);
        }
    }

    #[test]
    fn missing_artifacts_are_reported() {
        let samples = corpus(0.0, 1, 10);
        let artifacts = Artifacts { net: None, physics: None, delta: 0.1 };
        assert!(matches!(predict(Variant::Perl, &samples[0], &artifacts), Err(Error::Config(_))));
        let relu = NetConfig { output_activation: Activation::Relu, ..tiny_net(0) };
        assert!(relu.validate().is_ok());
    }

    proptest! {
        #[test]
        fn composition_identity_is_exact(phy in -1e3f64..1e3, r in -1e3f64..1e3, e in -20i32..20) {
            let r = r * 10f64.powi(e);
            let pred = phy + r;
            let residual = pred - phy;
            prop_assert_eq!(pred - phy - residual, 0.0);
        }

        #[test]
        fn speed_is_shift_equivariant_and_linear(v0 in 0.0f64..30.0, shift in -5.0f64..5.0, a in proptest::collection::vec(-3.0f64..3.0, 1..20)) {
            let base = reconstruct_speed(v0, &a, 0.1);
            let shifted = reconstruct_speed(v0 + shift, &a, 0.1);
            for (b, s) in base.iter().zip(&shifted) {
                prop_assert!((s - b - shift).abs() < 1e-12);
            }
            let doubled: Vec<f64> = a.iter().map(|x| 2.0 * x).collect();
            let d = reconstruct_speed(0.0, &doubled, 0.1);
            let one = reconstruct_speed(0.0, &a, 0.1);
            for (x, y) in d.iter().zip(&one) {
                prop_assert_eq!(*x, 2.0 * y);
            }
        }
    }
}
