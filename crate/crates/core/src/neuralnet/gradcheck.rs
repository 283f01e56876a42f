use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, CellType, DropoutMasks, NetConfig, RecurrentNet};
use crate::error::{Error, Result};

/// Relative errors use `max(|analytic|, |numeric|, GRAD_FLOOR)` as the
/// denominator so vanishing gradients are compared absolutely.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub cell: CellType,
    pub units1: usize,
    pub units2: usize,
    pub dense_units: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    pub steps: usize,
    pub dropout: f64,
    pub output_activation: Activation,
    pub step_size: f64,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            cell: CellType::Lstm,
            units1: 4,
            units2: 3,
            dense_units: 3,
            input_dim: 3,
            output_dim: 2,
            steps: 5,
            dropout: 0.0,
            output_activation: Activation::Linear,
            step_size: 1e-5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub parameters_checked: usize,
}

/// Compares BPTT gradients of `c · y` (random `c`, random input) against
/// central differences over every parameter. Dropout masks are drawn once
/// and frozen. With a ReLU head the output bias is shifted to +1 so the
/// check does not sit on the kink.
pub fn gradient_check(config: &GradCheckConfig) -> Result<GradCheckReport> {
    if config.units1.max(config.units2).max(config.dense_units) > 10 || config.steps > 8 || config.steps == 0 {
        return Err(Error::Config("gradient check expects at most 10 units and 1..=8 steps".into()));
    }
    let net_config = NetConfig {
        cell: config.cell,
        units1: config.units1,
        units2: config.units2,
        dense_units: config.dense_units,
        dropout: config.dropout,
        output_dim: config.output_dim,
        input_dim: config.input_dim,
        output_activation: config.output_activation,
        seed: config.seed,
    };
    let mut net = RecurrentNet::init(&net_config)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9E37_79B9_7F4A_7C15);
    if config.output_activation == Activation::Relu {
        net.tensor_mut("out.bias").expect("out.bias").fill(1.0);
    }
    let input: Vec<f64> = (0..config.steps * config.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let projection: Vec<f64> = (0..config.output_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let masks = (config.dropout > 0.0).then(|| DropoutMasks::sample(&net_config, config.steps, &mut rng));

    let loss = |net: &RecurrentNet| -> Result<f64> {
        let (y, _) = net.forward_with_masks(&input, masks.clone())?;
        Ok(y.iter().zip(&projection).map(|(a, b)| a * b).sum())
    };
    let (_, cache) = net.forward_with_masks(&input, masks.clone())?;
    let analytic = net.backward(&cache, &projection)?;

    let names: Vec<(String, usize)> = net_config
        .layout()
        .into_iter()
        .map(|(n, s)| (n, s.iter().product()))
        .collect();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        parameters_checked: analytic.len(),
    };
    let mut flat = 0;
    for (name, len) in names {
        for index in 0..len {
            let original = net.params()[flat];
            net.params_mut()[flat] = original + config.step_size;
            let up = loss(&net)?;
            net.params_mut()[flat] = original - config.step_size;
            let down = loss(&net)?;
            net.params_mut()[flat] = original;
            let numeric = (up - down) / (2.0 * config.step_size);
            let a = analytic[flat];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(GRAD_FLOOR);
            if rel > report.max_relative_error || report.worst_tensor.is_empty() {
                report.max_relative_error = rel;
                report.worst_tensor = name.clone();
                report.worst_index = index;
            }
            flat += 1;
        }
    }
    Ok(report)
}
