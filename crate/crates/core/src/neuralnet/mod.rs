//! Stacked recurrent network: two recurrent layers, a dense layer and an
//! output layer, with inverted dropout at three sites.
//!
//! Parameters live in one flat vector described by a named tensor layout,
//! so gradients and Adam moments share the same indexing.

mod adam;
mod cell;
mod gradcheck;

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::NormStats;
use crate::physics::PhysicsParams;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use cell::CellType;
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport};

use cell::{layer_backward, layer_forward, LayerGrads, LayerTrace, LayerWeights};

pub const WEIGHT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Linear,
    Relu,
}

impl std::str::FromStr for Activation {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "linear" => Ok(Activation::Linear),
            "relu" => Ok(Activation::Relu),
            other => Err(format!("unknown activation '{other}' (expected linear or relu)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    pub cell: CellType,
    pub units1: usize,
    pub units2: usize,
    pub dense_units: usize,
    pub dropout: f64,
    pub output_dim: usize,
    pub input_dim: usize,
    pub output_activation: Activation,
    pub seed: u64,
}

impl NetConfig {
    /// Desk-scale preset: 32/16 recurrent units.
    pub fn desk(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            cell: CellType::Lstm,
            units1: 32,
            units2: 16,
            dense_units: 16,
            dropout: 0.2,
            output_dim,
            input_dim,
            output_activation: Activation::Linear,
            seed,
        }
    }

    /// Convergence-comparison preset: 128/64 recurrent units.
    pub fn full(input_dim: usize, output_dim: usize, seed: u64) -> Self {
        Self {
            units1: 128,
            units2: 64,
            dense_units: 64,
            ..Self::desk(input_dim, output_dim, seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if [self.units1, self.units2, self.dense_units, self.output_dim, self.input_dim].contains(&0) {
            return Err(Error::Config("network sizes must all be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", self.dropout)));
        }
        Ok(())
    }

    /// Tensor names and shapes in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let g = self.cell.gates();
        let (h1, h2) = (self.units1, self.units2);
        vec![
            ("rnn1.w_in".into(), vec![g * h1, self.input_dim]),
            ("rnn1.w_rec".into(), vec![g * h1, h1]),
            ("rnn1.bias".into(), vec![g * h1]),
            ("rnn2.w_in".into(), vec![g * h2, h1]),
            ("rnn2.w_rec".into(), vec![g * h2, h2]),
            ("rnn2.bias".into(), vec![g * h2]),
            ("dense.weight".into(), vec![self.dense_units, h2]),
            ("dense.bias".into(), vec![self.dense_units]),
            ("out.weight".into(), vec![self.output_dim, self.dense_units]),
            ("out.bias".into(), vec![self.output_dim]),
        ]
    }

    pub fn parameter_count(&self) -> usize {
        self.layout().iter().map(|(_, s)| s.iter().product::<usize>()).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Inverted-dropout multipliers (0 or `1/(1-p)`) for the three sites.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutMasks {
    /// `[T][units1]`, applied to the first layer's output sequence.
    pub seq: Vec<f64>,
    /// `[units2]`, applied to the second layer's final state.
    pub state: Vec<f64>,
    /// `[dense_units]`, applied to the dense output.
    pub dense: Vec<f64>,
}

impl DropoutMasks {
    pub fn sample(config: &NetConfig, steps: usize, rng: &mut impl Rng) -> Self {
        let keep = 1.0 - config.dropout;
        let mut draw = |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| if rng.random::<f64>() < config.dropout { 0.0 } else { 1.0 / keep })
                .collect()
        };
        Self {
            seq: draw(steps * config.units1),
            state: draw(config.units2),
            dense: draw(config.dense_units),
        }
    }
}

/// Intermediates of one forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    steps: usize,
    layer1: LayerTrace,
    layer2_input: Vec<f64>,
    layer2: LayerTrace,
    state: Vec<f64>,
    dense_out: Vec<f64>,
    output_pre: Vec<f64>,
    masks: Option<DropoutMasks>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentNet {
    pub config: NetConfig,
    pub norm_stats: Option<NormStats>,
    params: Vec<f64>,
    offsets: Vec<(usize, usize)>,
}

fn offsets_for(config: &NetConfig) -> Vec<(usize, usize)> {
    let mut at = 0;
    config
        .layout()
        .iter()
        .map(|(_, shape)| {
            let len = shape.iter().product::<usize>();
            let span = (at, at + len);
            at += len;
            span
        })
        .collect()
}

/// Tensor indices in layout order; a layer's `w_rec` and `bias` follow its `w_in`.
const RNN1_W_IN: usize = 0;
const RNN2_W_IN: usize = 3;
const DENSE_W: usize = 6;
const DENSE_B: usize = 7;
const OUT_W: usize = 8;
const OUT_B: usize = 9;

fn ensure_finite(values: &[f64], tensor: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numeric(format!("non-finite value in {tensor}")))
    }
}

impl RecurrentNet {
    /// Uniform `±sqrt(1/fan_in)` weights, zero biases, LSTM forget bias 1.
    pub fn init(config: &NetConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let layout = config.layout();
        let offsets = offsets_for(config);
        let mut params = vec![0.0; offsets.last().map_or(0, |o| o.1)];
        for ((name, shape), &(lo, hi)) in layout.iter().zip(&offsets) {
            if shape.len() == 2 {
                let bound = (1.0 / shape[1] as f64).sqrt();
                for p in &mut params[lo..hi] {
                    *p = rng.random_range(-bound..=bound);
                }
            } else if config.cell == CellType::Lstm && name.starts_with("rnn") {
                let h = shape[0] / 4;
                params[lo + h..lo + 2 * h].fill(1.0);
            }
        }
        Ok(Self {
            config: config.clone(),
            norm_stats: None,
            params,
            offsets,
        })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn tensor(&self, name: &str) -> Option<&[f64]> {
        let i = self.config.layout().iter().position(|(n, _)| n == name)?;
        Some(self.slice(i))
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let i = self.config.layout().iter().position(|(n, _)| n == name)?;
        let (lo, hi) = self.offsets[i];
        Some(&mut self.params[lo..hi])
    }

    fn slice(&self, i: usize) -> &[f64] {
        let (lo, hi) = self.offsets[i];
        &self.params[lo..hi]
    }

    fn layer(&self, first: usize, n_in: usize, hidden: usize) -> LayerWeights<'_> {
        LayerWeights {
            w_in: self.slice(first),
            w_rec: self.slice(first + 1),
            bias: self.slice(first + 2),
            n_in,
            hidden,
        }
    }

    /// Forward pass on a row-major `[T][input_dim]` matrix. Train mode
    /// samples dropout masks from `rng`; eval mode ignores it.
    pub fn forward(&self, input: &[f64], mode: Mode, rng: &mut impl Rng) -> Result<(Vec<f64>, ForwardCache)> {
        let steps = self.steps_of(input)?;
        let masks = match mode {
            Mode::Train if self.config.dropout > 0.0 => Some(DropoutMasks::sample(&self.config, steps, rng)),
            _ => None,
        };
        self.forward_with_masks(input, masks)
    }

    /// Eval-mode output without keeping the cache.
    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.forward_with_masks(input, None).map(|(y, _)| y)
    }

    fn steps_of(&self, input: &[f64]) -> Result<usize> {
        let d = self.config.input_dim;
        if input.is_empty() || input.len() % d != 0 {
            return Err(Error::Shape(format!("input length {} is not a positive multiple of {d}", input.len())));
        }
        Ok(input.len() / d)
    }

    /// Forward pass with explicit masks; `None` means no dropout.
    pub fn forward_with_masks(&self, input: &[f64], masks: Option<DropoutMasks>) -> Result<(Vec<f64>, ForwardCache)> {
        let c = &self.config;
        let steps = self.steps_of(input)?;
        ensure_finite(input, "input")?;
        if let Some(m) = &masks {
            if m.seq.len() != steps * c.units1 || m.state.len() != c.units2 || m.dense.len() != c.dense_units {
                return Err(Error::Shape("dropout masks do not match the network".into()));
            }
        }
        let layer1 = layer_forward(c.cell, &self.layer(RNN1_W_IN, c.input_dim, c.units1), input, steps);
        ensure_finite(&layer1.hidden, "rnn1 hidden state")?;
        let layer2_input = match &masks {
            Some(m) => layer1.hidden.iter().zip(&m.seq).map(|(h, k)| h * k).collect(),
            None => layer1.hidden.clone(),
        };
        let layer2 = layer_forward(c.cell, &self.layer(RNN2_W_IN, c.units1, c.units2), &layer2_input, steps);
        ensure_finite(&layer2.hidden, "rnn2 hidden state")?;
        let last = layer2.h_at(steps - 1, c.units2);
        let state: Vec<f64> = match &masks {
            Some(m) => last.iter().zip(&m.state).map(|(h, k)| h * k).collect(),
            None => last.to_vec(),
        };
        let mut dense_out = self.slice(DENSE_B).to_vec();
        cell::gemv_acc(&mut dense_out, self.slice(DENSE_W), &state);
        ensure_finite(&dense_out, "dense output")?;
        let dense_in: Vec<f64> = match &masks {
            Some(m) => dense_out.iter().zip(&m.dense).map(|(d, k)| d * k).collect(),
            None => dense_out.clone(),
        };
        let mut output_pre = self.slice(OUT_B).to_vec();
        cell::gemv_acc(&mut output_pre, self.slice(OUT_W), &dense_in);
        ensure_finite(&output_pre, "output")?;
        let output = match c.output_activation {
            Activation::Linear => output_pre.clone(),
            Activation::Relu => output_pre.iter().map(|v| v.max(0.0)).collect(),
        };
        Ok((
            output,
            ForwardCache {
                input: input.to_vec(),
                steps,
                layer1,
                layer2_input,
                layer2,
                state,
                dense_out,
                output_pre,
                masks,
            },
        ))
    }

    /// Gradients of `output_grad · output` with respect to every parameter,
    /// in the flat parameter layout.
    pub fn backward(&self, cache: &ForwardCache, output_grad: &[f64]) -> Result<Vec<f64>> {
        let mut grads = vec![0.0; self.params.len()];
        self.backward_into(cache, output_grad, &mut grads)?;
        Ok(grads)
    }

    /// As [`RecurrentNet::backward`], accumulating into `grads`.
    pub fn backward_into(&self, cache: &ForwardCache, output_grad: &[f64], grads: &mut [f64]) -> Result<()> {
        let c = &self.config;
        if output_grad.len() != c.output_dim || grads.len() != self.params.len() {
            return Err(Error::Shape(format!(
                "output gradient length {} (expected {}) or gradient buffer {} (expected {})",
                output_grad.len(),
                c.output_dim,
                grads.len(),
                self.params.len()
            )));
        }
        let steps = cache.steps;
        let mut spans: Vec<&mut [f64]> = Vec::with_capacity(self.offsets.len());
        let mut rest = grads;
        for &(lo, hi) in &self.offsets {
            let (head, tail) = rest.split_at_mut(hi - lo);
            spans.push(head);
            rest = tail;
        }
        let [g1_in, g1_rec, g1_b, g2_in, g2_rec, g2_b, gd_w, gd_b, go_w, go_b]: [&mut [f64]; 10] =
            spans.try_into().expect("ten tensors");

        let d_pre: Vec<f64> = match c.output_activation {
            Activation::Linear => output_grad.to_vec(),
            Activation::Relu => output_grad
                .iter()
                .zip(&cache.output_pre)
                .map(|(g, p)| if *p > 0.0 { *g } else { 0.0 })
                .collect(),
        };
        let dense_in: Vec<f64> = match &cache.masks {
            Some(m) => cache.dense_out.iter().zip(&m.dense).map(|(d, k)| d * k).collect(),
            None => cache.dense_out.clone(),
        };
        for (b, d) in go_b.iter_mut().zip(&d_pre) {
            *b += d;
        }
        let mut d_dense_in = vec![0.0; c.dense_units];
        cell::gemv_back(&d_pre, self.slice(OUT_W), &dense_in, go_w, Some(&mut d_dense_in));
        let d_dense: Vec<f64> = match &cache.masks {
            Some(m) => d_dense_in.iter().zip(&m.dense).map(|(d, k)| d * k).collect(),
            None => d_dense_in,
        };
        for (b, d) in gd_b.iter_mut().zip(&d_dense) {
            *b += d;
        }
        let mut d_state = vec![0.0; c.units2];
        cell::gemv_back(&d_dense, self.slice(DENSE_W), &cache.state, gd_w, Some(&mut d_state));

        let mut dh2 = vec![0.0; steps * c.units2];
        for (j, d) in d_state.iter().enumerate() {
            let k = cache.masks.as_ref().map_or(1.0, |m| m.state[j]);
            dh2[(steps - 1) * c.units2 + j] = d * k;
        }
        let mut grads2 = LayerGrads {
            w_in: g2_in,
            w_rec: g2_rec,
            bias: g2_b,
        };
        let layer2 = self.layer(RNN2_W_IN, c.units1, c.units2);
        let mut dh1 = layer_backward(c.cell, &layer2, &cache.layer2_input, &cache.layer2, &dh2, &mut grads2, true);
        if let Some(m) = &cache.masks {
            for (d, k) in dh1.iter_mut().zip(&m.seq) {
                *d *= k;
            }
        }
        let mut grads1 = LayerGrads {
            w_in: g1_in,
            w_rec: g1_rec,
            bias: g1_b,
        };
        let layer1 = self.layer(RNN1_W_IN, c.input_dim, c.units1);
        layer_backward(c.cell, &layer1, &cache.input, &cache.layer1, &dh1, &mut grads1, false);
        Ok(())
    }

    pub fn to_weight_file(&self, extras: WeightExtras) -> WeightFile {
        let tensors = self
            .config
            .layout()
            .into_iter()
            .zip(&self.offsets)
            .map(|((name, shape), &(lo, hi))| {
                (
                    name,
                    Tensor {
                        shape,
                        values: self.params[lo..hi].to_vec(),
                    },
                )
            })
            .collect();
        WeightFile {
            format_version: WEIGHT_FORMAT_VERSION,
            net_config: self.config.clone(),
            norm_stats: self.norm_stats,
            variant: extras.variant,
            physics: extras.physics,
            tensors,
        }
    }

    pub fn from_weight_file(file: &WeightFile) -> Result<Self> {
        if file.format_version != WEIGHT_FORMAT_VERSION {
            return Err(Error::Config(format!("unsupported weight format version {}", file.format_version)));
        }
        let mut net = Self::init(&file.net_config)?;
        net.norm_stats = file.norm_stats;
        if file.tensors.len() != net.offsets.len() {
            return Err(Error::Shape(format!("expected {} tensors, found {}", net.offsets.len(), file.tensors.len())));
        }
        for ((name, shape), &(lo, hi)) in file.net_config.layout().iter().zip(&net.offsets) {
            let t = file
                .tensors
                .get(name)
                .ok_or_else(|| Error::Shape(format!("missing tensor {name}")))?;
            if &t.shape != shape || t.values.len() != hi - lo {
                return Err(Error::Shape(format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape)));
            }
            ensure_finite(&t.values, name)?;
            net.params[lo..hi].copy_from_slice(&t.values);
        }
        Ok(net)
    }

    pub fn save(&self, path: impl AsRef<Path>, extras: WeightExtras) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(&self.to_weight_file(extras))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<(Self, WeightFile)> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: WeightFile = serde_json::from_str(&text)?;
        Ok((Self::from_weight_file(&file)?, file))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

/// Metadata stored beside the tensors so a weight file is self-describing.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct WeightExtras {
    pub variant: Option<String>,
    pub physics: Option<PhysicsParams>,
}

/// On-disk network. Floats use shortest round-trip decimal encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format_version: u32,
    pub net_config: NetConfig,
    pub norm_stats: Option<NormStats>,
    #[serde(default)]
    pub variant: Option<String>,
    #[serde(default)]
    pub physics: Option<PhysicsParams>,
    pub tensors: BTreeMap<String, Tensor>,
}
