//! Least-squares calibration of the physics models on one-step accelerations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{derive_seed, TrajectorySample};
use crate::error::{Error, Result};
use crate::physics::{physics_rollout_horizon, PhysicsModel, PhysicsParams};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub lo: f64,
    pub hi: f64,
}

impl Bounds {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    /// Logistic map from the unbounded optimizer space into `[lo, hi]`.
    pub fn from_unbounded(&self, u: f64) -> f64 {
        let s = 1.0 / (1.0 + (-u).exp());
        (self.lo + (self.hi - self.lo) * s).clamp(self.lo, self.hi)
    }

    pub fn to_unbounded(&self, x: f64) -> f64 {
        let s = ((x - self.lo) / (self.hi - self.lo)).clamp(1e-12, 1.0 - 1e-12);
        (s / (1.0 - s)).ln()
    }

    pub fn contains(&self, x: f64) -> bool {
        (self.lo..=self.hi).contains(&x)
    }
}

/// Search box per model, ordered as [`PhysicsModel::free_parameter_names`].
pub fn default_bounds(model: PhysicsModel) -> Vec<Bounds> {
    match model {
        PhysicsModel::Newell => vec![Bounds::new(1.0, 10.0)],
        PhysicsModel::Idm => vec![
            Bounds::new(5.0, 40.0),
            Bounds::new(0.1, 4.0),
            Bounds::new(0.5, 6.0),
            Bounds::new(0.1, 10.0),
            Bounds::new(0.1, 4.0),
        ],
        PhysicsModel::Fvd => vec![Bounds::new(0.001, 2.0), Bounds::new(0.0, 2.0)],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerSettings {
    /// Final bracket width of the golden-section search on `w`, m/s.
    pub golden_tolerance: f64,
    /// Spacing of the coarse scan that brackets the golden-section search.
    pub golden_scan_step: f64,
    pub restarts: usize,
    /// Nelder-Mead stops when the simplex diameter in transformed space falls below this.
    pub simplex_tolerance: f64,
    pub max_iterations: usize,
    /// Initial simplex edge in transformed space.
    pub initial_step: f64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            golden_tolerance: 1e-7,
            golden_scan_step: 0.1,
            restarts: 5,
            simplex_tolerance: 1e-6,
            max_iterations: 2000,
            initial_step: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub model: PhysicsModel,
    pub sample_size: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub bounds: Vec<Bounds>,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
}

impl CalibrationConfig {
    pub fn new(model: PhysicsModel, sample_size: usize, seed: u64) -> Self {
        Self {
            model,
            sample_size,
            repetitions: 5,
            seed,
            bounds: default_bounds(model),
            optimizer: OptimizerSettings::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_size == 0 || self.repetitions == 0 {
            return Err(Error::Config("calibration needs sample_size >= 1 and repetitions >= 1".into()));
        }
        if self.bounds.len() != self.model.free_parameter_names().len() {
            return Err(Error::Config(format!(
                "{} needs {} bounds, got {}",
                self.model,
                self.model.free_parameter_names().len(),
                self.bounds.len()
            )));
        }
        if let Some(b) = self.bounds.iter().find(|b| !(b.lo < b.hi) || !b.lo.is_finite() || !b.hi.is_finite()) {
            return Err(Error::Config(format!("bounds need lo < hi, got [{}, {}]", b.lo, b.hi)));
        }
        let o = &self.optimizer;
        if !(o.golden_tolerance > 0.0) || !(o.golden_scan_step > 0.0) || o.restarts == 0 || o.max_iterations == 0 {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }

    fn template(&self) -> PhysicsParams {
        self.model.reference_params()
    }
}

/// Mean squared one-step acceleration error of `params` over `samples`.
pub fn objective(samples: &[&TrajectorySample], params: &PhysicsParams, delta: f64) -> f64 {
    let total: f64 = samples
        .iter()
        .map(|s| {
            let predicted = physics_rollout_horizon(s, params, delta, 1).accel[0];
            let e = predicted - s.ego_future_accel[0];
            e * e
        })
        .sum();
    total / samples.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub params: PhysicsParams,
    pub objective: f64,
}

/// Fits the configured model to `samples`. `seed` drives the Nelder-Mead
/// restart points; the Newell search is deterministic.
pub fn fit_physics(samples: &[&TrajectorySample], delta: f64, config: &CalibrationConfig, seed: u64) -> Result<Fit> {
    config.validate()?;
    if samples.is_empty() {
        return Err(Error::Calibration("no samples to calibrate on".into()));
    }
    let template = config.template();
    let eval = |values: &[f64]| {
        let f = objective(samples, &template.with_free_values(values), delta);
        if f.is_finite() {
            f
        } else {
            f64::INFINITY
        }
    };
    let (best, value) = match config.model {
        PhysicsModel::Newell => {
            let (w, f) = golden_section(|w| eval(&[w]), config.bounds[0], &config.optimizer);
            (vec![w], f)
        }
        PhysicsModel::Idm | PhysicsModel::Fvd => bounded_nelder_mead(eval, &config.bounds, &config.optimizer, seed),
    };
    if !value.is_finite() {
        return Err(Error::Calibration(format!("{}: every candidate evaluation was non-finite", config.model)));
    }
    Ok(Fit {
        params: template.with_free_values(&best),
        objective: value,
    })
}

/// Coarse scan to bracket the minimum, then golden-section refinement.
/// Returns the best point seen overall.
fn golden_section(f: impl Fn(f64) -> f64, bounds: Bounds, settings: &OptimizerSettings) -> (f64, f64) {
    let n = ((bounds.hi - bounds.lo) / settings.golden_scan_step).ceil() as usize;
    let grid = |i: usize| (bounds.lo + i as f64 * settings.golden_scan_step).min(bounds.hi);
    let (mut best_x, mut best_f) = (bounds.lo, f64::INFINITY);
    let mut best_i = 0;
    for i in 0..=n {
        let x = grid(i);
        let fx = f(x);
        if fx < best_f {
            (best_x, best_f, best_i) = (x, fx, i);
        }
    }
    let mut a = grid(best_i.saturating_sub(1));
    let mut b = grid((best_i + 1).min(n));
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > settings.golden_tolerance {
        if fc <= fd {
            b = d;
            (d, fd) = (c, fc);
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            (c, fc) = (d, fd);
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    for (x, fx) in [(c, fc), (d, fd)] {
        if fx < best_f {
            (best_x, best_f) = (x, fx);
        }
    }
    (best_x, best_f)
}

/// Nelder-Mead over the logistic transform of `bounds`, restarted from
/// seeded uniform points in the box. Returns the best vertex of all runs.
fn bounded_nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    bounds: &[Bounds],
    settings: &OptimizerSettings,
    seed: u64,
) -> (Vec<f64>, f64) {
    let to_box = |u: &[f64]| -> Vec<f64> { u.iter().zip(bounds).map(|(u, b)| b.from_unbounded(*u)).collect() };
    let g = |u: &[f64]| f(&to_box(u));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = (Vec::new(), f64::INFINITY);
    for _ in 0..settings.restarts {
        let start: Vec<f64> = bounds.iter().map(|b| b.to_unbounded(rng.random_range(b.lo..b.hi))).collect();
        let (u, fu) = nelder_mead(&g, &start, settings);
        if fu < best.1 || best.0.is_empty() {
            best = (u, fu);
        }
    }
    (to_box(&best.0), best.1)
}

/// Standard Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink 1/2).
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, start: &[f64], settings: &OptimizerSettings) -> (Vec<f64>, f64) {
    let n = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((start.to_vec(), f(start)));
    for i in 0..n {
        let mut p = start.to_vec();
        p[i] += settings.initial_step;
        let fp = f(&p);
        simplex.push((p, fp));
    }
    let combine = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> { a.iter().zip(b).map(|(a, b)| a + t * (b - a)).collect() };

    for _ in 0..settings.max_iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let diameter = simplex
            .iter()
            .flat_map(|a| simplex.iter().map(move |b| (a, b)))
            .map(|(a, b)| a.0.iter().zip(&b.0).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt())
            .fold(0.0, f64::max);
        if diameter < settings.simplex_tolerance {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (p, _) in &simplex[..n] {
            for (c, x) in centroid.iter_mut().zip(p) {
                *c += x / n as f64;
            }
        }
        let worst = simplex[n].clone();
        let reflected = combine(&centroid, &worst.0, -1.0);
        let fr = f(&reflected);
        if fr < simplex[0].1 {
            let expanded = combine(&centroid, &worst.0, -2.0);
            let fe = f(&expanded);
            simplex[n] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflected, fr);
        } else {
            let (contracted, fc) = if fr < worst.1 {
                let c = combine(&centroid, &reflected, 0.5);
                let fc = f(&c);
                (c, fc)
            } else {
                let c = combine(&centroid, &worst.0, 0.5);
                let fc = f(&c);
                (c, fc)
            };
            if fc < worst.1.min(fr) {
                simplex[n] = (contracted, fc);
            } else {
                let best = simplex[0].0.clone();
                for vertex in simplex.iter_mut().skip(1) {
                    let p = combine(&best, &vertex.0, 0.5);
                    let fp = f(&p);
                    *vertex = (p, fp);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: f64,
    /// Population variance over repetitions.
    pub variance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionFit {
    pub repetition: usize,
    pub params: PhysicsParams,
    pub train_mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub model: PhysicsModel,
    pub sample_size: usize,
    pub repetitions: usize,
    pub seed: u64,
    pub parameters: Vec<ParameterSummary>,
    /// Parameter means; the calibrated model used downstream.
    pub mean_params: PhysicsParams,
    pub fits: Vec<RepetitionFit>,
}

/// Repeats `fit_physics` on `repetitions` random subsets of `sample_size`
/// training samples and aggregates the fitted parameters.
pub fn monte_carlo_calibrate(train: &[&TrajectorySample], delta: f64, config: &CalibrationConfig) -> Result<CalibrationReport> {
    config.validate()?;
    if train.len() < config.sample_size {
        return Err(Error::Config(format!(
            "calibration sample size {} exceeds the {} training samples",
            config.sample_size,
            train.len()
        )));
    }
    let fits: Vec<Result<RepetitionFit>> = (0..config.repetitions)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0xCA1B, r as u64));
            let mut picked = rand::seq::index::sample(&mut rng, train.len(), config.sample_size).into_vec();
            picked.sort_unstable();
            let subset: Vec<&TrajectorySample> = picked.iter().map(|&i| train[i]).collect();
            let fit = fit_physics(&subset, delta, config, derive_seed(config.seed, 0x0F17, r as u64))
                .map_err(|e| Error::Calibration(format!("repetition {r}: {e}")))?;
            Ok(RepetitionFit {
                repetition: r,
                params: fit.params,
                train_mse: fit.objective,
            })
        })
        .collect();
    let fits = fits.into_iter().collect::<Result<Vec<_>>>()?;

    let names = config.model.free_parameter_names();
    let values: Vec<Vec<f64>> = fits.iter().map(|f| f.params.free_values()).collect();
    let r = fits.len() as f64;
    let parameters: Vec<ParameterSummary> = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let mean = values.iter().map(|v| v[i]).sum::<f64>() / r;
            let variance = values.iter().map(|v| (v[i] - mean).powi(2)).sum::<f64>() / r;
            ParameterSummary {
                name: name.to_string(),
                mean,
                variance,
            }
        })
        .collect();
    let means: Vec<f64> = parameters.iter().map(|p| p.mean).collect();
    Ok(CalibrationReport {
        model: config.model,
        sample_size: config.sample_size,
        repetitions: config.repetitions,
        seed: config.seed,
        mean_params: config.template().with_free_values(&means),
        parameters,
        fits,
    })
}
