//! Deterministic synthetic platoon corpora with known car-following laws.
//!
//! Every follower's acceleration at step `t + 1` is produced from the state
//! at step `t`, then speed and position advance with
//! `v[t+1] = v[t] + a[t+1] * delta` and the trapezoidal position update.
//! The same convention is used by the physics rollouts and by speed
//! reconstruction, so zero-noise corpora are reproduced to rounding error.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{derive_seed, DatasetConfig};
use crate::error::{Error, Result};
use crate::ingest::{write_trajectory_csv, RawTrajectoryRow};
use crate::physics::{euler_speed, idm_accel, interpolate_grid, newell_shift_steps, IdmParams, NewellParams, PhysicsParams};

const MAX_ATTEMPTS: usize = 10;
const SPACING_GROWTH: f64 = 1.25;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Generator {
    Idm,
    NewellShift,
}

/// Lead-vehicle speed profile: piecewise sinusoidal speed waves around a
/// base speed, occasional constant-acceleration bursts, and a weak pull back
/// to the base speed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeadProfile {
    pub base_speed: (f64, f64),
    /// Speed amplitude of each wave segment, m/s.
    pub amplitude: (f64, f64),
    /// Wave period, s.
    pub period: (f64, f64),
    pub segment_steps: usize,
    pub jump_probability: f64,
    pub jump_accel: f64,
    pub jump_steps: usize,
    pub restoring_gain: f64,
}

impl Default for LeadProfile {
    fn default() -> Self {
        Self {
            base_speed: (8.0, 16.0),
            amplitude: (0.5, 2.5),
            period: (8.0, 30.0),
            segment_steps: 200,
            jump_probability: 0.3,
            jump_accel: 1.0,
            jump_steps: 15,
            restoring_gain: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub generator: Generator,
    /// True follower law: IDM parameters for `idm`, wave speed for `newell_shift`.
    pub params: PhysicsParams,
    pub platoons: usize,
    /// Vehicles per platoon including the lead.
    pub vehicles_per_platoon: usize,
    pub duration_steps: usize,
    pub delta: f64,
    pub lead_profile: LeadProfile,
    /// Standard deviation of Gaussian noise on follower accelerations, m/s².
    pub noise_sigma: f64,
    /// Initial gap range (m) for `newell_shift`; for `idm` a multiplier
    /// range on the equilibrium gap.
    pub initial_gap: (f64, f64),
    pub seed: u64,
}

impl SynthConfig {
    /// Short platoons started near equilibrium: the IDM law with this sign
    /// convention amplifies approach speed, so long runs end in contact.
    pub fn idm(params: IdmParams, noise_sigma: f64, seed: u64) -> Self {
        Self {
            generator: Generator::Idm,
            params: PhysicsParams::Idm(params),
            platoons: 20,
            vehicles_per_platoon: 6,
            duration_steps: 120,
            delta: 0.1,
            lead_profile: LeadProfile {
                amplitude: (0.3, 1.5),
                jump_accel: 0.5,
                ..LeadProfile::default()
            },
            noise_sigma,
            initial_gap: (0.95, 1.05),
            seed,
        }
    }

    pub fn newell_shift(w: f64, seed: u64) -> Self {
        Self {
            generator: Generator::NewellShift,
            params: PhysicsParams::Newell(NewellParams { w }),
            platoons: 12,
            vehicles_per_platoon: 6,
            duration_steps: 200,
            delta: 0.1,
            lead_profile: LeadProfile {
                amplitude: (0.3, 1.0),
                jump_accel: 0.5,
                ..LeadProfile::default()
            },
            noise_sigma: 0.0,
            initial_gap: (9.0, 14.0),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.platoons == 0 || self.vehicles_per_platoon < 2 || self.duration_steps < 2 {
            return bad("synth needs platoons >= 1, vehicles_per_platoon >= 2, duration_steps >= 2".into());
        }
        if !(self.delta > 0.0) || !(self.noise_sigma >= 0.0) {
            return bad("synth needs delta > 0 and noise_sigma >= 0".into());
        }
        if !(self.initial_gap.0 > 0.0 && self.initial_gap.0 <= self.initial_gap.1) {
            return bad(format!("bad initial_gap range {:?}", self.initial_gap));
        }
        let lp = &self.lead_profile;
        if lp.segment_steps == 0 || !(lp.base_speed.0 > 0.0) || lp.base_speed.0 > lp.base_speed.1
            || lp.amplitude.0 > lp.amplitude.1 || !(lp.period.0 > 0.0) || lp.period.0 > lp.period.1
            || !(0.0..=1.0).contains(&lp.jump_probability)
        {
            return bad("bad lead profile".into());
        }
        match (self.generator, &self.params) {
            (Generator::Idm, PhysicsParams::Idm(_)) | (Generator::NewellShift, PhysicsParams::Newell(_)) => {
                self.params.validate()
            }
            _ => bad("generator and params model disagree".into()),
        }
    }

    /// Checks that each chain is observed long enough to yield samples.
    pub fn validate_for(&self, dataset: &DatasetConfig) -> Result<()> {
        self.validate()?;
        if self.duration_steps < dataset.window_len() {
            return Err(Error::Config(format!(
                "duration_steps {} shorter than T_b + T_f = {}",
                self.duration_steps,
                dataset.window_len()
            )));
        }
        if self.vehicles_per_platoon < dataset.k_vehicles {
            return Err(Error::Config("platoons smaller than K yield no samples".into()));
        }
        if (self.delta - dataset.delta).abs() > 1e-12 {
            return Err(Error::Config("synth delta differs from dataset delta".into()));
        }
        Ok(())
    }
}

/// Generates the corpus rows: platoon by platoon, vehicle by vehicle, time
/// ascending. Vehicle ids are `platoon * vehicles_per_platoon + j + 1`.
pub fn generate_corpus(config: &SynthConfig) -> Result<Vec<RawTrajectoryRow>> {
    config.validate()?;
    let platoons: Vec<Result<Vec<RawTrajectoryRow>>> = (0..config.platoons)
        .into_par_iter()
        .map(|p| generate_platoon(config, p))
        .collect();
    let mut rows = Vec::with_capacity(config.platoons * config.vehicles_per_platoon * config.duration_steps);
    for platoon in platoons {
        rows.extend(platoon?);
    }
    Ok(rows)
}

pub fn write_corpus_csv<W: std::io::Write>(config: &SynthConfig, writer: W) -> Result<usize> {
    let rows = generate_corpus(config)?;
    write_trajectory_csv(writer, &rows)?;
    Ok(rows.len())
}

struct PlatoonDraws {
    lead_accel_plan: Vec<f64>,
    base_speed: f64,
    gaps: Vec<f64>,
    noise: Vec<Vec<f64>>,
}

fn draw_platoon(config: &SynthConfig, platoon: usize) -> PlatoonDraws {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 0x5EED, platoon as u64));
    let lp = &config.lead_profile;
    let n = config.duration_steps;
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if hi > lo { rng.random_range(lo..hi) } else { lo };

    let base_speed = uniform(&mut rng, lp.base_speed);
    let mut plan = vec![0.0; n];
    let mut seg_start = 1;
    while seg_start < n {
        let amplitude = uniform(&mut rng, lp.amplitude);
        let omega = 2.0 * std::f64::consts::PI / uniform(&mut rng, lp.period);
        let phase = rng.random_range(0.0..2.0 * std::f64::consts::PI);
        let seg_end = (seg_start + lp.segment_steps).min(n);
        for (t, slot) in plan.iter_mut().enumerate().take(seg_end).skip(seg_start) {
            *slot = amplitude * omega * (omega * t as f64 * config.delta + phase).cos();
        }
        if rng.random_bool(lp.jump_probability) && lp.jump_steps > 0 {
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            let offset = rng.random_range(0..(seg_end - seg_start));
            for slot in plan.iter_mut().skip(seg_start + offset).take(lp.jump_steps.min(seg_end - seg_start - offset)) {
                *slot += sign * lp.jump_accel;
            }
        }
        seg_start = seg_end;
    }

    let followers = config.vehicles_per_platoon - 1;
    let gaps = (0..followers).map(|_| uniform(&mut rng, config.initial_gap)).collect();
    let normal = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("valid sigma");
    let noise = (0..followers)
        .map(|_| {
            (0..n)
                .map(|_| {
                    let z = normal.sample(&mut rng);
                    if config.noise_sigma > 0.0 { z } else { 0.0 }
                })
                .collect()
        })
        .collect();
    PlatoonDraws {
        lead_accel_plan: plan,
        base_speed,
        gaps,
        noise,
    }
}

fn generate_platoon(config: &SynthConfig, platoon: usize) -> Result<Vec<RawTrajectoryRow>> {
    let draws = draw_platoon(config, platoon);
    let mut scale = 1.0;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(rows) = simulate_platoon(config, platoon, &draws, scale) {
            return Ok(rows);
        }
        scale *= SPACING_GROWTH;
    }
    Err(Error::Generation(format!(
        "platoon {platoon}: gap violation persisted after {MAX_ATTEMPTS} attempts"
    )))
}

/// Returns `None` when a follower's gap reaches zero.
fn simulate_platoon(config: &SynthConfig, platoon: usize, draws: &PlatoonDraws, gap_scale: f64) -> Option<Vec<RawTrajectoryRow>> {
    let n = config.duration_steps;
    let m = config.vehicles_per_platoon;
    let delta = config.delta;
    let v0 = draws.base_speed;

    let initial_gaps: Vec<f64> = draws
        .gaps
        .iter()
        .map(|g| {
            gap_scale
                * match &config.params {
                    PhysicsParams::Idm(p) => g * idm_equilibrium_gap(v0, p),
                    _ => *g,
                }
        })
        .collect();

    let mut pos = vec![vec![0.0; n]; m];
    let mut vel = vec![vec![0.0; n]; m];
    let mut acc = vec![vec![0.0; n]; m];
    pos[0][0] = initial_gaps.iter().sum();
    for j in 1..m {
        pos[j][0] = pos[j - 1][0] - initial_gaps[j - 1];
    }
    for row in vel.iter_mut() {
        row[0] = v0;
    }

    for t in 0..n - 1 {
        let planned = draws.lead_accel_plan[t + 1] - config.lead_profile.restoring_gain * (vel[0][t] - v0);
        advance(&mut pos[0], &mut vel[0], &mut acc[0], t, planned, delta);
        for j in 1..m {
            let gap = pos[j - 1][t] - pos[j][t];
            if gap <= 0.0 {
                return None;
            }
            let law = match &config.params {
                PhysicsParams::Idm(p) => {
                    idm_accel(vel[j][t], vel[j][t] - vel[j - 1][t], gap, p).ok()?
                }
                PhysicsParams::Newell(p) => {
                    let shift = newell_shift_steps(gap, p.w, delta);
                    interpolate_grid(&acc[j - 1][..=t + 1], (t + 1) as f64 - shift)
                }
                PhysicsParams::Fvd(_) => unreachable!("validated generator"),
            };
            let a = law + draws.noise[j - 1][t + 1];
            advance(&mut pos[j], &mut vel[j], &mut acc[j], t, a, delta);
        }
    }
    if (1..m).any(|j| pos[j - 1][n - 1] - pos[j][n - 1] <= 0.0) {
        return None;
    }

    let mut rows = Vec::with_capacity(m * n);
    let first_id = (platoon * m) as i64 + 1;
    for j in 0..m {
        for t in 0..n {
            rows.push(RawTrajectoryRow {
                vehicle_id: first_id + j as i64,
                time: t as f64 * delta,
                position: pos[j][t],
                speed: vel[j][t],
                accel: acc[j][t],
                leader_id: (j > 0).then(|| first_id + j as i64 - 1),
            });
        }
    }
    Some(rows)
}

fn advance(pos: &mut [f64], vel: &mut [f64], acc: &mut [f64], t: usize, a: f64, delta: f64) {
    let (applied, v_next) = euler_speed(vel[t], a, delta);
    acc[t + 1] = applied;
    vel[t + 1] = v_next;
    pos[t + 1] = pos[t] + delta * (vel[t] + v_next) / 2.0;
}

/// Gap at which IDM acceleration is zero for a stationary platoon at speed `v`.
pub fn idm_equilibrium_gap(v: f64, params: &IdmParams) -> f64 {
    let ratio = (v / params.v_free).powi(4);
    params.desired_gap(v, 0.0) / (1.0 - ratio.min(0.99)).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{extract_samples, parse_trajectory_reader};
    use crate::physics::physics_rollout;

    fn small_idm(noise: f64) -> SynthConfig {
        SynthConfig {
            platoons: 3,
            duration_steps: 120,
            ..SynthConfig::idm(IdmParams::REFERENCE, noise, 42)
        }
    }

    fn csv_bytes(config: &SynthConfig) -> Vec<u8> {
        let mut buf = Vec::new();
        write_corpus_csv(config, &mut buf).unwrap();
        buf
    }

    #[test]
    fn idm_zero_noise_is_self_consistent() {
        let config = small_idm(0.0);
        let series = parse_trajectory_reader(&csv_bytes(&config)[..], 0.1).unwrap();
        let dataset = DatasetConfig { t_back: 10, t_fwd: 1, ..DatasetConfig::default() };
        let samples = extract_samples(&series, &dataset).unwrap();
        // 3 platoons x 3 chains x (120 - 11 + 1) windows
        assert_eq!(samples.len(), 3 * 3 * 110);
        let params = config.params;
        let worst = samples
            .iter()
            .map(|s| (physics_rollout(s, &params, 0.1).accel[0] - s.ego_future_accel[0]).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "worst residual {worst}");
    }

    #[test]
    fn newell_constant_lead_is_at_rest() {
        let mut config = SynthConfig::newell_shift(4.0, 9);
        config.platoons = 2;
        config.lead_profile.amplitude = (0.0, 0.0);
        config.lead_profile.jump_probability = 0.0;
        let rows = generate_corpus(&config).unwrap();
        assert!(rows.iter().all(|r| r.accel == 0.0));
    }

    #[test]
    fn same_config_same_bytes() {
        let config = small_idm(0.1);
        assert_eq!(csv_bytes(&config), csv_bytes(&config));
        let other = SynthConfig { seed: 43, ..config.clone() };
        assert_ne!(csv_bytes(&config), csv_bytes(&other));
    }

    #[test]
    fn generated_files_parse_and_extract() {
        let mut config = SynthConfig::newell_shift(4.0, 3);
        config.platoons = 2;
        let series = parse_trajectory_reader(&csv_bytes(&config)[..], 0.1).unwrap();
        assert_eq!(series.len(), 12);
        let dataset = DatasetConfig { t_back: 50, t_fwd: 1, ..DatasetConfig::default() };
        let samples = extract_samples(&series, &dataset).unwrap();
        assert_eq!(samples.len(), 2 * 3 * (200 - 51 + 1));
    }

    #[test]
    fn persistent_gap_violation_errors() {
        // kilometre-per-second-squared noise pushes followers through their leaders
        let config = small_idm(1000.0);
        assert!(matches!(generate_corpus(&config), Err(Error::Generation(_))));
    }

    #[test]
    fn rejects_mismatched_generator() {
        let mut config = small_idm(0.0);
        config.params = PhysicsParams::Newell(NewellParams { w: 4.0 });
        assert!(config.validate().is_err());
    }
}
