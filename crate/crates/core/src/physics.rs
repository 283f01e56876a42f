//! Car-following models used as acceleration predictors over the horizon.
//!
//! Three models are provided: an adapted Newell model that copies a
//! leader's acceleration after a distance/wave-speed delay, the Intelligent
//! Driver Model, and the Full Velocity Difference model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::domain::TrajectorySample;
use crate::error::{Error, Result};

/// Gap substituted when a rollout drives the ego into its leader.
pub const COLLISION_GAP_FLOOR: f64 = 0.1;

/// Shifts within this many steps of an integer are treated as integral.
const SHIFT_SNAP: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhysicsModel {
    Newell,
    Idm,
    Fvd,
}

impl PhysicsModel {
    pub const ALL: [PhysicsModel; 3] = [PhysicsModel::Newell, PhysicsModel::Idm, PhysicsModel::Fvd];

    pub fn as_str(&self) -> &'static str {
        match self {
            PhysicsModel::Newell => "newell",
            PhysicsModel::Idm => "idm",
            PhysicsModel::Fvd => "fvd",
        }
    }

    /// Names of the parameters fitted during calibration, in vector order.
    pub fn free_parameter_names(&self) -> &'static [&'static str] {
        match self {
            PhysicsModel::Newell => &["w"],
            PhysicsModel::Idm => &["v_free", "a_max", "b_comf", "s0", "t_gap"],
            PhysicsModel::Fvd => &["kappa", "lambda"],
        }
    }

    pub fn reference_params(&self) -> PhysicsParams {
        match self {
            PhysicsModel::Newell => PhysicsParams::Newell(NewellParams::REFERENCE),
            PhysicsModel::Idm => PhysicsParams::Idm(IdmParams::REFERENCE),
            PhysicsModel::Fvd => PhysicsParams::Fvd(FvdParams::REFERENCE),
        }
    }
}

impl fmt::Display for PhysicsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PhysicsModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "newell" => Ok(PhysicsModel::Newell),
            "idm" => Ok(PhysicsModel::Idm),
            "fvd" => Ok(PhysicsModel::Fvd),
            other => Err(Error::Config(format!("unknown physics model '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NewellParams {
    /// Wave speed, m/s.
    pub w: f64,
}

impl NewellParams {
    /// US-101 calibration at 12000 training samples.
    pub const REFERENCE: NewellParams = NewellParams { w: 4.01 };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IdmParams {
    /// Free-flow speed, m/s.
    pub v_free: f64,
    /// Maximum acceleration, m/s².
    pub a_max: f64,
    /// Comfortable deceleration, m/s².
    pub b_comf: f64,
    /// Minimum gap, m.
    pub s0: f64,
    /// Desired time gap, s.
    pub t_gap: f64,
}

impl IdmParams {
    /// US-101 calibration at 12000 training samples.
    pub const REFERENCE: IdmParams = IdmParams {
        v_free: 22.495,
        a_max: 0.911,
        b_comf: 2.859,
        s0: 1.627,
        t_gap: 1.132,
    };

    /// Desired gap `S(v, dv)`; `dv` is ego speed minus leader speed.
    pub fn desired_gap(&self, v: f64, dv: f64) -> f64 {
        self.s0 + self.t_gap * v - v * dv / (2.0 * (self.a_max * self.b_comf).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FvdParams {
    /// Optimal-speed sensitivity, 1/s.
    pub kappa: f64,
    /// Relative-speed sensitivity, 1/s.
    pub lambda: f64,
    pub v1: f64,
    pub v2: f64,
    pub c1: f64,
    pub c2: f64,
    /// Vehicle length inside the optimal-speed function, m.
    pub l_c: f64,
}

impl FvdParams {
    pub const V1: f64 = 6.75;
    pub const V2: f64 = 7.91;
    pub const C1: f64 = 0.13;
    pub const C2: f64 = 1.54;
    pub const L_C: f64 = 5.0;

    pub const REFERENCE: FvdParams = FvdParams::with_sensitivities(0.007, 0.137);

    /// Parameters with the standard optimal-speed constants.
    pub const fn with_sensitivities(kappa: f64, lambda: f64) -> Self {
        Self {
            kappa,
            lambda,
            v1: Self::V1,
            v2: Self::V2,
            c1: Self::C1,
            c2: Self::C2,
            l_c: Self::L_C,
        }
    }

    pub fn optimal_speed(&self, gap: f64) -> f64 {
        self.v1 + self.v2 * (self.c1 * (gap - self.l_c) - self.c2).tanh()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase")]
pub enum PhysicsParams {
    Newell(NewellParams),
    Idm(IdmParams),
    Fvd(FvdParams),
}

impl PhysicsParams {
    pub fn model(&self) -> PhysicsModel {
        match self {
            PhysicsParams::Newell(_) => PhysicsModel::Newell,
            PhysicsParams::Idm(_) => PhysicsModel::Idm,
            PhysicsParams::Fvd(_) => PhysicsModel::Fvd,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            PhysicsParams::Newell(p) => p.w > 0.0 && p.w.is_finite(),
            PhysicsParams::Idm(p) => [p.v_free, p.a_max, p.b_comf, p.s0, p.t_gap]
                .iter()
                .all(|x| *x > 0.0 && x.is_finite()),
            PhysicsParams::Fvd(p) => {
                p.kappa >= 0.0
                    && p.lambda >= 0.0
                    && p.c1 > 0.0
                    && [p.kappa, p.lambda, p.v1, p.v2, p.c1, p.c2, p.l_c]
                        .iter()
                        .all(|x| x.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Domain(format!("invalid {} parameters: {self:?}", self.model())))
        }
    }

    /// The calibrated parameters as a vector, ordered as
    /// [`PhysicsModel::free_parameter_names`].
    pub fn free_values(&self) -> Vec<f64> {
        match self {
            PhysicsParams::Newell(p) => vec![p.w],
            PhysicsParams::Idm(p) => vec![p.v_free, p.a_max, p.b_comf, p.s0, p.t_gap],
            PhysicsParams::Fvd(p) => vec![p.kappa, p.lambda],
        }
    }

    /// Copy of `self` with the calibrated parameters replaced; fixed
    /// constants (the FVD optimal-speed function) are kept.
    pub fn with_free_values(&self, values: &[f64]) -> Self {
        assert_eq!(values.len(), self.model().free_parameter_names().len());
        match self {
            PhysicsParams::Newell(_) => PhysicsParams::Newell(NewellParams { w: values[0] }),
            PhysicsParams::Idm(_) => PhysicsParams::Idm(IdmParams {
                v_free: values[0],
                a_max: values[1],
                b_comf: values[2],
                s0: values[3],
                t_gap: values[4],
            }),
            PhysicsParams::Fvd(p) => PhysicsParams::Fvd(FvdParams {
                kappa: values[0],
                lambda: values[1],
                ..*p
            }),
        }
    }
}

/// IDM acceleration for ego speed `v`, approach rate `dv` (ego minus
/// leader speed) and gap `gap`.
pub fn idm_accel(v: f64, dv: f64, gap: f64, params: &IdmParams) -> Result<f64> {
    if !(gap > 0.0) {
        return Err(Error::Domain(format!("IDM gap must be positive, got {gap}")));
    }
    let free = (v / params.v_free).powi(4);
    let interaction = (params.desired_gap(v, dv) / gap).powi(2);
    Ok(params.a_max * (1.0 - free - interaction))
}

/// FVD acceleration. `dv` is the relative speed term multiplied by
/// `lambda`; rollouts pass leader speed minus ego speed.
pub fn fvd_accel(v: f64, dv: f64, gap: f64, params: &FvdParams) -> f64 {
    params.kappa * (params.optimal_speed(gap) - v) + params.lambda * dv
}

/// Linear interpolation on a unit-spaced grid at fractional index `pos`,
/// clamped to the grid's ends.
pub(crate) fn interpolate_grid(series: &[f64], pos: f64) -> f64 {
    let last = series.len() - 1;
    let pos = pos.clamp(0.0, last as f64);
    let lo = pos.floor() as usize;
    let frac = pos - lo as f64;
    if frac == 0.0 || lo == last {
        series[lo]
    } else {
        series[lo] * (1.0 - frac) + series[lo + 1] * frac
    }
}

/// Time shift `distance / w` expressed in steps of `delta`.
pub fn newell_shift_steps(distance: f64, w: f64, delta: f64) -> f64 {
    let steps = distance / w / delta;
    let nearest = steps.round();
    if (steps - nearest).abs() < SHIFT_SNAP {
        nearest
    } else {
        steps
    }
}

/// Which leader a Newell prediction copies, and whether its source times
/// had to be clamped into the observed history.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NewellSource {
    pub leader: usize,
    pub clamped: bool,
}

/// Picks the closest leader whose delayed source times for all `horizon`
/// steps fall inside the observed history; otherwise the farthest leader
/// with clamped source times.
pub fn newell_source(sample: &TrajectorySample, w: f64, delta: f64, horizon: usize) -> NewellSource {
    let tb = sample.t_back() as f64;
    let ego = sample.ego_index();
    (0..ego)
        .rev()
        .find(|&k| {
            let shift = newell_shift_steps(sample.distance_from_ego(k), w, delta);
            shift >= horizon as f64 && shift <= tb
        })
        .map_or(
            NewellSource {
                leader: 0,
                clamped: true,
            },
            |leader| NewellSource {
                leader,
                clamped: false,
            },
        )
}

pub fn newell_predict(sample: &TrajectorySample, params: &NewellParams, delta: f64) -> Vec<f64> {
    newell_predict_horizon(sample, params, delta, sample.t_fwd())
}

/// Adapted Newell prediction: the ego's acceleration at `t0 + j * delta` is
/// the chosen leader's acceleration at `t0 + j * delta - D / w`, with `D`
/// the leader-ego distance frozen at `t0`.
pub fn newell_predict_horizon(
    sample: &TrajectorySample,
    params: &NewellParams,
    delta: f64,
    horizon: usize,
) -> Vec<f64> {
    let source = newell_source(sample, params.w, delta, horizon);
    let shift = newell_shift_steps(sample.distance_from_ego(source.leader), params.w, delta);
    let accels: Vec<f64> = sample.history[source.leader].iter().map(|s| s.accel).collect();
    let t0 = (sample.t_back() - 1) as f64;
    (1..=horizon)
        .map(|j| interpolate_grid(&accels, t0 + j as f64 - shift))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rollout {
    pub accel: Vec<f64>,
    /// The ego's gap reached zero at some step and was floored.
    pub collision: bool,
}

pub fn physics_rollout(sample: &TrajectorySample, params: &PhysicsParams, delta: f64) -> Rollout {
    physics_rollout_horizon(sample, params, delta, sample.t_fwd())
}

/// Multi-step physics prediction.
///
/// Newell delegates to [`newell_predict_horizon`]. IDM and FVD run an
/// explicit-Euler self-rollout of the ego from its `t0` state, while the
/// immediate leader replays its realized future accelerations. Speeds are
/// clamped at zero; the emitted acceleration is the one actually applied.
pub fn physics_rollout_horizon(
    sample: &TrajectorySample,
    params: &PhysicsParams,
    delta: f64,
    horizon: usize,
) -> Rollout {
    let model_accel = |v: f64, v_lead: f64, gap: f64| -> f64 {
        match params {
            PhysicsParams::Idm(p) => idm_accel(v, v - v_lead, gap, p).expect("gap floored positive"),
            PhysicsParams::Fvd(p) => fvd_accel(v, v_lead - v, gap, p),
            PhysicsParams::Newell(_) => unreachable!(),
        }
    };
    if let PhysicsParams::Newell(p) = params {
        return Rollout {
            accel: newell_predict_horizon(sample, p, delta, horizon),
            collision: false,
        };
    }
    let ego = sample.ego_index();
    let leader = ego - 1;
    let mut v = sample.state_at_t0(ego).speed;
    let mut x = sample.position_at_t0(ego);
    let mut v_lead = sample.state_at_t0(leader).speed;
    let mut x_lead = sample.position_at_t0(leader);
    let lead_future = &sample.leader_future_accel[leader];

    let mut collision = false;
    let mut accel = Vec::with_capacity(horizon);
    for j in 0..horizon {
        let mut gap = x_lead - x;
        if gap <= 0.0 {
            collision = true;
            gap = COLLISION_GAP_FLOOR;
        }
        let (a, v_next) = euler_speed(v, model_accel(v, v_lead, gap), delta);
        accel.push(a);
        x += delta * (v + v_next) / 2.0;
        v = v_next;

        // leader future beyond the recorded horizon holds its last value
        let a_lead = lead_future.get(j).or(lead_future.last()).copied().unwrap_or(0.0);
        let (_, v_lead_next) = euler_speed(v_lead, a_lead, delta);
        x_lead += delta * (v_lead + v_lead_next) / 2.0;
        v_lead = v_lead_next;
    }
    Rollout { accel, collision }
}

/// One Euler speed update with the speed clamped at zero. Returns the
/// acceleration actually applied and the new speed.
pub(crate) fn euler_speed(v: f64, a: f64, delta: f64) -> (f64, f64) {
    let next = v + a * delta;
    if next < 0.0 {
        (-v / delta, 0.0)
    } else {
        (a, next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::VehicleState;
    use proptest::prelude::*;

    const REF: IdmParams = IdmParams::REFERENCE;

    /// Two-or-more vehicle sample with constant positions given by `gaps`
    /// (gap of vehicle k to k-1), per-vehicle accel histories, and speeds.
    fn sample(accels: Vec<Vec<f64>>, gaps: &[f64], speed: f64, future: Vec<Vec<f64>>, ego_future: Vec<f64>) -> TrajectorySample {
        let k = accels.len();
        let tb = accels[0].len();
        let mut pos = vec![1000.0];
        for g in gaps {
            pos.push(pos.last().unwrap() - g);
        }
        let history = (0..k)
            .map(|i| {
                (0..tb)
                    .map(|t| VehicleState {
                        accel: accels[i][t],
                        speed,
                        spacing: (i > 0).then(|| pos[i - 1] - pos[i]),
                    })
                    .collect()
            })
            .collect();
        TrajectorySample {
            sample_id: 0,
            history,
            ego_future_accel: ego_future,
            ego_speed_at_t0: speed,
            leader_future_accel: future,
            leader_history_positions: pos.iter().map(|p| vec![*p; tb]).collect(),
        }
    }

    #[test]
    fn newell_integral_shift() {
        assert_eq!(newell_shift_steps(20.05, 4.01, 0.1), 50.0);
        let lead: Vec<f64> = (0..50).map(|t| (t as f64 * 0.37).sin()).collect();
        let s = sample(vec![lead.clone(), vec![0.0; 50]], &[20.05], 10.0, vec![vec![0.0]], vec![0.0]);
        let out = newell_predict(&s, &NewellParams { w: 4.01 }, 0.1);
        assert_eq!(out, vec![lead[0]]);
    }

    #[test]
    fn newell_zero_leader_gives_zero() {
        let s = sample(vec![vec![0.0; 50]; 4], &[12.0, 15.0, 9.0], 10.0, vec![vec![0.0; 5]; 3], vec![0.0; 5]);
        assert!(newell_predict(&s, &NewellParams { w: 4.0 }, 0.1).iter().all(|a| *a == 0.0));
    }

    #[test]
    fn newell_fractional_shift_interpolates() {
        let mut lead = vec![0.0; 50];
        lead[0] = 0.2;
        lead[1] = -0.4;
        lead[2] = 0.9;
        // D / w = 4.96 s = 49.6 steps: sources at history index 0.4 and 1.4
        let s = sample(vec![lead, vec![0.0; 50]], &[4.96 * 4.0], 10.0, vec![vec![0.0; 2]], vec![0.0; 2]);
        let out = newell_predict(&s, &NewellParams { w: 4.0 }, 0.1);
        let hand = [0.2 * 0.6 + -0.4 * 0.4, -0.4 * 0.6 + 0.9 * 0.4];
        assert!((out[0] - hand[0]).abs() < 1e-12, "{out:?}");
        assert!((out[1] - hand[1]).abs() < 1e-12, "{out:?}");
    }

    #[test]
    fn newell_leader_selection() {
        // gaps 10 m each, w = 4: shifts 25, 50, 75 steps from the ego
        let accels: Vec<Vec<f64>> = (0..4).map(|k| (0..60).map(|t| (k * 100 + t) as f64).collect()).collect();
        let s = sample(accels, &[10.0, 10.0, 10.0], 10.0, vec![vec![0.0; 30]; 3], vec![0.0; 30]);
        let w = 4.0;
        // one-step: the immediate leader (k=2) qualifies
        assert_eq!(newell_source(&s, w, 0.1, 1), NewellSource { leader: 2, clamped: false });
        // horizon 30 > 25 steps: next leader (k=1, 50 steps) qualifies
        assert_eq!(newell_source(&s, w, 0.1, 30), NewellSource { leader: 1, clamped: false });
        // horizon 55: k=1 needs 50 >= 55, k=0 needs 75 <= 60, none qualify
        assert_eq!(newell_source(&s, w, 0.1, 55), NewellSource { leader: 0, clamped: true });
        let out = newell_predict_horizon(&s, &NewellParams { w }, 0.1, 55);
        // farthest leader, source index 59 + j - 75 clamped at 0 until j = 16
        assert_eq!(out[0], 0.0);
        assert_eq!(out[15], 0.0);
        assert_eq!(out[16], 1.0);
    }

    #[test]
    fn newell_reproduces_shifted_ground_truth() {
        // ego future = leader accel 60 steps earlier; D = 24 m, w = 4 m/s
        let tb = 80;
        let lead: Vec<f64> = (0..tb).map(|t| 0.5 * (t as f64 * 0.21).sin() + 0.1 * (t as f64 * 0.05).cos()).collect();
        let truth: Vec<f64> = (1..=15).map(|j| lead[tb - 1 + j - 60]).collect();
        let s = sample(vec![lead, vec![0.0; tb]], &[24.0], 10.0, vec![vec![0.0; 15]], truth.clone());
        let pred = newell_predict(&s, &NewellParams { w: 4.0 }, 0.1);
        let mse: f64 = pred.iter().zip(&truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 15.0;
        assert!(mse < 1e-12, "mse {mse}");
    }

    #[test]
    fn idm_limits_and_reference_value() {
        let stationary = idm_accel(0.0, 0.0, 1e9, &REF).unwrap();
        assert!((stationary - 0.911).abs() < 1e-9);
        let free_flow = idm_accel(REF.v_free, 0.0, 1e9, &REF).unwrap();
        assert!(free_flow.abs() < 1e-9);
        // high-precision evaluation of the same inputs
        let oracle = 0.690_907_833_172_190_853_267_467_070_996_7;
        assert!((idm_accel(10.0, 2.0, 15.0, &REF).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn idm_rejects_nonpositive_gap() {
        assert!(matches!(idm_accel(5.0, 0.0, 0.0, &REF), Err(Error::Domain(_))));
        assert!(idm_accel(5.0, 0.0, -3.0, &REF).is_err());
    }

    #[test]
    fn fvd_cases() {
        let p = FvdParams::with_sensitivities(0.4, 0.5);
        let gap = 23.0;
        assert_eq!(fvd_accel(p.optimal_speed(gap), 0.0, gap, &p), 0.0);

        let degenerate = FvdParams::with_sensitivities(0.0, 1.0);
        assert_eq!(fvd_accel(13.0, -0.5, 17.0, &degenerate), -0.5);

        let p = FvdParams::with_sensitivities(0.1, 0.3);
        let oracle = 0.796_460_112_490_312_427_193_280_643_229_4;
        assert!((fvd_accel(8.0, 1.0, 25.0, &p) - oracle).abs() < 1e-12);
    }

    fn idm_pair_sample(v: f64, v_lead: f64, gap: f64, lead_future: Vec<f64>) -> TrajectorySample {
        let tf = lead_future.len();
        let mut s = sample(vec![vec![0.0; 5]; 2], &[gap], v, vec![lead_future], vec![0.0; tf]);
        for st in &mut s.history[0] {
            st.speed = v_lead;
        }
        s
    }

    #[test]
    fn single_step_rollout_matches_direct_forms() {
        let s = idm_pair_sample(11.0, 12.5, 18.0, vec![0.3]);
        let idm = physics_rollout(&s, &PhysicsParams::Idm(REF), 0.1);
        assert_eq!(idm.accel, vec![idm_accel(11.0, 11.0 - 12.5, 18.0, &REF).unwrap()]);
        let fvd_p = FvdParams::with_sensitivities(0.2, 0.4);
        let fvd = physics_rollout(&s, &PhysicsParams::Fvd(fvd_p), 0.1);
        assert_eq!(fvd.accel, vec![fvd_accel(11.0, 12.5 - 11.0, 18.0, &fvd_p)]);
        assert!(!idm.collision && !fvd.collision);
    }

    #[test]
    fn idm_equilibrium_rollout_stays_flat() {
        let v = 12.0;
        // bisection on the gap where the IDM acceleration vanishes
        let (mut lo, mut hi) = (1.0, 500.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if idm_accel(v, 0.0, mid, &REF).unwrap() < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let s = idm_pair_sample(v, v, 0.5 * (lo + hi), vec![0.0; 50]);
        let out = physics_rollout(&s, &PhysicsParams::Idm(REF), 0.1);
        assert_eq!(out.accel.len(), 50);
        assert!(out.accel.iter().all(|a| a.abs() < 1e-9), "{:?}", out.accel);
    }

    #[test]
    fn rollout_flags_collision() {
        // ego far faster than a braking leader 2 m ahead
        let s = idm_pair_sample(25.0, 2.0, 2.0, vec![-3.0; 20]);
        let out = physics_rollout(&s, &PhysicsParams::Fvd(FvdParams::with_sensitivities(0.0, 0.0)), 0.1);
        assert!(out.collision);
        assert!(out.accel.iter().all(|a| a.is_finite()));
    }

    #[test]
    fn newell_rollout_is_newell_predict() {
        let lead: Vec<f64> = (0..80).map(|t| (t as f64 * 0.13).cos()).collect();
        let s = sample(vec![lead, vec![0.0; 80], vec![0.0; 80]], &[12.0, 11.0], 9.0, vec![vec![0.0; 50]; 2], vec![0.0; 50]);
        let p = NewellParams { w: 3.7 };
        let roll = physics_rollout(&s, &PhysicsParams::Newell(p), 0.1);
        assert_eq!(roll.accel, newell_predict(&s, &p, 0.1));
        assert_eq!(roll.accel.len(), 50);
    }

    #[test]
    fn free_value_round_trip() {
        for model in PhysicsModel::ALL {
            let p = model.reference_params();
            assert_eq!(p.with_free_values(&p.free_values()), p);
            assert_eq!(p.free_values().len(), model.free_parameter_names().len());
            p.validate().unwrap();
        }
    }

    proptest! {
        #[test]
        fn idm_decreasing_in_speed(v1 in 0.0..22.495f64, v2 in 0.0..22.495f64, gap in 2.0..80.0f64) {
            let (lo, hi) = if v1 < v2 { (v1, v2) } else { (v2, v1) };
            prop_assume!(hi - lo > 1e-9);
            let a_lo = idm_accel(lo, 0.0, gap, &REF).unwrap();
            let a_hi = idm_accel(hi, 0.0, gap, &REF).unwrap();
            prop_assert!(a_hi < a_lo);
        }

        #[test]
        fn fvd_linear_in_relative_speed(
            kappa in 0.0..2.0f64, lambda in 0.0..2.0f64,
            v in 0.0..30.0f64, gap in 1.0..80.0f64, dv in -10.0..10.0f64,
        ) {
            let p = FvdParams::with_sensitivities(kappa, lambda);
            let diff = fvd_accel(v, dv, gap, &p) - fvd_accel(v, 0.0, gap, &p);
            // one rounding in the sum, one in the subtraction
            prop_assert!((diff - lambda * dv).abs() <= 1e-13 * (1.0 + kappa * 30.0 + lambda * 10.0));
        }

        #[test]
        fn rollout_length_and_finiteness(
            v in 0.0..30.0f64, v_lead in 0.0..30.0f64, gap in 0.5..60.0f64,
            tf in 1usize..60, lead_a in -4.0..3.0f64, model in 0usize..2,
        ) {
            let s = idm_pair_sample(v, v_lead, gap, vec![lead_a; tf]);
            let params = if model == 0 {
                PhysicsParams::Idm(REF)
            } else {
                PhysicsParams::Fvd(FvdParams::with_sensitivities(0.3, 0.5))
            };
            let out = physics_rollout(&s, &params, 0.1);
            prop_assert_eq!(out.accel.len(), tf);
            prop_assert!(out.accel.iter().all(|a| a.is_finite()));
        }
    }
}
