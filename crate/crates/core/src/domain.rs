//! Sample, state, and split types shared by every stage of the pipeline.
//!
//! Vehicles in a sample are ordered upstream to downstream: index 0 is the
//! chain's lead vehicle and index `K - 1` is the ego vehicle whose future
//! acceleration is predicted. History columns run from
//! `t0 - (T_b - 1) * delta` up to and including `t0`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance for the spacing/position consistency check, in metres.
pub const SPACING_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    /// Time step in seconds.
    pub delta: f64,
    pub k_vehicles: usize,
    pub t_back: usize,
    pub t_fwd: usize,
    pub omega_train: f64,
    pub omega_val: f64,
    pub seed: u64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            k_vehicles: 4,
            t_back: 50,
            t_fwd: 1,
            omega_train: 0.6,
            omega_val: 0.2,
            seed: 0,
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return Err(Error::Config(format!("delta must be > 0, got {}", self.delta)));
        }
        if self.k_vehicles < 2 {
            return Err(Error::Config(format!(
                "k_vehicles must be >= 2, got {}",
                self.k_vehicles
            )));
        }
        if self.t_back < 1 || self.t_fwd < 1 {
            return Err(Error::Config("t_back and t_fwd must be >= 1".into()));
        }
        let fractions_ok = self.omega_train > 0.0
            && self.omega_val >= 0.0
            && self.omega_train + self.omega_val < 1.0;
        if !fractions_ok {
            return Err(Error::Config(format!(
                "invalid split fractions train={} val={}",
                self.omega_train, self.omega_val
            )));
        }
        Ok(())
    }

    /// Number of consecutive steps a chain must be observed to yield one sample.
    pub fn window_len(&self) -> usize {
        self.t_back + self.t_fwd
    }
}

/// Kinematic state of one vehicle at one time step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub accel: f64,
    pub speed: f64,
    /// Gap to the preceding vehicle. `None` marks the chain's lead vehicle,
    /// whose predecessor is not part of the sample.
    pub spacing: Option<f64>,
}

impl VehicleState {
    /// Spacing of a non-lead vehicle.
    ///
    /// Panics when called on the lead vehicle; its spacing is not observed.
    pub fn spacing(&self) -> f64 {
        self.spacing
            .expect("spacing read on the lead vehicle of a chain")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySample {
    pub sample_id: u64,
    /// `[K][T_b]` states, upstream to downstream.
    pub history: Vec<Vec<VehicleState>>,
    /// Ground-truth ego acceleration at `t0 + delta ..= t0 + T_f * delta`.
    pub ego_future_accel: Vec<f64>,
    pub ego_speed_at_t0: f64,
    /// `[K - 1][T_f]` realized future accelerations of the non-ego vehicles.
    pub leader_future_accel: Vec<Vec<f64>>,
    /// `[K][T_b]` absolute front positions.
    pub leader_history_positions: Vec<Vec<f64>>,
}

impl TrajectorySample {
    pub fn k(&self) -> usize {
        self.history.len()
    }

    pub fn t_back(&self) -> usize {
        self.history.first().map_or(0, Vec::len)
    }

    pub fn t_fwd(&self) -> usize {
        self.ego_future_accel.len()
    }

    pub fn ego_index(&self) -> usize {
        self.k() - 1
    }

    /// State of vehicle `k` at `t0`.
    pub fn state_at_t0(&self, k: usize) -> VehicleState {
        *self.history[k].last().expect("empty history")
    }

    pub fn position_at_t0(&self, k: usize) -> f64 {
        *self.leader_history_positions[k].last().expect("empty history")
    }

    /// Longitudinal distance from the ego vehicle to vehicle `k` at `t0`.
    pub fn distance_from_ego(&self, k: usize) -> f64 {
        self.position_at_t0(k) - self.position_at_t0(self.ego_index())
    }

    /// Number of scalars in the network input, `3 * K * T_b`.
    pub fn input_len(&self) -> usize {
        3 * self.k() * self.t_back()
    }

    /// Checks every structural and physical invariant of the sample.
    pub fn validate(&self) -> Result<()> {
        let k = self.k();
        let tb = self.t_back();
        let tf = self.t_fwd();
        let id = self.sample_id;
        if k < 2 || tb < 1 || tf < 1 {
            return Err(Error::Domain(format!("sample {id}: empty dimensions")));
        }
        if self.history.iter().any(|row| row.len() != tb)
            || self.leader_history_positions.len() != k
            || self.leader_history_positions.iter().any(|row| row.len() != tb)
        {
            return Err(Error::Domain(format!("sample {id}: ragged history grid")));
        }
        if self.leader_future_accel.len() != k - 1
            || self.leader_future_accel.iter().any(|row| row.len() != tf)
        {
            return Err(Error::Domain(format!("sample {id}: ragged leader future grid")));
        }
        let finite = self.history.iter().flatten().all(|s| {
            s.accel.is_finite() && s.speed.is_finite() && s.spacing.is_none_or(f64::is_finite)
        }) && self.ego_future_accel.iter().all(|a| a.is_finite())
            && self.ego_speed_at_t0.is_finite()
            && self.leader_future_accel.iter().flatten().all(|a| a.is_finite())
            && self.leader_history_positions.iter().flatten().all(|p| p.is_finite());
        if !finite {
            return Err(Error::Domain(format!("sample {id}: non-finite value")));
        }
        for (vehicle, row) in self.history.iter().enumerate() {
            for (t, state) in row.iter().enumerate() {
                if state.speed < 0.0 {
                    return Err(Error::Domain(format!(
                        "sample {id}: negative speed at vehicle {vehicle}, step {t}"
                    )));
                }
                match (vehicle, state.spacing) {
                    (0, None) => {}
                    (0, Some(_)) => {
                        return Err(Error::Domain(format!(
                            "sample {id}: lead vehicle carries a spacing"
                        )))
                    }
                    (_, None) => {
                        return Err(Error::Domain(format!(
                            "sample {id}: missing spacing at vehicle {vehicle}, step {t}"
                        )))
                    }
                    (_, Some(gap)) => {
                        if gap <= 0.0 {
                            return Err(Error::Domain(format!(
                                "sample {id}: non-positive spacing at vehicle {vehicle}, step {t}"
                            )));
                        }
                        let from_positions = self.leader_history_positions[vehicle - 1][t]
                            - self.leader_history_positions[vehicle][t];
                        if (from_positions - gap).abs() > SPACING_TOLERANCE {
                            return Err(Error::Domain(format!(
                                "sample {id}: spacing {gap} disagrees with positions ({from_positions}) at vehicle {vehicle}, step {t}"
                            )));
                        }
                    }
                }
            }
        }
        let ego_v0 = self.state_at_t0(k - 1).speed;
        if ego_v0 != self.ego_speed_at_t0 {
            return Err(Error::Domain(format!(
                "sample {id}: ego_speed_at_t0 does not match history"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndex {
    pub train_ids: Vec<u64>,
    pub val_ids: Vec<u64>,
    pub test_ids: Vec<u64>,
}

/// Randomly partitions `ids` into train/validation/test sets.
///
/// Set sizes are `floor(omega_train * I)`, `floor(omega_val * I)` and the
/// remainder. The result depends only on the id set and `config.seed`; each
/// output set is sorted ascending.
pub fn split_dataset(ids: &[u64], config: &DatasetConfig) -> Result<SplitIndex> {
    config.validate()?;
    let mut pool = ids.to_vec();
    pool.sort_unstable();
    pool.dedup();
    if pool.len() != ids.len() {
        return Err(Error::Config("duplicate sample ids".into()));
    }
    let total = pool.len();
    if total < 3 {
        return Err(Error::Config(format!("need at least 3 samples, got {total}")));
    }
    let n_train = (config.omega_train * total as f64).floor() as usize;
    let n_val = (config.omega_val * total as f64).floor() as usize;
    let n_test = total - n_train - n_val;
    if n_train == 0 || n_val == 0 || n_test == 0 {
        return Err(Error::Config(format!(
            "split of {total} samples leaves an empty set (train {n_train}, val {n_val}, test {n_test})"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    pool.shuffle(&mut rng);
    let mut train_ids = pool[..n_train].to_vec();
    let mut val_ids = pool[n_train..n_train + n_val].to_vec();
    let mut test_ids = pool[n_train + n_val..].to_vec();
    train_ids.sort_unstable();
    val_ids.sort_unstable();
    test_ids.sort_unstable();
    Ok(SplitIndex {
        train_ids,
        val_ids,
        test_ids,
    })
}

/// Mixes a base seed with a stream tag and an index (splitmix64 finalizer),
/// so sub-tasks get independent, reproducible generators.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(stream.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn config(train: f64, val: f64, seed: u64) -> DatasetConfig {
        DatasetConfig {
            omega_train: train,
            omega_val: val,
            seed,
            ..DatasetConfig::default()
        }
    }

    #[test]
    fn split_sizes_follow_floor_rule() {
        let ids: Vec<u64> = (0..20_000).collect();
        let split = split_dataset(&ids, &config(0.6, 0.2, 3)).unwrap();
        assert_eq!(
            (split.train_ids.len(), split.val_ids.len(), split.test_ids.len()),
            (12_000, 4_000, 4_000)
        );

        let ids: Vec<u64> = (0..10).collect();
        let split = split_dataset(&ids, &config(0.6, 0.2, 3)).unwrap();
        assert_eq!(
            (split.train_ids.len(), split.val_ids.len(), split.test_ids.len()),
            (6, 2, 2)
        );
    }

    #[test]
    fn split_is_deterministic() {
        let ids: Vec<u64> = (100..400).collect();
        let a = split_dataset(&ids, &config(0.6, 0.2, 11)).unwrap();
        let b = split_dataset(&ids, &config(0.6, 0.2, 11)).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&ids, &config(0.6, 0.2, 12)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn split_rejects_empty_sets() {
        let ids: Vec<u64> = (0..4).collect();
        // floor(0.2 * 4) = 0 validation samples
        assert!(matches!(
            split_dataset(&ids, &config(0.6, 0.2, 0)),
            Err(Error::Config(_))
        ));
        assert!(split_dataset(&[1, 2], &config(0.4, 0.3, 0)).is_err());
        assert!(split_dataset(&[1, 2, 3, 4], &config(0.7, 0.3, 0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(DatasetConfig::default().validate().is_ok());
        assert!(DatasetConfig { k_vehicles: 1, ..Default::default() }.validate().is_err());
        assert!(DatasetConfig { delta: 0.0, ..Default::default() }.validate().is_err());
        assert!(DatasetConfig { t_fwd: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    #[should_panic(expected = "lead vehicle")]
    fn lead_spacing_read_fails_loudly() {
        let lead = VehicleState { accel: 0.0, speed: 1.0, spacing: None };
        let _ = lead.spacing();
    }

    proptest! {
        #[test]
        fn split_partitions_ids(n in 10usize..400, seed in any::<u64>(), offset in 0u64..1000) {
            let ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + offset).collect();
            let split = split_dataset(&ids, &config(0.6, 0.2, seed)).unwrap();
            let mut all: Vec<u64> = split.train_ids.iter()
                .chain(&split.val_ids)
                .chain(&split.test_ids)
                .copied()
                .collect();
            all.sort_unstable();
            prop_assert_eq!(all, ids);
            prop_assert_eq!(split.train_ids.len(), (0.6 * n as f64).floor() as usize);
        }
    }
}
