//! Synthetic run-to-failure fleets in the C-MAPSS record layout.
//!
//! Every fleet shares one sensor "plant": a baseline, a degradation gain and
//! a curvature per sensor. Units degrade after a random onset and fail at the
//! end of their life. A target fleet is the source plant seen through an
//! affine distortion that mixes sensors, plus shifted lifetimes and onsets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::cmapss::{CycleRecord, RawSubset, Trajectory, N_COLUMNS, N_SENSORS, N_SETTINGS};

const PLANT_SEED: u64 = 0x5eed_cafe;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDomain {
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// Inclusive lifetime range in cycles.
    pub life: (usize, usize),
    /// Degradation onset as a fraction of life.
    pub onset: (f64, f64),
    pub noise: f64,
    /// Strength of the cross-sensor mixing applied to every record.
    pub mixing: f64,
    /// Constant offsets added to the operating-setting columns.
    pub setting_offset: f64,
}

impl SyntheticDomain {
    pub fn source() -> Self {
        Self {
            seed: 1,
            n_train: 60,
            n_test: 30,
            life: (140, 260),
            onset: (0.35, 0.6),
            noise: 0.03,
            mixing: 0.0,
            setting_offset: 0.0,
        }
    }

    pub fn target() -> Self {
        Self {
            seed: 2,
            n_train: 60,
            n_test: 30,
            life: (110, 220),
            onset: (0.25, 0.5),
            noise: 0.05,
            mixing: 0.6,
            setting_offset: 1.0,
        }
    }

    pub fn with_units(mut self, n_train: usize, n_test: usize) -> Self {
        self.n_train = n_train;
        self.n_test = n_test;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn generate(&self, name: &str) -> RawSubset {
        let plant = Plant::new();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mixing = mixing_matrix(&mut rng, self.mixing);
        let unit = |id: u32, rng: &mut ChaCha8Rng| -> Trajectory {
            let life = rng.random_range(self.life.0..=self.life.1);
            let onset = rng.random_range(self.onset.0..=self.onset.1) * life as f64;
            let cycles = (1..=life)
                .map(|c| {
                    let progress = ((c as f64 - onset) / (life as f64 - onset)).max(0.0);
                    let mut clean = [0.0; N_SENSORS];
                    for (j, v) in clean.iter_mut().enumerate() {
                        *v = plant.base[j] + plant.gain[j] * progress.powf(plant.curvature[j]);
                    }
                    let mut cols = [0.0; N_COLUMNS];
                    for (s, v) in cols[..N_SETTINGS].iter_mut().enumerate() {
                        let jitter: f64 = StandardNormal.sample(rng);
                        *v = self.setting_offset * (s + 1) as f64 + 0.002 * jitter;
                    }
                    for j in 0..N_SENSORS {
                        let mixed: f64 = (0..N_SENSORS).map(|i| mixing[j][i] * clean[i]).sum();
                        let eps: f64 = StandardNormal.sample(rng);
                        cols[N_SETTINGS + j] = if plant.constant[j] {
                            plant.base[j]
                        } else {
                            mixed + self.noise * eps
                        };
                    }
                    CycleRecord::from_columns(c as u32, &cols)
                })
                .collect();
            Trajectory::new(id, cycles).expect("cycles numbered from 1")
        };

        let train = (1..=self.n_train as u32).map(|id| unit(id, &mut rng)).collect();
        let mut test = Vec::with_capacity(self.n_test);
        let mut test_rul = Vec::with_capacity(self.n_test);
        for id in 1..=self.n_test as u32 {
            let full = unit(id, &mut rng);
            let cut = ((rng.random_range(0.3..0.95) * full.len() as f64) as usize).max(5);
            test_rul.push((full.len() - cut) as f64);
            test.push(full.truncated(cut));
        }
        RawSubset {
            name: name.to_string(),
            train,
            test,
            test_rul,
        }
    }
}

struct Plant {
    base: [f64; N_SENSORS],
    gain: [f64; N_SENSORS],
    curvature: [f64; N_SENSORS],
    constant: [bool; N_SENSORS],
}

impl Plant {
    fn new() -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(PLANT_SEED);
        let mut p = Plant {
            base: [0.0; N_SENSORS],
            gain: [0.0; N_SENSORS],
            curvature: [0.0; N_SENSORS],
            constant: [false; N_SENSORS],
        };
        for j in 0..N_SENSORS {
            p.base[j] = rng.random_range(-1.0..1.0);
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            // every fourth sensor carries no trend
            p.gain[j] = if j % 4 == 3 { 0.0 } else { sign * rng.random_range(0.5..2.0) };
            p.curvature[j] = rng.random_range(1.0..2.5);
        }
        p.constant[0] = true;
        p.constant[17] = true;
        p
    }
}

/// `I + strength · R` with `R` a fixed-seed Gaussian matrix scaled by `1/√n`.
fn mixing_matrix(rng: &mut ChaCha8Rng, strength: f64) -> Vec<Vec<f64>> {
    let scale = strength / (N_SENSORS as f64).sqrt();
    (0..N_SENSORS)
        .map(|i| {
            (0..N_SENSORS)
                .map(|j| {
                    let r: f64 = StandardNormal.sample(rng);
                    f64::from(u8::from(i == j)) + scale * r
                })
                .collect()
        })
        .collect()
}
