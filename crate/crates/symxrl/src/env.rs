//! Synthetic multi-user MIMO scheduling environment.
//!
//! Seven users in correlated groups share the downlink. Each user has a
//! complex AR(1) small-scale channel on top of a per-user mean SNR drawn at
//! reset; the scenario (LOS/NLOS, low/high speed) sets the Rician factor and
//! the AR coefficient. The agent sees only MSE, DTU and the group id.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use symxrl_core::model::{MimoObservation, SchemaA2};
use symxrl_core::steering::Environment;
use symxrl_core::{Action, MimoAction, Observation};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EnvError {
    #[error("schedule mask has length {found}, expected {expected}")]
    MaskLength { expected: usize, found: usize },
    #[error("invalid environment config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Los,
    Nlos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Speed {
    Low,
    High,
}

/// Fixed propagation scenario, or a fresh draw of both at every reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Mixed,
    LosLow,
    LosHigh,
    NlosLow,
    NlosHigh,
}

impl Scenario {
    fn fixed(self) -> Option<(Channel, Speed)> {
        match self {
            Scenario::Mixed => None,
            Scenario::LosLow => Some((Channel::Los, Speed::Low)),
            Scenario::LosHigh => Some((Channel::Los, Speed::High)),
            Scenario::NlosLow => Some((Channel::Nlos, Speed::Low)),
            Scenario::NlosHigh => Some((Channel::Nlos, Speed::High)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MimoEnvConfig {
    pub group_sizes: Vec<usize>,
    /// Interference coupling between users of the same group.
    pub rho_in: f64,
    /// Interference coupling between users of different groups.
    pub rho_out: f64,
    /// AR(1) coefficient of the channel at low speed.
    pub a_low: f64,
    /// AR(1) coefficient of the channel at high speed.
    pub a_high: f64,
    pub noise_power: f64,
    /// Range of the per-user mean SNR in dB, drawn uniformly at reset.
    pub snr_db: [f64; 2],
    /// Rician K-factor under LOS (NLOS is Rayleigh).
    pub los_k: f64,
    /// Mean-gain penalty applied under NLOS.
    pub nlos_loss: f64,
    /// Relative standard deviation of the MSE measurement.
    pub mse_noise: f64,
    /// Weight of the staleness (DTU) bonus in the reward.
    pub beta: f64,
    pub scenario: Scenario,
    pub horizon: u64,
    pub seed: u64,
}

impl Default for MimoEnvConfig {
    fn default() -> Self {
        Self {
            group_sizes: vec![3, 2, 2],
            rho_in: 0.8,
            rho_out: 0.1,
            a_low: 0.99,
            a_high: 0.9,
            noise_power: 1.0,
            snr_db: [5.0, 20.0],
            los_k: 3.0,
            nlos_loss: 0.5,
            mse_noise: 0.002,
            beta: 0.1,
            scenario: Scenario::Mixed,
            horizon: 2500,
            seed: 0,
        }
    }
}

impl MimoEnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        SchemaA2::new(self.group_sizes.clone()).map_err(|e| EnvError::Config(e.to_string()))?;
        if !(0.0..=1.0).contains(&self.rho_in) || !(0.0..=1.0).contains(&self.rho_out) {
            return bad("rho values must lie in [0, 1]");
        }
        if !(self.a_low > 0.0 && self.a_low < 1.0 && self.a_high > 0.0 && self.a_high < 1.0) {
            return bad("AR coefficients must lie in (0, 1)");
        }
        if !(self.noise_power > 0.0) {
            return bad("noise power must be positive");
        }
        if !(self.snr_db[0] <= self.snr_db[1]) || !self.snr_db.iter().all(|x| x.is_finite()) {
            return bad("snr_db must be an ordered finite range");
        }
        if !(self.los_k >= 0.0 && self.nlos_loss > 0.0 && self.mse_noise >= 0.0 && self.beta >= 0.0) {
            return bad("los_k, mse_noise and beta must be non-negative, nlos_loss positive");
        }
        Ok(())
    }

    pub fn schema(&self) -> SchemaA2 {
        SchemaA2::new(self.group_sizes.clone()).expect("validated group sizes")
    }
}

/// Group index of every user for contiguous groups of the given sizes.
pub fn group_assignment(group_sizes: &[usize]) -> Vec<u32> {
    group_sizes.iter().enumerate().flat_map(|(g, &n)| std::iter::repeat_n(g as u32, n)).collect()
}

/// SINR of every user under `mask` (0 for unscheduled users).
pub fn sinr(gains: &[f64], mask: &MimoAction, groups: &[u32], cfg: &MimoEnvConfig) -> Vec<f64> {
    let n = gains.len();
    (0..n)
        .map(|u| {
            if !mask.is_scheduled(u) {
                return 0.0;
            }
            let interference: f64 = mask
                .scheduled()
                .filter(|&v| v != u)
                .map(|v| if groups[u] == groups[v] { cfg.rho_in } else { cfg.rho_out } * gains[v])
                .sum();
            gains[u] / (cfg.noise_power + interference)
        })
        .collect()
}

/// Sum rate of the scheduled users plus the staleness bonus
/// `beta * sum(DTU_u) / max(1, max DTU)` over scheduled users.
pub fn reward(gains: &[f64], dtu: &[f64], mask: &MimoAction, groups: &[u32], cfg: &MimoEnvConfig) -> f64 {
    let rate: f64 = sinr(gains, mask, groups, cfg).iter().map(|s| (1.0 + s).log2()).sum();
    let max_dtu = dtu.iter().copied().fold(0.0, f64::max).max(1.0);
    let bonus: f64 = mask.scheduled().map(|u| dtu[u]).sum::<f64>() / max_dtu;
    rate + cfg.beta * bonus
}

#[derive(Debug, Clone)]
pub struct MimoEnv {
    cfg: MimoEnvConfig,
    groups: Vec<u32>,
    rng: ChaCha8Rng,
    channel: Channel,
    speed: Speed,
    mean_snr: Vec<f64>,
    /// Scattered channel component (re, im) per user.
    scatter: Vec<(f64, f64)>,
    /// Fixed LOS phase per user.
    los_phase: Vec<f64>,
    gains: Vec<f64>,
    mse: Vec<f64>,
    dtu: Vec<f64>,
    t: u64,
}

impl MimoEnv {
    pub fn new(cfg: MimoEnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let groups = group_assignment(&cfg.group_sizes);
        let n = groups.len();
        let mut env = Self {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            groups,
            channel: Channel::Los,
            speed: Speed::Low,
            mean_snr: vec![0.0; n],
            scatter: vec![(0.0, 0.0); n],
            los_phase: vec![0.0; n],
            gains: vec![0.0; n],
            mse: vec![0.0; n],
            dtu: vec![0.0; n],
            t: 0,
            cfg,
        };
        env.reset_state();
        Ok(env)
    }

    /// Same configuration with another seed.
    pub fn with_seed(cfg: &MimoEnvConfig, seed: u64) -> Result<Self, EnvError> {
        Self::new(MimoEnvConfig { seed, ..cfg.clone() })
    }

    fn reset_state(&mut self) {
        let (channel, speed) = self.cfg.scenario.fixed().unwrap_or_else(|| {
            let c = if self.rng.random_bool(0.5) { Channel::Los } else { Channel::Nlos };
            let s = if self.rng.random_bool(0.5) { Speed::Low } else { Speed::High };
            (c, s)
        });
        self.channel = channel;
        self.speed = speed;
        let [lo, hi] = self.cfg.snr_db;
        for u in 0..self.groups.len() {
            let db = if hi > lo { self.rng.random_range(lo..hi) } else { lo };
            self.mean_snr[u] = 10f64.powf(db / 10.0);
            self.los_phase[u] = self.rng.random_range(0.0..std::f64::consts::TAU);
            let (re, im) = self.complex_normal();
            self.scatter[u] = (re, im);
        }
        self.dtu.iter_mut().for_each(|d| *d = 0.0);
        self.t = 0;
        self.refresh_gains();
        self.measure_mse();
    }

    fn complex_normal(&mut self) -> (f64, f64) {
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        (re * std::f64::consts::FRAC_1_SQRT_2, im * std::f64::consts::FRAC_1_SQRT_2)
    }

    fn ar_coefficient(&self) -> f64 {
        match self.speed {
            Speed::Low => self.cfg.a_low,
            Speed::High => self.cfg.a_high,
        }
    }

    fn refresh_gains(&mut self) {
        let (k, loss) = match self.channel {
            Channel::Los => (self.cfg.los_k, 1.0),
            Channel::Nlos => (0.0, self.cfg.nlos_loss),
        };
        let los = (k / (k + 1.0)).sqrt();
        let nlos = (1.0 / (k + 1.0)).sqrt();
        for u in 0..self.gains.len() {
            let (s_re, s_im) = self.scatter[u];
            let re = los * self.los_phase[u].cos() + nlos * s_re;
            let im = los * self.los_phase[u].sin() + nlos * s_im;
            self.gains[u] = loss * self.mean_snr[u] * (re * re + im * im);
        }
    }

    /// Channel-estimation error: channel aging `1 - a^2` scaled by the
    /// user's estimation quality, worse under NLOS, with multiplicative
    /// measurement noise.
    fn measure_mse(&mut self) {
        let a = self.ar_coefficient();
        let penalty = match self.channel {
            Channel::Los => 1.0,
            Channel::Nlos => 2.0,
        };
        for u in 0..self.mse.len() {
            let c = penalty * (1.0 + self.cfg.noise_power / self.mean_snr[u]);
            let noise: f64 = StandardNormal.sample(&mut self.rng);
            self.mse[u] = (c * (1.0 - a * a) * (1.0 + self.cfg.mse_noise * noise)).max(0.0);
        }
    }

    pub fn config(&self) -> &MimoEnvConfig {
        &self.cfg
    }

    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn gains(&self) -> &[f64] {
        &self.gains
    }

    pub fn dtu(&self) -> &[f64] {
        &self.dtu
    }

    pub fn groups(&self) -> &[u32] {
        &self.groups
    }

    pub fn channel(&self) -> Channel {
        self.channel
    }

    pub fn speed(&self) -> Speed {
        self.speed
    }

    /// Overrides the current channel gains, e.g. to probe the reward.
    pub fn set_gains(&mut self, gains: &[f64]) {
        self.gains.copy_from_slice(gains);
    }

    pub fn observation(&self) -> MimoObservation {
        MimoObservation { mse: self.mse.clone(), dtu: self.dtu.clone(), group: self.groups.clone() }
    }

    /// Applies `mask` and advances one slot.
    pub fn try_step(&mut self, mask: &MimoAction) -> Result<f64, EnvError> {
        if mask.mask.len() != self.groups.len() {
            return Err(EnvError::MaskLength { expected: self.groups.len(), found: mask.mask.len() });
        }
        let r = reward(&self.gains, &self.dtu, mask, &self.groups, &self.cfg);
        for (u, d) in self.dtu.iter_mut().enumerate() {
            *d = if mask.is_scheduled(u) { 0.0 } else { *d + 1.0 };
        }
        let a = self.ar_coefficient();
        let innovation = (1.0 - a * a).sqrt();
        for u in 0..self.scatter.len() {
            let (w_re, w_im) = self.complex_normal();
            let (re, im) = self.scatter[u];
            self.scatter[u] = (a * re + innovation * w_re, a * im + innovation * w_im);
        }
        self.refresh_gains();
        self.measure_mse();
        self.t += 1;
        Ok(r)
    }
}

impl Environment for MimoEnv {
    fn observe(&self) -> Observation {
        Observation::Mimo(self.observation())
    }

    fn step(&mut self, action: &Action) -> f64 {
        let mask = action.as_mimo().expect("MIMO environment takes schedule masks");
        self.try_step(mask).expect("mask length matches the user count")
    }

    fn meta(&self) -> BTreeMap<String, String> {
        let channel = match self.channel {
            Channel::Los => "LOS",
            Channel::Nlos => "NLOS",
        };
        let speed = match self.speed {
            Speed::Low => "low",
            Speed::High => "high",
        };
        BTreeMap::from([("channel".to_string(), channel.to_string()), ("speed".to_string(), speed.to_string())])
    }
}
