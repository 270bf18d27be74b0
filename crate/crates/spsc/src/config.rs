//! Configuration types: environment spec, policy and detector hyperparameters,
//! and the flat key-value config consumed by the CLI.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Environment specification for the piecewise low-rank LDS world.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EnvSpec {
    /// Ambient dimension.
    pub d: usize,
    /// Latent rank (r < d).
    pub r: usize,
    /// Segment count.
    #[serde(rename = "K")]
    pub segments: usize,
    /// Horizon.
    #[serde(rename = "T")]
    pub horizon: usize,
    /// Actions offered per round (i.i.d. uniform on the unit sphere).
    pub n_actions: usize,
    /// Reward-noise standard deviation.
    pub sigma_eps: f64,
    /// Spectral radius of every latent dynamics matrix.
    #[serde(rename = "rho_A")]
    pub rho_a: f64,
    /// Innovation standard deviation (isotropic).
    pub sigma_eta: f64,
    /// Cost charged per probe round.
    pub probe_cost: f64,
    /// State-noise coupling strength for the robustness ablation:
    /// `eps <- eps + eps_couple * x'theta`. Default 0.
    #[serde(default)]
    pub eps_couple: f64,
    /// Environment RNG seed.
    pub seed: u64,
}

impl EnvSpec {
    /// Synthetic-benchmark defaults: d=60, r=5, K=10, T=5000, 40 actions,
    /// sigma_eps=0.3, rho_A=0.99, sigma_eta=0.04, probe cost 0.1.
    pub fn synthetic_default(seed: u64) -> Self {
        EnvSpec {
            d: 60,
            r: 5,
            segments: 10,
            horizon: 5000,
            n_actions: 40,
            sigma_eps: 0.3,
            rho_a: 0.99,
            sigma_eta: 0.04,
            probe_cost: 0.1,
            eps_couple: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.r < 1 || self.r >= self.d {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= r < d, got r={}, d={}",
                self.r, self.d
            )));
        }
        if self.segments < 1 {
            return Err(Error::InvalidConfig("need K >= 1".into()));
        }
        if self.horizon < self.segments {
            return Err(Error::InvalidConfig(format!(
                "need T >= K, got T={}, K={}",
                self.horizon, self.segments
            )));
        }
        if self.sigma_eps < 0.0 {
            return Err(Error::InvalidConfig("need sigma_eps >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.rho_a) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= rho_A <= 1, got {}",
                self.rho_a
            )));
        }
        if self.sigma_eta <= 0.0 {
            return Err(Error::InvalidConfig("need sigma_eta > 0".into()));
        }
        if self.n_actions < 1 {
            return Err(Error::InvalidConfig("need n_actions >= 1".into()));
        }
        if self.probe_cost < 0.0 {
            return Err(Error::InvalidConfig("need probe_cost >= 0".into()));
        }
        Ok(())
    }

    /// Default latent-norm envelope `S_w = 3 sigma_eta sqrt(r / (1 - rho^2))`,
    /// the 3-sigma radius of the stationary latent distribution.
    pub fn default_s_w(&self) -> f64 {
        let denom = (1.0 - self.rho_a * self.rho_a).max(1e-12);
        3.0 * self.sigma_eta * (self.r as f64 / denom).sqrt()
    }
}

/// Whether the subspace-mismatch correction term is active in the UCB index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GammaMode {
    Off,
    Plugin,
}

/// Hyperparameters for the subspace-calibrated policies (and, through
/// `r -> d` substitution, the ambient baselines).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpscConfig {
    /// Working rank used for projection.
    pub r: usize,
    /// Exploitation window length.
    #[serde(rename = "W")]
    pub w: usize,
    /// Ridge regularizer.
    pub lambda: f64,
    /// Confidence level.
    pub delta: f64,
    /// Known reward-noise std used for centering (unless `plug_in_variance`).
    pub sigma_eps: f64,
    /// Latent-norm envelope entering the confidence radius.
    pub s_w: f64,
    /// Probe-budget constant in `m = min(l, ceil(c0 * l^(2/3)))`.
    pub c0: f64,
    /// Fixed probe spacing override; when set, `m = ceil(l / probe_period)`.
    #[serde(default)]
    pub probe_period: Option<usize>,
    /// Subspace-mismatch correction mode.
    pub gamma_mode: GammaMode,
    /// Multiplier for the plug-in correction.
    pub gamma_scale: f64,
    /// Probe coverage: probes excite only the first `d_cov` coordinates.
    pub d_cov: usize,
    /// Centering offset injected into the probe statistic (robustness
    /// ablation A): `s = y^2 - (sigma_hat^2 + delta_sigma)`.
    #[serde(default)]
    pub delta_sigma: f64,
    /// Estimate the centering variance from the first segment's probes
    /// instead of using `sigma_eps^2`.
    #[serde(default)]
    pub plug_in_variance: bool,
}

impl SpscConfig {
    /// Policy defaults matched to an environment: window 400, lambda 0.01,
    /// delta 0.05, probe period 50, full coverage, known variance.
    pub fn for_env(env: &EnvSpec) -> Self {
        SpscConfig {
            r: env.r,
            w: 400,
            lambda: 0.01,
            delta: 0.05,
            sigma_eps: env.sigma_eps,
            s_w: env.default_s_w(),
            c0: 1.0,
            probe_period: Some(50),
            gamma_mode: GammaMode::Off,
            gamma_scale: 1.0,
            d_cov: env.d,
            delta_sigma: 0.0,
            plug_in_variance: false,
        }
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        if self.lambda <= 0.0 {
            return Err(Error::InvalidConfig("need lambda > 0".into()));
        }
        if self.w < 1 {
            return Err(Error::InvalidConfig("need W >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.delta) || self.delta == 0.0 {
            return Err(Error::InvalidConfig("need 0 < delta < 1".into()));
        }
        if self.r > d {
            return Err(Error::InvalidConfig(format!(
                "working rank {} exceeds ambient dimension {}",
                self.r, d
            )));
        }
        if self.d_cov == 0 || self.d_cov > d {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= d_cov <= d, got d_cov={}, d={}",
                self.d_cov, d
            )));
        }
        Ok(())
    }
}

/// Change-detector hyperparameters for the adaptive policy.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Probe probability per normal-phase round.
    pub mu: f64,
    /// Capacity of each rolling buffer (recent / past).
    pub n_det: usize,
    /// Rounds after a reset before the detector may fire.
    pub tau_burn: usize,
    /// Probes collected in a recovery phase before re-estimating.
    pub m_relearn: usize,
    /// Multiplier mapping the calibration spread onto the firing threshold.
    pub cusum_threshold: f64,
    /// False-alarm budget used in the stored-threshold normalization.
    #[serde(default = "default_delta_fa")]
    pub delta_fa: f64,
    /// Operator-norm firing threshold; `None` until calibrated.
    #[serde(default)]
    pub threshold_b: Option<f64>,
}

fn default_delta_fa() -> f64 {
    0.05
}

impl DetectorConfig {
    /// Defaults: mu=0.1, n=50, tau_burn=100, m_relearn=30, threshold 3.0.
    pub fn standard() -> Self {
        DetectorConfig {
            mu: 0.1,
            n_det: 50,
            tau_burn: 100,
            m_relearn: 30,
            cusum_threshold: 3.0,
            delta_fa: 0.05,
            threshold_b: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.mu) {
            return Err(Error::InvalidConfig("need 0 <= mu <= 1".into()));
        }
        if self.n_det < 1 || self.m_relearn < 1 {
            return Err(Error::InvalidConfig(
                "need n_det >= 1 and m_relearn >= 1".into(),
            ));
        }
        Ok(())
    }

    /// The stored calibration constant `C_cal` such that
    /// `b = 2 C_cal sqrt(log(d T / delta_FA) / n)`.
    pub fn c_cal(&self, d: usize, horizon: usize) -> Option<f64> {
        self.threshold_b.map(|b| {
            let scale = ((d as f64 * horizon as f64) / self.delta_fa).ln() / self.n_det as f64;
            b / (2.0 * scale.sqrt())
        })
    }
}
