//! Benchmark harness: seeded episode, grid, and ablation runners with
//! costed-regret accounting plus CSV/JSON emission.
//!
//! Accounting: the control regret of a round is `best - played` against the
//! hidden parameter, summed over all rounds including probe rounds; the
//! costed regret additionally charges `probe_cost` per probe round.
//!
//! Seeding: within one experiment cell and replicate, every method replays
//! the identical environment stream (the env seed does not depend on the
//! method); policy-private randomness derives from a second stream keyed by
//! the method name. A fixed `(config, seed)` pair replays bit-identically.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::baselines::{AmbientRidge, OracleRidge, PcaLowRank, PcaWeighting, PCA_REFRESH_EVERY};
use crate::config::{DetectorConfig, EnvSpec, GammaMode, SpscConfig};
use crate::env::Env;
use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::{AdaptivePolicy, Decision, SpscPolicy};
use crate::rng::{derive_seed, label_hash};

/// Stationary runs used when calibrating the detector threshold.
pub const CALIBRATION_RUNS: usize = 20;

/// Every benchmarked policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MethodKind {
    Spsc,
    Adaptive,
    LinUcb,
    SwLinUcb,
    DLinUcb,
    RestartLinUcb,
    OracleLinUcb,
    LowOful,
    VOful,
    LrReward,
}

pub const ALL_METHODS: [MethodKind; 10] = [
    MethodKind::Spsc,
    MethodKind::Adaptive,
    MethodKind::LinUcb,
    MethodKind::SwLinUcb,
    MethodKind::DLinUcb,
    MethodKind::RestartLinUcb,
    MethodKind::OracleLinUcb,
    MethodKind::LowOful,
    MethodKind::VOful,
    MethodKind::LrReward,
];

impl MethodKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MethodKind::Spsc => "spsc",
            MethodKind::Adaptive => "adaptive",
            MethodKind::LinUcb => "linucb",
            MethodKind::SwLinUcb => "sw_linucb",
            MethodKind::DLinUcb => "d_linucb",
            MethodKind::RestartLinUcb => "restart_linucb",
            MethodKind::OracleLinUcb => "oracle_linucb",
            MethodKind::LowOful => "lowoful",
            MethodKind::VOful => "voful",
            MethodKind::LrReward => "lr_reward",
        }
    }
}

impl fmt::Display for MethodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MethodKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ALL_METHODS
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Unknown {
                what: "method",
                got: s.to_string(),
            })
    }
}

/// Per-round series of one episode.
#[derive(Clone, Debug, Serialize)]
pub struct RegretTrace {
    /// Instantaneous control regret per round (probe rounds included).
    pub control: Vec<f64>,
    /// Probe-round flags.
    pub probe: Vec<bool>,
    /// Cumulative costed regret after each round.
    pub costed_cum: Vec<f64>,
    /// Operator-norm projector distance to the true subspace (sampled when
    /// the estimate may have changed, held in between; 1 for ambient
    /// policies, 0 for the oracle).
    pub subspace_err: Vec<f64>,
    /// Latest armed detector statistic (NaN where undefined).
    pub detector: Vec<f64>,
}

impl RegretTrace {
    fn with_capacity(n: usize) -> Self {
        RegretTrace {
            control: Vec::with_capacity(n),
            probe: Vec::with_capacity(n),
            costed_cum: Vec::with_capacity(n),
            subspace_err: Vec::with_capacity(n),
            detector: Vec::with_capacity(n),
        }
    }

    pub fn probe_count(&self) -> usize {
        self.probe.iter().filter(|p| **p).count()
    }

    pub fn control_total(&self) -> f64 {
        self.control.iter().sum()
    }

    pub fn costed_total(&self) -> f64 {
        self.costed_cum.last().copied().unwrap_or(0.0)
    }

    /// Absolute gap of `costed = control + cost * probes` (identity check).
    pub fn accounting_gap(&self, probe_cost: f64) -> f64 {
        let expect = self.control_total() + probe_cost * self.probe_count() as f64;
        (self.costed_total() - expect).abs()
    }

    /// Smallest instantaneous control regret over non-probe rounds. Exploit
    /// plays come from the offered action set, so this can never be
    /// meaningfully negative.
    pub fn min_exploit_regret(&self) -> f64 {
        self.control
            .iter()
            .zip(&self.probe)
            .filter(|(_, p)| !**p)
            .map(|(c, _)| *c)
            .fold(f64::INFINITY, f64::min)
    }
}

/// One emitted result row. Field order is the CSV column order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub experiment: String,
    pub d: usize,
    pub r: usize,
    #[serde(rename = "K")]
    pub segments: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub seed: u64,
    pub method: String,
    pub control_regret: f64,
    pub costed_regret: f64,
    pub probe_count: usize,
    pub subspace_error_final: f64,
    pub wall_ms: u64,
}

pub const CSV_HEADER: [&str; 12] = [
    "experiment",
    "d",
    "r",
    "K",
    "T",
    "seed",
    "method",
    "control_regret",
    "costed_regret",
    "probe_count",
    "subspace_error_final",
    "wall_ms",
];

/// Everything an episode produces.
pub struct EpisodeOutput {
    pub trace: RegretTrace,
    pub result: CellResult,
    /// Rounds where the adaptive detector fired (empty otherwise).
    pub recoveries: Vec<usize>,
    /// Largest armed detector statistic of the run (0 otherwise).
    pub max_armed_stat: f64,
}

enum Runner {
    Spsc(SpscPolicy),
    Adaptive(AdaptivePolicy),
    Ambient(AmbientRidge),
    Oracle(OracleRidge),
    Pca(PcaLowRank, bool),
}

fn build_runner(
    method: MethodKind,
    env_spec: &EnvSpec,
    pol: &SpscConfig,
    det: &DetectorConfig,
    believed: &[usize],
    policy_seed: u64,
    discount: f64,
    restart_every: usize,
) -> Result<Runner> {
    let d = env_spec.d;
    let k = env_spec.segments;
    Ok(match method {
        MethodKind::Spsc => Runner::Spsc(SpscPolicy::new(
            d,
            pol,
            believed,
            env_spec.horizon,
            k,
        )?),
        MethodKind::Adaptive => {
            Runner::Adaptive(AdaptivePolicy::new(d, pol, det, k, policy_seed)?)
        }
        MethodKind::LinUcb => Runner::Ambient(AmbientRidge::plain(
            d,
            pol.lambda,
            pol.sigma_eps,
            pol.delta,
            k,
            pol.s_w,
        )?),
        MethodKind::SwLinUcb => Runner::Ambient(AmbientRidge::sliding_window(
            d,
            pol.lambda,
            pol.sigma_eps,
            pol.delta,
            k,
            pol.s_w,
            pol.w,
        )?),
        MethodKind::DLinUcb => Runner::Ambient(AmbientRidge::discounted(
            d,
            pol.lambda,
            pol.sigma_eps,
            pol.delta,
            k,
            pol.s_w,
            discount,
        )?),
        MethodKind::RestartLinUcb => Runner::Ambient(AmbientRidge::restarting(
            d,
            pol.lambda,
            pol.sigma_eps,
            pol.delta,
            k,
            pol.s_w,
            restart_every,
        )?),
        MethodKind::OracleLinUcb => Runner::Oracle(OracleRidge::new(
            env_spec.r,
            pol.lambda,
            pol.sigma_eps,
            pol.delta,
            k,
            pol.s_w,
        )?),
        MethodKind::LowOful => {
            Runner::Pca(PcaLowRank::new(d, pol, k, PcaWeighting::Unit, None)?, false)
        }
        MethodKind::VOful => Runner::Pca(
            PcaLowRank::new(d, pol, k, PcaWeighting::VarianceNormalized, None)?,
            false,
        ),
        MethodKind::LrReward => Runner::Pca(
            PcaLowRank::new(d, pol, k, PcaWeighting::Unit, Some(200))?,
            true,
        ),
    })
}

/// Runs one policy over one freshly built environment.
///
/// `seed_label` is the replicate index recorded in the output row;
/// `boundaries_override` replaces the segment starts handed to the
/// boundary-aware policy (its confidence radius keeps the true segment
/// count). `discount` and `restart_every` configure those ambient variants.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    experiment: &str,
    env_spec: &EnvSpec,
    pol: &SpscConfig,
    det: &DetectorConfig,
    method: MethodKind,
    seed_label: u64,
    policy_seed: u64,
    boundaries_override: Option<&[usize]>,
    discount: f64,
    restart_every: usize,
) -> Result<EpisodeOutput> {
    let mut env = Env::build(env_spec)?;
    let horizon = env_spec.horizon;
    let cost = env_spec.probe_cost;
    let true_bounds = env.boundaries();
    let believed: Vec<usize> = boundaries_override
        .map(|b| b.to_vec())
        .unwrap_or_else(|| true_bounds.clone());

    let mut runner = build_runner(
        method,
        env_spec,
        pol,
        det,
        &believed,
        policy_seed,
        discount,
        restart_every,
    )?;
    let mut trace = RegretTrace::with_capacity(horizon);
    let mut running = 0.0;
    let mut last_err = 1.0;
    let mut bound_ptr = 0usize;
    let started = Instant::now();

    for t in 0..horizon {
        let view = env.step()?;
        let at_boundary = bound_ptr < true_bounds.len() && true_bounds[bound_ptr] == t;
        if at_boundary {
            bound_ptr += 1;
        }
        let best = view.best_value();
        let theta = view.theta_snapshot();

        let (played_value, was_probe, basis_moved) = match &mut runner {
            Runner::Spsc(p) => match p.decide(t, &view.actions)? {
                Decision::Probe => {
                    let u = env.probe_direction(pol.d_cov)?;
                    let y = env.observe(&u);
                    p.record_probe(&u, y)?;
                    (u.dot(theta), true, true)
                }
                Decision::Play(i) => {
                    let x = &view.actions[i];
                    p.record_play(x, env.observe(x));
                    (x.dot(theta), false, false)
                }
            },
            Runner::Adaptive(p) => match p.decide(t, &view.actions) {
                Decision::Probe => {
                    let u = env.probe_direction(pol.d_cov)?;
                    let y = env.observe(&u);
                    p.record_probe(t, &u, y)?;
                    (u.dot(theta), true, true)
                }
                Decision::Play(i) => {
                    let x = &view.actions[i];
                    p.record_play(x, env.observe(x));
                    (x.dot(theta), false, false)
                }
            },
            Runner::Ambient(p) => {
                let i = p.select(t, &view.actions);
                let x = &view.actions[i];
                p.record(x, env.observe(x));
                (x.dot(theta), false, false)
            }
            Runner::Oracle(p) => {
                if at_boundary {
                    p.reset();
                }
                let i = p.select(env.current_basis(), &view.actions);
                let x = &view.actions[i];
                p.record(env.observe(x))?;
                (x.dot(theta), false, false)
            }
            Runner::Pca(p, resets) => {
                if *resets && at_boundary {
                    p.reset();
                }
                let i = p.select(t, &view.actions);
                let x = &view.actions[i];
                p.record(x, env.observe(x));
                (x.dot(theta), false, t % PCA_REFRESH_EVERY == 0)
            }
        };

        let inst = best - played_value;
        running += inst + if was_probe { cost } else { 0.0 };

        if basis_moved || at_boundary || t + 1 == horizon {
            last_err = match &runner {
                Runner::Oracle(_) => 0.0,
                Runner::Ambient(_) => 1.0,
                Runner::Spsc(p) => linalg::projector_distance(&p.basis(), env.current_basis()),
                Runner::Adaptive(p) => {
                    linalg::projector_distance(&p.basis(), env.current_basis())
                }
                Runner::Pca(p, _) => linalg::projector_distance(&p.basis(), env.current_basis()),
            };
        }

        trace.control.push(inst);
        trace.probe.push(was_probe);
        trace.costed_cum.push(running);
        trace.subspace_err.push(last_err);
        trace.detector.push(match &runner {
            Runner::Adaptive(p) => p.last_stat().unwrap_or(f64::NAN),
            _ => f64::NAN,
        });
    }

    let wall_ms = started.elapsed().as_millis() as u64;
    debug_assert!(trace.accounting_gap(cost) < 1e-6);
    let (recoveries, max_armed_stat) = match &runner {
        Runner::Adaptive(p) => (p.recoveries().to_vec(), p.max_armed_stat()),
        _ => (Vec::new(), 0.0),
    };
    let result = CellResult {
        experiment: experiment.to_string(),
        d: env_spec.d,
        r: env_spec.r,
        segments: env_spec.segments,
        horizon,
        seed: seed_label,
        method: method.as_str().to_string(),
        control_regret: trace.control_total(),
        costed_regret: trace.costed_total(),
        probe_count: trace.probe_count(),
        subspace_error_final: last_err,
        wall_ms,
    };
    Ok(EpisodeOutput {
        trace,
        result,
        recoveries,
        max_armed_stat,
    })
}

/// Mean and standard error (sample std over sqrt n; 0 for n < 2).
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn std_population(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Calibrates the detector firing threshold on stationary (single-segment)
/// replays of the given environment family: `b = mean + cusum_threshold *
/// std` of the per-run maxima of the armed statistic.
pub fn calibrate_detector(
    env_spec: &EnvSpec,
    pol: &SpscConfig,
    det: &DetectorConfig,
    runs: usize,
    base_seed: u64,
) -> Result<f64> {
    let mut spec = env_spec.clone();
    spec.segments = 1;
    let mut disarmed = det.clone();
    disarmed.threshold_b = None;
    let mut maxima = Vec::with_capacity(runs);
    for s in 0..runs as u64 {
        spec.seed = derive_seed(base_seed, &[label_hash("detector_calibration"), s]);
        let policy_seed = derive_seed(spec.seed, &[label_hash(MethodKind::Adaptive.as_str()), 1]);
        let out = run_episode(
            "detector_calibration",
            &spec,
            pol,
            &disarmed,
            MethodKind::Adaptive,
            s,
            policy_seed,
            None,
            DEFAULT_DISCOUNT,
            spec.horizon.max(1),
        )?;
        maxima.push(out.max_armed_stat);
    }
    let (mean, _) = mean_se(&maxima);
    Ok(mean + det.cusum_threshold * std_population(&maxima))
}

/// Default forgetting factor of the discounted ambient baseline.
pub const DEFAULT_DISCOUNT: f64 = 0.998;

/// Flat experiment configuration (the CLI's JSON surface). Field names are
/// the JSON keys; missing keys fall back to the synthetic-benchmark family.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub d: usize,
    pub r: usize,
    #[serde(rename = "K")]
    pub segments: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub n_actions: usize,
    pub sigma_eps: f64,
    #[serde(rename = "rho_A")]
    pub rho_a: f64,
    pub sigma_eta: f64,
    pub probe_cost: f64,
    pub eps_couple: f64,
    pub c0: f64,
    pub probe_period: Option<usize>,
    #[serde(rename = "W")]
    pub w: usize,
    pub lambda: f64,
    pub delta: f64,
    pub gamma_mode: GammaMode,
    pub gamma_scale: f64,
    pub d_cov: Option<usize>,
    pub delta_sigma: f64,
    pub plug_in_variance: bool,
    pub s_w: Option<f64>,
    pub mu: f64,
    pub n_det: usize,
    pub tau_burn: usize,
    pub m_relearn: usize,
    pub cusum_threshold: f64,
    pub delta_fa: f64,
    pub threshold_b: Option<f64>,
    pub discount: f64,
    pub restart_every: Option<usize>,
    pub methods: Vec<String>,
    pub seeds: usize,
    pub base_seed: u64,
    pub d_grid: Vec<usize>,
    pub r_grid: Vec<usize>,
    pub delta_sigma_sweep: Vec<f64>,
    pub coupling_sweep: Vec<f64>,
    pub coverage_sweep: Vec<usize>,
    pub probe_period_sweep: Vec<usize>,
    pub rank_sweep: Vec<usize>,
    pub oracle_multiplier_sweep: Vec<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: "synthetic".into(),
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
            c0: 1.0,
            probe_period: Some(50),
            w: 400,
            lambda: 0.01,
            delta: 0.05,
            gamma_mode: GammaMode::Off,
            gamma_scale: 1.0,
            d_cov: None,
            delta_sigma: 0.0,
            plug_in_variance: false,
            s_w: None,
            mu: 0.1,
            n_det: 50,
            tau_burn: 100,
            m_relearn: 30,
            cusum_threshold: 3.0,
            delta_fa: 0.05,
            threshold_b: None,
            discount: DEFAULT_DISCOUNT,
            restart_every: None,
            methods: vec![
                "spsc".into(),
                "linucb".into(),
                "sw_linucb".into(),
                "d_linucb".into(),
                "restart_linucb".into(),
                "oracle_linucb".into(),
                "lowoful".into(),
                "voful".into(),
                "lr_reward".into(),
            ],
            seeds: 10,
            base_seed: 0,
            d_grid: Vec::new(),
            r_grid: Vec::new(),
            delta_sigma_sweep: vec![0.0, 0.1, 0.25, 0.5],
            coupling_sweep: vec![0.0, 0.25, 0.5, 1.0],
            coverage_sweep: Vec::new(),
            probe_period_sweep: vec![5, 20, 100, 300],
            rank_sweep: vec![1, 3, 5, 10, 15],
            oracle_multiplier_sweep: vec![1, 4, 40],
        }
    }
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Serde(e.to_string()))
    }

    pub fn from_json_file(path: &str) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    /// Desk-quick override: 3 seeds, horizon 2000.
    pub fn quick(mut self) -> Self {
        self.seeds = 3;
        self.horizon = self.horizon.min(2000);
        self
    }

    pub fn env_spec(&self, seed: u64) -> EnvSpec {
        EnvSpec {
            d: self.d,
            r: self.r,
            segments: self.segments,
            horizon: self.horizon,
            n_actions: self.n_actions,
            sigma_eps: self.sigma_eps,
            rho_a: self.rho_a,
            sigma_eta: self.sigma_eta,
            probe_cost: self.probe_cost,
            eps_couple: self.eps_couple,
            seed,
        }
    }

    pub fn spsc_cfg(&self) -> SpscConfig {
        SpscConfig {
            r: self.r,
            w: self.w,
            lambda: self.lambda,
            delta: self.delta,
            sigma_eps: self.sigma_eps,
            s_w: self.s_w.unwrap_or_else(|| self.env_spec(0).default_s_w()),
            c0: self.c0,
            probe_period: self.probe_period,
            gamma_mode: self.gamma_mode,
            gamma_scale: self.gamma_scale,
            d_cov: self.d_cov.unwrap_or(self.d),
            delta_sigma: self.delta_sigma,
            plug_in_variance: self.plug_in_variance,
        }
    }

    pub fn detector_cfg(&self) -> DetectorConfig {
        DetectorConfig {
            mu: self.mu,
            n_det: self.n_det,
            tau_burn: self.tau_burn,
            m_relearn: self.m_relearn,
            cusum_threshold: self.cusum_threshold,
            delta_fa: self.delta_fa,
            threshold_b: self.threshold_b,
        }
    }

    pub fn parsed_methods(&self) -> Result<Vec<MethodKind>> {
        self.methods.iter().map(|m| m.parse()).collect()
    }

    fn restart_interval(&self) -> usize {
        self.restart_every
            .unwrap_or_else(|| (self.horizon / self.segments).max(1))
    }
}

/// Runs every configured method over `seeds` shared-environment replicates
/// of the configured cell. Calibrates the detector first if the adaptive
/// policy is requested without a stored threshold.
pub fn run_cell(cfg: &ExperimentConfig) -> Result<Vec<EpisodeOutput>> {
    let methods = cfg.parsed_methods()?;
    let pol = cfg.spsc_cfg();
    let mut det = cfg.detector_cfg();
    if methods.contains(&MethodKind::Adaptive) && det.threshold_b.is_none() {
        let spec = cfg.env_spec(0);
        det.threshold_b = Some(calibrate_detector(
            &spec,
            &pol,
            &det,
            CALIBRATION_RUNS,
            cfg.base_seed,
        )?);
    }
    let mut outputs = Vec::new();
    for s in 0..cfg.seeds as u64 {
        let env_seed = derive_seed(
            cfg.base_seed,
            &[
                label_hash(&cfg.experiment),
                cfg.d as u64,
                cfg.r as u64,
                cfg.segments as u64,
                cfg.horizon as u64,
                s,
            ],
        );
        let spec = cfg.env_spec(env_seed);
        for method in &methods {
            let policy_seed = derive_seed(env_seed, &[label_hash(method.as_str()), 1]);
            outputs.push(run_episode(
                &cfg.experiment,
                &spec,
                &pol,
                &det,
                *method,
                s,
                policy_seed,
                None,
                cfg.discount,
                cfg.restart_interval(),
            )?);
        }
    }
    Ok(outputs)
}

/// Per-method summary statistics within one grid cell.
#[derive(Clone, Debug, Serialize)]
pub struct MethodStat {
    pub method: String,
    pub mean_costed: f64,
    pub se_costed: f64,
    pub mean_control: f64,
    pub se_control: f64,
    pub mean_probes: f64,
}

/// One grid cell's summary.
#[derive(Clone, Debug, Serialize)]
pub struct CellSummary {
    pub d: usize,
    pub r: usize,
    pub stats: Vec<MethodStat>,
    /// Mean costed regret ratio subspace-policy / plain ambient (when both ran).
    pub ratio_spsc_linucb: Option<f64>,
    /// Dimension-headroom crossover predictor: `d - r >= T^(1/6)`.
    pub predicted_spsc: bool,
    /// Whether the subspace policy beat plain ambient on mean costed regret.
    pub observed_spsc: Option<bool>,
    pub agree: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct GridSummary {
    pub cells: Vec<CellSummary>,
}

/// Grid output: all rows plus the per-cell summary.
#[derive(Serialize)]
pub struct GridOutput {
    pub summary: GridSummary,
    pub results: Vec<CellResult>,
}

fn summarize_cell(d: usize, r: usize, horizon: usize, rows: &[CellResult]) -> CellSummary {
    let methods: Vec<String> = {
        let mut seen = Vec::new();
        for row in rows {
            if !seen.contains(&row.method) {
                seen.push(row.method.clone());
            }
        }
        seen
    };
    let stats: Vec<MethodStat> = methods
        .iter()
        .map(|m| {
            let costed: Vec<f64> = rows
                .iter()
                .filter(|row| &row.method == m)
                .map(|row| row.costed_regret)
                .collect();
            let control: Vec<f64> = rows
                .iter()
                .filter(|row| &row.method == m)
                .map(|row| row.control_regret)
                .collect();
            let probes: Vec<f64> = rows
                .iter()
                .filter(|row| &row.method == m)
                .map(|row| row.probe_count as f64)
                .collect();
            let (mean_costed, se_costed) = mean_se(&costed);
            let (mean_control, se_control) = mean_se(&control);
            MethodStat {
                method: m.clone(),
                mean_costed,
                se_costed,
                mean_control,
                se_control,
                mean_probes: mean_se(&probes).0,
            }
        })
        .collect();
    let mean_of = |name: &str| {
        stats
            .iter()
            .find(|s| s.method == name)
            .map(|s| s.mean_costed)
    };
    let ratio = match (mean_of("spsc"), mean_of("linucb")) {
        (Some(a), Some(b)) if b != 0.0 => Some(a / b),
        _ => None,
    };
    let predicted_spsc = (d as f64 - r as f64) >= (horizon as f64).powf(1.0 / 6.0);
    let observed_spsc = ratio.map(|q| q < 1.0);
    CellSummary {
        d,
        r,
        stats,
        ratio_spsc_linucb: ratio,
        predicted_spsc,
        observed_spsc,
        agree: observed_spsc.map(|o| o == predicted_spsc),
    }
}

/// Sweeps the configured `(d, r)` grid (falling back to the single configured
/// cell), skipping invalid cells (`r >= d`).
pub fn run_grid(cfg: &ExperimentConfig) -> Result<GridOutput> {
    let ds = if cfg.d_grid.is_empty() {
        vec![cfg.d]
    } else {
        cfg.d_grid.clone()
    };
    let rs = if cfg.r_grid.is_empty() {
        vec![cfg.r]
    } else {
        cfg.r_grid.clone()
    };
    let mut results = Vec::new();
    let mut cells = Vec::new();
    for &d in &ds {
        for &r in &rs {
            if r < 1 || r >= d {
                continue;
            }
            let mut cell_cfg = cfg.clone();
            cell_cfg.d = d;
            cell_cfg.r = r;
            cell_cfg.d_cov = cfg.d_cov.map(|c| c.min(d));
            let rows: Vec<CellResult> = run_cell(&cell_cfg)?
                .into_iter()
                .map(|o| o.result)
                .collect();
            cells.push(summarize_cell(d, r, cfg.horizon, &rows));
            results.extend(rows);
        }
    }
    Ok(GridOutput {
        summary: GridSummary { cells },
        results,
    })
}

/// The supported ablation families.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationKind {
    /// Centering offset `delta_sigma` injected into the probe statistic.
    Variance,
    /// State-noise coupling strength in the environment.
    Coupling,
    /// Probe coverage restricted to the first `d_cov` coordinates.
    Coverage,
    /// Fixed probe-period sweep (exploration cost vs tracking).
    ProbeRate,
    /// Working rank of the policy vs the true environment rank.
    RankMisspec,
    /// Boundary-knowledge quality: evenly spaced believed boundaries at
    /// multiples of the true segment count, vs the adaptive policy.
    OracleQuality,
    /// The degenerate low-dimension cell where subspace structure cannot pay.
    SmallD,
}

impl AblationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AblationKind::Variance => "variance",
            AblationKind::Coupling => "coupling",
            AblationKind::Coverage => "coverage",
            AblationKind::ProbeRate => "probe_rate",
            AblationKind::RankMisspec => "rank_misspec",
            AblationKind::OracleQuality => "oracle_quality",
            AblationKind::SmallD => "small_d",
        }
    }
}

impl FromStr for AblationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            AblationKind::Variance,
            AblationKind::Coupling,
            AblationKind::Coverage,
            AblationKind::ProbeRate,
            AblationKind::RankMisspec,
            AblationKind::OracleQuality,
            AblationKind::SmallD,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Unknown {
            what: "ablation kind",
            got: s.to_string(),
        })
    }
}

fn spsc_rows(cfg: &ExperimentConfig, boundaries: Option<&[usize]>) -> Result<Vec<CellResult>> {
    let pol = cfg.spsc_cfg();
    let det = cfg.detector_cfg();
    let mut rows = Vec::new();
    for s in 0..cfg.seeds as u64 {
        let env_seed = derive_seed(
            cfg.base_seed,
            &[
                label_hash(&cfg.experiment),
                cfg.d as u64,
                cfg.r as u64,
                cfg.segments as u64,
                cfg.horizon as u64,
                s,
            ],
        );
        let spec = cfg.env_spec(env_seed);
        let policy_seed = derive_seed(env_seed, &[label_hash("spsc"), 1]);
        rows.push(
            run_episode(
                &cfg.experiment,
                &spec,
                &pol,
                &det,
                MethodKind::Spsc,
                s,
                policy_seed,
                boundaries,
                cfg.discount,
                cfg.restart_interval(),
            )?
            .result,
        );
    }
    Ok(rows)
}

/// Evenly spaced believed boundaries `floor(i T / k)` for `i < k`.
pub fn even_boundaries(horizon: usize, k: usize) -> Vec<usize> {
    let mut out: Vec<usize> = (0..k.max(1)).map(|i| i * horizon / k.max(1)).collect();
    out.dedup();
    out
}

/// Runs one ablation family; the swept value is encoded in the row's
/// `experiment` label.
pub fn run_ablation(kind: AblationKind, cfg: &ExperimentConfig) -> Result<Vec<CellResult>> {
    let mut results = Vec::new();
    match kind {
        AblationKind::Variance => {
            for &v in &cfg.delta_sigma_sweep {
                let mut c = cfg.clone();
                c.delta_sigma = v;
                c.experiment = format!("variance_offset_{v:.2}");
                results.extend(spsc_rows(&c, None)?);
            }
        }
        AblationKind::Coupling => {
            for &v in &cfg.coupling_sweep {
                let mut c = cfg.clone();
                c.eps_couple = v;
                c.experiment = format!("coupling_{v:.2}");
                results.extend(spsc_rows(&c, None)?);
            }
        }
        AblationKind::Coverage => {
            let sweep = if cfg.coverage_sweep.is_empty() {
                let mut v = vec![1, cfg.d.div_ceil(4), cfg.d.div_ceil(2), cfg.d];
                v.sort_unstable();
                v.dedup();
                v
            } else {
                cfg.coverage_sweep.clone()
            };
            for v in sweep {
                let mut c = cfg.clone();
                c.d_cov = Some(v);
                c.experiment = format!("coverage_{v}");
                results.extend(spsc_rows(&c, None)?);
            }
        }
        AblationKind::ProbeRate => {
            for &v in &cfg.probe_period_sweep {
                let mut c = cfg.clone();
                c.probe_period = Some(v);
                c.experiment = format!("probe_period_{v}");
                results.extend(spsc_rows(&c, None)?);
            }
        }
        AblationKind::RankMisspec => {
            for &v in &cfg.rank_sweep {
                if v < 1 || v > cfg.d {
                    continue;
                }
                let mut c = cfg.clone();
                c.experiment = format!("rank_misspec_{v}");
                // Only the policy's working rank moves; the world keeps r.
                let mut pol = c.spsc_cfg();
                pol.r = v;
                let det = c.detector_cfg();
                for s in 0..c.seeds as u64 {
                    let env_seed = derive_seed(
                        c.base_seed,
                        &[
                            label_hash(&c.experiment),
                            c.d as u64,
                            c.r as u64,
                            c.segments as u64,
                            c.horizon as u64,
                            s,
                        ],
                    );
                    let spec = c.env_spec(env_seed);
                    let policy_seed = derive_seed(env_seed, &[label_hash("spsc"), 1]);
                    results.push(
                        run_episode(
                            &c.experiment,
                            &spec,
                            &pol,
                            &det,
                            MethodKind::Spsc,
                            s,
                            policy_seed,
                            None,
                            c.discount,
                            c.restart_interval(),
                        )?
                        .result,
                    );
                }
            }
        }
        AblationKind::OracleQuality => {
            for &mult in &cfg.oracle_multiplier_sweep {
                let mut c = cfg.clone();
                c.experiment = format!("oracle_quality_x{mult}");
                let bounds = even_boundaries(c.horizon, c.segments * mult.max(1));
                results.extend(spsc_rows(&c, Some(&bounds))?);
            }
            // The boundary-free policy as the comparison point.
            let mut c = cfg.clone();
            c.experiment = "oracle_quality_adaptive".into();
            c.methods = vec!["adaptive".into()];
            results.extend(run_cell(&c)?.into_iter().map(|o| o.result));
        }
        AblationKind::SmallD => {
            let mut c = cfg.clone();
            c.experiment = "small_d".into();
            c.d = 2;
            c.r = 1;
            c.segments = 4;
            c.horizon = 6000;
            c.n_actions = 50;
            c.sigma_eps = 1.0;
            c.d_cov = None;
            results.extend(run_cell(&c)?.into_iter().map(|o| o.result));
        }
    }
    Ok(results)
}

/// One (probe-count, mean projector error) bin of the rate report.
#[derive(Clone, Debug, Serialize)]
pub struct RateRow {
    pub probes: usize,
    pub mean_error: f64,
}

/// Subspace-error decay report.
#[derive(Clone, Debug, Serialize)]
pub struct RateReport {
    pub rows: Vec<RateRow>,
    /// Least-squares slope of log mean error against log probe count.
    pub slope: f64,
}

/// Probes a stationary (single-segment) replica of the configured cell every
/// round and records the tracker's projector error at logarithmic probe
/// counts, averaged over seeds.
pub fn subspace_rate_report(cfg: &ExperimentConfig) -> Result<RateReport> {
    let bins: Vec<usize> = vec![50, 100, 200, 400, 800, 1600, 2000];
    let mut spec = cfg.env_spec(0);
    spec.segments = 1;
    spec.horizon = *bins.last().unwrap();
    let center = cfg.sigma_eps * cfg.sigma_eps;
    let mut errors = vec![Vec::with_capacity(cfg.seeds); bins.len()];
    for s in 0..cfg.seeds as u64 {
        spec.seed = derive_seed(cfg.base_seed, &[label_hash("rate_report"), s]);
        let mut env = Env::build(&spec)?;
        let mut tracker = crate::ident::SubspaceTracker::new(spec.d, spec.r)?;
        let true_basis = env.segments()[0].b.clone();
        for t in 0..spec.horizon {
            let _ = env.step()?;
            let u = env.probe_direction(spec.d)?;
            let y = env.observe(&u);
            tracker.push(&crate::ident::moment_sample(y, &u, center))?;
            if let Some(slot) = bins.iter().position(|&b| b == t + 1) {
                errors[slot].push(linalg::projector_distance(
                    &tracker.basis_or_canonical(),
                    &true_basis,
                ));
            }
        }
    }
    let rows: Vec<RateRow> = bins
        .iter()
        .zip(&errors)
        .map(|(&probes, errs)| RateRow {
            probes,
            mean_error: mean_se(errs).0,
        })
        .collect();
    let xs: Vec<f64> = rows.iter().map(|r| (r.probes as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.mean_error.max(1e-300).ln()).collect();
    Ok(RateReport {
        rows,
        slope: least_squares_slope(&xs, &ys),
    })
}

/// Ordinary least-squares slope of `ys` on `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let cov: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    cov / var
}

/// Serializes result rows as CSV with the fixed 12-column header (header-only
/// when empty).
pub fn results_csv_string(results: &[CellResult]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    if results.is_empty() {
        writer
            .write_record(CSV_HEADER)
            .map_err(|e| Error::Serde(e.to_string()))?;
    }
    for row in results {
        writer.serialize(row).map_err(|e| Error::Serde(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| Error::Serde(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Serde(e.to_string()))
}

pub fn write_results_csv(path: &str, results: &[CellResult]) -> Result<()> {
    std::fs::write(path, results_csv_string(results)?).map_err(|e| Error::io(path, e))
}

pub fn results_json_string(results: &[CellResult]) -> Result<String> {
    serde_json::to_string_pretty(results).map_err(|e| Error::Serde(e.to_string()))
}

pub fn write_results_json(path: &str, results: &[CellResult]) -> Result<()> {
    std::fs::write(path, results_json_string(results)?).map_err(|e| Error::io(path, e))
}

pub fn grid_json_string(output: &GridOutput) -> Result<String> {
    serde_json::to_string_pretty(output).map_err(|e| Error::Serde(e.to_string()))
}

/// Long-form `(t, value)` rows of the cumulative costed regret series.
pub fn trace_csv_string(trace: &RegretTrace) -> String {
    let mut out = String::from("t,value\n");
    for (t, v) in trace.costed_cum.iter().enumerate() {
        out.push_str(&format!("{t},{v}\n"));
    }
    out
}

pub fn rate_csv_string(report: &RateReport) -> String {
    let mut out = String::from("probes,mean_error\n");
    for row in &report.rows {
        out.push_str(&format!("{},{}\n", row.probes, row.mean_error));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_cfg() -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.d = 4;
        cfg.r = 1;
        cfg.segments = 2;
        cfg.horizon = 240;
        cfg.n_actions = 8;
        cfg.sigma_eps = 0.3;
        cfg.rho_a = 0.995;
        cfg.sigma_eta = 0.05;
        cfg.w = 60;
        cfg.probe_period = Some(30);
        cfg.seeds = 2;
        cfg
    }

    fn one_episode(cfg: &ExperimentConfig, method: MethodKind, seed: u64) -> EpisodeOutput {
        let env_seed = derive_seed(cfg.base_seed, &[label_hash(&cfg.experiment), seed]);
        let spec = cfg.env_spec(env_seed);
        let policy_seed = derive_seed(env_seed, &[label_hash(method.as_str()), 1]);
        run_episode(
            &cfg.experiment,
            &spec,
            &cfg.spsc_cfg(),
            &cfg.detector_cfg(),
            method,
            seed,
            policy_seed,
            None,
            cfg.discount,
            cfg.restart_interval(),
        )
        .unwrap()
    }

    #[test]
    fn accounting_identity_holds() {
        let cfg = tiny_cfg();
        let out = one_episode(&cfg, MethodKind::Spsc, 0);
        assert!(out.trace.accounting_gap(cfg.probe_cost) < 1e-9);
        assert!(out.trace.min_exploit_regret() >= -1e-10);
        assert_eq!(out.trace.control.len(), cfg.horizon);
        assert_eq!(out.result.probe_count, out.trace.probe_count());
        assert!(out.result.probe_count > 0);
        assert!(
            (out.result.costed_regret
                - out.result.control_regret
                - cfg.probe_cost * out.result.probe_count as f64)
                .abs()
                < 1e-9
        );
    }

    #[test]
    fn zero_probe_cost_collapses_costed_to_control() {
        let mut cfg = tiny_cfg();
        cfg.probe_cost = 0.0;
        let out = one_episode(&cfg, MethodKind::Spsc, 1);
        assert!((out.result.costed_regret - out.result.control_regret).abs() < 1e-12);
    }

    #[test]
    fn probe_free_methods_charge_nothing() {
        let cfg = tiny_cfg();
        for method in [MethodKind::LinUcb, MethodKind::OracleLinUcb, MethodKind::LowOful] {
            let out = one_episode(&cfg, method, 0);
            assert_eq!(out.result.probe_count, 0, "{method}");
            assert!((out.result.costed_regret - out.result.control_regret).abs() < 1e-12);
        }
    }

    #[test]
    fn episodes_replay_bit_identically() {
        let cfg = tiny_cfg();
        let a = one_episode(&cfg, MethodKind::Spsc, 3);
        let b = one_episode(&cfg, MethodKind::Spsc, 3);
        assert_eq!(a.result.costed_regret.to_bits(), b.result.costed_regret.to_bits());
        assert_eq!(a.trace.costed_cum, b.trace.costed_cum);
        let c = one_episode(&cfg, MethodKind::Adaptive, 3);
        let d = one_episode(&cfg, MethodKind::Adaptive, 3);
        assert_eq!(c.result.costed_regret.to_bits(), d.result.costed_regret.to_bits());
    }

    #[test]
    fn oracle_and_ambient_fill_fixed_diagnostics() {
        let cfg = tiny_cfg();
        let oracle = one_episode(&cfg, MethodKind::OracleLinUcb, 0);
        assert_eq!(oracle.result.subspace_error_final, 0.0);
        let ambient = one_episode(&cfg, MethodKind::LinUcb, 0);
        assert_eq!(ambient.result.subspace_error_final, 1.0);
    }

    #[test]
    fn oracle_beats_plain_ambient_on_shared_stream() {
        // Same environment streams, r=1 regression with boundary resets vs
        // d=4 regression with stale segments: the oracle must come out
        // ahead on average.
        let mut cfg = tiny_cfg();
        cfg.horizon = 600;
        let (mut oracle, mut ambient) = (0.0, 0.0);
        for seed in 0..5 {
            oracle += one_episode(&cfg, MethodKind::OracleLinUcb, seed).result.control_regret;
            ambient += one_episode(&cfg, MethodKind::LinUcb, seed).result.control_regret;
        }
        assert!(
            oracle < ambient,
            "oracle mean {:.2} vs ambient mean {:.2}",
            oracle / 5.0,
            ambient / 5.0
        );
    }

    #[test]
    fn full_coverage_matches_default_bit_exactly() {
        let cfg = tiny_cfg();
        let base = one_episode(&cfg, MethodKind::Spsc, 0);
        let mut explicit = tiny_cfg();
        explicit.d_cov = Some(explicit.d);
        let again = one_episode(&explicit, MethodKind::Spsc, 0);
        assert_eq!(
            base.result.costed_regret.to_bits(),
            again.result.costed_regret.to_bits()
        );
    }

    #[test]
    fn mean_se_matches_hand_computation() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0, 4.0]);
        assert!((m - 2.5).abs() < 1e-12);
        let expect = (5.0f64 / 3.0).sqrt() / 2.0; // sample std / sqrt(4)
        assert!((se - expect).abs() < 1e-12);
        assert_eq!(mean_se(&[7.0]), (7.0, 0.0));
        assert_eq!(mean_se(&[]), (0.0, 0.0));
    }

    #[test]
    fn method_names_roundtrip() {
        for m in ALL_METHODS {
            assert_eq!(m.as_str().parse::<MethodKind>().unwrap(), m);
        }
        assert!(matches!(
            "frobnicate".parse::<MethodKind>(),
            Err(Error::Unknown { what: "method", .. })
        ));
        assert!("oracle_quality".parse::<AblationKind>().is_ok());
        assert!("nope".parse::<AblationKind>().is_err());
    }

    #[test]
    fn csv_emission_roundtrips() {
        let cfg = tiny_cfg();
        let rows = vec![
            one_episode(&cfg, MethodKind::Spsc, 0).result,
            one_episode(&cfg, MethodKind::LinUcb, 0).result,
        ];
        let text = results_csv_string(&rows).unwrap();
        assert!(text.starts_with(&(CSV_HEADER.join(",") + "\n")));
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let back: Vec<CellResult> = reader.deserialize().map(|r| r.unwrap()).collect();
        assert_eq!(back, rows);
    }

    #[test]
    fn empty_results_emit_header_only() {
        let text = results_csv_string(&[]).unwrap();
        assert_eq!(text.trim_end(), CSV_HEADER.join(","));
    }

    #[test]
    fn json_emission_roundtrips() {
        let cfg = tiny_cfg();
        let rows = vec![one_episode(&cfg, MethodKind::Spsc, 0).result];
        let text = results_json_string(&rows).unwrap();
        let back: Vec<CellResult> = serde_json::from_str(&text).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn trace_csv_is_long_form() {
        let cfg = tiny_cfg();
        let out = one_episode(&cfg, MethodKind::Spsc, 0);
        let text = trace_csv_string(&out.trace);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,value");
        assert_eq!(lines.len(), cfg.horizon + 1);
        assert!(lines[1].starts_with("0,"));
    }

    #[test]
    fn config_json_defaults_and_overrides() {
        let cfg = ExperimentConfig::from_json_str(r#"{"d": 8, "r": 2, "T": 500}"#).unwrap();
        assert_eq!(cfg.d, 8);
        assert_eq!(cfg.horizon, 500);
        assert_eq!(cfg.segments, 10); // default fills in
        assert_eq!(cfg.w, 400);
        let quick = cfg.quick();
        assert_eq!(quick.seeds, 3);
        assert_eq!(quick.horizon, 500); // already below the quick cap
        assert!(ExperimentConfig::from_json_str("{nope}").is_err());
    }

    #[test]
    fn grid_summarizes_cells_and_ratio() {
        let mut cfg = tiny_cfg();
        cfg.methods = vec!["spsc".into(), "linucb".into()];
        cfg.d_grid = vec![4];
        cfg.r_grid = vec![1, 4]; // r=4 invalid (r >= d), must be skipped
        let out = run_grid(&cfg).unwrap();
        assert_eq!(out.summary.cells.len(), 1);
        let cell = &out.summary.cells[0];
        assert!(cell.ratio_spsc_linucb.is_some());
        assert!(cell.observed_spsc.is_some());
        assert_eq!(out.results.len(), 2 * cfg.seeds);
        // 240^(1/6) = 2.49 <= d - r = 3: headroom predicts the subspace side.
        assert!(cell.predicted_spsc);
    }

    #[test]
    fn ablation_labels_encode_swept_value() {
        let mut cfg = tiny_cfg();
        cfg.seeds = 1;
        cfg.coupling_sweep = vec![0.0, 0.5];
        let rows = run_ablation(AblationKind::Coupling, &cfg).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].experiment, "coupling_0.00");
        assert_eq!(rows[1].experiment, "coupling_0.50");
        // The zero-coupling row equals the unablated run bit-exactly.
        let mut base = tiny_cfg();
        base.seeds = 1;
        base.experiment = "coupling_0.00".into();
        let direct = spsc_rows(&base, None).unwrap();
        assert_eq!(rows[0], direct[0]);
    }

    #[test]
    fn oracle_quality_multiplier_scales_probe_count() {
        let mut cfg = tiny_cfg();
        cfg.seeds = 1;
        // Period 25 does not divide the x4 segment length of 30, so the
        // per-segment ceiling makes the believed-boundary override visible
        // in the probe count (ceil(30/25)=2 per short segment).
        cfg.probe_period = Some(25);
        cfg.oracle_multiplier_sweep = vec![1, 4];
        cfg.methods = vec!["spsc".into()];
        cfg.threshold_b = Some(1e9); // keep the adaptive row cheap: never fires
        let rows = run_ablation(AblationKind::OracleQuality, &cfg).unwrap();
        let probes_x1 = rows
            .iter()
            .find(|r| r.experiment == "oracle_quality_x1")
            .unwrap()
            .probe_count;
        let probes_x4 = rows
            .iter()
            .find(|r| r.experiment == "oracle_quality_x4")
            .unwrap()
            .probe_count;
        assert!(probes_x4 > probes_x1, "{probes_x4} vs {probes_x1}");
        assert!(rows.iter().any(|r| r.experiment == "oracle_quality_adaptive"));
    }

    #[test]
    fn even_boundaries_are_sorted_and_start_at_zero() {
        assert_eq!(even_boundaries(100, 4), vec![0, 25, 50, 75]);
        assert_eq!(even_boundaries(10, 3), vec![0, 3, 6]);
        assert_eq!(even_boundaries(5, 1), vec![0]);
    }

    #[test]
    fn calibration_returns_positive_threshold() {
        let mut cfg = tiny_cfg();
        cfg.horizon = 400;
        cfg.n_det = 10;
        cfg.tau_burn = 50;
        cfg.m_relearn = 10;
        cfg.mu = 0.3;
        let b = calibrate_detector(
            &cfg.env_spec(0),
            &cfg.spsc_cfg(),
            &cfg.detector_cfg(),
            5,
            7,
        )
        .unwrap();
        assert!(b.is_finite() && b > 0.0, "threshold {b}");
    }

    #[test]
    fn rate_report_errors_decay() {
        let mut cfg = tiny_cfg();
        cfg.d = 8;
        cfg.r = 2;
        cfg.seeds = 2;
        let report = subspace_rate_report(&cfg).unwrap();
        assert_eq!(report.rows.len(), 7);
        assert!(report.rows.iter().all(|r| r.mean_error > 0.0));
        assert!(
            report.rows.last().unwrap().mean_error < report.rows[0].mean_error,
            "errors should shrink with probes"
        );
        assert!(report.slope < 0.0, "slope {}", report.slope);
        let text = rate_csv_string(&report);
        assert!(text.starts_with("probes,mean_error\n"));
        assert_eq!(text.lines().count(), 8);
    }
}
