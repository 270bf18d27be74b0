//! The probe-and-project policies.
//!
//! Both policies alternate two kinds of rounds. Probe rounds play the
//! environment's scaled-sphere direction and feed the observation into a
//! [`SubspaceTracker`]; exploit rounds run ridge UCB inside the tracked
//! subspace, re-projecting a sliding window of recent (action, reward) pairs
//! through the current basis every round.
//!
//! [`SpscPolicy`] is told the segment boundaries and resets its tracker and
//! window at each one, probing on a per-segment schedule. [`AdaptivePolicy`]
//! knows nothing about boundaries: it probes at random (rate `mu`), watches
//! the operator-norm gap between the last two blocks of probe samples, and on
//! a firing enters a recovery phase of consecutive probes before resuming.

use std::collections::{HashSet, VecDeque};

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{DetectorConfig, GammaMode, SpscConfig};
use crate::error::{Error, Result};
use crate::ident::{moment_sample, SubspaceTracker};
use crate::linalg;

/// What the policy wants to do this round: play the environment's probe
/// direction, or play the action at this index.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Probe,
    Play(usize),
}

/// Confidence radius of the projected ridge estimator:
/// `sigma_eps sqrt(rank ln(1 + window R_A^2/(lambda rank)) + 2 ln(2 segments/delta))
///  + sqrt(lambda) latent_bound`.
///
/// `window` is the effective sample count (the window cap for the windowed
/// policies, the running update count for the unwindowed baselines).
pub fn confidence_radius(
    rank: usize,
    window: f64,
    lambda: f64,
    sigma_eps: f64,
    delta: f64,
    segments: usize,
    action_radius: f64,
    latent_bound: f64,
) -> f64 {
    let r = rank as f64;
    let noise_term = if sigma_eps > 0.0 {
        let log_det = r * (1.0 + window * action_radius * action_radius / (lambda * r)).ln();
        let log_conf = 2.0 * (2.0 * segments as f64 / delta).ln();
        sigma_eps * (log_det + log_conf).sqrt()
    } else {
        0.0
    };
    noise_term + lambda.sqrt() * latent_bound
}

/// Ceiling that forgives float dust just above an integer, so budget
/// expressions like `1000^(2/3)` land on 100 regardless of rounding side.
fn ceil_forgiving(x: f64) -> f64 {
    (x - 1e-9 * (1.0 + x.abs())).ceil()
}

/// Probe offsets within a segment of `len` rounds: either `ceil(len/period)`
/// evenly spaced probes (fixed-period override) or the sublinear budget
/// `min(len, ceil(c0 len^(2/3)))`. Offsets are `floor(i len / m)` starting at
/// 0, which keeps at most `2 ceil(len/m)` exploit rounds between probes.
pub fn probe_offsets(len: usize, c0: f64, period: Option<usize>) -> Result<Vec<usize>> {
    if len == 0 {
        return Err(Error::InvalidConfig("probe schedule for empty segment".into()));
    }
    let m = match period {
        Some(0) => return Err(Error::InvalidConfig("probe period must be positive".into())),
        Some(p) => len.div_ceil(p),
        None => {
            if c0 <= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "probe budget constant must be positive, got {c0}"
                )));
            }
            let budget = ceil_forgiving(c0 * (len as f64).powf(2.0 / 3.0)) as usize;
            budget.clamp(1, len)
        }
    };
    Ok((0..m).map(|i| i * len / m).collect())
}

/// Additive optimism for subspace mismatch, scaled by the action norm:
/// zero when off, else `scale min(1, sqrt(ln(2d/delta)/max(m,1)))` — the
/// plug-in decay rate of the tracked subspace's error in the probe count.
pub fn subspace_bonus(mode: GammaMode, scale: f64, probe_count: usize, d: usize, delta: f64) -> f64 {
    match mode {
        GammaMode::Off => 0.0,
        GammaMode::Plugin => {
            let m = probe_count.max(1) as f64;
            let rate = ((2.0 * d as f64 / delta).ln() / m).sqrt();
            scale * rate.min(1.0)
        }
    }
}

/// Operator-norm gap between the means of two non-empty blocks of moment
/// samples — the change statistic watched by the adaptive policy.
pub fn detector_stat(recent: &[DMatrix<f64>], past: &[DMatrix<f64>]) -> Result<f64> {
    let recent_mean = mean_of(recent.iter())?;
    let past_mean = mean_of(past.iter())?;
    Ok(linalg::op_norm_sym(&(recent_mean - past_mean)))
}

fn mean_of<'a, I>(mut iter: I) -> Result<DMatrix<f64>>
where
    I: Iterator<Item = &'a DMatrix<f64>>,
{
    let first = iter.next().ok_or(Error::EmptyBuffer)?;
    let mut acc = first.clone();
    let mut n = 1usize;
    for m in iter {
        acc += m;
        n += 1;
    }
    Ok(acc / n as f64)
}

/// Sliding window of ambient (action, reward) pairs plus the projected ridge
/// UCB index. The window is re-projected through the caller's basis on every
/// selection, so a basis refresh retroactively applies to the whole window.
#[derive(Clone, Debug)]
pub struct ProjectedRidge {
    window: VecDeque<(DVector<f64>, f64)>,
    cap: usize,
    lambda: f64,
    beta: f64,
}

impl ProjectedRidge {
    pub fn new(cap: usize, lambda: f64, beta: f64) -> Self {
        ProjectedRidge {
            window: VecDeque::with_capacity(cap),
            cap,
            lambda,
            beta,
        }
    }

    pub fn record(&mut self, x: DVector<f64>, y: f64) {
        if self.window.len() == self.cap {
            self.window.pop_front();
        }
        self.window.push_back((x, y));
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }

    pub fn window_len(&self) -> usize {
        self.window.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// UCB index of every action through `basis`: `z'a + beta ||z||_{V^-1} +
    /// bonus ||x||` with `V = lambda I + sum zz'` over the projected window.
    /// With an empty window this reduces to `(beta/sqrt(lambda)) ||z|| +
    /// bonus ||x||`.
    pub fn indices(
        &self,
        basis: &DMatrix<f64>,
        actions: &[DVector<f64>],
        bonus: f64,
    ) -> Vec<f64> {
        let r = basis.ncols();
        let mut gram = DMatrix::<f64>::identity(r, r) * self.lambda;
        let mut resp = DVector::<f64>::zeros(r);
        for (x, y) in &self.window {
            let z = basis.transpose() * x;
            gram += &z * z.transpose();
            resp += z * *y;
        }
        let chol = Cholesky::new(gram).expect("ridge Gram is PD by construction");
        let estimate = chol.solve(&resp);
        actions
            .iter()
            .map(|x| {
                let z = basis.transpose() * x;
                let widths = chol.solve(&z);
                z.dot(&estimate) + self.beta * z.dot(&widths).sqrt() + bonus * x.norm()
            })
            .collect()
    }

    /// Index of the maximizing action; ties resolve to the lowest index.
    pub fn select(&self, basis: &DMatrix<f64>, actions: &[DVector<f64>], bonus: f64) -> usize {
        argmax(&self.indices(basis, actions, bonus))
    }
}

/// First index of the maximum value (lowest index wins ties).
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// The probe-scheduled policy for known segment boundaries. At each boundary
/// it drops the tracker and the exploit window, recomputes the probe schedule
/// for the new segment, and (in plug-in mode) finalizes the noise-variance
/// estimate from the first segment's probes.
pub struct SpscPolicy {
    d: usize,
    cfg: SpscConfig,
    center: f64,
    plug_in_records: Option<Vec<(DVector<f64>, f64)>>,
    tracker: SubspaceTracker,
    ridge: ProjectedRidge,
    boundaries: Vec<usize>,
    horizon: usize,
    next_boundary: usize,
    offsets: HashSet<usize>,
    seg_start: usize,
    probe_count: usize,
}

impl SpscPolicy {
    /// `boundaries` are the segment start rounds the policy believes in
    /// (first must be 0); `beta_segments` is the segment count entering the
    /// confidence radius (the environment's true count, even when the
    /// believed boundaries are deliberately wrong).
    pub fn new(
        d: usize,
        cfg: &SpscConfig,
        boundaries: &[usize],
        horizon: usize,
        beta_segments: usize,
    ) -> Result<Self> {
        cfg.validate(d)?;
        if boundaries.first() != Some(&0) {
            return Err(Error::InvalidConfig(
                "segment boundaries must start at round 0".into(),
            ));
        }
        if boundaries.windows(2).any(|w| w[1] <= w[0]) || *boundaries.last().unwrap() >= horizon {
            return Err(Error::InvalidConfig(
                "segment boundaries must increase strictly within the horizon".into(),
            ));
        }
        let beta = confidence_radius(
            cfg.r,
            cfg.w as f64,
            cfg.lambda,
            cfg.sigma_eps,
            cfg.delta,
            beta_segments,
            1.0,
            cfg.s_w,
        );
        let center_base = if cfg.plug_in_variance {
            0.0
        } else {
            cfg.sigma_eps * cfg.sigma_eps
        };
        Ok(SpscPolicy {
            d,
            center: center_base + cfg.delta_sigma,
            plug_in_records: cfg.plug_in_variance.then(Vec::new),
            tracker: SubspaceTracker::new(d, cfg.r)?,
            ridge: ProjectedRidge::new(cfg.w, cfg.lambda, beta),
            boundaries: boundaries.to_vec(),
            horizon,
            next_boundary: 0,
            offsets: HashSet::new(),
            seg_start: 0,
            probe_count: 0,
            cfg: cfg.clone(),
        })
    }

    fn start_segment(&mut self, t: usize) -> Result<()> {
        if t > 0 {
            if let Some(records) = self.plug_in_records.take() {
                let est = crate::ident::estimate_noise_variance(&records, self.cfg.r)?;
                self.center = est + self.cfg.delta_sigma;
            }
            self.tracker.reset();
            self.ridge.clear();
        }
        let seg_end = self
            .boundaries
            .get(self.next_boundary + 1)
            .copied()
            .unwrap_or(self.horizon);
        self.offsets = probe_offsets(seg_end - t, self.cfg.c0, self.cfg.probe_period)?
            .into_iter()
            .collect();
        self.seg_start = t;
        self.next_boundary += 1;
        Ok(())
    }

    /// Probe or play for round `t`. Must be called for every round in order.
    pub fn decide(&mut self, t: usize, actions: &[DVector<f64>]) -> Result<Decision> {
        if self.next_boundary < self.boundaries.len() && t == self.boundaries[self.next_boundary] {
            self.start_segment(t)?;
        }
        if self.offsets.contains(&(t - self.seg_start)) {
            return Ok(Decision::Probe);
        }
        let bonus = subspace_bonus(
            self.cfg.gamma_mode,
            self.cfg.gamma_scale,
            self.tracker.count(),
            self.d,
            self.cfg.delta,
        );
        let basis = self.tracker.basis_or_canonical();
        Ok(Decision::Play(self.ridge.select(&basis, actions, bonus)))
    }

    /// Feeds back a probe observation.
    pub fn record_probe(&mut self, u: &DVector<f64>, y: f64) -> Result<()> {
        let g = moment_sample(y, u, self.center);
        self.tracker.push(&g)?;
        self.probe_count += 1;
        if let Some(records) = self.plug_in_records.as_mut() {
            records.push((u.clone(), y));
        }
        Ok(())
    }

    /// Feeds back an exploit observation.
    pub fn record_play(&mut self, x: &DVector<f64>, y: f64) {
        self.ridge.record(x.clone(), y);
    }

    /// Current subspace estimate (canonical stand-in before the first probe).
    pub fn basis(&self) -> DMatrix<f64> {
        self.tracker.basis_or_canonical()
    }

    pub fn probe_count(&self) -> usize {
        self.probe_count
    }

    pub fn window_len(&self) -> usize {
        self.ridge.window_len()
    }

    /// Centering currently subtracted from `y^2` (includes any injected offset).
    pub fn centering(&self) -> f64 {
        self.center
    }

    pub fn beta(&self) -> f64 {
        self.ridge.beta()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Phase {
    Recovery,
    Normal,
}

/// The boundary-free variant. Starts in recovery (consecutive probes); after
/// `m_relearn` recovery probes it adopts the rebuilt basis and switches to
/// normal operation: Bernoulli(`mu`) probes that keep refreshing the basis
/// from the cumulative tracker, with a two-block operator-norm change
/// statistic over the last `2n` probe samples. A firing (statistic above the
/// threshold while armed) restarts recovery and drops all probe-side state.
pub struct AdaptivePolicy {
    d: usize,
    cfg: SpscConfig,
    det: DetectorConfig,
    center: f64,
    tracker: SubspaceTracker,
    ridge: ProjectedRidge,
    samples: VecDeque<DMatrix<f64>>,
    phase: Phase,
    rec_count: usize,
    reset_round: usize,
    probe_count: usize,
    recoveries: Vec<usize>,
    rng: ChaCha20Rng,
    threshold: Option<f64>,
    last_stat: Option<f64>,
    max_armed_stat: f64,
}

impl AdaptivePolicy {
    /// A `None` detector threshold disarms firing (used while calibrating the
    /// threshold on stationary streams); the statistic is still computed and
    /// its per-run armed maximum tracked.
    pub fn new(
        d: usize,
        cfg: &SpscConfig,
        det: &DetectorConfig,
        beta_segments: usize,
        policy_seed: u64,
    ) -> Result<Self> {
        cfg.validate(d)?;
        det.validate()?;
        let beta = confidence_radius(
            cfg.r,
            cfg.w as f64,
            cfg.lambda,
            cfg.sigma_eps,
            cfg.delta,
            beta_segments,
            1.0,
            cfg.s_w,
        );
        Ok(AdaptivePolicy {
            d,
            center: cfg.sigma_eps * cfg.sigma_eps + cfg.delta_sigma,
            tracker: SubspaceTracker::new(d, cfg.r)?,
            ridge: ProjectedRidge::new(cfg.w, cfg.lambda, beta),
            samples: VecDeque::with_capacity(2 * det.n_det),
            phase: Phase::Recovery,
            rec_count: 0,
            reset_round: 0,
            probe_count: 0,
            recoveries: Vec::new(),
            rng: ChaCha20Rng::seed_from_u64(policy_seed),
            threshold: det.threshold_b,
            last_stat: None,
            max_armed_stat: 0.0,
            cfg: cfg.clone(),
            det: det.clone(),
        })
    }

    /// Probe or play for round `t`.
    pub fn decide(&mut self, _t: usize, actions: &[DVector<f64>]) -> Decision {
        if self.phase == Phase::Recovery || self.rng.random::<f64>() < self.det.mu {
            return Decision::Probe;
        }
        let bonus = subspace_bonus(
            self.cfg.gamma_mode,
            self.cfg.gamma_scale,
            self.tracker.count(),
            self.d,
            self.cfg.delta,
        );
        let basis = self.tracker.basis_or_canonical();
        Decision::Play(self.ridge.select(&basis, actions, bonus))
    }

    /// Feeds back a probe observation; drives the phase machine and detector.
    pub fn record_probe(&mut self, t: usize, u: &DVector<f64>, y: f64) -> Result<()> {
        let g = moment_sample(y, u, self.center);
        self.tracker.push(&g)?;
        self.probe_count += 1;
        if self.samples.len() == 2 * self.det.n_det {
            self.samples.pop_front();
        }
        self.samples.push_back(g);

        match self.phase {
            Phase::Recovery => {
                self.rec_count += 1;
                if self.rec_count >= self.det.m_relearn {
                    // The tracker's basis already reflects the recovery block;
                    // adopt it by clearing the stale exploit window.
                    self.ridge.clear();
                    self.phase = Phase::Normal;
                }
            }
            Phase::Normal => {
                let armed = self.samples.len() == 2 * self.det.n_det
                    && t.saturating_sub(self.reset_round) >= self.det.tau_burn;
                if armed {
                    let n = self.det.n_det;
                    let recent = mean_of(self.samples.iter().skip(n))?;
                    let past = mean_of(self.samples.iter().take(n))?;
                    let stat = linalg::op_norm_sym(&(recent - past));
                    self.last_stat = Some(stat);
                    self.max_armed_stat = self.max_armed_stat.max(stat);
                    if let Some(b) = self.threshold {
                        if stat > b {
                            self.recoveries.push(t);
                            self.full_reset(t);
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Feeds back an exploit observation.
    pub fn record_play(&mut self, x: &DVector<f64>, y: f64) {
        self.ridge.record(x.clone(), y);
    }

    fn full_reset(&mut self, t: usize) {
        self.phase = Phase::Recovery;
        self.rec_count = 0;
        self.tracker.reset();
        self.samples.clear();
        self.ridge.clear();
        self.reset_round = t;
    }

    pub fn basis(&self) -> DMatrix<f64> {
        self.tracker.basis_or_canonical()
    }

    /// Rounds at which the detector fired (recovery restarts).
    pub fn recoveries(&self) -> &[usize] {
        &self.recoveries
    }

    /// Most recent armed detector statistic.
    pub fn last_stat(&self) -> Option<f64> {
        self.last_stat
    }

    /// Largest armed statistic seen this run (calibration readout).
    pub fn max_armed_stat(&self) -> f64 {
        self.max_armed_stat
    }

    pub fn probe_count(&self) -> usize {
        self.probe_count
    }

    pub fn window_len(&self) -> usize {
        self.ridge.window_len()
    }

    pub fn in_recovery(&self) -> bool {
        self.phase == Phase::Recovery
    }
}
