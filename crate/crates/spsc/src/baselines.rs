//! Baseline policies: the ambient ridge-UCB family (plain, sliding-window,
//! discounted, restarting), an oracle variant that regresses inside the true
//! current subspace, and a PCA family that estimates the subspace from
//! reward-weighted action outer products instead of probes.
//!
//! None of the ambient variants takes a rank parameter — their trajectories
//! cannot depend on the latent rank by construction.

use std::collections::VecDeque;

use nalgebra::{Cholesky, DMatrix, DVector};

use crate::config::SpscConfig;
use crate::error::{Error, Result};
use crate::linalg;
use crate::policy::{argmax, confidence_radius, ProjectedRidge};

/// How the ambient Gram matrix forgets old rounds.
#[derive(Clone, Debug, PartialEq)]
enum Forgetting {
    None,
    Window(usize),
    Discount(f64),
    Restart(usize),
}

/// Ridge UCB over the raw d-dimensional actions. The confidence radius is
/// recomputed every round from the running update count, so windowed and
/// restarting variants automatically tighten after forgetting.
#[derive(Clone, Debug)]
pub struct AmbientRidge {
    d: usize,
    lambda: f64,
    sigma_eps: f64,
    delta: f64,
    segments: usize,
    s_w: f64,
    forgetting: Forgetting,
    buf: VecDeque<(DVector<f64>, f64)>,
    gram: DMatrix<f64>,
    resp: DVector<f64>,
    updates: usize,
}

impl AmbientRidge {
    fn with_forgetting(
        d: usize,
        lambda: f64,
        sigma_eps: f64,
        delta: f64,
        segments: usize,
        s_w: f64,
        forgetting: Forgetting,
    ) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::InvalidConfig("need lambda > 0".into()));
        }
        match forgetting {
            Forgetting::Window(0) | Forgetting::Restart(0) => {
                return Err(Error::InvalidConfig(
                    "window / restart interval must be positive".into(),
                ))
            }
            Forgetting::Discount(z) if !(0.0 < z && z <= 1.0) => {
                return Err(Error::InvalidConfig(format!(
                    "need 0 < discount <= 1, got {z}"
                )))
            }
            _ => {}
        }
        Ok(AmbientRidge {
            d,
            lambda,
            sigma_eps,
            delta,
            segments,
            s_w,
            forgetting,
            buf: VecDeque::new(),
            gram: DMatrix::identity(d, d) * lambda,
            resp: DVector::zeros(d),
            updates: 0,
        })
    }

    pub fn plain(
        d: usize,
        lambda: f64,
        sigma_eps: f64,
        delta: f64,
        segments: usize,
        s_w: f64,
    ) -> Result<Self> {
        Self::with_forgetting(d, lambda, sigma_eps, delta, segments, s_w, Forgetting::None)
    }

    pub fn sliding_window(
        d: usize,
        lambda: f64,
        sigma_eps: f64,
        delta: f64,
        segments: usize,
        s_w: f64,
        window: usize,
    ) -> Result<Self> {
        Self::with_forgetting(
            d,
            lambda,
            sigma_eps,
            delta,
            segments,
            s_w,
            Forgetting::Window(window),
        )
    }

    pub fn discounted(
        d: usize,
        lambda: f64,
        sigma_eps: f64,
        delta: f64,
        segments: usize,
        s_w: f64,
        discount: f64,
    ) -> Result<Self> {
        Self::with_forgetting(
            d,
            lambda,
            sigma_eps,
            delta,
            segments,
            s_w,
            Forgetting::Discount(discount),
        )
    }

    pub fn restarting(
        d: usize,
        lambda: f64,
        sigma_eps: f64,
        delta: f64,
        segments: usize,
        s_w: f64,
        every: usize,
    ) -> Result<Self> {
        Self::with_forgetting(
            d,
            lambda,
            sigma_eps,
            delta,
            segments,
            s_w,
            Forgetting::Restart(every),
        )
    }

    fn reset_state(&mut self) {
        self.gram = DMatrix::identity(self.d, self.d) * self.lambda;
        self.resp = DVector::zeros(self.d);
        self.buf.clear();
        self.updates = 0;
    }

    /// UCB selection for round `t` (the round index drives scheduled
    /// restarts). Ties resolve to the lowest action index.
    pub fn select(&mut self, t: usize, actions: &[DVector<f64>]) -> usize {
        if let Forgetting::Restart(every) = self.forgetting {
            if t > 0 && t % every == 0 {
                self.reset_state();
            }
        }
        let beta = confidence_radius(
            self.d,
            self.updates.max(1) as f64,
            self.lambda,
            self.sigma_eps,
            self.delta,
            self.segments,
            1.0,
            self.s_w,
        );
        let chol = Cholesky::new(self.gram.clone()).expect("ambient Gram is PD");
        let estimate = chol.solve(&self.resp);
        let indices: Vec<f64> = actions
            .iter()
            .map(|x| x.dot(&estimate) + beta * x.dot(&chol.solve(x)).sqrt())
            .collect();
        argmax(&indices)
    }

    pub fn record(&mut self, x: &DVector<f64>, y: f64) {
        match self.forgetting {
            Forgetting::Window(w) => {
                if self.buf.len() == w {
                    self.buf.pop_front();
                }
                self.buf.push_back((x.clone(), y));
                let mut gram = DMatrix::identity(self.d, self.d) * self.lambda;
                let mut resp = DVector::zeros(self.d);
                for (xx, yy) in &self.buf {
                    gram += xx * xx.transpose();
                    resp += xx * *yy;
                }
                self.gram = gram;
                self.resp = resp;
            }
            Forgetting::Discount(z) => {
                self.gram = &self.gram * z
                    + x * x.transpose()
                    + DMatrix::identity(self.d, self.d) * ((1.0 - z) * self.lambda);
                self.resp = &self.resp * z + x * y;
            }
            Forgetting::None | Forgetting::Restart(_) => {
                self.gram += x * x.transpose();
                self.resp += x * y;
            }
        }
        self.updates += 1;
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

/// Ridge UCB in the true current subspace: the caller hands the exact basis
/// each round (and calls [`OracleRidge::reset`] at the true boundaries), so
/// the only statistical work left is the r-dimensional regression.
#[derive(Clone, Debug)]
pub struct OracleRidge {
    r: usize,
    lambda: f64,
    sigma_eps: f64,
    delta: f64,
    segments: usize,
    s_w: f64,
    gram: DMatrix<f64>,
    resp: DVector<f64>,
    updates: usize,
    chosen: Option<DVector<f64>>,
}

impl OracleRidge {
    pub fn new(
        r: usize,
        lambda: f64,
        sigma_eps: f64,
        delta: f64,
        segments: usize,
        s_w: f64,
    ) -> Result<Self> {
        if lambda <= 0.0 {
            return Err(Error::InvalidConfig("need lambda > 0".into()));
        }
        Ok(OracleRidge {
            r,
            lambda,
            sigma_eps,
            delta,
            segments,
            s_w,
            gram: DMatrix::identity(r, r) * lambda,
            resp: DVector::zeros(r),
            updates: 0,
            chosen: None,
        })
    }

    /// Drops all per-segment state (call at each true boundary).
    pub fn reset(&mut self) {
        self.gram = DMatrix::identity(self.r, self.r) * self.lambda;
        self.resp = DVector::zeros(self.r);
        self.updates = 0;
        self.chosen = None;
    }

    /// Picks an action through the true `basis`; remembers the projected
    /// action for the following [`OracleRidge::record`].
    pub fn select(&mut self, basis: &DMatrix<f64>, actions: &[DVector<f64>]) -> usize {
        let beta = confidence_radius(
            self.r,
            self.updates.max(1) as f64,
            self.lambda,
            self.sigma_eps,
            self.delta,
            self.segments,
            1.0,
            self.s_w,
        );
        let chol = Cholesky::new(self.gram.clone()).expect("oracle Gram is PD");
        let estimate = chol.solve(&self.resp);
        let projected: Vec<DVector<f64>> = actions.iter().map(|x| basis.transpose() * x).collect();
        let indices: Vec<f64> = projected
            .iter()
            .map(|z| z.dot(&estimate) + beta * z.dot(&chol.solve(z)).sqrt())
            .collect();
        let pick = argmax(&indices);
        self.chosen = Some(projected[pick].clone());
        pick
    }

    /// Feeds back the reward of the action chosen by the last `select`.
    pub fn record(&mut self, y: f64) -> Result<()> {
        let z = self
            .chosen
            .take()
            .ok_or_else(|| Error::InvalidConfig("record() without a pending select()".into()))?;
        self.gram += &z * z.transpose();
        self.resp += z * y;
        self.updates += 1;
        Ok(())
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }
}

/// Weighting of the reward-scaled outer products feeding the PCA estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcaWeighting {
    /// Unit weights: accumulate `(y x)(y x)'` as-is.
    Unit,
    /// Per-sample variance normalization `1 / (||x||^2 + sigma_eps^2)`.
    VarianceNormalized,
}

/// Probe-free low-rank baseline: estimates the subspace as the top-r
/// eigenspace of accumulated reward-weighted action outer products, acting
/// as ambient ridge UCB during a warm-up and as projected ridge UCB after.
/// An optional sample window (plus external resets at known boundaries)
/// makes it piecewise-aware.
pub struct PcaLowRank {
    d: usize,
    r: usize,
    warmup: usize,
    refresh_every: usize,
    weighting: PcaWeighting,
    sample_window: Option<usize>,
    sigma_eps: f64,
    moment: DMatrix<f64>,
    samples: VecDeque<(f64, DVector<f64>)>,
    rounds: usize,
    basis: Option<DMatrix<f64>>,
    ambient: AmbientRidge,
    ridge: ProjectedRidge,
}

/// Warm-up length (rounds acted as ambient ridge UCB) for the PCA family.
pub const PCA_WARMUP: usize = 30;
/// Basis re-estimation period for the PCA family.
pub const PCA_REFRESH_EVERY: usize = 20;

impl PcaLowRank {
    /// `cfg` supplies the projected-ridge hyperparameters exactly as for the
    /// probe-based policies; `sample_window` caps the outer-product history
    /// (None = cumulative).
    pub fn new(
        d: usize,
        cfg: &SpscConfig,
        beta_segments: usize,
        weighting: PcaWeighting,
        sample_window: Option<usize>,
    ) -> Result<Self> {
        cfg.validate(d)?;
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
        Ok(PcaLowRank {
            d,
            r: cfg.r,
            warmup: PCA_WARMUP,
            refresh_every: PCA_REFRESH_EVERY,
            weighting,
            sample_window,
            sigma_eps: cfg.sigma_eps,
            moment: DMatrix::zeros(d, d),
            samples: VecDeque::new(),
            rounds: 0,
            basis: None,
            ambient: AmbientRidge::plain(
                d,
                cfg.lambda,
                cfg.sigma_eps,
                cfg.delta,
                beta_segments,
                cfg.s_w,
            )?,
            ridge: ProjectedRidge::new(cfg.w, cfg.lambda, beta),
        })
    }

    /// Forget everything and re-enter warm-up (for externally known resets).
    pub fn reset(&mut self) {
        self.moment = DMatrix::zeros(self.d, self.d);
        self.samples.clear();
        self.rounds = 0;
        self.basis = None;
        self.ambient.reset_state();
        self.ridge.clear();
    }

    pub fn select(&mut self, t: usize, actions: &[DVector<f64>]) -> usize {
        if self.rounds < self.warmup {
            return self.ambient.select(t, actions);
        }
        let basis = self
            .basis
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.d, self.r));
        self.ridge.select(&basis, actions, 0.0)
    }

    pub fn record(&mut self, x: &DVector<f64>, y: f64) {
        self.ambient.record(x, y);
        self.ridge.record(x.clone(), y);
        let weight = match self.weighting {
            PcaWeighting::Unit => 1.0,
            PcaWeighting::VarianceNormalized => {
                1.0 / (x.norm_squared() + self.sigma_eps * self.sigma_eps)
            }
        };
        let scaled = x * y;
        if let Some(cap) = self.sample_window {
            if self.samples.len() == cap {
                self.samples.pop_front();
            }
            self.samples.push_back((weight, scaled));
        } else {
            self.moment += (&scaled * scaled.transpose()) * weight;
        }
        self.rounds += 1;
        if self.rounds >= self.warmup && (self.rounds - self.warmup) % self.refresh_every == 0 {
            self.refresh_basis();
        }
    }

    fn refresh_basis(&mut self) {
        let moment = if self.sample_window.is_some() {
            let mut m = DMatrix::zeros(self.d, self.d);
            for (w, v) in &self.samples {
                m += (v * v.transpose()) * *w;
            }
            m
        } else {
            self.moment.clone()
        };
        self.basis = Some(linalg::top_r_eigenvectors(&moment, self.r));
    }

    /// Current subspace estimate (canonical stand-in during warm-up).
    pub fn basis(&self) -> DMatrix<f64> {
        self.basis
            .clone()
            .unwrap_or_else(|| DMatrix::identity(self.d, self.r))
    }

    pub fn in_warmup(&self) -> bool {
        self.rounds < self.warmup
    }
}
