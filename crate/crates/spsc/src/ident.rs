//! Probe-side subspace identification.
//!
//! A probe plays `u = sqrt(d) g/||g||` and observes `y = u'theta + eps`. For
//! `u` uniform on the radius-`sqrt(d)` sphere the conditional moment of the
//! outer-product statistic is a fixed linear image of `theta theta'`:
//!
//! `E[(u'M u) uu'] = lift(M) = (d/(d+2)) (tr(M) I + 2 M)`.
//!
//! Applying the closed-form inverse [`unlift`] to each de-biased statistic
//! `(y^2 - center) uu'` therefore yields matrix samples whose mean converges
//! to `theta theta'` (plus a known isotropic shift when the centering is
//! off), and whose top eigenvectors recover the active subspace.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Symmetry tolerance for lift/unlift inputs.
const SYM_TOL: f64 = 1e-8;

/// Forward moment map of the scaled-sphere probe design:
/// `lift(M) = (d/(d+2)) (tr(M) I + 2M)`.
pub fn lift(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::check_symmetric(m, SYM_TOL)?;
    let d = m.nrows() as f64;
    let mut out = m * (2.0 * d / (d + 2.0));
    let shift = m.trace() * d / (d + 2.0);
    for i in 0..m.nrows() {
        out[(i, i)] += shift;
    }
    Ok(out)
}

/// Closed-form inverse of [`lift`]:
/// `unlift(N) = ((d+2)/(2d)) N - (tr(N)/(2d)) I`.
pub fn unlift(n: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    linalg::check_symmetric(n, SYM_TOL)?;
    let d = n.nrows() as f64;
    let mut out = n * ((d + 2.0) / (2.0 * d));
    let shift = n.trace() / (2.0 * d);
    for i in 0..n.nrows() {
        out[(i, i)] -= shift;
    }
    Ok(out)
}

/// One matrix-valued sample from a probe observation: the de-biased,
/// un-lifted outer-product statistic `unlift((y^2 - center) uu')`.
///
/// With `center = sigma_eps^2` the sample is an unbiased estimate of
/// `theta theta'`; a centering offset `delta` shifts the mean by
/// `-(delta/d) I`, which leaves the top eigenvectors untouched.
pub fn moment_sample(y: f64, u: &DVector<f64>, center: f64) -> DMatrix<f64> {
    let d = u.len() as f64;
    let s = y * y - center;
    // unlift(s uu') computed directly: ((d+2)/(2d)) s uu' - (s ||u||^2/(2d)) I.
    let mut g = u * u.transpose() * (s * (d + 2.0) / (2.0 * d));
    let shift = s * u.norm_squared() / (2.0 * d);
    for i in 0..u.len() {
        g[(i, i)] -= shift;
    }
    g
}

/// Streaming accumulator of probe moment samples. Keeps the running sum, the
/// sample count, and the top-`rank` eigenbasis of the running mean, refreshed
/// on every push (dense eigendecomposition; fine at desk-scale dimensions).
#[derive(Clone, Debug)]
pub struct SubspaceTracker {
    acc: DMatrix<f64>,
    count: usize,
    rank: usize,
    basis: Option<DMatrix<f64>>,
}

impl SubspaceTracker {
    pub fn new(d: usize, rank: usize) -> Result<Self> {
        if rank == 0 || rank > d {
            return Err(Error::InvalidConfig(format!(
                "tracker rank {rank} out of range for dimension {d}"
            )));
        }
        Ok(SubspaceTracker {
            acc: DMatrix::zeros(d, d),
            count: 0,
            rank,
            basis: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.acc.nrows()
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Adds one moment sample and refreshes the eigenbasis of the mean.
    pub fn push(&mut self, g: &DMatrix<f64>) -> Result<()> {
        if g.nrows() != self.acc.nrows() || g.ncols() != self.acc.ncols() {
            return Err(Error::DimensionMismatch(format!(
                "sample is {}x{}, tracker is {}x{}",
                g.nrows(),
                g.ncols(),
                self.acc.nrows(),
                self.acc.ncols()
            )));
        }
        self.acc += g;
        self.count += 1;
        self.refresh_basis();
        Ok(())
    }

    /// Running mean of the pushed samples, `None` before the first push.
    pub fn mean(&self) -> Option<DMatrix<f64>> {
        (self.count > 0).then(|| &self.acc / self.count as f64)
    }

    /// Top-`rank` eigenbasis of the running mean, `None` before the first push.
    pub fn basis(&self) -> Option<&DMatrix<f64>> {
        self.basis.as_ref()
    }

    /// The tracked basis, or the first `rank` coordinate directions before
    /// any sample has arrived (a deterministic cold-start stand-in).
    pub fn basis_or_canonical(&self) -> DMatrix<f64> {
        match &self.basis {
            Some(b) => b.clone(),
            None => DMatrix::identity(self.dim(), self.rank),
        }
    }

    /// Changes the tracked rank and refreshes the basis from existing data.
    pub fn set_rank(&mut self, rank: usize) -> Result<()> {
        if rank == 0 || rank > self.dim() {
            return Err(Error::InvalidConfig(format!(
                "tracker rank {rank} out of range for dimension {}",
                self.dim()
            )));
        }
        self.rank = rank;
        self.refresh_basis();
        Ok(())
    }

    /// Drops all accumulated samples (rank is kept).
    pub fn reset(&mut self) {
        self.acc.fill(0.0);
        self.count = 0;
        self.basis = None;
    }

    fn refresh_basis(&mut self) {
        if self.count == 0 {
            self.basis = None;
            return;
        }
        let mean = &self.acc / self.count as f64;
        self.basis = Some(linalg::top_r_eigenvectors(&mean, self.rank));
    }
}

/// Split-sample plug-in estimate of the reward-noise variance from probe
/// records `(u, y)`.
///
/// The first half builds a moment-mean with zero centering and truncates it
/// to `rank` (`M_r`); the second half averages `y^2 - u' M_r u`. Without the
/// truncation the two halves cancel exactly in expectation — the isotropic
/// noise floor `sigma^2/d I` inside the un-truncated mean absorbs precisely
/// the `sigma^2` being estimated — so the truncation is what lets the
/// estimator see the noise (expected value `sigma^2 (1 - rank/d)`, slightly
/// low, shrinking as the ambient dimension grows). Clamped below at zero.
pub fn estimate_noise_variance(records: &[(DVector<f64>, f64)], rank: usize) -> Result<f64> {
    if records.len() < 4 {
        return Err(Error::TooFewProbes(records.len()));
    }
    let d = records[0].0.len();
    let rank = rank.min(d);
    let half = records.len() / 2;

    let mut mean = DMatrix::<f64>::zeros(d, d);
    for (u, y) in &records[..half] {
        mean += moment_sample(*y, u, 0.0);
    }
    mean /= half as f64;

    let (vals, vecs) = linalg::sym_eigen_desc(&mean);
    let mut truncated = DMatrix::<f64>::zeros(d, d);
    for i in 0..rank {
        let v = vecs.column(i);
        truncated += v * v.transpose() * vals[i];
    }

    let mut acc = 0.0;
    for (u, y) in &records[half..] {
        acc += y * y - (u.transpose() * &truncated * u)[(0, 0)];
    }
    let est = acc / (records.len() - half) as f64;
    Ok(est.max(0.0))
}

/// Envelope on the magnitude of the lifted probe regressor, used to scale the
/// rank threshold: `d ((sqrt(d) S_w + L_eps)^2 + sigma_sq) + S_w^2` with the
/// horizon-wide noise excursion `L_eps = sigma_eps sqrt(2 ln(2T/delta))`.
pub fn lifted_regressor_bound(
    d: usize,
    s_w: f64,
    sigma_eps: f64,
    sigma_sq_hat: f64,
    horizon: usize,
    delta: f64,
) -> f64 {
    let d_f = d as f64;
    let l_eps = sigma_eps * (2.0 * (2.0 * horizon as f64 / delta).ln()).sqrt();
    d_f * ((d_f.sqrt() * s_w + l_eps).powi(2) + sigma_sq_hat) + s_w * s_w
}

/// Estimates the active rank by counting eigenvalues of the moment mean above
/// twice the concentration radius `tau = 2 R_X sqrt(ln(2d/delta)/count)`,
/// floored at one so the policy never collapses to a zero-dimensional model.
pub fn threshold_rank(m_hat: &DMatrix<f64>, count: usize, delta: f64, r_x: f64) -> usize {
    let d = m_hat.nrows();
    let m = count.max(1) as f64;
    let tau = 2.0 * r_x * ((2.0 * d as f64 / delta).ln() / m).sqrt();
    let above = m_hat
        .symmetric_eigenvalues()
        .iter()
        .filter(|&&ev| ev > 2.0 * tau)
        .count();
    above.max(1)
}
