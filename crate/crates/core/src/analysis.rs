//! Regret bookkeeping, log-log slope fits and information-gain checks.

use crate::error::{Error, Result};
use crate::gp::information_gain;
use crate::kernel::{EigenDecay, KernelOracle};
use crate::linalg::{log_det_spd, Matrix};
use crate::preference::{traj_diff_gram, TrajectoryPair};
use crate::scalar::{from_usize, lit, Real};

/// Per-episode diagnostics of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord<T> {
    pub episode: usize,
    pub instant_regret: T,
    pub cum_regret: T,
    pub avg_regret: T,
    pub beta_r: T,
    /// `log det(I + K̄/τ)` over the pairs seen before the episode.
    pub gamma_traj: T,
    /// `log det(I + K/λ)` over the step-1 transition anchors.
    pub gamma_step1: T,
    pub noise_var_max: T,
    pub beta_clip: T,
    pub klrr_iters: usize,
    pub klrr_converged: bool,
    pub klrr_grad_norm: T,
    pub noise_dominated: Option<bool>,
    pub noise_clamped: T,
    pub gain_margin: Option<T>,
    pub initial_state: usize,
    pub label: bool,
    pub true_prob: T,
}

/// Episode records in order, with cumulative and average regret maintained.
#[derive(Debug, Clone, PartialEq)]
pub struct RegretTrace<T> {
    pub episodes: Vec<EpisodeRecord<T>>,
}

impl<T> Default for RegretTrace<T> {
    fn default() -> Self {
        Self { episodes: Vec::new() }
    }
}

impl<T: Real> RegretTrace<T> {
    /// Appends a record, overwriting its `episode`, `cum_regret` and
    /// `avg_regret` from the running total.
    pub fn push(&mut self, mut rec: EpisodeRecord<T>) {
        let prev = self.episodes.last().map_or(T::zero(), |r| r.cum_regret);
        let k = self.episodes.len() + 1;
        rec.episode = k;
        rec.cum_regret = prev + rec.instant_regret;
        rec.avg_regret = rec.cum_regret / from_usize(k);
        self.episodes.push(rec);
    }

    pub fn len(&self) -> usize {
        self.episodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.episodes.is_empty()
    }

    /// `R(k)` for `k = 1..=len`.
    pub fn cumulative(&self) -> Vec<T> {
        self.episodes.iter().map(|r| r.cum_regret).collect()
    }

    pub fn average(&self) -> Vec<T> {
        self.episodes.iter().map(|r| r.avg_regret).collect()
    }
}

/// Exponent `1 - (β_p - 1)² / (2β_p(β_p + 1))` of the regret bound.
pub fn theoretical_slope<T: Real>(beta_p: T) -> Result<T> {
    if !(beta_p > T::one()) {
        return Err(Error::invalid(format!("eigen-decay exponent {beta_p} must exceed 1")));
    }
    let one = T::one();
    let b1 = beta_p - one;
    Ok(one - b1 * b1 / (lit::<T>(2.0) * beta_p * (beta_p + one)))
}

/// Like [`theoretical_slope`], with exponential decay mapped to its limit 1/2.
pub fn theoretical_slope_for<T: Real>(decay: EigenDecay<T>) -> Result<T> {
    match decay {
        EigenDecay::Polynomial(b) => theoretical_slope(b),
        EigenDecay::SuperPolynomial => Ok(lit(0.5)),
    }
}

/// Default fit window `[max(1, K/4), K]`.
pub fn tail_window(episodes: usize) -> (usize, usize) {
    ((episodes / 4).max(1), episodes)
}

/// Least-squares line through `(log k, log R(k))` for `k ∈ [k_min, k_max]`;
/// returns `(slope, intercept)`.
pub fn fit_loglog_slope<T: Real>(trace: &RegretTrace<T>, k_min: usize, k_max: usize) -> Result<(T, T)> {
    fit_power_law(&trace.cumulative(), k_min, k_max)
}

/// [`fit_loglog_slope`] on a bare series with `values[k - 1] = R(k)`.
pub fn fit_power_law<T: Real>(values: &[T], k_min: usize, k_max: usize) -> Result<(T, T)> {
    if !(k_min >= 1 && k_max > k_min) {
        return Err(Error::invalid(format!(
            "fit window [{k_min}, {k_max}] needs 1 ≤ k_min < k_max"
        )));
    }
    if k_max > values.len() {
        return Err(Error::DimensionMismatch {
            expected: k_max,
            got: values.len(),
        });
    }
    let mut xs = Vec::with_capacity(k_max - k_min + 1);
    let mut ys = Vec::with_capacity(k_max - k_min + 1);
    for k in k_min..=k_max {
        let r = values[k - 1];
        if !(r > T::zero()) {
            return Err(Error::invalid(format!(
                "cumulative regret {r} at k = {k} is not positive"
            )));
        }
        xs.push(from_usize::<T>(k).ln());
        ys.push(r.ln());
    }
    let n = from_usize::<T>(xs.len());
    let mx = xs.iter().copied().sum::<T>() / n;
    let my = ys.iter().copied().sum::<T>() / n;
    let sxy = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum::<T>();
    let sxx = xs.iter().map(|&x| (x - mx) * (x - mx)).sum::<T>();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Both sides of `log det(I + K̄_t/ρ) ≤ log det(I + (2H/ρ) K_pooled)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GainDomination<T> {
    pub lhs: T,
    pub rhs: T,
    /// `rhs - lhs`.
    pub margin: T,
    /// `margin ≥ -1e-8`.
    pub holds: bool,
}

pub const GAIN_TOL: f64 = 1e-8;

/// Checks the trajectory-difference information-gain bound for `pairs`.
pub fn check_gain_domination<P: PartialEq, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    pairs: &[TrajectoryPair<P>],
    rho: T,
) -> Result<GainDomination<T>> {
    let horizon = pairs.first().map_or(0, |p| p.horizon());
    let kbar = traj_diff_gram(kernel, pairs);
    check_gain_domination_gram(kernel, &kbar, pairs.iter(), horizon, rho)
}

/// [`check_gain_domination`] with a precomputed `K̄`.
///
/// Repeated constituent points are merged: with distinct points `u` of
/// multiplicities `c`, `det(I + sK_pooled) = det(I + s D^{1/2} K_u D^{1/2})`,
/// `D = diag(c)`.
pub fn check_gain_domination_gram<'a, P: PartialEq + 'a, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    kbar: &Matrix<T>,
    pairs: impl IntoIterator<Item = &'a TrajectoryPair<P>>,
    horizon: usize,
    rho: T,
) -> Result<GainDomination<T>> {
    if !(rho > T::zero()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    let mut unique: Vec<&P> = Vec::new();
    let mut counts: Vec<T> = Vec::new();
    let mut n_pairs = 0;
    for pair in pairs {
        n_pairs += 1;
        if pair.horizon() != horizon {
            return Err(Error::DimensionMismatch {
                expected: horizon,
                got: pair.horizon(),
            });
        }
        for p in pair.left().iter().chain(pair.right()) {
            match unique.iter().position(|&u| u == p) {
                Some(i) => counts[i] = counts[i] + T::one(),
                None => {
                    unique.push(p);
                    counts.push(T::one());
                }
            }
        }
    }
    if kbar.rows() != n_pairs {
        return Err(Error::DimensionMismatch {
            expected: n_pairs,
            got: kbar.rows(),
        });
    }
    let lhs = information_gain(kbar, rho)?;
    let rhs = if unique.is_empty() {
        T::zero()
    } else {
        let s = from_usize::<T>(2 * horizon) / rho;
        let sq: Vec<T> = counts.iter().map(|c| c.sqrt()).collect();
        let m = Matrix::symmetric_from_fn(unique.len(), |i, j| {
            let v = s * sq[i] * sq[j] * kernel.k(unique[i], unique[j]);
            if i == j {
                v + T::one()
            } else {
                v
            }
        });
        log_det_spd(&m)?
    };
    let margin = rhs - lhs;
    Ok(GainDomination {
        lhs,
        rhs,
        margin,
        holds: margin >= lit(-GAIN_TOL),
    })
}
