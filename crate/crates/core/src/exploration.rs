//! Posterior-GP exploration noise.
//!
//! Each episode draws `ε ~ GP(0, β_r² ⟨φ(z₁), φ(z₂)⟩_{W⁻¹})` with
//! `W = Σ φ̄_i φ̄_iᵀ + τI`. On a finite grid this covariance is
//! `(β_r²/τ)(K_grid - C (K̄ + τI)⁻¹ Cᵀ)` where `C` holds the trajectory-difference
//! cross terms. Noise only ever exists on the grid.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::kernel::{oracle_gram, KernelOracle};
use crate::linalg::{
    min_eigenvalue_at_least, psd_factorize_default, Cholesky, Matrix, SymmetricEigen, DEFAULT_JITTER_SCHEDULE,
};
use crate::preference::{traj_diff_cross_matrix, traj_diff_gram, TrajectoryPair};
use crate::scalar::{from_usize, lit, Real};

/// Tolerance for the PSD-order domination check `Cov ⪯ (β_r²/τ) K_grid`.
pub const DOMINATION_TOL: f64 = 1e-8;

/// One realization of the exploration noise on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseField<P, T> {
    pub grid: Vec<P>,
    pub values: Vec<T>,
    pub beta_r_used: T,
    pub tau_used: T,
}

/// Posterior noise covariance on `grid` from coordinate-level inputs.
pub fn noise_covariance<P, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    pairs: &[TrajectoryPair<P>],
    grid: &[P],
    tau: T,
    beta_r: T,
) -> Result<Matrix<T>> {
    let k_grid = oracle_gram(kernel, grid);
    let cross = traj_diff_cross_matrix(kernel, pairs, grid);
    let kbar = traj_diff_gram(kernel, pairs);
    posterior_noise_covariance(&k_grid, &cross, &kbar, tau, beta_r)
}

/// `(β_r²/τ)(K_grid - C (K̄ + τI)⁻¹ Cᵀ)` from precomputed blocks.
///
/// `cross` is `grid × pairs`.
pub fn posterior_noise_covariance<T: Real>(
    k_grid: &Matrix<T>,
    cross: &Matrix<T>,
    kbar: &Matrix<T>,
    tau: T,
    beta_r: T,
) -> Result<Matrix<T>> {
    if !(tau > T::zero()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if !(beta_r >= T::zero()) {
        return Err(Error::invalid(format!("beta_r must be nonnegative, got {beta_r}")));
    }
    if cross.rows() != k_grid.rows() || cross.cols() != kbar.rows() {
        return Err(Error::DimensionMismatch {
            expected: k_grid.rows(),
            got: cross.rows(),
        });
    }
    let scale = beta_r * beta_r / tau;
    let mut cov = if kbar.rows() == 0 {
        k_grid.clone()
    } else {
        let factor = psd_factorize_default(&kbar.add_diagonal(tau))?;
        let w = factor.solve_lower_matrix(&cross.transpose());
        k_grid.sub(&w.gram_of_columns())
    };
    cov.scale_in_place(scale);
    Ok(cov)
}

/// Checks `min eig((β_r²/τ) K_grid - cov) ≥ -1e-8`.
pub fn noise_is_dominated<T: Real>(k_grid: &Matrix<T>, cov: &Matrix<T>, tau: T, beta_r: T) -> bool {
    let diff = k_grid.scale(beta_r * beta_r / tau).sub(cov);
    min_eigenvalue_at_least(&diff, lit(DOMINATION_TOL))
}

/// Square-root factor of a noise covariance, reusable for several draws.
#[derive(Debug, Clone)]
pub struct NoiseSampler<T> {
    root: Option<Matrix<T>>,
    dim: usize,
    /// Total magnitude of negative eigenvalues removed by the eigen fallback.
    pub clamped: T,
}

impl<T: Real> NoiseSampler<T> {
    /// Factors `cov` by jittered Cholesky (jitters relative to the largest
    /// diagonal entry), falling back to an eigen-decomposition with negative
    /// eigenvalues clamped to zero.
    pub fn new(cov: &Matrix<T>) -> Result<Self> {
        if !cov.is_square() {
            return Err(Error::invalid("noise covariance must be square"));
        }
        let dim = cov.rows();
        let scale = cov.diagonal().into_iter().fold(T::zero(), |a, d| a.max(d.abs()));
        if scale == T::zero() {
            return Ok(Self {
                root: None,
                dim,
                clamped: T::zero(),
            });
        }
        for &j in DEFAULT_JITTER_SCHEDULE.iter() {
            if let Some(c) = Cholesky::new(cov, lit::<T>(j) * scale) {
                return Ok(Self {
                    root: Some(c.into_factor()),
                    dim,
                    clamped: T::zero(),
                });
            }
        }
        let eig = SymmetricEigen::new(cov);
        let clamped = eig
            .eigenvalues
            .iter()
            .filter(|&&l| l < T::zero())
            .fold(T::zero(), |a, &l| a - l);
        log::warn!("noise covariance not factorizable; clamped {clamped} of negative spectrum");
        let sqrt_vals: Vec<T> = eig.eigenvalues.iter().map(|&l| l.max(T::zero()).sqrt()).collect();
        let root = Matrix::from_fn(dim, dim, |i, j| eig.eigenvectors[(i, j)] * sqrt_vals[j]);
        Ok(Self {
            root: Some(root),
            dim,
            clamped,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `L ξ` with `ξ` i.i.d. standard normal.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let xi: Vec<T> = (0..self.dim)
            .map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal)))
            .collect();
        match &self.root {
            Some(l) => l.matvec(&xi),
            None => vec![T::zero(); self.dim],
        }
    }
}

/// Draws one noise field with covariance `cov` on `grid`.
pub fn sample_noise<P: Clone, T: Real, R: Rng + ?Sized>(
    cov: &Matrix<T>,
    grid: &[P],
    beta_r: T,
    tau: T,
    rng: &mut R,
) -> Result<NoiseField<P, T>> {
    if cov.rows() != grid.len() {
        return Err(Error::DimensionMismatch {
            expected: grid.len(),
            got: cov.rows(),
        });
    }
    let sampler = NoiseSampler::new(cov)?;
    Ok(NoiseField {
        grid: grid.to_vec(),
        values: sampler.draw(rng),
        beta_r_used: beta_r,
        tau_used: tau,
    })
}

/// Per-unit-horizon clip radius
/// `3 + (3β_r/√τ) √(log(2/δ) + (2d / min(ν, 1)) log K)`.
///
/// Stage `h` clips to `±beta_clip · (H - h + 1)`. Pass `nu = ∞` (or any value
/// ≥ 1) for the squared-exponential kernel.
pub fn beta_clip<T: Real>(delta: T, beta_r: T, tau: T, dim: usize, nu: T, episodes: T) -> Result<T> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::invalid(format!("delta {delta} outside (0, 1)")));
    }
    if !(tau > T::zero()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if !(episodes >= T::one()) {
        return Err(Error::invalid(format!("episode count {episodes} below 1")));
    }
    let smooth = nu.min(T::one());
    let two = lit::<T>(2.0);
    let three = lit::<T>(3.0);
    let radicand = (two / delta).ln() + two * from_usize::<T>(dim) / smooth * episodes.ln();
    Ok(three + three * beta_r / tau.sqrt() * radicand.sqrt())
}
