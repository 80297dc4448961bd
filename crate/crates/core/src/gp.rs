//! Kernel ridge regression in dual (Gram) form.
//!
//! The posterior mean `k_Z(z)ᵀ (K + ρI)⁻¹ y` estimates next-step values, and
//! the posterior standard deviation doubles as the elliptic bonus through
//! `φᵀ(ΦᵀΦ + ρI)⁻¹φ = (k(z,z) - k_Zᵀ(K + ρI)⁻¹k_Z) / ρ`.

use crate::error::{Error, Result};
use crate::kernel::{oracle_gram, KernelOracle, KernelSpec};
use crate::linalg::{psd_factorize, psd_factorize_default, Cholesky, Matrix, DEFAULT_JITTER_SCHEDULE};
use crate::scalar::{lit, Real};

/// Variances below this are treated as round-off and clamped to zero.
pub const VARIANCE_FLOOR: f64 = -1e-10;

/// Fitted kernel ridge regressor.
#[derive(Debug, Clone)]
pub struct KrrModel<P, T> {
    anchors: Vec<P>,
    ridge: T,
    factor: Cholesky<T>,
    dual_weights: Option<Vec<T>>,
}

impl<P: Clone, T: Real> KrrModel<P, T> {
    /// Fits on `anchors`; pass `targets = None` for a variance-only model.
    pub fn fit_with<K: KernelOracle<P, T> + ?Sized>(
        kernel: &K,
        anchors: Vec<P>,
        targets: Option<&[T]>,
        ridge: T,
    ) -> Result<Self> {
        let gram = oracle_gram(kernel, &anchors);
        Self::from_gram(anchors, &gram, targets, ridge)
    }

    /// Fits from a precomputed Gram matrix over `anchors`.
    pub fn from_gram(anchors: Vec<P>, gram: &Matrix<T>, targets: Option<&[T]>, ridge: T) -> Result<Self> {
        if !(ridge > T::zero()) || !ridge.is_finite() {
            return Err(Error::invalid(format!("ridge must be positive, got {ridge}")));
        }
        if gram.rows() != anchors.len() || !gram.is_square() {
            return Err(Error::DimensionMismatch {
                expected: anchors.len(),
                got: gram.rows(),
            });
        }
        if let Some(y) = targets {
            if y.len() != anchors.len() {
                return Err(Error::DimensionMismatch {
                    expected: anchors.len(),
                    got: y.len(),
                });
            }
        }
        let schedule: Vec<T> = DEFAULT_JITTER_SCHEDULE.iter().map(|&j| lit(j)).collect();
        let factor = psd_factorize(&gram.add_diagonal(ridge), &schedule)?;
        let dual_weights = targets.map(|y| factor.solve(y));
        Ok(Self {
            anchors,
            ridge,
            factor,
            dual_weights,
        })
    }

    pub fn anchors(&self) -> &[P] {
        &self.anchors
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn dual_weights(&self) -> Option<&[T]> {
        self.dual_weights.as_deref()
    }

    pub fn factor(&self) -> &Cholesky<T> {
        &self.factor
    }

    /// `(K + ρI)⁻¹ y` for other targets on the same anchors.
    pub fn solve_weights(&self, targets: &[T]) -> Result<Vec<T>> {
        if targets.len() != self.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                got: targets.len(),
            });
        }
        Ok(self.factor.solve(targets))
    }

    pub fn cross_with<K: KernelOracle<P, T> + ?Sized>(&self, kernel: &K, z: &P) -> Vec<T> {
        self.anchors.iter().map(|a| kernel.k(z, a)).collect()
    }

    /// Posterior mean; zero for a variance-only or empty model.
    pub fn mean_with<K: KernelOracle<P, T> + ?Sized>(&self, kernel: &K, z: &P) -> T {
        match &self.dual_weights {
            Some(w) => self
                .anchors
                .iter()
                .zip(w)
                .fold(T::zero(), |acc, (a, &wi)| acc + kernel.k(z, a) * wi),
            None => T::zero(),
        }
    }

    pub fn variance_with<K: KernelOracle<P, T> + ?Sized>(&self, kernel: &K, z: &P) -> T {
        let mut v = self.cross_with(kernel, z);
        self.factor.solve_lower_in_place(&mut v);
        let reduction: T = v.iter().map(|&x| x * x).sum();
        clamp_variance(kernel.k(z, z) - reduction)
    }

    pub fn std_with<K: KernelOracle<P, T> + ?Sized>(&self, kernel: &K, z: &P) -> T {
        self.variance_with(kernel, z).sqrt()
    }

    /// Posterior standard deviations for many queries at once.
    ///
    /// `cross` is `queries × anchors`; `prior_var[q] = k(z_q, z_q)`.
    pub fn std_batch(&self, cross: &Matrix<T>, prior_var: &[T]) -> Vec<T> {
        assert_eq!(cross.cols(), self.len());
        assert_eq!(cross.rows(), prior_var.len());
        if self.is_empty() {
            return prior_var.iter().map(|&v| clamp_variance(v).sqrt()).collect();
        }
        let solved = self.factor.solve_lower_matrix(&cross.transpose());
        let mut reduction = vec![T::zero(); cross.rows()];
        for i in 0..solved.rows() {
            for (r, &x) in reduction.iter_mut().zip(solved.row(i)) {
                *r = *r + x * x;
            }
        }
        prior_var
            .iter()
            .zip(reduction)
            .map(|(&p, r)| clamp_variance(p - r).sqrt())
            .collect()
    }
}

fn clamp_variance<T: Real>(v: T) -> T {
    if v < lit(VARIANCE_FLOOR) {
        log::warn!("posterior variance {v} below round-off floor");
    }
    v.max(T::zero())
}

/// Fits KRR on coordinate points.
pub fn krr_fit<T: Real>(
    spec: &KernelSpec<T>,
    anchors: &[Vec<T>],
    targets: &[T],
    ridge: T,
) -> Result<KrrModel<Vec<T>, T>> {
    for a in anchors {
        check_dim(spec, a)?;
    }
    KrrModel::fit_with(spec, anchors.to_vec(), Some(targets), ridge)
}

pub fn krr_mean<T: Real>(model: &KrrModel<Vec<T>, T>, spec: &KernelSpec<T>, z: &[T]) -> Result<T> {
    check_dim(spec, z)?;
    Ok(model.mean_with(spec, &z.to_vec()))
}

pub fn krr_std<T: Real>(model: &KrrModel<Vec<T>, T>, spec: &KernelSpec<T>, z: &[T]) -> Result<T> {
    check_dim(spec, z)?;
    Ok(model.std_with(spec, &z.to_vec()))
}

fn check_dim<T: Real>(spec: &KernelSpec<T>, z: &[T]) -> Result<()> {
    if z.len() != spec.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.dim(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Information gain `log det(I + ρ⁻¹K)`.
pub fn information_gain<T: Real>(gram: &Matrix<T>, rho: T) -> Result<T> {
    if !(rho > T::zero()) {
        return Err(Error::invalid(format!("rho must be positive, got {rho}")));
    }
    if gram.rows() == 0 {
        return Ok(T::zero());
    }
    let m = gram.scale(T::one() / rho).add_diagonal(T::one());
    Ok(psd_factorize_default(&m)?.log_det().max(T::zero()))
}
