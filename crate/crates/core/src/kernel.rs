//! Stationary kernels on the unit hypercube and Gram-matrix construction.
//!
//! Kernels are unit-variance (`k(z, z) = 1`) and isotropic in the Euclidean
//! distance. Matérn kernels are available in closed form for ν ∈ {1/2, 3/2, 5/2}.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::scalar::{from_usize, lit, Real};

/// Half-integer Matérn smoothness with a closed-form kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MaternSmoothness {
    Half,
    ThreeHalves,
    FiveHalves,
}

impl MaternSmoothness {
    pub fn from_nu(nu: f64) -> Result<Self> {
        match nu {
            0.5 => Ok(Self::Half),
            1.5 => Ok(Self::ThreeHalves),
            2.5 => Ok(Self::FiveHalves),
            other => Err(Error::invalid(format!(
                "Matérn smoothness {other} has no closed form; use 0.5, 1.5 or 2.5"
            ))),
        }
    }

    pub fn nu(self) -> f64 {
        match self {
            Self::Half => 0.5,
            Self::ThreeHalves => 1.5,
            Self::FiveHalves => 2.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KernelFamily {
    Matern(MaternSmoothness),
    SquaredExponential,
}

/// A unit-variance isotropic kernel on `[0, 1]^dim`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec<T> {
    family: KernelFamily,
    lengthscale: T,
    dim: usize,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(family: KernelFamily, lengthscale: T, dim: usize) -> Result<Self> {
        if !(lengthscale > T::zero()) || !lengthscale.is_finite() {
            return Err(Error::invalid(format!(
                "lengthscale must be positive, got {lengthscale}"
            )));
        }
        if dim == 0 {
            return Err(Error::invalid("kernel input dimension must be at least 1"));
        }
        Ok(Self {
            family,
            lengthscale,
            dim,
        })
    }

    pub fn matern(nu: f64, lengthscale: T, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::Matern(MaternSmoothness::from_nu(nu)?), lengthscale, dim)
    }

    pub fn squared_exponential(lengthscale: T, dim: usize) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, lengthscale, dim)
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn lengthscale(&self) -> T {
        self.lengthscale
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Smoothness ν, or `None` for the squared-exponential kernel.
    pub fn nu(&self) -> Option<f64> {
        match self.family {
            KernelFamily::Matern(s) => Some(s.nu()),
            KernelFamily::SquaredExponential => None,
        }
    }

    /// Kernel value as a function of the unscaled Euclidean distance.
    #[inline]
    pub fn of_distance(&self, dist: T) -> T {
        let r = dist / self.lengthscale;
        match self.family {
            KernelFamily::Matern(MaternSmoothness::Half) => (-r).exp(),
            KernelFamily::Matern(MaternSmoothness::ThreeHalves) => {
                let s = lit::<T>(3f64.sqrt()) * r;
                (T::one() + s) * (-s).exp()
            }
            KernelFamily::Matern(MaternSmoothness::FiveHalves) => {
                let s = lit::<T>(5f64.sqrt()) * r;
                (T::one() + s + s * s / lit(3.0)) * (-s).exp()
            }
            KernelFamily::SquaredExponential => (-(r * r) / lit(2.0)).exp(),
        }
    }

    /// Evaluates without validating the inputs.
    #[inline]
    pub fn eval_unchecked(&self, z1: &[T], z2: &[T]) -> T {
        let sq = z1
            .iter()
            .zip(z2)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        self.of_distance(sq.sqrt())
    }

    fn check_point(&self, z: &[T]) -> Result<()> {
        if z.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: z.len(),
            });
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite coordinate"));
        }
        Ok(())
    }
}

/// `k(z1, z2)` with input validation.
pub fn kernel_eval<T: Real>(spec: &KernelSpec<T>, z1: &[T], z2: &[T]) -> Result<T> {
    spec.check_point(z1)?;
    spec.check_point(z2)?;
    Ok(spec.eval_unchecked(z1, z2))
}

/// Gram matrix over an ordered point list.
#[derive(Debug, Clone, PartialEq)]
pub struct GramMatrix<T> {
    pub points: Vec<Vec<T>>,
    pub values: Matrix<T>,
}

pub fn gram<T: Real>(spec: &KernelSpec<T>, points: &[Vec<T>]) -> Result<GramMatrix<T>> {
    for p in points {
        spec.check_point(p)?;
    }
    let values = Matrix::symmetric_from_fn(points.len(), |i, j| {
        if i == j {
            T::one()
        } else {
            spec.eval_unchecked(&points[i], &points[j])
        }
    });
    Ok(GramMatrix {
        points: points.to_vec(),
        values,
    })
}

/// Eigenvalue decay class of a kernel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EigenDecay<T> {
    /// `λ_j ≲ j^{-β_p}` with the given `β_p > 1`.
    Polynomial(T),
    /// Exponential decay (squared-exponential kernel); behaves as `β_p → ∞`.
    SuperPolynomial,
}

/// Polynomial eigen-decay exponent `β_p = 2ν/d + 1` for Matérn kernels.
pub fn eigen_decay_beta<T: Real>(spec: &KernelSpec<T>) -> Result<EigenDecay<T>> {
    if spec.dim == 0 {
        return Err(Error::invalid("eigen decay undefined for d = 0"));
    }
    Ok(match spec.family {
        KernelFamily::Matern(s) => EigenDecay::Polynomial(lit::<T>(2.0 * s.nu()) / from_usize(spec.dim) + T::one()),
        KernelFamily::SquaredExponential => EigenDecay::SuperPolynomial,
    })
}

/// Anything that can evaluate a kernel between two points of type `P`.
///
/// Implemented by [`KernelSpec`] for coordinate vectors and by [`GridKernel`]
/// for indices into a precomputed grid.
pub trait KernelOracle<P: ?Sized, T> {
    fn k(&self, a: &P, b: &P) -> T;
}

impl<T: Real> KernelOracle<[T], T> for KernelSpec<T> {
    #[inline]
    fn k(&self, a: &[T], b: &[T]) -> T {
        self.eval_unchecked(a, b)
    }
}

impl<T: Real> KernelOracle<Vec<T>, T> for KernelSpec<T> {
    #[inline]
    fn k(&self, a: &Vec<T>, b: &Vec<T>) -> T {
        self.eval_unchecked(a, b)
    }
}

/// Kernel restricted to a fixed grid, with the full Gram matrix cached.
#[derive(Debug, Clone)]
pub struct GridKernel<T> {
    spec: KernelSpec<T>,
    points: Vec<Vec<T>>,
    values: Matrix<T>,
}

impl<T: Real> GridKernel<T> {
    pub fn new(spec: KernelSpec<T>, points: Vec<Vec<T>>) -> Result<Self> {
        let g = gram(&spec, &points)?;
        Ok(Self {
            spec,
            points,
            values: g.values,
        })
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        &self.spec
    }

    pub fn points(&self) -> &[Vec<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn gram(&self) -> &Matrix<T> {
        &self.values
    }

    /// Row `i` of the grid Gram matrix, i.e. `k(z_i, ·)` on the grid.
    pub fn row(&self, i: usize) -> &[T] {
        self.values.row(i)
    }
}

impl<T: Real> KernelOracle<usize, T> for GridKernel<T> {
    #[inline]
    fn k(&self, a: &usize, b: &usize) -> T {
        self.values[(*a, *b)]
    }
}

/// Gram matrix of an oracle over arbitrary points.
pub fn oracle_gram<P, T: Real, K: KernelOracle<P, T> + ?Sized>(kernel: &K, points: &[P]) -> Matrix<T> {
    Matrix::symmetric_from_fn(points.len(), |i, j| kernel.k(&points[i], &points[j]))
}

/// `out[q][a] = k(queries[q], anchors[a])`.
pub fn oracle_cross<P, T: Real, K: KernelOracle<P, T> + ?Sized>(kernel: &K, queries: &[P], anchors: &[P]) -> Matrix<T> {
    Matrix::from_fn(queries.len(), anchors.len(), |q, a| kernel.k(&queries[q], &anchors[a]))
}
