//! Trajectory-level preference feedback.
//!
//! Labels follow the Bradley–Terry–Luce model on the difference of summed
//! rewards: `P(y = 1) = σ(Σ r(left) - Σ r(right))`, so `y = 1` always means the
//! left trajectory won. The reward is estimated by kernel logistic ridge
//! regression over trajectory-difference features
//! `φ̄ = Σ_h φ(z_h) - φ(z'_h)`, solved in the dual with `θ = Σ_i α_i φ̄_i`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gp::information_gain;
use crate::kernel::KernelOracle;
use crate::linalg::{solve_general, Matrix};
use crate::scalar::{from_usize, lit, Real};

/// Default Newton tolerance on `‖∇L‖_∞`.
pub const KLRR_TOL: f64 = 1e-8;
/// Default Newton iteration cap.
pub const KLRR_MAX_ITERS: usize = 100;
/// Diagonal jitter added to the trajectory-difference Gram before solving.
pub const KLRR_JITTER: f64 = 1e-10;

/// Two equal-length trajectories of state-action points, compared left vs right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair<P> {
    left: Vec<P>,
    right: Vec<P>,
}

impl<P> TrajectoryPair<P> {
    pub fn new(left: Vec<P>, right: Vec<P>) -> Result<Self> {
        if left.len() != right.len() {
            return Err(Error::invalid(format!(
                "trajectory lengths differ: {} vs {}",
                left.len(),
                right.len()
            )));
        }
        Ok(Self { left, right })
    }

    pub fn left(&self) -> &[P] {
        &self.left
    }

    pub fn right(&self) -> &[P] {
        &self.right
    }

    pub fn horizon(&self) -> usize {
        self.left.len()
    }

    pub fn map<Q>(&self, f: impl Fn(&P) -> Q) -> TrajectoryPair<Q> {
        TrajectoryPair {
            left: self.left.iter().map(&f).collect(),
            right: self.right.iter().map(&f).collect(),
        }
    }
}

/// One comparison: the pair, the observed label and the (hidden) probability
/// it was drawn with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord<P, T> {
    pub pair: TrajectoryPair<P>,
    /// `true` when the left trajectory was preferred.
    pub label: bool,
    /// Diagnostics only; never read by the estimator.
    pub true_prob: T,
}

/// Numerically stable logistic function.
#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// `log(1 + e^x)` without overflow.
#[inline]
fn softplus<T: Real>(x: T) -> T {
    x.max(T::zero()) + (-x.abs()).exp().ln_1p()
}

/// Probability that the left trajectory is preferred.
pub fn btl_probability<T: Real>(sum_left: T, sum_right: T) -> T {
    sigmoid(sum_left - sum_right)
}

/// Draws a Bernoulli(`p`) label.
pub fn sample_preference<T: Real, R: Rng + ?Sized>(p: T, rng: &mut R) -> Result<bool> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::invalid(format!("preference probability {p} outside (0, 1)")));
    }
    let u: f64 = rng.gen();
    Ok(lit::<T>(u) < p)
}

/// `κ_Z = max_{x ∈ [-H, H]} 1/σ'(x) = 1/(σ(H)(1 - σ(H)))`.
pub fn kappa_z<T: Real>(horizon: usize) -> T {
    let h = from_usize::<T>(horizon);
    let s = sigmoid(h);
    T::one() / (s * sigmoid(-h))
}

/// `⟨φ̄(p1), φ̄(p2)⟩` expanded into kernel evaluations.
pub fn traj_diff_inner<P, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    p1: &TrajectoryPair<P>,
    p2: &TrajectoryPair<P>,
) -> T {
    let mut acc = T::zero();
    for (a, a2) in p1.left.iter().zip(&p1.right) {
        for (b, b2) in p2.left.iter().zip(&p2.right) {
            acc = acc + kernel.k(a, b) - kernel.k(a, b2) - kernel.k(a2, b) + kernel.k(a2, b2);
        }
    }
    acc
}

/// Gram matrix `K̄` of trajectory-difference features.
pub fn traj_diff_gram<P, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    pairs: &[TrajectoryPair<P>],
) -> Matrix<T> {
    Matrix::symmetric_from_fn(pairs.len(), |i, j| traj_diff_inner(kernel, &pairs[i], &pairs[j]))
}

/// `⟨φ(z), φ̄_i⟩ = Σ_h k(z, z_h^i) - k(z, z'^i_h)` for every pair.
pub fn traj_diff_cross<P, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    pairs: &[TrajectoryPair<P>],
    z: &P,
) -> Vec<T> {
    pairs.iter().map(|p| pair_cross(kernel, p, z)).collect()
}

#[inline]
fn pair_cross<P, T: Real, K: KernelOracle<P, T> + ?Sized>(kernel: &K, p: &TrajectoryPair<P>, z: &P) -> T {
    p.left
        .iter()
        .zip(&p.right)
        .fold(T::zero(), |acc, (a, b)| acc + kernel.k(z, a) - kernel.k(z, b))
}

/// `queries × pairs` matrix of [`traj_diff_cross`] values.
pub fn traj_diff_cross_matrix<P, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    pairs: &[TrajectoryPair<P>],
    queries: &[P],
) -> Matrix<T> {
    Matrix::from_fn(queries.len(), pairs.len(), |q, i| {
        pair_cross(kernel, &pairs[i], &queries[q])
    })
}

/// Dual solution of the kernel logistic ridge regression.
#[derive(Debug, Clone, PartialEq)]
pub struct DualRewardEstimate<P, T> {
    pub anchor_pairs: Vec<TrajectoryPair<P>>,
    pub alpha: Vec<T>,
    pub ridge: T,
    pub newton_iters: usize,
    pub final_grad_norm: T,
    /// False when the iteration cap was hit before the tolerance.
    pub converged: bool,
    pub objective: T,
}

impl<P: Clone, T: Real> DualRewardEstimate<P, T> {
    pub fn empty(ridge: T) -> Self {
        Self {
            anchor_pairs: Vec::new(),
            alpha: Vec::new(),
            ridge,
            newton_iters: 0,
            final_grad_norm: T::zero(),
            converged: true,
            objective: T::zero(),
        }
    }

    /// `θ̂ᵀφ(z)`.
    pub fn eval<K: KernelOracle<P, T> + ?Sized>(&self, kernel: &K, z: &P) -> T {
        self.anchor_pairs
            .iter()
            .zip(&self.alpha)
            .fold(T::zero(), |acc, (p, &a)| acc + a * pair_cross(kernel, p, z))
    }
}

pub fn reward_eval<P: Clone, T: Real, K: KernelOracle<P, T> + ?Sized>(
    est: &DualRewardEstimate<P, T>,
    kernel: &K,
    z: &P,
) -> T {
    est.eval(kernel, z)
}

/// Fits `θ̂` by damped Newton on the dual objective
/// `-Σ_i [y_i log σ(s_i) + (1 - y_i) log(1 - σ(s_i))] + τ αᵀK̄α`, `s = K̄α`.
pub fn klrr_fit<P: Clone + PartialEq, T: Real, K: KernelOracle<P, T> + ?Sized>(
    kernel: &K,
    records: &[PreferenceRecord<P, T>],
    tau: T,
    tol: T,
    max_iters: usize,
) -> Result<DualRewardEstimate<P, T>> {
    let pairs: Vec<_> = records.iter().map(|r| r.pair.clone()).collect();
    let kbar = traj_diff_gram(kernel, &pairs);
    klrr_fit_gram(pairs, &kbar, records.iter().map(|r| r.label), tau, tol, max_iters, None)
}

/// [`klrr_fit`] on a precomputed `K̄`, optionally warm-started from `warm`
/// (shorter vectors are padded with zeros).
pub fn klrr_fit_gram<P: Clone + PartialEq, T: Real>(
    pairs: Vec<TrajectoryPair<P>>,
    kbar: &Matrix<T>,
    labels: impl IntoIterator<Item = bool>,
    tau: T,
    tol: T,
    max_iters: usize,
    warm: Option<&[T]>,
) -> Result<DualRewardEstimate<P, T>> {
    if !(tau > T::zero()) {
        return Err(Error::invalid(format!("tau must be positive, got {tau}")));
    }
    if !(tol > T::zero()) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let labels: Vec<bool> = labels.into_iter().collect();
    let n = pairs.len();
    if labels.len() != n || kbar.rows() != n || !kbar.is_square() {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: labels.len().min(kbar.rows()),
        });
    }
    if n == 0 {
        return Ok(DualRewardEstimate::empty(tau));
    }

    // Identical pairs share one feature; solve over distinct pairs with counts.
    let mut group_of = vec![0usize; n];
    let mut reps: Vec<usize> = Vec::new();
    for i in 0..n {
        match reps.iter().position(|&r| pairs[r] == pairs[i]) {
            Some(g) => group_of[i] = g,
            None => {
                group_of[i] = reps.len();
                reps.push(i);
            }
        }
    }
    let m = reps.len();
    let mut counts = vec![T::zero(); m];
    let mut positives = vec![T::zero(); m];
    for (i, &g) in group_of.iter().enumerate() {
        counts[g] = counts[g] + T::one();
        if labels[i] {
            positives[g] = positives[g] + T::one();
        }
    }
    let k = Matrix::from_fn(m, m, |a, b| kbar[(reps[a], reps[b])]).add_diagonal(lit(KLRR_JITTER));
    let mut beta = vec![T::zero(); m];
    if let Some(w) = warm {
        for (i, &a) in w.iter().take(n).enumerate() {
            beta[group_of[i]] = beta[group_of[i]] + a;
        }
    }

    let problem = CompressedKlrr {
        k: &k,
        counts: &counts,
        positives: &positives,
        tau,
    };
    let (beta, iters, grad_norm, converged) = problem.newton(beta, tol, max_iters);
    let objective = problem.objective(&beta);
    if !converged {
        log::warn!("KLRR Newton stopped after {iters} iterations with ‖∇‖∞ = {grad_norm}");
    }
    let alpha = group_of.iter().map(|&g| beta[g] / counts[g]).collect();
    Ok(DualRewardEstimate {
        anchor_pairs: pairs,
        alpha,
        ridge: tau,
        newton_iters: iters,
        final_grad_norm: grad_norm,
        converged,
        objective,
    })
}

struct CompressedKlrr<'a, T> {
    k: &'a Matrix<T>,
    counts: &'a [T],
    positives: &'a [T],
    tau: T,
}

impl<T: Real> CompressedKlrr<'_, T> {
    fn objective(&self, beta: &[T]) -> T {
        let s = self.k.matvec(beta);
        let nll = s
            .iter()
            .zip(self.counts.iter().zip(self.positives))
            .fold(T::zero(), |acc, (&si, (&n, &p))| {
                acc + p * softplus(-si) + (n - p) * softplus(si)
            });
        let penalty = beta.iter().zip(&s).fold(T::zero(), |acc, (&b, &si)| acc + b * si);
        nll + self.tau * penalty
    }

    /// Residual `r` with `∇L = K r`.
    fn residual(&self, beta: &[T], s: &[T]) -> Vec<T> {
        let two_tau = lit::<T>(2.0) * self.tau;
        (0..beta.len())
            .map(|j| self.counts[j] * sigmoid(s[j]) - self.positives[j] + two_tau * beta[j])
            .collect()
    }

    fn newton(&self, mut beta: Vec<T>, tol: T, max_iters: usize) -> (Vec<T>, usize, T, bool) {
        let m = beta.len();
        let two_tau = lit::<T>(2.0) * self.tau;
        let armijo = lit::<T>(1e-4);
        let mut iters = 0;
        loop {
            let s = self.k.matvec(&beta);
            let r = self.residual(&beta, &s);
            let grad = self.k.matvec(&r);
            let grad_norm = inf_norm(&grad);
            if grad_norm <= tol {
                return (beta, iters, grad_norm, true);
            }
            if iters >= max_iters {
                return (beta, iters, grad_norm, false);
            }
            // (D K + 2τ I) Δ = r solves the Newton system (K D K + 2τ K) Δ = K r.
            let weights: Vec<T> = (0..m)
                .map(|j| {
                    let p = sigmoid(s[j]);
                    self.counts[j] * p * (T::one() - p)
                })
                .collect();
            let sys = Matrix::from_fn(m, m, |a, b| {
                let v = weights[a] * self.k[(a, b)];
                if a == b {
                    v + two_tau
                } else {
                    v
                }
            });
            let Some(step) = solve_general(&sys, &r) else {
                return (beta, iters, grad_norm, false);
            };
            let slope = grad.iter().zip(&step).fold(T::zero(), |acc, (&g, &d)| acc + g * d);
            let f0 = self.objective(&beta);
            let noise_floor = lit::<T>(1e-12) * (T::one() + f0.abs());
            let mut t = T::one();
            let mut accepted = false;
            for _ in 0..60 {
                let trial: Vec<T> = beta.iter().zip(&step).map(|(&b, &d)| b - t * d).collect();
                let f = self.objective(&trial);
                if f <= f0 - armijo * t * slope {
                    beta = trial;
                    accepted = true;
                    break;
                }
                if t == T::one() && (f - f0).abs() <= noise_floor {
                    // Objective differences are below round-off; judge the
                    // full step by the gradient instead.
                    let ts = self.k.matvec(&trial);
                    let tg = inf_norm(&self.k.matvec(&self.residual(&trial, &ts)));
                    if tg < grad_norm {
                        beta = trial;
                        accepted = true;
                        break;
                    }
                }
                t = t / lit(2.0);
            }
            iters += 1;
            if !accepted {
                return (beta, iters, grad_norm, grad_norm <= tol);
            }
        }
    }
}

fn inf_norm<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |a, &x| a.max(x.abs()))
}

/// Reward confidence width
/// `c_r · 3Hκ_Z (2√(2 log(1/δ) + log det(I + K̄/τ)) + √τ)`.
pub fn beta_reward<T: Real>(delta: T, horizon: usize, tau: T, kbar: &Matrix<T>, c_r: T) -> Result<T> {
    if !(delta > T::zero() && delta < T::one()) {
        return Err(Error::invalid(format!("delta {delta} outside (0, 1)")));
    }
    if !(c_r > T::zero() && c_r <= T::one()) {
        return Err(Error::invalid(format!("c_r {c_r} outside (0, 1]")));
    }
    let gain = information_gain(kbar, tau)?;
    Ok(beta_reward_from_gain(delta, horizon, tau, gain, c_r))
}

/// [`beta_reward`] given a precomputed `log det(I + K̄/τ)`.
pub fn beta_reward_from_gain<T: Real>(delta: T, horizon: usize, tau: T, gain: T, c_r: T) -> T {
    let two = lit::<T>(2.0);
    let three = lit::<T>(3.0);
    let inner = (two * (T::one() / delta).ln() + gain).sqrt();
    c_r * three * from_usize::<T>(horizon) * kappa_z::<T>(horizon) * (two * inner + tau.sqrt())
}
