//! Discretized episodic MDP with hidden rewards and Gaussian transitions, plus
//! exact dynamic-programming oracles.
//!
//! States are `m_s × m_s` equispaced points of `[0,1]²`, actions `m_a`
//! equispaced points of `[0,1]`. State-action `z = (x₁, x₂, a)` is indexed
//! `s · n_actions + a`.

use std::f64::consts::{E, PI};
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::preference::{btl_probability, sample_preference, PreferenceRecord, TrajectoryPair};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Benchmark used as the hidden reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardName {
    Hartmann3,
    Ackley3,
    Branin,
}

impl RewardName {
    pub fn as_str(self) -> &'static str {
        match self {
            RewardName::Hartmann3 => "hartmann3",
            RewardName::Ackley3 => "ackley3",
            RewardName::Branin => "branin",
        }
    }
}

impl fmt::Display for RewardName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RewardName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hartmann3" => Ok(RewardName::Hartmann3),
            "ackley3" => Ok(RewardName::Ackley3),
            "branin" => Ok(RewardName::Branin),
            other => Err(Error::invalid(format!("unknown reward function `{other}`"))),
        }
    }
}

const HARTMANN_ALPHA: [f64; 4] = [1.0, 1.2, 3.0, 3.2];
const HARTMANN_A: [[f64; 3]; 4] = [
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
    [3.0, 10.0, 30.0],
    [0.1, 10.0, 35.0],
];
const HARTMANN_P: [[f64; 3]; 4] = [
    [0.3689, 0.1170, 0.2673],
    [0.4699, 0.4387, 0.7470],
    [0.1091, 0.8732, 0.5547],
    [0.0381, 0.5743, 0.8828],
];

fn hartmann3<T: Real>(z: &[T]) -> T {
    let mut total = T::zero();
    for i in 0..4 {
        let mut inner = T::zero();
        for j in 0..3 {
            let d = z[j] - lit(HARTMANN_P[i][j]);
            inner = inner + lit::<T>(HARTMANN_A[i][j]) * d * d;
        }
        total = total + lit::<T>(HARTMANN_ALPHA[i]) * (-inner).exp();
    }
    -total
}

fn ackley3<T: Real>(z: &[T]) -> T {
    let n = lit::<T>(3.0);
    let sq = z.iter().map(|&v| v * v).sum::<T>() / n;
    let cos = z.iter().map(|&v| (lit::<T>(2.0 * PI) * v).cos()).sum::<T>() / n;
    lit::<T>(-20.0) * (lit::<T>(-0.2) * sq.sqrt()).exp() - cos.exp() + lit(20.0) + lit(E)
}

fn branin<T: Real>(z: &[T]) -> T {
    let x1 = lit::<T>(-5.0) + lit::<T>(15.0) * z[0];
    let x2 = lit::<T>(15.0) * z[1];
    let b = lit::<T>(5.1 / (4.0 * PI * PI));
    let c = lit::<T>(5.0 / PI);
    let t = lit::<T>(1.0 / (8.0 * PI));
    let q = x2 - b * x1 * x1 + c * x1 - lit(6.0);
    q * q + lit::<T>(10.0) * (T::one() - t) * x1.cos() + lit(10.0)
}

/// Raw benchmark value at `z ∈ [0,1]³` (all three are minimization problems).
///
/// Branin uses `(z₁, z₂)` mapped to `[-5, 10] × [0, 15]` and ignores `z₃`.
pub fn reward_raw<T: Real>(name: RewardName, z: &[T]) -> Result<T> {
    if z.len() != 3 {
        return Err(Error::DimensionMismatch {
            expected: 3,
            got: z.len(),
        });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite reward input"));
    }
    Ok(match name {
        RewardName::Hartmann3 => hartmann3(z),
        RewardName::Ackley3 => ackley3(z),
        RewardName::Branin => branin(z),
    })
}

/// Negated raw values affinely mapped onto `[0,1]` over `grid`.
///
/// A constant function maps to 0.5 everywhere.
pub fn normalize_reward<T: Real>(name: RewardName, grid: &[Vec<T>]) -> Result<Vec<T>> {
    if grid.is_empty() {
        return Err(Error::invalid("reward grid is empty"));
    }
    let vals = grid
        .iter()
        .map(|z| reward_raw(name, z).map(|v| -v))
        .collect::<Result<Vec<T>>>()?;
    Ok(rescale_unit(&vals))
}

fn rescale_unit<T: Real>(vals: &[T]) -> Vec<T> {
    let lo = vals.iter().copied().fold(T::infinity(), T::min);
    let hi = vals.iter().copied().fold(T::neg_infinity(), T::max);
    let span = hi - lo;
    if !(span > T::zero()) {
        return vec![lit(0.5); vals.len()];
    }
    vals.iter()
        .map(|&v| ((v - lo) / span).max(T::zero()).min(T::one()))
        .collect()
}

/// `k` equispaced points of `[0,1]` (just `0.5` when `k = 1`).
pub fn equispaced<T: Real>(k: usize) -> Vec<T> {
    if k == 1 {
        return vec![lit(0.5)];
    }
    (0..k).map(|i| from_usize::<T>(i) / from_usize::<T>(k - 1)).collect()
}

/// Learner-visible layout of the grid: coordinates only, no rewards or dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct GridGeometry<T> {
    n_states: usize,
    n_actions: usize,
    horizon: usize,
    states: Vec<Vec<T>>,
    actions: Vec<T>,
    sa_points: Vec<Vec<T>>,
}

impl<T: Real> GridGeometry<T> {
    /// `m_s² × m_a` grid over `[0,1]² × [0,1]`.
    pub fn square(m_s: usize, m_a: usize, horizon: usize) -> Result<Self> {
        if m_s == 0 || m_a == 0 || horizon == 0 {
            return Err(Error::invalid("grid sizes and horizon must be positive"));
        }
        let axis = equispaced::<T>(m_s);
        let states = (0..m_s * m_s).map(|i| vec![axis[i / m_s], axis[i % m_s]]).collect();
        Self::from_coordinates(states, equispaced(m_a), horizon)
    }

    /// Arbitrary state coordinates with a scalar action grid.
    pub fn from_coordinates(states: Vec<Vec<T>>, actions: Vec<T>, horizon: usize) -> Result<Self> {
        if states.is_empty() || actions.is_empty() || horizon == 0 {
            return Err(Error::invalid("grid sizes and horizon must be positive"));
        }
        let d = states[0].len();
        if states.iter().any(|s| s.len() != d) {
            return Err(Error::invalid("state coordinates have inconsistent dimension"));
        }
        let sa_points = states
            .iter()
            .flat_map(|s| {
                actions.iter().map(move |&a| {
                    let mut p = s.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
        Ok(Self {
            n_states: states.len(),
            n_actions: actions.len(),
            horizon,
            states,
            actions,
            sa_points,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn n_sa(&self) -> usize {
        self.n_states * self.n_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn states(&self) -> &[Vec<T>] {
        &self.states
    }

    pub fn actions(&self) -> &[T] {
        &self.actions
    }

    /// State-action coordinates, indexed by [`GridGeometry::sa_index`].
    pub fn sa_points(&self) -> &[Vec<T>] {
        &self.sa_points
    }

    pub fn point_dim(&self) -> usize {
        self.sa_points[0].len()
    }

    pub fn sa_index(&self, state: usize, action: usize) -> usize {
        state * self.n_actions + action
    }

    pub fn state_of(&self, z: usize) -> usize {
        z / self.n_actions
    }

    pub fn action_of(&self, z: usize) -> usize {
        z % self.n_actions
    }
}

/// Mean of the Gaussian transition from `(x₁, x₂, a)`:
/// `(0.5 x₁ + 0.5 a, 0.5 x₂ + 0.5 a)`.
pub fn transition_mean<T: Real>(z: &[T]) -> [T; 2] {
    let half = lit::<T>(0.5);
    [half * z[0] + half * z[2], half * z[1] + half * z[2]]
}

/// Row-stochastic transition matrices (one per step, all equal), rows indexed
/// by state-action and columns by next state.
pub fn build_transition<T: Real>(geometry: &GridGeometry<T>) -> Result<Vec<Matrix<T>>> {
    if geometry.states[0].len() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: geometry.states[0].len(),
        });
    }
    let half = lit::<T>(0.5);
    let mut p = Matrix::zeros(geometry.n_sa(), geometry.n_states);
    for (z, point) in geometry.sa_points.iter().enumerate() {
        let mean = transition_mean(point);
        let row = p.row_mut(z);
        // Subtract the largest log-weight so the closest state has weight 1.
        let logw: Vec<T> = geometry
            .states
            .iter()
            .map(|x| {
                let d0 = x[0] - mean[0];
                let d1 = x[1] - mean[1];
                -(d0 * d0 + d1 * d1) * half
            })
            .collect();
        let top = logw.iter().copied().fold(T::neg_infinity(), T::max);
        for (r, &l) in row.iter_mut().zip(&logw) {
            *r = (l - top).exp();
        }
        let total: T = row.iter().copied().sum();
        for r in row.iter_mut() {
            *r = *r / total;
        }
    }
    Ok(vec![p; geometry.horizon])
}

/// Finite-horizon MDP with a hidden reward table.
#[derive(Debug, Clone)]
pub struct DiscretizedMdp<T> {
    geometry: GridGeometry<T>,
    transition: Vec<Matrix<T>>,
    reward_table: Vec<T>,
    reward_name: Option<RewardName>,
}

impl<T: Real> DiscretizedMdp<T> {
    /// Benchmark-reward MDP on the square grid.
    pub fn synthetic(name: RewardName, m_s: usize, m_a: usize, horizon: usize) -> Result<Self> {
        let geometry = GridGeometry::square(m_s, m_a, horizon)?;
        let transition = build_transition(&geometry)?;
        let reward_table = normalize_reward(name, geometry.sa_points())?;
        Ok(Self {
            geometry,
            transition,
            reward_table,
            reward_name: Some(name),
        })
    }

    /// MDP from explicit tables; `transition[h]` is `(S·A) × S`.
    pub fn from_tables(geometry: GridGeometry<T>, transition: Vec<Matrix<T>>, reward_table: Vec<T>) -> Result<Self> {
        if transition.len() != geometry.horizon {
            return Err(Error::DimensionMismatch {
                expected: geometry.horizon,
                got: transition.len(),
            });
        }
        if reward_table.len() != geometry.n_sa() {
            return Err(Error::DimensionMismatch {
                expected: geometry.n_sa(),
                got: reward_table.len(),
            });
        }
        let tol = lit::<T>(1e-12);
        for p in &transition {
            if p.rows() != geometry.n_sa() || p.cols() != geometry.n_states {
                return Err(Error::DimensionMismatch {
                    expected: geometry.n_sa(),
                    got: p.rows(),
                });
            }
            for z in 0..p.rows() {
                let row = p.row(z);
                let sum: T = row.iter().copied().sum();
                if row.iter().any(|&v| !(v >= T::zero())) || (sum - T::one()).abs() > tol {
                    return Err(Error::invalid(format!("transition row {z} is not a distribution")));
                }
            }
        }
        if reward_table.iter().any(|r| !r.is_finite()) {
            return Err(Error::invalid("reward table has non-finite entries"));
        }
        Ok(Self {
            geometry,
            transition,
            reward_table,
            reward_name: None,
        })
    }

    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.geometry
    }

    pub fn horizon(&self) -> usize {
        self.geometry.horizon
    }

    pub fn reward_name(&self) -> Option<RewardName> {
        self.reward_name
    }

    pub fn reward_table(&self) -> &[T] {
        &self.reward_table
    }

    /// Transition matrix of step `h` (0-based).
    pub fn transition(&self, h: usize) -> &Matrix<T> {
        &self.transition[h]
    }

    /// Sum of hidden rewards along a state-action trajectory.
    pub fn trajectory_return(&self, traj: &[usize]) -> T {
        traj.iter().map(|&z| self.reward_table[z]).sum()
    }
}

/// Categorical draw of the next state from step `h` (0-based) at `z`.
pub fn step<T: Real, R: Rng + ?Sized>(mdp: &DiscretizedMdp<T>, h: usize, z: usize, rng: &mut R) -> usize {
    let row = mdp.transition[h].row(z);
    let u: f64 = rng.gen();
    let mut acc = 0.0;
    let mut last = 0;
    for (x, &p) in row.iter().enumerate() {
        let p = to_f64(p);
        if p > 0.0 {
            acc += p;
            last = x;
            if u < acc {
                return x;
            }
        }
    }
    last
}

/// Deterministic nonstationary policy: `actions[h][state]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct PolicyTable {
    pub actions: Vec<Vec<usize>>,
}

impl PolicyTable {
    pub fn constant(horizon: usize, n_states: usize, action: usize) -> Self {
        Self {
            actions: vec![vec![action; n_states]; horizon],
        }
    }

    pub fn action(&self, h: usize, state: usize) -> usize {
        self.actions[h][state]
    }

    fn validate<T>(&self, g: &GridGeometry<T>) -> Result<()> {
        if self.actions.len() != g.horizon {
            return Err(Error::invalid(format!(
                "policy covers {} steps, horizon is {}",
                self.actions.len(),
                g.horizon
            )));
        }
        for (h, row) in self.actions.iter().enumerate() {
            if row.len() != g.n_states {
                return Err(Error::invalid(format!(
                    "policy step {h} covers {} states, grid has {}",
                    row.len(),
                    g.n_states
                )));
            }
            if let Some(&a) = row.iter().find(|&&a| a >= g.n_actions) {
                return Err(Error::invalid(format!(
                    "policy step {h} uses action {a} outside the grid"
                )));
            }
        }
        Ok(())
    }
}

/// Value tables from backward DP. `v[h]` has one entry per state with
/// `v[H] ≡ 0`; `q[h]` has one entry per state-action (0-based steps).
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTables<T> {
    pub v: Vec<Vec<T>>,
    pub q: Vec<Vec<T>>,
}

impl<T: Real> ValueTables<T> {
    /// Value at step 1 of `state`.
    pub fn initial(&self, state: usize) -> T {
        self.v[0][state]
    }
}

fn backup<T: Real>(mdp: &DiscretizedMdp<T>, h: usize, next_v: &[T]) -> Vec<T> {
    let p = &mdp.transition[h];
    (0..mdp.geometry.n_sa())
        .map(|z| mdp.reward_table[z] + p.row(z).iter().zip(next_v).map(|(&a, &b)| a * b).sum::<T>())
        .collect()
}

/// Exact `V*`, `Q*` by backward induction.
pub fn solve_optimal_values<T: Real>(mdp: &DiscretizedMdp<T>) -> ValueTables<T> {
    let g = &mdp.geometry;
    let big_h = g.horizon;
    let mut v = vec![vec![T::zero(); g.n_states]; big_h + 1];
    let mut q = vec![Vec::new(); big_h];
    for h in (0..big_h).rev() {
        let qh = backup(mdp, h, &v[h + 1]);
        for s in 0..g.n_states {
            v[h][s] = qh[s * g.n_actions..(s + 1) * g.n_actions]
                .iter()
                .copied()
                .fold(T::neg_infinity(), T::max);
        }
        q[h] = qh;
    }
    ValueTables { v, q }
}

/// Greedy policy of per-step state-action tables, lowest index on ties.
pub fn greedy_from_tables<T: Real>(tables: &[Vec<T>], n_states: usize, n_actions: usize) -> PolicyTable {
    let actions = tables
        .iter()
        .map(|q| {
            (0..n_states)
                .map(|s| {
                    let row = &q[s * n_actions..(s + 1) * n_actions];
                    let mut best = 0;
                    for a in 1..n_actions {
                        if row[a] > row[best] {
                            best = a;
                        }
                    }
                    best
                })
                .collect()
        })
        .collect();
    PolicyTable { actions }
}

/// Exact `V^π`, `Q^π` of a deterministic policy.
pub fn evaluate_policy<T: Real>(mdp: &DiscretizedMdp<T>, policy: &PolicyTable) -> Result<ValueTables<T>> {
    let g = &mdp.geometry;
    policy.validate(g)?;
    let big_h = g.horizon;
    let mut v = vec![vec![T::zero(); g.n_states]; big_h + 1];
    let mut q = vec![Vec::new(); big_h];
    for h in (0..big_h).rev() {
        let qh = backup(mdp, h, &v[h + 1]);
        for s in 0..g.n_states {
            v[h][s] = qh[g.sa_index(s, policy.actions[h][s])];
        }
        q[h] = qh;
    }
    Ok(ValueTables { v, q })
}

/// Rolls out `policy` from `x1`, returning the state-action indices and the
/// states reached after each step.
pub fn rollout<T: Real, R: Rng + ?Sized>(
    mdp: &DiscretizedMdp<T>,
    policy: &PolicyTable,
    x1: usize,
    rng: &mut R,
) -> (Vec<usize>, Vec<usize>) {
    let g = &mdp.geometry;
    let mut zs = Vec::with_capacity(g.horizon);
    let mut next = Vec::with_capacity(g.horizon);
    let mut x = x1;
    for h in 0..g.horizon {
        let z = g.sa_index(x, policy.action(h, x));
        x = step(mdp, h, z, rng);
        zs.push(z);
        next.push(x);
    }
    (zs, next)
}

/// Hidden-reward comparison of a pair: BTL probability and a sampled label.
pub fn compare<T: Real, R: Rng + ?Sized>(
    mdp: &DiscretizedMdp<T>,
    pair: TrajectoryPair<usize>,
    rng: &mut R,
) -> Result<PreferenceRecord<usize, T>> {
    let p = btl_probability(mdp.trajectory_return(pair.left()), mdp.trajectory_return(pair.right()));
    let label = sample_preference(p, rng)?;
    Ok(PreferenceRecord {
        pair,
        label,
        true_prob: p,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ackley_vanishes_at_origin() {
        assert!(reward_raw::<f64>(RewardName::Ackley3, &[0.0, 0.0, 0.0]).unwrap().abs() < 1e-14);
    }

    #[test]
    fn hartmann_at_unit_corner() {
        // Term by term: α_i exp(-Σ_j A_ij (1 - P_ij)²).
        let t1 = 1.0 * (-(3.0 * 0.6311f64.powi(2) + 10.0 * 0.883f64.powi(2) + 30.0 * 0.7327f64.powi(2))).exp();
        let t2 = 1.2 * (-(0.1 * 0.5301f64.powi(2) + 10.0 * 0.5613f64.powi(2) + 35.0 * 0.253f64.powi(2))).exp();
        let t3 = 3.0 * (-(3.0 * 0.8909f64.powi(2) + 10.0 * 0.1268f64.powi(2) + 30.0 * 0.4453f64.powi(2))).exp();
        let t4 = 3.2 * (-(0.1 * 0.9619f64.powi(2) + 10.0 * 0.4257f64.powi(2) + 35.0 * 0.1172f64.powi(2))).exp();
        let got = reward_raw(RewardName::Hartmann3, &[1.0, 1.0, 1.0]).unwrap();
        assert!((got + (t1 + t2 + t3 + t4)).abs() < 1e-13);
    }

    #[test]
    fn hartmann_grid_minimum() {
        let n = 201;
        let mut best = (f64::INFINITY, [0.0; 3]);
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let z = [i as f64 / 200.0, j as f64 / 200.0, k as f64 / 200.0];
                    let v = hartmann3(&z);
                    if v < best.0 {
                        best = (v, z);
                    }
                }
            }
        }
        assert!((best.0 + 3.8628).abs() < 1e-3, "{}", best.0);
        let target = [0.1146, 0.5556, 0.8525];
        for d in 0..3 {
            assert!((best.1[d] - target[d]).abs() <= 0.01, "{:?}", best.1);
        }
    }

    #[test]
    fn branin_known_minimizers() {
        // Global minimum 0.397887 at (-π, 12.275), (π, 2.275), (9.42478, 2.475).
        for (x1, x2) in [(-PI, 12.275), (PI, 2.275), (9.42478, 2.475)] {
            let z = [(x1 + 5.0) / 15.0, x2 / 15.0, 0.3];
            let v = reward_raw(RewardName::Branin, &z).unwrap();
            assert!((v - 0.397887).abs() < 1e-5, "{v}");
        }
    }

    #[test]
    fn unknown_name_and_bad_dimension() {
        assert!("rosenbrock".parse::<RewardName>().is_err());
        assert_eq!("ackley3".parse::<RewardName>().unwrap(), RewardName::Ackley3);
        assert!(reward_raw::<f64>(RewardName::Branin, &[0.1, 0.2]).is_err());
    }

    #[test]
    fn normalization_endpoints_order_and_constant() {
        let g = GridGeometry::<f64>::square(4, 3, 1).unwrap();
        for name in [RewardName::Hartmann3, RewardName::Ackley3, RewardName::Branin] {
            let t = normalize_reward(name, g.sa_points()).unwrap();
            let lo = t.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = t.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!((lo, hi), (0.0, 1.0));
            for (i, zi) in g.sa_points().iter().enumerate() {
                for (j, zj) in g.sa_points().iter().enumerate() {
                    let (ri, rj) = (reward_raw(name, zi).unwrap(), reward_raw(name, zj).unwrap());
                    if ri < rj {
                        assert!(t[i] > t[j]);
                    }
                }
            }
        }
        assert_eq!(rescale_unit(&[2.0, 2.0, 2.0]), vec![0.5; 3]);
    }

    #[test]
    fn transition_means() {
        let m = transition_mean::<f64>(&[0.4, 0.8, 0.2]);
        assert!((m[0] - 0.3).abs() < 1e-15 && (m[1] - 0.5).abs() < 1e-15);
        assert_eq!(transition_mean(&[1.0, 1.0, 1.0]), [1.0, 1.0]);
    }

    #[test]
    fn transition_rows_are_distributions() {
        let mdp = DiscretizedMdp::<f64>::synthetic(RewardName::Hartmann3, 8, 8, 3).unwrap();
        for h in 0..3 {
            let p = mdp.transition(h);
            for z in 0..p.rows() {
                let s: f64 = p.row(z).iter().sum();
                assert!((s - 1.0).abs() < 1e-12);
                assert!(p.row(z).iter().all(|&v| v >= 0.0));
            }
        }
        assert_eq!(mdp.transition(0), mdp.transition(2));
    }

    #[test]
    fn step_frequencies_match_row() {
        let mdp = DiscretizedMdp::<f64>::synthetic(RewardName::Ackley3, 4, 2, 1).unwrap();
        let z = 5;
        let mut counts = [0usize; 16];
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 100_000;
        for _ in 0..n {
            counts[step(&mdp, 0, z, &mut rng)] += 1;
        }
        for (c, &p) in counts.iter().zip(mdp.transition(0).row(z)) {
            assert!((*c as f64 / n as f64 - p).abs() < 0.01);
        }
    }

    #[test]
    fn degenerate_row_and_seeded_rollout() {
        let g = GridGeometry::from_coordinates(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0], 2).unwrap();
        let p = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 0.0]]);
        let mdp = DiscretizedMdp::from_tables(g, vec![p.clone(), p], vec![0.0, 0.1, 0.2, 0.3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100 {
            assert_eq!(step(&mdp, 0, 0, &mut rng), 1);
        }
        let pol = PolicyTable::constant(2, 2, 1);
        let a = rollout(&mdp, &pol, 0, &mut ChaCha8Rng::seed_from_u64(9));
        let b = rollout(&mdp, &pol, 0, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
        assert_eq!(a.0, vec![1, 3]);
    }

    fn single_state(c: f64, n_actions: usize, horizon: usize) -> DiscretizedMdp<f64> {
        let g = GridGeometry::from_coordinates(vec![vec![0.5]], equispaced(n_actions), horizon).unwrap();
        let p = Matrix::from_fn(n_actions, 1, |_, _| 1.0);
        DiscretizedMdp::from_tables(g, vec![p; horizon], vec![c; n_actions]).unwrap()
    }

    #[test]
    fn single_state_values() {
        let mdp = single_state(0.3, 2, 5);
        let v = solve_optimal_values(&mdp);
        assert!((v.initial(0) - 1.5).abs() < 1e-15);
        let pol = PolicyTable::constant(5, 1, 1);
        assert!((evaluate_policy(&mdp, &pol).unwrap().initial(0) - 1.5).abs() < 1e-15);
    }

    #[test]
    fn malformed_policy_rejected() {
        let mdp = single_state(0.3, 2, 3);
        assert!(evaluate_policy(&mdp, &PolicyTable::constant(2, 1, 0)).is_err());
        assert!(evaluate_policy(&mdp, &PolicyTable::constant(3, 2, 0)).is_err());
        assert!(evaluate_policy(&mdp, &PolicyTable::constant(3, 1, 2)).is_err());
    }

    pub(crate) fn random_mdp(rng: &mut ChaCha8Rng, n_s: usize, n_a: usize, horizon: usize) -> DiscretizedMdp<f64> {
        let g = GridGeometry::from_coordinates(
            equispaced::<f64>(n_s).into_iter().map(|x| vec![x]).collect(),
            equispaced(n_a),
            horizon,
        )
        .unwrap();
        let transition = (0..horizon)
            .map(|_| {
                let mut p = Matrix::from_fn(n_s * n_a, n_s, |_, _| rng.gen::<f64>() + 1e-3);
                for z in 0..n_s * n_a {
                    let s: f64 = p.row(z).iter().sum();
                    p.row_mut(z).iter_mut().for_each(|v| *v /= s);
                }
                p
            })
            .collect();
        let reward = (0..n_s * n_a).map(|_| rng.gen()).collect();
        DiscretizedMdp::from_tables(g, transition, reward).unwrap()
    }

    /// Best value per initial state over every deterministic nonstationary policy.
    fn enumerate_best(mdp: &DiscretizedMdp<f64>) -> Vec<f64> {
        let g = mdp.geometry();
        let slots = g.n_states() * g.horizon();
        let total = g.n_actions().pow(slots as u32);
        let mut best = vec![f64::NEG_INFINITY; g.n_states()];
        for code in 0..total {
            let mut c = code;
            let actions = (0..g.horizon())
                .map(|_| {
                    (0..g.n_states())
                        .map(|_| {
                            let a = c % g.n_actions();
                            c /= g.n_actions();
                            a
                        })
                        .collect()
                })
                .collect();
            let pol = PolicyTable { actions };
            // Forward propagation of the state distribution, independent of the backward DP.
            for (x1, b) in best.iter_mut().enumerate() {
                let mut dist = vec![0.0; g.n_states()];
                dist[x1] = 1.0;
                let mut value = 0.0;
                for h in 0..g.horizon() {
                    let mut next = vec![0.0; g.n_states()];
                    for (s, &w) in dist.iter().enumerate() {
                        let z = g.sa_index(s, pol.action(h, s));
                        value += w * mdp.reward_table()[z];
                        for (n, &p) in next.iter_mut().zip(mdp.transition(h).row(z)) {
                            *n += w * p;
                        }
                    }
                    dist = next;
                }
                *b = b.max(value);
            }
        }
        best
    }

    #[test]
    fn dp_matches_enumeration_three_by_two() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mdp = random_mdp(&mut rng, 3, 2, 2);
        let v = solve_optimal_values(&mdp);
        for (a, b) in v.v[0].iter().zip(enumerate_best(&mdp)) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_of_optimal_attains_optimal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let mdp = random_mdp(&mut rng, 4, 3, 3);
            let opt = solve_optimal_values(&mdp);
            let pol = greedy_from_tables(&opt.q, 4, 3);
            let ev = evaluate_policy(&mdp, &pol).unwrap();
            for h in 0..3 {
                for s in 0..4 {
                    assert!((ev.v[h][s] - opt.v[h][s]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn compare_is_symmetric_for_equal_returns() {
        let mdp = single_state(0.4, 3, 2);
        let pair = TrajectoryPair::new(vec![0, 1], vec![2, 2]).unwrap();
        let rec = compare(&mdp, pair, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(rec.true_prob, 0.5);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn optimal_dominates_random_policies(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mdp = random_mdp(&mut rng, 4, 3, 3);
            let opt = solve_optimal_values(&mdp);
            let actions = (0..3).map(|_| (0..4).map(|_| rng.gen_range(0..3)).collect()).collect();
            let ev = evaluate_policy(&mdp, &PolicyTable { actions }).unwrap();
            for h in 0..3 {
                for s in 0..4 {
                    prop_assert!(ev.v[h][s] <= opt.v[h][s] + 1e-12);
                }
            }
        }

        #[test]
        fn dp_matches_enumeration_small(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n_s = rng.gen_range(1..=4);
            let n_a = rng.gen_range(1..=3);
            let horizon = rng.gen_range(1..=3);
            // Keep enumeration below ~10⁵ policies.
            prop_assume!((n_a as f64).powi((n_s * horizon) as i32) <= 6e4);
            let mdp = random_mdp(&mut rng, n_s, n_a, horizon);
            let v = solve_optimal_values(&mdp);
            for (a, b) in v.v[0].iter().zip(enumerate_best(&mdp)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
