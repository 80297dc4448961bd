//! The learner: reward refit from preferences, two posterior-noise draws,
//! optimistic clipped value iteration, and a pair of greedy rollouts per
//! episode.
//!
//! [`ProstoAgent`] only ever sees grid coordinates, visited indices and binary
//! labels. Rewards and transition probabilities stay inside
//! [`DiscretizedMdp`], which [`run_prosto`] uses to simulate feedback and to
//! score regret.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::{check_gain_domination_gram, EpisodeRecord, RegretTrace};
use crate::environment::{
    compare, evaluate_policy, greedy_from_tables, rollout, solve_optimal_values, DiscretizedMdp, GridGeometry,
    PolicyTable,
};
use crate::error::{Error, Result};
use crate::exploration::{beta_clip, noise_is_dominated, posterior_noise_covariance, NoiseSampler};
use crate::gp::{information_gain, KrrModel};
use crate::kernel::{eigen_decay_beta, oracle_cross, oracle_gram, EigenDecay, GridKernel, KernelFamily, KernelSpec};
use crate::linalg::Matrix;
use crate::preference::{
    beta_reward_from_gain, kappa_z, klrr_fit_gram, DualRewardEstimate, PreferenceRecord, TrajectoryPair,
    KLRR_MAX_ITERS, KLRR_TOL,
};
use crate::rng::{stream_rng, Stream};
use crate::scalar::{from_usize, lit, to_f64, Real};

/// Whether confidence widths use the theoretical constants verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleMode {
    TheoryFaithful,
    Practical,
}

/// Down-scaling factors applied to the regularizers and confidence widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Multipliers<T> {
    pub c_tau: T,
    pub c_lambda: T,
    pub c_eps: T,
    pub c_beta_t: T,
    pub c_r: T,
}

impl<T: Real> Multipliers<T> {
    pub fn unit() -> Self {
        Self {
            c_tau: T::one(),
            c_lambda: T::one(),
            c_eps: T::one(),
            c_beta_t: T::one(),
            c_r: T::one(),
        }
    }

    /// `c_r = 0.1`, `c_beta_t = 1`, `c_tau = c_lambda = 0.01`, `c_eps = 1`.
    pub fn practical() -> Self {
        Self {
            c_tau: lit(0.01),
            c_lambda: lit(0.01),
            c_eps: T::one(),
            c_beta_t: T::one(),
            c_r: lit(0.1),
        }
    }

    fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("c_tau", self.c_tau),
            ("c_lambda", self.c_lambda),
            ("c_eps", self.c_eps),
            ("c_beta_t", self.c_beta_t),
            ("c_r", self.c_r),
        ] {
            if !(v > T::zero() && v <= T::one()) {
                return Err(Error::invalid(format!("{name} = {v} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Ridge parameters for the reward (`tau`) and transition (`lambda`)
/// regressions, plus the value-cover mesh (reported only).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegularizerSchedule<T> {
    pub tau: T,
    pub lambda: T,
    pub mesh_eps: T,
    pub multipliers: Multipliers<T>,
    pub mode: ScheduleMode,
}

/// `τ = c_τ H² (log K)^{β_p} K^{2/(β_p+1)}`, `λ = c_λ (log K)^{β_p} K^{2/(β_p+1)}`,
/// `ε = c_ε H² κ K^{-(β_p-1)/(2(β_p+1))}`.
///
/// `episodes` is real-valued so that `K = e` gives `log K = 1`. Theory-faithful
/// mode ignores `multipliers` and uses 1 throughout.
pub fn schedule<T: Real>(
    episodes: T,
    horizon: usize,
    beta_p: T,
    kappa: T,
    multipliers: Multipliers<T>,
    mode: ScheduleMode,
) -> Result<RegularizerSchedule<T>> {
    if !(episodes >= lit(2.0)) {
        return Err(Error::invalid(format!("K = {episodes}: K ≥ 2 required by schedule")));
    }
    if horizon == 0 {
        return Err(Error::invalid("horizon must be positive"));
    }
    if !(beta_p > T::one()) || !beta_p.is_finite() {
        return Err(Error::invalid(format!(
            "eigen-decay exponent {beta_p} must be finite and > 1"
        )));
    }
    if !(kappa > T::zero()) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    let multipliers = match mode {
        ScheduleMode::TheoryFaithful => Multipliers::unit(),
        ScheduleMode::Practical => {
            multipliers.validate()?;
            multipliers
        }
    };
    let h2 = from_usize::<T>(horizon * horizon);
    let two = lit::<T>(2.0);
    let base = episodes.ln().powf(beta_p) * episodes.powf(two / (beta_p + T::one()));
    let mesh = episodes.powf(-(beta_p - T::one()) / (two * (beta_p + T::one())));
    Ok(RegularizerSchedule {
        tau: multipliers.c_tau * h2 * base,
        lambda: multipliers.c_lambda * base,
        mesh_eps: multipliers.c_eps * h2 * kappa * mesh,
        multipliers,
        mode,
    })
}

/// One step of the optimistic value iteration over the full grid.
#[derive(Debug, Clone, PartialEq)]
pub struct QStage<T> {
    /// 1-based step index.
    pub step: usize,
    pub table: Vec<T>,
    pub clip_radius: T,
}

/// Everything the learner has observed.
#[derive(Debug, Clone)]
pub struct EpisodeHistory<T> {
    horizon: usize,
    /// `left[h]`: `(z_h, x_{h+1})` visits of the first policy at step `h`.
    left: Vec<Vec<(usize, usize)>>,
    right: Vec<Vec<(usize, usize)>>,
    records: Vec<PreferenceRecord<usize, T>>,
}

impl<T: Real> EpisodeHistory<T> {
    pub fn new(horizon: usize) -> Self {
        Self {
            horizon,
            left: vec![Vec::new(); horizon],
            right: vec![Vec::new(); horizon],
            records: Vec::new(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of completed episodes.
    pub fn episodes(&self) -> usize {
        self.records.len()
    }

    pub fn records(&self) -> &[PreferenceRecord<usize, T>] {
        &self.records
    }

    pub fn left(&self, h: usize) -> &[(usize, usize)] {
        &self.left[h]
    }

    pub fn right(&self, h: usize) -> &[(usize, usize)] {
        &self.right[h]
    }

    /// Appends one comparison together with the states reached after each step.
    pub fn push(
        &mut self,
        record: PreferenceRecord<usize, T>,
        left_next: &[usize],
        right_next: &[usize],
    ) -> Result<()> {
        let h = self.horizon;
        if record.pair.horizon() != h || left_next.len() != h || right_next.len() != h {
            return Err(Error::DimensionMismatch {
                expected: h,
                got: record.pair.horizon(),
            });
        }
        for step in 0..h {
            self.left[step].push((record.pair.left()[step], left_next[step]));
            self.right[step].push((record.pair.right()[step], right_next[step]));
        }
        self.records.push(record);
        Ok(())
    }

    /// Regression data of step `h`, either one side or both pooled.
    pub fn step_data(&self, h: usize, side: Side) -> Vec<(usize, usize)> {
        match side {
            Side::Left => self.left[h].clone(),
            Side::Right => self.right[h].clone(),
            Side::Pooled => self.left[h].iter().chain(&self.right[h]).copied().collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
    Pooled,
}

struct StepRegression<T> {
    model: KrrModel<usize, T>,
    /// `grid × anchors` kernel block.
    cross: Matrix<T>,
    next_states: Vec<usize>,
}

/// Per-step kernel ridge regressions of the next-state value on the visited
/// state-actions, with the elliptic bonus precomputed on the grid.
pub struct TransitionEstimate<T> {
    steps: Vec<Option<StepRegression<T>>>,
    bonus: Vec<Vec<T>>,
    lambda: T,
}

impl<T: Real> TransitionEstimate<T> {
    /// `data[h]` lists `(z_h, x_{h+1})`; the bonus is `c_beta_t · σ_h(z)`,
    /// i.e. `β_t/√λ · σ_h` with `β_t = c_beta_t √λ`.
    pub fn fit(kernel: &GridKernel<T>, data: &[Vec<(usize, usize)>], lambda: T, c_beta_t: T) -> Result<Self> {
        if !(lambda > T::zero()) || !lambda.is_finite() {
            return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
        }
        let grid: Vec<usize> = (0..kernel.len()).collect();
        let prior: Vec<T> = kernel.gram().diagonal();
        let mut steps = Vec::with_capacity(data.len());
        let mut bonus = Vec::with_capacity(data.len());
        for visits in data {
            if visits.is_empty() {
                // No data: zero mean and prior standard deviation.
                steps.push(None);
                bonus.push(prior.iter().map(|&v| c_beta_t * v.max(T::zero()).sqrt()).collect());
                continue;
            }
            let anchors: Vec<usize> = visits.iter().map(|v| v.0).collect();
            let gram = oracle_gram(kernel, &anchors);
            let model = KrrModel::from_gram(anchors.clone(), &gram, None, lambda)?;
            let cross = oracle_cross(kernel, &grid, &anchors);
            let std = model.std_batch(&cross, &prior);
            bonus.push(std.into_iter().map(|s| c_beta_t * s).collect());
            steps.push(Some(StepRegression {
                model,
                cross,
                next_states: visits.iter().map(|v| v.1).collect(),
            }));
        }
        Ok(Self { steps, bonus, lambda })
    }

    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    /// Bonus on the grid at step `h` (0-based).
    pub fn bonus(&self, h: usize) -> &[T] {
        &self.bonus[h]
    }

    /// `log det(I + K_h/λ)` over the anchors of step `h`.
    pub fn information_gain(&self, h: usize) -> T {
        match &self.steps[h] {
            None => T::zero(),
            Some(s) => {
                let n = from_usize::<T>(s.model.len());
                (s.model.factor().log_det() - n * self.lambda.ln()).max(T::zero())
            }
        }
    }

    /// KRR estimate on the grid of `E[V(x') | z]` at step `h`.
    pub fn expected_next(&self, h: usize, next_value: &[T]) -> Result<Vec<T>> {
        match &self.steps[h] {
            None => Ok(vec![T::zero(); self.bonus[h].len()]),
            Some(s) => {
                let targets: Vec<T> = s.next_states.iter().map(|&x| next_value[x]).collect();
                let w = s.model.solve_weights(&targets)?;
                Ok(s.cross.matvec(&w))
            }
        }
    }
}

/// Backward recursion `Q̂_h = clip(r̂ + ε + μ_h[V̂_{h+1}] + b_h, ±β_clip(H-h+1))`
/// with `V̂_h(x) = max_a Q̂_h(x, a)` and `V̂_{H+1} = 0`.
///
/// The returned stages are ordered by step, `stages[0]` being step 1.
pub fn build_q_stages<T: Real>(
    geometry: &GridGeometry<T>,
    transitions: &TransitionEstimate<T>,
    reward: &[T],
    noise: &[T],
    beta_clip: T,
) -> Result<Vec<QStage<T>>> {
    let big_h = geometry.horizon();
    let n_sa = geometry.n_sa();
    if reward.len() != n_sa || noise.len() != n_sa {
        return Err(Error::DimensionMismatch {
            expected: n_sa,
            got: reward.len().min(noise.len()),
        });
    }
    if transitions.horizon() != big_h {
        return Err(Error::DimensionMismatch {
            expected: big_h,
            got: transitions.horizon(),
        });
    }
    if !(beta_clip >= T::zero()) {
        return Err(Error::invalid(format!("clip radius {beta_clip} must be nonnegative")));
    }
    let n_a = geometry.n_actions();
    let mut next_value = vec![T::zero(); geometry.n_states()];
    let mut stages = Vec::with_capacity(big_h);
    for h in (0..big_h).rev() {
        let radius = beta_clip * from_usize::<T>(big_h - h);
        let mean = if h + 1 == big_h {
            vec![T::zero(); n_sa]
        } else {
            transitions.expected_next(h, &next_value)?
        };
        let bonus = transitions.bonus(h);
        let table: Vec<T> = (0..n_sa)
            .map(|z| (reward[z] + noise[z] + mean[z] + bonus[z]).max(-radius).min(radius))
            .collect();
        next_value = table
            .chunks(n_a)
            .map(|row| row.iter().copied().fold(T::neg_infinity(), T::max))
            .collect();
        stages.push(QStage {
            step: h + 1,
            table,
            clip_radius: radius,
        });
    }
    stages.reverse();
    Ok(stages)
}

/// Greedy policy over the stages; ties go to the lowest action index.
pub fn greedy_policy<T: Real>(geometry: &GridGeometry<T>, stages: &[QStage<T>]) -> PolicyTable {
    let tables: Vec<Vec<T>> = stages.iter().map(|s| s.table.clone()).collect();
    greedy_from_tables(&tables, geometry.n_states(), geometry.n_actions())
}

/// Result of deploying both policies once.
#[derive(Debug, Clone)]
pub struct EpisodeOutcome<T> {
    pub record: PreferenceRecord<usize, T>,
    pub left_next: Vec<usize>,
    pub right_next: Vec<usize>,
    pub left_policy: PolicyTable,
    pub right_policy: PolicyTable,
}

/// Rolls out the greedy policies of both stage lists from `x1` and asks the
/// environment for a preference.
///
/// Both rollouts replay the same transition stream, so identical policies
/// produce identical trajectories.
pub fn run_episode_pair<T: Real, R: Rng + Clone, L: Rng + ?Sized>(
    mdp: &DiscretizedMdp<T>,
    stages_left: &[QStage<T>],
    stages_right: &[QStage<T>],
    x1: usize,
    transition_rng: &R,
    label_rng: &mut L,
) -> Result<EpisodeOutcome<T>> {
    let g = mdp.geometry();
    if x1 >= g.n_states() {
        return Err(Error::invalid(format!("initial state {x1} outside the grid")));
    }
    let left_policy = greedy_policy(g, stages_left);
    let right_policy = greedy_policy(g, stages_right);
    let (lz, left_next) = rollout(mdp, &left_policy, x1, &mut transition_rng.clone());
    let (rz, right_next) = rollout(mdp, &right_policy, x1, &mut transition_rng.clone());
    let record = compare(mdp, TrajectoryPair::new(lz, rz)?, label_rng)?;
    Ok(EpisodeOutcome {
        record,
        left_next,
        right_next,
        left_policy,
        right_policy,
    })
}

/// How the episode's initial state is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStateMode {
    Uniform,
    Corner,
}

/// Run-level settings.
#[derive(Debug, Clone, PartialEq)]
pub struct ProstoConfig<T> {
    pub episodes: usize,
    pub delta: T,
    pub mode: ScheduleMode,
    pub multipliers: Multipliers<T>,
    pub pool_transitions: bool,
    pub init_state: InitStateMode,
    pub klrr_tol: T,
    pub klrr_max_iters: usize,
    /// Certify `Cov ⪯ (β_r²/τ) K_grid` every episode.
    pub check_noise_domination: bool,
    /// Evaluate the trajectory-difference gain bound every episode.
    pub check_gain_domination: bool,
}

impl<T: Real> ProstoConfig<T> {
    pub fn new(episodes: usize) -> Self {
        Self {
            episodes,
            delta: lit(0.01),
            mode: ScheduleMode::Practical,
            multipliers: Multipliers::practical(),
            pool_transitions: true,
            init_state: InitStateMode::Uniform,
            klrr_tol: lit(KLRR_TOL),
            klrr_max_iters: KLRR_MAX_ITERS,
            check_noise_domination: true,
            check_gain_domination: true,
        }
    }
}

/// What the learner computed before acting in one episode.
#[derive(Debug, Clone)]
pub struct EpisodePlan<T> {
    pub stages_left: Vec<QStage<T>>,
    pub stages_right: Vec<QStage<T>>,
    pub reward: DualRewardEstimate<usize, T>,
    /// `θ̂ᵀφ(z)` on the grid.
    pub reward_grid: Vec<T>,
    pub beta_r: T,
    pub beta_clip: T,
    pub gamma_traj: T,
    pub gamma_step1: T,
    pub noise_var_max: T,
    pub noise_clamped: T,
    pub noise_dominated: Option<bool>,
    pub gain_margin: Option<T>,
}

/// Learner state. Holds only the kernel on the grid and what was observed.
pub struct ProstoAgent<T> {
    kernel: GridKernel<T>,
    geometry: GridGeometry<T>,
    config: ProstoConfig<T>,
    schedule: RegularizerSchedule<T>,
    nu: T,
    history: EpisodeHistory<T>,
    /// Column `i`: `⟨φ(z), φ̄_i⟩` over the grid.
    cross_cols: Vec<Vec<T>>,
    kbar: Matrix<T>,
    warm: Vec<T>,
}

impl<T: Real> ProstoAgent<T> {
    pub fn new(spec: KernelSpec<T>, geometry: GridGeometry<T>, config: ProstoConfig<T>) -> Result<Self> {
        if spec.dim() != geometry.point_dim() {
            return Err(Error::DimensionMismatch {
                expected: geometry.point_dim(),
                got: spec.dim(),
            });
        }
        if !(config.delta > T::zero() && config.delta < T::one()) {
            return Err(Error::invalid(format!("delta {} outside (0, 1)", config.delta)));
        }
        let beta_p = match eigen_decay_beta(&spec)? {
            EigenDecay::Polynomial(b) => b,
            EigenDecay::SuperPolynomial => {
                return Err(Error::invalid(
                    "the regularizer schedule needs a kernel with polynomial eigen-decay",
                ))
            }
        };
        let nu = match spec.family() {
            KernelFamily::Matern(s) => lit(s.nu()),
            KernelFamily::SquaredExponential => T::one(),
        };
        let schedule = schedule(
            from_usize(config.episodes),
            geometry.horizon(),
            beta_p,
            kappa_z(geometry.horizon()),
            config.multipliers,
            config.mode,
        )?;
        let kernel = GridKernel::new(spec, geometry.sa_points().to_vec())?;
        Ok(Self {
            kernel,
            history: EpisodeHistory::new(geometry.horizon()),
            geometry,
            config,
            schedule,
            nu,
            cross_cols: Vec::new(),
            kbar: Matrix::zeros(0, 0),
            warm: Vec::new(),
        })
    }

    pub fn schedule(&self) -> &RegularizerSchedule<T> {
        &self.schedule
    }

    pub fn history(&self) -> &EpisodeHistory<T> {
        &self.history
    }

    pub fn geometry(&self) -> &GridGeometry<T> {
        &self.geometry
    }

    fn cross_matrix(&self) -> Matrix<T> {
        let n = self.cross_cols.len();
        Matrix::from_fn(self.kernel.len(), n, |g, i| self.cross_cols[i][g])
    }

    /// Reward refit, noise draws and value iteration for episode `episode`
    /// (1-based), using random streams derived from `seed`.
    pub fn plan(&mut self, seed: u64, episode: usize) -> Result<EpisodePlan<T>> {
        let sched = self.schedule;
        let horizon = self.geometry.horizon();
        let pairs: Vec<TrajectoryPair<usize>> = self.history.records.iter().map(|r| r.pair.clone()).collect();
        let labels = self.history.records.iter().map(|r| r.label);
        let reward = klrr_fit_gram(
            pairs,
            &self.kbar,
            labels,
            sched.tau,
            self.config.klrr_tol,
            self.config.klrr_max_iters,
            Some(&self.warm),
        )?;
        self.warm = reward.alpha.clone();

        let cross = self.cross_matrix();
        let reward_grid = if reward.alpha.is_empty() {
            vec![T::zero(); self.kernel.len()]
        } else {
            cross.matvec(&reward.alpha)
        };

        let gamma_traj = information_gain(&self.kbar, sched.tau)?;
        let beta_r = beta_reward_from_gain(self.config.delta, horizon, sched.tau, gamma_traj, sched.multipliers.c_r);
        let cov = posterior_noise_covariance(self.kernel.gram(), &cross, &self.kbar, sched.tau, beta_r)?;
        let noise_var_max = cov.diagonal().into_iter().fold(T::zero(), T::max);
        let noise_dominated = self
            .config
            .check_noise_domination
            .then(|| noise_is_dominated(self.kernel.gram(), &cov, sched.tau, beta_r));
        let sampler = NoiseSampler::new(&cov)?;
        drop(cov);
        let ep = episode as u64;
        let noise_left = sampler.draw(&mut stream_rng(seed, Stream::NoiseLeft, ep));
        let noise_right = sampler.draw(&mut stream_rng(seed, Stream::NoiseRight, ep));

        let clip = beta_clip(
            self.config.delta,
            beta_r,
            sched.tau,
            self.kernel.spec().dim(),
            self.nu,
            from_usize(self.config.episodes),
        )?;
        let c_beta_t = sched.multipliers.c_beta_t;
        let fit = |side| {
            let data: Vec<_> = (0..horizon).map(|h| self.history.step_data(h, side)).collect();
            TransitionEstimate::fit(&self.kernel, &data, sched.lambda, c_beta_t)
        };
        let (stages_left, stages_right, gamma_step1) = if self.config.pool_transitions {
            let est = fit(Side::Pooled)?;
            let l = build_q_stages(&self.geometry, &est, &reward_grid, &noise_left, clip)?;
            let r = build_q_stages(&self.geometry, &est, &reward_grid, &noise_right, clip)?;
            (l, r, est.information_gain(0))
        } else {
            let el = fit(Side::Left)?;
            let l = build_q_stages(&self.geometry, &el, &reward_grid, &noise_left, clip)?;
            drop(el);
            let er = fit(Side::Right)?;
            let r = build_q_stages(&self.geometry, &er, &reward_grid, &noise_right, clip)?;
            // Reported on the pooled step-1 anchors in either mode.
            let pooled: Vec<usize> = self.history.step_data(0, Side::Pooled).iter().map(|v| v.0).collect();
            let g1 = information_gain(&oracle_gram(&self.kernel, &pooled), sched.lambda)?;
            (l, r, g1)
        };

        let gain_margin = if self.config.check_gain_domination {
            Some(
                check_gain_domination_gram(
                    &self.kernel,
                    &self.kbar,
                    self.history.records.iter().map(|r| &r.pair),
                    horizon,
                    sched.tau,
                )?
                .margin,
            )
        } else {
            None
        };

        Ok(EpisodePlan {
            stages_left,
            stages_right,
            reward,
            reward_grid,
            beta_r,
            beta_clip: clip,
            gamma_traj,
            gamma_step1,
            noise_var_max,
            noise_clamped: sampler.clamped,
            noise_dominated,
            gain_margin,
        })
    }

    /// Records one comparison and the observed transitions.
    pub fn observe(
        &mut self,
        record: PreferenceRecord<usize, T>,
        left_next: &[usize],
        right_next: &[usize],
    ) -> Result<()> {
        let col: Vec<T> = (0..self.kernel.len())
            .map(|g| {
                let row = self.kernel.row(g);
                record
                    .pair
                    .left()
                    .iter()
                    .zip(record.pair.right())
                    .fold(T::zero(), |acc, (&a, &b)| acc + row[a] - row[b])
            })
            .collect();
        self.history.push(record, left_next, right_next)?;
        let n = self.cross_cols.len();
        let pairs = &self.history.records;
        let pair_dot = |c: &[T], p: &TrajectoryPair<usize>| {
            p.left()
                .iter()
                .zip(p.right())
                .fold(T::zero(), |acc, (&a, &b)| acc + c[a] - c[b])
        };
        let mut kbar = Matrix::zeros(n + 1, n + 1);
        for i in 0..n {
            kbar.row_mut(i)[..n].copy_from_slice(&self.kbar.row(i)[..n]);
        }
        for i in 0..=n {
            let v = pair_dot(&col, &pairs[i].pair);
            kbar[(i, n)] = v;
            kbar[(n, i)] = v;
        }
        self.kbar = kbar;
        self.cross_cols.push(col);
        Ok(())
    }
}

fn initial_state(mode: InitStateMode, n_states: usize, seed: u64, episode: usize) -> usize {
    match mode {
        InitStateMode::Corner => 0,
        InitStateMode::Uniform => stream_rng(seed, Stream::InitialState, episode as u64).gen_range(0..n_states),
    }
}

/// Runs the full episode loop on `mdp` and scores every episode against the
/// exact optimum. Errors carry the failing episode index.
pub fn run_prosto<T: Real>(
    mdp: &DiscretizedMdp<T>,
    spec: KernelSpec<T>,
    config: &ProstoConfig<T>,
    seed: u64,
) -> Result<RegretTrace<T>> {
    run_prosto_with(mdp, spec, config, seed, |_, _| {})
}

/// [`run_prosto`] with a callback invoked after each episode's plan.
pub fn run_prosto_with<T: Real>(
    mdp: &DiscretizedMdp<T>,
    spec: KernelSpec<T>,
    config: &ProstoConfig<T>,
    seed: u64,
    mut inspect: impl FnMut(usize, &EpisodePlan<T>),
) -> Result<RegretTrace<T>> {
    let optimal = solve_optimal_values(mdp);
    let mut agent = ProstoAgent::new(spec, mdp.geometry().clone(), config.clone())?;
    let n_states = mdp.geometry().n_states();
    let mut trace = RegretTrace::default();
    for k in 1..=config.episodes {
        let mut step = |agent: &mut ProstoAgent<T>| -> Result<EpisodeRecord<T>> {
            let plan = agent.plan(seed, k)?;
            inspect(k, &plan);
            let x1 = initial_state(config.init_state, n_states, seed, k);
            let transition_rng: ChaCha8Rng = stream_rng(seed, Stream::Transitions, k as u64);
            let mut label_rng = stream_rng(seed, Stream::Labels, k as u64);
            let out = run_episode_pair(
                mdp,
                &plan.stages_left,
                &plan.stages_right,
                x1,
                &transition_rng,
                &mut label_rng,
            )?;
            let vl = evaluate_policy(mdp, &out.left_policy)?.initial(x1);
            let vr = evaluate_policy(mdp, &out.right_policy)?.initial(x1);
            let instant = optimal.initial(x1) - (vl + vr) * lit(0.5);
            let rec = EpisodeRecord {
                episode: k,
                instant_regret: instant,
                cum_regret: T::zero(),
                avg_regret: T::zero(),
                beta_r: plan.beta_r,
                gamma_traj: plan.gamma_traj,
                gamma_step1: plan.gamma_step1,
                noise_var_max: plan.noise_var_max,
                beta_clip: plan.beta_clip,
                klrr_iters: plan.reward.newton_iters,
                klrr_converged: plan.reward.converged,
                klrr_grad_norm: plan.reward.final_grad_norm,
                noise_dominated: plan.noise_dominated,
                noise_clamped: plan.noise_clamped,
                gain_margin: plan.gain_margin,
                initial_state: x1,
                label: out.record.label,
                true_prob: out.record.true_prob,
            };
            agent.observe(out.record, &out.left_next, &out.right_next)?;
            Ok(rec)
        };
        let rec = step(&mut agent).map_err(|e| e.at_episode(k))?;
        log::debug!("episode {k}: regret {}", to_f64(rec.instant_regret));
        trace.push(rec);
    }
    Ok(trace)
}
