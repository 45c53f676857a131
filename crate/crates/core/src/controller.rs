//! Dynamic penalty by projected online gradient descent.
//!
//! The protocol only sees whether the option was exercised in each round
//! (`y_t ∈ {0,1}`). The update `p ← Π(p - η_t (α - y_t))` raises the
//! penalty after an exercise and relaxes it otherwise. Exercise
//! probabilities `q_t(p)` exist only on the environment side and are used
//! for regret accounting, never by the controller.

use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};
use crate::market::seeded_rng;
use crate::special::norm_cdf;

/// Rounds per day at 12 s slots; the fixed step `1/√7200` uses it.
pub const SLOTS_PER_DAY: u64 = 7200;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "rule", rename_all = "snake_case"))]
pub enum StepRule {
    /// `η_t = scale / √t`.
    Decaying { scale: f64 },
    /// Constant `η`.
    Fixed { eta: f64 },
}

impl StepRule {
    pub fn daily() -> Self {
        StepRule::Fixed { eta: 1.0 / libm::sqrt(SLOTS_PER_DAY as f64) }
    }

    pub fn eta(&self, t: u64) -> f64 {
        match *self {
            StepRule::Decaying { scale } => scale / libm::sqrt(t.max(1) as f64),
            StepRule::Fixed { eta } => eta,
        }
    }
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::Decaying { scale: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ControllerConfig {
    pub target_alpha: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub step_rule: StepRule,
    /// Penalty at which exercise is impossible; iterates are projected
    /// onto `[0, p_max + α]`. May be infinite.
    pub p_max: f64,
    #[cfg_attr(feature = "serde", serde(default))]
    pub initial_p: f64,
}

impl ControllerConfig {
    pub fn new(target_alpha: f64, p_max: f64) -> Self {
        ControllerConfig { target_alpha, step_rule: StepRule::default(), p_max, initial_p: 0.0 }
    }

    pub fn with_step_rule(mut self, rule: StepRule) -> Self {
        self.step_rule = rule;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.target_alpha > 0.0 && self.target_alpha < 1.0) {
            return Err(Error::config("target_alpha", "must lie in (0, 1)"));
        }
        let step_ok = match self.step_rule {
            StepRule::Decaying { scale } => scale > 0.0 && scale.is_finite(),
            StepRule::Fixed { eta } => eta > 0.0 && eta.is_finite(),
        };
        if !step_ok {
            return Err(Error::config("step_rule", "step constant must be finite and > 0"));
        }
        if !(self.p_max > 0.0) {
            return Err(Error::config("p_max", "must be > 0"));
        }
        if !(self.initial_p >= 0.0 && self.initial_p.is_finite()) {
            return Err(Error::config("initial_p", "must be finite and >= 0"));
        }
        Ok(())
    }

    pub fn upper_bound(&self) -> f64 {
        self.p_max + self.target_alpha
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ControllerState {
    /// Index of the next round to play, starting at 1.
    pub t: u64,
    pub penalty: f64,
    /// `(p_t, y_t)` for every round played so far.
    pub history: Vec<(f64, bool)>,
}

impl ControllerState {
    pub fn new(config: &ControllerConfig) -> Self {
        ControllerState {
            t: 1,
            penalty: config.initial_p.min(config.upper_bound()),
            history: Vec::new(),
        }
    }

    /// Applies one round's outcome in place.
    pub fn observe(&mut self, exercised: bool, config: &ControllerConfig) {
        let y = if exercised { 1.0 } else { 0.0 };
        let gradient = config.target_alpha - y;
        let eta = config.step_rule.eta(self.t);
        self.history.push((self.penalty, exercised));
        self.penalty = (self.penalty - eta * gradient).clamp(0.0, config.upper_bound());
        self.t += 1;
    }
}

/// One controller update: `p_{t+1} = Π(p_t - η_t (α - y_t))`.
pub fn step(mut state: ControllerState, exercised: bool, config: &ControllerConfig) -> ControllerState {
    state.observe(exercised, config);
    state
}

/// Exercise-probability model faced by the controller.
pub trait Environment {
    /// `q_t(p)`, non-increasing in `p`.
    fn exercise_probability(&self, t: u64, penalty: f64) -> f64;

    /// Penalty at which exercise is impossible.
    fn penalty_ceiling(&self) -> f64;

    /// Rounds sharing a segment id share `q_t`; lets the report cache `p*_t`.
    fn segment(&self, t: u64) -> u64 {
        t
    }

    /// Realized outcome given a uniform draw; must not depend on anything
    /// but the past, `p` and `u`.
    fn outcome(&mut self, t: u64, penalty: f64, uniform: f64) -> bool {
        uniform < self.exercise_probability(t, penalty)
    }
}

/// `q(p) = Φ((center - p) / scale)` below the ceiling and 0 at or above it.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GaussianThreshold {
    pub center: f64,
    pub scale: f64,
    pub ceiling: f64,
}

impl GaussianThreshold {
    pub fn q(&self, penalty: f64) -> f64 {
        if penalty >= self.ceiling {
            0.0
        } else {
            norm_cdf((self.center - penalty) / self.scale)
        }
    }
}

impl Environment for GaussianThreshold {
    fn exercise_probability(&self, _t: u64, penalty: f64) -> f64 {
        self.q(penalty)
    }

    fn penalty_ceiling(&self) -> f64 {
        self.ceiling
    }

    fn segment(&self, _t: u64) -> u64 {
        0
    }
}

/// Gaussian thresholds whose centre shifts at given rounds.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PiecewiseGaussian {
    /// `(first_round, center)` sorted by round; the first entry starts at 1.
    pub shifts: Vec<(u64, f64)>,
    pub scale: f64,
    pub ceiling: f64,
}

impl PiecewiseGaussian {
    /// `levels` equally spaced over `rounds`.
    pub fn evenly_spaced(levels: &[f64], rounds: u64, scale: f64, ceiling: f64) -> Self {
        let len = rounds / levels.len().max(1) as u64;
        let shifts = levels
            .iter()
            .enumerate()
            .map(|(i, &c)| (1 + i as u64 * len, c))
            .collect();
        PiecewiseGaussian { shifts, scale, ceiling }
    }

    fn segment_index(&self, t: u64) -> usize {
        self.shifts.partition_point(|&(start, _)| start <= t).saturating_sub(1)
    }
}

impl Environment for PiecewiseGaussian {
    fn exercise_probability(&self, t: u64, penalty: f64) -> f64 {
        let center = self.shifts[self.segment_index(t)].1;
        GaussianThreshold { center, scale: self.scale, ceiling: self.ceiling }.q(penalty)
    }

    fn penalty_ceiling(&self) -> f64 {
        self.ceiling
    }

    fn segment(&self, t: u64) -> u64 {
        self.segment_index(t) as u64
    }
}

const ORACLE_TOL: f64 = 1e-9;
const MONOTONE_GRID: usize = 256;
const MONOTONE_SLACK: f64 = 1e-12;

/// Smallest `p` with `q(p) <= α`, by bisection to `1e-9`.
///
/// `q` must be non-increasing on `[0, p_max]` with `q(p_max) <= α`;
/// violations are reported rather than silently bracketed.
pub fn oracle_policy<F: Fn(f64) -> f64>(q: F, alpha: f64, p_max: f64) -> Result<f64> {
    if !(p_max > 0.0 && p_max.is_finite()) {
        return Err(Error::ModelViolation("p_max must be finite and > 0".into()));
    }
    let mut prev = q(0.0);
    for i in 1..=MONOTONE_GRID {
        let p = p_max * i as f64 / MONOTONE_GRID as f64;
        let v = q(p);
        if v > prev + MONOTONE_SLACK {
            return Err(Error::ModelViolation(alloc::format!("q increases near p = {p}")));
        }
        prev = v;
    }
    if q(p_max) > alpha {
        return Err(Error::ModelViolation("q(p_max) exceeds the target".into()));
    }
    if q(0.0) <= alpha {
        return Ok(0.0);
    }
    // q(lo) > α >= q(hi)
    let (mut lo, mut hi) = (0.0, p_max);
    while hi - lo > ORACLE_TOL {
        let mid = 0.5 * (lo + hi);
        if q(mid) <= alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// One round of a controlled run.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TraceRow {
    pub t: u64,
    pub penalty: f64,
    pub exercised: bool,
    /// `q_t(p_t)`, when the environment exposes it.
    pub exercise_prob: Option<f64>,
    pub oracle_penalty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RegretReport {
    pub rounds: u64,
    /// `R_T = Σ (p_t - p*_t)`; unavailable without `q_t`.
    pub cost_regret: Option<f64>,
    /// `C_T = Σ [q_t(p_t) - α]_+`.
    pub constraint_regret: Option<f64>,
    /// `LC_T = [Σ (y_t - α)]_+`.
    pub long_run_violation: f64,
    /// `P*_T = 1 + Σ |p*_{t+1} - p*_t|`.
    pub path_length: Option<f64>,
    pub avg_penalty: f64,
    pub avg_exercise_rate: f64,
    pub avg_oracle_penalty: Option<f64>,
    /// `|Σ y_t - Σ q_t(p_t)|`, the martingale deviation.
    pub martingale_gap: Option<f64>,
}

impl RegretReport {
    /// Azuma-Hoeffding radius `√(2T log(2/δ))`.
    pub fn azuma_radius(rounds: u64, delta: f64) -> f64 {
        libm::sqrt(2.0 * rounds as f64 * libm::log(2.0 / delta))
    }
}

#[derive(Default)]
struct Accumulator {
    rounds: u64,
    sum_p: f64,
    sum_y: f64,
    sum_q: f64,
    sum_gap: f64,
    sum_violation: f64,
    sum_oracle: f64,
    path: f64,
    last_oracle: Option<f64>,
    has_q: bool,
}

impl Accumulator {
    fn push(&mut self, row: &TraceRow, alpha: f64) {
        self.rounds += 1;
        self.sum_p += row.penalty;
        if row.exercised {
            self.sum_y += 1.0;
        }
        if let (Some(q), Some(p_star)) = (row.exercise_prob, row.oracle_penalty) {
            self.has_q = true;
            self.sum_q += q;
            self.sum_violation += (q - alpha).max(0.0);
            self.sum_gap += row.penalty - p_star;
            self.sum_oracle += p_star;
            if let Some(prev) = self.last_oracle {
                self.path += (p_star - prev).abs();
            }
            self.last_oracle = Some(p_star);
        }
    }

    fn finish(&self, alpha: f64) -> RegretReport {
        let n = self.rounds.max(1) as f64;
        let known = |v: f64| if self.has_q { Some(v) } else { None };
        RegretReport {
            rounds: self.rounds,
            cost_regret: known(self.sum_gap),
            constraint_regret: known(self.sum_violation),
            long_run_violation: (self.sum_y - alpha * self.rounds as f64).max(0.0),
            path_length: known(1.0 + self.path),
            avg_penalty: self.sum_p / n,
            avg_exercise_rate: self.sum_y / n,
            avg_oracle_penalty: known(self.sum_oracle / n),
            martingale_gap: known((self.sum_y - self.sum_q).abs()),
        }
    }
}

/// Runs the controller for `rounds` rounds against `env`, calling `sink`
/// with every trace row, and returns the regret report.
pub fn run_controlled_with<E: Environment, S: FnMut(&TraceRow)>(
    env: &mut E,
    config: &ControllerConfig,
    rounds: u64,
    seed: u64,
    mut sink: S,
) -> Result<RegretReport> {
    config.validate()?;
    let mut rng = seeded_rng(seed);
    let mut state = ControllerState::new(config);
    let mut acc = Accumulator::default();
    let mut cached: Option<(u64, f64)> = None;
    let ceiling = env.penalty_ceiling();
    for t in 1..=rounds {
        let p = state.penalty;
        let segment = env.segment(t);
        let p_star = match cached {
            Some((s, v)) if s == segment => v,
            _ => {
                let env_ref = &*env;
                let v = oracle_policy(|x| env_ref.exercise_probability(t, x), config.target_alpha, ceiling)?;
                cached = Some((segment, v));
                v
            }
        };
        let q = env.exercise_probability(t, p);
        let u: f64 = rng.random();
        let exercised = env.outcome(t, p, u);
        let row = TraceRow { t, penalty: p, exercised, exercise_prob: Some(q), oracle_penalty: Some(p_star) };
        acc.push(&row, config.target_alpha);
        sink(&row);
        state.observe(exercised, config);
        state.history.clear();
    }
    Ok(acc.finish(config.target_alpha))
}

/// [`run_controlled_with`] collecting the full trace.
pub fn run_controlled<E: Environment>(
    env: &mut E,
    config: &ControllerConfig,
    rounds: u64,
    seed: u64,
) -> Result<(Vec<TraceRow>, RegretReport)> {
    let mut trace = Vec::with_capacity(rounds as usize);
    let report = run_controlled_with(env, config, rounds, seed, |row| trace.push(*row))?;
    Ok((trace, report))
}

/// Drives the controller from realized outcomes only (e.g. replayed
/// blocks); `outcome(t, p)` reports whether round `t` is exercised under
/// penalty `p`. Regret terms needing `q_t` are reported as unavailable.
pub fn run_feedback<F: FnMut(u64, f64) -> bool>(
    mut outcome: F,
    config: &ControllerConfig,
    rounds: u64,
) -> Result<(Vec<TraceRow>, RegretReport)> {
    config.validate()?;
    let mut state = ControllerState::new(config);
    let mut acc = Accumulator::default();
    let mut trace = Vec::with_capacity(rounds as usize);
    for t in 1..=rounds {
        let p = state.penalty;
        let exercised = outcome(t, p);
        let row = TraceRow { t, penalty: p, exercised, exercise_prob: None, oracle_penalty: None };
        acc.push(&row, config.target_alpha);
        trace.push(row);
        state.observe(exercised, config);
        state.history.clear();
    }
    Ok((trace, acc.finish(config.target_alpha)))
}
