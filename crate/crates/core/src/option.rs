//! Sizing the DEX position a builder holds while it can still withhold.
//!
//! The builder commits to a block worth `μ` plus a DEX purchase of `y`
//! numéraire, then sees the CEX return `r` at the end of the window.
//! Its payoff is `max(-p, Π0(y) + r·y)`: withholding costs the penalty
//! `p`, revealing books the marked-to-market block value. A tie at
//! exactly `-p` reveals.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::market::{seeded_rng, PoolState, ReturnModel, Side};
use crate::optimize::maximize;
use crate::special::{norm_cdf, norm_pdf};

pub const DEFAULT_TIME_SCALING: f64 = 0.5;

/// Search cap: the position at which the marginal DEX price reaches 3·P0.
const CAP_PRICE_RATIO: f64 = 3.0;
const SCAN_POINTS: usize = 64;
const GOLDEN_TOL: f64 = 1e-11;
const GOLDEN_MAX_ITER: usize = 300;
const POLISH_MAX_ITER: usize = 100;
const FOC_TOL: f64 = 1e-8;

#[cfg(feature = "serde")]
fn default_time_scaling() -> f64 {
    DEFAULT_TIME_SCALING
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct BuilderProblem {
    /// Block value net of the DEX position (`μ`), any sign.
    pub atomic_mev: f64,
    pub pool: PoolState,
    /// One-second return distribution.
    pub returns: ReturnModel,
    /// Option window `τ` in seconds.
    pub window: f64,
    /// Cost of withholding, `p >= 0`.
    #[cfg_attr(feature = "serde", serde(default))]
    pub penalty: f64,
    /// Exponent `s` in `σ_eff = σ · τ^s`, within `[0.5, 1]`.
    #[cfg_attr(feature = "serde", serde(default = "default_time_scaling"))]
    pub time_scaling: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum SolveMethod {
    Deterministic,
    ClosedForm,
    MonteCarlo,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SolveDiagnostics {
    pub method: SolveMethod,
    pub evaluations: usize,
    pub polish_steps: usize,
    /// `|dV/dy|` at the returned position (dimensionless).
    pub foc_residual: f64,
    pub at_bound: bool,
    /// Standard error of `value_v`, Monte Carlo only.
    pub standard_error: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct OptionDecision {
    /// Optimal position `y*` in numéraire (buy coordinates).
    pub optimal_y: f64,
    /// `V* = E[max(-p, Π_τ(y*))]`.
    pub value_v: f64,
    /// `P* = Pr[Π_τ(y*) < -p]`.
    pub exercise_prob: f64,
    /// Best value available without optionality, `max(-p, max_y Π0(y))`.
    pub no_option_value: f64,
    pub net_option_value: f64,
    /// Standardized exercise threshold `-(Π0(y*) + p) / (σ_eff y*)`; `P* = Φ(z*)`
    /// under normal returns. Absent without volatility or position.
    pub z_star: Option<f64>,
    /// `(P'_DEX(x*) - P0) / P0`.
    pub post_trade_overshoot: f64,
    pub diagnostics: SolveDiagnostics,
}

/// Envelope identities at the optimum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Envelope {
    /// `∂V*/∂μ = 1 - P*`.
    pub d_value_d_mev: f64,
    /// `∂V*/∂p = -P*`.
    pub d_value_d_penalty: f64,
}

impl BuilderProblem {
    pub fn new(atomic_mev: f64, pool: PoolState, returns: ReturnModel, window: f64) -> Self {
        BuilderProblem {
            atomic_mev,
            pool,
            returns,
            window,
            penalty: 0.0,
            time_scaling: DEFAULT_TIME_SCALING,
        }
    }

    pub fn with_penalty(mut self, penalty: f64) -> Self {
        self.penalty = penalty;
        self
    }

    pub fn with_time_scaling(mut self, s: f64) -> Self {
        self.time_scaling = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.atomic_mev.is_finite() {
            return Err(Error::config("atomic_mev", "must be finite"));
        }
        if !(self.penalty >= 0.0 && self.penalty.is_finite()) {
            return Err(Error::config("penalty", "must be finite and >= 0"));
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return Err(Error::config("window", "must be finite and > 0"));
        }
        if !(0.5..=1.0).contains(&self.time_scaling) {
            return Err(Error::config("time_scaling", "must lie in [0.5, 1]"));
        }
        self.pool.validate().map_err(|e| e.within("pool"))?;
        self.returns.validate().map_err(|e| e.within("returns"))?;
        Ok(())
    }

    /// Multiplier applied to one-second returns over the window, `τ^s`.
    pub fn return_scale(&self) -> f64 {
        libm::pow(self.window, self.time_scaling)
    }

    /// Window return volatility `σ_eff`.
    pub fn sigma_eff(&self) -> f64 {
        self.returns.std_dev() * self.return_scale()
    }

    /// Largest position searched, in numéraire.
    pub fn position_cap(&self) -> f64 {
        self.pool.size_at_marginal_ratio(CAP_PRICE_RATIO) * self.pool.cex_price
    }

    /// `Π0(y) = μ + y - P_DEX(y / P0)`.
    pub fn profit_at_commit(&self, y: f64) -> Result<f64> {
        if y.is_nan() || y < 0.0 {
            return Err(Error::domain("position must be >= 0"));
        }
        let cost = self.pool.dex_cost(y / self.pool.cex_price)?;
        Ok(self.atomic_mev + y - cost)
    }

    fn pi0(&self, y: f64) -> f64 {
        self.atomic_mev + y - self.pool.cost_unchecked(y / self.pool.cex_price)
    }

    fn pi0_slope(&self, y: f64) -> f64 {
        1.0 - self.pool.marginal_unchecked(y / self.pool.cex_price) / self.pool.cex_price
    }

    fn pi0_curvature(&self, y: f64) -> f64 {
        let p0 = self.pool.cex_price;
        -self.pool.curvature_unchecked(y / p0) / (p0 * p0)
    }

    /// Payoff with no position: reveal `μ` or withhold at cost `p`.
    fn empty_position_value(&self) -> f64 {
        self.atomic_mev.max(-self.penalty)
    }

    /// Exact `E[max(-p, Π_τ(y))]` under normal returns.
    pub fn objective_closed_form(&self, y: f64) -> Result<f64> {
        if !self.returns.is_normal() {
            return Err(Error::UnsupportedModel("closed form requires normal returns"));
        }
        let pi0 = self.profit_at_commit(y)?;
        Ok(self.closed_form_at(y, pi0, self.sigma_eff()))
    }

    fn closed_form_at(&self, y: f64, pi0: f64, sigma: f64) -> f64 {
        if y == 0.0 {
            return self.empty_position_value();
        }
        let a = pi0 + self.penalty;
        let b = sigma * y;
        if b == 0.0 {
            return pi0.max(-self.penalty);
        }
        let z = a / b;
        a * norm_cdf(z) + b * norm_pdf(z) - self.penalty
    }

    /// `dV/dy` of the closed-form objective, and its derivative.
    fn closed_form_slope(&self, y: f64, sigma: f64) -> (f64, f64) {
        let a = self.pi0(y) + self.penalty;
        let z = a / (sigma * y);
        let slope = self.pi0_slope(y);
        let g = slope * norm_cdf(z) + sigma * norm_pdf(z);
        let dz_num = slope - sigma * z;
        let dg = self.pi0_curvature(y) * norm_cdf(z) + norm_pdf(z) * dz_num * dz_num / (sigma * y);
        (g, dg)
    }

    /// Unconstrained argmax of `Π0`, clamped to the search cap.
    fn commit_optimum(&self) -> f64 {
        (self.pool.size_at_marginal_ratio(1.0) * self.pool.cex_price).min(self.position_cap())
    }

    fn no_option_value(&self) -> f64 {
        self.pi0(self.commit_optimum()).max(-self.penalty)
    }

    fn decision(
        &self,
        y: f64,
        value_v: f64,
        exercise_prob: f64,
        z_star: Option<f64>,
        diagnostics: SolveDiagnostics,
    ) -> OptionDecision {
        let no_option_value = self.no_option_value();
        let p0 = self.pool.cex_price;
        OptionDecision {
            optimal_y: y,
            value_v,
            exercise_prob,
            no_option_value,
            net_option_value: value_v - no_option_value,
            z_star,
            post_trade_overshoot: (self.pool.marginal_unchecked(y / p0) - p0) / p0,
            diagnostics,
        }
    }

    fn solve_deterministic(&self) -> OptionDecision {
        let y = self.commit_optimum();
        let pi0 = self.pi0(y);
        let exercised = pi0 < -self.penalty;
        let cap = self.position_cap();
        let at_bound = y <= 0.0 || y >= cap;
        let foc_residual = if at_bound { 0.0 } else { self.pi0_slope(y).abs() };
        self.decision(
            y,
            pi0.max(-self.penalty),
            if exercised { 1.0 } else { 0.0 },
            None,
            SolveDiagnostics {
                method: SolveMethod::Deterministic,
                evaluations: 1,
                polish_steps: 0,
                foc_residual,
                at_bound,
                standard_error: None,
            },
        )
    }

    /// Closed-form optimum under normal returns.
    ///
    /// Golden-section search over `[0, cap]` followed by a safeguarded
    /// Newton polish on `dV/dy`. An interior optimum whose stationarity
    /// residual stays above `1e-8` is reported as non-convergence.
    pub fn solve(&self) -> Result<OptionDecision> {
        self.validate()?;
        if !self.returns.is_normal() {
            return Err(Error::UnsupportedModel("closed-form solve requires normal returns; use solve_mc"));
        }
        let sigma = self.sigma_eff();
        if sigma == 0.0 {
            return Ok(self.solve_deterministic());
        }
        let cap = self.position_cap();
        let found = maximize(
            |y| self.closed_form_at(y, self.pi0(y), sigma),
            0.0,
            cap,
            SCAN_POINTS,
            GOLDEN_TOL,
            GOLDEN_MAX_ITER,
        )?;
        let (mut y, mut polish_steps) = (found.x, 0);
        let mut at_bound = false;

        let lo = found.lower.max(cap * 1e-15);
        let hi = found.upper;
        let g_lo = self.closed_form_slope(lo, sigma).0;
        let g_hi = self.closed_form_slope(hi, sigma).0;
        if g_lo > 0.0 && g_hi < 0.0 {
            let (root, steps) = self.polish(lo, hi, found.x, sigma);
            let polished = self.closed_form_at(root, self.pi0(root), sigma);
            if polished >= found.value - 1e-12 * (1.0 + found.value.abs()) {
                y = root;
            }
            polish_steps = steps;
        } else if found.x <= cap * 1e-12 || found.x >= cap * (1.0 - 1e-9) {
            at_bound = true;
        }

        let residual = if y > 0.0 { self.closed_form_slope(y, sigma).0.abs() } else { 0.0 };
        if !at_bound && residual > FOC_TOL {
            return Err(Error::NonConvergence { last_iterate: y, residual });
        }

        let (value_v, exercise_prob, z_star) = if y <= 0.0 {
            let v = self.empty_position_value();
            (v, if self.atomic_mev < -self.penalty { 1.0 } else { 0.0 }, None)
        } else {
            let pi0 = self.pi0(y);
            let z = -(pi0 + self.penalty) / (sigma * y);
            (self.closed_form_at(y, pi0, sigma), norm_cdf(z), Some(z))
        };
        Ok(self.decision(
            y,
            value_v,
            exercise_prob,
            z_star,
            SolveDiagnostics {
                method: SolveMethod::ClosedForm,
                evaluations: found.evaluations + 2 + polish_steps,
                polish_steps,
                foc_residual: if at_bound { 0.0 } else { residual },
                at_bound,
                standard_error: None,
            },
        ))
    }

    /// Newton on `dV/dy` kept inside a shrinking sign-change bracket.
    fn polish(&self, mut lo: f64, mut hi: f64, start: f64, sigma: f64) -> (f64, usize) {
        let mut y = start.clamp(lo, hi);
        for i in 0..POLISH_MAX_ITER {
            let (g, dg) = self.closed_form_slope(y, sigma);
            if g == 0.0 {
                return (y, i);
            }
            if g > 0.0 {
                lo = y;
            } else {
                hi = y;
            }
            let newton = y - g / dg;
            let next = if dg < 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
            if (next - y).abs() <= 1e-15 * (1.0 + y.abs()) || hi - lo <= 1e-15 * hi {
                return (next, i + 1);
            }
            y = next;
        }
        (y, POLISH_MAX_ITER)
    }

    /// Sample-average optimum over `n_samples` draws shared by every
    /// candidate position.
    ///
    /// Draws are re-centred to mean zero before use. The sample-average
    /// objective is evaluated in `O(log n)` per position from sorted
    /// returns and suffix sums.
    pub fn solve_mc(&self, n_samples: usize, seed: u64) -> Result<OptionDecision> {
        self.validate()?;
        if n_samples < 1000 {
            return Err(Error::config("n_samples", "must be >= 1000"));
        }
        let mut rng = seeded_rng(seed);
        let draws: Vec<f64> = (0..n_samples).map(|_| self.returns.draw(&mut rng)).collect();
        self.solve_on_draws(draws)
    }

    /// Like [`solve_mc`](Self::solve_mc) on caller-supplied one-second
    /// return draws. Used to share draws across problems.
    pub fn solve_on_draws(&self, mut draws: Vec<f64>) -> Result<OptionDecision> {
        if draws.is_empty() {
            return Err(Error::config("draws", "must be non-empty"));
        }
        let scale = self.return_scale();
        let flip = if self.pool.side == Side::Sell { -1.0 } else { 1.0 };
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let floor = self.returns.truncation_floor * scale;
        for r in draws.iter_mut() {
            *r = (flip * (*r - mean) * scale).max(floor);
        }
        let sample = SortedSample::new(draws);
        let cap = self.position_cap();
        let found = maximize(
            |y| sample.payoff_moments(y, self.pi0(y), self.penalty).0,
            0.0,
            cap,
            SCAN_POINTS,
            GOLDEN_TOL,
            GOLDEN_MAX_ITER,
        )?;
        let y = found.x;
        let pi0 = self.pi0(y);
        let (value_v, second, exercised) = sample.payoff_moments(y, pi0, self.penalty);
        let variance = (second - value_v * value_v).max(0.0);
        let sd = sample.std_dev();
        let z_star = if y > 0.0 && sd > 0.0 { Some(-(pi0 + self.penalty) / (sd * y)) } else { None };
        Ok(self.decision(
            y,
            value_v,
            exercised,
            z_star,
            SolveDiagnostics {
                method: SolveMethod::MonteCarlo,
                evaluations: found.evaluations,
                polish_steps: 0,
                foc_residual: f64::NAN,
                at_bound: y <= cap * 1e-12 || y >= cap * (1.0 - 1e-9),
                standard_error: Some(libm::sqrt(variance / n)),
            },
        ))
    }

    /// Envelope identities evaluated at the closed-form optimum.
    pub fn envelope_derivatives(&self) -> Result<Envelope> {
        let d = self.solve()?;
        Ok(Envelope {
            d_value_d_mev: 1.0 - d.exercise_prob,
            d_value_d_penalty: -d.exercise_prob,
        })
    }
}

/// Window returns sorted ascending with suffix sums of `r` and `r²`.
struct SortedSample {
    returns: Vec<f64>,
    suffix: Vec<f64>,
    suffix_sq: Vec<f64>,
}

impl SortedSample {
    fn new(mut returns: Vec<f64>) -> Self {
        returns.sort_by(f64::total_cmp);
        let n = returns.len();
        let mut suffix = alloc::vec![0.0; n + 1];
        let mut suffix_sq = alloc::vec![0.0; n + 1];
        for i in (0..n).rev() {
            suffix[i] = suffix[i + 1] + returns[i];
            suffix_sq[i] = suffix_sq[i + 1] + returns[i] * returns[i];
        }
        SortedSample { returns, suffix, suffix_sq }
    }

    fn std_dev(&self) -> f64 {
        let n = self.returns.len() as f64;
        let m = self.suffix[0] / n;
        libm::sqrt((self.suffix_sq[0] / n - m * m).max(0.0))
    }

    /// Mean and second moment of `max(-p, Π0 + r y)` and the exercised fraction.
    fn payoff_moments(&self, y: f64, pi0: f64, penalty: f64) -> (f64, f64, f64) {
        let n = self.returns.len();
        let k = if y == 0.0 {
            if pi0 < -penalty { n } else { 0 }
        } else {
            self.returns.partition_point(|&r| pi0 + r * y < -penalty)
        };
        let kept = (n - k) as f64;
        let sum = -penalty * k as f64 + kept * pi0 + y * self.suffix[k];
        let sum_sq = penalty * penalty * k as f64
            + kept * pi0 * pi0
            + 2.0 * pi0 * y * self.suffix[k]
            + y * y * self.suffix_sq[k];
        let nf = n as f64;
        (sum / nf, sum_sq / nf, k as f64 / nf)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::ReturnModel;

    fn example(sigma: f64, gap: f64, liquidity: f64) -> BuilderProblem {
        let pool = PoolState::new(liquidity, 1.0, gap).unwrap();
        BuilderProblem::new(0.0, pool, ReturnModel::normal(sigma), 1.0)
    }

    #[test]
    fn profit_at_commit_examples() {
        let mut p = example(0.0, 0.0, 1.0);
        p.atomic_mev = 1.0;
        assert_eq!(p.profit_at_commit(0.0).unwrap(), 1.0);
        p.atomic_mev = 0.0;
        assert!((p.profit_at_commit(0.5).unwrap() + 0.25).abs() < 1e-15);
        let p = example(0.0, 0.1, 1.0);
        let y = 1e-6;
        assert!((p.profit_at_commit(y).unwrap() / y - 0.1).abs() < 1e-5);
        assert!(p.profit_at_commit(-1.0).is_err());
    }

    #[test]
    fn closed_form_without_volatility_is_commit_profit() {
        let mut p = example(0.0, 0.05, 10.0);
        p.atomic_mev = 0.2;
        let y = 0.1;
        let v = p.objective_closed_form(y).unwrap();
        assert!((v - p.profit_at_commit(y).unwrap()).abs() < 1e-15);
    }

    #[test]
    fn closed_form_with_huge_penalty_is_expected_profit() {
        let p = example(0.01, 0.0, 1.0).with_penalty(1e6);
        let y = 0.0061;
        let v = p.objective_closed_form(y).unwrap();
        assert!((v - p.profit_at_commit(y).unwrap()).abs() < 1e-9);
    }

    #[test]
    fn zero_position_value_is_reveal_or_withhold() {
        let mut p = example(0.01, 0.0, 1.0).with_penalty(0.3);
        p.atomic_mev = -1.0;
        assert_eq!(p.objective_closed_form(0.0).unwrap(), -0.3);
        p.atomic_mev = 0.2;
        assert_eq!(p.objective_closed_form(0.0).unwrap(), 0.2);
    }

    #[test]
    fn closed_form_rejects_non_normal() {
        let pool = PoolState::new(1.0, 1.0, 0.0).unwrap();
        let p = BuilderProblem::new(0.0, pool, ReturnModel::two_point(0.01), 1.0);
        assert!(matches!(p.objective_closed_form(0.1), Err(Error::UnsupportedModel(_))));
        assert!(matches!(p.solve(), Err(Error::UnsupportedModel(_))));
    }

    #[test]
    fn slope_matches_finite_difference() {
        let mut p = example(0.02, 0.01, 50.0).with_penalty(0.05);
        p.atomic_mev = 0.01;
        let sigma = p.sigma_eff();
        for y in [0.05, 0.3, 1.0, 2.5] {
            let h = 1e-6;
            let fd = (p.objective_closed_form(y + h).unwrap() - p.objective_closed_form(y - h).unwrap())
                / (2.0 * h);
            let (g, dg) = p.closed_form_slope(y, sigma);
            assert!((fd - g).abs() < 1e-7, "y={y}");
            let fd2 = (p.closed_form_slope(y + h, sigma).0 - p.closed_form_slope(y - h, sigma).0) / (2.0 * h);
            assert!((fd2 - dg).abs() < 1e-5 * (1.0 + dg.abs()), "y={y}");
        }
    }

    #[test]
    fn example_optimum() {
        let d = example(0.01, 0.0, 1000.0).solve().unwrap();
        assert!((d.optimal_y / 6.1 - 1.0).abs() < 0.01, "{}", d.optimal_y);
        assert!((d.post_trade_overshoot / 0.0122 - 1.0).abs() < 0.01);
        let z = d.z_star.unwrap();
        assert!((z - 0.612).abs() < 1e-3);
        assert!(d.diagnostics.foc_residual <= 1e-8);
        // With μ = 0 and no gap the stationarity condition reduces to λ(z) = 2z.
        assert!((crate::special::hazard(z) - 2.0 * z).abs() < 1e-6);
    }

    #[test]
    fn deterministic_arbitrage_has_no_option() {
        let p = example(0.0, 0.02, 100.0);
        let d = p.solve().unwrap();
        // Π0'(y) = 0 at (1-δ)(1 + 2y/L) = 1.
        let expected = 0.5 * 100.0 * (1.0 / 0.98 - 1.0);
        assert!((d.optimal_y - expected).abs() < 1e-12);
        assert_eq!(d.exercise_prob, 0.0);
        assert_eq!(d.net_option_value, 0.0);
        assert_eq!(d.diagnostics.method, SolveMethod::Deterministic);
    }

    #[test]
    fn overpriced_dex_keeps_zero_position() {
        let mut p = example(0.001, -0.05, 100.0);
        p.atomic_mev = 1.0;
        let d = p.solve().unwrap();
        assert!(d.optimal_y < 1e-6);
        assert!(d.net_option_value >= -1e-12);
    }

    #[test]
    fn mc_small_sample_rejected() {
        assert!(example(0.01, 0.0, 10.0).solve_mc(10, 0).is_err());
    }

    #[test]
    fn mc_two_point_exercise_is_zero_or_half() {
        let pool = PoolState::new(1000.0, 1.0, 0.002).unwrap();
        for mev in [0.0, 0.05, 0.5, 5.0] {
            let p = BuilderProblem::new(mev, pool, ReturnModel::two_point(0.01), 1.0);
            let d = p.solve_mc(10_000, 3).unwrap();
            assert!(
                d.exercise_prob == 0.0 || (d.exercise_prob - 0.5).abs() < 0.03,
                "mev {mev}: P* = {}",
                d.exercise_prob
            );
        }
    }

    #[test]
    fn mc_zero_returns_matches_deterministic() {
        let pool = PoolState::new(100.0, 1.0, 0.02).unwrap();
        let p = BuilderProblem::new(0.1, pool, ReturnModel::empirical(alloc::vec![0.0; 8]), 1.0);
        let mc = p.solve_mc(5_000, 9).unwrap();
        let det = BuilderProblem::new(0.1, pool, ReturnModel::normal(0.0), 1.0).solve().unwrap();
        assert!((mc.optimal_y - det.optimal_y).abs() < 1e-6);
        assert!((mc.value_v - det.value_v).abs() < 1e-12);
        assert_eq!(mc.exercise_prob, 0.0);
    }

    #[test]
    fn envelope_trivial_cases() {
        let pool = PoolState::new(100.0, 1.0, 0.0).unwrap();
        let p = BuilderProblem::new(5.0, pool, ReturnModel::normal(0.0), 1.0);
        assert_eq!(p.envelope_derivatives().unwrap().d_value_d_mev, 1.0);
        let p = BuilderProblem::new(0.0, pool, ReturnModel::normal(0.01), 1.0).with_penalty(1e3);
        assert!(p.envelope_derivatives().unwrap().d_value_d_penalty.abs() < 1e-12);
    }

    #[test]
    fn invalid_problem_reports_field_path() {
        let p = example(-0.1, 0.0, 1.0);
        match p.solve() {
            Err(Error::Config { field, .. }) => assert_eq!(field, "returns.sigma"),
            other => panic!("unexpected {other:?}"),
        }
        let p = example(0.1, 0.0, 1.0).with_time_scaling(2.0);
        assert!(p.solve().is_err());
    }
}
