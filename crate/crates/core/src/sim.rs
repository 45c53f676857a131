//! Slot-by-slot simulation of the withhold decision.
//!
//! A market path (volatility regime, atomic MEV, pre-trade gap and a
//! standardized CEX shock per slot) is generated from the seed alone, so
//! every `(window, penalty)` cell sees the same path. Within a cell the
//! slots run in order because a withheld slot hands its non-position
//! value to the next one.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::market::{seeded_rng, Curve, PoolState, ReturnModel, Side};
use crate::option::BuilderProblem;
use crate::replay::{BlockRecord, QuoteBook, QuoteSeries, TradeRecord, Wei};

pub const SLOT_SECONDS: f64 = 12.0;
const SECONDS_PER_DAY: f64 = 86_400.0;
/// Symbol of the simulated risky asset in exported datasets.
pub const SIM_TOKEN: &str = "TKN";
const GAP_CLIP: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct VolatilityRegime {
    /// Per-second return volatility.
    pub sigma_per_sec: f64,
    /// Expected number of slots before switching regime.
    pub mean_dwell_slots: f64,
}

/// Per-slot atomic MEV `μ`, in numéraire.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum MuProcess {
    Constant { value: f64 },
    /// Lognormal with the given mean and log-scale standard deviation.
    LogNormal { mean: f64, log_sd: f64 },
}

impl Default for MuProcess {
    fn default() -> Self {
        MuProcess::LogNormal { mean: 0.15, log_sd: 0.8 }
    }
}

/// Distribution of the standardized CEX shock `Z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ShockKind {
    #[default]
    Normal,
    /// `±1` with equal probability.
    TwoPoint,
}

/// How the builder sizes its position.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum PositionPolicy {
    /// Closed-form optimum against normal window returns.
    #[default]
    Optimal,
    /// Always take position `y` (numéraire).
    Fixed { y: f64 },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ScenarioConfig {
    /// Zero is allowed and yields empty reports.
    pub n_slots: u64,
    pub slot_seconds: f64,
    pub window_grid: Vec<f64>,
    pub penalty_grid: Vec<f64>,
    /// Markov regimes; the path starts in the first one.
    pub regimes: Vec<VolatilityRegime>,
    pub mu_process: MuProcess,
    /// Standard deviation of the pre-trade gap `δ`, clipped to `±0.5`.
    pub price_gap_sd: f64,
    pub liquidity: f64,
    pub cex_price: f64,
    pub curve: Curve,
    pub time_scaling: f64,
    pub shock: ShockKind,
    pub position: PositionPolicy,
    /// Reported next to the realized CEX-DEX share; not used by the dynamics.
    pub cexdex_share_target: Option<f64>,
    /// Fraction of a withheld slot's non-position value added to the next slot.
    pub trailing_fraction: f64,
    /// Rate of empty slots from causes other than the option.
    pub baseline_missed_rate: f64,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_slots: 7_200,
            slot_seconds: SLOT_SECONDS,
            window_grid: vec![2.0, 4.0, 6.0, 8.0],
            penalty_grid: vec![0.0, 0.075, 0.15, 0.5],
            regimes: vec![
                VolatilityRegime { sigma_per_sec: 2e-4, mean_dwell_slots: 3_600.0 },
                VolatilityRegime { sigma_per_sec: 6e-4, mean_dwell_slots: 1_200.0 },
            ],
            mu_process: MuProcess::default(),
            price_gap_sd: 0.003,
            liquidity: 100_000.0,
            cex_price: 1.0,
            curve: Curve::Quadratic,
            time_scaling: 0.5,
            shock: ShockKind::Normal,
            position: PositionPolicy::Optimal,
            cexdex_share_target: None,
            trailing_fraction: 1.0,
            baseline_missed_rate: 0.0,
            seed: 0,
        }
    }
}

fn finite_nonneg(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.slot_seconds > 0.0 && self.slot_seconds.is_finite()) {
            return Err(Error::config("slot_seconds", "must be finite and > 0"));
        }
        if self.window_grid.is_empty() {
            return Err(Error::config("window_grid", "must be non-empty"));
        }
        for (i, &w) in self.window_grid.iter().enumerate() {
            if !(w > 0.0 && w < self.slot_seconds) {
                return Err(Error::config(alloc::format!("window_grid[{i}]"), "must lie in (0, slot_seconds)"));
            }
        }
        if self.penalty_grid.is_empty() {
            return Err(Error::config("penalty_grid", "must be non-empty"));
        }
        for (i, &p) in self.penalty_grid.iter().enumerate() {
            if !finite_nonneg(p) {
                return Err(Error::config(alloc::format!("penalty_grid[{i}]"), "must be finite and >= 0"));
            }
        }
        if self.regimes.is_empty() {
            return Err(Error::config("regimes", "must be non-empty"));
        }
        for (i, r) in self.regimes.iter().enumerate() {
            if !finite_nonneg(r.sigma_per_sec) {
                return Err(Error::config(alloc::format!("regimes[{i}].sigma_per_sec"), "must be finite and >= 0"));
            }
            if !(r.mean_dwell_slots >= 1.0) {
                return Err(Error::config(alloc::format!("regimes[{i}].mean_dwell_slots"), "must be >= 1"));
            }
        }
        match self.mu_process {
            MuProcess::Constant { value } if !value.is_finite() => {
                return Err(Error::config("mu_process.value", "must be finite"));
            }
            MuProcess::LogNormal { mean, log_sd } => {
                if !(mean > 0.0 && mean.is_finite()) {
                    return Err(Error::config("mu_process.mean", "must be finite and > 0"));
                }
                if !finite_nonneg(log_sd) {
                    return Err(Error::config("mu_process.log_sd", "must be finite and >= 0"));
                }
            }
            _ => {}
        }
        if !finite_nonneg(self.price_gap_sd) {
            return Err(Error::config("price_gap_sd", "must be finite and >= 0"));
        }
        PoolState::new(self.liquidity, self.cex_price, 0.0)?;
        if !(0.5..=1.0).contains(&self.time_scaling) {
            return Err(Error::config("time_scaling", "must lie in [0.5, 1]"));
        }
        if let PositionPolicy::Fixed { y } = self.position {
            if !finite_nonneg(y) {
                return Err(Error::config("position.y", "must be finite and >= 0"));
            }
        }
        if let Some(s) = self.cexdex_share_target {
            if !(0.0..=1.0).contains(&s) {
                return Err(Error::config("cexdex_share_target", "must lie in [0, 1]"));
            }
        }
        if !(0.0..=1.0).contains(&self.trailing_fraction) {
            return Err(Error::config("trailing_fraction", "must lie in [0, 1]"));
        }
        if !(0.0..1.0).contains(&self.baseline_missed_rate) {
            return Err(Error::config("baseline_missed_rate", "must lie in [0, 1)"));
        }
        Ok(())
    }

    fn slots_per_day(&self) -> f64 {
        SECONDS_PER_DAY / self.slot_seconds
    }

    pub fn day_of(&self, slot: u64) -> u64 {
        libm::floor(slot as f64 / self.slots_per_day()) as u64
    }
}

/// Exogenous state of one slot, shared by every cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarketSlot {
    pub slot: u64,
    pub regime: usize,
    pub sigma_per_sec: f64,
    /// Atomic MEV rounded to whole wei.
    pub mu: Wei,
    pub price_gap: f64,
    /// Standardized CEX shock.
    pub shock: f64,
}

impl MarketSlot {
    /// CEX return `t` seconds after commitment.
    pub fn return_at(&self, t: f64, time_scaling: f64) -> f64 {
        self.sigma_per_sec * libm::pow(t, time_scaling) * self.shock
    }

    pub fn cex_price_at(&self, cex_price: f64, t: f64, time_scaling: f64) -> f64 {
        cex_price * (1.0 + self.return_at(t, time_scaling))
    }

    pub fn side(&self) -> Side {
        if self.price_gap < 0.0 {
            Side::Sell
        } else {
            Side::Buy
        }
    }
}

/// Deterministic generator of [`MarketSlot`]s.
///
/// Each slot consumes exactly four draws (regime uniform, `μ`, `δ`, `Z`)
/// whatever the configuration, so paths stay aligned across settings.
pub struct MarketPath<'a> {
    config: &'a ScenarioConfig,
    rng: ChaCha8Rng,
    regime: usize,
    next: u64,
}

impl<'a> MarketPath<'a> {
    pub fn new(config: &'a ScenarioConfig) -> Self {
        MarketPath { config, rng: seeded_rng(config.seed), regime: 0, next: 0 }
    }
}

impl Iterator for MarketPath<'_> {
    type Item = MarketSlot;

    fn next(&mut self) -> Option<MarketSlot> {
        if self.next >= self.config.n_slots {
            return None;
        }
        let cfg = self.config;
        let slot = self.next;
        self.next += 1;
        let u: f64 = self.rng.random();
        let k = cfg.regimes.len();
        if slot > 0 && k > 1 && u < 1.0 / cfg.regimes[self.regime].mean_dwell_slots {
            // uniform over the other regimes, reusing the switch draw
            let pick = libm::floor(u * cfg.regimes[self.regime].mean_dwell_slots * (k - 1) as f64) as usize;
            let pick = pick.min(k - 2);
            self.regime = if pick >= self.regime { pick + 1 } else { pick };
        }
        let n_mu: f64 = StandardNormal.sample(&mut self.rng);
        let n_gap: f64 = StandardNormal.sample(&mut self.rng);
        let n_shock: f64 = StandardNormal.sample(&mut self.rng);
        let mu = match cfg.mu_process {
            MuProcess::Constant { value } => value,
            MuProcess::LogNormal { mean, log_sd } => mean * libm::exp(log_sd * n_mu - 0.5 * log_sd * log_sd),
        };
        let shock = match cfg.shock {
            ShockKind::Normal => n_shock,
            ShockKind::TwoPoint => {
                if n_shock < 0.0 {
                    -1.0
                } else {
                    1.0
                }
            }
        };
        Some(MarketSlot {
            slot,
            regime: self.regime,
            sigma_per_sec: cfg.regimes[self.regime].sigma_per_sec,
            mu: Wei::from_eth(mu),
            price_gap: (cfg.price_gap_sd * n_gap).clamp(-GAP_CLIP, GAP_CLIP),
            shock,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub slot: u64,
    pub day: u64,
    pub regime: usize,
    pub window: f64,
    pub penalty: f64,
    /// Drawn `μ_t` plus value trailed from a withheld predecessor.
    pub mu_effective: f64,
    pub trailed: f64,
    /// Window volatility `σ_eff` the builder priced with.
    pub sigma_used: f64,
    pub side: Side,
    pub y_star: f64,
    /// Risky units traded, `y* / P0`.
    pub units: f64,
    /// Numéraire paid to (buy) or received from (sell) the DEX.
    pub dex_amount: f64,
    /// Position value at commitment, `Π0(y*) - μ`.
    pub position_value_at_commit: f64,
    pub realized_return: f64,
    pub pi_at_deadline: f64,
    pub exercised: bool,
    pub option_value_realized: f64,
    pub penalty_charged: f64,
    /// `Π_τ` if revealed, `-p` if withheld.
    pub builder_pnl: f64,
}

/// Sequential state of one `(window, penalty)` cell.
#[derive(Debug, Clone)]
pub struct SlotEngine<'a> {
    config: &'a ScenarioConfig,
    window: f64,
    penalty: f64,
    carry: f64,
}

impl<'a> SlotEngine<'a> {
    pub fn new(config: &'a ScenarioConfig, window: f64, penalty: f64) -> Self {
        SlotEngine { config, window, penalty, carry: 0.0 }
    }

    /// Value that will be added to the next slot's `μ`.
    pub fn pending_carry(&self) -> f64 {
        self.carry
    }

    pub fn step(&mut self, m: &MarketSlot) -> Result<SlotOutcome> {
        let cfg = self.config;
        let trailed = self.carry;
        let mu_effective = m.mu.to_eth() + trailed;
        let side = m.side();
        let pool = PoolState::new(cfg.liquidity, cfg.cex_price, m.price_gap)?
            .with_side(side)
            .with_curve(cfg.curve);
        let problem = BuilderProblem::new(mu_effective, pool, ReturnModel::normal(m.sigma_per_sec), self.window)
            .with_penalty(self.penalty)
            .with_time_scaling(cfg.time_scaling);
        let y_star = match cfg.position {
            PositionPolicy::Optimal => problem.solve()?.optimal_y,
            PositionPolicy::Fixed { y } => y,
        };
        let units = y_star / cfg.cex_price;
        let cost = pool.dex_cost(units)?;
        let realized_return = m.return_at(self.window, cfg.time_scaling);
        let price = m.cex_price_at(cfg.cex_price, self.window, cfg.time_scaling);
        // the sell side mirrors the buy cost around the CEX value
        let (dex_amount, position) = match side {
            Side::Buy => (cost, units * price - cost),
            Side::Sell => {
                let proceeds = 2.0 * y_star - cost;
                (proceeds, proceeds - units * price)
            }
        };
        let pi_at_deadline = mu_effective + position;
        let exercised = pi_at_deadline < -self.penalty;
        self.carry = if exercised { cfg.trailing_fraction * mu_effective } else { 0.0 };
        Ok(SlotOutcome {
            slot: m.slot,
            day: cfg.day_of(m.slot),
            regime: m.regime,
            window: self.window,
            penalty: self.penalty,
            mu_effective,
            trailed,
            sigma_used: problem.sigma_eff(),
            side,
            y_star,
            units,
            dex_amount,
            position_value_at_commit: y_star - cost,
            realized_return,
            pi_at_deadline,
            exercised,
            option_value_realized: if exercised { (-pi_at_deadline).max(0.0) } else { 0.0 },
            penalty_charged: if exercised { self.penalty } else { 0.0 },
            builder_pnl: if exercised { -self.penalty } else { pi_at_deadline },
        })
    }
}

/// Outcomes of one cell in slot order. Solver failures carry the slot.
pub fn run_scenario(
    config: &ScenarioConfig,
    window: f64,
    penalty: f64,
) -> Result<impl Iterator<Item = Result<SlotOutcome>> + '_> {
    config.validate()?;
    let mut engine = SlotEngine::new(config, window, penalty);
    Ok(MarketPath::new(config).map(move |m| {
        engine.step(&m).map_err(|e| Error::Slot { slot: m.slot, source: alloc::boxed::Box::new(e) })
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Bucket {
    Day(u64),
    Regime(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketBy {
    Day,
    Regime,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AggregateRow {
    pub bucket: Bucket,
    pub slots: u64,
    pub exercises: u64,
    pub exercise_prob: f64,
    pub option_value: f64,
    pub penalties: f64,
    /// Σ `Π_τ` over all slots, revealed or not.
    pub block_value: f64,
    pub builder_pnl: f64,
    /// `b + (1 - b) · exercise_prob` for baseline missed rate `b`.
    pub missed_share: f64,
    /// Σ position value / Σ commit value.
    pub cexdex_share: f64,
}

#[derive(Default)]
struct Acc {
    slots: u64,
    exercises: u64,
    option_value: f64,
    penalties: f64,
    block_value: f64,
    builder_pnl: f64,
    position: f64,
    commit: f64,
}

impl Acc {
    fn add(&mut self, o: &SlotOutcome) {
        self.slots += 1;
        self.exercises += u64::from(o.exercised);
        self.option_value += o.option_value_realized;
        self.penalties += o.penalty_charged;
        self.block_value += o.pi_at_deadline;
        self.builder_pnl += o.builder_pnl;
        self.position += o.position_value_at_commit;
        self.commit += o.mu_effective + o.position_value_at_commit;
    }

    fn row(&self, bucket: Bucket, baseline_missed_rate: f64) -> AggregateRow {
        let p = if self.slots == 0 { 0.0 } else { self.exercises as f64 / self.slots as f64 };
        AggregateRow {
            bucket,
            slots: self.slots,
            exercises: self.exercises,
            exercise_prob: p,
            option_value: self.option_value,
            penalties: self.penalties,
            block_value: self.block_value,
            builder_pnl: self.builder_pnl,
            missed_share: baseline_missed_rate + (1.0 - baseline_missed_rate) * p,
            cexdex_share: if self.commit > 0.0 { self.position / self.commit } else { 0.0 },
        }
    }
}

/// Per-bucket rows in bucket order. Empty input yields no rows.
pub fn aggregate(outcomes: &[SlotOutcome], by: BucketBy, baseline_missed_rate: f64) -> Vec<AggregateRow> {
    let mut groups: alloc::collections::BTreeMap<Bucket, Acc> = alloc::collections::BTreeMap::new();
    for o in outcomes {
        let key = match by {
            BucketBy::Day => Bucket::Day(o.day),
            BucketBy::Regime => Bucket::Regime(o.regime),
        };
        groups.entry(key).or_default().add(o);
    }
    groups.iter().map(|(k, acc)| acc.row(*k, baseline_missed_rate)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub window: f64,
    pub penalty: f64,
    pub slots: u64,
    pub exercises: u64,
    pub exercise_prob: f64,
    pub option_value: f64,
    pub builder_pnl: f64,
    pub missed_share: f64,
    pub cexdex_share: f64,
    /// Exercise rate among slots whose predecessor was withheld.
    pub exercise_prob_after_empty: Option<f64>,
    /// Exercise rate among slots whose predecessor was revealed.
    pub exercise_prob_after_full: Option<f64>,
}

/// Summary of one cell.
pub fn run_cell(config: &ScenarioConfig, window: f64, penalty: f64) -> Result<SweepCell> {
    let mut acc = Acc::default();
    let (mut after_empty, mut after_full) = ((0u64, 0u64), (0u64, 0u64));
    let mut prev: Option<bool> = None;
    for o in run_scenario(config, window, penalty)? {
        let o = o?;
        acc.add(&o);
        match prev {
            Some(true) => after_empty = (after_empty.0 + 1, after_empty.1 + u64::from(o.exercised)),
            Some(false) => after_full = (after_full.0 + 1, after_full.1 + u64::from(o.exercised)),
            None => {}
        }
        prev = Some(o.exercised);
    }
    let rate = |(n, k): (u64, u64)| (n > 0).then(|| k as f64 / n as f64);
    let row = acc.row(Bucket::Day(0), config.baseline_missed_rate);
    Ok(SweepCell {
        window,
        penalty,
        slots: row.slots,
        exercises: row.exercises,
        exercise_prob: row.exercise_prob,
        option_value: row.option_value,
        builder_pnl: row.builder_pnl,
        missed_share: row.missed_share,
        cexdex_share: row.cexdex_share,
        exercise_prob_after_empty: rate(after_empty),
        exercise_prob_after_full: rate(after_full),
    })
}

/// Window × penalty matrix, row-major by window, on one shared market path.
pub fn sweep(config: &ScenarioConfig) -> Result<Vec<SweepCell>> {
    config.validate()?;
    let mut cells = Vec::with_capacity(config.window_grid.len() * config.penalty_grid.len());
    for &w in &config.window_grid {
        for &p in &config.penalty_grid {
            cells.push(run_cell(config, w, p)?);
        }
    }
    Ok(cells)
}

/// A simulated cell in the replay record layout.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedDataset {
    pub blocks: Vec<BlockRecord>,
    pub trades: Vec<TradeRecord>,
    pub quotes: QuoteBook,
}

pub const SIM_BUILDER: &str = "sim-builder";
pub const SIM_SEARCHER: &str = "sim-searcher";

/// Runs one cell and exports it as blocks, trades and half-second quotes.
///
/// Each traded slot becomes one taker-fee-free trade whose payment equals
/// its value at commitment, so the block's non-position value is exactly
/// the drawn `μ`. Windows must sit on the half-second quote grid and `μ`
/// must be non-negative.
pub fn export_cell(
    config: &ScenarioConfig,
    window: f64,
    penalty: f64,
    horizon: f64,
) -> Result<(Vec<SlotOutcome>, SimulatedDataset)> {
    if libm::fmod(window * 2.0, 1.0) != 0.0 || window > horizon {
        return Err(Error::config("window", "must be a multiple of 0.5 s within the horizon"));
    }
    let steps = libm::round(horizon * 2.0) as i64;
    let mut outcomes = Vec::with_capacity(config.n_slots as usize);
    let mut blocks = Vec::with_capacity(config.n_slots as usize);
    let mut trades = Vec::new();
    let mut series = QuoteSeries::new(SIM_TOKEN);
    let mut engine = SlotEngine::new(config, window, penalty);
    config.validate()?;
    for m in MarketPath::new(config) {
        let o = engine.step(&m).map_err(|e| Error::Slot { slot: m.slot, source: alloc::boxed::Box::new(e) })?;
        let slot_ms = (m.slot as f64 * config.slot_seconds * 1000.0) as i64;
        for k in 0..=steps {
            let t = k as f64 * 0.5;
            series.push(slot_ms + k * 500, m.cex_price_at(config.cex_price, t, config.time_scaling))?;
        }
        if m.mu.is_negative() {
            return Err(Error::Slot { slot: m.slot, source: alloc::boxed::Box::new(Error::domain("negative μ cannot be exported")) });
        }
        let payment = if o.units > 0.0 { Wei::from_eth(o.position_value_at_commit.max(0.0)) } else { Wei::ZERO };
        if o.units > 0.0 {
            let (token_buy, amount_buy, token_sell, amount_sell) = match o.side {
                Side::Buy => (SIM_TOKEN, o.units, "ETH", o.dex_amount),
                Side::Sell => ("ETH", o.dex_amount, SIM_TOKEN, o.units),
            };
            trades.push(TradeRecord {
                trade_id: alloc::format!("sim-{}", m.slot),
                block_number: m.slot,
                searcher_id: SIM_SEARCHER.to_string(),
                token_buy: token_buy.to_string(),
                amount_buy,
                token_sell: token_sell.to_string(),
                amount_sell,
                tip: payment,
                transfer: Wei::ZERO,
                base_fee: Wei::ZERO,
            });
        }
        blocks.push(BlockRecord {
            slot: m.slot,
            block_number: m.slot,
            builder_id: String::from(SIM_BUILDER),
            timestamp_ms: slot_ms,
            total_value: Wei(m.mu.0 + payment.0),
        });
        outcomes.push(o);
    }
    let mut quotes = QuoteBook::default();
    quotes.insert(series);
    Ok((outcomes, SimulatedDataset { blocks, trades, quotes }))
}
