//! Option metrics on recorded blocks.
//!
//! A block's value `t` seconds after commitment is
//! `Π_b(t) = v_b - Σ (tip_j + transfer_j) + Σ π_j(t)`, where searcher
//! payments proxy the value of their trades at commitment and `π_j(t)` is
//! the CEX markout of trade `j`. The option value at the window end is
//! `max(0, -Π_b(τ))`.
//!
//! ETH payments are carried as integer wei; conversion to `f64` happens
//! once per block when paths are built.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::error::{Error, Result};

const WEI_PER_ETH: i128 = 1_000_000_000_000_000_000;
const ETH_DECIMALS: usize = 18;

/// Lowest Binance taker fee tier, 0.01725%.
pub const DEFAULT_TAKER_FEE_RATE: f64 = 0.000_172_5;
pub const DEFAULT_STALENESS_MS: i64 = 2_000;
pub const MS_PER_DAY: i64 = 86_400_000;
/// Builder groups smaller than this are flagged as low-sample.
pub const LOW_SAMPLE_BLOCKS: usize = 30;

/// Signed ETH amount in wei.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Wei(pub i128);

impl Wei {
    pub const ZERO: Wei = Wei(0);

    /// Nearest wei to an `f64` ETH amount.
    pub fn from_eth(eth: f64) -> Wei {
        Wei(libm::round(eth * 1e18) as i128)
    }

    /// Correctly rounded `f64` of the exact decimal value.
    pub fn to_eth(self) -> f64 {
        let mut buf = String::new();
        fmt::write(&mut buf, format_args!("{self}")).expect("formatting into a String");
        buf.parse().expect("decimal wei string parses as f64")
    }

    pub fn checked_add(self, other: Wei) -> Option<Wei> {
        self.0.checked_add(other.0).map(Wei)
    }

    pub fn checked_sub(self, other: Wei) -> Option<Wei> {
        self.0.checked_sub(other.0).map(Wei)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl fmt::Display for Wei {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let whole = abs / WEI_PER_ETH as u128;
        let frac = abs % WEI_PER_ETH as u128;
        if frac == 0 {
            return write!(f, "{sign}{whole}");
        }
        let mut digits = [b'0'; ETH_DECIMALS];
        let mut rest = frac;
        for d in digits.iter_mut().rev() {
            *d = b'0' + (rest % 10) as u8;
            rest /= 10;
        }
        let mut end = ETH_DECIMALS;
        while digits[end - 1] == b'0' {
            end -= 1;
        }
        let frac_str = core::str::from_utf8(&digits[..end]).expect("ascii digits");
        write!(f, "{sign}{whole}.{frac_str}")
    }
}

impl FromStr for Wei {
    type Err = Error;

    /// Parses a decimal ETH amount with at most 18 fractional digits.
    fn from_str(s: &str) -> Result<Wei> {
        let s = s.trim();
        let bad = || Error::domain(alloc::format!("invalid ETH amount `{s}`"));
        let (negative, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s.strip_prefix('+').unwrap_or(s)),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty() && frac.is_empty() {
            return Err(bad());
        }
        if !whole.bytes().all(|b| b.is_ascii_digit()) || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let frac = frac.trim_end_matches('0');
        if frac.len() > ETH_DECIMALS {
            return Err(Error::domain(alloc::format!("`{s}` has more than 18 decimals")));
        }
        let mut value: i128 = 0;
        for b in whole.bytes() {
            value = value.checked_mul(10).and_then(|v| v.checked_add(i128::from(b - b'0'))).ok_or_else(bad)?;
        }
        value = value.checked_mul(WEI_PER_ETH).ok_or_else(bad)?;
        let mut frac_value: i128 = 0;
        for (i, b) in frac.bytes().enumerate() {
            let place = 10i128.pow((ETH_DECIMALS - 1 - i) as u32);
            frac_value += i128::from(b - b'0') * place;
        }
        let total = value.checked_add(frac_value).ok_or_else(bad)?;
        Ok(Wei(if negative { -total } else { total }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub slot: u64,
    pub block_number: u64,
    pub builder_id: String,
    pub timestamp_ms: i64,
    /// `v_b`: tips plus coinbase transfers at commitment.
    pub total_value: Wei,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TradeRecord {
    pub trade_id: String,
    pub block_number: u64,
    pub searcher_id: String,
    pub token_buy: String,
    pub amount_buy: f64,
    pub token_sell: String,
    pub amount_sell: f64,
    pub tip: Wei,
    pub transfer: Wei,
    pub base_fee: Wei,
}

impl TradeRecord {
    pub fn payment(&self) -> Wei {
        Wei(self.tip.0 + self.transfer.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amount_buy > 0.0 && self.amount_buy.is_finite()) {
            return Err(Error::config("amount_buy", "must be finite and > 0"));
        }
        if !(self.amount_sell > 0.0 && self.amount_sell.is_finite()) {
            return Err(Error::config("amount_sell", "must be finite and > 0"));
        }
        if self.token_buy == self.token_sell {
            return Err(Error::config("token_sell", "must differ from token_buy"));
        }
        Ok(())
    }
}

/// Mid prices of one token in ETH.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct QuoteSeries {
    pub token: String,
    pub timestamps_ms: Vec<i64>,
    pub prices: Vec<f64>,
}

impl QuoteSeries {
    pub fn new(token: impl Into<String>) -> Self {
        QuoteSeries { token: token.into(), ..Default::default() }
    }

    pub fn push(&mut self, timestamp_ms: i64, price: f64) -> Result<()> {
        if !(price > 0.0 && price.is_finite()) {
            return Err(Error::domain("quote price must be finite and > 0"));
        }
        if let Some(&last) = self.timestamps_ms.last() {
            if timestamp_ms <= last {
                return Err(Error::domain("quote timestamps must be strictly increasing"));
            }
        }
        self.timestamps_ms.push(timestamp_ms);
        self.prices.push(price);
        Ok(())
    }

    /// Last observation at or before `at_ms`, if no older than `staleness_ms`.
    pub fn lookup(&self, at_ms: i64, staleness_ms: i64) -> Option<f64> {
        let idx = self.timestamps_ms.partition_point(|&ts| ts <= at_ms);
        if idx == 0 {
            return None;
        }
        let ts = self.timestamps_ms[idx - 1];
        (at_ms - ts <= staleness_ms).then(|| self.prices[idx - 1])
    }
}

/// Quote series by token. Numéraire tokens price at exactly 1.
#[derive(Debug, Clone, PartialEq)]
pub struct QuoteBook {
    pub series: BTreeMap<String, QuoteSeries>,
    pub numeraire_tokens: Vec<String>,
}

impl Default for QuoteBook {
    fn default() -> Self {
        QuoteBook {
            series: BTreeMap::new(),
            numeraire_tokens: alloc::vec!["ETH".to_string(), "WETH".to_string()],
        }
    }
}

impl QuoteBook {
    pub fn insert(&mut self, series: QuoteSeries) {
        self.series.insert(series.token.clone(), series);
    }

    pub fn price(&self, token: &str, at_ms: i64, staleness_ms: i64) -> Option<f64> {
        if self.numeraire_tokens.iter().any(|t| t == token) {
            return Some(1.0);
        }
        self.series.get(token)?.lookup(at_ms, staleness_ms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct MarkoutConfig {
    /// CEX taker fee as a fraction of hedge notional.
    pub taker_fee_rate: f64,
    pub staleness_ms: i64,
    /// Markout grid spacing in seconds.
    pub grid_step: f64,
    /// Last markout horizon in seconds.
    pub horizon: f64,
}

impl Default for MarkoutConfig {
    fn default() -> Self {
        MarkoutConfig {
            taker_fee_rate: DEFAULT_TAKER_FEE_RATE,
            staleness_ms: DEFAULT_STALENESS_MS,
            grid_step: 0.5,
            horizon: 8.0,
        }
    }
}

impl MarkoutConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.taker_fee_rate) {
            return Err(Error::config("taker_fee_rate", "must lie in [0, 1)"));
        }
        if self.staleness_ms < 0 {
            return Err(Error::config("staleness_ms", "must be >= 0"));
        }
        if !(self.grid_step > 0.0 && self.grid_step.is_finite()) {
            return Err(Error::config("grid_step", "must be finite and > 0"));
        }
        let steps = self.horizon / self.grid_step;
        if !(steps >= 0.0 && steps.is_finite()) || (steps - libm::round(steps)).abs() > 1e-9 {
            return Err(Error::config("horizon", "must be a non-negative multiple of grid_step"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Vec<f64> {
        let n = libm::round(self.horizon / self.grid_step) as usize;
        (0..=n).map(|k| k as f64 * self.grid_step).collect()
    }

    fn offset_ms(t: f64) -> i64 {
        libm::round(t * 1000.0) as i64
    }
}

/// A trade whose quotes are missing or stale at some horizon.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QuoteGap {
    pub trade_id: String,
    pub token: String,
    pub at_ms: i64,
}

/// `π_j(t) = x P_A(t) - y P_B(t) - base fee - taker fee` in ETH, for a
/// block committed at `slot_time_ms`.
pub fn markout(
    trade: &TradeRecord,
    quotes: &QuoteBook,
    slot_time_ms: i64,
    t: f64,
    config: &MarkoutConfig,
) -> core::result::Result<f64, QuoteGap> {
    let at_ms = slot_time_ms + MarkoutConfig::offset_ms(t);
    let price = |token: &str| {
        quotes.price(token, at_ms, config.staleness_ms).ok_or_else(|| QuoteGap {
            trade_id: trade.trade_id.clone(),
            token: token.to_string(),
            at_ms,
        })
    };
    let bought = trade.amount_buy * price(&trade.token_buy)?;
    let sold = trade.amount_sell * price(&trade.token_sell)?;
    let fee = config.taker_fee_rate * (bought + sold);
    Ok(bought - sold - trade.base_fee.to_eth() - fee)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathStatus {
    Complete,
    /// At least one trade lacked quote coverage.
    Partial(Vec<QuoteGap>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockValuePath {
    pub slot: u64,
    pub block_number: u64,
    pub builder_id: String,
    pub timestamp_ms: i64,
    /// `v_b` in ETH.
    pub total_value: f64,
    /// `v_b - Σ payments`, the value that does not depend on CEX prices.
    pub non_position_value: f64,
    /// Σ searcher payments for trades in the block.
    pub cexdex_payments: f64,
    pub grid: Vec<f64>,
    /// `Σ π_j(t)` on the grid.
    pub position_values: Vec<f64>,
    /// `Π_b(t)` on the grid.
    pub values: Vec<f64>,
    pub status: PathStatus,
}

impl BlockValuePath {
    pub fn is_complete(&self) -> bool {
        self.status == PathStatus::Complete
    }

    fn index_of(&self, t: f64) -> Option<usize> {
        self.grid.iter().position(|&g| (g - t).abs() < 1e-9)
    }

    pub fn value_at(&self, t: f64) -> Option<f64> {
        self.index_of(t).map(|i| self.values[i])
    }

    pub fn position_value_at(&self, t: f64) -> Option<f64> {
        self.index_of(t).map(|i| self.position_values[i])
    }

    /// `max(0, -Π_b(t))`.
    pub fn option_value_at(&self, t: f64) -> Option<f64> {
        self.value_at(t).map(|v| (-v).max(0.0))
    }

    /// `Π_b(0) - v_b`; non-zero when payments misprice the trades at commit.
    pub fn commit_divergence(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0) - self.total_value
    }

    /// Share of block value paid by CEX-DEX searchers.
    pub fn cexdex_share(&self) -> Option<f64> {
        (self.total_value > 0.0).then(|| self.cexdex_payments / self.total_value)
    }

    pub fn day(&self) -> i64 {
        self.timestamp_ms.div_euclid(MS_PER_DAY)
    }
}

/// Builds `Π_b(t)` over the markout grid.
pub fn block_value_path(
    block: &BlockRecord,
    trades: &[&TradeRecord],
    quotes: &QuoteBook,
    config: &MarkoutConfig,
) -> Result<BlockValuePath> {
    if block.total_value.is_negative() {
        return Err(Error::domain(alloc::format!("block {}: negative total value", block.block_number)));
    }
    let payments = trades
        .iter()
        .try_fold(Wei::ZERO, |acc, t| acc.checked_add(t.payment()))
        .ok_or_else(|| Error::domain("payment sum overflow"))?;
    let non_position_wei = block
        .total_value
        .checked_sub(payments)
        .ok_or_else(|| Error::domain("block value overflow"))?;
    let non_position_value = non_position_wei.to_eth();
    let grid = config.grid();
    let mut gaps = Vec::new();
    let mut position_values = Vec::with_capacity(grid.len());
    for &t in &grid {
        let mut total = 0.0;
        for trade in trades {
            match markout(trade, quotes, block.timestamp_ms, t, config) {
                Ok(pi) => total += pi,
                Err(gap) => {
                    if !gaps.iter().any(|g: &QuoteGap| g.trade_id == gap.trade_id) {
                        gaps.push(gap);
                    }
                }
            }
        }
        position_values.push(total);
    }
    let values = position_values.iter().map(|p| non_position_value + p).collect();
    Ok(BlockValuePath {
        slot: block.slot,
        block_number: block.block_number,
        builder_id: block.builder_id.clone(),
        timestamp_ms: block.timestamp_ms,
        total_value: block.total_value.to_eth(),
        non_position_value,
        cexdex_payments: payments.to_eth(),
        grid,
        position_values,
        values,
        status: if gaps.is_empty() { PathStatus::Complete } else { PathStatus::Partial(gaps) },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDecision {
    pub slot: u64,
    pub block_number: u64,
    pub day: i64,
    /// `Π_b(τ)` including any trailed value.
    pub value: f64,
    /// Value carried in from the previous, exercised slot.
    pub trailed: f64,
    pub exercised: bool,
    pub option_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DailyAggregate {
    pub day: i64,
    pub blocks: usize,
    pub exercises: usize,
    pub exercise_prob: f64,
    pub option_value_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualCell {
    pub window: f64,
    pub penalty: f64,
    pub decisions: Vec<BlockDecision>,
    pub daily: Vec<DailyAggregate>,
    pub blocks: usize,
    pub exercises: usize,
    pub exercise_prob: f64,
    pub option_value_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MitigationReport {
    pub trailing: bool,
    pub excluded_partial: usize,
    pub cells: Vec<CounterfactualCell>,
}

impl MitigationReport {
    pub fn cell(&self, window: f64, penalty: f64) -> Option<&CounterfactualCell> {
        self.cells
            .iter()
            .find(|c| (c.window - window).abs() < 1e-9 && (c.penalty - penalty).abs() < 1e-12)
    }
}

/// Exercise decisions `1{Π_b(τ) < -p}` for every window and penalty.
///
/// With `trailing`, an exercised block's non-position value (plus what
/// it had itself inherited) is added to the next slot's block when that
/// slot is present in `paths`. The pass is sequential in slot order.
/// Partial paths are excluded and break the trailing chain.
pub fn mitigation_counterfactual(
    paths: &[BlockValuePath],
    windows: &[f64],
    penalties: &[f64],
    trailing: bool,
) -> Result<MitigationReport> {
    let mut ordered: Vec<&BlockValuePath> = paths.iter().filter(|p| p.is_complete()).collect();
    ordered.sort_by_key(|p| (p.slot, p.block_number));
    let excluded_partial = paths.len() - ordered.len();
    let mut cells = Vec::with_capacity(windows.len() * penalties.len());
    for &window in windows {
        for &penalty in penalties {
            let mut decisions = Vec::with_capacity(ordered.len());
            let mut carry = 0.0;
            let mut prev_slot: Option<u64> = None;
            for path in &ordered {
                let position = path.position_value_at(window).ok_or_else(|| {
                    Error::config("windows", alloc::format!("window {window}s is not on the markout grid"))
                })?;
                let trailed = match prev_slot {
                    Some(s) if trailing && s + 1 == path.slot => carry,
                    _ => 0.0,
                };
                let value = (path.non_position_value + trailed) + position;
                let exercised = value < -penalty;
                let option_value = if exercised { (-value).max(0.0) } else { 0.0 };
                carry = if exercised { path.non_position_value + trailed } else { 0.0 };
                prev_slot = Some(path.slot);
                decisions.push(BlockDecision {
                    slot: path.slot,
                    block_number: path.block_number,
                    day: path.day(),
                    value,
                    trailed,
                    exercised,
                    option_value,
                });
            }
            let mut by_day: BTreeMap<i64, DailyAggregate> = BTreeMap::new();
            for d in &decisions {
                let row = by_day.entry(d.day).or_insert(DailyAggregate {
                    day: d.day,
                    blocks: 0,
                    exercises: 0,
                    exercise_prob: 0.0,
                    option_value_sum: 0.0,
                });
                row.blocks += 1;
                row.exercises += usize::from(d.exercised);
                row.option_value_sum += d.option_value;
            }
            let daily: Vec<DailyAggregate> = by_day
                .into_values()
                .map(|mut r| {
                    r.exercise_prob = r.exercises as f64 / r.blocks as f64;
                    r
                })
                .collect();
            let exercises = decisions.iter().filter(|d| d.exercised).count();
            let blocks = decisions.len();
            cells.push(CounterfactualCell {
                window,
                penalty,
                blocks,
                exercises,
                exercise_prob: if blocks == 0 { 0.0 } else { exercises as f64 / blocks as f64 },
                option_value_sum: decisions.iter().map(|d| d.option_value).sum(),
                decisions,
                daily,
            });
        }
    }
    Ok(MitigationReport { trailing, excluded_partial, cells })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuilderRow {
    pub builder_id: String,
    pub blocks: usize,
    pub market_share: f64,
    pub mean_cexdex_share: f64,
    pub exercise_prob: f64,
    pub low_sample: bool,
}

/// Pearson correlation with its t statistic on `n - 2` degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub n: usize,
    pub t_stat: f64,
    pub df: usize,
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<Correlation> {
    let n = xs.len();
    if n != ys.len() || n < 3 {
        return None;
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let r = (sxy / libm::sqrt(sxx * syy)).clamp(-1.0, 1.0);
    let df = n - 2;
    let t_stat = if r.abs() == 1.0 {
        f64::INFINITY.copysign(r)
    } else {
        r * libm::sqrt(df as f64 / (1.0 - r * r))
    };
    Some(Correlation { r, n, t_stat, df })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneityReport {
    pub window: f64,
    pub penalty: f64,
    pub builders: Vec<BuilderRow>,
    /// Daily mean CEX-DEX share against daily exercise probability.
    pub correlation: Option<Correlation>,
    pub days: usize,
}

/// Per-builder market share, CEX-DEX share and exercise probability at
/// one `(window, penalty)`, plus the cross-day correlation between
/// CEX-DEX share and exercise probability.
pub fn heterogeneity_report(paths: &[BlockValuePath], window: f64, penalty: f64) -> Result<HeterogeneityReport> {
    let report = mitigation_counterfactual(paths, &[window], &[penalty], false)?;
    let cell = &report.cells[0];
    let by_block: BTreeMap<u64, &BlockDecision> = cell.decisions.iter().map(|d| (d.block_number, d)).collect();
    let complete: Vec<&BlockValuePath> = paths.iter().filter(|p| p.is_complete()).collect();
    let total = complete.len().max(1) as f64;

    #[derive(Default)]
    struct Group {
        blocks: usize,
        share_sum: f64,
        share_n: usize,
        exercises: usize,
    }
    let mut groups: BTreeMap<&str, Group> = BTreeMap::new();
    let mut days: BTreeMap<i64, Group> = BTreeMap::new();
    for path in &complete {
        let exercised = by_block.get(&path.block_number).map(|d| d.exercised).unwrap_or(false);
        for g in [groups.entry(path.builder_id.as_str()).or_default(), days.entry(path.day()).or_default()] {
            g.blocks += 1;
            g.exercises += usize::from(exercised);
            if let Some(s) = path.cexdex_share() {
                g.share_sum += s;
                g.share_n += 1;
            }
        }
    }
    let builders = groups
        .into_iter()
        .map(|(id, g)| BuilderRow {
            builder_id: id.to_string(),
            blocks: g.blocks,
            market_share: g.blocks as f64 / total,
            mean_cexdex_share: if g.share_n == 0 { 0.0 } else { g.share_sum / g.share_n as f64 },
            exercise_prob: g.exercises as f64 / g.blocks as f64,
            low_sample: g.blocks < LOW_SAMPLE_BLOCKS,
        })
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = days
        .values()
        .filter(|g| g.share_n > 0)
        .map(|g| (g.share_sum / g.share_n as f64, g.exercises as f64 / g.blocks as f64))
        .unzip();
    Ok(HeterogeneityReport {
        window,
        penalty,
        builders,
        correlation: pearson(&xs, &ys),
        days: days.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolatilityRow {
    pub bucket_start_ms: i64,
    pub high: f64,
    pub low: f64,
    /// `log10(P_high / P_low)`.
    pub log10_range: f64,
}

/// `log10(max / min)` of the price within each `bucket_ms`-wide bucket.
/// Empty buckets produce no row.
pub fn volatility_metric(series: &QuoteSeries, bucket_ms: i64) -> Vec<VolatilityRow> {
    let mut rows: Vec<VolatilityRow> = Vec::new();
    for (&ts, &p) in series.timestamps_ms.iter().zip(&series.prices) {
        let start = ts.div_euclid(bucket_ms) * bucket_ms;
        match rows.last_mut() {
            Some(row) if row.bucket_start_ms == start => {
                row.high = row.high.max(p);
                row.low = row.low.min(p);
            }
            _ => rows.push(VolatilityRow { bucket_start_ms: start, high: p, low: p, log10_range: 0.0 }),
        }
    }
    for row in rows.iter_mut() {
        row.log10_range = libm::log10(row.high / row.low);
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn wei(s: &str) -> Wei {
        s.parse().unwrap()
    }

    fn trade(x: f64, token_buy: &str, y: f64, token_sell: &str) -> TradeRecord {
        TradeRecord {
            trade_id: "t1".into(),
            block_number: 1,
            searcher_id: "s".into(),
            token_buy: token_buy.into(),
            amount_buy: x,
            token_sell: token_sell.into(),
            amount_sell: y,
            tip: Wei::ZERO,
            transfer: Wei::ZERO,
            base_fee: Wei::ZERO,
        }
    }

    fn flat_book(token: &str, price: f64) -> QuoteBook {
        let mut s = QuoteSeries::new(token);
        for k in 0..=20 {
            s.push(k * 500, price).unwrap();
        }
        let mut book = QuoteBook::default();
        book.insert(s);
        book
    }

    #[test]
    fn wei_parse_and_display() {
        assert_eq!(wei("0.0659"), Wei(65_900_000_000_000_000));
        assert_eq!(wei("1"), Wei(WEI_PER_ETH));
        assert_eq!(wei("-0.5"), Wei(-WEI_PER_ETH / 2));
        assert_eq!(wei(".25"), Wei(WEI_PER_ETH / 4));
        assert_eq!(wei("0.000000000000000001"), Wei(1));
        assert_eq!(wei("0.1000000000000000000"), Wei(WEI_PER_ETH / 10));
        assert!("0.0000000000000000001".parse::<Wei>().is_err());
        assert!("abc".parse::<Wei>().is_err());
        assert!("".parse::<Wei>().is_err());
        assert_eq!(wei("0.0659").to_string(), "0.0659");
        assert_eq!(Wei(-1).to_string(), "-0.000000000000000001");
        assert_eq!(wei("0.0659").to_eth(), 0.0659);
    }

    #[test]
    fn markout_flat_position_is_zero() {
        let book = flat_book("USDC", 0.0005);
        let t = trade(1.0, "WETH", 2000.0, "USDC");
        let cfg = MarkoutConfig { taker_fee_rate: 0.0, ..Default::default() };
        assert_eq!(markout(&t, &book, 0, 1.0, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn markout_arithmetic() {
        let book = flat_book("USDC", 0.00049);
        let mut t = trade(1.0, "WETH", 2000.0, "USDC");
        t.base_fee = wei("0.001");
        let cfg = MarkoutConfig { taker_fee_rate: 0.0, ..Default::default() };
        let pi = markout(&t, &book, 0, 0.0, &cfg).unwrap();
        assert!((pi - 0.019).abs() < 1e-12);
        let with_fee = markout(&t, &book, 0, 0.0, &MarkoutConfig::default()).unwrap();
        assert!((pi - with_fee - DEFAULT_TAKER_FEE_RATE * 1.98).abs() < 1e-15);
    }

    #[test]
    fn missing_or_stale_quotes_flag_the_trade() {
        let book = flat_book("USDC", 0.0005);
        let t = trade(1.0, "WETH", 2000.0, "DAI");
        let gap = markout(&t, &book, 0, 0.0, &MarkoutConfig::default()).unwrap_err();
        assert_eq!(gap.token, "DAI");
        let mut s = QuoteSeries::new("USDC");
        s.push(0, 0.0005).unwrap();
        let mut book = QuoteBook::default();
        book.insert(s);
        let t = trade(1.0, "WETH", 2000.0, "USDC");
        assert!(markout(&t, &book, 0, 2.0, &MarkoutConfig::default()).is_ok());
        assert!(markout(&t, &book, 0, 2.5, &MarkoutConfig::default()).is_err());
    }

    #[test]
    fn quote_series_rejects_disorder() {
        let mut s = QuoteSeries::new("X");
        s.push(10, 1.0).unwrap();
        assert!(s.push(10, 1.0).is_err());
        assert!(s.push(11, 0.0).is_err());
    }

    fn block(total: &str) -> BlockRecord {
        BlockRecord { slot: 1, block_number: 1, builder_id: "b".into(), timestamp_ms: 0, total_value: wei(total) }
    }

    #[test]
    fn block_without_trades_is_flat() {
        let path = block_value_path(&block("0.3"), &[], &QuoteBook::default(), &MarkoutConfig::default()).unwrap();
        assert_eq!(path.grid.len(), 17);
        assert!(path.values.iter().all(|&v| v == 0.3));
        assert_eq!(path.option_value_at(8.0), Some(0.0));
        assert!(path.is_complete());
    }

    #[test]
    fn markouts_offsetting_payments_leave_block_value() {
        let book = flat_book("USDC", 0.0005);
        let mut t = trade(1.0, "WETH", 1800.0, "USDC");
        t.tip = wei("0.05");
        t.transfer = wei("0.05");
        let cfg = MarkoutConfig { taker_fee_rate: 0.0, ..Default::default() };
        let path = block_value_path(&block("0.4"), &[&t], &book, &cfg).unwrap();
        assert!(path.values.iter().all(|&v| (v - 0.4).abs() < 1e-15));
    }

    #[test]
    fn partial_blocks_excluded() {
        let t = trade(1.0, "WETH", 2000.0, "DAI");
        let path = block_value_path(&block("0.1"), &[&t], &QuoteBook::default(), &MarkoutConfig::default()).unwrap();
        assert!(!path.is_complete());
        let report = mitigation_counterfactual(&[path], &[8.0], &[0.0], false).unwrap();
        assert_eq!(report.excluded_partial, 1);
        assert_eq!(report.cells[0].blocks, 0);
    }

    fn synthetic_path(slot: u64, non_position: f64, position: f64) -> BlockValuePath {
        let grid = MarkoutConfig::default().grid();
        let n = grid.len();
        BlockValuePath {
            slot,
            block_number: slot,
            builder_id: "b".into(),
            timestamp_ms: slot as i64 * 12_000,
            total_value: non_position,
            non_position_value: non_position,
            cexdex_payments: 0.0,
            grid,
            position_values: alloc::vec![position; n],
            values: alloc::vec![non_position + position; n],
            status: PathStatus::Complete,
        }
    }

    #[test]
    fn large_penalty_stops_all_exercise() {
        let paths = [synthetic_path(1, 0.01, -0.2), synthetic_path(2, 0.02, -0.5)];
        let r = mitigation_counterfactual(&paths, &[8.0], &[0.0, 0.49], false).unwrap();
        assert_eq!(r.cell(8.0, 0.0).unwrap().exercises, 2);
        assert_eq!(r.cell(8.0, 0.49).unwrap().exercises, 0);
    }

    #[test]
    fn trailing_carries_to_consecutive_slot_only() {
        let paths = [synthetic_path(1, 0.3, -0.5), synthetic_path(2, 0.1, -0.2), synthetic_path(4, 0.1, -0.2)];
        let plain = mitigation_counterfactual(&paths, &[8.0], &[0.0], false).unwrap();
        assert_eq!(plain.cells[0].exercises, 3);
        let trailed = mitigation_counterfactual(&paths, &[8.0], &[0.0], true).unwrap();
        let d = &trailed.cells[0].decisions;
        assert!(d[0].exercised);
        assert!((d[1].trailed - 0.3).abs() < 1e-15);
        assert!(!d[1].exercised);
        assert_eq!(d[2].trailed, 0.0);
        assert!(d[2].exercised);
    }

    #[test]
    fn off_grid_window_is_error() {
        let paths = [synthetic_path(1, 0.3, -0.5)];
        assert!(mitigation_counterfactual(&paths, &[8.25], &[0.0], false).is_err());
    }

    #[test]
    fn heterogeneity_single_builder_and_symmetry() {
        let mut paths = alloc::vec![synthetic_path(1, 0.1, -0.2), synthetic_path(2, 0.1, 0.2)];
        let r = heterogeneity_report(&paths, 8.0, 0.0).unwrap();
        assert_eq!(r.builders.len(), 1);
        assert_eq!(r.builders[0].market_share, 1.0);
        assert!(r.builders[0].low_sample);
        paths.push(BlockValuePath { builder_id: "c".into(), slot: 3, block_number: 3, ..paths[0].clone() });
        paths.push(BlockValuePath { builder_id: "c".into(), slot: 4, block_number: 4, ..paths[1].clone() });
        let r = heterogeneity_report(&paths, 8.0, 0.0).unwrap();
        assert_eq!(r.builders[0].exercise_prob, r.builders[1].exercise_prob);
        assert_eq!(r.builders[0].market_share, 0.5);
    }

    #[test]
    fn pearson_basics() {
        let c = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.1, 5.9, 8.0]).unwrap();
        assert!(c.r > 0.99);
        assert_eq!(c.df, 2);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_none());
        let c = pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap();
        assert_eq!(c.r, -1.0);
    }

    #[test]
    fn volatility_examples() {
        let mut s = QuoteSeries::new("ETH");
        s.push(0, 100.0).unwrap();
        s.push(1, 102.0).unwrap();
        s.push(2, 99.0).unwrap();
        s.push(1_000, 5.0).unwrap();
        s.push(1_001, 50.0).unwrap();
        s.push(2_000, 7.0).unwrap();
        let rows = volatility_metric(&s, 1_000);
        assert_eq!(rows.len(), 3);
        assert!((rows[0].log10_range - 0.012_964_977_164_367_6).abs() < 1e-10);
        assert!((rows[1].log10_range - 1.0).abs() < 1e-15);
        assert_eq!(rows[2].log10_range, 0.0);
    }

    proptest! {
        #[test]
        fn wei_text_round_trip(v in any::<i64>(), scale in 0u32..6) {
            let w = Wei(i128::from(v) * 10i128.pow(scale));
            prop_assert_eq!(w.to_string().parse::<Wei>().unwrap(), w);
        }

        #[test]
        fn quantized_f64_is_stable(x in -10.0f64..10.0) {
            let q = Wei::from_eth(x).to_eth();
            prop_assert_eq!(Wei::from_eth(q).to_eth(), q);
            prop_assert_eq!(q.to_string().parse::<f64>().unwrap(), q);
        }
    }
}
