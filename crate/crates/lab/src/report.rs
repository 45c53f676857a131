//! Report rows and writers.
//!
//! Every numeric column carries its unit as a suffix:
//! `_num` numéraire, `_eth` ether, `_s` seconds, `_ms` milliseconds,
//! `_frac` probability or fraction, `_count` count, `_idx` index,
//! `_units` risky-asset units, `_z` standard deviations, `_log10` base-10
//! log of a ratio, `_ratio` other dimensionless ratio.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use freeopt_core::controller::TraceRow;
use freeopt_core::replay::{BlockDecision, BlockValuePath, BuilderRow, CounterfactualCell, PathStatus, VolatilityRow};
use freeopt_core::sim::{AggregateRow, Bucket, SlotOutcome, SweepCell};
use freeopt_core::{OptionDecision, Side};
use serde::Serialize;

/// A CSV row with a fixed header, so empty reports still carry one.
pub trait CsvRow: Serialize {
    const HEADER: &'static [&'static str];
}

pub fn write_csv<T: CsvRow>(path: &Path, rows: impl IntoIterator<Item = T>) -> anyhow::Result<()> {
    let file = File::create(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(io::BufWriter::new(file));
    w.write_record(T::HEADER)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let mut file = io::BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut file, value)?;
    file.write_all(b"\n")?;
    file.flush()?;
    Ok(())
}

fn side_name(side: Side) -> &'static str {
    match side {
        Side::Buy => "buy",
        Side::Sell => "sell",
    }
}

macro_rules! csv_row {
    ($(#[$meta:meta])* pub struct $name:ident { $(pub $field:ident : $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize)]
        pub struct $name { $(pub $field: $ty,)* }

        impl CsvRow for $name {
            const HEADER: &'static [&'static str] = &[$(stringify!($field)),*];
        }
    };
}

csv_row! {
    pub struct SolveRow {
        pub method: &'static str,
        pub optimal_y_num: f64,
        pub y_over_sigma_l_ratio: Option<f64>,
        pub value_v_num: f64,
        pub exercise_prob_frac: f64,
        pub no_option_value_num: f64,
        pub net_option_value_num: f64,
        pub z_star_z: Option<f64>,
        pub post_trade_overshoot_frac: f64,
        pub sigma_eff_frac: f64,
        pub foc_residual_ratio: f64,
        pub at_bound: bool,
        pub evaluations_count: usize,
        pub polish_steps_count: usize,
        pub standard_error_num: Option<f64>,
    }
}

impl SolveRow {
    pub fn new(d: &OptionDecision, sigma_eff: f64, liquidity: f64) -> Self {
        let scale = sigma_eff * liquidity;
        SolveRow {
            method: match d.diagnostics.method {
                freeopt_core::SolveMethod::ClosedForm => "closed_form",
                freeopt_core::SolveMethod::MonteCarlo => "monte_carlo",
                freeopt_core::SolveMethod::Deterministic => "deterministic",
            },
            optimal_y_num: d.optimal_y,
            y_over_sigma_l_ratio: (scale > 0.0).then(|| d.optimal_y / scale),
            value_v_num: d.value_v,
            exercise_prob_frac: d.exercise_prob,
            no_option_value_num: d.no_option_value,
            net_option_value_num: d.net_option_value,
            z_star_z: d.z_star,
            post_trade_overshoot_frac: d.post_trade_overshoot,
            sigma_eff_frac: sigma_eff,
            foc_residual_ratio: d.diagnostics.foc_residual,
            at_bound: d.diagnostics.at_bound,
            evaluations_count: d.diagnostics.evaluations,
            polish_steps_count: d.diagnostics.polish_steps,
            standard_error_num: d.diagnostics.standard_error,
        }
    }
}

csv_row! {
    pub struct SlotRow {
        pub slot_idx: u64,
        pub day_idx: u64,
        pub regime_idx: usize,
        pub window_s: f64,
        pub penalty_num: f64,
        pub mu_effective_num: f64,
        pub trailed_num: f64,
        pub sigma_used_frac: f64,
        pub side: &'static str,
        pub y_star_num: f64,
        pub units_units: f64,
        pub dex_amount_num: f64,
        pub position_value_at_commit_num: f64,
        pub realized_return_frac: f64,
        pub pi_at_deadline_num: f64,
        pub exercised: bool,
        pub option_value_realized_num: f64,
        pub penalty_charged_num: f64,
        pub builder_pnl_num: f64,
    }
}

impl From<&SlotOutcome> for SlotRow {
    fn from(o: &SlotOutcome) -> Self {
        SlotRow {
            slot_idx: o.slot,
            day_idx: o.day,
            regime_idx: o.regime,
            window_s: o.window,
            penalty_num: o.penalty,
            mu_effective_num: o.mu_effective,
            trailed_num: o.trailed,
            sigma_used_frac: o.sigma_used,
            side: side_name(o.side),
            y_star_num: o.y_star,
            units_units: o.units,
            dex_amount_num: o.dex_amount,
            position_value_at_commit_num: o.position_value_at_commit,
            realized_return_frac: o.realized_return,
            pi_at_deadline_num: o.pi_at_deadline,
            exercised: o.exercised,
            option_value_realized_num: o.option_value_realized,
            penalty_charged_num: o.penalty_charged,
            builder_pnl_num: o.builder_pnl,
        }
    }
}

csv_row! {
    pub struct AggregateCsvRow {
        pub bucket: &'static str,
        pub bucket_idx: u64,
        pub slots_count: u64,
        pub exercises_count: u64,
        pub exercise_prob_frac: f64,
        pub option_value_num: f64,
        pub penalties_num: f64,
        pub block_value_num: f64,
        pub builder_pnl_num: f64,
        pub missed_share_frac: f64,
        pub cexdex_share_frac: f64,
    }
}

impl From<&AggregateRow> for AggregateCsvRow {
    fn from(r: &AggregateRow) -> Self {
        let (bucket, bucket_idx) = match r.bucket {
            Bucket::Day(d) => ("day", d),
            Bucket::Regime(k) => ("regime", k as u64),
        };
        AggregateCsvRow {
            bucket,
            bucket_idx,
            slots_count: r.slots,
            exercises_count: r.exercises,
            exercise_prob_frac: r.exercise_prob,
            option_value_num: r.option_value,
            penalties_num: r.penalties,
            block_value_num: r.block_value,
            builder_pnl_num: r.builder_pnl,
            missed_share_frac: r.missed_share,
            cexdex_share_frac: r.cexdex_share,
        }
    }
}

csv_row! {
    pub struct SweepRow {
        pub window_s: f64,
        pub penalty_num: f64,
        pub slots_count: u64,
        pub exercises_count: u64,
        pub exercise_prob_frac: f64,
        pub option_value_num: f64,
        pub builder_pnl_num: f64,
        pub missed_share_frac: f64,
        pub cexdex_share_frac: f64,
        pub cexdex_share_target_frac: Option<f64>,
        pub exercise_prob_after_empty_frac: Option<f64>,
        pub exercise_prob_after_full_frac: Option<f64>,
    }
}

impl SweepRow {
    pub fn new(c: &SweepCell, target: Option<f64>) -> Self {
        SweepRow {
            window_s: c.window,
            penalty_num: c.penalty,
            slots_count: c.slots,
            exercises_count: c.exercises,
            exercise_prob_frac: c.exercise_prob,
            option_value_num: c.option_value,
            builder_pnl_num: c.builder_pnl,
            missed_share_frac: c.missed_share,
            cexdex_share_frac: c.cexdex_share,
            cexdex_share_target_frac: target,
            exercise_prob_after_empty_frac: c.exercise_prob_after_empty,
            exercise_prob_after_full_frac: c.exercise_prob_after_full,
        }
    }
}

csv_row! {
    pub struct BlockRow {
        pub slot_idx: u64,
        pub block_number: u64,
        pub builder_id: String,
        pub timestamp_ms: i64,
        pub status: &'static str,
        pub total_value_eth: f64,
        pub cexdex_payments_eth: f64,
        pub non_position_value_eth: f64,
        pub value_t0_eth: f64,
        pub commit_divergence_eth: f64,
        pub horizon_s: f64,
        pub value_horizon_eth: f64,
        pub option_value_horizon_eth: f64,
    }
}

impl BlockRow {
    pub fn new(p: &BlockValuePath, tainted: bool) -> Self {
        let status = match (&p.status, tainted) {
            (_, true) => "partial_rejected_trade",
            (PathStatus::Partial(_), _) => "partial_quote_gap",
            (PathStatus::Complete, false) => "complete",
        };
        let last = p.values.last().copied().unwrap_or(p.non_position_value);
        BlockRow {
            slot_idx: p.slot,
            block_number: p.block_number,
            builder_id: p.builder_id.clone(),
            timestamp_ms: p.timestamp_ms,
            status,
            total_value_eth: p.total_value,
            cexdex_payments_eth: p.cexdex_payments,
            non_position_value_eth: p.non_position_value,
            value_t0_eth: p.values.first().copied().unwrap_or(p.non_position_value),
            commit_divergence_eth: p.commit_divergence(),
            horizon_s: p.grid.last().copied().unwrap_or(0.0),
            value_horizon_eth: last,
            option_value_horizon_eth: (-last).max(0.0),
        }
    }
}

csv_row! {
    pub struct PathRow {
        pub block_number: u64,
        pub t_s: f64,
        pub position_value_eth: f64,
        pub value_eth: f64,
        pub option_value_eth: f64,
    }
}

pub fn path_rows(p: &BlockValuePath) -> impl Iterator<Item = PathRow> + '_ {
    p.grid.iter().zip(&p.position_values).zip(&p.values).map(|((&t, &pos), &v)| PathRow {
        block_number: p.block_number,
        t_s: t,
        position_value_eth: pos,
        value_eth: v,
        option_value_eth: (-v).max(0.0),
    })
}

csv_row! {
    pub struct CounterfactualRow {
        pub window_s: f64,
        pub penalty_eth: f64,
        pub trailing: bool,
        pub blocks_count: usize,
        pub exercises_count: usize,
        pub exercise_prob_frac: f64,
        pub option_value_sum_eth: f64,
    }
}

impl CounterfactualRow {
    pub fn new(c: &CounterfactualCell, trailing: bool) -> Self {
        CounterfactualRow {
            window_s: c.window,
            penalty_eth: c.penalty,
            trailing,
            blocks_count: c.blocks,
            exercises_count: c.exercises,
            exercise_prob_frac: c.exercise_prob,
            option_value_sum_eth: c.option_value_sum,
        }
    }
}

csv_row! {
    pub struct DailyRow {
        pub window_s: f64,
        pub penalty_eth: f64,
        pub day_idx: i64,
        pub blocks_count: usize,
        pub exercises_count: usize,
        pub exercise_prob_frac: f64,
        pub option_value_sum_eth: f64,
    }
}

pub fn daily_rows(c: &CounterfactualCell) -> impl Iterator<Item = DailyRow> + '_ {
    c.daily.iter().map(move |d| DailyRow {
        window_s: c.window,
        penalty_eth: c.penalty,
        day_idx: d.day,
        blocks_count: d.blocks,
        exercises_count: d.exercises,
        exercise_prob_frac: d.exercise_prob,
        option_value_sum_eth: d.option_value_sum,
    })
}

csv_row! {
    pub struct DecisionRow {
        pub window_s: f64,
        pub penalty_eth: f64,
        pub slot_idx: u64,
        pub block_number: u64,
        pub value_eth: f64,
        pub trailed_eth: f64,
        pub exercised: bool,
        pub option_value_eth: f64,
    }
}

impl DecisionRow {
    pub fn new(window: f64, penalty: f64, d: &BlockDecision) -> Self {
        DecisionRow {
            window_s: window,
            penalty_eth: penalty,
            slot_idx: d.slot,
            block_number: d.block_number,
            value_eth: d.value,
            trailed_eth: d.trailed,
            exercised: d.exercised,
            option_value_eth: d.option_value,
        }
    }
}

csv_row! {
    pub struct BuilderCsvRow {
        pub builder_id: String,
        pub blocks_count: usize,
        pub market_share_frac: f64,
        pub mean_cexdex_share_frac: f64,
        pub exercise_prob_frac: f64,
        pub low_sample: bool,
    }
}

impl From<&BuilderRow> for BuilderCsvRow {
    fn from(b: &BuilderRow) -> Self {
        BuilderCsvRow {
            builder_id: b.builder_id.clone(),
            blocks_count: b.blocks,
            market_share_frac: b.market_share,
            mean_cexdex_share_frac: b.mean_cexdex_share,
            exercise_prob_frac: b.exercise_prob,
            low_sample: b.low_sample,
        }
    }
}

csv_row! {
    pub struct VolatilityCsvRow {
        pub bucket_start_ms: i64,
        pub high_eth: f64,
        pub low_eth: f64,
        pub range_log10: f64,
    }
}

impl From<&VolatilityRow> for VolatilityCsvRow {
    fn from(v: &VolatilityRow) -> Self {
        VolatilityCsvRow { bucket_start_ms: v.bucket_start_ms, high_eth: v.high, low_eth: v.low, range_log10: v.log10_range }
    }
}

csv_row! {
    pub struct TraceCsvRow {
        pub round_idx: u64,
        pub penalty_num: f64,
        pub exercised: bool,
        pub exercise_prob_frac: Option<f64>,
        pub oracle_penalty_num: Option<f64>,
    }
}

impl From<&TraceRow> for TraceCsvRow {
    fn from(r: &TraceRow) -> Self {
        TraceCsvRow {
            round_idx: r.t,
            penalty_num: r.penalty,
            exercised: r.exercised,
            exercise_prob_frac: r.exercise_prob,
            oracle_penalty_num: r.oracle_penalty,
        }
    }
}
