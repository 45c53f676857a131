//! Subcommand implementations. Each `*_to` function writes its reports
//! into an output directory and returns the in-memory results.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context};
use freeopt_core::controller::{
    run_controlled_with, run_feedback, GaussianThreshold, PiecewiseGaussian, RegretReport, TraceRow,
};
use freeopt_core::replay::{
    block_value_path, heterogeneity_report, mitigation_counterfactual, volatility_metric, BlockValuePath, Correlation,
    HeterogeneityReport, MarkoutConfig, MitigationReport, VolatilityRow,
};
use freeopt_core::sim::{aggregate, export_cell, run_cell, BucketBy, ScenarioConfig, SlotOutcome, SweepCell};
use freeopt_core::OptionDecision;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::config::{ControlFile, EnvironmentSpec, ReplayFile, SolveFile};
use crate::dataset::{self, Dataset, Rejection};
use crate::report::{self, *};

/// Default Monte Carlo size when a config asks for sampling without one.
pub const DEFAULT_MC_SAMPLES: usize = 1_000_000;
/// Exported datasets carry quotes out to this horizon.
pub const EXPORT_HORIZON_S: f64 = 8.0;

fn pool(jobs: usize) -> anyhow::Result<rayon::ThreadPool> {
    Ok(rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?)
}

pub fn solve(file: &SolveFile, seed: Option<u64>) -> anyhow::Result<OptionDecision> {
    let problem = &file.problem;
    let decision = match file.monte_carlo {
        Some(mc) => problem.solve_mc(mc.n_samples, seed.unwrap_or(mc.seed))?,
        None if !problem.returns.is_normal() => problem.solve_mc(DEFAULT_MC_SAMPLES, seed.unwrap_or(0))?,
        None => problem.solve()?,
    };
    Ok(decision)
}

pub fn solve_to(file: &SolveFile, seed: Option<u64>, out: &Path) -> anyhow::Result<(OptionDecision, SolveRow)> {
    let decision = solve(file, seed)?;
    let row = SolveRow::new(&decision, file.problem.sigma_eff(), file.problem.pool.liquidity);
    write_csv(&out.join("solve.csv"), [row.clone()])?;
    write_json(&out.join("decision.json"), &decision)?;
    Ok((decision, row))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimulateSummary {
    pub window_s: f64,
    pub penalty_num: f64,
    pub slots_count: usize,
    pub exercises_count: usize,
    pub days_count: usize,
    pub dataset_exported: bool,
}

/// One `(window, penalty)` cell: per-slot rows plus daily and regime
/// aggregates. With `export`, also writes the cell as a replay dataset
/// under `dataset/`.
pub fn simulate_to(
    config: &ScenarioConfig,
    window: f64,
    penalty: f64,
    export: bool,
    out: &Path,
) -> anyhow::Result<(Vec<SlotOutcome>, SimulateSummary)> {
    config.validate()?;
    let outcomes = if export {
        let (outcomes, data) = export_cell(config, window, penalty, EXPORT_HORIZON_S)?;
        dataset::write_dataset(&out.join("dataset"), &data)?;
        outcomes
    } else {
        freeopt_core::sim::run_scenario(config, window, penalty)?.collect::<Result<Vec<_>, _>>()?
    };
    write_csv(&out.join("slots.csv"), outcomes.iter().map(SlotRow::from))?;
    let daily = aggregate(&outcomes, BucketBy::Day, config.baseline_missed_rate);
    write_csv(&out.join("daily.csv"), daily.iter().map(AggregateCsvRow::from))?;
    let regimes = aggregate(&outcomes, BucketBy::Regime, config.baseline_missed_rate);
    write_csv(&out.join("regimes.csv"), regimes.iter().map(AggregateCsvRow::from))?;
    let summary = SimulateSummary {
        window_s: window,
        penalty_num: penalty,
        slots_count: outcomes.len(),
        exercises_count: outcomes.iter().filter(|o| o.exercised).count(),
        days_count: daily.len(),
        dataset_exported: export,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok((outcomes, summary))
}

/// Window × penalty matrix; cells run in parallel on a shared market path.
pub fn sweep(config: &ScenarioConfig, jobs: usize) -> anyhow::Result<Vec<SweepCell>> {
    config.validate()?;
    let cells: Vec<(f64, f64)> = config
        .window_grid
        .iter()
        .flat_map(|&w| config.penalty_grid.iter().map(move |&p| (w, p)))
        .collect();
    let results = pool(jobs)?.install(|| {
        cells.par_iter().map(|&(w, p)| run_cell(config, w, p)).collect::<Result<Vec<_>, _>>()
    })?;
    Ok(results)
}

pub fn sweep_to(config: &ScenarioConfig, jobs: usize, out: &Path) -> anyhow::Result<Vec<SweepCell>> {
    let cells = sweep(config, jobs)?;
    write_csv(&out.join("sweep.csv"), cells.iter().map(|c| SweepRow::new(c, config.cexdex_share_target)))?;
    Ok(cells)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExclusionCounts {
    pub ingested: usize,
    pub complete: usize,
    pub partial: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationSummary {
    pub r: f64,
    pub n: usize,
    pub t_stat: f64,
    pub df: usize,
    /// Two-sided p-value from Student's t.
    pub p_value: f64,
}

impl From<Correlation> for CorrelationSummary {
    fn from(c: Correlation) -> Self {
        let p_value = if c.t_stat.is_infinite() {
            0.0
        } else {
            let t = StudentsT::new(0.0, 1.0, c.df as f64).expect("df >= 1");
            2.0 * t.sf(c.t_stat.abs())
        };
        CorrelationSummary { r: c.r, n: c.n, t_stat: c.t_stat, df: c.df, p_value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplaySummary {
    pub blocks: ExclusionCounts,
    pub trades_loaded: usize,
    pub trade_rows_rejected: usize,
    pub quote_rows_rejected: usize,
    pub trailing: bool,
    pub heterogeneity_window_s: f64,
    pub heterogeneity_penalty_eth: f64,
    pub correlation: Option<CorrelationSummary>,
    pub days: usize,
    pub warnings: Vec<String>,
}

pub struct ReplayOutput {
    pub paths: Vec<BlockValuePath>,
    pub mitigation: MitigationReport,
    pub heterogeneity: HeterogeneityReport,
    pub volatility: Vec<VolatilityRow>,
    pub summary: ReplaySummary,
}

/// Block value paths for every ingested block, computed in parallel.
pub fn block_paths(data: &Dataset, markout: &MarkoutConfig, jobs: usize) -> anyhow::Result<Vec<BlockValuePath>> {
    let by_block = data.trades_by_block();
    let empty = Vec::new();
    let paths = pool(jobs)?.install(|| {
        data.blocks
            .par_iter()
            .map(|b| block_value_path(b, by_block.get(&b.block_number).unwrap_or(&empty), &data.quotes, markout))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(paths)
}

/// Paths usable for aggregates: complete and free of rejected trades.
pub fn usable_paths(paths: &[BlockValuePath], tainted: &BTreeSet<u64>) -> Vec<BlockValuePath> {
    paths.iter().filter(|p| p.is_complete() && !tainted.contains(&p.block_number)).cloned().collect()
}

fn rejection_warning(r: &Rejection) -> String {
    format!("{}:{}: {}", r.file, r.line, r.reason)
}

pub fn replay(data: &Dataset, settings: &ReplayFile, jobs: usize) -> anyhow::Result<ReplayOutput> {
    let paths = block_paths(data, &settings.markout, jobs)?;
    let usable = usable_paths(&paths, &data.tainted_blocks);
    let mitigation = mitigation_counterfactual(&usable, &settings.windows, &settings.penalties, settings.trailing)?;
    let heterogeneity =
        heterogeneity_report(&usable, settings.heterogeneity.window, settings.heterogeneity.penalty)?;
    let volatility = match &settings.volatility_token {
        Some(token) => match data.quotes.series.get(token) {
            Some(series) => volatility_metric(series, settings.volatility_bucket_ms),
            None => bail!("volatility_token `{token}` has no quotes"),
        },
        None => Vec::new(),
    };
    let partial = paths.len() - usable.len();
    let mut warnings: Vec<String> = data.rejected.iter().map(rejection_warning).collect();
    for p in &paths {
        if data.tainted_blocks.contains(&p.block_number) {
            warnings.push(format!("block {}: excluded, a trade row was rejected", p.block_number));
        } else if let freeopt_core::replay::PathStatus::Partial(gaps) = &p.status {
            for g in gaps {
                warnings.push(format!(
                    "block {}: excluded, trade `{}` has no fresh `{}` quote at {} ms",
                    p.block_number, g.trade_id, g.token, g.at_ms
                ));
            }
        }
    }
    let summary = ReplaySummary {
        blocks: ExclusionCounts {
            ingested: data.block_rows,
            complete: usable.len(),
            partial,
            rejected: data.rejected_blocks(),
        },
        trades_loaded: data.trades.len(),
        trade_rows_rejected: data.rejected.iter().filter(|r| r.file == dataset::TRADES_FILE).count(),
        quote_rows_rejected: data.rejected.iter().filter(|r| r.file == dataset::QUOTES_FILE).count(),
        trailing: settings.trailing,
        heterogeneity_window_s: settings.heterogeneity.window,
        heterogeneity_penalty_eth: settings.heterogeneity.penalty,
        correlation: heterogeneity.correlation.map(CorrelationSummary::from),
        days: heterogeneity.days,
        warnings,
    };
    Ok(ReplayOutput { paths, mitigation, heterogeneity, volatility, summary })
}

pub fn replay_to(data: &Dataset, settings: &ReplayFile, jobs: usize, out: &Path) -> anyhow::Result<ReplayOutput> {
    let r = replay(data, settings, jobs)?;
    write_csv(
        &out.join("blocks.csv"),
        r.paths.iter().map(|p| BlockRow::new(p, data.tainted_blocks.contains(&p.block_number))),
    )?;
    write_csv(&out.join("paths.csv"), r.paths.iter().flat_map(report::path_rows))?;
    let trailing = r.mitigation.trailing;
    write_csv(&out.join("counterfactual.csv"), r.mitigation.cells.iter().map(|c| CounterfactualRow::new(c, trailing)))?;
    write_csv(&out.join("daily.csv"), r.mitigation.cells.iter().flat_map(report::daily_rows))?;
    write_csv(
        &out.join("decisions.csv"),
        r.mitigation
            .cells
            .iter()
            .flat_map(|c| c.decisions.iter().map(move |d| DecisionRow::new(c.window, c.penalty, d))),
    )?;
    write_csv(&out.join("builders.csv"), r.heterogeneity.builders.iter().map(BuilderCsvRow::from))?;
    write_csv(&out.join("volatility.csv"), r.volatility.iter().map(VolatilityCsvRow::from))?;
    write_json(&out.join("summary.json"), &r.summary)?;
    Ok(r)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlSummary {
    pub environment: &'static str,
    pub target_alpha: f64,
    pub p_max_num: f64,
    pub report: RegretReport,
    /// `√(2T log(2/δ))` at δ = 0.05.
    pub azuma_radius_95: f64,
    /// `α + 2/√T`.
    pub rate_bound: f64,
    pub unavailable: Vec<&'static str>,
}

pub fn control_to(file: &ControlFile, base_dir: &Path, seed: Option<u64>, out: &Path) -> anyhow::Result<ControlSummary> {
    let seed = seed.unwrap_or(file.seed);
    let stride = file.trace_stride;
    let trace_path = out.join("trace.csv");
    let mut trace: Vec<TraceCsvRow> = Vec::new();
    let mut keep = |row: &TraceRow| {
        if (row.t - 1).is_multiple_of(stride) {
            trace.push(TraceCsvRow::from(row));
        }
    };
    let (environment, config, report) = match &file.environment {
        EnvironmentSpec::Stationary { center, scale, .. } => {
            let ceiling = file.environment.ceiling().expect("synthetic environment");
            let config = file.controller.resolve(ceiling);
            let mut env = GaussianThreshold { center: *center, scale: *scale, ceiling };
            let report = run_controlled_with(&mut env, &config, file.rounds, seed, &mut keep)?;
            ("stationary", config, report)
        }
        EnvironmentSpec::Piecewise { levels, scale, .. } => {
            let ceiling = file.environment.ceiling().expect("synthetic environment");
            let config = file.controller.resolve(ceiling);
            let mut env = PiecewiseGaussian::evenly_spaced(levels, file.rounds, *scale, ceiling);
            let report = run_controlled_with(&mut env, &config, file.rounds, seed, &mut keep)?;
            ("piecewise", config, report)
        }
        EnvironmentSpec::Replay { dataset: dir, window, markout } => {
            let data = dataset::load_dir(&base_dir.join(dir))
                .with_context(|| format!("loading replay dataset {}", dir.display()))?;
            let mut usable = usable_paths(&block_paths(&data, markout, 1)?, &data.tainted_blocks);
            usable.sort_by_key(|p| (p.slot, p.block_number));
            let values: Vec<f64> = usable
                .iter()
                .map(|p| p.value_at(*window).context("window is not on the markout grid"))
                .collect::<anyhow::Result<_>>()?;
            let config = file.controller.resolve(f64::INFINITY);
            let (rows, report) = run_feedback(|t, p| values[(t - 1) as usize] < -p, &config, values.len() as u64)?;
            rows.iter().for_each(&mut keep);
            ("replay", config, report)
        }
    };
    write_csv(&trace_path, trace)?;
    let unavailable = if report.cost_regret.is_none() {
        vec!["cost_regret", "constraint_regret", "path_length", "avg_oracle_penalty", "martingale_gap"]
    } else {
        Vec::new()
    };
    let rounds = report.rounds.max(1);
    let summary = ControlSummary {
        environment,
        target_alpha: config.target_alpha,
        p_max_num: config.p_max,
        azuma_radius_95: RegretReport::azuma_radius(rounds, 0.05),
        rate_bound: config.target_alpha + 2.0 / (rounds as f64).sqrt(),
        report,
        unavailable,
    };
    write_json(&out.join("regret.json"), &summary)?;
    Ok(summary)
}

/// Creates `out` if needed.
pub fn prepare_out(out: &Path) -> anyhow::Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating output directory {}", out.display()))
}
