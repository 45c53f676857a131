//! Command-line interface.

use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use freeopt_core::sim::ScenarioConfig;

use crate::config::{self, ControlFile, ReplayFile, ScenarioFile, SolveFile};
use crate::dataset;
use crate::manifest::RunManifest;
use crate::run;

#[derive(Debug, Parser)]
#[command(name = "freeopt", version, about = "Price, simulate and mitigate the builder's free option")]
pub struct Cli {
    /// Output directory for reports and the run manifest.
    #[arg(long, global = true, env = "FREEOPT_OUT", default_value = "out")]
    pub out: PathBuf,
    /// Worker threads for parallel stages; defaults to available cores.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one option-sizing problem.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Seed for the Monte Carlo path.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run one window/penalty cell slot by slot.
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Window in seconds; defaults to the largest grid window.
        #[arg(long)]
        window: Option<f64>,
        /// Penalty; defaults to the first grid penalty.
        #[arg(long)]
        penalty: Option<f64>,
        /// Also write the cell as a replay dataset under `dataset/`.
        #[arg(long)]
        export_dataset: bool,
    },
    /// Run the window × penalty matrix.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
    },
    /// Replay a dataset directory holding blocks.csv, trades.csv, quotes.csv.
    Replay {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        windows: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        penalties: Option<Vec<f64>>,
        /// Carry a withheld block's non-position value into the next slot.
        #[arg(long)]
        trailing: bool,
    },
    /// Drive the dynamic penalty controller.
    Control {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override the window grid, e.g. `2,4,6,8`.
    #[arg(long, value_delimiter = ',')]
    pub windows: Option<Vec<f64>>,
    /// Override the penalty grid.
    #[arg(long, value_delimiter = ',')]
    pub penalties: Option<Vec<f64>>,
    /// Override the number of slots.
    #[arg(long)]
    pub slots: Option<u64>,
}

impl ScenarioArgs {
    fn load(&self) -> anyhow::Result<ScenarioConfig> {
        let mut file: ScenarioFile = config::load(&self.config)?;
        let s = &mut file.scenario;
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(w) = &self.windows {
            s.window_grid = w.clone();
        }
        if let Some(p) = &self.penalties {
            s.penalty_grid = p.clone();
        }
        if let Some(n) = self.slots {
            s.n_slots = n;
        }
        s.validate().map_err(|e| e.within("scenario")).with_context(|| format!("{}", self.config.display()))?;
        Ok(file.scenario)
    }
}

/// What a successful run wrote.
#[derive(Debug)]
pub struct RunResult {
    pub manifest: RunManifest,
    pub warnings: Vec<String>,
    pub summary: String,
}

fn jobs(requested: Option<usize>) -> usize {
    requested.filter(|&j| j > 0).unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn dataset_inputs(manifest: &mut RunManifest, dir: &Path) -> anyhow::Result<()> {
    for name in [dataset::BLOCKS_FILE, dataset::TRADES_FILE, dataset::QUOTES_FILE] {
        manifest.add_input(&dir.join(name)).with_context(|| format!("digesting {name}"))?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> anyhow::Result<RunResult> {
    let out = cli.out.clone();
    run::prepare_out(&out)?;
    let jobs = jobs(cli.jobs);
    let mut warnings = Vec::new();
    let (mut manifest, summary) = match &cli.command {
        Command::Solve { config: path, seed } => {
            let file: SolveFile = config::load(path)?;
            let (_, row) = run::solve_to(&file, *seed, &out)?;
            let mut m = RunManifest::new("solve", Some(path), *seed, &out);
            m.add_input(path)?;
            let ratio = row.y_over_sigma_l_ratio.map_or("n/a".to_string(), |r| format!("{r:.4}"));
            let summary = format!(
                "y* = {:.6} (y*/(σ_eff·L) = {ratio}), V* = {:.6}, P* = {:.4}, overshoot = {:.6}, FOC residual = {:.2e}",
                row.optimal_y_num, row.value_v_num, row.exercise_prob_frac, row.post_trade_overshoot_frac, row.foc_residual_ratio
            );
            (m, summary)
        }
        Command::Simulate { scenario, window, penalty, export_dataset } => {
            let cfg = scenario.load()?;
            let w = window.unwrap_or_else(|| cfg.window_grid.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            let p = penalty.unwrap_or(cfg.penalty_grid[0]);
            let (_, s) = run::simulate_to(&cfg, w, p, *export_dataset, &out)?;
            let mut m = RunManifest::new("simulate", Some(&scenario.config), Some(cfg.seed), &out);
            m.add_input(&scenario.config)?;
            let summary = format!(
                "window {w}s, penalty {p}: {} exercises in {} slots over {} days",
                s.exercises_count, s.slots_count, s.days_count
            );
            (m, summary)
        }
        Command::Sweep { scenario } => {
            let cfg = scenario.load()?;
            let cells = run::sweep_to(&cfg, jobs, &out)?;
            let mut m = RunManifest::new("sweep", Some(&scenario.config), Some(cfg.seed), &out);
            m.add_input(&scenario.config)?;
            let lines: Vec<String> = cells
                .iter()
                .map(|c| format!("window {}s penalty {}: P = {:.5}", c.window, c.penalty, c.exercise_prob))
                .collect();
            (m, lines.join("\n"))
        }
        Command::Replay { dataset: dir, config: path, windows, penalties, trailing } => {
            let mut settings: ReplayFile = match path {
                Some(p) => config::load(p)?,
                None => ReplayFile::default(),
            };
            if let Some(w) = windows {
                settings.windows = w.clone();
            }
            if let Some(p) = penalties {
                settings.penalties = p.clone();
            }
            settings.trailing |= *trailing;
            config::Validate::validate(&settings)?;
            let data = dataset::load_dir(dir)?;
            let r = run::replay_to(&data, &settings, jobs, &out)?;
            let mut m = RunManifest::new("replay", path.as_deref(), None, &out);
            if let Some(p) = path {
                m.add_input(p)?;
            }
            dataset_inputs(&mut m, dir)?;
            warnings = r.summary.warnings.clone();
            let c = &r.summary.blocks;
            let summary = format!(
                "{} blocks ingested: {} complete, {} partial, {} rejected",
                c.ingested, c.complete, c.partial, c.rejected
            );
            (m, summary)
        }
        Command::Control { config: path, seed } => {
            let file: ControlFile = config::load(path)?;
            let base = path.parent().unwrap_or(Path::new("."));
            let s = run::control_to(&file, base, *seed, &out)?;
            let mut m = RunManifest::new("control", Some(path), Some(seed.unwrap_or(file.seed)), &out);
            m.add_input(path)?;
            if let config::EnvironmentSpec::Replay { dataset: dir, .. } = &file.environment {
                dataset_inputs(&mut m, &base.join(dir))?;
            }
            let summary = format!(
                "{} rounds: avg penalty {:.6}, exercise rate {:.6} (bound {:.6}), LC_T = {:.3}",
                s.report.rounds, s.report.avg_penalty, s.report.avg_exercise_rate, s.rate_bound, s.report.long_run_violation
            );
            (m, summary)
        }
    };
    manifest.record_outputs(&out)?;
    manifest.write(&out)?;
    Ok(RunResult { manifest, warnings, summary })
}
