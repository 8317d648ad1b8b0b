use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod settings;

use error::CliResult;
use settings::Settings;

#[derive(Debug, Args)]
struct Common {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// key=value settings file; flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic corpus with a known model.
    Synth {
        #[arg(long)]
        entities: Option<usize>,
        #[arg(long)]
        years: Option<f64>,
    },
    /// Ingest a corpus directory and report rejected rows.
    IngestCheck {
        data: Option<PathBuf>,
        /// ISO date of day 0, for corpora with date columns.
        #[arg(long)]
        epoch: Option<String>,
    },
    /// Conditional-frequency estimates and a constant-β model.
    CfFit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        window: Option<u32>,
    },
    /// ABC sweep over the covariate link and posterior mode.
    AbcFit {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        t_end: Option<f64>,
        /// Model providing λ0, C1, a1, b1 (defaults to a CF fit of the data).
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        proposals: Option<usize>,
        #[arg(long)]
        quantile: Option<f64>,
        #[arg(long)]
        prior_sigma: Option<f64>,
    },
    /// Simulate events for a corpus's entities under a model.
    Simulate {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        t_start: Option<f64>,
        #[arg(long)]
        t_end: Option<f64>,
        #[arg(long)]
        trace_step: Option<f64>,
    },
    /// Simulate bright-line inspection policies.
    Policy {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated bright-line periods in years.
        #[arg(long = "Y")]
        periods: Option<String>,
        #[arg(long)]
        replicates: Option<usize>,
        #[arg(long)]
        horizon_years: Option<u32>,
        #[arg(long)]
        adhoc_per_day: Option<f64>,
        #[arg(long)]
        cost_event: Option<f64>,
        #[arg(long)]
        cost_inspection: Option<f64>,
    },
    /// Total cost per period from a policy run.
    Cost {
        /// policy_summary.json written by `policy`.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        cost_event: Option<f64>,
        #[arg(long)]
        cost_inspection: Option<f64>,
    },
    /// Compare two models by the rank of each failing entity.
    Rank {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        model_a: Option<PathBuf>,
        /// Defaults to model A with a single likelihood-fitted β.
        #[arg(long)]
        model_b: Option<PathBuf>,
        #[arg(long)]
        window_start: Option<f64>,
        #[arg(long)]
        window_end: Option<f64>,
        #[arg(long)]
        no_baseline_filter: bool,
    },
}

/// Reactive point process modeling: synthetic data, fitting, simulation,
/// inspection policies and ranking comparisons.
#[derive(Debug, Parser)]
#[command(name = "rpp", version)]
struct Invocation {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

fn path_str(p: Option<PathBuf>) -> Option<String> {
    p.map(|p| p.display().to_string())
}

fn run(inv: Invocation) -> CliResult<()> {
    let mut s = Settings::load(inv.common.config.as_deref())?;
    s.set("seed", inv.common.seed);
    s.set("out", path_str(inv.common.out));
    match inv.command {
        Command::Synth { entities, years } => {
            s.set("entities", entities);
            s.set("years", years);
            commands::synth(&mut s)
        }
        Command::IngestCheck { data, epoch } => {
            s.set("data", path_str(data));
            s.set("epoch", epoch);
            commands::ingest_check(&mut s)
        }
        Command::CfFit { data, t_end, window } => {
            s.set("data", path_str(data));
            s.set("t_end", t_end);
            s.set("window", window);
            commands::cf_fit(&mut s)
        }
        Command::AbcFit {
            data,
            t_end,
            model,
            proposals,
            quantile,
            prior_sigma,
        } => {
            s.set("data", path_str(data));
            s.set("t_end", t_end);
            s.set("model", path_str(model));
            s.set("proposals", proposals);
            s.set("quantile", quantile);
            s.set("prior_sigma", prior_sigma);
            commands::abc_fit(&mut s)
        }
        Command::Simulate {
            data,
            model,
            t_start,
            t_end,
            trace_step,
        } => {
            s.set("data", path_str(data));
            s.set("model", path_str(model));
            s.set("t_start", t_start);
            s.set("t_end", t_end);
            s.set("trace_step", trace_step);
            commands::simulate(&mut s)
        }
        Command::Policy {
            data,
            model,
            periods,
            replicates,
            horizon_years,
            adhoc_per_day,
            cost_event,
            cost_inspection,
        } => {
            s.set("data", path_str(data));
            s.set("model", path_str(model));
            s.set("Y", periods);
            s.set("replicates", replicates);
            s.set("horizon_years", horizon_years);
            s.set("adhoc_per_day", adhoc_per_day);
            s.set("cost_event", cost_event);
            s.set("cost_inspection", cost_inspection);
            commands::policy(&mut s)
        }
        Command::Cost {
            report,
            cost_event,
            cost_inspection,
        } => {
            s.set("report", path_str(report));
            s.set("cost_event", cost_event);
            s.set("cost_inspection", cost_inspection);
            commands::cost(&mut s)
        }
        Command::Rank {
            data,
            model_a,
            model_b,
            window_start,
            window_end,
            no_baseline_filter,
        } => {
            s.set("data", path_str(data));
            s.set("model_a", path_str(model_a));
            s.set("model_b", path_str(model_b));
            s.set("window_start", window_start);
            s.set("window_end", window_end);
            s.set("baseline_filter", no_baseline_filter.then_some(false));
            commands::rank(&mut s)
        }
    }
}

fn main() -> ExitCode {
    let inv = match Invocation::try_parse() {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
