//! Command-line driver: staged pipeline runs, report emission, and
//! synthetic demo generation.
//!
//! Exit codes: 0 success, 1 configuration/input error, 2 estimation failure.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use clpanel::pipeline::{self, PipelineConfig, Stage};
use clpanel::{fit_classo, Error, Estimator};

#[derive(Parser)]
#[command(name = "clpanel", version, about = "Heterogeneous-panel causal inference pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline (all stages, or one with --stage).
    Run(RunArgs),
    /// Summarize a completed artifact directory.
    Report {
        /// Artifact directory.
        #[arg(long)]
        dir: PathBuf,
    },
    /// Generate a self-contained synthetic demo (inputs + config).
    Gen {
        /// Target directory.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Pipeline config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Run only this stage: classo, courtyard, ddd, event-study, placebo,
    /// determinants.
    #[arg(long)]
    stage: Option<Stage>,
    /// Override the number of latent groups.
    #[arg(long)]
    k: Option<usize>,
    /// Override the penalty constant c.
    #[arg(long)]
    c: Option<f64>,
    /// Robustness sweep over (K, c) combinations, e.g. `2,3x0.125,0.25`.
    #[arg(long)]
    grid: Option<String>,
    /// Override the event-study and placebo estimator.
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Override the number of placebo replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Override the run seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl RunArgs {
    fn apply(&self, cfg: &mut PipelineConfig) {
        if let Some(k) = self.k {
            cfg.classo.k = k;
        }
        if let Some(c) = self.c {
            cfg.classo.c = c;
        }
        if let Some(e) = self.estimator {
            cfg.event_estimator = e;
            cfg.placebo.estimator = e;
        }
        if let Some(r) = self.reps {
            cfg.placebo.reps = r;
        }
        if let Some(s) = self.seed {
            cfg.placebo.seed = s;
            cfg.classo.seed = s;
        }
    }
}

fn parse_grid(s: &str) -> Result<(Vec<usize>, Vec<f64>), Error> {
    let bad = || Error::InvalidConfig(format!("bad --grid `{s}`; expected k1,k2xc1,c2"));
    let (ks, cs) = s.split_once(['x', 'X', '×']).ok_or_else(bad)?;
    let ks: Vec<usize> = ks
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    let cs: Vec<f64> = cs
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    if ks.is_empty() || cs.is_empty() {
        return Err(bad());
    }
    Ok((ks, cs))
}

/// Fit the classifier over every (K, c) combination, writing one stamped
/// artifact per cell.
fn run_grid(cfg: &PipelineConfig, grid: &str) -> Result<(), Error> {
    let (ks, cs) = parse_grid(grid)?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    for &k in &ks {
        for &c in &cs {
            let mut sub = cfg.clone();
            sub.classo.k = k;
            sub.classo.c = c;
            let mut cell = serde_json::json!({});
            for (dim, path) in [("inflow", &sub.inflow), ("outflow", &sub.outflow)] {
                let stacked = clpanel::PanelDataset::load_csv(
                    path,
                    &clpanel::CsvSchema::counts_panel(&["Sq"]),
                )?;
                let collapsed =
                    pipeline::collapse_regions(&stacked, &sub.event.focal_region)?;
                let (panel, spec) = clpanel::build_grouped_eventstudy(
                    &collapsed,
                    "USSq",
                    "CounterSq",
                    &sub.event,
                )?;
                let fit = fit_classo(&panel, &spec, &sub.classo)?;
                cell[dim] = serde_json::to_value(&fit).map_err(Error::from)?;
            }
            let name = format!("classo_grid_k{k}_c{c}.json");
            let mut body = serde_json::to_string_pretty(&cell).map_err(Error::from)?;
            body.push('\n');
            std::fs::write(cfg.out_dir.join(&name), body)?;
            println!("grid: wrote {name}");
        }
    }
    Ok(())
}

fn real_main() -> Result<(), Error> {
    let cli = Cli::parse();
    match cli.command {
        Command::Run(args) => {
            let mut cfg = PipelineConfig::load(&args.config)?;
            args.apply(&mut cfg);
            if let Some(grid) = &args.grid {
                return run_grid(&cfg, grid);
            }
            let log = match args.stage {
                Some(stage) => pipeline::run_stage(&cfg, stage)?,
                None => pipeline::run_pipeline(&cfg)?,
            };
            for line in log {
                println!("{line}");
            }
            Ok(())
        }
        Command::Report { dir } => {
            print!("{}", pipeline::emit_report(&dir)?);
            Ok(())
        }
        Command::Gen { dir, seed } => {
            let cfg = pipeline::write_demo_inputs(&dir, seed)?;
            println!("wrote demo config {}", cfg.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut src = std::error::Error::source(&e);
            while let Some(s) = src {
                eprintln!("  caused by: {s}");
                src = s.source();
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
