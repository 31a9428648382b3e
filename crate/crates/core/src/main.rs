use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use drowsemark::io::{read_json, PipelineError, PipelineResult};
use drowsemark::pipeline::{cmd_extract, cmd_fit, cmd_synth, RunConfig};
use drowsemark::stats::WorkingCorrelation;
use drowsemark::synth::SynthConfig;

#[derive(Parser)]
#[command(name = "drowsemark", version, about = "Physiological drowsiness markers from ECG, respiration and EDA")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract per-segment features from one or more study manifests.
    Extract {
        #[arg(long, required = true, num_args = 1..)]
        manifest: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Run configuration (JSON); only its feature settings are used here.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Fit the clustered logistic model and write report.json and report.md.
    Fit {
        #[arg(long, required = true, num_args = 1..)]
        features: Vec<PathBuf>,
        #[arg(long, value_parser = parse_working)]
        working: Option<WorkingCorrelation>,
        #[arg(long)]
        stepwise: bool,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic study with planted drowsy-state effects.
    Synth {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Generator settings (JSON); defaults to a single study.
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_working(s: &str) -> Result<WorkingCorrelation, String> {
    s.parse().map_err(|e: drowsemark::Error| e.to_string())
}

fn run_config(path: Option<&PathBuf>) -> PipelineResult<RunConfig> {
    path.map_or_else(|| Ok(RunConfig::default()), |p| read_json(p))
}

fn run(cli: Cli) -> PipelineResult<()> {
    match cli.command {
        Command::Extract { manifest, out, config } => {
            let cfg = run_config(config.as_ref())?;
            let summary = cmd_extract(&manifest, &out, &cfg.features)?;
            eprintln!("wrote {} rows to {}", summary.rows, summary.output.display());
            for (reason, n) in &summary.dropped {
                eprintln!("dropped {n} segment(s): {reason}");
            }
            if summary.rows == 0 {
                eprintln!("warning: no labelled segments were extracted");
            }
        }
        Command::Fit { features, working, stepwise, out, config } => {
            let mut cfg = run_config(config.as_ref())?;
            if let Some(w) = working {
                cfg.working = w;
            }
            cfg.stepwise |= stepwise;
            let report = cmd_fit(&features, &out, &cfg)?;
            eprintln!(
                "fitted {} terms on {} segments from {} participants; QIC = {:.2}",
                report.terms.len(),
                report.n_rows,
                report.n_clusters,
                report.qic
            );
        }
        Command::Synth { seed, out, config } => {
            let cfg: SynthConfig = config.as_ref().map_or_else(|| Ok(SynthConfig::default()), |p| read_json(p))?;
            for manifest in cmd_synth(seed, &out, &cfg)? {
                println!("{}", manifest.display());
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DROWSEMARK_LOG", "warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let PipelineError::Numerical { trace, .. } = &e {
                eprintln!("fit trace: {}", trace.display());
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
