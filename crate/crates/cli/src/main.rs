//! `owlkit` command-line driver.

mod commands;
mod config;
mod output;
mod sweep;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use owlkit::ood::Method;

#[derive(Debug, Parser)]
#[command(name = "owlkit", version, about = "Open-world learning over pre-extracted embeddings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train the base classifier, fit and calibrate the scorer, write a state directory.
    FitBase {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the open-world sessions of a manifest on top of a state directory.
    OwlRun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        state: PathBuf,
        /// Run at most this many sessions.
        #[arg(long)]
        sessions: Option<usize>,
    },
    /// Detection metrics of a state's scorer on ID data against OOD files.
    OodEval {
        #[arg(long)]
        id: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        ood: Vec<PathBuf>,
        #[arg(long)]
        state: PathBuf,
        #[arg(long, value_parser = parse_method)]
        method: Method,
        /// Base training data to refit the scorer from when the state holds a different method.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        /// CSV destination; standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Supervised class-incremental run over the labeled sessions of a manifest.
    CilRun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Few-shot class-incremental run: prototypes from K shots per new class.
    FscilRun {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        shots: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster labeled embeddings and score the clustering against the labels.
    NcdEval {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        /// Number of clusters; estimated by silhouette when absent.
        #[arg(long)]
        k: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Per-session CSV and plot data from a state directory's logs.
    Report {
        #[arg(long)]
        state: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a synthetic Gaussian scenario as NPY files and a manifest.
    Synth {
        /// TOML scenario description; defaults when absent.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// fit-base followed by owl-run for several seeds, in separate processes.
    Sweep {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        #[arg(long)]
        sessions: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_method(s: &str) -> Result<Method, String> {
    s.parse::<Method>().map_err(|_| {
        let names: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
        format!("unknown method '{s}'; expected one of {}", names.join(", "))
    })
}

fn run(cli: Cli) -> owlkit::Result<()> {
    use commands::*;
    match cli.command {
        Command::FitBase {
            manifest,
            config,
            out,
            seed,
        } => fit_base(&manifest, config.as_deref(), &out, seed),
        Command::OwlRun {
            manifest,
            config,
            state,
            sessions,
        } => owl_run(&manifest, config.as_deref(), &state, sessions),
        Command::OodEval {
            id,
            ood,
            state,
            method,
            manifest,
            config,
            out,
        } => ood_eval(&id, &ood, &state, method, manifest.as_deref(), config.as_deref(), out.as_deref()),
        Command::CilRun {
            manifest,
            config,
            seed,
            out,
        } => cil_run(&manifest, config.as_deref(), seed, out.as_deref()),
        Command::FscilRun {
            manifest,
            config,
            shots,
            seed,
            out,
        } => fscil_run(&manifest, config.as_deref(), shots, seed, out.as_deref()),
        Command::NcdEval {
            features,
            labels,
            k,
            seed,
            out,
        } => ncd_eval(&features, &labels, k, seed, out.as_deref()),
        Command::Report { state, out } => report(&state, &out),
        Command::Synth { spec, seed, out } => synth(spec.as_deref(), seed, &out),
        Command::Sweep {
            manifest,
            config,
            seeds,
            jobs,
            sessions,
            out,
        } => sweep::sweep(&manifest, config.as_deref(), &seeds, jobs, sessions, &out),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("OWLKIT_LOG", "warn"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("owlkit: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
