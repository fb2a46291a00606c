use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use meta_pretrain::gradcheck::run_gradcheck;
use meta_pretrain::harness::{
    compare_runs, load_checkpoint, parse_run_config, read_metrics_csv, run_experiment_with,
    save_checkpoint, sidecar_path, MetricsWriter, RunMeta, RunRecord,
};
use meta_pretrain::{Checkpoint, Error, Policy};

const EXIT_CONFIG: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_GRADCHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "meta-pretrain", version, about = "Meta-learned task scheduling for multi-task pretraining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the episode loop and write per-episode metrics.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: Option<Policy>,
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics CSV; a `<csv>.meta.json` sidecar is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Where to save the final checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Continue from a checkpoint; only the remaining episodes are written.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Summarize several metrics CSVs by policy.
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        runs: Vec<PathBuf>,
        /// Loss level for episodes-to-threshold.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Check every gradient against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// An error plus the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Config { .. } => EXIT_CONFIG,
            _ => EXIT_RUNTIME,
        };
        Failure {
            code,
            message: e.to_string(),
        }
    }
}

fn config_failure(message: String) -> Failure {
    Failure {
        code: EXIT_CONFIG,
        message,
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| config_failure(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure {
        code: EXIT_RUNTIME,
        message: format!("{}: {e}", path.display()),
    })
}

fn pretrain(
    config: &Path,
    policy: Option<Policy>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    checkpoint: Option<PathBuf>,
    resume: Option<PathBuf>,
    workers: Option<usize>,
) -> Result<(), Failure> {
    let text = String::from_utf8(read_file(config)?)
        .map_err(|e| config_failure(format!("{}: {e}", config.display())))?;
    let mut cfg = parse_run_config(&text)?;
    if let Some(p) = policy {
        cfg.policy = p;
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(w) = workers {
        cfg.workers = w;
    }
    let out = out.or_else(|| cfg.metrics_path.clone().map(PathBuf::from));
    let checkpoint = checkpoint.or_else(|| cfg.checkpoint_path.clone().map(PathBuf::from));
    cfg.metrics_path = out.as_ref().map(|p| p.display().to_string());
    cfg.checkpoint_path = checkpoint.as_ref().map(|p| p.display().to_string());
    cfg.validate()?;
    let cfg = cfg.resolved();

    let resume: Option<Checkpoint> = match &resume {
        Some(path) => Some(load_checkpoint(&read_file(path)?)?),
        None => None,
    };

    let sources = {
        let env = meta_pretrain::harness::build_environment(&cfg)?;
        env.source_ids()
    };
    let mut writer = match &out {
        Some(path) => {
            let file = File::create(path).map_err(|e| Failure {
                code: EXIT_RUNTIME,
                message: format!("{}: {e}", path.display()),
            })?;
            Some(MetricsWriter::new(BufWriter::new(file), &sources)?)
        }
        None => None,
    };

    let output = run_experiment_with::<f64>(&cfg, resume.as_ref(), |row| {
        if let Some(w) = writer.as_mut() {
            w.write_row(row)?;
        }
        Ok(())
    })?;

    if let Some(path) = &out {
        write_file(&sidecar_path(path), output.meta.to_json()?.as_bytes())?;
    }
    if let Some(path) = &checkpoint {
        write_file(path, &save_checkpoint(&output.checkpoint)?)?;
    }
    match output.rows.last() {
        Some(last) => println!(
            "{} episodes ({}), final target_loss_mean {:.6}",
            last.episode, last.policy, last.target_loss_mean
        ),
        None => println!("nothing to do: checkpoint already at episode {}", cfg.episodes),
    }
    Ok(())
}

fn compare(runs: &[PathBuf], threshold: Option<f64>) -> Result<(), Failure> {
    let mut records = Vec::with_capacity(runs.len());
    for path in runs {
        let table = read_metrics_csv(&read_file(path)?)?;
        let side = sidecar_path(path);
        let meta = if side.exists() {
            let text = String::from_utf8(read_file(&side)?)
                .map_err(|e| config_failure(format!("{}: {e}", side.display())))?;
            Some(RunMeta::from_json(&text)?)
        } else {
            None
        };
        records.push(RunRecord {
            label: path.display().to_string(),
            table,
            meta,
        });
    }
    let summary = compare_runs(&records, threshold).map_err(|e| match e {
        Error::Metrics(m) => config_failure(format!("metrics: {m}")),
        other => other.into(),
    })?;
    print!("{summary}");
    Ok(())
}

fn gradcheck(trials: usize, seed: u64) -> Result<(), Failure> {
    let report = run_gradcheck(trials, seed)?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure {
            code: EXIT_GRADCHECK,
            message: format!("gradient check failed, worst relative error {:.3e}", report.worst()),
        })
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Pretrain {
            config,
            policy,
            seed,
            out,
            checkpoint,
            resume,
            workers,
        } => pretrain(&config, policy, seed, out, checkpoint, resume, workers),
        Command::Compare { runs, threshold } => compare(&runs, threshold),
        Command::Gradcheck { trials, seed } => gradcheck(trials, seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
