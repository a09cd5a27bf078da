//! `radgaze`: dataset compilation, training, evaluation and reporting.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigBuilder, Resolved};
use error::Failure;

#[derive(Parser)]
#[command(name = "radgaze", version, about = "Fixation-level intention prediction toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand for resolving the run configuration.
#[derive(Args, Clone, Default)]
pub struct ConfigArgs {
    /// key=value configuration file
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override one configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Newline-delimited finding names
    #[arg(long, value_name = "FILE")]
    vocab: Option<PathBuf>,
    /// Vocabulary size when no vocabulary file is given
    #[arg(long)]
    num_findings: Option<usize>,
}

/// Label compilation flags.
#[derive(Args, Clone, Default)]
pub struct LabelArgs {
    /// radseq | radexplore | radhybrid
    #[arg(long)]
    mode: Option<String>,
    /// Initial scanning window in seconds (radhybrid)
    #[arg(long)]
    tau_star: Option<f64>,
    /// all_findings | report_findings (radhybrid)
    #[arg(long)]
    scan_scope: Option<String>,
    #[arg(long)]
    min_dwell: Option<f64>,
}

/// Training flags.
#[derive(Args, Clone, Default)]
pub struct TrainArgs {
    /// radgazeintent | mlp | recurrent
    #[arg(long)]
    model: Option<String>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Compile labeled JSONL from raw sessions
    BuildDataset {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        labels: LabelArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Generate a synthetic corpus with planted intentions
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 64)]
        sessions: usize,
        #[arg(long, default_value_t = 256)]
        height: usize,
        #[arg(long, default_value_t = 256)]
        width: usize,
        /// fixed | shuffled
        #[arg(long, default_value = "fixed")]
        layout: String,
        /// Fixations per finding run, LO,HI
        #[arg(long, default_value = "5,9")]
        fixations_per_intention: String,
        /// Reported findings per session, LO,HI
        #[arg(long, default_value = "1,3")]
        findings_per_session: String,
        #[arg(long, default_value_t = 2)]
        scan_fixations: usize,
        /// Write images as PGM files into this directory (relative to the output file) instead of inline base64
        #[arg(long, value_name = "DIR")]
        image_dir: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Sequence-length histogram and per-finding run-length box plots
    Stats {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 5)]
        bin_width: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train one model and write a checkpoint
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Labeled validation set (enables val_f1 logging and early stopping)
        #[arg(long)]
        val: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Evaluate a checkpoint on a labeled dataset
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// K-fold cross-validation with t-intervals
    Cv {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Cross-validate the full model and each ablation
    Ablate {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[command(flatten)]
        train: TrainArgs,
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Finite-difference check of the full training loss
    Gradcheck {
        #[arg(long)]
        out: Option<PathBuf>,
        /// radgazeintent | mlp | recurrent
        #[arg(long)]
        model: Option<String>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Per-fixation finding confidences for sessions
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        session: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        threshold: Option<f64>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn push<T: ToString>(out: &mut Vec<(&'static str, String)>, key: &'static str, v: &Option<T>) {
    if let Some(v) = v {
        out.push((key, v.to_string()));
    }
}

impl LabelArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        push(&mut o, "mode", &self.mode);
        push(&mut o, "tau_star", &self.tau_star);
        push(&mut o, "scan_scope", &self.scan_scope);
        push(&mut o, "min_dwell", &self.min_dwell);
        o
    }
}

impl TrainArgs {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        let mut o = Vec::new();
        push(&mut o, "model", &self.model.as_deref().map(normalize_model));
        push(&mut o, "iterations", &self.iterations);
        push(&mut o, "batch_size", &self.batch_size);
        push(&mut o, "learning_rate", &self.learning_rate);
        push(&mut o, "threshold", &self.threshold);
        o
    }
}

fn normalize_model(s: &str) -> String {
    if s == "lstm" {
        "recurrent".into()
    } else {
        s.to_string()
    }
}

impl ConfigArgs {
    /// Defaults, then the file, then `--set`, then `extra` dedicated flags.
    fn resolve(&self, extra: Vec<(&'static str, String)>) -> Result<Resolved, Failure> {
        let mut b = ConfigBuilder::new();
        if let Some(path) = &self.config {
            error::require_file(path)?;
            b.load_file(path)?;
        }
        for pair in &self.set {
            b.set_pair(pair).map_err(Failure::usage)?;
        }
        let mut flags = extra;
        push(&mut flags, "seed", &self.seed);
        push(&mut flags, "vocabulary", &self.vocab.as_ref().map(|p| p.display().to_string()));
        push(&mut flags, "num_findings", &self.num_findings);
        for (k, v) in flags {
            b.set(k, &v).map_err(Failure::usage)?;
        }
        b.build()
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::BuildDataset {
            input,
            out,
            labels,
            cfg,
            jobs,
        } => commands::build_dataset(&input, &out, &cfg.resolve(labels.overrides())?, jobs),
        Command::Synth {
            out,
            sessions,
            height,
            width,
            layout,
            fixations_per_intention,
            findings_per_session,
            scan_fixations,
            image_dir,
            cfg,
        } => {
            let spec = commands::synth_spec(
                sessions,
                (height, width),
                &layout,
                &fixations_per_intention,
                &findings_per_session,
                scan_fixations,
            )?;
            commands::synth(&out, spec, image_dir.as_deref(), &cfg.resolve(vec![])?)
        }
        Command::Stats {
            data,
            out,
            bin_width,
            cfg,
        } => commands::stats(&data, &out, bin_width, &cfg.resolve(vec![])?),
        Command::Train {
            data,
            val,
            out,
            train,
            cfg,
        } => commands::train(&data, val.as_deref(), &out, &cfg.resolve(train.overrides())?),
        Command::Eval {
            ckpt,
            data,
            out,
            threshold,
            cfg,
        } => {
            let mut o = Vec::new();
            push(&mut o, "threshold", &threshold);
            commands::eval(&ckpt, &data, &out, &cfg.resolve(o)?)
        }
        Command::Cv {
            data,
            out,
            folds,
            train,
            cfg,
            jobs,
        } => {
            let mut o = train.overrides();
            push(&mut o, "folds", &folds);
            commands::cv(&data, &out, &cfg.resolve(o)?, jobs)
        }
        Command::Ablate {
            data,
            out,
            folds,
            train,
            cfg,
            jobs,
        } => {
            let mut o = train.overrides();
            push(&mut o, "folds", &folds);
            commands::ablate(&data, &out, &cfg.resolve(o)?, jobs)
        }
        Command::Gradcheck { out, model, cfg } => {
            let mut o = Vec::new();
            push(&mut o, "model", &model.as_deref().map(normalize_model));
            commands::gradcheck(out.as_deref(), &cfg.resolve(o)?)
        }
        Command::Predict {
            ckpt,
            session,
            out,
            threshold,
            cfg,
        } => {
            let mut o = Vec::new();
            push(&mut o, "threshold", &threshold);
            commands::predict(&ckpt, &session, &out, &cfg.resolve(o)?)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let rendered = e.render().to_string();
            let message = rendered
                .lines()
                .map(str::trim)
                .find(|l| !l.is_empty())
                .unwrap_or("invalid arguments")
                .trim_start_matches("error: ")
                .to_string();
            eprintln!("{}", Failure::usage(message).to_json_line());
            return ExitCode::from(2);
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{}", f.to_json_line());
            ExitCode::from(f.code as u8)
        }
    }
}
