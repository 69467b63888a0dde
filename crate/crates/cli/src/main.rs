use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use convboost_cli::commands::{self, RunHandle, Split};
use convboost_cli::dataset::{load_normalized, write_synthetic, SynthFile};
use convboost_cli::{exit, CliError, CliResult, ExperimentConfig, ResultsFile};
use convboost_core::ensemble::{select_top_m, SelectionMode};
use convboost_core::model_file;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "convboost", version, about = "Epoch-wise boosted ConvNet training for activity recognition")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    SingleBest,
    Ensemble,
    Compressed,
}

impl From<ModeArg> for SelectionMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::SingleBest => SelectionMode::SingleBest,
            ModeArg::Ensemble => SelectionMode::Ensemble,
            ModeArg::Compressed => SelectionMode::Compressed,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Validation,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Validation => Split::Validation,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(clap::Args)]
struct RunArgs {
    /// Run directory written by `train`.
    #[arg(long)]
    run: PathBuf,
    /// Repetition index inside the run.
    #[arg(long, default_value_t = 0)]
    rep: usize,
    /// Experiment config; defaults to the run's own copy.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Ensemble size; defaults to the config's.
    #[arg(long)]
    members: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train R repetitions and write snapshots plus results.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Run directory; defaults to run.output_dir.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Base seed override.
        #[arg(long)]
        seed: Option<u64>,
        /// Repetition count override.
        #[arg(long)]
        reps: Option<usize>,
    },
    /// Score a run's snapshots or a single model file.
    Evaluate {
        #[arg(long, conflicts_with = "model", required_unless_present = "model")]
        run: Option<PathBuf>,
        /// Model file; needs --config.
        #[arg(long, requires = "config")]
        model: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ensemble")]
        mode: ModeArg,
        #[arg(long, default_value_t = 0)]
        rep: usize,
        #[arg(long)]
        members: Option<usize>,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score the fused top-M ensemble of a run.
    Fuse {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Average the top-M snapshots into one model file.
    Compress {
        #[command(flatten)]
        run: RunArgs,
        /// Model file to write; defaults to rep_XX/compressed_mM.cvb.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// QS/CS diversity and member F1 of the top-M selection.
    Diversity {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Two-tailed t-test between two results files.
    Stats {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, value_enum, default_value = "ensemble")]
        mode: ModeArg,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic sequences as CSV files plus a split manifest.
    Synth {
        /// TOML with `seed` and a `[spec]` table.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn emit<T: Serialize>(value: &T, out: Option<&Path>) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).expect("report serializes");
    if let Some(path) = out {
        std::fs::write(path, format!("{text}\n")).map_err(|e| CliError::io(path, e))?;
    }
    println!("{text}");
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Train { config, out, seed, reps } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.run.seed = s;
            }
            if let Some(r) = reps {
                cfg.run.repetitions = r;
            }
            let out = out.unwrap_or_else(|| cfg.run.output_dir.clone());
            let outcome = commands::train(&cfg, &out)?;
            let summary = &outcome.results.summary;
            for (mode, s) in summary {
                match (s.mean, s.std) {
                    (Some(m), Some(sd)) => eprintln!("{mode}: {m:.4} +/- {sd:.4} (n = {})", s.n),
                    (Some(m), None) => eprintln!("{mode}: {m:.4} (n = {})", s.n),
                    _ => eprintln!("{mode}: n/a"),
                }
            }
            println!("{}", out.display());
            if outcome.all_failed() {
                return Err(outcome.first_error.unwrap_or_else(|| CliError::Incomplete("every repetition failed".into())));
            }
            Ok(())
        }
        Command::Evaluate {
            run,
            model,
            config,
            mode,
            rep,
            members,
            split,
            out,
        } => {
            let report = match (run, model) {
                (Some(run), _) => {
                    let h = RunHandle::open(&run, rep, config.as_deref())?;
                    let frames = h.frames(split.into())?;
                    commands::evaluate_run(&h.store, &frames, h.data.num_classes, mode.into(), h.members(members), split.into())?
                }
                (None, Some(model)) => {
                    let cfg = ExperimentConfig::load(config.as_deref().expect("clap requires --config"))?;
                    let data = load_normalized(&cfg.data)?;
                    let params = model_file::load(&model)?;
                    commands::evaluate_model(&params, &cfg, &data, mode.into(), split.into())?
                }
                (None, None) => unreachable!("clap requires --run or --model"),
            };
            emit(&report, out.as_deref())
        }
        Command::Fuse { run, split, out } => {
            let h = RunHandle::open(&run.run, run.rep, run.config.as_deref())?;
            let frames = h.frames(split.into())?;
            let report = commands::evaluate_run(
                &h.store,
                &frames,
                h.data.num_classes,
                SelectionMode::Ensemble,
                h.members(run.members),
                split.into(),
            )?;
            emit(&report, out.as_deref())
        }
        Command::Compress { run, out } => {
            let h = RunHandle::open(&run.run, run.rep, run.config.as_deref())?;
            let m = h.members(run.members);
            let out = out.unwrap_or_else(|| commands::rep_dir(&run.run, run.rep).join(format!("compressed_m{m}.cvb")));
            emit(&commands::compress(&h, m, &out)?, None)
        }
        Command::Diversity { run, split, out } => {
            let h = RunHandle::open(&run.run, run.rep, run.config.as_deref())?;
            let sel = select_top_m(&h.store, h.members(run.members))?;
            let report = commands::diversity(&h.store, &sel, &h.frames(split.into())?, split.into())?;
            emit(&report, out.as_deref())
        }
        Command::Stats { a, b, mode, out } => {
            let report = commands::stats(&ResultsFile::load(&a)?, &ResultsFile::load(&b)?, mode.into())?;
            eprintln!("t = {:.4}, p = {:.6}, {}", report.test.t, report.test.p, report.test.stars);
            emit(&report, out.as_deref())
        }
        Command::Synth { config, out, seed } => {
            let file = SynthFile::load(&config)?;
            let manifest = write_synthetic(&file.spec, seed.unwrap_or(file.seed), &out)?;
            emit(&manifest, None)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE as u8 } else { exit::OK as u8 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
