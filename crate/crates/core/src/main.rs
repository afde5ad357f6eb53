use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use spanseg::cli;
use spanseg::corpus::{Corpus, Language};

#[derive(Parser)]
#[command(
    name = "spanseg",
    version,
    about = "Word segmentation by span labeling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model described by a key=value config file.
    Train { config: PathBuf },
    /// Segment raw text, one sentence per line.
    Segment {
        config: PathBuf,
        input: PathBuf,
        output: PathBuf,
    },
    /// Score a segmented file against gold.
    Eval {
        gold: PathBuf,
        pred: PathBuf,
        /// Training corpus, for OOV recall.
        train: Option<PathBuf>,
        #[arg(long, default_value = "vietnamese")]
        language: Language,
    },
    /// Count overlapping-ambiguity errors of two systems.
    Analyze {
        gold: PathBuf,
        a: PathBuf,
        b: PathBuf,
        #[arg(long, default_value = "vietnamese")]
        language: Language,
    },
    /// Print corpus statistics.
    Stats {
        corpus: PathBuf,
        #[arg(long, default_value = "vietnamese")]
        language: Language,
    },
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train { config } => {
            let out = cli::cmd_train(&config, |e| eprintln!("{e}"))?;
            eprintln!(
                "best epoch {} dev_f {:.2}; checkpoint written to {}",
                out.log.best_epoch,
                out.log.best_dev_f,
                out.checkpoint.display()
            );
            println!("dev\n{}", out.dev);
            if let Some(test) = out.test {
                println!("\ntest\n{test}");
            }
        }
        Command::Segment {
            config,
            input,
            output,
        } => cli::cmd_segment(&config, &input, &output)?,
        Command::Eval {
            gold,
            pred,
            train,
            language,
        } => println!(
            "{}",
            cli::cmd_eval(&gold, &pred, train.as_deref(), language)?
        ),
        Command::Analyze {
            gold,
            a,
            b,
            language,
        } => {
            println!("{}", cli::cmd_analyze(&gold, &a, &b, language)?)
        }
        Command::Stats { corpus, language } => {
            println!("{}", Corpus::read(&corpus, language)?.stats())
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
