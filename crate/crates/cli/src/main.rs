use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use synlm::commands::{cmd_init, cmd_parse, cmd_ppl, cmd_train, cmd_trigram, PplMode};
use synlm::config::{RunConfig, RunError};

#[derive(Parser)]
#[command(name = "synlm", version, about = "Structured language model: training, parsing and perplexity")]
struct Cli {
    /// Run configuration (`key = value` lines).
    #[arg(short, long, global = true, default_value = "synlm.conf")]
    config: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary and the E0 model from the treebanks.
    Init,
    /// Initialize, then run the first-pass and left-to-right iterations.
    Train,
    /// Report perplexity of a tokenized corpus.
    Ppl {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// causal, lower-bound, trigram or interpolated
        #[arg(long, default_value = "causal")]
        mode: String,
        /// Trigram model for interpolation; defaults to the one in output_dir.
        #[arg(long)]
        trigram: Option<PathBuf>,
    },
    /// Print the best parse of every sentence.
    Parse {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        text: PathBuf,
    },
    /// Train and evaluate the trigram baseline.
    Trigram,
}

fn run(cli: Cli) -> Result<(), RunError> {
    let cfg = RunConfig::load(&cli.config)?;
    let mut out = std::io::stdout();
    match cli.command {
        Command::Init => cmd_init(&cfg, &mut out),
        Command::Train => cmd_train(&cfg, &mut out),
        Command::Ppl { model, corpus, mode, trigram } => {
            let mode: PplMode = mode.parse()?;
            cmd_ppl(&cfg, &model, &corpus, mode, trigram.as_deref(), &mut out)
        }
        Command::Parse { model, text } => cmd_parse(&cfg, &model, &text, &mut out),
        Command::Trigram => cmd_trigram(&cfg, &mut out),
    }?;
    out.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::FAILURE
        }
    }
}
