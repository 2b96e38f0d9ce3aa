mod commands;
mod config;
mod report;

use std::io::Write;
use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use kgreplay::augment::AugmentStrategy;
use kgreplay::data::SyntheticSpec;
use kgreplay::kb::Predicate;
use kgreplay::semantics::DefinitionTrainConfig;

use crate::report::TableFormat;

#[derive(Parser)]
#[command(
    name = "kgreplay",
    version,
    about = "Knowledge-augmented replay for class-incremental text classification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Random,
    Semantic,
}

#[derive(Subcommand)]
enum Command {
    /// Build a knowledge graph from a lexical JSONL dump.
    KbBuild {
        #[arg(long)]
        dump: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fail on the first malformed line instead of skipping it.
        #[arg(long)]
        strict: bool,
        /// Also export triples as TSV.
        #[arg(long)]
        tsv: Option<PathBuf>,
    },
    /// Label every sense of a graph with a definition relevance model.
    KbScore {
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the definition relevance model from a word-in-context CSV.
    SemanticTrain {
        #[arg(long)]
        definitions: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        held_out: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 0.5)]
        threshold: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
    },
    /// Augment a dataset by knowledge-based span replacement.
    Augment {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        kb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = StrategyArg::Random)]
        strategy: StrategyArg,
        #[arg(long, default_value_t = 0.15)]
        p: f64,
        #[arg(long, default_value_t = 1)]
        copies: usize,
        /// Replacement predicates (form, synonym, hyponym, instance).
        #[arg(
            long,
            value_delimiter = ',',
            default_value = "synonym,hyponym,instance"
        )]
        predicates: Vec<String>,
        #[arg(long, value_delimiter = ',', default_value = "hateful,offensive")]
        deviant_labels: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run a continual-learning experiment described by a TOML config.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Seeds run in parallel.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Compare finished runs as a table of mean ± std percentages.
    Report {
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = TableFormat::Markdown)]
        format: TableFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write encoder representations of a dataset as CSV.
    ExportEmbeddings {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        encoder: Option<String>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print detected mentions as JSON lines.
    Mentions {
        #[arg(long)]
        kb: PathBuf,
        /// One text per line.
        #[arg(long, conflicts_with = "text")]
        input: Option<PathBuf>,
        #[arg(long)]
        text: Vec<String>,
    },
    /// Write the synthetic drift stream, its graph and a definitions CSV.
    Synthesize {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        tasks: usize,
    },
}

fn main() -> std::process::ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => std::process::ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::ExitCode::FAILURE
        }
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::KbBuild {
            dump,
            out,
            strict,
            tsv,
        } => {
            let stats = commands::kb_build(&dump, &out, strict, tsv.as_deref())?;
            print_json(&stats)
        }
        Command::KbScore { kb, model, out } => print_json(&commands::kb_score(&kb, &model, &out)?),
        Command::SemanticTrain {
            definitions,
            out,
            held_out,
            seed,
            threshold,
            epochs,
        } => {
            let config = DefinitionTrainConfig {
                threshold,
                epochs,
                ..DefinitionTrainConfig::default()
            };
            print_json(&commands::semantic_train(
                &definitions,
                &out,
                held_out,
                &config,
                seed,
            )?)
        }
        Command::Augment {
            input,
            kb,
            out,
            strategy,
            p,
            copies,
            predicates,
            deviant_labels,
            seed,
        } => {
            let predicates = predicates
                .iter()
                .map(|s| s.parse::<Predicate>().map_err(anyhow::Error::msg))
                .collect::<Result<Vec<_>>>()?;
            let copies_written = commands::augment(&commands::AugmentArgs {
                input: &input,
                kb: &kb,
                out: &out,
                strategy: match strategy {
                    StrategyArg::Random => AugmentStrategy::Random,
                    StrategyArg::Semantic => AugmentStrategy::Semantic,
                },
                replace_prob: p,
                copies,
                predicates,
                deviant_labels,
                seed,
            })?;
            eprintln!("wrote {copies_written} augmented copies");
            Ok(())
        }
        Command::Run { config, out, jobs } => {
            let (dir, report) = commands::run(&config, out.as_deref(), jobs)?;
            let row = report::row_from_report(&dir.display().to_string(), &report);
            print!("{}", report::render(&[row], TableFormat::Markdown));
            Ok(())
        }
        Command::Report { runs, format, out } => {
            let table = report::render(&report::load_rows(&runs)?, format);
            match out {
                Some(path) => std::fs::write(path, table)?,
                None => std::io::stdout().write_all(table.as_bytes())?,
            }
            Ok(())
        }
        Command::ExportEmbeddings {
            input,
            encoder,
            checkpoint,
            out,
        } => {
            let n = commands::export_embeddings(
                &input,
                encoder.as_deref(),
                checkpoint.as_deref(),
                &out,
            )?;
            eprintln!("wrote {n} rows");
            Ok(())
        }
        Command::Mentions { kb, input, text } => {
            let texts = match input {
                Some(path) => commands::read_lines(&path)?,
                None => text,
            };
            commands::mentions(&kb, &texts, std::io::stdout().lock())
        }
        Command::Synthesize { out, seed, tasks } => {
            let spec = SyntheticSpec {
                tasks,
                ..SyntheticSpec::default()
            };
            commands::synthesize(&out, &spec, seed)
        }
    }
}
