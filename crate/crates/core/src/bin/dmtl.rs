use std::io::Read;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use discourse_mtl::config::ExperimentConfig;
use discourse_mtl::corpus::{load_dataset, ArgumentPair, ExtractionRuleSet, SentenceSplitter, DEFAULT_ABBREVIATIONS};
use discourse_mtl::error::Error;
use discourse_mtl::experiment::{evaluate_pairs, extract_to_files, train_from_config, EvalMode, ExtractRequest};
use discourse_mtl::model::ModelState;
use discourse_mtl::synthetic::tiny_reference_model;
use discourse_mtl::trainer::{grad_check, DEFAULT_GRAD_CHECK_STEP, DEFAULT_GRAD_CHECK_TOL};

const EXIT_VALIDATION: u8 = 1;
const EXIT_RUNTIME: u8 = 2;
const EXIT_CHECK_FAILED: u8 = 3;

#[derive(Parser)]
#[command(name = "dmtl", version, about = "Multi-task CNNs for discourse relation classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mine connective-labelled argument pairs from raw text.
    Extract {
        /// A raw-text file or a directory of them.
        #[arg(long)]
        raw: PathBuf,
        /// Connective list, one per line.
        #[arg(long)]
        connectives: PathBuf,
        /// Output dataset (JSON lines); statistics go next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Sample size; all extracted pairs when omitted.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 3)]
        min_tokens: usize,
        #[arg(long, default_value_t = 100)]
        max_tokens: usize,
        #[arg(long, default_value = "connective")]
        task: String,
        /// Extra abbreviations that never end a sentence (one per line).
        #[arg(long)]
        abbreviations: Option<PathBuf>,
    },
    /// Train from an experiment config.
    Train {
        config: PathBuf,
        /// Override a config key, e.g. `--set epochs=5`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Task name; defaults to the checkpoint's first task.
        #[arg(long)]
        task: Option<String>,
        /// `four_way` or `binary:<class>`.
        #[arg(long, default_value = "four_way")]
        mode: String,
        /// Write the report here as JSON (and a `.txt` table beside it).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check backprop against finite differences on a tiny model.
    Gradcheck {
        #[arg(long, default_value = "tiny")]
        preset: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Scale the analytic gradients to make the check fail.
        #[arg(long)]
        corrupt_backward: bool,
    },
    /// Classify one JSON record read from standard input.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Task name; defaults to the record's `task` field.
        #[arg(long)]
        task: Option<String>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Parse { .. } | Error::Rejected(_) | Error::SampleSize { .. } => EXIT_VALIDATION,
        _ => EXIT_RUNTIME,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> discourse_mtl::Result<u8> {
    match cmd {
        Command::Extract { raw, connectives, out, seed, n, min_tokens, max_tokens, task, abbreviations } => {
            let mut abbrevs: Vec<String> = DEFAULT_ABBREVIATIONS.iter().map(|s| s.to_string()).collect();
            if let Some(p) = abbreviations {
                let text = std::fs::read_to_string(&p).map_err(|e| Error::Io { path: p.clone(), source: e })?;
                abbrevs.extend(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from));
            }
            let req = ExtractRequest {
                raw: &raw,
                connectives: &connectives,
                rules: ExtractionRuleSet { min_tokens, max_tokens, ..Default::default() },
                splitter: SentenceSplitter::new(abbrevs.iter().map(String::as_str)),
                task: &task,
                n,
                seed,
            };
            let res = extract_to_files(&req, &out)?;
            println!("extracted {} pairs, wrote {} to {}", res.extracted, res.sample.len(), out.display());
            print!("{}", res.stats.to_table());
            Ok(0)
        }
        Command::Train { config, overrides } => {
            let cfg = ExperimentConfig::load(&config, &overrides)?;
            let run = train_from_config(&cfg, &config)?;
            if let Some(r) = &run.outcome.best_dev {
                println!(
                    "best epoch {:?}: dev accuracy {:.4}, macro-F1 {:.4}",
                    run.outcome.best_epoch, r.accuracy, r.macro_f1
                );
            }
            println!("checkpoint: {}", run.manifest.checkpoint.display());
            Ok(0)
        }
        Command::Eval { checkpoint, data, task, mode, out } => {
            let state = ModelState::load_checkpoint(&checkpoint)?;
            let mode: EvalMode = mode.parse()?;
            let task = task.unwrap_or_else(|| state.tasks[0].spec.name.clone());
            let t = state.task_index(&task)?;
            let pairs = load_dataset(&data, &task, &state.tasks[t].spec.labels)?.pairs;
            let res = evaluate_pairs(&state, &task, &pairs, &mode)?;
            let table = res.report.to_table(&res.class_names);
            print!("{table}");
            if let Some(out) = out {
                let json = serde_json::to_string_pretty(&res.report.to_json(&res.class_names))?;
                std::fs::write(&out, json + "\n").map_err(|e| Error::Io { path: out.clone(), source: e })?;
                let txt = out.with_extension("txt");
                std::fs::write(&txt, table).map_err(|e| Error::Io { path: txt, source: e })?;
            }
            Ok(0)
        }
        Command::Gradcheck { preset, seed, corrupt_backward } => {
            if preset != "tiny" {
                return Err(Error::Config(vec![format!("unknown preset {preset:?}; available: tiny")]));
            }
            let (state, examples) = tiny_reference_model(seed)?;
            let mut passed = true;
            for (task, ex) in examples.iter().enumerate() {
                let report = grad_check(&state, task, ex, DEFAULT_GRAD_CHECK_STEP, DEFAULT_GRAD_CHECK_TOL, corrupt_backward)?;
                println!("task {}:", state.tasks[task].spec.name);
                print!("{}", report.to_table());
                passed &= report.passed;
            }
            Ok(if passed { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::Predict { checkpoint, task } => {
            let state = ModelState::load_checkpoint(&checkpoint)?;
            let mut input = String::new();
            std::io::stdin()
                .read_to_string(&mut input)
                .map_err(|e| Error::Io { path: "<stdin>".into(), source: e })?;
            let pair: ArgumentPair = serde_json::from_str(input.trim())?;
            let t = state.task_index(task.as_deref().unwrap_or(&pair.task))?;
            let (probs, _) = state.forward(t, &pair)?;
            let labels = &state.tasks[t].spec.labels;
            let probabilities: serde_json::Map<String, serde_json::Value> = labels
                .names()
                .iter()
                .zip(probs.as_slice())
                .map(|(n, p)| (n.clone(), serde_json::json!(p)))
                .collect();
            let out = serde_json::json!({
                "task": state.tasks[t].spec.name,
                "label": labels.name(probs.argmax()),
                "probabilities": probabilities,
            });
            println!("{out}");
            Ok(0)
        }
    }
}
