use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use ewcl::experiment::{
    evaluate, fisher_artifact, report, run_baseline, run_sweep, write_desk, write_records_csv, EvalSuiteSpec,
    LoadedSuite, SweepConfig, SweepResult,
};
use ewcl::io::{load_mc, save_records, Checkpoint};
use ewcl::{Error, Result};
use ewcl_core::data::PromptTemplate;

#[derive(Parser)]
#[command(name = "ewcl", version, about = "EWC continual pretraining experiments on byte-level transformers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train task A, estimate the Fisher diagonal and evaluate the baseline.
    Baseline {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train task B for each λ and write the report.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Run only these λ values (repeatable).
        #[arg(long = "lambda")]
        lambdas: Vec<f64>,
    },
    /// Evaluate one checkpoint on a suite file.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        suite: PathBuf,
        /// Judge checkpoint for generated-answer perplexity.
        #[arg(long)]
        judge: Option<PathBuf>,
        #[arg(long, default_value_t = 40)]
        max_new: usize,
        /// Also write the records as JSON lines.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Estimate a Fisher diagonal at a checkpoint.
    Fisher {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value_t = Template::Qca)]
        template: Template,
        /// Defaults to the checkpoint path with a `.fisher` extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Regenerate records.csv, curves, plots and summary.md of a run directory.
    Report {
        #[arg(long)]
        run: PathBuf,
    },
    /// Write the synthetic benchmark files and default config.
    Synth {
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Template {
    Qca,
    Bare,
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Baseline { config } => {
            let cfg = SweepConfig::load(&config)?;
            let base = run_baseline(&cfg)?;
            eprintln!("task A checkpoint {}", base.anchor_hash);
            let refs: Vec<_> = base.records.iter().collect();
            let out = cfg.output().join("baseline").join("records.csv");
            write_records_csv(&out, &refs)?;
            print!("{}", std::fs::read_to_string(&out).unwrap_or_default());
        }
        Command::Sweep { config, lambdas } => {
            let cfg = SweepConfig::load(&config)?;
            let result = run_sweep(&cfg, (!lambdas.is_empty()).then_some(lambdas.as_slice()))?;
            for c in result.cells.iter().filter(|c| c.error.is_some()) {
                eprintln!("lambda {} failed: {}", c.lambda, c.error.as_deref().unwrap_or_default());
            }
            let files = report(&result, &cfg.output())?;
            eprintln!("wrote {}", files.summary.display());
        }
        Command::Eval { checkpoint, suite, judge, max_new, out } => {
            let model = Checkpoint::load(&checkpoint)?;
            let text = std::fs::read_to_string(&suite).map_err(|source| Error::Io { path: suite.clone(), source })?;
            let spec: EvalSuiteSpec =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", suite.display())))?;
            let base = suite.parent().map(PathBuf::from).unwrap_or_default();
            let loaded = LoadedSuite::load(&spec, &base)?;
            let judge = judge.map(|p| Checkpoint::load(&p)).transpose()?;
            let id = checkpoint.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let records = evaluate(&model.model, &loaded, judge.as_ref().map(|j| (&j.model, max_new)), None, &id)?;
            if let Some(out) = out {
                save_records(&out, &records)?;
            }
            for r in &records {
                println!("{}\t{}\t{}\t{}", r.metric.name(), r.dataset, r.value, r.n_items);
            }
        }
        Command::Fisher { checkpoint, dataset, template, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let items = load_mc(&dataset)?;
            let template = match template {
                Template::Qca => PromptTemplate::QuestionChoicesAnswer,
                Template::Bare => PromptTemplate::Bare,
            };
            let artifact = fisher_artifact(&ck.model, &items, template)?;
            let out = out.unwrap_or_else(|| checkpoint.with_extension("fisher"));
            artifact.save(&out)?;
            eprintln!("wrote {} ({} examples)", out.display(), artifact.fisher.examples());
        }
        Command::Report { run } => {
            let result = SweepResult::load(&run.join("result.json"))?;
            let files = report(&result, &run)?;
            eprintln!("wrote {}", files.summary.display());
        }
        Command::Synth { out } => {
            write_desk(&out)?;
            eprintln!("wrote {}", out.join("config.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
