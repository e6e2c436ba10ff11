use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use senseforge_core::corpus::{load_key_file, parse_config_pairs};
use senseforge_core::eval::{evaluate, Task};
use senseforge_core::pipeline::{run_induce, InduceOptions, InduceRequest, StoredSolution};
use senseforge_core::{KeyFormat, PipelineConfig, TargetKey};

const SEED_ENV: &str = "SENSEFORGE_SEED";

#[derive(Parser)]
#[command(
    name = "senseforge",
    version,
    about = "Word sense induction from language-model substitutes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Induce senses for every target in an instances file.
    Induce(InduceArgs),
    /// Score a system key against a gold key.
    Evaluate(EvaluateArgs),
    /// Print the sense report of one target from a solution directory.
    Inspect(InspectArgs),
    /// Print the version.
    Version,
}

#[derive(Args)]
struct InduceArgs {
    /// Instances JSONL.
    instances: PathBuf,
    /// Substitutes JSONL.
    substitutes: PathBuf,
    /// Output directory.
    #[arg(short, long)]
    out: PathBuf,
    /// key=value config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Sampling seed (falls back to the config file, then SENSEFORGE_SEED, then 0).
    #[arg(long)]
    seed: Option<u64>,
    /// Merge weak senses (the default mode).
    #[arg(long, conflicts_with = "fixed_k")]
    dynamic: bool,
    /// Induce exactly N senses per target, without merging.
    #[arg(long, value_name = "N")]
    fixed_k: Option<usize>,
    /// Use only the vanilla target-position substitutes.
    #[arg(long)]
    no_pattern: bool,
    /// Also write a hard (argmax) key.
    #[arg(long)]
    hard: bool,
    /// Per-target oracle sense counts (`lemma.pos count` per line).
    #[arg(long, value_name = "FILE")]
    gold_k: Option<PathBuf>,
    /// Treat warnings, including missing substitutes, as errors.
    #[arg(long)]
    strict: bool,
    /// Worker threads (0 = one per core).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Print the run manifest as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    /// System key file.
    system: PathBuf,
    /// Gold key file.
    gold: PathBuf,
    /// 2010 (paired F-score, V-measure) or 2013 (fuzzy NMI, fuzzy B-Cubed).
    #[arg(long, default_value = "2013")]
    task: Task,
    /// Separator between sense id and weight in both keys.
    #[arg(long, default_value_t = '/')]
    separator: char,
    /// Fail when some instances are only in one of the keys.
    #[arg(long)]
    strict: bool,
    /// One JSON object per target plus an aggregate line.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct InspectArgs {
    /// Directory written by `induce`.
    solution: PathBuf,
    /// Target as lemma.pos.
    target: String,
    /// JSON lines instead of text.
    #[arg(long)]
    json: bool,
}

fn build_config(args: &InduceArgs) -> Result<PipelineConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(path) = &args.config {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        pairs = parse_config_pairs(&text, path)?;
    }
    let file_has_seed = pairs.iter().any(|(k, _)| k == "seed");
    if args.dynamic {
        pairs.push(("dynamic_senses".into(), "true".into()));
    }
    if let Some(k) = args.fixed_k {
        pairs.push(("dynamic_senses".into(), "false".into()));
        pairs.push(("max_senses".into(), k.to_string()));
    }
    if args.no_pattern {
        pairs.push(("use_pattern".into(), "false".into()));
    }
    match args.seed {
        Some(seed) => pairs.push(("seed".into(), seed.to_string())),
        None if !file_has_seed => {
            if let Ok(value) = std::env::var(SEED_ENV) {
                let seed: u64 = value
                    .trim()
                    .parse()
                    .with_context(|| format!("{SEED_ENV}=`{value}` is not an unsigned integer"))?;
                pairs.push(("seed".into(), seed.to_string()));
            }
        }
        None => {}
    }
    Ok(PipelineConfig::from_pairs(
        pairs.iter().map(|(k, v)| (k.as_str(), v.as_str())),
    )?)
}

fn induce(args: InduceArgs) -> Result<()> {
    let config = build_config(&args)?;
    let report = run_induce(&InduceRequest {
        instances: args.instances.clone(),
        substitutes: args.substitutes.clone(),
        gold_k: args.gold_k.clone(),
        out_dir: args.out.clone(),
        options: InduceOptions {
            config,
            strict: args.strict,
            jobs: args.jobs,
            ..Default::default()
        },
        hard: args.hard,
    })?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report.manifest)?);
    } else {
        for (target, counts) in &report.manifest.targets {
            println!(
                "{target}\t{} instances\t{} senses",
                counts.instances, counts.senses
            );
        }
        println!("wrote {}", args.out.display());
    }
    if args.strict && !report.warnings.is_empty() {
        bail!("{} warning(s) under --strict", report.warnings.len());
    }
    Ok(())
}

fn load_key(path: &Path, separator: char) -> Result<senseforge_core::KeyFile> {
    Ok(load_key_file(path, KeyFormat { separator })?)
}

fn evaluate_cmd(args: EvaluateArgs) -> Result<()> {
    let system = load_key(&args.system, args.separator)?;
    let gold = load_key(&args.gold, args.separator)?;
    let card = evaluate(&system, &gold, args.task)?;
    if args.json {
        print!("{}", card.render_jsonl());
    } else {
        print!("{}", card.render_text());
    }
    let unscored = card.missing_from_system + card.missing_from_gold;
    if unscored > 0 {
        eprintln!(
            "warning: {} instance(s) missing from the system key, {} missing from the gold key",
            card.missing_from_system, card.missing_from_gold
        );
        if args.strict {
            bail!("{unscored} unscored instance(s) under --strict");
        }
    }
    Ok(())
}

fn inspect(args: InspectArgs) -> Result<()> {
    let target: TargetKey = args
        .target
        .parse()
        .with_context(|| format!("`{}` is not a lemma.pos target", args.target))?;
    let solution = StoredSolution::load(&args.solution)
        .with_context(|| format!("loading solution from {}", args.solution.display()))?;
    let report = if args.json {
        solution.report_jsonl(&target)
    } else {
        solution.report(&target)
    };
    match report {
        Some(text) => {
            print!("{text}");
            Ok(())
        }
        None => {
            let known: Vec<String> = solution.targets().map(ToString::to_string).collect();
            bail!(
                "unknown target {target}; the solution has: {}",
                known.join(", ")
            )
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Induce(args) => induce(args),
        Command::Evaluate(args) => evaluate_cmd(args),
        Command::Inspect(args) => inspect(args),
        Command::Version => {
            println!("senseforge {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
