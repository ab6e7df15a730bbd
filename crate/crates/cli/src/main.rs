//! `pvar` command line: validate and estimate reward-scored datasets,
//! select prompts, build preference pairs, train the toy DPO engine, and
//! verify the gradient bounds.
//!
//! Exit codes: 0 on success, 1 on data errors, 2 on usage errors.

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use pvar_cli::io::{self, IoError};
use pvar_core::model::{validate_record, PromptRecord, StrategyKind};
use pvar_core::pvar::batch_estimate;
use pvar_core::selection::{build_preference_pair, reward_gap, select, SelectionStrategy};
use pvar_core::sweep;
use pvar_core::synth::{toy_dataset, ToyDatasetSpec};
use pvar_core::toydpo::{dpo_loss, mean_margin, train, DpoConfig};

#[derive(Parser)]
#[command(
    name = "pvar",
    version,
    about = "Preference-variance data selection and desk-scale DPO bound verification"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn parse_strategy(s: &str) -> Result<StrategyKind, String> {
    s.parse().map_err(|e: pvar_core::Error| e.to_string())
}

fn parse_fraction(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if value.is_finite() && value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(format!("fraction must lie in (0, 1], got {value}"))
    }
}

fn parse_beta(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(format!("beta must be positive, got {value}"))
    }
}

fn parse_lr(s: &str) -> Result<f64, String> {
    let value: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if value.is_finite() && value >= 0.0 {
        Ok(value)
    } else {
        Err(format!("learning rate must be non-negative, got {value}"))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Check a JSONL dataset against the record invariants.
    Validate {
        #[arg(long)]
        input: PathBuf,
    },
    /// Estimate per-prompt PVar; writes JSONL estimates.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Rank prompts and write a reproducible selection manifest.
    Select {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, value_parser = parse_strategy)]
        strategy: StrategyKind,
        #[arg(long, value_parser = parse_fraction, default_value = "0.5")]
        fraction: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Build chosen/rejected pairs from the highest- and lowest-scored
    /// responses.
    Pair {
        #[arg(long)]
        input: PathBuf,
        /// Output path; stdout when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Train the tabular DPO engine on a seeded synthetic dataset and
    /// write the training trace as CSV.
    TrainToy {
        #[arg(long, default_value_t = 4)]
        vocab: usize,
        #[arg(long, default_value_t = 2)]
        horizon: usize,
        #[arg(long, value_parser = parse_beta, default_value = "1.0")]
        beta: f64,
        #[arg(long, value_parser = parse_lr, default_value = "0.1")]
        lr: f64,
        #[arg(long, default_value_t = 200)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Train only on the subset this strategy selects (all prompts
        /// when omitted).
        #[arg(long, value_parser = parse_strategy)]
        strategy: Option<StrategyKind>,
        #[arg(long, value_parser = parse_fraction, default_value = "0.5")]
        fraction: f64,
        /// Trace CSV path; summary only when omitted.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the randomized exact-check sweeps for both gradient bounds, the
    /// Chebyshev mass inequality, and the three lemmas.
    VerifyBounds {
        /// Instances per sweep family.
        #[arg(long, default_value_t = 200)]
        sweep: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// CSV path for the online-bound sweep rows.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Render a PVar histogram CSV from estimate JSONL.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Core(#[from] pvar_core::Error),
    #[error("{0}")]
    Data(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::FAILURE
        }
    }
}

fn run(command: Command) -> Result<(), CliError> {
    match command {
        Command::Validate { input } => validate(&input),
        Command::Estimate { input, output } => estimate(&input, output.as_deref()),
        Command::Select {
            input,
            output,
            strategy,
            fraction,
            seed,
        } => run_select(&input, &output, strategy, fraction, seed),
        Command::Pair { input, output } => pair(&input, output.as_deref()),
        Command::TrainToy {
            vocab,
            horizon,
            beta,
            lr,
            steps,
            seed,
            strategy,
            fraction,
            output,
        } => train_toy(
            vocab,
            horizon,
            beta,
            lr,
            steps,
            seed,
            strategy,
            fraction,
            output.as_deref(),
        ),
        Command::VerifyBounds {
            sweep,
            seed,
            output,
        } => verify_bounds(sweep, seed, output.as_deref()),
        Command::Report { input, output } => report(&input, &output),
    }
}

fn validate(input: &std::path::Path) -> Result<(), CliError> {
    let outcome = io::ingest(input)?;
    let mut problems = outcome.violations.len();
    for violation in &outcome.violations {
        eprintln!("line {}: {}", violation.line, violation.message);
    }
    let mut seen = HashSet::new();
    for record in &outcome.records {
        for violation in validate_record(record).violations {
            eprintln!("prompt {:?}: {violation}", record.prompt_id);
            problems += 1;
        }
        if !record.prompt_id.is_empty() && !seen.insert(record.prompt_id.clone()) {
            eprintln!(
                "prompt {:?}: duplicate prompt_id in dataset",
                record.prompt_id
            );
            problems += 1;
        }
    }
    println!(
        "{} records parsed, {} violations",
        outcome.records.len(),
        problems
    );
    if problems > 0 {
        return Err(CliError::Data(format!("{problems} violations found")));
    }
    Ok(())
}

fn warn_line_violations(outcome: &io::IngestOutcome) {
    for violation in &outcome.violations {
        eprintln!("line {}: {}", violation.line, violation.message);
    }
}

fn estimate(input: &std::path::Path, output: Option<&std::path::Path>) -> Result<(), CliError> {
    let outcome = io::ingest(input)?;
    warn_line_violations(&outcome);
    let batch = batch_estimate(&outcome.records);
    for skip in &batch.skipped {
        eprintln!(
            "skipped prompt {:?} (record {}): {}",
            skip.prompt_id, skip.index, skip.reason
        );
    }
    if batch.estimates.is_empty() {
        return Err(CliError::Data(
            "no estimable prompts in dataset".to_string(),
        ));
    }
    match output {
        Some(path) => {
            io::emit_estimates(&batch.estimates, path)?;
            eprintln!(
                "estimated {} prompts ({} skipped) -> {}",
                batch.estimates.len(),
                batch.skipped.len(),
                path.display()
            );
        }
        None => {
            for estimate in &batch.estimates {
                println!(
                    "{}",
                    serde_json::to_string(estimate).expect("estimate serialization cannot fail")
                );
            }
        }
    }
    Ok(())
}

/// Selection scores for the candidate prompts under one strategy: PVar for
/// the pvar strategies, max-minus-min reward for the gap baseline, zero
/// for random (which ranks by seed, not score).
fn candidate_scores(
    records: &[PromptRecord],
    kind: StrategyKind,
) -> Result<Vec<(String, f64)>, CliError> {
    let batch = batch_estimate(records);
    for skip in &batch.skipped {
        eprintln!(
            "skipped prompt {:?} (record {}): {}",
            skip.prompt_id, skip.index, skip.reason
        );
    }
    let by_id: HashMap<&str, &PromptRecord> =
        records.iter().map(|r| (r.prompt_id.as_str(), r)).collect();
    let mut scores = Vec::with_capacity(batch.estimates.len());
    for estimate in &batch.estimates {
        let score = match kind {
            StrategyKind::PvarTop | StrategyKind::PvarBottom => estimate.pvar,
            StrategyKind::RewardGapTop => reward_gap(by_id[estimate.prompt_id.as_str()])?,
            StrategyKind::Random => 0.0,
        };
        scores.push((estimate.prompt_id.clone(), score));
    }
    Ok(scores)
}

fn run_select(
    input: &std::path::Path,
    output: &std::path::Path,
    kind: StrategyKind,
    fraction: f64,
    seed: u64,
) -> Result<(), CliError> {
    let outcome = io::ingest(input)?;
    warn_line_violations(&outcome);
    let scores = candidate_scores(&outcome.records, kind)?;
    if scores.is_empty() {
        return Err(CliError::Data(
            "no selectable prompts in dataset".to_string(),
        ));
    }
    let strategy = SelectionStrategy::new(kind, fraction, seed)?;
    let manifest = select(&scores, &strategy, scores.len())?;
    io::emit_manifest(&manifest, output)?;
    println!(
        "selected {} of {} prompts ({kind}, fraction {fraction}) -> {}",
        manifest.selected.len(),
        scores.len(),
        output.display()
    );
    Ok(())
}

fn pair(input: &std::path::Path, output: Option<&std::path::Path>) -> Result<(), CliError> {
    let outcome = io::ingest(input)?;
    warn_line_violations(&outcome);
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for record in &outcome.records {
        if !seen.insert(record.prompt_id.clone()) {
            eprintln!("skipped prompt {:?}: duplicate prompt_id", record.prompt_id);
            continue;
        }
        match build_preference_pair(record) {
            Ok(pair) => pairs.push(pair),
            Err(err) => eprintln!("skipped prompt {:?}: {err}", record.prompt_id),
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Data("no pairable prompts in dataset".to_string()));
    }
    match output {
        Some(path) => {
            io::emit_pairs(&pairs, path)?;
            eprintln!("built {} pairs -> {}", pairs.len(), path.display());
        }
        None => {
            for pair in &pairs {
                println!(
                    "{}",
                    serde_json::to_string(pair).expect("pair serialization cannot fail")
                );
            }
        }
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn train_toy(
    vocab: usize,
    horizon: usize,
    beta: f64,
    lr: f64,
    steps: usize,
    seed: u64,
    strategy: Option<StrategyKind>,
    fraction: f64,
    output: Option<&std::path::Path>,
) -> Result<(), CliError> {
    let spec = ToyDatasetSpec {
        vocab,
        horizon,
        seed,
        ..Default::default()
    };
    let dataset = toy_dataset(&spec)?;
    let ids: Vec<String> = match strategy {
        None => dataset
            .records
            .iter()
            .map(|r| r.prompt_id.clone())
            .collect(),
        Some(kind) => {
            let scores = candidate_scores(&dataset.records, kind)?;
            let strategy = SelectionStrategy::new(kind, fraction, seed)?;
            let manifest = select(&scores, &strategy, scores.len())?;
            eprintln!(
                "training on {} of {} prompts ({kind})",
                manifest.selected.len(),
                scores.len()
            );
            manifest.selected
        }
    };
    let mut pairs = Vec::new();
    for id in &ids {
        match dataset.token_pair(id) {
            Ok(pair) => pairs.push(pair),
            Err(err) => eprintln!("skipped prompt {id:?}: {err}"),
        }
    }
    if pairs.is_empty() {
        return Err(CliError::Data("no trainable pairs".to_string()));
    }
    let config = DpoConfig::new(beta, lr, steps, seed)?;
    let (trained, trace) = train(&dataset.policy, &dataset.policy, &pairs, &config)?;
    if let Some(path) = output {
        if trace.steps.is_empty() {
            eprintln!("no steps taken, not writing {}", path.display());
        } else {
            io::emit_train_trace(&trace, path)?;
            eprintln!(
                "wrote {} trace rows -> {}",
                trace.steps.len(),
                path.display()
            );
        }
    }
    let final_loss = dpo_loss(&trained, &dataset.policy, &pairs, beta)?;
    let final_margin = mean_margin(&trained, &dataset.policy, &pairs, beta)?;
    println!(
        "trained {steps} steps on {} pairs: final loss {final_loss:.6}, final margin {final_margin:.6}",
        pairs.len()
    );
    Ok(())
}

fn verify_bounds(
    count: usize,
    seed: u64,
    output: Option<&std::path::Path>,
) -> Result<(), CliError> {
    if count == 0 {
        return Err(CliError::Data("sweep size must be at least 1".to_string()));
    }
    let theorem1 = sweep::theorem1_sweep(count, seed)?;
    let t1_pass = theorem1.iter().filter(|r| r.check.holds).count();
    println!("theorem-1 sweep: {t1_pass}/{count} hold");

    let t2_count = (count / 2).max(1);
    let theorem2 = sweep::theorem2_sweep(t2_count, seed.wrapping_add(0x0100_0000))?;
    let t2_pass = theorem2.iter().filter(|r| r.check.holds).count();
    let t2_mid = theorem2.iter().filter(|r| r.intermediate_holds()).count();
    println!(
        "theorem-2 sweep: {t2_pass}/{t2_count} hold, {t2_mid}/{t2_count} intermediate inequality"
    );

    let chebyshev = sweep::chebyshev_sweep(count, seed.wrapping_add(0x0200_0000))?;
    let cheb_pass = chebyshev.iter().filter(|(_, c)| c.holds).count();
    println!("chebyshev sweep: {cheb_pass}/{count} hold");

    let lemma1 = sweep::lemma1_sweep(count, seed.wrapping_add(0x0300_0000))?;
    let l1_pass = lemma1.iter().filter(|(_, c)| c.holds).count();
    println!("lemma-1 sweep: {l1_pass}/{count} hold");

    let lemma2 = sweep::lemma2_sweep(count, seed.wrapping_add(0x0400_0000))?;
    let l2_pass = lemma2.iter().filter(|(_, c)| c.holds).count();
    println!("lemma-2 sweep: {l2_pass}/{count} hold");

    let lemma3 = sweep::lemma3_sweep(count, seed.wrapping_add(0x0500_0000))?;
    let l3_pass = lemma3.iter().filter(|(_, c)| c.holds).count();
    println!("lemma-3 sweep: {l3_pass}/{count} hold");

    if let Some(path) = output {
        io::emit_bound_sweep(&theorem1, path)?;
        eprintln!("wrote {count} sweep rows -> {}", path.display());
    }

    let all_pass = t1_pass == count
        && t2_pass == t2_count
        && t2_mid == t2_count
        && cheb_pass == count
        && l1_pass == count
        && l2_pass == count
        && l3_pass == count;
    if !all_pass {
        return Err(CliError::Data("bound violation detected".to_string()));
    }
    Ok(())
}

fn report(input: &std::path::Path, output: &std::path::Path) -> Result<(), CliError> {
    let estimates = io::read_estimates(input)?;
    io::emit_pvar_histogram(&estimates, output)?;
    println!(
        "wrote histogram of {} estimates -> {}",
        estimates.len(),
        output.display()
    );
    Ok(())
}
