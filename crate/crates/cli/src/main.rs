//! Command-line front end: scenario pipeline runs, standalone stages, and
//! direct access to the analysis modules. Results print as JSON on stdout;
//! warnings go to stderr. Exit codes: 0 success, 1 usage error, 2 data or
//! validation error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use std::path::PathBuf;
use std::process::ExitCode;

use crowdsense::condorcet::{majority_prob, min_jury_size, simulate_jury};
use crowdsense::crowd::run_scenario;
use crowdsense::epistemic::Formula;
use crowdsense::io;
use crowdsense::pipeline::{process_log, run_pipeline};
use crowdsense::quality::{ProbationPolicy, TierThresholds, WeightMode};
use crowdsense::scimetrics::{group_increase_summary, h_index, percent_increases, round2};
use crowdsense::stats::{cohens_d, ks_one_sample, ks_two_sample, normal_cdf, ols_loglog, skewness, KsMethod, KsResult};
use crowdsense::veritistic::{check_shaked_conditions, expected_delta_v_monte_carlo};

#[derive(Parser)]
#[command(
    name = "crowdsense",
    version,
    about = "Crowdsourced-classification aggregation and analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum WeightModeArg {
    Literal,
    Fraction,
}

impl From<WeightModeArg> for WeightMode {
    fn from(arg: WeightModeArg) -> Self {
        match arg {
            WeightModeArg::Literal => WeightMode::Literal,
            WeightModeArg::Fraction => WeightMode::Fraction,
        }
    }
}

#[derive(Args)]
struct GateArgs {
    /// Gold tasks scored per annotator.
    #[arg(long, default_value_t = 15)]
    window: usize,
    /// Correct gold answers required to pass.
    #[arg(long, default_value_t = 11)]
    pass_threshold: usize,
    /// Consensus share for the clean tier.
    #[arg(long, default_value_t = 0.80)]
    clean: f64,
    /// Consensus share for the superclean tier.
    #[arg(long, default_value_t = 0.95)]
    superclean: f64,
}

impl GateArgs {
    fn policy(&self) -> ProbationPolicy {
        ProbationPolicy {
            window: self.window,
            pass_threshold: self.pass_threshold,
        }
    }

    fn tiers(&self) -> TierThresholds {
        TierThresholds {
            clean: self.clean,
            superclean: self.superclean,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a scenario file.
    Run {
        scenario: PathBuf,
        /// Output directory for logs, tables, and the report.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "literal")]
        weight_mode: WeightModeArg,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Simulate a scenario and persist the raw log, subjects, and population.
    Simulate {
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Gate, weigh, aggregate, and bias-correct a persisted log.
    Aggregate {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        subjects: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value = "literal")]
        weight_mode: WeightModeArg,
        #[command(flatten)]
        gate: GateArgs,
    },
    /// Majority-vote reliability: exact, simulated, or minimum jury size.
    Jury {
        /// Jury size (odd). Prints the exact majority probability.
        #[arg(long)]
        n: Option<u64>,
        /// Per-voter probability of being right.
        #[arg(long)]
        p: f64,
        /// Add a seeded Monte-Carlo estimate alongside the exact value.
        #[arg(long)]
        trials: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Smallest odd jury whose majority reaches this reliability.
        #[arg(long)]
        target: Option<f64>,
    },
    /// Check the expected-accuracy conditions for an evidence model file.
    Shaked {
        model: PathBuf,
        /// Add a seeded Monte-Carlo estimate of the expected value change.
        #[arg(long)]
        samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Possible-worlds knowledge queries.
    Epistemic {
        #[command(subcommand)]
        command: EpistemicCommand,
    },
    /// Statistics over numeric sample files.
    Stats {
        #[command(subcommand)]
        command: StatsCommand,
    },
    /// Catalog growth and citation analyses.
    Scimetrics {
        #[command(subcommand)]
        command: ScimetricsCommand,
    },
}

#[derive(Subcommand)]
enum EpistemicCommand {
    /// Evaluate a formula in a model, e.g. `check model.json "D{a,b} p"`.
    Check {
        model: PathBuf,
        /// Prefix notation: `! & | ->` connectives, `K{agent}` and
        /// `D{agent,...}` modalities, bare identifiers as atoms.
        #[arg(allow_hyphen_values = true)]
        formula: String,
        /// World to evaluate in; defaults to the model's actual world.
        #[arg(long)]
        world: Option<String>,
    },
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Two-sample Kolmogorov-Smirnov test.
    Ks2 { a: PathBuf, b: PathBuf },
    /// One-sample Kolmogorov-Smirnov test against a normal reference.
    Ks1 {
        sample: PathBuf,
        #[arg(long)]
        mean: f64,
        #[arg(long)]
        sd: f64,
    },
    /// Cohen's d effect size between two samples.
    CohensD { a: PathBuf, b: PathBuf },
    /// Adjusted skewness of a sample.
    Skew { sample: PathBuf },
    /// Power-law fit: least squares on (ln x, ln y).
    Ols { x: PathBuf, y: PathBuf },
}

#[derive(Subcommand)]
enum ScimetricsCommand {
    /// Edition-over-edition percent increases for each catalog series.
    Increases { catalog: PathBuf },
    /// Increase statistics grouped by collection method.
    Summary { catalog: PathBuf },
    /// h-index of a single-column citation-count file.
    Hindex { citations: PathBuf },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn print_json(value: &serde_json::Value) -> crowdsense::Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn ks_json(result: &KsResult) -> serde_json::Value {
    let method = match result.method {
        KsMethod::ExactPermutation { permutations } => json!({
            "name": "exact_permutation",
            "permutations": permutations,
        }),
        KsMethod::Asymptotic => json!({ "name": "asymptotic" }),
    };
    json!({ "d": result.d, "p_value": result.p_value, "method": method })
}

fn dispatch(command: Command) -> crowdsense::Result<()> {
    match command {
        Command::Run {
            scenario,
            out,
            weight_mode,
            seed,
        } => {
            let mut scenario = io::read_scenario(&scenario)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let run = run_pipeline(&scenario, &out, weight_mode.into())?;
            for w in &run.report.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&serde_json::to_value(&run.report)?)
        }
        Command::Simulate { scenario, out, seed } => {
            let mut scenario = io::read_scenario(&scenario)?;
            if let Some(seed) = seed {
                scenario.seed = seed;
            }
            let sim = run_scenario(&scenario)?;
            std::fs::create_dir_all(&out)?;
            io::write_log(out.join("log.csv"), &sim.log)?;
            io::write_subjects(out.join("subjects.csv"), &sim.subjects)?;
            let population = std::fs::File::create(out.join("annotators.json"))?;
            serde_json::to_writer_pretty(population, &sim.annotators)?;
            print_json(&json!({
                "records": sim.log.len(),
                "subjects": sim.subjects.len(),
                "annotators": sim.annotators.len(),
                "out": out,
            }))
        }
        Command::Aggregate {
            log,
            subjects,
            out,
            weight_mode,
            gate,
        } => {
            let log = io::read_log(&log)?;
            let subjects = io::read_subjects(&subjects)?;
            let analysis = process_log(
                &log,
                &subjects,
                &gate.policy(),
                &gate.tiers(),
                weight_mode.into(),
            )?;
            for w in &analysis.warnings {
                eprintln!("warning: {w}");
            }
            std::fs::create_dir_all(&out)?;
            io::write_weights(out.join("weights.csv"), &analysis.weight_table)?;
            io::write_consensus(out.join("aggregates.csv"), &analysis.weighted)?;
            io::write_consensus(
                out.join("aggregates_corrected.csv"),
                &analysis.corrected,
            )?;
            let (passed, failed, provisional) = analysis.gate.verdict_counts();
            print_json(&json!({
                "probation": {
                    "passed": passed,
                    "failed": failed,
                    "provisional": provisional,
                },
                "scored_subjects": analysis.weighted.len(),
                "modal_agreement": analysis.modal_agreement(),
                "bias": analysis.bias.as_ref().map(|b| json!({
                    "condition_number": b.condition_number,
                    "fallback_identity": b.fallback_identity,
                })),
                "out": out,
            }))
        }
        Command::Jury {
            n,
            p,
            trials,
            seed,
            target,
        } => {
            if n.is_none() && target.is_none() {
                return Err(crowdsense::Error::config(
                    "jury needs --n (majority probability) or --target (minimum size)",
                ));
            }
            let mut out = serde_json::Map::new();
            out.insert("p".into(), json!(p));
            if let Some(n) = n {
                out.insert("n".into(), json!(n));
                out.insert("exact".into(), json!(majority_prob(n, p)?));
                if let Some(trials) = trials {
                    out.insert(
                        "simulated".into(),
                        json!(simulate_jury(n, p, trials, seed)?),
                    );
                    out.insert("trials".into(), json!(trials));
                    out.insert("seed".into(), json!(seed));
                }
            }
            if let Some(target) = target {
                out.insert("target".into(), json!(target));
                out.insert("min_jury_size".into(), json!(min_jury_size(p, target)?));
            }
            print_json(&serde_json::Value::Object(out))
        }
        Command::Shaked {
            model,
            samples,
            seed,
        } => {
            let model = io::read_evidence_model(&model)?;
            let report = check_shaked_conditions(&model)?;
            let mut value = serde_json::to_value(&report)?;
            if let Some(samples) = samples {
                let mc = expected_delta_v_monte_carlo(&model, samples, seed)?;
                value["monte_carlo"] = json!({
                    "expected_delta_v": mc,
                    "samples": samples,
                    "seed": seed,
                });
            }
            print_json(&value)
        }
        Command::Epistemic {
            command: EpistemicCommand::Check {
                model,
                formula,
                world,
            },
        } => {
            let model = io::read_kripke_model(&model)?;
            let parsed = crowdsense::epistemic::parse_formula(&formula)?;
            let world = match world.or_else(|| model.actual_world.clone()) {
                Some(w) => w,
                None => {
                    return Err(crowdsense::Error::config(
                        "no --world given and the model declares no actual world",
                    ));
                }
            };
            warn_vacuous_groups(&model, &parsed, &world)?;
            let truth = model.eval(&world, &parsed)?;
            println!("{truth}");
            Ok(())
        }
        Command::Stats { command } => stats(command),
        Command::Scimetrics { command } => scimetrics(command),
    }
}

/// A group with no jointly accessible world makes its D-formulas vacuously
/// true; surface that rather than letting it read as a positive finding.
fn warn_vacuous_groups(
    model: &crowdsense::epistemic::KripkeModel,
    formula: &Formula,
    world: &str,
) -> crowdsense::Result<()> {
    match formula {
        Formula::Atom(_) => Ok(()),
        Formula::Not(inner) | Formula::Knows(_, inner) => {
            warn_vacuous_groups(model, inner, world)
        }
        Formula::And(a, b) | Formula::Or(a, b) | Formula::Implies(a, b) => {
            warn_vacuous_groups(model, a, world)?;
            warn_vacuous_groups(model, b, world)
        }
        Formula::Distributed(group, inner) => {
            if model.group_accessible(world, group)?.is_empty() {
                eprintln!(
                    "warning: group {{{}}} has no jointly accessible world from `{world}`; \
                     its D-formulas are vacuously true there",
                    group.join(",")
                );
            }
            warn_vacuous_groups(model, inner, world)
        }
    }
}

fn stats(command: StatsCommand) -> crowdsense::Result<()> {
    match command {
        StatsCommand::Ks2 { a, b } => {
            let a = io::read_samples(&a)?;
            let b = io::read_samples(&b)?;
            print_json(&ks_json(&ks_two_sample(&a, &b)?))
        }
        StatsCommand::Ks1 { sample, mean, sd } => {
            let sample = io::read_samples(&sample)?;
            let result = ks_one_sample(&sample, |x| normal_cdf(x, mean, sd))?;
            let mut value = ks_json(&result);
            value["reference"] = json!({ "mean": mean, "sd": sd });
            print_json(&value)
        }
        StatsCommand::CohensD { a, b } => {
            let a = io::read_samples(&a)?;
            let b = io::read_samples(&b)?;
            print_json(&json!({ "cohens_d": cohens_d(&a, &b)? }))
        }
        StatsCommand::Skew { sample } => {
            let sample = io::read_samples(&sample)?;
            print_json(&json!({ "skewness": skewness(&sample)? }))
        }
        StatsCommand::Ols { x, y } => {
            let x = io::read_samples(&x)?;
            let y = io::read_samples(&y)?;
            let fit = ols_loglog(&x, &y)?;
            print_json(&json!({
                "slope": fit.slope,
                "intercept": fit.intercept,
                "r_squared": fit.r_squared,
                "slope_se": fit.slope_se,
                "n": fit.n,
            }))
        }
    }
}

fn scimetrics(command: ScimetricsCommand) -> crowdsense::Result<()> {
    match command {
        ScimetricsCommand::Increases { catalog } => {
            let series = io::read_catalog(&catalog)?;
            let mut out = Vec::new();
            for s in &series {
                let increases = percent_increases(s)?;
                let printed: Vec<String> =
                    increases.iter().map(|&v| format!("{:.2}", round2(v))).collect();
                out.push(json!({
                    "label": s.label,
                    "percent": increases,
                    "printed": printed,
                }));
            }
            print_json(&json!(out))
        }
        ScimetricsCommand::Summary { catalog } => {
            let series = io::read_catalog(&catalog)?;
            let summary = group_increase_summary(&series)?;
            for w in &summary.warnings {
                eprintln!("warning: {w}");
            }
            print_json(&serde_json::to_value(&summary)?)
        }
        ScimetricsCommand::Hindex { citations } => {
            let values = io::read_samples(&citations)?;
            let mut counts = Vec::with_capacity(values.len());
            for v in values {
                if v < 0.0 || v.fract() != 0.0 {
                    return Err(crowdsense::Error::validation(format!(
                        "citation counts must be non-negative integers, got {v}"
                    )));
                }
                counts.push(v as u64);
            }
            print_json(&json!({ "h_index": h_index(&counts) }))
        }
    }
}
