//! End-to-end scenario runs: simulate a campaign, gate annotators on gold
//! tasks, weigh the survivors by agreement, build weighted and corrected
//! consensus tables, and persist everything alongside a machine-readable
//! report.

use serde::Serialize;
use std::collections::BTreeMap;
use std::path::Path;

use crate::crowd::{run_scenario, ClassificationLog, Scenario, SimulationOutput, Subject};
use crate::error::{Error, Result};
use crate::io;
use crate::quality::{
    aggregate, apply_correction, apply_verdicts, estimate_bias, probation_filter, user_weights,
    AggregateResult, ProbationOutcome, ProbationPolicy, Tier, TierThresholds, WeightMode,
    WeightTable,
};

/// Subjects per reliability tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TierCounts {
    pub none: usize,
    pub clean: usize,
    pub superclean: usize,
}

impl TierCounts {
    fn tally(results: &[AggregateResult]) -> Self {
        let mut counts = TierCounts {
            none: 0,
            clean: 0,
            superclean: 0,
        };
        for r in results {
            match r.tier {
                Tier::None => counts.none += 1,
                Tier::Clean => counts.clean += 1,
                Tier::Superclean => counts.superclean += 1,
            }
        }
        counts
    }

    /// Subjects at the clean tier or better.
    pub fn reliable(&self) -> usize {
        self.clean + self.superclean
    }
}

/// Share of consensus labels matching the true class, overall and within
/// the reliability tiers. Tier fields are `None` when the tier is empty.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct AccuracyReport {
    pub subjects: usize,
    pub overall: f64,
    pub clean_or_better: Option<f64>,
    pub superclean: Option<f64>,
}

fn accuracy(results: &[AggregateResult], class_of: &BTreeMap<&str, usize>) -> AccuracyReport {
    let mut hit = [0usize; 3];
    let mut seen = [0usize; 3];
    for r in results {
        let correct = r.consensus_label == class_of[r.subject_id.as_str()];
        for (level, min_tier) in [Tier::None, Tier::Clean, Tier::Superclean]
            .into_iter()
            .enumerate()
        {
            if r.tier >= min_tier {
                seen[level] += 1;
                if correct {
                    hit[level] += 1;
                }
            }
        }
    }
    let ratio = |level: usize| -> Option<f64> {
        (seen[level] > 0).then(|| hit[level] as f64 / seen[level] as f64)
    };
    AccuracyReport {
        subjects: seen[0],
        overall: ratio(0).unwrap_or(0.0),
        clean_or_better: ratio(1),
        superclean: ratio(2),
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ProbationSummary {
    pub passed: usize,
    pub failed: usize,
    pub provisional: usize,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct WeightSummary {
    pub annotators: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl WeightSummary {
    fn from_table(table: &WeightTable) -> Self {
        let n = table.weights.len();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        let mut sum = 0.0;
        for &w in table.weights.values() {
            min = min.min(w);
            max = max.max(w);
            sum += w;
        }
        WeightSummary {
            annotators: n,
            min: if n == 0 { 0.0 } else { min },
            max: if n == 0 { 0.0 } else { max },
            mean: if n == 0 { 0.0 } else { sum / n as f64 },
        }
    }
}

/// Outcome of the confusion-estimate inversion.
#[derive(Debug, Clone, Serialize)]
pub struct BiasReport {
    pub condition_number: f64,
    pub fallback_identity: bool,
    /// True classes absent from the gold pool, left uncorrected.
    pub unestimated_rows: Vec<usize>,
}

/// Everything a pipeline run measured, serialized as `report.json`.
#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: Scenario,
    pub weight_mode: WeightMode,
    pub records: usize,
    pub live_subjects: usize,
    pub probation: ProbationSummary,
    pub weights: WeightSummary,
    pub unweighted_tiers: TierCounts,
    pub weighted_tiers: TierCounts,
    pub corrected_tiers: TierCounts,
    pub unweighted_accuracy: AccuracyReport,
    pub weighted_accuracy: AccuracyReport,
    pub corrected_accuracy: AccuracyReport,
    /// Share of subjects whose weighted consensus matches the raw modal
    /// label.
    pub modal_agreement: f64,
    /// `None` when the campaign had no gold records to estimate from.
    pub bias: Option<BiasReport>,
    pub warnings: Vec<String>,
}

/// Results of gating, weighing, aggregating, and correcting one log.
#[derive(Debug, Clone)]
pub struct LogAnalysis {
    pub gate: ProbationOutcome,
    pub weight_table: WeightTable,
    pub weighted: Vec<AggregateResult>,
    pub unweighted: Vec<AggregateResult>,
    pub corrected: Vec<AggregateResult>,
    pub bias: Option<BiasReport>,
    pub warnings: Vec<String>,
}

impl LogAnalysis {
    /// Share of subjects whose weighted consensus matches the raw modal
    /// label; 1 when nothing was scored.
    pub fn modal_agreement(&self) -> f64 {
        if self.weighted.is_empty() {
            return 1.0;
        }
        let agreements = self
            .weighted
            .iter()
            .filter(|r| r.consensus_label == r.unweighted_label)
            .count();
        agreements as f64 / self.weighted.len() as f64
    }
}

/// Gate annotators on their gold window, drop gold and failed annotators'
/// records, weigh survivors by agreement, build weighted and unweighted
/// consensus tables, then invert the gold-estimated confusion matrix to
/// correct the weighted table.
///
/// The scenario pipeline and the standalone aggregation command both run
/// through here, so re-running the stage from persisted log and subject
/// files reproduces the original outputs exactly.
pub fn process_log(
    log: &ClassificationLog,
    subjects: &[Subject],
    policy: &ProbationPolicy,
    tiers: &TierThresholds,
    mode: WeightMode,
) -> Result<LogAnalysis> {
    let mut warnings = Vec::new();
    let gate = probation_filter(log, subjects, policy)?;
    warnings.extend(gate.warnings.iter().cloned());

    let weight_table = user_weights(&gate.filtered, mode)?;
    warnings.extend(weight_table.warnings.iter().cloned());

    let weighted_out = aggregate(&gate.filtered, Some(&weight_table), tiers)?;
    warnings.extend(weighted_out.warnings.iter().cloned());
    let unweighted_out = aggregate(&gate.filtered, None, tiers)?;
    let weighted = weighted_out.results;
    let unweighted = unweighted_out.results;

    let has_gold = {
        let gold: std::collections::BTreeSet<&str> = subjects
            .iter()
            .filter(|s| s.is_gold)
            .map(|s| s.id.as_str())
            .collect();
        log.records.iter().any(|r| gold.contains(r.subject_id.as_str()))
    };
    let (corrected, bias) = if has_gold {
        let estimate = estimate_bias(log, subjects)?;
        let correction = apply_correction(&weighted, &estimate, tiers)?;
        warnings.extend(correction.warnings.iter().cloned());
        let bias = BiasReport {
            condition_number: correction.condition_number,
            fallback_identity: correction.fallback_identity,
            unestimated_rows: estimate.unestimated_rows.clone(),
        };
        (correction.results, Some(bias))
    } else {
        warnings.push("no gold records: bias correction skipped".to_string());
        (weighted.clone(), None)
    };
    Ok(LogAnalysis {
        gate,
        weight_table,
        weighted,
        unweighted,
        corrected,
        bias,
        warnings,
    })
}

/// In-memory results of a pipeline run, before or without persistence.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub simulation: SimulationOutput,
    pub weight_table: WeightTable,
    pub weighted: Vec<AggregateResult>,
    pub unweighted: Vec<AggregateResult>,
    pub corrected: Vec<AggregateResult>,
    pub report: RunReport,
}

/// Run the full pipeline in memory: simulate the scenario, then
/// [`process_log`] on the result.
pub fn execute_scenario(scenario: &Scenario, mode: WeightMode) -> Result<PipelineRun> {
    scenario.validate()?;
    let mut simulation = run_scenario(scenario)?;
    let analysis = process_log(
        &simulation.log,
        &simulation.subjects,
        &scenario.probation,
        &scenario.tiers,
        mode,
    )?;
    apply_verdicts(&mut simulation.annotators, &analysis.gate);
    let (passed, failed, provisional) = analysis.gate.verdict_counts();

    let class_of: BTreeMap<&str, usize> = simulation
        .subjects
        .iter()
        .map(|s| (s.id.as_str(), s.true_class))
        .collect();

    let LogAnalysis {
        weight_table,
        weighted,
        unweighted,
        corrected,
        bias,
        warnings,
        ..
    } = analysis.clone();

    let report = RunReport {
        scenario: scenario.clone(),
        weight_mode: mode,
        records: simulation.log.len(),
        live_subjects: scenario.n_subjects - scenario.gold_count,
        probation: ProbationSummary {
            passed,
            failed,
            provisional,
        },
        weights: WeightSummary::from_table(&weight_table),
        unweighted_tiers: TierCounts::tally(&unweighted),
        weighted_tiers: TierCounts::tally(&weighted),
        corrected_tiers: TierCounts::tally(&corrected),
        unweighted_accuracy: accuracy(&unweighted, &class_of),
        weighted_accuracy: accuracy(&weighted, &class_of),
        corrected_accuracy: accuracy(&corrected, &class_of),
        modal_agreement: analysis.modal_agreement(),
        bias,
        warnings,
    };
    Ok(PipelineRun {
        simulation,
        weight_table,
        weighted,
        unweighted,
        corrected,
        report,
    })
}

/// Run the pipeline and persist the results.
///
/// Writes `log.csv`, `subjects.csv`, `weights.csv`, `aggregates.csv` (the
/// weighted consensus), `aggregates_corrected.csv`, and `report.json` into
/// `out_dir`, creating it if needed. The scenario is validated and simulated
/// before anything is written, so a failing run leaves no partial output.
pub fn run_pipeline(
    scenario: &Scenario,
    out_dir: impl AsRef<Path>,
    mode: WeightMode,
) -> Result<PipelineRun> {
    let run = execute_scenario(scenario, mode)?;
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", out_dir.display()),
        ))
    })?;
    io::write_log(out_dir.join("log.csv"), &run.simulation.log)?;
    io::write_subjects(out_dir.join("subjects.csv"), &run.simulation.subjects)?;
    io::write_weights(out_dir.join("weights.csv"), &run.weight_table)?;
    io::write_consensus(out_dir.join("aggregates.csv"), &run.weighted)?;
    io::write_consensus(out_dir.join("aggregates_corrected.csv"), &run.corrected)?;
    let mut report_file = std::fs::File::create(out_dir.join("report.json"))?;
    serde_json::to_writer_pretty(&mut report_file, &run.report)?;
    use std::io::Write as _;
    report_file.write_all(b"\n")?;
    Ok(run)
}
