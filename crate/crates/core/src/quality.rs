//! Quality control over a classification log: a probation gate scored on
//! gold subjects, agreement-based annotator weights, weighted consensus
//! labels with reliability tiers, and a confusion-matrix bias correction
//! estimated from the gold records.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};

use crate::crowd::{Annotator, AnnotatorStatus, ClassificationLog, ClassificationRecord, Subject};
use crate::error::{Error, Result};

/// Condition number above which the bias correction refuses to invert the
/// estimated confusion matrix and falls back to the identity.
pub const CONDITION_LIMIT: f64 = 1e8;

/// Gate parameters: how many of an annotator's first `window` gold tasks
/// must be correct for them to pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbationPolicy {
    pub window: usize,
    pub pass_threshold: usize,
}

impl Default for ProbationPolicy {
    fn default() -> Self {
        ProbationPolicy {
            window: 15,
            pass_threshold: 11,
        }
    }
}

impl ProbationPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.pass_threshold > self.window {
            return Err(Error::config(format!(
                "pass threshold {} exceeds the probation window {}",
                self.pass_threshold, self.window
            )));
        }
        Ok(())
    }
}

/// Consensus-share thresholds for the reliability tiers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TierThresholds {
    pub clean: f64,
    pub superclean: f64,
}

impl Default for TierThresholds {
    fn default() -> Self {
        TierThresholds {
            clean: 0.80,
            superclean: 0.95,
        }
    }
}

impl TierThresholds {
    pub fn validate(&self) -> Result<()> {
        if !(self.clean > 0.0 && self.clean <= self.superclean && self.superclean <= 1.0) {
            return Err(Error::config(format!(
                "tier thresholds must satisfy 0 < clean <= superclean <= 1, got {} and {}",
                self.clean, self.superclean
            )));
        }
        Ok(())
    }

    /// Tier for a consensus share; both boundaries are inclusive.
    pub fn tier_for(&self, fraction: f64) -> Tier {
        if fraction >= self.superclean {
            Tier::Superclean
        } else if fraction >= self.clean {
            Tier::Clean
        } else {
            Tier::None
        }
    }
}

/// Gate verdict for one annotator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// Not enough gold tasks seen to decide.
    Provisional,
}

/// One annotator's gate outcome.
#[derive(Debug, Clone, Serialize)]
pub struct ProbationEntry {
    pub annotator_id: String,
    /// Gold tasks scored, at most the window size.
    pub gold_seen: usize,
    pub correct: usize,
    pub verdict: Verdict,
}

/// Result of the probation gate over a whole log.
#[derive(Debug, Clone)]
pub struct ProbationOutcome {
    /// Per-annotator verdicts, sorted by annotator id.
    pub entries: Vec<ProbationEntry>,
    /// Live (non-gold) records of passing annotators; this is what the rest
    /// of the pipeline consumes.
    pub filtered: ClassificationLog,
    /// Live records of annotators still provisional, held apart rather than
    /// discarded.
    pub quarantined: ClassificationLog,
    pub warnings: Vec<String>,
}

impl ProbationOutcome {
    /// (passed, failed, provisional) counts.
    pub fn verdict_counts(&self) -> (usize, usize, usize) {
        let mut counts = (0, 0, 0);
        for e in &self.entries {
            match e.verdict {
                Verdict::Pass => counts.0 += 1,
                Verdict::Fail => counts.1 += 1,
                Verdict::Provisional => counts.2 += 1,
            }
        }
        counts
    }
}

/// Score every annotator's first `window` gold tasks and split the log.
///
/// Passing annotators keep their live records (gold records are consumed by
/// the gate and stripped for everyone); failing annotators lose all records;
/// annotators with fewer than `window` gold tasks stay provisional and their
/// live records are quarantined. A window of zero disables the gate. A log
/// with no gold records at all leaves everyone provisional but passes the
/// whole log through, with a warning.
pub fn probation_filter(
    log: &ClassificationLog,
    subjects: &[Subject],
    policy: &ProbationPolicy,
) -> Result<ProbationOutcome> {
    policy.validate()?;
    let by_id: BTreeMap<&str, &Subject> = subjects.iter().map(|s| (s.id.as_str(), s)).collect();
    for r in &log.records {
        if !by_id.contains_key(r.subject_id.as_str()) {
            return Err(Error::validation(format!(
                "log references unknown subject `{}`",
                r.subject_id
            )));
        }
    }
    let is_gold = |r: &ClassificationRecord| by_id[r.subject_id.as_str()].is_gold;

    let mut annotators: BTreeMap<&str, Vec<&ClassificationRecord>> = BTreeMap::new();
    for r in &log.records {
        annotators.entry(r.annotator_id.as_str()).or_default().push(r);
    }

    let any_gold = log.records.iter().any(&is_gold);
    if policy.window > 0 && !any_gold {
        let entries = annotators
            .keys()
            .map(|id| ProbationEntry {
                annotator_id: id.to_string(),
                gold_seen: 0,
                correct: 0,
                verdict: Verdict::Provisional,
            })
            .collect();
        return Ok(ProbationOutcome {
            entries,
            filtered: log.clone(),
            quarantined: ClassificationLog::default(),
            warnings: vec![
                "no gold-subject records: probation gate skipped, all annotators provisional"
                    .to_string(),
            ],
        });
    }

    let mut entries = Vec::with_capacity(annotators.len());
    let mut filtered = Vec::new();
    let mut quarantined = Vec::new();
    for (id, mut records) in annotators {
        records.sort_by_key(|r| r.seq);
        let mut gold_seen = 0usize;
        let mut correct = 0usize;
        for r in records.iter().filter(|r| is_gold(r)) {
            if gold_seen == policy.window {
                break;
            }
            gold_seen += 1;
            if r.label == by_id[r.subject_id.as_str()].true_class {
                correct += 1;
            }
        }
        let verdict = if gold_seen < policy.window {
            Verdict::Provisional
        } else if correct >= policy.pass_threshold {
            Verdict::Pass
        } else {
            Verdict::Fail
        };
        let live = records.iter().filter(|r| !is_gold(r)).map(|&r| r.clone());
        match verdict {
            Verdict::Pass => filtered.extend(live),
            Verdict::Provisional => quarantined.extend(live),
            Verdict::Fail => {}
        }
        entries.push(ProbationEntry {
            annotator_id: id.to_string(),
            gold_seen,
            correct,
            verdict,
        });
    }
    Ok(ProbationOutcome {
        entries,
        filtered: ClassificationLog { records: filtered },
        quarantined: ClassificationLog {
            records: quarantined,
        },
        warnings: Vec::new(),
    })
}

/// Push gate verdicts onto the population: passers become active, failures
/// are filtered out and lose their weight.
pub fn apply_verdicts(annotators: &mut [Annotator], outcome: &ProbationOutcome) {
    let verdicts: BTreeMap<&str, Verdict> = outcome
        .entries
        .iter()
        .map(|e| (e.annotator_id.as_str(), e.verdict))
        .collect();
    for a in annotators {
        match verdicts.get(a.id.as_str()) {
            Some(Verdict::Pass) => a.status = AnnotatorStatus::Active,
            Some(Verdict::Fail) => {
                a.status = AnnotatorStatus::Filtered;
                a.weight = 0.0;
            }
            Some(Verdict::Provisional) | None => a.status = AnnotatorStatus::Provisional,
        }
    }
}

/// Which denominator the agreement weight uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightMode {
    /// Agreements divided by the annotator's own subject count.
    Literal,
    /// Agreements divided by the other annotators on each subject.
    Fraction,
}

impl std::fmt::Display for WeightMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WeightMode::Literal => write!(f, "literal"),
            WeightMode::Fraction => write!(f, "fraction"),
        }
    }
}

/// Agreement weights per annotator, rescaled to mean 1.
#[derive(Debug, Clone)]
pub struct WeightTable {
    pub mode: WeightMode,
    pub weights: BTreeMap<String, f64>,
    pub warnings: Vec<String>,
}

impl WeightTable {
    /// A table assigning weight 1 to every listed annotator.
    pub fn uniform<I: IntoIterator<Item = String>>(ids: I) -> Self {
        WeightTable {
            mode: WeightMode::Literal,
            weights: ids.into_iter().map(|id| (id, 1.0)).collect(),
            warnings: Vec::new(),
        }
    }
}

/// Agreement-based annotator weights.
///
/// For each vote, count the other annotators who gave the same label to the
/// same subject. In literal mode those agreement counts are summed and
/// divided by the number of subjects the annotator classified; in fraction
/// mode each count is divided by the number of other annotators on that
/// subject before summing. Raw scores are then rescaled to mean 1. If nobody
/// agrees with anybody (for example at redundancy 1), everyone gets weight
/// 1 and a warning is recorded.
pub fn user_weights(log: &ClassificationLog, mode: WeightMode) -> Result<WeightTable> {
    let mut votes: BTreeMap<&str, Vec<(&str, usize)>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    let mut subject_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &log.records {
        if !seen.insert((r.annotator_id.as_str(), r.subject_id.as_str())) {
            return Err(Error::validation(format!(
                "annotator `{}` classified subject `{}` more than once",
                r.annotator_id, r.subject_id
            )));
        }
        votes
            .entry(r.subject_id.as_str())
            .or_default()
            .push((r.annotator_id.as_str(), r.label));
        *subject_counts.entry(r.annotator_id.as_str()).or_default() += 1;
    }

    let mut raw: BTreeMap<&str, f64> = subject_counts.keys().map(|&id| (id, 0.0)).collect();
    for voters in votes.values() {
        let mut label_counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &(_, label) in voters {
            *label_counts.entry(label).or_default() += 1;
        }
        for &(annotator, label) in voters {
            let agree = (label_counts[&label] - 1) as f64;
            let partial = match mode {
                WeightMode::Literal => agree / subject_counts[annotator] as f64,
                WeightMode::Fraction => {
                    if voters.len() > 1 {
                        agree / (voters.len() - 1) as f64
                    } else {
                        0.0
                    }
                }
            };
            *raw.get_mut(annotator).expect("raw seeded from counts") += partial;
        }
    }

    let mut warnings = Vec::new();
    let total: f64 = raw.values().sum();
    let weights = if raw.is_empty() {
        BTreeMap::new()
    } else if total == 0.0 {
        warnings.push(
            "no agreement between any annotators: falling back to uniform weights".to_string(),
        );
        raw.keys().map(|&id| (id.to_string(), 1.0)).collect()
    } else {
        let scale = raw.len() as f64 / total;
        raw.iter()
            .map(|(&id, &v)| (id.to_string(), v * scale))
            .collect()
    };
    Ok(WeightTable {
        mode,
        weights,
        warnings,
    })
}

/// Reliability tier of a consensus label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tier {
    None,
    Clean,
    Superclean,
}

impl std::fmt::Display for Tier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Tier::None => write!(f, "none"),
            Tier::Clean => write!(f, "clean"),
            Tier::Superclean => write!(f, "superclean"),
        }
    }
}

/// Consensus for one subject.
#[derive(Debug, Clone)]
pub struct AggregateResult {
    pub subject_id: String,
    /// Raw vote counts per label.
    pub histogram: BTreeMap<usize, u64>,
    /// Weight mass per label.
    pub weighted_histogram: BTreeMap<usize, f64>,
    /// Label with the largest weight mass; ties break toward the smallest
    /// label.
    pub consensus_label: usize,
    /// Label with the most raw votes, same tie rule.
    pub unweighted_label: usize,
    /// Share of the total weight mass behind the consensus label.
    pub consensus_fraction: f64,
    pub tier: Tier,
}

/// Consensus results for a log.
#[derive(Debug, Clone)]
pub struct AggregationOutcome {
    /// One entry per subject with any weighted mass, sorted by subject id.
    pub results: Vec<AggregateResult>,
    /// Subjects whose votes all carried zero weight.
    pub excluded: Vec<String>,
    pub warnings: Vec<String>,
}

/// Weighted plurality consensus per subject.
///
/// `weights: None` means unit weights. Annotators voting without an entry in
/// the table contribute zero mass (their vote still shows in the raw
/// histogram). Subjects with zero total mass are excluded with a warning.
pub fn aggregate(
    log: &ClassificationLog,
    weights: Option<&WeightTable>,
    tiers: &TierThresholds,
) -> Result<AggregationOutcome> {
    tiers.validate()?;
    let mut votes: BTreeMap<&str, Vec<(&str, usize)>> = BTreeMap::new();
    let mut seen = BTreeSet::new();
    for r in &log.records {
        if !seen.insert((r.annotator_id.as_str(), r.subject_id.as_str())) {
            return Err(Error::validation(format!(
                "annotator `{}` classified subject `{}` more than once",
                r.annotator_id, r.subject_id
            )));
        }
        votes
            .entry(r.subject_id.as_str())
            .or_default()
            .push((r.annotator_id.as_str(), r.label));
    }

    let weight_of = |annotator: &str| -> f64 {
        match weights {
            None => 1.0,
            Some(table) => table.weights.get(annotator).copied().unwrap_or(0.0),
        }
    };

    let mut results = Vec::new();
    let mut excluded = Vec::new();
    let mut warnings = Vec::new();
    for (subject_id, voters) in votes {
        let mut histogram: BTreeMap<usize, u64> = BTreeMap::new();
        let mut weighted: BTreeMap<usize, f64> = BTreeMap::new();
        let mut total_mass = 0.0;
        for &(annotator, label) in &voters {
            *histogram.entry(label).or_default() += 1;
            let w = weight_of(annotator);
            *weighted.entry(label).or_insert(0.0) += w;
            total_mass += w;
        }
        if total_mass <= 0.0 {
            warnings.push(format!("subject `{subject_id}` has no weighted votes"));
            excluded.push(subject_id.to_string());
            continue;
        }
        let (consensus_label, top_mass) = argmax_f64(&weighted);
        let (unweighted_label, _) = argmax_u64(&histogram);
        let consensus_fraction = top_mass / total_mass;
        results.push(AggregateResult {
            subject_id: subject_id.to_string(),
            histogram,
            weighted_histogram: weighted,
            consensus_label,
            unweighted_label,
            consensus_fraction,
            tier: tiers.tier_for(consensus_fraction),
        });
    }
    Ok(AggregationOutcome {
        results,
        excluded,
        warnings,
    })
}

fn argmax_f64(map: &BTreeMap<usize, f64>) -> (usize, f64) {
    let mut best = (usize::MAX, f64::NEG_INFINITY);
    for (&label, &mass) in map {
        if mass > best.1 {
            best = (label, mass);
        }
    }
    best
}

fn argmax_u64(map: &BTreeMap<usize, u64>) -> (usize, u64) {
    let mut best = (usize::MAX, 0u64);
    let mut first = true;
    for (&label, &count) in map {
        if first || count > best.1 {
            best = (label, count);
            first = false;
        }
    }
    best
}

/// Pooled confusion structure estimated from gold records.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionEstimate {
    pub k: usize,
    /// Row t is the estimated label distribution over subjects whose true
    /// class is t.
    pub matrix: Vec<Vec<f64>>,
    /// Gold records backing each row.
    pub row_samples: Vec<u64>,
    /// True classes with no gold records; their rows default to identity.
    pub unestimated_rows: Vec<usize>,
}

/// Estimate the pooled annotator confusion matrix from gold records.
///
/// The class universe is taken from the subject list. Errors when the log
/// has no gold records or a label falls outside the class range.
pub fn estimate_bias(log: &ClassificationLog, subjects: &[Subject]) -> Result<ConfusionEstimate> {
    let by_id: BTreeMap<&str, &Subject> = subjects.iter().map(|s| (s.id.as_str(), s)).collect();
    let k = subjects
        .iter()
        .map(|s| s.true_class + 1)
        .max()
        .ok_or_else(|| Error::validation("no subjects given"))?;
    let mut counts = vec![vec![0u64; k]; k];
    let mut total = 0u64;
    for r in &log.records {
        let subject = by_id.get(r.subject_id.as_str()).ok_or_else(|| {
            Error::validation(format!("log references unknown subject `{}`", r.subject_id))
        })?;
        if !subject.is_gold {
            continue;
        }
        if r.label >= k {
            return Err(Error::validation(format!(
                "label {} outside the {k}-class universe",
                r.label
            )));
        }
        counts[subject.true_class][r.label] += 1;
        total += 1;
    }
    if total == 0 {
        return Err(Error::validation(
            "no gold-subject records to estimate bias from",
        ));
    }
    let mut matrix = vec![vec![0.0f64; k]; k];
    let mut row_samples = vec![0u64; k];
    let mut unestimated_rows = Vec::new();
    for t in 0..k {
        let row_total: u64 = counts[t].iter().sum();
        row_samples[t] = row_total;
        if row_total == 0 {
            unestimated_rows.push(t);
            matrix[t][t] = 1.0;
        } else {
            for l in 0..k {
                matrix[t][l] = counts[t][l] as f64 / row_total as f64;
            }
        }
    }
    Ok(ConfusionEstimate {
        k,
        matrix,
        row_samples,
        unestimated_rows,
    })
}

/// Bias-corrected consensus results.
#[derive(Debug, Clone)]
pub struct CorrectionOutcome {
    pub results: Vec<AggregateResult>,
    /// Spectral condition number of the estimate's transpose.
    pub condition_number: f64,
    /// True when the estimate was too ill-conditioned to invert and results
    /// were passed through unchanged.
    pub fallback_identity: bool,
    pub warnings: Vec<String>,
}

/// Reweight each subject's label mass by the pseudo-inverse of the estimated
/// confusion transpose, recovering the implied true-class mass.
///
/// Estimates with a condition number beyond [`CONDITION_LIMIT`] are not
/// inverted; the input results are returned unchanged and flagged. Negative
/// corrected masses are clamped to zero; a subject whose whole corrected
/// mass vanishes keeps its uncorrected consensus, with a warning.
pub fn apply_correction(
    results: &[AggregateResult],
    estimate: &ConfusionEstimate,
    tiers: &TierThresholds,
) -> Result<CorrectionOutcome> {
    tiers.validate()?;
    let k = estimate.k;
    if estimate.matrix.len() != k || estimate.matrix.iter().any(|row| row.len() != k) {
        return Err(Error::validation("confusion estimate is not square"));
    }
    let transpose = DMatrix::from_fn(k, k, |r, c| estimate.matrix[c][r]);
    let svd = transpose.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let smin = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let condition_number = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !condition_number.is_finite() || condition_number > CONDITION_LIMIT {
        return Ok(CorrectionOutcome {
            results: results.to_vec(),
            condition_number,
            fallback_identity: true,
            warnings: vec![format!(
                "confusion estimate condition number {condition_number:.3e} exceeds {CONDITION_LIMIT:.0e}: \
                 correction skipped"
            )],
        });
    }
    let pinv = svd
        .pseudo_inverse(1e-12)
        .map_err(|e| Error::validation(format!("pseudo-inverse failed: {e}")))?;

    let mut corrected = Vec::with_capacity(results.len());
    let mut warnings = Vec::new();
    for r in results {
        if let Some(&bad) = r.weighted_histogram.keys().find(|&&l| l >= k) {
            return Err(Error::validation(format!(
                "label {bad} outside the {k}-class universe"
            )));
        }
        let observed = nalgebra::DVector::from_fn(k, |i, _| {
            r.weighted_histogram.get(&i).copied().unwrap_or(0.0)
        });
        let recovered = &pinv * observed;
        let mut masses: Vec<f64> = recovered.iter().map(|&v| v.max(0.0)).collect();
        let total: f64 = masses.iter().sum();
        if total <= 0.0 {
            warnings.push(format!(
                "subject `{}`: corrected mass vanished, keeping uncorrected consensus",
                r.subject_id
            ));
            corrected.push(r.clone());
            continue;
        }
        let mut best = 0usize;
        for (l, &m) in masses.iter().enumerate() {
            if m > masses[best] {
                best = l;
            }
        }
        let weighted_histogram: BTreeMap<usize, f64> = masses
            .drain(..)
            .enumerate()
            .filter(|&(_, m)| m > 0.0)
            .collect();
        let fraction = weighted_histogram[&best] / total;
        corrected.push(AggregateResult {
            subject_id: r.subject_id.clone(),
            histogram: r.histogram.clone(),
            weighted_histogram,
            consensus_label: best,
            unweighted_label: r.unweighted_label,
            consensus_fraction: fraction,
            tier: tiers.tier_for(fraction),
        });
    }
    Ok(CorrectionOutcome {
        results: corrected,
        condition_number,
        fallback_identity: false,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn subject(id: &str, true_class: usize, is_gold: bool) -> Subject {
        Subject {
            id: id.to_string(),
            true_class,
            is_gold,
        }
    }

    fn record(annotator: &str, subject: &str, label: usize, seq: u64) -> ClassificationRecord {
        ClassificationRecord {
            annotator_id: annotator.to_string(),
            subject_id: subject.to_string(),
            label,
            seq,
        }
    }

    fn log(records: Vec<ClassificationRecord>) -> ClassificationLog {
        ClassificationLog { records }
    }

    /// Fifteen gold subjects of class 0 plus two live ones.
    fn gate_world() -> Vec<Subject> {
        let mut subjects: Vec<Subject> =
            (0..15).map(|i| subject(&format!("g{i:02}"), 0, true)).collect();
        subjects.push(subject("l0", 1, false));
        subjects.push(subject("l1", 0, false));
        subjects
    }

    /// An annotator who gets `correct` of the 15 gold tasks right, then
    /// labels one live subject.
    fn gate_records(annotator: &str, correct: usize) -> Vec<ClassificationRecord> {
        let mut records: Vec<ClassificationRecord> = (0..15)
            .map(|i| {
                let label = if i < correct { 0 } else { 1 };
                record(annotator, &format!("g{i:02}"), label, i as u64)
            })
            .collect();
        records.push(record(annotator, "l0", 1, 15));
        records
    }

    #[test]
    fn gate_passes_at_the_threshold_and_fails_below() {
        let subjects = gate_world();
        let mut records = gate_records("pass11", 11);
        records.extend(gate_records("fail10", 10));
        let out = probation_filter(&log(records), &subjects, &ProbationPolicy::default()).unwrap();
        assert_eq!(out.entries.len(), 2);
        let fail = &out.entries[0];
        assert_eq!(fail.annotator_id, "fail10");
        assert_eq!((fail.gold_seen, fail.correct), (15, 10));
        assert_eq!(fail.verdict, Verdict::Fail);
        let pass = &out.entries[1];
        assert_eq!((pass.gold_seen, pass.correct), (15, 11));
        assert_eq!(pass.verdict, Verdict::Pass);
        // Only the passing annotator's live record survives; gold records
        // are consumed by the gate.
        assert_eq!(out.filtered.records.len(), 1);
        assert_eq!(out.filtered.records[0].annotator_id, "pass11");
        assert_eq!(out.filtered.records[0].subject_id, "l0");
        assert!(out.quarantined.records.is_empty());
        assert_eq!(out.verdict_counts(), (1, 1, 0));
    }

    #[test]
    fn gate_quarantines_half_finished_annotators() {
        let subjects = gate_world();
        let mut records: Vec<ClassificationRecord> = (0..7)
            .map(|i| record("newbie", &format!("g{i:02}"), 0, i as u64))
            .collect();
        records.push(record("newbie", "l1", 0, 7));
        let out = probation_filter(&log(records), &subjects, &ProbationPolicy::default()).unwrap();
        let entry = &out.entries[0];
        assert_eq!((entry.gold_seen, entry.correct), (7, 7));
        assert_eq!(entry.verdict, Verdict::Provisional);
        assert!(out.filtered.records.is_empty());
        assert_eq!(out.quarantined.records.len(), 1);
        assert_eq!(out.quarantined.records[0].subject_id, "l1");
    }

    #[test]
    fn gate_scores_only_the_first_window_gold_tasks() {
        // 15 correct gold answers, then 5 more wrong ones beyond the window:
        // still a pass.
        let mut subjects = gate_world();
        for i in 15..20 {
            subjects.push(subject(&format!("g{i:02}"), 0, true));
        }
        let mut records: Vec<ClassificationRecord> = (0..15)
            .map(|i| record("late_slump", &format!("g{i:02}"), 0, i as u64))
            .collect();
        for i in 15..20 {
            records.push(record("late_slump", &format!("g{i:02}"), 1, i as u64));
        }
        let out = probation_filter(&log(records), &subjects, &ProbationPolicy::default()).unwrap();
        let entry = &out.entries[0];
        assert_eq!((entry.gold_seen, entry.correct), (15, 15));
        assert_eq!(entry.verdict, Verdict::Pass);
    }

    #[test]
    fn gate_without_gold_passes_everything_with_a_warning() {
        let subjects = vec![subject("l0", 0, false), subject("l1", 1, false)];
        let records = vec![record("a", "l0", 0, 0), record("b", "l1", 1, 0)];
        let out =
            probation_filter(&log(records.clone()), &subjects, &ProbationPolicy::default())
                .unwrap();
        assert!(out.entries.iter().all(|e| e.verdict == Verdict::Provisional));
        assert_eq!(out.filtered.records, records);
        assert!(!out.warnings.is_empty());
    }

    #[test]
    fn gate_with_zero_window_is_disabled() {
        let subjects = vec![subject("l0", 0, false)];
        let records = vec![record("a", "l0", 0, 0)];
        let policy = ProbationPolicy {
            window: 0,
            pass_threshold: 0,
        };
        let out = probation_filter(&log(records.clone()), &subjects, &policy).unwrap();
        assert!(out.entries.iter().all(|e| e.verdict == Verdict::Pass));
        assert_eq!(out.filtered.records, records);
    }

    #[test]
    fn gate_rejects_inconsistent_policy_and_unknown_subjects() {
        let policy = ProbationPolicy {
            window: 10,
            pass_threshold: 11,
        };
        assert!(probation_filter(&log(vec![]), &[], &policy).is_err());
        let out = probation_filter(
            &log(vec![record("a", "ghost", 0, 0)]),
            &[],
            &ProbationPolicy::default(),
        );
        assert!(out.is_err());
    }

    #[test]
    fn verdicts_update_population_status_and_weight() {
        use crate::crowd::ConfusionMatrix;
        let subjects = gate_world();
        let mut records = gate_records("pass11", 11);
        records.extend(gate_records("fail10", 10));
        let out = probation_filter(&log(records), &subjects, &ProbationPolicy::default()).unwrap();
        let mut annotators = vec![
            Annotator {
                id: "pass11".to_string(),
                confusion: ConfusionMatrix::identity(2).unwrap(),
                status: AnnotatorStatus::Provisional,
                weight: 1.0,
            },
            Annotator {
                id: "fail10".to_string(),
                confusion: ConfusionMatrix::identity(2).unwrap(),
                status: AnnotatorStatus::Provisional,
                weight: 1.0,
            },
        ];
        apply_verdicts(&mut annotators, &out);
        assert_eq!(annotators[0].status, AnnotatorStatus::Active);
        assert_eq!(annotators[0].weight, 1.0);
        assert_eq!(annotators[1].status, AnnotatorStatus::Filtered);
        assert_eq!(annotators[1].weight, 0.0);
    }

    #[test]
    fn weights_match_hand_computation() {
        // Two subjects, three annotators; the third disagrees once.
        let records = vec![
            record("a1", "s1", 0, 0),
            record("a2", "s1", 0, 0),
            record("a3", "s1", 1, 0),
            record("a1", "s2", 0, 1),
            record("a2", "s2", 0, 1),
            record("a3", "s2", 0, 1),
        ];
        let table = user_weights(&log(records), WeightMode::Literal).unwrap();
        assert_abs_diff_eq!(table.weights["a1"], 1.125, epsilon = 1e-12);
        assert_abs_diff_eq!(table.weights["a2"], 1.125, epsilon = 1e-12);
        assert_abs_diff_eq!(table.weights["a3"], 0.75, epsilon = 1e-12);
        let mean: f64 = table.weights.values().sum::<f64>() / 3.0;
        assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn weight_modes_differ_when_subject_counts_differ() {
        // a1 spreads its work over three subjects, the pair votes once.
        let records = vec![
            record("a1", "s1", 0, 0),
            record("a2", "s1", 0, 0),
            record("a3", "s1", 0, 0),
            record("a1", "s2", 0, 1),
            record("a1", "s3", 1, 2),
        ];
        let literal = user_weights(&log(records.clone()), WeightMode::Literal).unwrap();
        let fraction = user_weights(&log(records), WeightMode::Fraction).unwrap();
        // Literal mode: a1 raw = 2/3, a2 = a3 = 2/1. Fraction mode: everyone
        // scored 1 on the shared subject, so weights are uniform.
        assert_abs_diff_eq!(
            literal.weights["a1"] / literal.weights["a2"],
            (2.0 / 3.0) / 2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(fraction.weights["a1"], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fraction.weights["a2"], 1.0, epsilon = 1e-12);
    }

    #[test]
    fn no_agreement_falls_back_to_uniform_weights() {
        let records = vec![
            record("a1", "s1", 0, 0),
            record("a2", "s2", 1, 0),
        ];
        let table = user_weights(&log(records), WeightMode::Literal).unwrap();
        assert!(!table.warnings.is_empty());
        assert_eq!(table.weights["a1"], 1.0);
        assert_eq!(table.weights["a2"], 1.0);
    }

    #[test]
    fn duplicate_votes_are_rejected() {
        let records = vec![record("a1", "s1", 0, 0), record("a1", "s1", 1, 1)];
        assert!(user_weights(&log(records.clone()), WeightMode::Literal).is_err());
        assert!(aggregate(&log(records), None, &TierThresholds::default()).is_err());
    }

    fn bulk_votes(subject_id: &str, label_counts: &[(usize, usize)]) -> Vec<ClassificationRecord> {
        let mut records = Vec::new();
        let mut voter = 0;
        for &(label, count) in label_counts {
            for _ in 0..count {
                records.push(record(&format!("v{voter:03}"), subject_id, label, 0));
                voter += 1;
            }
        }
        records
    }

    #[test]
    fn consensus_tiers_follow_the_share() {
        let mut records = bulk_votes("clean", &[(0, 82), (1, 18)]);
        records.extend(bulk_votes("superclean", &[(0, 96), (1, 4)]));
        records.extend(bulk_votes("noisy", &[(0, 19), (1, 19)]));
        let out = aggregate(&log(records), None, &TierThresholds::default()).unwrap();
        let by_id: BTreeMap<&str, &AggregateResult> =
            out.results.iter().map(|r| (r.subject_id.as_str(), r)).collect();
        let clean = by_id["clean"];
        assert_eq!(clean.consensus_label, 0);
        assert_abs_diff_eq!(clean.consensus_fraction, 0.82, epsilon = 1e-12);
        assert_eq!(clean.tier, Tier::Clean);
        let superclean = by_id["superclean"];
        assert_eq!(superclean.tier, Tier::Superclean);
        assert_abs_diff_eq!(superclean.consensus_fraction, 0.96, epsilon = 1e-12);
        // Exact tie: smallest label wins, share 0.5, no tier.
        let noisy = by_id["noisy"];
        assert_eq!(noisy.consensus_label, 0);
        assert_abs_diff_eq!(noisy.consensus_fraction, 0.5, epsilon = 1e-12);
        assert_eq!(noisy.tier, Tier::None);
    }

    #[test]
    fn tier_boundaries_are_inclusive() {
        let tiers = TierThresholds::default();
        assert_eq!(tiers.tier_for(0.80), Tier::Clean);
        assert_eq!(tiers.tier_for(0.95), Tier::Superclean);
        assert_eq!(tiers.tier_for(0.7999), Tier::None);
        assert_eq!(tiers.tier_for(1.0), Tier::Superclean);
    }

    #[test]
    fn zero_weight_subjects_are_excluded() {
        let records = vec![record("a1", "s1", 0, 0), record("a2", "s2", 0, 0)];
        let mut table = WeightTable::uniform(vec!["a1".to_string()]);
        table.weights.insert("a2".to_string(), 0.0);
        let out = aggregate(&log(records), Some(&table), &TierThresholds::default()).unwrap();
        assert_eq!(out.results.len(), 1);
        assert_eq!(out.results[0].subject_id, "s1");
        assert_eq!(out.excluded, vec!["s2".to_string()]);
        assert!(!out.warnings.is_empty());
    }

    #[test]
    fn missing_table_entries_count_for_zero_mass() {
        let records = vec![
            record("known", "s1", 0, 0),
            record("unknown", "s1", 1, 0),
        ];
        let table = WeightTable::uniform(vec!["known".to_string()]);
        let out = aggregate(&log(records), Some(&table), &TierThresholds::default()).unwrap();
        let r = &out.results[0];
        assert_eq!(r.consensus_label, 0);
        assert_abs_diff_eq!(r.consensus_fraction, 1.0, epsilon = 1e-12);
        // The raw histogram still records both votes.
        assert_eq!(r.histogram[&1], 1);
    }

    #[test]
    fn weighted_majority_can_overturn_the_raw_count() {
        let records = vec![
            record("expert", "s1", 0, 0),
            record("novice1", "s1", 1, 0),
            record("novice2", "s1", 1, 0),
        ];
        let mut table = WeightTable::uniform(vec![]);
        table.weights.insert("expert".to_string(), 5.0);
        table.weights.insert("novice1".to_string(), 0.5);
        table.weights.insert("novice2".to_string(), 0.5);
        let out = aggregate(&log(records), Some(&table), &TierThresholds::default()).unwrap();
        let r = &out.results[0];
        assert_eq!(r.consensus_label, 0);
        assert_eq!(r.unweighted_label, 1);
    }

    #[test]
    fn bias_estimate_pools_gold_records() {
        let subjects = vec![
            subject("g0", 0, true),
            subject("g1", 1, true),
            subject("l0", 0, false),
        ];
        let records = vec![
            record("a", "g0", 0, 0),
            record("b", "g0", 1, 0),
            record("a", "g1", 1, 1),
            record("b", "g1", 1, 1),
            // Live records must not contribute.
            record("a", "l0", 1, 2),
        ];
        let est = estimate_bias(&log(records), &subjects).unwrap();
        assert_eq!(est.k, 2);
        assert_eq!(est.row_samples, vec![2, 2]);
        assert_abs_diff_eq!(est.matrix[0][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(est.matrix[1][1], 1.0, epsilon = 1e-12);
        assert!(est.unestimated_rows.is_empty());
    }

    #[test]
    fn bias_estimate_flags_unseen_classes_and_empty_gold() {
        let subjects = vec![subject("g0", 0, true), subject("l0", 1, false)];
        let records = vec![record("a", "g0", 0, 0)];
        let est = estimate_bias(&log(records), &subjects).unwrap();
        assert_eq!(est.unestimated_rows, vec![1]);
        assert_abs_diff_eq!(est.matrix[1][1], 1.0, epsilon = 1e-12);
        let no_gold = estimate_bias(&log(vec![record("a", "l0", 0, 0)]), &subjects);
        assert!(no_gold.is_err());
    }

    fn result_with_masses(subject_id: &str, masses: &[(usize, f64)]) -> AggregateResult {
        let weighted: BTreeMap<usize, f64> = masses.iter().copied().collect();
        let total: f64 = weighted.values().sum();
        let (label, top) = argmax_f64(&weighted);
        AggregateResult {
            subject_id: subject_id.to_string(),
            histogram: masses.iter().map(|&(l, m)| (l, m as u64)).collect(),
            weighted_histogram: weighted,
            consensus_label: label,
            unweighted_label: label,
            consensus_fraction: top / total,
            tier: TierThresholds::default().tier_for(top / total),
        }
    }

    #[test]
    fn correction_recovers_the_true_mass_exactly() {
        // One-directional leak: 30% of class 0 votes land on label 1. With
        // true mass (100, 50) the observed mass is (70, 80); the corrected
        // result should recover the original and flip the consensus back.
        let estimate = ConfusionEstimate {
            k: 2,
            matrix: vec![vec![0.7, 0.3], vec![0.0, 1.0]],
            row_samples: vec![100, 100],
            unestimated_rows: vec![],
        };
        let observed = result_with_masses("s", &[(0, 70.0), (1, 80.0)]);
        assert_eq!(observed.consensus_label, 1);
        let out =
            apply_correction(&[observed], &estimate, &TierThresholds::default()).unwrap();
        assert!(!out.fallback_identity);
        let r = &out.results[0];
        assert_abs_diff_eq!(r.weighted_histogram[&0], 100.0, epsilon = 1e-9);
        assert_abs_diff_eq!(r.weighted_histogram[&1], 50.0, epsilon = 1e-9);
        assert_eq!(r.consensus_label, 0);
        assert_abs_diff_eq!(r.consensus_fraction, 100.0 / 150.0, epsilon = 1e-9);
    }

    #[test]
    fn identity_estimate_is_a_no_op() {
        let estimate = ConfusionEstimate {
            k: 2,
            matrix: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            row_samples: vec![10, 10],
            unestimated_rows: vec![],
        };
        let input = result_with_masses("s", &[(0, 82.0), (1, 18.0)]);
        let out = apply_correction(std::slice::from_ref(&input), &estimate, &TierThresholds::default())
            .unwrap();
        assert_abs_diff_eq!(out.condition_number, 1.0, epsilon = 1e-9);
        let r = &out.results[0];
        assert_eq!(r.consensus_label, input.consensus_label);
        assert_abs_diff_eq!(
            r.consensus_fraction,
            input.consensus_fraction,
            epsilon = 1e-9
        );
        assert_eq!(r.tier, input.tier);
    }

    #[test]
    fn singular_estimate_falls_back_to_identity() {
        let estimate = ConfusionEstimate {
            k: 2,
            matrix: vec![vec![0.5, 0.5], vec![0.5, 0.5]],
            row_samples: vec![10, 10],
            unestimated_rows: vec![],
        };
        let input = result_with_masses("s", &[(0, 82.0), (1, 18.0)]);
        let out = apply_correction(std::slice::from_ref(&input), &estimate, &TierThresholds::default())
            .unwrap();
        assert!(out.fallback_identity);
        assert!(!out.warnings.is_empty());
        assert_eq!(out.results[0].consensus_label, input.consensus_label);
    }

    proptest! {
        #[test]
        fn weights_average_to_one(
            assignments in proptest::collection::vec(
                (0usize..5, 0usize..6, 0usize..3), 2..40),
        ) {
            let mut seen = BTreeSet::new();
            let records: Vec<ClassificationRecord> = assignments
                .into_iter()
                .filter(|&(a, s, _)| seen.insert((a, s)))
                .map(|(a, s, l)| record(&format!("a{a}"), &format!("s{s}"), l, s as u64))
                .collect();
            prop_assume!(!records.is_empty());
            for mode in [WeightMode::Literal, WeightMode::Fraction] {
                let table = user_weights(&log(records.clone()), mode).unwrap();
                let n = table.weights.len() as f64;
                let mean = table.weights.values().sum::<f64>() / n;
                prop_assert!((mean - 1.0).abs() < 1e-9, "mode {mode}: mean {mean}");
                prop_assert!(table.weights.values().all(|&w| w >= 0.0));
            }
        }

        #[test]
        fn uniform_weights_agree_with_unweighted_consensus(
            assignments in proptest::collection::vec(
                (0usize..6, 0usize..5, 0usize..3), 2..40),
        ) {
            let mut seen = BTreeSet::new();
            let records: Vec<ClassificationRecord> = assignments
                .into_iter()
                .filter(|&(a, s, _)| seen.insert((a, s)))
                .map(|(a, s, l)| record(&format!("a{a}"), &format!("s{s}"), l, s as u64))
                .collect();
            prop_assume!(!records.is_empty());
            let ids: BTreeSet<String> =
                records.iter().map(|r| r.annotator_id.clone()).collect();
            let table = WeightTable::uniform(ids);
            let tiers = TierThresholds::default();
            let weighted = aggregate(&log(records.clone()), Some(&table), &tiers).unwrap();
            let unweighted = aggregate(&log(records), None, &tiers).unwrap();
            for (w, u) in weighted.results.iter().zip(&unweighted.results) {
                prop_assert_eq!(w.consensus_label, u.consensus_label);
                prop_assert_eq!(w.consensus_label, w.unweighted_label);
                prop_assert!((w.consensus_fraction - u.consensus_fraction).abs() < 1e-12);
            }
        }

        #[test]
        fn tiers_are_monotone_in_share(f1 in 0.0f64..=1.0, f2 in 0.0f64..=1.0) {
            let tiers = TierThresholds::default();
            let (lo, hi) = if f1 <= f2 { (f1, f2) } else { (f2, f1) };
            prop_assert!(tiers.tier_for(lo) <= tiers.tier_for(hi));
        }
    }
}
