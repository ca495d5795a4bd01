//! Synthetic annotator populations and the classification logs they
//! generate.
//!
//! A [`Scenario`] describes a labeling campaign declaratively: a class
//! universe, a subject pool with a gold-standard prefix, and a population
//! drawn from a mixture of skill groups. [`run_scenario`] turns that into a
//! concrete log. Every random draw is addressed by purpose (a dedicated
//! stream id) and position, so a scenario with a fixed seed reproduces the
//! same log record for record regardless of iteration order.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quality::{ProbationPolicy, TierThresholds};

const STREAM_SUBJECT_CLASSES: u64 = 0;
const STREAM_LIVE_ASSIGNMENT: u64 = 1;
const STREAM_SKILL_SHUFFLE: u64 = 2;
const STREAM_KIND_GOLD_PANEL: u64 = 1 << 40;
const STREAM_KIND_LABELS: u64 = 2 << 40;

fn substream(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Row-stochastic K x K matrix; row `t` is the label distribution an
/// annotator produces for a subject whose true class is `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct ConfusionMatrix {
    k: usize,
    rows: Vec<f64>,
}

impl ConfusionMatrix {
    /// Perfect annotator: every label matches the true class.
    pub fn identity(k: usize) -> Result<Self> {
        Self::check_k(k)?;
        let mut rows = vec![0.0; k * k];
        for t in 0..k {
            rows[t * k + t] = 1.0;
        }
        Ok(ConfusionMatrix { k, rows })
    }

    /// Probability `accuracy` on the diagonal, remaining mass spread evenly
    /// over the other labels.
    pub fn from_accuracy(k: usize, accuracy: f64) -> Result<Self> {
        Self::check_k(k)?;
        if !(0.0..=1.0).contains(&accuracy) {
            return Err(Error::validation(format!(
                "accuracy must be in [0, 1], got {accuracy}"
            )));
        }
        let off = (1.0 - accuracy) / (k - 1) as f64;
        let mut rows = vec![off; k * k];
        for t in 0..k {
            rows[t * k + t] = accuracy;
        }
        Ok(ConfusionMatrix { k, rows })
    }

    /// Validate an explicit matrix: square, at least two classes, entries
    /// finite and non-negative, rows summing to 1 within 1e-9.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let k = rows.len();
        Self::check_k(k)?;
        let mut flat = Vec::with_capacity(k * k);
        for (t, row) in rows.iter().enumerate() {
            if row.len() != k {
                return Err(Error::validation(format!(
                    "confusion row {t} has {} entries, expected {k}",
                    row.len()
                )));
            }
            let mut sum = 0.0;
            for &p in row {
                if !p.is_finite() || p < 0.0 {
                    return Err(Error::validation(format!(
                        "confusion row {t} has invalid entry {p}"
                    )));
                }
                sum += p;
            }
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::validation(format!(
                    "confusion row {t} sums to {sum}, expected 1"
                )));
            }
            flat.extend_from_slice(row);
        }
        Ok(ConfusionMatrix { k, rows: flat })
    }

    fn check_k(k: usize) -> Result<()> {
        if k < 2 {
            return Err(Error::validation(format!(
                "a confusion matrix needs at least 2 classes, got {k}"
            )));
        }
        Ok(())
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn row(&self, true_class: usize) -> &[f64] {
        &self.rows[true_class * self.k..(true_class + 1) * self.k]
    }

    /// Draw one label for a subject of the given true class.
    pub fn sample_label<R: Rng>(&self, true_class: usize, rng: &mut R) -> usize {
        let row = self.row(true_class);
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        for (label, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return label;
            }
        }
        self.k - 1
    }
}

impl TryFrom<Vec<Vec<f64>>> for ConfusionMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        ConfusionMatrix::from_rows(rows)
    }
}

impl From<ConfusionMatrix> for Vec<Vec<f64>> {
    fn from(m: ConfusionMatrix) -> Self {
        (0..m.k).map(|t| m.row(t).to_vec()).collect()
    }
}

/// Lifecycle state of an annotator in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnnotatorStatus {
    /// Has not yet cleared the probation gate.
    Provisional,
    Active,
    /// Rejected by the gate; contributes nothing downstream.
    Filtered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotator {
    pub id: String,
    pub confusion: ConfusionMatrix,
    pub status: AnnotatorStatus,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub true_class: usize,
    pub is_gold: bool,
}

/// One labeling event. `seq` is the position in the annotator's personal
/// task sequence, starting at 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationRecord {
    pub annotator_id: String,
    pub subject_id: String,
    pub label: usize,
    pub seq: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassificationLog {
    pub records: Vec<ClassificationRecord>,
}

impl ClassificationLog {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// One component of the population mixture: a fraction of annotators with
/// either a symmetric accuracy or an explicit confusion matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SkillGroup {
    Accuracy { fraction: f64, accuracy: f64 },
    Confusion {
        fraction: f64,
        confusion: Vec<Vec<f64>>,
    },
}

impl SkillGroup {
    pub fn fraction(&self) -> f64 {
        match self {
            SkillGroup::Accuracy { fraction, .. } | SkillGroup::Confusion { fraction, .. } => {
                *fraction
            }
        }
    }

    fn confusion_for(&self, k: usize) -> Result<ConfusionMatrix> {
        match self {
            SkillGroup::Accuracy { accuracy, .. } => ConfusionMatrix::from_accuracy(k, *accuracy),
            SkillGroup::Confusion { confusion, .. } => {
                let m = ConfusionMatrix::from_rows(confusion.clone())?;
                if m.k() != k {
                    return Err(Error::config(format!(
                        "skill group confusion is {}x{} but the scenario has {k} classes",
                        m.k(),
                        m.k()
                    )));
                }
                Ok(m)
            }
        }
    }
}

/// Declarative description of a synthetic labeling campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub n_classes: usize,
    pub n_subjects: usize,
    /// Subjects with known answers; they fill the front of the subject pool
    /// and are served to every annotator before any live work.
    pub gold_count: usize,
    pub n_annotators: usize,
    pub skill_mixture: Vec<SkillGroup>,
    /// Distinct annotators assigned to each live subject.
    #[serde(default = "default_redundancy")]
    pub redundancy: usize,
    #[serde(default)]
    pub probation: ProbationPolicy,
    #[serde(default)]
    pub tiers: TierThresholds,
    pub seed: u64,
}

fn default_redundancy() -> usize {
    38
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        if self.n_classes < 2 {
            return Err(Error::config(format!(
                "need at least 2 classes, got {}",
                self.n_classes
            )));
        }
        if self.n_subjects == 0 {
            return Err(Error::config("need at least one subject"));
        }
        if self.gold_count > self.n_subjects {
            return Err(Error::config(format!(
                "gold count {} exceeds the subject pool {}",
                self.gold_count, self.n_subjects
            )));
        }
        if self.n_annotators == 0 {
            return Err(Error::config("need at least one annotator"));
        }
        if self.skill_mixture.is_empty() {
            return Err(Error::config("skill mixture is empty"));
        }
        let total: f64 = self.skill_mixture.iter().map(|g| g.fraction()).sum();
        if self.skill_mixture.iter().any(|g| g.fraction() < 0.0) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::config(format!(
                "skill mixture fractions must be non-negative and sum to 1, got {total}"
            )));
        }
        for g in &self.skill_mixture {
            g.confusion_for(self.n_classes)?;
        }
        if self.redundancy == 0 {
            return Err(Error::config("redundancy must be at least 1"));
        }
        if self.redundancy > self.n_annotators {
            return Err(Error::config(format!(
                "redundancy {} exceeds the population of {} annotators",
                self.redundancy, self.n_annotators
            )));
        }
        self.probation.validate()?;
        if self.probation.window > self.gold_count {
            return Err(Error::config(format!(
                "probation window {} exceeds the gold pool {}",
                self.probation.window, self.gold_count
            )));
        }
        self.tiers.validate()?;
        Ok(())
    }
}

/// Split `total` into integer counts proportional to `fractions` by largest
/// remainder; ties go to earlier groups.
fn apportion(fractions: &[f64], total: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = Vec::with_capacity(fractions.len());
    let mut remainders: Vec<(usize, f64)> = Vec::with_capacity(fractions.len());
    for (i, &f) in fractions.iter().enumerate() {
        let exact = f * total as f64;
        let floor = exact.floor();
        counts.push(floor as usize);
        remainders.push((i, exact - floor));
    }
    let assigned: usize = counts.iter().sum();
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for &(i, _) in remainders.iter().take(total - assigned) {
        counts[i] += 1;
    }
    counts
}

fn id_width(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(3)
}

/// Build the annotator population for a scenario: skill groups are sized by
/// largest remainder and assigned to ids by a seeded shuffle.
pub fn build_population(scenario: &Scenario) -> Result<Vec<Annotator>> {
    scenario.validate()?;
    let fractions: Vec<f64> = scenario.skill_mixture.iter().map(|g| g.fraction()).collect();
    let counts = apportion(&fractions, scenario.n_annotators);
    let mut group_of: Vec<usize> = counts
        .iter()
        .enumerate()
        .flat_map(|(g, &c)| std::iter::repeat_n(g, c))
        .collect();
    let mut rng = substream(scenario.seed, STREAM_SKILL_SHUFFLE);
    group_of.shuffle(&mut rng);

    let confusions: Vec<ConfusionMatrix> = scenario
        .skill_mixture
        .iter()
        .map(|g| g.confusion_for(scenario.n_classes))
        .collect::<Result<_>>()?;
    let width = id_width(scenario.n_annotators);
    Ok(group_of
        .into_iter()
        .enumerate()
        .map(|(i, g)| Annotator {
            id: format!("a{i:0width$}"),
            confusion: confusions[g].clone(),
            status: AnnotatorStatus::Provisional,
            weight: 1.0,
        })
        .collect())
}

/// Draw one label from an annotator for a subject.
pub fn simulate_classification<R: Rng>(
    annotator: &Annotator,
    subject: &Subject,
    rng: &mut R,
) -> Result<usize> {
    if subject.true_class >= annotator.confusion.k() {
        return Err(Error::validation(format!(
            "subject `{}` has class {} but the annotator distinguishes {}",
            subject.id,
            subject.true_class,
            annotator.confusion.k()
        )));
    }
    Ok(annotator.confusion.sample_label(subject.true_class, rng))
}

/// Everything a scenario run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutput {
    pub annotators: Vec<Annotator>,
    pub subjects: Vec<Subject>,
    /// Sorted by annotator id, then task sequence.
    pub log: ClassificationLog,
}

/// Run a scenario end to end.
///
/// Gold subjects occupy the front of the pool and every annotator labels a
/// personal sample of `probation.window` of them first. Each live subject is
/// then assigned to `redundancy` distinct annotators. Label draws are
/// addressed by (annotator, task sequence), so any one record can be
/// regenerated without replaying the rest.
pub fn run_scenario(scenario: &Scenario) -> Result<SimulationOutput> {
    scenario.validate()?;
    let annotators = build_population(scenario)?;

    let mut class_rng = substream(scenario.seed, STREAM_SUBJECT_CLASSES);
    let width = id_width(scenario.n_subjects);
    let subjects: Vec<Subject> = (0..scenario.n_subjects)
        .map(|i| Subject {
            id: format!("s{i:0width$}"),
            true_class: class_rng.gen_range(0..scenario.n_classes),
            is_gold: i < scenario.gold_count,
        })
        .collect();

    let label_rng = |annotator_idx: usize, seq: u64| -> ChaCha12Rng {
        let mut rng = substream(scenario.seed, STREAM_KIND_LABELS | annotator_idx as u64);
        rng.set_word_pos(seq as u128 * 8);
        rng
    };

    let mut records = Vec::new();
    for (ai, annotator) in annotators.iter().enumerate() {
        let mut panel_rng = substream(scenario.seed, STREAM_KIND_GOLD_PANEL | ai as u64);
        let panel =
            rand::seq::index::sample(&mut panel_rng, scenario.gold_count, scenario.probation.window);
        for (seq, gi) in panel.into_iter().enumerate() {
            let subject = &subjects[gi];
            let mut rng = label_rng(ai, seq as u64);
            let label = simulate_classification(annotator, subject, &mut rng)?;
            records.push(ClassificationRecord {
                annotator_id: annotator.id.clone(),
                subject_id: subject.id.clone(),
                label,
                seq: seq as u64,
            });
        }
    }

    let mut assign_rng = substream(scenario.seed, STREAM_LIVE_ASSIGNMENT);
    let mut next_seq: Vec<u64> = vec![scenario.probation.window as u64; annotators.len()];
    for subject in subjects.iter().skip(scenario.gold_count) {
        let mut chosen =
            rand::seq::index::sample(&mut assign_rng, annotators.len(), scenario.redundancy)
                .into_vec();
        chosen.sort_unstable();
        for ai in chosen {
            let seq = next_seq[ai];
            next_seq[ai] += 1;
            let mut rng = label_rng(ai, seq);
            let label = simulate_classification(&annotators[ai], subject, &mut rng)?;
            records.push(ClassificationRecord {
                annotator_id: annotators[ai].id.clone(),
                subject_id: subject.id.clone(),
                label,
                seq,
            });
        }
    }

    records.sort_by(|a, b| {
        a.annotator_id
            .cmp(&b.annotator_id)
            .then(a.seq.cmp(&b.seq))
    });
    Ok(SimulationOutput {
        annotators,
        subjects,
        log: ClassificationLog { records },
    })
}
