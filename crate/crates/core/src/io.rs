//! File formats: JSON for scenarios, possible-world models, and evidence
//! models; CSV for classification logs, subject rosters, weight tables,
//! consensus tables, catalog series, publication records, and plain numeric
//! samples. Read errors carry the offending path.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use crate::crowd::{ClassificationLog, ClassificationRecord, Scenario, Subject};
use crate::epistemic::{KripkeModel, WorldSpec};
use crate::error::{Error, Result};
use crate::quality::{AggregateResult, WeightTable};
use crate::scimetrics::{CatalogEdition, CatalogSeries, Method, PublicationRecord};
use crate::veritistic::EvidenceModel;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?)
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut reader = csv::Reader::from_reader(open(path)?);
    reader
        .deserialize()
        .collect::<std::result::Result<Vec<T>, _>>()
        .map_err(|e| Error::parse(format!("{}: {e}", path.display())))
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut writer = csv::Writer::from_writer(create(path)?);
    for row in rows {
        writer.serialize(row)?;
    }
    writer.flush()?;
    Ok(())
}

/// Load and validate a scenario description.
pub fn read_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let scenario: Scenario = read_json(path.as_ref())?;
    scenario.validate()?;
    Ok(scenario)
}

pub fn write_scenario(path: impl AsRef<Path>, scenario: &Scenario) -> Result<()> {
    write_json(path.as_ref(), scenario)
}

/// Columns: annotator_id, subject_id, label, seq.
pub fn read_log(path: impl AsRef<Path>) -> Result<ClassificationLog> {
    Ok(ClassificationLog {
        records: read_csv::<ClassificationRecord>(path.as_ref())?,
    })
}

pub fn write_log(path: impl AsRef<Path>, log: &ClassificationLog) -> Result<()> {
    write_csv(path.as_ref(), log.records.iter())
}

/// Columns: id, true_class, is_gold.
pub fn read_subjects(path: impl AsRef<Path>) -> Result<Vec<Subject>> {
    read_csv(path.as_ref())
}

pub fn write_subjects(path: impl AsRef<Path>, subjects: &[Subject]) -> Result<()> {
    write_csv(path.as_ref(), subjects)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeightRow {
    annotator_id: String,
    weight: f64,
}

/// Columns: annotator_id, weight.
pub fn read_weights(path: impl AsRef<Path>) -> Result<BTreeMap<String, f64>> {
    let rows: Vec<WeightRow> = read_csv(path.as_ref())?;
    let mut weights = BTreeMap::new();
    for row in rows {
        if weights.insert(row.annotator_id.clone(), row.weight).is_some() {
            return Err(Error::parse(format!(
                "{}: annotator `{}` listed twice",
                path.as_ref().display(),
                row.annotator_id
            )));
        }
    }
    Ok(weights)
}

pub fn write_weights(path: impl AsRef<Path>, table: &WeightTable) -> Result<()> {
    write_csv(
        path.as_ref(),
        table.weights.iter().map(|(id, &weight)| WeightRow {
            annotator_id: id.clone(),
            weight,
        }),
    )
}

/// One row of a persisted consensus table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsensusRow {
    pub subject_id: String,
    pub consensus_label: usize,
    pub consensus_fraction: f64,
    pub tier: String,
    pub unweighted_label: usize,
}

impl From<&AggregateResult> for ConsensusRow {
    fn from(r: &AggregateResult) -> Self {
        ConsensusRow {
            subject_id: r.subject_id.clone(),
            consensus_label: r.consensus_label,
            consensus_fraction: r.consensus_fraction,
            tier: r.tier.to_string(),
            unweighted_label: r.unweighted_label,
        }
    }
}

/// Columns: subject_id, consensus_label, consensus_fraction, tier,
/// unweighted_label.
pub fn read_consensus(path: impl AsRef<Path>) -> Result<Vec<ConsensusRow>> {
    read_csv(path.as_ref())
}

pub fn write_consensus(path: impl AsRef<Path>, results: &[AggregateResult]) -> Result<()> {
    write_csv(path.as_ref(), results.iter().map(ConsensusRow::from))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CatalogRow {
    label: String,
    method: Method,
    observations: u64,
}

/// Columns: label, method, observations. Consecutive rows sharing a label
/// form one chronologically ordered series; a label reappearing after a
/// different one is rejected as ambiguous.
pub fn read_catalog(path: impl AsRef<Path>) -> Result<Vec<CatalogSeries>> {
    let rows: Vec<CatalogRow> = read_csv(path.as_ref())?;
    let mut series: Vec<CatalogSeries> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    for row in rows {
        match series.last_mut() {
            Some(current) if current.label == row.label => {
                current.editions.push(CatalogEdition {
                    method: row.method,
                    observations: row.observations,
                });
            }
            _ => {
                if !seen.insert(row.label.clone()) {
                    return Err(Error::parse(format!(
                        "{}: series `{}` appears in two separate blocks",
                        path.as_ref().display(),
                        row.label
                    )));
                }
                series.push(CatalogSeries {
                    label: row.label,
                    editions: vec![CatalogEdition {
                        method: row.method,
                        observations: row.observations,
                    }],
                });
            }
        }
    }
    for s in &series {
        s.validate()?;
    }
    Ok(series)
}

pub fn write_catalog(path: impl AsRef<Path>, series: &[CatalogSeries]) -> Result<()> {
    write_csv(
        path.as_ref(),
        series.iter().flat_map(|s| {
            s.editions.iter().map(|e| CatalogRow {
                label: s.label.clone(),
                method: e.method,
                observations: e.observations,
            })
        }),
    )
}

/// Columns: id, year, group, journal, citations.
pub fn read_publications(path: impl AsRef<Path>) -> Result<Vec<PublicationRecord>> {
    read_csv(path.as_ref())
}

/// A single column of numbers, one per line. Blank lines and `#` comments
/// are skipped; a non-numeric first line is treated as a header.
pub fn read_samples(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut values = Vec::new();
    let mut first_data_line = true;
    for (lineno, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        match trimmed.parse::<f64>() {
            Ok(v) => values.push(v),
            Err(_) if first_data_line => {}
            Err(_) => {
                return Err(Error::parse(format!(
                    "{}: line {}: `{trimmed}` is not a number",
                    path.display(),
                    lineno + 1
                )));
            }
        }
        first_data_line = false;
    }
    if values.is_empty() {
        return Err(Error::parse(format!(
            "{}: no numeric values",
            path.display()
        )));
    }
    Ok(values)
}

/// On-disk form of a possible-worlds model.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KripkeModelFile {
    pub worlds: Vec<WorldSpec>,
    /// Accessibility edges per agent, as `[from, to]` world-name pairs.
    pub agents: BTreeMap<String, Vec<(String, String)>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub atoms: Option<BTreeSet<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actual_world: Option<String>,
}

pub fn read_kripke_model(path: impl AsRef<Path>) -> Result<KripkeModel> {
    let file: KripkeModelFile = read_json(path.as_ref())?;
    KripkeModel::new(file.worlds, file.agents, file.atoms, file.actual_world)
}

/// Load and validate an evidence model.
pub fn read_evidence_model(path: impl AsRef<Path>) -> Result<EvidenceModel> {
    let model: EvidenceModel = read_json(path.as_ref())?;
    model.validate()?;
    Ok(model)
}
