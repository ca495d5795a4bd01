//! Catalog growth and publication metrics: percent increases across catalog
//! editions grouped by collection method, citation rates, midrank citation
//! percentiles against a reference cohort, h-index, and impact factor.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// How a catalog edition was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Traditional,
    Crowdsourcing,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Traditional => write!(f, "traditional"),
            Method::Crowdsourcing => write!(f, "crowdsourcing"),
        }
    }
}

/// One edition of a catalog: how it was collected and how many objects it
/// holds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CatalogEdition {
    pub method: Method,
    pub observations: u64,
}

/// Chronologically ordered editions of one growing catalog.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CatalogSeries {
    pub label: String,
    pub editions: Vec<CatalogEdition>,
}

impl CatalogSeries {
    pub fn validate(&self) -> Result<()> {
        if self.editions.is_empty() {
            return Err(Error::validation(format!(
                "catalog series `{}` has no editions",
                self.label
            )));
        }
        if let Some(bad) = self.editions.iter().position(|e| e.observations == 0) {
            return Err(Error::validation(format!(
                "catalog series `{}` edition {bad} has a zero object count",
                self.label
            )));
        }
        Ok(())
    }
}

/// Percent growth of each edition over its predecessor, full precision, in
/// edition order. A single-edition series yields an empty list.
pub fn percent_increases(series: &CatalogSeries) -> Result<Vec<f64>> {
    series.validate()?;
    Ok(series
        .editions
        .windows(2)
        .map(|w| 100.0 * (w[1].observations as f64 - w[0].observations as f64) / w[0].observations as f64)
        .collect())
}

/// Round to two decimals, half away from zero. Display convention for
/// percent values; computations keep full precision.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Mean and median of one method's pooled increases.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MethodSummary {
    pub count: usize,
    pub mean: f64,
    pub median: f64,
}

/// Per-method summary of growth across a set of catalog series. An increase
/// is attributed to the method of the later of the two editions it compares.
#[derive(Debug, Clone, Serialize, Default)]
pub struct GroupSummary {
    pub traditional: Option<MethodSummary>,
    pub crowdsourcing: Option<MethodSummary>,
    pub warnings: Vec<String>,
}

/// Pool the percent increases of many series and summarize them per method.
pub fn group_increase_summary(series: &[CatalogSeries]) -> Result<GroupSummary> {
    let mut traditional = Vec::new();
    let mut crowdsourcing = Vec::new();
    let mut warnings = Vec::new();
    for s in series {
        let increases = percent_increases(s)?;
        if increases.is_empty() {
            warnings.push(format!(
                "series `{}` has a single edition, no growth to attribute",
                s.label
            ));
        }
        for (i, &v) in increases.iter().enumerate() {
            match s.editions[i + 1].method {
                Method::Traditional => traditional.push(v),
                Method::Crowdsourcing => crowdsourcing.push(v),
            }
        }
    }
    for (name, values) in [
        ("traditional", &traditional),
        ("crowdsourcing", &crowdsourcing),
    ] {
        if values.is_empty() {
            warnings.push(format!("no {name} increases in the series set"));
        }
    }
    Ok(GroupSummary {
        traditional: summarize(&traditional),
        crowdsourcing: summarize(&crowdsourcing),
        warnings,
    })
}

fn summarize(values: &[f64]) -> Option<MethodSummary> {
    if values.is_empty() {
        return None;
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mid = sorted.len() / 2;
    let median = if sorted.len() % 2 == 1 {
        sorted[mid]
    } else {
        0.5 * (sorted[mid - 1] + sorted[mid])
    };
    Some(MethodSummary {
        count: values.len(),
        mean,
        median,
    })
}

/// One publication with its cohort year, authoring group, venue, and
/// accumulated citations.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: String,
    pub year: i32,
    pub group: String,
    pub journal: String,
    pub citations: u64,
}

/// Citation totals for one group of publications.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CitationStats {
    pub articles: usize,
    pub total_citations: u64,
    pub mean: f64,
}

/// Mean citations per article for a group, optionally restricted to one
/// publication year. Errors when no records match.
pub fn citations_per_article(
    records: &[PublicationRecord],
    group: &str,
    year: Option<i32>,
) -> Result<CitationStats> {
    let selected: Vec<&PublicationRecord> = records
        .iter()
        .filter(|r| r.group == group && year.is_none_or(|y| r.year == y))
        .collect();
    if selected.is_empty() {
        let scope = match year {
            Some(y) => format!("group `{group}` in {y}"),
            None => format!("group `{group}`"),
        };
        return Err(Error::validation(format!("no records match {scope}")));
    }
    let total: u64 = selected.iter().map(|r| r.citations).sum();
    Ok(CitationStats {
        articles: selected.len(),
        total_citations: total,
        mean: total as f64 / selected.len() as f64,
    })
}

/// Citation percentiles of subject records against a reference set.
#[derive(Debug, Clone, Serialize)]
pub struct PercentileOutcome {
    /// (record id, percentile), in subject order. Percentiles are strictly
    /// inside (0, 100).
    pub percentiles: Vec<(String, f64)>,
    /// Ids of subjects whose publication year has no reference cohort.
    pub excluded: Vec<String>,
}

/// Midrank percentile of each subject among the reference records of its own
/// publication year, with the subject itself joined to the cohort. With
/// `below` references cited strictly less and `ties` cited equally,
///
///   percentile = 100 * (below + 0.5 * (ties + 1)) / (cohort + 1).
///
/// The +1 terms are the subject itself, which keeps every percentile
/// strictly between 0 and 100 and puts a record tied with its whole cohort
/// at exactly 50.
pub fn citation_percentiles(
    subjects: &[PublicationRecord],
    reference: &[PublicationRecord],
) -> PercentileOutcome {
    let mut by_year: BTreeMap<i32, Vec<u64>> = BTreeMap::new();
    for r in reference {
        by_year.entry(r.year).or_default().push(r.citations);
    }
    let mut percentiles = Vec::new();
    let mut excluded = Vec::new();
    for s in subjects {
        match by_year.get(&s.year) {
            None => excluded.push(s.id.clone()),
            Some(cohort) => {
                let below = cohort.iter().filter(|&&c| c < s.citations).count() as f64;
                let ties = cohort.iter().filter(|&&c| c == s.citations).count() as f64;
                let pct = 100.0 * (below + 0.5 * (ties + 1.0)) / (cohort.len() as f64 + 1.0);
                percentiles.push((s.id.clone(), pct));
            }
        }
    }
    PercentileOutcome {
        percentiles,
        excluded,
    }
}

/// Largest h such that h publications have at least h citations each.
pub fn h_index(citations: &[u64]) -> usize {
    let mut sorted = citations.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let mut h = 0;
    for (i, &c) in sorted.iter().enumerate() {
        if c as usize > i {
            h = i + 1;
        } else {
            break;
        }
    }
    h
}

/// Citations received in a year by the previous two years' items, divided by
/// the number of those items. Errors on a zero item count.
pub fn impact_factor(citations: u64, citable_items: u64) -> Result<f64> {
    if citable_items == 0 {
        return Err(Error::validation(
            "impact factor needs a positive count of citable items",
        ));
    }
    Ok(citations as f64 / citable_items as f64)
}

/// A venue's quality metrics together with how many articles a group placed
/// there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JournalOutput {
    pub journal: String,
    pub impact_factor: f64,
    pub h_index: u64,
    pub articles: u64,
}

/// Article-weighted mean impact factor and mean h-index across venues.
/// Errors when the total article count is zero.
pub fn output_weighted_means(outputs: &[JournalOutput]) -> Result<(f64, f64)> {
    let total: u64 = outputs.iter().map(|o| o.articles).sum();
    if total == 0 {
        return Err(Error::validation(
            "output-weighted means need at least one article",
        ));
    }
    let wif = outputs
        .iter()
        .map(|o| o.impact_factor * o.articles as f64)
        .sum::<f64>()
        / total as f64;
    let wh = outputs
        .iter()
        .map(|o| o.h_index as f64 * o.articles as f64)
        .sum::<f64>()
        / total as f64;
    Ok((wif, wh))
}
