//! Truth-tracking value of credences and the conditions under which Bayesian
//! updating on evidence is expected to improve it.
//!
//! A credence is scored by how close it sits to the truth value of the
//! hypothesis: V = 1 - |truth - credence|. An evidence situation is a prior,
//! a battery of binary signals (conditionally independent given the
//! hypothesis and given its negation), and optionally an agent whose credence
//! and signal model may diverge from the truth. Exact expectations enumerate
//! all 2^m signal outcomes for m <= [`MAX_EXACT_SIGNALS`]; a seeded
//! Monte-Carlo estimator covers larger batteries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Most signals the exact outcome enumerations will handle (2^20 outcomes).
pub const MAX_EXACT_SIGNALS: usize = 20;

/// Accuracy score of a credence against the actual truth value:
/// 1 - |truth - credence|, so 1 is perfectly right and 0 perfectly wrong.
///
/// Errors when the credence is outside [0, 1].
pub fn veritistic_value(truth: bool, credence: f64) -> Result<f64> {
    ensure_credence(credence)?;
    Ok(value(truth, credence))
}

/// Posterior credence after multiplying the prior odds by `bayes_factor`.
///
/// Credences 0 and 1 are fixed points. The factor must be positive and
/// finite; degenerate factors only arise internally from impossible outcomes
/// and are handled by the enumerations.
pub fn bayes_update(credence: f64, bayes_factor: f64) -> Result<f64> {
    ensure_credence(credence)?;
    if !bayes_factor.is_finite() || bayes_factor <= 0.0 {
        return Err(Error::validation(format!(
            "bayes factor must be positive and finite, got {bayes_factor}"
        )));
    }
    Ok(posterior(credence, bayes_factor))
}

/// A binary evidence source characterized by how often it fires when the
/// hypothesis is true versus false.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Signal {
    /// P(signal fires | hypothesis true).
    pub p_given_h: f64,
    /// P(signal fires | hypothesis false).
    pub p_given_not_h: f64,
}

impl Signal {
    /// Likelihood ratio of the observed outcome. May be 0, infinite, or NaN
    /// for degenerate signals; callers that enumerate outcomes skip the
    /// impossible ones before this matters.
    pub fn likelihood_ratio(&self, fired: bool) -> f64 {
        if fired {
            self.p_given_h / self.p_given_not_h
        } else {
            (1.0 - self.p_given_h) / (1.0 - self.p_given_not_h)
        }
    }

    /// Whether the signal carries any information: its firing rates under the
    /// two hypotheses differ by more than `tol`.
    pub fn is_informative(&self, tol: f64) -> bool {
        (self.p_given_h - self.p_given_not_h).abs() > tol
    }

    fn validate(&self, what: &str, index: usize) -> Result<()> {
        for (name, v) in [
            ("p_given_h", self.p_given_h),
            ("p_given_not_h", self.p_given_not_h),
        ] {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!(
                    "{what} signal {index}: {name} must lie in [0, 1], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The updating agent's view: its credence in the hypothesis and its model
/// of each signal (aligned by index with the true signals).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentModel {
    pub credence: f64,
    pub signals: Vec<Signal>,
}

/// A hypothesis with an objective prior, true signal behavior, and an
/// optional divergent agent. `agent: None` means a fully accurate agent
/// (credence equal to the prior, signal model equal to the truth).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvidenceModel {
    /// P(h), the probability that the hypothesis is true.
    pub prior: f64,
    /// True signal behavior, conditionally independent given h and given
    /// not-h.
    pub signals: Vec<Signal>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<AgentModel>,
}

impl EvidenceModel {
    pub fn validate(&self) -> Result<()> {
        if !self.prior.is_finite() || self.prior <= 0.0 || self.prior >= 1.0 {
            return Err(Error::validation(format!(
                "prior must lie strictly between 0 and 1, got {}",
                self.prior
            )));
        }
        for (i, s) in self.signals.iter().enumerate() {
            s.validate("true", i)?;
        }
        if let Some(agent) = &self.agent {
            ensure_credence(agent.credence)?;
            if agent.signals.len() != self.signals.len() {
                return Err(Error::validation(format!(
                    "agent models {} signals but the world has {}",
                    agent.signals.len(),
                    self.signals.len()
                )));
            }
            for (i, s) in agent.signals.iter().enumerate() {
                s.validate("agent", i)?;
            }
        }
        Ok(())
    }

    /// The credence the agent updates from.
    pub fn agent_credence(&self) -> f64 {
        self.agent.as_ref().map_or(self.prior, |a| a.credence)
    }

    /// The signal model the agent conditions with.
    pub fn agent_signals(&self) -> &[Signal] {
        self.agent.as_ref().map_or(&self.signals, |a| &a.signals)
    }

    /// The same situation restricted to the given signal indices.
    pub fn restrict(&self, indices: &[usize]) -> Result<EvidenceModel> {
        let idx = checked_subset(indices, self.signals.len())?;
        Ok(EvidenceModel {
            prior: self.prior,
            signals: idx.iter().map(|&i| self.signals[i]).collect(),
            agent: self.agent.as_ref().map(|a| AgentModel {
                credence: a.credence,
                signals: idx.iter().map(|&i| a.signals[i]).collect(),
            }),
        })
    }
}

/// Verdict on one structural condition.
#[derive(Debug, Clone, Serialize)]
pub struct ConditionCheck {
    pub ok: bool,
    /// Human-readable description of the violated quantity, when not ok.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub violation: Option<String>,
}

impl ConditionCheck {
    fn pass() -> Self {
        ConditionCheck {
            ok: true,
            violation: None,
        }
    }

    fn fail(msg: impl Into<String>) -> Self {
        ConditionCheck {
            ok: false,
            violation: Some(msg.into()),
        }
    }
}

/// Report on the three conditions under which updating is expected to help.
#[derive(Debug, Clone, Serialize)]
pub struct ShakedReport {
    /// Some signal outcome moves the posterior: P(h | e) differs from P(h).
    pub relevance: ConditionCheck,
    /// The agent's credence is strictly interior and every signal carries
    /// information.
    pub bounds: ConditionCheck,
    /// The agent's credence equals the prior and its likelihood ratios match
    /// the true ones.
    pub model_accuracy: ConditionCheck,
    /// Exact expected change in veritistic value, when enumerable.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub expected_delta_v: Option<f64>,
}

impl ShakedReport {
    pub fn all_ok(&self) -> bool {
        self.relevance.ok && self.bounds.ok && self.model_accuracy.ok
    }
}

/// Check the three structural conditions on an evidence situation and, when
/// the signal battery is small enough, attach the exact expected change in
/// veritistic value.
pub fn check_shaked_conditions(model: &EvidenceModel) -> Result<ShakedReport> {
    model.validate()?;
    let c = model.agent_credence();
    let agent = model.agent_signals();

    let relevance = if model.signals.is_empty() {
        ConditionCheck::fail("no signals: P(h | e) = P(h) trivially")
    } else if model.signals.iter().any(|s| s.is_informative(1e-12)) {
        ConditionCheck::pass()
    } else {
        ConditionCheck::fail(
            "every likelihood ratio is 1, so P(h | e) = P(h) for every outcome",
        )
    };

    let bounds = if !(c > 0.0 && c < 1.0) {
        ConditionCheck::fail(format!(
            "agent credence {c} is not strictly between 0 and 1"
        ))
    } else if let Some(i) = model
        .signals
        .iter()
        .position(|s| !s.is_informative(1e-12))
    {
        ConditionCheck::fail(format!(
            "signal {i} has likelihood ratio 1 for every outcome"
        ))
    } else if model.signals.is_empty() {
        ConditionCheck::fail("no signals to condition on")
    } else {
        ConditionCheck::pass()
    };

    let model_accuracy = if (c - model.prior).abs() > 1e-9 {
        ConditionCheck::fail(format!(
            "agent credence {c} differs from the prior {}",
            model.prior
        ))
    } else {
        let mut failing = None;
        for (i, (ag, tr)) in agent.iter().zip(&model.signals).enumerate() {
            for fired in [true, false] {
                if !ratios_close(ag.likelihood_ratio(fired), tr.likelihood_ratio(fired)) {
                    failing = Some(i);
                    break;
                }
            }
            if failing.is_some() {
                break;
            }
        }
        match failing {
            Some(i) => ConditionCheck::fail(format!(
                "agent likelihood ratio for signal {i} differs from the true ratio"
            )),
            None => ConditionCheck::pass(),
        }
    };

    let expected_delta_v = if model.signals.len() <= MAX_EXACT_SIGNALS {
        Some(expected_delta_v(model)?)
    } else {
        None
    };

    Ok(ShakedReport {
        relevance,
        bounds,
        model_accuracy,
        expected_delta_v,
    })
}

/// Exact expected change in veritistic value from updating on every signal,
/// by enumeration of all 2^m outcomes.
///
/// Errors when m exceeds [`MAX_EXACT_SIGNALS`]; use
/// [`expected_delta_v_monte_carlo`] for larger batteries.
pub fn expected_delta_v(model: &EvidenceModel) -> Result<f64> {
    model.validate()?;
    let all: Vec<usize> = (0..model.signals.len()).collect();
    let c = model.agent_credence();
    let baseline = model.prior * value(true, c) + (1.0 - model.prior) * value(false, c);
    Ok(expected_value_after(model, &all)? - baseline)
}

/// Exact expected veritistic value after updating on the given signal subset.
pub fn expected_value_after(model: &EvidenceModel, subset: &[usize]) -> Result<f64> {
    let mut acc = 0.0;
    enumerate_outcomes(model, subset, |p_h, p_nh, post| {
        acc += model.prior * p_h * post + (1.0 - model.prior) * p_nh * (1.0 - post);
    })?;
    Ok(acc)
}

/// Exact expected posterior credence over all signal outcomes. For an
/// accurate agent this equals the prior (the update is a martingale).
pub fn expected_posterior(model: &EvidenceModel) -> Result<f64> {
    let all: Vec<usize> = (0..model.signals.len()).collect();
    let mut acc = 0.0;
    enumerate_outcomes(model, &all, |p_h, p_nh, post| {
        acc += (model.prior * p_h + (1.0 - model.prior) * p_nh) * post;
    })?;
    Ok(acc)
}

/// Expected gain in veritistic value from conditioning on the larger of two
/// nested signal subsets instead of the smaller.
///
/// Signals are conditionally independent given each truth value, which is
/// what makes the nested comparison well defined. Errors when the subsets
/// are not nested or reference signals out of range.
pub fn total_evidence_gain(
    model: &EvidenceModel,
    small: &[usize],
    large: &[usize],
) -> Result<f64> {
    model.validate()?;
    let s = checked_subset(small, model.signals.len())?;
    let l = checked_subset(large, model.signals.len())?;
    if !s.is_subset(&l) {
        return Err(Error::validation(
            "evidence subsets must be nested: the small one inside the large one",
        ));
    }
    Ok(expected_value_after(model, large)? - expected_value_after(model, small)?)
}

/// Monte-Carlo estimate of the expected change in veritistic value, for
/// batteries too large to enumerate. Seeded and deterministic.
pub fn expected_delta_v_monte_carlo(
    model: &EvidenceModel,
    samples: u64,
    seed: u64,
) -> Result<f64> {
    model.validate()?;
    if samples == 0 {
        return Err(Error::validation("sample count must be positive"));
    }
    let c = model.agent_credence();
    let agent = model.agent_signals();
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut acc = 0.0;
    for _ in 0..samples {
        let h = rng.gen::<f64>() < model.prior;
        let mut factor = 1.0f64;
        for (tr, ag) in model.signals.iter().zip(agent) {
            let chance = if h { tr.p_given_h } else { tr.p_given_not_h };
            let fired = rng.gen::<f64>() < chance;
            factor *= ag.likelihood_ratio(fired);
        }
        if factor.is_nan() {
            return Err(Error::validation(
                "agent model cannot condition on an outcome it treats as impossible",
            ));
        }
        let post = posterior(c, factor);
        acc += value(h, post) - value(h, c);
    }
    Ok(acc / samples as f64)
}

fn value(truth: bool, credence: f64) -> f64 {
    let t = if truth { 1.0 } else { 0.0 };
    1.0 - (t - credence).abs()
}

/// Odds-form update tolerant of zero and infinite factors.
fn posterior(credence: f64, factor: f64) -> f64 {
    if credence == 0.0 {
        return 0.0;
    }
    if credence == 1.0 {
        return 1.0;
    }
    if factor == 0.0 {
        return 0.0;
    }
    if factor.is_infinite() {
        return 1.0;
    }
    let scaled = credence * factor;
    scaled / (scaled + 1.0 - credence)
}

fn ensure_credence(credence: f64) -> Result<()> {
    if !credence.is_finite() || !(0.0..=1.0).contains(&credence) {
        return Err(Error::validation(format!(
            "credence must lie in [0, 1], got {credence}"
        )));
    }
    Ok(())
}

fn ratios_close(agent: f64, truth: f64) -> bool {
    if agent.is_nan() || truth.is_nan() {
        return agent.is_nan() && truth.is_nan();
    }
    if agent.is_infinite() || truth.is_infinite() {
        return agent == truth;
    }
    (agent - truth).abs() <= 1e-9 * (1.0 + truth.abs())
}

fn checked_subset(indices: &[usize], len: usize) -> Result<BTreeSet<usize>> {
    let mut set = BTreeSet::new();
    for &i in indices {
        if i >= len {
            return Err(Error::validation(format!(
                "signal index {i} out of range for {len} signals"
            )));
        }
        if !set.insert(i) {
            return Err(Error::validation(format!("signal index {i} repeated")));
        }
    }
    Ok(set)
}

/// Enumerate every outcome of the chosen signal subset, passing the visitor
/// the outcome probabilities under h and not-h and the agent's posterior.
/// Outcomes impossible under both hypotheses are skipped. Signals that are
/// exactly uninformative under both the true and agent models are dropped
/// up front: they multiply every factor by one and marginalize out of the
/// outcome weights, so conditioning on them is an exact no-op and subsets
/// differing only by such signals yield bitwise-equal sums.
fn enumerate_outcomes<F>(model: &EvidenceModel, subset: &[usize], mut visit: F) -> Result<()>
where
    F: FnMut(f64, f64, f64),
{
    model.validate()?;
    let idx = checked_subset(subset, model.signals.len())?;
    if idx.len() > MAX_EXACT_SIGNALS {
        return Err(Error::validation(format!(
            "{} signals exceed the exact enumeration limit of {MAX_EXACT_SIGNALS}; \
             use the Monte-Carlo estimator instead",
            idx.len()
        )));
    }
    let c = model.agent_credence();
    let agent = model.agent_signals();
    let chosen: Vec<usize> = idx
        .into_iter()
        .filter(|&i| {
            let truth = model.signals[i];
            let modeled = agent[i];
            truth.p_given_h != truth.p_given_not_h
                || modeled.p_given_h != truth.p_given_h
                || modeled.p_given_not_h != truth.p_given_not_h
        })
        .collect();
    for mask in 0u32..(1u32 << chosen.len()) {
        let mut p_h = 1.0f64;
        let mut p_nh = 1.0f64;
        for (bit, &i) in chosen.iter().enumerate() {
            let fired = mask >> bit & 1 == 1;
            let s = model.signals[i];
            p_h *= if fired { s.p_given_h } else { 1.0 - s.p_given_h };
            p_nh *= if fired {
                s.p_given_not_h
            } else {
                1.0 - s.p_given_not_h
            };
        }
        if p_h == 0.0 && p_nh == 0.0 {
            continue;
        }
        let mut factor = 1.0f64;
        for (bit, &i) in chosen.iter().enumerate() {
            let fired = mask >> bit & 1 == 1;
            factor *= agent[i].likelihood_ratio(fired);
        }
        if factor.is_nan() {
            return Err(Error::validation(
                "agent model cannot condition on an outcome it treats as impossible",
            ));
        }
        visit(p_h, p_nh, posterior(c, factor));
    }
    Ok(())
}
