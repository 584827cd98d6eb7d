//! Exact posterior `P(V=1 | evidence)` by enumeration over a fitted model.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::assignment::{scatter, Assignment, NodeId};
use crate::identification::FittedModel;
use crate::ingest::EventRecord;

/// Largest network the enumeration accepts.
pub const MAX_ENUMERATION_NODES: usize = 24;

/// Evidence probabilities below this make a posterior meaningless.
pub const IMPOSSIBLE_EVIDENCE: f64 = 1e-15;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InferenceError {
    #[error("network has {0} nodes; enumeration supports at most {MAX_ENUMERATION_NODES}")]
    TooLarge(usize),
    #[error("assignment {0} does not cover every node")]
    Incomplete(String),
    #[error("evidence may only name observed nodes, got {0}")]
    LatentEvidence(String),
    #[error("evidence names a node outside the network")]
    UnknownNode,
    #[error("impossible evidence {evidence}: probability {probability:e}")]
    ImpossibleEvidence { evidence: String, probability: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PosteriorResult {
    pub raw: f64,
    pub clamped: f64,
    pub evidence_probability: f64,
}

impl PosteriorResult {
    pub fn from_sums(numerator: f64, denominator: f64) -> Self {
        let raw = numerator / denominator;
        PosteriorResult {
            raw,
            clamped: raw.clamp(0.0, 1.0),
            evidence_probability: denominator,
        }
    }
}

/// Product of the (raw) factors at a full assignment.
pub fn joint_probability(model: &FittedModel, assignment: &Assignment) -> Result<f64, InferenceError> {
    let spec = model.spec();
    if assignment.scope_mask() != spec.full_mask() {
        return Err(InferenceError::Incomplete(spec.display(assignment)));
    }
    Ok(joint_at(model, assignment.values_mask()))
}

fn joint_at(model: &FittedModel, state: u32) -> f64 {
    model.cpts().iter().fold(1.0, |acc, cpt| {
        let p = cpt.entry_at(state).raw;
        acc * if state & cpt.node().bit() != 0 { p } else { 1.0 - p }
    })
}

/// `P(V=1 | evidence)` with every unassigned node summed out.
pub fn posterior_value(model: &FittedModel, evidence: &Assignment) -> Result<PosteriorResult, InferenceError> {
    let spec = model.spec();
    if spec.len() > MAX_ENUMERATION_NODES {
        return Err(InferenceError::TooLarge(spec.len()));
    }
    let latent = spec.latent();
    if evidence.contains(latent) {
        return Err(InferenceError::LatentEvidence(spec.display(evidence)));
    }
    if evidence.scope_mask() & !spec.full_mask() != 0 {
        return Err(InferenceError::UnknownNode);
    }
    let free: Vec<NodeId> = spec
        .node_ids()
        .filter(|&n| n != latent && !evidence.contains(n))
        .collect();
    let base = evidence.values_mask() & evidence.scope_mask();
    let mut sums = [0.0f64; 2];
    for k in 0..1usize << free.len() {
        let state = base | scatter(k, &free);
        sums[0] += joint_at(model, state);
        sums[1] += joint_at(model, state | latent.bit());
    }
    let denominator = sums[0] + sums[1];
    if denominator < IMPOSSIBLE_EVIDENCE {
        return Err(InferenceError::ImpossibleEvidence {
            evidence: spec.display(evidence),
            probability: denominator,
        });
    }
    Ok(PosteriorResult::from_sums(sums[1], denominator))
}

/// Scores records in order, memoizing by evidence. Errors are per record.
pub struct Scorer<'m> {
    model: &'m FittedModel,
    cache: HashMap<(u32, u32), Result<PosteriorResult, InferenceError>>,
}

impl<'m> Scorer<'m> {
    pub fn new(model: &'m FittedModel) -> Self {
        Scorer {
            model,
            cache: HashMap::new(),
        }
    }

    pub fn score(&mut self, evidence: &Assignment) -> Result<PosteriorResult, InferenceError> {
        let key = (evidence.scope_mask(), evidence.values_mask());
        let model = self.model;
        self.cache
            .entry(key)
            .or_insert_with(|| posterior_value(model, evidence))
            .clone()
    }
}

/// One `(id, result)` per record, in input order.
pub fn score_events<'m, I>(
    model: &'m FittedModel,
    events: I,
) -> impl Iterator<Item = (String, Result<PosteriorResult, InferenceError>)> + 'm
where
    I: IntoIterator<Item = EventRecord>,
    I::IntoIter: 'm,
{
    let mut scorer = Scorer::new(model);
    events.into_iter().map(move |record| {
        let result = scorer.score(&record.behaviors);
        (record.id, result)
    })
}

/// Output line of the scorer.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum ScoreLine {
    Score {
        id: String,
        raw: f64,
        clamped: f64,
        evidence_probability: f64,
    },
    Error {
        id: String,
        error: String,
    },
}

impl ScoreLine {
    pub fn new(id: String, result: &Result<PosteriorResult, InferenceError>) -> Self {
        match result {
            Ok(r) => ScoreLine::Score {
                id,
                raw: r.raw,
                clamped: r.clamped,
                evidence_probability: r.evidence_probability,
            },
            Err(e) => ScoreLine::Error {
                id,
                error: e.to_string(),
            },
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("score line serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identification::{Cpt, CptEntry, Provenance};
    use crate::network::NetworkSpec;

    fn t1_model() -> FittedModel {
        let spec = NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"},
                {"name": "B", "role": "behavior"}],
                "edges": [["V", "A"], ["V", "B"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap();
        let v = spec.latent();
        let cpts = vec![
            Cpt::new(spec.anchor(), vec![v], vec![CptEntry::exact(0.4), CptEntry::exact(0.0)], Provenance::AnchorSolve),
            Cpt::new(spec.id("B").unwrap(), vec![v], vec![CptEntry::exact(0.2), CptEntry::exact(0.8)], Provenance::MatrixAdjustment),
        ];
        FittedModel::from_cpts(spec, 0.5, cpts).unwrap()
    }

    #[test]
    fn t1_joint_and_posteriors() {
        let m = t1_model();
        let s = m.spec();
        let full = s.assignment([("V", true), ("A", false), ("B", true)]).unwrap();
        assert!((joint_probability(&m, &full).unwrap() - 0.40).abs() < 1e-15);
        assert!(joint_probability(&m, &s.assignment([("V", true)]).unwrap()).is_err());

        let post = |pairs: &[(&str, bool)]| posterior_value(&m, &s.assignment(pairs.iter().copied()).unwrap());
        let r = post(&[("A", false), ("B", true)]).unwrap();
        assert!((r.raw - 0.40 / 0.46).abs() < 1e-12);
        assert!((r.evidence_probability - 0.46).abs() < 1e-12);
        assert_eq!(post(&[("A", true)]).unwrap().raw, 0.0);
        assert!((post(&[("B", true)]).unwrap().raw - 0.8).abs() < 1e-12);
        assert!((post(&[]).unwrap().raw - 0.5).abs() < 1e-15);
        assert!(matches!(post(&[("V", true)]), Err(InferenceError::LatentEvidence(_))));
    }

    #[test]
    fn full_joint_sums_to_one() {
        let m = t1_model();
        let total: f64 = (0..8u32)
            .map(|s| joint_probability(&m, &Assignment::from_masks(0b111, s)).unwrap())
            .sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn impossible_evidence_is_an_error() {
        let spec = NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"}],
                "edges": [["V", "A"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap();
        let cpt = Cpt::new(spec.anchor(), vec![spec.latent()], vec![CptEntry::exact(0.0); 2], Provenance::AnchorSolve);
        let m = FittedModel::from_cpts(spec, 0.5, vec![cpt]).unwrap();
        let e = m.spec().assignment([("A", true)]).unwrap();
        assert!(matches!(posterior_value(&m, &e), Err(InferenceError::ImpossibleEvidence { .. })));
    }

    #[test]
    fn identical_records_share_scores() {
        let m = t1_model();
        let s = m.spec();
        let rec = |id: &str, a, b| EventRecord {
            id: id.into(),
            behaviors: s.assignment([("A", a), ("B", b)]).unwrap(),
        };
        let out: Vec<_> = score_events(&m, vec![rec("x", false, true), rec("y", true, false), rec("z", false, true)]).collect();
        assert_eq!(out.len(), 3);
        assert_eq!(out[0].1, out[2].1);
        assert_eq!(out[1].1.as_ref().unwrap().raw, 0.0);
        assert_eq!(out.iter().map(|o| o.0.as_str()).collect::<Vec<_>>(), ["x", "y", "z"]);
    }
}
