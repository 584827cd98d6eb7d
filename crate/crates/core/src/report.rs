//! Internal-structure report: `P(V=1 | X=1)` for every behavior with all
//! other behaviors summed out, plus configured comparisons between evidence
//! sets.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::Assignment;
use crate::estimation::ROUNDING_SLACK;
use crate::identification::FittedModel;
use crate::inference::{posterior_value, PosteriorResult};
use crate::network::NetworkSpec;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReportError {
    #[error("malformed probe {probe:?}: {reason}")]
    Malformed { probe: String, reason: String },
    #[error("probe {probe:?} names unknown node {node:?}")]
    UnknownNode { probe: String, node: String },
    #[error("probe {probe:?} conditions on the latent node")]
    LatentEvidence { probe: String },
    #[error("malformed probes document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Comparison {
    #[serde(rename = ">")]
    Greater,
    #[serde(rename = "<")]
    Less,
    /// Reported side by side without an expectation.
    #[serde(rename = "vs")]
    Versus,
}

/// `P(V=1 | left) OP P(V=1 | right)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Probe {
    pub text: String,
    pub left: Assignment,
    pub right: Assignment,
    pub comparison: Comparison,
}

/// Probes document: `{"probes": ["P(V=1|Fav=1) > P(V=1|Click=1)", ...]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbesDocument {
    pub probes: Vec<String>,
}

pub fn parse_probes(text: &str, spec: &NetworkSpec) -> Result<Vec<Probe>, ReportError> {
    let doc: ProbesDocument = serde_json::from_str(text).map_err(|e| ReportError::Document(e.to_string()))?;
    doc.probes.iter().map(|p| parse_probe(p, spec)).collect()
}

pub fn parse_probe(text: &str, spec: &NetworkSpec) -> Result<Probe, ReportError> {
    let malformed = |reason: &str| ReportError::Malformed {
        probe: text.to_owned(),
        reason: reason.to_owned(),
    };
    let compact: String = text.split_whitespace().collect::<Vec<_>>().join(" ");
    let (left, op, right) = [(" vs ", Comparison::Versus), (">", Comparison::Greater), ("<", Comparison::Less)]
        .iter()
        .find_map(|(token, op)| compact.split_once(token).map(|(l, r)| (l, *op, r)))
        .ok_or_else(|| malformed("expected '>', '<' or 'vs' between two posteriors"))?;
    let side = |s: &str| -> Result<Assignment, ReportError> {
        let s: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        let inner = s
            .strip_prefix("P(")
            .and_then(|s| s.strip_suffix(')'))
            .ok_or_else(|| malformed("each side must look like P(V=1|X=1,...)"))?;
        let (target, given) = inner.split_once('|').unwrap_or((inner, ""));
        let latent = spec.name(spec.latent());
        if target != format!("{latent}=1") {
            return Err(malformed(&format!("posterior must be of {latent}=1")));
        }
        let mut evidence = Assignment::empty();
        for item in given.split(',').filter(|s| !s.is_empty()) {
            let (name, value) = item.split_once('=').ok_or_else(|| malformed("evidence items are NAME=0|1"))?;
            let node = spec.id(name).ok_or_else(|| ReportError::UnknownNode {
                probe: text.to_owned(),
                node: name.to_owned(),
            })?;
            if node == spec.latent() {
                return Err(ReportError::LatentEvidence { probe: text.to_owned() });
            }
            let value = match value {
                "0" => false,
                "1" => true,
                _ => return Err(malformed("evidence values must be 0 or 1")),
            };
            evidence.set(node, value);
        }
        Ok(evidence)
    };
    Ok(Probe {
        text: compact.clone(),
        left: side(left)?,
        right: side(right)?,
        comparison: op,
    })
}

/// One line of the single-behavior table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BehaviorRow {
    pub behavior: String,
    /// `None` when the evidence is impossible under the model.
    pub raw: Option<f64>,
    pub clamped: Option<f64>,
    pub evidence_probability: f64,
    pub flags: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeStatus {
    Pass,
    Fail,
    /// A `vs` probe, which has no expectation.
    Info,
    /// One side is impossible under the model.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbeResult {
    pub probe: String,
    pub comparison: Comparison,
    pub left: Option<PosteriorResult>,
    pub right: Option<PosteriorResult>,
    pub status: ProbeStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StructureReport {
    pub rows: Vec<BehaviorRow>,
    pub probes: Vec<ProbeResult>,
}

/// Rows are sorted by raw posterior, ascending; impossible rows go last.
/// Probes compare raw posteriors.
pub fn internal_structure_report(model: &FittedModel, probes: &[Probe]) -> StructureReport {
    let spec = model.spec();
    let mut rows: Vec<BehaviorRow> = spec
        .observed()
        .into_iter()
        .filter(|&n| n != spec.anchor())
        .map(|n| {
            let evidence = Assignment::empty().with(n, true);
            let result = posterior_value(model, &evidence);
            let mut flags = Vec::new();
            let (raw, clamped, evidence_probability) = match result {
                Ok(r) => {
                    if (r.raw - r.clamped).abs() > ROUNDING_SLACK {
                        flags.push("clamped".to_owned());
                    }
                    (Some(r.raw), Some(r.clamped), r.evidence_probability)
                }
                Err(_) => {
                    flags.push("impossible".to_owned());
                    (None, None, 0.0)
                }
            };
            BehaviorRow {
                behavior: spec.name(n).to_owned(),
                raw,
                clamped,
                evidence_probability,
                flags,
            }
        })
        .collect();
    rows.sort_by(|a, b| match (a.raw, b.raw) {
        (Some(x), Some(y)) => x.total_cmp(&y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });

    let probes = probes
        .iter()
        .map(|p| {
            let left = posterior_value(model, &p.left).ok();
            let right = posterior_value(model, &p.right).ok();
            let status = match (left, right, p.comparison) {
                (Some(_), Some(_), Comparison::Versus) => ProbeStatus::Info,
                (Some(l), Some(r), Comparison::Greater) => pass_if(l.raw > r.raw),
                (Some(l), Some(r), Comparison::Less) => pass_if(l.raw < r.raw),
                _ => ProbeStatus::Error,
            };
            ProbeResult {
                probe: p.text.clone(),
                comparison: p.comparison,
                left,
                right,
                status,
            }
        })
        .collect();
    StructureReport { rows, probes }
}

fn pass_if(ok: bool) -> ProbeStatus {
    if ok {
        ProbeStatus::Pass
    } else {
        ProbeStatus::Fail
    }
}

impl StructureReport {
    pub fn all_probes_pass(&self) -> bool {
        self.probes
            .iter()
            .all(|p| matches!(p.status, ProbeStatus::Pass | ProbeStatus::Info))
    }

    pub fn row(&self, behavior: &str) -> Option<&BehaviorRow> {
        self.rows.iter().find(|r| r.behavior == behavior)
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }

    pub fn to_text(&self) -> String {
        let num = |x: Option<f64>| x.map_or_else(|| "-".to_owned(), |x| format!("{x:.6}"));
        let width = self.rows.iter().map(|r| r.behavior.len()).max().unwrap_or(0).max(8);
        let mut out = String::new();
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  flags", "behavior", "raw", "clamped");
        for r in &self.rows {
            let line = format!(
                "{:<width$}  {:>12}  {:>12}  {}",
                r.behavior,
                num(r.raw),
                num(r.clamped),
                r.flags.join(",")
            );
            let _ = writeln!(out, "{}", line.trim_end());
        }
        if !self.probes.is_empty() {
            let width = self.probes.iter().map(|p| p.probe.len()).max().unwrap_or(0).max(5);
            let _ = writeln!(out);
            let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}  result", "probe", "left", "right");
            for p in &self.probes {
                let status = match p.status {
                    ProbeStatus::Pass => "pass",
                    ProbeStatus::Fail => "fail",
                    ProbeStatus::Info => "info",
                    ProbeStatus::Error => "error",
                };
                let _ = writeln!(
                    out,
                    "{:<width$}  {:>12}  {:>12}  {status}",
                    p.probe,
                    num(p.left.map(|r| r.raw)),
                    num(p.right.map(|r| r.raw)),
                );
            }
        }
        out
    }
}
