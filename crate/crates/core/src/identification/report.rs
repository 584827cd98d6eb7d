use std::collections::BTreeMap;
use std::fmt;

use serde::Serialize;

use super::cpt::{Cpt, EntryFlag, Provenance};
use crate::estimation::ClampDiagnostic;
use crate::network::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStep {
    Prior,
    AnchorFactor,
    IndependentFactors,
    ValueDependentFactors,
}

impl fmt::Display for FitStep {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitStep::Prior => "step 1 (prior)",
            FitStep::AnchorFactor => "step 2 (anchor factor)",
            FitStep::IndependentFactors => "step 3 (value-independent factors)",
            FitStep::ValueDependentFactors => "step 4 (value-dependent factors)",
        })
    }
}

/// The anchor solve at one realization `w` of the anchor's other parents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnchorContextReport {
    pub context: BTreeMap<String, u8>,
    /// Observed `P(w)`.
    pub mass: f64,
    /// `p[a][v] = P(w, A=a, V=v)` before clamping.
    pub joint: [[f64; 2]; 2],
    /// `P(w, A=0)` minus its reconstruction from the solved joint.
    pub residual: f64,
    /// `P(A=1|w,V=1) - P(A=1|w,V=0)`, the determinant of the adjustment matrix.
    pub determinant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntryReport {
    pub context: BTreeMap<String, u8>,
    pub value: f64,
    pub raw: f64,
    pub flag: EntryFlag,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NodeReport {
    pub node: String,
    pub step: FitStep,
    pub provenance: Provenance,
    pub clamped: usize,
    pub unidentified: usize,
    pub entries: Vec<EntryReport>,
}

impl NodeReport {
    pub fn new(cpt: &Cpt, step: FitStep, spec: &NetworkSpec) -> Self {
        let entries = cpt
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| EntryReport {
                context: spec.named(&cpt.scope().assignment(i)),
                value: e.value,
                raw: e.raw,
                flag: e.flag,
            })
            .collect();
        NodeReport {
            node: spec.name(cpt.node()).to_owned(),
            step,
            provenance: cpt.provenance(),
            clamped: cpt.count(EntryFlag::Clamped),
            unidentified: cpt.count(EntryFlag::Unidentified),
            entries,
        }
    }
}

/// A realization where the anchor carries (almost) no signal about value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityViolation {
    pub context: BTreeMap<String, u8>,
    pub gap: f64,
    pub unidentified: bool,
}

/// Diagnostics of one fit, serialized next to the model.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct FitReport {
    pub prior_v: f64,
    pub value_given_anchor: f64,
    pub delta: f64,
    pub consistency_tolerance: f64,
    pub estimation_diagnostics: Vec<ClampDiagnostic>,
    pub anchor_contexts: Vec<AnchorContextReport>,
    pub sensitivity_violations: Vec<SensitivityViolation>,
    pub nodes: Vec<NodeReport>,
    pub total_clamped: usize,
    pub total_unidentified: usize,
}

impl FitReport {
    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(self).expect("report serializes");
        text.push('\n');
        text
    }
}
