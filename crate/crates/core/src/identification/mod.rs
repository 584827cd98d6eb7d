//! Fitting every factor `P(X | Pa(X))` from the observable distributions.

mod adjustment;
mod anchor;
mod cpt;
mod model;
mod report;

use thiserror::Error;

pub use adjustment::{
    adjustment_workspaces, fit_independent_factor, fit_value_dependent_factor,
    value_context_marginal, AdjustmentWorkspace,
};
pub use anchor::{solve_anchor_factor, value_sensitivity_check, AnchorSolution, DEGENERATE_DENOMINATOR};
pub use cpt::{Cpt, CptEntry, EntryFlag, Provenance};
pub use model::{CptDocument, EntryDocument, FittedModel, ModelDocument, ModelError};
pub use report::{
    AnchorContextReport, EntryReport, FitReport, FitStep, NodeReport, SensitivityViolation,
};

use crate::assignment::NodeId;
use crate::estimation::ParentGivenValueTable;
use crate::network::NetworkSpec;
use crate::table::JointTable;

/// Default `delta` on `|P(A=1|w,V=1) - P(A=1|w,V=0)|`.
pub const DEFAULT_DELTA: f64 = 1e-8;
/// Consistency slack for analytic inputs.
pub const EXACT_CONSISTENCY_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("{step}: prior P(V=1) = {0} is not a probability", step = FitStep::Prior)]
    InvalidPrior(f64),
    #[error("{step}: parent-given-value table is not indexed by the anchor's other parents", step = FitStep::AnchorFactor)]
    ContextScope,
    #[error("{step}: observed table does not cover the observed nodes")]
    ObservedScope { step: FitStep },
    #[error(
        "{step}: inputs inconsistent at {context}: residual {residual:e} exceeds {tolerance:e}",
        step = FitStep::AnchorFactor
    )]
    Inconsistent {
        context: String,
        residual: f64,
        tolerance: f64,
    },
    #[error("{step}: anchor is not value-sensitive at {context}{}: |det| = {gap:e} < {delta:e}",
        node.as_ref().map(|n| format!(" (fitting {n})")).unwrap_or_default())]
    ValueInsensitive {
        step: FitStep,
        node: Option<String>,
        context: String,
        gap: f64,
        delta: f64,
    },
    #[error("{step}: {node} cannot be fit by matrix adjustment")]
    NotAdjustable { step: FitStep, node: String },
    #[error("{step}: {node} does not have the latent node as a parent")]
    NoLatentParent { step: FitStep, node: String },
    #[error("{step}: {node} has the latent node as a parent")]
    HasLatentParent { step: FitStep, node: String },
    #[error("{step}: fitting {node} requires {missing}, which is not fit yet", step = FitStep::ValueDependentFactors)]
    MissingPrerequisite { node: String, missing: String },
    #[error("{step}: enumeration over {0} nodes exceeds the cap", step = FitStep::ValueDependentFactors)]
    TooLarge(usize),
    #[error("{step}: fitting order is not a topological order of the network", step = FitStep::ValueDependentFactors)]
    InvalidOrder,
}

impl FitError {
    /// The identification step that failed.
    pub fn step(&self) -> FitStep {
        match self {
            FitError::InvalidPrior(_) => FitStep::Prior,
            FitError::ContextScope | FitError::Inconsistent { .. } => FitStep::AnchorFactor,
            FitError::ObservedScope { step }
            | FitError::ValueInsensitive { step, .. }
            | FitError::NotAdjustable { step, .. }
            | FitError::NoLatentParent { step, .. }
            | FitError::HasLatentParent { step, .. } => *step,
            FitError::MissingPrerequisite { .. } | FitError::TooLarge(_) | FitError::InvalidOrder => {
                FitStep::ValueDependentFactors
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub prior_v: f64,
    /// `P(V=1 | A=1)`; taken from the network's polarity and epsilon when unset.
    pub value_given_anchor: Option<f64>,
    pub delta: f64,
    /// Slack on the anchor consistency equation. When unset it is
    /// `1e-6` for analytic inputs and widens with `1/sqrt(N)` for tabulated ones.
    pub consistency_tolerance: Option<f64>,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            prior_v: 0.5,
            value_given_anchor: None,
            delta: DEFAULT_DELTA,
            consistency_tolerance: None,
        }
    }
}

/// Consistency slack for inputs backed by `sample_size` events (0 = analytic).
pub fn consistency_tolerance_for(sample_size: u64) -> f64 {
    if sample_size == 0 {
        EXACT_CONSISTENCY_TOLERANCE
    } else {
        EXACT_CONSISTENCY_TOLERANCE + 5.0 / (sample_size as f64).sqrt()
    }
}

/// Runs all four identification steps, fitting value-dependent factors in the
/// network's canonical topological order.
pub fn fit_model(
    spec: &NetworkSpec,
    observed: &JointTable,
    parent_given_value: &ParentGivenValueTable,
    options: &FitOptions,
) -> Result<FittedModel, FitError> {
    fit_model_with_order(spec, observed, parent_given_value, options, spec.topological_order())
}

/// As [`fit_model`] with an explicit topological order.
pub fn fit_model_with_order(
    spec: &NetworkSpec,
    observed: &JointTable,
    parent_given_value: &ParentGivenValueTable,
    options: &FitOptions,
    order: &[NodeId],
) -> Result<FittedModel, FitError> {
    let prior_v = options.prior_v;
    if !(0.0..=1.0).contains(&prior_v) {
        return Err(FitError::InvalidPrior(prior_v));
    }
    check_order(spec, order)?;
    if observed.scope().nodes() != spec.observed().as_slice() {
        return Err(FitError::ObservedScope {
            step: FitStep::AnchorFactor,
        });
    }
    let value_given_anchor = options
        .value_given_anchor
        .unwrap_or_else(|| spec.value_given_anchor());
    let sample_size = match (observed.total_count(), parent_given_value.sample_size()) {
        (0, n) | (n, 0) => n,
        (a, b) => a.min(b),
    };
    let tolerance = options
        .consistency_tolerance
        .unwrap_or_else(|| consistency_tolerance_for(sample_size));

    let latent = spec.latent();
    let mut fitted: Vec<Option<(Cpt, FitStep)>> = vec![None; spec.len()];
    fitted[latent.index()] = Some((
        Cpt::new(latent, Vec::new(), vec![CptEntry::exact(prior_v)], Provenance::Prior),
        FitStep::Prior,
    ));

    let anchor = solve_anchor_factor(
        parent_given_value,
        observed,
        prior_v,
        value_given_anchor,
        spec,
        tolerance,
    )?;
    let violations = value_sensitivity_check(&anchor.cpt, options.delta, spec);
    let cpt_a = anchor.cpt.clone();
    fitted[spec.anchor().index()] = Some((anchor.cpt, FitStep::AnchorFactor));

    for &node in order {
        if node != latent && node != spec.anchor() && !spec.has_latent_parent(node) {
            let cpt = fit_independent_factor(node, observed, spec)?;
            fitted[node.index()] = Some((cpt, FitStep::IndependentFactors));
        }
    }

    for &node in order {
        if node == spec.anchor() || !spec.has_latent_parent(node) {
            continue;
        }
        let previous: Vec<Cpt> = fitted.iter().flatten().map(|(c, _)| c.clone()).collect();
        let cpt = fit_value_dependent_factor(
            node,
            observed,
            &cpt_a,
            &previous,
            prior_v,
            spec,
            options.delta,
        )?;
        fitted[node.index()] = Some((cpt, FitStep::ValueDependentFactors));
    }

    let mut cpts = Vec::with_capacity(spec.len());
    let mut nodes = Vec::with_capacity(spec.len());
    for slot in fitted {
        let (cpt, step) = slot.expect("every node is fit by one of the steps");
        nodes.push(NodeReport::new(&cpt, step, spec));
        cpts.push(cpt);
    }
    let report = FitReport {
        prior_v,
        value_given_anchor,
        delta: options.delta,
        consistency_tolerance: tolerance,
        estimation_diagnostics: parent_given_value.diagnostics().to_vec(),
        anchor_contexts: anchor.contexts,
        sensitivity_violations: violations,
        total_clamped: nodes.iter().map(|n| n.clamped).sum(),
        total_unidentified: nodes.iter().map(|n| n.unidentified).sum(),
        nodes,
    };
    Ok(FittedModel::assemble(spec.clone(), prior_v, cpts, report))
}

fn check_order(spec: &NetworkSpec, order: &[NodeId]) -> Result<(), FitError> {
    if order.len() != spec.len() {
        return Err(FitError::InvalidOrder);
    }
    let mut seen = 0u32;
    for &node in order {
        if node.index() >= spec.len() {
            return Err(FitError::InvalidOrder);
        }
        let parents = spec.parents(node).iter().fold(0u32, |m, p| m | p.bit());
        if seen & node.bit() != 0 || parents & !seen != 0 {
            return Err(FitError::InvalidOrder);
        }
        seen |= node.bit();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::Scope;

    fn t1() -> NetworkSpec {
        NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"},
                {"name": "B", "role": "behavior"}],
                "edges": [["V", "A"], ["V", "B"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap()
    }

    fn trivial() -> ParentGivenValueTable {
        ParentGivenValueTable::from_conditionals(Scope::new(vec![]), vec![1.0], vec![1.0]).unwrap()
    }

    fn observed(spec: &NetworkSpec, probs: Vec<f64>) -> JointTable {
        JointTable::new(spec.observed_scope(), probs, 0).unwrap()
    }

    #[test]
    fn t1_pipeline_recovers_factors() {
        let spec = t1();
        let m = fit_model(&spec, &observed(&spec, vec![0.34, 0.46, 0.16, 0.04]), &trivial(), &FitOptions::default())
            .unwrap();
        let b = m.cpt(spec.id("B").unwrap()).entries();
        assert!((b[0].raw - 0.2).abs() < 1e-12 && (b[1].raw - 0.8).abs() < 1e-12);
        let a = m.cpt(spec.anchor()).entries();
        assert!((a[0].raw - 0.4).abs() < 1e-12 && a[1].raw == 0.0);
        assert_eq!(m.report().total_clamped, 0);
        assert_eq!(m.report().nodes[2].provenance, Provenance::MatrixAdjustment);
    }

    #[test]
    fn independent_factor_is_a_conditional_frequency() {
        let spec = NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"},
                {"name": "X", "role": "behavior"}, {"name": "Y", "role": "behavior"}],
                "edges": [["V", "A"], ["V", "X"], ["X", "Y"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap();
        // (A, X, Y): X=1 in 40 of 100 events, Y=1 in 30 of those; X=0 never has Y=1
        let counts = [30.0, 0.0, 5.0, 20.0, 30.0, 0.0, 5.0, 10.0];
        let table = observed(&spec, counts.iter().map(|c| c / 100.0).collect());
        let y = spec.id("Y").unwrap();
        let cpt = fit_independent_factor(y, &table, &spec).unwrap();
        assert_eq!(cpt.entries()[0].raw, 0.0);
        assert!((cpt.entries()[1].raw - 0.75).abs() < 1e-12);
        assert!(matches!(
            fit_independent_factor(spec.id("X").unwrap(), &table, &spec),
            Err(FitError::HasLatentParent { .. })
        ));

        let never = observed(&spec, vec![0.5, 0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0]);
        assert_eq!(fit_independent_factor(y, &never, &spec).unwrap().entries()[1], CptEntry::unidentified());
    }

    #[test]
    fn value_insensitive_anchor_fails_naming_context() {
        let spec = t1();
        // the anchor never fires, so both anchor rows are zero
        let err = fit_model(&spec, &observed(&spec, vec![0.5, 0.5, 0.0, 0.0]), &trivial(), &FitOptions::default())
            .unwrap_err();
        assert!(matches!(err, FitError::ValueInsensitive { .. }), "{err}");
        assert_eq!(err.step(), FitStep::ValueDependentFactors);
        assert!(err.to_string().contains("{}"), "{err}");
    }

    #[test]
    fn rejects_non_topological_order() {
        let spec = t1();
        let obs = observed(&spec, vec![0.34, 0.46, 0.16, 0.04]);
        let order: Vec<NodeId> = spec.topological_order().iter().rev().copied().collect();
        let err = fit_model_with_order(&spec, &obs, &trivial(), &FitOptions::default(), &order).unwrap_err();
        assert_eq!(err, FitError::InvalidOrder);
        let bad_prior = FitOptions { prior_v: 1.5, ..FitOptions::default() };
        assert_eq!(fit_model(&spec, &obs, &trivial(), &bad_prior).unwrap_err().step(), FitStep::Prior);
    }

    #[test]
    fn model_document_round_trips() {
        let spec = t1();
        let m = fit_model(&spec, &observed(&spec, vec![0.34, 0.46, 0.16, 0.04]), &trivial(), &FitOptions::default())
            .unwrap();
        let text = m.to_json();
        let back = FittedModel::parse(&text).unwrap();
        assert_eq!(back.cpts(), m.cpts());
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn tolerance_widens_with_sampling() {
        assert_eq!(consistency_tolerance_for(0), EXACT_CONSISTENCY_TOLERANCE);
        assert!(consistency_tolerance_for(1_000_000) > 5e-3);
    }
}
