//! The anchor factor `P(A | Pa(A))`.
//!
//! For each realization `w` of `Pa_{-V}(A)` the four cells
//! `p[a][v] = P(w, A=a, V=v)` are tied to the given distributions by
//!
//! ```text
//! P(w, A=0) = p00 + p01        P(w, V=0) = p00 + p10
//! P(w, A=1) = p10 + p11        P(w, V=1) = p01 + p11
//! ```
//!
//! and one-sided conditional independence pins
//! `p11 = P(A=1) P(w | A=1) P(V=1 | A=1) = P(w, A=1) P(V=1 | A=1)`.
//! The remaining cells come from the `A=1` and `V` rows; the `A=0` row is
//! the consistency check.

use super::cpt::{Cpt, CptEntry, EntryFlag, Provenance};
use super::report::{AnchorContextReport, FitStep, SensitivityViolation};
use super::FitError;
use crate::assignment::Scope;
use crate::estimation::{ParentGivenValueTable, ROUNDING_SLACK};
use crate::network::NetworkSpec;
use crate::table::JointTable;

/// Denominators at or below this leave a CPT entry unidentified.
pub const DEGENERATE_DENOMINATOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct AnchorSolution {
    pub cpt: Cpt,
    pub contexts: Vec<AnchorContextReport>,
}

/// Solves the anchor factor. `anchor_marginals` may be any table whose scope
/// contains `Pa_{-V}(A)` and `A`.
pub fn solve_anchor_factor(
    parent_given_value: &ParentGivenValueTable,
    anchor_marginals: &JointTable,
    prior_v: f64,
    value_given_anchor: f64,
    spec: &NetworkSpec,
    consistency_tolerance: f64,
) -> Result<AnchorSolution, FitError> {
    let anchor = spec.anchor();
    let context = spec.anchor_context();
    if parent_given_value.scope().nodes() != context.as_slice() {
        return Err(FitError::ContextScope);
    }
    let mut keep = context.clone();
    keep.push(anchor);
    let marginal = anchor_marginals
        .marginalize(&keep)
        .map_err(|_| FitError::ObservedScope {
            step: FitStep::AnchorFactor,
        })?;

    let w_scope = Scope::new(context);
    let parents = Scope::new(spec.parents(anchor).to_vec());
    let latent_bit = 1u32 << spec.latent().index();
    let prior = [1.0 - prior_v, prior_v];
    let mut entries = vec![CptEntry::unidentified(); parents.cells()];
    let mut contexts = Vec::with_capacity(w_scope.cells());

    for w in 0..w_scope.cells() {
        let state = w_scope.state_of(w);
        let with_anchor = marginal.prob_of_state(state | (1 << anchor.index()));
        let without_anchor = marginal.prob_of_state(state);
        let mass = with_anchor + without_anchor;
        let by_value = [
            parent_given_value.prob(w, false) * prior[0],
            parent_given_value.prob(w, true) * prior[1],
        ];

        let p11 = with_anchor * value_given_anchor;
        let p10 = with_anchor - p11;
        let p01 = by_value[1] - p11;
        let p00 = by_value[0] - p10;
        let residual = without_anchor - (p00 + p01);
        let label = spec.display(&w_scope.assignment(w));
        if residual.abs() > consistency_tolerance {
            return Err(FitError::Inconsistent {
                context: label,
                residual,
                tolerance: consistency_tolerance,
            });
        }

        let joint = [[p00, p01], [p10, p11]];
        let mut solved = [CptEntry::unidentified(); 2];
        if mass > 0.0 {
            for (v, slot) in solved.iter_mut().enumerate() {
                *slot = anchor_entry(joint[0][v], joint[1][v]);
            }
        }
        for (v, entry) in solved.iter().enumerate() {
            let cell_state = if v == 1 { state | latent_bit } else { state };
            entries[parents.index_of(cell_state)] = *entry;
        }
        contexts.push(AnchorContextReport {
            context: spec.named(&w_scope.assignment(w)),
            mass,
            joint,
            residual,
            determinant: solved[1].raw - solved[0].raw,
        });
    }

    Ok(AnchorSolution {
        cpt: Cpt::new(anchor, parents.nodes().to_vec(), entries, Provenance::AnchorSolve),
        contexts,
    })
}

/// `P(A=1 | w, V=v) = p1 / (p0 + p1)`; negative cells are clamped to zero
/// for the clamped value.
fn anchor_entry(p0: f64, p1: f64) -> CptEntry {
    let raw_denominator = p0 + p1;
    let clip = |p: f64| (p.max(0.0), p < -ROUNDING_SLACK);
    let (c0, clipped0) = clip(p0);
    let (c1, clipped1) = clip(p1);
    let denominator = c0 + c1;
    if denominator <= DEGENERATE_DENOMINATOR || raw_denominator.abs() <= DEGENERATE_DENOMINATOR {
        return CptEntry::unidentified();
    }
    let raw = p1 / raw_denominator;
    let value = (c1 / denominator).clamp(0.0, 1.0);
    let flag = if clipped0 || clipped1 || (raw - value).abs() > ROUNDING_SLACK {
        EntryFlag::Clamped
    } else {
        EntryFlag::Ok
    };
    CptEntry { value, raw, flag }
}

/// Realizations `w` where `|P(A=1|w,V=1) - P(A=1|w,V=0)| < delta`.
pub fn value_sensitivity_check(
    cpt_a: &Cpt,
    delta: f64,
    spec: &NetworkSpec,
) -> Vec<SensitivityViolation> {
    let context = spec.anchor_context();
    let w_scope = Scope::new(context);
    let latent_bit = 1u32 << spec.latent().index();
    (0..w_scope.cells())
        .filter_map(|w| {
            let state = w_scope.state_of(w);
            let low = cpt_a.entry_at(state);
            let high = cpt_a.entry_at(state | latent_bit);
            let gap = (high.raw - low.raw).abs();
            (gap < delta).then(|| SensitivityViolation {
                context: spec.named(&w_scope.assignment(w)),
                gap,
                unidentified: low.flag == EntryFlag::Unidentified
                    || high.flag == EntryFlag::Unidentified,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::NodeId;

    fn t1() -> NetworkSpec {
        NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"},
                {"name": "B", "role": "behavior"}],
                "edges": [["V", "A"], ["V", "B"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap()
    }

    fn t1_observed() -> JointTable {
        JointTable::new(Scope::new(vec![NodeId(1), NodeId(2)]), vec![0.34, 0.46, 0.16, 0.04], 0)
            .unwrap()
    }

    fn trivial_context() -> ParentGivenValueTable {
        ParentGivenValueTable::from_conditionals(Scope::new(vec![]), vec![1.0], vec![1.0]).unwrap()
    }

    #[test]
    fn t1_anchor_solve() {
        // P(A=1) = 0.2, prior 0.5, eps 0: p11 = 0, p10 = 0.2, p01 = 0.5,
        // p00 = 0.3, so P(A=1|V=1) = 0 and P(A=1|V=0) = 0.2 / 0.5 = 0.4
        let spec = t1();
        let sol = solve_anchor_factor(&trivial_context(), &t1_observed(), 0.5, 0.0, &spec, 1e-6)
            .unwrap();
        let v = spec.latent();
        let low = sol.cpt.entry(&crate::assignment::Assignment::empty().with(v, false)).unwrap();
        let high = sol.cpt.entry(&crate::assignment::Assignment::empty().with(v, true)).unwrap();
        assert!((low.raw - 0.4).abs() < 1e-15);
        assert_eq!(high.raw, 0.0);
        assert_eq!((low.flag, high.flag), (EntryFlag::Ok, EntryFlag::Ok));
        let report = &sol.contexts[0];
        assert!(report.residual.abs() < 1e-15);
        assert!((report.determinant + 0.4).abs() < 1e-15);

        assert!(value_sensitivity_check(&sol.cpt, 1e-8, &spec).is_empty());
    }

    #[test]
    fn negative_cells_are_clamped() {
        let spec = t1();
        let observed = JointTable::new(
            Scope::new(vec![NodeId(1), NodeId(2)]),
            vec![0.1, 0.1, 0.4, 0.4],
            0,
        )
        .unwrap();
        // P(A=1) = 0.8 > P(V=0) = 0.5: p00 = 0.5 - 0.8 < 0
        let sol = solve_anchor_factor(&trivial_context(), &observed, 0.5, 0.0, &spec, 1e-6).unwrap();
        let low = sol.cpt.entries()[0];
        assert_eq!(low.flag, EntryFlag::Clamped);
        assert_eq!(low.value, 1.0);
        assert!((low.raw - 1.6).abs() < 1e-12);
    }

    #[test]
    fn inconsistent_inputs_fail() {
        let spec = context_spec();
        let observed = JointTable::new(
            Scope::new(vec![NodeId(1), NodeId(2)]),
            vec![0.4, 0.1, 0.4, 0.1],
            0,
        )
        .unwrap();
        // P(X=1) = 0.5 observed, but P(X=1|V) = 0.1 for both values
        let pgv = ParentGivenValueTable::from_conditionals(
            Scope::new(vec![NodeId(1)]),
            vec![0.9, 0.1],
            vec![0.9, 0.1],
        )
        .unwrap();
        let err = solve_anchor_factor(&pgv, &observed, 0.5, 0.0, &spec, 1e-6).unwrap_err();
        assert!(matches!(err, FitError::Inconsistent { .. }), "{err}");
        assert!(solve_anchor_factor(&pgv, &observed, 0.5, 0.0, &spec, 0.5).is_ok());
    }

    fn context_spec() -> NetworkSpec {
        NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "X", "role": "behavior"},
                {"name": "A", "role": "anchor"}],
                "edges": [["V", "A"], ["X", "A"], ["V", "X"]],
                "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap()
    }

    #[test]
    fn zero_mass_context_is_unidentified() {
        let spec = context_spec();
        // X is never 1
        let observed = JointTable::new(
            Scope::new(vec![NodeId(1), NodeId(2)]),
            vec![0.8, 0.2, 0.0, 0.0],
            0,
        )
        .unwrap();
        let pgv = ParentGivenValueTable::from_conditionals(
            Scope::new(vec![NodeId(1)]),
            vec![1.0, 0.0],
            vec![1.0, 0.0],
        )
        .unwrap();
        let sol = solve_anchor_factor(&pgv, &observed, 0.5, 0.0, &spec, 1e-6).unwrap();
        // parents (V, X): cells V0X0, V0X1, V1X0, V1X1
        let e = sol.cpt.entries();
        assert_eq!(e[1], CptEntry::unidentified());
        assert_eq!(e[3], CptEntry::unidentified());
        assert!((e[0].raw - 0.4).abs() < 1e-15);
        assert_eq!(e[2].raw, 0.0);
        let violations = value_sensitivity_check(&sol.cpt, 1e-8, &spec);
        assert_eq!(violations.len(), 1);
        assert!(violations[0].unidentified);
    }

    #[test]
    fn equal_rows_violate_sensitivity() {
        let spec = t1();
        let cpt = Cpt::new(
            spec.anchor(),
            vec![spec.latent()],
            vec![CptEntry::exact(0.3), CptEntry::exact(0.3)],
            Provenance::AnchorSolve,
        );
        let v = value_sensitivity_check(&cpt, 1e-8, &spec);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].gap, 0.0);
    }

    #[test]
    fn epsilon_zero_forces_zero_high_entry() {
        let spec = t1();
        for pa1 in [0.05, 0.2, 0.45] {
            let observed = JointTable::new(
                Scope::new(vec![NodeId(1), NodeId(2)]),
                vec![(1.0 - pa1) / 2.0, (1.0 - pa1) / 2.0, pa1 / 2.0, pa1 / 2.0],
                0,
            )
            .unwrap();
            let sol = solve_anchor_factor(&trivial_context(), &observed, 0.5, 0.0, &spec, 1e-6)
                .unwrap();
            assert_eq!(sol.cpt.entries()[1].raw, 0.0);
        }
    }
}
