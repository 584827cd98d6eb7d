//! Matrix adjustment for factors with the latent node as a parent.
//!
//! For a node `X` with `Z = Pa_{-V}(X)` (realizations `z_1..z_m`) and each
//! anchor-context realization `w`:
//!
//! ```text
//! Q[a][i] = P(X=1, Z=z_i, w, A=a)        (observed)
//! R[a][v] = P(A=a | w, V=v)              (anchor factor)
//! S[v][i] = P(X=1, Z=z_i, w, V=v)        (unknown)
//! Q = R S,  so  S = R^-1 Q
//! ```
//!
//! Summing `S` over `w` gives `P(X=1, Z=z_i, V=v)`; dividing by
//! `P(Z=z_i, V=v)` from the already-fit ancestors gives the factor. Cells
//! where `Z=z_i` and `w` disagree on a shared node are zero by construction.

use super::anchor::DEGENERATE_DENOMINATOR;
use super::cpt::{Cpt, CptEntry, EntryFlag, Provenance};
use super::report::FitStep;
use super::FitError;
use crate::assignment::{scatter, Assignment, NodeId, Scope};
use crate::inference::MAX_ENUMERATION_NODES;
use crate::network::NetworkSpec;
use crate::table::JointTable;

/// The 2x2 system for one anchor-context realization.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjustmentWorkspace {
    pub context: Assignment,
    /// Observed `P(w)`.
    pub mass: f64,
    /// `r[a][v] = P(A=a | w, V=v)`; columns sum to one.
    pub r: [[f64; 2]; 2],
    /// `q[a][i]`.
    pub q: [Vec<f64>; 2],
    /// `s[v][i]`, absent when `w` carries no mass.
    pub s: Option<[Vec<f64>; 2]>,
    pub determinant: f64,
}

/// Builds and solves the per-`w` systems for `node`.
pub fn adjustment_workspaces(
    node: NodeId,
    observed: &JointTable,
    cpt_a: &Cpt,
    spec: &NetworkSpec,
    delta: f64,
) -> Result<Vec<AdjustmentWorkspace>, FitError> {
    let anchor = spec.anchor();
    let w_scope = Scope::new(spec.anchor_context());
    let z_scope = Scope::new(spec.parents_without_latent(node));
    let latent_bit = 1u32 << spec.latent().index();
    let node_bit = 1u32 << node.index();
    let anchor_bit = 1u32 << anchor.index();
    let m = z_scope.cells();

    let mut q = vec![[vec![0.0; m], vec![0.0; m]]; w_scope.cells()];
    let mut mass = vec![0.0; w_scope.cells()];
    for (state, p) in observed.states() {
        let w = w_scope.index_of(state);
        mass[w] += p;
        if state & node_bit != 0 {
            let a = usize::from(state & anchor_bit != 0);
            q[w][a][z_scope.index_of(state)] += p;
        }
    }

    let mut out = Vec::with_capacity(w_scope.cells());
    for (w, (q, mass)) in q.into_iter().zip(mass).enumerate() {
        let state = w_scope.state_of(w);
        let low = cpt_a.entry_at(state);
        let high = cpt_a.entry_at(state | latent_bit);
        let r = [[1.0 - low.raw, 1.0 - high.raw], [low.raw, high.raw]];
        let determinant = high.raw - low.raw;
        let context = w_scope.assignment(w);
        let s = if mass <= 0.0 {
            None
        } else {
            let collapsed = || -> Vec<f64> { q[0].iter().zip(&q[1]).map(|(a, b)| a + b).collect() };
            match (
                low.flag == EntryFlag::Unidentified,
                high.flag == EntryFlag::Unidentified,
            ) {
                // one value carries no mass at w: the whole cell belongs to the other
                (true, false) => Some([vec![0.0; m], collapsed()]),
                (false, true) => Some([collapsed(), vec![0.0; m]]),
                (low_missing, high_missing) => {
                    if low_missing && high_missing || determinant.abs() < delta {
                        return Err(FitError::ValueInsensitive {
                            step: FitStep::ValueDependentFactors,
                            node: Some(spec.name(node).to_owned()),
                            context: spec.display(&context),
                            gap: determinant.abs(),
                            delta,
                        });
                    }
                    let mut s = [vec![0.0; m], vec![0.0; m]];
                    for i in 0..m {
                        s[0][i] = (r[1][1] * q[0][i] - r[0][1] * q[1][i]) / determinant;
                        s[1][i] = (r[0][0] * q[1][i] - r[1][0] * q[0][i]) / determinant;
                    }
                    Some(s)
                }
            }
        };
        out.push(AdjustmentWorkspace {
            context,
            mass,
            r,
            q,
            s,
            determinant,
        });
    }
    Ok(out)
}

/// `P(Z=z, V=v)` for `Z = Pa_{-V}(node)`, by enumeration over the ancestral
/// closure of `Z` and `V` using already-fit factors. Indexed `[v][z]`.
pub fn value_context_marginal(
    node: NodeId,
    previously_fit: &[Cpt],
    prior_v: f64,
    spec: &NetworkSpec,
) -> Result<[Vec<f64>; 2], FitError> {
    let latent = spec.latent();
    let z = spec.parents_without_latent(node);
    let z_scope = Scope::new(z.clone());
    let closure_mask = spec.ancestors_mask(&z) | z_scope.mask() | latent.bit();
    let closure: Vec<NodeId> = spec
        .node_ids()
        .filter(|n| closure_mask & n.bit() != 0)
        .collect();
    if closure.len() > MAX_ENUMERATION_NODES {
        return Err(FitError::TooLarge(closure.len()));
    }

    let mut factors: Vec<(NodeId, &Cpt)> = Vec::with_capacity(closure.len());
    for &n in closure.iter().filter(|&&n| n != latent) {
        let cpt = previously_fit
            .iter()
            .find(|c| c.node() == n)
            .ok_or_else(|| FitError::MissingPrerequisite {
                node: spec.name(node).to_owned(),
                missing: spec.name(n).to_owned(),
            })?;
        factors.push((n, cpt));
    }

    let mut out = [vec![0.0; z_scope.cells()], vec![0.0; z_scope.cells()]];
    for k in 0..1usize << closure.len() {
        let state = scatter(k, &closure);
        let high = state & latent.bit() != 0;
        let mut weight = if high { prior_v } else { 1.0 - prior_v };
        for (n, cpt) in &factors {
            let p = cpt.entry_at(state).raw;
            weight *= if state & n.bit() != 0 { p } else { 1.0 - p };
        }
        out[usize::from(high)][z_scope.index_of(state)] += weight;
    }
    Ok(out)
}

/// Fits `P(node | Pa(node))` for a node with the latent node as a parent.
pub fn fit_value_dependent_factor(
    node: NodeId,
    observed: &JointTable,
    cpt_a: &Cpt,
    previously_fit: &[Cpt],
    prior_v: f64,
    spec: &NetworkSpec,
    delta: f64,
) -> Result<Cpt, FitError> {
    let step = FitStep::ValueDependentFactors;
    if node == spec.anchor() || node == spec.latent() {
        return Err(FitError::NotAdjustable {
            step,
            node: spec.name(node).to_owned(),
        });
    }
    if !spec.has_latent_parent(node) {
        return Err(FitError::NoLatentParent {
            step,
            node: spec.name(node).to_owned(),
        });
    }
    if observed.scope().nodes() != spec.observed().as_slice() {
        return Err(FitError::ObservedScope { step });
    }

    let workspaces = adjustment_workspaces(node, observed, cpt_a, spec, delta)?;
    let z_scope = Scope::new(spec.parents_without_latent(node));
    let mut joint = [vec![0.0; z_scope.cells()], vec![0.0; z_scope.cells()]];
    for s in workspaces.iter().filter_map(|ws| ws.s.as_ref()) {
        for v in 0..2 {
            for (acc, x) in joint[v].iter_mut().zip(&s[v]) {
                *acc += x;
            }
        }
    }
    let denominators = value_context_marginal(node, previously_fit, prior_v, spec)?;

    let parents = Scope::new(spec.parents(node).to_vec());
    let latent_bit = spec.latent().bit();
    let entries = (0..parents.cells())
        .map(|cell| {
            let state = parents.state_of(cell);
            let v = usize::from(state & latent_bit != 0);
            let i = z_scope.index_of(state);
            let d = denominators[v][i];
            if d <= DEGENERATE_DENOMINATOR {
                CptEntry::unidentified()
            } else {
                CptEntry::from_raw(joint[v][i] / d)
            }
        })
        .collect();
    Ok(Cpt::new(
        node,
        parents.nodes().to_vec(),
        entries,
        Provenance::MatrixAdjustment,
    ))
}

/// Fits `P(node | Pa(node))` for a node without the latent node as a parent,
/// directly from the observed joint.
pub fn fit_independent_factor(
    node: NodeId,
    observed: &JointTable,
    spec: &NetworkSpec,
) -> Result<Cpt, FitError> {
    let step = FitStep::IndependentFactors;
    if node == spec.latent() || spec.has_latent_parent(node) {
        return Err(FitError::HasLatentParent {
            step,
            node: spec.name(node).to_owned(),
        });
    }
    let parents = spec.parents(node).to_vec();
    let mut keep = parents.clone();
    keep.push(node);
    let marginal = observed
        .marginalize(&keep)
        .map_err(|_| FitError::ObservedScope { step })?;
    let scope = Scope::new(parents);
    let node_bit = node.bit();
    let entries = (0..scope.cells())
        .map(|cell| {
            let state = scope.state_of(cell);
            let one = marginal.prob_of_state(state | node_bit);
            let total = one + marginal.prob_of_state(state);
            if total <= 0.0 {
                CptEntry::unidentified()
            } else {
                CptEntry::from_raw(one / total)
            }
        })
        .collect();
    Ok(Cpt::new(node, scope.nodes().to_vec(), entries, Provenance::Empirical))
}
