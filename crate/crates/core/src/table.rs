//! Dense probability tables over binary scopes.

use thiserror::Error;

use crate::assignment::{Assignment, NodeId, Scope};

/// Tolerance on the total mass of a probability table.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TableError {
    #[error("table has {got} cells, scope of {scope_len} nodes needs {expected}")]
    Shape {
        scope_len: usize,
        expected: usize,
        got: usize,
    },
    #[error("negative or non-finite probability {value} in cell {cell}")]
    InvalidEntry { cell: usize, value: f64 },
    #[error("probabilities sum to {0}, not 1")]
    NotNormalized(f64),
    #[error("marginalization target is not a subset of the table scope")]
    NotSubset,
}

/// A probability per full binary assignment of `scope`.
#[derive(Debug, Clone, PartialEq)]
pub struct JointTable {
    scope: Scope,
    probs: Vec<f64>,
    total_count: u64,
}

impl JointTable {
    /// `total_count` is the number of events behind an empirical table, or 0
    /// for an analytic one.
    pub fn new(scope: Scope, probs: Vec<f64>, total_count: u64) -> Result<Self, TableError> {
        if probs.len() != scope.cells() {
            return Err(TableError::Shape {
                scope_len: scope.len(),
                expected: scope.cells(),
                got: probs.len(),
            });
        }
        if let Some((cell, &value)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !p.is_finite() || **p < 0.0)
        {
            return Err(TableError::InvalidEntry { cell, value });
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(TableError::NotNormalized(sum));
        }
        Ok(JointTable {
            scope,
            probs,
            total_count,
        })
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    /// Cell probabilities in lexicographic scope order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    pub fn is_analytic(&self) -> bool {
        self.total_count == 0
    }

    /// Probability of an assignment over exactly this table's scope.
    pub fn prob(&self, assignment: &Assignment) -> Option<f64> {
        if assignment.scope_mask() != self.scope.mask() {
            return None;
        }
        Some(self.probs[self.scope.index_of(assignment.values_mask())])
    }

    pub fn prob_of_state(&self, state: u32) -> f64 {
        self.probs[self.scope.index_of(state)]
    }

    pub fn iter(&self) -> impl Iterator<Item = (Assignment, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.scope.assignment(i), p))
    }

    /// Cells as `(packed state, probability)`.
    pub fn states(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.probs
            .iter()
            .enumerate()
            .map(|(i, &p)| (self.scope.state_of(i), p))
    }

    /// Sums out every node not in `keep`. The result's scope lists the kept
    /// nodes in this table's scope order.
    pub fn marginalize(&self, keep: &[NodeId]) -> Result<JointTable, TableError> {
        if keep.iter().any(|&n| !self.scope.contains(n)) {
            return Err(TableError::NotSubset);
        }
        let kept: Vec<NodeId> = self
            .scope
            .nodes()
            .iter()
            .copied()
            .filter(|n| keep.contains(n))
            .collect();
        let target = Scope::new(kept);
        let mut probs = vec![0.0; target.cells()];
        for (state, p) in self.states() {
            probs[target.index_of(state)] += p;
        }
        Ok(JointTable {
            scope: target,
            probs,
            total_count: self.total_count,
        })
    }

    /// Probability of the event `assignment` (any subset of the scope).
    pub fn event_probability(&self, assignment: &Assignment) -> f64 {
        self.states()
            .filter(|(s, _)| assignment.restrict(self.scope.mask()).agrees_with(*s))
            .map(|(_, p)| p)
            .sum()
    }
}
