//! Two-dataset estimate of `P(Pa_{-V}(A) | V)`.
//!
//! A randomized-exposure dataset and an algorithmic-exposure dataset are
//! assumed to share `P(A, B | V)` and differ only in their value prior
//! (`p_R < p_C`). Each anchor-context realization `w` then satisfies
//!
//! ```text
//! P_R(w) = q1(w) p_R + q0(w) (1 - p_R)
//! P_C(w) = q1(w) p_C + q0(w) (1 - p_C)
//! ```
//!
//! which is solved for `q_v(w) = P(w | V = v)`.

use serde::Serialize;
use thiserror::Error;

use crate::assignment::{Assignment, Scope};
use crate::network::NetworkSpec;
use crate::table::{JointTable, TableError};

/// Values within this distance outside `[0, 1]` are rounding, not clamps.
pub const ROUNDING_SLACK: f64 = 1e-12;

/// Tolerance on each `v`-column of a [`ParentGivenValueTable`].
pub const COLUMN_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error("singular dataset priors: p_R = p_C = {0}")]
    SingularPriors(f64),
    #[error("dataset priors must satisfy 0 <= p_R < p_C <= 1, got p_R = {randomized}, p_C = {algorithmic}")]
    InvalidPriors { randomized: f64, algorithmic: f64 },
    #[error("{which} table does not cover the anchor context: {source}")]
    Scope {
        which: &'static str,
        #[source]
        source: TableError,
    },
    #[error("every estimated entry fell outside [0, 1]; the two-dataset estimate is meaningless")]
    AllClamped { diagnostics: Vec<ClampDiagnostic> },
    #[error("estimated column for V={value} has no mass after clamping")]
    EmptyColumn { value: u8 },
    #[error("invalid conditional table: {0}")]
    InvalidTable(String),
}

/// Value priors of the randomized and algorithmic datasets.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DatasetPriors {
    randomized: f64,
    algorithmic: f64,
}

impl DatasetPriors {
    pub fn new(randomized: f64, algorithmic: f64) -> Result<Self, EstimationError> {
        let in_unit = |p: f64| (0.0..=1.0).contains(&p);
        if !in_unit(randomized) || !in_unit(algorithmic) {
            return Err(EstimationError::InvalidPriors {
                randomized,
                algorithmic,
            });
        }
        if randomized == algorithmic {
            return Err(EstimationError::SingularPriors(randomized));
        }
        if randomized > algorithmic {
            return Err(EstimationError::InvalidPriors {
                randomized,
                algorithmic,
            });
        }
        Ok(DatasetPriors {
            randomized,
            algorithmic,
        })
    }

    pub fn randomized(&self) -> f64 {
        self.randomized
    }

    pub fn algorithmic(&self) -> f64 {
        self.algorithmic
    }
}

impl Default for DatasetPriors {
    fn default() -> Self {
        DatasetPriors {
            randomized: 0.0,
            algorithmic: 0.5,
        }
    }
}

/// A raw solution that had to be clamped into `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClampDiagnostic {
    #[serde(skip)]
    pub context: Assignment,
    pub context_label: String,
    pub value: u8,
    pub raw: f64,
    pub clamped: f64,
}

/// `P(Pa_{-V}(A) = w | V = v)` for every realization `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParentGivenValueTable {
    scope: Scope,
    columns: [Vec<f64>; 2],
    raw: [Vec<f64>; 2],
    diagnostics: Vec<ClampDiagnostic>,
    sample_size: u64,
}

impl ParentGivenValueTable {
    /// Builds a table from known conditionals (`given_low[w] = P(w | V=0)`).
    pub fn from_conditionals(
        scope: Scope,
        given_low: Vec<f64>,
        given_high: Vec<f64>,
    ) -> Result<Self, EstimationError> {
        for (v, col) in [&given_low, &given_high].into_iter().enumerate() {
            if col.len() != scope.cells() {
                return Err(EstimationError::InvalidTable(format!(
                    "column V={v} has {} cells, expected {}",
                    col.len(),
                    scope.cells()
                )));
            }
            if col.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(EstimationError::InvalidTable(format!(
                    "column V={v} has entries outside [0, 1]"
                )));
            }
            let sum: f64 = col.iter().sum();
            if (sum - 1.0).abs() > COLUMN_TOLERANCE {
                return Err(EstimationError::InvalidTable(format!(
                    "column V={v} sums to {sum}"
                )));
            }
        }
        Ok(ParentGivenValueTable {
            scope,
            raw: [given_low.clone(), given_high.clone()],
            columns: [given_low, given_high],
            diagnostics: Vec::new(),
            sample_size: 0,
        })
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    /// `P(w | V = value)` for cell index `w`.
    pub fn prob(&self, w: usize, value: bool) -> f64 {
        self.columns[usize::from(value)][w]
    }

    /// Unclamped solution of the mixture equations.
    pub fn raw(&self, w: usize, value: bool) -> f64 {
        self.raw[usize::from(value)][w]
    }

    pub fn diagnostics(&self) -> &[ClampDiagnostic] {
        &self.diagnostics
    }

    /// Smallest event count behind the inputs (0 when all were analytic).
    pub fn sample_size(&self) -> u64 {
        self.sample_size
    }
}

/// Solves the mixture equations for every anchor-context realization, clamps
/// solutions into `[0, 1]` and renormalizes each `v`-column.
pub fn estimate_parent_given_value(
    randomized: &JointTable,
    algorithmic: &JointTable,
    priors: &DatasetPriors,
    spec: &NetworkSpec,
) -> Result<ParentGivenValueTable, EstimationError> {
    let context = spec.anchor_context();
    let marg = |table: &JointTable, which| {
        table
            .marginalize(&context)
            .map_err(|source| EstimationError::Scope { which, source })
    };
    let r = marg(randomized, "randomized")?;
    let c = marg(algorithmic, "algorithmic")?;
    // both marginals list the context in the tables' scope order; reindex to
    // declaration order
    let scope = Scope::new(context);
    let (p_r, p_c) = (priors.randomized, priors.algorithmic);
    let gap = p_c - p_r;
    if gap == 0.0 {
        return Err(EstimationError::SingularPriors(p_r));
    }

    let cells = scope.cells();
    let (low, high): (Vec<f64>, Vec<f64>) = (0..cells)
        .map(|w| {
            let state = scope.state_of(w);
            let (pr, pc) = (r.prob_of_state(state), c.prob_of_state(state));
            let diff = (pc - pr) / gap;
            let low = pr - p_r * diff;
            (low, low + diff)
        })
        .unzip();
    let raw = [low, high];

    let mut diagnostics = Vec::new();
    let mut columns = raw.clone();
    for (v, col) in columns.iter_mut().enumerate() {
        for (w, q) in col.iter_mut().enumerate() {
            let clamped = q.clamp(0.0, 1.0);
            if (*q - clamped).abs() > ROUNDING_SLACK {
                diagnostics.push(ClampDiagnostic {
                    context: scope.assignment(w),
                    context_label: spec.display(&scope.assignment(w)),
                    value: v as u8,
                    raw: *q,
                    clamped,
                });
            }
            *q = clamped;
        }
    }
    if diagnostics.len() == 2 * cells {
        return Err(EstimationError::AllClamped { diagnostics });
    }
    for (v, col) in columns.iter_mut().enumerate() {
        let sum: f64 = col.iter().sum();
        if sum <= 0.0 {
            return Err(EstimationError::EmptyColumn { value: v as u8 });
        }
        col.iter_mut().for_each(|q| *q /= sum);
    }

    let sample_size = [randomized.total_count(), algorithmic.total_count()]
        .into_iter()
        .filter(|&n| n > 0)
        .min()
        .unwrap_or(0);
    Ok(ParentGivenValueTable {
        scope,
        columns,
        raw,
        diagnostics,
        sample_size,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assignment::NodeId;

    fn spec_with_context() -> NetworkSpec {
        NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "X", "role": "behavior"},
                {"name": "A", "role": "anchor"}],
                "edges": [["V", "A"], ["X", "A"], ["V", "X"]],
                "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap()
    }

    /// Observed table over (X, A) whose X-marginal is `(1 - px, px)`.
    fn table_with_x(px: f64) -> JointTable {
        let scope = Scope::new(vec![NodeId(1), NodeId(2)]);
        let probs = vec![(1.0 - px) * 0.5, (1.0 - px) * 0.5, px * 0.5, px * 0.5];
        JointTable::new(scope, probs, 0).unwrap()
    }

    #[test]
    fn priors_validation() {
        assert_eq!(
            DatasetPriors::new(0.3, 0.3).unwrap_err().to_string(),
            "singular dataset priors: p_R = p_C = 0.3"
        );
        assert!(DatasetPriors::new(0.6, 0.3).is_err());
        assert!(DatasetPriors::new(-0.1, 0.3).is_err());
        let d = DatasetPriors::default();
        assert_eq!((d.randomized(), d.algorithmic()), (0.0, 0.5));
    }

    #[test]
    fn closed_form_for_default_priors() {
        // q0 = P_R(w), q1 = 2 P_C(w) - P_R(w)
        let spec = spec_with_context();
        let (pr, pc) = (0.3, 0.45);
        let est = estimate_parent_given_value(
            &table_with_x(pr),
            &table_with_x(pc),
            &DatasetPriors::default(),
            &spec,
        )
        .unwrap();
        assert!((est.prob(1, false) - pr).abs() < 1e-15);
        assert!((est.prob(1, true) - (2.0 * pc - pr)).abs() < 1e-15);
        assert!(est.diagnostics().is_empty());
    }

    #[test]
    fn recovers_exact_mixture() {
        let spec = spec_with_context();
        let (q0, q1) = (0.2, 0.7);
        let (p_r, p_c) = (0.1, 0.8);
        let mix = |p: f64| q1 * p + q0 * (1.0 - p);
        let priors = DatasetPriors::new(p_r, p_c).unwrap();
        let est =
            estimate_parent_given_value(&table_with_x(mix(p_r)), &table_with_x(mix(p_c)), &priors, &spec)
                .unwrap();
        assert!((est.prob(1, false) - q0).abs() < 1e-12);
        assert!((est.prob(1, true) - q1).abs() < 1e-12);
        assert!((est.prob(0, true) - (1.0 - q1)).abs() < 1e-12);
    }

    #[test]
    fn clamps_and_reports_out_of_range() {
        let spec = spec_with_context();
        // q1 = 2 * 0.9 - 0.5 = 1.3 > 1 and q1(X=0) = -0.3
        let est = estimate_parent_given_value(
            &table_with_x(0.5),
            &table_with_x(0.9),
            &DatasetPriors::default(),
            &spec,
        )
        .unwrap();
        assert_eq!(est.diagnostics().len(), 2);
        assert_eq!(est.prob(1, true), 1.0);
        assert_eq!(est.prob(0, true), 0.0);
        assert!((est.raw(1, true) - 1.3).abs() < 1e-12);
        assert!(est.diagnostics().iter().all(|d| d.value == 1));
    }

    #[test]
    fn empty_context_is_trivial() {
        let spec = NetworkSpec::parse(
            r#"{"nodes": [{"name": "V", "role": "latent"}, {"name": "A", "role": "anchor"}],
                "edges": [["V", "A"]], "anchor_polarity": "negative", "epsilon": 0}"#,
        )
        .unwrap();
        let scope = Scope::new(vec![NodeId(1)]);
        let t = JointTable::new(scope, vec![0.8, 0.2], 0).unwrap();
        let est = estimate_parent_given_value(&t, &t, &DatasetPriors::default(), &spec).unwrap();
        assert_eq!(est.scope().cells(), 1);
        assert_eq!((est.prob(0, false), est.prob(0, true)), (1.0, 1.0));
    }
}
