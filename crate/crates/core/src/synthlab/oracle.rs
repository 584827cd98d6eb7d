//! Brute-force posterior over the full ground-truth joint.
//!
//! Builds the complete `2^n` joint table from the true factor tables and
//! answers every query by direct summation. Nothing here goes through the
//! fitted-model machinery.

use thiserror::Error;

use super::{GroundTruthModel, MAX_EXACT_NODES};
use crate::assignment::Assignment;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("network has {0} nodes; the oracle enumerates at most {MAX_EXACT_NODES}")]
    TooLarge(usize),
    #[error("evidence names the latent node")]
    LatentEvidence,
    #[error("impossible evidence (probability {0:e})")]
    ImpossibleEvidence(f64),
}

#[derive(Debug, Clone)]
pub struct Oracle {
    n: usize,
    latent: usize,
    prior_v: f64,
    /// `joint[s]` for every full state `s` (bit `i` = node `i`).
    joint: Vec<f64>,
}

impl Oracle {
    pub fn new(gt: &GroundTruthModel) -> Result<Self, OracleError> {
        let n = gt.spec().len();
        if n > MAX_EXACT_NODES {
            return Err(OracleError::TooLarge(n));
        }
        let latent = gt.spec().latent().index();
        let tables: Vec<(Vec<usize>, &[f64])> = gt
            .factors()
            .iter()
            .map(|f| (f.parents.iter().map(|p| p.index()).collect(), f.p_one.as_slice()))
            .collect();
        let joint = (0..1usize << n)
            .map(|s| {
                let mut p = 1.0;
                for (node, (parents, table)) in tables.iter().enumerate() {
                    let mut row = 0;
                    for &q in parents {
                        row = row * 2 + (s >> q & 1);
                    }
                    let one = table[row];
                    p *= if s >> node & 1 == 1 { one } else { 1.0 - one };
                }
                p
            })
            .collect();
        Ok(Oracle {
            n,
            latent,
            prior_v: gt.prior_v(),
            joint,
        })
    }

    pub fn prior_v(&self) -> f64 {
        self.prior_v
    }

    /// `(P(evidence, V=0), P(evidence, V=1))`.
    fn sums(&self, evidence: &Assignment) -> Result<(f64, f64), OracleError> {
        let care = evidence.scope_mask() as usize;
        if care >> self.latent & 1 == 1 {
            return Err(OracleError::LatentEvidence);
        }
        let want = evidence.values_mask() as usize & care;
        let mut sums = (0.0, 0.0);
        for (s, &p) in self.joint.iter().enumerate() {
            if s & care == want {
                if s >> self.latent & 1 == 1 {
                    sums.1 += p;
                } else {
                    sums.0 += p;
                }
            }
        }
        Ok(sums)
    }

    pub fn evidence_probability(&self, evidence: &Assignment) -> Result<f64, OracleError> {
        self.sums(evidence).map(|(a, b)| a + b)
    }

    /// `P(V=1 | evidence)`.
    pub fn posterior(&self, evidence: &Assignment) -> Result<f64, OracleError> {
        let (low, high) = self.sums(evidence)?;
        let total = low + high;
        if total < crate::inference::IMPOSSIBLE_EVIDENCE {
            return Err(OracleError::ImpossibleEvidence(total));
        }
        Ok(high / total)
    }

    /// For every assignment of all observed nodes, in increasing packed-state
    /// order: `(state, P(state), P(V=1 | state))`. The posterior is `None`
    /// for impossible states.
    pub fn full_evidence_table(&self) -> Vec<(u32, f64, Option<f64>)> {
        let v = 1usize << self.latent;
        (0..1usize << self.n)
            .filter(|s| s & v == 0)
            .map(|s| {
                let (low, high) = (self.joint[s], self.joint[s | v]);
                let total = low + high;
                (s as u32, total, (total > 0.0).then(|| high / total))
            })
            .collect()
    }
}
