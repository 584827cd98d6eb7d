use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::cpt::{Cpt, CptEntry, EntryFlag, Provenance};
use super::report::FitReport;
use crate::assignment::{Assignment, NodeId, Scope};
use crate::network::{NetworkDocument, NetworkSpec, SpecError};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("model network: {0}")]
    Network(#[from] SpecError),
    #[error("model does not define a factor for {0}")]
    MissingFactor(String),
    #[error("model defines two factors for {0}")]
    DuplicateFactor(String),
    #[error("factor for {node}: {reason}")]
    InvalidFactor { node: String, reason: String },
    #[error("prior P(V=1) = {0} is not a probability")]
    InvalidPrior(f64),
}

/// A network with one factor per node. Immutable once built; inference
/// multiplies the raw factor values.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    spec: NetworkSpec,
    prior_v: f64,
    cpts: Vec<Cpt>,
    report: FitReport,
}

impl FittedModel {
    pub(super) fn assemble(spec: NetworkSpec, prior_v: f64, cpts: Vec<Cpt>, report: FitReport) -> Self {
        FittedModel {
            spec,
            prior_v,
            cpts,
            report,
        }
    }

    /// Builds a model from explicit factors (in any order, one per node).
    /// The factor for the latent node, if given, must agree with `prior_v`.
    pub fn from_cpts(spec: NetworkSpec, prior_v: f64, cpts: Vec<Cpt>) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&prior_v) {
            return Err(ModelError::InvalidPrior(prior_v));
        }
        let latent = spec.latent();
        let mut slots: Vec<Option<Cpt>> = vec![None; spec.len()];
        slots[latent.index()] = Some(Cpt::new(
            latent,
            Vec::new(),
            vec![CptEntry::exact(prior_v)],
            Provenance::Prior,
        ));
        for cpt in cpts {
            let node = cpt.node();
            let name = || spec.name(node).to_owned();
            if node.index() >= spec.len() {
                return Err(ModelError::MissingFactor(format!("node #{}", node.index())));
            }
            if cpt.parents() != spec.parents(node) {
                return Err(ModelError::InvalidFactor {
                    node: name(),
                    reason: "parents differ from the network".into(),
                });
            }
            if node == latent {
                if cpt.entries()[0].raw != prior_v {
                    return Err(ModelError::InvalidFactor {
                        node: name(),
                        reason: "disagrees with the prior".into(),
                    });
                }
                continue;
            }
            if slots[node.index()].replace(cpt).is_some() {
                return Err(ModelError::DuplicateFactor(name()));
            }
        }
        let mut out = Vec::with_capacity(spec.len());
        for (i, slot) in slots.into_iter().enumerate() {
            out.push(slot.ok_or_else(|| ModelError::MissingFactor(spec.names()[i].clone()))?);
        }
        Ok(FittedModel {
            spec,
            prior_v,
            cpts: out,
            report: FitReport::default(),
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn prior_v(&self) -> f64 {
        self.prior_v
    }

    /// Factors in declaration order.
    pub fn cpts(&self) -> &[Cpt] {
        &self.cpts
    }

    pub fn cpt(&self, node: NodeId) -> &Cpt {
        &self.cpts[node.index()]
    }

    pub fn report(&self) -> &FitReport {
        &self.report
    }

    /// The same model with every factor clamped into `[0, 1]`.
    pub fn with_clamped_factors(&self) -> FittedModel {
        FittedModel {
            cpts: self.cpts.iter().map(Cpt::clamped).collect(),
            ..self.clone()
        }
    }

    pub fn to_document(&self) -> ModelDocument {
        let cpts = self
            .cpts
            .iter()
            .map(|cpt| CptDocument {
                node: self.spec.name(cpt.node()).to_owned(),
                parents: cpt
                    .parents()
                    .iter()
                    .map(|&p| self.spec.name(p).to_owned())
                    .collect(),
                provenance: cpt.provenance(),
                entries: cpt
                    .entries()
                    .iter()
                    .enumerate()
                    .map(|(i, e)| EntryDocument {
                        context: self.spec.named(&cpt.scope().assignment(i)),
                        p: e.value,
                        raw: e.raw,
                        flag: e.flag,
                    })
                    .collect(),
            })
            .collect();
        ModelDocument {
            network: self.spec.to_document(),
            prior_v: self.prior_v,
            cpts,
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_document()).expect("model serializes");
        text.push('\n');
        text
    }

    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let doc: ModelDocument =
            serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &ModelDocument) -> Result<Self, ModelError> {
        let spec = NetworkSpec::from_document(&doc.network)?;
        let mut cpts = Vec::with_capacity(doc.cpts.len());
        for c in &doc.cpts {
            let node = spec.require(&c.node)?;
            let invalid = |reason: String| ModelError::InvalidFactor {
                node: c.node.clone(),
                reason,
            };
            let parents = c
                .parents
                .iter()
                .map(|p| spec.require(p))
                .collect::<Result<Vec<_>, _>>()?;
            let scope = Scope::new(parents.clone());
            if c.entries.len() != scope.cells() {
                return Err(invalid(format!(
                    "{} entries for {} parent assignments",
                    c.entries.len(),
                    scope.cells()
                )));
            }
            let mut entries = vec![None; scope.cells()];
            for e in &c.entries {
                let mut context = Assignment::empty();
                for (name, &v) in &e.context {
                    if v > 1 {
                        return Err(invalid(format!("non-binary context value for {name}")));
                    }
                    context.set(spec.require(name)?, v == 1);
                }
                let index = scope
                    .index_of_assignment(&context)
                    .ok_or_else(|| invalid("context does not cover the parents".into()))?;
                if !(0.0..=1.0).contains(&e.p) || !e.raw.is_finite() {
                    return Err(invalid(format!("entry {} out of range", e.p)));
                }
                if entries[index]
                    .replace(CptEntry {
                        value: e.p,
                        raw: e.raw,
                        flag: e.flag,
                    })
                    .is_some()
                {
                    return Err(invalid("repeated context".into()));
                }
            }
            let entries = entries.into_iter().collect::<Option<Vec<_>>>().expect("one per context");
            cpts.push(Cpt::new(node, parents, entries, c.provenance));
        }
        Self::from_cpts(spec, doc.prior_v, cpts)
    }
}

/// Serialized form of a fitted model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelDocument {
    pub network: NetworkDocument,
    pub prior_v: f64,
    pub cpts: Vec<CptDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CptDocument {
    pub node: String,
    pub parents: Vec<String>,
    pub provenance: Provenance,
    pub entries: Vec<EntryDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntryDocument {
    pub context: BTreeMap<String, u8>,
    pub p: f64,
    pub raw: f64,
    pub flag: EntryFlag,
}
