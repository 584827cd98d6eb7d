use serde::{Deserialize, Serialize};

use crate::assignment::{Assignment, NodeId, Scope};
use crate::estimation::ROUNDING_SLACK;

/// Which identification step produced a factor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Prior,
    AnchorSolve,
    Empirical,
    MatrixAdjustment,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryFlag {
    Ok,
    Clamped,
    Unidentified,
}

/// One CPT cell: `P(node = 1 | parents = context)`.
///
/// `raw` is the value the identification algebra produced and is what
/// inference multiplies; `value` is `raw` clamped into `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CptEntry {
    pub value: f64,
    pub raw: f64,
    pub flag: EntryFlag,
}

impl CptEntry {
    /// Entry for an identified raw value. Rounding-level excursions are
    /// snapped without a flag.
    pub fn from_raw(raw: f64) -> Self {
        let value = raw.clamp(0.0, 1.0);
        let flag = if (raw - value).abs() > ROUNDING_SLACK {
            EntryFlag::Clamped
        } else {
            EntryFlag::Ok
        };
        CptEntry { value, raw, flag }
    }

    /// Convention for contexts with no identifying mass.
    pub fn unidentified() -> Self {
        CptEntry {
            value: 0.5,
            raw: 0.5,
            flag: EntryFlag::Unidentified,
        }
    }

    pub fn exact(p: f64) -> Self {
        CptEntry {
            value: p,
            raw: p,
            flag: EntryFlag::Ok,
        }
    }
}

/// A conditional probability table for one binary node, one entry per
/// assignment of its parents (lexicographic in declaration order).
#[derive(Debug, Clone, PartialEq)]
pub struct Cpt {
    node: NodeId,
    scope: Scope,
    entries: Vec<CptEntry>,
    provenance: Provenance,
}

impl Cpt {
    pub fn new(
        node: NodeId,
        parents: Vec<NodeId>,
        entries: Vec<CptEntry>,
        provenance: Provenance,
    ) -> Self {
        let scope = Scope::new(parents);
        assert_eq!(entries.len(), scope.cells(), "one CPT entry per parent assignment");
        debug_assert!(entries.iter().all(|e| (0.0..=1.0).contains(&e.value)));
        Cpt {
            node,
            scope,
            entries,
            provenance,
        }
    }

    pub fn node(&self) -> NodeId {
        self.node
    }

    pub fn parents(&self) -> &[NodeId] {
        self.scope.nodes()
    }

    pub fn scope(&self) -> &Scope {
        &self.scope
    }

    pub fn entries(&self) -> &[CptEntry] {
        &self.entries
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn entry(&self, context: &Assignment) -> Option<&CptEntry> {
        self.scope
            .index_of_assignment(context)
            .map(|i| &self.entries[i])
    }

    /// Entry selected by a packed state covering the parents.
    pub fn entry_at(&self, state: u32) -> &CptEntry {
        &self.entries[self.scope.index_of(state)]
    }

    pub fn count(&self, flag: EntryFlag) -> usize {
        self.entries.iter().filter(|e| e.flag == flag).count()
    }

    /// Copy whose raw values are replaced by the clamped ones.
    pub fn clamped(&self) -> Cpt {
        Cpt {
            entries: self
                .entries
                .iter()
                .map(|e| CptEntry { raw: e.value, ..*e })
                .collect(),
            ..self.clone()
        }
    }
}
