//! Binary assignments over subsets of network nodes.
//!
//! Node values are packed into two `u32` masks indexed by [`NodeId`]: one
//! marks which nodes are assigned, the other holds their values. A "state"
//! elsewhere in the crate is the value mask of an assignment whose scope is
//! implied by context (usually the full network or its observed nodes).

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Index of a node in declaration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NodeId(pub(crate) usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }

    pub(crate) fn bit(self) -> u32 {
        1u32 << self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A partial assignment of binary values to nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Assignment {
    scope: u32,
    values: u32,
}

impl Assignment {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds an assignment over `scope_mask` from a packed state; bits of
    /// `state` outside the scope are dropped.
    pub fn from_masks(scope_mask: u32, state: u32) -> Self {
        Assignment {
            scope: scope_mask,
            values: state & scope_mask,
        }
    }

    pub fn set(&mut self, node: NodeId, value: bool) {
        self.scope |= node.bit();
        if value {
            self.values |= node.bit();
        } else {
            self.values &= !node.bit();
        }
    }

    pub fn with(mut self, node: NodeId, value: bool) -> Self {
        self.set(node, value);
        self
    }

    pub fn remove(&mut self, node: NodeId) {
        self.scope &= !node.bit();
        self.values &= !node.bit();
    }

    pub fn get(&self, node: NodeId) -> Option<bool> {
        if self.scope & node.bit() == 0 {
            None
        } else {
            Some(self.values & node.bit() != 0)
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.scope & node.bit() != 0
    }

    pub fn scope_mask(&self) -> u32 {
        self.scope
    }

    pub fn values_mask(&self) -> u32 {
        self.values
    }

    pub fn len(&self) -> usize {
        self.scope.count_ones() as usize
    }

    pub fn is_empty(&self) -> bool {
        self.scope == 0
    }

    /// Assigned nodes in declaration order.
    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        let scope = self.scope;
        (0..32usize)
            .filter(move |i| scope & (1 << i) != 0)
            .map(NodeId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (NodeId, bool)> + '_ {
        self.nodes().map(move |n| (n, self.values & n.bit() != 0))
    }

    /// True when `state` (a packed value mask) agrees with every assigned node.
    pub fn agrees_with(&self, state: u32) -> bool {
        state & self.scope == self.values
    }

    /// True when both assign some shared node differently.
    pub fn conflicts_with(&self, other: &Assignment) -> bool {
        let shared = self.scope & other.scope;
        (self.values ^ other.values) & shared != 0
    }

    /// Union of two non-conflicting assignments.
    pub fn merge(&self, other: &Assignment) -> Option<Assignment> {
        if self.conflicts_with(other) {
            return None;
        }
        Some(Assignment {
            scope: self.scope | other.scope,
            values: self.values | other.values,
        })
    }

    pub fn restrict(&self, mask: u32) -> Assignment {
        Assignment::from_masks(self.scope & mask, self.values)
    }

    /// Named view, `name -> 0|1`.
    pub fn to_named(&self, names: &[String]) -> BTreeMap<String, u8> {
        self.iter()
            .map(|(n, v)| (names[n.0].clone(), u8::from(v)))
            .collect()
    }

    /// Renders as `{A=0, B=1}` in declaration order.
    pub fn display(&self, names: &[String]) -> String {
        let parts: Vec<String> = self
            .iter()
            .map(|(n, v)| format!("{}={}", names[n.0], u8::from(v)))
            .collect();
        format!("{{{}}}", parts.join(", "))
    }
}

/// An ordered list of nodes indexing a dense table of `2^len` cells.
///
/// The first node is the most significant bit of the cell index, so cell
/// order is lexicographic over the scope.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scope {
    nodes: Vec<NodeId>,
    mask: u32,
}

impl Scope {
    pub fn new(nodes: Vec<NodeId>) -> Self {
        let mask = nodes.iter().fold(0u32, |m, n| m | n.bit());
        debug_assert_eq!(mask.count_ones() as usize, nodes.len(), "duplicate scope node");
        Scope { nodes, mask }
    }

    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn mask(&self) -> u32 {
        self.mask
    }

    /// Number of cells, `2^len`.
    pub fn cells(&self) -> usize {
        1usize << self.nodes.len()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.mask & node.bit() != 0
    }

    /// Cell index of a packed state; bits outside the scope are ignored.
    pub fn index_of(&self, state: u32) -> usize {
        self.nodes
            .iter()
            .fold(0usize, |acc, n| (acc << 1) | usize::from(state & n.bit() != 0))
    }

    /// Packed state of a cell index (bits outside the scope are zero).
    pub fn state_of(&self, index: usize) -> u32 {
        let len = self.nodes.len();
        self.nodes
            .iter()
            .enumerate()
            .filter(|(j, _)| index >> (len - 1 - j) & 1 == 1)
            .fold(0u32, |s, (_, n)| s | n.bit())
    }

    pub fn assignment(&self, index: usize) -> Assignment {
        Assignment::from_masks(self.mask, self.state_of(index))
    }

    /// Cell index of an assignment that covers the scope.
    pub fn index_of_assignment(&self, assignment: &Assignment) -> Option<usize> {
        if assignment.scope_mask() & self.mask != self.mask {
            return None;
        }
        Some(self.index_of(assignment.values_mask()))
    }
}

/// Scatters the low bits of `index` onto the positions listed in `nodes`
/// (first node = least significant bit of `index`).
pub(crate) fn scatter(index: usize, nodes: &[NodeId]) -> u32 {
    nodes
        .iter()
        .enumerate()
        .filter(|(j, _)| index >> j & 1 == 1)
        .fold(0u32, |s, (_, n)| s | n.bit())
}
