//! Network structure: nodes, roles, edges and the anchor assumptions that a
//! valid structure must satisfy.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::assignment::{Assignment, NodeId, Scope};

/// Upper bound imposed by the packed assignment representation.
pub const MAX_NODES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeRole {
    #[serde(rename = "latent")]
    LatentValue,
    Anchor,
    Behavior,
}

/// Whether the anchor is explicit negative or positive feedback.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorPolarity {
    Negative,
    Positive,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error("malformed network document: {0}")]
    Malformed(String),
    #[error("duplicate node {0:?}")]
    DuplicateNode(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("edge {parent} -> {child} names unknown node {unknown:?}")]
    UnknownEndpoint {
        parent: String,
        child: String,
        unknown: String,
    },
    #[error("cycle detected through {0:?}")]
    Cycle(Vec<String>),
    #[error("expected exactly one latent node, found {0}")]
    LatentCount(usize),
    #[error("expected exactly one anchor node, found {0}")]
    AnchorCount(usize),
    #[error("anchor has children: {anchor} -> {children:?}")]
    AnchorHasChildren { anchor: String, children: Vec<String> },
    #[error("latent node {latent} has parents {parents:?}")]
    LatentHasParents { latent: String, parents: Vec<String> },
    #[error("latent node {latent} is not a parent of anchor {anchor}")]
    AnchorMissingLatentParent { latent: String, anchor: String },
    #[error("epsilon must lie in [0, 1], got {0}")]
    InvalidEpsilon(f64),
    #[error("network has {0} nodes; at most {MAX_NODES} are supported")]
    TooManyNodes(usize),
    #[error("unknown node {0:?}")]
    UnknownNode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeDocument {
    pub name: String,
    pub role: NodeRole,
}

/// Serialized form of a network. Unknown top-level fields are ignored so that
/// documents embedding a network (ground truths, models) parse as networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkDocument {
    pub nodes: Vec<NodeDocument>,
    pub edges: Vec<(String, String)>,
    pub anchor_polarity: AnchorPolarity,
    pub epsilon: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    pub role: NodeRole,
}

/// A validated network structure. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    nodes: Vec<Node>,
    names: Vec<String>,
    edges: Vec<(NodeId, NodeId)>,
    parents: Vec<Vec<NodeId>>,
    children: Vec<Vec<NodeId>>,
    by_name: HashMap<String, NodeId>,
    order: Vec<NodeId>,
    latent: NodeId,
    anchor: NodeId,
    polarity: AnchorPolarity,
    epsilon: f64,
}

impl NetworkSpec {
    /// Parses and validates a JSON network document.
    pub fn parse(text: &str) -> Result<Self, SpecError> {
        let doc: NetworkDocument =
            serde_json::from_str(text).map_err(|e| SpecError::Malformed(e.to_string()))?;
        Self::from_document(&doc)
    }

    pub fn from_document(doc: &NetworkDocument) -> Result<Self, SpecError> {
        let nodes = doc
            .nodes
            .iter()
            .map(|n| (n.name.clone(), n.role))
            .collect();
        Self::new(nodes, doc.edges.clone(), doc.anchor_polarity, doc.epsilon)
    }

    pub fn new(
        nodes: Vec<(String, NodeRole)>,
        edges: Vec<(String, String)>,
        polarity: AnchorPolarity,
        epsilon: f64,
    ) -> Result<Self, SpecError> {
        if nodes.len() > MAX_NODES {
            return Err(SpecError::TooManyNodes(nodes.len()));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(SpecError::InvalidEpsilon(epsilon));
        }
        let mut by_name = HashMap::with_capacity(nodes.len());
        for (i, (name, _)) in nodes.iter().enumerate() {
            if by_name.insert(name.clone(), NodeId(i)).is_some() {
                return Err(SpecError::DuplicateNode(name.clone()));
            }
        }

        let n = nodes.len();
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        let mut edge_ids = Vec::with_capacity(edges.len());
        for (p, c) in &edges {
            let lookup = |name: &String| {
                by_name
                    .get(name)
                    .copied()
                    .ok_or_else(|| SpecError::UnknownEndpoint {
                        parent: p.clone(),
                        child: c.clone(),
                        unknown: name.clone(),
                    })
            };
            let (pid, cid) = (lookup(p)?, lookup(c)?);
            if parents[cid.0].contains(&pid) {
                return Err(SpecError::DuplicateEdge(p.clone(), c.clone()));
            }
            parents[cid.0].push(pid);
            children[pid.0].push(cid);
            edge_ids.push((pid, cid));
        }
        for list in parents.iter_mut().chain(children.iter_mut()) {
            list.sort();
        }

        let order = kahn_order(&parents, &children).map_err(|stuck| {
            SpecError::Cycle(stuck.iter().map(|id| nodes[id.0].0.clone()).collect())
        })?;

        let with_role = |role| {
            nodes
                .iter()
                .enumerate()
                .filter(move |(_, (_, r))| *r == role)
                .map(|(i, _)| NodeId(i))
                .collect::<Vec<_>>()
        };
        let latents = with_role(NodeRole::LatentValue);
        if latents.len() != 1 {
            return Err(SpecError::LatentCount(latents.len()));
        }
        let anchors = with_role(NodeRole::Anchor);
        if anchors.len() != 1 {
            return Err(SpecError::AnchorCount(anchors.len()));
        }
        let (latent, anchor) = (latents[0], anchors[0]);
        let name_of = |ids: &[NodeId]| ids.iter().map(|i| nodes[i.0].0.clone()).collect();
        if !children[anchor.0].is_empty() {
            return Err(SpecError::AnchorHasChildren {
                anchor: nodes[anchor.0].0.clone(),
                children: name_of(&children[anchor.0]),
            });
        }
        if !parents[latent.0].is_empty() {
            return Err(SpecError::LatentHasParents {
                latent: nodes[latent.0].0.clone(),
                parents: name_of(&parents[latent.0]),
            });
        }
        if !parents[anchor.0].contains(&latent) {
            return Err(SpecError::AnchorMissingLatentParent {
                latent: nodes[latent.0].0.clone(),
                anchor: nodes[anchor.0].0.clone(),
            });
        }

        let names = nodes.iter().map(|(n, _)| n.clone()).collect();
        Ok(NetworkSpec {
            nodes: nodes
                .into_iter()
                .map(|(name, role)| Node { name, role })
                .collect(),
            names,
            edges: edge_ids,
            parents,
            children,
            by_name,
            order,
            latent,
            anchor,
            polarity,
            epsilon,
        })
    }

    pub fn to_document(&self) -> NetworkDocument {
        NetworkDocument {
            nodes: self
                .nodes
                .iter()
                .map(|n| NodeDocument {
                    name: n.name.clone(),
                    role: n.role,
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(p, c)| (self.name(*p).to_owned(), self.name(*c).to_owned()))
                .collect(),
            anchor_polarity: self.polarity,
            epsilon: self.epsilon,
        }
    }

    /// Same structure with a different epsilon.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self, SpecError> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(SpecError::InvalidEpsilon(epsilon));
        }
        Ok(NetworkSpec {
            epsilon,
            ..self.clone()
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len()).map(NodeId)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.0]
    }

    pub fn role(&self, id: NodeId) -> NodeRole {
        self.nodes[id.0].role
    }

    pub fn id(&self, name: &str) -> Option<NodeId> {
        self.by_name.get(name).copied()
    }

    pub fn require(&self, name: &str) -> Result<NodeId, SpecError> {
        self.id(name)
            .ok_or_else(|| SpecError::UnknownNode(name.to_owned()))
    }

    pub fn edges(&self) -> &[(NodeId, NodeId)] {
        &self.edges
    }

    /// Parents in declaration order.
    pub fn parents(&self, id: NodeId) -> &[NodeId] {
        &self.parents[id.0]
    }

    pub fn children(&self, id: NodeId) -> &[NodeId] {
        &self.children[id.0]
    }

    /// Parents excluding the latent node, in declaration order.
    pub fn parents_without_latent(&self, id: NodeId) -> Vec<NodeId> {
        self.parents[id.0]
            .iter()
            .copied()
            .filter(|&p| p != self.latent)
            .collect()
    }

    pub fn has_latent_parent(&self, id: NodeId) -> bool {
        self.parents[id.0].contains(&self.latent)
    }

    pub fn latent(&self) -> NodeId {
        self.latent
    }

    pub fn anchor(&self) -> NodeId {
        self.anchor
    }

    pub fn anchor_polarity(&self) -> AnchorPolarity {
        self.polarity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `P(V=1 | A=1)`: epsilon for a negative anchor, `1 - epsilon` for a
    /// positive one.
    pub fn value_given_anchor(&self) -> f64 {
        match self.polarity {
            AnchorPolarity::Negative => self.epsilon,
            AnchorPolarity::Positive => 1.0 - self.epsilon,
        }
    }

    /// Every node except the latent one, in declaration order.
    pub fn observed(&self) -> Vec<NodeId> {
        self.node_ids().filter(|&i| i != self.latent).collect()
    }

    pub fn observed_scope(&self) -> Scope {
        Scope::new(self.observed())
    }

    pub fn observed_mask(&self) -> u32 {
        self.full_mask() & !self.latent.bit()
    }

    pub fn full_mask(&self) -> u32 {
        if self.nodes.len() == 32 {
            u32::MAX
        } else {
            (1u32 << self.nodes.len()) - 1
        }
    }

    /// Parents of the anchor other than the latent node.
    pub fn anchor_context(&self) -> Vec<NodeId> {
        self.parents_without_latent(self.anchor)
    }

    /// Topological order; ties broken by declaration order.
    pub fn topological_order(&self) -> &[NodeId] {
        &self.order
    }

    /// The anchor's Markov blanket. Since the anchor has no children this is
    /// exactly its parent set, so `P(A | V, B) = P(A | Pa(A))` and only the
    /// `Pa(A)`-indexed factor needs fitting.
    pub fn markov_blanket_reduction(&self) -> Vec<NodeId> {
        debug_assert!(self.children[self.anchor.0].is_empty());
        self.parents[self.anchor.0].clone()
    }

    /// Strict ancestors of every node in `nodes`, as a mask.
    pub fn ancestors_mask(&self, nodes: &[NodeId]) -> u32 {
        let mut mask = 0u32;
        let mut stack: Vec<NodeId> = nodes.to_vec();
        while let Some(n) = stack.pop() {
            for &p in &self.parents[n.0] {
                if mask & p.bit() == 0 {
                    mask |= p.bit();
                    stack.push(p);
                }
            }
        }
        mask
    }

    /// Builds an assignment from `name -> 0|1` pairs.
    pub fn assignment<'a, I>(&self, pairs: I) -> Result<Assignment, SpecError>
    where
        I: IntoIterator<Item = (&'a str, bool)>,
    {
        let mut a = Assignment::empty();
        for (name, v) in pairs {
            a.set(self.require(name)?, v);
        }
        Ok(a)
    }

    pub fn named(&self, assignment: &Assignment) -> BTreeMap<String, u8> {
        assignment.to_named(&self.names)
    }

    pub fn display(&self, assignment: &Assignment) -> String {
        assignment.display(&self.names)
    }
}

/// Kahn's algorithm with a min-heap on declaration index. On a cycle returns
/// the nodes that never reached in-degree zero.
fn kahn_order(
    parents: &[Vec<NodeId>],
    children: &[Vec<NodeId>],
) -> Result<Vec<NodeId>, Vec<NodeId>> {
    let n = parents.len();
    let mut indegree: Vec<usize> = parents.iter().map(Vec::len).collect();
    let mut ready: BinaryHeap<Reverse<usize>> = (0..n)
        .filter(|&i| indegree[i] == 0)
        .map(Reverse)
        .collect();
    let mut order = Vec::with_capacity(n);
    while let Some(Reverse(i)) = ready.pop() {
        order.push(NodeId(i));
        for c in &children[i] {
            indegree[c.0] -= 1;
            if indegree[c.0] == 0 {
                ready.push(Reverse(c.0));
            }
        }
    }
    if order.len() == n {
        Ok(order)
    } else {
        Err((0..n).filter(|&i| indegree[i] > 0).map(NodeId).collect())
    }
}

/// The bundled notification network (16 nodes, anchor `SLO`).
pub const TWITTER_NETWORK: &str = include_str!("../networks/twitter.json");

pub fn twitter_network() -> NetworkSpec {
    NetworkSpec::parse(TWITTER_NETWORK).expect("bundled network is valid")
}
