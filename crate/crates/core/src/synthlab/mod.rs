//! Synthetic laboratory: seeded ground-truth networks, their exact observable
//! tables, sampling, interventions on the value prior, and a brute-force
//! oracle that certifies the identification pipeline.

mod certificate;
mod oracle;
mod sampler;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use certificate::{certify, exact_inputs, sampled_inputs, CertificateMode, CertificateOutcome, FitInputs};
pub use oracle::{Oracle, OracleError};
pub use sampler::{sample_counts, sample_events, sample_events_stream, Sampler};

use crate::assignment::{NodeId, Scope};
use crate::estimation::{EstimationError, ParentGivenValueTable};
use crate::identification::{Cpt, CptEntry, FittedModel, Provenance};
use crate::network::{AnchorPolarity, NetworkDocument, NetworkSpec, NodeRole, SpecError};
use crate::table::JointTable;

/// Range CPT entries are drawn from.
pub const ENTRY_RANGE: (f64, f64) = (0.05, 0.95);
/// Range of gateway entries in the gated family.
pub const GATEWAY_RANGE: (f64, f64) = (0.05, 0.35);
/// Range of the free anchor entry while every gateway is off.
pub const IDLE_ANCHOR_RANGE: (f64, f64) = (0.05, 0.15);
/// Minimum `|P(A=1|w,V=1) - P(A=1|w,V=0)|` of generated anchors.
pub const A1_MARGIN: f64 = 0.05;
/// Largest network the exact enumerations accept.
pub const MAX_EXACT_NODES: usize = 24;
pub const MAX_BEHAVIORS: usize = 10;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("malformed ground-truth document: {0}")]
    Malformed(String),
    #[error(transparent)]
    Network(#[from] SpecError),
    #[error("factor for {node}: {reason}")]
    InvalidFactor { node: String, reason: String },
    #[error("network has {0} nodes; exact enumeration supports at most {MAX_EXACT_NODES}")]
    TooLarge(usize),
    #[error("prior {0} is not a probability")]
    InvalidPrior(f64),
    #[error("unknown structure {0:?} (expected naive, gated or twitter-shaped)")]
    UnknownStructure(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Structure {
    /// `V` is the only parent of every behavior.
    Naive,
    /// One or two gateway behaviors; every other behavior and the anchor
    /// depend on them, and engagements are impossible with all gateways off.
    Gated,
    /// The notification network at reduced width.
    TwitterShaped,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Naive, Structure::Gated, Structure::TwitterShaped];
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Structure::Naive => "naive",
            Structure::Gated => "gated",
            Structure::TwitterShaped => "twitter-shaped",
        })
    }
}

impl FromStr for Structure {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "naive" => Ok(Structure::Naive),
            "gated" => Ok(Structure::Gated),
            "twitter-shaped" | "twitter" => Ok(Structure::TwitterShaped),
            other => Err(SynthError::UnknownStructure(other.to_owned())),
        }
    }
}

/// `P(node=1 | parents)`, one entry per parent assignment (first parent most
/// significant).
#[derive(Debug, Clone, PartialEq)]
pub struct TrueFactor {
    pub parents: Vec<NodeId>,
    pub p_one: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthModel {
    spec: NetworkSpec,
    prior_v: f64,
    factors: Vec<TrueFactor>,
    seed: u64,
}

impl GroundTruthModel {
    /// Builds a model from factors for every node except the latent one.
    pub fn new(
        spec: NetworkSpec,
        prior_v: f64,
        factors: Vec<(NodeId, Vec<f64>)>,
        seed: u64,
    ) -> Result<Self, SynthError> {
        if !(0.0..=1.0).contains(&prior_v) {
            return Err(SynthError::InvalidPrior(prior_v));
        }
        let mut slots: Vec<Option<TrueFactor>> = vec![None; spec.len()];
        slots[spec.latent().index()] = Some(TrueFactor {
            parents: Vec::new(),
            p_one: vec![prior_v],
        });
        for (node, p_one) in factors {
            let invalid = |reason: &str| SynthError::InvalidFactor {
                node: spec.name(node).to_owned(),
                reason: reason.to_owned(),
            };
            let parents = spec.parents(node).to_vec();
            if p_one.len() != 1 << parents.len() {
                return Err(invalid("wrong number of entries"));
            }
            if p_one.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(invalid("entry outside [0, 1]"));
            }
            if node == spec.latent() {
                return Err(invalid("the latent factor is the prior"));
            }
            if slots[node.index()].replace(TrueFactor { parents, p_one }).is_some() {
                return Err(invalid("given twice"));
            }
        }
        let factors = slots
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                f.ok_or_else(|| SynthError::InvalidFactor {
                    node: spec.names()[i].clone(),
                    reason: "missing".into(),
                })
            })
            .collect::<Result<_, _>>()?;
        Ok(GroundTruthModel {
            spec,
            prior_v,
            factors,
            seed,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn prior_v(&self) -> f64 {
        self.prior_v
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Factors in declaration order; the latent node's factor is the prior.
    pub fn factors(&self) -> &[TrueFactor] {
        &self.factors
    }

    pub fn factor(&self, node: NodeId) -> &TrueFactor {
        &self.factors[node.index()]
    }

    pub fn set_factor(&mut self, node: NodeId, p_one: Vec<f64>) {
        let f = &mut self.factors[node.index()];
        assert_eq!(f.p_one.len(), p_one.len(), "factor size");
        f.p_one = p_one;
    }

    /// Same factors, different value prior.
    pub fn intervene_prior(&self, prior_v: f64) -> GroundTruthModel {
        assert!((0.0..=1.0).contains(&prior_v), "prior must be a probability");
        let mut out = self.clone();
        out.prior_v = prior_v;
        out.factors[self.spec.latent().index()].p_one = vec![prior_v];
        out
    }

    /// The true factors as a model the inference module can score.
    pub fn to_fitted_model(&self) -> FittedModel {
        let cpts = self
            .spec
            .node_ids()
            .filter(|&n| n != self.spec.latent())
            .map(|n| {
                let f = self.factor(n);
                Cpt::new(
                    n,
                    f.parents.clone(),
                    f.p_one.iter().map(|&p| CptEntry::exact(p)).collect(),
                    Provenance::Empirical,
                )
            })
            .collect();
        FittedModel::from_cpts(self.spec.clone(), self.prior_v, cpts).expect("ground truth covers every node")
    }

    /// `P(node=1 | state)` for a packed full state.
    pub fn p_one_at(&self, node: NodeId, state: u32) -> f64 {
        let f = self.factor(node);
        let index = f
            .parents
            .iter()
            .fold(0usize, |acc, p| (acc << 1) | usize::from(state & p.bit() != 0));
        f.p_one[index]
    }

    /// Probability of a full packed state.
    pub fn joint_at(&self, state: u32) -> f64 {
        self.spec.node_ids().fold(1.0, |acc, n| {
            let p = self.p_one_at(n, state);
            acc * if state & n.bit() != 0 { p } else { 1.0 - p }
        })
    }

    /// Smallest anchor gap `|P(A=1|w,V=1) - P(A=1|w,V=0)|` over `w`.
    pub fn anchor_margin(&self) -> f64 {
        let w = Scope::new(self.spec.anchor_context());
        let v = self.spec.latent().bit();
        (0..w.cells())
            .map(|i| {
                let s = w.state_of(i);
                let a = self.spec.anchor();
                (self.p_one_at(a, s | v) - self.p_one_at(a, s)).abs()
            })
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_document(&self) -> GroundTruthDocument {
        GroundTruthDocument {
            network: self.spec.to_document(),
            prior_v: self.prior_v,
            seed: self.seed,
            cpts: self
                .spec
                .node_ids()
                .filter(|&n| n != self.spec.latent())
                .map(|n| {
                    let f = self.factor(n);
                    FactorDocument {
                        node: self.spec.name(n).to_owned(),
                        parents: f.parents.iter().map(|&p| self.spec.name(p).to_owned()).collect(),
                        p_one: f.p_one.clone(),
                    }
                })
                .collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut text = serde_json::to_string_pretty(&self.to_document()).expect("ground truth serializes");
        text.push('\n');
        text
    }

    pub fn parse(text: &str) -> Result<Self, SynthError> {
        let doc: GroundTruthDocument =
            serde_json::from_str(text).map_err(|e| SynthError::Malformed(e.to_string()))?;
        let spec = NetworkSpec::from_document(&doc.network)?;
        let mut factors = Vec::with_capacity(doc.cpts.len());
        for f in &doc.cpts {
            let node = spec.require(&f.node)?;
            let parents = f.parents.iter().map(|p| spec.require(p)).collect::<Result<Vec<_>, _>>()?;
            if parents != spec.parents(node) {
                return Err(SynthError::InvalidFactor {
                    node: f.node.clone(),
                    reason: "parents differ from the network".into(),
                });
            }
            factors.push((node, f.p_one.clone()));
        }
        Self::new(spec, doc.prior_v, factors, doc.seed)
    }
}

/// Network document plus the prior, seed and factor tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthDocument {
    #[serde(flatten)]
    pub network: NetworkDocument,
    pub prior_v: f64,
    pub seed: u64,
    pub cpts: Vec<FactorDocument>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorDocument {
    pub node: String,
    pub parents: Vec<String>,
    pub p_one: Vec<f64>,
}

/// The three-node fixture `V -> A`, `V -> B`.
pub fn t1_fixture() -> GroundTruthModel {
    let spec = NetworkSpec::new(
        vec![
            ("V".into(), NodeRole::LatentValue),
            ("A".into(), NodeRole::Anchor),
            ("B".into(), NodeRole::Behavior),
        ],
        vec![("V".into(), "A".into()), ("V".into(), "B".into())],
        AnchorPolarity::Negative,
        0.0,
    )
    .expect("fixture network is valid");
    let a = spec.anchor();
    let b = spec.id("B").expect("B");
    GroundTruthModel::new(spec, 0.5, vec![(a, vec![0.4, 0.0]), (b, vec![0.2, 0.8])], 0)
        .expect("fixture factors are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorOptions {
    pub polarity: AnchorPolarity,
    pub epsilon: f64,
    /// Drawn from `[0.3, 0.7]` when unset.
    pub prior_v: Option<f64>,
}

impl Default for GeneratorOptions {
    fn default() -> Self {
        GeneratorOptions {
            polarity: AnchorPolarity::Negative,
            epsilon: 0.0,
            prior_v: None,
        }
    }
}

/// A seeded ground truth with `n_behaviors` observed non-anchor nodes.
pub fn random_ground_truth(seed: u64, n_behaviors: usize, structure: Structure) -> GroundTruthModel {
    random_ground_truth_with(seed, n_behaviors, structure, &GeneratorOptions::default())
}

pub fn random_ground_truth_with(
    seed: u64,
    n_behaviors: usize,
    structure: Structure,
    options: &GeneratorOptions,
) -> GroundTruthModel {
    let n = n_behaviors.clamp(1, MAX_BEHAVIORS);
    let layout = match structure {
        Structure::Naive => naive_layout(n),
        Structure::Gated => gated_layout(n),
        Structure::TwitterShaped => twitter_layout(n),
    };
    let spec = NetworkSpec::new(layout.nodes, layout.edges, options.polarity, options.epsilon)
        .expect("generated network is valid");
    let gates: Vec<(NodeId, Vec<NodeId>)> = layout
        .gates
        .iter()
        .map(|(node, gates)| {
            (
                spec.id(node).expect("gated node"),
                gates.iter().map(|g| spec.id(g).expect("gate")).collect(),
            )
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior_v = options.prior_v.unwrap_or_else(|| rng.random_range(0.3..=0.7));
    let (lo, hi) = ENTRY_RANGE;
    let mut factors = Vec::new();
    for node in spec.node_ids() {
        if node == spec.latent() || node == spec.anchor() {
            continue;
        }
        let parents = Scope::new(spec.parents(node).to_vec());
        let gate_mask = gates
            .iter()
            .find(|(n, _)| *n == node)
            .map_or(0, |(_, g)| g.iter().fold(0u32, |m, g| m | g.bit()));
        let (lo, hi) = if layout.gateways.iter().any(|g| spec.id(g) == Some(node)) {
            GATEWAY_RANGE
        } else {
            (lo, hi)
        };
        let p_one = (0..parents.cells())
            .map(|i| {
                let draw = rng.random_range(lo..=hi);
                if gate_mask != 0 && parents.state_of(i) & gate_mask == 0 {
                    0.0
                } else {
                    draw
                }
            })
            .collect();
        factors.push((node, p_one));
    }
    let mut gt = GroundTruthModel::new(spec.clone(), prior_v, {
        let mut all = factors.clone();
        all.push((spec.anchor(), vec![0.5; 1 << spec.parents(spec.anchor()).len()]));
        all
    }, seed)
    .expect("generated factors are valid");
    let anchor_gates = layout
        .anchor_gates
        .iter()
        .fold(0u32, |m, g| m | spec.id(g).expect("gate").bit());
    let anchor = anchor_factor(&gt, anchor_gates, &mut rng);
    gt.set_factor(spec.anchor(), anchor);
    gt
}

/// Anchor entries honoring the polarity convention: `P(V=1 | A=1, w)` equals
/// the configured value for every `w`.
fn anchor_factor(gt: &GroundTruthModel, gate_mask: u32, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let spec = gt.spec();
    let t = spec.value_given_anchor();
    let parents = Scope::new(spec.parents(spec.anchor()).to_vec());
    let w_scope = Scope::new(spec.anchor_context());
    let latent = spec.latent().bit();
    let (lo, hi) = ENTRY_RANGE;

    // P(w, V=v) with the anchor summed out
    let mass = if t == 0.0 || t == 1.0 {
        None
    } else {
        let mut m = vec![[0.0; 2]; w_scope.cells()];
        let others: Vec<NodeId> = spec.node_ids().filter(|&n| n != spec.anchor()).collect();
        for k in 0..1usize << others.len() {
            let state = crate::assignment::scatter(k, &others);
            let p = spec
                .node_ids()
                .filter(|&n| n != spec.anchor())
                .fold(1.0, |acc, n| {
                    let q = gt.p_one_at(n, state);
                    acc * if state & n.bit() != 0 { q } else { 1.0 - q }
                });
            m[w_scope.index_of(state)][usize::from(state & latent != 0)] += p;
        }
        Some(m)
    };

    let mut p_one = vec![0.0; parents.cells()];
    for w in 0..w_scope.cells() {
        let state = w_scope.state_of(w);
        let u = if gate_mask != 0 && state & gate_mask == 0 {
            let (lo, hi) = IDLE_ANCHOR_RANGE;
            rng.random_range(lo..=hi)
        } else {
            rng.random_range(lo..=hi)
        };
        let (low, high) = match &mass {
            None if t == 0.0 => (u, 0.0),
            None => (0.0, u),
            Some(m) => {
                let [m0, m1] = m[w];
                if m0 <= 0.0 || m1 <= 0.0 {
                    if t < 0.5 {
                        (u, 0.0)
                    } else {
                        (0.0, u)
                    }
                } else {
                    // a0 m0 t = a1 m1 (1 - t)
                    let r = m1 * (1.0 - t) / (m0 * t);
                    let big = if (1.0 - r.min(1.0 / r)) * u < A1_MARGIN { hi } else { u };
                    if r <= 1.0 {
                        (r * big, big)
                    } else {
                        (big, big / r)
                    }
                }
            }
        };
        p_one[parents.index_of(state)] = low;
        p_one[parents.index_of(state | latent)] = high;
    }
    p_one
}

struct Layout {
    nodes: Vec<(String, NodeRole)>,
    edges: Vec<(String, String)>,
    /// Nodes that are impossible while all of their gates are 0.
    gates: Vec<(String, Vec<String>)>,
    /// Rarely active behaviors that gate others.
    gateways: Vec<String>,
    /// The anchor is rare while all of these are 0.
    anchor_gates: Vec<String>,
}

fn edge(a: &str, b: &str) -> (String, String) {
    (a.to_owned(), b.to_owned())
}

fn naive_layout(n: usize) -> Layout {
    let mut nodes = vec![("V".to_owned(), NodeRole::LatentValue), ("A".to_owned(), NodeRole::Anchor)];
    nodes.extend((1..=n).map(|i| (format!("B{i}"), NodeRole::Behavior)));
    let edges = nodes[1..].iter().map(|(name, _)| edge("V", name)).collect();
    Layout {
        nodes,
        edges,
        gates: Vec::new(),
        gateways: Vec::new(),
        anchor_gates: Vec::new(),
    }
}

fn gated_layout(n: usize) -> Layout {
    let n_gates = if n >= 3 { 2 } else { 1 };
    let gateways: Vec<String> = (1..=n_gates).map(|i| format!("G{i}")).collect();
    let engagements: Vec<String> = (n_gates + 1..=n).map(|i| format!("B{i}")).collect();
    let mut nodes = vec![("V".to_owned(), NodeRole::LatentValue), ("A".to_owned(), NodeRole::Anchor)];
    nodes.extend(gateways.iter().chain(&engagements).map(|g| (g.clone(), NodeRole::Behavior)));
    let mut edges: Vec<_> = nodes[1..].iter().map(|(name, _)| edge("V", name)).collect();
    for g in &gateways {
        edges.push(edge(g, "A"));
        for e in &engagements {
            edges.push(edge(g, e));
        }
    }
    let gates = engagements.iter().map(|e| (e.clone(), gateways.clone())).collect();
    Layout {
        nodes,
        edges,
        gates,
        anchor_gates: gateways.clone(),
        gateways,
    }
}

/// Optional behaviors of the twitter-shaped family, in the order they are added.
pub const TWITTER_EXTRA_BEHAVIORS: [&str; 10] = [
    "Fav", "RT", "Reply", "Quote", "UAM", "OptOut", "LinkClick", "VidWatch", "Linger6", "Linger12",
];

fn twitter_layout(n: usize) -> Layout {
    let n = n.max(3);
    let extras: Vec<&str> = TWITTER_EXTRA_BEHAVIORS[..n - 3].to_vec();
    let mut nodes: Vec<(String, NodeRole)> = vec![
        ("NTabView".into(), NodeRole::Behavior),
        ("Open".into(), NodeRole::Behavior),
        ("Click".into(), NodeRole::Behavior),
        ("SLO".into(), NodeRole::Anchor),
    ];
    nodes.extend(extras.iter().map(|e| (e.to_string(), NodeRole::Behavior)));
    nodes.push(("V".into(), NodeRole::LatentValue));

    let mut edges = vec![edge("NTabView", "Click"), edge("NTabView", "SLO")];
    edges.extend(nodes.iter().filter(|(n, _)| n != "NTabView" && n != "V").map(|(n, _)| edge("V", n)));
    edges.push(edge("Click", "SLO"));
    edges.push(edge("Open", "SLO"));
    let mut gates = Vec::new();
    for &e in &extras {
        match e {
            "Linger12" => {
                edges.push(edge("Linger6", e));
                gates.push((e.to_owned(), vec!["Linger6".to_owned()]));
            }
            _ => {
                edges.push(edge("Click", e));
                edges.push(edge("Open", e));
                if e != "OptOut" {
                    gates.push((e.to_owned(), vec!["Click".to_owned(), "Open".to_owned()]));
                }
            }
        }
    }
    Layout {
        nodes,
        edges,
        gates,
        gateways: vec!["Open".to_owned(), "Click".to_owned()],
        anchor_gates: Vec::new(),
    }
}

/// The same node set with `V` as the only parent of every observed node.
pub fn naive_structure(spec: &NetworkSpec) -> NetworkSpec {
    let nodes = spec.nodes().iter().map(|n| (n.name.clone(), n.role)).collect();
    let v = spec.name(spec.latent()).to_owned();
    let edges = spec
        .observed()
        .into_iter()
        .map(|n| (v.clone(), spec.name(n).to_owned()))
        .collect();
    NetworkSpec::new(nodes, edges, spec.anchor_polarity(), spec.epsilon()).expect("naive structure is valid")
}

/// A twitter-shaped ground truth (all ten behaviors) whose factors make
/// retweets stronger evidence of value than replies, replies stronger than
/// clicks, and favorites stronger than clicks.
pub fn twitter_ordering_ground_truth(seed: u64) -> GroundTruthModel {
    let mut gt = random_ground_truth(seed, MAX_BEHAVIORS, Structure::TwitterShaped);
    let spec = gt.spec().clone();
    let latent = spec.latent().bit();
    // (node, P(node=1 | open context, V=0), P(node=1 | open context, V=1))
    for (name, low, high) in [("Click", 0.4, 0.6), ("RT", 0.01, 0.5), ("Reply", 0.03, 0.4), ("Fav", 0.05, 0.6)] {
        let node = spec.id(name).expect("behavior present");
        let parents = Scope::new(spec.parents(node).to_vec());
        let old = gt.factor(node).p_one.clone();
        let p_one = (0..parents.cells())
            .map(|i| {
                if old[i] == 0.0 {
                    0.0
                } else if parents.state_of(i) & latent != 0 {
                    high
                } else {
                    low
                }
            })
            .collect();
        gt.set_factor(node, p_one);
    }
    gt
}

/// Exact `P(observed nodes)` with `V` summed out.
pub fn exact_observable_distribution(gt: &GroundTruthModel) -> Result<JointTable, SynthError> {
    let spec = gt.spec();
    if spec.len() > MAX_EXACT_NODES {
        return Err(SynthError::TooLarge(spec.len()));
    }
    let scope = spec.observed_scope();
    let latent = spec.latent().bit();
    let mut probs = vec![0.0; scope.cells()];
    for (i, p) in probs.iter_mut().enumerate() {
        let state = scope.state_of(i);
        *p = gt.joint_at(state) + gt.joint_at(state | latent);
    }
    Ok(JointTable::new(scope, probs, 0).expect("exact joint is normalized"))
}

/// The true `P(Pa_{-V}(A) = w | V = v)`.
pub fn exact_parent_given_value(gt: &GroundTruthModel) -> Result<ParentGivenValueTable, EstimationError> {
    let spec = gt.spec();
    let w_scope = Scope::new(spec.anchor_context());
    let latent = spec.latent().bit();
    let mut cols = [vec![0.0; w_scope.cells()], vec![0.0; w_scope.cells()]];
    let all: Vec<NodeId> = spec.node_ids().collect();
    for k in 0..1usize << all.len() {
        let state = crate::assignment::scatter(k, &all);
        cols[usize::from(state & latent != 0)][w_scope.index_of(state)] += gt.joint_at(state);
    }
    let prior = [1.0 - gt.prior_v(), gt.prior_v()];
    for (col, p) in cols.iter_mut().zip(prior) {
        for x in col.iter_mut() {
            *x = (*x / p).min(1.0);
        }
    }
    let [low, high] = cols;
    ParentGivenValueTable::from_conditionals(w_scope, low, high)
}
