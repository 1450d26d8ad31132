//! Network description, JSON parsing and validation.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::erasure::{ErasureModel, ErasureTable};
use crate::error::{Error, Result};
use crate::routes;
use crate::traffic::{self, TrafficSolution};

/// Slack allowed when checking that probabilities sum to one.
pub const PROB_SUM_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetworkType {
    /// Coherence clock restarts at every node; erasure depends on each
    /// per-node sojourn separately.
    RepeaterAssisted,
    /// Erasure depends on the total time spent in the network.
    RepeaterLess,
}

impl fmt::Display for NetworkType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::RepeaterAssisted => "repeater_assisted",
            Self::RepeaterLess => "repeater_less",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: String,
    /// Service rate in qubits/sec.
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Source {
    pub id: String,
    /// Poisson emission rate in qubits/sec.
    pub lambda: f64,
    /// Probability of entering each node, indexed like `NetworkSpec::nodes`.
    pub entry: Vec<f64>,
}

/// A network of FCFS exponential servers fed by Poisson sources, with a
/// single destination. Routing probabilities live in a dense square matrix
/// over the intermediate nodes; a row's deficit `1 - sum_j a_ij` is the
/// probability of forwarding straight to the destination.
#[derive(Debug, Clone)]
pub struct NetworkSpec {
    nodes: Vec<Node>,
    sources: Vec<Source>,
    routing: Vec<Vec<f64>>,
    network_type: NetworkType,
    erasure: ErasureModel,
}

impl NetworkSpec {
    /// Builds a spec and checks every structural and domain invariant.
    pub fn new(
        nodes: Vec<Node>,
        sources: Vec<Source>,
        routing: Vec<Vec<f64>>,
        network_type: NetworkType,
        erasure: ErasureModel,
    ) -> Result<Self> {
        let n = nodes.len();
        if n == 0 {
            return Err(Error::Schema("network needs at least one node".into()));
        }
        if sources.is_empty() {
            return Err(Error::Schema("network needs at least one source".into()));
        }
        let mut seen = HashSet::new();
        for node in &nodes {
            if !seen.insert(node.id.as_str()) {
                return Err(Error::Schema(format!("duplicate node id `{}`", node.id)));
            }
            if !node.mu.is_finite() || node.mu <= 0.0 {
                return Err(Error::Domain(format!("node `{}`: service rate must be > 0, got {}", node.id, node.mu)));
            }
        }
        let mut seen_src = HashSet::new();
        for src in &sources {
            if !seen_src.insert(src.id.as_str()) {
                return Err(Error::Schema(format!("duplicate source id `{}`", src.id)));
            }
            if seen.contains(src.id.as_str()) || src.id == "d" {
                return Err(Error::Schema(format!(
                    "source id `{}` collides with a node id or the destination",
                    src.id
                )));
            }
            if !src.lambda.is_finite() || src.lambda < 0.0 {
                return Err(Error::Domain(format!(
                    "source `{}`: arrival rate must be >= 0, got {}",
                    src.id, src.lambda
                )));
            }
            if src.entry.len() != n {
                return Err(Error::Schema(format!("source `{}`: entry vector has wrong length", src.id)));
            }
            for (j, &p) in src.entry.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err(Error::Domain(format!(
                        "source `{}`: entry probability into `{}` is {p}, outside [0, 1]",
                        src.id, nodes[j].id
                    )));
                }
            }
            let total: f64 = src.entry.iter().sum();
            if (total - 1.0).abs() > PROB_SUM_TOL {
                return Err(Error::Domain(format!("source `{}`: entry probabilities sum to {total}, not 1", src.id)));
            }
        }
        if routing.len() != n || routing.iter().any(|row| row.len() != n) {
            return Err(Error::Schema("routing matrix must be square over the nodes".into()));
        }
        for (i, row) in routing.iter().enumerate() {
            for (j, &a) in row.iter().enumerate() {
                if !(0.0..=1.0).contains(&a) {
                    return Err(Error::Domain(format!(
                        "routing probability {} -> {} is {a}, outside [0, 1]",
                        nodes[i].id, nodes[j].id
                    )));
                }
                if i == j && a > 0.0 {
                    return Err(Error::Schema(format!("self-loop at node `{}`", nodes[i].id)));
                }
            }
            let total: f64 = row.iter().sum();
            if total > 1.0 + PROB_SUM_TOL {
                return Err(Error::Domain(format!("routing row `{}` sums to {total} > 1", nodes[i].id)));
            }
        }
        if let ErasureModel::Exponential { kappa } = erasure {
            ErasureModel::exponential(kappa)?;
        }
        Ok(Self { nodes, sources, routing, network_type, erasure })
    }

    /// Tandem of `mus.len()` nodes `i1 -> i2 -> ... -> d` fed by one source `s1`.
    pub fn tandem(lambda: f64, mus: &[f64], erasure: ErasureModel, network_type: NetworkType) -> Result<Self> {
        let m = mus.len();
        let nodes = mus.iter().enumerate().map(|(k, &mu)| Node { id: format!("i{}", k + 1), mu }).collect();
        let mut entry = vec![0.0; m];
        if m > 0 {
            entry[0] = 1.0;
        }
        let mut routing = vec![vec![0.0; m]; m];
        for k in 1..m {
            routing[k - 1][k] = 1.0;
        }
        let sources = vec![Source { id: "s1".into(), lambda, entry }];
        Self::new(nodes, sources, routing, network_type, erasure)
    }

    /// Two parallel nodes `i1`, `i2`; source `s1` enters `i1` with probability `delta`.
    pub fn parallel(
        lambda: f64,
        delta: f64,
        mu1: f64,
        mu2: f64,
        erasure: ErasureModel,
        network_type: NetworkType,
    ) -> Result<Self> {
        let nodes = vec![Node { id: "i1".into(), mu: mu1 }, Node { id: "i2".into(), mu: mu2 }];
        let sources = vec![Source { id: "s1".into(), lambda, entry: vec![delta, 1.0 - delta] }];
        Self::new(nodes, sources, vec![vec![0.0; 2]; 2], network_type, erasure)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn sources(&self) -> &[Source] {
        &self.sources
    }

    /// `routing()[i][j]` is the probability of forwarding from node `i` to node `j`.
    pub fn routing(&self) -> &[Vec<f64>] {
        &self.routing
    }

    pub fn network_type(&self) -> NetworkType {
        self.network_type
    }

    pub fn erasure(&self) -> &ErasureModel {
        &self.erasure
    }

    /// Probability that node `i` forwards directly to the destination.
    pub fn exit_probability(&self, i: usize) -> f64 {
        let p = 1.0 - self.routing[i].iter().sum::<f64>();
        if p <= PROB_SUM_TOL {
            0.0
        } else {
            p
        }
    }

    pub fn node_index(&self, id: &str) -> Result<usize> {
        self.nodes.iter().position(|n| n.id == id).ok_or_else(|| Error::UnknownNode(id.into()))
    }

    pub fn source_index(&self, id: &str) -> Result<usize> {
        self.sources.iter().position(|s| s.id == id).ok_or_else(|| Error::UnknownSource(id.into()))
    }

    /// External arrival rate into every node, `sum_s lambda_s * entry_s[i]`.
    pub fn external_rates(&self) -> Vec<f64> {
        let mut ext = vec![0.0; self.nodes.len()];
        for src in &self.sources {
            for (e, &p) in ext.iter_mut().zip(&src.entry) {
                *e += src.lambda * p;
            }
        }
        ext
    }

    pub fn with_network_type(&self, network_type: NetworkType) -> Self {
        Self { network_type, ..self.clone() }
    }

    pub fn with_erasure(&self, erasure: ErasureModel) -> Result<Self> {
        Self::new(self.nodes.clone(), self.sources.clone(), self.routing.clone(), self.network_type, erasure)
    }

    pub fn with_source_rate(&self, source: usize, lambda: f64) -> Result<Self> {
        let mut sources = self.sources.clone();
        sources[source].lambda = lambda;
        Self::new(self.nodes.clone(), sources, self.routing.clone(), self.network_type, self.erasure.clone())
    }

    pub fn with_source_entry(&self, source: usize, entry: Vec<f64>) -> Result<Self> {
        let mut sources = self.sources.clone();
        sources[source].entry = entry;
        Self::new(self.nodes.clone(), sources, self.routing.clone(), self.network_type, self.erasure.clone())
    }

    pub fn with_service_rate(&self, node: usize, mu: f64) -> Result<Self> {
        let mut nodes = self.nodes.clone();
        nodes[node].mu = mu;
        Self::new(nodes, self.sources.clone(), self.routing.clone(), self.network_type, self.erasure.clone())
    }

    /// Serializes to the JSON network document. Fails for custom erasure
    /// models, which have no document form.
    pub fn to_json(&self) -> Result<String> {
        let erasure = match &self.erasure {
            ErasureModel::Exponential { kappa } => ErasureDoc::Exponential { kappa: *kappa },
            ErasureModel::Table(t) => ErasureDoc::Table { points: t.points().iter().map(|&(w, p)| [w, p]).collect() },
            ErasureModel::Custom(_) => return Err(Error::Schema("custom erasure models cannot be serialized".into())),
        };
        let doc = Document {
            nodes: self.nodes.iter().map(|n| NodeDoc { id: n.id.clone(), mu: n.mu }).collect(),
            sources: self
                .sources
                .iter()
                .map(|s| SourceDoc {
                    id: s.id.clone(),
                    lambda: s.lambda,
                    entry: s
                        .entry
                        .iter()
                        .enumerate()
                        .filter(|(_, &p)| p > 0.0)
                        .map(|(j, &p)| (self.nodes[j].id.clone(), p))
                        .collect(),
                })
                .collect(),
            routing: self
                .routing
                .iter()
                .enumerate()
                .map(|(i, row)| {
                    let targets = row
                        .iter()
                        .enumerate()
                        .filter(|(_, &a)| a > 0.0)
                        .map(|(j, &a)| (self.nodes[j].id.clone(), a))
                        .collect();
                    (self.nodes[i].id.clone(), targets)
                })
                .collect(),
            network_type: self.network_type,
            erasure,
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::Schema(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Document {
    nodes: Vec<NodeDoc>,
    sources: Vec<SourceDoc>,
    routing: BTreeMap<String, BTreeMap<String, f64>>,
    network_type: NetworkType,
    erasure: ErasureDoc,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NodeDoc {
    id: String,
    mu: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SourceDoc {
    id: String,
    lambda: f64,
    entry: BTreeMap<String, f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "lowercase", deny_unknown_fields)]
enum ErasureDoc {
    Exponential { kappa: f64 },
    Table { points: Vec<[f64; 2]> },
}

/// Parses a JSON network document.
pub fn parse_network(text: &str) -> Result<NetworkSpec> {
    let doc: Document = serde_json::from_str(text).map_err(|e| match e.classify() {
        serde_json::error::Category::Data => Error::Schema(e.to_string()),
        _ => Error::Syntax(e.to_string()),
    })?;

    let index: HashMap<&str, usize> = doc.nodes.iter().enumerate().map(|(k, n)| (n.id.as_str(), k)).collect();
    if index.len() != doc.nodes.len() {
        return Err(Error::Schema("duplicate node ids".into()));
    }
    let lookup = |id: &str, ctx: &str| {
        index.get(id).copied().ok_or_else(|| Error::Schema(format!("{ctx} refers to unknown node `{id}`")))
    };
    let n = doc.nodes.len();

    let mut sources = Vec::with_capacity(doc.sources.len());
    for s in &doc.sources {
        let mut entry = vec![0.0; n];
        for (node, &p) in &s.entry {
            entry[lookup(node, &format!("source `{}`", s.id))?] = p;
        }
        sources.push(Source { id: s.id.clone(), lambda: s.lambda, entry });
    }

    let mut routing = vec![vec![0.0; n]; n];
    for (from, row) in &doc.routing {
        let i = lookup(from, "routing")?;
        for (to, &a) in row {
            let j = lookup(to, &format!("routing row `{from}`"))?;
            routing[i][j] = a;
        }
    }

    let erasure = match doc.erasure {
        ErasureDoc::Exponential { kappa } => ErasureModel::exponential(kappa)?,
        ErasureDoc::Table { points } => {
            ErasureModel::Table(ErasureTable::new(points.into_iter().map(|[w, p]| (w, p)).collect())?)
        }
    };
    let nodes = doc.nodes.into_iter().map(|n| Node { id: n.id, mu: n.mu }).collect();
    NetworkSpec::new(nodes, sources, routing, doc.network_type, erasure)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Topology {
    FeedForward,
    Cyclic,
}

impl fmt::Display for Topology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::FeedForward => "feed-forward",
            Self::Cyclic => "cyclic",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Defect {
    Unstable {
        node: String,
        xi: f64,
        mu: f64,
    },
    Unreachable {
        node: String,
    },
    NoPathToDestination {
        node: String,
    },
    /// The closed-form capacity does not cover loop-back networks.
    Cyclic {
        cycle: Vec<String>,
    },
    SingularRouting,
}

impl fmt::Display for Defect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Unstable { node, xi, mu } => {
                write!(f, "node {node} unstable: net arrival rate {xi} >= service rate {mu}")
            }
            Self::Unreachable { node } => write!(f, "node {node} is not reachable from any source"),
            Self::NoPathToDestination { node } => write!(f, "node {node} cannot reach the destination"),
            Self::Cyclic { cycle } => write!(
                f,
                "routing cycle [{}]: analytical capacity unsupported (loop-back networks out of scope)",
                cycle.join(" -> ")
            ),
            Self::SingularRouting => f.write_str("traffic equations are singular"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub ok: bool,
    pub topology: Topology,
    pub traffic: Option<TrafficSolution>,
    pub defects: Vec<Defect>,
}

impl ValidationReport {
    pub fn analytical_supported(&self) -> bool {
        self.ok
    }

    /// True when only the loop-back defect is present: simulation can still run.
    pub fn simulable(&self) -> bool {
        self.defects.iter().all(|d| matches!(d, Defect::Cyclic { .. }))
    }
}

/// Checks reachability, topology and stability. Defects are collected in the
/// report rather than returned as errors.
pub fn validate(spec: &NetworkSpec) -> ValidationReport {
    let n = spec.nodes.len();
    let mut defects = Vec::new();

    let adjacent = |i: usize| (0..n).filter(move |&j| spec.routing[i][j] > 0.0);

    let mut reached = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&j| spec.sources.iter().any(|s| s.entry[j] > 0.0)).collect();
    for &j in &stack {
        reached[j] = true;
    }
    while let Some(i) = stack.pop() {
        for j in adjacent(i) {
            if !reached[j] {
                reached[j] = true;
                stack.push(j);
            }
        }
    }

    let mut exits = vec![false; n];
    let mut stack: Vec<usize> = (0..n).filter(|&i| spec.exit_probability(i) > 0.0).collect();
    for &i in &stack {
        exits[i] = true;
    }
    while let Some(j) = stack.pop() {
        for i in 0..n {
            if spec.routing[i][j] > 0.0 && !exits[i] {
                exits[i] = true;
                stack.push(i);
            }
        }
    }

    for (i, node) in spec.nodes.iter().enumerate() {
        if !reached[i] {
            defects.push(Defect::Unreachable { node: node.id.clone() });
        }
        if !exits[i] {
            defects.push(Defect::NoPathToDestination { node: node.id.clone() });
        }
    }

    let topology = match routes::find_cycle(spec) {
        None => Topology::FeedForward,
        Some(cycle) => {
            defects.push(Defect::Cyclic { cycle: cycle.iter().map(|&i| spec.nodes[i].id.clone()).collect() });
            Topology::Cyclic
        }
    };

    let traffic = match traffic::solve_traffic(spec) {
        Ok(t) => {
            for (i, node) in spec.nodes.iter().enumerate() {
                if !t.stable[i] {
                    defects.push(Defect::Unstable { node: node.id.clone(), xi: t.xi[i], mu: node.mu });
                }
            }
            Some(t)
        }
        Err(_) => {
            defects.push(Defect::SingularRouting);
            None
        }
    };

    ValidationReport { ok: defects.is_empty(), topology, traffic, defects }
}
