//! Topology classification and route enumeration.

use std::fmt;

use crate::error::{Error, Result};
use crate::network::NetworkSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Source(usize),
    Node(usize),
    Destination,
}

/// A positive-probability path `s -> i_1 -> ... -> i_l -> d`.
#[derive(Debug, Clone, PartialEq)]
pub struct Route {
    pub source: usize,
    /// Intermediate nodes in traversal order.
    pub nodes: Vec<usize>,
    /// Entry probability times internal routing probabilities times the
    /// probability of the final hop to the destination.
    pub probability: f64,
}

impl Route {
    pub fn links(&self) -> Vec<(Endpoint, Endpoint)> {
        let mut hops = Vec::with_capacity(self.nodes.len() + 1);
        let mut prev = Endpoint::Source(self.source);
        for &i in &self.nodes {
            hops.push((prev, Endpoint::Node(i)));
            prev = Endpoint::Node(i);
        }
        hops.push((prev, Endpoint::Destination));
        hops
    }

    /// `s1>i1>i2>d` style label.
    pub fn label(&self, spec: &NetworkSpec) -> String {
        let mut parts = vec![spec.sources()[self.source].id.as_str()];
        parts.extend(self.nodes.iter().map(|&i| spec.nodes()[i].id.as_str()));
        parts.push("d");
        parts.join(">")
    }
}

impl fmt::Display for Endpoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Source(s) => write!(f, "source#{s}"),
            Self::Node(i) => write!(f, "node#{i}"),
            Self::Destination => f.write_str("d"),
        }
    }
}

/// Kahn's algorithm over positive routing entries; `None` when cyclic.
pub fn topological_order(spec: &NetworkSpec) -> Option<Vec<usize>> {
    let a = spec.routing();
    let n = a.len();
    let mut indeg = vec![0usize; n];
    for row in a {
        for (j, &p) in row.iter().enumerate() {
            if p > 0.0 {
                indeg[j] += 1;
            }
        }
    }
    let mut ready: Vec<usize> = (0..n).rev().filter(|&i| indeg[i] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(i) = ready.pop() {
        order.push(i);
        for j in (0..n).rev() {
            if a[i][j] > 0.0 {
                indeg[j] -= 1;
                if indeg[j] == 0 {
                    ready.push(j);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// Returns the nodes of some directed cycle, closed (first node repeated at
/// the end), or `None` for a feed-forward network.
pub fn find_cycle(spec: &NetworkSpec) -> Option<Vec<usize>> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let a = spec.routing();
    let n = a.len();
    let mut mark = vec![Mark::New; n];
    let mut parent = vec![usize::MAX; n];

    for root in 0..n {
        if mark[root] != Mark::New {
            continue;
        }
        // iterative DFS: (node, next neighbour to try)
        let mut stack = vec![(root, 0usize)];
        mark[root] = Mark::Open;
        while let Some(&mut (i, ref mut next)) = stack.last_mut() {
            if let Some(j) = (*next..n).find(|&j| a[i][j] > 0.0) {
                *next = j + 1;
                match mark[j] {
                    Mark::New => {
                        mark[j] = Mark::Open;
                        parent[j] = i;
                        stack.push((j, 0));
                    }
                    Mark::Open => {
                        // back edge i -> j closes j -> ... -> i -> j
                        let mut cycle = vec![i];
                        let mut k = i;
                        while k != j {
                            k = parent[k];
                            cycle.push(k);
                        }
                        cycle.reverse();
                        cycle.push(j);
                        return Some(cycle);
                    }
                    Mark::Done => {}
                }
            } else {
                mark[i] = Mark::Done;
                stack.pop();
            }
        }
    }
    None
}

pub fn is_feed_forward(spec: &NetworkSpec) -> bool {
    topological_order(spec).is_some()
}

/// Every route from `source` to the destination with positive probability.
pub fn enumerate_routes(spec: &NetworkSpec, source: usize) -> Result<Vec<Route>> {
    if let Some(cycle) = find_cycle(spec) {
        return Err(Error::Cycle { cycle: cycle.iter().map(|&i| spec.nodes()[i].id.clone()).collect() });
    }
    let src = spec.sources().get(source).ok_or_else(|| Error::UnknownSource(format!("#{source}")))?;
    let a = spec.routing();
    let mut routes = Vec::new();
    let mut path = Vec::new();

    fn walk(
        spec: &NetworkSpec,
        a: &[Vec<f64>],
        source: usize,
        node: usize,
        prob: f64,
        path: &mut Vec<usize>,
        out: &mut Vec<Route>,
    ) {
        path.push(node);
        let exit = spec.exit_probability(node);
        if exit > 0.0 {
            out.push(Route { source, nodes: path.clone(), probability: prob * exit });
        }
        for (j, &p) in a[node].iter().enumerate() {
            if p > 0.0 {
                walk(spec, a, source, j, prob * p, path, out);
            }
        }
        path.pop();
    }

    for (i, &p) in src.entry.iter().enumerate() {
        if p > 0.0 {
            walk(spec, a, source, i, p, &mut path, &mut routes);
        }
    }
    Ok(routes)
}
