//! Traffic networks, route sets and commodity matrices.

mod commodity;
mod routes;
mod tntp;

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use commodity::{build_commodity, CommoditySpec};
pub use routes::{enumerate_routes, RouteSet};
pub use tntp::{load_tntp, load_tntp_file, write_tntp};

/// Version tag written into every JSON document produced by this module.
pub const SCHEMA_VERSION: u32 = 1;

/// Per-link attributes carried by TNTP files, in file column order.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct EdgeAttributes {
    pub capacity: f64,
    pub length: f64,
    pub free_flow_time: f64,
    pub b: f64,
    pub power: f64,
    pub speed: f64,
    pub toll: f64,
    pub link_type: f64,
}

/// A simple digraph on nodes `0..node_count`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "NetworkDoc", into = "NetworkDoc")]
pub struct Network {
    node_count: usize,
    edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
    attributes: Vec<EdgeAttributes>,
    /// External label of each node (1-based TNTP id for loaded networks).
    node_labels: Vec<u64>,
}

impl Network {
    /// Builds a network and verifies it is simple and strongly connected.
    pub fn new(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let net = Self::build(node_count, edges, None, None)?;
        net.check_strongly_connected()?;
        Ok(net)
    }

    /// Like [`Network::new`] but skips the strong-connectivity check. Only meant
    /// for analysis fixtures that are not traffic networks in their own right.
    pub fn fixture(node_count: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        Self::build(node_count, edges, None, None)
    }

    pub fn with_attributes(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        attributes: Vec<EdgeAttributes>,
        node_labels: Vec<u64>,
    ) -> Result<Self> {
        let net = Self::build(node_count, edges, Some(attributes), Some(node_labels))?;
        net.check_strongly_connected()?;
        Ok(net)
    }

    fn build(
        node_count: usize,
        edges: Vec<(usize, usize)>,
        attributes: Option<Vec<EdgeAttributes>>,
        node_labels: Option<Vec<u64>>,
    ) -> Result<Self> {
        if node_count == 0 {
            return Err(Error::Model("a network needs at least one node".into()));
        }
        let mut edge_index = HashMap::with_capacity(edges.len());
        for (k, &(t, h)) in edges.iter().enumerate() {
            if t >= node_count || h >= node_count {
                return Err(Error::Model(format!(
                    "edge {k} ({t}, {h}) references a node outside 0..{node_count}"
                )));
            }
            if t == h {
                return Err(Error::Model(format!("edge {k} is a self-loop on node {t}")));
            }
            if edge_index.insert((t, h), k).is_some() {
                return Err(Error::Model(format!("duplicate edge ({t}, {h})")));
            }
        }
        let attributes = attributes.unwrap_or_else(|| vec![EdgeAttributes::default(); edges.len()]);
        if attributes.len() != edges.len() {
            return Err(Error::Dimension(format!(
                "{} attribute records for {} edges",
                attributes.len(),
                edges.len()
            )));
        }
        let node_labels =
            node_labels.unwrap_or_else(|| (0..node_count as u64).map(|v| v + 1).collect());
        if node_labels.len() != node_count {
            return Err(Error::Dimension(format!(
                "{} node labels for {node_count} nodes",
                node_labels.len()
            )));
        }
        Ok(Self {
            node_count,
            edges,
            edge_index,
            attributes,
            node_labels,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, tail: usize, head: usize) -> Option<usize> {
        self.edge_index.get(&(tail, head)).copied()
    }

    pub fn attributes(&self) -> &[EdgeAttributes] {
        &self.attributes
    }

    pub fn node_labels(&self) -> &[u64] {
        &self.node_labels
    }

    /// Out-edges of every node, each list sorted by edge index.
    pub fn out_edges(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.node_count];
        for (k, &(t, _)) in self.edges.iter().enumerate() {
            out[t].push(k);
        }
        out
    }

    fn reach(&self, start: usize, forward: bool) -> Vec<bool> {
        let mut adj = vec![Vec::new(); self.node_count];
        for &(t, h) in &self.edges {
            if forward {
                adj[t].push(h);
            } else {
                adj[h].push(t);
            }
        }
        let mut seen = vec![false; self.node_count];
        let mut queue = VecDeque::from([start]);
        seen[start] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen
    }

    /// Returns an ordered pair `(from, to)` such that `to` is unreachable from
    /// `from`, or `None` when the digraph is strongly connected.
    pub fn unreachable_pair(&self) -> Option<(usize, usize)> {
        if let Some(v) = self.reach(0, true).iter().position(|&s| !s) {
            return Some((0, v));
        }
        self.reach(0, false).iter().position(|&s| !s).map(|v| (v, 0))
    }

    pub fn check_strongly_connected(&self) -> Result<()> {
        match self.unreachable_pair() {
            None => Ok(()),
            Some((from, to)) => Err(Error::Model(format!(
                "network is not strongly connected: node {to} is unreachable from node {from}"
            ))),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

impl PartialEq for Network {
    fn eq(&self, other: &Self) -> bool {
        self.node_count == other.node_count
            && self.edges == other.edges
            && self.attributes == other.attributes
            && self.node_labels == other.node_labels
    }
}

#[derive(Serialize, Deserialize)]
struct NetworkDoc {
    version: u32,
    node_count: usize,
    edges: Vec<(usize, usize)>,
    attributes: Vec<EdgeAttributes>,
    node_labels: Vec<u64>,
}

impl From<Network> for NetworkDoc {
    fn from(n: Network) -> Self {
        Self {
            version: SCHEMA_VERSION,
            node_count: n.node_count,
            edges: n.edges,
            attributes: n.attributes,
            node_labels: n.node_labels,
        }
    }
}

impl TryFrom<NetworkDoc> for Network {
    type Error = Error;

    fn try_from(doc: NetworkDoc) -> Result<Self> {
        if doc.version != SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "unsupported network schema version {}",
                doc.version
            )));
        }
        // Connectivity is not re-checked: fixtures may be serialized too.
        Self::build(
            doc.node_count,
            doc.edges,
            Some(doc.attributes),
            Some(doc.node_labels),
        )
    }
}
