use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Network, SCHEMA_VERSION};
use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Routes as simple directed paths, with the route–edge assignment matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RouteSetDoc", into = "RouteSetDoc")]
pub struct RouteSet {
    routes: Vec<Vec<usize>>,
    source_sink: Vec<(usize, usize)>,
    assignment: CsrMatrix,
    edge_count: usize,
}

impl RouteSet {
    /// Validates each route as a simple path in `net` and assembles `A`.
    pub fn from_edge_routes(net: &Network, routes: Vec<Vec<usize>>) -> Result<Self> {
        Self::assemble(net.edges(), routes)
    }

    /// Builds routes from node sequences, e.g. `[0, 1, 2]` for `0 → 1 → 2`.
    pub fn from_node_paths(net: &Network, paths: &[Vec<usize>]) -> Result<Self> {
        let mut routes = Vec::with_capacity(paths.len());
        for path in paths {
            if path.len() < 2 {
                return Err(Error::Model(format!("route {path:?} has no edge")));
            }
            let route = path
                .windows(2)
                .map(|w| {
                    net.edge(w[0], w[1]).ok_or_else(|| {
                        Error::Model(format!("route {path:?} uses missing edge ({}, {})", w[0], w[1]))
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            routes.push(route);
        }
        Self::assemble(net.edges(), routes)
    }

    fn assemble(edges: &[(usize, usize)], routes: Vec<Vec<usize>>) -> Result<Self> {
        if routes.is_empty() {
            return Err(Error::Model("a route set needs at least one route".into()));
        }
        let mut source_sink = Vec::with_capacity(routes.len());
        for (r, route) in routes.iter().enumerate() {
            if route.is_empty() {
                return Err(Error::Model(format!("route {r} is empty")));
            }
            let mut visited = HashSet::new();
            let mut at = None;
            for &e in route {
                let &(t, h) = edges.get(e).ok_or_else(|| {
                    Error::Model(format!("route {r} references edge {e} of {}", edges.len()))
                })?;
                if let Some(prev) = at {
                    if prev != t {
                        return Err(Error::Model(format!("route {r} is not a connected path")));
                    }
                } else {
                    visited.insert(t);
                }
                if !visited.insert(h) {
                    return Err(Error::Model(format!("route {r} revisits node {h}")));
                }
                at = Some(h);
            }
            source_sink.push((edges[route[0]].0, at.unwrap()));
        }
        let assignment = CsrMatrix::from_pattern(edges.len(), &routes)?;
        Ok(Self {
            routes,
            source_sink,
            assignment,
            edge_count: edges.len(),
        })
    }

    pub fn len(&self) -> usize {
        self.routes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.routes.is_empty()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn routes(&self) -> &[Vec<usize>] {
        &self.routes
    }

    pub fn source_sink(&self) -> &[(usize, usize)] {
        &self.source_sink
    }

    /// The 0/1 route–edge matrix `A` (|routes| × |edges|).
    pub fn assignment(&self) -> &CsrMatrix {
        &self.assignment
    }

    /// Node sequence of route `r` under `net`.
    pub fn node_path(&self, net: &Network, r: usize) -> Vec<usize> {
        let route = &self.routes[r];
        let mut nodes = vec![net.edges()[route[0]].0];
        nodes.extend(route.iter().map(|&e| net.edges()[e].1));
        nodes
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

#[derive(Serialize, Deserialize)]
struct RouteSetDoc {
    version: u32,
    edge_count: usize,
    routes: Vec<Vec<usize>>,
    source_sink: Vec<(usize, usize)>,
}

impl From<RouteSet> for RouteSetDoc {
    fn from(r: RouteSet) -> Self {
        Self {
            version: SCHEMA_VERSION,
            edge_count: r.edge_count,
            routes: r.routes,
            source_sink: r.source_sink,
        }
    }
}

impl TryFrom<RouteSetDoc> for RouteSet {
    type Error = Error;

    fn try_from(doc: RouteSetDoc) -> Result<Self> {
        if doc.version != SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "unsupported route schema version {}",
                doc.version
            )));
        }
        let assignment = CsrMatrix::from_pattern(doc.edge_count, &doc.routes)?;
        if doc.source_sink.len() != doc.routes.len() {
            return Err(Error::Dimension("source_sink length differs from routes".into()));
        }
        Ok(Self {
            routes: doc.routes,
            source_sink: doc.source_sink,
            assignment,
            edge_count: doc.edge_count,
        })
    }
}

/// Simple paths from `source` to `sink` with exactly `hops` edges, in
/// lexicographic order of their edge-index sequence. Stops after `limit`.
fn paths_with_hops(
    out_edges: &[Vec<usize>],
    edges: &[(usize, usize)],
    source: usize,
    sink: usize,
    hops: usize,
    limit: usize,
    found: &mut Vec<Vec<usize>>,
) {
    struct Search<'a> {
        out_edges: &'a [Vec<usize>],
        edges: &'a [(usize, usize)],
        sink: usize,
        hops: usize,
        limit: usize,
        on_path: Vec<bool>,
        path: Vec<usize>,
    }

    impl Search<'_> {
        fn dfs(&mut self, at: usize, found: &mut Vec<Vec<usize>>) {
            if found.len() >= self.limit {
                return;
            }
            if self.path.len() == self.hops {
                if at == self.sink {
                    found.push(self.path.clone());
                }
                return;
            }
            // The sink may only be entered on the last hop.
            for &e in &self.out_edges[at] {
                let next = self.edges[e].1;
                if self.on_path[next] || (next == self.sink && self.path.len() + 1 != self.hops) {
                    continue;
                }
                self.on_path[next] = true;
                self.path.push(e);
                self.dfs(next, found);
                self.path.pop();
                self.on_path[next] = false;
            }
        }
    }

    let mut search = Search {
        out_edges,
        edges,
        sink,
        hops,
        limit,
        on_path: vec![false; out_edges.len()],
        path: Vec::with_capacity(hops),
    };
    search.on_path[source] = true;
    search.dfs(source, found);
}

/// Enumerates up to `max_per_pair` simple paths of at most `max_length` edges
/// for every pair, shortest first by hop count with ties broken by the
/// lexicographic edge-index sequence. Routes are concatenated in pair order;
/// a pair repeated in `pairs` contributes no new routes.
pub fn enumerate_routes(
    net: &Network,
    pairs: &[(usize, usize)],
    max_per_pair: usize,
    max_length: usize,
) -> Result<RouteSet> {
    if max_per_pair == 0 || max_length == 0 {
        return Err(Error::Domain("max_per_pair and max_length must be positive".into()));
    }
    for &(s, t) in pairs {
        if s >= net.node_count() || t >= net.node_count() {
            return Err(Error::Model(format!("pair ({s}, {t}) references a missing node")));
        }
        if s == t {
            return Err(Error::Model(format!("pair ({s}, {t}) has source equal to sink")));
        }
    }
    let out_edges = net.out_edges();
    let per_pair: Vec<Vec<Vec<usize>>> = pairs
        .par_iter()
        .map(|&(s, t)| {
            let mut found = Vec::new();
            for hops in 1..=max_length.min(net.node_count() - 1) {
                if found.len() >= max_per_pair {
                    break;
                }
                paths_with_hops(&out_edges, net.edges(), s, t, hops, max_per_pair, &mut found);
            }
            found
        })
        .collect();

    let mut seen = HashSet::new();
    let mut routes = Vec::new();
    for (&(s, t), found) in pairs.iter().zip(per_pair) {
        if found.is_empty() {
            return Err(Error::Model(format!(
                "pair ({s}, {t}) has no simple path within {max_length} edges"
            )));
        }
        for route in found {
            if seen.insert(route.clone()) {
                routes.push(route);
            }
        }
    }
    RouteSet::from_edge_routes(net, routes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy4() -> Network {
        Network::new(4, vec![(0, 1), (1, 2), (2, 3), (3, 0), (1, 3), (3, 2)]).unwrap()
    }

    fn all_pairs(n: usize) -> Vec<(usize, usize)> {
        (0..n)
            .flat_map(|s| (0..n).filter(move |&t| t != s).map(move |t| (s, t)))
            .collect()
    }

    #[test]
    fn single_route_on_two_node_cycle() {
        let net = Network::new(2, vec![(0, 1), (1, 0)]).unwrap();
        let rs = enumerate_routes(&net, &[(0, 1)], 5, 5).unwrap();
        assert_eq!(rs.routes(), &[vec![0]]);
        assert_eq!(rs.source_sink(), &[(0, 1)]);
    }

    #[test]
    fn ordering_is_hops_then_lexicographic() {
        let net = toy4();
        let rs = enumerate_routes(&net, &[(0, 3)], 10, 10).unwrap();
        // 0→1→3 (edges 0,4) before 0→1→2→3 (edges 0,1,2).
        assert_eq!(rs.routes(), &[vec![0, 4], vec![0, 1, 2]]);
        let capped = enumerate_routes(&net, &[(0, 3)], 1, 10).unwrap();
        assert_eq!(capped.routes(), &[vec![0, 4]]);
    }

    #[test]
    fn assignment_rows_match_routes() {
        let net = toy4();
        let rs = enumerate_routes(&net, &all_pairs(4), 100, 100).unwrap();
        let a = rs.assignment();
        assert_eq!(a.nnz(), rs.routes().iter().map(Vec::len).sum::<usize>());
        for (r, route) in rs.routes().iter().enumerate() {
            assert_eq!(a.row_sums()[r], route.len() as f64);
            for &e in route {
                assert_eq!(a.get(r, e), 1.0);
            }
        }
    }

    #[test]
    fn missing_path_names_the_pair() {
        let net = toy4();
        let err = enumerate_routes(&net, &[(2, 1)], 3, 2).unwrap_err();
        assert!(err.to_string().contains("(2, 1)"), "{err}");
    }

    #[test]
    fn invalid_routes_are_rejected() {
        let net = toy4();
        // 0→1 then 2→3 is disconnected.
        assert!(RouteSet::from_edge_routes(&net, vec![vec![0, 2]]).is_err());
        // 0→1→2→3→0 revisits node 0.
        assert!(RouteSet::from_edge_routes(&net, vec![vec![0, 1, 2, 3]]).is_err());
        assert!(RouteSet::from_edge_routes(&net, vec![vec![9]]).is_err());
    }

    #[test]
    fn duplicate_pairs_do_not_duplicate_routes() {
        let net = toy4();
        let once = enumerate_routes(&net, &[(0, 2)], 5, 5).unwrap();
        let twice = enumerate_routes(&net, &[(0, 2), (0, 2)], 5, 5).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn json_round_trip() {
        let net = toy4();
        let rs = enumerate_routes(&net, &all_pairs(4), 3, 3).unwrap();
        assert_eq!(RouteSet::from_json(&rs.to_json().unwrap()).unwrap(), rs);
    }
}
