use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::manifest::{CostSpec, DemandSpec, ModelParams};
use super::{build_cost, gen_elasticity, CostModel, CovarianceFactor, ElasticityModel, ProblemInstance};
use crate::error::{Error, Result};
use crate::network::{build_commodity, enumerate_routes, CommoditySpec, Network, RouteSet};

/// Fixed offsets deriving independent generator streams from one seed.
pub mod seed_offset {
    pub const GRAPH: u64 = 0;
    pub const ELASTICITY: u64 = 1;
    pub const COST: u64 = 2;
    pub const COMMODITY: u64 = 3;
    /// Scenario draws used by the command-line front end.
    pub const SCENARIOS: u64 = 1000;
}

/// Edges of the four-node test network, 0-based.
pub const TOY4_EDGES: [(usize, usize); 6] = [(0, 1), (1, 2), (2, 3), (3, 0), (1, 3), (3, 2)];

/// The sixteen routes of the four-node network as 1-based node sequences,
/// grouped by start node.
pub const TOY4_ROUTES: [&[usize]; 16] = [
    &[1, 2],
    &[1, 2, 3],
    &[1, 2, 3, 4],
    &[1, 2, 4],
    &[2, 3],
    &[2, 3, 4],
    &[2, 3, 4, 1],
    &[2, 4],
    &[2, 4, 1],
    &[3, 4],
    &[3, 4, 1],
    &[3, 4, 1, 2],
    &[4, 1],
    &[4, 1, 2],
    &[4, 1, 2, 3],
    &[4, 3],
];

/// Commodity pairs of the four-node network (0-based) and the single route
/// (0-based) serving each.
pub const TOY4_COMMODITIES: [((usize, usize), usize); 2] = [((0, 2), 1), ((1, 2), 4)];

pub fn toy4_network() -> Network {
    Network::new(4, TOY4_EDGES.to_vec()).expect("the four-node cycle is strongly connected")
}

pub fn toy4_routes(net: &Network) -> RouteSet {
    let paths: Vec<Vec<usize>> = TOY4_ROUTES
        .iter()
        .map(|p| p.iter().map(|v| v - 1).collect())
        .collect();
    RouteSet::from_node_paths(net, &paths).expect("route table matches the network")
}

fn rng_for(seed: u64, offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(offset))
}

fn edge_costs(net: &Network, spec: &CostSpec, seed: u64) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = net.edge_count();
    Ok(match spec {
        CostSpec::Constant { coe, offset } => (vec![*coe; m], vec![*offset; m]),
        CostSpec::Uniform { coe_max, offset_max } => {
            use rand::Rng;
            let mut rng = rng_for(seed, seed_offset::COST);
            let coe = (0..m).map(|_| coe_max * rng.random::<f64>()).collect();
            let offset = (0..m).map(|_| offset_max * rng.random::<f64>()).collect();
            (coe, offset)
        }
        CostSpec::FreeFlow { coe_scale, offset_scale } => {
            let attrs = net.attributes();
            let caps: Vec<f64> = attrs.iter().map(|a| a.capacity).filter(|c| *c > 0.0).collect();
            if caps.is_empty() {
                return Err(Error::Model("free-flow costs need positive link capacities".into()));
            }
            let mean_cap = caps.iter().sum::<f64>() / caps.len() as f64;
            let coe = attrs
                .iter()
                .map(|a| {
                    let cap = if a.capacity > 0.0 { a.capacity } else { mean_cap };
                    (coe_scale * a.free_flow_time * mean_cap / cap).max(0.0)
                })
                .collect();
            let offset = attrs
                .iter()
                .map(|a| (offset_scale * a.free_flow_time).max(0.0))
                .collect();
            (coe, offset)
        }
    })
}

fn demand_vector(spec: &DemandSpec, commodity: &CommoditySpec, x_upper: &DVector<f64>) -> Result<Vec<f64>> {
    match spec {
        DemandSpec::Explicit(v) => Ok(v.clone()),
        DemandSpec::RouteFraction(f) => {
            if !(*f >= 0.0) {
                return Err(Error::Domain(format!("demand fraction {f} is negative")));
            }
            let k = commodity.matrix();
            Ok((0..k.nrows())
                .map(|row| f * k.row(row).0.iter().map(|&r| x_upper[r]).sum::<f64>())
                .collect())
        }
    }
}

/// Assembles an instance from routes, commodity pattern and shared scalars;
/// elasticity comes from [`gen_elasticity`] with noise `N(mean·1, std²·I)`.
fn assemble(
    network: Network,
    routes: RouteSet,
    pairs: &[(usize, usize)],
    selection: Option<&[(usize, usize)]>,
    params: &ModelParams,
    cost: &CostSpec,
    demand: &DemandSpec,
    seed: u64,
) -> Result<ProblemInstance> {
    params.validate()?;
    let r = routes.len();
    let x_upper = DVector::from_element(r, params.flow_upper);
    let pattern = build_commodity(&routes, pairs, selection, vec![0.0; pairs.len()])?;
    let commodity = pattern.clone().with_demand_lower(demand_vector(demand, &pattern, &x_upper)?)?;
    let (coe, offset) = edge_costs(&network, cost, seed)?;
    let cost = build_cost(&routes, coe, offset)?;
    let elasticity = gen_elasticity(r, params.eps_fraction, seed.wrapping_add(seed_offset::ELASTICITY))?
        .with_noise(
            DVector::from_element(r, params.noise_mean),
            CovarianceFactor::isotropic(r, params.noise_std),
        )?;
    ProblemInstance::new(
        network,
        routes,
        commodity,
        cost,
        elasticity,
        params.lambda,
        (
            DVector::from_element(r, params.price_lower),
            DVector::from_element(r, params.price_upper),
        ),
        x_upper,
    )
}

/// The four-node, sixteen-route test instance.
pub fn gen_toy_instance_with(
    params: &ModelParams,
    cost: &CostSpec,
    demand: &DemandSpec,
    seed: u64,
) -> Result<ProblemInstance> {
    let net = toy4_network();
    let routes = toy4_routes(&net);
    let pairs: Vec<(usize, usize)> = TOY4_COMMODITIES.iter().map(|(p, _)| *p).collect();
    let selection: Vec<(usize, usize)> = TOY4_COMMODITIES
        .iter()
        .enumerate()
        .map(|(k, (_, r))| (k, *r))
        .collect();
    assemble(net, routes, &pairs, Some(&selection), params, cost, demand, seed)
}

/// The four-node instance with the repository's fixture parameters.
pub fn gen_toy_instance() -> ProblemInstance {
    super::InstanceManifest::toy4()
        .build()
        .expect("the four-node fixture manifest is valid")
}

/// Node count for a random network with `edges` edges: about `√(2·edges) + 1`,
/// at most `edges` so that the spanning ring fits.
pub fn random_node_count(edges: usize) -> usize {
    let n = ((2.0 * edges as f64).sqrt().ceil() as usize + 1).min(edges);
    n.max(2)
}

/// A strongly connected digraph: a ring through a random node permutation
/// plus random chords, edges sorted lexicographically.
pub fn gen_random_network(nodes: usize, edges: usize, seed: u64) -> Result<Network> {
    if nodes < 2 || edges < nodes || edges > nodes * (nodes - 1) {
        return Err(Error::Domain(format!(
            "cannot build a strongly connected simple digraph with {nodes} nodes and {edges} edges"
        )));
    }
    let mut rng = rng_for(seed, seed_offset::GRAPH);
    let mut perm: Vec<usize> = (0..nodes).collect();
    perm.shuffle(&mut rng);
    let mut chosen: BTreeSet<(usize, usize)> =
        (0..nodes).map(|i| (perm[i], perm[(i + 1) % nodes])).collect();
    let mut candidates: Vec<(usize, usize)> = (0..nodes)
        .flat_map(|s| (0..nodes).map(move |t| (s, t)))
        .filter(|&(s, t)| s != t && !chosen.contains(&(s, t)))
        .collect();
    candidates.shuffle(&mut rng);
    chosen.extend(candidates.into_iter().take(edges - nodes));
    Network::new(nodes, chosen.into_iter().collect())
}

const RANDOM_GRAPH_ATTEMPTS: u64 = 32;

/// Random instance with `routes` routes on `edges` edges (default
/// `routes / 5`) and `commodities` commodity pairs.
///
/// Candidate routes are the shortest simple paths of every ordered pair, up to
/// a per-pair cap; `routes` of them are drawn at random and kept in candidate
/// order. If the graph has too few simple paths a new graph is drawn from a
/// derived seed.
#[allow(clippy::too_many_arguments)]
pub fn gen_random_instance(
    routes: usize,
    edges: Option<usize>,
    commodities: usize,
    seed: u64,
    params: &ModelParams,
    cost: &CostSpec,
    demand: &DemandSpec,
) -> Result<ProblemInstance> {
    let edges = edges.unwrap_or(routes / 5);
    if routes == 0 || edges < 2 {
        return Err(Error::Domain(format!(
            "random instance needs routes > 0 and at least 2 edges, got {routes} routes, {edges} edges"
        )));
    }
    let nodes = random_node_count(edges);
    for attempt in 0..RANDOM_GRAPH_ATTEMPTS {
        let graph_seed = seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let net = gen_random_network(nodes, edges, graph_seed)?;
        let pairs: Vec<(usize, usize)> = (0..nodes)
            .flat_map(|s| (0..nodes).filter(move |&t| t != s).map(move |t| (s, t)))
            .collect();
        let mut per_pair = (2 * routes).div_ceil(pairs.len()) + 1;
        let mut pool = enumerate_routes(&net, &pairs, per_pair, nodes - 1)?;
        while pool.len() < routes {
            per_pair *= 2;
            let bigger = enumerate_routes(&net, &pairs, per_pair, nodes - 1)?;
            if bigger.len() == pool.len() {
                break;
            }
            pool = bigger;
        }
        if pool.len() < routes {
            log::debug!(
                "random graph attempt {attempt}: {} simple paths for {routes} routes",
                pool.len()
            );
            continue;
        }
        let mut rng = rng_for(seed, seed_offset::COMMODITY);
        let mut picked = index::sample(&mut rng, pool.len(), routes).into_vec();
        picked.sort_unstable();
        let selected: Vec<Vec<usize>> = picked.iter().map(|&i| pool.routes()[i].clone()).collect();
        let route_set = RouteSet::from_edge_routes(&net, selected)?;
        let served: BTreeSet<(usize, usize)> = route_set.source_sink().iter().copied().collect();
        let mut served: Vec<(usize, usize)> = served.into_iter().collect();
        if commodities > served.len() {
            return Err(Error::Domain(format!(
                "{commodities} commodities requested but only {} pairs are served",
                served.len()
            )));
        }
        served.shuffle(&mut rng);
        let mut pairs: Vec<(usize, usize)> = served.into_iter().take(commodities).collect();
        pairs.sort_unstable();
        return assemble(net, route_set, &pairs, None, params, cost, demand, seed);
    }
    Err(Error::Domain(format!(
        "no random graph with {edges} edges has {routes} simple paths"
    )))
}

/// Which ordered node pairs receive routes, in lexicographic order of their
/// 0-based indices.
pub fn ordered_pairs(nodes: usize) -> Vec<(usize, usize)> {
    (0..nodes)
        .flat_map(|s| (0..nodes).filter(move |&t| t != s).map(move |t| (s, t)))
        .collect()
}

/// Instance on a loaded network: routes enumerated for `pairs`, commodity rows
/// for `commodities` (0-based), costs seeded from link attributes or `cost`.
#[allow(clippy::too_many_arguments)]
pub fn gen_network_instance(
    net: Network,
    pairs: &[(usize, usize)],
    max_per_pair: usize,
    max_length: usize,
    commodities: &[(usize, usize)],
    seed: u64,
    params: &ModelParams,
    cost: &CostSpec,
    demand: &DemandSpec,
) -> Result<ProblemInstance> {
    let routes = enumerate_routes(&net, pairs, max_per_pair, max_length)?;
    assemble(net, routes, commodities, None, params, cost, demand, seed)
}

/// Parameters of the one-route analysis fixtures.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarSpec {
    pub lambda: f64,
    pub elasticity: f64,
    /// The scalar `Q`.
    pub quad: f64,
    /// The scalar `s` (any sign).
    pub linear: f64,
    pub x_upper: f64,
    pub noise_mean: f64,
    pub noise_std: f64,
    pub price_bounds: (f64, f64),
    /// Minimum mean flow, if the route forms a commodity.
    pub demand: Option<f64>,
}

impl ScalarSpec {
    /// `f(p) = (λ/2)p² − min{0.5, max{0, −p}}`: elasticity −1, `Q = 0`,
    /// `s = 1`, `x_u = 0.5`, no noise.
    pub fn nonconvex(lambda: f64) -> Self {
        Self {
            lambda,
            elasticity: -1.0,
            quad: 0.0,
            linear: 1.0,
            x_upper: 0.5,
            noise_mean: 0.0,
            noise_std: 0.0,
            price_bounds: (-1.0, 1.0),
            demand: None,
        }
    }
}

/// One route on a two-node cycle, built from explicit scalars.
pub fn gen_scalar_instance(spec: &ScalarSpec) -> Result<ProblemInstance> {
    let net = Network::new(2, vec![(0, 1), (1, 0)])?;
    let routes = RouteSet::from_edge_routes(&net, vec![vec![0]])?;
    if !(spec.quad >= 0.0) {
        return Err(Error::Domain(format!("scalar quad {} is negative", spec.quad)));
    }
    let cost: CostModel = build_cost(&routes, vec![spec.quad / 2.0, 0.0], vec![0.0; 2])?
        .with_linear_term(DVector::from_element(1, spec.linear))?;
    let commodity = match spec.demand {
        Some(l) => build_commodity(&routes, &[(0, 1)], None, vec![l])?,
        None => CommoditySpec::empty(1),
    };
    let elasticity = ElasticityModel::new(
        DMatrix::from_element(1, 1, spec.elasticity),
        DVector::from_element(1, spec.noise_mean),
        CovarianceFactor::Diagonal(vec![spec.noise_std]),
    )?;
    ProblemInstance::new(
        net,
        routes,
        commodity,
        cost,
        elasticity,
        spec.lambda,
        (
            DVector::from_element(1, spec.price_bounds.0),
            DVector::from_element(1, spec.price_bounds.1),
        ),
        DVector::from_element(1, spec.x_upper),
    )
}
