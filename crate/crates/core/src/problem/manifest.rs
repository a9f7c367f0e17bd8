//! Versioned JSON manifests that rebuild an instance bit-exactly.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::generators::{
    gen_network_instance, gen_random_instance, gen_toy_instance_with, ordered_pairs,
};
use super::ProblemInstance;
use crate::error::{Error, Result};
use crate::network::load_tntp_file;

pub const MANIFEST_VERSION: u32 = 1;

/// Scalars shared by every route of a generated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelParams {
    pub lambda: f64,
    pub price_lower: f64,
    pub price_upper: f64,
    pub flow_upper: f64,
    pub noise_mean: f64,
    pub noise_std: f64,
    pub eps_fraction: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            price_lower: 0.0,
            price_upper: 10.0,
            flow_upper: 1.0,
            noise_mean: 0.5,
            noise_std: 0.5,
            eps_fraction: 0.5,
        }
    }
}

impl ModelParams {
    /// Prices in `[0, 1]`, `x_u = 2` and noise `1 ± 0.1`: flows stay well
    /// inside `(0, x_u)`, so the sample average is smooth near the solution.
    pub fn interior() -> Self {
        Self {
            lambda: 1.0,
            price_lower: 0.0,
            price_upper: 1.0,
            flow_upper: 2.0,
            noise_mean: 1.0,
            noise_std: 0.1,
            eps_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_std >= 0.0) {
            return Err(Error::Domain(format!("noise_std {} is negative", self.noise_std)));
        }
        if !self.noise_mean.is_finite() {
            return Err(Error::Domain("noise_mean must be finite".into()));
        }
        Ok(())
    }
}

/// Per-edge cost coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CostSpec {
    Constant { coe: f64, offset: f64 },
    /// Independent `U[0, max]` draws per edge.
    Uniform { coe_max: f64, offset_max: f64 },
    /// `coe = coe_scale · t_free · mean_capacity / capacity`,
    /// `offset = offset_scale · t_free`.
    FreeFlow { coe_scale: f64, offset_scale: f64 },
}

impl Default for CostSpec {
    fn default() -> Self {
        Self::Uniform {
            coe_max: 1.0,
            offset_max: 1.0,
        }
    }
}

/// Minimum mean flow per commodity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DemandSpec {
    Explicit(Vec<f64>),
    /// `l_k = fraction · Σ x_u` over the routes serving commodity `k`.
    RouteFraction(f64),
}

/// Ordered node pairs that receive routes on a loaded network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PairSelection {
    All,
    /// The first `count` ordered pairs in lexicographic order of node ids.
    Prefix { count: usize },
    /// Explicit pairs of file node ids.
    Explicit { pairs: Vec<(u64, u64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeneratorSpec {
    Toy4 {
        seed: u64,
        params: ModelParams,
        cost: CostSpec,
        demand: DemandSpec,
    },
    Random {
        routes: usize,
        /// Defaults to `routes / 5`.
        edges: Option<usize>,
        commodities: usize,
        seed: u64,
        params: ModelParams,
        cost: CostSpec,
        demand: DemandSpec,
    },
    Tntp {
        /// Relative paths resolve against the manifest's directory.
        network: PathBuf,
        network_sha256: Option<String>,
        pairs: PairSelection,
        max_per_pair: usize,
        max_length: usize,
        /// Commodity pairs as file node ids.
        commodities: Vec<(u64, u64)>,
        seed: u64,
        params: ModelParams,
        cost: CostSpec,
        demand: DemandSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceManifest {
    pub version: u32,
    #[serde(flatten)]
    pub generator: GeneratorSpec,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl InstanceManifest {
    pub fn new(generator: GeneratorSpec) -> Self {
        Self {
            version: MANIFEST_VERSION,
            generator,
        }
    }

    /// Fixture values for the four-node instance. They are chosen so that
    /// near the optimum every sampled flow is strictly inside `(0, x_u)` and
    /// the first commodity's demand binds.
    pub fn toy4() -> Self {
        Self::new(GeneratorSpec::Toy4 {
            seed: 7,
            params: ModelParams {
                lambda: 1.0,
                price_lower: 0.0,
                price_upper: 1.0,
                flow_upper: 2.0,
                noise_mean: 1.0,
                noise_std: 0.05,
                eps_fraction: 0.5,
            },
            cost: CostSpec::Constant {
                coe: 0.1,
                offset: 0.1,
            },
            demand: DemandSpec::Explicit(vec![1.2, 0.5]),
        })
    }

    pub fn random(routes: usize, edges: Option<usize>, commodities: usize, seed: u64) -> Self {
        Self::new(GeneratorSpec::Random {
            routes,
            edges,
            commodities,
            seed,
            params: ModelParams::default(),
            cost: CostSpec::default(),
            demand: DemandSpec::RouteFraction(0.1),
        })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Model(format!(
                "unsupported instance manifest version {}",
                m.version
            )));
        }
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Hash of the canonical JSON form.
    pub fn digest(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }

    pub fn build(&self) -> Result<ProblemInstance> {
        self.build_in(Path::new("."))
    }

    /// Builds the instance, resolving relative file paths against `base`.
    pub fn build_in(&self, base: &Path) -> Result<ProblemInstance> {
        match &self.generator {
            GeneratorSpec::Toy4 {
                seed,
                params,
                cost,
                demand,
            } => gen_toy_instance_with(params, cost, demand, *seed),
            GeneratorSpec::Random {
                routes,
                edges,
                commodities,
                seed,
                params,
                cost,
                demand,
            } => gen_random_instance(*routes, *edges, *commodities, *seed, params, cost, demand),
            GeneratorSpec::Tntp {
                network,
                network_sha256,
                pairs,
                max_per_pair,
                max_length,
                commodities,
                seed,
                params,
                cost,
                demand,
            } => {
                let path = if network.is_absolute() {
                    network.clone()
                } else {
                    base.join(network)
                };
                if let Some(expected) = network_sha256 {
                    let got = sha256_hex(&std::fs::read(&path)?);
                    if &got != expected {
                        return Err(Error::Model(format!(
                            "{} has sha256 {got}, manifest expects {expected}",
                            path.display()
                        )));
                    }
                }
                let net = load_tntp_file(&path)?;
                let index_of = |label: u64| {
                    net.node_labels()
                        .iter()
                        .position(|&l| l == label)
                        .ok_or_else(|| Error::Model(format!("node id {label} is not in the network")))
                };
                let all = ordered_pairs(net.node_count());
                let route_pairs = match pairs {
                    PairSelection::All => all,
                    PairSelection::Prefix { count } => {
                        if *count > all.len() {
                            return Err(Error::Domain(format!(
                                "pair prefix {count} exceeds {} ordered pairs",
                                all.len()
                            )));
                        }
                        all[..*count].to_vec()
                    }
                    PairSelection::Explicit { pairs } => pairs
                        .iter()
                        .map(|&(s, t)| Ok((index_of(s)?, index_of(t)?)))
                        .collect::<Result<_>>()?,
                };
                let commodity_pairs: Vec<(usize, usize)> = commodities
                    .iter()
                    .map(|&(s, t)| Ok((index_of(s)?, index_of(t)?)))
                    .collect::<Result<_>>()?;
                gen_network_instance(
                    net,
                    &route_pairs,
                    *max_per_pair,
                    *max_length,
                    &commodity_pairs,
                    *seed,
                    params,
                    cost,
                    demand,
                )
            }
        }
    }
}
