//! Problem coefficients: congestion cost, elasticity, noise, bounds, and the
//! instance generators.

mod cost;
mod elasticity;
pub mod generators;
mod instance;
mod manifest;
mod scenarios;

pub use cost::{build_cost, CostModel};
pub use elasticity::{gen_elasticity, CovarianceFactor, ElasticityModel, PSD_REPAIR_TOL};
pub use generators::{
    gen_random_instance, gen_scalar_instance, gen_toy_instance, ScalarSpec,
};
pub use instance::ProblemInstance;
pub use manifest::{
    sha256_hex, CostSpec, DemandSpec, GeneratorSpec, InstanceManifest, ModelParams,
    PairSelection, MANIFEST_VERSION,
};
pub use scenarios::{column_rng, sample_scenarios, ScenarioSet};
