use nalgebra::DVector;

use super::{CostModel, ElasticityModel};
use crate::error::{check_len, Error, Result};
use crate::network::{CommoditySpec, Network, RouteSet};

/// Every coefficient of the sample-average pricing problem except the
/// scenarios themselves.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    network: Network,
    routes: RouteSet,
    commodity: CommoditySpec,
    cost: CostModel,
    elasticity: ElasticityModel,
    lambda: f64,
    p_lower: DVector<f64>,
    p_upper: DVector<f64>,
    x_upper: DVector<f64>,
}

impl ProblemInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        network: Network,
        routes: RouteSet,
        commodity: CommoditySpec,
        cost: CostModel,
        elasticity: ElasticityModel,
        lambda: f64,
        p_bounds: (DVector<f64>, DVector<f64>),
        x_upper: DVector<f64>,
    ) -> Result<Self> {
        let inst = Self {
            network,
            routes,
            commodity,
            cost,
            elasticity,
            lambda,
            p_lower: p_bounds.0,
            p_upper: p_bounds.1,
            x_upper,
        };
        inst.validate()?;
        Ok(inst)
    }

    fn validate(&self) -> Result<()> {
        let r = self.routes.len();
        check_len("route edge count", self.routes.edge_count(), self.network.edge_count())?;
        check_len("cost routes", self.cost.route_count(), r)?;
        check_len("cost edges", self.cost.edge_count(), self.network.edge_count())?;
        check_len("elasticity", self.elasticity.dim(), r)?;
        check_len("commodity columns", self.commodity.matrix().ncols(), r)?;
        check_len("price lower bound", self.p_lower.len(), r)?;
        check_len("price upper bound", self.p_upper.len(), r)?;
        check_len("flow upper bound", self.x_upper.len(), r)?;
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::Domain(format!("lambda {} must be nonnegative", self.lambda)));
        }
        for j in 0..r {
            if !(self.p_lower[j] <= self.p_upper[j]) {
                return Err(Error::Domain(format!(
                    "route {j}: price bounds [{}, {}] are inverted",
                    self.p_lower[j], self.p_upper[j]
                )));
            }
            if !(self.x_upper[j] > 0.0) {
                return Err(Error::Domain(format!(
                    "route {j}: flow upper bound {} must be positive",
                    self.x_upper[j]
                )));
            }
        }
        Ok(())
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn routes(&self) -> &RouteSet {
        &self.routes
    }

    pub fn commodity(&self) -> &CommoditySpec {
        &self.commodity
    }

    pub fn cost(&self) -> &CostModel {
        &self.cost
    }

    pub fn elasticity(&self) -> &ElasticityModel {
        &self.elasticity
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn p_lower(&self) -> &DVector<f64> {
        &self.p_lower
    }

    pub fn p_upper(&self) -> &DVector<f64> {
        &self.p_upper
    }

    pub fn x_upper(&self) -> &DVector<f64> {
        &self.x_upper
    }

    pub fn route_count(&self) -> usize {
        self.routes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.network.edge_count()
    }

    pub fn commodity_count(&self) -> usize {
        self.commodity.len()
    }

    /// `(p_l + p_u)/2`; a coordinate with one infinite bound starts at the
    /// finite one, and a free coordinate at 0.
    pub fn midpoint(&self) -> DVector<f64> {
        DVector::from_iterator(
            self.route_count(),
            self.p_lower.iter().zip(self.p_upper.iter()).map(|(&l, &u)| {
                match (l.is_finite(), u.is_finite()) {
                    (true, true) => 0.5 * (l + u),
                    (true, false) => l,
                    (false, true) => u,
                    (false, false) => 0.0,
                }
            }),
        )
    }

    pub fn with_lambda(mut self, lambda: f64) -> Result<Self> {
        self.lambda = lambda;
        self.validate()?;
        Ok(self)
    }

    pub fn with_price_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        self.p_lower = lower;
        self.p_upper = upper;
        self.validate()?;
        Ok(self)
    }

    pub fn with_flow_upper(mut self, x_upper: DVector<f64>) -> Result<Self> {
        self.x_upper = x_upper;
        self.validate()?;
        Ok(self)
    }

    pub fn with_elasticity(mut self, elasticity: ElasticityModel) -> Result<Self> {
        self.elasticity = elasticity;
        self.validate()?;
        Ok(self)
    }

    pub fn with_commodity(mut self, commodity: CommoditySpec) -> Result<Self> {
        self.commodity = commodity;
        self.validate()?;
        Ok(self)
    }

    pub fn with_cost(mut self, cost: CostModel) -> Result<Self> {
        self.cost = cost;
        self.validate()?;
        Ok(self)
    }
}
