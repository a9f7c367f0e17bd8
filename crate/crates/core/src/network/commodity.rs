use serde::{Deserialize, Serialize};

use super::{RouteSet, SCHEMA_VERSION};
use crate::error::{check_len, Error, Result};
use crate::sparse::CsrMatrix;

/// Source–sink pairs with their serving routes (`K`) and minimum flows (`l`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CommodityDoc", into = "CommodityDoc")]
pub struct CommoditySpec {
    pairs: Vec<(usize, usize)>,
    matrix: CsrMatrix,
    demand_lower: Vec<f64>,
}

impl CommoditySpec {
    /// A spec with no commodity rows, for unconstrained instances.
    pub fn empty(route_count: usize) -> Self {
        Self {
            pairs: Vec::new(),
            matrix: CsrMatrix::zeros(0, route_count),
            demand_lower: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn demand_lower(&self) -> &[f64] {
        &self.demand_lower
    }

    pub fn with_demand_lower(mut self, demand_lower: Vec<f64>) -> Result<Self> {
        check_demand(&demand_lower, self.pairs.len())?;
        self.demand_lower = demand_lower;
        Ok(self)
    }
}

fn check_demand(demand_lower: &[f64], pairs: usize) -> Result<()> {
    check_len("demand_lower", demand_lower.len(), pairs)?;
    if let Some(v) = demand_lower.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::Domain(format!("demand lower bound {v} is negative")));
    }
    Ok(())
}

/// Assembles `K`. Without `selection`, `K[k, r] = 1` for every route whose
/// source–sink equals `pairs[k]`; with it, exactly the listed `(k, r)` entries
/// are set and each must serve its pair.
pub fn build_commodity(
    routes: &RouteSet,
    pairs: &[(usize, usize)],
    selection: Option<&[(usize, usize)]>,
    demand_lower: Vec<f64>,
) -> Result<CommoditySpec> {
    check_demand(&demand_lower, pairs.len())?;
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); pairs.len()];
    match selection {
        None => {
            for (r, ss) in routes.source_sink().iter().enumerate() {
                for (k, pair) in pairs.iter().enumerate() {
                    if pair == ss {
                        rows[k].push(r);
                    }
                }
            }
        }
        Some(entries) => {
            for &(k, r) in entries {
                let pair = pairs.get(k).ok_or_else(|| {
                    Error::Model(format!("selection names commodity {k} of {}", pairs.len()))
                })?;
                let ss = routes.source_sink().get(r).ok_or_else(|| {
                    Error::Model(format!("selection names route {r} of {}", routes.len()))
                })?;
                if ss != pair {
                    return Err(Error::Model(format!(
                        "route {r} runs {ss:?} but commodity {k} is {pair:?}"
                    )));
                }
                if !rows[k].contains(&r) {
                    rows[k].push(r);
                }
            }
        }
    }
    if let Some(k) = rows.iter().position(Vec::is_empty) {
        return Err(Error::Model(format!(
            "commodity {k} {:?} is served by no route",
            pairs[k]
        )));
    }
    Ok(CommoditySpec {
        pairs: pairs.to_vec(),
        matrix: CsrMatrix::from_pattern(routes.len(), &rows)?,
        demand_lower,
    })
}

#[derive(Serialize, Deserialize)]
struct CommodityDoc {
    version: u32,
    route_count: usize,
    pairs: Vec<(usize, usize)>,
    routes_per_pair: Vec<Vec<usize>>,
    demand_lower: Vec<f64>,
}

impl From<CommoditySpec> for CommodityDoc {
    fn from(c: CommoditySpec) -> Self {
        let routes_per_pair = (0..c.matrix.nrows())
            .map(|k| c.matrix.row(k).0.to_vec())
            .collect();
        Self {
            version: SCHEMA_VERSION,
            route_count: c.matrix.ncols(),
            pairs: c.pairs,
            routes_per_pair,
            demand_lower: c.demand_lower,
        }
    }
}

impl TryFrom<CommodityDoc> for CommoditySpec {
    type Error = Error;

    fn try_from(doc: CommodityDoc) -> Result<Self> {
        if doc.version != SCHEMA_VERSION {
            return Err(Error::Model(format!(
                "unsupported commodity schema version {}",
                doc.version
            )));
        }
        check_len("routes_per_pair", doc.routes_per_pair.len(), doc.pairs.len())?;
        check_demand(&doc.demand_lower, doc.pairs.len())?;
        Ok(Self {
            matrix: CsrMatrix::from_pattern(doc.route_count, &doc.routes_per_pair)?,
            pairs: doc.pairs,
            demand_lower: doc.demand_lower,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{enumerate_routes, Network};

    fn star_routes() -> RouteSet {
        // Four distinct 0 → 3 paths.
        let net = Network::new(
            4,
            vec![(0, 1), (1, 3), (0, 2), (2, 3), (0, 3), (1, 2), (3, 0)],
        )
        .unwrap();
        enumerate_routes(&net, &[(0, 3)], 10, 10).unwrap()
    }

    #[test]
    fn default_mode_takes_every_matching_route() {
        let rs = star_routes();
        assert_eq!(rs.len(), 4);
        let k = build_commodity(&rs, &[(0, 3)], None, vec![0.5]).unwrap();
        assert_eq!(k.matrix().to_dense().row(0).iter().copied().collect::<Vec<_>>(), vec![1.0; 4]);
    }

    #[test]
    fn explicit_selection_must_match_pairs() {
        let rs = star_routes();
        let k = build_commodity(&rs, &[(0, 3)], Some(&[(0, 2)]), vec![0.0]).unwrap();
        assert_eq!(k.matrix().nnz(), 1);
        assert_eq!(k.matrix().get(0, 2), 1.0);
        let err = build_commodity(&rs, &[(1, 3)], Some(&[(0, 2)]), vec![0.0]).unwrap_err();
        assert!(matches!(err, Error::Model(_)));
    }

    #[test]
    fn demand_checks() {
        let rs = star_routes();
        assert!(matches!(
            build_commodity(&rs, &[(0, 3)], None, vec![-1.0]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            build_commodity(&rs, &[(0, 3)], None, vec![]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn unserved_pair_is_rejected() {
        let rs = star_routes();
        assert!(build_commodity(&rs, &[(3, 0)], None, vec![0.0]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let rs = star_routes();
        let k = build_commodity(&rs, &[(0, 3)], Some(&[(0, 1), (0, 3)]), vec![0.25]).unwrap();
        let text = serde_json::to_string(&k).unwrap();
        assert_eq!(serde_json::from_str::<CommoditySpec>(&text).unwrap(), k);
    }
}
