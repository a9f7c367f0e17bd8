use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::network::RouteSet;
use crate::sparse::CsrMatrix;

/// Linear per-edge congestion cost. The quadratic coefficient `Q = 2ÃÃᵀ` is
/// never materialized here; it is only available through [`CostModel::apply_q`]
/// and friends, with `Ã = A·Diag(√c_coe)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CostModel {
    coe: Vec<f64>,
    offset: Vec<f64>,
    scaled_assignment: CsrMatrix,
    scaled_transpose: CsrMatrix,
    linear: DVector<f64>,
}

/// Builds `Ã = A·Diag(√coe)` and `s = −A·offset`.
pub fn build_cost(routes: &RouteSet, coe: Vec<f64>, offset: Vec<f64>) -> Result<CostModel> {
    let edges = routes.edge_count();
    check_len("cost coefficient", coe.len(), edges)?;
    check_len("cost offset", offset.len(), edges)?;
    for (name, v) in [("coefficient", &coe), ("offset", &offset)] {
        if let Some((e, x)) = v.iter().enumerate().find(|(_, x)| !(**x >= 0.0) || !x.is_finite()) {
            return Err(Error::Domain(format!("edge {e} has cost {name} {x}")));
        }
    }
    let a = routes.assignment();
    let sqrt_coe: Vec<f64> = coe.iter().map(|c| c.sqrt()).collect();
    let scaled_assignment = a.scale_columns(&sqrt_coe)?;
    let scaled_transpose = scaled_assignment.transpose();
    let linear = DVector::from_iterator(a.nrows(), a.mul_vec(&offset).into_iter().map(|v| -v));
    Ok(CostModel {
        coe,
        offset,
        scaled_assignment,
        scaled_transpose,
        linear,
    })
}

impl CostModel {
    pub fn route_count(&self) -> usize {
        self.scaled_assignment.nrows()
    }

    pub fn edge_count(&self) -> usize {
        self.scaled_assignment.ncols()
    }

    pub fn coe(&self) -> &[f64] {
        &self.coe
    }

    pub fn offset(&self) -> &[f64] {
        &self.offset
    }

    /// `Ã`, one row per route.
    pub fn scaled_assignment(&self) -> &CsrMatrix {
        &self.scaled_assignment
    }

    /// `Ãᵀ`, one row per edge.
    pub fn scaled_transpose(&self) -> &CsrMatrix {
        &self.scaled_transpose
    }

    /// The linear coefficient `s`.
    pub fn linear(&self) -> &DVector<f64> {
        &self.linear
    }

    /// Replaces `s` with an arbitrary vector. Analysis fixtures use this for
    /// linear terms that are not of the form `−A·c_os`.
    pub fn with_linear_term(mut self, s: DVector<f64>) -> Result<Self> {
        check_len("linear term", s.len(), self.route_count())?;
        self.linear = s;
        Ok(self)
    }

    /// `Q·X = 2·Ã·(Ãᵀ·X)`.
    pub fn apply_q(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        check_len("apply_q rows", x.nrows(), self.route_count())?;
        let inner = self.scaled_transpose.mul_dense(x);
        Ok(self.scaled_assignment.mul_dense(&inner) * 2.0)
    }

    pub fn apply_q_vec(&self, x: &[f64]) -> Vec<f64> {
        let inner = self.scaled_transpose.mul_vec(x);
        self.scaled_assignment
            .mul_vec(&inner)
            .into_iter()
            .map(|v| 2.0 * v)
            .collect()
    }

    /// `⟨Qx, x⟩ = 2‖Ãᵀx‖²`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        let u = self.scaled_transpose.mul_vec(x);
        2.0 * u.iter().map(|v| v * v).sum::<f64>()
    }

    /// `Q` in sparse form: one entry per pair of routes sharing an edge.
    pub fn q_sparse(&self) -> CsrMatrix {
        let r = self.route_count();
        let mut acc = vec![0.0; r];
        let mut seen = vec![false; r];
        let mut triplets = Vec::new();
        for j in 0..r {
            let mut touched = Vec::new();
            let (edges, aj) = self.scaled_assignment.row(j);
            for (&e, &a) in edges.iter().zip(aj) {
                let (routes, ae) = self.scaled_transpose.row(e);
                for (&k, &b) in routes.iter().zip(ae) {
                    if !seen[k] {
                        seen[k] = true;
                        touched.push(k);
                    }
                    acc[k] += 2.0 * a * b;
                }
            }
            touched.sort_unstable();
            for k in touched {
                triplets.push((j, k, acc[k]));
                acc[k] = 0.0;
                seen[k] = false;
            }
        }
        CsrMatrix::from_triplets(r, r, &triplets).expect("indices are in range")
    }

    /// Dense `Q`, for the dense evaluation path and diagnostics only.
    pub fn q_dense(&self) -> DMatrix<f64> {
        let a = self.scaled_assignment.to_dense();
        (&a * a.transpose()) * 2.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Network;

    /// Routes and edges of the three-node analysis example:
    /// edges (0,1), (2,0), (2,1); routes 0→1, 2→0, 2→0→1, 2→1.
    fn three_node_routes() -> RouteSet {
        let net = Network::fixture(3, vec![(0, 1), (2, 0), (2, 1)]).unwrap();
        RouteSet::from_node_paths(&net, &[vec![0, 1], vec![2, 0], vec![2, 0, 1], vec![2, 1]])
            .unwrap()
    }

    #[test]
    fn reproduces_three_node_matrices() {
        let rs = three_node_routes();
        let a = rs.assignment().to_dense();
        #[rustfmt::skip]
        let expected_a = DMatrix::from_row_slice(4, 3, &[
            1.0, 0.0, 0.0,
            0.0, 1.0, 0.0,
            1.0, 1.0, 0.0,
            0.0, 0.0, 1.0,
        ]);
        assert_eq!(a, expected_a);
        let cost = build_cost(&rs, vec![1.0; 3], vec![0.0; 3]).unwrap();
        #[rustfmt::skip]
        let ca = DMatrix::from_row_slice(4, 4, &[
            1.0, 0.0, 1.0, 0.0,
            0.0, 1.0, 1.0, 0.0,
            1.0, 1.0, 2.0, 0.0,
            0.0, 0.0, 0.0, 1.0,
        ]);
        let q = cost.apply_q(&DMatrix::identity(4, 4)).unwrap();
        assert_eq!(q, &ca * 2.0);
        // Column for route 2→0→1.
        let e3 = DMatrix::from_column_slice(4, 1, &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(
            cost.apply_q(&e3).unwrap().as_slice(),
            &[2.0, 2.0, 4.0, 0.0]
        );
        assert!(cost.linear().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn zero_coefficients_give_zero_q() {
        let rs = three_node_routes();
        let cost = build_cost(&rs, vec![0.0; 3], vec![1.0, 2.0, 3.0]).unwrap();
        let x = DMatrix::from_fn(4, 3, |i, j| (i as f64) - (j as f64));
        assert_eq!(cost.apply_q(&x).unwrap(), DMatrix::zeros(4, 3));
        assert_eq!(cost.linear().as_slice(), &[-1.0, -2.0, -3.0, -3.0]);
    }

    #[test]
    fn rejects_bad_inputs() {
        let rs = three_node_routes();
        assert!(matches!(
            build_cost(&rs, vec![1.0, -1.0, 1.0], vec![0.0; 3]),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            build_cost(&rs, vec![1.0; 2], vec![0.0; 3]),
            Err(Error::Dimension(_))
        ));
        let cost = build_cost(&rs, vec![1.0; 3], vec![0.0; 3]).unwrap();
        assert!(matches!(
            cost.apply_q(&DMatrix::zeros(3, 1)),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn quad_form_matches_apply() {
        let rs = three_node_routes();
        let cost = build_cost(&rs, vec![0.5, 2.0, 3.0], vec![1.0; 3]).unwrap();
        let x = [0.3, -1.2, 0.7, 2.0];
        let qx = cost.apply_q_vec(&x);
        let direct: f64 = qx.iter().zip(&x).map(|(a, b)| a * b).sum();
        assert!((direct - cost.quad_form(&x)).abs() < 1e-12);
    }
}
