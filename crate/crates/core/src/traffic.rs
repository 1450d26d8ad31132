//! Traffic equations `xi_i = lambda_ext_i + sum_k a_ki xi_k`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::routes;

/// Net arrival rate at every node, indexed like `NetworkSpec::nodes`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrafficSolution {
    pub xi: Vec<f64>,
    /// `xi_i < mu_i`.
    pub stable: Vec<bool>,
    /// `mu_i - xi_i`, the rate of the exponential sojourn time at a stable node.
    pub residual_rates: Vec<f64>,
}

impl TrafficSolution {
    fn from_xi(spec: &NetworkSpec, xi: Vec<f64>) -> Self {
        let residual_rates: Vec<f64> = spec.nodes().iter().zip(&xi).map(|(n, x)| n.mu - x).collect();
        let stable = residual_rates.iter().map(|&r| r > 0.0).collect();
        Self { xi, stable, residual_rates }
    }

    pub fn all_stable(&self) -> bool {
        self.stable.iter().all(|&s| s)
    }

    pub fn unstable_nodes(&self, spec: &NetworkSpec) -> Vec<String> {
        self.stable.iter().zip(spec.nodes()).filter(|(s, _)| !**s).map(|(_, n)| n.id.clone()).collect()
    }

    /// Rate of flow from each node straight to the destination.
    pub fn exit_flows(&self, spec: &NetworkSpec) -> Vec<f64> {
        self.xi.iter().enumerate().map(|(i, x)| x * spec.exit_probability(i)).collect()
    }
}

/// Solves the traffic equations. Feed-forward networks use forward
/// substitution in topological order; cyclic ones solve `(I - A^T) xi = lambda_ext`.
pub fn solve_traffic(spec: &NetworkSpec) -> Result<TrafficSolution> {
    let ext = spec.external_rates();
    let a = spec.routing();
    let n = ext.len();

    let xi = match routes::topological_order(spec) {
        Some(order) => {
            let mut xi = ext;
            for &k in &order {
                let flow = xi[k];
                for (j, &akj) in a[k].iter().enumerate() {
                    if akj > 0.0 {
                        xi[j] += akj * flow;
                    }
                }
            }
            xi
        }
        None => {
            let m = DMatrix::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 } - a[j][i]);
            let lu = m.lu();
            // an exactly-zero pivot is not the only way to be singular here
            let pivots_ok = {
                let u = lu.u();
                (0..n).all(|k| u[(k, k)].abs() > 1e-12)
            };
            if !pivots_ok {
                return Err(Error::SingularRouting);
            }
            let sol = lu.solve(&DVector::from_vec(ext)).ok_or(Error::SingularRouting)?;
            if sol.iter().any(|x| !x.is_finite()) {
                return Err(Error::SingularRouting);
            }
            sol.iter().map(|&x| x.max(0.0)).collect()
        }
    };
    Ok(TrafficSolution::from_xi(spec, xi))
}
