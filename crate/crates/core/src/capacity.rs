//! Classical capacity (bits/sec) of queue-channels and feed-forward networks.
//!
//! With exponential coherence, `p(w) = 1 - exp(-kappa w)`, every survival
//! probability is a product of Laplace transforms `r / (kappa + r)` of the
//! exponential sojourn times, for both network types. Other erasure models go
//! through [`hypoexp_expectation`].

use std::fmt;

use crate::erasure::ErasureModel;
use crate::error::{Error, Result};
use crate::network::{NetworkSpec, NetworkType};
use crate::quadrature::{hypoexp_expectation_with_breaks, SojournLaw};
use crate::routes::{enumerate_routes, Route};
use crate::traffic::{solve_traffic, TrafficSolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CapacityMethod {
    ClosedForm,
    Quadrature,
}

impl fmt::Display for CapacityMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClosedForm => "closed_form",
            Self::Quadrature => "quadrature",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteContribution {
    pub route: Route,
    pub probability: f64,
    /// Probability that a qubit on this route arrives unerased.
    pub survival: f64,
    /// `lambda_s * probability * survival`.
    pub contribution: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CapacityReport {
    pub source: String,
    pub lambda: f64,
    /// Capacity in bits/sec.
    pub capacity: f64,
    pub routes: Vec<RouteContribution>,
    pub method: CapacityMethod,
}

/// `E[exp(-kappa W)]` for `W ~ Exp(r)`.
pub fn laplace_exp_waiting(r: f64, kappa: f64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Domain(format!("residual rate must be > 0, got {r}")));
    }
    if !(kappa >= 0.0) {
        return Err(Error::Domain(format!("kappa must be >= 0, got {kappa}")));
    }
    Ok(r / (kappa + r))
}

/// Survival probability along a sequence of exponential sojourn times.
fn survival_along(rates: &[f64], erasure: &ErasureModel, network_type: NetworkType) -> Result<(f64, CapacityMethod)> {
    if let Some(kappa) = erasure.kappa() {
        let mut s = 1.0;
        for &r in rates {
            s *= laplace_exp_waiting(r, kappa)?;
        }
        return Ok((s, CapacityMethod::ClosedForm));
    }
    let breaks = erasure.breakpoints();
    let q = |w: f64| erasure.survival(w);
    let s = match network_type {
        NetworkType::RepeaterAssisted => {
            let mut s = 1.0;
            for &r in rates {
                s *= hypoexp_expectation_with_breaks(&SojournLaw::new(vec![r])?, q, &breaks)?;
            }
            s
        }
        NetworkType::RepeaterLess => hypoexp_expectation_with_breaks(&SojournLaw::new(rates.to_vec())?, q, &breaks)?,
    };
    Ok((s.clamp(0.0, 1.0), CapacityMethod::Quadrature))
}

fn check_rate(lambda: f64) -> Result<()> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(Error::Domain(format!("arrival rate must be finite and >= 0, got {lambda}")));
    }
    Ok(())
}

/// `lambda * E[1 - p(W)]`, `W ~ Exp(mu - lambda)`.
pub fn single_queue_capacity(lambda: f64, mu: f64, erasure: &ErasureModel) -> Result<f64> {
    tandem_capacity(lambda, &[mu], erasure, NetworkType::RepeaterAssisted)
}

/// Capacity of `mus.len()` queues in series, each seeing rate `lambda`.
pub fn tandem_capacity(lambda: f64, mus: &[f64], erasure: &ErasureModel, network_type: NetworkType) -> Result<f64> {
    check_rate(lambda)?;
    if mus.is_empty() {
        return Err(Error::Domain("tandem needs at least one queue".into()));
    }
    let unstable: Vec<String> =
        mus.iter().enumerate().filter(|(_, &mu)| lambda >= mu).map(|(k, _)| format!("i{}", k + 1)).collect();
    if !unstable.is_empty() {
        return Err(Error::Unstable { nodes: unstable });
    }
    let rates: Vec<f64> = mus.iter().map(|mu| mu - lambda).collect();
    Ok(lambda * survival_along(&rates, erasure, network_type)?.0)
}

/// Two parallel queues; a qubit joins queue 1 with probability `delta`.
/// The network type is irrelevant here (one queue per route) but accepted for
/// symmetry with the other entry points.
pub fn parallel_capacity(
    lambda: f64,
    delta: f64,
    mu1: f64,
    mu2: f64,
    erasure: &ErasureModel,
    network_type: NetworkType,
) -> Result<f64> {
    check_rate(lambda)?;
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::Domain(format!("routing probability must lie in [0, 1], got {delta}")));
    }
    let (l1, l2) = (lambda * delta, lambda * (1.0 - delta));
    let mut unstable = Vec::new();
    if l1 >= mu1 {
        unstable.push("i1".to_string());
    }
    if l2 >= mu2 {
        unstable.push("i2".to_string());
    }
    if !unstable.is_empty() {
        return Err(Error::Unstable { nodes: unstable });
    }
    let s1 = survival_along(&[mu1 - l1], erasure, network_type)?.0;
    let s2 = survival_along(&[mu2 - l2], erasure, network_type)?.0;
    Ok(l1 * s1 + l2 * s2)
}

/// Probability that a qubit following `route` is delivered unerased.
pub fn route_survival(
    route: &Route,
    traffic: &TrafficSolution,
    erasure: &ErasureModel,
    network_type: NetworkType,
) -> Result<f64> {
    let unstable: Vec<String> = route.nodes.iter().filter(|&&i| !traffic.stable[i]).map(|i| format!("#{i}")).collect();
    if !unstable.is_empty() {
        return Err(Error::Unstable { nodes: unstable });
    }
    let rates: Vec<f64> = route.nodes.iter().map(|&i| traffic.residual_rates[i]).collect();
    Ok(survival_along(&rates, erasure, network_type)?.0)
}

/// Per-route capacity breakdown for one source of a feed-forward network.
pub fn jackson_capacity(spec: &NetworkSpec, source: &str) -> Result<CapacityReport> {
    let s = spec.source_index(source)?;
    let routes = enumerate_routes(spec, s)?;
    let traffic = solve_traffic(spec)?;
    if !traffic.all_stable() {
        return Err(Error::Unstable { nodes: traffic.unstable_nodes(spec) });
    }
    let lambda = spec.sources()[s].lambda;
    let mut method = CapacityMethod::ClosedForm;
    let mut parts = Vec::with_capacity(routes.len());
    for route in routes {
        let rates: Vec<f64> = route.nodes.iter().map(|&i| traffic.residual_rates[i]).collect();
        let (survival, m) = survival_along(&rates, spec.erasure(), spec.network_type())?;
        method = m;
        let probability = route.probability;
        parts.push(RouteContribution { route, probability, survival, contribution: lambda * probability * survival });
    }
    // route probabilities sum to one; dividing by their float sum keeps
    // `capacity == lambda` exact when nothing is erased
    let mass: f64 = parts.iter().map(|p| p.probability).sum();
    let kept: f64 = parts.iter().map(|p| p.probability * p.survival).sum();
    let capacity = if mass > 0.0 { (lambda * (kept / mass)).min(lambda) } else { 0.0 };
    Ok(CapacityReport { source: spec.sources()[s].id.clone(), lambda, capacity, routes: parts, method })
}

/// [`jackson_capacity`] for every source, in declaration order.
pub fn jackson_capacity_all(spec: &NetworkSpec) -> Result<Vec<CapacityReport>> {
    spec.sources().iter().map(|s| jackson_capacity(spec, &s.id)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{Node, Source};

    const RA: NetworkType = NetworkType::RepeaterAssisted;
    const RL: NetworkType = NetworkType::RepeaterLess;

    fn exp(k: f64) -> ErasureModel {
        ErasureModel::exponential(k).unwrap()
    }

    pub(crate) fn split_spec(network_type: NetworkType) -> NetworkSpec {
        let nodes = vec![
            Node { id: "i1".into(), mu: 3.0 },
            Node { id: "i2".into(), mu: 2.0 },
            Node { id: "i3".into(), mu: 2.0 },
        ];
        let sources = vec![Source { id: "s1".into(), lambda: 1.0, entry: vec![1.0, 0.0, 0.0] }];
        let routing = vec![vec![0.0, 0.4, 0.6], vec![0.0; 3], vec![0.0; 3]];
        NetworkSpec::new(nodes, sources, routing, network_type, exp(1.0)).unwrap()
    }

    #[test]
    fn laplace_transform_values() {
        assert_eq!(laplace_exp_waiting(1.0, 1.0).unwrap(), 0.5);
        assert_eq!(laplace_exp_waiting(3.7, 0.0).unwrap(), 1.0);
        // integral of 0.5 e^{-0.5 w} e^{-w} over [0, inf) = 0.5 / 1.5
        assert!((laplace_exp_waiting(0.5, 1.0).unwrap() - 1.0 / 3.0).abs() < 1e-16);
        assert!(laplace_exp_waiting(0.0, 1.0).is_err());
        assert!(laplace_exp_waiting(-1.0, 1.0).is_err());
    }

    #[test]
    fn single_queue_values() {
        assert!((single_queue_capacity(0.5, 1.0, &exp(1.0)).unwrap() - 0.5 * 0.5 / 1.5).abs() < 1e-15);
        assert_eq!(single_queue_capacity(0.5, 1.0, &exp(0.0)).unwrap(), 0.5);
        assert_eq!(single_queue_capacity(0.0, 1.0, &exp(1.0)).unwrap(), 0.0);
        assert!(single_queue_capacity(1e-9, 1.0, &exp(1.0)).unwrap() < 1e-9);
        assert!(matches!(single_queue_capacity(1.0, 1.0, &exp(1.0)), Err(Error::Unstable { .. })));
    }

    #[test]
    fn tandem_values() {
        let c = tandem_capacity(0.5, &[1.0, 1.0], &exp(1.0), RA).unwrap();
        assert!((c - 1.0 / 18.0).abs() < 1e-15);
        assert_eq!(tandem_capacity(0.5, &[1.0, 1.0], &exp(1.0), RL).unwrap(), c);
        assert_eq!(tandem_capacity(0.4, &[1.0, 2.0, 0.5], &exp(0.0), RL).unwrap(), 0.4);
        assert!(
            matches!(tandem_capacity(0.6, &[1.0, 0.6], &exp(1.0), RA), Err(Error::Unstable { nodes }) if nodes == ["i2"])
        );
    }

    #[test]
    fn tandem_of_one_is_single_queue_for_general_erasure() {
        let table =
            ErasureModel::Table(crate::erasure::ErasureTable::new(vec![(0.0, 0.0), (1.0, 0.4), (3.0, 1.0)]).unwrap());
        let single = single_queue_capacity(0.3, 1.1, &table).unwrap();
        for ty in [RA, RL] {
            assert_eq!(tandem_capacity(0.3, &[1.1], &table, ty).unwrap(), single);
        }
    }

    #[test]
    fn general_erasure_tandem_types_differ() {
        // step erasure at w = 1: repeater-assisted checks each node separately
        let step = ErasureModel::custom(|w| if w > 1.0 { 1.0 } else { 0.0 });
        let ra = tandem_capacity(0.5, &[1.5, 1.5], &step, RA).unwrap();
        let rl = tandem_capacity(0.5, &[1.5, 1.5], &step, RL).unwrap();
        // W_i ~ Exp(1): RA = P(W <= 1)^2 = (1 - 1/e)^2; RL = P(Erlang(2,1) <= 1) = 1 - 2/e
        assert!((ra / 0.5 - (-(-1.0f64).exp_m1()).powi(2)).abs() < 1e-8);
        assert!((rl / 0.5 - (1.0 - 2.0 / std::f64::consts::E)).abs() < 1e-8);
    }

    #[test]
    fn parallel_values() {
        let c = parallel_capacity(1.0, 0.5, 2.0, 3.0, &exp(1.0), RA).unwrap();
        assert!((c - (0.5 * 1.5 / 2.5 + 0.5 * 2.5 / 3.5)).abs() < 1e-15);
        assert_eq!(
            parallel_capacity(0.7, 1.0, 2.0, 3.0, &exp(1.0), RA).unwrap(),
            single_queue_capacity(0.7, 2.0, &exp(1.0)).unwrap()
        );
        let homogeneous = parallel_capacity(1.2, 0.5, 1.0, 1.0, &exp(0.8), RL).unwrap();
        let reduced = 1.2 * (1.0 - 0.6) / (0.8 + 1.0 - 0.6);
        assert!((homogeneous - reduced).abs() < 1e-15);
        assert!(
            matches!(parallel_capacity(3.0, 0.7, 2.0, 3.0, &exp(1.0), RA), Err(Error::Unstable { nodes }) if nodes == ["i1"])
        );
    }

    #[test]
    fn route_survival_values() {
        let spec = split_spec(RA);
        let t = solve_traffic(&spec).unwrap();
        let routes = enumerate_routes(&spec, 0).unwrap();
        let s = route_survival(&routes[0], &t, spec.erasure(), RA).unwrap();
        assert!((s - (2.0 / 3.0) * (1.6 / 2.6)).abs() < 1e-15);
        assert_eq!(route_survival(&routes[0], &t, &exp(0.0), RL).unwrap(), 1.0);

        let one = Route { source: 0, nodes: vec![0], probability: 1.0 };
        let t1 = TrafficSolution { xi: vec![0.5], stable: vec![true], residual_rates: vec![0.5] };
        assert!((route_survival(&one, &t1, &exp(1.0), RA).unwrap() - 1.0 / 3.0).abs() < 1e-16);
    }

    #[test]
    fn split_network_capacity() {
        let r = jackson_capacity(&split_spec(RA), "s1").unwrap();
        let want = 0.4 * (2.0 / 3.0) * (1.6 / 2.6) + 0.6 * (2.0 / 3.0) * (1.4 / 2.4);
        assert!((r.capacity - want).abs() < 1e-15);
        assert!((r.capacity - 0.39744).abs() < 1e-5);
        assert_eq!(r.routes.len(), 2);
        assert_eq!(r.method, CapacityMethod::ClosedForm);
        let sum: f64 = r.routes.iter().map(|c| c.contribution).sum();
        assert!((sum - r.capacity).abs() < 1e-12);
        assert_eq!(jackson_capacity(&split_spec(RL), "s1").unwrap().capacity, r.capacity);
    }

    #[test]
    fn jackson_errors() {
        let spec = split_spec(RA);
        assert!(matches!(jackson_capacity(&spec, "nope"), Err(Error::UnknownSource(_))));
        // xi = (3.5, 1.4, 2.1) against mu = (3, 2, 2)
        let hot = spec.with_source_rate(0, 3.5).unwrap();
        assert!(matches!(jackson_capacity(&hot, "s1"), Err(Error::Unstable { nodes }) if nodes == ["i1", "i3"]));
    }

    #[test]
    fn table_erasure_at_edge_of_stability() {
        let points = vec![(0.0, 0.0), (1.0, 0.4), (3.0, 1.0)];
        let model = ErasureModel::Table(crate::erasure::ErasureTable::new(points).unwrap());
        for gap in [1e-6, 1e-12] {
            let lambda = 1.0 - gap;
            let c = tandem_capacity(lambda, &[1.0, 2.0], &model, RL).unwrap();
            // S = Exp(gap) + Exp(2 - lambda), integrated by Simpson over [0, 3]
            let (a, b) = (gap, 2.0 - lambda);
            let density = |w: f64| a * b / (b - a) * ((-a * w).exp() - (-b * w).exp());
            let q = |w: f64| if w < 1.0 { 1.0 - 0.4 * w } else { 0.6 * (3.0 - w) / 2.0 };
            let n = 30_000;
            let h = 3.0 / n as f64;
            let simpson: f64 = (0..=n)
                .map(|k| {
                    let w = k as f64 * h;
                    let weight = if k == 0 || k == n {
                        1.0
                    } else if k % 2 == 1 {
                        4.0
                    } else {
                        2.0
                    };
                    weight * q(w) * density(w)
                })
                .sum::<f64>()
                * h
                / 3.0;
            assert!((c - lambda * simpson).abs() < 1e-9, "gap={gap}: {c} vs {}", lambda * simpson);
        }
    }

    #[test]
    fn jackson_reduces_to_tandem_and_parallel() {
        let t = NetworkSpec::tandem(0.45, &[1.0, 1.3, 0.9], exp(0.7), RL).unwrap();
        let c = jackson_capacity(&t, "s1").unwrap().capacity;
        assert!((c - tandem_capacity(0.45, &[1.0, 1.3, 0.9], &exp(0.7), RL).unwrap()).abs() < 1e-12);

        let p = NetworkSpec::parallel(1.9, 0.35, 2.0, 3.0, exp(1.0), RA).unwrap();
        let c = jackson_capacity(&p, "s1").unwrap().capacity;
        assert!((c - parallel_capacity(1.9, 0.35, 2.0, 3.0, &exp(1.0), RA).unwrap()).abs() < 1e-12);
    }
}
