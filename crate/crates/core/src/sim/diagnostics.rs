use super::{SimTrace, WARMUP_FRACTION};
use crate::error::{Error, Result};

/// Minimum post-warm-up departures for [`departure_diagnostics`].
pub const MIN_DEPARTURES: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepartureDiagnostics {
    pub departures: usize,
    pub ks_statistic: f64,
    pub p_value: f64,
    pub mean_interdeparture: f64,
}

/// Tests whether departures from `node` form a Poisson stream at the node's
/// throughput, as they should for a stable `./M/1` queue fed by Poisson
/// traffic. Kolmogorov-Smirnov on the interdeparture times against
/// `Exp(xi_node)`, after dropping the first 10% of departures.
pub fn departure_diagnostics(trace: &SimTrace, node: usize) -> Result<DepartureDiagnostics> {
    let rate = *trace.node_throughput.get(node).ok_or_else(|| Error::UnknownNode(format!("#{node}")))?;
    let mut times = Vec::new();
    for rec in &trace.records {
        let mut t = rec.emit_time;
        for hop in &rec.hops {
            t += hop.sojourn;
            if hop.node as usize == node {
                times.push(t);
            }
        }
    }
    times.sort_by(f64::total_cmp);
    let warmup = (times.len() as f64 * WARMUP_FRACTION).floor() as usize;
    let times = &times[warmup..];
    if times.len() < MIN_DEPARTURES || rate <= 0.0 {
        return Err(Error::InsufficientData(format!(
            "node `{}` has {} post-warm-up departures, need {MIN_DEPARTURES}",
            trace.node_ids[node],
            times.len()
        )));
    }
    let mut gaps: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    let mean_interdeparture = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let (ks_statistic, p_value) = ks_exponential(&mut gaps, rate);
    Ok(DepartureDiagnostics { departures: times.len(), ks_statistic, p_value, mean_interdeparture })
}

/// One-sample KS test against `Exp(rate)`; sorts `samples` in place and
/// returns `(D, p-value)`.
pub fn ks_exponential(samples: &mut [f64], rate: f64) -> (f64, f64) {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in samples.iter().enumerate() {
        let cdf = -(-rate * x.max(0.0)).exp_m1();
        d = d.max((i + 1) as f64 / n - cdf).max(cdf - i as f64 / n);
    }
    (d, kolmogorov_pvalue(d, samples.len()))
}

/// Asymptotic p-value `P(D_n > d)` with Stephens' small-sample correction.
pub fn kolmogorov_pvalue(d: f64, n: usize) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let sn = (n as f64).sqrt();
    let x = (sn + 0.12 + 0.11 / sn) * d;
    if x <= 0.0 {
        return 1.0;
    }
    let p = if x < 1.18 {
        // Jacobi-theta form converges fast for small x
        let s: f64 = (1..=20)
            .map(|k| {
                let j = (2 * k - 1) as f64;
                (-j * j * std::f64::consts::PI.powi(2) / (8.0 * x * x)).exp()
            })
            .sum();
        1.0 - (2.0 * std::f64::consts::PI).sqrt() / x * s
    } else {
        2.0 * (1..=100)
            .map(|k| {
                let k = k as f64;
                let sign = if k as u64 % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * k * k * x * x).exp()
            })
            .sum::<f64>()
    };
    p.clamp(0.0, 1.0)
}
