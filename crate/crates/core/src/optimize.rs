//! Capacity-maximizing transmission rates and routing splits.

use std::fmt;

use crate::capacity::jackson_capacity;
use crate::error::{Error, Result};
use crate::network::NetworkSpec;
use crate::traffic::solve_traffic;

/// Grid resolution of [`maximize_scalar`] before golden refinement.
pub const GRID_CELLS: usize = 512;
/// Number of grid local maxima refined by golden-section search.
pub const REFINED_CELLS: usize = 3;
pub const LAMBDA_TOL: f64 = 1e-6;
pub const DELTA_TOL: f64 = 1e-8;
const MAX_GOLDEN_ITERS: usize = 400;
const INV_PHI: f64 = 0.618_033_988_749_894_8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SearchMethod {
    ClosedForm,
    GoldenSection,
    GridRefine,
}

impl fmt::Display for SearchMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ClosedForm => "closed_form",
            Self::GoldenSection => "golden_section",
            Self::GridRefine => "grid_refine",
        })
    }
}

/// The same optimum computed by a second method.
#[derive(Debug, Clone, PartialEq)]
pub struct Certification {
    pub method: SearchMethod,
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    pub capacity: f64,
    /// Largest absolute difference between the two argmax coordinates.
    pub argument_gap: f64,
    pub value_gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub lambda: Option<f64>,
    pub delta: Option<f64>,
    /// bits/sec at the argmax.
    pub capacity: f64,
    pub method: SearchMethod,
    pub certification: Option<Certification>,
}

impl Optimum {
    fn certify(mut self, method: SearchMethod, lambda: Option<f64>, delta: Option<f64>, capacity: f64) -> Self {
        let gap = |a: Option<f64>, b: Option<f64>| match (a, b) {
            (Some(x), Some(y)) => (x - y).abs(),
            (None, None) => 0.0,
            _ => f64::NAN,
        };
        let argument_gap = gap(self.lambda, lambda).max(gap(self.delta, delta));
        self.certification = Some(Certification {
            method,
            lambda,
            delta,
            capacity,
            argument_gap,
            value_gap: (self.capacity - capacity).abs(),
        });
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarMax {
    pub x: f64,
    pub value: f64,
}

fn finite_or_neg_inf(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

/// Maximizes `f` over `[lo, hi]`: a grid of [`GRID_CELLS`] cells, then
/// golden-section refinement around the best [`REFINED_CELLS`] grid local
/// maxima. Non-finite values count as `-inf`. Copes with non-concave
/// objectives as long as the grid resolves their peaks.
pub fn maximize_scalar(f: impl Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> Result<ScalarMax> {
    if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Domain(format!("search interval [{lo}, {hi}] is empty")));
    }
    if !(tol > 0.0) {
        return Err(Error::Domain(format!("search tolerance must be > 0, got {tol}")));
    }
    let f = |x: f64| finite_or_neg_inf(f(x));
    let step = (hi - lo) / GRID_CELLS as f64;
    let xs: Vec<f64> = (0..=GRID_CELLS).map(|k| if k == GRID_CELLS { hi } else { lo + step * k as f64 }).collect();
    let ys: Vec<f64> = xs.iter().map(|&x| f(x)).collect();

    let mut peaks: Vec<usize> = (0..xs.len())
        .filter(|&k| {
            let left = if k > 0 { ys[k - 1] } else { f64::NEG_INFINITY };
            let right = if k + 1 < ys.len() { ys[k + 1] } else { f64::NEG_INFINITY };
            ys[k] > f64::NEG_INFINITY && ys[k] >= left && ys[k] >= right
        })
        .collect();
    if peaks.is_empty() {
        return Err(Error::Infeasible("objective is not finite anywhere on the search interval".into()));
    }
    peaks.sort_by(|&a, &b| ys[b].total_cmp(&ys[a]).then(a.cmp(&b)));
    peaks.truncate(REFINED_CELLS);

    let mut best = ScalarMax { x: xs[peaks[0]], value: ys[peaks[0]] };
    for &k in &peaks {
        let a = xs[k.saturating_sub(1)];
        let b = xs[(k + 1).min(xs.len() - 1)];
        let cand = golden_section(&f, a, b, tol)?;
        if cand.value > best.value {
            best = cand;
        }
    }
    Ok(best)
}

/// Golden-section maximization on `[a, b]` until the bracket is narrower than `tol`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> Result<ScalarMax> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iters = 0;
    while b - a > tol {
        iters += 1;
        if iters > MAX_GOLDEN_ITERS || !(c < d) {
            return Err(Error::ToleranceNotMet { achieved: b - a });
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let (fa, fb) = (f(a), f(b));
    let mut best = ScalarMax { x: 0.5 * (a + b), value: f(0.5 * (a + b)) };
    for (x, v) in [(a, fa), (b, fb), (c, fc), (d, fd)] {
        if v > best.value {
            best = ScalarMax { x, value: v };
        }
    }
    Ok(best)
}

/// Capacity of a homogeneous tandem of `m` queues with service rate `mu`.
pub fn homogeneous_tandem_capacity(lambda: f64, m: u32, mu: f64, kappa: f64) -> f64 {
    let r = mu - lambda;
    if lambda < 0.0 || r < 0.0 {
        return f64::NEG_INFINITY;
    }
    lambda * (r / (kappa + r)).powi(m as i32)
}

/// Two-branch parallel capacity with exponential coherence; `-inf` when a
/// branch is unstable or `delta` leaves `[0, 1]`.
pub fn parallel_exp_capacity(lambda: f64, delta: f64, mu1: f64, mu2: f64, kappa: f64) -> f64 {
    if !(0.0..=1.0).contains(&delta) {
        return f64::NEG_INFINITY;
    }
    let (l1, l2) = (lambda * delta, lambda * (1.0 - delta));
    if l1 > mu1 || l2 > mu2 {
        return f64::NEG_INFINITY;
    }
    l1 * (mu1 - l1) / (kappa + mu1 - l1) + l2 * (mu2 - l2) / (kappa + mu2 - l2)
}

/// Parallel pair followed by a common queue with service rate `mu3`, written
/// as the sum of its two branch terms.
pub fn series_parallel_capacity(lambda: f64, delta: f64, mu1: f64, mu2: f64, mu3: f64, kappa: f64) -> f64 {
    if !(0.0..=1.0).contains(&delta) || lambda > mu3 {
        return f64::NEG_INFINITY;
    }
    let (l1, l2) = (lambda * delta, lambda * (1.0 - delta));
    if l1 > mu1 || l2 > mu2 {
        return f64::NEG_INFINITY;
    }
    let branch1 = l1 * (mu1 - l1) * (mu3 - lambda) / ((kappa + mu1 - l1) * (kappa + mu3 - lambda));
    let branch2 = l2 * (mu2 - l2) * (mu3 - lambda) / ((kappa + mu2 - l2) * (kappa + mu3 - lambda));
    branch1 + branch2
}

fn check_kappa(kappa: f64) -> Result<()> {
    if !(kappa > 0.0) || !kappa.is_finite() {
        return Err(Error::Domain(format!("kappa must be > 0, got {kappa}")));
    }
    Ok(())
}

/// Closed-form optimal rate of a homogeneous tandem with `mu = 1`, the root
/// in `(0, 1)` of `lambda^2 - (2 + (m+1) kappa) lambda + 1 + kappa = 0`.
pub fn tandem_rate_closed_form(m: u32, kappa: f64) -> f64 {
    let m = m as f64;
    let b = 2.0 + (m + 1.0) * kappa;
    0.5 * (b - kappa.sqrt() * (4.0 * m + (m + 1.0).powi(2) * kappa).sqrt())
}

/// Optimal transmission rate of a homogeneous tandem with unit service rates,
/// certified against a numerical search over `(0, 1)`.
pub fn optimal_tandem_rate(m: u32, kappa: f64) -> Result<Optimum> {
    if m < 1 {
        return Err(Error::Domain("tandem needs at least one queue".into()));
    }
    check_kappa(kappa)?;
    let lambda = tandem_rate_closed_form(m, kappa);
    let capacity = homogeneous_tandem_capacity(lambda, m, 1.0, kappa);
    let found = maximize_scalar(|l| homogeneous_tandem_capacity(l, m, 1.0, kappa), 0.0, 1.0, LAMBDA_TOL)?;
    Ok(Optimum { lambda: Some(lambda), delta: None, capacity, method: SearchMethod::ClosedForm, certification: None }
        .certify(SearchMethod::GridRefine, Some(found.x), None, found.value))
}

/// Homogeneous tandem with arbitrary service rate. Unit rates go through the
/// closed form; other rates are searched numerically.
pub fn optimal_homogeneous_tandem(m: u32, mu: f64, kappa: f64) -> Result<Optimum> {
    if mu == 1.0 {
        return optimal_tandem_rate(m, kappa);
    }
    if !(mu > 0.0) {
        return Err(Error::Domain(format!("service rate must be > 0, got {mu}")));
    }
    if m < 1 {
        return Err(Error::Domain("tandem needs at least one queue".into()));
    }
    check_kappa(kappa)?;
    let found = maximize_scalar(|l| homogeneous_tandem_capacity(l, m, mu, kappa), 0.0, mu, LAMBDA_TOL * mu)?;
    Ok(Optimum {
        lambda: Some(found.x),
        delta: None,
        capacity: found.value,
        method: SearchMethod::GridRefine,
        certification: None,
    })
}

/// Best split for a given `lambda` on homogeneous or heterogeneous branches.
fn search_split(capacity: impl Fn(f64) -> f64, lambda: f64, mu1: f64, mu2: f64, tol: f64) -> Result<ScalarMax> {
    let (lo, hi) = feasible_split(lambda, mu1, mu2)?;
    if hi - lo <= tol {
        let x = 0.5 * (lo + hi);
        return Ok(ScalarMax { x, value: capacity(x) });
    }
    maximize_scalar(capacity, lo, hi, tol)
}

/// Interval of `delta` keeping both branches stable.
pub fn feasible_split(lambda: f64, mu1: f64, mu2: f64) -> Result<(f64, f64)> {
    if !(lambda >= 0.0) || !(mu1 > 0.0) || !(mu2 > 0.0) {
        return Err(Error::Domain("rates must be positive".into()));
    }
    if lambda >= mu1 + mu2 {
        return Err(Error::Infeasible(format!(
            "no split keeps both branches stable: lambda = {lambda} >= mu1 + mu2 = {}",
            mu1 + mu2
        )));
    }
    if lambda == 0.0 {
        return Ok((0.0, 1.0));
    }
    Ok(((1.0 - mu2 / lambda).max(0.0), (mu1 / lambda).min(1.0)))
}

/// Closed-form optimum of two identical parallel queues, certified against a
/// nested grid-plus-golden search over `lambda` in `(0, 2 mu)` and `delta`.
pub fn optimal_homogeneous_parallel(mu: f64, kappa: f64) -> Result<Optimum> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::Domain(format!("service rate must be > 0, got {mu}")));
    }
    check_kappa(kappa)?;
    let lambda = 2.0 * (mu + kappa - (mu * kappa + kappa * kappa).sqrt());
    let capacity = parallel_exp_capacity(lambda, 0.5, mu, mu, kappa);

    let inner = |l: f64| {
        search_split(|d| parallel_exp_capacity(l, d, mu, mu, kappa), l, mu, mu, DELTA_TOL)
            .map(|m| m.value)
            .unwrap_or(f64::NEG_INFINITY)
    };
    let outer = maximize_scalar(inner, 0.0, 2.0 * mu * (1.0 - 1e-12), LAMBDA_TOL * mu)?;
    let split = search_split(|d| parallel_exp_capacity(outer.x, d, mu, mu, kappa), outer.x, mu, mu, DELTA_TOL)?;
    Ok(Optimum {
        lambda: Some(lambda),
        delta: Some(0.5),
        capacity,
        method: SearchMethod::ClosedForm,
        certification: None,
    }
    .certify(SearchMethod::GridRefine, Some(outer.x), Some(split.x), split.value))
}

/// Split formula for heterogeneous branches as printed in the source
/// literature. Its numerator contains a dimensionally inconsistent term; the
/// value is reported next to the searched optimum but never trusted.
pub fn printed_split_formula(lambda: f64, mu1: f64, mu2: f64, kappa: f64) -> Option<f64> {
    let den = lambda * lambda * (mu1 - mu2);
    if den == 0.0 {
        return None;
    }
    let root = (lambda * lambda * (kappa + mu1) * (kappa + mu2) * (2.0 * kappa - lambda + mu1 + mu2).powi(2)).sqrt();
    let rest = 2.0 * kappa * kappa * lambda + lambda * mu1 - 2.0 * lambda * mu1 * mu2
        + kappa * lambda * (lambda - 2.0 * (mu1 + mu2));
    let delta = root / den - rest / den;
    delta.is_finite().then_some(delta)
}

/// Best routing split for fixed `lambda` (exponential coherence). The search
/// result is authoritative; the printed formula rides along as the certification.
pub fn optimal_parallel_split(lambda: f64, mu1: f64, mu2: f64, kappa: f64) -> Result<Optimum> {
    check_kappa(kappa)?;
    let found = search_split(|d| parallel_exp_capacity(lambda, d, mu1, mu2, kappa), lambda, mu1, mu2, DELTA_TOL)?;
    let opt = Optimum {
        lambda: Some(lambda),
        delta: Some(found.x),
        capacity: found.value,
        method: SearchMethod::GoldenSection,
        certification: None,
    };
    let printed = printed_split_formula(lambda, mu1, mu2, kappa);
    let printed_value = printed.map_or(f64::NAN, |d| parallel_exp_capacity(lambda, d, mu1, mu2, kappa));
    let printed_value = if printed_value.is_finite() { printed_value } else { f64::NAN };
    Ok(opt.certify(SearchMethod::ClosedForm, Some(lambda), printed, printed_value))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeriesInvariance {
    pub delta_parallel: f64,
    pub delta_series: f64,
    pub gap: f64,
}

/// Optimal split of a parallel pair, with and without a common queue
/// `mu3` appended in series, found by identical searches.
pub fn series_invariance_check(lambda: f64, mu1: f64, mu2: f64, mu3: f64, kappa: f64) -> Result<SeriesInvariance> {
    check_kappa(kappa)?;
    if lambda >= mu3 {
        return Err(Error::Infeasible(format!("series queue unstable: lambda = {lambda} >= mu3 = {mu3}")));
    }
    let p = search_split(|d| parallel_exp_capacity(lambda, d, mu1, mu2, kappa), lambda, mu1, mu2, DELTA_TOL)?;
    let s = search_split(|d| series_parallel_capacity(lambda, d, mu1, mu2, mu3, kappa), lambda, mu1, mu2, DELTA_TOL)?;
    Ok(SeriesInvariance { delta_parallel: p.x, delta_series: s.x, gap: (p.x - s.x).abs() })
}

/// Largest rate of `source` keeping every node stable, other sources fixed.
pub fn source_rate_bound(spec: &NetworkSpec, source: usize) -> Result<f64> {
    let base = solve_traffic(&spec.with_source_rate(source, 0.0)?)?;
    if !base.all_stable() {
        return Err(Error::Infeasible(format!(
            "other sources already saturate [{}]",
            base.unstable_nodes(spec).join(", ")
        )));
    }
    let unit = solve_traffic(&spec.with_source_rate(source, 1.0)?)?;
    let bound = spec
        .nodes()
        .iter()
        .enumerate()
        .filter_map(|(i, n)| {
            let slope = unit.xi[i] - base.xi[i];
            (slope > 0.0).then(|| (n.mu - base.xi[i]) / slope)
        })
        .fold(f64::INFINITY, f64::min);
    if !bound.is_finite() {
        return Err(Error::Infeasible("source does not load any node".into()));
    }
    Ok(bound)
}

/// Capacity-maximizing rate for one source of a feed-forward network.
pub fn optimal_source_rate(spec: &NetworkSpec, source: &str) -> Result<Optimum> {
    let s = spec.source_index(source)?;
    let bound = source_rate_bound(spec, s)?;
    let objective = |l: f64| {
        spec.with_source_rate(s, l)
            .and_then(|sp| jackson_capacity(&sp, source))
            .map(|r| r.capacity)
            .unwrap_or(f64::NEG_INFINITY)
    };
    // surface structural errors (cycles, ...) instead of an all -inf objective
    jackson_capacity(&spec.with_source_rate(s, 0.0)?, source)?;
    let found = maximize_scalar(objective, 0.0, bound * (1.0 - 1e-12), LAMBDA_TOL * bound.max(1e-300))?;
    Ok(Optimum {
        lambda: Some(found.x),
        delta: None,
        capacity: found.value,
        method: SearchMethod::GridRefine,
        certification: None,
    })
}
