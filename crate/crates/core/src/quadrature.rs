//! Expectations over sums of independent exponential sojourn times.
//!
//! The density of `S = W_1 + ... + W_n`, `W_i ~ Exp(r_i)`, is evaluated via
//! uniformization of the underlying phase-type chain: with `L >= max r_i`,
//!
//! ```text
//! f_S(x) = sum_k Poisson(k; L x) * c_k
//! ```
//!
//! where `c_k` is the probability that the embedded discrete chain sits in
//! the last phase after `k` jumps, times the last rate. Every term is
//! nonnegative, so repeated or nearly repeated rates need no special care.
//! Uniformization needs about `L x` jumps, so for stiff rate sets (one rate
//! near zero, as at the edge of stability) the phase occupation is taken from
//! a dense matrix exponential of the sub-generator instead.
//! The expectation itself is an adaptive Gauss-Kronrod integral of
//! `f(x) f_S(x)` over `[0, x_max]`, where `P(S > x_max) < 1e-12`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::DMatrix;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

/// Target absolute error of [`hypoexp_expectation`].
pub const ABS_TOL: f64 = 1e-10;
/// Tail mass dropped beyond the integration range.
pub const TAIL_MASS: f64 = 1e-12;
const MAX_INTERVALS: usize = 4000;
const INITIAL_PIECES: usize = 8;
/// Largest expected jump count `L x` handled by uniformization.
const UNIFORMIZATION_LIMIT: f64 = 1e5;

/// Rates `r_i = mu_i - xi_i` of the exponential sojourn times along a route,
/// in traversal order.
#[derive(Debug, Clone, PartialEq)]
pub struct SojournLaw {
    rates: Vec<f64>,
}

impl SojournLaw {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if rates.is_empty() {
            return Err(Error::Domain("sojourn law needs at least one rate".into()));
        }
        if let Some(r) = rates.iter().find(|r| !r.is_finite() || **r <= 0.0) {
            return Err(Error::Domain(format!("sojourn rates must be finite and > 0, got {r}")));
        }
        Ok(Self { rates })
    }

    pub fn rates(&self) -> &[f64] {
        &self.rates
    }

    pub fn mean(&self) -> f64 {
        self.rates.iter().map(|r| 1.0 / r).sum()
    }

    /// Density and survival function of the total sojourn time.
    pub fn distribution(&self) -> HypoexpDistribution {
        HypoexpDistribution::new(&self.rates)
    }
}

/// Uniformized representation of a hypoexponential law.
#[derive(Debug, Clone)]
pub struct HypoexpDistribution {
    rates: Vec<f64>,
    unif: f64,
    phase: Vec<f64>,
    /// `c_k`: last-phase occupation after `k` jumps, times the last rate.
    last: Vec<f64>,
    /// Unabsorbed mass after `k` jumps.
    mass: Vec<f64>,
}

impl HypoexpDistribution {
    fn new(rates: &[f64]) -> Self {
        let unif = rates.iter().cloned().fold(0.0, f64::max);
        let mut phase = vec![0.0; rates.len()];
        phase[0] = 1.0;
        let mut d = Self { rates: rates.to_vec(), unif, phase, last: Vec::new(), mass: Vec::new() };
        d.record();
        d
    }

    fn record(&mut self) {
        let n = self.rates.len();
        self.last.push(self.phase[n - 1] * self.rates[n - 1]);
        self.mass.push(self.phase.iter().sum());
    }

    fn extend_to(&mut self, k: usize) {
        while self.last.len() <= k {
            // one jump of P = I + T / L, walking backwards so each phase reads
            // its predecessor's old occupation
            for i in (0..self.phase.len()).rev() {
                let stay = 1.0 - self.rates[i] / self.unif;
                let inflow = if i > 0 { self.phase[i - 1] * self.rates[i - 1] / self.unif } else { 0.0 };
                self.phase[i] = self.phase[i] * stay + inflow;
            }
            self.record();
        }
    }

    /// Phase occupation at time `x`: first row of `exp(T x)`.
    fn phase_at(&self, x: f64) -> Vec<f64> {
        let n = self.rates.len();
        let mut t = DMatrix::zeros(n, n);
        for (i, r) in self.rates.iter().enumerate() {
            t[(i, i)] = -r * x;
            if i + 1 < n {
                t[(i, i + 1)] = r * x;
            }
        }
        let e = t.exp();
        (0..n).map(|j| e[(0, j)].max(0.0)).collect()
    }

    fn mix(&mut self, x: f64, which: fn(&Self) -> &[f64]) -> f64 {
        let (lo, pmf) = poisson_window(self.unif * x);
        self.extend_to(lo + pmf.len());
        let coef = &which(self)[lo..lo + pmf.len()];
        pmf.iter().zip(coef).map(|(p, c)| p * c).sum()
    }

    pub fn density(&mut self, x: f64) -> f64 {
        if x < 0.0 {
            return 0.0;
        }
        if self.unif * x > UNIFORMIZATION_LIMIT {
            let n = self.rates.len();
            return self.phase_at(x)[n - 1] * self.rates[n - 1];
        }
        self.mix(x, |d| &d.last)
    }

    /// `P(S > x)`.
    pub fn survival(&mut self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        if self.unif * x > UNIFORMIZATION_LIMIT {
            return self.phase_at(x).iter().sum::<f64>().clamp(0.0, 1.0);
        }
        self.mix(x, |d| &d.mass).clamp(0.0, 1.0)
    }

    /// Smallest `x` (to within a few percent) with `P(S > x) < tail`.
    pub fn tail_point(&mut self, tail: f64) -> f64 {
        let mut hi = self.rates.iter().map(|r| 1.0 / r).sum::<f64>();
        while self.survival(hi) >= tail {
            hi *= 2.0;
        }
        let mut lo = hi / 2.0;
        for _ in 0..12 {
            let mid = 0.5 * (lo + hi);
            if self.survival(mid) >= tail {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    }
}

/// Poisson(m) probabilities on a window holding all but a negligible amount
/// of mass; returns the first index and the probabilities.
fn poisson_window(m: f64) -> (usize, Vec<f64>) {
    if m <= 0.0 {
        return (0, vec![1.0]);
    }
    let mode = m.floor();
    let half = (10.0 * m.sqrt() + 15.0).ceil();
    let lo = (mode - half).max(0.0) as usize;
    let hi = (mode + half) as usize;
    let k0 = mode as usize;
    let mut pmf = vec![0.0; hi - lo + 1];
    let p0 = (-m + mode * m.ln() - ln_gamma(mode + 1.0)).exp();
    pmf[k0 - lo] = p0;
    let mut p = p0;
    for k in k0..hi {
        p *= m / (k + 1) as f64;
        pmf[k + 1 - lo] = p;
    }
    p = p0;
    for k in (lo + 1..=k0).rev() {
        p *= k as f64 / m;
        pmf[k - 1 - lo] = p;
    }
    (lo, pmf)
}

/// `E[f(S)]` for `S` the sum of independent exponentials with the given rates.
/// `f` is expected to map into `[0, 1]`.
pub fn hypoexp_expectation(law: &SojournLaw, f: impl Fn(f64) -> f64) -> Result<f64> {
    hypoexp_expectation_with_breaks(law, f, &[])
}

/// As [`hypoexp_expectation`], with points where `f` has kinks; the
/// integration range is split there up front.
pub fn hypoexp_expectation_with_breaks(law: &SojournLaw, f: impl Fn(f64) -> f64, breaks: &[f64]) -> Result<f64> {
    let mut dist = law.distribution();
    let x_max = dist.tail_point(TAIL_MASS);

    let mut cuts: Vec<f64> = (0..=INITIAL_PIECES).map(|k| x_max * k as f64 / INITIAL_PIECES as f64).collect();
    // geometric cuts down to the fastest time scale, so stiff laws and
    // short-lived integrands get nodes where their mass is
    let floor = 0.1 / law.rates().iter().cloned().fold(0.0, f64::max);
    let mut x = x_max / 4.0;
    while x > floor {
        cuts.push(x);
        x /= 4.0;
    }
    cuts.extend(breaks.iter().copied().filter(|&b| b > 0.0 && b < x_max));
    cuts.sort_by(f64::total_cmp);
    cuts.dedup_by(|a, b| (*a - *b).abs() <= 1e-12 * x_max);

    let mut integrand = |x: f64| f(x) * dist.density(x);
    adaptive_gauss_kronrod(&mut integrand, &cuts, ABS_TOL)
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Piece {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

const XGK: [f64; 8] = [
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144845693013,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714,
];
const WG: [f64; 4] = [
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327,
];

/// 15-point Kronrod rule with the embedded 7-point Gauss rule as error estimate.
fn kronrod15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Globally adaptive integration over consecutive `cuts`.
pub fn adaptive_gauss_kronrod(f: &mut impl FnMut(f64) -> f64, cuts: &[f64], tol: f64) -> Result<f64> {
    let mut heap = BinaryHeap::new();
    for w in cuts.windows(2) {
        let (value, error) = kronrod15(f, w[0], w[1]);
        heap.push(Piece { a: w[0], b: w[1], value, error });
    }
    loop {
        let error: f64 = heap.iter().map(|p| p.error).sum();
        if error <= tol {
            return Ok(heap.iter().map(|p| p.value).sum());
        }
        if !error.is_finite() {
            return Err(Error::ToleranceNotMet { achieved: f64::INFINITY });
        }
        if heap.len() >= MAX_INTERVALS {
            return Err(Error::ToleranceNotMet { achieved: error });
        }
        let worst = heap.pop().expect("nonempty partition");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            return Err(Error::ToleranceNotMet { achieved: error });
        }
        for (a, b) in [(worst.a, mid), (mid, worst.b)] {
            let (value, error) = kronrod15(f, a, b);
            heap.push(Piece { a, b, value, error });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Partial-fraction density for pairwise distinct, well-separated rates.
    fn distinct_rate_density(rates: &[f64], x: f64) -> f64 {
        rates
            .iter()
            .enumerate()
            .map(|(i, &ri)| {
                let coef: f64 =
                    rates.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &rj)| rj / (rj - ri)).product();
                coef * ri * (-ri * x).exp()
            })
            .sum()
    }

    fn laplace_product(rates: &[f64], kappa: f64) -> f64 {
        rates.iter().map(|r| r / (kappa + r)).product()
    }

    #[test]
    fn density_matches_partial_fractions() {
        let rates = [0.5, 1.3, 2.9];
        let mut d = SojournLaw::new(rates.to_vec()).unwrap().distribution();
        for x in [0.0, 0.1, 0.7, 2.0, 5.5, 12.0] {
            let want = distinct_rate_density(&rates, x);
            assert!((d.density(x) - want).abs() < 1e-13, "x={x}: {} vs {want}", d.density(x));
        }
    }

    #[test]
    fn stiff_rates_density() {
        let rates = [1e-4, 1.0, 30.0];
        let mut d = SojournLaw::new(rates.to_vec()).unwrap().distribution();
        for x in [0.5, 50.0, 3e3, 2e4, 1e5] {
            let want = distinct_rate_density(&rates, x);
            assert!((d.density(x) - want).abs() <= 1e-9 * want, "x={x}: {} vs {want}", d.density(x));
        }
    }

    #[test]
    fn stiff_rates_expectation() {
        for rates in [vec![1e-6, 2.0], vec![3e-9, 0.5, 4.0]] {
            let law = SojournLaw::new(rates.clone()).unwrap();
            for kappa in [1e-7, 1e-3, 1.0] {
                let got = hypoexp_expectation(&law, |w| (-kappa * w).exp()).unwrap();
                let want = laplace_product(&rates, kappa);
                assert!((got - want).abs() < 1e-6, "{rates:?} kappa={kappa}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn erlang_density_for_repeated_rates() {
        let mut d = SojournLaw::new(vec![2.0; 3]).unwrap().distribution();
        for x in [0.2f64, 1.0, 3.0] {
            let want = 8.0 * x * x / 2.0 * (-2.0 * x).exp();
            assert!((d.density(x) - want).abs() < 1e-13);
        }
    }

    #[test]
    fn survival_of_single_exponential() {
        let mut d = SojournLaw::new(vec![0.7]).unwrap().distribution();
        for x in [0.0, 0.5, 4.0, 30.0] {
            assert!((d.survival(x) - (-0.7 * x).exp()).abs() < 1e-14);
        }
        let t = d.tail_point(1e-12);
        assert!(d.survival(t) < 1e-12 && t < 1.1 * (1e12f64).ln() / 0.7);
    }

    #[test]
    fn normalization() {
        for rates in [vec![1.0], vec![0.3, 4.0], vec![1.0, 1.0, 1.0, 1.0, 1.0]] {
            let law = SojournLaw::new(rates).unwrap();
            assert!((hypoexp_expectation(&law, |_| 1.0).unwrap() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn laplace_product_two_rates() {
        let law = SojournLaw::new(vec![0.8, 2.5]).unwrap();
        let got = hypoexp_expectation(&law, |w| (-1.0 * w).exp()).unwrap();
        assert!((got - laplace_product(&[0.8, 2.5], 1.0)).abs() < 1e-9);
    }

    #[test]
    fn single_exponential_erasure() {
        let law = SojournLaw::new(vec![1.0]).unwrap();
        let got = hypoexp_expectation(&law, |w| 1.0 - (-w).exp()).unwrap();
        assert!((got - 0.5).abs() < 1e-9);
    }

    #[test]
    fn near_equal_rates() {
        let rates = vec![1.0, 1.0 + 1e-10, 1.0 - 1e-11, 1.0 + 3e-9];
        let law = SojournLaw::new(rates.clone()).unwrap();
        let got = hypoexp_expectation(&law, |w| (-0.6 * w).exp()).unwrap();
        assert!((got - laplace_product(&rates, 0.6)).abs() < 1e-9);
    }

    #[test]
    fn widely_spread_rates() {
        let rates = vec![0.05, 40.0, 3.0];
        let law = SojournLaw::new(rates.clone()).unwrap();
        let got = hypoexp_expectation(&law, |w| (-2.0 * w).exp()).unwrap();
        assert!((got - laplace_product(&rates, 2.0)).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_rates() {
        assert!(SojournLaw::new(vec![]).is_err());
        assert!(SojournLaw::new(vec![1.0, 0.0]).is_err());
        assert!(SojournLaw::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn kinked_integrand_with_breaks() {
        // E[min(W, 1)] for W ~ Exp(1) is 1 - e^{-1}
        let law = SojournLaw::new(vec![1.0]).unwrap();
        let got = hypoexp_expectation_with_breaks(&law, |w| w.min(1.0), &[1.0]).unwrap();
        assert!((got - (1.0 - (-1.0f64).exp())).abs() < 1e-10);
    }

    #[test]
    fn tolerance_failure_reports_error_estimate() {
        // 1/x is not integrable at 0; the error on the first piece never shrinks
        let mut f = |x: f64| 1.0 / x;
        match adaptive_gauss_kronrod(&mut f, &[0.0, 1.0], 1e-6) {
            Err(Error::ToleranceNotMet { achieved }) => assert!(achieved > 0.0),
            other => panic!("expected tolerance failure, got {other:?}"),
        }
    }
}
