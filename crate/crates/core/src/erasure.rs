//! Erasure probability as a function of sojourn time.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Probability `p(w)` that a qubit is erased after spending `w` seconds in a
/// queue (or along a route, for repeater-less networks).
#[derive(Clone)]
pub enum ErasureModel {
    /// Exponential coherence time: `p(w) = 1 - exp(-kappa * w)`.
    Exponential { kappa: f64 },
    /// Piecewise-linear table.
    Table(ErasureTable),
    /// Arbitrary nondecreasing map into `[0, 1]`. Not expressible in the JSON
    /// document; meant for library callers.
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for ErasureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Exponential { kappa } => f.debug_struct("Exponential").field("kappa", kappa).finish(),
            Self::Table(t) => f.debug_tuple("Table").field(t).finish(),
            Self::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

impl ErasureModel {
    pub fn exponential(kappa: f64) -> Result<Self> {
        if !kappa.is_finite() || kappa < 0.0 {
            return Err(Error::Domain(format!("kappa must be finite and >= 0, got {kappa}")));
        }
        Ok(Self::Exponential { kappa })
    }

    pub fn custom(p: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::Custom(Arc::new(p))
    }

    /// Erasure probability after sojourn `w`, always in `[0, 1]`.
    pub fn erasure_prob(&self, w: f64) -> f64 {
        let w = w.max(0.0);
        match self {
            Self::Exponential { kappa } => -(-kappa * w).exp_m1(),
            Self::Table(t) => t.eval(w),
            Self::Custom(p) => p(w).clamp(0.0, 1.0),
        }
    }

    /// `q(w) = 1 - p(w)`.
    pub fn survival(&self, w: f64) -> f64 {
        1.0 - self.erasure_prob(w)
    }

    /// Decay rate when the model is exponential.
    pub fn kappa(&self) -> Option<f64> {
        match self {
            Self::Exponential { kappa } => Some(*kappa),
            _ => None,
        }
    }

    /// Points where `p` may fail to be smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Self::Table(t) => t.points.iter().map(|&(w, _)| w).collect(),
            _ => Vec::new(),
        }
    }
}

/// Tabulated erasure probability, linearly interpolated between points and
/// held constant outside the tabulated range.
#[derive(Debug, Clone, PartialEq)]
pub struct ErasureTable {
    points: Vec<(f64, f64)>,
}

impl ErasureTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Domain("erasure table needs at least one point".into()));
        }
        for (k, &(w, p)) in points.iter().enumerate() {
            if !w.is_finite() || w < 0.0 {
                return Err(Error::Domain(format!("erasure table point {k}: w = {w} must be finite and >= 0")));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Domain(format!("erasure table point {k}: p = {p} outside [0, 1]")));
            }
            if k > 0 {
                let (w0, p0) = points[k - 1];
                if w <= w0 {
                    return Err(Error::Domain(format!("erasure table abscissae must increase strictly (point {k})")));
                }
                if p < p0 {
                    return Err(Error::Domain(format!("erasure table must be nondecreasing (point {k})")));
                }
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn eval(&self, w: f64) -> f64 {
        let pts = &self.points;
        let (w_first, p_first) = pts[0];
        if w <= w_first {
            return p_first;
        }
        let (w_last, p_last) = pts[pts.len() - 1];
        if w >= w_last {
            return p_last;
        }
        // first index with abscissa > w; guaranteed in 1..len
        let hi = pts.partition_point(|&(x, _)| x <= w);
        let (w0, p0) = pts[hi - 1];
        let (w1, p1) = pts[hi];
        let t = (w - w0) / (w1 - w0);
        (p0 + t * (p1 - p0)).clamp(0.0, 1.0)
    }
}
