use statrs::distribution::{ContinuousCDF, StudentsT};

use super::SimTrace;
use crate::error::{Error, Result};

/// Fraction of each source's emissions discarded as warm-up.
pub const WARMUP_FRACTION: f64 = 0.1;
/// Contiguous batches per replication for the batch-means interval.
pub const BATCH_COUNT: usize = 20;
const CONFIDENCE: f64 = 0.95;

/// Sums over batch means of the unerased-delivery indicator. Merging is plain
/// addition, so pooling replications is order-free.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BatchStats {
    pub count: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl BatchStats {
    pub fn push(&mut self, mean: f64) {
        self.count += 1;
        self.sum += mean;
        self.sum_sq += mean * mean;
    }

    pub fn merge(&self, other: &Self) -> Self {
        Self { count: self.count + other.count, sum: self.sum + other.sum, sum_sq: self.sum_sq + other.sum_sq }
    }

    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        ((self.sum_sq - self.sum * self.sum / n) / (n - 1.0)).max(0.0)
    }

    /// Half-width of the two-sided Student-t interval for the mean.
    pub fn halfwidth(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let var = self.variance();
        if var == 0.0 {
            return 0.0;
        }
        let n = self.count as f64;
        let t = StudentsT::new(0.0, 1.0, n - 1.0).expect("positive dof").inverse_cdf(0.5 + CONFIDENCE / 2.0);
        t * (var / n).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceEstimate {
    pub source_id: String,
    pub lambda: f64,
    pub n_emitted: usize,
    /// Emissions left after the warm-up cut.
    pub n_measured: usize,
    pub n_measured_unerased: usize,
    pub n_delivered_unerased: usize,
    pub batches: BatchStats,
    /// bits/sec.
    pub capacity_estimate: f64,
    /// 95% half-width, bits/sec.
    pub ci_halfwidth: f64,
}

impl SourceEstimate {
    fn finish(mut self) -> Self {
        self.capacity_estimate = if self.n_measured == 0 {
            0.0
        } else {
            self.lambda * self.n_measured_unerased as f64 / self.n_measured as f64
        };
        self.ci_halfwidth = self.lambda * self.batches.halfwidth();
        self
    }

    pub fn covers(&self, value: f64) -> bool {
        (value - self.capacity_estimate).abs() <= self.ci_halfwidth
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEstimate {
    pub per_source: Vec<SourceEstimate>,
    /// Simulated time, summed over replications.
    pub horizon: f64,
    pub seeds: Vec<u64>,
    pub batch_count: usize,
}

impl SimEstimate {
    pub fn source(&self, id: &str) -> Option<&SourceEstimate> {
        self.per_source.iter().find(|s| s.source_id == id)
    }

    /// Pools two estimates of the same network.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.per_source.len() != other.per_source.len()
            || self.per_source.iter().zip(&other.per_source).any(|(a, b)| a.source_id != b.source_id)
        {
            return Err(Error::Domain("cannot merge estimates of different networks".into()));
        }
        let per_source = self
            .per_source
            .iter()
            .zip(&other.per_source)
            .map(|(a, b)| {
                SourceEstimate {
                    source_id: a.source_id.clone(),
                    lambda: a.lambda,
                    n_emitted: a.n_emitted + b.n_emitted,
                    n_measured: a.n_measured + b.n_measured,
                    n_measured_unerased: a.n_measured_unerased + b.n_measured_unerased,
                    n_delivered_unerased: a.n_delivered_unerased + b.n_delivered_unerased,
                    batches: a.batches.merge(&b.batches),
                    capacity_estimate: 0.0,
                    ci_halfwidth: 0.0,
                }
                .finish()
            })
            .collect();
        let mut seeds = self.seeds.clone();
        seeds.extend(&other.seeds);
        Ok(Self { per_source, horizon: self.horizon + other.horizon, seeds, batch_count: self.batch_count })
    }
}

/// Capacity per source: `lambda_s` times the unerased fraction of its counted
/// emissions after the warm-up, with a batch-means confidence interval.
pub fn estimate_capacity(trace: &SimTrace) -> Result<SimEstimate> {
    if trace.records.is_empty() {
        return Err(Error::InsufficientData("trace is empty".into()));
    }
    let n_sources = trace.source_ids.len();
    let mut flags: Vec<Vec<bool>> = vec![Vec::new(); n_sources];
    for rec in &trace.records {
        let s = rec.source as usize;
        if flags[s].len() < trace.quota {
            flags[s].push(!rec.erased);
        }
    }

    let mut per_source = Vec::with_capacity(n_sources);
    for (s, unerased) in flags.iter().enumerate() {
        let lambda = trace.source_rates[s];
        let mut est = SourceEstimate {
            source_id: trace.source_ids[s].clone(),
            lambda,
            n_emitted: unerased.len(),
            n_measured: 0,
            n_measured_unerased: 0,
            n_delivered_unerased: unerased.iter().filter(|&&u| u).count(),
            batches: BatchStats::default(),
            capacity_estimate: 0.0,
            ci_halfwidth: 0.0,
        };
        if lambda > 0.0 {
            let warmup = (unerased.len() as f64 * WARMUP_FRACTION).floor() as usize;
            let measured = &unerased[warmup..];
            if measured.len() < BATCH_COUNT {
                return Err(Error::InsufficientData(format!(
                    "source `{}` has {} post-warm-up emissions, need at least {BATCH_COUNT}",
                    est.source_id,
                    measured.len()
                )));
            }
            est.n_measured = measured.len();
            est.n_measured_unerased = measured.iter().filter(|&&u| u).count();
            let size = measured.len() / BATCH_COUNT;
            for batch in measured.chunks_exact(size).take(BATCH_COUNT) {
                est.batches.push(batch.iter().filter(|&&u| u).count() as f64 / size as f64);
            }
        }
        per_source.push(est.finish());
    }
    Ok(SimEstimate { per_source, horizon: trace.horizon, seeds: vec![trace.seed], batch_count: BATCH_COUNT })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::NetworkType;
    use crate::sim::{Hop, QubitRecord};
    use smallvec::smallvec;

    fn trace(flags: &[bool], lambda: f64) -> SimTrace {
        SimTrace {
            seed: 1,
            quota: flags.len(),
            records: flags
                .iter()
                .enumerate()
                .map(|(k, &ok)| QubitRecord {
                    qubit_id: k as u64,
                    source: 0,
                    emit_time: k as f64,
                    hops: smallvec![Hop { node: 0, sojourn: 0.5 }],
                    erased: !ok,
                    delivery_time: k as f64 + 0.5,
                })
                .collect(),
            node_stats: vec![Default::default()],
            horizon: flags.len() as f64,
            network_type: NetworkType::RepeaterAssisted,
            source_ids: vec!["s1".into()],
            source_rates: vec![lambda],
            node_ids: vec!["i1".into()],
            node_throughput: vec![lambda],
        }
    }

    #[test]
    fn all_unerased_gives_lambda() {
        let est = estimate_capacity(&trace(&[true; 1000], 0.7)).unwrap();
        let s = &est.per_source[0];
        assert_eq!(s.capacity_estimate, 0.7);
        assert_eq!(s.ci_halfwidth, 0.0);
        assert_eq!(s.n_measured, 900);
        assert_eq!(s.batches.count, BATCH_COUNT);
    }

    #[test]
    fn all_erased_gives_zero() {
        let est = estimate_capacity(&trace(&[false; 1000], 0.7)).unwrap();
        assert_eq!(est.per_source[0].capacity_estimate, 0.0);
        assert_eq!(est.per_source[0].ci_halfwidth, 0.0);
        assert_eq!(est.per_source[0].n_delivered_unerased, 0);
    }

    #[test]
    fn warmup_is_discarded() {
        // erased only during the first 10%
        let flags: Vec<bool> = (0..1000).map(|k| k >= 100).collect();
        let est = estimate_capacity(&trace(&flags, 2.0)).unwrap();
        assert_eq!(est.per_source[0].capacity_estimate, 2.0);
        assert_eq!(est.per_source[0].n_delivered_unerased, 900);
    }

    #[test]
    fn too_few_emissions() {
        assert!(matches!(estimate_capacity(&trace(&[true; 21], 1.0)), Err(Error::InsufficientData(_))));
        assert!(estimate_capacity(&trace(&[true; 23], 1.0)).is_ok());
        assert!(matches!(estimate_capacity(&trace(&[], 1.0)), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn merge_pools_batches() {
        let a = estimate_capacity(&trace(&(0..2000).map(|k| k % 3 != 0).collect::<Vec<_>>(), 1.0)).unwrap();
        let b = estimate_capacity(&trace(&(0..2000).map(|k| k % 2 == 0).collect::<Vec<_>>(), 1.0)).unwrap();
        let ab = a.merge(&b).unwrap();
        let ba = b.merge(&a).unwrap();
        assert_eq!(ab.per_source[0].batches.count, 40);
        assert!((ab.per_source[0].capacity_estimate - ba.per_source[0].capacity_estimate).abs() < 1e-15);
        assert!((ab.per_source[0].ci_halfwidth - ba.per_source[0].ci_halfwidth).abs() < 1e-15);
        assert_eq!(ab.seeds.len(), 2);
    }

    #[test]
    fn halfwidth_uses_student_t() {
        let mut b = BatchStats::default();
        for x in [0.1, 0.2, 0.3, 0.4] {
            b.push(x);
        }
        // t_{0.975, 3} = 3.182446305...
        let want = 3.182_446_305_284_263 * (b.variance() / 4.0).sqrt();
        assert!((b.halfwidth() - want).abs() < 1e-9);
    }
}
