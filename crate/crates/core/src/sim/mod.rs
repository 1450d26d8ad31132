//! Discrete-event simulation of the qubit-level network.
//!
//! Every node is a FCFS queue with one exponential server. Sources emit
//! Poisson streams on a single merged timeline, each qubit picks its next hop
//! from the routing row (the row deficit sends it to the destination), and
//! erasures are drawn per node departure (repeater-assisted) or once on
//! delivery from the total sojourn (repeater-less). Erased qubits keep
//! travelling and occupying servers; erasure only changes the payload.
//!
//! Randomness comes from four independent ChaCha streams derived from one
//! seed (arrivals, services, routing, erasures), so a run is a pure function
//! of `(spec, n_emissions, seed)`.

mod diagnostics;
mod estimate;
mod export;

use std::cmp::{Ordering, Reverse};
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use smallvec::SmallVec;

use crate::error::{Error, Result};
use crate::network::{NetworkSpec, NetworkType};
use crate::traffic::solve_traffic;

pub use diagnostics::{departure_diagnostics, kolmogorov_pvalue, ks_exponential, DepartureDiagnostics};
pub use estimate::{estimate_capacity, BatchStats, SimEstimate, SourceEstimate, BATCH_COUNT, WARMUP_FRACTION};
pub use export::{write_estimate_csv, write_trace_csv};

/// Named RNG streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Arrivals = 0,
    Services = 1,
    Routing = 2,
    Erasures = 3,
}

/// Master seed plus one independent stream per source of randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngPolicy {
    pub seed: u64,
}

impl RngPolicy {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn stream(&self, stream: Stream) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream as u64);
        rng
    }

    /// Seed of replication `k`, decorrelated from the master seed by SplitMix64.
    pub fn replication_seed(&self, k: u64) -> u64 {
        let mut z = self.seed ^ k.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hop {
    pub node: u32,
    /// Waiting plus service time at `node`.
    pub sojourn: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QubitRecord {
    /// Global emission index.
    pub qubit_id: u64,
    pub source: u32,
    pub emit_time: f64,
    pub hops: SmallVec<[Hop; 4]>,
    pub erased: bool,
    pub delivery_time: f64,
}

impl QubitRecord {
    pub fn total_sojourn(&self) -> f64 {
        self.hops.iter().map(|h| h.sojourn).sum()
    }
}

/// Time-integrated per-node statistics over the whole run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct NodeStats {
    pub departures: u64,
    pub busy_time: f64,
    /// Integral of the number of qubits at the node over time.
    pub occupancy_area: f64,
    pub sojourn_sum: f64,
}

impl NodeStats {
    pub fn utilization(&self, horizon: f64) -> f64 {
        self.busy_time / horizon
    }

    pub fn mean_number(&self, horizon: f64) -> f64 {
        self.occupancy_area / horizon
    }

    pub fn mean_sojourn(&self) -> f64 {
        self.sojourn_sum / self.departures as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ArrivalProcess {
    #[default]
    Poisson,
    /// Evenly spaced emissions at the source rate; a non-Poisson control for
    /// diagnostics.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SimOptions {
    pub arrivals: ArrivalProcess,
}

/// Output of one replication.
#[derive(Debug, Clone)]
pub struct SimTrace {
    pub seed: u64,
    /// Emissions counted per source; qubits beyond the quota only add load.
    pub quota: usize,
    pub records: Vec<QubitRecord>,
    pub node_stats: Vec<NodeStats>,
    pub horizon: f64,
    pub network_type: NetworkType,
    pub source_ids: Vec<String>,
    pub source_rates: Vec<f64>,
    pub node_ids: Vec<String>,
    /// Net arrival rate of every node from the traffic equations.
    pub node_throughput: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum EventKind {
    Arrival(u32),
    Departure(u32),
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time.total_cmp(&other.time).then(self.seq.cmp(&other.seq))
    }
}

struct NodeState {
    queue: VecDeque<(usize, f64)>,
    busy_since: f64,
    last_change: f64,
    stats: NodeStats,
}

impl NodeState {
    fn touch(&mut self, now: f64) {
        self.stats.occupancy_area += self.queue.len() as f64 * (now - self.last_change);
        self.last_change = now;
    }
}

/// Draws an index from a probability vector; `None` is the leftover mass.
fn pick(weights: &[f64], u: f64) -> Option<usize> {
    let mut acc = 0.0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            if u < acc {
                return Some(j);
            }
        }
    }
    None
}

pub fn simulate(spec: &NetworkSpec, n_emissions: usize, seed: u64) -> Result<SimTrace> {
    simulate_with(spec, n_emissions, seed, &SimOptions::default())
}

pub fn simulate_with(spec: &NetworkSpec, n_emissions: usize, seed: u64, options: &SimOptions) -> Result<SimTrace> {
    if n_emissions == 0 {
        return Err(Error::Domain("simulation needs at least one emission".into()));
    }
    // rejects routing that traps qubits forever
    let traffic = solve_traffic(spec)?;

    let rng = RngPolicy::new(seed);
    let mut arrivals_rng = rng.stream(Stream::Arrivals);
    let mut service_rng = rng.stream(Stream::Services);
    let mut routing_rng = rng.stream(Stream::Routing);
    let mut erasure_rng = rng.stream(Stream::Erasures);

    let sources = spec.sources();
    let nodes = spec.nodes();
    let erasure = spec.erasure();
    let network_type = spec.network_type();
    let last_resort_entry: Vec<usize> =
        sources.iter().map(|s| s.entry.iter().rposition(|&p| p > 0.0).unwrap_or(0)).collect();

    let interarrival: Vec<Option<Exp<f64>>> =
        sources.iter().map(|s| (s.lambda > 0.0).then(|| Exp::new(s.lambda).expect("positive rate"))).collect();
    let service: Vec<Exp<f64>> = nodes.iter().map(|n| Exp::new(n.mu).expect("positive rate")).collect();

    let next_gap = |s: usize, rng: &mut ChaCha8Rng| -> f64 {
        match options.arrivals {
            ArrivalProcess::Poisson => interarrival[s].as_ref().expect("active source").sample(rng),
            ArrivalProcess::Deterministic => 1.0 / sources[s].lambda,
        }
    };

    let mut heap: BinaryHeap<Reverse<Event>> = BinaryHeap::new();
    let mut seq = 0u64;
    let mut push = |heap: &mut BinaryHeap<Reverse<Event>>, time: f64, kind: EventKind| {
        heap.push(Reverse(Event { time, seq, kind }));
        seq += 1;
    };

    let mut emitted = vec![0usize; sources.len()];
    let mut pending_sources = 0usize;
    for (s, src) in sources.iter().enumerate() {
        if src.lambda > 0.0 {
            pending_sources += 1;
            let t = next_gap(s, &mut arrivals_rng);
            push(&mut heap, t, EventKind::Arrival(s as u32));
        }
    }

    let mut state: Vec<NodeState> = nodes
        .iter()
        .map(|_| NodeState { queue: VecDeque::new(), busy_since: 0.0, last_change: 0.0, stats: NodeStats::default() })
        .collect();
    let mut records: Vec<QubitRecord> = Vec::with_capacity(n_emissions * sources.len().max(1));
    let mut now = 0.0;

    while let Some(Reverse(ev)) = heap.pop() {
        now = ev.time;
        let next_node = match ev.kind {
            EventKind::Arrival(s) => {
                if pending_sources == 0 {
                    continue;
                }
                let s = s as usize;
                emitted[s] += 1;
                if emitted[s] == n_emissions {
                    pending_sources -= 1;
                }
                if pending_sources > 0 {
                    let t = now + next_gap(s, &mut arrivals_rng);
                    push(&mut heap, t, EventKind::Arrival(s as u32));
                }
                let id = records.len();
                records.push(QubitRecord {
                    qubit_id: id as u64,
                    source: s as u32,
                    emit_time: now,
                    hops: SmallVec::new(),
                    erased: false,
                    delivery_time: f64::NAN,
                });
                let u: f64 = routing_rng.random();
                let entry = pick(&sources[s].entry, u).unwrap_or(last_resort_entry[s]);
                Some((id, entry))
            }
            EventKind::Departure(i) => {
                let i = i as usize;
                let node = &mut state[i];
                node.touch(now);
                let (q, arrived) = node.queue.pop_front().expect("departure from empty node");
                let sojourn = now - arrived;
                node.stats.departures += 1;
                node.stats.sojourn_sum += sojourn;
                if !node.queue.is_empty() {
                    let t = now + service[i].sample(&mut service_rng);
                    push(&mut heap, t, EventKind::Departure(i as u32));
                } else {
                    node.stats.busy_time += now - node.busy_since;
                }

                let rec = &mut records[q];
                rec.hops.push(Hop { node: i as u32, sojourn });
                if network_type == NetworkType::RepeaterAssisted {
                    let u: f64 = erasure_rng.random();
                    if u < erasure.erasure_prob(sojourn) {
                        rec.erased = true;
                    }
                }
                let u: f64 = routing_rng.random();
                match pick(&spec.routing()[i], u) {
                    Some(j) => Some((q, j)),
                    None => {
                        rec.delivery_time = now;
                        if network_type == NetworkType::RepeaterLess {
                            let u: f64 = erasure_rng.random();
                            if u < erasure.erasure_prob(rec.total_sojourn()) {
                                rec.erased = true;
                            }
                        }
                        None
                    }
                }
            }
        };

        if let Some((q, j)) = next_node {
            let node = &mut state[j];
            node.touch(now);
            node.queue.push_back((q, now));
            if node.queue.len() == 1 {
                node.busy_since = now;
                let t = now + service[j].sample(&mut service_rng);
                push(&mut heap, t, EventKind::Departure(j as u32));
            }
        }
    }

    Ok(SimTrace {
        seed,
        quota: n_emissions,
        records,
        node_stats: state.into_iter().map(|s| s.stats).collect(),
        horizon: now,
        network_type,
        source_ids: sources.iter().map(|s| s.id.clone()).collect(),
        source_rates: sources.iter().map(|s| s.lambda).collect(),
        node_ids: nodes.iter().map(|n| n.id.clone()).collect(),
        node_throughput: traffic.xi,
    })
}
