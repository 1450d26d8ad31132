//! Classical capacity of queueing networks whose packets (qubits) are erased
//! with a probability that grows with the time they spend waiting.
//!
//! The crate is split along the lines of the analysis pipeline:
//!
//! * [`network`], [`traffic`], [`routes`]: network description, traffic
//!   equations and route enumeration.
//! * [`erasure`], [`quadrature`], [`capacity`]: erasure laws and the
//!   capacity formulas, closed form or by numerical integration.
//! * [`sim`]: a discrete-event simulator used as an empirical check.
//! * [`optimize`]: optimal transmission rates and routing splits.

pub mod capacity;
pub mod erasure;
pub mod error;
pub mod network;
pub mod optimize;
pub mod quadrature;
pub mod routes;
pub mod sim;
pub mod traffic;

pub use capacity::{
    jackson_capacity, jackson_capacity_all, laplace_exp_waiting, parallel_capacity, route_survival,
    single_queue_capacity, tandem_capacity, CapacityMethod, CapacityReport, RouteContribution,
};
pub use erasure::{ErasureModel, ErasureTable};
pub use error::{Error, Result};
pub use network::{
    parse_network, validate, Defect, NetworkSpec, NetworkType, Node, Source, Topology, ValidationReport,
};
pub use quadrature::{hypoexp_expectation, SojournLaw};
pub use routes::{enumerate_routes, is_feed_forward, Endpoint, Route};
pub use traffic::{solve_traffic, TrafficSolution};
