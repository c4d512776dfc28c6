//! Weakly-secure hierarchical secure aggregation: instance model, key-rate
//! analysis, linear key synthesis over prime fields and exact security checks.

pub mod analysis;
pub mod fixtures;
pub mod gf;
pub mod model;
pub mod rates;
pub mod ratlp;
pub mod scheme;
pub mod security;

pub use model::{Instance, Topology, UserId, UserSet};
pub use rates::{optimal_rate, RateKind, RateResult};
pub use ratlp::Rational;
pub use scheme::{LinearScheme, SynthesisOptions};
