//! Data-generating processes, oracle quantities and Monte Carlo studies.

mod mdp;
mod oracle;
mod rng;
mod static_dgp;
mod study;

pub use mdp::*;
pub use oracle::*;
pub use rng::replication_rng;
pub use static_dgp::*;
pub use study::*;
