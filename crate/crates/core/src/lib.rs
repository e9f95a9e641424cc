//! Resource allocation for uplink NOMA mobile-edge computing.
//!
//! Users are clustered into NOMA groups that share the uplink in time
//! (TDMA between groups, superposition + SIC inside a group). Each user
//! splits its input data between local execution and offloading to an
//! edge cloud of finite (or unlimited) capacity. The crate computes
//! offloaded data, time-sharing factors, airtime, cloud capacity shares,
//! transmit powers and the completion time that minimise a weighted sum of
//! completion time and total user energy.
//!
//! Module map:
//! - [`scenario`]: scenario data, random instances, pairing, baselines
//! - [`noma_phy`]: SIC rates and the power/airtime recursions
//! - [`time_alloc`]: closed-form airtime / cloud-share / deadline block
//! - [`energy_alloc`]: dual method for the offload / share / power block
//! - [`solvers`]: alternating solver, min-time bisection, unlimited-cloud
//!   solver, multi-start and the brute-force grid oracle
//! - [`cli`]: experiment harness used by the `noma-mec` binary

pub mod cli;
pub mod energy_alloc;
pub mod error;
pub mod noma_phy;
pub mod scenario;
pub mod solvers;
pub mod time_alloc;

pub use error::{Error, Result};
pub use scenario::{CloudCapacity, Multiplexing, PairingMethod, Scenario, SchemeConfig, UserParams};
pub use solvers::{Allocation, ObjectiveBreakdown, SolveReport, Termination};
