//! Chance-constrained unit commitment with a frequency-stability (inertia)
//! requirement, and the market side built on it: marginal, approximate
//! convex-hull and average-incremental prices for energy, reserve and
//! inertia, settlement with make-whole uplift, and a single-machine
//! frequency response model to check the schedules.
//!
//! [`case`] holds the system data, [`uncertainty`] turns forecast errors into
//! deterministic margins, [`solver`] runs branch and bound over [`qp`]
//! relaxations, [`pricing`] and [`settlement`] price and pay a schedule,
//! [`freqsim`] simulates an outage and [`scenario`] runs the study matrix.

pub mod case;
pub mod cases;
pub mod error;
pub mod freqsim;
pub mod model;
pub mod pricing;
pub mod qp;
pub mod scenario;
pub mod settlement;
pub mod solver;
pub mod uncertainty;
