//! Bilateral master-slave teleoperation simulator for contact-rich
//! EV-battery disassembly tasks.
//!
//! * [`dynamics`]: serial-chain kinematics and rigid-body dynamics.
//! * [`coupling`]: Cartesian (scaled, force-reflecting) and joint-space (1:1) couplings.
//! * [`tasks`]: simulated disassembly scenes with success and failure conditions.
//! * [`metrics`]: trial logs, stage segmentation, completion statistics and effect sizes.
//! * [`gateway`]: the fixed-rate control loop, wire protocol, scripted operators and log files.

// `!(x > 0.0)` is the idiom for rejecting NaN along with the bad range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod coupling;
pub mod dynamics;
pub mod gateway;
pub mod metrics;
mod serde_vec;
pub mod tasks;
