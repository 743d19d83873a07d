//! Passive RRAM crossbar simulator.
//!
//! One array of variable RRAM cells serves three roles selected by its
//! output DeMUX: multi-state vector-matrix multiplication, a true random
//! number generator driven by stochastic threshold switching, and a
//! sneak-path PUF seeded from that generator. [`locking`] combines them to
//! bind neural-network weights to a single physical array.

pub mod bits;
pub mod calibration;
pub mod crossbar;
pub mod crp_store;
pub mod device;
pub mod error;
pub mod linalg;
pub mod locking;
pub mod nodal;
pub mod peripherals;
pub mod puf;
pub mod rng;
pub mod trng;
pub mod vmm;
pub mod xbar_file;

pub use calibration::DistributionSpec;
pub use crossbar::{Crossbar, Mode};
pub use error::{Error, Result};
