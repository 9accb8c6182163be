//! Maximum-likelihood estimation of mean orientation and concentration for
//! distributions on S³ that are invariant under a finite rotation group.

pub mod bench;
mod bessel;
pub mod ebsdmap;
pub mod error;
pub mod ginv;
pub mod io;
pub mod orient;
pub mod symgrp;
pub mod vmf;

pub use error::{Error, Result};
pub use orient::{EulerAngles, RodriguesVector, UnitQuaternion};
pub use symgrp::{GroupOperator, SymmetryGroup};
pub use vmf::{VmfParams, KAPPA_MAX};
