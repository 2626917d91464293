//! Fractional Poisson problems `(-Δ)^s u = f` on bounded domains and their
//! dependence on the order `s`.
//!
//! The crate covers exact solutions on balls, the logarithmic Laplacian and
//! the geometry functional `h_Ω`, a walk-on-spheres solver for the Green
//! operator and its `s`-derivative, a monotonicity certifier and bounds on the
//! Green operator norm.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod closedform;
pub mod domain;
pub mod error;
pub mod field;
pub mod geometry;
pub mod loglap;
pub mod par;
pub mod quad;
pub mod specialfn;
pub mod wos;

pub use domain::{Domain, DomainSpec, VoxelMask};
pub use error::{Error, Result};
pub use field::{FieldSpec, GridField, ScalarField};
pub use geometry::Point;
pub use wos::{Estimate, WosConfig};

use serde::{Deserialize, Serialize};

/// Fractional order `s ∈ (0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct FracOrder(f64);

impl FracOrder {
    pub fn new(s: f64) -> Result<Self> {
        if s > 0.0 && s <= 1.0 {
            Ok(FracOrder(s))
        } else {
            Err(Error::invalid(format!("order s must lie in (0, 1], got {s}")))
        }
    }

    /// Order strictly inside `(0, 1)`, as required by the nonlocal solvers.
    pub fn open(s: f64) -> Result<Self> {
        if s > 0.0 && s < 1.0 {
            Ok(FracOrder(s))
        } else {
            Err(Error::invalid(format!("order s must lie in (0, 1), got {s}")))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

impl TryFrom<f64> for FracOrder {
    type Error = Error;
    fn try_from(s: f64) -> Result<Self> {
        FracOrder::new(s)
    }
}

impl From<FracOrder> for f64 {
    fn from(s: FracOrder) -> f64 {
        s.0
    }
}

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
