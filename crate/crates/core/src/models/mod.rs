//! Concrete model plugins.

mod linear;
mod nse2d;
mod sabra;

pub use linear::LinearModel;
pub use nse2d::{build_nse2d, build_nse2d_with_budget, Nse2d, Nse2dConfig, DEFAULT_TRIAD_BUDGET};
pub use sabra::{build_sabra, build_sabra_with_boundary, Sabra, SabraBoundary, SabraConfig};
