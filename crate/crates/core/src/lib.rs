//! Simulation of Hong-Ou-Mandel coincidence dips and semiparametric
//! estimation of Hermite-Gauss spectral parameters from delay scans.

pub mod delay_metrology;
pub mod dip_model;
pub mod error;
pub mod estimator;
pub mod hg_basis;
pub mod io;
pub mod numeric;
pub mod profile_fit;
pub mod rng;
pub mod spdc_model;
pub mod uncertainty;

pub use error::{HomError, Result};
