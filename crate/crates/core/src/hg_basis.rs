//! Hermite polynomials and the Hermite-Gauss functions used as spectral
//! weights, together with their closed-form Fourier transforms.
//!
//! The functions here use the weight `exp(-ξ²ω²)` rather than the
//! `exp(-ξ²ω²/2)` of the Fourier eigenfunctions, so their transforms are
//! Gaussians of width `2ξ` times a monomial:
//!
//! ```text
//! ∫ exp(iωτ) HG_n(ω) dω = i^n · √π · τ^n / ξ^(n+1) · exp(-τ²/(4ξ²))
//! ```
//!
//! [`hg_time_kernel`] returns the real factor, [`fourier_phase`] the `i^n`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};

/// Highest HG order accepted by [`HgSpec`].
pub const MAX_ORDER: u32 = 20;

/// Order and time scale of a Hermite-Gauss weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HgSpec {
    order: u32,
    xi_fs: f64,
}

impl HgSpec {
    pub fn new(order: u32, xi_fs: f64) -> Result<Self> {
        if order > MAX_ORDER {
            return Err(HomError::invalid(
                "order",
                format!("HG order {order} exceeds the supported maximum {MAX_ORDER}"),
            ));
        }
        if !(xi_fs > 0.0) || !xi_fs.is_finite() {
            return Err(HomError::invalid("xi_fs", format!("must be positive, got {xi_fs}")));
        }
        Ok(HgSpec { order, xi_fs })
    }

    pub fn order(&self) -> u32 {
        self.order
    }

    pub fn xi_fs(&self) -> f64 {
        self.xi_fs
    }

    pub fn is_even(&self) -> bool {
        self.order % 2 == 0
    }
}

/// Physicists' Hermite polynomial `H_n(x)` by upward recurrence.
pub fn hermite_poly(n: u32, x: f64) -> f64 {
    let mut prev = 1.0;
    if n == 0 {
        return prev;
    }
    let mut cur = 2.0 * x;
    for k in 1..n {
        let next = 2.0 * x * cur - 2.0 * k as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `HG_n(ω) = exp(-ξ²ω²) H_n(ξω)` with ω in rad/fs.
pub fn hg_function(spec: HgSpec, omega: f64) -> f64 {
    let x = spec.xi_fs * omega;
    (-x * x).exp() * hermite_poly(spec.order, x)
}

/// Real factor of the exact transform `∫ exp(iωτ) HG_n(ω) dω`.
pub fn hg_time_kernel(spec: HgSpec, tau: f64) -> f64 {
    let xi = spec.xi_fs;
    let u = tau / xi;
    std::f64::consts::PI.sqrt() * u.powi(spec.order as i32) / xi * (-0.25 * u * u).exp()
}

/// `i^n`, the phase separating [`hg_time_kernel`] from the full transform.
pub fn fourier_phase(order: u32) -> Complex64 {
    match order % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}
