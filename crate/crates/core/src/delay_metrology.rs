//! How well a small extra delay `τ₀` can be read off an HG parameter:
//! `Δτ₀ = Δh / |∂h/∂τ₀|`.
//!
//! For an even profile and an even kernel `∂h/∂τ₀` vanishes at `τ₀ = 0`, so
//! the derivative is taken at a working offset `τ₀*` that is reported with
//! every result.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dip_model::ScanConfig;
use crate::error::{HomError, Result};
use crate::estimator::parameter_kernel;
use crate::hg_basis::HgSpec;
use crate::numeric::composite_gauss_legendre;
use crate::spdc_model::DelayProfile;

/// Smallest finite-difference step accepted, in fs.
pub const MIN_STEP_FS: f64 = 1e-6;
/// Derivatives below this fraction of the sweep maximum are undefined.
pub const RELATIVE_FLOOR: f64 = 1e-3;
/// Default working offset as a fraction of the fitted profile width.
pub const DEFAULT_OFFSET_FRACTION: f64 = 0.05;
const PANELS: usize = 512;

/// `(f(x + s) − f(x − s)) / 2s`.
pub fn central_derivative(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    (f(x + step) - f(x - step)) / (2.0 * step)
}

/// `|Δh / ∂h|`.
pub fn delay_uncertainty(delta_h: f64, derivative: f64) -> f64 {
    (delta_h / derivative).abs()
}

/// `(D(s) − D(s/2)) / (D(s/2) − D(s/4))`, about 4 for a smooth `f`.
pub fn richardson_ratio(f: impl Fn(f64) -> f64, x: f64, step: f64) -> f64 {
    let d1 = central_derivative(&f, x, step);
    let d2 = central_derivative(&f, x, step / 2.0);
    let d4 = central_derivative(&f, x, step / 4.0);
    (d1 - d2) / (d2 - d4)
}

/// `h(τ₀) = ∫ f̃(τ − τ₀) k(τ) dτ` over `[−T, T]` and `∫|f̃(τ − τ₀) k(τ)| dτ`.
pub fn shifted_parameter(profile: &dyn DelayProfile, spec: HgSpec, tau0_fs: f64, half_range_fs: f64) -> (f64, f64) {
    composite_gauss_legendre(
        |t| profile.value(t - tau0_fs) * parameter_kernel(spec, t),
        -half_range_fs,
        half_range_fs,
        PANELS,
    )
}

/// Where `Δh` comes from.
#[derive(Debug, Clone)]
pub enum DeltaHSource {
    /// Poisson variance of the discrete estimator on this scan layout.
    Formula { scan: ScanConfig, visibility: f64 },
    /// One externally computed spread per ξ, e.g. bootstrap.
    Given(Vec<f64>),
}

impl DeltaHSource {
    pub fn label(&self) -> &'static str {
        match self {
            DeltaHSource::Formula { .. } => "formula",
            DeltaHSource::Given(_) => "given",
        }
    }
}

/// `Δh` of the discrete estimator: `√(Σ C(τᵢ) k(τᵢ)² δτ²) / (C₀ v)`.
pub fn formula_delta_h(profile: &dyn DelayProfile, spec: HgSpec, scan: &ScanConfig, v: f64) -> Result<f64> {
    scan.validate()?;
    let var: f64 = scan
        .grid()
        .points()
        .iter()
        .map(|&t| {
            let c = scan.c0 * (1.0 - v * profile.value(t - scan.offset_fs));
            c * (parameter_kernel(spec, t) * scan.step_fs).powi(2)
        })
        .sum();
    Ok(var.sqrt() / (scan.c0 * v))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub xi_fs: f64,
    pub h: f64,
    pub derivative: f64,
    pub delta_h: f64,
    /// `None` where the derivative is below the floor.
    pub dtau0_fs: Option<f64>,
}

impl DelayPoint {
    pub fn defined(&self) -> bool {
        self.dtau0_fs.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelaySensitivity {
    pub order: u32,
    pub tau0_star_fs: f64,
    pub step_fs: f64,
    pub half_range_fs: f64,
    pub delta_h_source: String,
    pub points: Vec<DelayPoint>,
}

impl DelaySensitivity {
    /// Smallest defined `Δτ₀` and its ξ.
    pub fn minimum(&self) -> Option<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.dtau0_fs.map(|d| (p.xi_fs, d)))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayOptions {
    pub tau0_star_fs: f64,
    pub step_fs: f64,
    pub half_range_fs: f64,
}

/// `Δτ₀(ξ)` for one HG order.
pub fn delay_sensitivity(
    profile: &dyn DelayProfile,
    order: u32,
    xi_grid: &[f64],
    source: &DeltaHSource,
    opts: &DelayOptions,
) -> Result<DelaySensitivity> {
    if !(opts.step_fs >= MIN_STEP_FS) {
        return Err(HomError::invalid(
            "step_fs",
            format!("central-difference step {} fs is below {MIN_STEP_FS} fs", opts.step_fs),
        ));
    }
    if !(opts.half_range_fs > 0.0) || !opts.tau0_star_fs.is_finite() {
        return Err(HomError::invalid("half_range_fs", "must be positive"));
    }
    if let DeltaHSource::Given(d) = source {
        if d.len() != xi_grid.len() {
            return Err(HomError::Mismatch(format!(
                "{} spreads for {} ξ values",
                d.len(),
                xi_grid.len()
            )));
        }
    }
    let raw: Vec<(f64, f64, f64, f64)> = xi_grid
        .par_iter()
        .enumerate()
        .map(|(i, &xi)| {
            let spec = HgSpec::new(order, xi)?;
            let h_at = |t0: f64| shifted_parameter(profile, spec, t0, opts.half_range_fs).0;
            let (h, scale) = shifted_parameter(profile, spec, opts.tau0_star_fs, opts.half_range_fs);
            let d = central_derivative(h_at, opts.tau0_star_fs, opts.step_fs);
            let delta_h = match source {
                DeltaHSource::Formula { scan, visibility } => formula_delta_h(profile, spec, scan, *visibility)?,
                DeltaHSource::Given(v) => v[i],
            };
            Ok((h, d, delta_h, scale))
        })
        .collect::<Result<_>>()?;
    let max_d = raw.iter().map(|r| r.1.abs()).fold(0.0, f64::max);
    let points = xi_grid
        .iter()
        .zip(&raw)
        .map(|(&xi_fs, &(h, derivative, delta_h, scale))| {
            let numerical_floor = 1e-9 * scale / opts.step_fs;
            let defined = derivative.abs() >= RELATIVE_FLOOR * max_d && derivative.abs() > numerical_floor;
            DelayPoint {
                xi_fs,
                h,
                derivative,
                delta_h,
                dtau0_fs: defined.then(|| delay_uncertainty(delta_h, derivative)),
            }
        })
        .collect();
    Ok(DelaySensitivity {
        order,
        tau0_star_fs: opts.tau0_star_fs,
        step_fs: opts.step_fs,
        half_range_fs: opts.half_range_fs,
        delta_h_source: source.label().into(),
        points,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dip_model::preset;
    use crate::spdc_model::ApproxSincGauss;

    fn preset_profile() -> ApproxSincGauss {
        ApproxSincGauss::new(preset::SIGMA_FS, preset::B).unwrap()
    }

    fn opts(tau0: f64) -> DelayOptions {
        DelayOptions {
            tau0_star_fs: tau0,
            step_fs: 2.0,
            half_range_fs: 1072.0,
        }
    }

    #[test]
    fn linear_function_is_exact() {
        let (a, b, d) = (3.7, -12.0, 0.25);
        let deriv = central_derivative(|t| a * t + b, 1.3, 0.01);
        assert!((delay_uncertainty(d, deriv) - d / a).abs() < 1e-10);
    }

    #[test]
    fn zero_offset_is_undefined_for_even_profiles() {
        let xi: Vec<f64> = vec![20.0, 40.0, 60.0];
        let src = DeltaHSource::Given(vec![0.01; 3]);
        let r = delay_sensitivity(&preset_profile(), 0, &xi, &src, &opts(0.0)).unwrap();
        assert!(r.points.iter().all(|p| !p.defined() && p.derivative.abs() < 1e-12));
        assert!(r.minimum().is_none());
    }

    #[test]
    fn tiny_step_is_rejected() {
        let o = DelayOptions { step_fs: 1e-7, ..opts(5.0) };
        let src = DeltaHSource::Given(vec![0.01]);
        assert!(delay_sensitivity(&preset_profile(), 0, &[30.0], &src, &o).is_err());
    }

    #[test]
    fn doubling_delta_h_doubles_dtau0() {
        let xi = vec![30.0, 60.0];
        let p = preset_profile();
        let a = delay_sensitivity(&p, 2, &xi, &DeltaHSource::Given(vec![0.01, 0.02]), &opts(5.5)).unwrap();
        let b = delay_sensitivity(&p, 2, &xi, &DeltaHSource::Given(vec![0.02, 0.04]), &opts(5.5)).unwrap();
        for (x, y) in a.points.iter().zip(&b.points) {
            assert_eq!(2.0 * x.dtau0_fs.unwrap(), y.dtau0_fs.unwrap());
        }
    }

    #[test]
    fn richardson_on_preset() {
        let p = preset_profile();
        for order in [0u32, 2, 4] {
            let spec = HgSpec::new(order, 50.0).unwrap();
            let r = richardson_ratio(|t| shifted_parameter(&p, spec, t, 1072.0).0, 5.5, 4.0);
            assert!((r - 4.0).abs() < 0.05, "order {order}: {r}");
        }
    }
}
