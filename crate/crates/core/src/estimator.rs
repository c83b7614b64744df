//! Semiparametric estimators of linear functionals of the coincidence dip.
//!
//! A parameter `θ = ∫ ϑ(ω) f(ω) dω` is equivalently `∫ ϑ̃(τ) f̃(τ) dτ`, and
//! with `C(τ) = C₀(1 − v f̃(τ))` it maps to the data-side parameter
//! `θ′ = ∫ ϑ̃(τ) C(τ)/C₀ dτ = ∫ϑ̃ − vθ`. Both estimators here are linear in
//! the counts, so each is stored as a weight vector over the scan grid.
//!
//! Hermite-Gauss parameters are `h_n = i^n ∫ HG_n(ω) f(ω) dω`, which is real
//! for every order and equals `(−1)^(n/2) ∫ HG_n f` for even `n`. Their time
//! kernel is `τ^n exp(−τ²/4ξ²) / (2√π ξ^(n+1))`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dip_model::CoincidenceScan;
use crate::error::{HomError, Result};
use crate::hg_basis::{fourier_phase, hg_function, hg_time_kernel, HgSpec};
use crate::numeric::{CubicSpline, Quadrature, SplineBoundary, UniformGrid};
use crate::spdc_model::{DelayProfile, SpectralFunction};

/// Envelope level at the scan edge above which truncation is reported.
pub const TRUNCATION_LEVEL: f64 = 1e-6;

/// Time kernel of `h_n`.
pub fn parameter_kernel(spec: HgSpec, tau: f64) -> f64 {
    hg_time_kernel(spec, tau) / (2.0 * PI)
}

/// `∫ k_n(τ) dτ` over the real line: `n!/(n/2)!` for even `n`, 0 for odd.
pub fn parameter_kernel_integral(spec: HgSpec) -> f64 {
    let n = spec.order();
    if n % 2 == 1 {
        return 0.0;
    }
    ((n / 2 + 1)..=n).map(|k| k as f64).product()
}

/// `h_n` from the spectrum by integration over the ω grid.
pub fn hg_parameter_from_spectrum(spec: HgSpec, f: &SpectralFunction) -> f64 {
    (fourier_phase(spec.order()) * f.integrate_weighted(|w| hg_function(spec, w))).re
}

/// `h_n = ∫ f̃(τ) k_n(τ) dτ` by adaptive quadrature over `[−half_range, half_range]`.
pub fn hg_parameter_from_profile(spec: HgSpec, profile: &dyn DelayProfile, half_range_fs: f64) -> Result<f64> {
    Quadrature::with_rel_tol(1e-12)
        .panels(64)
        .integrate(|t| profile.value(t) * parameter_kernel(spec, t), -half_range_fs, half_range_fs)
}

/// Influence kernel `ϑ̃(τ)`.
#[derive(Clone)]
pub enum Kernel {
    HermiteGauss(HgSpec),
    Zero,
    Custom {
        label: String,
        f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    },
}

impl fmt::Debug for Kernel {
    fn fmt(&self, fm: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::HermiteGauss(s) => fm.debug_tuple("HermiteGauss").field(s).finish(),
            Kernel::Zero => fm.write_str("Zero"),
            Kernel::Custom { label, .. } => fm.debug_struct("Custom").field("label", label).finish(),
        }
    }
}

impl Kernel {
    pub fn custom(label: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Custom {
            label: label.into(),
            f: Arc::new(f),
        }
    }

    pub fn value(&self, tau: f64) -> f64 {
        match self {
            Kernel::HermiteGauss(s) => parameter_kernel(*s, tau),
            Kernel::Zero => 0.0,
            Kernel::Custom { f, .. } => f(tau),
        }
    }

    pub fn hg_spec(&self) -> Option<HgSpec> {
        match self {
            Kernel::HermiteGauss(s) => Some(*s),
            _ => None,
        }
    }

    /// Gaussian envelope `exp(−τ²/4ξ²)` of an HG kernel.
    pub fn envelope(&self, tau: f64) -> Option<f64> {
        self.hg_spec().map(|s| (-tau * tau / (4.0 * s.xi_fs() * s.xi_fs())).exp())
    }
}

/// A parameter together with the scan step and baseline it is discretised on.
#[derive(Debug, Clone)]
pub struct ParameterSpec {
    kernel: Kernel,
    step_fs: f64,
    c0: f64,
}

impl ParameterSpec {
    pub fn new(kernel: Kernel, step_fs: f64, c0: f64) -> Result<Self> {
        if !(step_fs > 0.0) || !step_fs.is_finite() {
            return Err(HomError::invalid("step_fs", format!("must be positive, got {step_fs}")));
        }
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(HomError::invalid("c0", format!("must be positive, got {c0}")));
        }
        Ok(ParameterSpec { kernel, step_fs, c0 })
    }

    pub fn hermite_gauss(order: u32, xi_fs: f64, step_fs: f64, c0: f64) -> Result<Self> {
        Self::new(Kernel::HermiteGauss(HgSpec::new(order, xi_fs)?), step_fs, c0)
    }

    /// Spec on the step and recorded baseline of `scan`.
    pub fn for_scan(kernel: Kernel, scan: &CoincidenceScan) -> Result<Self> {
        Self::new(kernel, scan.step_fs(), scan.c0())
    }

    /// Raw spectral moments `∫ ωⁿ f(ω) dω` have no square-integrable kernel.
    pub fn raw_moment(order: u32) -> Result<Self> {
        Err(HomError::Unsupported(format!(
            "the raw moment of order {order} has a kernel proportional to the {order}-th derivative \
             of a delta function, so no semiparametric estimator exists; use a Hermite-Gauss \
             component instead"
        )))
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn step_fs(&self) -> f64 {
        self.step_fs
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    /// `ϑ̃′(τ) = ϑ̃(τ) δτ / C₀`.
    pub fn discretized(&self, tau: f64) -> f64 {
        self.kernel.value(tau) * self.step_fs / self.c0
    }

    pub fn check_grid(&self, grid: &UniformGrid) -> Result<()> {
        if ((grid.step - self.step_fs) / self.step_fs).abs() > 1e-9 {
            return Err(HomError::Mismatch(format!(
                "scan step {} fs differs from parameter step {} fs",
                grid.step, self.step_fs
            )));
        }
        Ok(())
    }

    pub fn check_scan(&self, scan: &CoincidenceScan) -> Result<()> {
        self.check_grid(scan.grid())?;
        if ((scan.c0() - self.c0) / self.c0).abs() > 1e-9 {
            return Err(HomError::Mismatch(format!(
                "scan baseline {} differs from parameter baseline {}",
                scan.c0(),
                self.c0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Discrete,
    #[default]
    Interpolated,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Discrete => "discrete",
            Method::Interpolated => "interpolated",
        }
    }
}

/// `θ̌′ = Σ wᵢ Čᵢ` for a fixed grid and parameter.
#[derive(Debug, Clone)]
pub struct LinearEstimator {
    method: Method,
    grid: UniformGrid,
    weights: Vec<f64>,
    kernel_integral: f64,
}

impl LinearEstimator {
    pub fn new(method: Method, grid: &UniformGrid, spec: &ParameterSpec, boundary: SplineBoundary) -> Result<Self> {
        match method {
            Method::Discrete => Self::discrete(grid, spec),
            Method::Interpolated => Self::interpolated(grid, spec, boundary),
        }
    }

    /// Weights `ϑ̃′(τᵢ)`; the kernel integral is the matching Riemann sum.
    pub fn discrete(grid: &UniformGrid, spec: &ParameterSpec) -> Result<Self> {
        spec.check_grid(grid)?;
        let weights: Vec<f64> = grid.points().into_iter().map(|t| spec.discretized(t)).collect();
        let kernel_integral = weights.iter().sum::<f64>() * spec.c0;
        Ok(LinearEstimator {
            method: Method::Discrete,
            grid: *grid,
            weights,
            kernel_integral,
        })
    }

    /// Weights of `(1/C₀) ∫ S(τ) ϑ̃(τ) dτ` where `S` is the cubic spline
    /// through the counts, integrated over the grid range.
    pub fn interpolated(grid: &UniformGrid, spec: &ParameterSpec, boundary: SplineBoundary) -> Result<Self> {
        spec.check_grid(grid)?;
        let n = grid.len;
        if n < 4 {
            return Err(HomError::invalid(
                "scan",
                format!("interpolation needs at least 4 points, got {n}"),
            ));
        }
        let moments = kernel_moments(grid, spec.kernel())?;
        let kernel_integral = moments.iter().map(|m| m[0]).sum();
        let mut weights = vec![0.0; n];
        let mut unit = vec![0.0; n];
        for (i, w) in weights.iter_mut().enumerate() {
            unit[i] = 1.0;
            let spline = CubicSpline::new(*grid, &unit, boundary)?;
            unit[i] = 0.0;
            let mut acc = 0.0;
            for (j, m) in moments.iter().enumerate() {
                let c = spline.interval_coefficients(j);
                acc += c[0] * m[0] + c[1] * m[1] + c[2] * m[2] + c[3] * m[3];
            }
            *w = acc / spec.c0;
        }
        Ok(LinearEstimator {
            method: Method::Interpolated,
            grid: *grid,
            weights,
            kernel_integral,
        })
    }

    pub fn method(&self) -> Method {
        self.method
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫ϑ̃` over the range this estimator sees.
    pub fn kernel_integral(&self) -> f64 {
        self.kernel_integral
    }

    pub fn apply(&self, counts: &[f64]) -> Result<f64> {
        if counts.len() != self.weights.len() {
            return Err(HomError::Mismatch(format!(
                "{} counts for an estimator on {} points",
                counts.len(),
                self.weights.len()
            )));
        }
        Ok(counts.iter().zip(&self.weights).map(|(c, w)| c * w).sum())
    }

    /// Poisson variance `Σ Cᵢ wᵢ²`.
    pub fn variance(&self, expected: &[f64]) -> Result<f64> {
        if expected.len() != self.weights.len() {
            return Err(HomError::Mismatch(format!(
                "{} expected counts for an estimator on {} points",
                expected.len(),
                self.weights.len()
            )));
        }
        if let Some(bad) = expected.iter().find(|c| !(**c >= 0.0)) {
            return Err(HomError::invalid("expected", format!("negative expected count {bad}")));
        }
        Ok(expected.iter().zip(&self.weights).map(|(c, w)| c * w * w).sum())
    }
}

/// `∫₀^δτ tᵏ ϑ̃(τⱼ + t) dt` for every grid interval and `k = 0..3`.
fn kernel_moments(grid: &UniformGrid, kernel: &Kernel) -> Result<Vec<[f64; 4]>> {
    let q = Quadrature {
        rel_tol: 1e-11,
        abs_tol: 0.0,
        panels: 1,
        max_depth: 30,
    };
    let h = grid.step;
    (0..grid.len - 1)
        .into_par_iter()
        .map(|j| {
            let x0 = grid.point(j);
            let mut m = [0.0; 4];
            let nearest = if x0 <= 0.0 && x0 + h >= 0.0 { 0.0 } else { x0.abs().min((x0 + h).abs()) };
            if kernel.envelope(nearest).is_some_and(|e| e < 1e-250) {
                return Ok(m);
            }
            for (k, slot) in m.iter_mut().enumerate() {
                *slot = q.integrate(|t| t.powi(k as i32) * kernel.value(x0 + t), 0.0, h)?;
            }
            Ok(m)
        })
        .collect()
}

/// `Σ Čᵢ ϑ̃′(τᵢ)`.
pub fn estimate_discrete(scan: &CoincidenceScan, spec: &ParameterSpec) -> Result<f64> {
    spec.check_scan(scan)?;
    LinearEstimator::discrete(scan.grid(), spec)?.apply(scan.counts())
}

/// `Σ C(τᵢ) ϑ̃′(τᵢ)²`.
pub fn variance_discrete(expected: &[f64], grid: &UniformGrid, spec: &ParameterSpec) -> Result<f64> {
    LinearEstimator::discrete(grid, spec)?.variance(expected)
}

/// `(1/C₀) ∫ Č(τ) ϑ̃(τ) dτ` with `Č` the cubic spline through the counts.
pub fn estimate_interpolated(scan: &CoincidenceScan, spec: &ParameterSpec, boundary: SplineBoundary) -> Result<f64> {
    spec.check_scan(scan)?;
    LinearEstimator::interpolated(scan.grid(), spec, boundary)?.apply(scan.counts())
}

/// `θ = (∫ϑ̃ − θ′)/v` and its variance `Δ²θ′/v²`.
pub fn to_theta(theta_prime: f64, variance_prime: f64, v: f64, kernel_integral: f64) -> Result<(f64, f64)> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(HomError::invalid("visibility", format!("must lie in (0, 1], got {v}")));
    }
    Ok(((kernel_integral - theta_prime) / v, variance_prime / (v * v)))
}

/// `(δτ/C₀²) ∫ C(τ) ϑ̃(τ)² dτ` over `[lo, hi]`.
pub fn crb_continuous(expected: &dyn Fn(f64) -> f64, spec: &ParameterSpec, lo: f64, hi: f64) -> Result<f64> {
    if matches!(spec.kernel(), Kernel::Zero) {
        return Ok(0.0);
    }
    let integral = Quadrature::with_rel_tol(1e-11)
        .panels(64)
        .integrate(|t| expected(t) * spec.kernel().value(t).powi(2), lo, hi)?;
    if integral < 0.0 {
        return Err(HomError::invalid("expected", "profile is negative on the scan range"));
    }
    Ok(spec.step_fs() / (spec.c0() * spec.c0()) * integral)
}

/// Reliability condition `ξ > δτ/√2`.
pub fn is_reliable(xi_fs: f64, step_fs: f64) -> bool {
    xi_fs > step_fs / std::f64::consts::SQRT_2
}

/// Continuous profile the bound is evaluated on.
#[derive(Clone, Default)]
pub enum CrbReference {
    /// Cubic interpolant of the observed counts, clipped at zero.
    #[default]
    ObservedInterpolant,
    /// A known expected-count profile `C(τ)`.
    Profile(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl CrbReference {
    pub fn label(&self) -> &'static str {
        match self {
            CrbReference::ObservedInterpolant => "observed_interpolant",
            CrbReference::Profile(_) => "profile",
        }
    }
}

impl fmt::Debug for CrbReference {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Default)]
pub struct EstimateOptions {
    pub method: Method,
    pub boundary: SplineBoundary,
    pub crb_reference: CrbReference,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub order: u32,
    pub xi_fs: f64,
    pub method: Method,
    pub theta_prime: f64,
    pub variance_prime: f64,
    pub crb_prime: f64,
    /// `h_n` after conversion with the visibility.
    pub h: f64,
    pub variance: f64,
    pub crb: f64,
    pub kernel_integral: f64,
    pub reliable: bool,
    pub truncation_warning: bool,
    /// Change in `h` from a one-standard-error shift of the tail-mean `C₀`.
    pub c0_shift: f64,
}

/// Everything needed to evaluate one `(order, ξ)` point on a fixed scan grid.
#[derive(Debug, Clone)]
pub struct HgEstimator {
    spec: ParameterSpec,
    estimator: LinearEstimator,
}

impl HgEstimator {
    pub fn new(scan: &CoincidenceScan, order: u32, xi_fs: f64, method: Method, boundary: SplineBoundary) -> Result<Self> {
        let spec = ParameterSpec::for_scan(Kernel::HermiteGauss(HgSpec::new(order, xi_fs)?), scan)?;
        let estimator = LinearEstimator::new(method, scan.grid(), &spec, boundary)?;
        Ok(HgEstimator { spec, estimator })
    }

    pub fn spec(&self) -> &ParameterSpec {
        &self.spec
    }

    pub fn estimator(&self) -> &LinearEstimator {
        &self.estimator
    }

    /// `h` for counts on the scan grid.
    pub fn h(&self, counts: &[f64], v: f64) -> Result<f64> {
        let tp = self.estimator.apply(counts)?;
        Ok(to_theta(tp, 0.0, v, self.estimator.kernel_integral())?.0)
    }
}

/// Estimates `h_n` at scale `ξ` from one scan.
pub fn hg_parameter(scan: &CoincidenceScan, order: u32, xi_fs: f64, v: f64, opts: &EstimateOptions) -> Result<EstimateReport> {
    let est = HgEstimator::new(scan, order, xi_fs, opts.method, opts.boundary)?;
    report_for(scan, &est, v, opts)
}

fn report_for(scan: &CoincidenceScan, est: &HgEstimator, v: f64, opts: &EstimateOptions) -> Result<EstimateReport> {
    let hg = est.spec.kernel().hg_spec().expect("HG estimator");
    let lin = &est.estimator;
    let theta_prime = lin.apply(scan.counts())?;
    let variance_prime = lin.variance(scan.counts())?;
    let grid = scan.grid();
    let (lo, hi) = (grid.start, grid.end());
    let crb_prime = match &opts.crb_reference {
        CrbReference::Profile(p) => crb_continuous(p.as_ref(), &est.spec, lo, hi)?,
        CrbReference::ObservedInterpolant => {
            let spline = CubicSpline::new(*grid, scan.counts(), opts.boundary)?;
            crb_continuous(&|t| spline.eval(t).unwrap_or(0.0).max(0.0), &est.spec, lo, hi)?
        }
    };
    let k = lin.kernel_integral();
    let (h, variance) = to_theta(theta_prime, variance_prime, v, k)?;
    let crb = crb_prime / (v * v);
    let edge = lo.abs().min(hi.abs());
    let truncation_warning = est.spec.kernel().envelope(edge).unwrap_or(0.0) >= TRUNCATION_LEVEL;
    let (_, n_tail) = scan.tail_mean();
    let c0_shift = (theta_prime / (v * scan.c0())) * (scan.c0() / n_tail as f64).sqrt();
    Ok(EstimateReport {
        order: hg.order(),
        xi_fs: hg.xi_fs(),
        method: lin.method(),
        theta_prime,
        variance_prime,
        crb_prime,
        h,
        variance,
        crb,
        kernel_integral: k,
        reliable: is_reliable(hg.xi_fs(), scan.step_fs()),
        truncation_warning,
        c0_shift,
    })
}

/// Reports for every `(order, ξ)` pair, orders outermost.
pub fn sweep(scan: &CoincidenceScan, orders: &[u32], xi_grid: &[f64], v: f64, opts: &EstimateOptions) -> Result<Vec<EstimateReport>> {
    let pairs: Vec<(u32, f64)> = orders
        .iter()
        .flat_map(|&n| xi_grid.iter().map(move |&x| (n, x)))
        .collect();
    pairs
        .par_iter()
        .map(|&(n, xi)| hg_parameter(scan, n, xi, v, opts))
        .collect()
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(hi > lo) || !(lo > 0.0) {
        return Err(HomError::invalid(
            "xi_grid",
            format!("need 0 < xi_min < xi_max and at least 2 points, got [{lo}, {hi}] x {n}"),
        ));
    }
    Ok((0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect())
}

/// Default sweep `[δτ/2, 10 σ]`.
pub fn default_xi_grid(step_fs: f64, sigma_fs: f64, n: usize) -> Result<Vec<f64>> {
    linear_grid(0.5 * step_fs, 10.0 * sigma_fs, n)
}
