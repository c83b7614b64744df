//! Two-photon spectral models and the delay-domain profile they produce.
//!
//! The marginal symmetrised wavefunction is
//!
//! ```text
//! f(ω) = ½ ∫ dΩ Φ*((Ω+ω)/2, (Ω−ω)/2) Φ((Ω−ω)/2, (Ω+ω)/2)
//! ```
//!
//! with `ω = ω₁ − ω₂`, and the dip shape is `f̃(τ) = ∫ exp(iωτ) f(ω) dω`.
//! Inverse transforms carry the `1/(2π)`. Every [`SpectralFunction`] built
//! here is scaled so that `f̃(0) = ∫ f dω = 1`; the unscaled integral is kept
//! in [`SpectralFunction::raw_integral`].

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};
use crate::numeric::{trapezoid, CubicSpline, SplineBoundary, UniformGrid};

/// Speed of light in nm/fs.
pub const SPEED_OF_LIGHT_NM_PER_FS: f64 = 299.792_458;

/// Default number of points for frequency grids.
pub const DEFAULT_OMEGA_POINTS: usize = 2049;

/// Angular-frequency width (rad/fs) of a filter of width `delta_lambda_nm`
/// centred at `lambda_nm`: `2πc·Δλ/λ²`.
pub fn angular_width_from_wavelength(delta_lambda_nm: f64, lambda_nm: f64) -> f64 {
    2.0 * std::f64::consts::PI * SPEED_OF_LIGHT_NM_PER_FS * delta_lambda_nm / (lambda_nm * lambda_nm)
}

/// Anything that can be evaluated as a normalised delay profile `f̃(τ)`.
pub trait DelayProfile: Send + Sync {
    fn value(&self, tau_fs: f64) -> f64;
}

impl<F: Fn(f64) -> f64 + Send + Sync> DelayProfile for F {
    fn value(&self, tau_fs: f64) -> f64 {
        self(tau_fs)
    }
}

/// Single-photon spectral envelope.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AmplitudeShape {
    /// `exp(-Δ²/(4σ₀²))`: σ₀ is the rms width of the intensity.
    Gaussian,
    /// `exp(-(Δ/σ₀)^p / 2)` with even `p`.
    SuperGaussian { order: u32 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AmplitudeRecord", into = "AmplitudeRecord")]
pub struct SinglePhotonAmplitude {
    pub shape: AmplitudeShape,
    /// Centre frequency ω̄ in rad/fs.
    pub center: f64,
    /// Width σ₀ in rad/fs.
    pub width: f64,
    /// Quadratic spectral phase coefficient in fs².
    pub chirp_fs2: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ShapeName {
    Gaussian,
    SuperGaussian,
}

/// Flat serialized form: `{"shape": "super_gaussian", "order": 4, ...}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AmplitudeRecord {
    shape: ShapeName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    order: Option<u32>,
    center: f64,
    width: f64,
    #[serde(default)]
    chirp_fs2: f64,
}

impl TryFrom<AmplitudeRecord> for SinglePhotonAmplitude {
    type Error = String;

    fn try_from(r: AmplitudeRecord) -> std::result::Result<Self, String> {
        let shape = match (r.shape, r.order) {
            (ShapeName::Gaussian, None) => AmplitudeShape::Gaussian,
            (ShapeName::SuperGaussian, Some(order)) => AmplitudeShape::SuperGaussian { order },
            (ShapeName::Gaussian, Some(_)) => return Err("`order` applies only to super_gaussian".into()),
            (ShapeName::SuperGaussian, None) => return Err("super_gaussian needs `order`".into()),
        };
        Ok(SinglePhotonAmplitude {
            shape,
            center: r.center,
            width: r.width,
            chirp_fs2: r.chirp_fs2,
        })
    }
}

impl From<SinglePhotonAmplitude> for AmplitudeRecord {
    fn from(a: SinglePhotonAmplitude) -> Self {
        let (shape, order) = match a.shape {
            AmplitudeShape::Gaussian => (ShapeName::Gaussian, None),
            AmplitudeShape::SuperGaussian { order } => (ShapeName::SuperGaussian, Some(order)),
        };
        AmplitudeRecord {
            shape,
            order,
            center: a.center,
            width: a.width,
            chirp_fs2: a.chirp_fs2,
        }
    }
}

impl SinglePhotonAmplitude {
    pub fn gaussian(center: f64, width: f64) -> Self {
        SinglePhotonAmplitude {
            shape: AmplitudeShape::Gaussian,
            center,
            width,
            chirp_fs2: 0.0,
        }
    }

    pub fn super_gaussian(center: f64, width: f64, order: u32) -> Self {
        SinglePhotonAmplitude {
            shape: AmplitudeShape::SuperGaussian { order },
            center,
            width,
            chirp_fs2: 0.0,
        }
    }

    pub fn with_chirp(mut self, chirp_fs2: f64) -> Self {
        self.chirp_fs2 = chirp_fs2;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0) || !self.width.is_finite() {
            return Err(HomError::invalid("width", "amplitude width must be positive"));
        }
        if !self.center.is_finite() || !self.chirp_fs2.is_finite() {
            return Err(HomError::invalid("center", "must be finite"));
        }
        if let AmplitudeShape::SuperGaussian { order } = self.shape {
            validate_even_order(order)?;
        }
        Ok(())
    }

    pub fn value(&self, omega: f64) -> Complex64 {
        let d = omega - self.center;
        let u = d / self.width;
        let magnitude = match self.shape {
            AmplitudeShape::Gaussian => (-0.25 * u * u).exp(),
            AmplitudeShape::SuperGaussian { order } => (-0.5 * u.abs().powi(order as i32)).exp(),
        };
        Complex64::from_polar(magnitude, self.chirp_fs2 * d * d)
    }

    /// Distance from the centre beyond which the magnitude is below ~1e-17.
    fn support_half_width(&self) -> f64 {
        let reach = match self.shape {
            AmplitudeShape::Gaussian => 12.5,
            AmplitudeShape::SuperGaussian { order } => 80f64.powf(1.0 / order as f64),
        };
        reach * self.width
    }
}

fn validate_even_order(order: u32) -> Result<()> {
    if order == 0 || order % 2 != 0 {
        return Err(HomError::invalid(
            "order",
            format!("super-Gaussian order must be a positive even integer, got {order}"),
        ));
    }
    Ok(())
}

/// `f̃(τ) = exp(-τ²/(2σ²)) · sinc(πBτ/σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproxSincGauss {
    pub sigma_fs: f64,
    pub b: f64,
}

/// `sin(x)/x` with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-4 {
        let x2 = x * x;
        1.0 - x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sin() / x
    }
}

impl ApproxSincGauss {
    pub fn new(sigma_fs: f64, b: f64) -> Result<Self> {
        let p = ApproxSincGauss { sigma_fs, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma_fs > 0.0) || !self.sigma_fs.is_finite() {
            return Err(HomError::invalid("sigma_fs", "must be positive"));
        }
        if !(self.b >= 0.0) || !self.b.is_finite() {
            return Err(HomError::invalid("b", "must be non-negative"));
        }
        Ok(())
    }

    pub fn profile(&self, tau_fs: f64) -> f64 {
        approx_profile(self.sigma_fs, self.b, tau_fs)
    }

    /// Closed-form `f(ω) = (1/2π) ∫ exp(-iωτ) f̃(τ) dτ`: a Gaussian of rms
    /// width `1/σ` convolved with a box of half-width `a = πB/σ`.
    pub fn spectral(&self, omega: f64) -> f64 {
        let s = self.sigma_fs;
        let a = std::f64::consts::PI * self.b / s;
        let gauss = s / (2.0 * std::f64::consts::PI).sqrt() * (-0.5 * (s * omega).powi(2)).exp();
        if a * s < 1e-6 {
            return gauss;
        }
        let k = s / std::f64::consts::SQRT_2;
        let diff = erf_difference(k * (omega + a), k * (omega - a));
        diff / (4.0 * a)
    }
}

/// `erf(x) - erf(y)` evaluated through complementary functions where that
/// avoids cancellation.
fn erf_difference(x: f64, y: f64) -> f64 {
    if y > 0.0 {
        libm::erfc(y) - libm::erfc(x)
    } else if x < 0.0 {
        libm::erfc(-x) - libm::erfc(-y)
    } else {
        libm::erf(x) - libm::erf(y)
    }
}

impl DelayProfile for ApproxSincGauss {
    fn value(&self, tau_fs: f64) -> f64 {
        self.profile(tau_fs)
    }
}

/// The approximate dip shape `exp(-τ²/(2σ²)) sinc(πBτ/σ)`.
pub fn approx_profile(sigma_fs: f64, b: f64, tau_fs: f64) -> f64 {
    let u = tau_fs / sigma_fs;
    (-0.5 * u * u).exp() * sinc(std::f64::consts::PI * b * u)
}

/// Joint spectral amplitude sampled on a rectangular grid, row-major in ω₁.
#[derive(Debug, Clone, PartialEq)]
pub struct JsaGrid {
    pub omega1: UniformGrid,
    pub omega2: UniformGrid,
    pub values: Vec<Complex64>,
}

impl JsaGrid {
    pub fn new(omega1: UniformGrid, omega2: UniformGrid, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != omega1.len * omega2.len {
            return Err(HomError::invalid(
                "values",
                format!(
                    "expected {}x{} samples, got {}",
                    omega1.len,
                    omega2.len,
                    values.len()
                ),
            ));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(HomError::invalid("values", "samples must be finite"));
        }
        Ok(JsaGrid {
            omega1,
            omega2,
            values,
        })
    }

    pub fn sample<F: Fn(f64, f64) -> Complex64>(
        omega1: UniformGrid,
        omega2: UniformGrid,
        amplitude: F,
    ) -> Self {
        let mut values = Vec::with_capacity(omega1.len * omega2.len);
        for i in 0..omega1.len {
            for j in 0..omega2.len {
                values.push(amplitude(omega1.point(i), omega2.point(j)));
            }
        }
        JsaGrid {
            omega1,
            omega2,
            values,
        }
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.omega2.len + j]
    }

    /// `Σ|Φ|² Δω₁ Δω₂`.
    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>() * self.omega1.step * self.omega2.step
    }

    pub fn normalized(mut self) -> Result<Self> {
        let n = self.norm_squared();
        if !(n > 0.0) {
            return Err(HomError::invalid("values", "amplitude is identically zero"));
        }
        let s = 1.0 / n.sqrt();
        for v in &mut self.values {
            *v *= s;
        }
        Ok(self)
    }
}

/// A two-photon spectral description.
#[derive(Debug, Clone, PartialEq)]
pub enum SpectralModel {
    /// `Φ(ω₁, ω₂) = φ₁(ω₁) φ₂(ω₂)`.
    SeparableProduct {
        signal: SinglePhotonAmplitude,
        idler: SinglePhotonAmplitude,
    },
    /// Monochromatic pump with identical super-Gaussian filters on both arms.
    CwFiltered { width: f64, order: u32 },
    ApproxSincGauss(ApproxSincGauss),
    NumericGrid(JsaGrid),
}

impl SpectralModel {
    pub fn validate(&self) -> Result<()> {
        match self {
            SpectralModel::SeparableProduct { signal, idler } => {
                signal.validate()?;
                idler.validate()
            }
            SpectralModel::CwFiltered { width, order } => {
                if !(*width > 0.0) || !width.is_finite() {
                    return Err(HomError::invalid("width", "filter width must be positive"));
                }
                validate_even_order(*order)
            }
            SpectralModel::ApproxSincGauss(p) => p.validate(),
            SpectralModel::NumericGrid(g) => {
                let n = g.norm_squared();
                if (n - 1.0).abs() > 1e-6 {
                    return Err(HomError::invalid(
                        "values",
                        format!("joint spectral amplitude must be normalised, Σ|Φ|²ΔωΔω = {n}"),
                    ));
                }
                Ok(())
            }
        }
    }

    /// Frequency grid on which `f(ω)` is fully resolved and has decayed at
    /// the edges.
    pub fn default_omega_grid(&self) -> Result<UniformGrid> {
        let n = DEFAULT_OMEGA_POINTS;
        match self {
            SpectralModel::SeparableProduct { signal, idler } => {
                let half = 2.0 * signal.support_half_width().max(idler.support_half_width());
                UniformGrid::symmetric(half, n)
            }
            SpectralModel::CwFiltered { width, .. } => UniformGrid::symmetric(12.0 * width, n),
            SpectralModel::ApproxSincGauss(p) => {
                let a = std::f64::consts::PI * p.b / p.sigma_fs;
                UniformGrid::symmetric(a + 9.0 / p.sigma_fs, n)
            }
            SpectralModel::NumericGrid(g) => {
                let span = (g.omega1.end() - g.omega2.start).max(g.omega2.end() - g.omega1.start);
                let half_steps = (span / g.omega1.step).round() as usize;
                UniformGrid::new(-(half_steps as f64) * g.omega1.step, g.omega1.step, 2 * half_steps + 1)
            }
        }
    }

    /// Normalised delay profile `f̃(τ)` valid for `|τ| <= half_span_fs`
    /// (zero beyond).
    pub fn delay_profile(&self, half_span_fs: f64) -> Result<Box<dyn DelayProfile>> {
        self.validate()?;
        if let SpectralModel::ApproxSincGauss(p) = self {
            return Ok(Box::new(*p));
        }
        let f = marginal_symmetrised(self, &self.default_omega_grid()?)?;
        let scale = f.rms_width();
        let step = (0.05 / scale).min(half_span_fs / 64.0);
        let tau = UniformGrid::symmetric_with_step(half_span_fs, step)?;
        Ok(Box::new(time_profile(&f, &tau)?))
    }
}

/// Samples of `f(ω)` on a symmetric frequency grid.
#[derive(Debug, Clone)]
pub struct SpectralFunction {
    grid: UniformGrid,
    values: Vec<Complex64>,
    raw_integral: f64,
    real_valued: bool,
}

impl SpectralFunction {
    /// Wraps unnormalised samples, scaling them to unit integral and checking
    /// Hermitian symmetry.
    pub fn from_raw(grid: UniformGrid, raw: Vec<Complex64>) -> Result<Self> {
        if !grid.is_symmetric() {
            return Err(HomError::invalid("omega_grid", "must be symmetric about 0 with an odd point count"));
        }
        if raw.len() != grid.len {
            return Err(HomError::invalid("values", "length does not match the grid"));
        }
        let max = raw.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let n = raw.len();
        for i in 0..n / 2 {
            let asym = (raw[n - 1 - i] - raw[i].conj()).norm();
            if asym > 1e-9 * max {
                return Err(HomError::Numeric(format!(
                    "f(ω) violates Hermitian symmetry at ω = {} (|Δ| = {asym:.3e})",
                    grid.point(i)
                )));
            }
        }
        let re: Vec<f64> = raw.iter().map(|v| v.re).collect();
        let raw_integral = trapezoid(&re, grid.step);
        if !(raw_integral.abs() > 1e-300) || !raw_integral.is_finite() {
            return Err(HomError::Numeric(
                "f̃(0) vanishes; the two photons do not overlap".into(),
            ));
        }
        let values: Vec<Complex64> = raw.iter().map(|v| v / raw_integral).collect();
        let real_valued = values.iter().all(|v| v.im.abs() <= 1e-12 * max / raw_integral.abs());
        Ok(SpectralFunction {
            grid,
            values,
            raw_integral,
            real_valued,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// `∫ f dω` before normalisation; equals `f̃(0)` of the unscaled model.
    pub fn raw_integral(&self) -> f64 {
        self.raw_integral
    }

    pub fn is_real(&self) -> bool {
        self.real_valued
    }

    /// Trapezoid estimate of `∫ w(ω) f(ω) dω`.
    pub fn integrate_weighted<W: Fn(f64) -> f64>(&self, weight: W) -> Complex64 {
        let n = self.values.len();
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
            acc += v * (w * weight(self.grid.point(i)));
        }
        acc * self.grid.step
    }

    /// rms width of `|f|²` in rad/fs.
    pub fn rms_width(&self) -> f64 {
        let (mut m0, mut m2) = (0.0, 0.0);
        for (i, v) in self.values.iter().enumerate() {
            let w = self.grid.point(i);
            let p = v.norm_sqr();
            m0 += p;
            m2 += p * w * w;
        }
        (m2 / m0).sqrt()
    }
}

/// Computes `f(ω)` on `omega_grid` for any model.
pub fn marginal_symmetrised(model: &SpectralModel, omega_grid: &UniformGrid) -> Result<SpectralFunction> {
    model.validate()?;
    if !omega_grid.is_symmetric() {
        return Err(HomError::invalid(
            "omega_grid",
            "must be symmetric about 0 with an odd point count",
        ));
    }
    let raw = match model {
        SpectralModel::SeparableProduct { signal, idler } => separable_raw(signal, idler, omega_grid)?,
        SpectralModel::CwFiltered { width, order } => omega_grid
            .points()
            .into_iter()
            .map(|w| {
                let u = (0.5 * w / width).abs();
                Complex64::new((-2.0 * u.powi(*order as i32)).exp(), 0.0)
            })
            .collect(),
        SpectralModel::ApproxSincGauss(p) => omega_grid
            .points()
            .into_iter()
            .map(|w| Complex64::new(p.spectral(w), 0.0))
            .collect(),
        SpectralModel::NumericGrid(g) => grid_raw(g, omega_grid)?,
    };
    SpectralFunction::from_raw(*omega_grid, raw)
}

/// Separable case: `f(ω) = ∫ P(x) P*(x − ω) dx` with `P = φ₁* φ₂`, evaluated
/// on a half-step grid so that both arguments are nodes.
fn separable_raw(
    signal: &SinglePhotonAmplitude,
    idler: &SinglePhotonAmplitude,
    omega_grid: &UniformGrid,
) -> Result<Vec<Complex64>> {
    let delta = 0.5 * omega_grid.step;
    let mid = 0.5 * (signal.center + idler.center);
    let reach = (signal.center - mid).abs().max((idler.center - mid).abs())
        + signal.support_half_width().max(idler.support_half_width());
    let half = (reach / delta).ceil() as usize;
    if half > 4_000_000 {
        return Err(HomError::Numeric(
            "frequency step too fine for the amplitude support".into(),
        ));
    }
    let xs = UniformGrid::new(mid - half as f64 * delta, delta, 2 * half + 1)?;
    let p: Vec<Complex64> = (0..xs.len)
        .map(|j| {
            let x = xs.point(j);
            signal.value(x).conj() * idler.value(x)
        })
        .collect();
    let m_half = omega_grid.len / 2;
    let rows: Vec<(Complex64, Complex64)> = (0..omega_grid.len)
        .into_par_iter()
        .map(|k| {
            let shift = 2 * (k as isize - m_half as isize);
            let mut even = Complex64::new(0.0, 0.0);
            let mut odd = Complex64::new(0.0, 0.0);
            let lo = shift.max(0) as usize;
            let hi = (xs.len as isize + shift.min(0)).max(0) as usize;
            for j in lo..hi {
                let term = p[j] * p[(j as isize - shift) as usize].conj();
                if j % 2 == 0 {
                    even += term;
                } else {
                    odd += term;
                }
            }
            (even, odd)
        })
        .collect();
    check_half_sums(&rows, "Ω quadrature")?;
    Ok(rows.into_iter().map(|(e, o)| (e + o) * delta).collect())
}

/// Compares the two interleaved half-resolution sums of an antidiagonal
/// quadrature; disagreement means the grid does not resolve the integrand.
fn check_half_sums(rows: &[(Complex64, Complex64)], what: &str) -> Result<()> {
    let max = rows.iter().map(|(e, o)| (e + o).norm()).fold(0.0, f64::max);
    for (e, o) in rows {
        if (2.0 * e - (e + o)).norm() > 1e-6 * max {
            return Err(HomError::Numeric(format!(
                "{what} is not converged; refine the frequency grid"
            )));
        }
    }
    Ok(())
}

fn grid_raw(g: &JsaGrid, omega_grid: &UniformGrid) -> Result<Vec<Complex64>> {
    let d = g.omega1.step;
    if ((g.omega2.step - d) / d).abs() > 1e-9 {
        return Err(HomError::invalid(
            "omega2",
            "ω₁ and ω₂ axes must share the same step",
        ));
    }
    let offset_f = (g.omega1.start - g.omega2.start) / d;
    let offset = offset_f.round();
    if (offset_f - offset).abs() > 1e-6 {
        return Err(HomError::invalid(
            "omega2",
            "ω₁ and ω₂ axes must be offset by a whole number of steps",
        ));
    }
    let ratio_f = omega_grid.step / d;
    let ratio = ratio_f.round();
    if ratio < 1.0 || (ratio_f - ratio).abs() > 1e-6 {
        return Err(HomError::invalid(
            "omega_grid",
            format!("step must be a whole multiple of the JSA step {d}"),
        ));
    }
    let (o, k) = (offset as isize, ratio as isize);
    let (n1, n2) = (g.omega1.len as isize, g.omega2.len as isize);
    let m_half = (omega_grid.len / 2) as isize;
    let rows: Vec<(Complex64, Complex64)> = (0..omega_grid.len as isize)
        .into_par_iter()
        .map(|idx| {
            let dd = (idx - m_half) * k;
            let mut even = Complex64::new(0.0, 0.0);
            let mut odd = Complex64::new(0.0, 0.0);
            // Φ*(i, i+o−d) Φ(i−d, i+o)
            for i in 0..n1 {
                let j = i + o - dd;
                let (i2, j2) = (i - dd, i + o);
                if j < 0 || j >= n2 || i2 < 0 || i2 >= n1 || j2 < 0 || j2 >= n2 {
                    continue;
                }
                let term = g.at(i as usize, j as usize).conj() * g.at(i2 as usize, j2 as usize);
                if i % 2 == 0 {
                    even += term;
                } else {
                    odd += term;
                }
            }
            (even, odd)
        })
        .collect();
    check_half_sums(&rows, "antidiagonal quadrature")?;
    Ok(rows.into_iter().map(|(e, o)| (e + o) * d).collect())
}

/// Delay-domain samples `f̃(τ)` with cubic interpolation in between.
#[derive(Debug, Clone)]
pub struct TimeProfile {
    grid: UniformGrid,
    values: Vec<f64>,
    spline: CubicSpline,
}

impl TimeProfile {
    pub fn new(grid: UniformGrid, values: Vec<f64>) -> Result<Self> {
        let spline = CubicSpline::new(grid, &values, SplineBoundary::Natural)?;
        Ok(TimeProfile {
            grid,
            values,
            spline,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `f̃(0)`, interpolated if 0 is not a node.
    pub fn peak(&self) -> f64 {
        self.spline.eval(0.0).unwrap_or(0.0)
    }

    /// Largest `|f̃(τ) − f̃(−τ)|` over the grid relative to `max|f̃|`.
    pub fn asymmetry(&self) -> f64 {
        let n = self.values.len();
        let max = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0..n / 2)
            .map(|i| (self.values[i] - self.values[n - 1 - i]).abs())
            .fold(0.0, f64::max)
            / max
    }
}

impl DelayProfile for TimeProfile {
    fn value(&self, tau_fs: f64) -> f64 {
        self.spline.eval(tau_fs).unwrap_or(0.0)
    }
}

/// `f̃(τ) = ∫ exp(iωτ) f(ω) dω` by trapezoid summation over the frequency
/// grid.
pub fn time_profile(f: &SpectralFunction, tau_grid: &UniformGrid) -> Result<TimeProfile> {
    let max_tau = tau_grid.start.abs().max(tau_grid.end().abs());
    let limit = std::f64::consts::PI / f.grid.step;
    if max_tau >= limit {
        return Err(HomError::Numeric(format!(
            "frequency step {} aliases delays beyond {limit:.1} fs; requested {max_tau:.1} fs",
            f.grid.step
        )));
    }
    let n = f.values.len();
    let weights: Vec<f64> = (0..n)
        .map(|i| if i == 0 || i + 1 == n { 0.5 * f.grid.step } else { f.grid.step })
        .collect();
    let omegas = f.grid.points();
    let samples: Vec<Complex64> = tau_grid
        .points()
        .into_par_iter()
        .map(|tau| {
            let mut acc = Complex64::new(0.0, 0.0);
            for ((v, w), om) in f.values.iter().zip(&weights).zip(&omegas) {
                acc += v * Complex64::from_polar(*w, om * tau);
            }
            acc
        })
        .collect();
    let max = samples.iter().map(|v| v.re.abs()).fold(0.0, f64::max);
    let max_im = samples.iter().map(|v| v.im.abs()).fold(0.0, f64::max);
    if max_im > 1e-9 * max {
        return Err(HomError::Numeric(format!(
            "transform has an imaginary residue {max_im:.3e} (max {max:.3e})"
        )));
    }
    TimeProfile::new(*tau_grid, samples.into_iter().map(|v| v.re).collect())
}
