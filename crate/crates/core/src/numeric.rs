//! Numerical building blocks shared by the model and estimator modules:
//! uniform grids, adaptive Gauss-Legendre quadrature, tridiagonal solves and
//! cubic splines on uniform knots.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};

/// Uniformly spaced, strictly increasing sample positions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformGrid {
    pub start: f64,
    pub step: f64,
    pub len: usize,
}

impl UniformGrid {
    pub fn new(start: f64, step: f64, len: usize) -> Result<Self> {
        if !(step > 0.0) || !step.is_finite() {
            return Err(HomError::invalid("step", format!("must be positive, got {step}")));
        }
        if !start.is_finite() {
            return Err(HomError::invalid("start", "must be finite"));
        }
        if len < 2 {
            return Err(HomError::invalid("len", "grid needs at least two points"));
        }
        Ok(UniformGrid { start, step, len })
    }

    /// Grid `-half_span ..= half_span` with an odd number of points, so that 0
    /// is a node.
    pub fn symmetric(half_span: f64, len: usize) -> Result<Self> {
        if len % 2 == 0 || len < 3 {
            return Err(HomError::invalid(
                "len",
                format!("symmetric grids need an odd point count >= 3, got {len}"),
            ));
        }
        if !(half_span > 0.0) {
            return Err(HomError::invalid("half_span", "must be positive"));
        }
        let step = 2.0 * half_span / (len - 1) as f64;
        UniformGrid::new(-half_span, step, len)
    }

    /// Symmetric grid with a prescribed step; `half_span` is rounded up to a
    /// whole number of steps.
    pub fn symmetric_with_step(half_span: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(HomError::invalid("step", "must be positive"));
        }
        let half = (half_span / step).ceil().max(1.0) as usize;
        UniformGrid::new(-(half as f64) * step, step, 2 * half + 1)
    }

    #[inline]
    pub fn point(&self, i: usize) -> f64 {
        self.start + i as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.point(self.len - 1)
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.point(i)).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        self.len % 2 == 1 && (self.start + self.end()).abs() <= 1e-9 * self.step
    }

    /// Index of the node closest to zero when the grid is symmetric.
    pub fn center_index(&self) -> usize {
        self.len / 2
    }

    /// Recovers the grid from explicit positions, checking uniformity to a
    /// tolerance of `1e-6` of the step.
    pub fn from_points(points: &[f64]) -> Result<Self> {
        if points.len() < 2 {
            return Err(HomError::invalid("delays", "need at least two grid points"));
        }
        let step = (points[points.len() - 1] - points[0]) / (points.len() - 1) as f64;
        if !(step > 0.0) {
            return Err(HomError::invalid("delays", "grid must be strictly increasing"));
        }
        for (i, &p) in points.iter().enumerate() {
            let expected = points[0] + i as f64 * step;
            if (p - expected).abs() > 1e-6 * step {
                return Err(HomError::invalid(
                    "delays",
                    format!("grid is not uniform at index {i}: {p} vs expected {expected}"),
                ));
            }
        }
        UniformGrid::new(points[0], step, points.len())
    }
}

/// Trapezoid rule on uniformly spaced samples.
pub fn trapezoid(values: &[f64], step: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner: f64 = values[1..n - 1].iter().sum();
            step * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Nodes and weights of the `n`-point Gauss-Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = (n + 1) / 2;
    for i in 0..m {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 0 { 1.0 } else { p1 };
            dp = n as f64 * (x * p - p0) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

const GL_POINTS: usize = 15;

fn gl15() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GL_POINTS))
}

fn gl_panel<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let (nodes, weights) = gl15();
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    let mut sum = 0.0;
    let mut abs_sum = 0.0;
    for (x, w) in nodes.iter().zip(weights) {
        let v = f(mid + half * x);
        sum += w * v;
        abs_sum += w * v.abs();
    }
    (sum * half, abs_sum * half)
}

/// Composite 15-point Gauss-Legendre rule on `panels` equal panels. Returns
/// the integral and the integral of `|f|`. The error is a smooth function of
/// any parameter `f` depends on, unlike an adaptive rule.
pub fn composite_gauss_legendre<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, panels: usize) -> (f64, f64) {
    let w = (b - a) / panels as f64;
    (0..panels)
        .map(|p| gl_panel(&f, a + p as f64 * w, a + (p + 1) as f64 * w))
        .fold((0.0, 0.0), |(s, t), (v, av)| (s + v, t + av))
}

/// Adaptive Gauss-Legendre quadrature with interval bisection.
///
/// The error target is `max(abs_tol, rel_tol * ∫|f|)`, distributed over
/// subintervals in proportion to their width.
#[derive(Debug, Clone, Copy)]
pub struct Quadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub panels: usize,
    pub max_depth: u32,
}

impl Default for Quadrature {
    fn default() -> Self {
        Quadrature {
            rel_tol: 1e-10,
            abs_tol: 0.0,
            panels: 16,
            max_depth: 40,
        }
    }
}

impl Quadrature {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Quadrature {
            rel_tol,
            ..Default::default()
        }
    }

    pub fn panels(mut self, panels: usize) -> Self {
        self.panels = panels.max(1);
        self
    }

    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        if b < a {
            return self.integrate(f, b, a).map(|v| -v);
        }
        let width = (b - a) / self.panels as f64;
        let mut stack = Vec::with_capacity(64);
        let mut scale = 0.0;
        for p in 0..self.panels {
            let lo = a + p as f64 * width;
            let hi = if p + 1 == self.panels { b } else { lo + width };
            let (v, av) = gl_panel(&f, lo, hi);
            scale += av;
            stack.push((lo, hi, v, 0u32));
        }
        let tol = self.abs_tol.max(self.rel_tol * scale);
        let total_width = b - a;
        let mut total = 0.0;
        while let Some((lo, hi, whole, depth)) = stack.pop() {
            let mid = 0.5 * (lo + hi);
            let (left, left_abs) = gl_panel(&f, lo, mid);
            let (right, right_abs) = gl_panel(&f, mid, hi);
            let refined = left + right;
            // Below roundoff or the normal range no further bisection helps.
            let floor = (50.0 * f64::EPSILON * (left_abs + right_abs)).max(f64::MIN_POSITIVE);
            let local_tol = (tol * (hi - lo) / total_width).max(floor);
            if (refined - whole).abs() <= local_tol {
                total += refined;
            } else if depth >= self.max_depth {
                return Err(HomError::Numeric(format!(
                    "quadrature failed to converge on [{lo}, {hi}] (error {:.3e}, target {:.3e})",
                    (refined - whole).abs(),
                    local_tol
                )));
            } else {
                stack.push((lo, mid, left, depth + 1));
                stack.push((mid, hi, right, depth + 1));
            }
        }
        if !total.is_finite() {
            return Err(HomError::Numeric("quadrature produced a non-finite value".into()));
        }
        Ok(total)
    }
}

/// Solves a tridiagonal system in place (Thomas algorithm). `lower[0]` and
/// `upper[n-1]` are ignored.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    if n == 0 {
        return d;
    }
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let denom = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        d[i] -= c[i] * d[i + 1];
    }
    d
}

/// End conditions for cubic interpolation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplineBoundary {
    /// Zero second derivative at both ends.
    #[default]
    Natural,
    /// Continuous third derivative at the second and penultimate knots.
    NotAKnot,
}

/// Piecewise cubic interpolant through samples on a uniform grid.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    grid: UniformGrid,
    values: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(grid: UniformGrid, values: &[f64], boundary: SplineBoundary) -> Result<Self> {
        let n = grid.len;
        if values.len() != n {
            return Err(HomError::invalid(
                "values",
                format!("expected {n} samples, got {}", values.len()),
            ));
        }
        if n < 4 {
            return Err(HomError::invalid(
                "values",
                format!("cubic interpolation needs at least 4 points, got {n}"),
            ));
        }
        let h = grid.step;
        let m = n - 2;
        let rhs: Vec<f64> = (1..n - 1)
            .map(|i| 6.0 * (values[i + 1] - 2.0 * values[i] + values[i - 1]) / h)
            .collect();
        let mut lower = vec![h; m];
        let mut diag = vec![4.0 * h; m];
        let mut upper = vec![h; m];
        if boundary == SplineBoundary::NotAKnot {
            // M0 = 2 M1 - M2 folded into the first row, mirrored at the end.
            diag[0] = 6.0 * h;
            upper[0] = 0.0;
            diag[m - 1] = 6.0 * h;
            lower[m - 1] = 0.0;
        }
        let inner = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let mut second = vec![0.0; n];
        second[1..n - 1].copy_from_slice(&inner);
        if boundary == SplineBoundary::NotAKnot {
            second[0] = 2.0 * second[1] - second[2];
            second[n - 1] = 2.0 * second[n - 2] - second[n - 3];
        }
        Ok(CubicSpline {
            grid,
            values: values.to_vec(),
            second,
        })
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    /// Power-basis coefficients of the cubic on interval `j`, in the local
    /// variable `t = x - x_j`.
    pub fn interval_coefficients(&self, j: usize) -> [f64; 4] {
        let h = self.grid.step;
        let (y0, y1) = (self.values[j], self.values[j + 1]);
        let (m0, m1) = (self.second[j], self.second[j + 1]);
        [
            y0,
            (y1 - y0) / h - h * (2.0 * m0 + m1) / 6.0,
            0.5 * m0,
            (m1 - m0) / (6.0 * h),
        ]
    }

    /// Value at `x`; `None` outside the knot range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let u = (x - self.grid.start) / self.grid.step;
        let last = (self.grid.len - 1) as f64;
        if !(u >= -1e-12 && u <= last + 1e-12) {
            return None;
        }
        let j = (u.floor().max(0.0) as usize).min(self.grid.len - 2);
        let t = x - self.grid.point(j);
        let c = self.interval_coefficients(j);
        Some(c[0] + t * (c[1] + t * (c[2] + t * c[3])))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials_exactly() {
        let (x, w) = gauss_legendre(15);
        let wsum: f64 = w.iter().sum();
        assert!((wsum - 2.0).abs() < 1e-14);
        // degree 28 monomial: ∫ x^28 = 2/29
        let v: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(28)).sum();
        assert!((v - 2.0 / 29.0).abs() < 1e-14);
    }

    #[test]
    fn adaptive_quadrature_handles_peaked_integrands() {
        let q = Quadrature::with_rel_tol(1e-12);
        let v = q
            .integrate(|x| (-(x * x) / (2.0 * 1e-4)).exp(), -50.0, 50.0)
            .unwrap();
        let exact = (2.0 * std::f64::consts::PI * 1e-4).sqrt();
        assert!((v - exact).abs() < 1e-12 * exact);
    }

    #[test]
    fn quadrature_reports_non_convergence() {
        let q = Quadrature {
            max_depth: 2,
            ..Quadrature::with_rel_tol(1e-14)
        };
        assert!(q.integrate(|x| (1.0 / x.abs().max(1e-300)).sqrt(), -1.0, 1.0).is_err());
    }

    #[test]
    fn tridiagonal_matches_dense() {
        let lower = [0.0, 1.0, 2.0, -1.0];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let upper = [1.0, -2.0, 0.5, 0.0];
        let rhs = [1.0, 2.0, 3.0, 4.0];
        let x = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        for i in 0..4 {
            let mut acc = diag[i] * x[i];
            if i > 0 {
                acc += lower[i] * x[i - 1];
            }
            if i < 3 {
                acc += upper[i] * x[i + 1];
            }
            assert!((acc - rhs[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn not_a_knot_reproduces_cubics() {
        let grid = UniformGrid::new(-3.0, 0.7, 9).unwrap();
        let p = |x: f64| 2.0 - x + 0.3 * x * x - 0.25 * x * x * x;
        let y: Vec<f64> = grid.points().into_iter().map(p).collect();
        let s = CubicSpline::new(grid, &y, SplineBoundary::NotAKnot).unwrap();
        for k in 0..50 {
            let x = -3.0 + k as f64 * 5.6 / 49.0;
            assert!((s.eval(x).unwrap() - p(x)).abs() < 1e-11, "x={x}");
        }
    }

    #[test]
    fn natural_spline_reproduces_lines_and_interpolates() {
        let grid = UniformGrid::new(0.0, 1.0, 6).unwrap();
        let y: Vec<f64> = grid.points().iter().map(|x| 3.0 * x - 1.0).collect();
        let s = CubicSpline::new(grid, &y, SplineBoundary::Natural).unwrap();
        assert!((s.eval(2.5).unwrap() - 6.5).abs() < 1e-13);
        let y2 = [1.0, 4.0, 2.0, 0.0, 5.0, 3.0];
        let s2 = CubicSpline::new(grid, &y2, SplineBoundary::Natural).unwrap();
        for (i, v) in y2.iter().enumerate() {
            assert!((s2.eval(i as f64).unwrap() - v).abs() < 1e-13);
        }
        assert!(s2.eval(5.5).is_none());
    }

    #[test]
    fn spline_rejects_short_input() {
        let grid = UniformGrid::new(0.0, 1.0, 3).unwrap();
        assert!(CubicSpline::new(grid, &[1.0, 2.0, 3.0], SplineBoundary::Natural).is_err());
    }

    #[test]
    fn grid_from_points_detects_gaps() {
        assert!(UniformGrid::from_points(&[0.0, 1.0, 2.0, 3.0]).is_ok());
        assert!(UniformGrid::from_points(&[0.0, 1.0, 2.5, 3.0]).is_err());
        assert!(UniformGrid::from_points(&[3.0, 2.0, 1.0]).is_err());
    }
}
