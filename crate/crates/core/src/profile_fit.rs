//! Weighted Levenberg-Marquardt fit of the approximate dip
//! `C₀(1 − v exp(−u²/2σ²) sinc(πBu/σ))`, `u = τ − τ₀`.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dip_model::CoincidenceScan;
use crate::error::{HomError, Result};
use crate::spdc_model::sinc;

pub const MAX_ITERATIONS: usize = 500;
pub const STEP_TOLERANCE: f64 = 1e-10;
pub const DEFAULT_B: f64 = 0.5;
const N_PARAMS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub c0: f64,
    pub visibility: f64,
    pub sigma_fs: f64,
    pub b: f64,
    pub tau0_fs: f64,
}

impl FitParams {
    /// Internal coordinates `(C₀, v, σ, B², τ₀)`.
    fn to_array(self) -> [f64; N_PARAMS] {
        [self.c0, self.visibility, self.sigma_fs, self.b * self.b, self.tau0_fs]
    }

    fn from_array(p: [f64; N_PARAMS]) -> Self {
        FitParams {
            c0: p[0],
            visibility: p[1],
            sigma_fs: p[2],
            b: p[3].max(0.0).sqrt(),
            tau0_fs: p[4],
        }
    }

    /// Expected counts at delay `tau`.
    pub fn model(&self, tau: f64) -> f64 {
        let u = tau - self.tau0_fs;
        let g = (-u * u / (2.0 * self.sigma_fs * self.sigma_fs)).exp()
            * sinc(std::f64::consts::PI * self.b * u / self.sigma_fs);
        self.c0 * (1.0 - self.visibility * g)
    }
}

/// Model and gradient in internal coordinates. The dip depends on `B` only
/// through `sinc²`-even terms, so it is written as `S(z)` with
/// `z = B² (πu/σ)²`, which stays smooth through `B = 0`.
fn model_grad(p: &[f64; N_PARAMS], tau: f64) -> (f64, [f64; N_PARAMS]) {
    let [c0, v, s, q, tau0] = *p;
    let u = tau - tau0;
    let a = (std::f64::consts::PI / s).powi(2);
    let z = q * a * u * u;
    let gauss = (-u * u / (2.0 * s * s)).exp();
    let (sz, dsz) = sinc_sqrt(z);
    let g = gauss * sz;
    let dg_du = gauss * (-u / (s * s) * sz + dsz * 2.0 * q * a * u);
    let dg_ds = gauss * (u * u / (s * s * s) * sz - dsz * 2.0 * z / s);
    let dg_dq = gauss * dsz * a * u * u;
    let m = c0 * (1.0 - v * g);
    (m, [1.0 - v * g, -c0 * g, -c0 * v * dg_ds, -c0 * v * dg_dq, c0 * v * dg_du])
}

fn model_value(p: &[f64; N_PARAMS], tau: f64) -> f64 {
    let [c0, v, s, q, tau0] = *p;
    let u = tau - tau0;
    let z = q * (std::f64::consts::PI * u / s).powi(2);
    c0 * (1.0 - v * (-u * u / (2.0 * s * s)).exp() * sinc_sqrt(z).0)
}

/// `S(z) = sin√z/√z` (`sinh√−z/√−z` for `z < 0`) and `S′(z)`.
fn sinc_sqrt(z: f64) -> (f64, f64) {
    if z.abs() < 1e-2 {
        // Σ (−z)^k/(2k+1)!
        let mut term = 1.0;
        let mut s = 1.0;
        let mut ds = 0.0;
        for k in 1..7 {
            let kf = k as f64;
            term *= -1.0 / ((2.0 * kf) * (2.0 * kf + 1.0));
            s += term * z.powi(k);
            ds += kf * term * z.powi(k - 1);
        }
        (s, ds)
    } else if z > 0.0 {
        let r = z.sqrt();
        let (sn, cs) = r.sin_cos();
        (sn / r, (r * cs - sn) / (2.0 * r * r * r))
    } else {
        let r = (-z).sqrt();
        let (sh, ch) = (r.sinh(), r.cosh());
        (sh / r, -(r * ch - sh) / (2.0 * r * r * r))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// `1/max(Č, 1)`.
    #[default]
    Poisson,
    Unweighted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    /// The fitted visibility is within two standard errors of zero.
    NoDip,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub weighting: Weighting,
    pub initial: Option<FitParams>,
    /// Extra starting values of `B`; each start reuses the other initial
    /// parameters.
    pub extra_b_starts: Vec<f64>,
    /// Holds `B` at this value.
    pub fixed_b: Option<f64>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            weighting: Weighting::Poisson,
            initial: None,
            extra_b_starts: vec![1.0, 1.5],
            fixed_b: None,
            max_iterations: MAX_ITERATIONS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: FitParams,
    /// Standard errors; infinite where the curvature matrix is singular.
    pub std_errors: FitParams,
    pub rss: f64,
    pub dof: usize,
    pub iterations: usize,
    pub final_step: f64,
    pub status: FitStatus,
    pub weighting: Weighting,
    pub start_index: usize,
}

impl FitResult {
    pub fn residuals(&self, scan: &CoincidenceScan) -> Vec<f64> {
        scan.delays()
            .iter()
            .zip(scan.counts())
            .map(|(t, c)| c - self.params.model(*t))
            .collect()
    }
}

/// Starting point from tail level, dip depth, minimum position and
/// half-depth width.
pub fn initial_guess(scan: &CoincidenceScan) -> Result<FitParams> {
    let (c0, _) = scan.tail_mean();
    let counts = scan.counts();
    let delays = scan.delays();
    let (imin, &cmin) = counts
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .ok_or_else(|| HomError::invalid("scan", "is empty"))?;
    if !(c0 > 0.0) {
        return Err(HomError::invalid("scan", "tail level is zero"));
    }
    let v = (1.0 - cmin / c0).clamp(0.05, 1.0);
    let half = c0 * (1.0 - 0.5 * v);
    let mut lo = imin;
    while lo > 0 && counts[lo] < half {
        lo -= 1;
    }
    let mut hi = imin;
    while hi + 1 < counts.len() && counts[hi] < half {
        hi += 1;
    }
    let half_width = 0.5 * (delays[hi] - delays[lo]).max(scan.step_fs());
    Ok(FitParams {
        c0,
        visibility: v,
        sigma_fs: half_width / (2.0 * std::f64::consts::LN_2).sqrt(),
        b: DEFAULT_B,
        tau0_fs: delays[imin],
    })
}

/// Fits the approximate profile, trying every start and keeping the lowest
/// residual (ties go to the earliest start).
pub fn fit_profile(scan: &CoincidenceScan, opts: &FitOptions) -> Result<FitResult> {
    let n_free = if opts.fixed_b.is_some() { N_PARAMS - 1 } else { N_PARAMS };
    if scan.len() < 10 || scan.len() <= n_free {
        return Err(HomError::invalid(
            "scan",
            format!("need at least 10 points to fit, got {}", scan.len()),
        ));
    }
    let base = match opts.initial {
        Some(p) => p,
        None => initial_guess(scan)?,
    };
    let mut starts = vec![base];
    if opts.fixed_b.is_none() {
        starts.extend(opts.extra_b_starts.iter().map(|&b| FitParams { b, ..base }));
    }
    if let Some(b) = opts.fixed_b {
        starts[0].b = b;
    }
    let results: Vec<Result<FitResult>> = starts
        .par_iter()
        .enumerate()
        .map(|(i, s)| levenberg_marquardt(scan, *s, opts, i))
        .collect();
    let mut best: Option<FitResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(fit) => {
                if best.as_ref().is_none_or(|b| fit.rss < b.rss) {
                    best = Some(fit);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    best.ok_or_else(|| first_err.expect("at least one start"))
}

fn weights(scan: &CoincidenceScan, w: Weighting) -> Vec<f64> {
    match w {
        Weighting::Poisson => scan.counts().iter().map(|c| 1.0 / c.max(1.0)).collect(),
        Weighting::Unweighted => vec![1.0; scan.len()],
    }
}

fn valid(p: &[f64; N_PARAMS]) -> bool {
    p[0] > 0.0 && p[1] <= 1.0 && p[2] > 0.0 && p.iter().all(|x| x.is_finite())
}

fn levenberg_marquardt(scan: &CoincidenceScan, start: FitParams, opts: &FitOptions, start_index: usize) -> Result<FitResult> {
    let delays = scan.delays();
    let y = scan.counts();
    let w = weights(scan, opts.weighting);
    let free: Vec<usize> = (0..N_PARAMS).filter(|&k| !(k == 3 && opts.fixed_b.is_some())).collect();
    let nf = free.len();

    let evaluate = |p: &[f64; N_PARAMS]| -> (f64, DMatrix<f64>, DVector<f64>) {
        let mut jtj = DMatrix::<f64>::zeros(nf, nf);
        let mut jtr = DVector::<f64>::zeros(nf);
        let mut rss = 0.0;
        for i in 0..y.len() {
            let (m, g) = model_grad(p, delays[i]);
            let r = y[i] - m;
            rss += w[i] * r * r;
            for (a, &ka) in free.iter().enumerate() {
                jtr[a] += w[i] * g[ka] * r;
                for (b, &kb) in free.iter().enumerate().skip(a) {
                    jtj[(a, b)] += w[i] * g[ka] * g[kb];
                }
            }
        }
        for a in 0..nf {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        (rss, jtj, jtr)
    };
    let rss_only = |p: &[f64; N_PARAMS]| -> f64 {
        (0..y.len()).map(|i| w[i] * (y[i] - model_value(p, delays[i])).powi(2)).sum()
    };

    let mut p = start.to_array();
    if !valid(&p) {
        return Err(HomError::invalid("initial", format!("invalid starting point {start:?}")));
    }
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut final_step = f64::INFINITY;
    let (mut rss, mut jtj, mut jtr) = evaluate(&p);
    // Damping uses the running maximum of the curvature diagonal so that a
    // direction whose curvature collapses (B → 0) stays damped.
    let mut damping: Vec<f64> = (0..nf).map(|k| jtj[(k, k)]).collect();
    let mut converged = false;
    while iterations < opts.max_iterations {
        iterations += 1;
        let mut accepted = false;
        while lambda < 1e20 {
            let mut a = jtj.clone();
            for k in 0..nf {
                a[(k, k)] += lambda * damping[k].max(1e-300);
            }
            let Some(delta) = a.cholesky().map(|c| c.solve(&jtr)) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = p;
            for (a, &k) in free.iter().enumerate() {
                trial[k] += delta[a];
            }
            if !valid(&trial) {
                lambda *= 10.0;
                continue;
            }
            let trial_rss = rss_only(&trial);
            if trial_rss <= rss {
                final_step = free
                    .iter()
                    .enumerate()
                    .map(|(a, &k)| delta[a].abs() / step_scale(&p, k))
                    .fold(0.0, f64::max);
                p = trial;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No step lowers the residual: a stationary point at working precision.
            converged = true;
            break;
        }
        (rss, jtj, jtr) = evaluate(&p);
        for (k, d) in damping.iter_mut().enumerate() {
            *d = d.max(jtj[(k, k)]);
        }
        if final_step < STEP_TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(HomError::Numeric(format!(
            "fit did not converge in {} iterations (last relative step {final_step:.3e})",
            opts.max_iterations
        )));
    }
    let dof = y.len() - nf;
    let scale = match opts.weighting {
        Weighting::Poisson => 1.0,
        Weighting::Unweighted => rss / dof as f64,
    };
    let mut se = [0.0; N_PARAMS];
    match jtj.clone().try_inverse() {
        Some(cov) => {
            for (a, &k) in free.iter().enumerate() {
                let var = cov[(a, a)] * scale;
                se[k] = if var >= 0.0 { var.sqrt() } else { f64::INFINITY };
            }
        }
        None => {
            for &k in &free {
                se[k] = f64::INFINITY;
            }
        }
    }
    // Half-width of the image of q ± SE under B = √max(q, 0), which reduces
    // to the delta-method SE/(2B) when B is well determined.
    let (q, se_q) = (p[3], se[3]);
    se[3] = if !se_q.is_finite() {
        f64::INFINITY
    } else if q > se_q {
        0.5 * ((q + se_q).sqrt() - (q - se_q).sqrt())
    } else {
        0.5 * (se_q + q.max(0.0)).sqrt()
    };
    let status = if p[1] / se[1] < 2.0 || p[1] <= 0.0 {
        FitStatus::NoDip
    } else {
        FitStatus::Converged
    };
    Ok(FitResult {
        params: FitParams::from_array(p),
        std_errors: FitParams::from_array(se),
        rss,
        dof,
        iterations,
        final_step,
        status,
        weighting: opts.weighting,
        start_index,
    })
}

/// Scale for the relative step of parameter `k`.
fn step_scale(p: &[f64; N_PARAMS], k: usize) -> f64 {
    match k {
        3 => p[3].abs().max(1.0),
        4 => p[2],
        _ => p[k].abs(),
    }
}

/// Fitted dip centre and its standard error.
pub fn dip_center(scan: &CoincidenceScan, opts: &FitOptions) -> Result<(f64, f64, FitResult)> {
    let fit = fit_profile(scan, opts)?;
    if fit.status == FitStatus::NoDip {
        return Err(HomError::Numeric("scan shows no significant dip; the centre is undefined".into()));
    }
    Ok((fit.params.tau0_fs, fit.std_errors.tau0_fs, fit))
}
