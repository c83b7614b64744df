//! Parametric bootstrap around observed counts, witness significance over a
//! ξ sweep and the CRB comparison used to expose estimator bias.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dip_model::CoincidenceScan;
use crate::error::{HomError, Result};
use crate::estimator::{crb_continuous, is_reliable, CrbReference, HgEstimator, LinearEstimator, Method};
use crate::numeric::{CubicSpline, SplineBoundary};
use crate::rng::{self, Domain};

pub const DEFAULT_REPLICATES: usize = 1000;
pub const DEFAULT_R_THRESHOLD: f64 = 3.0;
pub const REPORT_VERSION: &str = "v1";

/// `δτ/√2`.
pub fn reliability_threshold(step_fs: f64) -> f64 {
    step_fs / std::f64::consts::SQRT_2
}

/// Poisson replicates of a scan, each drawn around the observed counts.
/// Replicate `r` uses stream `(seed, r)` of the bootstrap domain.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateSet {
    counts: Vec<Vec<f64>>,
}

impl ReplicateSet {
    pub fn draw(scan: &CoincidenceScan, replicates: usize, seed: u64) -> Result<Self> {
        check_replicates(replicates)?;
        let means = scan.counts();
        let counts = (0..replicates)
            .into_par_iter()
            .map(|r| {
                let mut g = rng::stream(seed, Domain::Bootstrap, r as u64);
                means.iter().map(|&m| rng::poisson(&mut g, m) as f64).collect()
            })
            .collect();
        Ok(ReplicateSet { counts })
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn replicate(&self, r: usize) -> &[f64] {
        &self.counts[r]
    }

    /// `θ̌′` of every replicate.
    pub fn apply(&self, estimator: &LinearEstimator) -> Result<Vec<f64>> {
        self.counts
            .iter()
            .enumerate()
            .map(|(r, c)| {
                estimator.apply(c).map_err(|e| HomError::Replicate {
                    index: r,
                    source: Box::new(e),
                })
            })
            .collect()
    }
}

fn check_replicates(m: usize) -> Result<()> {
    if m < 2 {
        return Err(HomError::invalid("replicates", format!("need at least 2, got {m}")));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    pub replicates: usize,
    pub estimates: Vec<f64>,
    pub mean: f64,
    pub std_dev: f64,
    pub crb: f64,
    pub bias_flag: bool,
}

impl BootstrapResult {
    pub fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }
}

/// Sample mean and standard deviation (denominator `M − 1`).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ss: f64 = values.iter().map(|x| (x - mean).powi(2)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Variance below the bound beyond the bootstrap tolerance `3/√M`.
pub fn violates_crb(variance: f64, crb: f64, replicates: usize) -> bool {
    variance < crb * (1.0 - 3.0 / (replicates as f64).sqrt())
}

/// Bootstrap of `θ̌′` with the given estimator, compared with `crb`.
pub fn bootstrap(scan: &CoincidenceScan, estimator: &LinearEstimator, replicates: usize, seed: u64, crb: f64) -> Result<BootstrapResult> {
    let set = ReplicateSet::draw(scan, replicates, seed)?;
    summarize(set.apply(estimator)?, crb)
}

pub fn summarize(estimates: Vec<f64>, crb: f64) -> Result<BootstrapResult> {
    check_replicates(estimates.len())?;
    let (mean, std_dev) = mean_std(&estimates);
    Ok(BootstrapResult {
        replicates: estimates.len(),
        mean,
        std_dev,
        crb,
        bias_flag: violates_crb(std_dev * std_dev, crb, estimates.len()),
        estimates,
    })
}

/// `C(τ)` the bound is evaluated on, resolved against a scan.
fn reference_profile<'a>(scan: &CoincidenceScan, reference: &'a CrbReference, boundary: SplineBoundary) -> Result<Box<dyn Fn(f64) -> f64 + Sync + 'a>> {
    Ok(match reference {
        CrbReference::Profile(p) => Box::new(move |t| p(t)),
        CrbReference::ObservedInterpolant => {
            let spline = CubicSpline::new(*scan.grid(), scan.counts(), boundary)?;
            Box::new(move |t| spline.eval(t).unwrap_or(0.0).max(0.0))
        }
    })
}

#[derive(Debug, Clone)]
pub struct WitnessOptions {
    pub replicates: usize,
    pub seed: u64,
    pub threshold: f64,
    pub method: Method,
    pub boundary: SplineBoundary,
}

impl Default for WitnessOptions {
    fn default() -> Self {
        WitnessOptions {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            threshold: DEFAULT_R_THRESHOLD,
            method: Method::Interpolated,
            boundary: SplineBoundary::Natural,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessPoint {
    pub xi_fs: f64,
    pub h: f64,
    /// Bootstrap spread of `h`.
    pub delta_h: f64,
    /// Spread of `h` from the Poisson variance formula at the observed counts.
    pub delta_h_formula: f64,
    pub r: f64,
    pub reliable: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Witnessed,
    NotWitnessed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub format_version: String,
    pub order: u32,
    pub visibility: f64,
    pub method: Method,
    pub replicates: usize,
    pub seed: u64,
    pub threshold: f64,
    pub reliability_threshold_fs: f64,
    pub points: Vec<WitnessPoint>,
    pub verdict: Verdict,
    /// Widest contiguous run of witnessing ξ values.
    pub witness_interval_fs: Option<[f64; 2]>,
}

impl WitnessReport {
    pub fn witnessing(&self) -> impl Iterator<Item = &WitnessPoint> {
        let t = self.threshold;
        self.points.iter().filter(move |p| p.reliable && p.r < -t)
    }
}

/// Sweeps `h_order` over `xi_grid` with bootstrap spreads and decides
/// whether any reliable point is significantly negative.
pub fn witness_scan(scan: &CoincidenceScan, order: u32, xi_grid: &[f64], v: f64, opts: &WitnessOptions) -> Result<WitnessReport> {
    if order % 2 == 1 {
        return Err(HomError::invalid("order", format!("witness needs an even order, got {order}")));
    }
    check_xi_grid(xi_grid)?;
    let set = ReplicateSet::draw(scan, opts.replicates, opts.seed)?;
    witness_with_replicates(scan, &set, order, xi_grid, v, opts)
}

/// As [`witness_scan`] with a prepared replicate set.
pub fn witness_with_replicates(
    scan: &CoincidenceScan,
    set: &ReplicateSet,
    order: u32,
    xi_grid: &[f64],
    v: f64,
    opts: &WitnessOptions,
) -> Result<WitnessReport> {
    let points: Vec<WitnessPoint> = xi_grid
        .par_iter()
        .map(|&xi| {
            let est = HgEstimator::new(scan, order, xi, opts.method, opts.boundary)?;
            let h = est.h(scan.counts(), v)?;
            let reps = set.apply(est.estimator())?;
            let (_, sd) = mean_std(&reps);
            let delta_h = sd / v;
            let delta_h_formula = est.estimator().variance(scan.counts())?.sqrt() / v;
            Ok(WitnessPoint {
                xi_fs: xi,
                h,
                delta_h,
                delta_h_formula,
                r: h / delta_h,
                reliable: is_reliable(xi, scan.step_fs()),
            })
        })
        .collect::<Result<_>>()?;
    let flags: Vec<bool> = points
        .iter()
        .map(|p| p.reliable && p.r < -opts.threshold)
        .collect();
    let interval = widest_run(&flags).map(|(a, b)| [points[a].xi_fs, points[b].xi_fs]);
    Ok(WitnessReport {
        format_version: REPORT_VERSION.into(),
        order,
        visibility: v,
        method: opts.method,
        replicates: set.len(),
        seed: opts.seed,
        threshold: opts.threshold,
        reliability_threshold_fs: reliability_threshold(scan.step_fs()),
        points,
        verdict: if interval.is_some() {
            Verdict::Witnessed
        } else {
            Verdict::NotWitnessed
        },
        witness_interval_fs: interval,
    })
}

fn check_xi_grid(xi: &[f64]) -> Result<()> {
    if xi.is_empty() {
        return Err(HomError::invalid("xi_grid", "is empty"));
    }
    if xi.windows(2).any(|w| !(w[1] > w[0])) || !(xi[0] > 0.0) {
        return Err(HomError::invalid("xi_grid", "must be positive and strictly increasing"));
    }
    Ok(())
}

/// First widest run of `true` as inclusive indices.
fn widest_run(flags: &[bool]) -> Option<(usize, usize)> {
    let mut best: Option<(usize, usize)> = None;
    let mut start = None;
    for (i, &f) in flags.iter().chain(std::iter::once(&false)).enumerate() {
        match (f, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                if best.is_none_or(|(a, b)| i - 1 - s > b - a) {
                    best = Some((s, i - 1));
                }
                start = None;
            }
            _ => {}
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct BiasProbeOptions {
    pub replicates: usize,
    pub seed: u64,
    pub method: Method,
    pub boundary: SplineBoundary,
    pub reference: CrbReference,
}

impl Default for BiasProbeOptions {
    fn default() -> Self {
        BiasProbeOptions {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
            method: Method::Interpolated,
            boundary: SplineBoundary::Natural,
            reference: CrbReference::ObservedInterpolant,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasRow {
    pub factor: usize,
    pub step_fs: f64,
    pub order: u32,
    pub xi_fs: f64,
    pub method: Method,
    pub reliable: bool,
    /// Bootstrap variance of `θ̌′`.
    pub bootstrap_variance: f64,
    /// Bound on the variance of `θ̌′` for the decimated scan.
    pub crb: f64,
    pub violation: bool,
    pub reference: String,
}

/// Bootstraps the estimator on scans decimated by each factor and compares
/// the spread with the bound on the decimated grid.
pub fn bias_probe(scan: &CoincidenceScan, order: u32, xi_grid: &[f64], factors: &[usize], opts: &BiasProbeOptions) -> Result<Vec<BiasRow>> {
    check_xi_grid(xi_grid)?;
    check_replicates(opts.replicates)?;
    let mut rows = Vec::with_capacity(factors.len() * xi_grid.len());
    for &k in factors {
        let dec = scan.decimate(k)?;
        let set = ReplicateSet::draw(&dec, opts.replicates, opts.seed)?;
        let reference = reference_profile(&dec, &opts.reference, opts.boundary)?;
        let (lo, hi) = (dec.grid().start, dec.grid().end());
        let part: Vec<BiasRow> = xi_grid
            .par_iter()
            .map(|&xi| {
                let est = HgEstimator::new(&dec, order, xi, opts.method, opts.boundary)?;
                let reps = set.apply(est.estimator())?;
                let (_, sd) = mean_std(&reps);
                let crb = crb_continuous(reference.as_ref(), est.spec(), lo, hi)?;
                Ok(BiasRow {
                    factor: k,
                    step_fs: dec.step_fs(),
                    order,
                    xi_fs: xi,
                    method: opts.method,
                    reliable: is_reliable(xi, dec.step_fs()),
                    bootstrap_variance: sd * sd,
                    crb,
                    violation: violates_crb(sd * sd, crb, opts.replicates),
                    reference: opts.reference.label().into(),
                })
            })
            .collect::<Result<_>>()?;
        rows.extend(part);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dip_model::{preset, sample_scan, C0Source, Provenance, ScanConfig};
    use crate::estimator::{Kernel, ParameterSpec};
    use crate::spdc_model::ApproxSincGauss;

    fn preset_scan(seed: u64) -> CoincidenceScan {
        let p = ApproxSincGauss::new(preset::SIGMA_FS, preset::B).unwrap();
        sample_scan(&ScanConfig::paper_preset(), &p, preset::VISIBILITY, seed).unwrap()
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(reliability_threshold(0.0), 0.0);
        assert!((reliability_threshold(2f64.sqrt()) - 1.0).abs() < 1e-15);
        assert!((reliability_threshold(13.4) - 9.475_230_867_899_737).abs() < 1e-12);
    }

    #[test]
    fn too_few_replicates() {
        let scan = preset_scan(1);
        assert!(ReplicateSet::draw(&scan, 1, 0).is_err());
    }

    #[test]
    fn zero_scan_has_zero_spread() {
        let cfg = ScanConfig::paper_preset();
        let scan = CoincidenceScan::on_grid(cfg.grid(), vec![0.0; 161], Some((preset::C0, C0Source::Configured)), Provenance::Noiseless).unwrap();
        let spec = ParameterSpec::hermite_gauss(0, 40.0, preset::STEP_FS, preset::C0).unwrap();
        let est = LinearEstimator::discrete(scan.grid(), &spec).unwrap();
        let b = bootstrap(&scan, &est, 50, 3, 0.0).unwrap();
        assert_eq!(b.std_dev, 0.0);
        assert!(!b.bias_flag);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let scan = preset_scan(2);
        let spec = ParameterSpec::for_scan(Kernel::HermiteGauss(crate::hg_basis::HgSpec::new(2, 30.0).unwrap()), &scan).unwrap();
        let est = LinearEstimator::interpolated(scan.grid(), &spec, SplineBoundary::Natural).unwrap();
        let a = bootstrap(&scan, &est, 200, 9, 0.0).unwrap();
        let b = bootstrap(&scan, &est, 200, 9, 0.0).unwrap();
        assert_eq!(a, b);
        let c = bootstrap(&scan, &est, 200, 10, 0.0).unwrap();
        assert_ne!(a.estimates, c.estimates);
    }

    #[test]
    fn violation_rule() {
        assert!(!violates_crb(0.0, 0.0, 1000));
        assert!(violates_crb(0.5, 1.0, 1000));
        assert!(!violates_crb(0.95, 1.0, 1000));
    }

    #[test]
    fn widest_run_picks_first_longest() {
        assert_eq!(widest_run(&[false, true, true, false, true, true]), Some((1, 2)));
        assert_eq!(widest_run(&[true, false, true, true, true]), Some((2, 4)));
        assert_eq!(widest_run(&[false, false]), None);
    }

    #[test]
    fn witness_input_validation() {
        let scan = preset_scan(3);
        let o = WitnessOptions { replicates: 10, ..Default::default() };
        assert!(witness_scan(&scan, 3, &[20.0, 30.0], 0.81, &o).is_err());
        assert!(witness_scan(&scan, 4, &[30.0, 20.0], 0.81, &o).is_err());
    }

    #[test]
    fn h0_is_never_witnessed() {
        let scan = preset_scan(4);
        let xi: Vec<f64> = (1..=20).map(|i| 5.0 * i as f64).collect();
        let o = WitnessOptions { replicates: 200, seed: 1, ..Default::default() };
        let rep = witness_scan(&scan, 0, &xi, 0.81, &o).unwrap();
        assert_eq!(rep.verdict, Verdict::NotWitnessed);
        assert!(rep.points.iter().filter(|p| p.reliable).all(|p| p.h > 0.0));
    }
}
