//! Coincidence-dip synthesis: beam-splitter visibility, the expected profile
//! `C(τ) = C₀(1 − v f̃(τ − τ₀))` and Poisson sampling of a delay scan.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{HomError, Result};
use crate::numeric::UniformGrid;
use crate::rng::{self, Domain, RNG_ALGORITHM};
use crate::spdc_model::DelayProfile;

/// Paper-like operating point used by the shipped preset.
pub mod preset {
    /// Delay step in fs.
    pub const STEP_FS: f64 = 13.4;
    /// Baseline coincidences per acquisition window.
    pub const C0: f64 = 4653.0;
    pub const VISIBILITY: f64 = 0.81;
    /// Acquisition window per delay point in s.
    pub const INTEGRATION_S: f64 = 5.0;
    /// Number of steps on each side of zero delay.
    pub const HALF_STEPS: usize = 80;
    /// Approximate-profile width fitted to a CW pump with 7.3 nm fourth-order
    /// super-Gaussian filters at 810 nm.
    pub const SIGMA_FS: f64 = 110.3;
    pub const B: f64 = 1.12;
    /// Filter width in nm and centre wavelength in nm.
    pub const FILTER_WIDTH_NM: f64 = 7.3;
    pub const WAVELENGTH_NM: f64 = 810.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BeamSplitter {
    reflectivity: f64,
}

impl BeamSplitter {
    pub fn new(reflectivity: f64) -> Result<Self> {
        if !(reflectivity > 0.0 && reflectivity < 1.0) {
            return Err(HomError::invalid(
                "reflectivity",
                format!("must lie in (0, 1), got {reflectivity}"),
            ));
        }
        Ok(BeamSplitter { reflectivity })
    }

    pub fn reflectivity(&self) -> f64 {
        self.reflectivity
    }

    pub fn transmissivity(&self) -> f64 {
        1.0 - self.reflectivity
    }
}

/// `v = 2RT / (R² + T²)`.
pub fn visibility(bs: &BeamSplitter) -> f64 {
    let r = bs.reflectivity;
    let t = bs.transmissivity();
    2.0 * r * t / (r * r + t * t)
}

pub fn validate_visibility(v: f64) -> Result<f64> {
    if !(v > 0.0 && v <= 1.0) {
        return Err(HomError::invalid(
            "visibility",
            format!("must lie in (0, 1], got {v}"),
        ));
    }
    Ok(v)
}

/// Delay grid `{−T, …, −δτ, 0, δτ, …, T}` and acquisition settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub step_fs: f64,
    pub half_range_fs: f64,
    pub c0: f64,
    pub integration_s: f64,
    pub offset_fs: f64,
}

impl ScanConfig {
    pub fn new(step_fs: f64, half_range_fs: f64, c0: f64, integration_s: f64, offset_fs: f64) -> Result<Self> {
        let cfg = ScanConfig {
            step_fs,
            half_range_fs,
            c0,
            integration_s,
            offset_fs,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn paper_preset() -> Self {
        ScanConfig {
            step_fs: preset::STEP_FS,
            half_range_fs: preset::STEP_FS * preset::HALF_STEPS as f64,
            c0: preset::C0,
            integration_s: preset::INTEGRATION_S,
            offset_fs: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step_fs > 0.0) || !self.step_fs.is_finite() {
            return Err(HomError::invalid("step_fs", "must be positive"));
        }
        if !(self.half_range_fs > 0.0) || !self.half_range_fs.is_finite() {
            return Err(HomError::invalid("half_range_fs", "must be positive"));
        }
        let k = self.half_range_fs / self.step_fs;
        if (k - k.round()).abs() > 1e-9 * k.max(1.0) || k.round() < 1.0 {
            return Err(HomError::invalid(
                "half_range_fs",
                format!("must be a whole multiple of step_fs ({} / {})", self.half_range_fs, self.step_fs),
            ));
        }
        if !(self.c0 >= 0.0) || !self.c0.is_finite() {
            return Err(HomError::invalid("c0", "must be non-negative"));
        }
        if !(self.integration_s > 0.0) {
            return Err(HomError::invalid("integration_s", "must be positive"));
        }
        if !self.offset_fs.is_finite() {
            return Err(HomError::invalid("offset_fs", "must be finite"));
        }
        Ok(())
    }

    pub fn half_steps(&self) -> usize {
        (self.half_range_fs / self.step_fs).round() as usize
    }

    pub fn grid(&self) -> UniformGrid {
        let k = self.half_steps();
        UniformGrid {
            start: -(k as f64) * self.step_fs,
            step: self.step_fs,
            len: 2 * k + 1,
        }
    }
}

/// `C₀ (1 − v f̃(τ − τ₀))`.
pub fn expected_profile(c0: f64, v: f64, profile: &dyn DelayProfile, offset_fs: f64, tau_fs: f64) -> Result<f64> {
    validate_visibility(v)?;
    Ok(c0 * (1.0 - v * profile.value(tau_fs - offset_fs)))
}

/// Expected counts at every grid point of `config`.
pub fn expected_counts(config: &ScanConfig, profile: &dyn DelayProfile, v: f64) -> Result<Vec<f64>> {
    config.validate()?;
    validate_visibility(v)?;
    Ok(config
        .grid()
        .points()
        .into_iter()
        .map(|t| config.c0 * (1.0 - v * profile.value(t - config.offset_fs)))
        .collect())
}

/// Where a scan's baseline `C₀` came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum C0Source {
    /// Set by the simulation configuration.
    Configured,
    /// Read from a sidecar.
    Recorded,
    /// Mean of the outer scan points.
    TailMean,
    /// Fitted baseline of the approximate profile.
    Fit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Provenance {
    Simulated { seed: u64, rng: String },
    Noiseless,
    Ingested { source: String },
    Derived { operation: String, parent: Box<Provenance> },
}

/// Observed counts on a uniform delay grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CoincidenceScan {
    grid: UniformGrid,
    counts: Vec<f64>,
    c0: f64,
    c0_source: C0Source,
    provenance: Provenance,
}

/// Fraction of the points on each side used for the tail mean.
const TAIL_FRACTION: f64 = 0.1;

impl CoincidenceScan {
    /// Builds a scan; with `c0 = None` the baseline is the tail mean.
    pub fn new(delays: &[f64], counts: Vec<f64>, c0: Option<(f64, C0Source)>, provenance: Provenance) -> Result<Self> {
        let grid = UniformGrid::from_points(delays)?;
        Self::on_grid(grid, counts, c0, provenance)
    }

    pub fn on_grid(grid: UniformGrid, counts: Vec<f64>, c0: Option<(f64, C0Source)>, provenance: Provenance) -> Result<Self> {
        if counts.len() != grid.len {
            return Err(HomError::invalid(
                "counts",
                format!("{} counts for {} delays", counts.len(), grid.len),
            ));
        }
        if let Some(bad) = counts.iter().find(|c| !(**c >= 0.0) || !c.is_finite()) {
            return Err(HomError::invalid("counts", format!("counts must be finite and non-negative, got {bad}")));
        }
        let mut scan = CoincidenceScan {
            grid,
            counts,
            c0: 0.0,
            c0_source: C0Source::TailMean,
            provenance,
        };
        match c0 {
            Some((value, source)) => {
                if !(value > 0.0) || !value.is_finite() {
                    return Err(HomError::invalid("c0", format!("must be positive, got {value}")));
                }
                scan.c0 = value;
                scan.c0_source = source;
            }
            None => {
                let (mean, _) = scan.tail_mean();
                if !(mean > 0.0) {
                    return Err(HomError::invalid("c0", "tail mean of the scan is zero"));
                }
                scan.c0 = mean;
            }
        }
        Ok(scan)
    }

    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn delays(&self) -> Vec<f64> {
        self.grid.points()
    }

    pub fn counts(&self) -> &[f64] {
        &self.counts
    }

    pub fn step_fs(&self) -> f64 {
        self.grid.step
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn c0_source(&self) -> C0Source {
        self.c0_source
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Mean of the outer 10% of points on each side, and how many points
    /// entered it.
    pub fn tail_mean(&self) -> (f64, usize) {
        let n = self.counts.len();
        let k = ((n as f64 * TAIL_FRACTION) as usize).max(1).min(n / 2).max(1);
        let sum: f64 = self.counts[..k].iter().sum::<f64>() + self.counts[n - k..].iter().sum::<f64>();
        (sum / (2 * k) as f64, 2 * k)
    }

    pub fn with_c0(mut self, c0: f64, source: C0Source) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(HomError::invalid("c0", format!("must be positive, got {c0}")));
        }
        self.c0 = c0;
        self.c0_source = source;
        Ok(self)
    }

    /// Same grid and baseline with different counts.
    pub fn with_counts(&self, counts: Vec<f64>) -> Result<Self> {
        if counts.len() != self.counts.len() {
            return Err(HomError::invalid("counts", "length does not match the grid"));
        }
        Ok(CoincidenceScan {
            counts,
            ..self.clone()
        })
    }

    /// Pointwise sum of two scans on the same grid.
    pub fn add(&self, other: &CoincidenceScan) -> Result<Self> {
        if self.grid != other.grid {
            return Err(HomError::Mismatch("scans live on different grids".into()));
        }
        let counts = self.counts.iter().zip(&other.counts).map(|(a, b)| a + b).collect();
        self.with_counts(counts)
    }

    /// Keeps every `factor`-th point, anchored at the point nearest zero
    /// delay, so the step becomes `factor · δτ`.
    pub fn decimate(&self, factor: usize) -> Result<Self> {
        if factor == 0 {
            return Err(HomError::invalid("factor", "must be at least 1"));
        }
        let anchor = ((-self.grid.start / self.grid.step).round().max(0.0) as usize).min(self.grid.len - 1);
        let first = anchor % factor;
        let counts: Vec<f64> = self.counts.iter().skip(first).step_by(factor).copied().collect();
        if counts.len() < 4 {
            return Err(HomError::invalid(
                "factor",
                format!("decimation by {factor} leaves {} points, need at least 4", counts.len()),
            ));
        }
        let grid = UniformGrid {
            start: self.grid.point(first),
            step: self.grid.step * factor as f64,
            len: counts.len(),
        };
        Ok(CoincidenceScan {
            grid,
            counts,
            c0: self.c0,
            c0_source: self.c0_source,
            provenance: Provenance::Derived {
                operation: format!("decimate:{factor}"),
                parent: Box::new(self.provenance.clone()),
            },
        })
    }

    /// Shifts the delay axis so that `tau0_fs` becomes zero.
    pub fn recentered(&self, tau0_fs: f64) -> Self {
        let mut out = self.clone();
        out.grid.start -= tau0_fs;
        out.provenance = Provenance::Derived {
            operation: format!("recenter:{tau0_fs}"),
            parent: Box::new(self.provenance.clone()),
        };
        out
    }
}

/// Draws one scan with independent Poisson counts around
/// [`expected_counts`]. Point `i` uses its own stream `(seed, i)`.
pub fn sample_scan(config: &ScanConfig, profile: &dyn DelayProfile, v: f64, seed: u64) -> Result<CoincidenceScan> {
    let means = expected_counts(config, profile, v)?;
    let counts: Vec<f64> = means
        .par_iter()
        .enumerate()
        .map(|(i, &m)| rng::poisson(&mut rng::stream(seed, Domain::Scan, i as u64), m) as f64)
        .collect();
    let c0 = if config.c0 > 0.0 {
        Some((config.c0, C0Source::Configured))
    } else {
        None
    };
    let provenance = Provenance::Simulated {
        seed,
        rng: RNG_ALGORITHM.to_string(),
    };
    match c0 {
        Some(_) => CoincidenceScan::on_grid(config.grid(), counts, c0, provenance),
        // A zero-rate scan has no baseline to record; keep a unit placeholder.
        None => CoincidenceScan::on_grid(config.grid(), counts, Some((1.0, C0Source::Configured)), provenance),
    }
}

/// The expected counts themselves, as a scan without noise.
pub fn expected_scan(config: &ScanConfig, profile: &dyn DelayProfile, v: f64) -> Result<CoincidenceScan> {
    let means = expected_counts(config, profile, v)?;
    if !(config.c0 > 0.0) {
        return Err(HomError::invalid("c0", "a noiseless scan needs a positive baseline"));
    }
    CoincidenceScan::on_grid(
        config.grid(),
        means,
        Some((config.c0, C0Source::Configured)),
        Provenance::Noiseless,
    )
}
