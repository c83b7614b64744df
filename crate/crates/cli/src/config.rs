//! Run configuration: a JSON file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use hom_core::dip_model::{preset, ScanConfig};
use hom_core::estimator::Method;
use hom_core::numeric::SplineBoundary;
use hom_core::spdc_model::{
    angular_width_from_wavelength, ApproxSincGauss, DelayProfile, SinglePhotonAmplitude, SpectralModel,
};
use hom_core::uncertainty::{DEFAULT_REPLICATES, DEFAULT_R_THRESHOLD};
use hom_core::{io, HomError, Result};
use serde::{Deserialize, Serialize};

/// Two-photon model used to generate or describe a dip.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    ApproxSincGauss {
        sigma_fs: f64,
        b: f64,
    },
    /// Identical super-Gaussian filters, width given as a wavelength span.
    CwFiltered {
        filter_width_nm: f64,
        wavelength_nm: f64,
        order: u32,
    },
    Separable {
        signal: SinglePhotonAmplitude,
        idler: SinglePhotonAmplitude,
    },
    /// JSA text file.
    NumericGrid {
        path: PathBuf,
    },
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig::ApproxSincGauss {
            sigma_fs: preset::SIGMA_FS,
            b: preset::B,
        }
    }
}

impl ModelConfig {
    pub fn spectral_model(&self) -> Result<SpectralModel> {
        Ok(match self {
            ModelConfig::ApproxSincGauss { sigma_fs, b } => {
                SpectralModel::ApproxSincGauss(ApproxSincGauss::new(*sigma_fs, *b)?)
            }
            ModelConfig::CwFiltered {
                filter_width_nm,
                wavelength_nm,
                order,
            } => {
                if !(*wavelength_nm > 0.0) {
                    return Err(HomError::InvalidParameter {
                        field: "wavelength_nm",
                        reason: "must be positive".into(),
                    });
                }
                SpectralModel::CwFiltered {
                    width: angular_width_from_wavelength(*filter_width_nm, *wavelength_nm),
                    order: *order,
                }
            }
            ModelConfig::Separable { signal, idler } => SpectralModel::SeparableProduct {
                signal: *signal,
                idler: *idler,
            },
            ModelConfig::NumericGrid { path } => SpectralModel::NumericGrid(io::read_jsa(path)?),
        })
    }

    pub fn profile(&self, half_range_fs: f64) -> Result<Box<dyn DelayProfile>> {
        self.spectral_model()?.delay_profile(half_range_fs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EstimatorConfig {
    pub method: Method,
    pub boundary: SplineBoundary,
    pub orders: Vec<u32>,
    /// Defaults to half the scan step.
    pub xi_min: Option<f64>,
    /// Defaults to ten times the half-depth width of the dip.
    pub xi_max: Option<f64>,
    pub xi_steps: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            method: Method::Interpolated,
            boundary: SplineBoundary::Natural,
            orders: vec![0, 2, 4],
            xi_min: None,
            xi_max: None,
            xi_steps: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BootstrapConfig {
    pub replicates: usize,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        BootstrapConfig {
            replicates: DEFAULT_REPLICATES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WitnessConfig {
    pub order: u32,
    pub threshold: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        WitnessConfig {
            order: 4,
            threshold: DEFAULT_R_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BiasConfig {
    pub factors: Vec<usize>,
}

impl Default for BiasConfig {
    fn default() -> Self {
        BiasConfig { factors: vec![1, 2, 4] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaHKind {
    /// Poisson variance of the discrete estimator.
    #[default]
    Formula,
    /// Bootstrap spread of the discrete estimator on the scan.
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DelayConfig {
    /// Defaults to `0.05 σ` of the fitted profile.
    pub tau0_star_fs: Option<f64>,
    pub step_fs: f64,
    pub delta_h: DeltaHKind,
}

impl Default for DelayConfig {
    fn default() -> Self {
        DelayConfig {
            tau0_star_fs: None,
            step_fs: 2.0,
            delta_h: DeltaHKind::Formula,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub format_version: String,
    /// Scan CSV; when absent, commands simulate from `model` and `scan`.
    pub input: Option<PathBuf>,
    /// Read `input` as `position_um,counts` with this zero position.
    pub stage_zero_um: Option<f64>,
    pub output_dir: Option<PathBuf>,
    pub model: ModelConfig,
    pub scan: ScanConfig,
    pub visibility: f64,
    pub seed: u64,
    pub noiseless: bool,
    pub estimator: EstimatorConfig,
    pub bootstrap: BootstrapConfig,
    pub witness: WitnessConfig,
    pub bias: BiasConfig,
    pub delay: DelayConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            format_version: io::FORMAT_VERSION.into(),
            input: None,
            stage_zero_um: None,
            output_dir: None,
            model: ModelConfig::default(),
            scan: ScanConfig::paper_preset(),
            visibility: preset::VISIBILITY,
            seed: 0,
            noiseless: false,
            estimator: EstimatorConfig::default(),
            bootstrap: BootstrapConfig::default(),
            witness: WitnessConfig::default(),
            bias: BiasConfig::default(),
            delay: DelayConfig::default(),
        }
    }
}

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "HOM_OUT_DIR";

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let cfg: RunConfig = io::read_json(path)?;
        if cfg.format_version != io::FORMAT_VERSION {
            return Err(HomError::InvalidParameter {
                field: "format_version",
                reason: format!("expected {}, got {}", io::FORMAT_VERSION, cfg.format_version),
            });
        }
        Ok(cfg)
    }

    /// `output_dir`, then `$HOM_OUT_DIR`, then the working directory.
    pub fn resolve_output_dir(&mut self) {
        if self.output_dir.is_none() {
            self.output_dir = Some(std::env::var_os(OUT_DIR_ENV).map_or_else(|| PathBuf::from("."), PathBuf::from));
        }
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.output_dir.clone().unwrap_or_else(|| PathBuf::from(".")).join(name)
    }

    pub fn validate(&self) -> Result<()> {
        self.scan.validate()?;
        hom_core::dip_model::validate_visibility(self.visibility)?;
        if self.estimator.xi_steps < 2 {
            return Err(HomError::InvalidParameter {
                field: "xi_steps",
                reason: "need at least 2".into(),
            });
        }
        if self.estimator.orders.is_empty() {
            return Err(HomError::InvalidParameter {
                field: "orders",
                reason: "is empty".into(),
            });
        }
        if self.bootstrap.replicates < 2 {
            return Err(HomError::InvalidParameter {
                field: "replicates",
                reason: "need at least 2".into(),
            });
        }
        Ok(())
    }
}
