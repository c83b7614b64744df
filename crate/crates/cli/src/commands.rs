use std::path::PathBuf;

use hom_core::delay_metrology::{delay_sensitivity, DelayOptions, DelaySensitivity, DeltaHSource, DEFAULT_OFFSET_FRACTION};
use hom_core::dip_model::{expected_scan, sample_scan, CoincidenceScan, ScanConfig};
use hom_core::estimator::{hg_parameter, linear_grid, sweep, EstimateOptions, EstimateReport, HgEstimator, Method};
use hom_core::profile_fit::{fit_profile, initial_guess, FitOptions, FitResult};
use hom_core::spdc_model::{ApproxSincGauss, DelayProfile};
use hom_core::uncertainty::{
    bias_probe, mean_std, witness_with_replicates, BiasProbeOptions, ReplicateSet, WitnessOptions, WitnessReport,
};
use hom_core::{io, HomError, Result};
use serde::Serialize;

use crate::config::{DeltaHKind, RunConfig};

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    format_version: &'static str,
    tool_version: &'static str,
    command: &'a str,
    config: &'a RunConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<T>,
    outputs: Vec<String>,
}

/// Writes `run_<command>.json` listing the files a command produced.
fn write_manifest<T: Serialize>(cfg: &RunConfig, command: &str, result: Option<T>, outputs: &[PathBuf]) -> Result<PathBuf> {
    let env = Envelope {
        format_version: io::FORMAT_VERSION,
        tool_version: env!("CARGO_PKG_VERSION"),
        command,
        config: cfg,
        result,
        outputs: outputs
            .iter()
            .map(|p| p.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned()))
            .collect(),
    };
    let path = cfg.out_path(&format!("run_{command}.json"));
    io::write_json(&path, &env)?;
    Ok(path)
}

fn model_profile(cfg: &RunConfig) -> Result<Box<dyn DelayProfile>> {
    cfg.model
        .profile(2.0 * (cfg.scan.half_range_fs + cfg.scan.offset_fs.abs()))
}

/// The input scan, or one simulated from the model.
pub fn load_scan(cfg: &RunConfig) -> Result<CoincidenceScan> {
    match (&cfg.input, cfg.stage_zero_um) {
        (Some(path), Some(zero)) => io::read_stage_scan(path, zero),
        (Some(path), None) => io::read_scan(path),
        (None, _) => {
            let profile = model_profile(cfg)?;
            if cfg.noiseless {
                expected_scan(&cfg.scan, profile.as_ref(), cfg.visibility)
            } else {
                sample_scan(&cfg.scan, profile.as_ref(), cfg.visibility, cfg.seed)
            }
        }
    }
}

pub fn xi_grid(cfg: &RunConfig, scan: &CoincidenceScan) -> Result<Vec<f64>> {
    let lo = cfg.estimator.xi_min.unwrap_or(0.5 * scan.step_fs());
    let hi = match cfg.estimator.xi_max {
        Some(x) => x,
        None => 10.0 * initial_guess(scan)?.sigma_fs,
    };
    linear_grid(lo, hi, cfg.estimator.xi_steps)
}

fn estimate_options(cfg: &RunConfig) -> EstimateOptions {
    EstimateOptions {
        method: cfg.estimator.method,
        boundary: cfg.estimator.boundary,
        ..Default::default()
    }
}

fn witness_options(cfg: &RunConfig) -> WitnessOptions {
    WitnessOptions {
        replicates: cfg.bootstrap.replicates,
        seed: cfg.bootstrap.seed,
        threshold: cfg.witness.threshold,
        method: cfg.estimator.method,
        boundary: cfg.estimator.boundary,
    }
}

pub fn simulate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let scan = load_scan(cfg)?;
    let path = cfg.out_path("scan.csv");
    io::write_scan(&path, &scan)?;
    let mut out = vec![path.clone(), io::sidecar_path(&path)];
    out.push(write_manifest::<()>(cfg, "simulate", None, &out)?);
    Ok(out)
}

#[derive(Serialize)]
struct SweepRow {
    n: u32,
    xi_fs: f64,
    h: f64,
    variance: f64,
    crb: f64,
    reliable: bool,
}

pub fn estimate(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let scan = load_scan(cfg)?;
    let xi = xi_grid(cfg, &scan)?;
    let reports = sweep(&scan, &cfg.estimator.orders, &xi, cfg.visibility, &estimate_options(cfg))?;
    let rows: Vec<SweepRow> = reports
        .iter()
        .map(|r| SweepRow {
            n: r.order,
            xi_fs: r.xi_fs,
            h: r.h,
            variance: r.variance,
            crb: r.crb,
            reliable: r.reliable,
        })
        .collect();
    let csv = cfg.out_path("sweep.csv");
    io::write_csv(&csv, &rows)?;
    let mut out = vec![csv];
    out.push(write_manifest(cfg, "estimate", Some(&reports), &out)?);
    Ok(out)
}

pub fn witness(cfg: &RunConfig) -> Result<(WitnessReport, Vec<PathBuf>)> {
    let scan = load_scan(cfg)?;
    let xi = xi_grid(cfg, &scan)?;
    let set = ReplicateSet::draw(&scan, cfg.bootstrap.replicates, cfg.bootstrap.seed)?;
    let report = witness_with_replicates(&scan, &set, cfg.witness.order, &xi, cfg.visibility, &witness_options(cfg))?;
    let path = cfg.out_path("witness_report.json");
    io::write_json(
        &path,
        &Envelope {
            format_version: io::FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "witness",
            config: cfg,
            result: Some(&report),
            outputs: vec![],
        },
    )?;
    Ok((report, vec![path]))
}

pub fn bias(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let scan = load_scan(cfg)?;
    let xi = xi_grid(cfg, &scan)?;
    let opts = BiasProbeOptions {
        replicates: cfg.bootstrap.replicates,
        seed: cfg.bootstrap.seed,
        method: cfg.estimator.method,
        boundary: cfg.estimator.boundary,
        ..Default::default()
    };
    let mut rows = Vec::new();
    for &order in &cfg.estimator.orders {
        rows.extend(bias_probe(&scan, order, &xi, &cfg.bias.factors, &opts)?);
    }
    let csv = cfg.out_path("bias_probe.csv");
    io::write_csv(&csv, &rows)?;
    let mut out = vec![csv];
    out.push(write_manifest::<()>(cfg, "bias", None, &out)?);
    Ok(out)
}

pub fn fit(cfg: &RunConfig) -> Result<(FitResult, Vec<PathBuf>)> {
    let scan = load_scan(cfg)?;
    let result = fit_profile(&scan, &FitOptions::default())?;
    let path = cfg.out_path("fit.json");
    io::write_json(
        &path,
        &Envelope {
            format_version: io::FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION"),
            command: "fit",
            config: cfg,
            result: Some(&result),
            outputs: vec![],
        },
    )?;
    Ok((result, vec![path]))
}

/// `Δτ₀(ξ)` for every configured order. With an input scan the profile is
/// the fitted approximate shape; otherwise it is the model.
pub fn delay_curves(cfg: &RunConfig, scan: &CoincidenceScan, xi: &[f64]) -> Result<Vec<DelaySensitivity>> {
    let fitted = fit_profile(scan, &FitOptions::default())?;
    let p = fitted.params;
    let half_range = scan.delays().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    let (profile, layout, v): (Box<dyn DelayProfile>, ScanConfig, f64) = if cfg.input.is_some() {
        let layout = ScanConfig::new(scan.step_fs(), half_range, scan.c0(), cfg.scan.integration_s, 0.0)?;
        (Box::new(ApproxSincGauss::new(p.sigma_fs, p.b)?), layout, p.visibility.clamp(1e-6, 1.0))
    } else {
        (model_profile(cfg)?, cfg.scan.clone(), cfg.visibility)
    };
    let opts = DelayOptions {
        tau0_star_fs: cfg.delay.tau0_star_fs.unwrap_or(DEFAULT_OFFSET_FRACTION * p.sigma_fs),
        step_fs: cfg.delay.step_fs,
        half_range_fs: half_range,
    };
    let set = match cfg.delay.delta_h {
        DeltaHKind::Bootstrap => Some(ReplicateSet::draw(scan, cfg.bootstrap.replicates, cfg.bootstrap.seed)?),
        DeltaHKind::Formula => None,
    };
    cfg.estimator
        .orders
        .iter()
        .map(|&order| {
            let source = match &set {
                None => DeltaHSource::Formula {
                    scan: layout.clone(),
                    visibility: v,
                },
                Some(set) => DeltaHSource::Given(
                    xi.iter()
                        .map(|&x| {
                            let est = HgEstimator::new(scan, order, x, Method::Discrete, cfg.estimator.boundary)?;
                            Ok(mean_std(&set.apply(est.estimator())?).1 / v)
                        })
                        .collect::<Result<_>>()?,
                ),
            };
            delay_sensitivity(profile.as_ref(), order, xi, &source, &opts)
        })
        .collect()
}

#[derive(Serialize)]
struct DelayRow {
    order: u32,
    xi_fs: f64,
    dtau0_fs: Option<f64>,
    defined: bool,
}

pub fn delay(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let scan = load_scan(cfg)?;
    let xi = xi_grid(cfg, &scan)?;
    let curves = delay_curves(cfg, &scan, &xi)?;
    let rows: Vec<DelayRow> = curves
        .iter()
        .flat_map(|c| {
            c.points.iter().map(move |p| DelayRow {
                order: c.order,
                xi_fs: p.xi_fs,
                dtau0_fs: p.dtau0_fs,
                defined: p.defined(),
            })
        })
        .collect();
    let csv = cfg.out_path("delay_sensitivity.csv");
    io::write_csv(&csv, &rows)?;
    let mut out = vec![csv];
    out.push(write_manifest(cfg, "delay", Some(&curves), &out)?);
    Ok(out)
}

#[derive(Serialize)]
struct Fig1Row {
    delay_fs: f64,
    c_over_c0: f64,
    c_err: f64,
    fit: f64,
}

#[derive(Serialize)]
struct Fig2Row {
    xi_fs: f64,
    h: f64,
    h_lo: f64,
    h_hi: f64,
}

#[derive(Serialize)]
struct Fig3Row {
    order: u32,
    xi_fs: f64,
    delta_h: f64,
    delta_h_crb: f64,
    reliable: bool,
}

#[derive(Serialize)]
struct Fig4Row {
    xi_fs: f64,
    #[serde(rename = "R4")]
    r4: f64,
}

#[derive(Serialize)]
struct Fig5Row {
    order: u32,
    xi_fs: f64,
    dtau0_fs: f64,
}

/// Plot-ready tables for the dip, the HG sweeps with bootstrap bands, the
/// spread against the bound, the order-4 significance and the delay
/// sensitivity.
pub fn export_plot(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let scan = load_scan(cfg)?;
    let xi = xi_grid(cfg, &scan)?;
    let mut out = Vec::new();

    let fitted = fit_profile(&scan, &FitOptions::default())?;
    let c0 = scan.c0();
    let fig1: Vec<Fig1Row> = scan
        .delays()
        .iter()
        .zip(scan.counts())
        .map(|(&t, &c)| Fig1Row {
            delay_fs: t,
            c_over_c0: c / c0,
            c_err: c.sqrt() / c0,
            fit: fitted.params.model(t) / c0,
        })
        .collect();
    out.push(cfg.out_path("fig1.csv"));
    io::write_csv(out.last().unwrap(), &fig1)?;

    let set = ReplicateSet::draw(&scan, cfg.bootstrap.replicates, cfg.bootstrap.seed)?;
    let wopts = witness_options(cfg);
    let mut fig3 = Vec::new();
    let mut order4: Option<WitnessReport> = None;
    for &order in &cfg.estimator.orders {
        let report = witness_with_replicates(&scan, &set, order, &xi, cfg.visibility, &wopts)?;
        let fig2: Vec<Fig2Row> = report
            .points
            .iter()
            .map(|p| Fig2Row {
                xi_fs: p.xi_fs,
                h: p.h,
                h_lo: p.h - p.delta_h,
                h_hi: p.h + p.delta_h,
            })
            .collect();
        out.push(cfg.out_path(&format!("fig2_h{order}.csv")));
        io::write_csv(out.last().unwrap(), &fig2)?;
        let opts = estimate_options(cfg);
        for p in &report.points {
            let est: EstimateReport = hg_parameter(&scan, order, p.xi_fs, cfg.visibility, &opts)?;
            fig3.push(Fig3Row {
                order,
                xi_fs: p.xi_fs,
                delta_h: p.delta_h,
                delta_h_crb: est.crb.sqrt(),
                reliable: p.reliable,
            });
        }
        if order == 4 {
            order4 = Some(report);
        }
    }
    out.push(cfg.out_path("fig3.csv"));
    io::write_csv(out.last().unwrap(), &fig3)?;

    let order4 = match order4 {
        Some(r) => r,
        None => witness_with_replicates(&scan, &set, 4, &xi, cfg.visibility, &wopts)?,
    };
    let fig4: Vec<Fig4Row> = order4
        .points
        .iter()
        .map(|p| Fig4Row { xi_fs: p.xi_fs, r4: p.r })
        .collect();
    out.push(cfg.out_path("fig4.csv"));
    io::write_csv(out.last().unwrap(), &fig4)?;

    let fig5: Vec<Fig5Row> = delay_curves(cfg, &scan, &xi)?
        .iter()
        .flat_map(|c| {
            c.points.iter().filter_map(move |p| {
                p.dtau0_fs.map(|d| Fig5Row {
                    order: c.order,
                    xi_fs: p.xi_fs,
                    dtau0_fs: d,
                })
            })
        })
        .collect();
    out.push(cfg.out_path("fig5.csv"));
    io::write_csv(out.last().unwrap(), &fig5)?;

    out.push(write_manifest::<()>(cfg, "export-plot", None, &out)?);
    Ok(out)
}

/// Exit status for an error: 2 for bad input, 3 for numerical failure, 4
/// for I/O.
pub fn exit_code(e: &HomError) -> i32 {
    match e {
        HomError::Numeric(_) => 3,
        HomError::Replicate { source, .. } => exit_code(source),
        HomError::Io { .. } => 4,
        HomError::InvalidParameter { .. }
        | HomError::Mismatch(_)
        | HomError::Unsupported(_)
        | HomError::Parse { .. }
        | HomError::Serde(_) => 2,
    }
}
