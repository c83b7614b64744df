//! Acceptance checks, one PASS/FAIL line per criterion.
//!
//! The process exits non-zero only when a check cannot run at all, or when
//! `ACCEPTANCE_STRICT=1` is set and some criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use hom_core::delay_metrology::{delay_sensitivity, richardson_ratio, shifted_parameter, DelayOptions, DeltaHSource};
use hom_core::dip_model::{
    expected_counts, preset, sample_scan, validate_visibility, visibility, BeamSplitter, C0Source, CoincidenceScan,
    Provenance, ScanConfig,
};
use hom_core::estimator::{
    crb_continuous, hg_parameter_from_profile, hg_parameter_from_spectrum, linear_grid, parameter_kernel,
    variance_discrete, LinearEstimator, Method, ParameterSpec,
};
use hom_core::hg_basis::{fourier_phase, hg_function, hg_time_kernel, HgSpec};
use hom_core::numeric::{composite_gauss_legendre, Quadrature, UniformGrid};
use hom_core::profile_fit::{fit_profile, FitOptions, FitParams};
use hom_core::spdc_model::{
    angular_width_from_wavelength, marginal_symmetrised, ApproxSincGauss, DelayProfile, SinglePhotonAmplitude,
    SpectralFunction, SpectralModel,
};
use hom_core::uncertainty::{
    bias_probe, reliability_threshold, witness_scan, BiasProbeOptions, Verdict, WitnessOptions,
};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

type Check = Result<String, String>;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn preset_profile() -> ApproxSincGauss {
    ApproxSincGauss::new(preset::SIGMA_FS, preset::B).unwrap()
}

fn c1_visibility() -> Check {
    let half = visibility(&BeamSplitter::new(0.5).unwrap());
    ensure(half == 1.0, format!("visibility(1/2) = {half}"))?;
    let two_thirds = visibility(&BeamSplitter::new(2.0 / 3.0).unwrap());
    ensure((two_thirds - 0.8).abs() <= 1e-15, format!("visibility(2/3) = {two_thirds}"))?;
    let v = validate_visibility(preset::VISIBILITY).map_err(|e| e.to_string())?;
    sample_scan(&ScanConfig::paper_preset(), &preset_profile(), v, 0).map_err(|e| e.to_string())?;
    Ok(format!("V(1/2)={half}, V(2/3)={two_thirds}, preset v={v} accepted"))
}

fn transform(f: &SpectralFunction) -> impl Fn(f64) -> f64 + Send + Sync + '_ {
    let g = *f.grid();
    move |tau| {
        let mut acc = Complex64::new(0.0, 0.0);
        for (i, v) in f.values().iter().enumerate() {
            let w = if i == 0 || i + 1 == g.len { 0.5 } else { 1.0 };
            acc += v * Complex64::from_polar(w * g.step, g.point(i) * tau);
        }
        acc.re
    }
}

fn c2_fourier() -> Check {
    let w = angular_width_from_wavelength(preset::FILTER_WIDTH_NM, preset::WAVELENGTH_NM);
    let models = [
        (SpectralModel::ApproxSincGauss(preset_profile()), 0.06),
        (SpectralModel::CwFiltered { width: w, order: 4 }, 8.0 * w),
    ];
    let mut worst: f64 = 0.0;
    for (model, half) in &models {
        let grid = UniformGrid::symmetric(*half, 1201).unwrap();
        let f = marginal_symmetrised(model, &grid).map_err(|e| e.to_string())?;
        let profile = transform(&f);
        let reach = 0.9 * std::f64::consts::PI / grid.step;
        for n in [0u32, 2, 4] {
            for xi in [10.0, 40.0, 160.0] {
                let spec = HgSpec::new(n, xi).unwrap();
                let range = reach.min(14.0 * xi + 1500.0);
                let a = hg_parameter_from_spectrum(spec, &f);
                let b = hg_parameter_from_profile(spec, &profile, range).map_err(|e| e.to_string())?;
                let (_, scale) =
                    composite_gauss_legendre(|t| profile(t) * parameter_kernel(spec, t), -range, range, 200);
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    ensure(worst <= 1e-6, format!("ω/τ disagreement {worst:.2e}"))?;

    let q = Quadrature::with_rel_tol(1e-13).panels(64);
    let mut kernel_worst: f64 = 0.0;
    for n in [0u32, 2, 4] {
        for xi in [10.0, 40.0, 160.0] {
            let s = HgSpec::new(n, xi).unwrap();
            let lim = 9.0 / xi;
            for k in 0..=20 {
                let tau = -5.0 * xi + k as f64 * 0.5 * xi;
                let re = q.integrate(|w| (w * tau).cos() * hg_function(s, w), -lim, lim).unwrap();
                let im = q.integrate(|w| (w * tau).sin() * hg_function(s, w), -lim, lim).unwrap();
                let exact = fourier_phase(n) * hg_time_kernel(s, tau);
                let scale = hg_time_kernel(s, (2.0 * n as f64).sqrt() * xi).abs();
                kernel_worst = kernel_worst.max((exact - Complex64::new(re, im)).norm() / scale);
            }
        }
    }
    ensure(kernel_worst <= 1e-8, format!("kernel vs quadrature {kernel_worst:.2e}"))?;
    Ok(format!("max ω/τ gap {worst:.1e}, kernel gap {kernel_worst:.1e}"))
}

fn c3_exactness() -> Check {
    let cfg = ScanConfig::paper_preset();
    let p = preset_profile();
    let expected = expected_counts(&cfg, &p, preset::VISIBILITY).unwrap();
    let mut notes = Vec::new();
    for (n, xi) in [(0u32, 40.0), (2, 40.0), (4, 60.0)] {
        let spec = ParameterSpec::hermite_gauss(n, xi, cfg.step_fs, cfg.c0).unwrap();
        let est = LinearEstimator::discrete(&cfg.grid(), &spec).unwrap();
        let target = est.apply(&expected).unwrap();
        let var = variance_discrete(&expected, &cfg.grid(), &spec).unwrap();
        let draws: Vec<f64> = (0..100_000u64)
            .into_par_iter()
            .map(|s| est.apply(sample_scan(&cfg, &p, preset::VISIBILITY, s).unwrap().counts()).unwrap())
            .collect();
        let stats = |d: &[f64]| {
            let m = d.iter().sum::<f64>() / d.len() as f64;
            let v = d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (d.len() as f64 - 1.0);
            (m, v)
        };
        let (m4, v4) = stats(&draws[..10_000]);
        let se = (v4 / 1e4).sqrt();
        ensure((m4 - target).abs() < 3.0 * se, format!("n={n}: bias {:.2} SE", (m4 - target) / se))?;
        let (_, v5) = stats(&draws);
        let rel = v5 / var - 1.0;
        ensure(rel.abs() < 0.03, format!("n={n}: variance off by {:.2}%", 100.0 * rel))?;
        notes.push(format!("n={n} bias {:+.2} SE var {:+.2}%", (m4 - target) / se, 100.0 * rel));
    }
    Ok(notes.join("; "))
}

fn c4_crb_limit() -> Check {
    let base = ScanConfig::paper_preset();
    let p = preset_profile();
    let v = preset::VISIBILITY;
    let k = 16.0;
    let c = ScanConfig::new(base.step_fs / k, base.half_range_fs, base.c0 / k, base.integration_s, 0.0).unwrap();
    let spec = ParameterSpec::hermite_gauss(0, 40.0, c.step_fs, c.c0).unwrap();
    let var = variance_discrete(&expected_counts(&c, &p, v).unwrap(), &c.grid(), &spec).unwrap();
    let crb = crb_continuous(
        &|t| c.c0 * (1.0 - v * p.value(t)),
        &spec,
        -c.half_range_fs,
        c.half_range_fs,
    )
    .unwrap();
    let rel = var / crb - 1.0;
    ensure(rel.abs() < 1e-3, format!("variance/CRB − 1 = {rel:.2e}"))?;
    Ok(format!("16x grid: variance/CRB − 1 = {rel:.1e}"))
}

fn separable_fixture(rng: &mut impl Rng) -> SpectralModel {
    let d = rng.random_range(-0.01..0.01);
    let signal = SinglePhotonAmplitude::gaussian(d, rng.random_range(0.006..0.02))
        .with_chirp(rng.random_range(-1500.0..1500.0));
    let w = rng.random_range(0.006..0.02);
    let idler = if rng.random_bool(0.5) {
        SinglePhotonAmplitude::super_gaussian(-d, w, 4)
    } else {
        SinglePhotonAmplitude::gaussian(-d, w)
    };
    SpectralModel::SeparableProduct { signal, idler }
}

fn c5_witness() -> Check {
    let cfg = ScanConfig::paper_preset();
    let v = preset::VISIBILITY;
    let threshold = reliability_threshold(cfg.step_fs);
    let xi = linear_grid(1.01 * threshold, 400.0, 60).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let fixtures: Vec<SpectralModel> = (0..20).map(|_| separable_fixture(&mut rng)).collect();
    let mut worst = f64::INFINITY;
    for (i, model) in fixtures.iter().enumerate() {
        let profile = model.delay_profile(2.0 * cfg.half_range_fs).map_err(|e| e.to_string())?;
        for seed in 0..5u64 {
            let scan = sample_scan(&cfg, profile.as_ref(), v, seed).unwrap();
            for order in [0u32, 2, 4] {
                let opts = WitnessOptions {
                    seed: 1000 + seed,
                    ..Default::default()
                };
                let r = witness_scan(&scan, order, &xi, v, &opts).map_err(|e| e.to_string())?;
                ensure(
                    r.verdict == Verdict::NotWitnessed,
                    format!("separable fixture {i} seed {seed} flagged h{order}"),
                )?;
                worst = r.points.iter().filter(|q| q.reliable).map(|q| q.r).fold(worst, f64::min);
            }
        }
    }
    let xi_all = linear_grid(5.0, 300.0, 60).unwrap();
    let mut intervals = Vec::new();
    for b in [1.0, preset::B, 1.25] {
        let p = ApproxSincGauss::new(preset::SIGMA_FS, b).unwrap();
        let scan = sample_scan(&cfg, &p, v, 0).unwrap();
        let r = witness_scan(&scan, 4, &xi_all, v, &WitnessOptions::default()).map_err(|e| e.to_string())?;
        let [lo, hi] = r
            .witness_interval_fs
            .ok_or_else(|| format!("preset with B={b} not witnessed"))?;
        ensure(lo > threshold, format!("B={b}: interval starts below threshold"))?;
        intervals.push(format!("B={b}: [{lo:.0}, {hi:.0}] fs"));
    }
    Ok(format!(
        "separable min R {worst:.2} over 300 sweeps; h4 witnessed {}",
        intervals.join(", ")
    ))
}

fn c6_bias() -> Check {
    let cfg = ScanConfig::paper_preset();
    let scan = sample_scan(&cfg, &preset_profile(), preset::VISIBILITY, 1).unwrap();
    let xi: Vec<f64> = (1..=45).map(|k| 2.0 * k as f64).collect();
    let mut interp_below = 0;
    for method in [Method::Discrete, Method::Interpolated] {
        let opts = BiasProbeOptions {
            seed: 1,
            method,
            ..Default::default()
        };
        for order in [0u32, 2, 4] {
            for row in bias_probe(&scan, order, &xi, &[1, 2, 4], &opts).map_err(|e| e.to_string())? {
                if row.violation {
                    ensure(
                        !row.reliable,
                        format!(
                            "{} violation above threshold: n={} xi={} factor {}",
                            method.as_str(),
                            row.order,
                            row.xi_fs,
                            row.factor
                        ),
                    )?;
                    if method == Method::Interpolated {
                        interp_below += 1;
                    }
                }
            }
        }
    }
    ensure(interp_below > 0, "no interpolated violation in the unreliable region")?;
    Ok(format!(
        "{interp_below} interpolated violations, all below δτ_eff/√2; none for discrete above it"
    ))
}

fn c7_fit() -> Check {
    let truth = FitParams {
        c0: preset::C0,
        visibility: preset::VISIBILITY,
        sigma_fs: 60.0,
        b: 0.8,
        tau0_fs: 5.0,
    };
    let grid = ScanConfig::paper_preset().grid();
    let counts = grid.points().iter().map(|&t| truth.model(t)).collect();
    let scan = CoincidenceScan::on_grid(grid, counts, Some((preset::C0, C0Source::Configured)), Provenance::Noiseless).unwrap();
    let fit = fit_profile(&scan, &FitOptions::default()).map_err(|e| e.to_string())?;
    let arr = |p: &FitParams| [p.c0, p.visibility, p.sigma_fs, p.b, p.tau0_fs];
    for (got, want) in arr(&fit.params).iter().zip(arr(&truth)) {
        ensure((got - want).abs() <= 1e-6 * want.abs(), format!("noiseless recovery {got} vs {want}"))?;
    }

    let mut cfg = ScanConfig::paper_preset();
    cfg.offset_fs = 5.0;
    let p = preset_profile();
    let t = [preset::C0, preset::VISIBILITY, preset::SIGMA_FS, preset::B, 5.0];
    let hits: Vec<[bool; 5]> = (0..500u64)
        .into_par_iter()
        .map(|seed| {
            let scan = sample_scan(&cfg, &p, preset::VISIBILITY, seed).unwrap();
            match fit_profile(&scan, &FitOptions::default()) {
                Ok(f) => {
                    let (x, se) = (arr(&f.params), arr(&f.std_errors));
                    std::array::from_fn(|k| (x[k] - t[k]).abs() < 3.0 * se[k])
                }
                Err(_) => [false; 5],
            }
        })
        .collect();
    let per: Vec<usize> = (0..5).map(|k| hits.iter().filter(|h| h[k]).count()).collect();
    let joint = hits.iter().filter(|h| h.iter().all(|b| *b)).count();
    ensure(per.iter().all(|&c| c >= 475), format!("per-parameter 3SE coverage {per:?}/500"))?;
    Ok(format!("noiseless recovery to 1e-6; 3SE coverage per parameter {per:?}, joint {joint}/500"))
}

fn c8_delay() -> Check {
    let cfg = ScanConfig::paper_preset();
    let p = preset_profile();
    let xi = linear_grid(1.01 * reliability_threshold(cfg.step_fs), 10.0 * preset::SIGMA_FS, 200).unwrap();
    let opts = DelayOptions {
        tau0_star_fs: 0.05 * preset::SIGMA_FS,
        step_fs: 2.0,
        half_range_fs: cfg.half_range_fs,
    };
    let mut worst_ratio: f64 = 0.0;
    for n in [0u32, 2, 4] {
        for x in [20.0, 40.0, 80.0, 120.0] {
            let spec = HgSpec::new(n, x).unwrap();
            let r = richardson_ratio(|t| shifted_parameter(&p, spec, t, cfg.half_range_fs).0, opts.tau0_star_fs, opts.step_fs);
            worst_ratio = worst_ratio.max((r - 4.0).abs());
        }
    }
    let source = DeltaHSource::Formula {
        scan: cfg.clone(),
        visibility: preset::VISIBILITY,
    };
    let mut minima = Vec::new();
    for n in [0u32, 2, 4] {
        let s = delay_sensitivity(&p, n, &xi, &source, &opts).map_err(|e| e.to_string())?;
        let (at, m) = s.minimum().ok_or_else(|| format!("h{n}: no defined point"))?;
        minima.push((n, at, m));
    }
    let detail = minima
        .iter()
        .map(|(n, at, m)| format!("h{n} {m:.2} fs at ξ={at:.0}"))
        .collect::<Vec<_>>()
        .join(", ");
    ensure(worst_ratio < 0.05, format!("Richardson ratio off by {worst_ratio:.3}"))?;
    ensure(
        minima.windows(2).all(|w| w[1].2 <= w[0].2),
        format!("min Δτ₀ not non-increasing in order: {detail}"),
    )?;
    Ok(format!("{detail}; Richardson |r−4| ≤ {worst_ratio:.3}"))
}

fn c9_determinism() -> Check {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../..");
    let script = root.join("reproduce_figs.sh");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    for run in ["a", "b"] {
        let out = Command::new("bash")
            .arg(&script)
            .arg(dir.path().join(run))
            .env("HOMSP", env!("CARGO_BIN_EXE_homsp"))
            .env_remove("HOM_OUT_DIR")
            .output()
            .map_err(|e| e.to_string())?;
        ensure(
            out.status.success(),
            format!("run {run} failed: {}", String::from_utf8_lossy(&out.stderr)),
        )?;
    }
    let mut names: Vec<String> = std::fs::read_dir(dir.path().join("a"))
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    let other = std::fs::read_dir(dir.path().join("b")).map_err(|e| e.to_string())?.count();
    ensure(names.len() == other, "runs wrote different file sets")?;
    for name in &names {
        let a = std::fs::read(dir.path().join("a").join(name)).map_err(|e| e.to_string())?;
        let b = std::fs::read(dir.path().join("b").join(name)).map_err(|e| e.to_string())?;
        ensure(a == b, format!("{name} differs between runs"))?;
    }
    Ok(format!("{} files byte-identical across two runs", names.len()))
}

fn main() {
    let criteria: [(u32, &str, fn() -> Check); 9] = [
        (1, "visibility anchor", c1_visibility),
        (2, "Fourier consistency", c2_fourier),
        (3, "estimator exactness", c3_exactness),
        (4, "CRB continuum limit", c4_crb_limit),
        (5, "witness soundness and completeness", c5_witness),
        (6, "bias phenomenology", c6_bias),
        (7, "fit recovery", c7_fit),
        (8, "delay-metrology ordering", c8_delay),
        (9, "end-to-end determinism", c9_determinism),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {id} ({name}): PASS [{secs:.1} s] {detail}"),
            Err(detail) => {
                println!("criterion {id} ({name}): FAIL [{secs:.1} s] {detail}");
                failed.push(id);
            }
        }
    }
    println!("{} of 9 criteria pass", 9 - failed.len());
    if !failed.is_empty() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
