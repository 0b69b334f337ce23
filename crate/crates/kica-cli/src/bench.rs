//! Desk-scale reproductions of the headline experiments, as CSV + SVG
//! artifacts with built-in sanity checks. A failed check exits with code 3.

use kica::contrast::{self, ContrastParams};
use kica::gram;
use kica::optimize::{self, GridSpec, OptimizeOptions};
use kica::preprocess;
use kica::qemu::{self, NoiseSpec};
use kica::sources::{self, Distribution, SampleMatrix, SourceSpec};
use kica::spectral;
use nalgebra::DMatrix;

use crate::config::ExperimentConfig;
use crate::output::{fmt_f64, svg_heatmap, svg_lines, OutDir};
use crate::CliError;

pub fn run_suite(cfg: &ExperimentConfig, suite: &str) -> Result<(), CliError> {
    match suite {
        "fig4" => landscape_suite(cfg),
        "fig5" => norm_grid_suite(cfg),
        "fig6a" => psi_norm_suite(cfg),
        "fig6b" => error_scaling_suite(cfg),
        "fig7" => min_eig_suite(cfg),
        "fig8a" => amari_suite(cfg),
        "all" => {
            landscape_suite(cfg)?;
            norm_grid_suite(cfg)?;
            psi_norm_suite(cfg)?;
            error_scaling_suite(cfg)?;
            min_eig_suite(cfg)?;
            amari_suite(cfg)
        }
        other => Err(CliError::Config(format!(
            "unknown suite `{other}`; expected fig4|fig5|fig6a|fig6b|fig7|fig8a|all"
        ))),
    }
}

fn check(ok: bool, what: &str) -> Result<(), CliError> {
    if ok {
        println!("check passed: {what}");
        Ok(())
    } else {
        Err(CliError::Check(format!("bench check failed: {what}")))
    }
}

fn three_sources(n: usize, seed: u64) -> Result<SampleMatrix, CliError> {
    sources::sample_sources(&SourceSpec::new(
        vec![Distribution::Uniform, Distribution::Laplace, Distribution::Uniform],
        n,
        seed,
    ))
    .map_err(CliError::numerical)
}

fn two_sources(n: usize, seed: u64) -> Result<SampleMatrix, CliError> {
    sources::sample_sources(&SourceSpec::new(
        vec![Distribution::Uniform, Distribution::Laplace],
        n,
        seed,
    ))
    .map_err(CliError::numerical)
}

/// Landscapes of the signed and the measured (unsigned, noisy) contrast over
/// a two-generator grid.
fn landscape_suite(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = OutDir::create(&format!("{}/fig4", cfg.out)).map_err(CliError::io)?;
    let seed = cfg.seed().map_err(CliError::Config)?;
    let s = three_sources(600, seed)?;
    let (y, _) = preprocess::whiten(&s).map_err(CliError::numerical)?;
    let gens = sources::elementary_generators(3);
    let grid = GridSpec { lo: cfg.grid.lo, hi: cfg.grid.hi, steps: cfg.grid.steps.min(13) };
    let grids = [grid, grid];

    let variants: Vec<(String, bool, f64)> = vec![
        ("signed".into(), true, 0.0),
        ("unsigned_eps0".into(), false, 0.0),
        ("unsigned_eps2e-3".into(), false, 2e-3),
        ("unsigned_eps4e-3".into(), false, 4e-3),
    ];

    for (name, signed, eps1) in variants {
        let params = cfg.contrast_params(signed).map_err(CliError::Config)?;
        let noise = NoiseSpec::general(eps1, 0.0, params.kappa, seed ^ 0xF1);
        let scape = optimize::scan_landscape(&y, &gens[..2], &grids, |z| {
            if eps1 == 0.0 {
                contrast::contrast_pipeline(z, &params).map(|v| v.neg_log_det)
            } else {
                let spectra = spectral::decompose_all(z, &params.kernel, params.eps_trunc)?;
                let eval = qemu::noisy_contrast_from_spectra(&spectra, &noise, &params)?;
                Ok(-eval.noisy_det.max(1e-300).ln())
            }
        })
        .map_err(CliError::numerical)?;

        let mut rows = Vec::new();
        for (i, &d1) in scape.delta1.iter().enumerate() {
            for (j, &d2) in scape.delta2.iter().enumerate() {
                rows.push(vec![fmt_f64(d1), fmt_f64(d2), fmt_f64(scape.values[(i, j)])]);
            }
        }
        dir.write_csv(&format!("landscape_{name}.csv"), &["delta1", "delta2", "value"], &rows)
            .map_err(CliError::io)?;
        dir.write_text(
            &format!("landscape_{name}.svg"),
            &svg_heatmap(&format!("landscape {name}"), &scape.delta2, &scape.delta1, &scape.values),
        )
        .map_err(CliError::io)?;

        let (bi, bj) = scape.argmin_cell();
        let center = (scape.delta1.len() / 2, scape.delta2.len() / 2);
        check(
            (bi, bj) == center,
            &format!("{name}: argmin at the unmixed point (found ({bi}, {bj}), want {center:?})"),
        )?;
    }
    Ok(())
}

/// Norms of the Gram state and the paired-spectrum state over (N, delta).
fn norm_grid_suite(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = OutDir::create(&format!("{}/fig5", cfg.out)).map_err(CliError::io)?;
    let seed = cfg.seed().map_err(CliError::Config)?;
    let n_values = [256usize, 512, 1024, 2048];
    let deltas = [0.0, 0.05, 0.1, 0.15, 0.2];
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);

    let mut k_grid = DMatrix::zeros(n_values.len(), deltas.len());
    let mut psi_grid = DMatrix::zeros(n_values.len(), deltas.len());
    let mut rows = Vec::new();
    for (a, &n) in n_values.iter().enumerate() {
        let s = two_sources(n, seed ^ a as u64)?;
        for (b, &delta) in deltas.iter().enumerate() {
            let w = (rot.clone() * delta).exp();
            let z = sources::mix(&s, &w).map_err(CliError::numerical)?;
            let kernel = cfg.kernel_spec().map_err(CliError::Config)?;
            let pair0 = gram::gram_pair(&z.row_vec(0), &kernel).map_err(CliError::numerical)?;
            let spectra = spectral::decompose_all(&z, &kernel, cfg.eps_trunc)
                .map_err(CliError::numerical)?;
            let k_norm = spectral::state_norm_k(&pair0.centered);
            let psi_norm =
                spectral::state_norm_psi(&spectra[0], &spectra[1]).map_err(CliError::numerical)?;
            k_grid[(a, b)] = k_norm;
            psi_grid[(a, b)] = psi_norm;
            rows.push(vec![
                n.to_string(),
                fmt_f64(delta),
                fmt_f64(k_norm),
                fmt_f64(psi_norm),
            ]);
        }
    }
    dir.write_csv("norms.csv", &["N", "delta", "k_norm", "psi_norm"], &rows)
        .map_err(CliError::io)?;
    let nf: Vec<f64> = n_values.iter().map(|&n| n as f64).collect();
    dir.write_text("k_norm.svg", &svg_heatmap("|K> norm", &deltas, &nf, &k_grid))
        .map_err(CliError::io)?;
    dir.write_text("psi_norm.svg", &svg_heatmap("|psi> norm", &deltas, &nf, &psi_grid))
        .map_err(CliError::io)?;

    // mixing dominates the psi norm; sample size dominates only at delta = 0
    let more_mixing = psi_grid[(0, deltas.len() - 1)] > psi_grid[(0, 0)];
    check(more_mixing, "psi norm grows with the mixing angle")?;
    Ok(())
}

/// Paired-state norm against sample size, one curve per mixing angle.
fn psi_norm_suite(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = OutDir::create(&format!("{}/fig6a", cfg.out)).map_err(CliError::io)?;
    let seed = cfg.seed().map_err(CliError::Config)?;
    let n_values = [256usize, 512, 1024, 2048, 4096];
    let deltas = [0.0, 0.05, 0.1, 0.2];
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let kernel = cfg.kernel_spec().map_err(CliError::Config)?;

    let mut rows = Vec::new();
    let mut series = Vec::new();
    let mut intercepts = Vec::new();
    for &delta in &deltas {
        let mut pts = Vec::new();
        for &n in &n_values {
            let s = two_sources(n, seed ^ 0x6a)?;
            let w = (rot.clone() * delta).exp();
            let z = sources::mix(&s, &w).map_err(CliError::numerical)?;
            let spectra = spectral::decompose_all(&z, &kernel, cfg.eps_trunc)
                .map_err(CliError::numerical)?;
            let norm =
                spectral::state_norm_psi(&spectra[0], &spectra[1]).map_err(CliError::numerical)?;
            pts.push((n as f64, norm));
            rows.push(vec![fmt_f64(delta), n.to_string(), fmt_f64(norm)]);
        }
        // fit norm = a + b / sqrt(N)
        let (a, b) = fit_inverse_sqrt(&pts);
        intercepts.push(a);
        rows.push(vec![fmt_f64(delta), "fit_a".into(), fmt_f64(a)]);
        rows.push(vec![fmt_f64(delta), "fit_b".into(), fmt_f64(b)]);
        series.push((format!("delta={delta}"), pts));
    }
    dir.write_csv("psi_norm_vs_n.csv", &["delta", "N", "psi_norm"], &rows)
        .map_err(CliError::io)?;
    dir.write_text(
        "psi_norm_vs_n.svg",
        &svg_lines("psi norm vs N", "N", "norm", &series, true, true),
    )
    .map_err(CliError::io)?;

    let monotone = intercepts.windows(2).all(|w| w[1] >= w[0] - 1e-6);
    check(monotone, "fitted intercept grows with the mixing angle")?;
    Ok(())
}

pub fn fit_inverse_sqrt(pts: &[(f64, f64)]) -> (f64, f64) {
    // least squares for y = a + b x with x = 1/sqrt(N)
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|(x, _)| 1.0 / x.sqrt()).sum();
    let sy: f64 = pts.iter().map(|(_, y)| y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| 1.0 / x).sum();
    let sxy: f64 = pts.iter().map(|(x, y)| y / x.sqrt()).sum();
    let denom = n * sxx - sx * sx;
    let b = (n * sxy - sx * sy) / denom;
    let a = (sy - b * sx) / n;
    (a, b)
}

/// Relative determinant error against the readout precision and against N.
fn error_scaling_suite(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = OutDir::create(&format!("{}/fig6b", cfg.out)).map_err(CliError::io)?;
    let seed = cfg.seed().map_err(CliError::Config)?;
    let kernel = cfg.kernel_spec().map_err(CliError::Config)?;
    let params = ContrastParams {
        kernel,
        kappa: cfg.kappa,
        eps_trunc: cfg.eps_trunc,
        signed: false,
        convention: Default::default(),
    };
    let rot = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let w = (rot * (0.1 * std::f64::consts::PI)).exp();
    let eps1_values = [1e-3, 2e-3, 4e-3, 8e-3];
    let n_values = [256usize, 512, 1024, 2048];
    let n_seeds = 20u64;

    let median = |mut xs: Vec<f64>| -> f64 {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        xs[xs.len() / 2]
    };

    // error vs eps1 at fixed N
    let mut rows = Vec::new();
    let mut eps_pts = Vec::new();
    {
        let s = two_sources(1024, seed ^ 0xE5)?;
        let z = sources::mix(&s, &w).map_err(CliError::numerical)?;
        let spectra = spectral::decompose_all(&z, &params.kernel, params.eps_trunc)
            .map_err(CliError::numerical)?;
        for &eps1 in &eps1_values {
            let errs: Vec<f64> = (0..n_seeds)
                .map(|t| {
                    let noise = NoiseSpec::general(eps1, 0.0, params.kappa, seed ^ (0x100 + t));
                    qemu::noisy_contrast_from_spectra(&spectra, &noise, &params)
                        .map(|e| e.relative_error)
                })
                .collect::<Result<_, _>>()
                .map_err(CliError::numerical)?;
            let med = median(errs);
            eps_pts.push((eps1, med));
            rows.push(vec!["1024".into(), fmt_f64(eps1), fmt_f64(med)]);
        }
    }
    // error vs N at fixed eps1
    let mut n_pts = Vec::new();
    for &n in &n_values {
        let s = two_sources(n, seed ^ 0xE6)?;
        let z = sources::mix(&s, &w).map_err(CliError::numerical)?;
        let spectra = spectral::decompose_all(&z, &params.kernel, params.eps_trunc)
            .map_err(CliError::numerical)?;
        let errs: Vec<f64> = (0..n_seeds)
            .map(|t| {
                let noise = NoiseSpec::general(2e-3, 0.0, params.kappa, seed ^ (0x200 + t));
                qemu::noisy_contrast_from_spectra(&spectra, &noise, &params)
                    .map(|e| e.relative_error)
            })
            .collect::<Result<_, _>>()
            .map_err(CliError::numerical)?;
        let med = median(errs);
        n_pts.push((n as f64, med));
        rows.push(vec![n.to_string(), "2e-3".into(), fmt_f64(med)]);
    }
    dir.write_csv("error_scaling.csv", &["N", "eps1", "median_relative_error"], &rows)
        .map_err(CliError::io)?;
    dir.write_text(
        "error_vs_eps1.svg",
        &svg_lines("relative error vs eps1", "eps1", "error", &[("median".into(), eps_pts.clone())], true, true),
    )
    .map_err(CliError::io)?;
    dir.write_text(
        "error_vs_n.svg",
        &svg_lines("relative error vs N", "N", "error", &[("median".into(), n_pts.clone())], true, true),
    )
    .map_err(CliError::io)?;

    let eps_slope = log_log_slope(&eps_pts);
    let n_slope = log_log_slope(&n_pts);
    check(
        (eps_slope - 1.0).abs() <= 0.3,
        &format!("error grows linearly in eps1 (slope {eps_slope:.3})"),
    )?;
    check(n_slope.abs() <= 0.3, &format!("error flat in N (slope {n_slope:.3})"))?;
    Ok(())
}

pub fn log_log_slope(pts: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = pts
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = logs.len() as f64;
    let sx: f64 = logs.iter().map(|(x, _)| x).sum();
    let sy: f64 = logs.iter().map(|(_, y)| y).sum();
    let sxx: f64 = logs.iter().map(|(x, _)| x * x).sum();
    let sxy: f64 = logs.iter().map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

/// Minimal eigenvalue of the overlap matrix over mixings, plus its floor over
/// random rotations per sample size.
fn min_eig_suite(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = OutDir::create(&format!("{}/fig7", cfg.out)).map_err(CliError::io)?;
    let seed = cfg.seed().map_err(CliError::Config)?;
    let params = cfg.contrast_params(false).map_err(CliError::Config)?;

    // xi over a two-generator grid
    let s = three_sources(500, seed ^ 0x71)?;
    let (y, _) = preprocess::whiten(&s).map_err(CliError::numerical)?;
    let gens = sources::elementary_generators(3);
    let grid = GridSpec { lo: cfg.grid.lo, hi: cfg.grid.hi, steps: 9 };
    let scape = optimize::scan_landscape(&y, &gens[..2], &[grid, grid], |z| {
        contrast::contrast_pipeline(z, &params).map(|v| v.min_eig)
    })
    .map_err(CliError::numerical)?;
    let mut rows = Vec::new();
    for (i, &d1) in scape.delta1.iter().enumerate() {
        for (j, &d2) in scape.delta2.iter().enumerate() {
            rows.push(vec![fmt_f64(d1), fmt_f64(d2), fmt_f64(scape.values[(i, j)])]);
        }
    }
    dir.write_csv("xi_grid.csv", &["delta1", "delta2", "xi"], &rows)
        .map_err(CliError::io)?;
    dir.write_text(
        "xi_grid.svg",
        &svg_heatmap("min eigenvalue", &scape.delta2, &scape.delta1, &scape.values),
    )
    .map_err(CliError::io)?;

    // floor over random rotations per N
    let mut floor_rows = Vec::new();
    let mut min_xi_overall = f64::INFINITY;
    for &n in &[256usize, 512, 1024] {
        let s = two_sources(n, seed ^ 0x72)?;
        let (y, _) = preprocess::whiten(&s).map_err(CliError::numerical)?;
        let mut lowest = f64::INFINITY;
        for t in 0..12u64 {
            let theta = std::f64::consts::PI * ((t as f64 / 12.0) - 0.5);
            let w = DMatrix::from_row_slice(
                2,
                2,
                &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
            );
            let z = sources::mix(&y, &w).map_err(CliError::numerical)?;
            let v = contrast::contrast_pipeline(&z, &params).map_err(CliError::numerical)?;
            lowest = lowest.min(v.min_eig);
        }
        min_xi_overall = min_xi_overall.min(lowest);
        floor_rows.push(vec![n.to_string(), fmt_f64(lowest)]);
    }
    dir.write_csv("xi_floor_vs_n.csv", &["N", "min_xi"], &floor_rows)
        .map_err(CliError::io)?;
    check(
        min_xi_overall > 0.0,
        &format!("unsigned overlap matrix stayed positive definite (min xi {min_xi_overall:.4})"),
    )?;
    Ok(())
}

/// Amari error of the optimized unmixing against the known mixing, per N.
fn amari_suite(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = OutDir::create(&format!("{}/fig8a", cfg.out)).map_err(CliError::io)?;
    let seed = cfg.seed().map_err(CliError::Config)?;
    let params = cfg.contrast_params(true).map_err(CliError::Config)?;
    let n_values = [200usize, 500, 1000, 2000];
    let n_seeds = 5u64;

    let mut rows = Vec::new();
    let mut medians = Vec::new();
    for &n in &n_values {
        let mut errs = Vec::new();
        for t in 0..n_seeds {
            let s = two_sources(n, seed ^ (0x800 + t))?;
            let theta = 0.35 + 0.05 * t as f64;
            let a = DMatrix::from_row_slice(
                2,
                2,
                &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
            );
            let x = sources::mix(&s, &a).map_err(CliError::numerical)?;
            let (y, model) = preprocess::whiten(&x).map_err(CliError::numerical)?;
            let opts = OptimizeOptions {
                restarts: 2,
                max_iters: 30,
                tol: 1e-5,
                fd_step: 1e-3,
                seed: seed ^ t,
            };
            let report = optimize::minimize_stiefel(
                &y,
                |z| contrast::contrast_pipeline(z, &params).map(|v| v.neg_log_det),
                &opts,
            )
            .map_err(CliError::numerical)?;
            let unmix = &report.w_opt * &model.inv_sqrt;
            let err = optimize::amari_error(&unmix, &a).map_err(CliError::numerical)?;
            errs.push(err);
            rows.push(vec![n.to_string(), t.to_string(), fmt_f64(err)]);
        }
        errs.sort_by(|x, y| x.partial_cmp(y).unwrap());
        medians.push((n as f64, errs[errs.len() / 2]));
    }
    dir.write_csv("amari_vs_n.csv", &["N", "seed", "amari_error"], &rows)
        .map_err(CliError::io)?;
    dir.write_text(
        "amari_vs_n.svg",
        &svg_lines("amari error vs N", "N", "amari", &[("median".into(), medians.clone())], true, true),
    )
    .map_err(CliError::io)?;

    let first = medians.first().map(|p| p.1).unwrap_or(f64::NAN);
    let last = medians.last().map(|p| p.1).unwrap_or(f64::NAN);
    check(
        last < first,
        &format!("median amari error decreases with N ({first:.4} -> {last:.4})"),
    )?;
    Ok(())
}
