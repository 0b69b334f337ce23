//! Subcommand implementations.

use kica::contrast::{self, ContrastParams};
use kica::gram;
use kica::optimize::{self, GridSpec, OptimizeOptions};
use kica::preprocess;
use kica::qemu::{self, circuit::CircuitLayout};
use kica::sources::{self, SampleMatrix};
use kica::spectral;
use nalgebra::DMatrix;

use crate::config::{ExperimentConfig, PhaseSection};
use crate::output::{fmt_f64, matrix_rows, svg_heatmap, svg_lines, OutDir};
use crate::CliError;

pub fn out_dir(cfg: &ExperimentConfig) -> Result<OutDir, CliError> {
    OutDir::create(&cfg.out).map_err(|e| CliError::Config(format!("cannot create out dir: {e}")))
}

fn manifest(cfg: &ExperimentConfig, dir: &OutDir, command: &str) -> Result<(), CliError> {
    let value = serde_json::to_value(cfg).map_err(|e| CliError::Config(e.to_string()))?;
    dir.write_manifest(command, &value).map_err(CliError::io)?;
    Ok(())
}

/// Samples according to the config: CSV input when given, otherwise fresh
/// sources. `mixed` additionally applies the configured mixing.
pub fn resolve_samples(cfg: &ExperimentConfig, mixed: bool) -> Result<SampleMatrix, CliError> {
    if let Some(input) = &cfg.input {
        let m = sources::load_csv(std::path::Path::new(&input.path), input.orientation)
            .map_err(CliError::numerical)?;
        return Ok(m);
    }
    let spec = cfg.source_spec().map_err(CliError::Config)?;
    let s = sources::sample_sources(&spec).map_err(CliError::numerical)?;
    if !mixed {
        return Ok(s);
    }
    let a = cfg.mixing_matrix(s.n_variables()).map_err(CliError::Config)?;
    sources::mix(&s, &a).map_err(CliError::numerical)
}

fn write_samples(dir: &OutDir, name: &str, s: &SampleMatrix) -> Result<(), CliError> {
    let header: Vec<String> = match s.row_labels() {
        Some(labels) => labels.to_vec(),
        None => (0..s.n_variables()).map(|i| format!("var{i}")).collect(),
    };
    let header_refs: Vec<&str> = header.iter().map(|h| h.as_str()).collect();
    // one CSV row per sample; variables as columns
    let rows: Vec<Vec<String>> = (0..s.n_samples())
        .map(|j| (0..s.n_variables()).map(|i| fmt_f64(s.data()[(i, j)])).collect())
        .collect();
    dir.write_csv(name, &header_refs, &rows).map_err(CliError::io)?;
    Ok(())
}

pub fn cmd_gen(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let s = resolve_samples(cfg, false)?;
    write_samples(&dir, "sources.csv", &s)?;
    manifest(cfg, &dir, "gen")?;
    println!("wrote {} ({} x {})", dir.path("sources.csv").display(), s.n_variables(), s.n_samples());
    Ok(())
}

pub fn cmd_mix(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let s = resolve_samples(cfg, false)?;
    let a = cfg.mixing_matrix(s.n_variables()).map_err(CliError::Config)?;
    if sources::is_nearly_singular(&a) {
        eprintln!("warning: mixing matrix is singular or near-singular");
    }
    let mixed = sources::mix(&s, &a).map_err(CliError::numerical)?;
    write_samples(&dir, "mixed.csv", &mixed)?;
    dir.write_csv(
        "mixing.csv",
        &vec!["col"; a.ncols()],
        &matrix_rows(&a),
    )
    .map_err(CliError::io)?;
    manifest(cfg, &dir, "mix")?;
    println!("wrote {}", dir.path("mixed.csv").display());
    Ok(())
}

pub fn cmd_preprocess(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let x = resolve_samples(cfg, true)?;
    let (y, mut model) = preprocess::whiten(&x).map_err(CliError::numerical)?;
    if model.max_centered_abs > 1.0 {
        eprintln!(
            "warning: max centered magnitude {:.3} exceeds 1; downstream error budgets assume unit scale",
            model.max_centered_abs
        );
    }
    if cfg.noise.eps2 > 0.0 {
        model = preprocess::perturb_whitening(&model, cfg.noise.eps2, cfg.seed().map_err(CliError::Config)? ^ 0xE2)
            .map_err(CliError::numerical)?;
    }
    write_samples(&dir, "whitened.csv", &y)?;
    dir.write_text("whitening.json", &model.to_json().map_err(CliError::numerical)?)
        .map_err(CliError::io)?;
    manifest(cfg, &dir, "preprocess")?;
    println!(
        "whitened {} variables, condition number {:.4}",
        y.n_variables(),
        model.mu_m
    );
    Ok(())
}

pub fn cmd_contrast(cfg: &ExperimentConfig, unsigned: bool) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let z = resolve_samples(cfg, true)?;
    let params = cfg.contrast_params(!unsigned).map_err(CliError::Config)?;

    if cfg_dump_gram(cfg) {
        for i in 0..z.n_variables() {
            let pair = gram::gram_pair(&z.row_vec(i), &params.kernel).map_err(CliError::numerical)?;
            dir.write_csv(
                &format!("gram_raw_{i}.csv"),
                &vec!["col"; pair.raw.ncols()],
                &matrix_rows(&pair.raw),
            )
            .map_err(CliError::io)?;
            dir.write_csv(
                &format!("gram_centered_{i}.csv"),
                &vec!["col"; pair.centered.ncols()],
                &matrix_rows(&pair.centered),
            )
            .map_err(CliError::io)?;
        }
    }

    let spectra = spectral::decompose_all(&z, &params.kernel, params.eps_trunc)
        .map_err(CliError::numerical)?;
    let value = contrast::contrast_from_spectra(&spectra, &params).map_err(CliError::numerical)?;

    // overlap matrix with its block index header
    let overlaps = contrast::all_overlaps(&spectra).map_err(CliError::numerical)?;
    let r = contrast::build_rkappa(&spectra, &overlaps, params.kappa, params.signed, params.convention)
        .map_err(CliError::numerical)?;
    let header: Vec<String> = r
        .index()
        .iter()
        .map(|(var, k)| format!("v{var}e{k}"))
        .collect();
    let header_refs: Vec<&str> = header.iter().map(|h| h.as_str()).collect();
    dir.write_csv("rkappa.csv", &header_refs, &matrix_rows(r.data()))
        .map_err(CliError::io)?;

    manifest(cfg, &dir, "contrast")?;
    println!("det = {}", fmt_f64(value.det));
    println!("neg_log_det = {}", fmt_f64(value.neg_log_det));
    println!("dim = {}", value.dim);
    println!("min_eig = {}", fmt_f64(value.min_eig));
    Ok(())
}

fn cfg_dump_gram(cfg: &ExperimentConfig) -> bool {
    // carried on the config so it lands in the manifest
    cfg.dump_gram
}

pub fn cmd_scan(cfg: &ExperimentConfig, unsigned: bool) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let z = resolve_samples(cfg, true)?;
    let (y, _) = preprocess::whiten(&z).map_err(CliError::numerical)?;
    let m = y.n_variables();
    let gens = sources::elementary_generators(m);
    let n_gens = gens.len().min(2);
    let gens = &gens[..n_gens];
    let grid = GridSpec { lo: cfg.grid.lo, hi: cfg.grid.hi, steps: cfg.grid.steps };
    let grids: Vec<GridSpec> = std::iter::repeat(grid).take(n_gens).collect();
    let params = cfg.contrast_params(!unsigned).map_err(CliError::Config)?;
    let noise = (cfg.noise.eps1 > 0.0)
        .then(|| cfg.noise_spec().map_err(CliError::Config))
        .transpose()?;
    if noise.is_some() && !unsigned {
        return Err(CliError::Config(
            "noisy scans reconstruct unsigned entries; pass --unsigned".into(),
        ));
    }

    let scape = optimize::scan_landscape(&y, gens, &grids, |s| match &noise {
        None => contrast::contrast_pipeline(s, &params).map(|v| v.neg_log_det),
        Some(spec) => {
            let spectra = spectral::decompose_all(s, &params.kernel, params.eps_trunc)?;
            let eval = qemu::noisy_contrast_from_spectra(&spectra, spec, &params)?;
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
    dir.write_csv("landscape.csv", &["delta1", "delta2", "value"], &rows)
        .map_err(CliError::io)?;
    dir.write_text(
        "landscape.svg",
        &svg_heatmap("contrast landscape", &scape.delta2, &scape.delta1, &scape.values),
    )
    .map_err(CliError::io)?;
    manifest(cfg, &dir, "scan")?;
    let (bi, bj) = scape.argmin_cell();
    println!(
        "argmin at (delta1, delta2) = ({}, {})",
        fmt_f64(scape.delta1[bi]),
        fmt_f64(scape.delta2[bj])
    );
    Ok(())
}

pub fn cmd_optimize(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let sources_only = resolve_samples(cfg, false)?;
    let a = cfg.mixing_matrix(sources_only.n_variables()).map_err(CliError::Config)?;
    let x = sources::mix(&sources_only, &a).map_err(CliError::numerical)?;
    let (y, model) = preprocess::whiten(&x).map_err(CliError::numerical)?;
    let params = cfg.contrast_params(true).map_err(CliError::Config)?;
    let opts: OptimizeOptions = cfg.optimize_options().map_err(CliError::Config)?;
    let noise = (cfg.noise.eps1 > 0.0)
        .then(|| cfg.noise_spec().map_err(CliError::Config))
        .transpose()?;
    let noise = noise.map(|mut n| {
        n.mode = match cfg.optimizer.phase {
            PhaseSection::Coarse => kica::qemu::NoiseMode::General,
            PhaseSection::Refine => kica::qemu::NoiseMode::NearIndependent,
        };
        n
    });

    let report = optimize::minimize_stiefel(
        &y,
        |s| match &noise {
            None => contrast::contrast_pipeline(s, &params).map(|v| v.neg_log_det),
            Some(spec) => {
                // average a few readout draws to stabilize the line search
                let unsigned = ContrastParams { signed: false, ..params };
                let spectra = spectral::decompose_all(s, &unsigned.kernel, unsigned.eps_trunc)?;
                let mut total = 0.0;
                for draw in 0..3u64 {
                    let mut spec_d = spec.clone();
                    spec_d.seed = spec.seed ^ (0xD0 + draw);
                    let eval = qemu::noisy_contrast_from_spectra(&spectra, &spec_d, &unsigned)?;
                    total += -eval.noisy_det.max(1e-300).ln();
                }
                Ok(total / 3.0)
            }
        },
        &opts,
    )
    .map_err(CliError::numerical)?;

    let unmix_eff = &report.w_opt * &model.inv_sqrt;
    let amari = optimize::amari_error(&unmix_eff, &a).ok();

    let trace_rows: Vec<Vec<String>> = report
        .j_trace
        .iter()
        .map(|(it, j)| vec![it.to_string(), fmt_f64(*j)])
        .collect();
    dir.write_csv("j_trace.csv", &["iteration", "contrast"], &trace_rows)
        .map_err(CliError::io)?;
    dir.write_csv(
        "w_opt.csv",
        &vec!["col"; report.w_opt.ncols()],
        &matrix_rows(&report.w_opt),
    )
    .map_err(CliError::io)?;
    dir.write_text(
        "j_trace.svg",
        &svg_lines(
            "contrast trace",
            "iteration",
            "contrast",
            &[(
                "J".to_string(),
                report.j_trace.iter().map(|(i, j)| (*i as f64, *j)).collect(),
            )],
            false,
            false,
        ),
    )
    .map_err(CliError::io)?;
    manifest(cfg, &dir, "optimize")?;
    println!(
        "converged = {}, iterations = {}, restarts = {}",
        report.converged,
        report.j_trace.len() - 1,
        report.restarts_used
    );
    if let Some(e) = amari {
        println!("amari_error = {}", fmt_f64(e));
    }
    Ok(())
}

pub fn cmd_emulate(cfg: &ExperimentConfig) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let x = resolve_samples(cfg, true)?;
    let (_, mut model) = preprocess::whiten(&x).map_err(CliError::numerical)?;
    let seed = cfg.seed().map_err(CliError::Config)?;
    if cfg.noise.eps2 > 0.0 {
        model = preprocess::perturb_whitening(&model, cfg.noise.eps2, seed ^ 0xE2)
            .map_err(CliError::numerical)?;
    }
    let params = cfg.contrast_params(false).map_err(CliError::Config)?;
    let noise = cfg.noise_spec().map_err(CliError::Config)?;
    let w = DMatrix::identity(x.n_variables(), x.n_variables());
    let eval = qemu::noisy_contrast(&x, &model, &w, &noise, &params).map_err(CliError::numerical)?;

    dir.write_csv(
        "emulate.csv",
        &[
            "noisy_det",
            "noiseless_det",
            "relative_error",
            "dim",
            "xi",
            "eps_mu",
            "eps_i",
            "bound",
            "premise_ok",
        ],
        &[vec![
            fmt_f64(eval.noisy_det),
            fmt_f64(eval.noiseless_det),
            fmt_f64(eval.relative_error),
            eval.dim.to_string(),
            fmt_f64(eval.xi),
            fmt_f64(eval.eps_mu),
            fmt_f64(eval.eps_i),
            fmt_f64(eval.bound),
            eval.premise_ok.to_string(),
        ]],
    )
    .map_err(CliError::io)?;
    manifest(cfg, &dir, "emulate")?;
    println!("noisy_det = {}", fmt_f64(eval.noisy_det));
    println!("noiseless_det = {}", fmt_f64(eval.noiseless_det));
    println!("relative_error = {}", fmt_f64(eval.relative_error));
    println!("bound = {} (premise_ok = {})", fmt_f64(eval.bound), eval.premise_ok);
    Ok(())
}

pub fn cmd_verify_circuit(cfg: &ExperimentConfig, n: usize, s: usize) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let layout = CircuitLayout::new(n, s).map_err(CliError::numerical)?;
    let z_full = resolve_samples(cfg, true)?;
    let row = z_full.row_vec(0);
    if row.len() < layout.n_points() {
        return Err(CliError::Config(format!(
            "need at least {} samples for n = {n}",
            layout.n_points()
        )));
    }
    let z = &row[..layout.n_points()];
    let kernel = cfg.kernel_spec().map_err(CliError::Config)?;
    let enc = qemu::circuit::build_block_encoding(z, layout, &kernel).map_err(CliError::numerical)?;

    let block = enc.extracted_block() * layout.n_points() as f64;
    let centered = gram::gram_pair(z, &kernel).map_err(CliError::numerical)?.centered;
    let deviation = (&block - &centered).amax();
    let tolerance = 2.0 * 0.5f64.powi(s as i32) * layout.n_points() as f64;
    let residual = enc.unitarity_residual(8);

    manifest(cfg, &dir, "verify-circuit")?;
    println!("block_deviation = {}", fmt_f64(deviation));
    println!("block_tolerance = {}", fmt_f64(tolerance));
    println!("unitarity_residual = {}", fmt_f64(residual));
    if deviation > tolerance || residual > 1e-10 {
        return Err(CliError::Numerical(format!(
            "circuit verification failed: deviation {deviation:.3e} (tol {tolerance:.3e}), residual {residual:.3e}"
        )));
    }
    println!("circuit verified");
    Ok(())
}

pub fn cmd_nystrom(cfg: &ExperimentConfig, n_mc: usize, top: usize) -> Result<(), CliError> {
    let dir = out_dir(cfg)?;
    let spec = cfg.source_spec().map_err(CliError::Config)?;
    if spec.distributions.len() < 2 {
        return Err(CliError::Config("the overlap table needs at least 2 sources".into()));
    }
    let s = sources::sample_sources(&spec).map_err(CliError::numerical)?;
    let kernel = cfg.kernel_spec().map_err(CliError::Config)?;
    let seed = cfg.seed().map_err(CliError::Config)?;

    let mut rows = Vec::new();
    for i in 0..spec.distributions.len() {
        let efs_i = kica::nystrom::eigenfunctions_from(&s.row_vec(i), &kernel, i, top)
            .map_err(CliError::numerical)?;
        for j in (i + 1)..spec.distributions.len() {
            let efs_j = kica::nystrom::eigenfunctions_from(&s.row_vec(j), &kernel, j, top)
                .map_err(CliError::numerical)?;
            for ef_i in &efs_i {
                for ef_j in &efs_j {
                    let est = kica::nystrom::estimate_c_d(
                        ef_i,
                        ef_j,
                        &spec.distributions[i],
                        &spec.distributions[j],
                        n_mc,
                        seed ^ 0xCD,
                    )
                    .map_err(CliError::numerical)?;
                    rows.push(vec![
                        i.to_string(),
                        ef_i.index().to_string(),
                        j.to_string(),
                        ef_j.index().to_string(),
                        fmt_f64(est.c),
                        fmt_f64(est.d),
                        fmt_f64(est.stderr),
                    ]);
                }
            }
        }
    }
    dir.write_csv("overlap_coefficients.csv", &["i", "k", "j", "l", "C", "D", "stderr"], &rows)
        .map_err(CliError::io)?;
    manifest(cfg, &dir, "nystrom")?;
    println!("wrote {}", dir.path("overlap_coefficients.csv").display());
    Ok(())
}
