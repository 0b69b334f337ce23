//! Contrast minimization over orthogonal matrices, landscape scans, and
//! separation scoring.
//!
//! The minimizer runs finite-difference gradient descent in the Lie algebra:
//! the gradient is estimated along the elementary skew-symmetric generator
//! directions, the step retracts through the matrix exponential, and an
//! Armijo backtracking line search with random restarts guards against the
//! nonconvex landscape.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::par;
use crate::rng;
use crate::sources::{self, SampleMatrix};

/// One grid axis of a landscape scan.
#[derive(Debug, Clone, Copy)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        if self.steps <= 1 {
            return vec![0.5 * (self.lo + self.hi)];
        }
        let h = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps).map(|i| self.lo + h * i as f64).collect()
    }
}

/// Contrast values over a 1- or 2-parameter generator grid.
#[derive(Debug, Clone)]
pub struct Landscape {
    pub delta1: Vec<f64>,
    pub delta2: Vec<f64>,
    /// `values[(i, j)]` is the contrast at `(delta1[i], delta2[j])`.
    pub values: DMatrix<f64>,
}

impl Landscape {
    /// Cell of the smallest value (first hit in row-major order).
    pub fn argmin_cell(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut best_v = f64::INFINITY;
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                if self.values[(i, j)] < best_v {
                    best_v = self.values[(i, j)];
                    best = (i, j);
                }
            }
        }
        best
    }

    /// All cells within `tol` of the minimum.
    pub fn argmin_set(&self, tol: f64) -> Vec<(usize, usize)> {
        let (bi, bj) = self.argmin_cell();
        let best = self.values[(bi, bj)];
        let mut out = Vec::new();
        for i in 0..self.values.nrows() {
            for j in 0..self.values.ncols() {
                if self.values[(i, j)] <= best + tol {
                    out.push((i, j));
                }
            }
        }
        out
    }
}

/// Evaluate a contrast over a generator-parametrized grid of rotations.
///
/// With one generator the second axis degenerates to a single zero; with two
/// generators the full product grid is evaluated, in parallel over cells.
pub fn scan_landscape<F>(
    y: &SampleMatrix,
    generators: &[DMatrix<f64>],
    grids: &[GridSpec],
    contrast_fn: F,
) -> Result<Landscape>
where
    F: Fn(&SampleMatrix) -> Result<f64> + Sync,
{
    if generators.is_empty() || generators.len() > 2 {
        return Err(Error::invalid("landscape scans take 1 or 2 generators"));
    }
    if grids.len() != generators.len() {
        return Err(Error::invalid("one grid per generator is required"));
    }
    let delta1 = grids[0].values();
    let delta2 = if grids.len() == 2 { grids[1].values() } else { vec![0.0] };
    let cells = delta1.len() * delta2.len();
    let cols = delta2.len();

    let values: Vec<Result<f64>> = par::map_indexed(cells, |cell| {
        let i = cell / cols;
        let j = cell % cols;
        let mut sum = &generators[0] * delta1[i];
        if generators.len() == 2 {
            sum += &generators[1] * delta2[j];
        }
        let w = sum.exp();
        let z = sources::mix(y, &w)?;
        contrast_fn(&z)
    });
    let mut grid = DMatrix::zeros(delta1.len(), delta2.len());
    for (cell, v) in values.into_iter().enumerate() {
        grid[(cell / cols, cell % cols)] = v?;
    }
    Ok(Landscape { delta1, delta2, values: grid })
}

/// Options of the orthogonal-matrix minimizer.
#[derive(Debug, Clone, Copy)]
pub struct OptimizeOptions {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub fd_step: f64,
    pub seed: u64,
}

impl Default for OptimizeOptions {
    fn default() -> Self {
        Self { max_iters: 60, tol: 1e-6, restarts: 5, fd_step: 1e-3, seed: 0 }
    }
}

/// Outcome of one minimization.
#[derive(Debug, Clone)]
pub struct OptimizeReport {
    pub w_opt: DMatrix<f64>,
    /// `(iteration, contrast)` trace of the winning restart.
    pub j_trace: Vec<(usize, f64)>,
    pub restarts_used: usize,
    pub converged: bool,
    /// Amari index against a known mixing, when the caller scores it.
    pub amari: Option<f64>,
}

/// Minimize a contrast over orthogonal `W`, acting on whitened samples.
pub fn minimize_stiefel<F>(
    y: &SampleMatrix,
    contrast_fn: F,
    opts: &OptimizeOptions,
) -> Result<OptimizeReport>
where
    F: Fn(&SampleMatrix) -> Result<f64> + Sync,
{
    let m = y.n_variables();
    let generators = sources::elementary_generators(m);
    if generators.is_empty() {
        return Err(Error::invalid("need at least 2 variables to rotate"));
    }
    let eval = |w: &DMatrix<f64>| -> Result<f64> {
        let z = sources::mix(y, w)?;
        contrast_fn(&z)
    };

    let mut best: Option<(f64, OptimizeReport)> = None;
    let mut restarts_used = 0;
    let total_starts = opts.restarts.max(1);
    let mut start_index = 0u64;
    while restarts_used < total_starts {
        restarts_used += 1;
        let w0 = if start_index == 0 {
            DMatrix::identity(m, m)
        } else {
            random_rotation(m, opts.seed, start_index)
        };
        start_index += 1;
        match descend(&w0, &generators, &eval, opts) {
            Ok(report) => {
                let j = report.j_trace.last().map(|t| t.1).unwrap_or(f64::INFINITY);
                if best.as_ref().map_or(true, |(bj, _)| j < *bj) {
                    best = Some((j, report));
                }
            }
            Err(Error::Numerical { .. }) => {
                // non-finite contrast along this trajectory: try a fresh start
                continue;
            }
            Err(e) => return Err(e),
        }
    }

    let (_, mut report) = best.ok_or_else(|| Error::Numerical {
        context: "minimize_stiefel".into(),
        detail: "every restart diverged".into(),
    })?;
    report.restarts_used = restarts_used;
    Ok(report)
}

fn random_rotation(m: usize, seed: u64, index: u64) -> DMatrix<f64> {
    let mut stream = rng::stream(seed, &[0x57A7, index]);
    let mut skew = DMatrix::zeros(m, m);
    for a in 0..m {
        for b in (a + 1)..m {
            let v = std::f64::consts::PI * (stream.gen::<f64>() - 0.5);
            skew[(a, b)] = v;
            skew[(b, a)] = -v;
        }
    }
    skew.exp()
}

fn descend<E>(
    w0: &DMatrix<f64>,
    generators: &[DMatrix<f64>],
    eval: &E,
    opts: &OptimizeOptions,
) -> Result<OptimizeReport>
where
    E: Fn(&DMatrix<f64>) -> Result<f64> + Sync,
{
    let m = w0.nrows();
    let check = |v: f64| -> Result<f64> {
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Numerical { context: "descend".into(), detail: "non-finite contrast".into() })
        }
    };
    let mut w = w0.clone();
    let mut j = check(eval(&w)?)?;
    let mut trace = vec![(0usize, j)];
    let mut converged = false;
    let h = opts.fd_step;

    for iter in 1..=opts.max_iters {
        // finite-difference gradient in the generator directions
        let grads: Vec<Result<f64>> = par::map_slice(generators, |p| {
            let plus = eval(&((p * h).exp() * &w))?;
            let minus = eval(&((p * (-h)).exp() * &w))?;
            Ok((plus - minus) / (2.0 * h))
        });
        let mut grad = Vec::with_capacity(generators.len());
        for g in grads {
            grad.push(check(g?)?);
        }
        let grad_norm2: f64 = grad.iter().map(|g| g * g).sum();
        if grad_norm2.sqrt() < opts.tol {
            converged = true;
            break;
        }
        let mut direction = DMatrix::zeros(m, m);
        for (g, p) in grad.iter().zip(generators) {
            direction += p * (-*g);
        }

        // Armijo backtracking; accepted steps must beat tol/10 so the
        // iteration terminates
        let mut eta = 1.0f64;
        let mut accepted = false;
        for _ in 0..40 {
            // once the first-order decrease scale drops below the acceptance
            // floor no smaller step can qualify
            if eta * grad_norm2 < opts.tol / 10.0 {
                break;
            }
            let candidate = (&direction * eta).exp() * &w;
            let jc = check(eval(&candidate)?)?;
            let decrease = j - jc;
            if decrease >= (1e-4 * eta * grad_norm2).max(opts.tol / 10.0) {
                w = candidate;
                j = jc;
                accepted = true;
                break;
            }
            eta *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        // retraction drift control
        let drift = (w.transpose() * &w - DMatrix::identity(m, m)).amax();
        if drift > 1e-10 {
            let qr = w.clone().qr();
            w = qr.q();
        }
        trace.push((iter, j));
    }

    Ok(OptimizeReport { w_opt: w, j_trace: trace, restarts_used: 1, converged, amari: None })
}

/// Row and column terms of the Amari index of a product matrix.
fn amari_terms(prod: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
    let m = prod.nrows();
    let mut row_terms = Vec::with_capacity(m);
    for i in 0..m {
        let row = prod.row(i);
        let max = row.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max == 0.0 {
            return Err(Error::Numerical {
                context: "amari_error".into(),
                detail: format!("zero row {i} in product"),
            });
        }
        let sum: f64 = row.iter().map(|v| v.abs()).sum();
        row_terms.push(sum / max - 1.0);
    }
    let mut col_terms = Vec::with_capacity(m);
    for j in 0..m {
        let col = prod.column(j);
        let max = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if max == 0.0 {
            return Err(Error::Numerical {
                context: "amari_error".into(),
                detail: format!("zero column {j} in product"),
            });
        }
        let sum: f64 = col.iter().map(|v| v.abs()).sum();
        col_terms.push(sum / max - 1.0);
    }
    Ok((row_terms, col_terms))
}

/// Amari index of `mixing * unmixing`: zero exactly when the product is a
/// scaled permutation, i.e. the unmixing inverts the mixing up to the
/// inherent order and sign ambiguity.
pub fn amari_error(mixing: &DMatrix<f64>, unmixing: &DMatrix<f64>) -> Result<f64> {
    let m = mixing.nrows();
    if mixing.ncols() != m || unmixing.nrows() != m || unmixing.ncols() != m {
        return Err(Error::dim("amari_error needs square matrices of equal size"));
    }
    let prod = mixing * unmixing;
    let (row_terms, col_terms) = amari_terms(&prod)?;
    let rows: f64 = row_terms.iter().sum();
    let cols: f64 = col_terms.iter().sum();
    Ok((rows + cols) / (2.0 * m as f64))
}

/// Pearson correlation of every row of `s1` with every row of `s2`.
pub fn correlation_matrix(s1: &SampleMatrix, s2: &SampleMatrix) -> Result<DMatrix<f64>> {
    if s1.n_samples() != s2.n_samples() {
        return Err(Error::dim("correlation needs equal sample counts"));
    }
    let n = s1.n_samples() as f64;
    let stats = |s: &SampleMatrix, i: usize| -> Result<(Vec<f64>, f64)> {
        let row = s.row_vec(i);
        let mean = row.iter().sum::<f64>() / n;
        let centered: Vec<f64> = row.iter().map(|v| v - mean).collect();
        let var: f64 = centered.iter().map(|v| v * v).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::Numerical {
                context: "correlation_matrix".into(),
                detail: format!("zero-variance row {i}"),
            });
        }
        Ok((centered, var.sqrt()))
    };
    let mut out = DMatrix::zeros(s1.n_variables(), s2.n_variables());
    for i in 0..s1.n_variables() {
        let (ci, si) = stats(s1, i)?;
        for j in 0..s2.n_variables() {
            let (cj, sj) = stats(s2, j)?;
            let cov: f64 = ci.iter().zip(&cj).map(|(a, b)| a * b).sum::<f64>() / n;
            out[(i, j)] = cov / (si * sj);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast::{self, ContrastParams};
    use crate::preprocess;
    use crate::sources::{Distribution, SourceSpec};
    use approx::assert_relative_eq;

    fn neg_log_det(z: &SampleMatrix) -> Result<f64> {
        contrast::contrast_pipeline(z, &ContrastParams::default()).map(|v| v.neg_log_det)
    }

    fn whitened_sources(dists: Vec<Distribution>, n: usize, seed: u64) -> SampleMatrix {
        let s = sources::sample_sources(&SourceSpec::new(dists, n, seed)).unwrap();
        preprocess::whiten(&s).unwrap().0
    }

    #[test]
    fn grid_values_and_degenerate_step() {
        let g = GridSpec { lo: -1.0, hi: 1.0, steps: 5 };
        assert_eq!(g.values(), vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
        let single = GridSpec { lo: -1.0, hi: 1.0, steps: 1 };
        assert_eq!(single.values(), vec![0.0]);
    }

    #[test]
    fn scan_independent_sources_min_at_center() {
        let y = whitened_sources(vec![Distribution::Uniform, Distribution::Laplace], 500, 3);
        let gens = sources::elementary_generators(2);
        let grid = GridSpec { lo: -std::f64::consts::FRAC_PI_4, hi: std::f64::consts::FRAC_PI_4, steps: 9 };
        let scape = scan_landscape(&y, &gens, &[grid], neg_log_det).unwrap();
        let (i, j) = scape.argmin_cell();
        assert_eq!(j, 0);
        assert_eq!(i, 4, "argmin at delta = {}", scape.delta1[i]);
    }

    #[test]
    fn scan_two_generators_min_at_origin() {
        let y = whitened_sources(
            vec![Distribution::Uniform, Distribution::Laplace, Distribution::Exponential],
            300,
            5,
        );
        let gens = sources::elementary_generators(3);
        let grid = GridSpec { lo: -0.6, hi: 0.6, steps: 7 };
        let scape =
            scan_landscape(&y, &gens[..2], &[grid, grid], neg_log_det).unwrap();
        let (i, j) = scape.argmin_cell();
        assert_eq!((i, j), (3, 3), "argmin at ({}, {})", scape.delta1[i], scape.delta2[j]);
    }

    #[test]
    fn scan_rejects_too_many_generators() {
        let y = whitened_sources(vec![Distribution::Uniform, Distribution::Laplace], 64, 7);
        let gens = sources::elementary_generators(3);
        let grid = GridSpec { lo: -1.0, hi: 1.0, steps: 3 };
        assert!(scan_landscape(&y, &gens, &[grid, grid, grid], neg_log_det).is_err());
    }

    #[test]
    fn single_evaluation_grid() {
        let y = whitened_sources(vec![Distribution::Uniform, Distribution::Laplace], 128, 9);
        let gens = sources::elementary_generators(2);
        let grid = GridSpec { lo: -0.3, hi: 0.3, steps: 1 };
        let scape = scan_landscape(&y, &gens, &[grid], neg_log_det).unwrap();
        assert_eq!(scape.values.shape(), (1, 1));
    }

    #[test]
    fn minimize_recovers_rotation() {
        let s = sources::sample_sources(&SourceSpec::new(
            vec![Distribution::Uniform, Distribution::Uniform],
            1000,
            11,
        ))
        .unwrap();
        let theta = 0.45f64;
        let a = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let x = sources::mix(&s, &a).unwrap();
        let (y, model) = preprocess::whiten(&x).unwrap();
        let opts = OptimizeOptions {
            restarts: 2,
            max_iters: 30,
            tol: 1e-5,
            seed: 1,
            ..Default::default()
        };
        let report = minimize_stiefel(&y, neg_log_det, &opts).unwrap();

        // score the effective unmixing against the known mixing
        let unmix = &report.w_opt * &model.inv_sqrt;
        let err = amari_error(&unmix, &a).unwrap();
        assert!(err <= 0.15, "Amari index {err}");

        // accepted steps never increase the contrast
        for pair in report.j_trace.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-12);
        }
    }

    #[test]
    fn restart_from_optimum_terminates_quickly() {
        let y = whitened_sources(vec![Distribution::Uniform, Distribution::Laplace], 600, 13);
        let opts = OptimizeOptions { restarts: 1, max_iters: 30, seed: 2, ..Default::default() };
        let first = minimize_stiefel(&y, neg_log_det, &opts).unwrap();
        // re-minimize starting from the found optimum via rotated samples
        let rotated = sources::mix(&y, &first.w_opt).unwrap();
        let second = minimize_stiefel(&rotated, neg_log_det, &opts).unwrap();
        assert!(second.j_trace.len() <= 3, "took {} iterations", second.j_trace.len());
        assert!(second.converged);
    }

    #[test]
    fn gaussian_pair_makes_no_separation_claim() {
        let y = whitened_sources(vec![Distribution::Gaussian, Distribution::Gaussian], 400, 15);
        let opts = OptimizeOptions { restarts: 1, max_iters: 15, seed: 3, ..Default::default() };
        let report = minimize_stiefel(&y, neg_log_det, &opts).unwrap();
        let j_final = report.j_trace.last().unwrap().1;
        assert!(j_final.is_finite());
    }

    #[test]
    fn amari_zero_iff_scaled_permutation() {
        // permutation times diagonal scores zero
        let p = DMatrix::from_row_slice(3, 3, &[0.0, 2.0, 0.0, 0.0, 0.0, -0.5, 3.0, 0.0, 0.0]);
        let id = DMatrix::identity(3, 3);
        assert_relative_eq!(amari_error(&p, &id).unwrap(), 0.0, epsilon = 1e-14);

        let ones = DMatrix::from_element(2, 2, 1.0);
        assert_relative_eq!(amari_error(&ones, &DMatrix::identity(2, 2)).unwrap(), 1.0);
    }

    #[test]
    fn amari_row_term_scale_invariant() {
        let prod = DMatrix::from_row_slice(2, 2, &[1.0, 0.25, -0.3, 0.9]);
        let (rows, _) = amari_terms(&prod).unwrap();
        let mut scaled = prod.clone();
        scaled.row_mut(0).scale_mut(7.5);
        let (rows_scaled, _) = amari_terms(&scaled).unwrap();
        assert_relative_eq!(rows[0], rows_scaled[0], epsilon = 1e-12);
    }

    #[test]
    fn amari_rejects_zero_row() {
        let z = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 1.0]);
        assert!(amari_error(&z, &DMatrix::identity(2, 2)).is_err());
    }

    #[test]
    fn correlation_cases() {
        let s = sources::sample_sources(&SourceSpec::new(
            vec![Distribution::Uniform, Distribution::Laplace],
            10_000,
            17,
        ))
        .unwrap();
        let c = correlation_matrix(&s, &s).unwrap();
        assert_relative_eq!(c[(0, 0)], 1.0, epsilon = 1e-12);
        assert_relative_eq!(c[(1, 1)], 1.0, epsilon = 1e-12);
        assert!(c[(0, 1)].abs() < 0.05);

        let neg = SampleMatrix::new(-s.data().clone()).unwrap();
        let cn = correlation_matrix(&s, &neg).unwrap();
        assert_relative_eq!(cn[(0, 0)], -1.0, epsilon = 1e-12);

        let konst = SampleMatrix::new(DMatrix::from_row_slice(1, 4, &[2.0, 2.0, 2.0, 2.0])).unwrap();
        let svar = SampleMatrix::new(DMatrix::from_row_slice(1, 4, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        assert!(correlation_matrix(&konst, &svar).is_err());
    }
}
