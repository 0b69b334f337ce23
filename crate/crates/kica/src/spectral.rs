//! Symmetric eigendecomposition of centered Gram matrices with low-rank
//! truncation, eigenvector overlaps, and quantum-state norms.
//!
//! Truncation keeps normalized eigenvalues `mu = lambda / N >= eps_trunc / 2`,
//! so everything at or above `eps_trunc` is guaranteed to survive.
//!
//! Two routes produce a [`GramSpectrum`]:
//!
//! - [`decompose_dense`]: full dense solve, always available, the reference.
//! - a blocked subspace iteration that converges exactly the kept eigenpairs
//!   (plus the leading discarded eigenvalue) to residual tolerance near machine
//!   precision. Gram spectra of smooth kernels decay geometrically, so a
//!   handful of GEMM iterations suffices, turning an O(N^3) solve into
//!   O(N^2 p). [`decompose`] picks the route by size; both are cross-checked
//!   against each other in the test suite.

use faer::{Mat, MatRef, Side};
use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};
use crate::gram::{self, KernelSpec};
use crate::par;
use crate::rng;
use crate::sources::SampleMatrix;

/// Matrices at or below this size always take the dense route.
const DENSE_CUTOFF: usize = 320;
/// Starting block width for the subspace iteration.
const BLOCK_START: usize = 16;
const MAX_SWEEPS: usize = 80;

/// Eigenvalues and kept eigenvectors of one centered Gram matrix.
#[derive(Debug, Clone)]
pub struct GramSpectrum {
    /// Normalized eigenvalues `lambda / N`, descending. The dense route stores
    /// the full spectrum; the iterative route stores the kept eigenvalues plus
    /// the leading discarded one.
    mu: Vec<f64>,
    /// Eigenvectors of the first `kept` eigenvalues, as columns (length N).
    vectors: DMatrix<f64>,
    kept: usize,
    eps_trunc: f64,
    n: usize,
    /// `trace(K)/N`, equal to the sum of all normalized eigenvalues.
    trace_mu: f64,
}

impl GramSpectrum {
    /// Assemble a spectrum from parts; validates ordering and orthonormality.
    pub fn from_parts(
        mu: Vec<f64>,
        vectors: DMatrix<f64>,
        kept: usize,
        eps_trunc: f64,
    ) -> Result<Self> {
        let n = vectors.nrows();
        if kept > mu.len() || vectors.ncols() != kept {
            return Err(Error::dim("kept count does not match vectors"));
        }
        if mu.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::invalid("eigenvalues must be descending"));
        }
        let gram = vectors.transpose() * &vectors;
        let resid = (gram - DMatrix::identity(kept, kept)).amax();
        if resid > 1e-8 {
            return Err(Error::NotOrthogonal(resid));
        }
        let trace_mu = mu.iter().sum();
        Ok(GramSpectrum { mu, vectors, kept, eps_trunc, n, trace_mu })
    }

    /// All computed normalized eigenvalues, descending.
    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    /// The kept (non-truncated) normalized eigenvalues.
    pub fn kept_mu(&self) -> &[f64] {
        &self.mu[..self.kept]
    }

    /// Kept eigenvectors as columns of an `N x kept` matrix.
    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn kept(&self) -> usize {
        self.kept
    }

    pub fn eps_trunc(&self) -> f64 {
        self.eps_trunc
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn trace_mu(&self) -> f64 {
        self.trace_mu
    }

    /// Largest discarded normalized eigenvalue, when any was computed.
    pub fn discarded_max(&self) -> Option<f64> {
        self.mu.get(self.kept).copied()
    }

    /// Replace eigenvalues and drop pairs, preserving vector alignment.
    /// Used by the measurement-noise emulation.
    pub(crate) fn with_noisy_mu(&self, noisy: Vec<(f64, usize)>) -> GramSpectrum {
        // noisy: (mu, original index), any order; re-sorted descending
        let mut pairs = noisy;
        pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap());
        let kept = pairs.len();
        let mut vectors = DMatrix::zeros(self.n, kept);
        for (col, &(_, src)) in pairs.iter().enumerate() {
            vectors.set_column(col, &self.vectors.column(src));
        }
        GramSpectrum {
            mu: pairs.iter().map(|p| p.0).collect(),
            vectors,
            kept,
            eps_trunc: self.eps_trunc,
            n: self.n,
            trace_mu: self.trace_mu,
        }
    }
}

fn check_square_symmetric(k: &DMatrix<f64>) -> Result<usize> {
    let n = k.nrows();
    if k.ncols() != n || n == 0 {
        return Err(Error::dim("matrix must be square and nonempty"));
    }
    let resid = (k - k.transpose()).amax();
    if resid > 1e-9 * k.amax().max(1.0) {
        return Err(Error::NotSymmetric(resid));
    }
    Ok(n)
}

fn to_faer(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

/// Fix eigenvector signs: largest-magnitude component positive, ties broken by
/// the lowest index. Keeps overlaps reproducible across eigensolvers.
fn canonical_sign(vectors: &mut DMatrix<f64>) {
    for mut col in vectors.column_iter_mut() {
        let mut best = 0;
        for r in 1..col.len() {
            if col[r].abs() > col[best].abs() {
                best = r;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Full dense symmetric eigendecomposition; reference route.
pub fn decompose_dense(k: &DMatrix<f64>, eps_trunc: f64) -> Result<GramSpectrum> {
    let n = check_square_symmetric(k)?;
    if eps_trunc < 0.0 {
        return Err(Error::invalid("eps_trunc must be nonnegative"));
    }
    let evd = to_faer(k)
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S();
    let u = evd.U();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
    let mu: Vec<f64> = idx.iter().map(|&i| s[i] / n as f64).collect();
    // eps_trunc == 0 means no truncation; tiny negative rounding eigenvalues stay
    let kept = if eps_trunc == 0.0 {
        n
    } else {
        mu.iter().take_while(|&&m| m >= eps_trunc / 2.0).count()
    };
    let mut vectors = DMatrix::from_fn(n, kept, |r, c| u[(r, idx[c])]);
    canonical_sign(&mut vectors);
    let trace_mu = k.trace() / n as f64;
    Ok(GramSpectrum { mu, vectors, kept, eps_trunc, n, trace_mu })
}

/// Decompose a centered Gram matrix, truncating at `eps_trunc / 2`.
///
/// Small matrices and `eps_trunc == 0` use the dense route; larger truncated
/// problems run the blocked subspace iteration and fall back to the dense
/// route if the kept set stops being low-rank.
pub fn decompose(k: &DMatrix<f64>, eps_trunc: f64) -> Result<GramSpectrum> {
    let n = check_square_symmetric(k)?;
    if eps_trunc < 0.0 {
        return Err(Error::invalid("eps_trunc must be nonnegative"));
    }
    if n <= DENSE_CUTOFF || eps_trunc == 0.0 {
        return decompose_dense(k, eps_trunc);
    }
    match subspace_topk(k, SubspaceTarget::Floor(n as f64 * eps_trunc / 2.0)) {
        Ok(Some((lambdas, vectors))) => {
            let kept = lambdas
                .iter()
                .take_while(|&&l| l / n as f64 >= eps_trunc / 2.0)
                .count();
            let mut vectors = vectors.columns(0, kept).into_owned();
            canonical_sign(&mut vectors);
            let mu: Vec<f64> = lambdas.iter().map(|l| l / n as f64).collect();
            let trace_mu = k.trace() / n as f64;
            Ok(GramSpectrum { mu, vectors, kept, eps_trunc, n, trace_mu })
        }
        Ok(None) => decompose_dense(k, eps_trunc),
        Err(e) => Err(e),
    }
}

/// Decompose keeping exactly the `count` leading eigenpairs (no threshold).
pub fn decompose_top(k: &DMatrix<f64>, count: usize) -> Result<GramSpectrum> {
    let n = check_square_symmetric(k)?;
    let count = count.min(n);
    if count == 0 {
        return Err(Error::invalid("count must be positive"));
    }
    if n <= DENSE_CUTOFF {
        let mut spec = decompose_dense(k, 0.0)?;
        spec.kept = count;
        spec.vectors = spec.vectors.columns(0, count).into_owned();
        return Ok(spec);
    }
    match subspace_topk(k, SubspaceTarget::Count(count))? {
        Some((lambdas, vectors)) => {
            let mut vectors = vectors.columns(0, count).into_owned();
            canonical_sign(&mut vectors);
            let mu: Vec<f64> = lambdas.iter().map(|l| l / n as f64).collect();
            let trace_mu = k.trace() / n as f64;
            Ok(GramSpectrum { mu, vectors, kept: count, eps_trunc: 0.0, n, trace_mu })
        }
        None => {
            let mut spec = decompose_dense(k, 0.0)?;
            spec.kept = count;
            spec.vectors = spec.vectors.columns(0, count).into_owned();
            Ok(spec)
        }
    }
}

enum SubspaceTarget {
    /// Converge every eigenvalue at or above the floor, plus the next one.
    Floor(f64),
    /// Converge exactly this many leading eigenpairs, plus the next value.
    Count(usize),
}

/// Blocked subspace iteration with Rayleigh-Ritz extraction.
///
/// Returns `Ok(None)` when the wanted set is not low-rank enough to be worth
/// iterating (the caller then takes the dense route). Eigenpairs are accepted
/// when their residual `||K x - theta x||` drops to the scaled machine floor,
/// so accepted pairs match the dense solve to rounding.
fn subspace_topk(
    k: &DMatrix<f64>,
    target: SubspaceTarget,
) -> Result<Option<(Vec<f64>, DMatrix<f64>)>> {
    let n = k.nrows();
    let kf = to_faer(k);
    let scale = k.amax().max(1e-300);
    let mut p = match &target {
        SubspaceTarget::Floor(_) => BLOCK_START.min(n),
        SubspaceTarget::Count(c) => (c + 6).max(BLOCK_START).min(n),
    };

    'grow: loop {
        if p > n / 3 {
            return Ok(None);
        }
        let mut v = seeded_block(n, p);
        orthonormalize(&mut v);
        for _sweep in 0..MAX_SWEEPS {
            // Rayleigh-Ritz on the current subspace
            let kv = kf * v.as_ref();
            let h_small = v.transpose() * kv.as_ref();
            let h_sym = Mat::from_fn(p, p, |i, j| 0.5 * (h_small[(i, j)] + h_small[(j, i)]));
            let evd = h_sym
                .self_adjoint_eigen(Side::Lower)
                .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
            let s = evd.S();
            let mut idx: Vec<usize> = (0..p).collect();
            idx.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap());
            let theta: Vec<f64> = idx.iter().map(|&i| s[i]).collect();
            let rot = Mat::from_fn(p, p, |i, j| evd.U()[(i, idx[j])]);
            let x = &v * &rot;

            let wanted = match &target {
                SubspaceTarget::Floor(floor) => theta.iter().filter(|&&t| t >= *floor).count(),
                SubspaceTarget::Count(c) => *c,
            };
            if wanted + 2 > p {
                if p >= n / 3 {
                    return Ok(None);
                }
                p = (2 * p).min(n);
                continue 'grow;
            }

            // residuals of the wanted pairs and the first discarded one
            let kx = kf * x.as_ref();
            let need = wanted + 1;
            let mut max_resid = 0.0f64;
            for c in 0..need {
                let mut r2 = 0.0;
                for r in 0..n {
                    let d = kx[(r, c)] - theta[c] * x[(r, c)];
                    r2 += d * d;
                }
                max_resid = max_resid.max(r2.sqrt());
            }
            if max_resid <= 1e-12 * scale * (n as f64).sqrt() {
                let lambdas: Vec<f64> = theta[..need].to_vec();
                let vectors = DMatrix::from_fn(n, need, |r, c| x[(r, c)]);
                return Ok(Some((lambdas, vectors)));
            }

            // next subspace from the already-computed K * X
            v = kx;
            orthonormalize(&mut v);
        }
        // no convergence at this width; the dense route settles it
        return Ok(None);
    }
}

fn seeded_block(n: usize, p: usize) -> Mat<f64> {
    // fixed internal seed: the iteration must be reproducible across runs
    let mut stream = rng::stream(0xD5A1_BEE5, &[n as u64, p as u64]);
    Mat::from_fn(n, p, |_, _| stream.gen::<f64>() - 0.5)
}

fn orthonormalize(v: &mut Mat<f64>) {
    let q = v.qr().compute_thin_Q();
    *v = q;
}

/// Pairwise eigenvector overlaps `<u_ik, u_jl>` for the kept pairs.
pub fn overlaps(si: &GramSpectrum, sj: &GramSpectrum) -> Result<DMatrix<f64>> {
    if si.n != sj.n {
        return Err(Error::dim(format!(
            "eigenvector lengths differ: {} vs {}",
            si.n, sj.n
        )));
    }
    Ok(si.vectors.transpose() * &sj.vectors)
}

/// Norm of the Gram-matrix amplitude state: `||K||_F / N`.
pub fn state_norm_k(k: &DMatrix<f64>) -> f64 {
    k.norm() / k.nrows() as f64
}

/// Norm of the paired-spectrum state:
/// `sqrt(sum_{k,l kept} mu_ik^2 <u_jl, u_ik>^2)`.
pub fn state_norm_psi(si: &GramSpectrum, sj: &GramSpectrum) -> Result<f64> {
    if (si.eps_trunc - sj.eps_trunc).abs() > 0.0 {
        return Err(Error::invalid("spectra must share the truncation threshold"));
    }
    let o = overlaps(si, sj)?;
    let mut total = 0.0;
    for (k, &mu) in si.kept_mu().iter().enumerate() {
        for l in 0..sj.kept() {
            let amp = mu * o[(k, l)];
            total += amp * amp;
        }
    }
    Ok(total.sqrt())
}

/// Decompose the Gram matrix of every variable of `z`, in parallel.
pub fn decompose_all(
    z: &SampleMatrix,
    kernel: &KernelSpec,
    eps_trunc: f64,
) -> Result<Vec<GramSpectrum>> {
    let m = z.n_variables();
    let results: Vec<Result<GramSpectrum>> = par::map_indexed(m, |i| {
        let row = z.row_vec(i);
        let pair = gram::gram_pair(&row, kernel)?;
        decompose(&pair.centered, eps_trunc)
    });
    results.into_iter().collect()
}
