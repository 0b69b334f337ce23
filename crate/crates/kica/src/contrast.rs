//! The regularized overlap matrix `R_kappa`, determinant contrasts, a kurtosis
//! baseline, and a determinant-perturbation bound checker.
//!
//! `R_kappa` is a `d x d` symmetric matrix with identity diagonal blocks (one
//! block per variable) and off-diagonal blocks built from regularized
//! eigenvalue weights and eigenvector overlaps. The signed variant keeps the
//! overlap signs and is positive definite; the unsigned variant stores
//! element-wise absolute values, which is what a measurement-based readout of
//! the overlaps can reconstruct.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gram::KernelSpec;
use crate::par;
use crate::sources::SampleMatrix;
use crate::spectral::{self, GramSpectrum};

/// How the eigenvalue regularization is parametrized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KappaConvention {
    /// Weights `mu / (mu + kappa/2)` on normalized eigenvalues `mu = lambda/N`.
    #[default]
    Normalized,
    /// Weights `lambda / (lambda + kappa)` on raw eigenvalues.
    Raw,
}

impl KappaConvention {
    #[inline]
    pub fn weight(self, mu: f64, n: usize, kappa: f64) -> f64 {
        match self {
            KappaConvention::Normalized => mu / (mu + kappa / 2.0),
            KappaConvention::Raw => {
                let lambda = mu * n as f64;
                lambda / (lambda + kappa)
            }
        }
    }
}

/// Parameters of the contrast pipeline.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ContrastParams {
    pub kernel: KernelSpec,
    pub kappa: f64,
    pub eps_trunc: f64,
    pub signed: bool,
    pub convention: KappaConvention,
}

impl Default for ContrastParams {
    fn default() -> Self {
        Self {
            kernel: KernelSpec::default(),
            kappa: 0.1,
            eps_trunc: 0.1,
            signed: true,
            convention: KappaConvention::Normalized,
        }
    }
}

impl ContrastParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 0.0) {
            return Err(Error::invalid(format!("kappa must be positive, got {}", self.kappa)));
        }
        if self.eps_trunc < 0.0 {
            return Err(Error::invalid("eps_trunc must be nonnegative"));
        }
        Ok(())
    }
}

/// The assembled overlap matrix with its block index map.
#[derive(Debug, Clone)]
pub struct RkappaMatrix {
    data: DMatrix<f64>,
    /// Row index -> (variable, eigenpair within that variable).
    index: Vec<(usize, usize)>,
    kappa: f64,
    signed: bool,
}

impl RkappaMatrix {
    /// Wrap an already-assembled matrix; used by the noise emulation, which
    /// reconstructs entries from measured values.
    pub(crate) fn from_assembled(
        data: DMatrix<f64>,
        index: Vec<(usize, usize)>,
        kappa: f64,
        signed: bool,
    ) -> Self {
        Self { data, index, kappa, signed }
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn index(&self) -> &[(usize, usize)] {
        &self.index
    }

    pub fn dim(&self) -> usize {
        self.data.nrows()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn signed(&self) -> bool {
        self.signed
    }
}

/// Eigenvector overlap blocks for every unordered pair of variables.
#[derive(Debug, Clone)]
pub struct PairOverlaps {
    m: usize,
    blocks: Vec<DMatrix<f64>>,
}

impl PairOverlaps {
    fn pair_slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < j && j < self.m);
        i * self.m - i * (i + 1) / 2 + (j - i - 1)
    }

    /// Overlap block `<u_ik, u_jl>` for `i < j`.
    pub fn block(&self, i: usize, j: usize) -> &DMatrix<f64> {
        &self.blocks[self.pair_slot(i, j)]
    }
}

/// Compute overlap blocks for all pairs, in parallel.
pub fn all_overlaps(spectra: &[GramSpectrum]) -> Result<PairOverlaps> {
    let m = spectra.len();
    let pairs: Vec<(usize, usize)> = (0..m)
        .flat_map(|i| ((i + 1)..m).map(move |j| (i, j)))
        .collect();
    let blocks: Vec<Result<DMatrix<f64>>> =
        par::map_slice(&pairs, |&(i, j)| spectral::overlaps(&spectra[i], &spectra[j]));
    let blocks = blocks.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PairOverlaps { m, blocks })
}

/// Assemble `R_kappa` from spectra and overlap blocks.
///
/// Diagonal blocks are exactly the identity. Off-diagonal entries are
/// `w(mu_ik) w(mu_jl) <u_ik, u_jl>`, with the overlap replaced by its absolute
/// value in unsigned mode.
pub fn build_rkappa(
    spectra: &[GramSpectrum],
    overlaps: &PairOverlaps,
    kappa: f64,
    signed: bool,
    convention: KappaConvention,
) -> Result<RkappaMatrix> {
    if !(kappa > 0.0) {
        return Err(Error::invalid(format!("kappa must be positive, got {kappa}")));
    }
    if overlaps.m != spectra.len() {
        return Err(Error::dim("overlap blocks do not match spectra"));
    }
    let m = spectra.len();
    let sizes: Vec<usize> = spectra.iter().map(|s| s.kept()).collect();
    let offsets: Vec<usize> = sizes
        .iter()
        .scan(0usize, |acc, &s| {
            let here = *acc;
            *acc += s;
            Some(here)
        })
        .collect();
    let d: usize = sizes.iter().sum();

    let mut index = Vec::with_capacity(d);
    for (i, &sz) in sizes.iter().enumerate() {
        for k in 0..sz {
            index.push((i, k));
        }
    }

    let weights: Vec<Vec<f64>> = spectra
        .iter()
        .map(|s| {
            s.kept_mu()
                .iter()
                .map(|&mu| convention.weight(mu, s.n(), kappa))
                .collect()
        })
        .collect();

    let mut data = DMatrix::identity(d, d);
    for i in 0..m {
        for j in (i + 1)..m {
            let block = overlaps.block(i, j);
            if block.nrows() != sizes[i] || block.ncols() != sizes[j] {
                return Err(Error::dim("overlap block shape mismatch"));
            }
            for k in 0..sizes[i] {
                for l in 0..sizes[j] {
                    let o = block[(k, l)];
                    let o = if signed { o } else { o.abs() };
                    let v = weights[i][k] * weights[j][l] * o;
                    data[(offsets[i] + k, offsets[j] + l)] = v;
                    data[(offsets[j] + l, offsets[i] + k)] = v;
                }
            }
        }
    }

    Ok(RkappaMatrix { data, index, kappa, signed })
}

/// Log-determinant of a symmetric positive-definite matrix via Cholesky.
fn chol_log_det(m: &DMatrix<f64>) -> Result<f64> {
    let chol = m
        .clone()
        .cholesky()
        .ok_or_else(|| Error::NotPositiveDefinite("non-positive pivot in factorization".into()))?;
    Ok(2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>())
}

/// (sign, ln |det|) via LU with partial pivoting; handles indefinite input.
fn lu_log_det(m: &DMatrix<f64>) -> (f64, f64) {
    let d = m.nrows();
    let lu = m.clone().lu();
    let sign = lu.determinant().signum();
    if sign == 0.0 {
        return (0.0, f64::NEG_INFINITY);
    }
    let u = lu.u();
    let mut log_abs = 0.0;
    for i in 0..d {
        let p = u[(i, i)];
        if p == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        log_abs += p.abs().ln();
    }
    (sign, log_abs)
}

/// Determinant of `R_kappa`, computed in log space.
///
/// Signed matrices go through a symmetric factorization and fail loudly when a
/// pivot is not positive. Unsigned matrices may be indefinite and take an LU
/// route instead.
pub fn det_contrast(r: &RkappaMatrix) -> Result<f64> {
    if r.signed {
        Ok(chol_log_det(&r.data)?.exp())
    } else {
        let (sign, log_abs) = lu_log_det(&r.data);
        Ok(sign * log_abs.exp())
    }
}

/// `-ln det(R_kappa)`; errors when the determinant is not positive.
pub fn neg_log_det_contrast(r: &RkappaMatrix) -> Result<f64> {
    if r.signed {
        Ok(-chol_log_det(&r.data)?)
    } else {
        let (sign, log_abs) = lu_log_det(&r.data);
        if sign <= 0.0 {
            return Err(Error::Numerical {
                context: "neg_log_det_contrast".into(),
                detail: "determinant is not positive".into(),
            });
        }
        Ok(-log_abs)
    }
}

/// Smallest eigenvalue of the assembled matrix.
pub fn min_eig(r: &RkappaMatrix) -> Result<f64> {
    min_eig_sym(&r.data)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eig_sym(m: &DMatrix<f64>) -> Result<f64> {
    let mref = faer::MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols());
    let evd = mref
        .self_adjoint_eigen(faer::Side::Lower)
        .map_err(|e| Error::Eigensolver(format!("{e:?}")))?;
    let s = evd.S();
    let mut min = f64::INFINITY;
    for i in 0..m.nrows() {
        min = min.min(s[i]);
    }
    Ok(min)
}

/// Value of one full contrast evaluation.
#[derive(Debug, Clone, Copy)]
pub struct ContrastValue {
    pub det: f64,
    pub neg_log_det: f64,
    pub dim: usize,
    pub min_eig: f64,
}

/// Full pipeline: Gram matrices, spectra, overlaps, `R_kappa`, determinant.
pub fn contrast_pipeline(z: &SampleMatrix, params: &ContrastParams) -> Result<ContrastValue> {
    params.validate()?;
    let spectra = spectral::decompose_all(z, &params.kernel, params.eps_trunc)?;
    contrast_from_spectra(&spectra, params)
}

/// Assemble and evaluate the contrast from precomputed spectra.
pub fn contrast_from_spectra(
    spectra: &[GramSpectrum],
    params: &ContrastParams,
) -> Result<ContrastValue> {
    let overlaps = all_overlaps(spectra)?;
    let r = build_rkappa(spectra, &overlaps, params.kappa, params.signed, params.convention)?;
    let det = det_contrast(&r)?;
    let neg_log_det = if det > 0.0 { -det.ln() } else { f64::INFINITY };
    let min_eig = min_eig(&r)?;
    Ok(ContrastValue { det, neg_log_det, dim: r.dim(), min_eig })
}

/// Excess-kurtosis contrast: `E{y^4} - 3 (E{y^2})^2` from sample moments.
pub fn kurtosis_contrast(y: &[f64]) -> Result<f64> {
    if y.len() < 4 {
        return Err(Error::invalid("kurtosis needs at least 4 samples"));
    }
    let n = y.len() as f64;
    let m2 = y.iter().map(|v| v * v).sum::<f64>() / n;
    let m4 = y.iter().map(|v| v.powi(4)).sum::<f64>() / n;
    Ok(m4 - 3.0 * m2 * m2)
}

/// Outcome of the determinant-perturbation inequality check.
#[derive(Debug, Clone, Copy)]
pub struct DetPerturbation {
    /// Relative determinant change `|det(A+B) - det A| / |det A|`.
    pub lhs: f64,
    /// `t / (1 - t)` with `t = d mu_A ||B|| / ||A||`.
    pub rhs: f64,
    /// Whether `t < 1`, the hypothesis under which the bound applies.
    pub premise_ok: bool,
}

/// Evaluate both sides of the determinant perturbation inequality.
pub fn det_perturbation_check(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DetPerturbation> {
    let d = a.nrows();
    if a.ncols() != d || b.nrows() != d || b.ncols() != d {
        return Err(Error::dim("A and B must be square with equal size"));
    }
    let svd_a = a.clone().svd(false, false);
    let smax = svd_a.singular_values.max();
    let smin = svd_a.singular_values.min();
    if smin <= 0.0 || !smin.is_finite() {
        return Err(Error::Numerical {
            context: "det_perturbation_check".into(),
            detail: "A is singular".into(),
        });
    }
    let mu_a = smax / smin;
    let norm_b = b.clone().svd(false, false).singular_values.max();
    let det_a = a.clone().lu().determinant();
    if det_a == 0.0 {
        return Err(Error::Numerical {
            context: "det_perturbation_check".into(),
            detail: "A has zero determinant".into(),
        });
    }
    let det_ab = (a + b).lu().determinant();
    let lhs = ((det_ab - det_a) / det_a).abs();
    let t = d as f64 * mu_a * norm_b / smax;
    let premise_ok = t < 1.0;
    let rhs = if premise_ok { t / (1.0 - t) } else { f64::INFINITY };
    Ok(DetPerturbation { lhs, rhs, premise_ok })
}
