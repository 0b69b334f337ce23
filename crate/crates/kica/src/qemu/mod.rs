//! Bounded-noise emulation of the measured quantities of the spectral
//! pipeline, and explicit assembly of its oracle and block-encoding unitaries
//! at desk scale.
//!
//! Phase estimation and amplitude estimation are emulated at the level of
//! their output guarantees: eigenvalue readout adds uniform noise bounded by
//! `eps_mu`, overlap readout returns `|mu * <u,u>|` plus uniform noise bounded
//! by `eps_i`, with the sign always lost. Noise draws use per-index
//! counter-based streams, so results are independent of evaluation order and
//! eigenvector sign conventions.

pub mod circuit;

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::contrast::{self, ContrastParams, KappaConvention, RkappaMatrix};
use crate::error::{Error, Result};
use crate::preprocess::{self, WhiteningModel};
use crate::rng;
use crate::sources::SampleMatrix;
use crate::spectral::{self, GramSpectrum};

const TAG_EIG: u64 = 0xE1;
const TAG_OVERLAP: u64 = 0x0F;

/// Which error budget regime is active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseMode {
    /// Budgets `eps_mu = eps_i = xi kappa eps1 / 4`.
    General,
    /// Budgets `eps_mu = kappa eps1 / (4 G)`, `eps_i = eps1 eps2 kappa / 4`.
    NearIndependent,
}

/// Measurement-error model parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub eps1: f64,
    pub eps2: f64,
    pub kappa: f64,
    pub mode: NoiseMode,
    /// Estimate of the minimal eigenvalue of the noiseless matrix; when absent
    /// in general mode, a noiseless pilot evaluation supplies it.
    pub xi_est: Option<f64>,
    /// Overlap-scale constant of the near-independent regime.
    pub g: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn general(eps1: f64, eps2: f64, kappa: f64, seed: u64) -> Self {
        Self { eps1, eps2, kappa, mode: NoiseMode::General, xi_est: None, g: 1.0, seed }
    }

    pub fn near_independent(eps1: f64, eps2: f64, kappa: f64, g: f64, seed: u64) -> Self {
        Self { eps1, eps2, kappa, mode: NoiseMode::NearIndependent, xi_est: None, g, seed }
    }

    /// Readout budgets `(eps_mu, eps_i)` given the minimal eigenvalue estimate.
    pub fn budgets(&self, xi: f64) -> (f64, f64) {
        match self.mode {
            NoiseMode::General => {
                let e = xi * self.kappa * self.eps1 / 4.0;
                (e, e)
            }
            NoiseMode::NearIndependent => (
                self.kappa * self.eps1 / (4.0 * self.g),
                self.eps1 * self.eps2 * self.kappa / 4.0,
            ),
        }
    }

    /// Check the mode-specific hypotheses at matrix dimension `d`.
    pub fn validate(&self, d: usize) -> Result<()> {
        if self.eps1 < 0.0 || self.eps2 < 0.0 {
            return Err(Error::invalid("noise magnitudes must be nonnegative"));
        }
        if !(self.kappa > 0.0) {
            return Err(Error::invalid("kappa must be positive"));
        }
        let d2 = (d * d) as f64;
        match self.mode {
            NoiseMode::General => {
                if self.eps1 > 0.0 && self.eps1 >= 1.0 / d2 {
                    return Err(Error::invalid(format!(
                        "general mode requires eps1 < 1/d^2 = {:.3e}, got {:.3e}",
                        1.0 / d2,
                        self.eps1
                    )));
                }
                if self.eps2 >= 0.2 {
                    return Err(Error::invalid("general mode requires eps2 < 0.2"));
                }
            }
            NoiseMode::NearIndependent => {
                if self.eps1 >= 1.0 {
                    return Err(Error::invalid("near-independent mode requires eps1 < 1"));
                }
                if self.eps2 > 0.0 && self.eps2 >= 1.0 / d2 {
                    return Err(Error::invalid(format!(
                        "near-independent mode requires eps2 < 1/d^2 = {:.3e}, got {:.3e}",
                        1.0 / d2,
                        self.eps2
                    )));
                }
                if !(self.g > 0.0) {
                    return Err(Error::invalid("overlap-scale constant G must be positive"));
                }
            }
        }
        Ok(())
    }
}

/// Eigenvalue readout: each kept `mu` becomes `mu + U(-eps_mu, eps_mu)`;
/// pairs whose noisy value falls below `eps_mu` are discarded.
pub fn emulate_eig_readout(
    spectrum: &GramSpectrum,
    eps_mu: f64,
    seed: u64,
    variable: u64,
) -> Result<GramSpectrum> {
    if !(eps_mu > 0.0) {
        return Err(Error::invalid("eps_mu must be positive"));
    }
    let mut noisy = Vec::with_capacity(spectrum.kept());
    for (k, &mu) in spectrum.kept_mu().iter().enumerate() {
        let mut stream = rng::stream(seed, &[TAG_EIG, variable, k as u64]);
        let tilde = mu + eps_mu * (2.0 * stream.gen::<f64>() - 1.0);
        if tilde >= eps_mu {
            noisy.push((tilde, k));
        }
    }
    Ok(spectrum.with_noisy_mu(noisy))
}

/// Overlap readout: `max(|mu * overlap| + U(-eps_i, eps_i), 0)`. The sign of
/// the overlap is never returned.
pub fn emulate_overlap_readout(
    mu: f64,
    overlap: f64,
    eps_i: f64,
    seed: u64,
    tags: (u64, u64, u64, u64),
) -> Result<f64> {
    if !(eps_i > 0.0) {
        return Err(Error::invalid("eps_i must be positive"));
    }
    let (i, k, j, l) = tags;
    let mut stream = rng::stream(seed, &[TAG_OVERLAP, i, k, j, l]);
    let noise = eps_i * (2.0 * stream.gen::<f64>() - 1.0);
    Ok(((mu * overlap).abs() + noise).max(0.0))
}

/// One noisy evaluation of the determinant contrast, with its error budget
/// bookkeeping.
#[derive(Debug, Clone, Copy)]
pub struct NoisyEvaluation {
    pub noisy_det: f64,
    pub noiseless_det: f64,
    pub relative_error: f64,
    /// Dimension of the overlap matrix (sum of kept counts).
    pub dim: usize,
    /// Minimal eigenvalue of the noiseless matrix.
    pub xi: f64,
    pub eps_mu: f64,
    pub eps_i: f64,
    /// Worst-case additive entry error `(2/kappa)(eps_mu + eps_i)`.
    pub entry_error_cap: f64,
    /// Determinant-perturbation bound `t/(1-t)` with `t = d^2 cap / xi`.
    pub bound: f64,
    pub premise_ok: bool,
}

/// Full noisy pipeline at unmixing `w`.
///
/// The whitening perturbation attached to `model` produces the input samples;
/// the same samples feed both the noiseless reference and the noisy readout,
/// so `relative_error` isolates the measurement error.
pub fn noisy_contrast(
    x: &SampleMatrix,
    model: &WhiteningModel,
    w: &DMatrix<f64>,
    noise: &NoiseSpec,
    params: &ContrastParams,
) -> Result<NoisyEvaluation> {
    if params.convention != KappaConvention::Normalized {
        return Err(Error::invalid(
            "the noisy readout reconstructs normalized-convention entries only",
        ));
    }
    if (params.kappa - noise.kappa).abs() > 1e-15 {
        return Err(Error::invalid("noise spec and contrast params disagree on kappa"));
    }
    params.validate()?;
    let y = preprocess::apply_unmixing(x, model, w, true)?;
    let spectra = spectral::decompose_all(&y, &params.kernel, params.eps_trunc)?;
    noisy_contrast_from_spectra(&spectra, noise, params)
}

/// Noisy evaluation from precomputed (noiseless) spectra.
pub fn noisy_contrast_from_spectra(
    spectra: &[GramSpectrum],
    noise: &NoiseSpec,
    params: &ContrastParams,
) -> Result<NoisyEvaluation> {
    let unsigned = ContrastParams { signed: false, ..*params };
    let reference = contrast::contrast_from_spectra(spectra, &unsigned)?;
    let d = reference.dim;
    let xi = noise.xi_est.unwrap_or(reference.min_eig);
    noise.validate(d)?;
    let (eps_mu, eps_i) = noise.budgets(xi);

    let noiseless_det = reference.det;
    let noisy_det = if noise.eps1 == 0.0 {
        noiseless_det
    } else {
        let r = reconstruct_noisy(spectra, noise, eps_mu, eps_i)?;
        contrast::det_contrast(&r)?
    };

    let relative_error = if noiseless_det != 0.0 {
        ((noisy_det - noiseless_det) / noiseless_det).abs()
    } else {
        f64::INFINITY
    };
    let entry_error_cap = 2.0 / noise.kappa * (eps_mu + eps_i);
    let t = (d * d) as f64 * entry_error_cap / xi;
    let premise_ok = t < 1.0 && xi > 0.0;
    let bound = if premise_ok { t / (1.0 - t) } else { f64::INFINITY };

    Ok(NoisyEvaluation {
        noisy_det,
        noiseless_det,
        relative_error,
        dim: d,
        xi,
        eps_mu,
        eps_i,
        entry_error_cap,
        bound,
        premise_ok,
    })
}

/// Rebuild the unsigned overlap matrix from noisy readouts.
///
/// The matrix keeps the noiseless dimension: pairs whose noisy eigenvalue
/// falls below `eps_mu` keep their identity row and column, their couplings
/// read as zero. Diagonal entries stay exactly 1.
fn reconstruct_noisy(
    spectra: &[GramSpectrum],
    noise: &NoiseSpec,
    eps_mu: f64,
    eps_i: f64,
) -> Result<RkappaMatrix> {
    let kappa = noise.kappa;
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

    // noisy eigenvalues; None marks a discarded pair
    let mut noisy_mu: Vec<Vec<Option<f64>>> = Vec::with_capacity(m);
    for (i, spec) in spectra.iter().enumerate() {
        let mut row = Vec::with_capacity(spec.kept());
        for (k, &mu) in spec.kept_mu().iter().enumerate() {
            let mut stream = rng::stream(noise.seed, &[TAG_EIG, i as u64, k as u64]);
            let tilde = mu + eps_mu * (2.0 * stream.gen::<f64>() - 1.0);
            row.push((tilde >= eps_mu).then_some(tilde));
        }
        noisy_mu.push(row);
    }

    let mut index = Vec::with_capacity(d);
    for (i, &sz) in sizes.iter().enumerate() {
        for k in 0..sz {
            index.push((i, k));
        }
    }

    let mut data = DMatrix::identity(d, d);
    for i in 0..m {
        for j in (i + 1)..m {
            let block = spectral::overlaps(&spectra[i], &spectra[j])?;
            for k in 0..sizes[i] {
                let Some(mu_ik) = noisy_mu[i][k] else { continue };
                for l in 0..sizes[j] {
                    let Some(mu_jl) = noisy_mu[j][l] else { continue };
                    let amp = emulate_overlap_readout(
                        spectra[i].kept_mu()[k],
                        block[(k, l)],
                        eps_i,
                        noise.seed,
                        (i as u64, k as u64, j as u64, l as u64),
                    )?;
                    let v = mu_jl / (mu_jl + kappa / 2.0) * amp / (mu_ik + kappa / 2.0);
                    data[(offsets[i] + k, offsets[j] + l)] = v;
                    data[(offsets[j] + l, offsets[i] + k)] = v;
                }
            }
        }
    }

    Ok(RkappaMatrix::from_assembled(data, index, kappa, false))
}

/// Exact eigensolve followed by fixed-point rounding of the normalized
/// eigenvalues to `r_bits` fraction bits. Stands in for phase estimation.
pub fn eigenphase_readout(k: &DMatrix<f64>, r_bits: u32) -> Result<Vec<f64>> {
    if r_bits == 0 {
        return Err(Error::invalid("r_bits must be at least 1"));
    }
    let spec = spectral::decompose_dense(k, 0.0)?;
    let scale = (1u64 << r_bits) as f64;
    Ok(spec.mu().iter().map(|mu| (mu * scale).round() / scale).collect())
}
