//! Centering, covariance estimation, whitening, and bounded perturbations of
//! the whitening transform.
//!
//! The perturbation model injects an operator-norm error directly on the
//! inverse square root of the covariance: `M~^{-1/2} = M^{-1/2} + eps2' * E`
//! with `E` symmetric, `||E||_2 = 1`, and `eps2'` drawn just below the budget,
//! so `||M~^{-1/2} - M^{-1/2}||_2 < eps2` holds by construction.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::sources::SampleMatrix;

/// Relative eigenvalue floor below which whitening refuses to invert.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Covariance, its inverse square root, and an optional perturbed variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WhiteningModel {
    /// Per-variable sample means of the input.
    pub mean: DVector<f64>,
    /// Sample covariance of the centered input.
    pub covariance: DMatrix<f64>,
    /// Symmetric inverse square root of the covariance.
    pub inv_sqrt: DMatrix<f64>,
    /// Perturbed inverse square root, when a perturbation has been attached.
    pub perturbed_inv_sqrt: Option<DMatrix<f64>>,
    /// Operator-norm budget of the attached perturbation (0 when none).
    pub eps2: f64,
    /// Seed used to draw the perturbation direction.
    pub seed: Option<u64>,
    /// Condition number of the covariance.
    pub mu_m: f64,
    /// Symmetric unit-norm perturbation direction, when attached.
    pub direction: Option<DMatrix<f64>>,
    /// Largest centered input magnitude seen when the model was fitted.
    pub max_centered_abs: f64,
}

impl WhiteningModel {
    /// The transform actually applied: perturbed when present and requested.
    pub fn transform(&self, use_perturbed: bool) -> &DMatrix<f64> {
        match (&self.perturbed_inv_sqrt, use_perturbed) {
            (Some(p), true) => p,
            _ => &self.inv_sqrt,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map_err(|e| Error::Numerical { context: "whitening model json".into(), detail: e.to_string() })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::Numerical { context: "whitening model json".into(), detail: e.to_string() })
    }
}

/// Subtract the sample mean from every row.
pub fn center(x: &SampleMatrix) -> SampleMatrix {
    let mut data = x.data().clone();
    for mut row in data.row_iter_mut() {
        let mu = row.iter().sum::<f64>() / row.len() as f64;
        row.iter_mut().for_each(|v| *v -= mu);
    }
    SampleMatrix::with_labels(data, x.row_labels().map(|l| l.to_vec()))
        .expect("centering preserves shape and finiteness")
}

/// Sample covariance `(1/N) Xc Xc^T` of centered samples.
pub fn covariance(xc: &SampleMatrix) -> DMatrix<f64> {
    let n = xc.n_samples() as f64;
    let d = xc.data();
    let mut m = d * d.transpose() / n;
    // enforce exact symmetry against rounding
    for i in 0..m.nrows() {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    m
}

/// Symmetric eigendecomposition helper; eigenvalues ascending with vectors as
/// columns, deterministic sign (largest-magnitude component positive).
fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let se = m.clone().symmetric_eigen();
    let k = se.eigenvalues.len();
    let mut idx: Vec<usize> = (0..k).collect();
    idx.sort_by(|&a, &b| se.eigenvalues[a].partial_cmp(&se.eigenvalues[b]).unwrap());
    let vals = DVector::from_fn(k, |i, _| se.eigenvalues[idx[i]]);
    let mut vecs = DMatrix::zeros(k, k);
    for (col, &src) in idx.iter().enumerate() {
        let mut v: DVector<f64> = se.eigenvectors.column(src).into();
        let mut best = 0;
        for r in 1..k {
            if v[r].abs() > v[best].abs() {
                best = r;
            }
        }
        if v[best] < 0.0 {
            v.neg_mut();
        }
        vecs.set_column(col, &v);
    }
    (vals, vecs)
}

/// Spectral norm of a symmetric matrix.
pub fn sym_norm2(m: &DMatrix<f64>) -> f64 {
    let (vals, _) = sym_eigen(m);
    vals.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Whiten samples: returns `Y` with unit sample covariance and the model used.
///
/// The input is centered internally; the recorded mean makes the transform
/// reproducible on raw data. Errors when the covariance has an eigenvalue
/// below `EIGENVALUE_FLOOR` times the largest.
pub fn whiten(x: &SampleMatrix) -> Result<(SampleMatrix, WhiteningModel)> {
    let m = x.n_variables();
    let mean = DVector::from_fn(m, |i, _| {
        x.data().row(i).iter().sum::<f64>() / x.n_samples() as f64
    });
    let xc = center(x);
    let cov = covariance(&xc);
    let (vals, vecs) = sym_eigen(&cov);
    let lam_max = vals[m - 1];
    if lam_max <= 0.0 {
        return Err(Error::SingularCovariance { index: m - 1, value: lam_max, floor: 0.0 });
    }
    let floor = EIGENVALUE_FLOOR * lam_max;
    for (i, &v) in vals.iter().enumerate() {
        if v < floor {
            return Err(Error::SingularCovariance { index: i, value: v, floor });
        }
    }
    let d_inv_sqrt = DMatrix::from_diagonal(&vals.map(|v| 1.0 / v.sqrt()));
    let inv_sqrt = &vecs * d_inv_sqrt * vecs.transpose();
    let y = SampleMatrix::new(&inv_sqrt * xc.data())?;
    let mu_m = vals[m - 1] / vals[0];
    let max_centered_abs = xc.data().amax();
    let model = WhiteningModel {
        mean,
        covariance: cov,
        inv_sqrt,
        perturbed_inv_sqrt: None,
        eps2: 0.0,
        seed: None,
        mu_m,
        direction: None,
        max_centered_abs,
    };
    Ok((y, model))
}

/// Attach a random symmetric perturbation of operator norm just under `eps2`.
pub fn perturb_whitening(model: &WhiteningModel, eps2: f64, seed: u64) -> Result<WhiteningModel> {
    if !(0.0..0.2).contains(&eps2) {
        return Err(Error::invalid(format!("eps2 must lie in [0, 0.2), got {eps2}")));
    }
    let mut out = model.clone();
    out.eps2 = eps2;
    out.seed = Some(seed);
    if eps2 == 0.0 {
        out.perturbed_inv_sqrt = Some(model.inv_sqrt.clone());
        out.direction = None;
        return Ok(out);
    }
    let m = model.inv_sqrt.nrows();
    let mut stream = rng::stream(seed, &[0x77]);
    let mut e = DMatrix::from_fn(m, m, |_, _| {
        let v: f64 = StandardNormal.sample(&mut stream);
        v
    });
    e = (e.clone() + e.transpose()) * 0.5;
    let norm = sym_norm2(&e);
    if norm == 0.0 {
        return Err(Error::Numerical { context: "perturb_whitening".into(), detail: "degenerate direction".into() });
    }
    e /= norm;
    let eps2_eff = eps2 * (0.9 + 0.1 * stream.gen::<f64>().min(1.0 - 1e-12));
    out.perturbed_inv_sqrt = Some(&model.inv_sqrt + &e * eps2_eff);
    out.direction = Some(e);
    Ok(out)
}

/// Apply `W * M^{-1/2}` (optionally the perturbed variant) to raw samples.
pub fn apply_unmixing(
    x: &SampleMatrix,
    model: &WhiteningModel,
    w: &DMatrix<f64>,
    use_perturbed: bool,
) -> Result<SampleMatrix> {
    let m = x.n_variables();
    if w.nrows() != m || w.ncols() != m {
        return Err(Error::dim("unmixing matrix shape does not match variables"));
    }
    let ortho_resid = (w.transpose() * w - DMatrix::identity(m, m)).amax();
    if ortho_resid > 1e-8 {
        return Err(Error::NotOrthogonal(ortho_resid));
    }
    let transform = w * model.transform(use_perturbed);
    let mut data = x.data().clone();
    for i in 0..m {
        for j in 0..x.n_samples() {
            data[(i, j)] -= model.mean[i];
        }
    }
    SampleMatrix::new(transform * data)
}

/// Condition number of a symmetric positive-definite matrix.
pub fn condition_number(m: &DMatrix<f64>) -> Result<f64> {
    let resid = (m - m.transpose()).amax();
    if resid > 1e-10 * m.amax().max(1.0) {
        return Err(Error::NotSymmetric(resid));
    }
    let (vals, _) = sym_eigen(m);
    let min = vals[0];
    if min <= 0.0 {
        return Err(Error::NotPositiveDefinite(format!("minimal eigenvalue {min:.3e}")));
    }
    Ok(vals[vals.len() - 1] / min)
}
