//! Gaussian-kernel Gram matrices and double centering.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Kernel family. Only the Gaussian kernel is shipped; the analysis elsewhere
/// in the crate is specific to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    Gaussian,
}

/// Kernel with bandwidth. The default bandwidth is `1/sqrt(2)`, which makes
/// the exponent exactly `-(x - y)^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub kind: KernelKind,
    pub sigma: f64,
}

impl Default for KernelSpec {
    fn default() -> Self {
        Self { kind: KernelKind::Gaussian, sigma: std::f64::consts::FRAC_1_SQRT_2 }
    }
}

impl KernelSpec {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0) {
            return Err(Error::invalid(format!("kernel bandwidth must be positive, got {sigma}")));
        }
        Ok(Self { kind: KernelKind::Gaussian, sigma })
    }

    /// `exp(-(x - y)^2 / (2 sigma^2))`, in `(0, 1]`.
    #[inline]
    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        (-d * d / (2.0 * self.sigma * self.sigma)).exp()
    }

    /// Derivative of the kernel in its first argument.
    #[inline]
    pub fn deriv_first(&self, x: f64, y: f64) -> f64 {
        self.eval(x, y) * (y - x) / (self.sigma * self.sigma)
    }
}

/// Raw and centered Gram matrices of one sample vector.
#[derive(Debug, Clone)]
pub struct GramPair {
    pub raw: DMatrix<f64>,
    pub centered: DMatrix<f64>,
}

/// Raw Gram matrix `K~[j][k] = K(z_j, z_k)`; symmetric with unit diagonal.
pub fn gram_raw(z: &[f64], spec: &KernelSpec) -> Result<DMatrix<f64>> {
    let n = z.len();
    if n < 2 {
        return Err(Error::dim("gram matrix needs at least 2 samples"));
    }
    let inv = 1.0 / (2.0 * spec.sigma * spec.sigma);
    let mut k = DMatrix::zeros(n, n);
    for j in 0..n {
        k[(j, j)] = 1.0;
        for i in (j + 1)..n {
            let d = z[i] - z[j];
            let v = (-d * d * inv).exp();
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    Ok(k)
}

/// Double centering: subtract row and column means, add back the grand mean.
/// Equivalent to conjugation by `I - 1/N` but costs O(N^2).
pub fn gram_center(raw: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = raw.nrows();
    if raw.ncols() != n {
        return Err(Error::dim("gram matrix must be square"));
    }
    let resid = (raw - raw.transpose()).amax();
    if resid > 1e-10 * raw.amax().max(1.0) {
        return Err(Error::NotSymmetric(resid));
    }
    let mut row_mean = vec![0.0f64; n];
    for j in 0..n {
        row_mean[j] = raw.row(j).iter().sum::<f64>() / n as f64;
    }
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in 0..n {
            out[(i, j)] = raw[(i, j)] - row_mean[i] - row_mean[j] + grand;
        }
    }
    // symmetrize against rounding in the mean subtraction
    for j in 0..n {
        for i in (j + 1)..n {
            let v = 0.5 * (out[(i, j)] + out[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    Ok(out)
}

/// Build both the raw and the centered Gram matrix of one variable.
pub fn gram_pair(z: &[f64], spec: &KernelSpec) -> Result<GramPair> {
    let raw = gram_raw(z, spec)?;
    let centered = gram_center(&raw)?;
    Ok(GramPair { raw, centered })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_point_values() {
        let spec = KernelSpec::default();
        assert_relative_eq!(spec.eval(2.5, 2.5), 1.0);
        assert_relative_eq!(spec.eval(0.0, 1.0), (-1.0f64).exp(), epsilon = 1e-15);
        let unit = KernelSpec::gaussian(1.0).unwrap();
        assert_relative_eq!(unit.eval(1.0, 3.0), (-2.0f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn kernel_rejects_bad_sigma() {
        assert!(KernelSpec::gaussian(0.0).is_err());
        assert!(KernelSpec::gaussian(-1.0).is_err());
    }

    #[test]
    fn gram_raw_small_cases() {
        let spec = KernelSpec::default();
        let k = gram_raw(&[0.0, 0.0], &spec).unwrap();
        assert_relative_eq!(k, DMatrix::from_element(2, 2, 1.0), epsilon = 1e-15);

        let k = gram_raw(&[0.0, 1.0], &spec).unwrap();
        let a = (-1.0f64).exp();
        assert_relative_eq!(k, DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0]), epsilon = 1e-15);
        assert_eq!(k, k.transpose());
    }

    #[test]
    fn center_two_point_closed_form() {
        // centered [[1,a],[a,1]] = ((1-a)/2) [[1,-1],[-1,1]]
        let a = (-1.0f64).exp();
        let raw = DMatrix::from_row_slice(2, 2, &[1.0, a, a, 1.0]);
        let c = gram_center(&raw).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]) * ((1.0 - a) / 2.0);
        assert_relative_eq!(c, want, epsilon = 1e-14);
    }

    #[test]
    fn center_annihilates_constants() {
        let raw = DMatrix::from_element(5, 5, 1.0);
        let c = gram_center(&raw).unwrap();
        assert!(c.amax() < 1e-14);
    }

    #[test]
    fn center_matches_projection_product() {
        let spec = KernelSpec::default();
        let mut r = crate::rng::stream(5, &[0]);
        use rand::Rng;
        for n in [8usize, 33, 64] {
            let z: Vec<f64> = (0..n).map(|_| 3.0 * (r.gen::<f64>() - 0.5)).collect();
            let raw = gram_raw(&z, &spec).unwrap();
            let c = gram_center(&raw).unwrap();
            let p = DMatrix::identity(n, n) - DMatrix::from_element(n, n, 1.0 / n as f64);
            let want = &p * &raw * &p;
            assert!((c - want).amax() < 1e-12);
        }
    }

    #[test]
    fn centered_gram_is_psd() {
        let spec = KernelSpec::default();
        let mut r = crate::rng::stream(6, &[0]);
        use rand::Rng;
        let n = 40;
        let z: Vec<f64> = (0..n).map(|_| 2.0 * (r.gen::<f64>() - 0.5)).collect();
        let c = gram_pair(&z, &spec).unwrap().centered;
        let eig = c.symmetric_eigen();
        let min = eig.eigenvalues.min();
        assert!(min >= -1e-10 * n as f64, "min eigenvalue {min}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn prop_center_idempotent_and_zero_sums(seed in 0u64..500, n in 4usize..24) {
            let spec = KernelSpec::default();
            let mut r = crate::rng::stream(seed, &[9]);
            use rand::Rng;
            let z: Vec<f64> = (0..n).map(|_| 4.0 * (r.gen::<f64>() - 0.5)).collect();
            let c = gram_pair(&z, &spec).unwrap().centered;
            for i in 0..n {
                let row_sum: f64 = c.row(i).iter().sum();
                prop_assert!(row_sum.abs() <= 1e-10, "row sum {}", row_sum);
            }
            let again = gram_center(&c).unwrap();
            prop_assert!((again - &c).amax() <= 1e-12);
        }
    }
}
