//! Synthetic independent components, linear mixing, and generator-parametrized
//! rotations.
//!
//! Every shipped distribution is standardized analytically (exact mean and
//! variance, not per-sample estimates), so sources are zero-mean unit-variance
//! in distribution. Sample generation is chunked with one random stream per
//! `(seed, row, chunk)`, which makes parallel generation deterministic.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{Distribution as _, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::rng;

const CHUNK: usize = 8192;

/// A 1-D source distribution, standardized to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Distribution {
    /// Uniform on `[-sqrt(3), sqrt(3)]`.
    Uniform,
    /// Laplace with scale `1/sqrt(2)`.
    Laplace,
    /// Exponential with rate 1, shifted to zero mean.
    Exponential,
    /// Standard normal. Included for degeneracy tests; not separable by ICA.
    Gaussian,
    /// Mixture of normals, standardized by its analytic mean and variance.
    GaussianMixture {
        means: Vec<f64>,
        stds: Vec<f64>,
        weights: Vec<f64>,
    },
}

impl Distribution {
    /// Parse a CLI-style name: `uniform`, `laplace`, `exponential`, `gaussian`,
    /// or `gmix:mean,std,weight;mean,std,weight;...`.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Distribution::Uniform),
            "laplace" => Ok(Distribution::Laplace),
            "exponential" => Ok(Distribution::Exponential),
            "gaussian" => Ok(Distribution::Gaussian),
            other => {
                if let Some(spec) = other.strip_prefix("gmix:") {
                    let mut means = Vec::new();
                    let mut stds = Vec::new();
                    let mut weights = Vec::new();
                    for comp in spec.split(';') {
                        let parts: Vec<&str> = comp.split(',').collect();
                        if parts.len() != 3 {
                            return Err(Error::UnknownDistribution(other.to_string()));
                        }
                        let parse = |s: &str| {
                            s.trim()
                                .parse::<f64>()
                                .map_err(|_| Error::UnknownDistribution(other.to_string()))
                        };
                        means.push(parse(parts[0])?);
                        stds.push(parse(parts[1])?);
                        weights.push(parse(parts[2])?);
                    }
                    let dist = Distribution::GaussianMixture { means, stds, weights };
                    dist.validate()?;
                    Ok(dist)
                } else {
                    Err(Error::UnknownDistribution(other.to_string()))
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Distribution::GaussianMixture { means, stds, weights } = self {
            if means.is_empty() || means.len() != stds.len() || means.len() != weights.len() {
                return Err(Error::invalid(
                    "gaussian mixture needs equal-length, nonempty means/stds/weights",
                ));
            }
            if weights.iter().any(|&w| w <= 0.0) {
                return Err(Error::invalid("mixture weights must be positive"));
            }
            if stds.iter().any(|&s| s < 0.0) {
                return Err(Error::invalid("mixture stds must be nonnegative"));
            }
            let (_, var) = self.raw_moments();
            if var <= 0.0 {
                return Err(Error::invalid("mixture has zero variance"));
            }
        }
        Ok(())
    }

    /// Mean and variance of the unstandardized distribution.
    fn raw_moments(&self) -> (f64, f64) {
        match self {
            Distribution::Uniform => (0.0, 1.0),
            Distribution::Laplace => (0.0, 1.0),
            Distribution::Exponential => (1.0, 1.0),
            Distribution::Gaussian => (0.0, 1.0),
            Distribution::GaussianMixture { means, stds, weights } => {
                let total: f64 = weights.iter().sum();
                let mean: f64 = means
                    .iter()
                    .zip(weights)
                    .map(|(m, w)| m * w / total)
                    .sum();
                let second: f64 = means
                    .iter()
                    .zip(stds)
                    .zip(weights)
                    .map(|((m, s), w)| (s * s + m * m) * w / total)
                    .sum();
                (mean, second - mean * mean)
            }
        }
    }

    /// Draw one standardized sample.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            Distribution::Uniform => {
                let u: f64 = rng.gen::<f64>();
                (2.0 * u - 1.0) * 3.0_f64.sqrt()
            }
            Distribution::Laplace => {
                // inverse CDF, scale 1/sqrt(2) gives unit variance
                let u: f64 = rng.gen::<f64>() - 0.5;
                let b = std::f64::consts::FRAC_1_SQRT_2;
                -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            Distribution::Exponential => {
                let e: f64 = Exp1.sample(rng);
                e - 1.0
            }
            Distribution::Gaussian => StandardNormal.sample(rng),
            Distribution::GaussianMixture { means, stds, weights } => {
                let total: f64 = weights.iter().sum();
                let mut pick = rng.gen::<f64>() * total;
                let mut idx = 0;
                for (i, w) in weights.iter().enumerate() {
                    idx = i;
                    if pick < *w {
                        break;
                    }
                    pick -= w;
                }
                let z: f64 = StandardNormal.sample(rng);
                let raw = means[idx] + stds[idx] * z;
                let (mean, var) = self.raw_moments();
                (raw - mean) / var.sqrt()
            }
        }
    }
}

/// Specification of a set of independent sources.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SourceSpec {
    pub distributions: Vec<Distribution>,
    pub n_samples: usize,
    pub seed: u64,
}

impl SourceSpec {
    pub fn new(distributions: Vec<Distribution>, n_samples: usize, seed: u64) -> Self {
        Self { distributions, n_samples, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.distributions.is_empty() {
            return Err(Error::invalid("at least one distribution is required"));
        }
        if self.n_samples < 2 {
            return Err(Error::invalid("n_samples must be at least 2"));
        }
        for d in &self.distributions {
            d.validate()?;
        }
        Ok(())
    }
}

/// An `m x N` matrix of samples; rows are variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    data: DMatrix<f64>,
    row_labels: Option<Vec<String>>,
}

impl SampleMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        Self::with_labels(data, None)
    }

    pub fn with_labels(data: DMatrix<f64>, row_labels: Option<Vec<String>>) -> Result<Self> {
        if data.nrows() < 1 || data.ncols() < 2 {
            return Err(Error::dim(format!(
                "sample matrix must be at least 1 x 2, got {} x {}",
                data.nrows(),
                data.ncols()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample matrix contains non-finite entries"));
        }
        if let Some(labels) = &row_labels {
            if labels.len() != data.nrows() {
                return Err(Error::dim("row label count does not match row count"));
            }
        }
        Ok(Self { data, row_labels })
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn n_variables(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    /// Copy of row `i` as a contiguous vector.
    pub fn row_vec(&self, i: usize) -> Vec<f64> {
        self.data.row(i).iter().copied().collect()
    }
}

/// Skew-symmetric generators with per-generator angles.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    pub generators: Vec<DMatrix<f64>>,
    pub deltas: Vec<f64>,
}

impl GeneratorSet {
    pub fn new(generators: Vec<DMatrix<f64>>, deltas: Vec<f64>) -> Result<Self> {
        if generators.len() != deltas.len() {
            return Err(Error::dim("one delta per generator is required"));
        }
        for g in &generators {
            check_skew(g)?;
        }
        Ok(Self { generators, deltas })
    }
}

fn check_skew(p: &DMatrix<f64>) -> Result<()> {
    if p.nrows() != p.ncols() {
        return Err(Error::dim("generator must be square"));
    }
    let scale = p.amax().max(1.0);
    let resid = (p + p.transpose()).amax();
    if resid > 1e-12 * scale {
        return Err(Error::NotSkewSymmetric(resid));
    }
    Ok(())
}

/// The `m(m-1)/2` elementary rotation generators `E_ab - E_ba`, `a < b`, in
/// lexicographic order.
pub fn elementary_generators(m: usize) -> Vec<DMatrix<f64>> {
    let mut out = Vec::with_capacity(m * (m.saturating_sub(1)) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            let mut p = DMatrix::zeros(m, m);
            p[(a, b)] = 1.0;
            p[(b, a)] = -1.0;
            out.push(p);
        }
    }
    out
}

/// Draw samples of every source; row `i` follows `spec.distributions[i]`.
pub fn sample_sources(spec: &SourceSpec) -> Result<SampleMatrix> {
    spec.validate()?;
    let m = spec.distributions.len();
    let n = spec.n_samples;
    let n_chunks = n.div_ceil(CHUNK);

    let rows: Vec<Vec<f64>> = par::map_indexed(m, |i| {
        let dist = &spec.distributions[i];
        let mut row = Vec::with_capacity(n);
        for chunk in 0..n_chunks {
            let len = CHUNK.min(n - chunk * CHUNK);
            let mut stream = rng::stream(spec.seed, &[i as u64, chunk as u64]);
            for _ in 0..len {
                row.push(dist.sample(&mut stream));
            }
        }
        row
    });

    let data = DMatrix::from_fn(m, n, |i, j| rows[i][j]);
    SampleMatrix::new(data)
}

/// Mix samples linearly: returns `A * S`.
pub fn mix(s: &SampleMatrix, a: &DMatrix<f64>) -> Result<SampleMatrix> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim("mixing matrix must be square"));
    }
    if a.ncols() != s.n_variables() {
        return Err(Error::dim(format!(
            "mixing matrix is {} x {}, samples have {} variables",
            a.nrows(),
            a.ncols(),
            s.n_variables()
        )));
    }
    SampleMatrix::with_labels(a * s.data(), s.row_labels().map(|l| l.to_vec()))
}

/// Crude singularity flag for mixing matrices: true when the matrix has no
/// usable inverse. Mixing with a singular matrix is allowed, only flagged.
pub fn is_nearly_singular(a: &DMatrix<f64>) -> bool {
    match a.clone().lu().try_inverse() {
        Some(inv) => {
            let norm_a = a.amax();
            let norm_inv = inv.amax();
            !(norm_a * norm_inv).is_finite() || norm_a * norm_inv > 1e12
        }
        None => true,
    }
}

/// Orthogonal matrix `exp(sum_a delta_a P_a)` from skew-symmetric generators.
pub fn rotation_from_generators(gens: &GeneratorSet) -> Result<DMatrix<f64>> {
    if gens.generators.is_empty() {
        return Err(Error::invalid("at least one generator is required"));
    }
    let m = gens.generators[0].nrows();
    let mut sum = DMatrix::zeros(m, m);
    for (p, &delta) in gens.generators.iter().zip(&gens.deltas) {
        check_skew(p)?;
        if p.nrows() != m {
            return Err(Error::dim("generators must share dimensions"));
        }
        sum += p * delta;
    }
    let w = sum.exp();
    let resid = (w.transpose() * &w - DMatrix::identity(m, m)).amax();
    if resid > 1e-10 {
        return Err(Error::NotOrthogonal(resid));
    }
    Ok(w)
}

/// Orientation of a CSV file relative to the `rows are variables` convention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// CSV rows are variables.
    Rows,
    /// CSV columns are variables; the matrix is transposed on load.
    Cols,
}

impl std::str::FromStr for Orientation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rows" => Ok(Orientation::Rows),
            "cols" => Ok(Orientation::Cols),
            other => Err(Error::invalid(format!("orientation must be rows|cols, got `{other}`"))),
        }
    }
}

/// Load a numeric CSV with an optional single header row.
pub fn load_csv(path: &std::path::Path, orientation: Orientation) -> Result<SampleMatrix> {
    let text = std::fs::read_to_string(path)?;
    parse_csv(&text, orientation)
}

pub fn parse_csv(text: &str, orientation: Orientation) -> Result<SampleMatrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(text.as_bytes());

    let mut rows: Vec<Vec<String>> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv(e.to_string()))?;
        rows.push(record.iter().map(|s| s.trim().to_string()).collect());
    }
    if rows.is_empty() {
        return Err(Error::Csv("empty file".into()));
    }

    let width = rows[0].len();
    if let Some(bad) = rows.iter().position(|r| r.len() != width) {
        return Err(Error::Csv(format!(
            "ragged row {}: expected {} fields, found {}",
            bad + 1,
            width,
            rows[bad].len()
        )));
    }

    // A header is a first row with at least one non-numeric cell.
    let is_numeric = |s: &str| s.parse::<f64>().is_ok();
    let has_header = rows[0].iter().any(|c| !is_numeric(c));
    let labels: Option<Vec<String>> = has_header.then(|| rows[0].clone());
    let body = if has_header { &rows[1..] } else { &rows[..] };
    if body.is_empty() {
        return Err(Error::Csv("no data rows".into()));
    }

    let mut data = DMatrix::zeros(body.len(), width);
    for (i, row) in body.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            data[(i, j)] = cell.parse::<f64>().map_err(|_| {
                Error::Csv(format!("non-numeric cell `{cell}` at row {}, column {}", i + 1, j + 1))
            })?;
        }
    }

    match orientation {
        Orientation::Rows => SampleMatrix::with_labels(data, None),
        Orientation::Cols => SampleMatrix::with_labels(data.transpose(), labels),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn mean(xs: &[f64]) -> f64 {
        xs.iter().sum::<f64>() / xs.len() as f64
    }

    fn variance(xs: &[f64]) -> f64 {
        let mu = mean(xs);
        xs.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / xs.len() as f64
    }

    fn excess_kurtosis(xs: &[f64]) -> f64 {
        let mu = mean(xs);
        let m2 = xs.iter().map(|x| (x - mu).powi(2)).sum::<f64>() / xs.len() as f64;
        let m4 = xs.iter().map(|x| (x - mu).powi(4)).sum::<f64>() / xs.len() as f64;
        m4 / (m2 * m2) - 3.0
    }

    fn spec(dist: Distribution, n: usize, seed: u64) -> SourceSpec {
        SourceSpec::new(vec![dist], n, seed)
    }

    #[test]
    fn uniform_row_variance_near_one() {
        let s = sample_sources(&spec(Distribution::Uniform, 100_000, 42)).unwrap();
        let row = s.row_vec(0);
        let var = variance(&row);
        assert!((0.98..=1.02).contains(&var), "variance {var}");
        assert!(mean(&row).abs() < 0.02);
    }

    #[test]
    fn gaussian_kurtosis_near_zero() {
        let s = sample_sources(&spec(Distribution::Gaussian, 100_000, 7)).unwrap();
        let k = excess_kurtosis(&s.row_vec(0));
        assert!(k.abs() < 0.1, "kurtosis {k}");
    }

    #[test]
    fn laplace_kurtosis_near_three() {
        // closed-form moments: E{x^4}/E{x^2}^2 - 3 = 3 for the Laplace law
        let s = sample_sources(&spec(Distribution::Laplace, 100_000, 11)).unwrap();
        let k = excess_kurtosis(&s.row_vec(0));
        assert!((2.7..=3.3).contains(&k), "kurtosis {k}");
    }

    #[test]
    fn exponential_standardized() {
        let s = sample_sources(&spec(Distribution::Exponential, 100_000, 3)).unwrap();
        let row = s.row_vec(0);
        assert!(mean(&row).abs() < 0.02);
        assert!((variance(&row) - 1.0).abs() < 0.03);
    }

    #[test]
    fn mixture_standardized() {
        let dist = Distribution::GaussianMixture {
            means: vec![-1.5, 1.5],
            stds: vec![0.4, 0.4],
            weights: vec![0.5, 0.5],
        };
        let s = sample_sources(&spec(dist, 100_000, 9)).unwrap();
        let row = s.row_vec(0);
        assert!(mean(&row).abs() < 0.02);
        assert!((variance(&row) - 1.0).abs() < 0.03);
    }

    #[test]
    fn mixture_rejects_bad_weights() {
        let dist = Distribution::GaussianMixture {
            means: vec![0.0, 1.0],
            stds: vec![1.0, 1.0],
            weights: vec![0.5, -0.5],
        };
        assert!(sample_sources(&spec(dist, 100, 1)).is_err());
    }

    #[test]
    fn unknown_distribution_name_errors() {
        assert!(Distribution::parse("cauchy").is_err());
        assert!(Distribution::parse("gmix:1,2").is_err());
        assert!(matches!(Distribution::parse("uniform"), Ok(Distribution::Uniform)));
    }

    #[test]
    fn sampling_is_reproducible() {
        let a = sample_sources(&spec(Distribution::Laplace, 20_000, 5)).unwrap();
        let b = sample_sources(&spec(Distribution::Laplace, 20_000, 5)).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn mix_identity_and_swap() {
        let s = SampleMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0])).unwrap();
        let id = DMatrix::identity(2, 2);
        assert_eq!(mix(&s, &id).unwrap().data(), s.data());

        let swap = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let swapped = mix(&s, &swap).unwrap();
        assert_eq!(
            swapped.data(),
            &DMatrix::from_row_slice(2, 2, &[3.0, 4.0, 1.0, 2.0])
        );
    }

    #[test]
    fn mix_inverse_round_trip() {
        let mut r = rng::stream(17, &[0]);
        let s = sample_sources(&SourceSpec::new(
            vec![Distribution::Uniform, Distribution::Laplace],
            500,
            23,
        ))
        .unwrap();
        let a = DMatrix::from_fn(2, 2, |_, _| r.gen::<f64>() + 0.5);
        let inv = a.clone().try_inverse().unwrap();
        let round = mix(&mix(&s, &a).unwrap(), &inv).unwrap();
        let err = (round.data() - s.data()).amax();
        assert!(err < 1e-10, "round-trip error {err}");
    }

    #[test]
    fn mix_is_linear() {
        let s = sample_sources(&spec(Distribution::Uniform, 64, 4)).unwrap();
        let a = DMatrix::from_row_slice(1, 1, &[2.0]);
        let b = DMatrix::from_row_slice(1, 1, &[-0.5]);
        let lhs = mix(&s, &(a.clone() + b.clone())).unwrap();
        let rhs = mix(&s, &a).unwrap().data() + mix(&s, &b).unwrap().data();
        assert_relative_eq!(lhs.data(), &rhs, epsilon = 1e-12);
    }

    #[test]
    fn rotation_identity_at_zero() {
        let gens = GeneratorSet::new(elementary_generators(3), vec![0.0; 3]).unwrap();
        let w = rotation_from_generators(&gens).unwrap();
        assert_relative_eq!(w, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn rotation_quarter_turn() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        let gens = GeneratorSet::new(vec![p], vec![std::f64::consts::FRAC_PI_2]).unwrap();
        let w = rotation_from_generators(&gens).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert_relative_eq!(w, expected, epsilon = 1e-12);
    }

    #[test]
    fn rotation_orthogonality_random_skew() {
        let mut r = rng::stream(31, &[0]);
        for m in [2usize, 3, 5] {
            let mut p = DMatrix::zeros(m, m);
            for a in 0..m {
                for b in (a + 1)..m {
                    let v = r.gen::<f64>() - 0.5;
                    p[(a, b)] = v;
                    p[(b, a)] = -v;
                }
            }
            let gens = GeneratorSet::new(vec![p], vec![0.3]).unwrap();
            let w = rotation_from_generators(&gens).unwrap();
            let resid = (w.transpose() * &w - DMatrix::identity(m, m)).amax();
            assert!(resid < 1e-12, "orthogonality residual {resid}");
        }
    }

    #[test]
    fn non_skew_generator_rejected() {
        let p = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(GeneratorSet::new(vec![p], vec![0.1]).is_err());
    }

    #[test]
    fn csv_round_trip_and_orientation() {
        let text = "1,2,3,4,5\n6,7,8,9,10\n11,12,13,14,15\n";
        let rows = parse_csv(text, Orientation::Rows).unwrap();
        assert_eq!((rows.n_variables(), rows.n_samples()), (3, 5));
        let cols = parse_csv(text, Orientation::Cols).unwrap();
        assert_eq!((cols.n_variables(), cols.n_samples()), (5, 3));
        assert_eq!(rows.data()[(0, 1)], cols.data()[(1, 0)]);
    }

    #[test]
    fn csv_header_detected() {
        let text = "geneA,geneB,geneC\n1,2,3\n4,5,6\n";
        let m = parse_csv(text, Orientation::Cols).unwrap();
        assert_eq!(m.n_variables(), 3);
        assert_eq!(m.row_labels().unwrap()[0], "geneA");
    }

    #[test]
    fn csv_errors() {
        assert!(parse_csv("1,2\n3\n", Orientation::Rows).is_err());
        assert!(parse_csv("1,2\nx,4\n", Orientation::Rows).is_err());
    }
}
