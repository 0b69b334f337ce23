//! Experiment configuration: a single flat JSON file, overridden by flags.

use kica::contrast::{ContrastParams, KappaConvention};
use kica::gram::{KernelKind, KernelSpec};
use kica::optimize::OptimizeOptions;
use kica::qemu::{NoiseMode, NoiseSpec};
use kica::sources::{Distribution, Orientation, SourceSpec};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub sources: SourcesSection,
    #[serde(default)]
    pub mixing: MixingSection,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_eps_trunc")]
    pub eps_trunc: f64,
    /// Regularize raw eigenvalues (`lambda/(lambda+kappa)`) instead of
    /// normalized ones.
    #[serde(default)]
    pub kappa_raw: bool,
    /// Dump Gram matrices next to the results.
    #[serde(default)]
    pub dump_gram: bool,
    #[serde(default)]
    pub noise: NoiseSection,
    #[serde(default)]
    pub optimizer: OptimizerSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub input: Option<InputSection>,
    /// Output directory; created if missing.
    #[serde(default = "default_out")]
    pub out: String,
    /// Master seed; mandatory for every run.
    #[serde(default)]
    pub seed: Option<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            sources: SourcesSection::default(),
            mixing: MixingSection::default(),
            kernel: KernelSection::default(),
            kappa: default_kappa(),
            eps_trunc: default_eps_trunc(),
            kappa_raw: false,
            dump_gram: false,
            noise: NoiseSection::default(),
            optimizer: OptimizerSection::default(),
            grid: GridSection::default(),
            input: None,
            out: default_out(),
            seed: None,
        }
    }
}

fn default_kappa() -> f64 {
    0.1
}

fn default_eps_trunc() -> f64 {
    0.1
}

fn default_out() -> String {
    "out".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourcesSection {
    pub distributions: Vec<Distribution>,
    pub n_samples: usize,
}

impl Default for SourcesSection {
    fn default() -> Self {
        Self {
            distributions: vec![Distribution::Uniform, Distribution::Laplace],
            n_samples: 1000,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct MixingSection {
    /// Explicit mixing matrix, row-major.
    #[serde(default)]
    pub matrix: Option<Vec<Vec<f64>>>,
    /// Angles for the elementary generators (lexicographic order); ignored
    /// when an explicit matrix is given.
    #[serde(default)]
    pub deltas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSection {
    pub sigma: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self { sigma: std::f64::consts::FRAC_1_SQRT_2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub eps1: f64,
    pub eps2: f64,
    #[serde(default)]
    pub mode: ModeSection,
    #[serde(default = "default_g")]
    pub g: f64,
}

fn default_g() -> f64 {
    1.0
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { eps1: 0.0, eps2: 0.0, mode: ModeSection::General, g: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModeSection {
    #[default]
    General,
    Near,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub max_iters: usize,
    pub tol: f64,
    pub restarts: usize,
    pub fd_step: f64,
    /// `coarse` scans with the general budgets, `refine` switches to the
    /// near-independent ones.
    #[serde(default)]
    pub phase: PhaseSection,
}

impl Default for OptimizerSection {
    fn default() -> Self {
        Self { max_iters: 60, tol: 1e-6, restarts: 5, fd_step: 1e-3, phase: PhaseSection::Coarse }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum PhaseSection {
    #[default]
    Coarse,
    Refine,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        Self { lo: -std::f64::consts::FRAC_PI_4, hi: std::f64::consts::FRAC_PI_4, steps: 21 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSection {
    pub path: String,
    pub orientation: Orientation,
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("invalid config: {e}"))
    }

    pub fn seed(&self) -> Result<u64, String> {
        self.seed.ok_or_else(|| "a seed is mandatory: set --seed or \"seed\" in the config".into())
    }

    pub fn kernel_spec(&self) -> Result<KernelSpec, String> {
        if !(self.kernel.sigma > 0.0) {
            return Err("kernel sigma must be positive".into());
        }
        Ok(KernelSpec { kind: KernelKind::Gaussian, sigma: self.kernel.sigma })
    }

    pub fn contrast_params(&self, signed: bool) -> Result<ContrastParams, String> {
        let params = ContrastParams {
            kernel: self.kernel_spec()?,
            kappa: self.kappa,
            eps_trunc: self.eps_trunc,
            signed,
            convention: if self.kappa_raw { KappaConvention::Raw } else { KappaConvention::Normalized },
        };
        params.validate().map_err(|e| e.to_string())?;
        Ok(params)
    }

    pub fn source_spec(&self) -> Result<SourceSpec, String> {
        let spec = SourceSpec::new(
            self.sources.distributions.clone(),
            self.sources.n_samples,
            self.seed()?,
        );
        spec.validate().map_err(|e| e.to_string())?;
        Ok(spec)
    }

    pub fn noise_spec(&self) -> Result<NoiseSpec, String> {
        let seed = self.seed()?;
        let mode = match self.noise.mode {
            ModeSection::General => NoiseMode::General,
            ModeSection::Near => NoiseMode::NearIndependent,
        };
        Ok(NoiseSpec {
            eps1: self.noise.eps1,
            eps2: self.noise.eps2,
            kappa: self.kappa,
            mode,
            xi_est: None,
            g: self.noise.g,
            seed: seed ^ 0x4e015e,
        })
    }

    pub fn optimize_options(&self) -> Result<OptimizeOptions, String> {
        Ok(OptimizeOptions {
            max_iters: self.optimizer.max_iters,
            tol: self.optimizer.tol,
            restarts: self.optimizer.restarts,
            fd_step: self.optimizer.fd_step,
            seed: self.seed()?,
        })
    }

    /// Mixing matrix for `m` variables: explicit, from generator angles, or
    /// the identity.
    pub fn mixing_matrix(&self, m: usize) -> Result<DMatrix<f64>, String> {
        if let Some(rows) = &self.mixing.matrix {
            if rows.len() != m || rows.iter().any(|r| r.len() != m) {
                return Err(format!("mixing matrix must be {m} x {m}"));
            }
            let mut a = DMatrix::zeros(m, m);
            for (i, row) in rows.iter().enumerate() {
                for (j, &v) in row.iter().enumerate() {
                    a[(i, j)] = v;
                }
            }
            return Ok(a);
        }
        if let Some(deltas) = &self.mixing.deltas {
            let gens = kica::sources::elementary_generators(m);
            if deltas.len() > gens.len() {
                return Err(format!(
                    "{} deltas given but {m} variables admit {} generators",
                    deltas.len(),
                    gens.len()
                ));
            }
            let used = gens.into_iter().take(deltas.len()).collect();
            let set = kica::sources::GeneratorSet::new(used, deltas.clone())
                .map_err(|e| e.to_string())?;
            return kica::sources::rotation_from_generators(&set).map_err(|e| e.to_string());
        }
        Ok(DMatrix::identity(m, m))
    }
}
