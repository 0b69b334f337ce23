//! Command-line experiments for the kernel ICA pipeline and its
//! measurement-noise emulation.

mod bench;
mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use config::{ExperimentConfig, InputSection, ModeSection, PhaseSection};
use kica::sources::Orientation;

#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration or arguments; exit code 1.
    Config(String),
    /// Numerical failure with module context; exit code 2.
    Numerical(String),
    /// A bench suite check failed; exit code 3.
    Check(String),
}

impl CliError {
    fn numerical(e: kica::Error) -> Self {
        CliError::Numerical(e.to_string())
    }

    fn io(e: std::io::Error) -> Self {
        CliError::Numerical(format!("io: {e}"))
    }

    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Numerical(_) => 2,
            CliError::Check(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Config(m) | CliError::Numerical(m) | CliError::Check(m) => m,
        }
    }
}

#[derive(Parser)]
#[command(name = "kica", version, about = "Kernel ICA with a measurement-noise emulation")]
struct Cli {
    /// JSON config file; flags override its fields.
    #[arg(long, global = true)]
    config: Option<std::path::PathBuf>,

    /// Master seed (mandatory, here or in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<String>,

    /// Regularization constant.
    #[arg(long, global = true)]
    kappa: Option<f64>,

    /// Gaussian kernel bandwidth.
    #[arg(long, global = true)]
    sigma: Option<f64>,

    /// Readout precision parameter.
    #[arg(long, global = true)]
    eps1: Option<f64>,

    /// Whitening perturbation budget.
    #[arg(long, global = true)]
    eps2: Option<f64>,

    /// Spectral truncation threshold.
    #[arg(long = "eps-trunc", global = true)]
    eps_trunc: Option<f64>,

    /// Scan grid as LO:HI:STEPS.
    #[arg(long, global = true)]
    grid: Option<String>,

    /// CSV orientation (rows|cols) for --input.
    #[arg(long, global = true)]
    orientation: Option<Orientation>,

    /// Input CSV of samples; replaces generated sources.
    #[arg(long, global = true)]
    input: Option<String>,

    /// Noise budget regime (general|near).
    #[arg(long, global = true)]
    mode: Option<String>,

    /// Optimization phase (coarse|refine).
    #[arg(long, global = true)]
    phase: Option<String>,

    /// Regularize raw eigenvalues instead of normalized ones.
    #[arg(long = "kappa-raw", global = true)]
    kappa_raw: bool,

    /// Dump Gram matrices beside the results.
    #[arg(long = "dump-gram", global = true)]
    dump_gram: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate source samples.
    Gen,
    /// Generate and mix samples.
    Mix,
    /// Center and whiten samples; optionally attach a whitening perturbation.
    Preprocess,
    /// Evaluate the determinant contrast of the input samples.
    Contrast {
        /// Element-wise absolute values instead of signed entries.
        #[arg(long)]
        unsigned: bool,
    },
    /// Scan the contrast over a generator-parametrized rotation grid.
    Scan {
        #[arg(long)]
        unsigned: bool,
    },
    /// Minimize the contrast over orthogonal unmixing matrices.
    Optimize,
    /// Run one noisy evaluation of the contrast under the error model.
    Emulate,
    /// Assemble the block-encoding circuit and verify its identities.
    VerifyCircuit {
        /// Index-register width (N = 2^n samples).
        #[arg(long, default_value_t = 2)]
        n: usize,
        /// Kernel value fraction bits.
        #[arg(long, default_value_t = 8)]
        s: usize,
    },
    /// Tabulate the overlap coefficients C and D of eigenfunction pairs.
    Nystrom {
        #[arg(long = "n-mc", default_value_t = 10_000)]
        n_mc: usize,
        /// Eigenfunctions per variable.
        #[arg(long, default_value_t = 3)]
        top: usize,
    },
    /// Reproduce the headline experiments as CSV/SVG artifacts.
    Bench {
        #[arg(long, default_value = "all")]
        suite: String,
    },
}

fn apply_overrides(cfg: &mut ExperimentConfig, cli: &Cli) -> Result<(), CliError> {
    if let Some(seed) = cli.seed {
        cfg.seed = Some(seed);
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(kappa) = cli.kappa {
        cfg.kappa = kappa;
    }
    if let Some(sigma) = cli.sigma {
        cfg.kernel.sigma = sigma;
    }
    if let Some(eps1) = cli.eps1 {
        cfg.noise.eps1 = eps1;
    }
    if let Some(eps2) = cli.eps2 {
        cfg.noise.eps2 = eps2;
    }
    if let Some(eps_trunc) = cli.eps_trunc {
        cfg.eps_trunc = eps_trunc;
    }
    if cli.kappa_raw {
        cfg.kappa_raw = true;
    }
    if cli.dump_gram {
        cfg.dump_gram = true;
    }
    if let Some(grid) = &cli.grid {
        let parts: Vec<&str> = grid.split(':').collect();
        if parts.len() != 3 {
            return Err(CliError::Config("grid must be LO:HI:STEPS".into()));
        }
        let lo: f64 = parts[0].parse().map_err(|_| CliError::Config("bad grid LO".into()))?;
        let hi: f64 = parts[1].parse().map_err(|_| CliError::Config("bad grid HI".into()))?;
        let steps: usize = parts[2].parse().map_err(|_| CliError::Config("bad grid STEPS".into()))?;
        if steps == 0 || hi < lo {
            return Err(CliError::Config("grid needs STEPS >= 1 and HI >= LO".into()));
        }
        cfg.grid = config::GridSection { lo, hi, steps };
    }
    if let Some(mode) = &cli.mode {
        cfg.noise.mode = match mode.as_str() {
            "general" => ModeSection::General,
            "near" => ModeSection::Near,
            other => return Err(CliError::Config(format!("mode must be general|near, got `{other}`"))),
        };
    }
    if let Some(phase) = &cli.phase {
        cfg.optimizer.phase = match phase.as_str() {
            "coarse" => PhaseSection::Coarse,
            "refine" => PhaseSection::Refine,
            other => {
                return Err(CliError::Config(format!("phase must be coarse|refine, got `{other}`")))
            }
        };
    }
    if let Some(path) = &cli.input {
        let orientation = cli.orientation.unwrap_or(Orientation::Rows);
        cfg.input = Some(InputSection { path: path.clone(), orientation });
    }
    Ok(())
}

fn init_threads() -> Result<(), CliError> {
    if let Ok(text) = std::env::var("KICA_THREADS") {
        let n: usize = text
            .parse()
            .map_err(|_| CliError::Config(format!("KICA_THREADS must be an integer, got `{text}`")))?;
        if n == 0 {
            return Err(CliError::Config("KICA_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: &Cli) -> Result<(), CliError> {
    init_threads()?;
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path).map_err(CliError::Config)?,
        None => ExperimentConfig::default(),
    };
    apply_overrides(&mut cfg, cli)?;

    match &cli.command {
        Command::Gen => commands::cmd_gen(&cfg),
        Command::Mix => commands::cmd_mix(&cfg),
        Command::Preprocess => commands::cmd_preprocess(&cfg),
        Command::Contrast { unsigned } => commands::cmd_contrast(&cfg, *unsigned),
        Command::Scan { unsigned } => commands::cmd_scan(&cfg, *unsigned),
        Command::Optimize => commands::cmd_optimize(&cfg),
        Command::Emulate => commands::cmd_emulate(&cfg),
        Command::VerifyCircuit { n, s } => commands::cmd_verify_circuit(&cfg, *n, *s),
        Command::Nystrom { n_mc, top } => commands::cmd_nystrom(&cfg, *n_mc, *top),
        Command::Bench { suite } => bench::run_suite(&cfg, suite),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap's help/version paths print and exit 0; argument errors are
            // configuration errors
            if e.use_stderr() {
                eprintln!("{e}");
                std::process::exit(1);
            }
            print!("{e}");
            std::process::exit(0);
        }
    };
    if let Err(e) = run(&cli) {
        eprintln!("error: {}", e.message());
        std::process::exit(e.exit_code());
    }
}
