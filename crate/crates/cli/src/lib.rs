//! `oamturb`: run OAM turbulence experiments from the command line.
//!
//! Each subcommand loads an optional JSON configuration, applies flag
//! overrides, writes CSV (and where relevant PNG or SVG) outputs, and
//! records the resolved configuration next to them.

pub mod config;
pub mod error;
pub mod experiments;
pub mod plot;
pub mod validate;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::{DetectorArg, Experiment, ExperimentConfig, Method, NormalizeArg, Parameters, SorterSpec, StrengthGrid};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "oamturb", version, about = "OAM mode crosstalk and channel capacity under Kolmogorov turbulence")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate one phase screen (PNG and CSV).
    Screen(CommonArgs),
    /// Render an OAM or ANG mode (intensity, phase, CSV).
    Mode(CommonArgs),
    /// Compute one crosstalk matrix.
    Crosstalk(CommonArgs),
    /// Compute one capacity curve.
    Capacity(CommonArgs),
    /// Capacity against turbulence strength for N = 3..11.
    Fig4(CommonArgs),
    /// Capacity for several mode spacings at N = 3.
    Fig5(CommonArgs),
    /// Run the statistical and numerical self-checks.
    Validate(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON experiment configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long = "out")]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long = "d-over-r0")]
    pub d_over_r0: Option<f64>,
    /// Grid samples per side.
    #[arg(long)]
    pub resolution: Option<usize>,
    #[arg(long = "physical-width")]
    pub physical_width: Option<f64>,
    #[arg(long = "aperture-radius")]
    pub aperture_radius: Option<f64>,
    /// Subharmonic levels used in screen synthesis.
    #[arg(long)]
    pub subharmonics: Option<u32>,
    /// OAM index for `mode`.
    #[arg(long = "l", allow_negative_numbers = true)]
    pub oam: Option<i32>,
    /// ANG index for `mode` (uses `--n` as the dimension).
    #[arg(long)]
    pub ang: Option<usize>,
    /// Number of detected modes.
    #[arg(long = "n")]
    pub dimension: Option<usize>,
    /// Comma-separated dimensions for `fig4`.
    #[arg(long, value_delimiter = ',')]
    pub dimensions: Option<Vec<usize>>,
    /// Index gap between detected modes.
    #[arg(long)]
    pub spacing: Option<u32>,
    /// Comma-separated spacings for `fig5`.
    #[arg(long, value_delimiter = ',')]
    pub spacings: Option<Vec<u32>>,
    #[arg(long, value_enum)]
    pub method: Option<Method>,
    /// Monte Carlo ensemble size.
    #[arg(long)]
    pub screens: Option<usize>,
    #[arg(long, value_enum)]
    pub detector: Option<DetectorArg>,
    /// `ideal`, `sinc` or `file:<path>`.
    #[arg(long)]
    pub sorter: Option<SorterSpec>,
    #[arg(long, value_enum)]
    pub normalize: Option<NormalizeArg>,
    /// Strength grid `lo:hi:count:log|lin`.
    #[arg(long)]
    pub strengths: Option<StrengthGrid>,
    /// Blahut-Arimoto tolerance in bits.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long = "max-iter")]
    pub max_iter: Option<usize>,
    /// Quadrature tolerance.
    #[arg(long = "quad-tol")]
    pub quad_tol: Option<f64>,
}

impl CommonArgs {
    pub fn parameters(&self) -> Parameters {
        Parameters {
            resolution: self.resolution,
            physical_width: self.physical_width,
            aperture_radius: self.aperture_radius,
            subharmonics: self.subharmonics,
            d_over_r0: self.d_over_r0,
            oam: self.oam,
            ang: self.ang,
            dimension: self.dimension,
            dimensions: self.dimensions.clone(),
            spacing: self.spacing,
            spacings: self.spacings.clone(),
            method: self.method,
            screens: self.screens,
            detector: self.detector,
            sorter: self.sorter.clone(),
            normalize: self.normalize,
            strengths: self.strengths,
            tol: self.tol,
            max_iter: self.max_iter,
            quad_tol: self.quad_tol,
        }
    }

    pub fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig, CliError> {
        ExperimentConfig::resolve(
            experiment,
            self.config.as_deref(),
            &self.parameters(),
            self.seed,
            self.out.as_deref(),
        )
    }
}

fn report(files: &[PathBuf]) {
    for f in files {
        println!("{}", f.display());
    }
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Screen(a) => report(&experiments::run_screen(&a.resolve(Experiment::ScreenGallery)?)?),
        Command::Mode(a) => report(&experiments::run_mode(&a.resolve(Experiment::ModeGallery)?)?),
        Command::Crosstalk(a) => report(&experiments::run_crosstalk(&a.resolve(Experiment::CrosstalkTable)?)?),
        Command::Capacity(a) => report(&experiments::run_capacity(&a.resolve(Experiment::CapacityCurve)?)?),
        Command::Fig4(a) => report(&experiments::run_fig4(&a.resolve(Experiment::Fig4Sweep)?)?),
        Command::Fig5(a) => {
            let (files, rep) = experiments::run_fig5(&a.resolve(Experiment::Fig5Spacing)?)?;
            report(&files);
            for o in &rep.ordering {
                println!(
                    "ordering MS={} >= MS={}: {}",
                    o.higher_spacing,
                    o.lower_spacing,
                    if o.holds { "holds" } else { "violated" }
                );
            }
            if let Some(r) = rep.onset_ratio {
                println!("onset ratio: {r:.3}");
            }
        }
        Command::Validate(a) => {
            let (path, rep) = validate::run_validation(&a.resolve(Experiment::Validation)?)?;
            for c in &rep.checks {
                println!("{:<38} {}", c.name, if c.passed { "pass" } else { "FAIL" });
            }
            println!("{}", path.display());
            if !rep.passed {
                return Err(CliError::Validation(rep.failed().join(", ")));
            }
        }
    }
    Ok(())
}
