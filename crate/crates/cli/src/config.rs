//! Experiment configuration: a JSON document whose values can be
//! overridden by command-line flags. Every run writes the fully resolved
//! document next to its outputs.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::ValueEnum;
use oamturb_core::channel::{Detector, Normalization, SorterModel};
use oamturb_core::field::GridSpec;
use oamturb_core::quadrature::QuadratureOptions;
use oamturb_core::sweep::{linear_strengths, log_strengths, ChannelMethod, SweepConfig};
use oamturb_core::turbulence::ScreenSynthesisOptions;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::CliError;

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Fig4Sweep,
    Fig5Spacing,
    ScreenGallery,
    ModeGallery,
    CrosstalkTable,
    CapacityCurve,
    Validation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Analytic,
    Mc,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NormalizeArg {
    Postselect,
    Erasure,
}

impl From<NormalizeArg> for Normalization {
    fn from(n: NormalizeArg) -> Self {
        match n {
            NormalizeArg::Postselect => Normalization::Postselected,
            NormalizeArg::Erasure => Normalization::Erasure,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum DetectorArg {
    Annular,
    Aperture,
}

impl From<DetectorArg> for Detector {
    fn from(d: DetectorArg) -> Self {
        match d {
            DetectorArg::Annular => Detector::Annular,
            DetectorArg::Aperture => Detector::Aperture,
        }
    }
}

/// `ideal`, `sinc` or `file:<path>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SorterSpec {
    Ideal,
    Sinc,
    File(PathBuf),
}

impl SorterSpec {
    pub fn load(&self) -> Result<SorterModel, CliError> {
        Ok(match self {
            SorterSpec::Ideal => SorterModel::Ideal,
            SorterSpec::Sinc => SorterModel::SincBinned,
            SorterSpec::File(p) => SorterModel::from_csv(p)
                .map_err(|e| CliError::Config(format!("cannot load sorter {}: {e}", p.display())))?,
        })
    }
}

impl FromStr for SorterSpec {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ideal" => Ok(SorterSpec::Ideal),
            "sinc" => Ok(SorterSpec::Sinc),
            _ => match s.strip_prefix("file:") {
                Some(p) if !p.is_empty() => Ok(SorterSpec::File(PathBuf::from(p))),
                _ => Err(format!("unknown sorter {s:?}; expected ideal, sinc or file:<path>")),
            },
        }
    }
}

impl fmt::Display for SorterSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SorterSpec::Ideal => write!(f, "ideal"),
            SorterSpec::Sinc => write!(f, "sinc"),
            SorterSpec::File(p) => write!(f, "file:{}", p.display()),
        }
    }
}

impl Serialize for SorterSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SorterSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    Log,
    Lin,
}

/// Strength grid written `lo:hi:count:log` or `lo:hi:count:lin`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrengthGrid {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    pub scale: Scale,
}

impl StrengthGrid {
    pub const fn log(lo: f64, hi: f64, count: usize) -> Self {
        Self {
            lo,
            hi,
            count,
            scale: Scale::Log,
        }
    }

    pub fn values(&self) -> Result<Vec<f64>, CliError> {
        let v = match self.scale {
            Scale::Log => log_strengths(self.lo, self.hi, self.count),
            Scale::Lin => linear_strengths(self.lo, self.hi, self.count),
        };
        v.map_err(|e| CliError::Config(e.to_string()))
    }
}

impl FromStr for StrengthGrid {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 4 {
            return Err(format!("strength grid {s:?} is not lo:hi:count:log|lin"));
        }
        let num = |x: &str| x.trim().parse::<f64>().map_err(|_| format!("bad number {x:?} in {s:?}"));
        let count = parts[2]
            .trim()
            .parse::<usize>()
            .map_err(|_| format!("bad count {:?} in {s:?}", parts[2]))?;
        let scale = match parts[3].trim() {
            "log" => Scale::Log,
            "lin" => Scale::Lin,
            other => return Err(format!("unknown scale {other:?}; expected log or lin")),
        };
        Ok(Self {
            lo: num(parts[0])?,
            hi: num(parts[1])?,
            count,
            scale,
        })
    }
}

impl fmt::Display for StrengthGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let scale = match self.scale {
            Scale::Log => "log",
            Scale::Lin => "lin",
        };
        write!(f, "{}:{}:{}:{}", self.lo, self.hi, self.count, scale)
    }
}

impl Serialize for StrengthGrid {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for StrengthGrid {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Every tunable; unset values take per-experiment defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Parameters {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub physical_width: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aperture_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub subharmonics: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d_over_r0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oam: Option<i32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ang: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimension: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dimensions: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacing: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spacings: Option<Vec<u32>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub screens: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector: Option<DetectorArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sorter: Option<SorterSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normalize: Option<NormalizeArg>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strengths: Option<StrengthGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iter: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quad_tol: Option<f64>,
}

macro_rules! overlay {
    ($dst:ident, $src:ident; $($f:ident),* $(,)?) => {
        $( if $src.$f.is_some() { $dst.$f = $src.$f.clone(); } )*
    };
}

impl Parameters {
    /// Values set in `other` replace those in `self`.
    pub fn overlay(&mut self, other: &Parameters) {
        overlay!(self, other; resolution, physical_width, aperture_radius, subharmonics, d_over_r0, oam, ang,
            dimension, dimensions, spacing, spacings, method, screens, detector, sorter, normalize, strengths,
            tol, max_iter, quad_tol);
    }

    /// Fills every unset value from `defaults`.
    pub fn with_defaults(&self, defaults: &Parameters) -> Parameters {
        let mut out = defaults.clone();
        out.overlay(self);
        out
    }

    pub fn grid(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(
            self.resolution.unwrap_or(512),
            self.physical_width.unwrap_or(1.0),
            self.aperture_radius.unwrap_or(0.25),
        )
        .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn synthesis(&self) -> Result<ScreenSynthesisOptions, CliError> {
        ScreenSynthesisOptions::with_subharmonics(self.subharmonics.unwrap_or(3))
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn quadrature(&self) -> QuadratureOptions {
        QuadratureOptions {
            tol: self.quad_tol.unwrap_or(QuadratureOptions::default().tol),
            ..QuadratureOptions::default()
        }
    }

    /// Sweep configuration for one `(N, MS)` pair.
    pub fn sweep(&self, dimension: usize, spacing: u32, seed: u64) -> Result<SweepConfig, CliError> {
        let method = match self.method.unwrap_or(Method::Analytic) {
            Method::Analytic => ChannelMethod::Analytic,
            Method::Mc => ChannelMethod::MonteCarlo {
                num_screens: self.screens.unwrap_or(20),
                seed,
                grid: self.grid()?,
                synthesis: self.synthesis()?,
                detector: self.detector.unwrap_or(DetectorArg::Annular).into(),
            },
        };
        let cfg = SweepConfig {
            dimension,
            spacing,
            sorter: self.sorter.clone().unwrap_or(SorterSpec::Sinc).load()?,
            normalization: self.normalize.unwrap_or(NormalizeArg::Postselect).into(),
            method,
            quadrature: self.quadrature(),
            tol: self.tol.unwrap_or(oamturb_core::capacity::DEFAULT_TOL),
            max_iter: self.max_iter.unwrap_or(oamturb_core::capacity::DEFAULT_MAX_ITER),
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    #[serde(default)]
    pub parameters: Parameters,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    pub fn new(experiment: Experiment) -> Self {
        Self {
            experiment,
            parameters: Parameters::default(),
            seed: 0,
            output_dir: default_output_dir(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Loads `path` if given (checking it is for `experiment`), otherwise
    /// starts empty; then applies flag overrides.
    pub fn resolve(
        experiment: Experiment,
        path: Option<&Path>,
        flags: &Parameters,
        seed: Option<u64>,
        output_dir: Option<&Path>,
    ) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let c = Self::load(p)?;
                if c.experiment != experiment {
                    return Err(CliError::Config(format!(
                        "{} configures {:?}, not {:?}",
                        p.display(),
                        c.experiment,
                        experiment
                    )));
                }
                c
            }
            None => Self::new(experiment),
        };
        cfg.parameters.overlay(flags);
        if let Some(s) = seed {
            cfg.seed = s;
        }
        if let Some(o) = output_dir {
            cfg.output_dir = o.to_path_buf();
        }
        Ok(cfg)
    }

    pub fn write_snapshot(&self) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.output_dir)?;
        let text = serde_json::to_string_pretty(self).expect("config serialises");
        std::fs::write(self.output_dir.join(RESOLVED_CONFIG), text + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_strength_grids_and_sorters() {
        let g: StrengthGrid = "0.1:30:30:log".parse().unwrap();
        assert_eq!(g, StrengthGrid::log(0.1, 30.0, 30));
        assert_eq!(g.to_string(), "0.1:30:30:log");
        assert!("0.1:30:30".parse::<StrengthGrid>().is_err());
        assert!("0.1:30:x:log".parse::<StrengthGrid>().is_err());
        assert_eq!("file:a/b.csv".parse::<SorterSpec>().unwrap(), SorterSpec::File("a/b.csv".into()));
        assert!("file:".parse::<SorterSpec>().is_err());
        assert!("bogus".parse::<SorterSpec>().is_err());
    }

    #[test]
    fn rejects_unknown_keys() {
        let bad = r#"{"experiment": "fig4_sweep", "parameters": {"resolutoin": 256}}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad).is_err());
        let bad_top = r#"{"experiment": "fig4_sweep", "colour": "red"}"#;
        assert!(serde_json::from_str::<ExperimentConfig>(bad_top).is_err());
        let ok = r#"{"experiment": "fig4_sweep", "parameters": {"sorter": "ideal", "strengths": "0.1:30:5:log"}}"#;
        let c: ExperimentConfig = serde_json::from_str(ok).unwrap();
        assert_eq!(c.parameters.sorter, Some(SorterSpec::Ideal));
    }

    #[test]
    fn flags_override_config() {
        let mut base = Parameters {
            resolution: Some(256),
            screens: Some(10),
            ..Default::default()
        };
        base.overlay(&Parameters {
            screens: Some(40),
            ..Default::default()
        });
        assert_eq!(base.resolution, Some(256));
        assert_eq!(base.screens, Some(40));
        let filled = Parameters::default().with_defaults(&base);
        assert_eq!(filled, base);
    }
}
