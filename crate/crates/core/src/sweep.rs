//! Capacity as a function of turbulence strength.

use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::capacity::{blahut_arimoto, CapacityResult, DEFAULT_MAX_ITER, DEFAULT_TOL};
use crate::channel::{
    analytic_matrix, apply_sorter, montecarlo_matrix, normalize, sidecar_path, CrosstalkMatrix, Detector, ModeSet,
    Normalization, SorterModel,
};
use crate::error::{Error, Result};
use crate::field::GridSpec;
use crate::io;
use crate::quadrature::QuadratureOptions;
use crate::turbulence::{ScreenSynthesisOptions, TurbulenceStrength};

/// How each crosstalk matrix of a sweep is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ChannelMethod {
    Analytic,
    MonteCarlo {
        num_screens: usize,
        seed: u64,
        grid: GridSpec,
        synthesis: ScreenSynthesisOptions,
        detector: Detector,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub dimension: usize,
    pub spacing: u32,
    pub sorter: SorterModel,
    pub normalization: Normalization,
    pub method: ChannelMethod,
    pub quadrature: QuadratureOptions,
    pub tol: f64,
    pub max_iter: usize,
}

impl SweepConfig {
    /// Analytic channel, sinc sorter, postselected counts.
    pub fn analytic(dimension: usize, spacing: u32) -> Self {
        Self {
            dimension,
            spacing,
            sorter: SorterModel::SincBinned,
            normalization: Normalization::Postselected,
            method: ChannelMethod::Analytic,
            quadrature: QuadratureOptions::default(),
            tol: DEFAULT_TOL,
            max_iter: DEFAULT_MAX_ITER,
        }
    }

    pub fn with_sorter(mut self, sorter: SorterModel) -> Self {
        self.sorter = sorter;
        self
    }

    pub fn modes(&self) -> Result<ModeSet> {
        ModeSet::centered(self.dimension, self.spacing)
    }

    pub fn validate(&self) -> Result<()> {
        self.modes()?;
        if self.normalization == Normalization::Subunital {
            return Err(Error::InvalidParameter(
                "capacity needs a postselected or erasure normalization".into(),
            ));
        }
        if let ChannelMethod::MonteCarlo { num_screens, synthesis, .. } = &self.method {
            if *num_screens == 0 {
                return Err(Error::InvalidParameter("at least one screen is required".into()));
            }
            synthesis.validate()?;
        }
        Ok(())
    }

    /// Raw (subunital) turbulence channel at `strength`.
    pub fn raw_matrix(&self, strength: TurbulenceStrength) -> Result<CrosstalkMatrix> {
        let modes = self.modes()?;
        match &self.method {
            ChannelMethod::Analytic => analytic_matrix(modes, strength, &self.quadrature),
            ChannelMethod::MonteCarlo {
                num_screens,
                seed,
                grid,
                synthesis,
                detector,
            } => montecarlo_matrix(modes, strength, *num_screens, *seed, grid, synthesis, *detector),
        }
    }

    /// Sorter applied to a raw matrix, then the leakage policy.
    pub fn detected_channel(&self, raw: &CrosstalkMatrix) -> Result<CrosstalkMatrix> {
        normalize(&apply_sorter(raw, &self.sorter)?, self.normalization)
    }

    pub fn channel(&self, strength: TurbulenceStrength) -> Result<CrosstalkMatrix> {
        self.detected_channel(&self.raw_matrix(strength)?)
    }

    fn capacity_of(&self, raw: &CrosstalkMatrix) -> Result<CapacityResult> {
        blahut_arimoto(&self.detected_channel(raw)?, self.tol, self.max_iter)
    }
}

/// One sweep point. `err_lo`/`err_hi` are distances below/above `capacity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityPoint {
    pub d_over_r0: f64,
    pub result: CapacityResult,
    pub err_lo: f64,
    pub err_hi: f64,
}

impl CapacityPoint {
    pub fn capacity(&self) -> f64 {
        self.result.capacity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityCurve {
    pub label: String,
    /// `None` for the polarization baseline.
    pub config: Option<SweepConfig>,
    pub points: Vec<CapacityPoint>,
}

impl CapacityCurve {
    pub fn strengths(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.d_over_r0).collect()
    }

    pub fn capacities(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.capacity()).collect()
    }

    pub fn all_converged(&self) -> bool {
        self.points.iter().all(|p| p.result.converged)
    }

    /// CSV `d_over_r0,capacity_bits,err_lo,err_hi,converged` plus a JSON
    /// sidecar holding the label and configuration.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = io::csv_writer(path)?;
        w.write_record(["d_over_r0", "capacity_bits", "err_lo", "err_hi", "converged"])?;
        for p in &self.points {
            w.write_record([
                io::fmt_sig(p.d_over_r0),
                io::fmt_sig(p.capacity()),
                io::fmt_sig(p.err_lo),
                io::fmt_sig(p.err_hi),
                p.result.converged.to_string(),
            ])?;
        }
        w.flush()?;
        #[derive(Serialize)]
        struct Sidecar<'a> {
            label: &'a str,
            config: &'a Option<SweepConfig>,
        }
        let file = std::fs::File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(
            std::io::BufWriter::new(file),
            &Sidecar {
                label: &self.label,
                config: &self.config,
            },
        )?;
        Ok(())
    }
}

/// `count` log-spaced strengths from `lo` to `hi` inclusive.
pub fn log_strengths(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi > lo && lo.is_finite() && hi.is_finite()) || count < 2 {
        return Err(Error::InvalidParameter(format!(
            "need 0 < lo < hi and count >= 2, got {lo}, {hi}, {count}"
        )));
    }
    let (a, b) = (lo.ln(), hi.ln());
    let mut v: Vec<f64> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
        .collect();
    v[0] = lo;
    v[count - 1] = hi;
    Ok(v)
}

/// `count` evenly spaced strengths from `lo` to `hi` inclusive.
pub fn linear_strengths(lo: f64, hi: f64, count: usize) -> Result<Vec<f64>> {
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) || count < 2 {
        return Err(Error::InvalidParameter(format!(
            "need 0 <= lo < hi and count >= 2, got {lo}, {hi}, {count}"
        )));
    }
    Ok((0..count)
        .map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64)
        .collect())
}

fn check_strengths(strengths: &[f64]) -> Result<Vec<TurbulenceStrength>> {
    if strengths.is_empty() {
        return Err(Error::InvalidParameter("no strengths given".into()));
    }
    if strengths.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("strengths must be strictly increasing".into()));
    }
    strengths.iter().map(|&x| TurbulenceStrength::new(x)).collect()
}

/// Perturbs each entry of a Monte Carlo matrix by one standard error up and
/// down and accumulates the capacity shifts in quadrature, separately for
/// decreases and increases.
fn error_bars(config: &SweepConfig, raw: &CrosstalkMatrix, capacity: f64) -> Result<(f64, f64)> {
    let Some(se) = raw.standard_errors() else {
        return Ok((0.0, 0.0));
    };
    let base = raw.entries();
    let sums = raw.column_sums();
    let (mut lo, mut hi) = (0.0, 0.0);
    for ((d, s), &sigma) in se.indexed_iter() {
        if sigma == 0.0 {
            continue;
        }
        let v = base[[d, s]];
        let headroom = 1.0 - (sums[s] - v);
        for target in [(v + sigma).min(headroom), (v - sigma).max(0.0)] {
            if target == v {
                continue;
            }
            let mut e: Array2<f64> = base.clone();
            e[[d, s]] = target;
            let shifted = match config.capacity_of(&raw.with_entries(e)?) {
                Ok(r) => r.capacity,
                // a column pushed to zero cannot be postselected
                Err(Error::ZeroColumn { .. }) => continue,
                Err(other) => return Err(other),
            };
            let delta = shifted - capacity;
            if delta < 0.0 {
                lo += delta * delta;
            } else {
                hi += delta * delta;
            }
        }
    }
    Ok((lo.sqrt(), hi.sqrt()))
}

/// One point of a sweep.
pub fn capacity_point(config: &SweepConfig, strength: TurbulenceStrength) -> Result<CapacityPoint> {
    config.validate()?;
    let raw = config.raw_matrix(strength)?;
    let result = config.capacity_of(&raw)?;
    let (err_lo, err_hi) = error_bars(config, &raw, result.capacity)?;
    Ok(CapacityPoint {
        d_over_r0: strength.d_over_r0(),
        result,
        err_lo,
        err_hi,
    })
}

/// Capacity at each strength, computed in parallel and returned in order.
pub fn capacity_sweep(config: &SweepConfig, strengths: &[f64], label: impl Into<String>) -> Result<CapacityCurve> {
    config.validate()?;
    let ts = check_strengths(strengths)?;
    let points = ts
        .par_iter()
        .map(|&t| capacity_point(config, t))
        .collect::<Result<Vec<_>>>()?;
    Ok(CapacityCurve {
        label: label.into(),
        config: Some(config.clone()),
        points,
    })
}

/// Two polarization states are untouched by the turbulence, so the
/// channel is the noiseless binary one at every strength.
pub fn polarization_baseline(strengths: &[f64]) -> Result<CapacityCurve> {
    check_strengths(strengths)?;
    let result = crate::capacity::blahut_arimoto_of(Array2::<f64>::eye(2).view(), DEFAULT_TOL, DEFAULT_MAX_ITER)?;
    Ok(CapacityCurve {
        label: "polarization".into(),
        config: None,
        points: strengths
            .iter()
            .map(|&d_over_r0| CapacityPoint {
                d_over_r0,
                result: result.clone(),
                err_lo: 0.0,
                err_hi: 0.0,
            })
            .collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub d_over_r0: f64,
    /// The curve rises somewhere around the crossing or crosses again later.
    pub non_monotone: bool,
}

/// First strength at which the capacity falls from `>= level` to
/// `< level`, linearly interpolated between the bracketing points.
pub fn find_crossing(curve: &CapacityCurve, level: f64) -> Result<Option<Crossing>> {
    let xs = curve.strengths();
    let ys = curve.capacities();
    if xs.len() < 2 {
        return Err(Error::InvalidParameter("a crossing needs at least two points".into()));
    }
    let Some(i) = (0..ys.len() - 1).find(|&i| ys[i] >= level && ys[i + 1] < level) else {
        return Ok(None);
    };
    let frac = (ys[i] - level) / (ys[i] - ys[i + 1]);
    let d_over_r0 = xs[i] + frac * (xs[i + 1] - xs[i]);
    let lo = i.saturating_sub(1);
    let hi = (i + 2).min(ys.len() - 1);
    let rises_nearby = (lo..hi).any(|k| ys[k + 1] > ys[k]);
    let recrosses = ys[i + 1..].iter().any(|&y| y >= level);
    Ok(Some(Crossing {
        d_over_r0,
        non_monotone: rises_nearby || recrosses,
    }))
}

/// Strength at which the capacity first falls `fraction` below `plateau`.
pub fn decay_onset(curve: &CapacityCurve, plateau: f64, fraction: f64) -> Result<Option<Crossing>> {
    find_crossing(curve, (1.0 - fraction) * plateau)
}
