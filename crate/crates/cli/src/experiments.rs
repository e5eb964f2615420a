//! The experiments behind each subcommand. Each takes a loaded
//! configuration, fills in defaults, computes, and then writes its files
//! together with the resolved configuration.

use std::path::{Path, PathBuf};

use oamturb_core::capacity::blahut_arimoto;
use oamturb_core::channel::analytic_crosstalk;
use oamturb_core::field::{make_ang_mode, make_oam_mode, AngIndex, OamIndex};
use oamturb_core::io::{csv_writer, fmt_sig};
use oamturb_core::sweep::{
    capacity_point, capacity_sweep, decay_onset, find_crossing, polarization_baseline, CapacityCurve,
    SweepConfig,
};
use oamturb_core::turbulence::{generate_screen, PhaseScreen, TurbulenceStrength};
use serde::Serialize;

use crate::config::{ExperimentConfig, Method, NormalizeArg, Parameters, SorterSpec, StrengthGrid};
use crate::error::CliError;
use crate::plot::{Plot, Series};

pub const FIG4_DIMENSIONS: [usize; 5] = [3, 5, 7, 9, 11];
pub const FIG4_STRENGTHS: StrengthGrid = StrengthGrid::log(0.1, 30.0, 30);
pub const FIG5_SPACINGS: [u32; 3] = [1, 2, 4];
pub const FIG5_STRENGTHS: StrengthGrid = StrengthGrid::log(0.01, 30.0, 50);
/// Relative drop from the plateau that marks the onset of decay.
pub const ONSET_FRACTION: f64 = 0.05;
pub const BASELINE_BITS: f64 = 1.0;

fn strength(x: f64) -> Result<TurbulenceStrength, CliError> {
    TurbulenceStrength::new(x).map_err(|e| CliError::Config(e.to_string()))
}

fn resolved(cfg: &ExperimentConfig, params: Parameters) -> ExperimentConfig {
    ExperimentConfig {
        parameters: params,
        ..cfg.clone()
    }
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn check_converged(curves: &[&CapacityCurve]) -> Result<(), CliError> {
    for c in curves {
        if !c.all_converged() {
            return Err(CliError::Convergence(format!(
                "Blahut-Arimoto did not converge on every point of {}",
                c.label
            )));
        }
    }
    Ok(())
}

fn common_sweep_defaults() -> Parameters {
    Parameters {
        method: Some(Method::Analytic),
        sorter: Some(SorterSpec::Sinc),
        normalize: Some(NormalizeArg::Postselect),
        tol: Some(oamturb_core::capacity::DEFAULT_TOL),
        max_iter: Some(oamturb_core::capacity::DEFAULT_MAX_ITER),
        quad_tol: Some(oamturb_core::quadrature::QuadratureOptions::default().tol),
        ..Default::default()
    }
}

fn mc_defaults(p: &mut Parameters) {
    if p.method == Some(Method::Mc) {
        let mc = Parameters {
            resolution: Some(512),
            physical_width: Some(1.0),
            aperture_radius: Some(0.25),
            subharmonics: Some(3),
            screens: Some(20),
            detector: Some(crate::config::DetectorArg::Annular),
            ..Default::default()
        };
        *p = p.with_defaults(&mc);
    }
}

/// `screen`: one phase screen as PNG and CSV.
pub fn run_screen(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let p = cfg.parameters.with_defaults(&Parameters {
        d_over_r0: Some(5.12),
        resolution: Some(512),
        physical_width: Some(1.0),
        aperture_radius: Some(0.25),
        subharmonics: Some(3),
        ..Default::default()
    });
    let grid = p.grid()?;
    let t = strength(p.d_over_r0.unwrap_or_default())?;
    let screen = if t.is_identity() {
        PhaseScreen::zero(grid)
    } else {
        generate_screen(&grid, t, cfg.seed, &p.synthesis()?)?
    };
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let files = vec![dir.join("screen.png"), dir.join("screen.csv")];
    screen.write_png(&files[0])?;
    screen.write_csv(&files[1])?;
    resolved(cfg, p).write_snapshot()?;
    Ok(files)
}

/// `mode`: an OAM mode (`oam = l`) or, when `ang` is set, the ANG mode
/// `n` of dimension `dimension`.
pub fn run_mode(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut defaults = Parameters {
        resolution: Some(512),
        physical_width: Some(1.0),
        aperture_radius: Some(0.25),
        ..Default::default()
    };
    if cfg.parameters.ang.is_some() {
        defaults.dimension = Some(3);
    } else {
        defaults.oam = Some(1);
    }
    let p = cfg.parameters.with_defaults(&defaults);
    let grid = p.grid()?;
    let (field, stem) = match p.ang {
        Some(n) => {
            let dim = p.dimension.unwrap_or(3);
            let idx = AngIndex::new(n, dim).map_err(|e| CliError::Config(e.to_string()))?;
            let f = make_ang_mode(&grid, idx).map_err(|e| CliError::Config(e.to_string()))?;
            (f, format!("ang_n{n}_of{dim}"))
        }
        None => {
            let l = p.oam.unwrap_or(1);
            (make_oam_mode(&grid, OamIndex(l)), format!("oam_l{l}"))
        }
    };
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let files = vec![
        dir.join(format!("{stem}_intensity.png")),
        dir.join(format!("{stem}_phase.png")),
        dir.join(format!("{stem}.csv")),
    ];
    field.write_intensity_png(&files[0])?;
    field.write_phase_png(&files[1])?;
    field.write_csv(&files[2])?;
    resolved(cfg, p).write_snapshot()?;
    Ok(files)
}

/// `crosstalk`: one crosstalk matrix after sorter and normalization.
pub fn run_crosstalk(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut defaults = common_sweep_defaults();
    defaults.dimension = Some(11);
    defaults.spacing = Some(1);
    defaults.d_over_r0 = Some(5.12);
    let mut p = cfg.parameters.with_defaults(&defaults);
    mc_defaults(&mut p);
    let sweep = p.sweep(p.dimension.unwrap_or(11), p.spacing.unwrap_or(1), cfg.seed)?;
    let t = strength(p.d_over_r0.unwrap_or_default())?;
    let raw = sweep.raw_matrix(t)?;
    let detected = sweep.detected_channel(&raw)?;
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let files = vec![dir.join("crosstalk_raw.csv"), dir.join("crosstalk.csv")];
    raw.write_csv(&files[0])?;
    detected.write_csv(&files[1])?;
    resolved(cfg, p).write_snapshot()?;
    Ok(files)
}

/// `capacity`: one capacity curve.
pub fn run_capacity(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut defaults = common_sweep_defaults();
    defaults.dimension = Some(3);
    defaults.spacing = Some(1);
    defaults.strengths = Some(FIG4_STRENGTHS);
    let mut p = cfg.parameters.with_defaults(&defaults);
    mc_defaults(&mut p);
    let (n, ms) = (p.dimension.unwrap_or(3), p.spacing.unwrap_or(1));
    let sweep = p.sweep(n, ms, cfg.seed)?;
    let strengths = p.strengths.unwrap_or(FIG4_STRENGTHS).values()?;
    let curve = capacity_sweep(&sweep, &strengths, format!("N={n} MS={ms}"))?;
    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let path = dir.join(format!("capacity_n{n}_ms{ms}.csv"));
    curve.write_csv(&path)?;
    resolved(cfg, p).write_snapshot()?;
    check_converged(&[&curve])?;
    Ok(vec![path])
}

/// Capacity with no turbulence for the same configuration.
fn plateau(sweep: &SweepConfig) -> Result<f64, CliError> {
    Ok(capacity_point(sweep, TurbulenceStrength::NONE)?.capacity())
}

fn write_plot(
    path: &Path,
    title: &str,
    csvs: &[(PathBuf, String)],
    baseline: &Path,
) -> Result<(), CliError> {
    let mut series = csvs
        .iter()
        .map(|(p, label)| Series::from_curve_csv(p, label.clone(), false))
        .collect::<Result<Vec<_>, _>>()?;
    series.push(Series::from_curve_csv(baseline, "polarization", true)?);
    Plot {
        title: title.into(),
        x_label: "D/r0".into(),
        y_label: "capacity (bits/photon)".into(),
        log_x: true,
        series,
    }
    .write(path)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fig4Row {
    pub dimension: usize,
    pub spacing: u32,
    pub zero_turbulence_capacity: f64,
    pub crossing_d_over_r0: Option<f64>,
    pub crossing_non_monotone: bool,
}

/// `fig4`: capacity against turbulence strength for several dimensions.
pub fn run_fig4(cfg: &ExperimentConfig) -> Result<Vec<PathBuf>, CliError> {
    let mut defaults = common_sweep_defaults();
    defaults.dimensions = Some(FIG4_DIMENSIONS.to_vec());
    defaults.spacing = Some(1);
    defaults.strengths = Some(FIG4_STRENGTHS);
    let mut p = cfg.parameters.with_defaults(&defaults);
    mc_defaults(&mut p);
    let strengths = p.strengths.unwrap_or(FIG4_STRENGTHS).values()?;
    let ms = p.spacing.unwrap_or(1);
    let dims = p.dimensions.clone().unwrap_or_default();
    if dims.is_empty() {
        return Err(CliError::Config("no dimensions to sweep".into()));
    }

    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for &n in &dims {
        let sweep = p.sweep(n, ms, cfg.seed)?;
        let curve = capacity_sweep(&sweep, &strengths, format!("N={n}"))?;
        let crossing = find_crossing(&curve, BASELINE_BITS)?;
        rows.push(Fig4Row {
            dimension: n,
            spacing: ms,
            zero_turbulence_capacity: plateau(&sweep)?,
            crossing_d_over_r0: crossing.map(|c| c.d_over_r0),
            crossing_non_monotone: crossing.is_some_and(|c| c.non_monotone),
        });
        curves.push(curve);
    }
    let baseline = polarization_baseline(&strengths)?;

    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut files = Vec::new();
    let mut csvs = Vec::new();
    for (n, curve) in dims.iter().zip(&curves) {
        let path = dir.join(format!("fig4_n{n}.csv"));
        curve.write_csv(&path)?;
        csvs.push((path.clone(), curve.label.clone()));
        files.push(path);
    }
    let base_path = dir.join("fig4_polarization.csv");
    baseline.write_csv(&base_path)?;
    files.push(base_path.clone());

    let summary = dir.join("fig4_summary.csv");
    let mut w = csv_writer(&summary)?;
    w.write_record([
        "dimension",
        "spacing",
        "zero_turbulence_capacity",
        "crossing_d_over_r0",
        "crossing_non_monotone",
    ])
    .map_err(oamturb_core::Error::from)?;
    for r in &rows {
        w.write_record([
            r.dimension.to_string(),
            r.spacing.to_string(),
            fmt_sig(r.zero_turbulence_capacity),
            r.crossing_d_over_r0.map_or_else(String::new, fmt_sig),
            r.crossing_non_monotone.to_string(),
        ])
        .map_err(oamturb_core::Error::from)?;
    }
    w.flush()?;
    files.push(summary);

    let svg = dir.join("fig4.svg");
    write_plot(&svg, "Capacity against turbulence strength", &csvs, &base_path)?;
    files.push(svg);
    resolved(cfg, p).write_snapshot()?;
    check_converged(&curves.iter().collect::<Vec<_>>())?;
    Ok(files)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderingCheck {
    pub higher_spacing: u32,
    pub lower_spacing: u32,
    pub holds: bool,
    /// Largest `C(lower) - C(higher)` over the grid (negative when it holds strictly).
    pub max_violation: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacingRow {
    pub spacing: u32,
    pub plateau: f64,
    pub low_turbulence_capacity: f64,
    pub onset_d_over_r0: Option<f64>,
    pub crossing_d_over_r0: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpacingReport {
    pub dimension: usize,
    pub onset_fraction: f64,
    pub rows: Vec<SpacingRow>,
    pub ordering: Vec<OrderingCheck>,
    /// Onset of the widest spacing over that of the narrowest.
    pub onset_ratio: Option<f64>,
}

/// Sum of the larger error bars at a point, zero for analytic curves.
fn point_tolerance(a: &CapacityCurve, b: &CapacityCurve, i: usize) -> f64 {
    let pa = &a.points[i];
    let pb = &b.points[i];
    pa.err_lo.max(pa.err_hi) + pb.err_lo.max(pb.err_hi)
}

/// `fig5`: the effect of widening the spacing between detected modes.
pub fn run_fig5(cfg: &ExperimentConfig) -> Result<(Vec<PathBuf>, SpacingReport), CliError> {
    let mut defaults = common_sweep_defaults();
    defaults.dimension = Some(3);
    defaults.spacings = Some(FIG5_SPACINGS.to_vec());
    defaults.strengths = Some(FIG5_STRENGTHS);
    let mut p = cfg.parameters.with_defaults(&defaults);
    mc_defaults(&mut p);
    let strengths = p.strengths.unwrap_or(FIG5_STRENGTHS).values()?;
    let n = p.dimension.unwrap_or(3);
    let mut spacings = p.spacings.clone().unwrap_or_default();
    spacings.sort_unstable();
    spacings.dedup();
    if spacings.is_empty() {
        return Err(CliError::Config("no spacings to sweep".into()));
    }

    let mut curves = Vec::new();
    let mut rows = Vec::new();
    for &ms in &spacings {
        let sweep = p.sweep(n, ms, cfg.seed)?;
        let curve = capacity_sweep(&sweep, &strengths, format!("MS={ms}"))?;
        let level = plateau(&sweep)?;
        rows.push(SpacingRow {
            spacing: ms,
            plateau: level,
            low_turbulence_capacity: curve.points[0].capacity(),
            onset_d_over_r0: decay_onset(&curve, level, ONSET_FRACTION)?.map(|c| c.d_over_r0),
            crossing_d_over_r0: find_crossing(&curve, BASELINE_BITS)?.map(|c| c.d_over_r0),
        });
        curves.push(curve);
    }
    let mut ordering = Vec::new();
    for k in 1..curves.len() {
        let (lo, hi) = (&curves[k - 1], &curves[k]);
        let mut worst = f64::NEG_INFINITY;
        let mut holds = true;
        let mut tolerance: f64 = 1e-9;
        for i in 0..strengths.len() {
            let tol = 1e-9 + point_tolerance(lo, hi, i);
            tolerance = tolerance.max(tol);
            let v = lo.points[i].capacity() - hi.points[i].capacity();
            worst = worst.max(v);
            holds &= v <= tol;
        }
        ordering.push(OrderingCheck {
            higher_spacing: spacings[k],
            lower_spacing: spacings[k - 1],
            holds,
            max_violation: worst,
            tolerance,
        });
    }
    let onset_ratio = match (rows.first().and_then(|r| r.onset_d_over_r0), rows.last().and_then(|r| r.onset_d_over_r0)) {
        (Some(a), Some(b)) if rows.len() > 1 => Some(b / a),
        _ => None,
    };
    let report = SpacingReport {
        dimension: n,
        onset_fraction: ONSET_FRACTION,
        rows,
        ordering,
        onset_ratio,
    };
    let baseline = polarization_baseline(&strengths)?;

    let dir = &cfg.output_dir;
    prepare_dir(dir)?;
    let mut files = Vec::new();
    let mut csvs = Vec::new();
    for (ms, curve) in spacings.iter().zip(&curves) {
        let path = dir.join(format!("fig5_ms{ms}.csv"));
        curve.write_csv(&path)?;
        csvs.push((path.clone(), curve.label.clone()));
        files.push(path);
    }
    let base_path = dir.join("fig5_polarization.csv");
    baseline.write_csv(&base_path)?;
    files.push(base_path.clone());

    let summary = dir.join("fig5_summary.csv");
    let mut w = csv_writer(&summary)?;
    w.write_record(["spacing", "plateau", "low_turbulence_capacity", "onset_d_over_r0", "crossing_d_over_r0"])
        .map_err(oamturb_core::Error::from)?;
    for r in &report.rows {
        w.write_record([
            r.spacing.to_string(),
            fmt_sig(r.plateau),
            fmt_sig(r.low_turbulence_capacity),
            r.onset_d_over_r0.map_or_else(String::new, fmt_sig),
            r.crossing_d_over_r0.map_or_else(String::new, fmt_sig),
        ])
        .map_err(oamturb_core::Error::from)?;
    }
    w.flush()?;
    files.push(summary);
    let ordering_path = dir.join("fig5_ordering.json");
    std::fs::write(&ordering_path, serde_json::to_string_pretty(&report).expect("report serialises") + "\n")?;
    files.push(ordering_path);

    let svg = dir.join("fig5.svg");
    write_plot(&svg, &format!("Mode spacing, N = {n}"), &csvs, &base_path)?;
    files.push(svg);
    resolved(cfg, p).write_snapshot()?;
    check_converged(&curves.iter().collect::<Vec<_>>())?;
    Ok((files, report))
}

/// Sanity probe used by `validate`: the identity channel's capacity.
pub(crate) fn identity_capacity(n: usize) -> Result<f64, CliError> {
    let sweep = SweepConfig::analytic(n, 1).with_sorter(oamturb_core::channel::SorterModel::Ideal);
    let m = sweep.channel(TurbulenceStrength::NONE)?;
    Ok(blahut_arimoto(&m, sweep.tol, sweep.max_iter)?.capacity)
}

/// `P(delta)` at zero turbulence via the quadrature path, for `validate`.
pub(crate) fn vanishing_strength_crosstalk(delta: i32) -> Result<f64, CliError> {
    Ok(analytic_crosstalk(delta, strength(1e-9)?, &Default::default())?)
}
