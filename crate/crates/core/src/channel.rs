//! OAM crosstalk channels: the analytic thin-screen result, its Monte Carlo
//! counterpart, sorter response and leakage normalization.
//!
//! Matrices are column-stochastic in the sent mode: `entries[[d, s]]` is the
//! probability of detecting mode `d` given that `s` was sent. Under the
//! erasure policy an extra final row holds the probability of the photon
//! landing outside the detected set.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{make_oam_mode, overlap, ComplexField, GridSpec, OamIndex, RingProjector};
use crate::io;
use crate::quadrature::{adaptive, GaussLegendre, QuadratureOptions};
use crate::turbulence::{ensemble_screen, PhaseScreen, ScreenSynthesisOptions, TurbulenceStrength};

/// Exponent coefficient of the thin-screen mutual coherence.
const COHERENCE_COEFFICIENT: f64 = 3.44;

/// Detected OAM indices `center + (i - offset) * spacing`, `i = 0..N`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSet {
    dimension: usize,
    center: i32,
    spacing: u32,
}

impl ModeSet {
    pub fn new(dimension: usize, center: i32, spacing: u32) -> Result<Self> {
        if dimension < 2 {
            return Err(Error::InvalidParameter(format!(
                "mode set needs at least 2 modes, got {dimension}"
            )));
        }
        if spacing == 0 {
            return Err(Error::InvalidParameter("mode spacing must be at least 1".into()));
        }
        let reach = (dimension as i64) * spacing as i64 + center.unsigned_abs() as i64;
        if reach > i32::MAX as i64 / 2 {
            return Err(Error::InvalidParameter("mode indices overflow".into()));
        }
        Ok(Self {
            dimension,
            center,
            spacing,
        })
    }

    /// `N` modes centred on 0.
    pub fn centered(dimension: usize, spacing: u32) -> Result<Self> {
        Self::new(dimension, 0, spacing)
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn center(&self) -> i32 {
        self.center
    }

    pub fn spacing(&self) -> u32 {
        self.spacing
    }

    pub fn indices(&self) -> Vec<i32> {
        let offset = if self.dimension % 2 == 1 {
            (self.dimension as i32 - 1) / 2
        } else {
            self.dimension as i32 / 2
        };
        (0..self.dimension as i32)
            .map(|i| self.center + (i - offset) * self.spacing as i32)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// Raw detected probabilities; columns sum to at most 1.
    #[default]
    Subunital,
    /// Each column rescaled to sum to 1.
    Postselected,
    /// Extra loss row so that each column sums to 1.
    Erasure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Analytic,
    MonteCarlo { num_screens: usize, seed: u64 },
    Measured,
}

const SUM_TOL: f64 = 1e-9;

/// A crosstalk matrix with its labelling metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrosstalkMatrix {
    pub modes: ModeSet,
    pub strength: TurbulenceStrength,
    pub normalization: Normalization,
    pub provenance: Provenance,
    entries: Array2<f64>,
    standard_errors: Option<Array2<f64>>,
}

impl CrosstalkMatrix {
    /// Checks shape, range and column sums against `normalization`.
    pub fn new(
        modes: ModeSet,
        strength: TurbulenceStrength,
        normalization: Normalization,
        provenance: Provenance,
        entries: Array2<f64>,
        standard_errors: Option<Array2<f64>>,
    ) -> Result<Self> {
        let n = modes.dimension();
        let rows = if normalization == Normalization::Erasure { n + 1 } else { n };
        if entries.dim() != (rows, n) {
            return Err(Error::ShapeMismatch {
                expected: format!("{rows}x{n}"),
                found: format!("{}x{}", entries.nrows(), entries.ncols()),
            });
        }
        if let Some(se) = &standard_errors {
            if se.dim() != entries.dim() {
                return Err(Error::ShapeMismatch {
                    expected: format!("{rows}x{n}"),
                    found: format!("{}x{}", se.nrows(), se.ncols()),
                });
            }
        }
        for &v in entries.iter() {
            if !(-SUM_TOL..=1.0 + SUM_TOL).contains(&v) || !v.is_finite() {
                return Err(Error::OutOfRange { value: v });
            }
        }
        for (column, col) in entries.axis_iter(Axis(1)).enumerate() {
            let sum = col.sum();
            let ok = match normalization {
                Normalization::Subunital => sum <= 1.0 + SUM_TOL,
                _ => (sum - 1.0).abs() <= SUM_TOL,
            };
            if !ok {
                return Err(Error::NotStochastic { column, sum });
            }
        }
        Ok(Self {
            modes,
            strength,
            normalization,
            provenance,
            entries: entries.mapv(|v| v.clamp(0.0, 1.0)),
            standard_errors,
        })
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn standard_errors(&self) -> Option<&Array2<f64>> {
        self.standard_errors.as_ref()
    }

    pub fn dimension(&self) -> usize {
        self.modes.dimension()
    }

    /// The detected block without any loss row.
    pub fn detected(&self) -> Array2<f64> {
        let n = self.dimension();
        self.entries.slice(ndarray::s![..n, ..]).to_owned()
    }

    pub fn column_sums(&self) -> Array1<f64> {
        self.entries.sum_axis(Axis(0))
    }

    pub fn is_stochastic(&self) -> bool {
        self.normalization != Normalization::Subunital
    }

    /// Copy with entries replaced, keeping metadata; used for perturbation.
    pub fn with_entries(&self, entries: Array2<f64>) -> Result<Self> {
        Self::new(
            self.modes,
            self.strength,
            self.normalization,
            self.provenance,
            entries,
            None,
        )
    }

    /// Writes `path` as CSV and a JSON sidecar next to it.
    ///
    /// The header names the sent indices; the first column names the
    /// detected index, or `loss` for the erasure row.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let idx = self.modes.indices();
        let mut w = io::csv_writer(path)?;
        let mut header = vec!["detected".to_string()];
        header.extend(idx.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for (r, row) in self.entries.axis_iter(Axis(0)).enumerate() {
            let label = idx.get(r).map_or_else(|| "loss".to_string(), |d| d.to_string());
            let mut rec = vec![label];
            rec.extend(row.iter().map(|&v| io::fmt_sig(v)));
            w.write_record(&rec)?;
        }
        w.flush()?;

        let sidecar = Sidecar {
            mode_set: self.modes,
            indices: idx,
            d_over_r0: self.strength.d_over_r0(),
            normalization: self.normalization,
            provenance: self.provenance,
            standard_errors: self
                .standard_errors
                .as_ref()
                .map(|se| se.outer_iter().map(|r| r.to_vec()).collect()),
        };
        let file = std::fs::File::create(sidecar_path(path))?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &sidecar)?;
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    mode_set: ModeSet,
    indices: Vec<i32>,
    d_over_r0: f64,
    normalization: Normalization,
    provenance: Provenance,
    standard_errors: Option<Vec<Vec<f64>>>,
}

/// `foo.csv` -> `foo.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// A matrix file as written by [`CrosstalkMatrix::write_csv`].
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixTable {
    pub sent: Vec<i32>,
    pub detected: Vec<String>,
    pub values: Array2<f64>,
}

pub fn read_matrix_csv(path: impl AsRef<Path>) -> Result<MatrixTable> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = r.headers()?.clone();
    let sent = header
        .iter()
        .skip(1)
        .map(|h| h.trim().parse::<i32>().map_err(|_| Error::Parse(format!("bad sent index {h:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut detected = Vec::new();
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != sent.len() + 1 {
            return Err(Error::Parse(format!(
                "row has {} fields, expected {}",
                rec.len(),
                sent.len() + 1
            )));
        }
        detected.push(rec[0].trim().to_string());
        for v in rec.iter().skip(1) {
            values.push(
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad number {v:?}")))?,
            );
        }
    }
    let values = Array2::from_shape_vec((detected.len(), sent.len()), values)
        .map_err(|e| Error::Parse(e.to_string()))?;
    Ok(MatrixTable {
        sent,
        detected,
        values,
    })
}

fn radial_rule(quad: &QuadratureOptions) -> (Vec<f64>, Vec<f64>) {
    GaussLegendre::new(quad.radial_nodes.max(1))
        .on_interval(0.0, 1.0)
        .map(|(rho, w)| (rho.powf(5.0 / 3.0), w * rho))
        .unzip()
}

/// Probability of detecting `s + delta` after sending `s` through a
/// Kolmogorov thin screen of strength `D/r0`:
///
/// `(1/pi) int_0^1 rho drho int_0^{2pi} exp[-3.44 (D/r0)^{5/3} (rho sin(theta/2))^{5/3}] cos(delta theta) dtheta`.
///
/// The angular integral is folded onto `[0, pi]` and integrated adaptively;
/// the radial one uses a fixed Gauss-Legendre rule.
pub fn analytic_crosstalk(delta: i32, strength: TurbulenceStrength, quad: &QuadratureOptions) -> Result<f64> {
    if !(quad.tol > 0.0) {
        return Err(Error::InvalidParameter("quadrature tolerance must be positive".into()));
    }
    if strength.is_identity() {
        return Ok(if delta == 0 { 1.0 } else { 0.0 });
    }
    let (rho53, weights) = radial_rule(quad);
    let a = COHERENCE_COEFFICIENT * strength.d_over_r0().powf(5.0 / 3.0);
    let k = delta.unsigned_abs() as f64;
    let integrand = |theta: f64| {
        let s = a * (0.5 * theta).sin().powf(5.0 / 3.0);
        let radial: f64 = rho53
            .iter()
            .zip(&weights)
            .map(|(&r, &w)| w * (-s * r).exp())
            .sum();
        radial * (k * theta).cos()
    };
    // one initial panel per half period keeps the oscillation resolved
    let panels = (delta.unsigned_abs() as usize + 1).min(quad.max_panels / 2).max(1);
    let breaks: Vec<f64> = (1..panels).map(|i| PI * i as f64 / panels as f64).collect();
    let scale = 2.0 / PI;
    let integral = adaptive(integrand, 0.0, PI, &breaks, quad.tol / scale, quad.max_panels)?;
    let p = scale * integral.value;
    if p < 0.0 {
        if p < -quad.tol {
            return Err(Error::OutOfRange { value: p });
        }
        return Ok(0.0);
    }
    if p > 1.0 {
        if p > 1.0 + quad.tol {
            return Err(Error::OutOfRange { value: p });
        }
        return Ok(1.0);
    }
    Ok(p)
}

/// `sum_{|delta| <= k} P(delta)`.
pub fn partial_sum(k: u32, strength: TurbulenceStrength, quad: &QuadratureOptions) -> Result<f64> {
    let terms = (0..=k as i32)
        .into_par_iter()
        .map(|d| analytic_crosstalk(d, strength, quad).map(|p| if d == 0 { p } else { 2.0 * p }))
        .collect::<Result<Vec<_>>>()?;
    Ok(terms.iter().sum())
}

/// Analytic matrix over `modes`, subunital.
pub fn analytic_matrix(modes: ModeSet, strength: TurbulenceStrength, quad: &QuadratureOptions) -> Result<CrosstalkMatrix> {
    let n = modes.dimension();
    let ms = modes.spacing() as i32;
    let profile = (0..n as i32)
        .into_par_iter()
        .map(|k| analytic_crosstalk(k * ms, strength, quad))
        .collect::<Result<Vec<_>>>()?;
    let entries = Array2::from_shape_fn((n, n), |(d, s)| profile[d.abs_diff(s)]);
    CrosstalkMatrix::new(
        modes,
        strength,
        Normalization::Subunital,
        Provenance::Analytic,
        entries,
        None,
    )
}

/// How detected-mode probabilities are read off a distorted field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Detector {
    /// Angular-spectrum weight of `l`, summed over one-pixel rings. This is
    /// the quantity the analytic expression computes.
    #[default]
    Annular,
    /// Squared overlap with the flat-top vortex filling the aperture.
    Aperture,
}

enum Projector {
    Annular(RingProjector),
    Aperture(ComplexField),
}

impl Projector {
    fn detect(&self, field: &ComplexField) -> Result<f64> {
        match self {
            Projector::Annular(p) => p.detect(field),
            Projector::Aperture(mode) => Ok(overlap(mode, field)?.norm_sqr()),
        }
    }
}

/// Monte Carlo crosstalk over `num_screens` screens drawn from `seed`.
///
/// Screen `k` uses the per-index seed of [`ensemble_screen`], and the
/// per-screen results are summed in index order, so the result does not
/// depend on the thread count.
pub fn montecarlo_matrix(
    modes: ModeSet,
    strength: TurbulenceStrength,
    num_screens: usize,
    seed: u64,
    grid: &GridSpec,
    opts: &ScreenSynthesisOptions,
    detector: Detector,
) -> Result<CrosstalkMatrix> {
    if num_screens == 0 {
        return Err(Error::InvalidParameter("at least one screen is required".into()));
    }
    opts.validate()?;
    let n = modes.dimension();
    let indices = modes.indices();
    let sent: Vec<ComplexField> = indices.iter().map(|&l| make_oam_mode(grid, OamIndex(l))).collect();
    let projectors: Vec<Projector> = indices
        .iter()
        .zip(&sent)
        .map(|(&l, mode)| match detector {
            Detector::Annular => Projector::Annular(RingProjector::new(grid, OamIndex(l))),
            Detector::Aperture => Projector::Aperture(mode.clone()),
        })
        .collect();

    let trial = |k: usize| -> Result<Array2<f64>> {
        let screen = if strength.is_identity() {
            PhaseScreen::zero(*grid)
        } else {
            ensemble_screen(grid, strength, seed, k as u64, opts)?
        };
        let phasor = screen.phase().mapv(|p| Complex64::from_polar(1.0, p));
        let mut out = Array2::zeros((n, n));
        for (s, mode) in sent.iter().enumerate() {
            let distorted = ComplexField::new(*grid, mode.samples() * &phasor)?;
            for (d, proj) in projectors.iter().enumerate() {
                out[[d, s]] = proj.detect(&distorted)?;
            }
        }
        Ok(out)
    };
    let trials = (0..num_screens)
        .into_par_iter()
        .map(trial)
        .collect::<Result<Vec<_>>>()?;

    let m = num_screens as f64;
    let mut mean = Array2::<f64>::zeros((n, n));
    for t in &trials {
        mean += t;
    }
    mean /= m;
    let standard_errors = (num_screens > 1).then(|| {
        let mut ss = Array2::<f64>::zeros((n, n));
        for t in &trials {
            ss += &(t - &mean).mapv(|v| v * v);
        }
        ss.mapv(|v| (v / (m - 1.0) / m).sqrt())
    });
    // discretisation can push column sums a hair above 1
    for mut col in mean.axis_iter_mut(Axis(1)) {
        let sum = col.sum();
        if sum > 1.0 {
            col /= sum;
        }
    }
    CrosstalkMatrix::new(
        modes,
        strength,
        Normalization::Subunital,
        Provenance::MonteCarlo { num_screens, seed },
        mean,
        standard_errors,
    )
}

/// Response of the mode sorter, `S[d_out, d_true]` over the detected set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SorterModel {
    Ideal,
    /// Each mode lands as a sinc-amplitude spot; the detector for `d`
    /// integrates the unit-normalised `sinc^2` over a unit-width bin at `d`.
    SincBinned,
    Measured(Array2<f64>),
}

/// `int_a^b sinc^2(x) dx` with `sinc(x) = sin(pi x) / (pi x)`.
pub fn sinc2_integral(a: f64, b: f64) -> f64 {
    let rule = sinc_rule();
    let sinc2 = |x: f64| {
        if x.abs() < 1e-8 {
            1.0
        } else {
            let s = (PI * x).sin() / (PI * x);
            s * s
        }
    };
    // unit-width pieces keep the rule well inside its exactness range
    let pieces = ((b - a).abs().ceil() as usize).max(1);
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| rule.integrate(a + i as f64 * h, a + (i + 1) as f64 * h, sinc2))
        .sum()
}

fn sinc_rule() -> &'static GaussLegendre {
    static RULE: std::sync::OnceLock<GaussLegendre> = std::sync::OnceLock::new();
    RULE.get_or_init(|| GaussLegendre::new(40))
}

impl SorterModel {
    /// Loads a measured response in the matrix CSV format; the header must
    /// name the true indices and rows the detected ones.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let table = read_matrix_csv(path)?;
        if table.values.nrows() != table.values.ncols() {
            return Err(Error::Parse(format!(
                "sorter matrix must be square, found {}x{}",
                table.values.nrows(),
                table.values.ncols()
            )));
        }
        Ok(SorterModel::Measured(table.values))
    }

    pub fn response(&self, modes: &ModeSet) -> Result<Array2<f64>> {
        let n = modes.dimension();
        let idx = modes.indices();
        let s = match self {
            SorterModel::Ideal => Array2::eye(n),
            SorterModel::SincBinned => Array2::from_shape_fn((n, n), |(d, t)| {
                let offset = (idx[d] - idx[t]) as f64;
                sinc2_integral(offset - 0.5, offset + 0.5)
            }),
            SorterModel::Measured(m) => {
                if m.dim() != (n, n) {
                    return Err(Error::ShapeMismatch {
                        expected: format!("{n}x{n}"),
                        found: format!("{}x{}", m.nrows(), m.ncols()),
                    });
                }
                m.clone()
            }
        };
        for &v in s.iter() {
            if !(0.0..=1.0 + SUM_TOL).contains(&v) {
                return Err(Error::OutOfRange { value: v });
            }
        }
        for (column, col) in s.axis_iter(Axis(1)).enumerate() {
            let sum = col.sum();
            if sum > 1.0 + SUM_TOL {
                return Err(Error::NotStochastic { column, sum });
            }
        }
        Ok(s)
    }
}

/// Composes the turbulence channel with the sorter: `S * P` on the detected
/// block, then re-establishes the matrix's normalization (the erasure loss
/// row is recomputed and postselected columns are rescaled).
pub fn apply_sorter(matrix: &CrosstalkMatrix, sorter: &SorterModel) -> Result<CrosstalkMatrix> {
    let s = sorter.response(&matrix.modes)?;
    let block = s.dot(&matrix.detected());
    let se = matrix.standard_errors().map(|se| {
        let n = matrix.dimension();
        let var = se.slice(ndarray::s![..n, ..]).mapv(|v| v * v);
        s.mapv(|v| v * v).dot(&var).mapv(f64::sqrt)
    });
    let sub = CrosstalkMatrix::new(
        matrix.modes,
        matrix.strength,
        Normalization::Subunital,
        matrix.provenance,
        block,
        se,
    )?;
    normalize(&sub, matrix.normalization)
}

/// Applies a leakage policy to the detected block of `matrix`.
pub fn normalize(matrix: &CrosstalkMatrix, policy: Normalization) -> Result<CrosstalkMatrix> {
    let n = matrix.dimension();
    let mut block = matrix.detected();
    let mut se = matrix
        .standard_errors()
        .map(|se| se.slice(ndarray::s![..n, ..]).to_owned());
    let entries = match policy {
        Normalization::Subunital => block,
        Normalization::Postselected => {
            for (column, mut col) in block.axis_iter_mut(Axis(1)).enumerate() {
                let sum = col.sum();
                if sum <= 0.0 {
                    return Err(Error::ZeroColumn { column });
                }
                col /= sum;
                if let Some(se) = se.as_mut() {
                    se.column_mut(column).mapv_inplace(|v| v / sum);
                }
            }
            block
        }
        Normalization::Erasure => {
            let loss = block.sum_axis(Axis(0)).mapv(|c| (1.0 - c).max(0.0));
            if let Some(e) = se.take() {
                // root-sum-square, ignoring correlations between entries
                let loss_se = e.mapv(|v| v * v).sum_axis(Axis(0)).mapv(f64::sqrt);
                let mut full = e;
                full.push_row(loss_se.view()).expect("row length matches");
                se = Some(full);
            }
            let mut full = block;
            full.push_row(loss.view()).expect("row length matches");
            full
        }
    };
    CrosstalkMatrix::new(matrix.modes, matrix.strength, policy, matrix.provenance, entries, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn t(x: f64) -> TurbulenceStrength {
        TurbulenceStrength::new(x).unwrap()
    }

    #[test]
    fn mode_set_indices() {
        assert_eq!(ModeSet::centered(3, 1).unwrap().indices(), vec![-1, 0, 1]);
        assert_eq!(ModeSet::centered(3, 4).unwrap().indices(), vec![-4, 0, 4]);
        assert_eq!(ModeSet::new(5, 2, 2).unwrap().indices(), vec![-2, 0, 2, 4, 6]);
        assert_eq!(ModeSet::centered(4, 1).unwrap().indices(), vec![-2, -1, 0, 1]);
        assert!(ModeSet::centered(1, 1).is_err());
        assert!(ModeSet::centered(3, 0).is_err());
    }

    #[test]
    fn no_turbulence_is_kronecker_delta() {
        let q = QuadratureOptions::default();
        assert_abs_diff_eq!(analytic_crosstalk(0, t(0.0), &q).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(analytic_crosstalk(3, t(0.0), &q).unwrap(), 0.0, epsilon = 1e-9);
        // the quadrature path itself, at vanishing strength
        assert_abs_diff_eq!(analytic_crosstalk(0, t(1e-9), &q).unwrap(), 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(analytic_crosstalk(3, t(1e-9), &q).unwrap(), 0.0, epsilon = 1e-9);
    }

    #[test]
    fn crosstalk_is_even_in_delta() {
        let q = QuadratureOptions::default();
        for d in 1..6 {
            let a = analytic_crosstalk(d, t(5.12), &q).unwrap();
            let b = analytic_crosstalk(-d, t(5.12), &q).unwrap();
            assert_eq!(a, b);
        }
    }

    /// Independent oracle: the angular integral evaluated by Gauss-Legendre
    /// in the variable u = theta^{1/3}, which removes the kink at 0.
    fn substituted_oracle(delta: i32, d_over_r0: f64) -> f64 {
        let a = COHERENCE_COEFFICIENT * d_over_r0.powf(5.0 / 3.0);
        let rho = GaussLegendre::new(200);
        let ang = GaussLegendre::new(200);
        let top = PI.cbrt();
        let mut total = 0.0;
        for panel in 0..8 {
            let (lo, hi) = (top * panel as f64 / 8.0, top * (panel + 1) as f64 / 8.0);
            total += ang.integrate(lo, hi, |u| {
                let th = u * u * u;
                let s = a * (0.5 * th).sin().powf(5.0 / 3.0);
                let g = rho.integrate(0.0, 1.0, |r| r * (-s * r.powf(5.0 / 3.0)).exp());
                3.0 * u * u * g * (delta as f64 * th).cos()
            });
        }
        2.0 / PI * total
    }

    #[test]
    fn quadrature_matches_substituted_oracle() {
        let q = QuadratureOptions::default();
        for &x in &[1.0, 5.12, 10.25] {
            for d in [0, 1, 2, 5] {
                let got = analytic_crosstalk(d, t(x), &q).unwrap();
                let want = substituted_oracle(d, x);
                assert_abs_diff_eq!(got, want, epsilon = 1e-7);
            }
        }
    }

    #[test]
    fn diagonal_decreases_with_strength() {
        let q = QuadratureOptions::default();
        let mut prev = 1.0;
        for i in 0..=30 {
            let x = 0.1 * 300f64.powf(i as f64 / 30.0);
            let p0 = analytic_crosstalk(0, t(x), &q).unwrap();
            assert!(p0 <= prev + 1e-12, "P0({x}) = {p0} > {prev}");
            prev = p0;
        }
    }

    #[test]
    fn crosstalk_decreases_with_index_gap() {
        let q = QuadratureOptions::default();
        for &x in &[0.5, 3.0, 10.0, 30.0] {
            let mut prev = f64::INFINITY;
            for d in 0..=20 {
                let p = analytic_crosstalk(d, t(x), &q).unwrap();
                assert!(p > 0.0 && p < prev, "D/r0 {x} delta {d}");
                prev = p;
            }
        }
    }

    #[test]
    fn partial_sums_rise_towards_one() {
        // P(delta) ~ c delta^{-8/3}, so the tail beyond K is ~ (3/5) c K^{-5/3};
        // extrapolating from K = 50 removes most of the truncation error
        let q = QuadratureOptions::default();
        for &x in &[1.0, 5.0, 10.0] {
            let mut sum = analytic_crosstalk(0, t(x), &q).unwrap();
            let mut prev = sum;
            let mut last = 0.0;
            for d in 1..=50 {
                last = analytic_crosstalk(d, t(x), &q).unwrap();
                sum += 2.0 * last;
                assert!(sum > prev);
                prev = sum;
            }
            assert!(sum < 1.0 + 1e-8);
            let c = last * 50f64.powf(8.0 / 3.0);
            let tail = 2.0 * c * 0.6 * 50.5f64.powf(-5.0 / 3.0);
            let extrapolated = sum + tail;
            assert!((extrapolated - 1.0).abs() < 0.25 * (1.0 - sum), "D/r0 {x}: {sum} -> {extrapolated}");
        }
    }

    #[test]
    fn analytic_matrix_is_symmetric_toeplitz() {
        let q = QuadratureOptions::default();
        let m = analytic_matrix(ModeSet::centered(5, 2).unwrap(), t(3.0), &q).unwrap();
        let e = m.entries();
        for i in 0..5 {
            for j in 0..5 {
                assert_eq!(e[[i, j]], e[[j, i]]);
                assert_eq!(e[[i, j]], e[[0, i.abs_diff(j)]]);
            }
        }
        assert_abs_diff_eq!(e[[0, 1]], analytic_crosstalk(2, t(3.0), &q).unwrap(), epsilon = 0.0);
        let id = analytic_matrix(ModeSet::centered(4, 1).unwrap(), t(0.0), &q).unwrap();
        assert_eq!(id.entries(), &Array2::<f64>::eye(4));
    }

    #[test]
    fn wider_spacing_reduces_crosstalk() {
        let q = QuadratureOptions::default();
        for &x in &[0.3, 1.0, 5.0, 20.0] {
            let a = analytic_matrix(ModeSet::centered(3, 1).unwrap(), t(x), &q).unwrap();
            let b = analytic_matrix(ModeSet::centered(3, 4).unwrap(), t(x), &q).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(b.entries()[[i, j]] < a.entries()[[i, j]]);
                    }
                }
            }
        }
    }

    #[test]
    fn normalization_policies() {
        let modes = ModeSet::centered(2, 1).unwrap();
        let raw = Array2::from_shape_vec((2, 2), vec![0.6, 0.1, 0.2, 0.7]).unwrap();
        let m = CrosstalkMatrix::new(modes, t(1.0), Normalization::Subunital, Provenance::Analytic, raw, None).unwrap();
        let e = normalize(&m, Normalization::Erasure).unwrap();
        assert_eq!(e.entries().nrows(), 3);
        assert_abs_diff_eq!(e.entries()[[2, 0]], 0.2, epsilon = 1e-15);
        assert_abs_diff_eq!(e.entries()[[2, 1]], 0.2, epsilon = 1e-15);
        let p = normalize(&m, Normalization::Postselected).unwrap();
        assert_abs_diff_eq!(p.entries()[[0, 0]], 0.75, epsilon = 1e-15);
        for s in p.column_sums() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
        // already stochastic input is left alone
        let again = normalize(&p, Normalization::Postselected).unwrap();
        for (a, b) in again.entries().iter().zip(p.entries()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        let zero = CrosstalkMatrix::new(modes, t(1.0), Normalization::Subunital, Provenance::Analytic, Array2::zeros((2, 2)), None).unwrap();
        assert!(matches!(normalize(&zero, Normalization::Postselected), Err(Error::ZeroColumn { column: 0 })));
    }

    #[test]
    fn postselected_analytic_columns_sum_to_one() {
        let q = QuadratureOptions::default();
        let m = analytic_matrix(ModeSet::centered(3, 1).unwrap(), t(3.0), &q).unwrap();
        let p = normalize(&m, Normalization::Postselected).unwrap();
        for s in p.column_sums() {
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn rejects_invalid_matrices() {
        let modes = ModeSet::centered(2, 1).unwrap();
        let bad = Array2::from_shape_vec((2, 2), vec![0.9, 0.1, 0.2, 0.7]).unwrap();
        assert!(CrosstalkMatrix::new(modes, t(1.0), Normalization::Subunital, Provenance::Analytic, bad, None).is_err());
        let neg = Array2::from_shape_vec((2, 2), vec![-0.1, 0.0, 0.0, 1.0]).unwrap();
        assert!(CrosstalkMatrix::new(modes, t(1.0), Normalization::Subunital, Provenance::Analytic, neg, None).is_err());
        assert!(CrosstalkMatrix::new(modes, t(1.0), Normalization::Subunital, Provenance::Analytic, Array2::zeros((3, 2)), None).is_err());
    }

    /// `Si(x)` by its power series; cancellation limits it to |x| < 16.
    fn si(x: f64) -> f64 {
        let mut sum = 0.0;
        // (-1)^k x^{2k+1} / (2k+1)!
        let mut term = x;
        for k in 0..200 {
            sum += term / (2 * k + 1) as f64;
            term *= -x * x / ((2 * k + 2) as f64 * (2 * k + 3) as f64);
        }
        sum
    }

    fn sinc2_antiderivative(x: f64) -> f64 {
        if x == 0.0 {
            return 0.0;
        }
        si(2.0 * PI * x) / PI - (PI * x).sin().powi(2) / (PI * PI * x)
    }

    #[test]
    fn sinc_bins_match_closed_form() {
        for offset in -2..=2 {
            let o = offset as f64;
            let want = sinc2_antiderivative(o + 0.5) - sinc2_antiderivative(o - 0.5);
            assert_abs_diff_eq!(sinc2_integral(o - 0.5, o + 0.5), want, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(sinc2_integral(-0.5, 0.5), 0.773695009903, epsilon = 1e-11);
        // the bins tile the line; the two tails beyond L hold ~ 1 / (pi^2 L)
        let k = 200;
        let total: f64 = (-k..=k).map(|o| sinc2_integral(o as f64 - 0.5, o as f64 + 0.5)).sum();
        let tail = 1.0 / (PI * PI * (k as f64 + 0.5));
        assert_abs_diff_eq!(total + tail, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn sorter_composition() {
        let q = QuadratureOptions::default();
        let modes = ModeSet::centered(11, 1).unwrap();
        let m = normalize(&analytic_matrix(modes, t(2.0), &q).unwrap(), Normalization::Postselected).unwrap();
        let ideal = apply_sorter(&m, &SorterModel::Ideal).unwrap();
        for (a, b) in ideal.entries().iter().zip(m.entries()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }

        let id = analytic_matrix(modes, t(0.0), &q).unwrap();
        let sorted = apply_sorter(&id, &SorterModel::SincBinned).unwrap();
        for i in 0..11 {
            assert!(sorted.entries()[[i, i]] < 1.0);
        }

    }

    #[test]
    fn stochastic_compositions_multiply_column_sums() {
        let modes = ModeSet::centered(3, 1).unwrap();
        let p = Array2::from_shape_vec((3, 3), vec![0.5, 0.2, 0.1, 0.3, 0.6, 0.2, 0.2, 0.2, 0.7]).unwrap();
        let m = CrosstalkMatrix::new(modes, t(1.0), Normalization::Subunital, Provenance::Analytic, p, None).unwrap();
        // sorter with column sums 0.9, 1, 0.8 on every column of a stochastic input
        let s = Array2::from_shape_vec((3, 3), vec![0.8, 0.0, 0.1, 0.1, 1.0, 0.0, 0.0, 0.0, 0.7]).unwrap();
        let out = apply_sorter(&m, &SorterModel::Measured(s.clone())).unwrap();
        let expected = s.sum_axis(Axis(0)).dot(m.entries());
        for (a, b) in out.column_sums().iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn csv_round_trip_and_measured_sorter() {
        let dir = tempfile::tempdir().unwrap();
        let q = QuadratureOptions::default();
        let modes = ModeSet::centered(3, 2).unwrap();
        let m = normalize(&analytic_matrix(modes, t(2.0), &q).unwrap(), Normalization::Erasure).unwrap();
        let path = dir.path().join("m.csv");
        m.write_csv(&path).unwrap();
        let table = read_matrix_csv(&path).unwrap();
        assert_eq!(table.sent, vec![-2, 0, 2]);
        assert_eq!(table.detected, vec!["-2", "0", "2", "loss"]);
        for (a, b) in table.values.iter().zip(m.entries()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-11);
        }
        let sidecar: serde_json::Value =
            serde_json::from_reader(std::fs::File::open(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(sidecar["normalization"], "erasure");
        assert_eq!(sidecar["provenance"]["kind"], "analytic");

        let sp = dir.path().join("sorter.csv");
        std::fs::write(&sp, "detected,-2,0,2\n-2,0.9,0.05,0\n0,0.1,0.9,0.1\n2,0,0.05,0.9\n").unwrap();
        let sorter = SorterModel::from_csv(&sp).unwrap();
        assert_eq!(sorter.response(&modes).unwrap()[[1, 1]], 0.9);
        assert!(sorter.response(&ModeSet::centered(5, 1).unwrap()).is_err());
    }

    fn small_grid() -> GridSpec {
        GridSpec::new(128, 1.0, 0.25).unwrap()
    }

    #[test]
    fn montecarlo_without_turbulence_is_identity() {
        let g = small_grid();
        let modes = ModeSet::centered(5, 1).unwrap();
        let m = montecarlo_matrix(modes, t(0.0), 2, 1, &g, &Default::default(), Detector::Aperture).unwrap();
        for ((i, j), &v) in m.entries().indexed_iter() {
            let want = if i == j { 1.0 } else { 0.0 };
            assert_abs_diff_eq!(v, want, epsilon = 1e-6);
        }
    }

    #[test]
    fn montecarlo_is_deterministic_across_thread_counts() {
        let g = small_grid();
        let modes = ModeSet::centered(3, 1).unwrap();
        let opts = ScreenSynthesisOptions::default();
        let a = montecarlo_matrix(modes, t(3.0), 6, 42, &g, &opts, Detector::Annular).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool
            .install(|| montecarlo_matrix(modes, t(3.0), 6, 42, &g, &opts, Detector::Annular))
            .unwrap();
        assert_eq!(a.entries(), b.entries());
        assert_eq!(a.standard_errors(), b.standard_errors());
        assert_eq!(a.provenance, Provenance::MonteCarlo { num_screens: 6, seed: 42 });
    }

    #[test]
    fn standard_error_shrinks_like_root_m() {
        let g = small_grid();
        let modes = ModeSet::centered(3, 1).unwrap();
        let opts = ScreenSynthesisOptions::default();
        let mean_se = |m: usize| {
            let mat = montecarlo_matrix(modes, t(3.0), m, 5, &g, &opts, Detector::Annular).unwrap();
            mat.standard_errors().unwrap().mean().unwrap()
        };
        let ratio = mean_se(100) / mean_se(200);
        assert!((ratio / 2f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }
}
