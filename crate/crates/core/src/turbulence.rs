//! Kolmogorov thin-phase screens and their structure-function statistics.
//!
//! Screens are synthesised spectrally: complex white Gaussian noise is
//! shaped by the square root of the phase power spectrum
//! `0.023 r0^{-5/3} f^{-11/3}` (f in cycles per metre) and inverse
//! transformed. The FFT grid cannot represent frequencies below one cycle
//! per grid width, which the low-frequency compensation restores:
//!
//! * main-grid cells within 8 bins of the origin and every subharmonic cell
//!   carry the second-moment-matched spectral weight
//!   `int_cell PSD(f) |f|^2 d^2f / |f_centre|^2` instead of the centre value,
//! * `subharmonic_levels` rounds of 3x3 subharmonics subdivide the central
//!   cell by 3 each time,
//! * the power left in the innermost cell enters as a random tilt whose
//!   variance matches that cell's second moment exactly.
//!
//! Without compensation (`subharmonic_levels == 0`) the plain FFT screen is
//! produced, which underestimates the structure function at large
//! separations.

use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rustfft::FftDirection;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::fft2;
use crate::field::GridSpec;
use crate::io;
use crate::quadrature::GaussLegendre;

/// Coefficient of the Kolmogorov phase structure function.
pub const STRUCTURE_COEFFICIENT: f64 = 6.88;
/// Coefficient of the phase power spectrum in cycles per metre.
pub const SPECTRUM_COEFFICIENT: f64 = 0.023;
pub const MAX_SUBHARMONIC_LEVELS: u32 = 8;

/// Main-grid cells with `|i|, |j| <= MATCHED_CELLS` get moment-matched weights.
const MATCHED_CELLS: usize = 8;
const MOMENT_SUBSAMPLES: usize = 64;

/// Turbulence strength `D/r0`; zero is the identity channel.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TurbulenceStrength(f64);

impl TurbulenceStrength {
    pub const NONE: TurbulenceStrength = TurbulenceStrength(0.0);

    pub fn new(d_over_r0: f64) -> Result<Self> {
        if !(d_over_r0.is_finite() && d_over_r0 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "D/r0 must be finite and non-negative, got {d_over_r0}"
            )));
        }
        Ok(Self(d_over_r0))
    }

    pub fn d_over_r0(&self) -> f64 {
        self.0
    }

    pub fn is_identity(&self) -> bool {
        self.0 == 0.0
    }

    /// Fried parameter for the aperture of `grid`; infinite for zero strength.
    pub fn fried_r0(&self, grid: &GridSpec) -> f64 {
        grid.aperture_diameter() / self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spectrum {
    #[default]
    Kolmogorov,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScreenSynthesisOptions {
    pub subharmonic_levels: u32,
    pub spectrum: Spectrum,
}

impl Default for ScreenSynthesisOptions {
    fn default() -> Self {
        Self {
            subharmonic_levels: 3,
            spectrum: Spectrum::Kolmogorov,
        }
    }
}

impl ScreenSynthesisOptions {
    pub fn with_subharmonics(levels: u32) -> Result<Self> {
        let opts = Self {
            subharmonic_levels: levels,
            ..Self::default()
        };
        opts.validate()?;
        Ok(opts)
    }

    pub fn validate(&self) -> Result<()> {
        if self.subharmonic_levels > MAX_SUBHARMONIC_LEVELS {
            return Err(Error::InvalidParameter(format!(
                "at most {MAX_SUBHARMONIC_LEVELS} subharmonic levels are supported, got {}",
                self.subharmonic_levels
            )));
        }
        Ok(())
    }
}

/// A real phase sample (radians) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseScreen {
    grid: GridSpec,
    phase: Array2<f64>,
    strength: TurbulenceStrength,
    seed: u64,
    options: ScreenSynthesisOptions,
}

impl PhaseScreen {
    /// The identity screen.
    pub fn zero(grid: GridSpec) -> Self {
        Self {
            phase: Array2::zeros(grid.shape()),
            grid,
            strength: TurbulenceStrength::NONE,
            seed: 0,
            options: ScreenSynthesisOptions::default(),
        }
    }

    /// Wraps an arbitrary phase map, e.g. an analytic vortex or ramp.
    pub fn from_samples(grid: GridSpec, phase: Array2<f64>) -> Result<Self> {
        grid.check_shape(&phase)?;
        if phase.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidParameter("phase samples must be finite".into()));
        }
        Ok(Self {
            grid,
            phase,
            strength: TurbulenceStrength::NONE,
            seed: 0,
            options: ScreenSynthesisOptions::default(),
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn phase(&self) -> &Array2<f64> {
        &self.phase
    }

    pub fn strength(&self) -> TurbulenceStrength {
        self.strength
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn options(&self) -> &ScreenSynthesisOptions {
        &self.options
    }

    /// PNG of the phase wrapped to `[0, 2pi)`.
    pub fn write_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let wrapped = self.phase.mapv(|p| p.rem_euclid(2.0 * PI));
        io::write_gray_png(path, &wrapped, 0.0, 2.0 * PI)
    }

    /// CSV of the unwrapped phase: `x_index,y_index,phase`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = io::csv_writer(path)?;
        w.write_record(["x_index", "y_index", "phase"])?;
        for ((row, col), p) in self.phase.indexed_iter() {
            w.write_record([col.to_string(), row.to_string(), io::fmt_sig(*p)])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Seed of the `index`-th screen of an ensemble drawn from `base`.
///
/// SplitMix64 over `(base, index)`, so screen `k` is the same whether the
/// ensemble is generated serially or in parallel.
pub fn screen_seed(base: u64, index: u64) -> u64 {
    let mut z = base ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `|u|^{-11/3}` second moment of the unit cell centred on `(i, j)`,
/// divided by `|c|^2`.
fn cell_moment(i: isize, j: isize) -> f64 {
    let m = MOMENT_SUBSAMPLES;
    let mut acc = 0.0;
    for a in 0..m {
        let u = i as f64 + (a as f64 + 0.5) / m as f64 - 0.5;
        for b in 0..m {
            let v = j as f64 + (b as f64 + 0.5) / m as f64 - 0.5;
            acc += (u * u + v * v).powf(-5.0 / 6.0);
        }
    }
    acc / (m * m) as f64 / (i * i + j * j) as f64
}

fn moment_table() -> &'static Vec<f64> {
    static TABLE: OnceLock<Vec<f64>> = OnceLock::new();
    TABLE.get_or_init(|| {
        let k = MATCHED_CELLS as isize;
        let side = 2 * MATCHED_CELLS + 1;
        let mut t = vec![0.0; side * side];
        for j in -k..=k {
            for i in -k..=k {
                if i != 0 || j != 0 {
                    t[((j + k) as usize) * side + (i + k) as usize] = cell_moment(i, j);
                }
            }
        }
        t
    })
}

fn matched_moment(i: isize, j: isize) -> f64 {
    let k = MATCHED_CELLS as isize;
    let side = 2 * MATCHED_CELLS + 1;
    moment_table()[((j + k) as usize) * side + (i + k) as usize]
}

/// `int_{[-1/2,1/2]^2} |u|^{-11/3} u_x^2 d^2u`, the second moment of the
/// unit central cell, via polar integration over the square.
fn central_cell_moment() -> f64 {
    static VALUE: OnceLock<f64> = OnceLock::new();
    *VALUE.get_or_init(|| {
        12.0 * GaussLegendre::new(32).integrate(0.0, PI / 4.0, |t| (2.0 * t.cos()).powf(-1.0 / 3.0))
    })
}

fn complex_normal(rng: &mut impl Rng) -> Complex64 {
    Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// Draws one Kolmogorov phase screen for `D/r0 = strength`.
pub fn generate_screen(
    grid: &GridSpec,
    strength: TurbulenceStrength,
    seed: u64,
    opts: &ScreenSynthesisOptions,
) -> Result<PhaseScreen> {
    opts.validate()?;
    if strength.is_identity() {
        return Err(Error::InvalidParameter(
            "D/r0 = 0 has no turbulence; use PhaseScreen::zero".into(),
        ));
    }
    let n = grid.resolution();
    let dx = grid.pixel_pitch();
    let r0 = strength.fried_r0(grid);
    if r0 < 2.0 * dx {
        log::warn!(
            "r0 = {:.3} pixels is under-resolved at resolution {n}",
            r0 / dx
        );
    }
    let compensate = opts.subharmonic_levels > 0;
    let amp = SPECTRUM_COEFFICIENT * r0.powf(-5.0 / 3.0);
    let df = 1.0 / grid.physical_width();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);

    // main FFT grid, frequencies in FFT order
    let signed = |k: usize| if k < n / 2 { k as isize } else { k as isize - n as isize };
    let cell_scale = amp * df.powf(-5.0 / 3.0);
    let mut spectrum = vec![Complex64::default(); n * n];
    for ky in 0..n {
        let j = signed(ky);
        for kx in 0..n {
            let i = signed(kx);
            let noise = complex_normal(&mut rng);
            if i == 0 && j == 0 {
                continue;
            }
            let unit = if compensate
                && i.unsigned_abs() <= MATCHED_CELLS
                && j.unsigned_abs() <= MATCHED_CELLS
            {
                matched_moment(i, j)
            } else {
                ((i * i + j * j) as f64).powf(-11.0 / 6.0)
            };
            spectrum[ky * n + kx] = noise * (cell_scale * unit).sqrt();
        }
    }
    fft2(&mut spectrum, n, FftDirection::Inverse);
    let mut phase = Array2::from_shape_fn((n, n), |(r, c)| spectrum[r * n + c].re);

    if compensate {
        let xs: Vec<f64> = (0..n).map(|c| grid.x(c)).collect();
        let ys: Vec<f64> = (0..n).map(|r| grid.y(r)).collect();
        for level in 1..=opts.subharmonic_levels {
            let h = df / 3f64.powi(level as i32);
            let scale = amp * h.powf(-5.0 / 3.0);
            for b in -1isize..=1 {
                for a in -1isize..=1 {
                    if a == 0 && b == 0 {
                        continue;
                    }
                    let c = complex_normal(&mut rng) * (scale * matched_moment(a, b)).sqrt();
                    let ex: Vec<Complex64> = xs
                        .iter()
                        .map(|&x| Complex64::from_polar(1.0, 2.0 * PI * a as f64 * h * x))
                        .collect();
                    for (row, &y) in ys.iter().enumerate() {
                        let ey = c * Complex64::from_polar(1.0, 2.0 * PI * b as f64 * h * y);
                        for (p, e) in phase.row_mut(row).iter_mut().zip(&ex) {
                            *p += (ey * e).re;
                        }
                    }
                }
            }
        }
        // residual power of the innermost cell as a random tilt
        let h = df / 3f64.powi(opts.subharmonic_levels as i32);
        let tilt_sd = (4.0 * PI * PI * amp * h.powf(1.0 / 3.0) * central_cell_moment()).sqrt();
        let gx: f64 = rng.sample(StandardNormal);
        let gy: f64 = rng.sample(StandardNormal);
        for ((row, col), p) in phase.indexed_iter_mut() {
            *p += tilt_sd * (gx * xs[col] + gy * ys[row]);
        }
    }

    let mean = phase.mean().unwrap_or(0.0);
    phase.mapv_inplace(|p| p - mean);
    Ok(PhaseScreen {
        grid: *grid,
        phase,
        strength,
        seed,
        options: *opts,
    })
}

/// Screen `index` of the ensemble seeded by `base_seed`.
pub fn ensemble_screen(
    grid: &GridSpec,
    strength: TurbulenceStrength,
    base_seed: u64,
    index: u64,
    opts: &ScreenSynthesisOptions,
) -> Result<PhaseScreen> {
    generate_screen(grid, strength, screen_seed(base_seed, index), opts)
}

/// `6.88 (separation / r0)^{5/3}`.
pub fn kolmogorov_structure_function(separation: f64, r0: f64) -> f64 {
    STRUCTURE_COEFFICIENT * (separation / r0).powf(5.0 / 3.0)
}

/// Which pixel pairs count as being at a given separation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeparationBinning {
    /// All displacement vectors whose length is within half a pixel.
    #[default]
    Radial,
    /// Only the x- and y-axis displacements of the nearest whole pixel count.
    AxisAligned,
}

/// Mean squared phase difference at one separation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructurePoint {
    pub separation: f64,
    pub value: f64,
    pub pairs: f64,
}

/// Streams screens into a structure-function estimate so large ensembles
/// need not be held in memory.
#[derive(Debug, Clone)]
pub struct StructureFunctionEstimator {
    grid: GridSpec,
    separations: Vec<f64>,
    /// displacement (d_col, d_row) lists per separation, half plane only
    displacements: Vec<Vec<(isize, isize)>>,
    sums: Vec<f64>,
    pairs: Vec<f64>,
    screens: usize,
}

impl StructureFunctionEstimator {
    pub fn new(grid: &GridSpec, separations: &[f64], binning: SeparationBinning) -> Result<Self> {
        let dx = grid.pixel_pitch();
        let half_width = grid.physical_width() / 2.0;
        let mut displacements = Vec::with_capacity(separations.len());
        for &s in separations {
            if !(s > 0.0 && s < half_width) {
                return Err(Error::InvalidParameter(format!(
                    "separation {s} outside (0, {half_width})"
                )));
            }
            let target = s / dx;
            let list = match binning {
                SeparationBinning::Radial => {
                    let reach = (target + 0.5).floor() as isize;
                    let mut v = Vec::new();
                    for b in 0..=reach {
                        for a in -reach..=reach {
                            if b == 0 && a <= 0 {
                                continue;
                            }
                            let len = ((a * a + b * b) as f64).sqrt();
                            if (len - target).abs() <= 0.5 {
                                v.push((a, b));
                            }
                        }
                    }
                    v
                }
                SeparationBinning::AxisAligned => {
                    let k = target.round() as isize;
                    if k == 0 {
                        Vec::new()
                    } else {
                        vec![(k, 0), (0, k)]
                    }
                }
            };
            if list.is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "separation {s} is below the pixel pitch"
                )));
            }
            displacements.push(list);
        }
        Ok(Self {
            grid: *grid,
            separations: separations.to_vec(),
            sums: vec![0.0; separations.len()],
            pairs: vec![0.0; separations.len()],
            displacements,
            screens: 0,
        })
    }

    pub fn screens(&self) -> usize {
        self.screens
    }

    pub fn add(&mut self, screen: &PhaseScreen) -> Result<()> {
        self.grid.check_same(screen.grid())?;
        let n = self.grid.resolution();
        let m = 2 * n;
        let phase = screen.phase();

        // zero-padded autocorrelation, no wrap-around for lags < n
        let mut buf = vec![Complex64::default(); m * m];
        for ((r, c), &p) in phase.indexed_iter() {
            buf[r * m + c] = Complex64::new(p, 0.0);
        }
        fft2(&mut buf, m, FftDirection::Forward);
        for z in buf.iter_mut() {
            *z = Complex64::new(z.norm_sqr(), 0.0);
        }
        fft2(&mut buf, m, FftDirection::Inverse);
        let norm = 1.0 / (m * m) as f64;
        let autocorr = |a: isize, b: isize| -> f64 {
            let r = b.rem_euclid(m as isize) as usize;
            let c = a.rem_euclid(m as isize) as usize;
            buf[r * m + c].re * norm
        };

        // inclusive prefix sums of phi^2, padded by one row/column
        let mut prefix = vec![0.0; (n + 1) * (n + 1)];
        for r in 0..n {
            for c in 0..n {
                let p = phase[[r, c]];
                prefix[(r + 1) * (n + 1) + c + 1] = p * p + prefix[r * (n + 1) + c + 1]
                    + prefix[(r + 1) * (n + 1) + c]
                    - prefix[r * (n + 1) + c];
            }
        }
        let rect = |r0: usize, r1: usize, c0: usize, c1: usize| -> f64 {
            // rows r0..r1, cols c0..c1, half-open
            prefix[r1 * (n + 1) + c1] - prefix[r0 * (n + 1) + c1] - prefix[r1 * (n + 1) + c0]
                + prefix[r0 * (n + 1) + c0]
        };

        for (k, list) in self.displacements.iter().enumerate() {
            for &(a, b) in list {
                // pairs x = (row, col) and x + (b, a)
                let (au, bu) = (a.unsigned_abs(), b.unsigned_abs());
                let rows = n - bu;
                let cols = n - au;
                let (r_lo, c_lo) = (if b < 0 { bu } else { 0 }, if a < 0 { au } else { 0 });
                let (r_sh, c_sh) = ((r_lo as isize + b) as usize, (c_lo as isize + a) as usize);
                let first = rect(r_lo, r_lo + rows, c_lo, c_lo + cols);
                let second = rect(r_sh, r_sh + rows, c_sh, c_sh + cols);
                let cross = autocorr(a, b);
                self.sums[k] += first + second - 2.0 * cross;
                self.pairs[k] += (rows * cols) as f64;
            }
        }
        self.screens += 1;
        Ok(())
    }

    pub fn finish(&self) -> Result<Vec<StructurePoint>> {
        if self.screens == 0 {
            return Err(Error::InvalidParameter("empty screen ensemble".into()));
        }
        Ok(self
            .separations
            .iter()
            .zip(self.sums.iter().zip(&self.pairs))
            .map(|(&separation, (&sum, &pairs))| StructurePoint {
                separation,
                value: (sum / pairs).max(0.0),
                pairs,
            })
            .collect())
    }
}

/// Ensemble structure function `<[phi(r1) - phi(r2)]^2>` at each separation.
pub fn structure_function(
    screens: &[PhaseScreen],
    separations: &[f64],
    binning: SeparationBinning,
) -> Result<Vec<StructurePoint>> {
    let first = screens
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty screen ensemble".into()))?;
    let mut est = StructureFunctionEstimator::new(first.grid(), separations, binning)?;
    for s in screens {
        est.add(s)?;
    }
    est.finish()
}
