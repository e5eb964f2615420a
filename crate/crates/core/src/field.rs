//! Pure-vortex OAM and angular (ANG) mode synthesis on a square grid,
//! pointwise phase masks, and projection integrals.
//!
//! Grid convention: `samples[[row, col]]`, row 0 is the top edge (+y),
//! column 0 the left edge (-x). The optical axis sits at the midpoint of the
//! four central pixels, so no sample lands on the vortex core.

use std::f64::consts::PI;
use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::turbulence::PhaseScreen;

/// Sampling grid and circular aperture shared by fields and phase screens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    resolution: usize,
    physical_width: f64,
    aperture_radius: f64,
}

impl GridSpec {
    pub const MIN_RESOLUTION: usize = 64;

    pub fn new(resolution: usize, physical_width: f64, aperture_radius: f64) -> Result<Self> {
        if resolution < Self::MIN_RESOLUTION || !resolution.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "resolution must be a power of two >= {}, got {resolution}",
                Self::MIN_RESOLUTION
            )));
        }
        if !(physical_width.is_finite() && physical_width > 0.0) {
            return Err(Error::InvalidGrid(format!(
                "physical width must be positive, got {physical_width}"
            )));
        }
        if !(aperture_radius > 0.0 && 2.0 * aperture_radius <= physical_width) {
            return Err(Error::InvalidGrid(format!(
                "aperture radius {aperture_radius} does not fit in a grid of width {physical_width}"
            )));
        }
        Ok(Self {
            resolution,
            physical_width,
            aperture_radius,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn physical_width(&self) -> f64 {
        self.physical_width
    }

    pub fn aperture_radius(&self) -> f64 {
        self.aperture_radius
    }

    /// Aperture diameter `D = 2R`, the length that `D/r0` refers to.
    pub fn aperture_diameter(&self) -> f64 {
        2.0 * self.aperture_radius
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.physical_width / self.resolution as f64
    }

    pub fn pixel_area(&self) -> f64 {
        let dx = self.pixel_pitch();
        dx * dx
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.resolution, self.resolution)
    }

    /// x coordinate of the centre of column `col`.
    pub fn x(&self, col: usize) -> f64 {
        (col as f64 + 0.5 - self.resolution as f64 / 2.0) * self.pixel_pitch()
    }

    /// y coordinate of the centre of row `row` (row 0 is +y).
    pub fn y(&self, row: usize) -> f64 {
        (self.resolution as f64 / 2.0 - row as f64 - 0.5) * self.pixel_pitch()
    }

    /// Polar coordinates `(r, theta)` of a pixel centre.
    pub fn polar(&self, row: usize, col: usize) -> (f64, f64) {
        let (x, y) = (self.x(col), self.y(row));
        (x.hypot(y), y.atan2(x))
    }

    /// Hard-edged aperture `W(r/R)`: 1 for `r <= R`, else 0.
    pub fn in_aperture(&self, row: usize, col: usize) -> bool {
        self.polar(row, col).0 <= self.aperture_radius
    }

    pub(crate) fn check_shape<T>(&self, a: &Array2<T>) -> Result<()> {
        if a.dim() != self.shape() {
            return Err(Error::ShapeMismatch {
                expected: format!("{:?}", self.shape()),
                found: format!("{:?}", a.dim()),
            });
        }
        Ok(())
    }

    pub(crate) fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch {
                expected: format!("{self:?}"),
                found: format!("{other:?}"),
            });
        }
        Ok(())
    }
}

impl Default for GridSpec {
    /// 512 x 512 samples over 1 m with the aperture filling half the width.
    fn default() -> Self {
        Self {
            resolution: 512,
            physical_width: 1.0,
            aperture_radius: 0.25,
        }
    }
}

/// Complex amplitude sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexField {
    grid: GridSpec,
    samples: Array2<Complex64>,
}

impl ComplexField {
    pub fn new(grid: GridSpec, samples: Array2<Complex64>) -> Result<Self> {
        grid.check_shape(&samples)?;
        if samples.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidParameter("field samples must be finite".into()));
        }
        Ok(Self { grid, samples })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            samples: Array2::zeros(grid.shape()),
            grid,
        }
    }

    /// Samples `f(r, theta)` at every pixel centre.
    pub fn from_polar_fn(grid: GridSpec, f: impl Fn(f64, f64) -> Complex64) -> Self {
        let samples = Array2::from_shape_fn(grid.shape(), |(row, col)| {
            let (r, theta) = grid.polar(row, col);
            f(r, theta)
        });
        Self { grid, samples }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn samples(&self) -> &Array2<Complex64> {
        &self.samples
    }

    pub fn into_samples(self) -> Array2<Complex64> {
        self.samples
    }

    /// Total power `sum |a|^2 * pixel_area`.
    pub fn power(&self) -> f64 {
        self.samples.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.pixel_area()
    }

    pub fn intensity(&self) -> Array2<f64> {
        self.samples.mapv(|z| z.norm_sqr())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.samples.mapv(|z| z.arg())
    }

    /// Rescales to unit power. A field with zero power is returned unchanged.
    pub fn normalized(mut self) -> Self {
        let p = self.power();
        if p > 0.0 {
            let s = 1.0 / p.sqrt();
            self.samples.mapv_inplace(|z| z * s);
        }
        self
    }

    /// CSV with one row per pixel: `x_index,y_index,real,imag`, where
    /// `y_index` is the row counted from the top.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = io::csv_writer(path)?;
        w.write_record(["x_index", "y_index", "real", "imag"])?;
        for ((row, col), z) in self.samples.indexed_iter() {
            w.write_record([
                col.to_string(),
                row.to_string(),
                io::fmt_sig(z.re),
                io::fmt_sig(z.im),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// 8-bit grayscale intensity, scaled so the brightest pixel is white.
    pub fn write_intensity_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let intensity = self.intensity();
        let max = intensity.iter().cloned().fold(0.0, f64::max);
        io::write_gray_png(path, &intensity, 0.0, if max > 0.0 { max } else { 1.0 })
    }

    /// 8-bit grayscale phase, wrapped to `[0, 2pi)`.
    pub fn write_phase_png(&self, path: impl AsRef<Path>) -> Result<()> {
        let wrapped = self.phase().mapv(|p| p.rem_euclid(2.0 * PI));
        io::write_gray_png(path, &wrapped, 0.0, 2.0 * PI)
    }
}

/// OAM quantum number `l`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OamIndex(pub i32);

/// Index `n` of an angular mode in an `N`-dimensional ANG basis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AngIndex {
    n: usize,
    dimension: usize,
}

impl AngIndex {
    pub fn new(n: usize, dimension: usize) -> Result<Self> {
        if n >= dimension {
            return Err(Error::InvalidParameter(format!(
                "ANG index {n} out of range for dimension {dimension}"
            )));
        }
        Ok(Self { n, dimension })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    /// OAM components `-(N-1)/2 ..= (N-1)/2`; `None` for even `N`.
    pub fn components(&self) -> Option<std::ops::RangeInclusive<i32>> {
        if self.dimension.is_multiple_of(2) {
            return None;
        }
        let half = (self.dimension as i32 - 1) / 2;
        Some(-half..=half)
    }
}

fn vortex(l: i32, theta: f64) -> Complex64 {
    Complex64::from_polar(1.0, l as f64 * theta)
}

/// Unit-power pure vortex `A0 W(r/R) exp(i l theta)`.
pub fn make_oam_mode(grid: &GridSpec, l: OamIndex) -> ComplexField {
    let radius = grid.aperture_radius();
    ComplexField::from_polar_fn(*grid, |r, theta| {
        if r <= radius {
            vortex(l.0, theta)
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
    .normalized()
}

/// Angular dependence of an unnormalised ANG mode,
/// `sum_l exp(i l theta) exp(i 2 pi n l / N)`.
pub fn ang_phasor(n: AngIndex, theta: f64) -> Option<Complex64> {
    let dim = n.dimension() as f64;
    let shift = 2.0 * PI * n.n() as f64 / dim;
    n.components().map(|ls| ls.map(|l| vortex(l, theta + shift)).sum())
}

/// Unit-power angular mode `(1/sqrt N) sum_l Psi_l exp(i 2 pi n l / N)`.
pub fn make_ang_mode(grid: &GridSpec, n: AngIndex) -> Result<ComplexField> {
    if n.components().is_none() {
        return Err(Error::InvalidParameter(format!(
            "ANG basis is defined only for odd dimension, got {}",
            n.dimension()
        )));
    }
    let radius = grid.aperture_radius();
    Ok(ComplexField::from_polar_fn(*grid, |r, theta| {
        if r <= radius {
            ang_phasor(n, theta).unwrap_or_default()
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
    .normalized())
}

/// Multiplies the field pointwise by `exp(i phi)`.
pub fn apply_phase(field: &ComplexField, screen: &PhaseScreen) -> Result<ComplexField> {
    field.grid().check_same(screen.grid())?;
    let mut samples = field.samples().clone();
    ndarray::Zip::from(&mut samples)
        .and(screen.phase())
        .for_each(|z, &phi| *z *= Complex64::from_polar(1.0, phi));
    Ok(ComplexField {
        grid: *field.grid(),
        samples,
    })
}

/// Projection amplitude `sum conj(a) b * pixel_area`.
pub fn overlap(a: &ComplexField, b: &ComplexField) -> Result<Complex64> {
    a.grid().check_same(b.grid())?;
    let sum: Complex64 = a
        .samples()
        .iter()
        .zip(b.samples().iter())
        .map(|(x, y)| x.conj() * y)
        .sum();
    Ok(sum * a.grid().pixel_area())
}

/// Radius-resolved OAM detector for a single `l`.
///
/// The aperture is cut into one-pixel-wide rings; on each ring the projector
/// is the unit-power vortex `exp(i l theta)` restricted to that ring. The
/// detected probability is the sum of squared overlaps over all rings, i.e.
/// the weight of `l` in the angular spectrum of the field regardless of its
/// radial profile.
#[derive(Debug, Clone)]
pub struct RingProjector {
    grid: GridSpec,
    l: OamIndex,
    /// (flat pixel index, ring index, conj(exp(i l theta)))
    taps: Vec<(usize, usize, Complex64)>,
    ring_sizes: Vec<usize>,
}

impl RingProjector {
    pub fn new(grid: &GridSpec, l: OamIndex) -> Self {
        let n = grid.resolution();
        let dx = grid.pixel_pitch();
        let mut taps = Vec::new();
        let mut ring_sizes = Vec::new();
        for row in 0..n {
            for col in 0..n {
                let (r, theta) = grid.polar(row, col);
                if r > grid.aperture_radius() {
                    continue;
                }
                let ring = (r / dx).floor() as usize;
                if ring >= ring_sizes.len() {
                    ring_sizes.resize(ring + 1, 0);
                }
                ring_sizes[ring] += 1;
                taps.push((row * n + col, ring, vortex(l.0, theta).conj()));
            }
        }
        Self {
            grid: *grid,
            l,
            taps,
            ring_sizes,
        }
    }

    pub fn l(&self) -> OamIndex {
        self.l
    }

    pub fn ring_count(&self) -> usize {
        self.ring_sizes.len()
    }

    /// `sum_k |<ring_k vortex | field>|^2` with unit-power ring projectors.
    pub fn detect(&self, field: &ComplexField) -> Result<f64> {
        self.grid.check_same(field.grid())?;
        let samples = field
            .samples()
            .as_slice()
            .expect("fields are stored in standard layout");
        let mut acc = vec![Complex64::new(0.0, 0.0); self.ring_sizes.len()];
        for &(idx, ring, w) in &self.taps {
            acc[ring] += w * samples[idx];
        }
        let da = self.grid.pixel_area();
        Ok(acc
            .iter()
            .zip(&self.ring_sizes)
            .filter(|(_, &m)| m > 0)
            .map(|(s, &m)| s.norm_sqr() * da / m as f64)
            .sum())
    }
}
