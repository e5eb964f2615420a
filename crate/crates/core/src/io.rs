//! Shared output helpers: CSV number formatting and grayscale PNG.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use ndarray::Array2;

use crate::error::Result;

/// Formats `x` with 12 significant digits, fixed notation where it stays
/// readable and scientific otherwise.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..12).contains(&exp) {
        let decimals = (11 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        // rounding can carry into a new leading digit (9.99.. -> 10.0..)
        let digits = s.chars().filter(|c| c.is_ascii_digit()).count();
        let leading_zeros = if exp < 0 { (-exp) as usize } else { 0 };
        if digits - leading_zeros > 12 && decimals > 0 {
            let d = decimals - 1;
            return format!("{x:.d$}");
        }
        s
    } else {
        format!("{x:.11e}")
    }
}

pub fn csv_writer(path: impl AsRef<Path>) -> Result<csv::Writer<File>> {
    Ok(csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)?)
}

/// Writes `values` as an 8-bit grayscale PNG, mapping `lo..=hi` to 0..=255.
/// Row 0 of the array becomes the top row of the image.
pub fn write_gray_png(path: impl AsRef<Path>, values: &Array2<f64>, lo: f64, hi: f64) -> Result<()> {
    let (rows, cols) = values.dim();
    let span = if hi > lo { hi - lo } else { 1.0 };
    let pixels: Vec<u8> = values
        .iter()
        .map(|&v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let file = BufWriter::new(File::create(path)?);
    let mut encoder = png::Encoder::new(file, cols as u32, rows as u32);
    encoder.set_color(png::ColorType::Grayscale);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header()?;
    writer.write_image_data(&pixels)?;
    writer.finish()?;
    Ok(())
}
