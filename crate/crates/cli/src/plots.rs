//! PNG rendering of CSV artifacts that are already on disk.

use std::path::Path;

use anyhow::{bail, Result};
use image::{GrayImage, Luma, Rgb, RgbImage};

/// Smallest output side in pixels; small grids are upscaled by whole pixels.
const MIN_SIDE: usize = 256;

fn read_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in r.records() {
        rows.push(rec?.iter().map(str::parse).collect::<std::result::Result<Vec<f64>, _>>()?);
    }
    if rows.is_empty() || rows.iter().any(|r| r.len() != rows[0].len()) {
        bail!("{} is not a rectangular matrix", path.display());
    }
    Ok(rows)
}

fn gray(rows: &[Vec<f64>], lo: f64, hi: f64, out: &Path) -> Result<()> {
    let (h, w) = (rows.len(), rows[0].len());
    let scale = (MIN_SIDE / h.max(w)).max(1);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let img = GrayImage::from_fn((w * scale) as u32, (h * scale) as u32, |x, y| {
        let v = rows[y as usize / scale][x as usize / scale];
        Luma([(255.0 * ((v - lo) / span).clamp(0.0, 1.0)).round() as u8])
    });
    img.save(out)?;
    Ok(())
}

/// Reconstructed image, mid-gray at zero and symmetric in the extremes.
pub fn image_png(csv_path: &Path, out: &Path) -> Result<()> {
    let rows = read_matrix(csv_path)?;
    let m = rows.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()));
    gray(&rows, -m, m, out)
}

/// Density column of a histogram CSV, y increasing upwards.
pub fn histogram_png(csv_path: &Path, out: &Path) -> Result<()> {
    let mut r = csv::Reader::from_path(csv_path)?;
    let mut dens = Vec::new();
    for rec in r.records() {
        dens.push(rec?[3].parse::<f64>()?);
    }
    let bins = (dens.len() as f64).sqrt().round() as usize;
    if bins * bins != dens.len() || bins == 0 {
        bail!("{} does not hold a square histogram", csv_path.display());
    }
    let rows: Vec<Vec<f64>> = (0..bins).rev().map(|iy| dens[iy * bins..(iy + 1) * bins].to_vec()).collect();
    let m = dens.iter().fold(0.0_f64, |a, v| a.max(*v));
    gray(&rows, 0.0, m, out)
}

/// Covariance error against ε on log-log axes.
pub fn sweep_png(csv_path: &Path, out: &Path) -> Result<()> {
    let mut r = csv::Reader::from_path(csv_path)?;
    let mut pts = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        pts.push((rec[0].parse::<f64>()?.log10(), rec[2].parse::<f64>()?.log10()));
    }
    if pts.is_empty() {
        bail!("{} has no rows", csv_path.display());
    }
    let (w, h, pad) = (480u32, 360u32, 30.0);
    let range = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            (lo, hi)
        } else {
            (lo - 0.5, hi + 0.5)
        }
    };
    let (x0, x1) = range(|p| p.0);
    let (y0, y1) = range(|p| p.1);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    for i in pad as u32..w - pad as u32 {
        img.put_pixel(i, h - pad as u32, Rgb([0, 0, 0]));
    }
    for j in pad as u32..h - pad as u32 {
        img.put_pixel(pad as u32, j, Rgb([0, 0, 0]));
    }
    for &(x, y) in &pts {
        let px = pad + (x - x0) / (x1 - x0) * (w as f64 - 2.0 * pad);
        let py = h as f64 - pad - (y - y0) / (y1 - y0) * (h as f64 - 2.0 * pad);
        for dx in -3..=3 {
            for dy in -3..=3 {
                let (i, j) = (px as i64 + dx, py as i64 + dy);
                if i >= 0 && j >= 0 && (i as u32) < w && (j as u32) < h {
                    img.put_pixel(i as u32, j as u32, Rgb([200, 30, 30]));
                }
            }
        }
    }
    img.save(out)?;
    Ok(())
}
