use std::path::Path;

use image::{Rgb, RgbImage};

use crate::env::{Environment, TileType};
use crate::error::{Error, Result};
use crate::qd::ResultArchive;

pub const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);

pub fn tile_color(t: TileType) -> Rgb<u8> {
    Rgb(match t {
        TileType::Empty => [255, 255, 255],
        TileType::Shelf => [0, 0, 0],
        TileType::Endpoint => [40, 90, 230],
        TileType::Workstation => [255, 150, 200],
        TileType::StationR => [220, 30, 30],
        TileType::StationG => [30, 170, 60],
        TileType::StationY => [240, 200, 20],
        TileType::Wall => [128, 128, 128],
    })
}

fn blocks(width: usize, height: usize, px: u32, color: impl Fn(usize, usize) -> Rgb<u8>) -> RgbImage {
    let px = px.max(1);
    RgbImage::from_fn(width as u32 * px, height as u32 * px, |x, y| {
        color((x / px) as usize, (y / px) as usize)
    })
}

/// One `px`-sized block per tile.
pub fn render_environment(env: &Environment, px: u32) -> RgbImage {
    blocks(env.width(), env.height(), px, |x, y| tile_color(env.get(x, y)))
}

fn lerp(stops: &[[u8; 3]], t: f64) -> Rgb<u8> {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let pos = t * (stops.len() - 1) as f64;
    let i = (pos.floor() as usize).min(stops.len() - 2);
    let f = pos - i as f64;
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = (stops[i][c] as f64 + f * (stops[i + 1][c] as f64 - stops[i][c] as f64)).round() as u8;
    }
    Rgb(out)
}

/// Viridis-like ramp; never white.
pub fn objective_color(t: f64) -> Rgb<u8> {
    lerp(&[[68, 1, 84], [59, 82, 139], [33, 145, 140], [94, 201, 98], [253, 231, 37]], t)
}

/// White to dark red.
pub fn usage_color(t: f64) -> Rgb<u8> {
    lerp(&[[255, 255, 255], [252, 146, 114], [222, 45, 38], [103, 0, 13]], t)
}

/// Heatmap of a 2-measure archive: x follows the first measure's bins, y the
/// second's with bin 0 at the bottom. Empty cells are white.
pub fn render_archive(archive: &ResultArchive, px: u32) -> Result<RgbImage> {
    let spec = archive.spec();
    if spec.measure_dims() != 2 {
        return Err(Error::Config("archive heatmaps need exactly two measures".into()));
    }
    let (d0, d1) = (spec.dims[0], spec.dims[1]);
    let mut grid = vec![None; d0 * d1];
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for (cell, e) in archive.iter() {
        let b = spec.unravel(cell);
        grid[(d1 - 1 - b[1]) * d0 + b[0]] = Some(e.objective);
        lo = lo.min(e.objective);
        hi = hi.max(e.objective);
    }
    let span = if hi > lo { hi - lo } else { 1.0 };
    Ok(blocks(d0, d1, px, |x, y| {
        grid[y * d0 + x].map_or(BACKGROUND, |f| objective_color((f - lo) / span))
    }))
}

/// Heatmap of per-tile visit counts scaled to the maximum.
pub fn render_usage(usage: &[u64], width: usize, height: usize, px: u32) -> Result<RgbImage> {
    if usage.len() != width * height {
        return Err(Error::DimensionMismatch(format!(
            "{} usage counts for a {width}x{height} grid",
            usage.len()
        )));
    }
    let max = usage.iter().copied().max().unwrap_or(0).max(1) as f64;
    Ok(blocks(width, height, px, |x, y| usage_color(usage[y * width + x] as f64 / max)))
}

pub fn save_png(img: &RgbImage, path: &Path) -> Result<()> {
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}
