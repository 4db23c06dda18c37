//! Static PNG plots: a log-scale spectrum scatter and a weight heatmap.
//! Deliberately minimal — axes and marks only, no text rendering.

use std::path::Path;

use anyhow::Context;
use image::{Rgb, RgbImage};
use spencer_core::{SpectrumReport, TorusMesh};

const PALETTE: [[u8; 3]; 6] = [
    [31, 119, 180],
    [255, 127, 14],
    [44, 160, 44],
    [214, 39, 40],
    [148, 103, 189],
    [140, 86, 75],
];

const FLOOR: f64 = 1e-16;

fn mark(img: &mut RgbImage, x: i64, y: i64, c: Rgb<u8>) {
    for dx in -2..=2 {
        for dy in -2..=2 {
            let (px, py) = (x + dx, y + dy);
            if px >= 0 && py >= 0 && (px as u32) < img.width() && (py as u32) < img.height() {
                img.put_pixel(px as u32, py as u32, c);
            }
        }
    }
}

/// Eigenvalues against their index, `log10` vertical axis, one colour per
/// total degree. Values below `1e-16` are drawn on the bottom edge.
pub fn spectrum_scatter(path: &Path, report: &SpectrumReport) -> anyhow::Result<()> {
    let (w, h, pad) = (800u32, 500u32, 40u32);
    let mut img = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let max_len = report.degrees.iter().map(|s| s.eigenvalues.len()).max().unwrap_or(1).max(2);
    let logs: Vec<f64> = report
        .degrees
        .iter()
        .flat_map(|s| s.eigenvalues.iter().map(|v| v.max(FLOOR).log10()))
        .collect();
    let lo = logs.iter().copied().fold(f64::INFINITY, f64::min).min(-1.0);
    let hi = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max).max(lo + 1.0);
    let axis = Rgb([0, 0, 0]);
    for x in pad..w - pad {
        img.put_pixel(x, h - pad, axis);
    }
    for y in pad..=h - pad {
        img.put_pixel(pad, y, axis);
    }
    let (pw, ph) = (f64::from(w - 2 * pad), f64::from(h - 2 * pad));
    for s in &report.degrees {
        let c = Rgb(PALETTE[s.degree % PALETTE.len()]);
        for (i, v) in s.eigenvalues.iter().enumerate() {
            let fx = i as f64 / (max_len - 1) as f64;
            let fy = (v.max(FLOOR).log10() - lo) / (hi - lo);
            mark(&mut img, (f64::from(pad) + fx * pw) as i64, (f64::from(h - pad) - fy * ph) as i64, c);
        }
    }
    img.save(path).with_context(|| format!("writing {}", path.display()))
}

fn ramp(t: f64) -> Rgb<u8> {
    // Dark blue → teal → yellow.
    let stops = [[68.0, 1.0, 84.0], [33.0, 145.0, 140.0], [253.0, 231.0, 37.0]];
    let t = t.clamp(0.0, 1.0) * 2.0;
    let (i, f) = if t >= 2.0 { (1, 1.0) } else { (t as usize, t.fract()) };
    let c: Vec<u8> = (0..3).map(|k| (stops[i][k] + f * (stops[i + 1][k] - stops[i][k])).round() as u8).collect();
    Rgb([c[0], c[1], c[2]])
}

/// Vertex weights on the grid, row `j` at the top for `j = N₂ − 1`. On a
/// circle the single row is stretched vertically.
pub fn weight_heatmap(path: &Path, mesh: &TorusMesh, weights: &[f64]) -> anyhow::Result<()> {
    let res = mesh.resolution();
    let (n1, n2) = (res[0], if res.len() > 1 { res[1] } else { 1 });
    let cell = (512 / n1.max(n2)).max(1) as u32;
    let height = if n2 == 1 { 64 } else { cell * n2 as u32 };
    let mut img = RgbImage::new(cell * n1 as u32, height);
    let lo = weights.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    for (px, py, p) in img.enumerate_pixels_mut() {
        let i = (px / cell) as usize;
        let j = if n2 == 1 { 0 } else { n2 - 1 - (py / cell) as usize };
        *p = ramp((weights[i + n1 * j] - lo) / span);
    }
    img.save(path).with_context(|| format!("writing {}", path.display()))
}
