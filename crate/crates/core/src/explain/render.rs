use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::explain::font::{glyph, text_width, GLYPH_H, GLYPH_W};
use crate::explain::Heatmap;
use crate::repr4d::ElectrodeLayout;

/// Pixel size of one grid cell in the rendered image.
pub const CELL_PX: u32 = 24;

/// Blue → cyan → yellow → red ramp over `[0, 1]`.
pub fn colormap(v: f32) -> [u8; 3] {
    let v = v.clamp(0.0, 1.0);
    let ch = |center: f32| ((1.5 - (4.0 * v - center).abs()).clamp(0.0, 1.0) * 255.0).round() as u8;
    [ch(3.0), ch(2.0), ch(1.0)]
}

fn ink_for(bg: [u8; 3]) -> [u8; 3] {
    let lum = 0.299 * bg[0] as f32 + 0.587 * bg[1] as f32 + 0.114 * bg[2] as f32;
    if lum < 128.0 { [255, 255, 255] } else { [0, 0, 0] }
}

/// 19 (or `height`) lines of comma-separated values.
pub fn heatmap_csv(h: &Heatmap) -> String {
    let mut out = String::new();
    for r in 0..h.height {
        let row: Vec<String> = (0..h.width).map(|c| h.get(r, c).to_string()).collect();
        writeln!(out, "{}", row.join(",")).expect("string write");
    }
    out
}

/// Parse a grid written by [`heatmap_csv`] back into row-major values and
/// its `(height, width)`.
pub fn read_heatmap_csv(text: &str) -> Result<(Vec<f32>, usize, usize)> {
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (i, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let row: Vec<f32> = line
            .split(',')
            .map(|v| v.trim().parse::<f32>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Format(format!("heatmap line {}: {e}", i + 1)))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(Error::Format(format!("heatmap line {} has {} values", i + 1, row.len())));
        }
        values.extend(row);
        height += 1;
    }
    Ok((values, height, width.unwrap_or(0)))
}

/// The `n` hottest electrode cells as `(channel, value)`, ties broken by
/// layout order.
pub fn top_channels<'a>(h: &Heatmap, layout: &'a ElectrodeLayout, n: usize) -> Vec<(&'a str, f32)> {
    let mut cells: Vec<(&str, f32)> = layout
        .placements
        .iter()
        .filter(|p| p.row < h.height && p.col < h.width)
        .map(|p| (p.channel.as_str(), h.get(p.row, p.col)))
        .collect();
    cells.sort_by(|a, b| b.1.total_cmp(&a.1));
    cells.truncate(n);
    cells
}

fn draw_label(img: &mut RgbImage, text: &str, cx: u32, cy: u32, ink: [u8; 3]) {
    let w = text_width(text) as u32;
    let x0 = cx.saturating_sub(w / 2);
    let y0 = cy.saturating_sub(GLYPH_H as u32 / 2);
    for (i, ch) in text.chars().enumerate() {
        let rows = glyph(ch);
        for (ry, bits) in rows.iter().enumerate() {
            for rx in 0..GLYPH_W {
                if bits >> (GLYPH_W - 1 - rx) & 1 == 1 {
                    let x = x0 + (i * (GLYPH_W + 1) + rx) as u32;
                    let y = y0 + ry as u32;
                    if x < img.width() && y < img.height() {
                        img.put_pixel(x, y, Rgb(ink));
                    }
                }
            }
        }
    }
}

/// Rasterize the map, optionally with electrode names drawn at their cells.
pub fn heatmap_image(h: &Heatmap, layout: &ElectrodeLayout, labels: bool) -> RgbImage {
    let mut img = RgbImage::new(h.width as u32 * CELL_PX, h.height as u32 * CELL_PX);
    for (x, y, px) in img.enumerate_pixels_mut() {
        *px = Rgb(colormap(h.get((y / CELL_PX) as usize, (x / CELL_PX) as usize)));
    }
    if !labels {
        return img;
    }
    for p in layout.placements.iter().filter(|p| p.row < h.height && p.col < h.width) {
        let bg = colormap(h.get(p.row, p.col));
        let (cx, cy) = (p.col as u32 * CELL_PX + CELL_PX / 2, p.row as u32 * CELL_PX + CELL_PX / 2);
        draw_label(&mut img, &p.channel, cx, cy, ink_for(bg));
    }
    img
}

/// Files written by [`render_heatmap`].
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RenderedHeatmap {
    pub png: PathBuf,
    pub csv: PathBuf,
    pub report: PathBuf,
}

/// Write `<stem>.png`, `<stem>.csv` and a `<stem>.top3.txt` channel report
/// next to `png_path`.
pub fn render_heatmap(h: &Heatmap, layout: &ElectrodeLayout, png_path: &Path, labels: bool) -> Result<RenderedHeatmap> {
    let out = RenderedHeatmap {
        png: png_path.with_extension("png"),
        csv: png_path.with_extension("csv"),
        report: png_path.with_extension("top3.txt"),
    };
    heatmap_image(h, layout, labels)
        .save_with_format(&out.png, image::ImageFormat::Png)
        .map_err(|e| match e {
            image::ImageError::IoError(io) => Error::io(&out.png, io),
            other => Error::Format(other.to_string()),
        })?;
    std::fs::write(&out.csv, heatmap_csv(h)).map_err(|e| Error::io(&out.csv, e))?;
    let mut report = format!("class,{}\nrank,channel,value\n", h.class);
    for (i, (ch, v)) in top_channels(h, layout, 3).iter().enumerate() {
        writeln!(report, "{},{ch},{v}", i + 1).expect("string write");
    }
    std::fs::write(&out.report, report).map_err(|e| Error::io(&out.report, e))?;
    Ok(out)
}
