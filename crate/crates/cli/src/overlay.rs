//! Static trajectory overlay: the last frame in grayscale with each
//! lineage's centroid path drawn on top, one color per lineage root.

use std::collections::BTreeMap;
use std::path::Path;

use celltrack_core::features::{CellInstance, FrameRecord};
use celltrack_core::lineage::{InstanceKey, LineageForest};
use celltrack_core::{Error, Result};
use image::{Rgb, RgbImage};

/// Distinguishable fixed palette; lineages cycle through it.
const PALETTE: [[u8; 3]; 10] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [250, 190, 190],
    [170, 255, 195],
];

fn draw_line(img: &mut RgbImage, a: (f64, f64), b: (f64, f64), color: Rgb<u8>) {
    let (h, w) = (img.height() as i64, img.width() as i64);
    let (mut r0, mut c0) = (a.0.round() as i64, a.1.round() as i64);
    let (r1, c1) = (b.0.round() as i64, b.1.round() as i64);
    let dr = (r1 - r0).abs();
    let dc = (c1 - c0).abs();
    let sr = if r0 < r1 { 1 } else { -1 };
    let sc = if c0 < c1 { 1 } else { -1 };
    let mut err = dc - dr;
    loop {
        if (0..h).contains(&r0) && (0..w).contains(&c0) {
            img.put_pixel(c0 as u32, r0 as u32, color);
        }
        if r0 == r1 && c0 == c1 {
            break;
        }
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c0 += sc;
        }
        if e2 < dc {
            err += dc;
            r0 += sr;
        }
    }
}

/// Walks parents to the lineage root, which picks the color.
fn root_of(forest: &LineageForest, cell: usize) -> usize {
    let parent_of: BTreeMap<usize, usize> =
        forest.tracks.iter().map(|t| (t.cell, t.parent)).collect();
    let mut cur = cell;
    while let Some(&p) = parent_of.get(&cur) {
        if p == 0 {
            break;
        }
        cur = p;
    }
    cur
}

pub fn render_overlay(
    frames: &[FrameRecord],
    instances: &[CellInstance],
    forest: &LineageForest,
) -> Result<RgbImage> {
    let last = frames
        .last()
        .ok_or_else(|| Error::config("cannot render an overlay without frames"))?;
    let (h, w) = (last.image.height, last.image.width);
    let mut img = RgbImage::new(w as u32, h as u32);
    for r in 0..h {
        for c in 0..w {
            let v = (last.image.get(r, c) as u32 * 255 / last.image.maxval as u32) as u8;
            img.put_pixel(c as u32, r as u32, Rgb([v, v, v]));
        }
    }
    let centroid: BTreeMap<InstanceKey, (f64, f64)> = instances
        .iter()
        .map(|i| ((i.frame, i.label), (i.centroid[0], i.centroid[1])))
        .collect();
    for track in &forest.tracks {
        let color = Rgb(PALETTE[(root_of(forest, track.cell) - 1) % PALETTE.len()]);
        let mut points = Vec::new();
        if track.parent != 0 {
            if let Some(parent) = forest.tracks.iter().find(|t| t.cell == track.parent) {
                if let Some(&p) = parent.nodes.last().and_then(|k| centroid.get(k)) {
                    points.push(p);
                }
            }
        }
        for key in &track.nodes {
            let p = centroid.get(key).ok_or_else(|| {
                Error::config(format!(
                    "track {} references instance {}:{} with no detection",
                    track.cell, key.0, key.1
                ))
            })?;
            points.push(*p);
        }
        for pair in points.windows(2) {
            draw_line(&mut img, pair[0], pair[1], color);
        }
        if points.len() == 1 {
            draw_line(&mut img, points[0], points[0], color);
        }
    }
    Ok(img)
}

pub fn save_overlay(path: &Path, img: &RgbImage) -> Result<()> {
    img.save(path)
        .map_err(|e| Error::config(format!("cannot write {}: {}", path.display(), e)))
}
