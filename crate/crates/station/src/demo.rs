//! Writes the eight-part demonstration set: replay fixtures, part
//! descriptions, config, ground truth and synthetic capture images.

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use image::{GrayImage, Luma};
use inspect_core::orchestrator::InspectionConfig;
use inspect_core::synth::eight_part_scenario;
use inspect_core::BoundingBox;

pub const IMAGE_W: u32 = 2448;
pub const IMAGE_H: u32 = 2048;

pub struct DemoFiles {
    pub fixture: PathBuf,
    pub config: PathBuf,
    pub ground_truth: PathBuf,
    pub parts: Vec<PathBuf>,
    pub images: Vec<PathBuf>,
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n")
        .with_context(|| format!("writing {}", path.display()))
}

/// Flat cast-aluminium grey with a faint machining texture and a dark
/// elliptical pit for each box.
pub fn render_capture(boxes: &[BoundingBox]) -> GrayImage {
    let mut img = GrayImage::from_fn(IMAGE_W, IMAGE_H, |x, y| Luma([176 + ((x / 6 + y / 3) % 5) as u8 * 3]));
    for b in boxes {
        let (cx, cy) = (b.x() + b.w() / 2.0, b.y() + b.h() / 2.0);
        let (rx, ry) = (b.w() / 2.0, b.h() / 2.0);
        let x0 = b.x().floor().max(0.0) as u32;
        let y0 = b.y().floor().max(0.0) as u32;
        let x1 = (b.right().ceil() as u32).min(IMAGE_W);
        let y1 = (b.bottom().ceil() as u32).min(IMAGE_H);
        for y in y0..y1 {
            for x in x0..x1 {
                let dx = (x as f64 + 0.5 - cx) / rx;
                let dy = (y as f64 + 0.5 - cy) / ry;
                let r2 = dx * dx + dy * dy;
                if r2 <= 1.0 {
                    img.put_pixel(x, y, Luma([(60.0 + 70.0 * r2) as u8]));
                }
            }
        }
    }
    img
}

/// Populate `out`. Images are only rendered for captures where some model
/// reports a detection, since only those can be reviewed.
pub fn make_demo(out: &Path, with_images: bool) -> Result<DemoFiles> {
    let s = eight_part_scenario();
    let parts_dir = out.join("parts");
    let images_dir = out.join("images");
    std::fs::create_dir_all(&parts_dir).with_context(|| format!("creating {}", parts_dir.display()))?;

    let fixture = out.join("fixture.json");
    write_json(&fixture, &s.fixture)?;
    let config = out.join("config.json");
    write_json(&config, &InspectionConfig::default())?;
    let ground_truth = out.join("ground_truth.json");
    write_json(&ground_truth, &s.ground_truth)?;

    let mut parts = Vec::new();
    for p in &s.parts {
        let path = parts_dir.join(format!("{}.json", p.part_id));
        write_json(&path, p)?;
        parts.push(path);
    }

    let mut images = Vec::new();
    if with_images {
        std::fs::create_dir_all(&images_dir)?;
        for (image_id, models) in &s.fixture.images {
            let boxes: Vec<BoundingBox> = models.values().flatten().map(|d| d.bbox).collect();
            if boxes.is_empty() {
                continue;
            }
            let path = images_dir.join(format!("{image_id}.png"));
            render_capture(&boxes)
                .save(&path)
                .with_context(|| format!("writing {}", path.display()))?;
            images.push(path);
        }
    }
    Ok(DemoFiles {
        fixture,
        config,
        ground_truth,
        parts,
        images,
    })
}
