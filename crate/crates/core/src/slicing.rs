//! Tiling of a full-resolution image into overlapping slices and re-projection
//! of slice-local boxes back into the image frame.
//!
//! Along an axis of length `dim` cut into `n` tiles the tile length is
//! `ceil(dim / (n - (n - 1) * overlap))` and tile `i` starts at
//! `floor(i * (dim - tile) / (n - 1))`, so the last tile ends exactly on the
//! image edge and consecutive starts never differ by more than one pixel from
//! the ideal step.

use serde::{Deserialize, Serialize};

use crate::error::{InspectError, Result};
use crate::geometry::{BoundingBox, SliceIndex};

/// One tile of a [`SliceGrid`], in global pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SliceRect {
    pub row: u32,
    pub col: u32,
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
}

impl SliceRect {
    pub fn index(&self) -> SliceIndex {
        SliceIndex {
            row: self.row,
            col: self.col,
        }
    }

    pub fn as_box(&self) -> BoundingBox {
        BoundingBox::new(self.x as f64, self.y as f64, self.w as f64, self.h as f64)
            .expect("slice rectangles have positive size")
    }

    pub fn contains_pixel(&self, px: u32, py: u32) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }
}

/// Tiling of a `image_w × image_h` image into `rows × cols` slices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceGrid {
    pub image_w: u32,
    pub image_h: u32,
    pub rows: u32,
    pub cols: u32,
    /// Requested overlap ratio, `None` when the grid was built from a fixed
    /// tile size.
    pub overlap_ratio: Option<f64>,
    pub tile_w: u32,
    pub tile_h: u32,
    /// Slices in row-major order.
    pub slices: Vec<SliceRect>,
}

impl SliceGrid {
    pub fn x_origins(&self) -> Vec<u32> {
        self.slices.iter().filter(|s| s.row == 0).map(|s| s.x).collect()
    }

    pub fn y_origins(&self) -> Vec<u32> {
        self.slices.iter().filter(|s| s.col == 0).map(|s| s.y).collect()
    }

    /// Overlap in pixels between horizontally adjacent slices, per pair.
    pub fn horizontal_overlaps(&self) -> Vec<u32> {
        adjacent_overlaps(&self.x_origins(), self.tile_w)
    }

    /// Overlap in pixels between vertically adjacent slices, per pair.
    pub fn vertical_overlaps(&self) -> Vec<u32> {
        adjacent_overlaps(&self.y_origins(), self.tile_h)
    }
}

fn adjacent_overlaps(origins: &[u32], tile: u32) -> Vec<u32> {
    origins.windows(2).map(|w| tile - (w[1] - w[0])).collect()
}

/// Build a grid from a tile count and overlap ratio per axis.
pub fn compute_grid(image_w: u32, image_h: u32, rows: u32, cols: u32, overlap_ratio: f64) -> Result<SliceGrid> {
    if !(0.0..1.0).contains(&overlap_ratio) {
        return Err(InspectError::usage(format!(
            "overlap ratio {overlap_ratio} outside [0, 1)"
        )));
    }
    check_dims(image_w, image_h, rows, cols)?;
    let tile_w = tile_len(image_w, cols, overlap_ratio);
    let tile_h = tile_len(image_h, rows, overlap_ratio);
    let mut grid = build(image_w, image_h, rows, cols, tile_w, tile_h)?;
    grid.overlap_ratio = Some(overlap_ratio);
    Ok(grid)
}

/// Build a grid with an explicit tile size; origins are spread evenly so the
/// last tile ends on the image edge.
pub fn compute_grid_fixed_tile(
    image_w: u32,
    image_h: u32,
    rows: u32,
    cols: u32,
    tile_w: u32,
    tile_h: u32,
) -> Result<SliceGrid> {
    check_dims(image_w, image_h, rows, cols)?;
    if tile_w == 0 || tile_h == 0 {
        return Err(InspectError::usage("tile dimensions must be positive"));
    }
    if tile_w > image_w || tile_h > image_h {
        return Err(InspectError::usage(format!(
            "tile {tile_w}x{tile_h} larger than image {image_w}x{image_h}"
        )));
    }
    if (cols as u64) * (tile_w as u64) < image_w as u64 || (rows as u64) * (tile_h as u64) < image_h as u64 {
        return Err(InspectError::usage(format!(
            "{rows}x{cols} tiles of {tile_w}x{tile_h} cannot cover {image_w}x{image_h}"
        )));
    }
    build(image_w, image_h, rows, cols, tile_w, tile_h)
}

fn check_dims(image_w: u32, image_h: u32, rows: u32, cols: u32) -> Result<()> {
    if image_w == 0 || image_h == 0 {
        return Err(InspectError::usage("image dimensions must be positive"));
    }
    if rows == 0 || cols == 0 {
        return Err(InspectError::usage("grid needs at least one row and one column"));
    }
    Ok(())
}

fn tile_len(dim: u32, n: u32, overlap: f64) -> u32 {
    if n == 1 {
        return dim;
    }
    let n = n as f64;
    let tile = (dim as f64 / (n - (n - 1.0) * overlap)).ceil() as u32;
    tile.clamp(1, dim)
}

fn origins(dim: u32, n: u32, tile: u32) -> Result<Vec<u32>> {
    if n == 1 {
        return Ok(vec![0]);
    }
    let span = (dim - tile) as u64;
    let steps = (n - 1) as u64;
    let out: Vec<u32> = (0..n as u64).map(|i| (i * span / steps) as u32).collect();
    if out.windows(2).any(|w| w[1] <= w[0]) {
        return Err(InspectError::usage(format!(
            "{n} tiles of {tile} px are too dense for an axis of {dim} px"
        )));
    }
    Ok(out)
}

fn build(image_w: u32, image_h: u32, rows: u32, cols: u32, tile_w: u32, tile_h: u32) -> Result<SliceGrid> {
    let xs = origins(image_w, cols, tile_w)?;
    let ys = origins(image_h, rows, tile_h)?;
    let mut slices = Vec::with_capacity((rows * cols) as usize);
    for (row, &y) in ys.iter().enumerate() {
        for (col, &x) in xs.iter().enumerate() {
            slices.push(SliceRect {
                row: row as u32,
                col: col as u32,
                x,
                y,
                w: tile_w,
                h: tile_h,
            });
        }
    }
    Ok(SliceGrid {
        image_w,
        image_h,
        rows,
        cols,
        overlap_ratio: None,
        tile_w,
        tile_h,
        slices,
    })
}

/// Translate a slice-local box into the global image frame.
pub fn project_to_global(slice: &SliceRect, local: &BoundingBox) -> Result<BoundingBox> {
    if local.right() > slice.w as f64 || local.bottom() > slice.h as f64 {
        return Err(InspectError::usage(format!(
            "box {local} escapes slice ({},{}) of size {}x{}",
            slice.row, slice.col, slice.w, slice.h
        )));
    }
    local.translate(slice.x as f64, slice.y as f64)
}
