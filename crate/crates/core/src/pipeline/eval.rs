//! Path accuracy against a ground-truth mask.

use crate::error::{invalid, Result};
use crate::grid::Point2;
use crate::raster::rasterize_polyline;

/// Fraction of the cells traversed by `path` (4-connected supercover) that
/// lie inside `mask`.
pub fn evaluate_theta(path: &[Point2], mask: &[bool], width: usize, height: usize) -> Result<f64> {
    if mask.len() != width * height {
        return Err(invalid(format!("mask has {} cells, expected {width}x{height}", mask.len())));
    }
    let cells = rasterize_polyline(path, width, height);
    if cells.is_empty() {
        return Err(invalid("path covers no cell of the image"));
    }
    let inside = cells.iter().filter(|&&i| mask[i]).count();
    Ok(inside as f64 / cells.len() as f64)
}
