//! Path rasterization and binary morphology on the pixel grid.
//!
//! Cell `(i, j)` covers `[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)`.

use std::collections::VecDeque;

use crate::grid::Point2;

fn cell_of(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// 4-connected supercover of a segment: every cell the segment touches, with
/// an extra cell inserted at exact corner crossings.
pub fn supercover_segment(a: Point2, b: Point2) -> Vec<(i64, i64)> {
    let (mut cx, mut cy) = (cell_of(a[0]), cell_of(a[1]));
    let (ex, ey) = (cell_of(b[0]), cell_of(b[1]));
    let mut out = vec![(cx, cy)];
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let sx: i64 = if dx > 0.0 { 1 } else { -1 };
    let sy: i64 = if dy > 0.0 { 1 } else { -1 };
    // parametric distance to the next vertical / horizontal cell boundary
    let next_t = |c: i64, s: i64, p: f64, d: f64| -> (f64, f64) {
        if d == 0.0 {
            return (f64::INFINITY, f64::INFINITY);
        }
        let boundary = c as f64 + 0.5 * s as f64;
        ((boundary - p) / d, 1.0 / d.abs())
    };
    let (mut tx, delta_x) = next_t(cx, sx, a[0], dx);
    let (mut ty, delta_y) = next_t(cy, sy, a[1], dy);
    let steps = (ex - cx).abs() + (ey - cy).abs();
    for _ in 0..steps {
        if (cx, cy) == (ex, ey) {
            break;
        }
        if tx <= ty && cx != ex {
            cx += sx;
            tx += delta_x;
        } else if cy != ey {
            cy += sy;
            ty += delta_y;
        } else {
            cx += sx;
            tx += delta_x;
        }
        out.push((cx, cy));
    }
    out
}

/// Ordered distinct in-bounds cells (linear indices) covered by a polyline.
pub fn rasterize_polyline(points: &[Point2], width: usize, height: usize) -> Vec<usize> {
    let mut seen = vec![false; width * height];
    let mut out = Vec::new();
    let mut push = |(x, y): (i64, i64)| {
        if x >= 0 && y >= 0 && (x as usize) < width && (y as usize) < height {
            let i = y as usize * width + x as usize;
            if !seen[i] {
                seen[i] = true;
                out.push(i);
            }
        }
    };
    match points.len() {
        0 => {}
        1 => push((cell_of(points[0][0]), cell_of(points[0][1]))),
        _ => {
            for w in points.windows(2) {
                supercover_segment(w[0], w[1]).into_iter().for_each(&mut push);
            }
        }
    }
    out
}

/// Dilation by the disk `{d : |d| <= radius}` of cell-center offsets.
pub fn dilate(mask: &[bool], width: usize, height: usize, radius: f64) -> Vec<bool> {
    let r = radius.floor() as i64;
    let offsets: Vec<(i64, i64)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| ((dx * dx + dy * dy) as f64) <= radius * radius)
        .collect();
    let mut out = vec![false; width * height];
    for (i, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        let (x, y) = ((i % width) as i64, (i / width) as i64);
        for &(dx, dy) in &offsets {
            let (nx, ny) = (x + dx, y + dy);
            if nx >= 0 && ny >= 0 && (nx as usize) < width && (ny as usize) < height {
                out[ny as usize * width + nx as usize] = true;
            }
        }
    }
    out
}

/// Whether the set cells form a single 4-connected component.
pub fn is_connected(mask: &[bool], width: usize, height: usize) -> bool {
    let Some(first) = mask.iter().position(|&m| m) else {
        return false;
    };
    let mut seen = vec![false; mask.len()];
    let mut queue = VecDeque::from([first]);
    seen[first] = true;
    let mut count = 0;
    while let Some(i) = queue.pop_front() {
        count += 1;
        let (x, y) = (i % width, i / width);
        let mut visit = |j: usize| {
            if mask[j] && !seen[j] {
                seen[j] = true;
                queue.push_back(j);
            }
        };
        if x > 0 {
            visit(i - 1);
        }
        if x + 1 < width {
            visit(i + 1);
        }
        if y > 0 {
            visit(i - width);
        }
        if y + 1 < height {
            visit(i + width);
        }
    }
    count == mask.iter().filter(|&&m| m).count()
}
