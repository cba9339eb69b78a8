//! Binary PGM (P5) export of two-dimensional slices.

use crate::error::{ensure, Result};
use crate::reconstruction::ReconImage;

/// Plane of an image: all axes fixed except two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SliceSpec {
    /// Axis held fixed; ignored for two-dimensional images.
    pub axis: usize,
    pub index: usize,
}

/// Values of the slice, rows along the first free axis, undefined nodes as
/// `None`. Axes beyond the first three are held at their midpoint.
pub fn extract_slice(image: &ReconImage, slice: SliceSpec) -> Result<(usize, usize, Vec<Option<f64>>)> {
    let grid = &image.grid;
    let n = grid.dim();
    ensure!(n >= 2, Domain, "a slice needs at least two axes");
    let mut fixed: Vec<Option<usize>> = grid.counts().iter().map(|&c| Some(c / 2)).collect();
    let free: Vec<usize> = if n == 2 {
        vec![0, 1]
    } else {
        ensure!(
            slice.axis < n,
            Domain,
            "slice axis {} out of range for {n} axes",
            slice.axis
        );
        ensure!(
            slice.index < grid.counts()[slice.axis],
            Domain,
            "slice index {} out of range 0..{}",
            slice.index,
            grid.counts()[slice.axis]
        );
        fixed[slice.axis] = Some(slice.index);
        (0..n).filter(|&i| i != slice.axis).take(2).collect()
    };
    fixed[free[0]] = None;
    fixed[free[1]] = None;
    let (rows, cols) = (grid.counts()[free[0]], grid.counts()[free[1]]);
    let base: usize = fixed
        .iter()
        .zip(grid.strides())
        .map(|(f, s)| f.map_or(0, |i| i * s))
        .sum();
    let (sr, sc) = (grid.strides()[free[0]], grid.strides()[free[1]]);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let flat = base + r * sr + c * sc;
            out.push(image.defined[flat].then(|| image.values[flat]));
        }
    }
    Ok((rows, cols, out))
}

/// P5 bytes of a slice with values mapped linearly from `window` (default:
/// the slice's own range) onto 0..255. Undefined nodes are black. A
/// degenerate window yields an all-black image.
pub fn export_slice_pgm(image: &ReconImage, slice: SliceSpec, window: Option<(f64, f64)>) -> Result<Vec<u8>> {
    let (rows, cols, values) = extract_slice(image, slice)?;
    let (lo, hi) = window.unwrap_or_else(|| {
        values
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)))
    });
    let degenerate = !(hi > lo) || !lo.is_finite() || !hi.is_finite();
    if degenerate {
        log::warn!("degenerate PGM window [{lo}, {hi}]: writing an all-zero image");
    }
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend(values.iter().map(|v| match v {
        Some(v) if !degenerate => ((v - lo) / (hi - lo) * 255.0).round().clamp(0.0, 255.0) as u8,
        _ => 0,
    }));
    Ok(bytes)
}
