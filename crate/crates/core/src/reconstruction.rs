//! Back-projection inversion.
//!
//! Even `n`: `f = det(A)/c_n * Delta_{Ax} sum_j w_j int r q_j(r) log| |x - A sigma_j|^2 - r^2 | dr`
//! with `q = D_r^{n-2} r^{n-2} g`. The radial integral is taken exactly for
//! the piecewise-linear interpolant of `r q(r)`, so the log singularity at
//! `r = |x - A sigma_j|` needs no special treatment.
//!
//! Odd `n`: `f = det(A)/c_n * Delta_{Ax} sum_j w_j q_j(|x - A sigma_j|)` with
//! `q = D_r^{n-3} r^{n-2} g` interpolated along the radial axis. The
//! Heaviside kernel collapses the radial integral to
//! `(1/2) [D_r^{n-3} r^{n-2} g]` at `r = |x - A sigma|` (the value at `r = 0`
//! is independent of `x` and is annihilated by the Laplacian); the factor
//! `1/2` cancels against the `2^{n-2}` of the kernel constant, leaving
//! `det(A)/c_n` in front.

use rayon::prelude::*;

use crate::error::{ensure, Error, Result};
use crate::filtering::{radial_filter, FilteredData};
use crate::forward::MeanData;
use crate::geometry::{reconstruction_constant, Ellipsoid};
use crate::interp::UniformSamples;

/// Cartesian grid over the bounding box of the ellipsoid, with the mask of
/// nodes where the inversion is evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct VolumeGrid {
    counts: Vec<usize>,
    origin: Vec<f64>,
    spacing: Vec<f64>,
    strides: Vec<usize>,
    mask: Vec<bool>,
}

impl VolumeGrid {
    /// Grid on `[-a_i - margin, a_i + margin]` with `counts[i]` nodes per axis.
    ///
    /// Masked nodes satisfy `|A^{-1} x| < 1 - 2 max(h_i) / min(a_i)`, which
    /// keeps every Laplacian stencil inside the ellipsoid.
    pub fn new(geometry: &Ellipsoid, counts: &[usize], margin: f64) -> Result<Self> {
        let n = geometry.dim();
        ensure!(
            counts.len() == n,
            Domain,
            "expected {n} node counts, got {}",
            counts.len()
        );
        ensure!(
            counts.iter().all(|&c| c >= 3),
            Grid,
            "every axis needs at least 3 nodes: {counts:?}"
        );
        ensure!(
            margin >= 0.0 && margin.is_finite(),
            Domain,
            "grid margin must be non-negative"
        );
        let origin: Vec<f64> = geometry.semi_axes().iter().map(|a| -a - margin).collect();
        let spacing: Vec<f64> = geometry
            .semi_axes()
            .iter()
            .zip(counts)
            .map(|(a, &c)| 2.0 * (a + margin) / (c - 1) as f64)
            .collect();
        let mut grid = Self::from_parts(counts.to_vec(), origin, spacing)?;
        grid.set_ellipsoid_mask(geometry);
        Ok(grid)
    }

    /// Mask `|A^{-1} x| < 1 - 2 max(h_i) / min(a_i)` away from the grid faces.
    pub fn set_ellipsoid_mask(&mut self, geometry: &Ellipsoid) {
        let h_max = self.spacing.iter().copied().fold(0.0, f64::max);
        let limit = 1.0 - 2.0 * h_max / geometry.min_semi_axis();
        self.set_mask(|x| geometry.normalized_radius(x) < limit);
    }

    /// Grid with explicit layout and an empty mask.
    pub fn from_parts(counts: Vec<usize>, origin: Vec<f64>, spacing: Vec<f64>) -> Result<Self> {
        let n = counts.len();
        ensure!(
            n >= 1 && origin.len() == n && spacing.len() == n,
            Domain,
            "inconsistent grid layout"
        );
        ensure!(
            spacing.iter().all(|&h| h > 0.0),
            Domain,
            "grid spacing must be positive"
        );
        let mut strides = vec![1; n];
        for i in (0..n.saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * counts[i + 1];
        }
        let len = counts.iter().product();
        Ok(Self {
            counts,
            origin,
            spacing,
            strides,
            mask: vec![false; len],
        })
    }

    /// Replaces the mask with `keep(x)` on every node away from the grid faces.
    pub fn set_mask<F: Fn(&[f64]) -> bool>(&mut self, keep: F) {
        let mut x = vec![0.0; self.dim()];
        let mut idx = vec![0; self.dim()];
        for flat in 0..self.len() {
            self.unravel(flat, &mut idx);
            let interior = idx.iter().zip(&self.counts).all(|(&i, &c)| i > 0 && i + 1 < c);
            self.write_point(flat, &mut x);
            self.mask[flat] = interior && keep(&x);
        }
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.mask.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mask.is_empty()
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Row-major strides (last axis fastest).
    pub fn strides(&self) -> &[usize] {
        &self.strides
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn unravel(&self, mut flat: usize, idx: &mut [usize]) {
        for (i, s) in self.strides.iter().enumerate() {
            idx[i] = flat / s;
            flat %= s;
        }
    }

    pub fn write_point(&self, flat: usize, x: &mut [f64]) {
        let mut rest = flat;
        for i in 0..self.dim() {
            let k = rest / self.strides[i];
            rest %= self.strides[i];
            x[i] = self.origin[i] + k as f64 * self.spacing[i];
        }
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut x = vec![0.0; self.dim()];
        self.write_point(flat, &mut x);
        x
    }

    /// Mask nodes together with their axis neighbours: the nodes a
    /// back-projection must fill before the Laplacian can be taken.
    pub fn stencil_support(&self) -> Vec<bool> {
        let mut support = self.mask.clone();
        let mut idx = vec![0; self.dim()];
        for flat in 0..self.len() {
            if !self.mask[flat] {
                continue;
            }
            self.unravel(flat, &mut idx);
            for (axis, &stride) in self.strides.iter().enumerate() {
                if idx[axis] > 0 {
                    support[flat - stride] = true;
                }
                if idx[axis] + 1 < self.counts[axis] {
                    support[flat + stride] = true;
                }
            }
        }
        support
    }

    /// Samples `f` on every node.
    pub fn sample<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map_init(
                || vec![0.0; self.dim()],
                |x, flat| {
                    self.write_point(flat, x);
                    f(x)
                },
            )
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Backprojected,
    LaplacianApplied,
}

/// Bookkeeping of discretization events during reconstruction.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Diagnostics {
    /// Mask nodes dropped because a Laplacian stencil left the grid or the
    /// filled region.
    pub dropped_nodes: usize,
}

/// Scalar field on a [`VolumeGrid`]; `defined` marks nodes carrying values.
#[derive(Debug, Clone, PartialEq)]
pub struct ReconImage {
    pub grid: VolumeGrid,
    pub values: Vec<f64>,
    pub defined: Vec<bool>,
    pub stage: Stage,
    pub diagnostics: Diagnostics,
}

impl ReconImage {
    /// Image with values on every node, e.g. a sampled ground truth.
    pub fn from_values(grid: VolumeGrid, values: Vec<f64>, stage: Stage) -> Result<Self> {
        ensure!(
            values.len() == grid.len(),
            Domain,
            "value count {} != grid size {}",
            values.len(),
            grid.len()
        );
        let defined = vec![true; grid.len()];
        Ok(Self {
            grid,
            values,
            defined,
            stage,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Which radial integrand the odd-dimensional back-projection evaluates at
/// `r = |x - A sigma|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OddIntegrand {
    /// `D_r^{n-3} r^{n-2} Mf`, the form produced by collapsing the
    /// Heaviside kernel.
    #[default]
    Collapsed,
    /// `r D_r^{n-3} r^{n-2} Mf`, with an extra factor of the radius.
    ExtraRadius,
}

/// Per-direction precomputation for the log-kernel integral.
struct EvenDirection {
    center: Vec<f64>,
    radius: Vec<f64>,
    /// `w_j` times the slope jumps of the piecewise-linear `r q(r)`.
    kink: Vec<f64>,
    /// `w_j sum_k kink_k (3 r_k^2) / 2`, constant in `x`.
    offset: f64,
    /// `w_j sum_k kink_k / 2`, multiplies `|x - A sigma|^2`.
    quadratic: f64,
}

/// `F(d) = sum_k c_k [(r_k - d)^2 log|r_k - d| + (r_k + d)^2 log(r_k + d)]`
/// and `F'(d)`. `-F/2` is the non-polynomial part of the second
/// antiderivative in `r` of `log|d^2 - r^2|` summed against the slope jumps
/// `c_k`.
#[inline]
fn log_kernel_sum(radius: &[f64], coeff: &[f64], d: f64) -> (f64, f64) {
    let mut value = 0.0;
    let mut slope = 0.0;
    for (&r, &c) in radius.iter().zip(coeff) {
        let diff = r - d;
        let plus = r + d;
        // (r - d)^2 log|r - d| and its derivative vanish as r -> d
        let (sing, dsing) = if diff != 0.0 {
            let l = diff.abs().ln();
            (diff * diff * l, -diff * (2.0 * l + 1.0))
        } else {
            (0.0, 0.0)
        };
        let lp = plus.ln();
        value += c * (sing + plus * plus * lp);
        slope += c * (dsing + plus * (2.0 * lp + 1.0));
    }
    (value, slope)
}

/// How the radial log-kernel integral is evaluated at each node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvenKernelEvaluation {
    /// Closed-form product integral at every node and direction.
    Exact,
    /// Closed-form product integral tabulated per direction on a grid in
    /// `d = |x - A sigma|` aligned with the radii and `oversampling` times
    /// finer, with cubic Hermite interpolation from exact values and
    /// derivatives.
    Tabulated { oversampling: usize },
}

impl Default for EvenKernelEvaluation {
    fn default() -> Self {
        Self::Tabulated { oversampling: 4 }
    }
}

/// Per-direction `F(d)` samples on `d_i = start + i step`.
struct KernelTable {
    start: f64,
    step: f64,
    value: Vec<f64>,
    slope: Vec<f64>,
}

impl KernelTable {
    fn build(dir: &EvenDirection, start: f64, step: f64, end: f64) -> Self {
        let len = ((end - start) / step).ceil() as usize + 2;
        let (value, slope) = (0..len)
            .map(|i| log_kernel_sum(&dir.radius, &dir.kink, start + i as f64 * step))
            .unzip();
        Self {
            start,
            step,
            value,
            slope,
        }
    }

    #[inline]
    fn eval(&self, d: f64) -> f64 {
        let t = (d - self.start) / self.step;
        let i = (t.floor().max(0.0) as usize).min(self.value.len() - 2);
        let u = t - i as f64;
        let v = 1.0 - u;
        let h00 = (1.0 + 2.0 * u) * v * v;
        let h10 = u * v * v;
        let h01 = u * u * (3.0 - 2.0 * u);
        let h11 = -u * u * v;
        h00 * self.value[i] + h01 * self.value[i + 1] + self.step * (h10 * self.slope[i] + h11 * self.slope[i + 1])
    }
}

/// Even-dimensional back-projection with the kernel `log| |x - A sigma|^2 - r^2 |`.
pub fn backproject_even(filtered: &FilteredData, grid: &VolumeGrid) -> Result<ReconImage> {
    backproject_even_with(filtered, grid, EvenKernelEvaluation::default())
}

/// Even-dimensional back-projection.
///
/// The radial integral is evaluated exactly for the piecewise-linear
/// interpolant of `r q(r)` through the radial samples (product
/// integration). With `K(r, d)` the second antiderivative in `r` of the
/// kernel, the integral collapses to `sum_k kink_k K(r_k, d)` where
/// `kink_k` are the slope jumps of the interpolant, a smooth function of
/// `d = |x - A sigma|` without singular terms. Only the range of nonzero
/// filtered samples is visited.
pub fn backproject_even_with(
    filtered: &FilteredData,
    grid: &VolumeGrid,
    evaluation: EvenKernelEvaluation,
) -> Result<ReconImage> {
    let n = filtered.dim();
    ensure!(n % 2 == 0, Domain, "even back-projection needs even n, got {n}");
    ensure!(
        filtered.order == n - 2,
        Domain,
        "even back-projection needs D_r order {}, got {}",
        n - 2,
        filtered.order
    );
    ensure!(grid.dim() == n, Domain, "grid dimension {} != {n}", grid.dim());

    let dr = filtered.radii.step();
    let dirs = &filtered.directions;
    let k_count = filtered.radii.len();
    let plan: Vec<EvenDirection> = (0..dirs.len())
        .into_par_iter()
        .filter_map(|j| {
            let row = filtered.row(j);
            let first = row.iter().position(|&v| v != 0.0)?;
            let last = row.iter().rposition(|&v| v != 0.0)?;
            let w = dirs.weights()[j];
            // r q(r) at sample k, zero outside the stored radii
            let p = |k: isize| -> f64 {
                if k < 0 || k as usize >= k_count {
                    0.0
                } else {
                    filtered.radii.r(k as usize) * row[k as usize]
                }
            };
            let (lo, hi) = (first as isize - 1, last as isize + 1);
            let mut radius = Vec::with_capacity((hi - lo + 1) as usize);
            let mut kink = Vec::with_capacity(radius.capacity());
            for k in lo..=hi {
                // the node below r_0 may sit at r <= 0, where the interpolant
                // is zero on both sides
                let r = filtered.radii.first() + k as f64 * dr;
                if r <= 0.0 {
                    continue;
                }
                radius.push(r);
                kink.push(-w * (p(k + 1) - 2.0 * p(k) + p(k - 1)) / dr);
            }
            let offset = radius.iter().zip(&kink).map(|(r, c)| 1.5 * c * r * r).sum();
            let quadratic = 0.5 * kink.iter().sum::<f64>();
            Some(EvenDirection {
                center: filtered.geometry.boundary_point(dirs.node(j)),
                radius,
                kink,
                offset,
                quadratic,
            })
        })
        .collect();

    let tables: Option<Vec<KernelTable>> = match evaluation {
        EvenKernelEvaluation::Exact => None,
        EvenKernelEvaluation::Tabulated { oversampling } => {
            ensure!(oversampling >= 1, Domain, "table oversampling must be at least 1");
            let step = dr / oversampling as f64;
            // align table nodes with the radii: start at the largest
            // r_0 - i step that is <= 0
            let start = filtered.radii.first() - (filtered.radii.first() / step).ceil() * step;
            Some(
                plan.par_iter()
                    .map(|d| KernelTable::build(d, start, step, farthest_corner(grid, &d.center)))
                    .collect(),
            )
        }
    };

    let support = grid.stencil_support();
    let mut values = vec![0.0; grid.len()];
    values.par_iter_mut().enumerate().for_each_init(
        || vec![0.0; n],
        |x, (flat, out)| {
            if !support[flat] {
                return;
            }
            grid.write_point(flat, x);
            let mut acc = 0.0;
            for (j, d) in plan.iter().enumerate() {
                let dist_sq: f64 = x.iter().zip(&d.center).map(|(a, b)| (a - b) * (a - b)).sum();
                let dist = dist_sq.sqrt();
                let log_part = match &tables {
                    Some(t) => t[j].eval(dist),
                    None => log_kernel_sum(&d.radius, &d.kink, dist).0,
                };
                acc += d.offset + d.quadratic * dist_sq - 0.5 * log_part;
            }
            *out = acc;
        },
    );

    Ok(ReconImage {
        grid: grid.clone(),
        values,
        defined: support,
        stage: Stage::Backprojected,
        diagnostics: Diagnostics::default(),
    })
}

/// Largest distance from `p` to a corner of the grid's bounding box.
fn farthest_corner(grid: &VolumeGrid, p: &[f64]) -> f64 {
    grid.origin()
        .iter()
        .zip(grid.spacing())
        .zip(grid.counts())
        .zip(p)
        .map(|(((&o, &h), &c), &pi)| {
            let hi = o + (c - 1) as f64 * h;
            (pi - o).abs().max((pi - hi).abs()).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Odd-dimensional back-projection: `sum_j w_j q_j(|x - A sigma_j|)`.
pub fn backproject_odd(filtered: &FilteredData, grid: &VolumeGrid) -> Result<ReconImage> {
    backproject_odd_with(filtered, grid, OddIntegrand::Collapsed)
}

pub fn backproject_odd_with(filtered: &FilteredData, grid: &VolumeGrid, integrand: OddIntegrand) -> Result<ReconImage> {
    let n = filtered.dim();
    ensure!(
        n % 2 == 1 && n >= 3,
        Domain,
        "odd back-projection needs odd n >= 3, got {n}"
    );
    ensure!(
        filtered.order == n - 3,
        Domain,
        "odd back-projection needs D_r order {}, got {}",
        n - 3,
        filtered.order
    );
    ensure!(grid.dim() == n, Domain, "grid dimension {} != {n}", grid.dim());

    let dirs = &filtered.directions;
    let centers: Vec<Vec<f64>> = dirs.nodes().map(|s| filtered.geometry.boundary_point(s)).collect();
    let start = filtered.radii.first();
    let step = filtered.radii.step();
    let support = grid.stencil_support();

    let mut values = vec![0.0; grid.len()];
    values.par_iter_mut().enumerate().for_each_init(
        || vec![0.0; n],
        |x, (flat, out)| {
            if !support[flat] {
                return;
            }
            grid.write_point(flat, x);
            let mut acc = 0.0;
            for (j, (center, &w)) in centers.iter().zip(dirs.weights()).enumerate() {
                let dist = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                let samples = UniformSamples {
                    start,
                    step,
                    values: filtered.row(j),
                };
                // data vanish outside the sampled radii
                let Some(q) = samples.cubic(dist) else { continue };
                acc += match integrand {
                    OddIntegrand::Collapsed => w * q,
                    OddIntegrand::ExtraRadius => w * dist * q,
                };
            }
            *out = acc;
        },
    );

    Ok(ReconImage {
        grid: grid.clone(),
        values,
        defined: support,
        stage: Stage::Backprojected,
        diagnostics: Diagnostics::default(),
    })
}

/// `Delta_{Ax} = sum_i a_i^{-2} d^2/dx_i^2` by second-order central
/// differences on the mask nodes.
pub fn apply_anisotropic_laplacian(image: &ReconImage, geometry: &Ellipsoid) -> Result<ReconImage> {
    ensure!(
        image.stage == Stage::Backprojected,
        Domain,
        "the Laplacian applies to back-projected images only"
    );
    let grid = &image.grid;
    let n = grid.dim();
    ensure!(
        geometry.dim() == n,
        Domain,
        "geometry dimension {} != grid dimension {n}",
        geometry.dim()
    );
    let scale: Vec<f64> = geometry
        .semi_axes()
        .iter()
        .zip(grid.spacing())
        .map(|(a, h)| 1.0 / (a * a * h * h))
        .collect();

    let results: Vec<Option<f64>> = (0..grid.len())
        .into_par_iter()
        .map_init(
            || vec![0; n],
            |idx, flat| {
                if !grid.mask()[flat] || !image.defined[flat] {
                    return None;
                }
                grid.unravel(flat, idx);
                let center = image.values[flat];
                let mut acc = 0.0;
                for axis in 0..n {
                    let stride = grid.strides()[axis];
                    if idx[axis] == 0 || idx[axis] + 1 >= grid.counts()[axis] {
                        return None;
                    }
                    let (lo, hi) = (flat - stride, flat + stride);
                    if !image.defined[lo] || !image.defined[hi] {
                        return None;
                    }
                    acc += scale[axis] * (image.values[lo] + image.values[hi] - 2.0 * center);
                }
                Some(acc)
            },
        )
        .collect();

    let mut dropped = 0;
    let mut values = vec![0.0; grid.len()];
    let mut defined = vec![false; grid.len()];
    for (flat, r) in results.into_iter().enumerate() {
        match r {
            Some(v) => {
                values[flat] = v;
                defined[flat] = true;
            }
            None if grid.mask()[flat] => dropped += 1,
            None => {}
        }
    }
    if dropped > 0 {
        log::warn!("{dropped} mask nodes dropped: incomplete Laplacian stencil");
    }

    Ok(ReconImage {
        grid: grid.clone(),
        values,
        defined,
        stage: Stage::LaplacianApplied,
        diagnostics: Diagnostics {
            dropped_nodes: image.diagnostics.dropped_nodes + dropped,
        },
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ReconstructionOptions {
    pub odd_integrand: OddIntegrand,
    pub even_kernel: EvenKernelEvaluation,
}

/// Filter, back-project, apply `Delta_{Ax}` and scale by `det(A)/c_n`.
pub fn reconstruct(data: &MeanData, grid: &VolumeGrid) -> Result<ReconImage> {
    reconstruct_with(data, grid, ReconstructionOptions::default())
}

pub fn reconstruct_with(data: &MeanData, grid: &VolumeGrid, options: ReconstructionOptions) -> Result<ReconImage> {
    let n = data.dim();
    ensure!(
        grid.dim() == n,
        Domain,
        "grid dimension {} != data dimension {n}",
        grid.dim()
    );
    let backprojected = if n % 2 == 0 {
        let filtered = radial_filter(data, n - 2)?;
        backproject_even_with(&filtered, grid, options.even_kernel)?
    } else {
        let filtered = radial_filter(data, n - 3)?;
        backproject_odd_with(&filtered, grid, options.odd_integrand)?
    };
    let mut image = apply_anisotropic_laplacian(&backprojected, &data.geometry)?;
    let factor = data.geometry.det() / reconstruction_constant(n)?;
    image.scale(factor);
    if image.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Grid("reconstruction produced non-finite values".into()));
    }
    Ok(image)
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::forward::RadialGrid;
    use crate::geometry::{build_sphere_quadrature, FundamentalSolution};
    use crate::quadrature::tanh_sinh;

    fn filtered(geom: &Ellipsoid, order: usize, radial: usize, m: usize) -> FilteredData {
        let directions = Arc::new(build_sphere_quadrature(geom.dim(), order).unwrap());
        let radii = RadialGrid::for_ellipsoid(geom, radial).unwrap();
        let values = vec![0.0; directions.len() * radii.len()];
        FilteredData {
            geometry: geom.clone(),
            directions,
            radii,
            values,
            order: m,
            margin: (0, 0),
        }
    }

    fn backprojected(grid: &VolumeGrid, f: impl Fn(&[f64]) -> f64 + Sync) -> ReconImage {
        let mut image = ReconImage::from_values(grid.clone(), grid.sample(f), Stage::Backprojected).unwrap();
        image.diagnostics = Diagnostics::default();
        image
    }

    #[test]
    fn zero_data_gives_zero_image() {
        let e2 = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        let g2 = VolumeGrid::new(&e2, &[11, 11], 0.05).unwrap();
        let img = backproject_even(&filtered(&e2, 8, 32, 0), &g2).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
        let e3 = Ellipsoid::new(vec![1.0, 0.8, 0.6]).unwrap();
        let g3 = VolumeGrid::new(&e3, &[7, 7, 7], 0.05).unwrap();
        let img = backproject_odd(&filtered(&e3, 6, 32, 0), &g3).unwrap();
        assert!(img.values.iter().all(|&v| v == 0.0));
    }

    /// `w p_k int hat_k(r) log|d^2 - r^2| dr` by tanh-sinh on pieces split
    /// at the hat vertices and at `r = d`.
    fn single_sample_oracle(w: f64, p: f64, rk: f64, dr: f64, d: f64) -> f64 {
        let mut cuts = vec![rk - dr, rk, rk + dr];
        if d > rk - dr && d < rk + dr && d != rk {
            cuts.push(d);
        }
        cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let hat = |r: f64| 1.0 - (r - rk).abs() / dr;
        cuts.windows(2)
            .map(|c| {
                let (a, b) = (c[0], c[1]);
                tanh_sinh(a, b, 7, |r, from_a, from_b| {
                    // |d - r| from the exact endpoint distance when d is an endpoint
                    let gap = if a == d {
                        from_a
                    } else if b == d {
                        from_b
                    } else {
                        (d - r).abs()
                    };
                    hat(r) * (gap.ln() + (d + r).ln())
                })
            })
            .sum::<f64>()
            * w
            * p
    }

    fn distance_to(center: &[f64], x: &[f64]) -> f64 {
        x.iter().zip(center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    }

    #[test]
    fn single_sample_matches_product_integral() {
        let e = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        let mut data = filtered(&e, 8, 64, 0);
        let (j, k, q) = (3, 20, 1.5);
        let kc = data.radii.len();
        data.values[j * kc + k] = q;
        let grid = VolumeGrid::new(&e, &[9, 9], 0.05).unwrap();
        let w = data.directions.weights()[j];
        let rk = data.radii.r(k);
        let dr = data.radii.step();
        let center = e.boundary_point(data.directions.node(j));

        let exact = backproject_even_with(&data, &grid, EvenKernelEvaluation::Exact).unwrap();
        let (mut scale, mut err) = (0.0f64, 0.0f64);
        for flat in (0..grid.len()).filter(|&i| exact.defined[i]) {
            let want = single_sample_oracle(w, rk * q, rk, dr, distance_to(&center, &grid.point(flat)));
            scale = scale.max(want.abs());
            err = err.max((exact.values[flat] - want).abs());
        }
        assert!(err <= 1e-11 * scale, "error {err} scale {scale}");
    }

    #[test]
    fn table_matches_exact_on_smooth_rows() {
        let e = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        let mut data = filtered(&e, 16, 256, 0);
        let kc = data.radii.len();
        for j in 0..data.directions.len() {
            for k in 0..kc {
                let r = data.radii.r(k);
                data.values[j * kc + k] = (-8.0 * (r - 0.6 - 0.02 * j as f64).powi(2)).exp() * (1.0 - r * r / 4.5);
            }
        }
        let grid = VolumeGrid::new(&e, &[41, 41], 0.05).unwrap();
        let exact = backproject_even_with(&data, &grid, EvenKernelEvaluation::Exact).unwrap();
        let table = backproject_even_with(&data, &grid, EvenKernelEvaluation::Tabulated { oversampling: 4 }).unwrap();
        let scale = exact.values.iter().fold(0.0f64, |s, v| s.max(v.abs()));
        for (a, b) in exact.values.iter().zip(&table.values) {
            assert!((a - b).abs() <= 2e-8 * scale, "{a} vs {b}");
        }
    }

    #[test]
    fn single_sample_tends_to_point_rule() {
        // away from the singularity the hat integral is w dr p log|d^2 - r^2| + O(dr^2)
        let (w, p, rk, d) = (0.3, 2.0, 0.9, 0.4);
        for dr in [1e-2, 5e-3] {
            let product = single_sample_oracle(w, p, rk, dr, d);
            let point = w * dr * p * (d * d - rk * rk).abs().ln();
            assert!(((product - point) / point).abs() < 2.0 * dr * dr, "dr={dr}");
        }
    }

    #[test]
    fn odd_backprojection_interpolates_cubics_exactly() {
        let e = Ellipsoid::new(vec![1.0, 0.8, 0.6]).unwrap();
        let mut data = filtered(&e, 6, 48, 0);
        let kc = data.radii.len();
        let j = 5;
        let cubic = |r: f64| 0.3 - r + 0.5 * r * r * r;
        for k in 0..kc {
            data.values[j * kc + k] = cubic(data.radii.r(k));
        }
        let grid = VolumeGrid::new(&e, &[7, 7, 7], 0.05).unwrap();
        let w = data.directions.weights()[j];
        let center = e.boundary_point(data.directions.node(j));
        for integrand in [OddIntegrand::Collapsed, OddIntegrand::ExtraRadius] {
            let img = backproject_odd_with(&data, &grid, integrand).unwrap();
            for flat in 0..grid.len() {
                if !img.defined[flat] {
                    continue;
                }
                let x = grid.point(flat);
                let d = x.iter().zip(&center).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                let extra = if integrand == OddIntegrand::ExtraRadius { d } else { 1.0 };
                assert!((img.values[flat] - w * extra * cubic(d)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_of_quadratic_and_constant() {
        let e = Ellipsoid::new(vec![1.0, 0.8, 0.6]).unwrap();
        let grid = VolumeGrid::new(&e, &[15, 13, 11], 0.05).unwrap();
        let want: f64 = e.semi_axes().iter().map(|a| 2.0 / (a * a)).sum();
        let quad = apply_anisotropic_laplacian(&backprojected(&grid, |x| x.iter().map(|v| v * v).sum()), &e).unwrap();
        let constant = apply_anisotropic_laplacian(&backprojected(&grid, |_| 4.25), &e).unwrap();
        let mut count = 0;
        for flat in 0..grid.len() {
            if grid.mask()[flat] {
                count += 1;
                assert!((quad.values[flat] - want).abs() < 1e-9 * want);
                assert_eq!(constant.values[flat], 0.0);
            }
        }
        assert!(count > 0);
        assert_eq!(quad.diagnostics.dropped_nodes, 0);
        assert_eq!(quad.stage, Stage::LaplacianApplied);
    }

    #[test]
    fn laplacian_annihilates_stretched_fundamental_solution() {
        // Delta_{Ax} G(Ax - A y0) = (Delta G)(A(x - y0)) = 0 away from y0
        for (axes, y0) in [
            (vec![1.0, 0.7], vec![2.5, 0.3]),
            (vec![1.0, 0.8, 0.6], vec![0.2, 2.4, -0.1]),
        ] {
            let e = Ellipsoid::new(axes).unwrap();
            let g = FundamentalSolution::new(e.dim()).unwrap();
            let ay0 = e.stretch(&y0);
            let lap = |nodes: usize| {
                let grid = VolumeGrid::new(&e, &vec![nodes; e.dim()], 0.05).unwrap();
                let image = backprojected(&grid, |x| g.eval(&e.stretch(x), &ay0).unwrap());
                apply_anisotropic_laplacian(&image, &e).unwrap()
            };
            let (nc, nf) = if e.dim() == 2 { (41, 81) } else { (17, 33) };
            let (lc, lf) = (lap(nc), lap(nf));
            // compare on the coarse nodes, which are every other fine node
            let (mut coarse, mut fine) = (0.0f64, 0.0f64);
            let mut idx = vec![0; e.dim()];
            for i in (0..lc.grid.len()).filter(|&i| lc.defined[i]) {
                lc.grid.unravel(i, &mut idx);
                let fi: usize = idx.iter().zip(lf.grid.strides()).map(|(k, s)| 2 * k * s).sum();
                assert!(lf.defined[fi]);
                coarse = coarse.max(lc.values[i].abs());
                fine = fine.max(lf.values[fi].abs());
            }
            let ratio = coarse / fine;
            assert!(
                coarse < 0.05 && (3.5..4.6).contains(&ratio),
                "n={} ratio {ratio} coarse {coarse}",
                e.dim()
            );
        }
    }

    #[test]
    fn laplacian_drops_nodes_without_stencil() {
        let e = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        let grid = VolumeGrid::new(&e, &[21, 21], 0.05).unwrap();
        let mut image = backprojected(&grid, |x| x[0]);
        let hole = grid.mask().iter().position(|&m| m).unwrap();
        image.defined[hole - grid.strides()[0]] = false;
        let lap = apply_anisotropic_laplacian(&image, &e).unwrap();
        assert_eq!(lap.diagnostics.dropped_nodes, 1);
        assert!(!lap.defined[hole]);
        assert!(apply_anisotropic_laplacian(&lap, &e).is_err());
    }

    #[test]
    fn reconstruction_is_linear_in_data() {
        for axes in [vec![1.0, 0.7], vec![1.0, 0.8, 0.6]] {
            let e = Ellipsoid::new(axes).unwrap();
            let n = e.dim();
            let directions = Arc::new(build_sphere_quadrature(n, 8).unwrap());
            let radii = RadialGrid::for_ellipsoid(&e, 40).unwrap();
            let mut a = MeanData::zeros(e.clone(), Arc::clone(&directions), radii);
            let mut b = a.clone();
            for (i, (u, v)) in a.values.iter_mut().zip(b.values.iter_mut()).enumerate() {
                let t = i as f64;
                *u = (0.37 * t).sin();
                *v = (0.11 * t).cos() * 0.5;
            }
            let mut mix = a.clone();
            for (m, v) in mix.values.iter_mut().zip(&b.values) {
                *m = 2.0 * *m - 3.0 * v;
            }
            let grid = VolumeGrid::new(&e, &vec![9; n], 0.05).unwrap();
            let (ra, rb, rm) = (
                reconstruct(&a, &grid).unwrap(),
                reconstruct(&b, &grid).unwrap(),
                reconstruct(&mix, &grid).unwrap(),
            );
            let scale = rm.values.iter().fold(0.0f64, |s, v| s.max(v.abs())).max(1.0);
            for i in 0..grid.len() {
                let want = 2.0 * ra.values[i] - 3.0 * rb.values[i];
                assert!((rm.values[i] - want).abs() <= 1e-10 * scale, "n={n}");
            }
        }
    }

    #[test]
    fn rejects_mismatched_parity() {
        let e = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        let grid = VolumeGrid::new(&e, &[9, 9], 0.05).unwrap();
        assert!(backproject_odd(&filtered(&e, 8, 32, 0), &grid).is_err());
        assert!(backproject_even(&filtered(&e, 8, 32, 1), &grid).is_err());
    }
}
