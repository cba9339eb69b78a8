//! Radial filter `D_r^m r^{n-2}` applied to sampled means, where
//! `D_r = (2r)^{-1} d/dr` differentiates with respect to `rho = r^2`.
//!
//! `D_r` is applied as an ordinary derivative in `rho`: the data
//! `r^{n-2} g` is resampled onto a uniform `rho` grid, differentiated `m`
//! times with fourth-order finite differences, and resampled back onto the
//! radii. All interpolation is cubic in `rho`, so anything that is a cubic
//! polynomial in `rho` passes through exactly.

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::forward::{MeanData, RadialGrid};
use crate::geometry::{Ellipsoid, SphereQuadrature};
use crate::interp::{cubic_nonuniform, UniformSamples};

/// `q[j][k] = (D_r^m r^{n-2} Mf)(A sigma_j, r_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilteredData {
    pub geometry: Ellipsoid,
    pub directions: Arc<SphereQuadrature>,
    pub radii: RadialGrid,
    pub values: Vec<f64>,
    /// Derivative order `m`.
    pub order: usize,
    /// Radii at the low and high end whose values depend on one-sided
    /// difference stencils.
    pub margin: (usize, usize),
}

impl FilteredData {
    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let k = self.radii.len();
        &self.values[j * k..(j + 1) * k]
    }
}

/// Oversampling of the `rho` grid relative to the radial sample count.
const RHO_OVERSAMPLING: usize = 2;

/// Fourth-order first derivative of uniformly spaced samples, with
/// one-sided five-point stencils on the two outermost nodes at each end.
fn differentiate(u: &[f64], step: f64, out: &mut [f64]) {
    let len = u.len();
    let s = 1.0 / (12.0 * step);
    out[0] = s * (-25.0 * u[0] + 48.0 * u[1] - 36.0 * u[2] + 16.0 * u[3] - 3.0 * u[4]);
    out[1] = s * (-3.0 * u[0] - 10.0 * u[1] + 18.0 * u[2] - 6.0 * u[3] + u[4]);
    for i in 2..len - 2 {
        out[i] = s * (u[i - 2] - 8.0 * u[i - 1] + 8.0 * u[i + 1] - u[i + 2]);
    }
    let e = len - 1;
    out[e] = -s * (-25.0 * u[e] + 48.0 * u[e - 1] - 36.0 * u[e - 2] + 16.0 * u[e - 3] - 3.0 * u[e - 4]);
    out[e - 1] = -s * (-3.0 * u[e] - 10.0 * u[e - 1] + 18.0 * u[e - 2] - 6.0 * u[e - 3] + u[e - 4]);
}

/// Applies `D_r^m r^{n-2}` to every direction of `data`.
pub fn radial_filter(data: &MeanData, m: usize) -> Result<FilteredData> {
    let n = data.dim();
    let radii = data.radii;
    let k_count = radii.len();
    let r: Vec<f64> = radii.values();
    let power = n as i32 - 2;

    let mut values = data.values.clone();
    values
        .par_chunks_mut(k_count)
        .for_each(|row| row.iter_mut().zip(&r).for_each(|(v, &rk)| *v *= rk.powi(power)));

    if m == 0 {
        return Ok(FilteredData {
            geometry: data.geometry.clone(),
            directions: Arc::clone(&data.directions),
            radii,
            values,
            order: 0,
            margin: (0, 0),
        });
    }

    let rho_nodes: Vec<f64> = r.iter().map(|v| v * v).collect();
    let rho_lo = rho_nodes[0];
    let rho_hi = rho_nodes[k_count - 1];
    let rho_count = RHO_OVERSAMPLING * k_count;
    // every pass widens the one-sided region by two nodes at each end
    let edge = 2 * m;
    ensure!(
        rho_count >= 5 && 2 * edge + 1 <= rho_count,
        Grid,
        "{k_count} radial samples are too few for {m} derivatives in r^2"
    );
    let rho_step = (rho_hi - rho_lo) / (rho_count - 1) as f64;
    let rho_grid: Vec<f64> = (0..rho_count).map(|i| rho_lo + i as f64 * rho_step).collect();

    values.par_chunks_mut(k_count).for_each(|row| {
        let mut u: Vec<f64> = rho_grid
            .iter()
            .map(|&rho| cubic_nonuniform(&rho_nodes, row, rho))
            .collect();
        let mut du = vec![0.0; rho_count];
        for _ in 0..m {
            differentiate(&u, rho_step, &mut du);
            std::mem::swap(&mut u, &mut du);
        }
        let samples = UniformSamples {
            start: rho_lo,
            step: rho_step,
            values: &u,
        };
        for (v, &rho) in row.iter_mut().zip(&rho_nodes) {
            // rho_nodes lie in [rho_lo, rho_hi] by construction; clamp guards rounding
            let rho = rho.clamp(rho_lo, samples.end());
            *v = samples.cubic(rho).unwrap_or(0.0);
        }
    });

    // radii whose interpolation stencil touches a one-sided difference node
    let low_limit = rho_lo + (edge + 2) as f64 * rho_step;
    let high_limit = rho_hi - (edge + 2) as f64 * rho_step;
    let margin = (
        rho_nodes.iter().filter(|&&p| p < low_limit).count(),
        rho_nodes.iter().filter(|&&p| p > high_limit).count(),
    );

    Ok(FilteredData {
        geometry: data.geometry.clone(),
        directions: Arc::clone(&data.directions),
        radii,
        values,
        order: m,
        margin,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_sphere_quadrature;

    fn synthetic(n: usize, count: usize, g: impl Fn(f64) -> f64) -> MeanData {
        let geometry = Ellipsoid::ball(n, 1.0).unwrap();
        let dirs = Arc::new(build_sphere_quadrature(n, 4).unwrap());
        let radii = RadialGrid::for_ellipsoid(&geometry, count).unwrap();
        let mut data = MeanData::zeros(geometry, dirs, radii);
        let k = radii.len();
        for (idx, v) in data.values.iter_mut().enumerate() {
            *v = g(radii.r(idx % k));
        }
        data
    }

    #[test]
    fn order_zero_is_multiplication() {
        let data = synthetic(3, 64, |_| 2.5);
        let q = radial_filter(&data, 0).unwrap();
        for (k, v) in q.row(1).iter().enumerate() {
            assert_eq!(*v, data.radii.r(k) * 2.5);
        }
        assert_eq!(q.margin, (0, 0));
    }

    #[test]
    fn second_derivative_of_rho_squared() {
        // n = 4, g = r^2: r^2 g = rho^2, D^2 rho^2 = 2
        let data = synthetic(4, 128, |r| r * r);
        let q = radial_filter(&data, 2).unwrap();
        for v in &q.values {
            assert!((v - 2.0).abs() < 1e-8, "{v}");
        }
    }

    #[test]
    fn exact_on_cubics_in_rho() {
        // n = 2 so r^{n-2} g = g = 1 + rho - 0.5 rho^2 + 0.25 rho^3
        let p = |rho: f64| 1.0 + rho - 0.5 * rho * rho + 0.25 * rho.powi(3);
        let dp = |rho: f64| 1.0 - rho + 0.75 * rho * rho;
        let data = synthetic(2, 100, |r| p(r * r));
        let q = radial_filter(&data, 1).unwrap();
        for (k, v) in q.row(0).iter().enumerate() {
            let rho = data.radii.r(k).powi(2);
            assert!((v - dp(rho)).abs() < 1e-8, "k={k}: {v} vs {}", dp(rho));
        }
    }

    #[test]
    fn too_coarse_grid_is_rejected() {
        let data = synthetic(4, 6, |r| r);
        assert!(matches!(radial_filter(&data, 4), Err(crate::Error::Grid(_))));
    }

    fn filter_error(count: usize) -> f64 {
        // r^{n-2} g = sin(3 rho) for n = 2; D g = 3 cos(3 rho)
        let data = synthetic(2, count, |r| (3.0 * r * r).sin());
        let q = radial_filter(&data, 1).unwrap();
        let (lo, hi) = q.margin;
        q.row(0)
            .iter()
            .enumerate()
            .skip(lo)
            .take(count - lo - hi)
            .map(|(k, v)| (v - 3.0 * (3.0 * data.radii.r(k).powi(2)).cos()).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn converges_at_least_second_order() {
        let ratio = filter_error(100) / filter_error(200);
        assert!(ratio > 3.5, "Richardson ratio {ratio}");
    }
}
