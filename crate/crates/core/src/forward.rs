//! Sampled spherical mean transform with centers `A sigma_j` on the boundary
//! of the ellipsoid.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rayon::prelude::*;

use crate::error::{ensure, Result};
use crate::geometry::{build_sphere_quadrature, sphere_surface_area, Ellipsoid, SphereQuadrature};
use crate::phantom::{Phantom, DEFAULT_MEAN_ORDER};

/// Uniformly spaced radii, either staggered `(k + 1/2) dr` or `(k + 1) dr`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadialGrid {
    step: f64,
    count: usize,
    staggered: bool,
}

impl RadialGrid {
    /// `count` staggered radii covering `[0, r_max]`.
    pub fn staggered(count: usize, r_max: f64) -> Result<Self> {
        Self::new(count, r_max, true)
    }

    pub fn new(count: usize, r_max: f64, staggered: bool) -> Result<Self> {
        ensure!(count >= 4, Grid, "radial grid needs at least 4 samples, got {count}");
        ensure!(
            r_max > 0.0 && r_max.is_finite(),
            Domain,
            "r_max must be positive, got {r_max}"
        );
        Ok(Self {
            step: r_max / count as f64,
            count,
            staggered,
        })
    }

    /// Grid with an explicit spacing.
    pub fn from_step(count: usize, step: f64, staggered: bool) -> Result<Self> {
        ensure!(count >= 4, Grid, "radial grid needs at least 4 samples, got {count}");
        ensure!(
            step > 0.0 && step.is_finite(),
            Domain,
            "radial step must be positive, got {step}"
        );
        Ok(Self { step, count, staggered })
    }

    /// Staggered grid with `r_max = 2 max a_i + 2 dr`, beyond which no
    /// sphere centered on the boundary meets the ellipsoid.
    pub fn for_ellipsoid(geometry: &Ellipsoid, count: usize) -> Result<Self> {
        ensure!(count > 4, Grid, "radial grid needs more than 4 samples, got {count}");
        let r_max = geometry.diameter_bound() * count as f64 / (count - 2) as f64;
        Self::staggered(count, r_max)
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn is_staggered(&self) -> bool {
        self.staggered
    }

    pub fn first(&self) -> f64 {
        self.r(0)
    }

    pub fn r_max(&self) -> f64 {
        self.step * self.count as f64
    }

    #[inline]
    pub fn r(&self, k: usize) -> f64 {
        if self.staggered {
            (k as f64 + 0.5) * self.step
        } else {
            (k as f64 + 1.0) * self.step
        }
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.count).map(|k| self.r(k)).collect()
    }
}

/// Samples `g[j][k] = (Mf)(A sigma_j, r_k)`, stored row-major by direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanData {
    pub geometry: Ellipsoid,
    pub directions: Arc<SphereQuadrature>,
    pub radii: RadialGrid,
    pub values: Vec<f64>,
}

impl MeanData {
    pub fn zeros(geometry: Ellipsoid, directions: Arc<SphereQuadrature>, radii: RadialGrid) -> Self {
        let values = vec![0.0; directions.len() * radii.len()];
        Self {
            geometry,
            directions,
            radii,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.geometry.dim()
    }

    pub fn row(&self, j: usize) -> &[f64] {
        let k = self.radii.len();
        &self.values[j * k..(j + 1) * k]
    }

    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.values[j * self.radii.len() + k]
    }
}

/// How `(Mf)(z, r)` is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForwardPath {
    /// One-dimensional zonal reduction per bump.
    #[default]
    Analytic,
    /// Direct sphere quadrature of `f(z + r omega)`.
    Generic,
}

/// Nodes per bump radius resolved by the generic path.
const GENERIC_NODES_PER_FEATURE: f64 = 48.0;
const GENERIC_MIN_ORDER: usize = 32;

/// Sphere-quadrature order used by the generic path at radius `r` for a
/// phantom whose finest length scale is `feature`.
pub fn generic_order(r: f64, feature: f64) -> usize {
    let raw = (2.0 * std::f64::consts::PI * r * GENERIC_NODES_PER_FEATURE / feature).ceil() as usize;
    raw.max(GENERIC_MIN_ORDER).div_ceil(16) * 16
}

fn cached_sphere_quadrature(n: usize, order: usize) -> Result<Arc<SphereQuadrature>> {
    type Cache = Mutex<HashMap<(usize, usize), Arc<SphereQuadrature>>>;
    static CACHE: OnceLock<Cache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(q) = cache.lock().unwrap().get(&(n, order)) {
        return Ok(Arc::clone(q));
    }
    let q = Arc::new(build_sphere_quadrature(n, order)?);
    cache.lock().unwrap().insert((n, order), Arc::clone(&q));
    Ok(q)
}

/// `(1/omega_{n-1}) sum_i w_i f(z + r sigma_i)` on a sphere rule fine enough
/// to resolve the phantom at radius `r`.
pub fn generic_mean(phantom: &Phantom, z: &[f64], r: f64) -> Result<f64> {
    let Some(feature) = phantom.min_radius() else {
        return Ok(0.0);
    };
    let n = phantom.dim();
    let quad = cached_sphere_quadrature(n, generic_order(r, feature))?;
    let mut y = vec![0.0; n];
    let total = quad.integrate(|s| {
        for ((yi, zi), si) in y.iter_mut().zip(z).zip(s) {
            *yi = zi + r * si;
        }
        phantom.eval(&y)
    });
    Ok(total / sphere_surface_area(n)?)
}

/// Fills `(Mf)(A sigma_j, r_k)` for every direction and radius.
///
/// Rows are computed independently in parallel; the result does not depend
/// on the thread count. Radii beyond `2 max a_i` are left at zero.
pub fn forward_transform(
    phantom: &Phantom,
    geometry: &Ellipsoid,
    directions: &Arc<SphereQuadrature>,
    radii: &RadialGrid,
    path: ForwardPath,
) -> Result<MeanData> {
    let n = geometry.dim();
    ensure!(
        phantom.dim() == n,
        Domain,
        "phantom dimension {} != geometry dimension {n}",
        phantom.dim()
    );
    ensure!(
        directions.dim() == n,
        Domain,
        "direction set dimension {} != {n}",
        directions.dim()
    );

    let mut data = MeanData::zeros(geometry.clone(), Arc::clone(directions), *radii);
    let k_count = radii.len();
    let cutoff = geometry.diameter_bound();
    data.values
        .par_chunks_mut(k_count)
        .enumerate()
        .try_for_each(|(j, row)| -> Result<()> {
            let z = geometry.boundary_point(directions.node(j));
            for (k, cell) in row.iter_mut().enumerate() {
                let r = radii.r(k);
                if r > cutoff {
                    break;
                }
                *cell = match path {
                    ForwardPath::Analytic => phantom.analytic_mean(&z, r, DEFAULT_MEAN_ORDER)?,
                    ForwardPath::Generic => generic_mean(phantom, &z, r)?,
                };
            }
            Ok(())
        })?;
    Ok(data)
}

/// Mean order used for finite-difference checks, where quadrature noise is
/// amplified by `1/h^2`.
pub const DARBOUX_MEAN_ORDER: usize = 128;

/// `|Delta_x Mf - (d_rr + (n-1)/r d_r) Mf|` at `(z, r)` with both sides
/// taken by second-order central differences of step `h`.
pub fn darboux_residual(phantom: &Phantom, z: &[f64], r: f64, h: f64) -> Result<f64> {
    ensure!(h > 0.0, Domain, "step must be positive");
    ensure!(r > 2.0 * h, Domain, "Darboux residual needs r > 2h (r = {r}, h = {h})");
    let n = z.len();
    let mean = |x: &[f64], rad: f64| phantom.analytic_mean(x, rad, DARBOUX_MEAN_ORDER);

    let center = mean(z, r)?;
    let mut spatial = 0.0;
    let mut x = z.to_vec();
    for i in 0..n {
        x[i] = z[i] + h;
        let plus = mean(&x, r)?;
        x[i] = z[i] - h;
        let minus = mean(&x, r)?;
        x[i] = z[i];
        spatial += plus + minus - 2.0 * center;
    }
    spatial /= h * h;

    let up = mean(z, r + h)?;
    let down = mean(z, r - h)?;
    let radial = (up + down - 2.0 * center) / (h * h) + (n as f64 - 1.0) / r * (up - down) / (2.0 * h);
    Ok((spatial - radial).abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phantom::RadialBump;

    fn setup2() -> (Ellipsoid, Phantom) {
        let e = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        let p = Phantom::new(vec![RadialBump::new(vec![0.2, -0.1], 0.25, 1.0).unwrap()], &e).unwrap();
        (e, p)
    }

    #[test]
    fn radial_grid_layout() {
        let g = RadialGrid::staggered(8, 2.0).unwrap();
        assert_eq!(g.step(), 0.25);
        assert_eq!(g.r(0), 0.125);
        assert_eq!(g.r(7), 1.875);
        let e = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        let g = RadialGrid::for_ellipsoid(&e, 512).unwrap();
        assert!((g.r_max() - (2.0 + 2.0 * g.step())).abs() < 1e-12);
        assert!(RadialGrid::staggered(2, 1.0).is_err());
    }

    #[test]
    fn zero_phantom_gives_zero_data() {
        let (e, _) = setup2();
        let dirs = Arc::new(build_sphere_quadrature(2, 16).unwrap());
        let radii = RadialGrid::for_ellipsoid(&e, 32).unwrap();
        let data = forward_transform(&Phantom::zero(2), &e, &dirs, &radii, ForwardPath::Analytic).unwrap();
        assert!(data.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bump_centered_on_boundary_node() {
        // a bump centered exactly at A sigma_0 = (1, 0) is outside E, so build
        // the data directly from the bump to check the rho = 0 branch
        let b = RadialBump::new(vec![1.0, 0.0], 0.25, 1.0).unwrap();
        let got = b.mean(&[1.0, 0.0], 0.1, 64).unwrap();
        assert_eq!(got, b.profile(0.1));
    }

    #[test]
    fn generic_matches_analytic_in_2d() {
        let (e, p) = setup2();
        let z = e.boundary_point(&[0.6, -0.8]);
        for &r in &[0.5, 0.7, 0.9] {
            let a = p.analytic_mean(&z, r, DEFAULT_MEAN_ORDER).unwrap();
            let g = generic_mean(&p, &z, r).unwrap();
            assert!((a - g).abs() <= 1e-6 * a.abs().max(1e-3), "r={r}: {a} vs {g}");
        }
    }

    #[test]
    fn support_cutoff() {
        let (e, p) = setup2();
        let dirs = Arc::new(build_sphere_quadrature(2, 16).unwrap());
        let radii = RadialGrid::for_ellipsoid(&e, 64).unwrap();
        let data = forward_transform(&p, &e, &dirs, &radii, ForwardPath::Analytic).unwrap();
        for j in 0..dirs.len() {
            let z = e.boundary_point(dirs.node(j));
            let rho = ((z[0] - 0.2).powi(2) + (z[1] + 0.1).powi(2)).sqrt();
            for k in 0..radii.len() {
                let r = radii.r(k);
                if (r - rho).abs() >= 0.25 || r > 2.0 {
                    assert_eq!(data.get(j, k), 0.0);
                }
            }
        }
    }

    #[test]
    fn darboux_residual_of_zero_is_zero() {
        let r = darboux_residual(&Phantom::zero(3), &[0.0; 3], 0.5, 1e-2).unwrap();
        assert_eq!(r, 0.0);
        assert!(darboux_residual(&Phantom::zero(3), &[0.0; 3], 0.01, 1e-2).is_err());
    }
}
