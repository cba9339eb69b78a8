//! Ground-truth test functions: sums of smooth radial bumps inside the
//! ellipsoid, with spherical means reduced to a one-dimensional integral.

use crate::error::{ensure, Result};
use crate::geometry::{zonal_normalization, Ellipsoid};
use crate::quadrature::cached_gauss_gegenbauer;

/// Default node count for the reduced mean integral.
pub const DEFAULT_MEAN_ORDER: usize = 64;

/// `amplitude * exp(-1 / (1 - (t / radius)^2))` for `t < radius`, else 0,
/// with `t = |x - center|`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialBump {
    center: Vec<f64>,
    radius: f64,
    amplitude: f64,
}

impl RadialBump {
    pub fn new(center: Vec<f64>, radius: f64, amplitude: f64) -> Result<Self> {
        ensure!(
            radius > 0.0 && radius.is_finite(),
            Domain,
            "bump radius must be positive, got {radius}"
        );
        ensure!(amplitude.is_finite(), Domain, "bump amplitude must be finite");
        ensure!(
            center.iter().all(|c| c.is_finite()),
            Domain,
            "bump center must be finite"
        );
        Ok(Self {
            center,
            radius,
            amplitude,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// Profile as a function of the squared distance to the center.
    #[inline]
    pub fn profile_sq(&self, dist_sq: f64) -> f64 {
        let gap = 1.0 - dist_sq / (self.radius * self.radius);
        if gap <= 0.0 {
            0.0
        } else {
            self.amplitude * (-1.0 / gap).exp()
        }
    }

    pub fn profile(&self, dist: f64) -> f64 {
        self.profile_sq(dist * dist)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.profile_sq(dist_sq(x, &self.center))
    }

    /// Spherical mean over the sphere of radius `r` about `z`.
    ///
    /// With `rho = |z - c|` and polar angle `theta` measured from the
    /// direction towards the center, the mean is
    /// `(omega_{n-2}/omega_{n-1}) int_0^pi sin^{n-2}(theta) phi(d(theta)) dtheta`
    /// where `d^2 = (rho - r)^2 + 4 rho r sin^2(theta/2)`. Only the angular
    /// window where the sphere meets the support contributes; it is
    /// integrated with an `order`-point Gauss-Legendre rule.
    pub fn mean(&self, z: &[f64], r: f64, order: usize) -> Result<f64> {
        let n = z.len();
        let rho = dist_sq(z, &self.center).sqrt();
        if rho == 0.0 {
            return Ok(self.profile(r));
        }
        let r0 = self.radius;
        if (rho - r).abs() >= r0 {
            return Ok(0.0);
        }
        // cos(theta_max) = (rho^2 + r^2 - r0^2) / (2 rho r); sin^2(theta_max/2) = (r0^2 - (rho-r)^2) / (4 rho r)
        let half_sin_sq = (r0 * r0 - (rho - r).powi(2)) / (4.0 * rho * r);
        let theta_max = if half_sin_sq >= 1.0 {
            std::f64::consts::PI
        } else {
            2.0 * half_sin_sq.sqrt().asin()
        };
        let rule = cached_gauss_gegenbauer(order, 0.0)?;
        let lift = n as i32 - 2;
        let base = (rho - r).powi(2);
        let integral = rule.integrate_on(0.0, theta_max, |theta| {
            let h = (0.5 * theta).sin();
            self.profile_sq(base + 4.0 * rho * r * h * h) * theta.sin().powi(lift)
        });
        Ok(zonal_normalization(n)? * integral)
    }
}

fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

/// Linear combination of radial bumps supported strictly inside an ellipsoid.
#[derive(Debug, Clone, PartialEq)]
pub struct Phantom {
    dim: usize,
    bumps: Vec<RadialBump>,
}

impl Phantom {
    /// Validates dimensions and the support margin
    /// `|A^{-1} c| + rho_0 / min a_i < 1` for every bump.
    pub fn new(bumps: Vec<RadialBump>, geometry: &Ellipsoid) -> Result<Self> {
        let dim = geometry.dim();
        ensure!(!bumps.is_empty(), Domain, "phantom needs at least one bump");
        for (i, b) in bumps.iter().enumerate() {
            ensure!(
                b.center.len() == dim,
                Domain,
                "bump {i} has dimension {} but the ellipsoid has {dim}",
                b.center.len()
            );
            let reach = geometry.normalized_radius(&b.center) + b.radius / geometry.min_semi_axis();
            ensure!(
                reach < 1.0,
                Domain,
                "bump {i} violates the support margin rule |A^-1 c| + r0/min(a) < 1 (got {reach:.6})"
            );
        }
        Ok(Self { dim, bumps })
    }

    /// The zero function, represented by an empty bump list.
    pub fn zero(dim: usize) -> Self {
        Self { dim, bumps: Vec::new() }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bumps(&self) -> &[RadialBump] {
        &self.bumps
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.bumps.iter().map(|b| b.eval(x)).sum()
    }

    /// Upper bound on `|f|` (each profile peaks at `exp(-1)`).
    pub fn sup_bound(&self) -> f64 {
        self.bumps.iter().map(|b| b.amplitude.abs()).sum::<f64>() * (-1.0f64).exp()
    }

    /// Smallest bump radius; the finest length scale of the phantom.
    pub fn min_radius(&self) -> Option<f64> {
        self.bumps.iter().map(|b| b.radius).reduce(f64::min)
    }

    /// Exact-up-to-quadrature spherical mean `(Mf)(z, r)`.
    pub fn analytic_mean(&self, z: &[f64], r: f64, quad_order: usize) -> Result<f64> {
        ensure!(r > 0.0, Domain, "spherical mean radius must be positive, got {r}");
        ensure!(z.len() == self.dim, Domain, "center has wrong dimension");
        self.bumps.iter().map(|b| b.mean(z, r, quad_order)).sum()
    }

    /// Scales every amplitude by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let bumps = self
            .bumps
            .iter()
            .map(|b| RadialBump {
                amplitude: b.amplitude * factor,
                ..b.clone()
            })
            .collect();
        Self { dim: self.dim, bumps }
    }

    /// Sum of two phantoms (concatenated bump lists).
    pub fn sum(&self, other: &Phantom) -> Self {
        let mut bumps = self.bumps.clone();
        bumps.extend(other.bumps.iter().cloned());
        Self { dim: self.dim, bumps }
    }
}
