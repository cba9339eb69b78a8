//! Ellipsoidal acquisition geometry, unit-sphere quadrature in any dimension,
//! and the dimension-dependent constants of the inversion formulas.

use std::f64::consts::PI;

use crate::error::{ensure, Error, Result};
use crate::quadrature::{cached_gauss_gegenbauer, gegenbauer_mass};

/// Total surface measure of the unit sphere `S^{n-1}` in `R^n`,
/// `2 pi^{n/2} / Gamma(n/2)`.
pub fn sphere_surface_area(n: usize) -> Result<f64> {
    ensure!(n >= 1, Domain, "sphere S^(n-1) needs n >= 1, got {n}");
    let half = n as f64 / 2.0;
    Ok(2.0 * PI.powf(half) / libm::tgamma(half))
}

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// Constant `c_n` of the inversion formula for dimension `n`.
///
/// Even `n`: `(-1)^{(n-2)/2} omega_{n-2} pi (n-2)! 2^{2-n}`.
/// Odd `n`: `(-1)^{(n-1)/2} omega_{n-2} (n-2)! 2^{3-n}`.
pub fn reconstruction_constant(n: usize) -> Result<f64> {
    ensure!(n >= 2, Domain, "reconstruction needs n >= 2, got {n}");
    let omega = sphere_surface_area(n - 1)?;
    let fact = factorial(n - 2);
    let c = if n % 2 == 0 {
        let sign = if ((n - 2) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sign * omega * PI * fact * 2f64.powi(2 - n as i32)
    } else {
        let sign = if ((n - 1) / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sign * omega * fact * 2f64.powi(3 - n as i32)
    };
    Ok(c)
}

/// Solid ellipsoid `E = { x : sum x_i^2 / a_i^2 < 1 }` with axis-aligned
/// semi-axes; `A = diag(a_1, .., a_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ellipsoid {
    semi_axes: Vec<f64>,
}

impl Ellipsoid {
    pub fn new(semi_axes: Vec<f64>) -> Result<Self> {
        ensure!(
            semi_axes.len() >= 2,
            Domain,
            "ellipsoid needs dimension >= 2, got {}",
            semi_axes.len()
        );
        ensure!(
            semi_axes.iter().all(|&a| a > 0.0 && a.is_finite()),
            Domain,
            "semi-axes must be positive and finite: {semi_axes:?}"
        );
        Ok(Self { semi_axes })
    }

    /// Ball of the given radius.
    pub fn ball(n: usize, radius: f64) -> Result<Self> {
        Self::new(vec![radius; n])
    }

    pub fn dim(&self) -> usize {
        self.semi_axes.len()
    }

    pub fn semi_axes(&self) -> &[f64] {
        &self.semi_axes
    }

    /// `det(A)`.
    pub fn det(&self) -> f64 {
        self.semi_axes.iter().product()
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.semi_axes.iter().copied().fold(0.0, f64::max)
    }

    pub fn min_semi_axis(&self) -> f64 {
        self.semi_axes.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Upper bound `2 max a_i` on the diameter of `E`.
    pub fn diameter_bound(&self) -> f64 {
        2.0 * self.max_semi_axis()
    }

    /// `A sigma`, a point of the boundary for unit `sigma`.
    pub fn boundary_point(&self, sigma: &[f64]) -> Vec<f64> {
        sigma.iter().zip(&self.semi_axes).map(|(s, a)| s * a).collect()
    }

    /// `|A^{-1} x|`.
    pub fn normalized_radius(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.semi_axes)
            .map(|(xi, a)| (xi / a).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        let s: f64 = x.iter().zip(&self.semi_axes).map(|(xi, a)| (xi / a).powi(2)).sum();
        s < 1.0
    }

    /// `A x`.
    pub fn stretch(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.semi_axes).map(|(xi, a)| xi * a).collect()
    }
}

/// Quadrature on `S^{n-1}`: unit nodes with positive weights summing to
/// `omega_{n-1}`.
///
/// Built as a recursive product: `S^1` uses `order` equispaced nodes; each
/// higher sphere splits off the last coordinate `t` and integrates it with
/// Gauss nodes for the weight `(1 - t^2)^{(n-3)/2}`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereQuadrature {
    n: usize,
    order: usize,
    exact_degree: usize,
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl SphereQuadrature {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        self.exact_degree
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn node(&self, j: usize) -> &[f64] {
        &self.nodes[j * self.n..(j + 1) * self.n]
    }

    pub fn nodes(&self) -> impl Iterator<Item = &[f64]> {
        self.nodes.chunks_exact(self.n)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn integrate<F: FnMut(&[f64]) -> f64>(&self, mut f: F) -> f64 {
        self.nodes().zip(&self.weights).map(|(s, &w)| w * f(s)).sum()
    }

    /// Fails when the rule cannot guarantee exactness for `degree`.
    pub fn ensure_exact(&self, degree: usize) -> Result<()> {
        if degree > self.exact_degree {
            return Err(Error::Grid(format!(
                "sphere quadrature of order {} is exact to degree {}, {} requested",
                self.order, self.exact_degree, degree
            )));
        }
        Ok(())
    }
}

/// Product rule on `S^{n-1}` exact for polynomials of degree `< order`.
pub fn build_sphere_quadrature(n: usize, order: usize) -> Result<SphereQuadrature> {
    ensure!(n >= 2, Domain, "sphere quadrature needs n >= 2, got {n}");
    ensure!(order >= 2, Domain, "sphere quadrature order must be >= 2, got {order}");

    let m = order;
    let mut nodes = Vec::with_capacity(2 * m);
    let mut weights = Vec::with_capacity(m);
    for i in 0..m {
        let phi = 2.0 * PI * i as f64 / m as f64;
        nodes.push(phi.cos());
        nodes.push(phi.sin());
        weights.push(2.0 * PI / m as f64);
    }
    // the circle rule is exact for trigonometric degree < m
    let mut exact_degree = m - 1;

    let polar_count = order.div_ceil(2);
    for dim in 3..=n {
        let alpha = (dim as f64 - 3.0) / 2.0;
        let rule = cached_gauss_gegenbauer(polar_count, alpha)?;
        exact_degree = exact_degree.min(rule.exact_degree());
        let prev = dim - 1;
        let count = weights.len();
        let mut next_nodes = Vec::with_capacity(count * rule.len() * dim);
        let mut next_weights = Vec::with_capacity(count * rule.len());
        for (&t, &wt) in rule.nodes().iter().zip(rule.weights()) {
            let s = (1.0 - t * t).sqrt();
            for (j, &w) in weights.iter().enumerate() {
                next_nodes.extend(nodes[j * prev..(j + 1) * prev].iter().map(|c| s * c));
                next_nodes.push(t);
                next_weights.push(wt * w);
            }
        }
        nodes = next_nodes;
        weights = next_weights;
    }

    Ok(SphereQuadrature {
        n,
        order,
        exact_degree,
        nodes,
        weights,
    })
}

/// Fundamental solution `G_n` of the `n`-dimensional Laplacian.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalSolution {
    n: usize,
    omega: f64,
}

impl FundamentalSolution {
    pub fn new(n: usize) -> Result<Self> {
        ensure!(n >= 2, Domain, "fundamental solution needs n >= 2, got {n}");
        Ok(Self {
            n,
            omega: sphere_surface_area(n)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// `G_n` as a function of the distance `|x - y| > 0`.
    pub fn radial(&self, dist: f64) -> f64 {
        if self.n == 2 {
            dist.ln() / (2.0 * PI)
        } else {
            let k = 2.0 - self.n as f64;
            dist.powf(k) / (self.omega * k)
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        ensure!(
            x.len() == self.n && y.len() == self.n,
            Domain,
            "points must have dimension {}",
            self.n
        );
        let dist = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            return Err(Error::Singular("G_n(x, y) with x = y".into()));
        }
        Ok(self.radial(dist))
    }
}

pub fn fundamental_solution_eval(n: usize, x: &[f64], y: &[f64]) -> Result<f64> {
    FundamentalSolution::new(n)?.eval(x, y)
}

/// Ratio `omega_{n-2} / omega_{n-1}` normalizing the reduced zonal integral.
pub fn zonal_normalization(n: usize) -> Result<f64> {
    ensure!(n >= 2, Domain, "zonal reduction needs n >= 2, got {n}");
    Ok(1.0 / gegenbauer_mass((n as f64 - 3.0) / 2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn surface_areas() {
        assert!((sphere_surface_area(1).unwrap() - 2.0).abs() < 1e-15);
        assert!((sphere_surface_area(2).unwrap() - 2.0 * PI).abs() < 1e-14);
        assert!((sphere_surface_area(3).unwrap() - 4.0 * PI).abs() < 1e-13);
        assert!((sphere_surface_area(4).unwrap() - 2.0 * PI * PI).abs() < 1e-13);
        assert!(sphere_surface_area(0).is_err());
    }

    #[test]
    fn reconstruction_constants() {
        let cases = [(2, 2.0 * PI), (3, -2.0 * PI), (4, -2.0 * PI * PI), (5, 3.0 * PI * PI)];
        for (n, want) in cases {
            let got = reconstruction_constant(n).unwrap();
            assert!((got - want).abs() < 1e-13 * want.abs(), "n={n}: {got} vs {want}");
        }
        assert!(reconstruction_constant(1).is_err());
    }

    #[test]
    fn circle_rule() {
        let q = build_sphere_quadrature(2, 8).unwrap();
        assert_eq!(q.len(), 8);
        for &w in q.weights() {
            assert!((w - PI / 4.0).abs() < 1e-15);
        }
        let sum: f64 = q.weights().iter().sum();
        assert!((sum - 2.0 * PI).abs() < 1e-14);
        assert_eq!(q.exact_degree(), 7);
    }

    #[test]
    fn constant_and_second_moment() {
        for n in 2..=6 {
            let q = build_sphere_quadrature(n, 10).unwrap();
            let sum: f64 = q.weights().iter().sum();
            let omega = sphere_surface_area(n).unwrap();
            assert!((sum / omega - 1.0).abs() < 1e-12, "n={n}");
            assert!(q.weights().iter().all(|&w| w > 0.0));
            for s in q.nodes() {
                let norm: f64 = s.iter().map(|c| c * c).sum::<f64>().sqrt();
                assert!((norm - 1.0).abs() < 1e-14);
            }
        }
        let q = build_sphere_quadrature(3, 6).unwrap();
        let m = q.integrate(|s| s[0] * s[0]);
        assert!((m - 4.0 * PI / 3.0).abs() < 1e-10);
    }

    #[test]
    fn insufficient_order_is_reported() {
        let q = build_sphere_quadrature(3, 4).unwrap();
        assert_eq!(q.exact_degree(), 3);
        assert!(q.ensure_exact(3).is_ok());
        assert!(matches!(q.ensure_exact(6), Err(Error::Grid(_))));
        assert!(build_sphere_quadrature(3, 1).is_err());
        assert!(build_sphere_quadrature(1, 4).is_err());
    }

    #[test]
    fn fundamental_solution_values() {
        let g2 = fundamental_solution_eval(2, &[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(g2, 0.0);
        let g3 = fundamental_solution_eval(3, &[0.0; 3], &[0.0, 0.0, 1.0]).unwrap();
        assert!((g3 + 1.0 / (4.0 * PI)).abs() < 1e-15);
        let g5 = fundamental_solution_eval(5, &[0.0; 5], &[2.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let want = -1.0 / (64.0 * PI * PI);
        assert!((g5 - want).abs() < 1e-15 * want.abs().max(1.0));
        assert!(matches!(
            fundamental_solution_eval(3, &[1.0; 3], &[1.0; 3]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn fundamental_solution_is_symmetric() {
        let g = FundamentalSolution::new(4).unwrap();
        let x = [0.1, -0.3, 0.2, 0.5];
        let y = [-0.4, 0.2, 0.0, 0.1];
        assert_eq!(g.eval(&x, &y).unwrap(), g.eval(&y, &x).unwrap());
    }

    #[test]
    fn ellipsoid_basics() {
        let e = Ellipsoid::new(vec![1.0, 0.7]).unwrap();
        assert!(e.contains(&[0.5, 0.5]));
        assert!(!e.contains(&[0.9, 0.5]));
        let p = e.boundary_point(&[0.6, 0.8]);
        assert!((e.normalized_radius(&p) - 1.0).abs() < 1e-15);
        assert!((e.det() - 0.7).abs() < 1e-15);
        assert!(Ellipsoid::new(vec![1.0]).is_err());
        assert!(Ellipsoid::new(vec![1.0, 0.0]).is_err());
    }
}
