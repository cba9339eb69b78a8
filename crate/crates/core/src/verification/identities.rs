//! Oracles for the one-dimensional identities behind the back-projection kernels.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::CheckReport;
use crate::error::{ensure, Result};
use crate::geometry::{sphere_surface_area, FundamentalSolution, SphereQuadrature};
use crate::quadrature::{gauss_gegenbauer, gauss_legendre, tanh_sinh};

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

fn sign(even_exponent: bool) -> f64 {
    if even_exponent {
        1.0
    } else {
        -1.0
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `int_{S^{n-1}} h(<sigma, v>) dsigma` against
/// `omega_{n-2} int (1 - s^2)^{(n-3)/2} h(|v| s) ds`.
///
/// The left side uses `quad`, the right side a Gauss-Gegenbauer rule with
/// `line_nodes` nodes. The error is relative to `max(|rhs|, 1)`.
pub fn check_funk_hecke<H: Fn(f64) -> f64>(
    profile: &str,
    h: H,
    v: &[f64],
    quad: &SphereQuadrature,
    line_nodes: usize,
    tolerance: f64,
) -> Result<CheckReport> {
    let n = quad.dim();
    ensure!(v.len() == n, Domain, "vector has dimension {}, quadrature {n}", v.len());
    let lhs = quad.integrate(|sigma| h(sigma.iter().zip(v).map(|(a, b)| a * b).sum()));
    let rule = gauss_gegenbauer(line_nodes, (n as f64 - 3.0) / 2.0)?;
    let len = norm(v);
    let rhs = sphere_surface_area(n - 1)? * rule.integrate(|s| h(len * s));
    let error = (lhs - rhs).abs() / rhs.abs().max(1.0);
    Ok(CheckReport::new(
        "funk_hecke",
        vec![
            ("n", n.to_string()),
            ("h", profile.to_string()),
            ("|v|", format!("{len}")),
            ("sphere_nodes", quad.len().to_string()),
        ],
        error,
        tolerance,
    ))
}

/// `H[(1 - s^2)^{(n-3)/2}_+](s*)` with `H g(t) = (1/pi) PV int g(s)/(t - s) ds`.
///
/// Singularity subtraction: the smooth difference quotient is integrated
/// in `theta = acos s` with Gauss-Legendre on both sides of `acos s*`, the
/// subtracted pole contributes `g(s*) log((1 + s*)/(1 - s*))`.
pub fn hilbert_transform_power(n: usize, s_star: f64, nodes: usize) -> Result<f64> {
    ensure!(
        s_star.abs() < 1.0,
        Domain,
        "Hilbert evaluation needs |s*| < 1, got {s_star}"
    );
    let power = (n as f64 - 3.0) / 2.0;
    let g = |s: f64| (1.0 - s * s).max(0.0).powf(power);
    let g_star = g(s_star);
    let theta_star = s_star.acos();
    let rule = gauss_legendre(nodes)?;
    let quotient = |theta: f64| {
        let s = theta.cos();
        // s* - cos(theta) without cancellation
        let gap = 2.0 * (0.5 * (theta + theta_star)).sin() * (0.5 * (theta - theta_star)).sin();
        (g(s) - g_star) / gap * theta.sin()
    };
    let smooth = rule.integrate_on(0.0, theta_star, quotient) + rule.integrate_on(theta_star, PI, quotient);
    let pole = g_star * ((1.0 + s_star) / (1.0 - s_star)).ln();
    Ok((smooth + pole) / PI)
}

/// `d^k/dt^k p(at)` for `p` sampled through `f` at `samples` Chebyshev points
/// on `[c - half_width, c + half_width]`, by a least-squares fit of degree
/// `degree`.
fn fitted_derivative<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    at: f64,
    c: f64,
    half_width: f64,
    samples: usize,
    degree: usize,
    k: usize,
) -> Result<f64> {
    let ts: Vec<f64> = (0..samples)
        .map(|i| ((2 * i + 1) as f64 * PI / (2 * samples) as f64).cos())
        .collect();
    let mut rhs = DVector::zeros(samples);
    for (i, &t) in ts.iter().enumerate() {
        rhs[i] = f(c + half_width * t)?;
    }
    let vander = DMatrix::from_fn(samples, degree + 1, |i, j| ts[i].powi(j as i32));
    let coef = vander
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| crate::Error::Singular(format!("polynomial fit: {e}")))?;
    let t0 = (at - c) / half_width;
    let mut poly: Vec<f64> = coef.iter().copied().collect();
    for _ in 0..k {
        poly = derivative(&poly);
    }
    Ok(horner(&poly, t0) / half_width.powi(k as i32))
}

/// Half width of the fitting window; the window is shifted to stay inside
/// `[-FIT_LIMIT, FIT_LIMIT]`, where the transform is still the same polynomial.
const FIT_HALF_WIDTH: f64 = 0.2;
const FIT_LIMIT: f64 = 0.98;

/// `d^{n-3}/ds*^{n-3} H[(1 - s^2)^{(n-3)/2}_+](s*)` by a polynomial fit of
/// degree `n + 1` over `2n + 3` Chebyshev-spaced samples near `s*`.
pub fn hilbert_derivative(n: usize, s_star: f64, nodes: usize) -> Result<f64> {
    ensure!(
        s_star.abs() <= 0.9,
        Domain,
        "Hilbert derivative needs |s*| <= 0.9, got {s_star}"
    );
    let reach = FIT_LIMIT - FIT_HALF_WIDTH;
    fitted_derivative(
        |s| hilbert_transform_power(n, s, nodes),
        s_star,
        s_star.clamp(-reach, reach),
        FIT_HALF_WIDTH,
        2 * n + 3,
        n + 1,
        n - 3,
    )
}

/// Constancy of `d^{n-3} H[(1 - s^2)^{(n-3)/2}_+]` at `(-1)^{n/2} (n-3)!`.
pub fn check_hilbert_identity(n: usize, s_stars: &[f64], nodes: usize, tolerance: f64) -> Result<CheckReport> {
    ensure!(
        n >= 4 && n % 2 == 0,
        Domain,
        "Hilbert identity needs even n >= 4, got {n}"
    );
    ensure!(!s_stars.is_empty(), Domain, "no sample points");
    let target = sign((n / 2) % 2 == 0) * factorial(n - 3);
    let mut error = 0.0f64;
    for &s in s_stars {
        error = error.max((hilbert_derivative(n, s, nodes)? - target).abs());
    }
    Ok(CheckReport::new(
        "hilbert_identity",
        vec![
            ("n", n.to_string()),
            ("s*", format!("{s_stars:?}")),
            ("target", format!("{target}")),
        ],
        error,
        tolerance,
    ))
}

/// `s* = (|x|^2 - |y|^2) / (2 |A(x - y)|)` and `|A(x - y)|`.
pub fn kernel_argument(axes: &[f64], x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    ensure!(
        x.len() == axes.len() && y.len() == axes.len(),
        Domain,
        "point dimension mismatch"
    );
    let dist = x
        .iter()
        .zip(y)
        .zip(axes)
        .map(|((a, b), s)| (s * (a - b)).powi(2))
        .sum::<f64>()
        .sqrt();
    if dist == 0.0 {
        return Err(crate::Error::Singular("kernel with x = y".into()));
    }
    let s_star = (x.iter().map(|v| v * v).sum::<f64>() - y.iter().map(|v| v * v).sum::<f64>()) / (2.0 * dist);
    ensure!(s_star.abs() < 1.0, Domain, "kernel needs |s*| < 1, got {s_star}");
    Ok((s_star, dist))
}

fn stretched(axes: &[f64], x: &[f64]) -> Vec<f64> {
    x.iter().zip(axes).map(|(v, a)| v * a).collect()
}

/// `(1/pi) int_0^pi log|s* - cos(alpha)| d alpha` by tanh-sinh on both sides
/// of `acos s*`.
pub fn log_cosine_mean(s_star: f64, level: u32) -> f64 {
    let a_star = s_star.acos();
    // s* - cos(alpha) = 2 sin((alpha + a*)/2) sin((alpha - a*)/2)
    let log_gap =
        |alpha: f64, offset: f64| ((2.0 * (0.5 * (alpha + a_star)).sin()).abs() * (0.5 * offset).sin().abs()).ln();
    let lower = tanh_sinh(0.0, a_star, level, |alpha, _, to_star| log_gap(alpha, to_star));
    let upper = tanh_sinh(a_star, PI, level, |alpha, from_star, _| log_gap(alpha, from_star));
    (lower + upper) / PI
}

/// Sub-identity `(1/pi) int_0^pi log|s* - cos(alpha)| d alpha = -log 2`.
pub fn check_log_cosine_mean(s_stars: &[f64], level: u32, tolerance: f64) -> Result<CheckReport> {
    ensure!(s_stars.iter().all(|s| s.abs() < 1.0), Domain, "samples need |s*| < 1");
    let error = s_stars
        .iter()
        .map(|&s| (log_cosine_mean(s, level) + 2f64.ln()).abs())
        .fold(0.0, f64::max);
    Ok(CheckReport::new(
        "log_cosine_mean",
        vec![("s*", format!("{s_stars:?}")), ("level", level.to_string())],
        error,
        tolerance,
    ))
}

/// Even-dimensional kernel identity at the pair `(x, y)`.
///
/// `n = 2`: `(1/pi) int (1 - s^2)^{-1/2} log|2|Ax - Ay| (s* - s)| ds` in the
/// angle variable against `log|Ax - Ay|`. `n >= 4`: the Hilbert reduction
/// `omega_{n-2} pi / (omega_{n-1} (2|Ax - Ay|)^{n-2}) d^{n-3} H(s*)` against
/// `(-1)^{(n-2)/2} pi omega_{n-2} (n-2)! 2^{2-n} G_n(Ax, Ay)`. The error is
/// relative to `max(|rhs|, 1e-300)` for `n >= 4` and to `max(|rhs|, 1)` for
/// `n = 2`, where the right side crosses zero.
pub fn check_kernel_even(axes: &[f64], x: &[f64], y: &[f64], level: u32, tolerance: f64) -> Result<CheckReport> {
    let n = axes.len();
    ensure!(n % 2 == 0, Domain, "even kernel needs even n, got {n}");
    let (s_star, dist) = kernel_argument(axes, x, y)?;
    let g = FundamentalSolution::new(n)?.eval(&stretched(axes, x), &stretched(axes, y))?;
    let omega_lo = sphere_surface_area(n - 1)?;
    let constant = sign(((n - 2) / 2) % 2 == 0) * PI * omega_lo * factorial(n - 2) / 2f64.powi(n as i32 - 2);
    let rhs = constant * g;
    let (lhs, scale) = if n == 2 {
        ((2.0 * dist).ln() + log_cosine_mean(s_star, level), rhs.abs().max(1.0))
    } else {
        let nodes = 16 << level;
        let ratio = omega_lo / sphere_surface_area(n)?;
        let lhs = ratio * PI / (2.0 * dist).powi(n as i32 - 2) * hilbert_derivative(n, s_star, nodes)?;
        (lhs, rhs.abs().max(1e-300))
    };
    Ok(CheckReport::new(
        "kernel_even",
        vec![
            ("n", n.to_string()),
            ("s*", format!("{s_star}")),
            ("|Ax-Ay|", format!("{dist}")),
            ("level", level.to_string()),
        ],
        (lhs - rhs).abs() / scale,
        tolerance,
    ))
}

/// Coefficients of `(1 - s^2)^k`, lowest degree first.
fn one_minus_square_power(k: usize) -> Vec<f64> {
    let mut coef = vec![0.0; 2 * k + 1];
    let mut binom = 1.0;
    for i in 0..=k {
        coef[2 * i] = sign(i % 2 == 0) * binom;
        binom = binom * (k - i) as f64 / (i + 1) as f64;
    }
    coef
}

fn derivative(coef: &[f64]) -> Vec<f64> {
    coef.iter().enumerate().skip(1).map(|(i, c)| i as f64 * c).collect()
}

fn horner(coef: &[f64], t: f64) -> f64 {
    coef.iter().rev().fold(0.0, |acc, c| acc * t + c)
}

/// Odd-dimensional kernel identity at `(x, y)`: the delta-collapsed chain
/// `omega_{n-2} / (omega_{n-1} (2|Ax - Ay|)^{n-2}) d^{n-3}(1 - s*^2)^{(n-3)/2}`,
/// with the derivative taken exactly on the polynomial coefficients,
/// against `(-1)^{(n-1)/2} omega_{n-2} (n-2)! 2^{2-n} G_n(Ax, Ay)`.
pub fn check_kernel_odd(axes: &[f64], x: &[f64], y: &[f64], tolerance: f64) -> Result<CheckReport> {
    let n = axes.len();
    ensure!(n % 2 == 1 && n >= 3, Domain, "odd kernel needs odd n >= 3, got {n}");
    let (s_star, dist) = kernel_argument(axes, x, y)?;
    let mut poly = one_minus_square_power((n - 3) / 2);
    for _ in 0..n - 3 {
        poly = derivative(&poly);
    }
    let omega_lo = sphere_surface_area(n - 1)?;
    let lhs = omega_lo / sphere_surface_area(n)? / (2.0 * dist).powi(n as i32 - 2) * horner(&poly, s_star);
    let g = FundamentalSolution::new(n)?.eval(&stretched(axes, x), &stretched(axes, y))?;
    let rhs = sign(((n - 1) / 2) % 2 == 0) * omega_lo * factorial(n - 2) / 2f64.powi(n as i32 - 2) * g;
    Ok(CheckReport::new(
        "kernel_odd",
        vec![
            ("n", n.to_string()),
            ("s*", format!("{s_star}")),
            ("|Ax-Ay|", format!("{dist}")),
        ],
        (lhs - rhs).abs() / rhs.abs(),
        tolerance,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_sphere_quadrature;

    #[test]
    fn funk_hecke_examples() {
        for n in 2..=5 {
            let quad = build_sphere_quadrature(n, 16).unwrap();
            let v: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
            let one = check_funk_hecke("1", |_| 1.0, &v, &quad, 8, 1e-12).unwrap();
            assert!(one.passed, "{one:?}");
            let odd = check_funk_hecke("t", |t| t, &v, &quad, 8, 1e-12).unwrap();
            assert!(odd.passed, "{odd:?}");
        }
        let quad = build_sphere_quadrature(3, 16).unwrap();
        let sq = check_funk_hecke("t^2", |t| t * t, &[0.0, 0.6, 0.8], &quad, 8, 1e-10).unwrap();
        assert!(sq.passed);
        // int_{S^2} <sigma, v>^2 = 4 pi / 3 for |v| = 1
        let direct = quad.integrate(|s| (0.6 * s[1] + 0.8 * s[2]).powi(2));
        assert!((direct - 4.0 * PI / 3.0).abs() < 1e-12);
    }

    #[test]
    fn hilbert_transform_of_half_power_is_identity() {
        for s in [-0.7, -0.2, 0.0, 0.45, 0.9] {
            let h = hilbert_transform_power(4, s, 64).unwrap();
            assert!((h - s).abs() < 1e-13, "s={s} h={h}");
        }
        // (1 - s^2)^{3/2} -> 3s/2 - s^3
        for s in [-0.5, 0.3, 0.8] {
            let h = hilbert_transform_power(6, s, 64).unwrap();
            assert!((h - (1.5 * s - s * s * s)).abs() < 1e-13);
        }
    }

    #[test]
    fn hilbert_identity_constants() {
        let samples = [-0.9, -0.4, 0.0, 0.3, 0.9];
        for (n, want) in [(4, 1.0), (6, -6.0), (8, 120.0)] {
            let r = check_hilbert_identity(n, &samples, 64, 1e-6).unwrap();
            assert!(r.passed, "{r:?}");
            assert!((hilbert_derivative(n, 0.1, 64).unwrap() - want).abs() < 1e-6);
        }
        assert!(check_hilbert_identity(5, &samples, 64, 1e-6).is_err());
        assert!(hilbert_derivative(4, 0.95, 64).is_err());
    }

    #[test]
    fn log_cosine_mean_is_minus_log_two() {
        let r = check_log_cosine_mean(&[0.0, 0.5, -0.5], 7, 1e-8).unwrap();
        assert!(r.passed, "{r:?}");
    }

    #[test]
    fn even_kernel_pairs() {
        let axes = [1.0, 0.7];
        let r = check_kernel_even(&axes, &[0.3, -0.2], &[-0.5, 0.4], 7, 1e-6).unwrap();
        assert!(r.passed, "{r:?}");
        let axes4 = [1.0, 0.9, 0.8, 0.7];
        let r = check_kernel_even(&axes4, &[0.2, 0.1, -0.3, 0.1], &[-0.1, 0.3, 0.2, -0.2], 2, 1e-5).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(check_kernel_even(&axes, &[0.1, 0.1], &[0.1, 0.1], 7, 1e-6).is_err());
    }

    #[test]
    fn even_kernel_refines() {
        let axes = [1.0, 0.7];
        let (x, y) = ([0.3, -0.2], [-0.5, 0.4]);
        let coarse = check_kernel_even(&axes, &x, &y, 1, 1.0).unwrap().error;
        let fine = check_kernel_even(&axes, &x, &y, 3, 1.0).unwrap().error;
        assert!(fine < coarse, "{fine} !< {coarse}");
    }

    #[test]
    fn odd_kernel_pairs() {
        let r3 = check_kernel_odd(&[1.0, 0.8, 0.6], &[0.2, 0.1, -0.3], &[-0.4, 0.2, 0.1], 1e-12).unwrap();
        assert!(r3.passed, "{r3:?}");
        let axes5 = [1.0, 0.9, 0.8, 0.7, 0.6];
        let r5 = check_kernel_odd(&axes5, &[0.2, 0.1, -0.3, 0.1, 0.0], &[-0.1, 0.3, 0.2, -0.2, 0.1], 1e-10).unwrap();
        assert!(r5.passed, "{r5:?}");
        // x = (2, 0, 0) lies outside the unit ball and puts s* on the endpoint 1
        assert!(check_kernel_odd(&[1.0, 1.0, 1.0], &[2.0, 0.0, 0.0], &[0.0, 0.0, 0.0], 1e-12).is_err());
    }

    #[test]
    fn polynomial_power_coefficients() {
        assert_eq!(one_minus_square_power(2), vec![1.0, 0.0, -2.0, 0.0, 1.0]);
        let mut p = one_minus_square_power(2);
        for _ in 0..4 {
            p = derivative(&p);
        }
        assert_eq!(p, vec![24.0]);
    }
}
