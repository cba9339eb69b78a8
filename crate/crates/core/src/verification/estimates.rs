//! Sampling and volume-quadrature oracles: the norm estimate, the
//! fundamental solution of `Delta_{Ax}`, and the Darboux equation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::CheckReport;
use crate::error::{ensure, Result};
use crate::forward::darboux_residual;
use crate::geometry::{Ellipsoid, FundamentalSolution};
use crate::phantom::Phantom;

/// `|(|x|^2 - |y|^2)| / (2 |A(x - y)|)`.
pub fn norm_ratio(geometry: &Ellipsoid, x: &[f64], y: &[f64]) -> f64 {
    let num: f64 = x.iter().zip(y).map(|(a, b)| a * a - b * b).sum();
    let den = x
        .iter()
        .zip(y)
        .zip(geometry.semi_axes())
        .map(|((a, b), s)| (s * (a - b)).powi(2))
        .sum::<f64>()
        .sqrt();
    num.abs() / (2.0 * den)
}

/// Largest double below 1: `error <= STRICTLY_BELOW_ONE` iff `error < 1`.
const STRICTLY_BELOW_ONE: f64 = 1.0 - f64::EPSILON / 2.0;

fn uniform_in(geometry: &Ellipsoid, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let x: Vec<f64> = geometry.semi_axes().iter().map(|&a| rng.random_range(-a..a)).collect();
        if geometry.contains(&x) {
            return x;
        }
    }
}

fn unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let len = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if len > 1e-3 && len <= 1.0 {
            return v.into_iter().map(|t| t / len).collect();
        }
    }
}

fn norm_report(name: &str, geometry: &Ellipsoid, trials: usize, seed: u64, max_ratio: f64) -> CheckReport {
    CheckReport::new(
        name,
        vec![
            ("semi_axes", format!("{:?}", geometry.semi_axes())),
            ("trials", trials.to_string()),
            ("seed", seed.to_string()),
        ],
        max_ratio,
        STRICTLY_BELOW_ONE,
    )
}

/// Largest norm ratio over `trials` pairs drawn uniformly from `E`; passes
/// iff every ratio is strictly below one.
pub fn check_norm_estimate(geometry: &Ellipsoid, trials: usize, seed: u64) -> Result<CheckReport> {
    ensure!(trials >= 1, Domain, "need at least one trial");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    for _ in 0..trials {
        let x = uniform_in(geometry, &mut rng);
        let y = uniform_in(geometry, &mut rng);
        if x != y {
            max_ratio = max_ratio.max(norm_ratio(geometry, &x, &y));
        }
    }
    Ok(norm_report("norm_estimate", geometry, trials, seed, max_ratio))
}

/// Pairs with `|A^{-1} x| = |A^{-1} y| = shell`, `y` a perturbation of `x`
/// along the shell where the ratio comes closest to one.
pub fn check_norm_estimate_shell(geometry: &Ellipsoid, shell: f64, trials: usize, seed: u64) -> Result<CheckReport> {
    ensure!(trials >= 1, Domain, "need at least one trial");
    ensure!(
        shell > 0.0 && shell < 1.0,
        Domain,
        "shell radius must lie in (0, 1), got {shell}"
    );
    let n = geometry.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_ratio = 0.0f64;
    for _ in 0..trials {
        let u = unit_vector(n, &mut rng);
        let w = unit_vector(n, &mut rng);
        let eps = 10f64.powf(rng.random_range(-4.0..0.0));
        let v: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a + eps * b).collect();
        let len = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        let x: Vec<f64> = u.iter().zip(geometry.semi_axes()).map(|(t, a)| shell * a * t).collect();
        let y: Vec<f64> = v
            .iter()
            .zip(geometry.semi_axes())
            .map(|(t, a)| shell * a * t / len)
            .collect();
        if x != y {
            max_ratio = max_ratio.max(norm_ratio(geometry, &x, &y));
        }
    }
    Ok(norm_report("norm_estimate_shell", geometry, trials, seed, max_ratio))
}

const CHUNK: usize = 4096;

/// `det(A) Delta_{Ax} int f(y) G_n(Ax, Ay) dy` at `x`.
///
/// The volume integral is a midpoint sum on a lattice anchored at `x` with
/// nodes at `x + (k + 1/2) h`, covering the phantom support with about
/// `cells` nodes per axis; the Laplacian stencil uses the same `h`, so no
/// stencil point meets a lattice node.
pub fn fundamental_identity_at(phantom: &Phantom, geometry: &Ellipsoid, x: &[f64], cells: usize) -> Result<f64> {
    let n = geometry.dim();
    ensure!(phantom.dim() == n && x.len() == n, Domain, "dimension mismatch");
    ensure!(cells >= 2, Grid, "need at least 2 cells per axis");
    if phantom.bumps().is_empty() {
        return Ok(0.0);
    }
    let g = FundamentalSolution::new(n)?;
    let axes = geometry.semi_axes();
    let (mut lo, mut hi) = (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]);
    for b in phantom.bumps() {
        for i in 0..n {
            lo[i] = lo[i].min(b.center()[i] - b.radius());
            hi[i] = hi[i].max(b.center()[i] + b.radius());
        }
    }
    let h: Vec<f64> = lo.iter().zip(&hi).map(|(l, u)| (u - l) / cells as f64).collect();
    let first: Vec<i64> = (0..n).map(|i| ((lo[i] - x[i]) / h[i] - 0.5).floor() as i64).collect();
    let span: Vec<usize> = (0..n)
        .map(|i| (((hi[i] - x[i]) / h[i] - 0.5).ceil() as i64 - first[i] + 1) as usize)
        .collect();
    let total: usize = span.iter().product();
    let cell_volume: f64 = h.iter().product();

    // stencil points in stretched coordinates
    let ax: Vec<f64> = x.iter().zip(axes).map(|(v, a)| v * a).collect();
    let mut stencil = vec![(
        ax.clone(),
        -2.0 * (0..n).map(|i| 1.0 / (axes[i] * h[i]).powi(2)).sum::<f64>(),
    )];
    for i in 0..n {
        for s in [-1.0, 1.0] {
            let mut p = ax.clone();
            p[i] += s * axes[i] * h[i];
            stencil.push((p, 1.0 / (axes[i] * h[i]).powi(2)));
        }
    }

    // fixed chunks summed in order keep the result independent of scheduling
    let chunks = total.div_ceil(CHUNK);
    let partial: Vec<f64> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let (mut y, mut ay) = (vec![0.0; n], vec![0.0; n]);
            let mut acc = 0.0;
            for flat in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let mut rest = flat;
                for i in (0..n).rev() {
                    let k = (rest % span[i]) as i64 + first[i];
                    rest /= span[i];
                    y[i] = x[i] + (k as f64 + 0.5) * h[i];
                    ay[i] = y[i] * axes[i];
                }
                let f = phantom.eval(&y);
                if f == 0.0 {
                    continue;
                }
                let lap: f64 = stencil
                    .iter()
                    .map(|(p, c)| {
                        let d = p.iter().zip(&ay).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                        c * g.radial(d)
                    })
                    .sum();
                acc += f * lap;
            }
            acc
        })
        .collect();
    let sum: f64 = partial.iter().sum();
    Ok(geometry.det() * sum * cell_volume)
}

/// Largest `|det(A) Delta_{Ax} int f G_n - f(x)|` over `samples`, relative
/// to `sup f`.
pub fn check_fundamental_identity(
    phantom: &Phantom,
    geometry: &Ellipsoid,
    samples: &[Vec<f64>],
    cells: usize,
    tolerance: f64,
) -> Result<CheckReport> {
    let n = geometry.dim();
    ensure!(
        n == 2 || n == 3,
        Domain,
        "fundamental identity check supports n = 2, 3, got {n}"
    );
    let scale = if phantom.sup_bound() > 0.0 {
        phantom.sup_bound()
    } else {
        1.0
    };
    let mut error = 0.0f64;
    for x in samples {
        let got = fundamental_identity_at(phantom, geometry, x, cells)?;
        error = error.max((got - phantom.eval(x)).abs() / scale);
    }
    Ok(CheckReport::new(
        "fundamental_identity",
        vec![
            ("n", n.to_string()),
            ("samples", format!("{samples:?}")),
            ("cells", cells.to_string()),
        ],
        error,
        tolerance,
    ))
}

/// Richardson ratio `residual(h) / residual(h/2)` of the Darboux equation,
/// reported as `|ratio - 4|`.
pub fn check_darboux(phantom: &Phantom, z: &[f64], r: f64, h: f64, tolerance: f64) -> Result<CheckReport> {
    let coarse = darboux_residual(phantom, z, r, h)?;
    let fine = darboux_residual(phantom, z, r, h / 2.0)?;
    let ratio = coarse / fine;
    Ok(CheckReport::new(
        "darboux_richardson",
        vec![
            ("z", format!("{z:?}")),
            ("r", format!("{r}")),
            ("h", format!("{h}")),
            ("ratio", format!("{ratio}")),
        ],
        (ratio - 4.0).abs(),
        tolerance,
    ))
}
