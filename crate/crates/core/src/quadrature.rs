//! One-dimensional quadrature rules.
//!
//! Gauss rules for the symmetric Jacobi weight `(1 - t^2)^alpha` on `[-1, 1]`
//! (Gegenbauer weights, Legendre for `alpha = 0`, Chebyshev for
//! `alpha = -1/2`), and a double-exponential rule for integrands with
//! endpoint singularities.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{ensure, Result};

/// Nodes and weights of an interpolatory rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    alpha: f64,
}

impl GaussRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Exponent of the weight function this rule integrates against.
    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Highest polynomial degree integrated exactly.
    pub fn exact_degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    /// `sum_i w_i f(t_i)`, i.e. the weighted integral over `[-1, 1]`.
    pub fn integrate<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }

    /// Maps the rule affinely onto `[a, b]`. Only meaningful for `alpha = 0`.
    pub fn integrate_on<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self
            .nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * f(mid + half * t))
            .sum::<f64>()
    }
}

/// `int_{-1}^{1} (1 - t^2)^alpha dt = B(1/2, alpha + 1)`.
pub fn gegenbauer_mass(alpha: f64) -> f64 {
    PI.sqrt() * libm::tgamma(alpha + 1.0) / libm::tgamma(alpha + 1.5)
}

/// Monic recurrence coefficient `beta_k` for the weight `(1 - t^2)^alpha`.
fn recurrence_beta(k: usize, alpha: f64) -> f64 {
    let k = k as f64;
    let a2 = 2.0 * alpha;
    let den = (2.0 * k + a2 - 1.0) * (2.0 * k + a2 + 1.0);
    if den.abs() < 1e-14 {
        // alpha = -1/2, k = 1 (Chebyshev): the limit is 1/2
        return 0.5;
    }
    k * (k + a2) / den
}

/// Orthonormal polynomial value and derivative of degree `k` at `t`, plus the
/// Christoffel sum `sum_{j<k} p_j(t)^2`.
fn orthonormal_eval(k: usize, alpha: f64, mu0: f64, t: f64) -> (f64, f64, f64) {
    let mut p_prev = 0.0;
    let mut dp_prev = 0.0;
    let mut p = 1.0 / mu0.sqrt();
    let mut dp = 0.0;
    let mut christoffel = 0.0;
    let mut sqrt_beta_prev = 0.0;
    for j in 0..k {
        christoffel += p * p;
        let sqrt_beta = recurrence_beta(j + 1, alpha).sqrt();
        let p_next = (t * p - sqrt_beta_prev * p_prev) / sqrt_beta;
        let dp_next = (p + t * dp - sqrt_beta_prev * dp_prev) / sqrt_beta;
        p_prev = p;
        dp_prev = dp;
        p = p_next;
        dp = dp_next;
        sqrt_beta_prev = sqrt_beta;
    }
    (p, dp, christoffel)
}

/// Gauss rule with `k` nodes for the weight `(1 - t^2)^alpha`, `alpha > -1`.
///
/// Nodes start from the Golub-Welsch eigenvalues and are polished by Newton
/// steps on the orthonormal recurrence; weights are the reciprocal
/// Christoffel sums, which keeps them accurate to a few ulps.
pub fn gauss_gegenbauer(k: usize, alpha: f64) -> Result<GaussRule> {
    ensure!(k >= 1, Domain, "Gauss rule needs at least one node");
    ensure!(alpha > -1.0, Domain, "weight exponent {alpha} must exceed -1");

    if (alpha + 0.5).abs() < 1e-15 {
        return Ok(gauss_chebyshev(k));
    }

    let mu0 = gegenbauer_mass(alpha);
    let mut jacobi = DMatrix::<f64>::zeros(k, k);
    for i in 1..k {
        let b = recurrence_beta(i, alpha).sqrt();
        jacobi[(i, i - 1)] = b;
        jacobi[(i - 1, i)] = b;
    }
    let mut guesses: Vec<f64> = SymmetricEigen::new(jacobi).eigenvalues.iter().copied().collect();
    guesses.sort_by(|a, b| a.total_cmp(b));

    let mut nodes = Vec::with_capacity(k);
    let mut weights = Vec::with_capacity(k);
    for guess in guesses {
        let mut t = guess;
        for _ in 0..8 {
            let (p, dp, _) = orthonormal_eval(k, alpha, mu0, t);
            let step = p / dp;
            t -= step;
            if step.abs() < 1e-16 {
                break;
            }
        }
        let (_, _, christoffel) = orthonormal_eval(k, alpha, mu0, t);
        nodes.push(t);
        weights.push(1.0 / christoffel);
    }
    symmetrize(&mut nodes, &mut weights);
    Ok(GaussRule { nodes, weights, alpha })
}

/// Enforces exact mirror symmetry of a symmetric rule.
fn symmetrize(nodes: &mut [f64], weights: &mut [f64]) {
    let k = nodes.len();
    for i in 0..k / 2 {
        let j = k - 1 - i;
        let t = 0.5 * (nodes[j] - nodes[i]);
        let w = 0.5 * (weights[i] + weights[j]);
        nodes[i] = -t;
        nodes[j] = t;
        weights[i] = w;
        weights[j] = w;
    }
    if k % 2 == 1 {
        nodes[k / 2] = 0.0;
    }
}

/// Gauss-Legendre rule with `k` nodes.
pub fn gauss_legendre(k: usize) -> Result<GaussRule> {
    gauss_gegenbauer(k, 0.0)
}

/// Gauss-Chebyshev (first kind) rule: nodes `cos((2i - 1) pi / 2k)`, weights `pi / k`.
pub fn gauss_chebyshev(k: usize) -> GaussRule {
    let mut nodes: Vec<f64> = (1..=k)
        .map(|i| ((2 * i - 1) as f64 * PI / (2 * k) as f64).cos())
        .collect();
    nodes.reverse();
    let mut weights = vec![PI / k as f64; k];
    symmetrize(&mut nodes, &mut weights);
    GaussRule {
        nodes,
        weights,
        alpha: -0.5,
    }
}

type RuleCache = Mutex<HashMap<(usize, u64), Arc<GaussRule>>>;

/// Process-wide cache around [`gauss_gegenbauer`].
pub fn cached_gauss_gegenbauer(k: usize, alpha: f64) -> Result<Arc<GaussRule>> {
    static CACHE: OnceLock<RuleCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (k, alpha.to_bits());
    if let Some(rule) = cache.lock().unwrap().get(&key) {
        return Ok(Arc::clone(rule));
    }
    let rule = Arc::new(gauss_gegenbauer(k, alpha)?);
    cache.lock().unwrap().insert(key, Arc::clone(&rule));
    Ok(rule)
}

/// Double-exponential (tanh-sinh) quadrature of `f` over `[a, b]`.
///
/// The integrand receives `(x, x - a, b - x)` so that singular factors at the
/// endpoints can be evaluated from the exact endpoint distances instead of a
/// cancelled difference. `level` halves the step `level` times from 1/2.
pub fn tanh_sinh<F>(a: f64, b: f64, level: u32, mut f: F) -> f64
where
    F: FnMut(f64, f64, f64) -> f64,
{
    let half = 0.5 * (b - a);
    let h = 0.5_f64.powi(level as i32 + 1);
    let t_max = 4.0;
    let n = (t_max / h).ceil() as i64;
    let mut sum = 0.0;
    for i in -n..=n {
        let t = i as f64 * h;
        let u = 0.5 * PI * t.sinh();
        let cosh_u = u.cosh();
        // 1 - tanh(u) and 1 + tanh(u) without cancellation
        let e = (-2.0 * u.abs()).exp();
        let small = 2.0 * e / (1.0 + e);
        let (from_a, from_b) = if u >= 0.0 {
            (half * (2.0 - small), half * small)
        } else {
            (half * small, half * (2.0 - small))
        };
        if from_a <= 0.0 || from_b <= 0.0 {
            continue;
        }
        let w = 0.5 * PI * t.cosh() / (cosh_u * cosh_u);
        if w < 1e-300 {
            continue;
        }
        let x = if u >= 0.0 { b - from_b } else { a + from_a };
        sum += w * f(x, from_a, from_b);
    }
    sum * h * half
}
