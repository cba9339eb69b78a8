//! Four-point (cubic Lagrange) interpolation on uniform and nonuniform nodes.

/// Cubic Lagrange interpolation through `(xs[i], ys[i])`, `i = 0..4`.
#[inline]
pub fn lagrange4(xs: [f64; 4], ys: [f64; 4], x: f64) -> f64 {
    let mut acc = 0.0;
    for i in 0..4 {
        let mut basis = 1.0;
        for j in 0..4 {
            if i != j {
                basis *= (x - xs[j]) / (xs[i] - xs[j]);
            }
        }
        acc += basis * ys[i];
    }
    acc
}

/// Lagrange weights for the uniform stencil `-1, 0, 1, 2` at offset `t` in `[0, 1]`.
#[inline]
pub fn uniform_weights(t: f64) -> [f64; 4] {
    let tm1 = t - 1.0;
    let tm2 = t - 2.0;
    let tp1 = t + 1.0;
    [
        -t * tm1 * tm2 / 6.0,
        tp1 * tm1 * tm2 / 2.0,
        -tp1 * t * tm2 / 2.0,
        tp1 * t * tm1 / 6.0,
    ]
}

/// Samples `values[i]` at `start + i * step`.
#[derive(Debug, Clone, Copy)]
pub struct UniformSamples<'a> {
    pub start: f64,
    pub step: f64,
    pub values: &'a [f64],
}

impl UniformSamples<'_> {
    pub fn end(&self) -> f64 {
        self.start + (self.values.len() - 1) as f64 * self.step
    }

    /// Cubic interpolant at `x`; `None` outside `[start, end]`. The stencil
    /// is shifted inwards at both ends. Needs at least four samples.
    #[inline]
    pub fn cubic(&self, x: f64) -> Option<f64> {
        let len = self.values.len();
        debug_assert!(len >= 4);
        let u = (x - self.start) / self.step;
        if !(0.0..=(len - 1) as f64).contains(&u) {
            return None;
        }
        let cell = (u.floor() as usize).min(len - 2);
        let base = cell.clamp(1, len - 3) - 1;
        let t = u - (base + 1) as f64;
        let w = uniform_weights(t);
        let v = &self.values[base..base + 4];
        Some(w[0] * v[0] + w[1] * v[1] + w[2] * v[2] + w[3] * v[3])
    }
}

/// Cubic interpolation on increasing nodes `xs` (at least four), with the
/// stencil shifted inwards at the ends. `x` must lie in `[xs[0], xs[last]]`.
pub fn cubic_nonuniform(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    let len = xs.len();
    debug_assert!(len >= 4 && ys.len() == len);
    let cell = xs.partition_point(|&v| v <= x).saturating_sub(1).min(len - 2);
    let base = cell.clamp(1, len - 3) - 1;
    lagrange4(
        [xs[base], xs[base + 1], xs[base + 2], xs[base + 3]],
        [ys[base], ys[base + 1], ys[base + 2], ys[base + 3]],
        x,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cubic(x: f64) -> f64 {
        1.0 - 2.0 * x + 0.5 * x * x - 0.25 * x * x * x
    }

    #[test]
    fn uniform_is_exact_on_cubics() {
        let values: Vec<f64> = (0..10).map(|i| cubic(0.3 + 0.1 * i as f64)).collect();
        let s = UniformSamples {
            start: 0.3,
            step: 0.1,
            values: &values,
        };
        for &x in &[0.3, 0.31, 0.77, 1.15, 1.2] {
            let got = s.cubic(x).unwrap();
            assert!((got - cubic(x)).abs() < 1e-13, "x={x}");
        }
        assert!(s.cubic(0.29).is_none());
        assert!(s.cubic(1.21).is_none());
    }

    #[test]
    fn nonuniform_is_exact_on_cubics() {
        let xs: Vec<f64> = (0..12).map(|i| (i as f64 + 0.5).powi(2) * 0.01).collect();
        let ys: Vec<f64> = xs.iter().map(|&x| cubic(x)).collect();
        for i in 0..50 {
            let x = xs[0] + (xs[11] - xs[0]) * i as f64 / 49.0;
            assert!((cubic_nonuniform(&xs, &ys, x) - cubic(x)).abs() < 1e-12);
        }
    }
}
