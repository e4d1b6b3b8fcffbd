//! Quadrature rules shared by the cost and verification code.

/// Default number of grid points for composite Simpson integration.
pub const DEFAULT_GRID_POINTS: usize = 2049;

/// Uniform grid with `points` nodes on `[a, b]`.
pub fn uniform_grid(a: f64, b: f64, points: usize) -> Vec<f64> {
    assert!(points >= 2, "a grid needs at least two points");
    let h = (b - a) / (points - 1) as f64;
    (0..points)
        .map(|i| if i == points - 1 { b } else { a + h * i as f64 })
        .collect()
}

/// Composite Simpson rule on uniformly spaced samples.
///
/// An even number of intervals uses Simpson throughout; with an odd count the
/// last three intervals fall back to Simpson's 3/8 rule.
pub fn simpson_samples(values: &[f64], h: f64) -> f64 {
    let n = values.len();
    match n {
        0 | 1 => 0.0,
        2 => 0.5 * h * (values[0] + values[1]),
        3 => h / 3.0 * (values[0] + 4.0 * values[1] + values[2]),
        _ => {
            let intervals = n - 1;
            let (simpson_end, tail) = if intervals.is_multiple_of(2) {
                (n - 1, 0.0)
            } else {
                let k = n - 4;
                let t = 3.0 * h / 8.0
                    * (values[k] + 3.0 * values[k + 1] + 3.0 * values[k + 2] + values[k + 3]);
                (k, t)
            };
            let mut acc = values[0] + values[simpson_end];
            for (i, v) in values.iter().enumerate().take(simpson_end).skip(1) {
                acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
            }
            acc * h / 3.0 + tail
        }
    }
}

/// Composite Simpson on `intervals` (rounded up to even) subintervals of `[a, b]`.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, intervals: usize) -> f64 {
    if b == a {
        return 0.0;
    }
    let m = intervals.max(2).div_ceil(2) * 2;
    let h = (b - a) / m as f64;
    let mut acc = f(a) + f(b);
    for i in 1..m {
        let x = a + h * i as f64;
        acc += if i % 2 == 1 { 4.0 * f(x) } else { 2.0 * f(x) };
    }
    acc * h / 3.0
}

/// Adaptive Simpson quadrature with absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    if b == a {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    adaptive_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

#[allow(clippy::too_many_arguments)]
fn adaptive_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + adaptive_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Cumulative Simpson integral of samples on a uniform grid; entry `i`
/// approximates the integral from the first node to node `i`.
///
/// Even nodes accumulate composite Simpson panels; odd nodes add a local
/// quadratic piece to the preceding even node.
pub fn cumulative_simpson(values: &[f64], h: f64) -> Vec<f64> {
    let n = values.len();
    let mut out = vec![0.0; n];
    if n < 2 {
        return out;
    }
    if n == 2 {
        out[1] = 0.5 * h * (values[0] + values[1]);
        return out;
    }
    for i in 1..n {
        out[i] = if i % 2 == 0 {
            out[i - 2] + h / 3.0 * (values[i - 2] + 4.0 * values[i - 1] + values[i])
        } else if i + 1 < n {
            out[i - 1] + h / 12.0 * (5.0 * values[i - 1] + 8.0 * values[i] - values[i + 1])
        } else {
            out[i - 1] + h / 12.0 * (-values[i - 2] + 8.0 * values[i - 1] + 5.0 * values[i])
        };
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simpson_is_exact_for_cubics() {
        let f = |x: f64| 3.0 * x * x * x - x + 2.0;
        let exact = 0.75 * 16.0 - 2.0 + 4.0;
        assert!((simpson(f, 0.0, 2.0, 4) - exact).abs() < 1e-12);
        let grid = uniform_grid(0.0, 2.0, 8);
        let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
        assert!((simpson_samples(&vals, grid[1] - grid[0]) - exact).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_boundary_layers() {
        let k: f64 = 500.0;
        let f = |x: f64| (-k * x).exp();
        let exact = (1.0 - (-k).exp()) / k;
        let got = adaptive_simpson(&f, 0.0, 1.0, 1e-14);
        assert!((got - exact).abs() < 1e-12);
    }

    #[test]
    fn cumulative_matches_antiderivative() {
        let grid = uniform_grid(0.0, 1.0, 101);
        let vals: Vec<f64> = grid.iter().map(|x| x.cos()).collect();
        let cum = cumulative_simpson(&vals, 0.01);
        for (x, c) in grid.iter().zip(&cum) {
            assert!((c - x.sin()).abs() < 1e-9, "{x}: {c}");
        }
    }

    #[test]
    fn grid_endpoints_are_exact() {
        let g = uniform_grid(0.0, 19_800.0, 2049);
        assert_eq!(g[0], 0.0);
        assert_eq!(*g.last().unwrap(), 19_800.0);
    }
}
