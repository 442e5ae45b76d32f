//! Adaptive Simpson quadrature for the absolutely continuous parts of kernels
//! and for test-function integrals over cells.

const MAX_DEPTH: u32 = 48;

/// Integrates `f` over `[a, b]` to relative tolerance `rel_tol` (with a small
/// absolute floor so that vanishing integrals terminate).
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    if !(b > a) {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Coarse estimate of the scale, used to turn the relative tolerance into
    // an absolute one for the recursion.
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let tol = (rel_tol * scale).max(1e-300);
    recurse(&f, a, b, fa, fm, fb, whole, tol, MAX_DEPTH)
}

#[allow(clippy::too_many_arguments)]
fn recurse<F: Fn(f64) -> f64>(
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
    recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
        + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
}

/// Composite midpoint nodes on `[a, b)`: `(x_j, w)` with equal weights.
pub fn midpoint_nodes(a: f64, b: f64, points: usize) -> impl Iterator<Item = (f64, f64)> {
    let w = (b - a) / points as f64;
    (0..points).map(move |j| (a + (j as f64 + 0.5) * w, w))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let v = adaptive_simpson(|x| x * x * x - 2.0 * x, 0.0, 2.0, 1e-12);
        assert!((v - 0.0).abs() < 1e-12);
        let v = adaptive_simpson(|x| x * x, 1.0, 3.0, 1e-12);
        assert!((v - 26.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn smooth_integrand_meets_relative_tolerance() {
        let v = adaptive_simpson(|x| (-2.0 * x).exp(), 0.0, 2.0, 1e-10);
        let exact = (1.0 - (-4.0f64).exp()) / 2.0;
        assert!(((v - exact) / exact).abs() < 1e-10);
    }

    #[test]
    fn empty_interval_is_zero() {
        assert_eq!(adaptive_simpson(|_| 1.0, 1.0, 1.0, 1e-10), 0.0);
        assert_eq!(adaptive_simpson(|_| 1.0, 2.0, 1.0, 1e-10), 0.0);
    }

    #[test]
    fn midpoint_nodes_cover_the_interval() {
        let nodes: Vec<_> = midpoint_nodes(0.0, 1.0, 4).collect();
        assert_eq!(nodes.len(), 4);
        assert_eq!(nodes[0], (0.125, 0.25));
        assert_eq!(nodes[3], (0.875, 0.25));
    }
}
