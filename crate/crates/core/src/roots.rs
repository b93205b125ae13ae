//! Bracketed root finding and sign-change scans.

/// Bisection on `[lo, hi]` with `f(lo)` and `f(hi)` of opposite sign (or one zero).
///
/// Stops when `|f| <= ftol` or the bracket can no longer be halved.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, ftol: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() || !flo.is_finite() || !fhi.is_finite() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm.abs() <= ftol {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// Uniform grid of `n` points spanning `[lo, hi]`.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Adjacent grid intervals on which `f` changes sign.
pub fn sign_changes(f: impl Fn(f64) -> f64, grid: &[f64]) -> Vec<(f64, f64)> {
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut out = Vec::new();
    for k in 0..grid.len().saturating_sub(1) {
        let (a, b) = (vals[k], vals[k + 1]);
        if a == 0.0 {
            out.push((grid[k], grid[k]));
        } else if a * b < 0.0 {
            out.push((grid[k], grid[k + 1]));
        }
    }
    if let Some(&last) = vals.last() {
        if last == 0.0 {
            let x = grid[grid.len() - 1];
            out.push((x, x));
        }
    }
    out
}

/// Golden-section minimum of a unimodal function on `[a, b]`.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, xtol: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while (b - a).abs() > xtol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}
