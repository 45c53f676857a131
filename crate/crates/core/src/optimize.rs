//! Scalar maximization and root bracketing.

use alloc::vec::Vec;

use crate::error::{Error, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub x: f64,
    pub value: f64,
    /// Scan points on either side of `x`; the maximum is interior to this
    /// bracket unless it sits on a bound.
    pub lower: f64,
    pub upper: f64,
    pub evaluations: usize,
}

/// Smallest geometric offset from `lo`, relative to `hi - lo`.
const GEOMETRIC_FLOOR: f64 = 1e-9;
/// Local maxima of the scan that get a golden-section refinement.
const MAX_STARTS: usize = 8;

/// Maximizes `f` on `[lo, hi]`.
///
/// The scan combines `scan_points` uniform points with as many points
/// spaced geometrically away from `lo`, so optima far smaller than the
/// interval are still bracketed. Golden-section search then refines the
/// best few local maxima of the scan. Scanning keeps multimodal and
/// piecewise objectives (discrete return models) from trapping the search
/// in a bracket that misses the global maximum.
pub fn maximize<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    scan_points: usize,
    x_tol: f64,
    max_iter: usize,
) -> Result<Maximum> {
    debug_assert!(hi >= lo);
    let width = hi - lo;
    if width == 0.0 {
        let value = f(lo);
        return Ok(Maximum { x: lo, value, lower: lo, upper: hi, evaluations: 1 });
    }
    let scan_points = scan_points.max(3);
    let ratio = libm::pow(GEOMETRIC_FLOOR, 1.0 / (scan_points - 1) as f64);
    let mut xs: Vec<f64> = (0..scan_points)
        .map(|i| lo + width * i as f64 / (scan_points - 1) as f64)
        .chain((0..scan_points).map(|i| lo + width * libm::pow(ratio, i as f64)))
        .collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let vs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
    let mut evaluations = xs.len();

    let last = xs.len() - 1;
    let mut starts: Vec<usize> = (0..xs.len())
        .filter(|&i| (i == 0 || vs[i] >= vs[i - 1]) && (i == last || vs[i] >= vs[i + 1]))
        .collect();
    starts.sort_by(|&a, &b| vs[b].total_cmp(&vs[a]));
    starts.truncate(MAX_STARTS);

    let mut best = Maximum { x: xs[0], value: f64::NEG_INFINITY, lower: xs[0], upper: xs[0], evaluations: 0 };
    for &i in &starts {
        let lower = xs[i.saturating_sub(1)];
        let upper = xs[(i + 1).min(last)];
        let (x, value, n) = golden(&mut f, lower, upper, x_tol, max_iter)?;
        evaluations += n;
        let (x, value) = if vs[i] > value { (xs[i], vs[i]) } else { (x, value) };
        if value > best.value {
            best = Maximum { x, value, lower, upper, evaluations: 0 };
        }
    }
    best.evaluations = evaluations;
    Ok(best)
}

/// Golden-section search on `[a, b]`; returns the best interior probe.
fn golden<F: FnMut(f64) -> f64>(f: &mut F, mut a: f64, mut b: f64, x_tol: f64, max_iter: usize) -> Result<(f64, f64, usize)> {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut evaluations = 2;
    let mut iter = 0;
    while (b - a) > x_tol * (1.0 + a.abs().max(b.abs())) {
        if iter >= max_iter {
            return Err(Error::NonConvergence { last_iterate: 0.5 * (a + b), residual: b - a });
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        evaluations += 1;
        iter += 1;
    }
    Ok(if fc >= fd { (c, fc, evaluations) } else { (d, fd, evaluations) })
}

/// Bisection for a sign change of `f` on `[lo, hi]`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo.signum() == fhi.signum() {
        return Err(Error::domain("bisection bracket has no sign change"));
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Err(Error::NonConvergence { last_iterate: 0.5 * (lo + hi), residual: hi - lo })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let m = maximize(|x| -(x - 0.3) * (x - 0.3), 0.0, 1.0, 16, 1e-12, 200).unwrap();
        assert!((m.x - 0.3).abs() < 1e-6);
    }

    #[test]
    fn finds_boundary_maximum() {
        let m = maximize(|x| x, 0.0, 2.0, 16, 1e-12, 200).unwrap();
        assert!((m.x - 2.0).abs() < 1e-6);
        let m = maximize(|x| -x, 0.0, 2.0, 16, 1e-12, 200).unwrap();
        assert!(m.x.abs() < 1e-6);
    }

    #[test]
    fn scan_escapes_local_maximum() {
        let f = |x: f64| if x < 0.2 { 1.0 - (x - 0.1).abs() } else { 2.0 - (x - 0.8).abs() };
        let m = maximize(f, 0.0, 1.0, 32, 1e-10, 200).unwrap();
        assert!((m.x - 0.8).abs() < 1e-6);
    }

    #[test]
    fn scan_resolves_optima_near_the_lower_bound() {
        // Two bumps far inside the first uniform cell; the taller is at 3e-3.
        let bump = |x: f64, c: f64, w: f64| libm::exp(-((x - c) / w) * ((x - c) / w));
        let f = |x: f64| bump(x, 1e-3, 2e-4) + 1.5 * bump(x, 3e-3, 5e-4);
        let m = maximize(f, 0.0, 10.0, 32, 1e-12, 300).unwrap();
        assert!((m.x - 3e-3).abs() < 1e-8, "{}", m.x);
        assert!(m.lower <= m.x && m.x <= m.upper);
    }

    #[test]
    fn bisection_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14).unwrap();
        assert!((r - core::f64::consts::SQRT_2).abs() < 1e-13);
        assert!(bisect(|x| x * x + 1.0, 0.0, 2.0, 1e-12).is_err());
    }
}
