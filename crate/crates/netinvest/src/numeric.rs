//! Scalar search primitives shared by the closed-form cross-checks and the
//! deviation searches: golden-section maximization, uniform grid scans and
//! bisection for monotone root finding.

/// Inverse golden ratio, `(sqrt(5) - 1) / 2`.
const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` on `[lo, hi]` by golden-section search, assuming `f` is
/// unimodal there. Returns `(argmax, max)`. Falls back gracefully on
/// non-unimodal inputs in the sense that it still returns the best point it
/// evaluated; callers that cannot guarantee unimodality should combine this
/// with [`grid_max`].
pub fn golden_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, xtol: f64) -> (f64, f64) {
    assert!(lo <= hi, "golden_max: empty interval [{lo}, {hi}]");
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc >= fd { (c, fc) } else { (d, fd) };
    while b - a > xtol {
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
        let (x, fx) = if fc >= fd { (c, fc) } else { (d, fd) };
        if fx > best.1 {
            best = (x, fx);
        }
    }
    for x in [lo, hi] {
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Evaluates `f` on `points` equally spaced samples of `[lo, hi]` (endpoints
/// included) and returns `(argmax, max)`.
pub fn grid_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
    assert!(points >= 2, "grid_max: need at least two samples");
    assert!(lo <= hi, "grid_max: empty interval [{lo}, {hi}]");
    let mut best = (lo, f(lo));
    for i in 1..points {
        let x = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        let fx = f(x);
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Maximizes over a grid scan refined by golden-section around the best grid
/// cell. The workhorse for one-dimensional best-response searches.
pub fn grid_then_golden(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    points: usize,
    xtol: f64,
) -> (f64, f64) {
    let (gx, gf) = grid_max(&mut f, lo, hi, points);
    let step = (hi - lo) / (points - 1) as f64;
    let (rx, rf) = golden_max(&mut f, (gx - step).max(lo), (gx + step).min(hi), xtol);
    if rf > gf {
        (rx, rf)
    } else {
        (gx, gf)
    }
}

/// Finds the smallest `x` in `[lo, hi]` with `f(x) <= 0` for non-increasing
/// `f`, to absolute tolerance `xtol`. Returns `hi` when `f` stays positive on
/// the whole interval and `lo` when `f(lo) <= 0` already.
pub fn bisect_first_nonpositive(
    mut f: impl FnMut(f64) -> f64,
    lo: f64,
    hi: f64,
    xtol: f64,
) -> f64 {
    if f(lo) <= 0.0 {
        return lo;
    }
    if f(hi) > 0.0 {
        return hi;
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > xtol {
        let m = 0.5 * (a + b);
        if f(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    b
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (x, v) = golden_max(|x| -(x - 0.3) * (x - 0.3), 0.0, 2.0, 1e-12);
        assert!((x - 0.3).abs() < 1e-9);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn golden_handles_kinked_unimodal() {
        // Maximum at a kink, the typical shape of reduced profit curves.
        let f = |x: f64| (2.0 * x).min(3.0 - x);
        let (x, v) = golden_max(f, 0.0, 3.0, 1e-12);
        assert!((x - 1.0).abs() < 1e-9);
        assert!((v - 2.0).abs() < 1e-9);
    }

    #[test]
    fn grid_then_golden_beats_plain_grid() {
        let f = |x: f64| -(x - 0.123_456).powi(2);
        let (x, _) = grid_then_golden(f, 0.0, 1.0, 33, 1e-12);
        assert!((x - 0.123_456).abs() < 1e-9);
    }

    #[test]
    fn bisection_matches_algebra() {
        // Smallest x with 4x - x^(-1/3) >= 0, i.e. x = 4^(-3/4).
        let x = bisect_first_nonpositive(|x: f64| x.powf(-1.0 / 3.0) - 4.0 * x, 1e-9, 10.0, 1e-14);
        assert!((x - 0.25f64.powf(0.75)).abs() < 1e-10);
    }

    #[test]
    fn bisection_clamps_to_interval_ends() {
        assert_eq!(bisect_first_nonpositive(|_| -1.0, 0.0, 1.0, 1e-12), 0.0);
        assert_eq!(bisect_first_nonpositive(|_| 1.0, 0.0, 1.0, 1e-12), 1.0);
    }
}
