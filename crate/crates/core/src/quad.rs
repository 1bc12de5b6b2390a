//! Quadrature helpers shared by the density, contention and performance code.

/// Trapezoid rule over samples `ys` at abscissae `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    xs.windows(2).zip(ys.windows(2)).map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1])).sum()
}

/// Cumulative trapezoid integral, same length as the input, starting at zero.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]);
        out.push(acc);
    }
    out
}

/// Adaptive trapezoid (Richardson-checked) on [a, b]. Returns (value, error estimate).
/// The first few levels always split so symmetric kinks cannot fake convergence.
pub fn adaptive<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: f64, max_depth: u32) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let mut err = 0.0;
    let v = adapt_rec(&mut f, [a, b], [fa, fm, fb], tol, 0, max_depth, &mut err);
    (v, err)
}

const MIN_LEVEL: u32 = 4;

fn adapt_rec<F: FnMut(f64) -> f64>(
    f: &mut F,
    [a, b]: [f64; 2],
    [fa, fm, fb]: [f64; 3],
    tol: f64,
    level: u32,
    max_depth: u32,
    err: &mut f64,
) -> f64 {
    let h = b - a;
    let coarse = 0.5 * h * (fa + fb);
    let fine = 0.25 * h * (fa + 2.0 * fm + fb);
    let est = (fine - coarse).abs() / 3.0;
    if level >= max_depth || (level >= MIN_LEVEL && est <= tol) {
        *err += est;
        return fine;
    }
    let m = 0.5 * (a + b);
    let fl = f(0.5 * (a + m));
    let fr = f(0.5 * (m + b));
    adapt_rec(f, [a, m], [fa, fl, fm], 0.5 * tol, level + 1, max_depth, err)
        + adapt_rec(f, [m, b], [fm, fr, fb], 0.5 * tol, level + 1, max_depth, err)
}

/// Bisection for a sign change of `f` on [lo, hi]; stops when the bracket is narrower than `xtol`.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, mut lo: f64, mut hi: f64, xtol: f64, max_iter: usize) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if flo.signum() == fhi.signum() {
        return None;
    }
    for _ in 0..max_iter {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= xtol {
            return Some(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
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

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trapezoid_is_exact_on_lines() {
        let xs: Vec<f64> = (0..11).map(|i| i as f64 * 0.1).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x + 1.0).collect();
        assert!((trapezoid(&xs, &ys) - 2.5).abs() < 1e-12);
        let c = cumulative_trapezoid(&xs, &ys);
        assert!((c[10] - 2.5).abs() < 1e-12);
    }

    #[test]
    fn adaptive_handles_kinks() {
        let (v, _) = adaptive(|x: f64| (x - 0.3).abs(), 0.0, 1.0, 1e-10, 40);
        assert!((v - (0.045 + 0.245)).abs() < 1e-8);
    }

    #[test]
    fn bisect_finds_root() {
        let r = bisect(|x| x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-12);
    }
}
