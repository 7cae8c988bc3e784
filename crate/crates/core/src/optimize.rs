//! Derivative-free scalar minimization.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Minimizes a unimodal `f` on `[a, b]` by golden-section search, stopping
/// once the bracket is narrower than `tol`. Returns `(x, f(x))` for the best
/// point evaluated.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    if a > b {
        std::mem::swap(&mut a, &mut b);
    }
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut best = if fc <= fd { (c, fc) } else { (d, fd) };
    // the bracket shrinks by 1/φ per iteration; 200 covers any f64 interval
    for _ in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
            if fc < best.1 {
                best = (c, fc);
            }
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
            if fd < best.1 {
                best = (d, fd);
            }
        }
    }
    for x in [a, b] {
        let fx = f(x);
        if fx < best.1 {
            best = (x, fx);
        }
    }
    best
}

/// Maximizes `f` on `[a, b]`; see [`golden_section_min`].
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> (f64, f64) {
    let (x, fx) = golden_section_min(|x| -f(x), a, b, tol);
    (x, -fx)
}
