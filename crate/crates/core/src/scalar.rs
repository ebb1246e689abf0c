//! Scalar search on an interval.

/// Golden-section maximization of a unimodal (concave) function on `[lo, hi]`.
///
/// Returns `(x, f(x))` with `x` located within `xtol` of the maximizer. The
/// caller is responsible for comparing against the interval endpoints when the
/// maximum may sit on the boundary.
pub(crate) fn golden_section_max<F: FnMut(f64) -> f64>(
    mut f: F,
    lo: f64,
    hi: f64,
    xtol: f64,
) -> (f64, f64) {
    const INVPHI: f64 = 0.618_033_988_749_894_9; // (sqrt(5) - 1) / 2

    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - INVPHI * (b - a);
    let mut x2 = a + INVPHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);

    while b - a > xtol {
        if f1 >= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INVPHI * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INVPHI * (b - a);
            f2 = f(x2);
        }
    }
    let mid = 0.5 * (a + b);
    let fm = f(mid);
    if f1 >= f2 && f1 >= fm {
        (x1, f1)
    } else if f2 >= fm {
        (x2, f2)
    } else {
        (mid, fm)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_interior_maximum() {
        let (x, v) = golden_section_max(|t| -(t - 0.3).powi(2), 0.0, 1.0, 1e-10);
        assert!((x - 0.3).abs() < 1e-8);
        assert!(v.abs() < 1e-15);
    }

    #[test]
    fn handles_boundary_maximum() {
        // Increasing function: interior search converges to the right edge.
        let (x, _) = golden_section_max(|t| t, 0.0, 1.0, 1e-10);
        assert!(x > 1.0 - 1e-8);
    }
}
