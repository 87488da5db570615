//! Continued-fraction rationalization of floating point ratios.

/// Best rational approximation `p/q` of `x` with `q <= max_den`, returned only
/// if it lies within `tol` of `x`. Walks the convergents and stops at the first
/// one that is close enough, so the result has the smallest denominator among
/// convergents meeting the tolerance.
pub fn rationalize(x: f64, max_den: i64, tol: f64) -> Option<(i64, i64)> {
    if !x.is_finite() {
        return None;
    }
    let sign = if x < 0.0 { -1 } else { 1 };
    let y = x.abs();
    let (mut p0, mut q0, mut p1, mut q1) = (0i64, 1i64, 1i64, 0i64);
    let mut frac = y;
    for _ in 0..64 {
        let a = frac.floor();
        if a > 1e15 {
            break;
        }
        let a = a as i64;
        let p2 = a.checked_mul(p1)?.checked_add(p0)?;
        let q2 = a.checked_mul(q1)?.checked_add(q0)?;
        if q2 > max_den {
            break;
        }
        if (p2 as f64 / q2 as f64 - y).abs() <= tol {
            return Some((sign * p2, q2));
        }
        p0 = p1;
        q0 = q1;
        p1 = p2;
        q1 = q2;
        let rest = frac - a as f64;
        if rest <= 0.0 {
            break;
        }
        frac = 1.0 / rest;
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simple_fractions() {
        assert_eq!(rationalize(0.25, 1000, 1e-12), Some((1, 4)));
        assert_eq!(rationalize(0.125, 1000, 1e-12), Some((1, 8)));
        assert_eq!(rationalize(2.0 / 3.0, 1000, 1e-12), Some((2, 3)));
        assert_eq!(rationalize(-1.5, 1000, 1e-12), Some((-3, 2)));
        assert_eq!(rationalize(3.0, 10, 1e-12), Some((3, 1)));
    }

    #[test]
    fn irrational_is_rejected() {
        assert_eq!(rationalize(2f64.sqrt(), 1_000_000, 1e-13), None);
        assert_eq!(rationalize(std::f64::consts::PI, 1_000_000, 1e-13), None);
    }
}
