//! Bracketing root finders and a golden-section minimizer.

use crate::error::{Error, Result};

const MAX_BISECTIONS: usize = 200;

/// Bisection for a sign change of `f` on `[lo, hi]`.
///
/// Stops when the bracket is narrower than `x_tol` or `|f| <= f_tol`.
pub fn bisect<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64, f_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let mut f_lo = f(lo)?;
    let f_hi = f(hi)?;
    if f_lo == 0.0 {
        return Ok(lo);
    }
    if f_hi == 0.0 {
        return Ok(hi);
    }
    if f_lo.signum() == f_hi.signum() {
        return Err(Error::Bracket(format!(
            "no sign change on [{lo}, {hi}]: f = {f_lo:e}, {f_hi:e}"
        )));
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid.abs() <= f_tol || (hi - lo).abs() <= x_tol || mid == lo || mid == hi {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Golden-section search for a minimizer of a unimodal `f` on `[lo, hi]`.
///
/// Returns `(x_min, f(x_min))`.
pub fn golden_section<F>(mut f: F, mut lo: f64, mut hi: f64, x_tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    while (hi - lo).abs() > x_tol {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1)?;
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2)?;
        }
    }
    Ok(if f1 < f2 { (x1, f1) } else { (x2, f2) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bisect_finds_sqrt_two() {
        let r = bisect(|x| Ok(x * x - 2.0), 0.0, 2.0, 1e-14, 0.0).unwrap();
        assert!((r - 2f64.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn bisect_rejects_missing_bracket() {
        assert!(matches!(bisect(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, 0.0), Err(Error::Bracket(_))));
    }

    #[test]
    fn golden_section_on_parabola() {
        let (x, fx) = golden_section(|x| Ok((x - 0.3) * (x - 0.3)), -2.0, 5.0, 1e-10).unwrap();
        assert!((x - 0.3).abs() < 1e-8);
        assert!(fx < 1e-15);
    }
}
