//! Adaptive Simpson quadrature used by the independent channel oracle.

use crate::error::{Error, Result};

const MAX_DEPTH: u32 = 60;

/// Integrates `f` over `[a, b]` to roughly `rel_tol` relative accuracy.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b < a {
        return Err(Error::Numeric(format!(
            "bad quadrature interval [{a}, {b}]"
        )));
    }
    if a == b {
        return Ok(0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // Absolute target derived from a coarse magnitude estimate.
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    let tol = rel_tol * scale;
    let mut budget = 5_000_000usize;
    // Halving the target per level is floored at round-off so that integrable
    // endpoint singularities do not demand sub-ulp accuracy.
    let floor = f64::EPSILON * scale;
    let value = recurse(
        &f,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        (tol, floor),
        MAX_DEPTH,
        &mut budget,
    )?;
    if !value.is_finite() {
        return Err(Error::Numeric(
            "quadrature produced a non-finite value".into(),
        ));
    }
    Ok(value)
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
    (tol, floor): (f64, f64),
    depth: u32,
    budget: &mut usize,
) -> Result<f64> {
    if *budget == 0 {
        return Err(Error::Numeric(
            "quadrature did not converge within the evaluation budget".into(),
        ));
    }
    *budget -= 1;
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if delta.abs() <= 15.0 * tol {
        return Ok(left + right + delta / 15.0);
    }
    if depth == 0 {
        return Err(Error::Numeric(format!(
            "quadrature did not converge on [{a}, {b}] (residual {delta:e})"
        )));
    }
    let sub = ((tol / 2.0).max(floor), floor);
    Ok(recurse(f, a, m, fa, flm, fm, left, sub, depth - 1, budget)?
        + recurse(f, m, b, fm, frm, fb, right, sub, depth - 1, budget)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn root_singularity() {
        // d/dx of x^{1/4} is unbounded at 0.
        let v = integrate(|x: f64| x.powf(0.25), 0.0, 1.0, 1e-12).unwrap();
        assert!((v - 0.8).abs() < 1e-9);
    }

    #[test]
    fn empty_interval() {
        assert_eq!(integrate(|x| x, 1.0, 1.0, 1e-9).unwrap(), 0.0);
        assert!(integrate(|x| x, 1.0, 0.0, 1e-9).is_err());
    }
}
