//! Globally adaptive Gauss–Kronrod (7/15) quadrature.
//!
//! Used for primitives of non-closed-form integrands and for the
//! `∫ dr/ψ(r)` integrals behind φ and the dwell-time bound.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuadError {
    #[error("integrand returned a non-finite value at {0}")]
    NonFinite(f64),
    #[error("no convergence after {intervals} subintervals (estimate {estimate}, error {error})")]
    NoConvergence {
        intervals: usize,
        estimate: f64,
        error: f64,
    },
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

pub const MAX_INTERVALS: usize = 4000;

#[derive(Debug, Clone, Copy)]
struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<Piece, QuadError> {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    if !fc.is_finite() {
        return Err(QuadError::NonFinite(c));
    }
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for (i, (&x, &w)) in XGK.iter().zip(WGK.iter()).take(7).enumerate() {
        let (lo, hi) = (c - h * x, c + h * x);
        let (fl, fh) = (f(lo), f(hi));
        if !fl.is_finite() {
            return Err(QuadError::NonFinite(lo));
        }
        if !fh.is_finite() {
            return Err(QuadError::NonFinite(hi));
        }
        kronrod += w * (fl + fh);
        // odd Kronrod indices carry the Gauss nodes
        if i % 2 == 1 {
            gauss += WG[i / 2] * (fl + fh);
        }
    }
    Ok(Piece {
        a,
        b,
        value: kronrod * h,
        error: ((kronrod - gauss) * h).abs(),
    })
}

/// Integrate `f` over `[a, b]` until the summed error estimate drops below
/// `max(abs_tol, rel_tol·|I|)`. Reversed limits return the negated integral.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    if a == b {
        return Ok(0.0);
    }
    if b < a {
        return integrate(f, b, a, rel_tol, abs_tol).map(|v| -v);
    }
    let mut pieces = vec![gk15(&f, a, b)?];
    loop {
        let total: f64 = pieces.iter().map(|p| p.value).sum();
        let err: f64 = pieces.iter().map(|p| p.error).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if pieces.len() >= MAX_INTERVALS {
            return Err(QuadError::NoConvergence {
                intervals: pieces.len(),
                estimate: total,
                error: err,
            });
        }
        let (worst, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .expect("non-empty");
        let p = pieces.swap_remove(worst);
        let mid = 0.5 * (p.a + p.b);
        if mid <= p.a || mid >= p.b {
            // interval exhausted at machine precision; accept what we have
            return Ok(total);
        }
        pieces.push(gk15(&f, p.a, mid)?);
        pieces.push(gk15(&f, mid, p.b)?);
    }
}

/// Integral of `f` over `[a, b]` (with `0 < a, b`) computed in the
/// logarithmic variable `u = ln r`, i.e. `∫ f(e^u) e^u du`.
pub fn integrate_log<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    rel_tol: f64,
    abs_tol: f64,
) -> Result<f64, QuadError> {
    integrate(
        |u| {
            let r = u.exp();
            f(r) * r
        },
        a.ln(),
        b.ln(),
        rel_tol,
        abs_tol,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let v = integrate(|x| 3.0 * x * x, 0.0, 2.0, 1e-12, 0.0).unwrap();
        assert!((v - 8.0).abs() < 1e-13);
    }

    #[test]
    fn reversed_limits_flip_sign() {
        let v = integrate(|x| x.exp(), 1.0, 0.0, 1e-12, 0.0).unwrap();
        assert!((v + (1f64.exp() - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn log_substitution_handles_wide_ranges() {
        // ∫_{1e-6}^{1e6} dr/r = ln(1e12)
        let v = integrate_log(|r| 1.0 / r, 1e-6, 1e6, 1e-12, 0.0).unwrap();
        assert!((v - 1e12f64.ln()).abs() < 1e-10);
    }

    #[test]
    fn endpoint_singularity_converges() {
        // ∫_0^1 r^{-1/2} dr = 2
        let v = integrate(|x| x.powf(-0.5), 0.0, 1.0, 1e-10, 0.0).unwrap();
        assert!((v - 2.0).abs() < 1e-8, "{v}");
    }

    #[test]
    fn non_finite_is_reported() {
        let err = integrate(|x| if x > 0.5 { f64::NAN } else { x }, 0.0, 1.0, 1e-10, 0.0);
        assert!(matches!(err, Err(QuadError::NonFinite(_))));
    }
}
