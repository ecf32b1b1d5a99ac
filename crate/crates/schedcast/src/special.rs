//! Gamma-family special functions used by the quadratic-theory estimates.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SpecialError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("series/continued fraction failed to converge for s={s}, x={x}")]
    NoConvergence { s: f64, x: f64 },
}

const MAX_ITER: usize = 500;

/// Lanczos coefficients (g = 7, n = 9).
const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires x > 0, got {x}");
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// Gamma function Γ(x) for x > 0.
pub fn gamma(x: f64) -> f64 {
    ln_gamma(x).exp()
}

/// Lower incomplete gamma function γ(s, x) = ∫₀ˣ t^{s−1} e^{−t} dt.
///
/// Series expansion for x < s + 1, continued fraction for the upper
/// complement otherwise. Relative error is at the 1e-12 level or better
/// over the parameter ranges exercised here (s in (0, 4], any x ≥ 0).
pub fn lower_incomplete_gamma(s: f64, x: f64) -> Result<f64, SpecialError> {
    if s <= 0.0 {
        return Err(SpecialError::Domain(format!(
            "lower_incomplete_gamma requires s > 0, got s={s}"
        )));
    }
    if x < 0.0 {
        return Err(SpecialError::Domain(format!(
            "lower_incomplete_gamma requires x >= 0, got x={x}"
        )));
    }
    if x == 0.0 {
        return Ok(0.0);
    }
    let ln_gamma_s = ln_gamma(s);
    // log of the shared prefactor x^s e^{−x}
    let ln_prefactor = s * x.ln() - x;
    if x < s + 1.0 {
        // γ(s,x) = x^s e^{−x} Σ_{n≥0} x^n / (s (s+1) ⋯ (s+n))
        let mut term = 1.0 / s;
        let mut sum = term;
        for n in 1..=MAX_ITER {
            term *= x / (s + n as f64);
            sum += term;
            if term.abs() < sum.abs() * f64::EPSILON {
                return Ok((ln_prefactor + sum.ln()).exp());
            }
        }
        Err(SpecialError::NoConvergence { s, x })
    } else {
        // Modified Lentz continued fraction for Γ(s,x); γ = Γ(s) − Γ(s,x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..=MAX_ITER {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < f64::EPSILON {
                let upper = (ln_prefactor + h.ln()).exp();
                return Ok(gamma_minus(ln_gamma_s, upper));
            }
        }
        // For very large x the fraction converges in one step but the
        // delta test may not trigger before prefactor underflow.
        if ln_prefactor < -700.0 {
            return Ok(ln_gamma_s.exp());
        }
        Err(SpecialError::NoConvergence { s, x })
    }
}

fn gamma_minus(ln_gamma_s: f64, upper: f64) -> f64 {
    let full = ln_gamma_s.exp();
    (full - upper).max(0.0)
}
