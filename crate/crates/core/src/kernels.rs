//! The four kernel shapes of the reactive point process and the covariate link.
//!
//! ```text
//! g1(ω) = a1 · (1 − ln(1 + e^{−b1·ω}) / ln 2)      saturation of excitation, ω ≥ 0
//! g2(t) = 1 / (1 + e^{β·t})                        self-excitation decay
//! g3(ω) = a3 · (1 − ln(1 + e^{b3·ω}) / ln 2)       saturation of regulation, ω ≤ 0
//! g4(t) = −1 / (1 + e^{γ·t})                       self-regulation decay
//! ```
//!
//! The checked functions validate their parameters; the `*_unchecked` forms are
//! used on hot paths once parameters have been validated at construction.

use std::f64::consts::LN_2;

use crate::error::{invalid, Result, RppError};

/// Number of covariates carried by every entity.
pub const N_COVARIATES: usize = 3;

/// `ln(1 + e^x)` without overflow or cancellation.
#[inline]
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `1 / (1 + e^x)`, stable for large `|x|`.
#[inline]
pub(crate) fn logistic_tail(x: f64) -> f64 {
    if x >= 0.0 {
        let e = (-x).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + x.exp())
    }
}

#[inline]
pub(crate) fn g1_unchecked(omega: f64, a1: f64, b1: f64) -> f64 {
    a1 * (1.0 - softplus(-b1 * omega) / LN_2)
}

#[inline]
pub(crate) fn g2_unchecked(t: f64, beta: f64) -> f64 {
    logistic_tail(beta * t)
}

#[inline]
pub(crate) fn g3_unchecked(omega: f64, a3: f64, b3: f64) -> f64 {
    a3 * (1.0 - softplus(b3 * omega) / LN_2)
}

#[inline]
pub(crate) fn g4_unchecked(t: f64, gamma: f64) -> f64 {
    -logistic_tail(gamma * t)
}

fn check_positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and > 0, got {v}")))
    }
}

fn check_non_negative(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(name, format!("must be finite and >= 0, got {v}")))
    }
}

/// Self-excitation decay `1/(1+e^{βt})`.
pub fn g2(t: f64, beta: f64) -> Result<f64> {
    check_positive("beta", beta)?;
    check_non_negative("t", t)?;
    Ok(g2_unchecked(t, beta))
}

/// Self-regulation decay `−1/(1+e^{γt})`.
pub fn g4(t: f64, gamma: f64) -> Result<f64> {
    check_positive("gamma", gamma)?;
    check_non_negative("t", t)?;
    Ok(g4_unchecked(t, gamma))
}

/// Excitation saturation. `g1(0) = 0`, increasing, bounded by `a1`.
pub fn g1(omega: f64, a1: f64, b1: f64) -> Result<f64> {
    check_non_negative("a1", a1)?;
    check_positive("b1", b1)?;
    if omega.is_nan() || omega < 0.0 {
        return Err(invalid("omega", format!("excitation sum must be >= 0, got {omega}")));
    }
    Ok(g1_unchecked(omega, a1, b1))
}

/// Regulation saturation. `g3(0) = 0`, rising toward `a3` as `ω → −∞`.
pub fn g3(omega: f64, a3: f64, b3: f64) -> Result<f64> {
    check_non_negative("a3", a3)?;
    check_positive("b3", b3)?;
    if omega.is_nan() || omega > 0.0 {
        return Err(invalid("omega", format!("regulation sum must be <= 0, got {omega}")));
    }
    Ok(g3_unchecked(omega, a3, b3))
}

fn link(covariates: &[f64], coeffs: &[f64]) -> Result<f64> {
    if covariates.len() != coeffs.len() {
        return Err(RppError::DimensionMismatch {
            expected: covariates.len(),
            got: coeffs.len(),
        });
    }
    let dot: f64 = covariates.iter().zip(coeffs).map(|(m, c)| m * c).sum();
    // floor keeps the rate strictly positive when e^{−⟨m,υ⟩} underflows
    Ok(softplus(-dot).max(f64::MIN_POSITIVE))
}

/// Per-entity excitation decay `β = ln(1 + e^{−⟨m, υ⟩})`.
pub fn link_beta(covariates: &[f64], upsilon: &[f64]) -> Result<f64> {
    link(covariates, upsilon)
}

/// Per-entity regulation decay `γ = ln(1 + e^{−⟨m, ω⟩})`.
pub fn link_gamma(covariates: &[f64], omega: &[f64]) -> Result<f64> {
    link(covariates, omega)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn g2_origin_and_tail() {
        for beta in [1e-4, 0.005, 1.0, 40.0] {
            assert_eq!(g2(0.0, beta).unwrap(), 0.5);
            assert!(g2(1e6, beta).unwrap() < 1e-40);
        }
    }

    #[test]
    fn g2_demo_decay_value() {
        // 1/(1+e^5)
        assert!(close(g2(1000.0, 0.005).unwrap(), 0.006_692_850_924_284_855, 1e-15));
    }

    #[test]
    fn g4_is_negated_g2() {
        for t in [0.0, 0.3, 7.0, 250.0, 9000.0] {
            assert_eq!(g4(t, 0.02).unwrap(), -g2(t, 0.02).unwrap());
        }
        assert_eq!(g4(0.0, 3.0).unwrap(), -0.5);
    }

    #[test]
    fn g1_values() {
        assert_eq!(g1(0.0, 4.0, 2.0).unwrap(), 0.0);
        assert!(close(g1(1e4, 4.0, 2.0).unwrap(), 4.0, 1e-12));
        // 16.98·(1 − ln(1+e^{−0.15})/ln 2), evaluated independently at 30 digits.
        assert!(close(g1(1.0, 16.98, 0.15).unwrap(), 1.768_438_924_401_867_4, 1e-12));
    }

    #[test]
    fn g3_values() {
        assert_eq!(g3(0.0, 0.4, 3.75).unwrap(), 0.0);
        assert!(close(g3(-1e4, 0.4, 3.75).unwrap(), 0.4, 1e-12));
        assert!(close(g3(-0.5, 0.4, 3.75).unwrap(), 0.317_665_360_773_540_6, 1e-12));
    }

    #[test]
    fn kernel_parameter_errors() {
        assert!(g2(1.0, 0.0).is_err());
        assert!(g2(1.0, -1.0).is_err());
        assert!(g4(1.0, 0.0).is_err());
        assert!(g1(1.0, 1.0, 0.0).is_err());
        assert!(g1(1.0, -0.1, 1.0).is_err());
        assert!(g3(-1.0, 1.0, -2.0).is_err());
        assert!(g3(-1.0, -1.0, 2.0).is_err());
        assert!(g1(-1.0, 1.0, 1.0).is_err());
        assert!(g3(1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn link_values() {
        let m = [0.2, -0.1, 0.3];
        let ups = [-4.6554, -0.5716, -4.8028];
        // ⟨m, υ⟩ = −2.31476, so β = ln(1 + e^{2.31476}).
        assert!(close(link_beta(&m, &ups).unwrap(), 2.408_969_474_915_43, 1e-12));
        assert!(close(link_beta(&[0.0; 3], &ups).unwrap(), LN_2, 1e-15));
        assert!(link_beta(&[0.5; 3], &[1e3; 3]).unwrap() > 0.0);
        assert!(link_beta(&[0.5; 3], &[1e3; 3]).unwrap() < 1e-300);
        assert_eq!(link_gamma(&m, &ups).unwrap(), link_beta(&m, &ups).unwrap());
        assert!(matches!(
            link_beta(&m, &[1.0, 2.0]),
            Err(RppError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn softplus_is_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert_eq!(softplus(-1000.0), 0.0);
        assert!(close(softplus(0.0), LN_2, 1e-16));
    }
}
