//! Exponents and profile constants of the elliptic branched-transport
//! functional
//!
//! ```text
//! E_eps(u) = eps^gamma1 ∫ |u|^beta + eps^gamma2 ∫ |∇u|^2
//! ```
//!
//! In two dimensions `gamma1 = alpha - 1`, `gamma2 = alpha + 1` and
//! `beta = (4 alpha - 2) / (alpha + 1)`. The optimal transverse profile of a
//! flow strip is governed by the two integrals
//!
//! ```text
//! c0 = ∫_0^1 sqrt(t^beta - t) dt,      C0 = ∫_0^1 t / sqrt(t^beta - t) dt,
//! ```
//!
//! which satisfy `c0 = C0 (1 - beta) / (2 + beta)` (integration by parts).
//! The limit energy of a flux `m` is `c m^alpha` with
//! `c = alpha^-1 (4 c0 alpha / (1 - alpha))^(1 - alpha)`.

use crate::error::{Error, Result};
use crate::quadrature;

/// Exponents of the approximating functional for a given `alpha` and dimension.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentSet {
    pub alpha: f64,
    pub d: u32,
    /// Exponent of the concave term `|u|^beta`.
    pub beta: f64,
    /// Power of `eps` in front of the concave term.
    pub gamma1: f64,
    /// Power of `eps` in front of the Dirichlet term.
    pub gamma2: f64,
}

impl ExponentSet {
    /// Exponent of `eps` in the optimal amplitude, `2 / (4 - beta)`.
    /// Equals `(alpha + 1) / 3` in two dimensions.
    pub fn amplitude_exponent(&self) -> f64 {
        2.0 / (4.0 - self.beta)
    }
}

/// Compute `beta`, `gamma1`, `gamma2` for `alpha` in `(1 - 1/d, 1)`.
///
/// Only the ratio `gamma1 / gamma2` is determined by scaling; we normalize
/// with `gamma2 = 3 - d + alpha (d - 1)`, which gives `(alpha - 1, alpha + 1)`
/// for `d = 2`.
pub fn exponents(alpha: f64, d: u32) -> Result<ExponentSet> {
    if d < 2 {
        return Err(Error::Domain(format!("dimension must be >= 2, got {d}")));
    }
    let df = d as f64;
    let lower = 1.0 - 1.0 / df;
    if !(alpha > lower && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} must lie in the open interval ({lower}, 1) for d = {d}"
        )));
    }
    let denom = 3.0 - df + alpha * (df - 1.0);
    let (beta, gamma1, gamma2) = if d == 2 {
        (
            (4.0 * alpha - 2.0) / (alpha + 1.0),
            alpha - 1.0,
            alpha + 1.0,
        )
    } else {
        (
            (2.0 - 2.0 * df + 2.0 * alpha * df) / denom,
            (df - 1.0) * (alpha - 1.0),
            denom,
        )
    };
    Ok(ExponentSet {
        alpha,
        d,
        beta,
        gamma1,
        gamma2,
    })
}

/// Profile integrals and the limit constant for `d = 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfileConstants {
    pub exponents: ExponentSet,
    /// `∫_0^1 sqrt(t^beta - t) dt`
    pub c0: f64,
    /// `∫_0^1 t / sqrt(t^beta - t) dt`
    pub c0_moment: f64,
    /// Limit constant `alpha^-1 (4 c0 alpha / (1 - alpha))^(1 - alpha)`.
    pub c: f64,
    pub quadrature_tol: f64,
    /// Quadrature error estimates for `c0` and `c0_moment`.
    pub c0_error: f64,
    pub c0_moment_error: f64,
}

/// `t^beta - t` evaluated without cancellation near `t = 1`, given
/// `ln t` and `t`.
fn gap(beta: f64, t: f64, ln_t: f64) -> f64 {
    t * ((beta - 1.0) * ln_t).exp_m1()
}

/// Integrate `h(t, t^beta - t)` over `(0, 1)` with endpoint substitutions
/// `t = s^(2/(2-beta))` on `(0, 1/2]` and `t = 1 - q^2` on `[1/2, 1)`.
///
/// Both substitutions turn the algebraic endpoint behaviour of the profile
/// integrands into bounded, smooth-enough integrands for Gauss–Kronrod.
pub(crate) fn profile_integral<H>(beta: f64, h: H, tol: f64) -> Result<(f64, f64)>
where
    H: Fn(f64, f64) -> f64,
{
    let p = 2.0 / (2.0 - beta);
    let s_max = 0.5f64.powf(1.0 / p);
    let left = |s: f64| {
        if s <= 0.0 {
            return 0.0;
        }
        let ln_t = p * s.ln();
        let t = ln_t.exp();
        let g = gap(beta, t, ln_t);
        h(t, g) * p * s.powf(p - 1.0)
    };
    let q_max = 0.5f64.sqrt();
    let right = |q: f64| {
        if q <= 0.0 {
            return 0.0;
        }
        let ln_t = (-q * q).ln_1p();
        let t = 1.0 - q * q;
        let g = gap(beta, t, ln_t);
        h(t, g) * 2.0 * q
    };
    let (v1, e1) = quadrature::integrate(left, 0.0, s_max, 0.5 * tol)?;
    let (v2, e2) = quadrature::integrate(right, 0.0, q_max, 0.5 * tol)?;
    Ok((v1 + v2, e1 + e2))
}

/// Compute `c0`, `C0` and `c` by adaptive quadrature.
pub fn profile_constants(alpha: f64, quadrature_tol: f64) -> Result<ProfileConstants> {
    if !(alpha > 0.5 && alpha < 1.0) {
        return Err(Error::Domain(format!(
            "alpha = {alpha} must lie in (1/2, 1) for the two-dimensional profile"
        )));
    }
    if !(quadrature_tol > 0.0) {
        return Err(Error::Domain(format!(
            "quadrature tolerance must be positive, got {quadrature_tol}"
        )));
    }
    let exponents = exponents(alpha, 2)?;
    let beta = exponents.beta;
    let (c0, c0_error) = profile_integral(beta, |_, g| g.max(0.0).sqrt(), quadrature_tol)?;
    let (c0_moment, c0_moment_error) = profile_integral(beta, |t, g| t / g.sqrt(), quadrature_tol)?;
    let c = (4.0 * c0 * alpha / (1.0 - alpha)).powf(1.0 - alpha) / alpha;
    if !(c.is_finite() && c > 0.0) {
        return Err(Error::numeric(
            "limit constant is not finite and positive",
            c,
        ));
    }
    Ok(ProfileConstants {
        exponents,
        c0,
        c0_moment,
        c,
        quadrature_tol,
        c0_error,
        c0_moment_error,
    })
}

impl ProfileConstants {
    pub fn alpha(&self) -> f64 {
        self.exponents.alpha
    }

    pub fn beta(&self) -> f64 {
        self.exponents.beta
    }

    /// `eps^(alpha-1) A^(beta-1) m + 4 c0 eps^alpha A^(1+beta/2)`: the slice
    /// cost of a profile with peak `amplitude` carrying flux `m`.
    pub fn amplitude_objective(&self, amplitude: f64, m: f64, eps: f64) -> f64 {
        let alpha = self.alpha();
        let beta = self.beta();
        eps.powf(alpha - 1.0) * amplitude.powf(beta - 1.0) * m
            + 4.0 * self.c0 * eps.powf(alpha) * amplitude.powf(1.0 + beta / 2.0)
    }

    /// Minimizer of [`Self::amplitude_objective`] over the amplitude.
    pub fn optimal_amplitude(&self, m: f64, eps: f64) -> Result<f64> {
        check_flux_eps(m, eps)?;
        if m == 0.0 {
            return Ok(0.0);
        }
        let beta = self.beta();
        let base = m * (1.0 - beta) / (eps * 2.0 * self.c0 * (2.0 + beta));
        Ok(base.powf(self.exponents.amplitude_exponent()))
    }

    /// Minimum of [`Self::amplitude_objective`]; equals `c m^alpha`.
    pub fn pointwise_cost(&self, m: f64, eps: f64) -> Result<f64> {
        check_flux_eps(m, eps)?;
        if m == 0.0 {
            return Ok(0.0);
        }
        let a = self.optimal_amplitude(m, eps)?;
        Ok(self.amplitude_objective(a, m, eps))
    }

    /// Coefficient of the transverse profile equation
    /// `z' = -kappa sqrt(z^beta - z)` for flux `theta`.
    pub fn profile_rate(&self, theta: f64) -> f64 {
        let beta = self.beta();
        2.0 * self.c0 * (2.0 + beta) / ((1.0 - beta) * theta)
    }
}

fn check_flux_eps(m: f64, eps: f64) -> Result<()> {
    if !(m >= 0.0 && m.is_finite()) {
        return Err(Error::Domain(format!("mass flux must be >= 0, got {m}")));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    Ok(())
}

/// Default tolerance used when the caller does not specify one.
pub const DEFAULT_QUADRATURE_TOL: f64 = 1e-12;

/// Convenience wrapper: optimal amplitude for `(m, eps, alpha)`.
pub fn optimal_amplitude(m: f64, eps: f64, alpha: f64) -> Result<f64> {
    profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?.optimal_amplitude(m, eps)
}

/// Convenience wrapper: minimal slice cost for `(m, eps, alpha)`.
pub fn pointwise_cost(m: f64, eps: f64, alpha: f64) -> Result<f64> {
    profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?.pointwise_cost(m, eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponents_at_alpha_08() {
        let e = exponents(0.8, 2).unwrap();
        assert!((e.beta - 2.0 / 3.0).abs() < 1e-15);
        assert!((e.gamma1 + 0.2).abs() < 1e-15);
        assert!((e.gamma2 - 1.8).abs() < 1e-15);
    }

    #[test]
    fn exponents_at_alpha_075() {
        let e = exponents(0.75, 2).unwrap();
        assert!((e.beta - 4.0 / 7.0).abs() < 1e-15);
    }

    #[test]
    fn alpha_half_is_rejected() {
        let err = exponents(0.5, 2).unwrap_err();
        assert!(matches!(err, Error::Domain(ref m) if m.contains("(0.5, 1)")));
        assert!(exponents(0.8, 1).is_err());
        assert!(profile_constants(0.5, 1e-10).is_err());
    }

    #[test]
    fn general_dimension_matches_formulas() {
        for d in 2..6u32 {
            let df = d as f64;
            let alpha = 1.0 - 0.5 / df;
            let e = exponents(alpha, d).unwrap();
            let denom = 3.0 - df + alpha * (df - 1.0);
            let beta = (2.0 - 2.0 * df + 2.0 * alpha * df) / denom;
            assert!((e.beta - beta).abs() < 1e-14);
            assert!(e.beta > 0.0 && e.beta < 1.0);
            let ratio = (df - 1.0) * (alpha - 1.0) / denom;
            assert!((e.gamma1 / e.gamma2 - ratio).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_flux_conventions() {
        let k = profile_constants(0.8, 1e-12).unwrap();
        assert_eq!(k.optimal_amplitude(0.0, 0.01).unwrap(), 0.0);
        assert_eq!(k.pointwise_cost(0.0, 0.01).unwrap(), 0.0);
        assert!(k.pointwise_cost(-1.0, 0.01).is_err());
        assert!(k.pointwise_cost(1.0, 0.0).is_err());
    }

    #[test]
    fn amplitude_homogeneity() {
        let k = profile_constants(0.7, 1e-12).unwrap();
        let a1 = k.optimal_amplitude(1.0, 0.01).unwrap();
        let factor = 2f64.powf((4.0 - k.beta()) / 2.0);
        let a2 = k.optimal_amplitude(factor, 0.01).unwrap();
        assert!((a2 / a1 - 2.0).abs() < 1e-12);
    }
}
