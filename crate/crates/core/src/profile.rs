//! Optimal transverse profile of a flow strip.
//!
//! A strip carrying flux `theta` has intensity `v(y) = A z(A |y|)` across
//! the strip, with `A` the optimal amplitude and `z` the monotone solution of
//!
//! ```text
//! z' = -kappa sqrt(z^beta - z),  z(0) = 1,   kappa = 2 c0 (2 + beta) / ((1 - beta) theta).
//! ```
//!
//! The right-hand side is not Lipschitz at `z = 1`, so forward integration
//! from `z = 1` never leaves the constant solution. We instead tabulate the
//! inverse map `t(z) = kappa^-1 ∫_z^1 dw / sqrt(w^beta - w)` and interpolate
//! `z(t)` with cubic Hermite segments using the exact slope from the ODE.
//! A plateau `z = 1` of half-width `plateau_halfwidth` (in rescaled units)
//! makes up any mass deficit so that `∫ v = theta`.

use crate::constants::{profile_constants, ProfileConstants, DEFAULT_QUADRATURE_TOL};
use crate::error::{Error, Result};
use crate::quadrature;

/// Segments per half of the internal inverse table.
const TABLE_SEGMENTS: usize = 1024;
const MASS_TOL: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct TransverseProfile {
    pub alpha: f64,
    pub theta: f64,
    pub eps: f64,
    /// Peak intensity `A` of the physical profile.
    pub amplitude: f64,
    /// Half-width of the `z = 1` plateau, in rescaled units `t = A y`.
    pub plateau_halfwidth: f64,
    /// Rescaled length `T` over which `z0` falls from 1 to 0.
    pub transition_length: f64,
    pub kappa: f64,
    /// `(t, z(t))` samples of the plateau-free profile `z0` on `[0, T]`.
    pub z_table: Vec<(f64, f64)>,
    /// Physical half-width of the support, `(plateau + T) / A`.
    pub support_halfwidth: f64,
    pub constants: ProfileConstants,
    knots: Vec<Knot>,
}

#[derive(Debug, Clone, Copy)]
struct Knot {
    t: f64,
    z: f64,
    /// dz/dt
    dz: f64,
    /// ∫_0^t z0
    mass: f64,
}

/// Cubic Hermite segment on `[k0.t, k1.t]` evaluated at local `s ∈ [0, 1]`.
fn hermite(k0: &Knot, k1: &Knot, s: f64) -> f64 {
    let h = k1.t - k0.t;
    let s2 = s * s;
    let s3 = s2 * s;
    (2.0 * s3 - 3.0 * s2 + 1.0) * k0.z
        + (s3 - 2.0 * s2 + s) * h * k0.dz
        + (-2.0 * s3 + 3.0 * s2) * k1.z
        + (s3 - s2) * h * k1.dz
}

/// `∫_0^s` of the Hermite segment, in units of `t`.
fn hermite_integral(k0: &Knot, k1: &Knot, s: f64) -> f64 {
    let h = k1.t - k0.t;
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    h * ((0.5 * s4 - s3 + s) * k0.z
        + (0.25 * s4 - 2.0 / 3.0 * s3 + 0.5 * s2) * h * k0.dz
        + (-0.5 * s4 + s3) * k1.z
        + (0.25 * s4 - s3 / 3.0) * h * k1.dz)
}

impl TransverseProfile {
    /// `z(t)` including the plateau, for `t ≥ 0` (even extension otherwise).
    pub fn z(&self, t: f64) -> f64 {
        let t = t.abs();
        if t <= self.plateau_halfwidth {
            return 1.0;
        }
        self.z0(t - self.plateau_halfwidth)
    }

    /// Plateau-free profile `z0(t)` for `t ≥ 0`.
    pub fn z0(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 1.0;
        }
        if t >= self.transition_length {
            return 0.0;
        }
        let (k0, k1, s) = self.segment(t);
        hermite(k0, k1, s).clamp(0.0, 1.0)
    }

    /// `∫_0^t z0` for `t ≥ 0`.
    pub fn z0_mass(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        if t >= self.transition_length {
            return self.knots.last().map(|k| k.mass).unwrap_or(0.0);
        }
        let (k0, k1, s) = self.segment(t);
        k0.mass + hermite_integral(k0, k1, s)
    }

    fn segment(&self, t: f64) -> (&Knot, &Knot, f64) {
        let idx = self
            .knots
            .partition_point(|k| k.t <= t)
            .clamp(1, self.knots.len() - 1);
        let k0 = &self.knots[idx - 1];
        let k1 = &self.knots[idx];
        (k0, k1, (t - k0.t) / (k1.t - k0.t))
    }

    /// `∫_0^∞ z0`.
    pub fn half_mass(&self) -> f64 {
        self.z0_mass(self.transition_length)
    }

    /// First moment `∫_0^∞ t z(t) dt`, plateau included.
    pub fn first_moment(&self) -> f64 {
        const GX: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
        const GW: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
        let mut m1 = 0.0;
        for w in self.knots.windows(2) {
            let h = w[1].t - w[0].t;
            for (x, wt) in GX.iter().zip(GW) {
                let s = 0.5 * (x + 1.0);
                m1 += 0.5 * h * wt * (w[0].t + s * h) * hermite(&w[0], &w[1], s);
            }
        }
        let p = self.plateau_halfwidth;
        0.5 * p * p + m1 + p * self.half_mass()
    }

    /// Physical intensity `A z(A y)` at signed transverse distance `y`.
    pub fn intensity(&self, y: f64) -> f64 {
        self.amplitude * self.z(self.amplitude * y)
    }

    /// `∫_0^y A z(A s) ds`, odd in `y`; tends to `± theta / 2`.
    pub fn flux_below(&self, y: f64) -> f64 {
        let t = (self.amplitude * y).abs();
        let p = self.plateau_halfwidth;
        let m = if t <= p { t } else { p + self.z0_mass(t - p) };
        m.copysign(y)
    }

    /// Total mass `∫ A z(A y) dy = 2 (plateau + ∫ z0)`.
    pub fn total_flux(&self) -> f64 {
        2.0 * (self.plateau_halfwidth + self.half_mass())
    }

    /// Energy density across the strip at transverse distance `y`:
    /// `eps^(alpha-1) v^beta + eps^(alpha+1) v'^2`.
    pub fn energy_density(&self, y: f64) -> f64 {
        let beta = self.constants.beta();
        let a = self.amplitude;
        let z = self.z(a * y);
        let gap = (z.powf(beta) - z).max(0.0);
        let dv = a * a * self.kappa * gap.sqrt();
        self.eps.powf(self.alpha - 1.0) * (a * z).powf(beta)
            + self.eps.powf(self.alpha + 1.0) * dv * dv
    }
}

/// Build the profile for flux `theta` at scale `eps`.
pub fn solve_profile(
    alpha: f64,
    theta: f64,
    eps: f64,
    n_samples: usize,
) -> Result<TransverseProfile> {
    let constants = profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?;
    solve_profile_with(&constants, theta, eps, n_samples)
}

/// As [`solve_profile`], reusing precomputed constants.
pub fn solve_profile_with(
    constants: &ProfileConstants,
    theta: f64,
    eps: f64,
    n_samples: usize,
) -> Result<TransverseProfile> {
    if !(theta > 0.0 && theta.is_finite()) {
        return Err(Error::Domain(format!(
            "flux theta must be > 0, got {theta}"
        )));
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
    }
    if n_samples < 64 {
        return Err(Error::Domain(format!(
            "need at least 64 samples, got {n_samples}"
        )));
    }
    let alpha = constants.alpha();
    let beta = constants.beta();
    let kappa = constants.profile_rate(theta);
    let amplitude = constants.optimal_amplitude(theta, eps)?;
    let knots = inverse_table(beta, kappa)?;
    let last = *knots.last().expect("table is non-empty");
    let transition_length = last.t;
    let deficit = 0.5 * theta - last.mass;
    if deficit < -MASS_TOL * theta {
        return Err(Error::numeric(
            format!(
                "profile mass exceeds theta/2: ∫z0 = {} for theta/2 = {}",
                last.mass,
                0.5 * theta
            ),
            -deficit / theta,
        ));
    }
    let plateau_halfwidth = deficit.max(0.0);
    let mut profile = TransverseProfile {
        alpha,
        theta,
        eps,
        amplitude,
        plateau_halfwidth,
        transition_length,
        kappa,
        z_table: Vec::new(),
        support_halfwidth: (plateau_halfwidth + transition_length) / amplitude,
        constants: *constants,
        knots,
    };
    profile.z_table = (0..n_samples)
        .map(|k| {
            let t = transition_length * k as f64 / (n_samples - 1) as f64;
            (t, profile.z0(t))
        })
        .collect();
    Ok(profile)
}

/// Knots `(t, z, z', ∫z)` from `z = 1` down to `z = 0`.
///
/// The `z`-nodes follow `z = 1 - q^2` (uniform `q`) on `[1/2, 1]` and
/// `z = s^p`, `p = 2/(2-beta)` (uniform `s`) on `[0, 1/2]`; in those variables
/// both `dt/dz` and `z dt/dz` are smooth, so one Gauss–Kronrod rule per
/// segment is accurate to rounding.
fn inverse_table(beta: f64, kappa: f64) -> Result<Vec<Knot>> {
    let gap_q = |q: f64| -> (f64, f64) {
        let z = 1.0 - q * q;
        let g = z * ((beta - 1.0) * (-q * q).ln_1p()).exp_m1();
        (z, g)
    };
    let p = 2.0 / (2.0 - beta);
    let gap_s = |s: f64| -> (f64, f64) {
        let ln_z = p * s.ln();
        let z = ln_z.exp();
        let g = z * ((beta - 1.0) * ln_z).exp_m1();
        (z, g)
    };
    // dt/dq and z dt/dq on the upper branch (t increases as q increases).
    let dt_dq = |q: f64| -> f64 {
        if q <= 0.0 {
            return 2.0 / (kappa * (1.0 - beta).sqrt());
        }
        let (_, g) = gap_q(q);
        2.0 * q / (kappa * g.sqrt())
    };
    // dt/ds on the lower branch (t decreases as s increases).
    let dt_ds = |s: f64| -> f64 {
        if s <= 0.0 {
            return p / kappa;
        }
        let (_, g) = gap_s(s);
        let z_ratio = s.powf(p - 1.0);
        p * z_ratio / (kappa * g.sqrt())
    };

    let q_max = 0.5f64.sqrt();
    let s_max = 0.5f64.powf(1.0 / p);
    let slope = |z: f64| -> f64 { -kappa * (z.powf(beta) - z).max(0.0).sqrt() };

    let mut knots = Vec::with_capacity(2 * TABLE_SEGMENTS + 1);
    knots.push(Knot {
        t: 0.0,
        z: 1.0,
        dz: 0.0,
        mass: 0.0,
    });
    let mut t = 0.0;
    let mut mass = 0.0;
    for k in 0..TABLE_SEGMENTS {
        let q0 = q_max * k as f64 / TABLE_SEGMENTS as f64;
        let q1 = q_max * (k + 1) as f64 / TABLE_SEGMENTS as f64;
        let (dt, _) = quadrature::integrate(dt_dq, q0, q1, 1e-15)?;
        let (dm, _) = quadrature::integrate(|q| (1.0 - q * q) * dt_dq(q), q0, q1, 1e-15)?;
        t += dt;
        mass += dm;
        let z = 1.0 - q1 * q1;
        knots.push(Knot {
            t,
            z,
            dz: slope(z),
            mass,
        });
    }
    // Lower branch: s runs from s_max down to 0.
    for k in (0..TABLE_SEGMENTS).rev() {
        let s0 = s_max * k as f64 / TABLE_SEGMENTS as f64;
        let s1 = s_max * (k + 1) as f64 / TABLE_SEGMENTS as f64;
        let (dt, _) = quadrature::integrate(dt_ds, s0, s1, 1e-15)?;
        let (dm, _) = quadrature::integrate(|s| s.powf(p) * dt_ds(s), s0, s1, 1e-15)?;
        t += dt;
        mass += dm;
        let z = if k == 0 { 0.0 } else { s0.powf(p) };
        knots.push(Knot {
            t,
            z,
            dz: slope(z),
            mass,
        });
    }
    if !(t.is_finite() && mass.is_finite()) {
        return Err(Error::numeric("profile table is not finite", t));
    }
    Ok(knots)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_monotonicity() {
        let p = solve_profile(0.8, 1.0, 0.01, 128).unwrap();
        assert_eq!(p.z_table.first().unwrap().1, 1.0);
        assert_eq!(p.z_table.last().unwrap().1, 0.0);
        assert!(p.transition_length.is_finite() && p.transition_length > 0.0);
        for w in p.z_table.windows(2) {
            assert!(w[1].1 < w[0].1 || (w[1].1 == 0.0 && w[0].1 == 0.0));
        }
        let n = 4000;
        let mut prev = 1.0;
        for k in 1..n {
            let z = p.z0(p.transition_length * k as f64 / n as f64);
            assert!(z < prev, "not strictly decreasing at {k}");
            prev = z;
        }
    }

    #[test]
    fn satisfies_profile_equation() {
        let p = solve_profile(0.7, 1.3, 0.02, 64).unwrap();
        let beta = p.constants.beta();
        let h = 1e-6;
        for k in 1..20 {
            let t = p.transition_length * k as f64 / 20.0;
            let dz = (p.z0(t + h) - p.z0(t - h)) / (2.0 * h);
            let z = p.z0(t);
            let rhs = -p.kappa * (z.powf(beta) - z).sqrt();
            assert!((dz - rhs).abs() < 1e-5 * p.kappa, "t = {t}: {dz} vs {rhs}");
        }
    }

    #[test]
    fn total_flux_is_theta() {
        for theta in [0.25, 1.0, 3.0] {
            let p = solve_profile(0.8, theta, 0.005, 64).unwrap();
            assert!((p.total_flux() - theta).abs() < 1e-6 * theta);
            assert!((p.flux_below(1e9) - theta / 2.0).abs() < 1e-6 * theta);
            assert!((p.flux_below(-1e9) + theta / 2.0).abs() < 1e-6 * theta);
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(solve_profile(0.8, 0.0, 0.01, 64).is_err());
        assert!(solve_profile(0.8, 1.0, 0.01, 10).is_err());
        assert!(solve_profile(0.4, 1.0, 0.01, 64).is_err());
    }
}
