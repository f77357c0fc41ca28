//! Discrete approximating energy
//! `E(u) = eps^(alpha-1) ∫ rho_delta(|u|) + eps^(alpha+1) ∫ |∇u|^2`
//! with `rho_delta(s) = (s^2 + delta^2)^(beta/2) - delta^beta`.
//!
//! The concave term is evaluated at cell centres from face-averaged
//! components. The Dirichlet term is the full Jacobian norm built from face
//! differences of `ux` and `uy`; cross derivatives live on grid edges and
//! are shared among the adjacent cells (trapezoidal weights on the
//! boundary columns), so no ghost values are needed.

use ndarray::Array2;

use crate::constants::{exponents, ExponentSet};
use crate::error::{Error, Result};
use crate::grid::{
    cell_gradient, curl_adjoint, curl_apply, BoundaryCondition, NodeField2D, ScalarField2D,
    VectorField2D,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyParams {
    pub alpha: f64,
    pub eps: f64,
    /// Regularization of `|u|` near zero; `0` gives the exact integrand.
    pub delta: f64,
    pub exponents: ExponentSet,
}

impl EnergyParams {
    pub fn new(alpha: f64, eps: f64, delta: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::Domain(format!("eps must be > 0, got {eps}")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::Domain(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(EnergyParams {
            alpha,
            eps,
            delta,
            exponents: exponents(alpha, 2)?,
        })
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        EnergyParams::new(self.alpha, self.eps, delta)
    }

    pub fn beta(&self) -> f64 {
        self.exponents.beta
    }

    /// Weight of the concave term, `eps^(alpha-1)`.
    pub fn concave_weight(&self) -> f64 {
        self.eps.powf(self.exponents.gamma1)
    }

    /// Weight of the Dirichlet term, `eps^(alpha+1)`.
    pub fn dirichlet_weight(&self) -> f64 {
        self.eps.powf(self.exponents.gamma2)
    }
}

/// Energy split into its two terms plus the per-cell density `mu_eps`.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyBreakdown {
    pub concave_term: f64,
    pub dirichlet_term: f64,
    pub total: f64,
    /// Energy per unit area in each cell.
    pub density: ScalarField2D,
}

struct Evaluator<'a> {
    u: &'a VectorField2D,
    beta: f64,
    delta: f64,
    delta_beta: f64,
    wc: f64,
    wd: f64,
    area: f64,
}

impl<'a> Evaluator<'a> {
    fn new(u: &'a VectorField2D, p: &EnergyParams) -> Self {
        let beta = p.beta();
        Evaluator {
            u,
            beta,
            delta: p.delta,
            delta_beta: if p.delta > 0.0 {
                p.delta.powf(beta)
            } else {
                0.0
            },
            wc: p.concave_weight(),
            wd: p.dirichlet_weight(),
            area: u.spec.cell_area(),
        }
    }

    #[inline]
    fn rho(&self, s2: f64) -> f64 {
        if self.delta > 0.0 {
            (s2 + self.delta * self.delta).powf(0.5 * self.beta) - self.delta_beta
        } else if s2 > 0.0 {
            s2.powf(0.5 * self.beta)
        } else {
            0.0
        }
    }

    /// `rho'(s) / s` as a function of `s^2`.
    #[inline]
    fn rho_slope(&self, s2: f64) -> f64 {
        self.beta * (s2 + self.delta * self.delta).powf(0.5 * self.beta - 1.0)
    }

    /// Visit every Dirichlet difference: `(value, weight, cells)` where the
    /// weighted square is shared equally among `cells`.
    fn for_each_difference(&self, mut visit: impl FnMut(Difference)) {
        let s = self.u.spec;
        let (nx, ny) = (s.nx, s.ny);
        let (ux, uy) = (&self.u.ux, &self.u.uy);
        for i in 0..nx {
            for j in 0..ny {
                visit(Difference {
                    value: (ux[[i + 1, j]] - ux[[i, j]]) / s.hx,
                    weight: 1.0,
                    faces: [Face::X(i + 1, j), Face::X(i, j)],
                    scale: 1.0 / s.hx,
                    cells: Cells::one(i, j),
                });
                visit(Difference {
                    value: (uy[[i, j + 1]] - uy[[i, j]]) / s.hy,
                    weight: 1.0,
                    faces: [Face::Y(i, j + 1), Face::Y(i, j)],
                    scale: 1.0 / s.hy,
                    cells: Cells::one(i, j),
                });
            }
        }
        for i in 0..=nx {
            let edge = i == 0 || i == nx;
            for j in 0..ny - 1 {
                let mut cells = Cells::default();
                for ci in [i.wrapping_sub(1), i] {
                    if ci < nx {
                        cells.push(ci, j);
                        cells.push(ci, j + 1);
                    }
                }
                visit(Difference {
                    value: (ux[[i, j + 1]] - ux[[i, j]]) / s.hy,
                    weight: if edge { 0.5 } else { 1.0 },
                    faces: [Face::X(i, j + 1), Face::X(i, j)],
                    scale: 1.0 / s.hy,
                    cells,
                });
            }
        }
        for j in 0..=ny {
            let edge = j == 0 || j == ny;
            for i in 0..nx - 1 {
                let mut cells = Cells::default();
                for cj in [j.wrapping_sub(1), j] {
                    if cj < ny {
                        cells.push(i, cj);
                        cells.push(i + 1, cj);
                    }
                }
                visit(Difference {
                    value: (uy[[i + 1, j]] - uy[[i, j]]) / s.hx,
                    weight: if edge { 0.5 } else { 1.0 },
                    faces: [Face::Y(i + 1, j), Face::Y(i, j)],
                    scale: 1.0 / s.hx,
                    cells,
                });
            }
        }
    }

    fn breakdown(&self) -> EnergyBreakdown {
        let s = self.u.spec;
        let mut cell_energy = Array2::<f64>::zeros((s.nx, s.ny));
        let mut concave = 0.0;
        for i in 0..s.nx {
            for j in 0..s.ny {
                let v = self.u.cell_vector(i, j);
                let e = self.wc * self.rho(v[0] * v[0] + v[1] * v[1]) * self.area;
                cell_energy[[i, j]] = e;
                concave += e;
            }
        }
        let mut dirichlet = 0.0;
        self.for_each_difference(|d| {
            let e = self.wd * d.weight * d.value * d.value * self.area;
            dirichlet += e;
            let share = e / d.cells.len as f64;
            for k in 0..d.cells.len {
                let (ci, cj) = d.cells.items[k];
                cell_energy[[ci, cj]] += share;
            }
        });
        let density = ScalarField2D {
            spec: s,
            values: cell_energy / self.area,
        };
        EnergyBreakdown {
            concave_term: concave,
            dirichlet_term: dirichlet,
            total: concave + dirichlet,
            density,
        }
    }

    fn gradient(&self) -> (f64, VectorField2D) {
        let s = self.u.spec;
        let mut g = VectorField2D::zeros(s);
        let mut total = 0.0;
        for i in 0..s.nx {
            for j in 0..s.ny {
                let v = self.u.cell_vector(i, j);
                let s2 = v[0] * v[0] + v[1] * v[1];
                total += self.wc * self.rho(s2) * self.area;
                let k = 0.5 * self.wc * self.area * self.rho_slope(s2);
                g.ux[[i, j]] += k * v[0];
                g.ux[[i + 1, j]] += k * v[0];
                g.uy[[i, j]] += k * v[1];
                g.uy[[i, j + 1]] += k * v[1];
            }
        }
        self.for_each_difference(|d| {
            let w = self.wd * d.weight * self.area;
            total += w * d.value * d.value;
            let k = 2.0 * w * d.value * d.scale;
            for (face, sign) in [(d.faces[0], k), (d.faces[1], -k)] {
                match face {
                    Face::X(i, j) => g.ux[[i, j]] += sign,
                    Face::Y(i, j) => g.uy[[i, j]] += sign,
                }
            }
        });
        (total, g)
    }
}

#[derive(Clone, Copy)]
enum Face {
    X(usize, usize),
    Y(usize, usize),
}

#[derive(Default, Clone, Copy)]
struct Cells {
    items: [(usize, usize); 4],
    len: usize,
}

impl Cells {
    fn one(i: usize, j: usize) -> Self {
        let mut c = Cells::default();
        c.push(i, j);
        c
    }

    fn push(&mut self, i: usize, j: usize) {
        self.items[self.len] = (i, j);
        self.len += 1;
    }
}

struct Difference {
    value: f64,
    weight: f64,
    faces: [Face; 2],
    scale: f64,
    cells: Cells,
}

/// Evaluate the energy and its per-cell density.
pub fn energy(u: &VectorField2D, p: &EnergyParams) -> EnergyBreakdown {
    Evaluator::new(u, p).breakdown()
}

/// Total energy and its partial derivatives with respect to every face value.
///
/// Requires `delta > 0`: the derivative of `|u|^beta` is singular at zero.
pub fn energy_gradient_u(u: &VectorField2D, p: &EnergyParams) -> Result<(f64, VectorField2D)> {
    if !(p.delta > 0.0) {
        return Err(Error::Precondition(
            "energy gradient needs delta > 0: d|u|^beta/du = beta |u|^(beta-2) u is singular at u = 0"
                .into(),
        ));
    }
    Ok(Evaluator::new(u, p).gradient())
}

/// Field `∇φ + Rot∇ψ` for a cell potential `φ` (Neumann gradient) and a
/// node potential `ψ`.
pub fn compose_field(psi: &NodeField2D, phi: &ScalarField2D) -> Result<VectorField2D> {
    crate::grid::check_same_grid(&psi.spec, &phi.spec)?;
    let mut u = curl_apply(psi)?;
    u.add_scaled(1.0, &cell_gradient(phi, BoundaryCondition::NeumannZeroFlux));
    Ok(u)
}

/// Partial derivatives of `ψ ↦ E(∇φ + Rot∇ψ)` at every node.
pub fn energy_gradient_psi(
    psi: &NodeField2D,
    phi: &ScalarField2D,
    p: &EnergyParams,
) -> Result<NodeField2D> {
    let u = compose_field(psi, phi)?;
    let (_, g) = energy_gradient_u(&u, p)?;
    Ok(curl_adjoint(&g))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::from_bounds(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_field_has_zero_energy() {
        let p = EnergyParams::new(0.8, 0.01, 0.05).unwrap();
        let e = energy(&VectorField2D::zeros(unit_grid(8)), &p);
        assert_eq!(e.total, 0.0);
    }

    #[test]
    fn constant_field_pays_only_concave_term() {
        let p = EnergyParams::new(0.8, 0.01, 0.0).unwrap();
        let u = VectorField2D::from_fn(unit_grid(10), |_| [1.0, 0.0]);
        let e = energy(&u, &p);
        assert!((e.concave_term - 0.01f64.powf(-0.2)).abs() < 1e-12);
        assert_eq!(e.dirichlet_term, 0.0);
        assert!((e.total - 0.01f64.powf(-0.2)).abs() < 1e-12);
    }

    #[test]
    fn density_sums_to_total() {
        let g = GridSpec::new(9, 7, 0.1, 0.15, [0.0, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut u = VectorField2D::zeros(g);
        u.ux.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
        u.uy.mapv_inplace(|_| rng.gen_range(-2.0..2.0));
        let p = EnergyParams::new(0.7, 0.05, 0.01).unwrap();
        let e = energy(&u, &p);
        assert!((e.density.integral() - e.total).abs() <= 1e-12 * e.total);
        assert!(e.density.values.iter().all(|v| *v >= 0.0));
        assert!((e.concave_term + e.dirichlet_term - e.total).abs() <= 1e-14 * e.total);
    }

    #[test]
    fn homogeneity_in_amplitude() {
        let g = unit_grid(12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut u = VectorField2D::zeros(g);
        u.ux.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        u.uy.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        let p = EnergyParams::new(0.8, 0.02, 0.0).unwrap();
        let e1 = energy(&u, &p);
        let s = 2.7;
        let e2 = energy(&u.scaled(s), &p);
        let beta = p.beta();
        assert!((e2.concave_term / e1.concave_term - s.powf(beta)).abs() < 1e-12);
        assert!((e2.dirichlet_term / e1.dirichlet_term - s * s).abs() < 1e-12);
    }

    #[test]
    fn gradient_requires_positive_delta() {
        let g = unit_grid(6);
        let p = EnergyParams::new(0.8, 0.02, 0.0).unwrap();
        let psi = NodeField2D::zeros(g);
        let phi = ScalarField2D::zeros(g);
        let err = energy_gradient_psi(&psi, &phi, &p).unwrap_err();
        assert!(matches!(err, Error::Precondition(ref m) if m.contains("singular")));
    }

    #[test]
    fn gradient_of_zero_is_zero() {
        let g = unit_grid(6);
        let p = EnergyParams::new(0.8, 0.02, 0.05).unwrap();
        let grad =
            energy_gradient_psi(&NodeField2D::zeros(g), &ScalarField2D::zeros(g), &p).unwrap();
        assert_eq!(grad.values.iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
    }

    #[test]
    fn gradient_matches_total_from_breakdown() {
        let g = unit_grid(10);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut u = VectorField2D::zeros(g);
        u.ux.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        u.uy.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
        let p = EnergyParams::new(0.75, 0.03, 0.05).unwrap();
        let (t, _) = energy_gradient_u(&u, &p).unwrap();
        assert!((t - energy(&u, &p).total).abs() < 1e-12 * t);
    }
}
