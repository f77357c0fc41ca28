use ndarray::Array2;

use super::poisson::{poisson_solve, BoundaryCondition};
use super::spectral::NodeSolver;
use super::{GridSpec, NodeField2D, ScalarField2D, VectorField2D};
use crate::error::{Error, Result};

/// Finite-volume divergence at cell centres, boundary faces included.
pub fn divergence(u: &VectorField2D) -> ScalarField2D {
    let s = u.spec;
    let values = Array2::from_shape_fn((s.nx, s.ny), |(i, j)| {
        (u.ux[[i + 1, j]] - u.ux[[i, j]]) / s.hx + (u.uy[[i, j + 1]] - u.uy[[i, j]]) / s.hy
    });
    ScalarField2D { spec: s, values }
}

/// Transpose of [`divergence`] as a plain matrix (no area weights).
pub fn divergence_adjoint(c: &ScalarField2D) -> VectorField2D {
    let s = c.spec;
    let mut out = VectorField2D::zeros(s);
    for i in 0..s.nx {
        for j in 0..s.ny {
            let v = c.values[[i, j]];
            out.ux[[i + 1, j]] += v / s.hx;
            out.ux[[i, j]] -= v / s.hx;
            out.uy[[i, j + 1]] += v / s.hy;
            out.uy[[i, j]] -= v / s.hy;
        }
    }
    out
}

/// Net outward flux `∮ u·n` through the domain boundary.
pub fn boundary_flux(u: &VectorField2D) -> f64 {
    let s = u.spec;
    let mut flux = 0.0;
    for j in 0..s.ny {
        flux += (u.ux[[s.nx, j]] - u.ux[[0, j]]) * s.hy;
    }
    for i in 0..s.nx {
        flux += (u.uy[[i, s.ny]] - u.uy[[i, 0]]) * s.hx;
    }
    flux
}

/// Gradient of a cell field onto faces.
///
/// Neumann: zero normal derivative on boundary faces. Dirichlet: the field
/// vanishes on the boundary, so boundary faces use a half-cell difference.
pub fn cell_gradient(phi: &ScalarField2D, bc: BoundaryCondition) -> VectorField2D {
    let s = phi.spec;
    let p = &phi.values;
    let mut out = VectorField2D::zeros(s);
    for j in 0..s.ny {
        for i in 1..s.nx {
            out.ux[[i, j]] = (p[[i, j]] - p[[i - 1, j]]) / s.hx;
        }
    }
    for i in 0..s.nx {
        for j in 1..s.ny {
            out.uy[[i, j]] = (p[[i, j]] - p[[i, j - 1]]) / s.hy;
        }
    }
    if bc == BoundaryCondition::DirichletZero {
        for j in 0..s.ny {
            out.ux[[0, j]] = 2.0 * p[[0, j]] / s.hx;
            out.ux[[s.nx, j]] = -2.0 * p[[s.nx - 1, j]] / s.hx;
        }
        for i in 0..s.nx {
            out.uy[[i, 0]] = 2.0 * p[[i, 0]] / s.hy;
            out.uy[[i, s.ny]] = -2.0 * p[[i, s.ny - 1]] / s.hy;
        }
    }
    out
}

/// `Rot ∇ψ = (∂ψ/∂y, -∂ψ/∂x)` by node-to-face differences.
///
/// The result is discretely divergence free: each cell's four face fluxes
/// telescope around its corners.
pub fn curl_apply(psi: &NodeField2D) -> Result<VectorField2D> {
    let s = psi.spec;
    if psi.values.dim() != (s.nx + 1, s.ny + 1) {
        return Err(Error::Dimension(format!(
            "stream potential must live on {}x{} nodes, got {:?}",
            s.nx + 1,
            s.ny + 1,
            psi.values.dim()
        )));
    }
    let p = &psi.values;
    let ux = Array2::from_shape_fn((s.nx + 1, s.ny), |(i, j)| {
        (p[[i, j + 1]] - p[[i, j]]) / s.hy
    });
    let uy = Array2::from_shape_fn((s.nx, s.ny + 1), |(i, j)| {
        -(p[[i + 1, j]] - p[[i, j]]) / s.hx
    });
    Ok(VectorField2D { spec: s, ux, uy })
}

/// Transpose of [`curl_apply`] as a plain matrix.
pub fn curl_adjoint(u: &VectorField2D) -> NodeField2D {
    let s = u.spec;
    let mut out = NodeField2D::zeros(s);
    let o = &mut out.values;
    for i in 0..=s.nx {
        for j in 0..s.ny {
            let v = u.ux[[i, j]] / s.hy;
            o[[i, j + 1]] += v;
            o[[i, j]] -= v;
        }
    }
    for i in 0..s.nx {
        for j in 0..=s.ny {
            let v = u.uy[[i, j]] / s.hx;
            o[[i + 1, j]] -= v;
            o[[i, j]] += v;
        }
    }
    out
}

/// Grid inner product `Σ_faces u v hx hy`.
pub fn face_dot(u: &VectorField2D, v: &VectorField2D) -> f64 {
    let a = u.spec.cell_area();
    let sx: f64 = u.ux.iter().zip(v.ux.iter()).map(|(a, b)| a * b).sum();
    let sy: f64 = u.uy.iter().zip(v.uy.iter()).map(|(a, b)| a * b).sum();
    (sx + sy) * a
}

/// Closest field to `u` (grid L² metric) with divergence `f` and zero
/// normal trace, built as `∇φ + Rot∇ψ`.
///
/// `φ` solves the Neumann problem `Δφ = f`; `ψ` (zero on the boundary) is
/// the least-squares fit of `Rot∇ψ` to `u - ∇φ`.
pub fn helmholtz_project(u: &VectorField2D, f: &ScalarField2D, tol: f64) -> Result<VectorField2D> {
    check_same_grid(&u.spec, &f.spec)?;
    let phi = poisson_solve(f, BoundaryCondition::NeumannZeroFlux, tol)?;
    let grad = cell_gradient(&phi, BoundaryCondition::NeumannZeroFlux);
    let mut rest = u.clone();
    rest.add_scaled(-1.0, &grad);
    let rhs = curl_adjoint(&rest);
    let psi = NodeSolver::new(u.spec).solve(&rhs, 1.0, 0.0)?;
    let mut out = curl_apply(&psi)?;
    out.add_scaled(1.0, &grad);
    Ok(out)
}

pub(crate) fn check_same_grid(a: &GridSpec, b: &GridSpec) -> Result<()> {
    if a != b {
        return Err(Error::Dimension(format!(
            "fields live on different grids: {a:?} vs {b:?}"
        )));
    }
    Ok(())
}
