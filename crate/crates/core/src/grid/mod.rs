//! Staggered (MAC) grid fields on a rectangle.
//!
//! Scalars live at cell centres (`nx × ny`), stream potentials at nodes
//! (`(nx+1) × (ny+1)`), and vector fields on faces: `ux` on the vertical
//! faces (`(nx+1) × ny`) and `uy` on the horizontal faces (`nx × (ny+1)`).
//! All arrays are indexed `[i, j]` with `i` along x and `j` along y.
//!
//! Boundary faces carry the normal trace `u·n`; the cell divergence counts
//! them, so the integral of the divergence equals the net outward flux.

mod ops;
mod poisson;
mod spectral;

pub(crate) use ops::check_same_grid;
pub use ops::{
    boundary_flux, cell_gradient, curl_adjoint, curl_apply, divergence, divergence_adjoint,
    face_dot, helmholtz_project,
};
pub use poisson::{poisson_solve, BoundaryCondition, PoissonSolver};
pub use spectral::NodeSolver;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Uniform rectangular grid `[origin, origin + (nx hx, ny hy)]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub nx: usize,
    pub ny: usize,
    pub hx: f64,
    pub hy: f64,
    pub origin: [f64; 2],
}

impl GridSpec {
    pub fn new(nx: usize, ny: usize, hx: f64, hy: f64, origin: [f64; 2]) -> Result<Self> {
        if nx < 4 || ny < 4 {
            return Err(Error::Domain(format!(
                "grid needs at least 4 cells per axis, got {nx} x {ny}"
            )));
        }
        if !(hx > 0.0 && hy > 0.0 && hx.is_finite() && hy.is_finite()) {
            return Err(Error::Domain(format!(
                "cell sizes must be positive, got hx = {hx}, hy = {hy}"
            )));
        }
        Ok(GridSpec {
            nx,
            ny,
            hx,
            hy,
            origin,
        })
    }

    /// Grid covering `[x0, x1] × [y0, y1]` with `nx × ny` cells.
    pub fn from_bounds(nx: usize, ny: usize, lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        GridSpec::new(
            nx,
            ny,
            (hi[0] - lo[0]) / nx as f64,
            (hi[1] - lo[1]) / ny as f64,
            lo,
        )
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn width(&self) -> f64 {
        self.nx as f64 * self.hx
    }

    pub fn height(&self) -> f64 {
        self.ny as f64 * self.hy
    }

    pub fn upper(&self) -> [f64; 2] {
        [
            self.origin[0] + self.width(),
            self.origin[1] + self.height(),
        ]
    }

    pub fn cell_center(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + (i as f64 + 0.5) * self.hx,
            self.origin[1] + (j as f64 + 0.5) * self.hy,
        ]
    }

    pub fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.origin[0] + i as f64 * self.hx,
            self.origin[1] + j as f64 * self.hy,
        ]
    }

    /// Does the closed disk of `radius` around `p` lie inside the domain?
    pub fn contains_disk(&self, p: [f64; 2], radius: f64) -> bool {
        let hi = self.upper();
        p[0] - radius >= self.origin[0]
            && p[0] + radius <= hi[0]
            && p[1] - radius >= self.origin[1]
            && p[1] + radius <= hi[1]
    }

    /// Index of the cell containing `p`, clamped to the grid.
    pub fn locate(&self, p: [f64; 2]) -> (usize, usize) {
        let fi = ((p[0] - self.origin[0]) / self.hx).floor();
        let fj = ((p[1] - self.origin[1]) / self.hy).floor();
        (
            fi.clamp(0.0, (self.nx - 1) as f64) as usize,
            fj.clamp(0.0, (self.ny - 1) as f64) as usize,
        )
    }
}

/// Cell-centred scalar field.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField2D {
    pub spec: GridSpec,
    pub values: Array2<f64>,
}

impl ScalarField2D {
    pub fn zeros(spec: GridSpec) -> Self {
        ScalarField2D {
            spec,
            values: Array2::zeros((spec.nx, spec.ny)),
        }
    }

    pub fn from_array(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (spec.nx, spec.ny) {
            return Err(Error::Dimension(format!(
                "cell field must be {}x{}, got {:?}",
                spec.nx,
                spec.ny,
                values.dim()
            )));
        }
        Ok(ScalarField2D { spec, values })
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = Array2::from_shape_fn((spec.nx, spec.ny), |(i, j)| f(spec.cell_center(i, j)));
        ScalarField2D { spec, values }
    }

    /// `Σ values · hx hy`
    pub fn integral(&self) -> f64 {
        self.values.sum() * self.spec.cell_area()
    }

    pub fn l1_norm(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum::<f64>() * self.spec.cell_area()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.spec.cell_area()).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Node-centred scalar field (stream potentials).
#[derive(Debug, Clone, PartialEq)]
pub struct NodeField2D {
    pub spec: GridSpec,
    pub values: Array2<f64>,
}

impl NodeField2D {
    pub fn zeros(spec: GridSpec) -> Self {
        NodeField2D {
            spec,
            values: Array2::zeros((spec.nx + 1, spec.ny + 1)),
        }
    }

    pub fn from_array(spec: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (spec.nx + 1, spec.ny + 1) {
            return Err(Error::Dimension(format!(
                "node field must be {}x{}, got {:?}",
                spec.nx + 1,
                spec.ny + 1,
                values.dim()
            )));
        }
        Ok(NodeField2D { spec, values })
    }

    pub fn from_fn(spec: GridSpec, mut f: impl FnMut([f64; 2]) -> f64) -> Self {
        let values = Array2::from_shape_fn((spec.nx + 1, spec.ny + 1), |(i, j)| f(spec.node(i, j)));
        NodeField2D { spec, values }
    }

    /// Set every boundary node to zero.
    pub fn clear_boundary(&mut self) {
        let (mx, my) = self.values.dim();
        for i in 0..mx {
            self.values[[i, 0]] = 0.0;
            self.values[[i, my - 1]] = 0.0;
        }
        for j in 0..my {
            self.values[[0, j]] = 0.0;
            self.values[[mx - 1, j]] = 0.0;
        }
    }
}

/// Face-centred vector field on the MAC grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorField2D {
    pub spec: GridSpec,
    /// x-component on vertical faces, shape `(nx+1, ny)`.
    pub ux: Array2<f64>,
    /// y-component on horizontal faces, shape `(nx, ny+1)`.
    pub uy: Array2<f64>,
}

impl VectorField2D {
    pub fn zeros(spec: GridSpec) -> Self {
        VectorField2D {
            spec,
            ux: Array2::zeros((spec.nx + 1, spec.ny)),
            uy: Array2::zeros((spec.nx, spec.ny + 1)),
        }
    }

    pub fn from_arrays(spec: GridSpec, ux: Array2<f64>, uy: Array2<f64>) -> Result<Self> {
        if ux.dim() != (spec.nx + 1, spec.ny) || uy.dim() != (spec.nx, spec.ny + 1) {
            return Err(Error::Dimension(format!(
                "face arrays must be {}x{} and {}x{}, got {:?} and {:?}",
                spec.nx + 1,
                spec.ny,
                spec.nx,
                spec.ny + 1,
                ux.dim(),
                uy.dim()
            )));
        }
        Ok(VectorField2D { spec, ux, uy })
    }

    /// Sample a continuous field at face midpoints.
    pub fn from_fn(spec: GridSpec, f: impl Fn([f64; 2]) -> [f64; 2]) -> Self {
        let ux = Array2::from_shape_fn((spec.nx + 1, spec.ny), |(i, j)| {
            let p = [
                spec.origin[0] + i as f64 * spec.hx,
                spec.origin[1] + (j as f64 + 0.5) * spec.hy,
            ];
            f(p)[0]
        });
        let uy = Array2::from_shape_fn((spec.nx, spec.ny + 1), |(i, j)| {
            let p = [
                spec.origin[0] + (i as f64 + 0.5) * spec.hx,
                spec.origin[1] + j as f64 * spec.hy,
            ];
            f(p)[1]
        });
        VectorField2D { spec, ux, uy }
    }

    /// Face-averaged vector at the centre of cell `(i, j)`.
    #[inline]
    pub fn cell_vector(&self, i: usize, j: usize) -> [f64; 2] {
        [
            0.5 * (self.ux[[i, j]] + self.ux[[i + 1, j]]),
            0.5 * (self.uy[[i, j]] + self.uy[[i, j + 1]]),
        ]
    }

    /// `|u|` at cell centres.
    pub fn magnitude(&self) -> ScalarField2D {
        let spec = self.spec;
        let values = Array2::from_shape_fn((spec.nx, spec.ny), |(i, j)| {
            let v = self.cell_vector(i, j);
            v[0].hypot(v[1])
        });
        ScalarField2D { spec, values }
    }

    /// Total mass `∫|u|` (cell sums of face-averaged magnitude).
    pub fn mass(&self) -> f64 {
        self.magnitude().integral()
    }

    pub fn max_abs(&self) -> f64 {
        self.ux
            .iter()
            .chain(self.uy.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.ux.iter().chain(self.uy.iter()).all(|v| v.is_finite())
    }

    pub fn scaled(&self, s: f64) -> Self {
        VectorField2D {
            spec: self.spec,
            ux: &self.ux * s,
            uy: &self.uy * s,
        }
    }

    /// `self += s * other`
    pub fn add_scaled(&mut self, s: f64, other: &VectorField2D) {
        self.ux.scaled_add(s, &other.ux);
        self.uy.scaled_add(s, &other.uy);
    }

    /// Zero the normal trace on the domain boundary.
    pub fn clear_normal_trace(&mut self) {
        let (nx, ny) = (self.spec.nx, self.spec.ny);
        for j in 0..ny {
            self.ux[[0, j]] = 0.0;
            self.ux[[nx, j]] = 0.0;
        }
        for i in 0..nx {
            self.uy[[i, 0]] = 0.0;
            self.uy[[i, ny]] = 0.0;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_tiny_grids() {
        assert!(GridSpec::new(3, 8, 0.1, 0.1, [0.0, 0.0]).is_err());
        assert!(GridSpec::new(8, 8, 0.0, 0.1, [0.0, 0.0]).is_err());
    }

    #[test]
    fn shape_checks() {
        let g = GridSpec::new(4, 5, 1.0, 1.0, [0.0, 0.0]).unwrap();
        assert!(ScalarField2D::from_array(g, Array2::zeros((5, 4))).is_err());
        assert!(NodeField2D::from_array(g, Array2::zeros((5, 6))).is_ok());
        assert!(
            VectorField2D::from_arrays(g, Array2::zeros((5, 5)), Array2::zeros((4, 6))).is_ok()
        );
        assert!(
            VectorField2D::from_arrays(g, Array2::zeros((4, 5)), Array2::zeros((4, 6))).is_err()
        );
    }

    #[test]
    fn locate_clamps() {
        let g = GridSpec::from_bounds(10, 10, [0.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(g.locate([0.55, 0.05]), (5, 0));
        assert_eq!(g.locate([2.0, -1.0]), (9, 0));
    }
}
