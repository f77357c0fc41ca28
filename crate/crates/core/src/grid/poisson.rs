//! Cell-centred Poisson solver: flexible conjugate gradients preconditioned
//! by a geometric multigrid V-cycle with red-black Gauss–Seidel smoothing.
//!
//! Grids are coarsened while both cell counts are even; the coarsest level
//! is solved by plain CG, so grids that cannot be coarsened fall back to CG.

use super::{GridSpec, ScalarField2D};
use crate::error::{Error, Result};

/// Boundary condition for the cell-centred Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryCondition {
    /// `∂φ/∂n = 0`; solutions are normalized to zero mean.
    NeumannZeroFlux,
    /// `φ = 0` on the boundary faces.
    DirichletZero,
}

const MAX_OUTER: usize = 500;
const SMOOTH_SWEEPS: usize = 2;
const MIN_COARSE: usize = 4;

#[derive(Debug, Clone)]
struct Level {
    nx: usize,
    ny: usize,
    ihx2: f64,
    ihy2: f64,
    bc: BoundaryCondition,
    diag: Vec<f64>,
}

impl Level {
    fn new(nx: usize, ny: usize, hx: f64, hy: f64, bc: BoundaryCondition) -> Self {
        let ihx2 = 1.0 / (hx * hx);
        let ihy2 = 1.0 / (hy * hy);
        let side = |k: usize, n: usize| -> f64 {
            let inner = (k > 0) as u32 + (k + 1 < n) as u32;
            let edges = 2 - inner;
            match bc {
                BoundaryCondition::NeumannZeroFlux => inner as f64,
                BoundaryCondition::DirichletZero => inner as f64 + 2.0 * edges as f64,
            }
        };
        let mut diag = vec![0.0; nx * ny];
        for i in 0..nx {
            for j in 0..ny {
                diag[i * ny + j] = side(i, nx) * ihx2 + side(j, ny) * ihy2;
            }
        }
        Level {
            nx,
            ny,
            ihx2,
            ihy2,
            bc,
            diag,
        }
    }

    fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    fn neighbour_sum(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let ny = self.ny;
        let k = i * ny + j;
        let mut s = 0.0;
        if i > 0 {
            s += x[k - ny] * self.ihx2;
        }
        if i + 1 < self.nx {
            s += x[k + ny] * self.ihx2;
        }
        if j > 0 {
            s += x[k - 1] * self.ihy2;
        }
        if j + 1 < ny {
            s += x[k + 1] * self.ihy2;
        }
        s
    }

    /// `out = A x` with `A = -Δ_h`.
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        for i in 0..self.nx {
            for j in 0..self.ny {
                let k = i * self.ny + j;
                out[k] = self.diag[k] * x[k] - self.neighbour_sum(x, i, j);
            }
        }
    }

    fn sweep(&self, x: &mut [f64], b: &[f64], colour: usize) {
        for i in 0..self.nx {
            let start = (colour + i) % 2;
            for j in (start..self.ny).step_by(2) {
                let k = i * self.ny + j;
                x[k] = (b[k] + self.neighbour_sum(x, i, j)) / self.diag[k];
            }
        }
    }

    fn coarsen(&self) -> Option<Level> {
        if !self.nx.is_multiple_of(2) || !self.ny.is_multiple_of(2) {
            return None;
        }
        let (cx, cy) = (self.nx / 2, self.ny / 2);
        if cx < MIN_COARSE || cy < MIN_COARSE {
            return None;
        }
        let hx = 2.0 / self.ihx2.sqrt();
        let hy = 2.0 / self.ihy2.sqrt();
        Some(Level::new(cx, cy, hx, hy, self.bc))
    }

    fn is_singular(&self) -> bool {
        self.bc == BoundaryCondition::NeumannZeroFlux
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(x: &mut [f64]) {
    let m = x.iter().sum::<f64>() / x.len() as f64;
    x.iter_mut().for_each(|v| *v -= m);
}

/// Reusable solver for one grid and boundary condition.
#[derive(Debug, Clone)]
pub struct PoissonSolver {
    levels: Vec<Level>,
    spec: GridSpec,
}

impl PoissonSolver {
    pub fn new(spec: GridSpec, bc: BoundaryCondition) -> Self {
        let mut levels = vec![Level::new(spec.nx, spec.ny, spec.hx, spec.hy, bc)];
        while let Some(c) = levels.last().unwrap().coarsen() {
            levels.push(c);
        }
        PoissonSolver { levels, spec }
    }

    pub fn bc(&self) -> BoundaryCondition {
        self.levels[0].bc
    }

    fn coarse_solve(level: &Level, b: &[f64]) -> Vec<f64> {
        let n = level.len();
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        if level.is_singular() {
            remove_mean(&mut r);
        }
        let bnorm = dot(&r, &r).sqrt();
        if bnorm == 0.0 {
            return x;
        }
        let mut p = r.clone();
        let mut q = vec![0.0; n];
        let mut rr = dot(&r, &r);
        for _ in 0..(4 * n).max(50) {
            level.apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 {
                break;
            }
            let a = rr / pq;
            for k in 0..n {
                x[k] += a * p[k];
                r[k] -= a * q[k];
            }
            let rr_new = dot(&r, &r);
            if rr_new.sqrt() <= 1e-13 * bnorm {
                break;
            }
            let beta = rr_new / rr;
            rr = rr_new;
            for k in 0..n {
                p[k] = r[k] + beta * p[k];
            }
        }
        if level.is_singular() {
            remove_mean(&mut x);
        }
        x
    }

    fn restrict(fine: &Level, coarse: &Level, r: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; coarse.len()];
        for ci in 0..coarse.nx {
            for cj in 0..coarse.ny {
                let mut s = 0.0;
                for a in 0..2 {
                    for b in 0..2 {
                        s += r[(2 * ci + a) * fine.ny + 2 * cj + b];
                    }
                }
                out[ci * coarse.ny + cj] = 0.25 * s;
            }
        }
        out
    }

    fn prolong_add(fine: &Level, coarse: &Level, e: &[f64], x: &mut [f64]) {
        let sign = match fine.bc {
            BoundaryCondition::NeumannZeroFlux => 1.0,
            BoundaryCondition::DirichletZero => -1.0,
        };
        let at = |ci: isize, cj: isize| -> f64 {
            let inside_i = ci >= 0 && (ci as usize) < coarse.nx;
            let inside_j = cj >= 0 && (cj as usize) < coarse.ny;
            let i = ci.clamp(0, coarse.nx as isize - 1) as usize;
            let j = cj.clamp(0, coarse.ny as isize - 1) as usize;
            let v = e[i * coarse.ny + j];
            let flips = (!inside_i) as i32 + (!inside_j) as i32;
            if flips % 2 == 1 {
                sign * v
            } else {
                v
            }
        };
        for fi in 0..fine.nx {
            let ci = (fi / 2) as isize;
            let di = if fi % 2 == 0 { -1 } else { 1 };
            for fj in 0..fine.ny {
                let cj = (fj / 2) as isize;
                let dj = if fj % 2 == 0 { -1 } else { 1 };
                let v = 0.5625 * at(ci, cj)
                    + 0.1875 * (at(ci + di, cj) + at(ci, cj + dj))
                    + 0.0625 * at(ci + di, cj + dj);
                x[fi * fine.ny + fj] += v;
            }
        }
    }

    fn vcycle(&self, depth: usize, b: &[f64]) -> Vec<f64> {
        let level = &self.levels[depth];
        if depth + 1 == self.levels.len() {
            return Self::coarse_solve(level, b);
        }
        let mut x = vec![0.0; level.len()];
        for _ in 0..SMOOTH_SWEEPS {
            level.sweep(&mut x, b, 0);
            level.sweep(&mut x, b, 1);
        }
        let mut ax = vec![0.0; level.len()];
        level.apply(&x, &mut ax);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(bb, a)| bb - a).collect();
        let coarse = &self.levels[depth + 1];
        let rc = Self::restrict(level, coarse, &r);
        let ec = self.vcycle(depth + 1, &rc);
        Self::prolong_add(level, coarse, &ec, &mut x);
        for _ in 0..SMOOTH_SWEEPS {
            level.sweep(&mut x, b, 1);
            level.sweep(&mut x, b, 0);
        }
        if level.is_singular() {
            remove_mean(&mut x);
        }
        x
    }

    /// Solve `Δ_h φ = rhs` to relative residual `tol`.
    pub fn solve(&self, rhs: &ScalarField2D, tol: f64) -> Result<ScalarField2D> {
        if rhs.spec != self.spec {
            return Err(Error::Dimension(
                "right-hand side on a different grid".into(),
            ));
        }
        if !rhs.is_finite() {
            return Err(Error::Domain("right-hand side contains NaN or Inf".into()));
        }
        let top = &self.levels[0];
        let mut b: Vec<f64> = rhs.values.iter().map(|v| -v).collect();
        if top.is_singular() {
            let total = rhs.values.sum();
            let l1: f64 = rhs.values.iter().map(|v| v.abs()).sum();
            if total.abs() > tol.max(1e-12) * l1 {
                return Err(Error::Compatibility(format!(
                    "Neumann data must integrate to zero: imbalance {:e} (relative {:e})",
                    total * self.spec.cell_area(),
                    total.abs() / l1
                )));
            }
            remove_mean(&mut b);
        }
        let n = top.len();
        let bnorm = dot(&b, &b).sqrt();
        let mut x = vec![0.0; n];
        if bnorm == 0.0 {
            return self.wrap(x);
        }
        let mut r = b.clone();
        let mut z = self.vcycle(0, &r);
        let mut p = z.clone();
        let mut q = vec![0.0; n];
        let mut rz = dot(&r, &z);
        let mut rnorm = bnorm;
        for _ in 0..MAX_OUTER {
            top.apply(&p, &mut q);
            let a = rz / dot(&p, &q);
            for k in 0..n {
                x[k] += a * p[k];
                r[k] -= a * q[k];
            }
            rnorm = dot(&r, &r).sqrt();
            if rnorm <= tol * bnorm {
                if top.is_singular() {
                    remove_mean(&mut x);
                }
                return self.wrap(x);
            }
            let z_new = self.vcycle(0, &r);
            let beta = (dot(&r, &z_new) - dot(&r, &z)) / rz;
            rz = dot(&r, &z_new);
            z = z_new;
            for k in 0..n {
                p[k] = z[k] + beta * p[k];
            }
        }
        Err(Error::numeric(
            "Poisson solve did not reach tolerance",
            rnorm / bnorm,
        ))
    }

    fn wrap(&self, x: Vec<f64>) -> Result<ScalarField2D> {
        let values = ndarray::Array2::from_shape_vec((self.spec.nx, self.spec.ny), x)
            .map_err(|e| Error::Dimension(e.to_string()))?;
        ScalarField2D::from_array(self.spec, values)
    }
}

/// One-shot Poisson solve `Δ_h φ = rhs`.
pub fn poisson_solve(
    rhs: &ScalarField2D,
    bc: BoundaryCondition,
    tol: f64,
) -> Result<ScalarField2D> {
    PoissonSolver::new(rhs.spec, bc).solve(rhs, tol)
}
