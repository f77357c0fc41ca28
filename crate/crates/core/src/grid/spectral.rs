//! Fast solver for `(a L + b L²) ψ = r` on interior nodes with `ψ = 0` on
//! the boundary, where `L` is the positive five-point node Laplacian
//! (`L = Cᵀ C` for the discrete curl `C`). The sine basis diagonalizes `L`.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::Array2;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{GridSpec, NodeField2D};
use crate::error::{Error, Result};

struct Dst1 {
    n: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl Dst1 {
    fn new(n: usize, planner: &mut FftPlanner<f64>) -> Self {
        Dst1 {
            n,
            fft: planner.plan_fft_forward(2 * (n + 1)),
        }
    }

    /// Unnormalized DST-I in place: `X_k = Σ_m x_m sin(π m k / (n+1))`.
    fn apply(&self, data: &mut [f64], buf: &mut Vec<Complex<f64>>) {
        let n = self.n;
        buf.clear();
        buf.resize(2 * (n + 1), Complex::new(0.0, 0.0));
        for m in 0..n {
            buf[m + 1] = Complex::new(data[m], 0.0);
            buf[2 * (n + 1) - 1 - m] = Complex::new(-data[m], 0.0);
        }
        self.fft.process(buf);
        for k in 0..n {
            data[k] = -0.5 * buf[k + 1].im;
        }
    }
}

/// Spectral solver for node problems on one grid.
pub struct NodeSolver {
    spec: GridSpec,
    dst_x: Dst1,
    dst_y: Dst1,
    eig_x: Vec<f64>,
    eig_y: Vec<f64>,
}

impl NodeSolver {
    pub fn new(spec: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let (mx, my) = (spec.nx - 1, spec.ny - 1);
        let eig = |n: usize, h: f64| -> Vec<f64> {
            (1..n)
                .map(|k| {
                    let s = (PI * k as f64 / (2.0 * n as f64)).sin();
                    4.0 * s * s / (h * h)
                })
                .collect()
        };
        NodeSolver {
            spec,
            dst_x: Dst1::new(mx, &mut planner),
            dst_y: Dst1::new(my, &mut planner),
            eig_x: eig(spec.nx, spec.hx),
            eig_y: eig(spec.ny, spec.hy),
        }
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    fn transform(&self, a: &mut Array2<f64>) {
        let (mx, my) = a.dim();
        let mut buf = Vec::new();
        let mut line = vec![0.0; mx.max(my)];
        for j in 0..my {
            for i in 0..mx {
                line[i] = a[[i, j]];
            }
            self.dst_x.apply(&mut line[..mx], &mut buf);
            for i in 0..mx {
                a[[i, j]] = line[i];
            }
        }
        for i in 0..mx {
            for j in 0..my {
                line[j] = a[[i, j]];
            }
            self.dst_y.apply(&mut line[..my], &mut buf);
            for j in 0..my {
                a[[i, j]] = line[j];
            }
        }
    }

    /// Solve `(a L + b L²) ψ = r` on interior nodes; boundary values of `r`
    /// are ignored and `ψ` vanishes on the boundary.
    pub fn solve(&self, rhs: &NodeField2D, a: f64, b: f64) -> Result<NodeField2D> {
        let s = self.spec;
        if rhs.spec != s || rhs.values.dim() != (s.nx + 1, s.ny + 1) {
            return Err(Error::Dimension(
                "node right-hand side on a different grid".into(),
            ));
        }
        if !(a >= 0.0 && b >= 0.0 && a + b > 0.0) {
            return Err(Error::Domain(format!(
                "operator weights must be non-negative and not both zero, got a = {a}, b = {b}"
            )));
        }
        let (mx, my) = (s.nx - 1, s.ny - 1);
        let mut work = Array2::from_shape_fn((mx, my), |(i, j)| rhs.values[[i + 1, j + 1]]);
        self.transform(&mut work);
        for ((k, l), v) in work.indexed_iter_mut() {
            let lam = self.eig_x[k] + self.eig_y[l];
            *v /= a * lam + b * lam * lam;
        }
        self.transform(&mut work);
        let norm = 4.0 / ((mx + 1) as f64 * (my + 1) as f64);
        let mut out = NodeField2D::zeros(s);
        for ((i, j), v) in work.indexed_iter() {
            out.values[[i + 1, j + 1]] = v * norm;
        }
        Ok(out)
    }
}

/// Positive five-point node Laplacian applied on interior nodes, with the
/// boundary treated as zero.
#[cfg(test)]
pub(crate) fn node_laplacian(psi: &NodeField2D) -> NodeField2D {
    let s = psi.spec;
    let p = &psi.values;
    let mut out = NodeField2D::zeros(s);
    for i in 1..s.nx {
        for j in 1..s.ny {
            out.values[[i, j]] = (2.0 * p[[i, j]] - p[[i - 1, j]] - p[[i + 1, j]]) / (s.hx * s.hx)
                + (2.0 * p[[i, j]] - p[[i, j - 1]] - p[[i, j + 1]]) / (s.hy * s.hy);
        }
    }
    out
}
