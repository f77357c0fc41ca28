//! Slice fluxes, the dyadic atomicity functional and run reports.

use crate::constants::profile_constants;
use crate::constants::DEFAULT_QUADRATURE_TOL;
use crate::energy::{energy, EnergyParams};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, VectorField2D};
use crate::solver::{SolveResult, SolverConfig};

/// Largest supported dyadic level (`2^24` bins).
pub const MAX_DYADIC_LEVEL: u32 = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

/// Axis-aligned rectangle `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub lo: [f64; 2],
    pub hi: [f64; 2],
}

impl Window {
    pub fn new(lo: [f64; 2], hi: [f64; 2]) -> Result<Self> {
        if !(lo[0] < hi[0] && lo[1] < hi[1]) {
            return Err(Error::Geometry(format!("empty window {lo:?} .. {hi:?}")));
        }
        Ok(Window { lo, hi })
    }

    fn contains(&self, p: [f64; 2]) -> bool {
        (self.lo[0]..=self.hi[0]).contains(&p[0]) && (self.lo[1]..=self.hi[1]).contains(&p[1])
    }

    fn inside(&self, g: &GridSpec) -> bool {
        let up = g.upper();
        let tol = 1e-12 * (g.width() + g.height());
        self.lo[0] >= g.origin[0] - tol
            && self.lo[1] >= g.origin[1] - tol
            && self.hi[0] <= up[0] + tol
            && self.hi[1] <= up[1] + tol
    }
}

/// Transverse flux of one velocity component along a family of grid lines.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceProfile {
    pub axis: Axis,
    pub positions: Vec<f64>,
    pub flux: Vec<f64>,
    /// Distance between consecutive lines.
    pub spacing: f64,
}

impl SliceProfile {
    /// Sum of jumps between consecutive slices.
    pub fn total_variation(&self) -> f64 {
        self.flux.windows(2).map(|w| (w[1] - w[0]).abs()).sum()
    }
}

/// For every face line inside `window` normal to `axis`, the integral of the
/// matching component over the transverse extent of the window.
///
/// Face values are read directly, so in divergence-free regions adjacent
/// slices carry exactly the same flux.
pub fn slice_flux(u: &VectorField2D, axis: Axis, window: &Window) -> Result<SliceProfile> {
    let g = u.spec;
    if !window.inside(&g) {
        return Err(Error::Geometry(format!(
            "window {:?} .. {:?} leaves the grid",
            window.lo, window.hi
        )));
    }
    let mut positions = Vec::new();
    let mut flux = Vec::new();
    match axis {
        Axis::X => {
            for i in 0..=g.nx {
                let x = g.origin[0] + i as f64 * g.hx;
                if !(window.lo[0]..=window.hi[0]).contains(&x) {
                    continue;
                }
                let mut s = 0.0;
                for j in 0..g.ny {
                    if window.contains([x, g.cell_center(0, j)[1]]) {
                        s += u.ux[[i, j]] * g.hy;
                    }
                }
                positions.push(x);
                flux.push(s);
            }
        }
        Axis::Y => {
            for j in 0..=g.ny {
                let y = g.origin[1] + j as f64 * g.hy;
                if !(window.lo[1]..=window.hi[1]).contains(&y) {
                    continue;
                }
                let mut s = 0.0;
                for i in 0..g.nx {
                    if window.contains([g.cell_center(i, 0)[0], y]) {
                        s += u.uy[[i, j]] * g.hx;
                    }
                }
                positions.push(y);
                flux.push(s);
            }
        }
    }
    if positions.is_empty() {
        return Err(Error::Geometry("window contains no grid lines".into()));
    }
    let spacing = match axis {
        Axis::X => g.hx,
        Axis::Y => g.hy,
    };
    Ok(SliceProfile {
        axis,
        positions,
        flux,
        spacing,
    })
}

/// `∫ |m(x)|^alpha dx` by the rectangle rule.
pub fn slice_alpha_bound(s: &SliceProfile, alpha: f64) -> f64 {
    s.flux.iter().map(|m| m.abs().powf(alpha)).sum::<f64>() * s.spacing
}

/// Level sums `Σ_i |ν(I_{i,n})|^alpha` for `n = 0..=n_max` over the
/// half-open dyadic bins `[i 2^-n, (i+1) 2^-n)`.
///
/// `atoms` holds `(position, signed mass)` pairs on `[0, 1)`.
pub fn dyadic_level_sums(atoms: &[(f64, f64)], alpha: f64, n_max: u32) -> Result<Vec<f64>> {
    if n_max > MAX_DYADIC_LEVEL {
        return Err(Error::Domain(format!(
            "dyadic level {n_max} exceeds {MAX_DYADIC_LEVEL}"
        )));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!(
            "alpha must lie in (0, 1], got {alpha}"
        )));
    }
    let mut keyed = Vec::with_capacity(atoms.len());
    for &(x, m) in atoms {
        if !(0.0..1.0).contains(&x) || !m.is_finite() {
            return Err(Error::Domain(format!("atom ({x}, {m}) outside [0, 1)")));
        }
        keyed.push(((x * (1u64 << n_max) as f64).floor() as u64, m));
    }
    keyed.sort_by_key(|k| k.0);

    let mut sums = Vec::with_capacity(n_max as usize + 1);
    for n in 0..=n_max {
        let shift = n_max - n;
        let mut total = 0.0;
        let mut k = 0;
        while k < keyed.len() {
            let bin = keyed[k].0 >> shift;
            let mut mass = 0.0;
            while k < keyed.len() && keyed[k].0 >> shift == bin {
                mass += keyed[k].1;
                k += 1;
            }
            total += mass.abs().powf(alpha);
        }
        sums.push(total);
    }
    Ok(sums)
}

/// `max_{n ≤ n_max} Σ_i |ν(I_{i,n})|^alpha`.
pub fn galpha_dyadic(atoms: &[(f64, f64)], alpha: f64, n_max: u32) -> Result<f64> {
    Ok(dyadic_level_sums(atoms, alpha, n_max)?
        .into_iter()
        .fold(0.0, f64::max))
}

/// Window in which the slice bound is compared to the local energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportWindow {
    pub axis: Axis,
    pub window: Window,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceRatio {
    pub window: ReportWindow,
    pub bound: f64,
    pub window_energy: f64,
    /// `c · bound / window_energy`; 0 when the window carries no energy.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub eps: f64,
    pub concave_term: f64,
    pub dirichlet_term: f64,
    pub total: f64,
    pub mass: f64,
    pub div_residual: f64,
    pub slices: Vec<SliceRatio>,
}

impl RunReport {
    pub fn csv_header() -> &'static str {
        "eps,concave,dirichlet,total,mass,div_residual"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.17e},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
            self.eps,
            self.concave_term,
            self.dirichlet_term,
            self.total,
            self.mass,
            self.div_residual
        )
    }

    pub fn summary(&self) -> String {
        let mut s = format!(
            "eps            {:.6e}\nconcave term   {:.6e}\ndirichlet term {:.6e}\ntotal energy   {:.6e}\nmass           {:.6e}\ndiv residual   {:.3e}\n",
            self.eps, self.concave_term, self.dirichlet_term, self.total, self.mass, self.div_residual
        );
        if self.dirichlet_term > 0.0 {
            s += &format!(
                "term ratio     {:.4}\n",
                self.concave_term / self.dirichlet_term
            );
        }
        for r in &self.slices {
            s += &format!(
                "slice {:?} {:?}..{:?}: bound {:.6e}, energy {:.6e}, ratio {:.4}\n",
                r.window.axis,
                r.window.window.lo,
                r.window.window.hi,
                r.bound,
                r.window_energy,
                r.ratio
            );
        }
        s
    }
}

/// Energy terms at the final eps (exact integrand), mass, residual and slice
/// ratios of a finished solve.
pub fn run_report(
    r: &SolveResult,
    cfg: &SolverConfig,
    windows: &[ReportWindow],
) -> Result<RunReport> {
    let eps = *cfg
        .eps_schedule
        .last()
        .ok_or_else(|| Error::Domain("empty eps schedule".into()))?;
    field_report(&r.u, cfg.alpha, eps, r.div_residual, windows)
}

/// Same as [`run_report`] for an arbitrary field.
pub fn field_report(
    u: &VectorField2D,
    alpha: f64,
    eps: f64,
    div_residual: f64,
    windows: &[ReportWindow],
) -> Result<RunReport> {
    let b = energy(u, &EnergyParams::new(alpha, eps, 0.0)?);
    let c = profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?.c;
    let g = u.spec;
    let mut slices = Vec::with_capacity(windows.len());
    for w in windows {
        let s = slice_flux(u, w.axis, &w.window)?;
        let bound = slice_alpha_bound(&s, alpha);
        let mut local = 0.0;
        for i in 0..g.nx {
            for j in 0..g.ny {
                if w.window.contains(g.cell_center(i, j)) {
                    local += b.density.values[[i, j]];
                }
            }
        }
        local *= g.cell_area();
        slices.push(SliceRatio {
            window: *w,
            bound,
            window_energy: local,
            ratio: if local > 0.0 { c * bound / local } else { 0.0 },
        });
    }
    Ok(RunReport {
        eps,
        concave_term: b.concave_term,
        dirichlet_term: b.dirichlet_term,
        total: b.total,
        mass: u.mass(),
        div_residual,
        slices,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridSpec {
        GridSpec::from_bounds(32, 16, [0.0, 0.0], [2.0, 1.0]).unwrap()
    }

    #[test]
    fn zero_field_slices() {
        let u = VectorField2D::zeros(grid());
        let w = Window::new([0.5, 0.0], [1.5, 1.0]).unwrap();
        let s = slice_flux(&u, Axis::X, &w).unwrap();
        assert_eq!(s.positions.len(), 17);
        assert!(s.flux.iter().all(|&m| m == 0.0));
        assert_eq!(slice_alpha_bound(&s, 0.8), 0.0);
    }

    #[test]
    fn uniform_flow_has_constant_flux() {
        let u = VectorField2D::from_fn(grid(), |_| [0.7, 0.0]);
        let w = Window::new([0.25, 0.0], [1.75, 1.0]).unwrap();
        let s = slice_flux(&u, Axis::X, &w).unwrap();
        for m in &s.flux {
            assert!((m - 0.7).abs() < 1e-14);
        }
        let len = s.positions.len() as f64 * s.spacing;
        assert!((slice_alpha_bound(&s, 0.8) - 0.7f64.powf(0.8) * len).abs() < 1e-13);
        assert_eq!(s.total_variation(), 0.0);
    }

    #[test]
    fn rejects_bad_windows() {
        let u = VectorField2D::zeros(grid());
        assert!(matches!(
            Window::new([1.0, 0.0], [1.0, 1.0]),
            Err(Error::Geometry(_))
        ));
        let w = Window::new([1.0, 0.0], [3.0, 1.0]).unwrap();
        assert!(matches!(
            slice_flux(&u, Axis::Y, &w),
            Err(Error::Geometry(_))
        ));
        let w = Window::new([0.01, 0.01], [0.02, 0.02]).unwrap();
        assert!(matches!(
            slice_flux(&u, Axis::X, &w),
            Err(Error::Geometry(_))
        ));
    }

    #[test]
    fn dyadic_examples() {
        let atoms = [(0.5, 1.0)];
        for v in dyadic_level_sums(&atoms, 0.8, 10).unwrap() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        let atoms = [(0.1, 0.5), (0.37, 0.3), (0.81, 0.2)];
        let want = 0.5f64.powf(0.8) + 0.3f64.powf(0.8) + 0.2f64.powf(0.8);
        assert!((galpha_dyadic(&atoms, 0.8, 20).unwrap() - want).abs() < 1e-12);
        assert!(galpha_dyadic(&atoms, 0.8, 25).is_err());
        assert!(galpha_dyadic(&[(1.0, 1.0)], 0.8, 4).is_err());
    }

    #[test]
    fn bin_boundaries_are_half_open() {
        // 0.5 belongs to the right half at level 1.
        let s = dyadic_level_sums(&[(0.25, 1.0), (0.5, 1.0)], 0.5, 1).unwrap();
        assert!((s[1] - 2.0).abs() < 1e-15);
        let s = dyadic_level_sums(&[(0.5, 1.0), (0.75, 1.0)], 0.5, 1).unwrap();
        assert!((s[1] - 2f64.sqrt()).abs() < 1e-15);
    }
}
