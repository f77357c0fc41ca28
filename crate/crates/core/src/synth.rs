//! Recovery fields for straight segments and finite graphs.
//!
//! A segment carrying flux `theta` from `p0` to `p1` becomes a capsule: the
//! field points along the segment with modulus `v(dist(x, S'))`, where `v`
//! is the transverse profile and `S'` is the segment shortened by
//! [`cap_inset`] at both ends. The rounded ends carry the divergence; the
//! inset puts the centroid of each end's divergence exactly on the endpoint.
//!
//! Face values are face averages of the normal component. On faces whose
//! nearest points all lie on the straight part they are computed from the
//! antiderivative of the profile, which makes the straight part exactly
//! divergence free on the grid.

use crate::constants::{profile_constants, DEFAULT_QUADRATURE_TOL};
use crate::error::{Error, Result};
use crate::grid::{
    cell_gradient, curl_apply, divergence, BoundaryCondition, GridSpec, NodeField2D, PoissonSolver,
    ScalarField2D, VectorField2D,
};
use crate::measures::{distance, graph_divergence, Point, WeightedGraph};
use crate::profile::{solve_profile_with, TransverseProfile};

const PROFILE_SAMPLES: usize = 256;
/// Minimum number of cells across the support half-width.
pub const MIN_CELLS_ACROSS: f64 = 8.0;
/// Cap divergence lies within `CAP_REACH * support` of the node.
pub const CAP_REACH: f64 = 1.25;
/// Node correction balls have radius `NODE_BALL_FACTOR * support`.
pub const NODE_BALL_FACTOR: f64 = 2.5;
const CG_TOL: f64 = 1e-12;

// Composite Gauss–Legendre rule on faces that touch the rounded ends.
const GL_X: [f64; 3] = [-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4];
const GL_W: [f64; 3] = [5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0];
const GL_PANELS: usize = 4;

/// Distance from each endpoint to the end of the straight part:
/// `pi ∫ v(r) r dr / theta`.
pub fn cap_inset(profile: &TransverseProfile) -> f64 {
    std::f64::consts::PI * profile.first_moment() / (profile.amplitude * profile.theta)
}

struct Capsule<'a> {
    profile: &'a TransverseProfile,
    q0: Point,
    dir: Point,
    len: f64,
    support: f64,
}

impl Capsule<'_> {
    /// Parameter along the straight part and signed normal offset.
    fn coords(&self, x: Point) -> (f64, f64) {
        let d = [x[0] - self.q0[0], x[1] - self.q0[1]];
        (
            d[0] * self.dir[0] + d[1] * self.dir[1],
            -self.dir[1] * d[0] + self.dir[0] * d[1],
        )
    }

    fn modulus(&self, x: Point) -> f64 {
        let (t, s) = self.coords(x);
        let r = if t < 0.0 {
            t.hypot(s)
        } else if t > self.len {
            (t - self.len).hypot(s)
        } else {
            s.abs()
        };
        if r >= self.support {
            0.0
        } else {
            self.profile.intensity(r)
        }
    }

    fn on_straight_part(&self, x: Point) -> bool {
        let t = self.coords(x).0;
        (0.0..=self.len).contains(&t)
    }

    /// `∫ v over the face [a, b]`, divided by the face length.
    fn face_average(&self, a: Point, b: Point) -> f64 {
        let mut acc = 0.0;
        let w = 1.0 / GL_PANELS as f64;
        for k in 0..GL_PANELS {
            for (x, gw) in GL_X.iter().zip(GL_W) {
                let s = (k as f64 + 0.5 * (x + 1.0)) * w;
                let p = [a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])];
                acc += 0.5 * w * gw * self.modulus(p);
            }
        }
        acc
    }
}

/// Rasterize the recovery field of one segment.
pub fn rasterize_segment(
    p0: Point,
    p1: Point,
    theta: f64,
    eps: f64,
    alpha: f64,
    grid: GridSpec,
) -> Result<VectorField2D> {
    let constants = profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?;
    let profile = solve_profile_with(&constants, theta, eps, PROFILE_SAMPLES)?;
    let mut out = VectorField2D::zeros(grid);
    add_segment(&mut out, &profile, p0, p1)?;
    Ok(out)
}

/// Add the recovery field of segment `p0 -> p1` with the given profile.
pub fn add_segment(
    out: &mut VectorField2D,
    profile: &TransverseProfile,
    p0: Point,
    p1: Point,
) -> Result<()> {
    let grid = out.spec;
    let support = profile.support_halfwidth;
    let hmax = grid.hx.max(grid.hy);
    if support < MIN_CELLS_ACROSS * hmax {
        let needed = (MIN_CELLS_ACROSS * grid.width().max(grid.height()) / support).ceil();
        return Err(Error::Resolution(format!(
            "profile half-width {support:.4e} spans {:.1} cells; need {MIN_CELLS_ACROSS} \
             (about {needed} cells along the longer axis)",
            support / hmax
        )));
    }
    let full = distance(p0, p1);
    if full == 0.0 {
        return Err(Error::Geometry("segment has zero length".into()));
    }
    let inset = cap_inset(profile);
    if 2.0 * inset >= full {
        return Err(Error::Geometry(format!(
            "segment of length {full} is shorter than twice the end inset {inset}"
        )));
    }
    let dir = [(p1[0] - p0[0]) / full, (p1[1] - p0[1]) / full];
    let q0 = [p0[0] + inset * dir[0], p0[1] + inset * dir[1]];
    let q1 = [p1[0] - inset * dir[0], p1[1] - inset * dir[1]];
    for q in [q0, q1] {
        if !grid.contains_disk(q, support) {
            return Err(Error::Geometry(format!(
                "segment support (half-width {support:.4e}) leaves the domain near ({:.4}, {:.4})",
                q[0], q[1]
            )));
        }
    }
    let cap = Capsule {
        profile,
        q0,
        dir,
        len: full - 2.0 * inset,
        support,
    };
    // Normal offset for the exact strip formula.
    let offset = |x: Point| cap.coords(x).1;
    let flux = |x: Point| profile.flux_below(offset(x));

    let lo = [
        q0[0].min(q1[0]) - support - grid.hx,
        q0[1].min(q1[1]) - support - grid.hy,
    ];
    let hi = [
        q0[0].max(q1[0]) + support + grid.hx,
        q0[1].max(q1[1]) + support + grid.hy,
    ];
    let idx =
        |v: f64, o: f64, h: f64, n: usize| ((v - o) / h).floor().clamp(0.0, n as f64) as usize;
    let i0 = idx(lo[0], grid.origin[0], grid.hx, grid.nx);
    let i1 = idx(hi[0], grid.origin[0], grid.hx, grid.nx);
    let j0 = idx(lo[1], grid.origin[1], grid.hy, grid.ny);
    let j1 = idx(hi[1], grid.origin[1], grid.hy, grid.ny);

    for i in i0..=i1.min(grid.nx) {
        for j in j0..j1.min(grid.ny) {
            let a = grid.node(i, j);
            let b = grid.node(i, j + 1);
            let v = if cap.on_straight_part(a) && cap.on_straight_part(b) {
                (flux(b) - flux(a)) / grid.hy
            } else {
                dir[0] * cap.face_average(a, b)
            };
            out.ux[[i, j]] += v;
        }
    }
    for i in i0..i1.min(grid.nx) {
        for j in j0..=j1.min(grid.ny) {
            let a = grid.node(i, j);
            let b = grid.node(i + 1, j);
            let v = if cap.on_straight_part(a) && cap.on_straight_part(b) {
                (flux(a) - flux(b)) / grid.hx
            } else {
                dir[1] * cap.face_average(a, b)
            };
            out.uy[[i, j]] += v;
        }
    }
    Ok(())
}

/// Compactly supported field with prescribed divergence.
///
/// Given zero-mean `g` supported in the ball of `radius` around `center`,
/// returns `v` with `divergence(v) = g` and `v = 0` on every face whose
/// end nodes lie at distance `≥ radius - h` from the centre.
///
/// `v = ∇w - curl(ζ η)`: `w` solves the Neumann problem `Δw = g` on a square
/// window around the ball, `η` is the stream function of `∇w` outside the
/// support of `g` (where `∇w` is divergence free with zero net flux), and
/// `ζ` is a radial cutoff equal to 0 on the support of `g` and 1 near the
/// sphere. Outside the ball the two terms cancel exactly.
pub fn node_correction(g: &ScalarField2D, center: Point, radius: f64) -> Result<VectorField2D> {
    let grid = g.spec;
    let (hx, hy) = (grid.hx, grid.hy);
    let h = hx.max(hy);
    let mut out = VectorField2D::zeros(grid);
    let l1 = g.l1_norm();
    if l1 == 0.0 {
        return Ok(out);
    }
    let mut support = 0.0f64;
    for ((i, j), v) in g.values.indexed_iter() {
        if *v != 0.0 {
            support = support.max(distance(grid.cell_center(i, j), center));
        }
    }
    if support > radius {
        return Err(Error::Geometry(format!(
            "correction data reaches distance {support:.4e} beyond the ball radius {radius:.4e}"
        )));
    }
    let mean = g.integral();
    if mean.abs() > 1e-8 * l1 {
        return Err(Error::Compatibility(format!(
            "correction data must have zero mean: integral {mean:e}, L1 norm {l1:e}"
        )));
    }
    let r_in = support + 3.0 * h;
    let r_out = radius - 1.5 * h;
    if r_out - r_in < 4.0 * h {
        return Err(Error::Resolution(format!(
            "correction ball of radius {radius:.4e} leaves fewer than 4 cells between the data \
             (reaching {support:.4e}) and the sphere"
        )));
    }

    // Square window of cells around the ball, sized for multigrid.
    let half_x = ((radius / hx).ceil() as usize + 3).next_multiple_of(8);
    let half_y = ((radius / hy).ceil() as usize + 3).next_multiple_of(8);
    let (ci, cj) = grid.locate(center);
    if ci < half_x || cj < half_y || ci + half_x > grid.nx || cj + half_y > grid.ny {
        return Err(Error::Geometry(format!(
            "correction ball of radius {radius:.4e} around ({:.4}, {:.4}) leaves the domain",
            center[0], center[1]
        )));
    }
    let (wi0, wj0) = (ci - half_x, cj - half_y);
    let window = GridSpec::new(2 * half_x, 2 * half_y, hx, hy, grid.node(wi0, wj0))?;
    let mut rhs = ScalarField2D::zeros(window);
    let mut nonzero = 0usize;
    for i in 0..window.nx {
        for j in 0..window.ny {
            let v = g.values[[wi0 + i, wj0 + j]];
            rhs.values[[i, j]] = v;
            nonzero += usize::from(v != 0.0);
        }
    }
    if (rhs.l1_norm() - l1).abs() > 1e-12 * l1 {
        return Err(Error::Geometry(
            "correction data extends past the window".into(),
        ));
    }
    // Spread the admitted rounding-level imbalance over the support.
    let shift = rhs.values.sum() / nonzero as f64;
    rhs.values
        .mapv_inplace(|v| if v != 0.0 { v - shift } else { v });
    let w = PoissonSolver::new(window, BoundaryCondition::NeumannZeroFlux).solve(&rhs, CG_TOL)?;
    let grad = cell_gradient(&w, BoundaryCondition::NeumannZeroFlux);

    // Stream function of ∇w on nodes away from the data, by path integration.
    let (mx, my) = (window.nx + 1, window.ny + 1);
    let node_r = |i: usize, j: usize| distance(window.node(i, j), center);
    let active = |i: usize, j: usize| node_r(i, j) >= r_in - h;
    let mut eta = vec![f64::NAN; mx * my];
    let mut queue = std::collections::VecDeque::new();
    eta[0] = 0.0;
    queue.push_back((0usize, 0usize));
    while let Some((i, j)) = queue.pop_front() {
        let base = eta[i * my + j];
        // η[i, j+1] - η[i, j] = hy ∂x w on the vertical face (i, j).
        let mut visit = |a: usize, b: usize, value: f64| {
            if active(a, b) && eta[a * my + b].is_nan() {
                eta[a * my + b] = value;
                queue.push_back((a, b));
            }
        };
        if j + 1 < my {
            visit(i, j + 1, base + hy * grad.ux[[i, j]]);
        }
        if j > 0 {
            visit(i, j - 1, base - hy * grad.ux[[i, j - 1]]);
        }
        // η[i+1, j] - η[i, j] = -hx ∂y w on the horizontal face (i, j).
        if i + 1 < mx {
            visit(i + 1, j, base - hx * grad.uy[[i, j]]);
        }
        if i > 0 {
            visit(i - 1, j, base + hx * grad.uy[[i - 1, j]]);
        }
    }
    let cutoff = |r: f64| -> f64 {
        let x = ((r - r_in) / (r_out - r_in)).clamp(0.0, 1.0);
        x * x * (3.0 - 2.0 * x)
    };
    let mut psi = NodeField2D::zeros(window);
    for i in 0..mx {
        for j in 0..my {
            let r = node_r(i, j);
            if r > r_in {
                let e = eta[i * my + j];
                if e.is_nan() {
                    return Err(Error::Geometry(
                        "annulus around the data is not connected".into(),
                    ));
                }
                psi.values[[i, j]] = cutoff(r) * e;
            }
        }
    }
    let rot = curl_apply(&psi)?;
    let far = |i: usize, j: usize| node_r(i, j) >= r_out;
    for i in 0..mx {
        for j in 0..window.ny {
            if !(far(i, j) && far(i, j + 1)) {
                out.ux[[wi0 + i, wj0 + j]] = grad.ux[[i, j]] - rot.ux[[i, j]];
            }
        }
    }
    for i in 0..window.nx {
        for j in 0..my {
            if !(far(i, j) && far(i + 1, j)) {
                out.uy[[wi0 + i, wj0 + j]] = grad.uy[[i, j]] - rot.uy[[i, j]];
            }
        }
    }
    Ok(out)
}

/// Divergence bookkeeping at one graph node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeReport {
    pub point: Point,
    pub degree: usize,
    /// Net divergence prescribed at the node (positive at sources).
    pub source_mass: f64,
    /// Radius of the correction ball; the residual is measured within
    /// `CAP_REACH / NODE_BALL_FACTOR` of it.
    pub radius: f64,
    /// `‖div − reference‖₁` in the ball before the correction.
    pub residual_before: f64,
    /// Same after the correction (equal to `residual_before` when off).
    pub residual_after: f64,
}

#[derive(Debug, Clone)]
pub struct Synthesis {
    pub field: VectorField2D,
    /// Sum of the node corrections (already included in `field`).
    pub correction: VectorField2D,
    pub nodes: Vec<NodeReport>,
    pub warnings: Vec<String>,
    /// Largest profile support half-width over the edges.
    pub support_halfwidth: f64,
}

impl Synthesis {
    pub fn total_residual_before(&self) -> f64 {
        self.nodes.iter().map(|n| n.residual_before).sum()
    }

    pub fn total_residual_after(&self) -> f64 {
        self.nodes.iter().map(|n| n.residual_after).sum()
    }
}

/// Superpose segment fields over the edges of `graph`, optionally removing
/// the divergence mismatch at each node.
///
/// At a node of degree one the reference divergence is the edge's own end
/// cap. At other nodes it is the cap of the heaviest incident edge, scaled
/// to the node's net source mass (zero at balanced junctions). The residual
/// is the difference between the summed caps and this reference.
pub fn synthesize_graph(
    graph: &WeightedGraph,
    eps: f64,
    alpha: f64,
    grid: GridSpec,
    correct_nodes: bool,
) -> Result<Synthesis> {
    let constants = profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?;
    let nodes = graph.nodes();
    let incidence = graph.incidence(&nodes);
    let mut field = VectorField2D::zeros(grid);
    let mut edge_div = Vec::with_capacity(graph.edges().len());
    let mut supports = Vec::new();
    for e in graph.edges() {
        let profile = solve_profile_with(&constants, e.weight, eps, PROFILE_SAMPLES)?;
        let mut f = VectorField2D::zeros(grid);
        add_segment(&mut f, &profile, e.p0, e.p1)?;
        field.add_scaled(1.0, &f);
        edge_div.push(divergence(&f));
        supports.push(profile.support_halfwidth);
    }
    let mut warnings = Vec::new();
    let support_at: Vec<f64> = (0..nodes.len())
        .map(|n| {
            incidence
                .iter()
                .zip(&supports)
                .filter(|((a, b), _)| *a == n || *b == n)
                .map(|(_, s)| *s)
                .fold(0.0, f64::max)
        })
        .collect();
    let degree = |n: usize| incidence.iter().filter(|(a, b)| *a == n || *b == n).count();
    let extent = |n: usize| {
        let f = if degree(n) > 1 {
            NODE_BALL_FACTOR
        } else {
            CAP_REACH
        };
        f * support_at[n]
    };
    for a in 0..nodes.len() {
        for b in a + 1..nodes.len() {
            if (degree(a) > 1 || degree(b) > 1)
                && distance(nodes[a], nodes[b]) < extent(a) + extent(b)
            {
                return Err(Error::Geometry(format!(
                    "node neighbourhoods overlap between ({:.4}, {:.4}) and ({:.4}, {:.4})",
                    nodes[a][0], nodes[a][1], nodes[b][0], nodes[b][1]
                )));
            }
        }
    }
    let edges = graph.edges();
    for a in 0..edges.len() {
        for b in a + 1..edges.len() {
            let shared = [incidence[a].0, incidence[a].1]
                .iter()
                .any(|n| *n == incidence[b].0 || *n == incidence[b].1);
            if !shared
                && segment_distance(edges[a].p0, edges[a].p1, edges[b].p0, edges[b].p1)
                    < supports[a] + supports[b]
            {
                warnings.push(format!(
                    "strips of edges {a} and {b} overlap away from the nodes"
                ));
            }
        }
    }

    let balance = graph_divergence(graph);
    let mut correction = VectorField2D::zeros(grid);
    let mut reports = Vec::with_capacity(nodes.len());
    for (n, &p) in nodes.iter().enumerate() {
        let radius = NODE_BALL_FACTOR * support_at[n];
        let reach = CAP_REACH * support_at[n];
        let incident: Vec<usize> = (0..edges.len())
            .filter(|&k| incidence[k].0 == n || incidence[k].1 == n)
            .collect();
        let source_mass = -balance
            .atoms
            .iter()
            .find(|a| distance(a.0, p) == 0.0)
            .map(|a| a.1)
            .unwrap_or(0.0);
        let in_ball = |i: usize, j: usize| distance(grid.cell_center(i, j), p) <= reach;
        let mut g = ScalarField2D::zeros(grid);
        for &k in &incident {
            g.values.zip_mut_with(&edge_div[k].values, |a, b| *a += b);
        }
        for ((i, j), v) in g.values.indexed_iter_mut() {
            if !in_ball(i, j) {
                *v = 0.0;
            }
        }
        if incident.len() > 1 {
            let heaviest = *incident
                .iter()
                .max_by(|&&a, &&b| edges[a].weight.total_cmp(&edges[b].weight))
                .expect("node has an edge");
            let sign = if incidence[heaviest].0 == n {
                1.0
            } else {
                -1.0
            };
            let scale = source_mass / (sign * edges[heaviest].weight);
            if scale != 0.0 {
                for ((i, j), v) in g.values.indexed_iter_mut() {
                    if in_ball(i, j) {
                        *v -= scale * edge_div[heaviest].values[[i, j]];
                    }
                }
            }
        } else {
            g.values.fill(0.0);
        }
        let residual_before = g.l1_norm();
        let mut residual_after = residual_before;
        if correct_nodes && residual_before > 0.0 {
            // Remove the tiny discrete imbalance left by the caps' quadrature.
            let cells: Vec<(usize, usize)> = g
                .values
                .indexed_iter()
                .filter(|((i, j), _)| in_ball(*i, *j))
                .map(|(ij, _)| ij)
                .collect();
            let shift = g.values.sum() / cells.len() as f64;
            for &(i, j) in &cells {
                g.values[[i, j]] -= shift;
            }
            let v = node_correction(&g, p, radius)?;
            // The correction cancels g: subtract it.
            correction.add_scaled(-1.0, &v);
            let after = divergence(&v);
            residual_after = g
                .values
                .iter()
                .zip(after.values.iter())
                .map(|(a, b)| (a - b).abs())
                .sum::<f64>()
                * grid.cell_area()
                + shift.abs() * cells.len() as f64 * grid.cell_area();
        }
        reports.push(NodeReport {
            point: p,
            degree: incident.len(),
            source_mass,
            radius,
            residual_before,
            residual_after,
        });
    }
    field.add_scaled(1.0, &correction);
    Ok(Synthesis {
        field,
        correction,
        nodes: reports,
        warnings,
        support_halfwidth: supports.iter().copied().fold(0.0, f64::max),
    })
}

fn segment_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    let point_seg = |p: Point, s0: Point, s1: Point| -> f64 {
        let d = [s1[0] - s0[0], s1[1] - s0[1]];
        let l2 = d[0] * d[0] + d[1] * d[1];
        let t = (((p[0] - s0[0]) * d[0] + (p[1] - s0[1]) * d[1]) / l2).clamp(0.0, 1.0);
        distance(p, [s0[0] + t * d[0], s0[1] + t * d[1]])
    };
    let cross = |o: Point, a: Point, b: Point| {
        (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
    };
    let d1 = cross(a0, a1, b0);
    let d2 = cross(a0, a1, b1);
    let d3 = cross(b0, b1, a0);
    let d4 = cross(b0, b1, a1);
    if d1 * d2 < 0.0 && d3 * d4 < 0.0 {
        return 0.0;
    }
    point_seg(a0, b0, b1)
        .min(point_seg(a1, b0, b1))
        .min(point_seg(b0, a0, a1))
        .min(point_seg(b1, a0, a1))
}
