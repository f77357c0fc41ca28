//! Weighted oriented graphs, atomic measures and their grid smoothing.
//!
//! Sign conventions: a graph edge `p -> q` of weight `w` moves mass from `p`
//! to `q`. [`graph_divergence`] reports the node balance (inflow minus
//! outflow), so sinks are positive. The grid operator
//! [`divergence`](crate::grid::divergence) of a flow field is positive at
//! sources, i.e. the negative of this balance; callers building constraint
//! data use `f = fplus - fminus` with sources in `fplus`.

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ScalarField2D};

pub type Point = [f64; 2];

/// Relative tolerance for merging graph endpoints into one node.
const NODE_MERGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge {
    pub p0: Point,
    pub p1: Point,
    pub weight: f64,
}

impl Edge {
    pub fn length(&self) -> f64 {
        distance(self.p0, self.p1)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WeightedGraph {
    edges: Vec<Edge>,
}

impl WeightedGraph {
    pub fn new(edges: Vec<Edge>) -> Result<Self> {
        for (k, e) in edges.iter().enumerate() {
            if !(e.weight > 0.0 && e.weight.is_finite()) {
                return Err(Error::Domain(format!(
                    "edge {k}: weight must be positive and finite, got {}",
                    e.weight
                )));
            }
            if !e.p0.iter().chain(e.p1.iter()).all(|v| v.is_finite()) {
                return Err(Error::Domain(format!("edge {k}: non-finite endpoint")));
            }
            if e.length() == 0.0 {
                return Err(Error::Domain(format!("edge {k}: zero length")));
            }
        }
        Ok(WeightedGraph { edges })
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    /// Distinct endpoints, merged up to a small relative tolerance.
    pub fn nodes(&self) -> Vec<Point> {
        let tol = NODE_MERGE_TOL * self.scale();
        let mut nodes: Vec<Point> = Vec::new();
        for e in &self.edges {
            for p in [e.p0, e.p1] {
                if !nodes.iter().any(|q| distance(*q, p) <= tol) {
                    nodes.push(p);
                }
            }
        }
        nodes
    }

    fn scale(&self) -> f64 {
        self.edges
            .iter()
            .flat_map(|e| [e.p0, e.p1])
            .flat_map(|p| [p[0].abs(), p[1].abs()])
            .fold(1.0, f64::max)
    }

    /// Index into `nodes` of each edge's endpoints.
    pub fn incidence(&self, nodes: &[Point]) -> Vec<(usize, usize)> {
        let find = |p: Point| -> usize {
            nodes
                .iter()
                .enumerate()
                .min_by(|a, b| distance(*a.1, p).total_cmp(&distance(*b.1, p)))
                .map(|(k, _)| k)
                .expect("node list contains every endpoint")
        };
        self.edges
            .iter()
            .map(|e| (find(e.p0), find(e.p1)))
            .collect()
    }
}

pub fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Finite signed combination of Dirac masses.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AtomicMeasure {
    pub atoms: Vec<(Point, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(Point, f64)>) -> Result<Self> {
        for (k, (p, m)) in atoms.iter().enumerate() {
            if !(p[0].is_finite() && p[1].is_finite() && m.is_finite()) {
                return Err(Error::Domain(format!("atom {k} is not finite")));
            }
        }
        Ok(AtomicMeasure { atoms })
    }

    pub fn empty() -> Self {
        AtomicMeasure::default()
    }

    pub fn dirac(p: Point, mass: f64) -> Self {
        AtomicMeasure {
            atoms: vec![(p, mass)],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    /// Signed total `Σ m_k`.
    pub fn total(&self) -> f64 {
        self.atoms.iter().map(|a| a.1).sum()
    }

    /// `Σ |m_k|`.
    pub fn total_variation(&self) -> f64 {
        self.atoms.iter().map(|a| a.1.abs()).sum()
    }

    pub fn positive_part(&self) -> Self {
        AtomicMeasure {
            atoms: self.atoms.iter().filter(|a| a.1 > 0.0).copied().collect(),
        }
    }

    pub fn negative_part(&self) -> Self {
        AtomicMeasure {
            atoms: self
                .atoms
                .iter()
                .filter(|a| a.1 < 0.0)
                .map(|&(p, m)| (p, -m))
                .collect(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        AtomicMeasure {
            atoms: self.atoms.iter().map(|&(p, m)| (p, s * m)).collect(),
        }
    }

    /// `self - other` as one list (atoms are not merged).
    pub fn minus(&self, other: &AtomicMeasure) -> Self {
        let mut atoms = self.atoms.clone();
        atoms.extend(other.atoms.iter().map(|&(p, m)| (p, -m)));
        AtomicMeasure { atoms }
    }
}

/// `Σ w^alpha |e|` over the edges.
pub fn graph_energy(g: &WeightedGraph, alpha: f64) -> f64 {
    g.edges
        .iter()
        .map(|e| e.weight.powf(alpha) * e.length())
        .sum()
}

/// Node balances (inflow minus outflow); balanced nodes are dropped.
pub fn graph_divergence(g: &WeightedGraph) -> AtomicMeasure {
    let nodes = g.nodes();
    let mut balance = vec![0.0; nodes.len()];
    let mut scale = vec![0.0f64; nodes.len()];
    for (e, (a, b)) in g.edges.iter().zip(g.incidence(&nodes)) {
        balance[a] -= e.weight;
        balance[b] += e.weight;
        scale[a] = scale[a].max(e.weight);
        scale[b] = scale[b].max(e.weight);
    }
    let atoms = nodes
        .into_iter()
        .zip(balance)
        .zip(scale)
        .filter(|((_, m), s)| m.abs() > 1e-12 * s)
        .map(|((p, m), _)| (p, m))
        .collect();
    AtomicMeasure { atoms }
}

/// Sum of truncated Gaussian bumps of width `sigma`, each renormalized on
/// the grid so that it carries exactly its atom's mass.
pub fn smooth_onto_grid(f: &AtomicMeasure, sigma: f64, grid: GridSpec) -> Result<ScalarField2D> {
    let hmax = grid.hx.max(grid.hy);
    if !(sigma >= 2.0 * hmax) {
        return Err(Error::Resolution(format!(
            "smoothing width {sigma} must be at least two cells ({})",
            2.0 * hmax
        )));
    }
    let mut out = ScalarField2D::zeros(grid);
    let cutoff = 4.0 * sigma;
    let area = grid.cell_area();
    for (k, &(p, mass)) in f.atoms.iter().enumerate() {
        if !grid.contains_disk(p, 3.0 * sigma) {
            return Err(Error::Geometry(format!(
                "atom {k} at ({}, {}) is closer than 3 sigma = {} to the boundary",
                p[0],
                p[1],
                3.0 * sigma
            )));
        }
        if mass == 0.0 {
            continue;
        }
        let i0 = ((p[0] - cutoff - grid.origin[0]) / grid.hx)
            .floor()
            .max(0.0) as usize;
        let i1 = (((p[0] + cutoff - grid.origin[0]) / grid.hx).ceil() as usize).min(grid.nx);
        let j0 = ((p[1] - cutoff - grid.origin[1]) / grid.hy)
            .floor()
            .max(0.0) as usize;
        let j1 = (((p[1] + cutoff - grid.origin[1]) / grid.hy).ceil() as usize).min(grid.ny);
        let mut bump = Vec::new();
        let mut total = 0.0;
        for i in i0..i1 {
            for j in j0..j1 {
                let c = grid.cell_center(i, j);
                let r2 = (c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2);
                if r2 <= cutoff * cutoff {
                    let v = (-0.5 * r2 / (sigma * sigma)).exp();
                    total += v * area;
                    bump.push((i, j, v));
                }
            }
        }
        for (i, j, v) in bump {
            out.values[[i, j]] += mass * v / total;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn edge(p0: Point, p1: Point, weight: f64) -> Edge {
        Edge { p0, p1, weight }
    }

    #[test]
    fn energy_examples() {
        let g = WeightedGraph::new(vec![edge([0.0, 0.0], [2.0, 0.0], 0.5)]).unwrap();
        assert!((graph_energy(&g, 0.8) - 2.0 * 0.5f64.powf(0.8)).abs() < 1e-14);
        assert!((graph_energy(&g, 0.8) - 1.148_698_354_997_035).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(WeightedGraph::new(vec![edge([0.0, 0.0], [0.0, 0.0], 1.0)]).is_err());
        assert!(WeightedGraph::new(vec![edge([0.0, 0.0], [1.0, 0.0], 0.0)]).is_err());
        assert!(WeightedGraph::new(vec![edge([0.0, 0.0], [1.0, 0.0], -1.0)]).is_err());
    }

    #[test]
    fn divergence_conventions() {
        let g = WeightedGraph::new(vec![edge([0.0, 0.0], [1.0, 0.0], 0.7)]).unwrap();
        let d = graph_divergence(&g);
        assert_eq!(d.atoms, vec![([0.0, 0.0], -0.7), ([1.0, 0.0], 0.7)]);

        let y = WeightedGraph::new(vec![
            edge([0.0, 1.0], [0.5, 0.5], 1.0),
            edge([1.0, 1.0], [0.5, 0.5], 1.0),
            edge([0.5, 0.5], [0.5, 0.0], 2.0),
        ])
        .unwrap();
        let d = graph_divergence(&y);
        assert_eq!(d.len(), 3);
        assert!(d.atoms.iter().all(|a| a.0 != [0.5, 0.5]));

        let tri = WeightedGraph::new(vec![
            edge([0.0, 0.0], [1.0, 0.0], 1.0),
            edge([1.0, 0.0], [0.0, 1.0], 1.0),
            edge([0.0, 1.0], [0.0, 0.0], 1.0),
        ])
        .unwrap();
        assert!(graph_divergence(&tri).is_empty());
    }

    #[test]
    fn smoothing_preserves_mass() {
        let g = GridSpec::from_bounds(64, 64, [0.0, 0.0], [1.0, 1.0]).unwrap();
        assert_eq!(
            smooth_onto_grid(&AtomicMeasure::empty(), 0.05, g)
                .unwrap()
                .max_abs(),
            0.0
        );
        let f = smooth_onto_grid(&AtomicMeasure::dirac([0.41, 0.53], 1.0), 0.05, g).unwrap();
        assert!((f.integral() - 1.0).abs() < 1e-12);
        let pair = AtomicMeasure::new(vec![([0.3, 0.5], 1.0), ([0.7, 0.5], -1.0)]).unwrap();
        let f = smooth_onto_grid(&pair, 0.05, g).unwrap();
        assert!(f.integral().abs() < 1e-12);
        assert!(smooth_onto_grid(&AtomicMeasure::dirac([0.05, 0.5], 1.0), 0.05, g).is_err());
        assert!(smooth_onto_grid(&AtomicMeasure::dirac([0.5, 0.5], 1.0), 0.01, g).is_err());
    }
}
