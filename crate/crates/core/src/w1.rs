//! Exact Wasserstein-1 distance between atomic measures.
//!
//! The transportation problem is solved by successive shortest paths on the
//! bipartite residual graph (dense Dijkstra with reduced costs). Optimal
//! dual potentials are recovered afterwards by Bellman–Ford on the final
//! residual graph.

use crate::error::{Error, Result};
use crate::measures::{distance, AtomicMeasure};

const MASS_TOL: f64 = 1e-10;

/// Optimal cost together with Kantorovich potentials.
///
/// `cost = Σ mu_i source_potential_i + Σ nu_j sink_potential_j`, with
/// `source_potential_i + sink_potential_j ≤ |x_i - y_j|` and equality
/// wherever the optimal plan moves mass. Entries for zero-mass atoms are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Transport {
    pub cost: f64,
    pub source_potential: Vec<f64>,
    pub sink_potential: Vec<f64>,
    /// `(source index, sink index, mass)` of the optimal plan.
    pub plan: Vec<(usize, usize, f64)>,
}

pub fn w1_distance(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<f64> {
    Ok(w1_transport(mu, nu)?.cost)
}

pub fn w1_transport(mu: &AtomicMeasure, nu: &AtomicMeasure) -> Result<Transport> {
    if mu.atoms.iter().chain(nu.atoms.iter()).any(|a| a.1 < 0.0) {
        return Err(Error::Domain("W1 expects non-negative measures".into()));
    }
    let (ma, mb) = (mu.total(), nu.total());
    if (ma - mb).abs() > MASS_TOL * ma.max(mb).max(f64::MIN_POSITIVE) {
        return Err(Error::Compatibility(format!(
            "W1 needs equal masses, got {ma} and {mb}"
        )));
    }
    let src: Vec<usize> = (0..mu.len()).filter(|&i| mu.atoms[i].1 > 0.0).collect();
    let snk: Vec<usize> = (0..nu.len()).filter(|&j| nu.atoms[j].1 > 0.0).collect();
    let mut out = Transport {
        cost: 0.0,
        source_potential: vec![0.0; mu.len()],
        sink_potential: vec![0.0; nu.len()],
        plan: Vec::new(),
    };
    if src.is_empty() || snk.is_empty() {
        return Ok(out);
    }
    let (n, m) = (src.len(), snk.len());
    let cost: Vec<f64> = src
        .iter()
        .flat_map(|&i| snk.iter().map(move |&j| (i, j)))
        .map(|(i, j)| distance(mu.atoms[i].0, nu.atoms[j].0))
        .collect();
    let c = |i: usize, j: usize| cost[i * m + j];

    // Demands are rescaled to the supply total so the problem is exactly balanced.
    let mut supply: Vec<f64> = src.iter().map(|&i| mu.atoms[i].1).collect();
    let mut demand: Vec<f64> = snk.iter().map(|&j| nu.atoms[j].1 * ma / mb).collect();
    let mut flow = vec![0.0; n * m];
    // Node potentials: sources 0..n, sinks n..n+m.
    let mut pot = vec![0.0; n + m];
    let stop = 1e-13 * ma;
    let mut remaining: f64 = supply.iter().sum();
    let mut guard = 0usize;
    let max_iter = 10 * (n + m) * (n + m) + 100;

    while remaining > stop {
        guard += 1;
        if guard > max_iter {
            return Err(Error::numeric("min-cost flow did not terminate", remaining));
        }
        // Dijkstra from all sources with spare supply.
        let total = n + m;
        let mut dist = vec![f64::INFINITY; total];
        let mut prev = vec![usize::MAX; total];
        let mut done = vec![false; total];
        for i in 0..n {
            if supply[i] > stop * 1e-3 {
                dist[i] = 0.0;
            }
        }
        loop {
            let mut u = usize::MAX;
            let mut best = f64::INFINITY;
            for v in 0..total {
                if !done[v] && dist[v] < best {
                    best = dist[v];
                    u = v;
                }
            }
            if u == usize::MAX {
                break;
            }
            done[u] = true;
            if u < n {
                for j in 0..m {
                    let v = n + j;
                    let rc = (c(u, j) + pot[u] - pot[v]).max(0.0);
                    if dist[u] + rc < dist[v] {
                        dist[v] = dist[u] + rc;
                        prev[v] = u;
                    }
                }
            } else {
                let j = u - n;
                for i in 0..n {
                    if flow[i * m + j] > 0.0 {
                        let rc = (-c(i, j) + pot[u] - pot[i]).max(0.0);
                        if dist[u] + rc < dist[i] {
                            dist[i] = dist[u] + rc;
                            prev[i] = u;
                        }
                    }
                }
            }
        }
        // Cheapest sink with spare demand.
        let target = (0..m)
            .filter(|&j| demand[j] > 0.0 && dist[n + j].is_finite())
            .min_by(|&a, &b| dist[n + a].total_cmp(&dist[n + b]));
        let Some(tj) = target else {
            return Err(Error::numeric(
                "no augmenting path with supply left",
                remaining,
            ));
        };
        let dmax = dist[n + tj];
        for v in 0..total {
            pot[v] += dist[v].min(dmax);
        }
        // Walk back to find the bottleneck.
        let mut path = Vec::new();
        let mut v = n + tj;
        while prev[v] != usize::MAX {
            path.push((prev[v], v));
            v = prev[v];
        }
        let start = v;
        let mut amount = supply[start].min(demand[tj]);
        for &(a, b) in &path {
            if a >= n {
                amount = amount.min(flow[b * m + (a - n)]);
            }
        }
        for &(a, b) in &path {
            if a < n {
                flow[a * m + (b - n)] += amount;
            } else {
                let f = &mut flow[b * m + (a - n)];
                *f = (*f - amount).max(0.0);
            }
        }
        supply[start] -= amount;
        demand[tj] -= amount;
        if supply[start] <= stop * 1e-3 {
            supply[start] = 0.0;
        }
        if demand[tj] <= stop * 1e-3 {
            demand[tj] = 0.0;
        }
        remaining = supply.iter().sum();
    }

    let mut total_cost = 0.0;
    for i in 0..n {
        for j in 0..m {
            let f = flow[i * m + j];
            if f > 0.0 {
                total_cost += f * c(i, j);
                out.plan.push((src[i], snk[j], f));
            }
        }
    }
    out.cost = total_cost;

    // Feasible potentials on the final residual graph: arcs i -> j (cost c)
    // and j -> i (cost -c) where flow > 0.
    let mut label = vec![0.0; n + m];
    for _ in 0..=(n + m) {
        let mut changed = false;
        for i in 0..n {
            for j in 0..m {
                let cij = c(i, j);
                if label[i] + cij < label[n + j] - 1e-15 {
                    label[n + j] = label[i] + cij;
                    changed = true;
                }
                if flow[i * m + j] > 0.0 && label[n + j] - cij < label[i] - 1e-15 {
                    label[i] = label[n + j] - cij;
                    changed = true;
                }
            }
        }
        if !changed {
            break;
        }
    }
    for (k, &i) in src.iter().enumerate() {
        out.source_potential[i] = -label[k];
    }
    for (k, &j) in snk.iter().enumerate() {
        out.sink_potential[j] = label[n + k];
    }
    Ok(out)
}

/// `C W1(mu, fplus)^(2 alpha - 1) + C W1(nu, fminus)^(2 alpha - 1)`.
pub fn g1_penalty(
    mu: &AtomicMeasure,
    nu: &AtomicMeasure,
    fplus: &AtomicMeasure,
    fminus: &AtomicMeasure,
    alpha: f64,
    weight: f64,
) -> Result<f64> {
    if !(alpha > 0.5) {
        return Err(Error::Domain(format!(
            "penalty exponent needs alpha > 1/2, got {alpha}"
        )));
    }
    let e = 2.0 * alpha - 1.0;
    let a = w1_distance(mu, fplus)?;
    let b = w1_distance(nu, fminus)?;
    Ok(weight * (a.powf(e) + b.powf(e)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(atoms: &[([f64; 2], f64)]) -> AtomicMeasure {
        AtomicMeasure::new(atoms.to_vec()).unwrap()
    }

    #[test]
    fn small_examples() {
        let a = m(&[([0.0, 0.0], 1.0)]);
        let b = m(&[([1.0, 0.0], 1.0)]);
        assert_eq!(w1_distance(&a, &a).unwrap(), 0.0);
        assert!((w1_distance(&a, &b).unwrap() - 1.0).abs() < 1e-15);
        let mu = m(&[([0.0, 0.0], 0.5), ([1.0, 0.0], 0.5)]);
        let nu = m(&[([0.5, 0.0], 1.0)]);
        assert!((w1_distance(&mu, &nu).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mass_mismatch() {
        let a = m(&[([0.0, 0.0], 1.0)]);
        let b = m(&[([1.0, 0.0], 0.9)]);
        assert!(matches!(w1_distance(&a, &b), Err(Error::Compatibility(_))));
    }

    #[test]
    fn potentials_certify_optimality() {
        let mu = m(&[([0.0, 0.0], 0.3), ([1.0, 0.2], 0.5), ([0.4, 0.9], 0.2)]);
        let nu = m(&[([0.9, 0.8], 0.6), ([0.1, 0.3], 0.4)]);
        let t = w1_transport(&mu, &nu).unwrap();
        let dual: f64 = mu
            .atoms
            .iter()
            .zip(&t.source_potential)
            .map(|(a, p)| a.1 * p)
            .sum::<f64>()
            + nu.atoms
                .iter()
                .zip(&t.sink_potential)
                .map(|(a, p)| a.1 * p)
                .sum::<f64>();
        assert!((dual - t.cost).abs() < 1e-12);
        for (i, a) in mu.atoms.iter().enumerate() {
            for (j, b) in nu.atoms.iter().enumerate() {
                let d = distance(a.0, b.0);
                assert!(t.source_potential[i] + t.sink_potential[j] <= d + 1e-12);
            }
        }
    }

    #[test]
    fn penalty_examples() {
        let f = m(&[([0.2, 0.2], 1.0)]);
        let g = m(&[([0.8, 0.2], 1.0)]);
        assert_eq!(g1_penalty(&f, &g, &f, &g, 0.8, 1.0).unwrap(), 0.0);
        let mu = m(&[([0.3, 0.2], 1.0)]);
        let mu2 = m(&[([0.4, 0.2], 1.0)]);
        let p1 = g1_penalty(&mu, &g, &f, &g, 0.8, 1.0).unwrap();
        let p2 = g1_penalty(&mu2, &g, &f, &g, 0.8, 1.0).unwrap();
        assert!((p2 / p1 - 2f64.powf(0.6)).abs() < 1e-12);
    }
}
