//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use ebt_core::measures::AtomicMeasure;
use statrs::function::beta::beta;

/// Closed forms of the profile integrals through the Beta function:
/// `∫ sqrt(t^b - t)` and `∫ t / sqrt(t^b - t)` over (0, 1).
pub fn profile_integrals_beta(b: f64) -> (f64, f64) {
    let s = 1.0 - b;
    let c0 = beta(1.5 * b / s + 1.0, 1.5) / s;
    let moment = beta((1.0 + 0.5 * b) / s + 1.0, 0.5) / s;
    (c0, moment)
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > tol {
        if f1 < f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Dense two-phase simplex (Bland's rule) for `min c·x, A x = b, x ≥ 0`
/// with `b ≥ 0`. Returns the optimal value.
pub fn simplex_min(a: &[Vec<f64>], b: &[f64], c: &[f64]) -> f64 {
    let m = a.len();
    let n = c.len();
    let width = n + m + 1;
    let mut t = vec![vec![0.0; width]; m];
    for i in 0..m {
        t[i][..n].copy_from_slice(&a[i]);
        t[i][n + i] = 1.0;
        t[i][width - 1] = b[i];
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, col: usize) {
        let p = t[r][col];
        for v in t[r].iter_mut() {
            *v /= p;
        }
        let row = t[r].clone();
        for (i, ti) in t.iter_mut().enumerate() {
            if i != r && ti[col] != 0.0 {
                let f = ti[col];
                for (v, w) in ti.iter_mut().zip(&row) {
                    *v -= f * w;
                }
            }
        }
        basis[r] = col;
    }

    let run = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], cols: usize| loop {
        let mut enter = None;
        for j in 0..cols {
            let r = cost[j] - (0..m).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
            if r < -1e-12 {
                enter = Some(j);
                break;
            }
        }
        let Some(j) = enter else { break };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..m {
            if t[i][j] > 1e-12 {
                let ratio = t[i][width - 1] / t[i][j];
                let better = match leave {
                    None => true,
                    Some((k, best)) => {
                        ratio < best - 1e-15 || (ratio <= best + 1e-15 && basis[i] < basis[k])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        let (r, _) = leave.expect("transport LPs are bounded");
        pivot(t, basis, r, j);
    };

    let mut phase1 = vec![0.0; n + m];
    phase1[n..].iter_mut().for_each(|v| *v = 1.0);
    run(&mut t, &mut basis, &phase1, n + m);
    // Drive zero-level artificials out of the basis where possible.
    for r in 0..m {
        if basis[r] >= n {
            if let Some(j) = (0..n).find(|&j| t[r][j].abs() > 1e-9) {
                pivot(&mut t, &mut basis, r, j);
            }
        }
    }
    let mut phase2 = vec![0.0; n + m];
    phase2[..n].copy_from_slice(c);
    run(&mut t, &mut basis, &phase2, n);
    (0..m).map(|i| phase2[basis[i]] * t[i][width - 1]).sum()
}

/// W1 between equal-mass measures as a transportation LP.
pub fn w1_lp(mu: &AtomicMeasure, nu: &AtomicMeasure) -> f64 {
    let (n, m) = (mu.len(), nu.len());
    let mut rows = Vec::new();
    let mut rhs = Vec::new();
    for i in 0..n {
        let mut r = vec![0.0; n * m];
        (0..m).for_each(|j| r[i * m + j] = 1.0);
        rows.push(r);
        rhs.push(mu.atoms[i].1);
    }
    for j in 0..m {
        let mut r = vec![0.0; n * m];
        (0..n).for_each(|i| r[i * m + j] = 1.0);
        rows.push(r);
        rhs.push(nu.atoms[j].1);
    }
    let cost: Vec<f64> = (0..n * m)
        .map(|k| {
            let (p, q) = (mu.atoms[k / m].0, nu.atoms[k % m].0);
            ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
        })
        .collect();
    simplex_min(&rows, &rhs, &cost)
}

/// Cheapest Y-tree joining weighted terminals through one branch point on
/// an `n × n` lattice over the unit square. Returns `(energy, point)`.
pub fn y_tree_lattice(terminals: &[([f64; 2], f64)], alpha: f64, n: usize) -> (f64, [f64; 2]) {
    let mut best = (f64::INFINITY, [0.0, 0.0]);
    for i in 0..n {
        for j in 0..n {
            let b = [i as f64 / (n - 1) as f64, j as f64 / (n - 1) as f64];
            let e: f64 = terminals
                .iter()
                .map(|(p, w)| {
                    w.powf(alpha) * ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)).sqrt()
                })
                .sum();
            if e < best.0 {
                best = (e, b);
            }
        }
    }
    best
}
