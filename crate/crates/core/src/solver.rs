//! Minimization of the approximating energy under a divergence constraint.
//!
//! Exact mode writes `u = ∇φ + curl ψ` with `φ` solving `Δφ = f` (Neumann),
//! so the constraint holds for every `ψ`, and runs Armijo descent on `ψ`.
//! The descent direction is the gradient preconditioned by
//! `(a L + 2 eps^(alpha+1) L²)^-1`, the inverse of a model Hessian with `L`
//! the node Laplacian; `a` matches the curvature of the concave term at the
//! optimal amplitude. Penalty modes descend on `u` directly.
//!
//! Stages follow a decreasing `eps` schedule with paired `delta`; each stage
//! warm-starts from the previous one.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constants::{optimal_amplitude, profile_constants, DEFAULT_QUADRATURE_TOL};
use crate::energy::{energy, energy_gradient_u, EnergyParams};
use crate::error::{Error, Result};
use crate::grid::{
    cell_gradient, curl_adjoint, curl_apply, divergence, divergence_adjoint, BoundaryCondition,
    GridSpec, NodeField2D, NodeSolver, PoissonSolver, ScalarField2D, VectorField2D,
};
use crate::measures::AtomicMeasure;
use crate::profile::solve_profile_with;
use crate::w1::w1_transport;

const ARMIJO_C1: f64 = 1e-4;
const POISSON_TOL: f64 = 1e-11;
/// Cells whose divergence is below this fraction of the maximum are dropped
/// when atomizing `div u` in W1 mode.
pub const ATOM_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum ConstraintMode {
    Exact,
    Quadratic { lambda: f64 },
    W1 { weight: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Init {
    Zero,
    /// Smooth random stream function with peak `amplitude` times the total
    /// source mass.
    Random {
        seed: u64,
        amplitude: f64,
    },
    WarmStart(NodeField2D),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub alpha: f64,
    pub grid: GridSpec,
    pub eps_schedule: Vec<f64>,
    pub delta_schedule: Vec<f64>,
    pub steps_per_stage: usize,
    /// Initial trial step (in units of the preconditioned direction).
    pub step_size: f64,
    /// Step reduction factor on a failed Armijo test.
    pub backtrack: f64,
    pub max_backtracks: usize,
    pub mode: ConstraintMode,
    pub mass_bound: Option<f64>,
    pub init: Init,
    pub tol_grad: f64,
    /// Heavy-ball coefficient; 0 disables momentum.
    pub momentum: f64,
    /// Independent runs with seeds `seed, seed+1, ...` (random init only).
    pub restarts: usize,
    /// Fixed smoothing width; `None` uses `sigma_factor` times the profile
    /// support at each eps, capped at a third of the atoms' distance to the
    /// boundary.
    pub sigma: Option<f64>,
    pub sigma_factor: f64,
    /// Record a trace entry every this many accepted steps.
    pub log_every: usize,
}

impl SolverConfig {
    /// Defaults for a geometric schedule from `eps0` to `eps_final`.
    pub fn new(
        alpha: f64,
        grid: GridSpec,
        eps0: f64,
        eps_final: f64,
        stages: usize,
    ) -> Result<Self> {
        let eps_schedule = continuation_schedule(eps0, eps_final, stages)?;
        let delta_schedule = default_deltas(&eps_schedule, alpha);
        Ok(SolverConfig {
            alpha,
            grid,
            eps_schedule,
            delta_schedule,
            steps_per_stage: 200,
            step_size: 1.0,
            backtrack: 0.5,
            max_backtracks: 30,
            mode: ConstraintMode::Exact,
            mass_bound: None,
            init: Init::Random {
                seed: 0,
                amplitude: 1e-3,
            },
            tol_grad: 1e-10,
            momentum: 0.0,
            restarts: 1,
            sigma: None,
            sigma_factor: 0.5,
            log_every: 10,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.eps_schedule;
        if e.is_empty() || e.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain(
                "eps schedule must be non-empty and positive".into(),
            ));
        }
        if e.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Domain(
                "eps schedule must be strictly decreasing".into(),
            ));
        }
        if self.delta_schedule.len() != e.len() {
            return Err(Error::Domain(format!(
                "delta schedule has {} entries for {} stages",
                self.delta_schedule.len(),
                e.len()
            )));
        }
        if self.delta_schedule.iter().any(|d| !(0.0..1.0).contains(d)) {
            return Err(Error::Domain("delta values must lie in [0, 1)".into()));
        }
        if !(self.step_size > 0.0) || !(self.backtrack > 0.0 && self.backtrack < 1.0) {
            return Err(Error::Domain(
                "step size must be > 0 and backtrack factor in (0, 1)".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Domain("momentum must lie in [0, 1)".into()));
        }
        match self.mode {
            ConstraintMode::Quadratic { lambda } if !(lambda > 0.0) => {
                return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
            }
            ConstraintMode::W1 { weight } if !(weight > 0.0) => {
                return Err(Error::Domain(format!(
                    "W1 weight must be > 0, got {weight}"
                )));
            }
            _ => {}
        }
        if let Some(k) = self.mass_bound {
            if !(k > 0.0) {
                return Err(Error::Domain(format!("mass bound must be > 0, got {k}")));
            }
        }
        if !(self.sigma_factor > 0.0) || self.sigma.is_some_and(|s| !(s > 0.0)) {
            return Err(Error::Domain("smoothing width must be positive".into()));
        }
        if self.restarts == 0 || self.log_every == 0 {
            return Err(Error::Domain(
                "restarts and log_every must be at least 1".into(),
            ));
        }
        if let Init::WarmStart(psi) = &self.init {
            crate::grid::check_same_grid(&psi.spec, &self.grid)?;
        }
        Ok(())
    }
}

/// Geometric sequence from `eps0` down to `eps_final`.
pub fn continuation_schedule(eps0: f64, eps_final: f64, n_stages: usize) -> Result<Vec<f64>> {
    if !(eps0 > eps_final && eps_final > 0.0) || n_stages < 2 {
        return Err(Error::Domain(format!(
            "need eps0 > eps_final > 0 and at least 2 stages, got {eps0}, {eps_final}, {n_stages}"
        )));
    }
    let ratio = (eps_final / eps0).powf(1.0 / (n_stages - 1) as f64);
    let mut out: Vec<f64> = (0..n_stages).map(|k| eps0 * ratio.powi(k as i32)).collect();
    out[n_stages - 1] = eps_final;
    Ok(out)
}

/// `delta_k = min(0.1, eps_k^((alpha+1)/3))`.
pub fn default_deltas(eps: &[f64], alpha: f64) -> Vec<f64> {
    eps.iter()
        .map(|e| e.powf((alpha + 1.0) / 3.0).min(0.1))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MassStatus {
    Feasible,
    Exceeded { by: f64 },
}

/// Compare `∫|u|` with `bound`.
pub fn mass_guard(u: &VectorField2D, bound: f64) -> MassStatus {
    let m = u.mass();
    if m <= bound {
        MassStatus::Feasible
    } else {
        MassStatus::Exceeded { by: m - bound }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEntry {
    pub restart: usize,
    pub stage: usize,
    pub iteration: usize,
    pub eps: f64,
    pub delta: f64,
    pub concave_term: f64,
    pub dirichlet_term: f64,
    /// Stage objective (penalty included in penalty modes).
    pub objective: f64,
    /// Energy at `delta = 0`.
    pub exact_energy: f64,
    pub div_residual: f64,
    pub mass: f64,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageSummary {
    pub eps: f64,
    pub delta: f64,
    pub sigma: f64,
    pub iterations: usize,
    pub start_objective: f64,
    pub end_objective: f64,
    pub exact_energy: f64,
    pub grad_norm: f64,
    pub converged: bool,
    /// Line search could not decrease the objective.
    pub failed: bool,
    pub mass_violations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub u: VectorField2D,
    /// Stream function of the divergence-free part (exact mode; zero otherwise).
    pub psi: NodeField2D,
    /// Smoothed constraint data of the final stage.
    pub f: ScalarField2D,
    pub energy_trace: Vec<TraceEntry>,
    /// `‖div u − f‖₁ / ‖f⁺‖₁` of the returned field.
    pub div_residual: f64,
    pub mass: f64,
    /// Energy of `u` at the final eps with `delta = 0`.
    pub energy: f64,
    pub concave_term: f64,
    pub dirichlet_term: f64,
    pub stages: Vec<StageSummary>,
    pub converged: bool,
    pub mass_feasible: bool,
    /// Restart that produced this result.
    pub restart: usize,
}

/// Minimize the energy with `div u = fplus − fminus` (smoothed).
pub fn solve(
    cfg: &SolverConfig,
    fplus: &AtomicMeasure,
    fminus: &AtomicMeasure,
) -> Result<SolveResult> {
    cfg.validate()?;
    if fplus
        .atoms
        .iter()
        .chain(fminus.atoms.iter())
        .any(|a| a.1 < 0.0)
    {
        return Err(Error::Domain(
            "source and sink measures must be non-negative".into(),
        ));
    }
    let (mp, mm) = (fplus.total(), fminus.total());
    if (mp - mm).abs() > 1e-10 * mp.max(mm) {
        return Err(Error::Compatibility(format!(
            "sources and sinks must balance: {mp} vs {mm}"
        )));
    }
    let seeds: Vec<Init> = match &cfg.init {
        Init::Random { seed, amplitude } => (0..cfg.restarts)
            .map(|k| Init::Random {
                seed: seed.wrapping_add(k as u64),
                amplitude: *amplitude,
            })
            .collect(),
        other => vec![other.clone()],
    };
    let results: Vec<Result<SolveResult>> = if seeds.len() == 1 {
        vec![run(cfg, fplus, fminus, &seeds[0], 0)]
    } else {
        std::thread::scope(|s| {
            let handles: Vec<_> = seeds
                .iter()
                .enumerate()
                .map(|(k, init)| s.spawn(move || run(cfg, fplus, fminus, init, k)))
                .collect();
            handles
                .into_iter()
                .map(|h| {
                    h.join()
                        .unwrap_or_else(|_| Err(Error::numeric("restart panicked", f64::NAN)))
                })
                .collect()
        })
    };
    let mut best: Option<SolveResult> = None;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(r) => {
                let better = match &best {
                    None => true,
                    Some(b) => (r.mass_feasible, -r.energy) > (b.mass_feasible, -b.energy),
                };
                if better {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_err.get_or_insert(e);
            }
        }
    }
    match (best, first_err) {
        (Some(b), _) => Ok(b),
        (None, Some(e)) => Err(e),
        (None, None) => Err(Error::numeric("no restart produced a result", f64::NAN)),
    }
}

struct Stage {
    index: usize,
    params: EnergyParams,
    exact: EnergyParams,
    f: ScalarField2D,
    fplus_l1: f64,
    sigma: f64,
}

fn stage_data(
    cfg: &SolverConfig,
    k: usize,
    data: &AtomicMeasure,
    total_mass: f64,
) -> Result<Stage> {
    let eps = cfg.eps_schedule[k];
    let h = cfg.grid.hx.max(cfg.grid.hy);
    let sigma = match cfg.sigma {
        Some(s) => s,
        None => {
            let c = profile_constants(cfg.alpha, DEFAULT_QUADRATURE_TOL)?;
            let theta = total_mass.max(f64::MIN_POSITIVE);
            let lo = cfg.grid.origin;
            let hi = cfg.grid.upper();
            let clearance = data
                .atoms
                .iter()
                .map(|(p, _)| {
                    (p[0] - lo[0])
                        .min(hi[0] - p[0])
                        .min(p[1] - lo[1])
                        .min(hi[1] - p[1])
                })
                .fold(f64::INFINITY, f64::min);
            (cfg.sigma_factor * solve_profile_with(&c, theta, eps, 64)?.support_halfwidth)
                .min(clearance / 3.0)
        }
    }
    .max(2.0 * h);
    let f = crate::measures::smooth_onto_grid(data, sigma, cfg.grid)?;
    let fplus_l1 = f.values.iter().filter(|v| **v > 0.0).sum::<f64>() * cfg.grid.cell_area();
    Ok(Stage {
        index: k,
        params: EnergyParams::new(cfg.alpha, eps, cfg.delta_schedule[k])?,
        exact: EnergyParams::new(cfg.alpha, eps, 0.0)?,
        f,
        fplus_l1,
        sigma,
    })
}

fn div_residual(u: &VectorField2D, f: &ScalarField2D, fplus_l1: f64) -> f64 {
    let d = divergence(u);
    let r: f64 = d
        .values
        .iter()
        .zip(f.values.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * u.spec.cell_area();
    if fplus_l1 > 0.0 {
        r / fplus_l1
    } else {
        r
    }
}

fn initial_psi(cfg: &SolverConfig, init: &Init, total_mass: f64) -> Result<NodeField2D> {
    let g = cfg.grid;
    Ok(match init {
        Init::Zero => NodeField2D::zeros(g),
        Init::WarmStart(p) => {
            let mut p = p.clone();
            p.clear_boundary();
            p
        }
        Init::Random { seed, amplitude } => {
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let mut noise = NodeField2D::from_fn(g, |_| rng.gen_range(-1.0..1.0));
            noise.clear_boundary();
            let smooth = NodeSolver::new(g).solve(&noise, 0.0, 1.0)?;
            let peak = smooth.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if peak > 0.0 {
                amplitude * total_mass / peak
            } else {
                0.0
            };
            NodeField2D::from_array(g, smooth.values.mapv(|v| v * scale))?
        }
    })
}

fn run(
    cfg: &SolverConfig,
    fplus: &AtomicMeasure,
    fminus: &AtomicMeasure,
    init: &Init,
    restart: usize,
) -> Result<SolveResult> {
    let data = fplus.minus(fminus);
    let total_mass = fplus.total();
    let psi0 = initial_psi(cfg, init, total_mass)?;
    match cfg.mode {
        ConstraintMode::Exact => run_exact(cfg, &data, total_mass, psi0, restart),
        _ => run_penalty(cfg, fplus, fminus, &data, total_mass, psi0, restart),
    }
}

fn run_exact(
    cfg: &SolverConfig,
    data: &AtomicMeasure,
    total_mass: f64,
    mut psi: NodeField2D,
    restart: usize,
) -> Result<SolveResult> {
    let grid = cfg.grid;
    let area = grid.cell_area();
    let poisson = PoissonSolver::new(grid, BoundaryCondition::NeumannZeroFlux);
    let spectral = NodeSolver::new(grid);
    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut best: Option<(f64, VectorField2D, NodeField2D)> = None;
    let mut last_stage = None;

    for k in 0..cfg.eps_schedule.len() {
        let st = stage_data(cfg, k, data, total_mass)?;
        let phi = poisson.solve(&st.f, POISSON_TOL)?;
        let grad_phi = cell_gradient(&phi, BoundaryCondition::NeumannZeroFlux);
        let eps = st.params.eps;
        let beta = st.params.beta();
        let amp = if total_mass > 0.0 {
            optimal_amplitude(total_mass, eps, cfg.alpha)?
        } else {
            1.0
        };
        let a = area * beta * st.params.concave_weight() * amp.powf(beta - 2.0);
        let b = area * 2.0 * st.params.dirichlet_weight();

        let compose = |psi: &NodeField2D| -> Result<VectorField2D> {
            let mut u = curl_apply(psi)?;
            u.add_scaled(1.0, &grad_phi);
            Ok(u)
        };
        let objective = |u: &VectorField2D| energy(u, &st.params).total;

        let mut u = compose(&psi)?;
        let mut j = objective(&u);
        let start = j;
        let mut step = cfg.step_size;
        let mut prev_dir: Option<NodeField2D> = None;
        let mut summary = StageSummary {
            eps,
            delta: st.params.delta,
            sigma: st.sigma,
            iterations: 0,
            start_objective: start,
            end_objective: start,
            exact_energy: f64::NAN,
            grad_norm: f64::NAN,
            converged: false,
            failed: false,
            mass_violations: 0,
        };
        let feasible_start = cfg.mass_bound.map(|kb| u.mass() <= kb).unwrap_or(true);
        let mut feasible = feasible_start;

        for it in 0..cfg.steps_per_stage {
            let grad = if st.params.delta > 0.0 {
                curl_adjoint(&energy_gradient_u(&u, &st.params)?.1)
            } else {
                return Err(Error::Precondition(
                    "exact-mode descent needs delta > 0 in every stage".into(),
                ));
            };
            let mut dir = spectral.solve(&grad, a, b)?;
            dir.values.mapv_inplace(|v| -v);
            if cfg.momentum > 0.0 {
                if let Some(p) = &prev_dir {
                    dir.values.scaled_add(cfg.momentum, &p.values);
                }
            }
            let mut slope: f64 = grad
                .values
                .iter()
                .zip(dir.values.iter())
                .map(|(g, d)| g * d)
                .sum();
            if slope >= 0.0 {
                // Momentum spoiled the direction; fall back to the plain one.
                dir = spectral.solve(&grad, a, b)?;
                dir.values.mapv_inplace(|v| -v);
                slope = grad
                    .values
                    .iter()
                    .zip(dir.values.iter())
                    .map(|(g, d)| g * d)
                    .sum();
            }
            summary.grad_norm = (-slope).max(0.0).sqrt();
            if summary.grad_norm <= cfg.tol_grad {
                summary.converged = true;
                break;
            }
            let mut accepted = None;
            let mut s = step;
            for _ in 0..=cfg.max_backtracks {
                let mut trial = psi.clone();
                trial.values.scaled_add(s, &dir.values);
                let ut = compose(&trial)?;
                let jt = objective(&ut);
                let mass_ok = match cfg.mass_bound {
                    Some(kb) if feasible => ut.mass() <= kb,
                    _ => true,
                };
                if !mass_ok {
                    summary.mass_violations += 1;
                }
                if jt.is_finite() && mass_ok && jt <= j + ARMIJO_C1 * s * slope {
                    accepted = Some((trial, ut, jt));
                    break;
                }
                s *= cfg.backtrack;
            }
            let Some((trial, ut, jt)) = accepted else {
                summary.failed = true;
                break;
            };
            prev_dir = Some(dir);
            psi = trial;
            u = ut;
            j = jt;
            if let Some(kb) = cfg.mass_bound {
                feasible = u.mass() <= kb;
            }
            summary.iterations = it + 1;
            step = (s / cfg.backtrack).min(cfg.step_size * 1e3);
            if (it + 1) % cfg.log_every == 0 || it == 0 {
                trace.push(trace_entry(restart, &st, it + 1, &u, j, s));
            }
        }
        summary.end_objective = j;
        let exact = energy(&u, &st.exact).total;
        summary.exact_energy = exact;
        trace.push(trace_entry(restart, &st, summary.iterations, &u, j, step));
        stages.push(summary);
        if k + 1 == cfg.eps_schedule.len() {
            let ok = cfg.mass_bound.map(|kb| u.mass() <= kb).unwrap_or(true);
            if ok || best.is_none() {
                best = Some((exact, u.clone(), psi.clone()));
            }
        }
        last_stage = Some(st);
    }
    let st = last_stage.expect("at least one stage");
    let (_, u, psi) = best.expect("final stage recorded");
    finish(cfg, st, u, psi, trace, stages, restart)
}

fn trace_entry(
    restart: usize,
    st: &Stage,
    iteration: usize,
    u: &VectorField2D,
    objective: f64,
    step: f64,
) -> TraceEntry {
    let e = energy(u, &st.params);
    TraceEntry {
        restart,
        stage: st.index,
        iteration,
        eps: st.params.eps,
        delta: st.params.delta,
        concave_term: e.concave_term,
        dirichlet_term: e.dirichlet_term,
        objective,
        exact_energy: energy(u, &st.exact).total,
        div_residual: div_residual(u, &st.f, st.fplus_l1),
        mass: u.mass(),
        step,
    }
}

fn finish(
    cfg: &SolverConfig,
    st: Stage,
    u: VectorField2D,
    psi: NodeField2D,
    energy_trace: Vec<TraceEntry>,
    stages: Vec<StageSummary>,
    restart: usize,
) -> Result<SolveResult> {
    let e = energy(&u, &st.exact);
    let mass = u.mass();
    let converged = stages.last().map(|s| s.converged).unwrap_or(false);
    Ok(SolveResult {
        div_residual: div_residual(&u, &st.f, st.fplus_l1),
        mass,
        energy: e.total,
        concave_term: e.concave_term,
        dirichlet_term: e.dirichlet_term,
        mass_feasible: cfg.mass_bound.map(|k| mass <= k).unwrap_or(true),
        u,
        psi,
        f: st.f,
        energy_trace,
        stages,
        converged,
        restart,
    })
}

/// Cells with non-negligible divergence as atoms at cell centres.
pub fn atomize(d: &ScalarField2D) -> AtomicMeasure {
    let max = d.max_abs();
    let area = d.spec.cell_area();
    let atoms = d
        .values
        .indexed_iter()
        .filter(|(_, v)| v.abs() > ATOM_THRESHOLD * max)
        .map(|((i, j), v)| (d.spec.cell_center(i, j), v * area))
        .collect();
    AtomicMeasure { atoms }
}

/// W1 penalty on the atomized divergence and its gradient with respect to
/// the cell divergence values.
///
/// The positive and negative parts of `div u` are rescaled to the masses of
/// `fplus` and `fminus` before transport; a quadratic term
/// `weight (mass⁺ − M)² + weight (mass⁻ − M)²` keeps the raw masses close.
/// The rescaling is held fixed when differentiating.
fn w1_penalty(
    d: &ScalarField2D,
    fplus: &AtomicMeasure,
    fminus: &AtomicMeasure,
    alpha: f64,
    weight: f64,
) -> Result<(f64, ScalarField2D)> {
    let spec = d.spec;
    let area = spec.cell_area();
    let max = d.max_abs();
    let e = 2.0 * alpha - 1.0;
    let mut value = 0.0;
    let mut grad = ScalarField2D::zeros(spec);
    for (sign, target) in [(1.0, fplus), (-1.0, fminus)] {
        let cells: Vec<(usize, usize, f64)> = d
            .values
            .indexed_iter()
            .filter(|(_, v)| sign * **v > ATOM_THRESHOLD * max)
            .map(|((i, j), v)| (i, j, sign * v * area))
            .collect();
        let raw: f64 = cells.iter().map(|c| c.2).sum();
        let m = target.total();
        value += weight * (raw - m).powi(2);
        for &(i, j, _) in &cells {
            grad.values[[i, j]] += weight * 2.0 * (raw - m) * sign * area;
        }
        if raw <= 0.0 || m <= 0.0 {
            continue;
        }
        let scale = m / raw;
        let mu = AtomicMeasure {
            atoms: cells
                .iter()
                .map(|&(i, j, w)| (spec.cell_center(i, j), w * scale))
                .collect(),
        };
        let t = w1_transport(&mu, target)?;
        if t.cost <= 0.0 {
            continue;
        }
        value += weight * t.cost.powf(e);
        let outer = weight * e * t.cost.powf(e - 1.0);
        for (k, &(i, j, _)) in cells.iter().enumerate() {
            grad.values[[i, j]] += outer * t.source_potential[k] * scale * sign * area;
        }
    }
    Ok((value, grad))
}

fn run_penalty(
    cfg: &SolverConfig,
    fplus: &AtomicMeasure,
    fminus: &AtomicMeasure,
    data: &AtomicMeasure,
    total_mass: f64,
    psi0: NodeField2D,
    restart: usize,
) -> Result<SolveResult> {
    let grid = cfg.grid;
    let area = grid.cell_area();
    let poisson = PoissonSolver::new(grid, BoundaryCondition::NeumannZeroFlux);
    let mut trace = Vec::new();
    let mut stages = Vec::new();
    let mut u: Option<VectorField2D> = None;
    let mut last_stage = None;
    let mut best: Option<(f64, VectorField2D)> = None;

    for k in 0..cfg.eps_schedule.len() {
        let st = stage_data(cfg, k, data, total_mass)?;
        if !(st.params.delta > 0.0) {
            return Err(Error::Precondition(
                "penalty descent needs delta > 0 in every stage".into(),
            ));
        }
        let mut cur = match u.take() {
            Some(u) => u,
            None => {
                let phi = poisson.solve(&st.f, POISSON_TOL)?;
                let mut u0 = curl_apply(&psi0)?;
                u0.add_scaled(
                    1.0,
                    &cell_gradient(&phi, BoundaryCondition::NeumannZeroFlux),
                );
                u0
            }
        };
        let objective = |u: &VectorField2D| -> Result<(f64, VectorField2D)> {
            let (e, mut g) = energy_gradient_u(u, &st.params)?;
            let mut d = divergence(u);
            match cfg.mode {
                ConstraintMode::Quadratic { lambda } => {
                    d.values.zip_mut_with(&st.f.values, |a, b| *a -= b);
                    let pen = lambda * area * d.values.iter().map(|v| v * v).sum::<f64>();
                    let r = ScalarField2D::from_array(
                        grid,
                        d.values.mapv(|v| 2.0 * lambda * area * v),
                    )?;
                    g.add_scaled(1.0, &divergence_adjoint(&r));
                    Ok((e + pen, g))
                }
                ConstraintMode::W1 { weight } => {
                    let (pen, dg) = w1_penalty(&d, fplus, fminus, cfg.alpha, weight)?;
                    g.add_scaled(1.0, &divergence_adjoint(&dg));
                    Ok((e + pen, g))
                }
                ConstraintMode::Exact => unreachable!("exact mode has its own loop"),
            }
        };
        let subgradient = matches!(cfg.mode, ConstraintMode::W1 { .. });
        let (mut j, mut g) = objective(&cur)?;
        let mut summary = StageSummary {
            eps: st.params.eps,
            delta: st.params.delta,
            sigma: st.sigma,
            iterations: 0,
            start_objective: j,
            end_objective: j,
            exact_energy: f64::NAN,
            grad_norm: f64::NAN,
            converged: false,
            failed: false,
            mass_violations: 0,
        };
        let mut step = cfg.step_size;
        let mut stage_best = (j, cur.clone());
        for it in 0..cfg.steps_per_stage {
            let gn2 = g.ux.iter().chain(g.uy.iter()).map(|v| v * v).sum::<f64>();
            summary.grad_norm = gn2.sqrt();
            if summary.grad_norm <= cfg.tol_grad {
                summary.converged = true;
                break;
            }
            if subgradient {
                // Normalized subgradient step with diminishing length.
                let s = cfg.step_size / ((it + 1) as f64).sqrt() / summary.grad_norm;
                cur.add_scaled(-s, &g);
                let (jn, gn) = objective(&cur)?;
                j = jn;
                g = gn;
                if j < stage_best.0 {
                    stage_best = (j, cur.clone());
                }
                summary.iterations = it + 1;
                if (it + 1) % cfg.log_every == 0 || it == 0 {
                    trace.push(trace_entry(restart, &st, it + 1, &cur, j, s));
                }
                continue;
            }
            let mut accepted = None;
            let mut s = step;
            for _ in 0..=cfg.max_backtracks {
                let mut trial = cur.clone();
                trial.add_scaled(-s, &g);
                let (jt, gt) = objective(&trial)?;
                if jt.is_finite() && jt <= j - ARMIJO_C1 * s * gn2 {
                    accepted = Some((trial, jt, gt));
                    break;
                }
                s *= cfg.backtrack;
            }
            let Some((trial, jt, gt)) = accepted else {
                summary.failed = true;
                break;
            };
            cur = trial;
            j = jt;
            g = gt;
            stage_best = (j, cur.clone());
            summary.iterations = it + 1;
            step = s / cfg.backtrack;
            if (it + 1) % cfg.log_every == 0 || it == 0 {
                trace.push(trace_entry(restart, &st, it + 1, &cur, j, s));
            }
        }
        let (jb, ub) = stage_best;
        summary.end_objective = jb;
        summary.exact_energy = energy(&ub, &st.exact).total;
        trace.push(trace_entry(restart, &st, summary.iterations, &ub, jb, step));
        stages.push(summary);
        if k + 1 == cfg.eps_schedule.len() {
            best = Some((jb, ub.clone()));
        }
        u = Some(ub);
        last_stage = Some(st);
    }
    let st = last_stage.expect("at least one stage");
    let (_, u) = best.expect("final stage recorded");
    finish(cfg, st, u, NodeField2D::zeros(grid), trace, stages, restart)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_grid(n: usize) -> GridSpec {
        GridSpec::from_bounds(n, n, [0.0, 0.0], [1.0, 1.0]).unwrap()
    }

    #[test]
    fn schedule_examples() {
        let s = continuation_schedule(0.1, 0.00625, 5).unwrap();
        let expect = [0.1, 0.05, 0.025, 0.0125, 0.00625];
        assert_eq!(s.len(), 5);
        for (a, b) in s.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        let d = default_deltas(&s, 0.8);
        assert!(d.windows(2).all(|w| w[1] <= w[0]));
        assert!(continuation_schedule(0.01, 0.1, 5).is_err());
        assert!(continuation_schedule(0.1, 0.01, 1).is_err());
    }

    #[test]
    fn mass_guard_examples() {
        let g = unit_grid(8);
        assert_eq!(
            mass_guard(&VectorField2D::zeros(g), 1e-9),
            MassStatus::Feasible
        );
        let u = VectorField2D::from_fn(g, |_| [1.0, 0.0]);
        assert!(
            matches!(mass_guard(&u, 0.5), MassStatus::Exceeded { by } if (by - 0.5).abs() < 1e-12)
        );
    }

    #[test]
    fn coincident_source_and_sink_give_zero() {
        let g = unit_grid(32);
        let mut cfg = SolverConfig::new(0.8, g, 0.1, 0.05, 2).unwrap();
        cfg.steps_per_stage = 5;
        cfg.init = Init::Zero;
        cfg.sigma = Some(0.05);
        let a = AtomicMeasure::dirac([0.5, 0.5], 1.0);
        let r = solve(&cfg, &a, &a).unwrap();
        assert!(r.u.max_abs() < 1e-12);
        assert!(r.energy < 1e-12);
    }

    #[test]
    fn rejects_bad_config() {
        let g = unit_grid(16);
        let mut cfg = SolverConfig::new(0.8, g, 0.1, 0.05, 2).unwrap();
        cfg.eps_schedule = vec![0.05, 0.1];
        assert!(cfg.validate().is_err());
        let mut cfg = SolverConfig::new(0.8, g, 0.1, 0.05, 2).unwrap();
        cfg.mode = ConstraintMode::Quadratic { lambda: 0.0 };
        assert!(cfg.validate().is_err());
    }
}
