//! `ebt`: command-line front end for the branched-transport toolkit.
//!
//! Exit codes: 0 success, 1 usage or invalid parameters, 2 unreadable or
//! malformed input, 3 numeric failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use ebt_core::constants::{exponents, profile_constants, DEFAULT_QUADRATURE_TOL};
use ebt_core::diagnostics::{dyadic_level_sums, galpha_dyadic, run_report};
use ebt_core::energy::{energy, EnergyParams};
use ebt_core::io::{self, fmt_f64, Config, Field, RunManifest};
use ebt_core::measures::graph_energy;
use ebt_core::profile::solve_profile;
use ebt_core::solver::solve;
use ebt_core::synth::synthesize_graph;
use ebt_core::w1::w1_distance;
use ebt_core::{Error, GridSpec};

#[derive(Parser)]
#[command(
    name = "ebt",
    version,
    about = "Elliptic approximation of branched transport"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the exponents and profile constants as CSV.
    Constants {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 2)]
        d: u32,
    },
    /// Write the transverse profile of a single edge as CSV.
    Profile {
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        theta: f64,
        #[arg(long)]
        eps: f64,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
        /// Number of samples across the support.
        #[arg(long, default_value_t = 513)]
        samples: usize,
    },
    /// Build the recovery field of a weighted graph.
    Synthesize {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, num_args = 2, value_names = ["NX", "NY"])]
        grid: Vec<usize>,
        /// Domain bounds; defaults to the unit square.
        #[arg(long, num_args = 4, value_names = ["X0", "Y0", "X1", "Y1"], allow_negative_numbers = true)]
        domain: Option<Vec<f64>>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        no_node_correction: bool,
    },
    /// Print the energy of a stored vector field.
    Energy {
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        eps: f64,
        #[arg(long, default_value_t = 0.0)]
        delta: f64,
    },
    /// Run the continuation solver.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        fplus: PathBuf,
        #[arg(long)]
        fminus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override a config entry, `key=value`; may be repeated.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Evaluate the dyadic atomicity functional of a measure on [0, 1).
    Galpha {
        #[arg(long)]
        measure: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        nmax: u32,
    },
    /// Wasserstein-1 distance between two atomic measures.
    W1 {
        #[arg(long)]
        mu: PathBuf,
        #[arg(long)]
        nu: PathBuf,
    },
    /// Ratio of a field's energy to c times a graph's energy.
    Compare {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        field: PathBuf,
        #[arg(long)]
        alpha: f64,
        #[arg(long)]
        eps: f64,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Format(_) | Error::Io(_) | Error::Dimension(_) | Error::Compatibility(_) => 2,
        Error::Numeric { .. } => 3,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cmd: Command) -> Result<String, Error> {
    match cmd {
        Command::Constants { alpha, d } => constants(alpha, d),
        Command::Profile {
            alpha,
            theta,
            eps,
            out,
            samples,
        } => profile(alpha, theta, eps, &out, samples),
        Command::Synthesize {
            graph,
            alpha,
            eps,
            grid,
            domain,
            out,
            no_node_correction,
        } => synthesize(
            &graph,
            alpha,
            eps,
            &grid,
            domain.as_deref(),
            &out,
            !no_node_correction,
        ),
        Command::Energy {
            field,
            alpha,
            eps,
            delta,
        } => {
            let u = io::read_vector_field(&field)?;
            let b = energy(&u, &EnergyParams::new(alpha, eps, delta)?);
            Ok(format!(
                "concave,dirichlet,total,mass\n{},{},{},{}\n",
                fmt_f64(b.concave_term),
                fmt_f64(b.dirichlet_term),
                fmt_f64(b.total),
                fmt_f64(u.mass())
            ))
        }
        Command::Solve {
            config,
            fplus,
            fminus,
            out,
            overrides,
        } => run_solve(&config, &fplus, &fminus, &out, &overrides),
        Command::Galpha {
            measure,
            alpha,
            nmax,
        } => {
            let nu = io::parse_line_measure(&fs::read_to_string(&measure)?)?;
            let value = galpha_dyadic(&nu, alpha, nmax)?;
            let mut s = String::from("level,sum\n");
            for (n, v) in dyadic_level_sums(&nu, alpha, nmax)?.iter().enumerate() {
                let _ = writeln!(s, "{n},{}", fmt_f64(*v));
            }
            let _ = writeln!(s, "galpha,{}", fmt_f64(value));
            Ok(s)
        }
        Command::W1 { mu, nu } => {
            let d = w1_distance(&io::read_measure(&mu)?, &io::read_measure(&nu)?)?;
            Ok(format!("{}\n", fmt_f64(d)))
        }
        Command::Compare {
            graph,
            field,
            alpha,
            eps,
        } => {
            let g = io::read_graph(&graph)?;
            let u = io::read_vector_field(&field)?;
            let e = energy(&u, &EnergyParams::new(alpha, eps, 0.0)?).total;
            let c = profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?.c;
            let reference = c * graph_energy(&g, alpha);
            if reference <= 0.0 {
                return Err(Error::Domain("graph has zero energy".into()));
            }
            Ok(format!(
                "field_energy,graph_energy,c,ratio\n{},{},{},{}\n",
                fmt_f64(e),
                fmt_f64(graph_energy(&g, alpha)),
                fmt_f64(c),
                fmt_f64(e / reference)
            ))
        }
    }
}

fn constants(alpha: f64, d: u32) -> Result<String, Error> {
    let x = exponents(alpha, d)?;
    let mut s = format!(
        "alpha={},d={},beta={},gamma1={},gamma2={},amplitude_exponent={}",
        fmt_f64(x.alpha),
        x.d,
        fmt_f64(x.beta),
        fmt_f64(x.gamma1),
        fmt_f64(x.gamma2),
        fmt_f64(x.amplitude_exponent())
    );
    if d == 2 {
        let c = profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?;
        let _ = write!(
            s,
            ",c0={},c0_moment={},c={}",
            fmt_f64(c.c0),
            fmt_f64(c.c0_moment),
            fmt_f64(c.c)
        );
    }
    s.push('\n');
    Ok(s)
}

fn profile(alpha: f64, theta: f64, eps: f64, out: &Path, samples: usize) -> Result<String, Error> {
    if samples < 3 {
        return Err(Error::Domain("need at least 3 samples".into()));
    }
    let p = solve_profile(alpha, theta, eps, 256)?;
    let w = p.support_halfwidth;
    let mut s = format!(
        "# amplitude={} plateau_halfwidth={} support_halfwidth={} kappa={}\noffset,intensity,flux_below,energy_density\n",
        fmt_f64(p.amplitude),
        fmt_f64(p.plateau_halfwidth),
        fmt_f64(w),
        fmt_f64(p.kappa)
    );
    for k in 0..samples {
        let y = -w + 2.0 * w * k as f64 / (samples - 1) as f64;
        let _ = writeln!(
            s,
            "{},{},{},{}",
            fmt_f64(y),
            fmt_f64(p.intensity(y)),
            fmt_f64(p.flux_below(y)),
            fmt_f64(p.energy_density(y))
        );
    }
    fs::write(out, s)?;
    Ok(format!(
        "support_halfwidth,{}\nflux,{}\n",
        fmt_f64(w),
        fmt_f64(p.total_flux())
    ))
}

fn domain_grid(cells: &[usize], domain: Option<&[f64]>) -> Result<GridSpec, Error> {
    let (lo, hi) = match domain {
        Some(d) => ([d[0], d[1]], [d[2], d[3]]),
        None => ([0.0, 0.0], [1.0, 1.0]),
    };
    if !(hi[0] > lo[0] && hi[1] > lo[1]) {
        return Err(Error::Domain("domain must have positive extent".into()));
    }
    GridSpec::from_bounds(cells[0], cells[1], lo, hi)
}

fn fresh_dir(out: &Path) -> Result<(), Error> {
    fs::create_dir_all(out)?;
    Ok(())
}

fn write_field(m: &mut RunManifest, out: &Path, stem: &str, f: &Field) -> Result<(), Error> {
    m.write_output(out, &format!("{stem}.btf"), &io::btf_to_bytes(f))?;
    let (img, side) = io::field_pgm(f);
    m.write_output(out, &format!("{stem}.pgm"), &img)?;
    m.write_output(out, &format!("{stem}.pgm.txt"), side.as_bytes())?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synthesize(
    graph: &Path,
    alpha: f64,
    eps: f64,
    cells: &[usize],
    domain: Option<&[f64]>,
    out: &Path,
    correct: bool,
) -> Result<String, Error> {
    let start = Instant::now();
    let g = io::read_graph(graph)?;
    let spec = domain_grid(cells, domain)?;
    let syn = synthesize_graph(&g, eps, alpha, spec, correct)?;
    fresh_dir(out)?;
    let mut m = RunManifest::new("synthesize");
    m.add_input(graph)?;
    for (k, v) in [
        ("alpha", fmt_f64(alpha)),
        ("eps", fmt_f64(eps)),
        ("nx", spec.nx.to_string()),
        ("ny", spec.ny.to_string()),
        ("node_correction", correct.to_string()),
    ] {
        m.config.push((k.to_string(), v));
    }
    write_field(&mut m, out, "field", &Field::Vector(syn.field.clone()))?;
    m.write_output(
        out,
        "correction.btf",
        &io::btf_to_bytes(&Field::Vector(syn.correction.clone())),
    )?;

    let mut nodes = String::from("x,y,degree,source_mass,radius,residual_before,residual_after\n");
    for n in &syn.nodes {
        let _ = writeln!(
            nodes,
            "{},{},{},{},{},{},{}",
            fmt_f64(n.point[0]),
            fmt_f64(n.point[1]),
            n.degree,
            fmt_f64(n.source_mass),
            fmt_f64(n.radius),
            fmt_f64(n.residual_before),
            fmt_f64(n.residual_after)
        );
    }
    m.write_output(out, "nodes.csv", nodes.as_bytes())?;

    let b = energy(&syn.field, &EnergyParams::new(alpha, eps, 0.0)?);
    let c = profile_constants(alpha, DEFAULT_QUADRATURE_TOL)?.c;
    let ge = graph_energy(&g, alpha);
    let mut summary = format!(
        "energy {}\nconcave {}\ndirichlet {}\ngraph_energy {}\nratio {}\nresidual_before {}\nresidual_after {}\n",
        fmt_f64(b.total),
        fmt_f64(b.concave_term),
        fmt_f64(b.dirichlet_term),
        fmt_f64(ge),
        fmt_f64(b.total / (c * ge)),
        fmt_f64(syn.total_residual_before()),
        fmt_f64(syn.total_residual_after())
    );
    for w in &syn.warnings {
        let _ = writeln!(summary, "warning {w}");
    }
    m.write_output(out, "summary.txt", summary.as_bytes())?;
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(out)?;
    for w in &syn.warnings {
        eprintln!("warning: {w}");
    }
    Ok(summary)
}

fn run_solve(
    config: &Path,
    fplus: &Path,
    fminus: &Path,
    out: &Path,
    overrides: &[String],
) -> Result<String, Error> {
    let start = Instant::now();
    let mut cfg_text = Config::parse(&fs::read_to_string(config)?)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| Error::Domain(format!("override `{o}` is not key=value")))?;
        cfg_text.set(k.trim(), v.trim());
    }
    let cfg = cfg_text.solver_config()?;
    let fp = io::read_measure(fplus)?;
    let fm = io::read_measure(fminus)?;
    let r = solve(&cfg, &fp, &fm)?;

    fresh_dir(out)?;
    let mut m = RunManifest::new("solve");
    m.add_input(config)?;
    m.add_input(fplus)?;
    m.add_input(fminus)?;
    m.config = cfg_text.entries.clone().into_iter().collect();
    write_field(&mut m, out, "u", &Field::Vector(r.u.clone()))?;
    m.write_output(
        out,
        "psi.btf",
        &io::btf_to_bytes(&Field::Node(r.psi.clone())),
    )?;
    m.write_output(out, "f.btf", &io::btf_to_bytes(&Field::Scalar(r.f.clone())))?;

    let mut trace =
        String::from("restart,stage,iter,eps,delta,concave,dirichlet,total,div_residual,mass\n");
    for t in &r.energy_trace {
        let _ = writeln!(
            trace,
            "{},{},{},{},{},{},{},{},{},{}",
            t.restart,
            t.stage,
            t.iteration,
            fmt_f64(t.eps),
            fmt_f64(t.delta),
            fmt_f64(t.concave_term),
            fmt_f64(t.dirichlet_term),
            fmt_f64(t.objective),
            fmt_f64(t.div_residual),
            fmt_f64(t.mass)
        );
    }
    m.write_output(out, "trace.csv", trace.as_bytes())?;

    let report = run_report(&r, &cfg, &[])?;
    let c = profile_constants(cfg.alpha, DEFAULT_QUADRATURE_TOL)?.c;
    let mut summary = report.summary();
    let _ = writeln!(summary, "energy / c     {:.6e}", r.energy / c);
    let _ = writeln!(summary, "converged      {}", r.converged);
    let _ = writeln!(summary, "mass feasible  {}", r.mass_feasible);
    let _ = writeln!(summary, "best restart   {}", r.restart);
    for (k, s) in r.stages.iter().enumerate() {
        let _ = writeln!(
            summary,
            "stage {k}: eps {:.4e} delta {:.4e} sigma {:.4e} iterations {} energy {:.6e}{}",
            s.eps,
            s.delta,
            s.sigma,
            s.iterations,
            s.exact_energy,
            if s.failed {
                " (line search failed)"
            } else {
                ""
            }
        );
    }
    m.write_output(
        out,
        "report.csv",
        format!(
            "{}\n{}\n",
            ebt_core::diagnostics::RunReport::csv_header(),
            report.csv_row()
        )
        .as_bytes(),
    )?;
    m.write_output(out, "summary.txt", summary.as_bytes())?;
    m.wall_clock_seconds = start.elapsed().as_secs_f64();
    m.write(out)?;
    if r.div_residual > 1e-6 && cfg.mode == ebt_core::solver::ConstraintMode::Exact {
        eprintln!("divergence residual {:e}", r.div_residual);
        return Err(Error::Numeric {
            message: "exact-mode divergence residual above 1e-6".into(),
            achieved: r.div_residual,
        });
    }
    Ok(summary)
}
