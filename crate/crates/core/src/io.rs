//! File formats: BTF1 binary fields, CSV and PGM exports, graph and
//! measure text files, flat `key = value` configs and run manifests.
//!
//! Text output uses 17 significant digits so every float64 round-trips.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::grid::{GridSpec, NodeField2D, ScalarField2D, VectorField2D};
use crate::measures::{AtomicMeasure, Edge, WeightedGraph};
use crate::solver::{ConstraintMode, Init, SolverConfig};

/// Float formatting with 17 significant digits, positional for moderate
/// exponents and scientific otherwise (like C's `%.17g`).
pub fn fmt_f64(v: f64) -> String {
    if !v.is_finite() || v == 0.0 {
        return format!("{v}");
    }
    let sci = format!("{v:.16e}");
    let exp: i32 = sci[sci.find('e').unwrap() + 1..].parse().unwrap();
    if !(-5..17).contains(&exp) {
        return sci;
    }
    let digits = (16 - exp).max(0) as usize;
    let s = format!("{v:.digits$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// 64-bit FNV-1a hash.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

// ---------------------------------------------------------------- BTF1

/// Any field that can be stored in a BTF1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Scalar(ScalarField2D),
    Vector(VectorField2D),
    /// Node-centred values (stream potentials).
    Node(NodeField2D),
}

impl Field {
    pub fn spec(&self) -> GridSpec {
        match self {
            Field::Scalar(f) => f.spec,
            Field::Vector(f) => f.spec,
            Field::Node(f) => f.spec,
        }
    }

    fn kind(&self) -> &'static str {
        match self {
            Field::Scalar(_) => "scalar",
            Field::Vector(_) => "vector",
            Field::Node(_) => "node",
        }
    }
}

fn push_block(out: &mut Vec<u8>, a: &Array2<f64>) {
    let (mx, my) = a.dim();
    for j in 0..my {
        for i in 0..mx {
            out.extend_from_slice(&a[[i, j]].to_le_bytes());
        }
    }
}

fn take_block(bytes: &[u8], pos: &mut usize, mx: usize, my: usize) -> Result<Array2<f64>> {
    let need = mx * my * 8;
    if bytes.len() < *pos + need {
        return Err(Error::Format("BTF1 payload is truncated".into()));
    }
    let mut a = Array2::zeros((mx, my));
    for j in 0..my {
        for i in 0..mx {
            let k = *pos + 8 * (j * mx + i);
            a[[i, j]] = f64::from_le_bytes(bytes[k..k + 8].try_into().unwrap());
        }
    }
    *pos += need;
    Ok(a)
}

pub fn btf_to_bytes(field: &Field) -> Vec<u8> {
    let g = field.spec();
    let mut out = format!(
        "BTF1 {} {} {} {} {} {} {}\n",
        field.kind(),
        g.nx,
        g.ny,
        fmt_f64(g.hx),
        fmt_f64(g.hy),
        fmt_f64(g.origin[0]),
        fmt_f64(g.origin[1])
    )
    .into_bytes();
    match field {
        Field::Scalar(f) => push_block(&mut out, &f.values),
        Field::Node(f) => push_block(&mut out, &f.values),
        Field::Vector(f) => {
            push_block(&mut out, &f.ux);
            push_block(&mut out, &f.uy);
        }
    }
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

pub fn btf_from_bytes(bytes: &[u8]) -> Result<Field> {
    let nl = bytes
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| bad("BTF1 header has no newline"))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| bad("BTF1 header is not text"))?;
    let t: Vec<&str> = header.split_whitespace().collect();
    if t.len() != 8 || t[0] != "BTF1" {
        return Err(bad(format!("bad BTF1 header `{header}`")));
    }
    let int = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| bad(format!("bad integer `{s}`")))
    };
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| bad(format!("bad number `{s}`")))
    };
    let spec = GridSpec::new(
        int(t[2])?,
        int(t[3])?,
        num(t[4])?,
        num(t[5])?,
        [num(t[6])?, num(t[7])?],
    )
    .map_err(|e| bad(e.to_string()))?;
    let (nx, ny) = (spec.nx, spec.ny);
    let mut pos = nl + 1;
    let field = match t[1] {
        "scalar" => Field::Scalar(ScalarField2D::from_array(
            spec,
            take_block(bytes, &mut pos, nx, ny)?,
        )?),
        "node" => Field::Node(NodeField2D::from_array(
            spec,
            take_block(bytes, &mut pos, nx + 1, ny + 1)?,
        )?),
        "vector" => {
            let ux = take_block(bytes, &mut pos, nx + 1, ny)?;
            let uy = take_block(bytes, &mut pos, nx, ny + 1)?;
            Field::Vector(VectorField2D::from_arrays(spec, ux, uy)?)
        }
        k => return Err(bad(format!("unknown BTF1 kind `{k}`"))),
    };
    if pos != bytes.len() {
        return Err(bad("trailing bytes after BTF1 payload"));
    }
    Ok(field)
}

pub fn write_btf(path: &Path, field: &Field) -> Result<()> {
    fs::write(path, btf_to_bytes(field))?;
    Ok(())
}

pub fn read_btf(path: &Path) -> Result<Field> {
    btf_from_bytes(&fs::read(path)?)
}

/// Read a BTF1 file that must hold a vector field.
pub fn read_vector_field(path: &Path) -> Result<VectorField2D> {
    match read_btf(path)? {
        Field::Vector(u) => Ok(u),
        other => Err(bad(format!(
            "expected a vector field, found {}",
            other.kind()
        ))),
    }
}

// ---------------------------------------------------------------- CSV / PGM

/// Cell-centre samples: `x,y,value` for scalars, `x,y,ux,uy` for vectors.
/// Node fields are written at the nodes.
pub fn field_csv(field: &Field) -> String {
    let g = field.spec();
    let mut s = String::new();
    match field {
        Field::Scalar(f) => {
            s.push_str("x,y,value\n");
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let p = g.cell_center(i, j);
                    let _ = writeln!(
                        s,
                        "{},{},{}",
                        fmt_f64(p[0]),
                        fmt_f64(p[1]),
                        fmt_f64(f.values[[i, j]])
                    );
                }
            }
        }
        Field::Node(f) => {
            s.push_str("x,y,value\n");
            for j in 0..=g.ny {
                for i in 0..=g.nx {
                    let p = g.node(i, j);
                    let _ = writeln!(
                        s,
                        "{},{},{}",
                        fmt_f64(p[0]),
                        fmt_f64(p[1]),
                        fmt_f64(f.values[[i, j]])
                    );
                }
            }
        }
        Field::Vector(f) => {
            s.push_str("x,y,ux,uy\n");
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let p = g.cell_center(i, j);
                    let v = f.cell_vector(i, j);
                    let _ = writeln!(
                        s,
                        "{},{},{},{}",
                        fmt_f64(p[0]),
                        fmt_f64(p[1]),
                        fmt_f64(v[0]),
                        fmt_f64(v[1])
                    );
                }
            }
        }
    }
    s
}

/// 16-bit binary PGM of a scalar field (vectors use the cell magnitude),
/// linearly scaled between its min and max. Returns the image bytes and a
/// sidecar text recording the scaling.
pub fn field_pgm(field: &Field) -> (Vec<u8>, String) {
    let values = match field {
        Field::Scalar(f) => f.values.clone(),
        Field::Node(f) => f.values.clone(),
        Field::Vector(f) => f.magnitude().values,
    };
    let (w, h) = values.dim();
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    // Top row of the image is the largest y.
    for j in (0..h).rev() {
        for i in 0..w {
            let q = ((values[[i, j]] - lo) / span * 65535.0)
                .round()
                .clamp(0.0, 65535.0) as u16;
            out.extend_from_slice(&q.to_be_bytes());
        }
    }
    let sidecar = format!(
        "kind = {}\nwidth = {w}\nheight = {h}\nmin = {}\nmax = {}\n",
        field.kind(),
        fmt_f64(lo),
        fmt_f64(hi)
    );
    (out, sidecar)
}

// ---------------------------------------------------------------- text formats

/// Numeric rows of a whitespace-separated text file, skipping blank lines
/// and `#` comments.
fn numeric_rows(text: &str, width: usize, what: &str) -> Result<Vec<Vec<f64>>> {
    let mut rows = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: std::result::Result<Vec<f64>, _> =
            line.split_whitespace().map(str::parse::<f64>).collect();
        let vals = vals.map_err(|_| bad(format!("{what} line {}: not a number", k + 1)))?;
        if vals.len() != width {
            return Err(bad(format!(
                "{what} line {}: expected {width} values, found {}",
                k + 1,
                vals.len()
            )));
        }
        rows.push(vals);
    }
    Ok(rows)
}

/// One edge per line: `x0 y0 x1 y1 weight`.
pub fn parse_graph(text: &str) -> Result<WeightedGraph> {
    let edges = numeric_rows(text, 5, "graph")?
        .into_iter()
        .map(|r| Edge {
            p0: [r[0], r[1]],
            p1: [r[2], r[3]],
            weight: r[4],
        })
        .collect();
    WeightedGraph::new(edges).map_err(|e| bad(e.to_string()))
}

pub fn graph_text(g: &WeightedGraph) -> String {
    let mut s = String::from("# x0 y0 x1 y1 weight\n");
    for e in g.edges() {
        let _ = writeln!(
            s,
            "{} {} {} {} {}",
            fmt_f64(e.p0[0]),
            fmt_f64(e.p0[1]),
            fmt_f64(e.p1[0]),
            fmt_f64(e.p1[1]),
            fmt_f64(e.weight)
        );
    }
    s
}

/// One atom per line: `x y mass`.
pub fn parse_measure(text: &str) -> Result<AtomicMeasure> {
    let atoms = numeric_rows(text, 3, "measure")?
        .into_iter()
        .map(|r| ([r[0], r[1]], r[2]))
        .collect();
    AtomicMeasure::new(atoms).map_err(|e| bad(e.to_string()))
}

pub fn measure_text(m: &AtomicMeasure) -> String {
    let mut s = String::from("# x y mass\n");
    for (p, w) in &m.atoms {
        let _ = writeln!(s, "{} {} {}", fmt_f64(p[0]), fmt_f64(p[1]), fmt_f64(*w));
    }
    s
}

/// One-dimensional signed measure, one atom per line: `x mass`.
pub fn parse_line_measure(text: &str) -> Result<Vec<(f64, f64)>> {
    Ok(numeric_rows(text, 2, "measure")?
        .into_iter()
        .map(|r| (r[0], r[1]))
        .collect())
}

pub fn read_graph(path: &Path) -> Result<WeightedGraph> {
    parse_graph(&fs::read_to_string(path)?)
}

pub fn read_measure(path: &Path) -> Result<AtomicMeasure> {
    parse_measure(&fs::read_to_string(path)?)
}

// ---------------------------------------------------------------- config

/// Flat `key = value` configuration with `#` comments. Later keys win.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    pub entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("config line {}: expected `key = value`", k + 1)))?;
            let key = key.trim();
            if key.is_empty() {
                return Err(bad(format!("config line {}: empty key", k + 1)));
            }
            entries.insert(key.to_string(), value.trim().to_string());
        }
        Ok(Config { entries })
    }

    pub fn set(&mut self, key: &str, value: &str) {
        self.entries.insert(key.to_string(), value.to_string());
    }

    pub fn text(&self) -> String {
        self.entries
            .iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    fn num<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| bad(format!("config key `{key}`: cannot parse `{v}`"))),
        }
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map(Some)
                .map_err(|_| bad(format!("config key `{key}`: cannot parse list `{v}`"))),
        }
    }

    /// Build a solver configuration. Unknown keys are rejected.
    ///
    /// Keys: `alpha`, `nx`, `ny`, `x0`, `y0`, `x1`, `y1`, `eps0`,
    /// `eps_final`, `stages` (or an explicit `eps_schedule` list),
    /// `delta_schedule`, `delta_scale`, `steps_per_stage`, `step_size`,
    /// `backtrack`, `max_backtracks`, `mode` (`exact`, `quadratic`, `w1`),
    /// `lambda`, `w1_weight`, `mass_bound`, `init` (`zero`, `random`),
    /// `seed`, `init_amplitude`, `tol_grad`, `momentum`, `restarts`,
    /// `sigma`, `sigma_factor`, `log_every`.
    pub fn solver_config(&self) -> Result<SolverConfig> {
        const KNOWN: &[&str] = &[
            "alpha",
            "nx",
            "ny",
            "x0",
            "y0",
            "x1",
            "y1",
            "eps0",
            "eps_final",
            "stages",
            "eps_schedule",
            "delta_schedule",
            "delta_scale",
            "steps_per_stage",
            "step_size",
            "backtrack",
            "max_backtracks",
            "mode",
            "lambda",
            "w1_weight",
            "mass_bound",
            "init",
            "seed",
            "init_amplitude",
            "tol_grad",
            "momentum",
            "restarts",
            "sigma",
            "sigma_factor",
            "log_every",
        ];
        if let Some(k) = self.entries.keys().find(|k| !KNOWN.contains(&k.as_str())) {
            return Err(bad(format!("unknown config key `{k}`")));
        }
        let alpha = self.num("alpha")?.unwrap_or(0.8);
        let nx = self.num("nx")?.unwrap_or(128);
        let ny = self.num("ny")?.unwrap_or(nx);
        let lo = [
            self.num("x0")?.unwrap_or(0.0),
            self.num("y0")?.unwrap_or(0.0),
        ];
        let hi = [
            self.num("x1")?.unwrap_or(1.0),
            self.num("y1")?.unwrap_or(1.0),
        ];
        let grid = GridSpec::from_bounds(nx, ny, lo, hi)?;
        let eps0 = self.num("eps0")?.unwrap_or(0.04);
        let eps_final = self.num("eps_final")?.unwrap_or(0.0025);
        let stages = self.num("stages")?.unwrap_or(5);
        let mut cfg = SolverConfig::new(alpha, grid, eps0, eps_final, stages)?;
        if let Some(e) = self.list("eps_schedule")? {
            cfg.delta_schedule = crate::solver::default_deltas(&e, alpha);
            cfg.eps_schedule = e;
        }
        if let Some(d) = self.list("delta_schedule")? {
            cfg.delta_schedule = d;
        }
        if let Some(s) = self.num::<f64>("delta_scale")? {
            cfg.delta_schedule.iter_mut().for_each(|d| *d *= s);
        }
        macro_rules! set {
            ($key:literal, $field:ident) => {
                if let Some(v) = self.num($key)? {
                    cfg.$field = v;
                }
            };
        }
        set!("steps_per_stage", steps_per_stage);
        set!("step_size", step_size);
        set!("backtrack", backtrack);
        set!("max_backtracks", max_backtracks);
        set!("tol_grad", tol_grad);
        set!("momentum", momentum);
        set!("restarts", restarts);
        set!("sigma_factor", sigma_factor);
        set!("log_every", log_every);
        cfg.sigma = self.num("sigma")?;
        cfg.mass_bound = self.num("mass_bound")?;
        cfg.mode = match self.entries.get("mode").map(String::as_str) {
            None | Some("exact") => ConstraintMode::Exact,
            Some("quadratic") => ConstraintMode::Quadratic {
                lambda: self
                    .num("lambda")?
                    .ok_or_else(|| bad("quadratic mode needs `lambda`"))?,
            },
            Some("w1") => ConstraintMode::W1 {
                weight: self
                    .num("w1_weight")?
                    .ok_or_else(|| bad("w1 mode needs `w1_weight`"))?,
            },
            Some(m) => return Err(bad(format!("unknown mode `{m}`"))),
        };
        cfg.init = match self.entries.get("init").map(String::as_str) {
            Some("zero") => Init::Zero,
            None | Some("random") => Init::Random {
                seed: self.num("seed")?.unwrap_or(0),
                amplitude: self.num("init_amplitude")?.unwrap_or(1e-3),
            },
            Some(m) => return Err(bad(format!("unknown init `{m}`"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

// ---------------------------------------------------------------- manifest

/// Record of one run: configuration, input and output digests, version and
/// wall-clock time.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: Vec<(String, String)>,
    pub inputs: Vec<(String, u64)>,
    pub outputs: Vec<(String, u64)>,
    pub wall_clock_seconds: f64,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            ..Default::default()
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = fnv1a64(&fs::read(path)?);
        self.inputs.push((path.display().to_string(), digest));
        Ok(())
    }

    /// Write `bytes` to `dir/name` and record its digest.
    pub fn write_output(&mut self, dir: &Path, name: &str, bytes: &[u8]) -> Result<()> {
        fs::write(dir.join(name), bytes)?;
        self.outputs.push((name.to_string(), fnv1a64(bytes)));
        Ok(())
    }

    pub fn text(&self) -> String {
        let mut s = format!(
            "tool_version = {}\ncommand = {}\nwall_clock_seconds = {}\n",
            self.tool_version,
            self.command,
            fmt_f64(self.wall_clock_seconds)
        );
        for (k, v) in &self.config {
            let _ = writeln!(s, "config.{k} = {v}");
        }
        for (p, d) in &self.inputs {
            let _ = writeln!(s, "input {d:016x} {p}");
        }
        for (p, d) in &self.outputs {
            let _ = writeln!(s, "output {d:016x} {p}");
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut m = RunManifest::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            if let Some(rest) = line
                .strip_prefix("input ")
                .or_else(|| line.strip_prefix("output "))
            {
                let (d, p) = rest
                    .split_once(' ')
                    .ok_or_else(|| bad("bad manifest digest line"))?;
                let d = u64::from_str_radix(d, 16).map_err(|_| bad("bad manifest digest"))?;
                if line.starts_with("input ") {
                    m.inputs.push((p.to_string(), d));
                } else {
                    m.outputs.push((p.to_string(), d));
                }
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| bad(format!("bad manifest line `{line}`")))?;
            match k {
                "tool_version" => m.tool_version = v.to_string(),
                "command" => m.command = v.to_string(),
                "wall_clock_seconds" => {
                    m.wall_clock_seconds = v.parse().map_err(|_| bad("bad wall clock"))?
                }
                _ => match k.strip_prefix("config.") {
                    Some(k) => m.config.push((k.to_string(), v.to_string())),
                    None => return Err(bad(format!("unknown manifest key `{k}`"))),
                },
            }
        }
        Ok(m)
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::write(dir.join(MANIFEST_NAME), self.text())?;
        Ok(())
    }

    /// Recompute output digests from the files in `dir`; returns the names
    /// whose contents no longer match.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut stale = Vec::new();
        for (name, d) in &self.outputs {
            if fnv1a64(&fs::read(dir.join(name))?) != *d {
                stale.push(name.clone());
            }
        }
        Ok(stale)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        assert_eq!(fmt_f64(2.0 / 3.0), "0.66666666666666663");
        assert_eq!(fmt_f64(1.0), "1");
        assert_eq!(fmt_f64(-0.0), "-0");
        assert_eq!(fmt_f64(1e-300), "1.0000000000000000e-300");
        for v in [
            0.1,
            1.0 / 3.0,
            123456.789,
            6.02e23,
            -4.9e-324,
            1e16,
            12345678901234567.0,
        ] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn btf_round_trip() {
        let g = GridSpec::from_bounds(5, 4, [-0.3, 0.1], [1.0, 0.9]).unwrap();
        let u = VectorField2D::from_fn(g, |p| [p[0].sin() / 3.0, p[1] * 1e-300]);
        let f = Field::Vector(u);
        let bytes = btf_to_bytes(&f);
        assert!(bytes.starts_with(b"BTF1 vector 5 4 "));
        assert_eq!(btf_from_bytes(&bytes).unwrap(), f);
        let s = Field::Scalar(ScalarField2D::from_fn(g, |p| p[0] * p[1] + 0.1));
        assert_eq!(btf_from_bytes(&btf_to_bytes(&s)).unwrap(), s);
        let n = Field::Node(NodeField2D::from_fn(g, |p| p[0] - p[1]));
        assert_eq!(btf_from_bytes(&btf_to_bytes(&n)).unwrap(), n);
    }

    #[test]
    fn btf_rejects_garbage() {
        assert!(matches!(
            btf_from_bytes(b"BTF2 scalar 4 4 1 1 0 0\n"),
            Err(Error::Format(_))
        ));
        let g = GridSpec::from_bounds(4, 4, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let mut b = btf_to_bytes(&Field::Scalar(ScalarField2D::zeros(g)));
        b.pop();
        assert!(matches!(btf_from_bytes(&b), Err(Error::Format(_))));
    }

    #[test]
    fn text_round_trips() {
        let m = parse_measure("# atoms\n0.1 0.2 0.3\n\n0.7 0.125 0.7 # trailing\n").unwrap();
        assert_eq!(m.atoms.len(), 2);
        assert_eq!(parse_measure(&measure_text(&m)).unwrap(), m);
        let g = parse_graph("0 0 1 0 1\n1 0 1 1 0.3333333333333333\n").unwrap();
        assert_eq!(parse_graph(&graph_text(&g)).unwrap(), g);
        assert!(matches!(parse_graph("0 0 1 1\n"), Err(Error::Format(_))));
        assert!(matches!(parse_measure("a b c\n"), Err(Error::Format(_))));
    }

    #[test]
    fn config_parsing() {
        let c = Config::parse(
            "alpha = 0.7\nnx = 64 # cells\nmode = quadratic\nlambda = 10\ndelta_scale = 0.5\n",
        )
        .unwrap();
        let cfg = c.solver_config().unwrap();
        assert_eq!(cfg.alpha, 0.7);
        assert_eq!(cfg.grid.nx, 64);
        assert_eq!(cfg.grid.ny, 64);
        assert_eq!(cfg.mode, ConstraintMode::Quadratic { lambda: 10.0 });
        let plain = crate::solver::default_deltas(&cfg.eps_schedule, 0.7);
        assert!((cfg.delta_schedule[0] - 0.5 * plain[0]).abs() < 1e-15);
        assert!(Config::parse("bogus = 1\n")
            .unwrap()
            .solver_config()
            .is_err());
        assert!(Config::parse("no equals sign\n").is_err());
    }

    #[test]
    fn manifest_round_trip() {
        let mut m = RunManifest::new("solve");
        m.config.push(("alpha".into(), "0.8".into()));
        m.outputs.push(("u.btf".into(), 0xdeadbeef));
        m.wall_clock_seconds = 1.5;
        assert_eq!(RunManifest::parse(&m.text()).unwrap(), m);
    }

    #[test]
    fn pgm_scaling() {
        let g = GridSpec::from_bounds(4, 4, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let f = Field::Scalar(ScalarField2D::from_fn(g, |p| p[0]));
        let (img, side) = field_pgm(&f);
        assert!(img.starts_with(b"P5\n4 4\n65535\n"));
        assert_eq!(img.len(), 13 + 32);
        assert!(side.contains("min = 0.125"));
    }
}
