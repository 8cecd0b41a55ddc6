//! Command-line front end.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure,
//! 4 invariant violation.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::assembly::d_lambda_matrix;
use crate::curve::{chord_average_inequality, d_sigma, ArcGrid, Curve, CurveSpec};
use crate::error::Error;
use crate::io::{num, read_curve_spec, Table};
use crate::kernels::k_lambda;
use crate::probe::{correction_singular_values, loglog_slope, BoxGrid, FIT_WINDOW};
use crate::scattering::{choose_eta, s_prime};
use crate::spectral::{
    circle_closed_form, circle_threshold, count_negative, find_bound_states, isoperimetric_compare,
    spectral_distance, spectrum, trusted_count,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "deltacurve",
    version,
    about = "Spectra, bound states and scattering for delta-interactions on closed space curves"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues nu_k(lambda) of the boundary operator
    Spectrum(Common),
    /// Bound states and eigenvalue counts for each coupling
    BoundStates(Common),
    /// Scattering block S'(lambda) and its unitarity defect
    Scattering(Common),
    /// Principal energy of the curve against the circle of equal length
    Isoperimetric(Common),
    /// Singular values of the resolvent correction sampled on a box
    Probe(Common),
    /// Kernel distance d_sigma between the curve and the circle of equal length
    DSigma(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Curve description (JSON)
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Run configuration (JSON); command-line flags take precedence
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of grid nodes (even, 16..=4096)
    #[arg(long)]
    n: Option<usize>,
    /// Coupling constants, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    alpha: Vec<f64>,
    /// Spectral parameters, comma separated
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    lambda: Vec<f64>,
    /// Reference energies for scattering (negative, tried in order)
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    eta: Vec<f64>,
    /// Lower corner of the probe box (all three axes)
    #[arg(long, allow_negative_numbers = true)]
    box_lo: Option<f64>,
    /// Upper corner of the probe box
    #[arg(long, allow_negative_numbers = true)]
    box_hi: Option<f64>,
    /// Probe cells per axis
    #[arg(long)]
    box_n: Option<usize>,
    /// Directory for CSV/JSON output; tables go to stdout when omitted
    #[arg(long)]
    out: Option<PathBuf>,
    /// Tolerance override KEY=VAL (keys: reparam, residual, unitarity, closed_form, psd)
    #[arg(long = "tol-override", value_name = "KEY=VAL")]
    tol_override: Vec<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    curve: Option<CurveSpec>,
    n: Option<usize>,
    alpha: Option<Vec<f64>>,
    lambda: Option<Vec<f64>>,
    eta: Option<Vec<f64>>,
    #[serde(rename = "box")]
    box_: Option<BoxConfig>,
    out: Option<PathBuf>,
    tolerances: Option<BTreeMap<String, f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxConfig {
    lo: f64,
    hi: f64,
    n: usize,
}

/// Thresholds for the checks that decide exit code 4.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub reparam: f64,
    pub residual: f64,
    pub unitarity: f64,
    pub closed_form: f64,
    pub psd: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            reparam: 1e-8,
            residual: 1e-8,
            unitarity: 1e-6,
            closed_form: 1e-6,
            psd: 1e-10,
        }
    }
}

impl Tolerances {
    fn set(&mut self, key: &str, value: f64) -> Result<(), String> {
        if !(value > 0.0) {
            return Err(format!("tolerance {key} must be positive, got {value}"));
        }
        let slot = match key {
            "reparam" => &mut self.reparam,
            "residual" => &mut self.residual,
            "unitarity" => &mut self.unitarity,
            "closed_form" => &mut self.closed_form,
            "psd" => &mut self.psd,
            _ => return Err(format!("unknown tolerance key {key:?}")),
        };
        *slot = value;
        Ok(())
    }
}

/// Fully resolved settings for one command.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub curve: CurveSpec,
    pub n: usize,
    pub alphas: Vec<f64>,
    pub lambdas: Vec<f64>,
    pub etas: Vec<f64>,
    pub box_lo: f64,
    pub box_hi: f64,
    pub box_n: usize,
    pub out: Option<PathBuf>,
    pub tol: Tolerances,
}

enum Failure {
    Config(String),
    Numerical(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numerical(e)
    }
}

fn resolve(c: Common) -> Result<RunConfig, String> {
    let file: FileConfig = match &c.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| format!("cannot read {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| format!("bad config {}: {e}", p.display()))?
        }
        None => FileConfig::default(),
    };
    let curve = match (&c.curve, file.curve) {
        (Some(p), _) => read_curve_spec(p).map_err(|e| e.to_string())?,
        (None, Some(spec)) => spec,
        (None, None) => {
            return Err("no curve given (use --curve FILE or a config with \"curve\")".into())
        }
    };
    let n = c.n.or(file.n).unwrap_or(256);
    if !n.is_multiple_of(2) || !(16..=4096).contains(&n) {
        return Err(format!("--n must be even and within 16..=4096, got {n}"));
    }
    let pick = |cli: Vec<f64>, f: Option<Vec<f64>>| {
        if cli.is_empty() {
            f.unwrap_or_default()
        } else {
            cli
        }
    };
    let mut tol = Tolerances::default();
    for (k, v) in file.tolerances.unwrap_or_default() {
        tol.set(&k, v)?;
    }
    for item in &c.tol_override {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| format!("tolerance override {item:?} is not KEY=VAL"))?;
        let v: f64 = v
            .trim()
            .parse()
            .map_err(|_| format!("tolerance override {item:?} has a bad value"))?;
        tol.set(k.trim(), v)?;
    }
    let (blo, bhi, bn) = file
        .box_
        .map(|b| (b.lo, b.hi, b.n))
        .unwrap_or((-3.0, 3.0, 24));
    Ok(RunConfig {
        curve,
        n,
        alphas: pick(c.alpha, file.alpha),
        lambdas: pick(c.lambda, file.lambda),
        etas: pick(c.eta, file.eta),
        box_lo: c.box_lo.unwrap_or(blo),
        box_hi: c.box_hi.unwrap_or(bhi),
        box_n: c.box_n.unwrap_or(bn),
        out: c.out.or(file.out),
        tol,
    })
}

#[derive(Default)]
struct Report {
    summary: Vec<(String, String)>,
    tables: Vec<Table>,
    json: Option<(String, serde_json::Value)>,
    violations: Vec<String>,
}

impl Report {
    fn note(&mut self, key: &str, value: impl Into<String>) {
        self.summary.push((key.to_string(), value.into()));
    }
}

fn setup(cfg: &RunConfig) -> Result<(Curve, ArcGrid), Failure> {
    let curve = cfg
        .curve
        .build(cfg.tol.reparam)
        .map_err(|e| Failure::Config(e.to_string()))?;
    let grid = ArcGrid::new(&curve, cfg.n).map_err(|e| Failure::Config(e.to_string()))?;
    Ok((curve, grid))
}

fn require_alphas(cfg: &RunConfig, default: &[f64]) -> Result<Vec<f64>, Failure> {
    let alphas = if cfg.alphas.is_empty() {
        default.to_vec()
    } else {
        cfg.alphas.clone()
    };
    if alphas.is_empty() {
        return Err(Failure::Config("--alpha is required".into()));
    }
    if let Some(a) = alphas.iter().find(|a| **a == 0.0 || !a.is_finite()) {
        return Err(Failure::Config(format!(
            "alpha must be finite and nonzero, got {a}"
        )));
    }
    Ok(alphas)
}

fn cmd_spectrum(cfg: &RunConfig) -> Result<Report, Failure> {
    let (curve, grid) = setup(cfg)?;
    let lambdas = if cfg.lambdas.is_empty() {
        vec![0.0]
    } else {
        cfg.lambdas.clone()
    };
    if let Some(l) = lambdas.iter().find(|l| !(**l <= 0.0)) {
        return Err(Failure::Config(format!(
            "spectrum needs lambda <= 0, got {l}"
        )));
    }
    let trusted = trusted_count(grid.len());
    let mut rep = Report::default();
    rep.note("curve", curve.label());
    rep.note("n", grid.len().to_string());
    let mut curves: Vec<(f64, Vec<f64>)> = Vec::new();
    for (idx, &lambda) in lambdas.iter().enumerate() {
        let s = spectrum(&curve, &grid, lambda)?;
        let closed = (curve.is_circle() && lambda == 0.0)
            .then(|| circle_closed_form(curve.equivalent_radius(), grid.len()));
        let header: &[&str] = if closed.is_some() {
            &["k", "lambda", "nu", "closed_form", "deviation"]
        } else {
            &["k", "lambda", "nu"]
        };
        let mut t = Table::new(&format!("spectrum_{idx}"), header);
        for (k, &v) in s.iter().enumerate().take(trusted) {
            let mut row = vec![(k + 1).to_string(), num(lambda), num(v)];
            if let Some(c) = &closed {
                row.push(num(c[k]));
                row.push(num(v - c[k]));
            }
            t.push(row);
        }
        if let Some(c) = &closed {
            let dev = s
                .iter()
                .zip(c)
                .take(20)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            rep.note(&format!("max_closed_form_deviation[{idx}]"), num(dev));
            if dev > cfg.tol.closed_form {
                rep.violations
                    .push(format!("closed-form deviation {dev:e} at lambda {lambda}"));
            }
        }
        if curve.is_circle() {
            let k = k_lambda(lambda, curve.equivalent_radius())?;
            rep.note(&format!("nu1_minus_k_lambda[{idx}]"), num(s[0] - k));
        }
        rep.tables.push(t);
        curves.push((lambda, s));
    }
    curves.sort_by(|a, b| a.0.total_cmp(&b.0));
    for w in curves.windows(2) {
        if w[0].0 < w[1].0 {
            if let Some(k) = (0..trusted).find(|&k| w[1].1[k] <= w[0].1[k]) {
                rep.violations.push(format!(
                    "nu_{} not increasing between lambda {} and {}",
                    k + 1,
                    w[0].0,
                    w[1].0
                ));
            }
        }
    }
    Ok(rep)
}

fn cmd_bound_states(cfg: &RunConfig) -> Result<Report, Failure> {
    let alphas = require_alphas(cfg, &[])?;
    let (curve, grid) = setup(cfg)?;
    let threshold = circle_threshold(curve.equivalent_radius());
    let mut rep = Report::default();
    rep.note("curve", curve.label());
    rep.note("n", grid.len().to_string());
    let mut states_t = Table::new(
        "bound_states",
        &["alpha", "k", "lambda", "residual", "spectral_distance"],
    );
    let mut counts_t = Table::new(
        "counts",
        &[
            "alpha",
            "count",
            "closed_form",
            "r",
            "l",
            "lower",
            "upper",
            "asym_lower",
            "asym_upper",
            "d_sigma",
            "near_endpoint",
        ],
    );
    for &alpha in &alphas {
        let c = count_negative(&curve, &grid, alpha)?;
        let states = find_bound_states(&curve, &grid, alpha, -1.0)?;
        for s in &states {
            let d = spectral_distance(&curve, &grid, s.lambda, alpha)?;
            if d >= cfg.tol.residual {
                rep.violations.push(format!(
                    "alpha {alpha}: state k={} has spectral distance {d:e}",
                    s.k
                ));
            }
            states_t.push(vec![
                num(alpha),
                s.k.to_string(),
                num(s.lambda),
                num(s.residual),
                num(d),
            ]);
        }
        if states.len() != c.count {
            rep.violations.push(format!(
                "alpha {alpha}: {} roots but count {}",
                states.len(),
                c.count
            ));
        }
        if alpha + c.d_sigma < threshold && !c.sandwich_holds {
            rep.violations.push(format!(
                "alpha {alpha}: count {} outside [{}, {}]",
                c.count, c.lower, c.upper
            ));
        }
        if let Some(cf) = c.closed_form {
            if cf != c.count {
                rep.violations.push(format!(
                    "alpha {alpha}: count {} differs from closed form {cf}",
                    c.count
                ));
            }
        }
        let (cl, cu) = c
            .asymptotic_bounds
            .map(|(a, b)| (num(a), num(b)))
            .unwrap_or_else(|| ("".into(), "".into()));
        counts_t.push(vec![
            num(alpha),
            c.count.to_string(),
            c.closed_form.map(|v| v.to_string()).unwrap_or_default(),
            c.r.to_string(),
            c.l.to_string(),
            c.lower.to_string(),
            c.upper.to_string(),
            cl,
            cu,
            num(c.d_sigma),
            c.near_endpoint.to_string(),
        ]);
        rep.note(&format!("count[alpha={alpha}]"), c.count.to_string());
    }
    rep.tables.push(states_t);
    rep.tables.push(counts_t);
    Ok(rep)
}

fn cmd_scattering(cfg: &RunConfig) -> Result<Report, Failure> {
    let alphas = require_alphas(cfg, &[])?;
    let (curve, grid) = setup(cfg)?;
    let lambdas = if cfg.lambdas.is_empty() {
        vec![1.0]
    } else {
        cfg.lambdas.clone()
    };
    if let Some(l) = lambdas.iter().find(|l| !(**l >= 0.0)) {
        return Err(Failure::Config(format!(
            "scattering needs lambda >= 0, got {l}"
        )));
    }
    let etas = if cfg.etas.is_empty() {
        vec![-1.0, -4.0, -16.0]
    } else {
        cfg.etas.clone()
    };
    let mut rep = Report::default();
    rep.note("curve", curve.label());
    rep.note("n", grid.len().to_string());
    let mut t = Table::new(
        "scattering",
        &[
            "alpha",
            "lambda",
            "eta",
            "dim",
            "unitarity_defect",
            "condition",
            "min_im_eigenvalue",
            "im_asymmetry",
        ],
    );
    let mut idx = 0;
    for &alpha in &alphas {
        let eta = choose_eta(&curve, &grid, alpha, &etas)?;
        for &lambda in &lambdas {
            let b = s_prime(&curve, &grid, lambda, alpha, eta)?;
            let top = b.im_eigenvalues.first().copied().unwrap_or(0.0);
            let min = b.im_eigenvalues.last().copied().unwrap_or(0.0);
            if b.unitarity_defect >= cfg.tol.unitarity {
                rep.violations.push(format!(
                    "alpha {alpha}, lambda {lambda}: unitarity defect {:e}",
                    b.unitarity_defect
                ));
            }
            if min < -cfg.tol.psd * top.max(0.0) {
                rep.violations.push(format!(
                    "alpha {alpha}, lambda {lambda}: Im N eigenvalue {min:e}"
                ));
            }
            t.push(vec![
                num(alpha),
                num(lambda),
                num(eta),
                b.dim().to_string(),
                num(b.unitarity_defect),
                num(b.condition),
                num(min),
                num(b.im_asymmetry),
            ]);
            let mut ev = Table::new(&format!("im_eigenvalues_{idx}"), &["index", "value"]);
            for (i, v) in b.im_eigenvalues.iter().enumerate() {
                ev.push(vec![(i + 1).to_string(), num(*v)]);
            }
            rep.tables.push(ev);
            rep.note(
                &format!("unitarity_defect[alpha={alpha},lambda={lambda}]"),
                num(b.unitarity_defect),
            );
            idx += 1;
        }
    }
    rep.tables.insert(0, t);
    Ok(rep)
}

fn cmd_isoperimetric(cfg: &RunConfig) -> Result<Report, Failure> {
    let alphas = require_alphas(cfg, &[-0.5])?;
    let (curve, grid) = setup(cfg)?;
    let mut rep = Report::default();
    rep.note("curve", curve.label());
    rep.note("n", grid.len().to_string());
    let mut t = Table::new(
        "isoperimetric",
        &["alpha", "curve_min", "circle_min", "gap"],
    );
    for &alpha in &alphas {
        let r = isoperimetric_compare(&curve, alpha, &grid)?;
        if !curve.is_circle() && !(r.gap > 0.0) {
            rep.violations
                .push(format!("alpha {alpha}: gap {:e} is not positive", r.gap));
        }
        t.push(vec![
            num(alpha),
            num(r.curve_min),
            num(r.circle_min),
            num(r.gap),
        ]);
        rep.note(&format!("gap[alpha={alpha}]"), num(r.gap));
    }
    let mut ch = Table::new("chord_inequality", &["u", "lhs", "rhs"]);
    let l = curve.length();
    for u in [l / 8.0, l / 4.0, l / 2.0] {
        let c = chord_average_inequality(&curve, &grid, u);
        if !curve.is_circle() && !(c.lhs < c.rhs) {
            rep.violations
                .push(format!("chord inequality fails at u = {u}"));
        }
        ch.push(vec![num(u), num(c.lhs), num(c.rhs)]);
    }
    rep.tables.push(t);
    rep.tables.push(ch);
    Ok(rep)
}

fn cmd_probe(cfg: &RunConfig) -> Result<Report, Failure> {
    let alphas = require_alphas(cfg, &[-0.5])?;
    let alpha = alphas[0];
    let lambda = cfg.lambdas.first().copied().unwrap_or(-1.0);
    if !(lambda < 0.0) {
        return Err(Failure::Config(format!(
            "probe needs lambda < 0, got {lambda}"
        )));
    }
    let (curve, grid) = setup(cfg)?;
    let boxg = BoxGrid::new(&grid, cfg.box_lo, cfg.box_hi, cfg.box_n)
        .map_err(|e| Failure::Config(e.to_string()))?;
    let p = correction_singular_values(&curve, &grid, &boxg, lambda, alpha)?;
    let (first, last) = FIT_WINDOW;
    let slope_k = loglog_slope(&p.correction, first, last)?;
    let slope_g = loglog_slope(&p.gamma, first, last)?;
    let mut rep = Report::default();
    rep.note("curve", curve.label());
    rep.note("n", grid.len().to_string());
    rep.note("box_points", p.box_points.to_string());
    rep.note("excluded", p.excluded.to_string());
    rep.note("slope_correction", num(slope_k));
    rep.note("slope_gamma", num(slope_g));
    rep.note("fit_window", format!("{first}..={last}"));
    let mut t = Table::new("singular_values", &["k", "s_correction", "s_gamma"]);
    for (k, (a, b)) in p.correction.iter().zip(&p.gamma).enumerate() {
        t.push(vec![(k + 1).to_string(), num(*a), num(*b)]);
    }
    if p.correction.windows(2).any(|w| w[1] > w[0]) || p.gamma.windows(2).any(|w| w[1] > w[0]) {
        rep.violations.push("singular values not sorted".into());
    }
    rep.tables.push(t);
    rep.json = Some((
        "probe_summary".into(),
        serde_json::json!({
            "lambda": lambda,
            "alpha": alpha,
            "box": { "lo": cfg.box_lo, "hi": cfg.box_hi, "n": cfg.box_n, "exclusion_radius": boxg.exclusion_radius() },
            "box_points": p.box_points,
            "excluded": p.excluded,
            "fit_window": [first, last],
            "slope_correction": slope_k,
            "slope_gamma": slope_g,
            "note": "box sampling is a Galerkin compression of the ambient operator; slopes bound the decay envelope only",
        }),
    ));
    Ok(rep)
}

fn cmd_d_sigma(cfg: &RunConfig) -> Result<Report, Failure> {
    let (curve, grid) = setup(cfg)?;
    let d = d_sigma(&curve, &grid);
    let d0 = d_lambda_matrix(&curve, 0.0, &grid)?;
    let norm = d0.into_entries().symmetric_eigenvalues().amax();
    let mut rep = Report::default();
    rep.note("curve", curve.label());
    rep.note("n", grid.len().to_string());
    rep.note("d_sigma", num(d));
    rep.note("sqrt_d_sigma", num(d.sqrt()));
    rep.note("norm_d0", num(norm));
    let mut t = Table::new("d_sigma", &["n", "d_sigma", "norm_d0"]);
    t.push(vec![grid.len().to_string(), num(d), num(norm)]);
    rep.tables.push(t);
    Ok(rep)
}

fn emit(rep: &Report, cfg: &RunConfig, out: &mut dyn Write) -> std::io::Result<Result<(), Error>> {
    for (k, v) in &rep.summary {
        writeln!(out, "summary {k}={v}")?;
    }
    match &cfg.out {
        Some(dir) => {
            for t in &rep.tables {
                if let Err(e) = t.write_to(dir) {
                    return Ok(Err(e));
                }
            }
            if let Some((name, value)) = &rep.json {
                let text = serde_json::to_string_pretty(value).unwrap_or_default();
                if let Err(e) = std::fs::write(dir.join(format!("{name}.json")), text + "\n") {
                    return Ok(Err(Error::InvalidInput(format!(
                        "cannot write {name}.json: {e}"
                    ))));
                }
            }
        }
        None => {
            for t in &rep.tables {
                writeln!(out, "## {}", t.name)?;
                write!(out, "{}", t.to_csv())?;
            }
        }
    }
    Ok(Ok(()))
}

/// Runs the CLI on `args` (including the program name) and returns the exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let target: &mut dyn Write = if e.use_stderr() { err } else { out };
            let _ = write!(target, "{}", e.render());
            return code;
        }
    };
    let (command, common): (fn(&RunConfig) -> Result<Report, Failure>, Common) = match cli.command {
        Command::Spectrum(c) => (cmd_spectrum, c),
        Command::BoundStates(c) => (cmd_bound_states, c),
        Command::Scattering(c) => (cmd_scattering, c),
        Command::Isoperimetric(c) => (cmd_isoperimetric, c),
        Command::Probe(c) => (cmd_probe, c),
        Command::DSigma(c) => (cmd_d_sigma, c),
    };
    let cfg = match resolve(common) {
        Ok(c) => c,
        Err(msg) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_CONFIG;
        }
    };
    let rep = match command(&cfg) {
        Ok(r) => r,
        Err(Failure::Config(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            return EXIT_CONFIG;
        }
        Err(Failure::Numerical(e)) => {
            let _ = writeln!(err, "numerical failure: {e}");
            return EXIT_NUMERICAL;
        }
    };
    match emit(&rep, &cfg, out) {
        Ok(Ok(())) => {}
        Ok(Err(e)) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_CONFIG;
        }
    }
    if rep.violations.is_empty() {
        EXIT_OK
    } else {
        for v in &rep.violations {
            let _ = writeln!(err, "invariant violated: {v}");
        }
        EXIT_INVARIANT
    }
}
