//! `leeyang`: batch front end for the zero, measure, spectral and
//! free-energy computations.
//!
//! Exit codes: 0 success, 1 invalid configuration, 2 computation failure,
//! 3 verification failure.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use leeyang::export::SCHEMA_VERSION;
use leeyang::free_energy::{
    dyadic_y_grid, free_energy_report, radial_scan, singular_exponent, write_radial_csv, write_singular_csv,
    SingularConfig,
};
use leeyang::measure::{empirical_cdf, write_cdf_csv, write_histogram_csv, EmpiricalMeasure};
use leeyang::spectra::{
    kappa_curve, pointwise_dimension, spectral_report, write_kappa_csv, BirkhoffConfig, DimensionConfig,
    SpectralConfig,
};
use leeyang::verify::{run_verify, Suite};
use leeyang::zeros::{enumerate_zeros, zero_count, zeros_at_unit_temperature};
use leeyang::{below_phi_e_curve, critical_temperature, phi_e, Error, ModelParams, Temperature, TreeSpec, TreeVariant};
use num::complex::Complex64;
use serde_json::{json, Value};

/// Largest zero set the CLI will enumerate explicitly.
const MAX_ENUMERATED: u64 = 1 << 24;
const ZERO_TOL: f64 = 1e-13;

#[derive(Debug, thiserror::Error)]
enum CliError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Compute(_) => 2,
            CliError::Verify(_) => 3,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::NotExpanding { .. }
            | Error::NoGap { .. }
            | Error::LevelTooDeep { .. }
            | Error::SizeGuard(_) => CliError::Config(e.to_string()),
            _ => CliError::Compute(e.to_string()),
        }
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Compute(format!("i/o: {e}"))
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn config(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

#[derive(Parser, Debug)]
#[command(name = "leeyang", version, about = "Lee-Yang zeros of the Ising model on Cayley trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Write to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,

    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Zero angles of the level-n partition function.
    Zeros(ZerosArgs),
    /// CDF or histogram of the zero distribution.
    Measure(MeasureArgs),
    /// Edge of the zero-free arc over a grid of t.
    PhiE(PhiEArgs),
    /// Lyapunov exponents and dimensions (JSON report) or the kappa curve (CSV).
    Spectra(SpectraArgs),
    /// Radial free-energy scans, singular-exponent fits, point reports.
    FreeEnergy(FreeEnergyArgs),
    /// Run the self-check suite.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct TreeArgs {
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long)]
    n: u32,
    /// Decimal or exact rational `p/q`.
    #[arg(long)]
    t: String,
    #[arg(long, default_value = "rooted")]
    tree: String,
}

#[derive(Args, Debug)]
struct ZerosArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, default_value_t = ZERO_TOL)]
    tol: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MeasureKind {
    Cdf,
    Histogram,
}

#[derive(Args, Debug)]
struct MeasureArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, value_enum, default_value_t = MeasureKind::Cdf)]
    kind: MeasureKind,
    /// Grid size: CDF points or histogram bins.
    #[arg(long, default_value_t = 1000)]
    points: usize,
}

#[derive(Args, Debug)]
struct PhiEArgs {
    #[arg(long, default_value_t = 2)]
    k: u32,
    /// `start:stop:step`, inclusive.
    #[arg(long)]
    t_grid: String,
}

#[derive(Args, Debug)]
struct SpectraArgs {
    #[arg(long, default_value_t = 2)]
    k: u32,
    #[arg(long)]
    t: String,
    /// Field angle for the JSON report.
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<f64>,
    /// `start:stop:step` for the CSV kappa curve; defaults to 720 steps over (-pi, pi].
    #[arg(long, allow_hyphen_values = true)]
    phi_grid: Option<String>,
    #[arg(long, default_value_t = 16)]
    mme_depth: u32,
    #[arg(long, default_value_t = 1_000_000)]
    birkhoff_steps: u64,
    #[arg(long, default_value_t = 32)]
    birkhoff_seeds: u32,
    /// Tree level for the pointwise dimension; 0 skips it.
    #[arg(long, default_value_t = 20)]
    dimension_level: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FreeEnergyMode {
    Radial,
    Singular,
    Point,
}

#[derive(Args, Debug)]
struct FreeEnergyArgs {
    #[command(flatten)]
    tree: TreeArgs,
    #[arg(long, value_enum, default_value_t = FreeEnergyMode::Radial)]
    mode: FreeEnergyMode,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phi: f64,
    /// Radial grid `start:stop:step` for `radial`.
    #[arg(long, default_value = "1.01:2:0.01")]
    r_grid: String,
    /// Modulus of z for `point`.
    #[arg(long, default_value_t = 2.0)]
    r: f64,
    /// Outer radius of the window for `singular`.
    #[arg(long, default_value_t = 1.0)]
    delta0: f64,
    /// Prior for the exponent in `singular`; defaults to the pointwise dimension.
    #[arg(long)]
    kappa_prior: Option<f64>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Reduced scale (about a second).
    #[arg(long)]
    quick: bool,
}

fn parse_t(s: &str) -> CliResult<Temperature> {
    Temperature::from_str(s).map_err(CliError::from)
}

fn parse_tree(a: &TreeArgs) -> CliResult<(TreeSpec, Temperature)> {
    let variant = TreeVariant::from_str(&a.tree)?;
    let tree = TreeSpec::new(variant, a.n, a.k)?;
    let t = parse_t(&a.t)?;
    let v = t.value();
    if !(0.0..=1.0).contains(&v) {
        return Err(config(format!("t = {} is not in [0, 1]", a.t)));
    }
    Ok((tree, t))
}

/// Inclusive grid `start:stop:step`.
fn parse_grid(s: &str) -> CliResult<Vec<f64>> {
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() != 3 {
        return Err(config(format!("grid `{s}` is not start:stop:step")));
    }
    let num = |p: &str| {
        p.trim()
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| config(format!("bad number `{p}` in grid `{s}`")))
    };
    let (a, b, h) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    if h <= 0.0 || b < a {
        return Err(config(format!("grid `{s}` needs step > 0 and stop >= start")));
    }
    let steps = ((b - a) / h + 1e-9).floor();
    if steps > 1e7 {
        return Err(config(format!("grid `{s}` has more than 10^7 points")));
    }
    Ok((0..=steps as u64).map(|i| a + h * i as f64).collect())
}

fn tree_params(tree: &TreeSpec, t: &Temperature) -> Value {
    json!({
        "k": tree.k(),
        "n": tree.level(),
        "tree": tree.variant().to_string(),
        "t": t.to_string(),
        "t_value": t.value(),
    })
}

fn envelope(command: &str, params: Value, result: Value) -> Value {
    json!({
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "params": params,
        "result": result,
    })
}

fn json_bytes(v: &Value) -> CliResult<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Compute(e.to_string()))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn to_value<T: serde::Serialize>(x: &T) -> CliResult<Value> {
    serde_json::to_value(x).map_err(|e| CliError::Compute(e.to_string()))
}

/// A validated run: everything is checked before `execute` does any work.
enum Plan {
    Zeros {
        tree: TreeSpec,
        t: Temperature,
        tol: f64,
    },
    Measure {
        tree: TreeSpec,
        t: Temperature,
        kind: MeasureKind,
        points: usize,
    },
    PhiE {
        k: u32,
        ts: Vec<f64>,
    },
    SpectraReport {
        params: ModelParams,
        cfg: SpectralConfig,
    },
    SpectraCurve {
        k: u32,
        t: f64,
        phis: Vec<f64>,
    },
    Radial {
        tree: TreeSpec,
        t: Temperature,
        phi: f64,
        radii: Vec<f64>,
    },
    Singular {
        tree: TreeSpec,
        t: Temperature,
        phi: f64,
        delta0: f64,
        prior: Option<f64>,
    },
    Point {
        tree: TreeSpec,
        t: Temperature,
        z: Complex64,
    },
    Verify {
        suite: Suite,
    },
}

fn open_t(t: &Temperature) -> CliResult<()> {
    let v = t.value();
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(config(format!("t = {t} must lie in (0, 1) here")))
    }
}

fn plan(cli: &Cli) -> CliResult<Plan> {
    if cli.workers == Some(0) {
        return Err(config("--workers must be at least 1"));
    }
    Ok(match &cli.command {
        Command::Zeros(a) => {
            let (tree, t) = parse_tree(&a.tree)?;
            if !(a.tol > 0.0 && a.tol.is_finite()) {
                return Err(config("--tol must be positive"));
            }
            if zero_count(&tree) > MAX_ENUMERATED {
                return Err(config(format!(
                    "{tree} has {} zeros; at most {MAX_ENUMERATED} are enumerated",
                    zero_count(&tree)
                )));
            }
            Plan::Zeros { tree, t, tol: a.tol }
        }
        Command::Measure(a) => {
            let (tree, t) = parse_tree(&a.tree)?;
            if t.value() >= 1.0 {
                return Err(config("the measure needs t < 1"));
            }
            if a.points == 0 || a.points > 10_000_000 {
                return Err(config("--points must be in 1..=10^7"));
            }
            Plan::Measure {
                tree,
                t,
                kind: a.kind,
                points: a.points,
            }
        }
        Command::PhiE(a) => {
            critical_temperature(a.k)?;
            let ts = parse_grid(&a.t_grid)?;
            if ts.iter().any(|&t| !(t > 0.0 && t <= 1.0)) {
                return Err(config(format!("t-grid `{}` leaves (0, 1]", a.t_grid)));
            }
            Plan::PhiE { k: a.k, ts }
        }
        Command::Spectra(a) => {
            let t = parse_t(&a.t)?;
            open_t(&t)?;
            critical_temperature(a.k)?;
            match cli.format {
                Format::Json => {
                    let phi = a.phi.ok_or_else(|| config("--phi is required for the JSON report"))?;
                    let params = ModelParams::new(a.k, t.value(), phi)?;
                    if !below_phi_e_curve(a.k, t.value(), phi)? {
                        return Err(config(format!("phi = {phi} is not below the phi_e curve at t = {t}")));
                    }
                    if a.mme_depth == 0 || a.birkhoff_steps == 0 || a.birkhoff_seeds < 2 {
                        return Err(config("need --mme-depth >= 1, --birkhoff-steps >= 1, --birkhoff-seeds >= 2"));
                    }
                    if (a.k as f64).powi(a.mme_depth as i32) > leeyang::spectra::MAX_PREIMAGES as f64 {
                        return Err(config(format!("--mme-depth {} is too deep for k = {}", a.mme_depth, a.k)));
                    }
                    let dimension_level = match a.dimension_level {
                        0 => None,
                        n => Some(TreeSpec::rooted(n, a.k)?.level()),
                    };
                    let cfg = SpectralConfig {
                        birkhoff: BirkhoffConfig {
                            steps: a.birkhoff_steps,
                            seeds: a.birkhoff_seeds,
                            base_seed: cli.seed,
                            ..BirkhoffConfig::default()
                        },
                        mme_depth: a.mme_depth,
                        dimension: DimensionConfig::default(),
                        dimension_level,
                    };
                    Plan::SpectraReport { params, cfg }
                }
                Format::Csv => {
                    let phis = match &a.phi_grid {
                        Some(g) => parse_grid(g)?,
                        None => (1..=720).map(|i| -PI + 2.0 * PI * i as f64 / 720.0).collect(),
                    };
                    Plan::SpectraCurve { k: a.k, t: t.value(), phis }
                }
            }
        }
        Command::FreeEnergy(a) => {
            let (tree, t) = parse_tree(&a.tree)?;
            open_t(&t)?;
            if !a.phi.is_finite() {
                return Err(config("--phi must be finite"));
            }
            match a.mode {
                FreeEnergyMode::Radial => {
                    let radii = parse_grid(&a.r_grid)?;
                    if radii.iter().any(|&r| r <= 0.0) {
                        return Err(config("radii must be positive"));
                    }
                    if radii.iter().any(|&r| r == 1.0) {
                        return Err(config("the radial grid must avoid r = 1"));
                    }
                    Plan::Radial {
                        tree,
                        t,
                        phi: a.phi,
                        radii,
                    }
                }
                FreeEnergyMode::Singular => {
                    if !(a.delta0 > 0.0 && a.delta0 <= PI) {
                        return Err(config("--delta0 must be in (0, pi]"));
                    }
                    if let Some(p) = a.kappa_prior {
                        if !(p > 0.0 && p.is_finite()) {
                            return Err(config("--kappa-prior must be positive"));
                        }
                    }
                    Plan::Singular {
                        tree,
                        t,
                        phi: a.phi,
                        delta0: a.delta0,
                        prior: a.kappa_prior,
                    }
                }
                FreeEnergyMode::Point => {
                    if !(a.r > 0.0 && a.r.is_finite()) {
                        return Err(config("--r must be positive"));
                    }
                    if zero_count(&tree) > MAX_ENUMERATED {
                        return Err(config(format!("{tree} is too large to enumerate")));
                    }
                    Plan::Point {
                        tree,
                        t,
                        z: Complex64::from_polar(a.r, a.phi),
                    }
                }
            }
        }
        Command::Verify(a) => Plan::Verify {
            suite: if a.quick { Suite::Quick } else { Suite::Full },
        },
    })
}

/// The artifact bytes, plus the names of failed checks for `verify`.
fn execute(plan: &Plan, format: Format, seed: u64) -> CliResult<(Vec<u8>, Option<String>)> {
    let mut out = Vec::new();
    let mut failed = None;
    match plan {
        Plan::Zeros { tree, t, tol } => {
            let zs = if t.value() == 1.0 {
                zeros_at_unit_temperature(tree)
            } else {
                enumerate_zeros(tree, t.value(), *tol)?
            };
            match format {
                Format::Csv => zs.write_csv(&mut out)?,
                Format::Json => {
                    let result = json!({
                        "count": zs.len(),
                        "angles": zs.angles,
                        "residuals": zs.residuals,
                    });
                    out = json_bytes(&envelope("zeros", tree_params(tree, t), result))?;
                }
            }
        }
        Plan::Measure { tree, t, kind, points } => {
            let em = EmpiricalMeasure::new(*tree, t.value())?;
            match format {
                Format::Csv => match kind {
                    MeasureKind::Cdf => write_cdf_csv(&em, *points, &mut out)?,
                    MeasureKind::Histogram => write_histogram_csv(&em, *points, &mut out)?,
                },
                Format::Json => {
                    let n = *points;
                    let rows: Vec<Value> = match kind {
                        MeasureKind::Cdf => (1..=n)
                            .map(|i| {
                                let phi = -PI + 2.0 * PI * i as f64 / n as f64;
                                json!({"phi": phi, "M": empirical_cdf(phi, &em)})
                            })
                            .collect(),
                        MeasureKind::Histogram => {
                            let total = em.total() as f64;
                            let edge = |i: usize| em.count_le(-PI + 2.0 * PI * i as f64 / n as f64);
                            (0..n)
                                .map(|i| {
                                    let center = -PI + 2.0 * PI * (i as f64 + 0.5) / n as f64;
                                    json!({"bin_center": center, "mass": (edge(i + 1) - edge(i)) as f64 / total})
                                })
                                .collect()
                        }
                    };
                    let mut params = tree_params(tree, t);
                    params["kind"] = json!(match kind {
                        MeasureKind::Cdf => "cdf",
                        MeasureKind::Histogram => "histogram",
                    });
                    let result = json!({"total": em.total(), "rows": rows});
                    out = json_bytes(&envelope("measure", params, result))?;
                }
            }
        }
        Plan::PhiE { k, ts } => {
            let tc = critical_temperature(*k)?;
            let rows: Vec<(f64, f64, bool)> = ts
                .iter()
                .map(|&t| if t < tc { Ok((t, 0.0, false)) } else { phi_e(t, *k).map(|p| (t, p, true)) })
                .collect::<leeyang::Result<_>>()?;
            match format {
                Format::Csv => {
                    writeln!(out, "t,phi_e,has_gap")?;
                    for (t, p, g) in rows {
                        writeln!(out, "{t:.16e},{p:.16e},{g}")?;
                    }
                }
                Format::Json => {
                    let rows: Vec<Value> = rows
                        .iter()
                        .map(|(t, p, g)| json!({"t": t, "phi_e": p, "has_gap": g}))
                        .collect();
                    let result = json!({"t_c": tc, "rows": rows});
                    out = json_bytes(&envelope("phi-e", json!({"k": k}), result))?;
                }
            }
        }
        Plan::SpectraReport { params, cfg } => {
            let report = spectral_report(params, cfg)?;
            let p = json!({
                "k": params.k(),
                "t_value": params.t(),
                "phi": params.phi(),
                "seed": seed,
                "mme_depth": cfg.mme_depth,
                "birkhoff_steps": cfg.birkhoff.steps,
                "birkhoff_seeds": cfg.birkhoff.seeds,
                "dimension_level": cfg.dimension_level,
            });
            out = json_bytes(&envelope("spectra", p, to_value(&report)?))?;
        }
        Plan::SpectraCurve { k, t, phis } => {
            let rows = kappa_curve(*t, *k, phis)?;
            write_kappa_csv(&rows, &mut out)?;
        }
        Plan::Radial { tree, t, phi, radii } => {
            let rows = radial_scan(tree, t.value(), *phi, radii)?;
            match format {
                Format::Csv => write_radial_csv(&rows, &mut out)?,
                Format::Json => {
                    let mut params = tree_params(tree, t);
                    params["phi"] = json!(phi);
                    let rows: Vec<Value> = rows.iter().map(|(r, f)| json!({"r": r, "free_energy": f})).collect();
                    out = json_bytes(&envelope("free-energy", params, json!({"mode": "radial", "rows": rows})))?;
                }
            }
        }
        Plan::Singular {
            tree,
            t,
            phi,
            delta0,
            prior,
        } => {
            let em = EmpiricalMeasure::new(*tree, t.value())?;
            let prior = match prior {
                Some(p) => *p,
                None => pointwise_dimension(&em, *phi, &DimensionConfig::default())?.slope,
            };
            let ys = dyadic_y_grid(&em, *phi, *delta0, &SingularConfig::default())?;
            let fit = singular_exponent(&em, *phi, prior, *delta0, &ys)?;
            match format {
                Format::Csv => write_singular_csv(&fit, &mut out)?,
                Format::Json => {
                    let mut params = tree_params(tree, t);
                    params["phi"] = json!(phi);
                    params["delta0"] = json!(delta0);
                    params["kappa_prior"] = json!(prior);
                    let mut result = to_value(&fit)?;
                    result["mode"] = json!("singular");
                    out = json_bytes(&envelope("free-energy", params, result))?;
                }
            }
        }
        Plan::Point { tree, t, z } => {
            let r = free_energy_report(*z, tree, t.value(), None)?;
            match format {
                Format::Csv => {
                    writeln!(out, "z_re,z_im,f_electrostatic,f_recursive,m_re,m_im")?;
                    let (mr, mi) = match r.magnetization {
                        Some(m) => (format!("{:.16e}", m.re), format!("{:.16e}", m.im)),
                        None => (String::new(), String::new()),
                    };
                    writeln!(
                        out,
                        "{:.16e},{:.16e},{:.16e},{:.16e},{mr},{mi}",
                        z.re, z.im, r.f_electrostatic, r.f_recursive
                    )?;
                }
                Format::Json => {
                    let mut result = to_value(&r)?;
                    result["mode"] = json!("point");
                    out = json_bytes(&envelope("free-energy", tree_params(tree, t), result))?;
                }
            }
        }
        Plan::Verify { suite } => {
            let report = run_verify(*suite, seed);
            for c in &report.checks {
                eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            match format {
                Format::Csv => {
                    writeln!(out, "name,passed,value,threshold")?;
                    for c in &report.checks {
                        writeln!(out, "{},{},{:.16e},{:.16e}", c.name, c.passed, c.value, c.threshold)?;
                    }
                }
                Format::Json => {
                    let p = json!({"suite": suite, "seed": seed});
                    out = json_bytes(&envelope("verify", p, to_value(&report)?))?;
                }
            }
            if !report.passed {
                let names: Vec<&str> = report.checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
                failed = Some(names.join(", "));
            }
        }
    }
    Ok((out, failed))
}

fn emit(bytes: &[u8], path: Option<&PathBuf>) -> CliResult<()> {
    match path {
        Some(p) => File::create(p)?.write_all(bytes)?,
        None => {
            let mut s = io::stdout().lock();
            s.write_all(bytes)?;
            s.flush()?;
        }
    }
    Ok(())
}

fn run(cli: &Cli) -> CliResult<()> {
    let plan = plan(cli)?;
    if let Some(w) = cli.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| CliError::Compute(e.to_string()))?;
    }
    let (bytes, failed) = execute(&plan, cli.format, cli.seed)?;
    // the report is written even when checks fail
    emit(&bytes, cli.output.as_ref())?;
    match failed {
        Some(names) => Err(CliError::Verify(names)),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("leeyang: {e}");
            ExitCode::from(e.code())
        }
    }
}
