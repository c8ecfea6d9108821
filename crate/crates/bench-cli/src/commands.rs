use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;
use stiffkit::analysis::{
    boundary_csv, error_norm_c, error_norm_d, order_residuals_rosenbrock, order_residuals_w, r_infinity,
    residuals_json, stability_angle_in, stability_boundary, to_wmethod, AngleScan, Residual, ORDER_TOLERANCE,
};
use stiffkit::integrate::{integrate, Problem, Stepper};
use stiffkit::linalg::norm2;
use stiffkit::methods::{
    beta22_vanishing_d41, derive_msrktase2, derive_msrktase3, find_method, select_beta32_by_angle,
    solve_beta32_linfinity, MethodCard, MsrktaseMethod,
};
use stiffkit::problems::{ProblemKind, SemiDiscreteProblem, WStrategy};

use crate::bench::{reference_solution, run_bench, BenchConfig, CellStatus, HSweep, REFERENCE_DIVISOR};
use crate::error::{CliError, CliResult};
use crate::plot::{boundary_svg, efficiency_svg};

#[derive(Debug, Parser)]
#[command(name = "stiffkit", version, about = "Modified singly-TASE Runge-Kutta methods for stiff ODEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check order conditions and error coefficients of a method
    Verify(VerifyArgs),
    /// Stability boundary, L(theta) angle or R(inf)
    Stability(StabilityArgs),
    /// Integrate one problem with one method
    Run(RunArgs),
    /// Work-precision sweep over methods and step sizes
    Bench(BenchArgs),
    /// Construct a method from the order-2 or order-3 family
    Derive(DeriveArgs),
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Catalog method name
    pub method: Option<String>,
    /// Method card JSON file instead of a catalog name
    #[arg(long)]
    pub card: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StabilityArgs {
    /// Catalog method names
    #[arg(required = true)]
    pub methods: Vec<String>,
    /// Emit the boundary of |R| = 1 as CSV, sampled on this many rays
    #[arg(long, value_name = "RAYS")]
    pub boundary: Option<usize>,
    /// Print the L(theta) stability angle in degrees
    #[arg(long)]
    pub angle: bool,
    /// Print R at infinity
    #[arg(long)]
    pub rinf: bool,
    /// Render the boundary curves to an SVG file
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Angular grid of the angle search in degrees
    #[arg(long, default_value_t = 0.5)]
    pub resolution: f64,
    /// Largest |z| sampled by the angle search
    #[arg(long, default_value_t = 1e8)]
    pub radius_max: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ProblemArg {
    Diffusion,
    Burgers,
}

impl From<ProblemArg> for ProblemKind {
    fn from(p: ProblemArg) -> Self {
        match p {
            ProblemArg::Diffusion => ProblemKind::Diffusion,
            ProblemArg::Burgers => ProblemKind::Burgers,
        }
    }
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Catalog method, SDIRK3, RK2 or RK3
    pub method: String,
    #[arg(long, value_enum, default_value = "diffusion")]
    pub problem: ProblemArg,
    /// Grid points
    #[arg(short = 'N', long = "N", default_value_t = 64)]
    pub n: usize,
    #[arg(long)]
    pub h: f64,
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tf: f64,
    #[arg(long, default_value = "jacobian-every-step", value_parser = parse_strategy)]
    pub w_strategy: WStrategy,
    /// Write the final grid state as CSV (x,y)
    #[arg(long)]
    pub state_csv: Option<PathBuf>,
    /// Skip the SDIRK3 reference run and the error column
    #[arg(long)]
    pub no_reference: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "diffusion")]
    pub problem: ProblemArg,
    /// Comma-separated method names
    #[arg(long, value_delimiter = ',', required = true)]
    pub methods: Vec<String>,
    /// Geometric step sequence HMAX:RATIO:COUNT
    #[arg(long, value_parser = parse_sweep, conflicts_with = "h")]
    pub h_sweep: Option<HSweep>,
    /// Explicit comma-separated step sizes
    #[arg(long, value_delimiter = ',')]
    pub h: Vec<f64>,
    /// Comma-separated W strategies
    #[arg(long, value_delimiter = ',', default_value = "jacobian-every-step", value_parser = parse_strategy)]
    pub w_strategy: Vec<WStrategy>,
    #[arg(short = 'N', long = "N", default_value_t = 64)]
    pub n: usize,
    #[arg(long, default_value_t = 0.0)]
    pub t0: f64,
    #[arg(long, default_value_t = 1.0)]
    pub tf: f64,
    /// CSV output file (stdout when absent)
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Efficiency plot output file
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Worker threads
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Run cells one at a time regardless of --jobs
    #[arg(long)]
    pub strict_timing: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Family {
    Ms2,
    Ms3,
}

#[derive(Debug, Args)]
pub struct DeriveArgs {
    #[arg(long, value_enum)]
    pub family: Family,
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    /// Number, or `auto-d41` to cancel the leading exact-Jacobian coefficient
    #[arg(long, allow_hyphen_values = true)]
    pub beta22: Option<String>,
    /// Number, or `auto` for the R(inf) = 0 root with the larger angle
    #[arg(long, allow_hyphen_values = true)]
    pub beta32: Option<String>,
    #[arg(long, default_value_t = 0.5)]
    pub c2: f64,
    #[arg(long, default_value_t = 0.75)]
    pub c3: f64,
    /// Also write the bare method card to this file
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_strategy(s: &str) -> Result<WStrategy, String> {
    s.parse::<WStrategy>().map_err(|e| e.to_string())
}

fn parse_sweep(s: &str) -> Result<HSweep, String> {
    s.parse::<HSweep>().map_err(|e| e.to_string())
}

/// Published C, D and theta values for the catalog methods.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TableEntry {
    pub name: &'static str,
    pub order: usize,
    pub alpha: f64,
    pub c: f64,
    pub d: f64,
    pub theta: f64,
}

pub const TABLE: [TableEntry; 5] = [
    TableEntry { name: "SRKTASE2", order: 2, alpha: 2.0, c: 4.00347, d: 4.16667, theta: 90.0 },
    TableEntry { name: "MSRKTASE2", order: 2, alpha: 0.32, c: 0.212866, d: 0.10116, theta: 90.0 },
    TableEntry { name: "SRKTASE3", order: 3, alpha: 1.8868, c: 6.7171, d: 6.6753, theta: 88.99 },
    TableEntry { name: "MSRKTASE3a", order: 3, alpha: 0.54, c: 0.1817, d: 0.2288, theta: 88.23 },
    TableEntry { name: "MSRKTASE3b", order: 3, alpha: 0.56, c: 0.3968, d: 0.0035, theta: 50.38 },
];

pub fn table_entry(name: &str) -> Option<&'static TableEntry> {
    TABLE.iter().find(|e| e.name.eq_ignore_ascii_case(name))
}

/// Formats a value with `digits` decimals, printing `-0.000` as `0.000`.
pub fn fixed(v: f64, digits: usize) -> String {
    let s = format!("{v:.digits$}");
    if s.starts_with('-') && s[1..].chars().all(|c| c == '0' || c == '.') {
        s[1..].to_string()
    } else {
        s
    }
}

/// Parses and runs one command line. Returns the process exit code.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(out, "{text}") } else { write!(err, "{text}") };
            return code;
        }
    };
    match dispatch(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}

pub fn dispatch(cmd: Command, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Stability(a) => cmd_stability(&a, out),
        Command::Run(a) => cmd_run(&a, out),
        Command::Bench(a) => cmd_bench(&a, out),
        Command::Derive(a) => cmd_derive(&a, out),
    }
}

fn load_method(args: &VerifyArgs) -> CliResult<MsrktaseMethod> {
    match (&args.method, &args.card) {
        (Some(name), None) => Ok(find_method(name)?.clone()),
        (None, Some(path)) => {
            let text = fs::read_to_string(path)?;
            let card = MethodCard::from_json(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
            card.to_method()
                .map_err(|e| CliError::Verification(format!("card {}: {e}", path.display())))
        }
        (Some(_), Some(_)) => Err(CliError::Usage("give a method name or --card, not both".into())),
        (None, None) => Err(CliError::Usage("give a method name or --card".into())),
    }
}

fn write_residuals(out: &mut dyn Write, residuals: &[Residual]) -> CliResult<bool> {
    let mut ok = true;
    for r in residuals {
        let pass = r.value.abs() <= ORDER_TOLERANCE;
        ok &= pass;
        writeln!(
            out,
            "  [{}] order {}  {:<28} {:+.3e}",
            if pass { "pass" } else { "FAIL" },
            r.order,
            r.name,
            r.value
        )?;
    }
    Ok(ok)
}

fn compare_line(out: &mut dyn Write, label: &str, value: f64, table: Option<f64>, tol: f64, digits: usize) -> CliResult<()> {
    match table {
        Some(t) => writeln!(
            out,
            "{label:<8} {}   table {}   {}",
            fixed(value, digits),
            fixed(t, digits),
            if (value - t).abs() <= tol { "match" } else { "MISMATCH" }
        )?,
        None => writeln!(out, "{label:<8} {}", fixed(value, digits))?,
    }
    Ok(())
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> CliResult<()> {
    let m = load_method(args)?;
    let p = m.declared_order;
    let wt = to_wmethod(&m);
    writeln!(
        out,
        "method {}  s={} r={} alpha={} order {}",
        m.name,
        m.stages(),
        m.depth(),
        m.alpha(),
        p
    )?;
    writeln!(out, "W-method conditions (tolerance {ORDER_TOLERANCE:e})")?;
    let ok = write_residuals(out, &order_residuals_w(&wt, p.clamp(1, 4)))?;
    writeln!(out, "exact-Jacobian conditions")?;
    let ok = write_residuals(out, &order_residuals_rosenbrock(&wt, p.clamp(1, 4)))? && ok;

    // only compare against the table for unmodified catalog methods
    let entry = table_entry(&m.name).filter(|e| find_method(e.name).map(|c| *c == m).unwrap_or(false));
    writeln!(out, "R(inf)   {}", fixed(r_infinity(&wt), 6))?;
    if ok && (p == 2 || p == 3) {
        let (c, d) = (error_norm_c(&wt, p)?, error_norm_d(&wt, p)?);
        compare_line(out, &format!("C{}", p + 1), c, entry.map(|e| e.c), 1e-3 * entry.map_or(1.0, |e| e.c.max(1.0)), 6)?;
        compare_line(out, &format!("D{}", p + 1), d, entry.map(|e| e.d), 1e-3 * entry.map_or(1.0, |e| e.d.max(1.0)), 6)?;
    }
    let theta = stability_angle_in(&wt, &AngleScan::default());
    compare_line(out, "theta", theta, entry.map(|e| e.theta), 0.1, 2)?;
    if ok {
        writeln!(out, "result: PASS")?;
        Ok(())
    } else {
        writeln!(out, "result: FAIL")?;
        Err(CliError::Verification(format!("{} violates its order-{p} conditions", m.name)))
    }
}

pub fn cmd_stability(args: &StabilityArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.boundary.is_none() && !args.angle && !args.rinf && args.svg.is_none() {
        return Err(CliError::Usage("choose --boundary, --angle, --rinf or --svg".into()));
    }
    if !(args.resolution > 0.0) || !(args.radius_max > 1e-6) {
        return Err(CliError::Usage("resolution and radius-max must be positive".into()));
    }
    let methods = args
        .methods
        .iter()
        .map(|n| find_method(n))
        .collect::<Result<Vec<_>, _>>()?;
    let multi = methods.len() > 1;
    let scan = AngleScan {
        resolution_deg: args.resolution,
        radius_max: args.radius_max,
        ..AngleScan::default()
    };
    let mut curves = Vec::new();
    if multi && args.boundary.is_some() {
        writeln!(out, "method,re,im,abs_R")?;
    }
    for m in &methods {
        let wt = to_wmethod(m);
        let prefix = if multi { format!("{} ", m.name) } else { String::new() };
        if args.rinf {
            writeln!(out, "{prefix}{}", fixed(r_infinity(&wt), 6))?;
        }
        if args.angle {
            writeln!(out, "{prefix}{}", fixed(stability_angle_in(&wt, &scan), 2))?;
        }
        if args.boundary.is_some() || args.svg.is_some() {
            let rays = args.boundary.unwrap_or(360);
            if rays < 8 {
                return Err(CliError::Usage(format!("--boundary needs at least 8 rays, got {rays}")));
            }
            let pts = stability_boundary(&wt, rays);
            if args.boundary.is_some() {
                if multi {
                    for p in &pts {
                        writeln!(out, "{},{},{},{}", m.name, p.re, p.im, p.abs_r)?;
                    }
                } else {
                    write!(out, "{}", boundary_csv(&pts))?;
                }
            }
            curves.push((m.name.clone(), pts));
        }
    }
    if let Some(path) = &args.svg {
        fs::write(path, boundary_svg(&curves, "boundary of |R(z)| = 1"))?;
    }
    Ok(())
}

pub fn cmd_run(args: &RunArgs, out: &mut dyn Write) -> CliResult<()> {
    if !(args.tf > args.t0) {
        return Err(CliError::Usage(format!("empty interval [{}, {}]", args.t0, args.tf)));
    }
    if !(args.h > 0.0 && args.h.is_finite()) {
        return Err(CliError::Usage(format!("--h must be positive, got {}", args.h)));
    }
    let stepper = Stepper::by_name(&args.method)?;
    let problem = SemiDiscreteProblem::new(args.problem.into(), args.n)?;
    let mut summary = json!({
        "method": stepper.name(),
        "problem": problem.name(),
        "N": args.n,
        "w_strategy": args.w_strategy,
        "t0": args.t0,
        "tf": args.tf,
    });
    match integrate(&stepper, &problem, args.t0, args.tf, args.h, args.w_strategy) {
        Ok(run) => {
            let blown = crate::bench::BLOWUP_FACTOR * stiffkit::linalg::norm_inf(&problem.initial_state()).max(1.0);
            let status = if stiffkit::linalg::norm_inf(&run.y_final) > blown {
                CellStatus::Blowup
            } else {
                CellStatus::Ok
            };
            summary["h"] = json!(run.h);
            summary["steps"] = json!(run.steps);
            summary["seconds"] = json!(run.wall_seconds);
            summary["factorizations"] = json!(run.factorizations);
            summary["rhs_evals"] = json!(run.rhs_evals);
            summary["newton_iterations"] = json!(run.newton_iterations);
            summary["status"] = json!(status.to_string());
            if !args.no_reference && status == CellStatus::Ok {
                let h_ref = run.h / REFERENCE_DIVISOR;
                let reference = reference_solution(&problem, args.t0, args.tf, h_ref)?;
                let diff: Vec<f64> = run.y_final.iter().zip(&reference).map(|(a, b)| a - b).collect();
                summary["error"] = json!(norm2(&diff));
                summary["reference_h"] = json!(h_ref);
            }
            if let Some(path) = &args.state_csv {
                fs::write(path, problem.state_csv(&run.y_final))?;
            }
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
            if status == CellStatus::Blowup {
                return Err(CliError::Blowup(format!(
                    "|y|_inf exceeds {blown:e} at t = {}",
                    args.tf
                )));
            }
            Ok(())
        }
        Err(e) => {
            let status = match e.root() {
                stiffkit::Error::NewtonDivergence { .. } => CellStatus::NewtonDivergence,
                stiffkit::Error::NonFiniteState { .. } => CellStatus::Blowup,
                _ => return Err(e.into()),
            };
            summary["status"] = json!(status.to_string());
            summary["message"] = json!(e.to_string());
            writeln!(out, "{}", serde_json::to_string_pretty(&summary)?)?;
            Err(e.into())
        }
    }
}

pub fn cmd_bench(args: &BenchArgs, out: &mut dyn Write) -> CliResult<()> {
    let methods: Vec<String> = args
        .methods
        .iter()
        .map(|m| m.trim().to_string())
        .filter(|m| !m.is_empty())
        .collect();
    let hs = match (&args.h_sweep, args.h.is_empty()) {
        (Some(s), _) => s.values(),
        (None, false) => args.h.clone(),
        (None, true) => return Err(CliError::Usage("give --h-sweep or --h".into())),
    };
    let mut cfg = BenchConfig::new(args.problem.into(), args.n, methods, hs);
    cfg.t0 = args.t0;
    cfg.tf = args.tf;
    cfg.strategies = args.w_strategy.clone();
    cfg.jobs = if args.strict_timing { 1 } else { args.jobs.max(1) };
    let report = run_bench(&cfg)?;
    match &args.out {
        Some(path) => report.write_csv(fs::File::create(path)?)?,
        None => report.write_csv(&mut *out)?,
    }
    if let Some(path) = &args.svg {
        let title = format!("{} N={} tf={}", cfg.problem, cfg.n, cfg.tf);
        fs::write(path, efficiency_svg(&report, &title))?;
    }
    Ok(())
}

fn parse_number(flag: &str, v: &str) -> CliResult<f64> {
    v.parse::<f64>()
        .map_err(|_| CliError::Usage(format!("--{flag} expects a number, got {v:?}")))
}

pub fn cmd_derive(args: &DeriveArgs, out: &mut dyn Write) -> CliResult<()> {
    let mut extra = serde_json::Map::new();
    let m = match args.family {
        Family::Ms2 => {
            if args.beta22.is_some() || args.beta32.is_some() {
                return Err(CliError::Usage("ms2 takes only --alpha".into()));
            }
            let mut m = derive_msrktase2(args.alpha)?;
            m.name = "MSRKTASE2".into();
            m
        }
        Family::Ms3 => {
            let b22 = match args.beta22.as_deref() {
                Some("auto-d41") => beta22_vanishing_d41(args.alpha),
                Some(v) => parse_number("beta22", v)?,
                None => return Err(CliError::Usage("ms3 needs --beta22".into())),
            };
            let b32 = match args.beta32.as_deref() {
                Some("auto") => {
                    if args.c2 != 0.5 || args.c3 != 0.75 {
                        return Err(CliError::Usage("--beta32 auto requires c2 = 1/2, c3 = 3/4".into()));
                    }
                    let roots = solve_beta32_linfinity(args.alpha, b22)?;
                    let (chosen, theta) = select_beta32_by_angle(args.alpha, b22)?;
                    extra.insert("beta32_roots".into(), json!(roots));
                    extra.insert("beta32_selection_angle".into(), json!(theta));
                    chosen
                }
                Some(v) => parse_number("beta32", v)?,
                None => return Err(CliError::Usage("ms3 needs --beta32".into())),
            };
            extra.insert("beta22".into(), json!(b22));
            extra.insert("beta32".into(), json!(b32));
            derive_msrktase3(args.alpha, b22, b32, args.c2, args.c3)?
        }
    };
    let wt = to_wmethod(&m);
    let p = m.declared_order;
    stiffkit::analysis::verify_order(&wt, p)
        .map_err(|e| CliError::Verification(e.to_string()))?;
    let card = m.to_card();
    let report = json!({
        "card": card,
        "residuals": residuals_json(&order_residuals_w(&wt, p)),
        format!("C{}", p + 1): error_norm_c(&wt, p)?,
        format!("D{}", p + 1): error_norm_d(&wt, p)?,
        "R_inf": r_infinity(&wt),
        "theta": stability_angle_in(&wt, &AngleScan::default()),
        "parameters": serde_json::Value::Object(extra),
    });
    if let Some(path) = &args.out {
        fs::write(path, card.to_json())?;
    }
    writeln!(out, "{}", serde_json::to_string_pretty(&report)?)?;
    Ok(())
}
