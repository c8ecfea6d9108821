//! Work-precision sweeps: every (method, W strategy, h) cell is integrated to
//! `tf` and compared against a fine SDIRK3 reference.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use stiffkit::integrate::{integrate, step_count, NewtonOptions, Problem, Stepper};
use stiffkit::linalg::{norm2, norm_inf};
use stiffkit::problems::{ProblemKind, SemiDiscreteProblem, WStrategy};
use stiffkit::Error;

use crate::error::{CliError, CliResult};

/// Reference step is the smallest swept step divided by this.
pub const REFERENCE_DIVISOR: f64 = 64.0;

/// A finite state larger than this multiple of `max(1, |y0|_inf)` counts as blowup.
pub const BLOWUP_FACTOR: f64 = 1e6;

pub const CSV_HEADER: &str = "method,problem,N,w_strategy,h,steps,error,seconds,factorizations,rhs_evals,status";

/// Geometric step sequence `h_max, h_max*ratio, ...` written `HMAX:RATIO:COUNT`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HSweep {
    pub h_max: f64,
    pub ratio: f64,
    pub count: usize,
}

impl HSweep {
    pub fn values(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.h_max * self.ratio.powi(k as i32))
            .collect()
    }
}

impl FromStr for HSweep {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        let bad = || CliError::Usage(format!("h sweep must be HMAX:RATIO:COUNT, got {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let h_max: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let ratio: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let count: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if !(h_max > 0.0 && h_max.is_finite()) {
            return Err(CliError::Usage(format!("HMAX must be positive, got {h_max}")));
        }
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(CliError::Usage(format!("RATIO must lie in (0, 1), got {ratio}")));
        }
        if count < 2 {
            return Err(CliError::Usage(format!("need at least 2 step sizes, got {count}")));
        }
        Ok(Self { h_max, ratio, count })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellStatus {
    Ok,
    Blowup,
    NewtonDivergence,
}

impl fmt::Display for CellStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CellStatus::Ok => "ok",
            CellStatus::Blowup => "blowup",
            CellStatus::NewtonDivergence => "newton-divergence",
        })
    }
}

/// One benchmark cell. Failed cells carry `error = inf`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub method: String,
    pub problem: String,
    #[serde(rename = "N")]
    pub n: usize,
    pub w_strategy: WStrategy,
    pub h: f64,
    pub steps: usize,
    /// 2-norm of the difference to the reference state at `tf`.
    pub error: f64,
    pub seconds: f64,
    pub factorizations: usize,
    pub rhs_evals: u64,
    pub status: CellStatus,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn new(mut rows: Vec<BenchRow>) -> Self {
        sort_rows(&mut rows);
        Self { rows }
    }

    pub fn methods(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for r in &self.rows {
            if !out.contains(&r.method.as_str()) {
                out.push(&r.method);
            }
        }
        out
    }

    /// Rows of one method and strategy, largest `h` first.
    pub fn series(&self, method: &str, strategy: WStrategy) -> Vec<&BenchRow> {
        self.rows
            .iter()
            .filter(|r| r.method == method && r.w_strategy == strategy)
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> CliResult<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
        w.write_record(CSV_HEADER.split(','))?;
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> CliResult<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn read_csv<R: Read>(input: R) -> CliResult<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
        if header.join(",") != CSV_HEADER {
            return Err(CliError::Usage(format!("unexpected CSV header {:?}", header.join(","))));
        }
        let rows = rd.deserialize().collect::<Result<Vec<BenchRow>, _>>()?;
        Ok(Self { rows })
    }
}

fn sort_rows(rows: &mut [BenchRow]) {
    rows.sort_by(|a, b| {
        a.method
            .cmp(&b.method)
            .then(b.h.total_cmp(&a.h))
            .then(a.w_strategy.as_str().cmp(b.w_strategy.as_str()))
    });
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub problem: ProblemKind,
    pub n: usize,
    pub t0: f64,
    pub tf: f64,
    pub methods: Vec<String>,
    pub hs: Vec<f64>,
    pub strategies: Vec<WStrategy>,
    /// Worker threads; 1 runs cells one at a time.
    pub jobs: usize,
}

impl BenchConfig {
    pub fn new(problem: ProblemKind, n: usize, methods: Vec<String>, hs: Vec<f64>) -> Self {
        Self {
            problem,
            n,
            t0: 0.0,
            tf: 1.0,
            methods,
            hs,
            strategies: vec![WStrategy::JacobianEveryStep],
            jobs: 1,
        }
    }

    fn validate(&self) -> CliResult<()> {
        if self.methods.is_empty() {
            return Err(CliError::Usage("method list is empty".into()));
        }
        if self.hs.len() < 2 {
            return Err(CliError::Usage("need at least 2 step sizes".into()));
        }
        if self.strategies.is_empty() {
            return Err(CliError::Usage("W strategy list is empty".into()));
        }
        if let Some(h) = self.hs.iter().find(|h| !(**h > 0.0 && h.is_finite())) {
            return Err(CliError::Usage(format!("step sizes must be positive, got {h}")));
        }
        if !(self.tf > self.t0) {
            return Err(CliError::Usage(format!("empty interval [{}, {}]", self.t0, self.tf)));
        }
        Ok(())
    }
}

/// Fine SDIRK3 solution at `tf` with step `h_ref`.
pub fn reference_solution(problem: &SemiDiscreteProblem, t0: f64, tf: f64, h_ref: f64) -> CliResult<Vec<f64>> {
    let st = Stepper::Sdirk3(NewtonOptions {
        tol: 1e-12,
        ..NewtonOptions::default()
    });
    // the diffusion Jacobian is constant, so one factorization is exact
    let strategy = match problem.kind() {
        ProblemKind::Diffusion => WStrategy::JacobianInitialOnly,
        ProblemKind::Burgers => WStrategy::JacobianEveryStep,
    };
    Ok(integrate(&st, problem, t0, tf, h_ref, strategy)?.y_final)
}

fn blown_up(y: &[f64], y0: &[f64]) -> bool {
    norm_inf(y) > BLOWUP_FACTOR * norm_inf(y0).max(1.0)
}

/// Integrates one cell and classifies it. Errors other than blowup and
/// Newton divergence propagate.
pub fn run_cell(
    stepper: &Stepper,
    problem: &SemiDiscreteProblem,
    t0: f64,
    tf: f64,
    h: f64,
    strategy: WStrategy,
    reference: &[f64],
) -> CliResult<BenchRow> {
    let mut row = BenchRow {
        method: stepper.name().to_string(),
        problem: problem.name().to_string(),
        n: problem.dim(),
        w_strategy: strategy,
        h,
        steps: step_count(t0, tf, h),
        error: f64::INFINITY,
        seconds: 0.0,
        factorizations: 0,
        rhs_evals: 0,
        status: CellStatus::Blowup,
    };
    let start = Instant::now();
    match integrate(stepper, problem, t0, tf, h, strategy) {
        Ok(run) => {
            row.seconds = run.wall_seconds;
            row.factorizations = run.factorizations;
            row.rhs_evals = run.rhs_evals;
            if !blown_up(&run.y_final, &problem.initial_state()) {
                let diff: Vec<f64> = run.y_final.iter().zip(reference).map(|(a, b)| a - b).collect();
                row.error = norm2(&diff);
                row.status = CellStatus::Ok;
            }
        }
        Err(e) => {
            row.seconds = start.elapsed().as_secs_f64();
            row.status = match e.root() {
                Error::NonFiniteState { .. } => CellStatus::Blowup,
                Error::NewtonDivergence { .. } => CellStatus::NewtonDivergence,
                _ => return Err(e.into()),
            };
        }
    }
    Ok(row)
}

pub fn run_bench(cfg: &BenchConfig) -> CliResult<BenchReport> {
    cfg.validate()?;
    let steppers = cfg
        .methods
        .iter()
        .map(|m| Stepper::by_name(m))
        .collect::<Result<Vec<_>, _>>()?;
    let problem = SemiDiscreteProblem::new(cfg.problem, cfg.n)?;
    let h_min = cfg.hs.iter().cloned().fold(f64::INFINITY, f64::min);
    let reference = reference_solution(&problem, cfg.t0, cfg.tf, h_min / REFERENCE_DIVISOR)?;

    let mut cells = Vec::new();
    for st in &steppers {
        for &s in &cfg.strategies {
            for &h in &cfg.hs {
                cells.push((st, s, h));
            }
        }
    }
    let results: Vec<Mutex<Option<CliResult<BenchRow>>>> = cells.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let work = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(st, s, h)) = cells.get(i) else { break };
        let r = run_cell(st, &problem, cfg.t0, cfg.tf, h, s, &reference);
        *results[i].lock().expect("result slot") = Some(r);
    };
    let jobs = cfg.jobs.clamp(1, cells.len().max(1));
    if jobs == 1 {
        work();
    } else {
        std::thread::scope(|scope| {
            for _ in 0..jobs {
                scope.spawn(work);
            }
        });
    }
    let rows = results
        .into_iter()
        .map(|m| m.into_inner().expect("result slot").expect("cell ran"))
        .collect::<CliResult<Vec<_>>>()?;
    Ok(BenchReport::new(rows))
}

/// Successive error ratios `e(h_k) / e(h_{k+1})` along a series.
pub fn error_ratios(series: &[&BenchRow]) -> Vec<f64> {
    series.windows(2).map(|w| w[0].error / w[1].error).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: &str, h: f64, error: f64, status: CellStatus) -> BenchRow {
        BenchRow {
            method: method.into(),
            problem: "diffusion".into(),
            n: 16,
            w_strategy: WStrategy::JacobianEveryStep,
            h,
            steps: (1.0 / h).round() as usize,
            error,
            seconds: 0.125,
            factorizations: 3,
            rhs_evals: 9,
            status,
        }
    }

    #[test]
    fn sweep_parsing() {
        let s: HSweep = "0.1:0.5:4".parse().unwrap();
        assert_eq!(s.values(), vec![0.1, 0.05, 0.025, 0.0125]);
        for bad in ["0.1:0.5", "x:0.5:3", "0.1:1.5:3", "0.1:0.5:1", "-1:0.5:3"] {
            assert!(matches!(bad.parse::<HSweep>(), Err(CliError::Usage(_))), "{bad}");
        }
    }

    #[test]
    fn rows_sort_by_method_then_decreasing_h() {
        let rep = BenchReport::new(vec![
            row("SRKTASE3", 0.05, 1.0, CellStatus::Ok),
            row("MSRKTASE3a", 0.05, 1.0, CellStatus::Ok),
            row("MSRKTASE3a", 0.1, 1.0, CellStatus::Ok),
            row("SRKTASE3", 0.1, 1.0, CellStatus::Ok),
        ]);
        let keys: Vec<(&str, f64)> = rep.rows.iter().map(|r| (r.method.as_str(), r.h)).collect();
        assert_eq!(
            keys,
            vec![("MSRKTASE3a", 0.1), ("MSRKTASE3a", 0.05), ("SRKTASE3", 0.1), ("SRKTASE3", 0.05)]
        );
        assert_eq!(rep.methods(), vec!["MSRKTASE3a", "SRKTASE3"]);
    }

    #[test]
    fn csv_header_and_round_trip() {
        let rep = BenchReport::new(vec![
            row("RK3", 0.1, f64::INFINITY, CellStatus::Blowup),
            row("SDIRK3", 0.1, 1.234_567_890_123_456_7e-7, CellStatus::NewtonDivergence),
            row("MSRKTASE3a", 1.0 / 3.0, 0.1 + 0.2, CellStatus::Ok),
        ]);
        let text = rep.to_csv_string().unwrap();
        assert!(text.starts_with(&format!("{CSV_HEADER}\n")));
        assert!(!text.contains('\r'));
        assert!(text.contains(",jacobian-every-step,"));
        assert!(text.contains(",newton-divergence\n"));
        let back = BenchReport::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, rep);
    }

    #[test]
    fn csv_rejects_foreign_header() {
        let text = "a,b\n1,2\n";
        assert!(BenchReport::read_csv(text.as_bytes()).is_err());
    }

    #[test]
    fn config_validation() {
        let base = BenchConfig::new(ProblemKind::Diffusion, 16, vec!["MSRKTASE3a".into()], vec![0.1, 0.05]);
        let mut c = base.clone();
        c.methods.clear();
        assert!(matches!(run_bench(&c), Err(CliError::Usage(_))));
        let mut c = base.clone();
        c.hs.truncate(1);
        assert!(matches!(run_bench(&c), Err(CliError::Usage(_))));
        let mut c = base.clone();
        c.tf = 0.0;
        assert!(matches!(run_bench(&c), Err(CliError::Usage(_))));
        let mut c = base;
        c.methods = vec!["nope".into()];
        assert_eq!(run_bench(&c).unwrap_err().exit_code(), 2);
    }

    #[test]
    fn parallel_and_serial_sweeps_agree() {
        let mut cfg = BenchConfig::new(
            ProblemKind::Burgers,
            16,
            vec!["MSRKTASE2".into(), "SDIRK3".into()],
            vec![0.1, 0.05, 0.025],
        );
        cfg.tf = 0.2;
        let a = run_bench(&cfg).unwrap();
        cfg.jobs = 4;
        let b = run_bench(&cfg).unwrap();
        let strip = |r: &BenchReport| -> Vec<BenchRow> {
            r.rows.iter().cloned().map(|mut x| {
                x.seconds = 0.0;
                x
            }).collect()
        };
        assert_eq!(strip(&a), strip(&b));
        assert!(a.rows.iter().all(|r| r.status == CellStatus::Ok && r.error.is_finite()));
    }

    #[test]
    fn explicit_method_blows_up_on_stiff_diffusion() {
        let p = SemiDiscreteProblem::new(ProblemKind::Diffusion, 32).unwrap();
        let st = Stepper::by_name("RK3").unwrap();
        let reference = vec![0.0; 32];
        let r = run_cell(&st, &p, 0.0, 1.0, 0.05, WStrategy::JacobianEveryStep, &reference).unwrap();
        assert_eq!(r.status, CellStatus::Blowup);
        assert!(r.error.is_infinite());
    }
}
