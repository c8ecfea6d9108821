//! Fixed-step integrators: the modified singly-TASE stepper, plain explicit
//! Runge-Kutta, and a three-stage SDIRK baseline with simplified Newton.

use std::borrow::Cow;
use std::cell::Cell;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{axpy, norm_inf, Lu, LuFactorization, RealMatrix};
use crate::methods::{find_method, rk2_tableau, rk3_tableau, MsrktaseMethod, RkTableau};
use crate::problems::{select_w, WStrategy};
use crate::tase::apply_stage_operator_into;

/// Right-hand side `dy = F(t, y)`.
pub trait Rhs {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

impl<F> Rhs for F
where
    F: Fn(f64, &[f64], &mut [f64]),
{
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self(t, y, dy)
    }
}

/// An initial value problem with the matrices the W strategies draw on.
pub trait Problem: Rhs {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn initial_state(&self) -> Vec<f64>;
    fn jacobian(&self, t: f64, y: &[f64]) -> RealMatrix;
    /// Stiff linear part of `F`, used by [`WStrategy::LinearPartOnly`].
    fn linear_part(&self) -> RealMatrix;
}

fn check_finite(v: &[f64], stage: usize) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFiniteState { stage })
    }
}

/// One MSRKTASE step with a fresh factorization of `I - h alpha W`.
pub fn msrktase_step(
    m: &MsrktaseMethod,
    f: &dyn Rhs,
    w: &RealMatrix,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    if (w.rows(), w.cols()) != (y.len(), y.len()) {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            actual: w.rows(),
        });
    }
    let lu = Lu::factor(&w.identity_minus_scaled(h * m.alpha()))?;
    msrktase_step_with(m, f, &lu, t, y, h)
}

/// One MSRKTASE step reusing `lu`, which must factor `I - h alpha W`.
/// Performs `s*r` solves and `s` right-hand-side evaluations.
pub fn msrktase_step_with(
    m: &MsrktaseMethod,
    f: &dyn Rhs,
    lu: &LuFactorization,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let d = y.len();
    let tab = &m.tableau;
    let s = tab.stages();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut arg = vec![0.0; d];
    let mut fv = vec![0.0; d];
    let mut scratch = vec![0.0; d];
    for i in 0..s {
        arg.copy_from_slice(y);
        for (j, kj) in k.iter().enumerate() {
            let a = tab.a()[i][j];
            if a != 0.0 {
                axpy(h * a, kj, &mut arg);
            }
        }
        f.eval(t + tab.c()[i] * h, &arg, &mut fv);
        let mut ki = vec![0.0; d];
        apply_stage_operator_into(&m.operators, i, lu, &fv, &mut ki, &mut scratch)?;
        check_finite(&ki, i)?;
        k.push(ki);
    }
    let mut out = y.to_vec();
    for (b, ki) in tab.b().iter().zip(&k) {
        axpy(h * b, ki, &mut out);
    }
    Ok(out)
}

/// Classic explicit Runge-Kutta step.
pub fn explicit_rk_step(tab: &RkTableau, f: &dyn Rhs, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>> {
    let d = y.len();
    let s = tab.stages();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(s);
    let mut arg = vec![0.0; d];
    for i in 0..s {
        arg.copy_from_slice(y);
        for (j, kj) in k.iter().enumerate() {
            let a = tab.a()[i][j];
            if a != 0.0 {
                axpy(h * a, kj, &mut arg);
            }
        }
        let mut ki = vec![0.0; d];
        f.eval(t + tab.c()[i] * h, &arg, &mut ki);
        check_finite(&ki, i)?;
        k.push(ki);
    }
    let mut out = y.to_vec();
    for (b, ki) in tab.b().iter().zip(&k) {
        axpy(h * b, ki, &mut out);
    }
    check_finite(&out, s)?;
    Ok(out)
}

/// Diagonal coefficient of the three-stage L-stable SDIRK: the root of
/// `g^3 - 3 g^2 + 3 g / 2 - 1/6` in `(1/3, 1)`.
pub const SDIRK3_GAMMA: f64 = 0.435_866_521_508_459;

/// Stiffly accurate three-stage SDIRK of order three.
#[derive(Clone, Debug, PartialEq)]
pub struct Sdirk3Tableau {
    pub gamma: f64,
    pub a: [[f64; 3]; 3],
    pub c: [f64; 3],
}

pub fn sdirk3_tableau() -> Sdirk3Tableau {
    let g = SDIRK3_GAMMA;
    let b1 = -1.5 * g * g + 4.0 * g - 0.25;
    let b2 = 1.5 * g * g - 5.0 * g + 1.25;
    Sdirk3Tableau {
        gamma: g,
        a: [[g, 0.0, 0.0], [(1.0 - g) / 2.0, g, 0.0], [b1, b2, g]],
        c: [g, (1.0 + g) / 2.0, 1.0],
    }
}

/// Simplified-Newton controls for the SDIRK baseline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iters: 25,
        }
    }
}

/// Result of one SDIRK step.
#[derive(Clone, Debug, PartialEq)]
pub struct SdirkStep {
    pub y: Vec<f64>,
    /// Newton iterations per stage.
    pub iterations: [usize; 3],
}

/// One SDIRK3 step with a fresh factorization of `I - h gamma W`.
pub fn sdirk3_step(
    f: &dyn Rhs,
    w: &RealMatrix,
    t: f64,
    y: &[f64],
    h: f64,
    opts: NewtonOptions,
) -> Result<SdirkStep> {
    let lu = Lu::factor(&w.identity_minus_scaled(h * SDIRK3_GAMMA))?;
    sdirk3_step_with(f, &lu, t, y, h, opts)
}

/// One SDIRK3 step reusing `lu`, a factorization of `I - h gamma W`.
///
/// Stage `i` solves `Z = h sum_{j<i} a_ij F_j + h gamma F(t + c_i h, y + Z)`
/// by simplified Newton from `Z = 0`, stopping once the increment satisfies
/// `|dZ|_inf <= tol (1 + |y|_inf)`.
pub fn sdirk3_step_with(
    f: &dyn Rhs,
    lu: &LuFactorization,
    t: f64,
    y: &[f64],
    h: f64,
    opts: NewtonOptions,
) -> Result<SdirkStep> {
    let tab = sdirk3_tableau();
    let d = y.len();
    let scale = opts.tol * (1.0 + norm_inf(y));
    let mut stage_f: Vec<Vec<f64>> = Vec::with_capacity(3);
    let mut iterations = [0usize; 3];
    let mut z = vec![0.0; d];
    let mut arg = vec![0.0; d];
    let mut fz = vec![0.0; d];
    let mut resid = vec![0.0; d];
    let mut dz = vec![0.0; d];

    for i in 0..3 {
        let ti = t + tab.c[i] * h;
        let mut known = vec![0.0; d];
        for (j, fj) in stage_f.iter().enumerate() {
            axpy(h * tab.a[i][j], fj, &mut known);
        }
        z.fill(0.0);
        let mut converged = false;
        for it in 1..=opts.max_iters {
            for ((a, yi), zi) in arg.iter_mut().zip(y).zip(&z) {
                *a = yi + zi;
            }
            f.eval(ti, &arg, &mut fz);
            // -G(Z) = known + h gamma F(y + Z) - Z
            for k in 0..d {
                resid[k] = known[k] + h * tab.gamma * fz[k] - z[k];
            }
            lu.solve_into(&resid, &mut dz)?;
            axpy(1.0, &dz, &mut z);
            check_finite(&z, i)?;
            iterations[i] = it;
            if norm_inf(&dz) <= scale {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(Error::NewtonDivergence {
                stage: i,
                iterations: opts.max_iters,
            });
        }
        for ((a, yi), zi) in arg.iter_mut().zip(y).zip(&z) {
            *a = yi + zi;
        }
        let mut fi = vec![0.0; d];
        f.eval(ti, &arg, &mut fi);
        stage_f.push(fi);
    }
    // stiffly accurate: the update is the last stage value
    let out: Vec<f64> = y.iter().zip(&z).map(|(a, b)| a + b).collect();
    Ok(SdirkStep { y: out, iterations })
}

/// Which scheme [`integrate`] advances with.
#[derive(Clone, Debug, PartialEq)]
pub enum Stepper {
    Tase(MsrktaseMethod),
    Explicit { name: String, tableau: RkTableau },
    Sdirk3(NewtonOptions),
}

impl Stepper {
    pub fn name(&self) -> &str {
        match self {
            Stepper::Tase(m) => &m.name,
            Stepper::Explicit { name, .. } => name,
            Stepper::Sdirk3(_) => "SDIRK3",
        }
    }

    /// Catalog methods plus `SDIRK3`, `RK2` and `RK3` (explicit, `c = (0, 1/2, 3/4)`).
    pub fn by_name(name: &str) -> Result<Self> {
        match name.to_ascii_uppercase().as_str() {
            "SDIRK3" => Ok(Stepper::Sdirk3(NewtonOptions::default())),
            "RK2" => Ok(Stepper::Explicit {
                name: "RK2".into(),
                tableau: rk2_tableau(),
            }),
            "RK3" => Ok(Stepper::Explicit {
                name: "RK3".into(),
                tableau: rk3_tableau(0.5, 0.75)?,
            }),
            _ => Ok(Stepper::Tase(find_method(name)?.clone())),
        }
    }

    fn needs_matrix(&self) -> bool {
        !matches!(self, Stepper::Explicit { .. })
    }

    fn shift(&self) -> f64 {
        match self {
            Stepper::Tase(m) => m.alpha(),
            Stepper::Sdirk3(_) => SDIRK3_GAMMA,
            Stepper::Explicit { .. } => 0.0,
        }
    }
}

/// Record of one fixed-step integration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrationRun {
    pub method: String,
    pub problem: String,
    pub dim: usize,
    pub w_strategy: WStrategy,
    /// Step actually used, `(tf - t0) / steps`.
    pub h: f64,
    pub t0: f64,
    pub tf: f64,
    pub steps: usize,
    pub y_final: Vec<f64>,
    pub factorizations: usize,
    pub rhs_evals: u64,
    pub newton_iterations: u64,
    pub wall_seconds: f64,
}

/// Number of uniform steps for `h`, shrinking `h` rather than growing it.
pub fn step_count(t0: f64, tf: f64, h: f64) -> usize {
    let span = tf - t0;
    if span <= 0.0 {
        return 0;
    }
    let raw = span / h;
    let rounded = raw.round();
    // accept representation noise, otherwise round up so h never grows
    if (raw - rounded).abs() <= 1e-9 * raw.max(1.0) {
        rounded.max(1.0) as usize
    } else {
        raw.ceil() as usize
    }
}

struct Counting<'a, P: ?Sized> {
    inner: &'a P,
    count: Cell<u64>,
}

impl<P: Rhs + ?Sized> Rhs for Counting<'_, P> {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.count.set(self.count.get() + 1);
        self.inner.eval(t, y, dy);
    }
}

/// Advances `problem` from `t0` to `tf` with uniform steps no larger than `h`.
///
/// The matrix `W` and the factorization of `I - h*shift*W` are refreshed every
/// step under [`WStrategy::JacobianEveryStep`] and built once otherwise.
/// Errors carry the failing step index.
pub fn integrate(
    stepper: &Stepper,
    problem: &dyn Problem,
    t0: f64,
    tf: f64,
    h: f64,
    strategy: WStrategy,
) -> Result<IntegrationRun> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    if tf < t0 {
        return Err(Error::InvalidArgument(format!("tf = {tf} precedes t0 = {t0}")));
    }
    let steps = step_count(t0, tf, h);
    let h_used = if steps == 0 { h } else { (tf - t0) / steps as f64 };
    let counting = Counting {
        inner: problem,
        count: Cell::new(0),
    };
    let mut y = problem.initial_state();
    let mut factorizations = 0usize;
    let mut newton_iterations = 0u64;
    let mut cached_w: Option<RealMatrix> = None;
    let mut lu: Option<LuFactorization> = None;

    let start = Instant::now();
    for n in 0..steps {
        let t = t0 + n as f64 * h_used;
        let wrap = |e: Error| Error::AtStep {
            step: n,
            t,
            source: Box::new(e),
        };
        if stepper.needs_matrix() {
            let (w, refresh) = select_w(strategy, problem, t, &y, cached_w.as_ref());
            if refresh || lu.is_none() {
                let f = Lu::factor(&w.identity_minus_scaled(h_used * stepper.shift())).map_err(wrap)?;
                factorizations += 1;
                lu = Some(f);
            }
            if let Cow::Owned(w) = w {
                if !refresh {
                    cached_w = Some(w);
                }
            }
        }
        y = match stepper {
            Stepper::Tase(m) => {
                msrktase_step_with(m, &counting, lu.as_ref().expect("factored"), t, &y, h_used)
            }
            Stepper::Explicit { tableau, .. } => explicit_rk_step(tableau, &counting, t, &y, h_used),
            Stepper::Sdirk3(opts) => {
                sdirk3_step_with(&counting, lu.as_ref().expect("factored"), t, &y, h_used, *opts)
                    .map(|st| {
                        newton_iterations += st.iterations.iter().sum::<usize>() as u64;
                        st.y
                    })
            }
        }
        .map_err(wrap)?;
    }
    let wall_seconds = start.elapsed().as_secs_f64();

    Ok(IntegrationRun {
        method: stepper.name().to_string(),
        problem: problem.name().to_string(),
        dim: problem.dim(),
        w_strategy: strategy,
        h: h_used,
        t0,
        tf,
        steps,
        y_final: y,
        factorizations,
        rhs_evals: counting.count.get(),
        newton_iterations,
        wall_seconds,
    })
}
