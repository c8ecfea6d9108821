//! Method-of-lines test problems on a periodic grid over `[0, 2 pi)` with
//! fourth-order centered differences, and the rules for choosing `W`.

use std::borrow::Cow;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{Problem, Rhs};
use crate::linalg::RealMatrix;

/// Grid spacing `2 pi / n`.
pub fn grid_spacing(n: usize) -> f64 {
    2.0 * PI / n as f64
}

pub fn grid(n: usize) -> Vec<f64> {
    let h = grid_spacing(n);
    (0..n).map(|i| i as f64 * h).collect()
}

fn circulant(n: usize, stencil: [f64; 5], scale: f64) -> RealMatrix {
    assert!(n >= 5, "periodic five-point stencil needs n >= 5");
    let mut m = RealMatrix::zeros(n, n);
    for i in 0..n {
        for (k, &w) in stencil.iter().enumerate() {
            if w != 0.0 {
                let j = (i + n + k - 2) % n;
                m[(i, j)] += w * scale;
            }
        }
    }
    m
}

const D2_STENCIL: [f64; 5] = [-1.0, 16.0, -30.0, 16.0, -1.0];
const D1_STENCIL: [f64; 5] = [1.0, -8.0, 0.0, 8.0, -1.0];

/// Periodic fourth-order second derivative `(-1, 16, -30, 16, -1) / (12 h^2)`.
pub fn d2_matrix_periodic4(n: usize) -> RealMatrix {
    let h = grid_spacing(n);
    circulant(n, D2_STENCIL, 1.0 / (12.0 * h * h))
}

/// Periodic fourth-order first derivative `(1, -8, 0, 8, -1) / (12 h)`.
pub fn d1_matrix_periodic4(n: usize) -> RealMatrix {
    let h = grid_spacing(n);
    circulant(n, D1_STENCIL, 1.0 / (12.0 * h))
}

fn apply_stencil(stencil: &[f64; 5], scale: f64, y: &[f64], out: &mut [f64]) {
    let n = y.len();
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &w) in stencil.iter().enumerate() {
            if w != 0.0 {
                acc += w * y[(i + n + k - 2) % n];
            }
        }
        *o = acc * scale;
    }
}

/// Eigenvalue of the periodic second-difference operator on the Fourier mode
/// with angle `theta`: `(-2 cos 2 theta + 32 cos theta - 30) / (12 h^2)`.
pub fn d2_symbol(n: usize, theta: f64) -> f64 {
    let h = grid_spacing(n);
    (-2.0 * (2.0 * theta).cos() + 32.0 * theta.cos() - 30.0) / (12.0 * h * h)
}

/// All eigenvalues of the periodic second-difference matrix, from its symbol.
pub fn d2_eigenvalues(n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| d2_symbol(n, 2.0 * PI * k as f64 / n as f64))
        .collect()
}

/// Eigenvalues of a general real matrix (real Schur form).
pub fn eigenvalues(m: &RealMatrix) -> Vec<Complex64> {
    let dm = nalgebra::DMatrix::from_row_slice(m.rows(), m.cols(), m.as_slice());
    dm.complex_eigenvalues()
        .iter()
        .map(|z| Complex64::new(z.re, z.im))
        .collect()
}

/// `x^k` for a non-negative integer exponent by repeated squaring, so odd
/// powers keep their sign and tiny magnitudes flush to zero.
pub fn int_power(x: f64, mut k: u32) -> f64 {
    let mut base = x;
    let mut acc = 1.0;
    while k > 0 {
        if k & 1 == 1 {
            acc *= base;
        }
        base *= base;
        k >>= 1;
    }
    acc
}

/// `1 - cos(x)^101` on the grid.
pub fn pulse_initial_state(n: usize) -> Vec<f64> {
    grid(n).iter().map(|&x| 1.0 - int_power(x.cos(), 101)).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProblemKind {
    Diffusion,
    Burgers,
}

impl fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ProblemKind::Diffusion => "diffusion",
            ProblemKind::Burgers => "burgers",
        })
    }
}

impl FromStr for ProblemKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "diffusion" => Ok(ProblemKind::Diffusion),
            "burgers" => Ok(ProblemKind::Burgers),
            other => Err(Error::InvalidArgument(format!("unknown problem {other:?}"))),
        }
    }
}

/// Semi-discrete periodic PDE: `y_t = y_xx + 0.1 sin(t/50)` (diffusion) or
/// `y_t = 0.1 y_xx - (y^2/4)_x` (Burgers, conservative form).
#[derive(Clone, Debug)]
pub struct SemiDiscreteProblem {
    kind: ProblemKind,
    name: String,
    n: usize,
    d2: RealMatrix,
    d1: RealMatrix,
    linear: RealMatrix,
    y0: Vec<f64>,
}

impl SemiDiscreteProblem {
    pub fn new(kind: ProblemKind, n: usize) -> Result<Self> {
        if n < 5 {
            return Err(Error::InvalidArgument(format!("need N >= 5 grid points, got {n}")));
        }
        let d2 = d2_matrix_periodic4(n);
        let d1 = d1_matrix_periodic4(n);
        let linear = match kind {
            ProblemKind::Diffusion => d2.clone(),
            ProblemKind::Burgers => d2.scaled(0.1),
        };
        Ok(Self {
            kind,
            name: kind.to_string(),
            n,
            d2,
            d1,
            linear,
            y0: pulse_initial_state(n),
        })
    }

    pub fn kind(&self) -> ProblemKind {
        self.kind
    }

    pub fn grid_points(&self) -> usize {
        self.n
    }

    pub fn grid(&self) -> Vec<f64> {
        grid(self.n)
    }

    pub fn d2(&self) -> &RealMatrix {
        &self.d2
    }

    pub fn d1(&self) -> &RealMatrix {
        &self.d1
    }

    /// Grid state as CSV with header `x,y`.
    pub fn state_csv(&self, y: &[f64]) -> String {
        let mut s = String::from("x,y\n");
        for (x, v) in self.grid().iter().zip(y) {
            s.push_str(&format!("{x},{v}\n"));
        }
        s
    }
}

pub fn diffusion_problem(n: usize) -> Result<SemiDiscreteProblem> {
    SemiDiscreteProblem::new(ProblemKind::Diffusion, n)
}

pub fn burgers_problem(n: usize) -> Result<SemiDiscreteProblem> {
    SemiDiscreteProblem::new(ProblemKind::Burgers, n)
}

impl Rhs for SemiDiscreteProblem {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let h = grid_spacing(self.n);
        let s2 = 1.0 / (12.0 * h * h);
        match self.kind {
            ProblemKind::Diffusion => {
                apply_stencil(&D2_STENCIL, s2, y, dy);
                let source = 0.1 * (t / 50.0).sin();
                for v in dy.iter_mut() {
                    *v += source;
                }
            }
            ProblemKind::Burgers => {
                apply_stencil(&D2_STENCIL, 0.1 * s2, y, dy);
                let flux: Vec<f64> = y.iter().map(|v| v * v / 4.0).collect();
                let mut conv = vec![0.0; self.n];
                apply_stencil(&D1_STENCIL, 1.0 / (12.0 * h), &flux, &mut conv);
                for (d, c) in dy.iter_mut().zip(&conv) {
                    *d -= c;
                }
            }
        }
    }
}

impl Problem for SemiDiscreteProblem {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.n
    }

    fn initial_state(&self) -> Vec<f64> {
        self.y0.clone()
    }

    fn jacobian(&self, _t: f64, y: &[f64]) -> RealMatrix {
        match self.kind {
            ProblemKind::Diffusion => self.d2.clone(),
            // 0.1 D2 - D1 diag(y) / 2
            ProblemKind::Burgers => {
                let mut j = self.linear.clone();
                for i in 0..self.n {
                    for (k, &yk) in y.iter().enumerate() {
                        let d = self.d1[(i, k)];
                        if d != 0.0 {
                            j[(i, k)] -= d * yk / 2.0;
                        }
                    }
                }
                j
            }
        }
    }

    fn linear_part(&self) -> RealMatrix {
        self.linear.clone()
    }
}

/// Scalar test equation `y' = lambda y + a cos t`.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarProblem {
    name: String,
    lambda: f64,
    forcing: f64,
    y0: f64,
}

impl ScalarProblem {
    pub fn new(name: impl Into<String>, lambda: f64, forcing: f64, y0: f64) -> Self {
        Self {
            name: name.into(),
            lambda,
            forcing,
            y0,
        }
    }

    /// `y' = -y + cos t`, `y(0) = 1`.
    pub fn forced_decay() -> Self {
        Self::new("forced-decay", -1.0, 1.0, 1.0)
    }

    /// Closed-form solution from `t = 0`.
    pub fn exact(&self, t: f64) -> f64 {
        let (l, a) = (self.lambda, self.forcing);
        let b = a / (1.0 + l * l);
        let c = -l * b;
        let k = self.y0 - c;
        c * t.cos() + b * t.sin() + k * (l * t).exp()
    }
}

impl Rhs for ScalarProblem {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        dy[0] = self.lambda * y[0] + self.forcing * t.cos();
    }
}

impl Problem for ScalarProblem {
    fn name(&self) -> &str {
        &self.name
    }
    fn dim(&self) -> usize {
        1
    }
    fn initial_state(&self) -> Vec<f64> {
        vec![self.y0]
    }
    fn jacobian(&self, _t: f64, _y: &[f64]) -> RealMatrix {
        RealMatrix::from_rows(&[vec![self.lambda]])
    }
    fn linear_part(&self) -> RealMatrix {
        self.jacobian(0.0, &[self.y0])
    }
}

/// How `W` is chosen during an integration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WStrategy {
    JacobianEveryStep,
    JacobianInitialOnly,
    LinearPartOnly,
}

impl WStrategy {
    pub const ALL: [WStrategy; 3] = [
        WStrategy::JacobianEveryStep,
        WStrategy::JacobianInitialOnly,
        WStrategy::LinearPartOnly,
    ];

    /// Whether `W` (and hence the factorization) changes every step.
    pub fn refreshes(self) -> bool {
        matches!(self, WStrategy::JacobianEveryStep)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            WStrategy::JacobianEveryStep => "jacobian-every-step",
            WStrategy::JacobianInitialOnly => "jacobian-initial-only",
            WStrategy::LinearPartOnly => "linear-part-only",
        }
    }
}

impl fmt::Display for WStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WStrategy {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        WStrategy::ALL
            .into_iter()
            .find(|w| w.as_str() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown W strategy {s:?}")))
    }
}

/// Picks `W` for the current step. Returns the matrix and whether it differs
/// from the previous step's (i.e. a new factorization is needed). `cached`
/// is the matrix stored by the caller for frozen strategies.
pub fn select_w<'a>(
    strategy: WStrategy,
    problem: &dyn Problem,
    t: f64,
    y: &[f64],
    cached: Option<&'a RealMatrix>,
) -> (Cow<'a, RealMatrix>, bool) {
    match (strategy, cached) {
        (WStrategy::JacobianEveryStep, _) => (Cow::Owned(problem.jacobian(t, y)), true),
        (_, Some(w)) => (Cow::Borrowed(w), false),
        (WStrategy::JacobianInitialOnly, None) => (Cow::Owned(problem.jacobian(t, y)), false),
        (WStrategy::LinearPartOnly, None) => (Cow::Owned(problem.linear_part()), false),
    }
}
