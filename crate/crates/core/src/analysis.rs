//! The W-method view of a modified singly-TASE scheme.
//!
//! A method with `s` stages and depth `r` is an `n = s*r` stage W-method with
//! block-diagonal `L`, block `A_hat` and stretched weights `b_hat`. Everything
//! here (order residuals, error norms, stability function, stability angle)
//! works on that tableau.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::Rhs;
use crate::linalg::{axpy, complex_solve, ComplexMatrix, Lu, RealMatrix};
use crate::methods::MsrktaseMethod;

/// Equivalent W-method tableau.
#[derive(Clone, Debug, PartialEq)]
pub struct WTableau {
    ahat: RealMatrix,
    l: RealMatrix,
    bhat: Vec<f64>,
    alpha: f64,
    chat: Vec<f64>,
    depth: Option<usize>,
}

fn strictly_lower(m: &RealMatrix) -> bool {
    (0..m.rows()).all(|i| (i..m.cols()).all(|j| m[(i, j)] == 0.0))
}

impl WTableau {
    pub fn new(ahat: RealMatrix, l: RealMatrix, bhat: Vec<f64>, alpha: f64) -> Result<Self> {
        let n = bhat.len();
        if n == 0
            || (ahat.rows(), ahat.cols()) != (n, n)
            || (l.rows(), l.cols()) != (n, n)
        {
            return Err(Error::InvalidArgument(format!(
                "W tableau blocks must be {n} x {n}"
            )));
        }
        if !strictly_lower(&ahat) || !strictly_lower(&l) {
            return Err(Error::InvalidArgument(
                "A_hat and L must be strictly lower triangular".into(),
            ));
        }
        let chat = ahat.matvec(&vec![1.0; n]);
        Ok(Self {
            ahat,
            l,
            bhat,
            alpha,
            chat,
            depth: None,
        })
    }

    pub fn stages(&self) -> usize {
        self.bhat.len()
    }

    pub fn ahat(&self) -> &RealMatrix {
        &self.ahat
    }

    pub fn l(&self) -> &RealMatrix {
        &self.l
    }

    pub fn bhat(&self) -> &[f64] {
        &self.bhat
    }

    pub fn chat(&self) -> &[f64] {
        &self.chat
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// TASE depth when built by [`to_wmethod`].
    pub fn depth(&self) -> Option<usize> {
        self.depth
    }

    /// `Gamma = alpha (I + L)`.
    pub fn gamma(&self) -> RealMatrix {
        let n = self.stages();
        RealMatrix::identity(n).add_scaled(1.0, &self.l).scaled(self.alpha)
    }

    /// `A_hat + Gamma`, lower triangular with constant diagonal alpha.
    pub fn combined(&self) -> RealMatrix {
        self.ahat.add_scaled(1.0, &self.gamma())
    }
}

/// Builds the `s*r`-stage W-method equivalent to `m`.
pub fn to_wmethod(m: &MsrktaseMethod) -> WTableau {
    let s = m.stages();
    let r = m.depth();
    let n = s * r;
    let beta = m.operators.beta();
    let a = m.tableau.a();
    let b = m.tableau.b();

    let l = RealMatrix::from_fn(n, n, |i, j| {
        if i / r == j / r && j % r < i % r {
            1.0
        } else {
            0.0
        }
    });
    let ahat = RealMatrix::from_fn(n, n, |i, j| {
        let (bi, bj) = (i / r, j / r);
        if bj < bi {
            a[bi][bj] * beta[bj][j % r]
        } else {
            0.0
        }
    });
    let bhat = (0..n).map(|k| b[k / r] * beta[k / r][k % r]).collect();
    let mut w = WTableau::new(ahat, l, bhat, m.alpha()).expect("block structure is valid");
    w.depth = Some(r);
    w
}

/// One step of the W-method: `(I - h alpha J) K_i = h F(t + c_i h, y + sum_j A_ij K_j)
/// + h alpha J sum_j L_ij K_j`, then `y + sum_i b_i K_i`.
pub fn wmethod_step(
    wt: &WTableau,
    f: &dyn Rhs,
    jac: &RealMatrix,
    t: f64,
    y: &[f64],
    h: f64,
) -> Result<Vec<f64>> {
    let d = y.len();
    if (jac.rows(), jac.cols()) != (d, d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            actual: jac.rows(),
        });
    }
    let n = wt.stages();
    let lu = Lu::factor(&jac.identity_minus_scaled(h * wt.alpha))?;
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(n);
    let mut arg = vec![0.0; d];
    let mut rhs = vec![0.0; d];
    let mut acc = vec![0.0; d];
    for i in 0..n {
        arg.copy_from_slice(y);
        acc.fill(0.0);
        for (j, kj) in k.iter().enumerate() {
            let a = wt.ahat[(i, j)];
            if a != 0.0 {
                axpy(a, kj, &mut arg);
            }
            let l = wt.l[(i, j)];
            if l != 0.0 {
                axpy(l, kj, &mut acc);
            }
        }
        f.eval(t + wt.chat[i] * h, &arg, &mut rhs);
        for v in rhs.iter_mut() {
            *v *= h;
        }
        let jacc = jac.matvec(&acc);
        axpy(h * wt.alpha, &jacc, &mut rhs);
        let ki = lu.solve(&rhs)?;
        if ki.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteState { stage: i });
        }
        k.push(ki);
    }
    let mut out = y.to_vec();
    for (bi, ki) in wt.bhat.iter().zip(&k) {
        axpy(*bi, ki, &mut out);
    }
    Ok(out)
}

/// `R(z) = 1 + z b^T (I - z(A_hat + Gamma))^{-1} 1` by one complex solve.
pub fn stability_function(wt: &WTableau, z: Complex64) -> Result<Complex64> {
    let n = wt.stages();
    let m = ComplexMatrix::identity(n).add_scaled(-z, &wt.combined().to_complex());
    let ones = vec![Complex64::new(1.0, 0.0); n];
    let x = complex_solve(&m, &ones).map_err(|e| match e {
        Error::SingularMatrix { .. } => Error::PoleAtZ { re: z.re, im: z.im },
        other => other,
    })?;
    let s: Complex64 = wt.bhat.iter().zip(&x).map(|(b, v)| *b * v).sum();
    Ok(Complex64::new(1.0, 0.0) + z * s)
}

/// Evaluates `R(z)` by forward substitution: `I - z(A_hat + Gamma)` is lower
/// triangular. Used by the scans; poles map to infinity.
#[derive(Clone, Debug)]
pub struct StabilityEvaluator {
    m: RealMatrix,
    bhat: Vec<f64>,
}

impl StabilityEvaluator {
    pub fn new(wt: &WTableau) -> Self {
        Self {
            m: wt.combined(),
            bhat: wt.bhat.clone(),
        }
    }

    pub fn eval(&self, z: Complex64) -> Complex64 {
        let n = self.bhat.len();
        let one = Complex64::new(1.0, 0.0);
        let mut x = vec![Complex64::new(0.0, 0.0); n];
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..n {
            let row = self.m.row(i);
            let mut acc = one;
            for j in 0..i {
                acc += z * row[j] * x[j];
            }
            let diag = one - z * row[i];
            if diag == Complex64::new(0.0, 0.0) {
                return Complex64::new(f64::INFINITY, 0.0);
            }
            x[i] = acc / diag;
            s += self.bhat[i] * x[i];
        }
        one + z * s
    }

    pub fn abs(&self, z: Complex64) -> f64 {
        self.eval(z).norm()
    }
}

/// `R(inf) = 1 - b^T (A_hat + Gamma)^{-1} 1`.
pub fn r_infinity(wt: &WTableau) -> f64 {
    let m = wt.combined();
    let n = wt.stages();
    let mut x = vec![0.0; n];
    for i in 0..n {
        let row = m.row(i);
        let mut acc = 1.0;
        for j in 0..i {
            acc -= row[j] * x[j];
        }
        x[i] = acc / row[i];
    }
    1.0 - wt.bhat.iter().zip(&x).map(|(b, v)| b * v).sum::<f64>()
}

/// Sampling parameters for [`stability_angle_in`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AngleScan {
    pub resolution_deg: f64,
    pub radial_samples: usize,
    pub radius_min: f64,
    pub radius_max: f64,
    /// Final bisection width in degrees.
    pub refine_deg: f64,
    pub tolerance: f64,
}

impl Default for AngleScan {
    fn default() -> Self {
        Self {
            resolution_deg: 0.5,
            radial_samples: 2000,
            radius_min: 1e-6,
            radius_max: 1e8,
            refine_deg: 0.01,
            tolerance: 1e-12,
        }
    }
}

impl AngleScan {
    fn radii(&self) -> Vec<f64> {
        let n = self.radial_samples.max(2);
        let (lo, hi) = (self.radius_min.ln(), self.radius_max.ln());
        (0..n)
            .map(|k| (lo + (hi - lo) * k as f64 / (n - 1) as f64).exp())
            .collect()
    }
}

/// Largest `|R(-rho e^{i phi})|` over the sampled radii.
pub fn max_abs_on_ray(ev: &StabilityEvaluator, radii: &[f64], phi_deg: f64) -> f64 {
    let dir = -Complex64::from_polar(1.0, phi_deg.to_radians());
    radii
        .iter()
        .map(|&rho| ev.abs(dir * rho))
        .fold(0.0, f64::max)
}

/// A(theta) angle in degrees with the default radial range `[1e-6, 1e8]`.
pub fn stability_angle(wt: &WTableau, angular_resolution: f64, radial_samples: usize) -> f64 {
    stability_angle_in(
        wt,
        &AngleScan {
            resolution_deg: angular_resolution,
            radial_samples,
            ..AngleScan::default()
        },
    )
}

/// Largest theta such that `|R(z)| <= 1 + tol` at every sampled `z` with
/// `arg(-z) <= theta`. Rays are checked on a grid of `resolution_deg`, then the
/// first failing cell is bisected down to `refine_deg`. `R(conj z) = conj R(z)`
/// makes the lower half-plane redundant.
pub fn stability_angle_in(wt: &WTableau, scan: &AngleScan) -> f64 {
    assert!(scan.resolution_deg > 0.0, "angular resolution must be positive");
    let ev = StabilityEvaluator::new(wt);
    let radii = scan.radii();
    let limit = 1.0 + scan.tolerance;
    if r_infinity(wt).abs() > limit {
        return 0.0;
    }
    let ok = |phi: f64| max_abs_on_ray(&ev, &radii, phi) <= limit;

    let steps = (90.0 / scan.resolution_deg).ceil() as usize;
    let mut prev = 0.0;
    for k in 0..=steps {
        let phi = (k as f64 * scan.resolution_deg).min(90.0);
        if !ok(phi) {
            if k == 0 {
                return 0.0;
            }
            let (mut lo, mut hi) = (prev, phi);
            while hi - lo > scan.refine_deg {
                let mid = 0.5 * (lo + hi);
                if ok(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            return 0.5 * (lo + hi);
        }
        prev = phi;
    }
    90.0
}

/// A point of `|R(z)| = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryPoint {
    pub ray_deg: f64,
    pub re: f64,
    pub im: f64,
    pub abs_r: f64,
}

/// Points of the stability boundary found by bisecting `|R(rho e^{i phi})| - 1`
/// along `n_points` rays with `phi` uniform in `[90, 270]` degrees. At most
/// three crossings per ray, sorted by ray then radius.
pub fn stability_boundary(wt: &WTableau, n_points: usize) -> Vec<BoundaryPoint> {
    assert!(n_points >= 8, "need at least 8 rays");
    let ev = StabilityEvaluator::new(wt);
    let scan = AngleScan::default();
    let radii = scan.radii();
    let mut out = Vec::new();
    for k in 0..n_points {
        let phi = 90.0 + 180.0 * k as f64 / (n_points - 1) as f64;
        let dir = Complex64::from_polar(1.0, phi.to_radians());
        let g = |rho: f64| ev.abs(dir * rho) - 1.0;
        let mut found = 0;
        let mut prev = (radii[0], g(radii[0]));
        for &rho in &radii[1..] {
            let cur = (rho, g(rho));
            let crosses = prev.1.is_finite()
                && cur.1.is_finite()
                && prev.1.signum() != cur.1.signum()
                && prev.1.abs().max(cur.1.abs()) > 1e-10;
            if crosses {
                let (mut lo, mut hi) = (prev.0, cur.0);
                let glo = prev.1;
                for _ in 0..80 {
                    let mid = (lo * hi).sqrt();
                    if g(mid).signum() == glo.signum() {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                let rho = (lo * hi).sqrt();
                let z = dir * rho;
                out.push(BoundaryPoint {
                    ray_deg: phi,
                    re: z.re,
                    im: z.im,
                    abs_r: ev.abs(z),
                });
                found += 1;
                if found == 3 {
                    break;
                }
            }
            prev = cur;
        }
    }
    out
}

/// CSV with header `re,im,abs_R`.
pub fn boundary_csv(points: &[BoundaryPoint]) -> String {
    let mut s = String::from("re,im,abs_R\n");
    for p in points {
        s.push_str(&format!("{},{},{}\n", p.re, p.im, p.abs_r));
    }
    s
}

/// A named order-condition residual.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub name: String,
    pub order: usize,
    pub value: f64,
}

fn residual(name: &str, order: usize, value: f64) -> Residual {
    Residual {
        name: name.to_string(),
        order,
        value,
    }
}

/// Vectors and products shared by the residual formulas.
struct Pieces {
    b: Vec<f64>,
    a: RealMatrix,
    g: RealMatrix,
    m: RealMatrix,
    one: Vec<f64>,
    c: Vec<f64>,
}

impl Pieces {
    fn new(wt: &WTableau) -> Self {
        let n = wt.stages();
        Self {
            b: wt.bhat.clone(),
            a: wt.ahat.clone(),
            g: wt.gamma(),
            m: wt.combined(),
            one: vec![1.0; n],
            c: wt.chat.clone(),
        }
    }

    /// `b^T M_1 M_2 ... v`.
    fn bt(&self, mats: &[&RealMatrix], v: &[f64]) -> f64 {
        let mut x = v.to_vec();
        for m in mats.iter().rev() {
            x = m.matvec(&x);
        }
        self.b.iter().zip(&x).map(|(p, q)| p * q).sum()
    }

    fn c_pow(&self, k: i32) -> Vec<f64> {
        self.c.iter().map(|x| x.powi(k)).collect()
    }
}

fn hadamard(x: &[f64], y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(a, b)| a * b).collect()
}

/// Every W-method order condition up to `up_to` (at most 4), as residuals.
pub fn order_residuals_w(wt: &WTableau, up_to: usize) -> Vec<Residual> {
    assert!((1..=4).contains(&up_to), "order must be in 1..=4");
    let p = Pieces::new(wt);
    let (a, g, one, c) = (&p.a, &p.g, &p.one, &p.c);
    let mut out = vec![residual("b^T 1 - 1", 1, p.bt(&[], one) - 1.0)];
    if up_to >= 2 {
        out.push(residual("b^T c - 1/2", 2, p.bt(&[], c) - 0.5));
        out.push(residual("b^T G 1", 2, p.bt(&[g], one)));
    }
    if up_to >= 3 {
        out.push(residual("b^T c^2 - 1/3", 3, p.bt(&[], &p.c_pow(2)) - 1.0 / 3.0));
        out.push(residual("b^T A c - 1/6", 3, p.bt(&[a], c) - 1.0 / 6.0));
        out.push(residual("b^T G^2 1", 3, p.bt(&[g, g], one)));
        out.push(residual("b^T A G 1", 3, p.bt(&[a, g], one)));
        out.push(residual("b^T G A 1", 3, p.bt(&[g, a], one)));
    }
    if up_to >= 4 {
        let ac = a.matvec(c);
        let ag1 = a.matvec(&g.matvec(one));
        out.push(residual("b^T c^3 - 1/4", 4, p.bt(&[], &p.c_pow(3)) - 0.25));
        out.push(residual("b^T (A c . c) - 1/8", 4, p.bt(&[], &hadamard(&ac, c)) - 0.125));
        out.push(residual("b^T A c^2 - 1/12", 4, p.bt(&[a], &p.c_pow(2)) - 1.0 / 12.0));
        out.push(residual("b^T A^2 c - 1/24", 4, p.bt(&[a, a], c) - 1.0 / 24.0));
        out.push(residual("b^T G^3 1", 4, p.bt(&[g, g, g], one)));
        out.push(residual("b^T A G^2 1", 4, p.bt(&[a, g, g], one)));
        out.push(residual("b^T G A G 1", 4, p.bt(&[g, a, g], one)));
        out.push(residual("b^T G^2 A 1", 4, p.bt(&[g, g, a], one)));
        out.push(residual("b^T A^2 G 1", 4, p.bt(&[a, a, g], one)));
        out.push(residual("b^T A G A 1", 4, p.bt(&[a, g, a], one)));
        out.push(residual("b^T G A^2 1", 4, p.bt(&[g, a, a], one)));
        out.push(residual("b^T G c^2", 4, p.bt(&[g], &p.c_pow(2))));
        out.push(residual("b^T (A G 1 . c)", 4, p.bt(&[], &hadamard(&ag1, c))));
    }
    out
}

/// Order conditions when `W` is the exact Jacobian.
pub fn order_residuals_rosenbrock(wt: &WTableau, up_to: usize) -> Vec<Residual> {
    assert!((1..=4).contains(&up_to), "order must be in 1..=4");
    let p = Pieces::new(wt);
    let (a, m, one, c) = (&p.a, &p.m, &p.one, &p.c);
    let mut out = vec![residual("b^T 1 - 1", 1, p.bt(&[], one) - 1.0)];
    if up_to >= 2 {
        out.push(residual("b^T (G+A) 1 - 1/2", 2, p.bt(&[m], one) - 0.5));
    }
    if up_to >= 3 {
        out.push(residual("b^T c^2 - 1/3", 3, p.bt(&[], &p.c_pow(2)) - 1.0 / 3.0));
        out.push(residual("b^T (G+A)^2 1 - 1/6", 3, p.bt(&[m, m], one) - 1.0 / 6.0));
    }
    if up_to >= 4 {
        let am1 = a.matvec(&m.matvec(one));
        out.push(residual("b^T c^3 - 1/4", 4, p.bt(&[], &p.c_pow(3)) - 0.25));
        out.push(residual(
            "b^T (A (G+A) 1 . c) - 1/8",
            4,
            p.bt(&[], &hadamard(&am1, c)) - 0.125,
        ));
        out.push(residual(
            "b^T (G+A) c^2 - 1/12",
            4,
            p.bt(&[m], &p.c_pow(2)) - 1.0 / 12.0,
        ));
        out.push(residual("b^T (G+A)^3 1 - 1/24", 4, p.bt(&[m, m, m], one) - 1.0 / 24.0));
    }
    out
}

/// Fails unless every W residual up to `p` is within `1e-10`.
pub fn verify_order(wt: &WTableau, p: usize) -> Result<()> {
    let worst = order_residuals_w(wt, p)
        .into_iter()
        .max_by(|x, y| x.value.abs().total_cmp(&y.value.abs()))
        .expect("at least one residual");
    if worst.value.abs() > ORDER_TOLERANCE {
        return Err(Error::OrderNotVerified {
            order: p,
            name: worst.name,
            value: worst.value,
        });
    }
    Ok(())
}

pub const ORDER_TOLERANCE: f64 = 1e-10;

/// Leading error coefficients for a general `W`: the four order-three terms
/// when `p = 2`, the seven `C41..C47` when `p = 3`.
pub fn error_coefficients_c(wt: &WTableau, p: usize) -> Result<Vec<f64>> {
    check_norm_order(p)?;
    verify_order(wt, p)?;
    let q = Pieces::new(wt);
    let (a, g, one, c) = (&q.a, &q.g, &q.one, &q.c);
    Ok(if p == 2 {
        vec![
            q.bt(&[a], c) - 1.0 / 6.0,
            q.bt(&[g, g], one),
            q.bt(&[a, g], one),
            q.bt(&[g, a], one),
        ]
    } else {
        let ac = a.matvec(c);
        vec![
            q.bt(&[a, a], c) - 1.0 / 24.0,
            (8.0 * q.bt(&[], &hadamard(&ac, c)) - 1.0) / 24.0,
            (12.0 * q.bt(&[a], &q.c_pow(2)) - 1.0) / 24.0,
            (4.0 * q.bt(&[], &q.c_pow(3)) - 1.0) / 24.0,
            q.bt(&[a, g, g], one),
            q.bt(&[g, g], c),
            q.bt(&[g, g, g], one),
        ]
    })
}

/// Leading error coefficients when `W` is the exact Jacobian.
pub fn error_coefficients_d(wt: &WTableau, p: usize) -> Result<Vec<f64>> {
    check_norm_order(p)?;
    verify_order(wt, p)?;
    let q = Pieces::new(wt);
    let (a, m, one, c) = (&q.a, &q.m, &q.one, &q.c);
    Ok(if p == 2 {
        vec![q.bt(&[m, m], one) - 1.0 / 6.0]
    } else {
        let am1 = a.matvec(&m.matvec(one));
        vec![
            q.bt(&[m, m, m], one) - 1.0 / 24.0,
            (8.0 * q.bt(&[], &hadamard(&am1, c)) - 1.0) / 24.0,
            (12.0 * q.bt(&[m], &q.c_pow(2)) - 1.0) / 24.0,
            (4.0 * q.bt(&[], &q.c_pow(3)) - 1.0) / 24.0,
        ]
    })
}

fn check_norm_order(p: usize) -> Result<()> {
    if p == 2 || p == 3 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "error norms are defined for orders 2 and 3, got {p}"
        )))
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `C_{p+1}`: 2-norm of [`error_coefficients_c`].
pub fn error_norm_c(wt: &WTableau, p: usize) -> Result<f64> {
    Ok(norm(&error_coefficients_c(wt, p)?))
}

/// `D_{p+1}`: 2-norm of [`error_coefficients_d`].
pub fn error_norm_d(wt: &WTableau, p: usize) -> Result<f64> {
    Ok(norm(&error_coefficients_d(wt, p)?))
}

/// Outcome of [`order_barrier_check`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BarrierReport {
    pub depth: usize,
    /// `(Gamma - alpha I)^r` is exactly the zero matrix.
    pub nilpotent: bool,
    pub max_power_entry: f64,
    /// Largest order-(r+1) W residual, when `r + 1 <= 4`.
    pub witness: Option<Residual>,
    pub threshold: f64,
    /// The order-(r+1) conditions are shown to be violated.
    pub confirmed: bool,
}

/// Checks the nilpotency behind the `r + 1` order barrier and exhibits an
/// order-(r+1) residual of size at least `alpha^r / 2`.
pub fn order_barrier_check(wt: &WTableau, r: usize) -> BarrierReport {
    assert!(r >= 1);
    let n = wt.stages();
    let shifted = wt.gamma().add_scaled(-wt.alpha, &RealMatrix::identity(n));
    let power = shifted.pow(r);
    let max_power_entry = power.max_abs();
    let nilpotent = power.as_slice().iter().all(|&x| x == 0.0);
    let threshold = wt.alpha.abs().powi(r as i32) / 2.0;
    let witness = (r < 4).then(|| {
        order_residuals_w(wt, r + 1)
            .into_iter()
            .filter(|res| res.order == r + 1)
            .max_by(|x, y| x.value.abs().total_cmp(&y.value.abs()))
            .expect("order r+1 residuals exist")
    });
    let confirmed = nilpotent
        && witness
            .as_ref()
            .is_some_and(|w| wt.alpha != 0.0 && w.value.abs() >= threshold);
    BarrierReport {
        depth: r,
        nilpotent,
        max_power_entry,
        witness,
        threshold,
        confirmed,
    }
}

/// Residual list as a JSON object `{name: value}`.
pub fn residuals_json(residuals: &[Residual]) -> serde_json::Value {
    let map = residuals
        .iter()
        .map(|r| (r.name.clone(), serde_json::Value::from(r.value)))
        .collect::<serde_json::Map<_, _>>();
    serde_json::Value::Object(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::methods::{catalog, derive_msrktase2, derive_msrktase3, find_method, rk2_tableau, MsrktaseMethod, RkTableau};
    use crate::tase::StageOperatorSet;

    fn w(name: &str) -> WTableau {
        to_wmethod(find_method(name).unwrap())
    }

    fn max_abs(res: &[Residual]) -> f64 {
        res.iter().fold(0.0, |m, r| m.max(r.value.abs()))
    }

    #[test]
    fn degenerate_single_stage() {
        let m = MsrktaseMethod::new(
            "BE",
            RkTableau::new(vec![vec![0.0]], vec![1.0]).unwrap(),
            StageOperatorSet::new(1.0, vec![vec![1.0]]).unwrap(),
            1,
        )
        .unwrap();
        let wt = to_wmethod(&m);
        assert_eq!(wt.stages(), 1);
        assert_eq!(wt.l()[(0, 0)], 0.0);
        assert_eq!(wt.ahat()[(0, 0)], 0.0);
        assert_eq!(wt.bhat(), &[1.0]);
        // backward Euler: R(z) = 1/(1 - z)
        let z = Complex64::new(-2.0, 1.0);
        let r = stability_function(&wt, z).unwrap();
        assert!((r - 1.0 / (1.0 - z)).norm() < 1e-15);
        let report = order_barrier_check(&wt, 1);
        assert!(report.nilpotent && report.confirmed);
    }

    #[test]
    fn msrktase2_block_structure() {
        let m = find_method("MSRKTASE2").unwrap();
        let wt = to_wmethod(m);
        assert_eq!(wt.stages(), 4);
        let (b, beta) = (m.tableau.b(), m.operators.beta());
        let want = [b[0] * beta[0][0], b[0] * beta[0][1], b[1] * beta[1][0], b[1] * beta[1][1]];
        assert_eq!(wt.bhat(), &want);
        assert!((wt.bhat().iter().sum::<f64>() - 1.0).abs() < 1e-15);
        let g = wt.gamma();
        for i in 0..4 {
            assert_eq!(g[(i, i)], m.alpha());
        }
    }

    #[test]
    fn nilpotency_of_all_catalog_methods() {
        for m in catalog() {
            let wt = to_wmethod(m);
            let report = order_barrier_check(&wt, m.depth());
            assert!(report.nilpotent, "{}", m.name);
            assert!(report.confirmed, "{}: {:?}", m.name, report);
            // one power short is not zero
            if m.depth() > 1 {
                assert!(!order_barrier_check(&wt, m.depth() - 1).nilpotent);
            }
        }
    }

    #[test]
    fn msrktase2_barrier_witness_is_order_three() {
        let report = order_barrier_check(&w("MSRKTASE2"), 2);
        let wit = report.witness.unwrap();
        assert_eq!(wit.order, 3);
        assert!(wit.value.abs() > 1e-3, "{wit:?}");
    }

    #[test]
    fn stability_function_basics() {
        for m in catalog() {
            let wt = to_wmethod(m);
            let r0 = stability_function(&wt, Complex64::new(0.0, 0.0)).unwrap();
            assert_eq!(r0, Complex64::new(1.0, 0.0));
            let z = Complex64::new(-0.7, 2.3);
            let a = stability_function(&wt, z).unwrap();
            let b = stability_function(&wt, z.conj()).unwrap();
            assert!((a.conj() - b).norm() < 1e-13);
            let ev = StabilityEvaluator::new(&wt);
            assert!((ev.eval(z) - a).norm() < 1e-12);
        }
        let r = stability_function(&w("MSRKTASE2"), Complex64::new(-1.0, 0.0)).unwrap();
        assert!(r.norm() < 1.0);
    }

    #[test]
    fn stability_function_pole() {
        let wt = w("MSRKTASE2");
        let pole = Complex64::new(1.0 / wt.alpha(), 0.0);
        assert!(matches!(
            stability_function(&wt, pole),
            Err(Error::PoleAtZ { .. })
        ));
    }

    #[test]
    fn stability_function_matches_exponential() {
        for m in catalog() {
            let wt = to_wmethod(m);
            let p = m.declared_order as i32;
            // ratio test: |R - e^z| / |z|^(p+1) stays bounded and nonvanishing
            let e = |z: f64| {
                (stability_function(&wt, Complex64::new(z, 0.0)).unwrap().re - z.exp()).abs()
            };
            // error constant may vanish (3b is linearly fourth order), so only a lower bound
            let (e1, e2) = (e(5e-2), e(5e-3));
            let ratio = e1 / e2;
            let want = 10f64.powi(p + 1);
            assert!(ratio > want / 3.0, "{} ratio {ratio}", m.name);
        }
        // taylor check at z = 1e-4 for order-two methods
        let wt = w("MSRKTASE2");
        let z = 1e-4;
        let r = stability_function(&wt, Complex64::new(z, 0.0)).unwrap().re;
        assert!((r - z.exp()).abs() < 1e-12);
    }

    #[test]
    fn r_infinity_values_and_closed_forms() {
        assert!(r_infinity(&w("MSRKTASE2")).abs() < 1e-11);
        assert!((r_infinity(&w("SRKTASE2")) - 0.5).abs() < 1e-14);
        assert!(r_infinity(&w("MSRKTASE3b")).abs() < 1e-10);
        // 3a uses the five-digit beta32 so its limit is small but not zero
        assert!(r_infinity(&w("MSRKTASE3a")).abs() < 1e-4);

        // order-two closed form over a range of alpha and beta12
        for &alpha in &[0.3, 0.32, 1.0, 2.5] {
            for &b12 in &[-1.0, 0.2, 0.574, 1.7] {
                let b22 = -(4.0 + b12) / 3.0;
                let ops = StageOperatorSet::new(alpha, vec![vec![1.0 - b12, b12], vec![1.0 - b22, b22]]).unwrap();
                let m = MsrktaseMethod::new("t", rk2_tableau(), ops, 2).unwrap();
                let closed = -(-7.0 + 12.0 * alpha - 6.0 * alpha * alpha + 6.0 * b12 + b12 * b12)
                    / (6.0 * alpha * alpha);
                assert!((r_infinity(&to_wmethod(&m)) - closed).abs() < 1e-12);
            }
        }
        // order-three closed form at c2 = 1/2, c3 = 3/4
        for &(alpha, b22, b32) in &[(0.54, -6.1, -2.75034), (0.56, 0.417, 1.3), (1.2, 2.0, -0.4)] {
            let m = derive_msrktase3(alpha, b22, b32, 0.5, 0.75).unwrap();
            let a0 = -(-3.0 + b22) * (-3.0 + b32) * (33.0 + 3.0 * b22 + 4.0 * b32);
            let a1 = -6.0 * (-45.0 + 12.0 * b22 + b22 * b22);
            let closed = (a0 + a1 * alpha - 288.0 * alpha * alpha + 96.0 * alpha.powi(3))
                / (96.0 * alpha.powi(3));
            assert!((r_infinity(&to_wmethod(&m)) - closed).abs() < 1e-11);
        }
    }

    #[test]
    fn ms2_residuals() {
        let wt = w("MSRKTASE2");
        let res = order_residuals_w(&wt, 3);
        assert!(max_abs(&res[..3]) < 1e-12);
        let g2 = res.iter().find(|r| r.name == "b^T G^2 1").unwrap();
        assert!(g2.value.abs() > 1e-3);
        let ros = order_residuals_rosenbrock(&wt, 2);
        assert!(max_abs(&ros) < 1e-12);
    }

    #[test]
    fn ms3a_extra_vanishing_quantities() {
        let wt = w("MSRKTASE3a");
        assert!(max_abs(&order_residuals_w(&wt, 3)) < 1e-11);
        let res = order_residuals_w(&wt, 4);
        for name in [
            "b^T A G A 1",
            "b^T A^2 G 1",
            "b^T G A^2 1",
            "b^T G A G 1",
            "b^T G c^2",
            "b^T (A G 1 . c)",
        ] {
            let r = res.iter().find(|r| r.name == name).unwrap();
            assert!(r.value.abs() < 1e-11, "{name} = {}", r.value);
        }
    }

    #[test]
    fn ms3b_d41_vanishes() {
        let ros = order_residuals_rosenbrock(&w("MSRKTASE3b"), 4);
        let d41 = ros.iter().find(|r| r.name == "b^T (G+A)^3 1 - 1/24").unwrap();
        assert!(d41.value.abs() < 1e-10);
    }

    #[test]
    fn every_catalog_method_passes_its_order() {
        for m in catalog() {
            let wt = to_wmethod(m);
            assert!(verify_order(&wt, m.declared_order).is_ok(), "{}", m.name);
            let ros = order_residuals_rosenbrock(&wt, m.declared_order);
            assert!(max_abs(&ros) < 1e-10, "{}", m.name);
        }
    }

    #[test]
    fn error_norms_need_verified_order() {
        let wt = w("MSRKTASE2");
        assert!(matches!(error_norm_c(&wt, 3), Err(Error::OrderNotVerified { .. })));
        assert!(error_norm_c(&wt, 4).is_err());
    }

    // Values below were computed with an independent NumPy evaluation of the
    // same block tableaux and frozen here.
    #[test]
    fn error_norm_values() {
        let c = |n: &str, p| error_norm_c(&w(n), p).unwrap();
        let d = |n: &str, p| error_norm_d(&w(n), p).unwrap();
        assert!((c("SRKTASE2", 2) - 4.003_470_716_488_104_5).abs() < 1e-12);
        assert!((d("SRKTASE2", 2) - 25.0 / 6.0).abs() < 1e-12);
        assert!((c("MSRKTASE2", 2) - 0.329_765_888_853_095_2).abs() < 1e-12);
        assert!((d("MSRKTASE2", 2) - 0.101_159_545_110_379_76).abs() < 1e-12);
        assert!((c("SRKTASE3", 3) - 6.717_164_996_171_816_5).abs() < 1e-10);
        assert!((d("SRKTASE3", 3) - 6.675_369_104_411_120_5).abs() < 1e-10);
        assert!((c("MSRKTASE3a", 3) - 0.181_705_155_189_047_28).abs() < 1e-10);
        assert!((d("MSRKTASE3a", 3) - 0.228_818_679_568_062_18).abs() < 1e-10);
        assert!((c("MSRKTASE3b", 3) - 0.396_848_849_317_664_73).abs() < 1e-9);
        assert!((d("MSRKTASE3b", 3) - 1.0 / 288.0).abs() < 1e-12);
    }

    #[test]
    fn c4_components_match_closed_forms() {
        for &(alpha, b22, b32, c2, c3) in &[
            (0.54, -6.1, -2.75034, 0.5, 0.75),
            (0.8, 1.5, -0.25, 0.3, 0.9),
        ] {
            let m = derive_msrktase3(alpha, b22, b32, c2, c3).unwrap();
            let cs = error_coefficients_c(&to_wmethod(&m), 3).unwrap();
            let k = 2.0 - 3.0 * c3 + c2 * (-3.0 + 6.0 * c3);
            let c45 = alpha * alpha
                * (-2.0 * b22 + 6.0 * c3 * (3.0 + b22) - 3.0 * c3 * c3 * (3.0 + b22)
                    + 2.0 * b32
                    + 9.0 * c2 * c2 * (3.0 + b32)
                    - 3.0 * c2 * (6.0 - b22 + 2.0 * c3 * (3.0 + b22) + 3.0 * b32))
                / (12.0 * (c2 - c3) * k);
            let c46 = alpha * alpha
                * (-2.0 * b22 + 3.0 * c3 * (3.0 + b22) + 2.0 * b32 - 3.0 * c2 * (3.0 + b32))
                / (12.0 * (c2 - c3));
            let want = [
                -1.0 / 24.0,
                (4.0 * c3 - 3.0) / 72.0,
                (2.0 * c2 - 1.0) / 24.0,
                (2.0 * (c2 * (2.0 - 3.0 * c3) + 2.0 * c3) - 3.0) / 72.0,
                c45,
                c46,
                alpha.powi(3),
            ];
            for (k, (got, want)) in cs.iter().zip(want).enumerate() {
                assert!((got - want).abs() < 1e-12, "C4{} got {got} want {want}", k + 1);
            }
        }
    }

    #[test]
    fn sqrt145_over_288() {
        let m = derive_msrktase3(0.54, -6.1, -2.75034, 0.5, 0.75).unwrap();
        let cs = error_coefficients_c(&to_wmethod(&m), 3).unwrap();
        assert!((norm(&cs[..4]) - 145f64.sqrt() / 288.0).abs() < 1e-15);
    }

    #[test]
    fn angles_of_catalog_methods() {
        let ang = |n: &str| stability_angle(&w(n), 0.5, 2000);
        assert_eq!(ang("MSRKTASE2"), 90.0);
        assert!((ang("SRKTASE3") - 88.99).abs() < 0.05);
        assert!((ang("MSRKTASE3b") - 50.38).abs() < 0.05);
        // full radial range; the bound is set by a bump near |z| ~ 5
        assert!((ang("MSRKTASE3a") - 80.81).abs() < 0.05);
        // restricted to the unit disc the same method reaches 88.23
        let near = stability_angle_in(
            &w("MSRKTASE3a"),
            &AngleScan {
                radius_max: 1.0,
                ..AngleScan::default()
            },
        );
        assert!((near - 88.23).abs() < 0.05);
    }

    #[test]
    fn boundary_of_a_stable_method_stays_out_of_left_half_plane() {
        let pts = stability_boundary(&w("MSRKTASE2"), 64);
        for p in &pts {
            assert!(p.re >= -1e-8 * (p.re.hypot(p.im)), "{p:?}");
        }
        for p in stability_boundary(&w("MSRKTASE3b"), 181) {
            assert!((p.abs_r - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn boundary_of_3b_crosses_between_its_angle_and_ninety() {
        let pts = stability_boundary(&w("MSRKTASE3b"), 181);
        // arg(-z) for a point on ray phi is |180 - phi|
        assert!(pts.iter().any(|p| {
            let a = (180.0 - p.ray_deg).abs();
            a > 50.38 && a < 90.0
        }));
        assert!(pts.iter().all(|p| (180.0 - p.ray_deg).abs() > 50.0));
        let csv = boundary_csv(&pts);
        assert!(csv.starts_with("re,im,abs_R\n"));
        assert_eq!(csv.lines().count(), pts.len() + 1);
    }

    #[test]
    fn residuals_to_json() {
        let v = residuals_json(&order_residuals_w(&w("MSRKTASE2"), 2));
        assert_eq!(v.as_object().unwrap().len(), 3);
        assert!(v["b^T G 1"].as_f64().unwrap().abs() < 1e-12);
    }

    #[test]
    fn new_rejects_non_triangular() {
        let mut a = RealMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        assert!(WTableau::new(a, RealMatrix::zeros(2, 2), vec![0.5, 0.5], 1.0).is_err());
    }

    #[test]
    fn ms2_at_alpha_window_edges_is_a_stable() {
        for alpha in [0.32, 1.0, 3.0] {
            let wt = to_wmethod(&derive_msrktase2(alpha).unwrap());
            assert_eq!(stability_angle(&wt, 1.0, 800), 90.0, "alpha {alpha}");
        }
    }
}
