//! TASE operators: general (distinct shifts), singly (one shift, powers of the
//! resolvent) and the per-stage modified singly family.
//!
//! Stage indices in this module are zero-based.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{axpy, LuFactorization, RealMatrix, Lu};

/// `binom(n, k)` as a float; exact for the small arguments used here.
pub(crate) fn binom(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// `T = sum_j beta_j (I - alpha_j h W)^{-1}` with pairwise distinct shifts.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneralTase {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
}

impl GeneralTase {
    pub fn new(alphas: Vec<f64>) -> Result<Self> {
        let betas = general_tase_betas(alphas.len(), &alphas)?;
        Ok(Self { alphas, betas })
    }

    pub fn order(&self) -> usize {
        self.alphas.len()
    }

    /// One factorization per shift.
    pub fn apply(&self, h: f64, w: &RealMatrix, v: &[f64]) -> Result<Vec<f64>> {
        let mut out = vec![0.0; v.len()];
        for (&a, &b) in self.alphas.iter().zip(&self.betas) {
            let lu = Lu::factor(&w.identity_minus_scaled(h * a))?;
            axpy(b, &lu.solve(v)?, &mut out);
        }
        Ok(out)
    }

    /// Scalar symbol `sum_j beta_j / (1 - alpha_j x)`.
    pub fn scalar_symbol(&self, x: f64) -> f64 {
        self.alphas
            .iter()
            .zip(&self.betas)
            .map(|(&a, &b)| b / (1.0 - a * x))
            .sum()
    }
}

/// Solves the Vandermonde system `sum_j beta_j alpha_j^k = [k == 0]`,
/// `k = 0..p-1`.
pub fn general_tase_betas(p: usize, alphas: &[f64]) -> Result<Vec<f64>> {
    if p == 0 || alphas.len() != p {
        return Err(Error::InvalidArgument(format!(
            "need p >= 1 shifts, got p = {p} with {} alphas",
            alphas.len()
        )));
    }
    if alphas.iter().any(|&a| !(a > 0.0)) {
        return Err(Error::InvalidArgument("alphas must be positive".into()));
    }
    for (i, a) in alphas.iter().enumerate() {
        if alphas[..i].contains(a) {
            return Err(Error::InvalidArgument(format!("repeated alpha {a}")));
        }
    }
    let v = RealMatrix::from_fn(p, p, |k, j| alphas[j].powi(k as i32));
    let mut rhs = vec![0.0; p];
    rhs[0] = 1.0;
    let betas = match Lu::factor(&v) {
        Ok(lu) => lu.solve(&rhs)?,
        Err(Error::SingularMatrix { .. }) => {
            return Err(Error::IllConditioned {
                residual: f64::INFINITY,
            })
        }
        Err(e) => return Err(e),
    };
    let residual = v
        .matvec(&betas)
        .iter()
        .zip(&rhs)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if residual > 1e-10 {
        return Err(Error::IllConditioned { residual });
    }
    Ok(betas)
}

/// Weights of the singly operator `sum_j beta_j (I - alpha h W)^{-j}` of order `p`.
///
/// The conditions `sum_j beta_j binom(j+k-1, k) = [k == 0]` do not involve
/// alpha; their solution is `beta_j = (-1)^(j+1) binom(p, j)`.
pub fn singly_tase_betas(p: usize, alpha: f64) -> Result<Vec<f64>> {
    if p == 0 {
        return Err(Error::InvalidArgument("order must be at least 1".into()));
    }
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
    }
    Ok((1..=p)
        .map(|j| if j % 2 == 1 { 1.0 } else { -1.0 } * binom(p, j))
        .collect())
}

/// Per-stage operator weights `beta[i][j]` sharing one shift `alpha` and
/// depth `r`.
#[derive(Clone, Debug, PartialEq)]
pub struct StageOperatorSet {
    alpha: f64,
    beta: Vec<Vec<f64>>,
}

impl StageOperatorSet {
    /// Rows must share a common length `r >= 1` and each sum to one.
    pub fn new(alpha: f64, beta: Vec<Vec<f64>>) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return Err(Error::InvalidArgument(format!("alpha must be positive, got {alpha}")));
        }
        let r = beta.first().map_or(0, Vec::len);
        if beta.is_empty() || r == 0 || beta.iter().any(|row| row.len() != r) {
            return Err(Error::InvalidArgument(
                "beta must be a non-empty s x r matrix with r >= 1".into(),
            ));
        }
        for (i, row) in beta.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            let scale = row.iter().fold(1.0f64, |m, b| m.max(b.abs()));
            if (sum - 1.0).abs() > 1e-12 * scale {
                return Err(Error::InvalidArgument(format!(
                    "row {i} of beta sums to {sum}, expected 1"
                )));
            }
        }
        Ok(Self { alpha, beta })
    }

    /// Every stage uses the same row (the plain singly family).
    pub fn uniform(alpha: f64, s: usize, row: Vec<f64>) -> Result<Self> {
        Self::new(alpha, vec![row; s])
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn depth(&self) -> usize {
        self.beta[0].len()
    }

    pub fn stages(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self) -> &[Vec<f64>] {
        &self.beta
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.beta[i]
    }

    pub fn is_singly(&self) -> bool {
        self.beta.iter().all(|row| row == &self.beta[0])
    }

    /// `sum_j beta_ij (1 - alpha z)^{-j}`: the operator acting on an
    /// eigenvector of `hW` with eigenvalue `z`.
    pub fn scalar_symbol(&self, i: usize, z: Complex64) -> Complex64 {
        let resolvent = Complex64::new(1.0, 0.0) / (Complex64::new(1.0, 0.0) - self.alpha * z);
        let mut power = resolvent;
        let mut acc = Complex64::new(0.0, 0.0);
        for &b in &self.beta[i] {
            acc += b * power;
            power *= resolvent;
        }
        acc
    }
}

/// `T_i v = sum_j beta_ij (I - h alpha W)^{-j} v` by `r` chained solves
/// against `lu`, which must factor `I - h alpha W`.
pub fn apply_stage_operator(
    ops: &StageOperatorSet,
    i: usize,
    lu: &LuFactorization,
    v: &[f64],
) -> Result<Vec<f64>> {
    let mut out = vec![0.0; v.len()];
    let mut scratch = vec![0.0; v.len()];
    apply_stage_operator_into(ops, i, lu, v, &mut out, &mut scratch)?;
    Ok(out)
}

pub(crate) fn apply_stage_operator_into(
    ops: &StageOperatorSet,
    i: usize,
    lu: &LuFactorization,
    v: &[f64],
    out: &mut [f64],
    scratch: &mut [f64],
) -> Result<()> {
    if i >= ops.stages() {
        return Err(Error::InvalidArgument(format!(
            "stage {i} out of range for {} stages",
            ops.stages()
        )));
    }
    let d = lu.dimension();
    for len in [v.len(), out.len(), scratch.len()] {
        if len != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: len,
            });
        }
    }
    out.fill(0.0);
    let mut w = v.to_vec();
    for &b in ops.row(i) {
        lu.solve_into(&w, scratch)?;
        w.copy_from_slice(scratch);
        axpy(b, &w, out);
    }
    Ok(())
}

/// Largest `|sum_j beta_ij binom(j+k-1, k) alpha^k|` over `k = 1..q-1`.
///
/// Zero means `T_i = I + O(h^q)`.
pub fn tase_order_defect(ops: &StageOperatorSet, i: usize, q: usize) -> f64 {
    let row = ops.row(i);
    (1..q)
        .map(|k| {
            let s: f64 = row
                .iter()
                .enumerate()
                .map(|(jm1, &b)| b * binom(jm1 + k, k))
                .sum();
            (s * ops.alpha.powi(k as i32)).abs()
        })
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::lu_factor;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    /// Truncated Taylor series of `sum_j beta_j (1 - alpha x)^{-j}` computed
    /// term by term from the geometric series, independent of the weights'
    /// derivation.
    fn singly_series(betas: &[f64], alpha: f64, x: f64, terms: usize) -> f64 {
        betas
            .iter()
            .enumerate()
            .map(|(jm1, &b)| {
                let j = jm1 + 1;
                let mut sum = 0.0;
                for k in 0..terms {
                    sum += binom(j + k - 1, k) * (alpha * x).powi(k as i32);
                }
                b * sum
            })
            .sum()
    }

    #[test]
    fn general_betas_small_orders() {
        assert_eq!(general_tase_betas(1, &[1.0]).unwrap(), vec![1.0]);
        let b = general_tase_betas(2, &[1.0, 2.0]).unwrap();
        assert!((b[0] - 2.0).abs() < 1e-14 && (b[1] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn general_betas_order_three_series_oracle() {
        let t = GeneralTase::new(vec![1.0, 2.0, 3.0]).unwrap();
        // defect of 1 + O(x^3): remaining error ~ x^3
        let x = 1e-3;
        let defect = (t.scalar_symbol(x) - 1.0).abs();
        assert!(defect < 10.0 * x.powi(3), "defect {defect}");
        // and genuinely third order, not better
        assert!(defect > 0.1 * x.powi(3));
    }

    #[test]
    fn general_betas_reject_bad_input() {
        assert!(general_tase_betas(2, &[1.0, 1.0]).is_err());
        assert!(general_tase_betas(1, &[-1.0]).is_err());
        assert!(general_tase_betas(0, &[]).is_err());
    }

    #[test]
    fn singly_betas_closed_form() {
        assert_eq!(singly_tase_betas(1, 1.0).unwrap(), vec![1.0]);
        assert_eq!(singly_tase_betas(2, 0.5).unwrap(), vec![2.0, -1.0]);
        assert_eq!(singly_tase_betas(3, 1.8868).unwrap(), vec![3.0, -3.0, 1.0]);
        assert!(singly_tase_betas(2, 0.0).is_err());
    }

    #[test]
    fn singly_betas_solve_binomial_system() {
        for p in 1..=6 {
            let b = singly_tase_betas(p, 1.0).unwrap();
            let m = RealMatrix::from_fn(p, p, |k, jm1| binom(jm1 + k, k));
            let lhs = m.matvec(&b);
            for (k, v) in lhs.iter().enumerate() {
                let want = if k == 0 { 1.0 } else { 0.0 };
                assert!((v - want).abs() < 1e-12, "p={p} k={k} got {v}");
            }
        }
    }

    #[test]
    fn singly_betas_series_oracle() {
        for p in 1..=4 {
            let b = singly_tase_betas(p, 0.7).unwrap();
            let x = 1e-3;
            let exact = singly_series(&b, 0.7, x, 40);
            assert!((exact - 1.0).abs() < 10.0 * x.powi(p as i32));
        }
    }

    #[test]
    fn stage_operator_set_validation() {
        assert!(StageOperatorSet::new(1.0, vec![vec![0.5, 0.4]]).is_err());
        assert!(StageOperatorSet::new(0.0, vec![vec![1.0]]).is_err());
        assert!(StageOperatorSet::new(1.0, vec![vec![1.0], vec![0.5, 0.5]]).is_err());
        assert!(StageOperatorSet::new(1.0, vec![]).is_err());
        let ops = StageOperatorSet::new(1.0, vec![vec![2.0, -1.0], vec![0.5, 0.5]]).unwrap();
        assert_eq!((ops.stages(), ops.depth()), (2, 2));
        assert!(!ops.is_singly());
    }

    #[test]
    fn zero_w_gives_identity_operator() {
        let ops = StageOperatorSet::new(0.8, vec![vec![3.0, -3.0, 1.0], vec![1.5, -2.0, 1.5]])
            .unwrap();
        let lu = lu_factor(&RealMatrix::zeros(3, 3).identity_minus_scaled(0.1)).unwrap();
        let v = [1.0, -2.0, 0.25];
        for i in 0..2 {
            let out = apply_stage_operator(&ops, i, &lu, &v).unwrap();
            for (a, b) in out.iter().zip(&v) {
                assert!((a - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn scalar_closed_form() {
        let (h, alpha, lambda) = (0.1, 0.54, -7.0);
        let ops = StageOperatorSet::new(alpha, vec![vec![0.92466, 1.15068, -1.07534]]).unwrap();
        let w = RealMatrix::from_rows(&[vec![lambda]]);
        let lu = lu_factor(&w.identity_minus_scaled(h * alpha)).unwrap();
        let got = apply_stage_operator(&ops, 0, &lu, &[2.0]).unwrap()[0];
        let q = 1.0 / (1.0 - h * alpha * lambda);
        let want = 2.0 * (0.92466 * q + 1.15068 * q * q - 1.07534 * q * q * q);
        assert!((got - want).abs() < 1e-14);
    }

    #[test]
    fn depth_one_is_a_single_solve() {
        let ops = StageOperatorSet::new(0.3, vec![vec![1.0]]).unwrap();
        let w = RealMatrix::from_rows(&[vec![-2.0, 1.0], vec![0.5, -3.0]]);
        let lu = lu_factor(&w.identity_minus_scaled(0.3 * 0.2)).unwrap();
        let v = [1.0, 2.0];
        assert_eq!(apply_stage_operator(&ops, 0, &lu, &v).unwrap(), lu.solve(&v).unwrap());
    }

    #[test]
    fn apply_errors() {
        let ops = StageOperatorSet::new(1.0, vec![vec![1.0]]).unwrap();
        let lu = lu_factor(&RealMatrix::identity(2)).unwrap();
        assert!(matches!(
            apply_stage_operator(&ops, 0, &lu, &[1.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(apply_stage_operator(&ops, 1, &lu, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn order_defect_examples() {
        for p in 1..=4 {
            let ops = StageOperatorSet::uniform(0.9, 2, singly_tase_betas(p, 0.9).unwrap()).unwrap();
            assert!(tase_order_defect(&ops, 1, p) < 1e-12);
        }
        let ops = StageOperatorSet::new(1.0, vec![vec![1.0, 0.0, 0.0]]).unwrap();
        assert!((tase_order_defect(&ops, 0, 2) - 1.0).abs() < 1e-15);
        let ops = StageOperatorSet::new(2.5, vec![vec![4.0, -3.0]]).unwrap();
        assert_eq!(tase_order_defect(&ops, 0, 1), 0.0);
    }

    #[test]
    fn diagonal_w_matches_scalar_symbol_entrywise() {
        let mut rng = StdRng::seed_from_u64(5);
        let ops = StageOperatorSet::new(0.56, vec![vec![0.3, 1.2, -0.5], vec![3.0, -3.0, 1.0]])
            .unwrap();
        let h = 0.05;
        let diag: Vec<f64> = (0..6).map(|_| rng.gen_range(-200.0..0.0)).collect();
        let w = RealMatrix::from_fn(6, 6, |i, j| if i == j { diag[i] } else { 0.0 });
        let lu = lu_factor(&w.identity_minus_scaled(h * ops.alpha())).unwrap();
        let v: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for i in 0..2 {
            let out = apply_stage_operator(&ops, i, &lu, &v).unwrap();
            for k in 0..6 {
                let want = ops.scalar_symbol(i, Complex64::new(h * diag[k], 0.0)).re * v[k];
                assert!((out[k] - want).abs() <= 1e-12 * (1.0 + want.abs()));
            }
        }
    }

    #[test]
    fn uniform_rows_reproduce_singly_operator() {
        let mut rng = StdRng::seed_from_u64(9);
        let alpha = 1.8868;
        let row = singly_tase_betas(3, alpha).unwrap();
        let ops = StageOperatorSet::uniform(alpha, 3, row.clone()).unwrap();
        assert!(ops.is_singly());
        let w = RealMatrix::from_fn(4, 4, |i, j| {
            if i == j {
                -10.0
            } else {
                rng.gen_range(-1.0..1.0)
            }
        });
        let h = 0.02;
        let m = w.identity_minus_scaled(h * alpha);
        let lu = lu_factor(&m).unwrap();
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        // independent route: fresh factorization per power
        let mut want = vec![0.0; 4];
        let mut w_j = v.clone();
        for &b in &row {
            w_j = lu_factor(&m).unwrap().solve(&w_j).unwrap();
            axpy(b, &w_j, &mut want);
        }
        for i in 0..3 {
            let got = apply_stage_operator(&ops, i, &lu, &v).unwrap();
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn operator_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
                let mut rng = StdRng::seed_from_u64(seed);
                let ops = StageOperatorSet::new(0.32, vec![vec![0.4259, 0.5741]]).unwrap();
                let w = RealMatrix::from_fn(5, 5, |i, j| if i == j { -5.0 } else { rng.gen_range(-1.0..1.0) });
                let lu = lu_factor(&w.identity_minus_scaled(0.1 * 0.32)).unwrap();
                let v: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let u: Vec<f64> = (0..5).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let comb: Vec<f64> = v.iter().zip(&u).map(|(x, y)| a * x + b * y).collect();
                let lhs = apply_stage_operator(&ops, 0, &lu, &comb).unwrap();
                let tv = apply_stage_operator(&ops, 0, &lu, &v).unwrap();
                let tu = apply_stage_operator(&ops, 0, &lu, &u).unwrap();
                let scale = 1.0 + lhs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                for k in 0..5 {
                    prop_assert!((lhs[k] - (a * tv[k] + b * tu[k])).abs() <= 1e-12 * scale);
                }
            }
        }
    }
}
