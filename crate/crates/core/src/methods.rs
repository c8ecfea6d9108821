//! Explicit Runge-Kutta tableaux, the modified singly-TASE method type, the
//! closed-form coefficient derivations for orders two and three, and the
//! method catalog.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::analysis::{stability_angle_in, to_wmethod, AngleScan};
use crate::error::{Error, Result};
use crate::tase::{singly_tase_betas, StageOperatorSet};

/// Explicit Runge-Kutta coefficients. `a` is strictly lower triangular and
/// `c` is always recomputed from its row sums.
#[derive(Clone, Debug, PartialEq)]
pub struct RkTableau {
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    c: Vec<f64>,
}

impl RkTableau {
    pub fn new(a: Vec<Vec<f64>>, b: Vec<f64>) -> Result<Self> {
        let s = b.len();
        if s == 0 || a.len() != s || a.iter().any(|row| row.len() != s) {
            return Err(Error::InvalidArgument(format!(
                "tableau needs an s x s matrix and s weights (s = {s})"
            )));
        }
        for (i, row) in a.iter().enumerate() {
            if row[i..].iter().any(|&x| x != 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "row {i} of A is not strictly lower triangular"
                )));
            }
        }
        let c = a.iter().map(|row| row.iter().sum()).collect();
        Ok(Self { a, b, c })
    }

    pub fn stages(&self) -> usize {
        self.b.len()
    }

    pub fn a(&self) -> &[Vec<f64>] {
        &self.a
    }

    pub fn b(&self) -> &[f64] {
        &self.b
    }

    pub fn c(&self) -> &[f64] {
        &self.c
    }
}

/// Two-stage order-two tableau with `c2 = 2/3`, the node that also zeroes the
/// `b^T c^2 = 1/3` order-three residual.
pub fn rk2_tableau() -> RkTableau {
    let c2 = 2.0 / 3.0;
    let b2 = 1.0 / (2.0 * c2);
    RkTableau::new(vec![vec![0.0, 0.0], vec![c2, 0.0]], vec![1.0 - b2, b2])
        .expect("static tableau")
}

/// The two-parameter family of three-stage order-three explicit schemes.
pub fn rk3_tableau(c2: f64, c3: f64) -> Result<RkTableau> {
    if c2 == c3 || c2 == 0.0 || c3 == 0.0 || (3.0 * c2 - 2.0).abs() < 1e-14 {
        return Err(Error::DegenerateFamily(format!(
            "rk3 family needs c2 != c3, c2 not in {{0, 2/3}}, c3 != 0 (c2 = {c2}, c3 = {c3})"
        )));
    }
    let a32 = c3 * (c2 - c3) / (c2 * (3.0 * c2 - 2.0));
    let a31 = c3 - a32;
    let b2 = (2.0 - 3.0 * c3) / (6.0 * c2 * (c2 - c3));
    let b3 = (2.0 - 3.0 * c2) / (6.0 * c3 * (c3 - c2));
    let b1 = 1.0 - b2 - b3;
    RkTableau::new(
        vec![
            vec![0.0, 0.0, 0.0],
            vec![c2, 0.0, 0.0],
            vec![a31, a32, 0.0],
        ],
        vec![b1, b2, b3],
    )
}

/// An explicit tableau paired with per-stage TASE operators.
#[derive(Clone, Debug, PartialEq)]
pub struct MsrktaseMethod {
    pub name: String,
    pub tableau: RkTableau,
    pub operators: StageOperatorSet,
    pub declared_order: usize,
}

impl MsrktaseMethod {
    pub fn new(
        name: impl Into<String>,
        tableau: RkTableau,
        operators: StageOperatorSet,
        declared_order: usize,
    ) -> Result<Self> {
        if operators.stages() != tableau.stages() {
            return Err(Error::InvalidArgument(format!(
                "operator set has {} stages, tableau has {}",
                operators.stages(),
                tableau.stages()
            )));
        }
        if declared_order == 0 {
            return Err(Error::InvalidArgument("declared order must be >= 1".into()));
        }
        Ok(Self {
            name: name.into(),
            tableau,
            operators,
            declared_order,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.operators.alpha()
    }

    pub fn stages(&self) -> usize {
        self.tableau.stages()
    }

    pub fn depth(&self) -> usize {
        self.operators.depth()
    }

    pub fn to_card(&self) -> MethodCard {
        MethodCard::from_method(self)
    }
}

/// Interval of alpha for which the order-two family is A-stable.
pub const MSRKTASE2_A_STABLE_WINDOW: (f64, f64) = (0.3117, 3.257);

pub fn msrktase2_in_window(alpha: f64) -> bool {
    (MSRKTASE2_A_STABLE_WINDOW.0..=MSRKTASE2_A_STABLE_WINDOW.1).contains(&alpha)
}

/// `beta12` root of the order-two `R(inf) = 0` quadratic
/// `beta12^2 + 6 beta12 - 7 + 12 alpha - 6 alpha^2 = 0`.
pub fn msrktase2_beta12(alpha: f64) -> Result<f64> {
    let disc = 16.0 - 12.0 * alpha + 6.0 * alpha * alpha;
    if disc < 0.0 {
        return Err(Error::NegativeDiscriminant(disc));
    }
    Ok(-3.0 + disc.sqrt())
}

/// Order-two, depth-two method with `b^T G 1 = 0` and `R(inf) = 0`.
///
/// Alphas outside [`MSRKTASE2_A_STABLE_WINDOW`] are accepted; callers that
/// care should check [`msrktase2_in_window`].
pub fn derive_msrktase2(alpha: f64) -> Result<MsrktaseMethod> {
    let b12 = msrktase2_beta12(alpha)?;
    let b22 = -(4.0 + b12) / 3.0;
    let ops = StageOperatorSet::new(alpha, vec![vec![1.0 - b12, b12], vec![1.0 - b22, b22]])?;
    MsrktaseMethod::new("MSRKTASE2", rk2_tableau(), ops, 2)
}

/// Order-three, depth-three method. The remaining weights come from the four
/// Gamma-dependent order-three conditions, solved in closed form.
pub fn derive_msrktase3(
    alpha: f64,
    beta22: f64,
    beta32: f64,
    c2: f64,
    c3: f64,
) -> Result<MsrktaseMethod> {
    let tableau = rk3_tableau(c2, c3)?;
    let k = 2.0 - 3.0 * c3 + c2 * (-3.0 + 6.0 * c3);
    let den = (c2 - c3) * k;
    if k.abs() < 1e-14 {
        return Err(Error::DegenerateFamily(format!(
            "2 - 3 c3 + c2 (6 c3 - 3) vanishes at c2 = {c2}, c3 = {c3}"
        )));
    }
    let b12 = (c3 * (-2.0 + 3.0 * c3) * beta22 - 3.0 * c2 * c2 * (6.0 * c3 + beta32)
        + 2.0 * c2 * (9.0 * c3 * c3 + beta32))
        / den;
    let b13 = -(c3 * (-2.0 + 3.0 * c3) * (1.0 + beta22)
        - 3.0 * c2 * c2 * (1.0 + 4.0 * c3 + beta32)
        + 2.0 * c2 * (1.0 + 6.0 * c3 * c3 + beta32))
        / (2.0 * den);
    let b23 = (-1.0 - beta22) / 2.0;
    let b33 = (-1.0 - beta32) / 2.0;
    let beta = vec![
        vec![1.0 - b12 - b13, b12, b13],
        vec![1.0 - beta22 - b23, beta22, b23],
        vec![1.0 - beta32 - b33, beta32, b33],
    ];
    let ops = StageOperatorSet::new(alpha, beta)?;
    MsrktaseMethod::new("MSRKTASE3", tableau, ops, 3)
}

/// Real roots (ascending) of `a0 + a1 alpha - 288 alpha^2 + 96 alpha^3 = 0`
/// in `beta32`, i.e. the choices making `R(inf) = 0` for the order-three
/// family at `c2 = 1/2, c3 = 3/4`.
pub fn solve_beta32_linfinity(alpha: f64, beta22: f64) -> Result<[f64; 2]> {
    if alpha == 0.0 {
        return Err(Error::InvalidArgument("alpha must be nonzero".into()));
    }
    // a0 = (3 - beta22) (beta32 - 3) (4 beta32 + q), q = 33 + 3 beta22
    let k = 3.0 - beta22;
    let q = 33.0 + 3.0 * beta22;
    let a1 = -6.0 * (-45.0 + 12.0 * beta22 + beta22 * beta22);
    let rest = a1 * alpha - 288.0 * alpha * alpha + 96.0 * alpha.powi(3);
    let qa = 4.0 * k;
    let qb = k * (q - 12.0);
    let qc = -3.0 * k * q + rest;
    if qa == 0.0 {
        return Err(Error::NoRealRoot {
            alpha,
            beta22,
            discriminant: f64::NAN,
        });
    }
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(Error::NoRealRoot {
            alpha,
            beta22,
            discriminant: disc,
        });
    }
    // cancellation-free quadratic formula
    let sq = disc.sqrt();
    let t = -0.5 * (qb + qb.signum() * sq);
    let (r1, r2) = if t == 0.0 {
        (0.0, 0.0)
    } else {
        (t / qa, qc / t)
    };
    Ok(if r1 <= r2 { [r1, r2] } else { [r2, r1] })
}

/// `beta22` for which `b^T (G + A)^3 1 = 1/24` in the order-three family.
pub fn beta22_vanishing_d41(alpha: f64) -> f64 {
    -3.0 - 1.0 / (3.0 * alpha * alpha) + 8.0 * alpha
}

/// Cheap scan used only to rank the two `R(inf) = 0` roots.
fn selection_scan() -> AngleScan {
    AngleScan {
        resolution_deg: 1.0,
        radial_samples: 600,
        ..AngleScan::default()
    }
}

/// Picks the `R(inf) = 0` root of `beta32` with the larger stability angle,
/// ties going to the smaller magnitude.
pub fn select_beta32_by_angle(alpha: f64, beta22: f64) -> Result<(f64, f64)> {
    let roots = solve_beta32_linfinity(alpha, beta22)?;
    let scan = selection_scan();
    let mut best: Option<(f64, f64)> = None;
    for root in roots {
        let m = derive_msrktase3(alpha, beta22, root, 0.5, 0.75)?;
        let theta = stability_angle_in(&to_wmethod(&m), &scan);
        best = match best {
            None => Some((root, theta)),
            Some((b, bt)) => {
                if theta > bt + 1e-9 || ((theta - bt).abs() <= 1e-9 && root.abs() < b.abs()) {
                    Some((root, theta))
                } else {
                    Some((b, bt))
                }
            }
        };
    }
    Ok(best.expect("two roots"))
}

fn named(mut m: MsrktaseMethod, name: &str) -> MsrktaseMethod {
    m.name = name.to_string();
    m
}

fn build_catalog() -> Vec<MsrktaseMethod> {
    let srk2 = MsrktaseMethod::new(
        "SRKTASE2",
        rk2_tableau(),
        StageOperatorSet::uniform(2.0, 2, singly_tase_betas(2, 2.0).expect("p=2"))
            .expect("valid rows"),
        2,
    )
    .expect("SRKTASE2");
    let ms2 = named(derive_msrktase2(0.32).expect("MSRKTASE2"), "MSRKTASE2");
    let srk3 = MsrktaseMethod::new(
        "SRKTASE3",
        rk3_tableau(0.5, 0.75).expect("rk3"),
        StageOperatorSet::uniform(1.8868, 3, singly_tase_betas(3, 1.8868).expect("p=3"))
            .expect("valid rows"),
        3,
    )
    .expect("SRKTASE3");
    // -2.75034 is the rounded root; use the root itself so R(inf) vanishes
    let b32a = nearest_root(solve_beta32_linfinity(0.54, -6.1).expect("3a root"), -2.75034);
    let ms3a = named(
        derive_msrktase3(0.54, -6.1, b32a, 0.5, 0.75).expect("MSRKTASE3a"),
        "MSRKTASE3a",
    );
    let alpha_b = 0.56;
    let b22 = beta22_vanishing_d41(alpha_b);
    let (b32, _) = select_beta32_by_angle(alpha_b, b22).expect("3b root");
    let ms3b = named(
        derive_msrktase3(alpha_b, b22, b32, 0.5, 0.75).expect("MSRKTASE3b"),
        "MSRKTASE3b",
    );
    vec![srk2, ms2, srk3, ms3a, ms3b]
}

fn nearest_root(roots: [f64; 2], target: f64) -> f64 {
    if (roots[0] - target).abs() <= (roots[1] - target).abs() {
        roots[0]
    } else {
        roots[1]
    }
}

/// SRKTASE2, MSRKTASE2, SRKTASE3, MSRKTASE3a, MSRKTASE3b.
pub fn catalog() -> &'static [MsrktaseMethod] {
    static CATALOG: OnceLock<Vec<MsrktaseMethod>> = OnceLock::new();
    CATALOG.get_or_init(build_catalog)
}

pub fn find_method(name: &str) -> Result<&'static MsrktaseMethod> {
    catalog()
        .iter()
        .find(|m| m.name.eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::UnknownMethod(name.to_string()))
}

/// JSON-friendly method description. Numbers are decimal strings with 17
/// significant digits so a card reproduces the method bit for bit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub struct MethodCard {
    pub name: String,
    pub s: usize,
    pub r: usize,
    pub alpha: String,
    #[serde(rename = "A")]
    pub a: Vec<Vec<String>>,
    pub b: Vec<String>,
    pub c: Vec<String>,
    pub beta: Vec<Vec<String>>,
    pub declared_order: usize,
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse(field: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidArgument(format!("cannot parse {field} entry {s:?}")))
}

impl MethodCard {
    pub fn from_method(m: &MsrktaseMethod) -> Self {
        let row = |v: &[f64]| v.iter().copied().map(fmt17).collect::<Vec<_>>();
        Self {
            name: m.name.clone(),
            s: m.stages(),
            r: m.depth(),
            alpha: fmt17(m.alpha()),
            a: m.tableau.a().iter().map(|r| row(r)).collect(),
            b: row(m.tableau.b()),
            c: row(m.tableau.c()),
            beta: m.operators.beta().iter().map(|r| row(r)).collect(),
            declared_order: m.declared_order,
        }
    }

    /// Rebuilds the method. `c` is validated against the row sums of `A`.
    pub fn to_method(&self) -> Result<MsrktaseMethod> {
        let mat = |field: &str, rows: &[Vec<String>]| -> Result<Vec<Vec<f64>>> {
            rows.iter()
                .map(|r| r.iter().map(|x| parse(field, x)).collect())
                .collect()
        };
        let vec = |field: &str, v: &[String]| -> Result<Vec<f64>> {
            v.iter().map(|x| parse(field, x)).collect()
        };
        let tableau = RkTableau::new(mat("A", &self.a)?, vec("b", &self.b)?)?;
        let c = vec("c", &self.c)?;
        if c.len() != tableau.stages()
            || c.iter().zip(tableau.c()).any(|(x, y)| (x - y).abs() > 1e-12)
        {
            return Err(Error::InvalidArgument("c does not match the row sums of A".into()));
        }
        let ops = StageOperatorSet::new(parse("alpha", &self.alpha)?, mat("beta", &self.beta)?)?;
        if tableau.stages() != self.s || ops.depth() != self.r {
            return Err(Error::InvalidArgument(format!(
                "card declares s = {}, r = {} but data has s = {}, r = {}",
                self.s,
                self.r,
                tableau.stages(),
                ops.depth()
            )));
        }
        MsrktaseMethod::new(self.name.clone(), tableau, ops, self.declared_order)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("card serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidArgument(format!("bad method card: {e}")))
    }
}
