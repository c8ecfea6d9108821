use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use stiffkit::analysis::{to_wmethod, wmethod_step};
use stiffkit::integrate::{msrktase_step, Problem};
use stiffkit::linalg::{norm_inf, RealMatrix};
use stiffkit::methods::{catalog, derive_msrktase3};
use stiffkit::problems::burgers_problem;

/// Mildly nonlinear, non-autonomous right-hand side with a random linear part.
struct Mixed {
    m: RealMatrix,
}

impl stiffkit::Rhs for Mixed {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        self.m.matvec_into(y, dy);
        for (i, d) in dy.iter_mut().enumerate() {
            *d += 0.3 * y[i].sin() + (t * (i as f64 + 1.0)).cos();
        }
    }
}

fn random_matrix(rng: &mut StdRng, d: usize, scale: f64) -> RealMatrix {
    RealMatrix::from_fn(d, d, |_, _| rng.gen_range(-scale..scale))
}

#[test]
fn tase_step_equals_wmethod_step_on_random_cases() {
    let mut rng = StdRng::seed_from_u64(20240611);
    let methods = catalog();
    for case in 0..50 {
        let m = &methods[case % methods.len()];
        let wt = to_wmethod(m);
        let d = rng.gen_range(1..7);
        let f = Mixed {
            m: random_matrix(&mut rng, d, 2.0),
        };
        // W unrelated to the true Jacobian: equivalence must hold for any W
        let w = random_matrix(&mut rng, d, 3.0);
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let t = rng.gen_range(0.0..2.0);
        let h = rng.gen_range(0.01..0.3);
        let a = msrktase_step(m, &f, &w, t, &y, h).unwrap();
        let b = wmethod_step(&wt, &f, &w, t, &y, h).unwrap();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        let scale = norm_inf(&a).max(1.0);
        assert!(norm_inf(&diff) <= 1e-12 * scale, "case {case} ({}): {diff:?}", m.name);
    }
}

#[test]
fn equivalence_on_burgers_with_exact_jacobian() {
    let p = burgers_problem(24).unwrap();
    let y = p.initial_state();
    let j = p.jacobian(0.0, &y);
    for m in catalog() {
        let a = msrktase_step(m, &p, &j, 0.0, &y, 0.01).unwrap();
        let b = wmethod_step(&to_wmethod(m), &p, &j, 0.0, &y, 0.01).unwrap();
        let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
        assert!(norm_inf(&diff) <= 1e-12 * norm_inf(&a), "{}", m.name);
    }
}

#[test]
fn equivalence_off_the_default_nodes() {
    let m = derive_msrktase3(0.7, 1.2, -0.4, 0.3, 0.9).unwrap();
    let mut rng = StdRng::seed_from_u64(7);
    let f = Mixed {
        m: random_matrix(&mut rng, 4, 1.0),
    };
    let w = random_matrix(&mut rng, 4, 1.0);
    let y = vec![0.2, -0.4, 0.6, 1.0];
    let a = msrktase_step(&m, &f, &w, 0.5, &y, 0.2).unwrap();
    let b = wmethod_step(&to_wmethod(&m), &f, &w, 0.5, &y, 0.2).unwrap();
    for (x, z) in a.iter().zip(&b) {
        assert!((x - z).abs() <= 1e-12);
    }
}
