//! Toolkit for modified singly-TASE Runge-Kutta methods on stiff ODEs:
//! dense linear algebra, TASE operators, method derivation, linear stability
//! and order analysis, fixed-step integrators and method-of-lines problems.

pub mod analysis;
pub mod error;
pub mod integrate;
pub mod linalg;
pub mod methods;
pub mod problems;
pub mod tase;

pub use error::{Error, Result};
pub use integrate::{integrate, IntegrationRun, Problem, Rhs, Stepper};
pub use linalg::{ComplexMatrix, DenseMatrix, RealMatrix};
pub use methods::{catalog, find_method, MethodCard, MsrktaseMethod, RkTableau};
pub use problems::{SemiDiscreteProblem, WStrategy};
pub use tase::StageOperatorSet;
