//! Finite-difference solvers for the Monge-Ampere / linearized Monge-Ampere
//! system with second boundary conditions, and the measurement tools used to
//! check regularity and section geometry of the computed solutions.

pub mod calculus;
pub mod coupled;
pub mod ellipsoid;
pub mod error;
pub mod field;
pub mod geometry;
pub mod lma;
pub mod ma;
pub mod matrix;
pub mod oracle;
pub mod poly;
pub mod regularity;
pub mod sections;
pub mod sparse;

pub use calculus::{discrete_hessian, gradient_at, HessianField};
pub use coupled::{solve_system, CoupledOptions, ProblemData, SolveReport};
pub use ellipsoid::Ellipse;
pub use error::{Error, Result};
pub use field::{trace, ScalarField, Trace};
pub use geometry::{Domain, DomainSpec, Grid, Point};
pub use lma::{solve_lma, LMAOptions, LMAProblem, LMAReport};
pub use ma::{solve_ma, MAProblem, MAReport, MASolveOptions};
pub use matrix::{Mat2, Sym2};
pub use oracle::{fixture, ExactSolution};
pub use poly::Poly2;
pub use regularity::{CheckStatus, HolderEstimate, HolderOptions, HolderRegion};
pub use sections::{EllipsoidFit, MaximalSection, Section};
