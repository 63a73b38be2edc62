//! The fourth-order system
//!
//! ```text
//! U^{ij} w_ij = f,   w = (det D^2 u)^(theta - 1)   in the domain,
//! u = phi,           w = psi                       on the boundary,
//! ```
//!
//! solved by alternating a Monge-Ampere solve for `u` (with
//! `det D^2 u = w^(1 / (theta - 1))`) and a linearized solve for `w`, with
//! under-relaxation on `w`.

use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::calculus::{assemble_operator, discrete_hessian};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::geometry::{Grid, Link};
use crate::lma::{lma_residual, solve_lma, LMAOptions, LMAProblem};
use crate::ma::{solve_ma_from, MAProblem, MASolveOptions};
use crate::matrix::Sym2;

/// Spatial dimension.
pub const DIM: f64 = 2.0;

#[derive(Clone)]
pub struct ProblemData {
    pub grid: Arc<Grid>,
    pub theta: f64,
    pub f: ScalarField,
    pub phi: Trace,
    pub psi: Trace,
    /// Integrability exponent used when reporting `|f|_{L^p}`.
    pub p: f64,
}

impl std::fmt::Debug for ProblemData {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemData")
            .field("nodes", &self.grid.len())
            .field("theta", &self.theta)
            .field("p", &self.p)
            .finish_non_exhaustive()
    }
}

/// Checks `0 <= theta < 1/n`.
pub fn validate_theta(theta: f64) -> Result<()> {
    if !(0.0..1.0 / DIM).contains(&theta) {
        return Err(Error::InvalidProblem(format!(
            "theta must satisfy 0 <= theta < 1/n = {}, got {theta}",
            1.0 / DIM
        )));
    }
    Ok(())
}

impl ProblemData {
    pub fn new(grid: Arc<Grid>, theta: f64, f: ScalarField, phi: Trace, psi: Trace, p: f64) -> Result<Self> {
        validate_theta(theta)?;
        if !(p >= 1.0) {
            return Err(Error::InvalidProblem(format!(
                "integrability exponent p must be at least 1, got {p}"
            )));
        }
        let mut samples = grid.domain().boundary_samples(512);
        samples.extend(grid.hits().iter().map(|h| h.point));
        let min_psi = samples.iter().map(|&q| psi(q)).fold(f64::INFINITY, f64::min);
        if !(min_psi > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "boundary data psi must be positive, min over boundary samples is {min_psi}"
            )));
        }
        if samples.iter().any(|&q| !phi(q).is_finite()) {
            return Err(Error::InvalidProblem("boundary data phi is not finite".into()));
        }
        Ok(Self {
            grid,
            theta,
            f,
            phi,
            psi,
            p,
        })
    }

    /// Whether `f <= 0` at every node.
    pub fn f_nonpositive(&self) -> bool {
        self.f.max() <= 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoupledOptions {
    pub outer_tol: f64,
    pub max_outer_iters: usize,
    pub relaxation: f64,
    pub ma: MASolveOptions,
    pub lma: LMAOptions,
}

impl Default for CoupledOptions {
    fn default() -> Self {
        Self {
            outer_tol: 1e-8,
            max_outer_iters: 200,
            relaxation: 0.5,
            ma: MASolveOptions::default(),
            lma: LMAOptions {
                estimate_condition: false,
                ..LMAOptions::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub outer_iterations: usize,
    /// `|w^{k+1} - w^k|_inf` per outer iteration.
    pub w_change_history: Vec<f64>,
    pub newton_iterations: Vec<usize>,
    pub ma_residual: f64,
    pub lma_residual: f64,
    pub min_w: f64,
    pub max_w: f64,
    pub min_hessian_eigenvalue: f64,
    pub non_monotone_rows: usize,
    pub f_nonpositive: bool,
    pub flags: Vec<String>,
    pub timing: Timing,
}

/// `(det D^2_h u)^(theta - 1)`, with boundary values from the determinant
/// extrapolated linearly along each cut arm.
pub fn w_from_u(u: &ScalarField, theta: f64) -> Result<ScalarField> {
    let hess = discrete_hessian(u)?;
    let det = hess.det();
    let grid = u.grid();
    if let Some(k) = det.iter().position(|d| !(*d > 0.0)) {
        return Err(Error::ConvexityFailure(format!(
            "discrete Hessian determinant {} at {} is not positive",
            det[k],
            grid.point(k)
        )));
    }
    let m = theta - 1.0;
    let values = det.iter().map(|d| d.powf(m)).collect();
    let boundary = grid
        .hits()
        .iter()
        .map(|hit| {
            let opposite = hit.direction ^ 1;
            let dk = det[hit.node];
            let extrapolated = match grid.links(hit.node)[opposite] {
                // the hit is `fraction` arm lengths out, the opposite node one
                Link::Node(o) => dk + hit.fraction * (dk - det[o]),
                Link::Hit(_) => dk,
            };
            // fall back to the node value if extrapolation leaves the cone
            let d = if extrapolated > 0.0 { extrapolated } else { dk };
            d.powf(m)
        })
        .collect();
    ScalarField::with_boundary(grid.clone(), values, boundary)
}

/// `w^(1 / (theta - 1))`, the Monge-Ampere right-hand side.
pub fn g_from_w(w: &ScalarField, theta: f64) -> Result<ScalarField> {
    if let Some(k) = w.values().iter().position(|v| !(*v > 0.0)) {
        return Err(Error::InvalidState(format!(
            "w = {} at {} is not positive",
            w.values()[k],
            w.grid().point(k)
        )));
    }
    let e = 1.0 / (theta - 1.0);
    let values = w.values().iter().map(|v| v.powf(e)).collect();
    match w.boundary() {
        Some(b) if b.iter().all(|v| *v > 0.0) => {
            ScalarField::with_boundary(w.grid().clone(), values, b.iter().map(|v| v.powf(e)).collect())
        }
        _ => ScalarField::new(w.grid().clone(), values),
    }
}

/// Solves `Delta w = 0`, `w = psi` on the boundary.
pub fn harmonic_extension(grid: &Arc<Grid>, psi: &Trace) -> Result<ScalarField> {
    let boundary: Vec<f64> = grid.hits().iter().map(|h| psi(h.point)).collect();
    let (a, known) = assemble_operator(grid, &vec![Sym2::IDENTITY; grid.len()], &boundary);
    let rhs: Vec<f64> = known.iter().map(|c| -c).collect();
    let w = a.solve(&rhs)?;
    Ok(ScalarField::with_boundary(grid.clone(), w, boundary)?.with_trace(psi.clone()))
}

/// `-(1/(n+1)) U : D^2 w`.
pub fn affine_mean_curvature(u: &ScalarField, w: &ScalarField) -> Result<ScalarField> {
    let cof = discrete_hessian(u)?.cofactor();
    let zero = ScalarField::new(u.grid().clone(), vec![0.0; u.len()])?;
    let l = lma_residual(w, &cof, &zero)?;
    let scale = -1.0 / (DIM + 1.0);
    ScalarField::new(u.grid().clone(), l.values().iter().map(|v| scale * v).collect())
}

pub fn solve_system(data: &ProblemData, options: &CoupledOptions) -> Result<(ScalarField, ScalarField, SolveReport)> {
    let start = Instant::now();
    if !(options.outer_tol > 0.0) || !(options.relaxation > 0.0 && options.relaxation <= 1.0) {
        return Err(Error::InvalidProblem(
            "outer_tol must be positive and relaxation must lie in (0, 1]".into(),
        ));
    }
    validate_theta(data.theta)?;
    let grid = &data.grid;
    let sigma = options.relaxation;
    let mut flags = Vec::new();
    let f_nonpositive = data.f_nonpositive();
    if !f_nonpositive {
        log::warn!("forcing is positive somewhere; hypothesis f <= 0 violated");
        flags.push("hypothesis f <= 0 violated".to_string());
    }

    let mut w = harmonic_extension(grid, &data.psi)?;
    let mut u_prev: Option<Vec<f64>> = None;
    let mut history = Vec::new();
    let mut newton = Vec::new();
    let mut converged = false;

    let ma_step = |w: &ScalarField, start: Option<&[f64]>| {
        let g = g_from_w(w, data.theta)?;
        let g = ScalarField::new(grid.clone(), g.into_values())?;
        let problem = MAProblem::new(g, data.phi.clone())?;
        solve_ma_from(&problem, &options.ma, start)
    };

    for _ in 0..options.max_outer_iters {
        let (u, rep) = ma_step(&w, u_prev.as_deref())?;
        newton.push(rep.iterations);
        let lma = LMAProblem::from_u(&u, data.f.clone(), data.psi.clone())?;
        let (w_half, _) = solve_lma(&lma, &options.lma)?;
        let next: Vec<f64> = w
            .values()
            .iter()
            .zip(w_half.values())
            .map(|(a, b)| (1.0 - sigma) * a + sigma * b)
            .collect();
        let change = next
            .iter()
            .zip(w.values())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        w = w_half.with_values(next)?;
        u_prev = Some(u.into_values());
        history.push(change);
        if !change.is_finite() {
            break;
        }
        if change <= options.outer_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::Nonconvergence {
            solver: "coupled splitting iteration",
            iterations: history.len(),
            last: history.last().copied().unwrap_or(f64::NAN),
            history,
        });
    }

    // final u consistent with the final w
    let (u, rep) = ma_step(&w, u_prev.as_deref())?;
    newton.push(rep.iterations);
    let lma = LMAProblem::from_u(&u, data.f.clone(), data.psi.clone())?;
    let lma_res = lma_residual(&w, &lma.cof, &data.f)?.sup_norm();
    let (_, lma_rep) = solve_lma(
        &lma,
        &LMAOptions {
            estimate_condition: false,
            ..options.lma
        },
    )?;
    let report = SolveReport {
        outer_iterations: history.len(),
        w_change_history: history,
        newton_iterations: newton,
        ma_residual: *rep.residual_history.last().unwrap(),
        lma_residual: lma_res,
        min_w: w.min(),
        max_w: w.max(),
        min_hessian_eigenvalue: rep.min_hessian_eigenvalue,
        non_monotone_rows: lma_rep.non_monotone_rows,
        f_nonpositive,
        flags,
        timing: Timing {
            wall_seconds: start.elapsed().as_secs_f64(),
        },
    };
    Ok((u, w, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::trace;
    use crate::geometry::Domain;

    fn grid(h: f64) -> Arc<Grid> {
        Arc::new(Grid::new(Domain::unit_disk(), h).unwrap())
    }

    #[test]
    fn w_from_constant_determinant() {
        let g = grid(0.125);
        let u = ScalarField::from_fn(g.clone(), |p| p.norm2());
        let w0 = w_from_u(&u, 0.0).unwrap();
        assert!(w0.values().iter().all(|v| (v - 0.25).abs() < 1e-12));
        let w1 = w_from_u(&u, 0.25).unwrap();
        assert!(w1.values().iter().all(|v| (v - 4f64.powf(-0.75)).abs() < 1e-12));
        let u1 = ScalarField::from_fn(g, |p| 0.5 * p.norm2());
        assert!(w_from_u(&u1, 0.3).unwrap().values().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn g_inverts_w() {
        let g = grid(0.125);
        let w = ScalarField::constant(g.clone(), 0.25);
        assert!(g_from_w(&w, 0.0).unwrap().values().iter().all(|v| (v - 4.0).abs() < 1e-14));
        let u = ScalarField::from_fn(g, |p| 0.5 * p.norm2() + 0.1 * p.x.powi(4) + 0.05 * p.y.powi(4));
        let det = discrete_hessian(&u).unwrap().det();
        for theta in [0.0, 0.1, 0.25, 0.49] {
            let back = g_from_w(&w_from_u(&u, theta).unwrap(), theta).unwrap();
            for (a, b) in back.values().iter().zip(&det) {
                assert!(((a - b) / b).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn theta_outside_range_is_rejected() {
        for t in [-0.1, 0.5, 0.6] {
            assert!(matches!(validate_theta(t), Err(Error::InvalidProblem(_))));
        }
    }

    #[test]
    fn trivial_fixed_point() {
        let g = grid(1.0 / 16.0);
        for theta in [0.0, 0.25] {
            let data = ProblemData::new(
                g.clone(),
                theta,
                ScalarField::constant(g.clone(), 0.0),
                trace(|p| 0.5 * p.norm2()),
                trace(|_| 1.0),
                2.0,
            )
            .unwrap();
            let (u, w, rep) = solve_system(&data, &CoupledOptions::default()).unwrap();
            assert!(u.sup_error(|p| 0.5 * p.norm2()) < 1e-10);
            assert!(w.sup_error(|_| 1.0) < 1e-10);
            assert!(rep.outer_iterations <= 2);
        }
    }

    #[test]
    fn nonpositive_psi_is_rejected() {
        let g = grid(0.25);
        let err = ProblemData::new(
            g.clone(),
            0.25,
            ScalarField::constant(g, 0.0),
            trace(|p| 0.5 * p.norm2()),
            trace(|p| p.x),
            2.0,
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidProblem(_)));
    }

    #[test]
    fn affine_mean_curvature_of_constant_w() {
        let g = grid(0.1);
        let u = ScalarField::from_fn(g.clone(), |p| 0.5 * p.norm2() + p.x.powi(4));
        let w = ScalarField::constant(g.clone(), 2.0);
        assert!(affine_mean_curvature(&u, &w).unwrap().sup_norm() < 1e-10);
        // U = I and D^2 w = diag(3, 0): L = 3, H = -1
        let u = ScalarField::from_fn(g.clone(), |p| 0.5 * p.norm2());
        let w = ScalarField::from_fn(g, |p| 1.5 * p.x * p.x);
        let h = affine_mean_curvature(&u, &w).unwrap();
        assert!(h.values().iter().all(|v| (v + 1.0).abs() < 1e-9));
    }
}
