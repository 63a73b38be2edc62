//! Dirichlet problem for `det D^2 u = g` by damped Newton iteration.

use serde::{Deserialize, Serialize};

use crate::calculus::{assemble_operator, discrete_hessian, HessianField};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::matrix::Sym2;

#[derive(Clone)]
pub struct MAProblem {
    pub g: ScalarField,
    pub phi: Trace,
}

impl std::fmt::Debug for MAProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MAProblem").field("g", &self.g).finish_non_exhaustive()
    }
}

impl MAProblem {
    pub fn new(g: ScalarField, phi: Trace) -> Result<Self> {
        if !(g.min() > 0.0) {
            return Err(Error::InvalidProblem(format!(
                "right-hand side must be strictly positive, min is {}",
                g.min()
            )));
        }
        if let Some(hit) = g.grid().hits().iter().find(|h| !phi(h.point).is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "boundary data is not finite at {}",
                hit.point
            )));
        }
        Ok(Self { g, phi })
    }

    /// `min g`.
    pub fn lambda(&self) -> f64 {
        self.g.min()
    }

    /// `max g`.
    pub fn big_lambda(&self) -> f64 {
        self.g.max()
    }

    fn boundary(&self) -> Vec<f64> {
        self.g.grid().hits().iter().map(|h| (self.phi)(h.point)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MASolveOptions {
    pub newton_tol: f64,
    pub max_newton_iters: usize,
    pub backtrack_factor: f64,
    pub max_backtracks: usize,
    /// Eigenvalue floor applied before forming the Newton cofactor.
    pub convexity_floor: f64,
}

impl Default for MASolveOptions {
    fn default() -> Self {
        Self {
            newton_tol: 1e-10,
            max_newton_iters: 50,
            backtrack_factor: 0.5,
            max_backtracks: 30,
            convexity_floor: 1e-10,
        }
    }
}

impl MASolveOptions {
    fn validate(&self) -> Result<()> {
        if !(self.newton_tol > 0.0) || !(self.convexity_floor > 0.0) {
            return Err(Error::InvalidProblem(
                "newton_tol and convexity_floor must be positive".into(),
            ));
        }
        if !(self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0) {
            return Err(Error::InvalidProblem(
                "backtrack_factor must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MAReport {
    pub iterations: usize,
    /// Residual sup-norm of the starting iterate and after every step.
    pub residual_history: Vec<f64>,
    pub step_lengths: Vec<f64>,
    pub min_hessian_eigenvalue: f64,
    /// Rounding level of the discrete residual on this grid.
    pub residual_floor: f64,
    /// Stopped at the rounding floor rather than below `newton_tol`.
    pub floor_limited: bool,
    pub lambda: f64,
    pub big_lambda: f64,
}

/// `det D^2_h u - g` node-wise.
pub fn ma_residual(u: &ScalarField, g: &ScalarField) -> Result<ScalarField> {
    let hess = discrete_hessian(u)?;
    let r = hess.det().iter().zip(g.values()).map(|(d, g)| d - g).collect();
    ScalarField::new(u.grid().clone(), r)
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Size of the rounding error in evaluating `det D^2_h u` on this grid:
/// unequal-arm stencils near the boundary carry coefficients of order
/// `1 / (s h^2)` for small cut fractions `s`.
pub fn residual_floor(u: &ScalarField) -> Result<f64> {
    let hess = discrete_hessian(u)?;
    let grid = u.grid();
    let mut floor: f64 = 0.0;
    for k in 0..grid.len() {
        let st = grid.stencil(k);
        let mut e = 0.0;
        for s in &st.second {
            e += (s.center * u.values()[k]).abs()
                + (s.plus.1 * u.link_value(s.plus.0)).abs()
                + (s.minus.1 * u.link_value(s.minus.0)).abs();
        }
        let hk = &hess.values[k];
        let scale = hk.xx.abs().max(hk.yy.abs()).max(hk.xy.abs());
        floor = floor.max(4.0 * f64::EPSILON * e * scale);
    }
    Ok(floor)
}

fn all_positive_definite(h: &HessianField) -> bool {
    h.values.iter().all(Sym2::is_positive_definite)
}

/// Solves `Delta u = 2 sqrt(g)`, `u = phi` on the boundary.
pub fn initial_guess(problem: &MAProblem) -> Result<ScalarField> {
    let grid = problem.g.grid();
    let boundary = problem.boundary();
    let (a, known) = assemble_operator(grid, &vec![Sym2::IDENTITY; grid.len()], &boundary);
    let rhs: Vec<f64> = problem
        .g
        .values()
        .iter()
        .zip(&known)
        .map(|(g, c)| 2.0 * g.sqrt() - c)
        .collect();
    let u = a.solve(&rhs)?;
    ScalarField::with_boundary(grid.clone(), u, boundary)
        .map(|f| f.with_trace(problem.phi.clone()))
}

pub fn solve_ma(problem: &MAProblem, options: &MASolveOptions) -> Result<(ScalarField, MAReport)> {
    solve_ma_from(problem, options, None)
}

/// Newton from `start` (interior values reused, boundary from `phi`), or
/// from [`initial_guess`] when `start` is `None`.
pub fn solve_ma_from(
    problem: &MAProblem,
    options: &MASolveOptions,
    start: Option<&[f64]>,
) -> Result<(ScalarField, MAReport)> {
    options.validate()?;
    let grid = problem.g.grid().clone();
    let boundary = problem.boundary();
    let mut u = match start {
        Some(v) => ScalarField::with_boundary(grid.clone(), v.to_vec(), boundary.clone())?
            .with_trace(problem.phi.clone()),
        None => initial_guess(problem)?,
    };
    let g = problem.g.values();
    let residual = |h: &HessianField| -> Vec<f64> {
        h.values.iter().zip(g).map(|(m, g)| m.det() - g).collect()
    };
    let mut hess = discrete_hessian(&u)?;
    let mut r = residual(&hess);
    let mut history = vec![sup(&r)];
    let mut steps = Vec::new();
    let floor = residual_floor(&u)?;
    let report = |history: Vec<f64>, steps: Vec<f64>, hess: &HessianField| MAReport {
        iterations: steps.len(),
        floor_limited: *history.last().unwrap() > options.newton_tol,
        residual_history: history,
        step_lengths: steps,
        min_hessian_eigenvalue: hess.min_eigenvalue(),
        residual_floor: floor,
        lambda: problem.lambda(),
        big_lambda: problem.big_lambda(),
    };

    for _ in 0..options.max_newton_iters {
        let current = *history.last().unwrap();
        if current <= options.newton_tol {
            if !all_positive_definite(&hess) {
                return Err(Error::ConvexityFailure(format!(
                    "residual converged but the discrete Hessian has minimum eigenvalue {}",
                    hess.min_eigenvalue()
                )));
            }
            return Ok((u, report(history, steps, &hess)));
        }
        let cof: Vec<Sym2> = hess
            .values
            .iter()
            .map(|h| h.clamp_eigenvalues(options.convexity_floor).cofactor())
            .collect();
        // boundary values are fixed, so the Newton correction vanishes there
        let (jac, _) = assemble_operator(&grid, &cof, &vec![0.0; grid.hits().len()]);
        let rhs: Vec<f64> = r.iter().map(|x| -x).collect();
        let delta = jac.solve(&rhs)?;

        let was_convex = all_positive_definite(&hess);
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=options.max_backtracks {
            let trial: Vec<f64> = u.values().iter().zip(&delta).map(|(a, d)| a + t * d).collect();
            let tu = u.with_values(trial)?;
            let th = discrete_hessian(&tu)?;
            let tr = residual(&th);
            let norm = sup(&tr);
            let convex_ok = !was_convex || all_positive_definite(&th);
            if norm.is_finite() && norm < (1.0 - 1e-4 * t) * current && convex_ok {
                accepted = Some((tu, th, tr, norm));
                break;
            }
            t *= options.backtrack_factor;
        }
        match accepted {
            Some((nu, nh, nr, norm)) => {
                u = nu;
                hess = nh;
                r = nr;
                history.push(norm);
                steps.push(t);
            }
            None if current <= floor && all_positive_definite(&hess) => {
                log::warn!(
                    "newton stalled at residual {current:e}, within the rounding floor {floor:e}"
                );
                return Ok((u, report(history, steps, &hess)));
            }
            None => {
                return Err(if was_convex && current > 1e3 * options.newton_tol {
                    Error::ConvexityFailure(format!(
                        "line search could not keep the iterate convex (residual {current:e})"
                    ))
                } else {
                    Error::Nonconvergence {
                        solver: "monge-ampere newton",
                        iterations: steps.len(),
                        last: current,
                        history,
                    }
                });
            }
        }
    }
    let last = *history.last().unwrap();
    if last <= options.newton_tol && all_positive_definite(&hess) {
        return Ok((u, report(history, steps, &hess)));
    }
    Err(Error::Nonconvergence {
        solver: "monge-ampere newton",
        iterations: steps.len(),
        last,
        history,
    })
}
