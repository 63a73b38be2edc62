//! Linearized Monge-Ampere operator `U^{ij} v_ij` in non-divergence form.

use serde::{Deserialize, Serialize};

use crate::calculus::{
    assemble_operator, contracted_stencil, discrete_hessian, HessianField,
};
use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::geometry::{Link, Point};
use crate::matrix::Sym2;
use crate::sparse::DIRECT_LIMIT;

/// Cofactor matrix of a symmetric 2x2 matrix.
pub fn cofactor(h: &Sym2) -> Sym2 {
    h.cofactor()
}

/// Per-node cofactor matrices `U = cof(D^2 u)`.
pub type CofactorField = HessianField;

#[derive(Clone)]
pub struct LMAProblem {
    pub cof: CofactorField,
    pub g: ScalarField,
    pub psi: Trace,
    /// `min det D^2 u`.
    pub lambda_det: f64,
    /// `max det D^2 u`.
    pub big_lambda_det: f64,
}

impl std::fmt::Debug for LMAProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LMAProblem")
            .field("nodes", &self.cof.len())
            .field("lambda_det", &self.lambda_det)
            .field("big_lambda_det", &self.big_lambda_det)
            .finish_non_exhaustive()
    }
}

impl LMAProblem {
    /// Operator frozen from a discrete convex `u`.
    pub fn from_u(u: &ScalarField, g: ScalarField, psi: Trace) -> Result<Self> {
        let hess = discrete_hessian(u)?;
        Self::new(hess.cofactor(), g, psi)
    }

    pub fn new(cof: CofactorField, g: ScalarField, psi: Trace) -> Result<Self> {
        if cof.len() != g.len() {
            return Err(Error::InvalidProblem(format!(
                "cofactor field has {} nodes, right-hand side has {}",
                cof.len(),
                g.len()
            )));
        }
        let grid = g.grid();
        for (k, u) in cof.values.iter().enumerate() {
            if !u.is_finite() || !u.is_positive_definite() {
                let (l0, l1) = u.eigenvalues();
                return Err(Error::DegenerateOperator {
                    node: k,
                    point: grid.point(k),
                    reason: format!("coefficient matrix has eigenvalues {l0:e}, {l1:e}"),
                });
            }
        }
        if let Some(hit) = grid.hits().iter().find(|h| !psi(h.point).is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "boundary data is not finite at {}",
                hit.point
            )));
        }
        let dets = cof.det();
        let lambda_det = dets.iter().copied().fold(f64::INFINITY, f64::min);
        let big_lambda_det = dets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self {
            cof,
            g,
            psi,
            lambda_det,
            big_lambda_det,
        })
    }

    fn boundary(&self) -> Vec<f64> {
        self.g.grid().hits().iter().map(|h| (self.psi)(h.point)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LMAOptions {
    pub tol: f64,
    /// Estimate the condition number (two extra triangular solves).
    pub estimate_condition: bool,
}

impl Default for LMAOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            estimate_condition: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LMAReport {
    pub residual: f64,
    pub residual_floor: f64,
    /// Rows with a negative neighbor coefficient (not of M-matrix sign).
    pub non_monotone_rows: usize,
    pub rows: usize,
    pub min_ellipticity: f64,
    pub max_ellipticity: f64,
    pub condition_estimate: Option<f64>,
    pub lambda_det: f64,
    pub big_lambda_det: f64,
}

/// `U : D^2_h v - g` node-wise.
pub fn lma_residual(v: &ScalarField, cof: &CofactorField, g: &ScalarField) -> Result<ScalarField> {
    let hess = discrete_hessian(v)?;
    let r = cof
        .values
        .iter()
        .zip(&hess.values)
        .zip(g.values())
        .map(|((a, h), g)| a.contract(h) - g)
        .collect();
    ScalarField::new(v.grid().clone(), r)
}

/// Rounding level of `U : D^2_h v` for the given values.
fn rounding_floor(v: &ScalarField, cof: &CofactorField) -> f64 {
    let grid = v.grid();
    let mut floor: f64 = 0.0;
    for (k, a) in cof.values.iter().enumerate() {
        let (c, arms) = contracted_stencil(grid, k, a);
        let mut e = (c * v.values()[k]).abs();
        for (l, w) in arms {
            e += (w * v.link_value(l)).abs();
        }
        floor = floor.max(4.0 * f64::EPSILON * e);
    }
    floor
}

pub fn solve_lma(problem: &LMAProblem, options: &LMAOptions) -> Result<(ScalarField, LMAReport)> {
    if !(options.tol > 0.0) {
        return Err(Error::InvalidProblem("tol must be positive".into()));
    }
    let grid = problem.g.grid().clone();
    let boundary = problem.boundary();
    let (a, known) = assemble_operator(&grid, &problem.cof.values, &boundary);
    let rhs: Vec<f64> = problem
        .g
        .values()
        .iter()
        .zip(&known)
        .map(|(g, c)| g - c)
        .collect();

    let (values, condition) = if grid.len() <= DIRECT_LIMIT {
        let f = a.factorize()?;
        let x = a.solve_factored(&f, &rhs)?;
        let cond = options.estimate_condition.then(|| a.condition_estimate(&f));
        (x, cond)
    } else {
        (a.solve(&rhs)?, None)
    };
    let v = ScalarField::with_boundary(grid.clone(), values, boundary)?.with_trace(problem.psi.clone());

    let res = lma_residual(&v, &problem.cof, &problem.g)?;
    let residual = res.sup_norm();
    let floor = rounding_floor(&v, &problem.cof);
    if residual > options.tol.max(floor) {
        return Err(Error::LinearSolver(format!(
            "linearized solve left residual {residual:e} above tolerance {:e}",
            options.tol.max(floor)
        )));
    }

    let mut non_monotone = 0;
    for (k, u) in problem.cof.values.iter().enumerate() {
        let (_, arms) = contracted_stencil(&grid, k, u);
        let scale = arms.iter().fold(0.0_f64, |m, &(_, w)| m.max(w.abs()));
        if arms.iter().any(|&(_, w)| w < -1e-12 * scale) {
            non_monotone += 1;
        }
    }
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for u in &problem.cof.values {
        let (l0, l1) = u.eigenvalues();
        lo = lo.min(l0);
        hi = hi.max(l1);
    }
    let report = LMAReport {
        residual,
        residual_floor: floor,
        non_monotone_rows: non_monotone,
        rows: grid.len(),
        min_ellipticity: lo,
        max_ellipticity: hi,
        condition_estimate: condition,
        lambda_det: problem.lambda_det,
        big_lambda_det: problem.big_lambda_det,
    };
    Ok((v, report))
}

/// Row divergences `(d_x U^{x1} + d_y U^{y1}, d_x U^{x2} + d_y U^{y2})` of
/// the cofactor field of `u` by centered differences, at nodes whose four
/// axis neighbors are nodes at distance at least `margin` from the boundary.
pub fn cofactor_divergence(u: &ScalarField, margin: f64) -> Result<Vec<(Point, Point)>> {
    let cof = discrete_hessian(u)?.cofactor();
    let grid = u.grid();
    let h = grid.h();
    let domain = grid.domain();
    let mut out = Vec::new();
    for k in 0..grid.len() {
        let p = grid.point(k);
        if domain.distance_to_boundary(p) < margin + h {
            continue;
        }
        let links = grid.links(k);
        let node = |d: usize| match links[d] {
            Link::Node(m) => Some(m),
            Link::Hit(_) => None,
        };
        let (Some(e), Some(w), Some(n), Some(s)) = (node(0), node(1), node(2), node(3)) else {
            continue;
        };
        let (ue, uw, un, us) = (cof.values[e], cof.values[w], cof.values[n], cof.values[s]);
        let row1 = (ue.xx - uw.xx) / (2.0 * h) + (un.xy - us.xy) / (2.0 * h);
        let row2 = (ue.xy - uw.xy) / (2.0 * h) + (un.yy - us.yy) / (2.0 * h);
        out.push((p, Point::new(row1, row2)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::trace;
    use crate::geometry::{Domain, Grid};
    use std::sync::Arc;

    fn grid(h: f64) -> Arc<Grid> {
        Arc::new(Grid::new(Domain::unit_disk(), h).unwrap())
    }

    #[test]
    fn cofactor_examples() {
        assert_eq!(cofactor(&Sym2::diag(2.0, 3.0)), Sym2::diag(3.0, 2.0));
        assert_eq!(cofactor(&Sym2::IDENTITY), Sym2::IDENTITY);
        let m = Sym2::new(1.0, 2.0, 1.0);
        assert_eq!(cofactor(&m), Sym2::new(1.0, -2.0, 1.0));
        assert_eq!(cofactor(&m).det(), -3.0);
        assert_eq!(m.det(), -3.0);
    }

    #[test]
    fn harmonic_linear_data() {
        let g = grid(1.0 / 16.0);
        let u = ScalarField::from_fn(g.clone(), |p| 0.5 * p.norm2());
        let p = LMAProblem::from_u(&u, ScalarField::constant(g, 0.0), trace(|p| p.x)).unwrap();
        let (v, rep) = solve_lma(&p, &LMAOptions::default()).unwrap();
        assert!(v.sup_error(|p| p.x) < 1e-12);
        assert_eq!(rep.non_monotone_rows, 0);
    }

    #[test]
    fn anisotropic_quadratic() {
        let (a, b) = (3.0, 0.5);
        let g = grid(1.0 / 16.0);
        let u = ScalarField::from_fn(g.clone(), move |p| 0.5 * (a * p.x * p.x + b * p.y * p.y));
        let p = LMAProblem::from_u(&u, ScalarField::constant(g, 2.0 * b), trace(|p| p.x * p.x)).unwrap();
        assert!((p.lambda_det - a * b).abs() < 1e-9);
        let (v, _) = solve_lma(&p, &LMAOptions::default()).unwrap();
        assert!(v.sup_error(|p| p.x * p.x) < 1e-11);
    }

    #[test]
    fn residual_examples() {
        let g = grid(0.1);
        let n = g.len();
        let cof = HessianField {
            values: vec![Sym2::new(2.0, 0.3, 1.0); n],
        };
        let v = ScalarField::from_fn(g.clone(), |p| p.x);
        let r = lma_residual(&v, &cof, &ScalarField::constant(g.clone(), 0.0)).unwrap();
        assert!(r.sup_norm() < 1e-10);
        let id = HessianField {
            values: vec![Sym2::IDENTITY; n],
        };
        let v = ScalarField::from_fn(g.clone(), |p| 0.5 * p.norm2());
        let r = lma_residual(&v, &id, &ScalarField::constant(g, 2.0)).unwrap();
        assert!(r.sup_norm() < 1e-10);
    }

    #[test]
    fn indefinite_coefficients_name_the_node() {
        let g = grid(0.25);
        let mut values = vec![Sym2::IDENTITY; g.len()];
        values[3] = Sym2::new(1.0, 2.0, 1.0);
        let err = LMAProblem::new(HessianField { values }, ScalarField::constant(g, 0.0), trace(|_| 1.0))
            .unwrap_err();
        assert!(matches!(err, Error::DegenerateOperator { node: 3, .. }), "{err}");
    }
}
