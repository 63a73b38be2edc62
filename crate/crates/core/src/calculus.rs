//! Finite-difference stencils on cut-cell grids.
//!
//! Second directional derivatives along the four lattice lines use the
//! three-point formula for unequal arms, so boundary crossings closer than
//! one cell are handled without ghost values. The mixed derivative comes
//! from the two diagonals: `u_xy = (D_d1 - D_d2) / 2`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::ScalarField;
use crate::geometry::{Grid, Link, Point};
use crate::matrix::Sym2;
use crate::sparse::SparseMatrix;

/// Three-point stencil along one lattice line through a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineStencil {
    pub center: f64,
    pub plus: (Link, f64),
    pub minus: (Link, f64),
}

/// Precomputed second-derivative stencils along x, y, d1, d2 and
/// first-derivative stencils along x, y.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStencil {
    pub second: [LineStencil; 4],
    pub first: [LineStencil; 2],
}

pub(crate) fn build_stencils(grid: &Grid) -> Vec<NodeStencil> {
    let h = grid.h();
    let fraction = |link: Link| match link {
        Link::Node(_) => 1.0,
        Link::Hit(m) => grid.hits()[m].fraction,
    };
    (0..grid.len())
        .map(|k| {
            let links = grid.links(k);
            let line = |dir: usize, len: f64| {
                let (lp, lm) = (links[2 * dir], links[2 * dir + 1]);
                (lp, lm, fraction(lp) * len, fraction(lm) * len)
            };
            let mut second = [LineStencil {
                center: 0.0,
                plus: (Link::Node(0), 0.0),
                minus: (Link::Node(0), 0.0),
            }; 4];
            let mut first = [second[0]; 2];
            for (d, s) in second.iter_mut().enumerate() {
                let len = if d < 2 { h } else { h * std::f64::consts::SQRT_2 };
                let (lp, lm, a, b) = line(d, len);
                let cp = 2.0 / (a * (a + b));
                let cm = 2.0 / (b * (a + b));
                *s = LineStencil {
                    center: -(cp + cm),
                    plus: (lp, cp),
                    minus: (lm, cm),
                };
                if d < 2 {
                    first[d] = LineStencil {
                        center: (a - b) / (a * b),
                        plus: (lp, b / (a * (a + b))),
                        minus: (lm, -a / (b * (a + b))),
                    };
                }
            }
            NodeStencil { second, first }
        })
        .collect()
}

/// Per-node symmetric matrices, typically `D^2 u`.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianField {
    pub values: Vec<Sym2>,
}

impl HessianField {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn det(&self) -> Vec<f64> {
        self.values.iter().map(Sym2::det).collect()
    }

    pub fn cofactor(&self) -> HessianField {
        HessianField {
            values: self.values.iter().map(Sym2::cofactor).collect(),
        }
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.values
            .iter()
            .map(Sym2::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }
}

fn apply_line(field: &ScalarField, k: usize, s: &LineStencil) -> f64 {
    s.center * field.values()[k]
        + s.plus.1 * field.link_value(s.plus.0)
        + s.minus.1 * field.link_value(s.minus.0)
}

fn require_boundary(field: &ScalarField) -> Result<()> {
    if field.boundary().is_none() && !field.grid().hits().is_empty() {
        return Err(Error::IncompleteData(
            "field has no boundary trace but the grid has boundary crossings".into(),
        ));
    }
    Ok(())
}

/// Second directional derivatives `(D_x, D_y, D_d1, D_d2)` at a node.
pub fn line_second_derivatives(field: &ScalarField, k: usize) -> [f64; 4] {
    let st = field.grid().stencil(k);
    [0, 1, 2, 3].map(|d| apply_line(field, k, &st.second[d]))
}

fn hessian_at(field: &ScalarField, k: usize) -> Sym2 {
    let [dx, dy, d1, d2] = line_second_derivatives(field, k);
    Sym2::new(dx, 0.5 * (d1 - d2), dy)
}

/// Discrete Hessian at every interior node.
pub fn discrete_hessian(field: &ScalarField) -> Result<HessianField> {
    require_boundary(field)?;
    let values = (0..field.len())
        .into_par_iter()
        .map(|k| hessian_at(field, k))
        .collect();
    Ok(HessianField { values })
}

/// Gradient by three-point first differences along the axes.
pub fn gradient(field: &ScalarField) -> Result<Vec<Point>> {
    require_boundary(field)?;
    Ok((0..field.len())
        .map(|k| gradient_at(field, k))
        .collect())
}

pub fn gradient_at(field: &ScalarField, k: usize) -> Point {
    let st = field.grid().stencil(k);
    Point::new(
        apply_line(field, k, &st.first[0]),
        apply_line(field, k, &st.first[1]),
    )
}

/// Linear form `v -> A : D^2_h v` at node `k`, as a center coefficient and
/// the eight arm coefficients in direction order.
pub fn contracted_stencil(grid: &Grid, k: usize, a: &Sym2) -> (f64, [(Link, f64); 8]) {
    let st = grid.stencil(k);
    let weights = [a.xx, a.yy, a.xy, -a.xy];
    let mut center = 0.0;
    let mut arms = [(Link::Node(0), 0.0); 8];
    for d in 0..4 {
        let s = &st.second[d];
        let w = weights[d];
        center += w * s.center;
        arms[2 * d] = (s.plus.0, w * s.plus.1);
        arms[2 * d + 1] = (s.minus.0, w * s.minus.1);
    }
    (center, arms)
}

/// Matrix of `v -> A_k : D^2_h v` over the interior unknowns, plus the
/// constant contribution of the boundary values at each row.
pub fn assemble_operator(grid: &Grid, coefficients: &[Sym2], boundary: &[f64]) -> (SparseMatrix, Vec<f64>) {
    let mut triplets = Vec::with_capacity(9 * grid.len());
    let mut known = vec![0.0; grid.len()];
    for (k, a) in coefficients.iter().enumerate() {
        let (center, arms) = contracted_stencil(grid, k, a);
        triplets.push((k, k, center));
        for (link, w) in arms {
            if w == 0.0 {
                continue;
            }
            match link {
                Link::Node(m) => triplets.push((k, m, w)),
                Link::Hit(m) => known[k] += w * boundary[m],
            }
        }
    }
    (SparseMatrix::from_triplets(grid.len(), triplets), known)
}

/// Node-wise `A : D^2_h v`.
pub fn contract_hessian(coefficients: &[Sym2], field: &ScalarField) -> Result<Vec<f64>> {
    let hess = discrete_hessian(field)?;
    Ok(coefficients
        .iter()
        .zip(&hess.values)
        .map(|(a, h)| a.contract(h))
        .collect())
}
