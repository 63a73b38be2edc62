//! Closed-form manufactured solutions and their forcings.
//!
//! Every fixture has a polynomial `u`, so `det D^2 u` is a polynomial and
//! `w = det^(theta - 1)` has derivatives by the chain rule. The forcing
//! `f = U : D^2 w` is evaluated that way and, independently, by
//! eighth-order central differences of `w`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::{trace, ScalarField, Trace};
use crate::geometry::{Domain, Grid, Point};
use crate::matrix::{Mat2, Sym2};
use crate::poly::Poly2;

/// Step used by the finite-difference forcing evaluator.
pub const FD_STEP: f64 = 1e-3;

// eighth-order central weights for offsets 0..=4 (symmetric / antisymmetric)
const D2_WEIGHTS: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
const D1_WEIGHTS: [f64; 5] = [0.0, 4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];

#[derive(Debug, Clone)]
pub struct ExactSolution {
    name: String,
    theta: f64,
    u: Poly2,
    grad: [Poly2; 2],
    hess: [Poly2; 3],
    det: Poly2,
    det_grad: [Poly2; 2],
    det_hess: [Poly2; 3],
}

/// Result of sampling `f` for the sign hypothesis `f <= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignAudit {
    pub samples: usize,
    pub max_f: f64,
    pub min_f: f64,
    pub positive_samples: usize,
    pub nonpositive: bool,
}

impl ExactSolution {
    /// Wraps a polynomial `u`. Convexity is checked by
    /// [`ExactSolution::check_convex_on`], not here.
    pub fn polynomial(name: impl Into<String>, u: Poly2, theta: f64) -> Self {
        let hess = [u.derivative(2, 0), u.derivative(1, 1), u.derivative(0, 2)];
        let det = &(&hess[0] * &hess[2]) - &(&hess[1] * &hess[1]);
        Self {
            name: name.into(),
            theta,
            grad: [u.derivative(1, 0), u.derivative(0, 1)],
            det_grad: [det.derivative(1, 0), det.derivative(0, 1)],
            det_hess: [det.derivative(2, 0), det.derivative(1, 1), det.derivative(0, 2)],
            hess,
            det,
            u,
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self {
            theta,
            ..self.clone()
        }
    }

    pub fn u_poly(&self) -> &Poly2 {
        &self.u
    }

    pub fn u(&self, p: Point) -> f64 {
        self.u.eval(p)
    }

    pub fn gradient(&self, p: Point) -> Point {
        Point::new(self.grad[0].eval(p), self.grad[1].eval(p))
    }

    pub fn hessian(&self, p: Point) -> Sym2 {
        Sym2::new(self.hess[0].eval(p), self.hess[1].eval(p), self.hess[2].eval(p))
    }

    pub fn det(&self, p: Point) -> f64 {
        self.det.eval(p)
    }

    /// `w = det^(theta - 1)`.
    pub fn w(&self, p: Point) -> f64 {
        self.det(p).powf(self.theta - 1.0)
    }

    /// `g = w^(1 / (theta - 1)) = det D^2 u`.
    pub fn g(&self, p: Point) -> f64 {
        self.det(p)
    }

    pub fn w_hessian(&self, p: Point) -> Sym2 {
        let m = self.theta - 1.0;
        let d = self.det(p);
        let (dx, dy) = (self.det_grad[0].eval(p), self.det_grad[1].eval(p));
        let a = m * d.powf(m - 1.0);
        let b = m * (m - 1.0) * d.powf(m - 2.0);
        Sym2::new(
            a * self.det_hess[0].eval(p) + b * dx * dx,
            a * self.det_hess[1].eval(p) + b * dx * dy,
            a * self.det_hess[2].eval(p) + b * dy * dy,
        )
    }

    /// Symbolic forcing `U : D^2 w`.
    pub fn f(&self, p: Point) -> f64 {
        self.hessian(p).cofactor().contract(&self.w_hessian(p))
    }

    /// Forcing with `D^2 w` from eighth-order differences of `w`.
    pub fn f_finite_difference(&self, p: Point) -> f64 {
        let h = FD_STEP;
        let w = |dx: f64, dy: f64| self.w(Point::new(p.x + dx * h, p.y + dy * h));
        let mut wxx = D2_WEIGHTS[0] * w(0.0, 0.0);
        let mut wyy = D2_WEIGHTS[0] * w(0.0, 0.0);
        for k in 1..5 {
            let s = k as f64;
            wxx += D2_WEIGHTS[k] * (w(s, 0.0) + w(-s, 0.0));
            wyy += D2_WEIGHTS[k] * (w(0.0, s) + w(0.0, -s));
        }
        let mut wxy = 0.0;
        for i in 1..5 {
            for j in 1..5 {
                let (si, sj) = (i as f64, j as f64);
                let cross = w(si, sj) - w(-si, sj) - w(si, -sj) + w(-si, -sj);
                wxy += D1_WEIGHTS[i] * D1_WEIGHTS[j] * cross;
            }
        }
        let d2w = Sym2::new(wxx / (h * h), wxy / (h * h), wyy / (h * h));
        self.hessian(p).cofactor().contract(&d2w)
    }

    /// Samples `f` on about `n` points of a uniform lattice inside `domain`.
    pub fn sign_audit(&self, domain: &Domain, n: usize) -> SignAudit {
        let pts = sample_points(domain, n);
        let mut audit = SignAudit {
            samples: pts.len(),
            max_f: f64::NEG_INFINITY,
            min_f: f64::INFINITY,
            positive_samples: 0,
            nonpositive: true,
        };
        // roundoff allowance for forcings that vanish identically
        let tol = 1e-12;
        for p in pts {
            let f = self.f(p);
            audit.max_f = audit.max_f.max(f);
            audit.min_f = audit.min_f.min(f);
            if f > tol {
                audit.positive_samples += 1;
            }
        }
        audit.nonpositive = audit.positive_samples == 0;
        audit
    }

    /// Checks `D^2 u > 0` on the closure of `domain` (sampled).
    pub fn check_convex_on(&self, domain: &Domain) -> Result<()> {
        let mut pts = sample_points(domain, 4000);
        pts.extend(domain.boundary_samples(512));
        for p in pts {
            if !self.hessian(p).is_positive_definite() {
                return Err(Error::NonConvexProfile(format!(
                    "{}: Hessian not positive definite at {p}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    fn shared(&self) -> Arc<ExactSolution> {
        Arc::new(self.clone())
    }

    pub fn u_trace(&self) -> Trace {
        let s = self.shared();
        trace(move |p| s.u(p))
    }

    pub fn w_trace(&self) -> Trace {
        let s = self.shared();
        trace(move |p| s.w(p))
    }

    pub fn f_trace(&self) -> Trace {
        let s = self.shared();
        trace(move |p| s.f(p))
    }

    pub fn g_trace(&self) -> Trace {
        let s = self.shared();
        trace(move |p| s.g(p))
    }

    pub fn u_field(&self, grid: Arc<Grid>) -> ScalarField {
        ScalarField::from_trace(grid, self.u_trace())
    }

    pub fn w_field(&self, grid: Arc<Grid>) -> ScalarField {
        ScalarField::from_trace(grid, self.w_trace())
    }

    pub fn f_field(&self, grid: Arc<Grid>) -> ScalarField {
        ScalarField::from_trace(grid, self.f_trace())
    }
}

/// Lattice points inside `domain`, roughly `n` of them.
pub fn sample_points(domain: &Domain, n: usize) -> Vec<Point> {
    let (lo, hi) = domain.bounding_box();
    let area = domain.area();
    let step = (area / n as f64).sqrt();
    let mut pts = Vec::with_capacity(n + n / 8);
    let mut y = lo.y + 0.5 * step;
    while y < hi.y {
        let mut x = lo.x + 0.5 * step;
        while x < hi.x {
            let p = Point::new(x, y);
            if domain.contains(p) {
                pts.push(p);
            }
            x += step;
        }
        y += step;
    }
    pts
}

fn r2() -> Poly2 {
    &(&Poly2::x() * &Poly2::x()) + &(&Poly2::y() * &Poly2::y())
}

/// `u = c1 r^2 / 2 + c2 r^4 / 4`, with `det D^2 u = (c1 + 3 c2 r^2)(c1 + c2 r^2)`.
pub fn radial_solution(c1: f64, c2: f64, theta: f64) -> Result<ExactSolution> {
    if !(c1 > 0.0) || !(c2 >= 0.0) || !c1.is_finite() || !c2.is_finite() {
        return Err(Error::NonConvexProfile(format!(
            "radial profile needs c1 > 0 and c2 >= 0, got c1 = {c1}, c2 = {c2}"
        )));
    }
    let t = r2();
    let u = &t.scale(0.5 * c1) + &t.pow(2).scale(0.25 * c2);
    Ok(ExactSolution::polynomial(format!("radial({c1}, {c2})"), u, theta))
}

/// `u = |A x|^2 / 2` for a unimodular `A`.
pub fn sheared_quadratic(a: Mat2, theta: f64) -> Result<ExactSolution> {
    if (a.det() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidShear(a.det()));
    }
    let (x, y) = (Poly2::x(), Poly2::y());
    let ax = &x.scale(a.a) + &y.scale(a.b);
    let ay = &x.scale(a.c) + &y.scale(a.d);
    let u = (&(&ax * &ax) + &(&ay * &ay)).scale(0.5);
    Ok(ExactSolution::polynomial(
        format!("sheared([[{}, {}], [{}, {}]])", a.a, a.b, a.c, a.d),
        u,
        theta,
    ))
}

/// `u = (a x^2 + b y^2) / 2`.
pub fn diagonal_quadratic(a: f64, b: f64, theta: f64) -> Result<ExactSolution> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::NonConvexProfile(format!(
            "diagonal quadratic needs positive coefficients, got ({a}, {b})"
        )));
    }
    let u = Poly2::from_terms([(2, 0, 0.5 * a), (0, 2, 0.5 * b)]);
    Ok(ExactSolution::polynomial(format!("diag({a}, {b})"), u, theta))
}

/// Symbolic forcing of `exact` at exponent `theta`.
pub fn forcing_from_exact(exact: &ExactSolution, theta: f64) -> Trace {
    let s = exact.with_theta(theta);
    trace(move |p| s.f(p))
}

/// Names accepted by [`fixture`].
pub const FIXTURES: [&str; 5] = ["paraboloid", "radial", "radial_mild", "sheared", "diag"];

/// The shipped fixture library.
pub fn fixture(name: &str, theta: f64) -> Result<ExactSolution> {
    let mut s = match name {
        "paraboloid" => radial_solution(1.0, 0.0, theta)?,
        "radial" => radial_solution(1.0, 1.0, theta)?,
        "radial_mild" => radial_solution(1.0, 0.25, theta)?,
        "sheared" => sheared_quadratic(Mat2::new(1.0, 0.5, 0.0, 1.0), theta)?,
        "diag" => diagonal_quadratic(4.0, 1.0, theta)?,
        other => {
            return Err(Error::InvalidProblem(format!(
                "unknown fixture {other:?}; known fixtures: {}",
                FIXTURES.join(", ")
            )))
        }
    };
    s.name = name.to_string();
    Ok(s)
}
