//! Small dense 2x2 matrices.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

use crate::geometry::Point;

/// Symmetric 2x2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    /// Cofactor matrix; for a 2x2 matrix this is also the adjugate.
    pub fn cofactor(&self) -> Self {
        Self::new(self.yy, -self.xy, self.xx)
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == 0.0 || !d.is_finite() {
            return None;
        }
        Some(self.cofactor().scale(1.0 / d))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.xx * s, self.xy * s, self.yy * s)
    }

    /// Frobenius-type contraction `sum_ij A_ij B_ij`.
    pub fn contract(&self, other: &Sym2) -> f64 {
        self.xx * other.xx + 2.0 * self.xy * other.xy + self.yy * other.yy
    }

    pub fn quad_form(&self, v: Point) -> f64 {
        self.xx * v.x * v.x + 2.0 * self.xy * v.x * v.y + self.yy * v.y * v.y
    }

    pub fn apply(&self, v: Point) -> Point {
        Point::new(self.xx * v.x + self.xy * v.y, self.xy * v.x + self.yy * v.y)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        (mean - r, mean + r)
    }

    /// Unit eigenvector for the smaller eigenvalue, then for the larger.
    pub fn eigenvectors(&self) -> (Point, Point) {
        let theta = 0.5 * (2.0 * self.xy).atan2(self.xx - self.yy);
        let big = Point::new(theta.cos(), theta.sin());
        let small = Point::new(-theta.sin(), theta.cos());
        (small, big)
    }

    /// Principal square root of a positive semidefinite matrix.
    pub fn sqrt(&self) -> Self {
        let (l0, l1) = self.eigenvalues();
        let (v0, v1) = self.eigenvectors();
        let (s0, s1) = (l0.max(0.0).sqrt(), l1.max(0.0).sqrt());
        Self::new(
            s0 * v0.x * v0.x + s1 * v1.x * v1.x,
            s0 * v0.x * v0.y + s1 * v1.x * v1.y,
            s0 * v0.y * v0.y + s1 * v1.y * v1.y,
        )
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().0
    }

    pub fn is_positive_definite(&self) -> bool {
        self.xx > 0.0 && self.det() > 0.0
    }

    /// Raises both eigenvalues to at least `floor`, keeping eigenvectors.
    pub fn clamp_eigenvalues(&self, floor: f64) -> Self {
        let (l0, l1) = self.eigenvalues();
        if l0 >= floor {
            return *self;
        }
        let (v0, v1) = self.eigenvectors();
        let l0 = l0.max(floor);
        let l1 = l1.max(floor);
        Self::new(
            l0 * v0.x * v0.x + l1 * v1.x * v1.x,
            l0 * v0.x * v0.y + l1 * v1.x * v1.y,
            l0 * v0.y * v0.y + l1 * v1.y * v1.y,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite()
    }

    /// `R^T S R` for a general matrix `R`.
    pub fn congruence(&self, r: &Mat2) -> Sym2 {
        let m = r.transpose() * Mat2::from(*self) * *r;
        Sym2::new(m.a, 0.5 * (m.b + m.c), m.d)
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

/// General 2x2 matrix `[[a, b], [c, d]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mat2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
}

impl Mat2 {
    pub const IDENTITY: Mat2 = Mat2::new(1.0, 0.0, 0.0, 1.0);

    pub const fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self { a, b, c, d }
    }

    /// Rotation taking `e2` onto the unit vector `n`.
    pub fn rotation_to(n: Point) -> Self {
        // columns: (n.y, -n.x) and n
        Self::new(n.y, n.x, -n.x, n.y)
    }

    pub fn det(&self) -> f64 {
        self.a * self.d - self.b * self.c
    }

    pub fn transpose(&self) -> Self {
        Self::new(self.a, self.c, self.b, self.d)
    }

    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Self::new(
            self.d / det,
            -self.b / det,
            -self.c / det,
            self.a / det,
        ))
    }

    pub fn apply(&self, v: Point) -> Point {
        Point::new(self.a * v.x + self.b * v.y, self.c * v.x + self.d * v.y)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::new(self.a * s, self.b * s, self.c * s, self.d * s)
    }

    /// Spectral norm.
    pub fn norm(&self) -> f64 {
        let ata = Sym2::new(
            self.a * self.a + self.c * self.c,
            self.a * self.b + self.c * self.d,
            self.b * self.b + self.d * self.d,
        );
        ata.eigenvalues().1.max(0.0).sqrt()
    }
}

impl From<Sym2> for Mat2 {
    fn from(s: Sym2) -> Self {
        Mat2::new(s.xx, s.xy, s.xy, s.yy)
    }
}

impl Mul for Mat2 {
    type Output = Mat2;
    fn mul(self, o: Mat2) -> Mat2 {
        Mat2::new(
            self.a * o.a + self.b * o.c,
            self.a * o.b + self.b * o.d,
            self.c * o.a + self.d * o.c,
            self.c * o.b + self.d * o.d,
        )
    }
}
