//! Uniformly convex planar domains and the lattice grids built on them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::calculus::{self, NodeStencil};
use crate::error::{Error, Result};
use crate::matrix::{Mat2, Sym2};
use crate::poly::Poly2;

/// Tolerance for locating grid-line crossings of the boundary.
pub const BISECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn norm2(self) -> f64 {
        self.dot(self)
    }

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn normalized(self) -> Point {
        self * (1.0 / self.norm())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl From<[f64; 2]> for Point {
    fn from(a: [f64; 2]) -> Self {
        Point::new(a[0], a[1])
    }
}

/// A defining function `F` with `Omega = {F < 0}`.
pub trait LevelFunction: Send + Sync + fmt::Debug {
    fn value(&self, p: Point) -> f64;
    fn gradient(&self, p: Point) -> Point;
    fn hessian(&self, p: Point) -> Sym2;
}

/// Polynomial defining function with exact derivatives.
#[derive(Debug, Clone)]
pub struct PolyLevel {
    f: Poly2,
    fx: Poly2,
    fy: Poly2,
    fxx: Poly2,
    fxy: Poly2,
    fyy: Poly2,
}

impl PolyLevel {
    pub fn new(f: Poly2) -> Self {
        Self {
            fx: f.derivative(1, 0),
            fy: f.derivative(0, 1),
            fxx: f.derivative(2, 0),
            fxy: f.derivative(1, 1),
            fyy: f.derivative(0, 2),
            f,
        }
    }

    pub fn poly(&self) -> &Poly2 {
        &self.f
    }
}

impl LevelFunction for PolyLevel {
    fn value(&self, p: Point) -> f64 {
        self.f.eval(p)
    }
    fn gradient(&self, p: Point) -> Point {
        Point::new(self.fx.eval(p), self.fy.eval(p))
    }
    fn hessian(&self, p: Point) -> Sym2 {
        Sym2::new(self.fxx.eval(p), self.fxy.eval(p), self.fyy.eval(p))
    }
}

/// `F(T x)` for an affine map `T x = offset + linear x`.
#[derive(Debug, Clone)]
pub struct AffinePullback {
    inner: Arc<dyn LevelFunction>,
    offset: Point,
    linear: Mat2,
}

impl AffinePullback {
    pub fn new(inner: Arc<dyn LevelFunction>, offset: Point, linear: Mat2) -> Self {
        Self {
            inner,
            offset,
            linear,
        }
    }

    fn map(&self, p: Point) -> Point {
        self.offset + self.linear.apply(p)
    }
}

impl LevelFunction for AffinePullback {
    fn value(&self, p: Point) -> f64 {
        self.inner.value(self.map(p))
    }
    fn gradient(&self, p: Point) -> Point {
        self.linear.transpose().apply(self.inner.gradient(self.map(p)))
    }
    fn hessian(&self, p: Point) -> Sym2 {
        self.inner.hessian(self.map(p)).congruence(&self.linear)
    }
}

#[derive(Debug, Clone)]
pub enum DomainShape {
    Disk { center: Point, radius: f64 },
    /// Axis-aligned ellipse.
    Ellipse { center: Point, semi_axes: [f64; 2] },
    /// `{F < 0}` for a user-supplied `F`; `center` must lie inside.
    LevelSet {
        center: Point,
        function: Arc<dyn LevelFunction>,
    },
}

/// Serializable description of a domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase", deny_unknown_fields)]
pub enum DomainSpec {
    Disk {
        #[serde(default)]
        center: [f64; 2],
        radius: f64,
    },
    Ellipse {
        #[serde(default)]
        center: [f64; 2],
        semi_axes: [f64; 2],
    },
    #[serde(rename = "levelset")]
    LevelSet {
        #[serde(default)]
        center: [f64; 2],
        /// Monomials `(i, j, c)` of `F = sum c x^i y^j`.
        terms: Vec<(u32, u32, f64)>,
    },
}

impl DomainSpec {
    pub fn build(&self) -> Result<Domain> {
        match self {
            DomainSpec::Disk { center, radius } => Domain::disk((*center).into(), *radius),
            DomainSpec::Ellipse { center, semi_axes } => {
                Domain::ellipse((*center).into(), *semi_axes)
            }
            DomainSpec::LevelSet { center, terms } => Domain::level_set(
                (*center).into(),
                Arc::new(PolyLevel::new(Poly2::from_terms(terms.iter().copied()))),
            ),
        }
    }
}

/// A bounded, uniformly convex planar domain.
#[derive(Debug, Clone)]
pub struct Domain {
    shape: DomainShape,
    rho_dom: f64,
    inner_radius: f64,
    outer_radius: f64,
    diameter: f64,
    bbox: (Point, Point),
}

const BOUNDARY_SAMPLES: usize = 2048;

impl Domain {
    pub fn unit_disk() -> Self {
        Self::disk(Point::ORIGIN, 1.0).expect("unit disk is valid")
    }

    pub fn disk(center: Point, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "disk radius must be positive and finite, got {radius}"
            )));
        }
        Ok(Self::finish(DomainShape::Disk { center, radius }))
    }

    pub fn ellipse(center: Point, semi_axes: [f64; 2]) -> Result<Self> {
        let [a, b] = semi_axes;
        if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) || !center.is_finite() {
            return Err(Error::InvalidDomain(format!(
                "ellipse semi-axes must be positive and finite, got ({a}, {b})"
            )));
        }
        Ok(Self::finish(DomainShape::Ellipse { center, semi_axes }))
    }

    /// Level-set domain. The defining function must be negative at
    /// `center`, grow to a positive value along every ray, and have a
    /// positive-definite Hessian on the closure.
    pub fn level_set(center: Point, function: Arc<dyn LevelFunction>) -> Result<Self> {
        if !(function.value(center) < 0.0) {
            return Err(Error::InvalidDomain(format!(
                "level function must be negative at the center {center}"
            )));
        }
        let shape = DomainShape::LevelSet {
            center,
            function: function.clone(),
        };
        // every ray must leave the region
        for k in 0..256 {
            let t = 2.0 * PI * k as f64 / 256.0;
            ray_exit(&shape, t)?;
        }
        let domain = Self::finish(shape);
        // convexity of F on the closure: boundary samples plus an interior lattice
        let (lo, hi) = domain.bbox;
        let mut probes = domain.boundary_samples(512);
        for i in 0..=32 {
            for j in 0..=32 {
                let p = Point::new(
                    lo.x + (hi.x - lo.x) * i as f64 / 32.0,
                    lo.y + (hi.y - lo.y) * j as f64 / 32.0,
                );
                if domain.contains(p) {
                    probes.push(p);
                }
            }
        }
        for p in probes {
            let hess = function.hessian(p);
            if !hess.is_finite() || !hess.is_positive_definite() {
                return Err(Error::InvalidDomain(format!(
                    "level function Hessian is not positive definite at {p}"
                )));
            }
        }
        if !(domain.rho_dom > 0.0 && domain.rho_dom.is_finite()) {
            return Err(Error::InvalidDomain(
                "boundary curvature is not bounded below by a positive constant".into(),
            ));
        }
        Ok(domain)
    }

    fn finish(shape: DomainShape) -> Self {
        let mut d = Domain {
            shape,
            rho_dom: 0.0,
            inner_radius: 0.0,
            outer_radius: 0.0,
            diameter: 0.0,
            bbox: (Point::ORIGIN, Point::ORIGIN),
        };
        let samples = d.boundary_samples(BOUNDARY_SAMPLES);
        let c = d.center();
        let (mut lo, mut hi) = (samples[0], samples[0]);
        let mut outer: f64 = 0.0;
        let mut inner = f64::INFINITY;
        for &p in &samples {
            lo = Point::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Point::new(hi.x.max(p.x), hi.y.max(p.y));
            outer = outer.max(p.dist(c));
            inner = inner.min(p.dist(c));
        }
        d.bbox = (lo, hi);
        d.outer_radius = outer;
        d.inner_radius = inner;
        d.diameter = match d.shape {
            DomainShape::Disk { radius, .. } => 2.0 * radius,
            DomainShape::Ellipse { semi_axes, .. } => 2.0 * semi_axes[0].max(semi_axes[1]),
            DomainShape::LevelSet { .. } => {
                // antipodal search over the convex boundary
                let mut diam: f64 = 0.0;
                for (k, &p) in samples.iter().enumerate().step_by(4) {
                    for &q in &samples[k..] {
                        diam = diam.max(p.dist(q));
                    }
                }
                diam
            }
        };
        d.rho_dom = match d.shape {
            DomainShape::Disk { radius, .. } => radius,
            DomainShape::Ellipse { semi_axes, .. } => {
                let (a, b) = (semi_axes[0].max(semi_axes[1]), semi_axes[0].min(semi_axes[1]));
                b * b / a
            }
            DomainShape::LevelSet { .. } => {
                let kmax = samples
                    .iter()
                    .map(|&p| d.curvature(p))
                    .fold(0.0_f64, f64::max);
                let kmin = samples
                    .iter()
                    .map(|&p| d.curvature(p))
                    .fold(f64::INFINITY, f64::min);
                if kmin > 0.0 {
                    1.0 / kmax
                } else {
                    0.0
                }
            }
        };
        d
    }

    pub fn shape(&self) -> &DomainShape {
        &self.shape
    }

    pub fn center(&self) -> Point {
        match self.shape {
            DomainShape::Disk { center, .. }
            | DomainShape::Ellipse { center, .. }
            | DomainShape::LevelSet { center, .. } => center,
        }
    }

    /// Largest radius of an interior disk tangent at every boundary point:
    /// the minimum radius of curvature of the boundary.
    pub fn rho_dom(&self) -> f64 {
        self.rho_dom
    }

    /// Radius of the smallest disk about the center containing the domain.
    pub fn outer_radius(&self) -> f64 {
        self.outer_radius
    }

    /// Distance from the center to the boundary.
    pub fn inner_radius(&self) -> f64 {
        self.inner_radius
    }

    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        self.bbox
    }

    pub fn area(&self) -> f64 {
        match self.shape {
            DomainShape::Disk { radius, .. } => PI * radius * radius,
            DomainShape::Ellipse { semi_axes, .. } => PI * semi_axes[0] * semi_axes[1],
            DomainShape::LevelSet { .. } => polygon_area(&self.boundary_samples(BOUNDARY_SAMPLES)),
        }
    }

    /// Defining function, negative inside.
    pub fn level(&self, p: Point) -> f64 {
        match &self.shape {
            DomainShape::Disk { center, radius } => (p - *center).norm2() - radius * radius,
            DomainShape::Ellipse { center, semi_axes } => {
                let d = p - *center;
                (d.x / semi_axes[0]).powi(2) + (d.y / semi_axes[1]).powi(2) - 1.0
            }
            DomainShape::LevelSet { function, .. } => function.value(p),
        }
    }

    pub fn level_gradient(&self, p: Point) -> Point {
        match &self.shape {
            DomainShape::Disk { center, .. } => (p - *center) * 2.0,
            DomainShape::Ellipse { center, semi_axes } => {
                let d = p - *center;
                Point::new(
                    2.0 * d.x / (semi_axes[0] * semi_axes[0]),
                    2.0 * d.y / (semi_axes[1] * semi_axes[1]),
                )
            }
            DomainShape::LevelSet { function, .. } => function.gradient(p),
        }
    }

    pub fn level_hessian(&self, p: Point) -> Sym2 {
        match &self.shape {
            DomainShape::Disk { .. } => Sym2::diag(2.0, 2.0),
            DomainShape::Ellipse { semi_axes, .. } => Sym2::diag(
                2.0 / (semi_axes[0] * semi_axes[0]),
                2.0 / (semi_axes[1] * semi_axes[1]),
            ),
            DomainShape::LevelSet { function, .. } => function.hessian(p),
        }
    }

    /// Defining function as a shareable trait object.
    pub fn level_function(&self) -> Arc<dyn LevelFunction> {
        match &self.shape {
            DomainShape::LevelSet { function, .. } => function.clone(),
            DomainShape::Disk { center, radius } => {
                let x = &Poly2::x() - &Poly2::constant(center.x);
                let y = &Poly2::y() - &Poly2::constant(center.y);
                let f = &(&(&x * &x) + &(&y * &y)) - &Poly2::constant(radius * radius);
                Arc::new(PolyLevel::new(f))
            }
            DomainShape::Ellipse { center, semi_axes } => {
                let x = (&Poly2::x() - &Poly2::constant(center.x)).scale(1.0 / semi_axes[0]);
                let y = (&Poly2::y() - &Poly2::constant(center.y)).scale(1.0 / semi_axes[1]);
                let f = &(&(&x * &x) + &(&y * &y)) - &Poly2::constant(1.0);
                Arc::new(PolyLevel::new(f))
            }
        }
    }

    /// Preimage of the domain under `x -> offset + linear x`.
    pub fn affine_preimage(&self, offset: Point, linear: Mat2) -> Result<Domain> {
        let inv = linear
            .inverse()
            .ok_or_else(|| Error::InvalidDomain("singular affine map".into()))?;
        let center = inv.apply(self.center() - offset);
        Domain::level_set(
            center,
            Arc::new(AffinePullback::new(self.level_function(), offset, linear)),
        )
    }

    pub fn contains(&self, p: Point) -> bool {
        self.level(p) < 0.0
    }

    /// Outward unit normal at (or near) a boundary point.
    pub fn outward_normal(&self, p: Point) -> Point {
        self.level_gradient(p).normalized()
    }

    /// Curvature of the level curve through `p`.
    pub fn curvature(&self, p: Point) -> f64 {
        let g = self.level_gradient(p);
        let h = self.level_hessian(p);
        let num = g.y * g.y * h.xx - 2.0 * g.x * g.y * h.xy + g.x * g.x * h.yy;
        num / g.norm().powi(3)
    }

    /// Boundary point on the ray from the center at angle `t`.
    pub fn boundary_point(&self, t: f64) -> Point {
        match &self.shape {
            DomainShape::Disk { center, radius } => *center + Point::new(t.cos(), t.sin()) * *radius,
            DomainShape::Ellipse { center, semi_axes } => {
                let (c, s) = (t.cos(), t.sin());
                let r = 1.0 / ((c / semi_axes[0]).powi(2) + (s / semi_axes[1]).powi(2)).sqrt();
                *center + Point::new(c, s) * r
            }
            DomainShape::LevelSet { center, .. } => {
                let r = ray_exit(&self.shape, t).expect("validated at construction");
                *center + Point::new(t.cos(), t.sin()) * r
            }
        }
    }

    pub fn boundary_samples(&self, n: usize) -> Vec<Point> {
        (0..n)
            .map(|k| self.boundary_point(2.0 * PI * k as f64 / n as f64))
            .collect()
    }

    /// Euclidean distance from `p` to the boundary.
    pub fn distance_to_boundary(&self, p: Point) -> f64 {
        self.nearest_boundary_point(p).dist(p)
    }

    pub fn nearest_boundary_point(&self, p: Point) -> Point {
        if let DomainShape::Disk { center, radius } = self.shape {
            let d = p - center;
            let r = d.norm();
            if r > 0.0 {
                return center + d * (radius / r);
            }
            return center + Point::new(radius, 0.0);
        }
        let n = 1024;
        let step = 2.0 * PI / n as f64;
        let (mut best_t, mut best) = (0.0, f64::INFINITY);
        for k in 0..n {
            let t = step * k as f64;
            let d = self.boundary_point(t).dist(p);
            if d < best {
                best = d;
                best_t = t;
            }
        }
        // golden-section refinement on the bracketing interval
        let gr = 0.5 * (5f64.sqrt() - 1.0);
        let (mut a, mut b) = (best_t - step, best_t + step);
        let f = |t: f64| self.boundary_point(t).dist(p);
        let mut c = b - gr * (b - a);
        let mut d = a + gr * (b - a);
        let (mut fc, mut fd) = (f(c), f(d));
        while b - a > 1e-13 {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - gr * (b - a);
                fc = f(c);
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + gr * (b - a);
                fd = f(d);
            }
        }
        self.boundary_point(0.5 * (a + b))
    }

    /// Fraction `t` in (0, 1] along `inside -> outside` where the segment
    /// crosses the boundary, by bisection on the defining function.
    pub fn crossing_fraction(&self, inside: Point, outside: Point) -> f64 {
        if self.level(outside) == 0.0 {
            return 1.0;
        }
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        while hi - lo > BISECTION_TOL {
            let mid = 0.5 * (lo + hi);
            let q = inside + (outside - inside) * mid;
            if self.level(q) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

fn ray_exit(shape: &DomainShape, t: f64) -> Result<f64> {
    let DomainShape::LevelSet { center, function } = shape else {
        unreachable!("only level sets need a numerical ray search")
    };
    let dir = Point::new(t.cos(), t.sin());
    let at = |r: f64| function.value(*center + dir * r);
    let mut hi = 1e-3;
    while at(hi) < 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::InvalidDomain(format!(
                "level set is unbounded along direction {dir}"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if at(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= BISECTION_TOL * hi.max(1.0) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for k in 0..n {
        let (p, q) = (poly[k], poly[(k + 1) % n]);
        s += p.x * q.y - q.x * p.y;
    }
    0.5 * s.abs()
}

/// Lattice offsets of the eight stencil directions. Opposite directions are
/// adjacent: (0, 1) is the x line, (2, 3) the y line, (4, 5) the main
/// diagonal and (6, 7) the anti-diagonal.
pub const DIRECTIONS: [(i64, i64); 8] = [
    (1, 0),
    (-1, 0),
    (0, 1),
    (0, -1),
    (1, 1),
    (-1, -1),
    (1, -1),
    (-1, 1),
];

/// Where a stencil arm ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Link {
    Node(usize),
    Hit(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub i: i64,
    pub j: i64,
    pub point: Point,
}

/// Intersection of a grid line leaving `node` in `direction` with the boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryHit {
    pub node: usize,
    pub direction: usize,
    /// Fraction of the arm length (h on axes, h*sqrt(2) on diagonals), in (0, 1].
    pub fraction: f64,
    pub point: Point,
}

/// Lattice points `(i h, j h)` strictly inside the domain, with boundary
/// crossings for every arm that leaves it.
#[derive(Debug, Clone)]
pub struct Grid {
    domain: Domain,
    h: f64,
    nodes: Vec<Node>,
    index: HashMap<(i64, i64), usize>,
    links: Vec<[Link; 8]>,
    hits: Vec<BoundaryHit>,
    stencils: Vec<NodeStencil>,
}

impl Grid {
    pub fn new(domain: Domain, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::InvalidGrid(format!(
                "grid spacing must be positive, got {h}"
            )));
        }
        if h >= domain.diameter() / 4.0 {
            log::warn!(
                "grid spacing {h} is coarse relative to the domain diameter {}",
                domain.diameter()
            );
        }
        let (lo, hi) = domain.bounding_box();
        let (i0, i1) = ((lo.x / h).floor() as i64 - 1, (hi.x / h).ceil() as i64 + 1);
        let (j0, j1) = ((lo.y / h).floor() as i64 - 1, (hi.y / h).ceil() as i64 + 1);
        let mut nodes = Vec::new();
        let mut index = HashMap::new();
        for j in j0..=j1 {
            for i in i0..=i1 {
                let p = Point::new(i as f64 * h, j as f64 * h);
                if domain.contains(p) {
                    index.insert((i, j), nodes.len());
                    nodes.push(Node { i, j, point: p });
                }
            }
        }
        if nodes.is_empty() {
            return Err(Error::EmptyGrid { h });
        }
        let mut links = Vec::with_capacity(nodes.len());
        let mut hits = Vec::new();
        for (k, node) in nodes.iter().enumerate() {
            let mut row = [Link::Node(0); 8];
            for (d, &(di, dj)) in DIRECTIONS.iter().enumerate() {
                row[d] = match index.get(&(node.i + di, node.j + dj)) {
                    Some(&m) => Link::Node(m),
                    None => {
                        let q = Point::new((node.i + di) as f64 * h, (node.j + dj) as f64 * h);
                        let fraction = domain.crossing_fraction(node.point, q);
                        hits.push(BoundaryHit {
                            node: k,
                            direction: d,
                            fraction,
                            point: node.point + (q - node.point) * fraction,
                        });
                        Link::Hit(hits.len() - 1)
                    }
                };
            }
            links.push(row);
        }
        let mut grid = Grid {
            domain,
            h,
            nodes,
            index,
            links,
            hits,
            stencils: Vec::new(),
        };
        grid.stencils = calculus::build_stencils(&grid);
        Ok(grid)
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn point(&self, k: usize) -> Point {
        self.nodes[k].point
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.nodes.iter().map(|n| n.point)
    }

    pub fn index_of(&self, i: i64, j: i64) -> Option<usize> {
        self.index.get(&(i, j)).copied()
    }

    /// Node at a lattice point, if `p` is one (to 1e-9 relative to h).
    pub fn node_at(&self, p: Point) -> Option<usize> {
        let (fi, fj) = (p.x / self.h, p.y / self.h);
        let (i, j) = (fi.round(), fj.round());
        if (fi - i).abs() > 1e-9 || (fj - j).abs() > 1e-9 {
            return None;
        }
        self.index_of(i as i64, j as i64)
    }

    pub fn links(&self, k: usize) -> &[Link; 8] {
        &self.links[k]
    }

    pub fn hits(&self) -> &[BoundaryHit] {
        &self.hits
    }

    pub fn stencil(&self, k: usize) -> &NodeStencil {
        &self.stencils[k]
    }

    /// All eight neighbors are grid nodes.
    pub fn is_full_stencil(&self, k: usize) -> bool {
        self.links[k].iter().all(|l| matches!(l, Link::Node(_)))
    }

    /// At least one arm ends on the boundary.
    pub fn touches_boundary(&self, k: usize) -> bool {
        !self.is_full_stencil(k)
    }

    /// Lattice index of the node `(di, dj)` steps away from node `k`.
    pub fn offset(&self, k: usize, di: i64, dj: i64) -> Option<usize> {
        let n = &self.nodes[k];
        self.index_of(n.i + di, n.j + dj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brute_force_count(domain: &Domain, h: f64) -> usize {
        let (lo, hi) = domain.bounding_box();
        let mut n = 0;
        let (i0, i1) = ((lo.x / h).floor() as i64 - 2, (hi.x / h).ceil() as i64 + 2);
        let (j0, j1) = ((lo.y / h).floor() as i64 - 2, (hi.y / h).ceil() as i64 + 2);
        for i in i0..=i1 {
            for j in j0..=j1 {
                let (x, y) = (i as f64 * h, j as f64 * h);
                if domain.contains(Point::new(x, y)) {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn rho_of_unit_disk_and_ellipse() {
        assert_eq!(Domain::unit_disk().rho_dom(), 1.0);
        let e = Domain::ellipse(Point::ORIGIN, [2.0, 1.0]).unwrap();
        assert!((e.rho_dom() - 0.5).abs() < 1e-15);
        assert!((e.outer_radius() - 2.0).abs() < 1e-12);
        assert!((e.diameter() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_ellipse_is_rejected() {
        let err = Domain::ellipse(Point::ORIGIN, [1.0, 0.0]).unwrap_err();
        assert!(matches!(err, Error::InvalidDomain(_)));
        assert!(Domain::disk(Point::ORIGIN, -1.0).is_err());
    }

    #[test]
    fn level_set_matches_ellipse_geometry() {
        let spec = DomainSpec::LevelSet {
            center: [0.0, 0.0],
            terms: vec![(2, 0, 0.25), (0, 2, 1.0), (0, 0, -1.0)],
        };
        let d = spec.build().unwrap();
        assert!((d.rho_dom() - 0.5).abs() < 1e-6);
        assert!((d.diameter() - 4.0).abs() < 1e-4);
    }

    #[test]
    fn non_convex_level_set_is_rejected() {
        // x^2 - y^2 - 1 is not convex, the region is unbounded anyway
        let f = PolyLevel::new(Poly2::from_terms([(2, 0, -1.0), (0, 2, 1.0), (0, 0, -1.0)]));
        assert!(Domain::level_set(Point::ORIGIN, Arc::new(f)).is_err());
        // quartic with a flat spot: x^4 + y^2 - 1 has zero curvature at (0, +-1)
        let f = PolyLevel::new(Poly2::from_terms([(4, 0, 1.0), (0, 2, 1.0), (0, 0, -1.0)]));
        assert!(Domain::level_set(Point::ORIGIN, Arc::new(f)).is_err());
    }

    #[test]
    fn unit_disk_half_spacing_has_nine_nodes() {
        let g = Grid::new(Domain::unit_disk(), 0.5).unwrap();
        assert_eq!(g.len(), 9);
    }

    #[test]
    fn coarse_grid_keeps_the_origin() {
        let g = Grid::new(Domain::unit_disk(), 3.0).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.hits().len(), 8);
    }

    #[test]
    fn grid_without_lattice_points_is_empty() {
        let d = Domain::disk(Point::new(0.5, 0.5), 0.3).unwrap();
        assert!(matches!(Grid::new(d, 1.0), Err(Error::EmptyGrid { .. })));
    }

    #[test]
    fn ellipse_node_count_matches_enumeration() {
        let d = Domain::ellipse(Point::ORIGIN, [2.0, 1.0]).unwrap();
        let g = Grid::new(d.clone(), 0.25).unwrap();
        assert_eq!(g.len(), brute_force_count(&d, 0.25));
    }

    #[test]
    fn index_map_is_a_bijection() {
        let g = Grid::new(Domain::unit_disk(), 0.1).unwrap();
        let mut seen = vec![false; g.len()];
        for n in g.nodes() {
            let k = g.index_of(n.i, n.j).unwrap();
            assert!(!seen[k]);
            seen[k] = true;
            assert_eq!(g.nodes()[k], *n);
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn hits_lie_on_the_boundary() {
        let d = Domain::ellipse(Point::new(0.1, -0.2), [1.3, 0.8]).unwrap();
        let g = Grid::new(d.clone(), 0.07).unwrap();
        for hit in g.hits() {
            assert!(hit.fraction > 0.0 && hit.fraction <= 1.0);
            assert!(d.level(hit.point).abs() < 1e-10, "{}", d.level(hit.point));
        }
    }

    #[test]
    fn refinement_quadruples_node_count() {
        let d = Domain::ellipse(Point::ORIGIN, [1.0, 0.7]).unwrap();
        let mut h = d.diameter() / 16.0;
        let mut prev = Grid::new(d.clone(), h).unwrap().len();
        for _ in 0..3 {
            h /= 2.0;
            let n = Grid::new(d.clone(), h).unwrap().len();
            assert!(n >= 4 * prev - 4 * (2.0 * PI / h) as usize / 4, "{n} vs {prev}");
            assert!(n as f64 >= 3.6 * prev as f64);
            prev = n;
        }
    }

    #[test]
    fn interior_tangent_disks_fit() {
        for d in [
            Domain::unit_disk(),
            Domain::ellipse(Point::ORIGIN, [2.0, 1.0]).unwrap(),
            Domain::ellipse(Point::new(0.3, 0.1), [0.5, 1.5]).unwrap(),
        ] {
            let rho = d.rho_dom();
            for p in d.boundary_samples(360) {
                let c = p - d.outward_normal(p) * rho;
                // the tangent disk stays inside: all boundary samples are at least rho away
                let closest = d
                    .boundary_samples(2000)
                    .into_iter()
                    .map(|q| q.dist(c))
                    .fold(f64::INFINITY, f64::min);
                assert!(closest >= rho * (1.0 - 1e-6), "{closest} < {rho}");
            }
        }
    }

    #[test]
    fn distance_to_boundary_of_ellipse() {
        let d = Domain::ellipse(Point::ORIGIN, [2.0, 1.0]).unwrap();
        assert!((d.distance_to_boundary(Point::ORIGIN) - 1.0).abs() < 1e-10);
        assert!((d.distance_to_boundary(Point::new(1.5, 0.0)) - 0.5).abs() < 1e-3);
        let u = Domain::unit_disk();
        assert!((u.distance_to_boundary(Point::new(0.5, 0.0)) - 0.5).abs() < 1e-15);
    }
}
