//! Sections `S_{x,h} = {y : u(y) < u(x) + Du(x) (y - x) + h}` of discrete
//! convex functions and their shape diagnostics.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::calculus::gradient_at;
use crate::ellipsoid::{convex_hull, dilation_factors, khachiyan, Ellipse};
use crate::error::{Error, Result};
use crate::field::{trace, ScalarField};
use crate::geometry::{Grid, Link, Point};
use crate::matrix::{Mat2, Sym2};

/// Sections with fewer nodes are too coarse for diagnostics.
pub const MIN_SECTION_NODES: usize = 12;
pub const KHACHIYAN_TOL: f64 = 1e-6;
pub const KHACHIYAN_MAX_ITER: usize = 10_000;
/// Relative tolerance of the maximal-height bisection.
pub const HEIGHT_TOL: f64 = 1e-6;
/// Boundary samples added to hulls and containment tests when the field
/// carries a callable trace.
const TRACE_SAMPLES: usize = 4096;

/// Nodes and boundary hits of a field with their values, bucketed by cell.
pub struct SampleIndex {
    cell: f64,
    buckets: HashMap<(i64, i64), Vec<usize>>,
    points: Vec<Point>,
    values: Vec<f64>,
}

impl SampleIndex {
    pub fn new(u: &ScalarField) -> Self {
        let grid = u.grid();
        let mut points: Vec<Point> = grid.points().collect();
        let mut values = u.values().to_vec();
        if let Some(b) = u.boundary() {
            points.extend(grid.hits().iter().map(|h| h.point));
            values.extend_from_slice(b);
        }
        Self::from_samples(points, values, grid.h())
    }

    pub fn from_samples(points: Vec<Point>, values: Vec<f64>, cell: f64) -> Self {
        let mut buckets: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
        for (k, p) in points.iter().enumerate() {
            buckets.entry(Self::key(cell, *p)).or_default().push(k);
        }
        Self {
            cell,
            buckets,
            points,
            values,
        }
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn key(cell: f64, p: Point) -> (i64, i64) {
        ((p.x / cell).floor() as i64, (p.y / cell).floor() as i64)
    }

    /// Indices of samples within distance `r` of `p`, in index order.
    pub fn within(&self, p: Point, r: f64) -> Vec<usize> {
        let (ci, cj) = Self::key(self.cell, p);
        let m = (r / self.cell).ceil() as i64;
        let mut out = Vec::new();
        for i in ci - m..=ci + m {
            for j in cj - m..=cj + m {
                if let Some(b) = self.buckets.get(&(i, j)) {
                    out.extend(b.iter().copied().filter(|&k| self.points[k].dist(p) <= r));
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Least-squares polynomial of total degree `degree` in `(z - p)`,
    /// from the nearest samples.
    pub fn fit(&self, p: Point, degree: u32) -> Result<LocalPoly> {
        let monomials: Vec<(u32, u32)> = (0..=degree)
            .flat_map(|d| (0..=d).map(move |j| (d - j, j)))
            .collect();
        let need = 2 * monomials.len();
        let mut r = 1.5 * self.cell * (degree.max(1) as f64);
        for _ in 0..12 {
            let idx = self.within(p, r);
            if idx.len() >= need {
                let scale = r;
                let a = DMatrix::from_fn(idx.len(), monomials.len(), |row, col| {
                    let z = (self.points[idx[row]] - p) * (1.0 / scale);
                    let (i, j) = monomials[col];
                    z.x.powi(i as i32) * z.y.powi(j as i32)
                });
                let b = DVector::from_iterator(idx.len(), idx.iter().map(|&k| self.values[k]));
                let svd = a.svd(true, true);
                let smax = svd.singular_values.max();
                if svd.singular_values.min() > 1e-10 * smax {
                    let c = svd
                        .solve(&b, 1e-14 * smax)
                        .map_err(|e| Error::InsufficientData(e.to_string()))?;
                    let coeffs = monomials
                        .iter()
                        .zip(c.iter())
                        .map(|(&(i, j), &v)| (i, j, v / scale.powi((i + j) as i32)))
                        .collect();
                    return Ok(LocalPoly { origin: p, coeffs });
                }
            }
            r *= 1.5;
        }
        Err(Error::OutOfDomain(p))
    }
}

/// Polynomial in `(z - origin)`.
#[derive(Debug, Clone)]
pub struct LocalPoly {
    origin: Point,
    coeffs: Vec<(u32, u32, f64)>,
}

impl LocalPoly {
    pub fn eval(&self, z: Point) -> f64 {
        let d = z - self.origin;
        self.coeffs
            .iter()
            .map(|&(i, j, c)| c * d.x.powi(i as i32) * d.y.powi(j as i32))
            .sum()
    }

    pub fn value(&self) -> f64 {
        self.coeff(0, 0)
    }

    pub fn gradient(&self) -> Point {
        Point::new(self.coeff(1, 0), self.coeff(0, 1))
    }

    fn coeff(&self, i: u32, j: u32) -> f64 {
        self.coeffs
            .iter()
            .find(|c| c.0 == i && c.1 == j)
            .map_or(0.0, |c| c.2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub center: Point,
    pub height: f64,
    pub value: f64,
    /// Slope of the supporting plane at the center.
    pub slope: Point,
    pub on_boundary: bool,
    /// Inner normal for boundary centers, `e2` otherwise.
    pub normal: Point,
    pub node_set: Vec<usize>,
    /// Counter-clockwise hull of the section, refined with sub-grid crossings.
    pub hull: Vec<Point>,
    /// Height below `4 h_grid^2 lambda_max` of the local Hessian.
    pub below_floor: bool,
}

impl Section {
    pub fn contains_node(&self, k: usize) -> bool {
        self.node_set.binary_search(&k).is_ok()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidFit {
    pub ellipse: Ellipse,
    pub area: f64,
    /// `area / (pi h)`.
    pub vol_ratio: f64,
    /// Sliding map `A_h x = x - tau x_2` in the frame whose second axis is
    /// the section normal.
    pub a_h: Mat2,
    pub tau: f64,
    /// Diagonal factor: the shape matrix in the normal frame is `A^T D A`.
    pub diagonal: (f64, f64),
    pub k_inner: f64,
    pub k_outer: f64,
    pub normal: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaximalSection {
    pub center: Point,
    pub hbar: f64,
    /// Boundary point where the section first touches the boundary.
    pub touching: Point,
    /// `dist(center, boundary)`.
    pub dist: f64,
}

/// Value and slope of `u` at `x`: nodal data and centered differences at
/// nodes, local quadratic fits elsewhere (one-sided near the boundary).
pub fn support_plane(u: &ScalarField, index: &SampleIndex, x: Point) -> Result<(f64, Point)> {
    let grid = u.grid();
    if let Some(k) = grid.node_at(x) {
        return Ok((u.values()[k], gradient_at(u, k)));
    }
    let fit = index.fit(x, 2)?;
    let on_boundary = grid.domain().level(x).abs() < 1e-9;
    let value = match (on_boundary, u.trace()) {
        (true, Some(t)) => t(x),
        _ => fit.value(),
    };
    Ok((value, fit.gradient()))
}

fn check_closure(grid: &Grid, x: Point) -> Result<bool> {
    let d = grid.domain();
    let level = d.level(x);
    let tol = 1e-9 * d.level_gradient(x).norm().max(1.0);
    if level > tol {
        return Err(Error::OutOfDomain(x));
    }
    Ok(level.abs() <= tol)
}

pub fn extract_section(u: &ScalarField, x: Point, h: f64) -> Result<Section> {
    extract_section_with(u, &SampleIndex::new(u), x, h)
}

pub fn extract_section_with(u: &ScalarField, index: &SampleIndex, x: Point, h: f64) -> Result<Section> {
    let grid = u.grid();
    if u.boundary().is_none() {
        return Err(Error::IncompleteData("sections need boundary values".into()));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidProblem(format!("section height must be positive, got {h}")));
    }
    let on_boundary = check_closure(grid, x)?;
    let (value, slope) = support_plane(u, index, x)?;
    let phi = |p: Point, v: f64| v - value - slope.dot(p - x) - h;

    let node_phi: Vec<f64> = grid
        .points()
        .zip(u.values())
        .map(|(p, &v)| phi(p, v))
        .collect();
    let node_set: Vec<usize> = (0..grid.len()).filter(|&k| node_phi[k] < 0.0).collect();
    let mut pts: Vec<Point> = node_set.iter().map(|&k| grid.point(k)).collect();
    let boundary = u.boundary().expect("checked above");
    for &k in &node_set {
        let p = grid.point(k);
        for link in grid.links(k) {
            let (q, fq) = match *link {
                Link::Node(m) => (grid.point(m), node_phi[m]),
                Link::Hit(m) => {
                    let q = grid.hits()[m].point;
                    (q, phi(q, boundary[m]))
                }
            };
            if fq < 0.0 {
                if matches!(link, Link::Hit(_)) {
                    pts.push(q);
                }
                continue;
            }
            let t = node_phi[k] / (node_phi[k] - fq);
            pts.push(p + (q - p) * t);
        }
    }
    if on_boundary {
        pts.push(x);
    }
    if let Some(t) = u.trace() {
        for b in grid.domain().boundary_samples(TRACE_SAMPLES) {
            if phi(b, t(b)) < 0.0 {
                pts.push(b);
            }
        }
    }
    let hull = convex_hull(&pts);
    let normal = if on_boundary {
        grid.domain().outward_normal(x) * -1.0
    } else {
        Point::new(0.0, 1.0)
    };
    let lambda_max = local_lambda_max(index, x)?;
    let below_floor = h <= 4.0 * grid.h() * grid.h() * lambda_max;
    if below_floor || node_set.is_empty() {
        log::warn!("section at {x} with height {h} is below the grid resolution");
    }
    Ok(Section {
        center: x,
        height: h,
        value,
        slope,
        on_boundary,
        normal,
        node_set,
        hull,
        below_floor,
    })
}

fn local_lambda_max(index: &SampleIndex, x: Point) -> Result<f64> {
    let fit = index.fit(x, 2)?;
    let hess = Sym2::new(2.0 * fit.coeff(2, 0), fit.coeff(1, 1), 2.0 * fit.coeff(0, 2));
    Ok(hess.eigenvalues().1.max(0.0))
}

pub fn fit_john_ellipsoid(section: &Section) -> Result<EllipsoidFit> {
    fit_john_ellipsoid_with(section, KHACHIYAN_TOL, KHACHIYAN_MAX_ITER)
}

pub fn fit_john_ellipsoid_with(section: &Section, tol: f64, max_iter: usize) -> Result<EllipsoidFit> {
    let ellipse = khachiyan(&section.hull, tol, max_iter)?;
    let r = Mat2::rotation_to(section.normal);
    let m = ellipse.shape.congruence(&r);
    let tau = -m.xy / m.xx;
    let d1 = m.xx;
    let d2 = m.yy - m.xy * m.xy / m.xx;
    let (k_inner, k_outer) = dilation_factors(&ellipse, &section.hull);
    let area = ellipse.area();
    Ok(EllipsoidFit {
        ellipse,
        area,
        vol_ratio: area / (std::f64::consts::PI * section.height),
        a_h: Mat2::new(1.0, -tau, 0.0, 1.0),
        tau,
        diagonal: (d1, d2),
        k_inner,
        k_outer,
        normal: section.normal,
    })
}

/// Boundary points with values: hits, plus dense trace samples if any.
fn boundary_data(u: &ScalarField) -> Vec<(Point, f64)> {
    let grid = u.grid();
    let mut out: Vec<(Point, f64)> = grid
        .hits()
        .iter()
        .zip(u.boundary().unwrap_or(&[]))
        .map(|(h, &v)| (h.point, v))
        .collect();
    if let Some(t) = u.trace() {
        out.extend(
            grid.domain()
                .boundary_samples(TRACE_SAMPLES)
                .into_iter()
                .map(|b| (b, t(b))),
        );
    }
    out
}

pub fn maximal_height(u: &ScalarField, y: Point) -> Result<MaximalSection> {
    let grid = u.grid();
    let k = grid.node_at(y).ok_or_else(|| {
        Error::InvalidProblem(format!("maximal sections are centered at grid nodes, {y} is not one"))
    })?;
    if grid.touches_boundary(k) {
        return Err(Error::TooCloseToBoundary(y));
    }
    if u.boundary().is_none() {
        return Err(Error::IncompleteData("maximal sections need boundary values".into()));
    }
    let value = u.values()[k];
    let slope = gradient_at(u, k);
    let gap: Vec<(Point, f64)> = boundary_data(u)
        .into_iter()
        .map(|(b, v)| (b, v - value - slope.dot(b - y)))
        .collect();
    let contained = |h: f64| gap.iter().all(|&(_, g)| g >= h);
    let mut hi = 1.0_f64.max(grid.h());
    let mut lo = 0.0;
    while contained(hi) {
        lo = hi;
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::DegenerateSection("section never reaches the boundary".into()));
        }
    }
    if !contained(lo) {
        return Err(Error::ConvexityFailure(format!(
            "boundary values lie below the supporting plane at {y}"
        )));
    }
    while hi - lo > HEIGHT_TOL * hi {
        let mid = 0.5 * (lo + hi);
        if contained(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let touching = gap
        .iter()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|g| g.0)
        .expect("grid has boundary data");
    Ok(MaximalSection {
        center: y,
        hbar: lo,
        touching,
        dist: grid.domain().distance_to_boundary(y),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Separation {
    pub rho_low: f64,
    pub rho_high: f64,
    pub pairs: usize,
}

/// Ratios of `u(x) - u(x0) - Du(x0)(x - x0)` to `|x - x0|^2` over pairs of
/// boundary samples.
pub fn quadratic_separation(u: &ScalarField, samples: &[Point]) -> Result<Separation> {
    let grid = u.grid();
    let index = SampleIndex::new(u);
    let tol = 10.0 * grid.h() * grid.h();
    let values: Vec<f64> = samples
        .iter()
        .map(|&p| {
            u.boundary_value(p)
                .ok_or_else(|| Error::IncompleteData("separation needs a boundary trace".into()))
        })
        .collect::<Result<_>>()?;
    let mut out = Separation {
        rho_low: f64::INFINITY,
        rho_high: 0.0,
        pairs: 0,
    };
    for (i, &x0) in samples.iter().enumerate() {
        let slope = index.fit(x0, 2)?.gradient();
        for (j, &x) in samples.iter().enumerate() {
            if i == j {
                continue;
            }
            let d2 = (x - x0).norm2();
            if d2 == 0.0 {
                continue;
            }
            let sep = values[j] - values[i] - slope.dot(x - x0);
            if sep < -tol {
                return Err(Error::ConvexityViolation {
                    point: x,
                    separation: sep,
                    tolerance: -tol,
                });
            }
            let ratio = sep / d2;
            out.rho_low = out.rho_low.min(ratio);
            out.rho_high = out.rho_high.max(ratio);
            out.pairs += 1;
        }
    }
    if out.pairs == 0 {
        return Err(Error::InsufficientData("need at least two distinct boundary samples".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanRow {
    pub h: f64,
    pub tau: f64,
    pub vol_ratio: f64,
    pub k_inner: f64,
    pub k_outer: f64,
    pub nodes: usize,
}

/// Least-squares line `y = c0 + c1 x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub c0: f64,
    pub c1: f64,
    pub r2: f64,
}

pub fn fit_line(x: &[f64], y: &[f64]) -> Option<LineFit> {
    let n = x.len() as f64;
    if x.len() < 2 {
        return None;
    }
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return None;
    }
    let c1 = sxy / sxx;
    let c0 = my - c1 * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my) * (b - my)).sum();
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - c1 * a).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { (1.0 - ss_res / ss_tot).clamp(0.0, 1.0) } else { 1.0 };
    Some(LineFit { c0, c1, r2 })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationScan {
    pub center: Point,
    pub separation: Separation,
    pub rows: Vec<ScanRow>,
    /// `|tau_h| ~ c0 + c1 |log h|`.
    pub tau_fit: Option<LineFit>,
}

pub fn localization_scan(u: &ScalarField, x0: Point, h_list: &[f64]) -> Result<LocalizationScan> {
    let grid = u.grid();
    if !check_closure(grid, x0)? {
        return Err(Error::InvalidProblem(format!("{x0} is not a boundary point")));
    }
    let separation = quadratic_separation(u, &grid.domain().boundary_samples(64))?;
    let index = SampleIndex::new(u);
    let mut rows = Vec::new();
    for &h in h_list {
        let s = extract_section_with(u, &index, x0, h)?;
        if s.node_set.len() < MIN_SECTION_NODES {
            log::warn!("dropping section of height {h}: {} nodes", s.node_set.len());
            continue;
        }
        let fit = fit_john_ellipsoid(&s)?;
        rows.push(ScanRow {
            h,
            tau: fit.tau,
            vol_ratio: fit.vol_ratio,
            k_inner: fit.k_inner,
            k_outer: fit.k_outer,
            nodes: s.node_set.len(),
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| r.h.ln().abs()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.tau.abs()).collect();
    Ok(LocalizationScan {
        center: x0,
        separation,
        tau_fit: fit_line(&xs, &ys),
        rows,
    })
}

/// Affine map `x -> offset + linear x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AffineMap {
    pub offset: Point,
    pub linear: Mat2,
}

impl AffineMap {
    pub fn apply(&self, p: Point) -> Point {
        self.offset + self.linear.apply(p)
    }

    pub fn inverse_apply(&self, q: Point) -> Point {
        self.linear
            .inverse()
            .expect("affine map is invertible")
            .apply(q - self.offset)
    }
}

#[derive(Debug, Clone)]
pub struct NormalizedSection {
    pub field: ScalarField,
    pub map: AffineMap,
    pub maximal: MaximalSection,
    /// Unimodular `A` with `T x = y + hbar^(1/2) A^{-1} x`.
    pub a: Mat2,
    /// Radii with `B_c` inside the normalized section of height 1 inside `B_C`.
    pub inner_radius: f64,
    pub outer_radius: f64,
    pub value_at_origin: f64,
    pub gradient_at_origin: Point,
}

/// Rescales the maximal section at `y` to unit size:
/// `u~(x) = (u(T x) - u(y) - Du(y)(T x - y)) / hbar`.
pub fn normalize_section(u: &ScalarField, y: Point) -> Result<NormalizedSection> {
    let grid = u.grid();
    let maximal = maximal_height(u, y)?;
    let hbar = maximal.hbar;
    let index = SampleIndex::new(u);
    let section = extract_section_with(u, &index, y, hbar)?;
    let fit = fit_john_ellipsoid(&section)?;
    let m = fit.ellipse.shape;
    let a_sym = m.scale(1.0 / m.det().sqrt()).sqrt();
    let a = Mat2::from(a_sym);
    let a_inv = a.inverse().expect("unimodular");
    let linear = a_inv.scale(hbar.sqrt());
    let map = AffineMap { offset: y, linear };

    let new_domain = grid.domain().affine_preimage(y, linear)?;
    let new_h = grid.h() / linear.norm();
    let new_grid = Arc::new(Grid::new(new_domain, new_h)?);
    let (value, slope) = (section.value, section.slope);
    let tilde = move |z: Point, v: f64| (v - value - slope.dot(z - y)) / hbar;

    let mut values = Vec::with_capacity(new_grid.len());
    for p in new_grid.points() {
        let z = map.apply(p);
        let v = match grid.node_at(z) {
            Some(k) => u.values()[k],
            None => {
                let degree = if index.within(z, 4.0 * grid.h()).len() >= 30 { 4 } else { 2 };
                index.fit(z, degree)?.eval(z)
            }
        };
        values.push(tilde(z, v));
    }
    let field = match u.trace() {
        Some(t) => {
            let t = t.clone();
            let tr = trace(move |p| {
                let z = map.apply(p);
                tilde(z, t(z))
            });
            ScalarField::new(new_grid.clone(), values)?.with_trace(tr)
        }
        None => {
            let b = new_grid
                .hits()
                .iter()
                .map(|h| {
                    let z = map.apply(h.point);
                    index.fit(z, 2).map(|f| tilde(z, f.eval(z)))
                })
                .collect::<Result<Vec<f64>>>()?;
            ScalarField::with_boundary(new_grid.clone(), values, b)?
        }
    };

    let hull: Vec<Point> = section.hull.iter().map(|&q| map.inverse_apply(q)).collect();
    let outer_radius = hull.iter().map(|p| p.norm()).fold(0.0, f64::max);
    let n = hull.len();
    let inner_radius = (0..n)
        .map(|k| {
            let (p, q) = (hull[k], hull[(k + 1) % n]);
            let e = q - p;
            (p.x * q.y - p.y * q.x).abs() / e.norm()
        })
        .fold(f64::INFINITY, f64::min);
    let origin = new_grid
        .node_at(Point::ORIGIN)
        .ok_or(Error::OutOfDomain(Point::ORIGIN))?;
    Ok(NormalizedSection {
        value_at_origin: field.values()[origin],
        gradient_at_origin: gradient_at(&field, origin),
        field,
        map,
        maximal,
        a,
        inner_radius,
        outer_radius,
    })
}
