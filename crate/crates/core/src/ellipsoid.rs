//! Convex hulls and minimum-volume enclosing ellipses.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::matrix::Sym2;

/// Ellipse `{z : (z - c)^T M (z - c) <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub center: Point,
    pub shape: Sym2,
}

impl Ellipse {
    pub fn area(&self) -> f64 {
        std::f64::consts::PI / self.shape.det().sqrt()
    }

    /// `sqrt((p - c)^T M (p - c))`; at most 1 inside.
    pub fn gauge(&self, p: Point) -> f64 {
        self.shape.quad_form(p - self.center).sqrt()
    }

    /// Semi-axis lengths, longest first.
    pub fn semi_axes(&self) -> (f64, f64) {
        let (l0, l1) = self.shape.eigenvalues();
        (1.0 / l0.sqrt(), 1.0 / l1.sqrt())
    }
}

fn cross(o: Point, a: Point, b: Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Counter-clockwise convex hull without collinear points (monotone chain).
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Whether `p` lies in the closed counter-clockwise convex polygon.
pub fn polygon_contains(poly: &[Point], p: Point) -> bool {
    let n = poly.len();
    (0..n).all(|k| cross(poly[k], poly[(k + 1) % n], p) >= -1e-12)
}

/// Minimum-volume enclosing ellipse by Khachiyan's coordinate ascent with
/// Wolfe-Atwood away steps. Stops once every point has lifted norm at most
/// `(d + 1)(1 + tol)` and every support point at least `(d + 1)(1 - tol)`.
/// The iterate is then refined by [`polish`] and dilated, if needed, so that
/// every point is covered.
pub fn khachiyan(points: &[Point], tol: f64, max_iter: usize) -> Result<Ellipse> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(Error::DegenerateSection(format!(
            "need 3 non-collinear points, hull has {}",
            hull.len()
        )));
    }
    let n = hull.len();
    let d1 = 3.0;
    let q: Vec<Vector3<f64>> = hull.iter().map(|p| Vector3::new(p.x, p.y, 1.0)).collect();
    let mut u = vec![1.0 / n as f64; n];
    let mut converged = false;
    for _ in 0..max_iter {
        let mut x = Matrix3::zeros();
        for (qi, ui) in q.iter().zip(&u) {
            x += *ui * qi * qi.transpose();
        }
        let xinv = x
            .try_inverse()
            .ok_or_else(|| Error::DegenerateSection("singular moment matrix".into()))?;
        let m: Vec<f64> = q.iter().map(|qi| (qi.transpose() * xinv * qi)[0]).collect();
        let (jp, mp) = m
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        let (jm, mm) = m
            .iter()
            .enumerate()
            .filter(|(i, _)| u[*i] > 0.0)
            .fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
        if mp <= d1 * (1.0 + tol) && mm >= d1 * (1.0 - tol) {
            converged = true;
            break;
        }
        if mp - d1 >= d1 - mm {
            let step = (mp - d1) / (d1 * (mp - 1.0));
            u.iter_mut().for_each(|w| *w *= 1.0 - step);
            u[jp] += step;
        } else {
            // away step, clipped so the weight stays non-negative
            let full = (d1 - mm) / (d1 * (mm - 1.0));
            let step = full.min(u[jm] / (1.0 - u[jm]));
            u.iter_mut().for_each(|w| *w *= 1.0 + step);
            u[jm] -= step;
            if u[jm] < 1e-300 {
                u[jm] = 0.0;
            }
        }
    }
    if !converged {
        log::warn!("Khachiyan iteration hit the {max_iter} iteration cap");
    }
    let d = 2.0;
    let c = hull
        .iter()
        .zip(&u)
        .fold(Point::ORIGIN, |acc, (p, w)| acc + *p * *w);
    let mut cov = Sym2::default();
    for (p, w) in hull.iter().zip(&u) {
        let r = *p - c;
        cov = cov + Sym2::new(r.x * r.x, r.x * r.y, r.y * r.y).scale(*w);
    }
    let shape = cov
        .inverse()
        .ok_or_else(|| Error::DegenerateSection("degenerate covariance".into()))?
        .scale(1.0 / d);
    let mut e = polish(&hull, Ellipse { center: c, shape });
    let worst = hull.iter().map(|&p| e.gauge(p)).fold(0.0, f64::max);
    if worst > 1.0 {
        e.shape = e.shape.scale(1.0 / (worst * worst));
    }
    Ok(e)
}

type V5 = SVector<f64, 5>;
type M5 = SMatrix<f64, 5, 5>;

/// Barrier weight at which the polish stops, relative to the point count.
const POLISH_GAP: f64 = 1e-13;

/// Newton log-barrier refinement of an enclosing ellipse.
///
/// Variables are `(a, b, e, c1, c2)` with `L = [[a, e], [e, b]]` and the
/// ellipse `|L x + c| <= 1`. Minimizes `-t log det L - sum log(1 - |L p + c|^2)`
/// along increasing `t`. Returns `start` unchanged if a step misbehaves.
fn polish(points: &[Point], start: Ellipse) -> Ellipse {
    let l0 = start.shape.sqrt();
    let worst = points.iter().map(|&p| start.gauge(p)).fold(0.0, f64::max);
    let s = 1.0 / (worst * (1.0 + 1e-6));
    let lc = l0.apply(start.center) * s;
    let mut x = V5::new(l0.xx * s, l0.yy * s, l0.xy * s, -lc.x, -lc.y);
    let m = points.len() as f64;

    let barrier = |x: &V5, t: f64| -> Option<f64> {
        let det = x[0] * x[1] - x[2] * x[2];
        if !(x[0] > 0.0 && det > 0.0) {
            return None;
        }
        let mut f = -t * det.ln();
        for p in points {
            let z = Point::new(x[0] * p.x + x[2] * p.y + x[3], x[2] * p.x + x[1] * p.y + x[4]);
            let slack = 1.0 - z.norm2();
            if !(slack > 0.0) {
                return None;
            }
            f -= slack.ln();
        }
        Some(f)
    };

    let mut t = m * 1e3;
    while m / t > POLISH_GAP {
        for _ in 0..50 {
            let (a, b, e) = (x[0], x[1], x[2]);
            let det = a * b - e * e;
            let mut g = V5::new(-b / det, -a / det, 2.0 * e / det, 0.0, 0.0) * t;
            let d2 = det * det;
            let mut h = M5::zeros();
            h[(0, 0)] = b * b / d2;
            h[(1, 1)] = a * a / d2;
            h[(0, 1)] = -1.0 / det + a * b / d2;
            h[(1, 0)] = h[(0, 1)];
            h[(2, 2)] = 2.0 / det + 4.0 * e * e / d2;
            h[(0, 2)] = -2.0 * e * b / d2;
            h[(2, 0)] = h[(0, 2)];
            h[(1, 2)] = -2.0 * e * a / d2;
            h[(2, 1)] = h[(1, 2)];
            h *= t;
            for p in points {
                let z = Point::new(a * p.x + e * p.y + x[3], e * p.x + b * p.y + x[4]);
                let slack = 1.0 - z.norm2();
                let j = SMatrix::<f64, 2, 5>::new(p.x, 0.0, p.y, 1.0, 0.0, 0.0, p.y, p.x, 0.0, 1.0);
                let zv = SVector::<f64, 2>::new(z.x, z.y);
                let dg = j.transpose() * zv * 2.0;
                g += dg / slack;
                h += j.transpose() * j * (2.0 / slack) + dg * dg.transpose() / (slack * slack);
            }
            let Some(step) = h.cholesky().map(|c| c.solve(&-g)) else {
                return start;
            };
            let decrement = -g.dot(&step);
            if !decrement.is_finite() {
                return start;
            }
            if decrement < 1e-12 {
                break;
            }
            let f0 = barrier(&x, t).expect("iterate is feasible");
            let mut alpha = 1.0;
            let accepted = loop {
                let trial = x + step * alpha;
                if let Some(f) = barrier(&trial, t) {
                    if f <= f0 - 0.25 * alpha * decrement {
                        x = trial;
                        break true;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-12 {
                    break false;
                }
            };
            if !accepted {
                // decrease lost in the rounding of f; x is as good as it gets at this t
                if decrement > 1e-6 {
                    return start;
                }
                break;
            }
        }
        t *= 10.0;
    }
    let l = Sym2::new(x[0], x[2], x[1]);
    let Some(linv) = l.inverse() else {
        return start;
    };
    let center = linv.apply(Point::new(-x[3], -x[4]));
    let shape = Sym2::new(
        l.xx * l.xx + l.xy * l.xy,
        l.xx * l.xy + l.xy * l.yy,
        l.xy * l.xy + l.yy * l.yy,
    );
    let e = Ellipse { center, shape };
    let covering = start.area() * worst.max(1.0).powi(2);
    if e.area() <= covering * (1.0 + 1e-12) {
        e
    } else {
        start
    }
}

/// Largest `k_in` with `c + k_in (E - c)` inside the polygon and smallest
/// `k_out` with the polygon inside `c + k_out (E - c)`.
pub fn dilation_factors(e: &Ellipse, poly: &[Point]) -> (f64, f64) {
    let n = poly.len();
    let minv = e.shape.inverse().expect("ellipse shape is positive definite");
    let mut k_in = f64::INFINITY;
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        let edge = b - a;
        let normal = Point::new(edge.y, -edge.x).normalized();
        let slack = normal.dot(a) - normal.dot(e.center);
        k_in = k_in.min(slack / minv.quad_form(normal).sqrt());
    }
    let k_out = poly.iter().map(|&p| e.gauge(p)).fold(0.0, f64::max);
    (k_in, k_out)
}
