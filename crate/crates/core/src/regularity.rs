//! Measured regularity: Hölder fits, boundary moduli, the minimum principle,
//! the ABP chain for `w` and discrete Sobolev monitors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupled::DIM;
use crate::error::{Error, Result};
use crate::field::{ScalarField, Trace};
use crate::geometry::{polygon_area, Domain, Grid, Point};
use crate::sections::{fit_line, SampleIndex};

/// Node pairs needed for a Hölder fit.
pub const MIN_PAIRS: usize = 200;
/// Anchors probed to estimate per-bin pair counts.
const PROBE_ANCHORS: usize = 2000;
/// Slack below the threshold exponent tolerated by the boundary check.
pub const EXPONENT_SLACK: f64 = 0.05;
/// Polygon resolution of the boundary when clipping cells.
const CLIP_POLYGON: usize = 4096;
const PSI_SAMPLES: usize = 512;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

impl CheckStatus {
    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HolderRegion {
    /// Nodes at least `max_scale * diam` from the boundary.
    Interior,
    /// All nodes and boundary hits.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolderOptions {
    pub region: HolderRegion,
    pub pair_budget: usize,
    /// Smallest distance, in grid spacings.
    pub min_scale: f64,
    /// Largest distance, as a fraction of the diameter.
    pub max_scale: f64,
    pub seed: u64,
}

impl Default for HolderOptions {
    fn default() -> Self {
        Self {
            region: HolderRegion::Global,
            pair_budget: 4_000_000,
            // below 2h the only lattice distances are h and sqrt(2) h
            min_scale: 2.0,
            max_scale: 1.0 / 8.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderBin {
    pub distance: f64,
    pub oscillation: f64,
    pub pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderEstimate {
    /// `None` for a constant field.
    pub exponent: Option<f64>,
    /// `osc(r) ~ constant * r^exponent`.
    pub constant: f64,
    pub r2: f64,
    pub bins: Vec<HolderBin>,
    pub samples: usize,
    pub degenerate: bool,
}

fn region_samples(v: &ScalarField, opts: &HolderOptions) -> (Vec<Point>, Vec<f64>) {
    let grid = v.grid();
    let domain = grid.domain();
    let margin = opts.max_scale * domain.diameter();
    let mut pts = Vec::new();
    let mut vals = Vec::new();
    for (p, &x) in grid.points().zip(v.values()) {
        if opts.region == HolderRegion::Global || domain.distance_to_boundary(p) >= margin {
            pts.push(p);
            vals.push(x);
        }
    }
    if opts.region == HolderRegion::Global {
        if let Some(b) = v.boundary() {
            pts.extend(grid.hits().iter().map(|h| h.point));
            vals.extend_from_slice(b);
        }
    }
    (pts, vals)
}

/// Dyadic bins `[r0 2^k, r0 2^(k+1))` below `r1`, and the bin of `d`.
fn bin_of(d: f64, r0: f64, nbins: usize) -> Option<usize> {
    if d < r0 {
        return None;
    }
    let k = (d / r0).log2().floor() as usize;
    (k < nbins).then_some(k)
}

/// Per-bin maximum oscillation, the distance of the pair attaining it, and
/// the pair count. Ties go to the longer pair so merges are order-free.
#[derive(Debug, Clone, Copy, Default)]
struct Acc {
    osc: f64,
    dist: f64,
    pairs: usize,
}

impl Acc {
    fn offer(&mut self, d: f64, osc: f64) {
        if osc > self.osc || (osc == self.osc && d > self.dist) {
            self.osc = osc;
            self.dist = d;
        }
    }

    fn add(&mut self, d: f64, osc: f64) {
        self.offer(d, osc);
        self.pairs += 1;
    }

    fn merge(&mut self, o: Acc) {
        self.offer(o.dist, o.osc);
        self.pairs += o.pairs;
    }
}

/// Lattice distances fill dyadic bins unevenly, so each bin is placed at
/// the distance of its extremal pair.
fn finish_bins(acc: Vec<Acc>) -> Vec<HolderBin> {
    acc.into_iter()
        .filter(|a| a.pairs > 0)
        .map(|a| HolderBin {
            distance: a.dist,
            oscillation: a.osc,
            pairs: a.pairs,
        })
        .collect()
}

fn regress(bins: &[HolderBin]) -> (Option<f64>, f64, f64) {
    let used: Vec<&HolderBin> = bins.iter().filter(|b| b.oscillation > 0.0).collect();
    let x: Vec<f64> = used.iter().map(|b| b.distance.ln()).collect();
    let y: Vec<f64> = used.iter().map(|b| b.oscillation.ln()).collect();
    match fit_line(&x, &y) {
        Some(f) => (Some(f.c1), f.c0.exp(), f.r2),
        None => (None, 0.0, 0.0),
    }
}

pub fn fit_holder_exponent(v: &ScalarField, opts: &HolderOptions) -> Result<HolderEstimate> {
    let grid = v.grid();
    let r0 = opts.min_scale * grid.h();
    let r1 = opts.max_scale * grid.domain().diameter();
    if !(r0 > 0.0) {
        return Err(Error::InvalidProblem(format!("min_scale must be positive, got {r0}")));
    }
    if r1 <= r0 {
        return Err(Error::InsufficientData(format!(
            "distance range [{r0}, {r1}] is empty at this resolution"
        )));
    }
    let nbins = ((r1 / r0).log2().ceil() as usize).max(1);
    let (pts, vals) = region_samples(v, opts);
    let index = SampleIndex::from_samples(pts, vals, grid.h());
    let n = index.points().len();

    // Per-bin pair counts, estimated from a stride of probe anchors, set a
    // per-bin anchor keep rate: short bins are exhaustive, long bins keep
    // every partner of a subset of anchors.
    let stride = n.div_ceil(PROBE_ANCHORS).max(1);
    let probes: Vec<usize> = (0..n).step_by(stride).collect();
    let zeros = || vec![0usize; nbins];
    let counts = probes
        .par_iter()
        .fold(zeros, |mut c, &i| {
            let p = index.points()[i];
            for j in index.within(p, r1) {
                if j != i {
                    if let Some(b) = bin_of(index.points()[j].dist(p), r0, nbins) {
                        c[b] += 1;
                    }
                }
            }
            c
        })
        .reduce(zeros, |a, b| a.iter().zip(&b).map(|(x, y)| x + y).collect());
    // each pair is seen from both ends
    let scale = n as f64 / probes.len() as f64 / 2.0;
    let estimated: Vec<f64> = counts.iter().map(|&c| c as f64 * scale).collect();
    let total: f64 = estimated.iter().sum();
    if total < MIN_PAIRS as f64 {
        return Err(Error::InsufficientData(format!(
            "about {total:.0} usable node pairs, need {MIN_PAIRS}"
        )));
    }
    let per_bin = opts.pair_budget as f64 / nbins as f64;
    let keep: Vec<f64> = estimated.iter().map(|&c| (per_bin / c.max(1.0)).min(1.0)).collect();

    let empty = || vec![Acc::default(); nbins];
    let merged = (0..n)
        .into_par_iter()
        .fold(empty, |mut acc, i| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(i as u64);
            let kept: Vec<bool> = keep.iter().map(|&k| k >= 1.0 || rng.random::<f64>() < k).collect();
            let Some(top) = kept.iter().rposition(|&k| k) else {
                return acc;
            };
            let p = index.points()[i];
            for j in index.within(p, r0 * 2f64.powi(top as i32 + 1)) {
                if j <= i {
                    continue;
                }
                let d = index.points()[j].dist(p);
                match bin_of(d, r0, nbins) {
                    Some(b) if kept[b] => acc[b].add(d, (index.values()[j] - index.values()[i]).abs()),
                    _ => {}
                }
            }
            acc
        })
        .reduce(empty, |mut a, b| {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
            a
        });

    let bins = finish_bins(merged);
    let samples = bins.iter().map(|b| b.pairs).sum();
    if bins.iter().all(|b| b.oscillation == 0.0) {
        return Ok(HolderEstimate {
            exponent: None,
            constant: 0.0,
            r2: 1.0,
            bins,
            samples,
            degenerate: true,
        });
    }
    let (exponent, constant, r2) = regress(&bins);
    Ok(HolderEstimate {
        exponent,
        constant,
        r2,
        bins,
        samples,
        degenerate: exponent.is_none(),
    })
}

/// `alpha / (alpha + 2)`.
pub fn boundary_threshold(alpha: f64) -> f64 {
    alpha / (alpha + 2.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryHolderReport {
    pub alpha: f64,
    pub threshold: f64,
    pub min_exponent: f64,
    pub median_exponent: f64,
    /// Boundary point with the smallest fitted exponent.
    pub worst_point: Point,
    pub points_used: usize,
    pub status: CheckStatus,
}

/// Fits the exponent of `max |v(x) - v(x0)|` over interior nodes in dyadic
/// shells around each boundary sample `x0`.
pub fn boundary_holder_check(v: &ScalarField, alpha: f64, samples: usize) -> Result<BoundaryHolderReport> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidProblem(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let grid = v.grid();
    let r0 = grid.h();
    let r1 = grid.domain().diameter() / 8.0;
    let nbins = ((r1 / r0).log2().ceil() as usize).max(1);
    let index = SampleIndex::from_samples(grid.points().collect(), v.values().to_vec(), grid.h());
    let mut fits: Vec<(f64, Point)> = Vec::new();
    for x0 in grid.domain().boundary_samples(samples) {
        let v0 = v
            .boundary_value(x0)
            .ok_or_else(|| Error::IncompleteData("boundary check needs boundary values".into()))?;
        let mut acc = vec![Acc::default(); nbins];
        for j in index.within(x0, r1) {
            let d = index.points()[j].dist(x0);
            if let Some(b) = bin_of(d, r0, nbins) {
                acc[b].add(d, (index.values()[j] - v0).abs());
            }
        }
        let bins = finish_bins(acc);
        if bins.iter().filter(|b| b.oscillation > 0.0).count() < 2 {
            continue;
        }
        if let (Some(e), _, _) = regress(&bins) {
            fits.push((e, x0));
        }
    }
    if fits.is_empty() {
        return Err(Error::InsufficientData(
            "too few near-boundary nodes to fit a boundary exponent".into(),
        ));
    }
    fits.sort_by(|a, b| a.0.total_cmp(&b.0));
    let threshold = boundary_threshold(alpha);
    let (min_exponent, worst_point) = fits[0];
    Ok(BoundaryHolderReport {
        alpha,
        threshold,
        min_exponent,
        median_exponent: fits[fits.len() / 2].0,
        worst_point,
        points_used: fits.len(),
        status: CheckStatus::from_bool(min_exponent >= threshold - EXPONENT_SLACK),
    })
}

/// `psi` on every boundary hit and on evenly spaced boundary samples.
fn boundary_psi(grid: &Grid, psi: &Trace) -> Vec<f64> {
    grid.hits()
        .iter()
        .map(|h| h.point)
        .chain(grid.domain().boundary_samples(PSI_SAMPLES))
        .map(|p| psi(p))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinPrincipleReport {
    pub status: CheckStatus,
    /// `min w - min psi`; absent when skipped.
    pub margin: Option<f64>,
    pub tolerance: f64,
    pub min_interior_w: f64,
    pub min_boundary_psi: f64,
    pub f_nonpositive: bool,
}

pub fn min_principle_check(w: &ScalarField, psi: &Trace, f: &ScalarField) -> MinPrincipleReport {
    let grid = w.grid();
    let h = grid.h();
    let min_psi = boundary_psi(grid, psi).into_iter().fold(f64::INFINITY, f64::min);
    let f_nonpositive = f.max() <= 0.0;
    let tolerance = 10.0 * h * h;
    let margin = w.min() - min_psi;
    let (status, margin) = if f_nonpositive {
        (CheckStatus::from_bool(margin >= -tolerance), Some(margin))
    } else {
        log::info!("minimum principle skipped: f is positive somewhere");
        (CheckStatus::Skip, None)
    };
    MinPrincipleReport {
        status,
        margin,
        tolerance,
        min_interior_w: w.min(),
        min_boundary_psi: min_psi,
        f_nonpositive,
    }
}

/// `(n - 1) / (n (1 - theta))`.
pub fn abp_exponent(theta: f64) -> f64 {
    (DIM - 1.0) / (DIM * (1.0 - theta))
}

/// Counter-clockwise polygon of the boundary.
fn boundary_polygon(domain: &Domain) -> Vec<Point> {
    let mut poly = domain.boundary_samples(CLIP_POLYGON);
    if polygon_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Sutherland-Hodgman clip of `subject` against the convex counter-clockwise
/// polygon `clip`.
pub fn clip_polygon(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let side = |a: Point, b: Point, p: Point| (b.x - a.x) * (p.y - a.y) - (b.y - a.y) * (p.x - a.x);
    let mut out = subject.to_vec();
    for e in 0..clip.len() {
        if out.is_empty() {
            break;
        }
        let (a, b) = (clip[e], clip[(e + 1) % clip.len()]);
        let input = std::mem::take(&mut out);
        for k in 0..input.len() {
            let (p, q) = (input[k], input[(k + 1) % input.len()]);
            let (sp, sq) = (side(a, b, p), side(a, b, q));
            if sp >= 0.0 {
                out.push(p);
            }
            if (sp >= 0.0) != (sq >= 0.0) {
                out.push(p + (q - p) * (sp / (sp - sq)));
            }
        }
    }
    out
}

/// Quadrature weights: the area of each node-centered cell inside the domain.
pub fn cell_weights(grid: &Grid) -> Vec<f64> {
    let h = grid.h();
    let domain = grid.domain();
    let poly = boundary_polygon(domain);
    grid.points()
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|p| {
            let c = h / 2.0;
            let square = [
                p + Point::new(-c, -c),
                p + Point::new(c, -c),
                p + Point::new(c, c),
                p + Point::new(-c, c),
            ];
            if square.iter().all(|&q| domain.contains(q)) {
                h * h
            } else {
                polygon_area(&clip_polygon(&square, &poly))
            }
        })
        .collect()
}

/// Discrete `L^p` norm by midpoint quadrature on clipped cells.
pub fn lp_norm(values: &[f64], weights: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    values
        .iter()
        .zip(weights)
        .map(|(v, w)| v.abs().powf(p) * w)
        .sum::<f64>()
        .powf(1.0 / p)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub min_w: f64,
    pub max_w: f64,
    pub min_boundary_psi: f64,
    pub max_boundary_psi: f64,
    pub abp_exponent: f64,
    /// Smallest `C` with `|w| <= |psi| + C |w|^e |f|_{L^n}`.
    pub abp_constant: f64,
    /// `|f w^e|_{L^n}`.
    pub weighted_forcing_norm: f64,
    pub f_ln_norm: f64,
    pub f_lp_norm: f64,
    pub p: f64,
    pub exponent_below_one: bool,
    pub chain_holds: bool,
}

pub fn abp_chain_report(
    w: &ScalarField,
    f: &ScalarField,
    psi: &Trace,
    theta: f64,
    p: f64,
) -> Result<BoundsReport> {
    crate::coupled::validate_theta(theta)?;
    let grid = w.grid();
    let weights = cell_weights(grid);
    let e = abp_exponent(theta);
    let psi_b = boundary_psi(grid, psi);
    let min_psi = psi_b.iter().copied().fold(f64::INFINITY, f64::min);
    let max_psi = psi_b.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let w_sup = w.sup_norm();
    let f_ln = lp_norm(f.values(), &weights, DIM);
    let weighted: Vec<f64> = f
        .values()
        .iter()
        .zip(w.values())
        .map(|(f, w)| f * w.abs().powf(e))
        .collect();
    let weighted_norm = lp_norm(&weighted, &weights, DIM);
    let denom = w_sup.powf(e) * f_ln;
    let abp_constant = if denom > 0.0 {
        ((w_sup - max_psi) / denom).max(0.0)
    } else {
        0.0
    };
    let chain_holds = abp_constant.is_finite()
        && (denom > 0.0 || w_sup <= max_psi * (1.0 + 1e-12) + 10.0 * grid.h() * grid.h());
    Ok(BoundsReport {
        min_w: w.min(),
        max_w: w.max(),
        min_boundary_psi: min_psi,
        max_boundary_psi: max_psi,
        abp_exponent: e,
        abp_constant,
        weighted_forcing_norm: weighted_norm,
        f_ln_norm: f_ln,
        f_lp_norm: lp_norm(f.values(), &weights, p),
        p,
        exponent_below_one: e < 1.0,
        chain_holds,
    })
}

const D: [[f64; 5]; 5] = [
    [0.0, 0.0, 1.0, 0.0, 0.0],
    [0.0, -0.5, 0.0, 0.5, 0.0],
    [0.0, 1.0, -2.0, 1.0, 0.0],
    [-0.5, 1.0, 0.0, -1.0, 0.5],
    [1.0, -4.0, 6.0, -4.0, 1.0],
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevRow {
    pub dx: u32,
    pub dy: u32,
    pub norm: f64,
    pub max_abs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SobolevTable {
    pub p: f64,
    pub rows: Vec<SobolevRow>,
    /// `(sum over |a| = k of |D^a u|_p^p)^(1/p)` for `k = 0..=4`.
    pub order_norms: [f64; 5],
    pub covered: usize,
    pub coverage: f64,
}

/// Centered differences `D^a u`, `|a| <= 4`, on the 5x5 block around `k`.
pub fn block_derivatives(u: &ScalarField, k: usize) -> Option<Vec<(u32, u32, f64)>> {
    let grid = u.grid();
    let mut block = [[0.0; 5]; 5];
    for (a, row) in block.iter_mut().enumerate() {
        for (b, x) in row.iter_mut().enumerate() {
            *x = u.values()[grid.offset(k, a as i64 - 2, b as i64 - 2)?];
        }
    }
    let h = grid.h();
    let mut out = Vec::with_capacity(15);
    for order in 0..=4u32 {
        for dy in 0..=order {
            let dx = order - dy;
            let mut s = 0.0;
            for a in 0..5 {
                for b in 0..5 {
                    s += D[dx as usize][a] * D[dy as usize][b] * block[a][b];
                }
            }
            out.push((dx, dy, s / h.powi(order as i32)));
        }
    }
    Some(out)
}

pub fn sobolev_monitor(u: &ScalarField, p: f64) -> Result<SobolevTable> {
    if !(p >= 1.0) {
        return Err(Error::InvalidProblem(format!("p must be at least 1, got {p}")));
    }
    let grid = u.grid();
    let h2 = grid.h() * grid.h();
    let per_node: Vec<Vec<(u32, u32, f64)>> = (0..grid.len())
        .filter_map(|k| block_derivatives(u, k))
        .collect();
    let covered = per_node.len();
    let mut rows: Vec<SobolevRow> = (0..=4u32)
        .flat_map(|o| (0..=o).map(move |dy| (o - dy, dy)))
        .map(|(dx, dy)| SobolevRow {
            dx,
            dy,
            norm: 0.0,
            max_abs: 0.0,
        })
        .collect();
    for d in &per_node {
        for (row, &(_, _, v)) in rows.iter_mut().zip(d) {
            row.max_abs = row.max_abs.max(v.abs());
            if p.is_finite() {
                row.norm += v.abs().powf(p) * h2;
            }
        }
    }
    let mut order_norms = [0.0; 5];
    for row in &mut rows {
        let o = (row.dx + row.dy) as usize;
        if p.is_finite() {
            order_norms[o] += row.norm;
            row.norm = row.norm.powf(1.0 / p);
        } else {
            row.norm = row.max_abs;
            order_norms[o] = order_norms[o].max(row.max_abs);
        }
    }
    if p.is_finite() {
        for n in &mut order_norms {
            *n = n.powf(1.0 / p);
        }
    }
    if covered < grid.len() {
        log::debug!("sobolev monitor covers {covered} of {} nodes", grid.len());
    }
    Ok(SobolevTable {
        p,
        rows,
        order_norms,
        covered,
        coverage: covered as f64 / grid.len() as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::trace;
    use std::sync::Arc;

    fn grid(h: f64) -> Arc<Grid> {
        Arc::new(Grid::new(Domain::unit_disk(), h).unwrap())
    }

    #[test]
    fn constant_field_is_degenerate() {
        let u = ScalarField::constant(grid(1.0 / 16.0), 3.0);
        let est = fit_holder_exponent(&u, &HolderOptions::default()).unwrap();
        assert!(est.degenerate && est.exponent.is_none());
        assert_eq!(est.constant, 0.0);
    }

    #[test]
    fn root_profile_exponent() {
        let g = grid(1.0 / 64.0);
        let u = ScalarField::from_fn(g, |p| p.norm().sqrt());
        let est = fit_holder_exponent(&u, &HolderOptions::default()).unwrap();
        let b = est.exponent.unwrap();
        assert!((b - 0.5).abs() <= 0.05, "{b}");
    }

    #[test]
    fn quadratic_is_lipschitz() {
        let g = grid(1.0 / 128.0);
        let u = ScalarField::from_fn(g, |p| p.norm2());
        // osc(d) = d (2 - d) on the unit disk bends at the domain scale
        let opts = HolderOptions {
            min_scale: 4.0,
            max_scale: 1.0 / 16.0,
            ..Default::default()
        };
        let b = fit_holder_exponent(&u, &opts).unwrap().exponent.unwrap();
        assert!((0.95..=1.05).contains(&b), "{b}");
    }

    #[test]
    fn too_few_pairs() {
        let g = Arc::new(Grid::new(Domain::unit_disk(), 0.5).unwrap());
        let u = ScalarField::from_fn(g, |p| p.x);
        assert!(matches!(
            fit_holder_exponent(&u, &HolderOptions::default()),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn sampling_is_seeded() {
        let g = grid(1.0 / 32.0);
        let u = ScalarField::from_fn(g, |p| p.norm().powf(0.75));
        let opts = HolderOptions {
            pair_budget: 5_000,
            seed: 7,
            ..Default::default()
        };
        let a = fit_holder_exponent(&u, &opts).unwrap();
        let b = fit_holder_exponent(&u, &opts).unwrap();
        assert_eq!(a, b);
        assert!(a.samples < 8_000);
    }

    #[test]
    fn thresholds() {
        assert_eq!(boundary_threshold(1.0), 1.0 / 3.0);
        assert_eq!(boundary_threshold(2.0 / 3.0), 0.25);
    }

    #[test]
    fn linear_harmonic_passes_boundary_check() {
        let g = grid(1.0 / 32.0);
        let v = ScalarField::from_fn(g, |p| p.x + 0.5 * p.y);
        let r = boundary_holder_check(&v, 1.0, 64).unwrap();
        assert!(r.min_exponent >= 0.95, "{}", r.min_exponent);
        assert_eq!(r.status, CheckStatus::Pass);
    }

    #[test]
    fn min_principle_trivial_and_skipped() {
        let g = grid(1.0 / 16.0);
        let w = ScalarField::constant(g.clone(), 1.0);
        let r = min_principle_check(&w, &trace(|_| 1.0), &ScalarField::constant(g.clone(), 0.0));
        assert_eq!(r.status, CheckStatus::Pass);
        assert_eq!(r.margin, Some(0.0));
        let r = min_principle_check(&w, &trace(|_| 1.0), &ScalarField::constant(g, 1.0));
        assert_eq!(r.status, CheckStatus::Skip);
        assert_eq!(r.margin, None);
    }

    #[test]
    fn abp_exponents() {
        assert_eq!(abp_exponent(0.25), 2.0 / 3.0);
        assert_eq!(abp_exponent(0.0), 0.5);
    }

    #[test]
    fn abp_with_zero_forcing() {
        let g = grid(1.0 / 16.0);
        let w = ScalarField::constant(g.clone(), 1.0);
        let r = abp_chain_report(&w, &ScalarField::constant(g, 0.0), &trace(|_| 1.0), 0.25, 2.0).unwrap();
        assert_eq!(r.abp_constant, 0.0);
        assert!(r.chain_holds && r.exponent_below_one);
    }

    #[test]
    fn clipped_cells_cover_the_disk() {
        let g = grid(1.0 / 32.0);
        let total: f64 = cell_weights(&g).iter().sum();
        assert!((total - std::f64::consts::PI).abs() < 0.05, "{total}");
    }

    #[test]
    fn clipping_a_square_by_a_triangle() {
        let sq = [
            Point::new(0.0, 0.0),
            Point::new(1.0, 0.0),
            Point::new(1.0, 1.0),
            Point::new(0.0, 1.0),
        ];
        let tri = [Point::new(0.0, 0.0), Point::new(2.0, 0.0), Point::new(0.0, 2.0)];
        assert!((polygon_area(&clip_polygon(&sq, &tri)) - 1.0).abs() < 1e-15);
        let tri = [Point::new(0.0, 0.0), Point::new(1.0, 0.0), Point::new(0.0, 1.0)];
        assert!((polygon_area(&clip_polygon(&sq, &tri)) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn quadratic_has_no_high_differences() {
        let u = ScalarField::from_fn(grid(1.0 / 16.0), |p| 3.0 * p.x * p.x - p.x * p.y + p.y);
        let t = sobolev_monitor(&u, 2.0).unwrap();
        assert!(t.order_norms[3] < 1e-8 && t.order_norms[4] < 1e-6);
        assert!(t.coverage > 0.5 && t.coverage < 1.0);
    }

    #[test]
    fn quartic_fourth_difference() {
        let u = ScalarField::from_fn(grid(1.0 / 16.0), |p| p.x.powi(4));
        let g = u.grid().clone();
        let k = g.node_at(Point::new(0.25, 0.125)).unwrap();
        let d = block_derivatives(&u, k).unwrap();
        let dxxxx = d.iter().find(|r| r.0 == 4 && r.1 == 0).unwrap().2;
        assert!((dxxxx - 24.0).abs() < 1e-8, "{dxxxx}");
    }
}
