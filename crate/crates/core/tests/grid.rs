use std::sync::Arc;

use amc_core::geometry::{Link, DIRECTIONS};
use amc_core::*;
use proptest::prelude::*;

fn ellipse(a: f64, b: f64) -> Domain {
    Domain::ellipse(Point::ORIGIN, [a, b]).unwrap()
}

#[test]
fn tangent_radii() {
    assert_eq!(Domain::unit_disk().rho_dom(), 1.0);
    assert!((ellipse(2.0, 1.0).rho_dom() - 0.5).abs() < 1e-12);
    assert!(matches!(
        Domain::ellipse(Point::ORIGIN, [1.0, 0.0]),
        Err(Error::InvalidDomain(_))
    ));
}

#[test]
fn tangent_disks_fit_inside_the_ellipse() {
    let d = ellipse(2.0, 1.0);
    let rho = d.rho_dom();
    for b in d.boundary_samples(256) {
        let c = b - d.outward_normal(b) * rho;
        for k in 0..64 {
            let t = 2.0 * std::f64::consts::PI * k as f64 / 64.0;
            let q = c + Point::new(t.cos(), t.sin()) * (rho * (1.0 - 1e-9));
            assert!(d.level(q) <= 1e-9, "{q} leaves the domain");
        }
    }
}

#[test]
fn ellipse_node_count_matches_enumeration() {
    let h = 0.25;
    let g = Grid::new(ellipse(2.0, 1.0), h).unwrap();
    let mut count = 0;
    for i in -8..=8 {
        for j in -4..=4 {
            let (x, y) = (i as f64 * h, j as f64 * h);
            if x * x / 4.0 + y * y < 1.0 {
                count += 1;
            }
        }
    }
    assert_eq!(g.len(), count);
}

#[test]
fn disk_node_counts() {
    assert_eq!(Grid::new(Domain::unit_disk(), 0.5).unwrap().len(), 9);
    assert_eq!(Grid::new(Domain::unit_disk(), 3.0).unwrap().len(), 1);
}

#[test]
fn refinement_quadruples() {
    let d = ellipse(1.5, 1.0);
    let coarse = Grid::new(d.clone(), 1.0 / 16.0).unwrap().len();
    let fine = Grid::new(d, 1.0 / 32.0).unwrap().len();
    assert!(fine >= 4 * coarse - 4 * 32, "{coarse} {fine}");
}

#[test]
fn every_arm_ends_in_a_node_or_a_hit() {
    let g = Grid::new(ellipse(1.3, 0.8), 0.05).unwrap();
    for k in 0..g.len() {
        for (d, l) in g.links(k).iter().enumerate() {
            match *l {
                Link::Node(m) => {
                    let (di, dj) = DIRECTIONS[d];
                    assert_eq!(g.offset(k, di, dj), Some(m));
                }
                Link::Hit(m) => {
                    let hit = &g.hits()[m];
                    assert!(hit.fraction > 0.0 && hit.fraction <= 1.0);
                    assert!(g.domain().level(hit.point).abs() < 1e-9);
                }
            }
        }
    }
}

#[test]
fn quartic_second_difference() {
    let g = Arc::new(Grid::new(Domain::unit_disk(), 0.1).unwrap());
    let u = ScalarField::from_fn(g.clone(), |p| p.x.powi(4));
    let k = g.node_at(Point::new(0.5, 0.0)).unwrap();
    let uxx = discrete_hessian(&u).unwrap().values[k].xx;
    // 12 x^2 + h^2 u'''' / 12 with u'''' = 24
    assert!((uxx - 3.02).abs() < 1e-9, "{uxx}");
}

#[test]
fn field_csv_round_trip_is_exact() {
    let g = Arc::new(Grid::new(ellipse(1.2, 0.7), 0.1).unwrap());
    let u = ScalarField::from_fn(g.clone(), |p| (p.x * 3.1).sin() + p.y / 7.0);
    let mut buf = Vec::new();
    u.write_csv(&mut buf).unwrap();
    let v = ScalarField::read_csv(g, buf.as_slice()).unwrap();
    assert_eq!(u.values(), v.values());
    assert_eq!(u.boundary(), v.boundary());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn quadratics_have_exact_hessians(
        a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64,
        d in -1.0..1.0f64, e in -1.0..1.0f64,
        sa in 0.6..1.8f64, sb in 0.6..1.8f64,
    ) {
        let g = Arc::new(Grid::new(ellipse(sa, sb), 0.1).unwrap());
        let u = ScalarField::from_fn(g.clone(), move |p| {
            a * p.x * p.x + 2.0 * b * p.x * p.y + c * p.y * p.y + d * p.x + e
        });
        let hess = discrete_hessian(&u).unwrap();
        for (k, m) in hess.values.iter().enumerate() {
            let tol = if g.is_full_stencil(k) { 1e-9 } else { 1e-5 };
            prop_assert!((m.xx - 2.0 * a).abs() < tol);
            prop_assert!((m.xy - 2.0 * b).abs() < tol);
            prop_assert!((m.yy - 2.0 * c).abs() < tol);
        }
    }

    #[test]
    fn index_map_is_a_bijection(h in 0.04..0.4f64, sa in 0.5..2.0f64, sb in 0.5..2.0f64) {
        let g = Grid::new(ellipse(sa, sb), h).unwrap();
        for (k, n) in g.nodes().iter().enumerate() {
            prop_assert_eq!(g.index_of(n.i, n.j), Some(k));
            prop_assert!(g.domain().level(n.point) < 0.0);
        }
    }

    #[test]
    fn cofactor_identities(xx in 0.1..5.0f64, xy in -2.0..2.0f64, yy in 0.1..5.0f64) {
        let h = Sym2::new(xx, xy, yy);
        let u = h.cofactor();
        prop_assert_eq!(u.det(), h.det());
        if h.det().abs() > 1e-6 {
            let inv = h.inverse().unwrap().scale(h.det());
            prop_assert!((inv.xx - u.xx).abs() < 1e-12 * (1.0 + u.xx.abs()));
            prop_assert!((inv.xy - u.xy).abs() < 1e-12 * (1.0 + u.xy.abs()));
            prop_assert!((inv.yy - u.yy).abs() < 1e-12 * (1.0 + u.yy.abs()));
        }
    }
}
