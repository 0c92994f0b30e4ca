use std::sync::OnceLock;

use hbl_core::critical::AnalysisConstants;
use hbl_core::escape::*;
use hbl_core::geometry::{dist, Rect};
use hbl_core::manifolds::region::build_region_r;
use hbl_core::manifolds::tangency::{locate_a_star, TangencyConfig, TangencyReport};
use hbl_core::periodic::{enumerate_periodic, fixed_point_locations, fixed_points, PeriodicOrbit, SeedGrid};
use hbl_core::*;
use proptest::prelude::*;

fn tangency() -> &'static TangencyReport {
    static T: OnceLock<TangencyReport> = OnceLock::new();
    T.get_or_init(|| locate_a_star(1e-3, Orientation::Plus, [1.7, 2.4], &TangencyConfig::default()).unwrap())
}

fn bbox_grid(p: &MapParams, nx: usize, ny: usize) -> EscapeGrid {
    let [x0, x1, y0, y1] = build_region_r(p).unwrap().bbox;
    EscapeGrid { nx, ny, rect: Rect::new(x0, x1, y0, y1) }
}

#[test]
fn escape_fractions_at_the_tangency() {
    let p = MapParams::new(tangency().a_star, 1e-3, Orientation::Plus).unwrap();
    let e = measure_escape(&p, &bbox_grid(&p, 1000, 100), &[100, 1000, 10_000]);
    let f = &e.fraction_bounded;
    assert!(e.monotone);
    assert!(f[0] > f[1] && f[1] > f[2], "{f:?}");
    // calibrated on this grid
    assert_eq!(f[2], 0.0);
    assert!((f[1] - 1.3e-4).abs() < 1e-12, "{f:?}");
    assert!((f[0] - 0.43783).abs() < 1e-12, "{f:?}");
    assert!(!e.caveat.is_empty());
}

#[test]
fn deep_horseshoe_escapes_fast() {
    let p = MapParams::new(tangency().a_star + 0.2, 1e-3, Orientation::Plus).unwrap();
    let e = measure_escape(&p, &bbox_grid(&p, 400, 40), &[100]);
    assert!(e.fraction_bounded[0] < 0.01, "{:?}", e.fraction_bounded);
}

#[test]
fn grid_outside_the_bounded_set_escapes() {
    let p = MapParams::new(2.0, 1e-3, Orientation::Plus).unwrap();
    let g = EscapeGrid { nx: 20, ny: 20, rect: Rect::new(2.2, 2.9, -0.5, 0.5) };
    let e = measure_escape(&p, &g, &[1, 10, 100]);
    assert_eq!(e.fraction_bounded, vec![0.0; 3]);
    assert!(e.monotone);
    assert_eq!(e.csv().lines().next(), Some(EscapeReport::CSV_HEADER));
}

#[test]
fn bounded_sample_re_verifies() {
    let t = tangency();
    let p = MapParams::new(t.a_star, 1e-3, Orientation::Plus).unwrap();
    let eps = 0.05;
    let s = sample_bounded(&p, 100, 100, eps, t.tangency_point, 9).unwrap();
    assert_eq!(s.points.len(), 100);
    assert!(s.verify(&p));
    let w = Rect::working();
    for seg in &s.segments {
        assert_eq!(seg.len(), 201);
        for pair in seg.windows(2) {
            let f = p.step(&pair[0]);
            assert!((f.x - pair[1].x).abs() < 1e-12 && (f.y - pair[1].y).abs() < 1e-12);
        }
        assert!(seg.iter().all(|z| w.contains(z) && dist(z, &t.tangency_point) >= eps));
    }
    let again = sample_bounded(&p, 100, 100, eps, t.tangency_point, 9).unwrap();
    assert_eq!(again.points, s.points);
}

#[test]
fn saddle_qualifies() {
    let t = tangency();
    let p = MapParams::new(t.a_star, 1e-3, Orientation::Plus).unwrap();
    let q = fixed_points(&p).unwrap().q.points[0];
    let eps = 0.5 * dist(&q, &t.tangency_point);
    assert!(admits(&p, &[q; 11], &t.tangency_point, eps));
    assert!(!admits(&p, &[t.tangency_point], &t.tangency_point, eps));
}

#[test]
fn uniform_expansion_above_the_tangency() {
    let t = tangency();
    let p = MapParams::new(t.a_star + 0.1, 1e-3, Orientation::Plus).unwrap();
    let k = AnalysisConstants::for_map(&p, 0.1).unwrap();
    let s = sample_bounded(&p, 100, 200, 0.05, t.tangency_point, 1).unwrap();
    let r = verify_uniform_expansion(&p, &k, &s, 100).unwrap();
    assert!(r.pass(), "{r:?}");
    assert!(r.lambda_star >= 1.05);
    assert!(check_expansion_bound(&p, &k, &s, r.lambda_star, r.n_star, r.n_max).is_empty());
}

#[test]
fn uniform_expansion_away_from_the_tangency() {
    let t = tangency();
    let p = MapParams::new(t.a_star, 1e-3, Orientation::Plus).unwrap();
    let k = AnalysisConstants::for_map(&p, 0.1).unwrap();
    let s = sample_bounded(&p, 100, 200, 0.05, t.tangency_point, 2).unwrap();
    let r = verify_uniform_expansion(&p, &k, &s, 100).unwrap();
    assert!(r.pass(), "{r:?}");
    assert!(r.lambda_star > 1.0 && r.skipped == 0);
    assert!(check_expansion_bound(&p, &k, &s, r.lambda_star, r.n_star, r.n_max).is_empty());
    // a slightly faster rate must fail somewhere
    assert!(!check_expansion_bound(&p, &k, &s, r.lambda_star * 1.01, r.n_star, r.n_max).is_empty());
}

#[test]
fn attracting_fixed_point_is_flagged() {
    let p = MapParams::new(0.5, 0.05, Orientation::Plus).unwrap();
    let (z1, z2) = fixed_point_locations(&p).unwrap();
    let orbits = vec![PeriodicOrbit::from_cycle(&p, vec![z1]), PeriodicOrbit::from_cycle(&p, vec![z2])];
    let r = verify_no_attracting_periodic(&orbits);
    assert!(!r.pass());
    assert_eq!(r.violations.len(), 1);
    assert!(r.violations[0].multiplier_moduli.iter().all(|m| *m < 1.0));
}

#[test]
fn empty_orbit_list_passes_with_warning() {
    let r = verify_no_attracting_periodic(&[]);
    assert!(r.pass() && r.warning.is_some());
}

#[test]
fn no_attracting_orbits_at_the_tangency() {
    let p = MapParams::new(tangency().a_star, 1e-3, Orientation::Plus).unwrap();
    let e = enumerate_periodic(&p, 12, &SeedGrid::default()).unwrap();
    let r = verify_no_attracting_periodic(&e.orbits);
    assert!(r.pass(), "{:?}", r.violations);
    assert!(r.warning.is_none());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn fractions_never_increase(a in 1.8f64..2.4, mut hs in prop::collection::vec(1usize..300, 1..5)) {
        let p = MapParams::new(a, 1e-3, Orientation::Plus).unwrap();
        let g = EscapeGrid { nx: 40, ny: 10, rect: Rect::new(-1.0, 1.0, -0.03, 0.03) };
        hs.sort();
        let e = measure_escape(&p, &g, &hs);
        prop_assert!(e.monotone);
        prop_assert!(e.fraction_bounded.windows(2).all(|w| w[1] <= w[0]));
    }
}
