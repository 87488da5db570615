//! End-to-end flows across modules on the preset tables.

use std::f64::consts::FRAC_PI_2;

use billiards::counting::ChainPolytope;
use billiards::dynamics::{billiard_step, PhasePoint};
use billiards::polygon::{CircularPolygon, PolygonRecord};
use billiards::realization::{find_periodic, first_return_time, nodal_orbit, random_word, realize_itinerary, InitStrategy};
use billiards::spectrum::{orbit_length_decomposition, spectrum_interval};
use billiards::symbolic::{Alphabet, ChiPolicy};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ellipse() -> CircularPolygon {
    CircularPolygon::pseudo_ellipse(FRAC_PI_2, 1.0, 2.0).unwrap()
}

#[test]
fn polygon_survives_a_json_round_trip() {
    for poly in [
        ellipse(),
        CircularPolygon::moss_egg(1.0).unwrap(),
        CircularPolygon::triangle_sixgon([3.0, -1.0], [-1.0, -1.0], [0.0, 1.0], 1.0).unwrap(),
    ] {
        let text = serde_json::to_string(&PolygonRecord::from(&poly)).unwrap();
        let back = CircularPolygon::try_from(serde_json::from_str::<PolygonRecord>(&text).unwrap()).unwrap();
        // the 6-gon has no nodal orbits
        let x = nodal_orbit(&poly, 3).map_or(PhasePoint::new(0.3, 0.2), |o| o.points[0]);
        let (a, b) = (billiard_step(&poly, x).unwrap(), billiard_step(&back, x).unwrap());
        assert_eq!(a.post, b.post);
        assert_eq!(a.link_length, b.link_length);
    }
}

#[test]
fn counted_lattice_points_are_realized_by_periodic_orbits() {
    let e = ellipse();
    let chi = Alphabet::new(&e, ChiPolicy::HypothesisX).unwrap().chi;
    let chain = ChainPolytope::new(&e, chi, 1).unwrap();
    let q = 120;
    let points: Vec<Vec<i64>> = chain.enumerate_brute(q).into_iter().filter(|x| x.iter().sum::<i64>() == q).collect();
    assert_eq!(points.len() as u64, chain.count(q).unwrap().try_into().unwrap_or(u64::MAX));
    assert!(!points.is_empty());
    for x in points.iter().step_by(points.len().div_ceil(12)) {
        let orbit = find_periodic(&e, x, InitStrategy::EqualSpacing).unwrap();
        assert_eq!(orbit.period(), q);
        assert_eq!(&orbit.impacts_per_arc, x);
        assert!(orbit.orbit.closure_residual.unwrap() < 1e-8);
        let d = orbit_length_decomposition(&e, &orbit.orbit).unwrap();
        assert!((d.total - orbit.orbit.length()).abs() < 1e-9, "{} vs {}", d.total, orbit.orbit.length());
    }
}

#[test]
fn sliding_orbits_are_shorter_than_the_boundary() {
    let e = ellipse();
    let s = spectrum_interval(&e).unwrap();
    assert!(s.ordering_holds());
    for x in [[25, 25, 25, 25], [22, 28, 22, 28], [24, 26, 24, 26]] {
        let o = find_periodic(&e, &x, InitStrategy::EqualSpacing).unwrap();
        let q = o.period() as f64;
        let defect = (o.orbit.length() - e.total_length()) * q * q;
        assert!(defect < 0.0);
        // the scaled defect lies in the spectrum interval up to O(1/q) corrections
        assert!(defect > s.c1_minus * 1.1 && defect < s.c1_plus * 0.9, "{x:?}: {defect}");
    }
}

#[test]
fn realized_words_return_after_one_turn() {
    let e = ellipse();
    let a = Alphabet::new(&e, ChiPolicy::HypothesisX).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..10 {
        let w = random_word(&a, &mut rng, 40, 2).unwrap();
        let r = realize_itinerary(&e, &a, &w).unwrap();
        assert!(r.orbit.max_reflection_residual(&e) < 1e-9);
        let s1 = w.turn_sum(1).unwrap() as usize;
        assert_eq!(first_return_time(&e, r.nodes[0], 10_000).unwrap(), Some(s1));
    }
}
