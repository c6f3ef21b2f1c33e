use std::sync::Arc;

use proptest::prelude::*;
use singlab::analysis::*;
use singlab::grid::{Domain, Field, Grid};
use singlab::solver::{maximal_solution, SolveOptions};

fn ball(n: usize, radius: f64, h: f64) -> Arc<Grid> {
    Arc::new(Grid::build(&Domain::Ball { n, radius, r_inner: None }, h).unwrap())
}

#[test]
fn calibrated_bounds_hold_on_stable_instances() {
    let c_p = 10.0 * reference_p_constant(4.0).unwrap();
    let c_w = 10.0 * reference_w12_constant().unwrap();
    assert!(c_p > 0.0 && c_w > 0.0);

    let opts = SolveOptions::default();
    let g3 = ball(3, 1.0, 1.0 / 128.0);
    let phi3 = Field::constant(g3, 2.0);
    let u3 = maximal_solution(&phi3, &opts).unwrap().field;
    assert!(p_integral_check(&u3, 4.0, 2.0, c_p).unwrap().all_pass());
    assert!(w12_p2_check(&u3, &phi3, 2.0, c_w).unwrap().all_pass());

    // cone trace data on an annulus in ℝ⁷
    let ga = Arc::new(Grid::build(&Domain::Annulus { n: 7, r_inner: 0.1, r_outer: 1.0 }, 1e-3).unwrap());
    let cone = Field::from_radial_fn(ga, |r| r / 6f64.sqrt()).unwrap();
    assert!(w12_p2_check(&cone, &cone, 0.1 / 6f64.sqrt(), c_w).unwrap().all_pass());

    // linear ramp on the square
    let sq = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 1.0 / 32.0).unwrap());
    let ramp = Field::from_fn(sq, |x| 2.0 + x[0]).unwrap();
    let rep = maximal_solution(&ramp, &opts).unwrap();
    assert!(rep.converged);
    let w = w12_p2_check(&rep.field, &ramp, 2.0, c_w).unwrap();
    assert!(w.all_pass());
    let g = w.checks[0].params["grad_phi_sq"];
    assert!((g - 1.0).abs() < 0.05, "harmonic extension of x has gradient energy 1, got {g}");
}

#[test]
fn log_trick_gradient_side_scales_like_inverse_log() {
    let e = std::f64::consts::E;
    let radius = e.powi(4);
    let g = ball(2, radius, radius / 40_000.0);
    let cone = Field::from_radial_fn(g, |r| r).unwrap();
    let a = log_trick_functional(&cone, e).unwrap();
    let b = log_trick_functional(&cone, e * e).unwrap();
    let ratio = a.gradient / b.gradient;
    // 1/(log R)^{n−1} predicts 2 for n = 2
    assert!((ratio - 2.0).abs() / 2.0 < 0.3, "ratio {ratio}");
    assert!((a.gradient - log_trick_gradient_exact(2, e)).abs() / a.gradient < 0.02);
}

#[test]
fn holder_sampling_tracks_the_exhaustive_value() {
    let sq = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 1.0 / 160.0).unwrap());
    let u = Field::from_fn(sq, |x| (x[0] * x[0] + x[1] * x[1]).sqrt().powf(0.8)).unwrap();
    assert!(u.grid().len() > ALL_PAIRS_CAP);
    let sampled = holder_quotient(&u, 0.8, &Subdomain::Whole).unwrap();
    let small = holder_quotient(&u, 0.8, &Subdomain::Box { lo: vec![0.0, 0.0], hi: vec![0.5, 0.5] }).unwrap();
    assert!(sampled <= 1.0 + 1e-9 && sampled > 0.9, "{sampled}");
    assert!(small > 0.9);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn p_integral_nondecreasing_in_p(c in 0.05f64..0.9, p in 2.0f64..6.0, dp in 0.0f64..0.8) {
        let g = ball(3, 1.0, 1.0 / 32.0);
        let u = Field::from_radial_fn(g, |r| c * (0.5 + 0.5 * r)).unwrap();
        let a = p_integral_check(&u, p, c, 1.0).unwrap().checks[0].value;
        let b = p_integral_check(&u, p + dp, c, 1.0).unwrap().checks[0].value;
        // u < 1 everywhere, so u^{-p} grows with p
        prop_assert!(b >= a * (1.0 - 1e-12));
    }

    #[test]
    fn box_counts_shrink_as_boxes_grow(tau in 0.05f64..0.6) {
        let sq = Arc::new(Grid::build(&Domain::Box { dim: 2, lo: 0.0, hi: 1.0 }, 1.0 / 64.0).unwrap());
        let u = Field::from_fn(sq, |x| ((x[0] - 0.3).powi(2) + (x[1] - 0.6).powi(2)).sqrt()).unwrap();
        let rep = box_dimension(&u, tau, &[0.25, 0.125, 1.0 / 16.0, 1.0 / 32.0]).unwrap();
        let c = &rep.checks[0].params;
        let counts: Vec<f64> = (0..4).map(|k| c[&format!("count_{k}")]).collect();
        prop_assert!(counts.windows(2).all(|w| w[1] >= w[0]));
    }

    #[test]
    fn holder_quotient_grows_with_the_subdomain(lo in 0.1f64..0.4, w in 0.05f64..0.3, extra in 0.0f64..0.3) {
        let g = Arc::new(Grid::build(&Domain::Annulus { n: 5, r_inner: 0.1, r_outer: 1.0 }, 1.0 / 400.0).unwrap());
        let u = Field::from_radial_fn(g, |r| r.sqrt() + (7.0 * r).sin() * 0.1).unwrap();
        let inner = Subdomain::Shell { r_lo: lo, r_hi: lo + w };
        let outer = Subdomain::Shell { r_lo: lo, r_hi: (lo + w + extra).min(1.0) };
        prop_assert!(holder_quotient(&u, 0.7, &outer).unwrap() >= holder_quotient(&u, 0.7, &inner).unwrap());
    }

    #[test]
    fn checks_recompute_to_their_stored_verdict(rho in 0.01f64..0.25, level in 0.001f64..2.0) {
        let g = ball(4, 0.5, 1.0 / 256.0);
        let rep = positivity_check(&Field::constant(g, level), &[], rho).unwrap();
        for c in &rep.checks {
            prop_assert_eq!(c.recompute(), c.pass);
        }
    }
}
