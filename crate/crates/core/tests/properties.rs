use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use ppgbp_core::arx::{grid_search, simulate_system};
use ppgbp_core::beats::{extract_bp_features, find_peak_indices};
use ppgbp_core::spline::CubicSpline;
use ppgbp_core::synth::{generate_session, subject_config};
use ppgbp_core::{OrderBounds, PeakDetectionParams, ProtocolConfig};

proptest! {
    #[test]
    fn peaks_are_translation_invariant(
        x in prop::collection::vec(-50.0f64..50.0, 3..300),
        c in -1e3f64..1e3,
        h in -60.0f64..60.0,
        p in 0.0f64..20.0,
        d in 1usize..40,
    ) {
        // keep the shift exact so comparisons see the same ordering
        let c = c.round();
        let x: Vec<f64> = x.iter().map(|v| (v * 16.0).round() / 16.0).collect();
        let shifted: Vec<f64> = x.iter().map(|v| v + c).collect();
        let a = find_peak_indices(&x, &PeakDetectionParams::new(h, p, d).unwrap());
        let b = find_peak_indices(&shifted, &PeakDetectionParams::new(h + c, p, d).unwrap());
        prop_assert_eq!(a, b);
    }

    #[test]
    fn spline_is_linear_in_the_data(
        steps in prop::collection::vec(0.2f64..2.0, 4..30),
        alpha in -5.0f64..5.0,
        beta in -5.0f64..5.0,
        seed in any::<u64>(),
    ) {
        let mut t = 0.0;
        let x: Vec<f64> = steps.iter().map(|s| { t += s; t }).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = x.iter().map(|_| rng.random_range(-100.0..100.0)).collect();
        let g: Vec<f64> = x.iter().map(|_| rng.random_range(-100.0..100.0)).collect();
        let mix: Vec<f64> = f.iter().zip(&g).map(|(a, b)| alpha * a + beta * b).collect();
        let (sf, sg, sm) = (
            CubicSpline::not_a_knot(&x, &f).unwrap(),
            CubicSpline::not_a_knot(&x, &g).unwrap(),
            CubicSpline::not_a_knot(&x, &mix).unwrap(),
        );
        let n = x.len();
        for k in 0..200 {
            let q = x[0] + (x[n - 1] - x[0]) * k as f64 / 199.0;
            let want = alpha * sf.eval(q) + beta * sg.eval(q);
            prop_assert!((sm.eval(q) - want).abs() <= 1e-9 * want.abs().max(1.0));
        }
    }

    #[test]
    fn map_scales_with_bp(k in 0.1f64..10.0, seed in 0u64..20) {
        let cfg = ProtocolConfig { baseline_nb_s: 20.0, n_breath_holds: 1, final_nb_s: 20.0, ..subject_config(&ProtocolConfig::default(), seed as usize) };
        let (s, _) = generate_session(&cfg, "S01").unwrap();
        let params = PeakDetectionParams::new(15.0 * k, 15.0 * k, 20).unwrap();
        let scaled = ppgbp_core::UniformSignal::new(
            s.bp.sample_rate_hz(), s.bp.t0_s(),
            s.bp.values().iter().map(|v| v * k).collect(),
            ppgbp_core::SignalLabel::Bp,
        ).unwrap();
        let base = extract_bp_features(&s.bp, &PeakDetectionParams::bp_default()).unwrap();
        let big = extract_bp_features(&scaled, &params).unwrap();
        prop_assert_eq!(base.map.times_s(), big.map.times_s());
        for (a, b) in base.map.values().iter().zip(big.map.values()) {
            prop_assert!((a * k - b).abs() <= 1e-9 * b.abs());
        }
    }
}

#[test]
fn dbp_lies_strictly_between_flanking_sbp() {
    for i in 0..5 {
        let (s, _) = generate_session(&subject_config(&ProtocolConfig::default(), i), "S01").unwrap();
        let f = extract_bp_features(&s.bp, &PeakDetectionParams::bp_default()).unwrap();
        let sbp = f.sbp.times_s();
        assert_eq!(f.dbp.len(), sbp.len() - 1);
        for (k, &t) in f.dbp.times_s().iter().enumerate() {
            assert!(sbp[k] < t && t < sbp[k + 1]);
        }
    }
}

#[test]
fn sin_spline_within_error_bound() {
    let h = 1.2;
    let x: Vec<f64> = (0..40).map(|k| k as f64 * h).collect();
    let y: Vec<f64> = x.iter().map(|t| t.sin()).collect();
    let s = CubicSpline::not_a_knot(&x, &y).unwrap();
    // |f''''| <= 1 for sin. The (5/384) h^4 bound is for clamped ends;
    // not-a-knot meets it away from the two outer intervals at each end.
    let bound = 5.0 / 384.0 * h.powi(4);
    let (mut interior, mut overall) = (0.0f64, 0.0f64);
    for k in 0..=4680 {
        let t = k as f64 * 0.01;
        let e = (s.eval(t) - t.sin()).abs();
        overall = overall.max(e);
        if t >= 2.0 * h && t <= x[39] - 2.0 * h {
            interior = interior.max(e);
        }
    }
    assert!(interior < bound, "{interior} vs {bound}");
    // scipy.interpolate.CubicSpline(bc_type="not-a-knot") on the same knots
    assert!((overall - 0.057176303518218785).abs() < 1e-9, "{overall}");
    for (t, want) in [(0.37, 0.41464811), (10.01, -0.54737176), (45.5, 0.99088082)] {
        assert!((s.eval(t) - want).abs() < 1e-8);
    }
}

#[test]
fn aic_picks_fewer_parameters_than_mse() {
    let mut rng = ChaCha8Rng::seed_from_u64(263);
    let mut fewer = 0;
    for _ in 0..50 {
        let n_a = rng.random_range(1..=2);
        let a: Vec<f64> = (0..n_a).map(|_| rng.random_range(-0.4..0.4)).collect();
        let b: Vec<f64> = (0..rng.random_range(1..=2)).map(|_| rng.random_range(0.5..1.5)).collect();
        let n_k = rng.random_range(0..=2);
        let u: Vec<f64> = (0..800).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<f64> = simulate_system(&a, &b, n_k, &u)
            .iter()
            .map(|v| v + 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let r = grid_search(&y, &u, &OrderBounds::default()).unwrap();
        if r.best_by_aic.orders.n_params() < r.best_by_mse.orders.n_params() {
            fewer += 1;
        }
    }
    assert!(fewer >= 40, "AIC chose fewer parameters in {fewer} of 50 trials");
}
