use hardrank_core::prefcurve::{sigmoid, PreferenceCurve};
use proptest::prelude::*;

fn curve_strategy(a_min: f64) -> impl Strategy<Value = PreferenceCurve> {
    (a_min..=10.0f64, -10.0..=10.0f64, 0.05..=5.0f64)
        .prop_map(|(a, b, c)| PreferenceCurve::new(a, b, c).unwrap())
}

#[test]
fn sigmoid_curve_reduces_to_sigmoid() {
    let curve = PreferenceCurve::sigmoid();
    // additive recurrence with the golden ratio: a low-discrepancy cover of [-30, 30]
    let phi = 0.618_033_988_749_894_9;
    let mut u = 0.5;
    let mut worst = 0.0f64;
    for _ in 0..1_000_000 {
        u = (u + phi) % 1.0;
        let x = -30.0 + 60.0 * u;
        worst = worst.max((curve.g(x) - sigmoid(x)).abs());
    }
    assert!(worst < 1e-14, "worst deviation {worst}");
}

#[test]
fn extremum_matches_curve_for_documented_example() {
    let curve = PreferenceCurve::new(1.0, -1.0, 0.8).unwrap();
    let e = curve.extremum().unwrap();
    // dense grid over [-20, 20] with step 1e-4
    let (mut best_x, mut best) = (0.0, f64::MIN);
    for k in 0..=400_000 {
        let x = -20.0 + k as f64 * 1e-4;
        let d = curve.delta_g(x);
        if d > best {
            best = d;
            best_x = x;
        }
    }
    assert!((e.x_max - best_x).abs() <= 1e-4);
    assert!((e.x_max - 0.816_783_0).abs() < 1e-7);
    assert!((e.delta_max - best).abs() < 1e-8);
    let e = PreferenceCurve::new(1.0, 0.0, 1.0).unwrap().extremum().unwrap();
    assert!((e.delta_max - 2f64.sqrt() / (4.0 + 3.0 * 2f64.sqrt())).abs() < 1e-15);
}

#[test]
fn asymptotes() {
    for &(a, b, c) in &[(0.0, 0.0, 1.0), (1.0, -1.0, 0.8), (10.0, 10.0, 5.0), (0.3, -10.0, 0.05)] {
        let curve = PreferenceCurve::new(a, b, c).unwrap();
        assert!((curve.g(-60.0 / c) - a / (1.0 + a)).abs() < 1e-12);
        assert!((curve.g(60.0 / c) - 1.0).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn delta_g_is_minus_derivative_of_neg_log_g(curve in curve_strategy(0.0), x in -30.0..30.0f64) {
        let h = 1e-6;
        let fd = -(curve.neg_log_g(x + h) - curve.neg_log_g(x - h)) / (2.0 * h);
        prop_assert!((curve.delta_g(x) - fd).abs() < 1e-6, "analytic {} fd {}", curve.delta_g(x), fd);
    }

    #[test]
    fn delta_g_is_symmetric_around_peak(curve in curve_strategy(1e-3)) {
        let x_max = curve.extremum().unwrap().x_max;
        for k in 0..=1000 {
            let t = k as f64 * 1e-2;
            let gap = (curve.delta_g(x_max + t) - curve.delta_g(x_max - t)).abs();
            prop_assert!(gap < 1e-12, "t={t} gap={gap}");
        }
    }

    #[test]
    fn delta_g_is_unimodal(curve in curve_strategy(1e-3)) {
        let e = curve.extremum().unwrap();
        let c = curve.c();
        // 1e-3 grid over z in [z_max - 25, z_max + 25]; differences below a few
        // ulps of the peak are rounding, not shape
        let jitter = 4.0 * f64::EPSILON * e.delta_max;
        let n = (25.0 / c / 1e-3) as i64;
        let mut prev = curve.delta_g(e.x_max - n as f64 * 1e-3);
        for k in (-n + 1)..=n {
            let x = e.x_max + k as f64 * 1e-3;
            let d = curve.delta_g(x);
            if k <= 0 {
                prop_assert!(d >= prev - jitter, "decrease before peak at x={x}");
            } else {
                prop_assert!(d <= prev + jitter, "increase after peak at x={x}");
            }
            prev = d;
        }
        prop_assert!(e.delta_max > 0.0 && e.x_max.is_finite());
    }

    #[test]
    fn delta_g_bounded_by_peak(curve in curve_strategy(1e-3), x in -200.0..200.0f64) {
        let e = curve.extremum().unwrap();
        prop_assert!(curve.delta_g(x) <= e.delta_max + 1e-12);
        prop_assert!((curve.delta_g(e.x_max) - e.delta_max).abs() <= 1e-12 * e.delta_max);
    }

    #[test]
    fn g_is_increasing_and_in_range(curve in curve_strategy(0.0), x in -30.0..30.0f64, dx in 1e-3..1.0f64) {
        let lo = curve.lower_asymptote();
        let (g0, g1) = (curve.g(x), curve.g(x + dx));
        prop_assert!(g0 >= lo && g1 <= 1.0);
        prop_assert!(g1 >= g0);
        prop_assert!(curve.neg_log_g(x) >= 0.0);
        if curve.a() > 0.0 {
            prop_assert!(curve.neg_log_g(x) <= (1.0 + curve.a()).ln() - curve.a().ln() + 1e-12);
        }
    }

    #[test]
    fn neg_log_g_is_nonincreasing(curve in curve_strategy(0.0), x0 in -30.0..29.0f64) {
        let h = 1e-3;
        for k in 0..1000 {
            let x = x0 + k as f64 * h;
            let (f0, f1) = (curve.neg_log_g(x), curve.neg_log_g(x + h));
            // flat tails leave only rounding noise
            prop_assert!(f1 - f0 <= 4.0 * f64::EPSILON * f0.abs().max(f1.abs()));
        }
    }

    #[test]
    fn neg_log_g_is_convex_without_floor(b in -10.0..=10.0f64, c in 0.05..=5.0f64, x0 in -30.0..29.0f64) {
        let curve = PreferenceCurve::new(0.0, b, c).unwrap();
        let h = 1e-3;
        for k in 0..1000 {
            let x = x0 + k as f64 * h;
            let f = [x - h, x, x + h].map(|t| curve.neg_log_g(t));
            let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(f[0] - 2.0 * f[1] + f[2] >= -8.0 * f64::EPSILON * scale);
        }
    }

    #[test]
    fn neg_log_g_is_concave_before_the_peak(curve in curve_strategy(1e-3)) {
        // (-ln g)'' = -delta_g', and delta_g rises up to x_max whenever a > 0
        let e = curve.extremum().unwrap();
        let x = e.x_max - 0.5 / curve.c();
        let h = 1e-3 / curve.c();
        let second = curve.neg_log_g(x - h) - 2.0 * curve.neg_log_g(x) + curve.neg_log_g(x + h);
        prop_assert!(second < 0.0, "second difference {second} at {x}");
        prop_assert!(curve.delta_g(x - h) < curve.delta_g(x + h));
    }
}
