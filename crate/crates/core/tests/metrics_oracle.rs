use fetal_biometry::metrics::{agreement_report, paired_t_test, Ci95Form, MeasurementSet};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Straightforward reference implementation, written independently.
struct Oracle {
    bias: f64,
    ci95_centered: f64,
    ci95_classical: f64,
    mean_abs: f64,
    median_abs: f64,
}

fn oracle(m1: &[f64], m2: &[f64]) -> Oracle {
    let n = m1.len() as f64;
    let d: Vec<f64> = (0..m1.len()).map(|i| m1[i] - m2[i]).collect();
    let mut bias = 0.0;
    let mut mean_abs = 0.0;
    for i in (0..d.len()).rev() {
        bias += d[i] / n;
        mean_abs += d[i].abs() / n;
    }
    let mut centered = 0.0;
    let mut spread = 0.0;
    for di in &d {
        centered += (mean_abs - di) * (mean_abs - di);
        spread += (di - bias) * (di - bias);
    }
    // median by rank counting
    let abs: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let rank_value = |k: usize| -> f64 {
        *abs.iter()
            .find(|&&v| {
                let below = abs.iter().filter(|&&w| w < v).count();
                let at = abs.iter().filter(|&&w| w == v).count();
                below <= k && k < below + at
            })
            .unwrap()
    };
    let m = abs.len();
    let median_abs = if m % 2 == 1 {
        rank_value(m / 2)
    } else {
        (rank_value(m / 2 - 1) + rank_value(m / 2)) / 2.0
    };
    Oracle {
        bias,
        ci95_centered: 1.96 * (centered / n).sqrt(),
        ci95_classical: 1.96 * (spread / (n - 1.0)).sqrt(),
        mean_abs,
        median_abs,
    }
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

#[test]
fn thousand_random_vectors_match_the_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..1000 {
        let n = rng.random_range(2..120);
        let m1: Vec<f64> = (0..n).map(|_| rng.random_range(5.0..90.0)).collect();
        let m2: Vec<f64> = m1.iter().map(|v| v + rng.random_range(-4.0..4.0)).collect();
        let o = oracle(&m1, &m2);
        let a = MeasurementSet::from_values(m1.clone()).unwrap();
        let b = MeasurementSet::from_values(m2.clone()).unwrap();
        let r = agreement_report(&a, &b, Ci95Form::MeanAbsCentered).unwrap();
        let c = agreement_report(&a, &b, Ci95Form::Classical).unwrap();
        for (name, got, want) in [
            ("bias", r.bias, o.bias),
            ("ci95", r.ci95, o.ci95_centered),
            ("ci95 classical", c.ci95, o.ci95_classical),
            ("mean |d|", r.mean_abs, o.mean_abs),
            ("median |d|", r.median_abs, o.median_abs),
        ] {
            assert!(rel_close(got, want, 1e-9), "case {case} {name}: {got} vs {want}");
        }
    }
}

#[test]
fn worked_example() {
    let a = MeasurementSet::from_values(vec![10.0, 12.0]).unwrap();
    let b = MeasurementSet::from_values(vec![9.0, 13.0]).unwrap();
    let r = agreement_report(&a, &b, Ci95Form::MeanAbsCentered).unwrap();
    assert!((r.ci95 - 1.96 * 2f64.sqrt()).abs() < 1e-12);
    assert!((r.ci95 - 2.7719).abs() < 1e-4);
    assert_eq!(r.bias, 0.0);
    assert_eq!(r.mean_abs, 1.0);
}

/// Two-sided Student-t tail by quadrature: with `s = sqrt(nu) tan(theta)` the
/// density becomes `cos^(nu-1)(theta)`, smooth on `[0, pi/2]`.
fn t_two_sided_p(t: f64, nu: f64) -> f64 {
    let simpson = |a: f64, b: f64| {
        let n = 200_000;
        let h = (b - a) / n as f64;
        let f = |x: f64| x.cos().powf(nu - 1.0);
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let half_pi = std::f64::consts::FRAC_PI_2;
    let theta0 = (t.abs() / nu.sqrt()).atan();
    simpson(theta0, half_pi) / simpson(0.0, half_pi)
}

#[test]
fn t_test_p_values_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for shift in [0.0, 0.05, 0.15, 0.4] {
        let a: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = a.iter().map(|v| v.abs() + shift + rng.random_range(-0.3..0.3)).collect();
        let test = paired_t_test(&a, &b).unwrap();
        assert_eq!(test.dof, 49);
        let want = t_two_sided_p(test.t, 49.0);
        assert!((test.p_value - want).abs() < 1e-6, "t {}: {} vs {want}", test.t, test.p_value);
    }
}

fn paired_values() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    prop::collection::vec((1.0..100.0f64, -5.0..5.0f64), 2..60)
        .prop_map(|v| (v.iter().map(|p| p.0).collect(), v.iter().map(|p| p.0 + p.1).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn case_order_does_not_matter((m1, m2) in paired_values(), seed in any::<u64>()) {
        let n = m1.len();
        let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let a = MeasurementSet::new(ids.clone(), m1.clone()).unwrap();
        let b = MeasurementSet::new(ids.clone(), m2.clone()).unwrap();
        let b_shuffled = MeasurementSet::new(
            order.iter().map(|&i| ids[i].clone()).collect(),
            order.iter().map(|&i| m2[i]).collect(),
        ).unwrap();
        let r = agreement_report(&a, &b, Ci95Form::MeanAbsCentered).unwrap();
        let s = agreement_report(&a, &b_shuffled, Ci95Form::MeanAbsCentered).unwrap();
        prop_assert_eq!(r, s);
    }

    #[test]
    fn statistics_scale_with_units((m1, m2) in paired_values(), k in 0.1..10.0f64) {
        let a = MeasurementSet::from_values(m1.clone()).unwrap();
        let b = MeasurementSet::from_values(m2.clone()).unwrap();
        let ak = MeasurementSet::from_values(m1.iter().map(|v| v * k).collect()).unwrap();
        let bk = MeasurementSet::from_values(m2.iter().map(|v| v * k).collect()).unwrap();
        for form in [Ci95Form::MeanAbsCentered, Ci95Form::Classical] {
            let r = agreement_report(&a, &b, form).unwrap();
            let s = agreement_report(&ak, &bk, form).unwrap();
            let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * (1.0 + x.abs());
            prop_assert!(close(s.bias, k * r.bias));
            prop_assert!(close(s.ci95, k * r.ci95));
            prop_assert!(close(s.mean_abs, k * r.mean_abs));
            prop_assert!(close(s.median_abs, k * r.median_abs));
        }
    }

    #[test]
    fn swapping_methods_flips_bias_only((m1, m2) in paired_values()) {
        let a = MeasurementSet::from_values(m1).unwrap();
        let b = MeasurementSet::from_values(m2).unwrap();
        let r = agreement_report(&a, &b, Ci95Form::Classical).unwrap();
        let s = agreement_report(&b, &a, Ci95Form::Classical).unwrap();
        prop_assert!((r.bias + s.bias).abs() < 1e-12);
        prop_assert!((r.ci95 - s.ci95).abs() < 1e-9);
        prop_assert!((r.mean_abs - s.mean_abs).abs() < 1e-12);
    }
}
