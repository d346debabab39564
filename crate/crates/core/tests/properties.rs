use proptest::prelude::*;

use robust_spc::estimators::{
    harrell_davis_median, hodges_lehmann, huber_m, mad_raw, mean, mslog_raw, qn_raw, sample_sd,
    LocationEstimatorSpec, QnVariant, DEFAULT_MSLOG_KAPPA,
};
use robust_spc::rng::{substream, Role};

type ScaleFn = fn(&[f64]) -> f64;
type LocFn = fn(&[f64]) -> f64;

fn scales() -> Vec<(&'static str, ScaleFn)> {
    vec![
        ("sd", |x| sample_sd(x).unwrap()),
        ("mad", |x| mad_raw(x).unwrap()),
        ("qn", |x| qn_raw(x, QnVariant::MedianOfPairs).unwrap()),
        ("qn-rc", |x| qn_raw(x, QnVariant::OrderStatistic).unwrap()),
        ("mslog", |x| mslog_raw(x, DEFAULT_MSLOG_KAPPA).unwrap()),
    ]
}

fn locations() -> Vec<(&'static str, LocFn)> {
    vec![
        ("mean", |x| mean(x).unwrap()),
        ("huber", |x| huber_m(x, &LocationEstimatorSpec::huber()).unwrap().value),
        ("hd", |x| harrell_davis_median(x).unwrap()),
        ("hl", |x| hodges_lehmann(x).unwrap()),
    ]
}

fn close(a: f64, b: f64, rel: f64, scale: f64) -> bool {
    (a - b).abs() <= rel * scale.max(a.abs()).max(b.abs()).max(1e-300)
}

fn sample() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 3..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn scale_estimators_are_absolutely_homogeneous_and_translation_invariant(
        xs in sample(), lambda in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], b in -1e3f64..1e3,
    ) {
        let ys: Vec<f64> = xs.iter().map(|x| lambda * x + b).collect();
        for (name, f) in scales() {
            let (sx, sy) = (f(&xs), f(&ys));
            let spread = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())) * lambda.abs() + b.abs();
            prop_assert!(close(sy, lambda.abs() * sx, 1e-8, 1e-6 * spread), "{name}: {sy} vs {}", lambda.abs() * sx);
        }
    }

    #[test]
    fn location_estimators_are_affine_equivariant(
        xs in sample(), lambda in prop_oneof![-50.0f64..-0.01, 0.01f64..50.0], b in -1e3f64..1e3,
    ) {
        let ys: Vec<f64> = xs.iter().map(|x| lambda * x + b).collect();
        let spread = xs.iter().fold(0.0f64, |m, x| m.max(x.abs())) * lambda.abs() + b.abs();
        for (name, f) in locations() {
            let (tx, ty) = (f(&xs), f(&ys));
            prop_assert!((ty - (lambda * tx + b)).abs() <= 1e-8 * spread.max(1.0), "{name}: {ty} vs {}", lambda * tx + b);
        }
    }

    #[test]
    fn estimators_ignore_order(xs in sample(), seed in any::<u64>()) {
        let mut ys = xs.clone();
        let mut stream = substream(seed, 0, Role::Phase1Data);
        for i in (1..ys.len()).rev() {
            ys.swap(i, stream.below(i + 1));
        }
        for (name, f) in scales() {
            prop_assert!(close(f(&xs), f(&ys), 1e-12, 1e-12), "{name}");
        }
        for (name, f) in locations() {
            let (a, b) = (f(&xs), f(&ys));
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{name}: {a} vs {b}");
        }
    }

    #[test]
    fn scale_estimators_are_nonnegative_and_zero_on_constants(c in -1e6f64..1e6, n in 2usize..20) {
        let xs = vec![c; n];
        for (name, f) in scales() {
            let v = f(&xs);
            // the sample mean of a constant can be off by an ulp
            prop_assert!((0.0..=1e-12 * c.abs()).contains(&v), "{}: {}", name, v);
        }
        let ys: Vec<f64> = (0..n).map(|i| c + i as f64).collect();
        for (name, f) in scales() {
            prop_assert!(f(&ys) > 0.0, "{}", name);
        }
    }
}

fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
    let mut stream = substream(seed, 0, Role::Phase1Data);
    (0..n).map(|_| stream.standard_normal()).collect()
}

const HUGE: f64 = 1e12;

fn contaminate(xs: &[f64], m: usize) -> Vec<f64> {
    let mut ys = xs.to_vec();
    for y in ys.iter_mut().take(m) {
        *y = HUGE;
    }
    ys
}

fn scale_bounded(f: ScaleFn, xs: &[f64], m: usize) -> bool {
    let clean = f(xs);
    let r = f(&contaminate(xs, m)) / clean;
    (0.1..=10.0).contains(&r)
}

fn location_bounded(f: LocFn, xs: &[f64], m: usize) -> bool {
    let s = sample_sd(xs).unwrap();
    (f(&contaminate(xs, m)) - f(xs)).abs() <= 10.0 * s
}

#[test]
fn breakdown_probes_at_n20() {
    for seed in 0..20 {
        let xs = normal_sample(20, seed);
        for m in 1..=9 {
            assert!(scale_bounded(|x| mad_raw(x).unwrap(), &xs, m), "mad m={m}");
            assert!(scale_bounded(|x| qn_raw(x, QnVariant::OrderStatistic).unwrap(), &xs, m), "qn-rc m={m}");
            assert!(scale_bounded(|x| mslog_raw(x, DEFAULT_MSLOG_KAPPA).unwrap(), &xs, m), "mslog m={m}");
            assert!(
                location_bounded(|x| huber_m(x, &LocationEstimatorSpec::huber()).unwrap().value, &xs, m),
                "huber m={m}"
            );
        }
        for m in 1..=5 {
            assert!(location_bounded(|x| hodges_lehmann(x).unwrap(), &xs, m), "hl m={m}");
        }
        assert!(!location_bounded(|x| hodges_lehmann(x).unwrap(), &xs, 9));
        assert!(mean(&contaminate(&xs, 1)).unwrap() > 1e8);
        assert!(sample_sd(&contaminate(&xs, 1)).unwrap() > 1e8);
    }
}

#[test]
fn median_of_pairs_qn_breaks_down_below_45_percent() {
    // m identical outliers among 20 give m(20 - m) huge pairwise distances
    // (outlier pairs are at distance 0); the median of the 190 distances is
    // corrupted once that count reaches 96, i.e. at m = 8.
    for seed in 0..20 {
        let xs = normal_sample(20, seed);
        let f = |x: &[f64]| qn_raw(x, QnVariant::MedianOfPairs).unwrap();
        for m in 1..=7 {
            assert!(scale_bounded(f, &xs, m), "m={m}");
        }
        assert!(!scale_bounded(f, &xs, 8));
        assert!(!scale_bounded(f, &xs, 9));
    }
}

fn pair_oracle(xs: &[f64], variant: QnVariant) -> f64 {
    let mut d = vec![];
    for i in 0..xs.len() {
        for j in 0..xs.len() {
            if i < j {
                d.push((xs[i] - xs[j]).abs());
            }
        }
    }
    d.sort_by(f64::total_cmp);
    match variant {
        QnVariant::MedianOfPairs => {
            let m = d.len();
            if m % 2 == 1 {
                d[m / 2]
            } else {
                0.5 * (d[m / 2 - 1] + d[m / 2])
            }
        }
        QnVariant::OrderStatistic => {
            let h = xs.len() / 2 + 1;
            d[h * (h - 1) / 2 - 1]
        }
    }
}

fn walsh_oracle(xs: &[f64]) -> f64 {
    let mut w = vec![];
    for i in 0..xs.len() {
        for j in i + 1..xs.len() {
            w.push((xs[i] + xs[j]) / 2.0);
        }
    }
    w.sort_by(f64::total_cmp);
    let m = w.len();
    if m % 2 == 1 {
        w[m / 2]
    } else {
        0.5 * (w[m / 2 - 1] + w[m / 2])
    }
}

/// Harrell-Davis weights by quadrature of the Beta((n+1)/2, (n+1)/2) density
/// after substituting `x = sin^2(t)`, which removes the endpoint singularity.
fn hd_weights_oracle(n: usize) -> Vec<f64> {
    let p = n as f64; // exponent 2a - 1 after substitution
    let integrand = |t: f64| 2.0 * (t.sin() * t.cos()).powf(p);
    let simpson = |a: f64, b: f64| {
        let m = 2000;
        let h = (b - a) / m as f64;
        let mut s = integrand(a) + integrand(b);
        for i in 1..m {
            s += integrand(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    };
    let t_of = |x: f64| x.sqrt().asin();
    let parts: Vec<f64> = (1..=n).map(|i| simpson(t_of((i - 1) as f64 / p), t_of(i as f64 / p))).collect();
    let total: f64 = parts.iter().sum();
    parts.iter().map(|v| v / total).collect()
}

#[test]
fn brute_force_equivalence_small_n() {
    for n in 2..=8 {
        let weights = hd_weights_oracle(n);
        for rep in 0..1000 {
            let mut stream = substream(n as u64, rep, Role::Phase1Data);
            // ties on purpose: half the samples are rounded
            let xs: Vec<f64> = (0..n)
                .map(|_| {
                    let z = stream.standard_normal();
                    if rep % 2 == 0 { (z * 2.0).round() } else { z }
                })
                .collect();
            for v in [QnVariant::MedianOfPairs, QnVariant::OrderStatistic] {
                assert_eq!(qn_raw(&xs, v).unwrap(), pair_oracle(&xs, v), "n={n} {v:?} {xs:?}");
            }
            assert_eq!(hodges_lehmann(&xs).unwrap(), walsh_oracle(&xs), "n={n} {xs:?}");
            let mut sorted = xs.clone();
            sorted.sort_by(f64::total_cmp);
            let direct: f64 = sorted.iter().zip(&weights).map(|(x, w)| x * w).sum();
            let scale = 1.0 + xs.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            assert!((harrell_davis_median(&xs).unwrap() - direct).abs() < 1e-10 * scale, "n={n}");
        }
    }
}
