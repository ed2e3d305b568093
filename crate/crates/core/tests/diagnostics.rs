use bayeslink::diagnostics::{autocorrelation, diagnose, geweke_z};
use bayeslink::TraceSeries;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn ar1(seed: u64, n: usize, phi: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e = Normal::new(0.0, 1.0).unwrap();
    let mut x = 0.0;
    (0..n)
        .map(|_| {
            x = phi * x + e.sample(&mut rng);
            x
        })
        .collect()
}

proptest! {
    #[test]
    fn geweke_is_affine_invariant(
        seed in any::<u64>(),
        phi in -0.9f64..0.9,
        scale in prop_oneof![0.01f64..100.0, -100.0f64..-0.01],
        shift in -1e3f64..1e3,
    ) {
        let x = ar1(seed, 500, phi);
        let y: Vec<f64> = x.iter().map(|v| shift + scale * v).collect();
        let zx = geweke_z(&x, 0.1, 0.5).unwrap();
        let zy = geweke_z(&y, 0.1, 0.5).unwrap();
        let want = zx * scale.signum();
        prop_assert!((zy - want).abs() < 1e-6 * (1.0 + want.abs()), "{} vs {}", zy, want);
    }

    #[test]
    fn acf_is_bounded(
        x in proptest::collection::vec(-1e3f64..1e3, 30..200),
        lags in 1usize..14,
    ) {
        prop_assume!(x.iter().any(|v| *v != x[0]));
        let acf = autocorrelation(&x, lags).unwrap();
        prop_assert_eq!(acf.len(), lags + 1);
        prop_assert_eq!(acf[0], 1.0);
        for r in &acf {
            prop_assert!((-1.0..=1.0).contains(r));
        }
    }
}

#[test]
fn ar1_lag_one_is_recovered() {
    let x = ar1(3, 100_000, 0.6);
    let acf = autocorrelation(&x, 3).unwrap();
    assert!((acf[1] - 0.6).abs() < 0.01);
    assert!((acf[2] - 0.36).abs() < 0.015);
}

#[test]
fn stationary_chain_usually_passes() {
    let passes = (0..200)
        .filter(|&s| geweke_z(&ar1(s, 2000, 0.5), 0.1, 0.5).unwrap().abs() < 2.0)
        .count();
    assert!(passes >= 180, "{passes} of 200");
}

#[test]
fn trending_chain_fails() {
    let x: Vec<f64> = ar1(9, 1000, 0.2)
        .into_iter()
        .enumerate()
        .map(|(k, v)| v + k as f64 * 0.01)
        .collect();
    let report = diagnose(
        &[
            TraceSeries {
                name: "drift".into(),
                values: x,
            },
            TraceSeries {
                name: "flat".into(),
                values: vec![2.0; 100],
            },
        ],
        5,
    );
    assert_eq!(report[0].pass, Some(false));
    assert_eq!(report[0].acf.len(), 6);
    assert_eq!(report[1].geweke_z, None);
    assert!(report[1].note.is_some());
}
