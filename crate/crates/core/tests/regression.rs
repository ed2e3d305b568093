mod common;

use bayeslink::model::LinkageState;
use bayeslink::regression::{
    eval_match_logdensity, eval_nonmatch_logdensity, sample_regression_posterior, RegressionVariant,
};
use bayeslink::{BlockIndex, RegressionData, RegressionParams};
use common::solve;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

struct Linked {
    data: RegressionData,
    state: LinkageState,
    blocks: BlockIndex,
}

/// `n` linked pairs on the diagonal plus `extra` unlinked file-B records.
fn linked_fixture(seed: u64, n: usize, extra: usize, noise_sd: f64) -> Linked {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cov = Normal::new(1.0, 2.0).unwrap();
    let noise = Normal::new(0.0, noise_sd).unwrap();
    let n_b = n + extra;
    let x: Vec<f64> = (0..n_b * 2).map(|_| cov.sample(&mut rng)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 2.0 + 0.7 * x[2 * i] - 1.3 * x[2 * i + 1] + noise.sample(&mut rng))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    Linked {
        data: RegressionData::new(y, x, 2).unwrap(),
        state: LinkageState::from_pairs(n, n_b, &pairs).unwrap(),
        blocks: BlockIndex::unblocked(n, n_b),
    }
}

/// Normal equations over the linked pairs, solved independently.
fn oracle_fit(f: &Linked) -> (Vec<f64>, Vec<Vec<f64>>) {
    let d = 3;
    let mut zz = vec![vec![0.0; d]; d];
    let mut zy = vec![0.0; d];
    for (i, j) in f.state.pairs() {
        let z = [1.0, f.data.x[2 * j], f.data.x[2 * j + 1]];
        for r in 0..d {
            zy[r] += z[r] * f.data.y[i];
            for c in 0..d {
                zz[r][c] += z[r] * z[c];
            }
        }
    }
    let beta = solve(zz.clone(), zy);
    let inv: Vec<Vec<f64>> = (0..d)
        .map(|c| {
            let mut e = vec![0.0; d];
            e[c] = 1.0;
            solve(zz.clone(), e)
        })
        .collect();
    (beta, inv)
}

fn draws(f: &Linked, variant: RegressionVariant, n: usize, seed: u64) -> Vec<RegressionParams> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            sample_regression_posterior(&f.data, &f.blocks, &f.state, variant, &mut rng).unwrap()
        })
        .collect()
}

#[test]
fn match_coefficients_average_to_least_squares() {
    let f = linked_fixture(1, 60, 40, 0.8);
    let (beta, _) = oracle_fit(&f);
    let d = draws(&f, RegressionVariant::Brlvof, 10_000, 2);
    for c in 0..3 {
        let v: Vec<f64> = d.iter().map(|p| p.beta_m[c]).collect();
        let m = v.iter().sum::<f64>() / v.len() as f64;
        let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt();
        let se = sd / (v.len() as f64).sqrt();
        assert!(
            (m - beta[c]).abs() < 3.0 * se,
            "coefficient {c}: {m} vs {} (se {se})",
            beta[c]
        );
        assert!((m - beta[c]).abs() < 1e-2);
    }
    assert!(d.iter().all(|p| p.sigma2_m > 0.0 && p.sigma2_u > 0.0));
}

#[test]
fn coefficient_spread_scales_with_drawn_variance() {
    let f = linked_fixture(3, 40, 10, 1.0);
    let (beta, inv) = oracle_fit(&f);
    let d = draws(&f, RegressionVariant::Brlvof, 20_000, 4);
    for c in 0..3 {
        // β | σ² ~ N(β̂, σ² (ZᵀZ)⁻¹), so (β − β̂)² regressed on σ² has slope (ZᵀZ)⁻¹_cc.
        let xs: Vec<f64> = d.iter().map(|p| p.sigma2_m).collect();
        let ys: Vec<f64> = d.iter().map(|p| (p.beta_m[c] - beta[c]).powi(2)).collect();
        let n = xs.len() as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let resid: f64 = xs
            .iter()
            .zip(&ys)
            .map(|(x, y)| (y - intercept - slope * x).powi(2))
            .sum();
        let se = (resid / (n - 2.0) / sxx).sqrt();
        let want = inv[c][c];
        assert!(
            (slope - want).abs() < 4.0 * se,
            "coefficient {c}: slope {slope} vs {want} (se {se})"
        );
        let ratio: f64 = xs.iter().zip(&ys).map(|(x, y)| y / x).sum::<f64>() / n;
        assert!((ratio / want - 1.0).abs() < 0.05, "ratio {ratio} vs {want}");
    }
}

#[test]
fn noiseless_linkage_concentrates_the_match_arm() {
    let f = linked_fixture(5, 50, 5, 1e-9);
    let d = draws(&f, RegressionVariant::Brlvof, 200, 6);
    for p in &d {
        assert!(p.sigma2_m > 0.0 && p.sigma2_m < 1e-12);
        assert!((p.beta_m[0] - 2.0).abs() < 1e-6);
        assert!((p.beta_m[1] - 0.7).abs() < 1e-6);
        assert!((p.beta_m[2] + 1.3).abs() < 1e-6);
    }
}

#[test]
fn independent_nonmatch_arm_ignores_covariates() {
    let f = linked_fixture(7, 30, 30, 0.5);
    let d = draws(&f, RegressionVariant::BrlvofInd, 50, 8);
    for p in &d {
        assert_eq!(p.beta_u.len(), 1);
        let a = eval_nonmatch_logdensity(1.0, &[5.0, -3.0], p).unwrap();
        let b = eval_nonmatch_logdensity(1.0, &[-2.0, 0.5], p).unwrap();
        assert_eq!(a, b);
    }
    let full = draws(&f, RegressionVariant::Brlvof, 1, 9);
    assert_eq!(full[0].beta_u.len(), 3);
}

#[test]
fn nonmatch_mean_tracks_unlinked_pair_average() {
    let f = linked_fixture(10, 30, 30, 0.5);
    let mut sum = 0.0;
    let mut n = 0.0;
    for i in 0..f.data.n_a() {
        for j in 0..f.state.n_b() {
            if !f.state.is_linked(i, j) {
                sum += f.data.y[i];
                n += 1.0;
            }
        }
    }
    let d = draws(&f, RegressionVariant::BrlvofInd, 5_000, 11);
    let m = d.iter().map(|p| p.beta_u[0]).sum::<f64>() / d.len() as f64;
    assert!((m - sum / n).abs() < 1e-2, "{m} vs {}", sum / n);
}

/// Composite Simpson rule over `[lo, hi]`.
fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for k in 1..n {
        s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

#[test]
fn densities_integrate_to_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for variant in [RegressionVariant::Brlvof, RegressionVariant::BrlvofInd] {
        for _ in 0..5 {
            let p = RegressionParams {
                variant,
                beta_m: vec![rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0)],
                sigma2_m: rng.random_range(0.01..4.0),
                beta_u: match variant {
                    RegressionVariant::Brlvof => {
                        vec![rng.random_range(-3.0..3.0), rng.random_range(-2.0..2.0)]
                    }
                    RegressionVariant::BrlvofInd => vec![rng.random_range(-3.0..3.0)],
                },
                sigma2_u: rng.random_range(0.01..4.0),
            };
            let x_b = [rng.random_range(-2.0..2.0)];
            let m = simpson(
                |x| eval_match_logdensity(x, &x_b, &p).unwrap().exp(),
                -60.0,
                60.0,
                200_000,
            );
            let u = simpson(
                |x| eval_nonmatch_logdensity(x, &x_b, &p).unwrap().exp(),
                -60.0,
                60.0,
                200_000,
            );
            assert!((m - 1.0).abs() < 1e-6, "match {m}");
            assert!((u - 1.0).abs() < 1e-6, "nonmatch {u}");
        }
    }
}
