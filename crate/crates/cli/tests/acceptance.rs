//! End-to-end acceptance checks. Each criterion prints one PASS or FAIL line.
//!
//! Run a subset with `cargo test --test acceptance -- 1 3 10`.

mod common;

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use bayeslink::inference::combine_mi;
use bayeslink::model::{self, pair_log_lr, LinkageState, RegressionTerms};
use bayeslink::regression::{
    eval_match_logdensity, eval_nonmatch_logdensity, initial_params, sample_regression_posterior,
    RegressionVariant,
};
use bayeslink::sampler::{mh_sweep, multinomial_sweep};
use bayeslink::simulation::{
    generate_files, kl_bivariate_normal, run_blocked, run_factorial, ResultRow, SimulationChain,
    SimulationFactors, KL_GRID,
};
use bayeslink::{
    BlockIndex, ComparisonTable, Kernel, Method, MixtureParams, PriorConfig, RegressionData,
    RegressionParams,
};
use common::{bayeslink, link_config, small_factors, status, write, write_files};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn fact(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

/// All one-to-one linkages of an `n_a × n_b` grid.
fn linkages(n_a: usize, n_b: usize) -> Vec<Vec<(usize, usize)>> {
    let mut out = vec![Vec::new()];
    for i in 0..n_a {
        let mut next = Vec::new();
        for c in &out {
            next.push(c.clone());
            for j in 0..n_b {
                if c.iter().all(|&(_, b)| b != j) {
                    let mut d = c.clone();
                    d.push((i, j));
                    next.push(d);
                }
            }
        }
        out = next;
    }
    out
}

fn criterion_1() -> Verdict {
    let gamma = |i: usize, j: usize| [if i == j { 2u8 } else { 1 }, if j == 0 { 2 } else { 1 }];
    let levels = vec![2, 2];
    let g: Vec<u8> = (0..2)
        .flat_map(|i| (0..2).flat_map(move |j| gamma(i, j)))
        .collect();
    let table =
        ComparisonTable::from_levels(levels.clone(), BlockIndex::unblocked(2, 2), g).unwrap();
    let theta = MixtureParams::new(
        levels.clone(),
        vec![0.1, 0.9, 0.2, 0.8],
        vec![0.7, 0.3, 0.6, 0.4],
    )
    .unwrap();
    let prior = PriorConfig::flat(&levels);
    let configs = linkages(2, 2);
    // uniform match proportion: p(C) = (2 − n)! / 2! · n! (2 − n)! / 3!
    let weight = |c: &[(usize, usize)]| {
        let n = c.len();
        let mut w = fact(2 - n) / fact(2) * fact(n) * fact(2 - n) / fact(3);
        for i in 0..2 {
            for j in 0..2 {
                let th = if c.contains(&(i, j)) {
                    &theta.theta_m
                } else {
                    &theta.theta_u
                };
                let gm = gamma(i, j);
                w *= th[gm[0] as usize - 1] * th[2 + gm[1] as usize - 1];
            }
        }
        w
    };
    let w: Vec<f64> = configs.iter().map(|c| weight(c)).collect();
    let z: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|x| x / z).collect();
    let mut tvs = Vec::new();
    for (k, kernel) in [Kernel::MetropolisHastings, Kernel::AdaptiveMultinomial]
        .into_iter()
        .enumerate()
    {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + k as u64);
        let mut state = LinkageState::empty(2, 2);
        let mut counts: BTreeMap<Vec<(usize, usize)>, usize> = BTreeMap::new();
        let sweeps = 50_000;
        for s in 0..sweeps + 500 {
            match kernel {
                Kernel::MetropolisHastings => {
                    mh_sweep(&mut state, &table, &theta, None, &prior, &mut rng).unwrap()
                }
                Kernel::AdaptiveMultinomial => {
                    multinomial_sweep(&mut state, &table, &theta, None, &prior, &mut rng).unwrap()
                }
            };
            if s >= 500 {
                *counts.entry(state.pairs().collect()).or_default() += 1;
            }
        }
        let tv = 0.5
            * configs
                .iter()
                .zip(&exact)
                .map(|(c, p)| (*counts.get(c).unwrap_or(&0) as f64 / sweeps as f64 - p).abs())
                .sum::<f64>();
        tvs.push(tv);
    }
    verdict(
        configs.len() == 7 && tvs.iter().all(|&t| t < 0.02),
        format!(
            "{} configurations; TV MH {:.4}, multinomial {:.4} (< 0.02)",
            configs.len(),
            tvs[0],
            tvs[1]
        ),
    )
}

fn criterion_2() -> Verdict {
    let mut worst: f64 = 0.0;
    for (a, b) in [(1.0, 1.0), (1.0, 2.0), (2.0, 3.0)] {
        let prior = PriorConfig::symmetric(&[2], 1.0, a, b);
        for n_a in 0..=4 {
            for n_b in 0..=4 {
                let total: f64 = linkages(n_a, n_b)
                    .iter()
                    .map(|c| {
                        let s = LinkageState::from_pairs(n_a, n_b, c).unwrap();
                        model::log_prior_linkage(&s, &prior).unwrap().exp()
                    })
                    .sum();
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    verdict(
        worst < 1e-10,
        format!("max |Σ p(C) − 1| = {worst:.2e} (< 1e-10)"),
    )
}

fn kl_quadrature(rho_m: f64, rho_u: f64) -> f64 {
    let (h, half) = (0.02, 12.0);
    let n = (2.0 * half / h) as usize;
    let tau = 2.0 * std::f64::consts::PI;
    let phi = |z: f64| (-0.5 * z * z).exp() / tau.sqrt();
    let log_bvn = |x: f64, y: f64, r: f64| {
        let d = 1.0 - r * r;
        -tau.ln() - 0.5 * d.ln() - (x * x - 2.0 * r * x * y + y * y) / (2.0 * d)
    };
    let c = (1.0 - rho_m * rho_m).sqrt();
    let mut total = 0.0;
    for a in 0..=n {
        let z1 = -half + a as f64 * h;
        let w1 = if a == 0 || a == n { 0.5 } else { 1.0 };
        for b in 0..=n {
            let z2 = -half + b as f64 * h;
            let w2 = if b == 0 || b == n { 0.5 } else { 1.0 };
            let (x, y) = (z1, rho_m * z1 + c * z2);
            total += w1 * w2 * phi(z1) * phi(z2) * (log_bvn(x, y, rho_m) - log_bvn(x, y, rho_u));
        }
    }
    total * h * h
}

fn criterion_3() -> Verdict {
    let headline: f64 = kl_bivariate_normal(0.65, 0.05).unwrap();
    let cells = [
        (-0.95, -0.85, 0.22),
        (-0.85, 0.95, 17.02),
        (-0.65, -0.95, 2.03),
        (-0.25, 0.45, 0.31),
        (0.05, -0.95, 8.58),
        (0.15, 0.85, 1.51),
        (0.35, -0.45, 0.40),
        (0.65, 0.05, 0.24),
        (0.85, 0.65, 0.14),
        (0.95, -0.95, 18.51),
    ];
    let cell_gap = cells
        .iter()
        .map(|&(m, u, want)| (kl_bivariate_normal::<f64>(m, u).unwrap() - want).abs())
        .fold(0.0, f64::max);
    let mut quad_gap: f64 = 0.0;
    for &m in &KL_GRID {
        for &u in &KL_GRID {
            quad_gap = quad_gap
                .max((kl_bivariate_normal::<f64>(m, u).unwrap() - kl_quadrature(m, u)).abs());
        }
    }
    verdict(
        (headline - 0.24).abs() < 0.005 && cell_gap < 0.01 && quad_gap < 1e-4,
        format!(
            "K(0.65, 0.05) = {headline:.4}; table cells max gap {cell_gap:.4}; quadrature max gap {quad_gap:.2e}"
        ),
    )
}

fn mean_se(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, (v / n).sqrt())
}

fn criterion_4() -> Verdict {
    let factors = SimulationFactors {
        n_a: 20_000,
        n_b: 20_000,
        n_m: 10_000,
        sigma: 0.1,
        beta_m: 0.5,
        ..SimulationFactors::default()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let sim = generate_files(&factors, &mut rng).unwrap();
    let data = sim.regression_data();
    let mut nonmatches = Vec::with_capacity(10_000);
    while nonmatches.len() < 10_000 {
        let (i, j) = (
            rng.random_range(0..factors.n_a),
            rng.random_range(0..factors.n_b),
        );
        if !sim.truth.is_match(i, j) {
            nonmatches.push((i, j));
        }
    }
    let mut params = initial_params(
        &data,
        &BlockIndex::unblocked(factors.n_a, factors.n_b),
        RegressionVariant::Brlvof,
    )
    .unwrap();
    params.beta_m = vec![10.0, factors.beta_m];
    params.sigma2_m = factors.sigma * factors.sigma;
    let theta = MixtureParams::uniform(&[2, 4, 4]);
    let gamma = [2u8, 4, 4];
    let diff = |pairs: &[(usize, usize)]| -> Vec<f64> {
        pairs
            .iter()
            .map(|&(i, j)| {
                let terms = RegressionTerms {
                    params: &params,
                    x_a: data.y[i],
                    x_b: data.covariates(j),
                };
                pair_log_lr(&gamma, &theta, Some(terms)).unwrap()
                    - pair_log_lr(&gamma, &theta, None).unwrap()
            })
            .collect()
    };
    let (mm, ms) = mean_se(&diff(&sim.truth.pairs));
    let (um, us) = mean_se(&diff(&nonmatches));
    verdict(
        mm > 3.0 * ms && um < -3.0 * us,
        format!("matches {mm:.3} ± {ms:.3}; nonmatches {um:.3} ± {us:.3} over 10^4 pairs each"),
    )
}

fn find<'a>(rows: &'a [ResultRow], eps: f64, method: &str) -> &'a ResultRow {
    rows.iter()
        .find(|r| r.epsilon == eps && r.method == method)
        .expect("row present")
}

fn criterion_5() -> Verdict {
    let design: Vec<SimulationFactors> = [0.0, 0.2, 0.4]
        .into_iter()
        .map(|epsilon| SimulationFactors {
            epsilon,
            ..SimulationFactors::default()
        })
        .collect();
    let rows = run_factorial(
        &design,
        10,
        &[Method::Brl, Method::Brlvof],
        &SimulationChain::default(),
        2024,
    )
    .unwrap();
    let a = find(&rows, 0.0, "brl");
    let b = find(&rows, 0.2, "brlvof");
    let pass_a = (a.tpr - 0.9984).abs() <= 0.01 && (a.ppv - 0.8845).abs() <= 0.08;
    let pass_b = (b.tpr - 0.8986).abs() <= 0.03
        && (b.ppv - 0.9892).abs() <= 0.03
        && (b.f1 - 0.9416).abs() <= 0.03;
    let order: Vec<(f64, f64, f64)> = [0.0, 0.2, 0.4]
        .into_iter()
        .map(|e| (e, find(&rows, e, "brlvof").ppv, find(&rows, e, "brl").ppv))
        .collect();
    let pass_c = order.iter().all(|&(_, v, b)| v > b);
    let ordering: Vec<String> = order
        .iter()
        .map(|(e, v, b)| format!("ε={e}: {v:.4} > {b:.4}"))
        .collect();
    verdict(
        pass_a && pass_b && pass_c,
        format!(
            "(a) BRL ε=0 TPR {:.4} PPV {:.4} [{}]; (b) BRLVOF ε=0.2 TPR {:.4} PPV {:.4} F1 {:.4} [{}]; (c) PPV {} [{}]",
            a.tpr,
            a.ppv,
            if pass_a { "ok" } else { "off" },
            b.tpr,
            b.ppv,
            b.f1,
            if pass_b { "ok" } else { "off" },
            ordering.join(", "),
            if pass_c { "ok" } else { "off" },
        ),
    )
}

fn criterion_6() -> Verdict {
    let design = [SimulationFactors {
        epsilon: 0.2,
        p: 1,
        beta_m: 0.5,
        ..SimulationFactors::default()
    }];
    let rows = run_factorial(
        &design,
        10,
        &[Method::Brlvof, Method::BrlvofInd],
        &SimulationChain::default(),
        606,
    )
    .unwrap();
    let (v, i) = (find(&rows, 0.2, "brlvof"), find(&rows, 0.2, "brlvof_ind"));
    let (dt, dp) = ((v.tpr - i.tpr).abs(), (v.ppv - i.ppv).abs());
    verdict(
        dt < 0.05 && dp < 0.05,
        format!(
            "TPR {:.4} vs {:.4}, PPV {:.4} vs {:.4}; |ΔTPR| {dt:.4}, |ΔPPV| {dp:.4} (< 0.05)",
            v.tpr, i.tpr, v.ppv, i.ppv
        ),
    )
}

fn criterion_7() -> Verdict {
    let rows = run_blocked(
        0.0,
        10,
        &[Method::Brlvof, Method::BrlvofInd],
        &SimulationChain::default(),
        707,
    )
    .unwrap();
    let (v, i) = (find(&rows, 0.0, "brlvof"), find(&rows, 0.0, "brlvof_ind"));
    verdict(
        v.tpr >= i.tpr && v.bias <= i.bias,
        format!(
            "TPR {:.6} vs {:.6}; bias {:.3e} vs {:.3e}",
            v.tpr, i.tpr, v.bias, i.bias
        ),
    )
}

fn criterion_8() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 80;
    let n_b = 120;
    let x: Vec<f64> = (0..n_b).map(|_| rng.random_range(-3.0..5.0)).collect();
    let y: Vec<f64> = (0..n)
        .map(|i| 1.5 - 0.8 * x[i] + rng.random_range(-1.0..1.0))
        .collect();
    let pairs: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let state = LinkageState::from_pairs(n, n_b, &pairs).unwrap();
    let data = RegressionData::new(y.clone(), x.clone(), 1).unwrap();
    let blocks = BlockIndex::unblocked(n, n_b);

    // normal equations for an intercept and one slope
    let (mut s1, mut sx, mut sxx, mut sy, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(i, j) in &pairs {
        s1 += 1.0;
        sx += x[j];
        sxx += x[j] * x[j];
        sy += y[i];
        sxy += x[j] * y[i];
    }
    let det = s1 * sxx - sx * sx;
    let oracle = [(sxx * sy - sx * sxy) / det, (s1 * sxy - sx * sy) / det];

    let draws: Vec<RegressionParams> = (0..10_000)
        .map(|_| {
            sample_regression_posterior(&data, &blocks, &state, RegressionVariant::Brlvof, &mut rng)
                .unwrap()
        })
        .collect();
    let mut mean_ok = true;
    let mut parts = Vec::new();
    for c in 0..2 {
        let v: Vec<f64> = draws.iter().map(|d| d.beta_m[c]).collect();
        let (m, se) = mean_se(&v);
        let post_sd = se * (v.len() as f64).sqrt();
        mean_ok &= (m - oracle[c]).abs() < 3.0 * se;
        parts.push(format!(
            "β[{c}] {m:.5} vs {:.5} (MC se {se:.1e}, posterior sd {post_sd:.1e})",
            oracle[c]
        ));
    }
    let pos = draws.iter().all(|d| d.sigma2_m > 0.0 && d.sigma2_u > 0.0);

    let mut worst: f64 = 0.0;
    for variant in [RegressionVariant::Brlvof, RegressionVariant::BrlvofInd] {
        let p = RegressionParams {
            variant,
            beta_m: vec![0.7, -1.2],
            sigma2_m: 0.3,
            beta_u: if variant == RegressionVariant::Brlvof {
                vec![2.0, 0.4]
            } else {
                vec![2.0]
            },
            sigma2_u: 2.5,
        };
        let xb = [1.3];
        let (lo, hi, steps) = (-40.0, 40.0, 160_000);
        let h = (hi - lo) / steps as f64;
        let simpson = |f: &dyn Fn(f64) -> f64| {
            let mut s = f(lo) + f(hi);
            for k in 1..steps {
                s += f(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let m = simpson(&|v| eval_match_logdensity(v, &xb, &p).unwrap().exp());
        let u = simpson(&|v| eval_nonmatch_logdensity(v, &xb, &p).unwrap().exp());
        worst = worst.max((m - 1.0).abs()).max((u - 1.0).abs());
    }
    verdict(
        mean_ok && pos && worst < 1e-6,
        format!(
            "{}; density integrals within {worst:.1e} of 1",
            parts.join(", ")
        ),
    )
}

fn criterion_9() -> Verdict {
    let r = combine_mi(&[(0.0f64, 1.0), (0.0, 1.0), (3.0, 1.0)], 0.95).unwrap();
    let worked = r.total == 5.0 && r.df == 3.125;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut invariant = true;
    for _ in 0..200 {
        let m = rng.random_range(2..20);
        let est: Vec<(f64, f64)> = (0..m)
            .map(|_| (rng.random_range(-5.0..5.0), rng.random_range(0.0..2.0)))
            .collect();
        let mut perm = est.clone();
        for k in (1..m).rev() {
            perm.swap(k, rng.random_range(0..=k));
        }
        let (a, b) = (
            combine_mi(&est, 0.95).unwrap(),
            combine_mi(&perm, 0.95).unwrap(),
        );
        invariant &= a.estimate.to_bits() == b.estimate.to_bits()
            && a.total.to_bits() == b.total.to_bits()
            && a.df.to_bits() == b.df.to_bits()
            && a.lo.to_bits() == b.lo.to_bits()
            && a.hi.to_bits() == b.hi.to_bits();
    }
    verdict(
        worked && invariant,
        format!(
            "T = {}, ν = {}; permutation invariance over 200 shuffles: {}",
            r.total,
            r.df,
            if invariant { "bit-exact" } else { "differs" }
        ),
    )
}

fn snapshot(dir: &Path, files: &[&str]) -> Vec<Vec<u8>> {
    files
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap_or_default())
        .collect()
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_files(d, 10, &small_factors());
    write(d, "link.toml", &link_config("brlvof", 200, ""));
    write(
        d,
        "mi.toml",
        "links = \"run/links.csv\"\nfile_a = \"a.csv\"\nfile_b = \"b.csv\"\noutcome = \"x_a\"\ncovariates = [\"x_b1\"]\nestimand = \"correlation\"\noutput = \"mi.json\"\n",
    );
    write(
        d,
        "design.toml",
        "replications = 3\nmethods = [\"brl\", \"brlvof\"]\nseed = 5\noutput = \"rows.csv\"\n[chain]\niterations = 60\nburn_in = 10\n[[cells]]\nn_a = 60\nn_b = 90\nn_m = 30\nepsilon = 0.2\n",
    );
    let steps: [&[&str]; 4] = [
        &[
            "--threads",
            "2",
            "link",
            "--config",
            "link.toml",
            "--seed",
            "41",
            "--output",
            "run",
        ],
        &["--threads", "2", "analyze", "--config", "mi.toml"],
        &["--threads", "2", "simulate", "--config", "design.toml"],
        &[
            "--threads",
            "2",
            "diagnose",
            "--trace",
            "run/trace.csv",
            "--output",
            "diag.json",
        ],
    ];
    let files = [
        "run/links.csv",
        "run/trace.csv",
        "run/diagnostics.json",
        "run/manifest.json",
        "mi.json",
        "rows.csv",
        "diag.json",
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        for args in steps {
            let out = bayeslink(args, d);
            if status(&out) != 0 {
                return verdict(false, format!("{args:?} exited with {}", status(&out)));
            }
        }
        runs.push(snapshot(d, &files));
    }
    let same = runs[0] == runs[1] && runs[0].iter().all(|b| !b.is_empty());
    let bytes: usize = runs[0].iter().map(Vec::len).sum();
    verdict(
        same,
        format!(
            "{} output files ({bytes} bytes) identical across two runs",
            files.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("exact-posterior stationarity", criterion_1),
        ("prior normalization", criterion_2),
        ("KL reproduction", criterion_3),
        ("log-LR gain from exclusive variables", criterion_4),
        ("unblocked simulation, 10 replications", criterion_5),
        ("BRLVOF vs BRLVOF_ind", criterion_6),
        ("blocked-scenario ordering", criterion_7),
        ("conjugate regression", criterion_8),
        ("MI arithmetic", criterion_9),
        ("determinism", criterion_10),
    ];
    let wanted: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let v = f();
        println!(
            "criterion {id:>2} {} {name}: {} ({:.1} s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        failed += usize::from(!v.pass);
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
