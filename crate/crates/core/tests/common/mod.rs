#![allow(dead_code)]

use std::collections::BTreeMap;

/// Every one-to-one linkage of an `n_a × n_b` grid restricted to `allowed`.
pub fn enumerate_linkages(
    n_a: usize,
    n_b: usize,
    allowed: &dyn Fn(usize, usize) -> bool,
) -> Vec<Vec<(usize, usize)>> {
    fn go(
        i: usize,
        n_a: usize,
        n_b: usize,
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize)>,
        allowed: &dyn Fn(usize, usize) -> bool,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if i == n_a {
            out.push(cur.clone());
            return;
        }
        go(i + 1, n_a, n_b, used, cur, allowed, out);
        for j in 0..n_b {
            if !used[j] && allowed(i, j) {
                used[j] = true;
                cur.push((i, j));
                go(i + 1, n_a, n_b, used, cur, allowed, out);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(
        0,
        n_a,
        n_b,
        &mut vec![false; n_b],
        &mut Vec::new(),
        allowed,
        &mut out,
    );
    out
}

/// Prior probability of one linkage with `n` links, from factorials directly.
pub fn direct_prior(n: usize, n_a: usize, n_b: usize, a: f64, b: f64) -> f64 {
    let (lo, hi) = (n_a.min(n_b), n_a.max(n_b));
    let fact = |k: usize| (1..=k).map(|x| x as f64).product::<f64>();
    let gamma = |x: f64| statrs::function::gamma::gamma(x);
    let beta = |x: f64, y: f64| gamma(x) * gamma(y) / gamma(x + y);
    fact(hi - n) / fact(hi) * beta(n as f64 + a, (lo - n) as f64 + b) / beta(a, b)
}

pub fn normalize(w: &[f64]) -> Vec<f64> {
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Empirical frequency of each configuration in `configs`, keyed by the sorted pair list.
pub fn frequencies(
    configs: &[Vec<(usize, usize)>],
    counts: &BTreeMap<Vec<(usize, usize)>, usize>,
) -> Vec<f64> {
    let n: usize = counts.values().sum();
    configs
        .iter()
        .map(|c| *counts.get(c).unwrap_or(&0) as f64 / n as f64)
        .collect()
}

/// Mean and batch-means standard error.
pub fn mean_and_se(x: &[f64], batches: usize) -> (f64, f64) {
    let n = x.len();
    let m = x.iter().sum::<f64>() / n as f64;
    let size = n / batches;
    let means: Vec<f64> = (0..batches)
        .map(|b| x[b * size..(b + 1) * size].iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / batches as f64;
    let var = means.iter().map(|v| (v - bm).powi(2)).sum::<f64>() / (batches - 1) as f64;
    (m, (var / batches as f64).sqrt())
}

/// Solves a small dense system by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n)
            .max_by(|&x, &y| a[x][c].abs().partial_cmp(&a[y][c].abs()).unwrap())
            .unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}
