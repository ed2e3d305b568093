//! Conditional normal models for the file-A outcome given file-B covariates.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::comparison::BlockIndex;
use crate::error::{Error, PairClass, Result};
use crate::model::LinkageState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegressionVariant {
    /// Linear model in both classes.
    Brlvof,
    /// Linear model among matches; nonmatch outcome independent of covariates.
    BrlvofInd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionParams<F> {
    pub variant: RegressionVariant,
    /// Intercept first.
    pub beta_m: Vec<F>,
    pub sigma2_m: F,
    /// Coefficients for `Brlvof`, a single mean for `BrlvofInd`.
    pub beta_u: Vec<F>,
    pub sigma2_u: F,
}

impl<F: Scalar> RegressionParams<F> {
    pub fn n_covariates(&self) -> usize {
        self.beta_m.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta_m.is_empty() {
            return Err(Error::Invariant("beta_m needs an intercept".into()));
        }
        let want_u = match self.variant {
            RegressionVariant::Brlvof => self.beta_m.len(),
            RegressionVariant::BrlvofInd => 1,
        };
        if self.beta_u.len() != want_u {
            return Err(Error::Dimension {
                expected: want_u,
                found: self.beta_u.len(),
            });
        }
        if !(self.sigma2_m > F::zero() && self.sigma2_u > F::zero()) {
            return Err(Error::Invariant(
                "regression variances must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Exclusive variables: one outcome per file-A record and `q` covariates per
/// file-B record.
#[derive(Debug, Clone)]
pub struct RegressionData<F> {
    pub y: Vec<F>,
    /// Row-major, `q` values per file-B record.
    pub x: Vec<F>,
    pub q: usize,
}

impl<F: Scalar> RegressionData<F> {
    pub fn new(y: Vec<F>, x: Vec<F>, q: usize) -> Result<Self> {
        if q == 0 && !x.is_empty() || q > 0 && !x.len().is_multiple_of(q) {
            return Err(Error::Dimension {
                expected: q,
                found: x.len(),
            });
        }
        Ok(Self { y, x, q })
    }

    pub fn n_a(&self) -> usize {
        self.y.len()
    }

    pub fn covariates(&self, j: usize) -> &[F] {
        &self.x[j * self.q..(j + 1) * self.q]
    }

    pub fn match_stats(&self, state: &LinkageState) -> SuffStats<F> {
        let mut s = SuffStats::zero(self.q + 1);
        for (i, j) in state.pairs() {
            s.add(self.y[i], self.covariates(j));
        }
        s
    }

    /// Statistics over every materialized pair, linked or not.
    pub fn total_stats(&self, blocks: &BlockIndex) -> SuffStats<F> {
        let d = self.q + 1;
        let mut total = SuffStats::zero(d);
        for block in &blocks.blocks {
            if block.a.is_empty() || block.b.is_empty() {
                continue;
            }
            let na = F::from_count(block.a.len());
            let nb = F::from_count(block.b.len());
            let sum_y: F = block.a.iter().map(|&i| self.y[i as usize]).sum();
            let sum_yy: F = block.a.iter().map(|&i| self.y[i as usize].powi(2)).sum();
            let mut zsum = vec![F::zero(); d];
            let mut zz = vec![F::zero(); d * d];
            for &j in &block.b {
                let z = design_row(self.covariates(j as usize));
                for r in 0..d {
                    zsum[r] = zsum[r] + z[r];
                    for c in 0..d {
                        zz[r * d + c] = zz[r * d + c] + z[r] * z[c];
                    }
                }
            }
            total.n = total.n + na * nb;
            total.sum_y = total.sum_y + nb * sum_y;
            total.yy = total.yy + nb * sum_yy;
            for r in 0..d {
                total.zy[r] = total.zy[r] + sum_y * zsum[r];
                for c in 0..d {
                    total.zz[r * d + c] = total.zz[r * d + c] + na * zz[r * d + c];
                }
            }
        }
        total
    }
}

fn design_row<F: Scalar>(x: &[F]) -> Vec<F> {
    std::iter::once(F::one()).chain(x.iter().copied()).collect()
}

/// Cross-product sums over a set of (outcome, covariate) pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct SuffStats<F> {
    pub d: usize,
    pub n: F,
    pub sum_y: F,
    pub yy: F,
    pub zy: Vec<F>,
    pub zz: Vec<F>,
}

impl<F: Scalar> SuffStats<F> {
    pub fn zero(d: usize) -> Self {
        Self {
            d,
            n: F::zero(),
            sum_y: F::zero(),
            yy: F::zero(),
            zy: vec![F::zero(); d],
            zz: vec![F::zero(); d * d],
        }
    }

    pub fn add(&mut self, y: F, x: &[F]) {
        let z = design_row(x);
        let d = self.d;
        self.n = self.n + F::one();
        self.sum_y = self.sum_y + y;
        self.yy = self.yy + y * y;
        for r in 0..d {
            self.zy[r] = self.zy[r] + z[r] * y;
            for c in 0..d {
                self.zz[r * d + c] = self.zz[r * d + c] + z[r] * z[c];
            }
        }
    }

    pub fn minus(&self, other: &Self) -> Self {
        Self {
            d: self.d,
            n: self.n - other.n,
            sum_y: self.sum_y - other.sum_y,
            yy: self.yy - other.yy,
            zy: self
                .zy
                .iter()
                .zip(&other.zy)
                .map(|(a, b)| *a - *b)
                .collect(),
            zz: self
                .zz
                .iter()
                .zip(&other.zz)
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }
}

/// Lower Cholesky factor of a symmetric `d × d` matrix, with one jittered retry.
pub(crate) fn cholesky<F: Scalar>(a: &[F], d: usize) -> Option<Vec<F>> {
    let attempt = |jitter: F| -> Option<Vec<F>> {
        let mut l = vec![F::zero(); d * d];
        for r in 0..d {
            for c in 0..=r {
                let mut s = a[r * d + c];
                if r == c {
                    s = s + jitter;
                }
                for k in 0..c {
                    s = s - l[r * d + k] * l[c * d + k];
                }
                if r == c {
                    if !(s > F::zero()) || !s.is_finite() {
                        return None;
                    }
                    l[r * d + c] = s.sqrt();
                } else {
                    l[r * d + c] = s / l[c * d + c];
                }
            }
        }
        Some(l)
    };
    let scale = (0..d).map(|r| a[r * d + r].abs()).fold(F::zero(), F::max);
    if !(scale > F::zero()) {
        return None;
    }
    attempt(F::zero()).or_else(|| attempt(F::lit(1e-10) * scale))
}

/// Solves `L Lᵀ x = b`.
pub(crate) fn chol_solve<F: Scalar>(l: &[F], d: usize, b: &[F]) -> Vec<F> {
    let mut z = b.to_vec();
    for r in 0..d {
        for k in 0..r {
            z[r] = z[r] - l[r * d + k] * z[k];
        }
        z[r] = z[r] / l[r * d + r];
    }
    upper_solve(l, d, z)
}

/// Solves `Lᵀ x = b`.
fn upper_solve<F: Scalar>(l: &[F], d: usize, mut x: Vec<F>) -> Vec<F> {
    for r in (0..d).rev() {
        for k in r + 1..d {
            x[r] = x[r] - l[k * d + r] * x[k];
        }
        x[r] = x[r] / l[r * d + r];
    }
    x
}

/// OLS fit from sufficient statistics: coefficients and the Cholesky factor of `ZᵀZ`.
pub fn ols<F: Scalar>(stats: &SuffStats<F>, class: PairClass) -> Result<(Vec<F>, Vec<F>)> {
    let n = stats.n.to_f64_lossy().round() as usize;
    if n < stats.d + 1 {
        return Err(Error::DegeneratePosterior {
            class,
            n,
            reason: format!("need at least {} pairs", stats.d + 1),
        });
    }
    let l = cholesky(&stats.zz, stats.d).ok_or_else(|| Error::DegeneratePosterior {
        class,
        n,
        reason: "design matrix is rank deficient".into(),
    })?;
    let beta = chol_solve(&l, stats.d, &stats.zy);
    Ok((beta, l))
}

fn rss_from_stats<F: Scalar>(stats: &SuffStats<F>, beta: &[F]) -> F {
    let d = stats.d;
    let mut q = F::zero();
    for r in 0..d {
        for c in 0..d {
            q = q + beta[r] * stats.zz[r * d + c] * beta[c];
        }
    }
    let cross: F = beta.iter().zip(&stats.zy).map(|(b, s)| *b * *s).sum();
    stats.yy - F::lit(2.0) * cross + q
}

fn draw_inv_gamma<F: Scalar, R: Rng + ?Sized>(shape: F, scale: F, rng: &mut R) -> F {
    let shape = shape.to_f64_lossy();
    let scale = scale.to_f64_lossy().max(f64::MIN_POSITIVE);
    let g = Gamma::new(shape, 1.0 / scale)
        .expect("positive inverse-gamma parameters")
        .sample(rng);
    F::lit(1.0 / g.max(f64::MIN_POSITIVE))
}

fn draw_beta<F: Scalar, R: Rng + ?Sized>(
    beta_hat: &[F],
    l: &[F],
    sigma2: F,
    rng: &mut R,
) -> Vec<F> {
    let d = beta_hat.len();
    let z: Vec<F> = (0..d).map(|_| F::lit(StandardNormal.sample(rng))).collect();
    let dev = upper_solve(l, d, z);
    let s = sigma2.sqrt();
    beta_hat.iter().zip(dev).map(|(b, e)| *b + s * e).collect()
}

/// Draws `(β, σ²)` given the pairs summarized by `stats`, then `σ²` from the OLS
/// residuals and `β` given `σ²`. `match_rss` overrides the residual sum of squares.
pub fn sample_linear_arm<F: Scalar, R: Rng + ?Sized>(
    stats: &SuffStats<F>,
    class: PairClass,
    direct_rss: Option<F>,
    rng: &mut R,
) -> Result<(Vec<F>, F)> {
    let (beta_hat, l) = ols(stats, class)?;
    let rss = direct_rss
        .unwrap_or_else(|| rss_from_stats(stats, &beta_hat))
        .max(F::prob_floor());
    let sigma2 = draw_inv_gamma(stats.n * F::lit(0.5), rss * F::lit(0.5), rng);
    let beta = draw_beta(&beta_hat, &l, sigma2, rng);
    Ok((beta, sigma2))
}

/// Mean-only arm: `σ²` from residuals about the sample mean, then the mean.
pub fn sample_mean_arm<F: Scalar, R: Rng + ?Sized>(
    stats: &SuffStats<F>,
    class: PairClass,
    rng: &mut R,
) -> Result<(F, F)> {
    let n = stats.n.to_f64_lossy().round() as usize;
    if n < 2 {
        return Err(Error::DegeneratePosterior {
            class,
            n,
            reason: "need at least 2 pairs".into(),
        });
    }
    let mean = stats.sum_y / stats.n;
    let rss = (stats.yy - stats.n * mean * mean).max(F::prob_floor());
    let sigma2 = draw_inv_gamma(stats.n * F::lit(0.5), rss * F::lit(0.5), rng);
    let z: f64 = StandardNormal.sample(rng);
    Ok((mean + F::lit(z) * (sigma2 / stats.n).sqrt(), sigma2))
}

pub fn match_rss<F: Scalar>(data: &RegressionData<F>, state: &LinkageState, beta: &[F]) -> F {
    state
        .pairs()
        .map(|(i, j)| {
            let r = data.y[i] - linear_mean(beta, data.covariates(j));
            r * r
        })
        .sum()
}

fn linear_mean<F: Scalar>(beta: &[F], x: &[F]) -> F {
    beta[0] + beta[1..].iter().zip(x).map(|(b, v)| *b * *v).sum::<F>()
}

fn normal_logpdf<F: Scalar>(x: F, mean: F, var: F) -> F {
    let two_pi = F::lit(2.0 * std::f64::consts::PI);
    let d = x - mean;
    -F::lit(0.5) * (two_pi * var).ln() - d * d / (F::lit(2.0) * var)
}

pub fn eval_match_logdensity<F: Scalar>(x_a: F, x_b: &[F], p: &RegressionParams<F>) -> Result<F> {
    if x_b.len() + 1 != p.beta_m.len() {
        return Err(Error::Dimension {
            expected: p.beta_m.len() - 1,
            found: x_b.len(),
        });
    }
    Ok(normal_logpdf(x_a, linear_mean(&p.beta_m, x_b), p.sigma2_m))
}

pub fn eval_nonmatch_logdensity<F: Scalar>(
    x_a: F,
    x_b: &[F],
    p: &RegressionParams<F>,
) -> Result<F> {
    match p.variant {
        RegressionVariant::BrlvofInd => Ok(normal_logpdf(x_a, p.beta_u[0], p.sigma2_u)),
        RegressionVariant::Brlvof => {
            if x_b.len() + 1 != p.beta_u.len() {
                return Err(Error::Dimension {
                    expected: p.beta_u.len() - 1,
                    found: x_b.len(),
                });
            }
            Ok(normal_logpdf(x_a, linear_mean(&p.beta_u, x_b), p.sigma2_u))
        }
    }
}

/// One Gibbs draw of both arms given the linkage.
pub fn sample_regression_posterior<F: Scalar, R: Rng + ?Sized>(
    data: &RegressionData<F>,
    blocks: &BlockIndex,
    state: &LinkageState,
    variant: RegressionVariant,
    rng: &mut R,
) -> Result<RegressionParams<F>> {
    let total = data.total_stats(blocks);
    let m = data.match_stats(state);
    let (beta_m, sigma2_m) = sample_match_arm(data, state, &m, rng)?;
    let (beta_u, sigma2_u) = sample_nonmatch_arm(&total.minus(&m), variant, rng)?;
    Ok(RegressionParams {
        variant,
        beta_m,
        sigma2_m,
        beta_u,
        sigma2_u,
    })
}

pub fn sample_match_arm<F: Scalar, R: Rng + ?Sized>(
    data: &RegressionData<F>,
    state: &LinkageState,
    stats: &SuffStats<F>,
    rng: &mut R,
) -> Result<(Vec<F>, F)> {
    let (beta_hat, _) = ols(stats, PairClass::Match)?;
    let rss = match_rss(data, state, &beta_hat);
    sample_linear_arm(stats, PairClass::Match, Some(rss), rng)
}

pub fn sample_nonmatch_arm<F: Scalar, R: Rng + ?Sized>(
    stats: &SuffStats<F>,
    variant: RegressionVariant,
    rng: &mut R,
) -> Result<(Vec<F>, F)> {
    match variant {
        RegressionVariant::Brlvof => sample_linear_arm(stats, PairClass::NonMatch, None, rng),
        RegressionVariant::BrlvofInd => {
            let (mu, s2) = sample_mean_arm(stats, PairClass::NonMatch, rng)?;
            Ok((vec![mu], s2))
        }
    }
}

/// Least-squares fit over all materialized pairs treated as nonmatches; used to
/// seed a chain before any pair is linked.
pub fn initial_params<F: Scalar>(
    data: &RegressionData<F>,
    blocks: &BlockIndex,
    variant: RegressionVariant,
) -> Result<RegressionParams<F>> {
    let total = data.total_stats(blocks);
    let (beta, _) = ols(&total, PairClass::NonMatch)?;
    let var = (rss_from_stats(&total, &beta) / total.n).max(F::lit(1e-12));
    let beta_u = match variant {
        RegressionVariant::Brlvof => beta.clone(),
        RegressionVariant::BrlvofInd => vec![total.sum_y / total.n],
    };
    let sigma2_u = match variant {
        RegressionVariant::Brlvof => var,
        RegressionVariant::BrlvofInd => {
            let m = total.sum_y / total.n;
            (total.yy / total.n - m * m).max(F::lit(1e-12))
        }
    };
    Ok(RegressionParams {
        variant,
        beta_m: beta,
        sigma2_m: var,
        beta_u,
        sigma2_u,
    })
}
