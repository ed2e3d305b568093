//! Linkage structure, its prior, and the mixture likelihood.

use serde::{Deserialize, Serialize};

use crate::comparison::{BlockIndex, ComparisonTable};
use crate::error::{Error, PairClass, Result};
use crate::regression::{
    eval_match_logdensity, eval_nonmatch_logdensity, RegressionData, RegressionParams,
};
use crate::scalar::Scalar;
use crate::special::{ln_beta, ln_gamma};

const NONE: u32 = u32::MAX;

/// One-to-one partial matching between files A and B.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkageState {
    forward: Vec<u32>,
    reverse: Vec<u32>,
    n_m: usize,
}

impl LinkageState {
    pub fn empty(n_a: usize, n_b: usize) -> Self {
        Self {
            forward: vec![NONE; n_a],
            reverse: vec![NONE; n_b],
            n_m: 0,
        }
    }

    pub fn from_pairs(n_a: usize, n_b: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut s = Self::empty(n_a, n_b);
        for &(i, j) in pairs {
            s.link(i, j)?;
        }
        Ok(s)
    }

    pub fn n_a(&self) -> usize {
        self.forward.len()
    }

    pub fn n_b(&self) -> usize {
        self.reverse.len()
    }

    pub fn n_m(&self) -> usize {
        self.n_m
    }

    pub fn partner_of_a(&self, i: usize) -> Option<usize> {
        match self.forward[i] {
            NONE => None,
            j => Some(j as usize),
        }
    }

    pub fn partner_of_b(&self, j: usize) -> Option<usize> {
        match self.reverse[j] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    pub fn is_linked(&self, i: usize, j: usize) -> bool {
        self.forward[i] == j as u32
    }

    pub fn link(&mut self, i: usize, j: usize) -> Result<()> {
        if i >= self.n_a() || j >= self.n_b() {
            return Err(Error::Invariant(format!("pair ({i}, {j}) out of range")));
        }
        if self.forward[i] != NONE || self.reverse[j] != NONE {
            return Err(Error::Invariant(format!(
                "linking ({i}, {j}) breaks the one-to-one constraint"
            )));
        }
        self.forward[i] = j as u32;
        self.reverse[j] = i as u32;
        self.n_m += 1;
        Ok(())
    }

    /// Removes the link of file-A record `i`, returning its former partner.
    pub fn unlink(&mut self, i: usize) -> Option<usize> {
        let j = self.partner_of_a(i)?;
        self.forward[i] = NONE;
        self.reverse[j] = NONE;
        self.n_m -= 1;
        Some(j)
    }

    /// Linked pairs in increasing order of the file-A index.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.forward
            .iter()
            .enumerate()
            .filter(|(_, &j)| j != NONE)
            .map(|(i, &j)| (i, j as usize))
    }

    /// Full consistency check, including the block constraint when given.
    pub fn validate(&self, blocks: Option<&BlockIndex>) -> Result<()> {
        let mut count = 0;
        for (i, &j) in self.forward.iter().enumerate() {
            if j == NONE {
                continue;
            }
            count += 1;
            if self.reverse.get(j as usize) != Some(&(i as u32)) {
                return Err(Error::Invariant(format!(
                    "forward link {i}->{j} has no reverse"
                )));
            }
            if let Some(b) = blocks {
                if !b.same_block(i, j as usize) {
                    return Err(Error::Invariant(format!("link ({i}, {j}) crosses blocks")));
                }
            }
        }
        let reverse_count = self.reverse.iter().filter(|&&i| i != NONE).count();
        if count != self.n_m || reverse_count != self.n_m {
            return Err(Error::Invariant(format!(
                "n_m = {} but {count} forward and {reverse_count} reverse links",
                self.n_m
            )));
        }
        Ok(())
    }
}

/// Per-field categorical probabilities for matches and nonmatches, flattened
/// field by field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams<F> {
    pub levels: Vec<usize>,
    pub theta_m: Vec<F>,
    pub theta_u: Vec<F>,
}

fn offsets(levels: &[usize]) -> Vec<usize> {
    let mut out = Vec::with_capacity(levels.len() + 1);
    let mut acc = 0;
    out.push(0);
    for &l in levels {
        acc += l;
        out.push(acc);
    }
    out
}

impl<F: Scalar> MixtureParams<F> {
    pub fn new(levels: Vec<usize>, theta_m: Vec<F>, theta_u: Vec<F>) -> Result<Self> {
        let p = Self {
            levels,
            theta_m,
            theta_u,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn uniform(levels: &[usize]) -> Self {
        let theta: Vec<F> = levels
            .iter()
            .flat_map(|&l| std::iter::repeat_n(F::one() / F::from_count(l), l))
            .collect();
        Self {
            levels: levels.to_vec(),
            theta_m: theta.clone(),
            theta_u: theta,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.levels.iter().sum();
        for theta in [&self.theta_m, &self.theta_u] {
            if theta.len() != total {
                return Err(Error::Dimension {
                    expected: total,
                    found: theta.len(),
                });
            }
        }
        let tol = F::lit(1e-12).max(F::epsilon() * F::lit(16.0));
        let off = offsets(&self.levels);
        for theta in [&self.theta_m, &self.theta_u] {
            for k in 0..self.levels.len() {
                let v = &theta[off[k]..off[k + 1]];
                let s: F = v.iter().copied().sum();
                if v.iter().any(|&x| !(x >= F::zero())) || (s - F::one()).abs() > tol {
                    return Err(Error::Invariant(format!(
                        "field {k}: not a probability vector"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn field(&self, class: PairClass, k: usize) -> &[F] {
        let off: usize = self.levels[..k].iter().sum();
        let theta = match class {
            PairClass::Match => &self.theta_m,
            PairClass::NonMatch => &self.theta_u,
        };
        &theta[off..off + self.levels[k]]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig<F> {
    pub levels: Vec<usize>,
    /// Dirichlet hyperparameters, flattened field by field.
    pub alpha_m: Vec<F>,
    pub alpha_u: Vec<F>,
    pub alpha_pi: F,
    pub beta_pi: F,
}

impl<F: Scalar> PriorConfig<F> {
    /// Dirichlet(1, …, 1) for every field and a uniform match proportion.
    pub fn flat(levels: &[usize]) -> Self {
        Self::symmetric(levels, F::one(), F::one(), F::one())
    }

    pub fn symmetric(levels: &[usize], dirichlet: F, alpha_pi: F, beta_pi: F) -> Self {
        let total: usize = levels.iter().sum();
        Self {
            levels: levels.to_vec(),
            alpha_m: vec![dirichlet; total],
            alpha_u: vec![dirichlet; total],
            alpha_pi,
            beta_pi,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: usize = self.levels.iter().sum();
        if self.alpha_m.len() != total || self.alpha_u.len() != total {
            return Err(Error::Dimension {
                expected: total,
                found: self.alpha_m.len().min(self.alpha_u.len()),
            });
        }
        let positive = |x: &F| *x > F::zero() && x.is_finite();
        if !self.alpha_m.iter().chain(&self.alpha_u).all(positive)
            || !positive(&self.alpha_pi)
            || !positive(&self.beta_pi)
        {
            return Err(Error::Config(
                "prior hyperparameters must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Log prior mass of a linkage with `n_m` links, marginalized over the match proportion.
pub fn log_prior_linkage_count<F: Scalar>(
    n_m: usize,
    n_a: usize,
    n_b: usize,
    alpha_pi: F,
    beta_pi: F,
) -> Result<F> {
    let (lo, hi) = (n_a.min(n_b), n_a.max(n_b));
    if n_m > lo {
        return Err(Error::Invariant(format!(
            "n_m = {n_m} exceeds min(nA, nB) = {lo}"
        )));
    }
    let one = F::one();
    let falling = ln_gamma(F::from_count(hi - n_m) + one) - ln_gamma(F::from_count(hi) + one);
    let beta = ln_beta(
        F::from_count(n_m) + alpha_pi,
        F::from_count(lo - n_m) + beta_pi,
    ) - ln_beta(alpha_pi, beta_pi);
    Ok(falling + beta)
}

pub fn log_prior_linkage<F: Scalar>(state: &LinkageState, prior: &PriorConfig<F>) -> Result<F> {
    log_prior_linkage_count(
        state.n_m(),
        state.n_a(),
        state.n_b(),
        prior.alpha_pi,
        prior.beta_pi,
    )
}

fn floored_ln<F: Scalar>(p: F) -> F {
    if p == F::zero() {
        F::neg_infinity()
    } else {
        p.ln()
    }
}

/// `Σ_k log θ_{class,k,γ_k}`; a zero-probability level yields `-∞`.
pub fn pair_log_density<F: Scalar>(gamma: &[u8], params: &MixtureParams<F>, class: PairClass) -> F {
    let theta = match class {
        PairClass::Match => &params.theta_m,
        PairClass::NonMatch => &params.theta_u,
    };
    let mut off = 0;
    let mut acc = F::zero();
    for (&g, &l) in gamma.iter().zip(&params.levels) {
        acc = acc + floored_ln(theta[off + g as usize - 1]);
        off += l;
    }
    acc
}

/// Exclusive-variable terms for one pair.
#[derive(Debug, Clone, Copy)]
pub struct RegressionTerms<'a, F> {
    pub params: &'a RegressionParams<F>,
    pub x_a: F,
    pub x_b: &'a [F],
}

/// `log f_M − log f_U` for one pair, optionally with the regression terms.
pub fn pair_log_lr<F: Scalar>(
    gamma: &[u8],
    params: &MixtureParams<F>,
    regression: Option<RegressionTerms<'_, F>>,
) -> Result<F> {
    let mut lr = pair_log_density(gamma, params, PairClass::Match)
        - pair_log_density(gamma, params, PairClass::NonMatch);
    if let Some(r) = regression {
        lr = lr + eval_match_logdensity(r.x_a, r.x_b, r.params)?
            - eval_nonmatch_logdensity(r.x_a, r.x_b, r.params)?;
    }
    Ok(lr)
}

/// Log-likelihood over every materialized pair.
pub fn log_likelihood_full<F: Scalar>(
    state: &LinkageState,
    table: &ComparisonTable,
    params: &MixtureParams<F>,
    regression: Option<(&RegressionData<F>, &RegressionParams<F>)>,
) -> Result<F> {
    if state.n_a() != table.n_a() || state.n_b() != table.n_b() {
        return Err(Error::Dimension {
            expected: table.n_a() * table.n_b(),
            found: state.n_a() * state.n_b(),
        });
    }
    state.validate(Some(table.blocks()))?;
    let mut total = F::zero();
    for block in &table.blocks().blocks {
        for (pa, &i) in block.a.iter().enumerate() {
            for (pb, &j) in block.b.iter().enumerate() {
                let pair = block.pair_offset + pa * block.b.len() + pb;
                let (i, j) = (i as usize, j as usize);
                let class = if state.is_linked(i, j) {
                    PairClass::Match
                } else {
                    PairClass::NonMatch
                };
                total = total + pair_log_density(table.gamma(pair), params, class);
                if let Some((data, rp)) = regression {
                    let (y, x) = (data.y[i], data.covariates(j));
                    total = total
                        + match class {
                            PairClass::Match => eval_match_logdensity(y, x, rp)?,
                            PairClass::NonMatch => eval_nonmatch_logdensity(y, x, rp)?,
                        };
                }
            }
        }
    }
    Ok(total)
}
