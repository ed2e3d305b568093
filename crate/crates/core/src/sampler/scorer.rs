use rayon::prelude::*;

use crate::comparison::ComparisonTable;
use crate::model::MixtureParams;
use crate::regression::{RegressionData, RegressionParams, RegressionVariant};
use crate::scalar::Scalar;

const PATTERN_TABLE_LIMIT: usize = 1 << 16;

/// Pair log likelihood ratios under fixed parameters.
pub struct Scorer<'a, F> {
    table: &'a ComparisonTable,
    by_pattern: Option<Vec<F>>,
    by_level: Vec<F>,
    regression: Option<RegressionScore<'a, F>>,
}

struct RegressionScore<'a, F> {
    y: &'a [F],
    mean_m: Vec<F>,
    mean_u: Vec<F>,
    inv2_m: F,
    inv2_u: F,
    log_ratio_sd: F,
}

fn safe_ln<F: Scalar>(p: F) -> F {
    p.max(F::prob_floor()).ln()
}

impl<'a, F: Scalar> Scorer<'a, F> {
    pub fn new(
        table: &'a ComparisonTable,
        theta: &MixtureParams<F>,
        regression: Option<(&'a RegressionData<F>, &RegressionParams<F>)>,
    ) -> Self {
        let by_level: Vec<F> = theta
            .theta_m
            .iter()
            .zip(&theta.theta_u)
            .map(|(&m, &u)| safe_ln(m) - safe_ln(u))
            .collect();
        let by_pattern = (table.n_patterns() <= PATTERN_TABLE_LIMIT).then(|| {
            (0..table.n_patterns())
                .map(|p| {
                    let g = table.pattern_levels(p);
                    g.iter()
                        .enumerate()
                        .map(|(k, &l)| by_level[table.level_offset(k) + l as usize - 1])
                        .sum()
                })
                .collect()
        });
        let regression = regression.map(|(data, rp)| {
            let mean = |beta: &[F], j: usize| {
                let x = data.covariates(j);
                beta[0] + beta[1..].iter().zip(x).map(|(b, v)| *b * *v).sum::<F>()
            };
            let n_b = table.n_b();
            let mean_m: Vec<F> = (0..n_b).map(|j| mean(&rp.beta_m, j)).collect();
            let mean_u: Vec<F> = match rp.variant {
                RegressionVariant::Brlvof => (0..n_b).map(|j| mean(&rp.beta_u, j)).collect(),
                RegressionVariant::BrlvofInd => vec![rp.beta_u[0]; n_b],
            };
            let half = F::lit(0.5);
            RegressionScore {
                y: &data.y,
                mean_m,
                mean_u,
                inv2_m: half / rp.sigma2_m,
                inv2_u: half / rp.sigma2_u,
                log_ratio_sd: half * (rp.sigma2_u.ln() - rp.sigma2_m.ln()),
            }
        });
        Self {
            table,
            by_pattern,
            by_level,
            regression,
        }
    }

    #[inline]
    pub fn comparison_llr(&self, pair: usize) -> F {
        match &self.by_pattern {
            Some(t) => t[self.table.pattern(pair) as usize],
            None => self
                .table
                .gamma(pair)
                .iter()
                .enumerate()
                .map(|(k, &l)| self.by_level[self.table.level_offset(k) + l as usize - 1])
                .sum(),
        }
    }

    /// Log likelihood ratio of pair `(i, j)` stored at table index `pair`.
    #[inline]
    pub fn llr(&self, i: usize, j: usize, pair: usize) -> F {
        let base = self.comparison_llr(pair);
        match &self.regression {
            None => base,
            Some(r) => {
                let y = r.y[i];
                let dm = y - r.mean_m[j];
                let du = y - r.mean_u[j];
                base + r.log_ratio_sd - dm * dm * r.inv2_m + du * du * r.inv2_u
            }
        }
    }

    /// Log likelihood ratios for every pair, in table order.
    pub fn all_pairs(&self) -> Vec<F> {
        let mut out = vec![F::zero(); self.table.n_pairs()];
        for block in &self.table.blocks().blocks {
            let nb = block.b.len();
            if nb == 0 || block.a.is_empty() {
                continue;
            }
            let slice = &mut out[block.pair_offset..block.pair_offset + block.n_pairs()];
            slice
                .par_chunks_mut(nb)
                .zip(block.a.par_iter())
                .enumerate()
                .for_each(|(pa, (row, &i))| {
                    let start = block.pair_offset + pa * nb;
                    for (pb, (w, &j)) in row.iter_mut().zip(&block.b).enumerate() {
                        *w = self.llr(i as usize, j as usize, start + pb);
                    }
                });
        }
        out
    }
}
