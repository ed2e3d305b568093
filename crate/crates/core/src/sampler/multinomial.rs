//! Full-conditional update of each file-A record's link.

use rand::Rng;

use super::mh::MoveStats;
use super::pools::Pools;
use super::{log_prior_add_ratio, LinkPrior};
use crate::comparison::ComparisonTable;
use crate::error::Result;
use crate::model::LinkageState;
use crate::scalar::Scalar;

/// Choice probabilities for record `i` with its current link removed:
/// `(None, p)` is the no-link outcome, `(Some(j), p)` a link to `j`.
pub fn choice_probabilities<F: Scalar>(
    state: &LinkageState,
    table: &ComparisonTable,
    weights: &[F],
    prior: &LinkPrior<F>,
    i: usize,
) -> Vec<(Option<usize>, F)> {
    let blocks = table.blocks();
    let (s, _) = blocks.a_position(i);
    let n = state.n_m() - usize::from(state.partner_of_a(i).is_some());
    let lpr = log_prior_add_ratio(n, prior);
    let cand: Vec<(usize, F)> = blocks.blocks[s]
        .b
        .iter()
        .map(|&j| j as usize)
        .filter(|&j| state.partner_of_b(j).is_none_or(|a| a == i))
        .map(|j| {
            (
                j,
                weights[blocks.pair_index(i, j).expect("within block")] + lpr,
            )
        })
        .collect();
    let m = cand.iter().map(|c| c.1).fold(F::zero(), F::max);
    let total = (-m).exp() + cand.iter().map(|c| (c.1 - m).exp()).sum::<F>();
    let mut out = vec![(None, (-m).exp() / total)];
    out.extend(
        cand.into_iter()
            .map(|(j, w)| (Some(j), (w - m).exp() / total)),
    );
    out
}

pub(crate) fn sweep<F: Scalar, R: Rng + ?Sized>(
    state: &mut LinkageState,
    table: &ComparisonTable,
    weights: &[F],
    prior: &LinkPrior<F>,
    pools: &mut Pools,
    rng: &mut R,
    validate_each_move: bool,
) -> Result<MoveStats> {
    let blocks = table.blocks();
    let mut stats = MoveStats::default();
    let mut buf: Vec<F> = Vec::new();
    for i in 0..table.n_a() {
        let (s, pa) = blocks.a_position(i);
        let block = &blocks.blocks[s];
        let nb = block.b.len();
        if nb == 0 {
            stats.skipped += 1;
            continue;
        }
        let previous = state.unlink(i);
        if let Some(j) = previous {
            pools.on_unlink(s, i, j);
        }
        let cands = pools.unlinked_b.members(s);
        if cands.is_empty() {
            stats.skipped += 1;
            continue;
        }
        let row = &weights[block.pair_offset + pa * nb..block.pair_offset + (pa + 1) * nb];
        buf.clear();
        buf.extend(cands.iter().map(|&j| row[blocks.b_position(j as usize).1]));
        let m = buf.iter().copied().fold(F::neg_infinity(), F::max);
        let mut sum = F::zero();
        for w in buf.iter_mut() {
            *w = (*w - m).exp();
            sum = sum + *w;
        }
        let log_odds = sum.ln() + m + log_prior_add_ratio(state.n_m(), prior);
        let p_link = F::one() / (F::one() + (-log_odds).exp());
        let chosen = if F::lit(rng.random::<f64>()) < p_link {
            let target = F::lit(rng.random::<f64>()) * sum;
            let mut acc = F::zero();
            let mut pick = cands.len() - 1;
            for (k, &w) in buf.iter().enumerate() {
                acc = acc + w;
                if acc > target {
                    pick = k;
                    break;
                }
            }
            Some(cands[pick] as usize)
        } else {
            None
        };
        match (previous, chosen) {
            (Some(a), Some(b)) if a == b => {}
            (None, None) => {}
            _ => stats.add_accepted += 1,
        }
        stats.add_proposed += 1;
        if let Some(j) = chosen {
            state.link(i, j)?;
            pools.on_link(s, i, j);
        }
        if validate_each_move {
            state.validate(Some(blocks))?;
        }
    }
    Ok(stats)
}
