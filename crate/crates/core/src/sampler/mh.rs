//! Metropolis-Hastings add / drop / swap kernel, one proposal per file-A record.

use rand::Rng;
use serde::Serialize;

use super::pools::Pools;
use super::scorer::Scorer;
use super::{log_prior_add_ratio, LinkPrior};
use crate::comparison::ComparisonTable;
use crate::error::Result;
use crate::model::LinkageState;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MoveStats {
    pub add_proposed: u64,
    pub add_accepted: u64,
    pub drop_proposed: u64,
    pub drop_accepted: u64,
    pub swap_proposed: u64,
    pub swap_accepted: u64,
    /// Records whose move had no eligible proposal.
    pub skipped: u64,
}

impl MoveStats {
    pub fn merge(&mut self, o: &MoveStats) {
        self.add_proposed += o.add_proposed;
        self.add_accepted += o.add_accepted;
        self.drop_proposed += o.drop_proposed;
        self.drop_accepted += o.drop_accepted;
        self.swap_proposed += o.swap_proposed;
        self.swap_accepted += o.swap_accepted;
        self.skipped += o.skipped;
    }

    pub fn acceptance_rate(&self) -> f64 {
        let p = self.add_proposed + self.drop_proposed + self.swap_proposed;
        let a = self.add_accepted + self.drop_accepted + self.swap_accepted;
        if p == 0 {
            0.0
        } else {
            a as f64 / p as f64
        }
    }
}

#[inline]
fn accept<R: Rng + ?Sized>(log_ratio: f64, rng: &mut R) -> bool {
    log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio
}

/// Log acceptance ratio of adding a link when `n_m` links exist, `u` file-B
/// records in the block are unlinked and `others` links already exist in the block.
pub fn add_log_ratio<F: Scalar>(
    llr: F,
    n_m: usize,
    u: usize,
    others: usize,
    prior: &LinkPrior<F>,
) -> F {
    let reverse_drop = if others == 0 { F::one() } else { F::lit(0.5) };
    log_prior_add_ratio(n_m, prior) + llr + F::from_count(u).ln() + reverse_drop.ln()
}

pub(crate) fn sweep<F: Scalar, R: Rng + ?Sized>(
    state: &mut LinkageState,
    table: &ComparisonTable,
    scorer: &Scorer<'_, F>,
    prior: &LinkPrior<F>,
    pools: &mut Pools,
    rng: &mut R,
    validate_each_move: bool,
) -> Result<MoveStats> {
    let blocks = table.blocks();
    let mut stats = MoveStats::default();
    for i in 0..table.n_a() {
        let (s, _) = blocks.a_position(i);
        let llr_of = |a: usize, b: usize| -> F {
            let p = blocks.pair_index(a, b).expect("within-block pair");
            scorer.llr(a, b, p)
        };
        match state.partner_of_a(i) {
            None => {
                let u = pools.unlinked_b.len(s);
                let Some(j) = pools.unlinked_b.choose(s, rng) else {
                    stats.skipped += 1;
                    continue;
                };
                stats.add_proposed += 1;
                let others = pools.linked_a.len(s);
                let lr = add_log_ratio(llr_of(i, j), state.n_m(), u, others, prior);
                if accept(lr.to_f64_lossy(), rng) {
                    state.link(i, j)?;
                    pools.on_link(s, i, j);
                    stats.add_accepted += 1;
                }
            }
            Some(j) => {
                let links = pools.linked_a.len(s);
                let has_partner = links >= 2;
                let swap = has_partner && rng.random::<bool>();
                if swap {
                    stats.swap_proposed += 1;
                    let i2 = loop {
                        let c = pools.linked_a.choose(s, rng).expect("nonempty");
                        if c != i {
                            break c;
                        }
                    };
                    let j2 = state.partner_of_a(i2).expect("linked");
                    let lr = llr_of(i, j2) + llr_of(i2, j) - llr_of(i, j) - llr_of(i2, j2);
                    if accept(lr.to_f64_lossy(), rng) {
                        state.unlink(i);
                        state.unlink(i2);
                        state.link(i, j2)?;
                        state.link(i2, j)?;
                        stats.swap_accepted += 1;
                    }
                } else {
                    stats.drop_proposed += 1;
                    let forward = if has_partner { F::lit(0.5) } else { F::one() };
                    let u_after = pools.unlinked_b.len(s) + 1;
                    let lr = -log_prior_add_ratio(state.n_m() - 1, prior)
                        - llr_of(i, j)
                        - forward.ln()
                        - F::from_count(u_after).ln();
                    if accept(lr.to_f64_lossy(), rng) {
                        state.unlink(i);
                        pools.on_unlink(s, i, j);
                        stats.drop_accepted += 1;
                    }
                }
            }
        }
        if validate_each_move {
            state.validate(Some(blocks))?;
        }
    }
    Ok(stats)
}
