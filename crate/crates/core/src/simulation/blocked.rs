use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{draw_person, inject_errors, record_file, LinkageTruth, Person, SimulatedData};
use crate::comparison::BlockIndex;
use crate::error::Result;

pub const BLOCKED_BETA_M: f64 = 6.0;
pub const BLOCKED_DELTA_U: f64 = 0.5;
const N_BLOCKS: usize = 250;
const A_PER_BLOCK: usize = 2;
const B_PER_BLOCK: usize = 4;
const RESIDUAL_VARIANCE: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct BlockedScenario {
    pub data: SimulatedData,
    pub blocks: BlockIndex,
}

impl BlockedScenario {
    pub fn n_blocks(&self) -> usize {
        self.blocks.blocks.len()
    }

    /// Correlation of outcome and covariate among true matches.
    pub fn generating_rho() -> f64 {
        BLOCKED_BETA_M / (BLOCKED_BETA_M.powi(2) + RESIDUAL_VARIANCE).sqrt()
    }
}

/// 250 blocks of 2 file-A and 4 file-B records with one true link per block.
///
/// The covariate is `-1 + 1(own block) + α` with `α ~ N(0, 1)`; every record
/// sits in its own block, so it reduces to `α`.
pub fn generate_blocked_scenario<R: Rng + ?Sized>(
    epsilon: f64,
    rng: &mut R,
) -> Result<BlockedScenario> {
    let n_a = N_BLOCKS * A_PER_BLOCK;
    let n_b = N_BLOCKS * B_PER_BLOCK;
    let key = |s: usize| format!("s{s:03}");
    let keys_a: Vec<String> = (0..n_a).map(|i| key(i / A_PER_BLOCK)).collect();
    let keys_b: Vec<String> = (0..n_b).map(|j| key(j / B_PER_BLOCK)).collect();

    let mut pairs = Vec::with_capacity(N_BLOCKS);
    for s in 0..N_BLOCKS {
        let i = s * A_PER_BLOCK + rng.random_range(0..A_PER_BLOCK);
        let j = s * B_PER_BLOCK + rng.random_range(0..B_PER_BLOCK);
        pairs.push((i, j));
    }
    let truth = LinkageTruth::new(n_a, pairs)?;

    let people_a: Vec<Person> = (0..n_a).map(|_| draw_person(rng)).collect();
    let mut people_b: Vec<Person> = (0..n_b).map(|_| draw_person(rng)).collect();
    for &(i, j) in &truth.pairs {
        people_b[j] = people_a[i];
    }
    for person in people_b.iter_mut() {
        *person = inject_errors(person, epsilon, rng);
    }

    let std = Normal::new(0.0, 1.0).expect("valid");
    let noise = Normal::new(0.0, RESIDUAL_VARIANCE.sqrt()).expect("valid");
    let x_b: Vec<f64> = (0..n_b)
        .map(|j| {
            let own = usize::from(keys_b[j] == key(j / B_PER_BLOCK)) as f64;
            -1.0 + own + std.sample(rng)
        })
        .collect();
    let mut x_a = vec![0.0; n_a];
    for (i, slot) in x_a.iter_mut().enumerate() {
        *slot = match truth.partner_of_a(i) {
            Some(j) => 10.0 + BLOCKED_BETA_M * x_b[j] + noise.sample(rng),
            None => {
                let s = i / A_PER_BLOCK;
                let free: Vec<usize> = (s * B_PER_BLOCK..(s + 1) * B_PER_BLOCK)
                    .filter(|&j| !truth.pairs.iter().any(|&(_, b)| b == j))
                    .collect();
                let j = free[rng.random_range(0..free.len())];
                5.0 + BLOCKED_DELTA_U * x_b[j] + noise.sample(rng)
            }
        };
    }

    let blocks = BlockIndex::from_keys(&keys_a, &keys_b);
    let file_a = record_file(
        "A",
        "a",
        &people_a,
        vec!["x_a".into()],
        x_a.clone(),
        Some(keys_a),
    );
    let file_b = record_file(
        "B",
        "b",
        &people_b,
        vec!["x_b1".into()],
        x_b.clone(),
        Some(keys_b),
    );
    Ok(BlockedScenario {
        data: SimulatedData {
            file_a,
            file_b,
            truth,
            x_a,
            x_b,
            p: 1,
        },
        blocks,
    })
}
