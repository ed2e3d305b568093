use rand::Rng;

use crate::comparison::BlockIndex;
use crate::model::LinkageState;

/// Disjoint sets of record indices, one per block, with O(1) insert, remove
/// and uniform draw.
#[derive(Debug, Clone)]
pub(crate) struct IndexedSets {
    members: Vec<Vec<u32>>,
    pos: Vec<u32>,
}

impl IndexedSets {
    fn new(n_sets: usize, n_items: usize) -> Self {
        Self {
            members: vec![Vec::new(); n_sets],
            pos: vec![u32::MAX; n_items],
        }
    }

    pub fn insert(&mut self, set: usize, x: usize) {
        debug_assert_eq!(self.pos[x], u32::MAX);
        self.pos[x] = self.members[set].len() as u32;
        self.members[set].push(x as u32);
    }

    pub fn remove(&mut self, set: usize, x: usize) {
        let p = self.pos[x] as usize;
        let m = &mut self.members[set];
        let last = *m.last().expect("remove from empty set");
        m.swap_remove(p);
        if last as usize != x {
            self.pos[last as usize] = p as u32;
        }
        self.pos[x] = u32::MAX;
    }

    pub fn len(&self, set: usize) -> usize {
        self.members[set].len()
    }

    pub fn members(&self, set: usize) -> &[u32] {
        &self.members[set]
    }

    pub fn choose<R: Rng + ?Sized>(&self, set: usize, rng: &mut R) -> Option<usize> {
        let m = &self.members[set];
        if m.is_empty() {
            None
        } else {
            Some(m[rng.random_range(0..m.len())] as usize)
        }
    }
}

/// Per-block bookkeeping of unlinked file-B records and linked file-A records.
#[derive(Debug, Clone)]
pub(crate) struct Pools {
    pub unlinked_b: IndexedSets,
    pub linked_a: IndexedSets,
}

impl Pools {
    pub fn build(blocks: &BlockIndex, state: &LinkageState) -> Self {
        let n_sets = blocks.blocks.len();
        let mut unlinked_b = IndexedSets::new(n_sets, blocks.n_b());
        let mut linked_a = IndexedSets::new(n_sets, blocks.n_a());
        for (s, block) in blocks.blocks.iter().enumerate() {
            for &j in &block.b {
                if state.partner_of_b(j as usize).is_none() {
                    unlinked_b.insert(s, j as usize);
                }
            }
            for &i in &block.a {
                if state.partner_of_a(i as usize).is_some() {
                    linked_a.insert(s, i as usize);
                }
            }
        }
        Self {
            unlinked_b,
            linked_a,
        }
    }

    pub fn on_link(&mut self, s: usize, i: usize, j: usize) {
        self.unlinked_b.remove(s, j);
        self.linked_a.insert(s, i);
    }

    pub fn on_unlink(&mut self, s: usize, i: usize, j: usize) {
        self.unlinked_b.insert(s, j);
        self.linked_a.remove(s, i);
    }
}
