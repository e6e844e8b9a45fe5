//! Non-factorization baselines: random ranking and the revised user/item
//! collaborative filters over Jaccard-similar neighborhoods.

use crate::dataset::InteractionStore;
use crate::eval::ExplanationScorer;

/// Uniform random scores in `[0, 1)`, a pure function of
/// `(seed, user, item, explanation)` so rankings are reproducible and
/// evaluation can run in parallel.
#[derive(Clone, Copy, Debug)]
pub struct RandomScorer {
    pub seed: u64,
    pub n_explanations: usize,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RandomScorer {
    pub fn new(seed: u64, n_explanations: usize) -> Self {
        Self { seed, n_explanations }
    }
}

impl ExplanationScorer for RandomScorer {
    fn n_explanations(&self) -> usize {
        self.n_explanations
    }

    fn score(&self, user: usize, item: usize, explanation: usize) -> f64 {
        let mut h = splitmix64(self.seed);
        for v in [user, item, explanation] {
            h = splitmix64(h ^ v as u64);
        }
        (h >> 11) as f64 / (1u64 << 53) as f64
    }
}

/// `|a ∩ b| / |a ∪ b|` over sorted, duplicate-free slices.
pub fn jaccard(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 0.0;
    }
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Top-`k` most similar entities per entity, similarity descending with
/// ties broken by ascending index. Entities with zero overlap are omitted.
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborIndex {
    pub k: usize,
    pub neighbors: Vec<Vec<(usize, f64)>>,
}

impl NeighborIndex {
    /// Builds neighborhoods from per-entity explanation sets, using an
    /// inverted index so only overlapping pairs are visited.
    pub fn from_sets(sets: &[&[usize]], n_explanations: usize, k: usize) -> Self {
        let mut holders: Vec<Vec<usize>> = vec![Vec::new(); n_explanations];
        for (entity, set) in sets.iter().enumerate() {
            for &e in set.iter() {
                holders[e].push(entity);
            }
        }
        let mut overlap = vec![0usize; sets.len()];
        let mut touched = Vec::new();
        let neighbors = (0..sets.len())
            .map(|a| {
                for &e in sets[a] {
                    for &b in &holders[e] {
                        if b != a {
                            if overlap[b] == 0 {
                                touched.push(b);
                            }
                            overlap[b] += 1;
                        }
                    }
                }
                let mut list: Vec<(usize, f64)> = touched
                    .iter()
                    .map(|&b| {
                        let inter = overlap[b];
                        let union = sets[a].len() + sets[b].len() - inter;
                        (b, inter as f64 / union as f64)
                    })
                    .collect();
                for &b in &touched {
                    overlap[b] = 0;
                }
                touched.clear();
                list.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
                list.truncate(k);
                list
            })
            .collect();
        Self { k, neighbors }
    }

    /// User neighborhoods by Jaccard over `E_u`.
    pub fn users(store: &InteractionStore, k: usize) -> Self {
        let sets: Vec<&[usize]> = (0..store.n_users()).map(|u| store.explanations_of_user(u)).collect();
        Self::from_sets(&sets, store.n_explanations(), k)
    }

    /// Item neighborhoods by Jaccard over `E_i`.
    pub fn items(store: &InteractionStore, k: usize) -> Self {
        let sets: Vec<&[usize]> = (0..store.n_items()).map(|i| store.explanations_of_item(i)).collect();
        Self::from_sets(&sets, store.n_explanations(), k)
    }

    pub fn of(&self, entity: usize) -> &[(usize, f64)] {
        &self.neighbors[entity]
    }
}

/// Revised user-based CF: `Σ_{u′ ∈ N_u ∩ U_i ∩ U_e} s_{u,u′}`.
pub fn rucf_score(index: &NeighborIndex, store: &InteractionStore, user: usize, item: usize, explanation: usize) -> f64 {
    let of_item = store.users_of_item(item);
    let of_expl = store.users_of_explanation(explanation);
    index
        .of(user)
        .iter()
        .filter(|(v, _)| of_item.binary_search(v).is_ok() && of_expl.binary_search(v).is_ok())
        .map(|&(_, s)| s)
        .sum()
}

/// Revised item-based CF: `Σ_{i′ ∈ N_i ∩ I_u ∩ I_e} s_{i,i′}`.
pub fn ricf_score(index: &NeighborIndex, store: &InteractionStore, user: usize, item: usize, explanation: usize) -> f64 {
    let of_user = store.items_of_user(user);
    let of_expl = store.items_of_explanation(explanation);
    index
        .of(item)
        .iter()
        .filter(|(j, _)| of_user.binary_search(j).is_ok() && of_expl.binary_search(j).is_ok())
        .map(|&(_, s)| s)
        .sum()
}

pub struct RucfScorer<'a> {
    pub index: NeighborIndex,
    pub store: &'a InteractionStore,
}

impl<'a> RucfScorer<'a> {
    pub fn new(store: &'a InteractionStore, k: usize) -> Self {
        Self {
            index: NeighborIndex::users(store, k),
            store,
        }
    }
}

impl ExplanationScorer for RucfScorer<'_> {
    fn n_explanations(&self) -> usize {
        self.store.n_explanations()
    }

    fn score(&self, user: usize, item: usize, explanation: usize) -> f64 {
        rucf_score(&self.index, self.store, user, item, explanation)
    }
}

pub struct RicfScorer<'a> {
    pub index: NeighborIndex,
    pub store: &'a InteractionStore,
}

impl<'a> RicfScorer<'a> {
    pub fn new(store: &'a InteractionStore, k: usize) -> Self {
        Self {
            index: NeighborIndex::items(store, k),
            store,
        }
    }
}

impl ExplanationScorer for RicfScorer<'_> {
    fn n_explanations(&self) -> usize {
        self.store.n_explanations()
    }

    fn score(&self, user: usize, item: usize, explanation: usize) -> f64 {
        ricf_score(&self.index, self.store, user, item, explanation)
    }
}
