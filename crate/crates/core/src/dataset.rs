//! Triple ingestion, derived index sets, and reproducible splitting.
//!
//! A dataset is a set of (user, item) records, each carrying a non-empty set
//! of explanation indices. Every derived set (`I_u`, `E_u`, `E_i`, `E_{u,i}`,
//! `U_i`, `U_e`, `I_e`) is a pure projection of the records and is rebuilt on
//! construction.

use std::collections::HashMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty dataset")]
    Empty,
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: unknown {class} id `{id}`")]
    UnknownId {
        line: usize,
        class: &'static str,
        id: String,
    },
    #[error("record ({user}, {item}) has no explanations")]
    EmptyRecord { user: usize, item: usize },
    #[error("{class} index {index} out of range (count {count})")]
    IndexOutOfRange {
        class: &'static str,
        index: usize,
        count: usize,
    },
    #[error("invalid split spec: {0}")]
    InvalidSplit(String),
    #[error("subsample target {target} exceeds the {available} available training triples")]
    TargetTooLarge { target: usize, available: usize },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// One (user, item) pair with its explanation set (sorted, duplicate-free).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TripleRecord {
    pub user: usize,
    pub item: usize,
    pub explanations: Vec<usize>,
}

impl TripleRecord {
    pub fn new(user: usize, item: usize, mut explanations: Vec<usize>) -> Self {
        explanations.sort_unstable();
        explanations.dedup();
        Self {
            user,
            item,
            explanations,
        }
    }
}

/// Indexed triple store. Immutable after construction.
#[derive(Clone, Debug)]
pub struct InteractionStore {
    records: Vec<TripleRecord>,
    n_users: usize,
    n_items: usize,
    n_explanations: usize,
    items_of_user: Vec<Vec<usize>>,
    explanations_of_user: Vec<Vec<usize>>,
    explanations_of_item: Vec<Vec<usize>>,
    users_of_item: Vec<Vec<usize>>,
    users_of_explanation: Vec<Vec<usize>>,
    items_of_explanation: Vec<Vec<usize>>,
    pair_index: HashMap<(usize, usize), usize>,
    triples: Vec<(usize, usize, usize)>,
}

impl PartialEq for InteractionStore {
    fn eq(&self, other: &Self) -> bool {
        self.n_users == other.n_users
            && self.n_items == other.n_items
            && self.n_explanations == other.n_explanations
            && self.records == other.records
    }
}

fn sorted_unique(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v.dedup();
    v
}

impl InteractionStore {
    /// Builds a store over a fixed entity universe. Records sharing a
    /// (user, item) pair are merged into the first occurrence.
    pub fn from_records(
        records: Vec<TripleRecord>,
        n_users: usize,
        n_items: usize,
        n_explanations: usize,
    ) -> Result<Self, DatasetError> {
        let mut merged: Vec<TripleRecord> = Vec::with_capacity(records.len());
        let mut pair_index = HashMap::with_capacity(records.len());
        for rec in records {
            if rec.user >= n_users {
                return Err(DatasetError::IndexOutOfRange {
                    class: "user",
                    index: rec.user,
                    count: n_users,
                });
            }
            if rec.item >= n_items {
                return Err(DatasetError::IndexOutOfRange {
                    class: "item",
                    index: rec.item,
                    count: n_items,
                });
            }
            if let Some(&e) = rec.explanations.iter().find(|&&e| e >= n_explanations) {
                return Err(DatasetError::IndexOutOfRange {
                    class: "explanation",
                    index: e,
                    count: n_explanations,
                });
            }
            if rec.explanations.is_empty() {
                return Err(DatasetError::EmptyRecord {
                    user: rec.user,
                    item: rec.item,
                });
            }
            match pair_index.get(&(rec.user, rec.item)) {
                Some(&idx) => {
                    let target: &mut TripleRecord = &mut merged[idx];
                    target.explanations.extend(rec.explanations);
                    target.explanations = sorted_unique(std::mem::take(&mut target.explanations));
                }
                None => {
                    pair_index.insert((rec.user, rec.item), merged.len());
                    merged.push(TripleRecord::new(rec.user, rec.item, rec.explanations));
                }
            }
        }

        let mut items_of_user = vec![Vec::new(); n_users];
        let mut explanations_of_user = vec![Vec::new(); n_users];
        let mut explanations_of_item = vec![Vec::new(); n_items];
        let mut users_of_item = vec![Vec::new(); n_items];
        let mut users_of_explanation = vec![Vec::new(); n_explanations];
        let mut items_of_explanation = vec![Vec::new(); n_explanations];
        let mut triples = Vec::new();
        for rec in &merged {
            items_of_user[rec.user].push(rec.item);
            users_of_item[rec.item].push(rec.user);
            for &e in &rec.explanations {
                explanations_of_user[rec.user].push(e);
                explanations_of_item[rec.item].push(e);
                users_of_explanation[e].push(rec.user);
                items_of_explanation[e].push(rec.item);
                triples.push((rec.user, rec.item, e));
            }
        }
        let finish = |sets: Vec<Vec<usize>>| sets.into_iter().map(sorted_unique).collect();

        Ok(Self {
            records: merged,
            n_users,
            n_items,
            n_explanations,
            items_of_user: finish(items_of_user),
            explanations_of_user: finish(explanations_of_user),
            explanations_of_item: finish(explanations_of_item),
            users_of_item: finish(users_of_item),
            users_of_explanation: finish(users_of_explanation),
            items_of_explanation: finish(items_of_explanation),
            pair_index,
            triples,
        })
    }

    /// A store over the same universe holding a subset of records.
    pub fn with_records(&self, records: Vec<TripleRecord>) -> Self {
        Self::from_records(records, self.n_users, self.n_items, self.n_explanations)
            .expect("records drawn from a valid store stay valid")
    }

    pub fn records(&self) -> &[TripleRecord] {
        &self.records
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_explanations(&self) -> usize {
        self.n_explanations
    }

    /// `|T|`, the number of (user, item, explanation) triples.
    pub fn triple_count(&self) -> usize {
        self.triples.len()
    }

    /// Flat triple list in record order.
    pub fn triples(&self) -> &[(usize, usize, usize)] {
        &self.triples
    }

    pub fn items_of_user(&self, u: usize) -> &[usize] {
        &self.items_of_user[u]
    }

    pub fn explanations_of_user(&self, u: usize) -> &[usize] {
        &self.explanations_of_user[u]
    }

    pub fn explanations_of_item(&self, i: usize) -> &[usize] {
        &self.explanations_of_item[i]
    }

    pub fn users_of_item(&self, i: usize) -> &[usize] {
        &self.users_of_item[i]
    }

    pub fn users_of_explanation(&self, e: usize) -> &[usize] {
        &self.users_of_explanation[e]
    }

    pub fn items_of_explanation(&self, e: usize) -> &[usize] {
        &self.items_of_explanation[e]
    }

    /// `E_{u,i}`; empty when the pair has no record.
    pub fn explanations_of_pair(&self, u: usize, i: usize) -> &[usize] {
        match self.pair_index.get(&(u, i)) {
            Some(&idx) => &self.records[idx].explanations,
            None => &[],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Bidirectional raw-ID ↔ dense-index map for one entity class.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMap {
    raw: Vec<String>,
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn get_or_insert(&mut self, raw: &str) -> usize {
        if let Some(&idx) = self.index.get(raw) {
            return idx;
        }
        let idx = self.raw.len();
        self.raw.push(raw.to_owned());
        self.index.insert(raw.to_owned(), idx);
        idx
    }

    pub fn get(&self, raw: &str) -> Option<usize> {
        self.index.get(raw).copied()
    }

    pub fn raw(&self, idx: usize) -> &str {
        &self.raw[idx]
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn identity(count: usize) -> Self {
        let mut map = Self::default();
        for i in 0..count {
            map.get_or_insert(&i.to_string());
        }
        map
    }

    /// Writes `raw_id<TAB>dense_index` lines in index order.
    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        let file = fs::File::create(path).map_err(io_err(path))?;
        let mut out = BufWriter::new(file);
        for (idx, raw) in self.raw.iter().enumerate() {
            writeln!(out, "{raw}\t{idx}").map_err(io_err(path))?;
        }
        out.flush().map_err(io_err(path))
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = fs::read_to_string(path).map_err(io_err(path))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let malformed = |reason: &str| DatasetError::Malformed {
                line: n + 1,
                reason: reason.to_owned(),
            };
            let (raw, idx) = line
                .rsplit_once('\t')
                .ok_or_else(|| malformed("expected raw_id<TAB>dense_index"))?;
            let idx: usize = idx.trim().parse().map_err(|_| malformed("bad dense index"))?;
            entries.push((idx, raw.to_owned()));
        }
        entries.sort_by_key(|(idx, _)| *idx);
        let mut map = Self::default();
        for (expected, (idx, raw)) in entries.into_iter().enumerate() {
            if idx != expected || map.index.contains_key(&raw) {
                return Err(DatasetError::Malformed {
                    line: expected + 1,
                    reason: "dense indices must be contiguous and raw ids unique".into(),
                });
            }
            map.get_or_insert(&raw);
        }
        Ok(map)
    }
}

/// ID maps for the three entity classes.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct IdMaps {
    pub users: IdMap,
    pub items: IdMap,
    pub explanations: IdMap,
}

impl IdMaps {
    pub const USER_FILE: &'static str = "users.map";
    pub const ITEM_FILE: &'static str = "items.map";
    pub const EXPLANATION_FILE: &'static str = "explanations.map";

    pub fn identity(n_users: usize, n_items: usize, n_explanations: usize) -> Self {
        Self {
            users: IdMap::identity(n_users),
            items: IdMap::identity(n_items),
            explanations: IdMap::identity(n_explanations),
        }
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), DatasetError> {
        self.users.save(&dir.join(Self::USER_FILE))?;
        self.items.save(&dir.join(Self::ITEM_FILE))?;
        self.explanations.save(&dir.join(Self::EXPLANATION_FILE))
    }

    pub fn load_dir(dir: &Path) -> Result<Self, DatasetError> {
        Ok(Self {
            users: IdMap::load(&dir.join(Self::USER_FILE))?,
            items: IdMap::load(&dir.join(Self::ITEM_FILE))?,
            explanations: IdMap::load(&dir.join(Self::EXPLANATION_FILE))?,
        })
    }
}

/// How the fields of a triples file are interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IdMode {
    /// Arbitrary strings; dense indices assigned in first-seen order.
    Raw,
    /// Fields are already dense indices; counts are `max + 1`.
    Dense,
}

impl std::str::FromStr for IdMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "raw" | "raw-strings" => Ok(Self::Raw),
            "dense" => Ok(Self::Dense),
            other => Err(format!("unknown id mode `{other}` (expected raw|dense)")),
        }
    }
}

impl std::fmt::Display for IdMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Raw => "raw",
            Self::Dense => "dense",
        })
    }
}

/// Result of reading a triples file.
#[derive(Clone, Debug)]
pub struct LoadedTriples {
    pub store: InteractionStore,
    pub ids: IdMaps,
    /// Number of exact duplicate triple lines that were dropped.
    pub duplicates: usize,
}

fn parse_lines(text: &str) -> impl Iterator<Item = Result<(usize, [&str; 3]), DatasetError>> {
    text.lines().enumerate().filter_map(|(n, line)| {
        if line.trim().is_empty() {
            return None;
        }
        let mut fields = line.split('\t');
        let parsed = match (fields.next(), fields.next(), fields.next(), fields.next()) {
            (Some(u), Some(i), Some(e), None) if !u.is_empty() && !i.is_empty() && !e.is_empty() => {
                Ok((n + 1, [u, i, e]))
            }
            _ => Err(DatasetError::Malformed {
                line: n + 1,
                reason: "expected user<TAB>item<TAB>explanation".into(),
            }),
        };
        Some(parsed)
    })
}

fn assemble(
    triples: Vec<(usize, usize, usize)>,
    ids: IdMaps,
    n_users: usize,
    n_items: usize,
    n_explanations: usize,
) -> Result<LoadedTriples, DatasetError> {
    if triples.is_empty() {
        return Err(DatasetError::Empty);
    }
    let total = triples.len();
    let records = triples
        .into_iter()
        .map(|(u, i, e)| TripleRecord::new(u, i, vec![e]))
        .collect();
    let store = InteractionStore::from_records(records, n_users, n_items, n_explanations)?;
    let duplicates = total - store.triple_count();
    if duplicates > 0 {
        log::warn!("dropped {duplicates} duplicate triple line(s)");
    }
    Ok(LoadedTriples {
        store,
        ids,
        duplicates,
    })
}

/// Reads a `user<TAB>item<TAB>explanation` file.
pub fn load_triples(path: &Path, mode: IdMode) -> Result<LoadedTriples, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut triples = Vec::new();
    match mode {
        IdMode::Raw => {
            let mut ids = IdMaps::default();
            for parsed in parse_lines(&text) {
                let (_, [u, i, e]) = parsed?;
                triples.push((
                    ids.users.get_or_insert(u),
                    ids.items.get_or_insert(i),
                    ids.explanations.get_or_insert(e),
                ));
            }
            let (nu, ni, ne) = (ids.users.len(), ids.items.len(), ids.explanations.len());
            assemble(triples, ids, nu, ni, ne)
        }
        IdMode::Dense => {
            let mut counts = [0usize; 3];
            for parsed in parse_lines(&text) {
                let (line, fields) = parsed?;
                let mut idx = [0usize; 3];
                for k in 0..3 {
                    idx[k] = fields[k].trim().parse().map_err(|_| DatasetError::Malformed {
                        line,
                        reason: format!("`{}` is not a dense index", fields[k]),
                    })?;
                    counts[k] = counts[k].max(idx[k] + 1);
                }
                triples.push((idx[0], idx[1], idx[2]));
            }
            let ids = IdMaps::identity(counts[0], counts[1], counts[2]);
            assemble(triples, ids, counts[0], counts[1], counts[2])
        }
    }
}

/// Reads a triples file against an existing universe; unknown raw IDs are an error.
pub fn load_triples_with_ids(path: &Path, ids: &IdMaps) -> Result<LoadedTriples, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut triples = Vec::new();
    for parsed in parse_lines(&text) {
        let (line, [u, i, e]) = parsed?;
        let lookup = |map: &IdMap, raw: &str, class: &'static str| {
            map.get(raw).ok_or_else(|| DatasetError::UnknownId {
                line,
                class,
                id: raw.to_owned(),
            })
        };
        triples.push((
            lookup(&ids.users, u, "user")?,
            lookup(&ids.items, i, "item")?,
            lookup(&ids.explanations, e, "explanation")?,
        ));
    }
    assemble(
        triples,
        ids.clone(),
        ids.users.len(),
        ids.items.len(),
        ids.explanations.len(),
    )
}

/// Writes one line per triple, in record order, using raw IDs.
pub fn save_triples(store: &InteractionStore, ids: &IdMaps, path: &Path) -> Result<(), DatasetError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    for &(u, i, e) in store.triples() {
        writeln!(
            out,
            "{}\t{}\t{}",
            ids.users.raw(u),
            ids.items.raw(i),
            ids.explanations.raw(e)
        )
        .map_err(io_err(path))?;
    }
    out.flush().map_err(io_err(path))
}

/// Parameters of the train/validation/test partition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Fraction of the (post-repair) training records held out for validation.
    pub validation_fraction: f64,
    pub repetitions: usize,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.7,
            validation_fraction: 0.1,
            repetitions: 5,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<(), DatasetError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(DatasetError::InvalidSplit(format!(
                "train fraction {} not in (0, 1)",
                self.train_fraction
            )));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(DatasetError::InvalidSplit(format!(
                "validation fraction {} not in [0, 1)",
                self.validation_fraction
            )));
        }
        if self.repetitions == 0 {
            return Err(DatasetError::InvalidSplit("repetitions must be at least 1".into()));
        }
        Ok(())
    }

    /// RNG seed for one repetition. Repetitions get decorrelated streams.
    pub fn repetition_seed(&self, repetition: usize) -> u64 {
        self.seed ^ (repetition as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
    }
}

/// Output of [`split`].
#[derive(Clone, Debug)]
pub struct Split {
    pub train: InteractionStore,
    pub valid: InteractionStore,
    pub test: InteractionStore,
    /// Records moved from test to train by the coverage repair.
    pub repaired: usize,
}

impl Split {
    /// Training records followed by the validation carve-out.
    pub fn full_train(&self) -> InteractionStore {
        let mut records = self.train.records().to_vec();
        records.extend_from_slice(self.valid.records());
        self.train.with_records(records)
    }
}

/// Per-entity record counts, used to track coverage while moving records.
struct Coverage {
    users: Vec<usize>,
    items: Vec<usize>,
    explanations: Vec<usize>,
}

impl Coverage {
    fn new(store: &InteractionStore) -> Self {
        Self {
            users: vec![0; store.n_users()],
            items: vec![0; store.n_items()],
            explanations: vec![0; store.n_explanations()],
        }
    }

    fn add(&mut self, rec: &TripleRecord) {
        self.users[rec.user] += 1;
        self.items[rec.item] += 1;
        for &e in &rec.explanations {
            self.explanations[e] += 1;
        }
    }

    fn remove(&mut self, rec: &TripleRecord) {
        self.users[rec.user] -= 1;
        self.items[rec.item] -= 1;
        for &e in &rec.explanations {
            self.explanations[e] -= 1;
        }
    }

    /// True when `rec` covers an entity that currently has no record.
    fn fills_gap(&self, rec: &TripleRecord) -> bool {
        self.users[rec.user] == 0
            || self.items[rec.item] == 0
            || rec.explanations.iter().any(|&e| self.explanations[e] == 0)
    }

    /// True when removing `rec` would leave some entity uncovered.
    fn is_sole_cover(&self, rec: &TripleRecord) -> bool {
        self.users[rec.user] == 1
            || self.items[rec.item] == 1
            || rec.explanations.iter().any(|&e| self.explanations[e] == 1)
    }
}

/// Record-level train/validation/test split with a training-coverage repair.
///
/// Records are shuffled and the first `round(train_fraction · n)` go to
/// train. Test records are then scanned in random order and any record that
/// covers a user, item or explanation absent from train is moved over.
/// Validation is a random `validation_fraction` of the repaired training
/// records, skipping records whose removal would break coverage.
pub fn split(store: &InteractionStore, spec: &SplitSpec, repetition: usize) -> Result<Split, DatasetError> {
    spec.validate()?;
    if repetition >= spec.repetitions {
        return Err(DatasetError::InvalidSplit(format!(
            "repetition {repetition} >= repetitions {}",
            spec.repetitions
        )));
    }
    if store.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.repetition_seed(repetition));
    let n = store.records().len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_train = ((spec.train_fraction * n as f64).round() as usize).min(n);

    // 0 = test, 1 = train, 2 = validation
    let mut side = vec![0u8; n];
    let mut coverage = Coverage::new(store);
    for &r in &order[..n_train] {
        side[r] = 1;
        coverage.add(&store.records()[r]);
    }

    let mut test_order: Vec<usize> = order[n_train..].to_vec();
    test_order.shuffle(&mut rng);
    let mut repaired = 0;
    for &r in &test_order {
        let rec = &store.records()[r];
        if coverage.fills_gap(rec) {
            side[r] = 1;
            coverage.add(rec);
            repaired += 1;
        }
    }

    let mut train_order: Vec<usize> = (0..n).filter(|&r| side[r] == 1).collect();
    let n_valid = (spec.validation_fraction * train_order.len() as f64).round() as usize;
    train_order.shuffle(&mut rng);
    let mut taken = 0;
    for &r in &train_order {
        if taken == n_valid {
            break;
        }
        let rec = &store.records()[r];
        if !coverage.is_sole_cover(rec) {
            side[r] = 2;
            coverage.remove(rec);
            taken += 1;
        }
    }

    let pick = |s: u8| {
        store.with_records(
            (0..n)
                .filter(|&r| side[r] == s)
                .map(|r| store.records()[r].clone())
                .collect(),
        )
    };
    Ok(Split {
        train: pick(1),
        valid: pick(2),
        test: pick(0),
        repaired,
    })
}

/// Uniformly drops triples until `round(ratio · whole)` remain.
///
/// Records whose explanation set empties are dropped; coverage is not
/// repaired.
pub fn subsample_training(
    train: &InteractionStore,
    target_ratio_of_whole: f64,
    whole_triple_count: usize,
    seed: u64,
) -> Result<InteractionStore, DatasetError> {
    let target = (target_ratio_of_whole * whole_triple_count as f64).round() as usize;
    let available = train.triple_count();
    if target > available {
        return Err(DatasetError::TargetTooLarge { target, available });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..available).collect();
    order.shuffle(&mut rng);
    let mut keep = vec![false; available];
    for &t in &order[..target] {
        keep[t] = true;
    }
    let mut records = Vec::new();
    let mut cursor = 0;
    for rec in train.records() {
        let kept: Vec<usize> = rec
            .explanations
            .iter()
            .enumerate()
            .filter(|(k, _)| keep[cursor + k])
            .map(|(_, &e)| e)
            .collect();
        cursor += rec.explanations.len();
        if !kept.is_empty() {
            records.push(TripleRecord::new(rec.user, rec.item, kept));
        }
    }
    Ok(train.with_records(records))
}
