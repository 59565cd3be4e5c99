//! Interaction datasets in the LightGCN text format and their split into
//! per-client private rows.
//!
//! A file holds one line per user: the user id followed by the ids of the
//! items that user interacted with, all separated by ASCII whitespace.
//! Interactions are binary, so repeated ids collapse.

use std::collections::BTreeSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: invalid token {token:?}")]
    Parse {
        path: PathBuf,
        line: usize,
        token: String,
    },

    #[error("{0} contains no interactions")]
    Empty(PathBuf),

    #[error("invalid dataset: {0}")]
    Invalid(String),

    #[error("invalid synthetic parameters: {0}")]
    Synthetic(String),
}

/// Global train/test interaction lists.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionDataset {
    n_users: usize,
    n_items: usize,
    train: Vec<Vec<usize>>,
    test: Vec<Vec<usize>>,
}

impl InteractionDataset {
    /// Builds a dataset from per-user lists, sorting and deduplicating them.
    ///
    /// Items present in both splits of a user are kept in train only.
    pub fn new(
        n_users: usize,
        n_items: usize,
        mut train: Vec<Vec<usize>>,
        mut test: Vec<Vec<usize>>,
    ) -> Result<Self, DatasetError> {
        if train.len() > n_users || test.len() > n_users {
            return Err(DatasetError::Invalid(format!(
                "more user rows than n_users = {n_users}"
            )));
        }
        train.resize(n_users, Vec::new());
        test.resize(n_users, Vec::new());
        for (u, (tr, te)) in train.iter_mut().zip(test.iter_mut()).enumerate() {
            tr.sort_unstable();
            tr.dedup();
            te.sort_unstable();
            te.dedup();
            te.retain(|i| tr.binary_search(i).is_err());
            if let Some(&i) = tr.iter().chain(te.iter()).find(|&&i| i >= n_items) {
                return Err(DatasetError::Invalid(format!(
                    "user {u} references item {i} >= n_items = {n_items}"
                )));
            }
        }
        Ok(Self {
            n_users,
            n_items,
            train,
            test,
        })
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn train(&self, user: usize) -> &[usize] {
        &self.train[user]
    }

    pub fn test(&self, user: usize) -> &[usize] {
        &self.test[user]
    }

    pub fn train_interactions(&self) -> usize {
        self.train.iter().map(Vec::len).sum()
    }

    pub fn test_interactions(&self) -> usize {
        self.test.iter().map(Vec::len).sum()
    }

    pub fn total_interactions(&self) -> usize {
        self.train_interactions() + self.test_interactions()
    }

    /// Number of train interactions per item.
    pub fn item_train_degrees(&self) -> Vec<usize> {
        let mut degrees = vec![0; self.n_items];
        for row in &self.train {
            for &i in row {
                degrees[i] += 1;
            }
        }
        degrees
    }

    pub fn write_lightgcn(&self, train_path: &Path, test_path: &Path) -> Result<(), DatasetError> {
        write_split(train_path, &self.train)?;
        write_split(test_path, &self.test)
    }
}

/// One user's private interaction row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClientProfile {
    pub user_id: usize,
    /// Sorted support of the user's row of `R`.
    pub items: Vec<usize>,
}

impl ClientProfile {
    pub fn new(user_id: usize, mut items: Vec<usize>) -> Self {
        items.sort_unstable();
        items.dedup();
        assert!(!items.is_empty(), "client {user_id} has no interactions");
        Self { user_id, items }
    }

    pub fn degree(&self) -> usize {
        self.items.len()
    }
}

/// Result of partitioning a dataset into clients.
#[derive(Debug, Clone)]
pub struct ClientSplit {
    pub clients: Vec<ClientProfile>,
    /// Users without any train interaction.
    pub omitted_users: usize,
}

/// Loads a train/test pair of LightGCN files.
///
/// `n_users` and `n_items` are one past the largest ids seen in either file.
pub fn load_dataset(train_path: &Path, test_path: &Path) -> Result<InteractionDataset, DatasetError> {
    let train = read_split(train_path)?;
    let test = read_split(test_path)?;

    let n_users = train.len().max(test.len());
    let n_items = train
        .iter()
        .chain(test.iter())
        .flatten()
        .max()
        .map_or(0, |&i| i + 1);

    let ds = InteractionDataset::new(n_users, n_items, train, test)?;
    let empty_train = ds.train.iter().filter(|r| r.is_empty()).count();
    info!(
        "loaded {} users, {} items, {} train + {} test interactions ({} users without train data)",
        ds.n_users,
        ds.n_items,
        ds.train_interactions(),
        ds.test_interactions(),
        empty_train
    );
    Ok(ds)
}

fn read_split(path: &Path) -> Result<Vec<Vec<usize>>, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut rows: Vec<Vec<usize>> = Vec::new();
    let mut saw_user = false;
    for (idx, line) in text.lines().enumerate() {
        let mut tokens = line.split_ascii_whitespace().map(|tok| {
            tok.parse::<usize>().map_err(|_| DatasetError::Parse {
                path: path.to_owned(),
                line: idx + 1,
                token: tok.to_owned(),
            })
        });
        let Some(user) = tokens.next() else {
            continue;
        };
        let user = user?;
        if rows.len() <= user {
            rows.resize(user + 1, Vec::new());
        }
        for item in tokens {
            rows[user].push(item?);
        }
        saw_user = true;
    }
    if !saw_user {
        return Err(DatasetError::Empty(path.to_owned()));
    }
    Ok(rows)
}

fn write_split(path: &Path, rows: &[Vec<usize>]) -> Result<(), DatasetError> {
    let io_err = |source| DatasetError::Io {
        path: path.to_owned(),
        source,
    };
    let mut out = BufWriter::new(fs::File::create(path).map_err(io_err)?);
    for (user, items) in rows.iter().enumerate() {
        write!(out, "{user}").map_err(io_err)?;
        for item in items {
            write!(out, " {item}").map_err(io_err)?;
        }
        writeln!(out).map_err(io_err)?;
    }
    out.flush().map_err(io_err)
}

/// One profile per user with at least one train interaction.
pub fn split_clients(ds: &InteractionDataset) -> ClientSplit {
    let clients: Vec<ClientProfile> = ds
        .train
        .iter()
        .enumerate()
        .filter(|(_, items)| !items.is_empty())
        .map(|(user_id, items)| ClientProfile {
            user_id,
            items: items.clone(),
        })
        .collect();
    let omitted_users = ds.n_users - clients.len();
    if omitted_users > 0 {
        info!("{omitted_users} users have no train interactions and take no part in aggregation");
    }
    ClientSplit {
        clients,
        omitted_users,
    }
}

/// Fraction of non-train pairs that land in test, relative to `density`.
const TEST_RATE: f64 = 0.25;

/// Uniform random interactions for desk-scale experiments.
///
/// Every (user, item) pair is a train interaction with probability
/// `density`; remaining pairs become test interactions with probability
/// `density / 4`. Users are then patched so each has at least one train and
/// one test item. Uses ChaCha20 seeded with `seed_from_u64(seed)`.
pub fn generate_synthetic(
    n_users: usize,
    n_items: usize,
    density: f64,
    seed: u64,
) -> Result<InteractionDataset, DatasetError> {
    if !(density > 0.0 && density <= 1.0) {
        return Err(DatasetError::Synthetic(format!(
            "density must be in (0, 1], got {density}"
        )));
    }
    if n_users == 0 || n_items < 2 {
        return Err(DatasetError::Synthetic(format!(
            "need at least 1 user and 2 items to give every user a train and a test item, got {n_users}x{n_items}"
        )));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let test_density = (density * TEST_RATE).min(1.0);
    let mut train = Vec::with_capacity(n_users);
    let mut test = Vec::with_capacity(n_users);
    for _ in 0..n_users {
        let mut tr = Vec::new();
        let mut te = Vec::new();
        for item in 0..n_items {
            if rng.gen_bool(density) {
                tr.push(item);
            } else if rng.gen_bool(test_density) {
                te.push(item);
            }
        }
        ensure_both_splits(&mut tr, &mut te, n_items, &mut rng);
        train.push(tr);
        test.push(te);
    }
    InteractionDataset::new(n_users, n_items, train, test)
}

/// Users split into `clusters` communities, each dense on its own block of
/// items, plus uniform background noise.
///
/// A block structure gives the normalized interaction matrix a clear gap
/// after its `clusters` leading singular values, which is what the power
/// method checks need.
pub fn generate_clustered(
    n_users: usize,
    n_items: usize,
    clusters: usize,
    in_density: f64,
    noise_density: f64,
    seed: u64,
) -> Result<InteractionDataset, DatasetError> {
    if clusters == 0 || clusters > n_users || 2 * clusters > n_items {
        return Err(DatasetError::Synthetic(format!(
            "{clusters} clusters do not fit {n_users} users and {n_items} items"
        )));
    }
    for (name, p) in [("in_density", in_density), ("noise_density", noise_density)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(DatasetError::Synthetic(format!("{name} = {p} not in [0, 1]")));
        }
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let block = |idx: usize, total: usize| idx * clusters / total;
    let mut train = Vec::with_capacity(n_users);
    let mut test = Vec::with_capacity(n_users);
    for user in 0..n_users {
        let community = block(user, n_users);
        let mut tr = Vec::new();
        let mut te = Vec::new();
        for item in 0..n_items {
            let p = if block(item, n_items) == community {
                in_density
            } else {
                noise_density
            };
            if rng.gen_bool(p) {
                if rng.gen_bool(1.0 - TEST_RATE) {
                    tr.push(item);
                } else {
                    te.push(item);
                }
            }
        }
        ensure_both_splits(&mut tr, &mut te, n_items, &mut rng);
        train.push(tr);
        test.push(te);
    }
    InteractionDataset::new(n_users, n_items, train, test)
}

fn ensure_both_splits(train: &mut Vec<usize>, test: &mut Vec<usize>, n_items: usize, rng: &mut impl Rng) {
    let taken: BTreeSet<usize> = train.iter().chain(test.iter()).copied().collect();
    let mut free: Vec<usize> = (0..n_items).filter(|i| !taken.contains(i)).collect();
    free.shuffle(rng);

    if train.is_empty() {
        match free.pop() {
            Some(i) => train.push(i),
            None => train.push(test.swap_remove(rng.gen_range(0..test.len()))),
        }
    }
    if test.is_empty() {
        match free.pop() {
            Some(i) => test.push(i),
            None => test.push(train.swap_remove(rng.gen_range(0..train.len()))),
        }
    }
    train.sort_unstable();
    test.sort_unstable();
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use tempfile::tempdir;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let path = dir.join(name);
        fs::write(&path, body).unwrap();
        path
    }

    #[test]
    fn single_line_files() {
        let dir = tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "0 0\n");
        let te = write(dir.path(), "test.txt", "0 1\n");
        let ds = load_dataset(&tr, &te).unwrap();
        assert_eq!(ds.n_users(), 1);
        assert_eq!(ds.n_items(), 2);
        assert_eq!(ds.total_interactions(), 2);
    }

    #[test]
    fn non_integer_token_names_line() {
        let dir = tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "3 foo 5\n");
        let te = write(dir.path(), "test.txt", "0 1\n");
        match load_dataset(&tr, &te) {
            Err(DatasetError::Parse { line, token, .. }) => {
                assert_eq!(line, 1);
                assert_eq!(token, "foo");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_rejected() {
        let dir = tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "");
        let te = write(dir.path(), "test.txt", "0 1\n");
        assert!(matches!(load_dataset(&tr, &te), Err(DatasetError::Empty(_))));
        let tr = write(dir.path(), "train2.txt", "\n  \n");
        assert!(matches!(load_dataset(&tr, &te), Err(DatasetError::Empty(_))));
    }

    #[test]
    fn crlf_duplicates_and_overlap() {
        let dir = tempdir().unwrap();
        let tr = write(dir.path(), "train.txt", "0 2 1 2\r\n1 0\r\n");
        let te = write(dir.path(), "test.txt", "0 1 3\r\n");
        let ds = load_dataset(&tr, &te).unwrap();
        assert_eq!(ds.train(0), &[1, 2]);
        assert_eq!(ds.test(0), &[3]);
        assert_eq!(ds.n_items(), 4);
        assert_eq!(ds.n_users(), 2);
    }

    #[test]
    fn test_only_items_are_kept() {
        let ds = InteractionDataset::new(1, 5, vec![vec![0]], vec![vec![4]]).unwrap();
        assert_eq!(ds.item_train_degrees(), vec![1, 0, 0, 0, 0]);
    }

    #[test]
    fn out_of_range_item_is_invalid() {
        assert!(InteractionDataset::new(1, 2, vec![vec![2]], vec![vec![]]).is_err());
    }

    #[test]
    fn split_examples() {
        let ds = InteractionDataset::new(2, 2, vec![vec![0, 1], vec![1]], vec![]).unwrap();
        let split = split_clients(&ds);
        let degrees: Vec<_> = split.clients.iter().map(ClientProfile::degree).collect();
        assert_eq!(degrees, vec![2, 1]);
        assert_eq!(split.omitted_users, 0);

        let ds = InteractionDataset::new(2, 2, vec![vec![0, 1], vec![]], vec![vec![], vec![0]]).unwrap();
        let split = split_clients(&ds);
        assert_eq!(split.clients.len(), 1);
        assert_eq!(split.omitted_users, 1);
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic(64, 32, 0.1, 7).unwrap();
        let b = generate_synthetic(64, 32, 0.1, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_synthetic(64, 32, 0.1, 8).unwrap());
        for u in 0..64 {
            assert!(!a.train(u).is_empty());
            assert!(!a.test(u).is_empty());
        }
    }

    #[test]
    fn full_density_covers_every_item() {
        let ds = generate_synthetic(10, 6, 1.0, 3).unwrap();
        for u in 0..10 {
            let mut all: Vec<_> = ds.train(u).iter().chain(ds.test(u)).copied().collect();
            all.sort_unstable();
            assert_eq!(all, (0..6).collect::<Vec<_>>());
            assert!(!ds.test(u).is_empty());
        }
    }

    #[test]
    fn synthetic_train_count_matches_binomial() {
        let ds = generate_synthetic(1000, 100, 0.05, 1).unwrap();
        let trials = 1000.0 * 100.0;
        let mean = trials * 0.05;
        let sigma = (trials * 0.05 * 0.95f64).sqrt();
        let count = ds.train_interactions() as f64;
        assert!((count - mean).abs() <= 3.0 * sigma, "train count {count}, mean {mean}, sigma {sigma}");
    }

    #[test]
    fn synthetic_rejects_bad_parameters() {
        assert!(generate_synthetic(10, 10, 0.0, 1).is_err());
        assert!(generate_synthetic(10, 10, 1.5, 1).is_err());
        assert!(generate_synthetic(10, 1, 0.5, 1).is_err());
        assert!(generate_synthetic(0, 10, 0.5, 1).is_err());
    }

    #[test]
    fn clustered_has_both_splits() {
        let ds = generate_clustered(60, 30, 3, 0.6, 0.02, 9).unwrap();
        assert_eq!(ds.n_users(), 60);
        for u in 0..60 {
            assert!(!ds.train(u).is_empty() && !ds.test(u).is_empty());
        }
        assert!(generate_clustered(4, 4, 3, 0.5, 0.0, 1).is_err());
    }

    fn arb_dataset() -> impl Strategy<Value = InteractionDataset> {
        (1usize..12, 2usize..15).prop_flat_map(|(users, items)| {
            let row = prop::collection::vec(0..items, 0..items);
            (
                Just(users),
                Just(items),
                prop::collection::vec(row.clone(), users),
                prop::collection::vec(row, users),
            )
        })
        .prop_map(|(users, items, mut train, test)| {
            // pin the id ranges so they survive the text format
            train[users - 1].push(items - 1);
            InteractionDataset::new(users, items, train, test).unwrap()
        })
    }

    proptest! {
        #[test]
        fn lightgcn_round_trip(ds in arb_dataset()) {
            let dir = tempdir().unwrap();
            let (tr, te) = (dir.path().join("train.txt"), dir.path().join("test.txt"));
            ds.write_lightgcn(&tr, &te).unwrap();
            prop_assert_eq!(load_dataset(&tr, &te).unwrap(), ds);
        }

        #[test]
        fn split_preserves_interactions(ds in arb_dataset()) {
            let split = split_clients(&ds);
            let kept: usize = split.clients.iter().map(ClientProfile::degree).sum();
            prop_assert_eq!(kept, ds.train_interactions());
            prop_assert_eq!(split.clients.len() + split.omitted_users, ds.n_users());
        }
    }
}
