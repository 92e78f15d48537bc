//! Customer sets per store and the thresholded customer-sharing graph.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{dist, PlanarPoint};

/// One purchase event.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransactionRecord {
    pub user_id: String,
    pub merchant: String,
    pub store_id: String,
}

impl TransactionRecord {
    pub fn new(
        user_id: impl Into<String>,
        merchant: impl Into<String>,
        store_id: impl Into<String>,
    ) -> Self {
        Self {
            user_id: user_id.into(),
            merchant: merchant.into(),
            store_id: store_id.into(),
        }
    }

    /// Name of the first empty field, if any.
    pub fn missing_field(&self) -> Option<&'static str> {
        if self.user_id.is_empty() {
            Some("user_id")
        } else if self.merchant.is_empty() {
            Some("merchant")
        } else if self.store_id.is_empty() {
            Some("store_id")
        } else {
            None
        }
    }

    pub fn store(&self) -> StoreRef {
        StoreRef::new(self.merchant.clone(), self.store_id.clone())
    }
}

/// Unique store key. Ordering is lexicographic on merchant, then store id.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct StoreRef {
    pub merchant: String,
    pub store_id: String,
}

impl StoreRef {
    pub fn new(merchant: impl Into<String>, store_id: impl Into<String>) -> Self {
        Self {
            merchant: merchant.into(),
            store_id: store_id.into(),
        }
    }
}

impl fmt::Display for StoreRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.merchant, self.store_id)
    }
}

/// The distinct customers of one store.
///
/// Users are interned to dense integer ids and kept sorted, so set operations
/// are linear merges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustomerSet {
    pub store: StoreRef,
    users: Vec<u32>,
}

impl CustomerSet {
    pub fn new(store: StoreRef, users: impl IntoIterator<Item = u32>) -> Self {
        let mut users: Vec<u32> = users.into_iter().collect();
        users.sort_unstable();
        users.dedup();
        Self { store, users }
    }

    pub fn users(&self) -> &[u32] {
        &self.users
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn intersection_len(&self, other: &CustomerSet) -> usize {
        let (a, b) = (&self.users, &other.users);
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Output of [`build_customer_sets`].
#[derive(Debug, Clone, Default)]
pub struct CustomerSets {
    /// Admitted stores, sorted by store key.
    pub sets: Vec<CustomerSet>,
    /// Records rejected for empty fields.
    pub rejected: usize,
    /// Distinct stores seen before the `min_customers` floor was applied.
    pub stores_seen: usize,
}

/// Collapses purchase records into Boolean store membership.
///
/// Repeat purchases by the same user at the same store count once. Stores with
/// fewer than `min_customers` distinct users are dropped.
pub fn build_customer_sets<I>(records: I, min_customers: usize) -> CustomerSets
where
    I: IntoIterator<Item = TransactionRecord>,
{
    let mut user_ids: HashMap<String, u32> = HashMap::new();
    let mut members: BTreeMap<StoreRef, Vec<u32>> = BTreeMap::new();
    let mut rejected = 0;

    for rec in records {
        if rec.missing_field().is_some() {
            rejected += 1;
            continue;
        }
        let next = user_ids.len() as u32;
        let uid = *user_ids.entry(rec.user_id).or_insert(next);
        let store = StoreRef {
            merchant: rec.merchant,
            store_id: rec.store_id,
        };
        members.entry(store).or_default().push(uid);
    }

    let stores_seen = members.len();
    let sets = members
        .into_iter()
        .map(|(store, users)| CustomerSet::new(store, users))
        .filter(|s| !s.is_empty() && s.len() >= min_customers)
        .collect();

    CustomerSets {
        sets,
        rejected,
        stores_seen,
    }
}

/// Classic Jaccard index `|a ∩ b| / |a ∪ b|`.
pub fn jaccard(a: &CustomerSet, b: &CustomerSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        return 0.0;
    }
    inter as f64 / union as f64
}

/// Minimum-normalised sharing index `|a ∩ b| / min(|a|, |b|)`.
///
/// A small store whose customers all shop at a large one scores 1.
pub fn j_min(a: &CustomerSet, b: &CustomerSet) -> f64 {
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        return 0.0;
    }
    a.intersection_len(b) as f64 / smaller as f64
}

/// A store with a resolved planar location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnownStore {
    pub store: StoreRef,
    pub location: PlanarPoint,
}

/// Sharing index between two known stores, kept regardless of threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnownPair {
    pub a: usize,
    pub b: usize,
    pub m: f64,
}

/// A known store adjacent to some node in the graph.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjacent {
    /// Index into [`SharingGraph::known`].
    pub known: usize,
    pub m: f64,
}

/// Identifies a store in the graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Node {
    Known(usize),
    Unknown(usize),
}

/// Sparse customer-sharing graph between known and unknown stores.
///
/// Nodes are numbered with known stores first (`0..P`) and unknown stores
/// after (`P..P+Q`). `entries` holds every known–known and known–unknown pair
/// whose sharing index reaches `theta`, keyed `(lower, higher)`. All
/// known–known indices are additionally kept in `known_pairs` for density
/// estimation.
#[derive(Debug, Clone)]
pub struct SharingGraph {
    known: Vec<KnownStore>,
    unknown: Vec<StoreRef>,
    customers: Vec<usize>,
    entries: BTreeMap<(usize, usize), f64>,
    known_pairs: Vec<KnownPair>,
    adjacency: Vec<Vec<Adjacent>>,
    theta: f64,
}

pub fn validate_theta(theta: f64) -> Result<()> {
    // Values above 1 are admitted and simply leave the graph empty.
    if !theta.is_finite() || theta < 0.0 {
        return Err(Error::Config(format!(
            "theta must be a finite value >= 0, got {theta}"
        )));
    }
    Ok(())
}

/// Computes pairwise sharing and partitions stores into known and unknown.
///
/// `known_locations` keys must all name stores present in `sets`. The result
/// does not depend on the order of `sets`.
pub fn build_graph(
    sets: &[CustomerSet],
    known_locations: &BTreeMap<StoreRef, PlanarPoint>,
    theta: f64,
) -> Result<SharingGraph> {
    validate_theta(theta)?;

    let mut ordered: Vec<&CustomerSet> = sets.iter().collect();
    ordered.sort_by(|a, b| a.store.cmp(&b.store));
    ordered.dedup_by(|a, b| a.store == b.store);

    for store in known_locations.keys() {
        if ordered
            .binary_search_by(|s| s.store.cmp(store))
            .is_err()
        {
            return Err(Error::UnknownSeed(store.clone()));
        }
    }

    let (known_sets, unknown_sets): (Vec<&CustomerSet>, Vec<&CustomerSet>) = ordered
        .into_iter()
        .partition(|s| known_locations.contains_key(&s.store));

    let known: Vec<KnownStore> = known_sets
        .iter()
        .map(|s| KnownStore {
            store: s.store.clone(),
            location: known_locations[&s.store],
        })
        .collect();
    let unknown: Vec<StoreRef> = unknown_sets.iter().map(|s| s.store.clone()).collect();
    let p = known.len();
    let customers = known_sets
        .iter()
        .chain(unknown_sets.iter())
        .map(|s| s.len())
        .collect();

    let known_pairs: Vec<KnownPair> = (0..p)
        .into_par_iter()
        .flat_map_iter(|a| {
            let known_sets = &known_sets;
            (a + 1..p).map(move |b| KnownPair {
                a,
                b,
                m: j_min(known_sets[a], known_sets[b]),
            })
        })
        .collect();

    let cross: Vec<(usize, usize, f64)> = (0..p)
        .into_par_iter()
        .flat_map_iter(|a| {
            let known_sets = &known_sets;
            let unknown_sets = &unknown_sets;
            (0..unknown_sets.len()).filter_map(move |u| {
                let m = j_min(known_sets[a], unknown_sets[u]);
                (m >= theta).then_some((a, p + u, m))
            })
        })
        .collect();

    let mut entries = BTreeMap::new();
    for pair in &known_pairs {
        if pair.m >= theta {
            entries.insert((pair.a, pair.b), pair.m);
        }
    }
    for (a, node, m) in cross {
        entries.insert((a, node), m);
    }

    let mut adjacency = vec![Vec::new(); p + unknown.len()];
    for (&(a, b), &m) in &entries {
        adjacency[b].push(Adjacent { known: a, m });
        if b < p {
            adjacency[a].push(Adjacent { known: b, m });
        }
    }
    for list in &mut adjacency {
        list.sort_by_key(|adj| adj.known);
    }

    Ok(SharingGraph {
        known,
        unknown,
        customers,
        entries,
        known_pairs,
        adjacency,
        theta,
    })
}

impl SharingGraph {
    pub fn known(&self) -> &[KnownStore] {
        &self.known
    }

    pub fn unknown(&self) -> &[StoreRef] {
        &self.unknown
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Thresholded sparse entries keyed by node index pair.
    pub fn entries(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.entries
    }

    /// Every known–known sharing index, including those below threshold.
    pub fn known_pairs(&self) -> &[KnownPair] {
        &self.known_pairs
    }

    pub fn node_index(&self, node: Node) -> usize {
        match node {
            Node::Known(i) => i,
            Node::Unknown(j) => self.known.len() + j,
        }
    }

    pub fn store(&self, node: Node) -> &StoreRef {
        match node {
            Node::Known(i) => &self.known[i].store,
            Node::Unknown(j) => &self.unknown[j],
        }
    }

    /// Number of distinct customers of a store.
    pub fn customer_count(&self, node: Node) -> usize {
        self.customers[self.node_index(node)]
    }

    pub fn find(&self, store: &StoreRef) -> Option<Node> {
        if let Ok(i) = self.known.binary_search_by(|k| k.store.cmp(store)) {
            return Some(Node::Known(i));
        }
        self.unknown
            .binary_search(store)
            .ok()
            .map(Node::Unknown)
    }

    /// Known stores sharing at least `theta` with `node`, in known-index
    /// order. A known node never lists itself.
    pub fn neighbors(&self, node: Node) -> &[Adjacent] {
        &self.adjacency[self.node_index(node)]
    }

    /// Sharing index between two known stores, whether or not it passed the
    /// threshold.
    pub fn known_pair_m(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        let (a, b) = if a < b { (a, b) } else { (b, a) };
        let p = self.known.len();
        // row-major upper triangle without the diagonal
        let idx = a * (2 * p - a - 1) / 2 + (b - a - 1);
        self.known_pairs[idx].m
    }

    /// `(m, r)` observations over all known–known pairs.
    pub fn density_observations(&self) -> Vec<(f64, f64)> {
        self.known_pairs
            .iter()
            .map(|pair| {
                let r = dist(self.known[pair.a].location, self.known[pair.b].location);
                (pair.m, r)
            })
            .collect()
    }
}
