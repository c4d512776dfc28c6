//! Network topology, user sets and validated instances.
//!
//! Users are addressed as `(u, v)` pairs, both 1-based: `u` is the cluster
//! (equivalently the relay) and `v` the position inside that cluster. Inside
//! the crate every user also has a dense global index in `0..K`, ordered by
//! `(u, v)`, which is what [`UserSet`] bitmasks are built on.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest number of users a [`UserSet`] can hold.
pub const MAX_USERS: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("malformed instance document: {0}")]
    Malformed(String),
    #[error("at least 2 clusters are required, got {0}")]
    TooFewClusters(usize),
    #[error("cluster {0} is empty")]
    EmptyCluster(usize),
    #[error("topology has {0} users, more than the supported {MAX_USERS}")]
    TooManyUsers(usize),
    #[error("user ({0},{1}) does not exist in this topology")]
    UnknownUser(usize, usize),
    #[error("user index {0} is outside the topology")]
    IndexOutOfRange(usize),
    #[error("user ({0},{1}) is listed twice in one set")]
    RepeatedMember(usize, usize),
    #[error("{family} family lists the same set twice: {set}")]
    DuplicateSet { family: &'static str, set: String },
    #[error("{family} family is not monotone: subset {missing} of a member is absent")]
    NotMonotone {
        family: &'static str,
        missing: String,
    },
}

/// A user `(u, v)`, both indices 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct UserId {
    pub u: usize,
    pub v: usize,
}

impl UserId {
    pub fn new(u: usize, v: usize) -> Self {
        UserId { u, v }
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.u, self.v)
    }
}

/// Subset of the users of a topology, stored as a bitmask over global indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct UserSet(u64);

impl UserSet {
    pub const EMPTY: UserSet = UserSet(0);

    pub fn from_bits(bits: u64) -> Self {
        UserSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(index: usize) -> Self {
        UserSet(1 << index)
    }

    pub fn from_indices<I: IntoIterator<Item = usize>>(indices: I) -> Self {
        UserSet(indices.into_iter().fold(0, |acc, i| acc | (1 << i)))
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn contains(self, index: usize) -> bool {
        self.0 >> index & 1 == 1
    }

    pub fn insert(&mut self, index: usize) {
        self.0 |= 1 << index;
    }

    pub fn union(self, other: UserSet) -> UserSet {
        UserSet(self.0 | other.0)
    }

    pub fn intersection(self, other: UserSet) -> UserSet {
        UserSet(self.0 & other.0)
    }

    pub fn difference(self, other: UserSet) -> UserSet {
        UserSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: UserSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_disjoint(self, other: UserSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Member indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }

    /// Every subset, including the empty set and the set itself.
    pub fn subsets(self) -> impl Iterator<Item = UserSet> {
        let full = self.0;
        let mut next = Some(full);
        std::iter::from_fn(move || {
            let cur = next?;
            next = if cur == 0 {
                None
            } else {
                Some((cur - 1) & full)
            };
            Some(UserSet(cur))
        })
    }

    pub fn display(self, topo: &Topology) -> String {
        let members: Vec<String> = self.iter().map(|i| topo.user(i).to_string()).collect();
        format!("{{{}}}", members.join(","))
    }
}

/// Canonical order: by size, then lexicographically by sorted member list.
impl Ord for UserSet {
    fn cmp(&self, other: &Self) -> Ordering {
        self.len()
            .cmp(&other.len())
            .then_with(|| self.iter().cmp(other.iter()))
    }
}

impl PartialOrd for UserSet {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Subset of relays `[U]`, as a bitmask over 0-based relay indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct RelaySet(u64);

impl RelaySet {
    pub fn insert(&mut self, relay: usize) {
        self.0 |= 1 << relay;
    }

    pub fn contains(self, relay: usize) -> bool {
        self.0 >> relay & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// 0-based relay indices in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        UserSet(self.0).iter()
    }
}

impl fmt::Display for RelaySet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let members: Vec<String> = self.iter().map(|r| (r + 1).to_string()).collect();
        write!(f, "{{{}}}", members.join(","))
    }
}

/// Cluster sizes `V_1, ..., V_U` and the induced user indexing.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Topology {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Topology {
    pub fn new(sizes: Vec<usize>) -> Result<Self, ModelError> {
        if sizes.len() < 2 {
            return Err(ModelError::TooFewClusters(sizes.len()));
        }
        if let Some(u) = sizes.iter().position(|&v| v == 0) {
            return Err(ModelError::EmptyCluster(u + 1));
        }
        let total: usize = sizes.iter().sum();
        if total > MAX_USERS {
            return Err(ModelError::TooManyUsers(total));
        }
        let offsets = sizes
            .iter()
            .scan(0, |acc, &v| {
                let start = *acc;
                *acc += v;
                Some(start)
            })
            .collect();
        Ok(Topology { sizes, offsets })
    }

    /// `U`.
    pub fn num_clusters(&self) -> usize {
        self.sizes.len()
    }

    /// `K`.
    pub fn num_users(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Global index of a 1-based user id, if it exists.
    pub fn index_of(&self, id: UserId) -> Option<usize> {
        if id.u == 0 || id.u > self.sizes.len() || id.v == 0 || id.v > self.sizes[id.u - 1] {
            return None;
        }
        Some(self.offsets[id.u - 1] + id.v - 1)
    }

    pub fn user(&self, index: usize) -> UserId {
        let c = self.offsets.partition_point(|&o| o <= index) - 1;
        UserId::new(c + 1, index - self.offsets[c] + 1)
    }

    /// 0-based cluster of a global user index.
    pub fn cluster_of(&self, index: usize) -> usize {
        self.offsets.partition_point(|&o| o <= index) - 1
    }

    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        (0..self.num_users()).map(|i| self.user(i))
    }

    /// `K_u` for a 0-based cluster index.
    pub fn cluster(&self, c: usize) -> UserSet {
        UserSet::from_indices(self.offsets[c]..self.offsets[c] + self.sizes[c])
    }

    /// `K_U` for a set of relays.
    pub fn clusters(&self, relays: RelaySet) -> UserSet {
        relays
            .iter()
            .fold(UserSet::EMPTY, |acc, c| acc.union(self.cluster(c)))
    }

    pub fn all_users(&self) -> UserSet {
        UserSet::from_indices(0..self.num_users())
    }
}

/// Downward closure of a family, deduplicated and in canonical order. Always
/// contains the empty set.
pub fn monotone_close(family: &[UserSet]) -> Vec<UserSet> {
    let mut closed: BTreeSet<UserSet> = BTreeSet::new();
    closed.insert(UserSet::EMPTY);
    for set in family {
        if closed.contains(set) {
            continue;
        }
        closed.extend(set.subsets());
    }
    closed.into_iter().collect()
}

/// True iff the family (as a set of sets) equals its own downward closure.
pub fn is_monotone(family: &[UserSet]) -> bool {
    first_missing_subset(family).is_none()
}

fn first_missing_subset(family: &[UserSet]) -> Option<UserSet> {
    let members: BTreeSet<UserSet> = family.iter().copied().collect();
    if !members.contains(&UserSet::EMPTY) {
        return Some(UserSet::EMPTY);
    }
    members
        .iter()
        .flat_map(|s| s.subsets())
        .find(|sub| !members.contains(sub))
}

/// A validated instance: topology plus monotone security and collusion families,
/// both stored in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Instance {
    topology: Topology,
    security_sets: Vec<UserSet>,
    collusion_sets: Vec<UserSet>,
    auto_close: bool,
}

impl Instance {
    pub fn new(
        topology: Topology,
        security_sets: Vec<UserSet>,
        collusion_sets: Vec<UserSet>,
        auto_close: bool,
    ) -> Result<Self, ModelError> {
        let all = topology.all_users();
        for set in security_sets.iter().chain(&collusion_sets) {
            if let Some(i) = set.difference(all).iter().next() {
                return Err(ModelError::IndexOutOfRange(i));
            }
        }
        let prepare = |family: Vec<UserSet>, name: &'static str| {
            if auto_close {
                return Ok(monotone_close(&family));
            }
            let mut seen = BTreeSet::new();
            for set in &family {
                if !seen.insert(*set) {
                    return Err(ModelError::DuplicateSet {
                        family: name,
                        set: set.display(&topology),
                    });
                }
            }
            if let Some(missing) = first_missing_subset(&family) {
                return Err(ModelError::NotMonotone {
                    family: name,
                    missing: missing.display(&topology),
                });
            }
            Ok(seen.into_iter().collect())
        };
        let security_sets = prepare(security_sets, "security")?;
        let collusion_sets = prepare(collusion_sets, "collusion")?;
        Ok(Instance {
            topology,
            security_sets,
            collusion_sets,
            auto_close,
        })
    }

    /// Convenience constructor from 1-based `(u, v)` pairs.
    pub fn from_pairs(
        cluster_sizes: Vec<usize>,
        security_sets: &[Vec<(usize, usize)>],
        collusion_sets: &[Vec<(usize, usize)>],
        auto_close: bool,
    ) -> Result<Self, ModelError> {
        let topology = Topology::new(cluster_sizes)?;
        let security = security_sets
            .iter()
            .map(|s| user_set_from_pairs(&topology, s.iter().copied()))
            .collect::<Result<_, _>>()?;
        let collusion = collusion_sets
            .iter()
            .map(|s| user_set_from_pairs(&topology, s.iter().copied()))
            .collect::<Result<_, _>>()?;
        Instance::new(topology, security, collusion, auto_close)
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    /// `S_1, ..., S_M` in canonical order.
    pub fn security_sets(&self) -> &[UserSet] {
        &self.security_sets
    }

    /// `T_1, ..., T_N` in canonical order.
    pub fn collusion_sets(&self) -> &[UserSet] {
        &self.collusion_sets
    }

    pub fn auto_close(&self) -> bool {
        self.auto_close
    }

    pub fn num_users(&self) -> usize {
        self.topology.num_users()
    }

    pub fn num_clusters(&self) -> usize {
        self.topology.num_clusters()
    }

    /// `∪_m S_m`.
    pub fn explicit_security_union(&self) -> UserSet {
        self.security_sets
            .iter()
            .fold(UserSet::EMPTY, |acc, s| acc.union(*s))
    }

    /// Parse and validate the JSON instance format.
    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        Instance::from_json_with(text, None)
    }

    /// [`Instance::from_json`] with the document's `auto_close` flag optionally overridden.
    pub fn from_json_with(text: &str, auto_close: Option<bool>) -> Result<Self, ModelError> {
        let doc: InstanceDoc =
            serde_json::from_str(text).map_err(|e| ModelError::Malformed(e.to_string()))?;
        let topology = Topology::new(doc.clusters)?;
        let convert = |sets: Vec<Vec<[usize; 2]>>| -> Result<Vec<UserSet>, ModelError> {
            sets.into_iter()
                .map(|s| user_set_from_pairs(&topology, s.into_iter().map(|[u, v]| (u, v))))
                .collect()
        };
        let security = convert(doc.security_sets)?;
        let collusion = convert(doc.collusion_sets)?;
        Instance::new(
            topology,
            security,
            collusion,
            auto_close.unwrap_or(doc.auto_close),
        )
    }

    /// Canonical serialization; reloading it yields an identical instance.
    pub fn to_json(&self) -> String {
        let write_family = |family: &[UserSet]| -> String {
            let lines: Vec<String> = family
                .iter()
                .map(|s| {
                    let pairs: Vec<String> = s
                        .iter()
                        .map(|i| {
                            let id = self.topology.user(i);
                            format!("[{}, {}]", id.u, id.v)
                        })
                        .collect();
                    format!("    [{}]", pairs.join(", "))
                })
                .collect();
            if lines.is_empty() {
                "[]".to_string()
            } else {
                format!("[\n{}\n  ]", lines.join(",\n"))
            }
        };
        let sizes: Vec<String> = self.topology.sizes.iter().map(|v| v.to_string()).collect();
        format!(
            "{{\n  \"clusters\": [{}],\n  \"auto_close\": {},\n  \"security_sets\": {},\n  \"collusion_sets\": {}\n}}\n",
            sizes.join(", "),
            self.auto_close,
            write_family(&self.security_sets),
            write_family(&self.collusion_sets),
        )
    }
}

fn user_set_from_pairs<I: IntoIterator<Item = (usize, usize)>>(
    topo: &Topology,
    pairs: I,
) -> Result<UserSet, ModelError> {
    let mut set = UserSet::EMPTY;
    for (u, v) in pairs {
        let i = topo
            .index_of(UserId::new(u, v))
            .ok_or(ModelError::UnknownUser(u, v))?;
        if set.contains(i) {
            return Err(ModelError::RepeatedMember(u, v));
        }
        set.insert(i);
    }
    Ok(set)
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    clusters: Vec<usize>,
    security_sets: Vec<Vec<[usize; 2]>>,
    collusion_sets: Vec<Vec<[usize; 2]>>,
    #[serde(default = "default_true")]
    auto_close: bool,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn pairs(topo: &Topology, p: &[(usize, usize)]) -> UserSet {
        user_set_from_pairs(topo, p.iter().copied()).unwrap()
    }

    #[test]
    fn loads_example_one() {
        let inst = fixtures::example_one();
        assert_eq!(inst.security_sets().len(), 6);
        assert_eq!(inst.collusion_sets().len(), 8);
        assert_eq!(inst.num_users(), 6);
    }

    #[test]
    fn empty_families_are_valid() {
        let inst = Instance::from_pairs(vec![1, 1], &[vec![]], &[vec![]], true).unwrap();
        assert_eq!(inst.security_sets(), &[UserSet::EMPTY]);
        assert_eq!(inst.collusion_sets(), &[UserSet::EMPTY]);
    }

    #[test]
    fn auto_close_expands_single_pair() {
        let inst =
            Instance::from_pairs(vec![1, 1], &[vec![(1, 1), (2, 1)]], &[vec![]], true).unwrap();
        let t = inst.topology();
        assert_eq!(
            inst.security_sets(),
            &[
                UserSet::EMPTY,
                pairs(t, &[(1, 1)]),
                pairs(t, &[(2, 1)]),
                pairs(t, &[(1, 1), (2, 1)])
            ]
        );
    }

    #[test]
    fn closure_of_pair_and_empty() {
        let a = UserSet::singleton(0);
        let b = UserSet::singleton(3);
        let ab = a.union(b);
        assert_eq!(monotone_close(&[ab]), vec![UserSet::EMPTY, a, b, ab]);
        assert_eq!(monotone_close(&[UserSet::EMPTY]), vec![UserSet::EMPTY]);
        assert!(!is_monotone(&[ab]));
        assert!(is_monotone(&[UserSet::EMPTY]));
    }

    #[test]
    fn example_one_families_are_already_closed() {
        // brute force: every subset of every listed set is listed
        let inst = fixtures::example_one();
        for family in [inst.security_sets(), inst.collusion_sets()] {
            for s in family {
                for bits in 0..=s.bits() {
                    let sub = UserSet::from_bits(bits);
                    if sub.is_subset(*s) {
                        assert!(family.contains(&sub));
                    }
                }
            }
            assert_eq!(monotone_close(family), family.to_vec());
            assert!(is_monotone(family));
        }
    }

    #[test]
    fn rejects_bad_documents() {
        assert!(matches!(
            Instance::from_json("{\"clusters\": [2]"),
            Err(ModelError::Malformed(_))
        ));
        assert_eq!(
            Instance::from_json(
                r#"{"clusters": [2], "security_sets": [[]], "collusion_sets": [[]]}"#
            ),
            Err(ModelError::TooFewClusters(1))
        );
        assert_eq!(
            Instance::from_json(
                r#"{"clusters": [1, 1], "security_sets": [[[3, 1]]], "collusion_sets": [[]]}"#
            ),
            Err(ModelError::UnknownUser(3, 1))
        );
        assert_eq!(
            Instance::from_json(
                r#"{"clusters": [1, 2], "security_sets": [[[2, 3]]], "collusion_sets": [[]]}"#
            ),
            Err(ModelError::UnknownUser(2, 3))
        );
    }

    #[test]
    fn duplicates_only_rejected_without_closure() {
        let doc = |close: bool| {
            format!(
                r#"{{"clusters": [1, 1], "auto_close": {close},
                    "security_sets": [[], [[1, 1]], [[1, 1]]], "collusion_sets": [[]]}}"#
            )
        };
        assert!(Instance::from_json(&doc(true)).is_ok());
        assert!(matches!(
            Instance::from_json(&doc(false)),
            Err(ModelError::DuplicateSet { .. })
        ));
    }

    #[test]
    fn non_monotone_rejected_without_closure() {
        let err = Instance::from_pairs(vec![1, 1], &[vec![(1, 1), (2, 1)]], &[vec![]], false)
            .unwrap_err();
        assert!(matches!(
            err,
            ModelError::NotMonotone {
                family: "security",
                ..
            }
        ));
    }

    #[test]
    fn json_round_trip_is_canonical() {
        let inst = fixtures::example_two();
        let text = inst.to_json();
        let back = Instance::from_json(&text).unwrap();
        assert_eq!(back, inst);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn user_indexing() {
        let t = Topology::new(vec![2, 3]).unwrap();
        assert_eq!(t.index_of(UserId::new(2, 1)), Some(2));
        assert_eq!(t.user(4), UserId::new(2, 3));
        assert_eq!(t.cluster_of(1), 0);
        assert_eq!(t.cluster(1), UserSet::from_indices([2, 3, 4]));
        assert_eq!(t.index_of(UserId::new(0, 1)), None);
    }
}
