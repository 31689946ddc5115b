//! Shared rating-data model: interactions, sparse rating sets, group labels
//! and per-user candidate pools.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::error::DataError;

/// Opaque user identifier. Dense and 0-based once a dataset has been remapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct UserId(pub u32);

/// Opaque item identifier. Dense and 0-based once a dataset has been remapped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ItemId(pub u32);

impl UserId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ItemId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "u{}", self.0)
    }
}

impl fmt::Display for ItemId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "i{}", self.0)
    }
}

/// A single explicit rating event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: UserId,
    pub item: ItemId,
    pub rating: f64,
    /// Seconds since the epoch. Carried along for provenance, never read by
    /// the simulator.
    pub timestamp: i64,
}

impl Interaction {
    pub fn new(user: u32, item: u32, rating: f64, timestamp: i64) -> Self {
        Self {
            user: UserId(user),
            item: ItemId(item),
            rating,
            timestamp,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    rating: f64,
    timestamp: i64,
}

/// Sparse user x item rating collection with at most one entry per pair.
///
/// Entries are indexed by user (ordered by item) and by item (set of users),
/// so per-user and per-item lookups cost O(degree). Iteration is always in
/// ascending `(user, item)` order, which the trainer and the evaluators rely
/// on for reproducible traversal.
///
/// The set also carries a shape `(n_users, n_items)` that grows to cover any
/// inserted id. Models fitted on a rating set size their parameter tables
/// from this shape, so subsets of one dataset should share the parent shape.
#[derive(Debug, Clone, Default)]
pub struct RatingSet {
    by_user: Vec<BTreeMap<ItemId, Entry>>,
    by_item: Vec<BTreeSet<UserId>>,
    len: usize,
}

impl PartialEq for RatingSet {
    /// Extensional equality: same entries, shape ignored.
    fn eq(&self, other: &Self) -> bool {
        self.len == other.len && self.iter().eq(other.iter())
    }
}

impl RatingSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_shape(n_users: usize, n_items: usize) -> Self {
        Self {
            by_user: vec![BTreeMap::new(); n_users],
            by_item: vec![BTreeSet::new(); n_items],
            len: 0,
        }
    }

    /// Empty set with the same shape as `self`.
    pub fn empty_like(&self) -> Self {
        Self::with_shape(self.n_users(), self.n_items())
    }

    pub fn from_interactions<I>(items: I) -> Result<Self, DataError>
    where
        I: IntoIterator<Item = Interaction>,
    {
        let mut rs = Self::new();
        for x in items {
            rs.insert(x)?;
        }
        Ok(rs)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn n_users(&self) -> usize {
        self.by_user.len()
    }

    pub fn n_items(&self) -> usize {
        self.by_item.len()
    }

    fn ensure_shape(&mut self, user: UserId, item: ItemId) {
        if user.index() >= self.by_user.len() {
            self.by_user.resize_with(user.index() + 1, BTreeMap::new);
        }
        if item.index() >= self.by_item.len() {
            self.by_item.resize_with(item.index() + 1, BTreeSet::new);
        }
    }

    pub fn insert(&mut self, x: Interaction) -> Result<(), DataError> {
        self.ensure_shape(x.user, x.item);
        let row = &mut self.by_user[x.user.index()];
        if row.contains_key(&x.item) {
            return Err(DataError::DuplicateEntry {
                user: x.user,
                item: x.item,
            });
        }
        row.insert(
            x.item,
            Entry {
                rating: x.rating,
                timestamp: x.timestamp,
            },
        );
        self.by_item[x.item.index()].insert(x.user);
        self.len += 1;
        Ok(())
    }

    pub fn remove(&mut self, user: UserId, item: ItemId) -> Result<Interaction, DataError> {
        let entry = self
            .by_user
            .get_mut(user.index())
            .and_then(|row| row.remove(&item))
            .ok_or(DataError::NotFound { user, item })?;
        self.by_item[item.index()].remove(&user);
        self.len -= 1;
        Ok(Interaction {
            user,
            item,
            rating: entry.rating,
            timestamp: entry.timestamp,
        })
    }

    pub fn get(&self, user: UserId, item: ItemId) -> Option<Interaction> {
        self.by_user
            .get(user.index())
            .and_then(|row| row.get(&item))
            .map(|e| Interaction {
                user,
                item,
                rating: e.rating,
                timestamp: e.timestamp,
            })
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.by_user
            .get(user.index())
            .is_some_and(|row| row.contains_key(&item))
    }

    /// Entries of one user, ascending by item.
    pub fn user_entries(&self, user: UserId) -> impl Iterator<Item = Interaction> + '_ {
        self.by_user
            .get(user.index())
            .into_iter()
            .flat_map(move |row| {
                row.iter().map(move |(&item, e)| Interaction {
                    user,
                    item,
                    rating: e.rating,
                    timestamp: e.timestamp,
                })
            })
    }

    pub fn user_items(&self, user: UserId) -> impl Iterator<Item = ItemId> + '_ {
        self.by_user
            .get(user.index())
            .into_iter()
            .flat_map(|row| row.keys().copied())
    }

    pub fn user_degree(&self, user: UserId) -> usize {
        self.by_user.get(user.index()).map_or(0, BTreeMap::len)
    }

    /// Users that rated `item`, ascending.
    pub fn item_users(&self, item: ItemId) -> impl Iterator<Item = UserId> + '_ {
        self.by_item
            .get(item.index())
            .into_iter()
            .flat_map(|s| s.iter().copied())
    }

    /// Entries of one item, ascending by user.
    pub fn item_entries(&self, item: ItemId) -> impl Iterator<Item = Interaction> + '_ {
        self.item_users(item).map(move |u| {
            self.get(u, item)
                .expect("item index out of sync with user index")
        })
    }

    pub fn item_degree(&self, item: ItemId) -> usize {
        self.by_item.get(item.index()).map_or(0, BTreeSet::len)
    }

    /// All entries in ascending `(user, item)` order.
    pub fn iter(&self) -> impl Iterator<Item = Interaction> + '_ {
        self.by_user.iter().enumerate().flat_map(|(u, row)| {
            let user = UserId(u as u32);
            row.iter().map(move |(&item, e)| Interaction {
                user,
                item,
                rating: e.rating,
                timestamp: e.timestamp,
            })
        })
    }

    /// Users with at least one entry, ascending.
    pub fn users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.by_user
            .iter()
            .enumerate()
            .filter(|(_, row)| !row.is_empty())
            .map(|(u, _)| UserId(u as u32))
    }

    /// Items with at least one entry, ascending.
    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.by_item
            .iter()
            .enumerate()
            .filter(|(_, s)| !s.is_empty())
            .map(|(i, _)| ItemId(i as u32))
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.is_empty() {
            return None;
        }
        Some(self.iter().map(|x| x.rating).sum::<f64>() / self.len as f64)
    }

    /// Split into (protected, unprotected) parts according to `groups`.
    pub fn group_partition(&self, groups: &GroupMap) -> Result<(RatingSet, RatingSet), DataError> {
        let mut protected = self.empty_like();
        let mut unprotected = self.empty_like();
        for x in self.iter() {
            let target = match groups.get(x.user) {
                Some(Group::Protected) => &mut protected,
                Some(Group::Unprotected) => &mut unprotected,
                None => return Err(DataError::UnknownUser(x.user)),
            };
            target.insert(x)?;
        }
        Ok((protected, unprotected))
    }
}

impl<'a> IntoIterator for &'a RatingSet {
    type Item = Interaction;
    type IntoIter = Box<dyn Iterator<Item = Interaction> + 'a>;

    fn into_iter(self) -> Self::IntoIter {
        Box::new(self.iter())
    }
}

/// Demographic group label under fairness analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Group {
    Protected,
    Unprotected,
}

/// Total mapping from user to group.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroupMap {
    map: BTreeMap<UserId, Group>,
}

impl GroupMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, user: UserId, group: Group) -> Option<Group> {
        self.map.insert(user, group)
    }

    pub fn get(&self, user: UserId) -> Option<Group> {
        self.map.get(&user).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (UserId, Group)> + '_ {
        self.map.iter().map(|(&u, &g)| (u, g))
    }

    pub fn count(&self, group: Group) -> usize {
        self.map.values().filter(|&&g| g == group).count()
    }

    /// Fails with `UnknownUser` for the first user of `rs` lacking a label.
    pub fn check_covers(&self, rs: &RatingSet) -> Result<(), DataError> {
        match rs.users().find(|u| !self.map.contains_key(u)) {
            Some(u) => Err(DataError::UnknownUser(u)),
            None => Ok(()),
        }
    }
}

impl FromIterator<(UserId, Group)> for GroupMap {
    fn from_iter<T: IntoIterator<Item = (UserId, Group)>>(iter: T) -> Self {
        Self {
            map: iter.into_iter().collect(),
        }
    }
}

/// Per-user sets of items not yet queried (`I_u`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CandidatePool {
    pools: Vec<BTreeSet<ItemId>>,
}

impl CandidatePool {
    /// `I_u = all_items \ items(K_u)` for every user in `0..n_users`.
    pub fn init(known: &RatingSet, n_users: usize, all_items: &BTreeSet<ItemId>) -> Self {
        let pools = (0..n_users)
            .map(|u| {
                let mut pool = all_items.clone();
                for item in known.user_items(UserId(u as u32)) {
                    pool.remove(&item);
                }
                pool
            })
            .collect();
        Self { pools }
    }

    pub fn n_users(&self) -> usize {
        self.pools.len()
    }

    pub fn get(&self, user: UserId) -> &BTreeSet<ItemId> {
        &self.pools[user.index()]
    }

    pub fn contains(&self, user: UserId, item: ItemId) -> bool {
        self.pools
            .get(user.index())
            .is_some_and(|p| p.contains(&item))
    }

    pub fn remove(&mut self, user: UserId, item: ItemId) -> bool {
        self.pools[user.index()].remove(&item)
    }

    /// Put a previously queried item back. Only the equal-ratio filter does this.
    pub fn restore(&mut self, user: UserId, item: ItemId) -> bool {
        self.pools[user.index()].insert(item)
    }

    pub fn is_exhausted(&self) -> bool {
        self.pools.iter().all(BTreeSet::is_empty)
    }

    pub fn total_len(&self) -> usize {
        self.pools.iter().map(BTreeSet::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.pools.iter().map(BTreeSet::len).collect()
    }

    /// Users with a non-empty pool, ascending.
    pub fn active_users(&self) -> impl Iterator<Item = UserId> + '_ {
        self.pools
            .iter()
            .enumerate()
            .filter(|(_, p)| !p.is_empty())
            .map(|(u, _)| UserId(u as u32))
    }
}
