//! MovieLens loaders, k-core filtering and the per-user ("userfixed")
//! train/test split.
//!
//! Two on-disk layouts are understood:
//!
//! * MovieLens-1M: `ratings.dat` as `UserID::MovieID::Rating::Timestamp` and
//!   `users.dat` as `UserID::Gender::Age::Occupation::Zip-code`.
//! * MovieLens-100k: `u.data` as tab-separated `user item rating timestamp`
//!   and `u.user` as `user|age|gender|occupation|zip`.
//!
//! Lines are decoded one at a time, so stray non-UTF-8 bytes are reported as
//! a parse error on that line rather than aborting the whole read.

use std::collections::{BTreeSet, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{Group, GroupMap, Interaction, ItemId, RatingSet, UserId};
use crate::error::IngestError;
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetFormat {
    #[serde(rename = "ml-1m")]
    Ml1m,
    #[serde(rename = "ml-100k")]
    Ml100k,
}

impl DatasetFormat {
    pub fn ratings_file(self) -> &'static str {
        match self {
            DatasetFormat::Ml1m => "ratings.dat",
            DatasetFormat::Ml100k => "u.data",
        }
    }

    pub fn users_file(self) -> &'static str {
        match self {
            DatasetFormat::Ml1m => "users.dat",
            DatasetFormat::Ml100k => "u.user",
        }
    }
}

impl FromStr for DatasetFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ml-1m" => Ok(DatasetFormat::Ml1m),
            "ml-100k" => Ok(DatasetFormat::Ml100k),
            other => Err(format!("unknown dataset format {other:?} (expected ml-1m or ml-100k)")),
        }
    }
}

fn split_fields(line: &str, format: DatasetFormat, users_file: bool) -> Vec<&str> {
    match (format, users_file) {
        (DatasetFormat::Ml1m, _) => line.split("::").collect(),
        (DatasetFormat::Ml100k, false) => line.split('\t').collect(),
        (DatasetFormat::Ml100k, true) => line.split('|').collect(),
    }
}

/// Yields `(1-based line number, decoded line)` for every non-blank line.
fn for_each_line<R, F>(mut reader: R, mut f: F) -> Result<(), IngestError>
where
    R: BufRead,
    F: FnMut(usize, &str) -> Result<(), IngestError>,
{
    let mut buf = Vec::new();
    let mut lineno = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|source| IngestError::Io {
            path: Default::default(),
            source,
        })?;
        if n == 0 {
            return Ok(());
        }
        lineno += 1;
        let line = std::str::from_utf8(&buf)
            .map_err(|_| IngestError::parse(lineno, "line is not valid UTF-8"))?;
        let line = line.trim_end_matches(['\n', '\r']);
        if line.is_empty() {
            continue;
        }
        f(lineno, line)?;
    }
}

fn parse_field<T: FromStr>(line: usize, name: &str, raw: &str) -> Result<T, IngestError> {
    raw.trim()
        .parse()
        .map_err(|_| IngestError::parse(line, format!("bad {name} {raw:?}")))
}

/// Parse a ratings file already opened as a reader.
pub fn read_ratings<R: BufRead>(reader: R, format: DatasetFormat) -> Result<Vec<Interaction>, IngestError> {
    let mut out = Vec::new();
    for_each_line(reader, |lineno, line| {
        let fields = split_fields(line, format, false);
        if fields.len() != 4 {
            return Err(IngestError::parse(
                lineno,
                format!("expected 4 fields, found {}", fields.len()),
            ));
        }
        let user: u32 = parse_field(lineno, "user id", fields[0])?;
        let item: u32 = parse_field(lineno, "item id", fields[1])?;
        let rating: u8 = parse_field(lineno, "rating", fields[2])?;
        if !(1..=5).contains(&rating) {
            return Err(IngestError::parse(lineno, format!("rating {rating} outside 1..=5")));
        }
        let timestamp: i64 = parse_field(lineno, "timestamp", fields[3])?;
        out.push(Interaction::new(user, item, f64::from(rating), timestamp));
        Ok(())
    })?;
    Ok(out)
}

/// Parse a users file into a group map: women are the protected group.
pub fn read_users<R: BufRead>(reader: R, format: DatasetFormat) -> Result<GroupMap, IngestError> {
    let mut groups = GroupMap::new();
    for_each_line(reader, |lineno, line| {
        let fields = split_fields(line, format, true);
        if fields.len() != 5 {
            return Err(IngestError::parse(
                lineno,
                format!("expected 5 fields, found {}", fields.len()),
            ));
        }
        let user: u32 = parse_field(lineno, "user id", fields[0])?;
        let gender = match format {
            DatasetFormat::Ml1m => fields[1],
            DatasetFormat::Ml100k => fields[2],
        };
        let group = match gender.trim() {
            "F" => Group::Protected,
            "M" => Group::Unprotected,
            other => {
                return Err(IngestError::parse(lineno, format!("unknown gender token {other:?}")))
            }
        };
        if groups.insert(UserId(user), group).is_some() {
            return Err(IngestError::parse(lineno, format!("user {user} listed twice")));
        }
        Ok(())
    })?;
    Ok(groups)
}

fn open(path: &Path) -> Result<BufReader<File>, IngestError> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|source| IngestError::Io {
            path: path.to_path_buf(),
            source,
        })
}

fn with_path(err: IngestError, path: &Path) -> IngestError {
    match err {
        IngestError::Io { source, .. } => IngestError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    }
}

pub fn parse_ratings(path: &Path, format: DatasetFormat) -> Result<Vec<Interaction>, IngestError> {
    read_ratings(open(path)?, format).map_err(|e| with_path(e, path))
}

pub fn parse_users(path: &Path, format: DatasetFormat) -> Result<GroupMap, IngestError> {
    read_users(open(path)?, format).map_err(|e| with_path(e, path))
}

/// Largest subset in which every user and every item has at least `k`
/// ratings, found by repeated peeling. Input order is preserved.
pub fn k_core_filter(interactions: &[Interaction], k: usize) -> Vec<Interaction> {
    if k == 0 {
        return interactions.to_vec();
    }
    let mut alive = vec![true; interactions.len()];
    loop {
        let mut user_deg: HashMap<UserId, usize> = HashMap::new();
        let mut item_deg: HashMap<ItemId, usize> = HashMap::new();
        for (x, _) in interactions.iter().zip(&alive).filter(|(_, &a)| a) {
            *user_deg.entry(x.user).or_default() += 1;
            *item_deg.entry(x.item).or_default() += 1;
        }
        let mut changed = false;
        for (x, a) in interactions.iter().zip(alive.iter_mut()) {
            if *a && (user_deg[&x.user] < k || item_deg[&x.item] < k) {
                *a = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    interactions
        .iter()
        .zip(alive)
        .filter_map(|(x, a)| a.then_some(*x))
        .collect()
}

/// Side table from dense 0-based ids back to the ids found in the files.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    pub users: Vec<u32>,
    pub items: Vec<u32>,
}

impl IdMap {
    pub fn original_user(&self, u: UserId) -> u32 {
        self.users[u.index()]
    }

    pub fn original_item(&self, i: ItemId) -> u32 {
        self.items[i.index()]
    }
}

/// A filtered dataset with dense ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub ratings: RatingSet,
    pub groups: GroupMap,
    pub ids: IdMap,
}

impl Dataset {
    /// Remap raw interactions and groups onto dense ids (ascending original
    /// id order). Every rating user must have a group label.
    pub fn from_raw(interactions: &[Interaction], raw_groups: &GroupMap) -> Result<Self, IngestError> {
        let users: BTreeSet<u32> = interactions.iter().map(|x| x.user.0).collect();
        let items: BTreeSet<u32> = interactions.iter().map(|x| x.item.0).collect();
        let user_ix: HashMap<u32, u32> = users.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
        let item_ix: HashMap<u32, u32> = items.iter().enumerate().map(|(i, &v)| (v, i as u32)).collect();

        let mut ratings = RatingSet::with_shape(users.len(), items.len());
        for x in interactions {
            ratings.insert(Interaction::new(
                user_ix[&x.user.0],
                item_ix[&x.item.0],
                x.rating,
                x.timestamp,
            ))?;
        }
        let mut groups = GroupMap::new();
        for &u in &users {
            let g = raw_groups
                .get(UserId(u))
                .ok_or(crate::error::DataError::UnknownUser(UserId(u)))?;
            groups.insert(UserId(user_ix[&u]), g);
        }
        Ok(Self {
            ratings,
            groups,
            ids: IdMap {
                users: users.into_iter().collect(),
                items: items.into_iter().collect(),
            },
        })
    }

    pub fn n_users(&self) -> usize {
        self.ratings.n_users()
    }

    pub fn n_items(&self) -> usize {
        self.ratings.n_items()
    }

    pub fn density(&self) -> f64 {
        let cells = self.n_users() as f64 * self.n_items() as f64;
        if cells == 0.0 {
            0.0
        } else {
            self.ratings.len() as f64 / cells
        }
    }
}

/// Read both files of a MovieLens directory, k-core filter and remap.
pub fn load_dataset(dir: &Path, format: DatasetFormat, k_core: usize) -> Result<Dataset, IngestError> {
    let raw = parse_ratings(&dir.join(format.ratings_file()), format)?;
    let groups = parse_users(&dir.join(format.users_file()), format)?;
    let filtered = k_core_filter(&raw, k_core);
    Dataset::from_raw(&filtered, &groups)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub train_fraction: f64,
    pub k_core: usize,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            k_core: 5,
            seed: 0,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<(), IngestError> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(IngestError::InvalidConfig(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        Ok(())
    }

    /// `ceil(train_fraction * n)`, tolerant of representation error in the
    /// product (0.8 * 5 must give 4, not 5).
    pub fn train_count(&self, n: usize) -> usize {
        let exact = self.train_fraction * n as f64;
        let c = (exact - 1e-9).ceil().max(0.0) as usize;
        c.min(n)
    }
}

/// Per-user split keyed by the dense user id. See [`userfixed_split_keyed`].
pub fn userfixed_split(rs: &RatingSet, cfg: &SplitConfig) -> Result<(RatingSet, RatingSet), IngestError> {
    userfixed_split_keyed(rs, cfg, |u| u64::from(u.0))
}

/// For every user, `ceil(train_fraction * n_u)` ratings chosen uniformly at
/// random go to train and the rest to test.
///
/// The shuffle of user `u` draws from a stream keyed by `(seed, key(u))`.
/// Keying by the original file id keeps each user's split stable when other
/// users are added to or removed from the dataset.
pub fn userfixed_split_keyed<K>(
    rs: &RatingSet,
    cfg: &SplitConfig,
    key: K,
) -> Result<(RatingSet, RatingSet), IngestError>
where
    K: Fn(UserId) -> u64,
{
    cfg.validate()?;
    let mut train = rs.empty_like();
    let mut test = rs.empty_like();
    for user in rs.users() {
        let mut entries: Vec<Interaction> = rs.user_entries(user).collect();
        let n = entries.len();
        if n < 2 {
            return Err(IngestError::DegenerateUser { user, count: n });
        }
        let mut stream = rng::stream(&[rng::TAG_SPLIT, cfg.seed, key(user)]);
        entries.shuffle(&mut stream);
        let n_train = cfg.train_count(n);
        for (k, x) in entries.into_iter().enumerate() {
            if k < n_train {
                train.insert(x)?;
            } else {
                test.insert(x)?;
            }
        }
    }
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    fn ratings(text: &str, f: DatasetFormat) -> Result<Vec<Interaction>, IngestError> {
        read_ratings(Cursor::new(text.as_bytes()), f)
    }

    #[test]
    fn ml1m_rating_line() {
        let xs = ratings("1::1193::5::978300760\n", DatasetFormat::Ml1m).unwrap();
        assert_eq!(xs, vec![Interaction::new(1, 1193, 5.0, 978300760)]);
    }

    #[test]
    fn empty_file_gives_no_ratings() {
        assert!(ratings("", DatasetFormat::Ml1m).unwrap().is_empty());
    }

    #[test]
    fn bad_item_id_reports_line() {
        let err = ratings("1::abc::5::0", DatasetFormat::Ml1m).unwrap_err();
        assert_eq!(err.line(), Some(1));
        let err = ratings("1::2::5::0\n1::3::9::0\n", DatasetFormat::Ml1m).unwrap_err();
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn ml100k_rating_line_and_crlf() {
        let xs = ratings("196\t242\t3\t881250949\r\n", DatasetFormat::Ml100k).unwrap();
        assert_eq!(xs, vec![Interaction::new(196, 242, 3.0, 881250949)]);
    }

    #[test]
    fn non_utf8_line_is_a_parse_error() {
        let bytes: &[u8] = b"1::2::3::4\n1::\xff::3::4\n";
        let err = read_ratings(Cursor::new(bytes), DatasetFormat::Ml1m).unwrap_err();
        assert_eq!(err.line(), Some(2));
    }

    #[test]
    fn users_gender_mapping() {
        let g = read_users(
            Cursor::new("1::F::1::10::48067\n2::M::56::16::70072\n"),
            DatasetFormat::Ml1m,
        )
        .unwrap();
        assert_eq!(g.get(UserId(1)), Some(Group::Protected));
        assert_eq!(g.get(UserId(2)), Some(Group::Unprotected));

        let err = read_users(Cursor::new("3::X::1::1::00000\n"), DatasetFormat::Ml1m).unwrap_err();
        assert_eq!(err.line(), Some(1));

        let g = read_users(Cursor::new("2|53|F|other|94043\n"), DatasetFormat::Ml100k).unwrap();
        assert_eq!(g.get(UserId(2)), Some(Group::Protected));
    }

    #[test]
    fn k_core_zero_is_identity() {
        let xs = vec![Interaction::new(1, 1, 3.0, 0), Interaction::new(2, 7, 1.0, 0)];
        assert_eq!(k_core_filter(&xs, 0), xs);
    }

    #[test]
    fn k_core_chain_collapses() {
        // item 2 has one rating -> dropped; user 1 is then left with one
        // rating -> dropped; item 1 is left with one rating -> dropped.
        let xs = vec![
            Interaction::new(1, 1, 3.0, 0),
            Interaction::new(1, 2, 3.0, 0),
            Interaction::new(2, 1, 3.0, 0),
        ];
        assert!(k_core_filter(&xs, 2).is_empty());
    }

    #[test]
    fn split_counts_follow_ceiling_rule() {
        let mut rs = RatingSet::new();
        for i in 0..10 {
            rs.insert(Interaction::new(0, i, 3.0, 0)).unwrap();
        }
        for i in 0..5 {
            rs.insert(Interaction::new(1, i, 3.0, 0)).unwrap();
        }
        let cfg = SplitConfig::default();
        let (train, test) = userfixed_split(&rs, &cfg).unwrap();
        assert_eq!(train.user_degree(UserId(0)), 8);
        assert_eq!(test.user_degree(UserId(0)), 2);
        assert_eq!(train.user_degree(UserId(1)), 4);
        assert_eq!(test.user_degree(UserId(1)), 1);

        let (train2, test2) = userfixed_split(&rs, &cfg).unwrap();
        assert_eq!(train, train2);
        assert_eq!(test, test2);
    }

    #[test]
    fn split_rejects_singleton_user() {
        let rs = RatingSet::from_interactions([Interaction::new(4, 0, 3.0, 0)]).unwrap();
        assert!(matches!(
            userfixed_split(&rs, &SplitConfig::default()),
            Err(IngestError::DegenerateUser { count: 1, .. })
        ));
    }

    #[test]
    fn split_rejects_bad_fraction() {
        let rs = RatingSet::new();
        let cfg = SplitConfig {
            train_fraction: 1.0,
            ..Default::default()
        };
        assert!(matches!(
            userfixed_split(&rs, &cfg),
            Err(IngestError::InvalidConfig(_))
        ));
    }

    #[test]
    fn train_count_is_exact_ceiling() {
        let cfg = SplitConfig::default();
        let got: Vec<usize> = (1..=12).map(|n| cfg.train_count(n)).collect();
        assert_eq!(got, vec![1, 2, 3, 4, 4, 5, 6, 7, 8, 8, 9, 10]);
    }

    #[test]
    fn remap_is_dense_and_preserves_original_ids() {
        let raw = vec![
            Interaction::new(10, 500, 4.0, 1),
            Interaction::new(3, 700, 2.0, 2),
            Interaction::new(10, 700, 5.0, 3),
        ];
        let groups: GroupMap = [(UserId(3), Group::Protected), (UserId(10), Group::Unprotected)]
            .into_iter()
            .collect();
        let ds = Dataset::from_raw(&raw, &groups).unwrap();
        assert_eq!(ds.ids.users, vec![3, 10]);
        assert_eq!(ds.ids.items, vec![500, 700]);
        assert_eq!(ds.groups.get(UserId(0)), Some(Group::Protected));
        assert_eq!(ds.ratings.get(UserId(1), ItemId(0)).unwrap().rating, 4.0);
        assert!((ds.density() - 0.75).abs() < 1e-12);
    }
}
