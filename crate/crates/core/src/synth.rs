//! Small synthetic rating worlds with a low-rank structure and two groups.
//!
//! Used by the test suites and for smoke runs when no MovieLens copy is at
//! hand. Ratings are `3 + b_u + b_i + p_u . q_i + noise`, rounded and clipped
//! to 1..=5. Item exposure follows a power law so popularity-based
//! strategies have something to find.

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::data::{Group, GroupMap, Interaction, UserId};
use crate::error::IngestError;
use crate::ingest::{self, Dataset, DatasetFormat, SplitConfig};
use crate::rng;
use crate::simulation::World;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub rank: usize,
    pub min_ratings_per_user: usize,
    pub max_ratings_per_user: usize,
    pub protected_fraction: f64,
    /// Rating noise std. dev. per group. A noisier group is harder to fit.
    pub protected_noise: f64,
    pub unprotected_noise: f64,
    /// Exponent of the item exposure power law.
    pub popularity_skew: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 60,
            n_items: 40,
            rank: 3,
            min_ratings_per_user: 8,
            max_ratings_per_user: 20,
            protected_fraction: 0.3,
            protected_noise: 0.6,
            unprotected_noise: 0.3,
            popularity_skew: 0.8,
            seed: 0,
        }
    }
}

/// Raw interactions (1-based ids, as in MovieLens files) and group labels.
pub fn generate(spec: &SyntheticSpec) -> (Vec<Interaction>, GroupMap) {
    let mut r = rng::stream(&[rng::TAG_SYNTH, spec.seed]);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let factor_scale = 1.0 / (spec.rank.max(1) as f64).sqrt();

    let latent = |n: usize, r: &mut rand_chacha::ChaCha8Rng| -> Vec<(f64, Vec<f64>)> {
        (0..n)
            .map(|_| {
                let bias = 0.4 * std_normal.sample(r);
                let f = (0..spec.rank).map(|_| factor_scale * std_normal.sample(r)).collect();
                (bias, f)
            })
            .collect()
    };
    let users = latent(spec.n_users, &mut r);
    let items = latent(spec.n_items, &mut r);

    let mut groups = GroupMap::new();
    let mut out = Vec::new();
    let mut ts = 0i64;
    let max_deg = spec.max_ratings_per_user.min(spec.n_items);
    let min_deg = spec.min_ratings_per_user.min(max_deg);
    for (u, (bu, pu)) in users.iter().enumerate() {
        let group = if r.random::<f64>() < spec.protected_fraction {
            Group::Protected
        } else {
            Group::Unprotected
        };
        groups.insert(UserId(u as u32 + 1), group);
        let noise = match group {
            Group::Protected => spec.protected_noise,
            Group::Unprotected => spec.unprotected_noise,
        };
        let deg = r.random_range(min_deg..=max_deg);
        let picked = index::sample_weighted(
            &mut r,
            spec.n_items,
            |i| (1.0 + i as f64).powf(-spec.popularity_skew),
            deg,
        )
        .expect("positive weights");
        let mut picked = picked.into_vec();
        picked.sort_unstable();
        for i in picked {
            let (bi, qi) = &items[i];
            let dot: f64 = pu.iter().zip(qi).map(|(a, b)| a * b).sum();
            let raw = 3.0 + bu + bi + 1.5 * dot + noise * std_normal.sample(&mut r);
            let rating = raw.round().clamp(1.0, 5.0);
            ts += 1;
            out.push(Interaction::new(u as u32 + 1, i as u32 + 1, rating, ts));
        }
    }
    (out, groups)
}

/// Generate, k-core filter, remap and split into a simulation world.
pub fn world(spec: &SyntheticSpec, split: &SplitConfig) -> Result<World, IngestError> {
    let (raw, groups) = generate(spec);
    let filtered = ingest::k_core_filter(&raw, split.k_core);
    let ds = Dataset::from_raw(&filtered, &groups)?;
    world_from_dataset(&ds, split)
}

/// Split a dataset, keying each user's shuffle by the original id.
pub fn world_from_dataset(ds: &Dataset, split: &SplitConfig) -> Result<World, IngestError> {
    let (train, test) = ingest::userfixed_split_keyed(&ds.ratings, split, |u| u64::from(ds.ids.original_user(u)))?;
    Ok(World {
        train,
        test,
        groups: ds.groups.clone(),
    })
}

/// Write interactions and groups in one of the MovieLens layouts. Age,
/// occupation and zip code are filled with placeholders.
pub fn write_movielens(dir: &Path, format: DatasetFormat, ratings: &[Interaction], groups: &GroupMap) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut rf = io::BufWriter::new(fs::File::create(dir.join(format.ratings_file()))?);
    for x in ratings {
        match format {
            DatasetFormat::Ml1m => writeln!(rf, "{}::{}::{}::{}", x.user.0, x.item.0, x.rating, x.timestamp)?,
            DatasetFormat::Ml100k => writeln!(rf, "{}\t{}\t{}\t{}", x.user.0, x.item.0, x.rating, x.timestamp)?,
        }
    }
    rf.flush()?;
    let mut uf = io::BufWriter::new(fs::File::create(dir.join(format.users_file()))?);
    for (u, g) in groups.iter() {
        let token = match g {
            Group::Protected => "F",
            Group::Unprotected => "M",
        };
        match format {
            DatasetFormat::Ml1m => writeln!(uf, "{}::{token}::25::0::00000", u.0)?,
            DatasetFormat::Ml100k => writeln!(uf, "{}|25|{token}|other|00000", u.0)?,
        }
    }
    uf.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_range() {
        let spec = SyntheticSpec::default();
        let (a, ga) = generate(&spec);
        let (b, gb) = generate(&spec);
        assert_eq!(a, b);
        assert_eq!(ga, gb);
        assert!(a.iter().all(|x| (1.0..=5.0).contains(&x.rating) && x.rating.fract() == 0.0));
        assert_eq!(ga.len(), spec.n_users);
        assert!(ga.count(Group::Protected) > 0 && ga.count(Group::Unprotected) > 0);
    }

    #[test]
    fn files_round_trip_through_the_loaders() {
        let dir = tempfile::tempdir().unwrap();
        let (raw, groups) = generate(&SyntheticSpec::default());
        for fmt in [DatasetFormat::Ml1m, DatasetFormat::Ml100k] {
            let d = dir.path().join(format!("{fmt:?}"));
            write_movielens(&d, fmt, &raw, &groups).unwrap();
            assert_eq!(ingest::parse_ratings(&d.join(fmt.ratings_file()), fmt).unwrap(), raw);
            assert_eq!(ingest::parse_users(&d.join(fmt.users_file()), fmt).unwrap(), groups);
        }
    }
}
