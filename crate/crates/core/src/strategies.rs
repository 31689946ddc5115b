//! Acquisition strategies: given a user `u`, a query budget `q`, the known
//! ratings and the user's unqueried items `I_u`, pick at most `q` items of
//! `I_u` to ask about.
//!
//! Every strategy scores candidates and returns the `q` best, ordered by
//! descending score with ascending item id breaking ties. MixedRating is the
//! one exception to the ordering: it interleaves two rankings and reports
//! the predicted rating as its score.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{ItemId, RatingSet, UserId};
use crate::error::StrategyError;
use crate::mf::{self, MfHyperParams, MfModel, Triple};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum StrategyKind {
    Random,
    Popularity,
    Variance,
    PopVariance,
    GreedyExtend,
    RandomPersonalized,
    MaxRating,
    MinRating,
    MixedRating,
    Knn,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 10] = [
        StrategyKind::Random,
        StrategyKind::Popularity,
        StrategyKind::Variance,
        StrategyKind::PopVariance,
        StrategyKind::GreedyExtend,
        StrategyKind::RandomPersonalized,
        StrategyKind::MaxRating,
        StrategyKind::MinRating,
        StrategyKind::MixedRating,
        StrategyKind::Knn,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Random => "random",
            StrategyKind::Popularity => "pop",
            StrategyKind::Variance => "var",
            StrategyKind::PopVariance => "pop-var",
            StrategyKind::GreedyExtend => "greedy-extend",
            StrategyKind::RandomPersonalized => "random-p",
            StrategyKind::MaxRating => "max-rating",
            StrategyKind::MinRating => "min-rating",
            StrategyKind::MixedRating => "mixed-rating",
            StrategyKind::Knn => "knn",
        }
    }

    /// Personalized strategies run with a model retrained on the current
    /// known set before every sweep.
    pub fn is_personalized(self) -> bool {
        matches!(
            self,
            StrategyKind::RandomPersonalized
                | StrategyKind::MaxRating
                | StrategyKind::MinRating
                | StrategyKind::MixedRating
                | StrategyKind::Knn
        )
    }

    pub fn needs_model(self) -> bool {
        matches!(
            self,
            StrategyKind::RandomPersonalized
                | StrategyKind::MaxRating
                | StrategyKind::MinRating
                | StrategyKind::MixedRating
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = StrategyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| StrategyError::UnknownStrategy(s.to_string()))
    }
}

impl TryFrom<String> for StrategyKind {
    type Error = StrategyError;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<StrategyKind> for String {
    fn from(k: StrategyKind) -> String {
        k.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KnnAggregation {
    /// Similarity to the closest item the user already rated.
    #[default]
    Max,
    /// Average similarity over the user's rated items.
    Mean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MixedStart {
    #[default]
    Max,
    Min,
}

/// Budget reductions for Greedy Extend, which would otherwise need one
/// full training per candidate item per sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedyExtendOptions {
    /// Only the items with the most candidate ratings are scored.
    pub pool_size: usize,
    pub validation_fraction: f64,
    pub min_validation: usize,
    pub n_factors: usize,
    pub n_epochs: usize,
}

impl Default for GreedyExtendOptions {
    fn default() -> Self {
        Self {
            pool_size: 200,
            validation_fraction: 0.1,
            min_validation: 100,
            n_factors: 20,
            n_epochs: 5,
        }
    }
}

impl GreedyExtendOptions {
    /// Cheap scoring hyperparameters derived from the main ones.
    pub fn cheap_params(&self, base: &MfHyperParams) -> MfHyperParams {
        MfHyperParams {
            n_factors: self.n_factors,
            n_epochs: self.n_epochs,
            ..*base
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategyOptions {
    pub knn_aggregation: KnnAggregation,
    pub mixed_start: MixedStart,
    pub greedy_extend: GreedyExtendOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ItemStats {
    pub count: usize,
    pub mean: f64,
    /// Population variance; zero for one rating or none.
    pub variance: f64,
}

impl ItemStats {
    pub fn compute(known: &RatingSet) -> Vec<ItemStats> {
        let mut stats = vec![ItemStats::default(); known.n_items()];
        for x in known.iter() {
            let s = &mut stats[x.item.index()];
            s.count += 1;
            s.mean += x.rating;
        }
        for s in stats.iter_mut().filter(|s| s.count > 0) {
            s.mean /= s.count as f64;
        }
        for x in known.iter() {
            let s = &mut stats[x.item.index()];
            s.variance += (x.rating - s.mean).powi(2);
        }
        for s in &mut stats {
            s.variance = if s.count > 1 {
                s.variance / s.count as f64
            } else {
                0.0
            };
        }
        stats
    }
}

/// Item-item cosine similarity over rating columns of the known set, with
/// zeros standing in for missing ratings. Stored densely.
#[derive(Debug, Clone)]
pub struct ItemSimilarity {
    n_items: usize,
    cosine: Vec<f32>,
}

impl ItemSimilarity {
    pub fn compute(known: &RatingSet) -> Self {
        let n = known.n_items();
        let norms: Vec<f64> = (0..n)
            .map(|i| {
                known
                    .item_entries(ItemId(i as u32))
                    .map(|x| x.rating * x.rating)
                    .sum::<f64>()
                    .sqrt()
            })
            .collect();
        let mut cosine = vec![0f32; n * n];
        cosine.par_chunks_mut(n.max(1)).enumerate().for_each(|(a, row)| {
            if norms[a] == 0.0 {
                return;
            }
            let item_a = ItemId(a as u32);
            let mut dots = vec![0f64; n];
            for x in known.item_entries(item_a) {
                for y in known.user_entries(x.user) {
                    dots[y.item.index()] += x.rating * y.rating;
                }
            }
            for (b, d) in dots.into_iter().enumerate() {
                if d != 0.0 {
                    row[b] = (d / (norms[a] * norms[b])) as f32;
                }
            }
        });
        Self { n_items: n, cosine }
    }

    pub fn get(&self, a: ItemId, b: ItemId) -> f64 {
        if a.index() >= self.n_items || b.index() >= self.n_items {
            return 0.0;
        }
        f64::from(self.cosine[a.index() * self.n_items + b.index()])
    }
}

/// Read-only view handed to every strategy during one sweep.
#[derive(Debug)]
pub struct StrategyContext<'a> {
    pub known: &'a RatingSet,
    pub model: Option<&'a MfModel>,
    pub item_stats: Vec<ItemStats>,
    pub rng_seed: u64,
    pub iteration: u64,
    pub max_rating: f64,
    pub options: StrategyOptions,
    pub similarity: Option<ItemSimilarity>,
    /// Precomputed global ranking for non-personalized strategies that score
    /// once per sweep (Greedy Extend).
    pub global_scores: Option<ScoredList>,
}

impl<'a> StrategyContext<'a> {
    pub fn new(known: &'a RatingSet, rng_seed: u64, iteration: u64) -> Self {
        Self {
            known,
            model: None,
            item_stats: ItemStats::compute(known),
            rng_seed,
            iteration,
            max_rating: 5.0,
            options: StrategyOptions::default(),
            similarity: None,
            global_scores: None,
        }
    }

    pub fn with_model(mut self, model: &'a MfModel) -> Self {
        self.max_rating = model.rating_range().1;
        self.model = Some(model);
        self
    }

    pub fn with_options(mut self, options: StrategyOptions) -> Self {
        self.options = options;
        self
    }

    pub fn with_similarity(mut self) -> Self {
        self.similarity = Some(ItemSimilarity::compute(self.known));
        self
    }

    pub fn with_global_scores(mut self, scores: ScoredList) -> Self {
        self.global_scores = Some(scores);
        self
    }
}

/// Selected items with their scores, best first.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoredList(pub Vec<(ItemId, f64)>);

impl ScoredList {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = ItemId> + '_ {
        self.0.iter().map(|&(i, _)| i)
    }

    pub fn item_vec(&self) -> Vec<ItemId> {
        self.items().collect()
    }
}

#[inline]
fn rank_order(a: &(ItemId, f64), b: &(ItemId, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// The `q` best of `scored` by descending score, ascending id on ties.
pub fn top_q(mut scored: Vec<(ItemId, f64)>, q: usize) -> ScoredList {
    if q == 0 {
        return ScoredList::default();
    }
    if scored.len() > q {
        scored.select_nth_unstable_by(q - 1, rank_order);
        scored.truncate(q);
    }
    scored.sort_unstable_by(rank_order);
    ScoredList(scored)
}

fn score_pool<F>(pool: &BTreeSet<ItemId>, q: usize, mut score: F) -> ScoredList
where
    F: FnMut(ItemId) -> f64,
{
    top_q(pool.iter().map(|&i| (i, score(i))).collect(), q)
}

pub fn item_popularity(ctx: &StrategyContext<'_>, i: ItemId) -> usize {
    ctx.item_stats.get(i.index()).map_or(0, |s| s.count)
}

pub fn item_variance(ctx: &StrategyContext<'_>, i: ItemId) -> f64 {
    ctx.item_stats.get(i.index()).map_or(0.0, |s| s.variance)
}

pub fn select_random(u: UserId, q: usize, ctx: &StrategyContext<'_>, pool: &BTreeSet<ItemId>) -> ScoredList {
    let mut stream = rng::stream(&[
        rng::TAG_RANDOM_STRATEGY,
        ctx.rng_seed,
        ctx.iteration,
        u64::from(u.0),
    ]);
    score_pool(pool, q, |_| stream.random::<f64>())
}

/// Random selection run under the personalized protocol. The mechanics are
/// those of [`select_random`]; only the surrounding experiment differs.
pub fn select_random_personalized(
    u: UserId,
    q: usize,
    ctx: &StrategyContext<'_>,
    pool: &BTreeSet<ItemId>,
) -> ScoredList {
    select_random(u, q, ctx, pool)
}

pub fn select_popularity(_u: UserId, q: usize, ctx: &StrategyContext<'_>, pool: &BTreeSet<ItemId>) -> ScoredList {
    score_pool(pool, q, |i| item_popularity(ctx, i) as f64)
}

pub fn select_variance(_u: UserId, q: usize, ctx: &StrategyContext<'_>, pool: &BTreeSet<ItemId>) -> ScoredList {
    score_pool(pool, q, |i| item_variance(ctx, i))
}

/// `ln(1 + popularity) * variance`.
pub fn pop_var_score(ctx: &StrategyContext<'_>, i: ItemId) -> f64 {
    (item_popularity(ctx, i) as f64).ln_1p() * item_variance(ctx, i)
}

pub fn select_pop_var(_u: UserId, q: usize, ctx: &StrategyContext<'_>, pool: &BTreeSet<ItemId>) -> ScoredList {
    score_pool(pool, q, |i| pop_var_score(ctx, i))
}

fn require_model<'a>(ctx: &StrategyContext<'a>, who: &'static str) -> Result<&'a MfModel, StrategyError> {
    ctx.model.ok_or(StrategyError::MissingModel(who))
}

pub fn select_max_rating(
    u: UserId,
    q: usize,
    ctx: &StrategyContext<'_>,
    pool: &BTreeSet<ItemId>,
) -> Result<ScoredList, StrategyError> {
    let model = require_model(ctx, "max-rating")?;
    Ok(score_pool(pool, q, |i| model.predict(u, i)))
}

pub fn select_min_rating(
    u: UserId,
    q: usize,
    ctx: &StrategyContext<'_>,
    pool: &BTreeSet<ItemId>,
) -> Result<ScoredList, StrategyError> {
    let model = require_model(ctx, "min-rating")?;
    Ok(score_pool(pool, q, |i| ctx.max_rating - model.predict(u, i)))
}

/// Alternates between the highest and the lowest predicted items, skipping
/// any already taken, until `q` are chosen. Scores are the predictions.
pub fn select_mixed_rating(
    u: UserId,
    q: usize,
    ctx: &StrategyContext<'_>,
    pool: &BTreeSet<ItemId>,
) -> Result<ScoredList, StrategyError> {
    let model = require_model(ctx, "mixed-rating")?;
    let predicted: Vec<(ItemId, f64)> = pool.iter().map(|&i| (i, model.predict(u, i))).collect();
    let highest = top_q(predicted.clone(), q);
    let lowest = top_q(
        predicted.iter().map(|&(i, p)| (i, ctx.max_rating - p)).collect(),
        q,
    );
    let (first, second) = match ctx.options.mixed_start {
        MixedStart::Max => (highest.item_vec(), lowest.item_vec()),
        MixedStart::Min => (lowest.item_vec(), highest.item_vec()),
    };
    let mut taken = BTreeSet::new();
    let mut out = Vec::with_capacity(q.min(pool.len()));
    let (mut a, mut b) = (first.into_iter(), second.into_iter());
    let mut from_first = true;
    while out.len() < q {
        let source = if from_first { &mut a } else { &mut b };
        let next = source.find(|i| !taken.contains(i));
        let other_empty = if from_first { b.len() == 0 } else { a.len() == 0 };
        match next {
            Some(i) => {
                taken.insert(i);
                out.push((i, model.predict(u, i)));
            }
            None if other_empty => break,
            None => {}
        }
        from_first = !from_first;
    }
    Ok(ScoredList(out))
}

pub fn select_knn(u: UserId, q: usize, ctx: &StrategyContext<'_>, pool: &BTreeSet<ItemId>) -> ScoredList {
    let rated: Vec<ItemId> = ctx.known.user_items(u).collect();
    let owned;
    let sim = match &ctx.similarity {
        Some(s) => s,
        None => {
            owned = ItemSimilarity::compute(ctx.known);
            &owned
        }
    };
    score_pool(pool, q, |i| {
        if rated.is_empty() {
            return 0.0;
        }
        let sims = rated.iter().map(|&j| sim.get(i, j));
        match ctx.options.knn_aggregation {
            KnnAggregation::Max => sims.fold(f64::NEG_INFINITY, f64::max),
            KnnAggregation::Mean => sims.sum::<f64>() / rated.len() as f64,
        }
    })
}

/// Items with the most candidate ratings among `eligible`, ties by id.
pub fn greedy_extend_pool(candidate: &RatingSet, eligible: &BTreeSet<ItemId>, pool_size: usize) -> Vec<ItemId> {
    top_q(
        eligible
            .iter()
            .map(|&i| (i, candidate.item_degree(i) as f64))
            .collect(),
        pool_size,
    )
    .item_vec()
}

/// `score(i) = RMSE(train(K), val) - RMSE(train(K + X_i), val)` for every
/// item of `items`, where `X_i` are the candidate ratings of `i` not in
/// `val`. Returned best first; items that would raise the error score
/// negative.
///
/// When `known` is empty no baseline model can be fitted, and the baseline
/// error is taken from a constant prediction at the middle of the rating
/// range.
pub fn greedy_extend_scores(
    known: &RatingSet,
    candidate: &RatingSet,
    items: &[ItemId],
    val: &RatingSet,
    hp_cheap: &MfHyperParams,
) -> Result<ScoredList, StrategyError> {
    if val.is_empty() {
        return Err(StrategyError::EmptyValidationSet);
    }
    let n_users = known.n_users().max(candidate.n_users()).max(val.n_users());
    let n_items = known.n_items().max(candidate.n_items()).max(val.n_items());
    let base: Vec<Triple> = known
        .iter()
        .filter(|x| !val.contains(x.user, x.item))
        .map(|x| (x.user, x.item, x.rating))
        .collect();
    let rmse_of = |triples: &[Triple]| -> Result<f64, StrategyError> {
        if triples.is_empty() {
            let mid = 0.5 * (hp_cheap.rating_min + hp_cheap.rating_max);
            let sse: f64 = val.iter().map(|x| (x.rating - mid).powi(2)).sum();
            return Ok((sse / val.len() as f64).sqrt());
        }
        let model = mf::train_triples(triples, n_users, n_items, hp_cheap)?;
        Ok(mf::rmse(&model, val)?)
    };
    let base_rmse = rmse_of(&base)?;
    let scored = items
        .par_iter()
        .map(|&i| {
            let extra: Vec<Triple> = candidate
                .item_entries(i)
                .filter(|x| !val.contains(x.user, x.item))
                .map(|x| (x.user, x.item, x.rating))
                .collect();
            if extra.is_empty() {
                return Ok((i, 0.0));
            }
            let mut extended = base.clone();
            extended.extend(extra);
            Ok((i, base_rmse - rmse_of(&extended)?))
        })
        .collect::<Result<Vec<_>, StrategyError>>()?;
    Ok(top_q(scored, items.len()))
}

/// Filter a precomputed global ranking down to the user's pool.
pub fn select_from_global(q: usize, global: &ScoredList, pool: &BTreeSet<ItemId>) -> ScoredList {
    ScoredList(
        global
            .0
            .iter()
            .filter(|(i, _)| pool.contains(i))
            .take(q)
            .copied()
            .collect(),
    )
}

/// Dispatch on the strategy kind.
pub fn select(
    kind: StrategyKind,
    u: UserId,
    q: usize,
    ctx: &StrategyContext<'_>,
    pool: &BTreeSet<ItemId>,
) -> Result<ScoredList, StrategyError> {
    Ok(match kind {
        StrategyKind::Random => select_random(u, q, ctx, pool),
        StrategyKind::RandomPersonalized => select_random_personalized(u, q, ctx, pool),
        StrategyKind::Popularity => select_popularity(u, q, ctx, pool),
        StrategyKind::Variance => select_variance(u, q, ctx, pool),
        StrategyKind::PopVariance => select_pop_var(u, q, ctx, pool),
        StrategyKind::MaxRating => select_max_rating(u, q, ctx, pool)?,
        StrategyKind::MinRating => select_min_rating(u, q, ctx, pool)?,
        StrategyKind::MixedRating => select_mixed_rating(u, q, ctx, pool)?,
        StrategyKind::Knn => select_knn(u, q, ctx, pool),
        StrategyKind::GreedyExtend => {
            let global = ctx
                .global_scores
                .as_ref()
                .ok_or(StrategyError::EmptyValidationSet)?;
            select_from_global(q, global, pool)
        }
    })
}
