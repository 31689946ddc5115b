//! The acquire / retrain / evaluate loop.
//!
//! A run starts from a train/test split. A small random share of the train
//! split becomes the known set `K`; the rest is the candidate set `X`, which
//! stands in for the answers users would give. Each sweep asks every user
//! with a non-empty pool `I_u` about up to `q` items chosen by a strategy.
//! Queried items whose rating is in `X` move to `K`; every queried item
//! leaves `I_u` whether it was answered or not. After a sweep the model is
//! retrained on `K` and scored on the fixed test set, per group.
//!
//! Strategies see a snapshot of `K` taken at the start of the sweep, so the
//! order in which users are visited does not change what they are asked.
//! Acquisitions are then applied in ascending user order.

use std::collections::BTreeSet;

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{CandidatePool, Group, GroupMap, Interaction, ItemId, RatingSet, UserId};
use crate::error::{EvalError, SimulationError, StrategyError};
use crate::eval::{self, TestUnit};
use crate::mf::{self, MfHyperParams, MfModel};
use crate::rng;
use crate::strategies::{self, ScoredList, StrategyContext, StrategyKind, StrategyOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationConfig {
    pub strategy: StrategyKind,
    pub query_size: usize,
    pub known_init_fraction: f64,
    /// `None` runs until every pool is empty.
    pub max_iterations: Option<usize>,
    pub eval_every: usize,
    pub equal_ratio: bool,
    pub seed: u64,
    pub hyperparams: MfHyperParams,
    pub strategy_options: StrategyOptions,
    pub test_unit: TestUnit,
    /// Continue training from the previous model instead of refitting from
    /// scratch. Changes results; meant for speed studies only.
    pub warm_start: bool,
    /// Verify disjointness, conservation and pool monotonicity after every
    /// sweep.
    pub check_invariants: bool,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            strategy: StrategyKind::Random,
            query_size: 10,
            known_init_fraction: 0.002,
            max_iterations: None,
            eval_every: 1,
            equal_ratio: false,
            seed: 0,
            hyperparams: MfHyperParams::default(),
            strategy_options: StrategyOptions::default(),
            test_unit: TestUnit::Rating,
            warm_start: false,
            check_invariants: cfg!(debug_assertions),
        }
    }
}

impl SimulationConfig {
    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidConfig(m));
        if !(self.known_init_fraction > 0.0 && self.known_init_fraction < 1.0) {
            return bad(format!(
                "known_init_fraction must lie in (0, 1), got {}",
                self.known_init_fraction
            ));
        }
        if self.query_size < 1 {
            return bad("query_size must be >= 1".into());
        }
        if self.eval_every < 1 {
            return bad("eval_every must be >= 1".into());
        }
        let ge = &self.strategy_options.greedy_extend;
        if ge.pool_size < 1 || ge.min_validation < 1 {
            return bad("greedy_extend pool_size and min_validation must be >= 1".into());
        }
        if !(ge.validation_fraction > 0.0 && ge.validation_fraction < 1.0) {
            return bad("greedy_extend validation_fraction must lie in (0, 1)".into());
        }
        self.hyperparams.validate().map_err(SimulationError::from)
    }
}

/// Mutable state of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationState {
    pub known: RatingSet,
    pub candidate: RatingSet,
    pub pools: CandidatePool,
    pub iteration: usize,
}

impl SimulationState {
    /// `K ∩ X = ∅` and `(K ∪ X) ∩ T = ∅`.
    pub fn check_disjoint(&self, test: &RatingSet) -> Result<(), String> {
        for x in self.known.iter() {
            if self.candidate.contains(x.user, x.item) {
                return Err(format!("({}, {}) in both K and X", x.user, x.item));
            }
            if test.contains(x.user, x.item) {
                return Err(format!("({}, {}) in both K and T", x.user, x.item));
            }
        }
        if let Some(x) = self.candidate.iter().find(|x| test.contains(x.user, x.item)) {
            return Err(format!("({}, {}) in both X and T", x.user, x.item));
        }
        Ok(())
    }

    /// Every candidate rating must still be askable.
    fn check_candidates_pooled(&self) -> Result<(), String> {
        match self
            .candidate
            .iter()
            .find(|x| !self.pools.contains(x.user, x.item))
        {
            Some(x) => Err(format!("({}, {}) in X but not in I_u", x.user, x.item)),
            None => Ok(()),
        }
    }

    fn return_to_candidates(&mut self, returned: &[Interaction]) -> Result<(), SimulationError> {
        for x in returned {
            let back = self.known.remove(x.user, x.item)?;
            self.candidate.insert(back)?;
            self.pools.restore(x.user, x.item);
        }
        Ok(())
    }
}

/// One evaluation point of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TracePoint {
    pub iteration: usize,
    pub n_known: usize,
    /// Ratings acquired since the previous evaluation point.
    pub acq_protected: usize,
    pub acq_unprotected: usize,
    pub rmse_all: f64,
    pub rmse_protected: f64,
    pub rmse_unprotected: f64,
    pub rmse_diff: f64,
    pub t_statistic: f64,
    pub p_value: f64,
}

impl TracePoint {
    pub fn significant(&self) -> bool {
        self.p_value < eval::SIGNIFICANCE_LEVEL
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimulationTrace {
    pub points: Vec<TracePoint>,
}

impl SimulationTrace {
    pub fn at_iteration(&self, iteration: usize) -> Option<&TracePoint> {
        self.points.iter().find(|p| p.iteration == iteration)
    }

    pub fn last(&self) -> Option<&TracePoint> {
        self.points.last()
    }
}

/// Everything a run needs from the dataset: the train split (the initial
/// `K ∪ X`), the fixed test split, and the group labels.
#[derive(Debug, Clone)]
pub struct World {
    pub train: RatingSet,
    pub test: RatingSet,
    pub groups: GroupMap,
}

impl World {
    pub fn n_users(&self) -> usize {
        self.train.n_users().max(self.test.n_users())
    }

    pub fn n_items(&self) -> usize {
        self.train.n_items().max(self.test.n_items())
    }

    /// Items that can be asked about: every item of the dataset.
    pub fn all_items(&self) -> BTreeSet<ItemId> {
        self.train.items().chain(self.test.items()).collect()
    }
}

fn sample_entries(entries: &[Interaction], n: usize, stream: &mut rand_chacha::ChaCha8Rng) -> Vec<Interaction> {
    let mut picked = index::sample(stream, entries.len(), n.min(entries.len())).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|ix| entries[ix]).collect()
}

fn split_off(x: &RatingSet, chosen: Vec<Interaction>) -> Result<(RatingSet, RatingSet), SimulationError> {
    let mut known = x.empty_like();
    let mut rest = x.clone();
    for e in chosen {
        rest.remove(e.user, e.item)?;
        known.insert(e)?;
    }
    Ok((known, rest))
}

/// Move `round(fraction * |X|)` ratings, sampled uniformly without
/// replacement, from `X` into a new known set.
pub fn init_known(x: &RatingSet, fraction: f64, seed: u64) -> Result<(RatingSet, RatingSet), SimulationError> {
    let n = (fraction * x.len() as f64).round() as usize;
    let entries: Vec<Interaction> = x.iter().collect();
    let mut stream = rng::stream(&[rng::TAG_INIT_KNOWN, seed]);
    split_off(x, sample_entries(&entries, n, &mut stream))
}

/// Like [`init_known`], but half of the sample (rounded down) comes from
/// each group.
pub fn init_known_stratified(
    x: &RatingSet,
    fraction: f64,
    groups: &GroupMap,
    seed: u64,
) -> Result<(RatingSet, RatingSet), SimulationError> {
    let n = (fraction * x.len() as f64).round() as usize;
    let per_group = n / 2;
    let mut chosen = Vec::with_capacity(2 * per_group);
    for (tag, group) in [(0u64, Group::Protected), (1, Group::Unprotected)] {
        let entries: Vec<Interaction> = x
            .iter()
            .filter(|e| groups.get(e.user) == Some(group))
            .collect();
        let mut stream = rng::stream(&[rng::TAG_INIT_KNOWN, seed, tag]);
        chosen.extend(sample_entries(&entries, per_group, &mut stream));
    }
    split_off(x, chosen)
}

pub fn init_pools(known: &RatingSet, all_items: &BTreeSet<ItemId>, n_users: usize) -> CandidatePool {
    CandidatePool::init(known, n_users, all_items)
}

/// Inputs shared by every user of one sweep.
#[derive(Debug, Clone, Copy)]
pub struct SweepInputs<'a> {
    pub kind: StrategyKind,
    pub query_size: usize,
    pub seed: u64,
    pub options: StrategyOptions,
    pub model: Option<&'a MfModel>,
}

/// Outcome of one sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Sweep {
    /// `(user, queried items)` in ascending user order.
    pub queried: Vec<(UserId, Vec<ItemId>)>,
    /// Ratings moved from `X` to `K`, in application order.
    pub acquired: Vec<Interaction>,
}

impl Sweep {
    pub fn n_queried(&self) -> usize {
        self.queried.iter().map(|(_, l)| l.len()).sum()
    }
}

/// Strategy lists for every user with a non-empty pool, scored against the
/// current `K`. Does not modify the state.
pub fn plan_sweep(
    state: &SimulationState,
    inputs: &SweepInputs<'_>,
    global_scores: Option<ScoredList>,
) -> Result<Vec<(UserId, ScoredList)>, SimulationError> {
    let mut ctx = StrategyContext::new(&state.known, inputs.seed, state.iteration as u64)
        .with_options(inputs.options);
    if let Some(m) = inputs.model {
        ctx = ctx.with_model(m);
    }
    if inputs.kind == StrategyKind::Knn {
        ctx = ctx.with_similarity();
    }
    if let Some(g) = global_scores {
        ctx = ctx.with_global_scores(g);
    }
    let users: Vec<UserId> = state.pools.active_users().collect();
    let plan = users
        .par_iter()
        .map(|&u| {
            strategies::select(inputs.kind, u, inputs.query_size, &ctx, state.pools.get(u)).map(|l| (u, l))
        })
        .collect::<Result<Vec<_>, StrategyError>>()?;
    Ok(plan)
}

/// Apply strategy lists: answered items move `X -> K`, all queried items
/// leave the user's pool.
pub fn apply_sweep(state: &mut SimulationState, plan: Vec<(UserId, ScoredList)>) -> Result<Sweep, SimulationError> {
    let mut sweep = Sweep::default();
    for (u, list) in plan {
        let items = list.item_vec();
        for &i in &items {
            if !state.pools.remove(u, i) {
                return Err(SimulationError::InvalidConfig(format!(
                    "strategy returned {i} for {u}, which is not in the pool"
                )));
            }
            if state.candidate.contains(u, i) {
                let x = state.candidate.remove(u, i)?;
                state.known.insert(x)?;
                sweep.acquired.push(x);
            }
        }
        sweep.queried.push((u, items));
    }
    Ok(sweep)
}

/// One full sweep over the users with a non-empty pool.
pub fn step(
    state: &mut SimulationState,
    inputs: &SweepInputs<'_>,
    global_scores: Option<ScoredList>,
) -> Result<Sweep, SimulationError> {
    if state.pools.is_exhausted() {
        return Err(SimulationError::Exhausted);
    }
    let plan = plan_sweep(state, inputs, global_scores)?;
    apply_sweep(state, plan)
}

/// Subsample the larger group's acquisitions down to the size of the
/// smaller group's. Returns `(kept, returned)`, both in input order.
pub fn equal_ratio_filter(
    acquisitions: &[Interaction],
    groups: &GroupMap,
    seed: u64,
    iteration: u64,
) -> (Vec<Interaction>, Vec<Interaction>) {
    let is_protected = |x: &Interaction| groups.get(x.user) == Some(Group::Protected);
    let n_p = acquisitions.iter().filter(|x| is_protected(x)).count();
    let n_u = acquisitions.len() - n_p;
    let target = n_p.min(n_u);
    let majority_protected = n_p > n_u;
    let majority: Vec<usize> = acquisitions
        .iter()
        .enumerate()
        .filter(|(_, x)| is_protected(x) == majority_protected)
        .map(|(ix, _)| ix)
        .collect();
    let mut stream = rng::stream(&[rng::TAG_EQUAL_RATIO, seed, iteration]);
    let keep: BTreeSet<usize> = index::sample(&mut stream, majority.len(), target)
        .into_iter()
        .map(|k| majority[k])
        .collect();
    let mut kept = Vec::new();
    let mut returned = Vec::new();
    for (ix, x) in acquisitions.iter().enumerate() {
        if is_protected(x) != majority_protected || keep.contains(&ix) {
            kept.push(*x);
        } else {
            returned.push(*x);
        }
    }
    (kept, returned)
}

/// Observer hook called after every sweep, once the equal-ratio filter (if
/// any) has been applied.
pub struct SweepRecord<'a> {
    pub iteration: usize,
    pub sweep: &'a Sweep,
    pub kept: &'a [Interaction],
    pub returned: &'a [Interaction],
    pub state: &'a SimulationState,
    pub evaluated: bool,
}

fn split_test(world: &World) -> Result<(RatingSet, RatingSet), SimulationError> {
    world.groups.check_covers(&world.train)?;
    world.groups.check_covers(&world.test)?;
    let (protected, unprotected) = world.test.group_partition(&world.groups)?;
    if protected.is_empty() {
        return Err(EvalError::EmptyGroup("protected").into());
    }
    if unprotected.is_empty() {
        return Err(EvalError::EmptyGroup("unprotected").into());
    }
    Ok((protected, unprotected))
}

/// Runs one strategy from initialization to exhaustion (or the iteration cap).
pub struct Simulator<'w> {
    world: &'w World,
    cfg: SimulationConfig,
    test_protected: RatingSet,
    test_unprotected: RatingSet,
    state: SimulationState,
    model: Option<MfModel>,
    model_is_current: bool,
    fallback_validation: RatingSet,
    trace: SimulationTrace,
    window_acq: (usize, usize),
}

impl<'w> Simulator<'w> {
    pub fn new(world: &'w World, cfg: SimulationConfig) -> Result<Self, SimulationError> {
        cfg.validate()?;
        let (test_protected, test_unprotected) = split_test(world)?;
        let (known, candidate) = if cfg.equal_ratio {
            init_known_stratified(&world.train, cfg.known_init_fraction, &world.groups, cfg.seed)?
        } else {
            init_known(&world.train, cfg.known_init_fraction, cfg.seed)?
        };
        Self::assemble(world, cfg, known, candidate, test_protected, test_unprotected)
    }

    /// Start from a given known set instead of a random sample of the train
    /// split. `known` must be a subset of `world.train`.
    pub fn with_known(world: &'w World, cfg: SimulationConfig, known: RatingSet) -> Result<Self, SimulationError> {
        cfg.validate()?;
        let (test_protected, test_unprotected) = split_test(world)?;
        let mut candidate = world.train.clone();
        for x in known.iter() {
            if candidate.remove(x.user, x.item)? != x {
                return Err(SimulationError::InvalidConfig(format!(
                    "known rating ({}, {}) differs from the train split",
                    x.user, x.item
                )));
            }
        }
        let mut k = world.train.empty_like();
        for x in known.iter() {
            k.insert(x)?;
        }
        Self::assemble(world, cfg, k, candidate, test_protected, test_unprotected)
    }

    fn assemble(
        world: &'w World,
        cfg: SimulationConfig,
        known: RatingSet,
        candidate: RatingSet,
        test_protected: RatingSet,
        test_unprotected: RatingSet,
    ) -> Result<Self, SimulationError> {
        let pools = init_pools(&known, &world.all_items(), world.n_users());

        let fallback_validation = {
            let entries: Vec<Interaction> = world.train.iter().collect();
            let mut stream = rng::stream(&[rng::TAG_VALIDATION, cfg.seed, u64::MAX]);
            let n = cfg.strategy_options.greedy_extend.min_validation;
            RatingSet::from_interactions(sample_entries(&entries, n, &mut stream))?
        };

        Ok(Self {
            world,
            cfg,
            test_protected,
            test_unprotected,
            state: SimulationState {
                known,
                candidate,
                pools,
                iteration: 0,
            },
            model: None,
            model_is_current: false,
            fallback_validation,
            trace: SimulationTrace::default(),
            window_acq: (0, 0),
        })
    }

    pub fn state(&self) -> &SimulationState {
        &self.state
    }

    pub fn trace(&self) -> &SimulationTrace {
        &self.trace
    }

    fn ensure_model(&mut self) -> Result<Option<&MfModel>, SimulationError> {
        if !self.model_is_current {
            if self.state.known.is_empty() {
                self.model = None;
            } else {
                let warm = if self.cfg.warm_start { self.model.as_ref() } else { None };
                let (m, _) = mf::train_with_history(&self.state.known, &self.cfg.hyperparams, warm)?;
                self.model = Some(m);
            }
            self.model_is_current = true;
        }
        Ok(self.model.as_ref())
    }

    /// Model for personalized strategies. With nothing known yet, every
    /// prediction is the middle of the rating range.
    fn strategy_model(&mut self) -> Result<MfModel, SimulationError> {
        if let Some(m) = self.ensure_model()? {
            return Ok(m.clone());
        }
        let hp = &self.cfg.hyperparams;
        Ok(MfModel::from_parts(
            0.5 * (hp.rating_min + hp.rating_max),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            Vec::new(),
            hp.n_factors,
            (hp.rating_min, hp.rating_max),
        )?)
    }

    fn evaluate(&mut self) -> Result<bool, SimulationError> {
        self.ensure_model()?;
        let Some(model) = self.model.as_ref() else {
            return Ok(false);
        };
        let (tp, tu) = (&self.test_protected, &self.test_unprotected);
        let rmse_all = mf::rmse(model, &self.world.test)?;
        let (t_statistic, p_value, rmse_protected, rmse_unprotected) =
            match eval::group_report(model, tp, tu, self.cfg.test_unit) {
                Ok(r) => (r.t_statistic, r.p_value, r.rmse_protected, r.rmse_unprotected),
                Err(EvalError::InsufficientSamples { .. }) => {
                    (f64::NAN, f64::NAN, mf::rmse(model, tp)?, mf::rmse(model, tu)?)
                }
                Err(e) => return Err(e.into()),
            };
        self.trace.points.push(TracePoint {
            iteration: self.state.iteration,
            n_known: self.state.known.len(),
            acq_protected: self.window_acq.0,
            acq_unprotected: self.window_acq.1,
            rmse_all,
            rmse_protected,
            rmse_unprotected,
            rmse_diff: rmse_protected - rmse_unprotected,
            t_statistic,
            p_value,
        });
        self.window_acq = (0, 0);
        Ok(true)
    }

    fn greedy_extend_global(&self) -> Result<ScoredList, SimulationError> {
        let opts = self.cfg.strategy_options.greedy_extend;
        let known = &self.state.known;
        let n_val = (opts.validation_fraction * known.len() as f64).round() as usize;
        let val = if n_val >= opts.min_validation {
            let entries: Vec<Interaction> = known.iter().collect();
            let mut stream = rng::stream(&[rng::TAG_VALIDATION, self.cfg.seed, self.state.iteration as u64]);
            RatingSet::from_interactions(sample_entries(&entries, n_val, &mut stream))?
        } else {
            self.fallback_validation.clone()
        };
        let eligible: BTreeSet<ItemId> = self
            .state
            .pools
            .active_users()
            .flat_map(|u| self.state.pools.get(u).iter().copied())
            .collect();
        let items = strategies::greedy_extend_pool(&self.state.candidate, &eligible, opts.pool_size);
        let cheap = opts.cheap_params(&self.cfg.hyperparams);
        Ok(strategies::greedy_extend_scores(known, &self.state.candidate, &items, &val, &cheap)?)
    }

    fn check_invariants(&self, pool_sizes_before: &[usize], kx_before: usize) -> Result<(), SimulationError> {
        let fail = |m: String| Err(SimulationError::InvalidConfig(format!("invariant violated: {m}")));
        if let Err(m) = self.state.check_disjoint(&self.world.test) {
            return fail(m);
        }
        if let Err(m) = self.state.check_candidates_pooled() {
            return fail(m);
        }
        if self.state.known.len() + self.state.candidate.len() != kx_before {
            return fail("|K| + |X| changed".into());
        }
        if !self.cfg.equal_ratio
            && self
                .state
                .pools
                .sizes()
                .iter()
                .zip(pool_sizes_before)
                .any(|(after, before)| after > before)
        {
            return fail("a pool grew".into());
        }
        Ok(())
    }

    /// Execute one sweep. Returns `false` once nothing is left to do.
    pub fn advance<F>(&mut self, observer: &mut F) -> Result<bool, SimulationError>
    where
        F: FnMut(&SweepRecord<'_>),
    {
        if self.state.pools.is_exhausted() {
            return Ok(false);
        }
        if self
            .cfg
            .max_iterations
            .is_some_and(|cap| self.state.iteration >= cap)
        {
            return Ok(false);
        }
        let pool_sizes_before = if self.cfg.check_invariants {
            self.state.pools.sizes()
        } else {
            Vec::new()
        };
        let kx_before = self.state.known.len() + self.state.candidate.len();
        let pool_total_before = self.state.pools.total_len();

        let model = if self.cfg.strategy.needs_model() {
            Some(self.strategy_model()?)
        } else {
            None
        };
        let global = if self.cfg.strategy == StrategyKind::GreedyExtend {
            Some(self.greedy_extend_global()?)
        } else {
            None
        };
        self.state.iteration += 1;
        let inputs = SweepInputs {
            kind: self.cfg.strategy,
            query_size: self.cfg.query_size,
            seed: self.cfg.seed,
            options: self.cfg.strategy_options,
            model: model.as_ref(),
        };
        let plan = plan_sweep(&self.state, &inputs, global)?;
        let sweep = apply_sweep(&mut self.state, plan)?;

        let (kept, returned) = if self.cfg.equal_ratio {
            let (k, r) = equal_ratio_filter(
                &sweep.acquired,
                &self.world.groups,
                self.cfg.seed,
                self.state.iteration as u64,
            );
            self.state.return_to_candidates(&r)?;
            (k, r)
        } else {
            (sweep.acquired.clone(), Vec::new())
        };
        if !sweep.acquired.is_empty() {
            self.model_is_current = false;
        }
        for x in &kept {
            match self.world.groups.get(x.user) {
                Some(Group::Protected) => self.window_acq.0 += 1,
                _ => self.window_acq.1 += 1,
            }
        }
        if self.cfg.check_invariants {
            self.check_invariants(&pool_sizes_before, kx_before)?;
        }

        let stalled = kept.is_empty() && self.state.pools.total_len() >= pool_total_before;
        let finished = stalled
            || self.state.pools.is_exhausted()
            || self
                .cfg
                .max_iterations
                .is_some_and(|cap| self.state.iteration >= cap);
        let evaluated = if self.state.iteration.is_multiple_of(self.cfg.eval_every) || finished {
            self.evaluate()?
        } else {
            false
        };
        observer(&SweepRecord {
            iteration: self.state.iteration,
            sweep: &sweep,
            kept: &kept,
            returned: &returned,
            state: &self.state,
            evaluated,
        });
        Ok(!stalled)
    }

    /// Evaluate the initial model (if `K` is non-empty) and sweep until done.
    pub fn run_with<F>(self, observer: F) -> Result<SimulationTrace, SimulationError>
    where
        F: FnMut(&SweepRecord<'_>),
    {
        let (trace, outcome) = self.run_to_end(observer);
        outcome.map(|()| trace)
    }

    /// Like [`Simulator::run_with`], but hands back the points recorded so
    /// far even when the run fails.
    pub fn run_to_end<F>(mut self, mut observer: F) -> (SimulationTrace, Result<(), SimulationError>)
    where
        F: FnMut(&SweepRecord<'_>),
    {
        let outcome = (|| {
            self.evaluate()?;
            while self.advance(&mut observer)? {}
            Ok(())
        })();
        (self.trace, outcome)
    }
}

/// Run a full simulation of `cfg.strategy` on `world`.
pub fn run(world: &World, cfg: &SimulationConfig) -> Result<SimulationTrace, SimulationError> {
    Simulator::new(world, *cfg)?.run_with(|_| {})
}
