use std::collections::BTreeSet;

use proptest::prelude::*;

use minifair_core::data::{Group, GroupMap, Interaction, ItemId, RatingSet, UserId};
use minifair_core::ingest::SplitConfig;
use minifair_core::mf::MfHyperParams;
use minifair_core::simulation::{self, SimulationConfig, Simulator, World};
use minifair_core::strategies::{self, StrategyKind};
use minifair_core::synth::{self, SyntheticSpec};

fn small_world(seed: u64) -> World {
    let spec = SyntheticSpec {
        n_users: 24,
        n_items: 18,
        min_ratings_per_user: 6,
        max_ratings_per_user: 12,
        seed,
        ..Default::default()
    };
    synth::world(&spec, &SplitConfig { k_core: 2, ..Default::default() }).unwrap()
}

fn cheap(strategy: StrategyKind, equal_ratio: bool, seed: u64) -> SimulationConfig {
    let mut cfg = SimulationConfig {
        strategy,
        equal_ratio,
        seed,
        query_size: 3,
        known_init_fraction: 0.05,
        check_invariants: true,
        hyperparams: MfHyperParams {
            n_factors: 4,
            n_epochs: 3,
            ..Default::default()
        },
        ..Default::default()
    };
    cfg.strategy_options.greedy_extend.pool_size = 8;
    cfg.strategy_options.greedy_extend.min_validation = 10;
    cfg.strategy_options.greedy_extend.n_factors = 2;
    cfg.strategy_options.greedy_extend.n_epochs = 2;
    cfg
}

fn pairs(rs: &RatingSet) -> BTreeSet<(UserId, ItemId)> {
    rs.iter().map(|x| (x.user, x.item)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn sweeps_preserve_the_loop_invariants(
        world_seed in 0u64..1000,
        seed in any::<u64>(),
        kind_ix in 0usize..StrategyKind::ALL.len(),
        equal_ratio in any::<bool>(),
    ) {
        let world = small_world(world_seed);
        let kind = StrategyKind::ALL[kind_ix];
        let cfg = cheap(kind, equal_ratio, seed);
        let sim = Simulator::new(&world, cfg).unwrap();
        let train = pairs(&world.train);
        let test_before = world.test.clone();
        let mut asked: BTreeSet<(UserId, ItemId)> = BTreeSet::new();
        let mut prev_pools = sim.state().pools.sizes();
        let mut prev_known = pairs(&sim.state().known);
        let mut failure: Option<String> = None;
        let trace = sim.run_with(|rec| {
            let mut fail = |m: String| { failure.get_or_insert(m); };
            let st = rec.state;
            let k = pairs(&st.known);
            let x = pairs(&st.candidate);
            if !k.is_disjoint(&x) { fail("K and X overlap".into()); }
            if k.union(&x).copied().collect::<BTreeSet<_>>() != train { fail("K + X != train".into()); }
            if k.iter().any(|&(u, i)| test_before.contains(u, i)) { fail("K meets T".into()); }
            for (u, items) in &rec.sweep.queried {
                for &i in items {
                    if st.pools.contains(*u, i) && !rec.returned.iter().any(|r| r.user == *u && r.item == i) {
                        fail(format!("{u} {i} queried but still in the pool"));
                    }
                    if !equal_ratio && !asked.insert((*u, i)) {
                        fail(format!("{u} asked about {i} twice"));
                    }
                }
            }
            let sizes = st.pools.sizes();
            if !equal_ratio && sizes.iter().zip(&prev_pools).any(|(a, b)| a > b) {
                fail("a pool grew".into());
            }
            if !prev_known.is_subset(&k) {
                fail("an acquired rating left K".into());
            }
            prev_pools = sizes;
            prev_known = k;
        }).unwrap();
        prop_assert!(failure.is_none(), "{:?}", failure);
        prop_assert_eq!(&world.test, &test_before);
        prop_assert!(!trace.points.is_empty());
        prop_assert!(trace.points.windows(2).all(|w| w[0].iteration < w[1].iteration));
        prop_assert!(trace.points.windows(2).all(|w| w[0].n_known <= w[1].n_known));
    }
}

#[test]
fn identical_configs_give_identical_traces() {
    let world = small_world(3);
    for kind in StrategyKind::ALL {
        for eq in [false, true] {
            let cfg = cheap(kind, eq, 11);
            let a = simulation::run(&world, &cfg).unwrap();
            let b = simulation::run(&world, &cfg).unwrap();
            assert_eq!(a, b, "{}", kind.name());
        }
    }
}

#[test]
fn strategies_share_the_initial_known_set() {
    let world = small_world(5);
    let init = |kind| {
        Simulator::new(&world, cheap(kind, false, 2))
            .unwrap()
            .state()
            .known
            .clone()
    };
    let reference = init(StrategyKind::Random);
    for kind in StrategyKind::ALL {
        assert_eq!(init(kind), reference, "{}", kind.name());
    }
    let other_seed = Simulator::new(&world, cheap(StrategyKind::Random, false, 3)).unwrap();
    assert_ne!(other_seed.state().known, reference);
}

#[test]
fn original_mode_runs_until_x_is_empty() {
    let world = small_world(8);
    for kind in [StrategyKind::Random, StrategyKind::Popularity, StrategyKind::Knn] {
        let trace = simulation::run(&world, &cheap(kind, false, 0)).unwrap();
        assert_eq!(trace.last().unwrap().n_known, world.train.len(), "{}", kind.name());
    }
}

#[test]
fn equal_ratio_keeps_group_acquisitions_balanced() {
    let world = small_world(9);
    let cfg = cheap(StrategyKind::Random, true, 4);
    let sim = Simulator::new(&world, cfg).unwrap();
    let mut per_sweep = Vec::new();
    sim.run_with(|rec| {
        let p = rec.kept.iter().filter(|x| world.groups.get(x.user) == Some(Group::Protected)).count();
        per_sweep.push((p, rec.kept.len() - p));
    })
    .unwrap();
    assert!(!per_sweep.is_empty());
    assert!(per_sweep.iter().all(|&(p, u)| p == u), "{per_sweep:?}");
}

#[test]
fn max_iterations_caps_the_run() {
    let world = small_world(1);
    let cfg = SimulationConfig {
        max_iterations: Some(2),
        ..cheap(StrategyKind::Variance, false, 0)
    };
    let trace = simulation::run(&world, &cfg).unwrap();
    let its: Vec<usize> = trace.points.iter().map(|p| p.iteration).collect();
    assert_eq!(its, vec![0, 1, 2]);
}

#[test]
fn eval_every_thins_the_trace_but_keeps_the_end() {
    let world = small_world(1);
    let cfg = SimulationConfig {
        eval_every: 3,
        ..cheap(StrategyKind::Random, false, 0)
    };
    let trace = simulation::run(&world, &cfg).unwrap();
    let last = trace.last().unwrap().iteration;
    for p in &trace.points {
        assert!(p.iteration % 3 == 0 || p.iteration == last);
    }
    let acquired: usize = trace.points.iter().map(|p| p.acq_protected + p.acq_unprotected).sum();
    assert_eq!(trace.points[0].n_known + acquired, trace.last().unwrap().n_known);
}

/// Users rate items 0..3 along a rank-one pattern. Nobody has rated item 5
/// yet; every user loves it, and half of those ratings are held out for
/// validation. Item 4's candidate ratings are noise. Greedy Extend should
/// rank item 5 first, with a positive score.
#[test]
fn greedy_extend_prefers_informative_ratings() {
    let taste: [f64; 12] = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -1.0];
    let appeal: [f64; 4] = [1.0, -1.0, 0.8, -0.8];
    let mut known = RatingSet::new();
    let mut val = RatingSet::new();
    let mut candidate = RatingSet::new();
    for (u, t) in taste.iter().enumerate() {
        let u = u as u32;
        for (i, a) in appeal.iter().enumerate() {
            let x = Interaction::new(u, i as u32, 3.0 + 1.5 * t * a, 0);
            if (u as usize + i).is_multiple_of(4) {
                val.insert(x).unwrap();
            } else {
                known.insert(x).unwrap();
            }
        }
        candidate
            .insert(Interaction::new(u, 4, if u.is_multiple_of(2) { 5.0 } else { 1.0 }, 0))
            .unwrap();
        let loved = Interaction::new(u, 5, 5.0, 0);
        if u.is_multiple_of(2) {
            val.insert(loved).unwrap();
        } else {
            candidate.insert(loved).unwrap();
        }
    }
    let hp = MfHyperParams {
        n_factors: 2,
        n_epochs: 60,
        learning_rate: 0.05,
        regularization: 0.02,
        ..Default::default()
    };
    let items = [ItemId(4), ItemId(5)];
    for seed in 0..8 {
        let hp = MfHyperParams { seed, ..hp };
        let scored = strategies::greedy_extend_scores(&known, &candidate, &items, &val, &hp).unwrap();
        assert_eq!(scored.item_vec()[0], ItemId(5), "seed {seed}: {scored:?}");
        assert!(scored.0[0].1 > 0.0, "seed {seed}: {scored:?}");
    }
}

#[test]
fn greedy_extend_scores_empty_extensions_as_zero() {
    let known = RatingSet::from_interactions([Interaction::new(0, 0, 4.0, 0), Interaction::new(1, 1, 2.0, 0)]).unwrap();
    let val = RatingSet::from_interactions([Interaction::new(0, 1, 3.0, 0)]).unwrap();
    let candidate = RatingSet::from_interactions([Interaction::new(0, 1, 3.0, 0)]).unwrap();
    // The only candidate rating of item 1 is in the validation set.
    let scored = strategies::greedy_extend_scores(&known, &candidate, &[ItemId(1)], &val, &MfHyperParams::default()).unwrap();
    assert_eq!(scored.0, vec![(ItemId(1), 0.0)]);
}

#[test]
fn simulator_rejects_worlds_missing_a_group_in_test() {
    let train = RatingSet::from_interactions([Interaction::new(0, 0, 4.0, 0), Interaction::new(1, 0, 2.0, 0)]).unwrap();
    let test = RatingSet::from_interactions([Interaction::new(0, 1, 4.0, 0)]).unwrap();
    let groups: GroupMap = [(UserId(0), Group::Protected), (UserId(1), Group::Unprotected)].into_iter().collect();
    let world = World { train, test, groups };
    assert!(Simulator::new(&world, SimulationConfig::default()).is_err());
}
