use itertools::Itertools;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_capture::adversary::{mixture_sets, AdversaryOptions};
use robust_capture::error::Error;
use robust_capture::instance::{generate, GeneratedModel, GeneratorConfig, Instance};
use robust_capture::objective::{eval_worst_case, indicator, CaptureObjective, DeterministicObjective, WorstCaseObjective};
use robust_capture::outer_approx::{
    delta_l, generate_cuts, make_cut, master_node_bound, outer_approximation, solve_master, Cut, CutFamily,
    OaOptions, ZoneGrouping,
};
use robust_capture::solvers::{brute_force, ggx, SolverOptions};

fn instance(zones: usize, m: usize, capacity: usize, seed: u64) -> Instance {
    generate(&GeneratorConfig { num_zones: zones, m, capacity, num_types: 3, seed, ..GeneratorConfig::default() }).unwrap()
}

fn random_grouping(rng: &mut ChaCha8Rng, zones: usize) -> ZoneGrouping {
    let count = rng.gen_range(1..=zones);
    let mut order: Vec<usize> = (0..zones).collect();
    order.shuffle(rng);
    let mut groups = vec![Vec::new(); count];
    for (k, i) in order.into_iter().enumerate() {
        groups[if k < count { k } else { rng.gen_range(0..count) }].push(i);
    }
    ZoneGrouping::new(groups, zones).unwrap()
}

fn random_binary(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    (0..m).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect()
}

#[test]
fn group_values_add_up() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let inst = instance(9, 8, 3, 4);
    let sets = mixture_sets(9, 0.4).unwrap();
    let objective = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
    for _ in 0..100 {
        let grouping = random_grouping(&mut rng, 9);
        let x = random_binary(&mut rng, 8);
        let total: f64 = (0..grouping.len()).map(|l| delta_l(&objective, &grouping, l, &x).unwrap()).sum();
        let direct = eval_worst_case(&inst, &sets, &x, &AdversaryOptions::default()).unwrap().value;
        assert!((total - direct).abs() <= 1e-9 * direct.max(1.0));
    }
    let single = ZoneGrouping::single(9);
    let x = random_binary(&mut rng, 8);
    assert!((delta_l(&objective, &single, 0, &x).unwrap() - objective.value(&x).unwrap()).abs() < 1e-9);
    assert_eq!(delta_l(&objective, &single, 0, &[0.0; 8]).unwrap(), 0.0);
}

#[test]
fn tangent_cuts_are_tight_nonnegative_and_valid() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = instance(6, 10, 3, 8);
    let sets = mixture_sets(6, 0.5).unwrap();
    let objective = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
    let grouping = ZoneGrouping::contiguous(6, 2).unwrap();
    for _ in 0..5 {
        let x_bar = random_binary(&mut rng, 10);
        for l in 0..2 {
            let cut = make_cut(&objective, &grouping, l, &x_bar).unwrap();
            assert!((cut.eval(&x_bar) - delta_l(&objective, &grouping, l, &x_bar).unwrap()).abs() < 1e-9);
            assert!(cut.a.iter().all(|&a| a >= 0.0));
            for _ in 0..200 {
                let x = random_binary(&mut rng, 10);
                assert!(cut.eval(&x) >= delta_l(&objective, &grouping, l, &x).unwrap() - 1e-8);
            }
        }
    }
}

#[test]
fn submodular_cuts_need_a_submodular_objective() {
    let inst = instance(4, 6, 2, 3);
    let robust = mixture_sets(4, 0.3).unwrap();
    let objective = WorstCaseObjective::new(&inst, &robust, AdversaryOptions::default()).unwrap();
    let grouping = ZoneGrouping::per_zone(4);
    let x = indicator(6, &[0, 3]);
    assert!(matches!(generate_cuts(&objective, &grouping, &x, CutFamily::Submodular), Err(Error::UnsupportedModel(_))));
    assert!(generate_cuts(&objective, &grouping, &x, CutFamily::Tangent).is_ok());

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let nominal = DeterministicObjective::mean_utilities(&inst);
    let (_, cuts) = generate_cuts(&nominal, &grouping, &x, CutFamily::Submodular).unwrap();
    assert_eq!(cuts.len(), 8);
    for _ in 0..200 {
        let y = random_binary(&mut rng, 6);
        for cut in &cuts {
            assert!(cut.eval(&y) >= delta_l(&nominal, &grouping, cut.group, &y).unwrap() - 1e-9);
        }
    }
}

fn random_cuts(rng: &mut ChaCha8Rng, m: usize, groups: usize, per_group: usize) -> Vec<Cut> {
    (0..groups)
        .flat_map(|l| (0..per_group).map(move |_| l))
        .map(|l| Cut { group: l, a: (0..m).map(|_| rng.gen_range(0.0..1.0)).collect(), b: rng.gen_range(0.0..2.0) })
        .collect()
}

fn master_objective(cuts: &[Cut], groups: usize, set: &[usize]) -> f64 {
    let x = indicator(cuts[0].a.len(), set);
    (0..groups)
        .map(|l| cuts.iter().filter(|c| c.group == l).map(|c| c.eval(&x)).fold(f64::INFINITY, f64::min))
        .sum()
}

#[test]
fn master_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (m, c, groups) = (12, 4, 3);
    for _ in 0..10 {
        let cuts = random_cuts(&mut rng, m, groups, 5);
        let master = solve_master(&cuts, c, m, groups).unwrap();
        let best = (0..m).combinations(c).map(|s| master_objective(&cuts, groups, &s)).fold(f64::NEG_INFINITY, f64::max);
        let chosen: Vec<usize> = (0..m).filter(|&j| master.x[j] == 1.0).collect();
        assert_eq!(chosen.len(), c);
        assert!((master.bound - best).abs() < 1e-9, "{} vs {best}", master.bound);
        assert!((master_objective(&cuts, groups, &chosen) - best).abs() < 1e-9);
    }
}

#[test]
fn master_trivial_cases() {
    let cut = Cut { group: 0, a: vec![0.3, 0.9, 0.1, 0.5], b: 1.0 };
    let master = solve_master(std::slice::from_ref(&cut), 2, 4, 1).unwrap();
    assert_eq!(master.x, vec![0.0, 1.0, 0.0, 1.0]);
    assert!((master.bound - 2.4).abs() < 1e-9);
    assert!(solve_master(&[cut], 5, 4, 1).is_err());
}

#[test]
fn node_bounds_dominate_their_subtrees() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (m, c, groups) = (10, 4, 3);
    for _ in 0..10 {
        let cuts = random_cuts(&mut rng, m, groups, 4);
        for _ in 0..20 {
            let fixed: Vec<i8> = (0..m).map(|_| [-1, -1, 0, 1][rng.gen_range(0..4)]).collect();
            let descendants: Vec<Vec<usize>> = (0..m)
                .combinations(c)
                .filter(|s| (0..m).all(|j| fixed[j] == -1 || (fixed[j] == 1) == s.contains(&j)))
                .collect();
            let bound = master_node_bound(&cuts, c, m, groups, &fixed).unwrap();
            match bound {
                None => assert!(descendants.is_empty()),
                Some(bound) => {
                    let best = descendants.iter().map(|s| master_objective(&cuts, groups, s)).fold(f64::NEG_INFINITY, f64::max);
                    assert!(bound >= best - 1e-9, "{bound} < {best}");
                }
            }
        }
    }
}

#[test]
fn zero_radius_matches_the_deterministic_optimum() {
    for seed in 0..4 {
        let inst = instance(20, 12, 4, 10 + seed);
        let sets = mixture_sets(20, 0.0).unwrap();
        let robust = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
        let nominal = DeterministicObjective::mean_utilities(&inst);
        let report = outer_approximation(&robust, 4, &ZoneGrouping::per_zone(20), &OaOptions::default()).unwrap();
        let (_, opt) = brute_force(&nominal, 4).unwrap();
        assert!((report.value - opt).abs() <= 1e-6, "{} vs {opt}", report.value);
        let submodular = OaOptions { cuts: CutFamily::Both, ..OaOptions::default() };
        let report = outer_approximation(&nominal, 4, &ZoneGrouping::per_zone(20), &submodular).unwrap();
        assert!((report.value - opt).abs() <= 1e-6);
    }
}

#[test]
fn robust_optimum_matches_enumeration_at_fifteen_sites() {
    for seed in 0..2 {
        let inst = instance(8, 15, 5, 30 + seed);
        let sets = mixture_sets(8, 0.5).unwrap();
        let objective = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
        let report = outer_approximation(&objective, 5, &ZoneGrouping::per_zone(8), &OaOptions::default()).unwrap();
        let (_, opt) = brute_force(&objective, 5).unwrap();
        let heuristic = ggx(&objective, 5, &SolverOptions::default()).unwrap().value;
        assert!((report.value - opt).abs() <= 1e-6, "{} vs {opt}", report.value);
        assert!(report.value >= heuristic - 1e-9);
        assert!(report.bound_history.windows(2).all(|w| w[1] <= w[0]));
        assert!(report.gap() >= -1e-6 && report.gap() <= 1e-6);
    }
}

#[test]
fn nested_models_are_rejected() {
    let inst = generate(&GeneratorConfig {
        num_zones: 3,
        m: 5,
        capacity: 2,
        model: GeneratedModel::Nested { mu: vec![1.5] },
        ..GeneratorConfig::default()
    })
    .unwrap();
    let sets = mixture_sets(3, 0.2).unwrap();
    let objective = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
    let result = outer_approximation(&objective, 2, &ZoneGrouping::per_zone(3), &OaOptions::default());
    assert!(matches!(result, Err(Error::UnsupportedModel(_))));
}

#[test]
fn iteration_cap_reports_the_incumbent() {
    let inst = instance(30, 20, 5, 77);
    let sets = mixture_sets(30, 0.5).unwrap();
    let objective = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
    let opts = OaOptions { max_iter: 1, ..OaOptions::default() };
    match outer_approximation(&objective, 5, &ZoneGrouping::per_zone(30), &opts) {
        Err(Error::IterationLimit { incumbent, value, gap, .. }) => {
            assert_eq!(incumbent.len(), 5);
            assert!((objective.value(&indicator(20, &incumbent)).unwrap() - value).abs() < 1e-9);
            assert!(gap > 0.0);
        }
        Ok(report) => assert!(report.iterations <= 1),
        Err(e) => panic!("unexpected error {e}"),
    }
}

#[test]
fn time_limit_interrupts_the_master() {
    let inst = instance(40, 24, 5, 3);
    let sets = mixture_sets(40, 0.5).unwrap();
    let objective = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
    let opts = OaOptions { time_limit: Some(std::time::Duration::from_millis(200)), ..OaOptions::default() };
    let start = std::time::Instant::now();
    match outer_approximation(&objective, 5, &ZoneGrouping::per_zone(40), &opts) {
        Err(Error::IterationLimit { incumbent, value, .. }) => {
            assert_eq!(incumbent.len(), 5);
            assert!((objective.value(&indicator(24, &incumbent)).unwrap() - value).abs() < 1e-9);
        }
        Ok(report) => assert!(report.bound <= report.value + 1e-6),
        Err(e) => panic!("unexpected error {e}"),
    }
    // the starting local search is not interruptible, the master is
    assert!(start.elapsed().as_secs_f64() < 30.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn outer_approximation_is_exact_on_small_instances(seed in any::<u64>(), eps in 0.0f64..0.8, c in 1usize..5, groups in 1usize..4) {
        let inst = instance(6, 9, c, seed);
        let sets = mixture_sets(6, eps).unwrap();
        let objective = WorstCaseObjective::new(&inst, &sets, AdversaryOptions::default()).unwrap();
        let grouping = ZoneGrouping::contiguous(6, groups).unwrap();
        let report = outer_approximation(&objective, c, &grouping, &OaOptions::default()).unwrap();
        let (_, opt) = brute_force(&objective, c).unwrap();
        prop_assert!((report.value - opt).abs() <= 1e-6);
        prop_assert!(report.incumbent_history.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(report.bound_history.windows(2).all(|w| w[1] <= w[0]));
    }
}
