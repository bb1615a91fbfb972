use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_capture::adversary::{mixture_sets, AdversaryOptions, UncertaintySet};
use robust_capture::cpgf::CpgfModel;
use robust_capture::instance::{generate, GeneratedModel, GeneratorConfig, Instance, Zone};
use robust_capture::objective::{
    eval_deterministic, eval_mixed, eval_worst_case, indicator, worst_case_gradient, CaptureObjective,
    MixedObjective, WorstCaseObjective,
};

fn instance(zones: usize, m: usize, types: usize, nested: bool, seed: u64) -> Instance {
    generate(&GeneratorConfig {
        num_zones: zones,
        m,
        capacity: 1,
        num_types: types,
        model: if nested { GeneratedModel::Nested { mu: vec![1.3, 1.8] } } else { GeneratedModel::Mnl },
        seed,
        ..GeneratorConfig::default()
    })
    .unwrap()
}

fn tight() -> AdversaryOptions {
    AdversaryOptions { tol: 1e-11, max_iter: 20_000 }
}

fn subset_values<O: CaptureObjective>(objective: &O, m: usize) -> Vec<f64> {
    (0..1usize << m)
        .map(|mask| {
            let set: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
            objective.value(&indicator(m, &set)).unwrap()
        })
        .collect()
}

/// Largest `f(B+j) − f(B) − (f(A+j) − f(A))` over `A ⊆ B`, `j ∉ B`, and the smallest increment.
fn diminishing_returns_violation(f: &[f64], m: usize) -> (f64, f64) {
    let (mut worst, mut smallest) = (f64::NEG_INFINITY, f64::INFINITY);
    for b in 0..f.len() {
        for j in (0..m).filter(|&j| b >> j & 1 == 0) {
            let gain_b = f[b | 1 << j] - f[b];
            smallest = smallest.min(gain_b);
            let mut a = b;
            loop {
                worst = worst.max(gain_b - (f[a | 1 << j] - f[a]));
                if a == 0 {
                    break;
                }
                a = (a - 1) & b;
            }
        }
    }
    (worst, smallest)
}

#[test]
fn trivial_values() {
    let zone = Zone { q: 1.0, tau_hat: vec![1.0], type_utilities: vec![vec![0.0]] };
    let inst = Instance::new(vec![zone], 1, CpgfModel::mnl(1)).unwrap();
    assert_eq!(eval_deterministic(&inst, &[vec![0.0]], &[0.0]).unwrap(), 0.0);
    assert!((eval_deterministic(&inst, &[vec![0.0]], &[1.0]).unwrap() - 0.5).abs() < 1e-15);
}

#[test]
fn capture_equals_summed_probabilities() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..200 {
        let inst = instance(rng.gen_range(1..5), rng.gen_range(2..8), 2, k % 2 == 1, rng.gen());
        let utilities: Vec<Vec<f64>> = inst.zones.iter().map(|z| z.mean_utilities()).collect();
        let x: Vec<f64> = (0..inst.m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let value = eval_deterministic(&inst, &utilities, &x).unwrap();
        let summed: f64 = inst
            .zones
            .iter()
            .zip(&utilities)
            .map(|(z, v)| z.q * inst.model.choice_probabilities(v, &x).unwrap().locations.iter().sum::<f64>())
            .sum();
        assert!((value - summed).abs() <= 1e-10 * summed.max(1.0), "{value} vs {summed}");
    }
}

#[test]
fn small_instance_matches_grid_search() {
    let inst = instance(2, 3, 2, false, 21);
    let eps = 0.35;
    let sets = mixture_sets(2, eps).unwrap();
    let x = [1.0, 0.0, 1.0];
    let value = eval_worst_case(&inst, &sets, &x, &AdversaryOptions::default()).unwrap().value;
    let mut oracle = 0.0;
    for zone in &inst.zones {
        let (lo, hi) = (
            (zone.tau_hat[0] - eps).max(0.0).max(1.0 - (zone.tau_hat[1] + eps).min(1.0)),
            (zone.tau_hat[0] + eps).min(1.0).min(1.0 - (zone.tau_hat[1] - eps).max(0.0)),
        );
        let steps = ((hi - lo) / 1e-3).ceil() as usize;
        let phi = (0..=steps)
            .map(|i| (lo + i as f64 * 1e-3).min(hi))
            .map(|t| inst.model.value(&zone.mixture_utilities(&[t, 1.0 - t]), &x).unwrap())
            .fold(f64::INFINITY, f64::min);
        oracle += zone.q * (1.0 - 1.0 / (1.0 + phi));
    }
    assert!((value - oracle).abs() <= 1e-4, "{value} vs {oracle}");
}

#[test]
fn gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for nested in [false, true] {
        let inst = instance(5, 6, 3, nested, rng.gen());
        let sets = mixture_sets(5, 0.4).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.2..0.9)).collect();
        let evaluation = eval_worst_case(&inst, &sets, &x, &tight()).unwrap();
        let grad = worst_case_gradient(&inst, &x, &evaluation).unwrap();
        let h = 1e-5;
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
        for j in 0..6 {
            let (mut up, mut down) = (x.clone(), x.clone());
            up[j] += h;
            down[j] -= h;
            let fd = (eval_worst_case(&inst, &sets, &up, &tight()).unwrap().value
                - eval_worst_case(&inst, &sets, &down, &tight()).unwrap().value)
                / (2.0 * h);
            assert!((grad[j] - fd).abs() <= 1e-4 * scale, "entry {j}: {} vs {fd}", grad[j]);
        }
    }
}

#[test]
fn full_selection_gradient_formula() {
    let inst = instance(1, 4, 2, false, 8);
    let sets = mixture_sets(1, 0.2).unwrap();
    let x = [1.0; 4];
    let evaluation = eval_worst_case(&inst, &sets, &x, &tight()).unwrap();
    let grad = worst_case_gradient(&inst, &x, &evaluation).unwrap();
    let cert = &evaluation.per_zone[0];
    let q = inst.zones[0].q;
    for j in 0..4 {
        let expected = q * cert.v_star[j].exp() / (1.0 + cert.phi).powi(2);
        assert!((grad[j] - expected).abs() < 1e-12 * expected.max(1.0));
    }
    assert!(worst_case_gradient(&inst, &[1.0, 1.0, 1.0, 0.0], &evaluation).is_err());
}

#[test]
fn mixed_objective_special_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let single = instance(4, 5, 1, true, 2);
    let x = [1.0, 0.0, 1.0, 1.0, 0.0];
    let utilities: Vec<Vec<f64>> = single.zones.iter().map(|z| z.type_utilities[0].clone()).collect();
    assert!((eval_mixed(&single, &x).unwrap() - eval_deterministic(&single, &utilities, &x).unwrap()).abs() < 1e-12);

    let mut point_mass = instance(4, 5, 3, false, 3);
    for zone in &mut point_mass.zones {
        zone.tau_hat = vec![0.0, 1.0, 0.0];
    }
    let second: Vec<Vec<f64>> = point_mass.zones.iter().map(|z| z.type_utilities[1].clone()).collect();
    assert!((eval_mixed(&point_mass, &x).unwrap() - eval_deterministic(&point_mass, &second, &x).unwrap()).abs() < 1e-12);

    // a convex combination of per-type values
    for _ in 0..50 {
        let inst = instance(1, 5, 3, rng.gen_bool(0.5), rng.gen());
        let x: Vec<f64> = (0..5).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let per_type: Vec<f64> = (0..3)
            .map(|n| eval_deterministic(&inst, &[inst.zones[0].type_utilities[n].clone()], &x).unwrap())
            .collect();
        let mixed = eval_mixed(&inst, &x).unwrap();
        let lo = per_type.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = per_type.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!(mixed >= lo - 1e-12 && mixed <= hi + 1e-12);
    }
}

#[test]
fn worst_case_is_monotone_on_every_subset() {
    for (k, nested) in [(0, false), (1, true), (2, false), (3, true)] {
        let inst = instance(4, 8, 3, nested, 100 + k);
        let sets = mixture_sets(4, 0.5).unwrap();
        let f = subset_values(&WorstCaseObjective::new(&inst, &sets, tight()).unwrap(), 8);
        let (_, smallest) = diminishing_returns_violation(&f, 8);
        assert!(smallest > 0.0, "instance {k}: increment {smallest}");
    }
}

#[test]
fn fixed_utility_objectives_are_submodular() {
    for (k, nested) in [(0, false), (1, true), (2, true)] {
        let inst = instance(5, 7, 3, nested, 200 + k);
        let singleton = mixture_sets(5, 0.0).unwrap();
        let zero_radius = subset_values(&WorstCaseObjective::new(&inst, &singleton, tight()).unwrap(), 7);
        let mixed = subset_values(&MixedObjective::new(&inst), 7);
        for f in [zero_radius, mixed] {
            let (violation, smallest) = diminishing_returns_violation(&f, 7);
            assert!(violation <= 1e-9 && smallest > 0.0, "instance {k}: {violation} {smallest}");
        }
    }
}

/// The worst case is monotone but not submodular in general: with two types that each value a
/// different site, the adversary can spoil either site alone but not both.
#[test]
fn worst_case_submodularity_counterexample() {
    let zone = Zone { q: 1.0, tau_hat: vec![0.5, 0.5], type_utilities: vec![vec![2.0, -4.0], vec![-4.0, 2.0]] };
    let inst = Instance::new(vec![zone], 1, CpgfModel::mnl(2)).unwrap();
    let sets = mixture_sets(1, 0.5).unwrap();
    let objective = WorstCaseObjective::new(&inst, &sets, tight()).unwrap();
    assert!(!objective.is_submodular());
    let f = subset_values(&objective, 2);
    let (violation, smallest) = diminishing_returns_violation(&f, 2);
    assert!(smallest > 0.0);
    assert!(violation > 0.3, "{f:?}");

    // also on generated instances at the experiment's radius
    let inst = instance(1, 7, 2, false, 7);
    let sets = mixture_sets(1, 0.4).unwrap();
    let f = subset_values(&WorstCaseObjective::new(&inst, &sets, tight()).unwrap(), 7);
    assert!(diminishing_returns_violation(&f, 7).0 > 1e-3);
}

#[test]
fn submodularity_flag() {
    let inst = instance(3, 4, 2, false, 1);
    let robust = mixture_sets(3, 0.2).unwrap();
    let nominal = mixture_sets(3, 0.0).unwrap();
    assert!(!WorstCaseObjective::new(&inst, &robust, tight()).unwrap().is_submodular());
    assert!(WorstCaseObjective::new(&inst, &nominal, tight()).unwrap().is_submodular());
    assert!(MixedObjective::new(&inst).is_submodular());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn worst_case_never_exceeds_the_estimate(seed in any::<u64>(), eps in 0.0f64..1.0, nested in any::<bool>()) {
        let inst = instance(4, 6, 3, nested, seed);
        let sets = mixture_sets(4, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..6).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let evaluation = eval_worst_case(&inst, &sets, &x, &AdversaryOptions::default()).unwrap();
        let means: Vec<Vec<f64>> = inst.zones.iter().map(|z| z.mean_utilities()).collect();
        prop_assert!(evaluation.value <= eval_deterministic(&inst, &means, &x).unwrap() + 1e-12);
        prop_assert!(evaluation.value >= 0.0 && evaluation.value < inst.total_demand());
        let recomputed: f64 = inst.zones.iter().zip(&evaluation.per_zone).map(|(z, c)| z.q - z.q / (1.0 + c.phi)).sum();
        prop_assert!((evaluation.value - recomputed).abs() <= 1e-9);
        if eps == 0.0 {
            prop_assert!((evaluation.value - eval_deterministic(&inst, &means, &x).unwrap()).abs() <= 1e-12);
        }
    }

    #[test]
    fn gradient_is_nonnegative(seed in any::<u64>(), eps in 0.0f64..1.0, nested in any::<bool>()) {
        let inst = instance(3, 6, 3, nested, seed);
        let sets = mixture_sets(3, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let evaluation = eval_worst_case(&inst, &sets, &x, &AdversaryOptions::default()).unwrap();
        prop_assert!(worst_case_gradient(&inst, &x, &evaluation).unwrap().iter().all(|&g| g >= 0.0));
    }

    #[test]
    fn mnl_worst_case_is_concave(seed in any::<u64>(), eps in 0.0f64..1.0) {
        let inst = instance(4, 6, 3, false, seed);
        let sets: Vec<UncertaintySet> = mixture_sets(4, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 2);
        let x1: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let x2: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..1.0)).collect();
        let mid: Vec<f64> = x1.iter().zip(&x2).map(|(a, b)| (a + b) / 2.0).collect();
        let f = |x: &[f64]| eval_worst_case(&inst, &sets, x, &tight()).unwrap().value;
        prop_assert!(f(&mid) >= (f(&x1) + f(&x2)) / 2.0 - 1e-8);
    }
}
