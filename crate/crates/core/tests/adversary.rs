use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use robust_capture::adversary::{
    phi_gradient, project_simplex_box, solve_adversary, solve_adversary_rectangular, AdversaryOptions,
    MixtureUncertaintySet, RectangularUncertaintySet,
};
use robust_capture::cpgf::{CpgfModel, NestStructure};
use robust_capture::instance::{sample_simplex, Zone};

fn tight() -> AdversaryOptions {
    AdversaryOptions { tol: 1e-11, max_iter: 20_000 }
}

fn random_zone(rng: &mut ChaCha8Rng, types: usize, m: usize) -> Zone {
    Zone {
        q: 1.0,
        tau_hat: sample_simplex(rng, types),
        type_utilities: (0..types).map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
    }
}

fn golden(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - r * (b - a);
        let d = a + r * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(lo).min(f(hi)).min(f((a + b) / 2.0))
}

#[test]
fn projection_fixed_points() {
    let tau = [0.2, 0.5, 0.3];
    let y = [0.25, 0.45, 0.3];
    let p = project_simplex_box(&y, &tau, 0.1);
    assert!(p.iter().zip(&y).all(|(a, b)| (a - b).abs() < 1e-12));
    let vertex = project_simplex_box(&[1.0, 0.0, 0.0], &tau, 3.0);
    assert!((vertex[0] - 1.0).abs() < 1e-12 && vertex[1].abs() < 1e-12 && vertex[2].abs() < 1e-12);
}

#[test]
fn projection_matches_refined_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..30 {
        let tau = sample_simplex(&mut rng, 3);
        let eps = rng.gen_range(0.05..0.7);
        let y: Vec<f64> = (0..3).map(|_| rng.gen_range(-0.5..1.5)).collect();
        let set = MixtureUncertaintySet::new(eps).unwrap();
        let (lo, hi) = set.bounds(&tau);
        let dist = |a: f64, b: f64| {
            let c = 1.0 - a - b;
            if a < lo[0] || a > hi[0] || b < lo[1] || b > hi[1] || c < lo[2] - 1e-13 || c > hi[2] + 1e-13 {
                return f64::INFINITY;
            }
            (a - y[0]).powi(2) + (b - y[1]).powi(2) + (c - y[2]).powi(2)
        };
        let mut best = (tau[0], tau[1], dist(tau[0], tau[1]));
        let (mut ra, mut rb, mut step) = ((lo[0], hi[0]), (lo[1], hi[1]), 0.01);
        for _ in 0..9 {
            let (na, nb) = (((ra.1 - ra.0) / step).ceil() as usize, ((rb.1 - rb.0) / step).ceil() as usize);
            for i in 0..=na {
                for k in 0..=nb {
                    let (a, b) = ((ra.0 + i as f64 * step).min(ra.1), (rb.0 + k as f64 * step).min(rb.1));
                    let d = dist(a, b);
                    if d < best.2 {
                        best = (a, b, d);
                    }
                }
            }
            ra = ((best.0 - 10.0 * step).max(lo[0]), (best.0 + 10.0 * step).min(hi[0]));
            rb = ((best.1 - 10.0 * step).max(lo[1]), (best.1 + 10.0 * step).min(hi[1]));
            step /= 10.0;
        }
        let p = project_simplex_box(&y, &tau, eps);
        assert!(set.contains(&tau, &p, 1e-12));
        let oracle = [best.0, best.1, 1.0 - best.0 - best.1];
        let gap = p.iter().zip(oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap <= 1e-8, "projection {p:?} vs grid {oracle:?}");
    }
}

#[test]
fn two_types_match_golden_section() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let set = MixtureUncertaintySet::new(0.3).unwrap();
    for _ in 0..40 {
        let m = rng.gen_range(2..8);
        let model = CpgfModel::mnl(m);
        let zone = random_zone(&mut rng, 2, m);
        let x: Vec<f64> = (0..m).map(|j| if j == 0 || rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        let cert = solve_adversary(&model, &zone, &set, &x, &AdversaryOptions::default()).unwrap();
        let (lo, hi) = set.bounds(&zone.tau_hat);
        let oracle = golden(lo[0].max(1.0 - hi[1]), hi[0].min(1.0 - lo[1]), |t| {
            model.value(&zone.mixture_utilities(&[t, 1.0 - t]), &x).unwrap()
        });
        assert!((cert.phi - oracle).abs() <= 1e-7 * oracle.max(1.0), "{} vs {oracle}", cert.phi);
        assert!(set.contains(&zone.tau_hat, cert.eta.as_ref().unwrap(), 1e-10));
    }
}

#[test]
fn zero_radius_and_empty_selection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = CpgfModel::nested(NestStructure::contiguous(5, vec![1.3, 1.8]).unwrap());
    let zone = random_zone(&mut rng, 4, 5);
    let x = [1.0, 0.0, 1.0, 1.0, 0.0];
    let cert = solve_adversary(&model, &zone, &MixtureUncertaintySet::new(0.0).unwrap(), &x, &AdversaryOptions::default()).unwrap();
    assert_eq!(cert.eta.as_deref(), Some(zone.tau_hat.as_slice()));
    assert!((cert.phi - model.value(&zone.mean_utilities(), &x).unwrap()).abs() < 1e-12);
    let empty = solve_adversary(&model, &zone, &MixtureUncertaintySet::new(0.4).unwrap(), &[0.0; 5], &AdversaryOptions::default()).unwrap();
    assert_eq!((empty.phi, empty.iterations), (0.0, 0));
}

#[test]
fn rectangular_closed_form() {
    let model = CpgfModel::mnl(4);
    let set = RectangularUncertaintySet::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
    assert!((solve_adversary_rectangular(&model, &set, &[1.0; 4]).unwrap().phi - 4.0).abs() < 1e-12);
    let point = RectangularUncertaintySet::new(vec![0.3, -0.2, 1.0, 0.0], vec![0.3, -0.2, 1.0, 0.0]).unwrap();
    let x = [1.0, 1.0, 0.0, 1.0];
    let phi = solve_adversary_rectangular(&model, &point, &x).unwrap().phi;
    assert!((phi - model.value(&point.v_lo, &x).unwrap()).abs() < 1e-15);
    assert!(RectangularUncertaintySet::new(vec![1.0], vec![0.0]).is_err());
}

#[test]
fn rectangular_matches_coordinate_descent() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for trial in 0..30 {
        let m = rng.gen_range(2..7);
        let model = if trial % 2 == 0 {
            CpgfModel::mnl(m)
        } else {
            CpgfModel::nested(NestStructure::contiguous(m, vec![1.5, 2.5]).unwrap())
        };
        let lo: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..1.0)).collect();
        let hi: Vec<f64> = lo.iter().map(|v| v + rng.gen_range(0.0..2.0)).collect();
        let x: Vec<f64> = (0..m).map(|j| if j == 0 || rng.gen_bool(0.6) { 1.0 } else { 0.0 }).collect();
        let mut v = hi.clone();
        for _ in 0..3 {
            for j in 0..m {
                let best_t = {
                    let f = |t: f64| {
                        let mut w = v.clone();
                        w[j] = t;
                        model.value(&w, &x).unwrap()
                    };
                    let grid = (0..=200).map(|i| lo[j] + (hi[j] - lo[j]) * i as f64 / 200.0);
                    grid.min_by(|a, b| f(*a).total_cmp(&f(*b))).unwrap()
                };
                v[j] = best_t;
            }
        }
        let set = RectangularUncertaintySet::new(lo, hi).unwrap();
        let closed = solve_adversary_rectangular(&model, &set, &x).unwrap().phi;
        let oracle = model.value(&v, &x).unwrap();
        assert!((closed - oracle).abs() <= 1e-9 * oracle.max(1.0), "{closed} vs {oracle}");
    }
}

#[test]
fn envelope_gradient_properties() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let m = 5;
    let model = CpgfModel::mnl(m);
    let zone = random_zone(&mut rng, 3, m);
    let set = MixtureUncertaintySet::new(0.4).unwrap();
    let x = [1.0, 0.0, 1.0, 0.0, 1.0];
    let cert = solve_adversary(&model, &zone, &set, &x, &tight()).unwrap();
    let grad = phi_gradient(&model, &cert, &x).unwrap();
    for j in 0..m {
        assert!((grad[j] - cert.v_star[j].exp()).abs() < 1e-12 * grad[j].max(1.0));
    }
    assert!(phi_gradient(&model, &cert, &[1.0; 5]).is_err());

    // central differences at an interior point
    let nested = CpgfModel::nested(NestStructure::contiguous(m, vec![1.2, 2.0]).unwrap());
    let xf = [0.3, 0.7, 0.5, 0.9, 0.2];
    let phi = |x: &[f64]| solve_adversary(&nested, &zone, &set, x, &tight()).unwrap().phi;
    let cert = solve_adversary(&nested, &zone, &set, &xf, &tight()).unwrap();
    let grad = phi_gradient(&nested, &cert, &xf).unwrap();
    let h = 1e-5;
    for j in 0..m {
        let (mut up, mut down) = (xf.to_vec(), xf.to_vec());
        up[j] += h;
        down[j] -= h;
        let fd = (phi(&up) - phi(&down)) / (2.0 * h);
        assert!((grad[j] - fd).abs() <= 1e-4 * grad[j].abs().max(1e-3), "entry {j}: {} vs {fd}", grad[j]);
    }
}

/// Two types that each value a different site: the adversary can spoil either site alone
/// by putting all weight on the other type, but not both at once.
#[test]
fn phi_increments_can_grow_under_the_worst_case() {
    let model = CpgfModel::mnl(2);
    let zone = Zone { q: 1.0, tau_hat: vec![0.5, 0.5], type_utilities: vec![vec![2.0, -4.0], vec![-4.0, 2.0]] };
    let set = MixtureUncertaintySet::new(0.5).unwrap();
    let phi = |x: &[f64]| solve_adversary(&model, &zone, &set, x, &tight()).unwrap().phi;
    let (none, a, b, both) = (phi(&[0.0, 0.0]), phi(&[1.0, 0.0]), phi(&[0.0, 1.0]), phi(&[1.0, 1.0]));
    assert!((a - (-4f64).exp()).abs() < 1e-9 && (b - a).abs() < 1e-9);
    assert!((both - 2.0 * (-1f64).exp()).abs() < 1e-9);
    assert!(both - b > a - none + 0.5, "the second site adds more than the first");
}

fn zone_and_selection() -> impl Strategy<Value = (CpgfModel, Zone, Vec<f64>)> {
    (2usize..7, 1usize..4, any::<u64>(), any::<bool>()).prop_map(|(m, types, seed, nested)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zone = random_zone(&mut rng, types, m);
        let mut x: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
        x[0] = 1.0;
        let model = if nested {
            CpgfModel::nested(NestStructure::contiguous(m, vec![1.5, 1.1]).unwrap())
        } else {
            CpgfModel::mnl(m)
        };
        (model, zone, x)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn convex_in_the_proportions((model, zone, x) in zone_and_selection(), alpha in 0.0f64..1.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = zone.num_types();
        let (e1, e2) = (sample_simplex(&mut rng, n), sample_simplex(&mut rng, n));
        let mix: Vec<f64> = e1.iter().zip(&e2).map(|(a, b)| alpha * a + (1.0 - alpha) * b).collect();
        let g = |eta: &[f64]| model.value(&zone.mixture_utilities(eta), &x).unwrap();
        prop_assert!(g(&mix) <= alpha * g(&e1) + (1.0 - alpha) * g(&e2) + 1e-9);
    }

    #[test]
    fn certificates_are_feasible_and_below_the_estimate((model, zone, x) in zone_and_selection(), eps in 0.0f64..1.0) {
        let set = MixtureUncertaintySet::new(eps).unwrap();
        let cert = solve_adversary(&model, &zone, &set, &x, &AdversaryOptions::default()).unwrap();
        prop_assert!(set.contains(&zone.tau_hat, cert.eta.as_ref().unwrap(), 1e-10));
        prop_assert!(cert.phi >= 0.0);
        prop_assert!(cert.phi <= model.value(&zone.mean_utilities(), &x).unwrap() + 1e-12);
        prop_assert!(cert.kkt_residual <= cert.tol);
    }

    #[test]
    fn larger_sets_give_smaller_minima((model, zone, x) in zone_and_selection(), e1 in 0.0f64..0.6, extra in 0.0f64..0.6) {
        let opts = tight();
        let small = solve_adversary(&model, &zone, &MixtureUncertaintySet::new(e1).unwrap(), &x, &opts).unwrap().phi;
        let large = solve_adversary(&model, &zone, &MixtureUncertaintySet::new(e1 + extra).unwrap(), &x, &opts).unwrap().phi;
        prop_assert!(large <= small + 1e-9 * small.max(1.0));
    }

    #[test]
    fn opening_a_site_strictly_increases_phi((model, zone, x) in zone_and_selection(), eps in 0.0f64..1.0) {
        let set = MixtureUncertaintySet::new(eps).unwrap();
        let base = solve_adversary(&model, &zone, &set, &x, &tight()).unwrap().phi;
        for j in (0..x.len()).filter(|&j| x[j] == 0.0) {
            let mut more = x.clone();
            more[j] = 1.0;
            prop_assert!(solve_adversary(&model, &zone, &set, &more, &tight()).unwrap().phi > base);
        }
    }

    #[test]
    fn projection_is_feasible(y in prop::collection::vec(-2.0f64..3.0, 1..6), eps in 0.0f64..1.5, seed in any::<u64>()) {
        let tau = sample_simplex(&mut ChaCha8Rng::seed_from_u64(seed), y.len());
        let set = MixtureUncertaintySet::new(eps).unwrap();
        prop_assert!(set.contains(&tau, &project_simplex_box(&y, &tau, eps), 1e-12));
    }
}
