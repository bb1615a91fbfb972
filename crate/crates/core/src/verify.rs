//! Property suites with independent oracles: finite differences, grids, line searches and
//! enumeration. Used by the `verify` command and the acceptance tests.

use std::f64::consts::E;
use std::fmt;
use std::str::FromStr;
use crate::Instant;

use itertools::Itertools;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{
    self, AdversaryOptions, MixtureUncertaintySet, RectangularUncertaintySet, UncertaintySet,
};
use crate::cpgf::{CpgfModel, NestStructure};
use crate::error::{Error, Result};
use crate::instance::{generate, sample_simplex, GeneratedModel, GeneratorConfig, Instance, Zone};
use crate::objective::{
    eval_worst_case, indicator, worst_case_gradient, CaptureObjective, DeterministicObjective,
    MixedObjective, WorstCaseObjective,
};
use crate::outer_approx::{self, CutFamily, OaOptions, ZoneGrouping};
use crate::sampling::derive_seed;
use crate::solvers::{self, SolverOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Suite {
    Cpgf,
    Adversary,
    Envelope,
    Submodularity,
    Greedy,
    Subproblem,
    Scaling,
    OaExact,
}

impl Suite {
    pub const ALL: [Suite; 8] = [
        Suite::Cpgf,
        Suite::Adversary,
        Suite::Envelope,
        Suite::Submodularity,
        Suite::Greedy,
        Suite::Subproblem,
        Suite::Scaling,
        Suite::OaExact,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Cpgf => "cpgf",
            Suite::Adversary => "adversary",
            Suite::Envelope => "envelope",
            Suite::Submodularity => "submodularity",
            Suite::Greedy => "greedy",
            Suite::Subproblem => "subproblem",
            Suite::Scaling => "scaling",
            Suite::OaExact => "oa-exact",
        }
    }

    pub fn run(self, opts: &VerifyOptions) -> Result<SuiteReport> {
        let start = Instant::now();
        let mut tally = Tally::default();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(opts.seed, self as u64));
        match self {
            Suite::Cpgf => cpgf_identities(&mut rng, opts.trials.unwrap_or(1000), &mut tally)?,
            Suite::Adversary => adversary_oracles(&mut rng, opts.trials.unwrap_or(100), &mut tally)?,
            Suite::Envelope => envelope_gradient(&mut rng, opts.trials.unwrap_or(50), &mut tally)?,
            Suite::Submodularity => {
                monotone_submodular(&mut rng, opts.trials.unwrap_or(10), opts.m.unwrap_or(7), &mut tally)?
            }
            Suite::Greedy => greedy_bound(&mut rng, opts.trials.unwrap_or(20), opts.m, &mut tally)?,
            Suite::Subproblem => subproblem_enumeration(&mut rng, opts.trials.unwrap_or(200), &mut tally)?,
            Suite::Scaling => subproblem_scaling(&mut rng, &mut tally)?,
            Suite::OaExact => oa_exact(&mut rng, opts.trials.unwrap_or(10), opts.m, &mut tally)?,
        }
        Ok(tally.finish(self, start.elapsed().as_secs_f64()))
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let names = Suite::ALL.iter().map(|s| s.name()).join(", ");
                Error::InvalidArgument(format!("unknown suite '{s}' (expected one of {names})"))
            })
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct VerifyOptions {
    pub seed: u64,
    /// Location count for the enumeration suites.
    pub m: Option<usize>,
    /// Trials (or instances) per suite instead of the defaults.
    pub trials: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: usize,
    pub failures: usize,
    /// First few failure descriptions.
    pub examples: Vec<String>,
    /// Largest error relative to its tolerance; below 1 when everything passed.
    pub worst_ratio: f64,
    /// Named measurements worth printing.
    pub metrics: Vec<(String, f64)>,
    pub seconds: f64,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures == 0 && self.checks > 0
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.iter().find(|(n, _)| n == name).map(|(_, v)| *v)
    }
}

const MAX_EXAMPLES: usize = 10;

#[derive(Default)]
struct Tally {
    checks: usize,
    failures: usize,
    examples: Vec<String>,
    worst_ratio: f64,
    metrics: Vec<(String, f64)>,
}

impl Tally {
    /// Records `error ≤ tol`.
    fn within(&mut self, what: &str, error: f64, tol: f64) {
        self.checks += 1;
        let ratio = if tol > 0.0 { error / tol } else if error > 0.0 { f64::INFINITY } else { 0.0 };
        if ratio.is_nan() || ratio > self.worst_ratio {
            self.worst_ratio = if ratio.is_nan() { f64::INFINITY } else { ratio };
        }
        if !(error <= tol) {
            self.fail(format!("{what}: error {error:e} exceeds {tol:e}"));
        }
    }

    fn holds(&mut self, what: impl FnOnce() -> String, ok: bool) {
        self.checks += 1;
        if !ok {
            self.fail(what());
        }
    }

    fn fail(&mut self, message: String) {
        self.failures += 1;
        if self.examples.len() < MAX_EXAMPLES {
            self.examples.push(message);
        }
    }

    fn metric(&mut self, name: &str, value: f64) {
        match self.metrics.iter_mut().find(|(n, _)| n == name) {
            Some((_, v)) => *v = value,
            None => self.metrics.push((name.to_string(), value)),
        }
    }

    fn finish(self, suite: Suite, seconds: f64) -> SuiteReport {
        SuiteReport {
            suite,
            checks: self.checks,
            failures: self.failures,
            examples: self.examples,
            worst_ratio: self.worst_ratio,
            metrics: self.metrics,
            seconds,
        }
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

fn random_nested(rng: &mut ChaCha8Rng, m: usize, mu_max: f64) -> Result<CpgfModel> {
    let nests = rng.gen_range(1..=m.min(3));
    let mu = (0..nests).map(|_| rng.gen_range(1.0..mu_max)).collect();
    Ok(CpgfModel::nested(NestStructure::contiguous(m, mu)?))
}

fn random_binary(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let mut x: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    if x.iter().all(|&v| v == 0.0) {
        x[rng.gen_range(0..m)] = 1.0;
    }
    x
}

fn random_zone(rng: &mut ChaCha8Rng, types: usize, m: usize) -> Zone {
    Zone {
        q: rng.gen_range(1.0..10.0),
        tau_hat: sample_simplex(rng, types),
        type_utilities: (0..types).map(|_| (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect()).collect(),
    }
}

struct Shape {
    zones: usize,
    m: usize,
    types: usize,
    capacity: usize,
    nested: bool,
}

fn random_instance(rng: &mut ChaCha8Rng, shape: Shape) -> Result<Instance> {
    let model = if shape.nested {
        GeneratedModel::Nested { mu: vec![rng.gen_range(1.0..2.0), rng.gen_range(1.0..2.0)] }
    } else {
        GeneratedModel::Mnl
    };
    generate(&GeneratorConfig {
        num_zones: shape.zones,
        m: shape.m,
        capacity: shape.capacity,
        num_types: shape.types,
        model,
        seed: rng.gen(),
        ..GeneratorConfig::default()
    })
}

fn random_sets(rng: &mut ChaCha8Rng, zones: usize) -> Result<Vec<UncertaintySet>> {
    adversary::mixture_sets(zones, rng.gen_range(0.1..0.6))
}

fn tight() -> AdversaryOptions {
    AdversaryOptions { tol: 1e-10, max_iter: 10_000 }
}

/// Golden-section minimum of a unimodal `f` on `[lo, hi]`, endpoints included.
fn golden_min(lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    [(lo, f(lo)), (hi, f(hi)), (c, fc), (d, fd)]
        .into_iter()
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .expect("nonempty")
}

fn cpgf_identities(rng: &mut ChaCha8Rng, trials: usize, tally: &mut Tally) -> Result<()> {
    for nested in [false, true] {
        let label = if nested { "nested" } else { "mnl" };
        for trial in 0..trials {
            let m = rng.gen_range(2..=8);
            let model = if nested { random_nested(rng, m, 3.0)? } else { CpgfModel::mnl(m) };
            let v: Vec<f64> = (0..m).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let mut x: Vec<f64> = (0..m)
                .map(|_| match rng.gen_range(0..5) {
                    0 => 0.0,
                    1 | 2 => 1.0,
                    _ => rng.gen_range(0.05..1.0),
                })
                .collect();
            if x.iter().all(|&t| t == 0.0) {
                x[0] = 1.0;
            }
            let y: Vec<f64> = v.iter().zip(&x).map(|(v, x)| v.exp() * x).collect();
            let g = model.value(&v, &x)?;
            let grad = model.gradient(&v, &x)?;
            let what = |name: &str| format!("{label} trial {trial}: {name}");

            let lambda = rng.gen_range(0.1f64.ln()..10f64.ln()).exp();
            let shifted: Vec<f64> = v.iter().map(|t| t + lambda.ln()).collect();
            let g_shifted = model.value(&shifted, &x)?;
            tally.within(&what("homogeneity"), (g_shifted - lambda * g).abs() / (lambda * g).max(1.0), 1e-9);

            let euler: f64 = y.iter().zip(&grad).map(|(y, d)| y * d).sum();
            tally.within(&what("Euler identity"), rel(euler, g), 1e-9);

            let grad_shifted = model.gradient(&shifted, &x)?;
            let drift = grad.iter().zip(&grad_shifted).map(|(a, b)| rel(*b, *a)).fold(0.0, f64::max);
            tally.within(&what("gradient scale invariance"), drift, 1e-9);

            for j in (0..m).filter(|&j| x[j] == 1.0) {
                let mut sum = 0.0;
                let mut scale = 0.0;
                for k in 0..m {
                    let term = y[k] * model.mixed_partial(&v, &x, j, k)?;
                    sum += term;
                    scale += term.abs();
                }
                let error = sum.abs() / scale.max(grad[j]).max(f64::MIN_POSITIVE);
                tally.within(&what("row-sum identity"), error, 1e-8);
            }

            tally.holds(|| what("nonnegative gradient"), grad.iter().all(|&d| d >= 0.0));
            let mut off_diagonal_ok = true;
            for j in 0..m {
                for k in (0..m).filter(|&k| k != j) {
                    off_diagonal_ok &= model.mixed_partial(&v, &x, j, k)? <= 0.0;
                }
            }
            tally.holds(|| what("nonpositive mixed partials"), off_diagonal_ok);

            let probs = model.choice_probabilities(&v, &x)?;
            let total = probs.locations.iter().sum::<f64>() + probs.competitor;
            tally.within(&what("probabilities sum to one"), (total - 1.0).abs(), 1e-12);

            if nested {
                let ones = match model.kind() {
                    crate::cpgf::ModelKind::NestedLogit(ns) => {
                        CpgfModel::nested(NestStructure::new(ns.nests().to_vec(), vec![1.0; ns.mu().len()], m)?)
                    }
                    crate::cpgf::ModelKind::Mnl => unreachable!("nested model expected"),
                };
                let mnl = CpgfModel::mnl(m);
                let mut gap = rel(ones.value(&v, &x)?, mnl.value(&v, &x)?);
                for (a, b) in ones.gradient(&v, &x)?.iter().zip(&mnl.gradient(&v, &x)?) {
                    gap = gap.max(rel(*a, *b));
                }
                for j in 0..m {
                    for k in 0..m {
                        gap = gap.max(rel(ones.mixed_partial(&v, &x, j, k)?, mnl.mixed_partial(&v, &x, j, k)?));
                    }
                }
                let (p1, p2) = (ones.choice_probabilities(&v, &x)?, mnl.choice_probabilities(&v, &x)?);
                for (a, b) in p1.locations.iter().zip(&p2.locations) {
                    gap = gap.max((a - b).abs());
                }
                tally.within(&what("unit dissimilarities reduce to MNL"), gap, 1e-10);
            }
        }
    }
    Ok(())
}

fn adversary_oracles(rng: &mut ChaCha8Rng, trials: usize, tally: &mut Tally) -> Result<()> {
    let opts = tight();
    // two types: the feasible proportions form a segment
    for trial in 0..trials {
        let m = rng.gen_range(3..=8);
        let model = if trial % 2 == 0 { CpgfModel::mnl(m) } else { random_nested(rng, m, 2.0)? };
        let zone = random_zone(rng, 2, m);
        let eps = if trial % 4 == 0 { 0.3 } else { rng.gen_range(0.05..0.6) };
        let set = MixtureUncertaintySet::new(eps)?;
        let x = random_binary(rng, m);
        let cert = adversary::solve_adversary(&model, &zone, &set, &x, &opts)?;
        let (lo, hi) = set.bounds(&zone.tau_hat);
        let t_lo = lo[0].max(1.0 - hi[1]);
        let t_hi = hi[0].min(1.0 - lo[1]);
        let phi = |t: f64| model.value(&zone.mixture_utilities(&[t, 1.0 - t]), &x).unwrap_or(f64::NAN);
        let (_, oracle) = golden_min(t_lo, t_hi, phi);
        tally.within(&format!("two-type trial {trial}: golden-section value"), rel(cert.phi, oracle), 1e-7);
        let eta = cert.eta.as_deref().unwrap_or(&[]);
        tally.holds(|| format!("two-type trial {trial}: feasible minimizer"), set.contains(&zone.tau_hat, eta, 1e-10));
    }

    // three types: refined grid over the 2-simplex
    for trial in 0..trials / 2 {
        let m = rng.gen_range(3..=6);
        let model = if trial % 2 == 0 { CpgfModel::mnl(m) } else { random_nested(rng, m, 2.0)? };
        let zone = random_zone(rng, 3, m);
        let set = MixtureUncertaintySet::new(rng.gen_range(0.05..0.6))?;
        let x = random_binary(rng, m);
        let cert = adversary::solve_adversary(&model, &zone, &set, &x, &opts)?;
        let (lo, hi) = set.bounds(&zone.tau_hat);
        let phi = |a: f64, b: f64| {
            let c = 1.0 - a - b;
            if a < lo[0] || a > hi[0] || b < lo[1] || b > hi[1] || c < lo[2] - 1e-12 || c > hi[2] + 1e-12 {
                return f64::INFINITY;
            }
            model.value(&zone.mixture_utilities(&[a, b, c.max(0.0)]), &x).unwrap_or(f64::NAN)
        };
        let mut best = (zone.tau_hat[0], zone.tau_hat[1], phi(zone.tau_hat[0], zone.tau_hat[1]));
        let mut step = 0.01;
        let (mut a_range, mut b_range) = ((lo[0], hi[0]), (lo[1], hi[1]));
        for _ in 0..5 {
            let steps_a = ((a_range.1 - a_range.0) / step).ceil() as usize;
            let steps_b = ((b_range.1 - b_range.0) / step).ceil() as usize;
            for i in 0..=steps_a {
                let a = (a_range.0 + i as f64 * step).min(a_range.1);
                for k in 0..=steps_b {
                    let b = (b_range.0 + k as f64 * step).min(b_range.1);
                    let value = phi(a, b);
                    if value < best.2 {
                        best = (a, b, value);
                    }
                }
            }
            a_range = ((best.0 - 10.0 * step).max(lo[0]), (best.0 + 10.0 * step).min(hi[0]));
            b_range = ((best.1 - 10.0 * step).max(lo[1]), (best.1 + 10.0 * step).min(hi[1]));
            step /= 10.0;
        }
        tally.within(&format!("three-type trial {trial}: grid value"), rel(cert.phi, best.2), 1e-4);
        tally.holds(
            || format!("three-type trial {trial}: minimizer no worse than grid"),
            cert.phi <= best.2 + 1e-9 * best.2.max(1.0),
        );
    }

    // boxes: coordinatewise line searches against the closed form
    for trial in 0..trials {
        let m = rng.gen_range(2..=8);
        let model = if trial % 2 == 0 { CpgfModel::mnl(m) } else { random_nested(rng, m, 2.0)? };
        let v_lo: Vec<f64> = (0..m).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let v_hi: Vec<f64> = v_lo.iter().map(|v| v + rng.gen_range(0.0..2.0)).collect();
        let x = random_binary(rng, m);
        let set = RectangularUncertaintySet::new(v_lo.clone(), v_hi.clone())?;
        let closed = adversary::solve_adversary_rectangular(&model, &set, &x)?.phi;
        let mut v = v_hi.clone();
        for _ in 0..3 {
            for j in 0..m {
                let (t, _) = golden_min(v_lo[j], v_hi[j], |t| {
                    let mut w = v.clone();
                    w[j] = t;
                    model.value(&w, &x).unwrap_or(f64::NAN)
                });
                v[j] = t;
            }
        }
        let oracle = model.value(&v, &x)?;
        tally.within(&format!("box trial {trial}: coordinate descent"), rel(closed, oracle), 1e-9);
    }
    Ok(())
}

fn envelope_gradient(rng: &mut ChaCha8Rng, points: usize, tally: &mut Tally) -> Result<()> {
    let opts = AdversaryOptions { tol: 1e-11, max_iter: 20_000 };
    let h = 1e-5;
    for point in 0..points {
        let shape = Shape { zones: 4, m: 6, types: 3, capacity: 2, nested: point % 2 == 1 };
        let instance = random_instance(rng, shape)?;
        let sets = random_sets(rng, instance.num_zones())?;
        let x: Vec<f64> = (0..instance.m).map(|_| rng.gen_range(0.2..0.9)).collect();
        let evaluation = eval_worst_case(&instance, &sets, &x, &opts)?;
        let grad = worst_case_gradient(&instance, &x, &evaluation)?;
        let mut error: f64 = 0.0;
        for j in 0..instance.m {
            let mut up = x.clone();
            up[j] += h;
            let mut down = x.clone();
            down[j] -= h;
            let fd = (eval_worst_case(&instance, &sets, &up, &opts)?.value
                - eval_worst_case(&instance, &sets, &down, &opts)?.value)
                / (2.0 * h);
            error = error.max((grad[j] - fd).abs());
        }
        let scale = grad.iter().fold(0.0f64, |a, g| a.max(g.abs())).max(1e-12);
        tally.within(&format!("point {point}: envelope gradient vs central differences"), error / scale, 1e-4);
        tally.holds(|| format!("point {point}: nonnegative gradient"), grad.iter().all(|&g| g >= 0.0));
    }
    Ok(())
}

fn all_subset_values<O: CaptureObjective>(objective: &O, m: usize) -> Result<Vec<f64>> {
    (0..1usize << m)
        .map(|mask| {
            let set: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
            objective.value(&indicator(m, &set))
        })
        .collect()
}

/// Non-increasing additions and the largest diminishing-returns violation over all `(A ⊆ B, j ∉ B)`.
fn exhaustive_properties(f: &[f64], m: usize) -> (usize, f64, f64) {
    let mut flat = 0;
    let mut smallest_increment = f64::INFINITY;
    let mut worst_violation: f64 = 0.0;
    for b in 0..f.len() {
        for j in (0..m).filter(|&j| b >> j & 1 == 0) {
            let gain_b = f[b | 1 << j] - f[b];
            smallest_increment = smallest_increment.min(gain_b);
            if gain_b <= 0.0 {
                flat += 1;
            }
            let mut a = b;
            loop {
                worst_violation = worst_violation.max(gain_b - (f[a | 1 << j] - f[a]));
                if a == 0 {
                    break;
                }
                a = (a - 1) & b;
            }
        }
    }
    (flat, smallest_increment, worst_violation)
}

/// Monotonicity and submodularity of the worst case, plus the fixed-utility controls (`ε = 0`
/// and the type mixture), which are submodular for every GEV model.
fn monotone_submodular(rng: &mut ChaCha8Rng, instances: usize, m: usize, tally: &mut Tally) -> Result<()> {
    if !(1..=16).contains(&m) {
        return Err(Error::InvalidArgument(format!("exhaustive checks need 1 <= m <= 16, got {m}")));
    }
    let mut smallest_increment = f64::INFINITY;
    let mut monotone_failures = 0;
    let mut robust_violations = 0;
    let mut largest_violation: f64 = 0.0;
    for k in 0..instances {
        let nested = k % 2 == 1;
        let label = if nested { "nested" } else { "mnl" };
        let shape = Shape { zones: 5, m, types: rng.gen_range(2..=3), capacity: 1, nested };
        let instance = random_instance(rng, shape)?;
        let sets = random_sets(rng, instance.num_zones())?;
        let robust = all_subset_values(&WorstCaseObjective::new(&instance, &sets, tight())?, m)?;
        let (flat, smallest, violation) = exhaustive_properties(&robust, m);
        smallest_increment = smallest_increment.min(smallest);
        monotone_failures += flat;
        largest_violation = largest_violation.max(violation);
        if violation > 1e-7 {
            robust_violations += 1;
        }
        tally.holds(|| format!("{label} instance {k}: {flat} non-increasing additions"), flat == 0);
        tally.within(&format!("{label} instance {k}: worst-case submodularity"), violation, 1e-7);

        let fixed_sets = adversary::mixture_sets(instance.num_zones(), 0.0)?;
        let fixed = all_subset_values(&WorstCaseObjective::new(&instance, &fixed_sets, tight())?, m)?;
        let (flat, _, violation) = exhaustive_properties(&fixed, m);
        tally.holds(|| format!("{label} instance {k}: {flat} non-increasing additions at zero radius"), flat == 0);
        tally.within(&format!("{label} instance {k}: submodularity at zero radius"), violation, 1e-7);

        let mixed = all_subset_values(&MixedObjective::new(&instance), m)?;
        let (flat, _, violation) = exhaustive_properties(&mixed, m);
        tally.holds(|| format!("{label} instance {k}: {flat} non-increasing mixed additions"), flat == 0);
        tally.within(&format!("{label} instance {k}: mixed submodularity"), violation, 1e-7);
    }
    tally.metric("smallest increment", smallest_increment);
    tally.metric("monotonicity failures", monotone_failures as f64);
    tally.metric("instances violating submodularity", robust_violations as f64);
    tally.metric("largest submodularity violation", largest_violation);
    Ok(())
}

fn greedy_bound(rng: &mut ChaCha8Rng, instances: usize, m: Option<usize>, tally: &mut Tally) -> Result<()> {
    let factor = 1.0 - 1.0 / E;
    let mut worst_ratio = f64::INFINITY;
    for k in 0..instances {
        let m = m.unwrap_or(if k % 2 == 0 { 10 } else { 12 });
        let capacity = if k % 4 < 2 { 3 } else { 4 }.min(m);
        let shape = Shape { zones: 6, m, types: 3, capacity, nested: k % 3 == 2 };
        let instance = random_instance(rng, shape)?;
        let sets = random_sets(rng, instance.num_zones())?;
        let objective = WorstCaseObjective::new(&instance, &sets, AdversaryOptions::default())?;
        let greedy = solvers::greedy(&objective, capacity)?.best_value;
        let (_, opt) = solvers::brute_force(&objective, capacity)?;
        let local = solvers::ggx(&objective, capacity, &SolverOptions::default())?.value;
        worst_ratio = worst_ratio.min(greedy / opt);
        tally.holds(
            || format!("instance {k}: greedy {greedy} below (1 - 1/e) * {opt}"),
            greedy >= factor * opt - 1e-9,
        );
        tally.holds(
            || format!("instance {k}: local search {local} outside [{greedy}, {opt}]"),
            local >= greedy - 1e-9 && local <= opt + 1e-7,
        );
    }
    tally.metric("worst greedy / optimum", worst_ratio);
    Ok(())
}

fn subproblem_enumeration(rng: &mut ChaCha8Rng, cases: usize, tally: &mut Tally) -> Result<()> {
    for case in 0..cases {
        let m = rng.gen_range(4..=12);
        let capacity = rng.gen_range(1..m);
        let delta = rng.gen_range(0..=2 * capacity + 2);
        let ties = rng.gen_bool(0.3);
        let gradient: Vec<f64> = (0..m)
            .map(|_| {
                let g: f64 = rng.gen_range(0.0..1.0);
                if ties { (g * 10.0).round() / 10.0 } else { g }
            })
            .collect();
        let chosen = rand::seq::index::sample(rng, m, capacity).into_vec();
        let x_bar = indicator(m, &chosen);
        let out = solvers::solve_subproblem(&gradient, &x_bar, capacity, delta)?;
        let score = |x: &[f64]| gradient.iter().zip(x).map(|(g, x)| g * x).sum::<f64>();
        let hamming = |x: &[f64]| x.iter().zip(&x_bar).filter(|(a, b)| a != b).count();
        let best = (0..m)
            .combinations(capacity)
            .map(|set| indicator(m, &set))
            .filter(|x| hamming(x) <= delta)
            .map(|x| score(&x))
            .fold(f64::NEG_INFINITY, f64::max);
        let feasible = out.iter().filter(|&&v| v == 1.0).count() == capacity
            && out.iter().all(|&v| v == 0.0 || v == 1.0)
            && hamming(&out) <= delta;
        tally.holds(|| format!("case {case}: infeasible output"), feasible);
        tally.within(&format!("case {case}: Hamming-ball optimum"), (best - score(&out)).max(0.0), 1e-12);
    }
    Ok(())
}

/// Seconds per call, the fastest of several timed batches.
fn time_subproblem(rng: &mut ChaCha8Rng, m: usize, capacity: usize, delta: usize, calls: usize) -> Result<f64> {
    let gradient: Vec<f64> = (0..m).map(|_| rng.gen_range(0.0..1.0)).collect();
    let chosen = rand::seq::index::sample(rng, m, capacity).into_vec();
    let x_bar = indicator(m, &chosen);
    let mut best = f64::INFINITY;
    for _ in 0..9 {
        let start = Instant::now();
        let mut sink = 0.0;
        for _ in 0..calls {
            sink += solvers::solve_subproblem(&gradient, &x_bar, capacity, delta)?[0];
        }
        std::hint::black_box(sink);
        best = best.min(start.elapsed().as_secs_f64() / calls as f64);
    }
    Ok(best)
}

fn subproblem_scaling(rng: &mut ChaCha8Rng, tally: &mut Tally) -> Result<()> {
    let (capacity, delta) = (50, 20);
    // warm up caches and the allocator
    time_subproblem(rng, 1_000, capacity, delta, 200)?;
    let small = time_subproblem(rng, 1_000, capacity, delta, 4_000)?;
    let large = time_subproblem(rng, 10_000, capacity, delta, 400)?;
    let ratio = large / small;
    tally.metric("seconds per call at m = 1000", small);
    tally.metric("seconds per call at m = 10000", large);
    tally.metric("time ratio", ratio);
    tally.holds(|| format!("time ratio {ratio:.2} outside [8, 12]"), (8.0..=12.0).contains(&ratio));
    Ok(())
}

fn oa_exact(rng: &mut ChaCha8Rng, instances: usize, m: Option<usize>, tally: &mut Tally) -> Result<()> {
    let capacity = 5;
    for k in 0..instances {
        let m = m.unwrap_or(12 + k % 4).max(capacity);
        let shape = Shape { zones: 6, m, types: 3, capacity, nested: false };
        let instance = random_instance(rng, shape)?;
        let sets = random_sets(rng, instance.num_zones())?;
        let objective = WorstCaseObjective::new(&instance, &sets, AdversaryOptions::default())?;
        let grouping = ZoneGrouping::per_zone(instance.num_zones());
        let report = outer_approx::outer_approximation(&objective, capacity, &grouping, &OaOptions::default())?;
        let (_, opt) = solvers::brute_force(&objective, capacity)?;
        tally.within(&format!("instance {k} (m = {m}): outer approximation vs enumeration"), (opt - report.value).abs(), 1e-6);
        let monotone = report.bound_history.windows(2).all(|w| w[1] <= w[0]);
        tally.holds(|| format!("instance {k}: master bound increased"), monotone);

        // tangent cuts of the worst case, and both families for fixed utilities, around three
        // selections and checked at random binary points
        let groups = ZoneGrouping::contiguous(instance.num_zones(), 3)?;
        let nominal = DeterministicObjective::mean_utilities(&instance);
        let (mut cuts, mut nominal_cuts) = (Vec::new(), Vec::new());
        for _ in 0..3 {
            let chosen = indicator(m, &rand::seq::index::sample(rng, m, capacity).into_vec());
            cuts.extend(outer_approx::generate_cuts(&objective, &groups, &chosen, CutFamily::Tangent)?.1);
            nominal_cuts.extend(outer_approx::generate_cuts(&nominal, &groups, &chosen, CutFamily::Both)?.1);
        }
        let (mut worst, mut nominal_worst): (f64, f64) = (0.0, 0.0);
        for _ in 0..200 {
            let x: Vec<f64> = (0..m).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
            let group_values = |o: &dyn CaptureObjective| {
                (0..groups.len()).map(|l| outer_approx::delta_l(o, &groups, l, &x)).collect::<Result<Vec<_>>>()
            };
            let deltas = group_values(&objective)?;
            let nominal_deltas = group_values(&nominal)?;
            for cut in &cuts {
                worst = worst.max(deltas[cut.group] - cut.eval(&x));
            }
            for cut in &nominal_cuts {
                nominal_worst = nominal_worst.max(nominal_deltas[cut.group] - cut.eval(&x));
            }
            let total = eval_worst_case(&instance, &sets, &x, &AdversaryOptions::default())?.value;
            tally.within(&format!("instance {k}: group values add up"), rel(deltas.iter().sum(), total), 1e-9);
        }
        tally.within(&format!("instance {k}: {} worst-case cuts overestimate", cuts.len()), worst, 1e-8);
        tally.within(&format!("instance {k}: {} fixed-utility cuts overestimate", nominal_cuts.len()), nominal_worst, 1e-8);
    }
    Ok(())
}
