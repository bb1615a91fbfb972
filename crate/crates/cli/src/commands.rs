use std::fs::{self, File, OpenOptions};
use std::io::{BufWriter, Write};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use robust_capture::adversary::{mixture_sets, AdversaryOptions};
use robust_capture::bench::{evaluate_with_bins, solve_approach, Approach, ApproachConfig, SolverChoice};
use robust_capture::instance::{generate as generate_instance, GeneratedModel, GeneratorConfig, Instance};
use robust_capture::objective::{
    eval_worst_case, support, CaptureObjective, DeterministicObjective, MixedObjective, WorstCaseObjective,
};
use robust_capture::outer_approx::{outer_approximation, OaOptions, ZoneGrouping};
use robust_capture::sampling::derive_seed;
use robust_capture::solvers::{ggx, SolverOptions};
use robust_capture::verify::{Suite, VerifyOptions};
use robust_capture::Error;

use crate::{ApproachArg, CompareArgs, GenerateArgs, ModelArg, SamplingArgs, SolveArgs, SolverArg, Tolerances, VerifyArgs};

pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, message: message.into() }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidArgument(_)
            | Error::Validation(_)
            | Error::Parse(_)
            | Error::Dimension { .. }
            | Error::UnsupportedModel(_)
            | Error::EnumerationBudget { .. } => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { code: 1, message: e.to_string() }
    }
}

type Outcome = Result<ExitCode, Failure>;

impl From<ApproachArg> for Approach {
    fn from(a: ApproachArg) -> Self {
        match a {
            ApproachArg::Ro => Approach::Ro,
            ApproachArg::Det1 => Approach::Det1,
            ApproachArg::Det2 => Approach::Det2,
            ApproachArg::Sa => Approach::Sa,
        }
    }
}

impl From<SolverArg> for SolverChoice {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Auto => SolverChoice::Auto,
            SolverArg::Ggx => SolverChoice::Ggx,
            SolverArg::Oa => SolverChoice::Oa,
        }
    }
}

fn model_name(instance: &Instance) -> &'static str {
    if instance.model.is_mnl() {
        "MNL"
    } else {
        "nested logit"
    }
}

fn load(path: &Path) -> Result<Instance, Failure> {
    Instance::load(path).map_err(|e| usage(format!("cannot load instance {}: {e}", path.display())))
}

fn config(approach: Approach, epsilon: f64, solver: SolverArg, sampling: &SamplingArgs, tol: &Tolerances) -> Result<ApproachConfig, Failure> {
    if let Some(t) = tol.time_limit {
        if !(t > 0.0 && t.is_finite()) {
            return Err(usage("--time-limit must be a positive number of seconds"));
        }
    }
    Ok(ApproachConfig {
        sa_candidate_samples: sampling.sa_candidates,
        sa_worstcase_samples: sampling.sa_worstcase_samples,
        solver: solver.into(),
        adversary: AdversaryOptions { tol: tol.adversary_tol, max_iter: tol.adversary_max_iter },
        ggx: SolverOptions { accept_tol: tol.accept_tol, ..SolverOptions::default() },
        oa: OaOptions {
            eps_stop: tol.eps_stop,
            time_limit: tol.time_limit.map(Duration::from_secs_f64),
            ..OaOptions::default()
        },
        ..ApproachConfig::new(approach, epsilon, sampling.seed)
    })
}

fn one_based(x: &[f64]) -> String {
    support(x).iter().map(|j| (j + 1).to_string()).collect::<Vec<_>>().join(" ")
}

pub fn generate(args: GenerateArgs) -> Outcome {
    let model = match args.model {
        ModelArg::Mnl if args.nests.is_some() || args.mu.is_some() => {
            return Err(usage("--nests and --mu need --model nested"));
        }
        ModelArg::Mnl => GeneratedModel::Mnl,
        ModelArg::Nested => {
            let mu = match (args.mu, args.nests) {
                (Some(mu), Some(n)) if mu.len() != n => {
                    return Err(usage(format!("--mu has {} values but --nests is {n}", mu.len())));
                }
                (Some(mu), _) => mu,
                (None, n) => (0..n.unwrap_or(5)).map(|i| (11 + i) as f64 / 10.0).collect(),
            };
            GeneratedModel::Nested { mu }
        }
    };
    let seed = args.seed.unwrap_or_else(rand::random);
    let instance = generate_instance(&GeneratorConfig {
        num_zones: args.zones,
        m: args.locations,
        capacity: args.capacity,
        num_types: args.types,
        model,
        seed,
        ..GeneratorConfig::default()
    })?;
    instance.save(&args.output)?;
    println!(
        "wrote {}: {} zones, {} locations, capacity {}, {} types, {}",
        args.output.display(),
        instance.num_zones(),
        instance.m,
        instance.capacity,
        instance.num_types(),
        model_name(&instance)
    );
    println!("seed: {seed}");
    Ok(ExitCode::SUCCESS)
}

pub fn solve(args: SolveArgs) -> Outcome {
    let mut instance = load(&args.instance)?;
    if let Some(c) = args.capacity {
        instance = instance.with_capacity(c)?;
    }
    let approach = Approach::from(args.approach);
    let cfg = config(approach, args.epsilon, args.solver, &args.sampling, &args.tolerances)?;
    let sets = mixture_sets(instance.num_zones(), args.epsilon)?;
    let choice = cfg.solver.resolve(&instance);

    println!(
        "instance: {} zones, {} locations, capacity {}, {}",
        instance.num_zones(),
        instance.m,
        instance.capacity,
        model_name(&instance)
    );
    println!("approach: {approach}, epsilon {}", args.epsilon);
    match args.solver {
        SolverArg::Auto => println!("solver: {} (auto, {} instance)", choice.name(), model_name(&instance)),
        _ => println!("solver: {}", choice.name()),
    }

    let start = Instant::now();
    let (x, value) = if approach == Approach::Sa {
        let (solution, _) = solve_approach(&instance, &sets, &cfg)?;
        println!(
            "sample average: best of {} scenarios, each scored on {} samples",
            cfg.sa_candidate_samples, cfg.sa_worstcase_samples
        );
        (solution.x, solution.value)
    } else {
        let objective: Box<dyn CaptureObjective + '_> = match approach {
            Approach::Ro => Box::new(WorstCaseObjective::new(&instance, &sets, cfg.adversary)?),
            Approach::Det1 => Box::new(DeterministicObjective::mean_utilities(&instance)),
            _ => Box::new(MixedObjective::new(&instance)),
        };
        match choice {
            SolverChoice::Oa => {
                let grouping = ZoneGrouping::per_zone(instance.num_zones());
                let report = match outer_approximation(&*objective, instance.capacity, &grouping, &cfg.oa) {
                    Err(Error::IterationLimit { iterations, incumbent, value, gap }) => {
                        let locations: Vec<String> = incumbent.iter().map(|j| (j + 1).to_string()).collect();
                        println!("incumbent: {}", locations.join(" "));
                        println!("objective: {value:.9} (gap {gap:.3e})");
                        return Err(Failure {
                            code: 1,
                            message: format!("outer approximation stopped after {iterations} iterations without proving optimality"),
                        });
                    }
                    other => other?,
                };
                println!(
                    "outer approximation: {} iterations, {} cuts, {} master nodes, bound {:.6}, gap {:.2e}",
                    report.iterations,
                    report.cuts,
                    report.master_nodes,
                    report.bound,
                    report.gap()
                );
                (report.x, report.value)
            }
            _ => {
                let report = ggx(&*objective, instance.capacity, &cfg.ggx)?;
                let [g, l, e] = report.phase_values;
                println!("greedy: {g:.6} ({} steps)", report.greedy_iterations);
                println!("local search: {l:.6} ({} accepted moves)", report.local_search_iterations);
                println!("exchange: {e:.6} ({} accepted swaps)", report.exchange_iterations);
                if report.guarantee {
                    println!("greedy value is within 1 - 1/e of the optimum");
                }
                (report.x, report.value)
            }
        }
    };
    let seconds = start.elapsed().as_secs_f64();
    let worst = eval_worst_case(&instance, &sets, &x, &cfg.adversary)?.value;

    let locations = one_based(&x);
    println!("selected: {locations}");
    println!("objective: {value:.9}");
    println!("worst-case capture: {worst:.9}");
    println!("time: {seconds:.3} s");

    if let Some(path) = &args.output {
        let fresh = fs::metadata(path).map_or(true, |m| m.len() == 0);
        let mut out = OpenOptions::new().create(true).append(true).open(path)?;
        if fresh {
            writeln!(out, "{SOLVE_HEADER}")?;
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            approach.name(),
            args.epsilon,
            choice.name(),
            instance.capacity,
            value,
            worst,
            seconds,
            locations
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

pub const SOLVE_HEADER: &str = "approach,epsilon,solver,capacity,objective,worst_case,time_s,locations";

pub fn compare(args: CompareArgs) -> Outcome {
    let instance = load(&args.instance)?;
    if args.approaches.is_empty() {
        return Err(usage("--approaches is empty"));
    }
    fs::create_dir_all(&args.out)?;
    let mut ranks = BufWriter::new(File::create(args.out.join("percentile_ranks.csv"))?);
    writeln!(ranks, "epsilon,approach,percentile_rank_of_RO_worst")?;

    for &eps in &args.epsilon {
        let sets = mixture_sets(instance.num_zones(), eps)?;
        let base = ApproachConfig {
            eval_samples: args.samples,
            ..config(Approach::Ro, eps, args.solver, &args.sampling, &args.tolerances)?
        };
        let solved = args
            .approaches
            .iter()
            .map(|&a| solve_approach(&instance, &sets, &base.with_approach(a.into())))
            .collect::<Result<Vec<_>, _>>()?;
        let report = evaluate_with_bins(&instance, &sets, &solved, args.samples, derive_seed(args.sampling.seed, 0), args.bins)?;

        let dir = args.out.join(format!("eps_{eps}"));
        fs::create_dir_all(&dir)?;
        report.write_samples_csv(File::create(dir.join("samples.csv"))?)?;
        report.write_summary_csv(File::create(dir.join("summary.csv"))?)?;
        report.write_histogram_csv(File::create(dir.join("histogram.csv"))?)?;

        println!("epsilon {eps}: {} samples, written to {}", args.samples, dir.display());
        println!("  {:<5} {:>12} {:>12} {:>12} {:>12} {:>9}  locations", "", "worst", "mean", "best", "variance", "time_s");
        for ((solution, _), a) in solved.iter().zip(&report.approaches) {
            println!(
                "  {:<5} {:>12.4} {:>12.4} {:>12.4} {:>12.4e} {:>9.2}  {}",
                a.approach.name(),
                a.worst,
                a.mean,
                a.best,
                a.variance,
                a.seconds,
                one_based(&solution.x)
            );
            if let Some(p) = a.percentile_rank_of_ro_worst {
                writeln!(ranks, "{eps},{},{p}", a.approach.name())?;
            }
        }
    }
    ranks.flush()?;
    Ok(ExitCode::SUCCESS)
}

pub fn verify(args: VerifyArgs) -> Outcome {
    let suites = if args.suite.is_empty() {
        Suite::ALL.to_vec()
    } else {
        args.suite.iter().map(|s| s.parse::<Suite>()).collect::<Result<Vec<_>, _>>()?
    };
    let opts = VerifyOptions { seed: args.seed, m: args.m, trials: args.trials };
    let mut failed = Vec::new();
    for suite in suites {
        let report = suite.run(&opts)?;
        println!(
            "{:<14} {}  {:>6} checks  {:>4} failures  worst error/tolerance {:.3e}  {:.2} s",
            suite.name(),
            if report.passed() { "PASS" } else { "FAIL" },
            report.checks,
            report.failures,
            report.worst_ratio,
            report.seconds
        );
        for (name, value) in &report.metrics {
            println!("    {name}: {value}");
        }
        for example in report.examples.iter().take(3) {
            println!("    failure: {example}");
        }
        if !report.passed() {
            failed.push(suite.name());
        }
    }
    if failed.is_empty() {
        Ok(ExitCode::SUCCESS)
    } else {
        eprintln!("failed suites: {}", failed.join(", "));
        Ok(ExitCode::from(1))
    }
}
