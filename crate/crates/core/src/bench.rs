//! Robust vs deterministic vs sampling comparison: solution generation, paired Monte-Carlo
//! evaluation, histograms and reports.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use crate::Instant;

use crate::adversary::{mixture_sets, AdversaryOptions, UncertaintySet};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::objective::{eval_deterministic, CaptureObjective, DeterministicObjective, MixedObjective, WorstCaseObjective};
use crate::outer_approx::{outer_approximation, OaOptions, ZoneGrouping};
use crate::par;
use crate::sampling::{derive_seed, sample_rng, sample_utilities};
use crate::solvers::{ggx, SolverOptions};

pub const DEFAULT_BINS: usize = 40;

const SA_CANDIDATE_TAG: u64 = 1;
const SA_SCORE_TAG: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Approach {
    Ro,
    Det1,
    Det2,
    Sa,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::Ro, Approach::Det1, Approach::Det2, Approach::Sa];

    pub fn name(self) -> &'static str {
        match self {
            Approach::Ro => "RO",
            Approach::Det1 => "DET1",
            Approach::Det2 => "DET2",
            Approach::Sa => "SA",
        }
    }
}

impl fmt::Display for Approach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Approach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Approach::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown approach '{s}' (expected RO, DET1, DET2 or SA)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverChoice {
    Auto,
    Ggx,
    Oa,
}

impl SolverChoice {
    /// Outer approximation for MNL, GGX otherwise.
    pub fn resolve(self, instance: &Instance) -> SolverChoice {
        match self {
            SolverChoice::Auto if instance.model.is_mnl() => SolverChoice::Oa,
            SolverChoice::Auto => SolverChoice::Ggx,
            other => other,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SolverChoice::Auto => "auto",
            SolverChoice::Ggx => "ggx",
            SolverChoice::Oa => "oa",
        }
    }
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(SolverChoice::Auto),
            "ggx" => Ok(SolverChoice::Ggx),
            "oa" => Ok(SolverChoice::Oa),
            _ => Err(Error::InvalidArgument(format!("unknown solver '{s}' (expected auto, ggx or oa)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproachConfig {
    pub approach: Approach,
    pub sa_candidate_samples: usize,
    pub sa_worstcase_samples: usize,
    pub eval_samples: usize,
    pub epsilon: f64,
    pub seed: u64,
    pub solver: SolverChoice,
    pub adversary: AdversaryOptions,
    pub ggx: SolverOptions,
    pub oa: OaOptions,
}

impl ApproachConfig {
    pub fn new(approach: Approach, epsilon: f64, seed: u64) -> Self {
        ApproachConfig {
            approach,
            sa_candidate_samples: 10,
            sa_worstcase_samples: 1000,
            eval_samples: 2000,
            epsilon,
            seed,
            // exact outer approximation of the robust problem is far slower at experiment sizes
            solver: SolverChoice::Ggx,
            adversary: AdversaryOptions::default(),
            ggx: SolverOptions::default(),
            oa: OaOptions::default(),
        }
    }

    pub fn with_approach(&self, approach: Approach) -> Self {
        ApproachConfig { approach, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.sa_candidate_samples == 0 || self.sa_worstcase_samples == 0 || self.eval_samples == 0 {
            return Err(Error::InvalidArgument("sample counts must be at least 1".into()));
        }
        if !(self.epsilon >= 0.0) || !self.epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon {} must be finite and non-negative", self.epsilon)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Solution {
    pub approach: Approach,
    pub x: Vec<f64>,
    /// Value of the criterion the approach optimizes.
    pub value: f64,
    pub solver: SolverChoice,
}

/// Maximizes `objective` with the requested solver; returns the selection and its value.
pub fn maximize<O: CaptureObjective + ?Sized>(
    objective: &O,
    capacity: usize,
    solver: SolverChoice,
    ggx_opts: &SolverOptions,
    oa_opts: &OaOptions,
) -> Result<(Vec<f64>, f64, SolverChoice)> {
    match solver.resolve(objective.instance()) {
        SolverChoice::Oa => {
            let grouping = ZoneGrouping::per_zone(objective.num_zones());
            let report = outer_approximation(objective, capacity, &grouping, oa_opts)?;
            Ok((report.x, report.value, SolverChoice::Oa))
        }
        _ => {
            let report = ggx(objective, capacity, ggx_opts)?;
            Ok((report.x, report.value, SolverChoice::Ggx))
        }
    }
}

/// Builds the approach's solution and times it.
pub fn solve_approach(instance: &Instance, sets: &[UncertaintySet], config: &ApproachConfig) -> Result<(Solution, f64)> {
    config.validate()?;
    let start = Instant::now();
    let c = instance.capacity;
    let run = |obj: &dyn CaptureObjective| maximize(obj, c, config.solver, &config.ggx, &config.oa);
    let (x, value, solver) = match config.approach {
        Approach::Ro => run(&WorstCaseObjective::new(instance, sets, config.adversary)?)?,
        Approach::Det1 => run(&DeterministicObjective::mean_utilities(instance))?,
        Approach::Det2 => run(&MixedObjective::new(instance))?,
        Approach::Sa => sample_average(instance, sets, config)?,
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok((Solution { approach: config.approach, x, value, solver }, seconds))
}

/// Solves the deterministic problem at sampled utilities and keeps the candidate with the best
/// sampled worst case.
fn sample_average(
    instance: &Instance,
    sets: &[UncertaintySet],
    config: &ApproachConfig,
) -> Result<(Vec<f64>, f64, SolverChoice)> {
    let candidate_seed = derive_seed(config.seed, SA_CANDIDATE_TAG);
    let mut best: Option<(Vec<f64>, f64, SolverChoice)> = None;
    for k in 0..config.sa_candidate_samples {
        let utilities = sample_utilities(instance, sets, &mut sample_rng(candidate_seed, k as u64));
        let objective = DeterministicObjective::new(instance, utilities)?;
        let (x, _, solver) = maximize(&objective, instance.capacity, config.solver, &config.ggx, &config.oa)?;
        let score_seed = derive_seed(derive_seed(config.seed, SA_SCORE_TAG), k as u64);
        let scores = par::map_indices(config.sa_worstcase_samples, |s| {
            let utilities = sample_utilities(instance, sets, &mut sample_rng(score_seed, s as u64));
            eval_deterministic(instance, &utilities, &x)
        });
        let mut score = f64::INFINITY;
        for value in scores {
            score = score.min(value?);
        }
        if best.as_ref().is_none_or(|b| score > b.1) {
            best = Some((x, score, solver));
        }
    }
    Ok(best.expect("at least one candidate"))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ApproachReport {
    pub approach: Approach,
    /// Objective values in draw order.
    pub samples: Vec<f64>,
    pub sorted: Vec<f64>,
    pub histogram: Vec<usize>,
    pub worst: f64,
    pub best: f64,
    pub mean: f64,
    pub variance: f64,
    pub seconds: f64,
    /// Percentile rank of RO's worst sampled value within this approach's samples.
    pub percentile_rank_of_ro_worst: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvaluationReport {
    pub epsilon: f64,
    pub seed: u64,
    pub eval_samples: usize,
    pub bin_edges: Vec<f64>,
    pub approaches: Vec<ApproachReport>,
}

impl EvaluationReport {
    pub fn get(&self, approach: Approach) -> Option<&ApproachReport> {
        self.approaches.iter().find(|a| a.approach == approach)
    }

    pub fn write_samples_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["approach", "sample_index", "objective"])?;
        for a in &self.approaches {
            for (i, v) in a.samples.iter().enumerate() {
                w.write_record([a.approach.name(), &i.to_string(), &v.to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["approach", "worst", "best", "mean", "var", "time_s", "percentile_rank_of_RO_worst"])?;
        for a in &self.approaches {
            w.write_record([
                a.approach.name().to_string(),
                a.worst.to_string(),
                a.best.to_string(),
                a.mean.to_string(),
                a.variance.to_string(),
                a.seconds.to_string(),
                a.percentile_rank_of_ro_worst.map_or(String::new(), |p| p.to_string()),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_histogram_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["approach", "bin", "lower", "upper", "count"])?;
        for a in &self.approaches {
            for (b, count) in a.histogram.iter().enumerate() {
                w.write_record([
                    a.approach.name().to_string(),
                    b.to_string(),
                    self.bin_edges[b].to_string(),
                    self.bin_edges[b + 1].to_string(),
                    count.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// `100 · |{s ≤ value}| / |samples|`.
pub fn percentile_rank(value: f64, samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("percentile rank of an empty sample".into()));
    }
    let below = samples.iter().filter(|&&s| s <= value).count();
    Ok(100.0 * below as f64 / samples.len() as f64)
}

/// Equal-width bin edges over `[lo, hi]`.
pub fn bin_edges(lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let width = (hi - lo) / bins as f64;
    (0..=bins).map(|b| if b == bins { hi } else { lo + b as f64 * width }).collect()
}

pub fn histogram(values: &[f64], edges: &[f64]) -> Vec<usize> {
    let bins = edges.len() - 1;
    let (lo, hi) = (edges[0], edges[bins]);
    let mut counts = vec![0; bins];
    for &v in values {
        let b = if hi > lo { (((v - lo) / (hi - lo)) * bins as f64).floor() as isize } else { 0 };
        counts[b.clamp(0, bins as isize - 1) as usize] += 1;
    }
    counts
}

/// Mean and unbiased variance.
pub fn mean_variance(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 { values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var)
}

/// Scores every solution on the same `eval_samples` draws.
pub fn evaluate(
    instance: &Instance,
    sets: &[UncertaintySet],
    solutions: &[(Solution, f64)],
    eval_samples: usize,
    seed: u64,
) -> Result<EvaluationReport> {
    evaluate_with_bins(instance, sets, solutions, eval_samples, seed, DEFAULT_BINS)
}

pub fn evaluate_with_bins(
    instance: &Instance,
    sets: &[UncertaintySet],
    solutions: &[(Solution, f64)],
    eval_samples: usize,
    seed: u64,
    bins: usize,
) -> Result<EvaluationReport> {
    if eval_samples == 0 || bins == 0 {
        return Err(Error::InvalidArgument("eval_samples and bins must be at least 1".into()));
    }
    for (s, _) in solutions {
        let open = s.x.iter().filter(|&&t| t > 0.5).count();
        if s.x.len() != instance.m || open != instance.capacity {
            return Err(Error::InvalidArgument(format!("{} solution is not feasible", s.approach)));
        }
    }
    let rows = par::map_indices(eval_samples, |s| {
        let utilities = sample_utilities(instance, sets, &mut sample_rng(seed, s as u64));
        solutions.iter().map(|(sol, _)| eval_deterministic(instance, &utilities, &sol.x)).collect::<Result<Vec<f64>>>()
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    let columns: Vec<Vec<f64>> = (0..solutions.len()).map(|k| rows.iter().map(|r| r[k]).collect()).collect();
    let lo = columns.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = columns.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let edges = bin_edges(lo, hi, bins);
    let ro_worst = solutions
        .iter()
        .position(|(s, _)| s.approach == Approach::Ro)
        .map(|k| columns[k].iter().copied().fold(f64::INFINITY, f64::min));

    let approaches = solutions
        .iter()
        .zip(columns)
        .map(|((sol, seconds), samples)| {
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            let (mean, variance) = mean_variance(&samples);
            let percentile = ro_worst.map(|w| percentile_rank(w, &samples)).transpose()?;
            Ok(ApproachReport {
                approach: sol.approach,
                histogram: histogram(&samples, &edges),
                worst: sorted[0],
                best: sorted[sorted.len() - 1],
                mean,
                variance,
                seconds: *seconds,
                percentile_rank_of_ro_worst: percentile,
                samples,
                sorted,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EvaluationReport { epsilon: sets_epsilon(sets), seed, eval_samples, bin_edges: edges, approaches })
}

fn sets_epsilon(sets: &[UncertaintySet]) -> f64 {
    match sets.first() {
        Some(UncertaintySet::Mixture(s)) => s.epsilon,
        _ => f64::NAN,
    }
}

/// Solves every approach at `config.epsilon` and evaluates them on shared draws.
pub fn compare(instance: &Instance, approaches: &[Approach], config: &ApproachConfig) -> Result<(Vec<Solution>, EvaluationReport)> {
    config.validate()?;
    let sets = mixture_sets(instance.num_zones(), config.epsilon)?;
    let solved = approaches
        .iter()
        .map(|&a| solve_approach(instance, &sets, &config.with_approach(a)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(instance, &sets, &solved, config.eval_samples, derive_seed(config.seed, 0))?;
    Ok((solved.into_iter().map(|(s, _)| s).collect(), report))
}
