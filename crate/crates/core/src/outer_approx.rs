//! Multicut outer approximation for concave (MNL) capture objectives.
//!
//! The objective is split into group terms `δ_l(x) = Σ_{i ∈ D_l} capture_i(x)`, each concave in
//! `x`. The master problem
//!
//! ```text
//! max Σ_l θ_l   s.t.  Σ_j x_j = C,  θ_l ≤ a_tᵀx + b_t for every cut t of group l,  x binary
//! ```
//!
//! overestimates the objective at binary points; cuts at master solutions are added until the
//! master bound meets the best objective value found. The master is solved by best-first
//! branch and bound over its LP relaxation.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use crate::Instant;

use microlp::{ComparisonOp, LinearExpr, OptimizationDirection, Problem, Solution as LpSolution, Variable};

use crate::error::{Error, Result};
use crate::objective::{support, CaptureObjective};
use crate::par;
use crate::solvers::{self, SolverOptions};

/// Partition of the zones into the groups that receive separate cuts.
#[derive(Clone, Debug, PartialEq)]
pub struct ZoneGrouping {
    groups: Vec<Vec<usize>>,
}

impl ZoneGrouping {
    pub fn new(groups: Vec<Vec<usize>>, num_zones: usize) -> Result<Self> {
        let mut seen = vec![false; num_zones];
        for group in &groups {
            for &i in group {
                if i >= num_zones || std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidArgument(format!(
                        "zone {i} is out of range or appears twice in the grouping"
                    )));
                }
            }
        }
        if groups.is_empty() || seen.iter().any(|s| !s) {
            return Err(Error::InvalidArgument("grouping must cover every zone".into()));
        }
        Ok(ZoneGrouping { groups })
    }

    /// One group per zone.
    pub fn per_zone(num_zones: usize) -> Self {
        ZoneGrouping { groups: (0..num_zones).map(|i| vec![i]).collect() }
    }

    pub fn single(num_zones: usize) -> Self {
        ZoneGrouping { groups: vec![(0..num_zones).collect()] }
    }

    /// `count` groups of consecutive zones.
    pub fn contiguous(num_zones: usize, count: usize) -> Result<Self> {
        if count == 0 || count > num_zones {
            return Err(Error::InvalidArgument(format!(
                "cannot split {num_zones} zones into {count} groups"
            )));
        }
        let groups = (0..count)
            .map(|l| (l * num_zones / count..(l + 1) * num_zones / count).collect())
            .collect();
        Ok(ZoneGrouping { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Linear overestimator `θ_group ≤ aᵀx + b`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cut {
    pub group: usize,
    pub a: Vec<f64>,
    pub b: f64,
}

impl Cut {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.b + self.a.iter().zip(x).map(|(a, x)| a * x).sum::<f64>()
    }

    fn eval_set(&self, set: &[usize]) -> f64 {
        self.b + set.iter().map(|&j| self.a[j]).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MasterSolution {
    pub x: Vec<f64>,
    pub theta: Vec<f64>,
    pub bound: f64,
    pub nodes: usize,
    /// False when the search hit its deadline; `bound` is valid either way.
    pub complete: bool,
}

fn require_concave<O: CaptureObjective + ?Sized>(objective: &O) -> Result<()> {
    if objective.is_concave() {
        Ok(())
    } else {
        Err(Error::UnsupportedModel("outer approximation"))
    }
}

/// Worst-case capture of the zones in group `l`.
pub fn delta_l<O: CaptureObjective + ?Sized>(
    objective: &O,
    grouping: &ZoneGrouping,
    l: usize,
    x: &[f64],
) -> Result<f64> {
    require_concave(objective)?;
    grouping.groups[l].iter().try_fold(0.0, |acc, &i| Ok(acc + objective.zone_capture(i, x, None)?))
}

/// Tangent cut of `δ_l` at `x_bar`.
pub fn make_cut<O: CaptureObjective + ?Sized>(
    objective: &O,
    grouping: &ZoneGrouping,
    l: usize,
    x_bar: &[f64],
) -> Result<Cut> {
    require_concave(objective)?;
    let mut a = vec![0.0; objective.num_locations()];
    let mut value = 0.0;
    for &i in &grouping.groups[l] {
        value += objective.zone_capture(i, x_bar, Some(&mut a))?;
    }
    Ok(tangent(l, value, a, x_bar))
}

fn tangent(group: usize, value: f64, a: Vec<f64>, x_bar: &[f64]) -> Cut {
    let ax: f64 = a.iter().zip(x_bar).map(|(a, x)| a * x).sum();
    Cut { group, a, b: value - ax }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MasterOptions {
    pub max_nodes: usize,
    /// Relative optimality tolerance when the master is solved on its own.
    pub rel_gap: f64,
}

impl Default for MasterOptions {
    fn default() -> Self {
        MasterOptions { max_nodes: 1_000_000, rel_gap: 1e-10 }
    }
}

const INTEGRALITY_TOL: f64 = 1e-7;
/// Slack allowed before a cut counts as violated.
const VIOLATION_TOL: f64 = 1e-10;
/// Looser than the LP's own feasibility tolerance so a row is never added twice.
const SEPARATION_TOL: f64 = 1e-9;
const MAX_SEPARATION_ROUNDS: usize = 500;

fn lp_error(e: microlp::Error) -> Error {
    Error::InvalidArgument(format!("master relaxation failed: {e}"))
}

/// Applies `step`, mapping infeasibility to `None`.
fn lp_step(result: std::result::Result<LpSolution, microlp::Error>) -> Result<Option<LpSolution>> {
    match result {
        Ok(lp) => Ok(Some(lp)),
        Err(microlp::Error::Infeasible) => Ok(None),
        Err(e) => Err(lp_error(e)),
    }
}

/// LP relaxation of the master: `x ∈ [0,1]^m`, `Σx = C`, free `θ`, one row per cut.
///
/// Most cuts are slack at any given point, so the LP starts with one row per group and the
/// remaining cuts are separated lazily. Missing rows can only raise the LP value, so every
/// bound stays valid even if separation stops early.
struct Relaxation {
    m: usize,
    capacity: usize,
    num_groups: usize,
    problem: Problem,
    x: Vec<Variable>,
    theta: Vec<Variable>,
    cuts: Vec<Cut>,
    by_group: Vec<Vec<usize>>,
}

impl Relaxation {
    fn new(capacity: usize, m: usize, num_groups: usize) -> Result<Self> {
        if capacity == 0 || capacity > m {
            return Err(Error::InvalidArgument(format!("capacity {capacity} must lie in [1, {m}]")));
        }
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        let x: Vec<Variable> = (0..m).map(|_| problem.add_var(0.0, (0.0, 1.0))).collect();
        let theta: Vec<Variable> =
            (0..num_groups).map(|_| problem.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY))).collect();
        problem.add_constraint(x.iter().map(|&v| (v, 1.0)).collect::<LinearExpr>(), ComparisonOp::Eq, capacity as f64);
        Ok(Relaxation { m, capacity, num_groups, problem, x, theta, cuts: Vec::new(), by_group: vec![Vec::new(); num_groups] })
    }

    fn check(&self, cut: &Cut) -> Result<()> {
        if cut.group >= self.num_groups || cut.a.len() != self.m {
            return Err(Error::InvalidArgument(format!("cut for group {} does not fit the master", cut.group)));
        }
        Ok(())
    }

    fn row(&self, cut: &Cut) -> LinearExpr {
        let mut expr = LinearExpr::empty();
        expr.add(self.theta[cut.group], 1.0);
        for (j, &a) in cut.a.iter().enumerate() {
            if a != 0.0 {
                expr.add(self.x[j], -a);
            }
        }
        expr
    }

    fn add(&mut self, cut: &Cut) -> Result<()> {
        self.check(cut)?;
        if self.by_group[cut.group].is_empty() {
            let row = self.row(cut);
            self.problem.add_constraint(row, ComparisonOp::Le, cut.b);
        }
        self.by_group[cut.group].push(self.cuts.len());
        self.cuts.push(cut.clone());
        Ok(())
    }

    /// Root relaxation with every violated cut added.
    fn solve_root(&self) -> Result<Option<LpSolution>> {
        match lp_step(self.problem.solve())? {
            Some(lp) => self.separate(lp, &vec![-1; self.m]),
            None => Ok(None),
        }
    }

    /// Adds the most violated cut of each group until none is violated.
    fn separate(&self, mut lp: LpSolution, fixed: &[i8]) -> Result<Option<LpSolution>> {
        for _ in 0..MAX_SEPARATION_ROUNDS {
            let x = self.values(&lp);
            let mut violated = Vec::new();
            for (l, members) in self.by_group.iter().enumerate() {
                let theta = *lp.var_value(self.theta[l]);
                let tol = SEPARATION_TOL * (1.0 + theta.abs());
                let worst = members
                    .iter()
                    .map(|&k| (k, theta - self.cuts[k].eval(&x)))
                    .filter(|&(_, excess)| excess > tol)
                    .max_by(|a, b| a.1.total_cmp(&b.1));
                if let Some((k, _)) = worst {
                    violated.push(k);
                }
            }
            if violated.is_empty() {
                break;
            }
            for k in violated {
                let cut = &self.cuts[k];
                lp = match lp.add_constraint(self.row(cut), ComparisonOp::Le, cut.b) {
                    Ok(lp) => lp,
                    Err(microlp::Error::Infeasible) => return self.solve_fixed(fixed),
                    Err(e) => return Err(lp_error(e)),
                };
            }
        }
        Ok(Some(lp))
    }

    /// Fixes `x_j` in `lp`; `fixed` already records the new value.
    fn fix(&self, lp: LpSolution, j: usize, fixed: &[i8]) -> Result<Option<LpSolution>> {
        match lp.fix_var(self.x[j], fixed[j] as f64) {
            Ok(lp) => self.separate(lp, fixed),
            // the warm-started simplex occasionally reports infeasibility when the fixed ones
            // already fill the capacity; feasibility only depends on the counts, so re-solve
            Err(microlp::Error::Infeasible) => self.solve_fixed(fixed),
            Err(e) => Err(lp_error(e)),
        }
    }

    /// The relaxation built from scratch with fixings as variable bounds and every cut.
    fn solve_fixed(&self, fixed: &[i8]) -> Result<Option<LpSolution>> {
        let ones = fixed.iter().filter(|&&f| f == 1).count();
        let zeros = fixed.iter().filter(|&&f| f == 0).count();
        if ones > self.capacity || zeros > self.m - self.capacity {
            return Ok(None);
        }
        // variables are created in the original order, so rows and solution indices carry over
        let mut problem = Problem::new(OptimizationDirection::Maximize);
        for &f in fixed {
            problem.add_var(0.0, if f >= 0 { (f as f64, f as f64) } else { (0.0, 1.0) });
        }
        for _ in 0..self.num_groups {
            problem.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
        }
        problem.add_constraint(self.x.iter().map(|&v| (v, 1.0)).collect::<LinearExpr>(), ComparisonOp::Eq, self.capacity as f64);
        for cut in &self.cuts {
            problem.add_constraint(self.row(cut), ComparisonOp::Le, cut.b);
        }
        lp_step(problem.solve())
    }

    fn values(&self, lp: &LpSolution) -> Vec<f64> {
        self.x.iter().map(|&v| *lp.var_value(v)).collect()
    }

    /// The `C` largest entries of the relaxed `x`, lowest index first among equals.
    fn round(&self, values: &[f64]) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.m).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        order.truncate(self.capacity);
        order.sort_unstable();
        order
    }
}

fn most_fractional(values: &[f64]) -> Option<usize> {
    values
        .iter()
        .enumerate()
        .map(|(j, v)| (j, (v - v.round()).abs()))
        .filter(|&(_, frac)| frac > INTEGRALITY_TOL)
        .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
        .map(|(j, _)| j)
}

/// Open node of the master's branch and bound.
struct Node {
    lp: LpSolution,
    fixed: Vec<i8>,
    bound: f64,
    seq: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    fn cmp(&self, other: &Self) -> Ordering {
        // max-heap on bound, older nodes first among equals
        self.bound.total_cmp(&other.bound).then(other.seq.cmp(&self.seq))
    }
}

/// The master over a cut pool.
struct Master<'c> {
    relax: Relaxation,
    groups: Vec<Vec<&'c Cut>>,
}

impl<'c> Master<'c> {
    fn new(cuts: &'c [Cut], capacity: usize, m: usize, num_groups: usize) -> Result<Self> {
        let mut relax = Relaxation::new(capacity, m, num_groups)?;
        let mut groups = vec![Vec::new(); num_groups];
        for cut in cuts {
            relax.add(cut)?;
            groups[cut.group].push(cut);
        }
        if let Some(l) = groups.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("group {l} has no cut")));
        }
        Ok(Master { relax, groups })
    }

    fn theta(&self, set: &[usize]) -> Vec<f64> {
        self.groups
            .iter()
            .map(|cuts| cuts.iter().map(|c| c.eval_set(set)).fold(f64::INFINITY, f64::min))
            .collect()
    }

    fn relax_with(&self, fixed: &[i8]) -> Result<Option<LpSolution>> {
        let mut lp = self.relax.solve_root()?;
        let mut applied = vec![-1; fixed.len()];
        for (j, &f) in fixed.iter().enumerate() {
            if f >= 0 {
                applied[j] = f;
                lp = match lp {
                    Some(lp) => self.relax.fix(lp, j, &applied)?,
                    None => return Ok(None),
                };
            }
        }
        Ok(lp)
    }

    /// Branch and bound. Nodes whose bound does not exceed `cutoff` are pruned as well, so the
    /// returned bound is an upper bound on the master but not necessarily attained. With
    /// `early`, the search stops at the first selection whose master value beats `cutoff`.
    fn solve(
        &self,
        candidates: &[Vec<usize>],
        opts: &MasterOptions,
        cutoff: f64,
        early: bool,
        deadline: Option<Instant>,
    ) -> Result<MasterSolution> {
        let m = self.relax.m;
        let mut best_set = Vec::new();
        let mut best_value = f64::NEG_INFINITY;
        let consider = |set: Vec<usize>, best_set: &mut Vec<usize>, best_value: &mut f64| {
            let value: f64 = self.theta(&set).iter().sum();
            if value > *best_value || (value == *best_value && set < *best_set) {
                *best_value = value;
                *best_set = set;
            }
        };
        for set in candidates {
            if set.len() == self.relax.capacity && set.iter().all(|&j| j < m) {
                consider(set.clone(), &mut best_set, &mut best_value);
            }
        }

        let mut heap = BinaryHeap::new();
        let mut seq = 0;
        let mut nodes = 0;
        if let Some(lp) = self.relax_with(&vec![-1; m])? {
            nodes += 1;
            heap.push(Node { bound: lp.objective(), lp, fixed: vec![-1; m], seq });
        }
        let mut open_bound = f64::NEG_INFINITY;
        let mut complete = true;
        while let Some(node) = heap.pop() {
            if deadline.is_some_and(|d| Instant::now() > d) {
                open_bound = open_bound.max(node.bound);
                complete = false;
                break;
            }
            let floor = best_value + opts.rel_gap * (1.0 + best_value.abs());
            if node.bound <= floor.max(cutoff) {
                open_bound = open_bound.max(node.bound);
                break;
            }
            let values = self.relax.values(&node.lp);
            consider(self.relax.round(&values), &mut best_set, &mut best_value);
            if early && best_value > cutoff {
                // best-first: no open node exceeds this one
                open_bound = open_bound.max(node.bound);
                break;
            }
            let Some(j) = most_fractional(&values) else { continue };
            for value in [1, 0] {
                if nodes >= opts.max_nodes {
                    return Err(Error::InvalidArgument(format!(
                        "master branch and bound exceeded {} nodes",
                        opts.max_nodes
                    )));
                }
                nodes += 1;
                let mut fixed = node.fixed.clone();
                fixed[j] = value;
                let Some(lp) = self.relax.fix(node.lp.clone(), j, &fixed)? else { continue };
                let bound = lp.objective();
                if bound > (best_value + opts.rel_gap * (1.0 + best_value.abs())).max(cutoff) {
                    seq += 1;
                    heap.push(Node { lp, fixed, bound, seq });
                } else {
                    open_bound = open_bound.max(bound);
                }
            }
        }
        if best_set.is_empty() {
            return Err(Error::InvalidArgument("master problem has no feasible selection".into()));
        }
        let mut x = vec![0.0; m];
        best_set.iter().for_each(|&j| x[j] = 1.0);
        let theta = self.theta(&best_set);
        // pruned nodes may hide values up to their relaxation bounds
        let bound = theta.iter().sum::<f64>().max(open_bound);
        Ok(MasterSolution { x, theta, bound, nodes, complete })
    }
}

/// Exact optimum of the master over binary `x` with `Σx = C`.
pub fn solve_master(cuts: &[Cut], capacity: usize, m: usize, num_groups: usize) -> Result<MasterSolution> {
    solve_master_with(cuts, capacity, m, num_groups, &[], &MasterOptions::default())
}

/// As [`solve_master`], seeded with known selections.
pub fn solve_master_with(
    cuts: &[Cut],
    capacity: usize,
    m: usize,
    num_groups: usize,
    candidates: &[Vec<usize>],
    opts: &MasterOptions,
) -> Result<MasterSolution> {
    Master::new(cuts, capacity, m, num_groups)?.solve(candidates, opts, f64::NEG_INFINITY, false, None)
}

/// Relaxation bound of the master with locations fixed in (`1`) or out (`0`), `-1` free;
/// `None` when the fixings admit no selection.
pub fn master_node_bound(
    cuts: &[Cut],
    capacity: usize,
    m: usize,
    num_groups: usize,
    fixed: &[i8],
) -> Result<Option<f64>> {
    if fixed.len() != m {
        return Err(Error::Dimension { expected: m, got: fixed.len() });
    }
    let master = Master::new(cuts, capacity, m, num_groups)?;
    Ok(master.relax_with(fixed)?.map(|lp| lp.objective()))
}

/// Cuts generated at each master solution.
///
/// Tangent cuts overestimate the concave relaxation everywhere. Submodular cuts are the two
/// classical bounds for a monotone submodular `δ` around a set `S`, with `ρ_j(S) = δ(S ∪ j) − δ(S)`:
/// `δ(S) + Σ_{j∉S} ρ_j(S) x_j` and `δ(S) − Σ_{j∈S} ρ_j(S∖j)(1 − x_j) + Σ_{j∉S} ρ_j(∅) x_j`.
/// They only overestimate at binary points, cost `2m` extra evaluations per zone and need
/// [`CaptureObjective::is_submodular`]: a worst case over a nontrivial set is not submodular in general.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CutFamily {
    Tangent,
    Submodular,
    Both,
}

/// Selection whose cuts initialize the master.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StartPoint {
    Greedy,
    LocalSearch,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OaOptions {
    pub eps_stop: f64,
    /// Cap on the number of selections at which cuts are generated.
    pub max_iter: usize,
    pub start: StartPoint,
    pub cuts: CutFamily,
    pub master: MasterOptions,
    /// Wall-clock budget, checked before each master solve and at every master node.
    pub time_limit: Option<Duration>,
    /// Write one line per generated cut: `iteration,group,b,a_1,...,a_m`.
    pub cut_log: Option<PathBuf>,
}

impl Default for OaOptions {
    fn default() -> Self {
        OaOptions {
            eps_stop: 1e-6,
            max_iter: 500,
            start: StartPoint::LocalSearch,
            cuts: CutFamily::Tangent,
            master: MasterOptions::default(),
            time_limit: None,
            cut_log: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OaReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub bound: f64,
    pub iterations: usize,
    pub cuts: usize,
    pub master_nodes: usize,
    /// Upper bound after each cut round.
    pub bound_history: Vec<f64>,
    /// Best objective value after each cut round.
    pub incumbent_history: Vec<f64>,
    pub seconds: f64,
}

impl OaReport {
    pub fn selected(&self) -> Vec<usize> {
        support(&self.x)
    }

    pub fn gap(&self) -> f64 {
        self.bound - self.value
    }
}

/// Group values and tangent cuts at `x`, zones evaluated in parallel.
fn cuts_at<O: CaptureObjective + ?Sized>(
    objective: &O,
    grouping: &ZoneGrouping,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<Cut>)> {
    let m = objective.num_locations();
    let per_zone = par::map_indices(objective.num_zones(), |i| {
        let mut g = vec![0.0; m];
        objective.zone_capture(i, x, Some(&mut g)).map(|v| (v, g))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(grouping.len());
    let mut cuts = Vec::with_capacity(grouping.len());
    for (l, group) in grouping.groups.iter().enumerate() {
        let mut a = vec![0.0; m];
        let mut value = 0.0;
        for &i in group {
            value += per_zone[i].0;
            a.iter_mut().zip(&per_zone[i].1).for_each(|(s, g)| *s += g);
        }
        values.push(value);
        cuts.push(tangent(l, value, a, x));
    }
    Ok((values, cuts))
}

/// Group values and the two submodular cuts per group at the binary `x`.
fn submodular_cuts_at<O: CaptureObjective + ?Sized>(
    objective: &O,
    grouping: &ZoneGrouping,
    x: &[f64],
) -> Result<(Vec<f64>, Vec<Cut>)> {
    let m = objective.num_locations();
    // per zone: f(S), ρ_j(S) for j ∉ S and ρ_j(S∖j) for j ∈ S, and ρ_j(∅)
    let per_zone = par::map_indices(objective.num_zones(), |i| {
        let base = objective.zone_capture(i, x, None)?;
        let mut flipped = x.to_vec();
        let mut single = vec![0.0; m];
        let mut rho = vec![0.0; m];
        let mut rho_empty = vec![0.0; m];
        for j in 0..m {
            flipped[j] = 1.0 - x[j];
            let v = objective.zone_capture(i, &flipped, None)?;
            flipped[j] = x[j];
            rho[j] = if x[j] > 0.5 { base - v } else { v - base };
            single[j] = 1.0;
            rho_empty[j] = objective.zone_capture(i, &single, None)?;
            single[j] = 0.0;
        }
        Ok((base, rho, rho_empty))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut values = Vec::with_capacity(grouping.len());
    let mut cuts = Vec::with_capacity(2 * grouping.len());
    for (l, group) in grouping.groups.iter().enumerate() {
        let mut value = 0.0;
        let mut rho = vec![0.0; m];
        let mut rho_empty = vec![0.0; m];
        for &i in group {
            value += per_zone[i].0;
            rho.iter_mut().zip(&per_zone[i].1).for_each(|(s, g)| *s += g);
            rho_empty.iter_mut().zip(&per_zone[i].2).for_each(|(s, g)| *s += g);
        }
        // f(T) ≤ f(S) + Σ_{j∈T∖S} ρ_j(S)
        let add: Vec<f64> = (0..m).map(|j| if x[j] > 0.5 { 0.0 } else { rho[j] }).collect();
        cuts.push(Cut { group: l, a: add, b: value });
        // f(T) ≤ f(S) − Σ_{j∈S∖T} ρ_j(S∖j) + Σ_{j∈T∖S} ρ_j(∅)
        let mut b = value;
        let drop: Vec<f64> = (0..m)
            .map(|j| {
                if x[j] > 0.5 {
                    b -= rho[j];
                    rho[j]
                } else {
                    rho_empty[j]
                }
            })
            .collect();
        cuts.push(Cut { group: l, a: drop, b });
        values.push(value);
    }
    Ok((values, cuts))
}

/// Group values `δ_l(x)` and the cuts of `family` at the binary `x`.
pub fn generate_cuts<O: CaptureObjective + ?Sized>(
    objective: &O,
    grouping: &ZoneGrouping,
    x: &[f64],
    family: CutFamily,
) -> Result<(Vec<f64>, Vec<Cut>)> {
    require_concave(objective)?;
    if family != CutFamily::Tangent && !objective.is_submodular() {
        return Err(Error::UnsupportedModel("submodular cuts on a non-submodular objective"));
    }
    match family {
        CutFamily::Tangent => cuts_at(objective, grouping, x),
        CutFamily::Submodular => submodular_cuts_at(objective, grouping, x),
        CutFamily::Both => {
            let (values, mut cuts) = cuts_at(objective, grouping, x)?;
            cuts.extend(submodular_cuts_at(objective, grouping, x)?.1);
            Ok((values, cuts))
        }
    }
}

fn violated_cuts(cuts: Vec<Cut>, theta: &[f64], values: &[f64]) -> Vec<Cut> {
    cuts.into_iter()
        .filter(|c| theta[c.group] > values[c.group] + VIOLATION_TOL * (1.0 + values[c.group].abs()))
        .collect()
}

struct CutLog(Option<BufWriter<File>>);

impl CutLog {
    fn write(&mut self, iteration: usize, cuts: &[Cut]) -> Result<()> {
        if let Some(w) = self.0.as_mut() {
            for cut in cuts {
                write!(w, "{iteration},{},{}", cut.group, cut.b)?;
                for a in &cut.a {
                    write!(w, ",{a}")?;
                }
                writeln!(w)?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

/// Solves `max f(x)` over binary `x` with `Σx = C` to within `eps_stop`, for a concave
/// objective.
pub fn outer_approximation<O: CaptureObjective + ?Sized>(
    objective: &O,
    capacity: usize,
    grouping: &ZoneGrouping,
    opts: &OaOptions,
) -> Result<OaReport> {
    require_concave(objective)?;
    let start = Instant::now();
    let mut log = CutLog(match &opts.cut_log {
        Some(path) => Some(BufWriter::new(File::create(path)?)),
        None => None,
    });
    let m = objective.num_locations();
    let start_x = match opts.start {
        StartPoint::Greedy => solvers::greedy(objective, capacity)?.x,
        StartPoint::LocalSearch => solvers::ggx(objective, capacity, &SolverOptions::default())?.x,
    };
    let gen = |x: &[f64]| generate_cuts(objective, grouping, x, opts.cuts);
    let (values, mut cuts) = gen(&start_x)?;
    log.write(0, &cuts)?;
    let mut best_x = start_x;
    let mut best_value: f64 = values.iter().sum();
    let mut last_master = support(&best_x);

    let mut bound_history = Vec::new();
    let mut incumbent_history = Vec::new();
    let mut master_nodes = 0;
    let mut bound = f64::INFINITY;
    let deadline = opts.time_limit.map(|limit| start + limit);
    let stopped = |iterations: usize, best_x: &[f64], best_value: f64, bound: f64| Error::IterationLimit {
        iterations,
        incumbent: support(best_x),
        value: best_value,
        gap: bound - best_value,
    };
    for iteration in 1..=opts.max_iter {
        if opts.time_limit.is_some_and(|limit| start.elapsed() > limit) {
            return Err(stopped(iteration - 1, &best_x, best_value, bound));
        }
        let cutoff = best_value + opts.eps_stop;
        let candidates = [support(&best_x), last_master.clone()];
        let master = Master::new(&cuts, capacity, m, grouping.len())?.solve(&candidates, &opts.master, cutoff, true, deadline)?;
        master_nodes += master.nodes;
        if !master.complete {
            return Err(stopped(iteration, &best_x, best_value, bound.min(master.bound)));
        }
        if master.bound > cutoff {
            last_master = support(&master.x);
            let (values, new_cuts) = gen(&master.x)?;
            let value: f64 = values.iter().sum();
            if value > best_value {
                best_value = value;
                best_x = master.x.clone();
            }
            let violated = violated_cuts(new_cuts, &master.theta, &values);
            log.write(iteration, &violated)?;
            cuts.extend(violated);
        }
        bound = bound.min(master.bound);
        bound_history.push(bound);
        incumbent_history.push(best_value);
        if bound <= best_value + opts.eps_stop {
            return Ok(OaReport {
                x: best_x,
                value: best_value,
                bound,
                iterations: iteration,
                cuts: cuts.len(),
                master_nodes,
                bound_history,
                incumbent_history,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    Err(stopped(opts.max_iter, &best_x, best_value, bound))
}
