//! GGX local search for any [`CaptureObjective`]: greedy construction, gradient-based local
//! search over a Hamming trust region, then one/two-location exchanges. Also a brute-force
//! enumerator used as a test oracle.
//!
//! Ties are always broken towards the lowest location index, so every routine is
//! deterministic for a given objective.

use std::cmp::Ordering;
use crate::Instant;

use itertools::Itertools;

use crate::error::{Error, Result};
use crate::objective::{indicator, support, CaptureObjective, Memoized};
use crate::par;

/// Largest number of subsets [`brute_force`] will enumerate.
pub const ENUMERATION_BUDGET: u128 = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative improvement required to accept a move: `value' > value + tol (1 + |value|)`.
    pub accept_tol: f64,
    /// Include pair exchanges in the exchange phase.
    pub pair_swaps: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { accept_tol: 1e-9, pair_swaps: true }
    }
}

impl SolverOptions {
    fn improves(&self, candidate: f64, incumbent: f64) -> bool {
        candidate > incumbent + self.accept_tol * (1.0 + incumbent.abs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Greedy,
    LocalSearch,
    Exchange,
    Done,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchState {
    pub x: Vec<f64>,
    pub best_value: f64,
    /// Trust-region radius (Hamming distance) of the local-search phase.
    pub delta: usize,
    pub phase: Phase,
    /// Objective evaluations requested by the phase that produced this state.
    pub evals: usize,
    /// Accepted moves (greedy additions, local-search steps or exchanges).
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    pub x: Vec<f64>,
    pub value: f64,
    pub greedy_iterations: usize,
    pub local_search_iterations: usize,
    pub exchange_iterations: usize,
    /// Objective value after greedy, local search and exchange.
    pub phase_values: [f64; 3],
    pub seconds: f64,
    /// The greedy phase completed on a submodular objective, so `value ≥ (1 − 1/e) OPT`.
    pub guarantee: bool,
}

impl SolveReport {
    pub fn selected(&self) -> Vec<usize> {
        support(&self.x)
    }
}

/// Index of the largest value; the first one wins ties.
fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(k);
        }
    }
    best
}

fn check_capacity(m: usize, capacity: usize) -> Result<()> {
    if capacity == 0 || capacity > m {
        return Err(Error::InvalidArgument(format!("capacity {capacity} must lie in [1, {m}]")));
    }
    Ok(())
}

/// Adds one location at a time, each time the one with the largest objective gain.
pub fn greedy<O: CaptureObjective + ?Sized>(objective: &O, capacity: usize) -> Result<SearchState> {
    let m = objective.num_locations();
    check_capacity(m, capacity)?;
    let mut x = vec![0.0; m];
    let mut value = 0.0;
    let mut evals = 0;
    for _ in 0..capacity {
        let candidates: Vec<usize> = (0..m).filter(|&j| x[j] == 0.0).collect();
        let values = par::map_slice(&candidates, |&j| {
            let mut trial = x.clone();
            trial[j] = 1.0;
            objective.value(&trial)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        evals += values.len();
        let k = argmax(&values).expect("capacity <= m leaves a candidate");
        x[candidates[k]] = 1.0;
        value = values[k];
    }
    Ok(SearchState {
        x,
        best_value: value,
        delta: (2 * capacity).min(m),
        phase: Phase::Greedy,
        evals,
        iterations: capacity,
    })
}

fn by_value_then_index(g: &[f64]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b))
}

/// Maximizes `gradientᵀx` subject to `Σx = C` and Hamming distance to `x_bar` at most `delta`.
///
/// Removes the `⌊Δ/2⌋` selected locations with the smallest coefficients and adds the unselected
/// ones with the largest, pairing them off while the swap strictly helps. Runs in `O(m + Δ log Δ)`.
pub fn solve_subproblem(gradient: &[f64], x_bar: &[f64], capacity: usize, delta: usize) -> Result<Vec<f64>> {
    if gradient.len() != x_bar.len() {
        return Err(Error::Dimension { expected: x_bar.len(), got: gradient.len() });
    }
    let mut selected: Vec<usize> = Vec::with_capacity(capacity);
    let mut unselected: Vec<usize> = Vec::with_capacity(x_bar.len());
    for (j, &xj) in x_bar.iter().enumerate() {
        if xj == 1.0 {
            selected.push(j);
        } else {
            unselected.push(j);
        }
    }
    if selected.len() != capacity {
        return Err(Error::InvalidArgument(format!(
            "x_bar selects {} locations, expected {capacity}",
            selected.len()
        )));
    }
    let mut x = x_bar.to_vec();
    let k = (delta / 2).min(selected.len()).min(unselected.len());
    if k == 0 {
        return Ok(x);
    }
    let ascending = by_value_then_index(gradient);
    // largest coefficient first; lower index first among equals
    let descending = |a: &usize, b: &usize| gradient[*b].total_cmp(&gradient[*a]).then(a.cmp(b));
    if k < selected.len() {
        selected.select_nth_unstable_by(k - 1, &ascending);
    }
    selected.truncate(k);
    selected.sort_unstable_by(&ascending);
    if k < unselected.len() {
        unselected.select_nth_unstable_by(k - 1, descending);
    }
    unselected.truncate(k);
    unselected.sort_unstable_by(descending);
    for (&out, &inn) in selected.iter().zip(&unselected) {
        if gradient[inn] <= gradient[out] {
            break;
        }
        x[out] = 0.0;
        x[inn] = 1.0;
    }
    Ok(x)
}

/// Halves the radius, rounding down to an even number.
fn shrink(delta: usize) -> usize {
    let half = delta / 2;
    half - half % 2
}

/// Trust-region local search driven by the objective gradient.
pub fn gradient_local_search<O: CaptureObjective + ?Sized>(
    objective: &O,
    state: SearchState,
    opts: &SolverOptions,
) -> Result<SearchState> {
    let capacity = support(&state.x).len();
    let mut x = state.x;
    let mut delta = (2 * capacity).min(x.len());
    let (mut value, mut grad) = objective.value_and_gradient(&x)?;
    let mut evals = 1;
    let mut iterations = 0;
    while delta >= 2 {
        let candidate = solve_subproblem(&grad, &x, capacity, delta)?;
        if candidate != x {
            let v = objective.value(&candidate)?;
            evals += 1;
            if opts.improves(v, value) {
                x = candidate;
                (value, grad) = objective.value_and_gradient(&x)?;
                evals += 1;
                iterations += 1;
                continue;
            }
        }
        delta = shrink(delta);
    }
    Ok(SearchState { x, best_value: value, delta, phase: Phase::LocalSearch, evals, iterations })
}

fn best_move<O: CaptureObjective + ?Sized>(
    objective: &O,
    x: &[f64],
    moves: &[(Vec<usize>, Vec<usize>)],
) -> Result<Option<(usize, f64)>> {
    let values = par::map_slice(moves, |(out, inn)| {
        let mut trial = x.to_vec();
        out.iter().for_each(|&j| trial[j] = 0.0);
        inn.iter().for_each(|&j| trial[j] = 1.0);
        objective.value(&trial)
    })
    .into_iter()
    .collect::<Result<Vec<f64>>>()?;
    Ok(argmax(&values).map(|k| (k, values[k])))
}

/// All exchanges of `size` selected locations for `size` unselected ones.
pub fn swap_moves(x: &[f64], size: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let selected = support(x);
    let unselected: Vec<usize> = (0..x.len()).filter(|&j| x[j] != 1.0).collect();
    let outs: Vec<Vec<usize>> = selected.into_iter().combinations(size).collect();
    let ins: Vec<Vec<usize>> = unselected.into_iter().combinations(size).collect();
    outs.iter().cartesian_product(&ins).map(|(o, i)| (o.clone(), i.clone())).collect()
}

/// Best-improvement single and pair exchanges until no exchange helps.
pub fn exchange_phase<O: CaptureObjective + ?Sized>(
    objective: &O,
    state: SearchState,
    opts: &SolverOptions,
) -> Result<SearchState> {
    let mut x = state.x;
    let mut value = state.best_value;
    let mut evals = 0;
    let mut iterations = 0;
    let max_size = if opts.pair_swaps { 2 } else { 1 };
    'outer: loop {
        for size in 1..=max_size {
            let moves = swap_moves(&x, size);
            evals += moves.len();
            if let Some((k, v)) = best_move(objective, &x, &moves)? {
                if opts.improves(v, value) {
                    let (out, inn) = &moves[k];
                    out.iter().for_each(|&j| x[j] = 0.0);
                    inn.iter().for_each(|&j| x[j] = 1.0);
                    value = v;
                    iterations += 1;
                    continue 'outer;
                }
            }
        }
        break;
    }
    Ok(SearchState { x, best_value: value, delta: state.delta, phase: Phase::Exchange, evals, iterations })
}

/// Greedy, then gradient local search, then exchanges; values are memoized for the run.
pub fn ggx<O: CaptureObjective + ?Sized>(objective: &O, capacity: usize, opts: &SolverOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let memo = Memoized::new(objective);
    let greedy_state = greedy(&memo, capacity)?;
    let greedy_iterations = greedy_state.iterations;
    let v1 = greedy_state.best_value;
    let local = gradient_local_search(&memo, greedy_state, opts)?;
    let local_search_iterations = local.iterations;
    let v2 = local.best_value;
    let done = exchange_phase(&memo, local, opts)?;
    Ok(SolveReport {
        value: done.best_value,
        phase_values: [v1, v2, done.best_value],
        x: done.x,
        greedy_iterations,
        local_search_iterations,
        exchange_iterations: done.iterations,
        seconds: start.elapsed().as_secs_f64(),
        guarantee: memo.is_submodular(),
    })
}

pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
}

/// Exact optimum over all subsets of size `capacity`; first subset in lexicographic order wins ties.
pub fn brute_force<O: CaptureObjective + ?Sized>(objective: &O, capacity: usize) -> Result<(Vec<f64>, f64)> {
    let m = objective.num_locations();
    check_capacity(m, capacity)?;
    let count = binomial(m, capacity);
    if count > ENUMERATION_BUDGET {
        return Err(Error::EnumerationBudget { count, budget: ENUMERATION_BUDGET });
    }
    let subsets: Vec<Vec<usize>> = (0..m).combinations(capacity).collect();
    let values = par::map_slice(&subsets, |s| objective.value(&indicator(m, s)))
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
    let k = argmax(&values).expect("at least one subset");
    Ok((indicator(m, &subsets[k]), values[k]))
}
