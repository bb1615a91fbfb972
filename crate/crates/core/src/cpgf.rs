//! Choice-probability generating functions (CPGFs) of the GEV family.
//!
//! A CPGF `G(Y)` is evaluated at `Y(v) ∘ x`, where `Y_j = exp(v_j)` and `x` is a selection
//! vector. Every evaluation goes through the log domain: the selected, masked vector is
//! represented by `ln y_j = v_j + ln x_j` (or `-inf` when location `j` is switched off), and
//! nest sums are computed with log-sum-exp so utilities of magnitude 50 and beyond are safe.
//!
//! Two models are implemented, multinomial logit and two-level nested logit. New GEV members
//! (cross-nested, network GEV) slot in as extra [`ModelKind`] variants; everything downstream
//! only talks to [`CpgfModel`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Utilities below this value are treated as `-inf` (location unavailable).
pub const DEFAULT_UTILITY_FLOOR: f64 = -50.0;

/// Partition of the locations into nests with their dissimilarity parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestStructure {
    nests: Vec<Vec<usize>>,
    mu: Vec<f64>,
    #[serde(skip)]
    membership: Vec<usize>,
}

impl NestStructure {
    pub fn new(nests: Vec<Vec<usize>>, mu: Vec<f64>, m: usize) -> Result<Self> {
        if nests.len() != mu.len() {
            return Err(Error::Validation(format!(
                "{} nests but {} mu values",
                nests.len(),
                mu.len()
            )));
        }
        if let Some(bad) = mu.iter().find(|&&u| !(u >= 1.0) || !u.is_finite()) {
            return Err(Error::Validation(format!("nest parameter mu = {bad} must be >= 1")));
        }
        let mut membership = vec![usize::MAX; m];
        for (l, nest) in nests.iter().enumerate() {
            if nest.is_empty() {
                return Err(Error::Validation(format!("nest {l} is empty")));
            }
            for &j in nest {
                if j >= m {
                    return Err(Error::Validation(format!(
                        "nest {l} references location {j} but m = {m}"
                    )));
                }
                if membership[j] != usize::MAX {
                    return Err(Error::Validation(format!("location {j} appears in two nests")));
                }
                membership[j] = l;
            }
        }
        if let Some(j) = membership.iter().position(|&l| l == usize::MAX) {
            return Err(Error::Validation(format!("location {j} is not in any nest")));
        }
        Ok(NestStructure { nests, mu, membership })
    }

    /// `count` contiguous nests of equal size; the last nest absorbs the remainder.
    pub fn contiguous(m: usize, mu: Vec<f64>) -> Result<Self> {
        let count = mu.len();
        if count == 0 || count > m {
            return Err(Error::Validation(format!("cannot split {m} locations into {count} nests")));
        }
        let size = m / count;
        let nests = (0..count)
            .map(|l| {
                let end = if l + 1 == count { m } else { (l + 1) * size };
                (l * size..end).collect()
            })
            .collect();
        NestStructure::new(nests, mu, m)
    }

    pub fn nests(&self) -> &[Vec<usize>] {
        &self.nests
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn nest_of(&self, j: usize) -> usize {
        self.membership[j]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ModelKind {
    Mnl,
    NestedLogit(NestStructure),
}

/// A GEV generating function over `m` locations.
#[derive(Clone, Debug, PartialEq)]
pub struct CpgfModel {
    kind: ModelKind,
    m: usize,
    floor: f64,
}

/// Choice probabilities of the selected locations and of the competitor (utility normalized to 1).
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiceProbabilities {
    pub locations: Vec<f64>,
    pub competitor: f64,
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.map(|t| (t - max).exp()).sum::<f64>().ln()
}

impl CpgfModel {
    pub fn mnl(m: usize) -> Self {
        CpgfModel { kind: ModelKind::Mnl, m, floor: DEFAULT_UTILITY_FLOOR }
    }

    pub fn nested(nests: NestStructure) -> Self {
        let m = nests.membership.len();
        CpgfModel { kind: ModelKind::NestedLogit(nests), m, floor: DEFAULT_UTILITY_FLOOR }
    }

    pub fn with_floor(mut self, floor: f64) -> Self {
        self.floor = floor;
        self
    }

    pub fn kind(&self) -> &ModelKind {
        &self.kind
    }

    pub fn num_locations(&self) -> usize {
        self.m
    }

    pub fn floor(&self) -> f64 {
        self.floor
    }

    pub fn is_mnl(&self) -> bool {
        matches!(self.kind, ModelKind::Mnl)
    }

    fn check_dims(&self, v: &[f64], x: &[f64]) -> Result<()> {
        if v.len() != self.m {
            return Err(Error::Dimension { expected: self.m, got: v.len() });
        }
        if x.len() != self.m {
            return Err(Error::Dimension { expected: self.m, got: x.len() });
        }
        Ok(())
    }

    /// `ln(Y_j x_j)`, or `-inf` for masked entries.
    #[inline]
    pub fn log_entry(&self, v: f64, x: f64) -> f64 {
        if x <= 0.0 || v < self.floor {
            f64::NEG_INFINITY
        } else if x == 1.0 {
            v
        } else {
            v + x.ln()
        }
    }

    /// Fills `ln_y` with the log of `Y(v) ∘ x`.
    pub fn log_masked(&self, v: &[f64], x: &[f64], ln_y: &mut [f64]) {
        for ((out, &vj), &xj) in ln_y.iter_mut().zip(v).zip(x) {
            *out = self.log_entry(vj, xj);
        }
    }

    /// `G(y)` from `ln y`.
    pub fn value_log(&self, ln_y: &[f64]) -> f64 {
        match &self.kind {
            ModelKind::Mnl => ln_y.iter().map(|t| t.exp()).sum(),
            ModelKind::NestedLogit(ns) => ns
                .nests
                .iter()
                .zip(&ns.mu)
                .map(|(nest, &mu)| {
                    let lse = log_sum_exp(nest.iter().map(|&j| mu * ln_y[j]));
                    (lse / mu).exp()
                })
                .sum(),
        }
    }

    /// `G(y)` and the shares `y_j ∂G_j(y)`, which are also the gradient of `G` in `ln y`.
    /// The shares sum to `G(y)`.
    pub fn value_and_shares_log(&self, ln_y: &[f64], shares: &mut [f64]) -> f64 {
        match &self.kind {
            ModelKind::Mnl => {
                let mut total = 0.0;
                for (s, t) in shares.iter_mut().zip(ln_y) {
                    *s = t.exp();
                    total += *s;
                }
                total
            }
            ModelKind::NestedLogit(ns) => {
                let mut total = 0.0;
                for (nest, &mu) in ns.nests.iter().zip(&ns.mu) {
                    let lse = log_sum_exp(nest.iter().map(|&j| mu * ln_y[j]));
                    if lse == f64::NEG_INFINITY {
                        for &j in nest {
                            shares[j] = 0.0;
                        }
                        continue;
                    }
                    let g_nest = (lse / mu).exp();
                    for &j in nest {
                        shares[j] = g_nest * (mu * ln_y[j] - lse).exp();
                    }
                    total += g_nest;
                }
                total
            }
        }
    }

    /// `∂G_j(y)` for every `j`, from `ln y`.
    pub fn partials_log(&self, ln_y: &[f64], out: &mut [f64]) {
        match &self.kind {
            ModelKind::Mnl => out.iter_mut().for_each(|o| *o = 1.0),
            ModelKind::NestedLogit(ns) => {
                for (nest, &mu) in ns.nests.iter().zip(&ns.mu) {
                    let lse = log_sum_exp(nest.iter().map(|&j| mu * ln_y[j]));
                    for &j in nest {
                        out[j] = if mu == 1.0 || lse == f64::NEG_INFINITY {
                            // G restricted to an empty nest is linear in y_j
                            1.0
                        } else if ln_y[j] == f64::NEG_INFINITY {
                            0.0
                        } else {
                            ((mu - 1.0) * ln_y[j] + (1.0 / mu - 1.0) * lse).exp()
                        };
                    }
                }
            }
        }
    }

    fn mixed_partial_log(&self, ln_y: &[f64], j: usize, k: usize) -> f64 {
        let ns = match &self.kind {
            ModelKind::Mnl => return 0.0,
            ModelKind::NestedLogit(ns) => ns,
        };
        let l = ns.membership[j];
        if ns.membership[k] != l {
            return 0.0;
        }
        let mu = ns.mu[l];
        if mu == 1.0 {
            return 0.0;
        }
        let lse = log_sum_exp(ns.nests[l].iter().map(|&i| mu * ln_y[i]));
        if lse == f64::NEG_INFINITY {
            return 0.0;
        }
        let (yj, yk) = (ln_y[j], ln_y[k]);
        if j != k {
            if yj == f64::NEG_INFINITY || yk == f64::NEG_INFINITY {
                return 0.0;
            }
            (1.0 - mu) * ((mu - 1.0) * (yj + yk) + (1.0 / mu - 2.0) * lse).exp()
        } else {
            let second = (mu - 1.0) * ((1.0 / mu - 1.0) * lse).exp() * yj.exp().powf(mu - 2.0);
            if yj == f64::NEG_INFINITY {
                return second;
            }
            let first = (1.0 - mu) * ((1.0 / mu - 2.0) * lse + 2.0 * (mu - 1.0) * yj).exp();
            first + second
        }
    }

    /// `G(Y(v) ∘ x)`.
    pub fn value(&self, v: &[f64], x: &[f64]) -> Result<f64> {
        self.check_dims(v, x)?;
        let mut ln_y = vec![0.0; self.m];
        self.log_masked(v, x, &mut ln_y);
        Ok(self.value_log(&ln_y))
    }

    /// Partial derivatives `∂G_j` with respect to `Y_j`, evaluated at `Y(v) ∘ x`.
    pub fn gradient(&self, v: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(v, x)?;
        let mut ln_y = vec![0.0; self.m];
        self.log_masked(v, x, &mut ln_y);
        let mut out = vec![0.0; self.m];
        self.partials_log(&ln_y, &mut out);
        Ok(out)
    }

    /// Second-order partial `∂G_jk` at `Y(v) ∘ x`.
    pub fn mixed_partial(&self, v: &[f64], x: &[f64], j: usize, k: usize) -> Result<f64> {
        self.check_dims(v, x)?;
        if j >= self.m || k >= self.m {
            return Err(Error::InvalidArgument(format!(
                "index ({j}, {k}) out of range for m = {}",
                self.m
            )));
        }
        let mut ln_y = vec![0.0; self.m];
        self.log_masked(v, x, &mut ln_y);
        Ok(self.mixed_partial_log(&ln_y, j, k))
    }

    /// Probabilities `Y_j ∂G_j / (1 + G)` for each location and `1 / (1 + G)` for the competitor.
    pub fn choice_probabilities(&self, v: &[f64], x: &[f64]) -> Result<ChoiceProbabilities> {
        self.check_dims(v, x)?;
        let mut ln_y = vec![0.0; self.m];
        self.log_masked(v, x, &mut ln_y);
        let mut shares = vec![0.0; self.m];
        let g = self.value_and_shares_log(&ln_y, &mut shares);
        let denom = 1.0 + g;
        shares.iter_mut().for_each(|s| *s /= denom);
        Ok(ChoiceProbabilities { locations: shares, competitor: 1.0 / denom })
    }
}
