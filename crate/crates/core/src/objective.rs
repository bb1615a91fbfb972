//! Captured-demand objectives over a selection vector `x`.
//!
//! Every objective here is a sum of per-zone terms `q (1 − 1/(1 + φ))`, where `φ` is the
//! generating function at fixed utilities (deterministic), its minimum over an uncertainty
//! set (worst case), or a type-weighted mixture of such terms. Solvers only see the
//! [`CaptureObjective`] trait.

use std::collections::HashMap;
use std::sync::Mutex;

use crate::adversary::{self, AdversaryCertificate, AdversaryOptions, UncertaintySet};
use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::par;

/// Demand captured in a zone with demand `q` when the new facilities have aggregate
/// attraction `phi` against a competitor normalized to 1.
#[inline]
pub fn capture(q: f64, phi: f64) -> f64 {
    q - q / (1.0 + phi)
}

/// An objective that decomposes over customer zones.
pub trait CaptureObjective: Sync {
    fn instance(&self) -> &Instance;

    /// Captured demand of one zone at `x`; adds the zone's gradient into `grad` when given.
    fn zone_capture(&self, zone: usize, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64>;

    /// Concave in `x` on `[0,1]^m`; true for MNL-based objectives.
    fn is_concave(&self) -> bool {
        self.instance().model.is_mnl()
    }

    /// Submodular as a set function. Holds for fixed utilities; a worst case over a nontrivial
    /// set can break it, so greedy bounds and submodular cuts are only trusted when this is true.
    fn is_submodular(&self) -> bool {
        true
    }

    fn num_locations(&self) -> usize {
        self.instance().m
    }

    fn num_zones(&self) -> usize {
        self.instance().num_zones()
    }

    fn zone_demand(&self, zone: usize) -> f64 {
        self.instance().zones[zone].q
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let terms = par::map_indices(self.num_zones(), |i| self.zone_capture(i, x, None));
        terms.into_iter().try_fold(0.0, |acc, t| Ok(acc + t?))
    }

    fn value_and_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let m = self.num_locations();
        let terms = par::map_indices(self.num_zones(), |i| {
            let mut g = vec![0.0; m];
            self.zone_capture(i, x, Some(&mut g)).map(|v| (v, g))
        });
        let mut total = 0.0;
        let mut grad = vec![0.0; m];
        for term in terms {
            let (v, g) = term?;
            total += v;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok((total, grad))
    }
}

fn check_len(instance: &Instance, x: &[f64]) -> Result<()> {
    if x.len() != instance.m {
        return Err(Error::Dimension { expected: instance.m, got: x.len() });
    }
    Ok(())
}

fn add_scaled(grad: &mut [f64], src: &[f64], scale: f64) {
    grad.iter_mut().zip(src).for_each(|(g, s)| *g += scale * s);
}

/// Deterministic capture at fixed per-zone utilities.
pub struct DeterministicObjective<'a> {
    instance: &'a Instance,
    utilities: Vec<Vec<f64>>,
}

impl<'a> DeterministicObjective<'a> {
    pub fn new(instance: &'a Instance, utilities: Vec<Vec<f64>>) -> Result<Self> {
        if utilities.len() != instance.num_zones() {
            return Err(Error::Dimension { expected: instance.num_zones(), got: utilities.len() });
        }
        if let Some(row) = utilities.iter().find(|r| r.len() != instance.m) {
            return Err(Error::Dimension { expected: instance.m, got: row.len() });
        }
        Ok(DeterministicObjective { instance, utilities })
    }

    /// Utilities at the estimated type proportions of every zone.
    pub fn mean_utilities(instance: &'a Instance) -> Self {
        let utilities = instance.zones.iter().map(|z| z.mean_utilities()).collect();
        DeterministicObjective { instance, utilities }
    }

    pub fn utilities(&self) -> &[Vec<f64>] {
        &self.utilities
    }
}

impl CaptureObjective for DeterministicObjective<'_> {
    fn instance(&self) -> &Instance {
        self.instance
    }

    fn zone_capture(&self, zone: usize, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let model = &self.instance.model;
        let q = self.instance.zones[zone].q;
        let v = &self.utilities[zone];
        let phi = model.value(v, x)?;
        if let Some(grad) = grad {
            let dphi = adversary::selection_gradient(model, v, x);
            add_scaled(grad, &dphi, q / ((1.0 + phi) * (1.0 + phi)));
        }
        Ok(capture(q, phi))
    }
}

/// Worst case of the capture over per-zone uncertainty sets.
pub struct WorstCaseObjective<'a> {
    instance: &'a Instance,
    sets: &'a [UncertaintySet],
    opts: AdversaryOptions,
}

impl<'a> WorstCaseObjective<'a> {
    pub fn new(instance: &'a Instance, sets: &'a [UncertaintySet], opts: AdversaryOptions) -> Result<Self> {
        if sets.len() != instance.num_zones() {
            return Err(Error::Dimension { expected: instance.num_zones(), got: sets.len() });
        }
        Ok(WorstCaseObjective { instance, sets, opts })
    }

    pub fn certificate(&self, zone: usize, x: &[f64]) -> Result<AdversaryCertificate> {
        adversary::solve(&self.instance.model, &self.instance.zones[zone], &self.sets[zone], x, &self.opts)
    }

    pub fn options(&self) -> &AdversaryOptions {
        &self.opts
    }
}

impl CaptureObjective for WorstCaseObjective<'_> {
    fn instance(&self) -> &Instance {
        self.instance
    }

    fn zone_capture(&self, zone: usize, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        let q = self.instance.zones[zone].q;
        let cert = self.certificate(zone, x)?;
        if let Some(grad) = grad {
            let dphi = adversary::phi_gradient(&self.instance.model, &cert, x)?;
            add_scaled(grad, &dphi, q / ((1.0 + cert.phi) * (1.0 + cert.phi)));
        }
        Ok(capture(q, cert.phi))
    }

    fn is_submodular(&self) -> bool {
        self.sets.iter().all(|set| match set {
            UncertaintySet::Mixture(s) => s.epsilon == 0.0,
            UncertaintySet::Rectangular(s) => s.v_lo == s.v_hi,
        })
    }
}

/// Type-weighted capture `Σ_n τ̃_n q (1 − 1/(1 + G(ṽ^n)))`: the MCP under a mixed model.
pub struct MixedObjective<'a> {
    instance: &'a Instance,
}

impl<'a> MixedObjective<'a> {
    pub fn new(instance: &'a Instance) -> Self {
        MixedObjective { instance }
    }
}

impl CaptureObjective for MixedObjective<'_> {
    fn instance(&self) -> &Instance {
        self.instance
    }

    fn zone_capture(&self, zone: usize, x: &[f64], mut grad: Option<&mut [f64]>) -> Result<f64> {
        let model = &self.instance.model;
        let z = &self.instance.zones[zone];
        let mut total = 0.0;
        for (tau, v) in z.tau_hat.iter().zip(&z.type_utilities) {
            let phi = model.value(v, x)?;
            if let Some(grad) = grad.as_deref_mut() {
                let dphi = adversary::selection_gradient(model, v, x);
                add_scaled(grad, &dphi, tau * z.q / ((1.0 + phi) * (1.0 + phi)));
            }
            total += tau * capture(z.q, phi);
        }
        Ok(total)
    }
}

/// Memoizes whole-objective values of binary selections for the duration of one solve.
pub struct Memoized<'o, O: ?Sized> {
    inner: &'o O,
    cache: Mutex<HashMap<Vec<u64>, f64>>,
}

impl<'o, O: CaptureObjective + ?Sized> Memoized<'o, O> {
    pub fn new(inner: &'o O) -> Self {
        Memoized { inner, cache: Mutex::new(HashMap::new()) }
    }

    fn key(x: &[f64]) -> Option<Vec<u64>> {
        let mut key = vec![0u64; x.len().div_ceil(64)];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 1.0 {
                key[j / 64] |= 1 << (j % 64);
            } else if xj != 0.0 {
                return None;
            }
        }
        Some(key)
    }

    pub fn len(&self) -> usize {
        self.cache.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl<O: CaptureObjective + ?Sized> CaptureObjective for Memoized<'_, O> {
    fn instance(&self) -> &Instance {
        self.inner.instance()
    }

    fn zone_capture(&self, zone: usize, x: &[f64], grad: Option<&mut [f64]>) -> Result<f64> {
        self.inner.zone_capture(zone, x, grad)
    }

    fn is_concave(&self) -> bool {
        self.inner.is_concave()
    }

    fn is_submodular(&self) -> bool {
        self.inner.is_submodular()
    }

    fn value(&self, x: &[f64]) -> Result<f64> {
        let Some(key) = Self::key(x) else {
            return self.inner.value(x);
        };
        if let Some(&v) = self.cache.lock().unwrap().get(&key) {
            return Ok(v);
        }
        let v = self.inner.value(x)?;
        self.cache.lock().unwrap().insert(key, v);
        Ok(v)
    }
}

/// Worst-case value together with the per-zone adversary certificates.
#[derive(Clone, Debug)]
pub struct WorstCaseEvaluation {
    pub value: f64,
    pub per_zone: Vec<AdversaryCertificate>,
    pub gradient: Option<Vec<f64>>,
}

/// `Σ_i q_i (1 − 1/(1 + G(Y(v^i) ∘ x)))`.
pub fn eval_deterministic(instance: &Instance, utilities: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    check_len(instance, x)?;
    DeterministicObjective::new(instance, utilities.to_vec())?.value(x)
}

pub fn eval_worst_case(
    instance: &Instance,
    sets: &[UncertaintySet],
    x: &[f64],
    opts: &AdversaryOptions,
) -> Result<WorstCaseEvaluation> {
    check_len(instance, x)?;
    let objective = WorstCaseObjective::new(instance, sets, *opts)?;
    let certs = par::map_indices(instance.num_zones(), |i| objective.certificate(i, x));
    let per_zone = certs.into_iter().collect::<Result<Vec<_>>>()?;
    let value = instance
        .zones
        .iter()
        .zip(&per_zone)
        .fold(0.0, |acc, (z, c)| acc + capture(z.q, c.phi));
    Ok(WorstCaseEvaluation { value, per_zone, gradient: None })
}

/// `∂f^WC/∂x_j = Σ_i q_i Y_j(v^i*) ∂G_j / (1 + G)^2`, reusing the certificates in `evaluation`.
pub fn worst_case_gradient(
    instance: &Instance,
    x: &[f64],
    evaluation: &WorstCaseEvaluation,
) -> Result<Vec<f64>> {
    check_len(instance, x)?;
    if evaluation.per_zone.len() != instance.num_zones() {
        return Err(Error::Dimension { expected: instance.num_zones(), got: evaluation.per_zone.len() });
    }
    let mut grad = vec![0.0; instance.m];
    for (zone, cert) in instance.zones.iter().zip(&evaluation.per_zone) {
        let dphi = adversary::phi_gradient(&instance.model, cert, x)?;
        add_scaled(&mut grad, &dphi, zone.q / ((1.0 + cert.phi) * (1.0 + cert.phi)));
    }
    Ok(grad)
}

pub fn eval_mixed(instance: &Instance, x: &[f64]) -> Result<f64> {
    check_len(instance, x)?;
    MixedObjective::new(instance).value(x)
}

/// Binary selection vector of a location set.
pub fn indicator(m: usize, set: &[usize]) -> Vec<f64> {
    let mut x = vec![0.0; m];
    for &j in set {
        x[j] = 1.0;
    }
    x
}

/// Sorted indices of the selected locations.
pub fn support(x: &[f64]) -> Vec<usize> {
    (0..x.len()).filter(|&j| x[j] > 0.5).collect()
}
