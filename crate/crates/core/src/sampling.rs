//! Uniform draws from the uncertainty sets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::adversary::{MixtureUncertaintySet, UncertaintySet};
use crate::instance::{Instance, Zone};

/// Rejected box draws before switching to hit-and-run.
pub const MAX_REJECTIONS: usize = 1000;
const HIT_AND_RUN_STEPS: usize = 200;
const FEASIBILITY_TOL: f64 = 1e-12;

/// Independent stream `index` of the generator seeded by `seed`.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Child seed for a named sub-experiment.
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Uniform point of `{η ≥ 0, Σ η = 1, ‖η − τ̃‖∞ ≤ ε}`.
pub fn sample_mixture<R: Rng + ?Sized>(tau_hat: &[f64], set: &MixtureUncertaintySet, rng: &mut R) -> Vec<f64> {
    let n = tau_hat.len();
    if set.epsilon == 0.0 || n == 1 {
        return tau_hat.to_vec();
    }
    let (lo, hi) = set.bounds(tau_hat);
    let mut eta = vec![0.0; n];
    for _ in 0..MAX_REJECTIONS {
        let mut sum = 0.0;
        for k in 0..n - 1 {
            eta[k] = rng.gen_range(lo[k]..=hi[k]);
            sum += eta[k];
        }
        let last = 1.0 - sum;
        if last >= lo[n - 1] - FEASIBILITY_TOL && last <= hi[n - 1] + FEASIBILITY_TOL {
            eta[n - 1] = last.clamp(lo[n - 1], hi[n - 1]);
            return eta;
        }
    }
    hit_and_run(tau_hat, &lo, &hi, rng)
}

fn hit_and_run<R: Rng + ?Sized>(start: &[f64], lo: &[f64], hi: &[f64], rng: &mut R) -> Vec<f64> {
    let n = start.len();
    let mut eta = start.to_vec();
    let mut dir = vec![0.0; n];
    for _ in 0..HIT_AND_RUN_STEPS {
        dir.iter_mut().for_each(|d| *d = rng.sample(StandardNormal));
        let mean = dir.iter().sum::<f64>() / n as f64;
        dir.iter_mut().for_each(|d| *d -= mean);
        let (mut t_lo, mut t_hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for k in 0..n {
            if dir[k].abs() < 1e-15 {
                continue;
            }
            let a = (lo[k] - eta[k]) / dir[k];
            let b = (hi[k] - eta[k]) / dir[k];
            t_lo = t_lo.max(a.min(b));
            t_hi = t_hi.min(a.max(b));
        }
        if !(t_lo < t_hi) {
            continue;
        }
        let t = rng.gen_range(t_lo..t_hi);
        for k in 0..n {
            eta[k] = (eta[k] + t * dir[k]).clamp(lo[k], hi[k]);
        }
    }
    eta
}

/// Utility vector of one zone drawn uniformly from its set.
pub fn sample_zone<R: Rng + ?Sized>(zone: &Zone, set: &UncertaintySet, rng: &mut R) -> Vec<f64> {
    match set {
        UncertaintySet::Mixture(s) => zone.mixture_utilities(&sample_mixture(&zone.tau_hat, s, rng)),
        UncertaintySet::Rectangular(s) => s
            .v_lo
            .iter()
            .zip(&s.v_hi)
            .map(|(&a, &b)| if a < b { rng.gen_range(a..=b) } else { a })
            .collect(),
    }
}

/// One utility realization for every zone.
pub fn sample_utilities<R: Rng + ?Sized>(instance: &Instance, sets: &[UncertaintySet], rng: &mut R) -> Vec<Vec<f64>> {
    instance.zones.iter().zip(sets).map(|(z, s)| sample_zone(z, s, rng)).collect()
}
