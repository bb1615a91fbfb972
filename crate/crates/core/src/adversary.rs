//! Per-zone adversary: `φ(x) = min_{v ∈ V} G(Y(v) ∘ x)` over a convex uncertainty set.
//!
//! The mixture set parameterizes `v = Σ_n η_n ṽ^n` with proportions `η` in the simplex and
//! within max-norm distance `ε` of the estimate `τ̃`. `G(Y(v) ∘ x)` is convex in `v`, hence in
//! `η`, and the minimization is solved by projected gradient with an Armijo backtracking line
//! search seeded by a Barzilai-Borwein step. The projection onto
//! `{η ≥ 0, Ση = 1, ‖η − τ̃‖_∞ ≤ ε}` is a clamped shift found by bisection on the simplex
//! multiplier.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cpgf::CpgfModel;
use crate::error::{Error, Result};
use crate::instance::Zone;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Norm {
    #[default]
    Max,
}

/// Proportions within `epsilon` of the zone's estimated type mix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixtureUncertaintySet {
    pub epsilon: f64,
    pub norm: Norm,
}

impl MixtureUncertaintySet {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        Ok(MixtureUncertaintySet { epsilon, norm: Norm::Max })
    }

    /// Per-coordinate bounds `[max(0, τ̃ − ε), τ̃ + ε]`.
    pub fn bounds(&self, tau_hat: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let lo = tau_hat.iter().map(|t| (t - self.epsilon).max(0.0)).collect();
        let hi = tau_hat.iter().map(|t| t + self.epsilon).collect();
        (lo, hi)
    }

    pub fn contains(&self, tau_hat: &[f64], eta: &[f64], tol: f64) -> bool {
        let total: f64 = eta.iter().sum();
        (total - 1.0).abs() <= tol
            && eta
                .iter()
                .zip(tau_hat)
                .all(|(e, t)| *e >= -tol && (e - t).abs() <= self.epsilon + tol)
    }
}

/// Independent intervals `v_lo ≤ v ≤ v_hi` on each utility.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RectangularUncertaintySet {
    pub v_lo: Vec<f64>,
    pub v_hi: Vec<f64>,
}

impl RectangularUncertaintySet {
    pub fn new(v_lo: Vec<f64>, v_hi: Vec<f64>) -> Result<Self> {
        if v_lo.len() != v_hi.len() {
            return Err(Error::Dimension { expected: v_lo.len(), got: v_hi.len() });
        }
        if v_lo.iter().zip(&v_hi).any(|(a, b)| !(a <= b)) {
            return Err(Error::InvalidArgument("rectangular set requires v_lo <= v_hi".into()));
        }
        Ok(RectangularUncertaintySet { v_lo, v_hi })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum UncertaintySet {
    Mixture(MixtureUncertaintySet),
    Rectangular(RectangularUncertaintySet),
}

/// The same mixture set for every zone.
pub fn mixture_sets(num_zones: usize, epsilon: f64) -> Result<Vec<UncertaintySet>> {
    let set = MixtureUncertaintySet::new(epsilon)?;
    Ok(vec![UncertaintySet::Mixture(set); num_zones])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdversaryOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for AdversaryOptions {
    fn default() -> Self {
        AdversaryOptions { tol: 1e-8, max_iter: 500 }
    }
}

/// Minimizer and value of one adversary problem.
#[derive(Clone, Debug, PartialEq)]
pub struct AdversaryCertificate {
    /// Optimal proportions (mixture sets only).
    pub eta: Option<Vec<f64>>,
    pub v_star: Vec<f64>,
    pub phi: f64,
    pub iterations: usize,
    pub kkt_residual: f64,
    pub tol: f64,
    /// Selection the certificate was computed for.
    pub x: Vec<f64>,
}

/// Euclidean projection of `y` onto `{η ≥ 0, Ση = 1, ‖η − τ̃‖_∞ ≤ ε}`.
pub fn project_simplex_box(y: &[f64], tau_hat: &[f64], epsilon: f64) -> Vec<f64> {
    let lo: Vec<f64> = tau_hat.iter().map(|t| (t - epsilon).max(0.0)).collect();
    let hi: Vec<f64> = tau_hat.iter().map(|t| t + epsilon).collect();
    let mut out = vec![0.0; y.len()];
    project_with_bounds(y, &lo, &hi, &mut out);
    out
}

fn clamp_sum(y: &[f64], lo: &[f64], hi: &[f64], lambda: f64) -> f64 {
    y.iter().zip(lo).zip(hi).map(|((y, l), h)| (y - lambda).clamp(*l, *h)).sum()
}

pub(crate) fn project_with_bounds(y: &[f64], lo: &[f64], hi: &[f64], out: &mut [f64]) {
    // Σ clamp(y − λ) is non-increasing in λ: ≥ 1 at `a`, ≤ 1 at `b`
    let mut a = y.iter().zip(hi).map(|(y, h)| y - h).fold(f64::INFINITY, f64::min);
    let mut b = y.iter().zip(lo).map(|(y, l)| y - l).fold(f64::NEG_INFINITY, f64::max);
    for _ in 0..60 {
        let mid = 0.5 * (a + b);
        if clamp_sum(y, lo, hi, mid) > 1.0 {
            a = mid;
        } else {
            b = mid;
        }
    }
    let mut lambda = 0.5 * (a + b);

    // exact multiplier for the free set identified by bisection
    let (mut free_sum, mut free_count, mut fixed_sum) = (0.0, 0usize, 0.0);
    for ((yn, l), h) in y.iter().zip(lo).zip(hi) {
        let t = yn - lambda;
        if t > *l && t < *h {
            free_sum += yn;
            free_count += 1;
        } else {
            fixed_sum += t.clamp(*l, *h);
        }
    }
    if free_count > 0 {
        let exact = (free_sum - (1.0 - fixed_sum)) / free_count as f64;
        if (clamp_sum(y, lo, hi, exact) - 1.0).abs() <= (clamp_sum(y, lo, hi, lambda) - 1.0).abs() {
            lambda = exact;
        }
    }
    for (((o, yn), l), h) in out.iter_mut().zip(y).zip(lo).zip(hi) {
        *o = (yn - lambda).clamp(*l, *h);
    }

    let residual = 1.0 - out.iter().sum::<f64>();
    if residual.abs() > 1e-15 {
        // put the rounding residue on the coordinate with the most room
        let slack = |n: usize| if residual > 0.0 { hi[n] - out[n] } else { out[n] - lo[n] };
        if let Some(n) = (0..out.len()).max_by(|&p, &q| slack(p).total_cmp(&slack(q))) {
            if slack(n) >= residual.abs() {
                out[n] += residual;
            }
        }
    }
}

/// Compact evaluator of `η ↦ G(Y(v(η)) ∘ x)` restricted to the selected locations.
struct MixtureEvaluator<'a> {
    model: &'a CpgfModel,
    active: Vec<usize>,
    /// `ln x_j` for active `j`.
    log_x: Vec<f64>,
    /// Type utilities restricted to the active locations, `[n][k]`.
    utilities: Vec<Vec<f64>>,
    ln_y: Vec<f64>,
    shares: Vec<f64>,
    compact_shares: Vec<f64>,
}

impl<'a> MixtureEvaluator<'a> {
    fn new(model: &'a CpgfModel, zone: &Zone, x: &[f64]) -> Self {
        let active: Vec<usize> = (0..x.len()).filter(|&j| x[j] > 0.0).collect();
        let log_x = active.iter().map(|&j| if x[j] == 1.0 { 0.0 } else { x[j].ln() }).collect();
        let utilities = zone
            .type_utilities
            .iter()
            .map(|row| active.iter().map(|&j| row[j]).collect())
            .collect();
        let k = active.len();
        let m = x.len();
        MixtureEvaluator {
            model,
            active,
            log_x,
            utilities,
            ln_y: vec![f64::NEG_INFINITY; if model.is_mnl() { k } else { m }],
            shares: vec![0.0; if model.is_mnl() { k } else { m }],
            compact_shares: vec![0.0; k],
        }
    }

    /// Value and gradient with respect to `η`.
    fn eval(&mut self, eta: &[f64], grad: &mut [f64]) -> f64 {
        let floor = self.model.floor();
        let mnl = self.model.is_mnl();
        for k in 0..self.active.len() {
            let v: f64 = self.utilities.iter().zip(eta).map(|(row, w)| w * row[k]).sum();
            let slot = if mnl { k } else { self.active[k] };
            self.ln_y[slot] = if v < floor { f64::NEG_INFINITY } else { v + self.log_x[k] };
        }
        let g = self.model.value_and_shares_log(&self.ln_y, &mut self.shares);
        for k in 0..self.active.len() {
            self.compact_shares[k] = if mnl { self.shares[k] } else { self.shares[self.active[k]] };
        }
        for (gn, row) in grad.iter_mut().zip(&self.utilities) {
            *gn = row.iter().zip(&self.compact_shares).map(|(u, s)| u * s).sum();
        }
        g
    }

    /// Hessian with respect to `η`, row-major `N × N`. Exact for MNL (`Σ_k s_k u_k u_kᵀ`),
    /// central differences of the gradient otherwise.
    fn hessian(&mut self, eta: &[f64], out: &mut [f64]) {
        let n = eta.len();
        if self.model.is_mnl() {
            self.eval(eta, &mut vec![0.0; n]);
            for a in 0..n {
                for b in a..n {
                    let h: f64 = self.compact_shares
                        .iter()
                        .enumerate()
                        .map(|(k, s)| s * self.utilities[a][k] * self.utilities[b][k])
                        .sum();
                    out[a * n + b] = h;
                    out[b * n + a] = h;
                }
            }
            return;
        }
        let (mut up, mut down) = (vec![0.0; n], vec![0.0; n]);
        let mut point = eta.to_vec();
        for b in 0..n {
            let h = 1e-5 * (1.0 + eta[b].abs());
            point[b] = eta[b] + h;
            self.eval(&point, &mut up);
            point[b] = eta[b] - h;
            self.eval(&point, &mut down);
            point[b] = eta[b];
            for a in 0..n {
                out[a * n + b] = (up[a] - down[a]) / (2.0 * h);
            }
        }
        for a in 0..n {
            for b in a + 1..n {
                let avg = 0.5 * (out[a * n + b] + out[b * n + a]);
                out[a * n + b] = avg;
                out[b * n + a] = avg;
            }
        }
    }
}

/// Newton direction on the face where `proj` (the projected gradient point) lies strictly
/// inside its bounds. The other coordinates move to `proj`; `Σ d = 0` is kept.
fn face_newton_direction(
    eta: &[f64],
    grad: &[f64],
    hessian: &[f64],
    proj: &[f64],
    lo: &[f64],
    hi: &[f64],
) -> Option<Vec<f64>> {
    let n = grad.len();
    let free: Vec<usize> = (0..n).filter(|&k| proj[k] > lo[k] && proj[k] < hi[k]).collect();
    let f = free.len();
    let mut d: Vec<f64> = (0..n).map(|k| proj[k] - eta[k]).collect();
    for &k in &free {
        d[k] = 0.0;
    }
    if f == 0 {
        return Some(d);
    }
    let scale = free.iter().map(|&k| hessian[k * n + k].abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut kkt = DMatrix::<f64>::zeros(f + 1, f + 1);
    let mut rhs = DVector::<f64>::zeros(f + 1);
    for (a, &ka) in free.iter().enumerate() {
        for (b, &kb) in free.iter().enumerate() {
            kkt[(a, b)] = hessian[ka * n + kb];
        }
        kkt[(a, a)] += 1e-12 * scale;
        kkt[(a, f)] = 1.0;
        kkt[(f, a)] = 1.0;
        rhs[a] = -grad[ka] - (0..n).map(|k| hessian[ka * n + k] * d[k]).sum::<f64>();
    }
    rhs[f] = -d.iter().sum::<f64>();
    let sol = kkt.lu().solve(&rhs)?;
    for (a, &k) in free.iter().enumerate() {
        d[k] = sol[a];
    }
    d.iter().all(|v| v.is_finite()).then_some(d)
}

fn stationarity(eta: &[f64], grad: &[f64], lo: &[f64], hi: &[f64], buf: &mut [f64]) -> f64 {
    let trial: Vec<f64> = eta.iter().zip(grad).map(|(e, g)| e - g).collect();
    project_with_bounds(&trial, lo, hi, buf);
    eta.iter().zip(buf.iter()).map(|(e, p)| (e - p).abs()).fold(0.0, f64::max)
}

/// Worst-case proportions for one zone under a mixture set.
pub fn solve_adversary(
    model: &CpgfModel,
    zone: &Zone,
    set: &MixtureUncertaintySet,
    x: &[f64],
    opts: &AdversaryOptions,
) -> Result<AdversaryCertificate> {
    let m = model.num_locations();
    if x.len() != m {
        return Err(Error::Dimension { expected: m, got: x.len() });
    }
    let tau = &zone.tau_hat;
    let n = tau.len();
    let finish = |eta: Vec<f64>, iterations: usize, residual: f64| -> Result<AdversaryCertificate> {
        let v_star = zone.mixture_utilities(&eta);
        let phi = model.value(&v_star, x)?;
        Ok(AdversaryCertificate {
            eta: Some(eta),
            v_star,
            phi,
            iterations,
            kkt_residual: residual,
            tol: opts.tol,
            x: x.to_vec(),
        })
    };
    if x.iter().all(|&t| t <= 0.0) {
        return finish(tau.clone(), 0, 0.0);
    }

    let (lo, hi) = set.bounds(tau);
    let mut eval = MixtureEvaluator::new(model, zone, x);
    let mut eta = tau.clone();
    let mut grad = vec![0.0; n];
    let mut g = eval.eval(&eta, &mut grad);
    let mut proj = vec![0.0; n];
    let mut candidate = vec![0.0; n];
    let mut cand_grad = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut hessian = vec![0.0; n * n];
    let mut newton = vec![0.0; n];
    let mut newton_grad = vec![0.0; n];

    let grad_norm = grad.iter().fold(0.0f64, |acc, t| acc.max(t.abs()));
    let mut step = if grad_norm > 0.0 { 1.0 / grad_norm } else { 1.0 };
    let mut residual = stationarity(&eta, &grad, &lo, &hi, &mut proj);
    let mut iterations = 0;
    while residual > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::AdversaryNotConverged { iterations, phi: g, residual, eta });
        }
        iterations += 1;
        let slack = 8.0 * f64::EPSILON * g.abs().max(1.0);
        // the Newton step only competes with the gradient step, so a poorly identified face cannot stall progress
        let mut newton_value = f64::INFINITY;
        eval.hessian(&eta, &mut hessian);
        if let Some(d) = face_newton_direction(&eta, &grad, &hessian, &proj, &lo, &hi) {
            let mut t = 1.0;
            for _ in 0..20 {
                for ((tr, e), dk) in trial.iter_mut().zip(&eta).zip(&d) {
                    *tr = e + t * dk;
                }
                project_with_bounds(&trial, &lo, &hi, &mut newton);
                let decrease: f64 = grad.iter().zip(&newton).zip(&eta).map(|((gr, c), e)| gr * (c - e)).sum();
                if decrease >= 0.0 {
                    break;
                }
                let value = eval.eval(&newton, &mut newton_grad);
                if value <= g + 1e-4 * decrease + slack {
                    newton_value = value;
                    break;
                }
                t *= 0.5;
            }
        }
        let mut accepted = false;
        let mut g_new = g;
        for _ in 0..60 {
            for ((t, e), gr) in trial.iter_mut().zip(&eta).zip(&grad) {
                *t = e - step * gr;
            }
            project_with_bounds(&trial, &lo, &hi, &mut candidate);
            let decrease: f64 = grad.iter().zip(&candidate).zip(&eta).map(|((gr, c), e)| gr * (c - e)).sum();
            g_new = eval.eval(&candidate, &mut cand_grad);
            // slack allows for rounding in g once the predicted decrease is below machine precision
            if g_new <= g + 1e-4 * decrease + slack {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if newton_value < f64::INFINITY && (!accepted || newton_value < g_new) {
            std::mem::swap(&mut candidate, &mut newton);
            std::mem::swap(&mut cand_grad, &mut newton_grad);
            g_new = newton_value;
            accepted = true;
        }
        if !accepted {
            return Err(Error::AdversaryNotConverged { iterations, phi: g, residual, eta });
        }
        let (mut ss, mut sy) = (0.0, 0.0);
        for k in 0..n {
            let s = candidate[k] - eta[k];
            ss += s * s;
            sy += s * (cand_grad[k] - grad[k]);
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-12, 1e12) } else { (step * 2.0).min(1e12) };
        std::mem::swap(&mut eta, &mut candidate);
        std::mem::swap(&mut grad, &mut cand_grad);
        g = g_new;
        residual = stationarity(&eta, &grad, &lo, &hi, &mut proj);
    }
    finish(eta, iterations, residual)
}

/// Closed form: `G(Y(v) ∘ x)` is non-decreasing in every `v_j`, so the box minimum is at `v_lo`.
pub fn solve_adversary_rectangular(
    model: &CpgfModel,
    set: &RectangularUncertaintySet,
    x: &[f64],
) -> Result<AdversaryCertificate> {
    let phi = model.value(&set.v_lo, x)?;
    Ok(AdversaryCertificate {
        eta: None,
        v_star: set.v_lo.clone(),
        phi,
        iterations: 0,
        kkt_residual: 0.0,
        tol: 0.0,
        x: x.to_vec(),
    })
}

pub fn solve(
    model: &CpgfModel,
    zone: &Zone,
    set: &UncertaintySet,
    x: &[f64],
    opts: &AdversaryOptions,
) -> Result<AdversaryCertificate> {
    match set {
        UncertaintySet::Mixture(s) => solve_adversary(model, zone, s, x, opts),
        UncertaintySet::Rectangular(s) => solve_adversary_rectangular(model, s, x),
    }
}

/// Envelope gradient `∂φ/∂x_j = Y_j(v*) ∂G_j(Y(v*) ∘ x)`.
pub fn phi_gradient(
    model: &CpgfModel,
    certificate: &AdversaryCertificate,
    x: &[f64],
) -> Result<Vec<f64>> {
    if certificate.x != x {
        return Err(Error::InvalidArgument("certificate was computed for a different x".into()));
    }
    if certificate.kkt_residual > 10.0 * certificate.tol {
        return Err(Error::InvalidArgument(format!(
            "certificate residual {:e} exceeds 10 * tol",
            certificate.kkt_residual
        )));
    }
    Ok(selection_gradient(model, &certificate.v_star, x))
}

/// `∂G(Y(v) ∘ x)/∂x_j = Y_j ∂G_j(Y(v) ∘ x)` at fixed utilities.
pub fn selection_gradient(model: &CpgfModel, v: &[f64], x: &[f64]) -> Vec<f64> {
    let mut ln_y = vec![0.0; v.len()];
    model.log_masked(v, x, &mut ln_y);
    let mut grad = vec![0.0; v.len()];
    model.partials_log(&ln_y, &mut grad);
    for (g, &vj) in grad.iter_mut().zip(v) {
        *g *= if vj < model.floor() { 0.0 } else { vj.exp() };
    }
    grad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpgf::NestStructure;

    fn zone2() -> Zone {
        Zone {
            q: 1.0,
            tau_hat: vec![0.6, 0.4],
            type_utilities: vec![vec![0.5, -1.0, 1.2, 0.0], vec![-0.7, 0.8, 0.1, 1.5]],
        }
    }

    #[test]
    fn projection_fixed_point_and_vertex() {
        let tau = [0.2, 0.3, 0.5];
        let y = [0.25, 0.25, 0.5];
        let p = project_simplex_box(&y, &tau, 0.1);
        for (a, b) in p.iter().zip(y) {
            assert!((a - b).abs() < 1e-15);
        }
        let p = project_simplex_box(&[1.0, 0.0, 0.0], &tau, 3.0);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex_box(&[4.0, -3.0, 0.2], &tau, 0.0);
        assert_eq!(p, tau.to_vec());
    }

    #[test]
    fn projection_is_feasible() {
        let tau = [0.1, 0.2, 0.3, 0.4];
        let p = project_simplex_box(&[3.0, -1.0, 0.7, 0.2], &tau, 0.15);
        let set = MixtureUncertaintySet::new(0.15).unwrap();
        assert!(set.contains(&tau, &p, 1e-12));
    }

    #[test]
    fn empty_selection() {
        let model = CpgfModel::mnl(4);
        let set = MixtureUncertaintySet::new(0.3).unwrap();
        let cert = solve_adversary(&model, &zone2(), &set, &[0.0; 4], &Default::default()).unwrap();
        assert_eq!((cert.phi, cert.iterations), (0.0, 0));
    }

    #[test]
    fn zero_epsilon_is_mean_utilities() {
        let model = CpgfModel::mnl(4);
        let set = MixtureUncertaintySet::new(0.0).unwrap();
        let x = [1.0, 0.0, 1.0, 1.0];
        let z = zone2();
        let cert = solve_adversary(&model, &z, &set, &x, &Default::default()).unwrap();
        assert_eq!(cert.eta.as_deref(), Some(&z.tau_hat[..]));
        assert_eq!(cert.phi, model.value(&z.mean_utilities(), &x).unwrap());
    }

    #[test]
    fn larger_sets_give_smaller_phi() {
        let model = CpgfModel::nested(NestStructure::contiguous(4, vec![1.5, 1.2]).unwrap());
        let x = [1.0, 1.0, 0.0, 1.0];
        let mut last = f64::INFINITY;
        for eps in [0.0, 0.1, 0.2, 0.4, 1.0] {
            let set = MixtureUncertaintySet::new(eps).unwrap();
            let phi = solve_adversary(&model, &zone2(), &set, &x, &Default::default()).unwrap().phi;
            assert!(phi <= last + 1e-12);
            last = phi;
        }
    }

    #[test]
    fn rectangular_closed_form() {
        let model = CpgfModel::mnl(4);
        let set = RectangularUncertaintySet::new(vec![0.0; 4], vec![1.0; 4]).unwrap();
        let cert = solve_adversary_rectangular(&model, &set, &[1.0; 4]).unwrap();
        assert!((cert.phi - 4.0).abs() < 1e-15);
        assert!(RectangularUncertaintySet::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn mnl_gradient_is_exp_of_optimal_utility() {
        let model = CpgfModel::mnl(4);
        let set = MixtureUncertaintySet::new(0.25).unwrap();
        let x = [1.0, 0.0, 1.0, 0.0];
        let cert = solve_adversary(&model, &zone2(), &set, &x, &Default::default()).unwrap();
        let g = phi_gradient(&model, &cert, &x).unwrap();
        for (gj, vj) in g.iter().zip(&cert.v_star) {
            assert!((gj - vj.exp()).abs() < 1e-14);
        }
        assert!(phi_gradient(&model, &cert, &[1.0; 4]).is_err());
    }
}
