//! Group-invariant von Mises-Fisher model.
//!
//! Any density invariant under a finite group is the equal-weight mixture of
//! its translates. Applied to the VMF density this gives
//!
//! ```text
//! f(x; mu, kappa) = 1/K sum_k c_4(kappa) exp(kappa <h_k mu, x>)
//! ```
//!
//! a mixture with a single shared concentration whose component means are the
//! orbit of `mu`. Parameters are fitted by EM: the E-step computes the
//! posterior component weights `r_{i,k}`, the M-step pulls every sample back
//! through its component (`h_k^T x_i`) and applies the closed-form VMF fit to
//! the weighted resultant.
//!
//! The operators `h_k` are the signed closure of the group table (see
//! [`SymmetryGroup::signed_closure`]), which is what makes the mixture exactly
//! invariant on S³ rather than only up to the sign of `x`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::orient::{hamilton, UnitQuaternion};
use crate::symgrp::{map_to_fz, SymmetryGroup};
use crate::vmf::{self, fit_from_resultant, log_norm_const, VmfFit, VmfParams, VmfSampler};

/// Starting concentration for random restarts. Near kappa = 1 the EM map is
/// close to the identity for irreducible groups and runs stall there.
pub const RESTART_KAPPA: f64 = 10.0;

/// E-steps over at least this many samples are split across threads.
const PARALLEL_ROWS: usize = 2048;

/// `ln sum exp(v)`, with `-inf` for an empty or all-`-inf` slice.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

#[derive(Clone, Debug)]
pub struct GInvariantVmf {
    group: SymmetryGroup,
    operators: Vec<UnitQuaternion>,
    params: VmfParams,
    means: Vec<UnitQuaternion>,
}

impl GInvariantVmf {
    pub fn new(group: SymmetryGroup, params: VmfParams) -> Self {
        let operators = group.signed_closure();
        let means = operators.iter().map(|h| h.compose(&params.mu)).collect();
        GInvariantVmf {
            group,
            operators,
            params,
            means,
        }
    }

    pub fn group(&self) -> &SymmetryGroup {
        &self.group
    }

    pub fn params(&self) -> &VmfParams {
        &self.params
    }

    /// Mixture operators; the number of components is `operators().len()`.
    pub fn operators(&self) -> &[UnitQuaternion] {
        &self.operators
    }

    /// Component means `h_k mu`.
    pub fn component_means(&self) -> &[UnitQuaternion] {
        &self.means
    }

    /// Log density, with the group acting on the mean direction.
    pub fn log_density(&self, x: &UnitQuaternion) -> f64 {
        let kappa = self.params.kappa;
        let terms: Vec<f64> = self.means.iter().map(|m| kappa * m.dot(x)).collect();
        log_norm_const(kappa) - (self.means.len() as f64).ln() + log_sum_exp(&terms)
    }

    /// Log density, with the group acting on the observation: the average of
    /// the base density over all translates `h_k x`.
    pub fn log_density_translated(&self, x: &UnitQuaternion) -> f64 {
        let base = &self.params;
        let terms: Vec<f64> = self
            .operators
            .iter()
            .map(|h| vmf::log_density(&h.compose(x), base))
            .collect();
        log_sum_exp(&terms) - (self.operators.len() as f64).ln()
    }

    pub fn sample_with_rng<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<UnitQuaternion> {
        let base = VmfSampler::new(self.params);
        let k = self.operators.len();
        (0..n)
            .map(|_| {
                let x = base.sample(rng);
                if k == 1 {
                    x
                } else {
                    self.operators[rng.random_range(0..k)].compose(&x)
                }
            })
            .collect()
    }

    /// Draws from the base VMF, then applies a uniformly chosen operator.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<UnitQuaternion> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with_rng(n, &mut rng)
    }
}

pub fn log_density_ginv(x: &UnitQuaternion, model: &GInvariantVmf) -> f64 {
    model.log_density(x)
}

pub fn sample_ginv(model: &GInvariantVmf, n: usize, seed: u64) -> Vec<UnitQuaternion> {
    model.sample(n, seed)
}

/// Row-stochastic `n x K` matrix of component posteriors.
#[derive(Clone, Debug, PartialEq)]
pub struct Responsibilities {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.data[i * self.cols + k]
    }
}

/// Result of one E-step: responsibilities and the per-sample log densities.
#[derive(Clone, Debug)]
pub struct EStep {
    pub responsibilities: Responsibilities,
    pub log_likelihood: f64,
}

/// Posterior component weights `r_{i,k}` at `params`, computed in log space.
pub fn e_step(samples: &[UnitQuaternion], operators: &[UnitQuaternion], params: &VmfParams) -> Result<EStep> {
    let k = operators.len();
    let n = samples.len();
    let means: Vec<UnitQuaternion> = operators.iter().map(|h| h.compose(&params.mu)).collect();
    let kappa = params.kappa;
    let mut data = vec![0.0; n * k];
    let mut row_log = vec![0.0; n];

    let fill = |(row, x): (&mut [f64], &UnitQuaternion)| -> f64 {
        for (slot, m) in row.iter_mut().zip(&means) {
            *slot = kappa * m.dot(x);
        }
        let lse = log_sum_exp(row);
        for slot in row.iter_mut() {
            *slot = (*slot - lse).exp();
        }
        // exp rounding leaves rows off by a few ulps
        let total: f64 = row.iter().sum();
        for slot in row.iter_mut() {
            *slot /= total;
        }
        lse
    };

    if n >= PARALLEL_ROWS {
        data.par_chunks_mut(k)
            .zip(samples.par_iter())
            .map(fill)
            .collect_into_vec(&mut row_log);
    } else {
        for (i, pair) in data.chunks_mut(k).zip(samples.iter()).enumerate() {
            row_log[i] = fill(pair);
        }
    }

    let constant = log_norm_const(kappa) - (k as f64).ln();
    let log_likelihood = row_log.iter().sum::<f64>() + n as f64 * constant;
    if !log_likelihood.is_finite() {
        return Err(Error::NonFiniteLikelihood);
    }
    Ok(EStep {
        responsibilities: Responsibilities {
            rows: n,
            cols: k,
            data,
        },
        log_likelihood,
    })
}

/// Weighted resultant `gamma = sum_i sum_k r_{i,k} h_k^T x_i`, then the
/// closed-form fit on it.
pub fn m_step(
    samples: &[UnitQuaternion],
    operators: &[UnitQuaternion],
    resp: &Responsibilities,
) -> Result<VmfFit> {
    let k = operators.len();
    // Left multiplication is linear, so pull back per-component sums.
    let mut per_component = vec![[0.0f64; 4]; k];
    for (i, x) in samples.iter().enumerate() {
        let xc = x.components();
        for (acc, r) in per_component.iter_mut().zip(resp.row(i)) {
            for d in 0..4 {
                acc[d] += r * xc[d];
            }
        }
    }
    let mut gamma = [0.0; 4];
    for (h, s) in operators.iter().zip(&per_component) {
        let pulled = hamilton(&h.inverse().components(), s);
        for d in 0..4 {
            gamma[d] += pulled[d];
        }
    }
    fit_from_resultant(gamma, samples.len() as f64)
}

/// Total log likelihood of `samples` under the group-invariant model.
pub fn log_likelihood(samples: &[UnitQuaternion], group: &SymmetryGroup, params: &VmfParams) -> Result<f64> {
    Ok(e_step(samples, &group.signed_closure(), params)?.log_likelihood)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InitStrategy {
    /// Closed-form fit after mapping the samples into the fundamental zone.
    FzMl,
    /// Best of `restarts` EM runs started from uniform random means at
    /// [`RESTART_KAPPA`].
    RandomRestarts { restarts: usize, seed: u64 },
    Fixed(VmfParams),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmConfig {
    /// Stop once the relative change in log likelihood drops below this.
    pub tol: f64,
    pub max_iter: usize,
    pub init: InitStrategy,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            tol: 1e-8,
            max_iter: 200,
            init: InitStrategy::FzMl,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmResult {
    /// Estimate with the mean moved to its fundamental-zone representative
    /// (within the operator orbit, so the likelihood is unchanged).
    pub params: VmfParams,
    /// Mean direction exactly as the last M-step produced it.
    pub raw_mu: UnitQuaternion,
    /// Log likelihood at the initial point followed by one entry per M-step.
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub kappa_saturated: bool,
    pub responsibilities: Responsibilities,
}

impl EmResult {
    pub fn final_log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace is never empty")
    }
}

/// Representative of the orbit `{h mu}` that lies in the fundamental zone.
/// The sign is normalized only when `-identity` is one of the operators.
pub fn canonical_mean(mu: &UnitQuaternion, group: &SymmetryGroup, operators: &[UnitQuaternion]) -> Result<UnitQuaternion> {
    let (fz, m) = map_to_fz(mu, group)?;
    let minus_one = -UnitQuaternion::IDENTITY;
    if operators.iter().any(|h| h.dot(&minus_one) > 1.0 - 1e-9) {
        Ok(fz)
    } else {
        Ok(group.operator(m).apply(mu))
    }
}

fn check_samples(samples: &[UnitQuaternion]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "estimation needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    Ok(())
}

pub fn em_fit(samples: &[UnitQuaternion], group: &SymmetryGroup, config: &EmConfig) -> Result<EmResult> {
    check_samples(samples)?;
    let init = em_init(samples, group, &config.init, config)?;
    em_from(samples, group, init, config)
}

fn em_from(
    samples: &[UnitQuaternion],
    group: &SymmetryGroup,
    init: VmfParams,
    config: &EmConfig,
) -> Result<EmResult> {
    let operators = group.signed_closure();
    let mut params = init;
    let mut saturated = false;
    let mut current = e_step(samples, &operators, &params)?;
    let mut trace = vec![current.log_likelihood];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        let fit = m_step(samples, &operators, &current.responsibilities)?;
        iterations += 1;
        params = fit.params;
        saturated = fit.kappa_saturated;
        let next = e_step(samples, &operators, &params)?;
        let prev_ll = current.log_likelihood;
        current = next;
        trace.push(current.log_likelihood);
        let change = (current.log_likelihood - prev_ll).abs();
        if change <= config.tol * prev_ll.abs().max(1.0) {
            converged = true;
            break;
        }
    }

    let canonical = canonical_mean(&params.mu, group, &operators)?;
    Ok(EmResult {
        params: VmfParams {
            mu: canonical,
            kappa: params.kappa,
        },
        raw_mu: params.mu,
        log_likelihood_trace: trace,
        iterations,
        converged,
        kappa_saturated: saturated,
        responsibilities: current.responsibilities,
    })
}

/// Starting point for EM.
pub fn em_init(
    samples: &[UnitQuaternion],
    group: &SymmetryGroup,
    strategy: &InitStrategy,
    config: &EmConfig,
) -> Result<VmfParams> {
    match *strategy {
        InitStrategy::Fixed(p) => Ok(p),
        InitStrategy::FzMl => Ok(modified_ml_fit(samples, group)?.params),
        InitStrategy::RandomRestarts { restarts, seed } => {
            if restarts == 0 {
                return Err(Error::InvalidConfig("random restarts needs at least one start".into()));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let starts: Vec<VmfParams> = (0..restarts)
                .map(|_| VmfParams {
                    mu: vmf::uniform_quaternion(&mut rng),
                    kappa: RESTART_KAPPA,
                })
                .collect();
            let mut best: Option<(f64, VmfParams)> = None;
            for start in starts {
                let run = em_from(samples, group, start, config)?;
                let ll = run.final_log_likelihood();
                if best.is_none_or(|(b, _)| ll > b) {
                    best = Some((
                        ll,
                        VmfParams {
                            mu: run.raw_mu,
                            kappa: run.params.kappa,
                        },
                    ));
                }
            }
            Ok(best.expect("at least one restart").1)
        }
    }
}

/// Baseline: fold every sample into the fundamental zone, then apply the
/// closed-form VMF fit.
pub fn modified_ml_fit(samples: &[UnitQuaternion], group: &SymmetryGroup) -> Result<VmfFit> {
    check_samples(samples)?;
    let folded = samples
        .iter()
        .map(|q| map_to_fz(q, group).map(|(img, _)| img))
        .collect::<Result<Vec<_>>>()?;
    vmf::ml_estimate(&folded)
}

/// Log of the group-invariant kernel density estimate at `x`: the average over
/// samples of a VMF kernel with concentration `smoothing_kappa`, symmetrized
/// over the operators.
pub fn log_kde_ginv(
    samples: &[UnitQuaternion],
    group: &SymmetryGroup,
    smoothing_kappa: f64,
    x: &UnitQuaternion,
) -> Result<f64> {
    let operators = group.signed_closure();
    log_kde_with_operators(samples, &operators, smoothing_kappa, x)
}

pub(crate) fn log_kde_with_operators(
    samples: &[UnitQuaternion],
    operators: &[UnitQuaternion],
    smoothing_kappa: f64,
    x: &UnitQuaternion,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("kernel density estimate needs a sample".into()));
    }
    if !(smoothing_kappa > 0.0) || smoothing_kappa > vmf::KAPPA_MAX {
        return Err(Error::InvalidConfig(format!(
            "smoothing kappa {smoothing_kappa} outside (0, {}]",
            vmf::KAPPA_MAX
        )));
    }
    let translates: Vec<UnitQuaternion> = operators.iter().map(|h| h.compose(x)).collect();
    let mut terms = Vec::with_capacity(samples.len() * translates.len());
    for s in samples {
        for t in &translates {
            terms.push(smoothing_kappa * s.dot(t));
        }
    }
    Ok(log_norm_const(smoothing_kappa) + log_sum_exp(&terms) - (terms.len() as f64).ln())
}

pub fn kde_ginv(
    samples: &[UnitQuaternion],
    group: &SymmetryGroup,
    smoothing_kappa: f64,
    x: &UnitQuaternion,
) -> Result<f64> {
    Ok(log_kde_ginv(samples, group, smoothing_kappa, x)?.exp())
}

/// Precomputed group-invariant kernel density estimator for repeated queries.
#[derive(Clone, Debug)]
pub struct KernelDensity {
    samples: Vec<UnitQuaternion>,
    operators: Vec<UnitQuaternion>,
    smoothing_kappa: f64,
}

impl KernelDensity {
    pub fn new(samples: Vec<UnitQuaternion>, group: &SymmetryGroup, smoothing_kappa: f64) -> Result<Self> {
        let kde = KernelDensity {
            samples,
            operators: group.signed_closure(),
            smoothing_kappa,
        };
        kde.log_density(&UnitQuaternion::IDENTITY)?;
        Ok(kde)
    }

    pub fn log_density(&self, x: &UnitQuaternion) -> Result<f64> {
        log_kde_with_operators(&self.samples, &self.operators, self.smoothing_kappa, x)
    }

    pub fn density(&self, x: &UnitQuaternion) -> f64 {
        self.log_density(x).map(f64::exp).unwrap_or(0.0)
    }
}

/// Largest `<h mu_hat, mu_true>` over the operator orbit: agreement of two
/// means once the symmetry ambiguity is removed.
pub fn orbit_inner_product(estimate: &UnitQuaternion, truth: &UnitQuaternion, group: &SymmetryGroup) -> f64 {
    group
        .signed_closure()
        .iter()
        .map(|h| h.compose(estimate).dot(truth))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `<fz(mu_hat), fz(mu_true)>` with both means folded into the fundamental zone.
pub fn fz_inner_product(estimate: &UnitQuaternion, truth: &UnitQuaternion, group: &SymmetryGroup) -> Result<f64> {
    let (a, _) = map_to_fz(estimate, group)?;
    let (b, _) = map_to_fz(truth, group)?;
    Ok(a.dot(&b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vmf::uniform_quaternion;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn cubic() -> SymmetryGroup {
        SymmetryGroup::builtin("cubic_m3m", false).unwrap()
    }

    fn trivial() -> SymmetryGroup {
        SymmetryGroup::builtin("trivial", false).unwrap()
    }

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    #[test]
    fn trivial_group_density_is_plain_vmf() {
        let mut r = rng(1);
        let p = VmfParams::new(uniform_quaternion(&mut r), 7.5).unwrap();
        let model = GInvariantVmf::new(trivial(), p);
        for _ in 0..50 {
            let x = uniform_quaternion(&mut r);
            assert_abs_diff_eq!(model.log_density(&x), vmf::log_density(&x, &p), epsilon = 1e-13);
        }
    }

    #[test]
    fn zero_concentration_is_uniform() {
        let mut r = rng(2);
        let model = GInvariantVmf::new(cubic(), VmfParams::new(uniform_quaternion(&mut r), 0.0).unwrap());
        let x = uniform_quaternion(&mut r);
        assert_abs_diff_eq!(model.log_density(&x), -(2.0 * PI * PI).ln(), epsilon = 1e-13);
    }

    #[test]
    fn density_is_invariant_under_every_group_element() {
        let mut r = rng(3);
        for &group in &[false, true] {
            let g = SymmetryGroup::builtin("cubic_m3m", group).unwrap();
            let model = GInvariantVmf::new(g.clone(), VmfParams::new(uniform_quaternion(&mut r), 40.0).unwrap());
            for _ in 0..20 {
                let x = uniform_quaternion(&mut r);
                let base = model.log_density(&x);
                for op in g.operators() {
                    assert_abs_diff_eq!(model.log_density(&op.apply(&x)), base, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn mean_and_observation_forms_agree() {
        let mut r = rng(4);
        for kappa in [0.5, 10.0, 300.0] {
            let model = GInvariantVmf::new(cubic(), VmfParams::new(uniform_quaternion(&mut r), kappa).unwrap());
            for _ in 0..20 {
                let x = uniform_quaternion(&mut r);
                assert_abs_diff_eq!(model.log_density(&x), model.log_density_translated(&x), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn sampler_matches_vmf_for_trivial_group() {
        let p = VmfParams::new(UnitQuaternion::new(0.1, 0.9, 0.3, 0.2).unwrap(), 12.0).unwrap();
        let model = GInvariantVmf::new(trivial(), p);
        assert_eq!(model.sample(100, 8), vmf::sample(&p, 100, 8));
        assert_eq!(sample_ginv(&model, 10, 1), sample_ginv(&model, 10, 1));
    }

    #[test]
    fn sampler_visits_every_orbit_member_equally() {
        let g = cubic();
        let mu = UnitQuaternion::new(0.9, 0.1, -0.2, 0.3).unwrap();
        let model = GInvariantVmf::new(g.clone(), VmfParams::new(mu, 100.0).unwrap());
        let n = 10_000;
        let mut counts = vec![0usize; g.order()];
        for x in model.sample(n, 17) {
            let best = g
                .operators()
                .enumerate()
                .map(|(m, op)| (m, op.apply(&mu).dot(&x).abs()))
                .fold((0, f64::MIN), |a, b| if b.1 > a.1 { b } else { a })
                .0;
            counts[best] += 1;
        }
        let p = 1.0 / g.order() as f64;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * p).abs() <= 3.0 * sigma, "{c}");
        }
    }

    #[test]
    fn responsibilities_rows_are_stochastic() {
        let mut r = rng(5);
        let g = cubic();
        let model = GInvariantVmf::new(g.clone(), VmfParams::new(uniform_quaternion(&mut r), 25.0).unwrap());
        let xs = model.sample(3000, 6);
        let ops = g.signed_closure();
        let guess = VmfParams::new(uniform_quaternion(&mut r), 80.0).unwrap();
        let e = e_step(&xs, &ops, &guess).unwrap();
        for i in 0..xs.len() {
            let row = e.responsibilities.row(i);
            assert!(row.iter().all(|v| (0.0..=1.0).contains(v)));
            assert_abs_diff_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn uniform_init_gives_flat_responsibilities() {
        let mut r = rng(7);
        let g = cubic();
        let xs: Vec<_> = (0..50).map(|_| uniform_quaternion(&mut r)).collect();
        let ops = g.signed_closure();
        let e = e_step(&xs, &ops, &VmfParams::new(UnitQuaternion::IDENTITY, 0.0).unwrap()).unwrap();
        let k = ops.len() as f64;
        for i in 0..xs.len() {
            for v in e.responsibilities.row(i) {
                assert_abs_diff_eq!(*v, 1.0 / k, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn e_step_matches_hand_computation() {
        // 180 degrees about x; its signed closure is {1, i, -1, -i}
        let g = SymmetryGroup::from_elements(
            "x2",
            vec![UnitQuaternion::IDENTITY, UnitQuaternion::new(0.0, 1.0, 0.0, 0.0).unwrap()],
            false,
        )
        .unwrap();
        let ops = g.signed_closure();
        assert_eq!(ops.len(), 4);
        let mu = UnitQuaternion::new(0.8, 0.1, 0.5, -0.3).unwrap();
        let kappa = 2.5;
        let [a, b, c, d] = mu.components();
        // i * (a, b, c, d) = (-b, a, -d, c)
        let i_mu = [-b, a, -d, c];
        let xs = [
            UnitQuaternion::new(0.7, 0.2, 0.1, 0.6).unwrap(),
            UnitQuaternion::new(-0.1, 0.9, 0.4, 0.2).unwrap(),
            UnitQuaternion::new(0.3, -0.3, -0.6, 0.5).unwrap(),
        ];
        let e = e_step(&xs, &ops, &VmfParams::new(mu, kappa).unwrap()).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let xc = x.components();
            let t_mu: f64 = (0..4).map(|k| mu.components()[k] * xc[k]).sum();
            let t_i: f64 = (0..4).map(|k| i_mu[k] * xc[k]).sum();
            let w = [
                (kappa * t_mu).exp(),
                (kappa * t_i).exp(),
                (-kappa * t_mu).exp(),
                (-kappa * t_i).exp(),
            ];
            let total: f64 = w.iter().sum();
            let expected: Vec<f64> = w.iter().map(|v| v / total).collect();
            // closure order: 1, i, then products discovered: i*i = -1, -1*i = -i
            let want_by_op: Vec<f64> = ops
                .iter()
                .map(|h| {
                    let hc = h.components();
                    if hc[0] > 0.5 {
                        expected[0]
                    } else if hc[1] > 0.5 {
                        expected[1]
                    } else if hc[0] < -0.5 {
                        expected[2]
                    } else {
                        expected[3]
                    }
                })
                .collect();
            for (k, want) in want_by_op.iter().enumerate() {
                assert_abs_diff_eq!(e.responsibilities.get(i, k), *want, epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn trivial_group_em_is_closed_form_in_one_step() {
        let p = VmfParams::new(UnitQuaternion::new(-0.6, 0.2, 0.3, 0.7).unwrap(), 15.0).unwrap();
        let xs = vmf::sample(&p, 400, 3);
        let closed = vmf::ml_estimate(&xs).unwrap();
        let config = EmConfig {
            max_iter: 1,
            init: InitStrategy::Fixed(VmfParams::new(UnitQuaternion::IDENTITY, 1.0).unwrap()),
            ..EmConfig::default()
        };
        let em = em_fit(&xs, &trivial(), &config).unwrap();
        assert_eq!(em.iterations, 1);
        for k in 0..4 {
            assert_abs_diff_eq!(em.params.mu.components()[k], closed.params.mu.components()[k], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(em.params.kappa, closed.params.kappa, epsilon = 1e-12);
        // and the full run stays there
        let full = em_fit(&xs, &trivial(), &EmConfig::default()).unwrap();
        assert!(full.converged);
        assert_abs_diff_eq!(full.params.kappa, closed.params.kappa, epsilon = 1e-9);
    }

    #[test]
    fn em_is_monotone_and_recovers_the_orbit() {
        let g = cubic();
        let mut r = rng(8);
        let mu0 = uniform_quaternion(&mut r);
        let model = GInvariantVmf::new(g.clone(), VmfParams::new(mu0, 60.0).unwrap());
        let xs = model.sample(1000, 9);
        let em = em_fit(&xs, &g, &EmConfig::default()).unwrap();
        assert!(em.converged);
        for w in em.log_likelihood_trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-9);
        }
        assert!(orbit_inner_product(&em.params.mu, &mu0, &g) >= 0.999);
        assert!((em.params.kappa / 60.0 - 1.0).abs() < 0.1);
        // the whole orbit of the estimate is equally likely
        let ll = log_likelihood(&xs, &g, &em.params).unwrap();
        for h in g.signed_closure() {
            let moved = VmfParams::new(h.compose(&em.params.mu), em.params.kappa).unwrap();
            assert_abs_diff_eq!(log_likelihood(&xs, &g, &moved).unwrap(), ll, epsilon = 1e-9 * ll.abs().max(1.0));
        }
        // canonical and raw means are orbit mates
        assert!(orbit_inner_product(&em.raw_mu, &em.params.mu, &g) > 1.0 - 1e-12);
    }

    #[test]
    fn init_strategies_agree_at_high_concentration() {
        let g = cubic();
        let mut r = rng(10);
        let mu0 = uniform_quaternion(&mut r);
        let xs = GInvariantVmf::new(g.clone(), VmfParams::new(mu0, 60.0).unwrap()).sample(1000, 11);
        let fz = em_fit(&xs, &g, &EmConfig::default()).unwrap();
        let restarts = EmConfig {
            init: InitStrategy::RandomRestarts { restarts: 4, seed: 5 },
            ..EmConfig::default()
        };
        let rr = em_fit(&xs, &g, &restarts).unwrap();
        let (a, b) = (fz.final_log_likelihood(), rr.final_log_likelihood());
        assert!((a - b).abs() <= 1e-6 * a.abs(), "{a} vs {b}");
        // fixed seed, fixed answer
        let again = em_fit(&xs, &g, &restarts).unwrap();
        assert_eq!(again.params, rr.params);
    }

    #[test]
    fn fz_init_starts_close() {
        let g = cubic();
        let mu0 = UnitQuaternion::new(0.95, 0.1, 0.1, 0.05).unwrap();
        let xs = GInvariantVmf::new(g.clone(), VmfParams::new(mu0, 200.0).unwrap()).sample(500, 12);
        let fz = em_fit(&xs, &g, &EmConfig::default()).unwrap();
        let cold = EmConfig {
            init: InitStrategy::Fixed(VmfParams::new(UnitQuaternion::new(0.2, 0.7, -0.5, 0.4).unwrap(), 1.0).unwrap()),
            ..EmConfig::default()
        };
        let far = em_fit(&xs, &g, &cold).unwrap();
        assert!(fz.iterations <= far.iterations, "{} vs {}", fz.iterations, far.iterations);
        assert!(fz.iterations <= 6);
    }

    #[test]
    fn modified_ml_examples() {
        let g = cubic();
        let mu = UnitQuaternion::new(0.98, 0.05, -0.1, 0.08).unwrap();
        let p = VmfParams::new(mu, 3000.0).unwrap();
        let xs = vmf::sample(&p, 200, 13);
        let a = modified_ml_fit(&xs, &g).unwrap();
        let b = vmf::ml_estimate(&xs).unwrap();
        assert_eq!(a, b);

        // away from zone boundaries folding is harmless
        let mu0 = crate::orient::RodriguesVector::new(0.05, -0.03, 0.02).unwrap().to_quat();
        let xs = GInvariantVmf::new(g.clone(), VmfParams::new(mu0, 100.0).unwrap()).sample(1000, 15);
        let fit = modified_ml_fit(&xs, &g).unwrap();
        assert!(orbit_inner_product(&fit.params.mu, &mu0, &g) >= 0.995);
        assert!(matches!(modified_ml_fit(&xs[..1], &g), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn kde_is_invariant_and_single_sample_peaks() {
        let g = cubic();
        let mut r = rng(16);
        let xs: Vec<_> = (0..30).map(|_| uniform_quaternion(&mut r)).collect();
        let kde = KernelDensity::new(xs.clone(), &g, 20.0).unwrap();
        for _ in 0..20 {
            let x = uniform_quaternion(&mut r);
            let base = kde.log_density(&x).unwrap();
            for op in g.operators() {
                assert_abs_diff_eq!(kde.log_density(&op.apply(&x)).unwrap(), base, epsilon = 1e-12);
            }
            assert_abs_diff_eq!(kde_ginv(&xs, &g, 20.0, &x).unwrap(), base.exp(), epsilon = 1e-12 * base.exp());
        }
        let s = xs[0];
        let kappa = 500.0;
        let k = g.signed_closure().len() as f64;
        let dominant = (vmf::log_norm_const(kappa) + kappa).exp() / k;
        let v = kde_ginv(&[s], &g, kappa, &s).unwrap();
        assert!((v / dominant - 1.0).abs() < 1e-6, "{v} vs {dominant}");
        assert!(kde_ginv(&[], &g, 1.0, &s).is_err());
        assert!(kde_ginv(&[s], &g, 0.0, &s).is_err());
    }

    #[test]
    fn degenerate_inputs_error() {
        let x = UnitQuaternion::new(0.3, 0.3, 0.3, 0.85).unwrap();
        let config = EmConfig {
            init: InitStrategy::Fixed(VmfParams::new(x, 1.0).unwrap()),
            ..EmConfig::default()
        };
        assert!(matches!(em_fit(&[x, -x], &trivial(), &config), Err(Error::DegenerateResultant(_))));
        assert!(em_fit(&[x], &trivial(), &EmConfig::default()).is_err());
    }
}
