//! The von Mises-Fisher distribution on S³: normalizer, Bessel ratio and its
//! inverse, closed-form maximum likelihood, and a rejection sampler.
//!
//! The density is `c_p(kappa) exp(kappa <mu, x>)` with
//! `c_p(kappa) = kappa^{p/2-1} / ((2 pi)^{p/2} I_{p/2-1}(kappa))`. The
//! general-`p` helpers are private; everything public is fixed at `p = 4`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal, UnitSphere};
use statrs::function::gamma::ln_gamma;

use crate::bessel::{bessel_ratio, log_bessel_i};
use crate::error::{Error, Result};
use crate::orient::UnitQuaternion;

/// Ambient dimension of the sphere the orientations live on.
pub const DIM: usize = 4;
/// Largest concentration the estimators report.
pub const KAPPA_MAX: f64 = 1e5;

const NEWTON_TOL: f64 = 1e-10;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VmfParams {
    pub mu: UnitQuaternion,
    pub kappa: f64,
}

impl VmfParams {
    pub fn new(mu: UnitQuaternion, kappa: f64) -> Result<Self> {
        if !(0.0..=KAPPA_MAX).contains(&kappa) {
            return Err(Error::InvalidConfig(format!(
                "kappa = {kappa} outside [0, {KAPPA_MAX}]"
            )));
        }
        Ok(VmfParams { mu, kappa })
    }
}

/// Result of inverting the Bessel ratio.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct KappaSolution {
    pub kappa: f64,
    /// The requested ratio lies above `A(KAPPA_MAX)` and `kappa` was clamped.
    pub saturated: bool,
}

/// A closed-form fit together with its saturation flag.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VmfFit {
    pub params: VmfParams,
    pub kappa_saturated: bool,
}

fn log_sphere_area(p: usize) -> f64 {
    let half = p as f64 / 2.0;
    std::f64::consts::LN_2 + half * std::f64::consts::PI.ln() - ln_gamma(half)
}

fn log_norm_const_p(p: usize, kappa: f64) -> f64 {
    if kappa == 0.0 {
        return -log_sphere_area(p);
    }
    let nu = p as f64 / 2.0 - 1.0;
    nu * kappa.ln() - (p as f64 / 2.0) * std::f64::consts::TAU.ln() - log_bessel_i(nu, kappa)
}

fn ratio_p(p: usize, u: f64) -> f64 {
    bessel_ratio(p as f64 / 2.0, u)
}

/// `A_p'(u) = 1 - A_p(u)^2 - (p-1)/u A_p(u)`.
fn ratio_derivative_p(p: usize, u: f64, a: f64) -> f64 {
    if u == 0.0 {
        1.0 / p as f64
    } else {
        1.0 - a * a - (p as f64 - 1.0) / u * a
    }
}

fn ratio_inverse_p(p: usize, r: f64) -> Result<KappaSolution> {
    if !(0.0..1.0).contains(&r) || r.is_nan() {
        return Err(Error::ResultantOutOfRange(r));
    }
    if r == 0.0 {
        return Ok(KappaSolution {
            kappa: 0.0,
            saturated: false,
        });
    }
    if r >= ratio_p(p, KAPPA_MAX) {
        return Ok(KappaSolution {
            kappa: KAPPA_MAX,
            saturated: true,
        });
    }
    let pf = p as f64;
    let mut u = (r * (pf - r * r) / (1.0 - r * r)).min(KAPPA_MAX);
    for _ in 0..NEWTON_MAX_ITER {
        let a = ratio_p(p, u);
        let resid = a - r;
        if resid.abs() <= NEWTON_TOL * 1e-3 {
            return Ok(KappaSolution {
                kappa: u,
                saturated: false,
            });
        }
        let d = ratio_derivative_p(p, u, a);
        let mut next = u - resid / d;
        if !next.is_finite() || next <= 0.0 {
            next = u / 2.0;
        }
        next = next.min(KAPPA_MAX);
        if (next - u).abs() <= 1e-15 * u.max(1.0) {
            u = next;
            break;
        }
        u = next;
    }
    if (ratio_p(p, u) - r).abs() <= NEWTON_TOL {
        return Ok(KappaSolution {
            kappa: u,
            saturated: false,
        });
    }
    // bisection fallback; A_p is increasing on [0, KAPPA_MAX]
    let (mut lo, mut hi) = (0.0, KAPPA_MAX);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio_p(p, mid) < r {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi.max(1.0) {
            break;
        }
    }
    Ok(KappaSolution {
        kappa: 0.5 * (lo + hi),
        saturated: false,
    })
}

/// `ln c_4(kappa)`. Finite for every kappa in `[0, KAPPA_MAX]`; at zero it is
/// the uniform density `-ln(2 pi^2)`.
pub fn log_norm_const(kappa: f64) -> f64 {
    log_norm_const_p(DIM, kappa)
}

pub fn log_density(x: &UnitQuaternion, params: &VmfParams) -> f64 {
    log_norm_const(params.kappa) + params.kappa * params.mu.dot(x)
}

/// `A_4(u) = I_2(u) / I_1(u)`.
pub fn bessel_ratio_a(u: f64) -> f64 {
    ratio_p(DIM, u)
}

/// Solves `A_4(kappa) = r` by Newton iteration from the
/// `r (p - r^2) / (1 - r^2)` seed, falling back to bisection.
pub fn bessel_ratio_a_inv(r: f64) -> Result<KappaSolution> {
    ratio_inverse_p(DIM, r)
}

/// Closed-form fit from a resultant vector and the total sample weight.
pub fn fit_from_resultant(resultant: [f64; 4], total_weight: f64) -> Result<VmfFit> {
    let norm = resultant.iter().map(|c| c * c).sum::<f64>().sqrt();
    if !(norm > 1e-12) {
        return Err(Error::DegenerateResultant(norm));
    }
    let mu = UnitQuaternion::from_array(resultant)?;
    let r = norm / total_weight;
    // identical samples give r = 1 up to rounding
    let sol = if r >= 1.0 {
        KappaSolution {
            kappa: KAPPA_MAX,
            saturated: true,
        }
    } else {
        bessel_ratio_a_inv(r)?
    };
    Ok(VmfFit {
        params: VmfParams {
            mu,
            kappa: sol.kappa,
        },
        kappa_saturated: sol.saturated,
    })
}

pub(crate) fn resultant(samples: &[UnitQuaternion]) -> [f64; 4] {
    let mut g = [0.0; 4];
    for x in samples {
        for (acc, c) in g.iter_mut().zip(x.components()) {
            *acc += c;
        }
    }
    g
}

/// Closed-form maximum likelihood: `mu = gamma / |gamma|`,
/// `kappa = A^{-1}(|gamma| / n)` with `gamma` the sum of the samples.
pub fn ml_estimate(samples: &[UnitQuaternion]) -> Result<VmfFit> {
    if samples.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "maximum likelihood needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    fit_from_resultant(resultant(samples), samples.len() as f64)
}

/// Uniform draw on S³ from a normalized Gaussian 4-vector.
pub fn uniform_quaternion<R: Rng + ?Sized>(rng: &mut R) -> UnitQuaternion {
    loop {
        let v: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
        if let Ok(q) = UnitQuaternion::from_array(v) {
            return q;
        }
    }
}

/// Wood's rejection sampler for the component along the mean direction.
#[derive(Clone, Debug)]
pub struct VmfSampler {
    params: VmfParams,
    b: f64,
    x0: f64,
    c: f64,
    beta: Beta<f64>,
}

impl VmfSampler {
    pub fn new(params: VmfParams) -> Self {
        let kappa = params.kappa;
        let dim1 = (DIM - 1) as f64;
        // b = (-2k + sqrt(4k^2 + (p-1)^2)) / (p-1), written without cancellation
        let b = dim1 / (2.0 * kappa + (4.0 * kappa * kappa + dim1 * dim1).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + dim1 * (1.0 - x0 * x0).ln();
        let beta = Beta::new(dim1 / 2.0, dim1 / 2.0).expect("valid beta shape");
        VmfSampler {
            params,
            b,
            x0,
            c,
            beta,
        }
    }

    fn sample_cosine<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let dim1 = (DIM - 1) as f64;
        let kappa = self.params.kappa;
        loop {
            let z = self.beta.sample(rng);
            let w = (1.0 - (1.0 + self.b) * z) / (1.0 - (1.0 - self.b) * z);
            let u: f64 = rng.random();
            if kappa * w + dim1 * (1.0 - self.x0 * w).ln() - self.c >= u.ln() {
                return w.clamp(-1.0, 1.0);
            }
        }
    }
}

impl Distribution<UnitQuaternion> for VmfSampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> UnitQuaternion {
        let w = self.sample_cosine(rng);
        let v: [f64; 3] = UnitSphere.sample(rng);
        let s = (1.0 - w * w).max(0.0).sqrt();
        // local frame has the mean at the identity; left multiplication by mu
        // is orthogonal and carries the identity onto mu
        let local = UnitQuaternion::from_unit_array([w, s * v[0], s * v[1], s * v[2]]);
        self.params.mu.compose(&local)
    }
}

/// `n` independent draws, reproducible from `seed`.
pub fn sample(params: &VmfParams, n: usize, seed: u64) -> Vec<UnitQuaternion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = VmfSampler::new(*params);
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    #[test]
    fn normalizer_limits() {
        let uniform = -(2.0 * PI * PI).ln();
        assert_abs_diff_eq!(log_norm_const(0.0), uniform, epsilon = 1e-14);
        assert_abs_diff_eq!(log_norm_const(1e-9), uniform, epsilon = 1e-8);
        assert_abs_diff_eq!(uniform, -2.9826, epsilon = 1e-4);
        assert!(log_norm_const(1000.0).is_finite());
        assert!(log_norm_const(KAPPA_MAX).is_finite());
    }

    #[test]
    fn normalizer_against_direct_series() {
        // I_1(10) by its power series, summed in plain arithmetic
        let mut i1 = 0.0;
        let mut term = 5.0; // (x/2)^1 / (0! 1!)
        for k in 0..80 {
            i1 += term;
            let kf = k as f64;
            term *= 25.0 / ((kf + 1.0) * (kf + 2.0));
        }
        let want = 10f64.ln() - (4.0 * PI * PI).ln() - i1.ln();
        assert_abs_diff_eq!(log_norm_const(10.0), want, epsilon = 1e-12);
    }

    #[test]
    fn general_p_normalizer_for_circle() {
        // p = 2: c_2 = 1 / (2 pi I_0(kappa))
        let k: f64 = 3.0;
        let i0 = crate::bessel::scaled_bessel_i(0.0, k) * k.exp();
        assert_abs_diff_eq!(log_norm_const_p(2, k), -(2.0 * PI * i0).ln(), epsilon = 1e-13);
        assert_abs_diff_eq!(log_norm_const_p(3, 0.0), -(4.0 * PI).ln(), epsilon = 1e-13);
    }

    #[test]
    fn log_density_examples() {
        let mu = UnitQuaternion::new(0.1, 0.3, -0.2, 0.9).unwrap();
        let p0 = VmfParams::new(mu, 0.0).unwrap();
        let x = UnitQuaternion::new(0.5, 0.1, 0.3, -0.2).unwrap();
        assert_abs_diff_eq!(log_density(&x, &p0), -(2.0 * PI * PI).ln(), epsilon = 1e-14);
        let p5 = VmfParams::new(mu, 5.0).unwrap();
        assert_abs_diff_eq!(log_density(&mu, &p5), log_norm_const(5.0) + 5.0, epsilon = 1e-14);
        assert!(VmfParams::new(mu, -1.0).is_err());
        assert!(VmfParams::new(mu, 2.0 * KAPPA_MAX).is_err());
    }

    #[test]
    fn ratio_examples() {
        assert_eq!(bessel_ratio_a(0.0), 0.0);
        let a = bessel_ratio_a(0.1);
        assert!((a / 0.025 - 1.0).abs() < 0.01);
        let a = bessel_ratio_a(100.0);
        assert!((0.98..1.0).contains(&a));
    }

    #[test]
    fn ratio_inverse_examples() {
        assert_eq!(bessel_ratio_a_inv(0.0).unwrap().kappa, 0.0);
        let k = bessel_ratio_a_inv(bessel_ratio_a(10.0)).unwrap();
        assert_abs_diff_eq!(k.kappa, 10.0, epsilon = 1e-8);
        assert!(!k.saturated);
        let k = bessel_ratio_a_inv(0.999999).unwrap();
        assert_eq!(k.kappa, KAPPA_MAX);
        assert!(k.saturated);
        assert!(matches!(bessel_ratio_a_inv(1.0), Err(Error::ResultantOutOfRange(_))));
        assert!(matches!(bessel_ratio_a_inv(-0.1), Err(Error::ResultantOutOfRange(_))));
    }

    #[test]
    fn ratio_satisfies_its_ode() {
        let mut u: f64 = 1e-3;
        while u < 1e4 {
            let h = 1e-5 * u;
            let num = (bessel_ratio_a(u + h) - bessel_ratio_a(u - h)) / (2.0 * h);
            let a = bessel_ratio_a(u);
            let ode = 1.0 - a * a - 3.0 / u * a;
            assert!((num - ode).abs() < 1e-6, "u = {u}: {num} vs {ode}");
            u *= 1.7;
        }
    }

    #[test]
    fn ml_degenerate_cases() {
        let x = UnitQuaternion::new(0.2, 0.4, 0.4, 0.8).unwrap();
        let fit = ml_estimate(&[x, x, x]).unwrap();
        assert_abs_diff_eq!(fit.params.mu.dot(&x), 1.0, epsilon = 1e-14);
        assert_eq!(fit.params.kappa, KAPPA_MAX);
        assert!(fit.kappa_saturated);
        assert!(matches!(ml_estimate(&[x, -x]), Err(Error::DegenerateResultant(_))));
        assert!(ml_estimate(&[x]).is_err());
    }

    #[test]
    fn sampler_is_deterministic() {
        let p = VmfParams::new(UnitQuaternion::IDENTITY, 7.0).unwrap();
        assert_eq!(sample(&p, 50, 9), sample(&p, 50, 9));
        assert_ne!(sample(&p, 50, 9), sample(&p, 50, 10));
    }

    #[test]
    fn uniform_sampler_has_small_resultant() {
        let p = VmfParams::new(UnitQuaternion::IDENTITY, 0.0).unwrap();
        let n = 10_000;
        let xs = sample(&p, n, 1);
        let g = resultant(&xs);
        let len = g.iter().map(|c| c * c).sum::<f64>().sqrt() / n as f64;
        assert!(len <= 3.0 / (n as f64).sqrt(), "{len}");
    }

    #[test]
    fn sampler_estimator_consistency() {
        let mu = UnitQuaternion::new(0.3, -0.5, 0.1, 0.8).unwrap();
        let p = VmfParams::new(mu, 50.0).unwrap();
        let fit = ml_estimate(&sample(&p, 10_000, 4)).unwrap();
        assert!((fit.params.kappa / 50.0 - 1.0).abs() < 0.05);
        assert!(fit.params.mu.dot(&mu) > 0.999);

        let p = VmfParams::new(mu, 20.0).unwrap();
        let fit = ml_estimate(&sample(&p, 100_000, 5)).unwrap();
        assert!((19.0..=21.0).contains(&fit.params.kappa), "{}", fit.params.kappa);
        assert!(fit.params.mu.dot(&mu) >= 0.999);
    }

    #[test]
    fn kappa_error_shrinks_with_n() {
        let p = VmfParams::new(UnitQuaternion::IDENTITY, 30.0).unwrap();
        let mean_err = |n: usize| -> f64 {
            (0..20)
                .map(|t| (ml_estimate(&sample(&p, n, 100 + t)).unwrap().params.kappa - 30.0).abs())
                .sum::<f64>()
                / 20.0
        };
        let (e2, e3, e4) = (mean_err(100), mean_err(1000), mean_err(10_000));
        assert!(e2 > e3 && e3 > e4, "{e2} {e3} {e4}");
    }

    #[test]
    fn ml_is_equivariant() {
        let p = VmfParams::new(UnitQuaternion::new(0.6, 0.1, 0.7, 0.2).unwrap(), 12.0).unwrap();
        let xs = sample(&p, 500, 21);
        let g = UnitQuaternion::new(0.3, -0.4, 0.5, 0.7).unwrap();
        let rotated: Vec<_> = xs.iter().map(|x| g.compose(x)).collect();
        let a = ml_estimate(&xs).unwrap();
        let b = ml_estimate(&rotated).unwrap();
        assert_abs_diff_eq!(g.compose(&a.params.mu).dot(&b.params.mu), 1.0, epsilon = 1e-10);
        assert_abs_diff_eq!(a.params.kappa, b.params.kappa, epsilon = 1e-10 * a.params.kappa);
    }
}
