//! Exponentially scaled modified Bessel functions of the first kind, for the
//! small real orders that appear in von Mises-Fisher normalizers.

use statrs::function::gamma::ln_gamma;

/// Above this argument the asymptotic expansion is accurate to machine
/// precision for orders up to about 3 (its smallest term is ~e^{-2x}).
const ASYMPTOTIC_FROM: f64 = 30.0;

/// `e^{-x} I_nu(x)` for `x >= 0`, `nu >= 0`.
pub fn scaled_bessel_i(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 0.0 && x >= 0.0);
    if x == 0.0 {
        return if nu == 0.0 { 1.0 } else { 0.0 };
    }
    if x > ASYMPTOTIC_FROM.max(2.0 * nu * nu) {
        if let Some(v) = asymptotic_scaled(nu, x) {
            return v;
        }
    }
    series_scaled(nu, x)
}

/// `ln I_nu(x)` without overflow for large `x`.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    x + scaled_bessel_i(nu, x).ln()
}

/// `I_nu(x) / I_{nu-1}(x)` for `nu >= 1`.
pub fn bessel_ratio(nu: f64, x: f64) -> f64 {
    debug_assert!(nu >= 1.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < 1e-8 {
        // leading term of the power series; next correction is O(x^3)
        return x / (2.0 * nu);
    }
    scaled_bessel_i(nu, x) / scaled_bessel_i(nu - 1.0, x)
}

fn series_scaled(nu: f64, x: f64) -> f64 {
    let half = x / 2.0;
    let q = half * half;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 0.0;
    loop {
        k += 1.0;
        term *= q / (k * (k + nu));
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    let log_lead = nu * half.ln() - ln_gamma(nu + 1.0) - x;
    (log_lead + sum.ln()).exp()
}

fn asymptotic_scaled(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        let odd = 2.0 * kf - 1.0;
        let next = -term * (mu - odd * odd) / (8.0 * kf * x);
        if next == 0.0 {
            // half-integer orders terminate
            break;
        }
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            break;
        }
    }
    Some(sum / (2.0 * std::f64::consts::PI * x).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Plain power series in extended summation; independent of the scaled path
    /// and valid for moderate x.
    fn naive_bessel_i(nu: u32, x: f64) -> f64 {
        let mut sum = 0.0;
        let mut fact_k = 1.0;
        let mut fact_k_nu: f64 = (1..=nu).map(f64::from).product();
        for k in 0..120u32 {
            if k > 0 {
                fact_k *= f64::from(k);
                fact_k_nu *= f64::from(k + nu);
            }
            let term = (x / 2.0).powi((2 * k + nu) as i32) / fact_k / fact_k_nu;
            sum += term;
            if term < 1e-18 * sum {
                break;
            }
        }
        sum
    }

    #[test]
    fn matches_naive_series() {
        for nu in 0..=2u32 {
            for &x in &[0.01, 0.5, 1.0, 5.0, 10.0, 29.0, 31.0, 45.0, 60.0] {
                let want = naive_bessel_i(nu, x) * (-x).exp();
                assert_relative_eq!(scaled_bessel_i(nu as f64, x), want, max_relative = 1e-13);
            }
        }
    }

    #[test]
    fn known_values() {
        // I_0(1), I_1(1) from standard tables
        assert_relative_eq!(scaled_bessel_i(0.0, 1.0) * 1f64.exp(), 1.2660658777520082, max_relative = 1e-14);
        assert_relative_eq!(scaled_bessel_i(1.0, 1.0) * 1f64.exp(), 0.5651591039924851, max_relative = 1e-14);
    }

    #[test]
    fn half_integer_order_closed_form() {
        // I_{1/2}(x) = sqrt(2/(pi x)) sinh x
        for &x in &[0.3, 2.0, 40.0, 300.0] {
            let want = (2.0 / (std::f64::consts::PI * x)).sqrt() * (1.0 - (-2.0 * x).exp()) / 2.0;
            assert_relative_eq!(scaled_bessel_i(0.5, x), want, max_relative = 1e-13);
        }
    }

    #[test]
    fn large_arguments_stay_finite() {
        for &x in &[700.0, 1e3, 1e5] {
            let v = log_bessel_i(1.0, x);
            assert!(v.is_finite());
            assert!(bessel_ratio(2.0, x) < 1.0);
        }
    }
}
