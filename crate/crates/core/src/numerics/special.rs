use crate::{Error, Result};
use alloc::format;
use core::f64::consts::{FRAC_1_SQRT_2, PI};

const MAX_ITER: usize = 200;
const EPS: f64 = 1e-15;
const FPMIN: f64 = 1e-300;

fn check_probability(p: f64) -> Result<()> {
    if p > 0.0 && p < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("probability {p} not in (0,1)")))
    }
}

pub fn ln_gamma(x: f64) -> f64 {
    libm::lgamma(x)
}

pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Standard normal survival function, accurate in the upper tail.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

// Acklam's rational approximation, used only as a Newton starting point.
fn normal_quantile_guess(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383_577_518_672_69e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = libm::sqrt(-2.0 * libm::log(p));
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = libm::sqrt(-2.0 * libm::log(1.0 - p));
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    }
}

/// Safeguarded Newton iteration for an increasing function `f` with
/// derivative `df`, root bracketed in `[lo, hi]`.
fn safeguarded_newton(
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    start: f64,
    tol: f64,
) -> f64 {
    let mut x = start.clamp(lo, hi);
    for _ in 0..MAX_ITER {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let d = df(x);
        let mut next = if d > 0.0 && d.is_finite() { x - fx / d } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        let step = (next - x).abs();
        x = next;
        if step <= tol * (1.0 + x.abs()) || hi - lo <= tol * (1.0 + x.abs()) {
            return x;
        }
    }
    x
}

/// Quantile of the standard normal distribution.
pub fn std_normal_quantile(p: f64) -> Result<f64> {
    check_probability(p)?;
    if p == 0.5 {
        return Ok(0.0);
    }
    // Work in the lower tail so that the target probability is exact.
    let (target, sign) = if p < 0.5 { (p, 1.0) } else { (1.0 - p, -1.0) };
    let guess = normal_quantile_guess(target);
    let z = safeguarded_newton(
        |z| (normal_cdf(z) - target) / target,
        |z| normal_pdf(z) / target,
        -40.0,
        0.0,
        guess,
        1e-14,
    );
    Ok(sign * z)
}

fn gamma_series(a: f64, x: f64) -> f64 {
    let mut ap = a;
    let mut sum = 1.0 / a;
    let mut del = sum;
    for _ in 0..10 * MAX_ITER {
        ap += 1.0;
        del *= x / ap;
        sum += del;
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    sum * libm::exp(-x + a * libm::log(x) - ln_gamma(a))
}

fn gamma_continued_fraction(a: f64, x: f64) -> f64 {
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / FPMIN;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..=10 * MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = b + an / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    libm::exp(-x + a * libm::log(x) - ln_gamma(a)) * h
}

/// Regularized lower incomplete gamma function P(a, x).
pub fn regularized_gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else if x < a + 1.0 {
        gamma_series(a, x)
    } else {
        1.0 - gamma_continued_fraction(a, x)
    }
}

/// Regularized upper incomplete gamma function Q(a, x) = 1 - P(a, x).
pub fn regularized_gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if x < a + 1.0 {
        1.0 - gamma_series(a, x)
    } else {
        gamma_continued_fraction(a, x)
    }
}

pub fn chi_square_cdf(x: f64, df: u32) -> f64 {
    regularized_gamma_p(0.5 * df as f64, 0.5 * x)
}

fn chi_square_pdf(x: f64, df: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * df as f64;
    libm::exp((k - 1.0) * libm::log(x) - 0.5 * x - k * core::f64::consts::LN_2 - ln_gamma(k))
}

/// Quantile of the chi-square distribution with `df` degrees of freedom.
pub fn chi_square_quantile(p: f64, df: u32) -> Result<f64> {
    check_probability(p)?;
    if df == 0 {
        return Err(Error::Domain("chi-square degrees of freedom must be >= 1".into()));
    }
    let mut hi = (df as f64).max(1.0);
    while chi_square_cdf(hi, df) < p {
        hi *= 2.0;
    }
    let start = {
        // Wilson-Hilferty starting point.
        let k = df as f64;
        let z = normal_quantile_guess(p);
        let t = 1.0 - 2.0 / (9.0 * k) + z * libm::sqrt(2.0 / (9.0 * k));
        (k * t * t * t).max(1e-8)
    };
    Ok(safeguarded_newton(
        |x| chi_square_cdf(x, df) - p,
        |x| chi_square_pdf(x, df),
        0.0,
        hi,
        start,
        1e-14,
    ))
}

fn beta_continued_fraction(a: f64, b: f64, x: f64) -> f64 {
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < FPMIN {
        d = FPMIN;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=10 * MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < FPMIN {
            d = FPMIN;
        }
        c = 1.0 + aa / c;
        if c.abs() < FPMIN {
            c = FPMIN;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Regularized incomplete beta function I_x(a, b).
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
        + a * libm::log(x)
        + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_continued_fraction(a, b, x) / a
    } else {
        1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b
    }
}

pub fn student_t_pdf(t: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * libm::log(nu * PI);
    libm::exp(ln_c - 0.5 * (nu + 1.0) * libm::log1p(t * t / nu))
}

/// Upper tail P(T > t) of the Student-t distribution.
pub fn student_t_sf(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    let tail = 0.5 * regularized_beta(x, 0.5 * nu, 0.5);
    if t >= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

pub fn student_t_cdf(t: f64, nu: f64) -> f64 {
    let x = nu / (nu + t * t);
    let tail = 0.5 * regularized_beta(x, 0.5 * nu, 0.5);
    if t >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Quantile of the Student-t distribution with `nu` degrees of freedom.
pub fn student_t_quantile(p: f64, nu: f64) -> Result<f64> {
    check_probability(p)?;
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::Domain(format!("degrees of freedom {nu} must be positive")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }
    // Solve in the upper tail: find t > 0 with sf(t) = target.
    let (target, sign) = if p > 0.5 { (1.0 - p, 1.0) } else { (p, -1.0) };
    // Tail approximation sf(t) ~ c t^{-nu} gives a good start far out.
    let z = -normal_quantile_guess(target);
    let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * libm::log(nu * PI)
        + 0.5 * (nu + 1.0) * libm::log(nu)
        - libm::log(nu);
    let tail_guess = libm::exp((ln_c - libm::log(target)) / nu);
    let start = if target < 0.01 { tail_guess.max(z) } else { z };
    let mut hi = start.max(1.0);
    while student_t_sf(hi, nu) > target {
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::Numeric(format!("t quantile bracket overflow at p={p}")));
        }
    }
    // Increasing function of t: target - sf(t), relative scale.
    let t = safeguarded_newton(
        |t| (target - student_t_sf(t, nu)) / target,
        |t| student_t_pdf(t, nu) / target,
        0.0,
        hi,
        start,
        1e-14,
    );
    Ok(sign * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bisect_inverse(cdf: impl Fn(f64) -> f64, p: f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-13 {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_quantile_examples() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
        let oracle = bisect_inverse(normal_cdf, 0.975, -10.0, 10.0);
        let z = std_normal_quantile(0.975).unwrap();
        assert!((z - oracle).abs() < 1e-10);
        assert!((z - 1.959964).abs() < 1e-6);
        let a = std_normal_quantile(0.9).unwrap();
        let b = std_normal_quantile(0.1).unwrap();
        assert!((a + b).abs() < 1e-12);
    }

    #[test]
    fn quantiles_reject_bad_probability() {
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(chi_square_quantile(1.5, 2).is_err());
        assert!(chi_square_quantile(0.5, 0).is_err());
        assert!(student_t_quantile(0.5, -1.0).is_err());
        assert!(student_t_quantile(f64::NAN, 3.0).is_err());
    }

    #[test]
    fn chi_square_table_values() {
        assert!((chi_square_quantile(0.95, 1).unwrap() - 3.8415).abs() < 5e-4);
        assert!((chi_square_quantile(0.95, 3).unwrap() - 7.8147).abs() < 5e-4);
        assert!((chi_square_quantile(0.95, 4).unwrap() - 9.4877).abs() < 5e-4);
        // df=2 has the closed form -2 log(1-p).
        let x = chi_square_quantile(0.9, 2).unwrap();
        assert!((x + 2.0 * libm::log(0.1)).abs() < 1e-9);
    }

    #[test]
    fn student_t_examples() {
        assert_eq!(student_t_quantile(0.5, 3.0).unwrap(), 0.0);
        assert!((student_t_quantile(0.75, 1.0).unwrap() - 1.0).abs() < 1e-10);
        let oracle = bisect_inverse(|t| student_t_cdf(t, 3.0), 0.95, -50.0, 50.0);
        let t = student_t_quantile(0.95, 3.0).unwrap();
        assert!((t - oracle).abs() < 1e-8);
        assert!((t - 2.35336).abs() < 1e-5);
        // Cauchy closed form far in the tail.
        let p = 1.0 - 1e-6;
        let exact = libm::tan(PI * (p - 0.5));
        assert!((student_t_quantile(p, 1.0).unwrap() / exact - 1.0).abs() < 1e-7);
    }

    #[test]
    fn cdf_of_quantile_round_trips() {
        for i in 1..100 {
            let p = i as f64 / 100.0;
            let z = std_normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() < 1e-8, "normal p={p}");
            for df in [1u32, 2, 3, 4, 7, 30] {
                let x = chi_square_quantile(p, df).unwrap();
                assert!((chi_square_cdf(x, df) - p).abs() < 1e-8, "chi2 p={p} df={df}");
            }
            for nu in [0.7, 1.0, 2.5, 3.0, 10.0] {
                let t = student_t_quantile(p, nu).unwrap();
                assert!((student_t_cdf(t, nu) - p).abs() < 1e-8, "t p={p} nu={nu}");
            }
        }
    }

    #[test]
    fn deep_tail_quantiles_stay_accurate() {
        for &p in &[1e-12, 1e-8, 1e-4] {
            let z = std_normal_quantile(p).unwrap();
            assert!((normal_cdf(z) / p - 1.0).abs() < 1e-9);
            let upper = 1.0 - p;
            let t = student_t_quantile(upper, 3.0).unwrap();
            assert!((student_t_sf(t, 3.0) / (1.0 - upper) - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn incomplete_gamma_exponential_case() {
        // P(1, x) = 1 - exp(-x).
        for &x in &[0.1, 1.0, 3.0, 20.0] {
            assert!((regularized_gamma_p(1.0, x) - (1.0 - libm::exp(-x))).abs() < 1e-14);
            assert!((regularized_gamma_q(1.0, x) - libm::exp(-x)).abs() < 1e-14);
        }
    }
}
