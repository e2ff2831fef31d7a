//! Univariate tail estimators: LAWS expectile, empirical quantile, Hill
//! index, quantile-based expectile, Weissman extrapolation.

use crate::sample::{check_level, effective_size};
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;

/// `φ_τ(y) = |τ - 1{y ≤ 0}| y`.
#[inline]
pub fn phi(tau: f64, y: f64) -> f64 {
    if y > 0.0 {
        tau * y
    } else {
        (1.0 - tau) * y
    }
}

/// Asymmetric squared loss `η_τ(y) = |τ - 1{y ≤ 0}| y²`.
#[inline]
pub fn eta(tau: f64, y: f64) -> f64 {
    y * phi(tau, y)
}

fn sorted(column: &[f64]) -> Vec<f64> {
    let mut v = column.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

pub fn laws_expectile(column: &[f64], tau: f64) -> Result<f64> {
    check_level(tau)?;
    if column.len() < 2 {
        return Err(Error::InvalidSample(format!("LAWS needs n >= 2, got {}", column.len())));
    }
    Ok(laws_expectile_sorted(&sorted(column), tau))
}

/// Root of `ψ(θ) = Σ φ_τ(x_i - θ)` on ascending data.
///
/// `ψ` is piecewise linear with breakpoints at the observations, so the root
/// is found on the segment where `ψ` changes sign and solved in closed form.
pub fn laws_expectile_sorted(xs: &[f64], tau: f64) -> f64 {
    let n = xs.len();
    let (lo, hi) = (xs[0], xs[n - 1]);
    if lo == hi {
        return lo;
    }
    // Center on the midrange to keep the prefix sums small.
    let c = 0.5 * (lo + hi);
    let total: f64 = xs.iter().map(|x| x - c).sum();
    // ψ at a breakpoint x_m, with all x_i <= x_m on the lower branch.
    let psi_at = |m: usize, below_sum: f64| {
        let t = xs[m] - c;
        let below = (m + 1) as f64;
        tau * ((total - below_sum) - (n as f64 - below) * t) + (1.0 - tau) * (below_sum - below * t)
    };
    // (count, centered sum) of the observations at or below the previous breakpoint.
    let mut prev: Option<(usize, f64)> = None;
    let mut below_sum = 0.0;
    for m in 0..n {
        below_sum += xs[m] - c;
        // Ties: only the last copy of a value is a breakpoint.
        if m + 1 < n && xs[m + 1] == xs[m] {
            continue;
        }
        if psi_at(m, below_sum) <= 0.0 {
            let Some((count, sum)) = prev else { return xs[m] };
            let below = count as f64;
            let theta = (tau * (total - sum) + (1.0 - tau) * sum) / (tau * (n as f64 - below) + (1.0 - tau) * below);
            return (theta + c).clamp(xs[count - 1], xs[m]);
        }
        prev = Some((m + 1, below_sum));
    }
    xs[n - 1]
}

/// `X_{n - ⌊n(1-τ)⌋, n}`.
pub fn empirical_quantile(column: &[f64], tau: f64) -> Result<f64> {
    check_level(tau)?;
    let xs = sorted(column);
    empirical_quantile_sorted(&xs, tau)
}

pub fn empirical_quantile_sorted(xs: &[f64], tau: f64) -> Result<f64> {
    let n = xs.len();
    let k = effective_size(n, tau);
    if k >= n {
        return Err(Error::Level(format!("tau = {tau} gives order index {} < 1", n as i64 - k as i64)));
    }
    Ok(xs[n - k - 1])
}

/// Hill estimator from the top `k` order statistics.
pub fn hill_estimator(column: &[f64], k: usize) -> Result<f64> {
    hill_estimator_sorted(&sorted(column), k)
}

pub fn hill_estimator_sorted(xs: &[f64], k: usize) -> Result<f64> {
    let n = xs.len();
    if k == 0 || k >= n {
        return Err(Error::Level(format!("Hill needs 1 <= k <= n - 1, got k = {k}, n = {n}")));
    }
    let threshold = xs[n - k - 1];
    if threshold <= 0.0 {
        return Err(Error::NonPositiveTail { threshold });
    }
    let log_t = libm::log(threshold);
    let sum: f64 = xs[n - k..].iter().map(|&x| libm::log(x) - log_t).sum();
    Ok(sum / k as f64)
}

/// `(γ⁻¹ - 1)^{-γ}`, the asymptotic expectile-to-quantile ratio.
pub fn qb_factor(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::QbFactorUndefined { gamma });
    }
    Ok(libm::pow(1.0 / gamma - 1.0, -gamma))
}

pub fn qb_expectile(column: &[f64], tau: f64) -> Result<f64> {
    check_level(tau)?;
    let xs = sorted(column);
    let gamma = hill_estimator_sorted(&xs, effective_size(xs.len(), tau))?;
    Ok(qb_factor(gamma)? * empirical_quantile_sorted(&xs, tau)?)
}

/// `((1-τ')/(1-τ))^{-γ}`.
pub fn weissman_factor(tau: f64, tau_prime: f64, gamma: f64) -> f64 {
    libm::pow((1.0 - tau_prime) / (1.0 - tau), -gamma)
}

fn check_extrapolation(tau: f64, tau_prime: f64) -> Result<()> {
    check_level(tau)?;
    check_level(tau_prime)?;
    if tau_prime < tau {
        return Err(Error::Level(format!("extrapolation needs tau <= tau', got {tau} > {tau_prime}")));
    }
    Ok(())
}

pub fn weissman_quantile(column: &[f64], tau: f64, tau_prime: f64) -> Result<f64> {
    check_extrapolation(tau, tau_prime)?;
    let xs = sorted(column);
    let gamma = hill_estimator_sorted(&xs, effective_size(xs.len(), tau))?;
    Ok(weissman_factor(tau, tau_prime, gamma) * empirical_quantile_sorted(&xs, tau)?)
}

pub fn extrapolate_expectile_laws(column: &[f64], tau: f64, tau_prime: f64) -> Result<f64> {
    check_extrapolation(tau, tau_prime)?;
    let xs = sorted(column);
    let gamma = hill_estimator_sorted(&xs, effective_size(xs.len(), tau))?;
    Ok(weissman_factor(tau, tau_prime, gamma) * laws_expectile_sorted(&xs, tau))
}

pub fn extrapolate_expectile_qb(column: &[f64], tau: f64, tau_prime: f64) -> Result<f64> {
    check_extrapolation(tau, tau_prime)?;
    let xs = sorted(column);
    let gamma = hill_estimator_sorted(&xs, effective_size(xs.len(), tau))?;
    Ok(qb_factor(gamma)? * weissman_factor(tau, tau_prime, gamma) * empirical_quantile_sorted(&xs, tau)?)
}

/// `Σ|x_i - θ| 1{x_i ≤ θ} / Σ|x_i - θ|`; equals `τ` at the `τ`-expectile.
pub fn gain_loss_ratio(column: &[f64], theta: f64) -> Result<f64> {
    let (mut below, mut total) = (0.0, 0.0);
    for &x in column {
        let a = (x - theta).abs();
        total += a;
        if x <= theta {
            below += a;
        }
    }
    if total == 0.0 {
        return Err(Error::Domain(format!("every observation equals theta = {theta}")));
    }
    Ok(below / total)
}

/// `m(x) = (1-x)⁻¹ - log(x⁻¹ - 1)`.
pub fn m_function(x: f64) -> Result<f64> {
    if !(x > 0.0 && x < 1.0) {
        return Err(Error::Domain(format!("m(x) needs x in (0, 1), got {x}")));
    }
    Ok(1.0 / (1.0 - x) - libm::log(1.0 / x - 1.0))
}

/// Per-margin estimates at the intermediate level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalTailEstimates {
    pub gamma_hat: f64,
    pub q_hat: f64,
    pub xi_laws: f64,
    /// `None` when `γ̂ ∉ (0, 1)`.
    pub xi_qb: Option<f64>,
}

/// Everything one margin contributes to the joint estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginFit {
    pub sorted: Vec<f64>,
    pub tau: f64,
    pub k: usize,
    pub mean: f64,
    pub estimates: MarginalTailEstimates,
}

impl MarginFit {
    pub fn new(column: &[f64], tau: f64) -> Result<Self> {
        check_level(tau)?;
        let xs = sorted(column);
        let n = xs.len();
        let k = effective_size(n, tau);
        let gamma_hat = hill_estimator_sorted(&xs, k)?;
        let q_hat = empirical_quantile_sorted(&xs, tau)?;
        let xi_laws = laws_expectile_sorted(&xs, tau);
        let xi_qb = qb_factor(gamma_hat).ok().map(|f| f * q_hat);
        let mean = column.iter().sum::<f64>() / n as f64;
        Ok(Self { sorted: xs, tau, k, mean, estimates: MarginalTailEstimates { gamma_hat, q_hat, xi_laws, xi_qb } })
    }

    pub fn gamma(&self) -> f64 {
        self.estimates.gamma_hat
    }

    pub fn xi_qb(&self) -> Result<f64> {
        self.estimates.xi_qb.ok_or(Error::QbFactorUndefined { gamma: self.gamma() })
    }

    /// Empirical survival `(1/n) #{x_i > t}`.
    pub fn survival(&self, t: f64) -> f64 {
        let not_above = self.sorted.partition_point(|&x| x <= t);
        (self.sorted.len() - not_above) as f64 / self.sorted.len() as f64
    }

    pub fn extrapolated_laws(&self, tau_prime: f64) -> f64 {
        weissman_factor(self.tau, tau_prime, self.gamma()) * self.estimates.xi_laws
    }

    pub fn extrapolated_qb(&self, tau_prime: f64) -> Result<f64> {
        Ok(weissman_factor(self.tau, tau_prime, self.gamma()) * self.xi_qb()?)
    }

    pub fn weissman(&self, tau_prime: f64) -> f64 {
        weissman_factor(self.tau, tau_prime, self.gamma()) * self.estimates.q_hat
    }
}

/// Population parameters of one margin, for oracle computations.
///
/// `lambda` is the limit of `√(n(1-τ)) A((1-τ)⁻¹)` and `mu` the limit of
/// `√(n(1-τ)) / q_τ`; neither is estimated anywhere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TheoreticalMarginModel {
    pub gamma: f64,
    pub rho: f64,
    pub lambda: f64,
    pub mu: f64,
    pub mean: f64,
}

impl TheoreticalMarginModel {
    pub fn new(gamma: f64, rho: f64, lambda: f64, mu: f64, mean: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(Error::Domain(format!("gamma must lie in (0, 1), got {gamma}")));
        }
        if !(rho <= 0.0) {
            return Err(Error::Domain(format!("rho must be <= 0, got {rho}")));
        }
        Ok(Self { gamma, rho, lambda, mu, mean })
    }

    /// Asymptotic bias of the quantile-based intermediate expectile.
    pub fn bias_qb(&self) -> f64 {
        let g = self.gamma;
        let m = m_function(g).expect("gamma checked at construction");
        let r = 1.0 / g - 1.0;
        let second = if self.rho == 0.0 {
            // (r^{-ρ} - 1)/ρ → -log r as ρ → 0.
            m - 1.0 / (1.0 - g) + libm::log(r)
        } else {
            let rr = libm::pow(r, -self.rho);
            m / (1.0 - self.rho) - rr / (1.0 - g - self.rho) - (rr - 1.0) / self.rho
        };
        -g * libm::pow(r, g) * self.mean * self.mu + second * self.lambda
    }

    /// Asymptotic bias `λ / (1 - ρ)` of the extrapolated estimators.
    pub fn bias_star(&self) -> f64 {
        self.lambda / (1.0 - self.rho)
    }
}
