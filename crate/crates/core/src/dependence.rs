//! Empirical tail copula, its unit integrals, the extremal coefficient, and
//! closed-form tail copulas used as oracles.

use crate::numerics::integrate_1d;
use crate::sample::{check_level, compute_ranks, MarginalRanks, MultivariateSample};
use crate::{Error, Result};
use alloc::format;
use alloc::vec::Vec;

/// Rank-based step-function estimate of the tail copula of margins `(j, l)`.
///
/// Observation `i` sits at `(a_i, b_i) / ((n+1)(1-τ))` with
/// `a_i = n + 1 - r_{i,j}`; counts are normalized by `n(1-τ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalTailCopula {
    pub j: usize,
    pub l: usize,
    pub n: usize,
    pub tau: f64,
    points: Vec<(u32, u32)>,
    scale: f64,
    norm: f64,
}

impl EmpiricalTailCopula {
    pub fn new(sample: &MultivariateSample, tau: f64, j: usize, l: usize) -> Result<Self> {
        sample.check_margin(j)?;
        sample.check_margin(l)?;
        Self::from_ranks(&compute_ranks(sample), tau, j, l)
    }

    pub fn from_ranks(ranks: &MarginalRanks, tau: f64, j: usize, l: usize) -> Result<Self> {
        check_level(tau)?;
        if j == l {
            return Err(Error::Domain(format!("tail copula needs distinct margins, got ({j}, {l})")));
        }
        let n = ranks.n();
        let top = n as u32 + 1;
        let points = ranks.column(j).iter().zip(ranks.column(l)).map(|(&rj, &rl)| (top - rj, top - rl)).collect();
        let scale = snap((n + 1) as f64 * (1.0 - tau));
        Ok(Self { j, l, n, tau, points, scale, norm: snap(n as f64 * (1.0 - tau)) })
    }

    /// `n(1-τ)`, unfloored.
    pub fn normalizer(&self) -> f64 {
        self.norm
    }

    pub fn eval(&self, u: f64, v: f64) -> f64 {
        if u <= 0.0 || v <= 0.0 {
            return 0.0;
        }
        let (cu, cv) = (u * self.scale, v * self.scale);
        let count = self.points.iter().filter(|&&(a, b)| a as f64 <= cu && b as f64 <= cv).count();
        count as f64 / self.norm
    }

    /// `∫_0^1 R̂(u, 1) du/u` (`axis = 0`) or `∫_0^1 R̂(1, u) du/u` (`axis = 1`).
    pub fn unit_integral(&self, axis: usize) -> f64 {
        let c = self.scale;
        let mut breaks: Vec<u32> = self
            .points
            .iter()
            .filter_map(|&(a, b)| {
                let (moving, fixed) = if axis == 0 { (a, b) } else { (b, a) };
                (fixed as f64 <= c && moving as f64 <= c).then_some(moving)
            })
            .collect();
        breaks.sort_unstable();
        // R̂(·, 1) steps up by 1/n(1-τ) at each breakpoint; integrate s/norm · du/u.
        let mut total = 0.0;
        for (s, &a) in breaks.iter().enumerate() {
            let upper = breaks.get(s + 1).map_or(c, |&b| b as f64);
            total += (s + 1) as f64 * libm::log(upper / a as f64);
        }
        total / self.norm
    }

    pub fn extremal_coefficient(&self) -> f64 {
        2.0 - self.eval(1.0, 1.0)
    }
}

pub fn empirical_tail_copula_eval(sample: &MultivariateSample, tau: f64, j: usize, l: usize, u: f64, v: f64) -> Result<f64> {
    if u < 0.0 || v < 0.0 {
        return Err(Error::Domain(format!("tail copula arguments must be >= 0, got ({u}, {v})")));
    }
    Ok(EmpiricalTailCopula::new(sample, tau, j, l)?.eval(u, v))
}

pub fn tail_copula_unit_integral(sample: &MultivariateSample, tau: f64, j: usize, l: usize, axis: usize) -> Result<f64> {
    if axis > 1 {
        return Err(Error::Domain(format!("axis must be 0 or 1, got {axis}")));
    }
    Ok(EmpiricalTailCopula::new(sample, tau, j, l)?.unit_integral(axis))
}

/// `ω̂ = 2 - R̂(1, 1)`.
pub fn extremal_coefficient(sample: &MultivariateSample, tau: f64, j: usize, l: usize) -> Result<f64> {
    Ok(EmpiricalTailCopula::new(sample, tau, j, l)?.extremal_coefficient())
}

// `n(1-τ)` with `τ = 1 - k/n` misses `k` by an ulp or two; restore the integer.
fn snap(x: f64) -> f64 {
    let r = libm::round(x);
    if (x - r).abs() <= 1e-9 * x.max(1.0) {
        r
    } else {
        x
    }
}

/// Closed-form tail copulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OracleTailCopula {
    Independent,
    Comonotone,
    /// Extreme-value limit of the Gumbel copula with parameter `ϑ >= 1`.
    Logistic(f64),
}

impl OracleTailCopula {
    pub fn logistic(theta: f64) -> Result<Self> {
        if !(theta >= 1.0) || !theta.is_finite() {
            return Err(Error::Domain(format!("logistic parameter must be >= 1, got {theta}")));
        }
        Ok(Self::Logistic(theta))
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        if x <= 0.0 || y <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Independent => 0.0,
            Self::Comonotone => x.min(y),
            Self::Logistic(theta) => {
                if x.is_infinite() || y.is_infinite() {
                    return x.min(y);
                }
                // x + y - (x^ϑ + y^ϑ)^{1/ϑ} = lo - hi((1 + r^ϑ)^{1/ϑ} - 1), r = lo/hi.
                let (lo, hi) = if x < y { (x, y) } else { (y, x) };
                let r = lo / hi;
                lo - hi * libm::expm1(libm::log1p(libm::pow(r, theta)) / theta)
            }
        }
    }

    /// `∫_0^1 R(u, 1) du/u`; the oracles are symmetric so both axes agree.
    pub fn unit_integral(&self) -> Result<f64> {
        match *self {
            Self::Independent => Ok(0.0),
            Self::Comonotone => Ok(1.0),
            Self::Logistic(_) => integrate_1d(|u| if u <= 0.0 { self.limit_at_zero() } else { self.eval(u, 1.0) / u }, 0.0, 1.0, 1e-13),
        }
    }

    fn limit_at_zero(&self) -> f64 {
        match *self {
            Self::Logistic(1.0) => 0.0,
            Self::Logistic(_) => 1.0,
            Self::Comonotone => 1.0,
            Self::Independent => 0.0,
        }
    }
}

/// Pairwise oracle assignment for a `d`-dimensional model.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleMatrix {
    d: usize,
    pairs: Vec<OracleTailCopula>,
}

impl OracleMatrix {
    pub fn uniform(d: usize, oracle: OracleTailCopula) -> Self {
        Self { d, pairs: alloc::vec![oracle; d * d] }
    }

    pub fn set(&mut self, j: usize, l: usize, oracle: OracleTailCopula) {
        self.pairs[j * self.d + l] = oracle;
        self.pairs[l * self.d + j] = oracle;
    }

    pub fn get(&self, j: usize, l: usize) -> OracleTailCopula {
        self.pairs[j * self.d + l]
    }

    pub fn d(&self) -> usize {
        self.d
    }
}
