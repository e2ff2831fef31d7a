//! Seedable samplers for the simulation models, their true expectiles, and
//! the per-replication Monte Carlo evaluators.

use crate::numerics::{
    brent, ln_gamma, normal_sf, regularized_gamma_p, student_t_pdf, student_t_quantile, student_t_sf, SpdMatrix,
};
use crate::covariance::SampleFit;
use crate::inference::{marginal_interval_from_fit, region_from_fit, Method, RegionKind};
use crate::sample::{check_level, MultivariateSample};
use crate::testing::{test_from_fit, CovarianceScaling, TestKind};
use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, Gamma, StandardNormal};

/// Per-replication random stream: ChaCha20 keyed by the master seed, with
/// the replication index selecting the ChaCha stream.
#[derive(Debug, Clone)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
    rng: ChaCha20Rng,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        let mut state = master_seed;
        let mut key = [0u8; 32];
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream_index);
        Self { master_seed, stream_index, rng }
    }

    /// Uniform on the open interval (0, 1).
    pub fn open_uniform(&mut self) -> f64 {
        loop {
            let u: f64 = self.rng.random();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn exp1(&mut self) -> f64 {
        Exp1.sample(&mut self.rng)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    ClaytonFrechet,
    GaussianStudent,
    GumbelFrechet,
    MultivariateStudent,
    UnivariateFrechet,
    UnivariatePareto,
    UnivariateStudent,
}

impl ModelKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::ClaytonFrechet => "clayton_frechet",
            Self::GaussianStudent => "gaussian_student",
            Self::GumbelFrechet => "gumbel_frechet",
            Self::MultivariateStudent => "multivariate_student",
            Self::UnivariateFrechet => "univariate_frechet",
            Self::UnivariatePareto => "univariate_pareto",
            Self::UnivariateStudent => "univariate_student",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "clayton_frechet" | "i" | "1" => Self::ClaytonFrechet,
            "gaussian_student" | "ii" | "2" => Self::GaussianStudent,
            "gumbel_frechet" | "iii" | "3" => Self::GumbelFrechet,
            "multivariate_student" | "iv" | "4" => Self::MultivariateStudent,
            "univariate_frechet" | "frechet" => Self::UnivariateFrechet,
            "univariate_pareto" | "pareto" => Self::UnivariatePareto,
            "univariate_student" | "student" => Self::UnivariateStudent,
            other => return Err(Error::Domain(format!("unknown model {other:?}"))),
        })
    }

    pub fn is_univariate(&self) -> bool {
        matches!(self, Self::UnivariateFrechet | Self::UnivariatePareto | Self::UnivariateStudent)
    }
}

/// Marginal law of one coordinate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    /// `F(x) = exp(-x^{-1/γ})`.
    Frechet { gamma: f64 },
    /// `F(x) = 1 - x^{-1/γ}`, `x >= 1`.
    Pareto { gamma: f64 },
    /// Student-t with `ν = 1/γ` degrees of freedom.
    Student { gamma: f64 },
}

impl Margin {
    pub fn gamma(&self) -> f64 {
        match *self {
            Self::Frechet { gamma } | Self::Pareto { gamma } | Self::Student { gamma } => gamma,
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Frechet { gamma } => {
                if x <= 0.0 {
                    0.0
                } else {
                    libm::exp(-libm::pow(x, -1.0 / gamma))
                }
            }
            Self::Pareto { gamma } => {
                if x <= 1.0 {
                    0.0
                } else {
                    1.0 - libm::pow(x, -1.0 / gamma)
                }
            }
            Self::Student { gamma } => 1.0 - student_t_sf(x, 1.0 / gamma),
        }
    }

    pub fn survival(&self, x: f64) -> f64 {
        match *self {
            Self::Frechet { gamma } => {
                if x <= 0.0 {
                    1.0
                } else {
                    -libm::expm1(-libm::pow(x, -1.0 / gamma))
                }
            }
            Self::Pareto { gamma } => {
                if x <= 1.0 {
                    1.0
                } else {
                    libm::pow(x, -1.0 / gamma)
                }
            }
            Self::Student { gamma } => student_t_sf(x, 1.0 / gamma),
        }
    }

    /// Inverse CDF at `u ∈ (0, 1)`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        check_level(u)?;
        Ok(match *self {
            Self::Frechet { gamma } => libm::pow(-libm::log(u), -gamma),
            Self::Pareto { gamma } => libm::pow(1.0 - u, -gamma),
            Self::Student { gamma } => student_t_quantile(u, 1.0 / gamma)?,
        })
    }

    /// The value whose survival probability is `p`, accurate for tiny `p`.
    pub fn upper_quantile(&self, p: f64) -> Result<f64> {
        check_level(p)?;
        Ok(match *self {
            Self::Frechet { gamma } => libm::pow(-libm::log1p(-p), -gamma),
            Self::Pareto { gamma } => libm::pow(p, -gamma),
            Self::Student { gamma } => -student_t_quantile(p, 1.0 / gamma)?,
        })
    }

    pub fn mean(&self) -> Result<f64> {
        let g = self.gamma();
        if g >= 1.0 {
            return Err(Error::Domain(format!("mean undefined for gamma = {g}")));
        }
        Ok(match self {
            Self::Frechet { .. } => libm::exp(ln_gamma(1.0 - g)),
            Self::Pareto { .. } => 1.0 / (1.0 - g),
            Self::Student { .. } => 0.0,
        })
    }

    /// `E[(X - θ)_+]`.
    pub fn stop_loss(&self, theta: f64) -> Result<f64> {
        let g = self.gamma();
        let mean = self.mean()?;
        Ok(match *self {
            Self::Frechet { gamma } => {
                if theta <= 0.0 {
                    mean - theta
                } else {
                    // E[X 1{X > θ}] = Γ(1-γ) P(1-γ, θ^{-1/γ}).
                    let t = libm::pow(theta, -1.0 / gamma);
                    mean * regularized_gamma_p(1.0 - g, t) + theta * libm::expm1(-t)
                }
            }
            Self::Pareto { gamma } => {
                if theta <= 1.0 {
                    mean - theta
                } else {
                    gamma / (1.0 - gamma) * libm::pow(theta, 1.0 - 1.0 / gamma)
                }
            }
            Self::Student { gamma } => {
                let nu = 1.0 / gamma;
                if theta >= 0.0 {
                    (nu + theta * theta) / (nu - 1.0) * student_t_pdf(theta, nu) - theta * student_t_sf(theta, nu)
                } else {
                    // E(X - θ)_+ = E(X - θ) + E(θ - X)_+, and θ - X has the law of X - (-θ).
                    let m = Self::Student { gamma }.stop_loss(-theta)?;
                    -theta + m
                }
            }
        })
    }

    /// `τ`-expectile as the root of `(2τ - 1) E(X - θ)_+ = (1 - τ)(θ - E X)`.
    pub fn expectile(&self, tau: f64) -> Result<f64> {
        check_level(tau)?;
        let mean = self.mean()?;
        let f = |theta: f64| {
            let sl = self.stop_loss(theta).unwrap_or(f64::NAN);
            ((2.0 * tau - 1.0) * sl - (1.0 - tau) * (theta - mean)) / (1.0 - tau)
        };
        let scale = self.upper_quantile(1.0 - tau)?.abs().max(1.0);
        let (mut lo, mut hi) = (mean - scale, mean + scale);
        while f(lo) <= 0.0 {
            lo -= 2.0 * (hi - lo);
        }
        while f(hi) >= 0.0 {
            hi += 2.0 * (hi - lo);
            if !hi.is_finite() {
                return Err(Error::Numeric(format!("no bracket for the {tau}-expectile")));
            }
        }
        brent(f, lo, hi, 1e-12 * scale)
    }

    /// Value of the first-order condition `E[φ_τ(X - θ)]` scaled by `1/(1-τ)`.
    pub fn first_order_condition(&self, tau: f64, theta: f64) -> Result<f64> {
        let sl = self.stop_loss(theta)?;
        Ok(((2.0 * tau - 1.0) * sl - (1.0 - tau) * (theta - self.mean()?)) / (1.0 - tau))
    }
}

fn correlation_entries(d: usize) -> Result<Vec<f64>> {
    // Upper triangles, row by row.
    let upper: &[f64] = match d {
        2 => &[0.8],
        3 => &[0.8, 0.6, 0.4],
        4 => &[0.8, 0.6, 0.4, 0.5, 0.4, 0.4],
        5 => &[0.8, 0.6, 0.4, 0.2, 0.5, 0.4, 0.3, 0.6, 0.4, 0.3],
        _ => return Err(Error::Domain(format!("correlation matrices are listed for d = 2..5, got {d}"))),
    };
    let mut m = vec![0.0; d * d];
    let mut it = upper.iter();
    for j in 0..d {
        m[j * d + j] = 1.0;
        for l in (j + 1)..d {
            let r = *it.next().expect("listed entries");
            m[j * d + l] = r;
            m[l * d + j] = r;
        }
    }
    Ok(m)
}

/// Lower Cholesky factor, row-major.
fn cholesky_lower(dim: usize, a: &[f64]) -> Result<Vec<f64>> {
    let mut l = vec![0.0; dim * dim];
    for i in 0..dim {
        for j in 0..=i {
            let s = a[i * dim + j] - (0..j).map(|k| l[i * dim + k] * l[j * dim + k]).sum::<f64>();
            if i == j {
                if s <= 0.0 {
                    return Err(Error::Domain("correlation matrix is not positive definite".into()));
                }
                l[i * dim + i] = libm::sqrt(s);
            } else {
                l[i * dim + j] = s / l[j * dim + j];
            }
        }
    }
    Ok(l)
}

/// A simulation model with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationModel {
    pub kind: ModelKind,
    pub d: usize,
    pub gammas: Vec<f64>,
    /// Clayton θ.
    pub theta: f64,
    /// Gumbel ϑ.
    pub vartheta: f64,
    /// Degrees of freedom of the Student-t vector in the multivariate Student model.
    pub nu: f64,
    pub correlation: Option<SpdMatrix>,
    cholesky: Vec<f64>,
}

impl SimulationModel {
    pub fn new(kind: ModelKind, d: usize) -> Result<Self> {
        if kind.is_univariate() && d != 1 {
            return Err(Error::Domain(format!("{} is univariate, got d = {d}", kind.name())));
        }
        if !kind.is_univariate() && d < 2 {
            return Err(Error::Domain(format!("{} needs d >= 2", kind.name())));
        }
        let (correlation, cholesky) = match kind {
            ModelKind::GaussianStudent | ModelKind::MultivariateStudent => {
                let e = correlation_entries(d)?;
                let l = cholesky_lower(d, &e)?;
                (Some(SpdMatrix::new(d, e)?), l)
            }
            _ => (None, Vec::new()),
        };
        Ok(Self { kind, d, gammas: vec![1.0 / 3.0; d], theta: 10.0, vartheta: 3.0, nu: 3.0, correlation, cholesky })
    }

    pub fn clayton_frechet(d: usize) -> Result<Self> {
        Self::new(ModelKind::ClaytonFrechet, d)
    }

    pub fn gaussian_student(d: usize) -> Result<Self> {
        Self::new(ModelKind::GaussianStudent, d)
    }

    pub fn gumbel_frechet(d: usize) -> Result<Self> {
        Self::new(ModelKind::GumbelFrechet, d)
    }

    pub fn multivariate_student(d: usize) -> Result<Self> {
        Self::new(ModelKind::MultivariateStudent, d)
    }

    pub fn univariate(kind: ModelKind, gamma: f64) -> Result<Self> {
        Self::new(kind, 1)?.with_gammas(vec![gamma])
    }

    pub fn with_gammas(mut self, gammas: Vec<f64>) -> Result<Self> {
        if gammas.len() != self.d {
            return Err(Error::DimensionMismatch { expected: self.d, got: gammas.len() });
        }
        if let Some(&g) = gammas.iter().find(|&&g| !(g > 0.0 && g < 1.0)) {
            return Err(Error::Domain(format!("tail index {g} outside (0, 1)")));
        }
        self.gammas = gammas;
        Ok(self)
    }

    pub fn with_gamma(self, margin: usize, gamma: f64) -> Result<Self> {
        let mut g = self.gammas.clone();
        if margin >= g.len() {
            return Err(Error::IndexOutOfRange { index: margin, len: g.len() });
        }
        g[margin] = gamma;
        self.with_gammas(g)
    }

    pub fn with_theta(mut self, theta: f64) -> Result<Self> {
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::Domain(format!("Clayton parameter {theta} must be positive")));
        }
        self.theta = theta;
        Ok(self)
    }

    pub fn with_vartheta(mut self, vartheta: f64) -> Result<Self> {
        if !(vartheta >= 1.0 && vartheta.is_finite()) {
            return Err(Error::Domain(format!("Gumbel parameter {vartheta} must be >= 1")));
        }
        self.vartheta = vartheta;
        Ok(self)
    }

    pub fn margin(&self, j: usize) -> Margin {
        let gamma = self.gammas[j];
        match self.kind {
            ModelKind::ClaytonFrechet | ModelKind::GumbelFrechet | ModelKind::UnivariateFrechet => Margin::Frechet { gamma },
            ModelKind::UnivariatePareto => Margin::Pareto { gamma },
            ModelKind::GaussianStudent | ModelKind::MultivariateStudent | ModelKind::UnivariateStudent => {
                Margin::Student { gamma }
            }
        }
    }

    pub fn true_expectiles(&self, tau: f64) -> Result<Vec<f64>> {
        (0..self.d).map(|j| self.margin(j).expectile(tau)).collect()
    }

    pub fn description(&self) -> String {
        format!("{} d={} gammas={:?}", self.kind.name(), self.d, self.gammas)
    }

    fn correlated_normals(&self, rng: &mut RngStream, z: &mut [f64], out: &mut [f64]) {
        let d = self.d;
        for v in z.iter_mut() {
            *v = rng.normal();
        }
        for (i, o) in out.iter_mut().enumerate().take(d) {
            *o = (0..=i).map(|k| self.cholesky[i * d + k] * z[k]).sum();
        }
    }

    /// Draws `n` independent rows.
    pub fn sample(&self, n: usize, rng: &mut RngStream) -> Result<MultivariateSample> {
        let d = self.d;
        let mut cols = vec![Vec::with_capacity(n); d];
        let margins: Vec<Margin> = (0..d).map(|j| self.margin(j)).collect();
        let mut z = vec![0.0; d];
        let mut w = vec![0.0; d];
        match self.kind {
            ModelKind::ClaytonFrechet => {
                // Marshall-Olkin: U_j = (1 + E_j/V)^{-1/θ}, V ~ Gamma(1/θ, 1).
                let frailty = Gamma::new(1.0 / self.theta, 1.0).map_err(|e| Error::Domain(format!("{e}")))?;
                for _ in 0..n {
                    let v: f64 = frailty.sample(rng);
                    for (j, col) in cols.iter_mut().enumerate() {
                        let minus_log_u = libm::log1p(rng.exp1() / v) / self.theta;
                        col.push(libm::pow(minus_log_u, -self.gammas[j]));
                    }
                }
            }
            ModelKind::GumbelFrechet => {
                // U_j = exp(-(E_j/S)^α) with S positive α-stable, α = 1/ϑ.
                let alpha = 1.0 / self.vartheta;
                for _ in 0..n {
                    let s = positive_stable(alpha, rng);
                    for (j, col) in cols.iter_mut().enumerate() {
                        let minus_log_u = libm::pow(rng.exp1() / s, alpha);
                        col.push(libm::pow(minus_log_u, -self.gammas[j]));
                    }
                }
            }
            ModelKind::GaussianStudent => {
                for _ in 0..n {
                    self.correlated_normals(rng, &mut z, &mut w);
                    for (j, col) in cols.iter_mut().enumerate() {
                        // Work with the smaller tail probability to keep precision.
                        let x = margins[j].upper_quantile(normal_sf(w[j].abs()))?;
                        col.push(if w[j] >= 0.0 { x } else { -x });
                    }
                }
            }
            ModelKind::MultivariateStudent => {
                let chi = ChiSquared::new(self.nu).map_err(|e| Error::Domain(format!("{e}")))?;
                for _ in 0..n {
                    self.correlated_normals(rng, &mut z, &mut w);
                    let c: f64 = chi.sample(rng);
                    let scale = 1.0 / libm::sqrt(c / self.nu);
                    for (j, col) in cols.iter_mut().enumerate() {
                        let t = w[j] * scale;
                        let g = self.gammas[j];
                        if (1.0 / g - self.nu).abs() < 1e-12 {
                            col.push(t);
                        } else {
                            let x = margins[j].upper_quantile(student_t_sf(t.abs(), self.nu))?;
                            col.push(if t >= 0.0 { x } else { -x });
                        }
                    }
                }
            }
            ModelKind::UnivariateFrechet => {
                for _ in 0..n {
                    cols[0].push(libm::pow(rng.exp1(), -self.gammas[0]));
                }
            }
            ModelKind::UnivariatePareto => {
                for _ in 0..n {
                    cols[0].push(libm::exp(self.gammas[0] * rng.exp1()));
                }
            }
            ModelKind::UnivariateStudent => {
                let g = self.gammas[0];
                let chi = ChiSquared::new(1.0 / g).map_err(|e| Error::Domain(format!("{e}")))?;
                for _ in 0..n {
                    let c: f64 = chi.sample(rng);
                    cols[0].push(rng.normal() / libm::sqrt(c * g));
                }
            }
        }
        MultivariateSample::unlabeled(cols)
    }
}

/// Positive stable variable with Laplace transform `exp(-s^α)`, by the
/// Chambers-Mallows-Stuck (Kanter) representation.
pub fn positive_stable(alpha: f64, rng: &mut RngStream) -> f64 {
    if alpha >= 1.0 {
        return 1.0;
    }
    let u = core::f64::consts::PI * rng.open_uniform();
    let w = rng.exp1();
    let a = libm::sin(alpha * u) / libm::pow(libm::sin(u), 1.0 / alpha);
    let b = libm::pow(libm::sin((1.0 - alpha) * u) / w, (1.0 - alpha) / alpha);
    a * b
}

/// Kendall's τ in `O(n log n)` (Knight's merge-sort count, no ties).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let inversions = merge_count(&mut ys, &mut buf);
    let pairs = n as f64 * (n as f64 - 1.0) / 2.0;
    1.0 - 2.0 * inversions as f64 / pairs
}

fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[i] <= v[j] {
            buf[k] = v[i];
            i += 1;
        } else {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// What each Monte Carlo replication evaluates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum McTask {
    /// Squared relative errors of the LAWS and QB estimators, at `τ` or at `τ'`.
    Mse { extreme: bool },
    /// Whether the true expectile vector falls outside the region.
    Coverage { extreme: bool, method: Method, naive: bool },
    /// Whether the true extreme expectile of one margin falls outside its interval.
    IntervalCoverage { method: Method, margin: usize, naive: bool },
    /// Whether the equality test rejects.
    Power { kind: TestKind, scaling: CovarianceScaling },
    /// `R̂(1, 1)` of one pair.
    TailCopula { j: usize, l: usize },
}

impl McTask {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Mse { .. } => "mse",
            Self::Coverage { .. } => "coverage",
            Self::IntervalCoverage { .. } => "interval_coverage",
            Self::Power { .. } => "power",
            Self::TailCopula { .. } => "tail_copula",
        }
    }

    pub fn method_label(&self) -> &'static str {
        match self {
            Self::Mse { .. } => "laws+qb",
            Self::Coverage { method, .. } | Self::IntervalCoverage { method, .. } => method.name(),
            Self::Power { kind, .. } => kind.name(),
            Self::TailCopula { .. } => "rhat",
        }
    }

    pub fn naive(&self) -> bool {
        matches!(self, Self::Coverage { naive: true, .. } | Self::IntervalCoverage { naive: true, .. })
    }

    pub fn needs_extreme_level(&self) -> bool {
        matches!(
            self,
            Self::Mse { extreme: true } | Self::Coverage { extreme: true, .. } | Self::IntervalCoverage { .. } | Self::Power { .. }
        )
    }
}

/// A fully specified Monte Carlo experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct McConfig {
    pub model: SimulationModel,
    pub n: usize,
    pub tau: f64,
    pub tau_prime: Option<f64>,
    pub alpha: f64,
    pub task: McTask,
    pub replications: usize,
    pub master_seed: u64,
}

/// Configuration plus the true expectiles it is scored against.
#[derive(Debug, Clone, PartialEq)]
pub struct McPlan {
    pub config: McConfig,
    pub truth_tau: Vec<f64>,
    pub truth_tau_prime: Option<Vec<f64>>,
}

impl McPlan {
    pub fn new(config: McConfig) -> Result<Self> {
        if config.replications < 1 {
            return Err(Error::Domain("need at least one replication".into()));
        }
        check_level(config.tau)?;
        if config.task.needs_extreme_level() && config.tau_prime.is_none() {
            return Err(Error::Level(format!("task {} needs tau'", config.task.name())));
        }
        if let Some(tp) = config.tau_prime {
            check_level(tp)?;
            if tp <= config.tau {
                return Err(Error::Level(format!("need tau < tau', got {} >= {tp}", config.tau)));
            }
        }
        match config.task {
            McTask::Power { .. } if config.model.d < 2 => return Err(Error::Domain("power runs need d >= 2".into())),
            McTask::TailCopula { j, l } if j.max(l) >= config.model.d || j == l => {
                return Err(Error::Domain(format!("invalid margin pair ({j}, {l})")))
            }
            McTask::IntervalCoverage { margin, .. } if margin >= config.model.d => {
                return Err(Error::IndexOutOfRange { index: margin, len: config.model.d })
            }
            _ => {}
        }
        let truth_tau = config.model.true_expectiles(config.tau)?;
        let truth_tau_prime = config.tau_prime.map(|tp| config.model.true_expectiles(tp)).transpose()?;
        Ok(Self { config, truth_tau, truth_tau_prime })
    }

    /// Runs replication `index` on its own stream.
    pub fn replicate(&self, index: u64) -> Result<Outcome> {
        let c = &self.config;
        let mut rng = RngStream::new(c.master_seed, index);
        let sample = c.model.sample(c.n, &mut rng)?;
        let fit = SampleFit::new(&sample, c.tau)?;
        let tp = c.tau_prime;
        match c.task {
            McTask::Mse { extreme } => {
                let truth = if extreme { self.truth_tau_prime.as_ref().expect("checked") } else { &self.truth_tau };
                let mut laws = Vec::with_capacity(fit.d());
                let mut qb = Vec::with_capacity(fit.d());
                for (m, &t) in fit.margins().iter().zip(truth) {
                    let (a, b) = if extreme {
                        let tp = tp.expect("checked");
                        (m.extrapolated_laws(tp), m.extrapolated_qb(tp)?)
                    } else {
                        (m.estimates.xi_laws, m.xi_qb()?)
                    };
                    laws.push((a / t - 1.0) * (a / t - 1.0));
                    qb.push((b / t - 1.0) * (b / t - 1.0));
                }
                Ok(Outcome::Errors { laws, qb })
            }
            McTask::Coverage { extreme, method, naive } => {
                let kind = RegionKind::new(method, extreme);
                let region = region_from_fit(&fit, kind, tp, c.alpha, naive)?;
                let truth = if extreme { self.truth_tau_prime.as_ref().expect("checked") } else { &self.truth_tau };
                Ok(Outcome::Event(!region.contains(truth)?))
            }
            McTask::IntervalCoverage { method, margin, naive } => {
                let tp = tp.expect("checked");
                let i = marginal_interval_from_fit(&fit, method, tp, margin, c.alpha, naive)?;
                Ok(Outcome::Event(!i.contains(self.truth_tau_prime.as_ref().expect("checked")[margin])))
            }
            McTask::Power { kind, scaling } => {
                let t = test_from_fit(&fit, kind, tp.expect("checked"), c.alpha, scaling)?;
                Ok(Outcome::Event(t.reject))
            }
            McTask::TailCopula { j, l } => Ok(Outcome::Value(fit.copula(j, l)?.eval(1.0, 1.0))),
        }
    }

    /// Serial run; parallel drivers must reduce outcomes in index order to
    /// reproduce this result bit for bit.
    pub fn run(&self) -> McReport {
        let outcomes = (0..self.config.replications as u64).map(|i| self.replicate(i));
        McReport::reduce(self, outcomes)
    }
}

/// The result of one replication.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Errors { laws: Vec<f64>, qb: Vec<f64> },
    Event(bool),
    Value(f64),
}

/// Aggregated Monte Carlo summary.
#[derive(Debug, Clone, PartialEq)]
pub struct McReport {
    pub model: String,
    pub task: String,
    pub method: String,
    pub naive: bool,
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub tau: f64,
    pub tau_prime: Option<f64>,
    pub alpha: f64,
    pub gammas: Vec<f64>,
    pub replications: usize,
    pub master_seed: u64,
    pub failures: usize,
    /// First few failure messages, for diagnosis.
    pub failure_samples: Vec<String>,
    pub rel_mse_laws: Option<Vec<f64>>,
    pub rel_mse_qb: Option<Vec<f64>>,
    /// `sqrt(mean over margins of relative MSE) * 100`.
    pub root_rel_mse_laws: Option<f64>,
    pub root_rel_mse_qb: Option<f64>,
    /// Non-coverage or rejection rate among successful replications.
    pub rate: Option<f64>,
    pub mean_value: Option<f64>,
    pub wall_clock_seconds: Option<f64>,
}

impl McReport {
    pub fn reduce(plan: &McPlan, outcomes: impl IntoIterator<Item = Result<Outcome>>) -> Self {
        let c = &plan.config;
        let d = c.model.d;
        let mut failures = 0;
        let mut failure_samples = Vec::new();
        let mut ok = 0usize;
        let mut laws = vec![0.0; d];
        let mut qb = vec![0.0; d];
        let mut events = 0usize;
        let mut value_sum = 0.0;
        for o in outcomes {
            match o {
                Ok(Outcome::Errors { laws: a, qb: b }) => {
                    ok += 1;
                    for j in 0..d {
                        laws[j] += a[j];
                        qb[j] += b[j];
                    }
                }
                Ok(Outcome::Event(e)) => {
                    ok += 1;
                    events += e as usize;
                }
                Ok(Outcome::Value(v)) => {
                    ok += 1;
                    value_sum += v;
                }
                Err(e) => {
                    failures += 1;
                    if failure_samples.len() < 5 {
                        failure_samples.push(format!("{e}"));
                    }
                }
            }
        }
        let okf = ok as f64;
        let mut report = Self {
            model: String::from(c.model.kind.name()),
            task: String::from(c.task.name()),
            method: String::from(c.task.method_label()),
            naive: c.task.naive(),
            n: c.n,
            d,
            k: crate::sample::effective_size(c.n, c.tau),
            tau: c.tau,
            tau_prime: c.tau_prime,
            alpha: c.alpha,
            gammas: c.model.gammas.clone(),
            replications: c.replications,
            master_seed: c.master_seed,
            failures,
            failure_samples,
            rel_mse_laws: None,
            rel_mse_qb: None,
            root_rel_mse_laws: None,
            root_rel_mse_qb: None,
            rate: None,
            mean_value: None,
            wall_clock_seconds: None,
        };
        if ok == 0 {
            return report;
        }
        match c.task {
            McTask::Mse { .. } => {
                let l: Vec<f64> = laws.iter().map(|x| x / okf).collect();
                let q: Vec<f64> = qb.iter().map(|x| x / okf).collect();
                report.root_rel_mse_laws = Some(100.0 * libm::sqrt(l.iter().sum::<f64>() / d as f64));
                report.root_rel_mse_qb = Some(100.0 * libm::sqrt(q.iter().sum::<f64>() / d as f64));
                report.rel_mse_laws = Some(l);
                report.rel_mse_qb = Some(q);
            }
            McTask::TailCopula { .. } => report.mean_value = Some(value_sum / okf),
            _ => report.rate = Some(events as f64 / okf),
        }
        report
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures as f64 / self.replications as f64
    }
}

pub fn run_mc_mse(model: SimulationModel, n: usize, tau: f64, replications: usize, master_seed: u64) -> Result<McReport> {
    let config =
        McConfig { model, n, tau, tau_prime: None, alpha: 0.05, task: McTask::Mse { extreme: false }, replications, master_seed };
    Ok(McPlan::new(config)?.run())
}

#[allow(clippy::too_many_arguments)]
pub fn run_mc_coverage(
    model: SimulationModel,
    n: usize,
    tau: f64,
    tau_prime: Option<f64>,
    replications: usize,
    alpha: f64,
    method: Method,
    naive: bool,
    master_seed: u64,
) -> Result<McReport> {
    let task = McTask::Coverage { extreme: tau_prime.is_some(), method, naive };
    Ok(McPlan::new(McConfig { model, n, tau, tau_prime, alpha, task, replications, master_seed })?.run())
}

#[allow(clippy::too_many_arguments)]
pub fn run_mc_power(
    model: SimulationModel,
    n: usize,
    tau: f64,
    tau_prime: f64,
    replications: usize,
    alpha: f64,
    kind: TestKind,
    master_seed: u64,
) -> Result<McReport> {
    let task = McTask::Power { kind, scaling: CovarianceScaling::default() };
    Ok(McPlan::new(McConfig { model, n, tau, tau_prime: Some(tau_prime), alpha, task, replications, master_seed })?.run())
}
