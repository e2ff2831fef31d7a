//! Asymptotic covariance and bias: closed-form oracles given `(γ, R)` and
//! the plug-in estimators built from a sample.

use crate::dependence::{EmpiricalTailCopula, OracleMatrix, OracleTailCopula};
use crate::marginal::{m_function, phi, MarginFit};
use crate::numerics::{integrate_2d_tailbox, integrate_tail_1d, QuadratureRule, SpdMatrix};
use crate::sample::{check_level, compute_ranks, effective_size, MarginalRanks, MultivariateSample};
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CovarianceKind {
    Laws,
    Qb,
    StarLaws,
    StarQb,
    Quantile,
    TheoreticalVLaws,
    TheoreticalSigmaQ,
    TheoreticalVQb,
    TheoreticalSigmaLaws,
    TheoreticalVStar,
    TheoreticalVStarLaws,
    TheoreticalVStarQb,
}

impl CovarianceKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Laws => "laws",
            Self::Qb => "qb",
            Self::StarLaws => "star_laws",
            Self::StarQb => "star_qb",
            Self::Quantile => "quantile",
            Self::TheoreticalVLaws => "theoretical_v_laws",
            Self::TheoreticalSigmaQ => "theoretical_sigma_q",
            Self::TheoreticalVQb => "theoretical_v_qb",
            Self::TheoreticalSigmaLaws => "theoretical_sigma_laws",
            Self::TheoreticalVStar => "theoretical_v_star",
            Self::TheoreticalVStarLaws => "theoretical_v_star_laws",
            Self::TheoreticalVStarQb => "theoretical_v_star_qb",
        }
    }
}

/// A covariance matrix tagged with how and at which levels it was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub kind: CovarianceKind,
    pub matrix: SpdMatrix,
    pub tau: Option<f64>,
    pub tau_prime: Option<f64>,
    pub k: Option<usize>,
}

impl CovarianceEstimate {
    fn theoretical(kind: CovarianceKind, dim: usize, entries: Vec<f64>) -> Result<Self> {
        Ok(Self { kind, matrix: SpdMatrix::new(dim, entries)?, tau: None, tau_prime: None, k: None })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    /// Off-diagonal entries set to zero; used by the independence-assuming regions.
    pub fn naive(&self) -> Self {
        Self { matrix: self.matrix.diagonal_part(), ..self.clone() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BiasEstimate {
    pub components: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Oracles

fn check_gammas(gammas: &[f64], upper: f64) -> Result<()> {
    for &g in gammas {
        if !(g > 0.0 && g < upper) {
            return Err(Error::VarianceUndefined { gamma: g });
        }
    }
    Ok(())
}

fn check_oracles(gammas: &[f64], oracles: &OracleMatrix) -> Result<()> {
    if oracles.d() != gammas.len() {
        return Err(Error::DimensionMismatch { expected: gammas.len(), got: oracles.d() });
    }
    Ok(())
}

fn symmetric(d: usize, diag: impl Fn(usize) -> f64, mut off: impl FnMut(usize, usize) -> Result<f64>) -> Result<Vec<f64>> {
    let mut m = vec![0.0; d * d];
    for j in 0..d {
        m[j * d + j] = diag(j);
        for l in (j + 1)..d {
            let v = off(j, l)?;
            m[j * d + l] = v;
            m[l * d + j] = v;
        }
    }
    Ok(m)
}

// γ_j γ_l ∬ R((γ_j⁻¹-1) x^{-1/γ_j}, (γ_l⁻¹-1) y^{-1/γ_l}) dx dy.
fn laws_cross_integral(gj: f64, gl: f64, r: OracleTailCopula, rule: &QuadratureRule) -> Result<f64> {
    if r == OracleTailCopula::Independent {
        return Ok(0.0);
    }
    let (cj, cl) = (1.0 / gj - 1.0, 1.0 / gl - 1.0);
    let v = integrate_2d_tailbox(|x, y| r.eval(cj * libm::pow(x, -1.0 / gj), cl * libm::pow(y, -1.0 / gl)), rule)?;
    Ok(gj * gl * v)
}

pub fn theoretical_v_laws(gammas: &[f64], oracles: &OracleMatrix, rule: &QuadratureRule) -> Result<CovarianceEstimate> {
    check_gammas(gammas, 0.5)?;
    check_oracles(gammas, oracles)?;
    let m = symmetric(
        gammas.len(),
        |j| 2.0 * libm::pow(gammas[j], 3.0) / (1.0 - 2.0 * gammas[j]),
        |j, l| laws_cross_integral(gammas[j], gammas[l], oracles.get(j, l), rule),
    )?;
    CovarianceEstimate::theoretical(CovarianceKind::TheoreticalVLaws, gammas.len(), m)
}

/// Joint covariance of `(γ̂_j, q̂_j)` over all margins, ordered
/// `(γ̂_1, q̂_1, γ̂_2, q̂_2, ...)`.
pub fn theoretical_sigma_q(gammas: &[f64], oracles: &OracleMatrix) -> Result<CovarianceEstimate> {
    check_gammas(gammas, f64::INFINITY)?;
    check_oracles(gammas, oracles)?;
    let d = gammas.len();
    let mut m = vec![0.0; 4 * d * d];
    let idx = |a: usize, b: usize| a * 2 * d + b;
    for j in 0..d {
        let g2 = gammas[j] * gammas[j];
        m[idx(2 * j, 2 * j)] = g2;
        m[idx(2 * j + 1, 2 * j + 1)] = g2;
        for l in (j + 1)..d {
            let r = oracles.get(j, l);
            let r11 = r.eval(1.0, 1.0);
            let iu = r.unit_integral()?;
            let gg = gammas[j] * gammas[l];
            let block = [[r11, iu - r11], [iu - r11, r11]];
            for a in 0..2 {
                for b in 0..2 {
                    m[idx(2 * j + a, 2 * l + b)] = gg * block[a][b];
                    m[idx(2 * l + b, 2 * j + a)] = gg * block[a][b];
                }
            }
        }
    }
    CovarianceEstimate::theoretical(CovarianceKind::TheoreticalSigmaQ, 2 * d, m)
}

// The quantile-based off-diagonal combination with `m_j` already shifted.
fn qb_cross(gj: f64, gl: f64, mj: f64, ml: f64, r11: f64, iu: f64, iv: f64) -> f64 {
    gj * gl * (r11 * (mj - 1.0) * (ml - 1.0) + mj * iu + ml * iv)
}

pub fn theoretical_v_qb(gammas: &[f64], oracles: &OracleMatrix) -> Result<CovarianceEstimate> {
    theoretical_qb_family(gammas, oracles, 0.0, CovarianceKind::TheoreticalVQb)
}

pub fn theoretical_v_star_qb(gammas: &[f64], oracles: &OracleMatrix, log_dn: f64) -> Result<CovarianceEstimate> {
    if !(log_dn > 0.0) {
        return Err(Error::Level(format!("log d_n must be positive, got {log_dn}")));
    }
    theoretical_qb_family(gammas, oracles, log_dn, CovarianceKind::TheoreticalVStarQb)
}

fn theoretical_qb_family(gammas: &[f64], oracles: &OracleMatrix, log_dn: f64, kind: CovarianceKind) -> Result<CovarianceEstimate> {
    check_gammas(gammas, 1.0)?;
    check_oracles(gammas, oracles)?;
    let shift: Vec<f64> = gammas.iter().map(|&g| m_function(g).map(|m| m + log_dn)).collect::<Result<_>>()?;
    let norm = if log_dn > 0.0 { 1.0 / (log_dn * log_dn) } else { 1.0 };
    let m = symmetric(
        gammas.len(),
        |j| norm * gammas[j] * gammas[j] * (1.0 + shift[j] * shift[j]),
        |j, l| {
            let r = oracles.get(j, l);
            let iu = r.unit_integral()?;
            Ok(norm * qb_cross(gammas[j], gammas[l], shift[j], shift[l], r.eval(1.0, 1.0), iu, iu))
        },
    )?;
    CovarianceEstimate::theoretical(kind, gammas.len(), m)
}

/// Joint covariance of `(γ̂_j, ξ̃_j/ξ_j - 1)` over all margins, ordered like
/// [`theoretical_sigma_q`].
pub fn theoretical_sigma_laws(gammas: &[f64], oracles: &OracleMatrix, rule: &QuadratureRule) -> Result<CovarianceEstimate> {
    let blocks = SigmaLawsBlocks::theoretical(gammas, oracles, rule)?;
    CovarianceEstimate::theoretical(CovarianceKind::TheoreticalSigmaLaws, 2 * gammas.len(), blocks.full_matrix())
}

pub fn theoretical_v_star(gammas: &[f64], oracles: &OracleMatrix) -> Result<CovarianceEstimate> {
    check_gammas(gammas, f64::INFINITY)?;
    check_oracles(gammas, oracles)?;
    let m = symmetric(gammas.len(), |j| gammas[j] * gammas[j], |j, l| Ok(gammas[j] * gammas[l] * oracles.get(j, l).eval(1.0, 1.0)))?;
    CovarianceEstimate::theoretical(CovarianceKind::TheoreticalVStar, gammas.len(), m)
}

pub fn theoretical_v_star_laws(gammas: &[f64], oracles: &OracleMatrix, log_dn: f64, rule: &QuadratureRule) -> Result<CovarianceEstimate> {
    let blocks = SigmaLawsBlocks::theoretical(gammas, oracles, rule)?;
    let m = blocks.contract(log_dn)?;
    CovarianceEstimate::theoretical(CovarianceKind::TheoreticalVStarLaws, gammas.len(), m)
}

/// The 2x2 blocks `Σ_{j,l}` of the joint (Hill, LAWS) covariance.
///
/// `block(j, l)[a][b]` pairs component `a` of margin `j` with component `b`
/// of margin `l`, where component 0 is the Hill estimator and 1 the LAWS
/// expectile; `block(l, j)` is the transpose of `block(j, l)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SigmaLawsBlocks {
    d: usize,
    blocks: Vec<[[f64; 2]; 2]>,
}

impl SigmaLawsBlocks {
    fn from_fn(d: usize, mut f: impl FnMut(usize, usize) -> Result<[[f64; 2]; 2]>) -> Result<Self> {
        let mut blocks = vec![[[0.0; 2]; 2]; d * d];
        for j in 0..d {
            for l in j..d {
                let b = f(j, l)?;
                blocks[j * d + l] = b;
                blocks[l * d + j] = [[b[0][0], b[1][0]], [b[0][1], b[1][1]]];
            }
        }
        Ok(Self { d, blocks })
    }

    pub fn theoretical(gammas: &[f64], oracles: &OracleMatrix, rule: &QuadratureRule) -> Result<Self> {
        check_gammas(gammas, 0.5)?;
        check_oracles(gammas, oracles)?;
        Self::from_fn(gammas.len(), |j, l| {
            let (gj, gl) = (gammas[j], gammas[l]);
            if j == l {
                let cross = libm::pow(gj, 3.0) * libm::pow(1.0 / gj - 1.0, gj) / ((1.0 - gj) * (1.0 - gj));
                return Ok([[gj * gj, cross], [cross, 2.0 * libm::pow(gj, 3.0) / (1.0 - 2.0 * gj)]]);
            }
            let r = oracles.get(j, l);
            if r == OracleTailCopula::Independent {
                return Ok([[0.0; 2]; 2]);
            }
            let (cj, cl) = (1.0 / gj - 1.0, 1.0 / gl - 1.0);
            let s11 = gj * gl * r.eval(1.0, 1.0);
            let s12 = gl * integrate_2d_tailbox(|x, y| r.eval(libm::pow(x, -1.0 / gj), cl * libm::pow(y, -1.0 / gl)) / x, rule)?
                - gj * gl * integrate_tail_1d(|y| r.eval(1.0, cl * libm::pow(y, -1.0 / gl)), rule)?;
            let s21 = gj * integrate_2d_tailbox(|x, y| r.eval(cj * libm::pow(x, -1.0 / gj), libm::pow(y, -1.0 / gl)) / y, rule)?
                - gj * gl * integrate_tail_1d(|x| r.eval(cj * libm::pow(x, -1.0 / gj), 1.0), rule)?;
            let s22 = laws_cross_integral(gj, gl, r, rule)?;
            Ok([[s11, s12], [s21, s22]])
        })
    }

    pub fn block(&self, j: usize, l: usize) -> [[f64; 2]; 2] {
        self.blocks[j * self.d + l]
    }

    pub fn d(&self) -> usize {
        self.d
    }

    /// The `2d x 2d` matrix in `(γ̂_1, ξ̃_1, γ̂_2, ξ̃_2, ...)` order.
    pub fn full_matrix(&self) -> Vec<f64> {
        let n = 2 * self.d;
        let mut m = vec![0.0; n * n];
        for j in 0..self.d {
            for l in 0..self.d {
                let b = self.block(j, l);
                for a in 0..2 {
                    for c in 0..2 {
                        m[(2 * j + a) * n + 2 * l + c] = b[a][c];
                    }
                }
            }
        }
        m
    }

    /// `(1, 1/log d_n) Σ_{j,l} (1, 1/log d_n)ᵀ` for every pair.
    pub fn contract(&self, log_dn: f64) -> Result<Vec<f64>> {
        if !(log_dn > 0.0) {
            return Err(Error::Level(format!("log d_n must be positive, got {log_dn}")));
        }
        let w = 1.0 / log_dn;
        Ok((0..self.d * self.d)
            .map(|i| {
                let b = self.blocks[i];
                b[0][0] + w * (b[0][1] + b[1][0]) + w * w * b[1][1]
            })
            .collect())
    }
}

// ---------------------------------------------------------------------------
// Plug-in estimators

/// Tail copula summaries of one pair of margins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairTailSummary {
    pub r11: f64,
    /// `∫_0^1 R̂(u, 1) du/u`.
    pub int_u: f64,
    /// `∫_0^1 R̂(1, u) du/u`.
    pub int_v: f64,
}

/// Everything the plug-in estimators need from one sample at level `τ`.
#[derive(Debug, Clone)]
pub struct SampleFit {
    pub n: usize,
    pub tau: f64,
    pub k: usize,
    margins: Vec<MarginFit>,
    columns: Vec<Vec<f64>>,
    ranks: MarginalRanks,
}

impl SampleFit {
    pub fn new(sample: &MultivariateSample, tau: f64) -> Result<Self> {
        check_level(tau)?;
        let margins = sample.columns().map(|c| MarginFit::new(c, tau)).collect::<Result<Vec<_>>>()?;
        Ok(Self {
            n: sample.n(),
            tau,
            k: effective_size(sample.n(), tau),
            margins,
            columns: sample.columns().map(|c| c.to_vec()).collect(),
            ranks: compute_ranks(sample),
        })
    }

    pub fn d(&self) -> usize {
        self.margins.len()
    }

    pub fn margin(&self, j: usize) -> &MarginFit {
        &self.margins[j]
    }

    pub fn margins(&self) -> &[MarginFit] {
        &self.margins
    }

    pub fn gammas(&self) -> Vec<f64> {
        self.margins.iter().map(MarginFit::gamma).collect()
    }

    /// `n(1 - τ)` as an exact real product.
    pub fn exceedance_scale(&self) -> f64 {
        self.n as f64 * (1.0 - self.tau)
    }

    pub fn sqrt_scale(&self) -> f64 {
        libm::sqrt(self.exceedance_scale())
    }

    pub fn copula(&self, j: usize, l: usize) -> Result<EmpiricalTailCopula> {
        EmpiricalTailCopula::from_ranks(&self.ranks, self.tau, j, l)
    }

    pub fn pair_summary(&self, j: usize, l: usize) -> Result<PairTailSummary> {
        let c = self.copula(j, l)?;
        Ok(PairTailSummary { r11: c.eval(1.0, 1.0), int_u: c.unit_integral(0), int_v: c.unit_integral(1) })
    }

    fn phis(&self, j: usize) -> Vec<f64> {
        let xi = self.margins[j].estimates.xi_laws;
        self.columns[j].iter().map(|&x| phi(self.tau, x - xi)).collect()
    }

    fn require_laws_gammas(&self) -> Result<()> {
        for (j, m) in self.margins.iter().enumerate() {
            let g = m.gamma();
            if !(g > 0.0 && g < 0.5) {
                return Err(Error::TailTooHeavy { margin: j, gamma: g });
            }
        }
        Ok(())
    }

    fn require_qb_gammas(&self) -> Result<()> {
        for m in &self.margins {
            let g = m.gamma();
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::QbFactorUndefined { gamma: g });
            }
        }
        Ok(())
    }

    fn estimate(&self, kind: CovarianceKind, entries: Vec<f64>, tau_prime: Option<f64>) -> Result<CovarianceEstimate> {
        Ok(CovarianceEstimate { kind, matrix: SpdMatrix::new(self.d(), entries)?, tau: Some(self.tau), tau_prime, k: Some(self.k) })
    }

    fn v_laws_entries(&self) -> Result<Vec<f64>> {
        self.require_laws_gammas()?;
        let d = self.d();
        let t = self.tau;
        let phis: Vec<Vec<f64>> = (0..d).map(|j| self.phis(j)).collect();
        symmetric(
            d,
            |j| {
                let m = &self.margins[j];
                let g = m.gamma();
                let s = m.survival(m.estimates.xi_laws) / (1.0 - t);
                let denom = 1.0 + (2.0 * t - 1.0) * s;
                2.0 * g * g / (1.0 - 2.0 * g) * (1.0 + s) / (denom * denom)
            },
            |j, l| {
                let mbar = phis[j].iter().zip(&phis[l]).map(|(a, b)| a * b).sum::<f64>() / self.n as f64;
                let (mj, ml) = (&self.margins[j], &self.margins[l]);
                Ok(mj.gamma() * ml.gamma() * mbar / ((1.0 - t) * mj.estimates.xi_laws * ml.estimates.xi_laws))
            },
        )
    }

    pub fn v_laws(&self) -> Result<CovarianceEstimate> {
        let m = self.v_laws_entries()?;
        self.estimate(CovarianceKind::Laws, m, None)
    }

    pub fn bias_qb(&self) -> Result<BiasEstimate> {
        self.require_qb_gammas()?;
        let root = self.sqrt_scale();
        let components = self
            .margins
            .iter()
            .map(|m| {
                let (g, q) = (m.gamma(), m.estimates.q_hat);
                if q == 0.0 {
                    return Err(Error::Numeric("intermediate quantile is zero in the QB bias".into()));
                }
                Ok(-g * libm::pow(1.0 / g - 1.0, g) * m.mean * root / q)
            })
            .collect::<Result<_>>()?;
        Ok(BiasEstimate { components })
    }

    fn qb_family_entries(&self, log_dn: f64) -> Result<Vec<f64>> {
        self.require_qb_gammas()?;
        let gammas = self.gammas();
        let shift: Vec<f64> = gammas.iter().map(|&g| m_function(g).map(|m| m + log_dn)).collect::<Result<_>>()?;
        let norm = if log_dn > 0.0 { 1.0 / (log_dn * log_dn) } else { 1.0 };
        symmetric(
            self.d(),
            |j| norm * gammas[j] * gammas[j] * (1.0 + shift[j] * shift[j]),
            |j, l| {
                let p = self.pair_summary(j, l)?;
                Ok(norm * qb_cross(gammas[j], gammas[l], shift[j], shift[l], p.r11, p.int_u, p.int_v))
            },
        )
    }

    pub fn v_qb(&self) -> Result<CovarianceEstimate> {
        let m = self.qb_family_entries(0.0)?;
        self.estimate(CovarianceKind::Qb, m, None)
    }

    pub fn v_star_qb(&self, tau_prime: f64) -> Result<CovarianceEstimate> {
        let log_dn = self.log_dn(tau_prime)?;
        let m = self.qb_family_entries(log_dn)?;
        self.estimate(CovarianceKind::StarQb, m, Some(tau_prime))
    }

    /// Plug-in estimate of every block `Σ̂_{j,l}`, independent of `τ'`.
    pub fn sigma_laws_blocks(&self) -> Result<SigmaLawsBlocks> {
        let v = self.v_laws_entries()?;
        let d = self.d();
        let t = self.tau;
        let n = self.n as f64;
        let phis: Vec<Vec<f64>> = (0..d).map(|j| self.phis(j)).collect();
        // (1/n) Σ [log X_j - log q_j] 1{X_j > q_j} φ_l and (1/n) Σ 1{X_j > q_j} φ_l.
        let mixed = |j: usize, l: usize| {
            let q = self.margins[j].estimates.q_hat;
            let log_q = libm::log(q);
            let (mut logs, mut counts) = (0.0, 0.0);
            for (&x, &p) in self.columns[j].iter().zip(&phis[l]) {
                if x > q {
                    logs += (libm::log(x) - log_q) * p;
                    counts += p;
                }
            }
            (logs / n, counts / n)
        };
        SigmaLawsBlocks::from_fn(d, |j, l| {
            let (mj, ml) = (&self.margins[j], &self.margins[l]);
            let (gj, gl) = (mj.gamma(), ml.gamma());
            if j == l {
                let cross = libm::pow(gj, 3.0) * libm::pow(1.0 / gj - 1.0, gj) / ((1.0 - gj) * (1.0 - gj));
                return Ok([[gj * gj, cross], [cross, v[j * d + j]]]);
            }
            let r11 = self.copula(j, l)?.eval(1.0, 1.0);
            let (a, b) = mixed(j, l);
            let s12 = gl / ((1.0 - t) * ml.estimates.xi_laws) * a - gj * gl / ((1.0 - t) * ml.estimates.xi_laws) * b;
            let (a, b) = mixed(l, j);
            let s21 = gj / ((1.0 - t) * mj.estimates.xi_laws) * a - gj * gl / ((1.0 - t) * mj.estimates.xi_laws) * b;
            Ok([[gj * gl * r11, s12], [s21, v[j * d + l]]])
        })
    }

    pub fn v_star_laws(&self, tau_prime: f64) -> Result<CovarianceEstimate> {
        let blocks = self.sigma_laws_blocks()?;
        self.v_star_laws_from_blocks(&blocks, tau_prime)
    }

    pub fn v_star_laws_from_blocks(&self, blocks: &SigmaLawsBlocks, tau_prime: f64) -> Result<CovarianceEstimate> {
        let m = blocks.contract(self.log_dn(tau_prime)?)?;
        self.estimate(CovarianceKind::StarLaws, m, Some(tau_prime))
    }

    /// `M̂` of the quantile test: `γ̂_j²` and `γ̂_j γ̂_l R̂(1, 1)`.
    pub fn quantile_covariance(&self, tau_prime: f64) -> Result<CovarianceEstimate> {
        let g = self.gammas();
        let m = symmetric(self.d(), |j| g[j] * g[j], |j, l| Ok(g[j] * g[l] * self.copula(j, l)?.eval(1.0, 1.0)))?;
        self.estimate(CovarianceKind::Quantile, m, Some(tau_prime))
    }

    /// `log[(1 - τ) / (1 - τ')]`.
    pub fn log_dn(&self, tau_prime: f64) -> Result<f64> {
        check_level(tau_prime)?;
        if tau_prime <= self.tau {
            return Err(Error::Level(format!("need tau < tau', got {} >= {tau_prime}", self.tau)));
        }
        Ok(libm::log((1.0 - self.tau) / (1.0 - tau_prime)))
    }
}

pub fn estimate_v_laws(sample: &MultivariateSample, tau: f64) -> Result<CovarianceEstimate> {
    SampleFit::new(sample, tau)?.v_laws()
}

pub fn estimate_bias_qb(sample: &MultivariateSample, tau: f64) -> Result<BiasEstimate> {
    SampleFit::new(sample, tau)?.bias_qb()
}

pub fn estimate_v_qb(sample: &MultivariateSample, tau: f64) -> Result<CovarianceEstimate> {
    SampleFit::new(sample, tau)?.v_qb()
}

pub fn estimate_v_star_laws(sample: &MultivariateSample, tau: f64, tau_prime: f64) -> Result<CovarianceEstimate> {
    SampleFit::new(sample, tau)?.v_star_laws(tau_prime)
}

pub fn estimate_v_star_qb(sample: &MultivariateSample, tau: f64, tau_prime: f64) -> Result<CovarianceEstimate> {
    SampleFit::new(sample, tau)?.v_star_qb(tau_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::marginal::laws_expectile;
    use crate::simulation::{RngStream, SimulationModel};

    fn rule() -> QuadratureRule {
        QuadratureRule::default()
    }

    fn uniform(d: usize, o: OracleTailCopula) -> OracleMatrix {
        OracleMatrix::uniform(d, o)
    }

    #[test]
    fn v_laws_oracle_anchor() {
        let g = [1.0 / 3.0, 1.0 / 3.0];
        let v = theoretical_v_laws(&g, &uniform(2, OracleTailCopula::Comonotone), &rule()).unwrap();
        // Quadrature puts the off-diagonal about 1e-11 above the diagonal; the clip absorbs it.
        assert!((v.get(0, 0) - 2.0 / 9.0).abs() < 1e-9);
        assert!((v.get(0, 1) - 2.0 / 9.0).abs() < 1e-6, "{}", v.get(0, 1));
        let v = theoretical_v_laws(&g, &uniform(2, OracleTailCopula::Independent), &rule()).unwrap();
        assert!(v.get(0, 1).abs() < 1e-10);
        assert!(matches!(
            theoretical_v_laws(&[0.5, 0.2], &uniform(2, OracleTailCopula::Independent), &rule()),
            Err(Error::VarianceUndefined { .. })
        ));
    }

    #[test]
    fn sigma_q_oracles() {
        let g = [0.3, 0.3];
        let s = theoretical_sigma_q(&g, &uniform(2, OracleTailCopula::Independent)).unwrap();
        for a in 0..4 {
            for b in 0..4 {
                let expect = if a == b { 0.09 } else { 0.0 };
                assert!((s.get(a, b) - expect).abs() < 1e-15);
            }
        }
        let s = theoretical_sigma_q(&g, &uniform(2, OracleTailCopula::Comonotone)).unwrap();
        assert!((s.get(0, 2) - 0.09).abs() < 1e-12);
        assert!(s.get(0, 3).abs() < 1e-12);
    }

    #[test]
    fn v_qb_and_v_star_oracles() {
        let third = 1.0 / 3.0;
        let v = theoretical_v_qb(&[third, 0.5], &uniform(2, OracleTailCopula::Independent)).unwrap();
        let m = 1.5 - core::f64::consts::LN_2;
        assert!((v.get(0, 0) - (1.0 + m * m) / 9.0).abs() < 1e-12);
        assert!((v.get(0, 0) - 0.183446).abs() < 1e-6);
        assert!((v.get(1, 1) - 1.25).abs() < 1e-12);
        assert_eq!(v.get(0, 1), 0.0);
        let s = theoretical_v_star(&[third, third], &uniform(2, OracleTailCopula::Comonotone)).unwrap();
        assert!(s.matrix.entries().iter().all(|&x| (x - 1.0 / 9.0).abs() < 1e-15));
        let s = theoretical_v_star(&[third, third], &uniform(2, OracleTailCopula::Logistic(3.0))).unwrap();
        assert!((s.get(0, 1) - 0.082231).abs() < 1e-6);
        let s = theoretical_v_star(&[third, third], &uniform(2, OracleTailCopula::Independent)).unwrap();
        assert_eq!(s.get(0, 1), 0.0);
    }

    #[test]
    fn sigma_laws_oracles() {
        let third = 1.0 / 3.0;
        let b = SigmaLawsBlocks::theoretical(&[third, third], &uniform(2, OracleTailCopula::Independent), &rule()).unwrap();
        let cross = b.block(0, 0)[0][1];
        assert!((cross - 9.0 / 108.0 * libm::cbrt(2.0)).abs() < 1e-12);
        assert!((cross - 0.1049934).abs() < 1e-6);
        assert_eq!(b.block(0, 1), [[0.0; 2]; 2]);
        for o in [OracleTailCopula::Comonotone, OracleTailCopula::Logistic(3.0)] {
            let g = [0.3, 0.25];
            let b = SigmaLawsBlocks::theoretical(&g, &uniform(2, o), &rule()).unwrap();
            let v = theoretical_v_laws(&g, &uniform(2, o), &rule()).unwrap();
            assert!((b.block(0, 1)[1][1] - v.get(0, 1)).abs() < 1e-14);
            assert_eq!(b.block(1, 0)[0][1], b.block(0, 1)[1][0]);
        }
        let s = theoretical_sigma_laws(&[third, third], &uniform(2, OracleTailCopula::Comonotone), &rule()).unwrap();
        assert_eq!(s.dim(), 4);
    }

    // Comonotone blocks reduce to one-dimensional integrals with closed forms.
    #[test]
    fn sigma_laws_comonotone_closed_form() {
        let g: f64 = 0.3;
        let b = SigmaLawsBlocks::theoretical(&[g, g], &uniform(2, OracleTailCopula::Comonotone), &rule()).unwrap();
        // Fine midpoint rule on the graded variables x = 1/s^2.
        let c = 1.0 / g - 1.0;
        let h = |x: f64, y: f64| libm::pow(x, -1.0 / g).min(c * libm::pow(y, -1.0 / g)) / x;
        let steps = 2000;
        let mut acc = 0.0;
        for i in 0..steps {
            let s = (i as f64 + 0.5) / steps as f64;
            let (x, jx) = (1.0 / (s * s), 2.0 / (s * s * s));
            for k in 0..steps {
                let t = (k as f64 + 0.5) / steps as f64;
                let (y, jy) = (1.0 / (t * t), 2.0 / (t * t * t));
                acc += h(x, y) * jx * jy;
            }
        }
        acc /= (steps * steps) as f64;
        let line: f64 = (0..200_000)
            .map(|i| {
                let s = (i as f64 + 0.5) / 200_000.0;
                let y = 1.0 / (s * s);
                (c * libm::pow(y, -1.0 / g)).min(1.0) * 2.0 / (s * s * s) / 200_000.0
            })
            .sum();
        let expect = g * acc - g * g * line;
        assert!((b.block(0, 1)[0][1] - expect).abs() < 1e-4, "{} vs {expect}", b.block(0, 1)[0][1]);
        assert!((b.block(0, 1)[0][1] - b.block(0, 1)[1][0]).abs() < 1e-7);
    }

    #[test]
    fn v_star_contraction_laws() {
        let g = [0.3, 0.25];
        let o = uniform(2, OracleTailCopula::Logistic(2.0));
        let b = SigmaLawsBlocks::theoretical(&g, &o, &rule()).unwrap();
        let big = b.contract(1e12).unwrap();
        assert!((big[1] - b.block(0, 1)[0][0]).abs() < 1e-10);
        let v = theoretical_v_star_laws(&g, &o, 2.0, &rule()).unwrap();
        let bl = b.block(0, 1);
        let expect = bl[0][0] + (bl[0][1] + bl[1][0]) / 2.0 + bl[1][1] / 4.0;
        assert!((v.get(0, 1) - expect).abs() < 1e-14);
        let q = theoretical_v_star_qb(&[0.5], &uniform(1, OracleTailCopula::Independent), 1.0).unwrap();
        assert!((q.get(0, 0) - 2.5).abs() < 1e-12);
    }

    fn frechet_pair(n: usize, seed: u64) -> MultivariateSample {
        let model = SimulationModel::gumbel_frechet(2).unwrap();
        model.sample(n, &mut RngStream::new(seed, 0)).unwrap()
    }

    // Straight-line re-evaluation of the displayed plug-in formulas.
    fn reference_v_laws(s: &MultivariateSample, tau: f64) -> Vec<f64> {
        let n = s.n();
        let k = effective_size(n, tau);
        let d = s.d();
        let mut out = vec![0.0; d * d];
        let mut g = vec![0.0; d];
        let mut xi = vec![0.0; d];
        for j in 0..d {
            let mut col = s.column(j).to_vec();
            col.sort_by(f64::total_cmp);
            let t = col[n - k - 1];
            g[j] = col[n - k..].iter().map(|x| (x / t).ln()).sum::<f64>() / k as f64;
            xi[j] = laws_expectile(s.column(j), tau).unwrap();
        }
        for j in 0..d {
            for l in 0..d {
                if j == l {
                    let fbar = s.column(j).iter().filter(|&&x| x > xi[j]).count() as f64 / n as f64;
                    let r = fbar / (1.0 - tau);
                    out[j * d + l] = 2.0 * g[j] * g[j] / (1.0 - 2.0 * g[j]) * (1.0 + r) / (1.0 + (2.0 * tau - 1.0) * r).powi(2);
                } else {
                    let mut m = 0.0;
                    for i in 0..n {
                        m += phi(tau, s.value(i, j) - xi[j]) * phi(tau, s.value(i, l) - xi[l]);
                    }
                    m /= n as f64;
                    out[j * d + l] = g[j] * g[l] * m / ((1.0 - tau) * xi[j] * xi[l]);
                }
            }
        }
        out
    }

    #[test]
    fn v_laws_matches_reference_and_duplicate_column() {
        let base = frechet_pair(200, 1);
        let dup = MultivariateSample::unlabeled(vec![base.column(0).to_vec(), base.column(0).to_vec()]).unwrap();
        let tau = 0.9;
        let fit = SampleFit::new(&dup, tau).unwrap();
        let v = fit.v_laws().unwrap_or_else(|e| panic!("{e}"));
        let reference = reference_v_laws(&dup, tau);
        for (a, b) in v.matrix.entries().iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
        let m = fit.margin(0);
        let phis = fit.phis(0);
        let mbar = phis.iter().map(|p| p * p).sum::<f64>() / 200.0;
        let expect = m.gamma() * m.gamma() * mbar / ((1.0 - tau) * m.estimates.xi_laws * m.estimates.xi_laws);
        assert!((v.get(0, 1) - expect).abs() < 1e-12 * expect);
        let fit = SampleFit::new(&base, tau).unwrap();
        let v = fit.v_laws().unwrap();
        for (a, b) in v.matrix.entries().iter().zip(&reference_v_laws(&base, tau)) {
            assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn bias_examples() {
        // Zero-mean symmetric column gives zero bias.
        let col: Vec<f64> = (-50..=50).map(|i| i as f64 * 0.37).collect();
        let s = MultivariateSample::unlabeled(vec![col.clone()]).unwrap();
        let b = estimate_bias_qb(&s, 0.9).unwrap();
        assert!(b.components[0].abs() < 1e-12);
        let s = frechet_pair(500, 3);
        let b = estimate_bias_qb(&s, 0.95).unwrap();
        assert!(b.components.iter().all(|&x| x < 0.0));
    }

    #[test]
    fn v_qb_plugin_matches_hand_formula() {
        let s = frechet_pair(300, 7);
        let fit = SampleFit::new(&s, 0.9).unwrap();
        let v = fit.v_qb().unwrap();
        let p = fit.pair_summary(0, 1).unwrap();
        let (g0, g1) = (fit.margin(0).gamma(), fit.margin(1).gamma());
        let (m0, m1) = (m_function(g0).unwrap(), m_function(g1).unwrap());
        let expect = g0 * g1 * (p.r11 * (m0 - 1.0) * (m1 - 1.0) + m0 * p.int_u + m1 * p.int_v);
        assert!((v.get(0, 1) - expect).abs() < 1e-14);
        assert!((v.get(0, 0) - g0 * g0 * (1.0 + m0 * m0)).abs() < 1e-14);
        let lt = fit.log_dn(0.999).unwrap();
        let vs = fit.v_star_qb(0.999).unwrap();
        let expect = g0 * g1 / (lt * lt) * (p.r11 * (m0 + lt - 1.0) * (m1 + lt - 1.0) + (m0 + lt) * p.int_u + (m1 + lt) * p.int_v);
        assert!((vs.get(0, 1) - expect).abs() < 1e-14);
    }

    #[test]
    fn v_star_laws_blocks_reproduce_contraction() {
        let s = frechet_pair(400, 11);
        let fit = SampleFit::new(&s, 0.95).unwrap();
        let blocks = fit.sigma_laws_blocks().unwrap();
        for &tp in &[0.99, 0.999, 0.9999] {
            let direct = fit.v_star_laws(tp).unwrap();
            let cached = fit.v_star_laws_from_blocks(&blocks, tp).unwrap();
            for (a, b) in direct.matrix.entries().iter().zip(cached.matrix.entries()) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let far = blocks.contract(1e15).unwrap();
        assert!((far[0] - fit.margin(0).gamma().powi(2)).abs() < 1e-12);
        assert!((far[1] - blocks.block(0, 1)[0][0]).abs() < 1e-12);
    }

    #[test]
    fn heavy_tail_errors() {
        let col: Vec<f64> = (1..=200).map(|i| libm::pow(1.0 - (i as f64 - 0.5) / 200.0, -0.8)).collect();
        let s = MultivariateSample::unlabeled(vec![col]).unwrap();
        assert!(matches!(estimate_v_laws(&s, 0.9), Err(Error::TailTooHeavy { .. })));
        assert!(estimate_v_qb(&s, 0.9).is_ok());
    }
}
