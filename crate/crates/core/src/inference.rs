//! Confidence ellipsoids for intermediate and extreme expectiles, marginal
//! intervals, and membership.

use crate::covariance::{CovarianceEstimate, SampleFit};
use crate::numerics::{chi_square_quantile, std_normal_quantile, SpdMatrix};
use crate::sample::MultivariateSample;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Laws,
    Qb,
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Laws => "laws",
            Self::Qb => "qb",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "laws" | "LAWS" => Ok(Self::Laws),
            "qb" | "QB" => Ok(Self::Qb),
            other => Err(Error::Domain(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RegionKind {
    IntermediateLaws,
    IntermediateQb,
    ExtremeLaws,
    ExtremeQb,
}

impl RegionKind {
    pub fn new(method: Method, extreme: bool) -> Self {
        match (method, extreme) {
            (Method::Laws, false) => Self::IntermediateLaws,
            (Method::Qb, false) => Self::IntermediateQb,
            (Method::Laws, true) => Self::ExtremeLaws,
            (Method::Qb, true) => Self::ExtremeQb,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::IntermediateLaws => "intermediate_laws",
            Self::IntermediateQb => "intermediate_qb",
            Self::ExtremeLaws => "extreme_laws",
            Self::ExtremeQb => "extreme_qb",
        }
    }
}

/// How a point is turned into a residual before the quadratic form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scale {
    /// `z / center - 1 - shift`.
    Linear,
    /// `log(z / center) - shift`.
    Log,
}

impl Scale {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Log => "log",
        }
    }
}

/// Ellipsoid `{z : r(z)ᵀ shape⁻¹ r(z) <= radius²}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceRegion {
    pub kind: RegionKind,
    pub center: Vec<f64>,
    pub bias_shift: Vec<f64>,
    pub shape: SpdMatrix,
    pub radius: f64,
    pub scale: Scale,
    pub alpha: f64,
    pub tau: f64,
    pub tau_prime: Option<f64>,
    pub naive: bool,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Level(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

impl ConfidenceRegion {
    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn residual(&self, point: &[f64]) -> Result<Vec<f64>> {
        if point.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: point.len() });
        }
        point
            .iter()
            .zip(&self.center)
            .zip(&self.bias_shift)
            .map(|((&z, &c), &s)| match self.scale {
                Scale::Linear => Ok(z / c - 1.0 - s),
                Scale::Log => {
                    if !(z > 0.0) {
                        return Err(Error::Domain(format!("log-scale membership needs a positive point, got {z}")));
                    }
                    Ok(libm::log(z / c) - s)
                }
            })
            .collect()
    }

    /// Inverse of [`residual`](Self::residual).
    pub fn point_from_residual(&self, r: &[f64]) -> Vec<f64> {
        r.iter()
            .zip(&self.center)
            .zip(&self.bias_shift)
            .map(|((&r, &c), &s)| match self.scale {
                Scale::Linear => c * (1.0 + s + r),
                Scale::Log => c * libm::exp(s + r),
            })
            .collect()
    }

    /// Quadratic form of the residual under the shape matrix.
    pub fn statistic(&self, point: &[f64]) -> Result<f64> {
        let r = self.residual(point)?;
        self.shape.quadratic_form_labeled(&r, self.kind.name())
    }

    /// Closed-region membership: boundary points are inside.
    pub fn contains(&self, point: &[f64]) -> Result<bool> {
        Ok(self.statistic(point)? <= self.radius * self.radius)
    }

    /// The point with zero residual.
    pub fn shifted_center(&self) -> Vec<f64> {
        self.point_from_residual(&vec![0.0; self.dim()])
    }

    /// Plot-ready boundary: 512 points for d = 2, a 64 x 64 sphere mesh for d = 3.
    pub fn boundary(&self) -> Result<Vec<Vec<f64>>> {
        let root = self.shape.sqrt();
        // Rounding can leave a mapped point a few ulps outside; pull it in until it counts as inside.
        let map = |u: &[f64]| {
            let r: Vec<f64> = root.mul_vec(u).iter().map(|x| x * self.radius).collect();
            let mut p = self.point_from_residual(&r);
            let mut shrink = 4.0 * f64::EPSILON;
            while !matches!(self.contains(&p), Ok(true)) && shrink < 1e-9 {
                let q: Vec<f64> = r.iter().map(|x| x * (1.0 - shrink)).collect();
                p = self.point_from_residual(&q);
                shrink *= 2.0;
            }
            p
        };
        let tau = 2.0 * core::f64::consts::PI;
        match self.dim() {
            2 => Ok((0..512)
                .map(|i| {
                    let t = tau * i as f64 / 512.0;
                    map(&[libm::cos(t), libm::sin(t)])
                })
                .collect()),
            3 => {
                let mut out = Vec::with_capacity(64 * 64);
                for i in 0..64 {
                    let theta = core::f64::consts::PI * i as f64 / 63.0;
                    for j in 0..64 {
                        let phi = tau * j as f64 / 64.0;
                        let u = [libm::sin(theta) * libm::cos(phi), libm::sin(theta) * libm::sin(phi), libm::cos(theta)];
                        out.push(map(&u));
                    }
                }
                Ok(out)
            }
            d => Err(Error::Domain(format!("boundary emission supports d = 2 or 3, got {d}"))),
        }
    }
}

pub fn region_contains(region: &ConfidenceRegion, point: &[f64]) -> Result<bool> {
    region.contains(point)
}

fn shape_of(cov: CovarianceEstimate, naive: bool) -> SpdMatrix {
    if naive {
        cov.matrix.diagonal_part()
    } else {
        cov.matrix
    }
}

/// Builds any of the four regions from a cached fit.
pub fn region_from_fit(
    fit: &SampleFit,
    kind: RegionKind,
    tau_prime: Option<f64>,
    alpha: f64,
    naive: bool,
) -> Result<ConfidenceRegion> {
    check_alpha(alpha)?;
    let d = fit.d();
    let k = fit.exceedance_scale();
    let root = fit.sqrt_scale();
    let chi = chi_square_quantile(1.0 - alpha, d as u32)?;
    let base_radius = libm::sqrt(chi / k);
    let need_tp = || tau_prime.ok_or_else(|| Error::Level("extreme regions need tau'".into()));
    let (center, bias_shift, shape, radius, scale, tp) = match kind {
        RegionKind::IntermediateLaws => {
            let center = fit.margins().iter().map(|m| m.estimates.xi_laws).collect();
            (center, vec![0.0; d], shape_of(fit.v_laws()?, naive), base_radius, Scale::Linear, None)
        }
        RegionKind::IntermediateQb => {
            let center = fit.margins().iter().map(|m| m.xi_qb()).collect::<Result<_>>()?;
            let shift = fit.bias_qb()?.components.iter().map(|b| -b / root).collect();
            (center, shift, shape_of(fit.v_qb()?, naive), base_radius, Scale::Linear, None)
        }
        RegionKind::ExtremeLaws => {
            let tp = need_tp()?;
            let log_dn = fit.log_dn(tp)?;
            let center = fit.margins().iter().map(|m| m.extrapolated_laws(tp)).collect();
            let shift = fit.bias_qb()?.components.iter().map(|b| b / root).collect();
            (center, shift, shape_of(fit.v_star_laws(tp)?, naive), base_radius * log_dn, Scale::Log, Some(tp))
        }
        RegionKind::ExtremeQb => {
            let tp = need_tp()?;
            let log_dn = fit.log_dn(tp)?;
            let center = fit.margins().iter().map(|m| m.extrapolated_qb(tp)).collect::<Result<_>>()?;
            (center, vec![0.0; d], shape_of(fit.v_star_qb(tp)?, naive), base_radius * log_dn, Scale::Log, Some(tp))
        }
    };
    let center: Vec<f64> = center;
    if scale == Scale::Log {
        if let Some(&c) = center.iter().find(|&&c| !(c > 0.0)) {
            return Err(Error::Domain(format!("log-scale region needs positive centers, got {c}")));
        }
    } else if center.contains(&0.0) {
        return Err(Error::Domain("linear-scale region needs nonzero centers".into()));
    }
    Ok(ConfidenceRegion { kind, center, bias_shift, shape, radius, scale, alpha, tau: fit.tau, tau_prime: tp, naive })
}

pub fn region_intermediate_laws(sample: &MultivariateSample, tau: f64, alpha: f64) -> Result<ConfidenceRegion> {
    region_from_fit(&SampleFit::new(sample, tau)?, RegionKind::IntermediateLaws, None, alpha, false)
}

pub fn region_intermediate_qb(sample: &MultivariateSample, tau: f64, alpha: f64) -> Result<ConfidenceRegion> {
    region_from_fit(&SampleFit::new(sample, tau)?, RegionKind::IntermediateQb, None, alpha, false)
}

pub fn region_extreme_laws(sample: &MultivariateSample, tau: f64, tau_prime: f64, alpha: f64) -> Result<ConfidenceRegion> {
    region_from_fit(&SampleFit::new(sample, tau)?, RegionKind::ExtremeLaws, Some(tau_prime), alpha, false)
}

pub fn region_extreme_qb(sample: &MultivariateSample, tau: f64, tau_prime: f64, alpha: f64) -> Result<ConfidenceRegion> {
    region_from_fit(&SampleFit::new(sample, tau)?, RegionKind::ExtremeQb, Some(tau_prime), alpha, false)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarginalInterval {
    pub lower: f64,
    pub upper: f64,
    pub margin: usize,
    pub alpha: f64,
}

impl MarginalInterval {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Extreme-level interval for margin `j`. With `naive` set, the bias shift is
/// dropped and the variance is the plain `γ̂_j²`.
pub fn marginal_interval_from_fit(
    fit: &SampleFit,
    method: Method,
    tau_prime: f64,
    j: usize,
    alpha: f64,
    naive: bool,
) -> Result<MarginalInterval> {
    check_alpha(alpha)?;
    if j >= fit.d() {
        return Err(Error::IndexOutOfRange { index: j, len: fit.d() });
    }
    let log_dn = fit.log_dn(tau_prime)?;
    let root = fit.sqrt_scale();
    let z = std_normal_quantile(1.0 - alpha / 2.0)?;
    let m = fit.margin(j);
    let center = match method {
        Method::Laws => m.extrapolated_laws(tau_prime),
        Method::Qb => m.extrapolated_qb(tau_prime)?,
    };
    if !(center > 0.0) {
        return Err(Error::Domain(format!("extrapolated estimate {center} must be positive")));
    }
    let (shift, var) = if naive {
        (0.0, m.gamma() * m.gamma())
    } else {
        match method {
            Method::Laws => (fit.bias_qb()?.components[j] / root, fit.v_star_laws(tau_prime)?.get(j, j)),
            Method::Qb => (0.0, fit.v_star_qb(tau_prime)?.get(j, j)),
        }
    };
    let half = log_dn / root * libm::sqrt(var) * z;
    Ok(MarginalInterval {
        lower: center * libm::exp(shift - half),
        upper: center * libm::exp(shift + half),
        margin: j,
        alpha,
    })
}

pub fn marginal_interval_laws(sample: &MultivariateSample, tau: f64, tau_prime: f64, j: usize, alpha: f64) -> Result<MarginalInterval> {
    sample.check_margin(j)?;
    marginal_interval_from_fit(&SampleFit::new(&sample.select(&[j])?, tau)?, Method::Laws, tau_prime, 0, alpha, false)
        .map(|i| MarginalInterval { margin: j, ..i })
}

pub fn marginal_interval_qb(sample: &MultivariateSample, tau: f64, tau_prime: f64, j: usize, alpha: f64) -> Result<MarginalInterval> {
    sample.check_margin(j)?;
    marginal_interval_from_fit(&SampleFit::new(&sample.select(&[j])?, tau)?, Method::Qb, tau_prime, 0, alpha, false)
        .map(|i| MarginalInterval { margin: j, ..i })
}
