//! Deviance tests for equal extreme expectiles and equal extreme quantiles.

use crate::covariance::{CovarianceEstimate, SampleFit};
use crate::numerics::{chi_square_cdf, chi_square_quantile, SpdMatrix};
use crate::sample::MultivariateSample;
use crate::{Error, Result};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestKind {
    Laws,
    Qb,
    Quantile,
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Laws => "laws",
            Self::Qb => "qb",
            Self::Quantile => "quantile",
        }
    }
}

/// Factor multiplying the extreme covariance before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum CovarianceScaling {
    /// `log d_n / sqrt(n(1-τ))`, as written in the test display.
    #[default]
    Unsquared,
    /// `(log d_n)² / (n(1-τ))`, matching the normalization of the limit theorem.
    Squared,
}

impl CovarianceScaling {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Unsquared => "unsquared",
            Self::Squared => "squared",
        }
    }

    pub fn factor(&self, log_dn: f64, exceedance_scale: f64) -> f64 {
        match self {
            Self::Unsquared => log_dn / libm::sqrt(exceedance_scale),
            Self::Squared => log_dn * log_dn / exceedance_scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestResult {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: u32,
    pub p_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub tau: f64,
    pub tau_prime: f64,
    pub k: usize,
    pub common_mean: f64,
    pub scaling: CovarianceScaling,
    pub scale_factor: f64,
    /// Margins the statistic was computed on.
    pub margins: Vec<usize>,
}

/// `m̂ = Zᵀ V⁻¹ 1 / 1ᵀ V⁻¹ 1`.
///
/// A constant `Z` returns its common value without touching `V`, so equal
/// components give `Λ = 0` even when `V` is singular.
pub fn gls_common_mean(z: &[f64], v: &SpdMatrix) -> Result<f64> {
    if v.dim() != z.len() {
        return Err(Error::DimensionMismatch { expected: v.dim(), got: z.len() });
    }
    if z.iter().all(|&x| x == z[0]) {
        return Ok(z[0]);
    }
    let ones = vec![1.0; z.len()];
    let w = v.solve(&ones, "test covariance")?;
    let num: f64 = z.iter().zip(&w).map(|(a, b)| a * b).sum();
    let den: f64 = w.iter().sum();
    Ok(num / den)
}

/// `(Z - m̂ 1)ᵀ V⁻¹ (Z - m̂ 1)`.
pub fn deviance_statistic(z: &[f64], v: &SpdMatrix) -> Result<f64> {
    let m = gls_common_mean(z, v)?;
    if z.iter().all(|&x| x == m) {
        return Ok(0.0);
    }
    let r: Vec<f64> = z.iter().map(|x| x - m).collect();
    Ok(v.quadratic_form_labeled(&r, "test covariance")?.max(0.0))
}

fn decide(
    kind: TestKind,
    z: &[f64],
    v: &SpdMatrix,
    alpha: f64,
    fit: &SampleFit,
    tau_prime: f64,
    scaling: CovarianceScaling,
    scale_factor: f64,
) -> Result<TestResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Level(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let df = (z.len() - 1) as u32;
    let statistic = deviance_statistic(z, v)?;
    let critical = chi_square_quantile(1.0 - alpha, df)?;
    Ok(TestResult {
        kind,
        statistic,
        df,
        p_value: (1.0 - chi_square_cdf(statistic, df)).clamp(0.0, 1.0),
        reject: statistic > critical,
        alpha,
        tau: fit.tau,
        tau_prime,
        k: fit.k,
        common_mean: gls_common_mean(z, v)?,
        scaling,
        scale_factor,
        margins: (0..z.len()).collect(),
    })
}

/// Runs one of the three tests on a cached fit.
pub fn test_from_fit(
    fit: &SampleFit,
    kind: TestKind,
    tau_prime: f64,
    alpha: f64,
    scaling: CovarianceScaling,
) -> Result<TestResult> {
    if fit.d() < 2 {
        return Err(Error::Domain("equality tests need d >= 2".into()));
    }
    let log_dn = fit.log_dn(tau_prime)?;
    let root = fit.sqrt_scale();
    let factor = scaling.factor(log_dn, fit.exceedance_scale());
    let (z, cov): (Vec<f64>, CovarianceEstimate) = match kind {
        TestKind::Laws => {
            let bias = fit.bias_qb()?;
            let z = fit
                .margins()
                .iter()
                .zip(&bias.components)
                .map(|(m, b)| positive_log(m.extrapolated_laws(tau_prime)).map(|l| l + b / root))
                .collect::<Result<_>>()?;
            (z, fit.v_star_laws(tau_prime)?)
        }
        TestKind::Qb => {
            let z = fit.margins().iter().map(|m| positive_log(m.extrapolated_qb(tau_prime)?)).collect::<Result<_>>()?;
            (z, fit.v_star_qb(tau_prime)?)
        }
        TestKind::Quantile => {
            let z = fit.margins().iter().map(|m| positive_log(m.weissman(tau_prime))).collect::<Result<_>>()?;
            (z, fit.quantile_covariance(tau_prime)?)
        }
    };
    let v = cov.matrix.scaled(factor)?;
    decide(kind, &z, &v, alpha, fit, tau_prime, scaling, factor)
}

fn positive_log(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("log-scale test needs positive estimates, got {x}")));
    }
    Ok(libm::log(x))
}

pub fn test_equal_expectiles_laws(sample: &MultivariateSample, tau: f64, tau_prime: f64, alpha: f64) -> Result<TestResult> {
    test_from_fit(&SampleFit::new(sample, tau)?, TestKind::Laws, tau_prime, alpha, CovarianceScaling::default())
}

pub fn test_equal_expectiles_qb(sample: &MultivariateSample, tau: f64, tau_prime: f64, alpha: f64) -> Result<TestResult> {
    test_from_fit(&SampleFit::new(sample, tau)?, TestKind::Qb, tau_prime, alpha, CovarianceScaling::default())
}

pub fn test_equal_quantiles(sample: &MultivariateSample, tau: f64, tau_prime: f64, alpha: f64) -> Result<TestResult> {
    test_from_fit(&SampleFit::new(sample, tau)?, TestKind::Quantile, tau_prime, alpha, CovarianceScaling::default())
}

/// Every pair of margins under each requested test, in lexicographic pair
/// order. Failures are reported per entry rather than aborting the battery.
pub fn pairwise_battery(
    sample: &MultivariateSample,
    tau: f64,
    tau_prime: f64,
    alpha: f64,
    kinds: &[TestKind],
) -> Result<Vec<(usize, usize, TestKind, Result<TestResult>)>> {
    let d = sample.d();
    if d < 2 {
        return Err(Error::Domain("pairwise tests need d >= 2".into()));
    }
    let mut out = Vec::new();
    for j in 0..d {
        for l in (j + 1)..d {
            let sub = sample.select(&[j, l])?;
            let fit = SampleFit::new(&sub, tau);
            for &kind in kinds {
                let r = fit.as_ref().map_err(Clone::clone).and_then(|f| {
                    test_from_fit(f, kind, tau_prime, alpha, CovarianceScaling::default())
                        .map(|t| TestResult { margins: vec![j, l], ..t })
                });
                out.push((j, l, kind, r));
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{RngStream, SimulationModel};
    use proptest::prelude::*;

    fn diag(d: &[f64]) -> SpdMatrix {
        SpdMatrix::diagonal(d).unwrap()
    }

    #[test]
    fn gls_and_deviance_examples() {
        assert!((gls_common_mean(&[0.0, 2.0], &SpdMatrix::identity(2)).unwrap() - 1.0).abs() < 1e-15);
        assert!((gls_common_mean(&[0.0, 2.0], &diag(&[1.0, 4.0])).unwrap() - 0.4).abs() < 1e-15);
        assert!((deviance_statistic(&[0.0, 2.0], &SpdMatrix::identity(2)).unwrap() - 2.0).abs() < 1e-15);
        assert!((deviance_statistic(&[0.0, 2.0], &diag(&[1.0, 4.0])).unwrap() - 0.8).abs() < 1e-14);
        let v = SpdMatrix::from_rows(&[&[2.0, 0.5, 0.1], &[0.5, 1.0, 0.2], &[0.1, 0.2, 3.0]]).unwrap();
        let c = core::f64::consts::LN_2;
        assert!((gls_common_mean(&[c; 3], &v).unwrap() - c).abs() < 1e-14);
        assert!(deviance_statistic(&[c; 3], &v).unwrap() < 1e-24);
        let singular = SpdMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        assert!(matches!(gls_common_mean(&[0.0, 1.0], &singular), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn duplicated_columns_give_zero_statistic() {
        let s = SimulationModel::gumbel_frechet(2).unwrap().sample(1000, &mut RngStream::new(1, 0)).unwrap();
        let base = s.column(0).to_vec();
        let dup = MultivariateSample::unlabeled(vec![base.clone(), base.clone(), base]).unwrap();
        let fit = SampleFit::new(&dup, 0.95).unwrap();
        for kind in [TestKind::Laws, TestKind::Qb, TestKind::Quantile] {
            let t = test_from_fit(&fit, kind, 0.999, 0.05, CovarianceScaling::Unsquared).unwrap();
            assert_eq!(t.statistic, 0.0);
            assert!(!t.reject && t.p_value == 1.0);
        }
        // Nearly duplicated margins leave V singular while Z differs.
        let mut bumped = s.column(0).to_vec();
        let top = bumped.iter().cloned().fold(0.0, f64::max);
        bumped.iter_mut().filter(|x| **x == top).for_each(|x| *x *= 2.0);
        let two = MultivariateSample::unlabeled(vec![s.column(0).to_vec(), bumped]).unwrap();
        assert!(matches!(test_equal_quantiles(&two, 0.95, 0.999, 0.05), Err(Error::SingularCovariance { .. })));
    }

    #[test]
    fn one_margin_is_a_domain_error() {
        let s = SimulationModel::univariate(crate::simulation::ModelKind::UnivariatePareto, 0.3)
            .unwrap()
            .sample(500, &mut RngStream::new(1, 0))
            .unwrap();
        assert!(matches!(test_equal_expectiles_laws(&s, 0.9, 0.999, 0.05), Err(Error::Domain(_))));
    }

    #[test]
    fn statistic_invariants() {
        let s = SimulationModel::gumbel_frechet(3).unwrap().sample(2000, &mut RngStream::new(2, 0)).unwrap();
        let fit = SampleFit::new(&s, 0.95).unwrap();
        let scaled = SampleFit::new(&s.scaled(37.0).unwrap(), 0.95).unwrap();
        let perm = SampleFit::new(&s.select(&[2, 0, 1]).unwrap(), 0.95).unwrap();
        for kind in [TestKind::Laws, TestKind::Qb, TestKind::Quantile] {
            let t = test_from_fit(&fit, kind, 0.9995, 0.05, CovarianceScaling::Unsquared).unwrap();
            let u = test_from_fit(&scaled, kind, 0.9995, 0.05, CovarianceScaling::Unsquared).unwrap();
            let p = test_from_fit(&perm, kind, 0.9995, 0.05, CovarianceScaling::Unsquared).unwrap();
            assert!((t.statistic - u.statistic).abs() < 1e-8 * t.statistic.max(1.0));
            assert!((t.statistic - p.statistic).abs() < 1e-10 * t.statistic.max(1.0));
            assert!((u.common_mean - t.common_mean - libm::log(37.0)).abs() < 1e-10);
            assert_eq!(t.reject, t.p_value < t.alpha);
            assert_eq!(t.df, 2);
            let sq = test_from_fit(&fit, kind, 0.9995, 0.05, CovarianceScaling::Squared).unwrap();
            assert!((sq.statistic * sq.scale_factor - t.statistic * t.scale_factor).abs() < 1e-9 * t.statistic.max(1.0));
        }
    }

    #[test]
    fn pairwise_battery_shapes() {
        let s = SimulationModel::gumbel_frechet(3).unwrap().sample(1000, &mut RngStream::new(3, 0)).unwrap();
        let b = pairwise_battery(&s, 0.95, 0.999, 0.05, &[TestKind::Laws, TestKind::Quantile]).unwrap();
        assert_eq!(b.len(), 6);
        assert_eq!((b[4].0, b[4].1), (1, 2));
        let direct = test_equal_quantiles(&s.select(&[1, 2]).unwrap(), 0.95, 0.999, 0.05).unwrap();
        let entry = b[5].3.as_ref().unwrap();
        assert_eq!(entry.statistic, direct.statistic);
        assert_eq!(entry.margins, vec![1, 2]);
    }

    proptest! {
        #[test]
        fn deviance_zero_iff_equal(z in proptest::collection::vec(-5.0f64..5.0, 2..6), bump in 0.01f64..1.0, seed in 1.0f64..3.0) {
            let d = z.len();
            let mut e = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    e[i * d + j] = if i == j { seed + i as f64 } else { 0.3 };
                }
            }
            let v = SpdMatrix::new(d, e).unwrap();
            let c = vec![z[0]; d];
            prop_assert!(deviance_statistic(&c, &v).unwrap() < 1e-20);
            let mut y = c.clone();
            y[d - 1] += bump;
            prop_assert!(deviance_statistic(&y, &v).unwrap() > 0.0);
            let lambda = deviance_statistic(&z, &v).unwrap();
            let p = 1.0 - chi_square_cdf(lambda, (d - 1) as u32);
            let p2 = 1.0 - chi_square_cdf(lambda + bump, (d - 1) as u32);
            prop_assert!(p2 <= p);
            let crit = chi_square_quantile(0.95, (d - 1) as u32).unwrap();
            prop_assert_eq!(lambda > crit, p < 0.05 - 1e-10 || (lambda > crit && (p - 0.05).abs() <= 1e-10));
        }
    }
}
