//! Multivariate samples, marginal ranks, order statistics and tail levels.

use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
#[cfg(test)]
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

/// `n x d` panel of finite observations with unique column labels.
///
/// Values are stored column-major because every estimator works margin by
/// margin.
#[derive(Debug, Clone, PartialEq)]
pub struct MultivariateSample {
    n: usize,
    d: usize,
    values: Vec<f64>,
    labels: Vec<String>,
}

impl MultivariateSample {
    pub const MIN_OBSERVATIONS: usize = 4;

    pub fn from_columns(columns: Vec<Vec<f64>>, labels: Vec<String>) -> Result<Self> {
        let d = columns.len();
        if d == 0 {
            return Err(Error::InvalidSample("sample needs at least one column".into()));
        }
        if labels.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: labels.len() });
        }
        let n = columns[0].len();
        if n < Self::MIN_OBSERVATIONS {
            return Err(Error::InvalidSample(format!(
                "sample needs at least {} observations, got {n}",
                Self::MIN_OBSERVATIONS
            )));
        }
        let mut values = Vec::with_capacity(n * d);
        for (j, col) in columns.into_iter().enumerate() {
            if col.len() != n {
                return Err(Error::InvalidSample(format!(
                    "column {j} has {} values, expected {n}",
                    col.len()
                )));
            }
            if let Some(i) = col.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidSample(format!("non-finite value at row {i}, column {j}")));
            }
            values.extend(col);
        }
        for (a, la) in labels.iter().enumerate() {
            if labels[..a].contains(la) {
                return Err(Error::InvalidSample(format!("duplicate label {la:?}")));
            }
        }
        Ok(Self { n, d, values, labels })
    }

    /// Columns labelled `X1..Xd`.
    pub fn unlabeled(columns: Vec<Vec<f64>>) -> Result<Self> {
        let labels = (1..=columns.len()).map(|j| format!("X{j}")).collect();
        Self::from_columns(columns, labels)
    }

    /// Builds from row-major observations.
    pub fn from_rows(rows: &[Vec<f64>], labels: Vec<String>) -> Result<Self> {
        let d = labels.len();
        let mut columns = vec![Vec::with_capacity(rows.len()); d];
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(Error::InvalidSample(format!("row {i} has {} values, expected {d}", row.len())));
            }
            for (col, &x) in columns.iter_mut().zip(row) {
                col.push(x);
            }
        }
        Self::from_columns(columns, labels)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.values[j * self.n..(j + 1) * self.n]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks(self.n)
    }

    pub fn value(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.n + i]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        (0..self.d).map(|j| self.value(i, j)).collect()
    }

    pub fn check_margin(&self, j: usize) -> Result<()> {
        if j >= self.d {
            return Err(Error::IndexOutOfRange { index: j + 1, len: self.d });
        }
        Ok(())
    }

    /// Sub-sample on the given margins, in that order.
    pub fn select(&self, margins: &[usize]) -> Result<Self> {
        let mut columns = Vec::with_capacity(margins.len());
        let mut labels = Vec::with_capacity(margins.len());
        for &j in margins {
            self.check_margin(j)?;
            columns.push(self.column(j).to_vec());
            labels.push(self.labels[j].clone());
        }
        Self::from_columns(columns, labels)
    }

    /// Every value multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let columns = self.columns().map(|col| col.iter().map(|x| x * c).collect()).collect();
        Self::from_columns(columns, self.labels.clone())
    }

    /// Column `j` sorted ascending.
    pub fn sorted_column(&self, j: usize) -> Vec<f64> {
        let mut col = self.column(j).to_vec();
        col.sort_unstable_by(f64::total_cmp);
        col
    }
}

/// Marginal ranks: 1 is the smallest value; ties keep input order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarginalRanks {
    n: usize,
    ranks: Vec<u32>,
}

impl MarginalRanks {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.ranks.len() / self.n
    }

    pub fn column(&self, j: usize) -> &[u32] {
        &self.ranks[j * self.n..(j + 1) * self.n]
    }

    pub fn rank(&self, i: usize, j: usize) -> u32 {
        self.ranks[j * self.n + i]
    }
}

pub fn compute_ranks(sample: &MultivariateSample) -> MarginalRanks {
    let n = sample.n();
    let mut ranks = Vec::with_capacity(n * sample.d());
    for col in sample.columns() {
        ranks.extend(column_ranks(col));
    }
    MarginalRanks { n, ranks }
}

/// Ranks of one column with the same stable tie rule.
pub fn column_ranks(col: &[f64]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..col.len()).collect();
    order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
    let mut ranks = vec![0u32; col.len()];
    for (r, &i) in order.iter().enumerate() {
        ranks[i] = r as u32 + 1;
    }
    ranks
}

/// `X_{i,n,j}`, the `i`-th smallest value of column `j` (1-based `i`).
pub fn order_statistic(sample: &MultivariateSample, j: usize, i: usize) -> Result<f64> {
    sample.check_margin(j)?;
    if i == 0 || i > sample.n() {
        return Err(Error::IndexOutOfRange { index: i, len: sample.n() });
    }
    Ok(sample.sorted_column(j)[i - 1])
}

/// `⌊n(1 - τ)⌋`, guarded against the representation error in `1 - k/n`.
pub fn effective_size(n: usize, tau: f64) -> usize {
    let x = n as f64 * (1.0 - tau);
    libm::floor(x + 1e-9 * x.max(1.0)) as usize
}

/// Intermediate level `τ`, extreme level `τ'`, and the derived `k`, `log d_n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TailLevelPair {
    pub tau: f64,
    pub tau_prime: f64,
    pub k: usize,
    pub log_dn: f64,
}

impl TailLevelPair {
    pub fn new(n: usize, tau: f64, tau_prime: f64) -> Result<Self> {
        check_level(tau)?;
        check_level(tau_prime)?;
        if tau >= tau_prime {
            return Err(Error::Level(format!("need tau < tau' < 1, got tau = {tau}, tau' = {tau_prime}")));
        }
        let k = effective_size(n, tau);
        if k < 2 || k + 1 > n {
            return Err(Error::Level(format!("effective size k = {k} outside [2, {}]", n.saturating_sub(1))));
        }
        let log_dn = libm::log((1.0 - tau) / (1.0 - tau_prime));
        Ok(Self { tau, tau_prime, k, log_dn })
    }

    /// `τ = 1 - k/n`.
    pub fn from_k(n: usize, k: usize, tau_prime: f64) -> Result<Self> {
        Self::new(n, tau_from_k(n, k)?, tau_prime)
    }

    /// The default extreme level `1 - 1/n`.
    pub fn default_tau_prime(n: usize) -> f64 {
        1.0 - 1.0 / n as f64
    }
}

pub fn tau_from_k(n: usize, k: usize) -> Result<f64> {
    if k == 0 || k >= n {
        return Err(Error::Level(format!("k = {k} outside [1, {}]", n.saturating_sub(1))));
    }
    Ok(1.0 - k as f64 / n as f64)
}

pub(crate) fn check_level(tau: f64) -> Result<()> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(Error::Level(format!("level must lie in (0, 1), got {tau}")));
    }
    Ok(())
}

impl core::fmt::Display for MultivariateSample {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        write!(f, "sample n={} d={} [{}]", self.n, self.d, self.labels.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn label_list(labels: &[&str]) -> Vec<String> {
        labels.iter().map(|s| s.to_string()).collect()
    }

    fn one(col: Vec<f64>) -> MultivariateSample {
        MultivariateSample::unlabeled(vec![col]).unwrap()
    }

    #[test]
    fn validation() {
        assert!(MultivariateSample::unlabeled(vec![vec![1.0, 2.0, 3.0]]).is_err());
        assert!(MultivariateSample::unlabeled(vec![vec![1.0, 2.0, f64::NAN, 4.0]]).is_err());
        assert!(MultivariateSample::unlabeled(vec![]).is_err());
        let dup = MultivariateSample::from_columns(vec![vec![1.0; 4], vec![2.0; 4]], label_list(&["a", "a"]));
        assert!(dup.is_err());
        let ragged = MultivariateSample::unlabeled(vec![vec![1.0; 4], vec![2.0; 5]]);
        assert!(ragged.is_err());
    }

    #[test]
    fn ranks_examples() {
        assert_eq!(column_ranks(&[5.0, 1.0, 3.0]), vec![3, 1, 2]);
        assert_eq!(column_ranks(&[2.0, 2.0]), vec![1, 2]);
        let s = one(vec![5.0, 1.0, 3.0, 0.0]);
        assert_eq!(compute_ranks(&s).column(0), &[4, 2, 3, 1]);
        let s = one((0..10).map(f64::from).collect());
        assert_eq!(compute_ranks(&s).column(0), &(1..=10).collect::<Vec<u32>>()[..]);
        let s = one(vec![2.0, 2.0, 7.0, 7.0]);
        assert_eq!(compute_ranks(&s).column(0), &[1, 2, 3, 4]);
    }

    #[test]
    fn order_statistics() {
        let s = one(vec![5.0, 1.0, 3.0, 4.0]);
        assert_eq!(order_statistic(&s, 0, 2).unwrap(), 3.0);
        assert_eq!(order_statistic(&s, 0, 4).unwrap(), 5.0);
        assert_eq!(order_statistic(&s, 0, 1).unwrap(), 1.0);
        assert!(order_statistic(&s, 0, 0).is_err());
        assert!(order_statistic(&s, 0, 5).is_err());
        assert!(order_statistic(&s, 1, 1).is_err());
    }

    #[test]
    fn levels() {
        let l = TailLevelPair::from_k(1000, 50, 0.999).unwrap();
        assert_eq!(l.k, 50);
        assert!((l.log_dn - libm::log(50.0)).abs() < 1e-10);
        for k in 2..1000 {
            assert_eq!(effective_size(1000, tau_from_k(1000, k).unwrap()), k);
        }
        assert!(TailLevelPair::new(1000, 0.999, 0.99).is_err());
        assert!(TailLevelPair::new(1000, 0.9995, 0.9999).is_err());
    }

    proptest! {
        #[test]
        fn ranks_invert_sort(col in proptest::collection::vec(-1e3f64..1e3, 4..60)) {
            let s = one(col.clone());
            let ranks = compute_ranks(&s);
            for (i, &r) in ranks.column(0).iter().enumerate() {
                prop_assert_eq!(order_statistic(&s, 0, r as usize).unwrap(), col[i]);
            }
        }

        #[test]
        fn k_tau_round_trip(n in 10usize..5000, frac in 0.01f64..0.9) {
            let k = ((n as f64 * frac) as usize).clamp(1, n - 1);
            prop_assert_eq!(effective_size(n, tau_from_k(n, k).unwrap()), k);
        }
    }
}
