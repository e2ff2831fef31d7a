use crate::{Error, Result};
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

/// Relative threshold below which negative eigenvalues are clipped to zero.
pub const PSD_CLIP_TOLERANCE: f64 = 1e-6;
/// Eigenvalues at or below this fraction of the trace count as singular.
pub const SINGULAR_TOLERANCE: f64 = 1e-10;
const JACOBI_TOLERANCE: f64 = 1e-13;
const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a real symmetric matrix, `A = V diag(values) V^T`.
///
/// `vectors` is row-major with eigenvectors stored as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Vec<f64>,
}

impl SymmetricEigen {
    /// Cyclic Jacobi rotations on a row-major symmetric `dim x dim` matrix.
    pub fn jacobi(dim: usize, entries: &[f64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        let mut a = entries.to_vec();
        let mut v = vec![0.0; dim * dim];
        for i in 0..dim {
            v[i * dim + i] = 1.0;
        }
        let scale = (0..dim).map(|i| a[i * dim + i].abs()).sum::<f64>().max(f64::MIN_POSITIVE);
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..dim)
                .flat_map(|i| (0..dim).filter(move |&j| j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i * dim + j] * a[i * dim + j])
                .sum::<f64>();
            if libm::sqrt(off) < JACOBI_TOLERANCE * scale {
                break;
            }
            for p in 0..dim {
                for q in (p + 1)..dim {
                    let apq = a[p * dim + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[p * dim + p];
                    let aqq = a[q * dim + q];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + libm::sqrt(theta * theta + 1.0));
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / libm::sqrt(t * t + 1.0);
                    let s = t * c;
                    for k in 0..dim {
                        let akp = a[k * dim + p];
                        let akq = a[k * dim + q];
                        a[k * dim + p] = c * akp - s * akq;
                        a[k * dim + q] = s * akp + c * akq;
                    }
                    for k in 0..dim {
                        let apk = a[p * dim + k];
                        let aqk = a[q * dim + k];
                        a[p * dim + k] = c * apk - s * aqk;
                        a[q * dim + k] = s * apk + c * aqk;
                    }
                    for k in 0..dim {
                        let vkp = v[k * dim + p];
                        let vkq = v[k * dim + q];
                        v[k * dim + p] = c * vkp - s * vkq;
                        v[k * dim + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
        let values = (0..dim).map(|i| a[i * dim + i]).collect();
        Ok(Self { values, vectors: v })
    }

    fn reconstruct(&self, dim: usize, map: impl Fn(f64) -> f64) -> Vec<f64> {
        let mut out = vec![0.0; dim * dim];
        for (k, &lambda) in self.values.iter().enumerate() {
            let w = map(lambda);
            if w == 0.0 {
                continue;
            }
            for i in 0..dim {
                let vi = self.vectors[i * dim + k] * w;
                for j in 0..dim {
                    out[i * dim + j] += vi * self.vectors[j * dim + k];
                }
            }
        }
        out
    }
}

/// Symmetric positive semidefinite matrix, row-major.
///
/// Construction symmetrizes the input and clips eigenvalues in
/// `[-1e-6 * trace, 0)` up to zero; anything more negative is rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix {
    dim: usize,
    entries: Vec<f64>,
    eigen: SymmetricEigen,
    clipped: f64,
}

impl SpdMatrix {
    pub fn new(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("matrix dimension must be positive".into()));
        }
        if entries.len() != dim * dim {
            return Err(Error::DimensionMismatch { expected: dim * dim, got: entries.len() });
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("matrix has non-finite entries".into()));
        }
        let max_abs = entries.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let mut sym = entries;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let (a, b) = (sym[i * dim + j], sym[j * dim + i]);
                if (a - b).abs() > 1e-8 * max_abs.max(f64::MIN_POSITIVE) {
                    return Err(Error::Domain(format!(
                        "matrix not symmetric at ({i},{j}): {a} vs {b}"
                    )));
                }
                let m = 0.5 * (a + b);
                sym[i * dim + j] = m;
                sym[j * dim + i] = m;
            }
        }
        let eigen = SymmetricEigen::jacobi(dim, &sym)?;
        let trace: f64 = (0..dim).map(|i| sym[i * dim + i]).sum();
        let floor = -PSD_CLIP_TOLERANCE * trace.abs();
        let mut clipped = 0.0;
        for &lambda in &eigen.values {
            if lambda < floor || (trace <= 0.0 && lambda < 0.0) {
                return Err(Error::NotPositiveSemidefinite { eigenvalue: lambda, trace });
            }
            if lambda < 0.0 {
                clipped += -lambda;
            }
        }
        let (entries, eigen) = if clipped > 0.0 {
            let values: Vec<f64> = eigen.values.iter().map(|&l| l.max(0.0)).collect();
            let eigen = SymmetricEigen { values, vectors: eigen.vectors };
            (eigen.reconstruct(dim, |l| l), eigen)
        } else {
            (sym, eigen)
        };
        Ok(Self { dim, entries, eigen, clipped })
    }

    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let dim = rows.len();
        let mut entries = Vec::with_capacity(dim * dim);
        for row in rows {
            if row.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: row.len() });
            }
            entries.extend_from_slice(row);
        }
        Self::new(dim, entries)
    }

    pub fn identity(dim: usize) -> Self {
        Self::diagonal(&vec![1.0; dim]).expect("identity is PSD")
    }

    pub fn diagonal(diag: &[f64]) -> Result<Self> {
        let dim = diag.len();
        let mut entries = vec![0.0; dim * dim];
        for (i, &d) in diag.iter().enumerate() {
            entries[i * dim + i] = d;
        }
        Self::new(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.dim + j]
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.dim).map(|r| r.to_vec()).collect()
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn eigen(&self) -> &SymmetricEigen {
        &self.eigen
    }

    /// Total magnitude of negative eigenvalues removed at construction.
    pub fn clipped_magnitude(&self) -> f64 {
        self.clipped
    }

    /// Same matrix with every off-diagonal entry set to zero.
    pub fn diagonal_part(&self) -> Self {
        let diag: Vec<f64> = (0..self.dim).map(|i| self.get(i, i)).collect();
        Self::diagonal(&diag).expect("diagonal of a PSD matrix is PSD")
    }

    /// Principal square root through the eigendecomposition.
    pub fn sqrt(&self) -> Self {
        let entries = self.eigen.reconstruct(self.dim, |l| libm::sqrt(l.max(0.0)));
        Self::new(self.dim, entries).expect("square root of a PSD matrix is PSD")
    }

    /// Submatrix on the given index set, in that order.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let m = idx.len();
        let mut entries = Vec::with_capacity(m * m);
        for &i in idx {
            for &j in idx {
                if i >= self.dim || j >= self.dim {
                    return Err(Error::IndexOutOfRange { index: i.max(j) + 1, len: self.dim });
                }
                entries.push(self.get(i, j));
            }
        }
        Self::new(m, entries)
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.dim, self.entries.iter().map(|x| x * factor).collect())
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        self.entries
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn is_strictly_positive_definite(&self) -> bool {
        let trace = self.trace();
        trace > 0.0 && self.eigen.values.iter().all(|&l| l > SINGULAR_TOLERANCE * trace)
    }

    fn cholesky(&self, kind: &str) -> Result<Vec<f64>> {
        if !self.is_strictly_positive_definite() {
            return Err(Error::SingularCovariance { kind: String::from(kind) });
        }
        let n = self.dim;
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self.get(i, j);
                for k in 0..j {
                    sum -= l[i * n + k] * l[j * n + k];
                }
                if i == j {
                    if sum <= 0.0 {
                        return Err(Error::SingularCovariance { kind: String::from(kind) });
                    }
                    l[i * n + i] = libm::sqrt(sum);
                } else {
                    l[i * n + j] = sum / l[j * n + j];
                }
            }
        }
        Ok(l)
    }

    fn forward_substitute(l: &[f64], n: usize, b: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= l[i * n + k] * y[k];
            }
            y[i] = s / l[i * n + i];
        }
        y
    }

    /// `v^T M^{-1} v` through the Cholesky factor; `kind` labels errors.
    pub fn quadratic_form_labeled(&self, v: &[f64], kind: &str) -> Result<f64> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        let l = self.cholesky(kind)?;
        let y = Self::forward_substitute(&l, self.dim, v);
        Ok(y.iter().map(|x| x * x).sum())
    }

    pub fn quadratic_form(&self, v: &[f64]) -> Result<f64> {
        self.quadratic_form_labeled(v, "matrix")
    }

    /// Solves `M x = b`.
    pub fn solve(&self, b: &[f64], kind: &str) -> Result<Vec<f64>> {
        if b.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: b.len() });
        }
        let l = self.cholesky(kind)?;
        Ok(cholesky_back(&l, self.dim, &Self::forward_substitute(&l, self.dim, b)))
    }
}

fn cholesky_back(l: &[f64], n: usize, y: &[f64]) -> Vec<f64> {
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    x
}

/// Solves `M x = b` for a strictly positive definite `M`.
pub fn cholesky_solve(m: &SpdMatrix, b: &[f64]) -> Result<Vec<f64>> {
    m.solve(b, "matrix")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frob_diff(a: &[f64], b: &[f64]) -> f64 {
        libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum())
    }

    fn matmul(n: usize, a: &[f64], b: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|k| a[i * n + k] * b[k * n + j]).sum();
            }
        }
        out
    }

    #[test]
    fn sqrt_examples() {
        let id = SpdMatrix::identity(3);
        assert!(frob_diff(id.sqrt().entries(), id.entries()) < 1e-14);
        let d = SpdMatrix::diagonal(&[4.0, 9.0]).unwrap();
        assert!(frob_diff(d.sqrt().entries(), &[2.0, 0.0, 0.0, 3.0]) < 1e-14);
        let m = SpdMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        let mut values = m.eigen().values.clone();
        values.sort_by(f64::total_cmp);
        assert!((values[0] - 1.0).abs() < 1e-12 && (values[1] - 3.0).abs() < 1e-12);
        let s = m.sqrt();
        let ss = matmul(2, s.entries(), s.entries());
        assert!(frob_diff(&ss, m.entries()) / frob_diff(m.entries(), &[0.0; 4]) < 1e-9);
    }

    #[test]
    fn quadratic_form_examples() {
        let id = SpdMatrix::identity(2);
        assert!((id.quadratic_form(&[3.0, 4.0]).unwrap() - 25.0).abs() < 1e-12);
        let d = SpdMatrix::diagonal(&[1.0, 4.0]).unwrap();
        assert!((d.quadratic_form(&[0.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        let m = SpdMatrix::from_rows(&[&[2.0, 1.0], &[1.0, 2.0]]).unwrap();
        assert!((m.quadratic_form(&[1.0, 1.0]).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn singular_matrix_names_kind() {
        let m = SpdMatrix::from_rows(&[&[1.0, 1.0], &[1.0, 1.0]]).unwrap();
        match m.quadratic_form_labeled(&[1.0, 0.0], "star_laws") {
            Err(Error::SingularCovariance { kind }) => assert_eq!(kind, "star_laws"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn clipping_and_rejection() {
        // Eigenvalues 2 and -1e-8: clipped.
        let a = 1.0 - 0.5e-8;
        let b = 1.0 + 0.5e-8;
        let m = SpdMatrix::from_rows(&[&[a, b], &[b, a]]).unwrap();
        assert!(m.clipped_magnitude() > 0.0);
        assert!(m.eigen().values.iter().all(|&l| l >= 0.0));
        // Eigenvalue -1 with trace 2: rejected.
        let bad = SpdMatrix::from_rows(&[&[1.0, 2.0], &[2.0, 1.0]]);
        assert!(matches!(bad, Err(Error::NotPositiveSemidefinite { .. })));
    }

    proptest! {
        #[test]
        fn sqrt_of_square_is_identity_for_diagonal(d in proptest::collection::vec(0.01f64..100.0, 1..6)) {
            let sq: Vec<f64> = d.iter().map(|x| x * x).collect();
            let m = SpdMatrix::diagonal(&sq).unwrap();
            let s = m.sqrt();
            for (i, x) in d.iter().enumerate() {
                prop_assert!((s.get(i, i) - x).abs() < 1e-10 * x.max(1.0));
            }
        }

        #[test]
        fn quadratic_form_is_nonnegative(
            seed in proptest::collection::vec(-1.0f64..1.0, 9),
            v in proptest::collection::vec(-10.0f64..10.0, 3),
        ) {
            // A A^T + 0.1 I is strictly PD.
            let mut m = matmul(3, &seed, &{
                let mut t = vec![0.0; 9];
                for i in 0..3 { for j in 0..3 { t[i * 3 + j] = seed[j * 3 + i]; } }
                t
            });
            for i in 0..3 { m[i * 3 + i] += 0.1; }
            let m = SpdMatrix::new(3, m).unwrap();
            let q = m.quadratic_form(&v).unwrap();
            prop_assert!(q >= 0.0);
            let s = m.sqrt();
            let ss = matmul(3, s.entries(), s.entries());
            prop_assert!(frob_diff(&ss, m.entries()) < 1e-9 * m.trace());
            if v.iter().all(|x| *x == 0.0) { prop_assert_eq!(q, 0.0); } else { prop_assert!(q > 0.0); }
        }
    }
}
