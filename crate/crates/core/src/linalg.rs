//! Dense/sparse matrix storage and the factorizations used for every
//! `M⁻¹x`-style product in the crate.
//!
//! Dense matrices use nalgebra. Sparse matrices are stored as CSR
//! (`nalgebra_sparse`) and factorized with faer's sparse LU.

use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use nalgebra::{DMatrix, DVector, Dyn};
use nalgebra_sparse::{CooMatrix, CsrMatrix};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;

/// Fill fraction above which a sparse product result is stored densely.
pub const DENSE_FILL_THRESHOLD: f64 = 0.25;

#[derive(Clone, Debug)]
pub enum Matrix {
    Dense(DMatrix<f64>),
    Sparse(CsrMatrix<f64>),
}

impl From<DMatrix<f64>> for Matrix {
    fn from(m: DMatrix<f64>) -> Self {
        Matrix::Dense(m)
    }
}

impl From<CsrMatrix<f64>> for Matrix {
    fn from(m: CsrMatrix<f64>) -> Self {
        Matrix::Sparse(m)
    }
}

impl Matrix {
    pub fn zeros(n: usize, sparse: bool) -> Self {
        if sparse {
            Matrix::Sparse(CsrMatrix::zeros(n, n))
        } else {
            Matrix::Dense(DMatrix::zeros(n, n))
        }
    }

    pub fn identity(n: usize) -> Self {
        Matrix::Dense(DMatrix::identity(n, n))
    }

    pub fn from_row_slice(n: usize, values: &[f64]) -> Self {
        Matrix::Dense(DMatrix::from_row_slice(n, n, values))
    }

    /// Builds a sparse matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut coo = CooMatrix::new(nrows, ncols);
        for (i, j, v) in triplets {
            if i >= nrows || j >= ncols {
                return Err(Error::InvalidParameter(format!(
                    "entry ({i}, {j}) outside {nrows}x{ncols} matrix"
                )));
            }
            coo.push(i, j, v);
        }
        Ok(Matrix::Sparse(CsrMatrix::from(&coo)))
    }

    pub fn nrows(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.nrows(),
            Matrix::Sparse(m) => m.nrows(),
        }
    }

    pub fn ncols(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.ncols(),
            Matrix::Sparse(m) => m.ncols(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Matrix::Sparse(_))
    }

    /// Number of stored nonzero entries (exact zeros in dense storage are not counted).
    pub fn nnz(&self) -> usize {
        match self {
            Matrix::Dense(m) => m.iter().filter(|v| **v != 0.0).count(),
            Matrix::Sparse(m) => m.values().iter().filter(|v| **v != 0.0).count(),
        }
    }

    pub fn fill_fraction(&self) -> f64 {
        let total = (self.nrows() * self.ncols()).max(1);
        self.nnz() as f64 / total as f64
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self {
            Matrix::Dense(m) => m[(i, j)],
            Matrix::Sparse(m) => m
                .get_entry(i, j)
                .map(|e| e.into_value())
                .unwrap_or(0.0),
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            Matrix::Dense(m) => m.clone(),
            Matrix::Sparse(m) => {
                let mut d = DMatrix::zeros(m.nrows(), m.ncols());
                for (i, j, v) in m.triplet_iter() {
                    d[(i, j)] += *v;
                }
                d
            }
        }
    }

    /// Sparse copy with exact zeros dropped.
    pub fn to_sparse(&self) -> CsrMatrix<f64> {
        match self {
            Matrix::Sparse(m) => m.clone(),
            Matrix::Dense(d) => {
                let mut coo = CooMatrix::new(d.nrows(), d.ncols());
                for j in 0..d.ncols() {
                    for i in 0..d.nrows() {
                        let v = d[(i, j)];
                        if v != 0.0 {
                            coo.push(i, j, v);
                        }
                    }
                }
                CsrMatrix::from(&coo)
            }
        }
    }

    pub fn into_storage(self, sparse: bool) -> Matrix {
        match (self, sparse) {
            (m @ Matrix::Sparse(_), true) | (m @ Matrix::Dense(_), false) => m,
            (m, true) => Matrix::Sparse(m.to_sparse()),
            (m, false) => Matrix::Dense(m.to_dense()),
        }
    }

    /// Switches a sparse matrix to dense storage once its fill passes
    /// [`DENSE_FILL_THRESHOLD`]; dense matrices are returned unchanged.
    pub fn compact(self) -> Matrix {
        match self {
            Matrix::Sparse(ref m) => {
                let total = (m.nrows() * m.ncols()).max(1);
                if m.nnz() as f64 / total as f64 > DENSE_FILL_THRESHOLD {
                    Matrix::Dense(self.to_dense())
                } else {
                    self
                }
            }
            d => d,
        }
    }

    pub fn mul_vec(&self, x: &Vector) -> Vector {
        let mut out = Vector::zeros(self.nrows());
        self.gemv(&mut out, 1.0, x, 0.0);
        out
    }

    /// `out = alpha * self * x + beta * out`
    pub fn gemv(&self, out: &mut Vector, alpha: f64, x: &Vector, beta: f64) {
        debug_assert_eq!(x.len(), self.ncols());
        debug_assert_eq!(out.len(), self.nrows());
        match self {
            Matrix::Dense(m) => out.gemv(alpha, m, x, beta),
            Matrix::Sparse(m) => {
                let offsets = m.row_offsets();
                let cols = m.col_indices();
                let vals = m.values();
                let xs = x.as_slice();
                for (i, o) in out.iter_mut().enumerate() {
                    let mut acc = 0.0;
                    for k in offsets[i]..offsets[i + 1] {
                        acc += vals[k] * xs[cols[k]];
                    }
                    *o = if beta == 0.0 {
                        alpha * acc
                    } else {
                        alpha * acc + beta * *o
                    };
                }
            }
        }
    }

    /// `self * rhs` with a dense right-hand side.
    pub fn mul_dense(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Matrix::Dense(m) => m * rhs,
            Matrix::Sparse(m) => {
                let mut out = DMatrix::zeros(m.nrows(), rhs.ncols());
                for (i, row) in m.row_iter().enumerate() {
                    for (&j, &v) in row.col_indices().iter().zip(row.values()) {
                        for c in 0..rhs.ncols() {
                            out[(i, c)] += v * rhs[(j, c)];
                        }
                    }
                }
                out
            }
        }
    }

    /// `Σ coeff_i · A_i`. The result is sparse only when every term is sparse.
    pub fn lin_comb(terms: &[(f64, &Matrix)]) -> Result<Matrix> {
        let (n, m) = match terms.first() {
            Some((_, a)) => (a.nrows(), a.ncols()),
            None => return Err(Error::InvalidParameter("empty linear combination".into())),
        };
        for (_, a) in terms {
            if a.nrows() != n || a.ncols() != m {
                return Err(Error::Dimension {
                    what: "linear combination",
                    expected: n,
                    found: a.nrows(),
                });
            }
        }
        if terms.iter().all(|(_, a)| a.is_sparse()) {
            let mut coo = CooMatrix::new(n, m);
            for (c, a) in terms {
                if let Matrix::Sparse(s) = a {
                    for (i, j, v) in s.triplet_iter() {
                        coo.push(i, j, c * v);
                    }
                }
            }
            Ok(Matrix::Sparse(CsrMatrix::from(&coo)))
        } else {
            let mut out = DMatrix::zeros(n, m);
            for (c, a) in terms {
                match a {
                    Matrix::Dense(d) => out += d * *c,
                    Matrix::Sparse(s) => {
                        for (i, j, v) in s.triplet_iter() {
                            out[(i, j)] += c * v;
                        }
                    }
                }
            }
            Ok(Matrix::Dense(out))
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.nnz() == 0
    }
}

/// LU factorization of a square matrix, dense or sparse.
#[derive(Debug)]
pub enum Factorization {
    Dense(nalgebra::linalg::LU<f64, Dyn, Dyn>),
    Sparse {
        n: usize,
        lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
    },
}

/// Pivot ratio below which a dense LU is declared singular.
const PIVOT_RATIO_FLOOR: f64 = 1e-14;

impl Factorization {
    pub fn new(a: &Matrix) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::NotSquare {
                what: "factorized matrix",
                rows: n,
                cols: a.ncols(),
            });
        }
        match a {
            Matrix::Dense(d) => {
                if d.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Singular("matrix has non-finite entries".into()));
                }
                let lu = d.clone().lu();
                let diag = lu.u().diagonal();
                let max = diag.iter().fold(0.0f64, |m, v| m.max(v.abs()));
                let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
                if n > 0 && (max == 0.0 || min / max < PIVOT_RATIO_FLOOR) {
                    return Err(Error::Singular(format!(
                        "pivot ratio {:.3e} below {PIVOT_RATIO_FLOOR:e}",
                        if max == 0.0 { 0.0 } else { min / max }
                    )));
                }
                Ok(Factorization::Dense(lu))
            }
            Matrix::Sparse(s) => {
                let triplets: Vec<_> = s
                    .triplet_iter()
                    .map(|(i, j, v)| Triplet::new(i, j, *v))
                    .collect();
                let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
                    .map_err(|e| Error::InvalidParameter(format!("sparse assembly: {e:?}")))?;
                let lu = mat
                    .sp_lu()
                    .map_err(|e| Error::Singular(format!("sparse LU: {e:?}")))?;
                let f = Factorization::Sparse { n, lu };
                let probe = f.solve(&Vector::from_element(n, 1.0));
                if probe.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Singular("sparse LU produced non-finite solve".into()));
                }
                Ok(f)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Factorization::Dense(lu) => lu.l().nrows(),
            Factorization::Sparse { n, .. } => *n,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self, Factorization::Sparse { .. })
    }

    pub fn solve_in_place(&self, b: &mut Vector) {
        match self {
            Factorization::Dense(lu) => {
                lu.solve_mut(b);
            }
            Factorization::Sparse { n, lu } => {
                let rhs = faer::MatMut::from_column_major_slice_mut(b.as_mut_slice(), *n, 1);
                lu.solve_in_place(rhs);
            }
        }
    }

    pub fn solve(&self, b: &Vector) -> Vector {
        let mut x = b.clone();
        self.solve_in_place(&mut x);
        x
    }

    /// Column-by-column solve against a dense right-hand side.
    pub fn solve_matrix(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        match self {
            Factorization::Dense(lu) => {
                let mut x = b.clone();
                lu.solve_mut(&mut x);
                x
            }
            Factorization::Sparse { n, lu } => {
                let mut x = b.clone();
                let cols = x.ncols();
                let rhs = faer::MatMut::from_column_major_slice_mut(x.as_mut_slice(), *n, cols);
                lu.solve_in_place(rhs);
                x
            }
        }
    }
}

/// Dense product `A · F⁻¹ · B` where `F` is a factorization (typically of the mass matrix).
pub fn sandwich(a: &Matrix, f: &Factorization, b: &Matrix) -> DMatrix<f64> {
    let inner = f.solve_matrix(&b.to_dense());
    a.mul_dense(&inner)
}

/// Converts a dense product back to the storage class of `like`, densifying
/// above [`DENSE_FILL_THRESHOLD`].
pub fn store_like(d: DMatrix<f64>, sparse: bool) -> Matrix {
    let m = Matrix::Dense(d);
    if sparse {
        Matrix::Sparse(m.to_sparse()).compact()
    } else {
        m
    }
}

pub fn is_finite(v: &Vector) -> bool {
    v.iter().all(|x| x.is_finite())
}
