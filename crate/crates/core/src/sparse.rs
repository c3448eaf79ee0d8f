//! Compressed-row storage for the assembled operators and a banded LU
//! factorisation for the implicit step matrix.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Real sparse matrix in CSR form. Duplicate triplets are summed.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_triplets(rows: usize, cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; rows + 1];
        let mut col_idx: Vec<usize> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix {
            rows,
            cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()].iter().copied().zip(self.values[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        match self.col_idx[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn transpose(&self) -> CsrMatrix {
        CsrMatrix::from_triplets(self.cols, self.rows, self.triplets().map(|(r, c, v)| (c, r, v)).collect())
    }

    /// Largest entrywise deviation from the conjugate transpose, divided by
    /// the largest entry. Zero for a Hermitian (here: symmetric) matrix.
    pub fn hermitian_defect(&self) -> f64 {
        assert_eq!(self.rows, self.cols);
        let scale = self.max_abs();
        if scale == 0.0 {
            return 0.0;
        }
        let defect = self
            .triplets()
            .map(|(r, c, v)| (v - self.get(c, r)).abs())
            .fold(0.0, f64::max);
        defect / scale
    }

    pub fn mul_vec(&self, x: &[Complex64]) -> Vec<Complex64> {
        let mut y = vec![Complex64::default(); self.rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        debug_assert_eq!(x.len(), self.cols);
        for (r, yr) in y.iter_mut().enumerate() {
            *yr = self.row(r).map(|(c, v)| x[c] * v).sum();
        }
    }

    /// Half bandwidth: largest `|r - c|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        self.triplets().map(|(r, c, _)| r.abs_diff(c)).max().unwrap_or(0)
    }
}

/// LU factors of a complex band matrix, computed without pivoting.
///
/// Only used for `I + i a H` with `H` real symmetric: its Hermitian part is
/// the identity, so every leading Schur complement keeps a positive definite
/// Hermitian part and the pivots stay away from zero.
#[derive(Clone, Debug)]
pub struct BandedLu {
    n: usize,
    bw: usize,
    // row-major, 2*bw+1 entries per row; entry (r, c) at r*(2bw+1) + (c + bw - r)
    data: Vec<Complex64>,
}

impl BandedLu {
    /// Factors `diag * I + scale * i * m`.
    pub fn factor_shifted(m: &CsrMatrix, diag: f64, scale: f64) -> Result<Self> {
        assert_eq!(m.rows(), m.cols());
        let n = m.rows();
        let bw = m.bandwidth();
        let width = 2 * bw + 1;
        let mut data = vec![Complex64::default(); n * width];
        for r in 0..n {
            data[r * width + bw] = Complex64::new(diag, 0.0);
        }
        for (r, c, v) in m.triplets() {
            data[r * width + c + bw - r] += Complex64::new(0.0, scale * v);
        }
        let mut lu = BandedLu { n, bw, data };
        lu.eliminate()?;
        Ok(lu)
    }

    #[inline]
    fn at(&self, r: usize, c: usize) -> usize {
        r * (2 * self.bw + 1) + c + self.bw - r
    }

    fn eliminate(&mut self) -> Result<()> {
        let (n, bw) = (self.n, self.bw);
        for k in 0..n {
            let pivot = self.data[self.at(k, k)];
            if pivot.norm() == 0.0 || !pivot.is_finite() {
                return Err(Error::SingularStep(k));
            }
            let end = (k + bw + 1).min(n);
            for i in k + 1..end {
                let ik = self.at(i, k);
                if self.data[ik] == Complex64::default() {
                    continue;
                }
                let l = self.data[ik] / pivot;
                self.data[ik] = l;
                for j in k + 1..end {
                    let kj = self.data[self.at(k, j)];
                    let ij = self.at(i, j);
                    self.data[ij] -= l * kj;
                }
            }
        }
        Ok(())
    }

    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let (n, bw) = (self.n, self.bw);
        debug_assert_eq!(b.len(), n);
        for i in 0..n {
            let start = i.saturating_sub(bw);
            let mut acc = b[i];
            for (j, bj) in b.iter().enumerate().take(i).skip(start) {
                acc -= self.data[self.at(i, j)] * bj;
            }
            b[i] = acc;
        }
        for i in (0..n).rev() {
            let end = (i + bw + 1).min(n);
            let mut acc = b[i];
            for (j, bj) in b.iter().enumerate().take(end).skip(i + 1) {
                acc -= self.data[self.at(i, j)] * bj;
            }
            b[i] = acc / self.data[self.at(i, i)];
        }
    }
}
