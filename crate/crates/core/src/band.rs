//! Complex banded Gaussian elimination with partial (row) pivoting.
//!
//! Entries are stored diagonal-major: diagonal `d = j - i` occupies a
//! contiguous run of `order` slots indexed by row. Storage for the upper
//! part is pre-allocated with `lower_bandwidth` extra diagonals so that
//! row interchanges during factorization never need to grow the buffer.

use num_complex::Complex64;
use thiserror::Error;

/// Default pivot threshold, relative to the largest entry magnitude.
pub const DEFAULT_PIVOT_TOLERANCE: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error(
        "singular matrix: pivot {magnitude:e} in column {column} is below threshold {threshold:e}"
    )]
    SingularMatrix {
        column: usize,
        magnitude: f64,
        threshold: f64,
    },
    #[error("dimension mismatch: expected length {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("entry ({row}, {col}) lies outside the declared band")]
    OutsideBand { row: usize, col: usize },
    #[error("invalid band shape: order {order}, lower {lower}, upper {upper}")]
    InvalidShape {
        order: usize,
        lower: usize,
        upper: usize,
    },
}

/// Square complex matrix with `lower_bandwidth` sub- and
/// `upper_bandwidth` super-diagonals.
#[derive(Debug, Clone, PartialEq)]
pub struct BandMatrix {
    order: usize,
    lower: usize,
    upper: usize,
    data: Vec<Complex64>,
}

impl BandMatrix {
    pub fn zeros(order: usize, lower: usize, upper: usize) -> Result<Self, LinalgError> {
        if order == 0 || lower + upper + 1 > 2 * order - 1 {
            return Err(LinalgError::InvalidShape {
                order,
                lower,
                upper,
            });
        }
        let diagonals = 2 * lower + upper + 1;
        Ok(Self {
            order,
            lower,
            upper,
            data: vec![Complex64::new(0.0, 0.0); diagonals * order],
        })
    }

    pub fn identity(order: usize) -> Self {
        let mut m = Self::zeros(order, 0, 0).expect("order must be positive");
        for i in 0..order {
            m.data[i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Builds a band matrix from a dense row-major matrix, rejecting any
    /// nonzero entry outside the band.
    pub fn from_dense(
        dense: &[Vec<Complex64>],
        lower: usize,
        upper: usize,
    ) -> Result<Self, LinalgError> {
        let n = dense.len();
        let mut m = Self::zeros(n, lower, upper)?;
        for (i, row) in dense.iter().enumerate() {
            if row.len() != n {
                return Err(LinalgError::DimensionMismatch {
                    expected: n,
                    found: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if m.in_band(i, j) {
                    m.set(i, j, v)?;
                } else if v != Complex64::new(0.0, 0.0) {
                    return Err(LinalgError::OutsideBand { row: i, col: j });
                }
            }
        }
        Ok(m)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn lower_bandwidth(&self) -> usize {
        self.lower
    }

    pub fn upper_bandwidth(&self) -> usize {
        self.upper
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i < self.order && j < self.order && j + self.lower >= i && j <= i + self.upper
    }

    // Offset into storage, valid for d = j - i in [-lower, upper + lower].
    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        let d = j as isize - i as isize + self.lower as isize;
        debug_assert!(d >= 0 && d <= (2 * self.lower + self.upper) as isize);
        d as usize * self.order + i
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        if self.in_band(i, j) {
            self.data[self.slot(i, j)]
        } else {
            Complex64::new(0.0, 0.0)
        }
    }

    pub fn set(&mut self, i: usize, j: usize, value: Complex64) -> Result<(), LinalgError> {
        if !self.in_band(i, j) {
            return Err(LinalgError::OutsideBand { row: i, col: j });
        }
        let s = self.slot(i, j);
        self.data[s] = value;
        Ok(())
    }

    /// Adds `value` to entry (i, j). Panics outside the band; used by
    /// assembly loops whose stencils are known to fit.
    #[inline]
    pub fn add(&mut self, i: usize, j: usize, value: Complex64) {
        assert!(self.in_band(i, j), "({i}, {j}) outside band");
        let s = self.slot(i, j);
        self.data[s] += value;
    }

    /// Resets all entries to zero, keeping the shape.
    pub fn clear(&mut self) {
        self.data.fill(Complex64::new(0.0, 0.0));
    }

    pub fn max_abs(&self) -> f64 {
        let n = self.order;
        let mut best = 0.0f64;
        for i in 0..n {
            let lo = i.saturating_sub(self.lower);
            let hi = (i + self.upper).min(n - 1);
            for j in lo..=hi {
                best = best.max(self.data[self.slot(i, j)].norm());
            }
        }
        best
    }

    /// Infinity norm (maximum absolute row sum).
    pub fn norm_inf(&self) -> f64 {
        let n = self.order;
        (0..n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)].norm()).sum()
            })
            .fold(0.0, f64::max)
    }

    pub fn matvec(&self, x: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        let n = self.order;
        if x.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        Ok((0..n)
            .map(|i| {
                let lo = i.saturating_sub(self.lower);
                let hi = (i + self.upper).min(n - 1);
                (lo..=hi).map(|j| self.data[self.slot(i, j)] * x[j]).sum()
            })
            .collect())
    }

    pub fn to_dense(&self) -> Vec<Vec<Complex64>> {
        (0..self.order)
            .map(|i| (0..self.order).map(|j| self.get(i, j)).collect())
            .collect()
    }

    pub fn factor(self) -> Result<BandFactorization, LinalgError> {
        self.factor_with_tolerance(DEFAULT_PIVOT_TOLERANCE)
    }

    /// In-place LU factorization with row pivoting. `tolerance` is the
    /// smallest admissible pivot modulus relative to `max_abs()`.
    pub fn factor_with_tolerance(
        mut self,
        tolerance: f64,
    ) -> Result<BandFactorization, LinalgError> {
        let n = self.order;
        let kl = self.lower;
        let ku = self.upper;
        let threshold = tolerance * self.max_abs();
        let mut pivots = vec![0usize; n];

        for j in 0..n {
            let last_row = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = self.data[self.slot(j, j)].norm();
            for i in j + 1..=last_row {
                let v = self.data[self.slot(i, j)].norm();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > threshold) || best == 0.0 {
                return Err(LinalgError::SingularMatrix {
                    column: j,
                    magnitude: best,
                    threshold,
                });
            }
            pivots[j] = p;
            // after the swap, row j reaches at most column p + ku <= j + kl + ku
            let last_col = (j + kl + ku).min(n - 1);
            if p != j {
                for k in j..=last_col {
                    let a = self.slot(j, k);
                    let b = self.slot(p, k);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.slot(j, j)];
            for i in j + 1..=last_row {
                let sij = self.slot(i, j);
                let l = self.data[sij] / pivot;
                self.data[sij] = l;
                if l == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for k in j + 1..=last_col {
                    let u = self.data[self.slot(j, k)];
                    let sik = self.slot(i, k);
                    self.data[sik] -= l * u;
                }
            }
        }
        Ok(BandFactorization { lu: self, pivots })
    }
}

/// Pivoted LU factors of a [`BandMatrix`]. The unit lower factor keeps
/// the multipliers in the sub-diagonals; the upper factor occupies the
/// main diagonal plus `upper + lower` super-diagonals.
#[derive(Debug, Clone)]
pub struct BandFactorization {
    lu: BandMatrix,
    pivots: Vec<usize>,
}

impl BandFactorization {
    pub fn order(&self) -> usize {
        self.lu.order
    }

    pub fn pivots(&self) -> &[usize] {
        &self.pivots
    }

    /// Gives back the storage for reuse; the contents are the LU factors.
    pub fn into_matrix(self) -> BandMatrix {
        self.lu
    }

    /// Highest super-diagonal of U holding a nonzero entry.
    pub fn upper_fill(&self) -> usize {
        let n = self.lu.order;
        let mut fill = 0;
        for i in 0..n {
            let hi = (i + self.lu.upper + self.lu.lower).min(n - 1);
            for j in i..=hi {
                if self.lu.data[self.lu.slot(i, j)] != Complex64::new(0.0, 0.0) {
                    fill = fill.max(j - i);
                }
            }
        }
        fill
    }

    pub fn solve(&self, rhs: &[Complex64]) -> Result<Vec<Complex64>, LinalgError> {
        let mut x = rhs.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, x: &mut [Complex64]) -> Result<(), LinalgError> {
        let lu = &self.lu;
        let n = lu.order;
        if x.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: x.len(),
            });
        }
        let kl = lu.lower;
        let ku = lu.upper;
        for j in 0..n {
            let p = self.pivots[j];
            if p != j {
                x.swap(j, p);
            }
            let xj = x[j];
            for i in j + 1..=(j + kl).min(n - 1) {
                x[i] -= lu.data[lu.slot(i, j)] * xj;
            }
        }
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in i + 1..=(i + kl + ku).min(n - 1) {
                acc -= lu.data[lu.slot(i, k)] * x[k];
            }
            x[i] = acc / lu.data[lu.slot(i, i)];
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identity_solve_returns_input() {
        let f = BandMatrix::identity(8).factor().unwrap();
        let b: Vec<_> = (0..8).map(|k| c(k as f64, -(k as f64) * 0.5)).collect();
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn diagonal_scaling() {
        let mut m = BandMatrix::zeros(10, 1, 1).unwrap();
        for i in 0..10 {
            m.set(i, i, c(0.0, 2.0)).unwrap();
        }
        let f = m.factor().unwrap();
        let x = f.solve(&vec![c(0.0, 2.0); 10]).unwrap();
        for v in x {
            assert!((v - c(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_row_is_singular() {
        let mut m = BandMatrix::zeros(6, 1, 1).unwrap();
        for i in 0..6 {
            if i == 3 {
                continue;
            }
            m.set(i, i, c(4.0, 0.0)).unwrap();
            if i > 0 {
                m.set(i, i - 1, c(1.0, 0.5)).unwrap();
            }
        }
        assert!(matches!(
            m.factor(),
            Err(LinalgError::SingularMatrix { .. })
        ));
    }

    #[test]
    fn length_mismatch() {
        let f = BandMatrix::identity(4).factor().unwrap();
        assert_eq!(
            f.solve(&[c(1.0, 0.0); 3]),
            Err(LinalgError::DimensionMismatch {
                expected: 4,
                found: 3
            })
        );
    }

    #[test]
    fn outside_band_rejected() {
        let mut m = BandMatrix::zeros(5, 1, 2).unwrap();
        assert!(m.set(0, 3, c(1.0, 0.0)).is_err());
        assert!(m.set(2, 0, c(1.0, 0.0)).is_err());
        assert!(m.set(0, 2, c(1.0, 0.0)).is_ok());
        assert!(BandMatrix::zeros(0, 0, 0).is_err());
        assert!(BandMatrix::zeros(2, 2, 1).is_err());
    }

    #[test]
    fn pivoting_needed_for_zero_diagonal() {
        // [[0, 1], [1, 0]] is nonsingular but has a zero leading pivot
        let mut m = BandMatrix::zeros(2, 1, 1).unwrap();
        m.set(0, 1, c(1.0, 0.0)).unwrap();
        m.set(1, 0, c(1.0, 0.0)).unwrap();
        let f = m.factor().unwrap();
        let x = f.solve(&[c(2.0, 0.0), c(3.0, 1.0)]).unwrap();
        assert_eq!(x, vec![c(3.0, 1.0), c(2.0, 0.0)]);
    }
}
