use super::TtError;

/// First-derivative finite-difference operator on a uniform 1D grid, stored
/// as a sparse `n × n` matrix in CSR form.
///
/// Interior rows use the central stencil `(f[k+1] − f[k−1]) / 2h`; the first
/// and last rows use the one-sided three-point stencils
/// `(−3/2 f0 + 2 f1 − 1/2 f2) / h` and `(1/2 f[n−3] − 2 f[n−2] + 3/2 f[n−1]) / h`.
/// Every row is exact for polynomials of degree ≤ 2.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffMatrix {
    n: usize,
    h: f64,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    coeffs: Vec<f64>,
}

impl DiffMatrix {
    pub fn new(n: usize, h: f64) -> Result<Self, TtError> {
        if n < 3 {
            return Err(TtError::GridTooShort(n));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(TtError::BadSpacing(h));
        }
        let inv = 1.0 / h;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(2 * n + 2);
        let mut coeffs = Vec::with_capacity(2 * n + 2);
        row_ptr.push(0);

        col_idx.extend([0, 1, 2]);
        coeffs.extend([-1.5 * inv, 2.0 * inv, -0.5 * inv]);
        row_ptr.push(col_idx.len());
        for k in 1..n - 1 {
            col_idx.extend([k - 1, k + 1]);
            coeffs.extend([-0.5 * inv, 0.5 * inv]);
            row_ptr.push(col_idx.len());
        }
        col_idx.extend([n - 3, n - 2, n - 1]);
        coeffs.extend([0.5 * inv, -2.0 * inv, 1.5 * inv]);
        row_ptr.push(col_idx.len());

        Ok(Self {
            n,
            h,
            row_ptr,
            col_idx,
            coeffs,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn nnz(&self) -> usize {
        self.coeffs.len()
    }

    /// Nonzeros of row `r` as `(column, coefficient)` pairs.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.coeffs[span].iter().copied())
    }

    /// `out = D · f`.
    ///
    /// Each row's weights sum to zero, so the row is evaluated on differences
    /// from its first referenced sample; constants then map to exactly zero.
    pub fn apply_into(&self, f: &[f64], out: &mut [f64]) {
        assert_eq!(f.len(), self.n);
        assert_eq!(out.len(), self.n);
        for (r, o) in out.iter_mut().enumerate() {
            let base = f[self.col_idx[self.row_ptr[r]]];
            *o = self.row(r).map(|(c, w)| w * (f[c] - base)).sum();
        }
    }

    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        self.apply_into(f, &mut out);
        out
    }

    /// Dense row-major copy, for diagnostics.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n * self.n];
        for r in 0..self.n {
            for (c, w) in self.row(r) {
                out[r * self.n + c] = w;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_has_zero_derivative() {
        let d = DiffMatrix::new(7, 0.3).unwrap();
        assert!(d.apply(&[2.5; 7]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn linear_is_exact_including_boundaries() {
        for n in [3, 4, 10, 101] {
            let h = 0.1;
            let f: Vec<f64> = (0..n).map(|k| -0.3 + k as f64 * h).collect();
            for v in DiffMatrix::new(n, h).unwrap().apply(&f) {
                assert!((v - 1.0).abs() < 1e-12, "n={n}: {v}");
            }
        }
    }

    #[test]
    fn quadratic_is_exact_on_unit_interval() {
        let h = 0.1;
        let x: Vec<f64> = (0..11).map(|k| k as f64 * h).collect();
        let f: Vec<f64> = x.iter().map(|x| x * x).collect();
        let d = DiffMatrix::new(11, h).unwrap().apply(&f);
        for (xi, di) in x.iter().zip(d) {
            assert!((di - 2.0 * xi).abs() < 1e-13, "{xi}: {di}");
        }
    }

    #[test]
    fn sparsity_and_errors() {
        let d = DiffMatrix::new(10, 1.0).unwrap();
        assert_eq!(d.nnz(), 3 + 2 * 8 + 3);
        let dense = d.to_dense();
        assert_eq!(&dense[..3], &[-1.5, 2.0, -0.5]);
        assert_eq!(&dense[97..], &[0.5, -2.0, 1.5]);
        assert_eq!(DiffMatrix::new(2, 1.0), Err(TtError::GridTooShort(2)));
        assert_eq!(DiffMatrix::new(5, 0.0), Err(TtError::BadSpacing(0.0)));
        assert!(DiffMatrix::new(5, f64::NAN).is_err());
    }
}
