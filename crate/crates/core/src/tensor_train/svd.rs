use faer::Mat;

use super::TtError;

/// Thin SVD `A = U · diag(σ) · Vᵀ` with σ in descending order.
pub(super) struct ThinSvd {
    rows: usize,
    cols: usize,
    /// `rows × k`, row-major.
    u: Vec<f64>,
    pub sigma: Vec<f64>,
    /// `k × cols`, row-major.
    vt: Vec<f64>,
}

impl ThinSvd {
    fn k(&self) -> usize {
        self.sigma.len()
    }

    /// First `r` columns of U as a `rows × r` row-major array.
    pub fn left_columns(&self, r: usize) -> Vec<f64> {
        let k = self.k();
        let mut out = Vec::with_capacity(self.rows * r);
        for i in 0..self.rows {
            out.extend_from_slice(&self.u[i * k..i * k + r]);
        }
        out
    }

    /// `diag(σ[..r]) · Vᵀ[..r, :]` as an `r × cols` row-major array.
    pub fn scaled_right_rows(&self, r: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(r * self.cols);
        for (s, row) in self.sigma[..r].iter().zip(self.vt.chunks_exact(self.cols)) {
            out.extend(row.iter().map(|v| s * v));
        }
        out
    }
}

/// SVD of a row-major `rows × cols` matrix.
///
/// Singular triplets are sorted by descending σ; ties keep the backend's
/// original column order.
pub(super) fn thin_svd(values: &[f64], rows: usize, cols: usize) -> Result<ThinSvd, TtError> {
    debug_assert_eq!(values.len(), rows * cols);
    let a = Mat::<f64>::from_fn(rows, cols, |i, j| values[i * cols + j]);
    let svd = a.thin_svd().map_err(|_| TtError::SvdFailed)?;
    let (u, s, v) = (svd.U(), svd.S(), svd.V());
    let k = s.dim();

    let mut order: Vec<usize> = (0..k).collect();
    // Stable sort: equal σ keep their original relative order.
    order.sort_by(|&p, &q| s[q].partial_cmp(&s[p]).unwrap_or(std::cmp::Ordering::Equal));

    let sigma: Vec<f64> = order.iter().map(|&p| s[p]).collect();
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(TtError::SvdFailed);
    }
    let mut u_rm = Vec::with_capacity(rows * k);
    for i in 0..rows {
        u_rm.extend(order.iter().map(|&p| u[(i, p)]));
    }
    let mut vt_rm = Vec::with_capacity(k * cols);
    for &p in &order {
        vt_rm.extend((0..cols).map(|j| v[(j, p)]));
    }
    Ok(ThinSvd {
        rows,
        cols,
        u: u_rm,
        sigma,
        vt: vt_rm,
    })
}
