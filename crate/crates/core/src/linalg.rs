//! Small dense linear-algebra helpers on top of `nalgebra`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Condition number above which Cholesky results are not trusted.
pub const MAX_CONDITION: f64 = 1e12;

pub fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

/// Inverse of a symmetric positive (semi-)definite matrix.
///
/// Uses Cholesky when the factor is well conditioned, otherwise an
/// eigenvalue-clipped pseudo-inverse. The flag reports the fallback.
pub fn spd_inverse(m: &DMatrix<f64>) -> Result<(DMatrix<f64>, bool)> {
    check_finite(m)?;
    let mut sym = m.clone();
    symmetrize(&mut sym);
    if let Some(chol) = sym.clone().cholesky() {
        let diag = chol.l_dirty().diagonal();
        let (lo, hi) = diag
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        if lo > 0.0 && (hi / lo).powi(2) <= MAX_CONDITION {
            let mut inv = chol.inverse();
            symmetrize(&mut inv);
            return Ok((inv, false));
        }
    }
    Ok((pseudo_inverse_sym(&sym), true))
}

/// Moore-Penrose inverse of a symmetric matrix, dropping eigenvalues below
/// `max |λ| / MAX_CONDITION`.
pub fn pseudo_inverse_sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(m.clone());
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let cutoff = top / MAX_CONDITION;
    let mut out = DMatrix::zeros(n, n);
    for (k, &lambda) in eig.eigenvalues.iter().enumerate() {
        if lambda > cutoff && lambda > 0.0 {
            let v = eig.eigenvectors.column(k);
            out += (v * v.transpose()) / lambda;
        }
    }
    symmetrize(&mut out);
    out
}

/// Lower Cholesky factor; fails if `m` is not positive definite.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    sym.cholesky()
        .map(|c| c.unpack())
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))
}

pub fn logdet_spd(m: &DMatrix<f64>) -> Result<f64> {
    let l = cholesky_lower(m)?;
    Ok(2.0 * l.diagonal().iter().map(|d| d.ln()).sum::<f64>())
}

/// Symmetric eigendecomposition with eigenpairs sorted by decreasing value.
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| eig.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(m.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn check_finite(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Numerical("non-finite matrix entry".into()))
    }
}

/// Adds `scale * trace(m) / n` to the diagonal.
pub fn ridge_by_trace(m: &mut DMatrix<f64>, scale: f64) {
    let n = m.nrows();
    if n == 0 {
        return;
    }
    let bump = scale * m.trace() / n as f64;
    for i in 0..n {
        m[(i, i)] += bump;
    }
}
