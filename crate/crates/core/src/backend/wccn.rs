use nalgebra::{DMatrix, DVector};

use super::lda::SCATTER_RIDGE;
use super::{check_same_dims, group_by_label};
use crate::error::{Error, Result};
use crate::linalg;

/// Lower-triangular `B` with `B B' = W^-1`; vectors are mapped to `B' x`.
#[derive(Debug, Clone, PartialEq)]
pub struct WccnTransform {
    b: DMatrix<f64>,
}

impl WccnTransform {
    /// Exact factor for a given within-class covariance (no ridge).
    pub fn from_within_covariance(w: &DMatrix<f64>) -> Result<Self> {
        let (inv, fallback) = linalg::spd_inverse(w)?;
        if fallback {
            return Err(Error::Numerical("within-class covariance is singular".into()));
        }
        let b = linalg::cholesky_lower(&inv)?;
        Ok(Self { b })
    }

    pub fn from_matrix(b: DMatrix<f64>) -> Result<Self> {
        if b.nrows() != b.ncols() {
            return Err(Error::InvalidInput("WCCN matrix must be square".into()));
        }
        linalg::check_finite(&b)?;
        Ok(Self { b })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn dims(&self) -> usize {
        self.b.nrows()
    }

    pub fn apply(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.dims() {
            return Err(Error::DimensionMismatch {
                what: "vector vs WCCN",
                expected: self.dims(),
                found: x.len(),
            });
        }
        Ok(self.b.tr_mul(x))
    }
}

/// Average per-class covariance over classes with at least two samples,
/// ridge-regularised like the LDA scatter, then factorised.
pub fn train_wccn<S: AsRef<str>>(data: &[DVector<f64>], labels: &[S]) -> Result<WccnTransform> {
    if data.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "WCCN labels",
            expected: data.len(),
            found: labels.len(),
        });
    }
    let k = check_same_dims(data, "WCCN input")?;
    let mut w = DMatrix::zeros(k, k);
    let mut used = 0usize;
    for idx in group_by_label(labels).values().filter(|g| g.len() >= 2) {
        let mean = idx.iter().fold(DVector::zeros(k), |a, &i| a + &data[i]) / idx.len() as f64;
        let mut cov = DMatrix::zeros(k, k);
        for &i in idx {
            let d = &data[i] - &mean;
            cov.ger(1.0, &d, &d, 1.0);
        }
        w += cov / idx.len() as f64;
        used += 1;
    }
    if used == 0 {
        return Err(Error::InvalidInput("WCCN needs a class with at least 2 samples".into()));
    }
    w /= used as f64;
    linalg::ridge_by_trace(&mut w, SCATTER_RIDGE);
    WccnTransform::from_within_covariance(&w)
        .map_err(|_| Error::Numerical("within-class covariance singular after regularisation".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_covariance_gives_identity() {
        let t = WccnTransform::from_within_covariance(&DMatrix::identity(3, 3)).unwrap();
        assert!((t.matrix() - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);
    }

    #[test]
    fn diagonal_closed_form() {
        let w = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0]));
        let t = WccnTransform::from_within_covariance(&w).unwrap();
        let expect = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0]));
        assert!((t.matrix() - expect).abs().max() < 1e-12);
    }

    #[test]
    fn random_spd_whitens() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let g = DMatrix::from_fn(5, 5, |_, _| rng.gen_range(-1.0..1.0));
            let w = &g * g.transpose() + DMatrix::identity(5, 5) * 0.1;
            let t = WccnTransform::from_within_covariance(&w).unwrap();
            let b = t.matrix();
            for i in 0..5 {
                for j in (i + 1)..5 {
                    assert_eq!(b[(i, j)], 0.0);
                }
            }
            let prod = b * b.transpose() * &w;
            assert!((prod - DMatrix::<f64>::identity(5, 5)).abs().max() < 1e-8);
        }
    }

    #[test]
    fn trained_transform_whitens_within_class_scatter() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for s in 0..20 {
            let c = DVector::from_fn(3, |_, _| rng.gen_range(-5.0..5.0));
            for _ in 0..30 {
                let e = DVector::from_vec(vec![
                    rng.gen_range(-3.0..3.0),
                    rng.gen_range(-0.5..0.5),
                    rng.gen_range(-1.0..1.0),
                ]);
                data.push(&c + e);
                labels.push(s.to_string());
            }
        }
        let t = train_wccn(&data, &labels).unwrap();
        let mapped: Vec<_> = data.iter().map(|x| t.apply(x).unwrap()).collect();
        let again = train_wccn(&mapped, &labels).unwrap();
        // within-class covariance of the mapped data is ~I, so B ~ I
        assert!((again.matrix() - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-4);
    }

    #[test]
    fn singletons_only_is_an_error() {
        let data = vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![2.0])];
        assert!(train_wccn(&data, &["a", "b"]).is_err());
    }
}
