use nalgebra::{DMatrix, DVector};

use super::{check_same_dims, group_by_label};
use crate::error::{Error, Result};
use crate::linalg;

/// Within-class scatter ridge, relative to its mean eigenvalue.
pub(crate) const SCATTER_RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct LdaProjection {
    /// R x K, unit-length columns ordered by decreasing eigenvalue.
    a: DMatrix<f64>,
    /// Training mean, subtracted before projecting.
    mean: DVector<f64>,
    classes: usize,
}

impl LdaProjection {
    pub fn from_parts(a: DMatrix<f64>, mean: DVector<f64>, classes: usize) -> Result<Self> {
        if a.nrows() != mean.len() {
            return Err(Error::DimensionMismatch {
                what: "LDA mean",
                expected: a.nrows(),
                found: mean.len(),
            });
        }
        linalg::check_finite(&a)?;
        Ok(Self { a, mean, classes })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn input_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.a.ncols()
    }

    /// `A' (w - mean)`.
    pub fn project(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        if w.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                what: "i-vector vs LDA",
                expected: self.input_dim(),
                found: w.len(),
            });
        }
        Ok(self.a.tr_mul(&(w - &self.mean)))
    }
}

/// Fisher LDA: top-`k` solutions of `S_b v = lambda S_w v`.
pub fn train_lda<S: AsRef<str>>(data: &[DVector<f64>], labels: &[S], k: usize) -> Result<LdaProjection> {
    if data.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "LDA labels",
            expected: data.len(),
            found: labels.len(),
        });
    }
    let r = check_same_dims(data, "LDA input")?;
    let groups = group_by_label(labels);
    let classes = groups.len();
    if classes < 2 {
        return Err(Error::InvalidInput(format!(
            "LDA needs at least 2 classes, got {classes}"
        )));
    }
    if groups.values().all(|g| g.len() < 2) {
        return Err(Error::InvalidInput("LDA needs a class with at least 2 samples".into()));
    }
    if k == 0 || k > classes - 1 || k > r {
        return Err(Error::Config(format!(
            "LDA dimension {k} must be in 1..=min(R = {r}, classes - 1 = {})",
            classes - 1
        )));
    }
    let n = data.len() as f64;
    let mean = data.iter().fold(DVector::zeros(r), |acc, v| acc + v) / n;
    let mut sw = DMatrix::zeros(r, r);
    let mut sb = DMatrix::zeros(r, r);
    for idx in groups.values() {
        let class_mean = idx.iter().fold(DVector::zeros(r), |acc, &i| acc + &data[i]) / idx.len() as f64;
        for &i in idx {
            let d = &data[i] - &class_mean;
            sw.ger(1.0, &d, &d, 1.0);
        }
        let d = &class_mean - &mean;
        sb.ger(idx.len() as f64, &d, &d, 1.0);
    }
    sw /= n;
    sb /= n;
    if sw.trace() <= 0.0 {
        return Err(Error::InvalidInput(
            "within-class scatter is zero (all samples identical within classes)".into(),
        ));
    }
    if sb.trace() <= 0.0 {
        return Err(Error::InvalidInput("between-class scatter is zero".into()));
    }
    linalg::ridge_by_trace(&mut sw, SCATTER_RIDGE);

    // Whitened problem: L^-1 S_b L^-T u = lambda u, v = L^-T u
    let l = linalg::cholesky_lower(&sw)?;
    let l_inv = l
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("singular within-class scatter".into()))?;
    let m = &l_inv * &sb * l_inv.transpose();
    let (_, u) = linalg::sym_eigen_desc(&m);
    let mut a = l_inv.transpose() * u.columns(0, k);
    for mut col in a.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    LdaProjection::from_parts(a, mean, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn two_classes(seed: u64) -> (Vec<DVector<f64>>, Vec<String>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.3).unwrap();
        let wide = Normal::new(0.0, 2.0).unwrap();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for (label, centre) in [("a", -1.0), ("b", 1.0)] {
            for _ in 0..200 {
                data.push(DVector::from_vec(vec![
                    centre + noise.sample(&mut rng),
                    wide.sample(&mut rng),
                ]));
                labels.push(label.to_string());
            }
        }
        (data, labels)
    }

    #[test]
    fn direction_matches_fisher_closed_form() {
        let (data, labels) = two_classes(1);
        let lda = train_lda(&data, &labels, 1).unwrap();
        assert_eq!(lda.output_dim(), 1);
        // S_w^-1 (mu_a - mu_b) from the same samples
        let mean_of = |l: &str| {
            let idx: Vec<_> = (0..data.len()).filter(|&i| labels[i] == l).collect();
            idx.iter().fold(DVector::zeros(2), |a, &i| a + &data[i]) / idx.len() as f64
        };
        let (ma, mb) = (mean_of("a"), mean_of("b"));
        let mut sw = DMatrix::zeros(2, 2);
        for (x, l) in data.iter().zip(&labels) {
            let d = x - if l == "a" { &ma } else { &mb };
            sw += &d * d.transpose();
        }
        let fisher = sw.try_inverse().unwrap() * (&ma - &mb);
        let v = lda.matrix().column(0);
        let cos = (v.dot(&fisher) / (v.norm() * fisher.norm())).abs();
        let angle = cos.min(1.0).acos().to_degrees();
        assert!(angle < 2.0, "angle {angle}");
        // and close to axis 1
        assert!(v[0].abs().min(1.0).acos().to_degrees() < 2.0);
        assert!((v.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn projected_class_means_keep_their_order() {
        let (data, labels) = two_classes(2);
        let lda = train_lda(&data, &labels, 1).unwrap();
        let proj = |l: &str| {
            let v: Vec<f64> = data
                .iter()
                .zip(&labels)
                .filter(|(_, x)| x.as_str() == l)
                .map(|(d, _)| lda.project(d).unwrap()[0])
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        let fisher_sign = lda.matrix()[(0, 0)].signum();
        // class b sits at +1 on axis 1: its projection is larger iff the
        // direction points along +axis 1
        assert_eq!((proj("b") - proj("a")).signum(), fisher_sign);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (data, labels) = two_classes(3);
        assert!(train_lda(&data, &labels, 2).is_err());
        let same = vec![DVector::from_vec(vec![1.0, 1.0]); 4];
        let lab = ["a", "a", "b", "b"];
        assert!(train_lda(&same, &lab, 1).is_err());
        let one = ["a", "a", "a", "a"];
        assert!(train_lda(&data[..4], &one, 1).is_err());
    }
}
