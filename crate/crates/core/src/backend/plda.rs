use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{check_same_dims, group_by_label};
use crate::error::{Error, Result};
use crate::linalg;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PldaOptions {
    pub iterations: usize,
}

impl Default for PldaOptions {
    fn default() -> Self {
        Self { iterations: 20 }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PldaTrainingLog {
    /// Log-likelihood of the training data before each update and after
    /// the last one.
    pub objective: Vec<f64>,
}

/// Two-covariance model: speaker mean `y ~ N(mu, B)`, `x | y ~ N(y, W)`.
#[derive(Debug, Clone)]
pub struct PldaModel {
    mu: DVector<f64>,
    between: DMatrix<f64>,
    within: DMatrix<f64>,
    scorer: Scorer,
}

/// `llr = e'Qe/2 + t'Qt/2 + e'Pt + c` on mean-centred vectors.
#[derive(Debug, Clone)]
struct Scorer {
    q: DMatrix<f64>,
    p: DMatrix<f64>,
    c: f64,
}

impl PldaModel {
    pub fn new(mu: DVector<f64>, mut between: DMatrix<f64>, mut within: DMatrix<f64>) -> Result<Self> {
        let k = mu.len();
        for (m, what) in [
            (&between, "PLDA between covariance"),
            (&within, "PLDA within covariance"),
        ] {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: k,
                    found: m.nrows(),
                });
            }
            linalg::check_finite(m)?;
        }
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(Error::Numerical("non-finite PLDA mean".into()));
        }
        linalg::symmetrize(&mut between);
        linalg::symmetrize(&mut within);
        linalg::cholesky_lower(&within)
            .map_err(|_| Error::Numerical("PLDA within covariance is not positive definite".into()))?;
        let (eig, _) = linalg::sym_eigen_desc(&between);
        let tol = 1e-10 * within.trace().max(between.trace());
        if eig.iter().any(|&l| l < -tol) {
            return Err(Error::Numerical(
                "PLDA between covariance is not positive semidefinite".into(),
            ));
        }
        let scorer = Scorer::new(&between, &within)?;
        Ok(Self {
            mu,
            between,
            within,
            scorer,
        })
    }

    pub fn dims(&self) -> usize {
        self.mu.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn between(&self) -> &DMatrix<f64> {
        &self.between
    }

    pub fn within(&self) -> &DMatrix<f64> {
        &self.within
    }

    /// Same-speaker vs different-speaker log-likelihood ratio.
    pub fn llr(&self, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
        for v in [enroll, test] {
            if v.len() != self.dims() {
                return Err(Error::DimensionMismatch {
                    what: "vector vs PLDA",
                    expected: self.dims(),
                    found: v.len(),
                });
            }
            if !v.iter().all(|x| x.is_finite()) {
                return Err(Error::Numerical("non-finite PLDA input".into()));
            }
        }
        let e = enroll - &self.mu;
        let t = test - &self.mu;
        let s = &self.scorer;
        Ok(0.5 * e.dot(&(&s.q * &e)) + 0.5 * t.dot(&(&s.q * &t)) + e.dot(&(&s.p * &t)) + s.c)
    }
}

fn spd_inverse_exact(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut sym = m.clone();
    linalg::symmetrize(&mut sym);
    let mut inv = sym
        .cholesky()
        .ok_or_else(|| Error::Numerical("matrix is not positive definite".into()))?
        .inverse();
    linalg::symmetrize(&mut inv);
    Ok(inv)
}

impl Scorer {
    fn new(b: &DMatrix<f64>, w: &DMatrix<f64>) -> Result<Self> {
        let total = b + w;
        let total_inv = spd_inverse_exact(&total)?;
        let schur = &total - b * &total_inv * b;
        let x = spd_inverse_exact(&schur)?;
        let q = &total_inv - &x;
        let mut p = &total_inv * b * &x;
        linalg::symmetrize(&mut p);
        let c = 0.5 * linalg::logdet_spd(&total)? - 0.5 * linalg::logdet_spd(&schur)?;
        Ok(Self { q, p, c })
    }
}

pub fn plda_llr(model: &PldaModel, enroll: &DVector<f64>, test: &DVector<f64>) -> Result<f64> {
    model.llr(enroll, test)
}

/// Per-speaker sufficient statistics.
struct SpeakerStats {
    n: f64,
    mean: DVector<f64>,
    scatter: DMatrix<f64>,
}

fn speaker_stats<S: AsRef<str>>(data: &[DVector<f64>], labels: &[S], k: usize) -> Vec<SpeakerStats> {
    group_by_label(labels)
        .values()
        .map(|idx| {
            let n = idx.len() as f64;
            let mean = idx.iter().fold(DVector::zeros(k), |a, &i| a + &data[i]) / n;
            let mut scatter = DMatrix::zeros(k, k);
            for &i in idx {
                let d = &data[i] - &mean;
                scatter.ger(1.0, &d, &d, 1.0);
            }
            SpeakerStats { n, mean, scatter }
        })
        .collect()
}

/// Posterior of each speaker mean and the data log-likelihood under the
/// current parameters.
fn e_step(
    stats: &[SpeakerStats],
    mu: &DVector<f64>,
    b: &DMatrix<f64>,
    w: &DMatrix<f64>,
) -> Result<(Vec<(DVector<f64>, DMatrix<f64>)>, f64)> {
    let k = mu.len();
    let w_inv = spd_inverse_exact(w)?;
    let logdet_w = linalg::logdet_spd(w)?;
    let mut objective = 0.0;
    let mut posts = Vec::with_capacity(stats.len());
    for s in stats {
        // x_bar ~ N(mu, B + W/n); posterior via the gain B (B + W/n)^-1,
        // which stays valid for singular B
        let g = b + w / s.n;
        let g_chol = linalg::cholesky_lower(&g)?;
        let g_inv = spd_inverse_exact(&g)?;
        let gain = b * &g_inv;
        let d = &s.mean - mu;
        let y = mu + &gain * &d;
        let mut cov = b - &gain * b;
        linalg::symmetrize(&mut cov);
        let logdet_g = 2.0 * g_chol.diagonal().iter().map(|v| v.ln()).sum::<f64>();
        let mahal = d.dot(&(&g_inv * &d));
        objective += -0.5 * (k as f64 * LOG_2PI + logdet_g + mahal);
        // residual spread about the speaker mean
        let m = s.n - 1.0;
        objective +=
            -0.5 * (m * k as f64 * LOG_2PI + m * logdet_w + (&w_inv * &s.scatter).trace()) - 0.5 * k as f64 * s.n.ln();
        posts.push((y, cov));
    }
    Ok((posts, objective))
}

/// EM for the two-covariance model, started from moment estimates.
pub fn train_plda<S: AsRef<str>>(
    data: &[DVector<f64>],
    labels: &[S],
    options: &PldaOptions,
) -> Result<(PldaModel, PldaTrainingLog)> {
    if data.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            what: "PLDA labels",
            expected: data.len(),
            found: labels.len(),
        });
    }
    let k = check_same_dims(data, "PLDA input")?;
    let stats = speaker_stats(data, labels, k);
    let repeated = stats.iter().filter(|s| s.n >= 2.0).count();
    if repeated < 2 {
        return Err(Error::InvalidInput(
            "PLDA needs at least 2 speakers with at least 2 utterances each".into(),
        ));
    }
    let total = data.len() as f64;
    let speakers = stats.len() as f64;

    let mut mu = data.iter().fold(DVector::zeros(k), |a, v| a + v) / total;
    let mut b = DMatrix::zeros(k, k);
    let mut w = DMatrix::zeros(k, k);
    for s in &stats {
        let d = &s.mean - &mu;
        b.ger(1.0 / speakers, &d, &d, 1.0);
        w += &s.scatter / total;
    }
    linalg::cholesky_lower(&w)
        .map_err(|_| Error::InvalidInput("degenerate PLDA data: within-speaker scatter is singular".into()))?;

    let mut log = PldaTrainingLog::default();
    for iter in 0..=options.iterations {
        let (posts, objective) = e_step(&stats, &mu, &b, &w)?;
        if !objective.is_finite() {
            return Err(Error::Numerical(format!(
                "PLDA objective non-finite at iteration {iter}"
            )));
        }
        log::debug!("plda iter {iter}: objective {objective:.6}");
        log.objective.push(objective);
        if iter == options.iterations {
            break;
        }
        let new_mu = posts.iter().fold(DVector::zeros(k), |a, (y, _)| a + y) / speakers;
        let mut new_b = DMatrix::zeros(k, k);
        let mut new_w = DMatrix::zeros(k, k);
        for (s, (y, cov)) in stats.iter().zip(&posts) {
            let d = y - &new_mu;
            new_b += cov;
            new_b.ger(1.0, &d, &d, 1.0);
            let r = &s.mean - y;
            new_w += &s.scatter + cov * s.n;
            new_w.ger(s.n, &r, &r, 1.0);
        }
        new_b /= speakers;
        new_w /= total;
        linalg::symmetrize(&mut new_b);
        linalg::symmetrize(&mut new_w);
        mu = new_mu;
        b = new_b;
        w = new_w;
    }
    Ok((PldaModel::new(mu, b, w)?, log))
}
