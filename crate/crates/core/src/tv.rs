//! Total-variability model: EM training of T and i-vector extraction.
//!
//! The supervector of an utterance is modelled as `m + T w` with
//! `w ~ N(0, I)`. Given Baum-Welch statistics the posterior of `w` is
//! Gaussian with precision `L = I + sum_c N_c T_c' S_c^-1 T_c` and mean
//! `L^-1 sum_c T_c' S_c^-1 (F_c - N_c m_c)`; the mean is the i-vector.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::gmm::{BaumWelchStats, DiagonalGmm};
use crate::linalg;
use crate::synth::CompositeLabel;

#[derive(Debug, Clone)]
pub struct TotalVariabilityModel {
    /// (C*D) x R, component blocks stacked row-wise.
    t: DMatrix<f64>,
    components: usize,
    dims: usize,
    ubm_means: Vec<f64>,
    ubm_variances: Vec<f64>,
    ubm_hash: String,
    /// T_c' S_c^-1, R x D per component.
    projections: Vec<DMatrix<f64>>,
    /// T_c' S_c^-1 T_c, R x R per component.
    gram: Vec<DMatrix<f64>>,
}

/// An utterance embedding with its posterior precision.
#[derive(Debug, Clone, PartialEq)]
pub struct IVector {
    pub w: DVector<f64>,
    pub precision: Option<DMatrix<f64>>,
    pub utterance_id: String,
    pub speaker_id: String,
    pub label: Option<CompositeLabel>,
}

impl IVector {
    pub fn anonymous(w: DVector<f64>) -> Self {
        Self {
            w,
            precision: None,
            utterance_id: String::new(),
            speaker_id: String::new(),
            label: None,
        }
    }

    pub fn with_ids(mut self, utterance_id: &str, speaker_id: &str, label: Option<CompositeLabel>) -> Self {
        self.utterance_id = utterance_id.to_string();
        self.speaker_id = speaker_id.to_string();
        self.label = label;
        self
    }

    pub fn dims(&self) -> usize {
        self.w.len()
    }
}

impl TotalVariabilityModel {
    /// Binds a `(C*D) x R` matrix to a UBM.
    pub fn new(t: DMatrix<f64>, ubm: &DiagonalGmm) -> Result<Self> {
        let (c, d) = (ubm.components(), ubm.dims());
        if t.nrows() != c * d {
            return Err(Error::DimensionMismatch {
                what: "T rows vs UBM supervector",
                expected: c * d,
                found: t.nrows(),
            });
        }
        if t.ncols() == 0 || t.ncols() > c * d {
            return Err(Error::InvalidInput(format!(
                "i-vector rank {} must be in 1..={}",
                t.ncols(),
                c * d
            )));
        }
        linalg::check_finite(&t)?;
        let mut model = Self {
            t,
            components: c,
            dims: d,
            ubm_means: ubm.means().to_vec(),
            ubm_variances: ubm.variances().to_vec(),
            ubm_hash: ubm.hash(),
            projections: Vec::new(),
            gram: Vec::new(),
        };
        model.refresh();
        Ok(model)
    }

    fn refresh(&mut self) {
        let (d, r) = (self.dims, self.rank());
        self.projections = (0..self.components)
            .map(|c| {
                let block = self.t.rows(c * d, d);
                let mut p = block.transpose();
                for j in 0..d {
                    let inv = 1.0 / self.ubm_variances[c * d + j];
                    p.column_mut(j).scale_mut(inv);
                }
                p
            })
            .collect();
        self.gram = (0..self.components)
            .map(|c| {
                let mut g = &self.projections[c] * self.t.rows(c * d, d);
                linalg::symmetrize(&mut g);
                debug_assert_eq!(g.nrows(), r);
                g
            })
            .collect();
    }

    pub fn rank(&self) -> usize {
        self.t.ncols()
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    pub fn ubm_hash(&self) -> &str {
        &self.ubm_hash
    }

    fn check_stats(&self, stats: &BaumWelchStats) -> Result<()> {
        if stats.components() != self.components || stats.dims != self.dims {
            return Err(Error::DimensionMismatch {
                what: "stats vs T model",
                expected: self.components * self.dims,
                found: stats.f.len(),
            });
        }
        if !stats.is_finite() {
            return Err(Error::Numerical("non-finite Baum-Welch statistics".into()));
        }
        Ok(())
    }

    /// F_c - N_c m_c, stacked.
    pub fn centred_first_order(&self, stats: &BaumWelchStats) -> DVector<f64> {
        let d = self.dims;
        DVector::from_iterator(
            self.components * d,
            (0..self.components * d).map(|i| stats.f[i] - stats.n[i / d] * self.ubm_means[i]),
        )
    }

    /// Posterior precision L and linear term b of the latent factor.
    fn posterior_terms(&self, stats: &BaumWelchStats, centred: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>) {
        let r = self.rank();
        let d = self.dims;
        let mut precision = DMatrix::identity(r, r);
        let mut linear = DVector::zeros(r);
        for c in 0..self.components {
            let n = stats.n[c];
            if n != 0.0 {
                precision += &self.gram[c] * n;
            }
            linear.gemv(1.0, &self.projections[c], &centred.rows(c * d, d), 1.0);
        }
        (precision, linear)
    }

    /// Posterior mean (the i-vector) and precision.
    pub fn extract(&self, stats: &BaumWelchStats) -> Result<IVector> {
        self.check_stats(stats)?;
        let centred = self.centred_first_order(stats);
        let (precision, linear) = self.posterior_terms(stats, &centred);
        let w = solve_spd(&precision, &linear)?;
        Ok(IVector {
            w,
            precision: Some(precision),
            utterance_id: String::new(),
            speaker_id: String::new(),
            label: None,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = TvHeader {
            version: binio::FORMAT_VERSION,
            components: self.components,
            dims: self.dims,
            rank: self.rank(),
            ubm_hash: self.ubm_hash.clone(),
        };
        // row-major
        let payload: Vec<f64> = self.t.transpose().as_slice().to_vec();
        binio::write_file(path, TV_MAGIC, &header, &payload)
    }

    pub fn load(path: &Path, ubm: &DiagonalGmm) -> Result<Self> {
        let (h, payload): (TvHeader, Vec<f64>) = binio::read_file(path, TV_MAGIC)?;
        if h.ubm_hash != ubm.hash() {
            return Err(Error::ModelFormat(format!(
                "{}: T matrix was trained against a different UBM",
                path.display()
            )));
        }
        if payload.len() != h.components * h.dims * h.rank {
            return Err(Error::ModelFormat(format!("{}: payload size mismatch", path.display())));
        }
        let t = DMatrix::from_row_slice(h.components * h.dims, h.rank, &payload);
        Self::new(t, ubm)
    }
}

const TV_MAGIC: &[u8; 4] = b"IVLT";

#[derive(Debug, Serialize, Deserialize)]
struct TvHeader {
    version: u32,
    components: usize,
    dims: usize,
    rank: usize,
    ubm_hash: String,
}

/// Solves `a x = b` for symmetric positive-definite `a`.
fn solve_spd(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    match a.clone().cholesky() {
        Some(chol) => Ok(chol.solve(b)),
        None => {
            let (inv, _) = linalg::spd_inverse(a)?;
            Ok(inv * b)
        }
    }
}

/// i-vector of one utterance's statistics.
pub fn extract_ivector(model: &TotalVariabilityModel, stats: &BaumWelchStats) -> Result<IVector> {
    model.extract(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TvOptions {
    pub rank: usize,
    pub iterations: usize,
    /// Initial entries are N(0, 1) scaled by this times sqrt(mean UBM variance).
    pub init_scale: f64,
}

impl Default for TvOptions {
    fn default() -> Self {
        Self {
            rank: 50,
            iterations: 5,
            init_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TvTrainingLog {
    /// EM auxiliary objective (T-dependent part of the data log-likelihood)
    /// before each update and after the last.
    pub objective: Vec<f64>,
    /// Components whose M-step fell back to a pseudo-inverse, per iteration.
    pub ill_conditioned: Vec<(usize, usize)>,
}

struct Posterior {
    w: DVector<f64>,
    /// E[w w'] = L^-1 + w w'
    second_moment: DMatrix<f64>,
    objective: f64,
}

fn posterior_for_training(
    model: &TotalVariabilityModel,
    stats: &BaumWelchStats,
    centred: &DVector<f64>,
) -> Result<Posterior> {
    let (precision, linear) = model.posterior_terms(stats, centred);
    let chol = precision
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Numerical("i-vector posterior precision not positive definite".into()))?;
    let logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let cov = chol.inverse();
    let w = &cov * &linear;
    let objective = 0.5 * linear.dot(&w) - 0.5 * logdet;
    let second_moment = cov + &w * w.transpose();
    Ok(Posterior {
        w,
        second_moment,
        objective,
    })
}

/// One E-step over all utterances; returns the objective of the current
/// model and, if requested, the M-step accumulators (A_c, C_c).
fn e_step(
    model: &TotalVariabilityModel,
    stats: &[BaumWelchStats],
    centred: &[DVector<f64>],
    accumulate: bool,
) -> Result<(f64, Option<(Vec<DMatrix<f64>>, DMatrix<f64>)>)> {
    let posteriors: Vec<Posterior> = stats
        .par_iter()
        .zip(centred.par_iter())
        .map(|(s, f)| posterior_for_training(model, s, f))
        .collect::<Result<_>>()?;
    let objective = posteriors.iter().map(|p| p.objective).sum();
    if !accumulate {
        return Ok((objective, None));
    }
    let (u, r) = (stats.len(), model.rank());
    let (c, d) = (model.components, model.dims);
    // A_c = sum_u N_c(u) E[w w']_u as one product: N' (U x C)' * E (U x R^2)
    let counts = DMatrix::from_fn(u, c, |i, k| stats[i].n[k]);
    let moments = DMatrix::from_fn(u, r * r, |i, j| posteriors[i].second_moment[(j / r, j % r)]);
    let a_flat = counts.transpose() * moments;
    let a: Vec<DMatrix<f64>> = (0..c)
        .map(|k| {
            let mut m = DMatrix::from_fn(r, r, |i, j| a_flat[(k, i * r + j)]);
            linalg::symmetrize(&mut m);
            m
        })
        .collect();
    // C = sum_u F~(u) w_u' as (C*D x U) * (U x R)
    let f_all = DMatrix::from_fn(c * d, u, |i, j| centred[j][i]);
    let w_all = DMatrix::from_fn(u, r, |i, j| posteriors[i].w[j]);
    let cross = f_all * w_all;
    Ok((objective, Some((a, cross))))
}

/// EM training of the total-variability matrix.
pub fn train_t_matrix(
    ubm: &DiagonalGmm,
    stats: &[BaumWelchStats],
    options: &TvOptions,
    seed: u64,
) -> Result<(TotalVariabilityModel, TvTrainingLog)> {
    let (c, d, r) = (ubm.components(), ubm.dims(), options.rank);
    if r == 0 || r > c * d {
        return Err(Error::Config(format!("i-vector rank {r} must be in 1..={}", c * d)));
    }
    if stats.len() < r {
        return Err(Error::InvalidInput(format!(
            "T training needs at least rank = {r} utterances, got {}",
            stats.len()
        )));
    }
    for s in stats {
        if s.components() != c || s.dims != d {
            return Err(Error::DimensionMismatch {
                what: "training stats vs UBM",
                expected: c * d,
                found: s.f.len(),
            });
        }
        if !s.is_finite() {
            return Err(Error::Numerical("non-finite Baum-Welch statistics".into()));
        }
    }
    let mean_var = ubm.variances().iter().sum::<f64>() / (c * d) as f64;
    let scale = options.init_scale * mean_var.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t0 = DMatrix::from_fn(c * d, r, |_, _| {
        scale * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng)
    });
    let mut model = TotalVariabilityModel::new(t0, ubm)?;
    let centred: Vec<DVector<f64>> = stats.iter().map(|s| model.centred_first_order(s)).collect();

    let mut log = TvTrainingLog::default();
    for iter in 0..options.iterations {
        let (objective, acc) = e_step(&model, stats, &centred, true)?;
        log.objective.push(objective);
        let (a, cross) = acc.expect("accumulators requested");
        let mut t = DMatrix::zeros(c * d, r);
        for k in 0..c {
            let rhs = cross.rows(k * d, d).transpose();
            let block = match a[k].clone().cholesky() {
                Some(chol) if well_conditioned(&chol) => chol.solve(&rhs),
                _ => {
                    log::warn!("T iteration {iter}: A_{k} is singular, using least squares");
                    log.ill_conditioned.push((iter, k));
                    linalg::pseudo_inverse_sym(&a[k]) * rhs
                }
            };
            t.rows_mut(k * d, d).copy_from(&block.transpose());
        }
        model.t = t;
        model.refresh();
    }
    if options.iterations > 0 {
        let (objective, _) = e_step(&model, stats, &centred, false)?;
        log.objective.push(objective);
    }
    Ok((model, log))
}

fn well_conditioned(chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    lo > 0.0 && (hi / lo).powi(2) <= linalg::MAX_CONDITION
}
