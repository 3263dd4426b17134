//! i-vector post-processing and scoring back-end: LDA, WCCN, speaker
//! templates and a two-covariance PLDA.

mod lda;
mod plda;
mod wccn;

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use lda::{train_lda, LdaProjection};
pub use plda::{plda_llr, train_plda, PldaModel, PldaOptions, PldaTrainingLog};
pub use wccn::{train_wccn, WccnTransform};

use crate::binio;
use crate::error::{Error, Result};
use crate::tv::IVector;

/// Indices of each class, keyed by label, in label order.
pub(crate) fn group_by_label<S: AsRef<str>>(labels: &[S]) -> BTreeMap<&str, Vec<usize>> {
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        groups.entry(l.as_ref()).or_default().push(i);
    }
    groups
}

pub(crate) fn check_same_dims(data: &[DVector<f64>], what: &'static str) -> Result<usize> {
    let dims = data
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::InvalidInput(format!("{what}: no vectors")))?;
    for v in data {
        if v.len() != dims {
            return Err(Error::DimensionMismatch {
                what,
                expected: dims,
                found: v.len(),
            });
        }
        if !v.iter().all(|x| x.is_finite()) {
            return Err(Error::Numerical(format!("{what}: non-finite input")));
        }
    }
    Ok(dims)
}

/// `y = B' A' (w - mean)`, optionally scaled to unit length.
pub fn postprocess(iv: &IVector, lda: &LdaProjection, wccn: &WccnTransform) -> Result<DVector<f64>> {
    postprocess_vector(&iv.w, lda, wccn, false)
}

pub fn postprocess_vector(
    w: &DVector<f64>,
    lda: &LdaProjection,
    wccn: &WccnTransform,
    length_norm: bool,
) -> Result<DVector<f64>> {
    let projected = lda.project(w)?;
    let mut y = wccn.apply(&projected)?;
    if length_norm {
        let norm = y.norm();
        if norm > 0.0 {
            y /= norm;
        }
    }
    Ok(y)
}

/// A speaker's enrollment model in the post-processed space.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerTemplate {
    pub speaker_id: String,
    pub vector: DVector<f64>,
    pub utterances: usize,
}

/// Template = arithmetic mean of the speaker's enrollment vectors.
pub fn build_template(speaker_id: &str, vectors: &[DVector<f64>]) -> Result<SpeakerTemplate> {
    if vectors.is_empty() {
        return Err(Error::InvalidInput(format!("{speaker_id}: empty enrollment set")));
    }
    let dims = check_same_dims(vectors, "enrollment vectors")?;
    let mut sum = DVector::zeros(dims);
    for v in vectors {
        sum += v;
    }
    Ok(SpeakerTemplate {
        speaker_id: speaker_id.to_string(),
        vector: sum / vectors.len() as f64,
        utterances: vectors.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendOptions {
    /// LDA output dimension.
    pub lda_dim: usize,
    pub plda: PldaOptions,
    /// Scale post-processed vectors to unit length before PLDA.
    pub length_norm: bool,
}

impl Default for BackendOptions {
    fn default() -> Self {
        Self {
            lda_dim: 20,
            plda: PldaOptions::default(),
            length_norm: false,
        }
    }
}

/// Trained LDA + WCCN + PLDA chain.
#[derive(Debug, Clone)]
pub struct BackendModel {
    pub lda: LdaProjection,
    pub wccn: WccnTransform,
    pub plda: PldaModel,
    pub length_norm: bool,
}

#[derive(Debug, Clone, Default)]
pub struct BackendTrainingLog {
    pub plda: PldaTrainingLog,
    pub warnings: Vec<String>,
}

impl BackendModel {
    /// Trains LDA on raw i-vectors, WCCN on their projections and PLDA on
    /// the fully post-processed vectors.
    pub fn train<S: AsRef<str>>(
        ivectors: &[DVector<f64>],
        speakers: &[S],
        options: &BackendOptions,
    ) -> Result<(Self, BackendTrainingLog)> {
        let mut log = BackendTrainingLog::default();
        let classes = group_by_label(speakers).len();
        let mut k = options.lda_dim;
        if classes >= 2 && k > classes - 1 {
            let msg = format!(
                "LDA dim {k} exceeds classes - 1 = {}; using {}",
                classes - 1,
                classes - 1
            );
            log::warn!("{msg}");
            log.warnings.push(msg);
            k = classes - 1;
        }
        let lda = train_lda(ivectors, speakers, k)?;
        let projected: Vec<DVector<f64>> = ivectors.iter().map(|w| lda.project(w)).collect::<Result<_>>()?;
        let wccn = train_wccn(&projected, speakers)?;
        let post: Vec<DVector<f64>> = ivectors
            .iter()
            .map(|w| postprocess_vector(w, &lda, &wccn, options.length_norm))
            .collect::<Result<_>>()?;
        let (plda, plda_log) = train_plda(&post, speakers, &options.plda)?;
        log.plda = plda_log;
        Ok((
            Self {
                lda,
                wccn,
                plda,
                length_norm: options.length_norm,
            },
            log,
        ))
    }

    pub fn ivector_dim(&self) -> usize {
        self.lda.input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.lda.output_dim()
    }

    pub fn transform(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        postprocess_vector(w, &self.lda, &self.wccn, self.length_norm)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = BackendHeader {
            version: binio::FORMAT_VERSION,
            ivector_dim: self.ivector_dim(),
            output_dim: self.output_dim(),
            classes: self.lda.classes(),
            length_norm: self.length_norm,
        };
        let mut payload: Vec<f64> = self.lda.mean().iter().copied().collect();
        push_row_major(&mut payload, self.lda.matrix());
        push_row_major(&mut payload, self.wccn.matrix());
        payload.extend(self.plda.mean().iter());
        push_row_major(&mut payload, self.plda.between());
        push_row_major(&mut payload, self.plda.within());
        binio::write_file(path, BACKEND_MAGIC, &header, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, payload): (BackendHeader, Vec<f64>) = binio::read_file(path, BACKEND_MAGIC)?;
        let (r, k) = (h.ivector_dim, h.output_dim);
        let expected = r + r * k + k * k + k + 2 * k * k;
        if payload.len() != expected {
            return Err(Error::ModelFormat(format!("{}: payload size mismatch", path.display())));
        }
        let mut cur = payload.as_slice();
        let mean = DVector::from_column_slice(binio::take(&mut cur, r)?);
        let a = DMatrix::from_row_slice(r, k, binio::take(&mut cur, r * k)?);
        let b = DMatrix::from_row_slice(k, k, binio::take(&mut cur, k * k)?);
        let mu = DVector::from_column_slice(binio::take(&mut cur, k)?);
        let between = DMatrix::from_row_slice(k, k, binio::take(&mut cur, k * k)?);
        let within = DMatrix::from_row_slice(k, k, binio::take(&mut cur, k * k)?);
        Ok(Self {
            lda: LdaProjection::from_parts(a, mean, h.classes)?,
            wccn: WccnTransform::from_matrix(b)?,
            plda: PldaModel::new(mu, between, within)?,
            length_norm: h.length_norm,
        })
    }
}

fn push_row_major(out: &mut Vec<f64>, m: &DMatrix<f64>) {
    out.extend(m.transpose().iter());
}

const BACKEND_MAGIC: &[u8; 4] = b"IVLB";

#[derive(Debug, Serialize, Deserialize)]
struct BackendHeader {
    version: u32,
    ivector_dim: usize,
    output_dim: usize,
    classes: usize,
    length_norm: bool,
}
