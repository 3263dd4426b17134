//! Trial scoring, EER/DET and score-matrix analysis.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::backend::{PldaModel, SpeakerTemplate};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrialScore {
    pub enroll_speaker: String,
    pub test_utterance: String,
    pub test_speaker: String,
    pub score: f64,
    pub is_target: bool,
}

pub const TRIAL_CSV_HEADER: &str = "enroll_spk,test_utt,test_spk,score,is_target";

pub fn trials_to_csv(trials: &[TrialScore]) -> String {
    let mut out = String::from(TRIAL_CSV_HEADER);
    out.push('\n');
    for t in trials {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            t.enroll_speaker, t.test_utterance, t.test_speaker, t.score, t.is_target as u8
        );
    }
    out
}

/// FAR/FRR at each distinct pooled score and at +inf, thresholds ascending.
/// A trial is accepted when `score >= threshold`.
fn operating_points(targets: &[f64], nontargets: &[f64]) -> Result<Vec<(f64, f64, f64)>> {
    if targets.is_empty() || nontargets.is_empty() {
        return Err(Error::InvalidInput(
            "EER needs both target and non-target scores".into(),
        ));
    }
    if targets.iter().chain(nontargets).any(|s| !s.is_finite()) {
        return Err(Error::Numerical("non-finite trial score".into()));
    }
    let mut tar = targets.to_vec();
    let mut non = nontargets.to_vec();
    tar.sort_by(f64::total_cmp);
    non.sort_by(f64::total_cmp);
    let mut thresholds: Vec<f64> = tar.iter().chain(&non).copied().collect();
    thresholds.sort_by(f64::total_cmp);
    thresholds.dedup();
    thresholds.push(f64::INFINITY);

    let (nt, nn) = (tar.len() as f64, non.len() as f64);
    let (mut rejected, mut below) = (0usize, 0usize);
    let mut points = Vec::with_capacity(thresholds.len());
    for &t in &thresholds {
        while rejected < tar.len() && tar[rejected] < t {
            rejected += 1;
        }
        while below < non.len() && non[below] < t {
            below += 1;
        }
        let far = (non.len() - below) as f64 / nn;
        let frr = rejected as f64 / nt;
        points.push((t, far, frr));
    }
    Ok(points)
}

/// Equal error rate and the threshold where it is reached.
pub fn compute_eer(targets: &[f64], nontargets: &[f64]) -> Result<(f64, f64)> {
    let points = operating_points(targets, nontargets)?;
    // FAR - FRR starts at 1 and ends at -1
    let i = points
        .iter()
        .position(|&(_, far, frr)| frr >= far)
        .expect("FRR reaches 1 at +inf");
    let (t1, far1, frr1) = points[i];
    if frr1 == far1 || i == 0 {
        return Ok((far1, t1));
    }
    let (t0, far0, frr0) = points[i - 1];
    let d0 = far0 - frr0;
    let d1 = far1 - frr1;
    let alpha = d0 / (d0 - d1);
    let eer = far0 + alpha * (far1 - far0);
    let threshold = if t1.is_finite() { t0 + alpha * (t1 - t0) } else { t0 };
    Ok((eer, threshold))
}

/// `(FAR, FRR)` for every distinct threshold, in ascending threshold order.
pub fn det_points(targets: &[f64], nontargets: &[f64]) -> Result<Vec<(f64, f64)>> {
    Ok(operating_points(targets, nontargets)?
        .into_iter()
        .map(|(_, far, frr)| (far, frr))
        .collect())
}

/// A post-processed test vector with its ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct TestVector {
    pub utterance_id: String,
    pub speaker_id: String,
    pub vector: DVector<f64>,
}

/// Speakers x test utterances matrix of PLDA scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    pub speakers: Vec<String>,
    pub utterances: Vec<String>,
    /// True speaker of each column.
    pub utterance_speakers: Vec<String>,
    pub scores: DMatrix<f64>,
}

pub fn score_matrix(templates: &[SpeakerTemplate], tests: &[TestVector], plda: &PldaModel) -> Result<ScoreMatrix> {
    check_unique(templates.iter().map(|t| t.speaker_id.as_str()), "speaker")?;
    check_unique(tests.iter().map(|t| t.utterance_id.as_str()), "utterance")?;
    let columns: Vec<Vec<f64>> = tests
        .par_iter()
        .map(|test| {
            templates
                .iter()
                .map(|tpl| plda.llr(&tpl.vector, &test.vector))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let scores = DMatrix::from_fn(templates.len(), tests.len(), |r, c| columns[c][r]);
    Ok(ScoreMatrix {
        speakers: templates.iter().map(|t| t.speaker_id.clone()).collect(),
        utterances: tests.iter().map(|t| t.utterance_id.clone()).collect(),
        utterance_speakers: tests.iter().map(|t| t.speaker_id.clone()).collect(),
        scores,
    })
}

fn check_unique<'a>(ids: impl Iterator<Item = &'a str>, what: &str) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    for id in ids {
        if !seen.insert(id) {
            return Err(Error::InvalidInput(format!("duplicate {what} label {id}")));
        }
    }
    Ok(())
}

impl ScoreMatrix {
    /// Every (template, test) pair, row-major.
    pub fn trials(&self) -> Vec<TrialScore> {
        let mut out = Vec::with_capacity(self.scores.len());
        for (r, spk) in self.speakers.iter().enumerate() {
            for (c, utt) in self.utterances.iter().enumerate() {
                out.push(TrialScore {
                    enroll_speaker: spk.clone(),
                    test_utterance: utt.clone(),
                    test_speaker: self.utterance_speakers[c].clone(),
                    score: self.scores[(r, c)],
                    is_target: *spk == self.utterance_speakers[c],
                });
            }
        }
        out
    }

    pub fn split_scores(&self) -> (Vec<f64>, Vec<f64>) {
        let (mut tar, mut non) = (Vec::new(), Vec::new());
        for t in self.trials() {
            if t.is_target {
                tar.push(t.score);
            } else {
                non.push(t.score);
            }
        }
        (tar, non)
    }

    pub fn eer(&self) -> Result<(f64, f64)> {
        let (tar, non) = self.split_scores();
        compute_eer(&tar, &non)
    }

    /// Fraction of test columns whose highest-scoring template is the true
    /// speaker.
    pub fn identification_rate(&self) -> f64 {
        if self.utterances.is_empty() {
            return 0.0;
        }
        let hits = (0..self.scores.ncols())
            .filter(|&c| {
                let best = self.scores.column(c).imax();
                self.speakers[best] == self.utterance_speakers[c]
            })
            .count();
        hits as f64 / self.scores.ncols() as f64
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("speaker");
        for u in &self.utterances {
            out.push(',');
            out.push_str(u);
        }
        out.push('\n');
        for (r, spk) in self.speakers.iter().enumerate() {
            out.push_str(spk);
            for c in 0..self.scores.ncols() {
                let _ = write!(out, ",{}", self.scores[(r, c)]);
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Mean same-speaker score minus mean cross-speaker score.
pub fn diagonal_dominance(matrix: &ScoreMatrix) -> Result<f64> {
    let (tar, non) = matrix.split_scores();
    if tar.is_empty() {
        return Err(Error::InvalidInput("score matrix has no same-speaker pairs".into()));
    }
    if non.is_empty() {
        return Err(Error::InvalidInput("score matrix has no cross-speaker pairs".into()));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(mean(&tar) - mean(&non))
}
