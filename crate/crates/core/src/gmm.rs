//! Diagonal-covariance GMM-UBM: EM training and Baum-Welch statistics.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::error::{Error, Result};
use crate::frontend::FeatureMatrix;

/// Utterances per accumulation chunk. Fixed so that summation order, and
/// therefore every bit of the result, is independent of the thread count.
pub const CHUNK: usize = 16;

/// Components whose weight falls below this are reseeded.
pub const COLLAPSE_WEIGHT: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagonalGmm {
    weights: Vec<f64>,
    means: Vec<f64>,
    variances: Vec<f64>,
    dims: usize,
    inv_var: Vec<f64>,
    /// log w_c - 0.5 * sum_d log(2 pi var_cd)
    log_norm: Vec<f64>,
}

impl DiagonalGmm {
    /// Builds a model from row-major `C x D` means and variances. Weights are
    /// renormalised to sum to one.
    pub fn new(weights: Vec<f64>, means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        let c = weights.len();
        if c == 0 {
            return Err(Error::InvalidInput("GMM needs at least one component".into()));
        }
        if means.len() % c != 0 || means.is_empty() {
            return Err(Error::InvalidInput("means are not C x D".into()));
        }
        let dims = means.len() / c;
        if variances.len() != means.len() {
            return Err(Error::DimensionMismatch {
                what: "GMM variances",
                expected: means.len(),
                found: variances.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput(
                "GMM weights must be finite and non-negative".into(),
            ));
        }
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidInput("GMM variances must be finite and positive".into()));
        }
        if means.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidInput("GMM means must be finite".into()));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::InvalidInput("GMM weights sum to zero".into()));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();
        let inv_var: Vec<f64> = variances.iter().map(|v| 1.0 / v).collect();
        let log_norm = (0..c)
            .map(|k| {
                let logdet: f64 = variances[k * dims..(k + 1) * dims]
                    .iter()
                    .map(|v| (2.0 * PI * v).ln())
                    .sum();
                weights[k].ln() - 0.5 * logdet
            })
            .collect();
        Ok(Self {
            weights,
            means,
            variances,
            dims,
            inv_var,
            log_norm,
        })
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dims..(c + 1) * self.dims]
    }

    pub fn variance(&self, c: usize) -> &[f64] {
        &self.variances[c * self.dims..(c + 1) * self.dims]
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    /// Weighted log-densities log(w_c N(x; m_c, S_c)) into `out`.
    fn joint_log_densities(&self, frame: &[f64], out: &mut [f64]) {
        let d = self.dims;
        for (c, o) in out.iter_mut().enumerate() {
            let mu = &self.means[c * d..(c + 1) * d];
            let iv = &self.inv_var[c * d..(c + 1) * d];
            let mut q = 0.0;
            for k in 0..d {
                let diff = frame[k] - mu[k];
                q += diff * diff * iv[k];
            }
            *o = self.log_norm[c] - 0.5 * q;
        }
    }

    /// In-place conversion of joint log-densities to log-posteriors;
    /// returns the frame log-likelihood.
    fn normalize_in_place(log_joint: &mut [f64]) -> f64 {
        let max = log_joint.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let sum: f64 = log_joint.iter().map(|v| (v - max).exp()).sum();
        let ll = max + sum.ln();
        log_joint.iter_mut().for_each(|v| *v -= ll);
        ll
    }

    /// Log-posteriors of every component and the frame log-likelihood.
    pub fn log_responsibilities(&self, frame: &[f64]) -> Result<(Vec<f64>, f64)> {
        if frame.len() != self.dims {
            return Err(Error::DimensionMismatch {
                what: "GMM frame",
                expected: self.dims,
                found: frame.len(),
            });
        }
        let mut out = vec![0.0; self.components()];
        self.joint_log_densities(frame, &mut out);
        let ll = Self::normalize_in_place(&mut out);
        Ok((out, ll))
    }

    /// Total log-likelihood of all frames.
    pub fn log_likelihood(&self, features: &FeatureMatrix) -> Result<f64> {
        self.check_dims(features)?;
        let mut buf = vec![0.0; self.components()];
        Ok(features
            .rows()
            .map(|x| {
                self.joint_log_densities(x, &mut buf);
                Self::normalize_in_place(&mut buf)
            })
            .sum())
    }

    fn check_dims(&self, features: &FeatureMatrix) -> Result<()> {
        if features.dims() != self.dims {
            return Err(Error::DimensionMismatch {
                what: "feature dimension vs GMM",
                expected: self.dims,
                found: features.dims(),
            });
        }
        Ok(())
    }

    pub fn save(&self, path: &Path, floor: f64, seed: u64) -> Result<()> {
        let header = GmmHeader {
            version: binio::FORMAT_VERSION,
            components: self.components(),
            dims: self.dims,
            floor,
            seed,
        };
        let mut payload = self.weights.clone();
        payload.extend_from_slice(&self.means);
        payload.extend_from_slice(&self.variances);
        binio::write_file(path, GMM_MAGIC, &header, &payload)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (h, payload): (GmmHeader, Vec<f64>) = binio::read_file(path, GMM_MAGIC)?;
        let (c, d) = (h.components, h.dims);
        if payload.len() != c + 2 * c * d {
            return Err(Error::ModelFormat(format!("{}: payload size mismatch", path.display())));
        }
        let mut cur = payload.as_slice();
        let w = binio::take(&mut cur, c)?.to_vec();
        let m = binio::take(&mut cur, c * d)?.to_vec();
        let v = binio::take(&mut cur, c * d)?.to_vec();
        Self::new(w, m, v)
    }

    /// Digest identifying this UBM, used to bind downstream models to it.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for v in self.weights.iter().chain(&self.means).chain(&self.variances) {
            h.update(v.to_le_bytes());
        }
        h.finalize()[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

const GMM_MAGIC: &[u8; 4] = b"IVLG";

#[derive(Debug, Serialize, Deserialize)]
struct GmmHeader {
    version: u32,
    components: usize,
    dims: usize,
    floor: f64,
    seed: u64,
}

/// Zeroth- and first-order statistics of one utterance (or a merged set).
#[derive(Debug, Clone, PartialEq)]
pub struct BaumWelchStats {
    /// N_c, length C.
    pub n: Vec<f64>,
    /// F_c, row-major C x D.
    pub f: Vec<f64>,
    pub frame_count: usize,
    pub dims: usize,
}

impl BaumWelchStats {
    pub fn zeros(components: usize, dims: usize) -> Self {
        Self {
            n: vec![0.0; components],
            f: vec![0.0; components * dims],
            frame_count: 0,
            dims,
        }
    }

    pub fn components(&self) -> usize {
        self.n.len()
    }

    pub fn first_order(&self, c: usize) -> &[f64] {
        &self.f[c * self.dims..(c + 1) * self.dims]
    }

    /// Component-wise sum.
    pub fn merge(&mut self, other: &BaumWelchStats) -> Result<()> {
        if other.n.len() != self.n.len() || other.dims != self.dims {
            return Err(Error::DimensionMismatch {
                what: "stats merge",
                expected: self.f.len(),
                found: other.f.len(),
            });
        }
        self.n.iter_mut().zip(&other.n).for_each(|(a, b)| *a += b);
        self.f.iter_mut().zip(&other.f).for_each(|(a, b)| *a += b);
        self.frame_count += other.frame_count;
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.n.iter().chain(&self.f).all(|v| v.is_finite())
    }
}

/// Baum-Welch statistics of `features` under `gmm`.
pub fn accumulate_stats(gmm: &DiagonalGmm, features: &FeatureMatrix) -> Result<BaumWelchStats> {
    if features.is_empty() {
        return Err(Error::InvalidInput("empty feature matrix".into()));
    }
    gmm.check_dims(features)?;
    let (c, d) = (gmm.components(), gmm.dims());
    let mut stats = BaumWelchStats::zeros(c, d);
    let mut post = vec![0.0; c];
    for x in features.rows() {
        gmm.joint_log_densities(x, &mut post);
        DiagonalGmm::normalize_in_place(&mut post);
        for k in 0..c {
            let g = post[k].exp();
            stats.n[k] += g;
            let f = &mut stats.f[k * d..(k + 1) * d];
            for (fi, xi) in f.iter_mut().zip(x) {
                *fi += g * xi;
            }
        }
    }
    stats.frame_count = features.frames();
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UbmOptions {
    pub components: usize,
    pub iterations: usize,
    /// Variance floor as a fraction of the global per-dimension variance.
    pub variance_floor: f64,
    /// Frames drawn for the k-means++ initialisation.
    pub kmeans_sample: usize,
    pub kmeans_iterations: usize,
}

impl Default for UbmOptions {
    fn default() -> Self {
        Self {
            components: 64,
            iterations: 8,
            variance_floor: 0.01,
            kmeans_sample: 20_000,
            kmeans_iterations: 10,
        }
    }
}

impl UbmOptions {
    pub fn validate(&self) -> Result<()> {
        if self.components == 0 {
            return Err(Error::Config("UBM needs at least one component".into()));
        }
        if !(self.variance_floor > 0.0 && self.variance_floor < 1.0) {
            return Err(Error::Config("variance_floor must be in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Per-iteration record of UBM training.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UbmTrainingLog {
    /// Total data log-likelihood before each EM update and after the last.
    pub log_likelihood: Vec<f64>,
    /// Iterations (0-based) in which a collapsed component was reseeded.
    pub reseeded: Vec<(usize, usize)>,
}

/// EM sufficient statistics including the second order.
#[derive(Debug, Clone)]
struct EmAccumulator {
    n: Vec<f64>,
    f: Vec<f64>,
    s: Vec<f64>,
    log_likelihood: f64,
}

impl EmAccumulator {
    fn zeros(c: usize, d: usize) -> Self {
        Self {
            n: vec![0.0; c],
            f: vec![0.0; c * d],
            s: vec![0.0; c * d],
            log_likelihood: 0.0,
        }
    }

    fn add(&mut self, gmm: &DiagonalGmm, features: &FeatureMatrix, post: &mut [f64]) {
        let d = gmm.dims();
        for x in features.rows() {
            gmm.joint_log_densities(x, post);
            self.log_likelihood += DiagonalGmm::normalize_in_place(post);
            for (k, lp) in post.iter().enumerate() {
                let g = lp.exp();
                if g < 1e-300 {
                    continue;
                }
                self.n[k] += g;
                let f = &mut self.f[k * d..(k + 1) * d];
                let s = &mut self.s[k * d..(k + 1) * d];
                for i in 0..d {
                    let gx = g * x[i];
                    f[i] += gx;
                    s[i] += gx * x[i];
                }
            }
        }
    }

    fn merge(&mut self, other: &EmAccumulator) {
        self.n.iter_mut().zip(&other.n).for_each(|(a, b)| *a += b);
        self.f.iter_mut().zip(&other.f).for_each(|(a, b)| *a += b);
        self.s.iter_mut().zip(&other.s).for_each(|(a, b)| *a += b);
        self.log_likelihood += other.log_likelihood;
    }
}

fn e_step(gmm: &DiagonalGmm, data: &[FeatureMatrix]) -> EmAccumulator {
    let (c, d) = (gmm.components(), gmm.dims());
    let partial: Vec<EmAccumulator> = data
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = EmAccumulator::zeros(c, d);
            let mut post = vec![0.0; c];
            for m in chunk {
                acc.add(gmm, m, &mut post);
            }
            acc
        })
        .collect();
    let mut total = EmAccumulator::zeros(c, d);
    for p in &partial {
        total.merge(p);
    }
    total
}

fn global_moments(data: &[FeatureMatrix], d: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let mut sum = vec![0.0; d];
    let mut frames = 0usize;
    for m in data {
        for x in m.rows() {
            sum.iter_mut().zip(x).for_each(|(s, v)| *s += v);
        }
        frames += m.frames();
    }
    let mean: Vec<f64> = sum.iter().map(|s| s / frames as f64).collect();
    let mut var = vec![0.0; d];
    for m in data {
        for x in m.rows() {
            for i in 0..d {
                var[i] += (x[i] - mean[i]).powi(2);
            }
        }
    }
    var.iter_mut().for_each(|v| *v /= frames as f64);
    (mean, var, frames)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// k-means++ seeding followed by Lloyd iterations on a frame subsample.
fn kmeans_init(
    data: &[FeatureMatrix],
    options: &UbmOptions,
    floor: &[f64],
    rng: &mut ChaCha8Rng,
) -> Result<DiagonalGmm> {
    let c = options.components;
    let d = floor.len();
    let index: Vec<(usize, usize)> = data
        .iter()
        .enumerate()
        .flat_map(|(u, m)| (0..m.frames()).map(move |t| (u, t)))
        .collect();
    let take = options.kmeans_sample.max(c).min(index.len());
    let mut picked = sample(rng, index.len(), take).into_vec();
    picked.sort_unstable();
    let points: Vec<&[f64]> = picked
        .iter()
        .map(|&i| {
            let (u, t) = index[i];
            data[u].row(t)
        })
        .collect();

    let mut centers: Vec<Vec<f64>> = vec![points[rng.gen_range(0..points.len())].to_vec()];
    let mut nearest: Vec<f64> = points.iter().map(|p| sq_dist(p, &centers[0])).collect();
    while centers.len() < c {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut chosen = points.len() - 1;
            for (i, w) in nearest.iter().enumerate() {
                if target < *w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            chosen
        } else {
            rng.gen_range(0..points.len())
        };
        let center = points[next].to_vec();
        for (n, p) in nearest.iter_mut().zip(&points) {
            *n = n.min(sq_dist(p, &center));
        }
        centers.push(center);
    }

    let mut assignment = vec![0usize; points.len()];
    for iter in 0..=options.kmeans_iterations {
        for (a, p) in assignment.iter_mut().zip(&points) {
            *a = (0..c)
                .min_by(|&i, &j| sq_dist(p, &centers[i]).total_cmp(&sq_dist(p, &centers[j])))
                .unwrap();
        }
        if iter == options.kmeans_iterations {
            break;
        }
        let mut sums = vec![vec![0.0; d]; c];
        let mut counts = vec![0usize; c];
        for (a, p) in assignment.iter().zip(&points) {
            counts[*a] += 1;
            sums[*a].iter_mut().zip(p.iter()).for_each(|(s, v)| *s += v);
        }
        for k in 0..c {
            if counts[k] > 0 {
                centers[k] = sums[k].iter().map(|s| s / counts[k] as f64).collect();
            }
        }
    }

    let mut weights = vec![0.0; c];
    let mut variances = vec![0.0; c * d];
    for (a, p) in assignment.iter().zip(&points) {
        weights[*a] += 1.0;
        for i in 0..d {
            variances[a * d + i] += (p[i] - centers[*a][i]).powi(2);
        }
    }
    for k in 0..c {
        let count = weights[k];
        for i in 0..d {
            let v = &mut variances[k * d + i];
            *v = if count > 0.0 { *v / count } else { 0.0 };
            *v = v.max(floor[i]);
        }
        // empty clusters keep a token weight so they can attract data
        weights[k] = count.max(1.0);
    }
    let means = centers.concat();
    DiagonalGmm::new(weights, means, variances)
}

fn m_step(acc: &EmAccumulator, floor: &[f64], frames: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c = acc.n.len();
    let d = floor.len();
    let mut weights = vec![0.0; c];
    let mut means = vec![0.0; c * d];
    let mut variances = vec![0.0; c * d];
    for k in 0..c {
        let n = acc.n[k];
        weights[k] = n / frames as f64;
        for i in 0..d {
            let idx = k * d + i;
            if n > 0.0 {
                let m = acc.f[idx] / n;
                means[idx] = m;
                variances[idx] = (acc.s[idx] / n - m * m).max(floor[i]);
            } else {
                variances[idx] = floor[i];
            }
        }
    }
    (weights, means, variances)
}

/// Trains a diagonal GMM-UBM by k-means++ initialisation and EM.
pub fn train_ubm(data: &[FeatureMatrix], options: &UbmOptions, seed: u64) -> Result<(DiagonalGmm, UbmTrainingLog)> {
    options.validate()?;
    let d = data
        .iter()
        .find(|m| !m.is_empty())
        .map(|m| m.dims())
        .ok_or_else(|| Error::InvalidInput("no training frames".into()))?;
    if let Some(bad) = data.iter().find(|m| m.dims() != d && !m.is_empty()) {
        return Err(Error::DimensionMismatch {
            what: "UBM training features",
            expected: d,
            found: bad.dims(),
        });
    }
    let (_, global_var, frames) = global_moments(data, d);
    let c = options.components;
    if frames < 10 * c {
        return Err(Error::InvalidInput(format!(
            "UBM with {c} components needs at least {} frames, got {frames}",
            10 * c
        )));
    }
    let floor: Vec<f64> = global_var
        .iter()
        .map(|v| (v * options.variance_floor).max(1e-12))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gmm = kmeans_init(data, options, &floor, &mut rng)?;
    let mut log = UbmTrainingLog::default();
    for iter in 0..options.iterations {
        let acc = e_step(&gmm, data);
        log.log_likelihood.push(acc.log_likelihood);
        let (mut weights, mut means, mut variances) = m_step(&acc, &floor, frames);
        for k in 0..c {
            if weights[k] < COLLAPSE_WEIGHT {
                let donor = (0..c).max_by(|&a, &b| weights[a].total_cmp(&weights[b])).unwrap();
                for i in 0..d {
                    let step = 0.1 * variances[donor * d + i].sqrt();
                    means[k * d + i] = means[donor * d + i] + step;
                    means[donor * d + i] -= step;
                    variances[k * d + i] = variances[donor * d + i];
                }
                weights[donor] *= 0.5;
                weights[k] = weights[donor];
                log::warn!("UBM iteration {iter}: component {k} collapsed, reseeded from {donor}");
                log.reseeded.push((iter, k));
            }
        }
        gmm = DiagonalGmm::new(weights, means, variances)?;
    }
    if options.iterations > 0 {
        let total: f64 = data
            .par_chunks(CHUNK)
            .map(|chunk| chunk.iter().map(|m| gmm.log_likelihood(m)).sum::<Result<f64>>())
            .collect::<Result<Vec<f64>>>()?
            .iter()
            .sum();
        log.log_likelihood.push(total);
    }
    Ok((gmm, log))
}

/// Statistics for many utterances, in input order.
pub fn accumulate_all(gmm: &DiagonalGmm, data: &[FeatureMatrix]) -> Result<Vec<BaumWelchStats>> {
    data.par_iter().map(|m| accumulate_stats(gmm, m)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn one_d(values: &[f64]) -> FeatureMatrix {
        FeatureMatrix::from_vec(values.len(), 1, values.to_vec()).unwrap()
    }

    #[test]
    fn single_component_posterior_is_one() {
        let g = DiagonalGmm::new(vec![1.0], vec![1.0, 2.0], vec![2.0, 0.5]).unwrap();
        let x = [0.3, 2.5];
        let (lp, ll) = g.log_responsibilities(&x).unwrap();
        assert_eq!(lp, vec![0.0]);
        let direct = -0.5 * ((2.0 * PI * 2.0).ln() + (2.0 * PI * 0.5).ln())
            - 0.5 * ((0.3 - 1.0f64).powi(2) / 2.0 + (2.5 - 2.0f64).powi(2) / 0.5);
        assert!((ll - direct).abs() < 1e-12);
    }

    #[test]
    fn identical_components_split_evenly() {
        let g = DiagonalGmm::new(vec![0.5, 0.5], vec![1.0, 1.0], vec![3.0, 3.0]).unwrap();
        for x in [-10.0, 0.0, 7.5] {
            let (lp, _) = g.log_responsibilities(&[x]).unwrap();
            assert!((lp[0].exp() - 0.5).abs() < 1e-15);
            assert!((lp[1].exp() - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn far_component_gets_negligible_posterior() {
        let g = DiagonalGmm::new(vec![0.5, 0.5], vec![0.0, 10.0], vec![1.0, 1.0]).unwrap();
        let (lp, ll) = g.log_responsibilities(&[0.0]).unwrap();
        // direct evaluation: densities e^0 and e^-50 with equal weights
        let p0 = 0.5 * (-0.5f64 * 0.0).exp() / (2.0 * PI).sqrt();
        let p1 = 0.5 * (-50.0f64).exp() / (2.0 * PI).sqrt();
        assert!((lp[0] - (p0 / (p0 + p1)).ln()).abs() < 1e-15);
        assert!((lp[1] - (p1 / (p0 + p1)).ln()).abs() < 1e-12);
        assert!((lp[1] + 50.0).abs() < 1e-12);
        assert!((ll - (p0 + p1).ln()).abs() < 1e-12);
    }

    #[test]
    fn dimension_checked() {
        let g = DiagonalGmm::new(vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert!(g.log_responsibilities(&[0.0]).is_err());
        assert!(accumulate_stats(&g, &FeatureMatrix::zeros(3, 3)).is_err());
        assert!(accumulate_stats(&g, &FeatureMatrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn single_component_stats_are_column_sums() {
        let g = DiagonalGmm::new(vec![1.0], vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0], vec![0.5, 0.5]]).unwrap();
        let s = accumulate_stats(&g, &m).unwrap();
        assert_eq!(s.n, vec![3.0]);
        assert_eq!(s.f, vec![4.5, 1.5]);
        assert_eq!(s.frame_count, 3);
    }

    #[test]
    fn stats_match_direct_loop() {
        let g = DiagonalGmm::new(vec![0.3, 0.7], vec![-1.0, 2.0], vec![1.0, 0.5]).unwrap();
        let frames = [0.2, -1.5, 1.7];
        let s = accumulate_stats(&g, &one_d(&frames)).unwrap();
        let mut n = [0.0; 2];
        let mut f = [0.0; 2];
        for x in frames {
            let (lp, _) = g.log_responsibilities(&[x]).unwrap();
            for c in 0..2 {
                n[c] += lp[c].exp();
                f[c] += lp[c].exp() * x;
            }
        }
        for c in 0..2 {
            assert!((s.n[c] - n[c]).abs() < 1e-12);
            assert!((s.f[c] - f[c]).abs() < 1e-12);
        }
        assert!((s.n.iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn stats_of_halves_merge_to_whole() {
        let g = DiagonalGmm::new(vec![0.5, 0.5], vec![-1.0, 1.0], vec![1.0, 1.0]).unwrap();
        let all: Vec<f64> = (0..40).map(|i| (i as f64 * 0.7).sin() * 2.0).collect();
        let whole = accumulate_stats(&g, &one_d(&all)).unwrap();
        let mut a = accumulate_stats(&g, &one_d(&all[..17])).unwrap();
        a.merge(&accumulate_stats(&g, &one_d(&all[17..])).unwrap()).unwrap();
        assert_eq!(a.frame_count, 40);
        for (x, y) in a.n.iter().zip(&whole.n).chain(a.f.iter().zip(&whole.f)) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    fn two_cluster_data(seed: u64) -> Vec<FeatureMatrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let unit = Normal::new(0.0, 1.0).unwrap();
        (0..20)
            .map(|_| {
                let v: Vec<f64> = (0..200)
                    .map(|_| {
                        let centre = if rng.gen_bool(0.5) { 5.0 } else { -5.0 };
                        centre + unit.sample(&mut rng)
                    })
                    .collect();
                one_d(&v)
            })
            .collect()
    }

    #[test]
    fn recovers_two_component_mixture() {
        let data = two_cluster_data(3);
        let opts = UbmOptions {
            components: 2,
            iterations: 10,
            ..UbmOptions::default()
        };
        let (g, log) = train_ubm(&data, &opts, 1).unwrap();
        let mut means = [g.mean(0)[0], g.mean(1)[0]];
        means.sort_by(f64::total_cmp);
        assert!((means[0] + 5.0).abs() < 0.2, "{means:?}");
        assert!((means[1] - 5.0).abs() < 0.2, "{means:?}");
        assert_eq!(log.log_likelihood.len(), 11);
        for w in log.log_likelihood.windows(2) {
            assert!(w[1] >= w[0] - 1e-8 * w[0].abs());
        }
    }

    #[test]
    fn one_component_is_global_moments() {
        let data = two_cluster_data(5);
        let opts = UbmOptions {
            components: 1,
            iterations: 1,
            ..UbmOptions::default()
        };
        let (g, _) = train_ubm(&data, &opts, 0).unwrap();
        let (mean, var, _) = global_moments(&data, 1);
        assert!((g.mean(0)[0] - mean[0]).abs() < 1e-10);
        assert!((g.variance(0)[0] - var[0]).abs() < 1e-9);
        assert_eq!(g.weights(), &[1.0]);
    }

    #[test]
    fn zero_iterations_returns_initialisation() {
        let data = two_cluster_data(8);
        let opts = UbmOptions {
            components: 2,
            iterations: 0,
            ..UbmOptions::default()
        };
        let (a, log) = train_ubm(&data, &opts, 4).unwrap();
        let (_, var, _) = global_moments(&data, 1);
        let floor = vec![var[0] * 0.01];
        let init = kmeans_init(&data, &opts, &floor, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, init);
        assert!(log.log_likelihood.is_empty());
    }

    #[test]
    fn too_few_frames_rejected() {
        let data = vec![one_d(&[0.0; 50])];
        let opts = UbmOptions {
            components: 8,
            ..UbmOptions::default()
        };
        assert!(train_ubm(&data, &opts, 0).is_err());
    }

    #[test]
    fn model_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ubm.ivlg");
        let g = DiagonalGmm::new(vec![0.25, 0.75], vec![1.0, 2.0, 3.0, 4.0], vec![0.5, 1.5, 2.5, 3.5]).unwrap();
        g.save(&p, 0.01, 9).unwrap();
        let back = DiagonalGmm::load(&p).unwrap();
        assert_eq!(back, g);
        assert_eq!(back.hash(), g.hash());
    }
}
