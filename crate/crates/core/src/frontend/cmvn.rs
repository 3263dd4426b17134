use super::features::FeatureMatrix;

const STD_FLOOR: f64 = 1e-10;

/// Mean and variance normalisation over a centred window of `window`
/// frames, truncated at the utterance edges.
pub fn sliding_cmvn(features: &FeatureMatrix, window: usize) -> FeatureMatrix {
    let (n, dims) = (features.frames(), features.dims());
    let mut out = FeatureMatrix::zeros(n, dims);
    if n == 0 {
        return out;
    }
    let half = window / 2;
    // Offsetting by the first frame keeps constant inputs exactly zero.
    let reference = features.row(0).to_vec();
    let mut sum = vec![0.0; (n + 1) * dims];
    let mut sq = vec![0.0; (n + 1) * dims];
    for t in 0..n {
        for d in 0..dims {
            let v = features.get(t, d) - reference[d];
            sum[(t + 1) * dims + d] = sum[t * dims + d] + v;
            sq[(t + 1) * dims + d] = sq[t * dims + d] + v * v;
        }
    }
    for t in 0..n {
        let lo = t.saturating_sub(half);
        let hi = (t + half + 1).min(n);
        let count = (hi - lo) as f64;
        let row = out.row_mut(t);
        for d in 0..dims {
            let s = sum[hi * dims + d] - sum[lo * dims + d];
            let q = sq[hi * dims + d] - sq[lo * dims + d];
            let mean = s / count;
            let var = (q / count - mean * mean).max(0.0);
            let centred = features.get(t, d) - reference[d] - mean;
            row[d] = if centred == 0.0 {
                0.0
            } else {
                centred / var.sqrt().max(STD_FLOOR)
            };
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn constant_features_become_zero() {
        let m = FeatureMatrix::from_vec(500, 3, [1.5, -2.0, 1e6].repeat(500)).unwrap();
        let out = sliding_cmvn(&m, 301);
        assert!(out.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_utterance_equals_global_normalisation() {
        let rows: Vec<Vec<f64>> = (0..120).map(|t| vec![(t as f64 * 0.37).sin() * 3.0 + 1.0]).collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let out = sliding_cmvn(&m, 301);
        let mean = rows.iter().map(|r| r[0]).sum::<f64>() / 120.0;
        let var = rows.iter().map(|r| (r[0] - mean).powi(2)).sum::<f64>() / 120.0;
        for (t, r) in rows.iter().enumerate() {
            assert!((out.get(t, 0) - (r[0] - mean) / var.sqrt()).abs() < 1e-9);
        }
    }

    #[test]
    fn white_noise_interior_is_standardised() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data: Vec<f64> = (0..2000 * 2)
            .map(|_| 5.0 + 2.0 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
            .collect();
        let m = FeatureMatrix::from_vec(2000, 2, data).unwrap();
        let out = sliding_cmvn(&m, 301);
        // statistics of the normalised values over one interior window
        for d in 0..2 {
            let vals: Vec<f64> = (850..1151).map(|t| out.get(t, d)).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / vals.len() as f64;
            assert!(mean.abs() < 0.2, "mean {mean}");
            assert!((0.8..=1.2).contains(&var), "var {var}");
        }
    }

    #[test]
    fn renormalising_periodic_signal_is_idempotent() {
        // period 7 divides the 301-frame window, so interior statistics are
        // exactly stationary
        let n = 1500;
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|t| vec![((t % 7) as f64).powi(2) - 4.0, ((t * 3 % 7) as f64) * 0.5])
            .collect();
        let m = FeatureMatrix::from_rows(&rows).unwrap();
        let once = sliding_cmvn(&m, 301);
        let twice = sliding_cmvn(&once, 301);
        let region = 300..n - 300;
        let count = region.len() * 2;
        let rms = (region
            .flat_map(|t| (0..2).map(move |d| (t, d)))
            .map(|(t, d)| (once.get(t, d) - twice.get(t, d)).powi(2))
            .sum::<f64>()
            / count as f64)
            .sqrt();
        assert!(rms < 1e-6, "rms change {rms}");
    }
}
