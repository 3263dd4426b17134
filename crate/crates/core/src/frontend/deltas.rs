use super::features::FeatureMatrix;
use crate::error::{Error, Result};

const CONTEXT: usize = 2;
/// 2 * (1^2 + 2^2)
const DENOMINATOR: f64 = 10.0;

/// Regression deltas over +-2 frames with replicated edges.
pub fn deltas(features: &FeatureMatrix) -> FeatureMatrix {
    let (n, dims) = (features.frames(), features.dims());
    let mut out = FeatureMatrix::zeros(n, dims);
    let clamp = |t: isize| t.clamp(0, n as isize - 1) as usize;
    for t in 0..n {
        let row = out.row_mut(t);
        for k in 1..=CONTEXT {
            let ahead = features.row(clamp(t as isize + k as isize));
            let behind = features.row(clamp(t as isize - k as isize));
            for d in 0..dims {
                row[d] += k as f64 * (ahead[d] - behind[d]);
            }
        }
        row.iter_mut().for_each(|v| *v /= DENOMINATOR);
    }
    out
}

/// Statics, deltas and double-deltas side by side.
pub fn append_deltas(features: &FeatureMatrix) -> Result<FeatureMatrix> {
    if features.frames() < 2 * CONTEXT + 1 {
        return Err(Error::InvalidInput(format!(
            "deltas need at least {} frames, got {}",
            2 * CONTEXT + 1,
            features.frames()
        )));
    }
    let d1 = deltas(features);
    let d2 = deltas(&d1);
    FeatureMatrix::hstack(&[features, &d1, &d2])
}
