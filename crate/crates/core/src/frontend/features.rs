use crate::error::{Error, Result};

/// Row-major frames x dims matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Vec<f64>,
    frames: usize,
    dims: usize,
}

impl FeatureMatrix {
    pub fn zeros(frames: usize, dims: usize) -> Self {
        Self {
            data: vec![0.0; frames * dims],
            frames,
            dims,
        }
    }

    pub fn from_vec(frames: usize, dims: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != frames * dims {
            return Err(Error::DimensionMismatch {
                what: "feature matrix data",
                expected: frames * dims,
                found: data.len(),
            });
        }
        Ok(Self { data, frames, dims })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dims = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * dims);
        for r in rows {
            if r.len() != dims {
                return Err(Error::DimensionMismatch {
                    what: "feature row",
                    expected: dims,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Self {
            data,
            frames: rows.len(),
            dims,
        })
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.frames == 0
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.dims..(t + 1) * self.dims]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        // chunks_exact on an empty slice with dims 0 would panic
        self.data.chunks_exact(self.dims.max(1)).take(self.frames)
    }

    pub fn get(&self, t: usize, d: usize) -> f64 {
        self.data[t * self.dims + d]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Keeps the rows whose mask entry is true.
    pub fn select_rows(&self, mask: &[bool]) -> FeatureMatrix {
        let mut data = Vec::new();
        let mut frames = 0;
        for (t, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
            if t < self.frames {
                data.extend_from_slice(self.row(t));
                frames += 1;
            }
        }
        FeatureMatrix {
            data,
            frames,
            dims: self.dims,
        }
    }

    /// Rows `range` as a new matrix.
    pub fn slice_rows(&self, range: std::ops::Range<usize>) -> FeatureMatrix {
        let frames = range.len();
        FeatureMatrix {
            data: self.data[range.start * self.dims..range.end * self.dims].to_vec(),
            frames,
            dims: self.dims,
        }
    }

    /// Horizontal concatenation of equally long matrices.
    pub fn hstack(parts: &[&FeatureMatrix]) -> Result<FeatureMatrix> {
        let frames = parts.first().map_or(0, |p| p.frames);
        let dims: usize = parts.iter().map(|p| p.dims).sum();
        let mut out = FeatureMatrix::zeros(frames, dims);
        for t in 0..frames {
            let mut offset = 0;
            for p in parts {
                if p.frames != frames {
                    return Err(Error::DimensionMismatch {
                        what: "hstack frame count",
                        expected: frames,
                        found: p.frames,
                    });
                }
                out.row_mut(t)[offset..offset + p.dims].copy_from_slice(p.row(t));
                offset += p.dims;
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn select_and_stack() {
        let m = FeatureMatrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let s = m.select_rows(&[true, false, true]);
        assert_eq!(s.frames(), 2);
        assert_eq!(s.row(1), &[5.0, 6.0]);
        let h = FeatureMatrix::hstack(&[&m, &m]).unwrap();
        assert_eq!(h.row(2), &[5.0, 6.0, 5.0, 6.0]);
        assert_eq!(m.slice_rows(1..3).row(0), &[3.0, 4.0]);
        assert!(FeatureMatrix::from_rows(&[vec![1.0], vec![1.0, 2.0]]).is_err());
        assert_eq!(m.rows().count(), 3);
    }
}
