use crate::error::{Error, Result};

/// Compressed sparse row structure without values.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    n_rows: usize,
    n_cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl SparsePattern {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        offsets: Vec<usize>,
        indices: Vec<usize>,
    ) -> Result<Self> {
        if offsets.len() != n_rows + 1 || offsets.last().copied() != Some(indices.len()) {
            return Err(Error::validation("malformed CSR offsets"));
        }
        if offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::validation("CSR offsets not monotone"));
        }
        if indices.iter().any(|&c| c >= n_cols) {
            return Err(Error::validation("CSR column index out of range"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            offsets,
            indices,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.offsets[r]..self.offsets[r + 1]
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.indices[self.row_range(r)]
    }
}

/// CSR matrix with `f64` values aligned to its pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    pattern: SparsePattern,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(pattern: SparsePattern, values: Vec<f64>) -> Result<Self> {
        if values.len() != pattern.nnz() {
            return Err(Error::shape(
                "sparse values",
                &[pattern.nnz()],
                &[values.len()],
            ));
        }
        Ok(Self { pattern, values })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        let mut sorted = triplets.to_vec();
        sorted.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut offsets = vec![0usize; n_rows + 1];
        let mut indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for &(r, c, v) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::validation(format!(
                    "triplet ({r}, {c}) outside {n_rows}x{n_cols}"
                )));
            }
            if last == Some((r, c)) {
                *values.last_mut().expect("previous entry") += v;
                continue;
            }
            indices.push(c);
            values.push(v);
            offsets[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n_rows {
            offsets[r + 1] += offsets[r];
        }
        let pattern = SparsePattern::new(n_rows, n_cols, offsets, indices)?;
        Self::new(pattern, values)
    }

    pub fn pattern(&self) -> &SparsePattern {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows() * self.n_cols()];
        for r in 0..self.n_rows() {
            for e in self.pattern.row_range(r) {
                out[r * self.n_cols() + self.pattern.indices[e]] += self.values[e];
            }
        }
        out
    }
}
