/// Compressed-sparse-row sparsity pattern (structure only, no values).
///
/// Values living on a pattern are stored as an `nnz × 1` matrix in CSR order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsePattern {
    rows: usize,
    cols: usize,
    offsets: Vec<usize>,
    indices: Vec<usize>,
}

impl SparsePattern {
    /// Builds a pattern from per-row column lists. Each list must be sorted,
    /// duplicate-free and in range.
    pub fn from_rows(cols: usize, rows: &[Vec<usize>]) -> Self {
        let mut offsets = Vec::with_capacity(rows.len() + 1);
        let mut indices = Vec::with_capacity(rows.iter().map(Vec::len).sum());
        offsets.push(0);
        for r in rows {
            debug_assert!(r.windows(2).all(|w| w[0] < w[1]), "row not sorted/unique");
            debug_assert!(r.iter().all(|&c| c < cols), "column out of range");
            indices.extend_from_slice(r);
            offsets.push(indices.len());
        }
        Self {
            rows: rows.len(),
            cols,
            offsets,
            indices,
        }
    }

    /// Every position present.
    pub fn dense(rows: usize, cols: usize) -> Self {
        let all: Vec<usize> = (0..cols).collect();
        Self::from_rows(cols, &vec![all; rows])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// Column indices of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &[usize] {
        &self.indices[self.offsets[i]..self.offsets[i + 1]]
    }

    /// Range of value slots owned by row `i`.
    #[inline]
    pub fn row_range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    /// Row index of every stored entry, in CSR order.
    pub fn row_of_entries(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nnz());
        for i in 0..self.rows {
            out.extend(std::iter::repeat_n(i, self.offsets[i + 1] - self.offsets[i]));
        }
        out
    }

    /// Column index of every stored entry, in CSR order.
    pub fn col_of_entries(&self) -> &[usize] {
        &self.indices
    }
}
