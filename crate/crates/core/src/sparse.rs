//! Compressed sparse row storage for 0/1 matrices.

use serde::{Deserialize, Serialize};

/// A binary matrix in CSR layout. Column indices within a row are sorted and unique.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryMatrix {
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
}

impl BinaryMatrix {
    pub fn empty(n_cols: usize) -> Self {
        BinaryMatrix {
            n_cols,
            row_ptr: vec![0],
            col_idx: Vec::new(),
        }
    }

    /// Builds a matrix from per-row column lists. Rows are sorted and deduplicated.
    pub fn from_rows<I, R>(n_cols: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = u32>,
    {
        let mut m = BinaryMatrix::empty(n_cols);
        for row in rows {
            m.push_row(row);
        }
        m
    }

    pub fn push_row<R: IntoIterator<Item = u32>>(&mut self, row: R) {
        let start = self.col_idx.len();
        self.col_idx.extend(row);
        let tail = &mut self.col_idx[start..];
        tail.sort_unstable();
        let mut w = 0;
        for r in 0..tail.len() {
            if r == 0 || tail[r] != tail[w - 1] {
                tail[w] = tail[r];
                w += 1;
            }
        }
        self.col_idx.truncate(start + w);
        debug_assert!(self.col_idx[start..]
            .iter()
            .all(|&c| (c as usize) < self.n_cols));
        self.row_ptr.push(self.col_idx.len());
    }

    pub fn n_rows(&self) -> usize {
        self.row_ptr.len() - 1
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[u32] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u32]> + '_ {
        (0..self.n_rows()).map(move |r| self.row(r))
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.row(r).binary_search(&(c as u32)).is_ok()
    }

    /// Number of nonzeros in each column.
    pub fn col_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_cols];
        for &c in &self.col_idx {
            counts[c as usize] += 1;
        }
        counts
    }

    /// Transposed copy; row `j` of the result lists the rows of `self` containing column `j`.
    pub fn transpose(&self) -> BinaryMatrix {
        let counts = self.col_counts();
        let mut row_ptr = Vec::with_capacity(self.n_cols + 1);
        row_ptr.push(0usize);
        for &c in &counts {
            row_ptr.push(row_ptr.last().unwrap() + c as usize);
        }
        let mut fill = row_ptr[..self.n_cols].to_vec();
        let mut col_idx = vec![0u32; self.nnz()];
        for r in 0..self.n_rows() {
            for &c in self.row(r) {
                col_idx[fill[c as usize]] = r as u32;
                fill[c as usize] += 1;
            }
        }
        BinaryMatrix {
            n_cols: self.n_rows(),
            row_ptr,
            col_idx,
        }
    }

    /// Row-wise count of selected columns.
    pub fn count_selected(&self, x: &[bool]) -> Vec<u32> {
        self.rows()
            .map(|row| row.iter().filter(|&&c| x[c as usize]).count() as u32)
            .collect()
    }

    /// Dense representation, for tests and small diagnostics.
    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        self.rows()
            .map(|row| {
                let mut d = vec![0u8; self.n_cols];
                for &c in row {
                    d[c as usize] = 1;
                }
                d
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rows_are_sorted_and_deduplicated() {
        let m = BinaryMatrix::from_rows(5, vec![vec![3, 1, 3, 0], vec![], vec![4]]);
        assert_eq!(m.row(0), &[0, 1, 3]);
        assert!(m.row(1).is_empty());
        assert_eq!(m.nnz(), 4);
        assert!(m.get(2, 4));
        assert!(!m.get(2, 3));
    }

    #[test]
    fn transpose_twice_is_identity() {
        let m = BinaryMatrix::from_rows(4, vec![vec![0, 2], vec![1, 2, 3], vec![3]]);
        let t = m.transpose();
        assert_eq!(t.n_rows(), 4);
        assert_eq!(t.row(2), &[0, 1]);
        assert_eq!(t.transpose(), m);
        assert_eq!(m.col_counts(), vec![1, 1, 2, 2]);
    }
}
