//! Observation weights `M` for the masked objective.
//!
//! A mask is either the full all-ones sentinel or a sparse list of observed
//! cells with weights in (0, 1]. Sparse entries are stored grouped by column
//! (rows ascending within a column), with a secondary row-grouped index so
//! that both `R Hᵀ` and `Wᵀ R` can be formed with one independent task per
//! output row or column.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ObservationMask {
    rows: usize,
    cols: usize,
    pattern: Option<SparsePattern>,
}

#[derive(Clone, Debug, PartialEq)]
pub(crate) struct SparsePattern {
    /// Column j owns entries `col_ptr[j]..col_ptr[j + 1]`.
    pub(crate) col_ptr: Vec<usize>,
    pub(crate) row_idx: Vec<usize>,
    pub(crate) col_idx: Vec<usize>,
    pub(crate) weight: Vec<f64>,
    /// Row i owns `row_entries[row_ptr[i]..row_ptr[i + 1]]`, each an index
    /// into the column-grouped arrays.
    pub(crate) row_ptr: Vec<usize>,
    pub(crate) row_entries: Vec<usize>,
}

/// One observed cell.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observed {
    pub row: usize,
    pub col: usize,
    pub weight: f64,
}

impl ObservationMask {
    /// Sentinel for `M = J` (every cell observed with weight 1).
    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            pattern: None,
        }
    }

    /// Mask from `(row, col, weight)` triplets. Order does not matter.
    pub fn from_entries(
        rows: usize,
        cols: usize,
        entries: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<Self> {
        let mut entries: Vec<(usize, usize, f64)> = entries.into_iter().collect();
        for &(i, j, w) in &entries {
            if i >= rows || j >= cols {
                return Err(Error::shape(
                    "ObservationMask",
                    format!("cell ({i}, {j}) outside {rows}x{cols}"),
                ));
            }
            if !(w > 0.0 && w <= 1.0) {
                return Err(Error::Config(format!(
                    "mask weight {w} at ({i}, {j}) not in (0, 1]"
                )));
            }
        }
        entries.sort_by_key(|e| (e.1, e.0));
        for pair in entries.windows(2) {
            if pair[0].0 == pair[1].0 && pair[0].1 == pair[1].1 {
                return Err(Error::Config(format!(
                    "duplicate mask cell ({}, {})",
                    pair[0].0, pair[0].1
                )));
            }
        }

        let mut col_ptr = vec![0usize; cols + 1];
        for &(_, j, _) in &entries {
            col_ptr[j + 1] += 1;
        }
        for j in 0..cols {
            col_ptr[j + 1] += col_ptr[j];
        }
        let row_idx: Vec<usize> = entries.iter().map(|e| e.0).collect();
        let col_idx: Vec<usize> = entries.iter().map(|e| e.1).collect();
        let weight: Vec<f64> = entries.iter().map(|e| e.2).collect();

        let mut row_ptr = vec![0usize; rows + 1];
        for &i in &row_idx {
            row_ptr[i + 1] += 1;
        }
        for i in 0..rows {
            row_ptr[i + 1] += row_ptr[i];
        }
        let mut fill = row_ptr.clone();
        let mut row_entries = vec![0usize; row_idx.len()];
        // Column-major traversal keeps each row's entries sorted by column.
        for (e, &i) in row_idx.iter().enumerate() {
            row_entries[fill[i]] = e;
            fill[i] += 1;
        }

        Ok(Self {
            rows,
            cols,
            pattern: Some(SparsePattern {
                col_ptr,
                row_idx,
                col_idx,
                weight,
                row_ptr,
                row_entries,
            }),
        })
    }

    /// Binary mask (weight 1) over the given cells.
    pub fn from_cells(
        rows: usize,
        cols: usize,
        cells: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Self> {
        Self::from_entries(rows, cols, cells.into_iter().map(|(i, j)| (i, j, 1.0)))
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_full(&self) -> bool {
        self.pattern.is_none()
    }

    pub(crate) fn pattern(&self) -> Option<&SparsePattern> {
        self.pattern.as_ref()
    }

    pub fn observed_count(&self) -> usize {
        match &self.pattern {
            None => self.rows * self.cols,
            Some(p) => p.row_idx.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.observed_count() == 0
    }

    /// Weight of a cell (0 if unobserved).
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        match &self.pattern {
            None => 1.0,
            Some(p) => {
                let (lo, hi) = (p.col_ptr[j], p.col_ptr[j + 1]);
                match p.row_idx[lo..hi].binary_search(&i) {
                    Ok(k) => p.weight[lo + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.weight(i, j) > 0.0
    }

    /// Observed cells in column-major order.
    pub fn iter(&self) -> Box<dyn Iterator<Item = Observed> + '_> {
        match &self.pattern {
            None => {
                let rows = self.rows;
                Box::new((0..self.cols).flat_map(move |j| {
                    (0..rows).map(move |i| Observed {
                        row: i,
                        col: j,
                        weight: 1.0,
                    })
                }))
            }
            Some(p) => Box::new((0..self.cols).flat_map(move |j| {
                (p.col_ptr[j]..p.col_ptr[j + 1]).map(move |e| Observed {
                    row: p.row_idx[e],
                    col: j,
                    weight: p.weight[e],
                })
            })),
        }
    }

    /// Number of observed cells in each row.
    pub fn row_counts(&self) -> Vec<usize> {
        match &self.pattern {
            None => vec![self.cols; self.rows],
            Some(p) => p.row_ptr.windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }

    /// Number of observed cells in each column.
    pub fn col_counts(&self) -> Vec<usize> {
        match &self.pattern {
            None => vec![self.rows; self.cols],
            Some(p) => p.col_ptr.windows(2).map(|w| w[1] - w[0]).collect(),
        }
    }

    /// Restriction to a subset of rows (renumbered in the given order).
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        match &self.pattern {
            None => Ok(Self::full(rows.len(), self.cols)),
            Some(_) => {
                let mut new_index = vec![usize::MAX; self.rows];
                for (k, &i) in rows.iter().enumerate() {
                    new_index[i] = k;
                }
                let kept: Vec<_> = self
                    .iter()
                    .filter(|o| new_index[o.row] != usize::MAX)
                    .map(|o| (new_index[o.row], o.col, o.weight))
                    .collect();
                Self::from_entries(rows.len(), self.cols, kept)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_lookup_and_counts() {
        let m =
            ObservationMask::from_entries(3, 2, [(2, 1, 0.5), (0, 0, 1.0), (1, 1, 1.0)]).unwrap();
        assert_eq!(m.observed_count(), 3);
        assert_eq!(m.weight(2, 1), 0.5);
        assert_eq!(m.weight(1, 0), 0.0);
        assert_eq!(m.row_counts(), vec![1, 1, 1]);
        assert_eq!(m.col_counts(), vec![1, 2]);
        let order: Vec<_> = m.iter().map(|o| (o.row, o.col)).collect();
        assert_eq!(order, vec![(0, 0), (1, 1), (2, 1)]);
    }

    #[test]
    fn rejects_duplicates_bad_weights_and_out_of_range() {
        assert!(ObservationMask::from_cells(2, 2, [(0, 0), (0, 0)]).is_err());
        assert!(ObservationMask::from_entries(2, 2, [(0, 0, 0.0)]).is_err());
        assert!(ObservationMask::from_entries(2, 2, [(0, 0, 1.5)]).is_err());
        assert!(ObservationMask::from_cells(2, 2, [(2, 0)]).is_err());
    }

    #[test]
    fn full_sentinel_iterates_every_cell() {
        let m = ObservationMask::full(2, 3);
        assert_eq!(m.iter().count(), 6);
        assert!(m.contains(1, 2));
    }

    #[test]
    fn row_index_points_back_to_entries() {
        let m = ObservationMask::from_cells(3, 3, [(0, 2), (0, 0), (2, 1), (1, 1)]).unwrap();
        let p = m.pattern().unwrap();
        for i in 0..3 {
            for &e in &p.row_entries[p.row_ptr[i]..p.row_ptr[i + 1]] {
                assert_eq!(p.row_idx[e], i);
            }
        }
    }
}
