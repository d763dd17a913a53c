//! Bound inference and invertible data transforms.

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::DenseMatrix;
use crate::projection::BoundsVector;

#[derive(Clone, Debug, PartialEq)]
pub enum PreprocessRecord {
    /// `X'(i,:) = (X(i,:) − a_i) / (b_i − a_i)`.
    RowRescale { lower: Vec<f64>, upper: Vec<f64> },
    /// `X'(:,j) = (X(:,j) − min_j) / (max_j − min_j)`.
    ColumnRescale { min: Vec<f64>, max: Vec<f64> },
    /// `X' = X − cJ` on observed cells.
    Center { c: f64 },
}

impl PreprocessRecord {
    pub fn kind(&self) -> &'static str {
        match self {
            PreprocessRecord::RowRescale { .. } => "row_rescale",
            PreprocessRecord::ColumnRescale { .. } => "column_rescale",
            PreprocessRecord::Center { .. } => "center",
        }
    }

    /// Undoes the transform on a data matrix.
    pub fn invert(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        match self {
            PreprocessRecord::RowRescale { lower, upper } => {
                if x.rows() != lower.len() {
                    return Err(Error::shape("invert", "row count differs from the record"));
                }
                Ok(DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
                    lower[i] + x[(i, j)] * (upper[i] - lower[i])
                }))
            }
            PreprocessRecord::ColumnRescale { min, max } => {
                if x.cols() != min.len() {
                    return Err(Error::shape(
                        "invert",
                        "column count differs from the record",
                    ));
                }
                Ok(DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| {
                    min[j] + x[(i, j)] * (max[j] - min[j])
                }))
            }
            PreprocessRecord::Center { c } => Ok(x.add_scalar(*c)),
        }
    }
}

/// Per-row min and max over observed entries.
pub fn infer_bounds(x: &DenseMatrix, mask: &ObservationMask) -> Result<BoundsVector> {
    if mask.shape() != x.shape() {
        return Err(Error::shape("infer_bounds", "mask and X differ in shape"));
    }
    let m = x.rows();
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for o in mask.iter() {
        let v = x[(o.row, o.col)];
        if !v.is_finite() {
            return Err(Error::Numerical(format!(
                "non-finite value at ({}, {})",
                o.row, o.col
            )));
        }
        lo[o.row] = lo[o.row].min(v);
        hi[o.row] = hi[o.row].max(v);
    }
    if let Some(i) = lo.iter().position(|v| v.is_infinite()) {
        return Err(Error::EmptyMask(format!("row {i} has no observed entries")));
    }
    let bounds = BoundsVector::new(lo, hi)?;
    let degenerate = bounds.degenerate_rows();
    if !degenerate.is_empty() {
        log::warn!(
            "{} constant rows (a_i = b_i), first is row {}",
            degenerate.len(),
            degenerate[0]
        );
    }
    Ok(bounds)
}

/// Maps each row from `[a_i, b_i]` onto `[0, 1]`.
///
/// A BSSMF `(W, H)` for `[a, b]` corresponds to `(W', H)` for `[0, 1]^m`
/// with `W'(i,:) = (W(i,:) − a_i)/(b_i − a_i)`; use [`rescale_factor_rows`].
pub fn rescale_rows_to_unit(
    x: &DenseMatrix,
    bounds: &BoundsVector,
) -> Result<(DenseMatrix, PreprocessRecord)> {
    if x.rows() != bounds.len() {
        return Err(Error::shape(
            "rescale_rows_to_unit",
            "bounds do not match X rows",
        ));
    }
    if !bounds.is_finite() {
        return Err(Error::Config("row rescaling needs finite bounds".into()));
    }
    if let Some(&i) = bounds.degenerate_rows().first() {
        return Err(Error::Degenerate(format!(
            "row {i} has a_i = b_i; remove constant rows first"
        )));
    }
    let record = PreprocessRecord::RowRescale {
        lower: bounds.lower().to_vec(),
        upper: bounds.upper().to_vec(),
    };
    Ok((rescale_factor_rows(x, bounds)?, record))
}

/// `(W − aeᵀ) / ((b − a)eᵀ)` row by row; applies equally to data and to `W`.
pub fn rescale_factor_rows(w: &DenseMatrix, bounds: &BoundsVector) -> Result<DenseMatrix> {
    if w.rows() != bounds.len() {
        return Err(Error::shape(
            "rescale_factor_rows",
            "bounds do not match rows",
        ));
    }
    let (a, b) = (bounds.lower(), bounds.upper());
    Ok(DenseMatrix::from_fn(w.rows(), w.cols(), |i, j| {
        (w[(i, j)] - a[i]) / (b[i] - a[i])
    }))
}

/// Rows kept by [`remove_constant_rows`] plus what is needed to rebuild the
/// dropped ones.
#[derive(Clone, Debug, PartialEq)]
pub struct RowMap {
    pub original_rows: usize,
    /// Original index of each kept row.
    pub kept: Vec<usize>,
    /// `(original index, constant value)` of each dropped row.
    pub removed: Vec<(usize, f64)>,
}

impl RowMap {
    /// Reinserts the dropped rows into a factor solved on the reduced data:
    /// each constant row `c` becomes `c` in every column.
    pub fn reinsert(&self, w: &DenseMatrix) -> Result<DenseMatrix> {
        if w.rows() != self.kept.len() {
            return Err(Error::shape(
                "reinsert",
                "factor rows differ from the kept rows",
            ));
        }
        let mut out = DenseMatrix::zeros(self.original_rows, w.cols());
        for (k, &i) in self.kept.iter().enumerate() {
            out.row_mut(i).copy_from_slice(w.row(k));
        }
        for &(i, c) in &self.removed {
            out.row_mut(i).fill(c);
        }
        Ok(out)
    }
}

/// Drops rows whose observed entries span at most `tol`.
pub fn remove_constant_rows(
    x: &DenseMatrix,
    mask: &ObservationMask,
    tol: f64,
) -> Result<(DenseMatrix, ObservationMask, RowMap)> {
    if !(tol >= 0.0) {
        return Err(Error::Config(format!("tolerance must be >= 0, got {tol}")));
    }
    let bounds = infer_bounds(x, mask)?;
    let mut kept = Vec::new();
    let mut removed = Vec::new();
    for i in 0..x.rows() {
        let (a, b) = (bounds.lower()[i], bounds.upper()[i]);
        if b - a <= tol {
            removed.push((i, a));
        } else {
            kept.push(i);
        }
    }
    if kept.is_empty() {
        return Err(Error::Degenerate("every row is constant".into()));
    }
    let map = RowMap {
        original_rows: x.rows(),
        kept,
        removed,
    };
    Ok((x.select_rows(&map.kept)?, mask.select_rows(&map.kept)?, map))
}

/// Per-column min-max normalization onto `[0, 1]` (image-style data prep).
pub fn rescale_columns_to_unit(x: &DenseMatrix) -> Result<(DenseMatrix, PreprocessRecord)> {
    let n = x.cols();
    let mut min = vec![f64::INFINITY; n];
    let mut max = vec![f64::NEG_INFINITY; n];
    for i in 0..x.rows() {
        for (j, &v) in x.row(i).iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    if let Some(j) = (0..n).find(|&j| min[j] == max[j]) {
        return Err(Error::Degenerate(format!("column {j} is constant")));
    }
    let out = DenseMatrix::from_fn(x.rows(), n, |i, j| (x[(i, j)] - min[j]) / (max[j] - min[j]));
    Ok((out, PreprocessRecord::ColumnRescale { min, max }))
}

/// Subtracts the mean of the observed entries from every observed cell.
/// Unobserved cells are left untouched.
pub fn center(
    x: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<(DenseMatrix, f64, PreprocessRecord)> {
    let c = crate::solver::observed_mean(x, mask)?;
    let mut out = x.clone();
    if mask.is_full() {
        out = out.add_scalar(-c);
    } else {
        for o in mask.iter() {
            out[(o.row, o.col)] -= c;
        }
    }
    Ok((out, c, PreprocessRecord::Center { c }))
}

/// Inverse of [`center`] restricted to observed cells.
pub fn uncenter(x: &DenseMatrix, mask: &ObservationMask, c: f64) -> Result<DenseMatrix> {
    if mask.shape() != x.shape() {
        return Err(Error::shape("uncenter", "mask and X differ in shape"));
    }
    if mask.is_full() {
        return Ok(x.add_scalar(c));
    }
    let mut out = x.clone();
    for o in mask.iter() {
        out[(o.row, o.col)] += c;
    }
    Ok(out)
}
