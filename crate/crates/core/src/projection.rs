//! Column-wise Euclidean projections onto the box `[a, b]` and onto the
//! probability simplex `Δ^r = {x ≥ 0, eᵀx = 1}`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::{DenseMatrix, PAR_THRESHOLD};

/// Per-row bounds `a ≤ b`. Infinite values encode the NMF and MF variants.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundsVector {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoundsVector {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() || lower.is_empty() {
            return Err(Error::shape(
                "BoundsVector",
                format!("lower has {} rows, upper has {}", lower.len(), upper.len()),
            ));
        }
        for (i, (&a, &b)) in lower.iter().zip(&upper).enumerate() {
            if a.is_nan() || b.is_nan() || a == f64::INFINITY || b == f64::NEG_INFINITY || a > b {
                return Err(Error::Config(format!(
                    "invalid bounds at row {i}: [{a}, {b}]"
                )));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(rows: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; rows], vec![hi; rows])
    }

    /// `[0, +∞)` on every row.
    pub fn nonnegative(rows: usize) -> Self {
        Self {
            lower: vec![0.0; rows],
            upper: vec![f64::INFINITY; rows],
        }
    }

    /// `(−∞, +∞)` on every row.
    pub fn unbounded(rows: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; rows],
            upper: vec![f64::INFINITY; rows],
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lower.is_empty()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_finite(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|v| v.is_finite())
    }

    /// Rows with `a_i = b_i`.
    pub fn degenerate_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| self.lower[i] == self.upper[i])
            .collect()
    }

    /// `[a − c, b − c]`.
    pub fn shifted(&self, c: f64) -> Self {
        Self {
            lower: self.lower.iter().map(|a| a - c).collect(),
            upper: self.upper.iter().map(|b| b - c).collect(),
        }
    }

    pub fn contains(&self, i: usize, value: f64) -> bool {
        self.lower[i] <= value && value <= self.upper[i]
    }

    /// Whether every column of `w` lies in the box (exactly).
    pub fn contains_columns(&self, w: &DenseMatrix) -> bool {
        w.rows() == self.len()
            && (0..w.rows()).all(|i| w.row(i).iter().all(|&v| self.contains(i, v)))
    }
}

/// `out(i,k) = clamp(V(i,k), a_i, b_i)`.
pub fn project_box(v: &DenseMatrix, bounds: &BoundsVector) -> Result<DenseMatrix> {
    let mut out = v.clone();
    project_box_in_place(&mut out, bounds)?;
    Ok(out)
}

pub fn project_box_in_place(v: &mut DenseMatrix, bounds: &BoundsVector) -> Result<()> {
    if v.rows() != bounds.len() {
        return Err(Error::shape(
            "project_box",
            format!("matrix has {} rows, bounds have {}", v.rows(), bounds.len()),
        ));
    }
    let cols = v.cols();
    for i in 0..v.rows() {
        let (a, b) = (bounds.lower[i], bounds.upper[i]);
        for x in &mut v.as_mut_slice()[i * cols..(i + 1) * cols] {
            *x = x.clamp(a, b);
        }
    }
    Ok(())
}

/// Projects one vector onto the probability simplex in place.
///
/// Sort-based thresholding: with `u` sorted descending, `k` is the largest
/// index with `u_k − (Σ_{j≤k} u_j − 1)/k > 0`, and the output is
/// `max(v − τ, 0)` with `τ = (Σ_{j≤k} u_j − 1)/k`.
pub fn project_simplex(v: &mut [f64], scratch: &mut Vec<f64>) {
    let r = v.len();
    if r == 1 {
        v[0] = 1.0;
        return;
    }
    scratch.clear();
    scratch.extend_from_slice(v);
    scratch.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (k, &u) in scratch.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            tau = t;
        } else {
            break;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - tau).max(0.0);
    }
}

/// Projects every column of an r×n matrix onto `Δ^r`.
pub fn project_simplex_columns(v: &DenseMatrix) -> DenseMatrix {
    let mut out = v.clone();
    project_simplex_columns_in_place(&mut out);
    out
}

pub fn project_simplex_columns_in_place(v: &mut DenseMatrix) {
    // Columns are strided in row-major storage; project the transpose row by row.
    let mut t = v.transpose();
    let r = t.cols();
    if t.rows() * r * 8 >= PAR_THRESHOLD {
        t.as_mut_slice()
            .par_chunks_mut(r)
            .for_each_init(Vec::new, |scratch, col| project_simplex(col, scratch));
    } else {
        let mut scratch = Vec::with_capacity(r);
        for col in t.as_mut_slice().chunks_mut(r) {
            project_simplex(col, &mut scratch);
        }
    }
    *v = t.transpose();
}

/// Clamps every entry at zero (the NMF projection for `H`).
pub fn project_nonnegative_in_place(v: &mut DenseMatrix) {
    for x in v.as_mut_slice() {
        *x = x.max(0.0);
    }
}

/// Largest vector length accepted by [`simplex_projection_oracle`].
pub const ORACLE_MAX_LEN: usize = 12;

/// Brute-force simplex projection by support enumeration.
///
/// For every nonempty support `S` the equality-constrained least-squares
/// minimizer is `x_S = v_S − (Σ v_S − 1)/|S|`; the feasible candidate with the
/// smallest distance to `v` wins. Exponential in the length, meant as a
/// reference for testing the sort-based routine.
pub fn simplex_projection_oracle(v: &[f64]) -> Result<Vec<f64>> {
    let r = v.len();
    if r == 0 || r > ORACLE_MAX_LEN {
        return Err(Error::Config(format!(
            "simplex oracle supports 1..={ORACLE_MAX_LEN} entries, got {r}"
        )));
    }
    let mut best: Option<(f64, Vec<f64>)> = None;
    for support in 1u32..(1 << r) {
        let members: Vec<usize> = (0..r).filter(|i| support & (1 << i) != 0).collect();
        let shift = (members.iter().map(|&i| v[i]).sum::<f64>() - 1.0) / members.len() as f64;
        let mut x = vec![0.0; r];
        let mut feasible = true;
        for &i in &members {
            x[i] = v[i] - shift;
            if x[i] < 0.0 {
                feasible = false;
                break;
            }
        }
        if !feasible {
            continue;
        }
        let dist: f64 = x.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
        if best.as_ref().is_none_or(|(d, _)| dist < *d) {
            best = Some((dist, x));
        }
    }
    Ok(best
        .expect("the single best coordinate is always feasible")
        .1)
}
