//! Model variants, factor pairs and solver configuration.

use std::fmt;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::projection::{
    project_box_in_place, project_nonnegative_in_place, project_simplex_columns_in_place,
    BoundsVector,
};

/// Column-sum tolerance for a column-stochastic `H`.
pub const SIMPLEX_SUM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum VariantKind {
    /// `W(:,k) ∈ [a,b]`, `H` column stochastic.
    Bssmf,
    /// `W ≥ 0`, `H ≥ 0`.
    Nmf,
    /// No constraints.
    Mf,
}

impl VariantKind {
    pub fn name(self) -> &'static str {
        match self {
            VariantKind::Bssmf => "bssmf",
            VariantKind::Nmf => "nmf",
            VariantKind::Mf => "mf",
        }
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "bssmf" => Ok(VariantKind::Bssmf),
            "nmf" => Ok(VariantKind::Nmf),
            "mf" => Ok(VariantKind::Mf),
            other => Err(Error::Config(format!("unknown variant '{other}'"))),
        }
    }
}

/// A model variant together with its feasible set for `W`.
///
/// The H-projection follows from the kind: simplex for BSSMF, nonnegative
/// orthant for NMF, none for MF.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelVariant {
    kind: VariantKind,
    bounds: BoundsVector,
}

impl ModelVariant {
    /// BSSMF with finite per-row bounds.
    pub fn bssmf(bounds: BoundsVector) -> Result<Self> {
        if !bounds.is_finite() {
            return Err(Error::Config("BSSMF requires finite bounds".into()));
        }
        Ok(Self {
            kind: VariantKind::Bssmf,
            bounds,
        })
    }

    pub fn nmf(rows: usize) -> Self {
        Self {
            kind: VariantKind::Nmf,
            bounds: BoundsVector::nonnegative(rows),
        }
    }

    pub fn mf(rows: usize) -> Self {
        Self {
            kind: VariantKind::Mf,
            bounds: BoundsVector::unbounded(rows),
        }
    }

    /// Builds the variant of `kind`; `bounds` is only consulted for BSSMF.
    pub fn from_kind(kind: VariantKind, rows: usize, bounds: Option<BoundsVector>) -> Result<Self> {
        match kind {
            VariantKind::Bssmf => {
                Self::bssmf(bounds.ok_or_else(|| Error::Config("BSSMF needs bounds".into()))?)
            }
            VariantKind::Nmf => Ok(Self::nmf(rows)),
            VariantKind::Mf => Ok(Self::mf(rows)),
        }
    }

    pub fn kind(&self) -> VariantKind {
        self.kind
    }

    pub fn bounds(&self) -> &BoundsVector {
        &self.bounds
    }

    pub fn simplex_on_h(&self) -> bool {
        self.kind == VariantKind::Bssmf
    }

    pub fn rows(&self) -> usize {
        self.bounds.len()
    }

    /// Same variant with BSSMF bounds translated to `[a − c, b − c]`.
    pub(crate) fn shifted(&self, c: f64) -> Self {
        match self.kind {
            VariantKind::Bssmf => Self {
                kind: self.kind,
                bounds: self.bounds.shifted(c),
            },
            _ => self.clone(),
        }
    }

    pub(crate) fn project_w(&self, w: &mut DenseMatrix) {
        if self.kind != VariantKind::Mf {
            project_box_in_place(w, &self.bounds).expect("row count checked by solver");
        }
    }

    pub(crate) fn project_h(&self, h: &mut DenseMatrix) {
        match self.kind {
            VariantKind::Bssmf => project_simplex_columns_in_place(h),
            VariantKind::Nmf => project_nonnegative_in_place(h),
            VariantKind::Mf => {}
        }
    }

    /// Checks the variant's feasibility invariants on `(W, H)`.
    pub fn check_feasible(&self, factors: &FactorPair) -> Result<()> {
        let (w, h) = (&factors.w, &factors.h);
        if w.rows() != self.rows() {
            return Err(Error::shape(
                "check_feasible",
                format!("W has {} rows, variant has {}", w.rows(), self.rows()),
            ));
        }
        match self.kind {
            VariantKind::Mf => Ok(()),
            VariantKind::Nmf => {
                if w.min() < 0.0 || h.min() < 0.0 {
                    return Err(Error::Infeasible("NMF factor has a negative entry".into()));
                }
                Ok(())
            }
            VariantKind::Bssmf => {
                for i in 0..w.rows() {
                    if let Some(&v) = w.row(i).iter().find(|&&v| !self.bounds.contains(i, v)) {
                        return Err(Error::Infeasible(format!(
                            "W({i},:) entry {v} outside [{}, {}]",
                            self.bounds.lower()[i],
                            self.bounds.upper()[i]
                        )));
                    }
                }
                if h.min() < 0.0 {
                    return Err(Error::Infeasible("H has a negative entry".into()));
                }
                for (j, s) in h.column_sums().iter().enumerate() {
                    if (s - 1.0).abs() > SIMPLEX_SUM_TOL {
                        return Err(Error::Infeasible(format!("H(:,{j}) sums to {s}")));
                    }
                }
                Ok(())
            }
        }
    }
}

/// The decomposition `(W, H)` with `W` m×r and `H` r×n.
#[derive(Clone, Debug, PartialEq)]
pub struct FactorPair {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
}

impl FactorPair {
    pub fn new(w: DenseMatrix, h: DenseMatrix) -> Result<Self> {
        if w.cols() != h.rows() {
            return Err(Error::shape(
                "FactorPair",
                format!(
                    "W is {}x{}, H is {}x{}",
                    w.rows(),
                    w.cols(),
                    h.rows(),
                    h.cols()
                ),
            ));
        }
        Ok(Self { w, h })
    }

    pub fn rank(&self) -> usize {
        self.w.cols()
    }

    pub fn product(&self) -> DenseMatrix {
        self.w
            .matmul(&self.h)
            .expect("rank checked on construction")
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub rank: usize,
    pub max_outer: usize,
    pub max_inner_w: usize,
    pub max_inner_h: usize,
    /// Outer loop stops when the objective decreased by less than this
    /// fraction over the last 10 outer iterations. 0 disables the test.
    pub rel_tol: f64,
    /// `false` fixes the extrapolation weights at 0 (plain BCD / PALM).
    pub extrapolate: bool,
    /// Solve on mean-centered data (BSSMF only).
    pub center: bool,
    pub seed: u64,
    /// Evaluate and keep the objective after every outer iteration. When
    /// off, the objective is only evaluated as needed by `rel_tol` and the
    /// trace keeps the initial and final values.
    pub record_trace: bool,
}

/// Window (in outer iterations) of the relative-decrease stopping rule.
pub const STOP_WINDOW: usize = 10;

impl SolverConfig {
    /// Dense feature-extraction defaults: 500 outer, 20/20 inner iterations.
    pub fn new(rank: usize) -> Self {
        Self {
            rank,
            max_outer: 500,
            max_inner_w: 20,
            max_inner_h: 20,
            rel_tol: 1e-7,
            extrapolate: true,
            center: false,
            seed: 0,
            record_trace: true,
        }
    }

    /// Recommender defaults: 200 outer, 1/1 inner iterations, fixed budget.
    pub fn recommender(rank: usize) -> Self {
        Self {
            max_outer: 200,
            max_inner_w: 1,
            max_inner_h: 1,
            rel_tol: 0.0,
            ..Self::new(rank)
        }
    }

    pub fn validate(&self, rows: usize, cols: usize) -> Result<()> {
        if self.rank == 0 || self.rank > rows.min(cols) {
            return Err(Error::Config(format!(
                "rank {} must be in 1..={} for a {rows}x{cols} matrix",
                self.rank,
                rows.min(cols)
            )));
        }
        if self.max_outer == 0 || self.max_inner_w == 0 || self.max_inner_h == 0 {
            return Err(Error::Config("iteration caps must be >= 1".into()));
        }
        if !(self.rel_tol >= 0.0) {
            return Err(Error::Config(format!(
                "rel_tol must be >= 0, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }

    /// Stable textual form, used for hashing and logging.
    pub fn canonical(&self) -> String {
        format!(
            "rank={};max_outer={};max_inner_w={};max_inner_h={};rel_tol={:e};extrapolate={};center={};seed={};record_trace={}",
            self.rank,
            self.max_outer,
            self.max_inner_w,
            self.max_inner_h,
            self.rel_tol,
            self.extrapolate,
            self.center,
            self.seed,
            self.record_trace
        )
    }
}

impl fmt::Display for SolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.canonical().replace(';', " "))
    }
}
