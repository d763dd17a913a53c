//! Identifiability diagnostics: the SSC necessary condition, MRSA with
//! optimal column matching, the SSMF gauge family, and synthetic
//! ground-truth generation.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::model::FactorPair;
use crate::projection::BoundsVector;

/// Default zero threshold, relative to `max |H|`.
pub const TOL_ZERO: f64 = 1e-9;
/// Singular values below `RANK_TOL · σ_max` count as zero.
pub const RANK_TOL: f64 = 1e-9;
/// Attempts allowed when drawing an H that passes the SSC check.
pub const MAX_SSC_ATTEMPTS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixRole {
    H,
    WStacked,
    WPlain,
}

impl MatrixRole {
    pub fn name(self) -> &'static str {
        match self {
            MatrixRole::H => "h",
            MatrixRole::WStacked => "w-stacked",
            MatrixRole::WPlain => "w-plain",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RowCheck {
    pub zero_count: usize,
    pub zero_set_rank: usize,
    pub passes: bool,
}

/// Result of the SSC necessary-condition check. Passing does not certify
/// the SSC itself, which is NP-hard to verify.
#[derive(Clone, Debug, PartialEq)]
pub struct SscReport {
    pub matrix_role: MatrixRole,
    pub per_row: Vec<RowCheck>,
    pub overall_pass: bool,
    pub tol_zero: f64,
}

impl SscReport {
    /// `row,zero_count,zero_set_rank,passes` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,zero_count,zero_set_rank,passes\n");
        for (k, r) in self.per_row.iter().enumerate() {
            out.push_str(&format!(
                "{k},{},{},{}\n",
                r.zero_count, r.zero_set_rank, r.passes
            ));
        }
        out
    }
}

/// Numerical rank by singular-value thresholding at `RANK_TOL · σ_max`.
pub fn numerical_rank(a: &DenseMatrix) -> usize {
    let m = DMatrix::from_row_slice(a.rows(), a.cols(), a.as_slice());
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOL * smax).count()
}

/// For each row `k`, the zero set `Z_k = {j : |H(k,j)| ≤ tol_zero·max|H|}`
/// must hold at least `r − 1` columns and `H(:, Z_k)` must have rank `r − 1`.
pub fn ssc_necessary_check(h: &DenseMatrix, tol_zero: f64, role: MatrixRole) -> Result<SscReport> {
    let r = h.rows();
    if r < 2 {
        return Err(Error::RankDeficient(format!(
            "the SSC check needs at least 2 rows, got {r}"
        )));
    }
    if !(tol_zero >= 0.0) {
        return Err(Error::Config(format!(
            "tol_zero must be >= 0, got {tol_zero}"
        )));
    }
    let thresh = tol_zero * h.max_abs();
    let per_row: Vec<RowCheck> = (0..r)
        .map(|k| {
            let zeros: Vec<usize> = (0..h.cols())
                .filter(|&j| h[(k, j)].abs() <= thresh)
                .collect();
            let zero_set_rank = if zeros.is_empty() {
                0
            } else {
                numerical_rank(&h.select_columns(&zeros).expect("nonempty column set"))
            };
            RowCheck {
                zero_count: zeros.len(),
                zero_set_rank,
                passes: zeros.len() >= r - 1 && zero_set_rank == r - 1,
            }
        })
        .collect();
    Ok(SscReport {
        matrix_role: role,
        overall_pass: per_row.iter().all(|c| c.passes),
        per_row,
        tol_zero,
    })
}

/// `[W − aeᵀ ; beᵀ − W]`, a 2m×r matrix. Its transpose is the matrix whose
/// SSC (together with that of `H`) makes the BSSMF identifiable.
pub fn stack_bound_slacks(w: &DenseMatrix, bounds: &BoundsVector) -> Result<DenseMatrix> {
    let m = w.rows();
    if bounds.len() != m {
        return Err(Error::shape("stack", "bounds do not match W rows"));
    }
    if !bounds.is_finite() {
        return Err(Error::Config("stacking needs finite bounds".into()));
    }
    if !bounds.contains_columns(w) {
        return Err(Error::Infeasible("W has entries outside [a, b]".into()));
    }
    let (a, b) = (bounds.lower(), bounds.upper());
    Ok(DenseMatrix::from_fn(2 * m, w.cols(), |i, k| {
        if i < m {
            w[(i, k)] - a[i]
        } else {
            b[i - m] - w[(i - m, k)]
        }
    }))
}

/// Recovers `W` from the top block of a stacked matrix.
pub fn unstack(stacked: &DenseMatrix, bounds: &BoundsVector) -> Result<DenseMatrix> {
    let m = bounds.len();
    if stacked.rows() != 2 * m {
        return Err(Error::shape("unstack", "expected 2m rows"));
    }
    let a = bounds.lower();
    Ok(DenseMatrix::from_fn(m, stacked.cols(), |i, k| {
        stacked[(i, k)] + a[i]
    }))
}

/// Mean-removed spectral angle in `[0, 100]`:
/// `(100/π)·arccos` of the cosine between the mean-centered vectors.
///
/// The angle is evaluated as `2·atan2(‖û − v̂‖, ‖û + v̂‖)` on the normalized
/// centered vectors, which equals the arccos form but keeps full relative
/// precision near 0 and 100 where arccos loses about half the digits.
pub fn mrsa(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() || u.is_empty() {
        return Err(Error::shape(
            "mrsa",
            format!("lengths {} and {}", u.len(), v.len()),
        ));
    }
    let n = u.len() as f64;
    let mu = u.iter().sum::<f64>() / n;
    let mv = v.iter().sum::<f64>() / n;
    let nu = u.iter().map(|a| (a - mu) * (a - mu)).sum::<f64>().sqrt();
    let nv = v.iter().map(|b| (b - mv) * (b - mv)).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::Degenerate(
            "MRSA is undefined for a constant vector".into(),
        ));
    }
    let (mut diff, mut sum) = (0.0, 0.0);
    for (&a, &b) in u.iter().zip(v) {
        let (a, b) = ((a - mu) / nu, (b - mv) / nv);
        diff += (a - b) * (a - b);
        sum += (a + b) * (a + b);
    }
    let angle = 2.0 * diff.sqrt().atan2(sum.sqrt());
    Ok((100.0 / PI * angle).clamp(0.0, 100.0))
}

/// Minimum-cost perfect assignment on a square cost matrix.
///
/// Returns `assignment[row] = column`. O(r³) shortest augmenting paths with
/// dual potentials.
pub fn hungarian(cost: &DenseMatrix) -> Result<Vec<usize>> {
    let n = cost.rows();
    if cost.cols() != n {
        return Err(Error::shape("hungarian", "cost matrix must be square"));
    }
    if !cost.all_finite() {
        return Err(Error::Numerical(
            "cost matrix has non-finite entries".into(),
        ));
    }
    // 1-based arrays; index 0 is the virtual root.
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[(i0 - 1, j - 1)] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0; n];
    for j in 1..=n {
        assignment[p[j] - 1] = j - 1;
    }
    Ok(assignment)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatchReport {
    /// `permutation[k]` is the estimated column matched to true column `k`.
    pub permutation: Vec<usize>,
    pub per_column_mrsa: Vec<f64>,
    pub mean_mrsa: f64,
}

impl MatchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("true_column,est_column,mrsa\n");
        for (k, (&p, &s)) in self
            .permutation
            .iter()
            .zip(&self.per_column_mrsa)
            .enumerate()
        {
            out.push_str(&format!("{k},{p},{s:.17e}\n"));
        }
        out.push_str(&format!("mean,,{:.17e}\n", self.mean_mrsa));
        out
    }
}

/// r×r matrix of MRSA between true column `k` and estimated column `l`.
pub fn mrsa_cost_matrix(w_true: &DenseMatrix, w_est: &DenseMatrix) -> Result<DenseMatrix> {
    if w_true.shape() != w_est.shape() {
        return Err(Error::shape(
            "match_and_score",
            format!("{:?} vs {:?}", w_true.shape(), w_est.shape()),
        ));
    }
    let r = w_true.cols();
    let t: Vec<Vec<f64>> = (0..r).map(|k| w_true.column(k)).collect();
    let e: Vec<Vec<f64>> = (0..r).map(|k| w_est.column(k)).collect();
    let mut cost = DenseMatrix::zeros(r, r);
    for k in 0..r {
        for l in 0..r {
            cost[(k, l)] = mrsa(&t[k], &e[l])?;
        }
    }
    Ok(cost)
}

/// Optimal column matching by MRSA and the resulting scores.
pub fn match_and_score(w_true: &DenseMatrix, w_est: &DenseMatrix) -> Result<MatchReport> {
    let cost = mrsa_cost_matrix(w_true, w_est)?;
    let permutation = hungarian(&cost)?;
    let per_column_mrsa: Vec<f64> = permutation
        .iter()
        .enumerate()
        .map(|(k, &l)| cost[(k, l)])
        .collect();
    let mean_mrsa = per_column_mrsa.iter().sum::<f64>() / per_column_mrsa.len() as f64;
    Ok(MatchReport {
        permutation,
        per_column_mrsa,
        mean_mrsa,
    })
}

/// Whether `eᵀ(DH) = eᵀ` (column sums within 1e-12) for `D = diag(d)`.
///
/// For a full-row-rank column-stochastic `H` this holds only for `D = I`.
pub fn scaling_ambiguity_check(h: &DenseMatrix, d: &[f64]) -> Result<bool> {
    let r = h.rows();
    if d.len() != r {
        return Err(Error::shape(
            "scaling_ambiguity_check",
            "D and H disagree on r",
        ));
    }
    if numerical_rank(h) < r {
        return Err(Error::RankDeficient("H must have full row rank".into()));
    }
    for j in 0..h.cols() {
        let s: f64 = (0..r).map(|k| h[(k, j)]).sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(Error::Infeasible(format!("H(:,{j}) sums to {s}")));
        }
    }
    Ok((0..h.cols()).all(|j| {
        let s: f64 = (0..r).map(|k| d[k] * h[(k, j)]).sum();
        (s - 1.0).abs() <= 1e-12
    }))
}

/// The SSMF gauge pair
/// `W(α) = W((1+α)I − (α/r)J)`, `H(α) = H/(1+α) + α/((1+α)r)·J`,
/// with `W(α)H(α) = WH` and `H(α)` column stochastic.
pub fn ssmf_gauge_transform(w: &DenseMatrix, h: &DenseMatrix, alpha: f64) -> Result<FactorPair> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!(
            "alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let r = h.rows();
    if w.cols() != r {
        return Err(Error::shape("gauge", "W and H disagree on r"));
    }
    let rf = r as f64;
    let mut wa = DenseMatrix::zeros(w.rows(), r);
    for i in 0..w.rows() {
        let s: f64 = w.row(i).iter().sum();
        for k in 0..r {
            wa[(i, k)] = (1.0 + alpha) * w[(i, k)] - alpha / rf * s;
        }
    }
    let floor = alpha / ((1.0 + alpha) * rf);
    let ha = h.map(|v| v / (1.0 + alpha) + floor);
    FactorPair::new(wa, ha)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticSpec {
    pub m: usize,
    pub n: usize,
    pub r: usize,
    pub h_zero_fraction: f64,
    pub p01: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            m: 100,
            n: 100,
            r: 10,
            h_zero_fraction: 0.30,
            p01: 0.0,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 || self.r < 2 || self.r > self.m.min(self.n) {
            return Err(Error::Config(format!(
                "need 2 <= r <= min(m, n), got m={} n={} r={}",
                self.m, self.n, self.r
            )));
        }
        for (name, v) in [("h_zero_fraction", self.h_zero_fraction), ("p01", self.p01)] {
            if !(0.0..1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1), got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub w: DenseMatrix,
    pub h: DenseMatrix,
    pub x: DenseMatrix,
    /// Number of H draws needed to pass the SSC check.
    pub attempts: usize,
}

/// Ground truth for the identifiability study.
///
/// `H`: uniform `[0,1]`, `⌊frac·r·n⌋` entries zeroed, all-zero columns
/// redrawn, columns normalized, redrawn until it passes the SSC necessary
/// check. `W`: uniform `[0,1]` with `⌊p01·m·r⌋` entries set to 0 or 1.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let (m, n, r) = (spec.m, spec.n, spec.r);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let zeros = (spec.h_zero_fraction * (r * n) as f64).floor() as usize;
    let mut h = None;
    let mut attempts = 0;
    while attempts < MAX_SSC_ATTEMPTS {
        attempts += 1;
        let cand = draw_h(&mut rng, r, n, zeros);
        if ssc_necessary_check(&cand, TOL_ZERO, MatrixRole::H)?.overall_pass {
            h = Some(cand);
            break;
        }
    }
    let h = h.ok_or(Error::SscRegeneration {
        seed: spec.seed,
        attempts: MAX_SSC_ATTEMPTS,
    })?;

    let mut w = DenseMatrix::from_fn(m, r, |_, _| rng.gen::<f64>());
    let pinned = (spec.p01 * (m * r) as f64).floor() as usize;
    for idx in sample(&mut rng, m * r, pinned) {
        w.as_mut_slice()[idx] = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
    }
    let x = w.matmul(&h)?;
    Ok(SyntheticData { w, h, x, attempts })
}

fn draw_h(rng: &mut ChaCha8Rng, r: usize, n: usize, zeros: usize) -> DenseMatrix {
    let mut h = DenseMatrix::from_fn(r, n, |_, _| rng.gen::<f64>());
    for idx in sample(rng, r * n, zeros) {
        h.as_mut_slice()[idx] = 0.0;
    }
    for j in 0..n {
        let mut col = h.column(j);
        while col.iter().all(|&v| v == 0.0) {
            col = (0..r).map(|_| rng.gen::<f64>()).collect();
            for idx in sample(rng, r, zeros * r / (r * n).max(1)) {
                col[idx] = 0.0;
            }
        }
        let s: f64 = col.iter().sum();
        col.iter_mut().for_each(|v| *v /= s);
        h.set_column(j, &col);
    }
    h
}

/// One grid cell of a pass-ratio experiment.
#[derive(Clone, Debug, PartialEq)]
pub struct PassRatioCell {
    pub dim: usize,
    pub rank: usize,
    pub runs: usize,
    pub passes: usize,
}

impl PassRatioCell {
    pub fn ratio(&self) -> f64 {
        if self.runs == 0 {
            0.0
        } else {
            self.passes as f64 / self.runs as f64
        }
    }
}

/// Runs `produce(dim, rank, seed)` for every cell and `runs` seeds, checks
/// each returned factor, and tallies the pass ratio. Cells run in parallel;
/// the seed of run `t` in cell `c` is `base_seed + c·runs + t`.
pub fn ssc_grid_experiment<F>(
    dims: &[usize],
    ranks: &[usize],
    runs: usize,
    base_seed: u64,
    tol_zero: f64,
    produce: F,
) -> Result<Vec<PassRatioCell>>
where
    F: Fn(usize, usize, u64) -> Result<DenseMatrix> + Sync,
{
    let cells: Vec<(usize, usize)> = dims
        .iter()
        .flat_map(|&d| ranks.iter().map(move |&r| (d, r)))
        .collect();
    cells
        .par_iter()
        .enumerate()
        .map(|(c, &(dim, rank))| {
            let mut passes = 0;
            for t in 0..runs {
                let seed = base_seed + (c * runs + t) as u64;
                let factor = produce(dim, rank, seed)?;
                if ssc_necessary_check(&factor, tol_zero, MatrixRole::H)?.overall_pass {
                    passes += 1;
                }
            }
            Ok(PassRatioCell {
                dim,
                rank,
                runs,
                passes,
            })
        })
        .collect()
}

/// `dim,rank,runs,passes,pass_ratio` CSV.
pub fn pass_ratio_csv(cells: &[PassRatioCell]) -> String {
    let mut out = String::from("dim,rank,runs,passes,pass_ratio\n");
    for c in cells {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            c.dim,
            c.rank,
            c.runs,
            c.passes,
            c.ratio()
        ));
    }
    out
}
