//! Inertial block-coordinate solver for `min ½‖M∘(X − WH)‖²_F`.
//!
//! Each outer iteration runs `max_inner_w` extrapolated projected-gradient
//! steps on `W`, refreshes `L_H = ‖WᵀW‖₂`, runs `max_inner_h` steps on `H`,
//! then refreshes `L_W = ‖HHᵀ‖₂`. The Nesterov counters `α₁` (W) and `α₂` (H)
//! persist across outer iterations; the extrapolation weight is
//! `β = min((α₀ − 1)/α, 0.9999·√(L_prev/L))`. With `extrapolate = false`
//! every β is 0 and the method is plain PALM.
//!
//! The Lipschitz constants of the unmasked problem are kept under masking:
//! they upper-bound the masked ones, so the steps stay valid.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kernels::{
    gradient_h, gradient_w, objective, spectral_norm, SPECTRAL_MAX_ITERS, SPECTRAL_TOL,
};
use crate::mask::ObservationMask;
use crate::matrix::DenseMatrix;
use crate::model::{FactorPair, ModelVariant, SolverConfig, VariantKind, STOP_WINDOW};

const BETA_CAP: f64 = 0.9999;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    MaxIters,
    TolReached,
}

impl StopReason {
    pub fn name(self) -> &'static str {
        match self {
            StopReason::MaxIters => "max_iters",
            StopReason::TolReached => "tol_reached",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveReport {
    /// Objective before the first iteration, then after every outer iteration.
    pub objective_trace: Vec<f64>,
    pub outer_iterations: usize,
    /// `(L_W, L_H)` aligned with `objective_trace`.
    pub lipschitz_trace: Vec<(f64, f64)>,
    pub wall_time: f64,
    pub stop_reason: StopReason,
    /// Centering constant used, 0 for plain solves.
    pub offset: f64,
}

impl SolveReport {
    pub fn final_objective(&self) -> f64 {
        *self
            .objective_trace
            .last()
            .expect("trace holds the initial objective")
    }
}

/// Progress snapshot passed to observers after every outer iteration.
pub struct IterationInfo<'a> {
    pub iteration: usize,
    /// `None` when the trace is not recorded and the stopping rule is off.
    pub objective: Option<f64>,
    pub lipschitz: (f64, f64),
    /// Factors in the caller's (uncentered) coordinates.
    pub factors: &'a FactorPair,
}

/// Mutable state of the inertial scheme.
#[derive(Clone, Debug)]
pub struct SolverState {
    pub alpha_w: f64,
    pub alpha_h: f64,
    pub w_old: DenseMatrix,
    pub h_old: DenseMatrix,
    pub lw: f64,
    pub lw_prev: f64,
    pub lh: f64,
    pub lh_prev: f64,
    pub beta_w: f64,
    pub beta_h: f64,
    /// Lower bound applied to both Lipschitz constants.
    pub l_floor: f64,
    pub extrapolate: bool,
}

impl SolverState {
    /// Initial state: α₁ = α₂ = 1, old iterates equal to the start point,
    /// `L_prev = L` for both blocks.
    pub fn new(x: &DenseMatrix, factors: &FactorPair, extrapolate: bool) -> Result<Self> {
        let l_floor = lipschitz_floor(x);
        let lw = gram_norm(&factors.h.transpose(), l_floor)?;
        let lh = gram_norm(&factors.w, l_floor)?;
        Ok(Self {
            alpha_w: 1.0,
            alpha_h: 1.0,
            w_old: factors.w.clone(),
            h_old: factors.h.clone(),
            lw,
            lw_prev: lw,
            lh,
            lh_prev: lh,
            beta_w: 0.0,
            beta_h: 0.0,
            l_floor,
            extrapolate,
        })
    }

    /// Recomputes `L_H = ‖WᵀW‖₂`.
    pub fn refresh_lh(&mut self, w: &DenseMatrix) -> Result<()> {
        self.lh = gram_norm(w, self.l_floor)?;
        Ok(())
    }

    /// Recomputes `L_W = ‖HHᵀ‖₂`.
    pub fn refresh_lw(&mut self, h: &DenseMatrix) -> Result<()> {
        self.lw = gram_norm(&h.transpose(), self.l_floor)?;
        Ok(())
    }

    /// `inner` extrapolated projected-gradient steps on `W` with `H` fixed.
    pub fn update_w_block(
        &mut self,
        x: &DenseMatrix,
        mask: &ObservationMask,
        variant: &ModelVariant,
        factors: &mut FactorPair,
        inner: usize,
    ) -> Result<()> {
        for _ in 0..inner {
            let a0 = self.alpha_w;
            self.alpha_w = next_alpha(a0);
            self.beta_w = if self.extrapolate {
                beta(a0, self.alpha_w, self.lw_prev, self.lw)
            } else {
                0.0
            };
            let w_bar = extrapolate(&factors.w, &self.w_old, self.beta_w);
            self.w_old.clone_from(&factors.w);
            let grad = gradient_w(x, &w_bar, &factors.h, mask)?;
            let mut w = gradient_step(w_bar, &grad, self.lw);
            variant.project_w(&mut w);
            factors.w = w;
            self.lw_prev = self.lw;
        }
        Ok(())
    }

    /// `inner` extrapolated projected-gradient steps on `H` with `W` fixed.
    pub fn update_h_block(
        &mut self,
        x: &DenseMatrix,
        mask: &ObservationMask,
        variant: &ModelVariant,
        factors: &mut FactorPair,
        inner: usize,
    ) -> Result<()> {
        for _ in 0..inner {
            let a0 = self.alpha_h;
            self.alpha_h = next_alpha(a0);
            self.beta_h = if self.extrapolate {
                beta(a0, self.alpha_h, self.lh_prev, self.lh)
            } else {
                0.0
            };
            let h_bar = extrapolate(&factors.h, &self.h_old, self.beta_h);
            self.h_old.clone_from(&factors.h);
            let grad = gradient_h(x, &factors.w, &h_bar, mask)?;
            let mut h = gradient_step(h_bar, &grad, self.lh);
            variant.project_h(&mut h);
            factors.h = h;
            self.lh_prev = self.lh;
        }
        Ok(())
    }
}

/// `α_new = (1 + √(1 + 4α₀²)) / 2`.
pub fn next_alpha(a0: f64) -> f64 {
    (1.0 + (1.0 + 4.0 * a0 * a0).sqrt()) / 2.0
}

/// `min((α₀ − 1)/α_new, 0.9999·√(L_prev/L))`.
pub fn beta(a0: f64, a_new: f64, l_prev: f64, l: f64) -> f64 {
    ((a0 - 1.0) / a_new).min(BETA_CAP * (l_prev / l).sqrt())
}

fn extrapolate(cur: &DenseMatrix, old: &DenseMatrix, beta: f64) -> DenseMatrix {
    if beta == 0.0 {
        return cur.clone();
    }
    let mut out = cur.clone();
    for (o, (&c, &p)) in out
        .as_mut_slice()
        .iter_mut()
        .zip(cur.as_slice().iter().zip(old.as_slice()))
    {
        *o = c + beta * (c - p);
    }
    out
}

fn gradient_step(mut point: DenseMatrix, grad: &DenseMatrix, l: f64) -> DenseMatrix {
    for (p, g) in point.as_mut_slice().iter_mut().zip(grad.as_slice()) {
        *p -= g / l;
    }
    point
}

/// `max(‖AᵀA‖₂, floor)`.
fn gram_norm(a: &DenseMatrix, floor: f64) -> Result<f64> {
    Ok(spectral_norm(&a.gram(), SPECTRAL_TOL, SPECTRAL_MAX_ITERS)?.max(floor))
}

/// `1e-12 · max(1, ‖X‖²_F / (m·n))`.
fn lipschitz_floor(x: &DenseMatrix) -> f64 {
    let mean_sq = x.frobenius_norm_sq() / (x.rows() * x.cols()) as f64;
    1e-12 * mean_sq.max(1.0)
}

fn check_problem(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
) -> Result<()> {
    let (m, n) = x.shape();
    if mask.shape() != (m, n) {
        return Err(Error::shape(
            "solve",
            format!("X is {m}x{n}, mask is {}x{}", mask.rows(), mask.cols()),
        ));
    }
    if variant.rows() != m {
        return Err(Error::shape(
            "solve",
            format!("X has {m} rows, bounds have {}", variant.rows()),
        ));
    }
    config.validate(m, n)?;
    if let Some(o) = mask.iter().find(|o| !x[(o.row, o.col)].is_finite()) {
        return Err(Error::Numerical(format!(
            "non-finite observed value at ({}, {})",
            o.row, o.col
        )));
    }
    Ok(())
}

/// Random feasible starting point.
///
/// `W(i,k) ~ U[a_i, b_i]` for finite bounds (the constant when `a_i = b_i`),
/// `U[0,1]` clamped to the bounds otherwise; `H ~ U[0,1]` then projected
/// with the variant's H-projection. Draws W row-major, then H row-major.
pub fn initialize(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
) -> Result<FactorPair> {
    check_problem(x, mask, variant, config)?;
    let (m, n) = x.shape();
    let r = config.rank;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let (lo, hi) = (variant.bounds().lower(), variant.bounds().upper());
    let mut w = DenseMatrix::zeros(m, r);
    for i in 0..m {
        for k in 0..r {
            let u: f64 = rng.gen();
            w[(i, k)] = if lo[i].is_finite() && hi[i].is_finite() {
                if lo[i] == hi[i] {
                    lo[i]
                } else {
                    (lo[i] + u * (hi[i] - lo[i])).clamp(lo[i], hi[i])
                }
            } else {
                u.clamp(lo[i], hi[i])
            };
        }
    }
    let mut h = DenseMatrix::from_fn(r, n, |_, _| rng.gen::<f64>());
    variant.project_h(&mut h);
    FactorPair::new(w, h)
}

/// Number of observed entries outside their row's bounds.
fn count_out_of_bounds(x: &DenseMatrix, mask: &ObservationMask, variant: &ModelVariant) -> usize {
    let b = variant.bounds();
    mask.iter()
        .filter(|o| !b.contains(o.row, x[(o.row, o.col)]))
        .count()
}

/// Fits the factorization from a seeded random start.
///
/// Dispatches to [`solve_centered`] when `config.center` is set.
pub fn solve(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
) -> Result<(FactorPair, SolveReport)> {
    solve_observed(x, mask, variant, config, &mut |_| {})
}

/// [`solve`] with a per-outer-iteration callback.
pub fn solve_observed(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
    observer: &mut dyn FnMut(&IterationInfo),
) -> Result<(FactorPair, SolveReport)> {
    if config.center {
        let c = observed_mean(x, mask)?;
        return solve_shifted(x, mask, variant, config, c, observer);
    }
    let init = initialize(x, mask, variant, config)?;
    solve_from(x, mask, variant, config, init, observer)
}

/// Runs the solver from a given feasible start.
pub fn solve_from(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
    init: FactorPair,
    observer: &mut dyn FnMut(&IterationInfo),
) -> Result<(FactorPair, SolveReport)> {
    check_problem(x, mask, variant, config)?;
    warn_out_of_bounds(x, mask, variant);
    run(x, x, mask, variant, variant, config, init, 0.0, observer)
}

/// Solves on `X − cJ` with bounds `[a − c, b − c]` where `c` is the mean of
/// the observed entries, then shifts `W` back. BSSMF only.
pub fn solve_centered(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
) -> Result<(FactorPair, SolveReport)> {
    let c = observed_mean(x, mask)?;
    solve_shifted(x, mask, variant, config, c, &mut |_| {})
}

/// Solves on `X − cJ` for an explicit `c`; objectives are reported in the
/// original coordinates. The random start is drawn in original coordinates,
/// so plain and shifted runs with the same seed start from the same point.
pub fn solve_shifted(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
    c: f64,
    observer: &mut dyn FnMut(&IterationInfo),
) -> Result<(FactorPair, SolveReport)> {
    if variant.kind() != VariantKind::Bssmf {
        return Err(Error::UnsupportedVariant(format!(
            "centering requires column-stochastic H (BSSMF), got {}",
            variant.kind()
        )));
    }
    if !c.is_finite() {
        return Err(Error::Numerical(format!(
            "centering constant {c} is not finite"
        )));
    }
    let init = initialize(x, mask, variant, config)?;
    warn_out_of_bounds(x, mask, variant);
    let x_work = x.add_scalar(-c);
    let work_variant = variant.shifted(c);
    let mut work_init = init;
    work_init.w = work_init.w.add_scalar(-c);
    work_variant.project_w(&mut work_init.w);
    run(
        x,
        &x_work,
        mask,
        variant,
        &work_variant,
        config,
        work_init,
        c,
        observer,
    )
}

fn warn_out_of_bounds(x: &DenseMatrix, mask: &ObservationMask, variant: &ModelVariant) {
    if variant.kind() == VariantKind::Bssmf {
        let bad = count_out_of_bounds(x, mask, variant);
        if bad > 0 {
            log::warn!("{bad} observed entries lie outside the BSSMF bounds; proceeding");
        }
    }
}

/// Mean of the observed entries.
pub fn observed_mean(x: &DenseMatrix, mask: &ObservationMask) -> Result<f64> {
    if mask.shape() != x.shape() {
        return Err(Error::shape("observed_mean", "mask and X differ in shape"));
    }
    let count = mask.observed_count();
    if count == 0 {
        return Err(Error::EmptyMask(
            "cannot average zero observed entries".into(),
        ));
    }
    let mut sum = 0.0;
    for o in mask.iter() {
        sum += x[(o.row, o.col)];
    }
    Ok(sum / count as f64)
}

/// Maps working-coordinate factors back to the caller's coordinates.
fn to_original(work: &FactorPair, variant: &ModelVariant, c: f64) -> FactorPair {
    if c == 0.0 {
        return work.clone();
    }
    let mut w = work.w.add_scalar(c);
    // (a − c) + c can differ from a by one ulp.
    variant.project_w(&mut w);
    FactorPair {
        w,
        h: work.h.clone(),
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    x_orig: &DenseMatrix,
    x_work: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    work_variant: &ModelVariant,
    config: &SolverConfig,
    init: FactorPair,
    offset: f64,
    observer: &mut dyn FnMut(&IterationInfo),
) -> Result<(FactorPair, SolveReport)> {
    let start = Instant::now();
    if init.w.shape() != (x_orig.rows(), config.rank)
        || init.h.shape() != (config.rank, x_orig.cols())
    {
        return Err(Error::shape(
            "solve",
            "initial factors do not match X and rank",
        ));
    }
    if mask.is_empty() {
        return Ok((
            to_original(&init, variant, offset),
            SolveReport {
                objective_trace: vec![0.0],
                outer_iterations: 0,
                lipschitz_trace: vec![],
                wall_time: start.elapsed().as_secs_f64(),
                stop_reason: StopReason::TolReached,
                offset,
            },
        ));
    }

    let mut factors = init;
    let mut state = SolverState::new(x_work, &factors, config.extrapolate)?;
    let eval = |f: &FactorPair| -> Result<f64> {
        let orig = to_original(f, variant, offset);
        objective(x_orig, &orig.w, &orig.h, mask)
    };
    let need_objective = config.record_trace || config.rel_tol > 0.0;

    let mut trace = vec![eval(&factors)?];
    let mut lipschitz = vec![(state.lw, state.lh)];
    let mut stop_reason = StopReason::MaxIters;
    let mut outer = 0;
    let mut last_objective = trace[0];

    while outer < config.max_outer {
        if last_objective == 0.0 {
            stop_reason = StopReason::TolReached;
            break;
        }
        state.update_w_block(x_work, mask, work_variant, &mut factors, config.max_inner_w)?;
        state.refresh_lh(&factors.w)?;
        state.update_h_block(x_work, mask, work_variant, &mut factors, config.max_inner_h)?;
        state.refresh_lw(&factors.h)?;
        outer += 1;

        let f = if need_objective {
            let f = eval(&factors)?;
            if !f.is_finite() {
                return Err(Error::Numerical(format!(
                    "objective became {f} at outer iteration {outer}"
                )));
            }
            last_objective = f;
            trace.push(f);
            lipschitz.push((state.lw, state.lh));
            Some(f)
        } else {
            None
        };

        let original = to_original(&factors, variant, offset);
        observer(&IterationInfo {
            iteration: outer,
            objective: f,
            lipschitz: (state.lw, state.lh),
            factors: &original,
        });

        if config.rel_tol > 0.0 && trace.len() > STOP_WINDOW {
            let past = trace[trace.len() - 1 - STOP_WINDOW];
            let now = *trace.last().unwrap();
            if past - now < config.rel_tol * past {
                stop_reason = StopReason::TolReached;
                break;
            }
        }
    }

    if !need_objective {
        trace.push(eval(&factors)?);
        lipschitz.push((state.lw, state.lh));
    }
    let result = to_original(&factors, variant, offset);
    if !result.w.all_finite() || !result.h.all_finite() {
        return Err(Error::Numerical("factors contain non-finite values".into()));
    }
    Ok((
        result,
        SolveReport {
            objective_trace: trace,
            outer_iterations: outer,
            lipschitz_trace: lipschitz,
            wall_time: start.elapsed().as_secs_f64(),
            stop_reason,
            offset,
        },
    ))
}

/// Runs independent seeds and keeps the lowest final objective.
/// Ties go to the earliest seed in `seeds`.
pub fn solve_multistart(
    x: &DenseMatrix,
    mask: &ObservationMask,
    variant: &ModelVariant,
    config: &SolverConfig,
    seeds: &[u64],
) -> Result<(FactorPair, SolveReport, u64)> {
    if seeds.is_empty() {
        return Err(Error::Config("multi-start needs at least one seed".into()));
    }
    let runs: Vec<Result<(FactorPair, SolveReport)>> = seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SolverConfig {
                seed,
                ..config.clone()
            };
            solve(x, mask, variant, &cfg)
        })
        .collect();
    let mut best: Option<(FactorPair, SolveReport, u64)> = None;
    for (run, &seed) in runs.into_iter().zip(seeds) {
        let (f, rep) = run?;
        if best
            .as_ref()
            .is_none_or(|(_, b, _)| rep.final_objective() < b.final_objective())
        {
            best = Some((f, rep, seed));
        }
    }
    Ok(best.expect("at least one seed"))
}

/// Fits `H` with `W` frozen: `max_outer × max_inner_h` H-block steps on
/// `X − cJ` against `W − cJ` (pass `c = 0` for no shift).
pub fn fit_h(
    x: &DenseMatrix,
    mask: &ObservationMask,
    w: &DenseMatrix,
    variant: &ModelVariant,
    config: &SolverConfig,
    c: f64,
) -> Result<(DenseMatrix, SolveReport)> {
    let start = Instant::now();
    if c != 0.0 && variant.kind() != VariantKind::Bssmf {
        return Err(Error::UnsupportedVariant(
            "shifted H fit requires BSSMF".into(),
        ));
    }
    // The rank may exceed the number of test columns here; W fixes it.
    let relaxed = SolverConfig {
        rank: 1,
        ..config.clone()
    };
    check_problem(x, mask, variant, &relaxed)?;
    if w.shape() != (x.rows(), config.rank) {
        return Err(Error::shape("fit_h", "W does not match X rows and rank"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut h = DenseMatrix::from_fn(config.rank, x.cols(), |_, _| rng.gen::<f64>());
    variant.project_h(&mut h);
    let x_work = if c == 0.0 {
        x.clone()
    } else {
        x.add_scalar(-c)
    };
    let w_work = if c == 0.0 {
        w.clone()
    } else {
        w.add_scalar(-c)
    };
    let mut factors = FactorPair::new(w_work, h)?;
    let mut state = SolverState::new(&x_work, &factors, config.extrapolate)?;
    let eval = |h: &DenseMatrix| objective(x, w, h, mask);
    let mut trace = vec![eval(&factors.h)?];
    if !mask.is_empty() {
        for _ in 0..config.max_outer {
            state.update_h_block(&x_work, mask, variant, &mut factors, config.max_inner_h)?;
            if config.record_trace {
                trace.push(eval(&factors.h)?);
            }
        }
    }
    if !config.record_trace {
        trace.push(eval(&factors.h)?);
    }
    Ok((
        factors.h,
        SolveReport {
            objective_trace: trace,
            outer_iterations: config.max_outer,
            lipschitz_trace: vec![(state.lw, state.lh)],
            wall_time: start.elapsed().as_secs_f64(),
            stop_reason: StopReason::MaxIters,
            offset: c,
        },
    ))
}

/// `W(i,:)·H(:,j)` for each requested cell.
pub fn predict(factors: &FactorPair, cells: &[(usize, usize)]) -> Result<Vec<f64>> {
    let (m, n) = (factors.w.rows(), factors.h.cols());
    let r = factors.rank();
    cells
        .iter()
        .map(|&(i, j)| {
            if i >= m || j >= n {
                return Err(Error::shape(
                    "predict",
                    format!("cell ({i}, {j}) outside {m}x{n}"),
                ));
            }
            Ok((0..r).map(|k| factors.w[(i, k)] * factors.h[(k, j)]).sum())
        })
        .collect()
}

/// [`predict`] for a BSSMF model, checking that every prediction lies in its
/// row's bounds (up to round-off, then clamped exactly into them).
pub fn predict_bounded(
    factors: &FactorPair,
    variant: &ModelVariant,
    cells: &[(usize, usize)],
) -> Result<Vec<f64>> {
    let mut out = predict(factors, cells)?;
    if variant.kind() != VariantKind::Bssmf {
        return Ok(out);
    }
    let b = variant.bounds();
    for (p, &(i, _)) in out.iter_mut().zip(cells) {
        let (lo, hi) = (b.lower()[i], b.upper()[i]);
        let slack = 1e-9 * lo.abs().max(hi.abs()).max(1.0);
        if *p < lo - slack || *p > hi + slack {
            return Err(Error::Numerical(format!(
                "prediction {p} for row {i} outside [{lo}, {hi}]"
            )));
        }
        *p = p.clamp(lo, hi);
    }
    Ok(out)
}

/// `‖M∘(X − WH)‖_F / ‖M∘X‖_F`.
pub fn relative_error(
    x: &DenseMatrix,
    mask: &ObservationMask,
    factors: &FactorPair,
) -> Result<f64> {
    let f = objective(x, &factors.w, &factors.h, mask)?;
    let norm_sq: f64 = mask
        .iter()
        .map(|o| (o.weight * x[(o.row, o.col)]).powi(2))
        .sum();
    Ok((2.0 * f / norm_sq).sqrt())
}
