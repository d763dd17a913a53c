//! Numerical kernels of the masked objective `½‖M∘(X − WH)‖²_F`.
//!
//! With a sparse mask the product `WH` is only evaluated at observed cells.
//! Gradients are the exact derivatives of the weighted objective, so each
//! observed residual enters them multiplied by `M(i,j)²` (identical to the
//! `M∘(X − WH)` form for binary masks).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::{DenseMatrix, PAR_THRESHOLD};

/// `M ∘ (X − WH)` restricted to observed cells.
#[derive(Clone, Debug)]
pub struct MaskedResidual<'m> {
    mask: &'m ObservationMask,
    /// Row-major dense values for the full mask, mask (column-major) order otherwise.
    values: Vec<f64>,
}

impl<'m> MaskedResidual<'m> {
    pub fn mask(&self) -> &ObservationMask {
        self.mask
    }

    /// Values in storage order (dense row-major, or mask order when sparse).
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        match self.mask.pattern() {
            None => self.values[i * self.mask.cols() + j],
            Some(p) => {
                let (lo, hi) = (p.col_ptr[j], p.col_ptr[j + 1]);
                match p.row_idx[lo..hi].binary_search(&i) {
                    Ok(k) => self.values[lo + k],
                    Err(_) => 0.0,
                }
            }
        }
    }

    /// Dense matrix with zeros at unobserved cells.
    pub fn to_dense(&self) -> DenseMatrix {
        let (m, n) = self.mask.shape();
        match self.mask.pattern() {
            None => DenseMatrix::from_vec(m, n, self.values.clone()).expect("shape checked"),
            Some(p) => {
                let mut d = DenseMatrix::zeros(m, n);
                for (e, &v) in self.values.iter().enumerate() {
                    d[(p.row_idx[e], p.col_idx[e])] = v;
                }
                d
            }
        }
    }

    /// `½ Σ v²`, accumulated column by column into one accumulator.
    pub fn half_sum_sq(&self) -> f64 {
        let mut acc = 0.0;
        match self.mask.pattern() {
            None => {
                let (m, n) = self.mask.shape();
                for j in 0..n {
                    for i in 0..m {
                        let v = self.values[i * n + j];
                        acc += v * v;
                    }
                }
            }
            Some(_) => {
                for v in &self.values {
                    acc += v * v;
                }
            }
        }
        0.5 * acc
    }
}

fn check_dims(
    op: &'static str,
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<()> {
    let (m, n) = x.shape();
    if w.rows() != m || h.cols() != n || w.cols() != h.rows() || mask.shape() != (m, n) {
        return Err(Error::shape(
            op,
            format!(
                "X {m}x{n}, W {}x{}, H {}x{}, M {}x{}",
                w.rows(),
                w.cols(),
                h.rows(),
                h.cols(),
                mask.rows(),
                mask.cols()
            ),
        ));
    }
    Ok(())
}

/// Raw residuals `X − WH` at observed cells, scaled by `weight^power`.
fn weighted_residual(
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: &ObservationMask,
    power: i32,
) -> Vec<f64> {
    match mask.pattern() {
        None => {
            let wh = w.matmul(h).expect("dims checked");
            x.as_slice()
                .iter()
                .zip(wh.as_slice())
                .map(|(a, b)| a - b)
                .collect()
        }
        Some(p) => {
            let ht = h.transpose();
            let n = x.cols();
            let column = |j: usize| {
                let hj = ht.row(j);
                (p.col_ptr[j]..p.col_ptr[j + 1]).map(move |e| {
                    let i = p.row_idx[e];
                    let pred: f64 = w.row(i).iter().zip(hj).map(|(a, b)| a * b).sum();
                    let res = x[(i, j)] - pred;
                    match power {
                        0 => res,
                        1 => p.weight[e] * res,
                        _ => p.weight[e] * p.weight[e] * res,
                    }
                })
            };
            if p.row_idx.len() * w.cols() >= PAR_THRESHOLD {
                (0..n).into_par_iter().flat_map_iter(column).collect()
            } else {
                (0..n).flat_map(column).collect()
            }
        }
    }
}

/// `M ∘ (X − WH)` evaluated only at observed cells.
pub fn masked_residual<'m>(
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: &'m ObservationMask,
) -> Result<MaskedResidual<'m>> {
    check_dims("masked_residual", x, w, h, mask)?;
    Ok(MaskedResidual {
        mask,
        values: weighted_residual(x, w, h, mask, 1),
    })
}

/// `½ Σ_observed (M(i,j)·(X(i,j) − (WH)(i,j)))²`.
pub fn objective(
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<f64> {
    Ok(masked_residual(x, w, h, mask)?.half_sum_sq())
}

/// `∇_W = −(M∘M∘(X − WH)) Hᵀ`, an m×r matrix.
pub fn gradient_w(
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<DenseMatrix> {
    check_dims("gradient_w", x, w, h, mask)?;
    let r = w.cols();
    let res = weighted_residual(x, w, h, mask, 2);
    let ht = h.transpose();
    let mut g = DenseMatrix::zeros(w.rows(), r);
    match mask.pattern() {
        None => {
            let n = x.cols();
            let kernel = |(i, g_row): (usize, &mut [f64])| {
                let res_row = &res[i * n..(i + 1) * n];
                for (j, &v) in res_row.iter().enumerate() {
                    for (gk, hk) in g_row.iter_mut().zip(ht.row(j)) {
                        *gk -= v * hk;
                    }
                }
            };
            if x.rows() * n * r >= PAR_THRESHOLD {
                g.as_mut_slice()
                    .par_chunks_mut(r)
                    .enumerate()
                    .for_each(kernel);
            } else {
                g.as_mut_slice().chunks_mut(r).enumerate().for_each(kernel);
            }
        }
        Some(p) => {
            let kernel = |(i, g_row): (usize, &mut [f64])| {
                for &e in &p.row_entries[p.row_ptr[i]..p.row_ptr[i + 1]] {
                    let v = res[e];
                    for (gk, hk) in g_row.iter_mut().zip(ht.row(p.col_idx[e])) {
                        *gk -= v * hk;
                    }
                }
            };
            if res.len() * r >= PAR_THRESHOLD {
                g.as_mut_slice()
                    .par_chunks_mut(r)
                    .enumerate()
                    .for_each(kernel);
            } else {
                g.as_mut_slice().chunks_mut(r).enumerate().for_each(kernel);
            }
        }
    }
    Ok(g)
}

/// `∇_H = −Wᵀ(M∘M∘(X − WH))`, an r×n matrix.
pub fn gradient_h(
    x: &DenseMatrix,
    w: &DenseMatrix,
    h: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<DenseMatrix> {
    check_dims("gradient_h", x, w, h, mask)?;
    let r = w.cols();
    let n = x.cols();
    let res = weighted_residual(x, w, h, mask, 2);
    // Built transposed (n×r) so each output column is a contiguous task.
    let mut gt = DenseMatrix::zeros(n, r);
    match mask.pattern() {
        None => {
            let m = x.rows();
            let kernel = |(j, g_row): (usize, &mut [f64])| {
                for i in 0..m {
                    let v = res[i * n + j];
                    for (gk, wk) in g_row.iter_mut().zip(w.row(i)) {
                        *gk -= v * wk;
                    }
                }
            };
            if m * n * r >= PAR_THRESHOLD {
                gt.as_mut_slice()
                    .par_chunks_mut(r)
                    .enumerate()
                    .for_each(kernel);
            } else {
                gt.as_mut_slice().chunks_mut(r).enumerate().for_each(kernel);
            }
        }
        Some(p) => {
            let kernel = |(j, g_row): (usize, &mut [f64])| {
                for e in p.col_ptr[j]..p.col_ptr[j + 1] {
                    let v = res[e];
                    for (gk, wk) in g_row.iter_mut().zip(w.row(p.row_idx[e])) {
                        *gk -= v * wk;
                    }
                }
            };
            if res.len() * r >= PAR_THRESHOLD {
                gt.as_mut_slice()
                    .par_chunks_mut(r)
                    .enumerate()
                    .for_each(kernel);
            } else {
                gt.as_mut_slice().chunks_mut(r).enumerate().for_each(kernel);
            }
        }
    }
    Ok(gt.transpose())
}

pub const SPECTRAL_TOL: f64 = 1e-9;
pub const SPECTRAL_MAX_ITERS: usize = 1000;

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
///
/// Starts from the normalized all-ones vector. If that start is orthogonal
/// to the dominant eigenspace (its Rayleigh quotient vanishes while the trace
/// does not), restarts from a fixed pseudo-random vector drawn with seed 0.
/// Stops when successive Rayleigh quotients agree to `tol` relative, or
/// returns the last quotient after `max_iters` iterations.
pub fn spectral_norm(a: &DenseMatrix, tol: f64, max_iters: usize) -> Result<f64> {
    let n = a.rows();
    if a.cols() != n {
        return Err(Error::shape(
            "spectral_norm",
            format!("expected a square matrix, got {}x{}", n, a.cols()),
        ));
    }
    if !(tol > 0.0) {
        return Err(Error::Config(format!(
            "spectral_norm tol must be > 0, got {tol}"
        )));
    }
    let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
    if trace <= 0.0 && a.max_abs() == 0.0 {
        return Ok(0.0);
    }

    let mut v = vec![1.0 / (n as f64).sqrt(); n];
    let mut av = mat_vec(a, &v);
    let mut rq = dot(&v, &av);
    if rq.abs() <= 1e-12 * trace.abs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        v = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        av = mat_vec(a, &v);
        rq = dot(&v, &av);
    }

    for _ in 0..max_iters {
        let nav = norm(&av);
        if nav == 0.0 {
            return Ok(rq.max(0.0));
        }
        v = av.iter().map(|x| x / nav).collect();
        av = mat_vec(a, &v);
        let next = dot(&v, &av);
        let converged = (next - rq).abs() <= tol * next.abs();
        rq = next;
        if converged {
            break;
        }
    }
    Ok(rq.max(0.0))
}

fn mat_vec(a: &DenseMatrix, v: &[f64]) -> Vec<f64> {
    (0..a.rows()).map(|i| dot(a.row(i), v)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random(m: usize, n: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        DenseMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0))
    }

    fn random_mask(
        m: usize,
        n: usize,
        p: f64,
        rng: &mut ChaCha8Rng,
        weighted: bool,
    ) -> ObservationMask {
        let mut cells = Vec::new();
        for i in 0..m {
            for j in 0..n {
                if rng.gen_bool(p) {
                    let w = if weighted {
                        rng.gen_range(0.1..=1.0)
                    } else {
                        1.0
                    };
                    cells.push((i, j, w));
                }
            }
        }
        ObservationMask::from_entries(m, n, cells).unwrap()
    }

    /// Independent triple loop over the dense definition.
    fn naive_objective(
        x: &DenseMatrix,
        w: &DenseMatrix,
        h: &DenseMatrix,
        mask: &ObservationMask,
    ) -> f64 {
        let mut s = 0.0;
        for i in 0..x.rows() {
            for j in 0..x.cols() {
                let mut p = 0.0;
                for k in 0..w.cols() {
                    p += w[(i, k)] * h[(k, j)];
                }
                let d = mask.weight(i, j) * (x[(i, j)] - p);
                s += d * d;
            }
        }
        0.5 * s
    }

    #[test]
    fn scalar_objective() {
        let x = DenseMatrix::from_rows(&[[2.0]]).unwrap();
        let w = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        let h = DenseMatrix::from_rows(&[[1.0]]).unwrap();
        let f = objective(&x, &w, &h, &ObservationMask::full(1, 1)).unwrap();
        assert_eq!(f, 0.5);
    }

    #[test]
    fn objective_matches_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (x, w, h) = (
            random(5, 4, &mut rng),
            random(5, 2, &mut rng),
            random(2, 4, &mut rng),
        );
        for mask in [
            ObservationMask::full(5, 4),
            random_mask(5, 4, 0.6, &mut rng, true),
        ] {
            let f = objective(&x, &w, &h, &mask).unwrap();
            let g = naive_objective(&x, &w, &h, &mask);
            assert!((f - g).abs() <= 1e-12 * g.abs().max(1e-300), "{f} vs {g}");
        }
    }

    #[test]
    fn exact_factorization_has_zero_residual_and_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (w, h) = (random(6, 3, &mut rng), random(3, 5, &mut rng));
        let x = w.matmul(&h).unwrap();
        let mask = random_mask(6, 5, 0.5, &mut rng, false);
        for m in [&mask, &ObservationMask::full(6, 5)] {
            let r = masked_residual(&x, &w, &h, m).unwrap();
            assert!(r.values().iter().all(|v| v.abs() < 1e-14));
            assert!(gradient_w(&x, &w, &h, m).unwrap().max_abs() < 1e-13);
            assert!(gradient_h(&x, &w, &h, m).unwrap().max_abs() < 1e-13);
        }
    }

    #[test]
    fn empty_mask_is_vacuous() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (x, w, h) = (
            random(3, 3, &mut rng),
            random(3, 2, &mut rng),
            random(2, 3, &mut rng),
        );
        let mask = ObservationMask::from_cells(3, 3, []).unwrap();
        let r = masked_residual(&x, &w, &h, &mask).unwrap();
        assert!(r.values().is_empty());
        assert_eq!(r.half_sum_sq(), 0.0);
        assert_eq!(gradient_w(&x, &w, &h, &mask).unwrap().max_abs(), 0.0);
        assert_eq!(gradient_h(&x, &w, &h, &mask).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn full_mask_residual_is_dense_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (x, w, h) = (
            random(4, 3, &mut rng),
            random(4, 2, &mut rng),
            random(2, 3, &mut rng),
        );
        let full = ObservationMask::full(4, 3);
        let r = masked_residual(&x, &w, &h, &full).unwrap();
        let dense = x.sub(&w.matmul(&h).unwrap()).unwrap();
        assert_eq!(r.to_dense(), dense);
    }

    #[test]
    fn gradients_match_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (x, w, h) = (
            random(4, 3, &mut rng),
            random(4, 2, &mut rng),
            random(2, 3, &mut rng),
        );
        let mask = random_mask(4, 3, 0.7, &mut rng, true);
        let gw = gradient_w(&x, &w, &h, &mask).unwrap();
        let gh = gradient_h(&x, &w, &h, &mask).unwrap();
        let step = 1e-6;
        for i in 0..4 {
            for k in 0..2 {
                let (mut wp, mut wm) = (w.clone(), w.clone());
                wp[(i, k)] += step;
                wm[(i, k)] -= step;
                let fd = (naive_objective(&x, &wp, &h, &mask)
                    - naive_objective(&x, &wm, &h, &mask))
                    / (2.0 * step);
                assert!((fd - gw[(i, k)]).abs() <= 1e-5);
            }
        }
        for k in 0..2 {
            for j in 0..3 {
                let (mut hp, mut hm) = (h.clone(), h.clone());
                hp[(k, j)] += step;
                hm[(k, j)] -= step;
                let fd = (naive_objective(&x, &w, &hp, &mask)
                    - naive_objective(&x, &w, &hm, &mask))
                    / (2.0 * step);
                assert!((fd - gh[(k, j)]).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn spectral_norm_examples() {
        let tol = SPECTRAL_TOL;
        assert!((spectral_norm(&DenseMatrix::identity(3), tol, 1000).unwrap() - 1.0).abs() < 1e-12);
        let d = DenseMatrix::from_rows(&[[2.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!((spectral_norm(&d, tol, 1000).unwrap() - 2.0).abs() < 1e-8);
        let w = DenseMatrix::from_rows(&[[3.0, 0.0], [4.0, 0.0]]).unwrap();
        assert_eq!(w.gram().as_slice(), &[25.0, 0.0, 0.0, 0.0]);
        assert!((spectral_norm(&w.gram(), tol, 1000).unwrap() - 25.0).abs() < 1e-12);
        assert!(spectral_norm(&DenseMatrix::zeros(2, 3), tol, 10).is_err());
    }

    #[test]
    fn spectral_norm_recovers_when_start_is_orthogonal() {
        // Top eigenvector (1, -1)/√2 is orthogonal to the all-ones start.
        let a = DenseMatrix::from_rows(&[[1.0, -1.0], [-1.0, 1.0]]).unwrap();
        let l = spectral_norm(&a, SPECTRAL_TOL, 1000).unwrap();
        assert!((l - 2.0).abs() < 1e-8, "{l}");
    }

    #[test]
    fn spectral_norm_bounds_probe_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..20 {
            let b = random(7, 4, &mut rng);
            let g = b.gram();
            let l = spectral_norm(&g, SPECTRAL_TOL, SPECTRAL_MAX_ITERS).unwrap();
            for _ in 0..10 {
                let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let ratio = norm(&mat_vec(&g, &v)) / norm(&v);
                assert!(l >= ratio - SPECTRAL_TOL * l, "{l} < {ratio}");
            }
        }
    }
}
