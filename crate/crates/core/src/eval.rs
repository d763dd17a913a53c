//! Matrix-completion protocol on ratings data.
//!
//! The ratings matrix is item-by-user: rows are items, columns are users.
//! A split picks test users at random; each keeps a fraction of its ratings
//! as known and holds out the rest. `W` is learned on the training users,
//! then frozen while `H` is fitted on the known ratings of the test users.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mask::ObservationMask;
use crate::matrix::DenseMatrix;
use crate::model::{FactorPair, ModelVariant, SolverConfig, VariantKind};
use crate::projection::BoundsVector;
use crate::solver;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rating {
    pub user: usize,
    pub item: usize,
    pub value: f64,
    pub timestamp: Option<i64>,
}

/// Ratings with dense 0-based user and item indices.
#[derive(Clone, Debug, PartialEq)]
pub struct RatingsDataset {
    pub num_users: usize,
    pub num_items: usize,
    pub ratings: Vec<Rating>,
    pub value_range: (f64, f64),
    /// Original identifier of each dense user index.
    pub user_ids: Vec<u64>,
    /// Original identifier of each dense item index.
    pub item_ids: Vec<u64>,
}

impl RatingsDataset {
    /// Builds a dataset from dense-indexed ratings; identifiers default to
    /// the indices. Duplicate (user, item) pairs are rejected.
    pub fn from_ratings(
        num_users: usize,
        num_items: usize,
        ratings: Vec<Rating>,
        value_range: (f64, f64),
    ) -> Result<Self> {
        let ds = Self {
            num_users,
            num_items,
            ratings,
            value_range,
            user_ids: (0..num_users as u64).collect(),
            item_ids: (0..num_items as u64).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.user_ids.len() != self.num_users || self.item_ids.len() != self.num_items {
            return Err(Error::shape(
                "RatingsDataset",
                "id maps do not match the counts",
            ));
        }
        if !(self.value_range.0 <= self.value_range.1) {
            return Err(Error::Config("value range must satisfy lo <= hi".into()));
        }
        let mut seen: Vec<(usize, usize)> = Vec::with_capacity(self.ratings.len());
        for r in &self.ratings {
            if r.user >= self.num_users || r.item >= self.num_items {
                return Err(Error::shape(
                    "RatingsDataset",
                    format!(
                        "rating ({}, {}) outside {} users x {} items",
                        r.user, r.item, self.num_users, self.num_items
                    ),
                ));
            }
            if !r.value.is_finite() {
                return Err(Error::Numerical(format!(
                    "rating ({}, {}) is {}",
                    r.user, r.item, r.value
                )));
            }
            seen.push((r.user, r.item));
        }
        seen.sort_unstable();
        if let Some(w) = seen.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Config(format!(
                "duplicate rating for user {} item {}",
                self.user_ids[w[0].0], self.item_ids[w[0].1]
            )));
        }
        Ok(())
    }

    pub fn mean_rating(&self) -> Option<f64> {
        if self.ratings.is_empty() {
            None
        } else {
            Some(self.ratings.iter().map(|r| r.value).sum::<f64>() / self.ratings.len() as f64)
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SplitSpec {
    pub test_user_count: usize,
    pub known_fraction: f64,
    pub min_ratings_per_item: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(test_user_count: usize, seed: u64) -> Self {
        Self {
            test_user_count,
            known_fraction: 0.8,
            min_ratings_per_item: 5,
            seed,
        }
    }

    pub fn validate(&self, num_users: usize) -> Result<()> {
        if !(self.known_fraction > 0.0 && self.known_fraction < 1.0) {
            return Err(Error::Config(format!(
                "known fraction must lie in (0, 1), got {}",
                self.known_fraction
            )));
        }
        if self.test_user_count >= num_users {
            return Err(Error::Config(format!(
                "{} test users requested from {num_users} users",
                self.test_user_count
            )));
        }
        Ok(())
    }
}

/// Train / known / held-out partition of the filtered ratings matrix.
#[derive(Clone, Debug)]
pub struct Split {
    /// Ratings as an items×users matrix (0 where unrated), filtered items only.
    pub x: DenseMatrix,
    /// Original dense item index of each row of `x`.
    pub items: Vec<usize>,
    pub train: ObservationMask,
    pub test_known: ObservationMask,
    pub test_heldout: ObservationMask,
    /// Columns of the test users, ascending.
    pub test_users: Vec<usize>,
    /// Sampled test users with fewer than 2 ratings, moved back to training.
    pub excluded_users: usize,
    pub value_range: (f64, f64),
}

impl Split {
    /// Training users' columns, ascending.
    pub fn train_users(&self) -> Vec<usize> {
        let mut is_test = vec![false; self.x.cols()];
        for &u in &self.test_users {
            is_test[u] = true;
        }
        (0..self.x.cols()).filter(|&u| !is_test[u]).collect()
    }
}

/// Seeded user-level split. Items with too few ratings are removed first.
pub fn split(dataset: &RatingsDataset, spec: &SplitSpec) -> Result<Split> {
    if dataset.ratings.is_empty() {
        return Err(Error::EmptyMask("dataset has no ratings".into()));
    }
    spec.validate(dataset.num_users)?;
    let mut item_counts = vec![0usize; dataset.num_items];
    for r in &dataset.ratings {
        item_counts[r.item] += 1;
    }
    let items: Vec<usize> = (0..dataset.num_items)
        .filter(|&i| item_counts[i] >= spec.min_ratings_per_item)
        .collect();
    if items.is_empty() {
        return Err(Error::EmptyMask(format!(
            "no item has at least {} ratings",
            spec.min_ratings_per_item
        )));
    }
    let mut row_of = vec![usize::MAX; dataset.num_items];
    for (k, &i) in items.iter().enumerate() {
        row_of[i] = k;
    }

    let n = dataset.num_users;
    let mut x = DenseMatrix::zeros(items.len(), n);
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); n];
    for r in &dataset.ratings {
        let row = row_of[r.item];
        if row != usize::MAX {
            x[(row, r.user)] = r.value;
            by_user[r.user].push(row);
        }
    }
    for rows in &mut by_user {
        rows.sort_unstable();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sampled: Vec<usize> = sample(&mut rng, n, spec.test_user_count).into_vec();
    sampled.sort_unstable();

    let mut train = Vec::new();
    let mut known = Vec::new();
    let mut heldout = Vec::new();
    let mut test_users = Vec::new();
    let mut excluded = 0;
    let mut is_test = vec![false; n];
    for &u in &sampled {
        let rows = &by_user[u];
        if rows.len() < 2 {
            excluded += 1;
            continue;
        }
        is_test[u] = true;
        test_users.push(u);
        let mut order = rows.clone();
        order.shuffle(&mut rng);
        let k = (spec.known_fraction * rows.len() as f64).ceil() as usize;
        known.extend(order[..k].iter().map(|&i| (i, u)));
        heldout.extend(order[k..].iter().map(|&i| (i, u)));
    }
    if excluded > 0 {
        log::warn!("{excluded} sampled test users had fewer than 2 ratings and stay in training");
    }
    for (u, rows) in by_user.iter().enumerate() {
        if !is_test[u] {
            train.extend(rows.iter().map(|&i| (i, u)));
        }
    }
    let m = items.len();
    Ok(Split {
        x,
        items,
        train: ObservationMask::from_cells(m, n, train)?,
        test_known: ObservationMask::from_cells(m, n, known)?,
        test_heldout: ObservationMask::from_cells(m, n, heldout)?,
        test_users,
        excluded_users: excluded,
        value_range: dataset.value_range,
    })
}

/// `√(mean((p − t)²))`.
pub fn rmse(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(Error::shape(
            "rmse",
            "predictions and truths differ in length",
        ));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyMask("RMSE of zero cells".into()));
    }
    let sum: f64 = predictions
        .iter()
        .zip(truths)
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    Ok((sum / predictions.len() as f64).sqrt())
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub dataset: String,
    pub rank: usize,
    pub variant: VariantKind,
    pub rmse_test: f64,
    pub rmse_train: f64,
    pub seeds_used: usize,
    pub rmse_std: f64,
    pub wall_time_s: f64,
    pub excluded_users: usize,
}

/// Options shared by every fold of a sweep.
#[derive(Clone, Debug)]
pub struct FoldOptions {
    pub config: SolverConfig,
    /// Fit on mean-centered ratings (BSSMF only; ignored otherwise).
    pub center: bool,
}

impl FoldOptions {
    pub fn recommender(rank: usize) -> Self {
        Self {
            config: SolverConfig::recommender(rank),
            center: true,
        }
    }
}

fn restrict_columns(mask: &ObservationMask, cols: &[usize]) -> Result<ObservationMask> {
    let mut new_col = vec![usize::MAX; mask.cols()];
    for (k, &j) in cols.iter().enumerate() {
        new_col[j] = k;
    }
    let kept: Vec<_> = mask
        .iter()
        .filter(|o| new_col[o.col] != usize::MAX)
        .map(|o| (o.row, new_col[o.col], o.weight))
        .collect();
    ObservationMask::from_entries(mask.rows(), cols.len(), kept)
}

/// Bounds of the BSSMF model: the dataset's rating range on every item.
pub fn ratings_variant(kind: VariantKind, rows: usize, range: (f64, f64)) -> Result<ModelVariant> {
    let bounds = BoundsVector::uniform(rows, range.0, range.1)?;
    ModelVariant::from_kind(kind, rows, Some(bounds))
}

/// Learns `W` on the training users, fits `H` on the test users' known
/// ratings with `W` frozen, and scores the held-out ratings.
pub fn evaluate_fold(
    split: &Split,
    kind: VariantKind,
    options: &FoldOptions,
) -> Result<EvalReport> {
    let start = Instant::now();
    let config = &options.config;
    let m = split.x.rows();
    let variant = ratings_variant(kind, m, split.value_range)?;
    let train_users = split.train_users();
    if split.test_users.is_empty() {
        return Err(Error::EmptyMask("split has no test users".into()));
    }
    let x_train = split.x.select_columns(&train_users)?;
    let mask_train = restrict_columns(&split.train, &train_users)?;
    let center = options.center && kind == VariantKind::Bssmf;
    let (factors, _) = if center {
        let c = solver::observed_mean(&x_train, &mask_train)?;
        solver::solve_shifted(&x_train, &mask_train, &variant, config, c, &mut |_| {})?
    } else {
        let cfg = SolverConfig {
            center: false,
            ..config.clone()
        };
        solver::solve(&x_train, &mask_train, &variant, &cfg)?
    };

    let x_test = split.x.select_columns(&split.test_users)?;
    let known = restrict_columns(&split.test_known, &split.test_users)?;
    let heldout = restrict_columns(&split.test_heldout, &split.test_users)?;
    if heldout.is_empty() {
        return Err(Error::EmptyMask("no held-out ratings".into()));
    }
    if known.iter().any(|o| heldout.contains(o.row, o.col)) {
        return Err(Error::Config("known and held-out cells overlap".into()));
    }
    let c = if center {
        solver::observed_mean(&x_train, &mask_train)?
    } else {
        0.0
    };
    let (h_test, _) = solver::fit_h(&x_test, &known, &factors.w, &variant, config, c)?;
    let test_factors = FactorPair::new(factors.w.clone(), h_test)?;

    let rmse_test = score(&x_test, &heldout, &test_factors, &variant)?;
    let rmse_train = score(&x_train, &mask_train, &factors, &variant)?;
    Ok(EvalReport {
        dataset: String::new(),
        rank: config.rank,
        variant: kind,
        rmse_test,
        rmse_train,
        seeds_used: 1,
        rmse_std: 0.0,
        wall_time_s: start.elapsed().as_secs_f64(),
        excluded_users: split.excluded_users,
    })
}

fn score(
    x: &DenseMatrix,
    mask: &ObservationMask,
    factors: &FactorPair,
    variant: &ModelVariant,
) -> Result<f64> {
    let cells: Vec<(usize, usize)> = mask.iter().map(|o| (o.row, o.col)).collect();
    let truths: Vec<f64> = cells.iter().map(|&(i, j)| x[(i, j)]).collect();
    let preds = solver::predict_bounded(factors, variant, &cells)?;
    rmse(&preds, &truths)
}

/// Population mean and standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Every (rank, variant) cell over `seeds`. The split is drawn once from
/// `split_spec.seed`; each seed is a solver initialization.
pub fn overfitting_sweep(
    name: &str,
    dataset: &RatingsDataset,
    split_spec: &SplitSpec,
    ranks: &[usize],
    variants: &[VariantKind],
    seeds: &[u64],
    center: bool,
) -> Result<Vec<EvalReport>> {
    if ranks.is_empty() || variants.is_empty() || seeds.is_empty() {
        return Err(Error::Config("sweep grids must be nonempty".into()));
    }
    let fold = split(dataset, split_spec)?;
    let jobs: Vec<(usize, VariantKind, usize)> = ranks
        .iter()
        .flat_map(|&r| {
            variants
                .iter()
                .flat_map(move |&v| (0..seeds.len()).map(move |s| (r, v, s)))
        })
        .collect();
    let folds: Vec<EvalReport> = jobs
        .par_iter()
        .map(|&(r, v, s)| {
            let options = FoldOptions {
                config: SolverConfig {
                    seed: seeds[s],
                    ..SolverConfig::recommender(r)
                },
                center,
            };
            evaluate_fold(&fold, v, &options)
        })
        .collect::<Result<_>>()?;

    Ok(folds
        .chunks(seeds.len())
        .map(|cell| {
            let test: Vec<f64> = cell.iter().map(|f| f.rmse_test).collect();
            let train: Vec<f64> = cell.iter().map(|f| f.rmse_train).collect();
            let (mean, std) = mean_std(&test);
            EvalReport {
                dataset: name.to_string(),
                rank: cell[0].rank,
                variant: cell[0].variant,
                rmse_test: mean,
                rmse_train: mean_std(&train).0,
                seeds_used: cell.len(),
                rmse_std: std,
                wall_time_s: cell.iter().map(|f| f.wall_time_s).sum(),
                excluded_users: cell[0].excluded_users,
            }
        })
        .collect())
}

pub const REPORT_HEADER: &str =
    "dataset,variant,rank,seed_count,rmse_mean,rmse_std,train_rmse_mean,wall_time_s";

pub fn reports_to_csv(reports: &[EvalReport]) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.17e},{:.17e},{:.17e},{:.3}",
            r.dataset,
            r.variant,
            r.rank,
            r.seeds_used,
            r.rmse_test,
            r.rmse_std,
            r.rmse_train,
            r.wall_time_s
        );
    }
    out
}
