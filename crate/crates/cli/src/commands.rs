use std::fmt::Write as _;
use std::path::Path;

use bssmf::eval::{overfitting_sweep, reports_to_csv, SplitSpec};
use bssmf::identifiability::{
    generate_synthetic, match_and_score, ssc_necessary_check, stack_bound_slacks, MatrixRole,
    SyntheticSpec,
};
use bssmf::io::{self, MatrixFormat, MovieLensFlavor};
use bssmf::preprocess::infer_bounds;
use bssmf::solver::{self, IterationInfo};
use bssmf::{
    BoundsVector, DenseMatrix, Error, ModelVariant, ObservationMask, Result, SolverConfig,
    VariantKind,
};

use crate::{
    CenterDemoArgs, CheckSscArgs, CompleteArgs, EvalArgs, FactorizeArgs, MrsaArgs, SynthArgs,
};

const SSC_FAIL: u8 = 10;

fn load_matrix(path: &Path, format: Option<&str>) -> Result<(DenseMatrix, ObservationMask)> {
    let format = match format {
        Some(f) => f.parse()?,
        None => MatrixFormat::detect(path)?,
    };
    match format {
        MatrixFormat::DenseCsv => {
            let x = io::read_dense_csv(path)?;
            let mask = ObservationMask::full(x.rows(), x.cols());
            Ok((x, mask))
        }
        MatrixFormat::MatrixMarket => io::read_matrix_market(path),
        other => Err(Error::Config(format!(
            "{other:?} is a ratings format; use the complete subcommand"
        ))),
    }
}

/// `lo:hi` for every row.
fn parse_interval(spec: &str, rows: usize) -> Result<BoundsVector> {
    let (lo, hi) = spec
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("bounds '{spec}' must look like lo:hi")))?;
    let p = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("bound '{s}' is not a number")))
    };
    BoundsVector::uniform(rows, p(lo)?, p(hi)?)
}

fn resolve_bounds(spec: &str, x: &DenseMatrix, mask: &ObservationMask) -> Result<BoundsVector> {
    if spec == "infer" {
        return infer_bounds(x, mask);
    }
    if spec.contains(':') && !Path::new(spec).exists() {
        return parse_interval(spec, x.rows());
    }
    let table = io::read_dense_csv(spec)?;
    if table.cols() != 2 || table.rows() != x.rows() {
        return Err(Error::Config(format!(
            "bounds file must have {} rows of 'a,b', got {}x{}",
            x.rows(),
            table.rows(),
            table.cols()
        )));
    }
    BoundsVector::new(table.column(0), table.column(1))
}

fn variant_for(
    kind: VariantKind,
    spec: &str,
    x: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<ModelVariant> {
    match kind {
        VariantKind::Bssmf => ModelVariant::bssmf(resolve_bounds(spec, x, mask)?),
        other => ModelVariant::from_kind(other, x.rows(), None),
    }
}

fn describe_bounds(b: &BoundsVector) -> String {
    let (lo, hi) = (b.lower(), b.upper());
    if lo.iter().all(|&v| v == lo[0]) && hi.iter().all(|&v| v == hi[0]) {
        format!("[{}, {}]", lo[0], hi[0])
    } else {
        format!("per-row ({} rows)", lo.len())
    }
}

pub fn factorize(a: &FactorizeArgs) -> Result<u8> {
    let (x, mask) = load_matrix(&a.input, a.format.as_deref())?;
    let kind: VariantKind = a.variant.parse()?;
    let variant = variant_for(kind, &a.bounds, &x, &mask)?;
    if a.seed_sweep == 0 {
        return Err(Error::Config("--seed-sweep must be at least 1".into()));
    }
    let config = SolverConfig {
        rank: a.rank,
        max_outer: a.outer,
        max_inner_w: a.inner_w,
        max_inner_h: a.inner_h,
        rel_tol: a.rel_tol,
        extrapolate: !a.no_extrapolation,
        center: a.center,
        seed: a.seed,
        record_trace: true,
    };
    config.validate(x.rows(), x.cols())?;
    eprintln!(
        "factorize: input={} shape={}x{} observed={} variant={} bounds={} seeds={}..{} {config}",
        a.input.display(),
        x.rows(),
        x.cols(),
        mask.observed_count(),
        kind,
        describe_bounds(variant.bounds()),
        a.seed,
        a.seed + a.seed_sweep - 1
    );

    let (factors, report, best_seed) = if a.seed_sweep == 1 {
        let mut log_line = |info: &IterationInfo| {
            log::info!(
                "outer {} objective {} L_W {:.6e} L_H {:.6e}",
                info.iteration,
                info.objective.map_or("-".into(), |f| format!("{f:.12e}")),
                info.lipschitz.0,
                info.lipschitz.1
            );
        };
        let (f, r) = solver::solve_observed(&x, &mask, &variant, &config, &mut log_line)?;
        (f, r, a.seed)
    } else {
        let seeds: Vec<u64> = (a.seed..a.seed + a.seed_sweep).collect();
        solver::solve_multistart(&x, &mask, &variant, &config, &seeds)?
    };
    let chosen = SolverConfig {
        seed: best_seed,
        ..config
    };
    let rel = solver::relative_error(&x, &mask, &factors)?;
    let files = io::write_factors(&a.out_prefix, &factors, &variant, &chosen, &report)?;
    println!("seed,outer_iterations,stop_reason,objective,relative_error");
    println!(
        "{best_seed},{},{},{},{}",
        report.outer_iterations,
        report.stop_reason.name(),
        io::format_f64(report.final_objective()),
        io::format_f64(rel)
    );
    eprintln!(
        "wrote {} {} {} {}",
        files.w.display(),
        files.h.display(),
        files.trace.display(),
        files.meta.display()
    );
    Ok(0)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::Config(format!("invalid {what} '{t}'")))
        })
        .collect()
}

pub fn complete(a: &CompleteArgs) -> Result<u8> {
    let flavor = match &a.flavor {
        Some(f) => f.parse()?,
        None => match MatrixFormat::detect(&a.ratings)? {
            MatrixFormat::MovieLensDat => MovieLensFlavor::Dat,
            MatrixFormat::MovieLensTsv => MovieLensFlavor::Tsv,
            _ => {
                return Err(Error::Config(
                    "ratings must be a .dat or .data/.tsv file; pass --flavor".into(),
                ))
            }
        },
    };
    let ranks: Vec<usize> = parse_list(&a.rank, "rank")?;
    let variants: Vec<VariantKind> = a
        .variant
        .split(',')
        .map(|v| v.parse())
        .collect::<Result<_>>()?;
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let seeds: Vec<u64> = (0..a.seeds).collect();
    let spec = SplitSpec {
        test_user_count: a.split_test_users,
        known_fraction: a.known_fraction,
        min_ratings_per_item: a.min_item_ratings,
        seed: a.split_seed,
    };
    let dataset = io::read_movielens(&a.ratings, flavor)?;
    spec.validate(dataset.num_users)?;
    let name = a
        .ratings
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("ratings")
        .to_string();
    eprintln!(
        "complete: ratings={} users={} items={} count={} ranks={ranks:?} variants={} seeds={} test_users={} known_fraction={} min_item_ratings={} split_seed={} center={} solver=outer 200, inner 1/1",
        a.ratings.display(),
        dataset.num_users,
        dataset.num_items,
        dataset.ratings.len(),
        a.variant,
        a.seeds,
        spec.test_user_count,
        spec.known_fraction,
        spec.min_ratings_per_item,
        spec.seed,
        !a.no_center
    );
    let reports = overfitting_sweep(
        &name,
        &dataset,
        &spec,
        &ranks,
        &variants,
        &seeds,
        !a.no_center,
    )?;
    let csv = reports_to_csv(&reports);
    io::write_text(&a.out, &csv)?;
    print!("{csv}");
    Ok(0)
}

pub fn eval(a: &EvalArgs) -> Result<u8> {
    let w = io::read_dense_csv(&a.w)?;
    let h = io::read_dense_csv(&a.h)?;
    let (x, mask) = load_matrix(&a.input, None)?;
    let factors = bssmf::FactorPair::new(w, h)?;
    if (factors.w.rows(), factors.h.cols()) != x.shape() {
        return Err(Error::Shape {
            op: "eval",
            detail: format!(
                "WH is {}x{}, data is {}x{}",
                factors.w.rows(),
                factors.h.cols(),
                x.rows(),
                x.cols()
            ),
        });
    }
    eprintln!(
        "eval: w={} h={} input={} observed={} bounds={}",
        a.w.display(),
        a.h.display(),
        a.input.display(),
        mask.observed_count(),
        a.bounds.as_deref().unwrap_or("none")
    );
    let cells: Vec<(usize, usize)> = mask.iter().map(|o| (o.row, o.col)).collect();
    let truths: Vec<f64> = cells.iter().map(|&(i, j)| x[(i, j)]).collect();
    let preds = match &a.bounds {
        Some(spec) => {
            let variant = ModelVariant::bssmf(parse_interval(spec, x.rows())?)?;
            solver::predict_bounded(&factors, &variant, &cells)?
        }
        None => solver::predict(&factors, &cells)?,
    };
    let rmse = bssmf::eval::rmse(&preds, &truths)?;
    println!("cells,rmse");
    println!("{},{}", cells.len(), io::format_f64(rmse));
    Ok(0)
}

pub fn check_ssc(a: &CheckSscArgs) -> Result<u8> {
    let factor = io::read_dense_csv(&a.factor)?;
    let (role, matrix) = match a.role.as_str() {
        "h" => (MatrixRole::H, factor),
        "w-plain" => (MatrixRole::WPlain, factor.transpose()),
        "w-stacked" => {
            let spec = a
                .bounds
                .as_deref()
                .ok_or_else(|| Error::Config("--role w-stacked needs --bounds lo:hi".into()))?;
            let bounds = parse_interval(spec, factor.rows())?;
            (
                MatrixRole::WStacked,
                stack_bound_slacks(&factor, &bounds)?.transpose(),
            )
        }
        other => {
            return Err(Error::Config(format!(
                "unknown role '{other}' (h|w-stacked|w-plain)"
            )))
        }
    };
    eprintln!(
        "check-ssc: factor={} role={} shape={}x{} tol={}",
        a.factor.display(),
        role.name(),
        matrix.rows(),
        matrix.cols(),
        a.tol
    );
    let report = ssc_necessary_check(&matrix, a.tol, role)?;
    let mut text = String::new();
    for (k, r) in report.per_row.iter().enumerate() {
        let _ = writeln!(
            text,
            "row {k}: zeros {} rank {} (need >= {} and = {}) {}",
            r.zero_count,
            r.zero_set_rank,
            matrix.rows() - 1,
            matrix.rows() - 1,
            if r.passes { "pass" } else { "fail" }
        );
    }
    let _ = writeln!(
        text,
        "necessary condition for SSC: {}",
        if report.overall_pass { "PASS" } else { "FAIL" }
    );
    eprint!("{text}");
    let csv = report.to_csv();
    if let Some(out) = &a.out {
        io::write_text(out, &csv)?;
    }
    print!("{csv}");
    Ok(if report.overall_pass { 0 } else { SSC_FAIL })
}

pub fn mrsa(a: &MrsaArgs) -> Result<u8> {
    let truth = io::read_dense_csv(&a.truth)?;
    let est = io::read_dense_csv(&a.est)?;
    eprintln!("mrsa: true={} est={}", a.truth.display(), a.est.display());
    let report = match_and_score(&truth, &est)?;
    let csv = report.to_csv();
    if let Some(out) = &a.out {
        io::write_text(out, &csv)?;
    }
    print!("{csv}");
    Ok(0)
}

pub fn synth(a: &SynthArgs) -> Result<u8> {
    let spec = SyntheticSpec {
        m: a.m,
        n: a.n,
        r: a.rank,
        h_zero_fraction: a.h_zeros,
        p01: a.p01,
        seed: a.seed,
    };
    spec.validate()?;
    eprintln!(
        "synth: m={} n={} r={} h_zeros={} p01={} seed={} out_prefix={}",
        spec.m, spec.n, spec.r, spec.h_zero_fraction, spec.p01, spec.seed, a.out_prefix
    );
    let data = generate_synthetic(&spec)?;
    if data.w.matmul(&data.h)? != data.x {
        return Err(Error::Numerical("X differs from W·H".into()));
    }
    io::write_dense_csv(format!("{}X.csv", a.out_prefix), &data.x)?;
    io::write_dense_csv(format!("{}Wtrue.csv", a.out_prefix), &data.w)?;
    io::write_dense_csv(format!("{}Htrue.csv", a.out_prefix), &data.h)?;
    let pinned = data
        .w
        .as_slice()
        .iter()
        .filter(|&&v| v == 0.0 || v == 1.0)
        .count();
    println!("attempts,pinned_w_entries");
    println!("{},{pinned}", data.attempts);
    Ok(0)
}

/// Series written by `center-demo`, in column order.
pub const DEMO_SERIES: [&str; 6] = [
    "plain_extrapolated",
    "plain_bcd",
    "centered_extrapolated",
    "centered_bcd",
    "uneven_extrapolated",
    "uneven_bcd",
];

pub fn center_demo(a: &CenterDemoArgs) -> Result<u8> {
    let (x, mask) = load_matrix(&a.input, a.format.as_deref())?;
    let bounds = resolve_bounds(&a.bounds, &x, &mask)?;
    let variant = ModelVariant::bssmf(bounds.clone())?;
    if a.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    // Per-row offset (b_i − a_i)/2 for the uneven series.
    let offsets: Vec<f64> = bounds
        .lower()
        .iter()
        .zip(bounds.upper())
        .map(|(lo, hi)| (hi - lo) / 2.0)
        .collect();
    let x_uneven = DenseMatrix::from_fn(x.rows(), x.cols(), |i, j| x[(i, j)] + offsets[i]);
    let uneven = ModelVariant::bssmf(BoundsVector::new(
        bounds
            .lower()
            .iter()
            .zip(&offsets)
            .map(|(a, o)| a + o)
            .collect(),
        bounds
            .upper()
            .iter()
            .zip(&offsets)
            .map(|(b, o)| b + o)
            .collect(),
    )?)?;
    let base = SolverConfig {
        rank: a.rank,
        max_outer: a.outer,
        max_inner_w: a.inner,
        max_inner_h: a.inner,
        rel_tol: 0.0,
        ..SolverConfig::new(a.rank)
    };
    base.validate(x.rows(), x.cols())?;
    eprintln!(
        "center-demo: input={} shape={}x{} bounds={} seeds={} {base}",
        a.input.display(),
        x.rows(),
        x.cols(),
        describe_bounds(&bounds),
        a.seeds
    );

    let len = a.outer + 1;
    let mut sums = vec![vec![0.0; len]; DEMO_SERIES.len()];
    for seed in 0..a.seeds {
        for (s, name) in DEMO_SERIES.iter().enumerate() {
            let cfg = SolverConfig {
                seed,
                extrapolate: name.ends_with("extrapolated"),
                center: name.starts_with("centered"),
                ..base.clone()
            };
            let (xs, vs) = if name.starts_with("uneven") {
                (&x_uneven, &uneven)
            } else {
                (&x, &variant)
            };
            let (_, report) = solver::solve(xs, &mask, vs, &cfg)?;
            // Solves on exactly-fit data may stop early at objective 0.
            let last = report.final_objective();
            for (k, acc) in sums[s].iter_mut().enumerate() {
                *acc += report.objective_trace.get(k).copied().unwrap_or(last);
            }
        }
    }
    let mut csv = format!("iteration,{}\n", DEMO_SERIES.join(","));
    for k in 0..len {
        let row: Vec<String> = sums
            .iter()
            .map(|s| io::format_f64(s[k] / a.seeds as f64))
            .collect();
        let _ = writeln!(csv, "{k},{}", row.join(","));
    }
    io::write_text(&a.out, &csv)?;
    let finals: Vec<String> = sums
        .iter()
        .zip(DEMO_SERIES)
        .map(|(s, n)| format!("{n}={:.6e}", s[len - 1] / a.seeds as f64))
        .collect();
    println!("{}", finals.join(" "));
    Ok(0)
}
