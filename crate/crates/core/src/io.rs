//! File formats: dense CSV, MatrixMarket coordinate, MovieLens ratings, and
//! solver output bundles.
//!
//! MatrixMarket indices are 1-based on disk and 0-based in memory; the
//! conversion happens only here.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::{Rating, RatingsDataset};
use crate::mask::ObservationMask;
use crate::matrix::DenseMatrix;
use crate::model::{FactorPair, ModelVariant, SolverConfig};
use crate::solver::SolveReport;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MatrixFormat {
    DenseCsv,
    MatrixMarket,
    MovieLensDat,
    MovieLensTsv,
}

impl MatrixFormat {
    /// Format from the file extension: `.csv`, `.mtx`, `.dat`, `.data`/`.tsv`.
    pub fn detect(path: &Path) -> Result<Self> {
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase());
        match ext.as_deref() {
            Some("csv") => Ok(MatrixFormat::DenseCsv),
            Some("mtx") => Ok(MatrixFormat::MatrixMarket),
            Some("dat") => Ok(MatrixFormat::MovieLensDat),
            Some("data") | Some("tsv") => Ok(MatrixFormat::MovieLensTsv),
            _ => Err(Error::Config(format!(
                "cannot tell the format of {} from its extension; pass it explicitly",
                path.display()
            ))),
        }
    }
}

impl std::str::FromStr for MatrixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" | "dense_csv" => Ok(MatrixFormat::DenseCsv),
            "mtx" | "matrix_market" => Ok(MatrixFormat::MatrixMarket),
            "dat" | "movielens_dat" => Ok(MatrixFormat::MovieLensDat),
            "tsv" | "movielens_tsv" => Ok(MatrixFormat::MovieLensTsv),
            other => Err(Error::Config(format!("unknown format '{other}'"))),
        }
    }
}

fn parse_error(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        message: message.into(),
    }
}

fn parse_finite(path: &Path, line: usize, field: &str, what: &str) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| parse_error(path, line, format!("{what}: '{field}' is not a number")))?;
    if !v.is_finite() {
        return Err(parse_error(
            path,
            line,
            format!("{what}: non-finite value '{field}'"),
        ));
    }
    Ok(v)
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads a rectangular numeric CSV. A first row that does not parse as
/// numbers is treated as a header and skipped.
pub fn read_dense_csv(path: impl AsRef<Path>) -> Result<DenseMatrix> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let mut data = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 1;
        let record = record.map_err(|e| parse_error(path, line, e.to_string()))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        if idx == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            continue;
        }
        match cols {
            None => cols = Some(record.len()),
            Some(c) if c != record.len() => {
                return Err(parse_error(
                    path,
                    line,
                    format!("expected {c} columns, found {}", record.len()),
                ))
            }
            _ => {}
        }
        for (j, field) in record.iter().enumerate() {
            data.push(parse_finite(
                path,
                line,
                field,
                &format!("column {}", j + 1),
            )?);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_error(path, 1, "no numeric rows"))?;
    DenseMatrix::from_vec(rows, cols, data)
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

fn write_all(path: &Path, text: &str) -> Result<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// 17 significant digits: enough to round-trip every f64.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub fn dense_csv_string(m: &DenseMatrix) -> String {
    let mut out = String::new();
    for i in 0..m.rows() {
        let line: Vec<String> = m.row(i).iter().map(|&v| format_f64(v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_dense_csv(path: impl AsRef<Path>, m: &DenseMatrix) -> Result<()> {
    write_all(path.as_ref(), &dense_csv_string(m))
}

/// Reads a `coordinate real general` MatrixMarket file. Unlisted cells are
/// unobserved and hold 0 in the returned matrix.
pub fn read_matrix_market(path: impl AsRef<Path>) -> Result<(DenseMatrix, ObservationMask)> {
    let path = path.as_ref();
    let mut lines = open(path)?.lines().enumerate();
    let (_, banner) = lines
        .next()
        .ok_or_else(|| parse_error(path, 1, "empty file"))?;
    let banner = banner.map_err(|e| Error::io(path, e))?;
    let tokens: Vec<String> = banner
        .split_whitespace()
        .map(|t| t.to_ascii_lowercase())
        .collect();
    if tokens.len() != 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(parse_error(
            path,
            1,
            "missing '%%MatrixMarket matrix' banner",
        ));
    }
    if tokens[2] != "coordinate" || tokens[3] != "real" || tokens[4] != "general" {
        return Err(parse_error(
            path,
            1,
            format!(
                "unsupported qualifier '{} {} {}'; expected 'coordinate real general'",
                tokens[2], tokens[3], tokens[4]
            ),
        ));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut x = None;
    let mut entries = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('%') {
            continue;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        match size {
            None => {
                if fields.len() != 3 {
                    return Err(parse_error(
                        path,
                        lineno,
                        "size line must be 'rows cols entries'",
                    ));
                }
                let p = |s: &str| {
                    s.parse::<usize>()
                        .map_err(|_| parse_error(path, lineno, format!("'{s}' is not a count")))
                };
                let (m, n, nnz) = (p(fields[0])?, p(fields[1])?, p(fields[2])?);
                if m == 0 || n == 0 {
                    return Err(parse_error(path, lineno, "dimensions must be positive"));
                }
                size = Some((m, n, nnz));
                x = Some(DenseMatrix::zeros(m, n));
            }
            Some((m, n, _)) => {
                if fields.len() != 3 {
                    return Err(parse_error(
                        path,
                        lineno,
                        "entry line must be 'row col value'",
                    ));
                }
                let idx1 = |s: &str, max: usize, what: &str| -> Result<usize> {
                    let v = s.parse::<usize>().map_err(|_| {
                        parse_error(path, lineno, format!("{what} '{s}' is not an index"))
                    })?;
                    if v == 0 || v > max {
                        return Err(parse_error(
                            path,
                            lineno,
                            format!("{what} {v} outside 1..={max}"),
                        ));
                    }
                    Ok(v - 1)
                };
                let i = idx1(fields[0], m, "row")?;
                let j = idx1(fields[1], n, "column")?;
                let v = parse_finite(path, lineno, fields[2], "value")?;
                x.as_mut().expect("allocated with size")[(i, j)] = v;
                entries.push((i, j, lineno));
            }
        }
    }
    let (m, n, nnz) = size.ok_or_else(|| parse_error(path, 1, "missing size line"))?;
    if entries.len() != nnz {
        return Err(parse_error(
            path,
            1,
            format!("header declares {nnz} entries, found {}", entries.len()),
        ));
    }
    let mut sorted = entries.clone();
    sorted.sort_unstable();
    for w in sorted.windows(2) {
        if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
            return Err(parse_error(
                path,
                w[1].2.max(w[0].2),
                format!("duplicate entry ({}, {})", w[0].0 + 1, w[0].1 + 1),
            ));
        }
    }
    let mask = ObservationMask::from_cells(m, n, entries.iter().map(|&(i, j, _)| (i, j)))?;
    Ok((x.expect("allocated with size"), mask))
}

/// Writes the observed cells (mask weights are not stored).
pub fn write_matrix_market(
    path: impl AsRef<Path>,
    x: &DenseMatrix,
    mask: &ObservationMask,
) -> Result<()> {
    if mask.shape() != x.shape() {
        return Err(Error::shape(
            "write_matrix_market",
            "mask and X differ in shape",
        ));
    }
    let mut out = String::from("%%MatrixMarket matrix coordinate real general\n");
    let _ = writeln!(out, "{} {} {}", x.rows(), x.cols(), mask.observed_count());
    for o in mask.iter() {
        let _ = writeln!(
            out,
            "{} {} {}",
            o.row + 1,
            o.col + 1,
            format_f64(x[(o.row, o.col)])
        );
    }
    write_all(path.as_ref(), &out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MovieLensFlavor {
    /// `uid::iid::rating::ts` (ml-1m `ratings.dat`).
    Dat,
    /// `uid\tiid\trating\tts` (ml-100k `u.data`).
    Tsv,
}

impl std::str::FromStr for MovieLensFlavor {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dat" => Ok(MovieLensFlavor::Dat),
            "tsv" => Ok(MovieLensFlavor::Tsv),
            other => Err(Error::Config(format!(
                "unknown MovieLens flavor '{other}' (dat|tsv)"
            ))),
        }
    }
}

pub const MOVIELENS_RANGE: (f64, f64) = (1.0, 5.0);

/// Parses a MovieLens ratings file. Users and items are re-indexed densely
/// in increasing order of their identifiers.
pub fn read_movielens(path: impl AsRef<Path>, flavor: MovieLensFlavor) -> Result<RatingsDataset> {
    let path = path.as_ref();
    let mut raw = Vec::new();
    let mut out_of_range = 0usize;
    for (idx, line) in open(path)?.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        let fields: Vec<&str> = match flavor {
            MovieLensFlavor::Dat => t.split("::").collect(),
            MovieLensFlavor::Tsv => t.split('\t').collect(),
        };
        if fields.len() != 4 && fields.len() != 3 {
            return Err(parse_error(
                path,
                lineno,
                format!("malformed rating line '{t}'"),
            ));
        }
        let id = |s: &str, what: &str| -> Result<u64> {
            s.trim()
                .parse()
                .map_err(|_| parse_error(path, lineno, format!("{what} '{s}' in line '{t}'")))
        };
        let user = id(fields[0], "user id")?;
        let item = id(fields[1], "item id")?;
        let value = parse_finite(path, lineno, fields[2], "rating")?;
        let ts = match fields.get(3) {
            Some(s) => Some(s.trim().parse::<i64>().map_err(|_| {
                parse_error(path, lineno, format!("timestamp '{s}' in line '{t}'"))
            })?),
            None => None,
        };
        if value < MOVIELENS_RANGE.0 || value > MOVIELENS_RANGE.1 {
            out_of_range += 1;
        }
        raw.push((user, item, value, ts));
    }
    if out_of_range > 0 {
        log::warn!(
            "{}: {out_of_range} ratings outside [1, 5] kept as is",
            path.display()
        );
    }
    let index = |ids: Vec<u64>| -> (Vec<u64>, BTreeMap<u64, usize>) {
        let map: BTreeMap<u64, usize> = ids.iter().map(|&i| (i, 0)).collect();
        let sorted: Vec<u64> = map.keys().copied().collect();
        let map = sorted.iter().enumerate().map(|(k, &i)| (i, k)).collect();
        (sorted, map)
    };
    let (user_ids, user_map) = index(raw.iter().map(|r| r.0).collect());
    let (item_ids, item_map) = index(raw.iter().map(|r| r.1).collect());
    let ratings = raw
        .into_iter()
        .map(|(u, i, value, timestamp)| Rating {
            user: user_map[&u],
            item: item_map[&i],
            value,
            timestamp,
        })
        .collect();
    let ds = RatingsDataset {
        num_users: user_ids.len(),
        num_items: item_ids.len(),
        ratings,
        value_range: MOVIELENS_RANGE,
        user_ids,
        item_ids,
    };
    ds.validate()?;
    Ok(ds)
}

/// SHA-256 of the canonical configuration, variant and bounds.
pub fn config_hash(variant: &ModelVariant, config: &SolverConfig) -> String {
    let mut h = Sha256::new();
    h.update(config.canonical().as_bytes());
    h.update(variant.kind().name().as_bytes());
    for v in variant
        .bounds()
        .lower()
        .iter()
        .chain(variant.bounds().upper())
    {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Paths written by [`write_factors`].
#[derive(Clone, Debug)]
pub struct FactorFiles {
    pub w: PathBuf,
    pub h: PathBuf,
    pub trace: PathBuf,
    pub meta: PathBuf,
}

impl FactorFiles {
    /// `<prefix>W.csv`, `<prefix>H.csv`, `<prefix>trace.csv`, `<prefix>meta.json`.
    pub fn for_prefix(prefix: &str) -> Self {
        Self {
            w: PathBuf::from(format!("{prefix}W.csv")),
            h: PathBuf::from(format!("{prefix}H.csv")),
            trace: PathBuf::from(format!("{prefix}trace.csv")),
            meta: PathBuf::from(format!("{prefix}meta.json")),
        }
    }
}

pub fn trace_csv_string(report: &SolveReport) -> String {
    let mut out = String::from("iteration,objective,L_W,L_H\n");
    let n = report.objective_trace.len();
    for (k, (&f, &(lw, lh))) in report
        .objective_trace
        .iter()
        .zip(&report.lipschitz_trace)
        .enumerate()
    {
        // With an unrecorded trace only the first and last entries exist.
        let iteration = if n == report.outer_iterations + 1 {
            k
        } else if k + 1 == n {
            report.outer_iterations
        } else {
            k
        };
        let _ = writeln!(
            out,
            "{iteration},{},{},{}",
            format_f64(f),
            format_f64(lw),
            format_f64(lh)
        );
    }
    out
}

fn json_f64(v: f64) -> String {
    if v.is_finite() {
        format_f64(v)
    } else if v > 0.0 {
        "\"inf\"".into()
    } else {
        "\"-inf\"".into()
    }
}

pub fn meta_json_string(
    variant: &ModelVariant,
    config: &SolverConfig,
    report: &SolveReport,
) -> String {
    let list = |v: &[f64]| {
        v.iter()
            .map(|&x| json_f64(x))
            .collect::<Vec<_>>()
            .join(", ")
    };
    let b = variant.bounds();
    format!(
        "{{\n  \"variant\": \"{}\",\n  \"rank\": {},\n  \"seed\": {},\n  \"max_outer\": {},\n  \"max_inner_w\": {},\n  \"max_inner_h\": {},\n  \"rel_tol\": {},\n  \"extrapolate\": {},\n  \"center\": {},\n  \"offset\": {},\n  \"bounds_lower\": [{}],\n  \"bounds_upper\": [{}],\n  \"outer_iterations\": {},\n  \"final_objective\": {},\n  \"stop_reason\": \"{}\",\n  \"config_hash\": \"{}\"\n}}\n",
        variant.kind(),
        config.rank,
        config.seed,
        config.max_outer,
        config.max_inner_w,
        config.max_inner_h,
        json_f64(config.rel_tol),
        config.extrapolate,
        config.center,
        json_f64(report.offset),
        list(b.lower()),
        list(b.upper()),
        report.outer_iterations,
        json_f64(report.final_objective()),
        report.stop_reason.name(),
        config_hash(variant, config)
    )
}

/// Writes `W`, `H`, the objective trace and a metadata file under `prefix`.
pub fn write_factors(
    prefix: &str,
    factors: &FactorPair,
    variant: &ModelVariant,
    config: &SolverConfig,
    report: &SolveReport,
) -> Result<FactorFiles> {
    let files = FactorFiles::for_prefix(prefix);
    write_dense_csv(&files.w, &factors.w)?;
    write_dense_csv(&files.h, &factors.h)?;
    write_all(&files.trace, &trace_csv_string(report))?;
    write_all(&files.meta, &meta_json_string(variant, config, report))?;
    Ok(files)
}

/// Writes arbitrary text, creating parent directories.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    write_all(path.as_ref(), text)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str, content: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join(name);
        fs::write(&p, content).unwrap();
        (dir, p)
    }

    #[test]
    fn dense_csv_basic_and_header() {
        let (_d, p) = tmp("a.csv", "1,2\n3,4\n");
        let m = read_dense_csv(&p).unwrap();
        assert_eq!(
            m,
            DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap()
        );
        let (_d, p) = tmp("b.csv", "a,b\n1,2\n");
        assert_eq!(read_dense_csv(&p).unwrap().shape(), (1, 2));
    }

    #[test]
    fn dense_csv_errors_are_located() {
        let (_d, p) = tmp("r.csv", "1,2\n3\n");
        let e = read_dense_csv(&p).unwrap_err().to_string();
        assert!(e.contains(":2:"), "{e}");
        let (_d, p) = tmp("n.csv", "1,2\n3,x\n");
        let e = read_dense_csv(&p).unwrap_err().to_string();
        assert!(e.contains(":2:") && e.contains("column 2"), "{e}");
        let (_d, p) = tmp("i.csv", "1,NaN\n");
        assert!(read_dense_csv(&p)
            .unwrap_err()
            .to_string()
            .contains("non-finite"));
    }

    #[test]
    fn matrix_market_single_entry_and_rejections() {
        let (_d, p) = tmp(
            "a.mtx",
            "%%MatrixMarket matrix coordinate real general\n% c\n2 2 1\n1 1 5.0\n",
        );
        let (x, mask) = read_matrix_market(&p).unwrap();
        assert_eq!(mask.observed_count(), 1);
        assert_eq!(x[(0, 0)], 5.0);
        let (_d, p) = tmp(
            "s.mtx",
            "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1 5.0\n",
        );
        assert!(read_matrix_market(&p)
            .unwrap_err()
            .to_string()
            .contains("unsupported"));
        let (_d, p) = tmp(
            "o.mtx",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 5.0\n",
        );
        assert!(read_matrix_market(&p).is_err());
        let (_d, p) = tmp(
            "d.mtx",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 5.0\n1 1 4.0\n",
        );
        assert!(read_matrix_market(&p)
            .unwrap_err()
            .to_string()
            .contains("duplicate"));
    }

    #[test]
    fn movielens_line_parsing() {
        let (_d, p) = tmp("r.dat", "1::10::5::978300760\n2::3::4::978300761\n");
        let ds = read_movielens(&p, MovieLensFlavor::Dat).unwrap();
        assert_eq!(ds.num_users, 2);
        assert_eq!(ds.item_ids, vec![3, 10]);
        let r = ds.ratings[0];
        assert_eq!(
            (ds.user_ids[r.user], ds.item_ids[r.item], r.value),
            (1, 10, 5.0)
        );
        assert_eq!(r.timestamp, Some(978300760));
        let (_d, p) = tmp("u.data", "1\t1\t3\t0\n1\tx\t3\t0\n");
        let e = read_movielens(&p, MovieLensFlavor::Tsv)
            .unwrap_err()
            .to_string();
        assert!(e.contains(":2:") && e.contains("1\tx\t3\t0"), "{e}");
        let (_d, p) = tmp("u.data", "1\t1\t3\t0\n1\t1\t4\t0\n");
        assert!(read_movielens(&p, MovieLensFlavor::Tsv).is_err());
    }

    #[test]
    fn format_detection() {
        assert_eq!(
            MatrixFormat::detect(Path::new("x.CSV")).unwrap(),
            MatrixFormat::DenseCsv
        );
        assert_eq!(
            MatrixFormat::detect(Path::new("u.data")).unwrap(),
            MatrixFormat::MovieLensTsv
        );
        assert!(MatrixFormat::detect(Path::new("x.bin")).is_err());
    }
}
