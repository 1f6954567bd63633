//! Observation matrices on disk and marginal normalization.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::DataMatrix;
use crate::multi::MultiData;
use crate::probit::norm_quantile;
use crate::scalar::Real;
use crate::Matrix;

/// Reads a CSV of observations (rows) by variables (columns). A first line
/// with any non-numeric field is taken as a header.
pub fn read_data_csv(path: &Path) -> Result<DataMatrix> {
    let file = File::open(path).map_err(|e| Error::input(format!("cannot open {}: {e}", path.display())))?;
    read_data(file, &path.display().to_string())
}

/// As [`read_data_csv`] from any reader; `source` names it in errors.
pub fn read_data<R: std::io::Read>(reader: R, source: &str) -> Result<DataMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (idx, record) in rdr.records().enumerate() {
        let record = record.map_err(|e| Error::input(format!("{source}: {e}")))?;
        let line = record.position().map_or(idx as u64 + 1, |p| p.line());
        if record.iter().all(str::is_empty) {
            continue;
        }
        if idx == 0 && record.iter().any(|f| f.parse::<f64>().is_err()) {
            width = Some(record.len());
            continue;
        }
        if let Some(w) = width {
            if record.len() != w {
                return Err(Error::input(format!("{source}: line {line}: expected {w} columns, found {}", record.len())));
            }
        }
        width = Some(record.len());
        let mut row = Vec::with_capacity(record.len());
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| {
                Error::input(format!("{source}: line {line}, column {}: cannot parse {field:?} as a number", col + 1))
            })?;
            if !v.is_finite() {
                return Err(Error::input(format!("{source}: line {line}, column {}: non-finite value {field:?}", col + 1)));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::input(format!("{source}: no observations")));
    }
    DataMatrix::from_rows(&rows)
}

/// Reads a manifest listing one CSV per group, one path per line. Relative
/// paths resolve against the manifest's directory; blank lines and lines
/// starting with `#` are skipped.
pub fn read_manifest(path: &Path) -> Result<(Vec<PathBuf>, MultiData)> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let paths: Vec<PathBuf> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect();
    let groups = paths.iter().map(|p| read_data_csv(p)).collect::<Result<Vec<_>>>()?;
    Ok((paths, MultiData::new(groups)?))
}

/// Writes observations with a `x1,…,xp` header.
pub fn write_data_csv(path: &Path, data: &DataMatrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let header: Vec<String> = (1..=data.p()).map(|j| format!("x{j}")).collect();
    writeln!(w, "{}", header.join(","))?;
    write_rows(&mut w, data.values())?;
    w.flush()?;
    Ok(())
}

/// Writes a matrix as headerless CSV.
pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_rows(&mut w, m)?;
    w.flush()?;
    Ok(())
}

fn write_rows<W: Write>(w: &mut W, m: &Matrix) -> Result<()> {
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Maps the value of (average) rank r to Φ⁻¹((r − ½)/n).
pub fn quantile_normalize<T: Real>(column: &[T]) -> Vec<T> {
    let n = column.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| column[a].partial_cmp(&column[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut out = vec![T::zero(); n];
    let nn = T::from_count(n);
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && column[order[end]] == column[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end share their average
        let rank = T::from_count(start + 1 + end) / T::lit(2.0);
        let value = norm_quantile((rank - T::lit(0.5)) / nn);
        for &k in &order[start..end] {
            out[k] = value;
        }
        start = end;
    }
    out
}

/// Column-wise [`quantile_normalize`].
pub fn quantile_normalize_data(data: &DataMatrix) -> Result<DataMatrix> {
    let y = data.values();
    let mut out = DMatrix::zeros(y.nrows(), y.ncols());
    for j in 0..y.ncols() {
        let col: Vec<f64> = y.column(j).iter().copied().collect();
        out.set_column(j, &nalgebra::DVector::from_vec(quantile_normalize(&col)));
    }
    DataMatrix::new(out)
}
