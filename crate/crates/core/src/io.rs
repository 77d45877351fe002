//! Text formats: grid measures, explicit cost tables and coupling triples.
//!
//! A measure file starts with `# shape: n1 [n2 [n3]] spacing: h` followed by one value per
//! grid point in row-major order. Values are written in shortest round-trip form, so a
//! measure written and read back is bit-identical.

use std::fmt::Write as _;
use std::path::Path;

use crate::costs::CostFunction;
use crate::error::{Error, Result};
use crate::measures::GridGeometry;
use crate::scalar::Real;

fn parse_err(source_name: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse { source_name: source_name.to_string(), line, message: message.into() }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

fn parse_value<T: Real>(token: &str, source_name: &str, line: usize) -> Result<T> {
    let v: f64 = token.trim().parse().map_err(|_| parse_err(source_name, line, format!("not a number: {token:?}")))?;
    Ok(T::lit(v))
}

/// Rows of comma-separated numbers with their 1-based line numbers. `#` lines are skipped.
fn records(text: &str, source_name: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(source_name, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let fields: Vec<String> = rec.iter().map(str::to_string).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        out.push((line, fields));
    }
    Ok(out)
}

/// Parses the `# shape: ... spacing: h` header.
fn parse_header<T: Real>(line: &str, source_name: &str) -> Result<GridGeometry<T>> {
    let bad = || parse_err(source_name, 1, "expected header `# shape: n1 [n2 [n3]] spacing: h`");
    let rest = line.trim().strip_prefix('#').ok_or_else(bad)?.trim();
    let rest = rest.strip_prefix("shape:").ok_or_else(bad)?;
    let (dims, spacing) = rest.split_once("spacing:").ok_or_else(bad)?;
    let shape = dims
        .split_whitespace()
        .map(|t| t.parse::<usize>().map_err(|_| parse_err(source_name, 1, format!("bad grid size {t:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let h = parse_value(spacing, source_name, 1)?;
    GridGeometry::new(shape, h).map_err(|e| parse_err(source_name, 1, e.to_string()))
}

/// Grid and weights from measure-file text.
pub fn parse_measure<T: Real>(text: &str, source_name: &str) -> Result<(GridGeometry<T>, Vec<T>)> {
    parse_grid(text, source_name, |v: T| v >= T::zero() && v.is_finite(), "measure weight {} must be finite and >= 0")
}

/// Grid and per-cell values in the measure layout; `inf` is allowed (e.g. barrier potentials).
pub fn parse_grid_values<T: Real>(text: &str, source_name: &str) -> Result<(GridGeometry<T>, Vec<T>)> {
    parse_grid(text, source_name, |v: T| !v.is_nan() && v != T::neg_infinity(), "grid value {} must be a number or inf")
}

fn parse_grid<T: Real>(
    text: &str,
    source_name: &str,
    valid: impl Fn(T) -> bool,
    message: &str,
) -> Result<(GridGeometry<T>, Vec<T>)> {
    let first = text.lines().next().ok_or_else(|| parse_err(source_name, 1, "empty measure file"))?;
    let grid = parse_header(first, source_name)?;
    let mut weights = Vec::with_capacity(grid.len());
    for (line, fields) in records(text, source_name)? {
        for f in fields.iter().filter(|f| !f.is_empty()) {
            let v: T = parse_value(f, source_name, line)?;
            if !valid(v) {
                return Err(parse_err(source_name, line, message.replace("{}", &v.to_string())));
            }
            weights.push(v);
        }
    }
    if weights.len() != grid.len() {
        return Err(parse_err(
            source_name,
            text.lines().count(),
            format!("header declares {} points, found {}", grid.len(), weights.len()),
        ));
    }
    Ok((grid, weights))
}

pub fn format_measure<T: Real>(grid: &GridGeometry<T>, weights: &[T]) -> Result<String> {
    crate::error::check_len("measure weights", grid.len(), weights.len())?;
    let mut out = String::from("# shape:");
    for n in grid.shape() {
        let _ = write!(out, " {n}");
    }
    let _ = writeln!(out, " spacing: {}", grid.spacing().as_f64());
    for w in weights {
        let _ = writeln!(out, "{}", w.as_f64());
    }
    Ok(out)
}

pub fn read_measure<T: Real>(path: &Path) -> Result<(GridGeometry<T>, Vec<T>)> {
    parse_measure(&read_file(path)?, &path.display().to_string())
}

pub fn read_grid_values<T: Real>(path: &Path) -> Result<(GridGeometry<T>, Vec<T>)> {
    parse_grid_values(&read_file(path)?, &path.display().to_string())
}

pub fn write_measure<T: Real>(path: &Path, grid: &GridGeometry<T>, weights: &[T]) -> Result<()> {
    write_file(path, &format_measure(grid, weights)?)
}

/// Row-major cost table, one row per line; `inf` marks forbidden pairs.
pub fn parse_explicit_cost<T: Real>(text: &str, source_name: &str) -> Result<CostFunction<T>> {
    let mut cols = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, fields) in records(text, source_name)? {
        if *cols.get_or_insert(fields.len()) != fields.len() {
            return Err(parse_err(source_name, line, format!("expected {} columns, found {}", cols.unwrap_or(0), fields.len())));
        }
        for f in &fields {
            let v: T = parse_value(f, source_name, line)?;
            if v.is_nan() || v == T::neg_infinity() {
                return Err(parse_err(source_name, line, format!("cost entry {f:?} must be a number or inf")));
            }
            data.push(v);
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| parse_err(source_name, 1, "empty cost table"))?;
    CostFunction::explicit(rows, cols, data)
}

pub fn read_explicit_cost<T: Real>(path: &Path) -> Result<CostFunction<T>> {
    parse_explicit_cost(&read_file(path)?, &path.display().to_string())
}

/// `row,col,value` lines with a `row,col,value` header.
pub fn format_triples<T: Real>(triples: &[(usize, usize, T)]) -> String {
    let mut out = String::from("row,col,value\n");
    for (r, c, v) in triples {
        let _ = writeln!(out, "{r},{c},{}", v.as_f64());
    }
    out
}

pub fn write_triples<T: Real>(path: &Path, triples: &[(usize, usize, T)]) -> Result<()> {
    write_file(path, &format_triples(triples))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measure_round_trip_is_bit_identical() {
        let grid = GridGeometry::new(vec![2, 3], 0.1).unwrap();
        let w = vec![0.1, 1.0 / 3.0, 0.0, 1e-300, 2.5e-17, std::f64::consts::PI];
        let text = format_measure(&grid, &w).unwrap();
        assert!(text.starts_with("# shape: 2 3 spacing: 0.1\n"));
        let (g2, w2) = parse_measure::<f64>(&text, "t").unwrap();
        assert_eq!(g2, grid);
        assert_eq!(w.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), w2.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn measure_errors_name_the_line() {
        let err = parse_measure::<f64>("# shape: 3 spacing: 0.5\n1\nx\n2\n", "m.csv").unwrap_err();
        assert_eq!(err.to_string(), "m.csv:3: not a number: \"x\"");
        assert!(parse_measure::<f64>("# shape: 3 spacing: 0.5\n1\n2\n", "m").is_err());
        assert!(parse_measure::<f64>("1\n2\n", "m").is_err());
        assert!(parse_measure::<f64>("# shape: 1 spacing: 1\n-1\n", "m").is_err());
    }

    #[test]
    fn grid_values_allow_inf() {
        let (_, v) = parse_grid_values::<f64>("# shape: 3 spacing: 0.5\n-1\ninf\n2\n", "p").unwrap();
        assert_eq!(v, vec![-1.0, f64::INFINITY, 2.0]);
        assert!(parse_measure::<f64>("# shape: 1 spacing: 1\ninf\n", "m").is_err());
        assert!(parse_grid_values::<f64>("# shape: 1 spacing: 1\nnan\n", "p").is_err());
    }

    #[test]
    fn explicit_cost_accepts_inf() {
        let c = parse_explicit_cost::<f64>("0, 1, inf\n2,3,4\n", "c").unwrap();
        assert_eq!((c.x_len(), c.y_len()), (2, 3));
        assert_eq!(c.eval(0, 2), f64::INFINITY);
        assert_eq!(c.eval(1, 0), 2.0);
        let err = parse_explicit_cost::<f64>("0,1\n2\n", "c").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn triples_format() {
        assert_eq!(format_triples(&[(0, 1, 0.5), (2, 0, 0.25)]), "row,col,value\n0,1,0.5\n2,0,0.25\n");
    }
}
