//! Plain-text formats for markets, matrix pairs and matchings.
//!
//! A matrix pair is a header line `rows cols`, the `rows x cols` left
//! matrix in row-major order, a blank line, then the `cols x rows` right
//! matrix. Markets store `(a_hat, b_hat)`; latent values store `(X, Y)`.
//! Entries are written with 17 significant digits so files round-trip
//! bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{MmlError, Result};
use crate::market::{CanonicalMarket, ROW_SUM_TOL};
use crate::matching::{Matching, Scope};
use crate::sampling::LatentValues;

fn write_matrix(out: &mut String, m: &Array2<f64>) {
    for row in m.rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
}

pub fn format_matrix_pair(left: &Array2<f64>, right: &Array2<f64>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} {}", left.nrows(), left.ncols());
    write_matrix(&mut out, left);
    out.push('\n');
    write_matrix(&mut out, right);
    out
}

fn parse_err(line: usize, message: impl Into<String>) -> MmlError {
    MmlError::Parse {
        line,
        message: message.into(),
    }
}

/// Parses a matrix pair; returns `(left, right)`.
pub fn parse_matrix_pair(text: &str) -> Result<(Array2<f64>, Array2<f64>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(k, l)| (k + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let (hline, header) = lines.next().ok_or_else(|| parse_err(1, "empty file"))?;
    let dims: Vec<usize> = header
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(hline, format!("bad dimension `{t}`"))))
        .collect::<Result<_>>()?;
    let [rows, cols] = dims[..] else {
        return Err(parse_err(hline, "header must be `n_men n_women`"));
    };
    let mut read = |r: usize, c: usize| -> Result<Array2<f64>> {
        let mut data = Vec::with_capacity(r * c);
        for _ in 0..r {
            let (ln, line) = lines
                .next()
                .ok_or_else(|| parse_err(text.lines().count(), "unexpected end of file"))?;
            let before = data.len();
            for tok in line.split_whitespace() {
                data.push(
                    tok.parse::<f64>()
                        .map_err(|_| parse_err(ln, format!("bad number `{tok}`")))?,
                );
            }
            if data.len() - before != c {
                return Err(parse_err(ln, format!("expected {c} entries, got {}", data.len() - before)));
            }
        }
        Ok(Array2::from_shape_vec((r, c), data).expect("row lengths checked"))
    };
    let left = read(rows, cols)?;
    let right = read(cols, rows)?;
    if let Some((ln, _)) = lines.next() {
        return Err(parse_err(ln, "trailing data after the second matrix"));
    }
    Ok((left, right))
}

fn rows_canonical(m: &Array2<f64>) -> bool {
    m.rows().into_iter().all(|r| (r.sum() - 1.0).abs() <= ROW_SUM_TOL)
}

/// Reads a market. Rows already summing to 1 are kept bit-for-bit;
/// otherwise the scores are treated as raw and normalized.
pub fn parse_market(text: &str) -> Result<CanonicalMarket> {
    let (a, b) = parse_matrix_pair(text)?;
    if rows_canonical(&a) && rows_canonical(&b) {
        CanonicalMarket::from_canonical(a, b)
    } else {
        CanonicalMarket::from_raw(&a, &b)
    }
}

pub fn format_market(market: &CanonicalMarket) -> String {
    format_matrix_pair(market.a_hat(), market.b_hat())
}

pub fn read_market(path: &Path) -> Result<CanonicalMarket> {
    parse_market(&fs::read_to_string(path)?)
}

pub fn write_market(path: &Path, market: &CanonicalMarket) -> Result<()> {
    Ok(fs::write(path, format_market(market))?)
}

pub fn write_latent(path: &Path, values: &LatentValues) -> Result<()> {
    Ok(fs::write(path, format_matrix_pair(values.x(), values.y()))?)
}

/// Matched pairs as 1-based `man woman` lines, sorted by man.
pub fn format_matching(mu: &Matching) -> String {
    mu.pairs()
        .into_iter()
        .map(|(i, j)| format!("{} {}\n", i + 1, j + 1))
        .collect()
}

pub fn parse_matching(text: &str, n_men: usize, n_women: usize, scope: Scope) -> Result<Matching> {
    let mut pairs = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let nums: Vec<usize> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| parse_err(k + 1, format!("bad index `{t}`"))))
            .collect::<Result<_>>()?;
        match nums[..] {
            [i, j] if i >= 1 && j >= 1 => pairs.push((i - 1, j - 1)),
            _ => return Err(parse_err(k + 1, "expected `man woman` with 1-based indices")),
        }
    }
    Matching::from_pairs(n_men, n_women, &pairs, scope)
}
