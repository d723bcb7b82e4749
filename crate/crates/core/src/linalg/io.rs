//! Plain-text coordinate format: a header `n nnz` followed by one
//! `row col value` line per stored lower-triangle entry (0-based).

use std::fmt::Write as _;
use std::path::Path;

use super::sparse::{SymSparse, Triplets};
use super::{LinalgError, Result};

pub fn format_coordinate(a: &SymSparse) -> String {
    let mut s = String::new();
    writeln!(s, "{} {}", a.dim(), a.nnz_lower()).unwrap();
    for i in 0..a.dim() {
        for (j, v) in a.lower_row(i) {
            writeln!(s, "{i} {j} {v:e}").unwrap();
        }
    }
    s
}

pub fn parse_coordinate(text: &str) -> Result<SymSparse> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'));
    let (hl, header) = lines.next().ok_or(LinalgError::Parse { line: 0, reason: "empty input".into() })?;
    let mut it = header.split_whitespace();
    let mut field = |name: &str| -> Result<usize> {
        it.next()
            .ok_or_else(|| LinalgError::Parse { line: hl + 1, reason: format!("missing {name}") })?
            .parse()
            .map_err(|e| LinalgError::Parse { line: hl + 1, reason: format!("{name}: {e}") })
    };
    let n = field("n")?;
    let nnz = field("nnz")?;
    let mut t = Triplets::with_capacity(n, n, nnz);
    for (ln, line) in lines {
        let err = |r: String| LinalgError::Parse { line: ln + 1, reason: r };
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", f.len())));
        }
        let i: usize = f[0].parse().map_err(|e| err(format!("row: {e}")))?;
        let j: usize = f[1].parse().map_err(|e| err(format!("col: {e}")))?;
        let v: f64 = f[2].parse().map_err(|e| err(format!("value: {e}")))?;
        if i >= n || j > i {
            return Err(err(format!("entry ({i}, {j}) outside lower triangle of order {n}")));
        }
        t.push(i, j, v);
    }
    if t.len() != nnz {
        return Err(LinalgError::Parse { line: hl + 1, reason: format!("header declares {nnz} entries, found {}", t.len()) });
    }
    Ok(t.to_csr().to_sym_lower())
}

pub fn write_coordinate(path: &Path, a: &SymSparse) -> Result<()> {
    std::fs::write(path, format_coordinate(a)).map_err(|e| LinalgError::Io(e.to_string()))
}

pub fn read_coordinate(path: &Path) -> Result<SymSparse> {
    let text = std::fs::read_to_string(path).map_err(|e| LinalgError::Io(e.to_string()))?;
    parse_coordinate(&text)
}
