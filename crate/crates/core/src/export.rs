//! Plain-text matrix dumps shared by the ground-truth and estimate grids.
//!
//! Layout: a `rows,cols,box_size_m` header line, one line with those three
//! numbers, `rows` lines of comma-separated values and, when a mask is
//! present, `rows` more lines of `0`/`1` flags.

use std::io::{self, BufRead, Write};

use crate::grid::BOX_SIZE_M;

pub const MATRIX_HEADER: &str = "rows,cols,box_size_m";

pub(crate) fn write_matrix<W: Write>(
    mut out: W,
    rows: usize,
    cols: usize,
    values: &[f64],
    mask: Option<&[bool]>,
) -> io::Result<()> {
    assert_eq!(values.len(), rows * cols);
    writeln!(out, "{MATRIX_HEADER}")?;
    writeln!(out, "{rows},{cols},{BOX_SIZE_M}")?;
    for row in values.chunks(cols) {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    if let Some(mask) = mask {
        assert_eq!(mask.len(), rows * cols);
        for row in mask.chunks(cols) {
            let line: Vec<&str> = row.iter().map(|m| if *m { "1" } else { "0" }).collect();
            writeln!(out, "{}", line.join(","))?;
        }
    }
    out.flush()
}

/// A matrix read back from a dump.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDump {
    pub rows: usize,
    pub cols: usize,
    pub box_size_m: f64,
    pub values: Vec<f64>,
    pub mask: Option<Vec<bool>>,
}

fn bad(msg: impl Into<String>) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg.into())
}

pub fn read_matrix<R: BufRead>(input: R) -> io::Result<MatrixDump> {
    let mut lines = input.lines();
    let mut next = || -> io::Result<Option<String>> { lines.next().transpose() };
    match next()? {
        Some(h) if h.trim() == MATRIX_HEADER => {}
        _ => return Err(bad("missing matrix header")),
    }
    let dims = next()?.ok_or_else(|| bad("missing dimensions"))?;
    let dims: Vec<&str> = dims.trim().split(',').collect();
    if dims.len() != 3 {
        return Err(bad("dimension line needs three fields"));
    }
    let rows: usize = dims[0].parse().map_err(|_| bad("bad row count"))?;
    let cols: usize = dims[1].parse().map_err(|_| bad("bad column count"))?;
    let box_size_m: f64 = dims[2].parse().map_err(|_| bad("bad box size"))?;

    let mut values = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let line = next()?.ok_or_else(|| bad(format!("missing value row {r}")))?;
        let row: Result<Vec<f64>, _> = line.trim().split(',').map(str::parse).collect();
        let row = row.map_err(|_| bad(format!("bad number in row {r}")))?;
        if row.len() != cols {
            return Err(bad(format!("row {r} has {} columns", row.len())));
        }
        values.extend(row);
    }

    let mut mask = Vec::new();
    while let Some(line) = next()? {
        if line.trim().is_empty() {
            continue;
        }
        for f in line.trim().split(',') {
            match f {
                "0" => mask.push(false),
                "1" => mask.push(true),
                _ => return Err(bad("mask entries must be 0 or 1")),
            }
        }
    }
    let mask = match mask.len() {
        0 => None,
        n if n == rows * cols => Some(mask),
        n => {
            return Err(bad(format!(
                "mask has {n} entries, expected {}",
                rows * cols
            )))
        }
    };
    Ok(MatrixDump {
        rows,
        cols,
        box_size_m,
        values,
        mask,
    })
}
