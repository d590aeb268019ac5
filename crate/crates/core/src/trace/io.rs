//! Text trace format: a `tables: n1,n2,...` header followed by one
//! `table_id,row_id` access per line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{TableLayout, Trace};
use crate::error::{Error, Result};

pub fn render_trace(trace: &Trace) -> String {
    let sizes: Vec<String> = trace.layout().sizes().iter().map(u64::to_string).collect();
    let mut out = String::with_capacity(16 + trace.len() * 8);
    let _ = writeln!(out, "tables: {}", sizes.join(","));
    for a in trace.accesses() {
        let _ = writeln!(out, "{},{}", a.table_id, a.row_id);
    }
    out
}

pub fn parse_trace(text: &str) -> Result<Trace> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        msg: "missing `tables:` header".into(),
    })?;
    let sizes = parse_header(header)?;
    let layout = TableLayout::new(sizes).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;

    let mut accesses = Vec::new();
    for (i, raw) in lines {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let (t, r) = line.split_once(',').ok_or_else(|| Error::Parse {
            line: line_no,
            msg: format!("expected `table_id,row_id`, got {line:?}"),
        })?;
        let table_id: u32 = t.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad table id {t:?}"),
        })?;
        let row_id: u64 = r.trim().parse().map_err(|_| Error::Parse {
            line: line_no,
            msg: format!("bad row id {r:?}"),
        })?;
        let ix = layout.index(table_id, row_id).map_err(|e| match e {
            Error::Validation { msg, .. } => Error::validation(Some(line_no), msg),
            other => other,
        })?;
        accesses.push(ix);
    }
    Trace::new(layout, accesses)
}

pub(crate) fn parse_header(header: &str) -> Result<Vec<u64>> {
    let rest = header.trim().strip_prefix("tables:").ok_or_else(|| Error::Parse {
        line: 1,
        msg: format!("expected `tables:` header, got {header:?}"),
    })?;
    rest.split(',')
        .map(|s| {
            s.trim().parse::<u64>().map_err(|_| Error::Parse {
                line: 1,
                msg: format!("bad table size {s:?}"),
            })
        })
        .collect()
}

pub fn write_trace(trace: &Trace, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_trace(trace))?;
    Ok(())
}

pub fn read_trace(path: impl AsRef<Path>) -> Result<Trace> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    parse_trace(&fs::read_to_string(path)?)
}
