//! Delimited text tables. The delimiter follows the file extension: `,` for
//! `.csv`, tab for everything else.

use std::fmt::Display;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Table {
    pub header: Vec<String>,
    /// Data rows tagged with their 1-based line number in the file.
    pub rows: Vec<(usize, Vec<String>)>,
}

pub fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => b',',
        _ => b'\t',
    }
}

/// Reads a table with a header row. Rows whose width differs from the header
/// are rejected with their line number.
pub fn read_table(path: &Path) -> Result<Table> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter_for(path))
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let mut header: Option<Vec<String>> = None;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        let fields: Vec<String> = record.iter().map(|s| s.trim().to_string()).collect();
        if fields.len() == 1 && fields[0].is_empty() {
            continue;
        }
        match &header {
            None => header = Some(fields),
            Some(h) => {
                if fields.len() != h.len() {
                    return Err(Error::Parse {
                        line,
                        message: format!(
                            "expected {} fields, found {}",
                            h.len(),
                            fields.len()
                        ),
                    });
                }
                rows.push((line, fields));
            }
        }
    }
    let header = header.ok_or(Error::Parse {
        line: 1,
        message: "missing header row".into(),
    })?;
    Ok(Table { header, rows })
}

/// Writes a header plus rows. Values go through `Display`, so floats use the
/// shortest representation that round-trips.
pub fn write_table<S, R, V>(path: &Path, header: &[S], rows: R) -> Result<()>
where
    S: AsRef<str>,
    R: IntoIterator<Item = Vec<V>>,
    V: Display,
{
    let sep = delimiter_for(path) as char;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let head: Vec<&str> = header.iter().map(|s| s.as_ref()).collect();
    writeln!(out, "{}", head.join(&sep.to_string())).map_err(io)?;
    for row in rows {
        let mut first = true;
        for v in row {
            if !first {
                write!(out, "{sep}").map_err(io)?;
            }
            first = false;
            write!(out, "{v}").map_err(io)?;
        }
        writeln!(out).map_err(io)?;
    }
    out.flush().map_err(io)
}
