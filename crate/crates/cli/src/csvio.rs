//! Subject files: header `entry_time,time_on_study,event[,dropout]`, one
//! subject per row, flags written as 0/1.

use std::io::{Read, Write};
use std::path::Path;

use oslr_core::analysis::SubjectRecord;

use crate::CliError;

const REQUIRED: [&str; 3] = ["entry_time", "time_on_study", "event"];

fn flag(field: &str, name: &str) -> Result<bool, String> {
    match field.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        other => Err(format!("{name} must be 0 or 1, got '{other}'")),
    }
}

fn number(field: &str, name: &str) -> Result<f64, String> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| format!("{name} is not a number: '{field}'"))?;
    if !v.is_finite() {
        return Err(format!("{name} must be finite, got '{field}'"));
    }
    Ok(v)
}

/// Parses subject rows; `origin` only labels error messages.
pub fn read_subjects<R: Read>(reader: R, origin: &Path) -> Result<Vec<SubjectRecord>, CliError> {
    let fail = |line: u64, message: String| CliError::Ingest {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header = rdr.headers().map_err(|e| fail(1, e.to_string()))?.clone();
    let names: Vec<&str> = header.iter().collect();
    let with_dropout = match names.as_slice() {
        [a, b, c] if [*a, *b, *c] == REQUIRED => false,
        [a, b, c, "dropout"] if [*a, *b, *c] == REQUIRED => true,
        _ => {
            return Err(fail(
                1,
                format!(
                    "header must be 'entry_time,time_on_study,event[,dropout]', got '{}'",
                    names.join(",")
                ),
            ))
        }
    };
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            fail(line, e.to_string())
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let parse = || -> Result<SubjectRecord, String> {
            Ok(SubjectRecord {
                entry_time: number(&row[0], "entry_time")?,
                time_on_study: number(&row[1], "time_on_study")?,
                event: flag(&row[2], "event")?,
                dropout: if with_dropout {
                    Some(flag(&row[3], "dropout")?)
                } else {
                    None
                },
            })
        };
        out.push(parse().map_err(|m| fail(line, m))?);
    }
    if out.is_empty() {
        return Err(fail(1, "file has no subject rows".into()));
    }
    Ok(out)
}

pub fn read_subjects_file(path: &Path) -> Result<Vec<SubjectRecord>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_subjects(std::io::BufReader::new(file), path)
}

/// Writes the dropout column when every record carries the flag.
pub fn write_subjects<W: Write>(writer: W, subjects: &[SubjectRecord]) -> Result<(), CliError> {
    let with_dropout = subjects.iter().all(|s| s.dropout.is_some());
    let mut w = csv::Writer::from_writer(writer);
    let ser = |e: csv::Error| CliError::Serialise(e.to_string());
    if with_dropout {
        w.write_record(["entry_time", "time_on_study", "event", "dropout"])
            .map_err(ser)?;
    } else {
        w.write_record(REQUIRED).map_err(ser)?;
    }
    for s in subjects {
        let mut rec = vec![
            s.entry_time.to_string(),
            s.time_on_study.to_string(),
            (s.event as u8).to_string(),
        ];
        if with_dropout {
            rec.push(((s.dropout == Some(true)) as u8).to_string());
        }
        w.write_record(&rec).map_err(ser)?;
    }
    w.flush().map_err(|e| CliError::Serialise(e.to_string()))
}
