use serde::Serialize;

use crate::{config_err, Prepared, RunFailure, RunOutcome};

pub const TOOL_VERSION: &str = concat!("beacon ", env!("CARGO_PKG_VERSION"));

/// First line of every artifact. `#` keeps it a comment for TOML and for
/// CSV readers configured with a comment character.
pub fn header(hash: &str) -> String {
    format!("# {TOOL_VERSION} config_sha256={hash}\n")
}

pub fn write_text(p: &Prepared, name: &str, body: &str, outcome: &mut RunOutcome) -> Result<(), RunFailure> {
    let path = p.out.join(name);
    let text = header(&p.hash) + body;
    std::fs::write(&path, text).map_err(|e| config_err(format!("cannot write {}: {e}", path.display())))?;
    outcome.artifacts.push(path);
    Ok(())
}

fn csv_failure(e: impl std::fmt::Display) -> RunFailure {
    config_err(format!("csv encoding failed: {e}"))
}

pub fn rows_to_csv<T: Serialize>(rows: &[T]) -> Result<String, RunFailure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_failure)?;
    }
    let bytes = w.into_inner().map_err(csv_failure)?;
    String::from_utf8(bytes).map_err(csv_failure)
}

pub fn records_to_csv(head: &[String], records: &[Vec<String>]) -> Result<String, RunFailure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(head).map_err(csv_failure)?;
    for r in records {
        w.write_record(r).map_err(csv_failure)?;
    }
    let bytes = w.into_inner().map_err(csv_failure)?;
    String::from_utf8(bytes).map_err(csv_failure)
}

pub fn write_rows<T: Serialize>(
    p: &Prepared,
    name: &str,
    rows: &[T],
    outcome: &mut RunOutcome,
) -> Result<(), RunFailure> {
    let body = rows_to_csv(rows)?;
    write_text(p, name, &body, outcome)
}
