//! CSV ingestion with strict validation.
//!
//! Input contract: a header row of item names followed by integer category
//! codes starting at 1. Cells equal to the declared missing token (or left
//! empty) mark their whole row for a counted complete-case drop; every cell
//! of a kept row must parse. Nothing is coerced silently — an anomaly is
//! either an error or a reported drop.
//!
//! Row/column numbers in errors are file coordinates: the header is line 1
//! and columns count from 1.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::embedding::OrdinalDataset;
use crate::error::{Error, Result};

/// Declared category counts by item name. Items not listed fall back to
/// the inferred count (the maximum observed code).
pub type SchemaSidecar = BTreeMap<String, usize>;

pub fn read_schema(path: &Path) -> Result<SchemaSidecar> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    /// Data rows in the file.
    pub n_read: usize,
    /// Rows dropped for containing at least one missing cell.
    pub n_dropped: usize,
    /// Rows in the resulting dataset.
    pub n_kept: usize,
}

pub fn ingest_csv(
    path: &Path,
    missing_token: Option<&str>,
    schema: Option<&SchemaSidecar>,
) -> Result<(OrdinalDataset, IngestStats)> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)?;

    let names: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    if names.is_empty() || names.iter().any(|n| n.is_empty()) {
        return Err(Error::SchemaMismatch(
            "header row must name every column".into(),
        ));
    }
    for (j, name) in names.iter().enumerate() {
        if names[..j].contains(name) {
            return Err(Error::SchemaMismatch(format!(
                "duplicate item name {name:?} in header"
            )));
        }
    }
    let j_items = names.len();

    let is_missing =
        |cell: &str| cell.is_empty() || missing_token.is_some_and(|tok| cell == tok);

    let mut rows: Vec<Vec<u32>> = Vec::new();
    let mut n_read = 0usize;
    let mut n_dropped = 0usize;
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let line = idx + 2;
        n_read += 1;
        if record.len() != j_items {
            return Err(Error::Parse {
                row: line,
                col: record.len().min(j_items) + 1,
                message: format!("expected {j_items} fields, found {}", record.len()),
            });
        }
        if record.iter().any(is_missing) {
            n_dropped += 1;
            continue;
        }
        let mut row = Vec::with_capacity(j_items);
        for (j, cell) in record.iter().enumerate() {
            let code: i64 = cell.parse().map_err(|_| Error::NonIntegerCell {
                row: line,
                col: j + 1,
                value: cell.to_string(),
            })?;
            if code < 1 {
                return Err(Error::Parse {
                    row: line,
                    col: j + 1,
                    message: format!(
                        "code {code} is not 1-based; remap categories so the smallest code is 1"
                    ),
                });
            }
            if code > u32::MAX as i64 {
                return Err(Error::Parse {
                    row: line,
                    col: j + 1,
                    message: format!("code {code} exceeds the representable range"),
                });
            }
            row.push(code as u32);
        }
        rows.push(row);
    }

    if n_read == 0 {
        return Err(Error::EmptyDataset);
    }
    if rows.is_empty() {
        return Err(Error::AllRowsDropped { dropped: n_dropped });
    }

    let n = rows.len();
    let mut values = Array2::zeros((n, j_items));
    for (i, row) in rows.iter().enumerate() {
        for (j, &code) in row.iter().enumerate() {
            values[[i, j]] = code;
        }
    }

    let category_counts: Vec<usize> = (0..j_items)
        .map(|j| {
            let declared = schema.and_then(|s| s.get(&names[j]).copied());
            declared.unwrap_or_else(|| rows.iter().map(|r| r[j] as usize).max().unwrap_or(0))
        })
        .collect();

    let stats = IngestStats {
        n_read,
        n_dropped,
        n_kept: n,
    };
    Ok((OrdinalDataset::new(values, names, category_counts)?, stats))
}
