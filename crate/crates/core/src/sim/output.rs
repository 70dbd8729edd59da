use std::path::Path;

use serde::Serialize;

use crate::error::Result;

use super::run::{GridRow, MCSummary, ReplicationRow, SCHEMA_VERSION};

fn write_rows<S: Serialize>(rows: impl IntoIterator<Item = S>, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_replications_csv(rows: &[ReplicationRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, path.as_ref())
}

pub fn write_summary_json(summary: &MCSummary, path: impl AsRef<Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_grid_csv(rows: &[GridRow], path: impl AsRef<Path>) -> Result<()> {
    write_rows(rows, path.as_ref())
}

#[derive(Serialize)]
struct ErrorRow<'a> {
    schema_version: u32,
    beta_ra: f64,
    estimator: &'a str,
    variant: &'a str,
    replication: u64,
    error: f64,
}

/// Estimation errors of every contrast, one row per replication, for
/// box plots by estimator and `beta_ra`.
pub fn write_errors_csv<'a>(rows: impl IntoIterator<Item = &'a ReplicationRow>, path: impl AsRef<Path>) -> Result<()> {
    let errors = rows.into_iter().filter(|r| r.estimand == "contrast").map(|r| ErrorRow {
        schema_version: SCHEMA_VERSION,
        beta_ra: r.beta_ra,
        estimator: r.estimator.name(),
        variant: &r.variant,
        replication: r.replication,
        error: r.estimate - r.truth,
    });
    write_rows(errors, path.as_ref())
}
