//! Dataset bundles on disk: `data.csv` plus `meta.json`.

use std::path::{Path, PathBuf};

use llmexpert_core::table::format_number;
use llmexpert_core::{Cell, ColumnSchema, TableBundle, TableError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::{write_atomic, write_json};

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Meta {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("data.csv header {found:?} does not match meta.json columns {expected:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("{path}: {source}")]
    Table { path: PathBuf, source: TableError },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleMeta {
    /// Defaults to the directory name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<String>,
    pub description: String,
    pub target: String,
    pub columns: Vec<ColumnSchema>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BundleError + '_ {
    move |source| BundleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_bundle(dir: &Path) -> Result<TableBundle, BundleError> {
    let meta_path = dir.join("meta.json");
    let data_path = dir.join("data.csv");
    let meta_bytes = std::fs::read(&meta_path).map_err(io_err(&meta_path))?;
    let meta: BundleMeta = serde_json::from_slice(&meta_bytes).map_err(|source| BundleError::Meta {
        path: meta_path.clone(),
        source,
    })?;
    let csv_err = |source| BundleError::Csv {
        path: data_path.clone(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(&data_path)
        .map_err(csv_err)?;
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    let expected: Vec<String> = meta.columns.iter().map(|c| c.name.clone()).collect();
    if header != expected {
        return Err(BundleError::HeaderMismatch {
            expected,
            found: header,
        });
    }
    let table_err = |source| BundleError::Table {
        path: data_path.clone(),
        source,
    };
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != meta.columns.len() {
            return Err(table_err(TableError::RowWidth {
                row: r,
                expected: meta.columns.len(),
                found: record.len(),
            }));
        }
        let row = meta
            .columns
            .iter()
            .zip(record.iter())
            .map(|(col, raw)| col.parse_cell(r, raw))
            .collect::<Result<Vec<Cell>, _>>()
            .map_err(table_err)?;
        rows.push(row);
    }
    let name = meta.name.clone().unwrap_or_else(|| {
        dir.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "bundle".into())
    });
    TableBundle::new(name, meta.description, meta.columns, &meta.target, rows)
        .map(|b| b.with_domain(meta.domain))
        .map_err(table_err)
}

/// Renders the rows of a bundle as RFC-4180 CSV with a header.
pub fn table_csv(bundle: &TableBundle) -> Vec<u8> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
    let schema = bundle.schema();
    w.write_record(schema.iter().map(|c| c.name.as_str()))
        .expect("writing to memory");
    for row in bundle.rows() {
        w.write_record(schema.iter().zip(row).map(|(c, cell)| match cell {
            Cell::Number(v) => format_number(*v),
            _ => c.render(cell),
        }))
        .expect("writing to memory");
    }
    w.into_inner().expect("writing to memory")
}

pub fn save_bundle(dir: &Path, bundle: &TableBundle) -> Result<(), BundleError> {
    let meta = BundleMeta {
        name: Some(bundle.name().to_string()),
        domain: bundle.domain().map(String::from),
        description: bundle.description().to_string(),
        target: bundle.target().name.clone(),
        columns: bundle.schema().to_vec(),
    };
    let meta_path = dir.join("meta.json");
    write_json(&meta_path, &meta).map_err(io_err(&meta_path))?;
    let data_path = dir.join("data.csv");
    write_atomic(&data_path, &table_csv(bundle)).map_err(io_err(&data_path))
}
