//! Experiment cells, the language matrix, summary statistics and reports.

mod cell;
mod config;
mod matrix;
mod report;
mod stats;

use std::path::{Path, PathBuf};

pub use cell::{run_cell, run_cell_reusing, CellResult, Pipeline, TaskRecord};
pub use config::{CellTemplate, EmbeddingConfig, ExperimentConfig, MatrixConfig, RetrieverKind, Setting};
pub use matrix::{cache_key, plan_matrix, run_matrix, run_plan, CellLogEntry, MatrixResult, PlannedCell};
pub use report::{audit_jsonl, categories_csv, category_tables, cells_csv, markdown_report, write_reports, ReportFiles};
pub use stats::{
    aggregate_cells, aggregate_stats, categorize_perturbation_effects, delta_table, relative_delta, CaseCategories,
    Category, DeltaCell, DeltaTable, Means, ResultsTable, Stats,
};

use crate::execute::ExecError;
use crate::generate::GenerateError;
use crate::lang::Language;
use crate::retrieve::RetrieveError;

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("no tasks for cell {0}")]
    EmptyTaskSet(String),
    #[error("no baseline result for {0}")]
    MissingBaseline(Language),
    #[error("cells cover different task sets or language pairs")]
    TaskSetMismatch,
    #[error("{cell}, family `{family_id}`: {source}")]
    Retrieve {
        cell: String,
        family_id: String,
        #[source]
        source: RetrieveError,
    },
    #[error("{cell}, family `{family_id}`: {source}")]
    Generate {
        cell: String,
        family_id: String,
        #[source]
        source: GenerateError,
    },
    #[error("{cell}, family `{family_id}`: {source}")]
    Execute {
        cell: String,
        family_id: String,
        #[source]
        source: ExecError,
    },
    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ExperimentError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn retrieve(config: &ExperimentConfig, family_id: &str, source: RetrieveError) -> Self {
        ExperimentError::Retrieve {
            cell: config.label(),
            family_id: family_id.to_string(),
            source,
        }
    }

    pub(crate) fn generate(config: &ExperimentConfig, family_id: &str, source: GenerateError) -> Self {
        ExperimentError::Generate {
            cell: config.label(),
            family_id: family_id.to_string(),
            source,
        }
    }

    pub(crate) fn execute(config: &ExperimentConfig, family_id: &str, source: ExecError) -> Self {
        ExperimentError::Execute {
            cell: config.label(),
            family_id: family_id.to_string(),
            source,
        }
    }
}
