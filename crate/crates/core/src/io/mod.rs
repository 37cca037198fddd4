//! Dataset ingestion, column transforms and report rendering.

mod dataset;
mod report;
mod transform;

pub use dataset::{load_dataset, read_dataset, write_dataset, ColumnSchema, LoadedDataset};
pub use report::{
    emit_qq, emit_report, emit_summary, emit_test, parse_structured, wald_p_value, NamedFit, ReportFormat,
};
pub use transform::{split_sample, standardize_columns, standardize_response, ColumnTransform, Split};
