//! Datasets: synthetic generation, TU-format ingestion and a JSONL
//! interchange format.

mod dataset;
pub mod jsonl;
pub mod synthetic;
pub mod tu;

pub use dataset::{Dataset, Target};
pub use jsonl::{read_jsonl, read_records, write_jsonl, write_records, GraphRecord};
pub use synthetic::{generate_synthetic, SyntheticSpec};
pub use tu::{parse_tu, parse_tu_named};

use std::path::PathBuf;

/// Directory holding the small TU-format fixtures shipped with the crate
/// (`toy` and `letter-mini`).
pub fn fixture_dir(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}
