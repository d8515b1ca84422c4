//! Synthetic corpora, manifests, the benchmark matrix and its reports.

mod bench;
mod manifest;
mod report;
mod synth;


pub use bench::{
    aggregate, cell_seed, default_grid, parse_grid, run_bench, threads_from_env, Aggregate,
    BenchFailure, BenchResult, BenchRow, GridCell, Method, DEFAULT_AWGN_LEVELS, DEFAULT_DEBLUR,
};
pub use manifest::{
    assign_splits, load_clean_images, write_corpus, Manifest, ManifestEntry, Split,
    DEFAULT_TRAIN_FRACTION, MANIFEST_FILE,
};
pub use report::{
    aggregates_to_csv, failures_to_csv, markdown_table, parse_csv, read_csv, rows_to_csv, write_csv, CSV_HEADER,
};
pub use synth::{synth_corpus, synth_image};
