//! Data preparation: transformation codes, standardisation, lag matrices,
//! CSV ingestion and the synthetic DGP.

mod dgp;
mod ingest;
mod transform;

pub use dgp::{simulate_dgp, DgpRealization, DgpSpec};
pub use ingest::{
    assemble_panel, load_panel, load_panel_window, parse_date, quarter_label, read_metadata, read_raw_data, restrict_dates, write_meta_csv,
    write_panel_csv, SeriesMeta,
};
pub use transform::{
    apply_tcode, build_lag_matrix, invert_tcode, lag_vector, standardize, transform_panel, Standardization, TransformCode,
};
