//! Household schema, CSV ingestion, one-hot encoding and seeded splits.

mod csvio;
mod encode;
mod record;
mod schema;

pub use csvio::{load_csv, read_csv, write_csv, ID_COLUMN, LABEL_COLUMN, P_ES_COLUMN, P_TH_COLUMN};
pub use encode::{
    one_hot_encode, split, split_indices, train_size, ColumnInfo, ColumnKind, EncodedDataset, SplitPair,
};
pub use record::{binarize, urgency_ratio, HouseholdRecord, Intervention, ParseInterventionError, Value};
pub use schema::{FeatureKind, FeatureSpec, Schema, UnparseablePolicy, HOUSEHOLD_SCHEMA_JSON};
