//! Survey ingestion and family-farm identification.
//!
//! Parsing maps delimited columns onto [`HouseholdRecord`]s through a
//! [`Schema`]. The filters are plain functions over owned record vectors and
//! are applied in the order: family-farm criteria, unanswered outcome,
//! private credit/assistance, imputation.

mod filter;
mod record;
mod schema;

pub use filter::{
    apply_family_farm_filter, drop_missing_outcome, exclude_private_services, impute_missing,
    split_by_area, FilterConfig, Imputation, ImputationReport,
};
pub use record::{EmploymentClass, HouseholdRecord, Region};
pub use schema::{parse_survey, write_survey, Field, Schema};
