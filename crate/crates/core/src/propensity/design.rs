use std::collections::BTreeSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::dataset::{HouseholdRecord, Region};
use crate::error::{Error, Result};

/// Column names in design order. Northeast is the omitted region.
pub const DESIGN_COLUMNS: [&str; 16] = [
    "intercept",
    "age",
    "gender_man",
    "farm_area",
    "race_white",
    "education",
    "household_size",
    "mobile_phone",
    "internet",
    "transport",
    "farm_income",
    "other_income",
    "region_north",
    "region_central_west",
    "region_southeast",
    "region_south",
];

/// Columns that may be log-transformed.
const TRANSFORMABLE: [&str; 6] = [
    "age",
    "farm_area",
    "education",
    "household_size",
    "farm_income",
    "other_income",
];

/// Optional covariate transformations; none by default.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct DesignOptions {
    /// Columns replaced by `ln(1 + x)`.
    pub log1p: BTreeSet<String>,
}

impl DesignOptions {
    pub fn validate(&self) -> Result<()> {
        match self
            .log1p
            .iter()
            .find(|c| !TRANSFORMABLE.contains(&c.as_str()))
        {
            Some(c) => Err(Error::Config(format!(
                "`{c}` cannot be log-transformed (allowed: {})",
                TRANSFORMABLE.join(", ")
            ))),
            None => Ok(()),
        }
    }
}

/// Covariate matrix with an intercept column, one row per record.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub ids: Vec<String>,
    pub matrix: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(DESIGN_COLUMNS.len(), Vec::len);
        let matrix = DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]);
        DesignMatrix { ids, matrix }
    }

    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.matrix.row(i).iter().copied().collect()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select_rows(&self, indices: &[usize]) -> DesignMatrix {
        DesignMatrix {
            ids: indices.iter().map(|&i| self.ids[i].clone()).collect(),
            matrix: self.matrix.select_rows(indices),
        }
    }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// The covariate row of one record, in `DESIGN_COLUMNS` order.
pub fn design_row(record: &HouseholdRecord, options: &DesignOptions) -> Result<Vec<f64>> {
    let need_flag = |v: Option<bool>, field: &str| {
        v.map(flag).ok_or_else(|| Error::MissingValue {
            record: record.id.clone(),
            field: field.into(),
        })
    };
    let need_real = |v: Option<f64>, field: &str| {
        v.ok_or_else(|| Error::MissingValue {
            record: record.id.clone(),
            field: field.into(),
        })
    };
    let region = record.macro_region.one_hot();
    let mut row = vec![
        1.0,
        record.age as f64,
        flag(record.gender_man),
        record.farm_area,
        flag(record.race_white),
        record.education as f64,
        record.household_size as f64,
        need_flag(record.mobile_phone, "mobile_phone")?,
        need_flag(record.internet, "internet")?,
        need_flag(record.transport, "transport")?,
        need_real(record.farm_income, "farm_income")?,
        need_real(record.other_income, "other_income")?,
        region[Region::North as usize],
        region[Region::CentralWest as usize],
        region[Region::Southeast as usize],
        region[Region::South as usize],
    ];
    for name in &options.log1p {
        if let Some(j) = DESIGN_COLUMNS.iter().position(|c| c == name) {
            row[j] = row[j].ln_1p();
        }
    }
    Ok(row)
}

/// Builds the 16-column design matrix (intercept, eleven covariates, four
/// region indicators).
pub fn build_design(records: &[HouseholdRecord]) -> Result<DesignMatrix> {
    build_design_with(records, &DesignOptions::default())
}

pub fn build_design_with(
    records: &[HouseholdRecord],
    options: &DesignOptions,
) -> Result<DesignMatrix> {
    options.validate()?;
    let rows = records
        .iter()
        .map(|r| design_row(r, options))
        .collect::<Result<Vec<_>>>()?;
    Ok(DesignMatrix::from_rows(
        records.iter().map(|r| r.id.clone()).collect(),
        &rows,
    ))
}
