use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::lattice::{classify_cell, TreatmentCell};

/// Brazilian macro-region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    North,
    Northeast,
    CentralWest,
    Southeast,
    South,
}

impl Region {
    pub const ALL: [Region; 5] = [
        Region::North,
        Region::Northeast,
        Region::CentralWest,
        Region::Southeast,
        Region::South,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Region::North => "North",
            Region::Northeast => "Northeast",
            Region::CentralWest => "CentralWest",
            Region::Southeast => "Southeast",
            Region::South => "South",
        }
    }

    /// One-hot encoding in `Region::ALL` order.
    pub fn one_hot(self) -> [f64; 5] {
        let mut v = [0.0; 5];
        v[self as usize] = 1.0;
        v
    }
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Region {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        match key.as_str() {
            "north" => Ok(Region::North),
            "northeast" => Ok(Region::Northeast),
            "centralwest" | "midwest" => Ok(Region::CentralWest),
            "southeast" => Ok(Region::Southeast),
            "south" => Ok(Region::South),
            _ => Err(format!("unknown macro-region `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmploymentClass {
    /// Self-employed farm operator (may hire a small number of workers).
    Entrepreneur,
    /// Works on the household farm without remuneration.
    Unremunerated,
    Other,
}

impl EmploymentClass {
    pub fn name(self) -> &'static str {
        match self {
            EmploymentClass::Entrepreneur => "entrepreneur",
            EmploymentClass::Unremunerated => "unremunerated",
            EmploymentClass::Other => "other",
        }
    }
}

impl FromStr for EmploymentClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "entrepreneur" => Ok(EmploymentClass::Entrepreneur),
            "unremunerated" => Ok(EmploymentClass::Unremunerated),
            "other" => Ok(EmploymentClass::Other),
            _ => Err(format!("unknown employment class `{s}`")),
        }
    }
}

/// One surveyed household.
///
/// Only `mobile_phone`, `internet`, `transport`, `farm_income`,
/// `other_income`, `annual_gross_income` and `sold_output` may be missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseholdRecord {
    pub id: String,
    /// Age of the household head in years.
    pub age: u32,
    pub gender_man: bool,
    /// Owned or leased farm area in square metres.
    pub farm_area: f64,
    pub race_white: bool,
    /// Years of schooling.
    pub education: u32,
    pub household_size: u32,
    pub mobile_phone: Option<bool>,
    pub internet: Option<bool>,
    pub transport: Option<bool>,
    /// Monthly income from farming.
    pub farm_income: Option<f64>,
    /// Monthly income from other sources.
    pub other_income: Option<f64>,
    pub macro_region: Region,
    pub pronaf: bool,
    pub ater: bool,
    pub seeds: bool,
    pub private_credit: bool,
    pub private_assistance: bool,
    pub hired_workers: u32,
    pub employment_class: EmploymentClass,
    pub state: String,
    pub annual_gross_income: Option<f64>,
    /// Whether any part of the main production was sold.
    pub sold_output: Option<bool>,
}

impl HouseholdRecord {
    pub fn cell(&self) -> TreatmentCell {
        classify_cell(self.pronaf, self.ater, self.seeds)
    }

    /// Outcome as 0/1; `None` when the question was not answered.
    pub fn outcome(&self) -> Option<f64> {
        self.sold_output.map(|s| if s { 1.0 } else { 0.0 })
    }

    /// Name of the first covariate that is missing, if any.
    pub fn first_missing_covariate(&self) -> Option<&'static str> {
        if self.mobile_phone.is_none() {
            Some("mobile_phone")
        } else if self.internet.is_none() {
            Some("internet")
        } else if self.transport.is_none() {
            Some("transport")
        } else if self.farm_income.is_none() {
            Some("farm_income")
        } else if self.other_income.is_none() {
            Some("other_income")
        } else {
            None
        }
    }
}
