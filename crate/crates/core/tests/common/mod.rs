#![allow(dead_code)]

use mixeval::dataset::{EmploymentClass, HouseholdRecord, Region};

/// A household that passes every filter: self-employed, no hired workers,
/// small farm in state `AA`, modest income, answered outcome.
pub fn household(id: &str) -> HouseholdRecord {
    HouseholdRecord {
        id: id.into(),
        age: 45,
        gender_man: true,
        farm_area: 5_000.0,
        race_white: false,
        education: 4,
        household_size: 4,
        mobile_phone: Some(true),
        internet: Some(false),
        transport: Some(true),
        farm_income: Some(800.0),
        other_income: Some(200.0),
        macro_region: Region::Northeast,
        pronaf: false,
        ater: false,
        seeds: false,
        private_credit: false,
        private_assistance: false,
        hired_workers: 0,
        employment_class: EmploymentClass::Entrepreneur,
        state: "AA".into(),
        annual_gross_income: Some(12_000.0),
        sold_output: Some(true),
    }
}
