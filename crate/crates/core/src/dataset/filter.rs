use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::record::{EmploymentClass, HouseholdRecord};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Imputation {
    /// Drop records with any missing covariate.
    None,
    /// Column median for continuous covariates, majority value for binary ones.
    #[default]
    Median,
}

/// Family-farm identification thresholds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Farm-area ceiling per state, in square metres (four fiscal modules).
    pub area_threshold_by_state: BTreeMap<String, f64>,
    /// Annual gross household income ceiling.
    pub income_ceiling: f64,
    pub max_hired_workers: u32,
    /// Farm-area split between the small and large subgroups, in square metres.
    pub size_split: f64,
    pub imputation: Imputation,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            area_threshold_by_state: BTreeMap::new(),
            income_ceiling: 360_000.0,
            max_hired_workers: 2,
            size_split: 20_000.0,
            imputation: Imputation::Median,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.income_ceiling > 0.0) {
            return Err(Error::Config("income_ceiling must be positive".into()));
        }
        if !(self.size_split > 0.0) {
            return Err(Error::Config("size_split must be positive".into()));
        }
        for (state, area) in &self.area_threshold_by_state {
            if !(*area > 0.0) {
                return Err(Error::Config(format!(
                    "area threshold for state {state} must be positive"
                )));
            }
        }
        Ok(())
    }

    /// States present in `records` with no configured area threshold.
    pub fn missing_states(&self, records: &[HouseholdRecord]) -> Vec<String> {
        records
            .iter()
            .map(|r| r.state.as_str())
            .filter(|s| !self.area_threshold_by_state.contains_key(*s))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .map(String::from)
            .collect()
    }
}

/// Keeps households that satisfy the labour, area and income criteria
/// simultaneously. A missing gross income fails the income criterion.
pub fn apply_family_farm_filter(
    records: Vec<HouseholdRecord>,
    config: &FilterConfig,
) -> Result<Vec<HouseholdRecord>> {
    config.validate()?;
    let missing = config.missing_states(&records);
    if !missing.is_empty() {
        return Err(Error::MissingStateThreshold(missing));
    }
    Ok(records
        .into_iter()
        .filter(|r| {
            let labour = match r.employment_class {
                EmploymentClass::Entrepreneur => r.hired_workers <= config.max_hired_workers,
                EmploymentClass::Unremunerated => true,
                EmploymentClass::Other => false,
            };
            let area = r.farm_area < config.area_threshold_by_state[&r.state];
            let income = r
                .annual_gross_income
                .is_some_and(|v| v < config.income_ceiling);
            labour && area && income
        })
        .collect())
}

/// Drops households that obtained credit or technical assistance privately.
pub fn exclude_private_services(records: Vec<HouseholdRecord>) -> Vec<HouseholdRecord> {
    records
        .into_iter()
        .filter(|r| !r.private_credit && !r.private_assistance)
        .collect()
}

pub fn drop_missing_outcome(records: Vec<HouseholdRecord>) -> Vec<HouseholdRecord> {
    records
        .into_iter()
        .filter(|r| r.sold_output.is_some())
        .collect()
}

/// Per-column count of imputed cells.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub rule: Option<Imputation>,
    pub imputed: BTreeMap<String, usize>,
    pub dropped_records: usize,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn majority(values: impl Iterator<Item = bool>) -> bool {
    let (ones, zeros) = values.fold(
        (0usize, 0usize),
        |(o, z), v| if v { (o + 1, z) } else { (o, z + 1) },
    );
    ones > zeros
}

/// Fills or drops missing covariates. The outcome is never imputed.
pub fn impute_missing(
    records: Vec<HouseholdRecord>,
    rule: Imputation,
) -> Result<(Vec<HouseholdRecord>, ImputationReport)> {
    let mut report = ImputationReport {
        rule: Some(rule),
        ..Default::default()
    };
    match rule {
        Imputation::None => {
            let before = records.len();
            let kept: Vec<_> = records
                .into_iter()
                .filter(|r| r.first_missing_covariate().is_none())
                .collect();
            report.dropped_records = before - kept.len();
            Ok((kept, report))
        }
        Imputation::Median => {
            let mut records = records;
            type FlagAccess = fn(&mut HouseholdRecord) -> &mut Option<bool>;
            type RealAccess = fn(&mut HouseholdRecord) -> &mut Option<f64>;
            let flags: [(&str, FlagAccess); 3] = [
                ("mobile_phone", |r| &mut r.mobile_phone),
                ("internet", |r| &mut r.internet),
                ("transport", |r| &mut r.transport),
            ];
            let reals: [(&str, RealAccess); 2] = [
                ("farm_income", |r| &mut r.farm_income),
                ("other_income", |r| &mut r.other_income),
            ];
            for (name, get) in flags {
                let missing = records
                    .iter_mut()
                    .map(|r| get(r).is_none())
                    .filter(|&m| m)
                    .count();
                if missing == 0 {
                    continue;
                }
                if missing == records.len() {
                    return Err(Error::EmptyColumn(name.into()));
                }
                let fill = majority(records.iter_mut().filter_map(|r| *get(r)));
                for r in records.iter_mut() {
                    get(r).get_or_insert(fill);
                }
                report.imputed.insert(name.into(), missing);
            }
            for (name, get) in reals {
                let mut present: Vec<f64> = records.iter_mut().filter_map(|r| *get(r)).collect();
                let missing = records.len() - present.len();
                if missing == 0 {
                    continue;
                }
                if present.is_empty() {
                    return Err(Error::EmptyColumn(name.into()));
                }
                let fill = median(&mut present);
                for r in records.iter_mut() {
                    get(r).get_or_insert(fill);
                }
                report.imputed.insert(name.into(), missing);
            }
            Ok((records, report))
        }
    }
}

/// Splits into (`farm_area < threshold`, `farm_area >= threshold`).
pub fn split_by_area(
    records: Vec<HouseholdRecord>,
    threshold: f64,
) -> (Vec<HouseholdRecord>, Vec<HouseholdRecord>) {
    records.into_iter().partition(|r| r.farm_area < threshold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::record::Region;

    pub(crate) fn base(id: &str) -> HouseholdRecord {
        HouseholdRecord {
            id: id.into(),
            age: 45,
            gender_man: true,
            farm_area: 10_000.0,
            race_white: false,
            education: 5,
            household_size: 3,
            mobile_phone: Some(true),
            internet: Some(false),
            transport: Some(true),
            farm_income: Some(800.0),
            other_income: Some(100.0),
            macro_region: Region::Northeast,
            pronaf: false,
            ater: false,
            seeds: false,
            private_credit: false,
            private_assistance: false,
            hired_workers: 0,
            employment_class: EmploymentClass::Entrepreneur,
            state: "BA".into(),
            annual_gross_income: Some(100_000.0),
            sold_output: Some(true),
        }
    }

    fn config() -> FilterConfig {
        FilterConfig {
            area_threshold_by_state: [("BA".to_string(), 260_000.0)].into_iter().collect(),
            ..Default::default()
        }
    }

    fn ids(recs: &[HouseholdRecord]) -> Vec<&str> {
        recs.iter().map(|r| r.id.as_str()).collect()
    }

    #[test]
    fn family_farm_criteria() {
        let ok = base("ok");
        let mut hired = base("hired3");
        hired.hired_workers = 3;
        let mut unrem = base("unrem");
        unrem.employment_class = EmploymentClass::Unremunerated;
        unrem.hired_workers = 9;
        let mut other = base("other");
        other.employment_class = EmploymentClass::Other;
        let mut at_ceiling = base("income_at_ceiling");
        at_ceiling.annual_gross_income = Some(360_000.0);
        let mut no_income = base("no_income");
        no_income.annual_gross_income = None;
        let mut big = base("area_at_threshold");
        big.farm_area = 260_000.0;
        let kept = apply_family_farm_filter(
            vec![ok, hired, unrem, other, at_ceiling, no_income, big],
            &config(),
        )
        .unwrap();
        assert_eq!(ids(&kept), ["ok", "unrem"]);
    }

    #[test]
    fn unknown_state_lists_it() {
        let mut r = base("x");
        r.state = "ZZ".into();
        let err = apply_family_farm_filter(vec![r, base("y")], &config()).unwrap_err();
        assert!(matches!(err, Error::MissingStateThreshold(ref s) if s == &["ZZ".to_string()]));
    }

    #[test]
    fn private_services() {
        let mut credit = base("credit");
        credit.private_credit = true;
        let mut assist = base("assist");
        assist.private_assistance = true;
        assist.ater = true;
        let kept = exclude_private_services(vec![credit, assist, base("clean")]);
        assert_eq!(ids(&kept), ["clean"]);
    }

    #[test]
    fn missing_outcome() {
        let mut missing = base("missing");
        missing.sold_output = None;
        let kept = drop_missing_outcome(vec![missing, base("sold")]);
        assert_eq!(ids(&kept), ["sold"]);
        assert!(drop_missing_outcome(Vec::new()).is_empty());
    }

    #[test]
    fn median_imputation() {
        let mut recs: Vec<_> = (0..4).map(|i| base(&i.to_string())).collect();
        recs[0].farm_income = Some(100.0);
        recs[1].farm_income = Some(200.0);
        recs[2].farm_income = Some(300.0);
        recs[3].farm_income = None;
        recs[0].mobile_phone = Some(true);
        recs[1].mobile_phone = Some(true);
        recs[2].mobile_phone = Some(false);
        recs[3].mobile_phone = None;
        let (out, report) = impute_missing(recs, Imputation::Median).unwrap();
        assert_eq!(out[3].farm_income, Some(200.0));
        assert_eq!(out[3].mobile_phone, Some(true));
        assert_eq!(report.imputed["farm_income"], 1);
        assert!(out.iter().all(|r| r.first_missing_covariate().is_none()));
    }

    #[test]
    fn binary_tie_imputes_zero() {
        let mut recs: Vec<_> = (0..3).map(|i| base(&i.to_string())).collect();
        recs[0].internet = Some(true);
        recs[1].internet = Some(false);
        recs[2].internet = None;
        let (out, _) = impute_missing(recs, Imputation::Median).unwrap();
        assert_eq!(out[2].internet, Some(false));
    }

    #[test]
    fn outcome_is_never_imputed() {
        let mut r = base("a");
        r.sold_output = None;
        let (out, _) = impute_missing(vec![r, base("b")], Imputation::Median).unwrap();
        assert_eq!(out[0].sold_output, None);
    }

    #[test]
    fn no_imputation_drops() {
        let mut recs: Vec<_> = (0..10).map(|i| base(&i.to_string())).collect();
        recs[4].farm_income = None;
        let (out, report) = impute_missing(recs, Imputation::None).unwrap();
        assert_eq!(out.len(), 9);
        assert_eq!(report.dropped_records, 1);
    }

    #[test]
    fn entirely_missing_column() {
        let mut recs: Vec<_> = (0..2).map(|i| base(&i.to_string())).collect();
        for r in &mut recs {
            r.other_income = None;
        }
        let err = impute_missing(recs, Imputation::Median).unwrap_err();
        assert!(matches!(err, Error::EmptyColumn(ref c) if c == "other_income"));
    }

    #[test]
    fn area_split_boundary() {
        let recs: Vec<_> = [19_999.0, 20_000.0, 20_001.0]
            .iter()
            .map(|a| {
                let mut r = base(&a.to_string());
                r.farm_area = *a;
                r
            })
            .collect();
        let (below, above) = split_by_area(recs, 20_000.0);
        assert_eq!(ids(&below), ["19999"]);
        assert_eq!(ids(&above), ["20000", "20001"]);

        let (below, above) = split_by_area(vec![base("a"), base("b")], 20_000.0);
        assert_eq!(below.len(), 2);
        assert!(above.is_empty());
    }
}
