//! Descriptive tables and covariate balance.

use serde::{Deserialize, Serialize};

use crate::dataset::{HouseholdRecord, Region};
use crate::error::{Error, Result};
use crate::inference::two_proportion_test;
use crate::lattice::{standard_contrasts, Policy, TreatmentCell};
use crate::matching::{match_weights, Arm, MatchSpec};
use crate::table::{fixed, opt_fixed, pct, Table};

/// Covariates summarised by `group_summary`, in display order.
pub const SUMMARY_COVARIATES: [&str; 11] = [
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
];

fn covariate_values(r: &HouseholdRecord) -> Result<[f64; 11]> {
    let missing = |field: &str| Error::MissingValue {
        record: r.id.clone(),
        field: field.into(),
    };
    let flag =
        |b: Option<bool>, f: &str| b.map(|v| f64::from(u8::from(v))).ok_or_else(|| missing(f));
    Ok([
        r.age as f64,
        f64::from(u8::from(r.gender_man)),
        r.farm_area,
        f64::from(u8::from(r.race_white)),
        r.education as f64,
        r.household_size as f64,
        flag(r.mobile_phone, "mobile_phone")?,
        flag(r.internet, "internet")?,
        flag(r.transport, "transport")?,
        r.farm_income.ok_or_else(|| missing("farm_income"))?,
        r.other_income.ok_or_else(|| missing("other_income"))?,
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Grouping {
    /// Total, Pronaf, ATER, Seeds, NoPolicy; a household can appear in
    /// several policy columns.
    PolicyTotals,
    /// Total plus the eight lattice cells.
    Cells,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupColumn {
    pub name: String,
    pub n: usize,
    /// (mean, sd) per entry of `SUMMARY_COVARIATES`; `None` for an empty group.
    pub stats: Vec<Option<(f64, f64)>>,
    /// Percentage share per region in `Region::ALL` order.
    pub region_pct: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub grouping: Grouping,
    pub columns: Vec<GroupColumn>,
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

fn summarise(name: &str, rows: &[([f64; 11], Region)]) -> GroupColumn {
    let n = rows.len();
    if n == 0 {
        return GroupColumn {
            name: name.into(),
            n,
            stats: vec![None; SUMMARY_COVARIATES.len()],
            region_pct: vec![None; Region::ALL.len()],
        };
    }
    let stats = (0..SUMMARY_COVARIATES.len())
        .map(|j| {
            let col: Vec<f64> = rows.iter().map(|(v, _)| v[j]).collect();
            Some(mean_sd(&col))
        })
        .collect();
    let region_pct = Region::ALL
        .iter()
        .map(|reg| Some(100.0 * rows.iter().filter(|(_, r)| r == reg).count() as f64 / n as f64))
        .collect();
    GroupColumn {
        name: name.into(),
        n,
        stats,
        region_pct,
    }
}

/// Mean and standard deviation of each covariate per group, with region
/// shares and group sizes.
pub fn group_summary(records: &[HouseholdRecord], grouping: Grouping) -> Result<SummaryTable> {
    let rows: Vec<([f64; 11], Region, TreatmentCell)> = records
        .iter()
        .map(|r| Ok((covariate_values(r)?, r.macro_region, r.cell())))
        .collect::<Result<_>>()?;
    let select = |pred: &dyn Fn(TreatmentCell) -> bool| -> Vec<([f64; 11], Region)> {
        rows.iter()
            .filter(|(_, _, c)| pred(*c))
            .map(|(v, r, _)| (*v, *r))
            .collect()
    };
    let mut columns = vec![summarise("Total", &select(&|_| true))];
    match grouping {
        Grouping::PolicyTotals => {
            for (name, policy) in [
                ("Pronaf", Policy::Pronaf),
                ("ATER", Policy::Ater),
                ("Seeds", Policy::Seeds),
            ] {
                columns.push(summarise(name, &select(&|c| c.has(policy))));
            }
            columns.push(summarise(
                "No policy",
                &select(&|c| c == TreatmentCell::NoPolicy),
            ));
        }
        Grouping::Cells => {
            for cell in TreatmentCell::ALL {
                columns.push(summarise(cell.name(), &select(&|c| c == cell)));
            }
        }
    }
    Ok(SummaryTable { grouping, columns })
}

impl SummaryTable {
    pub fn to_table(&self) -> Table {
        let mut header = vec!["variable".to_string()];
        for c in &self.columns {
            header.push(format!("{} mean", c.name));
            header.push(format!("{} sd", c.name));
        }
        let mut table = Table {
            title: "Characteristics of family farms by policy group".into(),
            header,
            ..Default::default()
        };
        for (j, name) in SUMMARY_COVARIATES.iter().enumerate() {
            let mut row = vec![name.to_string()];
            for c in &self.columns {
                match c.stats[j] {
                    Some((m, s)) => {
                        row.push(fixed(m, 2));
                        row.push(fixed(s, 2));
                    }
                    None => row.extend([String::new(), String::new()]),
                }
            }
            table.push(row);
        }
        for (k, region) in Region::ALL.iter().enumerate() {
            let mut row = vec![format!("region {} (%)", region.name())];
            for c in &self.columns {
                row.push(opt_fixed(c.region_pct[k], 2));
                row.push("-".into());
            }
            table.push(row);
        }
        let mut row = vec!["observations".to_string()];
        for c in &self.columns {
            row.push(c.n.to_string());
            row.push(String::new());
        }
        table.push(row);
        table
    }
}

/// Size and number of selling households in one lattice cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellTally {
    pub cell: TreatmentCell,
    pub n: usize,
    pub successes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareRow {
    /// 0 for the no-policy row, contrast id 1..=10, 11 for the total.
    pub id: u8,
    pub label: String,
    pub n: usize,
    pub successes: usize,
    pub share: Option<f64>,
    /// Share minus the comparison group's share (before matching).
    pub diff: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharesTable {
    pub rows: Vec<ShareRow>,
}

fn share_row(id: u8, label: &str, n: usize, successes: usize) -> ShareRow {
    ShareRow {
        id,
        label: label.into(),
        n,
        successes,
        share: (n > 0).then(|| successes as f64 / n as f64),
        diff: None,
        z: None,
        p_value: None,
        stars: String::new(),
    }
}

/// Shares of commercialising households per policy row, from cell tallies.
///
/// Rows 1-3 compare recipients of a policy with everyone else; rows 4-10
/// compare a cell with the no-policy cell.
pub fn commercialisation_from_tallies(tallies: &[CellTally]) -> SharesTable {
    let mut n = [0usize; 8];
    let mut s = [0usize; 8];
    for t in tallies {
        n[t.cell.index()] += t.n;
        s[t.cell.index()] += t.successes;
    }
    let sum =
        |cells: &[TreatmentCell], v: &[usize; 8]| cells.iter().map(|c| v[c.index()]).sum::<usize>();
    let base = TreatmentCell::NoPolicy.index();
    let mut rows = vec![share_row(0, "No policies", n[base], s[base])];
    for c in standard_contrasts() {
        let mut row = share_row(c.id, &c.name, sum(&c.treated, &n), sum(&c.treated, &s));
        let (cn, cs) = (sum(&c.control, &n), sum(&c.control, &s));
        if let Ok(test) = two_proportion_test(row.n, row.successes, cn, cs) {
            row.diff = Some(test.diff);
            row.z = Some(test.z);
            row.p_value = Some(test.p_value);
            row.stars = test.stars.into();
        }
        rows.push(row);
    }
    rows.push(share_row(11, "Total", n.iter().sum(), s.iter().sum()));
    SharesTable { rows }
}

/// Table of commercialisation shares from household records.
pub fn commercialisation_table(records: &[HouseholdRecord]) -> Result<SharesTable> {
    let mut tallies: Vec<CellTally> = TreatmentCell::ALL
        .iter()
        .map(|&cell| CellTally {
            cell,
            n: 0,
            successes: 0,
        })
        .collect();
    for r in records {
        let sold = r.sold_output.ok_or_else(|| Error::MissingValue {
            record: r.id.clone(),
            field: "sold_output".into(),
        })?;
        let t = &mut tallies[r.cell().index()];
        t.n += 1;
        t.successes += usize::from(sold);
    }
    Ok(commercialisation_from_tallies(&tallies))
}

impl SharesTable {
    pub fn row(&self, id: u8) -> Option<&ShareRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            "Number and share of farms commercialising farm products, by policy or policy mix",
            &["policy", "n", "market", "diff", "z", "p_value", "stars"],
        );
        for r in &self.rows {
            t.push(vec![
                r.label.clone(),
                r.n.to_string(),
                r.share.map(pct).unwrap_or_default(),
                r.diff.map(pct).unwrap_or_default(),
                opt_fixed(r.z, 2),
                opt_fixed(r.p_value, 3),
                r.stars.clone(),
            ]);
        }
        t.notes.push(
            "diff: against non-recipients of the policy for rows 1-3 and against no policy for rows 4-10; \
             * 10%, ** 5%, *** 1%"
                .into(),
        );
        t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub mean_treated: f64,
    pub mean_control: f64,
    /// Mean over matched on-support treated units.
    pub mean_treated_matched: f64,
    /// Control mean weighted by total matching weight.
    pub mean_control_matched: f64,
    /// `None` when the pooled variance is zero and the means differ.
    pub std_diff_before: Option<f64>,
    pub std_diff_after: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalanceTable {
    pub rows: Vec<BalanceRow>,
    pub max_abs_std_diff_after: f64,
}

fn variance(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (values.len() - 1) as f64
}

fn std_diff(a: f64, b: f64, pooled_sd: f64) -> Option<f64> {
    if pooled_sd > 0.0 {
        Some((a - b) / pooled_sd)
    } else if a == b {
        Some(0.0)
    } else {
        None
    }
}

/// Standardised mean differences before and after matching.
///
/// Both columns divide by `sqrt((v_T + v_C) / 2)` from the unmatched
/// groups. `treated_x` / `control_x` hold one covariate row per unit, in
/// the same order as the arms.
pub fn balance_table(
    names: &[&str],
    treated_x: &[Vec<f64>],
    control_x: &[Vec<f64>],
    treated: &Arm,
    control: &Arm,
    spec: &MatchSpec,
) -> Result<BalanceTable> {
    if treated_x.len() != treated.len() || control_x.len() != control.len() {
        return Err(Error::Estimation(
            "covariate rows do not line up with the arms".into(),
        ));
    }
    let weights = match_weights(treated, control, spec)?;
    let matched: Vec<usize> = (0..treated.len())
        .filter(|&i| weights.treated_matched[i])
        .collect();
    let mut rows = Vec::with_capacity(names.len());
    for (j, name) in names.iter().enumerate() {
        let t: Vec<f64> = treated_x.iter().map(|r| r[j]).collect();
        let c: Vec<f64> = control_x.iter().map(|r| r[j]).collect();
        let mt = t.iter().sum::<f64>() / t.len() as f64;
        let mc = c.iter().sum::<f64>() / c.len() as f64;
        let pooled = ((variance(&t, mt) + variance(&c, mc)) / 2.0).sqrt();
        let mtm = matched.iter().map(|&i| t[i]).sum::<f64>() / matched.len() as f64;
        let mcm: f64 = c
            .iter()
            .zip(&weights.control_weight)
            .map(|(v, w)| v * w)
            .sum();
        rows.push(BalanceRow {
            covariate: name.to_string(),
            mean_treated: mt,
            mean_control: mc,
            mean_treated_matched: mtm,
            mean_control_matched: mcm,
            std_diff_before: std_diff(mt, mc, pooled),
            std_diff_after: std_diff(mtm, mcm, pooled),
        });
    }
    let max_abs_std_diff_after = rows
        .iter()
        .filter_map(|r| r.std_diff_after)
        .fold(0.0_f64, |m, d| m.max(d.abs()));
    Ok(BalanceTable {
        rows,
        max_abs_std_diff_after,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::EmploymentClass;

    fn rec(id: &str, cell: TreatmentCell, age: u32, sold: bool) -> HouseholdRecord {
        let (pronaf, ater, seeds) = cell.flags();
        HouseholdRecord {
            id: id.into(),
            age,
            gender_man: true,
            farm_area: 5000.0,
            race_white: false,
            education: 4,
            household_size: 3,
            mobile_phone: Some(true),
            internet: Some(false),
            transport: Some(true),
            farm_income: Some(500.0),
            other_income: Some(50.0),
            macro_region: Region::Northeast,
            pronaf,
            ater,
            seeds,
            private_credit: false,
            private_assistance: false,
            hired_workers: 0,
            employment_class: EmploymentClass::Entrepreneur,
            state: "BA".into(),
            annual_gross_income: Some(10_000.0),
            sold_output: Some(sold),
        }
    }

    #[test]
    fn identical_records_have_zero_sd() {
        let recs = vec![
            rec("a", TreatmentCell::NoPolicy, 40, true),
            rec("b", TreatmentCell::NoPolicy, 40, true),
        ];
        let s = group_summary(&recs, Grouping::PolicyTotals).unwrap();
        assert_eq!(s.columns[0].n, 2);
        assert!(s.columns[0].stats.iter().all(|st| st.unwrap().1 == 0.0));
        // Pronaf column is empty
        assert_eq!(s.columns[1].n, 0);
        assert!(s.columns[1].stats.iter().all(Option::is_none));
        assert_eq!(s.columns[0].region_pct[1], Some(100.0));
    }

    #[test]
    fn overlapping_policy_columns() {
        let recs = vec![
            rec("a", TreatmentCell::PronafAter, 30, true),
            rec("b", TreatmentCell::NoPolicy, 50, false),
        ];
        let s = group_summary(&recs, Grouping::PolicyTotals).unwrap();
        let n: Vec<usize> = s.columns.iter().map(|c| c.n).collect();
        assert_eq!(n, [2, 1, 1, 0, 1]);
        let text = s.to_table().to_text();
        assert!(text.contains("observations"));
    }

    #[test]
    fn equal_shares_have_no_stars() {
        let tallies: Vec<CellTally> = TreatmentCell::ALL
            .iter()
            .map(|&cell| CellTally {
                cell,
                n: 100,
                successes: 70,
            })
            .collect();
        let t = commercialisation_from_tallies(&tallies);
        assert_eq!(t.rows.len(), 12);
        for r in &t.rows[1..11] {
            assert!(r.diff.unwrap().abs() < 1e-15, "{r:?}");
            assert_eq!(r.stars, "");
        }
        assert_eq!(t.row(11).unwrap().n, 800);
    }

    #[test]
    fn balance_constant_covariate() {
        let treated = Arm::new(vec![0.3, 0.5], vec![1.0, 0.0]);
        let control = Arm::new(vec![0.3, 0.5, 0.52], vec![0.0, 0.0, 1.0]);
        let tx = vec![vec![1.0, 2.0], vec![1.0, 4.0]];
        let cx = vec![vec![1.0, 2.0], vec![1.0, 4.0], vec![1.0, 9.0]];
        let b = balance_table(
            &["const", "x"],
            &tx,
            &cx,
            &treated,
            &control,
            &MatchSpec::nearest_neighbour(1),
        )
        .unwrap();
        assert_eq!(b.rows[0].std_diff_before, Some(0.0));
        assert_eq!(b.rows[0].std_diff_after, Some(0.0));
        assert_eq!(b.rows[1].std_diff_after, Some(0.0));
        assert!(b.rows[1].std_diff_before.unwrap() < 0.0);
    }
}
