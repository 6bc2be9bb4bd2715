mod common;

use common::household;
use mixeval::dataset::{HouseholdRecord, Region};
use mixeval::diagnostics::{
    balance_table, commercialisation_from_tallies, commercialisation_table, group_summary,
    CellTally, Grouping,
};
use mixeval::lattice::TreatmentCell;
use mixeval::matching::{Arm, MatchSpec};
use proptest::prelude::*;

fn in_cell(id: &str, cell: TreatmentCell, sold: bool, age: u32) -> HouseholdRecord {
    let mut r = household(id);
    (r.pronaf, r.ater, r.seeds) = cell.flags();
    r.sold_output = Some(sold);
    r.age = age;
    r
}

#[test]
fn group_summary_means_and_regions() {
    let mut records = vec![
        in_cell("a", TreatmentCell::NoPolicy, true, 30),
        in_cell("b", TreatmentCell::NoPolicy, false, 50),
        in_cell("c", TreatmentCell::PronafAter, true, 40),
    ];
    records[2].macro_region = Region::South;
    let s = group_summary(&records, Grouping::PolicyTotals).unwrap();
    let names: Vec<&str> = s.columns.iter().map(|c| c.name.as_str()).collect();
    assert_eq!(names, ["Total", "Pronaf", "ATER", "Seeds", "No policy"]);
    let (mean, sd) = s.columns[0].stats[0].unwrap();
    assert_eq!(mean, 40.0);
    assert!((sd - 10.0).abs() < 1e-12);
    assert_eq!(s.columns[4].n, 2);
    assert_eq!(s.columns[3].n, 0);
    assert!(s.columns[3].stats[0].is_none());
    let south = Region::ALL
        .iter()
        .position(|r| *r == Region::South)
        .unwrap();
    assert_eq!(s.columns[1].region_pct[south], Some(100.0));
    let cells = group_summary(&records, Grouping::Cells).unwrap();
    assert_eq!(cells.columns.len(), 9);
}

#[test]
fn balance_is_perfect_after_exact_matching() {
    let treated = Arm::new(vec![0.2, 0.6], vec![1.0, 0.0]);
    let control = Arm::new(vec![0.2, 0.6, 0.9], vec![0.0, 0.0, 1.0]);
    let tx = vec![vec![1.0, 30.0], vec![0.0, 50.0]];
    let cx = vec![vec![1.0, 30.0], vec![0.0, 50.0], vec![1.0, 70.0]];
    let b = balance_table(
        &["flag", "age"],
        &tx,
        &cx,
        &treated,
        &control,
        &MatchSpec::nearest_neighbour(1),
    )
    .unwrap();
    assert!(b.max_abs_std_diff_after < 1e-12);
    let age = &b.rows[1];
    assert_eq!(age.mean_control, 50.0);
    // pooled sd from the unmatched groups: sqrt((200 + 400) / 2)
    assert!((age.std_diff_before.unwrap() - (40.0 - 50.0) / 300f64.sqrt()).abs() < 1e-12);
}

#[test]
fn missing_outcome_is_an_error() {
    let mut r = household("x");
    r.sold_output = None;
    assert!(commercialisation_table(&[r]).is_err());
}

fn arb_records() -> impl Strategy<Value = Vec<HouseholdRecord>> {
    prop::collection::vec((0usize..8, any::<bool>()), 1..80).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (c, sold))| in_cell(&i.to_string(), TreatmentCell::ALL[c], sold, 40))
            .collect()
    })
}

proptest! {
    #[test]
    fn records_and_tallies_agree(records in arb_records()) {
        let from_records = commercialisation_table(&records).unwrap();
        let tallies: Vec<CellTally> = TreatmentCell::ALL
            .iter()
            .map(|&cell| {
                let rows: Vec<_> = records.iter().filter(|r| r.cell() == cell).collect();
                CellTally { cell, n: rows.len(), successes: rows.iter().filter(|r| r.sold_output == Some(true)).count() }
            })
            .collect();
        prop_assert_eq!(&from_records, &commercialisation_from_tallies(&tallies));
        let total = from_records.row(11).unwrap();
        prop_assert_eq!(total.n, records.len());
        // rows 1-3 are totals over four cells each
        for id in 1..=3u8 {
            let row = from_records.row(id).unwrap();
            let policy_cells = records.iter().filter(|r| {
                let (p, a, s) = (r.pronaf, r.ater, r.seeds);
                [p, a, s][usize::from(id - 1)]
            }).count();
            prop_assert_eq!(row.n, policy_cells);
        }
    }
}
