//! Column mapping and delimited-text ingestion.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::record::{EmploymentClass, HouseholdRecord, Region};
use crate::error::{Error, Result};

/// A `HouseholdRecord` field that a schema maps to an input column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Field {
    Id,
    Age,
    GenderMan,
    FarmArea,
    RaceWhite,
    Education,
    HouseholdSize,
    MobilePhone,
    Internet,
    Transport,
    FarmIncome,
    OtherIncome,
    MacroRegion,
    Pronaf,
    Ater,
    Seeds,
    PrivateCredit,
    PrivateAssistance,
    HiredWorkers,
    EmploymentClass,
    State,
    AnnualGrossIncome,
    SoldOutput,
}

impl Field {
    pub const ALL: [Field; 23] = [
        Field::Id,
        Field::Age,
        Field::GenderMan,
        Field::FarmArea,
        Field::RaceWhite,
        Field::Education,
        Field::HouseholdSize,
        Field::MobilePhone,
        Field::Internet,
        Field::Transport,
        Field::FarmIncome,
        Field::OtherIncome,
        Field::MacroRegion,
        Field::Pronaf,
        Field::Ater,
        Field::Seeds,
        Field::PrivateCredit,
        Field::PrivateAssistance,
        Field::HiredWorkers,
        Field::EmploymentClass,
        Field::State,
        Field::AnnualGrossIncome,
        Field::SoldOutput,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::Id => "id",
            Field::Age => "age",
            Field::GenderMan => "gender_man",
            Field::FarmArea => "farm_area",
            Field::RaceWhite => "race_white",
            Field::Education => "education",
            Field::HouseholdSize => "household_size",
            Field::MobilePhone => "mobile_phone",
            Field::Internet => "internet",
            Field::Transport => "transport",
            Field::FarmIncome => "farm_income",
            Field::OtherIncome => "other_income",
            Field::MacroRegion => "macro_region",
            Field::Pronaf => "pronaf",
            Field::Ater => "ater",
            Field::Seeds => "seeds",
            Field::PrivateCredit => "private_credit",
            Field::PrivateAssistance => "private_assistance",
            Field::HiredWorkers => "hired_workers",
            Field::EmploymentClass => "employment_class",
            Field::State => "state",
            Field::AnnualGrossIncome => "annual_gross_income",
            Field::SoldOutput => "sold_output",
        }
    }

    /// Fields whose cells may be empty.
    pub fn missing_capable(self) -> bool {
        matches!(
            self,
            Field::MobilePhone
                | Field::Internet
                | Field::Transport
                | Field::FarmIncome
                | Field::OtherIncome
                | Field::AnnualGrossIncome
                | Field::SoldOutput
        )
    }
}

/// Maps record fields to input columns, plus optional value dictionaries
/// for the two categorical fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Schema {
    pub delimiter: char,
    pub columns: BTreeMap<Field, String>,
    /// Raw cell value → region, consulted before name matching.
    pub region_values: BTreeMap<String, Region>,
    /// Raw cell value → employment class, consulted before name matching.
    pub employment_values: BTreeMap<String, EmploymentClass>,
}

impl Default for Schema {
    /// Identity mapping: each field is read from a column of the same name.
    fn default() -> Self {
        Schema {
            delimiter: ',',
            columns: Field::ALL
                .iter()
                .map(|f| (*f, f.name().to_string()))
                .collect(),
            region_values: BTreeMap::new(),
            employment_values: BTreeMap::new(),
        }
    }
}

impl Schema {
    pub fn validate(&self) -> Result<()> {
        let missing: Vec<&str> = Field::ALL
            .iter()
            .filter(|f| !self.columns.contains_key(f))
            .map(|f| f.name())
            .collect();
        if !missing.is_empty() {
            return Err(Error::Config(format!(
                "schema does not map field(s): {}",
                missing.join(", ")
            )));
        }
        if !self.delimiter.is_ascii() {
            return Err(Error::Config(
                "delimiter must be a single ASCII character".into(),
            ));
        }
        Ok(())
    }
}

struct Row<'a> {
    line: u64,
    record: &'a csv::StringRecord,
    index: &'a BTreeMap<Field, (usize, String)>,
}

impl Row<'_> {
    fn raw(&self, field: Field) -> (&str, &str) {
        let (i, column) = &self.index[&field];
        (self.record.get(*i).unwrap_or("").trim(), column.as_str())
    }

    fn err(&self, column: &str, message: impl Into<String>) -> Error {
        Error::Field {
            line: self.line,
            column: column.to_string(),
            message: message.into(),
        }
    }

    fn optional_real(&self, field: Field) -> Result<Option<f64>> {
        let (cell, column) = self.raw(field);
        if cell.is_empty() {
            return if field.missing_capable() {
                Ok(None)
            } else {
                Err(self.err(column, "missing value in a mandatory field"))
            };
        }
        let v: f64 = cell
            .parse()
            .map_err(|_| self.err(column, format!("non-numeric value `{cell}`")))?;
        if !v.is_finite() || v < 0.0 {
            return Err(self.err(
                column,
                format!("expected a non-negative number, found `{cell}`"),
            ));
        }
        Ok(Some(v))
    }

    fn real(&self, field: Field) -> Result<f64> {
        Ok(self.optional_real(field)?.expect("mandatory field"))
    }

    fn integer(&self, field: Field) -> Result<u32> {
        let v = self.real(field)?;
        if v.fract() != 0.0 || v > u32::MAX as f64 {
            let (cell, column) = self.raw(field);
            return Err(self.err(column, format!("expected an integer, found `{cell}`")));
        }
        Ok(v as u32)
    }

    fn optional_flag(&self, field: Field) -> Result<Option<bool>> {
        match self.optional_real(field)? {
            None => Ok(None),
            Some(0.0) => Ok(Some(false)),
            Some(1.0) => Ok(Some(true)),
            Some(_) => {
                let (cell, column) = self.raw(field);
                Err(self.err(column, format!("expected 0 or 1, found `{cell}`")))
            }
        }
    }

    fn flag(&self, field: Field) -> Result<bool> {
        Ok(self.optional_flag(field)?.expect("mandatory field"))
    }

    fn text(&self, field: Field) -> Result<String> {
        let (cell, column) = self.raw(field);
        if cell.is_empty() {
            return Err(self.err(column, "missing value in a mandatory field"));
        }
        Ok(cell.to_string())
    }
}

/// Parses delimited text with a header row into household records.
///
/// Columns not named in the schema are ignored.
pub fn parse_survey<R: Read>(source: R, schema: &Schema) -> Result<Vec<HouseholdRecord>> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter as u8)
        .has_headers(true)
        .flexible(true)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let width = headers.len();

    let mut index = BTreeMap::new();
    for (field, column) in &schema.columns {
        let i = headers
            .iter()
            .position(|h| h.trim() == column)
            .ok_or_else(|| {
                Error::Config(format!(
                    "column `{column}` (field `{}`) not found in header",
                    field.name()
                ))
            })?;
        index.insert(*field, (i, column.clone()));
    }

    let mut out = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let line = reader.position().line();
        if !reader.read_record(&mut record)? {
            break;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(line);
        if record.len() != width {
            return Err(Error::RowArity {
                line,
                expected: width,
                found: record.len(),
            });
        }
        let row = Row {
            line,
            record: &record,
            index: &index,
        };
        out.push(parse_row(&row, schema)?);
    }
    Ok(out)
}

fn parse_row(row: &Row<'_>, schema: &Schema) -> Result<HouseholdRecord> {
    let (region_cell, region_col) = row.raw(Field::MacroRegion);
    let macro_region = match schema.region_values.get(region_cell) {
        Some(r) => *r,
        None => region_cell
            .parse()
            .map_err(|e: String| row.err(region_col, e))?,
    };
    let (class_cell, class_col) = row.raw(Field::EmploymentClass);
    let employment_class = match schema.employment_values.get(class_cell) {
        Some(c) => *c,
        None => class_cell
            .parse()
            .map_err(|e: String| row.err(class_col, e))?,
    };
    let household_size = row.integer(Field::HouseholdSize)?;
    if household_size < 1 {
        let (_, column) = row.raw(Field::HouseholdSize);
        return Err(row.err(column, "household size must be at least 1"));
    }

    Ok(HouseholdRecord {
        id: row.text(Field::Id)?,
        age: row.integer(Field::Age)?,
        gender_man: row.flag(Field::GenderMan)?,
        farm_area: row.real(Field::FarmArea)?,
        race_white: row.flag(Field::RaceWhite)?,
        education: row.integer(Field::Education)?,
        household_size,
        mobile_phone: row.optional_flag(Field::MobilePhone)?,
        internet: row.optional_flag(Field::Internet)?,
        transport: row.optional_flag(Field::Transport)?,
        farm_income: row.optional_real(Field::FarmIncome)?,
        other_income: row.optional_real(Field::OtherIncome)?,
        macro_region,
        pronaf: row.flag(Field::Pronaf)?,
        ater: row.flag(Field::Ater)?,
        seeds: row.flag(Field::Seeds)?,
        private_credit: row.flag(Field::PrivateCredit)?,
        private_assistance: row.flag(Field::PrivateAssistance)?,
        hired_workers: row.integer(Field::HiredWorkers)?,
        employment_class,
        state: row.text(Field::State)?,
        annual_gross_income: row.optional_real(Field::AnnualGrossIncome)?,
        sold_output: row.optional_flag(Field::SoldOutput)?,
    })
}

/// Writes records with the identity schema's header, readable back by
/// `parse_survey` with `Schema::default()`.
pub fn write_survey<W: Write>(sink: W, records: &[HouseholdRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(Field::ALL.iter().map(|f| f.name()))?;
    let flag = |b: bool| if b { "1" } else { "0" }.to_string();
    let opt_flag = |b: Option<bool>| b.map(flag).unwrap_or_default();
    let opt_real = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in records {
        w.write_record([
            r.id.clone(),
            r.age.to_string(),
            flag(r.gender_man),
            r.farm_area.to_string(),
            flag(r.race_white),
            r.education.to_string(),
            r.household_size.to_string(),
            opt_flag(r.mobile_phone),
            opt_flag(r.internet),
            opt_flag(r.transport),
            opt_real(r.farm_income),
            opt_real(r.other_income),
            r.macro_region.name().to_string(),
            flag(r.pronaf),
            flag(r.ater),
            flag(r.seeds),
            flag(r.private_credit),
            flag(r.private_assistance),
            r.hired_workers.to_string(),
            r.employment_class.name().to_string(),
            r.state.clone(),
            opt_real(r.annual_gross_income),
            opt_flag(r.sold_output),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "id,age,gender_man,farm_area,race_white,education,household_size,\
mobile_phone,internet,transport,farm_income,other_income,macro_region,pronaf,ater,seeds,\
private_credit,private_assistance,hired_workers,employment_class,state,annual_gross_income,sold_output,extra";

    fn file(rows: &[&str]) -> String {
        let mut s = HEADER.to_string();
        for r in rows {
            s.push('\n');
            s.push_str(r);
        }
        s
    }

    const ROW_A: &str =
        "a,45,1,12000,0,6,4,1,0,1,800,100,Northeast,1,0,0,0,0,0,entrepreneur,BA,50000,1,zz";
    const ROW_B: &str =
        "b,60,0,30000,1,4,2,0,0,1,300,0,South,0,1,1,0,0,2,entrepreneur,RS,90000,0,zz";
    const ROW_C: &str =
        "c,33,1,5000,0,9,5,1,1,0,1500,200,North,0,0,0,0,0,0,unremunerated,PA,20000,1,zz";

    #[test]
    fn three_complete_rows() {
        let recs =
            parse_survey(file(&[ROW_A, ROW_B, ROW_C]).as_bytes(), &Schema::default()).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs.iter().all(|r| r.first_missing_covariate().is_none()
            && r.sold_output.is_some()
            && r.annual_gross_income.is_some()));
        assert_eq!(recs[1].macro_region, Region::South);
        assert_eq!(recs[2].employment_class, EmploymentClass::Unremunerated);
        assert_eq!(recs[0].farm_area, 12000.0);
    }

    #[test]
    fn empty_outcome_cell_is_missing() {
        let row =
            "d,45,1,12000,0,6,4,1,0,1,800,100,Northeast,1,0,0,0,0,0,entrepreneur,BA,50000,,zz";
        let recs = parse_survey(file(&[row]).as_bytes(), &Schema::default()).unwrap();
        assert_eq!(recs[0].sold_output, None);
    }

    #[test]
    fn non_numeric_age_names_row_and_column() {
        let row =
            "d,forty,1,12000,0,6,4,1,0,1,800,100,Northeast,1,0,0,0,0,0,entrepreneur,BA,50000,1,zz";
        let err = parse_survey(file(&[ROW_A, row]).as_bytes(), &Schema::default()).unwrap_err();
        match err {
            Error::Field { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, "age");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn wrong_arity_reports_line() {
        let err = parse_survey(file(&[ROW_A, "x,1,2"]).as_bytes(), &Schema::default()).unwrap_err();
        assert!(
            matches!(
                err,
                Error::RowArity {
                    line: 3,
                    found: 3,
                    ..
                }
            ),
            "{err:?}"
        );
    }

    #[test]
    fn empty_mandatory_cell_is_an_error() {
        let row =
            "d,45,,12000,0,6,4,1,0,1,800,100,Northeast,1,0,0,0,0,0,entrepreneur,BA,50000,1,zz";
        let err = parse_survey(file(&[row]).as_bytes(), &Schema::default()).unwrap_err();
        assert!(matches!(err, Error::Field { ref column, .. } if column == "gender_man"));
    }

    #[test]
    fn incomplete_schema_is_a_config_error() {
        let mut schema = Schema::default();
        schema.columns.remove(&Field::State);
        let err = parse_survey(file(&[ROW_A]).as_bytes(), &schema).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("state")));
    }

    #[test]
    fn renamed_columns_and_value_codes() {
        let mut schema = Schema {
            delimiter: ';',
            ..Schema::default()
        };
        schema
            .columns
            .insert(Field::MacroRegion, "UF_REGION".into());
        schema.region_values.insert("2".into(), Region::Northeast);
        schema
            .employment_values
            .insert("7".into(), EmploymentClass::Unremunerated);
        let text = file(&[ROW_A])
            .replace(',', ";")
            .replace("macro_region", "UF_REGION")
            .replace("Northeast", "2")
            .replace("entrepreneur", "7");
        let recs = parse_survey(text.as_bytes(), &schema).unwrap();
        assert_eq!(recs[0].macro_region, Region::Northeast);
        assert_eq!(recs[0].employment_class, EmploymentClass::Unremunerated);
    }

    #[test]
    fn write_then_parse() {
        let mut recs =
            parse_survey(file(&[ROW_A, ROW_B, ROW_C]).as_bytes(), &Schema::default()).unwrap();
        recs[0].farm_income = None;
        recs[2].sold_output = None;
        let mut buf = Vec::new();
        write_survey(&mut buf, &recs).unwrap();
        let back = parse_survey(buf.as_slice(), &Schema::default()).unwrap();
        assert_eq!(back, recs);
    }
}
