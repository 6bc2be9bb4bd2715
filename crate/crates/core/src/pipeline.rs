//! End-to-end run: ingest, filter, describe, estimate, bootstrap and write
//! result tables plus a JSON manifest.
//!
//! Output assembly is single-threaded and ordered by sample, contrast id
//! and matching spec, so a run is a pure function of the input bytes, the
//! configuration and the seeds.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{
    apply_family_farm_filter, drop_missing_outcome, exclude_private_services, impute_missing,
    parse_survey, split_by_area, FilterConfig, HouseholdRecord, ImputationReport, Schema,
};
use crate::diagnostics::{
    balance_table, commercialisation_table, group_summary, BalanceTable, Grouping, SharesTable,
    SummaryTable,
};
use crate::error::{Error, Result};
use crate::estimation::{
    contrast_arms, estimate_all, fit_binary_for, fit_multinomial_for, GpsScore, Sample,
};
use crate::inference::{
    bootstrap_contrast, derive_seed, z_and_p, BootstrapConfig, BootstrapSummary,
};
use crate::lattice::{contrast, Contrast, ModelKind};
use crate::matching::{Arm, AttEstimate, MatchSpec};
use crate::propensity::{DesignOptions, PropensityModel, DESIGN_COLUMNS};
use crate::table::{fixed, opt_fixed, Table};

const SMALL_TREATED_NOTE: &str = "Non-calculable due to the small number of treated observations.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    /// Aligned plain text, `.txt`.
    Text,
    /// Comma-separated, `.csv`.
    Delimited,
}

fn all_contrasts() -> Vec<u8> {
    (1..=10).collect()
}

fn all_formats() -> Vec<OutputFormat> {
    vec![OutputFormat::Text, OutputFormat::Delimited]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub input: PathBuf,
    #[serde(default)]
    pub schema: Schema,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default = "all_contrasts")]
    pub contrasts: Vec<u8>,
    #[serde(default = "MatchSpec::standard_set")]
    pub specs: Vec<MatchSpec>,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
    /// Repeat the estimation separately below and above `filter.size_split`.
    #[serde(default)]
    pub subgroups: bool,
    pub output_dir: PathBuf,
    #[serde(default = "all_formats")]
    pub formats: Vec<OutputFormat>,
    #[serde(default)]
    pub gps: GpsScore,
    #[serde(default)]
    pub design: DesignOptions,
}

impl RunConfig {
    pub fn new(input: impl Into<PathBuf>, output_dir: impl Into<PathBuf>) -> RunConfig {
        RunConfig {
            input: input.into(),
            schema: Schema::default(),
            filter: FilterConfig::default(),
            contrasts: all_contrasts(),
            specs: MatchSpec::standard_set(),
            bootstrap: BootstrapConfig::default(),
            subgroups: false,
            output_dir: output_dir.into(),
            formats: all_formats(),
            gps: GpsScore::default(),
            design: DesignOptions::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(format!("run config: {}", e.message())))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        RunConfig::from_toml_str(&fs::read_to_string(path)?)
    }

    /// Parameter checks that need no data. Returns the first problem.
    pub fn validate(&self) -> Result<()> {
        match self.parameter_findings().into_iter().next() {
            Some(f) => Err(Error::Config(f.message)),
            None => Ok(()),
        }
    }

    fn selected(&self) -> Vec<Contrast> {
        self.contrasts
            .iter()
            .filter_map(|&id| contrast(id))
            .collect()
    }

    fn parameter_findings(&self) -> Vec<Finding> {
        let mut out = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(e) = r {
                out.push(Finding::error(strip_config_prefix(&e)));
            }
        };
        push(self.schema.validate());
        push(self.filter.validate());
        push(self.bootstrap.validate());
        push(self.design.validate());
        for spec in &self.specs {
            push(
                spec.validate()
                    .map_err(|e| Error::Config(format!("{spec}: {}", strip_config_prefix(&e)))),
            );
        }
        if self.contrasts.is_empty() {
            out.push(Finding::error(
                "at least one contrast must be selected".into(),
            ));
        }
        for id in &self.contrasts {
            if contrast(*id).is_none() {
                out.push(Finding::error(format!(
                    "contrast {id} does not exist (valid ids are 1 to 10)"
                )));
            }
        }
        let mut ids = self.contrasts.clone();
        ids.sort_unstable();
        ids.dedup();
        if ids.len() != self.contrasts.len() {
            out.push(Finding::error("contrast list has duplicates".into()));
        }
        if self.specs.is_empty() {
            out.push(Finding::error(
                "at least one matching spec is required".into(),
            ));
        }
        if self.formats.is_empty() {
            out.push(Finding::error(
                "at least one output format is required".into(),
            ));
        }
        if self.bootstrap.min_successful > self.bootstrap.replicates {
            out.push(Finding::error(format!(
                "bootstrap min_successful ({}) exceeds replicates ({})",
                self.bootstrap.min_successful, self.bootstrap.replicates
            )));
        }
        if self.output_dir.exists() && !self.output_dir.is_dir() {
            out.push(Finding::error(format!(
                "output path {} is not a directory",
                self.output_dir.display()
            )));
        }
        out
    }
}

fn strip_config_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) => m.clone(),
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub message: String,
}

impl Finding {
    fn error(message: String) -> Finding {
        Finding {
            severity: Severity::Error,
            message,
        }
    }

    fn warning(message: String) -> Finding {
        Finding {
            severity: Severity::Warning,
            message,
        }
    }
}

/// Checks a configuration without estimating anything: parameters,
/// schema, state thresholds and the cell counts of the filtered input.
pub fn validate(config: &RunConfig) -> Vec<Finding> {
    let mut findings = config.parameter_findings();
    let records = match fs::File::open(&config.input)
        .map_err(Error::from)
        .and_then(|f| parse_survey(f, &config.schema))
    {
        Ok(r) => r,
        Err(e) => {
            findings.push(Finding::error(format!(
                "input {}: {e}",
                config.input.display()
            )));
            return findings;
        }
    };
    for state in config.filter.missing_states(&records) {
        findings.push(Finding::error(format!(
            "no area threshold configured for state {state}"
        )));
    }
    if findings.iter().any(|f| f.severity == Severity::Error) {
        return findings;
    }
    match prepare(records, &config.filter) {
        Ok(prepared) => {
            let counts = crate::lattice::cell_counts(&prepared.records, |r| r.cell());
            for c in config.selected() {
                let treated: usize = c.treated.iter().map(|cell| counts[cell.index()]).sum();
                let control: usize = c.control.iter().map(|cell| counts[cell.index()]).sum();
                if treated < 2 || control < 2 {
                    findings.push(Finding::warning(format!(
                        "contrast {} ({}) has {treated} treated and {control} control records after filtering",
                        c.id, c.name
                    )));
                }
            }
        }
        Err(e) => findings.push(Finding::error(e.to_string())),
    }
    findings
}

/// Records remaining after each filtering step.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunnelStep {
    pub step: String,
    pub remaining: usize,
    pub removed: usize,
}

struct Prepared {
    records: Vec<HouseholdRecord>,
    funnel: Vec<FunnelStep>,
    imputation: ImputationReport,
}

fn prepare(records: Vec<HouseholdRecord>, filter: &FilterConfig) -> Result<Prepared> {
    let mut funnel = vec![FunnelStep {
        step: "records read".into(),
        remaining: records.len(),
        removed: 0,
    }];
    let mut step = |name: &str, records: &[HouseholdRecord]| {
        let before = funnel.last().map_or(0, |s| s.remaining);
        funnel.push(FunnelStep {
            step: name.into(),
            remaining: records.len(),
            removed: before - records.len(),
        });
    };
    let records = apply_family_farm_filter(records, filter)?;
    step("family-farm criteria (labour, area, income)", &records);
    let records = drop_missing_outcome(records);
    step("commercialisation answered", &records);
    let records = exclude_private_services(records);
    step("no private credit or assistance", &records);
    let (records, imputation) = impute_missing(records, filter.imputation)?;
    step("covariates complete after imputation", &records);
    Ok(Prepared {
        records,
        funnel,
        imputation,
    })
}

/// One row of an ATT table: a contrast estimated with one matching spec
/// on one sample. `estimate` is `None` when the row is non-calculable.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttRow {
    pub sample: String,
    pub contrast_id: u8,
    pub contrast: String,
    pub n_treated: usize,
    pub n_controls: usize,
    pub algorithm: String,
    pub estimate: Option<AttEstimate>,
    pub notes: Vec<String>,
}

/// Propensity-model audit entry.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelReport {
    pub sample: String,
    /// Contrast id for binary models; `None` for the shared multinomial.
    pub contrast_id: Option<u8>,
    pub model: Option<PropensityModel>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BalanceReport {
    pub contrast_id: u8,
    pub spec: String,
    pub table: Option<BalanceTable>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleResults {
    pub label: String,
    pub n: usize,
    pub rows: Vec<AttRow>,
    pub models: Vec<ModelReport>,
    pub bootstrap: Vec<BootstrapReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapReport {
    pub contrast_id: u8,
    pub seed: u64,
    pub summaries: Vec<BootstrapSummary>,
}

/// Everything a run produced, as written to `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub config: RunConfig,
    pub decisions: BTreeMap<String, String>,
    pub funnel: Vec<FunnelStep>,
    pub imputation: ImputationReport,
    pub cell_counts: BTreeMap<String, usize>,
    pub summary: SummaryTable,
    pub shares: SharesTable,
    pub results: Vec<SampleResults>,
    pub balance: Vec<BalanceReport>,
    pub files: Vec<String>,
}

impl RunReport {
    /// All ATT rows of the full sample and, when present, the subgroups.
    pub fn att_rows(&self) -> impl Iterator<Item = &AttRow> {
        self.results.iter().flat_map(|s| &s.rows)
    }
}

fn decisions(config: &RunConfig) -> BTreeMap<String, String> {
    let mut d = BTreeMap::new();
    d.insert(
        "common_support".into(),
        "min-max rule on the propensity score, treated units outside dropped".into(),
    );
    d.insert(
        "standard_error".into(),
        "bootstrap over the contrast pool with model refit per replicate".into(),
    );
    d.insert("reference_distribution".into(), "standard normal".into());
    d.insert(
        "exclusive_contrast_score".into(),
        match config.gps {
            GpsScore::Conditional => {
                "P(m|x) / (P(m|x) + P(NoPolicy|x)) from one multinomial logit".into()
            }
            GpsScore::Marginal => "P(m|x) from one multinomial logit".into(),
        },
    );
    d.insert(
        "total_contrast_score".into(),
        "binary logit fitted on the full sample".into(),
    );
    d.insert(
        "imputation".into(),
        format!("{:?}", config.filter.imputation).to_lowercase(),
    );
    d.insert("bootstrap_seed".into(), config.bootstrap.seed.to_string());
    d
}

/// Runs the pipeline and writes every artifact into `config.output_dir`.
///
/// On failure the artifacts written so far are kept and an `ERROR` file
/// holding the message is added to the output directory.
pub fn run(config: &RunConfig) -> Result<RunReport> {
    config.validate()?;
    fs::create_dir_all(&config.output_dir)?;
    let marker = config.output_dir.join("ERROR");
    if marker.exists() {
        fs::remove_file(&marker)?;
    }
    let result = run_inner(config);
    if let Err(e) = &result {
        // best effort: the original error matters more than a failed marker
        let _ = fs::write(&marker, format!("{e}\n"));
    }
    result
}

fn run_inner(config: &RunConfig) -> Result<RunReport> {
    let writer = Writer {
        dir: &config.output_dir,
        formats: &config.formats,
    };
    let mut files = Vec::new();
    let records = parse_survey(fs::File::open(&config.input)?, &config.schema)?;
    let prepared = prepare(records, &config.filter)?;
    files.extend(writer.write("funnel", &funnel_table(&prepared.funnel))?);
    let records = prepared.records;
    if records.is_empty() {
        return Err(Error::Estimation(
            "no households left after filtering".into(),
        ));
    }

    let summary = group_summary(&records, Grouping::PolicyTotals)?;
    files.extend(writer.write("summary", &summary.to_table())?);
    let shares = commercialisation_table(&records)?;
    files.extend(writer.write("shares", &shares.to_table())?);

    let counts = crate::lattice::cell_counts(&records, |r| r.cell());
    let cell_counts = crate::lattice::TreatmentCell::ALL
        .iter()
        .map(|c| (c.name().to_string(), counts[c.index()]))
        .collect();

    let contrasts = config.selected();
    let full = Sample::from_records(&records, &config.design)?;
    let (all_results, balance) = estimate_sample(&full, "all", 0, &contrasts, config, true);
    files.extend(writer.write("att", &att_table(&all_results.rows, false))?);
    files.extend(writer.write("balance", &balance_output(&balance))?);
    let mut results = vec![all_results];

    if config.subgroups {
        let (small, large) = split_by_area(records, config.filter.size_split);
        let ha = config.filter.size_split / 10_000.0;
        let mut rows = Vec::new();
        for (k, (label, group)) in [
            (format!("< {ha} ha"), small),
            (format!(">= {ha} ha"), large),
        ]
        .into_iter()
        .enumerate()
        {
            let sample = Sample::from_records(&group, &config.design)?;
            let (res, _) =
                estimate_sample(&sample, &label, k as u64 + 1, &contrasts, config, false);
            rows.extend(res.rows.iter().cloned());
            results.push(res);
        }
        rows.sort_by_key(|r| r.contrast_id);
        files.extend(writer.write("att_by_size", &att_table(&rows, true))?);
    }

    let mut report = RunReport {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        config: config.clone(),
        decisions: decisions(config),
        funnel: prepared.funnel,
        imputation: prepared.imputation,
        cell_counts,
        summary,
        shares,
        results,
        balance,
        files: Vec::new(),
    };
    files.push("manifest.json".into());
    report.files = files;
    let json =
        serde_json::to_string_pretty(&report).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    fs::write(config.output_dir.join("manifest.json"), json + "\n")?;
    Ok(report)
}

struct Writer<'a> {
    dir: &'a Path,
    formats: &'a [OutputFormat],
}

impl Writer<'_> {
    fn write(&self, stem: &str, table: &Table) -> Result<Vec<String>> {
        let mut written = Vec::new();
        for format in self.formats {
            let (name, body) = match format {
                OutputFormat::Text => (format!("{stem}.txt"), table.to_text()),
                OutputFormat::Delimited => (format!("{stem}.csv"), table.to_delimited(b',')?),
            };
            fs::write(self.dir.join(&name), body)?;
            written.push(name);
        }
        Ok(written)
    }
}

fn funnel_table(funnel: &[FunnelStep]) -> Table {
    let mut t = Table::new("Filter funnel", &["step", "remaining", "removed"]);
    for s in funnel {
        t.push(vec![
            s.step.clone(),
            s.remaining.to_string(),
            s.removed.to_string(),
        ]);
    }
    t
}

/// Treated and control covariate rows (intercept dropped) in the order
/// `contrast_arms` builds its arms.
fn arm_covariates(
    sample: &Sample,
    contrast: &Contrast,
    rows: &[usize],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut treated = Vec::new();
    let mut control = Vec::new();
    for &i in rows {
        let cell = sample.cells[i];
        let x = sample.design.row(i)[1..].to_vec();
        if contrast.is_treated(cell) {
            treated.push(x);
        } else if contrast.is_control(cell) {
            control.push(x);
        }
    }
    (treated, control)
}

fn non_calculable_note(err: &Error, n_treated: usize) -> String {
    if n_treated < 2 {
        return SMALL_TREATED_NOTE.into();
    }
    match err {
        Error::EmptyContrast { reason, .. } if reason.contains("target") => format!(
            "{} (cell left out of the multinomial model).",
            SMALL_TREATED_NOTE.trim_end_matches('.')
        ),
        Error::EmptyContrast { reason, .. } if reason.contains("treated") => {
            SMALL_TREATED_NOTE.into()
        }
        other => format!("Non-calculable: {other}."),
    }
}

/// Scored arms of `contrast` together with the model rows they come from.
type ScoredArms = (Arm, Arm, Vec<usize>);

fn estimate_sample(
    sample: &Sample,
    label: &str,
    sample_index: u64,
    contrasts: &[Contrast],
    config: &RunConfig,
    with_balance: bool,
) -> (SampleResults, Vec<BalanceReport>) {
    let mut models = Vec::new();
    let needs_multinomial = contrasts
        .iter()
        .any(|c| c.model_kind == ModelKind::Multinomial);
    let multinomial = needs_multinomial.then(|| fit_multinomial_for(sample));
    if let Some(m) = &multinomial {
        models.push(ModelReport {
            sample: label.into(),
            contrast_id: None,
            model: m.as_ref().ok().map(|(m, _)| m.clone()),
            error: m.as_ref().err().map(ToString::to_string),
        });
    }
    let counts = sample.cell_counts();
    let mut rows = Vec::new();
    let mut boots = Vec::new();
    let mut balance = Vec::new();
    for c in contrasts {
        let n_treated: usize = c.treated.iter().map(|cell| counts[cell.index()]).sum();
        let n_controls: usize = c.control.iter().map(|cell| counts[cell.index()]).sum();
        let scored: Result<ScoredArms> = match c.model_kind {
            ModelKind::Binary => {
                let fit = if n_treated == 0 || n_controls == 0 {
                    Err(crate::estimation::not_estimable(
                        c,
                        if n_treated == 0 {
                            "no treated units"
                        } else {
                            "no control units"
                        },
                    ))
                } else {
                    fit_binary_for(sample, c)
                };
                models.push(ModelReport {
                    sample: label.into(),
                    contrast_id: Some(c.id),
                    model: fit.as_ref().ok().map(|(m, _)| m.clone()),
                    error: fit.as_ref().err().map(ToString::to_string),
                });
                fit.and_then(|(m, r)| {
                    contrast_arms(sample, c, &m, &r, config.gps).map(|(t, k)| (t, k, r))
                })
            }
            ModelKind::Multinomial => match multinomial.as_ref().expect("fitted above") {
                Ok((m, r)) => {
                    contrast_arms(sample, c, m, r, config.gps).map(|(t, k)| (t, k, r.clone()))
                }
                Err(e) => Err(Error::Estimation(format!("multinomial model: {e}"))),
            },
        };
        let base = |spec: &MatchSpec| AttRow {
            sample: label.into(),
            contrast_id: c.id,
            contrast: c.name.clone(),
            n_treated,
            n_controls,
            algorithm: spec.to_string(),
            estimate: None,
            notes: Vec::new(),
        };
        let (treated, control, model_rows) = match scored {
            Ok(s) => s,
            Err(e) => {
                log::warn!("{label}: contrast {} skipped: {e}", c.id);
                let note = non_calculable_note(&e, n_treated);
                rows.extend(config.specs.iter().map(|spec| AttRow {
                    notes: vec![note.clone()],
                    ..base(spec)
                }));
                if with_balance {
                    balance.push(BalanceReport {
                        contrast_id: c.id,
                        spec: config.specs[0].to_string(),
                        table: None,
                        error: Some(e.to_string()),
                    });
                }
                continue;
            }
        };

        let boot_config = BootstrapConfig {
            seed: derive_seed(config.bootstrap.seed, &[sample_index, u64::from(c.id)]),
            ..config.bootstrap
        };
        let summaries = bootstrap_contrast(sample, c, &config.specs, config.gps, &boot_config);
        let estimates = estimate_all(c, &treated, &control, &config.specs);
        for (s, (spec, est)) in config.specs.iter().zip(estimates).enumerate() {
            let mut row = base(spec);
            match est {
                Ok(mut e) => {
                    match summaries.as_ref().map(|v| &v[s]) {
                        Ok(summary) => {
                            e.successful_replicates = Some(summary.successful);
                            match summary
                                .se(boot_config.min_successful)
                                .and_then(|se| Ok((se, z_and_p(e.coeff, se)?)))
                            {
                                Ok((se, test)) => {
                                    e.se = Some(se);
                                    e.z = Some(test.z);
                                    e.p_value = Some(test.p_value);
                                    e.stars = test.stars.into();
                                    if summary.successful < summary.requested {
                                        row.notes.push(format!(
                                            "Based on {} successful bootstrap replicates.",
                                            summary.successful
                                        ));
                                    }
                                }
                                Err(err) => row
                                    .notes
                                    .push(format!("Standard error unavailable: {err}.")),
                            }
                        }
                        Err(err) => row
                            .notes
                            .push(format!("Standard error unavailable: {err}.")),
                    }
                    row.estimate = Some(e);
                }
                Err(err) => row
                    .notes
                    .push(format!("Non-calculable with this algorithm: {err}.")),
            }
            rows.push(row);
        }
        if let Ok(v) = summaries {
            boots.push(BootstrapReport {
                contrast_id: c.id,
                seed: boot_config.seed,
                summaries: v,
            });
        }
        if with_balance {
            let spec = config.specs[0];
            let (tx, cx) = arm_covariates(sample, c, &model_rows);
            let table = balance_table(&DESIGN_COLUMNS[1..], &tx, &cx, &treated, &control, &spec);
            balance.push(BalanceReport {
                contrast_id: c.id,
                spec: spec.to_string(),
                error: table.as_ref().err().map(ToString::to_string),
                table: table.ok(),
            });
        }
    }
    (
        SampleResults {
            label: label.into(),
            n: sample.len(),
            rows,
            models,
            bootstrap: boots,
        },
        balance,
    )
}

fn dash(v: Option<String>) -> String {
    v.unwrap_or_else(|| "-".into())
}

/// ATT rows in the report layout; non-calculable entries render as
/// `-` and every note becomes a numbered footnote.
pub fn att_table(rows: &[AttRow], by_size: bool) -> Table {
    let mut header = vec!["contrast"];
    if by_size {
        header.push("farm size");
    }
    header.extend([
        "treated",
        "controls",
        "algorithm",
        "coeff",
        "se",
        "z",
        "p",
        "stars",
        "pct",
        "notes",
    ]);
    let title = if by_size {
        "Increase in the share of commercial family farms among policy recipients, by farm size"
    } else {
        "Increase in the share of commercial family farms among policy recipients"
    };
    let mut table = Table::new(title, &header);
    let mut notes: Vec<String> = Vec::new();
    for r in rows {
        let marks: Vec<String> = r
            .notes
            .iter()
            .map(|n| {
                let k = notes.iter().position(|m| m == n).unwrap_or_else(|| {
                    notes.push(n.clone());
                    notes.len() - 1
                });
                (k + 1).to_string()
            })
            .collect();
        let e = r.estimate.as_ref();
        let mut cells = vec![format!("{}. {}", r.contrast_id, r.contrast)];
        if by_size {
            cells.push(r.sample.clone());
        }
        cells.extend([
            r.n_treated.to_string(),
            r.n_controls.to_string(),
            r.algorithm.clone(),
            dash(e.map(|e| fixed(e.coeff, 3))),
            dash(e.and_then(|e| e.se).map(|v| fixed(v, 3))),
            dash(e.and_then(|e| e.z).map(|v| fixed(v, 2))),
            dash(e.and_then(|e| e.p_value).map(|v| fixed(v, 3))),
            e.map(|e| e.stars.clone()).unwrap_or_default(),
            dash(e.map(|e| format!("{:.1}%", e.pct()))),
            marks.join(","),
        ]);
        table.push(cells);
    }
    table
        .notes
        .push("Significance level: * 10%; ** 5%; *** 1%.".into());
    for (k, n) in notes.iter().enumerate() {
        table.notes.push(format!("{} {n}", k + 1));
    }
    table
}

fn balance_output(reports: &[BalanceReport]) -> Table {
    let mut t = Table::new(
        "Covariate balance before and after matching",
        &[
            "contrast",
            "covariate",
            "mean treated",
            "mean control",
            "std diff before",
            "mean treated matched",
            "mean control matched",
            "std diff after",
        ],
    );
    for r in reports {
        let Some(table) = &r.table else {
            continue;
        };
        for row in &table.rows {
            t.push(vec![
                r.contrast_id.to_string(),
                row.covariate.clone(),
                fixed(row.mean_treated, 4),
                fixed(row.mean_control, 4),
                opt_fixed(row.std_diff_before, 4),
                fixed(row.mean_treated_matched, 4),
                fixed(row.mean_control_matched, 4),
                opt_fixed(row.std_diff_after, 4),
            ]);
        }
    }
    if let Some(spec) = reports.first().map(|r| &r.spec) {
        t.notes.push(format!("Matched means use {spec} weights."));
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_overrides() {
        let c = RunConfig::from_toml_str(
            r#"
            input = "in.csv"
            output_dir = "out"
            contrasts = [1, 4]
            [filter.area_threshold_by_state]
            PA = 2000000.0
            [[specs]]
            algorithm = "radius"
            radius = 0.05
            "#,
        )
        .unwrap();
        assert_eq!(c.contrasts, vec![1, 4]);
        assert_eq!(c.specs, vec![MatchSpec::radius(0.05)]);
        assert_eq!(c.formats, all_formats());
        assert_eq!(c.bootstrap, BootstrapConfig::default());
        assert!(!c.subgroups);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn unknown_key_is_a_config_error() {
        let e =
            RunConfig::from_toml_str("input = 'a'\noutput_dir = 'b'\nbandwidth = 1").unwrap_err();
        assert_eq!(e.exit_code(), 1);
    }

    #[test]
    fn parameter_findings() {
        let mut c = RunConfig::new("in.csv", "out");
        assert!(c.parameter_findings().is_empty());
        c.specs[0].bandwidth = 0.0;
        c.contrasts = vec![3, 3, 11];
        let found: Vec<String> = c
            .parameter_findings()
            .into_iter()
            .map(|f| f.message)
            .collect();
        assert!(found.iter().any(|m| m.contains("bandwidth")), "{found:?}");
        assert!(found.iter().any(|m| m.contains("contrast 11")));
        assert!(found.iter().any(|m| m.contains("duplicates")));
    }

    #[test]
    fn dashes_and_footnotes() {
        let row = AttRow {
            sample: "all".into(),
            contrast_id: 10,
            contrast: "All policies".into(),
            n_treated: 1,
            n_controls: 500,
            algorithm: "Kernel".into(),
            estimate: None,
            notes: vec![SMALL_TREATED_NOTE.into()],
        };
        let t = att_table(&[row.clone(), row], false);
        assert_eq!(t.rows[0][4..9], ["-", "-", "-", "-", ""]);
        assert_eq!(t.rows[1][10], "1");
        assert_eq!(t.notes.len(), 2);
        assert!(t.notes[1].starts_with("1 Non-calculable"));
    }
}
