//! Synthetic survey populations with a known assignment mechanism and
//! known true effects, plus a naive matching oracle.
//!
//! Treatment cells are drawn from a multinomial logit whose linear
//! predictors are written in standardised covariates
//! `z = (x - mean) / sd`, using the nominal mean and sd of each covariate's
//! distribution. Because the standardisation is affine, the assignment
//! model is still a logit in the raw covariates and the fitted propensity
//! models are correctly specified for the exclusive contrasts.
//!
//! The selling probability of a unit in cell `c` is
//! `clamp(sigmoid(baseline(z)) + effect[c], 0.01, 0.99)`.

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{EmploymentClass, HouseholdRecord, Region};
use crate::error::{Error, Result};
use crate::lattice::{standard_contrasts, TreatmentCell};
use crate::matching::{Algorithm, Arm, MatchSpec};

const PROBABILITY_FLOOR: f64 = 0.01;
const PROBABILITY_CEILING: f64 = 0.99;
/// Largest problem `brute_force_att` accepts.
pub const ORACLE_MAX_UNITS: usize = 1000;

/// Names accepted as linear-predictor coefficients besides the covariates.
const REGION_TERMS: [(&str, Region); 5] = [
    ("region_north", Region::North),
    ("region_northeast", Region::Northeast),
    ("region_central_west", Region::CentralWest),
    ("region_southeast", Region::Southeast),
    ("region_south", Region::South),
];

/// Parametric law of one covariate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Distribution {
    /// Normal draw, clamped to `[min, max]` and optionally rounded.
    Normal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        min: Option<f64>,
        #[serde(default)]
        max: Option<f64>,
        #[serde(default)]
        integer: bool,
    },
    /// Log-normal with the given arithmetic mean and sd, optionally capped.
    LogNormal {
        mean: f64,
        sd: f64,
        #[serde(default)]
        max: Option<f64>,
    },
    Bernoulli {
        p: f64,
    },
}

impl Distribution {
    /// Mean and sd used to standardise the covariate in linear predictors.
    pub fn nominal(&self) -> (f64, f64) {
        match *self {
            Distribution::Normal { mean, sd, .. } | Distribution::LogNormal { mean, sd, .. } => {
                (mean, sd)
            }
            Distribution::Bernoulli { p } => (p, (p * (1.0 - p)).sqrt()),
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("covariate `{name}`: {m}")));
        match *self {
            Distribution::Normal {
                mean, sd, min, max, ..
            } => {
                if !(sd > 0.0) || !mean.is_finite() {
                    return bad(format!(
                        "needs a finite mean and positive sd, got {mean} and {sd}"
                    ));
                }
                if let (Some(lo), Some(hi)) = (min, max) {
                    if lo > hi {
                        return bad(format!("min {lo} exceeds max {hi}"));
                    }
                }
            }
            Distribution::LogNormal { mean, sd, max } => {
                if !(mean > 0.0) || !(sd > 0.0) {
                    return bad(format!(
                        "log-normal mean and sd must be positive, got {mean} and {sd}"
                    ));
                }
                if max.is_some_and(|m| !(m > 0.0)) {
                    return bad("log-normal cap must be positive".into());
                }
            }
            Distribution::Bernoulli { p } => {
                if !(p > 0.0 && p < 1.0) {
                    return bad(format!("Bernoulli p must lie in (0, 1), got {p}"));
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Distribution::Normal {
                mean,
                sd,
                min,
                max,
                integer,
            } => {
                let mut v = Normal::new(mean, sd).expect("validated sd").sample(rng);
                if integer {
                    v = v.round();
                }
                if let Some(lo) = min {
                    v = v.max(lo);
                }
                if let Some(hi) = max {
                    v = v.min(hi);
                }
                v
            }
            Distribution::LogNormal { mean, sd, max } => {
                let s2 = (1.0 + (sd / mean).powi(2)).ln();
                let mu = mean.ln() - 0.5 * s2;
                let v = LogNormal::new(mu, s2.sqrt())
                    .expect("validated parameters")
                    .sample(rng);
                max.map_or(v, |m| v.min(m))
            }
            Distribution::Bernoulli { p } => f64::from(u8::from(rng.random_bool(p))),
        }
    }
}

/// One distribution per covariate of the household record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateSpec {
    pub age: Distribution,
    pub gender_man: Distribution,
    pub farm_area: Distribution,
    pub race_white: Distribution,
    pub education: Distribution,
    pub household_size: Distribution,
    pub mobile_phone: Distribution,
    pub internet: Distribution,
    pub transport: Distribution,
    pub farm_income: Distribution,
    pub other_income: Distribution,
}

impl CovariateSpec {
    pub const NAMES: [&'static str; 11] = [
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

    fn in_order(&self) -> [&Distribution; 11] {
        [
            &self.age,
            &self.gender_man,
            &self.farm_area,
            &self.race_white,
            &self.education,
            &self.household_size,
            &self.mobile_phone,
            &self.internet,
            &self.transport,
            &self.farm_income,
            &self.other_income,
        ]
    }
}

/// `intercept + sum(coefficient * term)`. Covariate terms enter
/// standardised; `region_*` terms are 0/1 indicators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearPredictor {
    #[serde(default)]
    pub intercept: f64,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

impl LinearPredictor {
    fn validate(&self, owner: &str) -> Result<()> {
        if !self.intercept.is_finite() {
            return Err(Error::Config(format!("{owner}: intercept must be finite")));
        }
        for (name, b) in &self.coefficients {
            let known = CovariateSpec::NAMES.contains(&name.as_str())
                || REGION_TERMS.iter().any(|(t, _)| t == name);
            if !known {
                return Err(Error::Config(format!("{owner}: unknown term `{name}`")));
            }
            if !b.is_finite() {
                return Err(Error::Config(format!(
                    "{owner}: coefficient on `{name}` must be finite"
                )));
            }
        }
        Ok(())
    }

    fn eval(&self, unit: &Unit) -> f64 {
        self.coefficients
            .iter()
            .fold(self.intercept, |acc, (name, b)| acc + b * unit.term(name))
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModel {
    /// Selling probability without policies, on the logit scale.
    pub baseline: LinearPredictor,
    /// Additive effect of each cell on the probability scale; absent cells
    /// have no effect.
    #[serde(default)]
    pub effects: BTreeMap<TreatmentCell, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub n: usize,
    pub seed: u64,
    pub covariates: CovariateSpec,
    /// Region shares; normalised to sum to one.
    pub regions: BTreeMap<Region, f64>,
    /// Linear predictor of each non-baseline cell against `NoPolicy`. A cell
    /// left out is never assigned.
    pub assignment: BTreeMap<TreatmentCell, LinearPredictor>,
    pub outcome: OutcomeModel,
}

/// Scenario files shipped with the crate.
pub const PACKAGED_SCENARIOS: [(&str, &str); 3] = [
    ("default", include_str!("../scenarios/default.toml")),
    (
        "strong_selection",
        include_str!("../scenarios/strong_selection.toml"),
    ),
    ("zero_effect", include_str!("../scenarios/zero_effect.toml")),
];

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
        let config: ScenarioConfig = toml::from_str(text)
            .map_err(|e| Error::Config(format!("scenario: {}", e.message())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<ScenarioConfig> {
        ScenarioConfig::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// One of the scenarios in `PACKAGED_SCENARIOS`.
    pub fn packaged(name: &str) -> Result<ScenarioConfig> {
        let (_, text) = PACKAGED_SCENARIOS
            .iter()
            .find(|(n, _)| *n == name)
            .ok_or_else(|| Error::Config(format!("no packaged scenario named `{name}`")))?;
        ScenarioConfig::from_toml_str(text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("scenario n must be positive".into()));
        }
        for (name, dist) in CovariateSpec::NAMES.iter().zip(self.covariates.in_order()) {
            dist.validate(name)?;
        }
        if matches!(
            self.covariates.household_size,
            Distribution::Bernoulli { .. }
        ) {
            return Err(Error::Config("household_size cannot be Bernoulli".into()));
        }
        if self
            .regions
            .values()
            .any(|s| !(*s >= 0.0) || !s.is_finite())
            || self.regions.values().sum::<f64>() <= 0.0
        {
            return Err(Error::Config(
                "region shares must be non-negative with a positive sum".into(),
            ));
        }
        if self.assignment.contains_key(&TreatmentCell::NoPolicy) {
            return Err(Error::Config(
                "NoPolicy is the assignment baseline and takes no predictor".into(),
            ));
        }
        for (cell, lp) in &self.assignment {
            lp.validate(&format!("assignment of {cell}"))?;
        }
        self.outcome.baseline.validate("outcome baseline")?;
        for (cell, e) in &self.outcome.effects {
            if !e.is_finite() {
                return Err(Error::Config(format!("effect of {cell} must be finite")));
            }
        }
        Ok(())
    }

    /// Assignment probabilities of the eight cells for one unit.
    pub fn cell_probabilities(&self, unit: &Unit) -> [f64; 8] {
        let mut eta = [f64::NEG_INFINITY; 8];
        eta[TreatmentCell::NoPolicy.index()] = 0.0;
        for (cell, lp) in &self.assignment {
            eta[cell.index()] = lp.eval(unit);
        }
        let m = eta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p = eta.map(|e| (e - m).exp());
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        p
    }

    /// Selling probability of a unit placed in `cell`.
    pub fn outcome_probability(&self, unit: &Unit, cell: TreatmentCell) -> f64 {
        let base = crate::propensity::sigmoid(self.outcome.baseline.eval(unit));
        let effect = self.outcome.effects.get(&cell).copied().unwrap_or(0.0);
        (base + effect).clamp(PROBABILITY_FLOOR, PROBABILITY_CEILING)
    }
}

/// Covariates of one synthetic unit, raw and standardised.
#[derive(Debug, Clone, PartialEq)]
pub struct Unit {
    pub raw: [f64; 11],
    pub standardized: [f64; 11],
    pub region: Region,
}

impl Unit {
    fn term(&self, name: &str) -> f64 {
        if let Some(j) = CovariateSpec::NAMES.iter().position(|n| *n == name) {
            return self.standardized[j];
        }
        let (_, region) = REGION_TERMS
            .iter()
            .find(|(t, _)| *t == name)
            .expect("validated term");
        f64::from(u8::from(self.region == *region))
    }
}

/// True ATT of one contrast on the generated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContrastTruth {
    pub contrast_id: u8,
    pub name: String,
    pub n_treated: usize,
    /// `None` when no unit landed on the treated side.
    pub att: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub records: Vec<HouseholdRecord>,
    pub truth: Vec<ContrastTruth>,
    /// Sum over units of each cell's assignment probability.
    pub expected_cell_counts: [f64; 8],
    pub warnings: Vec<String>,
}

impl SyntheticData {
    pub fn truth_for(&self, contrast_id: u8) -> Option<&ContrastTruth> {
        self.truth.iter().find(|t| t.contrast_id == contrast_id)
    }
}

fn state_code(region: Region) -> &'static str {
    match region {
        Region::North => "PA",
        Region::Northeast => "BA",
        Region::CentralWest => "GO",
        Region::Southeast => "MG",
        Region::South => "RS",
    }
}

/// Draws a population from `config`.
///
/// Units are generated one at a time from a single ChaCha8 stream seeded
/// with `config.seed`: covariates, region, cell, outcome. All households
/// are self-employed without hired workers and use no private credit or
/// assistance, so they pass the family-farm labour and private-service
/// filters.
pub fn generate(config: &ScenarioConfig) -> Result<SyntheticData> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let dists = config.covariates.in_order();
    let nominal: Vec<(f64, f64)> = dists.iter().map(|d| d.nominal()).collect();
    let region_total: f64 = config.regions.values().sum();
    let regions: Vec<(Region, f64)> = config
        .regions
        .iter()
        .map(|(r, s)| (*r, s / region_total))
        .collect();

    let mut records = Vec::with_capacity(config.n);
    let mut units = Vec::with_capacity(config.n);
    let mut expected = [0.0; 8];
    for i in 0..config.n {
        let mut raw = [0.0; 11];
        for (v, d) in raw.iter_mut().zip(dists) {
            *v = d.sample(&mut rng);
        }
        // household size is a count of at least one person
        raw[5] = raw[5].round().max(1.0);
        let standardized = std::array::from_fn(|j| (raw[j] - nominal[j].0) / nominal[j].1);
        let region = draw_index(&mut rng, regions.iter().map(|(_, s)| *s))
            .map_or(regions[0].0, |k| regions[k].0);
        let unit = Unit {
            raw,
            standardized,
            region,
        };

        let probs = config.cell_probabilities(&unit);
        for (e, p) in expected.iter_mut().zip(probs) {
            *e += p;
        }
        let cell = TreatmentCell::ALL[draw_index(&mut rng, probs.into_iter()).unwrap_or(0)];
        let sold = rng.random_bool(config.outcome_probability(&unit, cell));
        let (pronaf, ater, seeds) = cell.flags();
        let farm_income = raw[9].max(0.0);
        let other_income = raw[10].max(0.0);
        records.push(HouseholdRecord {
            id: format!("S{:06}", i + 1),
            age: raw[0].max(0.0) as u32,
            gender_man: raw[1] > 0.5,
            farm_area: raw[2].max(0.0),
            race_white: raw[3] > 0.5,
            education: raw[4].max(0.0).round() as u32,
            household_size: raw[5] as u32,
            mobile_phone: Some(raw[6] > 0.5),
            internet: Some(raw[7] > 0.5),
            transport: Some(raw[8] > 0.5),
            farm_income: Some(farm_income),
            other_income: Some(other_income),
            macro_region: region,
            pronaf,
            ater,
            seeds,
            private_credit: false,
            private_assistance: false,
            hired_workers: 0,
            employment_class: EmploymentClass::Entrepreneur,
            state: state_code(region).into(),
            annual_gross_income: Some(12.0 * (farm_income + other_income)),
            sold_output: Some(sold),
        });
        units.push((unit, cell));
    }

    let mut warnings = Vec::new();
    for cell in TreatmentCell::ALL {
        let e = expected[cell.index()];
        if e < 1.0 {
            let msg = format!("cell {cell} has expected count {e:.3} at n = {}", config.n);
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let truth = standard_contrasts()
        .into_iter()
        .map(|c| {
            let mut sum = 0.0;
            let mut n_treated = 0;
            for (unit, cell) in &units {
                if !c.is_treated(*cell) {
                    continue;
                }
                n_treated += 1;
                let probs = config.cell_probabilities(unit);
                let (mut num, mut den) = (0.0, 0.0);
                for ctrl in &c.control {
                    let w = probs[ctrl.index()];
                    num += w * config.outcome_probability(unit, *ctrl);
                    den += w;
                }
                let untreated = if den > 0.0 {
                    num / den
                } else {
                    // no control cell can occur here; fall back to the plain mean
                    c.control
                        .iter()
                        .map(|ctrl| config.outcome_probability(unit, *ctrl))
                        .sum::<f64>()
                        / c.control.len() as f64
                };
                sum += config.outcome_probability(unit, *cell) - untreated;
            }
            ContrastTruth {
                contrast_id: c.id,
                name: c.name.clone(),
                n_treated,
                att: (n_treated > 0).then(|| sum / n_treated as f64),
            }
        })
        .collect();
    Ok(SyntheticData {
        records,
        truth,
        expected_cell_counts: expected,
        warnings,
    })
}

/// Index drawn with probability proportional to `weights`.
fn draw_index(rng: &mut ChaCha8Rng, weights: impl Iterator<Item = f64> + Clone) -> Option<usize> {
    let total: f64 = weights.clone().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = None;
    for (k, w) in weights.enumerate() {
        if w <= 0.0 {
            continue;
        }
        last = Some(k);
        if u < w {
            return Some(k);
        }
        u -= w;
    }
    last
}

/// ATT by direct enumeration of every treated-control pair.
///
/// Shares no code with the matching module. Supports the min-max common
/// support rule without quantile trimming.
pub fn brute_force_att(treated: &Arm, control: &Arm, spec: &MatchSpec) -> Result<f64> {
    if treated.len() + control.len() > ORACLE_MAX_UNITS {
        return Err(Error::Config(format!(
            "oracle is limited to {ORACLE_MAX_UNITS} units"
        )));
    }
    if spec.support_trim != 0.0 {
        return Err(Error::Config("oracle does not trim the support".into()));
    }
    spec.validate()?;
    if treated.scores.is_empty() || control.scores.is_empty() {
        return Err(Error::Estimation("both arms need units".into()));
    }
    let all = treated.scores.iter().chain(&control.scores);
    if all.clone().any(|p| !(*p > 0.0 && *p < 1.0)) {
        return Err(Error::Estimation("scores must lie in (0, 1)".into()));
    }
    let lowest = |s: &[f64]| s.iter().copied().fold(f64::INFINITY, f64::min);
    let highest = |s: &[f64]| s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = lowest(&treated.scores).max(lowest(&control.scores));
    let hi = highest(&treated.scores).min(highest(&control.scores));
    if spec.common_support && lo > hi {
        return Err(Error::EmptySupport);
    }

    let mut total = 0.0;
    let mut matched = 0usize;
    for (&p, &y) in treated.scores.iter().zip(&treated.outcomes) {
        if spec.common_support && (p < lo || p > hi) {
            continue;
        }
        let dist: Vec<f64> = control.scores.iter().map(|s| (p - s).abs()).collect();
        let weights: Vec<f64> = match spec.algorithm {
            Algorithm::Kernel => control
                .scores
                .iter()
                .map(|s| spec.kernel.weight((p - s) / spec.bandwidth))
                .collect(),
            Algorithm::Radius => dist
                .iter()
                .map(|d| if *d <= spec.radius { 1.0 } else { 0.0 })
                .collect(),
            Algorithm::NearestNeighbour => {
                let mut sorted = dist.clone();
                sorted.sort_by(f64::total_cmp);
                let kth = sorted[spec.k.min(sorted.len()) - 1];
                dist.iter()
                    .map(|d| if *d <= kth { 1.0 } else { 0.0 })
                    .collect()
            }
        };
        let den: f64 = weights.iter().sum();
        if den <= 0.0 {
            continue;
        }
        let num: f64 = weights
            .iter()
            .zip(&control.outcomes)
            .map(|(w, y)| w * y)
            .sum();
        total += y - num / den;
        matched += 1;
    }
    if matched == 0 {
        return Err(Error::Estimation("no treated unit was matched".into()));
    }
    Ok(total / matched as f64)
}
