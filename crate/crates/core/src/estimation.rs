//! Glue between the lattice, the propensity models and the matching
//! estimators: turns an analysis sample into per-contrast treated and
//! control arms.

use serde::{Deserialize, Serialize};

use crate::dataset::HouseholdRecord;
use crate::error::{Error, Result};
use crate::lattice::{Contrast, ModelKind, TreatmentCell};
use crate::matching::{estimate_att, Arm, AttEstimate, MatchSpec};
use crate::propensity::{
    build_design_with, fit_binary_logit, fit_multinomial_logit, DesignMatrix, DesignOptions,
    PropensityModel, Scores,
};

/// Score used to match an exclusive contrast (target cell m against the
/// no-policy baseline) under the multinomial model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpsScore {
    /// P(m | x) / (P(m | x) + P(NoPolicy | x)).
    #[default]
    Conditional,
    /// P(m | x).
    Marginal,
}

/// Design rows, lattice cells and 0/1 outcomes of one analysis sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub design: DesignMatrix,
    pub cells: Vec<TreatmentCell>,
    pub outcomes: Vec<f64>,
}

impl Sample {
    pub fn from_records(records: &[HouseholdRecord], options: &DesignOptions) -> Result<Sample> {
        let design = build_design_with(records, options)?;
        let outcomes = records
            .iter()
            .map(|r| {
                r.outcome().ok_or_else(|| Error::MissingValue {
                    record: r.id.clone(),
                    field: "sold_output".into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sample {
            design,
            cells: records.iter().map(HouseholdRecord::cell).collect(),
            outcomes,
        })
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    /// Rows at `indices`, in that order (repeats allowed).
    pub fn select(&self, indices: &[usize]) -> Sample {
        Sample {
            design: self.design.select_rows(indices),
            cells: indices.iter().map(|&i| self.cells[i]).collect(),
            outcomes: indices.iter().map(|&i| self.outcomes[i]).collect(),
        }
    }

    /// Rows belonging to the treated or control side of `contrast`.
    pub fn pool_indices(&self, contrast: &Contrast) -> Vec<usize> {
        (0..self.len())
            .filter(|&i| contrast.is_treated(self.cells[i]) || contrast.is_control(self.cells[i]))
            .collect()
    }

    pub fn cell_counts(&self) -> [usize; 8] {
        crate::lattice::cell_counts(&self.cells, |c| *c)
    }
}

/// Binary logit of membership in the treated side of `contrast`, fitted
/// on the contrast's pool.
pub fn fit_binary_for(
    sample: &Sample,
    contrast: &Contrast,
) -> Result<(PropensityModel, Vec<usize>)> {
    let rows = sample.pool_indices(contrast);
    let sub = sample.select(&rows);
    let t: Vec<bool> = sub.cells.iter().map(|c| contrast.is_treated(*c)).collect();
    let model = fit_binary_logit(&sub.design, &t)?;
    require_converged(&model)?;
    Ok((model, rows))
}

/// Multinomial logit over the lattice cells of `sample`.
///
/// Cells with fewer than two observations are left out of the fit. If the
/// fit still fails (separation or non-convergence), the smallest remaining
/// non-baseline cell is dropped and the fit retried. Returns the model and
/// the sample rows it covers.
pub fn fit_multinomial_for(sample: &Sample) -> Result<(PropensityModel, Vec<usize>)> {
    let counts = sample.cell_counts();
    let mut excluded: Vec<TreatmentCell> = TreatmentCell::ALL
        .into_iter()
        .filter(|c| counts[c.index()] < 2)
        .collect();
    loop {
        let rows: Vec<usize> = (0..sample.len())
            .filter(|&i| !excluded.contains(&sample.cells[i]))
            .collect();
        let sub = sample.select(&rows);
        let attempt = fit_multinomial_logit(&sub.design, &sub.cells).and_then(|m| {
            require_converged(&m)?;
            Ok(m)
        });
        match attempt {
            Ok(model) => return Ok((model, rows)),
            Err(err @ (Error::Separation(_) | Error::NotConverged(_) | Error::Singular)) => {
                let smallest = TreatmentCell::ALL
                    .into_iter()
                    .filter(|c| {
                        *c != TreatmentCell::NoPolicy
                            && counts[c.index()] >= 2
                            && !excluded.contains(c)
                    })
                    .min_by_key(|c| (counts[c.index()], std::cmp::Reverse(c.index())));
                match smallest {
                    Some(c) => {
                        log::warn!("multinomial fit failed ({err}); refitting without {c}");
                        excluded.push(c);
                    }
                    None => return Err(err),
                }
            }
            Err(err) => return Err(err),
        }
    }
}

fn require_converged(model: &PropensityModel) -> Result<()> {
    if model.converged {
        Ok(())
    } else {
        Err(Error::NotConverged(model.iterations))
    }
}

/// Splits the rows covered by `model` into treated and control arms of
/// `contrast`, scored by the model.
pub fn contrast_arms(
    sample: &Sample,
    contrast: &Contrast,
    model: &PropensityModel,
    rows: &[usize],
    gps: GpsScore,
) -> Result<(Arm, Arm)> {
    let mut treated = Arm::default();
    let mut control = Arm::default();
    let target = contrast.target_cell();
    for (r, &i) in rows.iter().enumerate() {
        let cell = sample.cells[i];
        let is_treated = contrast.is_treated(cell);
        if !is_treated && !contrast.is_control(cell) {
            continue;
        }
        let score = match (&model.scores, target) {
            (Scores::Binary(s), _) => s[r],
            (Scores::Multinomial(s), Some(m)) => {
                let km = model
                    .class_index(m)
                    .ok_or_else(|| not_estimable(contrast, "target cell not in model"))?;
                let pm = s[r][km];
                match gps {
                    GpsScore::Marginal => pm,
                    GpsScore::Conditional => pm / (pm + s[r][0]),
                }
            }
            (Scores::Multinomial(_), None) => {
                return Err(Error::Estimation(
                    "total contrasts need a binary model".into(),
                ))
            }
        };
        let arm = if is_treated {
            &mut treated
        } else {
            &mut control
        };
        arm.scores.push(score);
        arm.outcomes.push(sample.outcomes[i]);
    }
    if treated.is_empty() || control.is_empty() {
        return Err(not_estimable(
            contrast,
            if treated.is_empty() {
                "no treated units"
            } else {
                "no control units"
            },
        ));
    }
    Ok((treated, control))
}

pub(crate) fn not_estimable(contrast: &Contrast, reason: &str) -> Error {
    Error::EmptyContrast {
        contrast_id: contrast.id,
        name: contrast.name.clone(),
        reason: reason.into(),
    }
}

/// Fits the propensity model for `contrast` from scratch on `sample` and
/// returns the scored arms. Exclusive contrasts fit a multinomial model on
/// their own pool, which holds two classes.
pub fn refit_arms(sample: &Sample, contrast: &Contrast, gps: GpsScore) -> Result<(Arm, Arm)> {
    match contrast.model_kind {
        ModelKind::Binary => {
            let (model, rows) = fit_binary_for(sample, contrast)?;
            contrast_arms(sample, contrast, &model, &rows, gps)
        }
        ModelKind::Multinomial => {
            let rows = sample.pool_indices(contrast);
            let sub = sample.select(&rows);
            let model = fit_multinomial_logit(&sub.design, &sub.cells)?;
            require_converged(&model)?;
            let all: Vec<usize> = (0..sub.len()).collect();
            contrast_arms(&sub, contrast, &model, &all, gps)
        }
    }
}

/// One estimate per spec from already-scored arms.
pub fn estimate_all(
    contrast: &Contrast,
    treated: &Arm,
    control: &Arm,
    specs: &[MatchSpec],
) -> Vec<Result<AttEstimate>> {
    specs
        .iter()
        .map(|spec| {
            estimate_att(treated, control, spec).map(|mut e| {
                e.contrast_id = contrast.id;
                e
            })
        })
        .collect()
}
