//! Common support and propensity-score matching estimators of the ATT.
//!
//! Controls are held in a [`ControlPool`] sorted by (score, outcome), so
//! every estimator visits them in an order independent of input order and
//! only inspects the window of scores that can receive weight.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Kernel,
    NearestNeighbour,
    Radius,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Kernel => "kernel",
            Algorithm::NearestNeighbour => "nearest_neighbour",
            Algorithm::Radius => "radius",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelKind {
    #[default]
    Epanechnikov,
    Gaussian,
}

impl KernelKind {
    /// Kernel weight at standardised distance `u`.
    pub fn weight(self, u: f64) -> f64 {
        match self {
            KernelKind::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelKind::Gaussian => (-0.5 * u * u).exp(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MatchSpec {
    pub algorithm: Algorithm,
    pub kernel: KernelKind,
    pub bandwidth: f64,
    /// Number of neighbours for nearest-neighbour matching.
    pub k: usize,
    /// Caliper for radius matching.
    pub radius: f64,
    pub common_support: bool,
    /// Fraction trimmed from each tail of both score distributions when
    /// forming the support interval; 0 gives the min-max rule.
    pub support_trim: f64,
}

impl Default for MatchSpec {
    fn default() -> Self {
        MatchSpec {
            algorithm: Algorithm::Kernel,
            kernel: KernelKind::Epanechnikov,
            bandwidth: 0.06,
            k: 3,
            radius: 0.10,
            common_support: true,
            support_trim: 0.0,
        }
    }
}

impl MatchSpec {
    pub fn kernel() -> Self {
        MatchSpec::default()
    }

    pub fn nearest_neighbour(k: usize) -> Self {
        MatchSpec {
            algorithm: Algorithm::NearestNeighbour,
            k,
            ..Default::default()
        }
    }

    pub fn radius(radius: f64) -> Self {
        MatchSpec {
            algorithm: Algorithm::Radius,
            radius,
            ..Default::default()
        }
    }

    /// Kernel, three nearest neighbours, radius 0.10.
    pub fn standard_set() -> Vec<MatchSpec> {
        vec![
            MatchSpec::kernel(),
            MatchSpec::nearest_neighbour(3),
            MatchSpec::radius(0.10),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        match self.algorithm {
            Algorithm::Kernel if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) => {
                bad("kernel bandwidth must be positive")
            }
            Algorithm::NearestNeighbour if self.k == 0 => {
                bad("nearest-neighbour k must be at least 1")
            }
            Algorithm::Radius if !(self.radius > 0.0 && self.radius.is_finite()) => {
                bad("radius must be positive")
            }
            _ if !(0.0..0.5).contains(&self.support_trim) => {
                bad("support_trim must lie in [0, 0.5)")
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for MatchSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.algorithm {
            Algorithm::Kernel => match self.kernel {
                KernelKind::Epanechnikov => f.write_str("Kernel"),
                KernelKind::Gaussian => f.write_str("Kernel (gaussian)"),
            },
            Algorithm::NearestNeighbour => write!(f, "Nearest neighbour (n={})", self.k),
            Algorithm::Radius => write!(f, "Radius caliper ({:.2})", self.radius),
        }
    }
}

/// Scores and outcomes of one side of a contrast.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Arm {
    pub scores: Vec<f64>,
    pub outcomes: Vec<f64>,
}

impl Arm {
    pub fn new(scores: Vec<f64>, outcomes: Vec<f64>) -> Self {
        assert_eq!(
            scores.len(),
            outcomes.len(),
            "scores and outcomes differ in length"
        );
        Arm { scores, outcomes }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    pub fn mean_outcome(&self) -> f64 {
        self.outcomes.iter().sum::<f64>() / self.len() as f64
    }
}

/// Point estimate of the ATT for one contrast and matching algorithm,
/// with inference fields filled in by the bootstrap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttEstimate {
    pub contrast_id: u8,
    pub spec: MatchSpec,
    pub coeff: f64,
    pub se: Option<f64>,
    pub z: Option<f64>,
    pub p_value: Option<f64>,
    pub stars: String,
    pub n_treated: usize,
    pub n_treated_on_support: usize,
    /// Off-support treated units.
    pub n_treated_dropped: usize,
    /// On-support treated units with no control receiving weight.
    pub n_treated_unmatched: usize,
    pub n_controls: usize,
    pub successful_replicates: Option<usize>,
}

impl AttEstimate {
    pub fn algorithm(&self) -> Algorithm {
        self.spec.algorithm
    }

    /// The ATT as a percentage.
    pub fn pct(&self) -> f64 {
        100.0 * self.coeff
    }

    pub fn n_matched(&self) -> usize {
        self.n_treated_on_support - self.n_treated_unmatched
    }
}

fn check_scores(scores: &[f64], side: &str) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Estimation(format!("no {side} scores")));
    }
    match scores.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        Some(p) => Err(Error::Estimation(format!(
            "{side} score {p} is outside (0, 1)"
        ))),
        None => Ok(()),
    }
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Support interval `[max(lower_T, lower_C), min(upper_T, upper_C)]` where
/// the bounds are group minima and maxima (or `trim`/`1 - trim` quantiles).
pub fn support_interval(treated: &[f64], control: &[f64], trim: f64) -> Result<(f64, f64)> {
    check_scores(treated, "treated")?;
    check_scores(control, "control")?;
    let bounds = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        (quantile(&v, trim), quantile(&v, 1.0 - trim))
    };
    let (lt, ut) = bounds(treated);
    let (lc, uc) = bounds(control);
    let (lo, hi) = (lt.max(lc), ut.min(uc));
    if lo > hi {
        return Err(Error::EmptySupport);
    }
    Ok((lo, hi))
}

/// Keep/drop mask over treated units under the min-max rule.
pub fn common_support_mask(treated: &[f64], control: &[f64]) -> Result<Vec<bool>> {
    let (lo, hi) = support_interval(treated, control, 0.0)?;
    Ok(treated.iter().map(|p| (lo..=hi).contains(p)).collect())
}

/// Controls sorted by (score, outcome), remembering input positions.
#[derive(Debug, Clone)]
pub struct ControlPool {
    scores: Vec<f64>,
    outcomes: Vec<f64>,
    original: Vec<usize>,
}

impl ControlPool {
    pub fn new(scores: &[f64], outcomes: &[f64]) -> Self {
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[a]
                .total_cmp(&scores[b])
                .then(outcomes[a].total_cmp(&outcomes[b]))
        });
        ControlPool {
            scores: order.iter().map(|&i| scores[i]).collect(),
            outcomes: order.iter().map(|&i| outcomes[i]).collect(),
            original: order,
        }
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Sorted positions whose score lies in `[lo, hi]`.
    fn window(&self, lo: f64, hi: f64) -> std::ops::Range<usize> {
        let start = self.scores.partition_point(|&s| s < lo);
        let end = self.scores.partition_point(|&s| s <= hi);
        start..end.max(start)
    }

    /// Calls `visit(sorted_position, weight)` for every control with
    /// positive matching weight for a treated unit at score `p`, and
    /// returns whether any control was visited.
    fn for_each_weight(&self, p: f64, spec: &MatchSpec, mut visit: impl FnMut(usize, f64)) -> bool {
        let mut any = false;
        match spec.algorithm {
            Algorithm::Kernel => {
                let h = spec.bandwidth;
                let range = match spec.kernel {
                    KernelKind::Epanechnikov => {
                        let slack = h * 1e-9 + 1e-15;
                        self.window(p - h - slack, p + h + slack)
                    }
                    KernelKind::Gaussian => 0..self.len(),
                };
                for j in range {
                    let w = spec.kernel.weight((p - self.scores[j]) / h);
                    if w > 0.0 {
                        visit(j, w);
                        any = true;
                    }
                }
            }
            Algorithm::Radius => {
                let r = spec.radius;
                let slack = r * 1e-9 + 1e-15;
                for j in self.window(p - r - slack, p + r + slack) {
                    if (p - self.scores[j]).abs() <= r {
                        visit(j, 1.0);
                        any = true;
                    }
                }
            }
            Algorithm::NearestNeighbour => {
                let dist = |j: usize| (p - self.scores[j]).abs();
                let split = self.scores.partition_point(|&s| s < p);
                // next candidates on each side
                let mut left = split;
                let mut right = split;
                let mut taken = 0;
                let mut kth = 0.0;
                while taken < spec.k && (left > 0 || right < self.len()) {
                    let take_left = match (left > 0, right < self.len()) {
                        (true, true) => dist(left - 1) <= dist(right),
                        (l, _) => l,
                    };
                    let j = if take_left {
                        left -= 1;
                        left
                    } else {
                        right += 1;
                        right - 1
                    };
                    kth = dist(j);
                    visit(j, 1.0);
                    taken += 1;
                    any = true;
                }
                while left > 0 && dist(left - 1) == kth {
                    left -= 1;
                    visit(left, 1.0);
                }
                while right < self.len() && dist(right) == kth {
                    visit(right, 1.0);
                    right += 1;
                }
            }
        }
        any
    }

    /// Weighted mean control outcome for a treated unit at `p`; `None`
    /// when no control receives weight.
    pub fn counterfactual(&self, p: f64, spec: &MatchSpec) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        let any = self.for_each_weight(p, spec, |j, w| {
            num += w * self.outcomes[j];
            den += w;
        });
        (any && den > 0.0).then(|| num / den)
    }

    /// Normalised weights `(input position, weight)` for a treated unit.
    pub fn weights(&self, p: f64, spec: &MatchSpec) -> Option<Vec<(usize, f64)>> {
        let mut out = Vec::new();
        self.for_each_weight(p, spec, |j, w| out.push((self.original[j], w)));
        let total: f64 = out.iter().map(|(_, w)| w).sum();
        if out.is_empty() || total <= 0.0 {
            return None;
        }
        out.iter_mut().for_each(|(_, w)| *w /= total);
        Some(out)
    }
}

/// Kernel-weighted mean control outcome; `None` marks an unmatched unit.
pub fn kernel_counterfactual(
    treated_score: f64,
    control_scores: &[f64],
    control_outcomes: &[f64],
    kernel: KernelKind,
    bandwidth: f64,
) -> Option<f64> {
    let spec = MatchSpec {
        kernel,
        bandwidth,
        ..MatchSpec::kernel()
    };
    ControlPool::new(control_scores, control_outcomes).counterfactual(treated_score, &spec)
}

/// Mean outcome of the `k` nearest controls, including every control tied
/// with the k-th distance. `None` only when there are no controls.
pub fn nn_counterfactual(
    treated_score: f64,
    control_scores: &[f64],
    control_outcomes: &[f64],
    k: usize,
) -> Option<f64> {
    ControlPool::new(control_scores, control_outcomes)
        .counterfactual(treated_score, &MatchSpec::nearest_neighbour(k))
}

/// Mean outcome of all controls within `radius`; `None` marks an
/// unmatched unit.
pub fn radius_counterfactual(
    treated_score: f64,
    control_scores: &[f64],
    control_outcomes: &[f64],
    radius: f64,
) -> Option<f64> {
    ControlPool::new(control_scores, control_outcomes)
        .counterfactual(treated_score, &MatchSpec::radius(radius))
}

fn support_keep(treated: &Arm, control: &Arm, spec: &MatchSpec) -> Result<Vec<bool>> {
    if spec.common_support {
        let (lo, hi) = support_interval(&treated.scores, &control.scores, spec.support_trim)?;
        Ok(treated
            .scores
            .iter()
            .map(|p| (lo..=hi).contains(p))
            .collect())
    } else {
        check_scores(&treated.scores, "treated")?;
        check_scores(&control.scores, "control")?;
        Ok(vec![true; treated.len()])
    }
}

/// ATT as the mean, over matched on-support treated units, of the treated
/// outcome minus its matched counterfactual.
pub fn estimate_att(treated: &Arm, control: &Arm, spec: &MatchSpec) -> Result<AttEstimate> {
    spec.validate()?;
    if control.is_empty() {
        return Err(Error::Estimation("no control units".into()));
    }
    if treated.is_empty() {
        return Err(Error::Estimation("no treated units".into()));
    }
    let keep = support_keep(treated, control, spec)?;
    let pool = ControlPool::new(&control.scores, &control.outcomes);
    let mut sum = 0.0;
    let mut matched = 0usize;
    let mut unmatched = 0usize;
    for (i, &on) in keep.iter().enumerate() {
        if !on {
            continue;
        }
        match pool.counterfactual(treated.scores[i], spec) {
            Some(cf) => {
                sum += treated.outcomes[i] - cf;
                matched += 1;
            }
            None => unmatched += 1,
        }
    }
    let on_support = keep.iter().filter(|&&k| k).count();
    if matched == 0 {
        return Err(Error::Estimation(if on_support == 0 {
            "no treated units on common support".into()
        } else {
            "no on-support treated unit has a matched control".into()
        }));
    }
    Ok(AttEstimate {
        contrast_id: 0,
        spec: *spec,
        coeff: sum / matched as f64,
        se: None,
        z: None,
        p_value: None,
        stars: String::new(),
        n_treated: treated.len(),
        n_treated_on_support: on_support,
        n_treated_dropped: treated.len() - on_support,
        n_treated_unmatched: unmatched,
        n_controls: control.len(),
        successful_replicates: None,
    })
}

/// How matching weights the two arms.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchWeights {
    /// Treated units that are on support and matched.
    pub treated_matched: Vec<bool>,
    /// Total normalised weight per control, divided by the number of
    /// matched treated units (sums to 1).
    pub control_weight: Vec<f64>,
}

pub fn match_weights(treated: &Arm, control: &Arm, spec: &MatchSpec) -> Result<MatchWeights> {
    spec.validate()?;
    let keep = support_keep(treated, control, spec)?;
    let pool = ControlPool::new(&control.scores, &control.outcomes);
    let mut control_weight = vec![0.0; control.len()];
    let mut treated_matched = vec![false; treated.len()];
    for (i, &on) in keep.iter().enumerate() {
        if !on {
            continue;
        }
        if let Some(ws) = pool.weights(treated.scores[i], spec) {
            treated_matched[i] = true;
            for (j, w) in ws {
                control_weight[j] += w;
            }
        }
    }
    let m = treated_matched.iter().filter(|&&b| b).count();
    if m == 0 {
        return Err(Error::Estimation("no matched treated units".into()));
    }
    control_weight.iter_mut().for_each(|w| *w /= m as f64);
    Ok(MatchWeights {
        treated_matched,
        control_weight,
    })
}
