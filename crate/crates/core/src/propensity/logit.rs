//! Maximum-likelihood logit fits.
//!
//! Both fits run on an internally standardised copy of the design (each
//! non-intercept column centred and scaled to unit variance) and report
//! coefficients on the original scale. Constant non-intercept columns are
//! dropped and reported with a zero coefficient.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::{DesignMatrix, DESIGN_COLUMNS};
use crate::error::{Error, Result};
use crate::lattice::{ModelKind, TreatmentCell};

pub const MAX_ITERATIONS: usize = 100;
pub const TOLERANCE: f64 = 1e-8;
/// Largest admissible |coefficient| on the standardised scale before the
/// fit is declared separated.
pub const SEPARATION_BOUND: f64 = 30.0;
const MAX_HALVINGS: usize = 40;

/// Fitted probabilities per record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scores {
    /// P(T = 1 | x).
    Binary(Vec<f64>),
    /// One row per record, one entry per class in `PropensityModel::classes`.
    Multinomial(Vec<Vec<f64>>),
}

impl Default for Scores {
    fn default() -> Self {
        Scores::Binary(Vec::new())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub kind: ModelKind,
    pub columns: Vec<String>,
    /// Multinomial only: classes present in the fit, baseline first.
    pub classes: Vec<TreatmentCell>,
    /// Binary: one vector. Multinomial: one per non-baseline class, in
    /// `classes[1..]` order.
    pub coefficients: Vec<Vec<f64>>,
    pub log_likelihood: f64,
    pub log_likelihood_path: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    /// Max |score equation| at the final coefficients, standardised scale.
    pub max_score_residual: f64,
    pub dropped_columns: Vec<String>,
    #[serde(skip)]
    pub scores: Scores,
}

impl PropensityModel {
    /// Binary scores; `None` for a multinomial model.
    pub fn binary_scores(&self) -> Option<&[f64]> {
        match &self.scores {
            Scores::Binary(s) => Some(s),
            Scores::Multinomial(_) => None,
        }
    }

    pub fn class_index(&self, cell: TreatmentCell) -> Option<usize> {
        self.classes.iter().position(|c| *c == cell)
    }

    /// Fitted probability of `target` for fitted record `row`.
    pub fn fitted_score(&self, row: usize, target: TreatmentCell) -> Result<f64> {
        match &self.scores {
            Scores::Multinomial(s) => {
                let k = self
                    .class_index(target)
                    .ok_or_else(|| unknown_class(target))?;
                Ok(s[row][k])
            }
            Scores::Binary(_) => Err(Error::Estimation(
                "generalised scores need a multinomial model".into(),
            )),
        }
    }

    /// Class probabilities for an arbitrary design row.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let eta: Vec<f64> = self
            .coefficients
            .iter()
            .map(|b| b.iter().zip(x).map(|(b, x)| b * x).sum())
            .collect();
        match self.kind {
            ModelKind::Binary => vec![sigmoid(eta[0])],
            ModelKind::Multinomial => softmax_with_baseline(&eta),
        }
    }
}

fn unknown_class(target: TreatmentCell) -> Error {
    Error::Estimation(format!("class {target} is not in the model"))
}

/// Probability of `target` for design row `x` under a multinomial model.
pub fn generalized_score(model: &PropensityModel, x: &[f64], target: TreatmentCell) -> Result<f64> {
    if model.kind != ModelKind::Multinomial {
        return Err(Error::Estimation(
            "generalised scores need a multinomial model".into(),
        ));
    }
    if !model.converged {
        return Err(Error::Estimation("model did not converge".into()));
    }
    let k = model
        .class_index(target)
        .ok_or_else(|| unknown_class(target))?;
    Ok(model.predict(x)[k])
}

pub(crate) fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^eta) without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Softmax over (0, eta_1, .., eta_{K-1}).
fn softmax_with_baseline(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().copied().fold(0.0_f64, f64::max);
    let mut p: Vec<f64> = std::iter::once(0.0)
        .chain(eta.iter().copied())
        .map(|e| (e - m).exp())
        .collect();
    let z: f64 = p.iter().sum();
    p.iter_mut().for_each(|v| *v /= z);
    p
}

fn log_sum_exp_with_baseline(eta: &[f64]) -> f64 {
    let m = eta.iter().copied().fold(0.0_f64, f64::max);
    m + ((-m).exp() + eta.iter().map(|e| (e - m).exp()).sum::<f64>()).ln()
}

/// Bernoulli log-likelihood of a logit with coefficients `beta`.
pub fn binary_log_likelihood(x: &DMatrix<f64>, t: &[bool], beta: &[f64]) -> f64 {
    let eta = x * DVector::from_column_slice(beta);
    eta.iter()
        .zip(t)
        .map(|(&e, &y)| if y { e - softplus(e) } else { -softplus(e) })
        .sum()
}

/// Gradient of `binary_log_likelihood` with respect to `beta`.
pub fn binary_gradient(x: &DMatrix<f64>, t: &[bool], beta: &[f64]) -> Vec<f64> {
    let eta = x * DVector::from_column_slice(beta);
    let resid = DVector::from_iterator(
        t.len(),
        eta.iter()
            .zip(t)
            .map(|(&e, &y)| f64::from(u8::from(y)) - sigmoid(e)),
    );
    (x.transpose() * resid).iter().copied().collect()
}

/// Categorical log-likelihood. `labels` index classes `0..k` with 0 the
/// baseline; `theta` stacks the `k - 1` non-baseline coefficient vectors.
pub fn multinomial_log_likelihood(
    x: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    theta: &[f64],
) -> f64 {
    let eta = linear_predictors(x, k, theta);
    (0..x.nrows())
        .map(|i| {
            let row: Vec<f64> = eta.row(i).iter().copied().collect();
            let own = if labels[i] == 0 {
                0.0
            } else {
                row[labels[i] - 1]
            };
            own - log_sum_exp_with_baseline(&row)
        })
        .sum()
}

/// Gradient of `multinomial_log_likelihood`, stacked like `theta`.
pub fn multinomial_gradient(
    x: &DMatrix<f64>,
    labels: &[usize],
    k: usize,
    theta: &[f64],
) -> Vec<f64> {
    let probs = class_probabilities(x, k, theta);
    let resid = DMatrix::from_fn(x.nrows(), k - 1, |i, c| {
        f64::from(u8::from(labels[i] == c + 1)) - probs[(i, c + 1)]
    });
    let g = x.transpose() * resid;
    // column-major p x (k-1) is exactly the class-stacked layout
    g.as_slice().to_vec()
}

fn linear_predictors(x: &DMatrix<f64>, k: usize, theta: &[f64]) -> DMatrix<f64> {
    let b = DMatrix::from_column_slice(x.ncols(), k - 1, theta);
    x * b
}

/// n x k matrix of class probabilities, baseline in column 0.
fn class_probabilities(x: &DMatrix<f64>, k: usize, theta: &[f64]) -> DMatrix<f64> {
    let eta = linear_predictors(x, k, theta);
    let mut p = DMatrix::zeros(x.nrows(), k);
    for i in 0..x.nrows() {
        let row: Vec<f64> = eta.row(i).iter().copied().collect();
        for (c, v) in softmax_with_baseline(&row).into_iter().enumerate() {
            p[(i, c)] = v;
        }
    }
    p
}

/// Column standardisation applied before fitting.
struct Standardized {
    x: DMatrix<f64>,
    /// Original column index of each standardised column.
    active: Vec<usize>,
    center: Vec<f64>,
    scale: Vec<f64>,
    intercept: Option<usize>,
    dropped: Vec<usize>,
}

impl Standardized {
    fn new(x: &DMatrix<f64>) -> Standardized {
        let n = x.nrows() as f64;
        let intercept = (0..x.ncols()).find(|&j| x.column(j).iter().all(|&v| v == 1.0));
        let mut active = Vec::new();
        let mut center = Vec::new();
        let mut scale = Vec::new();
        let mut dropped = Vec::new();
        for j in 0..x.ncols() {
            let col = x.column(j);
            if Some(j) == intercept {
                active.push(j);
                center.push(0.0);
                scale.push(1.0);
                continue;
            }
            let mean = col.sum() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            if var <= f64::EPSILON * mean.abs().max(1.0).powi(2) {
                dropped.push(j);
                continue;
            }
            let (c, s) = if intercept.is_some() {
                (mean, var.sqrt())
            } else {
                (0.0, (col.iter().map(|v| v * v).sum::<f64>() / n).sqrt())
            };
            active.push(j);
            center.push(c);
            scale.push(s);
        }
        let xs = DMatrix::from_fn(x.nrows(), active.len(), |i, a| {
            (x[(i, active[a])] - center[a]) / scale[a]
        });
        Standardized {
            x: xs,
            active,
            center,
            scale,
            intercept,
            dropped,
        }
    }

    fn intercept_position(&self) -> Option<usize> {
        self.intercept
            .and_then(|j| self.active.iter().position(|&a| a == j))
    }

    /// Maps standardised coefficients back to the original columns.
    fn unscale(&self, beta: &[f64], ncols: usize) -> Vec<f64> {
        let mut out = vec![0.0; ncols];
        let mut shift = 0.0;
        for (a, &j) in self.active.iter().enumerate() {
            if Some(j) == self.intercept {
                continue;
            }
            out[j] = beta[a] / self.scale[a];
            shift += beta[a] * self.center[a] / self.scale[a];
        }
        if let Some(pos) = self.intercept_position() {
            out[self.active[pos]] = beta[pos] - shift;
        }
        out
    }
}

fn column_names(ncols: usize) -> Vec<String> {
    if ncols == DESIGN_COLUMNS.len() {
        DESIGN_COLUMNS.iter().map(|s| s.to_string()).collect()
    } else {
        (0..ncols).map(|j| format!("x{j}")).collect()
    }
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn scaled_rows(x: &DMatrix<f64>, w: &[f64]) -> DMatrix<f64> {
    let mut out = x.clone();
    for (i, &wi) in w.iter().enumerate() {
        out.row_mut(i).scale_mut(wi);
    }
    out
}

struct Outcome {
    beta: Vec<f64>,
    log_likelihood: f64,
    path: Vec<f64>,
    converged: bool,
    iterations: usize,
    residual: f64,
}

/// Shared Newton loop with step halving. `eval` returns (log-likelihood,
/// gradient, negative Hessian); `probe` returns only the log-likelihood.
fn newton<E, P>(mut theta: Vec<f64>, eval: E, probe: P) -> Result<Outcome>
where
    E: Fn(&[f64]) -> (f64, Vec<f64>, DMatrix<f64>, bool),
    P: Fn(&[f64]) -> f64,
{
    let (mut ll, mut grad, mut info, mut extreme) = eval(&theta);
    let mut path = vec![ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        let Some(chol) = info.clone().cholesky() else {
            return Err(if extreme {
                Error::Separation("fitted probabilities reached 0 or 1".into())
            } else {
                Error::Singular
            });
        };
        let delta = chol.solve(&DVector::from_vec(grad.clone()));
        // Under separation the gradient vanishes while the Newton step does
        // not, so convergence is judged on the full step.
        if max_abs(delta.iter().copied()) < TOLERANCE {
            converged = true;
            break;
        }
        iterations += 1;
        let mut step = 1.0;
        let mut candidate: Vec<f64>;
        let mut halvings = 0;
        loop {
            candidate = theta
                .iter()
                .zip(delta.iter())
                .map(|(t, d)| t + step * d)
                .collect();
            let ll_new = probe(&candidate);
            if ll_new >= ll || halvings == MAX_HALVINGS {
                break;
            }
            step *= 0.5;
            halvings += 1;
        }
        let moved = max_abs(delta.iter().map(|d| step * d));
        theta = candidate;
        if max_abs(theta.iter().copied()) > SEPARATION_BOUND {
            return Err(Error::Separation(format!(
                "a standardised coefficient exceeded {SEPARATION_BOUND} at iteration {iterations}"
            )));
        }
        (ll, grad, info, extreme) = eval(&theta);
        path.push(ll);
        if moved < TOLERANCE {
            converged = true;
            break;
        }
    }
    let residual = max_abs(grad.iter().copied());
    Ok(Outcome {
        beta: theta,
        log_likelihood: ll,
        path,
        converged,
        iterations,
        residual,
    })
}

fn is_extreme(p: f64) -> bool {
    !(1e-12..=1.0 - 1e-12).contains(&p)
}

/// Binary logit by iteratively reweighted least squares.
///
/// Each iteration solves the weighted normal equations
/// `(X'WX) delta = X'(t - mu)` with `W = mu(1 - mu)`.
pub fn fit_binary_logit(x: &DesignMatrix, t: &[bool]) -> Result<PropensityModel> {
    let n = t.len();
    if n != x.nrows() {
        return Err(Error::Estimation(format!(
            "design has {} rows but treatment vector has {n}",
            x.nrows()
        )));
    }
    let ones = t.iter().filter(|&&b| b).count();
    if ones == 0 || ones == n {
        return Err(Error::SingleClass);
    }
    let std = Standardized::new(&x.matrix);
    let xs = &std.x;
    let mut beta0 = vec![0.0; xs.ncols()];
    if let Some(pos) = std.intercept_position() {
        beta0[pos] = logit(ones as f64 / n as f64);
    }
    let y = DVector::from_iterator(n, t.iter().map(|&b| f64::from(u8::from(b))));

    let eval = |beta: &[f64]| {
        let eta = xs * DVector::from_column_slice(beta);
        let mu: Vec<f64> = eta.iter().map(|&e| sigmoid(e)).collect();
        let w: Vec<f64> = mu.iter().map(|m| m * (1.0 - m)).collect();
        let ll = eta
            .iter()
            .zip(t)
            .map(|(&e, &y)| if y { e - softplus(e) } else { -softplus(e) })
            .sum();
        let resid = &y - DVector::from_vec(mu.clone());
        let grad: Vec<f64> = (xs.transpose() * resid).iter().copied().collect();
        let info = xs.transpose() * scaled_rows(xs, &w);
        (ll, grad, info, mu.iter().any(|&m| is_extreme(m)))
    };
    let probe = |beta: &[f64]| binary_log_likelihood(xs, t, beta);
    let out = newton(beta0, eval, probe)?;

    let coefficients = std.unscale(&out.beta, x.ncols());
    let eta = xs * DVector::from_vec(out.beta.clone());
    let scores = eta.iter().map(|&e| sigmoid(e)).collect();
    let columns = column_names(x.ncols());
    Ok(PropensityModel {
        kind: ModelKind::Binary,
        dropped_columns: std.dropped.iter().map(|&j| columns[j].clone()).collect(),
        columns,
        classes: Vec::new(),
        coefficients: vec![coefficients],
        log_likelihood: out.log_likelihood,
        log_likelihood_path: out.path,
        converged: out.converged,
        iterations: out.iterations,
        max_score_residual: out.residual,
        scores: Scores::Binary(scores),
    })
}

/// Multinomial logit by Newton's method on the stacked score and Hessian.
///
/// `NoPolicy` is the baseline class and must be present; one coefficient
/// vector is estimated for every other class that occurs in `cells`.
pub fn fit_multinomial_logit(x: &DesignMatrix, cells: &[TreatmentCell]) -> Result<PropensityModel> {
    let n = cells.len();
    if n != x.nrows() {
        return Err(Error::Estimation(format!(
            "design has {} rows but class vector has {n}",
            x.nrows()
        )));
    }
    let mut counts = [0usize; 8];
    for c in cells {
        counts[c.index()] += 1;
    }
    if counts[TreatmentCell::NoPolicy.index()] == 0 {
        return Err(Error::Estimation(
            "baseline class NoPolicy is absent".into(),
        ));
    }
    let classes: Vec<TreatmentCell> = TreatmentCell::ALL
        .into_iter()
        .filter(|c| counts[c.index()] > 0)
        .collect();
    if classes.len() < 2 {
        return Err(Error::SingleClass);
    }
    if let Some(sparse) = classes.iter().find(|c| counts[c.index()] < 2) {
        return Err(Error::SparseClass(sparse.to_string()));
    }
    let k = classes.len();
    let mut label_of = [0usize; 8];
    for (i, c) in classes.iter().enumerate() {
        label_of[c.index()] = i;
    }
    let labels: Vec<usize> = cells.iter().map(|c| label_of[c.index()]).collect();

    let std = Standardized::new(&x.matrix);
    let xs = &std.x;
    let q = xs.ncols();
    let mut theta0 = vec![0.0; q * (k - 1)];
    if let Some(pos) = std.intercept_position() {
        let base = counts[TreatmentCell::NoPolicy.index()] as f64;
        for (c, cell) in classes.iter().enumerate().skip(1) {
            theta0[(c - 1) * q + pos] = (counts[cell.index()] as f64 / base).ln();
        }
    }

    let eval = |theta: &[f64]| {
        let probs = class_probabilities(xs, k, theta);
        let ll = multinomial_log_likelihood(xs, &labels, k, theta);
        let resid = DMatrix::from_fn(n, k - 1, |i, c| {
            f64::from(u8::from(labels[i] == c + 1)) - probs[(i, c + 1)]
        });
        let grad = (xs.transpose() * resid).as_slice().to_vec();
        let mut info = DMatrix::zeros(q * (k - 1), q * (k - 1));
        for a in 0..k - 1 {
            for b in a..k - 1 {
                let w: Vec<f64> = (0..n)
                    .map(|i| {
                        let pa = probs[(i, a + 1)];
                        if a == b {
                            pa * (1.0 - pa)
                        } else {
                            -pa * probs[(i, b + 1)]
                        }
                    })
                    .collect();
                let block = xs.transpose() * scaled_rows(xs, &w);
                info.view_mut((a * q, b * q), (q, q)).copy_from(&block);
                if a != b {
                    info.view_mut((b * q, a * q), (q, q))
                        .copy_from(&block.transpose());
                }
            }
        }
        (ll, grad, info, probs.iter().any(|&p| is_extreme(p)))
    };
    let probe = |theta: &[f64]| multinomial_log_likelihood(xs, &labels, k, theta);
    let out = newton(theta0, eval, probe)?;

    let coefficients: Vec<Vec<f64>> = out
        .beta
        .chunks(q)
        .map(|b| std.unscale(b, x.ncols()))
        .collect();
    let probs = class_probabilities(xs, k, &out.beta);
    let scores = (0..n)
        .map(|i| probs.row(i).iter().copied().collect())
        .collect();
    let columns = column_names(x.ncols());
    Ok(PropensityModel {
        kind: ModelKind::Multinomial,
        dropped_columns: std.dropped.iter().map(|&j| columns[j].clone()).collect(),
        columns,
        classes,
        coefficients,
        log_likelihood: out.log_likelihood,
        log_likelihood_path: out.path,
        converged: out.converged,
        iterations: out.iterations,
        max_score_residual: out.residual,
        scores: Scores::Multinomial(scores),
    })
}
