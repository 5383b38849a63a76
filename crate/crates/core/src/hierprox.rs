//! Hierarchical proximal operator coupling the linear coefficients with the
//! first hidden layer: soft-thresholds each `theta_j` while clipping feature
//! `j`'s outgoing first-layer weights so that `||W_j||_inf <= M * |theta_j|`.
//! A feature whose `theta_j` shrinks to zero therefore leaves the whole
//! network.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::par;

/// Penalty step and hierarchy multiplier for one proximal application.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProxParams {
    /// Effective penalty for this step (learning rate times lambda).
    pub lam_step: f64,
    /// Budget `M` linking first-layer weight magnitudes to `|theta_j|`.
    pub m: f64,
}

impl ProxParams {
    pub fn new(lam_step: f64, m: f64) -> Result<Self> {
        if !(lam_step >= 0.0 && lam_step.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "penalty step must be nonnegative and finite, got {lam_step}"
            )));
        }
        if !(m > 0.0 && m.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "hierarchy multiplier must be positive and finite, got {m}"
            )));
        }
        Ok(Self { lam_step, m })
    }
}

fn sign_or_positive(x: f64) -> f64 {
    // sign(0) is taken as +1 so a zeroed coefficient can re-enter when its
    // first-layer weights carry enough mass.
    if x < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Exact minimizer over `(t, w)` of
/// `0.5 (t - theta_j)^2 + 0.5 ||w - W_j||^2 + lam_step |t|`
/// subject to `||w||_inf <= M |t|`, for a single feature.
///
/// Closed form: with `u_(1) >= ... >= u_(K)` the sorted weight magnitudes
/// and conventions `u_(0) = +inf`, `u_(K+1) = 0`, compute for each `m`
/// `w_m = M/(1 + m M^2) * max(|theta_j| + M * sum_{i<=m} u_(i) - lam_step, 0)`
/// and keep the smallest `m` with `u_(m) >= w_m >= u_(m+1)`; the solution
/// clips weights at `w_m` and sets `t = sign(theta_j) * w_m / M`.
pub(crate) fn prox_feature(theta_j: f64, w_col: &[f64], p: &ProxParams) -> (f64, Vec<f64>) {
    let m_mult = p.m;
    let mut u: Vec<f64> = w_col.iter().map(|w| w.abs()).collect();
    u.sort_by(|a, b| b.partial_cmp(a).expect("finite weights"));
    let k = u.len();

    let mut chosen = None;
    let mut cum = 0.0;
    for m in 0..=k {
        if m > 0 {
            cum += u[m - 1];
        }
        let shifted = (theta_j.abs() + m_mult * cum - p.lam_step).max(0.0);
        let w_m = m_mult / (1.0 + m as f64 * m_mult * m_mult) * shifted;
        let upper = if m == 0 { f64::INFINITY } else { u[m - 1] };
        let lower = if m == k { 0.0 } else { u[m] };
        if upper >= w_m && w_m >= lower {
            chosen = Some(w_m);
            break;
        }
    }
    // The bracketing condition always admits a solution in exact arithmetic;
    // guard against rounding at the brackets by falling back to the last
    // level (clip nothing away beyond the full sum).
    let w_star = chosen.unwrap_or_else(|| {
        let shifted = (theta_j.abs() + m_mult * cum - p.lam_step).max(0.0);
        m_mult / (1.0 + k as f64 * m_mult * m_mult) * shifted
    });

    let theta_new = sign_or_positive(theta_j) * w_star / m_mult;
    // Clip at M * |theta_new| (not at w_star) so the hierarchy constraint
    // holds exactly in floating point even when w_star / M rounds.
    let clip = m_mult * theta_new.abs();
    let w_new = w_col
        .iter()
        .map(|&w| sign_or_positive(w) * clip.min(w.abs()))
        .collect();
    (theta_new, w_new)
}

/// Apply the hierarchical proximal operator feature-by-feature. `w1` has one
/// column per feature (column `j` holds feature `j`'s outgoing first-layer
/// weights). Output always satisfies `||W'_j||_inf <= M |theta'_j|` exactly,
/// and `theta'_j = 0` implies `W'_j = 0`.
pub fn hier_prox(theta: &[f64], w1: &Mat, params: &ProxParams) -> Result<(Vec<f64>, Mat)> {
    if w1.cols() != theta.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} coefficients vs {} weight columns",
            theta.len(),
            w1.cols()
        )));
    }
    if theta.iter().any(|t| !t.is_finite()) || w1.data().iter().any(|w| !w.is_finite()) {
        return Err(Error::InvalidInput(
            "proximal operator requires finite parameters".into(),
        ));
    }
    let cols: Vec<(f64, Vec<f64>)> = par::map_indices(theta.len(), |j| {
        prox_feature(theta[j], &w1.col_copy(j), params)
    });
    let mut theta_new = Vec::with_capacity(theta.len());
    let mut w_new = Mat::zeros(w1.rows(), w1.cols());
    for (j, (t, col)) in cols.iter().enumerate() {
        theta_new.push(*t);
        w_new.set_col(j, col);
    }
    Ok((theta_new, w_new))
}
