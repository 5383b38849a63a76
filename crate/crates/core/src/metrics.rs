//! Evaluation metrics: censoring-distribution Kaplan-Meier, the inverse-
//! probability-of-censoring-weighted time-dependent Brier score and its
//! integral, baseline-hazard recovery error, risk-score correlation and
//! support recovery.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats;
use crate::survival::{Dataset, GompertzBaseline, IntervalSample, StepCumulativeHazard};

/// Denominators below this are treated as vanished weights.
const WEIGHT_FLOOR: f64 = 1e-10;

/// Scoring surrogate for an interval-censored observation: midpoint time and
/// an observed-event flag (`gamma = 0` exactly for right-censored samples).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogatePair {
    pub y: f64,
    pub gamma: bool,
}

impl From<&IntervalSample> for SurrogatePair {
    fn from(s: &IntervalSample) -> Self {
        Self {
            y: 0.5 * (s.u() + s.v()),
            gamma: !s.delta3(),
        }
    }
}

/// Right-continuous nonincreasing step function starting at 1 (a survival
/// curve estimate).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepSurvivalEstimate {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepSurvivalEstimate {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} times vs {} values",
                times.len(),
                values.len()
            )));
        }
        if times.iter().any(|t| !t.is_finite()) || times.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidInput(
                "drop times must be finite and strictly increasing".into(),
            ));
        }
        let monotone = values.windows(2).all(|w| w[0] >= w[1]);
        let in_range = values.iter().all(|v| (0.0..=1.0).contains(v));
        if !monotone || !in_range {
            return Err(Error::InvalidInput(
                "survival values must lie in [0,1] and be nonincreasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    /// The constant-one survival curve.
    pub fn one() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Right-continuous evaluation; 1 before the first drop.
    pub fn eval(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x <= t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }

    /// Left limit at `t` (the value just before `t`).
    pub fn eval_left(&self, t: f64) -> f64 {
        let idx = self.times.partition_point(|&x| x < t);
        if idx == 0 {
            1.0
        } else {
            self.values[idx - 1]
        }
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Kaplan-Meier product-limit estimate of the *censoring* survival: treats
/// `gamma = 0` (right-censored observations) as the event of interest and
/// `gamma = 1` times as censored. Ties at a time keep censored subjects at
/// risk through the event.
pub fn km_censoring(train: &[SurrogatePair]) -> Result<StepSurvivalEstimate> {
    if train.is_empty() {
        return Err(Error::InvalidInput("empty training sample".into()));
    }
    if train.iter().any(|p| !(p.y >= 0.0) || !p.y.is_finite()) {
        return Err(Error::InvalidInput(
            "surrogate times must be finite and nonnegative".into(),
        ));
    }
    let mut order: Vec<usize> = (0..train.len()).collect();
    order.sort_by(|&a, &b| train[a].y.partial_cmp(&train[b].y).expect("finite times"));

    let n = train.len();
    let mut times = Vec::new();
    let mut values = Vec::new();
    let mut surv = 1.0;
    let mut seen = 0usize; // subjects with y strictly before the current time
    let mut i = 0;
    while i < n {
        let t = train[order[i]].y;
        let mut events = 0usize;
        let mut ties = 0usize;
        while i < n && train[order[i]].y == t {
            if !train[order[i]].gamma {
                events += 1;
            }
            ties += 1;
            i += 1;
        }
        let at_risk = n - seen;
        if events > 0 {
            surv *= 1.0 - events as f64 / at_risk as f64;
            times.push(t);
            values.push(surv);
        }
        seen += ties;
    }
    StepSurvivalEstimate::new(times, values)
}

/// Integration weighting for the integrated Brier score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Weighting {
    /// Integrand `t * BS(t) / t2` over `[t1, t2]`.
    Paper,
    /// Plain average: integral of `BS` divided by `t2 - t1`.
    Uniform,
}

/// Integration window and weighting for the integrated Brier score.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrierConfig {
    pub t1: f64,
    pub t2: f64,
    pub weighting: Weighting,
}

impl BrierConfig {
    pub fn new(t1: f64, t2: f64, weighting: Weighting) -> Result<Self> {
        if !(t1 >= 0.0 && t1.is_finite() && t2.is_finite() && t1 < t2) {
            return Err(Error::InvalidInput(format!(
                "need 0 <= t1 < t2, got ({t1}, {t2})"
            )));
        }
        Ok(Self { t1, t2, weighting })
    }
}

/// A time-dependent Brier score value with its exclusion diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrierScore {
    pub value: f64,
    /// Samples excluded because their per-sample censoring weight vanished.
    pub dropped: usize,
}

/// Inverse-probability-of-censoring-weighted Brier score at time `t`:
///
/// `(1/n) sum_i [ 1(Y_i <= t, gamma_i=1) S(t|Z_i)^2 / G(Y_i-)
///              + 1(Y_i > t) (1 - S(t|Z_i))^2 / G(t) ]`
///
/// with `Y, gamma` the surrogate pair of each test sample. Samples whose
/// `G(Y_i-)` weight vanishes are excluded and counted; a vanished `G(t)`
/// with samples still at risk is an error.
pub fn brier_t(
    test: &Dataset,
    surv_at_t: &[f64],
    g: &StepSurvivalEstimate,
    t: f64,
) -> Result<BrierScore> {
    let n = test.n();
    if surv_at_t.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {n} samples",
            surv_at_t.len()
        )));
    }
    if surv_at_t.iter().any(|s| !(0.0..=1.0).contains(s)) {
        return Err(Error::InvalidInput(
            "survival predictions must lie in [0,1]".into(),
        ));
    }
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("Brier score at t = {t} < 0")));
    }
    let g_t = g.eval(t);
    let any_at_risk = test
        .samples()
        .iter()
        .any(|s| SurrogatePair::from(s).y > t);
    if any_at_risk && g_t < WEIGHT_FLOOR {
        return Err(Error::UndefinedMetric(format!(
            "censoring survival vanishes at t = {t} with samples still at risk"
        )));
    }
    let mut total = 0.0;
    let mut dropped = 0usize;
    for (s, pred) in test.samples().iter().zip(surv_at_t) {
        let pair = SurrogatePair::from(s);
        if pair.y <= t && pair.gamma {
            let w = g.eval_left(pair.y);
            if w < WEIGHT_FLOOR {
                dropped += 1;
                continue;
            }
            total += pred * pred / w;
        } else if pair.y > t {
            total += (1.0 - pred) * (1.0 - pred) / g_t;
        }
        // y <= t with gamma = 0 contributes nothing
    }
    Ok(BrierScore {
        value: total / n as f64,
        dropped,
    })
}

/// Integrate a sampled Brier-score curve over `[cfg.t1, cfg.t2]` by the
/// trapezoid rule, clipping the first and last segments to the window by
/// linear interpolation. `ts` must be strictly increasing and cover the
/// window.
pub fn ibs(ts: &[f64], bs: &[f64], cfg: &BrierConfig) -> Result<f64> {
    BrierConfig::new(cfg.t1, cfg.t2, cfg.weighting)?;
    if ts.len() != bs.len() || ts.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need matching grids of at least 2 points, got {} and {}",
            ts.len(),
            bs.len()
        )));
    }
    if ts.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidInput("time grid must be strictly increasing".into()));
    }
    let eps = 1e-9 * (cfg.t2 - cfg.t1).abs().max(1.0);
    if ts[0] > cfg.t1 + eps || *ts.last().unwrap() < cfg.t2 - eps {
        return Err(Error::InvalidInput(format!(
            "grid [{}, {}] does not cover the window [{}, {}]",
            ts[0],
            ts.last().unwrap(),
            cfg.t1,
            cfg.t2
        )));
    }
    let integrand = |t: f64, b: f64| match cfg.weighting {
        Weighting::Paper => t * b / cfg.t2,
        Weighting::Uniform => b,
    };
    // piecewise-linear interpolation of bs between grid points
    let value_at = |t: f64| -> f64 {
        let idx = ts.partition_point(|&x| x <= t).clamp(1, ts.len() - 1);
        let (t0, t1) = (ts[idx - 1], ts[idx]);
        let (b0, b1) = (bs[idx - 1], bs[idx]);
        b0 + (b1 - b0) * (t - t0) / (t1 - t0)
    };
    let lo = cfg.t1.max(ts[0]);
    let hi = cfg.t2.min(*ts.last().unwrap());
    let mut total = 0.0;
    let mut prev_t = lo;
    let mut prev_f = integrand(lo, value_at(lo));
    for (&t, &b) in ts.iter().zip(bs) {
        if t <= lo {
            continue;
        }
        if t >= hi {
            break;
        }
        let f = integrand(t, b);
        total += 0.5 * (prev_f + f) * (t - prev_t);
        prev_t = t;
        prev_f = f;
    }
    let f_hi = integrand(hi, value_at(hi));
    total += 0.5 * (prev_f + f_hi) * (hi - prev_t);
    Ok(match cfg.weighting {
        Weighting::Paper => total,
        Weighting::Uniform => total / (cfg.t2 - cfg.t1),
    })
}

/// L2 distance between an estimated and a true cumulative hazard over
/// `[t_lo, t_hi]`: square root of the trapezoid integral of the squared
/// difference on `grid_n` equally spaced points.
pub fn l2_hazard_error(
    est: &StepCumulativeHazard,
    truth: &GompertzBaseline,
    t_lo: f64,
    t_hi: f64,
    grid_n: usize,
) -> Result<f64> {
    if !(t_lo >= 0.0 && t_lo < t_hi && t_hi.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "need 0 <= t_lo < t_hi, got ({t_lo}, {t_hi})"
        )));
    }
    if grid_n < 2 {
        return Err(Error::InvalidInput("need at least 2 grid points".into()));
    }
    let step = (t_hi - t_lo) / (grid_n - 1) as f64;
    let mut total = 0.0;
    let mut prev = f64::NAN;
    for k in 0..grid_n {
        let t = t_lo + step * k as f64;
        let diff = est.eval(t)? - truth.cumhaz(t)?;
        let sq = diff * diff;
        if k > 0 {
            total += 0.5 * (prev + sq) * step;
        }
        prev = sq;
    }
    Ok(total.sqrt())
}

/// Squared Pearson correlation between predicted and true risk scores.
/// Location/scale-free, matching the fact that proportional-hazards risks
/// are identified only up to an additive constant.
pub fn r2_risk(pred: &[f64], truth_m: &[f64]) -> Result<f64> {
    if pred.len() != truth_m.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} predictions vs {} truths",
            pred.len(),
            truth_m.len()
        )));
    }
    if pred.len() < 2 {
        return Err(Error::UndefinedMetric(
            "risk correlation needs at least two samples".into(),
        ));
    }
    match stats::pearson(pred, truth_m) {
        Some(r) => Ok(r * r),
        None => Err(Error::UndefinedMetric(
            "risk correlation undefined under zero variance".into(),
        )),
    }
}

/// True-positive and true-negative rates of a selected feature set against
/// the true support, over `d` features.
pub fn selection_tp_tn(
    selected: &[usize],
    true_support: &[usize],
    d: usize,
) -> Result<(f64, f64)> {
    use std::collections::BTreeSet;
    let sel: BTreeSet<usize> = selected.iter().copied().collect();
    let tru: BTreeSet<usize> = true_support.iter().copied().collect();
    if sel.iter().chain(tru.iter()).any(|&j| j >= d) {
        return Err(Error::InvalidInput(format!(
            "feature index out of range for d = {d}"
        )));
    }
    if tru.is_empty() {
        return Err(Error::UndefinedMetric(
            "true-positive rate undefined for an empty true support".into(),
        ));
    }
    if tru.len() == d {
        return Err(Error::UndefinedMetric(
            "true-negative rate undefined when every feature is active".into(),
        ));
    }
    let tp = tru.intersection(&sel).count() as f64 / tru.len() as f64;
    let tn = (0..d)
        .filter(|j| !tru.contains(j) && !sel.contains(j))
        .count() as f64
        / (d - tru.len()) as f64;
    Ok((tp, tn))
}
