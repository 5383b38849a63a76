//! Interval-censored survival primitives: observation and dataset types, the
//! step cumulative hazard, the Gompertz baseline, the proportional-hazards
//! survival map and the interval-censored log-likelihood.
//!
//! All functions here are pure over immutable inputs and safe to call from
//! multiple threads.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Floor applied to probabilities before taking logs. Samples whose
/// probability hits the floor are flagged, not turned into hard `-inf`,
/// which keeps line searches finite.
pub(crate) const PROB_FLOOR: f64 = 1e-300;

/// How a subject's event time relates to its examination interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Censoring {
    /// Event at or before the first examination: `T <= u`.
    Left,
    /// Event strictly inside the interval: `u < T <= v`.
    Interval,
    /// Event after the last examination: `T > v`.
    Right,
}

/// One subject: examination interval `(u, v]`, censoring indicators and
/// covariates. Exactly one of `delta1`, `delta2`, `delta3 = 1 - delta1 -
/// delta2` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSample {
    u: f64,
    v: f64,
    delta1: bool,
    delta2: bool,
    z: Vec<f64>,
}

impl IntervalSample {
    pub fn new(u: f64, v: f64, delta1: bool, delta2: bool, z: Vec<f64>) -> Result<Self> {
        if !u.is_finite() || !v.is_finite() || u < 0.0 || v < 0.0 {
            return Err(Error::InvalidInput(format!(
                "interval bounds must be finite and nonnegative, got ({u}, {v})"
            )));
        }
        if u > v {
            return Err(Error::InvalidInput(format!(
                "interval bounds must satisfy u <= v, got ({u}, {v})"
            )));
        }
        if delta1 && delta2 {
            return Err(Error::InvalidInput(
                "at most one of delta1, delta2 may be set".into(),
            ));
        }
        if delta2 && u == v {
            return Err(Error::InvalidInput(
                "delta2 samples need a nondegenerate interval u < v".into(),
            ));
        }
        if z.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidInput("covariates must be finite".into()));
        }
        Ok(Self {
            u,
            v,
            delta1,
            delta2,
            z,
        })
    }

    pub fn u(&self) -> f64 {
        self.u
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn delta1(&self) -> bool {
        self.delta1
    }

    pub fn delta2(&self) -> bool {
        self.delta2
    }

    pub fn delta3(&self) -> bool {
        !self.delta1 && !self.delta2
    }

    pub fn censoring(&self) -> Censoring {
        if self.delta1 {
            Censoring::Left
        } else if self.delta2 {
            Censoring::Interval
        } else {
            Censoring::Right
        }
    }

    pub fn covariates(&self) -> &[f64] {
        &self.z
    }
}

/// An i.i.d. sample of interval-censored observations sharing one covariate
/// dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    samples: Vec<IntervalSample>,
    d: usize,
}

impl Dataset {
    pub fn new(samples: Vec<IntervalSample>) -> Result<Self> {
        let Some(first) = samples.first() else {
            return Err(Error::InvalidInput("dataset must contain a sample".into()));
        };
        let d = first.z.len();
        if d == 0 {
            return Err(Error::InvalidInput(
                "samples must carry at least one covariate".into(),
            ));
        }
        if let Some(i) = samples.iter().position(|s| s.z.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "sample {i} has {} covariates, expected {d}",
                samples[i].z.len()
            )));
        }
        Ok(Self { samples, d })
    }

    pub fn n(&self) -> usize {
        self.samples.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn samples(&self) -> &[IntervalSample] {
        &self.samples
    }

    /// A new dataset holding the samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        let samples = indices
            .iter()
            .map(|&i| {
                self.samples
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidInput(format!("sample index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }
}

/// Nondecreasing right-continuous step function; zero before the first jump
/// time. Represents a cumulative hazard supported on examination times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepCumulativeHazard {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl StepCumulativeHazard {
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
                "jump times must be finite and strictly increasing".into(),
            ));
        }
        if values.first().is_some_and(|&v| v < 0.0)
            || values.iter().any(|v| !v.is_finite())
            || values.windows(2).any(|w| w[0] > w[1])
        {
            return Err(Error::InvalidInput(
                "step values must be finite, nonnegative and nondecreasing".into(),
            ));
        }
        Ok(Self { times, values })
    }

    /// The empty step function, identically zero.
    pub fn empty() -> Self {
        Self {
            times: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Right-continuous evaluation at `t >= 0`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!(
                "cumulative hazard evaluated at t = {t} < 0"
            )));
        }
        let idx = self.times.partition_point(|&x| x <= t);
        Ok(if idx == 0 { 0.0 } else { self.values[idx - 1] })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Gompertz baseline with hazard `scale * exp(shape * t)` and cumulative
/// hazard `(scale/shape) * (exp(shape*t) - 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GompertzBaseline {
    shape: f64,
    scale: f64,
}

impl GompertzBaseline {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "Gompertz parameters must be positive and finite, got shape={shape}, scale={scale}"
            )));
        }
        Ok(Self { shape, scale })
    }

    pub fn shape(&self) -> f64 {
        self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Cumulative hazard at `t >= 0`.
    pub fn cumhaz(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!(
                "cumulative hazard evaluated at t = {t} < 0"
            )));
        }
        Ok(self.scale / self.shape * (self.shape * t).exp_m1())
    }
}

/// Proportional-hazards survival probability `exp(-cumhaz * exp(risk))`.
pub fn survival(cumhaz_at_t: f64, risk: f64) -> Result<f64> {
    if !(cumhaz_at_t >= 0.0) {
        return Err(Error::Domain(format!(
            "cumulative hazard must be nonnegative, got {cumhaz_at_t}"
        )));
    }
    if !risk.is_finite() {
        return Err(Error::Domain(format!("risk must be finite, got {risk}")));
    }
    Ok((-cumhaz_at_t * risk.exp()).exp())
}

/// Log-likelihood value together with the number of samples whose
/// probability had to be floored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLik {
    pub value: f64,
    pub floored: usize,
}

/// One sample's log-likelihood term. `cu`/`cv` are the cumulative hazard at
/// the sample's `u`/`v`. Returns `(term, floored)`.
///
/// The interval term is computed as `-cu*e^r + log1p(-exp(-(cv-cu)*e^r))`,
/// which avoids the cancellation in `exp(-cu*e^r) - exp(-cv*e^r)` when the
/// hazard gap is small.
pub(crate) fn sample_term(delta1: bool, delta2: bool, cu: f64, cv: f64, risk: f64) -> (f64, bool) {
    let a = risk.exp();
    if delta1 {
        let p = -(-cu * a).exp_m1();
        if p < PROB_FLOOR {
            (PROB_FLOOR.ln(), true)
        } else {
            (p.ln(), false)
        }
    } else if delta2 {
        let s = cu * a;
        let q = -(-(cv - cu) * a).exp_m1();
        if q < PROB_FLOOR {
            (-s + PROB_FLOOR.ln(), true)
        } else {
            (-s + q.ln(), false)
        }
    } else {
        (-cv * a, false)
    }
}

/// One sample's term and its derivative with respect to the risk score.
/// Floored samples are treated as locally constant (zero derivative).
pub(crate) fn sample_term_and_drisk(
    delta1: bool,
    delta2: bool,
    cu: f64,
    cv: f64,
    risk: f64,
) -> (f64, f64, bool) {
    let a = risk.exp();
    if delta1 {
        let s = cu * a;
        let p = -(-s).exp_m1();
        if p < PROB_FLOOR {
            (PROB_FLOOR.ln(), 0.0, true)
        } else {
            // d/dr log(1 - e^{-s}) = s e^{-s} / (1 - e^{-s}) = s / expm1(s)
            (p.ln(), s / s.exp_m1(), false)
        }
    } else if delta2 {
        let s = cu * a;
        let t = cv * a;
        let g = t - s;
        let q = -(-g).exp_m1();
        if q < PROB_FLOOR {
            (-s + PROB_FLOOR.ln(), 0.0, true)
        } else {
            // d/dr log(e^{-s} - e^{-t}) = (-s e^{-s} + t e^{-t}) / (e^{-s} - e^{-t})
            //                           = (g + t expm1(-g)) / q
            let num = g + t * (-g).exp_m1();
            (-s + q.ln(), num / q, false)
        }
    } else {
        let t = cv * a;
        (-t, -t, false)
    }
}

fn validate_loglik_inputs(
    data: &Dataset,
    risks: &[f64],
    cumhaz_u: &[f64],
    cumhaz_v: &[f64],
) -> Result<()> {
    let n = data.n();
    if risks.len() != n || cumhaz_u.len() != n || cumhaz_v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {n} samples; got {} risks, {} hazard-at-u, {} hazard-at-v",
            risks.len(),
            cumhaz_u.len(),
            cumhaz_v.len()
        )));
    }
    for (i, s) in data.samples().iter().enumerate() {
        if !risks[i].is_finite() {
            return Err(Error::Domain(format!("risk for sample {i} is not finite")));
        }
        let needs_u = s.delta1() || s.delta2();
        let needs_v = s.delta2() || s.delta3();
        if needs_u && !(cumhaz_u[i] >= 0.0 && cumhaz_u[i].is_finite()) {
            return Err(Error::Domain(format!(
                "cumulative hazard at u for sample {i} must be finite and nonnegative"
            )));
        }
        if needs_v && !(cumhaz_v[i] >= 0.0 && cumhaz_v[i].is_finite()) {
            return Err(Error::Domain(format!(
                "cumulative hazard at v for sample {i} must be finite and nonnegative"
            )));
        }
        if s.delta2() && cumhaz_u[i] > cumhaz_v[i] {
            return Err(Error::Domain(format!(
                "sample {i} is interval-censored but hazard at u exceeds hazard at v"
            )));
        }
    }
    Ok(())
}

/// Interval-censored log-likelihood at fixed per-sample cumulative hazards.
///
/// `cumhaz_u[i]`/`cumhaz_v[i]` hold the cumulative hazard at `u_i`/`v_i`;
/// entries that a sample's censoring type does not use are ignored.
pub fn loglik(
    data: &Dataset,
    risks: &[f64],
    cumhaz_u: &[f64],
    cumhaz_v: &[f64],
) -> Result<LogLik> {
    validate_loglik_inputs(data, risks, cumhaz_u, cumhaz_v)?;
    let samples = data.samples();
    let terms = par::map_indices(data.n(), |i| {
        let s = &samples[i];
        sample_term(s.delta1(), s.delta2(), cumhaz_u[i], cumhaz_v[i], risks[i])
    });
    let values: Vec<f64> = terms.iter().map(|(t, _)| *t).collect();
    let floored = terms.iter().filter(|(_, f)| *f).count();
    Ok(LogLik {
        value: par::pairwise_sum(&values),
        floored,
    })
}

/// Per-feature affine transform mapping covariates to mean 0, sd 1.
/// Constant columns keep their (zero) spread: the scale divisor falls back
/// to 1 so the column is only centered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    means: Vec<f64>,
    sds: Vec<f64>,
}

impl Standardizer {
    /// Identity transform for `d` features.
    pub fn identity(d: usize) -> Self {
        Self {
            means: vec![0.0; d],
            sds: vec![1.0; d],
        }
    }

    /// Estimate per-column mean and (population) standard deviation.
    pub fn fit(data: &Dataset) -> Self {
        let n = data.n() as f64;
        let d = data.d();
        let mut means = vec![0.0; d];
        for s in data.samples() {
            for (m, z) in means.iter_mut().zip(s.covariates()) {
                *m += z;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut vars = vec![0.0; d];
        for s in data.samples() {
            for ((v, z), m) in vars.iter_mut().zip(s.covariates()).zip(&means) {
                *v += (z - m) * (z - m);
            }
        }
        let sds = vars
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 0.0 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { means, sds }
    }

    pub fn d(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn sds(&self) -> &[f64] {
        &self.sds
    }

    pub fn from_parts(means: Vec<f64>, sds: Vec<f64>) -> Result<Self> {
        if means.len() != sds.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} means vs {} sds",
                means.len(),
                sds.len()
            )));
        }
        if sds.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(Error::InvalidInput("scale divisors must be positive".into()));
        }
        Ok(Self { means, sds })
    }

    pub fn transform(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.means.len() {
            return Err(Error::DimensionMismatch(format!(
                "covariate vector has length {}, expected {}",
                z.len(),
                self.means.len()
            )));
        }
        Ok(z.iter()
            .zip(&self.means)
            .zip(&self.sds)
            .map(|((z, m), s)| (z - m) / s)
            .collect())
    }

    /// Standardize every sample's covariates; times and indicators unchanged.
    pub fn transform_dataset(&self, data: &Dataset) -> Result<Dataset> {
        let samples = data
            .samples()
            .iter()
            .map(|s| {
                IntervalSample::new(
                    s.u(),
                    s.v(),
                    s.delta1(),
                    s.delta2(),
                    self.transform(s.covariates())?,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(samples)
    }
}
