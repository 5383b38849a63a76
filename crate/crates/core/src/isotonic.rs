//! Profile-likelihood maximization over the baseline cumulative hazard at
//! fixed risk scores: weighted isotonic regression (pool-adjacent-violators)
//! and a modified iterative-convex-minorant ascent with line search.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;
use crate::survival::{loglik, Censoring, Dataset, StepCumulativeHazard};

/// Curvature entries are floored at this value so Newton targets stay finite.
const CURV_FLOOR: f64 = 1e-8;
/// Magnitude cap for gradient/curvature entries that overflow.
const DERIV_CAP: f64 = 1e300;

/// Weighted isotonic regression: the unique minimizer over nondecreasing `x`
/// of `sum_i w_i (x_i - y_i)^2`, by stack-based pooling of adjacent
/// violators. Each output value is the weighted mean of its pooled block.
pub fn weighted_pava(y: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if y.is_empty() {
        return Err(Error::InvalidInput("isotonic regression of empty input".into()));
    }
    if y.len() != w.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} weights",
            y.len(),
            w.len()
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("isotonic regression needs finite values".into()));
    }
    if w.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
        return Err(Error::InvalidInput("isotonic weights must be positive and finite".into()));
    }

    // Blocks of pooled indices: (weight sum, weighted mean, length).
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(y.len());
    for (&yi, &wi) in y.iter().zip(w) {
        blocks.push((wi, yi, 1));
        while blocks.len() >= 2 {
            let (w2, m2, l2) = blocks[blocks.len() - 1];
            let (w1, m1, l1) = blocks[blocks.len() - 2];
            if m1 <= m2 {
                break;
            }
            blocks.truncate(blocks.len() - 2);
            let w = w1 + w2;
            blocks.push((w, (w1 * m1 + w2 * m2) / w, l1 + l2));
        }
    }
    let mut out = Vec::with_capacity(y.len());
    for (_, mean, len) in blocks {
        out.extend(std::iter::repeat_n(mean, len));
    }
    Ok(out)
}

/// The distinct examination times carrying likelihood terms, with per-sample
/// indices into them. `u` indices exist for left- and interval-censored
/// samples, `v` indices for interval- and right-censored samples.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    points: Vec<f64>,
    u_idx: Vec<Option<usize>>,
    v_idx: Vec<Option<usize>>,
}

impl TimeGrid {
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn u_index(&self, sample: usize) -> Option<usize> {
        self.u_idx[sample]
    }

    pub fn v_index(&self, sample: usize) -> Option<usize> {
        self.v_idx[sample]
    }

    /// Expand grid values into per-sample cumulative hazards at `u` and `v`.
    /// Entries a sample's censoring type does not use are 0.
    pub fn gather(&self, values: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if values.len() != self.points.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} grid values vs {} grid points",
                values.len(),
                self.points.len()
            )));
        }
        let cu = self
            .u_idx
            .iter()
            .map(|i| i.map_or(0.0, |i| values[i]))
            .collect();
        let cv = self
            .v_idx
            .iter()
            .map(|i| i.map_or(0.0, |i| values[i]))
            .collect();
        Ok((cu, cv))
    }
}

/// Collect the distinct times at which the likelihood references the
/// cumulative hazard, sorted with exact-equality merging.
pub fn build_time_grid(data: &Dataset) -> TimeGrid {
    let mut times: Vec<f64> = Vec::with_capacity(2 * data.n());
    for s in data.samples() {
        match s.censoring() {
            Censoring::Left => times.push(s.u()),
            Censoring::Interval => {
                times.push(s.u());
                times.push(s.v());
            }
            Censoring::Right => times.push(s.v()),
        }
    }
    times.sort_by(|a, b| a.partial_cmp(b).expect("sample times are finite"));
    times.dedup();
    let locate = |t: f64| -> usize {
        times
            .binary_search_by(|x| x.partial_cmp(&t).expect("finite"))
            .expect("time was inserted during construction")
    };
    let mut u_idx = Vec::with_capacity(data.n());
    let mut v_idx = Vec::with_capacity(data.n());
    for s in data.samples() {
        match s.censoring() {
            Censoring::Left => {
                u_idx.push(Some(locate(s.u())));
                v_idx.push(None);
            }
            Censoring::Interval => {
                u_idx.push(Some(locate(s.u())));
                v_idx.push(Some(locate(s.v())));
            }
            Censoring::Right => {
                u_idx.push(None);
                v_idx.push(Some(locate(s.v())));
            }
        }
    }
    TimeGrid {
        points: times,
        u_idx,
        v_idx,
    }
}

/// Solver knobs for the iterative-convex-minorant ascent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcmConfig {
    /// Stop when the relative log-likelihood improvement falls below this.
    pub tol: f64,
    /// Maximum accepted ascent steps.
    pub max_iter: usize,
    /// Maximum step halvings per line search.
    pub max_halvings: usize,
    /// Grid values are clamped to this ceiling; hitting it flags `boundary`.
    pub value_cap: f64,
}

impl Default for IcmConfig {
    fn default() -> Self {
        Self {
            tol: 1e-7,
            max_iter: 500,
            max_halvings: 30,
            value_cap: 1e8,
        }
    }
}

impl IcmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidInput(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidInput("max_iter must be at least 1".into()));
        }
        if !(self.value_cap > 0.0 && self.value_cap.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "value_cap must be positive and finite, got {}",
                self.value_cap
            )));
        }
        Ok(())
    }
}

/// Result of one profile maximization.
#[derive(Debug, Clone, PartialEq)]
pub struct IcmFit {
    /// The profiled baseline cumulative hazard on the data's time grid.
    pub hazard: StepCumulativeHazard,
    /// Log-likelihood at the returned hazard.
    pub loglik: f64,
    /// Samples whose probability was floored at the returned hazard.
    pub floored: usize,
    /// Accepted ascent steps.
    pub iterations: usize,
    /// True when some grid value sits at `value_cap`: the likelihood has no
    /// finite maximizer in that direction (e.g. purely left-censored
    /// configurations) and the value is reported at the cap.
    pub boundary: bool,
    /// Log-likelihood at the start and after each accepted step;
    /// nondecreasing by construction of the line search.
    pub trace: Vec<f64>,
}

fn cap_deriv(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-DERIV_CAP, DERIV_CAP)
    }
}

fn grad_curv_inner(
    data: &Dataset,
    risks: &[f64],
    grid: &TimeGrid,
    values: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    // Per-sample contributions to up to two grid slots, gathered in parallel
    // and scattered in sample order so the reduction is deterministic.
    const NONE: (usize, f64, f64) = (usize::MAX, 0.0, 0.0);
    let samples = data.samples();
    let contribs = par::map_indices(data.n(), |i| {
        let s = &samples[i];
        let a = risks[i].exp();
        match s.censoring() {
            Censoring::Left => {
                let u = grid.u_idx[i].expect("left-censored sample has a u slot");
                let su = a * values[u];
                // d/dx log(1 - e^{-ax}) = a / expm1(ax);
                // -d2/dx2 = a^2 e^{-ax} / (1 - e^{-ax})^2
                let p = -(-su).exp_m1();
                let g = a / su.exp_m1();
                let c = a * a * (-su).exp() / (p * p);
                [(u, cap_deriv(g), cap_deriv(c)), NONE]
            }
            Censoring::Interval => {
                let u = grid.u_idx[i].expect("interval-censored sample has a u slot");
                let v = grid.v_idx[i].expect("interval-censored sample has a v slot");
                let gap = a * (values[v] - values[u]);
                // With q = 1 - e^{-gap}, the e^{-a x_u} factors cancel:
                // d/dx_u log(e^{-a x_u} - e^{-a x_v}) = -a / q
                // d/dx_v ...                          =  a e^{-gap} / q
                // minus the second derivatives, both:    a^2 e^{-gap} / q^2
                let q = -(-gap).exp_m1();
                let eg = (-gap).exp();
                let gu = -a / q;
                let gv = a * eg / q;
                let c = a * a * eg / (q * q);
                [(u, cap_deriv(gu), cap_deriv(c)), (v, cap_deriv(gv), cap_deriv(c))]
            }
            Censoring::Right => {
                let v = grid.v_idx[i].expect("right-censored sample has a v slot");
                [(v, -a, 0.0), NONE]
            }
        }
    });
    let g_count = grid.len();
    let mut grad = vec![0.0; g_count];
    let mut curv = vec![0.0; g_count];
    for pair in &contribs {
        for &(slot, g, c) in pair {
            if slot != usize::MAX {
                grad[slot] += g;
                curv[slot] += c;
            }
        }
    }
    for g in &mut grad {
        *g = cap_deriv(*g);
    }
    for c in &mut curv {
        *c = if c.is_finite() {
            c.max(CURV_FLOOR)
        } else {
            DERIV_CAP
        };
    }
    (grad, curv)
}

/// Gradient and (floored, positive) diagonal curvature of the log-likelihood
/// with respect to the grid values of the cumulative hazard. The grid is the
/// one `build_time_grid` yields for `data`; `values` must align with it.
pub fn grad_and_curv_lambda(
    data: &Dataset,
    risks: &[f64],
    values: &[f64],
) -> Result<(Vec<f64>, Vec<f64>)> {
    if risks.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} risks vs {} samples",
            risks.len(),
            data.n()
        )));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("risks must be finite".into()));
    }
    let grid = build_time_grid(data);
    if values.len() != grid.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} grid points",
            values.len(),
            grid.len()
        )));
    }
    Ok(grad_curv_inner(data, risks, &grid, values))
}

fn loglik_on_grid(data: &Dataset, risks: &[f64], grid: &TimeGrid, values: &[f64]) -> Result<crate::survival::LogLik> {
    let (cu, cv) = grid.gather(values)?;
    loglik(data, risks, &cu, &cv)
}

/// Indices `k..` of the longest grid suffix whose values the likelihood
/// drives to infinity: no right-censored sample and no interval-censored
/// sample's *lower* endpoint references any slot in the suffix, so every
/// term involving those slots increases without bound (or saturates) as the
/// values grow. Such slots are pinned at `value_cap` and flagged.
fn divergent_suffix_start(data: &Dataset, grid: &TimeGrid) -> usize {
    let mut anchored = vec![false; grid.len()];
    for (i, s) in data.samples().iter().enumerate() {
        match s.censoring() {
            Censoring::Left => {}
            Censoring::Interval => {
                anchored[grid.u_idx[i].expect("u slot")] = true;
            }
            Censoring::Right => {
                anchored[grid.v_idx[i].expect("v slot")] = true;
            }
        }
    }
    let mut k = grid.len();
    while k > 0 && !anchored[k - 1] {
        k -= 1;
    }
    k
}

/// Maximize the interval-censored log-likelihood over nondecreasing,
/// nonnegative grid values of the cumulative hazard at fixed risk scores.
///
/// Each step forms the Newton target `x + g/c` (gradient over floored
/// curvature), projects it onto the monotone cone by [`weighted_pava`] with
/// the curvatures as weights, clamps to `[0, value_cap]`, and backtracks
/// between the current iterate and the projected target until the
/// log-likelihood improves. Accepted steps therefore never decrease it.
///
/// `init`, when given, must be nondecreasing nonnegative values on the
/// data's time grid (as produced by a previous fit on the same data).
pub fn icm_profile(
    data: &Dataset,
    risks: &[f64],
    init: Option<&[f64]>,
    cfg: &IcmConfig,
) -> Result<IcmFit> {
    cfg.validate()?;
    if risks.len() != data.n() {
        return Err(Error::DimensionMismatch(format!(
            "{} risks vs {} samples",
            risks.len(),
            data.n()
        )));
    }
    if risks.iter().any(|r| !r.is_finite()) {
        return Err(Error::Domain("risks must be finite".into()));
    }
    let grid = build_time_grid(data);
    let g_count = grid.len();

    let mut values: Vec<f64> = match init {
        Some(v) => {
            if v.len() != g_count {
                return Err(Error::DimensionMismatch(format!(
                    "init has {} values, grid has {g_count} points",
                    v.len()
                )));
            }
            if v.first().is_some_and(|&x| x < 0.0)
                || v.iter().any(|x| !x.is_finite())
                || v.windows(2).any(|w| w[0] > w[1])
            {
                return Err(Error::InvalidInput(
                    "init values must be finite, nonnegative and nondecreasing".into(),
                ));
            }
            v.iter().map(|x| x.min(cfg.value_cap)).collect()
        }
        // Strictly increasing interior start avoids zero-gradient traps.
        None => (0..g_count)
            .map(|k| (k + 1) as f64 / (g_count + 1) as f64)
            .collect(),
    };

    // Slots the likelihood pushes to infinity are pinned at the cap up
    // front; their gradient vanishes there, so the ascent below leaves them
    // in place.
    let cap_from = divergent_suffix_start(data, &grid);
    let boundary = cap_from < g_count;
    for v in &mut values[cap_from..] {
        *v = cfg.value_cap;
    }

    let mut ll = loglik_on_grid(data, risks, &grid, &values)?;
    let mut trace = vec![ll.value];
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        let (grad, curv) = grad_curv_inner(data, risks, &grid, &values);
        let target: Vec<f64> = values
            .iter()
            .zip(&grad)
            .zip(&curv)
            .map(|((x, g), c)| {
                let y = x + g / c;
                if y.is_nan() {
                    *x
                } else {
                    y.clamp(-DERIV_CAP, DERIV_CAP)
                }
            })
            .collect();
        let projected = weighted_pava(&target, &curv)?;
        let candidate: Vec<f64> = projected
            .iter()
            .map(|x| x.clamp(0.0, cfg.value_cap))
            .collect();

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=cfg.max_halvings {
            let mut trial: Vec<f64> = values
                .iter()
                .zip(&candidate)
                .map(|(x, c)| x + step * (c - x))
                .collect();
            // A convex combination of two nondecreasing vectors is
            // nondecreasing in exact arithmetic, but per-entry rounding can
            // flip adjacent near-equal entries by one ulp; restore order.
            for i in 1..trial.len() {
                if trial[i] < trial[i - 1] {
                    trial[i] = trial[i - 1];
                }
            }
            let trial_ll = loglik_on_grid(data, risks, &grid, &trial)?;
            if trial_ll.value > ll.value {
                accepted = Some((trial, trial_ll));
                break;
            }
            step *= 0.5;
        }
        let Some((next, next_ll)) = accepted else {
            break; // no ascent step found: converged
        };
        let rel = (next_ll.value - ll.value) / (1.0 + ll.value.abs());
        values = next;
        ll = next_ll;
        trace.push(ll.value);
        iterations += 1;
        if rel < cfg.tol {
            break;
        }
    }

    let hazard = StepCumulativeHazard::new(grid.points.clone(), values)?;
    Ok(IcmFit {
        hazard,
        loglik: ll.value,
        floored: ll.floored,
        iterations,
        boundary,
        trace,
    })
}
