//! Model fitting: alternating full-batch proximal-gradient epochs on the
//! residual risk network (under the hierarchical sparsity constraint) with
//! isotonic profile updates of the baseline cumulative hazard, plus the
//! dense-to-sparse warm-started regularization path selected by validation
//! integrated Brier score.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hierprox::{hier_prox, ProxParams};
use crate::isotonic::{build_time_grid, icm_profile, IcmConfig};
use crate::metrics::{
    brier_t, ibs, km_censoring, BrierConfig, StepSurvivalEstimate, SurrogatePair, Weighting,
};
use crate::risknet::{gradient_step, loss_and_grad, NetConfig, ResidualRiskNet};
use crate::stats;
use crate::survival::{
    loglik, survival, Censoring, Dataset, Standardizer, StepCumulativeHazard,
};

/// Absolute change in the penalized objective below which the outer loop
/// exits early.
const OBJECTIVE_EXIT_TOL: f64 = 1e-8;

/// Fraction of features that must stay active at the starting penalty of a
/// regularization path.
const DENSE_START_FRACTION: f64 = 0.95;

/// Knobs for a single fit at a fixed penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    /// Full-batch gradient/proximal epochs per outer iteration. Zero is
    /// allowed and skips straight to the baseline profile update.
    pub epochs_b: usize,
    /// Outer iterations (each ends with one baseline profile update).
    pub outer_iters_k: usize,
    pub learning_rate: f64,
    /// Hierarchy multiplier: first-layer weights obey
    /// `|W_ij| <= hierarchy_m * |theta_j]`.
    pub hierarchy_m: f64,
    /// L1 penalty on the skip coefficients.
    pub lambda: f64,
    pub net: NetConfig,
    pub icm: IcmConfig,
    /// Seed for data-dependent randomness outside the net init (currently
    /// the train/validation split of [`fit_path`]).
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            epochs_b: 50,
            outer_iters_k: 20,
            learning_rate: 1e-2,
            hierarchy_m: 10.0,
            lambda: 0.0,
            net: NetConfig::default(),
            icm: IcmConfig::default(),
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.outer_iters_k == 0 {
            return Err(Error::InvalidInput("outer_iters_k must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(self.hierarchy_m > 0.0 && self.hierarchy_m.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "hierarchy_m must be positive, got {}",
                self.hierarchy_m
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda must be nonnegative, got {}",
                self.lambda
            )));
        }
        self.net.validate()?;
        self.icm.validate()
    }
}

/// A fitted model: the risk network, the profiled baseline cumulative
/// hazard, and the feature standardization baked in at fit time.
///
/// The risk scale is anchored at the origin: the stored `risk_offset` is the
/// network's output at the raw all-zeros covariate vector, and [`Self::risk`]
/// subtracts it, so `risk(0) == 0` exactly and the stored baseline is the
/// survival curve of a zero-covariate subject. The baseline produced by
/// [`fit`] is profiled against the centered risks, so predictions are
/// unchanged by the anchoring.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedModel {
    net: ResidualRiskNet,
    baseline: StepCumulativeHazard,
    standardizer: Standardizer,
    risk_offset: f64,
    final_loglik: f64,
    hierarchy_m: f64,
    /// Penalized objective `-loglik + lambda * |theta|_1` after each
    /// baseline profile update.
    objective_trace: Vec<f64>,
    /// Log-likelihood gain of each baseline profile update over the hazard
    /// it started from; nonnegative up to floating-point slack.
    profile_gains: Vec<f64>,
    /// True when the final baseline sits at the solver's value cap (the
    /// likelihood has no finite maximizer in that direction).
    boundary: bool,
    /// Samples floored in the final likelihood evaluation.
    floored: usize,
}

impl FittedModel {
    pub fn net(&self) -> &ResidualRiskNet {
        &self.net
    }

    pub fn baseline(&self) -> &StepCumulativeHazard {
        &self.baseline
    }

    pub fn standardizer(&self) -> &Standardizer {
        &self.standardizer
    }

    /// Network output at the raw all-zeros covariate vector; subtracted by
    /// [`Self::risk`] so the origin scores exactly zero.
    pub fn risk_offset(&self) -> f64 {
        self.risk_offset
    }

    pub fn final_loglik(&self) -> f64 {
        self.final_loglik
    }

    pub fn hierarchy_m(&self) -> f64 {
        self.hierarchy_m
    }

    pub fn objective_trace(&self) -> &[f64] {
        &self.objective_trace
    }

    pub fn profile_gains(&self) -> &[f64] {
        &self.profile_gains
    }

    pub fn boundary(&self) -> bool {
        self.boundary
    }

    pub fn floored(&self) -> usize {
        self.floored
    }

    /// Indices of features with a nonzero skip coefficient.
    pub fn selected_features(&self) -> Vec<usize> {
        self.net.selected_features()
    }

    /// Whether every first-layer weight obeys its hierarchy bound.
    pub fn check_hierarchy(&self) -> bool {
        hierarchy_ok(&self.net, self.hierarchy_m)
    }

    /// Risk score of a raw (unstandardized) covariate vector, anchored so
    /// the all-zeros vector scores exactly 0.
    pub fn risk(&self, z: &[f64]) -> Result<f64> {
        let zs = self.standardizer.transform(z)?;
        Ok(self.net.forward_one(&zs)? - self.risk_offset)
    }

    /// Rebuild a model from stored parts, revalidating every invariant
    /// (dimensions, finiteness, hierarchy feasibility).
    pub fn from_parts(
        net: ResidualRiskNet,
        baseline: StepCumulativeHazard,
        standardizer: Standardizer,
        risk_offset: f64,
        final_loglik: f64,
        hierarchy_m: f64,
    ) -> Result<Self> {
        if standardizer.d() != net.d() {
            return Err(Error::DimensionMismatch(format!(
                "standardizer covers {} features, network expects {}",
                standardizer.d(),
                net.d()
            )));
        }
        if !risk_offset.is_finite() {
            return Err(Error::InvalidInput(format!(
                "risk_offset must be finite, got {risk_offset}"
            )));
        }
        if !final_loglik.is_finite() {
            return Err(Error::InvalidInput(format!(
                "final_loglik must be finite, got {final_loglik}"
            )));
        }
        if !(hierarchy_m > 0.0 && hierarchy_m.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "hierarchy_m must be positive, got {hierarchy_m}"
            )));
        }
        if !hierarchy_ok(&net, hierarchy_m) {
            return Err(Error::InvalidInput(
                "first-layer weights violate the hierarchy bound".into(),
            ));
        }
        Ok(Self {
            net,
            baseline,
            standardizer,
            risk_offset,
            final_loglik,
            hierarchy_m,
            objective_trace: Vec::new(),
            profile_gains: Vec::new(),
            boundary: false,
            floored: 0,
        })
    }
}

fn hierarchy_ok(net: &ResidualRiskNet, m: f64) -> bool {
    let w = net.first_layer_weights();
    let theta = net.theta();
    (0..net.d()).all(|j| {
        let bound = m * theta[j].abs();
        (0..w.rows()).all(|i| w.get(i, j).abs() <= bound)
    })
}

fn l1_norm(xs: &[f64]) -> f64 {
    xs.iter().map(|x| x.abs()).sum()
}

/// Fit the model on `data` at the penalty in `cfg`. Covariates are
/// standardized internally (the returned model applies the same transform
/// when predicting).
///
/// Runs exactly: initialize the network and a linear-in-rank baseline; for
/// each outer iteration, take `epochs_b` full-batch gradient steps on the
/// negative log-likelihood at the current baseline, each followed by the
/// hierarchical proximal update; then re-profile the baseline at the current
/// risk scores by isotonic ascent (which never decreases the likelihood).
pub fn fit(data: &Dataset, cfg: &FitConfig) -> Result<FittedModel> {
    cfg.validate()?;
    let standardizer = Standardizer::fit(data);
    let sdata = standardizer.transform_dataset(data)?;
    let net = ResidualRiskNet::init(sdata.d(), &cfg.net)?;
    fit_core(&sdata, &standardizer, net, cfg)
}

/// Fitting loop on pre-standardized data from explicit starting parameters
/// (used for warm starts along a regularization path).
fn fit_core(
    sdata: &Dataset,
    standardizer: &Standardizer,
    mut net: ResidualRiskNet,
    cfg: &FitConfig,
) -> Result<FittedModel> {
    if sdata.samples().iter().all(|s| s.delta3()) {
        return Err(Error::Unidentifiable(
            "every sample is right-censored: the cumulative hazard estimate is \
             identically zero and risk scores drop out of the likelihood"
                .into(),
        ));
    }
    if net.d() != sdata.d() {
        return Err(Error::DimensionMismatch(format!(
            "network expects {} features, data has {}",
            net.d(),
            sdata.d()
        )));
    }
    let grid = build_time_grid(sdata);
    let g_count = grid.len();
    let prox = ProxParams::new(cfg.learning_rate * cfg.lambda, cfg.hierarchy_m)?;
    // The training objective is the per-sample mean of the negative
    // log-likelihood (plus the penalty), so the learning rate is independent
    // of the sample size; the summed gradients are scaled accordingly.
    let n_inv = 1.0 / sdata.n() as f64;

    // Unprofiled starting baseline: strictly increasing in rank, matching
    // the profile solver's own default start.
    let mut values: Vec<f64> = (0..g_count)
        .map(|k| (k + 1) as f64 / (g_count + 1) as f64)
        .collect();

    let mut objective_trace = Vec::with_capacity(cfg.outer_iters_k);
    let mut profile_gains = Vec::with_capacity(cfg.outer_iters_k);
    let mut prev_obj = f64::INFINITY;
    let mut last_fit = None;

    for k in 1..=cfg.outer_iters_k {
        let (cu, cv) = grid.gather(&values)?;
        for b in 1..=cfg.epochs_b {
            let lg = loss_and_grad(&net, sdata, &cu, &cv).map_err(|e| match e {
                Error::NonFiniteLoss(msg) => Error::NonFiniteLoss(format!(
                    "outer iteration {k}, epoch {b}: {msg}"
                )),
                other => other,
            })?;
            gradient_step(&mut net, &lg.grads, cfg.learning_rate * n_inv)?;
            let (theta, w1) = hier_prox(net.theta(), net.first_layer_weights(), &prox)?;
            net.set_theta(theta)?;
            net.set_first_layer_weights(w1)?;
            if !hierarchy_ok(&net, cfg.hierarchy_m) {
                return Err(Error::Domain(format!(
                    "hierarchy bound violated after outer iteration {k}, epoch {b}"
                )));
            }
        }

        let risks = net.forward(sdata)?;
        let entry = {
            let (cu_e, cv_e) = grid.gather(&values)?;
            loglik(sdata, &risks, &cu_e, &cv_e)?.value
        };
        let icm = icm_profile(sdata, &risks, Some(&values), &cfg.icm)?;
        profile_gains.push(icm.loglik - entry);
        values = icm.hazard.values().to_vec();

        let obj = -icm.loglik * n_inv + cfg.lambda * l1_norm(net.theta());
        objective_trace.push(obj);
        last_fit = Some(icm);
        if (prev_obj - obj).abs() < OBJECTIVE_EXIT_TOL {
            break;
        }
        prev_obj = obj;
    }

    let icm = last_fit.expect("outer_iters_k >= 1");

    // Anchor the risk scale at the origin: subtract the network's output at
    // the raw all-zeros vector from every risk and re-profile the baseline
    // against the centered risks. The likelihood only sees products
    // baseline(t)*e^{risk}, so this is a pure reparameterization; the warm
    // start scales the profiled values by e^{offset} accordingly.
    let zs0 = standardizer.transform(&vec![0.0; sdata.d()])?;
    let offset = net.forward_one(&zs0)?;
    if !offset.is_finite() {
        return Err(Error::NonFiniteLoss(format!(
            "risk at the zero covariate vector is non-finite ({offset})"
        )));
    }
    let icm = if offset == 0.0 {
        icm
    } else {
        let risks = net.forward(sdata)?;
        let centered: Vec<f64> = risks.iter().map(|r| r - offset).collect();
        let scale = offset.exp();
        let init: Option<Vec<f64>> = if scale.is_finite() && scale > 0.0 {
            Some(
                icm.hazard
                    .values()
                    .iter()
                    .map(|v| (v * scale).min(cfg.icm.value_cap))
                    .collect(),
            )
        } else {
            None
        };
        icm_profile(sdata, &centered, init.as_deref(), &cfg.icm)?
    };

    Ok(FittedModel {
        net,
        baseline: icm.hazard,
        standardizer: standardizer.clone(),
        risk_offset: offset,
        final_loglik: icm.loglik,
        hierarchy_m: cfg.hierarchy_m,
        objective_trace,
        profile_gains,
        boundary: icm.boundary,
        floored: icm.floored,
    })
}

/// Survival predictions `S(t|z) = exp(-baseline(t) * e^{risk(z)})` at each
/// requested time, for a raw covariate vector.
pub fn predict_survival(model: &FittedModel, z: &[f64], times: &[f64]) -> Result<Vec<f64>> {
    let r = model.risk(z)?;
    times
        .iter()
        .map(|&t| survival(model.baseline.eval(t)?, r))
        .collect()
}

/// Knobs for the dense-to-sparse regularization path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathConfig {
    /// The starting penalty is this factor times the largest initial skip
    /// gradient magnitude (then halved until ≥95% of features stay active).
    pub lambda_start_factor: f64,
    /// Geometric step between consecutive penalties.
    pub multiplier: f64,
    /// Fraction of samples held out for validation.
    pub val_fraction: f64,
    /// Hard cap on the number of path points.
    pub max_len: usize,
    /// Number of evaluation times for the validation Brier curve.
    pub brier_grid: usize,
    pub weighting: Weighting,
}

impl Default for PathConfig {
    fn default() -> Self {
        Self {
            lambda_start_factor: 1e-3,
            multiplier: 1.05,
            val_fraction: 0.2,
            max_len: 200,
            brier_grid: 100,
            weighting: Weighting::Paper,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_start_factor > 0.0 && self.lambda_start_factor.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "lambda_start_factor must be positive, got {}",
                self.lambda_start_factor
            )));
        }
        if !(self.multiplier > 1.0 && self.multiplier.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "multiplier must exceed 1, got {}",
                self.multiplier
            )));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction <= 0.5) {
            return Err(Error::InvalidInput(format!(
                "val_fraction must lie in (0, 0.5], got {}",
                self.val_fraction
            )));
        }
        if self.max_len == 0 {
            return Err(Error::InvalidInput("max_len must be at least 1".into()));
        }
        if self.brier_grid < 2 {
            return Err(Error::InvalidInput("brier_grid must be at least 2".into()));
        }
        Ok(())
    }
}

/// One fitted point of a regularization path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPoint {
    pub lambda: f64,
    /// Number of features with a nonzero skip coefficient.
    pub n_active: usize,
    /// Training log-likelihood of the fitted model.
    pub train_loglik: f64,
    /// Integrated Brier score on the held-out split.
    pub val_ibs: f64,
    pub model: FittedModel,
}

/// A fitted regularization path with its selected point.
#[derive(Debug, Clone, PartialEq)]
pub struct PathResult {
    /// Path points in fitting order; `lambda` is strictly increasing.
    pub points: Vec<PathPoint>,
    /// Index of the smallest validation IBS (ties go to the larger penalty).
    pub best_index: usize,
    /// Lower edge of the Brier integration window (5% quantile of the
    /// training inspection borders).
    pub t1: f64,
    /// Upper edge (95% quantile).
    pub t2: f64,
}

impl PathResult {
    pub fn best(&self) -> &PathPoint {
        &self.points[self.best_index]
    }
}

/// Split sample indices into train/validation preserving the proportions of
/// the three censoring classes. Deterministic in `seed`.
pub(crate) fn stratified_split(
    data: &Dataset,
    val_fraction: f64,
    seed: u64,
) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut strata: [Vec<usize>; 3] = [Vec::new(), Vec::new(), Vec::new()];
    for (i, s) in data.samples().iter().enumerate() {
        let k = match s.censoring() {
            Censoring::Left => 0,
            Censoring::Interval => 1,
            Censoring::Right => 2,
        };
        strata[k].push(i);
    }
    let mut train = Vec::new();
    let mut val = Vec::new();
    for mut idx in strata {
        idx.shuffle(&mut rng);
        let n_val = (val_fraction * idx.len() as f64).round() as usize;
        val.extend_from_slice(&idx[..n_val]);
        train.extend_from_slice(&idx[n_val..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// The 5% and 95% quantiles of the inspection borders the likelihood
/// actually references in `data`, used as the Brier integration window.
fn validation_window(data: &Dataset) -> Result<(f64, f64)> {
    let mut borders = Vec::with_capacity(2 * data.n());
    for s in data.samples() {
        match s.censoring() {
            Censoring::Left => borders.push(s.u()),
            Censoring::Interval => {
                borders.push(s.u());
                borders.push(s.v());
            }
            Censoring::Right => borders.push(s.v()),
        }
    }
    borders.sort_by(|a, b| a.partial_cmp(b).expect("finite sample times"));
    let t1 = stats::quantile_sorted(&borders, 0.05).expect("nonempty dataset");
    let t2 = stats::quantile_sorted(&borders, 0.95).expect("nonempty dataset");
    if !(t1 < t2) {
        return Err(Error::InvalidInput(format!(
            "degenerate Brier window [{t1}, {t2}]: inspection times have no spread"
        )));
    }
    Ok((t1, t2))
}

/// Integrated Brier score of `model` on a held-out split, with censoring
/// weights `g` estimated on the training split.
fn validation_ibs(
    model: &FittedModel,
    val: &Dataset,
    g: &StepSurvivalEstimate,
    bcfg: &BrierConfig,
    grid_n: usize,
) -> Result<f64> {
    let risks: Vec<f64> = val
        .samples()
        .iter()
        .map(|s| model.risk(s.covariates()))
        .collect::<Result<_>>()?;
    let step = (bcfg.t2 - bcfg.t1) / (grid_n - 1) as f64;
    let ts: Vec<f64> = (0..grid_n).map(|k| bcfg.t1 + step * k as f64).collect();
    let mut bs = Vec::with_capacity(grid_n);
    for &t in &ts {
        let ch = model.baseline.eval(t)?;
        let surv: Vec<f64> = risks.iter().map(|&r| survival(ch, r)).collect::<Result<_>>()?;
        bs.push(brier_t(val, &surv, g, t)?.value);
    }
    ibs(&ts, &bs, bcfg)
}

/// Largest initial skip-gradient magnitude: the scale against which the
/// starting penalty is set.
fn lambda_scale(strain: &Dataset, cfg: &FitConfig) -> Result<f64> {
    let grid = build_time_grid(strain);
    let g_count = grid.len();
    let values: Vec<f64> = (0..g_count)
        .map(|k| (k + 1) as f64 / (g_count + 1) as f64)
        .collect();
    let (cu, cv) = grid.gather(&values)?;
    let net = ResidualRiskNet::init(strain.d(), &cfg.net)?;
    let lg = loss_and_grad(&net, strain, &cu, &cv)?;
    let max = lg.grads.theta.iter().fold(0.0_f64, |m, g| m.max(g.abs()));
    Ok(max / strain.n() as f64)
}

/// Fit a warm-started regularization path from dense to sparse.
///
/// The data are split (stratified by censoring class, seeded by `cfg.seed`)
/// into train/validation. Censoring weights and the Brier window come from
/// the training split alone. The path starts at a penalty low enough to keep
/// at least 95% of features active, multiplies the penalty geometrically,
/// warm-starts each fit from the previous parameters, and stops once no
/// feature is active (or at `path.max_len`). `cfg.lambda` is ignored; the
/// path supplies each penalty.
pub fn fit_path(data: &Dataset, cfg: &FitConfig, path: &PathConfig) -> Result<PathResult> {
    cfg.validate()?;
    path.validate()?;
    let (train_idx, val_idx) = stratified_split(data, path.val_fraction, cfg.seed);
    if train_idx.is_empty() || val_idx.is_empty() {
        return Err(Error::InvalidInput(format!(
            "split produced {} train / {} validation samples; need both nonempty",
            train_idx.len(),
            val_idx.len()
        )));
    }
    let train = data.subset(&train_idx)?;
    let val = data.subset(&val_idx)?;

    let (t1, t2) = validation_window(&train)?;
    let informative = val.samples().iter().any(|s| {
        let p = SurrogatePair::from(s);
        p.gamma || p.y > t1
    });
    if !informative {
        return Err(Error::UndefinedMetric(
            "validation split has no sample informative for the Brier window".into(),
        ));
    }
    let pairs: Vec<SurrogatePair> = train.samples().iter().map(SurrogatePair::from).collect();
    let g = km_censoring(&pairs)?;
    let bcfg = BrierConfig::new(t1, t2, path.weighting)?;

    let standardizer = Standardizer::fit(&train);
    let strain = standardizer.transform_dataset(&train)?;
    let fresh = ResidualRiskNet::init(strain.d(), &cfg.net)?;

    // Starting penalty: a small multiple of the largest initial gradient,
    // halved until the fit keeps (nearly) all features.
    let scale = lambda_scale(&strain, cfg)?;
    let mut lam = (path.lambda_start_factor * scale).max(1e-12);
    let target_active = (DENSE_START_FRACTION * strain.d() as f64).ceil() as usize;
    let mut sub = FitConfig {
        lambda: lam,
        ..cfg.clone()
    };
    let mut model = fit_core(&strain, &standardizer, fresh.clone(), &sub)?;
    for _ in 0..20 {
        if model.selected_features().len() >= target_active {
            break;
        }
        sub.lambda *= 0.5;
        model = fit_core(&strain, &standardizer, fresh.clone(), &sub)?;
    }
    lam = sub.lambda;

    let mut points: Vec<PathPoint> = Vec::new();
    loop {
        let val_ibs = validation_ibs(&model, &val, &g, &bcfg, path.brier_grid)?;
        let n_active = model.selected_features().len();
        let train_loglik = model.final_loglik;
        let warm = model.net.clone();
        points.push(PathPoint {
            lambda: lam,
            n_active,
            train_loglik,
            val_ibs,
            model,
        });
        if n_active == 0 || points.len() >= path.max_len {
            break;
        }
        lam *= path.multiplier;
        sub.lambda = lam;
        model = fit_core(&strain, &standardizer, warm, &sub)?;
    }

    let mut best_index = 0;
    for (i, p) in points.iter().enumerate() {
        if p.val_ibs <= points[best_index].val_ibs {
            best_index = i;
        }
    }
    Ok(PathResult {
        points,
        best_index,
        t1,
        t2,
    })
}
