//! Residual risk function `r(z) = theta'z + g(z)`: a linear skip path plus a
//! small feed-forward stack, with exact gradients of the negative
//! interval-censored log-likelihood via manual backpropagation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat::Mat;
use crate::par;
use crate::survival::{sample_term_and_drisk, Dataset};

/// Hidden-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Rectified linear; derivative at 0 is taken as 0.
    Relu,
    /// Hyperbolic tangent; smooth, useful where differentiability matters.
    Tanh,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
        }
    }

    #[inline]
    fn deriv(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
        }
    }
}

/// Architecture and initialization choices for the hidden stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Hidden layer widths, at least one layer.
    pub hidden_widths: Vec<usize>,
    pub activation: Activation,
    /// Seed for the weight initialization stream.
    pub init_seed: u64,
    /// Weights start uniform in `[-s, s]` with `s = init_scale / sqrt(fan_in)`.
    pub init_scale: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            hidden_widths: vec![10],
            activation: Activation::Relu,
            init_seed: 0,
            init_scale: 1.0,
        }
    }
}

impl NetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_widths.is_empty() {
            return Err(Error::InvalidInput("at least one hidden layer required".into()));
        }
        if self.hidden_widths.contains(&0) {
            return Err(Error::InvalidInput("hidden widths must be at least 1".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            )));
        }
        Ok(())
    }
}

/// One affine map of the stack: `out = w * in + b`, weights stored row-major
/// with one row per output unit (so column `j` of the first layer holds
/// feature `j`'s outgoing weights).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub w: Mat,
    pub b: Vec<f64>,
}

/// The residual risk network. The skip coefficients `theta` are added
/// outside the stack, so `r(z) - theta'z` is exactly the stack output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRiskNet {
    d: usize,
    theta: Vec<f64>,
    layers: Vec<Layer>,
    activation: Activation,
}

/// Gradients for every parameter block of a [`ResidualRiskNet`].
#[derive(Debug, Clone, PartialEq)]
pub struct NetGrads {
    pub theta: Vec<f64>,
    pub layers: Vec<Layer>,
}

impl NetGrads {
    fn zeros_like(net: &ResidualRiskNet) -> Self {
        Self {
            theta: vec![0.0; net.d],
            layers: net
                .layers
                .iter()
                .map(|l| Layer {
                    w: Mat::zeros(l.w.rows(), l.w.cols()),
                    b: vec![0.0; l.b.len()],
                })
                .collect(),
        }
    }

    fn add_assign(&mut self, other: &NetGrads) {
        for (a, b) in self.theta.iter_mut().zip(&other.theta) {
            *a += b;
        }
        for (la, lb) in self.layers.iter_mut().zip(&other.layers) {
            for (a, b) in la.w.data_mut().iter_mut().zip(lb.w.data()) {
                *a += b;
            }
            for (a, b) in la.b.iter_mut().zip(&lb.b) {
                *a += b;
            }
        }
    }
}

/// Negative log-likelihood and its gradients at fixed cumulative hazards.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrad {
    pub loss: f64,
    /// Samples whose probability was floored.
    pub floored: usize,
    pub grads: NetGrads,
}

impl ResidualRiskNet {
    /// Fresh network: `theta = 0`, biases 0, weights uniform in `[-s, s]`
    /// with `s = init_scale / sqrt(fan_in)`, drawn from a seeded stream in a
    /// fixed order (layer by layer, row-major).
    pub fn init(d: usize, cfg: &NetConfig) -> Result<Self> {
        cfg.validate()?;
        if d == 0 {
            return Err(Error::InvalidInput("input dimension must be at least 1".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.init_seed);
        let mut layers = Vec::with_capacity(cfg.hidden_widths.len() + 1);
        let mut fan_in = d;
        for &width in cfg.hidden_widths.iter().chain(std::iter::once(&1)) {
            let s = cfg.init_scale / (fan_in as f64).sqrt();
            let w = Mat::from_fn(width, fan_in, |_, _| rng.random_range(-s..s));
            layers.push(Layer {
                w,
                b: vec![0.0; width],
            });
            fan_in = width;
        }
        Ok(Self {
            d,
            theta: vec![0.0; d],
            layers,
            activation: cfg.activation,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    /// First-layer weight matrix (columns indexed by feature).
    pub fn first_layer_weights(&self) -> &Mat {
        &self.layers[0].w
    }

    /// Number of parameters in the hidden stack (excluding `theta`).
    pub fn hidden_param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.w.data().len() + l.b.len())
            .sum()
    }

    /// Features with a nonzero skip coefficient.
    pub fn selected_features(&self) -> Vec<usize> {
        self.theta
            .iter()
            .enumerate()
            .filter(|(_, t)| **t != 0.0)
            .map(|(j, _)| j)
            .collect()
    }

    pub fn set_theta(&mut self, theta: Vec<f64>) -> Result<()> {
        if theta.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "{} coefficients for input dimension {}",
                theta.len(),
                self.d
            )));
        }
        self.theta = theta;
        Ok(())
    }

    pub fn set_first_layer_weights(&mut self, w: Mat) -> Result<()> {
        let l0 = &self.layers[0].w;
        if w.rows() != l0.rows() || w.cols() != l0.cols() {
            return Err(Error::DimensionMismatch(format!(
                "first layer is {}x{}, got {}x{}",
                l0.rows(),
                l0.cols(),
                w.rows(),
                w.cols()
            )));
        }
        self.layers[0].w = w;
        Ok(())
    }

    /// Apply `f` to every parameter (skip coefficients, weights, biases).
    pub fn map_params(&mut self, f: impl Fn(f64) -> f64) {
        for t in &mut self.theta {
            *t = f(*t);
        }
        for l in &mut self.layers {
            for w in l.w.data_mut() {
                *w = f(*w);
            }
            for b in &mut l.b {
                *b = f(*b);
            }
        }
    }

    /// Rebuild from parts (used by persistence); validates the dimension
    /// chain `d -> widths -> 1`.
    pub fn from_parts(
        d: usize,
        theta: Vec<f64>,
        layers: Vec<Layer>,
        activation: Activation,
    ) -> Result<Self> {
        if theta.len() != d || d == 0 {
            return Err(Error::DimensionMismatch(format!(
                "theta has {} entries for input dimension {d}",
                theta.len()
            )));
        }
        if layers.is_empty() {
            return Err(Error::InvalidInput("network needs at least two layers".into()));
        }
        let mut fan_in = d;
        for (l, layer) in layers.iter().enumerate() {
            layer.w.check()?;
            if layer.w.cols() != fan_in || layer.b.len() != layer.w.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "layer {l} expects {fan_in} inputs, found {}x{} weights and {} biases",
                    layer.w.rows(),
                    layer.w.cols(),
                    layer.b.len()
                )));
            }
            fan_in = layer.w.rows();
        }
        if fan_in != 1 {
            return Err(Error::DimensionMismatch(format!(
                "final layer has {fan_in} outputs, expected 1"
            )));
        }
        if theta.iter().any(|x| !x.is_finite())
            || layers
                .iter()
                .any(|l| l.w.data().iter().chain(&l.b).any(|x| !x.is_finite()))
        {
            return Err(Error::InvalidInput("parameters must be finite".into()));
        }
        Ok(Self {
            d,
            theta,
            layers,
            activation,
        })
    }

    /// Stack-only output `g(z)` (no skip path).
    pub fn hidden_one(&self, z: &[f64]) -> Result<f64> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "covariate vector has length {}, expected {}",
                z.len(),
                self.d
            )));
        }
        let last = self.layers.len() - 1;
        let mut a: Vec<f64> = z.to_vec();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut next = Vec::with_capacity(layer.b.len());
            for (o, &b) in layer.b.iter().enumerate() {
                let pre = b + layer
                    .w
                    .row(o)
                    .iter()
                    .zip(&a)
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
                next.push(if l < last { self.activation.apply(pre) } else { pre });
            }
            a = next;
        }
        Ok(a[0])
    }

    /// Risk score for one covariate vector.
    pub fn forward_one(&self, z: &[f64]) -> Result<f64> {
        let g = self.hidden_one(z)?;
        let skip: f64 = self.theta.iter().zip(z).map(|(t, x)| t * x).sum();
        Ok(skip + g)
    }

    /// Risk scores for every sample.
    pub fn forward(&self, data: &Dataset) -> Result<Vec<f64>> {
        if data.d() != self.d {
            return Err(Error::DimensionMismatch(format!(
                "dataset has {} covariates, network expects {}",
                data.d(),
                self.d
            )));
        }
        let samples = data.samples();
        let out = par::map_indices(data.n(), |i| {
            self.forward_one(samples[i].covariates())
                .expect("dimension checked above")
        });
        Ok(out)
    }
}

/// Scratch space reused across samples during backpropagation.
struct Workspace {
    /// `pres[l]` = pre-activations of layer `l`.
    pres: Vec<Vec<f64>>,
    /// `acts[l]` = input fed to layer `l` (`acts[0]` is the sample itself).
    acts: Vec<Vec<f64>>,
}

impl Workspace {
    fn new(net: &ResidualRiskNet) -> Self {
        let mut pres = Vec::with_capacity(net.layers.len());
        let mut acts = Vec::with_capacity(net.layers.len());
        let mut fan_in = net.d;
        for l in &net.layers {
            acts.push(vec![0.0; fan_in]);
            pres.push(vec![0.0; l.b.len()]);
            fan_in = l.b.len();
        }
        Self { pres, acts }
    }
}

/// Forward pass recording the per-layer inputs and pre-activations, then
/// backward accumulation of `upstream * dr/dparam` into `grads`.
fn backprop_sample(
    net: &ResidualRiskNet,
    z: &[f64],
    ws: &mut Workspace,
    grads: &mut NetGrads,
    upstream: f64,
) {
    let last = net.layers.len() - 1;
    ws.acts[0].copy_from_slice(z);
    for l in 0..net.layers.len() {
        let layer = &net.layers[l];
        for o in 0..layer.b.len() {
            let pre = layer.b[o]
                + layer
                    .w
                    .row(o)
                    .iter()
                    .zip(ws.acts[l].iter())
                    .map(|(w, x)| w * x)
                    .sum::<f64>();
            ws.pres[l][o] = pre;
            if l < last {
                ws.acts[l + 1][o] = net.activation.apply(pre);
            }
        }
    }

    // skip path
    for (g, x) in grads.theta.iter_mut().zip(z) {
        *g += upstream * x;
    }

    // hidden stack, output layer first
    let mut delta = vec![upstream];
    for l in (0..net.layers.len()).rev() {
        let layer = &net.layers[l];
        let input = &ws.acts[l];
        let gl = &mut grads.layers[l];
        for (o, &dout) in delta.iter().enumerate() {
            gl.b[o] += dout;
            let row_start = o * layer.w.cols();
            let gw = &mut gl.w.data_mut()[row_start..row_start + layer.w.cols()];
            for (g, x) in gw.iter_mut().zip(input) {
                *g += dout * x;
            }
        }
        if l > 0 {
            let mut next = vec![0.0; layer.w.cols()];
            for (o, &dout) in delta.iter().enumerate() {
                for (n, w) in next.iter_mut().zip(layer.w.row(o)) {
                    *n += dout * w;
                }
            }
            for (n, &pre) in next.iter_mut().zip(&ws.pres[l - 1]) {
                *n *= net.activation.deriv(pre);
            }
            delta = next;
        }
    }
}

/// Negative log-likelihood of the data at fixed per-sample cumulative
/// hazards, with exact gradients for every parameter block. Floored samples
/// contribute a constant term and zero gradient.
///
/// Samples are processed in fixed-size chunks whose partial sums are folded
/// in chunk order, so parallel and sequential builds produce bitwise
/// identical results.
pub fn loss_and_grad(
    net: &ResidualRiskNet,
    data: &Dataset,
    cumhaz_u: &[f64],
    cumhaz_v: &[f64],
) -> Result<LossGrad> {
    let n = data.n();
    if data.d() != net.d {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {} covariates, network expects {}",
            data.d(),
            net.d
        )));
    }
    if cumhaz_u.len() != n || cumhaz_v.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "dataset has {n} samples; got {} hazard-at-u, {} hazard-at-v",
            cumhaz_u.len(),
            cumhaz_v.len()
        )));
    }
    let samples = data.samples();

    struct ChunkOut {
        terms: Vec<f64>,
        floored: usize,
        grads: NetGrads,
    }

    let chunks = par::map_chunks(n, |range| {
        let mut ws = Workspace::new(net);
        let mut grads = NetGrads::zeros_like(net);
        let mut terms = Vec::with_capacity(range.len());
        let mut floored = 0;
        for i in range {
            let s = &samples[i];
            let z = s.covariates();
            let r = net.forward_one(z).expect("dimension checked above");
            let (term, dterm_dr, was_floored) =
                sample_term_and_drisk(s.delta1(), s.delta2(), cumhaz_u[i], cumhaz_v[i], r);
            terms.push(term);
            if was_floored {
                floored += 1;
                continue;
            }
            // loss is the negative log-likelihood
            backprop_sample(net, z, &mut ws, &mut grads, -dterm_dr);
        }
        ChunkOut {
            terms,
            floored,
            grads,
        }
    });

    let mut all_terms = Vec::with_capacity(n);
    let mut floored = 0;
    let mut grads = NetGrads::zeros_like(net);
    for c in &chunks {
        all_terms.extend_from_slice(&c.terms);
        floored += c.floored;
        grads.add_assign(&c.grads);
    }
    let loss = -par::pairwise_sum(&all_terms);
    if !loss.is_finite() {
        let bad = all_terms
            .iter()
            .position(|t| !t.is_finite())
            .unwrap_or(0);
        return Err(Error::NonFiniteLoss(format!(
            "sample {bad} produced a non-finite likelihood term"
        )));
    }
    Ok(LossGrad {
        loss,
        floored,
        grads,
    })
}

/// Plain full-batch gradient-descent update of every parameter.
pub fn gradient_step(net: &mut ResidualRiskNet, grads: &NetGrads, alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "learning rate must be positive and finite, got {alpha}"
        )));
    }
    if grads.theta.len() != net.d || grads.layers.len() != net.layers.len() {
        return Err(Error::DimensionMismatch("gradient shape differs from network".into()));
    }
    for (t, g) in net.theta.iter_mut().zip(&grads.theta) {
        *t -= alpha * g;
    }
    for (l, gl) in net.layers.iter_mut().zip(&grads.layers) {
        if l.w.rows() != gl.w.rows() || l.w.cols() != gl.w.cols() || l.b.len() != gl.b.len() {
            return Err(Error::DimensionMismatch("gradient shape differs from network".into()));
        }
        for (w, g) in l.w.data_mut().iter_mut().zip(gl.w.data()) {
            *w -= alpha * g;
        }
        for (b, g) in l.b.iter_mut().zip(&gl.b) {
            *b -= alpha * g;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survival::IntervalSample;
    use approx::assert_relative_eq;
    use rand_chacha::ChaCha8Rng;

    fn cfg(widths: Vec<usize>, act: Activation, seed: u64) -> NetConfig {
        NetConfig {
            hidden_widths: widths,
            activation: act,
            init_seed: seed,
            init_scale: 1.0,
        }
    }

    fn random_dataset(n: usize, d: usize, rng: &mut ChaCha8Rng) -> (Dataset, Vec<f64>, Vec<f64>) {
        let samples: Vec<IntervalSample> = (0..n)
            .map(|_| {
                let u = rng.random_range(0.1..1.0);
                let v = u + rng.random_range(0.1..1.0);
                let z: Vec<f64> = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
                match rng.random_range(0..3) {
                    0 => IntervalSample::new(u, u, true, false, z).unwrap(),
                    1 => IntervalSample::new(u, v, false, true, z).unwrap(),
                    _ => IntervalSample::new(u, v, false, false, z).unwrap(),
                }
            })
            .collect();
        let cu: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..0.8)).collect();
        let cv: Vec<f64> = cu.iter().map(|c| c + rng.random_range(0.1..0.8)).collect();
        (Dataset::new(samples).unwrap(), cu, cv)
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let mut net = ResidualRiskNet::init(3, &cfg(vec![4], Activation::Relu, 1)).unwrap();
        net.map_params(|_| 0.0);
        assert_eq!(net.forward_one(&[1.0, -2.0, 3.0]).unwrap(), 0.0);
    }

    #[test]
    fn pure_skip_path() {
        let mut net = ResidualRiskNet::init(3, &cfg(vec![4], Activation::Relu, 1)).unwrap();
        net.map_params(|_| 0.0);
        net.set_theta(vec![1.0, 0.0, 0.0]).unwrap();
        assert_eq!(net.forward_one(&[2.0, 5.0, -1.0]).unwrap(), 2.0);
    }

    #[test]
    fn matches_straight_line_reimplementation() {
        // Independent re-computation of a width-2 ReLU net on 2 features.
        let net = ResidualRiskNet::init(2, &cfg(vec![2], Activation::Relu, 42)).unwrap();
        let z = [0.7, -1.2];
        let l0 = &net.layers()[0];
        let l1 = &net.layers()[1];
        let h0 = (l0.b[0] + l0.w.get(0, 0) * z[0] + l0.w.get(0, 1) * z[1]).max(0.0);
        let h1 = (l0.b[1] + l0.w.get(1, 0) * z[0] + l0.w.get(1, 1) * z[1]).max(0.0);
        let out = l1.b[0] + l1.w.get(0, 0) * h0 + l1.w.get(0, 1) * h1;
        let skip = net.theta()[0] * z[0] + net.theta()[1] * z[1];
        assert_relative_eq!(net.forward_one(&z).unwrap(), skip + out, epsilon = 1e-15);
    }

    #[test]
    fn residual_identity_is_exact() {
        let mut net = ResidualRiskNet::init(4, &cfg(vec![5, 3], Activation::Tanh, 9)).unwrap();
        net.set_theta(vec![0.3, -0.5, 1.2, 0.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..20 {
            let z: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
            let r = net.forward_one(&z).unwrap();
            let skip: f64 = net.theta().iter().zip(&z).map(|(t, x)| t * x).sum();
            // the skip path is added outside the stack, so recomputing
            // skip + g in the same order reproduces r bitwise
            assert_eq!(r, skip + net.hidden_one(&z).unwrap());
        }
    }

    #[test]
    fn initialization_is_deterministic() {
        let a = ResidualRiskNet::init(6, &cfg(vec![7, 4], Activation::Relu, 33)).unwrap();
        let b = ResidualRiskNet::init(6, &cfg(vec![7, 4], Activation::Relu, 33)).unwrap();
        assert_eq!(a, b);
        let c = ResidualRiskNet::init(6, &cfg(vec![7, 4], Activation::Relu, 34)).unwrap();
        assert_ne!(a, c);
        // biases start at zero, theta at zero
        assert!(a.theta().iter().all(|t| *t == 0.0));
        assert!(a.layers().iter().all(|l| l.b.iter().all(|b| *b == 0.0)));
        assert_eq!(a.hidden_param_count(), 6 * 7 + 7 + 7 * 4 + 4 + 4 + 1);
    }

    #[test]
    fn zeroed_feature_vanishes_from_output() {
        let mut net = ResidualRiskNet::init(3, &cfg(vec![4], Activation::Relu, 5)).unwrap();
        net.set_theta(vec![0.5, 0.0, -0.2]).unwrap();
        let mut w = net.first_layer_weights().clone();
        w.set_col(1, &[0.0; 4]);
        net.set_first_layer_weights(w).unwrap();

        let base = net.forward_one(&[0.4, 0.0, -0.7]).unwrap();
        for bump in [-3.0, -0.5, 1.0, 10.0] {
            let moved = net.forward_one(&[0.4, bump, -0.7]).unwrap();
            assert_eq!(base, moved);
        }
    }

    #[test]
    fn all_right_censored_gradient_is_weighted_covariate_sum() {
        // With a zeroed network, r = 0 and the loss is sum LV_i, so
        // d(loss)/d(theta) = sum_i LV_i z_i.
        let samples = vec![
            IntervalSample::new(0.2, 1.0, false, false, vec![1.0, 2.0]).unwrap(),
            IntervalSample::new(0.2, 2.0, false, false, vec![-3.0, 0.5]).unwrap(),
        ];
        let data = Dataset::new(samples).unwrap();
        let mut net = ResidualRiskNet::init(2, &cfg(vec![3], Activation::Relu, 2)).unwrap();
        net.map_params(|_| 0.0);
        let lg = loss_and_grad(&net, &data, &[0.0, 0.0], &[0.4, 0.7]).unwrap();
        assert_relative_eq!(lg.loss, 0.4 + 0.7, epsilon = 1e-15);
        assert_relative_eq!(lg.grads.theta[0], 0.4 * 1.0 + 0.7 * (-3.0), epsilon = 1e-15);
        assert_relative_eq!(lg.grads.theta[1], 0.4 * 2.0 + 0.7 * 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_hazard_right_censored_is_a_stationary_zero() {
        let samples = vec![
            IntervalSample::new(0.2, 1.0, false, false, vec![1.0]).unwrap(),
            IntervalSample::new(0.2, 2.0, false, false, vec![-1.0]).unwrap(),
        ];
        let data = Dataset::new(samples).unwrap();
        let net = ResidualRiskNet::init(1, &cfg(vec![3], Activation::Relu, 3)).unwrap();
        let lg = loss_and_grad(&net, &data, &[0.0; 2], &[0.0; 2]).unwrap();
        assert_eq!(lg.loss, 0.0);
        assert!(lg.grads.theta.iter().all(|g| *g == 0.0));
        for l in &lg.grads.layers {
            assert!(l.w.data().iter().all(|g| *g == 0.0));
            assert!(l.b.iter().all(|g| *g == 0.0));
        }
    }

    fn fd_check(net: &ResidualRiskNet, data: &Dataset, cu: &[f64], cv: &[f64], tol: f64) {
        let lg = loss_and_grad(net, data, cu, cv).unwrap();
        let h = 1e-5;
        let eval = |n: &ResidualRiskNet| loss_and_grad(n, data, cu, cv).unwrap().loss;

        let rel = |analytic: f64, fd: f64| {
            (analytic - fd).abs() / (analytic.abs() + fd.abs()).max(1e-8)
        };

        for j in 0..net.d() {
            let mut up = net.clone();
            let mut dn = net.clone();
            let mut t = up.theta().to_vec();
            t[j] += h;
            up.set_theta(t).unwrap();
            let mut t = dn.theta().to_vec();
            t[j] -= h;
            dn.set_theta(t).unwrap();
            let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
            assert!(
                rel(lg.grads.theta[j], fd) <= tol,
                "theta[{j}]: analytic {} vs fd {fd}",
                lg.grads.theta[j]
            );
        }
        for l in 0..net.layers().len() {
            for idx in 0..net.layers()[l].w.data().len() {
                let mut up = net.clone();
                let mut dn = net.clone();
                up.layers[l].w.data_mut()[idx] += h;
                dn.layers[l].w.data_mut()[idx] -= h;
                let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
                let analytic = lg.grads.layers[l].w.data()[idx];
                assert!(
                    rel(analytic, fd) <= tol,
                    "layer {l} w[{idx}]: analytic {analytic} vs fd {fd}"
                );
            }
            for idx in 0..net.layers()[l].b.len() {
                let mut up = net.clone();
                let mut dn = net.clone();
                up.layers[l].b[idx] += h;
                dn.layers[l].b[idx] -= h;
                let fd = (eval(&up) - eval(&dn)) / (2.0 * h);
                let analytic = lg.grads.layers[l].b[idx];
                assert!(
                    rel(analytic, fd) <= tol,
                    "layer {l} b[{idx}]: analytic {analytic} vs fd {fd}"
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences_smooth() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for seed in 0..5 {
            let (data, cu, cv) = random_dataset(12, 3, &mut rng);
            let mut net =
                ResidualRiskNet::init(3, &cfg(vec![4, 3], Activation::Tanh, seed)).unwrap();
            net.set_theta(vec![0.2, -0.4, 0.1]).unwrap();
            fd_check(&net, &data, &cu, &cv, 1e-6);
        }
    }

    #[test]
    fn gradients_match_finite_differences_relu_away_from_kinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        let mut seed = 0u64;
        while checked < 5 {
            seed += 1;
            let (data, cu, cv) = random_dataset(10, 2, &mut rng);
            let net = ResidualRiskNet::init(2, &cfg(vec![4], Activation::Relu, seed)).unwrap();
            // skip configurations with a pre-activation near a kink
            let near_kink = data.samples().iter().any(|s| {
                let l0 = &net.layers()[0];
                (0..4).any(|o| {
                    let pre: f64 = l0.b[o]
                        + l0.w
                            .row(o)
                            .iter()
                            .zip(s.covariates())
                            .map(|(w, x)| w * x)
                            .sum::<f64>();
                    pre.abs() < 1e-3
                })
            });
            if near_kink {
                continue;
            }
            fd_check(&net, &data, &cu, &cv, 1e-5);
            checked += 1;
        }
    }

    #[test]
    fn gradient_step_updates() {
        let mut rng = ChaCha8Rng::seed_from_u64(55);
        let (data, cu, cv) = random_dataset(15, 3, &mut rng);
        let mut net = ResidualRiskNet::init(3, &cfg(vec![4], Activation::Tanh, 8)).unwrap();
        net.set_theta(vec![0.5, -0.5, 0.25]).unwrap();

        // zero gradients: fixed point
        let frozen = net.clone();
        let zeros = NetGrads::zeros_like(&net);
        gradient_step(&mut net, &zeros, 0.1).unwrap();
        assert_eq!(net, frozen);

        // alpha=1 with grad_theta = theta zeroes theta
        let mut g = NetGrads::zeros_like(&net);
        g.theta = net.theta().to_vec();
        gradient_step(&mut net, &g, 1.0).unwrap();
        assert!(net.theta().iter().all(|t| *t == 0.0));

        // a small step along the gradient decreases the loss
        let mut net = ResidualRiskNet::init(3, &cfg(vec![4], Activation::Tanh, 8)).unwrap();
        net.set_theta(vec![0.5, -0.5, 0.25]).unwrap();
        let before = loss_and_grad(&net, &data, &cu, &cv).unwrap();
        gradient_step(&mut net, &before.grads, 1e-3).unwrap();
        let after = loss_and_grad(&net, &data, &cu, &cv).unwrap();
        assert!(after.loss < before.loss);

        assert!(gradient_step(&mut net, &before.grads, 0.0).is_err());
    }

    #[test]
    fn parallel_chunking_matches_known_sum() {
        // more samples than one chunk to exercise the fold path
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (data, cu, cv) = random_dataset(700, 2, &mut rng);
        let net = ResidualRiskNet::init(2, &cfg(vec![3], Activation::Tanh, 12)).unwrap();
        let lg = loss_and_grad(&net, &data, &cu, &cv).unwrap();
        let risks = net.forward(&data).unwrap();
        let ll = crate::survival::loglik(&data, &risks, &cu, &cv).unwrap();
        assert_eq!(lg.loss, -ll.value);
        assert_eq!(lg.floored, ll.floored);
    }

    #[test]
    fn from_parts_validates_chain() {
        let net = ResidualRiskNet::init(3, &cfg(vec![4], Activation::Relu, 5)).unwrap();
        let parts_ok = ResidualRiskNet::from_parts(
            3,
            net.theta().to_vec(),
            net.layers().to_vec(),
            Activation::Relu,
        );
        assert!(parts_ok.is_ok());
        let bad = ResidualRiskNet::from_parts(
            4,
            vec![0.0; 4],
            net.layers().to_vec(),
            Activation::Relu,
        );
        assert!(bad.is_err());
    }

    #[test]
    fn config_is_validated() {
        assert!(ResidualRiskNet::init(0, &NetConfig::default()).is_err());
        assert!(ResidualRiskNet::init(3, &cfg(vec![], Activation::Relu, 0)).is_err());
        assert!(ResidualRiskNet::init(3, &cfg(vec![0], Activation::Relu, 0)).is_err());
        let mut c = NetConfig::default();
        c.init_scale = 0.0;
        assert!(ResidualRiskNet::init(3, &c).is_err());
    }
}
