//! Learned free-motion map from actuation to sensor readings.
//!
//! A small tanh network (input, 5, 3, output) with a linear output layer.
//! Inputs are actuation values, outputs are normalized sensor readings of
//! the same actuator group. The analytic input-derivative is used when
//! removing the free-motion response from probed Jacobians.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HIDDEN_WIDTHS: [usize; 2] = [5, 3];

/// Dense layer, `weights` stored row-major as `outputs x inputs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Layer {
    fn zeros(inputs: usize, outputs: usize) -> Self {
        Self { inputs, outputs, weights: vec![0.0; inputs * outputs], bias: vec![0.0; outputs] }
    }

    fn affine(&self, x: &[f64], out: &mut [f64]) {
        for (r, o) in out.iter_mut().enumerate() {
            let row = &self.weights[r * self.inputs..(r + 1) * self.inputs];
            *o = self.bias[r] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
        }
    }

    fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_row_slice(self.outputs, self.inputs, &self.weights)
    }

    fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FreeMotionModel {
    pub layers: [Layer; 3],
    pub fit_residual_rmse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub seed: u64,
    /// Total damped Gauss-Newton iterations, shared across restarts.
    pub max_iterations: usize,
    pub restarts: usize,
    pub target_rmse: f64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self { seed: 7, max_iterations: 5000, restarts: 4, target_rmse: 1e-2 }
    }
}

struct Activations {
    h1: [f64; 5],
    h2: [f64; 3],
}

impl FreeMotionModel {
    /// Model with all weights zero; the output layer bias is `bias`.
    pub fn constant(input_dim: usize, bias: Vec<f64>) -> Self {
        let mut out = Layer::zeros(HIDDEN_WIDTHS[1], bias.len());
        out.bias = bias;
        Self {
            layers: [
                Layer::zeros(input_dim, HIDDEN_WIDTHS[0]),
                Layer::zeros(HIDDEN_WIDTHS[0], HIDDEN_WIDTHS[1]),
                out,
            ],
            fit_residual_rmse: 0.0,
        }
    }

    /// Builds a model from explicit layers after checking their shapes chain.
    pub fn from_layers(layers: [Layer; 3], fit_residual_rmse: f64) -> Result<Self> {
        let widths = [HIDDEN_WIDTHS[0], HIDDEN_WIDTHS[1]];
        for (i, l) in layers.iter().enumerate() {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Format(format!("layer {i} has inconsistent parameter counts")));
            }
        }
        if layers[0].outputs != widths[0]
            || layers[1].inputs != widths[0]
            || layers[1].outputs != widths[1]
            || layers[2].inputs != widths[1]
        {
            return Err(Error::Format("hidden widths must be 5 and 3".into()));
        }
        Ok(Self { layers, fit_residual_rmse })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers[2].outputs
    }

    fn hidden(&self, a: &[f64]) -> Activations {
        let mut h1 = [0.0; 5];
        let mut h2 = [0.0; 3];
        self.layers[0].affine(a, &mut h1);
        h1.iter_mut().for_each(|v| *v = v.tanh());
        self.layers[1].affine(&h1, &mut h2);
        h2.iter_mut().for_each(|v| *v = v.tanh());
        Activations { h1, h2 }
    }

    pub fn eval(&self, a: &[f64]) -> Vec<f64> {
        debug_assert_eq!(a.len(), self.input_dim());
        let act = self.hidden(a);
        let mut y = vec![0.0; self.output_dim()];
        self.layers[2].affine(&act.h2, &mut y);
        y
    }

    /// Input-derivative `dy/da`, shape `output_dim x input_dim`.
    pub fn jacobian(&self, a: &[f64]) -> DMatrix<f64> {
        let act = self.hidden(a);
        let d1 = DMatrix::from_diagonal(&DVector::from_iterator(5, act.h1.iter().map(|h| 1.0 - h * h)));
        let d2 = DMatrix::from_diagonal(&DVector::from_iterator(3, act.h2.iter().map(|h| 1.0 - h * h)));
        self.layers[2].matrix() * d2 * self.layers[1].matrix() * d1 * self.layers[0].matrix()
    }

    /// Global Lipschitz constant from spectral norms; tanh is 1-Lipschitz.
    pub fn lipschitz_bound(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| {
                let m = l.matrix();
                m.singular_values().iter().fold(0.0f64, |acc, s| acc.max(*s))
            })
            .product()
    }

    fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    fn params(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    fn set_params(&mut self, p: &[f64]) {
        let mut k = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[k..k + nw]);
            k += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
    }

    /// Residuals `y - t` stacked sample-major and their parameter Jacobian.
    fn residuals_and_jacobian(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> (DVector<f64>, DMatrix<f64>) {
        let [l1, l2, l3] = &self.layers;
        let outs = l3.outputs;
        let rows = inputs.len() * outs;
        let off_b1 = l1.weights.len();
        let off_w2 = off_b1 + l1.bias.len();
        let off_b2 = off_w2 + l2.weights.len();
        let off_w3 = off_b2 + l2.bias.len();
        let off_b3 = off_w3 + l3.weights.len();
        let mut r = DVector::zeros(rows);
        let mut jac = DMatrix::zeros(rows, self.param_count());
        for (s, (a, t)) in inputs.iter().zip(targets).enumerate() {
            let act = self.hidden(a);
            let mut y = vec![0.0; outs];
            l3.affine(&act.h2, &mut y);
            for o in 0..outs {
                let row = s * outs + o;
                r[row] = y[o] - t[o];
                let mut g2 = [0.0; 3];
                for j in 0..3 {
                    jac[(row, off_w3 + o * 3 + j)] = act.h2[j];
                    g2[j] = l3.weights[o * 3 + j] * (1.0 - act.h2[j] * act.h2[j]);
                    jac[(row, off_b2 + j)] = g2[j];
                    for i in 0..5 {
                        jac[(row, off_w2 + j * 5 + i)] = g2[j] * act.h1[i];
                    }
                }
                jac[(row, off_b3 + o)] = 1.0;
                for i in 0..5 {
                    let g1 = (0..3).map(|j| g2[j] * l2.weights[j * 5 + i]).sum::<f64>()
                        * (1.0 - act.h1[i] * act.h1[i]);
                    jac[(row, off_b1 + i)] = g1;
                    for (k, ak) in a.iter().enumerate() {
                        jac[(row, i * l1.inputs + k)] = g1 * ak;
                    }
                }
            }
        }
        (r, jac)
    }

    /// Replaces the output layer by the least-squares optimum given the
    /// current hidden features.
    fn solve_output_layer(&mut self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) {
        let n = inputs.len();
        let outs = self.output_dim();
        let mut features = DMatrix::zeros(n, 4);
        for (r, a) in inputs.iter().enumerate() {
            let act = self.hidden(a);
            for j in 0..3 {
                features[(r, j)] = act.h2[j];
            }
            features[(r, 3)] = 1.0;
        }
        let svd = features.svd(true, true);
        for o in 0..outs {
            let rhs = DVector::from_iterator(n, targets.iter().map(|t| t[o]));
            if let Ok(sol) = svd.solve(&rhs, 1e-10) {
                for j in 0..3 {
                    self.layers[2].weights[o * 3 + j] = sol[j];
                }
                self.layers[2].bias[o] = sol[3];
            }
        }
    }

    pub fn rmse(&self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (a, t) in inputs.iter().zip(targets) {
            for (y, t) in self.eval(a).iter().zip(t) {
                sum += (y - t) * (y - t);
                count += 1;
            }
        }
        (sum / count.max(1) as f64).sqrt()
    }

    /// Fits a model by damped Gauss-Newton (Levenberg-Marquardt) on the
    /// squared residual, from seeded He-style uniform initializations.
    /// The best of `config.restarts` seeded starts is kept.
    pub fn fit(inputs: &[Vec<f64>], targets: &[Vec<f64>], config: &FitConfig) -> Result<Self> {
        const MIN_SAMPLES: usize = 25;
        if inputs.len() < MIN_SAMPLES {
            return Err(Error::TooFewSamples { needed: MIN_SAMPLES, got: inputs.len() });
        }
        if inputs.len() != targets.len() {
            return Err(Error::ChannelMismatch { expected: inputs.len(), got: targets.len() });
        }
        let m = inputs[0].len();
        let n = targets[0].len();
        if let Some(bad) = inputs.iter().find(|a| a.len() != m) {
            return Err(Error::ChannelMismatch { expected: m, got: bad.len() });
        }
        if let Some(bad) = targets.iter().find(|t| t.len() != n) {
            return Err(Error::ChannelMismatch { expected: n, got: bad.len() });
        }

        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let budget = (config.max_iterations / config.restarts.max(1)).max(1);
        let mut best: Option<Self> = None;
        for _ in 0..config.restarts.max(1) {
            let mut model = Self {
                layers: [
                    Layer::zeros(m, HIDDEN_WIDTHS[0]),
                    Layer::zeros(HIDDEN_WIDTHS[0], HIDDEN_WIDTHS[1]),
                    Layer::zeros(HIDDEN_WIDTHS[1], n),
                ],
                fit_residual_rmse: f64::INFINITY,
            };
            for l in &mut model.layers[..2] {
                let limit = (6.0 / l.inputs as f64).sqrt();
                l.weights.iter_mut().for_each(|w| *w = rng.gen_range(-limit..limit));
            }
            model.solve_output_layer(inputs, targets);
            model.levenberg_marquardt(inputs, targets, budget, config.target_rmse);
            model.fit_residual_rmse = model.rmse(inputs, targets);
            if best.as_ref().is_none_or(|b| model.fit_residual_rmse < b.fit_residual_rmse) {
                best = Some(model);
            }
        }
        let model = best.expect("at least one restart");
        if !(model.fit_residual_rmse <= config.target_rmse) {
            return Err(Error::FitDidNotConverge { rmse: model.fit_residual_rmse, target: config.target_rmse });
        }
        Ok(model)
    }

    fn levenberg_marquardt(&mut self, inputs: &[Vec<f64>], targets: &[Vec<f64>], iterations: usize, target_rmse: f64) {
        // Stop well below the acceptance target; further digits cost time only.
        let floor = (target_rmse * 1e-4).max(1e-10);
        let count = (inputs.len() * self.output_dim()) as f64;
        let mut lambda = 1e-3;
        let mut params = self.params();
        let (mut r, mut jac) = self.residuals_and_jacobian(inputs, targets);
        let mut sse = r.norm_squared();
        for _ in 0..iterations {
            if (sse / count).sqrt() <= floor {
                break;
            }
            let jtj = jac.transpose() * &jac;
            let jtr = jac.transpose() * &r;
            let mut accepted = false;
            while lambda < 1e12 {
                let mut a = jtj.clone();
                for i in 0..a.nrows() {
                    a[(i, i)] += lambda * (1.0 + jtj[(i, i)]);
                }
                let Some(chol) = a.cholesky() else {
                    lambda *= 4.0;
                    continue;
                };
                let step = chol.solve(&(-&jtr));
                let trial: Vec<f64> = params.iter().zip(step.iter()).map(|(p, d)| p + d).collect();
                self.set_params(&trial);
                let (tr, tj) = self.residuals_and_jacobian(inputs, targets);
                let trial_sse = tr.norm_squared();
                if trial_sse < sse {
                    params = trial;
                    r = tr;
                    jac = tj;
                    let gain = (sse - trial_sse) / sse.max(f64::MIN_POSITIVE);
                    sse = trial_sse;
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = gain > 1e-14;
                    break;
                }
                lambda *= 4.0;
            }
            if !accepted {
                break;
            }
        }
        self.set_params(&params);
    }
}
