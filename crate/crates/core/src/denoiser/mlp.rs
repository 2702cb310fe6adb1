//! Small fully-connected ε-predictor trained on the standard noise-regression
//! loss. The noise level enters through Fourier features of its half-log-SNR.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{check_dim, Denoiser};
use crate::error::{Result, VrgError};
use crate::forward::{half_log_snr, NoiseSchedule};
use crate::io::{read_container, write_container};
use crate::rng::{stream, tag};

const FREQUENCIES: [f64; 3] = [0.5, 1.0, 2.0];
const EMBED_DIM: usize = 1 + 2 * FREQUENCIES.len();
const FORMAT: &str = "vrg-mlp";

fn embed(alpha_bar: f64, out: &mut Vec<f64>) {
    let l = half_log_snr(alpha_bar);
    out.push(l / 4.0);
    for w in FREQUENCIES {
        out.push((w * l).sin());
        out.push((w * l).cos());
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

#[inline]
fn silu(z: f64) -> f64 {
    z * sigmoid(z)
}

#[inline]
fn silu_grad(z: f64) -> f64 {
    let s = sigmoid(z);
    s * (1.0 + z * (1.0 - s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            steps: 4000,
            batch_size: 128,
            learning_rate: 2e-3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layer {
    inputs: usize,
    outputs: usize,
    /// Row-major `outputs × inputs`.
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl Layer {
    fn forward(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z: f64 = row.iter().zip(x).map(|(w, v)| w * v).sum();
            out.push(z + self.bias[o]);
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpDenoiser {
    dim: usize,
    layers: Vec<Layer>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    dim: usize,
    widths: Vec<usize>,
    activation: String,
}

impl MlpDenoiser {
    fn init(dim: usize, hidden: &[usize], seed: u64) -> Self {
        let mut widths = vec![dim + EMBED_DIM];
        widths.extend_from_slice(hidden);
        widths.push(dim);
        let mut rng = stream(seed, &[tag::MLP_INIT]);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (inputs, outputs) = (w[0], w[1]);
                let scale = (1.0 / inputs as f64).sqrt();
                let weights = (0..inputs * outputs)
                    .map(|_| {
                        let z: f64 = StandardNormal.sample(&mut rng);
                        z * scale
                    })
                    .collect();
                Layer {
                    inputs,
                    outputs,
                    weights,
                    bias: vec![0.0; outputs],
                }
            })
            .collect();
        Self { dim, layers }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].inputs];
        w.extend(self.layers.iter().map(|l| l.outputs));
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    fn flat_parameters(&self) -> Vec<f64> {
        let mut p = Vec::with_capacity(self.parameter_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    fn input(&self, x_t: &[f64], alpha_bar: f64) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.dim + EMBED_DIM);
        v.extend_from_slice(x_t);
        embed(alpha_bar, &mut v);
        v
    }

    /// Forward pass keeping each layer's pre-activation for backprop.
    fn forward_trace(&self, input: Vec<f64>) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let mut activations = vec![input];
        let mut pre = Vec::with_capacity(self.layers.len());
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = Vec::new();
            layer.forward(activations.last().expect("input present"), &mut z);
            let a = if i == last {
                z.clone()
            } else {
                z.iter().map(|&v| silu(v)).collect()
            };
            pre.push(z);
            activations.push(a);
        }
        (activations, pre)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let header = Header {
            format: FORMAT.into(),
            dim: self.dim,
            widths: self.widths(),
            activation: "silu".into(),
        };
        write_container(path, &header, &self.flat_parameters())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, data): (Header, Vec<f64>) = read_container(path)?;
        if header.format != FORMAT {
            return Err(VrgError::Format(format!(
                "expected a `{FORMAT}` container, found `{}`",
                header.format
            )));
        }
        let w = &header.widths;
        if w.len() < 2 || w[0] != header.dim + EMBED_DIM || w[w.len() - 1] != header.dim {
            return Err(VrgError::Format(format!("inconsistent layer widths {w:?}")));
        }
        let mut offset = 0;
        let mut layers = Vec::new();
        for pair in w.windows(2) {
            let (inputs, outputs) = (pair[0], pair[1]);
            let need = inputs * outputs + outputs;
            if offset + need > data.len() {
                return Err(VrgError::Format("weight payload is truncated".into()));
            }
            let weights = data[offset..offset + inputs * outputs].to_vec();
            let bias = data[offset + inputs * outputs..offset + need].to_vec();
            offset += need;
            layers.push(Layer {
                inputs,
                outputs,
                weights,
                bias,
            });
        }
        if offset != data.len() {
            return Err(VrgError::Format("weight payload has trailing values".into()));
        }
        Ok(Self {
            dim: header.dim,
            layers,
        })
    }
}

impl Denoiser for MlpDenoiser {
    fn id(&self) -> String {
        let w: Vec<String> = self.widths().iter().map(|w| w.to_string()).collect();
        format!("mlp({})", w.join("-"))
    }

    fn dim(&self) -> Option<usize> {
        Some(self.dim)
    }

    fn predict_noise(&self, x_t: &[f64], alpha_bar: f64, _seed: u64) -> Result<Vec<f64>> {
        check_dim(self.dim, x_t.len())?;
        if !(alpha_bar > 0.0 && alpha_bar < 1.0) {
            return Err(VrgError::Domain(format!(
                "network input needs alpha_bar in (0, 1), got {alpha_bar}"
            )));
        }
        let mut a = self.input(x_t, alpha_bar);
        let mut z = Vec::new();
        let last = self.layers.len() - 1;
        for (i, layer) in self.layers.iter().enumerate() {
            layer.forward(&a, &mut z);
            a.clear();
            if i == last {
                a.extend_from_slice(&z);
            } else {
                a.extend(z.iter().map(|&v| silu(v)));
            }
        }
        Ok(a)
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Train on `‖ε̂ − ε‖²/d` with `t ~ U{1..T}`, `ε ~ N(0, I)` and dataset points
/// drawn uniformly with replacement. Adam with a linearly decaying rate.
pub fn train_mlp_denoiser(dataset: &[Vec<f64>], schedule: &NoiseSchedule, config: &TrainConfig) -> Result<MlpDenoiser> {
    let dim = dataset
        .first()
        .map(|x| x.len())
        .ok_or_else(|| VrgError::Precondition("training set is empty".into()))?;
    if dim == 0 || dim > 16 {
        return Err(VrgError::Precondition(format!(
            "dimensionality must be in 1..=16, got {dim}"
        )));
    }
    if let Some(bad) = dataset.iter().find(|x| x.len() != dim) {
        return Err(VrgError::DimensionMismatch {
            expected: dim,
            got: bad.len(),
        });
    }
    if config.batch_size == 0 || config.hidden.contains(&0) {
        return Err(VrgError::Precondition(
            "batch size and layer widths must be positive".into(),
        ));
    }

    let mut net = MlpDenoiser::init(dim, &config.hidden, config.seed);
    let mut params = net.flat_parameters();
    let mut adam = Adam::new(params.len());
    let mut rng = stream(config.seed, &[tag::MLP_BATCH]);
    let steps_t = schedule.steps();

    for step in 0..config.steps {
        let mut grads = vec![0.0; params.len()];
        let mut loss = 0.0;
        for _ in 0..config.batch_size {
            let x0 = &dataset[rng.random_range(0..dataset.len())];
            let t = rng.random_range(1..=steps_t);
            let ab = schedule.alpha_bar(t);
            let eps: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
            let (s, n) = (ab.sqrt(), (1.0 - ab).sqrt());
            let xt: Vec<f64> = x0.iter().zip(&eps).map(|(x, e)| s * x + n * e).collect();

            let scale = 2.0 / (dim as f64 * config.batch_size as f64);
            loss += net.accumulate_gradient(&xt, ab, &eps, scale, &mut grads) / dim as f64;
        }
        loss /= config.batch_size as f64;
        if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
            return Err(VrgError::Divergence(format!(
                "loss became {loss} at step {step} (lr = {})",
                config.learning_rate
            )));
        }
        let lr = config.learning_rate * (1.0 - 0.9 * step as f64 / config.steps as f64);
        adam.step(&mut params, &grads, lr);
        net.load_flat(&params);
    }
    Ok(net)
}

impl MlpDenoiser {
    /// Add the gradient of `scale·½‖net(x_t, ᾱ) − target‖²` into `grads`
    /// (flat parameter layout) and return the unscaled squared error.
    fn accumulate_gradient(&self, x_t: &[f64], alpha_bar: f64, target: &[f64], scale: f64, grads: &mut [f64]) -> f64 {
        let (acts, pre) = self.forward_trace(self.input(x_t, alpha_bar));
        let out = acts.last().expect("output layer");
        let mut sq = 0.0;
        let mut delta: Vec<f64> = out
            .iter()
            .zip(target)
            .map(|(o, e)| {
                sq += (o - e).powi(2);
                scale * (o - e)
            })
            .collect();

        let mut offset = grads.len();
        for (li, layer) in self.layers.iter().enumerate().rev() {
            let nw = layer.inputs * layer.outputs;
            offset -= nw + layer.outputs;
            let input = &acts[li];
            for o in 0..layer.outputs {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = offset + o * layer.inputs;
                for (g, x) in grads[row..row + layer.inputs].iter_mut().zip(input) {
                    *g += d * x;
                }
                grads[offset + nw + o] += d;
            }
            if li > 0 {
                let mut next = vec![0.0; layer.inputs];
                for (o, &d) in delta.iter().enumerate() {
                    let row = &layer.weights[o * layer.inputs..(o + 1) * layer.inputs];
                    for (acc, w) in next.iter_mut().zip(row) {
                        *acc += d * w;
                    }
                }
                for (acc, z) in next.iter_mut().zip(&pre[li - 1]) {
                    *acc *= silu_grad(*z);
                }
                delta = next;
            }
        }
        sq
    }

    fn load_flat(&mut self, params: &[f64]) {
        let mut offset = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&params[offset..offset + nw]);
            offset += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&params[offset..offset + nb]);
            offset += nb;
        }
    }
}
