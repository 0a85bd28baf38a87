//! Feedforward network with a sigmoid output, trained on mean logistic loss
//! plus an L2 penalty, by mini-batch Adam or full-batch L-BFGS.
//!
//! Inputs are standardized and missing values are replaced by the training
//! mean. Gradients are accumulated over fixed chunks of rows and summed in
//! chunk order, so thread count never changes the result.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baseline::Standardizer;
use super::{sigmoid, Dataset};
use crate::error::{OdrError, Result};
use crate::features::Matrix;
use crate::rng;

const STREAM_INIT: u64 = 0x3170;
const STREAM_EPOCH: u64 = 0x3171;
const CHUNK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Logistic,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Logistic => sigmoid(z),
        }
    }

    /// Derivative expressed through the activation value.
    fn derivative(self, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if a > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Logistic => a * (1.0 - a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Solver {
    Adam,
    Lbfgs,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpParams {
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub solver: Solver,
    /// L2 penalty strength.
    pub alpha: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Epochs for Adam, iterations for L-BFGS.
    pub max_iter: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden_layers: vec![64],
            activation: Activation::Tanh,
            solver: Solver::Adam,
            alpha: 1e-3,
            learning_rate: 1e-3,
            batch_size: 200,
            max_iter: 30,
        }
    }
}

impl MlpParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_layers.is_empty() || self.hidden_layers.contains(&0) {
            return Err(OdrError::Config("mlp: hidden layers must be non-empty and positive".into()));
        }
        if !(self.alpha >= 0.0 && self.learning_rate > 0.0 && self.batch_size > 0) {
            return Err(OdrError::Config("mlp: invalid alpha, learning rate or batch size".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub scaler: Standardizer,
    pub activation: Activation,
    /// Layer widths from input to the single output.
    pub sizes: Vec<usize>,
    /// Per layer: weights (out x in, row-major) then biases.
    pub params: Vec<f64>,
}

/// Offsets of each layer's weights and biases in the flat parameter vector.
fn layout(sizes: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(sizes.len() - 1);
    let mut at = 0;
    for w in sizes.windows(2) {
        out.push((at, at + w[0] * w[1]));
        at += w[0] * w[1] + w[1];
    }
    out
}

fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

struct Net<'a> {
    sizes: &'a [usize],
    layout: Vec<(usize, usize)>,
    activation: Activation,
}

impl Net<'_> {
    /// Activations of every layer; the last holds the output margin.
    fn forward(&self, params: &[f64], input: &[f64]) -> Vec<Vec<f64>> {
        let mut acts = vec![input.to_vec()];
        let last = self.layout.len() - 1;
        for (l, &(w_at, b_at)) in self.layout.iter().enumerate() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let prev = &acts[l];
            let mut next = Vec::with_capacity(n_out);
            for o in 0..n_out {
                let w = &params[w_at + o * n_in..w_at + (o + 1) * n_in];
                let z = params[b_at + o] + w.iter().zip(prev).map(|(a, b)| a * b).sum::<f64>();
                next.push(if l == last { z } else { self.activation.apply(z) });
            }
            acts.push(next);
        }
        acts
    }

    fn margin(&self, params: &[f64], input: &[f64]) -> f64 {
        self.forward(params, input).last().expect("output layer")[0]
    }

    /// Summed logistic loss and gradient over `rows`, without the penalty.
    fn loss_grad(&self, params: &[f64], x: &Matrix, y: &[u8], rows: &[usize]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let mut loss = 0.0;
        for &i in rows {
            let acts = self.forward(params, x.row(i));
            let m = acts.last().expect("output")[0];
            loss += super::logistic_loss(m, y[i]);
            let mut delta = vec![sigmoid(m) - f64::from(y[i])];
            for l in (0..self.layout.len()).rev() {
                let (w_at, b_at) = self.layout[l];
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let prev = &acts[l];
                for o in 0..n_out {
                    let d = delta[o];
                    grad[b_at + o] += d;
                    if d != 0.0 {
                        let g = &mut grad[w_at + o * n_in..w_at + (o + 1) * n_in];
                        for (gk, &a) in g.iter_mut().zip(prev) {
                            *gk += d * a;
                        }
                    }
                }
                if l > 0 {
                    let mut back = vec![0.0; n_in];
                    for (o, &d) in delta.iter().enumerate() {
                        let w = &params[w_at + o * n_in..w_at + (o + 1) * n_in];
                        for (bk, &wk) in back.iter_mut().zip(w) {
                            *bk += wk * d;
                        }
                    }
                    for (bk, &a) in back.iter_mut().zip(prev) {
                        *bk *= self.activation.derivative(a);
                    }
                    delta = back;
                }
            }
        }
        (loss, grad)
    }

    /// Mean loss plus `alpha / (2 n) * |W|^2` over `rows`, with its gradient.
    /// Chunks are evaluated in parallel and summed in order.
    fn objective(&self, params: &[f64], x: &Matrix, y: &[u8], rows: &[usize], alpha: f64) -> (f64, Vec<f64>) {
        let parts: Vec<(f64, Vec<f64>)> = rows
            .par_chunks(CHUNK)
            .map(|c| self.loss_grad(params, x, y, c))
            .collect();
        let mut loss = 0.0;
        let mut grad = vec![0.0; params.len()];
        for (l, g) in parts {
            loss += l;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        let n = rows.len() as f64;
        loss /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        for &(w_at, b_at) in &self.layout {
            for k in w_at..b_at {
                loss += 0.5 * alpha * params[k] * params[k] / n;
                grad[k] += alpha * params[k] / n;
            }
        }
        (loss, grad)
    }
}

impl MlpModel {
    fn net(&self) -> Net<'_> {
        Net {
            sizes: &self.sizes,
            layout: layout(&self.sizes),
            activation: self.activation,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut q = Vec::with_capacity(row.len());
        self.scaler.transform_row(row, &mut q);
        sigmoid(self.net().margin(&self.params, &q))
    }
}

fn glorot_init(sizes: &[usize], r: &mut rng::Rng) -> Vec<f64> {
    let mut params = vec![0.0; n_params(sizes)];
    for (l, &(w_at, b_at)) in layout(sizes).iter().enumerate() {
        let bound = (6.0 / (sizes[l] + sizes[l + 1]) as f64).sqrt();
        for k in w_at..b_at {
            params[k] = r.random_range(-bound..bound);
        }
        for k in b_at..b_at + sizes[l + 1] {
            params[k] = r.random_range(-bound..bound);
        }
    }
    params
}

fn adam(net: &Net, params: &mut [f64], x: &Matrix, y: &[u8], p: &MlpParams, seed: u64) {
    let (b1, b2, eps) = (0.9, 0.999, 1e-8);
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut step = 0i32;
    let mut order: Vec<usize> = (0..x.n_rows).collect();
    for epoch in 0..p.max_iter {
        let mut r = rng::derive(seed, &[STREAM_EPOCH, epoch as u64]);
        order.shuffle(&mut r);
        for batch in order.chunks(p.batch_size) {
            let (_, g) = net.objective(params, x, y, batch, p.alpha);
            step += 1;
            let c1 = 1.0 - f64::powi(b1, step);
            let c2 = 1.0 - f64::powi(b2, step);
            for k in 0..params.len() {
                m[k] = b1 * m[k] + (1.0 - b1) * g[k];
                v[k] = b2 * v[k] + (1.0 - b2) * g[k] * g[k];
                params[k] -= p.learning_rate * (m[k] / c1) / ((v[k] / c2).sqrt() + eps);
            }
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Limited-memory BFGS with backtracking Armijo line search.
fn lbfgs(net: &Net, params: &mut Vec<f64>, x: &Matrix, y: &[u8], p: &MlpParams) {
    const MEMORY: usize = 10;
    let rows: Vec<usize> = (0..x.n_rows).collect();
    let eval = |w: &[f64]| net.objective(w, x, y, &rows, p.alpha);
    let (mut f, mut g) = eval(params);
    let mut hist: Vec<(Vec<f64>, Vec<f64>, f64)> = Vec::new();
    for _ in 0..p.max_iter {
        if dot(&g, &g).sqrt() < 1e-8 {
            break;
        }
        // Two-loop recursion for the search direction.
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, yv, rho) in hist.iter().rev() {
            let a = rho * dot(s, &q);
            q.iter_mut().zip(yv).for_each(|(qk, yk)| *qk -= a * yk);
            alphas.push(a);
        }
        if let Some((s, yv, _)) = hist.last() {
            let gamma = dot(s, yv) / dot(yv, yv);
            q.iter_mut().for_each(|qk| *qk *= gamma);
        }
        for ((s, yv, rho), a) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(yv, &q);
            q.iter_mut().zip(s).for_each(|(qk, sk)| *qk += (a - b) * sk);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            dir = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
            hist.clear();
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial: Vec<f64> = params.iter().zip(&dir).map(|(w, d)| w + t * d).collect();
            let (ft, gt) = eval(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * t * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            t *= 0.5;
        }
        let Some((next, fn_, gn)) = accepted else { break };
        let s: Vec<f64> = next.iter().zip(params.iter()).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &yv);
        if sy > 1e-12 {
            if hist.len() == MEMORY {
                hist.remove(0);
            }
            hist.push((s, yv, 1.0 / sy));
        }
        let improvement = f - fn_;
        *params = next;
        f = fn_;
        g = gn;
        if improvement.abs() < 1e-12 * f.abs().max(1.0) {
            break;
        }
    }
}

pub fn train_mlp(data: &Dataset, p: &MlpParams, seed: u64) -> Result<MlpModel> {
    p.validate()?;
    data.validate()?;
    let scaler = Standardizer::fit(&data.x);
    let x = scaler.transform(&data.x);
    let mut sizes = vec![x.n_cols];
    sizes.extend(&p.hidden_layers);
    sizes.push(1);
    let mut params = glorot_init(&sizes, &mut rng::derive(seed, &[STREAM_INIT]));
    let net = Net {
        sizes: &sizes,
        layout: layout(&sizes),
        activation: p.activation,
    };
    match p.solver {
        Solver::Adam => adam(&net, &mut params, &x, &data.y, p, seed),
        Solver::Lbfgs => lbfgs(&net, &mut params, &x, &data.y, p),
    }
    if params.iter().any(|w| !w.is_finite()) {
        return Err(OdrError::Model("mlp training diverged".into()));
    }
    Ok(MlpModel {
        scaler,
        activation: p.activation,
        sizes,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn xor_like(n: usize) -> Dataset {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)])
            .collect();
        let y = rows.iter().map(|v| u8::from(v[0] * v[1] > 0.0)).collect();
        Dataset::unnamed(Matrix::from_rows(&rows), y)
    }

    #[test]
    fn backprop_matches_finite_differences() {
        for activation in [Activation::Relu, Activation::Tanh, Activation::Logistic] {
            let data = xor_like(30);
            let sizes = vec![2, 5, 3, 1];
            let net = Net {
                sizes: &sizes,
                layout: layout(&sizes),
                activation,
            };
            let params = glorot_init(&sizes, &mut rng::derive(1, &[]));
            let rows: Vec<usize> = (0..30).collect();
            let (_, g) = net.objective(&params, &data.x, &data.y, &rows, 0.01);
            let e = 1e-6;
            for k in 0..params.len() {
                let mut hi = params.clone();
                let mut lo = params.clone();
                hi[k] += e;
                lo[k] -= e;
                let fd = (net.objective(&hi, &data.x, &data.y, &rows, 0.01).0
                    - net.objective(&lo, &data.x, &data.y, &rows, 0.01).0)
                    / (2.0 * e);
                let scale = g[k].abs().max(fd.abs()).max(1e-6);
                assert!((g[k] - fd).abs() / scale < 1e-4, "{activation:?} param {k}: {} vs {fd}", g[k]);
            }
        }
    }

    #[test]
    fn both_solvers_learn_a_nonlinear_boundary() {
        let data = xor_like(400);
        for solver in [Solver::Adam, Solver::Lbfgs] {
            let p = MlpParams {
                hidden_layers: vec![16],
                solver,
                learning_rate: 0.01,
                batch_size: 50,
                max_iter: if solver == Solver::Adam { 200 } else { 300 },
                ..MlpParams::default()
            };
            let m = train_mlp(&data, &p, 0).unwrap();
            let correct = (0..data.len())
                .filter(|&i| (m.predict_row(data.x.row(i)) > 0.5) == (data.y[i] == 1))
                .count();
            assert!(correct as f64 / data.len() as f64 > 0.9, "{solver:?}: {correct}");
        }
    }

    #[test]
    fn training_is_thread_count_independent() {
        let data = xor_like(300);
        let p = MlpParams {
            max_iter: 3,
            ..MlpParams::default()
        };
        let fit = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| train_mlp(&data, &p, 7).unwrap())
        };
        assert_eq!(fit(1), fit(4));
    }
}
