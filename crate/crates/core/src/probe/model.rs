use rand::Rng;
use serde::{Deserialize, Serialize};

use super::ClassifierKind;

/// Classifier parameters kept in one flat vector so the optimizer and
/// gradient checks can treat every architecture alike.
///
/// Layout, all row-major:
/// * logistic regression: `W[c×d]`, `b[c]`
/// * MLP: `W1[h×d]`, `b1[h]`, `W2[c×h]`, `b2[c]`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub kind: ClassifierKind,
    pub inputs: usize,
    pub classes: usize,
    /// Hidden width; 0 for logistic regression.
    pub hidden: usize,
    pub params: Vec<f64>,
}

impl Model {
    /// Zero weights for logistic regression. The MLP hidden layer gets
    /// Kaiming-uniform weights drawn from `rng`; its output layer starts at zero.
    pub fn init<R: Rng>(kind: ClassifierKind, inputs: usize, classes: usize, hidden: usize, rng: &mut R) -> Self {
        match kind {
            ClassifierKind::LogisticRegression => Model {
                kind,
                inputs,
                classes,
                hidden: 0,
                params: vec![0.0; classes * inputs + classes],
            },
            ClassifierKind::Mlp => {
                let bound = (6.0 / inputs as f64).sqrt();
                let mut params = Vec::with_capacity(hidden * inputs + hidden + classes * hidden + classes);
                params.extend((0..hidden * inputs).map(|_| rng.random_range(-bound..bound)));
                params.resize(params.len() + hidden + classes * hidden + classes, 0.0);
                Model {
                    kind,
                    inputs,
                    classes,
                    hidden,
                    params,
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    /// Unnormalized class scores for one input row.
    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        let mut hidden = Vec::new();
        self.forward(x, &mut hidden)
    }

    fn forward(&self, x: &[f64], hidden: &mut Vec<f64>) -> Vec<f64> {
        let (d, c, h) = (self.inputs, self.classes, self.hidden);
        let p = &self.params;
        match self.kind {
            ClassifierKind::LogisticRegression => affine(&p[..c * d], &p[c * d..c * d + c], x),
            ClassifierKind::Mlp => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(c * h);
                *hidden = affine(w1, b1, x);
                hidden.iter_mut().for_each(|v| *v = v.max(0.0));
                affine(w2, b2, hidden)
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Mean cross-entropy over the rows `xs[i]` with targets `ys[i]`, and
    /// its gradient with respect to `params`.
    pub fn loss_and_gradient(&self, xs: &[&[f64]], ys: &[usize]) -> (f64, Vec<f64>) {
        let (d, c, h) = (self.inputs, self.classes, self.hidden);
        let n = xs.len() as f64;
        let mut grad = vec![0.0; self.params.len()];
        let mut loss = 0.0;
        let mut hidden = Vec::new();
        for (x, &y) in xs.iter().zip(ys) {
            let logits = self.forward(x, &mut hidden);
            let probs = softmax(&logits);
            loss -= probs[y].max(f64::MIN_POSITIVE).ln();
            // d(loss)/d(logits) = (p - onehot) / n
            let delta: Vec<f64> = probs
                .iter()
                .enumerate()
                .map(|(k, p)| (p - if k == y { 1.0 } else { 0.0 }) / n)
                .collect();
            match self.kind {
                ClassifierKind::LogisticRegression => {
                    let (gw, gb) = grad.split_at_mut(c * d);
                    accumulate_affine(gw, gb, &delta, x);
                }
                ClassifierKind::Mlp => {
                    let w2 = &self.params[h * d + h..h * d + h + c * h];
                    let mut dh = vec![0.0; h];
                    for (k, dk) in delta.iter().enumerate() {
                        for (j, dj) in dh.iter_mut().enumerate() {
                            *dj += dk * w2[k * h + j];
                        }
                    }
                    for (dj, hj) in dh.iter_mut().zip(&hidden) {
                        if *hj <= 0.0 {
                            *dj = 0.0;
                        }
                    }
                    let (g1, rest) = grad.split_at_mut(h * d);
                    let (gb1, rest) = rest.split_at_mut(h);
                    let (g2, gb2) = rest.split_at_mut(c * h);
                    accumulate_affine(g2, gb2, &delta, &hidden);
                    accumulate_affine(g1, gb1, &dh, x);
                }
            }
        }
        (loss / n, grad)
    }
}

/// `W·x + b` for row-major `W[out×in]`.
fn affine(w: &[f64], b: &[f64], x: &[f64]) -> Vec<f64> {
    b.iter()
        .enumerate()
        .map(|(k, bk)| {
            let row = &w[k * x.len()..(k + 1) * x.len()];
            bk + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
        })
        .collect()
}

/// Adds the gradient of an affine map given the upstream `delta`.
fn accumulate_affine(gw: &mut [f64], gb: &mut [f64], delta: &[f64], x: &[f64]) {
    let d = x.len();
    for (k, dk) in delta.iter().enumerate() {
        gb[k] += dk;
        if *dk == 0.0 {
            continue;
        }
        for (g, xi) in gw[k * d..(k + 1) * d].iter_mut().zip(x) {
            *g += dk * xi;
        }
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Decoupled weight decay Adam, applied to every parameter.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamW {
    pub fn new(param_count: usize, learning_rate: f64, weight_decay: f64) -> Self {
        AdamW {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay,
            step: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.step += 1;
        let bias1 = 1.0 - self.beta1.powi(self.step);
        let bias2 = 1.0 - self.beta2.powi(self.step);
        for i in 0..params.len() {
            params[i] -= self.learning_rate * self.weight_decay * params[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}
