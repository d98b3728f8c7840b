//! Full-batch gradient-descent logistic regression over sparse rows.
//!
//! The binary model backs the politics classifier; the multinomial model
//! backs the embedding probe. Both minimize mean log loss plus
//! `l2 / 2 * |w|^2` (bias unregularized).

use serde::{Deserialize, Serialize};

pub type SparseRow = Vec<(usize, f64)>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GdOptions {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
}

impl Default for GdOptions {
    fn default() -> Self {
        Self {
            learning_rate: 1.0,
            epochs: 300,
            l2: 1e-4,
        }
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn dot(row: &[(usize, f64)], w: &[f64]) -> f64 {
    row.iter().map(|&(j, x)| w[j] * x).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

impl BinaryModel {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
        }
    }

    pub fn probability(&self, row: &[(usize, f64)]) -> f64 {
        sigmoid(dot(row, &self.weights) + self.bias)
    }

    /// Mean regularized log loss and its gradient `(d/dw, d/db)`.
    pub fn loss_and_grad(&self, rows: &[SparseRow], labels: &[bool], l2: f64) -> (f64, Vec<f64>, f64) {
        let n = rows.len().max(1) as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = 0.0;
        let mut loss = 0.0;
        for (row, &y) in rows.iter().zip(labels) {
            let z = dot(row, &self.weights) + self.bias;
            let t = if y { 1.0 } else { 0.0 };
            // log(1 + e^z) - t z, computed stably
            loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - t * z;
            let r = sigmoid(z) - t;
            for &(j, x) in row {
                gw[j] += r * x;
            }
            gb += r;
        }
        let reg: f64 = self.weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            *g = *g / n + l2 * w;
        }
        (loss / n + reg, gw, gb / n)
    }

    pub fn fit(rows: &[SparseRow], labels: &[bool], dim: usize, opts: &GdOptions) -> Self {
        let mut model = Self::zeros(dim);
        for _ in 0..opts.epochs {
            let (_, gw, gb) = model.loss_and_grad(rows, labels, opts.l2);
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= opts.learning_rate * g;
            }
            model.bias -= opts.learning_rate * gb;
        }
        model
    }
}

/// `classes x dim` weights, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxModel {
    pub classes: usize,
    pub dim: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxModel {
    pub fn zeros(classes: usize, dim: usize) -> Self {
        Self {
            classes,
            dim,
            weights: vec![0.0; classes * dim],
            bias: vec![0.0; classes],
        }
    }

    pub fn logits(&self, row: &[(usize, f64)]) -> Vec<f64> {
        (0..self.classes)
            .map(|c| dot(row, &self.weights[c * self.dim..(c + 1) * self.dim]) + self.bias[c])
            .collect()
    }

    pub fn predict(&self, row: &[(usize, f64)]) -> usize {
        let logits = self.logits(row);
        let mut best = 0;
        for (c, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = c;
            }
        }
        best
    }

    pub fn loss_and_grad(&self, rows: &[SparseRow], labels: &[usize], l2: f64) -> (f64, Vec<f64>, Vec<f64>) {
        let n = rows.len().max(1) as f64;
        let mut gw = vec![0.0; self.weights.len()];
        let mut gb = vec![0.0; self.classes];
        let mut loss = 0.0;
        for (row, &y) in rows.iter().zip(labels) {
            let probs = log_softmax(&self.logits(row));
            loss -= probs[y];
            for c in 0..self.classes {
                let r = probs[c].exp() - if c == y { 1.0 } else { 0.0 };
                for &(j, x) in row {
                    gw[c * self.dim + j] += r * x;
                }
                gb[c] += r;
            }
        }
        let reg: f64 = self.weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
        for (g, w) in gw.iter_mut().zip(&self.weights) {
            *g = *g / n + l2 * w;
        }
        for g in gb.iter_mut() {
            *g /= n;
        }
        (loss / n + reg, gw, gb)
    }

    pub fn fit(rows: &[SparseRow], labels: &[usize], classes: usize, dim: usize, opts: &GdOptions) -> Self {
        let mut model = Self::zeros(classes, dim);
        for _ in 0..opts.epochs {
            let (_, gw, gb) = model.loss_and_grad(rows, labels, opts.l2);
            for (w, g) in model.weights.iter_mut().zip(&gw) {
                *w -= opts.learning_rate * g;
            }
            for (b, g) in model.bias.iter_mut().zip(&gb) {
                *b -= opts.learning_rate * g;
            }
        }
        model
    }
}

/// Numerically stable log-softmax.
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&v| v - lse).collect()
}

pub fn dense_row(values: &[f64]) -> SparseRow {
    values.iter().copied().enumerate().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_problem(seed: u64, n: usize, dim: usize) -> (Vec<SparseRow>, Vec<bool>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let rows: Vec<SparseRow> = (0..n)
            .map(|_| {
                let mut row = SparseRow::new();
                for j in 0..dim {
                    if rng.random_bool(0.6) {
                        row.push((j, rng.random_range(-1.0..1.0)));
                    }
                }
                row
            })
            .collect();
        let labels = (0..n).map(|_| rng.random_bool(0.5)).collect();
        (rows, labels)
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
    }

    #[test]
    fn binary_gradient_matches_central_differences() {
        let dim = 10;
        let (rows, labels) = random_problem(5, 30, dim);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let model = BinaryModel {
            weights: (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect(),
            bias: 0.3,
        };
        let l2 = 0.01;
        let (_, gw, gb) = model.loss_and_grad(&rows, &labels, l2);
        let h = 1e-5;
        for j in 0..dim {
            let mut plus = model.clone();
            plus.weights[j] += h;
            let mut minus = model.clone();
            minus.weights[j] -= h;
            let fd = (plus.loss_and_grad(&rows, &labels, l2).0 - minus.loss_and_grad(&rows, &labels, l2).0) / (2.0 * h);
            assert!(rel_err(gw[j], fd) < 1e-6, "w{j}: {} vs {fd}", gw[j]);
        }
        let mut plus = model.clone();
        plus.bias += h;
        let mut minus = model.clone();
        minus.bias -= h;
        let fd = (plus.loss_and_grad(&rows, &labels, l2).0 - minus.loss_and_grad(&rows, &labels, l2).0) / (2.0 * h);
        assert!(rel_err(gb, fd) < 1e-6);
    }

    #[test]
    fn softmax_gradient_matches_central_differences() {
        let (rows, labels) = random_problem(6, 25, 6);
        let labels: Vec<usize> = labels.iter().enumerate().map(|(i, &b)| (i + b as usize) % 3).collect();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let mut model = SoftmaxModel::zeros(3, 6);
        model.weights.iter_mut().for_each(|w| *w = rng.random_range(-1.0..1.0));
        let (_, gw, _) = model.loss_and_grad(&rows, &labels, 0.02);
        let h = 1e-5;
        for j in 0..model.weights.len() {
            let mut p = model.clone();
            p.weights[j] += h;
            let mut m = model.clone();
            m.weights[j] -= h;
            let fd = (p.loss_and_grad(&rows, &labels, 0.02).0 - m.loss_and_grad(&rows, &labels, 0.02).0) / (2.0 * h);
            assert!(rel_err(gw[j], fd) < 1e-6);
        }
    }

    #[test]
    fn separable_points_are_learned() {
        let rows = vec![vec![(0, 1.0)], vec![(1, 1.0)]];
        let model = BinaryModel::fit(&rows, &[true, false], 2, &GdOptions::default());
        assert!(model.probability(&rows[0]) > 0.5);
        assert!(model.probability(&rows[1]) < 0.5);
    }

    #[test]
    fn log_softmax_is_normalized() {
        let l = log_softmax(&[1000.0, 0.0, -3.0]);
        let total: f64 = l.iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(800.0) <= 1.0);
    }
}
