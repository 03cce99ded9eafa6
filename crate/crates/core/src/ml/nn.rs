//! Single-hidden-layer ReLU network with a linear output, trained on mean
//! squared error by mini-batch SGD with momentum and early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{check_rows, MlError, Rows};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NnConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    /// Start with `W2 = 0`, `b2 = 0`.
    pub zero_output_init: bool,
    pub seed: u64,
}

impl Default for NnConfig {
    fn default() -> Self {
        NnConfig {
            hidden: 100,
            epochs: 400,
            lr: 1e-3,
            momentum: 0.9,
            batch_size: 32,
            patience: 20,
            validation_fraction: 0.15,
            zero_output_init: false,
            seed: 0,
        }
    }
}

impl NnConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        if self.hidden == 0 {
            return Err(MlError::InvalidParameter("hidden must be >= 1".into()));
        }
        if self.batch_size == 0 {
            return Err(MlError::InvalidParameter("batch_size must be >= 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(MlError::InvalidParameter("lr must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(MlError::InvalidParameter("momentum must be in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(MlError::InvalidParameter(
                "validation_fraction must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub inputs: usize,
    pub hidden: usize,
    /// `hidden x inputs`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    /// `1 x hidden`.
    pub w2: Vec<f64>,
    pub b2: f64,
}

/// Gradient of the loss, laid out like [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Gradient {
    fn zeros(inputs: usize, hidden: usize) -> Self {
        Gradient {
            w1: vec![0.0; inputs * hidden],
            b1: vec![0.0; hidden],
            w2: vec![0.0; hidden],
            b2: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NnFit {
    pub model: Mlp,
    /// MSE on the held-out validation part at the kept weights, or the
    /// training MSE when no validation part was used.
    pub validation_loss: f64,
    pub epochs_run: usize,
}

impl Mlp {
    pub fn init(inputs: usize, hidden: usize, zero_output: bool, rng: &mut ChaCha8Rng) -> Self {
        let he = Normal::new(0.0, (2.0 / inputs as f64).sqrt()).unwrap();
        let out = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).unwrap();
        let w1 = (0..inputs * hidden).map(|_| he.sample(rng)).collect();
        let w2 = if zero_output {
            vec![0.0; hidden]
        } else {
            (0..hidden).map(|_| out.sample(rng)).collect()
        };
        Mlp {
            inputs,
            hidden,
            w1,
            b1: vec![0.0; hidden],
            w2,
            b2: 0.0,
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut out = self.b2;
        for h in 0..self.hidden {
            let w = &self.w1[h * self.inputs..(h + 1) * self.inputs];
            let z = self.b1[h] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
            if z > 0.0 {
                out += self.w2[h] * z;
            }
        }
        out
    }

    /// Mean squared error over the selected rows and its gradient.
    pub fn loss_and_grad(&self, x: &Rows, y: &[f64], idx: &[usize]) -> (f64, Gradient) {
        let mut g = Gradient::zeros(self.inputs, self.hidden);
        let mut loss = 0.0;
        let mut act = vec![0.0; self.hidden];
        let m = idx.len() as f64;
        for &i in idx {
            let row = &x[i];
            let mut out = self.b2;
            for h in 0..self.hidden {
                let w = &self.w1[h * self.inputs..(h + 1) * self.inputs];
                let z = self.b1[h] + w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                act[h] = z.max(0.0);
                out += self.w2[h] * act[h];
            }
            let err = out - y[i];
            loss += err * err;
            let d_out = 2.0 * err / m;
            g.b2 += d_out;
            for h in 0..self.hidden {
                g.w2[h] += d_out * act[h];
                if act[h] > 0.0 {
                    let d_h = d_out * self.w2[h];
                    g.b1[h] += d_h;
                    for (k, v) in row.iter().enumerate() {
                        g.w1[h * self.inputs + k] += d_h * v;
                    }
                }
            }
        }
        (loss / m, g)
    }

    fn mse(&self, x: &Rows, y: &[f64], idx: &[usize]) -> f64 {
        idx.iter()
            .map(|&i| (self.predict(&x[i]) - y[i]).powi(2))
            .sum::<f64>()
            / idx.len() as f64
    }

    pub fn fit(x: &Rows, y: &[f64], cfg: &NnConfig) -> Result<NnFit, MlError> {
        let dim = check_rows(x, y)?;
        cfg.validate()?;
        if x.is_empty() {
            return Err(MlError::TooFewSamples { needed: 1, have: 0 });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut order: Vec<usize> = (0..x.len()).collect();
        order.shuffle(&mut rng);
        let n_val = (cfg.validation_fraction * x.len() as f64).round() as usize;
        let (val, train) = if n_val >= 1 && n_val < x.len() {
            let (v, t) = order.split_at(n_val);
            (v.to_vec(), t.to_vec())
        } else {
            (Vec::new(), order)
        };
        let mut train = train;

        let mut model = Mlp::init(dim, cfg.hidden, cfg.zero_output_init, &mut rng);
        let mut vel = Gradient::zeros(dim, cfg.hidden);
        let monitor = |m: &Mlp| {
            if val.is_empty() {
                m.mse(x, y, &train_all(x.len()))
            } else {
                m.mse(x, y, &val)
            }
        };
        let mut best = model.clone();
        let mut best_loss = monitor(&model);
        let mut stale = 0;
        let mut epochs_run = 0;
        for _ in 0..cfg.epochs {
            epochs_run += 1;
            train.shuffle(&mut rng);
            for batch in train.chunks(cfg.batch_size) {
                let (loss, g) = model.loss_and_grad(x, y, batch);
                if !loss.is_finite() {
                    return Err(MlError::DivergedLoss);
                }
                step(&mut model, &mut vel, &g, cfg);
            }
            let loss = monitor(&model);
            if !loss.is_finite() {
                return Err(MlError::DivergedLoss);
            }
            if loss < best_loss {
                best_loss = loss;
                best = model.clone();
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.patience {
                    break;
                }
            }
        }
        Ok(NnFit {
            model: best,
            validation_loss: best_loss,
            epochs_run,
        })
    }
}

fn train_all(n: usize) -> Vec<usize> {
    (0..n).collect()
}

fn step(m: &mut Mlp, v: &mut Gradient, g: &Gradient, cfg: &NnConfig) {
    let upd = |p: &mut f64, v: &mut f64, g: f64| {
        *v = cfg.momentum * *v - cfg.lr * g;
        *p += *v;
    };
    for ((p, vv), gg) in m.w1.iter_mut().zip(&mut v.w1).zip(&g.w1) {
        upd(p, vv, *gg);
    }
    for ((p, vv), gg) in m.b1.iter_mut().zip(&mut v.b1).zip(&g.b1) {
        upd(p, vv, *gg);
    }
    for ((p, vv), gg) in m.w2.iter_mut().zip(&mut v.w2).zip(&g.w2) {
        upd(p, vv, *gg);
    }
    upd(&mut m.b2, &mut v.b2, g.b2);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn toy() -> (Vec<Vec<f64>>, Vec<f64>) {
        let x = vec![
            vec![0.3, -1.2],
            vec![-0.7, 0.4],
            vec![1.1, 0.9],
            vec![-0.2, -0.5],
            vec![0.8, 1.7],
        ];
        let y = vec![1.0, -0.5, 2.0, 0.1, 0.7];
        (x, y)
    }

    #[test]
    fn gradient_matches_central_differences() {
        let (x, y) = toy();
        let idx: Vec<usize> = (0..5).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut m = Mlp::init(2, 7, false, &mut rng);
        for b in m.b1.iter_mut() {
            *b = rng.random_range(-0.5..0.5);
        }
        m.b2 = 0.3;
        let (_, g) = m.loss_and_grad(&x, &y, &idx);
        let h = 1e-5;
        let loss = |m: &Mlp| m.loss_and_grad(&x, &y, &idx).0;
        let mut worst: f64 = 0.0;
        let mut check = |analytic: f64, plus: f64, minus: f64| {
            let numeric = (plus - minus) / (2.0 * h);
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        };
        for k in 0..m.w1.len() {
            let (mut p, mut q) = (m.clone(), m.clone());
            p.w1[k] += h;
            q.w1[k] -= h;
            check(g.w1[k], loss(&p), loss(&q));
        }
        for k in 0..m.hidden {
            let (mut p, mut q) = (m.clone(), m.clone());
            p.b1[k] += h;
            q.b1[k] -= h;
            check(g.b1[k], loss(&p), loss(&q));
            let (mut p, mut q) = (m.clone(), m.clone());
            p.w2[k] += h;
            q.w2[k] -= h;
            check(g.w2[k], loss(&p), loss(&q));
        }
        let (mut p, mut q) = (m.clone(), m.clone());
        p.b2 += h;
        q.b2 -= h;
        check(g.b2, loss(&p), loss(&q));
        assert!(worst < 1e-4, "max relative error {worst}");
    }

    #[test]
    fn zero_output_layer_predicts_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut m = Mlp::init(2, 100, true, &mut rng);
        m.b2 = 1.25;
        for _ in 0..20 {
            let q = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            assert_eq!(m.predict(&q), 1.25);
        }
    }

    #[test]
    fn learns_a_constant() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x: Vec<Vec<f64>> = (0..64)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y = vec![0.8; 64];
        let cfg = NnConfig {
            epochs: 2000,
            patience: 2000,
            lr: 1e-2,
            ..NnConfig::default()
        };
        let fit = Mlp::fit(&x, &y, &cfg).unwrap();
        assert!(fit.validation_loss < 1e-4, "{}", fit.validation_loss);
        for r in &x {
            assert!((fit.model.predict(r) - 0.8).abs() < 3e-2);
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let (x, y) = toy();
        let cfg = NnConfig {
            epochs: 30,
            hidden: 10,
            seed: 9,
            ..NnConfig::default()
        };
        assert_eq!(Mlp::fit(&x, &y, &cfg).unwrap(), Mlp::fit(&x, &y, &cfg).unwrap());
    }

    #[test]
    fn diverging_lr_reported() {
        let (x, y) = toy();
        let y: Vec<f64> = y.iter().map(|v| v * 1e6).collect();
        let cfg = NnConfig {
            lr: 10.0,
            epochs: 200,
            patience: 200,
            ..NnConfig::default()
        };
        assert_eq!(Mlp::fit(&x, &y, &cfg), Err(MlError::DivergedLoss));
    }
}
