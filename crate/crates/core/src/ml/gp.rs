//! Exact Gaussian process regression (posterior mean only).

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::kernel::KernelParams;
use super::linalg::Cholesky;
use super::{check_rows, MlError, Rows};

/// Largest diagonal jitter tried before giving up on the factorization.
pub const MAX_JITTER: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub kernel: KernelParams,
    /// Training sets larger than this are subsampled without replacement.
    pub max_points: usize,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            kernel: KernelParams::reference_exponential(),
            max_points: 2000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianProcess {
    pub inputs: Vec<Vec<f64>>,
    /// `(K + noise^2 I)^-1 y`.
    pub weights: Vec<f64>,
    pub kernel: KernelParams,
    /// Diagonal jitter that was needed on top of the noise term.
    pub jitter: f64,
}

impl GaussianProcess {
    pub fn fit(x: &Rows, y: &[f64], cfg: &GpConfig) -> Result<Self, MlError> {
        check_rows(x, y)?;
        cfg.kernel.validate()?;
        if x.is_empty() {
            return Err(MlError::TooFewSamples { needed: 1, have: 0 });
        }
        if cfg.max_points == 0 {
            return Err(MlError::InvalidParameter("max_points must be >= 1".into()));
        }
        let (xs, ys): (Vec<Vec<f64>>, Vec<f64>) = if x.len() > cfg.max_points {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut idx = sample(&mut rng, x.len(), cfg.max_points).into_vec();
            idx.sort_unstable();
            idx.iter().map(|&i| (x[i].clone(), y[i])).unzip()
        } else {
            (x.to_vec(), y.to_vec())
        };
        let n = xs.len();
        let k = kernel_matrix(&xs, &cfg.kernel);
        let noise = cfg.kernel.noise_sigma * cfg.kernel.noise_sigma;
        let mut jitter = 0.0;
        loop {
            let mut a = k.clone();
            for i in 0..n {
                a[i * n + i] += noise + jitter;
            }
            if let Some(ch) = Cholesky::factor(&a, n) {
                let weights = ch.solve(&ys);
                return Ok(GaussianProcess {
                    inputs: xs,
                    weights,
                    kernel: cfg.kernel,
                    jitter,
                });
            }
            jitter = if jitter == 0.0 { 1e-10 } else { jitter * 10.0 };
            if jitter > MAX_JITTER {
                return Err(MlError::FactorizationFailed);
            }
        }
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.inputs
            .iter()
            .zip(&self.weights)
            .map(|(xi, w)| w * self.kernel.eval_unchecked(xi, row))
            .sum()
    }
}

/// Dense symmetric kernel matrix, row-major.
pub fn kernel_matrix(x: &Rows, kernel: &KernelParams) -> Vec<f64> {
    let n = x.len();
    let mut k = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let v = kernel.eval_unchecked(&x[i], &x[j]);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
    }
    k
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::Rng;

    fn data(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let y = x.iter().map(|r| r[0] * r[1] + rng.random_range(-0.1..0.1)).collect();
        (x, y)
    }

    #[test]
    fn matches_dense_inverse_oracle() {
        for seed in 0..8 {
            let n = 3 + 2 * seed as usize;
            let (x, y) = data(seed, n);
            let kernel = KernelParams::reference_exponential();
            let gp = GaussianProcess::fit(&x, &y, &GpConfig { kernel, ..GpConfig::default() }).unwrap();
            assert_eq!(gp.jitter, 0.0);
            let noise = kernel.noise_sigma * kernel.noise_sigma;
            let k = DMatrix::from_fn(n, n, |i, j| {
                kernel.eval(&x[i], &x[j]).unwrap() + if i == j { noise } else { 0.0 }
            });
            let w = k.try_inverse().unwrap() * DVector::from_vec(y.clone());
            let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
            for _ in 0..20 {
                let q = [rng.random_range(-2.5..2.5), rng.random_range(-2.5..2.5)];
                let want: f64 = (0..n).map(|i| w[i] * kernel.eval(&x[i], &q).unwrap()).sum();
                assert!((gp.predict(&q) - want).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn single_point_closed_form() {
        let kernel = KernelParams::exponential(4.6873, 0.7051, 0.3);
        let gp = GaussianProcess::fit(&[vec![0.2, -0.4]], &[3.0], &GpConfig { kernel, ..GpConfig::default() })
            .unwrap();
        let sf2 = 4.6873f64 * 4.6873;
        let want = 3.0 * sf2 / (sf2 + 0.09);
        assert!((gp.predict(&[0.2, -0.4]) - want).abs() < 1e-12);
    }

    #[test]
    fn near_noiseless_interpolates() {
        let (x, y) = data(4, 30);
        let kernel = KernelParams::exponential(1.0, 1.0, 1e-6);
        let gp = GaussianProcess::fit(&x, &y, &GpConfig { kernel, ..GpConfig::default() }).unwrap();
        for (r, v) in x.iter().zip(&y) {
            assert!((gp.predict(r) - v).abs() < 1e-3);
        }
    }

    #[test]
    fn subsampling_is_seeded() {
        let (x, y) = data(9, 50);
        let cfg = GpConfig {
            max_points: 20,
            seed: 7,
            ..GpConfig::default()
        };
        let a = GaussianProcess::fit(&x, &y, &cfg).unwrap();
        let b = GaussianProcess::fit(&x, &y, &cfg).unwrap();
        assert_eq!(a.inputs.len(), 20);
        assert_eq!(a, b);
        let c = GaussianProcess::fit(&x, &y, &GpConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.inputs, c.inputs);
    }

    #[test]
    fn duplicate_points_need_noise_or_jitter() {
        let x = vec![vec![1.0, 1.0]; 5];
        let y = vec![2.0; 5];
        let kernel = KernelParams::exponential(1.0, 1.0, 1e-9);
        let gp = GaussianProcess::fit(&x, &y, &GpConfig { kernel, ..GpConfig::default() }).unwrap();
        assert!(gp.jitter > 0.0);
        assert!((gp.predict(&[1.0, 1.0]) - 2.0).abs() < 1e-3);
    }

    proptest! {
        #[test]
        fn kernel_matrix_symmetric_and_spd(
            pts in prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..25),
            sf in 0.1f64..5.0, sl in 0.1f64..3.0,
        ) {
            let x: Vec<Vec<f64>> = pts.iter().map(|p| vec![p.0, p.1]).collect();
            let kernel = KernelParams::exponential(sf, sl, 0.1);
            let n = x.len();
            let k = kernel_matrix(&x, &kernel);
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(k[i * n + j], k[j * n + i]);
                }
            }
            let y = vec![0.0; n];
            let cfg = GpConfig { kernel, ..GpConfig::default() };
            prop_assert!(GaussianProcess::fit(&x, &y, &cfg).is_ok());
        }
    }
}
