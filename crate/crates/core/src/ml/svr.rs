//! Epsilon-insensitive support vector regression.
//!
//! The dual is solved with SMO using second-order working-set selection, in
//! the doubled-variable form: for each sample `i` there is an `alpha_i` with
//! label `+1` and an `alpha*_i` with label `-1`, both boxed in `[0, C]` and
//! tied by `sum(alpha) = sum(alpha*)`. Iteration stops when the maximal KKT
//! violation drops below `tol`.

use serde::{Deserialize, Serialize};

use super::kernel::KernelParams;
use super::{check_rows, MlError, Rows};

const TAU: f64 = 1e-12;
/// Full kernel matrices are precomputed up to this many samples.
const DENSE_LIMIT: usize = 3000;
const CACHE_ROWS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvrConfig {
    pub c: f64,
    pub epsilon: f64,
    pub tol: f64,
    pub max_iter: usize,
    pub kernel: KernelParams,
}

impl Default for SvrConfig {
    fn default() -> Self {
        SvrConfig {
            c: 10.0,
            epsilon: 0.1,
            tol: 1e-3,
            max_iter: 10_000_000,
            kernel: KernelParams::gaussian(),
        }
    }
}

impl SvrConfig {
    pub fn validate(&self) -> Result<(), MlError> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(MlError::InvalidParameter(format!("C must be > 0, got {}", self.c)));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(MlError::InvalidParameter(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if !(self.tol > 0.0) {
            return Err(MlError::InvalidParameter("tol must be > 0".into()));
        }
        if self.kernel.sigma_f <= 0.0 || self.kernel.sigma_l <= 0.0 {
            return Err(MlError::InvalidKernel("sigma_f and sigma_l must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Svr {
    pub support_vectors: Vec<Vec<f64>>,
    /// `alpha_i - alpha*_i` for each support vector, within `[-C, C]`.
    pub coefficients: Vec<f64>,
    pub bias: f64,
    pub kernel: KernelParams,
}

/// Solver diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvrReport {
    pub iterations: usize,
    /// Dual objective `0.5 a'Qa + p'a` at termination.
    pub objective: f64,
    /// Final maximal KKT violation.
    pub violation: f64,
}

impl Svr {
    pub fn fit(x: &Rows, y: &[f64], cfg: &SvrConfig) -> Result<Self, MlError> {
        Self::fit_with_report(x, y, cfg).map(|(m, _)| m)
    }

    pub fn fit_with_report(x: &Rows, y: &[f64], cfg: &SvrConfig) -> Result<(Self, SvrReport), MlError> {
        check_rows(x, y)?;
        cfg.validate()?;
        if x.is_empty() {
            return Err(MlError::TooFewSamples { needed: 1, have: 0 });
        }
        let mut solver = Solver::new(x, y, cfg);
        let report = solver.run()?;
        let n = x.len();
        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for i in 0..n {
            let c = solver.alpha[i] - solver.alpha[i + n];
            if c != 0.0 {
                support_vectors.push(x[i].clone());
                coefficients.push(c);
            }
        }
        let model = Svr {
            support_vectors,
            coefficients,
            bias: -solver.rho(),
            kernel: cfg.kernel,
        };
        Ok((model, report))
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.coefficients)
            .map(|(sv, c)| c * self.kernel.eval_unchecked(sv, row))
            .sum::<f64>()
            + self.bias
    }
}

enum KernelStore {
    Dense(Vec<f64>),
    Cached {
        rows: Vec<Option<Vec<f64>>>,
        order: std::collections::VecDeque<usize>,
    },
}

struct Solver<'a> {
    x: &'a Rows,
    n: usize,
    c: f64,
    tol: f64,
    max_iter: usize,
    kernel: KernelParams,
    store: KernelStore,
    diag: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>,
    p: Vec<f64>,
}

impl<'a> Solver<'a> {
    fn new(x: &'a Rows, y: &[f64], cfg: &SvrConfig) -> Self {
        let n = x.len();
        let kernel = cfg.kernel;
        let store = if n <= DENSE_LIMIT {
            let mut k = vec![0.0; n * n];
            for i in 0..n {
                for j in i..n {
                    let v = kernel.eval_unchecked(&x[i], &x[j]);
                    k[i * n + j] = v;
                    k[j * n + i] = v;
                }
            }
            KernelStore::Dense(k)
        } else {
            KernelStore::Cached {
                rows: vec![None; n],
                order: Default::default(),
            }
        };
        let diag = x.iter().map(|r| kernel.eval_unchecked(r, r)).collect();
        let mut p = Vec::with_capacity(2 * n);
        p.extend(y.iter().map(|v| cfg.epsilon - v));
        p.extend(y.iter().map(|v| cfg.epsilon + v));
        Solver {
            x,
            n,
            c: cfg.c,
            tol: cfg.tol,
            max_iter: cfg.max_iter,
            kernel,
            store,
            diag,
            alpha: vec![0.0; 2 * n],
            grad: p.clone(),
            p,
        }
    }

    #[inline]
    fn sign(&self, t: usize) -> f64 {
        if t < self.n {
            1.0
        } else {
            -1.0
        }
    }

    /// Kernel row of sample `i` (not signed).
    fn row(&mut self, i: usize) -> &[f64] {
        let n = self.n;
        match &mut self.store {
            KernelStore::Dense(k) => &k[i * n..(i + 1) * n],
            KernelStore::Cached { rows, order } => {
                if rows[i].is_none() {
                    if order.len() >= CACHE_ROWS {
                        let old = order.pop_front().unwrap();
                        rows[old] = None;
                    }
                    let xi = &self.x[i];
                    rows[i] = Some(self.x.iter().map(|r| self.kernel.eval_unchecked(xi, r)).collect());
                    order.push_back(i);
                }
                rows[i].as_deref().unwrap()
            }
        }
    }

    fn upper(&self, t: usize) -> bool {
        self.alpha[t] >= self.c
    }

    fn lower(&self, t: usize) -> bool {
        self.alpha[t] <= 0.0
    }

    /// Second-order working set selection. Returns `None` at optimality.
    fn select(&mut self) -> (Option<(usize, usize)>, f64) {
        let n = self.n;
        let mut gmax = f64::NEG_INFINITY;
        let mut gmax2 = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..2 * n {
            if self.sign(t) > 0.0 {
                if !self.upper(t) && -self.grad[t] >= gmax {
                    gmax = -self.grad[t];
                    i_sel = Some(t);
                }
            } else if !self.lower(t) && self.grad[t] >= gmax {
                gmax = self.grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else {
            return (None, 0.0);
        };
        let qd_i = self.diag[i % n];
        let ki: Vec<f64> = self.row(i % n).to_vec();
        let mut j_sel = None;
        let mut obj_min = f64::INFINITY;
        for t in 0..2 * n {
            let yt = self.sign(t);
            let k_it = ki[t % n];
            let quad_raw = qd_i + self.diag[t % n] - 2.0 * k_it;
            let grad_diff = if yt > 0.0 {
                if self.lower(t) {
                    continue;
                }
                gmax2 = gmax2.max(self.grad[t]);
                gmax + self.grad[t]
            } else {
                if self.upper(t) {
                    continue;
                }
                gmax2 = gmax2.max(-self.grad[t]);
                gmax - self.grad[t]
            };
            if grad_diff > 0.0 {
                let quad = if quad_raw > 0.0 { quad_raw } else { TAU };
                let obj = -grad_diff * grad_diff / quad;
                if obj <= obj_min {
                    obj_min = obj;
                    j_sel = Some(t);
                }
            }
        }
        let gap = gmax + gmax2;
        match j_sel {
            Some(j) if gap >= self.tol => (Some((i, j)), gap),
            _ => (None, gap.max(0.0)),
        }
    }

    fn run(&mut self) -> Result<SvrReport, MlError> {
        let n = self.n;
        let c = self.c;
        let mut iter = 0;
        let violation = loop {
            let (sel, gap) = self.select();
            let Some((i, j)) = sel else {
                break gap;
            };
            if iter >= self.max_iter {
                return Err(MlError::NotConverged(self.max_iter));
            }
            iter += 1;
            let (yi, yj) = (self.sign(i), self.sign(j));
            let k_ij = self.row(i % n)[j % n];
            let (old_i, old_j) = (self.alpha[i], self.alpha[j]);
            let (mut ai, mut aj) = (old_i, old_j);
            let kd = self.diag[i % n] + self.diag[j % n];
            if yi != yj {
                // Q_ij = -K_ij
                let mut quad = kd + 2.0 * (yi * yj * k_ij);
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (-self.grad[i] - self.grad[j]) / quad;
                let diff = ai - aj;
                ai += delta;
                aj += delta;
                if diff > 0.0 {
                    if aj < 0.0 {
                        aj = 0.0;
                        ai = diff;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = -diff;
                }
                if diff > 0.0 {
                    if ai > c {
                        ai = c;
                        aj = c - diff;
                    }
                } else if aj > c {
                    aj = c;
                    ai = c + diff;
                }
            } else {
                let mut quad = kd - 2.0 * k_ij;
                if quad <= 0.0 {
                    quad = TAU;
                }
                let delta = (self.grad[i] - self.grad[j]) / quad;
                let sum = ai + aj;
                ai -= delta;
                aj += delta;
                if sum > c {
                    if ai > c {
                        ai = c;
                        aj = sum - c;
                    }
                } else if aj < 0.0 {
                    aj = 0.0;
                    ai = sum;
                }
                if sum > c {
                    if aj > c {
                        aj = c;
                        ai = sum - c;
                    }
                } else if ai < 0.0 {
                    ai = 0.0;
                    aj = sum;
                }
            }
            self.alpha[i] = ai;
            self.alpha[j] = aj;
            let (di, dj) = (ai - old_i, aj - old_j);
            let ri = self.row(i % n).to_vec();
            let rj = self.row(j % n).to_vec();
            for t in 0..2 * n {
                let yt = if t < n { 1.0 } else { -1.0 };
                self.grad[t] += yt * (yi * ri[t % n] * di + yj * rj[t % n] * dj);
            }
        };
        let objective = 0.5
            * self
                .alpha
                .iter()
                .zip(self.grad.iter().zip(&self.p))
                .map(|(a, (g, p))| a * (g + p))
                .sum::<f64>();
        Ok(SvrReport {
            iterations: iter,
            objective,
            violation,
        })
    }

    fn rho(&self) -> f64 {
        let mut ub = f64::INFINITY;
        let mut lb = f64::NEG_INFINITY;
        let mut free = 0usize;
        let mut sum_free = 0.0;
        for t in 0..2 * self.n {
            let y = self.sign(t);
            let yg = y * self.grad[t];
            if self.upper(t) {
                if y < 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else if self.lower(t) {
                if y > 0.0 {
                    ub = ub.min(yg);
                } else {
                    lb = lb.max(yg);
                }
            } else {
                free += 1;
                sum_free += yg;
            }
        }
        if free > 0 {
            sum_free / free as f64
        } else {
            (ub + lb) / 2.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Dual objective in the doubled-variable form, evaluated directly.
    fn dual_objective(x: &Rows, y: &[f64], a: &[f64], cfg: &SvrConfig) -> f64 {
        let n = x.len();
        let s = |t: usize| if t < n { 1.0 } else { -1.0 };
        let mut v = 0.0;
        for t in 0..2 * n {
            for u in 0..2 * n {
                v += 0.5 * a[t] * a[u] * s(t) * s(u) * cfg.kernel.eval_unchecked(&x[t % n], &x[u % n]);
            }
            let p = if t < n { cfg.epsilon - y[t] } else { cfg.epsilon + y[t - n] };
            v += p * a[t];
        }
        v
    }

    /// Accelerated projected gradient on the box intersected with the
    /// equality hyperplane; projection by bisection on the multiplier.
    fn qp_oracle(x: &Rows, y: &[f64], cfg: &SvrConfig) -> f64 {
        let n = x.len();
        let m = 2 * n;
        let s = |t: usize| if t < n { 1.0 } else { -1.0 };
        let mut q = vec![0.0; m * m];
        for t in 0..m {
            for u in 0..m {
                q[t * m + u] = s(t) * s(u) * cfg.kernel.eval_unchecked(&x[t % n], &x[u % n]);
            }
        }
        let p: Vec<f64> = (0..m)
            .map(|t| if t < n { cfg.epsilon - y[t] } else { cfg.epsilon + y[t - n] })
            .collect();
        // Gershgorin bound on the largest eigenvalue.
        let lip = (0..m)
            .map(|t| (0..m).map(|u| q[t * m + u].abs()).sum::<f64>())
            .fold(0.0, f64::max);
        let c = cfg.c;
        let project = |v: &[f64]| -> Vec<f64> {
            let resid = |lam: f64| -> f64 {
                (0..m).map(|t| s(t) * (v[t] - lam * s(t)).clamp(0.0, c)).sum()
            };
            let (mut lo, mut hi) = (-1e6, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if resid(mid) > 0.0 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let lam = 0.5 * (lo + hi);
            (0..m).map(|t| (v[t] - lam * s(t)).clamp(0.0, c)).collect()
        };
        let mut a = vec![0.0; m];
        let mut z = a.clone();
        let mut tk = 1.0f64;
        for _ in 0..20_000 {
            let g: Vec<f64> = (0..m)
                .map(|t| (0..m).map(|u| q[t * m + u] * z[u]).sum::<f64>() + p[t])
                .collect();
            let step: Vec<f64> = (0..m).map(|t| z[t] - g[t] / lip).collect();
            let next = project(&step);
            let tn = (1.0 + (1.0 + 4.0 * tk * tk).sqrt()) / 2.0;
            z = (0..m)
                .map(|t| next[t] + (tk - 1.0) / tn * (next[t] - a[t]))
                .collect();
            a = next;
            tk = tn;
        }
        dual_objective(x, y, &a, cfg)
    }

    fn toy(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)])
            .collect();
        let y = x
            .iter()
            .map(|r| r[0].sin() + 0.5 * r[1] + rng.random_range(-0.3..0.3))
            .collect();
        (x, y)
    }

    #[test]
    fn objective_matches_qp_oracle() {
        for seed in 0..6 {
            let n = 10 + 4 * seed as usize;
            let (x, y) = toy(seed, n);
            let cfg = SvrConfig {
                c: [0.5, 1.0, 10.0][seed as usize % 3],
                ..SvrConfig::default()
            };
            let (_, rep) = Svr::fit_with_report(&x, &y, &cfg).unwrap();
            let oracle = qp_oracle(&x, &y, &cfg);
            assert!(
                (rep.objective - oracle).abs() <= 1e-3,
                "seed {seed}: smo {} vs oracle {oracle}",
                rep.objective
            );
        }
    }

    #[test]
    fn linear_data_inside_tube() {
        let x: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64 / 10.0 - 1.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.3 * r[0] + 0.1).collect();
        let cfg = SvrConfig {
            c: 100.0,
            epsilon: 0.05,
            ..SvrConfig::default()
        };
        let m = Svr::fit(&x, &y, &cfg).unwrap();
        for (r, v) in x.iter().zip(&y) {
            assert!((m.predict(r) - v).abs() <= cfg.epsilon + 1e-3);
        }
    }

    #[test]
    fn duplicated_data_same_function() {
        let (x, y) = toy(11, 25);
        let x2: Vec<Vec<f64>> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<f64> = y.iter().chain(&y).copied().collect();
        let tight = |c| SvrConfig {
            c,
            tol: 1e-9,
            ..SvrConfig::default()
        };
        // Doubling every sample doubles the effective box, so halving C
        // gives the same problem.
        let a = Svr::fit(&x, &y, &tight(2.0)).unwrap();
        let b = Svr::fit(&x2, &y2, &tight(1.0)).unwrap();
        // With a box that never binds the duplicate is the same problem.
        let c = Svr::fit(&x, &y, &tight(1e4)).unwrap();
        let d = Svr::fit(&x2, &y2, &tight(1e4)).unwrap();
        assert!(c.coefficients.iter().all(|v| v.abs() < 1e4));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let q = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            assert!((a.predict(&q) - b.predict(&q)).abs() < 1e-6);
            assert!((c.predict(&q) - d.predict(&q)).abs() < 1e-6);
        }
    }

    #[test]
    fn coefficients_boxed_and_kkt_met() {
        let (x, y) = toy(5, 60);
        let cfg = SvrConfig {
            c: 0.8,
            ..SvrConfig::default()
        };
        let (m, rep) = Svr::fit_with_report(&x, &y, &cfg).unwrap();
        assert!(rep.violation < cfg.tol);
        assert!(m.coefficients.iter().all(|c| c.abs() <= cfg.c + 1e-12));
        let sum: f64 = m.coefficients.iter().sum();
        assert!(sum.abs() < 1e-9);
    }

    #[test]
    fn iteration_cap() {
        let (x, y) = toy(1, 40);
        let cfg = SvrConfig {
            max_iter: 2,
            ..SvrConfig::default()
        };
        assert_eq!(Svr::fit(&x, &y, &cfg), Err(MlError::NotConverged(2)));
    }

    #[test]
    fn bad_config() {
        let (x, y) = toy(1, 5);
        let cfg = SvrConfig {
            c: 0.0,
            ..SvrConfig::default()
        };
        assert!(matches!(Svr::fit(&x, &y, &cfg), Err(MlError::InvalidParameter(_))));
    }
}
