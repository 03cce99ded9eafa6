//! K-fold cross-validation and hyperparameter search.
//!
//! A candidate is a map from tunable name (see [`Hyperparams::set`](super::Hyperparams::set)) to
//! value, applied on top of a base [`TrainOptions`]. Its score is the mean
//! validation RMSE over the folds, in meters. The lowest score wins and ties
//! go to the candidate evaluated first.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use super::gp::{GaussianProcess, GpConfig};
use super::kernel::KernelParams;
use super::model::{train, TrainOptions, Variant};
use super::normalize::TargetScale;
use super::MlError;
use crate::measurement::LabeledSample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Choice(Vec<f64>),
    Uniform([f64; 2]),
    LogUniform([f64; 2]),
    /// Inclusive integer range.
    IntRange([i64; 2]),
}

impl Domain {
    fn validate(&self, name: &str) -> Result<(), MlError> {
        let bad = |why: &str| Err(MlError::EmptySearchSpace(format!("{name}: {why}")));
        match self {
            Domain::Choice(v) if v.is_empty() => bad("no choices"),
            Domain::Uniform([a, b]) if !(a <= b) => bad("empty interval"),
            Domain::LogUniform([a, b]) if !(*a > 0.0 && a <= b) => bad("needs 0 < lo <= hi"),
            Domain::IntRange([a, b]) if a > b => bad("empty range"),
            _ => Ok(()),
        }
    }

    /// Number of distinct values, when finite.
    fn size(&self) -> Option<usize> {
        match self {
            Domain::Choice(v) => Some(v.len()),
            Domain::IntRange([a, b]) => Some((b - a + 1) as usize),
            _ => None,
        }
    }

    fn value_at(&self, i: usize) -> f64 {
        match self {
            Domain::Choice(v) => v[i],
            Domain::IntRange([a, _]) => (*a + i as i64) as f64,
            _ => unreachable!("continuous domains have no index"),
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.from_unit(rng.random())
    }

    /// Maps `u` in `[0, 1]` onto the domain.
    fn from_unit(&self, u: f64) -> f64 {
        match self {
            Domain::Uniform([a, b]) => a + u * (b - a),
            Domain::LogUniform([a, b]) => (a.ln() + u * (b.ln() - a.ln())).exp(),
            _ => {
                let n = self.size().unwrap();
                self.value_at(((u * n as f64) as usize).min(n - 1))
            }
        }
    }

    fn to_unit(&self, v: f64) -> f64 {
        match self {
            Domain::Uniform([a, b]) if b > a => (v - a) / (b - a),
            Domain::LogUniform([a, b]) if b > a => (v.ln() - a.ln()) / (b.ln() - a.ln()),
            Domain::IntRange([a, b]) if b > a => (v - *a as f64) / (*b - *a) as f64,
            Domain::Choice(c) if c.len() > 1 => {
                c.iter().position(|x| *x == v).unwrap_or(0) as f64 / (c.len() - 1) as f64
            }
            _ => 0.0,
        }
    }

    /// `k` evenly spread values (fewer for small discrete domains).
    fn grid(&self, k: usize) -> Vec<f64> {
        let k = k.max(1);
        match self.size() {
            Some(n) if n <= k => (0..n).map(|i| self.value_at(i)).collect(),
            Some(n) => {
                let mut idx: Vec<usize> = (0..k)
                    .map(|i| if k == 1 { (n - 1) / 2 } else { (i * (n - 1) + (k - 1) / 2) / (k - 1) })
                    .collect();
                idx.dedup();
                idx.into_iter().map(|i| self.value_at(i)).collect()
            }
            None => (0..k)
                .map(|i| self.from_unit(if k == 1 { 0.5 } else { i as f64 / (k - 1) as f64 }))
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSpace {
    pub params: BTreeMap<String, Domain>,
}

impl HyperSpace {
    pub fn new(params: impl IntoIterator<Item = (&'static str, Domain)>) -> Self {
        HyperSpace {
            params: params.into_iter().map(|(k, v)| (k.to_string(), v)).collect(),
        }
    }

    /// Search ranges used when none are configured.
    pub fn default_for(v: Variant) -> Self {
        match v {
            Variant::Tree => Self::new([("min_leaf_size", Domain::IntRange([1, 64]))]),
            Variant::Svr => Self::new([
                ("c", Domain::LogUniform([0.1, 100.0])),
                ("epsilon", Domain::Uniform([0.01, 0.5])),
            ]),
            Variant::Gp => Self::new([("noise_sigma", Domain::LogUniform([0.05, 1.0]))]),
            Variant::Nn => Self::new([("lr", Domain::LogUniform([1e-4, 1e-2]))]),
        }
    }

    fn validate(&self) -> Result<(), MlError> {
        if self.params.is_empty() {
            return Err(MlError::EmptySearchSpace("no tunable parameters".into()));
        }
        self.params.iter().try_for_each(|(k, d)| d.validate(k))
    }

    fn finite_size(&self) -> Option<usize> {
        self.params
            .values()
            .try_fold(1usize, |acc, d| d.size().map(|s| acc.saturating_mul(s)))
    }

    fn decode(&self, mut index: usize) -> Candidate {
        let mut c = Candidate::new();
        for (k, d) in &self.params {
            let s = d.size().unwrap();
            c.insert(k.clone(), d.value_at(index % s));
            index /= s;
        }
        c
    }

    fn to_unit(&self, c: &Candidate) -> Vec<f64> {
        self.params.iter().map(|(k, d)| d.to_unit(c[k])).collect()
    }
}

pub type Candidate = BTreeMap<String, f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchStrategy {
    #[default]
    Random,
    CoarseGrid,
    /// Random warm-up, then proposals minimizing a GP fitted to the scores.
    Surrogate,
}

impl std::str::FromStr for SearchStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(SearchStrategy::Random),
            "coarse-grid" => Ok(SearchStrategy::CoarseGrid),
            "surrogate" => Ok(SearchStrategy::Surrogate),
            _ => Err(format!("unknown search strategy `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub folds: usize,
    pub budget: usize,
    pub strategy: SearchStrategy,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            budget: 50,
            strategy: SearchStrategy::Random,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub candidate: Candidate,
    /// Mean validation RMSE, or infinity when training failed.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvOutcome {
    pub best: TrainOptions,
    pub best_candidate: Candidate,
    pub best_score: f64,
    /// Evaluations in the order they were made.
    pub history: Vec<Evaluation>,
}

/// Validation folds: every index in `0..n` lands in exactly one fold.
pub fn kfold_partition(n: usize, folds: usize, seed: u64) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut out = vec![Vec::new(); folds];
    for (pos, i) in idx.into_iter().enumerate() {
        out[pos % folds].push(i);
    }
    for f in &mut out {
        f.sort_unstable();
    }
    out
}

/// Mean validation RMSE of `opts` over the given folds.
pub fn cv_score(samples: &[LabeledSample], opts: &TrainOptions, folds: &[Vec<usize>]) -> Result<f64, MlError> {
    let per_fold: Vec<Result<f64, MlError>> = folds
        .par_iter()
        .map(|val| {
            let mut in_val = vec![false; samples.len()];
            for &i in val {
                in_val[i] = true;
            }
            let train_part: Vec<LabeledSample> = samples
                .iter()
                .zip(&in_val)
                .filter(|(_, v)| !**v)
                .map(|(s, _)| *s)
                .collect();
            let model = train(&train_part, opts)?;
            let se: f64 = val
                .iter()
                .map(|&i| {
                    let s = &samples[i];
                    (model.predict(s.rtt_raw, s.mean_rssi) - s.true_distance).powi(2)
                })
                .sum();
            Ok((se / val.len() as f64).sqrt())
        })
        .collect();
    let mut total = 0.0;
    for r in per_fold {
        total += r?;
    }
    Ok(total / folds.len() as f64)
}

pub fn cross_validate(
    samples: &[LabeledSample],
    base: &TrainOptions,
    space: &HyperSpace,
    cfg: &CvConfig,
) -> Result<CvOutcome, MlError> {
    space.validate()?;
    if cfg.budget == 0 {
        return Err(MlError::EmptySearchSpace("budget must be >= 1".into()));
    }
    if cfg.folds < 2 {
        return Err(MlError::InvalidParameter("folds must be >= 2".into()));
    }
    if samples.len() < 2 * cfg.folds {
        return Err(MlError::TooFewSamples {
            needed: 2 * cfg.folds,
            have: samples.len(),
        });
    }
    // validate names up front so a typo is an error, not a column of infinities
    let mut probe = base.hyperparams;
    for k in space.params.keys() {
        probe.set(k, 1.0)?;
    }
    let folds = kfold_partition(samples.len(), cfg.folds, cfg.seed);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_5eed);
    let evaluate = |c: &Candidate| -> Result<f64, MlError> {
        let mut hp = base.hyperparams;
        for (k, v) in c {
            hp.set(k, *v)?;
        }
        let opts = TrainOptions {
            hyperparams: hp,
            ..*base
        };
        cv_score(samples, &opts, &folds)
    };

    let history: Vec<(Candidate, Result<f64, MlError>)> = match cfg.strategy {
        SearchStrategy::Random | SearchStrategy::CoarseGrid => {
            let cands = if cfg.strategy == SearchStrategy::Random {
                random_candidates(space, cfg.budget, &mut rng)
            } else {
                grid_candidates(space, cfg.budget)
            };
            cands
                .into_par_iter()
                .map(|c| {
                    let r = evaluate(&c);
                    (c, r)
                })
                .collect()
        }
        SearchStrategy::Surrogate => {
            let warm = (cfg.budget / 5).clamp(1, 10).min(cfg.budget);
            let mut hist: Vec<(Candidate, Result<f64, MlError>)> = random_candidates(space, warm, &mut rng)
                .into_par_iter()
                .map(|c| {
                    let r = evaluate(&c);
                    (c, r)
                })
                .collect();
            while hist.len() < cfg.budget {
                let c = propose(space, &hist, &mut rng);
                let r = evaluate(&c);
                hist.push((c, r));
            }
            hist
        }
    };

    let mut first_err = None;
    let mut evals = Vec::with_capacity(history.len());
    for (c, r) in history {
        let score = match r {
            Ok(s) if s.is_finite() => s,
            Ok(_) => f64::INFINITY,
            Err(e) => {
                first_err.get_or_insert(e);
                f64::INFINITY
            }
        };
        evals.push(Evaluation { candidate: c, score });
    }
    let mut best: Option<&Evaluation> = None;
    for e in &evals {
        if e.score.is_finite() && best.is_none_or(|b| e.score < b.score) {
            best = Some(e);
        }
    }
    let Some(best) = best.cloned() else {
        return Err(first_err.unwrap_or(MlError::EmptySearchSpace("no candidate trained".into())));
    };
    let mut hp = base.hyperparams;
    for (k, v) in &best.candidate {
        hp.set(k, *v)?;
    }
    Ok(CvOutcome {
        best: TrainOptions {
            hyperparams: hp,
            ..*base
        },
        best_candidate: best.candidate,
        best_score: best.score,
        history: evals,
    })
}

fn random_candidates(space: &HyperSpace, budget: usize, rng: &mut ChaCha8Rng) -> Vec<Candidate> {
    match space.finite_size() {
        // finite spaces are sampled without replacement
        Some(n) if n <= 1 << 20 => {
            let k = budget.min(n);
            rand::seq::index::sample(rng, n, k)
                .into_iter()
                .map(|i| space.decode(i))
                .collect()
        }
        _ => (0..budget)
            .map(|_| {
                space
                    .params
                    .iter()
                    .map(|(k, d)| (k.clone(), d.sample(rng)))
                    .collect()
            })
            .collect(),
    }
}

fn grid_candidates(space: &HyperSpace, budget: usize) -> Vec<Candidate> {
    let d = space.params.len() as f64;
    let per_dim = (budget as f64).powf(1.0 / d).floor().max(1.0) as usize;
    let axes: Vec<(String, Vec<f64>)> = space
        .params
        .iter()
        .map(|(k, dom)| (k.clone(), dom.grid(per_dim)))
        .collect();
    let mut out = vec![Candidate::new()];
    for (k, vals) in &axes {
        out = out
            .into_iter()
            .flat_map(|c| {
                vals.iter().map(move |v| {
                    let mut c = c.clone();
                    c.insert(k.clone(), *v);
                    c
                })
            })
            .collect();
    }
    out.truncate(budget);
    out
}

/// Picks the pool point with the lowest GP-mean score among unseen ones.
fn propose(
    space: &HyperSpace,
    hist: &[(Candidate, Result<f64, MlError>)],
    rng: &mut ChaCha8Rng,
) -> Candidate {
    let pool = random_candidates(space, 256, rng);
    let seen: Vec<(Vec<f64>, f64)> = hist
        .iter()
        .filter_map(|(c, r)| match r {
            Ok(s) if s.is_finite() => Some((space.to_unit(c), *s)),
            _ => None,
        })
        .collect();
    let fresh = |c: &Candidate| !hist.iter().any(|(h, _)| h == c);
    if seen.len() < 2 {
        return pool.iter().find(|c| fresh(c)).cloned().unwrap_or_else(|| pool[0].clone());
    }
    let x: Vec<Vec<f64>> = seen.iter().map(|s| s.0.clone()).collect();
    let raw: Vec<f64> = seen.iter().map(|s| s.1).collect();
    let scale = TargetScale::fit(&raw);
    let y: Vec<f64> = raw.iter().map(|v| scale.forward(*v)).collect();
    let kernel = KernelParams {
        sigma_l: 0.3,
        noise_sigma: 0.1,
        ..KernelParams::gaussian()
    };
    let Ok(gp) = GaussianProcess::fit(&x, &y, &GpConfig { kernel, ..GpConfig::default() }) else {
        return pool[0].clone();
    };
    let mut best: Option<(f64, &Candidate)> = None;
    for c in pool.iter().filter(|c| fresh(c)) {
        let m = gp.predict(&space.to_unit(c));
        if best.is_none_or(|b| m < b.0) {
            best = Some((m, c));
        }
    }
    best.map(|b| b.1.clone()).unwrap_or_else(|| pool[0].clone())
}
