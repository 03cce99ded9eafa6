//! Error statistics, ECDF curves and comparison reports.
//!
//! The ECDF is right-continuous: `F(x) = #{e <= x} / n`. Quantiles use the
//! inverse of that step function (the smallest error `e` with `F(e) >= p`),
//! so every reported statistic is an observed error.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::measurement::{Bandwidth, Dataset, Scenario};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("no errors to summarize")]
    EmptyInput,
    #[error("measurement {0} has no ground truth")]
    NoGroundTruth(usize),
    #[error("non-finite error value")]
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRecord {
    pub estimator: String,
    pub true_distance: f64,
    pub estimated_distance: f64,
    pub abs_error: f64,
    pub scenario: Scenario,
    pub bandwidth: Bandwidth,
}

impl ErrorRecord {
    pub fn new(
        estimator: impl Into<String>,
        true_distance: f64,
        estimated_distance: f64,
        scenario: Scenario,
        bandwidth: Bandwidth,
    ) -> Self {
        ErrorRecord {
            estimator: estimator.into(),
            true_distance,
            estimated_distance,
            abs_error: (estimated_distance - true_distance).abs(),
            scenario,
            bandwidth,
        }
    }
}

/// Distinct sorted error values with the cumulative fraction at each.
#[derive(Debug, Clone, PartialEq)]
pub struct EcdfCurve {
    pub sorted_errors: Vec<f64>,
    pub cumulative: Vec<f64>,
    pub n: usize,
}

pub fn ecdf(errors: &[f64]) -> Result<EcdfCurve, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(EvalError::NonFinite);
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut sorted_errors = Vec::new();
    let mut cumulative = Vec::new();
    for (i, e) in v.iter().enumerate() {
        if i + 1 < n && v[i + 1] == *e {
            continue;
        }
        sorted_errors.push(*e);
        cumulative.push((i + 1) as f64 / n as f64);
    }
    Ok(EcdfCurve {
        sorted_errors,
        cumulative,
        n,
    })
}

impl EcdfCurve {
    pub fn eval(&self, x: f64) -> f64 {
        let k = self.sorted_errors.partition_point(|e| *e <= x);
        if k == 0 {
            0.0
        } else {
            self.cumulative[k - 1]
        }
    }

    /// Smallest observed error whose cumulative fraction reaches `p`.
    pub fn quantile(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        let target = (p * self.n as f64).ceil().max(1.0);
        let k = self
            .cumulative
            .partition_point(|c| (c * self.n as f64).round() < target);
        self.sorted_errors[k.min(self.sorted_errors.len() - 1)]
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }
}

pub fn percentile_below(curve: &EcdfCurve, threshold: f64) -> f64 {
    curve.eval(threshold)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSummary {
    pub estimator: String,
    pub count: usize,
    pub mean: f64,
    pub median: f64,
    pub p75: f64,
    pub p90: f64,
    pub max: f64,
    pub curve: EcdfCurve,
}

impl ErrorSummary {
    pub fn from_errors(estimator: impl Into<String>, errors: &[f64]) -> Result<Self, EvalError> {
        let curve = ecdf(errors)?;
        let mut sorted = errors.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(ErrorSummary {
            estimator: estimator.into(),
            count: errors.len(),
            mean: sorted.iter().sum::<f64>() / errors.len() as f64,
            median: curve.median(),
            p75: curve.quantile(0.75),
            p90: curve.quantile(0.90),
            max: *sorted.last().unwrap(),
            curve,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonReport {
    /// One entry per estimator, ordered by name.
    pub summaries: Vec<ErrorSummary>,
}

pub const SUMMARY_COLUMNS: [&str; 7] = ["estimator", "count", "mean_m", "median_m", "p75_m", "p90_m", "max_m"];

pub fn compare(records: &[ErrorRecord]) -> Result<ComparisonReport, EvalError> {
    let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.estimator).or_default().push(r.abs_error);
    }
    if groups.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let summaries = groups
        .into_iter()
        .map(|(name, errs)| ErrorSummary::from_errors(name, &errs))
        .collect::<Result<_, _>>()?;
    Ok(ComparisonReport { summaries })
}

impl ComparisonReport {
    pub fn get(&self, estimator: &str) -> Option<&ErrorSummary> {
        self.summaries.iter().find(|s| s.estimator == estimator)
    }

    pub fn summary_tsv(&self) -> String {
        let mut out = SUMMARY_COLUMNS.join("\t");
        out.push('\n');
        for s in &self.summaries {
            let _ = writeln!(
                out,
                "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
                s.estimator, s.count, s.mean, s.median, s.p75, s.p90, s.max
            );
        }
        out
    }

    /// Writes `summary.tsv` and one `ecdf_<estimator>.tsv` per estimator;
    /// returns the written paths in order.
    pub fn write(&self, dir: &Path) -> std::io::Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let mut paths = Vec::new();
        let p = dir.join("summary.tsv");
        std::fs::write(&p, self.summary_tsv())?;
        paths.push(p);
        for s in &self.summaries {
            let p = dir.join(format!("ecdf_{}.tsv", sanitize(&s.estimator)));
            std::fs::write(&p, ecdf_tsv(&s.curve))?;
            paths.push(p);
        }
        Ok(paths)
    }
}

pub fn ecdf_tsv(curve: &EcdfCurve) -> String {
    let mut out = String::from("error_m\tcumulative_fraction\n");
    for (e, c) in curve.sorted_errors.iter().zip(&curve.cumulative) {
        let _ = writeln!(out, "{e:.4}\t{c:.6}");
    }
    out
}

pub(crate) fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RssiRow {
    pub distance: f64,
    pub count: usize,
    pub mean_rssi: f64,
    pub std_rssi: f64,
}

/// Mean and sample standard deviation of per-measurement mean RSSI, grouped
/// by true distance rounded to `resolution` meters. Measurements without
/// frames are skipped.
pub fn rssi_profile(dataset: &Dataset, resolution: f64) -> Result<Vec<RssiRow>, EvalError> {
    let mut groups: BTreeMap<i64, Vec<f64>> = BTreeMap::new();
    for (i, m) in dataset.measurements.iter().enumerate() {
        let d = m.true_distance.ok_or(EvalError::NoGroundTruth(i))?;
        if let Some(r) = m.mean_rssi() {
            groups.entry((d / resolution).round() as i64).or_default().push(r);
        }
    }
    Ok(groups
        .into_iter()
        .map(|(k, v)| {
            let n = v.len();
            let mean = v.iter().sum::<f64>() / n as f64;
            let std = if n > 1 {
                (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
            } else {
                0.0
            };
            RssiRow {
                distance: k as f64 * resolution,
                count: n,
                mean_rssi: mean,
                std_rssi: std,
            }
        })
        .collect())
}

pub fn rssi_profile_tsv(rows: &[RssiRow]) -> String {
    let mut out = String::from("distance_m\tcount\tmean_rssi_dbm\tstd_rssi_db\n");
    for r in rows {
        let _ = writeln!(out, "{:.3}\t{}\t{:.3}\t{:.3}", r.distance, r.count, r.mean_rssi, r.std_rssi);
    }
    out
}

/// Average ranks, ties sharing the mean rank.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation; `None` for fewer than two points or a
/// constant input.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some(sxy / (sxx * syy).sqrt())
}

/// Spearman correlation between true distance and per-measurement mean RSSI.
pub fn distance_rssi_correlation(dataset: &Dataset) -> Option<f64> {
    let (d, r): (Vec<f64>, Vec<f64>) = dataset
        .measurements
        .iter()
        .filter_map(|m| Some((m.true_distance?, m.mean_rssi()?)))
        .unzip();
    spearman(&d, &r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measurement::fixtures::{frame, measurement};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn ecdf_examples() {
        let c = ecdf(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(c.eval(2.5), 0.5);
        let c = ecdf(&[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(c.eval(2.999), 0.0);
        assert_eq!(c.eval(3.0), 1.0);
        assert_eq!(c.sorted_errors, vec![3.0]);
        assert_eq!(ecdf(&[]), Err(EvalError::EmptyInput));
    }

    #[test]
    fn uniform_draws() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let v: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..10.0)).collect();
        let c = ecdf(&v).unwrap();
        assert!((c.eval(5.0) - 0.5).abs() <= 0.05);
    }

    #[test]
    fn quantiles_are_observed_values() {
        let c = ecdf(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!(c.median(), 2.0);
        assert_eq!(c.quantile(0.75), 3.0);
        assert_eq!(c.quantile(0.9), 4.0);
        assert_eq!(c.quantile(0.0), 1.0);
        assert_eq!(percentile_below(&c, 0.5), 0.0);
        let c = ecdf(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(c.median(), 0.0);
    }

    fn rec(name: &str, err: f64) -> ErrorRecord {
        ErrorRecord::new(name, 10.0, 10.0 + err, Scenario::Synthetic, Bandwidth::Mhz40)
    }

    #[test]
    fn dominated_estimator_worse_everywhere() {
        let mut recs = Vec::new();
        for i in 0..50 {
            recs.push(rec("b", i as f64 * 0.1));
            recs.push(rec("a", i as f64 * 0.1 + 1.0));
        }
        let r = compare(&recs).unwrap();
        let (a, b) = (r.get("a").unwrap(), r.get("b").unwrap());
        assert!(a.mean > b.mean && a.median > b.median && a.p75 > b.p75 && a.p90 > b.p90);
        assert_eq!(r.summaries[0].estimator, "a");
    }

    #[test]
    fn report_is_reproducible() {
        let recs: Vec<ErrorRecord> = (0..30).map(|i| rec(["x", "y"][i % 2], (i * 7 % 11) as f64)).collect();
        let a = compare(&recs).unwrap();
        let mut shuffled = recs.clone();
        shuffled.reverse();
        let b = compare(&shuffled).unwrap();
        assert_eq!(a.summary_tsv(), b.summary_tsv());
        let dir = tempfile::tempdir().unwrap();
        let paths = a.write(dir.path()).unwrap();
        assert_eq!(paths.len(), 3);
        let text = std::fs::read_to_string(&paths[1]).unwrap();
        assert!(text.starts_with("error_m\tcumulative_fraction\n"));
        assert!(text.trim_end().ends_with("1.000000"));
    }

    #[test]
    fn rssi_profile_groups() {
        let mut ds = Dataset::new("t", Scenario::Synthetic);
        ds.measurements.push(measurement(vec![frame(-50.0, 10.0)], 10.0, Some(3.0)));
        let rows = rssi_profile(&ds, 1.0).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].std_rssi, 0.0);
        ds.measurements.push(measurement(vec![frame(-54.0, 10.0)], 10.0, Some(3.2)));
        ds.measurements.push(measurement(vec![frame(-60.0, 10.0)], 10.0, Some(5.0)));
        let rows = rssi_profile(&ds, 1.0).unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].mean_rssi, -52.0);
        assert!((rows[0].std_rssi - 8f64.sqrt()).abs() < 1e-12);
        ds.measurements.push(measurement(vec![frame(-60.0, 10.0)], 10.0, None));
        assert_eq!(rssi_profile(&ds, 1.0), Err(EvalError::NoGroundTruth(3)));
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        let r = spearman(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 4.0]).unwrap();
        assert!(r > 0.9 && r < 1.0);
    }

    proptest! {
        #[test]
        fn ecdf_permutation_invariant(v in prop::collection::vec(0.0f64..50.0, 1..60), seed: u64) {
            let mut w = v.clone();
            w.reverse();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            use rand::seq::SliceRandom;
            w.shuffle(&mut rng);
            prop_assert_eq!(ecdf(&v).unwrap(), ecdf(&w).unwrap());
        }

        #[test]
        fn percentile_monotone(v in prop::collection::vec(0.0f64..50.0, 1..60), a in 0.0f64..60.0, b in 0.0f64..60.0) {
            let c = ecdf(&v).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(percentile_below(&c, lo) <= percentile_below(&c, hi));
            prop_assert_eq!(*c.cumulative.last().unwrap(), 1.0);
        }
    }
}
