//! RTT to distance conversion and the firmware's piecewise-linear RTT
//! correction.
//!
//! The correction maps `rtt_raw` to `rtt_est` with a different linear model
//! on each side of a set of thresholds. Only the functional form is assumed;
//! coefficients are recovered from logged `(rtt_raw, rtt_est)` pairs with
//! [`fit_segmented`] and the thresholds themselves with
//! [`detect_breakpoints`].
//!
//! Interval convention: segment `i` covers `[b[i-1], b[i])`, so a value that
//! sits exactly on a breakpoint belongs to the segment on its right. Inputs
//! below the first breakpoint (including negative RTTs) use the first
//! segment's line.

use serde::{Deserialize, Serialize};

use crate::SPEED_OF_LIGHT;

/// Thresholds observed in ESP32-S2 logs, in nanoseconds.
pub const DEFAULT_BREAKPOINTS_NS: [f64; 2] = [10.0, 124.0];

/// Smallest number of points [`detect_breakpoints`] accepts in a segment.
pub const MIN_DETECT_SEGMENT_POINTS: usize = 5;

/// `d = rtt * c / 2`, with `rtt` in nanoseconds and `d` in meters.
pub fn distance_from_rtt(rtt_ns: f64) -> f64 {
    rtt_ns * 1e-9 * SPEED_OF_LIGHT / 2.0
}

/// Inverse of [`distance_from_rtt`].
pub fn rtt_from_distance(distance_m: f64) -> f64 {
    2.0 * distance_m / SPEED_OF_LIGHT * 1e9
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorrectionError {
    #[error("breakpoints must be finite and strictly increasing")]
    UnsortedBreakpoints,
    #[error("expected {expected} segments, got {got}")]
    SegmentCount { expected: usize, got: usize },
    #[error("segment {0} has fewer than two points")]
    InsufficientPointsInSegment(usize),
    #[error("segment {0} has no spread in rtt_raw; slope is undefined")]
    DegenerateSegment(usize),
    #[error("not enough data: need at least {needed} points, have {have}")]
    InsufficientData { needed: usize, have: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub slope: f64,
    pub intercept: f64,
}

impl Segment {
    pub const IDENTITY: Segment = Segment {
        slope: 1.0,
        intercept: 0.0,
    };

    pub fn eval(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMap", into = "RawMap")]
pub struct PiecewiseLinearMap {
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

#[derive(Serialize, Deserialize)]
struct RawMap {
    breakpoints: Vec<f64>,
    segments: Vec<Segment>,
}

impl TryFrom<RawMap> for PiecewiseLinearMap {
    type Error = CorrectionError;

    fn try_from(raw: RawMap) -> Result<Self, Self::Error> {
        PiecewiseLinearMap::new(raw.breakpoints, raw.segments)
    }
}

impl From<PiecewiseLinearMap> for RawMap {
    fn from(m: PiecewiseLinearMap) -> Self {
        RawMap {
            breakpoints: m.breakpoints,
            segments: m.segments,
        }
    }
}

impl Default for PiecewiseLinearMap {
    /// Identity on the default thresholds.
    fn default() -> Self {
        Self::identity(DEFAULT_BREAKPOINTS_NS.to_vec()).expect("default breakpoints are sorted")
    }
}

impl PiecewiseLinearMap {
    pub fn new(breakpoints: Vec<f64>, segments: Vec<Segment>) -> Result<Self, CorrectionError> {
        check_breakpoints(&breakpoints)?;
        if segments.len() != breakpoints.len() + 1 {
            return Err(CorrectionError::SegmentCount {
                expected: breakpoints.len() + 1,
                got: segments.len(),
            });
        }
        Ok(PiecewiseLinearMap {
            breakpoints,
            segments,
        })
    }

    pub fn identity(breakpoints: Vec<f64>) -> Result<Self, CorrectionError> {
        let n = breakpoints.len() + 1;
        Self::new(breakpoints, vec![Segment::IDENTITY; n])
    }

    pub fn breakpoints(&self) -> &[f64] {
        &self.breakpoints
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Index of the segment that owns `x`.
    pub fn segment_index(&self, x: f64) -> usize {
        self.breakpoints.partition_point(|&b| b <= x)
    }

    pub fn apply(&self, rtt_raw: f64) -> f64 {
        self.segments[self.segment_index(rtt_raw)].eval(rtt_raw)
    }
}

pub fn apply_vendor_correction(rtt_raw: f64, map: &PiecewiseLinearMap) -> f64 {
    map.apply(rtt_raw)
}

fn check_breakpoints(b: &[f64]) -> Result<(), CorrectionError> {
    let finite = b.iter().all(|v| v.is_finite());
    let increasing = b.windows(2).all(|w| w[0] < w[1]);
    if finite && increasing {
        Ok(())
    } else {
        Err(CorrectionError::UnsortedBreakpoints)
    }
}

/// Result of a per-segment least-squares fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentedFit {
    pub map: PiecewiseLinearMap,
    pub rmse: Vec<f64>,
    pub counts: Vec<usize>,
}

impl SegmentedFit {
    /// RMSE over all pairs used in the fit.
    pub fn total_rmse(&self) -> f64 {
        let n: usize = self.counts.iter().sum();
        let sse: f64 = self
            .rmse
            .iter()
            .zip(&self.counts)
            .map(|(r, &c)| r * r * c as f64)
            .sum();
        (sse / n as f64).sqrt()
    }
}

/// Ordinary least squares on each segment independently.
pub fn fit_segmented(
    pairs: &[(f64, f64)],
    breakpoints: &[f64],
) -> Result<SegmentedFit, CorrectionError> {
    check_breakpoints(breakpoints)?;
    let owner = PiecewiseLinearMap::identity(breakpoints.to_vec())?;
    let k = breakpoints.len() + 1;
    let mut buckets: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for &(x, y) in pairs {
        buckets[owner.segment_index(x)].push((x, y));
    }

    let mut segments = Vec::with_capacity(k);
    let mut rmse = Vec::with_capacity(k);
    let mut counts = Vec::with_capacity(k);
    for (i, pts) in buckets.iter().enumerate() {
        if pts.len() < 2 {
            return Err(CorrectionError::InsufficientPointsInSegment(i));
        }
        let seg = ols(pts).ok_or(CorrectionError::DegenerateSegment(i))?;
        let sse: f64 = pts.iter().map(|&(x, y)| (y - seg.eval(x)).powi(2)).sum();
        segments.push(seg);
        rmse.push((sse / pts.len() as f64).sqrt());
        counts.push(pts.len());
    }
    Ok(SegmentedFit {
        map: PiecewiseLinearMap::new(breakpoints.to_vec(), segments)?,
        rmse,
        counts,
    })
}

/// Single straight line through all pairs.
pub fn fit_global_linear(pairs: &[(f64, f64)]) -> Option<Segment> {
    ols(pairs)
}

fn ols(pts: &[(f64, f64)]) -> Option<Segment> {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(x, y) in pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
    }
    if sxx <= f64::EPSILON * mx.abs().max(1.0) * n {
        return None;
    }
    let slope = sxy / sxx;
    Some(Segment {
        slope,
        intercept: my - slope * mx,
    })
}

/// Prefix sums over points sorted by x, centered to limit cancellation.
struct PrefixStats {
    n: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
    xx: Vec<f64>,
    xy: Vec<f64>,
    yy: Vec<f64>,
}

impl PrefixStats {
    fn new(sorted: &[(f64, f64)]) -> Self {
        let len = sorted.len();
        let cx = sorted.iter().map(|p| p.0).sum::<f64>() / len as f64;
        let cy = sorted.iter().map(|p| p.1).sum::<f64>() / len as f64;
        let mut s = PrefixStats {
            n: vec![0.0; len + 1],
            x: vec![0.0; len + 1],
            y: vec![0.0; len + 1],
            xx: vec![0.0; len + 1],
            xy: vec![0.0; len + 1],
            yy: vec![0.0; len + 1],
        };
        for (i, &(x, y)) in sorted.iter().enumerate() {
            let (x, y) = (x - cx, y - cy);
            s.n[i + 1] = s.n[i] + 1.0;
            s.x[i + 1] = s.x[i] + x;
            s.y[i + 1] = s.y[i] + y;
            s.xx[i + 1] = s.xx[i] + x * x;
            s.xy[i + 1] = s.xy[i] + x * y;
            s.yy[i + 1] = s.yy[i] + y * y;
        }
        s
    }

    /// Residual sum of squares of the OLS line through points `a..b`.
    fn sse(&self, a: usize, b: usize) -> f64 {
        let n = self.n[b] - self.n[a];
        let sx = self.x[b] - self.x[a];
        let sy = self.y[b] - self.y[a];
        let sxx = (self.xx[b] - self.xx[a]) - sx * sx / n;
        let sxy = (self.xy[b] - self.xy[a]) - sx * sy / n;
        let syy = (self.yy[b] - self.yy[a]) - sy * sy / n;
        let r = if sxx > 1e-12 { syy - sxy * sxy / sxx } else { syy };
        r.max(0.0)
    }
}

/// Finds `k - 1` breakpoints minimizing the total residual of a `k`-segment
/// fit.
///
/// Candidates are the midpoints between consecutive distinct `rtt_raw`
/// values, and each segment must hold at least
/// [`MIN_DETECT_SEGMENT_POINTS`] points. The search is exhaustive (dynamic
/// programming over sorted points). Costs within a relative `1e-12` of the
/// optimum count as ties, and ties resolve to the lexicographically smallest
/// breakpoint list.
pub fn detect_breakpoints(pairs: &[(f64, f64)], k: usize) -> Result<Vec<f64>, CorrectionError> {
    if k < 2 || pairs.len() < 10 * k {
        return Err(CorrectionError::InsufficientData {
            needed: 10 * k.max(2),
            have: pairs.len(),
        });
    }
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = sorted.len();
    let stats = PrefixStats::new(&sorted);
    let min_len = MIN_DETECT_SEGMENT_POINTS;

    // Boundary p splits sorted[..p] from sorted[p..]; only between distinct x.
    let boundary: Vec<bool> = (0..=n)
        .map(|p| p == 0 || p == n || sorted[p - 1].0 < sorted[p].0)
        .collect();

    // suffix[s][p]: best cost of covering sorted[p..] with s segments.
    let mut suffix = vec![vec![f64::INFINITY; n + 1]; k + 1];
    for p in 0..n {
        if boundary[p] && n - p >= min_len {
            suffix[1][p] = stats.sse(p, n);
        }
    }
    for s in 2..=k {
        for p in 0..n {
            if !boundary[p] {
                continue;
            }
            let mut best = f64::INFINITY;
            for q in (p + min_len)..n {
                if boundary[q] && suffix[s - 1][q].is_finite() {
                    let c = stats.sse(p, q) + suffix[s - 1][q];
                    if c < best {
                        best = c;
                    }
                }
            }
            suffix[s][p] = best;
        }
    }
    let total = suffix[k][0];
    if !total.is_finite() {
        return Err(CorrectionError::InsufficientData {
            needed: k * min_len,
            have: n,
        });
    }

    let tol = 1e-12 * stats.yy[n].max(f64::MIN_POSITIVE) + 1e-12 * total;
    let mut cuts = Vec::with_capacity(k - 1);
    let (mut p, mut spent) = (0usize, 0.0f64);
    for s in (2..=k).rev() {
        let q = ((p + min_len)..n)
            .find(|&q| {
                boundary[q]
                    && suffix[s - 1][q].is_finite()
                    && spent + stats.sse(p, q) + suffix[s - 1][q] <= total + tol
            })
            .expect("optimal path exists");
        spent += stats.sse(p, q);
        cuts.push(0.5 * (sorted[q - 1].0 + sorted[q].0));
        p = q;
    }
    Ok(cuts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    fn three_segment_map() -> PiecewiseLinearMap {
        PiecewiseLinearMap::new(
            vec![10.0, 124.0],
            vec![
                Segment::IDENTITY,
                Segment {
                    slope: 1.0,
                    intercept: -5.0,
                },
                Segment {
                    slope: 1.0,
                    intercept: -20.0,
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn distance_examples() {
        assert_eq!(distance_from_rtt(0.0), 0.0);
        assert!((distance_from_rtt(66.713) - 10.0).abs() < 1e-3);
        assert!((distance_from_rtt(6.671) - 1.0).abs() < 1e-3);
        assert!((rtt_from_distance(distance_from_rtt(42.0)) - 42.0).abs() < 1e-12);
    }

    #[test]
    fn vendor_correction_examples() {
        let id = PiecewiseLinearMap::default();
        assert_eq!(apply_vendor_correction(57.0, &id), 57.0);
        let m = three_segment_map();
        assert_eq!(apply_vendor_correction(50.0, &m), 45.0);
        assert_eq!(apply_vendor_correction(10.0, &m), 5.0);
        assert_eq!(apply_vendor_correction(9.999, &m), 9.999);
        assert_eq!(apply_vendor_correction(124.0, &m), 104.0);
        // negative input extrapolates the first segment
        assert_eq!(apply_vendor_correction(-2.0, &m), -2.0);
    }

    #[test]
    fn map_validation() {
        assert_eq!(
            PiecewiseLinearMap::identity(vec![124.0, 10.0]),
            Err(CorrectionError::UnsortedBreakpoints)
        );
        assert_eq!(
            PiecewiseLinearMap::new(vec![10.0], vec![Segment::IDENTITY]),
            Err(CorrectionError::SegmentCount {
                expected: 2,
                got: 1
            })
        );
    }

    fn sample_pairs(map: &PiecewiseLinearMap, per_segment: usize, sigma: f64, seed: u64) -> Vec<(f64, f64)> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, sigma.max(1e-300)).unwrap();
        let ranges = [(0.0, 10.0), (10.0, 124.0), (124.0, 250.0)];
        let mut out = Vec::new();
        for (lo, hi) in ranges {
            for _ in 0..per_segment {
                let x = rng.random_range(lo..hi);
                let e = if sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                out.push((x, map.apply(x) + e));
            }
        }
        out
    }

    fn varied_map() -> PiecewiseLinearMap {
        PiecewiseLinearMap::new(
            vec![10.0, 124.0],
            vec![
                Segment { slope: 1.0, intercept: 0.0 },
                Segment { slope: 0.75, intercept: -2.0 },
                Segment { slope: 0.9, intercept: -14.0 },
            ],
        )
        .unwrap()
    }

    #[test]
    fn exact_recovery_from_noiseless_pairs() {
        let map = varied_map();
        let pairs = sample_pairs(&map, 50, 0.0, 1);
        let fit = fit_segmented(&pairs, &[10.0, 124.0]).unwrap();
        for (a, b) in fit.map.segments().iter().zip(map.segments()) {
            assert!((a.slope - b.slope).abs() < 1e-9);
            assert!((a.intercept - b.intercept).abs() < 1e-9);
        }
        assert!(fit.total_rmse() < 1e-9);
    }

    #[test]
    fn noisy_recovery_within_one_percent() {
        let map = varied_map();
        let pairs = sample_pairs(&map, 1000, 0.1, 2);
        let fit = fit_segmented(&pairs, &[10.0, 124.0]).unwrap();
        for (a, b) in fit.map.segments().iter().zip(map.segments()) {
            assert!((a.slope - b.slope).abs() / b.slope < 0.01, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn missing_segment_is_reported() {
        let map = varied_map();
        let pairs: Vec<_> = sample_pairs(&map, 40, 0.0, 3)
            .into_iter()
            .filter(|p| p.0 < 124.0)
            .collect();
        assert_eq!(
            fit_segmented(&pairs, &[10.0, 124.0]),
            Err(CorrectionError::InsufficientPointsInSegment(2))
        );
    }

    #[test]
    fn segmented_fit_never_worse_than_global_line() {
        let map = varied_map();
        let pairs = sample_pairs(&map, 200, 0.5, 4);
        let fit = fit_segmented(&pairs, &[10.0, 124.0]).unwrap();
        let global = fit_global_linear(&pairs).unwrap();
        let global_rmse = (pairs
            .iter()
            .map(|&(x, y)| (y - global.eval(x)).powi(2))
            .sum::<f64>()
            / pairs.len() as f64)
            .sqrt();
        let seg_rmse = (pairs
            .iter()
            .map(|&(x, y)| (y - fit.map.apply(x)).powi(2))
            .sum::<f64>()
            / pairs.len() as f64)
            .sqrt();
        assert!(seg_rmse <= global_rmse + 1e-12);
        assert!((seg_rmse - fit.total_rmse()).abs() < 1e-9);
    }

    #[test]
    fn breakpoints_recovered_from_synthetic_pairs() {
        let pairs = sample_pairs(&varied_map(), 1000, 0.1, 5);
        let b = detect_breakpoints(&pairs, 3).unwrap();
        assert!((b[0] - 10.0).abs() <= 1.0, "{b:?}");
        assert!((b[1] - 124.0).abs() <= 1.0, "{b:?}");
    }

    /// Brute force over every admissible pair of cut positions.
    fn brute_force_pair(pairs: &[(f64, f64)]) -> (f64, Vec<f64>) {
        let mut s = pairs.to_vec();
        s.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let n = s.len();
        let sse = |a: usize, b: usize| -> f64 {
            let seg = &s[a..b];
            match ols(seg) {
                Some(l) => seg.iter().map(|&(x, y)| (y - l.eval(x)).powi(2)).sum(),
                None => {
                    let m = seg.iter().map(|p| p.1).sum::<f64>() / seg.len() as f64;
                    seg.iter().map(|p| (p.1 - m).powi(2)).sum()
                }
            }
        };
        let ok = |p: usize| s[p - 1].0 < s[p].0;
        let mut best = (f64::INFINITY, vec![]);
        let m = MIN_DETECT_SEGMENT_POINTS;
        for i in m..n {
            for j in (i + m)..=(n - m) {
                if !ok(i) || !ok(j) {
                    continue;
                }
                let c = sse(0, i) + sse(i, j) + sse(j, n);
                if c < best.0 - 1e-9 {
                    best = (c, vec![(s[i - 1].0 + s[i].0) / 2.0, (s[j - 1].0 + s[j].0) / 2.0]);
                }
            }
        }
        best
    }

    #[test]
    fn dynamic_program_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for trial in 0..10 {
            let pairs: Vec<(f64, f64)> = (0..40)
                .map(|_| {
                    let x: f64 = rng.random_range(0.0..100.0);
                    let y = if x < 30.0 { x } else if x < 70.0 { 0.5 * x + 15.0 } else { 2.0 * x - 90.0 };
                    (x, y + rng.random_range(-3.0..3.0))
                })
                .collect();
            let (_, expected) = brute_force_pair(&pairs);
            let got = detect_breakpoints(&pairs, 3).unwrap();
            assert_eq!(got, expected, "trial {trial}");
        }
    }

    #[test]
    fn degenerate_line_uses_smallest_breakpoints() {
        let pairs: Vec<(f64, f64)> = (0..60).map(|i| (i as f64, 2.0 * i as f64 + 1.0)).collect();
        let b = detect_breakpoints(&pairs, 3).unwrap();
        // first admissible cuts: after 5 and after 10 points
        assert_eq!(b, vec![4.5, 9.5]);
    }

    #[test]
    fn too_little_data() {
        let pairs: Vec<(f64, f64)> = (0..29).map(|i| (i as f64, i as f64)).collect();
        assert!(matches!(
            detect_breakpoints(&pairs, 3),
            Err(CorrectionError::InsufficientData { .. })
        ));
        assert!(detect_breakpoints(&pairs, 1).is_err());
    }
}
