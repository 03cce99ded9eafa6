//! CART regression tree stored as a flat, preorder node array.
//!
//! Splits are chosen greedily by squared-error reduction. Candidate
//! thresholds are midpoints between consecutive distinct values of a feature
//! and a split is admissible only when both children keep at least
//! `min_leaf_size` samples. Samples with `x[f] <= threshold` go left.
//!
//! Tie-break: gains within a relative [`TIE_EPSILON`] of each other are
//! equal, and the first candidate wins, scanning features in index order and
//! thresholds in increasing order. A node whose best gain is not above that
//! tolerance becomes a leaf.

use serde::{Deserialize, Serialize};

use super::{check_rows, MlError, Rows};

/// Relative tolerance for comparing split gains.
pub const TIE_EPSILON: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitRule {
    pub feature: usize,
    pub threshold: f64,
    pub left: u32,
    pub right: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub split: Option<SplitRule>,
    /// Mean label of the node's training samples.
    pub value: f64,
    pub samples: u32,
}

impl TreeNode {
    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<TreeNode>,
    pub min_leaf_size: usize,
    pub n_features: usize,
}

impl RegressionTree {
    pub fn fit(x: &Rows, y: &[f64], min_leaf_size: usize) -> Result<Self, MlError> {
        let dim = check_rows(x, y)?;
        if min_leaf_size == 0 {
            return Err(MlError::InvalidParameter("min_leaf_size must be >= 1".into()));
        }
        if x.len() < 2 * min_leaf_size {
            return Err(MlError::TooFewSamples {
                needed: 2 * min_leaf_size,
                have: x.len(),
            });
        }
        let mut tree = RegressionTree {
            nodes: Vec::new(),
            min_leaf_size,
            n_features: dim,
        };
        let idx: Vec<usize> = (0..x.len()).collect();
        tree.grow(x, y, idx);
        Ok(tree)
    }

    fn grow(&mut self, x: &Rows, y: &[f64], idx: Vec<usize>) -> u32 {
        let id = self.nodes.len() as u32;
        let mean = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
        self.nodes.push(TreeNode {
            split: None,
            value: mean,
            samples: idx.len() as u32,
        });
        if let Some((feature, threshold)) = best_split(x, y, &idx, mean, self.min_leaf_size) {
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.into_iter().partition(|&i| x[i][feature] <= threshold);
            let left = self.grow(x, y, l);
            let right = self.grow(x, y, r);
            self.nodes[id as usize].split = Some(SplitRule {
                feature,
                threshold,
                left,
                right,
            });
        }
        id
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut node = &self.nodes[0];
        while let Some(s) = node.split {
            node = if row[s.feature] <= s.threshold {
                &self.nodes[s.left as usize]
            } else {
                &self.nodes[s.right as usize]
            };
        }
        node.value
    }

    pub fn leaves(&self) -> impl Iterator<Item = &TreeNode> {
        self.nodes.iter().filter(|n| n.is_leaf())
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &RegressionTree, i: usize) -> usize {
            match t.nodes[i].split {
                None => 1,
                Some(s) => 1 + walk(t, s.left as usize).max(walk(t, s.right as usize)),
            }
        }
        walk(self, 0)
    }
}

fn best_split(
    x: &Rows,
    y: &[f64],
    idx: &[usize],
    mean: f64,
    min_leaf: usize,
) -> Option<(usize, f64)> {
    let n = idx.len();
    if n < 2 * min_leaf {
        return None;
    }
    let centered: Vec<f64> = idx.iter().map(|&i| y[i] - mean).collect();
    let sse: f64 = centered.iter().map(|v| v * v).sum();
    let total: f64 = centered.iter().sum();
    let tol = TIE_EPSILON * sse.max(f64::MIN_POSITIVE);

    let dim = x[idx[0]].len();
    let mut best: Option<(usize, f64)> = None;
    let mut best_gain = 0.0;
    let mut order: Vec<usize> = (0..n).collect();
    for f in 0..dim {
        order.sort_by(|&a, &b| x[idx[a]][f].total_cmp(&x[idx[b]][f]).then(a.cmp(&b)));
        let mut left_sum = 0.0;
        for k in 1..n {
            left_sum += centered[order[k - 1]];
            if k < min_leaf {
                continue;
            }
            if n - k < min_leaf {
                break;
            }
            let lo = x[idx[order[k - 1]]][f];
            let hi = x[idx[order[k]]][f];
            if !(lo < hi) {
                continue;
            }
            let right_sum = total - left_sum;
            let gain = left_sum * left_sum / k as f64 + right_sum * right_sum / (n - k) as f64
                - total * total / n as f64;
            if gain > best_gain + tol {
                best_gain = gain;
                best = Some((f, midpoint(lo, hi)));
            }
        }
    }
    best
}

fn midpoint(lo: f64, hi: f64) -> f64 {
    let m = lo + (hi - lo) / 2.0;
    // guard against rounding onto `hi`, which would send it left
    if m < hi {
        m
    } else {
        lo
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rows(v: &[f64]) -> Vec<Vec<f64>> {
        v.iter().map(|&a| vec![a, 0.0]).collect()
    }

    #[test]
    fn constant_labels_give_single_leaf() {
        let x = rows(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0]);
        let t = RegressionTree::fit(&x, &[5.0; 9], 2).unwrap();
        assert_eq!(t.nodes.len(), 1);
        assert_eq!(t.predict(&[100.0, 0.0]), 5.0);
    }

    #[test]
    fn step_function_splits_once() {
        let x = rows(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]);
        let y = [0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0];
        let t = RegressionTree::fit(&x, &y, 4).unwrap();
        assert_eq!(t.nodes.len(), 3);
        let s = t.nodes[0].split.unwrap();
        assert_eq!((s.feature, s.threshold), (0, 4.5));
        assert_eq!(t.nodes[s.left as usize].value, 0.0);
        assert_eq!(t.nodes[s.right as usize].value, 10.0);
    }

    #[test]
    fn equal_partitions_prefer_first_feature() {
        let x: Vec<Vec<f64>> = (0..8).map(|i| vec![i as f64, i as f64 * 2.0]).collect();
        let y = [0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 1.0];
        let t = RegressionTree::fit(&x, &y, 2).unwrap();
        assert_eq!(t.nodes[0].split.unwrap().feature, 0);
    }

    #[test]
    fn too_few_samples() {
        let x = rows(&[1.0, 2.0, 3.0]);
        assert_eq!(
            RegressionTree::fit(&x, &[1.0, 2.0, 3.0], 2),
            Err(MlError::TooFewSamples { needed: 4, have: 3 })
        );
    }

    #[test]
    fn duplicate_feature_values_never_straddled() {
        let x = rows(&[1.0, 1.0, 1.0, 2.0, 2.0, 2.0]);
        let y = [0.0, 1.0, 0.0, 5.0, 6.0, 5.0];
        let t = RegressionTree::fit(&x, &y, 1).unwrap();
        let s = t.nodes[0].split.unwrap();
        assert_eq!(s.threshold, 1.5);
    }

    fn train_rmse(x: &Rows, y: &[f64], t: &RegressionTree) -> f64 {
        (x.iter().zip(y).map(|(r, v)| (t.predict(r) - v).powi(2)).sum::<f64>() / y.len() as f64).sqrt()
    }

    proptest! {
        #[test]
        fn leaves_respect_min_size(
            data in prop::collection::vec((0.0f64..10.0, -80.0f64..-30.0, 0.0f64..20.0), 8..80),
            min_leaf in 1usize..6,
        ) {
            let x: Vec<Vec<f64>> = data.iter().map(|d| vec![d.0, d.1]).collect();
            let y: Vec<f64> = data.iter().map(|d| d.2).collect();
            prop_assume!(x.len() >= 2 * min_leaf);
            let t = RegressionTree::fit(&x, &y, min_leaf).unwrap();
            for leaf in t.leaves() {
                prop_assert!(leaf.samples as usize >= min_leaf);
            }
            let total: u32 = t.leaves().map(|l| l.samples).sum();
            prop_assert_eq!(total as usize, x.len());
        }

        #[test]
        fn unit_leaves_fit_training_data_best(
            data in prop::collection::vec((0.0f64..10.0, -80.0f64..-30.0, 0.0f64..20.0), 8..60),
            min_leaf in 2usize..6,
        ) {
            let x: Vec<Vec<f64>> = data.iter().map(|d| vec![d.0, d.1]).collect();
            let y: Vec<f64> = data.iter().map(|d| d.2).collect();
            prop_assume!(x.len() >= 2 * min_leaf);
            let coarse = RegressionTree::fit(&x, &y, min_leaf).unwrap();
            let fine = RegressionTree::fit(&x, &y, 1).unwrap();
            prop_assert!(train_rmse(&x, &y, &fine) <= train_rmse(&x, &y, &coarse) + 1e-9);
        }
    }
}
