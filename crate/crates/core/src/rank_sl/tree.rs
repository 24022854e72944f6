//! Least-squares regression trees grown best-first up to a leaf budget.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    /// `x[feature] <= threshold` goes left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

struct Candidate {
    node: usize,
    samples: Vec<usize>,
    best: Option<SplitChoice>,
}

#[derive(Clone, Copy)]
struct SplitChoice {
    feature: usize,
    threshold: f64,
    gain: f64,
}

fn best_split(rows: &[&[f64]], targets: &[f64], samples: &[usize], min_leaf: usize) -> Option<SplitChoice> {
    let n = samples.len();
    if n < 2 * min_leaf || n < 2 {
        return None;
    }
    let width = rows[samples[0]].len();
    let total: f64 = samples.iter().map(|&i| targets[i]).sum();
    let base = total * total / n as f64;
    let mut best: Option<SplitChoice> = None;
    let mut sorted = samples.to_vec();
    for f in 0..width {
        sorted.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += targets[sorted[k]];
            let (lo, hi) = (rows[sorted[k]][f], rows[sorted[k + 1]][f]);
            let left_n = k + 1;
            if lo == hi || left_n < min_leaf || n - left_n < min_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / left_n as f64 + right_sum * right_sum / (n - left_n) as f64;
            let gain = score - base;
            if gain > 1e-12 && best.is_none_or(|b| gain > b.gain) {
                best = Some(SplitChoice {
                    feature: f,
                    threshold: lo + (hi - lo) / 2.0,
                    gain,
                });
            }
        }
    }
    best
}

fn mean(targets: &[f64], samples: &[usize]) -> f64 {
    if samples.is_empty() {
        0.0
    } else {
        samples.iter().map(|&i| targets[i]).sum::<f64>() / samples.len() as f64
    }
}

impl RegressionTree {
    /// Fits `targets` by squared error. Returns the tree and the leaf node
    /// index of every sample so callers can override leaf values.
    pub fn fit(rows: &[&[f64]], targets: &[f64], max_leaves: usize, min_leaf: usize) -> (Self, Vec<usize>) {
        let all: Vec<usize> = (0..rows.len()).collect();
        let mut nodes = vec![Node::Leaf {
            value: mean(targets, &all),
        }];
        let min_leaf = min_leaf.max(1);
        let mut open = vec![Candidate {
            node: 0,
            best: best_split(rows, targets, &all, min_leaf),
            samples: all,
        }];
        let mut leaves = 1;
        while leaves < max_leaves.max(1) {
            let Some(pick) = open
                .iter()
                .enumerate()
                .filter_map(|(i, c)| c.best.map(|b| (i, b.gain)))
                .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|(i, _)| i)
            else {
                break;
            };
            let cand = open.swap_remove(pick);
            let split = cand.best.expect("picked candidate has a split");
            let (left_s, right_s): (Vec<usize>, Vec<usize>) = cand
                .samples
                .iter()
                .partition(|&&i| rows[i][split.feature] <= split.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf {
                value: mean(targets, &left_s),
            });
            let right = nodes.len();
            nodes.push(Node::Leaf {
                value: mean(targets, &right_s),
            });
            nodes[cand.node] = Node::Split {
                feature: split.feature,
                threshold: split.threshold,
                left,
                right,
            };
            open.push(Candidate {
                node: left,
                best: best_split(rows, targets, &left_s, min_leaf),
                samples: left_s,
            });
            open.push(Candidate {
                node: right,
                best: best_split(rows, targets, &right_s, min_leaf),
                samples: right_s,
            });
            leaves += 1;
        }
        let mut assignment = vec![0; rows.len()];
        for c in &open {
            for &i in &c.samples {
                assignment[i] = c.node;
            }
        }
        (Self { nodes }, assignment)
    }

    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        match self.nodes[self.leaf_index(x)] {
            Node::Leaf { value } => value,
            Node::Split { .. } => unreachable!("leaf_index returns leaves"),
        }
    }

    pub fn set_leaf_value(&mut self, node: usize, v: f64) {
        if let Node::Leaf { value } = &mut self.nodes[node] {
            *value = v;
        }
    }

    pub fn scale_leaves(&mut self, s: f64) {
        for n in &mut self.nodes {
            if let Node::Leaf { value } = n {
                *value *= s;
            }
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_a_step_function() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let targets: Vec<f64> = (0..20).map(|i| if i >= 12 { 1.0 } else { 0.0 }).collect();
        let (tree, assign) = RegressionTree::fit(&refs, &targets, 8, 1);
        assert_eq!(tree.leaf_count(), 2);
        assert_eq!(tree.predict(&[15.0, 0.0]), 1.0);
        assert_eq!(tree.predict(&[3.0, 0.0]), 0.0);
        assert_eq!(assign[0], tree.leaf_index(&rows[0]));
    }

    #[test]
    fn respects_leaf_budget_and_min_leaf() {
        let rows: Vec<Vec<f64>> = (0..32).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let targets: Vec<f64> = (0..32).map(|i| (i * 7 % 5) as f64).collect();
        let (tree, _) = RegressionTree::fit(&refs, &targets, 4, 1);
        assert!(tree.leaf_count() <= 4);
        let (tree, _) = RegressionTree::fit(&refs, &targets, 64, 8);
        assert!(tree.leaf_count() <= 4);
    }

    #[test]
    fn constant_targets_give_single_leaf() {
        let rows = [vec![1.0], vec![2.0]];
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let (tree, _) = RegressionTree::fit(&refs, &[0.3, 0.3], 8, 1);
        assert_eq!(tree.leaf_count(), 1);
        assert_eq!(tree.predict(&[5.0]), 0.3);
    }
}
