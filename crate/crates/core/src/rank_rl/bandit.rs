//! Fitness-rate-rank multi-armed bandit with one arm per test.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use super::reward::RewardKind;
use crate::domain::RankedSequence;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BanditConfig {
    /// Sliding window length per arm.
    pub window: usize,
    /// Exploration scale.
    pub c: f64,
    /// Rank decay of the credit.
    pub decay: f64,
    pub reward: RewardKind,
}

impl Default for BanditConfig {
    fn default() -> Self {
        Self {
            window: 100,
            c: 0.5,
            decay: 1.0,
            reward: RewardKind::Timerank,
        }
    }
}

impl BanditConfig {
    pub(crate) fn check(&self) -> Result<()> {
        if self.window == 0 || !(self.c >= 0.0) || !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::Config("bandit needs window >= 1, c >= 0 and decay in (0, 1]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub plays: u64,
    pub window: VecDeque<f64>,
}

impl ArmState {
    pub fn window_sum(&self) -> f64 {
        self.window.iter().sum()
    }

    /// Expected gain: mean of the window, 0 before the first reward.
    pub fn q(&self) -> f64 {
        if self.window.is_empty() {
            0.0
        } else {
            self.window_sum() / self.window.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditState {
    pub config: BanditConfig,
    pub arms: BTreeMap<String, ArmState>,
}

impl BanditState {
    pub fn new(config: BanditConfig) -> Self {
        Self {
            config,
            arms: BTreeMap::new(),
        }
    }

    pub fn total_plays(&self) -> u64 {
        self.arms.values().map(|a| a.plays).sum()
    }

    /// Credit per arm: arms ranked by window sum (descending, ties by id),
    /// `D^(rank-1) * sum`, normalized by the sum of absolute credits.
    pub fn frr(&self) -> BTreeMap<&str, f64> {
        let mut ranked: Vec<(&str, f64)> = self
            .arms
            .iter()
            .filter(|(_, a)| !a.window.is_empty())
            .map(|(id, a)| (id.as_str(), a.window_sum()))
            .collect();
        ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(b.0)));
        let decayed: Vec<(&str, f64)> = ranked
            .iter()
            .enumerate()
            .map(|(r, &(id, s))| (id, self.config.decay.powi(r as i32) * s))
            .collect();
        let norm: f64 = decayed.iter().map(|(_, v)| v.abs()).sum();
        decayed
            .into_iter()
            .map(|(id, v)| (id, if norm > 0.0 { v / norm } else { 0.0 }))
            .collect()
    }
}

/// Orders candidates: never-played arms first (input order), then by
/// `FRR + C sqrt(2 ln(sum n) / n_i)` descending, ties in input order.
pub fn frrmab_select(state: &BanditState, candidates: &[&str]) -> RankedSequence {
    let frr = state.frr();
    let total = state.total_plays() as f64;
    let values: Vec<Option<f64>> = candidates
        .iter()
        .map(|id| {
            let arm = state.arms.get(*id).filter(|a| a.plays > 0)?;
            let explore = state.config.c * (2.0 * total.ln().max(0.0) / arm.plays as f64).sqrt();
            Some(frr.get(id).copied().unwrap_or(0.0) + explore)
        })
        .collect();
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| match (values[a], values[b]) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => y.total_cmp(&x),
    });
    RankedSequence::from_order(order)
}

/// Records one play and reward for every listed arm.
pub fn frrmab_update(state: &mut BanditState, test_ids: &[&str], rewards: &[f64]) -> Result<()> {
    if test_ids.len() != rewards.len() {
        return Err(Error::InvalidData("one reward per arm is required".into()));
    }
    if let Some(r) = rewards.iter().find(|r| !r.is_finite()) {
        return Err(Error::Training(format!("non-finite bandit reward {r}")));
    }
    let w = state.config.window;
    for (id, &r) in test_ids.iter().zip(rewards) {
        let arm = state.arms.entry((*id).to_string()).or_default();
        arm.plays += 1;
        arm.window.push_back(r);
        while arm.window.len() > w {
            arm.window.pop_front();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(c: f64, d: f64, w: usize) -> BanditState {
        BanditState::new(BanditConfig {
            window: w,
            c,
            decay: d,
            reward: RewardKind::Timerank,
        })
    }

    #[test]
    fn single_arm_first() {
        let mut s = state(0.5, 1.0, 10);
        frrmab_update(&mut s, &["a"], &[-0.3]).unwrap();
        assert_eq!(frrmab_select(&s, &["a"]).order, vec![0]);
    }

    #[test]
    fn unplayed_arm_first() {
        let mut s = state(0.5, 1.0, 10);
        frrmab_update(&mut s, &["a"], &[1.0]).unwrap();
        assert_eq!(frrmab_select(&s, &["a", "b"]).order, vec![1, 0]);
    }

    #[test]
    fn credit_orders_by_window_sum() {
        let mut s = state(0.0, 1.0, 10);
        frrmab_update(&mut s, &["x", "y"], &[1.0, 1.0]).unwrap();
        frrmab_update(&mut s, &["x", "y"], &[2.0, 0.0]).unwrap();
        let frr = s.frr();
        assert_eq!(frr["x"], 0.75);
        assert_eq!(frr["y"], 0.25);
        assert_eq!(frrmab_select(&s, &["y", "x"]).order, vec![1, 0]);
    }

    #[test]
    fn window_evicts_oldest() {
        let mut s = state(0.5, 1.0, 4);
        for i in 0..6 {
            frrmab_update(&mut s, &["a"], &[i as f64]).unwrap();
        }
        let arm = &s.arms["a"];
        assert_eq!(arm.window.len(), 4);
        assert_eq!(arm.window.front(), Some(&2.0));
        assert_eq!(arm.plays, 6);
    }

    #[test]
    fn q_is_window_mean() {
        let mut s = state(0.5, 1.0, 4);
        for _ in 0..5 {
            frrmab_update(&mut s, &["one"], &[1.0]).unwrap();
        }
        assert_eq!(s.arms["one"].q(), 1.0);
        for i in 0..9 {
            frrmab_update(&mut s, &["alt"], &[f64::from(i % 2)]).unwrap();
        }
        assert_eq!(s.arms["alt"].q(), 0.5);
    }
}
