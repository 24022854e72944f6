//! Friedman test with the Iman-Davenport correction, mean-rank tables and
//! Holm-corrected pairwise sign tests for critical-difference style plots.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Binomial, ChiSquared, ContinuousCDF, DiscreteCDF, FisherSnedecor};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub chi2_f: f64,
    /// `+inf` under perfect agreement.
    pub f_id: f64,
    pub n_outcomes: usize,
    pub n_techniques: usize,
    pub mean_ranks: Vec<f64>,
    pub p_value_chi2: f64,
    pub p_value_f: f64,
}

fn check_matrix(rows: &[Vec<f64>]) -> Result<usize> {
    if rows.len() < 2 {
        return Err(Error::Metric(format!(
            "Friedman test needs at least 2 outcomes, got {}",
            rows.len()
        )));
    }
    let k = rows[0].len();
    if k < 2 {
        return Err(Error::Metric(format!(
            "Friedman test needs at least 2 techniques, got {k}"
        )));
    }
    if let Some(i) = rows.iter().position(|r| r.len() != k) {
        return Err(Error::Metric(format!("row {i} has {} columns, expected {k}", rows[i].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Metric("matrix contains non-finite values".into()));
    }
    Ok(k)
}

/// Ranks each row so the largest value gets rank 1; ties share the average rank.
pub fn rank_rows(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    values
        .iter()
        .map(|row| {
            let mut idx: Vec<usize> = (0..row.len()).collect();
            idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
            let mut ranks = vec![0.0; row.len()];
            let mut i = 0;
            while i < idx.len() {
                let mut j = i;
                while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
                    j += 1;
                }
                let avg = (i + j) as f64 / 2.0 + 1.0;
                for &t in &idx[i..=j] {
                    ranks[t] = avg;
                }
                i = j + 1;
            }
            ranks
        })
        .collect()
}

fn column_means(ranks: &[Vec<f64>], k: usize) -> Vec<f64> {
    let n = ranks.len() as f64;
    (0..k)
        .map(|j| ranks.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

/// Friedman statistic from an already-ranked matrix (rows = outcomes).
pub fn friedman_from_ranks(ranks: &[Vec<f64>]) -> Result<FriedmanResult> {
    let k = check_matrix(ranks)?;
    let n = ranks.len();
    let (nf, kf) = (n as f64, k as f64);
    let mean_ranks = column_means(ranks, k);
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let chi2_f =
        (12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let denom = nf * (kf - 1.0) - chi2_f;
    let f_id = if denom.abs() <= 1e-12 * nf * kf {
        f64::INFINITY
    } else {
        (nf - 1.0) * chi2_f / denom
    };
    let p_value_chi2 = ChiSquared::new(kf - 1.0)
        .map(|d| d.sf(chi2_f))
        .unwrap_or(f64::NAN);
    let p_value_f = if f_id.is_infinite() {
        0.0
    } else {
        FisherSnedecor::new(kf - 1.0, (kf - 1.0) * (nf - 1.0))
            .map(|d| d.sf(f_id.max(0.0)))
            .unwrap_or(f64::NAN)
    };
    Ok(FriedmanResult {
        chi2_f,
        f_id,
        n_outcomes: n,
        n_techniques: k,
        mean_ranks,
        p_value_chi2,
        p_value_f,
    })
}

/// Friedman/Iman-Davenport over raw scores where higher is better.
pub fn friedman_iman_davenport(values: &[Vec<f64>]) -> Result<FriedmanResult> {
    check_matrix(values)?;
    friedman_from_ranks(&rank_rows(values))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankEntry {
    pub technique: String,
    pub mean_rank: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: String,
    pub b: String,
    /// `mean_rank(b) - mean_rank(a)`; positive when `a` ranks better.
    pub mean_rank_diff: f64,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub p_value: f64,
    pub p_holm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanRankTable {
    /// Best (lowest mean rank) first.
    pub entries: Vec<RankEntry>,
    pub pairwise: Vec<PairwiseComparison>,
}

/// Exact two-sided sign test over decisive outcomes.
pub fn sign_test_p_value(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    if n == 0 {
        return 1.0;
    }
    let lo = wins.min(losses) as u64;
    let dist = Binomial::new(0.5, n as u64).expect("valid binomial");
    (2.0 * dist.cdf(lo)).min(1.0)
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p: &[f64]) -> Vec<f64> {
    let m = p.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| p[a].total_cmp(&p[b]));
    let mut out = vec![0.0; m];
    let mut running: f64 = 0.0;
    for (i, &j) in idx.iter().enumerate() {
        let adj = ((m - i) as f64 * p[j]).min(1.0);
        running = running.max(adj);
        out[j] = running;
    }
    out
}

/// Mean ranks sorted best first (ties by name) plus every pairwise
/// mean-rank difference with a Holm-corrected sign test.
pub fn mean_rank_table(values: &[Vec<f64>], names: &[String]) -> Result<MeanRankTable> {
    let k = check_matrix(values)?;
    if names.len() != k {
        return Err(Error::Metric(format!(
            "{} technique names for {k} columns",
            names.len()
        )));
    }
    let ranks = rank_rows(values);
    let means = column_means(&ranks, k);
    let mut entries: Vec<RankEntry> = names
        .iter()
        .zip(&means)
        .map(|(n, &m)| RankEntry {
            technique: n.clone(),
            mean_rank: m,
        })
        .collect();
    entries.sort_by(|a, b| {
        a.mean_rank
            .total_cmp(&b.mean_rank)
            .then_with(|| a.technique.cmp(&b.technique))
    });

    let mut pairwise = Vec::new();
    for i in 0..k {
        for j in i + 1..k {
            let (mut wins, mut losses, mut ties) = (0, 0, 0);
            for row in values {
                match row[i].total_cmp(&row[j]) {
                    std::cmp::Ordering::Greater => wins += 1,
                    std::cmp::Ordering::Less => losses += 1,
                    std::cmp::Ordering::Equal => ties += 1,
                }
            }
            pairwise.push(PairwiseComparison {
                a: names[i].clone(),
                b: names[j].clone(),
                mean_rank_diff: means[j] - means[i],
                wins,
                losses,
                ties,
                p_value: sign_test_p_value(wins, losses),
                p_holm: 0.0,
            });
        }
    }
    let adjusted = holm_adjust(&pairwise.iter().map(|p| p.p_value).collect::<Vec<_>>());
    for (p, adj) in pairwise.iter_mut().zip(adjusted) {
        p.p_holm = adj;
    }
    Ok(MeanRankTable { entries, pairwise })
}
