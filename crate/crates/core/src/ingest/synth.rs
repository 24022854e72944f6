use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::domain::{Cycle, Subject, TestRecord, Verdict};
use crate::error::{Error, Result};

/// Column holding each test's persistent latent failure propensity.
pub const LATENT_COLUMN: &str = "latent";
/// Uninformative per-test static column (test-method count).
pub const METHODS_COLUMN: &str = "n_methods";

const START_TIMESTAMP: i64 = 1_600_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub name: String,
    pub n_cycles: usize,
    pub tests_per_cycle: usize,
    pub failure_rate_target: f64,
    /// Logistic coefficient on the latent feature.
    pub signal_strength: f64,
    pub duration_range: [f64; 2],
    pub commit_interval_mean: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            name: "synthetic".into(),
            n_cycles: 300,
            tests_per_cycle: 20,
            failure_rate_target: 0.1,
            signal_strength: 4.0,
            duration_range: [0.5, 30.0],
            commit_interval_mean: 3600.0,
            seed: 7,
        }
    }
}

impl SynthConfig {
    fn check(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_cycles == 0 || self.tests_per_cycle == 0 {
            return bad("n_cycles and tests_per_cycle must be positive".into());
        }
        let [lo, hi] = self.duration_range;
        if !(lo >= 0.0 && lo <= hi && hi.is_finite()) {
            return bad(format!("duration_range [{lo}, {hi}] must satisfy 0 <= lo <= hi"));
        }
        if !(self.signal_strength >= 0.0 && self.signal_strength.is_finite()) {
            return bad("signal_strength must be finite and nonnegative".into());
        }
        if !(self.commit_interval_mean > 0.0 && self.commit_interval_mean.is_finite()) {
            return bad("commit_interval_mean must be positive".into());
        }
        let target = self.failure_rate_target;
        if !(target > 0.0 && target < 1.0) {
            return bad(format!("failure_rate_target {target} outside (0, 1)"));
        }
        let expected = target * (self.n_cycles * self.tests_per_cycle) as f64;
        if expected < 1.0 {
            return bad(format!(
                "failure_rate_target {target} unreachable: {expected:.3} expected failures over {} records",
                self.n_cycles * self.tests_per_cycle
            ));
        }
        Ok(())
    }
}

fn logistic(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Bias such that the mean failure probability over `latents` equals `target`.
fn calibrate_bias(latents: &[f64], signal: f64, target: f64) -> f64 {
    let mean_p = |b: f64| {
        latents.iter().map(|&h| logistic(signal * h + b)).sum::<f64>() / latents.len() as f64
    };
    let (mut lo, mut hi) = (-60.0, 60.0);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mean_p(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generates a subject whose tests fail with probability
/// `logistic(signal_strength * latent + bias)`; deterministic in `cfg.seed`.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Subject> {
    cfg.check()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.tests_per_cycle;
    let [lo, hi] = cfg.duration_range;
    let width = (n.max(2) - 1).to_string().len();

    let latents: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let base_durations: Vec<f64> = (0..n).map(|_| rng.random_range(lo..=hi)).collect();
    let methods: Vec<f64> = (0..n).map(|_| rng.random_range(1..=20) as f64).collect();
    let bias = calibrate_bias(&latents, cfg.signal_strength, cfg.failure_rate_target);
    let probs: Vec<f64> = latents
        .iter()
        .map(|&h| logistic(cfg.signal_strength * h + bias))
        .collect();

    let gap = Exp::new(1.0 / cfg.commit_interval_mean)
        .map_err(|e| Error::Config(format!("commit interval: {e}")))?;
    let mut ts = START_TIMESTAMP;
    let mut order: Vec<usize> = (0..n).collect();
    let mut cycles = Vec::with_capacity(cfg.n_cycles);
    for c in 0..cfg.n_cycles {
        if c > 0 {
            let g: f64 = gap.sample(&mut rng);
            ts += (g.round() as i64).max(1);
        }
        order.shuffle(&mut rng);
        let records = order
            .iter()
            .map(|&t| {
                let jitter: f64 = rng.random_range(0.9..=1.1);
                let duration = round_ms((base_durations[t] * jitter).clamp(lo, hi));
                let verdict = if rng.random::<f64>() < probs[t] {
                    Verdict::Fail
                } else {
                    Verdict::Pass
                };
                TestRecord {
                    test_id: format!("T{t:0width$}"),
                    duration,
                    verdict,
                    extra: vec![round_ms(latents[t]), methods[t]],
                }
            })
            .collect();
        cycles.push(Cycle::new(c as u64 + 1, ts, records));
    }
    Ok(Subject {
        name: cfg.name.clone(),
        cycles,
        feature_columns: vec![LATENT_COLUMN.to_string(), METHODS_COLUMN.to_string()],
    })
}

fn round_ms(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}
