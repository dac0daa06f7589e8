//! Gradient anomaly monitor and resilience protocol: sliding-window norm
//! history, anomaly scoring, three-way classification, soft rollback, and the
//! hard-reset primitive. The hard reset itself lives on
//! [`crate::federation::ClientState`], which owns all the state it clears.

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilityConfig {
    /// Monitor switch; disabled reproduces the unprotected optimizer.
    pub enabled: bool,
    /// Score above which a step counts as accumulated divergence.
    pub tau_low: f64,
    /// Score at or above which a step counts as a sudden explosion.
    pub tau_high: f64,
    /// Additive constant guarding the score denominator.
    pub xi: f64,
    /// Target total norm for soft rollback.
    pub grad_stable: f64,
    /// Consecutive over-τ_low epochs before escalating to a hard reset.
    pub max_consecutive_low: usize,
    /// Norm history capacity.
    pub window: usize,
    /// Steps at the start of each round scored as 0 (no baseline yet).
    pub warmup: usize,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            enabled: true,
            tau_low: 10.0,
            tau_high: 1000.0,
            xi: 1e-8,
            grad_stable: 10.0,
            max_consecutive_low: 3,
            window: 10,
            warmup: 3,
        }
    }
}

impl StabilityConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tau_low <= 1.0 {
            return Err(Error::config("stability.tau_low", "must exceed 1"));
        }
        if self.tau_high <= self.tau_low {
            return Err(Error::config("stability.tau_high", "must exceed tau_low"));
        }
        if self.xi <= 0.0 {
            return Err(Error::config("stability.xi", "must be positive"));
        }
        if self.grad_stable <= 0.0 {
            return Err(Error::config("stability.grad_stable", "must be positive"));
        }
        if self.window == 0 {
            return Err(Error::config("stability.window", "must be at least 1"));
        }
        Ok(())
    }
}

/// Ring buffer of recent applied-update norms.
#[derive(Debug, Clone)]
pub struct NormHistory {
    window: VecDeque<f64>,
    capacity: usize,
}

impl NormHistory {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        NormHistory {
            window: VecDeque::with_capacity(capacity),
            capacity,
        }
    }

    pub fn push(&mut self, norm: f64) {
        assert!(
            norm.is_finite() && norm >= 0.0,
            "history entries must be finite and nonnegative"
        );
        if self.window.len() == self.capacity {
            self.window.pop_front();
        }
        self.window.push_back(norm);
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn mean(&self) -> Option<f64> {
        if self.window.is_empty() {
            None
        } else {
            Some(self.window.iter().sum::<f64>() / self.window.len() as f64)
        }
    }

    pub fn clear(&mut self) {
        self.window.clear();
    }
}

/// Verdict for one step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnomalyVerdict {
    Normal,
    AccumulatedDivergence,
    SuddenExplosion,
}

impl AnomalyVerdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            AnomalyVerdict::Normal => "normal",
            AnomalyVerdict::AccumulatedDivergence => "accumulated_divergence",
            AnomalyVerdict::SuddenExplosion => "sudden_explosion",
        }
    }
}

/// Sum over layers of per-layer Frobenius norms. Any non-finite entry yields
/// +inf so overflowed arithmetic still reaches the monitor as a maximal
/// anomaly. Total by design: never errors.
pub fn total_norm(per_layer_grads: &[Matrix]) -> f64 {
    let mut total = 0.0;
    for grad in per_layer_grads {
        for &x in grad.as_slice() {
            if !x.is_finite() {
                return f64::INFINITY;
            }
        }
        total += grad.frobenius_norm();
    }
    total
}

/// Anomaly score: current norm over the history mean (plus ξ). An empty
/// history scores 0 — there is no baseline to diverge from yet.
pub fn anomaly_score(current: f64, hist: &NormHistory, xi: f64) -> f64 {
    assert!(xi > 0.0);
    match hist.mean() {
        None => 0.0,
        Some(mean) => current / (mean + xi),
    }
}

/// Three-way classification of a score, with escalation when the score has
/// sat above τ_low for `max_consecutive_low` prior epochs.
pub fn classify(s: f64, consecutive_low_count: usize, cfg: &StabilityConfig) -> AnomalyVerdict {
    if s.is_nan() || s >= cfg.tau_high {
        AnomalyVerdict::SuddenExplosion
    } else if s > cfg.tau_low {
        if consecutive_low_count >= cfg.max_consecutive_low {
            AnomalyVerdict::SuddenExplosion
        } else {
            AnomalyVerdict::AccumulatedDivergence
        }
    } else {
        AnomalyVerdict::Normal
    }
}

/// Rescale every layer block by one factor so the total norm equals
/// `grad_stable`; the update direction is preserved.
pub fn soft_rollback(per_layer_grads: &[Matrix], grad_stable: f64) -> Result<Vec<Matrix>> {
    let total = total_norm(per_layer_grads);
    if total == 0.0 {
        return Err(Error::ZeroGradient);
    }
    assert!(total.is_finite(), "soft rollback on a non-finite gradient");
    let scale = grad_stable / total;
    Ok(per_layer_grads.iter().map(|g| g.scale(scale)).collect())
}

/// Per-client monitor state: history plus the escalation counter.
#[derive(Debug, Clone)]
pub struct Monitor {
    pub history: NormHistory,
    pub consecutive_low: usize,
}

impl Monitor {
    pub fn new(cfg: &StabilityConfig) -> Self {
        Monitor {
            history: NormHistory::new(cfg.window),
            consecutive_low: 0,
        }
    }

    /// Score a raw update norm. During the per-round warmup (fewer than
    /// `warmup` recorded norms) the score is pinned to 0.
    pub fn score(&self, raw_norm: f64, cfg: &StabilityConfig) -> f64 {
        if self.history.len() < cfg.warmup {
            0.0
        } else {
            anomaly_score(raw_norm, &self.history, cfg.xi)
        }
    }

    pub fn classify(&self, s: f64, cfg: &StabilityConfig) -> AnomalyVerdict {
        classify(s, self.consecutive_low, cfg)
    }

    /// Track consecutive over-τ_low epochs for the escalation rule.
    pub fn note_score(&mut self, s: f64, cfg: &StabilityConfig) {
        if s > cfg.tau_low {
            self.consecutive_low += 1;
        } else {
            self.consecutive_low = 0;
        }
    }

    /// Only norms of applied updates enter the baseline.
    pub fn record_applied(&mut self, norm: f64) {
        self.history.push(norm);
    }

    /// The window does not span communication rounds.
    pub fn start_round(&mut self) {
        self.history.clear();
        self.consecutive_low = 0;
    }

    pub fn clear(&mut self) {
        self.start_round();
    }
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    fn severity(v: AnomalyVerdict) -> u8 {
        match v {
            AnomalyVerdict::Normal => 0,
            AnomalyVerdict::AccumulatedDivergence => 1,
            AnomalyVerdict::SuddenExplosion => 2,
        }
    }

    proptest! {
        #[test]
        fn classify_is_monotone_in_the_score(
            a in 0.0..2000.0f64,
            b in 0.0..2000.0f64,
            consecutive in 0usize..6,
        ) {
            let cfg = StabilityConfig::default();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(
                severity(classify(lo, consecutive, &cfg))
                    <= severity(classify(hi, consecutive, &cfg))
            );
        }

        #[test]
        fn rollback_hits_the_target_and_is_idempotent(
            entries in prop::collection::vec(-5.0..5.0f64, 1..12),
            target in 0.1..20.0f64,
        ) {
            prop_assume!(entries.iter().any(|&x| x != 0.0));
            let grads = vec![Matrix::from_vec(1, entries.len(), entries)];
            let once = soft_rollback(&grads, target).unwrap();
            prop_assert!((total_norm(&once) - target).abs() <= 1e-9 * target);
            let twice = soft_rollback(&once, target).unwrap();
            for (a, b) in once.iter().zip(&twice) {
                prop_assert!(a.sub(b).max_abs() <= 1e-12 * target.max(1.0));
            }
        }
    }
}
