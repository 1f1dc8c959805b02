//! Windowed loss-threshold convergence.
//!
//! The trailing `window * patience` recorded points are cut into `patience`
//! consecutive windows of `window` points. The run has converged when every
//! one of those window means is below the threshold.

use serde::{Deserialize, Serialize};

use super::TrainingError;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossPoint {
    pub step: u64,
    pub loss: f64,
}

impl LossPoint {
    pub fn new(step: u64, loss: f64) -> Self {
        Self { step, loss }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergencePolicy {
    pub loss_threshold: f64,
    /// Number of recorded points averaged per window.
    pub window: usize,
    /// Consecutive windows that must each sit below the threshold.
    pub patience: usize,
}

impl Default for ConvergencePolicy {
    fn default() -> Self {
        Self {
            loss_threshold: 0.1,
            window: 100,
            patience: 3,
        }
    }
}

impl ConvergencePolicy {
    pub fn new(loss_threshold: f64, window: usize, patience: usize) -> Self {
        Self {
            loss_threshold,
            window,
            patience,
        }
    }

    pub fn validate(&self) -> Result<(), TrainingError> {
        if !(self.loss_threshold.is_finite() && self.loss_threshold > 0.0) {
            return Err(TrainingError::InvalidConfig(format!(
                "loss_threshold must be positive, got {}",
                self.loss_threshold
            )));
        }
        if self.window == 0 || self.patience == 0 {
            return Err(TrainingError::InvalidConfig(
                "window and patience must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Points needed before convergence can be declared.
    pub fn span(&self) -> usize {
        self.window.saturating_mul(self.patience)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceDecision {
    Converged,
    NotConverged,
}

fn windows_below(losses: impl DoubleEndedIterator<Item = f64>, policy: &ConvergencePolicy) -> bool {
    let mut taken = 0usize;
    let mut sum = 0.0;
    for loss in losses.rev().take(policy.span()) {
        sum += loss;
        taken += 1;
        if taken.is_multiple_of(policy.window) {
            if sum / policy.window as f64 >= policy.loss_threshold {
                return false;
            }
            sum = 0.0;
        }
    }
    taken == policy.span()
}

pub fn check_convergence(history: &[LossPoint], policy: &ConvergencePolicy) -> ConvergenceDecision {
    if policy.window == 0 || policy.patience == 0 || history.len() < policy.span() {
        return ConvergenceDecision::NotConverged;
    }
    if windows_below(history.iter().map(|p| p.loss), policy) {
        ConvergenceDecision::Converged
    } else {
        ConvergenceDecision::NotConverged
    }
}

/// Replays a history point by point and returns the step at which
/// [`check_convergence`] first reports convergence.
pub fn convergence_step(history: &[LossPoint], policy: &ConvergencePolicy) -> Option<u64> {
    if policy.window == 0 || policy.patience == 0 {
        return None;
    }
    (policy.span().max(1)..=history.len())
        .find(|&end| check_convergence(&history[..end], policy) == ConvergenceDecision::Converged)
        .map(|end| history[end - 1].step)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn history(losses: &[f64]) -> Vec<LossPoint> {
        losses
            .iter()
            .enumerate()
            .map(|(i, &l)| LossPoint::new(i as u64 * 10, l))
            .collect()
    }

    #[test]
    fn trailing_mean_below_threshold() {
        let h = history(&[2.0, 1.0, 0.4, 0.09, 0.08, 0.07]);
        let policy = ConvergencePolicy::new(0.1, 3, 1);
        assert_eq!(check_convergence(&h, &policy), ConvergenceDecision::Converged);
        let strict = ConvergencePolicy::new(0.05, 3, 1);
        assert_eq!(check_convergence(&h, &strict), ConvergenceDecision::NotConverged);
    }

    #[test]
    fn too_short_history() {
        let h = history(&[0.01, 0.01]);
        assert_eq!(
            check_convergence(&h, &ConvergencePolicy::new(0.1, 3, 1)),
            ConvergenceDecision::NotConverged
        );
        assert_eq!(
            check_convergence(&[], &ConvergencePolicy::default()),
            ConvergenceDecision::NotConverged
        );
    }

    #[test]
    fn patience_needs_every_window() {
        // windows of 2: [0.3, 0.3] [0.05, 0.05] -> first window fails
        let h = history(&[0.3, 0.3, 0.05, 0.05]);
        assert_eq!(
            check_convergence(&h, &ConvergencePolicy::new(0.1, 2, 2)),
            ConvergenceDecision::NotConverged
        );
        assert_eq!(
            check_convergence(&h, &ConvergencePolicy::new(0.1, 2, 1)),
            ConvergenceDecision::Converged
        );
    }

    #[test]
    fn threshold_is_strict() {
        let h = history(&[0.1, 0.1]);
        assert_eq!(
            check_convergence(&h, &ConvergencePolicy::new(0.1, 2, 1)),
            ConvergenceDecision::NotConverged
        );
    }

    #[test]
    fn replay_finds_first_flip() {
        let h = history(&[2.0, 1.0, 0.4, 0.09, 0.08, 0.07]);
        // windows of 3: [1.0,0.4,0.09] mean .496; [0.4,.09,.08] .19; [.09,.08,.07] .08
        assert_eq!(convergence_step(&h, &ConvergencePolicy::new(0.1, 3, 1)), Some(50));
        assert_eq!(convergence_step(&h, &ConvergencePolicy::new(0.05, 3, 1)), None);
    }

    #[test]
    fn default_policy() {
        let p = ConvergencePolicy::default();
        assert_eq!((p.loss_threshold, p.window, p.patience), (0.1, 100, 3));
        assert!(p.validate().is_ok());
        assert!(ConvergencePolicy::new(0.0, 1, 1).validate().is_err());
        assert!(ConvergencePolicy::new(0.1, 0, 1).validate().is_err());
    }
}
