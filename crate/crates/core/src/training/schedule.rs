use crate::error::{Error, Result};

/// Learning-rate halving and early stopping driven by validation loss.
///
/// The rate is multiplied by `decay_factor` after every epoch that does not
/// set a new best loss; training stops after `patience` such epochs in a row.
#[derive(Debug, Clone, PartialEq)]
pub struct LrSchedule {
    lr0: f64,
    decay_factor: f64,
    patience: usize,
    best: Option<f64>,
    best_epoch: usize,
    since_best: usize,
    decay_events: u32,
    epoch: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochOutcome {
    pub improved: bool,
    pub stop: bool,
}

impl LrSchedule {
    pub fn new(lr0: f64, decay_factor: f64, patience: usize) -> Result<Self> {
        if !(lr0 > 0.0 && lr0.is_finite()) {
            return Err(Error::Config(format!("lr0 must be positive, got {lr0}")));
        }
        if !(decay_factor > 0.0 && decay_factor <= 1.0) {
            return Err(Error::Config(format!("decay_factor must lie in (0, 1], got {decay_factor}")));
        }
        if patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(LrSchedule { lr0, decay_factor, patience, best: None, best_epoch: 0, since_best: 0, decay_events: 0, epoch: 0 })
    }

    /// Rate for the next epoch.
    pub fn lr(&self) -> f64 {
        self.lr0 * self.decay_factor.powi(self.decay_events as i32)
    }

    pub fn decay_events(&self) -> u32 {
        self.decay_events
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// 1-based epoch of the best loss so far (0 before any epoch).
    pub fn best_epoch(&self) -> usize {
        self.best_epoch
    }

    /// Records one epoch's validation loss. Non-finite losses never improve.
    pub fn observe(&mut self, val_loss: f64) -> EpochOutcome {
        self.epoch += 1;
        let improved = val_loss.is_finite() && self.best.is_none_or(|b| val_loss < b);
        if improved {
            self.best = Some(val_loss);
            self.best_epoch = self.epoch;
            self.since_best = 0;
        } else {
            self.since_best += 1;
            self.decay_events += 1;
        }
        EpochOutcome { improved, stop: self.since_best >= self.patience }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64], max_epochs: usize) -> (usize, LrSchedule) {
        let mut s = LrSchedule::new(0.01, 0.5, 5).unwrap();
        for (i, &l) in losses.iter().take(max_epochs).enumerate() {
            if s.observe(l).stop {
                return (i + 1, s);
            }
        }
        (losses.len().min(max_epochs), s)
    }

    #[test]
    fn stops_five_epochs_after_best() {
        let (stopped, s) = run(&[1.0, 0.9, 0.95, 0.96, 0.97, 0.98, 0.99, 0.5], 100);
        assert_eq!(stopped, 7);
        assert_eq!(s.best_epoch(), 2);
    }

    #[test]
    fn improving_runs_to_the_limit() {
        let losses: Vec<f64> = (0..30).map(|i| 1.0 / (i + 1) as f64).collect();
        let (stopped, s) = run(&losses, 20);
        assert_eq!(stopped, 20);
        assert_eq!(s.lr(), 0.01);
    }

    #[test]
    fn lr_after_three_decays() {
        let mut s = LrSchedule::new(0.01, 0.5, 5).unwrap();
        for l in [1.0, 1.1, 1.2, 1.3] {
            s.observe(l);
        }
        assert_eq!(s.decay_events(), 3);
        assert!((s.lr() - 0.00125).abs() < 1e-15);
    }

    #[test]
    fn nan_is_not_an_improvement() {
        let mut s = LrSchedule::new(0.01, 0.5, 2).unwrap();
        assert!(!s.observe(f64::NAN).improved);
        assert!(s.observe(3.0).improved);
    }

    #[test]
    fn invalid_settings() {
        assert!(LrSchedule::new(0.0, 0.5, 5).is_err());
        assert!(LrSchedule::new(0.01, 1.5, 5).is_err());
        assert!(LrSchedule::new(0.01, 0.5, 0).is_err());
    }
}
