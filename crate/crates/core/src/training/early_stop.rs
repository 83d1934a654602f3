/// Outcome of feeding one epoch's validation score to [`EarlyStopping`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Improved,
    Continue,
    Stop,
}

/// Stops after `patience` consecutive epochs without a strict improvement.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    stale: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience: patience.max(1),
            best: None,
            stale: 0,
        }
    }

    pub fn observe(&mut self, epoch: usize, score: f64) -> Verdict {
        let better = match self.best {
            None => score.is_finite(),
            Some((_, best)) => score < best,
        };
        if better {
            self.best = Some((epoch, score));
            self.stale = 0;
            Verdict::Improved
        } else {
            self.stale += 1;
            if self.stale >= self.patience {
                Verdict::Stop
            } else {
                Verdict::Continue
            }
        }
    }

    /// `(epoch, score)` of the best observation so far.
    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_after_epoch_three_stops_at_ten() {
        let mut es = EarlyStopping::new(7);
        let scores = [5.0, 4.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0, 3.0];
        let mut stopped = None;
        for (k, s) in scores.iter().enumerate() {
            if es.observe(k + 1, *s) == Verdict::Stop {
                stopped = Some(k + 1);
                break;
            }
        }
        assert_eq!(stopped, Some(10));
        assert_eq!(es.best(), Some((3, 3.0)));
    }

    #[test]
    fn strictly_improving_never_stops() {
        let mut es = EarlyStopping::new(7);
        for k in 1..=20 {
            assert_eq!(es.observe(k, 100.0 - k as f64), Verdict::Improved);
        }
    }

    #[test]
    fn nan_is_never_an_improvement() {
        let mut es = EarlyStopping::new(2);
        assert_eq!(es.observe(1, f64::NAN), Verdict::Continue);
        assert_eq!(es.observe(2, 1.0), Verdict::Improved);
        assert_eq!(es.observe(3, f64::NAN), Verdict::Continue);
        assert_eq!(es.observe(4, f64::NAN), Verdict::Stop);
    }
}
