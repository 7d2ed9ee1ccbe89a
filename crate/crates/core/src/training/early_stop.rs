/// Patience counter over validation losses.
///
/// An evaluation counts as an improvement when it beats the reference
/// loss by at least `min_delta`; the reference then moves to it. The
/// best loss for checkpointing is tracked separately as a plain minimum.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    reference: f64,
    stale: usize,
    best: f64,
    best_epoch: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StopUpdate {
    /// The loss is a new minimum and should be checkpointed.
    pub new_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        Self {
            patience,
            min_delta,
            reference: f64::INFINITY,
            stale: 0,
            best: f64::INFINITY,
            best_epoch: None,
        }
    }

    pub fn update(&mut self, epoch: usize, loss: f64) -> StopUpdate {
        let new_best = loss < self.best;
        if new_best {
            self.best = loss;
            self.best_epoch = Some(epoch);
        }
        if loss < self.reference - self.min_delta || self.reference.is_infinite() {
            self.reference = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
        }
        StopUpdate {
            new_best,
            stop: self.stale >= self.patience,
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }

    pub fn best_loss(&self) -> f64 {
        self.best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run(losses: &[f64], patience: usize) -> (usize, Option<usize>) {
        let mut es = EarlyStopping::new(patience, 1e-5);
        for (i, &l) in losses.iter().enumerate() {
            if es.update(i + 1, l).stop {
                return (i + 1, es.best_epoch());
            }
        }
        (losses.len(), es.best_epoch())
    }

    #[test]
    fn patience_one_stops_after_first_worse_epoch() {
        assert_eq!(run(&[1.0, 1.1, 1.2, 1.3], 1), (2, Some(1)));
    }

    #[test]
    fn tiny_gains_do_not_reset_patience() {
        let (stop, best) = run(&[1.0, 0.999_999, 0.999_998, 0.999_997], 3);
        assert_eq!(stop, 4);
        assert_eq!(best, Some(4));
    }

    #[test]
    fn improvements_reset() {
        assert_eq!(run(&[1.0, 1.1, 0.9, 1.0, 0.8, 0.85], 2), (6, Some(5)));
    }
}
