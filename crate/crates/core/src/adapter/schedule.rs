use super::AdapterError;

/// Cosine decay from `lr_start` at step 0 to `lr_end` at `total_steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CosineSchedule {
    lr_start: f64,
    lr_end: f64,
    total_steps: usize,
}

impl CosineSchedule {
    pub fn new(lr_start: f64, lr_end: f64, total_steps: usize) -> Result<Self, AdapterError> {
        if total_steps == 0 {
            return Err(AdapterError::InvalidSchedule("total_steps must be at least 1".into()));
        }
        if !(lr_end > 0.0 && lr_start >= lr_end && lr_start.is_finite()) {
            return Err(AdapterError::InvalidSchedule(format!(
                "need lr_start >= lr_end > 0, got {lr_start} and {lr_end}"
            )));
        }
        Ok(Self {
            lr_start,
            lr_end,
            total_steps,
        })
    }

    pub fn lr_start(&self) -> f64 {
        self.lr_start
    }

    pub fn lr_end(&self) -> f64 {
        self.lr_end
    }

    pub fn total_steps(&self) -> usize {
        self.total_steps
    }

    pub fn lr(&self, step: usize) -> Result<f64, AdapterError> {
        if step > self.total_steps {
            return Err(AdapterError::StepOutOfRange {
                step,
                total_steps: self.total_steps,
            });
        }
        let phase = std::f64::consts::PI * step as f64 / self.total_steps as f64;
        Ok(self.lr_end + 0.5 * (self.lr_start - self.lr_end) * (1.0 + phase.cos()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        for total in [2, 10, 200, 1000] {
            let s = CosineSchedule::new(1e-4, 8e-5, total).unwrap();
            assert_eq!(s.lr(0).unwrap(), 1e-4);
            assert_eq!(s.lr(total).unwrap(), 8e-5);
            assert_eq!(s.lr(total / 2).unwrap(), 9e-5);
        }
    }

    #[test]
    fn monotone() {
        let s = CosineSchedule::new(1e-4, 8e-5, 1000).unwrap();
        let lrs: Vec<f64> = (0..=1000).map(|k| s.lr(k).unwrap()).collect();
        assert!(lrs.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn errors() {
        let s = CosineSchedule::new(1e-4, 8e-5, 10).unwrap();
        assert_eq!(
            s.lr(11),
            Err(AdapterError::StepOutOfRange {
                step: 11,
                total_steps: 10
            })
        );
        assert!(CosineSchedule::new(1e-4, 8e-5, 0).is_err());
        assert!(CosineSchedule::new(1e-5, 8e-5, 10).is_err());
        assert!(CosineSchedule::new(1e-4, 0.0, 10).is_err());
    }

    #[test]
    fn constant_when_start_equals_end() {
        let s = CosineSchedule::new(0.3, 0.3, 7).unwrap();
        assert!((0..=7).all(|k| s.lr(k).unwrap() == 0.3));
    }
}
