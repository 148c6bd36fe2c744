use serde::{Deserialize, Serialize};

/// Linear warm-up from zero, then cosine decay to zero at the last step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub peak_lr: f64,
    pub total_steps: usize,
    pub warmup_steps: usize,
}

impl Schedule {
    pub fn new(peak_lr: f64, total_steps: usize, warmup_ratio: f64) -> Self {
        let warmup_steps = if total_steps == 0 {
            0
        } else {
            ((warmup_ratio * total_steps as f64).ceil() as usize).clamp(1, total_steps)
        };
        Self {
            peak_lr,
            total_steps,
            warmup_steps,
        }
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        let last = self.total_steps.saturating_sub(1);
        if last <= self.warmup_steps {
            return if step >= last && step > 0 {
                0.0
            } else {
                self.peak_lr
            };
        }
        let progress =
            ((step - self.warmup_steps) as f64 / (last - self.warmup_steps) as f64).min(1.0);
        self.peak_lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

pub const WARMUP_RATIO: f64 = 0.01;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn warmup_starts_at_zero_and_cosine_ends_at_zero() {
        let s = Schedule::new(5e-5, 1500, WARMUP_RATIO);
        assert_eq!(s.warmup_steps, 15);
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(15) - 5e-5).abs() < 1e-18);
        assert!(s.lr_at(1499) <= 1e-7 * 5e-5);
        let mut prev = f64::INFINITY;
        for step in 15..1500 {
            let lr = s.lr_at(step);
            assert!(lr <= prev + 1e-20);
            prev = lr;
        }
    }

    #[test]
    fn midpoint_is_half_peak() {
        let s = Schedule::new(1.0, 201, 0.005);
        assert_eq!(s.warmup_steps, 2);
        // progress 0.5 at step 2 + 99
        assert!((s.lr_at(101) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn tiny_runs() {
        let s = Schedule::new(1.0, 1, WARMUP_RATIO);
        assert_eq!(s.lr_at(0), 0.0);
        let s = Schedule::new(1.0, 2, WARMUP_RATIO);
        assert_eq!((s.lr_at(0), s.lr_at(1)), (0.0, 0.0));
    }
}
