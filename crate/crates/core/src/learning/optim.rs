use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    PlainGd,
    RmsProp,
}

/// Per-parameter optimizer state. Slots are indexed by the caller, one per
/// parameter tensor.
#[derive(Debug, Clone)]
pub(crate) struct Optimizer {
    kind: OptimizerKind,
    learning_rate: f64,
    decay: f64,
    epsilon: f64,
    mean_sq: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64, decay: f64, epsilon: f64) -> Self {
        Self {
            kind,
            learning_rate,
            decay,
            epsilon,
            mean_sq: Vec::new(),
        }
    }

    pub fn step(&mut self, slot: usize, param: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(param.len(), grad.len());
        match self.kind {
            OptimizerKind::PlainGd => {
                for (p, g) in param.iter_mut().zip(grad) {
                    *p -= self.learning_rate * g;
                }
            }
            OptimizerKind::RmsProp => {
                if self.mean_sq.len() <= slot {
                    self.mean_sq.resize(slot + 1, Vec::new());
                }
                let v = &mut self.mean_sq[slot];
                if v.len() != param.len() {
                    *v = vec![0.0; param.len()];
                }
                // v ← ρv + (1−ρ)g²;  p ← p − η g / (√v + ε)
                for ((p, g), v) in param.iter_mut().zip(grad).zip(v.iter_mut()) {
                    *v = self.decay * *v + (1.0 - self.decay) * g * g;
                    *p -= self.learning_rate * g / (v.sqrt() + self.epsilon);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_gd_step() {
        let mut opt = Optimizer::new(OptimizerKind::PlainGd, 0.1, 0.99, 1e-8);
        let mut p = [1.0, -2.0];
        opt.step(0, &mut p, &[2.0, -1.0]);
        assert_eq!(p, [0.8, -1.9]);
    }

    #[test]
    fn rmsprop_first_step_matches_closed_form() {
        let mut opt = Optimizer::new(OptimizerKind::RmsProp, 1e-3, 0.99, 1e-8);
        let mut p = [0.0];
        opt.step(0, &mut p, &[0.5]);
        let v: f64 = 0.01 * 0.25;
        assert!((p[0] + 1e-3 * 0.5 / (v.sqrt() + 1e-8)).abs() < 1e-15);
        // zero gradient leaves the parameter untouched
        let mut q = [3.0];
        opt.step(1, &mut q, &[0.0]);
        assert_eq!(q, [3.0]);
    }
}
