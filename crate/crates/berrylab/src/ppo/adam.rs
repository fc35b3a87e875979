//! Adam optimizer over flat parameter vectors.

use super::PpoError;

/// First/second-moment adaptive gradient step with bias correction.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(learning_rate: f64, param_count: usize) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            t: 0,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// In-place update of `params` from `grads`. Deterministic given the
    /// optimizer state; parameters stay finite for finite inputs.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), PpoError> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(PpoError::Shape(format!(
                "optimizer holds {} parameters, got params {} / grads {}",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.t += 1;
        let bc1 = 1.0 - self.beta1.powi(self.t as i32);
        let bc2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = Adam::new(1e-2, 4);
        let mut params = [1.0, -2.0, 0.5, 3.0];
        let before = params;
        for _ in 0..5 {
            adam.step(&mut params, &[0.0; 4]).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn scalar_constant_gradient_matches_hand_recurrence() {
        let lr = 0.1;
        let g = 0.3;
        let mut adam = Adam::new(lr, 1);
        let mut params = [2.0];

        // Hand-iterated recurrence with the same coefficients.
        let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
        let (mut m, mut v, mut p) = (0.0, 0.0, 2.0);
        for t in 1..=25i32 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - b1.powi(t));
            let v_hat = v / (1.0 - b2.powi(t));
            p -= lr * m_hat / (v_hat.sqrt() + eps);
            adam.step(&mut params, &[g]).unwrap();
            assert_relative_eq!(params[0], p, epsilon = 1e-14);
        }
    }

    #[test]
    fn identical_runs_are_identical() {
        let run = || {
            let mut adam = Adam::new(3e-3, 3);
            let mut params = [0.1, 0.2, 0.3];
            for k in 0..50 {
                let g = [0.01 * k as f64, -0.5, (k as f64).sin()];
                adam.step(&mut params, &g).unwrap();
            }
            params
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let mut adam = Adam::new(1e-3, 2);
        let mut params = [0.0; 3];
        assert!(adam.step(&mut params, &[0.0; 3]).is_err());
    }
}
