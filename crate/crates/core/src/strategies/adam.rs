//! Adam with bias-corrected moment estimates.

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

/// Moment buffers for one flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    /// `step` is the 1-based update count used for bias correction.
    pub fn update(&mut self, cfg: &AdamConfig, step: u64, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        let bc1 = 1.0 - cfg.beta1.powf(step as f64);
        let bc2 = 1.0 - cfg.beta2.powf(step as f64);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grad)
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
            *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const CFG: AdamConfig = AdamConfig {
        learning_rate: 0.1,
        beta1: 0.9,
        beta2: 0.999,
        epsilon: 1e-8,
    };

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut opt = Adam::new(2);
        let mut p = vec![1.0, -1.0];
        opt.update(&CFG, 1, &mut p, &[3.0, -0.5]);
        assert!((p[0] - 0.9).abs() < 1e-7);
        assert!((p[1] + 0.9).abs() < 1e-7);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut opt = Adam::new(1);
        let mut p = vec![0.25];
        opt.update(&CFG, 1, &mut p, &[0.0]);
        assert_eq!(p, [0.25]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut opt = Adam::new(1);
        let mut p = vec![5.0];
        for step in 1..=500 {
            let g = [2.0 * (p[0] - 2.0)];
            opt.update(&CFG, step, &mut p, &g);
        }
        assert!((p[0] - 2.0).abs() < 1e-2);
    }
}
