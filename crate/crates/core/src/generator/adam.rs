use serde::{Deserialize, Serialize};

use super::mlp::Perceptron;

/// Adaptive moment estimation over the flat parameters of one network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(num_params: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m: vec![0.0; num_params],
            v: vec![0.0; num_params],
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, net: &mut Perceptron, grad: &Perceptron) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let g = grad.flat();
        debug_assert_eq!(g.len(), self.m.len());
        for (((p, g), m), v) in net
            .params_mut()
            .zip(&g)
            .zip(self.m.iter_mut())
            .zip(self.v.iter_mut())
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Stream};

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut net = Perceptron::new(2, 3, &mut stream(0, Stream::Networks)).unwrap();
        let before = net.flat();
        let mut grad = net.zeros_like();
        grad.set_flat(&vec![0.5; net.num_params()]);
        let mut opt = Adam::new(net.num_params(), 1e-3);
        opt.update(&mut net, &grad);
        for (a, b) in net.flat().iter().zip(&before) {
            assert!((b - a - 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut net = Perceptron::new(2, 3, &mut stream(0, Stream::Networks)).unwrap();
        let before = net.flat();
        let grad = net.zeros_like();
        let mut opt = Adam::new(net.num_params(), 1e-3);
        opt.update(&mut net, &grad);
        assert_eq!(net.flat(), before);
    }
}
