use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Adam with bias-corrected moments over a list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: Vec<Tensor>,
    second_moment: Vec<Tensor>,
}

impl Adam {
    /// Moments are allocated to match `params`. Betas default to 0.9 / 0.999 and ε to 1e-8.
    pub fn new(learning_rate: f64, params: &[Tensor]) -> Self {
        Self::with_hyper(learning_rate, 0.9, 0.999, 1e-8, params)
    }

    pub fn with_hyper(learning_rate: f64, beta1: f64, beta2: f64, epsilon: f64, params: &[Tensor]) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn first_moment(&self) -> &[Tensor] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[Tensor] {
        &self.second_moment
    }

    /// One update. Gradients are validated before anything is mutated, so a
    /// non-finite gradient leaves parameters and state untouched.
    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != params.len() {
            return Err(Error::shape(
                "adam_step (params vs state)",
                params.len(),
                self.first_moment.len(),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            p.same_shape(g, "adam_step (param vs grad)")?;
            p.same_shape(&self.first_moment[i], "adam_step (param vs moment)")?;
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient {
                    index: i,
                    step: self.step_count + 1,
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);

        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((pw, &gw), mw), vw) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mw = b1 * *mw + (1.0 - b1) * gw;
                *vw = b2 * *vw + (1.0 - b2) * gw * gw;
                let m_hat = *mw / bc1;
                let v_hat = *vw / bc2;
                *pw -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = vec![Tensor::new(vec![3], vec![0.3, -1.0, 2.5]).unwrap()];
        let before = params.clone();
        let mut adam = Adam::new(1e-4, &params);
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor::zeros(&[3])]).unwrap();
        }
        assert_eq!(params, before);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // m = 0.1, v = 0.001, m̂ = 1, v̂ = 1 → Δ = -1e-4 / (1 + 1e-8)
        let mut params = vec![Tensor::scalar(0.0)];
        let mut adam = Adam::new(1e-4, &params);
        adam.step(&mut params, &[Tensor::scalar(1.0)]).unwrap();
        let w = params[0].item();
        assert!((w - (-1e-4 / (1.0 + 1e-8))).abs() < 1e-18, "{w}");
        assert!((w - (-9.99999999e-5)).abs() < 1e-12, "{w}");
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn three_step_quadratic_trajectory() {
        // f(w) = (w - 3)², g = 2(w - 3); scalar reference loop.
        let (lr, b1, b2, eps) = (0.1, 0.9, 0.999, 1e-8);
        let (mut w, mut m, mut v) = (0.0f64, 0.0f64, 0.0f64);
        let mut reference = Vec::new();
        for t in 1..=3 {
            let g = 2.0 * (w - 3.0);
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            w -= lr * mh / (vh.sqrt() + eps);
            reference.push(w);
        }

        let mut params = vec![Tensor::scalar(0.0)];
        let mut adam = Adam::with_hyper(lr, b1, b2, eps, &params);
        for expected in reference {
            let g = 2.0 * (params[0].item() - 3.0);
            adam.step(&mut params, &[Tensor::scalar(g)]).unwrap();
            assert!((params[0].item() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_gradient_is_an_error() {
        let mut params = vec![Tensor::scalar(1.0), Tensor::zeros(&[2])];
        let mut adam = Adam::new(1e-3, &params);
        let grads = [Tensor::scalar(0.5), Tensor::new(vec![2], vec![f64::NAN, 0.0]).unwrap()];
        let err = adam.step(&mut params, &grads).unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient { index: 1, step: 1 }));
        assert_eq!(params[0].item(), 1.0);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn second_moment_stays_non_negative() {
        let mut params = vec![Tensor::zeros(&[4])];
        let mut adam = Adam::new(1e-2, &params);
        for k in 0..10 {
            let g = Tensor::new(vec![4], vec![-1.0, 2.0, -(k as f64), 0.5]).unwrap();
            adam.step(&mut params, &[g]).unwrap();
            assert!(adam.second_moment()[0].data().iter().all(|&v| v >= 0.0));
            assert_eq!(adam.first_moment()[0].shape(), params[0].shape());
        }
    }
}
