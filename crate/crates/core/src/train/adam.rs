use crate::error::{Error, Result};

/// Adam optimizer state: one pair of moment buffers per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Default for AdamState {
    fn default() -> Self {
        Self::new(1e-4)
    }
}

impl AdamState {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One bias-corrected update. Moment buffers are allocated on the first
    /// call and must keep matching shapes afterwards.
    pub fn update(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} parameter tensors, {} gradients",
                params.len(),
                grads.len()
            )));
        }
        if self.m.is_empty() {
            self.m = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != params.len() {
            return Err(Error::ShapeMismatch(
                "optimizer state was built for another model".into(),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != g.len() || p.len() != self.m[i].len() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter tensor {i} size mismatch"
                )));
            }
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..p.len() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_a_no_op() {
        let mut w = vec![0.3, -1.2];
        let mut adam = AdamState::new(0.1);
        adam.update(&mut [&mut w], &[&[0.0, 0.0]]).unwrap();
        assert_eq!(w, vec![0.3, -1.2]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut w = vec![1.0, 1.0, 1.0];
        let mut adam = AdamState::new(1e-3);
        adam.update(&mut [&mut w], &[&[5.0, -0.01, 200.0]]).unwrap();
        for (x, s) in w.iter().zip([1.0, -1.0, 1.0]) {
            assert!((x - (1.0 - 1e-3 * s)).abs() < 1e-8);
        }
    }

    #[test]
    fn minimizes_a_parabola() {
        let mut w = vec![1.0];
        let mut adam = AdamState::new(0.05);
        for _ in 0..200 {
            let g = 2.0 * w[0];
            adam.update(&mut [&mut w], &[&[g]]).unwrap();
        }
        assert!(w[0].abs() < 0.1, "w = {}", w[0]);
    }

    #[test]
    fn shape_mismatch() {
        let mut w = vec![1.0];
        let mut adam = AdamState::new(0.05);
        assert!(adam.update(&mut [&mut w], &[&[1.0, 2.0]]).is_err());
    }
}
