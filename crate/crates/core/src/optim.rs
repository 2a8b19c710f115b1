use graphcl_autodiff::{Real, Tensor};

use crate::error::{Error, Result};

/// Adam with bias-corrected moments.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam<S> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor<S>>,
    pub v: Vec<Tensor<S>>,
}

impl<S: Real> Adam<S> {
    pub fn new(lr: f64, params: &[&Tensor<S>]) -> Self {
        let zeros = |p: &&Tensor<S>| Tensor::zeros(p.shape().to_vec());
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
        }
    }

    /// One update. A `None` gradient leaves its parameter and moments untouched.
    pub fn update(&mut self, params: Vec<&mut Tensor<S>>, grads: &[Option<Tensor<S>>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Invalid(format!(
                "optimizer holds {} moments, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as f64;
        let (b1, b2) = (S::of(self.beta1), S::of(self.beta2));
        let (one_b1, one_b2) = (S::of(1.0 - self.beta1), S::of(1.0 - self.beta2));
        let c1 = S::of(1.0 - self.beta1.powf(t));
        let c2 = S::of(1.0 - self.beta2.powf(t));
        let (lr, eps) = (S::of(self.lr), S::of(self.eps));
        for (i, p) in params.into_iter().enumerate() {
            let Some(g) = &grads[i] else { continue };
            if g.shape() != p.shape() {
                return Err(Error::Invalid(format!(
                    "gradient shape {:?} for parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (((w, &g), m), v) in p.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *m = b1 * *m + one_b1 * g;
                *v = b2 * *v + one_b2 * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        // bias correction makes the first step ±lr regardless of gradient scale
        let mut p = Tensor::<f64>::row_vector(&[1.0, -2.0]);
        let mut adam = Adam::new(0.1, &[&p]);
        adam.update(vec![&mut p], &[Some(Tensor::row_vector(&[3.0, -0.5]))]).unwrap();
        assert!((p.data()[0] - 0.9).abs() < 1e-7);
        assert!((p.data()[1] + 1.9).abs() < 1e-7);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = Tensor::<f64>::row_vector(&[5.0, -3.0]);
        let mut adam = Adam::new(0.05, &[&p]);
        for _ in 0..2000 {
            let g = Tensor::row_vector(&[2.0 * p.data()[0], 2.0 * p.data()[1]]);
            adam.update(vec![&mut p], &[Some(g)]).unwrap();
        }
        assert!(p.data().iter().all(|x| x.abs() < 1e-2), "{:?}", p.data());
    }

    #[test]
    fn missing_gradient_is_a_no_op() {
        let mut p = Tensor::<f64>::row_vector(&[1.0]);
        let mut adam = Adam::new(0.1, &[&p]);
        adam.update(vec![&mut p], &[None]).unwrap();
        assert_eq!(p.data(), &[1.0]);
    }
}
