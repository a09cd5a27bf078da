//! Adaptive moment estimation with decoupled weight decay.
//!
//! For each trainable tensor `θ` with gradient `g` at step `t`:
//!
//! ```text
//! m ← β1·m + (1-β1)·g
//! v ← β2·v + (1-β2)·g²
//! θ ← θ - lr·λ·θ                      (matrices and kernels only)
//! θ ← θ - lr·(m/(1-β1^t)) / (sqrt(v/(1-β2^t)) + ε)
//! ```

use std::collections::BTreeMap;

use crate::model::ParamStore;

#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        AdamW {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Applies one update. `grads` maps parameter names to flat gradients;
    /// parameters without an entry are left untouched.
    pub fn step(&mut self, params: &mut ParamStore, grads: &BTreeMap<String, Vec<f64>>) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, g) in grads {
            let Some(p) = params.get_mut(name) else { continue };
            let decay = p.shape().len() >= 2;
            let (m, v) = self
                .moments
                .entry(name.clone())
                .or_insert_with(|| (vec![0.0; g.len()], vec![0.0; g.len()]));
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                if decay {
                    *x -= self.lr * self.weight_decay * *x;
                }
                *x -= self.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn zero_lr_is_identity() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::matrix(2, 2, vec![1., 2., 3., 4.]).unwrap());
        let before = p.clone();
        let mut opt = AdamW::new(0.0, 0.1);
        let grads = BTreeMap::from([("w".to_string(), vec![1.0; 4])]);
        opt.step(&mut p, &grads);
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = ParamStore::new();
        p.insert("b", Tensor::vector(vec![0.0, 0.0]));
        let mut opt = AdamW::new(0.1, 0.0);
        let grads = BTreeMap::from([("b".to_string(), vec![2.0, -3.0])]);
        opt.step(&mut p, &grads);
        let d = p.get("b").unwrap().data();
        assert!((d[0] + 0.1).abs() < 1e-6 && (d[1] - 0.1).abs() < 1e-6);
    }

    #[test]
    fn decay_applies_to_matrices_only() {
        let mut p = ParamStore::new();
        p.insert("w", Tensor::matrix(1, 1, vec![1.0]).unwrap());
        p.insert("b", Tensor::vector(vec![1.0]));
        let mut opt = AdamW::new(0.1, 0.5);
        let grads = BTreeMap::from([("w".to_string(), vec![0.0]), ("b".to_string(), vec![0.0])]);
        opt.step(&mut p, &grads);
        assert!((p.get("w").unwrap().data()[0] - 0.95).abs() < 1e-12);
        assert_eq!(p.get("b").unwrap().data()[0], 1.0);
    }
}
