use crate::error::{PretError, Result};

use super::nn::ParamStore;
use super::Scalar;

/// Decoupled weight-decay Adam.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
        }
    }

    /// One update over every parameter in the store. Errors if any parameter
    /// has no accumulated gradient.
    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        for (_, p) in store.iter() {
            if !p.grad_set {
                return Err(PretError::Optimizer(format!(
                    "parameter {} has no gradient",
                    p.name
                )));
            }
        }
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        let (b1, b2) = (T::from_f(self.beta1), T::from_f(self.beta2));
        let one_m_b1 = T::from_f(1.0 - self.beta1);
        let one_m_b2 = T::from_f(1.0 - self.beta2);
        let lr = T::from_f(self.lr);
        let eps = T::from_f(self.eps);
        let wd = T::from_f(self.lr * self.weight_decay);
        let inv_bc1 = T::from_f(1.0 / bc1);
        let inv_bc2 = T::from_f(1.0 / bc2);
        for p in store.iter_mut() {
            for i in 0..p.data.len() {
                let g = p.grad[i];
                p.m[i] = b1 * p.m[i] + one_m_b1 * g;
                p.v[i] = b2 * p.v[i] + one_m_b2 * g * g;
                let m_hat = p.m[i] * inv_bc1;
                let v_hat = p.v[i] * inv_bc2;
                // decoupled decay, applied directly to the weights
                p.data[i] = p.data[i] - wd * p.data[i] - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::nn::Init;
    use crate::tensor::Graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_grad_zero_decay_leaves_params_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store: ParamStore<f64> = ParamStore::new();
        let pid = store.add(&mut rng, "p", 2, 2, Init::TruncNormal(0.5));
        let before = store.get(pid).data.clone();
        store.add_grad(pid, &[0.0; 4]);
        let mut opt = AdamW::new(1e-2, 0.0);
        opt.step(&mut store).unwrap();
        assert_eq!(store.get(pid).data, before);
    }

    #[test]
    fn constant_grad_moves_opposite_sign() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store: ParamStore<f64> = ParamStore::new();
        let pid = store.add(&mut rng, "p", 1, 2, Init::Zeros);
        let mut opt = AdamW::new(1e-2, 0.0);
        for _ in 0..50 {
            store.zero_grads();
            store.add_grad(pid, &[1.0, -1.0]);
            opt.step(&mut store).unwrap();
        }
        let p = store.get(pid);
        assert!(p.data[0] < 0.0);
        assert!(p.data[1] > 0.0);
    }

    #[test]
    fn missing_grad_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut store: ParamStore<f64> = ParamStore::new();
        store.add(&mut rng, "p", 1, 2, Init::Zeros);
        let mut opt = AdamW::new(1e-2, 0.0);
        assert!(opt.step(&mut store).is_err());
    }

    #[test]
    fn one_step_reduces_quadratic_loss() {
        // loss(p) = sum(p^2) via the graph; oracle = evaluate loss before/after
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut store: ParamStore<f64> = ParamStore::new();
        let pid = store.add(&mut rng, "p", 1, 4, Init::TruncNormal(1.0));
        let eval = |store: &ParamStore<f64>| -> (f64, Vec<f64>) {
            let mut g: Graph<f64> = Graph::new();
            let p = g.param(store, pid);
            let sq = g.mul_row(p, p); // works since p is [1,4]
            let loss = g.mean_all(sq);
            g.backward(loss);
            let mut grads = vec![0.0; 4];
            if let Some(gr) = g.grad(p) {
                grads.copy_from_slice(gr);
            }
            (g.value(loss)[0], grads)
        };
        let (before, grads) = eval(&store);
        store.zero_grads();
        store.add_grad(pid, &grads);
        let mut opt = AdamW::new(1e-3, 0.0);
        opt.step(&mut store).unwrap();
        let (after, _) = eval(&store);
        assert!(after < before, "{} !< {}", after, before);
    }
}
