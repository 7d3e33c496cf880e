use serde::{Deserialize, Serialize};

use super::graph::Gradients;
use super::tensor::{ParamStore, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment accumulators, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    pub first: Vec<Tensor>,
    pub second: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|(_, _, t)| Tensor::zeros(t.shape())).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    /// One bias-corrected Adam update of every parameter.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let grads = grads.params();
        if grads.len() != params.len() || self.first.len() != params.len() {
            return Err(Error::invalid(format!(
                "adam: {} parameters, {} gradients, {} accumulators",
                params.len(),
                grads.len(),
                self.first.len()
            )));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as f64;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        for (i, id) in params.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = &grads[i];
            let p = params.get_mut(id);
            if g.shape() != p.shape() || self.first[i].shape() != p.shape() {
                return Err(Error::invalid(format!(
                    "adam: parameter {i} has shape {:?} but gradient {:?}",
                    p.shape(),
                    g.shape()
                )));
            }
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (((pv, gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = beta1 * *mv + (1.0 - beta1) * gv;
                *vv = beta2 * *vv + (1.0 - beta2) * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::Graph;
    use std::collections::HashMap;

    fn grads_for(store: &ParamStore, values: Vec<Vec<f64>>) -> Gradients {
        // loss = Σ_i sum(p_i * g_i) has gradient g_i for parameter i
        let mut g = Graph::new();
        let mut terms = Vec::new();
        let mut inputs = HashMap::new();
        for (i, (id, _, t)) in store.iter().enumerate() {
            let p = g.param(id);
            let c = g.input(format!("g{i}"));
            inputs.insert(format!("g{i}"), Tensor::new(t.shape().to_vec(), values[i].clone()).unwrap());
            let m = g.mul(p, c);
            terms.push(g.sum(m));
        }
        let mut loss = terms[0];
        for t in &terms[1..] {
            loss = g.add(loss, *t);
        }
        g.evaluate(store, &inputs).unwrap();
        g.backward(loss, store).unwrap()
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut store = ParamStore::new();
        store.add("a", Tensor::vector(vec![1.0, -2.0]));
        let before = store.clone();
        let mut st = AdamState::new(AdamConfig::default(), &store);
        let grads = grads_for(&store, vec![vec![0.0, 0.0]]);
        st.step(&mut store, &grads).unwrap();
        assert_eq!(store, before);
        assert_eq!(st.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m̂ = 1, v̂ = 1 at t = 1, so Δ = lr / (1 + ε)
        let mut store = ParamStore::new();
        let id = store.add("a", Tensor::scalar(0.5));
        let mut st = AdamState::new(AdamConfig::default(), &store);
        let grads = grads_for(&store, vec![vec![1.0]]);
        st.step(&mut store, &grads).unwrap();
        let want = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((store.get(id).item() - want).abs() < 1e-15);
    }

    #[test]
    fn identical_params_identical_updates() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::vector(vec![0.3, 0.7]));
        let b = store.add("b", Tensor::vector(vec![0.3, 0.7]));
        let mut st = AdamState::new(AdamConfig::default(), &store);
        for _ in 0..5 {
            let grads = grads_for(&store, vec![vec![0.2, -1.5], vec![0.2, -1.5]]);
            st.step(&mut store, &grads).unwrap();
        }
        assert_eq!(store.get(a), store.get(b));
    }
}
