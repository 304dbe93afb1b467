//! Plain SGD and Adam over a [`ParamStore`]. Updates walk parameters in
//! registration order, so optimization is deterministic.

use std::collections::HashMap;

use crate::nn::params::ParamStore;
use crate::nn::tensor::{Scalar, Tensor};

pub struct Sgd {
    pub lr: f64,
}

impl Sgd {
    pub fn new(lr: f64) -> Self {
        Sgd { lr }
    }

    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>) {
        let lr = T::of_f64(self.lr);
        let names: Vec<String> = store.names().to_vec();
        for name in names {
            let p = store.param_mut(&name);
            let g = p.grad.data().to_vec();
            for (v, gi) in p.value.data_mut().iter_mut().zip(g) {
                *v = *v - lr * gi;
            }
        }
    }
}

pub struct Adam<T> {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    state: HashMap<String, (Tensor<T>, Tensor<T>)>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            state: HashMap::new(),
        }
    }

    /// Restricts this optimizer to parameters whose name passes `keep`.
    /// Used by independent-learning mode to update disjoint subsets.
    pub fn step_filtered(&mut self, store: &mut ParamStore<T>, keep: impl Fn(&str) -> bool) {
        self.t += 1;
        let b1 = T::of_f64(self.beta1);
        let b2 = T::of_f64(self.beta2);
        let one = T::one();
        let corr1 = T::of_f64(1.0 - self.beta1.powi(self.t as i32));
        let corr2 = T::of_f64(1.0 - self.beta2.powi(self.t as i32));
        let lr = T::of_f64(self.lr);
        let eps = T::of_f64(self.eps);
        let names: Vec<String> = store.names().to_vec();
        for name in names {
            if !keep(&name) {
                continue;
            }
            let p = store.param_mut(&name);
            let (m, v) = self
                .state
                .entry(name.clone())
                .or_insert_with(|| (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())));
            let md = m.data_mut();
            let vd = v.data_mut();
            let gd = p.grad.data();
            for ((mi, vi), (&gi, pi)) in md
                .iter_mut()
                .zip(vd.iter_mut())
                .zip(gd.iter().zip(p.value.data_mut().iter_mut()))
            {
                *mi = b1 * *mi + (one - b1) * gi;
                *vi = b2 * *vi + (one - b2) * gi * gi;
                let mhat = *mi / corr1;
                let vhat = *vi / corr2;
                *pi = *pi - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }

    pub fn step(&mut self, store: &mut ParamStore<T>) {
        self.step_filtered(store, |_| true);
    }
}
