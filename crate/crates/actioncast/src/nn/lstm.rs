//! Single LSTM cell with combined gate weights and hand-written BPTT
//! support. Gate rows in the `[4H, X+H]` weight matrix are ordered
//! forget, input, candidate, output; the gate input is `[x, h_prev]`.

use crate::nn::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LstmState<T> {
    pub h: Vec<T>,
    pub c: Vec<T>,
}

impl<T: Scalar> LstmState<T> {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![T::zero(); hidden],
            c: vec![T::zero(); hidden],
        }
    }
}

/// Intermediate activations needed by the backward pass.
#[derive(Clone, Debug)]
pub struct LstmCache<T> {
    z: Vec<T>,
    f: Vec<T>,
    i: Vec<T>,
    g: Vec<T>,
    o: Vec<T>,
    c_prev: Vec<T>,
    tanh_c: Vec<T>,
    input_len: usize,
}

fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// One LSTM step: standard gates
/// `f,i,o = sigmoid(W..*[x,h]+b)`, `g = tanh(..)`,
/// `c = f*c_prev + i*g`, `h = o*tanh(c)`.
pub fn lstm_step<T: Scalar>(
    x: &[T],
    state: &LstmState<T>,
    weight: &Tensor<T>,
    bias: &[T],
) -> (LstmState<T>, LstmCache<T>) {
    let hidden = state.h.len();
    let [rows, cols] = *weight.shape() else {
        panic!("lstm weight shape")
    };
    assert_eq!(rows, 4 * hidden, "lstm weight rows");
    assert_eq!(cols, x.len() + hidden, "lstm weight cols");
    assert_eq!(bias.len(), 4 * hidden, "lstm bias");

    let mut z = Vec::with_capacity(cols);
    z.extend_from_slice(x);
    z.extend_from_slice(&state.h);
    let a = super::ops::dense(&z, weight, bias);

    let mut f = Vec::with_capacity(hidden);
    let mut i = Vec::with_capacity(hidden);
    let mut g = Vec::with_capacity(hidden);
    let mut o = Vec::with_capacity(hidden);
    for k in 0..hidden {
        f.push(sigmoid(a[k]));
        i.push(sigmoid(a[hidden + k]));
        g.push(a[2 * hidden + k].tanh());
        o.push(sigmoid(a[3 * hidden + k]));
    }
    let c: Vec<T> = (0..hidden)
        .map(|k| f[k] * state.c[k] + i[k] * g[k])
        .collect();
    let tanh_c: Vec<T> = c.iter().map(|v| v.tanh()).collect();
    let h: Vec<T> = (0..hidden).map(|k| o[k] * tanh_c[k]).collect();

    let cache = LstmCache {
        z,
        f,
        i,
        g,
        o,
        c_prev: state.c.clone(),
        tanh_c,
        input_len: x.len(),
    };
    (LstmState { h, c }, cache)
}

/// Backward through one step. Takes the incoming gradients wrt the new
/// hidden and cell state; returns gradients wrt the step input and the
/// previous state, plus weight/bias gradients for accumulation.
pub fn lstm_step_backward<T: Scalar>(
    cache: &LstmCache<T>,
    weight: &Tensor<T>,
    grad_h: &[T],
    grad_c: &[T],
) -> (Vec<T>, LstmState<T>, Tensor<T>, Vec<T>) {
    let hidden = cache.f.len();
    let mut da = vec![T::zero(); 4 * hidden];
    let mut dc_prev = vec![T::zero(); hidden];
    for k in 0..hidden {
        let do_ = grad_h[k] * cache.tanh_c[k];
        let dc = grad_c[k] + grad_h[k] * cache.o[k] * (T::one() - cache.tanh_c[k] * cache.tanh_c[k]);
        let df = dc * cache.c_prev[k];
        let di = dc * cache.g[k];
        let dg = dc * cache.i[k];
        da[k] = df * cache.f[k] * (T::one() - cache.f[k]);
        da[hidden + k] = di * cache.i[k] * (T::one() - cache.i[k]);
        da[2 * hidden + k] = dg * (T::one() - cache.g[k] * cache.g[k]);
        da[3 * hidden + k] = do_ * cache.o[k] * (T::one() - cache.o[k]);
        dc_prev[k] = dc * cache.f[k];
    }
    let (dz, grad_w, grad_b) = super::ops::dense_backward(&cache.z, weight, &da);
    let grad_x = dz[..cache.input_len].to_vec();
    let grad_h_prev = dz[cache.input_len..].to_vec();
    (
        grad_x,
        LstmState {
            h: grad_h_prev,
            c: dc_prev,
        },
        grad_w,
        grad_b,
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_params_halve_the_cell_state() {
        let hidden = 3;
        let w = Tensor::<f64>::zeros(&[4 * hidden, 2 + hidden]);
        let b = vec![0.0; 4 * hidden];
        let state = LstmState {
            h: vec![0.0; hidden],
            c: vec![0.8, -0.4, 2.0],
        };
        let (next, _) = lstm_step(&[0.3, -0.7], &state, &w, &b);
        for k in 0..hidden {
            let c = 0.5 * state.c[k];
            assert!((next.c[k] - c).abs() < 1e-12);
            assert!((next.h[k] - 0.5 * c.tanh()).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_input_zero_state_gives_zero_hidden() {
        let hidden = 4;
        let w = Tensor::<f64>::zeros(&[4 * hidden, 1 + hidden]);
        let b = vec![0.0; 4 * hidden];
        let (next, _) = lstm_step(&[0.0], &LstmState::zeros(hidden), &w, &b);
        assert!(next.h.iter().all(|&v| v == 0.0));
        assert!(next.c.iter().all(|&v| v == 0.0));
    }
}
