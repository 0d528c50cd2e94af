use ndarray::Array2;

use super::params::ParamStore;
use super::TrainConfig;

/// First and second moments per parameter plus the shared step count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct AdamState {
    pub m: Vec<Array2<f64>>,
    pub v: Vec<Array2<f64>>,
    pub t: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Array2<f64>> = store
            .iter()
            .map(|(_, p)| Array2::zeros(p.value.raw_dim()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` in place, at step `t` (1-based).
#[allow(clippy::too_many_arguments)]
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    betas: (f64, f64),
    eps: f64,
) {
    let (b1, b2) = betas;
    let c1 = 1.0 - b1.powi(t as i32);
    let c2 = 1.0 - b2.powi(t as i32);
    for i in 0..param.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        let mhat = m[i] / c1;
        let vhat = v[i] / c2;
        param[i] -= lr * mhat / (vhat.sqrt() + eps);
    }
}

/// Applies one Adam step to every trainable parameter that has a gradient.
pub fn adam_step(store: &mut ParamStore, grads: &[Option<Array2<f64>>], state: &mut AdamState, config: &TrainConfig) {
    state.t += 1;
    let ids: Vec<_> = store.iter().map(|(id, p)| (id, p.trainable)).collect();
    for (id, trainable) in ids {
        let Some(g) = grads.get(id.0).and_then(Option::as_ref) else { continue };
        if !trainable {
            continue;
        }
        let p = store.get_mut(id);
        adam_update(
            p.value.as_slice_mut().expect("parameters are contiguous"),
            g.as_standard_layout().as_slice().expect("standard layout"),
            state.m[id.0].as_slice_mut().expect("contiguous"),
            state.v[id.0].as_slice_mut().expect("contiguous"),
            state.t,
            config.learning_rate,
            config.betas,
            config.adam_eps,
        );
    }
}
