use super::Tensor;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Adam {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor]) -> Self {
        AdamState {
            step: 0,
            m: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.rows(), p.cols())).collect(),
        }
    }
}

/// One bias-corrected update of every tensor in `params`:
/// `p -= lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * p)`.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState, opt: &Adam) {
    assert_eq!(params.len(), grads.len(), "one gradient per parameter");
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - opt.beta1.powi(t);
    let c2 = 1.0 - opt.beta2.powi(t);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        assert_eq!(p.shape(), g.shape(), "gradient shape for parameter {i}");
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, (w, &gr)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
            m[j] = opt.beta1 * m[j] + (1.0 - opt.beta1) * gr;
            v[j] = opt.beta2 * v[j] + (1.0 - opt.beta2) * gr * gr;
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= opt.lr * (m_hat / (v_hat.sqrt() + opt.eps) + opt.weight_decay * *w);
        }
    }
}
