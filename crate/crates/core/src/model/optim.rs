use super::{decays, ModelParams};

/// Adam with decoupled weight decay:
///
/// ```text
/// m = β1·m + (1-β1)·g
/// v = β2·v + (1-β2)·g²
/// θ -= lr · ( m̂ / (sqrt(v̂) + ε) + λ·θ )      (λ only on decayed tensors)
/// ```
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamW {
    pub fn new(params: &ModelParams, epsilon: f64, weight_decay: f64) -> Self {
        let shapes: Vec<usize> = params.tensors().iter().map(|(_, t)| t.len()).collect();
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon,
            weight_decay,
            step: 0,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ModelParams, grads: &ModelParams, lr: f64) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        let (b1, b2) = (self.beta1, self.beta2);

        let tensors = params.tensors_mut().into_iter().zip(grads.tensors());
        for (((name, theta), (_, grad)), (m, v)) in tensors.zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            let decay = if decays(&name) { self.weight_decay } else { 0.0 };
            for i in 0..theta.len() {
                let g = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                theta[i] -= lr * (m_hat / (v_hat.sqrt() + self.epsilon) + decay * theta[i]);
            }
        }
    }
}
