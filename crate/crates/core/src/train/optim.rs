use crate::nn::ParamStore;

/// Adaptive-moment optimizer over every trainable parameter that has received a gradient.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Self {
            lr,
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore) {
        self.step += 1;
        if self.m.len() < params.len() {
            self.m.resize(params.len(), Vec::new());
            self.v.resize(params.len(), Vec::new());
        }
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let step_size = (self.lr / c1) as f32;
        let inv_c2 = (1.0 / c2) as f32;
        let eps = self.eps as f32;
        for (i, p) in params.iter_mut().enumerate() {
            if !p.trainable || p.grad.len() != p.value.len() {
                continue;
            }
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            if m.is_empty() {
                *m = vec![0.0; p.value.len()];
                *v = vec![0.0; p.value.len()];
            }
            for (((w, &g), mi), vi) in p
                .value
                .iter_mut()
                .zip(&p.grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = b1 * *mi + (1.0 - b1) * g;
                *vi = b2 * *vi + (1.0 - b2) * g * g;
                *w -= step_size * *mi / ((*vi * inv_c2).sqrt() + eps);
            }
        }
    }
}
