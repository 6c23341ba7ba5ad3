use crate::error::{Error, Result};
use crate::nn::Mlp;

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Moment accumulators for one network.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    m: Mlp,
    v: Mlp,
    step: u64,
}

impl AdamState {
    pub fn new(like: &Mlp) -> Self {
        AdamState {
            m: Mlp::zeros_like(like),
            v: Mlp::zeros_like(like),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Non-finite gradients are rejected
    /// before anything is modified.
    pub fn step(&mut self, params: &mut Mlp, grads: &Mlp, lr: f64) -> Result<()> {
        if params.sizes() != grads.sizes() || params.sizes() != self.m.sizes() {
            return Err(Error::Validation(
                "Adam: parameter/gradient shape mismatch".into(),
            ));
        }
        if !grads.all_finite() {
            return Err(Error::Numeric("Adam: non-finite gradient".into()));
        }
        self.step += 1;
        let (c1, c2) = bias_corrections(self.step);
        for (((p, g), m), v) in params
            .blocks_mut()
            .zip(grads.blocks())
            .zip(self.m.blocks_mut())
            .zip(self.v.blocks_mut())
        {
            update_block(p, g, m, v, lr, c1, c2);
        }
        Ok(())
    }
}

/// Adam for a single scalar parameter (the log entropy coefficient).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ScalarAdam {
    m: f64,
    v: f64,
    step: u64,
}

impl ScalarAdam {
    pub fn step(&mut self, param: &mut f64, grad: f64, lr: f64) -> Result<()> {
        if !grad.is_finite() {
            return Err(Error::Numeric("Adam: non-finite gradient".into()));
        }
        self.step += 1;
        let (c1, c2) = bias_corrections(self.step);
        update_block(
            std::slice::from_mut(param),
            &[grad],
            std::slice::from_mut(&mut self.m),
            std::slice::from_mut(&mut self.v),
            lr,
            c1,
            c2,
        );
        Ok(())
    }
}

fn bias_corrections(step: u64) -> (f64, f64) {
    let t = step as i32;
    (1.0 - BETA1.powi(t), 1.0 - BETA2.powi(t))
}

fn update_block(p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], lr: f64, c1: f64, c2: f64) {
    for i in 0..p.len() {
        m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
        v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        p[i] -= lr * m_hat / (v_hat.sqrt() + EPSILON);
    }
}
