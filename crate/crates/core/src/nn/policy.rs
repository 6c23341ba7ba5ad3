use std::f64::consts::{LN_2, PI};

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{validation, Result};
use crate::nn::{Mlp, MlpCache};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Tanh-squashed diagonal Gaussian policy.
///
/// The backbone emits `[mean, log_std]`; actions are
/// `scale * tanh(mean + exp(log_std) * z)` with `z ~ N(0, I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPolicy {
    net: Mlp,
    action_scale: Vec<f64>,
}

/// A reparameterized batch of actions plus what the backward pass needs.
#[derive(Clone, Debug)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    /// `scale * tanh(mean)`: the deterministic action.
    pub mean_actions: Array2<f64>,
    mean: Array2<f64>,
    std: Array2<f64>,
    noise: Array2<f64>,
    squashed: Array2<f64>,
    log_std_active: Array2<f64>,
    cache: MlpCache,
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(
        obs_dim: usize,
        hidden: &[usize],
        action_scale: Vec<f64>,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * action_scale.len());
        GaussianPolicy {
            net: Mlp::new(&sizes, rng),
            action_scale,
        }
    }

    pub fn from_parts(net: Mlp, action_scale: Vec<f64>) -> Result<Self> {
        if net.output_dim() != 2 * action_scale.len() {
            return Err(validation(format!(
                "policy backbone has {} outputs, expected {}",
                net.output_dim(),
                2 * action_scale.len()
            )));
        }
        if action_scale.iter().any(|s| !(*s > 0.0)) {
            return Err(validation("action scale must be positive"));
        }
        Ok(GaussianPolicy { net, action_scale })
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn action_dim(&self) -> usize {
        self.action_scale.len()
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn action_scale(&self) -> &[f64] {
        &self.action_scale
    }

    /// Samples actions for a batch given explicit standard-normal `noise`.
    pub fn sample_with_noise(
        &self,
        obs: ArrayView2<f64>,
        noise: ArrayView2<f64>,
    ) -> Result<PolicySample> {
        let a = self.action_dim();
        if noise.dim() != (obs.nrows(), a) {
            return Err(validation(format!(
                "noise has shape {:?}, expected ({}, {a})",
                noise.dim(),
                obs.nrows()
            )));
        }
        let (out, cache) = self.net.forward_cached(obs)?;
        let mean = out.slice(s![.., ..a]).to_owned();
        let raw_log_std = out.slice(s![.., a..]);
        let log_std = raw_log_std.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let log_std_active = raw_log_std.mapv(|v| {
            if (LOG_STD_MIN..=LOG_STD_MAX).contains(&v) {
                1.0
            } else {
                0.0
            }
        });
        let std = log_std.mapv(f64::exp);
        let pre = &mean + &(&std * &noise);
        let squashed = pre.mapv(f64::tanh);
        let scale = ArrayView1::from(&self.action_scale);
        let actions = &squashed * &scale;
        let mean_actions = &mean.mapv(f64::tanh) * &scale;

        let log_scale: f64 = self.action_scale.iter().map(|s| s.ln()).sum();
        let mut log_probs = Array1::zeros(obs.nrows());
        for (r, lp) in log_probs.iter_mut().enumerate() {
            let mut acc = -log_scale;
            for i in 0..a {
                let z = noise[[r, i]];
                acc += -0.5 * z * z
                    - log_std[[r, i]]
                    - 0.5 * (2.0 * PI).ln()
                    - log_one_minus_tanh_sq(pre[[r, i]]);
            }
            *lp = acc;
        }
        Ok(PolicySample {
            actions,
            log_probs,
            mean_actions,
            mean,
            std,
            noise: noise.to_owned(),
            squashed,
            log_std_active,
            cache,
        })
    }

    pub fn sample_batch<R: Rng + ?Sized>(
        &self,
        obs: ArrayView2<f64>,
        rng: &mut R,
    ) -> Result<PolicySample> {
        let noise = standard_normal((obs.nrows(), self.action_dim()), rng);
        self.sample_with_noise(obs, noise.view())
    }

    /// One stochastic action and its log density.
    pub fn sample_action<R: Rng + ?Sized>(
        &self,
        obs: &[f64],
        rng: &mut R,
    ) -> Result<(Vec<f64>, f64)> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).expect("row vector");
        let s = self.sample_batch(x, rng)?;
        Ok((s.actions.row(0).to_vec(), s.log_probs[0]))
    }

    /// Deterministic action `scale * tanh(mean)`.
    pub fn mean_action(&self, obs: &[f64]) -> Result<Vec<f64>> {
        let out = self.net.forward(obs)?;
        Ok(out[..self.action_dim()]
            .iter()
            .zip(&self.action_scale)
            .map(|(m, s)| s * m.tanh())
            .collect())
    }

    pub fn mean_actions(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        let out = self.net.forward_batch(obs)?;
        let a = self.action_dim();
        Ok(&out.slice(s![.., ..a]).mapv(f64::tanh) * &ArrayView1::from(&self.action_scale))
    }

    /// Parameter gradients of a loss whose partials with respect to the
    /// sampled actions, their log densities and the mean actions are given.
    pub fn backward(
        &self,
        sample: &PolicySample,
        d_actions: ArrayView2<f64>,
        d_log_probs: ArrayView1<f64>,
        d_mean_actions: Option<ArrayView2<f64>>,
    ) -> Result<Mlp> {
        let rows = sample.actions.nrows();
        let a = self.action_dim();
        if d_actions.dim() != (rows, a) || d_log_probs.len() != rows {
            return Err(validation("policy backward: gradient shape mismatch"));
        }
        let mut upstream = Array2::zeros((rows, 2 * a));
        for r in 0..rows {
            for i in 0..a {
                let u = sample.squashed[[r, i]];
                let sc = self.action_scale[i];
                let d_pre = d_actions[[r, i]] * sc * (1.0 - u * u) + d_log_probs[r] * 2.0 * u;
                let mut d_mean = d_pre;
                if let Some(dm) = &d_mean_actions {
                    let t = sample.mean[[r, i]].tanh();
                    d_mean += dm[[r, i]] * sc * (1.0 - t * t);
                }
                let d_log_std = (d_pre * sample.std[[r, i]] * sample.noise[[r, i]]
                    - d_log_probs[r])
                    * sample.log_std_active[[r, i]];
                upstream[[r, i]] = d_mean;
                upstream[[r, a + i]] = d_log_std;
            }
        }
        let (grads, _) = self.net.backward(&sample.cache, upstream.view())?;
        Ok(grads)
    }
}

/// `ln(1 - tanh(x)^2)` without cancellation.
pub fn log_one_minus_tanh_sq(x: f64) -> f64 {
    2.0 * (LN_2 - x - softplus(-2.0 * x))
}

fn softplus(y: f64) -> f64 {
    y.max(0.0) + (-y.abs()).exp().ln_1p()
}

pub fn standard_normal<R: Rng + ?Sized>(shape: (usize, usize), rng: &mut R) -> Array2<f64> {
    let mut z = Array2::zeros(shape);
    z.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> GaussianPolicy {
        GaussianPolicy::new(
            3,
            &[16, 16],
            vec![17.5, 3.5],
            &mut ChaCha8Rng::seed_from_u64(seed),
        )
    }

    #[test]
    fn log_one_minus_tanh_sq_matches_direct_form() {
        for &x in &[-3.0, -0.5, 0.0, 0.2, 1.7, 4.0] {
            let t: f64 = f64::tanh(x);
            assert!((log_one_minus_tanh_sq(x) - (1.0 - t * t).ln()).abs() < 1e-12);
        }
        assert!(log_one_minus_tanh_sq(40.0).is_finite());
    }

    #[test]
    fn actions_stay_inside_scaled_bounds() {
        let pol = policy(1);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..500 {
            let obs = [
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
                rng.gen_range(-3.0..3.0),
            ];
            let (a, lp) = pol.sample_action(&obs, &mut rng).unwrap();
            assert!(a[0].abs() <= 17.5 && a[1].abs() <= 3.5);
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn degenerate_std_collapses_to_mean() {
        let mut pol = policy(3);
        // force log_std to the lower clamp
        let last = pol.net_mut().layers_mut().last_mut().unwrap();
        for j in 2..4 {
            last.weight.column_mut(j).fill(0.0);
            last.bias[j] = -50.0;
        }
        let obs = [0.4, -0.1, 0.8];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (a, _) = pol.sample_action(&obs, &mut rng).unwrap();
        let m = pol.mean_action(&obs).unwrap();
        for (x, y) in a.iter().zip(&m) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn mismatched_backbone_rejected() {
        let net = Mlp::zeros(&[3, 4, 3]);
        assert!(GaussianPolicy::from_parts(net, vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn log_prob_decreases_with_std_for_small_spread() {
        // d logp / d sigma = -1/sigma + 2 z tanh(mean + sigma z) < 0 while sigma |z| is small
        let net = Mlp::zeros(&[1, 2]);
        let pol = GaussianPolicy::from_parts(net, vec![1.0]).unwrap();
        for &mean in &[-1.0, 0.0, 0.7] {
            for &z in &[-1.0, -0.3, 0.5, 1.0] {
                let mut last = f64::INFINITY;
                for k in 0..=60 {
                    let log_std =
                        (1e-6f64).ln() + k as f64 * ((0.5f64).ln() - (1e-6f64).ln()) / 60.0;
                    let mut p = pol.clone();
                    p.net_mut().layers_mut()[0].bias = array![mean, log_std];
                    let s = p
                        .sample_with_noise(array![[0.0]].view(), array![[z]].view())
                        .unwrap();
                    assert!(s.log_probs[0].is_finite());
                    assert!(s.log_probs[0] < last);
                    last = s.log_probs[0];
                }
            }
        }
    }
}
