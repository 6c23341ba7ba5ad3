use ndarray::{Array1, Array2};
use rand::Rng;

use crate::error::{validation, Result};

/// One stored step. Actions are normalized to `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    /// Terminal: no bootstrapping.
    pub done: bool,
    /// Cut by the time limit: bootstraps like a regular step.
    pub truncated: bool,
}

/// Mini-batch in row-major matrices. `dones` holds 1.0 for terminal rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    pub dones: Array1<f64>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        let first = ts.first().ok_or_else(|| validation("empty batch"))?;
        let (od, ad) = (first.obs.len(), first.action.len());
        let n = ts.len();
        let mut b = Batch {
            obs: Array2::zeros((n, od)),
            actions: Array2::zeros((n, ad)),
            rewards: Array1::zeros(n),
            next_obs: Array2::zeros((n, od)),
            dones: Array1::zeros(n),
        };
        for (i, t) in ts.iter().enumerate() {
            if t.obs.len() != od || t.next_obs.len() != od || t.action.len() != ad {
                return Err(validation("transitions in a batch differ in shape"));
            }
            b.obs.row_mut(i).assign(&Array1::from(t.obs.clone()));
            b.next_obs
                .row_mut(i)
                .assign(&Array1::from(t.next_obs.clone()));
            b.actions.row_mut(i).assign(&Array1::from(t.action.clone()));
            b.rewards[i] = t.reward;
            b.dones[i] = if t.done { 1.0 } else { 0.0 };
        }
        Ok(b)
    }
}

/// Fixed-capacity FIFO ring in flat storage.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    done: Vec<bool>,
    truncated: Vec<bool>,
    /// Slot the next push writes to.
    cursor: usize,
    len: usize,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Result<Self> {
        if capacity == 0 {
            return Err(validation("replay capacity must be positive"));
        }
        Ok(ReplayBuffer {
            capacity,
            obs_dim,
            act_dim,
            obs: Vec::new(),
            next_obs: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            done: Vec::new(),
            truncated: Vec::new(),
            cursor: 0,
            len: 0,
            pushed: 0,
        })
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Number of pushes ever made, including evicted ones.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    pub fn push(&mut self, t: &Transition) -> Result<()> {
        if t.obs.len() != self.obs_dim
            || t.next_obs.len() != self.obs_dim
            || t.action.len() != self.act_dim
        {
            return Err(validation(format!(
                "transition shape ({}, {}, {}) does not match buffer ({}, {})",
                t.obs.len(),
                t.action.len(),
                t.next_obs.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        if t.done && t.truncated {
            return Err(validation("transition cannot be both done and truncated"));
        }
        let slot = self.cursor;
        if self.len < self.capacity && slot == self.rewards.len() {
            self.obs.extend_from_slice(&t.obs);
            self.next_obs.extend_from_slice(&t.next_obs);
            self.actions.extend_from_slice(&t.action);
            self.rewards.push(t.reward);
            self.done.push(t.done);
            self.truncated.push(t.truncated);
        } else {
            let (o, a) = (self.obs_dim, self.act_dim);
            self.obs[slot * o..(slot + 1) * o].copy_from_slice(&t.obs);
            self.next_obs[slot * o..(slot + 1) * o].copy_from_slice(&t.next_obs);
            self.actions[slot * a..(slot + 1) * a].copy_from_slice(&t.action);
            self.rewards[slot] = t.reward;
            self.done[slot] = t.done;
            self.truncated[slot] = t.truncated;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        self.pushed += 1;
        Ok(())
    }

    /// Storage slot of the `i`-th oldest record.
    fn slot(&self, i: usize) -> usize {
        if self.len < self.capacity {
            i
        } else {
            (self.cursor + i) % self.capacity
        }
    }

    /// The `i`-th oldest record.
    pub fn get(&self, i: usize) -> Option<Transition> {
        (i < self.len).then(|| self.at_slot(self.slot(i)))
    }

    fn at_slot(&self, s: usize) -> Transition {
        let (o, a) = (self.obs_dim, self.act_dim);
        Transition {
            obs: self.obs[s * o..(s + 1) * o].to_vec(),
            action: self.actions[s * a..(s + 1) * a].to_vec(),
            reward: self.rewards[s],
            next_obs: self.next_obs[s * o..(s + 1) * o].to_vec(),
            done: self.done[s],
            truncated: self.truncated[s],
        }
    }

    /// Uniform indices (with replacement) into the current contents.
    pub fn sample_indices<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<usize> {
        (0..n).map(|_| rng.gen_range(0..self.len)).collect()
    }

    /// Copies the given logical indices into a batch.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch> {
        let (o, a) = (self.obs_dim, self.act_dim);
        let n = indices.len();
        let mut obs = Vec::with_capacity(n * o);
        let mut next_obs = Vec::with_capacity(n * o);
        let mut actions = Vec::with_capacity(n * a);
        let mut rewards = Vec::with_capacity(n);
        let mut dones = Vec::with_capacity(n);
        for &i in indices {
            if i >= self.len {
                return Err(validation(format!(
                    "replay index {i} out of range {}",
                    self.len
                )));
            }
            let s = self.slot(i);
            obs.extend_from_slice(&self.obs[s * o..(s + 1) * o]);
            next_obs.extend_from_slice(&self.next_obs[s * o..(s + 1) * o]);
            actions.extend_from_slice(&self.actions[s * a..(s + 1) * a]);
            rewards.push(self.rewards[s]);
            dones.push(if self.done[s] { 1.0 } else { 0.0 });
        }
        Ok(Batch {
            obs: Array2::from_shape_vec((n, o), obs).expect("sized"),
            actions: Array2::from_shape_vec((n, a), actions).expect("sized"),
            rewards: Array1::from(rewards),
            next_obs: Array2::from_shape_vec((n, o), next_obs).expect("sized"),
            dones: Array1::from(dones),
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.is_empty() {
            return Err(validation("cannot sample from an empty replay buffer"));
        }
        let idx = self.sample_indices(n, rng);
        self.gather(&idx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tr(k: usize) -> Transition {
        Transition {
            obs: vec![k as f64, 0.0],
            action: vec![0.5],
            reward: k as f64,
            next_obs: vec![k as f64 + 1.0, 0.0],
            done: k % 7 == 0,
            truncated: false,
        }
    }

    #[test]
    fn fifo_eviction_keeps_order() {
        let mut b = ReplayBuffer::new(10, 2, 1).unwrap();
        for k in 0..13 {
            b.push(&tr(k)).unwrap();
        }
        assert_eq!(b.len(), 10);
        assert_eq!(b.total_pushed(), 13);
        for i in 0..10 {
            assert_eq!(b.get(i).unwrap(), tr(i + 3));
        }
        assert!(b.get(10).is_none());
    }

    #[test]
    fn gather_matches_get() {
        let mut b = ReplayBuffer::new(5, 2, 1).unwrap();
        for k in 0..8 {
            b.push(&tr(k)).unwrap();
        }
        let batch = b.gather(&[0, 4, 2]).unwrap();
        let expect =
            Batch::from_transitions(&[b.get(0).unwrap(), b.get(4).unwrap(), b.get(2).unwrap()])
                .unwrap();
        assert_eq!(batch, expect);
    }

    #[test]
    fn rejects_bad_records() {
        let mut b = ReplayBuffer::new(5, 2, 1).unwrap();
        let mut t = tr(1);
        t.done = true;
        t.truncated = true;
        assert!(b.push(&t).is_err());
        let mut t = tr(1);
        t.obs.push(0.0);
        assert!(b.push(&t).is_err());
        assert!(b.sample(3, &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }
}
