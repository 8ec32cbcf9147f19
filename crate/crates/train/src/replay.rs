use ndarray::{Array1, Array2};
use rand::Rng;

use crate::sac::Batch;
use crate::TrainError;

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_observation: Vec<f64>,
    pub terminated: bool,
    pub truncated: bool,
}

/// Fixed-capacity ring buffer; the oldest transition is overwritten once
/// full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f64>,
    next_obs: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    terminated: Vec<bool>,
    len: usize,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            obs: vec![0.0; capacity * obs_dim],
            next_obs: vec![0.0; capacity * obs_dim],
            actions: vec![0.0; capacity * act_dim],
            rewards: vec![0.0; capacity],
            terminated: vec![false; capacity],
            len: 0,
            head: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: &Transition) -> Result<(), TrainError> {
        if t.observation.len() != self.obs_dim || t.next_observation.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(TrainError::Replay(format!(
                "transition dims obs {}/{} act {} do not match buffer obs {} act {}",
                t.observation.len(),
                t.next_observation.len(),
                t.action.len(),
                self.obs_dim,
                self.act_dim
            )));
        }
        let i = self.head;
        let (o, a) = (self.obs_dim, self.act_dim);
        self.obs[i * o..(i + 1) * o].copy_from_slice(&t.observation);
        self.next_obs[i * o..(i + 1) * o].copy_from_slice(&t.next_observation);
        self.actions[i * a..(i + 1) * a].copy_from_slice(&t.action);
        self.rewards[i] = t.reward;
        self.terminated[i] = t.terminated;
        self.head = (self.head + 1) % self.capacity;
        self.len = (self.len + 1).min(self.capacity);
        Ok(())
    }

    /// Stored transition `i`, counted from the oldest.
    pub fn get(&self, i: usize) -> Option<Transition> {
        if i >= self.len {
            return None;
        }
        let slot = (self.head + self.capacity - self.len + i) % self.capacity;
        let (o, a) = (self.obs_dim, self.act_dim);
        Some(Transition {
            observation: self.obs[slot * o..(slot + 1) * o].to_vec(),
            action: self.actions[slot * a..(slot + 1) * a].to_vec(),
            reward: self.rewards[slot],
            next_observation: self.next_obs[slot * o..(slot + 1) * o].to_vec(),
            terminated: self.terminated[slot],
            truncated: false,
        })
    }

    /// Uniform slot indices, with replacement.
    pub fn sample_indices<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Vec<usize>, TrainError> {
        if self.len == 0 {
            return Err(TrainError::Replay("cannot sample from an empty replay buffer".into()));
        }
        Ok((0..batch).map(|_| rng.random_range(0..self.len)).collect())
    }

    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch, TrainError> {
        let idx = self.sample_indices(batch, rng)?;
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut obs = Array2::zeros((batch, o));
        let mut next_obs = Array2::zeros((batch, o));
        let mut actions = Array2::zeros((batch, a));
        let mut rewards = Array1::zeros(batch);
        let mut terminated = Array1::zeros(batch);
        for (r, &i) in idx.iter().enumerate() {
            for k in 0..o {
                obs[[r, k]] = self.obs[i * o + k];
                next_obs[[r, k]] = self.next_obs[i * o + k];
            }
            for k in 0..a {
                actions[[r, k]] = self.actions[i * a + k];
            }
            rewards[r] = self.rewards[i];
            terminated[r] = if self.terminated[i] { 1.0 } else { 0.0 };
        }
        Ok(Batch {
            obs,
            actions,
            rewards,
            next_obs,
            terminated,
        })
    }
}
