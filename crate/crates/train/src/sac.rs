//! Maximum-entropy actor-critic with twin critics and a tanh-squashed
//! Gaussian policy.

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::config::{EntropyMode, TrainerConfig};
use crate::nn::{soft_update, Mlp, MlpCache};
use crate::optim::{Adam, Optimizer};
use crate::TrainError;

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LN_TAU: f64 = 0.918_938_533_204_672_8;

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln(1 − tanh²u)` without cancellation for large |u|.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

pub fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.sample(StandardNormal))
}

/// Gaussian policy head: the network emits means and log standard
/// deviations; actions are `tanh(mean + std·ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Actor {
    net: Mlp,
    act_dim: usize,
}

/// Reparameterized policy sample with everything the backward pass needs.
#[derive(Debug, Clone)]
pub struct PolicySample {
    pub actions: Array2<f64>,
    pub log_prob: Array1<f64>,
    cache: MlpCache,
    log_std_raw: Array2<f64>,
    std: Array2<f64>,
    eps: Array2<f64>,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut R) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(2 * act_dim);
        Self {
            net: Mlp::new(&sizes, rng),
            act_dim,
        }
    }

    pub fn from_net(net: Mlp) -> Self {
        let act_dim = net.output_dim() / 2;
        Self { net, act_dim }
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn sample(&self, obs: ArrayView2<f64>, eps: ArrayView2<f64>) -> PolicySample {
        let a = self.act_dim;
        let (out, cache) = self.net.forward_cached(obs);
        let mean = out.slice(s![.., ..a]);
        let log_std_raw = out.slice(s![.., a..]).to_owned();
        let log_std = log_std_raw.mapv(|v| v.clamp(LOG_STD_MIN, LOG_STD_MAX));
        let std = log_std.mapv(f64::exp);
        let u = &mean + &(&std * &eps);
        let actions = u.mapv(f64::tanh);
        let mut log_prob = Array1::zeros(obs.nrows());
        for b in 0..obs.nrows() {
            let mut lp = 0.0;
            for j in 0..a {
                let e = eps[[b, j]];
                lp += -0.5 * e * e - HALF_LN_TAU - log_std[[b, j]] - log_one_minus_tanh_sq(u[[b, j]]);
            }
            log_prob[b] = lp;
        }
        PolicySample {
            actions,
            log_prob,
            cache,
            log_std_raw,
            std,
            eps: eps.to_owned(),
        }
    }

    /// Adds into `grad` the parameter gradient of a loss whose partials
    /// w.r.t. the sampled actions and log-probabilities are given.
    pub fn backward(&self, sample: &PolicySample, d_action: ArrayView2<f64>, d_log_prob: &Array1<f64>, grad: &mut [f64]) {
        let (rows, a) = (d_action.nrows(), self.act_dim);
        let mut d_out = Array2::zeros((rows, 2 * a));
        for b in 0..rows {
            let dl = d_log_prob[b];
            for j in 0..a {
                let act = sample.actions[[b, j]];
                // d ln p / du = 2·tanh(u) from the squashing correction
                let du = d_action[[b, j]] * (1.0 - act * act) + dl * 2.0 * act;
                d_out[[b, j]] = du;
                let raw = sample.log_std_raw[[b, j]];
                d_out[[b, a + j]] = if (LOG_STD_MIN..=LOG_STD_MAX).contains(&raw) {
                    du * sample.std[[b, j]] * sample.eps[[b, j]] - dl
                } else {
                    0.0
                };
            }
        }
        self.net.backward(&sample.cache, d_out.view(), Some(grad));
    }

    pub fn mean_action(&self, obs: &[f64]) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).unwrap();
        let out = self.net.forward(x);
        out.slice(s![0, ..self.act_dim]).iter().map(|m| m.tanh()).collect()
    }

    pub fn sample_action<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Vec<f64> {
        let x = ArrayView2::from_shape((1, obs.len()), obs).unwrap();
        let eps = standard_normal(1, self.act_dim, rng);
        self.sample(x, eps.view()).actions.row(0).to_vec()
    }

    pub fn act<R: Rng + ?Sized>(&self, obs: &[f64], deterministic: bool, rng: &mut R) -> Vec<f64> {
        if deterministic {
            self.mean_action(obs)
        } else {
            self.sample_action(obs, rng)
        }
    }
}

/// Minibatch of transitions as dense matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub obs: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_obs: Array2<f64>,
    /// 1.0 where the episode terminated; truncation still bootstraps.
    pub terminated: Array1<f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    /// −E[ln π]
    pub entropy: f64,
}

fn critic_input(obs: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    concatenate(Axis(1), &[obs, actions]).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sac {
    pub actor: Actor,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    alpha_opt: Adam,
    log_alpha: f64,
    entropy: EntropyMode,
    pub target_entropy: f64,
    discount: f64,
    soft_update: f64,
    target_interval: usize,
    updates: u64,
}

impl Sac {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &TrainerConfig, rng: &mut R) -> Self {
        let actor = Actor::new(obs_dim, act_dim, &cfg.actor_hidden, rng);
        let mut sizes = vec![obs_dim + act_dim];
        sizes.extend_from_slice(&cfg.critic_hidden);
        sizes.push(1);
        let critics = [Mlp::new(&sizes, rng), Mlp::new(&sizes, rng)];
        Self {
            actor_opt: Adam::new(actor.net.params().len()),
            critic_opts: [Adam::new(critics[0].params().len()), Adam::new(critics[1].params().len())],
            alpha_opt: Adam::new(1),
            targets: critics.clone(),
            critics,
            actor,
            log_alpha: cfg.initial_alpha.ln(),
            entropy: cfg.entropy,
            target_entropy: -(act_dim as f64),
            discount: cfg.discount,
            soft_update: cfg.soft_update,
            target_interval: cfg.target_update_interval,
            updates: 0,
        }
    }

    /// Applies the schedule-independent settings of `cfg` (used when a
    /// fine-tune phase continues from a checkpoint).
    pub fn configure(&mut self, cfg: &TrainerConfig) {
        self.entropy = cfg.entropy;
        self.discount = cfg.discount;
        self.soft_update = cfg.soft_update;
        self.target_interval = cfg.target_update_interval;
    }

    pub fn alpha(&self) -> f64 {
        match self.entropy {
            EntropyMode::Fixed(a) => a,
            EntropyMode::Auto => self.log_alpha.exp(),
        }
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// `Σᵢ ½·mean (Qᵢ(s,a) − y)²` with the twin-minimum entropy-regularized
    /// target, and its gradient w.r.t. each critic's parameters.
    pub fn critic_loss_grad(&self, batch: &Batch, next_eps: ArrayView2<f64>, alpha: f64) -> (f64, [Vec<f64>; 2]) {
        let rows = batch.obs.nrows();
        let next = self.actor.sample(batch.next_obs.view(), next_eps);
        let next_in = critic_input(batch.next_obs.view(), next.actions.view());
        let (t1, t2) = (self.targets[0].forward(next_in.view()), self.targets[1].forward(next_in.view()));
        let mut y = Array1::zeros(rows);
        for b in 0..rows {
            let soft_v = t1[[b, 0]].min(t2[[b, 0]]) - alpha * next.log_prob[b];
            y[b] = batch.rewards[b] + self.discount * (1.0 - batch.terminated[b]) * soft_v;
        }
        let input = critic_input(batch.obs.view(), batch.actions.view());
        let mut loss = 0.0;
        let grads = [0, 1].map(|i| {
            let net = &self.critics[i];
            let (q, cache) = net.forward_cached(input.view());
            let mut d = Array2::zeros((rows, 1));
            for b in 0..rows {
                let r = q[[b, 0]] - y[b];
                loss += 0.5 * r * r / rows as f64;
                d[[b, 0]] = r / rows as f64;
            }
            let mut g = vec![0.0; net.params().len()];
            net.backward(&cache, d.view(), Some(&mut g));
            g
        });
        (loss, grads)
    }

    /// `mean(α·ln π(a|s) − min Qᵢ(s,a))` with `a` reparameterized by `eps`.
    /// Returns the loss, the actor gradient and the mean log-probability.
    pub fn actor_loss_grad(&self, obs: ArrayView2<f64>, eps: ArrayView2<f64>, alpha: f64) -> (f64, Vec<f64>, f64) {
        let rows = obs.nrows();
        let obs_dim = obs.ncols();
        let sample = self.actor.sample(obs, eps);
        let input = critic_input(obs, sample.actions.view());
        let (q1, c1) = self.critics[0].forward_cached(input.view());
        let (q2, c2) = self.critics[1].forward_cached(input.view());
        let n = rows as f64;
        let mut loss = 0.0;
        let mut d1 = Array2::zeros((rows, 1));
        let mut d2 = Array2::zeros((rows, 1));
        for b in 0..rows {
            let (a, c) = (q1[[b, 0]], q2[[b, 0]]);
            loss += (alpha * sample.log_prob[b] - a.min(c)) / n;
            if a <= c {
                d1[[b, 0]] = -1.0 / n;
            } else {
                d2[[b, 0]] = -1.0 / n;
            }
        }
        let g1 = self.critics[0].backward(&c1, d1.view(), None);
        let g2 = self.critics[1].backward(&c2, d2.view(), None);
        let d_action = &g1.slice(s![.., obs_dim..]) + &g2.slice(s![.., obs_dim..]);
        let d_log_prob = Array1::from_elem(rows, alpha / n);
        let mut grad = vec![0.0; self.actor.net.params().len()];
        self.actor.backward(&sample, d_action.view(), &d_log_prob, &mut grad);
        (loss, grad, sample.log_prob.mean().unwrap_or(0.0))
    }

    /// One gradient step on critics, actor and (in auto mode) the entropy
    /// coefficient, then a soft target update every `target_update_interval`
    /// steps.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, lr: f64, rng: &mut R) -> Result<UpdateStats, TrainError> {
        let rows = batch.obs.nrows();
        let act_dim = self.actor.act_dim;
        let eps = standard_normal(rows, act_dim, rng);
        let alpha = self.alpha();

        if self.entropy == EntropyMode::Auto {
            let lp = self.actor.sample(batch.obs.view(), eps.view()).log_prob;
            let g = -(lp.mean().unwrap_or(0.0) + self.target_entropy);
            let mut la = [self.log_alpha];
            self.alpha_opt.step(&mut la, &[g], lr);
            self.log_alpha = la[0];
        }

        let next_eps = standard_normal(rows, act_dim, rng);
        let (critic_loss, grads) = self.critic_loss_grad(batch, next_eps.view(), alpha);
        if !critic_loss.is_finite() {
            return Err(TrainError::NonFinite(format!("critic loss {critic_loss} at update {}", self.updates)));
        }
        for i in 0..2 {
            self.critic_opts[i].step(self.critics[i].params_mut(), &grads[i], lr);
        }

        let (actor_loss, grad, mean_lp) = self.actor_loss_grad(batch.obs.view(), eps.view(), alpha);
        if !actor_loss.is_finite() {
            return Err(TrainError::NonFinite(format!("actor loss {actor_loss} at update {}", self.updates)));
        }
        self.actor_opt.step(self.actor.net.params_mut(), &grad, lr);

        self.updates += 1;
        if self.updates.is_multiple_of(self.target_interval as u64) {
            self.soft_update_targets();
        }
        Ok(UpdateStats {
            critic_loss,
            actor_loss,
            alpha,
            entropy: -mean_lp,
        })
    }

    pub fn soft_update_targets(&mut self) {
        for i in 0..2 {
            soft_update(self.targets[i].params_mut(), self.critics[i].params(), self.soft_update);
        }
    }

    /// Named flat tensors in a fixed order, for checkpointing.
    pub fn export(&self) -> Vec<(String, Vec<f64>)> {
        vec![
            ("actor".into(), self.actor.net.params().to_vec()),
            ("critic1".into(), self.critics[0].params().to_vec()),
            ("critic2".into(), self.critics[1].params().to_vec()),
            ("target1".into(), self.targets[0].params().to_vec()),
            ("target2".into(), self.targets[1].params().to_vec()),
            ("actor_opt".into(), self.actor_opt.export()),
            ("critic1_opt".into(), self.critic_opts[0].export()),
            ("critic2_opt".into(), self.critic_opts[1].export()),
            ("alpha_opt".into(), self.alpha_opt.export()),
            ("scalars".into(), vec![self.log_alpha, self.updates as f64]),
        ]
    }

    /// Inverse of [`Sac::export`] onto a network of matching shape.
    pub fn import(&mut self, tensors: &[(String, Vec<f64>)]) -> Result<(), TrainError> {
        let get = |name: &str| {
            tensors
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.as_slice())
                .ok_or_else(|| TrainError::Checkpoint(format!("missing tensor '{name}'")))
        };
        let copy = |dst: &mut [f64], name: &str| -> Result<(), TrainError> {
            let src = get(name)?;
            if src.len() != dst.len() {
                return Err(TrainError::Checkpoint(format!(
                    "tensor '{name}' has {} values, network expects {}",
                    src.len(),
                    dst.len()
                )));
            }
            dst.copy_from_slice(src);
            Ok(())
        };
        copy(self.actor.net.params_mut(), "actor")?;
        copy(self.critics[0].params_mut(), "critic1")?;
        copy(self.critics[1].params_mut(), "critic2")?;
        copy(self.targets[0].params_mut(), "target1")?;
        copy(self.targets[1].params_mut(), "target2")?;
        let opt = |o: &mut Adam, name: &str| o.import(get(name)?).map_err(TrainError::Checkpoint);
        opt(&mut self.actor_opt, "actor_opt")?;
        opt(&mut self.critic_opts[0], "critic1_opt")?;
        opt(&mut self.critic_opts[1], "critic2_opt")?;
        opt(&mut self.alpha_opt, "alpha_opt")?;
        let scalars = get("scalars")?;
        if scalars.len() != 2 {
            return Err(TrainError::Checkpoint("scalars tensor must hold 2 values".into()));
        }
        self.log_alpha = scalars[0];
        self.updates = scalars[1] as u64;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn squash_correction_is_stable() {
        for u in [-30.0, -3.0, 0.0, 0.7, 25.0] {
            let direct = (1.0 - f64::tanh(u).powi(2)).ln();
            let stable = log_one_minus_tanh_sq(u);
            if direct.is_finite() {
                assert!((direct - stable).abs() < 1e-9, "{u}");
            }
            assert!(stable.is_finite());
        }
    }

    #[test]
    fn log_prob_matches_change_of_variables() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let actor = Actor::new(3, 2, &[8], &mut rng);
        let obs = standard_normal(4, 3, &mut rng);
        let eps = standard_normal(4, 2, &mut rng);
        let s = actor.sample(obs.view(), eps.view());
        let out = actor.net.forward(obs.view());
        for b in 0..4 {
            let mut lp = 0.0;
            for j in 0..2 {
                let (m, ls) = (out[[b, j]], out[[b, 2 + j]].clamp(LOG_STD_MIN, LOG_STD_MAX));
                let sd = ls.exp();
                let u = m + sd * eps[[b, j]];
                let gauss = (-(u - m).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt());
                lp += (gauss / (1.0 - u.tanh().powi(2))).ln();
            }
            assert!((lp - s.log_prob[b]).abs() < 1e-9);
        }
    }

    #[test]
    fn mean_action_is_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let actor = Actor::new(5, 3, &[4], &mut rng);
        let a = actor.mean_action(&[100.0, -50.0, 3.0, 0.0, 1.0]);
        assert!(a.iter().all(|v| v.abs() <= 1.0));
    }
}
