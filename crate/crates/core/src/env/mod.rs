//! Imitation-learning environment around the musculoskeletal walker.
//!
//! Each control step decodes a policy action into muscle excitations and
//! exoskeleton torques, runs the physics substeps, and scores the new state
//! against the reference clip.
//!
//! Observation layout (default model, 106 values):
//!
//! | block | size | content |
//! |---|---|---|
//! | muscles | 3·M | fiber length / l_opt, tendon force / F_max, activation (muscle order) |
//! | GRF | 4 | `[fx, fy]` left then right foot, body weights |
//! | angles | 7 | root pitch then joint angles, rad |
//! | velocities | 6 | root, left foot, right foot `[vx, vy]`, m/s |
//! | future | 5·7 | reference angles `k` control steps ahead minus current angles |
//!
//! Action layout (24 values in [−1, 1]): one excitation channel per muscle,
//! then one exoskeleton channel per internal joint. Exoskeleton channels of
//! unassisted joints, and all of them outside fine-tuning, are ignored.

mod exo;
mod weakness;

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::{default_muscles, default_skeleton, device_by_name};
use crate::dynamics::{build_model, DynamicsError, ExoDeviceSpec, Model, ModelState};
use crate::layout::{FOOT_SEGMENTS, LANDMARK_NAMES, N_ANGLES, N_JOINTS, ROOT_DOFS};
use crate::metabolics::{muscle_energy_rate, MetabolicRates};
use crate::muscle::{activation_step, mtu_force, MuscleError, MuscleSet, MuscleState};
use crate::refmotion::synth::{synthetic_clip, SynthParams};
use crate::refmotion::{RefError, RefFrame, ReferenceClip};
use crate::reward::{self, Deviations, Phase, RewardBreakdown, RewardConfig, RewardError};
use crate::trace::{StepRecord, TraceMeta};

pub use exo::{lowpass_alpha, ExoActuator};
pub use weakness::{preset_muscles, WeaknessMask, PRESETS as WEAKNESS_PRESETS, WEAK_CAP};

/// GRF components in the observation (two feet, two axes).
pub const N_GRF: usize = 4;
/// Velocity components in the observation (root and two feet).
pub const N_VEL: usize = 6;

/// Observation length for a model with `muscles` muscles.
pub fn observation_dim(muscles: usize, future_frames: usize) -> usize {
    3 * muscles + N_GRF + N_ANGLES + N_VEL + future_frames * N_ANGLES
}

/// Action length for a model with `muscles` muscles.
pub fn action_dim(muscles: usize) -> usize {
    muscles + N_JOINTS
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("invalid environment configuration: {0}")]
    Config(String),
    #[error("reset failed: {0}")]
    Reset(String),
    #[error("action has {got} entries, expected {expected}")]
    ActionDimension { expected: usize, got: usize },
    #[error("episode is over; call reset")]
    EpisodeOver,
    #[error(transparent)]
    Muscle(#[from] MuscleError),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error(transparent)]
    Reference(#[from] RefError),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    /// Hz
    pub control_rate: f64,
    /// Hz; an integer multiple of the control rate
    pub physics_rate: f64,
    pub episode_steps: usize,
    /// m
    pub termination_radius: f64,
    /// `none`, `hip` or `ankle`
    pub device: String,
    /// Overrides the device's filter cutoff, Hz.
    pub exo_cutoff: Option<f64>,
    /// Overrides the device's torque bound, N·m per kg of model mass.
    pub exo_torque_per_kg: Option<f64>,
    /// Named weakness preset.
    pub weakness: Option<String>,
    /// Extra per-muscle caps, applied after the preset.
    pub weakness_caps: BTreeMap<String, f64>,
    pub future_frames: usize,
    pub phase: Phase,
    pub initial_activation: f64,
    /// Half-width of the reset height search, m.
    pub vertical_search: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            control_rate: 25.0,
            physics_rate: 200.0,
            episode_steps: 250,
            termination_radius: 0.4,
            device: "none".into(),
            exo_cutoff: None,
            exo_torque_per_kg: None,
            weakness: None,
            weakness_caps: BTreeMap::new(),
            future_frames: 5,
            phase: Phase::Base,
            initial_activation: 0.05,
            vertical_search: 0.1,
        }
    }
}

impl EnvConfig {
    pub fn control_dt(&self) -> f64 {
        1.0 / self.control_rate
    }

    pub fn physics_dt(&self) -> f64 {
        1.0 / self.physics_rate
    }

    pub fn substeps(&self) -> usize {
        (self.physics_rate / self.control_rate).round() as usize
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::Config(m.to_string()));
        if !(self.control_rate > 0.0 && self.physics_rate > 0.0) {
            return bad("rates must be positive");
        }
        let ratio = self.physics_rate / self.control_rate;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return bad("physics rate must be an integer multiple of the control rate");
        }
        if self.episode_steps == 0 {
            return bad("episode_steps must be >= 1");
        }
        if !(self.termination_radius > 0.0) {
            return bad("termination_radius must be > 0");
        }
        if !(self.initial_activation > 0.0 && self.initial_activation <= 1.0) {
            return bad("initial_activation must lie in (0, 1]");
        }
        if !(self.vertical_search > 0.0) {
            return bad("vertical_search must be > 0");
        }
        if self.exo_cutoff.is_some_and(|c| !(c > 0.0 && c < 0.5 * self.control_rate)) {
            return bad("exo_cutoff must lie in (0, control_rate / 2)");
        }
        if self.exo_torque_per_kg.is_some_and(|t| !(t > 0.0)) {
            return bad("exo_torque_per_kg must be > 0");
        }
        if let Some(w) = &self.weakness {
            if preset_muscles(w).is_none() {
                return Err(EnvError::Config(format!(
                    "unknown weakness preset '{w}' (expected one of {})",
                    WEAKNESS_PRESETS.join(", ")
                )));
            }
        }
        self.device_spec().map(|_| ())
    }

    pub fn device_spec(&self) -> Result<ExoDeviceSpec, EnvError> {
        let mut dev = device_by_name(&self.device)
            .ok_or_else(|| EnvError::Config(format!("unknown device '{}' (expected none, hip or ankle)", self.device)))?;
        if let Some(c) = self.exo_cutoff {
            dev.filter_cutoff = c;
        }
        if let Some(t) = self.exo_torque_per_kg {
            dev.torque_max_per_kg = t;
        }
        Ok(dev)
    }

    /// Reward profile matching the phase.
    pub fn reward_config(&self) -> RewardConfig {
        match self.phase {
            Phase::Base => RewardConfig::base(),
            Phase::Finetune => RewardConfig::finetune(),
        }
    }
}

/// Immutable pieces shared by every environment instance.
#[derive(Debug, Clone)]
pub struct EnvAssets {
    pub model: Model,
    pub muscles: MuscleSet,
    pub clip: ReferenceClip,
}

impl EnvAssets {
    /// Default skeleton and muscles with the configured device.
    pub fn new(cfg: &EnvConfig, clip: ReferenceClip) -> Result<Arc<Self>, EnvError> {
        cfg.validate()?;
        clip.validate()?;
        let model = build_model(&default_skeleton(), &cfg.device_spec()?)?;
        Ok(Arc::new(Self {
            model,
            muscles: default_muscles(),
            clip,
        }))
    }

    /// Same, with a synthetic clip generated for the unassisted model.
    pub fn synthetic(cfg: &EnvConfig, params: &SynthParams) -> Result<Arc<Self>, EnvError> {
        let plain = build_model(&default_skeleton(), &ExoDeviceSpec::none())?;
        Self::new(cfg, synthetic_clip(&plain, params)?)
    }
}

/// Episode end conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLimits {
    pub max_steps: usize,
    /// m
    pub radius: f64,
}

impl EpisodeLimits {
    /// `(terminated, truncated)` after `steps` control steps with the given
    /// root deviation. A non-finite deviation terminates.
    pub fn check(&self, steps: usize, deviation: f64) -> (bool, bool) {
        (!(deviation <= self.radius), steps >= self.max_steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Vec<f64>,
    pub reward: RewardBreakdown,
    pub terminated: bool,
    pub truncated: bool,
    /// m
    pub root_deviation: f64,
    /// Set when the simulation failed and the episode was cut short.
    pub diagnostic: Option<String>,
}

/// One environment instance. Owns all mutable state.
#[derive(Debug, Clone)]
pub struct GaitEnv {
    assets: Arc<EnvAssets>,
    cfg: EnvConfig,
    reward_cfg: RewardConfig,
    mask: WeaknessMask,
    exo: ExoActuator,
    limits: EpisodeLimits,
    foot_groups: [usize; 2],
    landmark_index: [usize; 3],
    fingerprint: String,
    rng: ChaCha8Rng,
    state: ModelState,
    muscle_states: Vec<MuscleState>,
    excitation: Vec<f64>,
    metabolics: Vec<MetabolicRates>,
    last_reward: RewardBreakdown,
    start_time: f64,
    steps: usize,
    live: bool,
}

impl GaitEnv {
    pub fn new(assets: Arc<EnvAssets>, cfg: EnvConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        let device = cfg.device_spec()?;
        if device.kind != assets.model.device().kind {
            return Err(EnvError::Config(format!(
                "configured device '{}' differs from the model's '{}'",
                device.kind.name(),
                assets.model.device().kind.name()
            )));
        }
        let exo = if cfg.phase == Phase::Finetune && device.is_active() {
            ExoActuator::new(&device, assets.model.total_mass(), cfg.control_dt())
        } else {
            ExoActuator::disabled()
        };
        let mut mask = match &cfg.weakness {
            Some(name) => WeaknessMask::preset(&assets.muscles, name)?,
            None => WeaknessMask::identity(assets.muscles.len()),
        };
        if !cfg.weakness_caps.is_empty() {
            let mut caps: BTreeMap<String, f64> = assets
                .muscles
                .names()
                .into_iter()
                .zip(mask.caps())
                .map(|(n, &c)| (n.to_string(), c))
                .collect();
            caps.extend(cfg.weakness_caps.clone());
            mask = WeaknessMask::from_caps(&assets.muscles, &caps)?;
        }
        let groups = assets.model.contact_groups();
        let mut foot_groups = [0; 2];
        for (side, name) in FOOT_SEGMENTS.iter().enumerate() {
            foot_groups[side] = groups
                .iter()
                .position(|g| g == name)
                .ok_or_else(|| EnvError::Config(format!("model has no contact on '{name}'")))?;
        }
        let mut landmark_index = [0; 3];
        for (k, name) in LANDMARK_NAMES.iter().enumerate() {
            landmark_index[k] = assets
                .model
                .landmark_names()
                .iter()
                .position(|l| l == name)
                .ok_or_else(|| EnvError::Config(format!("model has no landmark '{name}'")))?;
        }
        let m = assets.muscles.len();
        let state = assets.model.state_from(assets.clip.frames[0].q.to_vec(), assets.clip.frames[0].qdot.to_vec());
        let mut env = Self {
            reward_cfg: cfg.reward_config(),
            limits: EpisodeLimits {
                max_steps: cfg.episode_steps,
                radius: cfg.termination_radius,
            },
            mask,
            exo,
            foot_groups,
            landmark_index,
            fingerprint: String::new(),
            rng: ChaCha8Rng::seed_from_u64(0),
            state,
            muscle_states: vec![MuscleState::resting(cfg.initial_activation); m],
            excitation: vec![cfg.initial_activation; m],
            metabolics: vec![MetabolicRates::default(); m],
            last_reward: RewardBreakdown::default(),
            start_time: 0.0,
            steps: 0,
            live: false,
            assets,
            cfg,
        };
        env.refresh_fingerprint();
        Ok(env)
    }

    /// Replaces the reward profile (validated).
    pub fn with_reward(mut self, cfg: RewardConfig) -> Result<Self, EnvError> {
        cfg.validate()?;
        self.reward_cfg = cfg;
        self.refresh_fingerprint();
        Ok(self)
    }

    /// Clamps all subsequent excitations by `mask`.
    pub fn apply_weakness(&mut self, mask: WeaknessMask) -> Result<(), EnvError> {
        if mask.caps().len() != self.assets.muscles.len() {
            return Err(EnvError::Config("weakness mask length differs from muscle count".into()));
        }
        self.mask = mask;
        self.refresh_fingerprint();
        Ok(())
    }

    fn refresh_fingerprint(&mut self) {
        let clip = &self.assets.clip;
        let payload = serde_json::json!({
            "config": self.cfg,
            "reward": self.reward_cfg,
            "caps": self.mask.caps(),
            "clip": { "name": clip.meta.name, "rate": clip.sample_rate, "frames": clip.frames },
        });
        let digest = Sha256::digest(payload.to_string().as_bytes());
        self.fingerprint = digest.iter().map(|b| format!("{b:02x}")).collect();
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn reward_config(&self) -> &RewardConfig {
        &self.reward_cfg
    }

    pub fn assets(&self) -> &Arc<EnvAssets> {
        &self.assets
    }

    pub fn model(&self) -> &Model {
        &self.assets.model
    }

    pub fn clip(&self) -> &ReferenceClip {
        &self.assets.clip
    }

    pub fn mask(&self) -> &WeaknessMask {
        &self.mask
    }

    pub fn exo(&self) -> &ExoActuator {
        &self.exo
    }

    pub fn limits(&self) -> EpisodeLimits {
        self.limits
    }

    /// SHA-256 over the configuration, reward profile, mask and clip.
    pub fn fingerprint(&self) -> &str {
        &self.fingerprint
    }

    pub fn observation_dim(&self) -> usize {
        observation_dim(self.assets.muscles.len(), self.cfg.future_frames)
    }

    pub fn action_dim(&self) -> usize {
        action_dim(self.assets.muscles.len())
    }

    pub fn state(&self) -> &ModelState {
        &self.state
    }

    pub fn muscle_states(&self) -> &[MuscleState] {
        &self.muscle_states
    }

    /// Excitations applied during the last step.
    pub fn excitation(&self) -> &[f64] {
        &self.excitation
    }

    /// Filtered exoskeleton torques applied during the last step, N·m.
    pub fn exo_torques(&self) -> &[f64; N_JOINTS] {
        self.exo.output()
    }

    /// Muscle rates averaged over the last step.
    pub fn metabolics(&self) -> &[MetabolicRates] {
        &self.metabolics
    }

    pub fn last_reward(&self) -> &RewardBreakdown {
        &self.last_reward
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Time since the episode started, s.
    pub fn time(&self) -> f64 {
        self.steps as f64 * self.cfg.control_dt()
    }

    /// Reference clip time matching the current state, s.
    pub fn reference_time(&self) -> f64 {
        self.start_time + self.time()
    }

    pub fn reference_now(&self) -> RefFrame {
        self.assets.clip.sample_at(self.reference_time())
    }

    pub fn root_deviation(&self) -> f64 {
        let r = self.reference_now().root();
        let q = self.state.root();
        ((q[0] - r[0]).powi(2) + (q[1] - r[1]).powi(2)).sqrt()
    }

    pub fn is_live(&self) -> bool {
        self.live
    }

    /// Starts an episode at a uniformly sampled clip frame. `Some(seed)`
    /// reseeds the generator first.
    pub fn reset(&mut self, seed: Option<u64>) -> Result<Vec<f64>, EnvError> {
        if let Some(s) = seed {
            self.rng = ChaCha8Rng::seed_from_u64(s);
        }
        let frame = self.rng.random_range(0..self.assets.clip.len());
        self.reset_at(frame)
    }

    /// Starts an episode at a given clip frame.
    pub fn reset_at(&mut self, frame: usize) -> Result<Vec<f64>, EnvError> {
        let clip = &self.assets.clip;
        if frame >= clip.len() {
            return Err(EnvError::Reset(format!("frame {frame} beyond clip of {} frames", clip.len())));
        }
        let reference = &clip.frames[frame];
        let mut q = reference.q.to_vec();
        q[1] += self.vertical_offset(&q)?;
        let joints = &q[ROOT_DOFS..];
        self.muscle_states = self.assets.muscles.equilibrium_states(joints, self.cfg.initial_activation)?;
        self.state = self.assets.model.state_from(q, reference.qdot.to_vec());
        self.excitation = vec![self.cfg.initial_activation; self.assets.muscles.len()];
        self.metabolics = self
            .muscle_states
            .iter()
            .zip(self.assets.muscles.specs())
            .map(|(s, spec)| muscle_energy_rate(s, spec))
            .collect();
        self.exo.reset();
        self.last_reward = RewardBreakdown::default();
        self.start_time = clip.time(frame);
        self.steps = 0;
        self.live = true;
        Ok(self.observation())
    }

    /// Root height shift bringing the static vertical GRF to body weight
    /// within 1 N.
    fn vertical_offset(&self, q: &[f64]) -> Result<f64, EnvError> {
        let model = &self.assets.model;
        let weight = model.weight();
        let imbalance = |dy: f64| {
            let mut p = q.to_vec();
            p[1] += dy;
            model.static_vertical_grf(&p) - weight
        };
        let span = self.cfg.vertical_search;
        let (mut lo, mut hi) = (-span, span);
        if imbalance(lo) < 0.0 || imbalance(hi) > 0.0 {
            return Err(EnvError::Reset(format!(
                "no root height within ±{span} m balances body weight"
            )));
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let f = imbalance(mid);
            if f.abs() < 1.0 {
                return Ok(mid);
            }
            if f > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Current observation in the documented layout.
    pub fn observation(&self) -> Vec<f64> {
        let mut obs = Vec::with_capacity(self.observation_dim());
        let specs = self.assets.muscles.specs();
        obs.extend(self.muscle_states.iter().map(|m| m.fiber_length));
        obs.extend(
            self.muscle_states
                .iter()
                .zip(specs)
                .map(|(m, s)| m.tendon_force / s.max_isometric_force),
        );
        obs.extend(self.muscle_states.iter().map(|m| m.activation));
        let bw = self.assets.model.weight();
        for g in self.foot_groups {
            obs.extend(self.state.grf[g].iter().map(|f| f / bw));
        }
        let angles = &self.state.q[ROOT_DOFS - 1..];
        obs.extend_from_slice(angles);
        obs.extend_from_slice(&self.state.qdot[..2]);
        let motion = self.assets.model.landmark_motion(&self.state.q, &self.state.qdot);
        for side in 0..2 {
            obs.extend_from_slice(&motion[self.landmark_index[side]].1);
        }
        let dt = self.cfg.control_dt();
        let now = self.reference_time();
        for k in 1..=self.cfg.future_frames {
            let future = self.assets.clip.sample_at(now + k as f64 * dt).angles();
            obs.extend(future.iter().zip(angles).map(|(r, a)| r - a));
        }
        obs
    }

    /// Advances one control step.
    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, EnvError> {
        if !self.live {
            return Err(EnvError::EpisodeOver);
        }
        let m = self.assets.muscles.len();
        if action.len() != self.action_dim() {
            return Err(EnvError::ActionDimension {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        let previous = self.excitation.clone();
        self.mask.decode(&action[..m], &mut self.excitation);
        self.exo.update(&action[m..]);

        if let Err(e) = self.simulate() {
            self.live = false;
            self.steps += 1;
            self.last_reward = RewardBreakdown::default();
            return Ok(StepOutcome {
                observation: vec![0.0; self.observation_dim()],
                reward: self.last_reward,
                terminated: true,
                truncated: false,
                root_deviation: f64::NAN,
                diagnostic: Some(e.to_string()),
            });
        }
        self.steps += 1;

        let reference = self.reference_now();
        let smoothness = reward::smoothness_term(&self.excitation, &previous);
        let effort = reward::effort_term(&self.metabolics);
        self.last_reward = reward::evaluate(
            &self.deviations(&reference),
            effort,
            smoothness,
            self.exo.usage(),
            &self.reward_cfg,
        );
        let deviation = self.root_deviation();
        let (terminated, truncated) = self.limits.check(self.steps, deviation);
        if terminated || truncated {
            self.live = false;
        }
        Ok(StepOutcome {
            observation: self.observation(),
            reward: self.last_reward,
            terminated,
            truncated,
            root_deviation: deviation,
            diagnostic: None,
        })
    }

    /// Squared tracking errors against a reference frame. Joint moments are
    /// compared in N·m, the reference rescaled by model mass.
    pub fn deviations(&self, reference: &RefFrame) -> Deviations {
        let s = &self.state;
        let mass = self.assets.model.total_mass();
        let ref_moments: Vec<f64> = reference.moments.iter().map(|m| m * mass).collect();
        let ee: f64 = (0..3)
            .map(|k| reward::squared_error(&s.landmarks[self.landmark_index[k]], &reference.landmarks[k]))
            .sum();
        Deviations {
            pos: reward::squared_error(&s.q[ROOT_DOFS - 1..], &reference.angles()),
            vel: reward::squared_error(&s.qdot[ROOT_DOFS - 1..], &reference.angle_rates()),
            root: reward::squared_error(&s.root(), &reference.root()),
            ee,
            torq: reward::squared_error(&s.joint_moments, &ref_moments),
        }
    }

    /// Physics substeps for one control interval. Afterwards the state's
    /// joint moments and the metabolic rates hold interval means.
    fn simulate(&mut self) -> Result<(), EnvError> {
        let n = self.cfg.substeps();
        let dt = self.cfg.physics_dt();
        let model = &self.assets.model;
        let muscles = &self.assets.muscles;
        let exo = *self.exo.output();
        let mut moments = [0.0; N_JOINTS];
        let mut rates = vec![MetabolicRates::default(); muscles.len()];
        let mut state = self.state.clone();
        for _ in 0..n {
            let angles = &state.q[ROOT_DOFS..];
            let speeds = &state.qdot[ROOT_DOFS..];
            for (i, ms) in self.muscle_states.iter_mut().enumerate() {
                let spec = muscles.spec(i);
                let e = self.excitation[i];
                let a = activation_step(ms.activation, e, dt, spec);
                let (len, vel) = muscles.mtu_kinematics(i, angles, speeds);
                ms.excitation = e;
                let (_, next) = mtu_force(ms, len, vel, a, Some(dt), spec)?;
                *ms = next;
                let r = muscle_energy_rate(ms, spec);
                let acc = &mut rates[i];
                acc.activation_maintenance += r.activation_maintenance;
                acc.shortening_lengthening += r.shortening_lengthening;
                acc.work += r.work;
                acc.total += r.total;
                acc.muscle_mass = r.muscle_mass;
            }
            let tau = muscles.joint_moments(&self.muscle_states, angles);
            state = model.step(&state, &tau, &exo, dt)?;
            for (acc, m) in moments.iter_mut().zip(&state.joint_moments) {
                *acc += m;
            }
        }
        let scale = 1.0 / n as f64;
        for r in &mut rates {
            r.activation_maintenance *= scale;
            r.shortening_lengthening *= scale;
            r.work *= scale;
            r.total *= scale;
        }
        state.joint_moments = moments.iter().map(|m| m * scale).collect();
        self.state = state;
        self.metabolics = rates;
        Ok(())
    }

    /// Snapshot of the last step for an episode trace.
    pub fn record(&self) -> StepRecord {
        StepRecord {
            time: self.time(),
            state: self.state.clone(),
            excitation: self.excitation.clone(),
            activation: self.muscle_states.iter().map(|m| m.activation).collect(),
            exo_torque: self.exo.output().to_vec(),
            reward: self.last_reward,
            metabolics: self.metabolics.clone(),
        }
    }

    pub fn trace_meta(&self) -> TraceMeta {
        let names = self.assets.muscles.names();
        TraceMeta {
            fingerprint: self.fingerprint.clone(),
            speed: self.assets.clip.meta.speed,
            phase: self.reward_cfg.phase,
            device: self.assets.model.device().kind.name().to_string(),
            mask: self
                .mask
                .weakened()
                .into_iter()
                .map(|(i, c)| (names[i].to_string(), c))
                .collect(),
            model_mass: self.assets.model.total_mass(),
            control_rate: self.cfg.control_rate,
            clip_start: self.start_time,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_dimensions() {
        assert_eq!(observation_dim(18, 5), 106);
        assert_eq!(action_dim(18), 24);
        assert_eq!(EnvConfig::default().substeps(), 8);
        let c = EnvConfig::default();
        assert!((c.episode_steps as f64 * c.control_dt() - 10.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let mut c = EnvConfig {
            physics_rate: 210.0,
            ..EnvConfig::default()
        };
        assert!(c.validate().is_err());
        c = EnvConfig {
            device: "knee".into(),
            ..EnvConfig::default()
        };
        assert!(c.validate().is_err());
        c = EnvConfig {
            weakness: Some("arm-weak".into()),
            ..EnvConfig::default()
        };
        assert!(c.validate().is_err());
        let parsed: EnvConfig = toml::from_str("device = \"hip\"\nphase = \"finetune\"").unwrap();
        assert_eq!(parsed.reward_config(), RewardConfig::finetune());
        assert!(toml::from_str::<EnvConfig>("devise = \"hip\"").is_err());
    }

    #[test]
    fn limits_are_strict() {
        let l = EpisodeLimits {
            max_steps: 250,
            radius: 0.4,
        };
        assert_eq!(l.check(3, 0.4), (false, false));
        assert_eq!(l.check(3, 0.4 + 1e-12), (true, false));
        assert_eq!(l.check(250, 0.0), (false, true));
        assert_eq!(l.check(1, f64::NAN), (true, false));
    }
}
