//! Self-describing binary policy bundles.
//!
//! Layout: `GAITCKPT`, format version (u32 LE), header length (u64 LE), JSON
//! header, then every tensor as little-endian f64 in header order.

use std::path::Path;

use gaitlab_core::env::EnvConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::TrainerConfig;
use crate::sac::{Actor, Sac};
use crate::train::TrainPhase;
use crate::TrainError;

pub const MAGIC: &[u8; 8] = b"GAITCKPT";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub phase: TrainPhase,
    pub trainer: TrainerConfig,
    pub env: EnvConfig,
    pub env_fingerprint: String,
    pub config_fingerprint: String,
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Environment steps consumed across all phases.
    pub steps: u64,
    pub rng: ChaCha8Rng,
    pub tensors: Vec<TensorInfo>,
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyCheckpoint {
    pub header: CheckpointHeader,
    pub tensors: Vec<(String, Vec<f64>)>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// SHA-256 of the trainer and environment configuration plus phase.
pub fn config_fingerprint(phase: TrainPhase, trainer: &TrainerConfig, env: &EnvConfig) -> String {
    let json = serde_json::to_vec(&(phase, trainer, env)).expect("configs serialize");
    hex(&Sha256::digest(&json))
}

fn payload(tensors: &[(String, Vec<f64>)]) -> Vec<u8> {
    let n: usize = tensors.iter().map(|(_, v)| v.len()).sum();
    let mut out = Vec::with_capacity(8 * n);
    for (_, v) in tensors {
        for x in v {
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

impl PolicyCheckpoint {
    pub fn new(
        phase: TrainPhase,
        trainer: &TrainerConfig,
        env: &EnvConfig,
        env_fingerprint: &str,
        steps: u64,
        rng: ChaCha8Rng,
        sac: &Sac,
    ) -> Self {
        let tensors = sac.export();
        let header = CheckpointHeader {
            phase,
            trainer: trainer.clone(),
            env: env.clone(),
            env_fingerprint: env_fingerprint.to_string(),
            config_fingerprint: config_fingerprint(phase, trainer, env),
            obs_dim: sac.actor.obs_dim(),
            act_dim: sac.actor.act_dim(),
            steps,
            rng,
            tensors: Vec::new(),
            payload_sha256: String::new(),
        };
        let mut ck = Self { header, tensors };
        ck.seal();
        ck
    }

    /// Refreshes the tensor table and payload digest from `tensors`.
    fn seal(&mut self) {
        self.header.tensors = self
            .tensors
            .iter()
            .map(|(name, v)| TensorInfo {
                name: name.clone(),
                len: v.len(),
            })
            .collect();
        self.header.payload_sha256 = hex(&Sha256::digest(payload(&self.tensors)));
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sealed = self.clone();
        sealed.seal();
        let header = serde_json::to_vec(&sealed.header).expect("header serializes");
        let body = payload(&sealed.tensors);
        let mut out = Vec::with_capacity(20 + header.len() + body.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u64).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&body);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TrainError> {
        let bad = |m: String| TrainError::Checkpoint(m);
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(bad("not a gaitlab checkpoint".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
        if version != FORMAT_VERSION {
            return Err(bad(format!("unsupported checkpoint version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
        let body_start = 20usize
            .checked_add(hlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| bad("truncated header".into()))?;
        let header: CheckpointHeader =
            serde_json::from_slice(&bytes[20..body_start]).map_err(|e| bad(format!("header: {e}")))?;
        let body = &bytes[body_start..];
        let total: usize = header.tensors.iter().map(|t| t.len).sum();
        if body.len() != 8 * total {
            return Err(bad(format!("payload holds {} bytes, header declares {}", body.len(), 8 * total)));
        }
        if hex(&Sha256::digest(body)) != header.payload_sha256 {
            return Err(bad("payload digest mismatch".into()));
        }
        let mut values = body.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
        let tensors = header
            .tensors
            .iter()
            .map(|t| (t.name.clone(), values.by_ref().take(t.len).collect()))
            .collect();
        Ok(Self { header, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_bytes()).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let bytes = std::fs::read(path).map_err(|e| TrainError::Io(format!("{}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    /// Rebuilds the full learner state.
    pub fn sac(&self) -> Result<Sac, TrainError> {
        let h = &self.header;
        let mut sac = Sac::new(h.obs_dim, h.act_dim, &h.trainer, &mut ChaCha8Rng::seed_from_u64(0));
        sac.import(&self.tensors)?;
        Ok(sac)
    }

    pub fn actor(&self) -> Result<Actor, TrainError> {
        Ok(self.sac()?.actor)
    }
}
