//! Per-muscle excitation caps modelling muscle weakness.

use std::collections::BTreeMap;

use crate::muscle::{MuscleError, MuscleSet};

/// Cap applied to weakened muscles by the named presets.
pub const WEAK_CAP: f64 = 0.05;

pub const PRESETS: [&str; 2] = ["plantarflexor-weak-left", "hipflexor-weak-left"];

/// Muscles affected by a named preset.
pub fn preset_muscles(name: &str) -> Option<&'static [&'static str]> {
    match name {
        "plantarflexor-weak-left" => Some(&["soleus_l", "gastrocnemius_l"]),
        "hipflexor-weak-left" => Some(&["iliopsoas_l"]),
        _ => None,
    }
}

/// Maximum excitation per muscle; excitations are clamped, not rescaled.
#[derive(Debug, Clone, PartialEq)]
pub struct WeaknessMask {
    caps: Vec<f64>,
}

impl WeaknessMask {
    pub fn identity(n: usize) -> Self {
        Self { caps: vec![1.0; n] }
    }

    /// Builds a mask from muscle-name → cap pairs; unnamed muscles cap at 1.
    pub fn from_caps(muscles: &MuscleSet, caps: &BTreeMap<String, f64>) -> Result<Self, MuscleError> {
        let mut mask = Self::identity(muscles.len());
        for (name, &cap) in caps {
            let i = muscles.index_of(name)?;
            if !(cap > 0.0 && cap <= 1.0) {
                return Err(MuscleError::InvalidSpec {
                    name: name.clone(),
                    reason: format!("excitation cap {cap} outside (0, 1]"),
                });
            }
            mask.caps[i] = cap;
        }
        Ok(mask)
    }

    pub fn preset(muscles: &MuscleSet, name: &str) -> Result<Self, MuscleError> {
        let names = preset_muscles(name).ok_or_else(|| MuscleError::UnknownMuscle(format!("weakness preset '{name}'")))?;
        let caps = names.iter().map(|n| (n.to_string(), WEAK_CAP)).collect();
        Self::from_caps(muscles, &caps)
    }

    pub fn caps(&self) -> &[f64] {
        &self.caps
    }

    pub fn is_identity(&self) -> bool {
        self.caps.iter().all(|&c| c == 1.0)
    }

    /// Weakened muscles as `(index, cap)`.
    pub fn weakened(&self) -> Vec<(usize, f64)> {
        self.caps.iter().copied().enumerate().filter(|&(_, c)| c < 1.0).collect()
    }

    /// Decodes policy outputs in [−1, 1] to capped excitations in [0, 1].
    pub fn decode(&self, action: &[f64], out: &mut [f64]) {
        for ((o, &a), &cap) in out.iter_mut().zip(action).zip(&self.caps) {
            *o = (0.5 * (a.clamp(-1.0, 1.0) + 1.0)).min(cap);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::default_muscles;

    #[test]
    fn clamp_not_scale() {
        let m = default_muscles();
        let mask = WeaknessMask::preset(&m, "plantarflexor-weak-left").unwrap();
        let soleus = m.index_of("soleus_l").unwrap();
        let mut action = vec![0.0; m.len()];
        let mut out = vec![0.0; m.len()];
        action[soleus] = 1.0;
        mask.decode(&action, &mut out);
        assert_eq!(out[soleus], 0.05);
        action[soleus] = 2.0 * 0.03 - 1.0;
        mask.decode(&action, &mut out);
        assert!((out[soleus] - 0.03).abs() < 1e-15);
        assert_eq!(mask.weakened().len(), 2);
    }

    #[test]
    fn unknown_names_are_rejected() {
        let m = default_muscles();
        assert!(WeaknessMask::preset(&m, "everything-weak").is_err());
        let caps = [("psoas_l".to_string(), 0.05)].into_iter().collect();
        assert!(matches!(WeaknessMask::from_caps(&m, &caps), Err(MuscleError::UnknownMuscle(_))));
        let caps = [("soleus_l".to_string(), 0.0)].into_iter().collect();
        assert!(WeaknessMask::from_caps(&m, &caps).is_err());
    }
}
