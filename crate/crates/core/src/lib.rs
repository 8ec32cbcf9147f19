//! Planar musculoskeletal walker, reference-motion processing, imitation
//! reward and the reinforcement-learning environment built on them.

pub mod config;
pub mod dynamics;
pub mod env;
pub mod layout;
pub mod metabolics;
pub mod muscle;
pub mod refmotion;
pub mod reward;
pub mod trace;
