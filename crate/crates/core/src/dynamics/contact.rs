//! Sphere–ground contact with Hunt–Crossley normal force and regularized
//! Coulomb friction.

use serde::{Deserialize, Serialize};

use super::DynamicsError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactMaterial {
    /// N/m^exponent
    pub stiffness: f64,
    pub exponent: f64,
    /// Hunt–Crossley dissipation, s/m.
    pub dissipation: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Below this slip speed (m/s) friction is viscous.
    pub viscous_slip: f64,
}

impl Default for ContactMaterial {
    fn default() -> Self {
        Self {
            stiffness: 5.0e6,
            exponent: 1.5,
            dissipation: 2.0,
            friction: 0.9,
            viscous_slip: 0.01,
        }
    }
}

impl ContactMaterial {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        let ok = self.stiffness > 0.0
            && self.exponent >= 1.0
            && self.dissipation >= 0.0
            && self.friction >= 0.0
            && self.viscous_slip > 0.0;
        if ok {
            Ok(())
        } else {
            Err(DynamicsError::InvalidSpec(format!("invalid contact material {self:?}")))
        }
    }
}

/// Force on a contact sphere plus its partial derivatives, used by the
/// linearly implicit step.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct ContactResponse {
    /// Tangential (forward) and normal (upward) force, N.
    pub force: [f64; 2],
    /// ∂f_normal/∂depth
    pub dn_ddepth: f64,
    /// ∂f_normal/∂depth_rate
    pub dn_drate: f64,
    /// ∂f_tangential/∂v_tangential
    pub dt_dslip: f64,
}

/// Ground reaction on one sphere: `[tangential, normal]` in N.
///
/// `depth` is the penetration (m, positive inside the ground), `depth_rate`
/// its time derivative, and `slip` the tangential velocity of the contact
/// point. Non-penetrating spheres produce zero force.
pub fn contact_force(depth: f64, depth_rate: f64, slip: f64, material: &ContactMaterial) -> [f64; 2] {
    contact_response(depth, depth_rate, slip, material).force
}

pub(crate) fn contact_response(
    depth: f64,
    depth_rate: f64,
    slip: f64,
    m: &ContactMaterial,
) -> ContactResponse {
    if depth <= 0.0 {
        return ContactResponse::default();
    }
    let elastic = m.stiffness * depth.powf(m.exponent);
    let damping = 1.0 + m.dissipation * depth_rate;
    if damping <= 0.0 {
        // separating faster than the dissipation allows: unilateral clamp
        return ContactResponse::default();
    }
    let normal = elastic * damping;
    let dn_ddepth = m.exponent * m.stiffness * depth.powf(m.exponent - 1.0) * damping;
    let dn_drate = elastic * m.dissipation;

    let limit = m.friction * normal;
    let (shape, dshape) = if slip.abs() < m.viscous_slip {
        (slip / m.viscous_slip, 1.0 / m.viscous_slip)
    } else {
        (slip.signum(), 0.0)
    };
    ContactResponse {
        force: [-limit * shape, normal],
        dn_ddepth,
        dn_drate,
        dt_dslip: -limit * dshape,
    }
}
