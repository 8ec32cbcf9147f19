//! Planar sagittal rigid-body dynamics of the walker.
//!
//! The model is a floating-base kinematic tree in relative coordinates:
//! root x/y, root pitch, then one hinge angle per joint. Equations of motion
//! are assembled from point Jacobians (`M q̈ = Q − Σ mᵢ Jᵢᵀ aᵢ_bias`) and
//! advanced with semi-implicit Euler. Contact and joint-limit forces enter
//! linearly implicit so that stiff ground contact stays stable at 200 Hz.

pub mod contact;
mod spec;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use contact::{contact_force, ContactMaterial};
pub use spec::{ContactSphereSpec, DeviceKind, ExoDeviceSpec, JointSpec, LandmarkSpec, SegmentSpec, SkeletonSpec};

use contact::contact_response;

/// Joint-limit torque engages this far before each limit.
pub const LIMIT_MARGIN: f64 = 2.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("invalid model specification: {0}")]
    InvalidSpec(String),
    #[error("device adds mass to segment '{0}' which the skeleton does not have")]
    UnknownSegment(String),
    #[error("configuration parse error: {0}")]
    Parse(String),
    #[error("input has {got} entries, expected {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("simulation diverged: {0}")]
    Diverged(String),
}

#[derive(Debug, Clone)]
struct Segment {
    name: String,
    mass: f64,
    inertia: f64,
    com: [f64; 2],
    /// Joint whose child this segment is (`None` for the root).
    parent_joint: Option<usize>,
    /// Rotational coordinates acting on this segment, root first.
    chain: Vec<usize>,
}

#[derive(Debug, Clone)]
struct Joint {
    name: String,
    parent: usize,
    child: usize,
    anchor: [f64; 2],
    sign: f64,
    lower: f64,
    upper: f64,
    stiffness: f64,
    damping: f64,
}

#[derive(Debug, Clone)]
struct ContactSphere {
    segment: usize,
    offset: [f64; 2],
    radius: f64,
    group: usize,
}

#[derive(Debug, Clone)]
struct Landmark {
    segment: usize,
    offset: [f64; 2],
}

/// Simulable walker. Immutable once built; share it freely between threads.
#[derive(Debug, Clone)]
pub struct Model {
    segments: Vec<Segment>,
    /// Parents before children.
    order: Vec<usize>,
    joints: Vec<Joint>,
    contacts: Vec<ContactSphere>,
    contact_groups: Vec<String>,
    landmarks: Vec<Landmark>,
    landmark_names: Vec<String>,
    gravity: f64,
    material: ContactMaterial,
    contact_enabled: bool,
    locked: Vec<bool>,
    total_mass: f64,
    device: ExoDeviceSpec,
}

/// Mechanical state of the walker at one physics tick.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    /// `[root_x, root_y, root_pitch, joint angles...]`
    pub q: Vec<f64>,
    pub qdot: Vec<f64>,
    /// Ground reaction `[fx, fy]` per contact group (one per foot), N.
    pub grf: Vec<[f64; 2]>,
    /// Landmark positions in the order of the skeleton spec, m.
    pub landmarks: Vec<[f64; 2]>,
    /// Net joint moments applied during the step that produced this state, N·m.
    pub joint_moments: Vec<f64>,
}

impl ModelState {
    pub fn root(&self) -> [f64; 2] {
        [self.q[0], self.q[1]]
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(&self.qdot).all(|v| v.is_finite())
            && self.grf.iter().flatten().all(|v| v.is_finite())
            && self.landmarks.iter().flatten().all(|v| v.is_finite())
            && self.joint_moments.iter().all(|v| v.is_finite())
    }
}

/// Per-segment frame data for one configuration.
#[derive(Debug, Clone)]
struct Pose {
    origin: Vec<[f64; 2]>,
    angle: Vec<f64>,
    omega: Vec<f64>,
    origin_vel: Vec<[f64; 2]>,
    /// Origin acceleration with q̈ = 0.
    origin_bias: Vec<[f64; 2]>,
}

#[inline]
fn rotate(angle: f64, v: [f64; 2]) -> [f64; 2] {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

#[inline]
fn cross_z(w: f64, v: [f64; 2]) -> [f64; 2] {
    [-w * v[1], w * v[0]]
}

/// Limit excursion, in margins, beyond which the limit spring stops stiffening.
const LIMIT_SATURATION: f64 = 5.0;
const NEWTON_ITERATIONS: usize = 10;
/// Velocity change (m/s or rad/s) below which the corrector stops.
const NEWTON_TOLERANCE: f64 = 1e-8;
/// A tick is halved at most this many times.
const MAX_SPLITS: usize = 6;

struct StiffForces {
    rhs: DVector<f64>,
    stiff: DMatrix<f64>,
    damp: DMatrix<f64>,
    limit: Vec<f64>,
}

/// Joint-limit torque and its partial derivatives `(τ, ∂τ/∂θ, ∂τ/∂θ̇)`.
fn limit_torque(j: &Joint, theta: f64, theta_dot: f64) -> (f64, f64, f64) {
    let m = LIMIT_MARGIN;
    let (d, dir) = if theta > j.upper - m {
        (theta - (j.upper - m), -1.0)
    } else if theta < j.lower + m {
        ((j.lower + m) - theta, 1.0)
    } else {
        return (0.0, 0.0, 0.0);
    };
    // exponential growth, continued linearly past LIMIT_SATURATION margins
    let ds = d.min(LIMIT_SATURATION * m);
    let e = (ds / m).exp();
    let spring = j.stiffness * (m * (e - 1.0) + e * (d - ds));
    let w = 1.0 - (-d / m).exp();
    let tau = dir * spring - j.damping * w * theta_dot;
    (tau, -j.stiffness * e, -j.damping * w)
}

/// Builds a model from a skeleton and an exoskeleton device.
pub fn build_model(skeleton: &SkeletonSpec, device: &ExoDeviceSpec) -> Result<Model, DynamicsError> {
    Model::build(skeleton, device)
}

/// Advances the state by one tick; see [`Model::step`].
pub fn step_physics(
    model: &Model,
    state: &ModelState,
    muscle_torques: &[f64],
    exo_torques: &[f64],
    dt: f64,
) -> Result<ModelState, DynamicsError> {
    model.step(state, muscle_torques, exo_torques, dt)
}

impl Model {
    pub fn build(skeleton: &SkeletonSpec, device: &ExoDeviceSpec) -> Result<Self, DynamicsError> {
        skeleton.validate()?;
        device.validate()?;
        for seg in device.added_mass.keys() {
            if skeleton.segment(seg).is_none() {
                return Err(DynamicsError::UnknownSegment(seg.clone()));
            }
        }

        let index_of = |name: &str| skeleton.segments.iter().position(|s| s.name == name).unwrap();
        let mut segments: Vec<Segment> = skeleton
            .segments
            .iter()
            .map(|s| {
                let added = device.added_mass.get(&s.name).copied().unwrap_or(0.0);
                let mass = s.mass + added;
                Segment {
                    name: s.name.clone(),
                    mass,
                    inertia: s.inertia * (mass / s.mass),
                    com: s.com,
                    parent_joint: None,
                    chain: Vec::new(),
                }
            })
            .collect();

        let joints: Vec<Joint> = skeleton
            .joints
            .iter()
            .map(|j| Joint {
                name: j.name.clone(),
                parent: index_of(&j.parent),
                child: index_of(&j.child),
                anchor: j.anchor,
                sign: j.sign,
                lower: j.lower,
                upper: j.upper,
                stiffness: j.limit_stiffness,
                damping: j.limit_damping,
            })
            .collect();
        for (ji, j) in joints.iter().enumerate() {
            segments[j.child].parent_joint = Some(ji);
        }

        let root = index_of(&skeleton.root);
        let mut order = vec![root];
        let mut cursor = 0;
        while cursor < order.len() {
            let p = order[cursor];
            for j in joints.iter().filter(|j| j.parent == p) {
                order.push(j.child);
            }
            cursor += 1;
        }
        for &si in &order {
            let chain = match segments[si].parent_joint {
                None => vec![2],
                Some(ji) => {
                    let mut c = segments[joints[ji].parent].chain.clone();
                    c.push(3 + ji);
                    c
                }
            };
            segments[si].chain = chain;
        }

        let mut contact_groups: Vec<String> = Vec::new();
        let contacts = skeleton
            .contacts
            .iter()
            .map(|c| {
                let group = match contact_groups.iter().position(|g| *g == c.segment) {
                    Some(g) => g,
                    None => {
                        contact_groups.push(c.segment.clone());
                        contact_groups.len() - 1
                    }
                };
                ContactSphere {
                    segment: index_of(&c.segment),
                    offset: c.offset,
                    radius: c.radius,
                    group,
                }
            })
            .collect();
        let landmarks = skeleton
            .landmarks
            .iter()
            .map(|l| Landmark {
                segment: index_of(&l.segment),
                offset: l.offset,
            })
            .collect();

        let total_mass = segments.iter().map(|s| s.mass).sum();
        let n = 3 + joints.len();
        Ok(Self {
            segments,
            order,
            joints,
            contacts,
            contact_groups,
            landmarks,
            landmark_names: skeleton.landmarks.iter().map(|l| l.name.clone()).collect(),
            gravity: skeleton.gravity,
            material: skeleton.contact_material,
            contact_enabled: true,
            locked: vec![false; n],
            total_mass,
            device: device.clone(),
        })
    }

    /// Returns a copy with the named coordinates held fixed.
    pub fn with_locked(mut self, coords: &[usize]) -> Self {
        for &c in coords {
            self.locked[c] = true;
        }
        self
    }

    pub fn with_contact(mut self, enabled: bool) -> Self {
        self.contact_enabled = enabled;
        self
    }

    pub fn n_dof(&self) -> usize {
        3 + self.joints.len()
    }

    pub fn n_joints(&self) -> usize {
        self.joints.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn weight(&self) -> f64 {
        self.total_mass * self.gravity
    }

    pub fn gravity(&self) -> f64 {
        self.gravity
    }

    pub fn device(&self) -> &ExoDeviceSpec {
        &self.device
    }

    pub fn joint_names(&self) -> Vec<&str> {
        self.joints.iter().map(|j| j.name.as_str()).collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn joint_limits(&self, joint: usize) -> (f64, f64) {
        (self.joints[joint].lower, self.joints[joint].upper)
    }

    pub fn segment_mass(&self, name: &str) -> Option<f64> {
        self.segments.iter().find(|s| s.name == name).map(|s| s.mass)
    }

    pub fn segment_inertia(&self, name: &str) -> Option<f64> {
        self.segments.iter().find(|s| s.name == name).map(|s| s.inertia)
    }

    pub fn contact_groups(&self) -> &[String] {
        &self.contact_groups
    }

    pub fn landmark_names(&self) -> &[String] {
        &self.landmark_names
    }

    pub fn contact_material(&self) -> &ContactMaterial {
        &self.material
    }

    fn pose(&self, q: &[f64], qdot: &[f64]) -> Pose {
        let ns = self.segments.len();
        let mut pose = Pose {
            origin: vec![[0.0; 2]; ns],
            angle: vec![0.0; ns],
            omega: vec![0.0; ns],
            origin_vel: vec![[0.0; 2]; ns],
            origin_bias: vec![[0.0; 2]; ns],
        };
        for &si in &self.order {
            match self.segments[si].parent_joint {
                None => {
                    pose.origin[si] = [q[0], q[1]];
                    pose.angle[si] = q[2];
                    pose.omega[si] = qdot[2];
                    pose.origin_vel[si] = [qdot[0], qdot[1]];
                }
                Some(ji) => {
                    let j = &self.joints[ji];
                    let p = j.parent;
                    let r = rotate(pose.angle[p], j.anchor);
                    let wp = pose.omega[p];
                    let v = cross_z(wp, r);
                    pose.origin[si] = [pose.origin[p][0] + r[0], pose.origin[p][1] + r[1]];
                    pose.origin_vel[si] = [pose.origin_vel[p][0] + v[0], pose.origin_vel[p][1] + v[1]];
                    pose.origin_bias[si] = [
                        pose.origin_bias[p][0] - wp * wp * r[0],
                        pose.origin_bias[p][1] - wp * wp * r[1],
                    ];
                    pose.angle[si] = pose.angle[p] + j.sign * q[3 + ji];
                    pose.omega[si] = wp + j.sign * qdot[3 + ji];
                }
            }
        }
        pose
    }

    fn point_world(&self, pose: &Pose, seg: usize, local: [f64; 2]) -> [f64; 2] {
        let r = rotate(pose.angle[seg], local);
        [pose.origin[seg][0] + r[0], pose.origin[seg][1] + r[1]]
    }

    /// Velocity and q̈ = 0 acceleration of a point fixed to a segment.
    fn point_motion(&self, pose: &Pose, seg: usize, local: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let r = rotate(pose.angle[seg], local);
        let w = pose.omega[seg];
        let v = cross_z(w, r);
        (
            [pose.origin_vel[seg][0] + v[0], pose.origin_vel[seg][1] + v[1]],
            [pose.origin_bias[seg][0] - w * w * r[0], pose.origin_bias[seg][1] - w * w * r[1]],
        )
    }

    /// Pivot of a rotational coordinate: the root origin for pitch, the
    /// child origin for joints.
    fn pivot(&self, pose: &Pose, coord: usize) -> ([f64; 2], f64) {
        if coord == 2 {
            let root = self.order[0];
            (pose.origin[root], 1.0)
        } else {
            let j = &self.joints[coord - 3];
            (pose.origin[j.child], j.sign)
        }
    }

    /// Fills the 2×n Jacobian of a world point attached to `seg`.
    fn point_jacobian(&self, pose: &Pose, seg: usize, p: [f64; 2], jac: &mut [[f64; 2]]) {
        jac.iter_mut().for_each(|c| *c = [0.0, 0.0]);
        jac[0] = [1.0, 0.0];
        jac[1] = [0.0, 1.0];
        for &c in &self.segments[seg].chain {
            let (o, s) = self.pivot(pose, c);
            jac[c] = cross_z(s, [p[0] - o[0], p[1] - o[1]]);
        }
    }

    fn angular_jacobian(&self, seg: usize, row: &mut [f64]) {
        row.iter_mut().for_each(|v| *v = 0.0);
        for &c in &self.segments[seg].chain {
            row[c] = if c == 2 { 1.0 } else { self.joints[c - 3].sign };
        }
    }

    /// Joint-space mass matrix.
    pub fn mass_matrix(&self, q: &[f64]) -> DMatrix<f64> {
        let n = self.n_dof();
        let zeros = vec![0.0; n];
        let pose = self.pose(q, &zeros);
        let mut m = DMatrix::zeros(n, n);
        let mut jac = vec![[0.0; 2]; n];
        let mut ang = vec![0.0; n];
        for (si, seg) in self.segments.iter().enumerate() {
            let c = self.point_world(&pose, si, seg.com);
            self.point_jacobian(&pose, si, c, &mut jac);
            self.angular_jacobian(si, &mut ang);
            for a in 0..n {
                for b in a..n {
                    let v = seg.mass * (jac[a][0] * jac[b][0] + jac[a][1] * jac[b][1]) + seg.inertia * ang[a] * ang[b];
                    m[(a, b)] += v;
                    if a != b {
                        m[(b, a)] += v;
                    }
                }
            }
        }
        m
    }

    /// Kinetic plus gravitational potential energy (zero at ground level), J.
    pub fn mechanical_energy(&self, state: &ModelState) -> f64 {
        let m = self.mass_matrix(&state.q);
        let qd = DVector::from_column_slice(&state.qdot);
        let kinetic = 0.5 * qd.dot(&(&m * &qd));
        let pose = self.pose(&state.q, &state.qdot);
        let potential: f64 = self
            .segments
            .iter()
            .enumerate()
            .map(|(si, s)| s.mass * self.gravity * self.point_world(&pose, si, s.com)[1])
            .sum();
        kinetic + potential
    }

    /// Builds a state for the given coordinates, with landmarks and contact
    /// forces evaluated there and zero joint moments.
    pub fn state_from(&self, q: Vec<f64>, qdot: Vec<f64>) -> ModelState {
        let pose = self.pose(&q, &qdot);
        let grf = self.ground_forces(&pose);
        let landmarks = self.landmarks_at(&pose);
        ModelState {
            q,
            qdot,
            grf,
            landmarks,
            joint_moments: vec![0.0; self.joints.len()],
        }
    }

    fn landmarks_at(&self, pose: &Pose) -> Vec<[f64; 2]> {
        self.landmarks
            .iter()
            .map(|l| self.point_world(pose, l.segment, l.offset))
            .collect()
    }

    /// Landmark positions and velocities for a configuration.
    pub fn landmark_motion(&self, q: &[f64], qdot: &[f64]) -> Vec<([f64; 2], [f64; 2])> {
        let pose = self.pose(q, qdot);
        self.landmarks
            .iter()
            .map(|l| (self.point_world(&pose, l.segment, l.offset), self.point_motion(&pose, l.segment, l.offset).0))
            .collect()
    }

    /// World positions of every contact sphere's lowest point, with group index.
    pub fn contact_points(&self, q: &[f64]) -> Vec<(usize, [f64; 2])> {
        let zeros = vec![0.0; q.len()];
        let pose = self.pose(q, &zeros);
        self.contacts
            .iter()
            .map(|c| {
                let center = self.point_world(&pose, c.segment, c.offset);
                (c.group, [center[0], center[1] - c.radius])
            })
            .collect()
    }

    /// Velocity of each contact sphere's lowest point, in contact order.
    pub fn contact_point_velocities(&self, q: &[f64], qdot: &[f64]) -> Vec<(usize, [f64; 2])> {
        let pose = self.pose(q, qdot);
        self.contacts
            .iter()
            .map(|c| {
                let local = [c.offset[0], c.offset[1]];
                let center = self.point_world(&pose, c.segment, local);
                let p = [center[0], center[1] - c.radius];
                let r = [p[0] - pose.origin[c.segment][0], p[1] - pose.origin[c.segment][1]];
                let w = pose.omega[c.segment];
                let v = cross_z(w, r);
                (c.group, [pose.origin_vel[c.segment][0] + v[0], pose.origin_vel[c.segment][1] + v[1]])
            })
            .collect()
    }

    fn ground_forces(&self, pose: &Pose) -> Vec<[f64; 2]> {
        let mut grf = vec![[0.0; 2]; self.contact_groups.len()];
        if !self.contact_enabled {
            return grf;
        }
        for c in &self.contacts {
            let (p, v) = self.contact_kinematics(pose, c);
            let r = contact_response(-p[1], -v[1], v[0], &self.material);
            grf[c.group][0] += r.force[0];
            grf[c.group][1] += r.force[1];
        }
        grf
    }

    fn contact_kinematics(&self, pose: &Pose, c: &ContactSphere) -> ([f64; 2], [f64; 2]) {
        let center = self.point_world(pose, c.segment, c.offset);
        let p = [center[0], center[1] - c.radius];
        let r = [p[0] - pose.origin[c.segment][0], p[1] - pose.origin[c.segment][1]];
        let w = pose.omega[c.segment];
        let v = cross_z(w, r);
        (p, [pose.origin_vel[c.segment][0] + v[0], pose.origin_vel[c.segment][1] + v[1]])
    }

    /// Net vertical ground force for a configuration at rest, N.
    pub fn static_vertical_grf(&self, q: &[f64]) -> f64 {
        let zeros = vec![0.0; q.len()];
        let pose = self.pose(q, &zeros);
        self.ground_forces(&pose).iter().map(|f| f[1]).sum()
    }

    /// Generalized forces `M q̈ + h(q, q̇)` required for a motion, with no
    /// contact or limit forces (inverse dynamics of the free tree).
    pub fn inverse_dynamics(&self, q: &[f64], qdot: &[f64], qddot: &[f64]) -> Vec<f64> {
        let n = self.n_dof();
        let pose = self.pose(q, qdot);
        let m = self.mass_matrix(q);
        let qdd = DVector::from_column_slice(qddot);
        let mut out = &m * &qdd;
        let mut jac = vec![[0.0; 2]; n];
        for (si, seg) in self.segments.iter().enumerate() {
            let c = self.point_world(&pose, si, seg.com);
            let (_, bias) = self.point_motion(&pose, si, seg.com);
            self.point_jacobian(&pose, si, c, &mut jac);
            for k in 0..n {
                out[k] += seg.mass * (jac[k][0] * bias[0] + jac[k][1] * (bias[1] + self.gravity));
            }
        }
        out.iter().copied().collect()
    }

    /// Generalized force produced by a world-frame force applied at a world
    /// point rigidly attached to the named segment.
    pub fn point_force_generalized(&self, q: &[f64], segment: &str, point: [f64; 2], force: [f64; 2]) -> Vec<f64> {
        let n = self.n_dof();
        let si = self.segments.iter().position(|s| s.name == segment).expect("unknown segment");
        let zeros = vec![0.0; n];
        let pose = self.pose(q, &zeros);
        let mut jac = vec![[0.0; 2]; n];
        self.point_jacobian(&pose, si, point, &mut jac);
        jac.iter().map(|c| c[0] * force[0] + c[1] * force[1]).collect()
    }

    /// Mass matrix and the smooth generalized forces (gravity, velocity
    /// products, applied joint torques) at a state.
    fn smooth_forces(
        &self,
        q: &[f64],
        qdot: &[f64],
        muscle_torques: &[f64],
        exo_torques: &[f64],
    ) -> (DMatrix<f64>, DVector<f64>) {
        let n = self.n_dof();
        let pose = self.pose(q, qdot);
        let mass = self.mass_matrix(q);
        let mut rhs = DVector::<f64>::zeros(n);
        let mut jac = vec![[0.0; 2]; n];
        for (si, seg) in self.segments.iter().enumerate() {
            let c = self.point_world(&pose, si, seg.com);
            let (_, bias) = self.point_motion(&pose, si, seg.com);
            self.point_jacobian(&pose, si, c, &mut jac);
            for k in 0..n {
                rhs[k] -= seg.mass * (jac[k][0] * bias[0] + jac[k][1] * (bias[1] + self.gravity));
            }
        }
        for ji in 0..self.joints.len() {
            rhs[3 + ji] += muscle_torques[ji] + exo_torques[ji];
        }
        (mass, rhs)
    }

    /// Contact and joint-limit forces with their position and velocity
    /// Jacobians.
    fn stiff_forces(&self, q: &[f64], qdot: &[f64]) -> StiffForces {
        let n = self.n_dof();
        let mut out = StiffForces {
            rhs: DVector::zeros(n),
            stiff: DMatrix::zeros(n, n),
            damp: DMatrix::zeros(n, n),
            limit: vec![0.0; self.joints.len()],
        };
        for (ji, j) in self.joints.iter().enumerate() {
            let k = 3 + ji;
            let (tau, k_lim, d_lim) = limit_torque(j, q[k], qdot[k]);
            out.limit[ji] = tau;
            out.rhs[k] += tau;
            out.stiff[(k, k)] += k_lim;
            out.damp[(k, k)] += d_lim;
        }
        if !self.contact_enabled {
            return out;
        }
        let pose = self.pose(q, qdot);
        let mut jac = vec![[0.0; 2]; n];
        for c in &self.contacts {
            let (p, v) = self.contact_kinematics(&pose, c);
            let r = contact_response(-p[1], -v[1], v[0], &self.material);
            if r.force == [0.0, 0.0] {
                continue;
            }
            self.point_jacobian(&pose, c.segment, p, &mut jac);
            // depth = −p_y and depth rate = −v_y; the friction limit's
            // dependence on the normal force stays explicit
            let kyy = -r.dn_ddepth;
            let dyy = -r.dn_drate;
            let dxx = r.dt_dslip;
            for a in 0..n {
                out.rhs[a] += jac[a][0] * r.force[0] + jac[a][1] * r.force[1];
                for b in 0..n {
                    out.stiff[(a, b)] += jac[a][1] * kyy * jac[b][1];
                    out.damp[(a, b)] += jac[a][0] * dxx * jac[b][0] + jac[a][1] * dyy * jac[b][1];
                }
            }
        }
        out
    }

    /// Solves `(M − c_v·D − c_q·K) q̈ = Q + K·δq₀ + D·δv₀` over the free
    /// coordinates, i.e. the accelerations that balance the stiff forces
    /// evaluated at `q + δq₀ + c_q·q̈`, `q̇ + δv₀ + c_v·q̈`.
    #[allow(clippy::too_many_arguments)]
    fn solve_free(
        &self,
        mass: &DMatrix<f64>,
        rhs: &DVector<f64>,
        s: &StiffForces,
        cq: f64,
        cv: f64,
        dq0: &[f64],
        dv0: &[f64],
    ) -> Result<Vec<f64>, DynamicsError> {
        let n = self.n_dof();
        let free: Vec<usize> = (0..n).filter(|&i| !self.locked[i]).collect();
        let nf = free.len();
        let mut qddot = vec![0.0; n];
        if nf == 0 {
            return Ok(qddot);
        }
        let mut a = DMatrix::<f64>::zeros(nf, nf);
        let mut b = DVector::<f64>::zeros(nf);
        for (ia, &ga) in free.iter().enumerate() {
            let mut extra = 0.0;
            for gb in 0..n {
                extra += s.stiff[(ga, gb)] * dq0[gb] + s.damp[(ga, gb)] * dv0[gb];
            }
            b[ia] = rhs[ga] + s.rhs[ga] + extra;
            for (ib, &gb) in free.iter().enumerate() {
                a[(ia, ib)] = mass[(ga, gb)] - cv * s.damp[(ga, gb)] - cq * s.stiff[(ga, gb)];
            }
        }
        let sol = match a.clone().cholesky() {
            Some(ch) => ch.solve(&b),
            None => a
                .lu()
                .solve(&b)
                .ok_or_else(|| DynamicsError::Diverged("singular system matrix".into()))?,
        };
        for (ia, &ga) in free.iter().enumerate() {
            qddot[ga] = sol[ia];
        }
        Ok(qddot)
    }

    /// Advances `dt`, halving the interval when the corrector fails to
    /// converge. Returns the end state and the time-averaged limit torques.
    fn integrate(
        &self,
        q: &[f64],
        qdot: &[f64],
        muscle_torques: &[f64],
        exo_torques: &[f64],
        dt: f64,
        depth: usize,
    ) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>), DynamicsError> {
        let (out, converged) = self.tick(q, qdot, muscle_torques, exo_torques, dt)?;
        if converged || depth == MAX_SPLITS {
            return Ok(out);
        }
        let (q1, v1, l1) = self.integrate(q, qdot, muscle_torques, exo_torques, 0.5 * dt, depth + 1)?;
        let (q2, v2, l2) = self.integrate(&q1, &v1, muscle_torques, exo_torques, 0.5 * dt, depth + 1)?;
        let limit = l1.iter().zip(&l2).map(|(a, b)| 0.5 * (a + b)).collect();
        Ok((q2, v2, limit))
    }

    /// One predictor–corrector step; the flag reports corrector convergence.
    #[allow(clippy::type_complexity)]
    fn tick(
        &self,
        q: &[f64],
        qdot: &[f64],
        muscle_torques: &[f64],
        exo_torques: &[f64],
        dt: f64,
    ) -> Result<((Vec<f64>, Vec<f64>, Vec<f64>), bool), DynamicsError> {
        let n = self.n_dof();
        let h = 0.5 * dt;
        let zeros = vec![0.0; n];

        // predictor: linearly implicit Euler over the first half tick
        let (m0, r0) = self.smooth_forces(q, qdot, muscle_torques, exo_torques);
        let s0 = self.stiff_forces(q, qdot);
        let dq0: Vec<f64> = qdot.iter().map(|v| h * v).collect();
        let a1 = self.solve_free(&m0, &r0, &s0, h * h, h, &dq0, &zeros)?;
        let v_mid: Vec<f64> = (0..n).map(|i| qdot[i] + h * a1[i]).collect();
        let q_mid: Vec<f64> = (0..n).map(|i| q[i] + h * v_mid[i]).collect();

        // corrector: smooth forces at the midpoint, stiff forces at the end of
        // the tick, solved by Newton iteration on the end state
        let (m1, r1) = self.smooth_forces(&q_mid, &v_mid, muscle_torques, exo_torques);
        let mut v_new: Vec<f64> = (0..n).map(|i| qdot[i] + dt * a1[i]).collect();
        let mut q_new: Vec<f64> = (0..n).map(|i| q[i] + h * (qdot[i] + v_new[i])).collect();
        let mut limit = s0.limit;
        let mut converged = false;
        for _ in 0..NEWTON_ITERATIONS {
            let st = self.stiff_forces(&q_new, &v_new);
            let dq0: Vec<f64> = (0..n).map(|i| q[i] + dt * qdot[i] - q_new[i]).collect();
            let dv0: Vec<f64> = (0..n).map(|i| qdot[i] - v_new[i]).collect();
            let acc = self.solve_free(&m1, &r1, &st, 0.5 * dt * dt, dt, &dq0, &dv0)?;
            let mut change: f64 = 0.0;
            for i in 0..n {
                let v = qdot[i] + dt * acc[i];
                change = change.max((v - v_new[i]).abs());
                v_new[i] = v;
                q_new[i] = q[i] + h * (qdot[i] + v);
            }
            limit = st.limit;
            if change <= NEWTON_TOLERANCE {
                converged = true;
                break;
            }
            if !change.is_finite() {
                break;
            }
        }
        Ok(((q_new, v_new, limit), converged))
    }

    /// Advances one tick of length `dt`.
    ///
    /// Muscle and exoskeleton torques act on the internal joints (one entry
    /// per joint). Passive joint-limit torques, gravity and ground contact are
    /// added here. The returned state records the net joint moment
    /// (muscle + passive limit + exoskeleton) of each joint.
    pub fn step(
        &self,
        state: &ModelState,
        muscle_torques: &[f64],
        exo_torques: &[f64],
        dt: f64,
    ) -> Result<ModelState, DynamicsError> {
        let n = self.n_dof();
        let nj = self.joints.len();
        for (got, expected) in [(state.q.len(), n), (state.qdot.len(), n), (muscle_torques.len(), nj), (exo_torques.len(), nj)] {
            if got != expected {
                return Err(DynamicsError::Dimension { expected, got });
            }
        }
        let (q_new, qdot_new, limit) = self.integrate(&state.q, &state.qdot, muscle_torques, exo_torques, dt, 0)?;
        let net: Vec<f64> = (0..nj).map(|j| muscle_torques[j] + limit[j] + exo_torques[j]).collect();
        if let Some(i) = (0..n).find(|&i| !q_new[i].is_finite() || !qdot_new[i].is_finite()) {
            return Err(DynamicsError::Diverged(format!(
                "coordinate {} became non-finite",
                crate::layout::DOF_NAMES.get(i).copied().unwrap_or("?")
            )));
        }

        let mut next = self.state_from(q_new, qdot_new);
        next.joint_moments = net;
        Ok(next)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{default_skeleton, hip_device};

    fn two_link() -> SkeletonSpec {
        SkeletonSpec::from_toml_str(
            r#"
            name = "two-link"
            total_mass = 17.0
            root = "base"
            [[segments]]
            name = "base"
            mass = 10.0
            inertia = 0.5
            length = 0.2
            com = [0.0, 0.0]
            [[segments]]
            name = "thigh"
            mass = 7.0
            inertia = 0.12
            length = 0.4
            com = [0.0, -0.2]
            [[joints]]
            name = "hip"
            parent = "base"
            child = "thigh"
            anchor = [0.0, 0.0]
            lower = -2.0
            upper = 2.0
            limit_stiffness = 100.0
            limit_damping = 1.0
            "#,
        )
        .unwrap()
    }

    #[test]
    fn inertia_scales_with_added_mass() {
        let sk = two_link();
        let mut dev = ExoDeviceSpec::none();
        dev.added_mass.insert("thigh".into(), 0.7);
        let base = Model::build(&sk, &ExoDeviceSpec::none()).unwrap();
        let m = Model::build(&sk, &dev).unwrap();
        let ratio = m.segment_inertia("thigh").unwrap() / base.segment_inertia("thigh").unwrap();
        assert!((ratio - 1.1).abs() < 1e-12, "{ratio}");
        assert!((m.total_mass() - base.total_mass() - 0.7).abs() < 1e-12);
    }

    #[test]
    fn device_on_missing_segment_is_rejected() {
        let mut dev = ExoDeviceSpec::none();
        dev.added_mass.insert("tail".into(), 1.0);
        assert!(matches!(Model::build(&two_link(), &dev), Err(DynamicsError::UnknownSegment(s)) if s == "tail"));
    }

    #[test]
    fn empty_device_is_identity() {
        let sk = default_skeleton();
        let m = Model::build(&sk, &ExoDeviceSpec::none()).unwrap();
        assert_eq!(m.total_mass(), sk.total_mass);
        for s in &sk.segments {
            assert_eq!(m.segment_inertia(&s.name).unwrap(), s.inertia);
        }
    }

    #[test]
    fn hip_device_adds_table_mass() {
        let sk = default_skeleton();
        let none = Model::build(&sk, &ExoDeviceSpec::none()).unwrap();
        let hip = Model::build(&sk, &hip_device()).unwrap();
        assert!((hip.total_mass() - none.total_mass() - 2.9).abs() < 1e-9);
    }

    #[test]
    fn skeleton_validation_catches_errors() {
        let mut sk = two_link();
        sk.joints[0].lower = 3.0;
        assert!(sk.validate().is_err());
        let mut sk = two_link();
        sk.segments[1].mass = 0.0;
        assert!(sk.validate().is_err());
        let mut sk = two_link();
        sk.total_mass = 18.0;
        assert!(sk.validate().is_err());
        let mut sk = two_link();
        sk.joints[0].child = "base".into();
        assert!(sk.validate().is_err());
    }

    #[test]
    fn mass_matrix_is_symmetric_positive_definite() {
        let m = Model::build(&default_skeleton(), &ExoDeviceSpec::none()).unwrap();
        let q = vec![0.1, 0.9, 0.05, 0.3, 0.4, -0.1, -0.2, 0.1, 0.05];
        let mm = m.mass_matrix(&q);
        assert!((&mm - mm.transpose()).abs().max() < 1e-12);
        assert!(mm.clone().cholesky().is_some());
        // translational block carries the total mass
        assert!((mm[(0, 0)] - m.total_mass()).abs() < 1e-12);
        assert!((mm[(1, 1)] - m.total_mass()).abs() < 1e-12);
    }

    #[test]
    fn kinetic_energy_matches_point_velocities() {
        // ½ q̇ᵀ M q̇ against Σ ½ m v² + ½ I ω² from direct differentiation
        let m = Model::build(&default_skeleton(), &ExoDeviceSpec::none()).unwrap();
        let q = vec![0.2, 0.95, 0.1, 0.4, 0.6, 0.1, -0.3, 0.2, -0.2];
        let qd = vec![1.1, -0.2, 0.5, 2.0, -1.5, 0.7, -0.4, 1.2, 3.0];
        let h = 1e-6;
        let pos = |qq: &[f64]| {
            let pose = m.pose(qq, &[0.0; 9]);
            m.segments
                .iter()
                .enumerate()
                .map(|(si, s)| (m.point_world(&pose, si, s.com), pose.angle[si]))
                .collect::<Vec<_>>()
        };
        let qp: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a + h * b).collect();
        let qm: Vec<f64> = q.iter().zip(&qd).map(|(a, b)| a - h * b).collect();
        let (pp, pm) = (pos(&qp), pos(&qm));
        let mut t = 0.0;
        for (i, s) in m.segments.iter().enumerate() {
            let vx = (pp[i].0[0] - pm[i].0[0]) / (2.0 * h);
            let vy = (pp[i].0[1] - pm[i].0[1]) / (2.0 * h);
            let w = (pp[i].1 - pm[i].1) / (2.0 * h);
            t += 0.5 * s.mass * (vx * vx + vy * vy) + 0.5 * s.inertia * w * w;
        }
        let mm = m.mass_matrix(&q);
        let v = DVector::from_column_slice(&qd);
        let t_model = 0.5 * v.dot(&(&mm * &v));
        assert!((t - t_model).abs() / t < 1e-7, "{t} vs {t_model}");
    }

    #[test]
    fn exo_torque_superposes_on_net_moment() {
        let m = Model::build(&default_skeleton(), &ExoDeviceSpec::none()).unwrap();
        let q = vec![0.0, 0.95, 0.0, 0.2, 0.3, 0.0, -0.1, 0.1, 0.0];
        let s = m.state_from(q, vec![0.0; 9]);
        let muscle = [5.0, -3.0, 1.0, 2.0, 0.5, -7.0];
        let a = m.step(&s, &muscle, &[0.0; 6], 0.005).unwrap();
        let b = m.step(&s, &muscle, &[10.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.005).unwrap();
        assert!((b.joint_moments[0] - a.joint_moments[0] - 10.0).abs() < 1e-12);
        for k in 1..6 {
            assert_eq!(a.joint_moments[k], b.joint_moments[k]);
        }
    }

    #[test]
    fn limit_torque_engages_two_degrees_early() {
        let j = Joint {
            name: "j".into(),
            parent: 0,
            child: 1,
            anchor: [0.0; 2],
            sign: 1.0,
            lower: -1.0,
            upper: 1.0,
            stiffness: 100.0,
            damping: 2.0,
        };
        assert_eq!(limit_torque(&j, 1.0 - LIMIT_MARGIN - 1e-9, 1.0).0, 0.0);
        assert!(limit_torque(&j, 1.0 - LIMIT_MARGIN + 1e-3, 0.0).0 < 0.0);
        assert!(limit_torque(&j, -1.0 + LIMIT_MARGIN - 1e-3, 0.0).0 > 0.0);
        assert_eq!(limit_torque(&j, 0.0, 5.0), (0.0, 0.0, 0.0));
    }

    #[test]
    fn diverged_state_is_reported() {
        let m = Model::build(&default_skeleton(), &ExoDeviceSpec::none()).unwrap();
        let s = m.state_from(vec![0.0, 0.95, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], vec![0.0; 9]);
        let r = m.step(&s, &[f64::NAN, 0.0, 0.0, 0.0, 0.0, 0.0], &[0.0; 6], 0.005);
        assert!(matches!(r, Err(DynamicsError::Diverged(_))));
    }
}
