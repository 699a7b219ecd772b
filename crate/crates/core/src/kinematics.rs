//! Leg forward kinematics: foot position `h_p`, foot orientation `h_R` and the
//! contact switch offset `h_c`, all expressed in the base frame.

use nalgebra::{DMatrix, DVector};

use crate::liegroup::{rot_x, rot_y, skew, so3_exp, so3_right_jacobian, Mat3, Rotation, Vec3};

/// Joint angles. Length depends on the model.
pub type JointVector = DVector<f64>;

/// Forward kinematics of one leg, base frame to support foot.
pub trait KinematicModel: Send + Sync {
    /// Number of joints.
    fn dof(&self) -> usize;
    /// `h_p(q)`: foot position relative to the base.
    fn foot_position(&self, q: &JointVector) -> Vec3;
    /// `h_R(q)`: foot orientation relative to the base.
    fn foot_rotation(&self, q: &JointVector) -> Rotation;
    /// `d h_p / d q`, 3 x dof.
    fn position_jacobian(&self, q: &JointVector) -> DMatrix<f64>;
    /// Jacobian of the third column of `h_R`, 3 x dof.
    fn normal_jacobian(&self, q: &JointVector) -> DMatrix<f64>;

    /// Foot normal `h_R(q) e3`.
    fn foot_normal(&self, q: &JointVector) -> Vec3 {
        self.foot_rotation(q).column(2).into_owned()
    }
}

fn check_dof(model: &dyn KinematicModel, q: &JointVector) {
    assert_eq!(
        q.len(),
        model.dof(),
        "joint vector has {} entries, model expects {}",
        q.len(),
        model.dof()
    );
}

/// `h_c`: displacement from the old support foot to the new one, base frame.
pub fn contact_switch_offset(
    model: &dyn KinematicModel,
    q_old: &JointVector,
    q_new: &JointVector,
) -> Vec3 {
    model.foot_position(q_new) - model.foot_position(q_old)
}

/// Jacobian of [`contact_switch_offset`] w.r.t. the stacked `(q_old, q_new)`.
pub fn contact_switch_jacobian(
    model: &dyn KinematicModel,
    q_old: &JointVector,
    q_new: &JointVector,
) -> DMatrix<f64> {
    let m = model.dof();
    let mut j = DMatrix::zeros(3, 2 * m);
    j.view_mut((0, 0), (3, m))
        .copy_from(&(-model.position_jacobian(q_old)));
    j.view_mut((0, m), (3, m))
        .copy_from(&model.position_jacobian(q_new));
    j
}

/// Six-joint stand-in leg whose joints are the exponential coordinates of the
/// base-to-foot transform: `q = (position, rotation vector)`.
#[derive(Clone, Copy, Debug, Default)]
pub struct VirtualLeg;

impl VirtualLeg {
    pub const DOF: usize = 6;

    /// Inverse kinematics; exact by construction.
    pub fn joints_for(position: &Vec3, rotation: &Rotation) -> JointVector {
        let phi = crate::liegroup::so3_log(rotation);
        JointVector::from_iterator(6, position.iter().chain(phi.iter()).copied())
    }

    fn rotation_vector(q: &JointVector) -> Vec3 {
        Vec3::new(q[3], q[4], q[5])
    }
}

impl KinematicModel for VirtualLeg {
    fn dof(&self) -> usize {
        Self::DOF
    }

    fn foot_position(&self, q: &JointVector) -> Vec3 {
        check_dof(self, q);
        Vec3::new(q[0], q[1], q[2])
    }

    fn foot_rotation(&self, q: &JointVector) -> Rotation {
        check_dof(self, q);
        so3_exp(&Self::rotation_vector(q))
    }

    fn position_jacobian(&self, q: &JointVector) -> DMatrix<f64> {
        check_dof(self, q);
        let mut j = DMatrix::zeros(3, 6);
        j.view_mut((0, 0), (3, 3)).fill_with_identity();
        j
    }

    fn normal_jacobian(&self, q: &JointVector) -> DMatrix<f64> {
        check_dof(self, q);
        // exp(phi + d) e3 ~ exp(phi) (I + [J_r d]x) e3 = exp(phi) e3 - exp(phi) [e3]x J_r d
        let phi = Self::rotation_vector(q);
        let block = -so3_exp(&phi) * skew(&Vec3::z()) * so3_right_jacobian(&phi);
        let mut j = DMatrix::zeros(3, 6);
        j.view_mut((0, 3), (3, 3)).copy_from(&block);
        j
    }
}

/// Three revolute joints (hip roll about x, hip pitch about y, knee pitch
/// about y) with links hanging along -z.
#[derive(Clone, Copy, Debug)]
pub struct SerialChain {
    pub lengths: [f64; 3],
}

impl Default for SerialChain {
    fn default() -> Self {
        Self {
            lengths: [0.1, 0.4, 0.4],
        }
    }
}

struct ChainFrames {
    origins: [Vec3; 3],
    axes: [Vec3; 3],
    foot: Vec3,
    rotation: Rotation,
}

impl SerialChain {
    pub fn new(lengths: [f64; 3]) -> Self {
        Self { lengths }
    }

    fn frames(&self, q: &JointVector) -> ChainFrames {
        check_dof(self, q);
        let joint_rot = [rot_x(q[0]), rot_y(q[1]), rot_y(q[2])];
        let local_axes = [Vec3::x(), Vec3::y(), Vec3::y()];
        let mut r = Mat3::identity();
        let mut o = Vec3::zeros();
        let mut origins = [Vec3::zeros(); 3];
        let mut axes = [Vec3::zeros(); 3];
        for i in 0..3 {
            origins[i] = o;
            axes[i] = r * local_axes[i];
            r *= joint_rot[i];
            o += r * Vec3::new(0.0, 0.0, -self.lengths[i]);
        }
        ChainFrames {
            origins,
            axes,
            foot: o,
            rotation: r,
        }
    }
}

impl KinematicModel for SerialChain {
    fn dof(&self) -> usize {
        3
    }

    fn foot_position(&self, q: &JointVector) -> Vec3 {
        self.frames(q).foot
    }

    fn foot_rotation(&self, q: &JointVector) -> Rotation {
        self.frames(q).rotation
    }

    fn position_jacobian(&self, q: &JointVector) -> DMatrix<f64> {
        let f = self.frames(q);
        let mut j = DMatrix::zeros(3, 3);
        for i in 0..3 {
            j.set_column(i, &f.axes[i].cross(&(f.foot - f.origins[i])));
        }
        j
    }

    fn normal_jacobian(&self, q: &JointVector) -> DMatrix<f64> {
        let f = self.frames(q);
        let n: Vec3 = f.rotation.column(2).into_owned();
        let mut j = DMatrix::zeros(3, 3);
        for i in 0..3 {
            j.set_column(i, &f.axes[i].cross(&n));
        }
        j
    }
}
