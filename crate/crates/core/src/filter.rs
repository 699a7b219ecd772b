//! Right-invariant EKF on SE_3(3) with IMU biases.
//!
//! Three stages act on a [`FilterState`]:
//! * [`propagate`]: RK4 on the deterministic process for the estimate, Euler on
//!   the Riccati equation for the covariance;
//! * [`update`]: stacked right-invariant observations (surface normal alignment
//!   and leg odometry);
//! * [`jump_propagate`]: support-foot switch, which moves the contact column
//!   and inflates the covariance by the encoder noise.
//!
//! [`run_variant`] drives the three stages from a time-ordered sensor stream.

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{contact_switch_jacobian, contact_switch_offset, JointVector, KinematicModel};
use crate::liegroup::{skew, GroupElement, Mat12, Mat3, Rotation, TangentVector, Vec3};
use crate::state::{block, symmetrize, BiasState, FilterState, Mat18, NoiseConfig};

/// World-frame gravity, z up.
pub const GRAVITY: Vec3 = Vec3::new(0.0, 0.0, -9.81);

/// Largest single propagation step accepted.
pub const MAX_DT: f64 = 0.1;

/// Innovation covariances with a larger condition number are not inverted.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImuSample {
    pub t: f64,
    /// Gyro reading, rad/s.
    pub omega: Vec3,
    /// Accelerometer reading, m/s^2.
    pub accel: Vec3,
}

/// Inputs of the continuous process at one instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputRates {
    pub omega: Vec3,
    pub accel: Vec3,
    /// Measured contact point velocity, m/s.
    pub v_c: Vec3,
}

impl InputRates {
    fn lerp(&self, other: &Self, s: f64) -> Self {
        Self {
            omega: self.omega.lerp(&other.omega, s),
            accel: self.accel.lerp(&other.accel, s),
            v_c: self.v_c.lerp(&other.v_c, s),
        }
    }
}

/// Input over one propagation interval. With `end` set the rates are
/// interpolated linearly across the interval, with `mid` as well
/// quadratically; otherwise they are held.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProcessInput {
    pub imu: ImuSample,
    pub v_c: Vec3,
    pub dt: f64,
    pub end: Option<InputRates>,
    pub mid: Option<InputRates>,
}

impl ProcessInput {
    pub fn held(imu: ImuSample, v_c: Vec3, dt: f64) -> Self {
        Self {
            imu,
            v_c,
            dt,
            end: None,
            mid: None,
        }
    }

    pub fn start(&self) -> InputRates {
        InputRates {
            omega: self.imu.omega,
            accel: self.imu.accel,
            v_c: self.v_c,
        }
    }

    /// Rates at fraction `s` of the interval.
    pub fn at(&self, s: f64) -> InputRates {
        let start = self.start();
        match (&self.mid, &self.end) {
            (Some(mid), Some(end)) => {
                // Lagrange basis on the nodes 0, 1/2, 1
                let (l0, l1, l2) = (
                    (2.0 * s - 1.0) * (s - 1.0),
                    4.0 * s * (1.0 - s),
                    s * (2.0 * s - 1.0),
                );
                InputRates {
                    omega: start.omega * l0 + mid.omega * l1 + end.omega * l2,
                    accel: start.accel * l0 + mid.accel * l1 + end.accel * l2,
                    v_c: start.v_c * l0 + mid.v_c * l1 + end.v_c * l2,
                }
            }
            (_, Some(end)) => start.lerp(end, s),
            _ => start,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt <= MAX_DT) {
            return Err(Error::InvalidInput(format!(
                "propagation step must lie in (0, {MAX_DT}] s, got {}",
                self.dt
            )));
        }
        let finite = |r: &InputRates| {
            r.omega.iter().chain(r.accel.iter()).chain(r.v_c.iter()).all(|x| x.is_finite())
        };
        if !finite(&self.start())
            || !self.end.as_ref().is_none_or(finite)
            || !self.mid.as_ref().is_none_or(finite)
        {
            return Err(Error::InvalidInput("non-finite process input".into()));
        }
        Ok(())
    }
}

/// Time derivative of an SE_3(3) element in the 6x6 embedding.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupDerivative {
    pub rotation: Mat3,
    pub velocity: Vec3,
    pub position: Vec3,
    pub contact: Vec3,
}

impl GroupDerivative {
    /// 6x6 matrix with a zero bottom row block.
    pub fn to_matrix(&self) -> nalgebra::Matrix6<f64> {
        let mut m = nalgebra::Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.velocity);
        m.fixed_view_mut::<3, 1>(0, 4).copy_from(&self.position);
        m.fixed_view_mut::<3, 1>(0, 5).copy_from(&self.contact);
        m
    }
}

fn advance(x: &GroupElement, k: &GroupDerivative, h: f64) -> GroupElement {
    GroupElement::new(
        x.rotation + k.rotation * h,
        x.velocity + k.velocity * h,
        x.position + k.position * h,
        x.contact + k.contact * h,
    )
}

/// Deterministic process `f_u(X, theta)`; biases are constant.
pub fn process_derivative(x: &GroupElement, bias: &BiasState, u: &InputRates) -> GroupDerivative {
    GroupDerivative {
        rotation: x.rotation * skew(&(u.omega - bias.gyro)),
        velocity: x.rotation * (u.accel - bias.accel) + GRAVITY,
        position: x.velocity,
        contact: u.v_c,
    }
}

/// One classical RK4 step of the deterministic process.
pub fn integrate_rk4(x: &GroupElement, bias: &BiasState, input: &ProcessInput) -> GroupElement {
    let h = input.dt;
    let (u0, u_mid, u1) = (input.at(0.0), input.at(0.5), input.at(1.0));
    let k1 = process_derivative(x, bias, &u0);
    let k2 = process_derivative(&advance(x, &k1, 0.5 * h), bias, &u_mid);
    let k3 = process_derivative(&advance(x, &k2, 0.5 * h), bias, &u_mid);
    let k4 = process_derivative(&advance(x, &k3, h), bias, &u1);
    let sum = GroupDerivative {
        rotation: k1.rotation + (k2.rotation + k3.rotation) * 2.0 + k4.rotation,
        velocity: k1.velocity + (k2.velocity + k3.velocity) * 2.0 + k4.velocity,
        position: k1.position + (k2.position + k3.position) * 2.0 + k4.position,
        contact: k1.contact + (k2.contact + k3.contact) * 2.0 + k4.contact,
    };
    advance(x, &sum, h / 6.0).renormalized()
}

/// Linearized error dynamics `A` for `(xi, zeta)` at the estimate.
pub fn error_jacobian(x: &GroupElement, v_c: &Vec3) -> Mat18 {
    let r = x.rotation;
    let mut a = Mat18::zeros();
    let mut put = |row: usize, col: usize, m: Mat3| a.fixed_view_mut::<3, 3>(row, col).copy_from(&m);
    put(block::VEL, block::ROT, skew(&GRAVITY));
    put(block::POS, block::VEL, Mat3::identity());
    put(block::CONTACT, block::ROT, skew(v_c));
    put(block::ROT, block::BIAS_GYRO, -r);
    put(block::VEL, block::BIAS_GYRO, -skew(&x.velocity) * r);
    put(block::VEL, block::BIAS_ACCEL, -r);
    put(block::POS, block::BIAS_GYRO, -skew(&x.position) * r);
    put(block::CONTACT, block::BIAS_GYRO, -skew(&x.contact) * r);
    a
}

/// Upper-left 12x12 block of [`error_jacobian`]: the dynamics without biases.
/// It does not depend on the state.
pub fn error_jacobian_no_bias(v_c: &Vec3) -> Mat12 {
    error_jacobian(&GroupElement::identity(), v_c)
        .fixed_view::<12, 12>(0, 0)
        .into_owned()
}

fn noise_map(x: &GroupElement) -> Mat18 {
    let mut g = Mat18::identity();
    g.fixed_view_mut::<12, 12>(0, 0).copy_from(&x.adjoint());
    g
}

/// `Q_bar = G Cov(w) G^T` with `G = blkdiag(Ad_X, I6)`.
pub fn process_noise(x: &GroupElement, noise: &NoiseConfig) -> Mat18 {
    let g = noise_map(x);
    g * noise.process_covariance() * g.transpose()
}

/// `expm(A dt)` truncated after the cubic term.
fn transition(a: &Mat18, dt: f64) -> Mat18 {
    let ad = a * dt;
    let ad2 = ad * ad;
    Mat18::identity() + ad + ad2 * 0.5 + ad2 * ad / 6.0
}

/// Continuous-phase propagation over `input.dt`. The covariance step is the
/// discrete form `Phi P Phi^T + Q dt` of the Riccati equation, which stays
/// positive definite where a plain Euler step may not.
pub fn propagate(state: &FilterState, input: &ProcessInput, noise: &NoiseConfig) -> Result<FilterState> {
    input.validate()?;
    let dt = input.dt;
    let a = error_jacobian(&state.x, &input.v_c);
    let q = process_noise(&state.x, noise);
    let phi = transition(&a, dt);
    let mut cov = phi * state.cov * phi.transpose() + q * dt;
    symmetrize(&mut cov);
    Ok(FilterState {
        x: integrate_rk4(&state.x, &state.bias, input),
        bias: state.bias,
        cov,
        t: state.t + dt,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationKind {
    Orientation,
    Position,
}

/// Right-invariant observation `Y = X^-1 d + V`, with `Y` and `d` split into a
/// 3-vector head and a 3-vector tail acting on the translation columns.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub kind: ObservationKind,
    pub y: Vec3,
    pub y_tail: Vec3,
    pub d: Vec3,
    pub d_tail: Vec3,
    /// Noise already expressed in the world frame.
    pub noise_world: Mat3,
    /// Noise expressed in the base frame; rotated by the estimate at update time.
    pub noise_body: Mat3,
}

impl Observation {
    /// Top three rows of `X Y - d`.
    pub fn innovation(&self, x: &GroupElement) -> Vec3 {
        x.act(&self.y, &self.y_tail) - self.d
    }

    /// Reduced 3x12 observation matrix satisfying `H xi = -(xi^ d)` (top rows).
    pub fn jacobian(&self) -> SMatrix<f64, 3, 12> {
        let mut h = SMatrix::<f64, 3, 12>::zeros();
        h.fixed_view_mut::<3, 3>(0, 0).copy_from(&skew(&self.d));
        for i in 0..3 {
            h.fixed_view_mut::<3, 3>(0, 3 + 3 * i)
                .copy_from(&(-Mat3::identity() * self.d_tail[i]));
        }
        h
    }

    /// Effective innovation noise `N_bar` at the estimated rotation.
    pub fn noise(&self, rotation: &Rotation) -> Mat3 {
        self.noise_world + rotation * self.noise_body * rotation.transpose()
    }
}

fn encoder_covariance(jacobian: &DMatrix<f64>, sd: f64) -> Mat3 {
    let c = jacobian * jacobian.transpose() * (sd * sd);
    Mat3::from_fn(|i, j| c[(i, j)])
}

/// Support-foot normal aligned with the surface normal.
pub fn orientation_observation(
    joints: &JointVector,
    drs_rotation: &Rotation,
    model: &dyn KinematicModel,
    noise: &NoiseConfig,
) -> Observation {
    let d: Vec3 = drs_rotation.column(2).into_owned();
    let s = skew(&d);
    Observation {
        kind: ObservationKind::Orientation,
        y: model.foot_normal(joints),
        y_tail: Vec3::zeros(),
        d,
        d_tail: Vec3::zeros(),
        noise_world: s * s.transpose() * noise.drs_orientation.powi(2),
        noise_body: encoder_covariance(&model.normal_jacobian(joints), noise.encoder),
    }
}

/// Leg odometry: `R^T (p_c - p) = h_p(q)`.
pub fn position_observation(
    joints: &JointVector,
    model: &dyn KinematicModel,
    noise: &NoiseConfig,
) -> Observation {
    let tail = Vec3::new(0.0, 1.0, -1.0);
    Observation {
        kind: ObservationKind::Position,
        y: model.foot_position(joints),
        y_tail: tail,
        d: Vec3::zeros(),
        d_tail: tail,
        noise_world: Mat3::zeros(),
        noise_body: encoder_covariance(&model.position_jacobian(joints), noise.encoder),
    }
}

/// 2x3 matrix whose rows are an orthonormal basis of the plane orthogonal to `d`.
fn normal_plane_basis(d: &Vec3) -> DMatrix<f64> {
    let n = d.try_normalize(1e-12).unwrap_or_else(Vec3::z);
    let helper = if n.x.abs() < 0.9 { Vec3::x() } else { Vec3::y() };
    let u = n.cross(&helper).normalize();
    let w = n.cross(&u);
    DMatrix::from_row_slice(2, 3, &[u.x, u.y, u.z, w.x, w.y, w.z])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum UpdateStatus {
    Applied,
    /// Innovation covariance too ill-conditioned; state left untouched.
    Skipped { condition: f64 },
}

/// Stacked right-invariant update. `observations` must be non-empty.
pub fn update(state: &mut FilterState, observations: &[Observation]) -> Result<UpdateStatus> {
    if observations.is_empty() {
        return Err(Error::InvalidInput("update needs at least one observation".into()));
    }
    // The orientation residual has no component along the surface normal, so
    // those rows are projected onto the plane orthogonal to it.
    let projections: Vec<DMatrix<f64>> = observations
        .iter()
        .map(|o| match o.kind {
            ObservationKind::Orientation => normal_plane_basis(&o.d),
            ObservationKind::Position => DMatrix::identity(3, 3),
        })
        .collect();
    let rows: usize = projections.iter().map(|b| b.nrows()).sum();
    let mut h = DMatrix::<f64>::zeros(rows, 18);
    let mut z = DVector::<f64>::zeros(rows);
    let mut n = DMatrix::<f64>::zeros(rows, rows);
    let mut r0 = 0;
    for (obs, b) in observations.iter().zip(&projections) {
        let k = b.nrows();
        let hj = DMatrix::from_column_slice(3, 12, obs.jacobian().as_slice());
        let zj = DVector::from_column_slice(obs.innovation(&state.x).as_slice());
        let nj = DMatrix::from_column_slice(3, 3, obs.noise(&state.x.rotation).as_slice());
        h.view_mut((r0, 0), (k, 12)).copy_from(&(b * hj));
        z.rows_mut(r0, k).copy_from(&(b * zj));
        n.view_mut((r0, r0), (k, k)).copy_from(&(b * nj * b.transpose()));
        r0 += k;
    }
    let p = DMatrix::from_column_slice(18, 18, state.cov.as_slice());
    let pht = &p * h.transpose();
    let s = &h * &pht + &n;
    let s = (&s + s.transpose()) * 0.5;

    let sv = s.clone().singular_values();
    let condition = sv.max() / sv.min();
    if !(condition.is_finite() && condition <= MAX_CONDITION) {
        log::warn!("update at t = {} s skipped, cond(S) = {condition:e}", state.t);
        return Ok(UpdateStatus::Skipped { condition });
    }
    let Some(chol) = s.clone().cholesky() else {
        log::warn!("update at t = {} s skipped, S not positive definite", state.t);
        return Ok(UpdateStatus::Skipped { condition });
    };
    // L = P H^T S^-1
    let gain = chol.solve(&pht.transpose()).transpose();
    let delta = &gain * z;
    let xi = TangentVector::from_iterator(delta.rows(0, 12).iter().copied());
    state.x = (GroupElement::exp(&xi) * state.x).renormalized();
    let bias = state.bias.to_vector() + delta.fixed_rows::<6>(12);
    state.bias = BiasState::from_vector(&bias);

    // Joseph form; equal to (I - L H) P for this gain but keeps P positive definite.
    let ikh = DMatrix::<f64>::identity(18, 18) - &gain * &h;
    let updated = &ikh * p * ikh.transpose() + &gain * n * gain.transpose();
    state.cov = Mat18::from_fn(|i, j| updated[(i, j)]);
    symmetrize(&mut state.cov);
    Ok(UpdateStatus::Applied)
}

/// Foot-landing jump. `stacked` holds `(q_old, q_new)` for the old and new
/// support legs at the landing instant.
pub fn jump_propagate(
    state: &mut FilterState,
    stacked: &JointVector,
    model: &dyn KinematicModel,
    noise: &NoiseConfig,
) -> Result<()> {
    let m = model.dof();
    if stacked.len() != 2 * m {
        return Err(Error::InvalidInput(format!(
            "landing joints need {} entries (old and new leg), got {}",
            2 * m,
            stacked.len()
        )));
    }
    let q_old = stacked.rows(0, m).into_owned();
    let q_new = stacked.rows(m, m).into_owned();
    jump_propagate_legs(state, &q_old, &q_new, model, noise);
    Ok(())
}

/// [`jump_propagate`] with the two legs passed separately.
pub fn jump_propagate_legs(
    state: &mut FilterState,
    q_old: &JointVector,
    q_new: &JointVector,
    model: &dyn KinematicModel,
    noise: &NoiseConfig,
) {
    let h_c = contact_switch_offset(model, q_old, q_new);
    let jac = contact_switch_jacobian(model, q_old, q_new);
    let mut cov_w = Mat12::zeros();
    cov_w
        .fixed_view_mut::<3, 3>(block::CONTACT, block::CONTACT)
        .copy_from(&encoder_covariance(&jac, noise.encoder));

    let ad = state.x.adjoint();
    let q = ad * cov_w * ad.transpose();
    let mut top = state.cov.fixed_view_mut::<12, 12>(0, 0);
    top += q;
    symmetrize(&mut state.cov);
    state.x.contact += state.x.rotation * h_c;
}

/// Deterministic jump map `X -> X Delta` with `h_c` in the contact column.
pub fn jump_map(x: &GroupElement, h_c: &Vec3) -> GroupElement {
    x.compose(&GroupElement::new(
        Matrix3::identity(),
        Vec3::zeros(),
        Vec3::zeros(),
        *h_c,
    ))
}

/// InEKF-DRS uses the measured contact velocity and both observations;
/// InEKF-SRS assumes a static contact point and uses leg odometry only.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterVariant {
    Drs,
    Srs,
}

impl std::str::FromStr for FilterVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "drs" => Ok(FilterVariant::Drs),
            "srs" => Ok(FilterVariant::Srs),
            other => Err(Error::InvalidInput(format!("unknown variant `{other}`, expected drs or srs"))),
        }
    }
}

impl std::fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterVariant::Drs => "drs",
            FilterVariant::Srs => "srs",
        })
    }
}

/// IMU reading paired with the measured contact velocity at the same instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ImuInput {
    pub imu: ImuSample,
    pub v_c: Vec3,
}


/// Encoder reading with the reported surface orientation, when available.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub t: f64,
    pub joints: JointVector,
    pub drs_rotation: Option<Rotation>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContactSwitch {
    pub t: f64,
    pub old_leg: JointVector,
    pub new_leg: JointVector,
}

/// Time-ordered sensor stream consumed by [`run_variant`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorStream {
    pub imu: Vec<ImuInput>,
    pub measurements: Vec<Measurement>,
    pub switches: Vec<ContactSwitch>,
}

impl SensorStream {
    pub fn validate(&self) -> Result<()> {
        fn ordered(times: impl Iterator<Item = f64>) -> Result<()> {
            let mut prev = f64::NEG_INFINITY;
            for t in times {
                if !t.is_finite() || t < prev {
                    return Err(Error::OutOfOrder { prev, next: t });
                }
                prev = t;
            }
            Ok(())
        }
        ordered(self.imu.iter().map(|s| s.imu.t))?;
        ordered(self.measurements.iter().map(|m| m.t))?;
        ordered(self.switches.iter().map(|s| s.t))?;
        if self.imu.windows(2).any(|w| w[1].imu.t == w[0].imu.t) {
            return Err(Error::InvalidInput("duplicate IMU timestamps".into()));
        }
        Ok(())
    }

    /// Median IMU period.
    pub fn nominal_imu_period(&self) -> Option<f64> {
        let mut d: Vec<f64> = self.imu.windows(2).map(|w| w[1].imu.t - w[0].imu.t).collect();
        if d.is_empty() {
            return None;
        }
        d.sort_by(f64::total_cmp);
        Some(d[d.len() / 2])
    }
}

/// Filter configuration shared by all stages of a run.
pub struct FilterSetup<'a> {
    pub model: &'a dyn KinematicModel,
    pub noise: NoiseConfig,
    pub variant: FilterVariant,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Event {
    Measurement(usize),
    Switch(usize),
}

/// Lagrange interpolation through `(t_i, y_i)` evaluated at `t`.
fn lagrange(nodes: &[(f64, Vec3)], t: f64) -> Vec3 {
    let mut out = Vec3::zeros();
    for (i, (ti, yi)) in nodes.iter().enumerate() {
        let mut w = 1.0;
        for (j, (tj, _)) in nodes.iter().enumerate() {
            if i != j {
                w *= (t - tj) / (ti - tj);
            }
        }
        out += yi * w;
    }
    out
}

/// Continuous input reconstruction from the IMU stream: cubic through the
/// four samples around each interval. The contact velocity only uses samples
/// from the same support phase, so it is extrapolated up to a switch instead
/// of blending the old and new contact points.
struct InputInterpolator<'a> {
    imu: &'a [ImuInput],
    /// Support phase of each IMU sample.
    phase: Vec<usize>,
    switch_times: Vec<f64>,
    zero_contact: bool,
}

impl<'a> InputInterpolator<'a> {
    fn new(imu: &'a [ImuInput], switches: &[ContactSwitch], zero_contact: bool) -> Self {
        let switch_times: Vec<f64> = switches.iter().map(|s| s.t).collect();
        let phase = imu
            .iter()
            .map(|s| switch_times.partition_point(|&ts| ts <= s.imu.t))
            .collect();
        Self {
            imu,
            phase,
            switch_times,
            zero_contact,
        }
    }

    /// Rates at `t`, interpolated within the interval starting at sample `k`,
    /// for a point in support phase `phase`.
    fn at(&self, k: usize, t: f64, phase: usize) -> InputRates {
        let lo = k.saturating_sub(1);
        let hi = (k + 2).min(self.imu.len() - 1);
        let window = lo..=hi;
        let pick = |f: &dyn Fn(&ImuInput) -> Vec3, same_phase: bool| -> Vec3 {
            let nodes: Vec<(f64, Vec3)> = window
                .clone()
                .filter(|&i| !same_phase || self.phase[i] == phase)
                .map(|i| (self.imu[i].imu.t, f(&self.imu[i])))
                .collect();
            match nodes.len() {
                0 => f(&self.imu[k]),
                1 => nodes[0].1,
                _ => lagrange(&nodes, t),
            }
        };
        InputRates {
            omega: pick(&|s| s.imu.omega, false),
            accel: pick(&|s| s.imu.accel, false),
            v_c: if self.zero_contact {
                Vec3::zeros()
            } else {
                pick(&|s| s.v_c, true)
            },
        }
    }

    fn phase_at(&self, t: f64) -> usize {
        self.switch_times.partition_point(|&ts| ts <= t)
    }
}

/// Deterministic integration of the IMU and contact-velocity stream from
/// `x0` at the first sample; returns the state at every IMU sample.
pub fn dead_reckon(x0: &GroupElement, bias: &BiasState, stream: &SensorStream) -> Vec<GroupElement> {
    let imu = &stream.imu;
    let inputs = InputInterpolator::new(imu, &stream.switches, false);
    let mut out = Vec::with_capacity(imu.len());
    let mut x = *x0;
    out.push(x);
    for k in 0..imu.len().saturating_sub(1) {
        let (t0, t1) = (imu[k].imu.t, imu[k + 1].imu.t);
        let dt = t1 - t0;
        let phase = inputs.phase_at(t0);
        let start = inputs.at(k, t0, phase);
        let input = ProcessInput {
            imu: ImuSample {
                t: t0,
                omega: start.omega,
                accel: start.accel,
            },
            v_c: start.v_c,
            dt,
            mid: Some(inputs.at(k, t0 + 0.5 * dt, phase)),
            end: Some(inputs.at(k, t1, phase)),
        };
        x = integrate_rk4(&x, bias, &input);
        out.push(x);
    }
    out
}

/// Runs a filter over `stream` from `initial`. Returns the state after each
/// measurement update, in time order.
///
/// Propagation steps end at every IMU sample, measurement and contact switch.
/// Inputs between IMU samples come from a cubic interpolant; see
/// [`InputInterpolator`].
pub fn run_variant(
    initial: &FilterState,
    stream: &SensorStream,
    setup: &FilterSetup<'_>,
) -> Result<Vec<FilterState>> {
    stream.validate()?;
    let imu = &stream.imu;
    if imu.is_empty() {
        return Err(Error::InvalidInput("sensor stream has no IMU samples".into()));
    }
    let nominal = stream.nominal_imu_period().unwrap_or(MAX_DT);
    for w in imu.windows(2) {
        if w[1].imu.t - w[0].imu.t > 5.0 * nominal {
            log::warn!(
                "IMU gap of {:.3} s at t = {:.3} s",
                w[1].imu.t - w[0].imu.t,
                w[0].imu.t
            );
        }
    }

    let mut events: Vec<(f64, Event)> = stream
        .measurements
        .iter()
        .enumerate()
        .map(|(i, m)| (m.t, Event::Measurement(i)))
        .chain(
            stream
                .switches
                .iter()
                .enumerate()
                .map(|(i, s)| (s.t, Event::Switch(i))),
        )
        .filter(|(t, _)| *t >= initial.t)
        .collect();
    // stable: a switch and a measurement at the same time keep the switch second
    events.sort_by(|a, b| a.0.total_cmp(&b.0));

    let inputs = InputInterpolator::new(imu, &stream.switches, setup.variant == FilterVariant::Srs);
    let mut state = initial.clone();
    let mut out = Vec::with_capacity(stream.measurements.len());
    // index of the last IMU sample at or before state.t
    let mut k = imu.partition_point(|s| s.imu.t <= state.t).saturating_sub(1);

    let advance_to = |state: &mut FilterState, target: f64, k: &mut usize| -> Result<()> {
        while state.t < target - 1e-12 {
            while *k + 1 < imu.len() && imu[*k + 1].imu.t <= state.t + 1e-12 {
                *k += 1;
            }
            let seg_end = match imu.get(*k + 1) {
                Some(n) if n.imu.t < target => n.imu.t,
                _ => target,
            };
            let dt = (seg_end - state.t).min(MAX_DT);
            let t0 = state.t;
            let phase = inputs.phase_at(t0);
            let start = inputs.at(*k, t0, phase);
            let input = ProcessInput {
                imu: ImuSample {
                    t: t0,
                    omega: start.omega,
                    accel: start.accel,
                },
                v_c: start.v_c,
                dt,
                mid: Some(inputs.at(*k, t0 + 0.5 * dt, phase)),
                end: Some(inputs.at(*k, t0 + dt, phase)),
            };
            *state = propagate(state, &input, &setup.noise)?;
            if !state.is_finite() {
                return Err(Error::Numerical(format!("non-finite state at t = {} s", state.t)));
            }
        }
        state.t = state.t.max(target);
        Ok(())
    };

    for (t, event) in events {
        advance_to(&mut state, t, &mut k)?;
        match event {
            Event::Switch(i) => {
                let s = &stream.switches[i];
                jump_propagate_legs(&mut state, &s.old_leg, &s.new_leg, setup.model, &setup.noise);
            }
            Event::Measurement(i) => {
                let m = &stream.measurements[i];
                let mut obs = Vec::with_capacity(2);
                if let (FilterVariant::Drs, Some(r)) = (setup.variant, m.drs_rotation.as_ref()) {
                    obs.push(orientation_observation(&m.joints, r, setup.model, &setup.noise));
                }
                obs.push(position_observation(&m.joints, setup.model, &setup.noise));
                update(&mut state, &obs)?;
                if !state.is_finite() {
                    return Err(Error::Numerical(format!("non-finite state at t = {} s", state.t)));
                }
                out.push(state.clone());
            }
        }
    }
    Ok(out)
}
