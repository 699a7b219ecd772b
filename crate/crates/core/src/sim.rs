//! Synthetic walking and standing scenarios on a pitching treadmill.
//!
//! The base trajectory is an analytic sway expressed in the surface frame, so
//! the true IMU readings follow by differentiation. Feet are flat on the
//! surface and fixed in the surface frame while in stance; stepping switches
//! support instantaneously at a fixed period.

use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::drs::{PitchProfile, PitchTable, Treadmill};
use crate::error::{Error, Result};
use crate::filter::{ContactSwitch, ImuInput, ImuSample, Measurement, SensorStream, GRAVITY};
use crate::keyvalue::KeyValues;
use crate::kinematics::{JointVector, VirtualLeg};
use crate::liegroup::{
    quaternion_to_rotation, rot_x, rot_y, rot_z, rotation_to_quaternion, so3_exp, GroupElement, Rotation, Vec3,
};
use crate::state::{BiasState, NoiseConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RobotMotion {
    /// RM1
    Stepping,
    /// RM2
    Standing,
}

impl std::str::FromStr for RobotMotion {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stepping" | "rm1" => Ok(RobotMotion::Stepping),
            "standing" | "rm2" => Ok(RobotMotion::Standing),
            other => Err(Error::config("motion", format!("unknown motion `{other}`"))),
        }
    }
}

/// Gait geometry. Distances in the surface frame, m.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gait {
    pub step_period: f64,
    /// Forward advance of each new contact.
    pub stride: f64,
    /// Distance of the stance midline from the pitch axis.
    pub distance: f64,
    /// Half the lateral spacing of the feet.
    pub half_width: f64,
    pub base_height: f64,
}

impl Default for Gait {
    fn default() -> Self {
        Self {
            step_period: 0.8,
            stride: 0.05,
            distance: 0.8,
            half_width: 0.1,
            base_height: 0.9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    /// True surface motion.
    pub profile: PitchProfile,
    /// Surface motion reported to the filter; `None` means the true one.
    pub filter_profile: Option<PitchProfile>,
    pub motion: RobotMotion,
    pub duration: f64,
    pub imu_rate: f64,
    pub measurement_rate: f64,
    pub gait: Gait,
    pub noise: NoiseConfig,
    pub seed: u64,
    /// Draw constant true biases from the bias-walk SDs; zero otherwise.
    pub biases: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::case('A').expect("preset")
    }
}

const CONFIG_KEYS: [&str; 13] = [
    "case",
    "profile",
    "filter_profile",
    "motion",
    "duration",
    "imu_rate",
    "measurement_rate",
    "step_period",
    "stride",
    "seed",
    "lead_in",
    "biases",
    "name",
];

/// Horizontal lead-in of the Case C trapezoid, s.
pub const CASE_C_LEAD_IN: f64 = 10.0;

impl ScenarioConfig {
    /// Presets: A = stepping on TM1, B = stepping on TM2, C = standing on TM1
    /// after a horizontal lead-in, D = stepping on TM1 with TM3 reported.
    pub fn case(case: char) -> Result<Self> {
        let base = |name: &str, profile, motion| ScenarioConfig {
            name: name.to_string(),
            profile,
            filter_profile: None,
            motion,
            duration: 30.0,
            imu_rate: 200.0,
            measurement_rate: 15.0,
            gait: Gait::default(),
            noise: NoiseConfig::default(),
            seed: 1,
            biases: true,
        };
        Ok(match case.to_ascii_uppercase() {
            'A' => base("case_a", PitchProfile::tm1(), RobotMotion::Stepping),
            'B' => base("case_b", PitchProfile::tm2(), RobotMotion::Stepping),
            'C' => base(
                "case_c",
                PitchProfile::tm1().with_lead_in(CASE_C_LEAD_IN),
                RobotMotion::Standing,
            ),
            'D' => ScenarioConfig {
                filter_profile: Some(PitchProfile::tm3()),
                ..base("case_d", PitchProfile::tm1(), RobotMotion::Stepping)
            },
            other => return Err(Error::config("case", format!("unknown case `{other}`, expected A-D"))),
        })
    }

    pub fn reported_profile(&self) -> &PitchProfile {
        self.filter_profile.as_ref().unwrap_or(&self.profile)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::config(key, format!("must be positive, got {v}")))
            }
        };
        positive("duration", self.duration)?;
        positive("imu_rate", self.imu_rate)?;
        positive("measurement_rate", self.measurement_rate)?;
        positive("step_period", self.gait.step_period)?;
        if self.measurement_rate > self.imu_rate {
            return Err(Error::config(
                "measurement_rate",
                format!(
                    "{} Hz exceeds the IMU rate of {} Hz",
                    self.measurement_rate, self.imu_rate
                ),
            ));
        }
        if self.gait.step_period * self.measurement_rate < 2.0 {
            return Err(Error::config("step_period", "shorter than two measurement periods"));
        }
        self.profile.validate()?;
        if let Some(p) = &self.filter_profile {
            p.validate()?;
        }
        self.noise.validate()
    }

    /// Parses a `key = value` scenario file. `case` selects the preset the
    /// other keys override; noise keys are those of [`NoiseConfig::parse`].
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        let allowed: Vec<&str> = CONFIG_KEYS.iter().chain(NoiseConfig::KEYS.iter()).copied().collect();
        kv.reject_unknown(&allowed)?;
        let mut cfg = match kv.get("case") {
            Some(c) if c.len() == 1 => Self::case(c.chars().next().unwrap_or('?'))?,
            Some(c) => return Err(Error::config("case", format!("unknown case `{c}`, expected A-D"))),
            None => Self::case('A')?,
        };
        if let Some(name) = kv.get("name") {
            cfg.name = name.to_string();
        }
        if let Some(p) = kv.get("profile") {
            cfg.profile = parse_profile("profile", p)?;
        }
        if let Some(p) = kv.get("filter_profile") {
            cfg.filter_profile = match p {
                "same" | "none" => None,
                _ => Some(parse_profile("filter_profile", p)?),
            };
        }
        if let Some(m) = kv.get("motion") {
            cfg.motion = m.parse()?;
        }
        if let Some(lead) = kv.f64("lead_in")? {
            if lead < 0.0 {
                return Err(Error::config("lead_in", "must be >= 0"));
            }
            cfg.profile = cfg.profile.with_lead_in(lead);
            cfg.filter_profile = cfg.filter_profile.map(|p| p.with_lead_in(lead));
        }
        let set = |key: &str, slot: &mut f64| -> Result<()> {
            if let Some(v) = kv.f64(key)? {
                *slot = v;
            }
            Ok(())
        };
        set("duration", &mut cfg.duration)?;
        set("imu_rate", &mut cfg.imu_rate)?;
        set("measurement_rate", &mut cfg.measurement_rate)?;
        set("step_period", &mut cfg.gait.step_period)?;
        set("stride", &mut cfg.gait.stride)?;
        if let Some(seed) = kv.u64("seed")? {
            cfg.seed = seed;
        }
        if let Some(b) = kv.get("biases") {
            cfg.biases = match b {
                "true" | "on" | "1" => true,
                "false" | "off" | "0" => false,
                other => return Err(Error::config("biases", format!("`{other}` is not a boolean"))),
            };
        }
        cfg.noise.apply(&kv)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

fn parse_profile(key: &str, value: &str) -> Result<PitchProfile> {
    let (kind, arg) = match value.split_once(':') {
        Some((k, a)) => (k.trim(), Some(a.trim())),
        None => (value.trim(), None),
    };
    match (kind.to_ascii_lowercase().as_str(), arg) {
        ("tm1", None) => Ok(PitchProfile::tm1()),
        ("tm2", None) => Ok(PitchProfile::tm2()),
        ("tm3", None) => Ok(PitchProfile::tm3()),
        ("horizontal", None) => Ok(PitchProfile::horizontal()),
        ("constant", Some(deg)) => deg
            .parse::<f64>()
            .ok()
            .filter(|d| d.is_finite())
            .map(|d| PitchProfile::Constant { angle: d.to_radians() })
            .ok_or_else(|| Error::config(key, format!("`{deg}` is not an angle in degrees"))),
        ("table", Some(path)) => Ok(PitchProfile::Table(
            PitchTable::load_csv(path).map_err(|e| Error::config(key, e.to_string()))?,
        )),
        _ => Err(Error::config(
            key,
            format!("unknown profile `{value}`, expected tm1, tm2, tm3, horizontal, constant:<deg> or table:<csv>"),
        )),
    }
}

/// `a sin(w t + phase)` and its first two derivatives.
#[derive(Clone, Copy, Debug)]
struct Wave {
    amplitude: f64,
    omega: f64,
    phase: f64,
}

impl Wave {
    const fn new(amplitude: f64, omega: f64, phase: f64) -> Self {
        Self {
            amplitude,
            omega,
            phase,
        }
    }

    fn eval(&self, t: f64) -> [f64; 3] {
        let (s, c) = (self.omega * t + self.phase).sin_cos();
        let (a, w) = (self.amplitude, self.omega);
        [a * s, a * w * c, -a * w * w * s]
    }
}

/// Base pose relative to the surface frame and its derivatives.
#[derive(Clone, Copy, Debug)]
pub struct BaseSample {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub rotation: Rotation,
    /// Body-frame angular velocity of `rotation`.
    pub angular_velocity: Vec3,
}

/// Heading of the robot in the surface frame: facing +y, along the pitch axis.
pub const HEADING: f64 = std::f64::consts::FRAC_PI_2;

/// Base sway relative to the surface.
#[derive(Clone, Debug)]
pub struct BaseTrajectory {
    motion: RobotMotion,
    gait: Gait,
    /// x, y, z, yaw, pitch, roll
    waves: [Wave; 6],
}

impl BaseTrajectory {
    pub fn new(motion: RobotMotion, gait: Gait) -> Self {
        use std::f64::consts::{FRAC_PI_2, PI};
        let waves = match motion {
            RobotMotion::Stepping => {
                let w = PI / gait.step_period;
                [
                    // lateral sway toward the stance foot, cos(w t)
                    Wave::new(0.03, w, FRAC_PI_2),
                    Wave::new(0.01, 2.0 * w, 0.4),
                    Wave::new(0.02, 2.0 * w, FRAC_PI_2),
                    Wave::new(0.05, w, 0.0),
                    Wave::new(0.05, 2.0 * w, 0.3),
                    Wave::new(0.05, w, 0.5),
                ]
            }
            RobotMotion::Standing => {
                let w = 2.0 * PI;
                [
                    Wave::new(0.02, 0.5 * w, 0.0),
                    Wave::new(0.02, 0.3 * w, 1.0),
                    Wave::new(0.02, 0.7 * w, 0.2),
                    Wave::new(0.03, 0.2 * w, 0.0),
                    Wave::new(0.03, 0.4 * w, 0.7),
                    Wave::new(0.03, 0.35 * w, 1.3),
                ]
            }
        };
        Self { motion, gait, waves }
    }

    pub fn at(&self, t: f64) -> BaseSample {
        let e: Vec<[f64; 3]> = self.waves.iter().map(|w| w.eval(t)).collect();
        let forward = match self.motion {
            RobotMotion::Stepping => self.gait.stride / self.gait.step_period,
            RobotMotion::Standing => 0.0,
        };
        let position = Vec3::new(
            self.gait.distance + e[0][0],
            forward * t + e[1][0],
            self.gait.base_height + e[2][0],
        );
        let velocity = Vec3::new(e[0][1], forward + e[1][1], e[2][1]);
        let acceleration = Vec3::new(e[0][2], e[1][2], e[2][2]);

        let (yaw, pitch, roll) = (HEADING + e[3][0], e[4][0], e[5][0]);
        let (dyaw, dpitch, droll) = (e[3][1], e[4][1], e[5][1]);
        let (rz, ry, rx) = (rot_z(yaw), rot_y(pitch), rot_x(roll));
        let rotation = rz * ry * rx;
        // body rates of R = Rz Ry Rx
        let angular_velocity = rx.transpose() * ry.transpose() * Vec3::new(0.0, 0.0, dyaw)
            + rx.transpose() * Vec3::new(0.0, dpitch, 0.0)
            + Vec3::new(droll, 0.0, 0.0);
        BaseSample {
            position,
            velocity,
            acceleration,
            rotation,
            angular_velocity,
        }
    }

    /// Surface-frame position of the `k`-th support foot.
    pub fn foot(&self, k: usize) -> Vec3 {
        match self.motion {
            RobotMotion::Stepping => {
                let side = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
                Vec3::new(
                    self.gait.distance + side * self.gait.half_width,
                    k as f64 * self.gait.stride,
                    0.0,
                )
            }
            RobotMotion::Standing => Vec3::new(self.gait.distance, 0.0, 0.0),
        }
    }
}

/// Foot orientation in the surface frame: flat, facing forward.
pub fn foot_rotation_in_surface() -> Rotation {
    rot_z(HEADING)
}

/// True world-frame state at one instant. `q` is the stored form of the
/// rotation; `x.rotation` is derived from it so that a dataset survives a
/// write/read cycle bit for bit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TruthRecord {
    pub t: f64,
    pub q: [f64; 4],
    pub x: GroupElement,
    pub bias: BiasState,
}

impl TruthRecord {
    /// Snaps `x.rotation` to its quaternion form.
    pub fn new(t: f64, mut x: GroupElement, bias: BiasState) -> Self {
        let q = rotation_to_quaternion(&x.rotation);
        x.rotation = quaternion_to_rotation(q);
        Self { t, q, x, bias }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContactVelocity {
    pub t: f64,
    pub v_c: Vec3,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncoderReading {
    pub t: f64,
    pub joints: JointVector,
}

/// Reported surface orientation; `rotation` is derived from `q`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrsPose {
    pub t: f64,
    pub q: [f64; 4],
    pub rotation: Rotation,
}

impl DrsPose {
    pub fn new(t: f64, rotation: &Rotation) -> Self {
        Self::from_quaternion(t, rotation_to_quaternion(rotation))
    }

    pub fn from_quaternion(t: f64, q: [f64; 4]) -> Self {
        Self {
            t,
            q,
            rotation: quaternion_to_rotation(q),
        }
    }
}

/// Generation settings stored at the top of a dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub config: ScenarioConfig,
    pub true_bias_gyro: [f64; 3],
    pub true_bias_accel: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioDataset {
    pub header: DatasetHeader,
    pub truth: Vec<TruthRecord>,
    pub imu: Vec<ImuSample>,
    pub contact_vel: Vec<ContactVelocity>,
    pub encoder: Vec<EncoderReading>,
    pub drs_pose: Vec<DrsPose>,
    pub switches: Vec<ContactSwitch>,
}

/// Instantaneous true kinematics of the whole scene.
#[derive(Clone, Copy, Debug)]
pub struct SceneSample {
    pub x: GroupElement,
    /// World acceleration of the base.
    pub acceleration: Vec3,
    /// Body-frame angular velocity of the base.
    pub omega: Vec3,
    /// World velocity of the contact point.
    pub contact_velocity: Vec3,
    /// Base-to-foot transform in the base frame.
    pub foot_position: Vec3,
    pub foot_rotation: Rotation,
}

/// Deterministic part of a scenario: surface, base sway and support schedule.
#[derive(Clone, Debug)]
pub struct Scene {
    pub treadmill: Treadmill,
    pub reported: Treadmill,
    pub base: BaseTrajectory,
    /// Landing instants; support `k` is active on `[landings[k-1], landings[k])`.
    pub landings: Vec<f64>,
}

impl Scene {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let base = BaseTrajectory::new(cfg.motion, cfg.gait);
        let landings = match cfg.motion {
            RobotMotion::Standing => Vec::new(),
            RobotMotion::Stepping => landing_times(cfg),
        };
        Self {
            treadmill: Treadmill::new(cfg.profile.clone()),
            reported: Treadmill::new(cfg.reported_profile().clone()),
            base,
            landings,
        }
    }

    /// Index of the support foot at `t`; a landing at `t` already counts.
    pub fn support(&self, t: f64) -> usize {
        self.landings.partition_point(|&tl| tl <= t)
    }

    /// Scene with support foot `k`.
    pub fn sample_with(&self, t: f64, k: usize) -> SceneSample {
        let b = self.base.at(t);
        let body = self
            .treadmill
            .point_motion(t, &b.position, &b.velocity, &b.acceleration);
        let drs = self.treadmill.state_at(t);
        let rotation = drs.rotation * b.rotation;
        let foot = self.base.foot(k);
        let contact = self.treadmill.fixed_point_motion(t, &foot);
        SceneSample {
            x: GroupElement::new(rotation, body.velocity, body.position, contact.position),
            acceleration: body.acceleration,
            omega: b.rotation.transpose() * drs.rotation.transpose() * drs.angular_velocity + b.angular_velocity,
            contact_velocity: contact.velocity,
            foot_position: b.rotation.transpose() * (foot - b.position),
            foot_rotation: b.rotation.transpose() * foot_rotation_in_surface(),
        }
    }

    pub fn sample(&self, t: f64) -> SceneSample {
        self.sample_with(t, self.support(t))
    }

    /// Contact velocity the robot would compute from the reported surface motion.
    pub fn reported_contact_velocity(&self, t: f64, k: usize) -> Vec3 {
        self.reported
            .fixed_point_motion(t, &self.base.foot(k))
            .velocity
    }
}

/// Landing instants on the IMU grid, `(k - 1/2)` step periods in, never
/// within a quarter IMU period of a measurement time.
fn landing_times(cfg: &ScenarioConfig) -> Vec<f64> {
    let dt = 1.0 / cfg.imu_rate;
    let period = cfg.gait.step_period;
    let mut out = Vec::new();
    let mut k = 1;
    loop {
        let nominal = (k as f64 - 0.5) * period;
        if nominal >= cfg.duration {
            break;
        }
        let mut t = (nominal / dt).round() * dt;
        let near = |t: f64| {
            let j = (t * cfg.measurement_rate).round();
            (t - j / cfg.measurement_rate).abs() < 0.25 * dt
        };
        while near(t) {
            t += dt;
        }
        if t < cfg.duration {
            out.push(t);
        }
        k += 1;
    }
    out
}

/// True IMU reading for a world pose, its acceleration and body rates.
pub fn imu_from_state(x: &GroupElement, acceleration: &Vec3, omega: &Vec3) -> (Vec3, Vec3) {
    (*omega, x.rotation.transpose() * (acceleration - GRAVITY))
}

/// Noise-free IMU samples for a scene at the given times.
pub fn imu_from_trajectory(scene: &Scene, times: &[f64]) -> Vec<ImuSample> {
    times
        .iter()
        .map(|&t| {
            let s = scene.sample(t);
            let (omega, accel) = imu_from_state(&s.x, &s.acceleration, &s.omega);
            ImuSample { t, omega, accel }
        })
        .collect()
}

fn gaussian(rng: &mut impl Rng, sd: f64) -> Vec3 {
    Vec3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal) * sd)
}

fn grid(rate: f64, duration: f64, start: usize) -> Vec<f64> {
    let n = (duration * rate + 1e-9).floor() as usize;
    (start..=n).map(|i| i as f64 / rate).collect()
}

/// Generates a dataset. Identical configs give identical datasets.
pub fn generate(cfg: &ScenarioConfig) -> Result<ScenarioDataset> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise = &cfg.noise;
    let bias = if cfg.biases {
        BiasState::new(gaussian(&mut rng, noise.bias_gyro), gaussian(&mut rng, noise.bias_accel))
    } else {
        BiasState::default()
    };
    let scene = Scene::new(cfg);
    let imu_dt = 1.0 / cfg.imu_rate;
    // white-noise densities become per-sample SDs at the IMU rate
    let per_sample = 1.0 / imu_dt.sqrt();

    let imu_times = grid(cfg.imu_rate, cfg.duration, 0);
    let mut truth = Vec::with_capacity(imu_times.len());
    let mut imu = Vec::with_capacity(imu_times.len());
    let mut contact_vel = Vec::with_capacity(imu_times.len());
    for &t in &imu_times {
        let k = scene.support(t);
        let s = scene.sample_with(t, k);
        truth.push(TruthRecord::new(t, s.x, bias));
        let (omega, accel) = imu_from_state(&s.x, &s.acceleration, &s.omega);
        imu.push(ImuSample {
            t,
            omega: omega + bias.gyro + gaussian(&mut rng, noise.gyro * per_sample),
            accel: accel + bias.accel + gaussian(&mut rng, noise.accel * per_sample),
        });
        let v_c = scene.reported_contact_velocity(t, k);
        contact_vel.push(ContactVelocity {
            t,
            v_c: v_c + s.x.rotation * gaussian(&mut rng, noise.contact_vel * per_sample),
        });
    }

    let noisy_joints = |rng: &mut ChaCha8Rng, s: &SceneSample| {
        let q = VirtualLeg::joints_for(&s.foot_position, &s.foot_rotation);
        q.map(|v| v + rng.sample::<f64, _>(StandardNormal) * noise.encoder)
    };
    let mut encoder = Vec::new();
    let mut drs_pose = Vec::new();
    for t in grid(cfg.measurement_rate, cfg.duration, 1) {
        let s = scene.sample(t);
        encoder.push(EncoderReading {
            t,
            joints: noisy_joints(&mut rng, &s),
        });
        let reported = scene.reported.state_at(t).rotation;
        drs_pose.push(DrsPose::new(
            t,
            &(so3_exp(&gaussian(&mut rng, noise.drs_orientation)) * reported),
        ));
    }

    let mut switches = Vec::with_capacity(scene.landings.len());
    for (i, &t) in scene.landings.iter().enumerate() {
        let old = scene.sample_with(t, i);
        let new = scene.sample_with(t, i + 1);
        switches.push(ContactSwitch {
            t,
            old_leg: noisy_joints(&mut rng, &old),
            new_leg: noisy_joints(&mut rng, &new),
        });
    }

    Ok(ScenarioDataset {
        header: DatasetHeader {
            config: cfg.clone(),
            true_bias_gyro: bias.gyro.into(),
            true_bias_accel: bias.accel.into(),
        },
        truth,
        imu,
        contact_vel,
        encoder,
        drs_pose,
        switches,
    })
}

/// Initial estimation error: velocity offset, m/s, and rotation offset
/// (exponential coordinates), rad.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InitialError {
    pub velocity: Vec3,
    pub rotation: Vec3,
}

pub const INITIAL_VELOCITY_RANGE: f64 = 1.5;
pub const INITIAL_ROTATION_RANGE: f64 = 1.0;

/// Each velocity component uniform in +-1.5 m/s, each rotation component in +-1 rad.
pub fn initial_error_draw(rng: &mut impl Rng) -> InitialError {
    let mut uniform = |r: f64| Vec3::from_fn(|_, _| rng.gen_range(-r..=r));
    InitialError {
        velocity: uniform(INITIAL_VELOCITY_RANGE),
        rotation: uniform(INITIAL_ROTATION_RANGE),
    }
}

/// [`initial_error_draw`] from a fresh generator seeded with `seed`.
pub fn initial_error_from_seed(seed: u64) -> InitialError {
    initial_error_draw(&mut ChaCha8Rng::seed_from_u64(seed))
}

impl ScenarioDataset {
    /// Filter input stream. IMU and contact-velocity samples are paired by
    /// index; encoder and surface readings by timestamp.
    pub fn sensor_stream(&self) -> Result<SensorStream> {
        if self.imu.len() != self.contact_vel.len() {
            return Err(Error::InvalidInput(format!(
                "{} IMU samples but {} contact velocities",
                self.imu.len(),
                self.contact_vel.len()
            )));
        }
        let mut imu = Vec::with_capacity(self.imu.len());
        for (s, c) in self.imu.iter().zip(&self.contact_vel) {
            if (s.t - c.t).abs() > 1e-9 {
                return Err(Error::InvalidInput(format!(
                    "contact velocity at {} s does not match IMU sample at {} s",
                    c.t, s.t
                )));
            }
            imu.push(ImuInput { imu: *s, v_c: c.v_c });
        }
        let mut measurements = Vec::with_capacity(self.encoder.len());
        let mut poses = self.drs_pose.iter().peekable();
        for e in &self.encoder {
            while poses.peek().is_some_and(|p| p.t < e.t - 1e-9) {
                poses.next();
            }
            let drs_rotation = poses
                .peek()
                .filter(|p| (p.t - e.t).abs() <= 1e-9)
                .map(|p| p.rotation);
            measurements.push(Measurement {
                t: e.t,
                joints: e.joints.clone(),
                drs_rotation,
            });
        }
        Ok(SensorStream {
            imu,
            measurements,
            switches: self.switches.clone(),
        })
    }

    pub fn duration(&self) -> f64 {
        self.truth.last().map_or(0.0, |r| r.t) - self.truth.first().map_or(0.0, |r| r.t)
    }

    /// Largest measured contact speed.
    pub fn max_contact_speed(&self) -> f64 {
        self.contact_vel.iter().map(|c| c.v_c.norm()).fold(0.0, f64::max)
    }

    pub fn write_jsonl(&self, mut w: impl Write) -> Result<()> {
        let mut records: Vec<(f64, u8, Record)> = Vec::new();
        for r in &self.truth {
            records.push((r.t, 0, Record::truth(r)));
        }
        for s in &self.imu {
            records.push((
                s.t,
                1,
                Record::Imu {
                    t: s.t,
                    omega: s.omega.into(),
                    accel: s.accel.into(),
                },
            ));
        }
        for c in &self.contact_vel {
            records.push((c.t, 2, Record::ContactVel { t: c.t, v_c: c.v_c.into() }));
        }
        for s in &self.switches {
            records.push((
                s.t,
                3,
                Record::ContactSwitch {
                    t: s.t,
                    joints_old: s.old_leg.iter().copied().collect(),
                    joints_new: s.new_leg.iter().copied().collect(),
                },
            ));
        }
        for e in &self.encoder {
            records.push((
                e.t,
                4,
                Record::Encoder {
                    t: e.t,
                    joints: e.joints.iter().copied().collect(),
                },
            ));
        }
        for p in &self.drs_pose {
            records.push((
                p.t,
                5,
                Record::DrsPose { t: p.t, q: p.q },
            ));
        }
        records.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        serde_json::to_writer(&mut w, &Record::Header(Box::new(self.header.clone())))?;
        writeln!(w)?;
        for (_, _, r) in &records {
            serde_json::to_writer(&mut w, r)?;
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_jsonl(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_jsonl(r: impl BufRead) -> Result<Self> {
        let mut header = None;
        let mut ds = ScenarioDataset {
            header: DatasetHeader {
                config: ScenarioConfig::default(),
                true_bias_gyro: [0.0; 3],
                true_bias_accel: [0.0; 3],
            },
            truth: Vec::new(),
            imu: Vec::new(),
            contact_vel: Vec::new(),
            encoder: Vec::new(),
            drs_pose: Vec::new(),
            switches: Vec::new(),
        };
        for (n, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record = serde_json::from_str(&line).map_err(|e| Error::Dataset {
                line: n + 1,
                message: e.to_string(),
            })?;
            let bad = |message: String| Error::Dataset { line: n + 1, message };
            match record {
                Record::Header(h) => header = Some(*h),
                Record::Truth {
                    t,
                    q,
                    v,
                    p,
                    pc,
                    b_omega,
                    b_acc,
                } => ds.truth.push(TruthRecord {
                    t,
                    q,
                    x: GroupElement::new(quaternion_to_rotation(q), v.into(), p.into(), pc.into()),
                    bias: BiasState::new(b_omega.into(), b_acc.into()),
                }),
                Record::Imu { t, omega, accel } => ds.imu.push(ImuSample {
                    t,
                    omega: omega.into(),
                    accel: accel.into(),
                }),
                Record::ContactVel { t, v_c } => ds.contact_vel.push(ContactVelocity { t, v_c: v_c.into() }),
                Record::Encoder { t, joints } => ds.encoder.push(EncoderReading {
                    t,
                    joints: DVector::from_vec(joints),
                }),
                Record::DrsPose { t, q } => ds.drs_pose.push(DrsPose::from_quaternion(t, q)),
                Record::ContactSwitch {
                    t,
                    joints_old,
                    joints_new,
                } => {
                    if joints_old.len() != joints_new.len() {
                        return Err(bad("contact switch legs differ in joint count".into()));
                    }
                    ds.switches.push(ContactSwitch {
                        t,
                        old_leg: DVector::from_vec(joints_old),
                        new_leg: DVector::from_vec(joints_new),
                    })
                }
            }
        }
        ds.header = header.ok_or(Error::Dataset {
            line: 1,
            message: "missing header record".into(),
        })?;
        Ok(ds)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_jsonl(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
enum Record {
    Header(Box<DatasetHeader>),
    Truth {
        t: f64,
        q: [f64; 4],
        v: [f64; 3],
        p: [f64; 3],
        pc: [f64; 3],
        b_omega: [f64; 3],
        b_acc: [f64; 3],
    },
    Imu {
        t: f64,
        omega: [f64; 3],
        accel: [f64; 3],
    },
    ContactVel {
        t: f64,
        v_c: [f64; 3],
    },
    Encoder {
        t: f64,
        joints: Vec<f64>,
    },
    DrsPose {
        t: f64,
        q: [f64; 4],
    },
    ContactSwitch {
        t: f64,
        joints_old: Vec<f64>,
        joints_new: Vec<f64>,
    },
}

impl Record {
    fn truth(r: &TruthRecord) -> Self {
        Record::Truth {
            t: r.t,
            q: r.q,
            v: r.x.velocity.into(),
            p: r.x.position.into(),
            pc: r.x.contact.into(),
            b_omega: r.bias.gyro.into(),
            b_acc: r.bias.accel.into(),
        }
    }
}
