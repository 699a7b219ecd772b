//! Dynamic rigid surface: a treadmill pitching about the world y axis through a
//! pivot at the world origin.
//!
//! A point fixed in the surface frame at `x` sits at `R(t) (r0 + x)` in the
//! world, where `r0` is the surface-frame origin offset from the pivot.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liegroup::{rot_y, so3_exp, Rotation, Vec3};

/// Pose and twist of the surface at one instant (world frame).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DrsState {
    pub rotation: Rotation,
    /// Velocity of the surface-frame origin, m/s.
    pub velocity: Vec3,
    /// rad/s
    pub angular_velocity: Vec3,
    pub t: f64,
}

/// Pitch angle and its first two time derivatives, rad, rad/s, rad/s^2.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct PitchSample {
    pub angle: f64,
    pub rate: f64,
    pub accel: f64,
}

/// Rate-limited trapezoid: hold, ramp, hold at the opposite angle, ramp back.
///
/// Ramp corners are blended with a quintic smoothstep on the pitch rate, so
/// the angle is C3 and the synthesized IMU signals have continuous slopes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trapezoid {
    /// Angle held during the first hold, rad (the second hold is its negation).
    pub hold_angle: f64,
    pub hold_duration: f64,
    /// Full transition time between the two hold angles.
    pub ramp_duration: f64,
    /// Smoothing time at each end of a ramp; `2 * blend <= ramp_duration`.
    pub blend: f64,
    /// Horizontal lead-in before the trapezoid starts; the first approach to
    /// `hold_angle` uses the same ramp shape.
    pub lead_in: f64,
}

impl Default for Trapezoid {
    fn default() -> Self {
        Self {
            hold_angle: (-8f64).to_radians(),
            hold_duration: 2.8,
            ramp_duration: 0.65,
            blend: 0.1,
            lead_in: 0.0,
        }
    }
}

/// Quintic smoothstep `S(s)` with zero first and second derivatives at both ends.
fn smoothstep5(s: f64) -> [f64; 3] {
    let s2 = s * s;
    [
        // integral of S from 0, S, S'
        s2 * s2 * (s2 - 3.0 * s + 2.5),
        s2 * s * (6.0 * s2 - 15.0 * s + 10.0),
        30.0 * s2 * (1.0 - s) * (1.0 - s),
    ]
}

/// Smooth monotone transition of `delta` over `duration`, evaluated at `u`.
fn ramp(delta: f64, duration: f64, blend: f64, u: f64) -> PitchSample {
    let peak = delta / (duration - blend);
    let u = u.clamp(0.0, duration);
    if u < blend {
        let [i, s, ds] = smoothstep5(u / blend);
        PitchSample {
            angle: peak * blend * i,
            rate: peak * s,
            accel: peak * ds / blend,
        }
    } else if u <= duration - blend {
        PitchSample {
            angle: peak * (0.5 * blend + (u - blend)),
            rate: peak,
            accel: 0.0,
        }
    } else {
        let [i, s, ds] = smoothstep5((duration - u) / blend);
        PitchSample {
            angle: delta - peak * blend * i,
            rate: peak * s,
            accel: -peak * ds / blend,
        }
    }
}

impl Trapezoid {
    pub fn period(&self) -> f64 {
        2.0 * (self.hold_duration + self.ramp_duration)
    }

    /// Peak pitch rate reached during a full ramp.
    pub fn peak_rate(&self) -> f64 {
        2.0 * self.hold_angle.abs() / (self.ramp_duration - self.blend)
    }

    fn validate(&self) -> Result<()> {
        if !(self.ramp_duration > 0.0 && self.blend > 0.0 && 2.0 * self.blend <= self.ramp_duration)
        {
            return Err(Error::InvalidInput(format!(
                "trapezoid needs 0 < 2*blend <= ramp_duration, got blend {} ramp {}",
                self.blend, self.ramp_duration
            )));
        }
        if self.hold_duration < 0.0 || self.lead_in < 0.0 {
            return Err(Error::InvalidInput("negative trapezoid duration".into()));
        }
        Ok(())
    }

    pub fn sample(&self, t: f64) -> PitchSample {
        let a = self.hold_angle;
        let t = t.max(0.0);
        if self.lead_in > 0.0 {
            if t < self.lead_in {
                return PitchSample::default();
            }
            let u = t - self.lead_in;
            if u < self.ramp_duration {
                return ramp(a, self.ramp_duration, self.blend, u);
            }
            return self.cycle(u - self.ramp_duration);
        }
        self.cycle(t)
    }

    fn cycle(&self, t: f64) -> PitchSample {
        let a = self.hold_angle;
        let (h, r) = (self.hold_duration, self.ramp_duration);
        let u = t.rem_euclid(self.period());
        let hold = |angle| PitchSample {
            angle,
            ..Default::default()
        };
        if u < h {
            hold(a)
        } else if u < h + r {
            let s = ramp(-2.0 * a, r, self.blend, u - h);
            PitchSample {
                angle: a + s.angle,
                ..s
            }
        } else if u < 2.0 * h + r {
            hold(-a)
        } else {
            let s = ramp(2.0 * a, r, self.blend, u - 2.0 * h - r);
            PitchSample {
                angle: -a + s.angle,
                ..s
            }
        }
    }
}

/// Piecewise-linear pitch table `(t seconds, angle rad)`, held constant outside
/// its range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PitchTable {
    points: Vec<(f64, f64)>,
}

impl PitchTable {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("pitch table is empty".into()));
        }
        for w in points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::OutOfOrder {
                    prev: w[0].0,
                    next: w[1].0,
                });
            }
        }
        if points.iter().any(|(t, a)| !t.is_finite() || !a.is_finite()) {
            return Err(Error::InvalidInput("pitch table has non-finite entries".into()));
        }
        Ok(Self { points })
    }

    /// Two-column CSV `t_seconds, theta_degrees`; a non-numeric first line is
    /// treated as a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed = match cols.as_slice() {
                [t, a] => t.parse::<f64>().ok().zip(a.parse::<f64>().ok()),
                _ => None,
            };
            match parsed {
                Some((t, deg)) => points.push((t, deg.to_radians())),
                None if n == 0 => continue,
                None => {
                    return Err(Error::Dataset {
                        line: n + 1,
                        message: format!("expected `t_seconds, theta_degrees`, got `{line}`"),
                    })
                }
            }
        }
        Self::new(points)
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn sample(&self, t: f64) -> PitchSample {
        let p = &self.points;
        let hold = |angle| PitchSample {
            angle,
            ..Default::default()
        };
        if t <= p[0].0 {
            return hold(p[0].1);
        }
        if t >= p[p.len() - 1].0 {
            return hold(p[p.len() - 1].1);
        }
        let i = p.partition_point(|&(ti, _)| ti <= t) - 1;
        let ((t0, a0), (t1, a1)) = (p[i], p[i + 1]);
        let rate = (a1 - a0) / (t1 - t0);
        PitchSample {
            angle: a0 + rate * (t - t0),
            rate,
            accel: 0.0,
        }
    }
}

/// Surface pitch profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PitchProfile {
    Constant { angle: f64 },
    /// TM1.
    Trapezoid(Trapezoid),
    /// TM2: `amplitude * sin(frequency * t)`, frequency in rad/s.
    Sine { amplitude: f64, frequency: f64 },
    /// TM3: trapezoid plus a constant offset and a sine.
    Corrupted {
        base: Trapezoid,
        offset: f64,
        amplitude: f64,
        frequency: f64,
    },
    Table(PitchTable),
}

impl PitchProfile {
    pub fn tm1() -> Self {
        PitchProfile::Trapezoid(Trapezoid::default())
    }

    pub fn tm2() -> Self {
        PitchProfile::Sine {
            amplitude: 2.5f64.to_radians(),
            frequency: std::f64::consts::PI,
        }
    }

    pub fn tm3() -> Self {
        PitchProfile::Corrupted {
            base: Trapezoid::default(),
            offset: 5.1f64.to_radians(),
            amplitude: 1.7f64.to_radians(),
            frequency: std::f64::consts::PI,
        }
    }

    pub fn horizontal() -> Self {
        PitchProfile::Constant { angle: 0.0 }
    }

    /// Same profile with a horizontal lead-in of `seconds` (trapezoid variants only).
    pub fn with_lead_in(self, seconds: f64) -> Self {
        match self {
            PitchProfile::Trapezoid(mut t) => {
                t.lead_in = seconds;
                PitchProfile::Trapezoid(t)
            }
            PitchProfile::Corrupted {
                mut base,
                offset,
                amplitude,
                frequency,
            } => {
                base.lead_in = seconds;
                PitchProfile::Corrupted {
                    base,
                    offset,
                    amplitude,
                    frequency,
                }
            }
            other => other,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PitchProfile::Trapezoid(t) | PitchProfile::Corrupted { base: t, .. } => t.validate(),
            _ => Ok(()),
        }
    }

    /// Short tag used in configs and dataset headers.
    pub fn name(&self) -> &'static str {
        match self {
            PitchProfile::Constant { .. } => "constant",
            PitchProfile::Trapezoid(_) => "tm1",
            PitchProfile::Sine { .. } => "tm2",
            PitchProfile::Corrupted { .. } => "tm3",
            PitchProfile::Table(_) => "table",
        }
    }

    pub fn sample(&self, t: f64) -> PitchSample {
        match self {
            PitchProfile::Constant { angle } => PitchSample {
                angle: *angle,
                ..Default::default()
            },
            PitchProfile::Trapezoid(tr) => tr.sample(t),
            PitchProfile::Sine {
                amplitude,
                frequency,
            } => sine(*amplitude, *frequency, t),
            PitchProfile::Corrupted {
                base,
                offset,
                amplitude,
                frequency,
            } => {
                let b = base.sample(t);
                let s = sine(*amplitude, *frequency, t);
                PitchSample {
                    angle: b.angle + offset + s.angle,
                    rate: b.rate + s.rate,
                    accel: b.accel + s.accel,
                }
            }
            PitchProfile::Table(table) => table.sample(t),
        }
    }

    pub fn angle(&self, t: f64) -> f64 {
        self.sample(t).angle
    }
}

fn sine(amplitude: f64, frequency: f64, t: f64) -> PitchSample {
    let (s, c) = (frequency * t).sin_cos();
    PitchSample {
        angle: amplitude * s,
        rate: amplitude * frequency * c,
        accel: -amplitude * frequency * frequency * s,
    }
}

/// World position, velocity and acceleration of a point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointMotion {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
}

/// Pitching treadmill: a profile plus the surface-frame origin offset.
#[derive(Clone, Debug, PartialEq)]
pub struct Treadmill {
    pub profile: PitchProfile,
    /// Surface-frame origin relative to the pivot, surface frame, m.
    pub origin_offset: Vec3,
}

impl Treadmill {
    pub fn new(profile: PitchProfile) -> Self {
        Self {
            profile,
            origin_offset: Vec3::zeros(),
        }
    }

    pub fn state_at(&self, t: f64) -> DrsState {
        let s = self.profile.sample(t);
        let rotation = rot_y(s.angle);
        let angular_velocity = Vec3::new(0.0, s.rate, 0.0);
        DrsState {
            rotation,
            velocity: angular_velocity.cross(&(rotation * self.origin_offset)),
            angular_velocity,
            t,
        }
    }

    /// Motion of a point with surface-frame coordinates `x(t)` given with its
    /// first two derivatives (all in the surface frame).
    pub fn point_motion(&self, t: f64, x: &Vec3, x_dot: &Vec3, x_ddot: &Vec3) -> PointMotion {
        let s = self.profile.sample(t);
        let r = rot_y(s.angle);
        let w = Vec3::new(0.0, s.rate, 0.0);
        let alpha = Vec3::new(0.0, s.accel, 0.0);
        let y = r * (self.origin_offset + x);
        let y_dot = r * x_dot;
        PointMotion {
            position: y,
            velocity: w.cross(&y) + y_dot,
            acceleration: alpha.cross(&y) + w.cross(&w.cross(&y)) + 2.0 * w.cross(&y_dot) + r * x_ddot,
        }
    }

    /// Motion of a point fixed in the surface frame.
    pub fn fixed_point_motion(&self, t: f64, x: &Vec3) -> PointMotion {
        self.point_motion(t, x, &Vec3::zeros(), &Vec3::zeros())
    }
}

/// Surface state at `t` with the pivot at the surface-frame origin.
pub fn drs_pose_at(profile: &PitchProfile, t: f64) -> DrsState {
    Treadmill::new(profile.clone()).state_at(t)
}

/// World velocity of a contact point at `p_c_in_drs` (surface frame).
pub fn contact_point_velocity(drs: &DrsState, p_c_in_drs: &Vec3) -> Vec3 {
    drs.velocity + drs.angular_velocity.cross(&(drs.rotation * p_c_in_drs))
}

/// Reported orientation `exp(w) R` for a true orientation `R`.
pub fn corrupt_drs_orientation(rotation: &Rotation, w: &Vec3) -> Rotation {
    so3_exp(w) * rotation
}
