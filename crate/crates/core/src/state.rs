//! Filter state, error state and noise configuration.
//!
//! The 18x18 covariance is ordered `(xi_R, xi_v, xi_p, xi_c, zeta_gyro, zeta_accel)`.

use std::path::Path;

use nalgebra::{SMatrix, SVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyvalue::KeyValues;
use crate::liegroup::{GroupElement, TangentVector, Vec3};

pub type Mat18 = SMatrix<f64, 18, 18>;
pub type Vec18 = SVector<f64, 18>;

/// Offsets of each 3-block inside the 18-dimensional error.
pub mod block {
    pub const ROT: usize = 0;
    pub const VEL: usize = 3;
    pub const POS: usize = 6;
    pub const CONTACT: usize = 9;
    pub const BIAS_GYRO: usize = 12;
    pub const BIAS_ACCEL: usize = 15;
}

/// IMU gyro and accelerometer biases.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasState {
    /// rad/s
    pub gyro: Vec3,
    /// m/s^2
    pub accel: Vec3,
}

impl BiasState {
    pub fn new(gyro: Vec3, accel: Vec3) -> Self {
        Self { gyro, accel }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.gyro.x,
            self.gyro.y,
            self.gyro.z,
            self.accel.x,
            self.accel.y,
            self.accel.z,
        )
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self::new(
            v.fixed_rows::<3>(0).into_owned(),
            v.fixed_rows::<3>(3).into_owned(),
        )
    }
}

/// Right-invariant log error plus bias error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorState {
    pub xi: TangentVector,
    pub zeta: Vector6<f64>,
}

impl ErrorState {
    pub fn between(estimate: &FilterState, truth_x: &GroupElement, truth_bias: &BiasState) -> Self {
        Self {
            xi: right_invariant_error(&estimate.x, truth_x),
            zeta: estimate.bias.to_vector() - truth_bias.to_vector(),
        }
    }

    pub fn to_vector(&self) -> Vec18 {
        let mut e = Vec18::zeros();
        e.fixed_rows_mut::<12>(0).copy_from(&self.xi);
        e.fixed_rows_mut::<6>(12).copy_from(&self.zeta);
        e
    }
}

/// `log(X_est X_true^-1)`.
pub fn right_invariant_error(estimate: &GroupElement, truth: &GroupElement) -> TangentVector {
    estimate.compose(&truth.inverse()).log()
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilterState {
    pub x: GroupElement,
    pub bias: BiasState,
    pub cov: Mat18,
    /// seconds
    pub t: f64,
}

impl FilterState {
    pub fn new(x: GroupElement, bias: BiasState, cov: Mat18, t: f64) -> Self {
        Self { x, bias, cov, t }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite()
            && self.bias.to_vector().iter().all(|v| v.is_finite())
            && self.cov.iter().all(|v| v.is_finite())
    }

    /// Largest absolute asymmetry of the covariance.
    pub fn asymmetry(&self) -> f64 {
        (self.cov - self.cov.transpose()).amax()
    }

    pub fn min_cov_eigenvalue(&self) -> f64 {
        self.cov.symmetric_eigenvalues().min()
    }
}

/// Identity 18x18 prior covariance.
pub fn initial_covariance() -> Mat18 {
    Mat18::identity()
}

pub(crate) fn symmetrize(p: &mut Mat18) {
    let t = p.transpose();
    *p = (*p + t) * 0.5;
}

/// Noise standard deviations. Gyro, accel, bias walks and contact velocity are
/// white-noise densities; encoder and surface orientation are per sample.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseConfig {
    /// rad/s
    pub gyro: f64,
    /// m/s^2
    pub accel: f64,
    /// rad/s^2
    pub bias_gyro: f64,
    /// m/s^3
    pub bias_accel: f64,
    /// m/s
    pub contact_vel: f64,
    /// rad
    pub encoder: f64,
    /// rad
    pub drs_orientation: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        default_noise_config()
    }
}

pub fn default_noise_config() -> NoiseConfig {
    NoiseConfig {
        gyro: 0.01,
        accel: 0.4,
        bias_gyro: 0.0001,
        bias_accel: 0.001,
        contact_vel: 0.01,
        encoder: 1f64.to_radians(),
        drs_orientation: 1f64.to_radians(),
    }
}

impl NoiseConfig {
    pub const KEYS: [&'static str; 7] = [
        "sd_gyro",
        "sd_accel",
        "sd_bias_gyro",
        "sd_bias_accel",
        "sd_contact_vel",
        "sd_encoder_deg",
        "sd_drs_orient_deg",
    ];

    pub fn zero() -> Self {
        Self {
            gyro: 0.0,
            accel: 0.0,
            bias_gyro: 0.0,
            bias_accel: 0.0,
            contact_vel: 0.0,
            encoder: 0.0,
            drs_orientation: 0.0,
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self {
            gyro: self.gyro * s,
            accel: self.accel * s,
            bias_gyro: self.bias_gyro * s,
            bias_accel: self.bias_accel * s,
            contact_vel: self.contact_vel * s,
            encoder: self.encoder * s,
            drs_orientation: self.drs_orientation * s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("sd_gyro", self.gyro),
            ("sd_accel", self.accel),
            ("sd_bias_gyro", self.bias_gyro),
            ("sd_bias_accel", self.bias_accel),
            ("sd_contact_vel", self.contact_vel),
            ("sd_encoder_deg", self.encoder),
            ("sd_drs_orient_deg", self.drs_orientation),
        ];
        for (key, v) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(key, format!("standard deviation must be >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Overrides fields present in `kv`; unspecified keys keep their current value.
    pub(crate) fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        let set = |key: &str, slot: &mut f64, scale: f64| -> Result<()> {
            if let Some(v) = kv.f64(key)? {
                *slot = v * scale;
            }
            Ok(())
        };
        set("sd_gyro", &mut self.gyro, 1.0)?;
        set("sd_accel", &mut self.accel, 1.0)?;
        set("sd_bias_gyro", &mut self.bias_gyro, 1.0)?;
        set("sd_bias_accel", &mut self.bias_accel, 1.0)?;
        set("sd_contact_vel", &mut self.contact_vel, 1.0)?;
        set("sd_encoder_deg", &mut self.encoder, 1f64.to_radians())?;
        set("sd_drs_orient_deg", &mut self.drs_orientation, 1f64.to_radians())?;
        self.validate()
    }

    /// Parses a `key = value` file. Missing keys default to [`default_noise_config`].
    pub fn parse(text: &str) -> Result<Self> {
        let kv = KeyValues::parse(text)?;
        kv.reject_unknown(&Self::KEYS)?;
        let mut cfg = default_noise_config();
        cfg.apply(&kv)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_config_string(&self) -> String {
        format!(
            "sd_gyro = {}\nsd_accel = {}\nsd_bias_gyro = {}\nsd_bias_accel = {}\n\
             sd_contact_vel = {}\nsd_encoder_deg = {}\nsd_drs_orient_deg = {}\n",
            self.gyro,
            self.accel,
            self.bias_gyro,
            self.bias_accel,
            self.contact_vel,
            self.encoder.to_degrees(),
            self.drs_orientation.to_degrees()
        )
    }

    /// `Cov(w)` for `w = (w_gyro, w_accel, 0, w_contact, w_bias_gyro, w_bias_accel)`.
    pub fn process_covariance(&self) -> Mat18 {
        let sd = [
            self.gyro,
            self.accel,
            0.0,
            self.contact_vel,
            self.bias_gyro,
            self.bias_accel,
        ];
        let mut d = Vec18::zeros();
        for (i, s) in sd.iter().enumerate() {
            d.fixed_rows_mut::<3>(3 * i).fill(s * s);
        }
        Mat18::from_diagonal(&d)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::liegroup::{so3_exp, tangent};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_element(rng: &mut impl Rng) -> GroupElement {
        let mut v = || Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        GroupElement::new(so3_exp(&(v() * 1.5)), v() * 2.0, v() * 3.0, v() * 3.0)
    }

    #[test]
    fn table_values() {
        let n = default_noise_config();
        assert_eq!(n.accel, 0.4);
        assert_eq!(n.gyro, 0.01);
        assert_eq!(n.bias_accel, 0.001);
        assert_eq!(n.bias_gyro, 0.0001);
        assert_eq!(n.contact_vel, 0.01);
        assert_relative_eq!(n.encoder, 0.017453292519943295);
        assert_relative_eq!(n.drs_orientation.to_degrees(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn initial_covariance_is_identity() {
        let p = initial_covariance();
        assert_eq!(p, Mat18::identity());
        assert_eq!(p, p.transpose());
        assert!(p.cholesky().is_some());
    }

    #[test]
    fn error_of_equal_states_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_element(&mut rng);
        assert_relative_eq!(right_invariant_error(&x, &x), TangentVector::zeros(), epsilon = 1e-12);
    }

    #[test]
    fn error_recovers_left_perturbation() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..100 {
            let truth = random_element(&mut rng);
            let xi = tangent(
                Vec3::new(0.3, -1.0, 2.0).normalize() * rng.gen_range(0.0..3.0),
                Vec3::new(1.0, 2.0, 3.0),
                Vec3::new(-1.0, 0.5, 0.0),
                Vec3::new(0.0, 0.0, 4.0),
            );
            let est = GroupElement::exp(&xi) * truth;
            assert_relative_eq!(right_invariant_error(&est, &truth), xi, epsilon = 1e-9);
        }
    }

    #[test]
    fn error_is_right_invariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..500 {
            let (a, b, z) = (random_element(&mut rng), random_element(&mut rng), random_element(&mut rng));
            if right_invariant_error(&a, &b).fixed_rows::<3>(0).norm() > 3.0 {
                continue;
            }
            assert_relative_eq!(
                right_invariant_error(&(a * z), &(b * z)),
                right_invariant_error(&a, &b),
                epsilon = 1e-9
            );
        }
    }

    #[test]
    fn config_file_roundtrip_and_errors() {
        let n = NoiseConfig::parse("sd_accel = 0.2\nsd_encoder_deg = 2\n").unwrap();
        assert_eq!(n.accel, 0.2);
        assert_relative_eq!(n.encoder, 2f64.to_radians());
        assert_eq!(n.gyro, 0.01);
        let again = NoiseConfig::parse(&n.to_config_string()).unwrap();
        assert_relative_eq!(again.encoder, n.encoder, epsilon = 1e-15);

        let err = NoiseConfig::parse("sd_gyro = -1").unwrap_err().to_string();
        assert!(err.contains("sd_gyro"));
        let err = NoiseConfig::parse("sd_gyroscope = 1").unwrap_err().to_string();
        assert!(err.contains("sd_gyroscope"));
    }

    #[test]
    fn process_covariance_layout() {
        let q = default_noise_config().process_covariance();
        assert_relative_eq!(q[(0, 0)], 1e-4);
        assert_relative_eq!(q[(3, 3)], 0.16);
        assert_eq!(q[(6, 6)], 0.0);
        assert_relative_eq!(q[(9, 9)], 1e-4);
        assert_relative_eq!(q[(12, 12)], 1e-8);
        assert_relative_eq!(q[(17, 17)], 1e-6);
    }
}
