//! Linear observability of the bias-free error dynamics under the two
//! observations, as a function of the surface orientation.

use nalgebra::{DMatrix, SMatrix};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::error_jacobian_no_bias;
use crate::liegroup::{rot_y, skew, Mat12, Mat3, Rotation, Vec3};
use crate::state::block;

/// Singular values below this fraction of the largest count as zero.
pub const RANK_TOL: f64 = 1e-8;

/// Null-space components below this magnitude count as zero.
const FLAG_TOL: f64 = 1e-6;

/// `expm(A dt)` for the 12x12 bias-free error dynamics.
pub fn transition_matrix(a: &Mat12, dt: f64) -> Mat12 {
    (a * dt).exp()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityOptions {
    pub dt: f64,
    pub n_blocks: usize,
    /// Contact velocity used in `A`.
    pub v_c: Vec3,
    /// Include the surface-normal observation rows.
    pub orientation: bool,
}

impl Default for ObservabilityOptions {
    fn default() -> Self {
        Self {
            dt: 0.01,
            n_blocks: 4,
            v_c: Vec3::zeros(),
            orientation: true,
        }
    }
}

impl ObservabilityOptions {
    fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if self.n_blocks < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 stacked blocks, got {}",
                self.n_blocks
            )));
        }
        Ok(())
    }
}

fn orientation_rows(r_drs: &Rotation) -> SMatrix<f64, 3, 12> {
    let mut h = SMatrix::<f64, 3, 12>::zeros();
    let n: Vec3 = r_drs.column(2).into_owned();
    h.fixed_view_mut::<3, 3>(0, block::ROT).copy_from(&skew(&n));
    h
}

fn position_rows() -> SMatrix<f64, 3, 12> {
    let mut h = SMatrix::<f64, 3, 12>::zeros();
    h.fixed_view_mut::<3, 3>(0, block::POS).copy_from(&(-Mat3::identity()));
    h.fixed_view_mut::<3, 3>(0, block::CONTACT).copy_from(&Mat3::identity());
    h
}

/// Stacked `[H; H Phi; H Phi^2; ...]` with zero contact velocity and both
/// observations.
pub fn observability_matrix(r_drs: &Rotation, dt: f64, n_blocks: usize) -> Result<DMatrix<f64>> {
    observability_matrix_with(
        r_drs,
        &ObservabilityOptions {
            dt,
            n_blocks,
            ..Default::default()
        },
    )
}

pub fn observability_matrix_with(r_drs: &Rotation, opts: &ObservabilityOptions) -> Result<DMatrix<f64>> {
    opts.validate()?;
    let phi = transition_matrix(&error_jacobian_no_bias(&opts.v_c), opts.dt);
    let mut h: Vec<SMatrix<f64, 3, 12>> = Vec::with_capacity(2);
    if opts.orientation {
        h.push(orientation_rows(r_drs));
    }
    h.push(position_rows());
    let per_block = 3 * h.len();
    let mut out = DMatrix::zeros(per_block * opts.n_blocks, 12);
    let mut power = Mat12::identity();
    for k in 0..opts.n_blocks {
        for (i, hi) in h.iter().enumerate() {
            out.view_mut((k * per_block + 3 * i, 0), (3, 12))
                .copy_from(&(hi * power));
        }
        power *= phi;
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObservabilityReport {
    pub rank: usize,
    pub roll_pitch: bool,
    pub yaw: bool,
    pub velocity: bool,
    pub position: bool,
    pub contact: bool,
    pub dt: f64,
    pub n_blocks: usize,
    /// Angle between the surface normal and world z, rad.
    pub tilt: f64,
    pub orientation_rows: bool,
}

/// Right singular vectors spanning the null space, one per column.
fn null_space(o: &DMatrix<f64>) -> (usize, DMatrix<f64>) {
    // pad to at least 12 rows so the thin SVD yields all right vectors
    let mut m = DMatrix::zeros(o.nrows().max(12), 12);
    m.view_mut((0, 0), (o.nrows(), 12)).copy_from(o);
    let svd = m.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let smax = svd.singular_values.max();
    let null: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] <= RANK_TOL * smax)
        .collect();
    let mut n = DMatrix::zeros(12, null.len());
    for (j, &i) in null.iter().enumerate() {
        n.set_column(j, &v_t.row(i).transpose());
    }
    (12 - null.len(), n)
}

/// Numerical rank with the [`RANK_TOL`] threshold.
pub fn numerical_rank(o: &DMatrix<f64>) -> usize {
    null_space(o).0
}

/// `true` when every direction in `rows` of the error is orthogonal to the null space.
fn rows_observable(null: &DMatrix<f64>, rows: &[usize]) -> bool {
    rows.iter()
        .all(|&r| null.row(r).iter().all(|v| v.abs() < FLAG_TOL))
}

pub fn observability_report(r_drs: &Rotation, dt: f64, n_blocks: usize) -> Result<ObservabilityReport> {
    observability_report_with(
        r_drs,
        &ObservabilityOptions {
            dt,
            n_blocks,
            ..Default::default()
        },
    )
}

/// Rank and per-variable flags. Roll/pitch are the rotation-error directions
/// orthogonal to gravity, yaw the one along it.
pub fn observability_report_with(r_drs: &Rotation, opts: &ObservabilityOptions) -> Result<ObservabilityReport> {
    let o = observability_matrix_with(r_drs, opts)?;
    let (rank, null) = null_space(&o);
    let range = |start: usize| [start, start + 1, start + 2];
    let normal: Vec3 = r_drs.column(2).into_owned();
    Ok(ObservabilityReport {
        rank,
        roll_pitch: rows_observable(&null, &[block::ROT, block::ROT + 1]),
        yaw: rows_observable(&null, &[block::ROT + 2]),
        velocity: rows_observable(&null, &range(block::VEL)),
        position: rows_observable(&null, &range(block::POS)),
        contact: rows_observable(&null, &range(block::CONTACT)),
        dt: opts.dt,
        n_blocks: opts.n_blocks,
        tilt: normal.z.clamp(-1.0, 1.0).acos(),
        orientation_rows: opts.orientation,
    })
}

/// Reports for surfaces pitched about world y by each of `tilts_deg`.
pub fn tilt_sweep(tilts_deg: &[f64], opts: &ObservabilityOptions) -> Result<Vec<ObservabilityReport>> {
    tilts_deg
        .iter()
        .map(|deg| observability_report_with(&rot_y(deg.to_radians()), opts))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::GRAVITY;
    use crate::liegroup::{rot_x, so3_exp};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn truncated_series(a: &Mat12, dt: f64) -> Mat12 {
        let ad = a * dt;
        let mut term = Mat12::identity();
        let mut sum = Mat12::identity();
        for k in 1..=4 {
            term = term * ad / k as f64;
            sum += term;
        }
        sum
    }

    #[test]
    fn transition_trivial_cases() {
        assert_eq!(transition_matrix(&Mat12::zeros(), 0.3), Mat12::identity());
        let a = error_jacobian_no_bias(&Vec3::new(0.1, 0.2, 0.3));
        assert_relative_eq!(transition_matrix(&a, 0.0), Mat12::identity());
    }

    #[test]
    fn transition_matches_truncated_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let v_c = Vec3::from_fn(|_, _| rng.gen_range(-1.0..1.0));
            let a = error_jacobian_no_bias(&v_c);
            // nilpotent: A^3 = 0
            assert!((a * a * a).amax() == 0.0);
            for dt in [1e-3, 1e-2, 0.1] {
                assert!((transition_matrix(&a, dt) - truncated_series(&a, dt)).amax() < 1e-12);
            }
        }
    }

    #[test]
    fn first_propagated_block_entries() {
        let dt = 0.01;
        let o = observability_matrix(&Mat3::identity(), dt, 2).unwrap();
        let h2phi = o.view((9, 0), (3, 12));
        let expected_rot = -skew(&GRAVITY) * (0.5 * dt * dt);
        assert!((h2phi.view((0, 0), (3, 3)) - expected_rot).amax() < 1e-15);
        assert!((h2phi.view((0, 3), (3, 3)) + Mat3::identity() * dt).amax() < 1e-15);
        assert!((h2phi.view((0, 6), (3, 3)) + Mat3::identity()).amax() < 1e-15);
        assert!((h2phi.view((0, 9), (3, 3)) - Mat3::identity()).amax() < 1e-15);
    }

    #[test]
    fn horizontal_surface_rank_and_flags() {
        let r = observability_report(&Mat3::identity(), 0.01, 4).unwrap();
        assert_eq!(r.rank, 8);
        assert!(!r.yaw && r.roll_pitch && r.velocity);
        assert!(!r.position && !r.contact);
        assert_eq!(r.tilt, 0.0);
    }

    #[test]
    fn tilted_surface_rank_and_flags() {
        for deg in 1..=10 {
            let r = observability_report(&rot_y((deg as f64).to_radians()), 0.01, 4).unwrap();
            assert_eq!(r.rank, 9, "tilt {deg}");
            assert!(r.yaw && r.roll_pitch && r.velocity);
            assert!(!r.position && !r.contact);
            assert_relative_eq!(r.tilt, (deg as f64).to_radians(), epsilon = 1e-12);
        }
        let r = observability_report(&(rot_x(0.1) * so3_exp(&Vec3::new(0.0, 0.0, 1.0))), 0.01, 4).unwrap();
        assert_eq!(r.rank, 9);
    }

    #[test]
    fn removing_orientation_rows_loses_yaw() {
        let opts = ObservabilityOptions {
            orientation: false,
            ..Default::default()
        };
        for deg in [0.0, 1.0, 5.0, 8.0, 10.0] {
            let r = observability_report_with(&rot_y(f64::to_radians(deg)), &opts).unwrap();
            assert!(!r.yaw, "tilt {deg}");
            assert!(r.roll_pitch && r.velocity);
        }
    }

    #[test]
    fn rank_invariant_to_dt_blocks_and_contact_velocity() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for tilt in [0.0, 8.0_f64.to_radians()] {
            let expected = if tilt == 0.0 { 8 } else { 9 };
            for dt in [1e-3, 1e-2] {
                for n_blocks in 3..7 {
                    let mut opts = ObservabilityOptions {
                        dt,
                        n_blocks,
                        ..Default::default()
                    };
                    assert_eq!(observability_report_with(&rot_y(tilt), &opts).unwrap().rank, expected);
                    opts.v_c = Vec3::from_fn(|_, _| rng.gen_range(-0.5..0.5));
                    assert_eq!(observability_report_with(&rot_y(tilt), &opts).unwrap().rank, expected);
                }
            }
        }
    }

    #[test]
    fn null_space_avoids_velocity_and_tilt_directions() {
        let o = observability_matrix(&Mat3::identity(), 0.01, 4).unwrap();
        let (rank, null) = null_space(&o);
        assert_eq!(null.ncols(), 12 - rank);
        for j in 0..null.ncols() {
            let v = null.column(j);
            assert!(v.rows(block::VEL, 3).amax() < 1e-9);
            assert!(v[0].abs() < 1e-9 && v[1].abs() < 1e-9);
            assert!((&o * v).amax() < 1e-8);
        }
    }

    #[test]
    fn sweep_is_monotone() {
        let tilts: Vec<f64> = (0..=10).map(f64::from).collect();
        let reports = tilt_sweep(&tilts, &ObservabilityOptions::default()).unwrap();
        assert_eq!(reports[0].rank, 8);
        assert!(!reports[0].yaw);
        assert!(reports[1..].iter().all(|r| r.rank == 9 && r.yaw));
        assert!(reports.windows(2).all(|w| w[1].rank >= w[0].rank));
    }

    #[test]
    fn rejects_bad_options() {
        assert!(observability_matrix(&Mat3::identity(), 0.01, 1).is_err());
        assert!(observability_matrix(&Mat3::identity(), 0.0, 3).is_err());
    }
}
