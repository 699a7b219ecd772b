//! Monte Carlo runs, error metrics and report files.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::filter::{run_variant, FilterSetup, FilterVariant};
use crate::kinematics::VirtualLeg;
use crate::liegroup::{quaternion_to_rotation, rotation_to_quaternion, so3_exp, so3_log, Vec3};
use crate::sim::{generate, initial_error_draw, InitialError, ScenarioConfig, ScenarioDataset, TruthRecord};
use crate::state::{initial_covariance, BiasState, FilterState, Mat18};
use crate::{Error, Result};

/// Roll/pitch convergence threshold, rad.
pub const TILT_THRESHOLD: f64 = 0.05;
/// Per-component velocity threshold, m/s.
pub const VELOCITY_THRESHOLD: f64 = 0.1;
/// Yaw threshold, rad.
pub const YAW_THRESHOLD: f64 = 0.1;
/// Start of the steady-state window, s.
pub const STEADY_STATE_START: f64 = 5.0;

/// Filter estimate at one instant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateRecord {
    pub t: f64,
    /// w, x, y, z
    pub q: [f64; 4],
    pub v: [f64; 3],
    pub p: [f64; 3],
    pub pc: [f64; 3],
    pub b_omega: [f64; 3],
    pub b_acc: [f64; 3],
    pub p_diag: Vec<f64>,
}

impl From<&FilterState> for EstimateRecord {
    fn from(s: &FilterState) -> Self {
        let a = |v: &Vec3| [v.x, v.y, v.z];
        Self {
            t: s.t,
            q: rotation_to_quaternion(&s.x.rotation),
            v: a(&s.x.velocity),
            p: a(&s.x.position),
            pc: a(&s.x.contact),
            b_omega: a(&s.bias.gyro),
            b_acc: a(&s.bias.accel),
            p_diag: s.cov.diagonal().iter().copied().collect(),
        }
    }
}

impl EstimateRecord {
    pub fn rotation(&self) -> nalgebra::Matrix3<f64> {
        quaternion_to_rotation(self.q)
    }

    pub fn velocity(&self) -> Vec3 {
        Vec3::from(self.v)
    }
}

pub fn write_estimates(records: &[EstimateRecord], w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_estimates(r: impl BufRead) -> Result<Vec<EstimateRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: EstimateRecord = serde_json::from_str(&line).map_err(|e| Error::Dataset {
            line: i + 1,
            message: e.to_string(),
        })?;
        if !rec.q.iter().chain(&rec.v).all(|v| v.is_finite()) {
            return Err(Error::Dataset {
                line: i + 1,
                message: "non-finite estimate".into(),
            });
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn load_estimates(path: impl AsRef<Path>) -> Result<Vec<EstimateRecord>> {
    read_estimates(BufReader::new(std::fs::File::open(path)?))
}

pub fn save_estimates(records: &[EstimateRecord], path: impl AsRef<Path>) -> Result<()> {
    write_estimates(records, std::fs::File::create(path)?)
}

/// Truth at `t`: geodesic in rotation, linear in the vectors. `None` outside
/// the recorded range.
pub fn truth_at(truth: &[TruthRecord], t: f64) -> Option<(nalgebra::Matrix3<f64>, Vec3)> {
    let first = truth.first()?;
    let last = truth.last()?;
    if t < first.t - 1e-9 || t > last.t + 1e-9 {
        return None;
    }
    let j = truth.partition_point(|r| r.t <= t);
    if j == 0 {
        return Some((first.x.rotation, first.x.velocity));
    }
    if j >= truth.len() {
        return Some((last.x.rotation, last.x.velocity));
    }
    let (a, b) = (&truth[j - 1], &truth[j]);
    let s = (t - a.t) / (b.t - a.t);
    let r = a.x.rotation * so3_exp(&(so3_log(&(a.x.rotation.transpose() * b.x.rotation)) * s));
    let v = a.x.velocity.lerp(&b.x.velocity, s);
    Some((r, v))
}

/// Estimation error at one instant. Orientation components are those of
/// `log(R_est R_true^T)` about the world z, y and x axes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorSample {
    pub t: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    /// estimate minus truth, m/s
    pub v: [f64; 3],
}

impl ErrorSample {
    pub const NAMES: [&'static str; 6] = ["v_x", "v_y", "v_z", "yaw", "pitch", "roll"];

    /// In [`ErrorSample::NAMES`] order.
    pub fn values(&self) -> [f64; 6] {
        [self.v[0], self.v[1], self.v[2], self.yaw, self.pitch, self.roll]
    }
}

pub fn error_sample(
    t: f64,
    r_est: &nalgebra::Matrix3<f64>,
    v_est: &Vec3,
    r_true: &nalgebra::Matrix3<f64>,
    v_true: &Vec3,
) -> ErrorSample {
    let phi = so3_log(&(r_est * r_true.transpose()));
    let dv = v_est - v_true;
    ErrorSample {
        t,
        yaw: phi.z,
        pitch: phi.y,
        roll: phi.x,
        v: [dv.x, dv.y, dv.z],
    }
}

/// Errors of `estimates` against `truth`. Estimates outside the truth range
/// are rejected.
pub fn evaluate(truth: &[TruthRecord], estimates: &[EstimateRecord]) -> Result<Vec<ErrorSample>> {
    estimates
        .iter()
        .map(|e| {
            let (r, v) = truth_at(truth, e.t).ok_or_else(|| {
                Error::InvalidInput(format!("estimate at {} s lies outside the truth range", e.t))
            })?;
            Ok(error_sample(e.t, &e.rotation(), &e.velocity(), &r, &v))
        })
        .collect()
}

/// Per-variable RMS, in [`ErrorSample::NAMES`] order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Rms {
    pub v_x: f64,
    pub v_y: f64,
    pub v_z: f64,
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub samples: usize,
}

impl Rms {
    /// `None` for an empty window.
    pub fn of<'a>(errors: impl IntoIterator<Item = &'a ErrorSample>) -> Option<Self> {
        let mut sum = [0.0; 6];
        let mut n = 0;
        for e in errors {
            for (s, v) in sum.iter_mut().zip(e.values()) {
                *s += v * v;
            }
            n += 1;
        }
        if n == 0 {
            return None;
        }
        let r = |i: usize| (sum[i] / n as f64).sqrt();
        Some(Self {
            v_x: r(0),
            v_y: r(1),
            v_z: r(2),
            yaw: r(3),
            pitch: r(4),
            roll: r(5),
            samples: n,
        })
    }

    pub fn values(&self) -> [f64; 6] {
        [self.v_x, self.v_y, self.v_z, self.yaw, self.pitch, self.roll]
    }
}

/// Earliest time after which `|f(e)| < threshold` holds for every later
/// sample. `None` if the last sample violates it.
pub fn settling_time(errors: &[ErrorSample], threshold: f64, f: impl Fn(&ErrorSample) -> f64) -> Option<f64> {
    let last_bad = errors.iter().rposition(|e| f(e).abs() >= threshold);
    match last_bad {
        None => errors.first().map(|e| e.t),
        Some(i) if i + 1 < errors.len() => Some(errors[i + 1].t),
        Some(_) => None,
    }
}

/// Settling times, s, of one run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Convergence {
    /// roll and pitch both below [`TILT_THRESHOLD`]
    pub tilt: Option<f64>,
    /// every velocity component below [`VELOCITY_THRESHOLD`]
    pub velocity: Option<f64>,
    pub yaw: Option<f64>,
}

impl Convergence {
    pub fn of(errors: &[ErrorSample]) -> Self {
        Self {
            tilt: settling_time(errors, TILT_THRESHOLD, |e| e.roll.abs().max(e.pitch.abs())),
            velocity: settling_time(errors, VELOCITY_THRESHOLD, |e| {
                e.v.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
            }),
            yaw: settling_time(errors, YAW_THRESHOLD, |e| e.yaw),
        }
    }
}

/// Start of the filter from the true initial state perturbed by `err`.
/// Position is exact; the contact point sits at the true body-frame foot
/// offset seen through the perturbed orientation. Biases start at zero.
pub fn initial_state(truth0: &TruthRecord, err: &InitialError, cov: Mat18) -> FilterState {
    let x = truth0.x;
    let rotation = so3_exp(&err.rotation) * x.rotation;
    let foot_body = x.rotation.transpose() * (x.contact - x.position);
    let mut est = x;
    est.rotation = rotation;
    est.velocity = x.velocity + err.velocity;
    est.contact = x.position + rotation * foot_body;
    FilterState::new(est, BiasState::default(), cov, truth0.t)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunOptions {
    pub variant: FilterVariant,
    pub runs: usize,
    pub seed: u64,
    pub cov0: Mat18,
}

impl RunOptions {
    pub fn new(variant: FilterVariant, runs: usize, seed: u64) -> Self {
        Self {
            variant,
            runs,
            seed,
            cov0: initial_covariance(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub index: usize,
    pub estimates: Vec<EstimateRecord>,
    pub errors: Vec<ErrorSample>,
    pub convergence: Convergence,
}

impl RunResult {
    /// Scores `estimates` against `truth`.
    pub fn from_estimates(index: usize, estimates: Vec<EstimateRecord>, truth: &[TruthRecord]) -> Result<Self> {
        let errors = evaluate(truth, &estimates)?;
        Ok(Self {
            index,
            convergence: Convergence::of(&errors),
            estimates,
            errors,
        })
    }
}

/// A run stopped by a numerical failure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub index: usize,
    pub message: String,
}

/// Successful runs plus the runs that failed numerically.
#[derive(Clone, Debug, Default)]
pub struct MonteCarlo {
    pub runs: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

/// Initial errors for `runs` runs from one seed.
pub fn initial_errors(runs: usize, seed: u64) -> Vec<InitialError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..runs).map(|_| initial_error_draw(&mut rng)).collect()
}

/// One filter pass over `data` from the given start.
pub fn run_once(data: &ScenarioDataset, initial: &FilterState, variant: FilterVariant) -> Result<Vec<FilterState>> {
    let stream = data.sensor_stream()?;
    let setup = FilterSetup {
        model: &VirtualLeg,
        noise: data.header.config.noise,
        variant,
    };
    run_variant(initial, &stream, &setup)
}

/// Filter run from the truth perturbed by `err`; the initial state is the
/// first estimate.
pub fn single_run(data: &ScenarioDataset, opts: &RunOptions, index: usize, err: &InitialError) -> Result<RunResult> {
    let truth0 = data
        .truth
        .first()
        .ok_or_else(|| Error::InvalidInput("dataset has no truth records".into()))?;
    let initial = initial_state(truth0, err, opts.cov0);
    let states = run_once(data, &initial, opts.variant)?;
    let estimates = std::iter::once(&initial)
        .chain(states.iter())
        .map(EstimateRecord::from)
        .collect();
    RunResult::from_estimates(index, estimates, &data.truth)
}

/// Runs the filter `opts.runs` times with independent initial errors.
/// Numerical failures are recorded per run; any other error aborts.
pub fn monte_carlo(data: &ScenarioDataset, opts: &RunOptions) -> Result<MonteCarlo> {
    if opts.runs == 0 {
        return Err(Error::InvalidInput("runs must be at least 1".into()));
    }
    data.sensor_stream()?.validate()?;
    let errs = initial_errors(opts.runs, opts.seed);
    let one = |(i, e): (usize, &InitialError)| single_run(data, opts, i, e);
    #[cfg(feature = "parallel")]
    let results: Vec<Result<RunResult>> = {
        use rayon::prelude::*;
        errs.par_iter().enumerate().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Result<RunResult>> = errs.iter().enumerate().map(one).collect();

    let mut out = MonteCarlo::default();
    for (index, r) in results.into_iter().enumerate() {
        match r {
            Ok(run) => out.runs.push(run),
            Err(e) if e.is_numerical() => {
                log::warn!("run {index}: {e}");
                out.failures.push(RunFailure {
                    index,
                    message: e.to_string(),
                })
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Per-time minimum, mean and maximum of each error variable over runs.
#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeRow {
    pub t: f64,
    pub min: [f64; 6],
    pub mean: [f64; 6],
    pub max: [f64; 6],
}

pub fn envelope(runs: &[RunResult]) -> Vec<EnvelopeRow> {
    let n = runs.iter().map(|r| r.errors.len()).min().unwrap_or(0);
    (0..n)
        .map(|i| {
            let mut row = EnvelopeRow {
                t: runs[0].errors[i].t,
                min: [f64::INFINITY; 6],
                mean: [0.0; 6],
                max: [f64::NEG_INFINITY; 6],
            };
            for r in runs {
                for (j, v) in r.errors[i].values().into_iter().enumerate() {
                    row.min[j] = row.min[j].min(v);
                    row.max[j] = row.max[j].max(v);
                    row.mean[j] += v / runs.len() as f64;
                }
            }
            row
        })
        .collect()
}

pub fn write_envelope_csv(rows: &[EnvelopeRow], w: impl Write) -> Result<()> {
    let mut w = BufWriter::new(w);
    write!(w, "t")?;
    for stat in ["min", "mean", "max"] {
        for name in ErrorSample::NAMES {
            write!(w, ",{name}_{stat}")?;
        }
    }
    writeln!(w)?;
    for r in rows {
        write!(w, "{}", r.t)?;
        for v in r.min.iter().chain(&r.mean).chain(&r.max) {
            write!(w, ",{v}")?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: usize,
    /// error at the first estimate
    pub initial: Option<ErrorSample>,
    pub rms: Option<Rms>,
    pub rms_steady: Option<Rms>,
    pub convergence: Convergence,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub scenario: String,
    pub variant: String,
    pub seed: Option<u64>,
    pub runs: usize,
    /// RMS over all runs and the full window
    pub rms: Option<Rms>,
    /// RMS over all runs from [`STEADY_STATE_START`] on
    pub rms_steady: Option<Rms>,
    /// worst settling time over runs, `None` if any run never settles
    pub worst_convergence: Convergence,
    pub per_run: Vec<RunSummary>,
    pub failures: Vec<RunFailure>,
}

fn worst(times: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let mut m = Some(f64::NEG_INFINITY);
    for t in times {
        m = match (m, t) {
            (Some(a), Some(b)) => Some(a.max(b)),
            _ => None,
        };
    }
    m.filter(|v| v.is_finite())
}

impl RunReport {
    pub fn new(scenario: &str, variant: &str, seed: Option<u64>, runs: &[RunResult], failures: &[RunFailure]) -> Self {
        let steady = |r: &RunResult| {
            r.errors
                .iter()
                .filter(|e| e.t >= STEADY_STATE_START)
                .copied()
                .collect::<Vec<_>>()
        };
        let all: Vec<ErrorSample> = runs.iter().flat_map(|r| r.errors.iter().copied()).collect();
        let all_steady: Vec<ErrorSample> = runs.iter().flat_map(steady).collect();
        Self {
            scenario: scenario.to_string(),
            variant: variant.to_string(),
            seed,
            runs: runs.len(),
            rms: Rms::of(&all),
            rms_steady: Rms::of(&all_steady),
            worst_convergence: Convergence {
                tilt: worst(runs.iter().map(|r| r.convergence.tilt)),
                velocity: worst(runs.iter().map(|r| r.convergence.velocity)),
                yaw: worst(runs.iter().map(|r| r.convergence.yaw)),
            },
            per_run: runs
                .iter()
                .map(|r| RunSummary {
                    index: r.index,
                    initial: r.errors.first().copied(),
                    rms: Rms::of(&r.errors),
                    rms_steady: Rms::of(&steady(r)),
                    convergence: r.convergence,
                })
                .collect(),
            failures: failures.to_vec(),
        }
    }

    /// Report of a Monte Carlo batch.
    pub fn monte_carlo(scenario: &str, opts: &RunOptions, mc: &MonteCarlo) -> Self {
        Self::new(scenario, &opts.variant.to_string(), Some(opts.seed), &mc.runs, &mc.failures)
    }
}

/// Writes `report.json`, `envelope.csv` and one `run_NNN.jsonl` estimate file
/// per run into `dir`.
pub fn write_outputs(dir: impl AsRef<Path>, report: &RunReport, runs: &[RunResult]) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut f = BufWriter::new(std::fs::File::create(dir.join("report.json"))?);
    serde_json::to_writer_pretty(&mut f, report)?;
    f.write_all(b"\n")?;
    f.flush()?;
    write_envelope_csv(&envelope(runs), std::fs::File::create(dir.join("envelope.csv"))?)?;
    for r in runs {
        save_estimates(&r.estimates, dir.join(format!("run_{:03}.jsonl", r.index)))?;
    }
    Ok(())
}

/// Error-vector indices of roll, pitch and the three velocity components.
pub const NEES_INDICES: [usize; 5] = [0, 1, 3, 4, 5];

/// Run-averaged NEES of the roll, pitch and velocity errors at each estimate time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeesResult {
    pub runs: usize,
    pub dof: usize,
    pub t: Vec<f64>,
    pub mean: Vec<f64>,
}

impl NeesResult {
    /// Mean over time of the run-averaged NEES.
    pub fn average(&self) -> f64 {
        self.mean.iter().sum::<f64>() / self.mean.len() as f64
    }
}

/// Rotation and velocity parts of `log(X_est X_true^-1)`.
fn rotation_velocity_error(
    r_est: &nalgebra::Matrix3<f64>,
    v_est: &Vec3,
    r_true: &nalgebra::Matrix3<f64>,
    v_true: &Vec3,
) -> [f64; 6] {
    let dr = r_est * r_true.transpose();
    let phi = so3_log(&dr);
    let rho = crate::liegroup::so3_left_jacobian_inv(&phi) * (v_est - dr * v_true);
    [phi.x, phi.y, phi.z, rho.x, rho.y, rho.z]
}

/// Monte Carlo consistency check. Run `i` uses its own dataset generated
/// from `cfg` with seed `cfg.seed + i`, and starts from the true state
/// perturbed by an error drawn from `N(0, cov0)` in the filter's own error
/// coordinates, with `cov0` as the prior covariance.
pub fn nees_monte_carlo(
    cfg: &ScenarioConfig,
    cov0: &Mat18,
    variant: FilterVariant,
    runs: usize,
    seed: u64,
) -> Result<NeesResult> {
    use rand_distr::{Distribution, StandardNormal};

    if runs == 0 {
        return Err(Error::InvalidInput("runs must be at least 1".into()));
    }
    let chol = nalgebra::Cholesky::new(*cov0)
        .ok_or_else(|| Error::InvalidInput("prior covariance is not positive definite".into()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<crate::state::Vec18> = (0..runs)
        .map(|_| chol.l() * crate::state::Vec18::from_fn(|_, _| StandardNormal.sample(&mut rng)))
        .collect();

    let one = |(i, e): (usize, &crate::state::Vec18)| -> Result<Vec<(f64, f64)>> {
        let mut run_cfg = cfg.clone();
        run_cfg.seed = cfg.seed.wrapping_add(i as u64);
        let data = generate(&run_cfg)?;
        let truth0 = data
            .truth
            .first()
            .ok_or_else(|| Error::InvalidInput("dataset has no truth records".into()))?;
        let xi = crate::liegroup::TangentVector::from_fn(|k, _| e[k]);
        let zeta = nalgebra::Vector6::from_fn(|k, _| e[12 + k]);
        let start = FilterState::new(
            crate::liegroup::GroupElement::exp(&xi).compose(&truth0.x),
            BiasState::from_vector(&(truth0.bias.to_vector() + zeta)),
            *cov0,
            truth0.t,
        );
        let states = run_once(&data, &start, variant)?;
        states
            .iter()
            .map(|s| {
                let (r, v) = truth_at(&data.truth, s.t)
                    .ok_or_else(|| Error::InvalidInput(format!("no truth at {} s", s.t)))?;
                let e6 = rotation_velocity_error(&s.x.rotation, &s.x.velocity, &r, &v);
                let e = nalgebra::SVector::<f64, 5>::from_fn(|i, _| e6[NEES_INDICES[i]]);
                let p = nalgebra::SMatrix::<f64, 5, 5>::from_fn(|i, j| s.cov[(NEES_INDICES[i], NEES_INDICES[j])]);
                let nees = p
                    .cholesky()
                    .map(|c| e.dot(&c.solve(&e)))
                    .ok_or_else(|| Error::Numerical("covariance lost positive definiteness".into()))?;
                Ok((s.t, nees))
            })
            .collect()
    };

    #[cfg(feature = "parallel")]
    let per_run: Vec<Vec<(f64, f64)>> = {
        use rayon::prelude::*;
        draws.par_iter().enumerate().map(one).collect::<Result<_>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let per_run: Vec<Vec<(f64, f64)>> = draws.iter().enumerate().map(one).collect::<Result<_>>()?;

    let n = per_run.iter().map(Vec::len).min().unwrap_or(0);
    let t = per_run[0][..n].iter().map(|(t, _)| *t).collect();
    let mean = (0..n)
        .map(|k| per_run.iter().map(|r| r[k].1).sum::<f64>() / runs as f64)
        .collect();
    Ok(NeesResult {
        runs,
        dof: NEES_INDICES.len(),
        t,
        mean,
    })
}
