use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use drs_inekf::filter::FilterVariant;
use drs_inekf::harness::{self, RunOptions, RunReport, RunResult};
use drs_inekf::observability::{tilt_sweep, ObservabilityOptions};
use drs_inekf::sim::{generate, ScenarioConfig, ScenarioDataset};
use drs_inekf::Error;

const EXIT_INPUT: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "drs-inekf", version, about = "InEKF for legged robots on a moving rigid surface")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic dataset from a key=value scenario file.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the filter from independent initial-error draws.
    Run {
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, default_value = "drs")]
        variant: FilterVariant,
        #[arg(long, default_value_t = 10)]
        runs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score an estimate trajectory against the truth in a dataset.
    Eval {
        #[arg(long)]
        dataset: PathBuf,
        /// Estimate JSONL as written by `run`.
        #[arg(long)]
        estimates: PathBuf,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Observability rank and flags over a tilt sweep.
    Obs {
        #[arg(long, default_value_t = 10.0)]
        max_tilt: f64,
        #[arg(long, default_value_t = 1.0)]
        step: f64,
        /// Drop the surface-normal rows (leg odometry only).
        #[arg(long)]
        no_orientation: bool,
        /// Report path; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_INPUT
    }
}

fn write_json(out: Option<&Path>, value: &impl serde::Serialize) -> drs_inekf::Result<()> {
    let mut w: Box<dyn Write> = match out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(std::io::stdout().lock()),
    };
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn simulate(config: &Path, seed: Option<u64>, out: &Path) -> drs_inekf::Result<()> {
    let mut cfg = ScenarioConfig::load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let data = generate(&cfg)?;
    data.save(out)?;
    println!("scenario        {}", cfg.name);
    println!("duration        {:.3} s", data.duration());
    println!("imu samples     {}", data.imu.len());
    println!("measurements    {}", data.encoder.len());
    println!("contact switches {}", data.switches.len());
    println!("max |v_c|       {:.4} m/s", data.max_contact_speed());
    Ok(())
}

fn run(dataset: &Path, variant: FilterVariant, runs: usize, seed: u64, out: &Path) -> Result<(), u8> {
    let fail = |e: Error| {
        eprintln!("error: {e}");
        exit_code(&e)
    };
    if runs == 0 {
        eprintln!("error: --runs must be at least 1");
        return Err(EXIT_INPUT);
    }
    let data = ScenarioDataset::load(dataset).map_err(fail)?;
    let opts = RunOptions::new(variant, runs, seed);
    let mc = harness::monte_carlo(&data, &opts).map_err(fail)?;
    let report = RunReport::monte_carlo(&data.header.config.name, &opts, &mc);
    harness::write_outputs(out, &report, &mc.runs).map_err(fail)?;
    if let Some(rms) = &report.rms {
        println!(
            "{} runs ({variant}): RMS v {:.4} {:.4} {:.4} m/s, yaw {:.4} pitch {:.4} roll {:.4} rad",
            mc.runs.len(),
            rms.v_x,
            rms.v_y,
            rms.v_z,
            rms.yaw,
            rms.pitch,
            rms.roll
        );
    }
    println!("wrote {}", out.display());
    if !mc.failures.is_empty() {
        for f in &mc.failures {
            eprintln!("run {} failed: {}", f.index, f.message);
        }
        return Err(EXIT_NUMERICAL);
    }
    Ok(())
}

fn eval(dataset: &Path, estimates: &Path, out: Option<&Path>) -> drs_inekf::Result<()> {
    let data = ScenarioDataset::load(dataset)?;
    let est = harness::load_estimates(estimates)?;
    let result = RunResult::from_estimates(0, est, &data.truth)?;
    let label = estimates.file_stem().and_then(|s| s.to_str()).unwrap_or("estimates");
    let report = RunReport::new(&data.header.config.name, label, None, &[result], &[]);
    write_json(out, &report)
}

fn obs(max_tilt: f64, step: f64, orientation: bool, out: Option<&Path>) -> drs_inekf::Result<()> {
    if !(max_tilt.is_finite() && (0.0..90.0).contains(&max_tilt)) {
        return Err(Error::InvalidInput(format!("--max-tilt must be in [0, 90), got {max_tilt}")));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidInput(format!("--step must be positive, got {step}")));
    }
    let n = (max_tilt / step + 1e-9).floor() as usize;
    let tilts: Vec<f64> = (0..=n).map(|k| k as f64 * step).collect();
    let opts = ObservabilityOptions {
        orientation,
        ..ObservabilityOptions::default()
    };
    let reports = tilt_sweep(&tilts, &opts)?;
    let rows: Vec<serde_json::Value> = tilts
        .iter()
        .zip(&reports)
        .map(|(deg, r)| {
            serde_json::json!({
                "tilt_deg": deg,
                "rank": r.rank,
                "roll_pitch": r.roll_pitch,
                "yaw": r.yaw,
                "velocity": r.velocity,
                "position": r.position,
                "contact": r.contact,
            })
        })
        .collect();
    let report = serde_json::json!({
        "dt": opts.dt,
        "n_blocks": opts.n_blocks,
        "orientation_rows": orientation,
        "sweep": rows,
    });
    write_json(out, &report)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_INPUT } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Simulate { config, seed, out } => simulate(&config, seed, &out),
        Command::Run {
            dataset,
            variant,
            runs,
            seed,
            out,
        } => return run(&dataset, variant, runs, seed, &out).map_or_else(ExitCode::from, |_| ExitCode::SUCCESS),
        Command::Eval { dataset, estimates, out } => eval(&dataset, &estimates, out.as_deref()),
        Command::Obs {
            max_tilt,
            step,
            no_orientation,
            out,
        } => obs(max_tilt, step, !no_orientation, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
