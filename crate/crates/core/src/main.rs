//! Command-line front end: single runs, Monte-Carlo campaigns, preset
//! inspection and gain-certificate validation.

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use se3_observer::config::{load_preset, preset_names, preset_text, ScenarioConfig};
use se3_observer::measurement::{NoiseModel, TimedMeasurement};
use se3_observer::output::{measurements_csv, run_csv, summary_csv, write_file};
use se3_observer::rigid_body::integrate_step;
use se3_observer::sim::{noise_seed, run_monte_carlo, run_single, sample_scenario, RunStatus};
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "se3-observer", version, about = "Rigid-body pose/velocity observer simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a single run and write its time series as CSV.
    Run {
        /// Scenario file, or `preset:NAME` for a bundled preset.
        #[arg(long)]
        config: String,
        /// Which Monte-Carlo draw to execute.
        #[arg(long, default_value_t = 0)]
        run_index: u64,
        /// Output directory.
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Also write the noisy measurement stream of this run.
        #[arg(long)]
        emit_measurements: bool,
    },
    /// Execute the full Monte-Carlo campaign and write the summary CSV.
    Mc {
        #[arg(long)]
        config: String,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Also write every per-run time series.
        #[arg(long)]
        per_run: bool,
    },
    /// List or print the bundled scenario presets.
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Check a scenario file and its gain certificate.
    Validate {
        #[arg(long)]
        config: String,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    List,
    Show { name: String },
}

fn load_config(source: &str) -> Result<ScenarioConfig> {
    if let Some(name) = source.strip_prefix("preset:") {
        return load_preset(name).with_context(|| format!("loading preset `{name}`"));
    }
    ScenarioConfig::load(source).with_context(|| format!("loading config `{source}`"))
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, run_index, out, emit_measurements } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&out)?;
            let record = run_single(&cfg, run_index)?;
            let path = out.join(format!("run_{run_index}.csv"));
            write_file(&path, &run_csv(&record))?;
            if emit_measurements {
                let stream = replay_measurements(&cfg, run_index)?;
                write_file(
                    out.join(format!("measurements_{run_index}.csv")),
                    &measurements_csv(&stream),
                )?;
            }
            match &record.status {
                RunStatus::Completed => {
                    let f = record.finals.expect("completed run has finals");
                    println!(
                        "run {run_index}: |p_e| = {:.6} m, |theta_e| = {:.6} deg ({} epochs) -> {}",
                        f.position_norm(),
                        f.orientation_norm_deg(),
                        record.epochs.len(),
                        path.display()
                    );
                }
                RunStatus::Diverged { time, reason } => {
                    bail!("run {run_index} diverged at t = {time}: {reason}");
                }
            }
        }
        Command::Mc { config, out, jobs, per_run } => {
            let cfg = load_config(&config)?;
            std::fs::create_dir_all(&out)?;
            if let Some(jobs) = jobs {
                configure_pool(jobs)?;
            }
            let (summary, records) = run_monte_carlo(&cfg)?;
            let path = out.join("summary.csv");
            write_file(&path, &summary_csv(&summary, &records))?;
            if per_run {
                for r in &records {
                    write_file(out.join(format!("run_{}.csv", r.run_index)), &run_csv(r))?;
                }
            }
            println!(
                "{} runs ({} completed): max |p_e| = {:.6} m, max |theta_e| = {:.6} deg -> {}",
                summary.runs,
                summary.completed,
                summary.max_position_error_norm,
                summary.max_orientation_error_norm_deg,
                path.display()
            );
            if !summary.failed_runs.is_empty() {
                bail!("runs failed: {:?}", summary.failed_runs);
            }
        }
        Command::Preset { action } => match action {
            PresetAction::List => {
                for name in preset_names() {
                    println!("{name}");
                }
            }
            PresetAction::Show { name } => match preset_text(&name) {
                Some(text) => print!("{text}"),
                None => bail!("unknown preset `{name}`; available: {:?}", preset_names()),
            },
        },
        Command::Validate { config } => {
            let cfg = load_config(&config)?;
            let (gains, cert) = cfg.gains()?;
            println!(
                "gain certificate: p1 = {:.6e} > bound = {:.6e} (rotational-block variant {:.6e})",
                cert.p1, cert.bound, cert.bound_rotational
            );
            println!(
                "k1 = {:.4}, sigma_max(Lambda) = {:.6e}, psi0 <= {:.4} rad, |w_e(0)| <= {:.4} rad/s",
                gains.k1(),
                cert.inertia_sigma_max,
                cert.psi0_bound,
                cert.omega_e0_bound
            );
            let label = if cfg.name.is_empty() { "scenario" } else { cfg.name.as_str() };
            println!("config `{label}` is valid");
        }
    }
    Ok(())
}

#[cfg(feature = "parallel")]
fn configure_pool(jobs: usize) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build_global()
        .context("configuring worker pool")
}

#[cfg(not(feature = "parallel"))]
fn configure_pool(_jobs: usize) -> Result<()> {
    eprintln!("built without the `parallel` feature; --jobs ignored");
    Ok(())
}

/// Regenerate the noisy measurement stream of a run (same seeds as the run).
fn replay_measurements(cfg: &ScenarioConfig, run_index: u64) -> Result<Vec<TimedMeasurement>> {
    let (true_inertia, mut truth) = sample_scenario(cfg, run_index)?;
    let model = cfg.measurement_model();
    let noise = NoiseModel::new(cfg.sigma_vector(), noise_seed(cfg.mc.base_seed, run_index));
    let mut stream = noise.stream();
    let dt = cfg.sim.dt;
    let steps_per_epoch = (cfg.measurement.period / dt).round() as usize;
    let n_epochs = (cfg.sim.duration / cfg.measurement.period + 1e-9).floor() as usize + 1;
    let mut out = Vec::with_capacity(n_epochs);
    for k in 0..n_epochs {
        let time = k as f64 * cfg.measurement.period;
        out.push(TimedMeasurement { time, pose: stream.perturb(&model.apply(&truth.pose)) });
        if k + 1 < n_epochs {
            for _ in 0..steps_per_epoch {
                truth = integrate_step(&truth, &true_inertia, dt);
            }
        }
    }
    Ok(out)
}
