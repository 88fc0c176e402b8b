//! Command-line interface.
//!
//! Exit codes: 0 success, 1 a maneuver or study check failed, 2 usage,
//! configuration or I/O error, 3 the simulation diverged, 4 hover trim is
//! infeasible.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use quadplane_core::actuation::ActuatorLimits;
use quadplane_core::dynamics::full_eom;
use quadplane_core::input::{ActuatorRates, ControlInputVector};
use quadplane_core::params::{VehicleParams, GRAVITY};
use quadplane_core::sim::{
    compute_metrics, hover_trim, maneuver_checks, run_closed_loop, ManeuverKind, ManeuverScript,
    Outcome,
};
use quadplane_core::study::warm_start_study;

use crate::config::Config;
use crate::output;
use crate::StdClock;

pub const EXIT_CHECKS_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_DIVERGED: u8 = 3;
pub const EXIT_TRIM_INFEASIBLE: u8 = 4;

#[derive(Debug, Parser)]
#[command(name = "quadplane", version, about = "Tilt-rotor quad-plane controller simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// TOML configuration file. The built-in defaults are used when omitted.
    #[arg(long, short)]
    pub config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set vehicle.mass=2.6`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fly a maneuver in closed loop and write the log, metrics and plot data.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, short, value_parser = ["hover", "transition-1", "transition-2"])]
        maneuver: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory, created if absent.
        #[arg(long, short, env = "QUADPLANE_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Compare warm and cold solver starts over random allocation problems.
    Study {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short, env = "QUADPLANE_OUT_DIR", default_value = "out")]
        out: PathBuf,
    },
    /// Check a configuration file.
    Validate {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Print the hover trim solution.
    Trim {
        #[command(flatten)]
        config: ConfigArgs,
    },
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn load(args: &ConfigArgs) -> Result<Config, ExitCode> {
    Config::load(args.config.as_deref(), &args.overrides).map_err(|e| fail(EXIT_USAGE, e))
}

fn validated(mut config: Config, edit: impl FnOnce(&mut Config)) -> Result<Config, ExitCode> {
    edit(&mut config);
    config.validate().map_err(|e| fail(EXIT_USAGE, e))?;
    Ok(config)
}

fn create_dir(dir: &Path) -> Result<(), ExitCode> {
    fs::create_dir_all(dir)
        .map_err(|e| fail(EXIT_USAGE, format!("cannot create {}: {e}", dir.display())))
}

pub fn main() -> ExitCode {
    run(Cli::parse())
}

pub fn run(cli: Cli) -> ExitCode {
    let result = match cli.command {
        Command::Run {
            config,
            maneuver,
            seed,
            out,
        } => cmd_run(&config, &maneuver, seed, &out),
        Command::Study {
            config,
            instances,
            seed,
            out,
        } => cmd_study(&config, instances, seed, &out),
        Command::Validate { config } => cmd_validate(&config),
        Command::Trim { config } => cmd_trim(&config),
    };
    result.unwrap_or_else(|code| code)
}

fn cmd_run(args: &ConfigArgs, maneuver: &str, seed: Option<u64>, out: &Path) -> Result<ExitCode, ExitCode> {
    let config = validated(load(args)?, |c| {
        if let Some(s) = seed {
            c.sim.seed = s;
        }
    })?;
    let kind = ManeuverKind::from_name(maneuver)
        .ok_or_else(|| fail(EXIT_USAGE, format!("unknown maneuver `{maneuver}`")))?;
    let setup = config.setup();
    let script = ManeuverScript::for_kind(kind);
    let result = match run_closed_loop(&setup, &script, &StdClock::new()) {
        Ok(r) => r,
        Err(e @ quadplane_core::Error::TrimInfeasible { .. }) => return Err(fail(EXIT_TRIM_INFEASIBLE, e)),
        Err(e) => return Err(fail(EXIT_USAGE, e)),
    };

    create_dir(out)?;
    let metrics = compute_metrics(&result, &setup);
    let checks = maneuver_checks(kind, &metrics);
    let written = (|| -> anyhow::Result<()> {
        output::write_log(&out.join(output::LOG_FILE), &result.records)?;
        output::write_timing(&out.join(output::TIMING_FILE), &result)?;
        output::write_plots(&out.join(output::PLOT_DIR), &result)?;
        let text = output::metrics_text(kind.name(), &result.outcome, &metrics, &checks)?;
        fs::write(out.join(output::METRICS_FILE), text)?;
        Ok(())
    })();
    if let Err(e) = written {
        return Err(fail(EXIT_USAGE, format!("{e:#}")));
    }

    println!("maneuver {}: {}", kind.name(), output::outcome_text(&result.outcome));
    for c in &checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    println!(
        "solver time p95 {:.3} ms, control rate {:.0} Hz",
        metrics.solver_time_p95 * 1e3,
        metrics.control_rate_hz
    );
    println!("outputs in {}", out.display());

    if let Outcome::Diverged { time, reason } = &result.outcome {
        let last_good = result.records.last().map_or(0.0, |r| r.time);
        eprintln!("error: diverged at t = {time:.3} s ({reason}); last good state at t = {last_good:.3} s");
        return Ok(ExitCode::from(EXIT_DIVERGED));
    }
    Ok(if checks.iter().all(|c| c.passed) {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECKS_FAILED)
    })
}

fn cmd_study(
    args: &ConfigArgs,
    instances: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<ExitCode, ExitCode> {
    let config = validated(load(args)?, |c| {
        if let Some(n) = instances {
            c.study.instances = n;
        }
        if let Some(s) = seed {
            c.study.seed = s;
        }
    })?;
    let table = warm_start_study(
        &config.vehicle,
        &config.controller.allocation,
        &config.actuator_limits,
        &config.study,
    )
    .map_err(|e| fail(EXIT_USAGE, e))?;
    create_dir(out)?;
    let text = output::study_text(&table);
    fs::write(out.join(output::STUDY_TABLE_FILE), &text)
        .map_err(|e| fail(EXIT_USAGE, format!("cannot write study table: {e}")))?;
    output::write_study_csv(&out.join(output::STUDY_CSV_FILE), &table)
        .map_err(|e| fail(EXIT_USAGE, format!("{e:#}")))?;
    print!("{text}");
    let ordered = table
        .rows
        .iter()
        .all(|r| r.warm_residual.median <= r.cold_residual.median);
    println!(
        "{} warm-start median residual <= cold-start median at every cap",
        if ordered { "PASS" } else { "FAIL" }
    );
    Ok(if ordered {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECKS_FAILED)
    })
}

fn cmd_validate(args: &ConfigArgs) -> Result<ExitCode, ExitCode> {
    validated(load(args)?, |_| {})?;
    let origin = args
        .config
        .as_ref()
        .map_or_else(|| "built-in defaults".to_string(), |p| p.display().to_string());
    println!("{origin}: ok");
    Ok(ExitCode::SUCCESS)
}

fn max_total_thrust(params: &VehicleParams, limits: &ActuatorLimits) -> f64 {
    4.0 * params.propeller.k_thrust0 * limits.omega_max * limits.omega_max
}

fn cmd_trim(args: &ConfigArgs) -> Result<ExitCode, ExitCode> {
    let config = validated(load(args)?, |_| {})?;
    let p = &config.vehicle;
    let limits = &config.actuator_limits;
    let weight = p.mass * GRAVITY;
    match hover_trim(p, limits, config.sim.initial_altitude) {
        Err(quadplane_core::Error::TrimInfeasible { required, max }) => {
            eprintln!(
                "error: hover trim infeasible for mass {} kg: required rotor speed {required:.1} rad/s exceeds omega_max {max:.1} rad/s \
                 (maximum static thrust {:.2} N < weight {weight:.2} N)",
                p.mass,
                max_total_thrust(p, limits),
            );
            Err(ExitCode::from(EXIT_TRIM_INFEASIBLE))
        }
        Err(e) => Err(fail(EXIT_USAGE, e)),
        Ok((state, actuators)) => {
            let u = ControlInputVector::from_parts(&actuators, 0.0, 0.0);
            let residual = full_eom(&state, &u, &ActuatorRates::default(), p).norm();
            let omega = u.omega(0);
            println!("mass {} kg, weight {weight:.4} N", p.mass);
            println!("hover rotor speed {omega:.2} rad/s");
            println!("thrust per rotor {:.4} N", p.propeller.k_thrust0 * omega * omega);
            println!("thrust margin {:.1} %", 100.0 * (max_total_thrust(p, limits) / weight - 1.0));
            println!("trim residual {residual:.3e}");
            if residual < 1e-8 {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("error: trim residual {residual:e} exceeds 1e-8");
                Ok(ExitCode::from(EXIT_CHECKS_FAILED))
            }
        }
    }
}
