//! Log, metrics, plot-data and study-table writers.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use quadplane_core::sim::{log_header, Check, LogRecord, Metrics, Outcome, SimResult};
use quadplane_core::study::StudyTable;

pub const LOG_FILE: &str = "log.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const METRICS_FILE: &str = "metrics.txt";
pub const PLOT_DIR: &str = "plots";
pub const STUDY_TABLE_FILE: &str = "study.txt";
pub const STUDY_CSV_FILE: &str = "study.csv";

fn create(path: &Path) -> Result<BufWriter<File>> {
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(BufWriter::new(f))
}

/// One row per control step, one column per record field.
pub fn write_log(path: &Path, records: &[LogRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(log_header())?;
    for r in records {
        w.write_record(r.values())?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock solver and controller-step times. Kept apart from the log
/// because they differ between runs.
pub fn write_timing(path: &Path, result: &SimResult) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record(["time", "solver_time", "step_time"])?;
    for ((r, s), t) in result.records.iter().zip(&result.solver_times).zip(&result.step_times) {
        w.write_record([r.time.to_string(), s.to_string(), t.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CheckRow<'a> {
    name: &'a str,
    passed: bool,
    detail: &'a str,
}

#[derive(Serialize)]
struct Report<'a> {
    maneuver: &'a str,
    outcome: String,
    passed: bool,
    metrics: &'a Metrics,
    checks: Vec<CheckRow<'a>>,
}

pub fn outcome_text(outcome: &Outcome) -> String {
    match outcome {
        Outcome::Completed => "completed".into(),
        Outcome::Diverged { time, reason } => format!("diverged at t = {time:.3} s: {reason}"),
    }
}

/// Metrics and checks as TOML.
pub fn metrics_text(maneuver: &str, outcome: &Outcome, metrics: &Metrics, checks: &[Check]) -> Result<String> {
    let report = Report {
        maneuver,
        outcome: outcome_text(outcome),
        passed: checks.iter().all(|c| c.passed),
        metrics,
        checks: checks
            .iter()
            .map(|c| CheckRow {
                name: c.name,
                passed: c.passed,
                detail: &c.detail,
            })
            .collect(),
    };
    Ok(toml::to_string(&report)?)
}

fn write_series(path: &Path, points: impl Iterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = create(path)?;
    for (t, v) in points {
        writeln!(w, "{t} {v}")?;
    }
    w.flush()?;
    Ok(())
}

/// Two-column `time value` files, one per plotted signal.
pub fn write_plots(dir: &Path, result: &SimResult) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let recs = &result.records;
    type Signal = fn(&LogRecord) -> f64;
    let signals: [(&str, Signal); 16] = [
        ("altitude", |r| -r.state.pos.z),
        ("forward_speed", |r| r.state.vel_control().x),
        ("lateral_speed", |r| r.state.vel_control().y),
        ("vertical_speed", |r| r.state.vel_control().z),
        ("airspeed", |r| r.air.airspeed),
        ("alpha_deg", |r| r.air.alpha.to_degrees()),
        ("beta_deg", |r| r.air.beta.to_degrees()),
        ("roll_deg", |r| r.state.att.phi.to_degrees()),
        ("pitch_deg", |r| r.state.att.theta.to_degrees()),
        ("yaw_deg", |r| r.state.att.psi.to_degrees()),
        ("roll_cmd_deg", |r| r.command[quadplane_core::input::PHI_V].to_degrees()),
        ("pitch_cmd_deg", |r| r.command[quadplane_core::input::THETA_V].to_degrees()),
        ("pitch_min_deg", |r| r.theta_min.to_degrees()),
        ("pitch_max_deg", |r| r.theta_max.to_degrees()),
        ("aileron_deg", |r| r.actual[quadplane_core::input::AILERON].to_degrees()),
        ("residual_norm", |r| r.residual_norm),
    ];
    for (name, f) in signals {
        write_series(&dir.join(format!("{name}.dat")), recs.iter().map(|r| (r.time, f(r))))?;
    }
    for i in 0..quadplane_core::input::NUM_ROTORS {
        let n = i + 1;
        write_series(&dir.join(format!("omega_{n}.dat")), recs.iter().map(|r| (r.time, r.actual[i])))?;
        write_series(
            &dir.join(format!("elevation_{n}_deg.dat")),
            recs.iter().map(|r| (r.time, r.actual[4 + i].to_degrees())),
        )?;
        write_series(
            &dir.join(format!("azimuth_{n}_deg.dat")),
            recs.iter().map(|r| (r.time, r.actual[8 + i].to_degrees())),
        )?;
    }
    write_series(
        &dir.join("solver_time_ms.dat"),
        recs.iter().zip(&result.solver_times).map(|(r, s)| (r.time, s * 1e3)),
    )?;
    Ok(())
}

/// Human-readable study table.
pub fn study_text(t: &StudyTable) -> String {
    let mut s = String::new();
    s.push_str(&format!("instances: {}\n\n", t.instances));
    s.push_str(&format!(
        "{:>5}  {:>34}  {:>34}  {:>11}  {:>11}\n",
        "cap", "warm residual q1 / median / q3", "cold residual q1 / median / q3", "warm cost", "cold cost"
    ));
    for r in &t.rows {
        let q = |x: &quadplane_core::study::Quartiles| format!("{:.3e} / {:.3e} / {:.3e}", x.q1, x.median, x.q3);
        s.push_str(&format!(
            "{:>5}  {:>34}  {:>34}  {:>11.3e}  {:>11.3e}\n",
            r.cap,
            q(&r.warm_residual),
            q(&r.cold_residual),
            r.warm_cost.median,
            r.cold_cost.median
        ));
    }
    s.push_str(&format!(
        "\niterations to tolerance (cap {}): warm median {}, cold median {}\n",
        t.convergence_cap, t.warm_iterations.median, t.cold_iterations.median
    ));
    s.push_str(&format!(
        "converged residual: warm median {:.4e}, cold median {:.4e}\n",
        t.warm_converged_residual.median, t.cold_converged_residual.median
    ));
    s
}

pub fn write_study_csv(path: &Path, t: &StudyTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(create(path)?);
    w.write_record([
        "cap",
        "warm_residual_q1",
        "warm_residual_median",
        "warm_residual_q3",
        "cold_residual_q1",
        "cold_residual_median",
        "cold_residual_q3",
        "warm_cost_median",
        "cold_cost_median",
    ])?;
    for r in &t.rows {
        w.write_record(
            [
                r.cap as f64,
                r.warm_residual.q1,
                r.warm_residual.median,
                r.warm_residual.q3,
                r.cold_residual.q1,
                r.cold_residual.median,
                r.cold_residual.q3,
                r.warm_cost.median,
                r.cold_cost.median,
            ]
            .iter()
            .map(|x| x.to_string()),
        )?;
    }
    w.flush()?;
    Ok(())
}
