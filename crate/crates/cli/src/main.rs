use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lal_core::acceptance::run_suite;
use lal_core::control::{control_bound_report, ControlBoundReport};
use lal_core::dynamics::{energy_report, simulate_leray, ControlSignal, OseenDrift};
use lal_core::experiments::{alpha_sweep, Testbed};
use lal_core::io::{
    control_record, load_config, write_run_artifacts, ArtifactWriter, RunConfig, RunRecord,
};
use lal_core::nonlinear::{
    control_to_trajectory, fixed_point_control, large_time_control, verify_null, FixedPointResult,
};
use lal_core::spectral::SpectralField;
use lal_core::{Error, Result};

#[derive(Parser)]
#[command(
    name = "lal",
    version,
    about = "Leray-alpha null-control lab on the 2D torus"
)]
struct Cli {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `output.directory`.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Uncontrolled Leray-alpha run.
    Simulate,
    /// Fixed-point null control, checked on the nonlinear system.
    Control,
    /// Control to an uncontrolled target trajectory.
    Track,
    /// Coast until the state is small, then control.
    Largetime,
    /// Fixed-point control over the configured list of alphas.
    Sweep,
    /// Acceptance suite.
    Verify {
        /// Criterion tags or numbers to run; all when omitted.
        #[arg(long = "tag")]
        tags: Vec<String>,
    },
}

fn threads() -> Option<usize> {
    std::env::var("LAL_THREADS")
        .ok()
        .and_then(|s| s.trim().parse().ok())
        .filter(|&n| n > 0)
}

fn history_csv(r: &FixedPointResult) -> String {
    let mut s = String::from("iteration,control_linf_l2,difference,sigma_norm_max,oseen_terminal_norm,cg_iters,relaxation\n");
    for (k, h) in r.history.iter().enumerate() {
        let _ = writeln!(
            s,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.16e}",
            k + 1,
            h.control_linf_l2,
            h.difference,
            h.sigma_norm_max,
            h.oseen_terminal_norm,
            h.cg_iters,
            h.relaxation
        );
    }
    s
}

fn bound_report(
    v: &ControlSignal,
    h: &OseenDrift,
    y0: &SpectralField,
) -> Result<ControlBoundReport> {
    if y0.norm() == 0.0 {
        return Ok(ControlBoundReport {
            linf_l2_norm: v.linf_l2(),
            drift_sup: h.sup_norm(),
            fitted_k: f64::NEG_INFINITY,
        });
    }
    control_bound_report(v, h, y0)
}

/// Control artifacts shared by `control`, `track` and `largetime`.
fn write_control(
    w: &mut ArtifactWriter,
    cfg: &RunConfig,
    y0: &SpectralField,
    r: &FixedPointResult,
    terminal_norm: f64,
) -> Result<()> {
    if cfg.output.wants("csv") {
        w.write_text("fixed_point_history.csv", &history_csv(r))?;
    }
    let last = r.history.last();
    let bound = bound_report(&r.v, &r.drift, y0)?;
    let record = control_record(
        cfg.control.epsilon,
        last.map_or(0, |h| h.cg_iters),
        terminal_norm,
        last.map_or(0.0, |h| h.cost),
        &bound,
    );
    if cfg.output.wants("json") {
        w.write_json("control_record.json", &record)?;
    }
    w.record(record)
}

fn warn_if_large(cfg: &RunConfig, y0: &SpectralField) {
    if y0.norm() > cfg.fixed_point.smallness {
        eprintln!(
            "warning: ‖y0‖ = {:.4e} exceeds the local smallness threshold {:.4e}; convergence is not expected",
            y0.norm(),
            cfg.fixed_point.smallness
        );
    }
}

fn run(cli: Cli) -> Result<i32> {
    let threads = threads();
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config {
                key: "LAL_THREADS".into(),
                reason: e.to_string(),
            })?;
    }
    let mut cfg = match &cli.config {
        Some(path) => load_config(path)?,
        None => RunConfig::default(),
    };
    if let Some(dir) = cli.output {
        cfg.output.directory = dir;
    }
    let basis = cfg.basis()?;
    let g = cfg.time_grid()?;
    let p = cfg.filter()?;
    let mask = cfg.mask()?;
    let y0 = cfg.initial_condition.build(&basis)?;
    let mut w = ArtifactWriter::new(&cfg.output.directory)?;
    let fp = cfg.fixed_point();

    let (name, code) = match cli.command {
        Command::Simulate => {
            let tr = simulate_leray(&y0, &ControlSignal::zeros(g, &mask), p, g)?;
            write_run_artifacts(&mut w, &cfg, "", &tr, None)?;
            let report = energy_report(&tr, None, p);
            if cfg.output.wants("json") {
                w.write_json("energy_report.json", &report)?;
            }
            println!(
                "terminal ‖y(T)‖ = {:.6e}, max energy residual {:.3e}",
                tr.terminal().norm(),
                report.max_abs_residual()
            );
            w.record(serde_json::json!({
                "alpha": p.alpha,
                "terminal_norm": tr.terminal().norm(),
                "max_energy_residual": report.max_abs_residual(),
            }))?;
            ("simulate", 0)
        }
        Command::Control => {
            warn_if_large(&cfg, &y0);
            let r = fixed_point_control(&y0, p, &fp, &mask, g)?;
            let check = verify_null(&y0, &r.v, p, g)?;
            write_run_artifacts(&mut w, &cfg, "", &check.trajectory, Some(&r.v))?;
            write_control(&mut w, &cfg, &y0, &r, check.terminal_norm)?;
            let record = RunRecord {
                alpha: p.alpha,
                epsilon: cfg.control.epsilon,
                iters: r.iters,
                converged: r.converged,
                terminal_norm: check.terminal_norm,
                control_linf_l2: r.v.linf_l2(),
                sigma_ball_max: r.sigma_ball_max,
                t0: None,
            };
            if cfg.output.wants("json") {
                w.write_json("run_record.json", &record)?;
            }
            w.record(&record)?;
            println!(
                "converged {} in {} iterations, ‖v‖ = {:.6e}, nonlinear ‖y(T)‖ = {:.6e}",
                r.converged,
                r.iters,
                r.v.linf_l2(),
                check.terminal_norm
            );
            ("control", if r.converged { 0 } else { 2 })
        }
        Command::Track => {
            let target0 = cfg.track.target.build(&basis)?;
            let target = simulate_leray(&target0, &ControlSignal::zeros(g, &mask), p, g)?;
            let r = control_to_trajectory(&y0, &target, p, &fp, &mask, g)?;
            let check = verify_null(&y0, &r.v, p, g)?;
            let error = check.trajectory.terminal().sub(target.terminal()).norm();
            write_run_artifacts(&mut w, &cfg, "", &check.trajectory, Some(&r.v))?;
            write_run_artifacts(&mut w, &cfg, "target_", &target, None)?;
            let record = serde_json::json!({
                "alpha": p.alpha,
                "epsilon": cfg.control.epsilon,
                "iters": r.iters,
                "converged": r.converged,
                "tracking_error": error,
                "initial_offset": y0.sub(&target0).norm(),
                "control_linf_l2": r.v.linf_l2(),
            });
            if cfg.output.wants("json") {
                w.write_json("run_record.json", &record)?;
            }
            w.record(record)?;
            println!(
                "converged {} in {} iterations, ‖y(T) - ŷ(T)‖ = {:.6e}",
                r.converged, r.iters, error
            );
            ("track", if r.converged { 0 } else { 2 })
        }
        Command::Largetime => {
            let r = large_time_control(
                &y0,
                p,
                cfg.large_time.threshold,
                cfg.large_time.max_coast,
                &fp,
                &mask,
                g,
            )?;
            let mut curve = String::from("t,l2_norm\n");
            for (n, x) in r.decay_curve.iter().enumerate() {
                let _ = writeln!(curve, "{:.16e},{:.16e}", n as f64 * g.dt(), x);
            }
            if cfg.output.wants("csv") {
                w.write_text("decay_curve.csv", &curve)?;
            }
            let code = match (&r.v, &r.control) {
                (Some(v), Some(control)) => {
                    let check = verify_null(&y0, v, p, v.grid())?;
                    write_run_artifacts(&mut w, &cfg, "", &check.trajectory, Some(v))?;
                    let start = control.trajectory.initial().clone();
                    write_control(&mut w, &cfg, &start, control, check.terminal_norm)?;
                    let record = RunRecord {
                        alpha: p.alpha,
                        epsilon: cfg.control.epsilon,
                        iters: control.iters,
                        converged: control.converged,
                        terminal_norm: check.terminal_norm,
                        control_linf_l2: v.linf_l2(),
                        sigma_ball_max: control.sigma_ball_max,
                        t0: r.t0,
                    };
                    if cfg.output.wants("json") {
                        w.write_json("run_record.json", &record)?;
                    }
                    w.record(&record)?;
                    println!(
                        "T0 = {:.6}, converged {} in {} iterations, nonlinear ‖y(T0 + T)‖ = {:.6e}",
                        r.t0.unwrap_or(0.0),
                        control.converged,
                        control.iters,
                        check.terminal_norm
                    );
                    if control.converged {
                        0
                    } else {
                        2
                    }
                }
                _ => {
                    eprintln!(
                        "coasting horizon exhausted before ‖y‖ <= {}",
                        cfg.large_time.threshold
                    );
                    2
                }
            };
            ("largetime", code)
        }
        Command::Sweep => {
            warn_if_large(&cfg, &y0);
            let bed = Testbed {
                basis: basis.clone(),
                mask,
                grid: g,
            };
            let report = alpha_sweep(&y0, &bed, &fp, &cfg.sweep.alphas)?;
            if cfg.output.wants("csv") {
                w.write_text("sweep.csv", &report.to_csv())?;
            }
            if cfg.output.wants("json") {
                w.write_json("sweep.json", &report)?;
            }
            w.record(&report)?;
            print!("{}", report.to_csv());
            let flagged = report.rows.iter().filter(|r| !r.converged).count();
            if flagged > 0 {
                eprintln!("{flagged} sweep member(s) did not converge");
            }
            ("sweep", if flagged == 0 { 0 } else { 2 })
        }
        Command::Verify { tags } => {
            let records = run_suite(&tags, threads.unwrap_or_else(rayon::current_num_threads));
            for r in &records {
                println!("{}", r.line());
            }
            w.write_json("acceptance.json", &records)?;
            for r in &records {
                w.record(r)?;
            }
            let failed = records.iter().filter(|r| !r.pass).count();
            println!(
                "{} of {} criteria passed",
                records.len() - failed,
                records.len()
            );
            ("verify", if failed == 0 { 0 } else { 3 })
        }
    };
    w.finish(name, &cfg, threads)?;
    Ok(code)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
