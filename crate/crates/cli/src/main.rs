//! `bridge`: batch runs of the two-cable suspension bridge model.

mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use bridge_core::stability::{
    build_initial_conditions, classify, find_threshold, sweep, sweep_csv, SweepPoint, ThresholdSummary,
};
use bridge_core::{integrate, ExcitationSpec, IntegratorSettings, Method, ModalState, SweepParam, ThresholdRequest};

use config::{Overrides, RunConfig};
use error::Failure;
use output::{plot_script, timeseries_csv, OutDir, PLOT_FILE, TIMESERIES_FILE};

/// Worker threads for sweeps; unset or 0 uses one per CPU.
const WORKERS_ENV: &str = "BRIDGE_WORKERS";

#[derive(Parser, Debug)]
#[command(
    name = "bridge",
    version,
    about = "Suspension bridge torsional instability simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate one excitation and write the modal time series.
    Simulate {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        excitation: Excitation,
        /// Skip the plot script.
        #[arg(long)]
        no_plot: bool,
    },
    /// Bisect for the excitation amplitude at which torsion becomes unstable.
    Threshold {
        #[command(flatten)]
        shared: Shared,
        #[arg(long, default_value_t = 9)]
        mode: usize,
        /// Stable and unstable amplitudes [m], as `lo,hi`.
        #[arg(long, value_parser = parse_pair, default_value = "0.5,6.0")]
        bracket: (f64, f64),
        /// Bracket width at which bisection stops [m].
        #[arg(long, default_value_t = 0.02)]
        resolution: f64,
        #[arg(long, default_value_t = 1e-3)]
        background_ratio: f64,
    },
    /// Classify the same excitation across values of one parameter.
    Sweep {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        excitation: Excitation,
        /// One of f, I, K, J, M, A.
        #[arg(long)]
        param: String,
        /// Comma-separated values in SI units.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Report energy drift at the configured and at three tolerance decades.
    EnergyAudit {
        #[command(flatten)]
        shared: Shared,
        #[command(flatten)]
        excitation: Excitation,
    },
    /// Print the constants derived from the mechanical parameters.
    ParamsDerive {
        #[command(flatten)]
        shared: Shared,
    },
}

#[derive(Args, Debug, Clone)]
struct Shared {
    /// `key = value` config file; missing keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Longitudinal and torsional mode counts, as `Nw,Ntheta`.
    #[arg(long, value_parser = parse_modes)]
    modes: Option<(usize, usize)>,
    #[arg(long)]
    t_end: Option<f64>,
    #[arg(long)]
    output_dt: Option<f64>,
    #[arg(long)]
    rel_tol: Option<f64>,
    #[arg(long)]
    abs_tol: Option<f64>,
    /// explicit_rk or tr_bdf2.
    #[arg(long)]
    method: Option<Method>,
}

impl Shared {
    fn resolve(&self) -> Result<RunConfig, Failure> {
        let mut cfg = RunConfig::load(self.config.as_deref())?;
        Overrides {
            modes: self.modes,
            t_end: self.t_end,
            output_dt: self.output_dt,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            method: self.method,
        }
        .apply(&mut cfg);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args, Debug, Clone, Copy)]
struct Excitation {
    /// Excited longitudinal mode, 1-based.
    #[arg(long, default_value_t = 9)]
    mode: usize,
    /// Initial amplitude of the excited mode [m].
    #[arg(long, default_value_t = 0.75)]
    amplitude: f64,
    #[arg(long, default_value_t = 1e-3)]
    background_ratio: f64,
}

impl Excitation {
    fn spec(&self) -> ExcitationSpec {
        ExcitationSpec {
            mode: self.mode,
            amplitude_bar: self.amplitude,
            background_ratio: self.background_ratio,
        }
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("not a number: `{v}`"));
    Ok((num(a)?, num(b)?))
}

fn parse_modes(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected `Nw,Ntheta`, got `{s}`"))?;
    let num = |v: &str| v.trim().parse::<usize>().map_err(|_| format!("not a count: `{v}`"));
    Ok((num(a)?, num(b)?))
}

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(f) = run(cli.command, &argv) {
        eprintln!("bridge: {f}");
        std::process::exit(f.exit_code());
    }
}

fn run(command: Command, argv: &[String]) -> Result<(), Failure> {
    let started = Instant::now();
    match command {
        Command::Simulate {
            shared,
            excitation,
            no_plot,
        } => {
            let cfg = shared.resolve()?;
            let mut out = OutDir::create(&shared.out)?;
            simulate(&cfg, &excitation, !no_plot, &mut out)?;
            out.finish("simulate", argv, &cfg, started.elapsed().as_secs_f64())
        }
        Command::Threshold {
            shared,
            mode,
            bracket,
            resolution,
            background_ratio,
        } => {
            let cfg = shared.resolve()?;
            let request = ThresholdRequest {
                background_ratio,
                ..ThresholdRequest::new(mode, bracket.0, bracket.1, resolution)
            };
            let model = cfg.model()?;
            let result = find_threshold(&model, &request, &cfg.integrator, &cfg.classifier)?;
            println!(
                "mode {mode}: threshold {:.4} m, bracket [{:.4}, {:.4}] after {} bisections",
                result.threshold_bar, result.bracket.0, result.bracket.1, result.iterations
            );
            let mut out = OutDir::create(&shared.out)?;
            out.write_json(
                "threshold.json",
                &ThresholdSummary::new(&result, &cfg.integrator, &cfg.classifier),
            )?;
            out.finish("threshold", argv, &cfg, started.elapsed().as_secs_f64())
        }
        Command::Sweep {
            shared,
            excitation,
            param,
            values,
        } => {
            let param: SweepParam = param.parse().map_err(|e| Failure::BadParam(format!("{e}")))?;
            let cfg = shared.resolve()?;
            let mut out = OutDir::create(&shared.out)?;
            run_sweep(&cfg, &excitation, param, &values, &mut out)?;
            out.finish("sweep", argv, &cfg, started.elapsed().as_secs_f64())
        }
        Command::EnergyAudit { shared, excitation } => {
            let cfg = shared.resolve()?;
            let mut out = OutDir::create(&shared.out)?;
            energy_audit(&cfg, &excitation, &mut out)?;
            out.finish("energy-audit", argv, &cfg, started.elapsed().as_secs_f64())
        }
        Command::ParamsDerive { shared } => {
            let cfg = shared.resolve()?;
            let mut out = OutDir::create(&shared.out)?;
            params_derive(&cfg, &mut out)?;
            out.finish("params-derive", argv, &cfg, started.elapsed().as_secs_f64())
        }
    }
}

fn initial_state(cfg: &RunConfig, excitation: &Excitation) -> Result<(bridge_core::BridgeModel, ModalState), Failure> {
    let model = cfg.model()?;
    // A zero amplitude is the rest state itself.
    let state = if excitation.amplitude == 0.0 {
        ModalState::zeros(model.config)
    } else {
        build_initial_conditions(&model, &excitation.spec())?
    };
    Ok((model, state))
}

fn simulate(cfg: &RunConfig, excitation: &Excitation, plot: bool, out: &mut OutDir) -> Result<(), Failure> {
    let (model, state) = initial_state(cfg, excitation)?;
    let traj = integrate(&model, &state, &cfg.integrator)?;
    let verdict = classify(&traj, &cfg.classifier);
    out.write(TIMESERIES_FILE, &timeseries_csv(&traj))?;
    out.write_json("verdict.json", &verdict)?;
    if plot {
        out.write(PLOT_FILE, &plot_script())?;
    }
    println!(
        "{} samples to t = {} s; {verdict}; onset {}; max energy drift {:.3e}",
        traj.times.len(),
        traj.t_end(),
        verdict.onset_time.map_or("none".to_string(), |t| format!("{t:.1} s")),
        traj.max_relative_drift()
    );
    Ok(())
}

#[derive(Serialize)]
struct SweepReport<'a> {
    param: &'a str,
    baseline_value: f64,
    excitation: ExcitationSpec,
    solver_settings: IntegratorSettings,
    reference_window_fraction: f64,
    growth_threshold: f64,
    points: &'a [SweepPoint],
}

fn workers() -> Result<usize, Failure> {
    match std::env::var(WORKERS_ENV) {
        Err(_) => Ok(0),
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Failure::Config(format!("{WORKERS_ENV} must be a count, got `{v}`"))),
    }
}

fn run_sweep(
    cfg: &RunConfig,
    excitation: &Excitation,
    param: SweepParam,
    values: &[f64],
    out: &mut OutDir,
) -> Result<(), Failure> {
    let mut base = cfg.params;
    let baseline = *base.field_mut(param);
    let mut all = Vec::with_capacity(values.len() + 1);
    if !values.contains(&baseline) {
        all.push(baseline);
    }
    all.extend_from_slice(values);
    for &v in &all {
        let mut p = cfg.params;
        *p.field_mut(param) = v;
        p.validated()
            .map_err(|e| Failure::BadParam(format!("{param} = {v}: {e}")))?;
    }
    excitation.spec().validate(cfg.modes)?;
    let points = sweep(
        &cfg.params,
        cfg.modes,
        param,
        &all,
        &excitation.spec(),
        &cfg.integrator,
        &cfg.classifier,
        workers()?,
    )?;
    for p in &points {
        println!(
            "{param} = {}{}: {}",
            p.value,
            if p.is_baseline { " (baseline)" } else { "" },
            p.verdict
        );
    }
    out.write("sweep.csv", &sweep_csv(param, &points))?;
    out.write_json(
        "sweep.json",
        &SweepReport {
            param: param.symbol(),
            baseline_value: baseline,
            excitation: excitation.spec(),
            solver_settings: cfg.integrator,
            reference_window_fraction: cfg.classifier.reference_window_fraction,
            growth_threshold: cfg.classifier.growth_threshold,
            points: &points,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct DriftRow {
    rel_tol: f64,
    abs_tol: f64,
    max_relative_drift: f64,
    max_absolute_drift_j: f64,
    rhs_evals: usize,
}

#[derive(Serialize)]
struct EnergyAudit {
    excitation: ExcitationSpec,
    initial_energy_above_rest_j: f64,
    rest_energy_j: f64,
    configured: DriftRow,
    decades: Vec<DriftRow>,
}

fn energy_audit(cfg: &RunConfig, excitation: &Excitation, out: &mut OutDir) -> Result<(), Failure> {
    let (model, state) = initial_state(cfg, excitation)?;
    let row = |settings: &IntegratorSettings| -> Result<(DriftRow, f64, f64), Failure> {
        let traj = integrate(&model, &state, settings)?;
        Ok((
            DriftRow {
                rel_tol: settings.rel_tol,
                abs_tol: settings.abs_tol,
                max_relative_drift: traj.max_relative_drift(),
                max_absolute_drift_j: traj.max_absolute_drift(),
                rhs_evals: traj.stats.rhs_evals,
            },
            traj.energy_above_rest[0],
            traj.rest_energy,
        ))
    };
    let (configured, e0, rest) = row(&cfg.integrator)?;
    let mut decades = Vec::new();
    for tol in [1e-4, 1e-6, 1e-8] {
        decades.push(row(&cfg.integrator.with_tolerance(tol))?.0);
    }
    println!("initial energy above rest {e0:.6e} J (rest state {rest:.6e} J)");
    println!(
        "configured rel_tol {:e}: max relative drift {:.3e}",
        configured.rel_tol, configured.max_relative_drift
    );
    println!(
        "{:>10} {:>10} {:>14} {:>10}",
        "rel_tol", "abs_tol", "rel. drift", "rhs evals"
    );
    for d in &decades {
        println!(
            "{:>10.0e} {:>10.0e} {:>14.3e} {:>10}",
            d.rel_tol, d.abs_tol, d.max_relative_drift, d.rhs_evals
        );
    }
    out.write_json(
        "energy_audit.json",
        &EnergyAudit {
            excitation: excitation.spec(),
            initial_energy_above_rest_j: e0,
            rest_energy_j: rest,
            configured,
            decades,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct Derived {
    horizontal_tension_n: f64,
    dead_load_per_cable_n_per_m: f64,
    cable_length_m: f64,
    xi_bar: f64,
    cable_axial_stiffness_n: f64,
    gravity_m_per_s2: f64,
}

fn params_derive(cfg: &RunConfig, out: &mut OutDir) -> Result<(), Failure> {
    let model = cfg.model()?;
    let d = model.derived;
    let p = cfg.params;
    let derived = Derived {
        horizontal_tension_n: d.h,
        dead_load_per_cable_n_per_m: d.q,
        cable_length_m: d.l_c,
        xi_bar: d.xi_bar,
        cable_axial_stiffness_n: p.a * p.e_c / d.l_c,
        gravity_m_per_s2: p.gravity,
    };
    println!("H      = {:.3} kN", d.h / 1e3);
    println!("q      = {:.3} N/m", d.q);
    println!("L_c    = {:.6} m", d.l_c);
    println!("xi_bar = {:.9}", d.xi_bar);
    println!("AE_c/L_c = {:.6e} N", derived.cable_axial_stiffness_n);
    println!("g      = {} m/s^2", p.gravity);
    out.write_json("derived.json", &derived)?;
    Ok(())
}
