//! Command-line front end: config loading, overrides, dispatch, and outputs.
//!
//! Exit codes: 0 success, 1 usage, 2 validation, 3 numerical check, 4 I/O.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::cauchy::{self, Field};
use crate::config::{ClosureKind, Config, Experiment, KernelConfig, LoadedConfig};
use crate::error::{Error, Result};
use crate::kernel::{Closure, Kernel};
use crate::manifest::{fmt_f64, OutputDir, RunManifest};
use crate::model::{validate_assumptions, ModelSpec, SpaceGrid};
use crate::spectral::{dispersion_table, DispersionReport};
use crate::spreading::{self, FrontTrack, SpeedRunOptions};
use crate::waves::{self, Branch, IterationOptions, WaveProfile};

/// Environment variable holding the worker thread count.
pub const THREADS_ENV: &str = "AGEWAVE_THREADS";
/// Residual a converged wave must reach.
pub const WAVE_RESIDUAL_TARGET: f64 = 1e-6;
/// Band for the fitted speed over `c*`.
pub const SPEED_RATIO_BAND: (f64, f64) = (0.95, 1.05);
/// Interior level the speed run must exceed behind the front.
pub const INTERIOR_TARGET: f64 = 0.9;

#[derive(Debug, Parser)]
#[command(name = "agewave", version, about = "Waves and spreading speeds for an age-structured epidemic model")]
pub struct Cli {
    /// Directory for CSV, JSON and the manifest.
    #[arg(long, global = true, default_value = "agewave-out")]
    pub out: PathBuf,
    /// Resolve the config and write the manifest without computing anything.
    #[arg(long, global = true)]
    pub manifest_only: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the model assumptions.
    Validate { config: PathBuf },
    /// Spectral bound, critical speed and decay roots.
    Speed {
        config: PathBuf,
        /// Speeds for the dispersion table (default: c* plus 0, 0.1, 0.2, 0.5, 1).
        #[arg(long, value_delimiter = ',')]
        speeds: Option<Vec<f64>>,
    },
    /// Traveling wave by monotone iteration.
    Wave {
        config: PathBuf,
        #[arg(long, conflicts_with = "critical")]
        c: Option<f64>,
        /// Approach c* through a sequence of faster waves.
        #[arg(long)]
        critical: bool,
        #[arg(long = "L-xi", alias = "l-xi")]
        l_xi: Option<f64>,
        #[arg(long)]
        n_xi: Option<usize>,
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        max_iter: Option<usize>,
        /// Iterate up from the sub-solution instead.
        #[arg(long)]
        minimal: bool,
    },
    /// Initial-value problem along characteristics.
    Simulate {
        config: PathBuf,
        #[arg(long = "T", alias = "t-end")]
        t_end: Option<f64>,
        /// Must equal the age spacing.
        #[arg(long)]
        dt: Option<f64>,
        #[arg(long)]
        domain: Option<f64>,
        #[arg(long, value_enum)]
        closure: Option<ClosureKind>,
        #[arg(long, value_delimiter = ',')]
        snapshots: Option<Vec<f64>>,
    },
    /// Spreading experiments.
    Spread {
        config: PathBuf,
        #[arg(long, value_enum)]
        experiment: Option<Experiment>,
        #[arg(long)]
        rho: Option<f64>,
        #[arg(long)]
        c_frac: Option<f64>,
        #[arg(long = "T", alias = "t-end")]
        t_end: Option<f64>,
    },
    /// Critical speed over a grid of overrides.
    Sweep {
        config: PathBuf,
        #[arg(long, value_delimiter = ',')]
        kappa_scale: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        sigma: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        a_max: Option<Vec<f64>>,
    },
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    if let Ok(n) = std::env::var(THREADS_ENV) {
        match n.parse::<usize>() {
            Ok(n) if n > 0 => {
                // a pool configured earlier in the same process stays in place
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: {THREADS_ENV} must be a positive integer, got {n:?}");
                return 1;
            }
        }
    }
    match execute(&cli) {
        Ok(true) => 0,
        Ok(false) => 3,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs one parsed command. `Ok(false)` means a numerical check failed.
pub fn execute(cli: &Cli) -> Result<bool> {
    let start = Instant::now();
    let (name, path) = match &cli.command {
        Command::Validate { config } => ("validate", config),
        Command::Speed { config, .. } => ("speed", config),
        Command::Wave { config, .. } => ("wave", config),
        Command::Simulate { config, .. } => ("simulate", config),
        Command::Spread { config, .. } => ("spread", config),
        Command::Sweep { config, .. } => ("sweep", config),
    };
    let mut loaded = Config::load(path)?;
    apply_overrides(&mut loaded.config, &cli.command);
    let manifest = RunManifest::new(name, &loaded.source, serde_json::to_value(&loaded.config)?);
    let mut out = OutputDir::new(&cli.out, manifest)?;
    let spec = loaded.config.model(&loaded.dir)?;
    out.manifest.grids = json!({ "a_max": spec.ages().a_max(), "n_ages": spec.n_ages(), "da": spec.ages().step() });

    if cli.manifest_only {
        out.manifest.dry_run = true;
        out.finish(start.elapsed().as_secs_f64())?;
        return Ok(true);
    }

    let report = validate_assumptions(&spec);
    out.manifest.check("assumptions_passed", if report.all_passed() { 1.0 } else { 0.0 });
    if name == "validate" || !report.all_passed() {
        out.write_json("validate.json", &report)?;
        println!("{}", serde_json::to_string_pretty(&report)?);
        out.finish(start.elapsed().as_secs_f64())?;
        if !report.all_passed() {
            let failed: Vec<&str> = report.items.iter().filter(|c| !c.passed).map(|c| c.item).collect();
            return Err(Error::Validation(format!("assumptions failed: {}", failed.join(", "))));
        }
        return Ok(true);
    }

    let passed = match &cli.command {
        Command::Validate { .. } => unreachable!(),
        Command::Speed { speeds, .. } => speed(&spec, speeds.as_deref(), &mut out)?,
        Command::Wave { .. } => wave(&spec, &loaded.config, &mut out)?,
        Command::Simulate { dt, .. } => simulate(&spec, &loaded.config, *dt, &mut out)?,
        Command::Spread { .. } => spread(&spec, &loaded.config, &mut out)?,
        Command::Sweep { .. } => sweep(&loaded, &mut out)?,
    };
    out.finish(start.elapsed().as_secs_f64())?;
    Ok(passed)
}

fn apply_overrides(cfg: &mut Config, command: &Command) {
    match command {
        Command::Wave { c, critical, l_xi, n_xi, tol, max_iter, minimal, .. } => {
            let w = &mut cfg.wave;
            if c.is_some() {
                w.c = *c;
                w.critical = false;
            }
            w.critical |= *critical;
            w.l_xi = l_xi.unwrap_or(w.l_xi);
            w.n_xi = n_xi.unwrap_or(w.n_xi);
            w.tol = tol.unwrap_or(w.tol);
            w.max_iter = max_iter.unwrap_or(w.max_iter);
            if *minimal {
                w.branch = Branch::Minimal;
            }
        }
        Command::Simulate { t_end, domain, closure, snapshots, .. } => {
            let s = &mut cfg.simulate;
            s.t_end = t_end.unwrap_or(s.t_end);
            s.domain = domain.unwrap_or(s.domain);
            s.closure = closure.unwrap_or(s.closure);
            if let Some(v) = snapshots {
                s.snapshots = v.clone();
            }
        }
        Command::Spread { experiment, rho, c_frac, t_end, .. } => {
            let s = &mut cfg.spread;
            s.experiment = experiment.unwrap_or(s.experiment);
            s.rho = rho.unwrap_or(s.rho);
            s.c_frac = c_frac.unwrap_or(s.c_frac);
            s.t_end = t_end.unwrap_or(s.t_end);
        }
        Command::Sweep { kappa_scale, sigma, a_max, .. } => {
            let s = &mut cfg.sweep;
            if let Some(v) = kappa_scale {
                s.kappa_scale = v.clone();
            }
            if let Some(v) = sigma {
                s.sigma = v.clone();
            }
            if let Some(v) = a_max {
                s.a_max = v.clone();
            }
        }
        Command::Validate { .. } | Command::Speed { .. } => {}
    }
}

fn speed(spec: &ModelSpec, speeds: Option<&[f64]>, out: &mut OutputDir) -> Result<bool> {
    let report = DispersionReport::compute(spec)?;
    let speeds: Vec<f64> = match speeds {
        Some(s) => s.to_vec(),
        None => [0.0, 0.1, 0.2, 0.5, 1.0].iter().map(|d| report.c_star + d).collect(),
    };
    let table = dispersion_table(&report, &speeds)?;
    out.manifest.check("s0", report.s0);
    out.manifest.check("c_star", report.c_star);
    out.manifest.check("phi_residual", report.phi_residual);
    out.write_json("speed.json", &report)?;
    out.write_csv(
        "dispersion.csv",
        &["c", "lambda1", "lambda2", "lambda_of_c", "big_lambda_at_tangency"],
        table.iter().map(|r| vec![r.c, r.lambda1, r.lambda2, r.lambda_of_c, r.big_lambda_at_tangency]),
    )?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(true)
}

#[derive(Serialize)]
struct WaveSummary<'a> {
    c: f64,
    residual: f64,
    iterations: usize,
    m_fit: f64,
    m: f64,
    translate: f64,
    edge_errors: (f64, f64),
    monotonicity_violation: f64,
    profile: &'a WaveProfile,
    pair: Option<waves::SchemePair>,
    critical: Option<serde_json::Value>,
}

fn wave(spec: &ModelSpec, cfg: &Config, out: &mut OutputDir) -> Result<bool> {
    let w = &cfg.wave;
    let report = DispersionReport::compute(spec)?;
    let xi = SpaceGrid::new(w.l_xi, w.n_xi)?;
    let opts = IterationOptions { tol: w.tol, max_iter: w.max_iter, branch: w.branch, interpolation: w.interpolation };
    out.manifest.grids["l_xi"] = json!(w.l_xi);
    out.manifest.grids["n_xi"] = json!(w.n_xi);
    out.manifest.tolerance("iteration", w.tol);
    out.manifest.tolerance("ordering", waves::ORDERING_TOL);

    let (profile, pair, critical) = if w.critical {
        let cw = waves::critical_wave(spec, &report, &xi, &opts)?;
        let diag = json!({
            "c_star": cw.c_star,
            "speeds": cw.speeds,
            "translates": cw.translates,
            "cauchy_differences": cw.cauchy_differences,
            "contraction": cw.contraction,
            "extrapolated_gap": cw.extrapolated_gap,
        });
        (cw.profile, None, Some(diag))
    } else {
        let c = w.c.ok_or_else(|| Error::Config("wave needs a speed: set wave.c, --c or --critical".into()))?;
        let (pair, profile) = waves::traveling_wave(spec, &report, c, &xi, &opts)?;
        (profile, Some(pair), None)
    };
    let lip = waves::lipschitz_modulus_check(&profile)?;
    out.manifest.check("residual", profile.residual);
    out.manifest.check("iterations", profile.iterations as f64);
    out.manifest.check("sandwich_below_upper", profile.sandwich.below_upper);
    out.manifest.check("sandwich_above_lower", profile.sandwich.above_lower);
    out.manifest.check("m_fit", lip.m_fit);

    let (na, nx) = (profile.ages.len(), profile.xi.len());
    out.write_csv(
        "wave.csv",
        &["a", "xi", "w"],
        (0..na).flat_map(|i| {
            let p = &profile;
            (0..nx).map(move |j| vec![p.ages.node(i), p.xi.node(j), p.value(i, j)])
        }),
    )?;
    let summary = WaveSummary {
        c: profile.c,
        residual: profile.residual,
        iterations: profile.iterations,
        m_fit: lip.m_fit,
        m: lip.m,
        translate: profile.translate,
        edge_errors: profile.edge_errors(),
        monotonicity_violation: profile.monotonicity_violation(),
        profile: &profile,
        pair,
        critical,
    };
    out.write_json("wave.json", &summary)?;
    println!(
        "{}",
        serde_json::to_string_pretty(&json!({
            "residual": summary.residual,
            "iterations": summary.iterations,
            "m_fit": summary.m_fit,
            "translate": summary.translate,
        }))?
    );
    Ok(profile.residual < WAVE_RESIDUAL_TARGET
        && profile.monotonicity_violation() <= 1e-10
        && profile.sandwich.holds(waves::ORDERING_TOL))
}

fn initial_field(spec: &ModelSpec, space: &SpaceGrid, cfg: &Config) -> Result<Field> {
    let init = cfg.simulate.initial.clone();
    Field::from_fn(*spec.ages(), *space, move |_, x| init.eval(x))
}

fn simulate(spec: &ModelSpec, cfg: &Config, dt: Option<f64>, out: &mut OutputDir) -> Result<bool> {
    let s = &cfg.simulate;
    let da = spec.ages().step();
    if let Some(dt) = dt {
        if (dt - da).abs() > 1e-12 * da {
            return Err(Error::Validation(format!("--dt {dt} must equal the age spacing {da}")));
        }
    }
    let space = SpaceGrid::new(s.domain, s.n_x)?;
    let u0 = initial_field(spec, &space, cfg)?;
    let closure: Closure = s.closure.into();
    let traj = cauchy::run(&u0, spec, s.t_end, &s.snapshots, closure)?;
    out.manifest.grids["domain"] = json!(s.domain);
    out.manifest.grids["n_x"] = json!(s.n_x);
    out.manifest.grids["dt"] = json!(traj.dt);
    out.manifest.grids["closure"] = serde_json::to_value(s.closure)?;
    out.manifest.tolerance("invariance", cauchy::INVARIANCE_TOL);
    out.manifest.check("cfl", traj.cfl);
    out.manifest.check("min_value", traj.min_value);
    out.manifest.check("max_value", traj.max_value);
    for (k, f) in traj.snapshots.iter().enumerate() {
        out.write_csv(
            &format!("snapshot_{k:03}.csv"),
            &["a", "x", "u"],
            (0..f.ages.len()).flat_map(|i| (0..f.space.len()).map(move |j| vec![f.ages.node(i), f.space.node(j), f.value(i, j)])),
        )?;
    }
    out.write_json(
        "simulate.json",
        &json!({
            "steps": traj.steps,
            "dt": traj.dt,
            "cfl": traj.cfl,
            "min_value": traj.min_value,
            "max_value": traj.max_value,
            "snapshot_times": traj.snapshots.iter().map(|f| f.t).collect::<Vec<_>>(),
        }),
    )?;
    println!("{}", serde_json::to_string_pretty(&json!({"steps": traj.steps, "cfl": traj.cfl, "min_value": traj.min_value, "max_value": traj.max_value}))?);
    Ok(true)
}

fn write_track(out: &mut OutputDir, track: &FrontTrack) -> Result<()> {
    let rows = track.times.iter().zip(&track.positions).map(|(t, p)| match p {
        Some((a, b)) => vec![fmt_f64(*t), fmt_f64(*a), fmt_f64(*b)],
        None => vec![fmt_f64(*t), String::new(), String::new()],
    });
    out.write_csv_text("front.csv", &["t", "x_plus", "x_minus"], rows)?;
    Ok(())
}

fn spread(spec: &ModelSpec, cfg: &Config, out: &mut OutputDir) -> Result<bool> {
    let s = &cfg.spread;
    let report = DispersionReport::compute(spec)?;
    let space = SpaceGrid::new(s.domain, s.n_x)?;
    out.manifest.grids["domain"] = json!(s.domain);
    out.manifest.grids["n_x"] = json!(s.n_x);
    let (verdict, passed) = match s.experiment {
        Experiment::Speed => {
            let opts = SpeedRunOptions {
                t_end: s.t_end,
                radius: s.radius,
                level: s.rho,
                slice: s.slice,
                sample_every: s.sample_every,
                outer_offset: s.outer_offset,
                interior_frac: s.c_frac,
            };
            let run = spreading::spreading_speed_run(spec, &report, &space, &opts)?;
            write_track(out, &run.track)?;
            let passed = run.ratio >= SPEED_RATIO_BAND.0
                && run.ratio <= SPEED_RATIO_BAND.1
                && run.interior_min > INTERIOR_TARGET;
            let verdict = json!({
                "c_hat": run.estimate.c_right,
                "c_hat_left": run.estimate.c_left,
                "c_star": run.c_star,
                "ratio": run.ratio,
                "margins": { "outer": run.outer.worst_margin, "interior_min": run.interior_min },
                "passed": passed,
            });
            (verdict, passed)
        }
        Experiment::Outer => {
            let u0 = Field::from_fn(*spec.ages(), space, |_, x| if x.abs() <= s.radius { 1.0 } else { 0.0 })?;
            let dt = spec.ages().step();
            let every = ((s.sample_every / dt).round() as usize).max(1);
            let samples: Vec<f64> =
                (0..).map(|k| (k * every) as f64 * dt).take_while(|t| *t <= s.t_end + 0.5 * dt).collect();
            let traj = cauchy::run(&u0, spec, s.t_end, &samples, Closure::Zero)?;
            let mut track = FrontTrack::new(s.rho, s.slice)?;
            traj.snapshots.iter().for_each(|f| track.record(f));
            write_track(out, &track)?;
            let outer = spreading::outer_bound_check(&traj, &report, report.c_star + s.outer_offset, None)?;
            let verdict = json!({
                "c_star": report.c_star,
                "c": outer.c,
                "margins": { "outer": outer.worst_margin },
                "sup_outside": outer.sup_outside,
                "passed": true,
            });
            (verdict, true)
        }
        Experiment::Inner => {
            let kpp = spreading::kpp_reference(spec, &report)?;
            let r = spreading::inner_spreading_check(spec, &report, &kpp, &space, s.radius, s.c_frac, s.t_end, s.epsilon)?;
            let verdict = json!({
                "c_star": report.c_star,
                "kpp": kpp,
                "margins": { "lower": r.lower_margin, "cap": r.cap_margin, "interior_min": r.interior_min },
                "passed": r.passed,
            });
            (verdict, r.passed)
        }
        Experiment::Hair => {
            let r = spreading::hair_trigger_check(spec, &space, s.rho0, s.rho, s.x0, s.t_end)?;
            let passed = r.t_elapsed.is_some();
            let verdict = json!({
                "c_star": report.c_star,
                "t_elapsed": r.t_elapsed,
                "margins": { "lower": r.lower_margin },
                "passed": passed,
            });
            (verdict, passed)
        }
    };
    out.manifest.check("passed", if passed { 1.0 } else { 0.0 });
    out.write_json("spread.json", &verdict)?;
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    Ok(passed)
}

#[derive(Debug, Clone, Serialize)]
struct SweepRow {
    kappa_scale: f64,
    sigma: Option<f64>,
    a_max: f64,
    outcome: std::result::Result<(f64, f64, f64), String>,
}

fn sweep_point(loaded: &LoadedConfig, kappa: f64, sigma: Option<f64>, a_max: f64) -> Result<(f64, f64, f64)> {
    let cfg = &loaded.config;
    let kernel = match sigma {
        Some(s) => match cfg.kernel {
            KernelConfig::Gaussian { .. } => Kernel::gaussian(s)?,
            _ => return Err(Error::Config("sigma override needs a gaussian kernel".into())),
        },
        None => cfg.kernel(&loaded.dir)?,
    };
    let renormalize = a_max != cfg.model.a_max;
    let base = cfg.model_with(kernel, a_max, renormalize)?;
    let spec = base.with_transmission_scale(kappa / cfg.model.transmission_scale)?;
    let report = DispersionReport::compute(&spec)?;
    Ok((report.s0, report.c_star, report.lambda_star))
}

fn sweep(loaded: &LoadedConfig, out: &mut OutputDir) -> Result<bool> {
    let cfg = &loaded.config;
    let s = &cfg.sweep;
    let mut points = Vec::new();
    if !(s.kappa_scale.is_empty() && s.sigma.is_empty() && s.a_max.is_empty()) {
        let kappas = if s.kappa_scale.is_empty() { vec![cfg.model.transmission_scale] } else { s.kappa_scale.clone() };
        let sigmas: Vec<Option<f64>> = if s.sigma.is_empty() { vec![None] } else { s.sigma.iter().map(|v| Some(*v)).collect() };
        let spans = if s.a_max.is_empty() { vec![cfg.model.a_max] } else { s.a_max.clone() };
        for &k in &kappas {
            for &sg in &sigmas {
                for &a in &spans {
                    points.push((k, sg, a));
                }
            }
        }
    }
    let rows: Vec<SweepRow> = points
        .par_iter()
        .map(|&(kappa_scale, sigma, a_max)| SweepRow {
            kappa_scale,
            sigma,
            a_max,
            outcome: sweep_point(loaded, kappa_scale, sigma, a_max).map_err(|e| e.to_string()),
        })
        .collect();

    // c* should not decrease as transmission grows, other overrides fixed
    let mut monotone = true;
    for a in &rows {
        for b in &rows {
            if let (Ok(x), Ok(y)) = (&a.outcome, &b.outcome) {
                if a.sigma == b.sigma && a.a_max == b.a_max && a.kappa_scale < b.kappa_scale && y.1 < x.1 - 1e-9 {
                    monotone = false;
                }
            }
        }
    }
    let failed = rows.iter().filter(|r| r.outcome.is_err()).count();
    out.manifest.check("points", rows.len() as f64);
    out.manifest.check("failed_points", failed as f64);
    out.manifest.check("kappa_monotone", if monotone { 1.0 } else { 0.0 });
    let text_rows = rows.iter().map(|r| {
        let sigma = r.sigma.map(fmt_f64).unwrap_or_default();
        match &r.outcome {
            Ok((s0, c, l)) => vec![fmt_f64(r.kappa_scale), sigma, fmt_f64(r.a_max), fmt_f64(*s0), fmt_f64(*c), fmt_f64(*l), "ok".into()],
            Err(e) => vec![fmt_f64(r.kappa_scale), sigma, fmt_f64(r.a_max), String::new(), String::new(), String::new(), format!("failed: {e}")],
        }
    });
    out.write_csv_text("sweep.csv", &["kappa_scale", "sigma", "a_max", "s0", "c_star", "lambda_star", "status"], text_rows)?;
    println!("{}", serde_json::to_string_pretty(&json!({"points": rows.len(), "failed": failed, "kappa_monotone": monotone}))?);
    Ok(monotone)
}

/// Path of the manifest a command writes under `out`.
pub fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.json")
}
