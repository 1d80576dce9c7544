//! Batch front end. Every command reads a [`Config`], writes `results.csv`,
//! `summary.json`, optional `densities/*.csv` and `plots/*.csv`, and finally
//! `manifest.json` into the output directory.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{
    convergence_study, holder_time_diagnostic, tail_scan, wasserstein_increment_diagnostic, HolderMode,
};
use crate::config::Config;
use crate::drift::verify_assumptions;
use crate::duhamel::cross_check;
use crate::error::{Error, Result};
use crate::fokker_planck::{fp_measures, fp_solve, FPConfig};
use crate::scheme::{simulate_unchecked, SimulationRecord};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_THRESHOLD: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "ddmv", version, about = "Particle scheme, reference solvers and diagnostics for density-dependent McKean-Vlasov SDEs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `seed` from the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (results do not depend on this).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// `section.key=value`, repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VAL")]
    pub set: Vec<String>,
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Run the particle scheme and dump recorded snapshots.
    Simulate,
    /// Weighted-L1 convergence study in n against a reference density.
    Converge,
    /// Compare the Duhamel reconstruction with the one-step mixture.
    DuhamelCheck,
    /// Time-regularity, Wasserstein increment and tail diagnostics.
    Regularity,
    /// Solve the 1D Fokker-Planck reference problem.
    FpSolve,
    /// Probe the drift against its declared constants.
    Assumptions,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Converge => "converge",
            Command::DuhamelCheck => "duhamel-check",
            Command::Regularity => "regularity",
            Command::FpSolve => "fp-solve",
            Command::Assumptions => "assumptions",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub limit: String,
    pub pass: bool,
}

fn check(name: &str, value: f64, limit: impl Into<String>, pass: bool) -> Check {
    Check { name: name.into(), value, limit: limit.into(), pass }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        self.files.push(name.into());
        Ok(())
    }

    fn json(&mut self, name: &str, value: &Value) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        fs::write(self.dir.join(name), text)?;
        self.files.push(name.into());
        Ok(())
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::AssumptionViolated(_) => EXIT_THRESHOLD,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_PASS };
            let _ = e.print();
            return code;
        }
    };
    match run(&cli) {
        Ok(pass) => {
            if pass {
                EXIT_PASS
            } else {
                EXIT_THRESHOLD
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

/// Runs one command; `Ok(false)` means a configured threshold failed.
pub fn run(cli: &Cli) -> Result<bool> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p, &cli.set)?,
        None => Config::parse("", &cli.set)?,
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    let workers = cli.workers.unwrap_or(0);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot build worker pool: {e}")))?;
    let started = SystemTime::now();
    let clock = Instant::now();
    let mut out = Outputs::new(&cli.out)?;
    let checks = pool.install(|| match cli.command {
        Command::Simulate => cmd_simulate(&cfg, &mut out),
        Command::Converge => cmd_converge(&cfg, &mut out),
        Command::DuhamelCheck => cmd_duhamel(&cfg, &mut out),
        Command::Regularity => cmd_regularity(&cfg, &mut out),
        Command::FpSolve => cmd_fp(&cfg, &mut out),
        Command::Assumptions => cmd_assumptions(&cfg, &mut out),
    });
    let (checks, error) = match checks {
        Ok(c) => (c, None),
        Err(e) => (Vec::new(), Some(e)),
    };
    let pass = error.is_none() && checks.iter().all(|c| c.pass);
    let manifest = json!({
        "command": cli.command.name(),
        "config": cfg.to_toml(),
        "overrides": cli.set,
        "seed": cfg.seed,
        "workers": pool.current_num_threads(),
        "versions": { "ddmv": env!("CARGO_PKG_VERSION") },
        "started_unix": started.duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0),
        "wall_clock_seconds": clock.elapsed().as_secs_f64(),
        "outputs": out.files,
        "checks": checks,
        "pass": pass,
        "error": error.as_ref().map(|e| e.to_string()),
    });
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    fs::write(cli.out.join("manifest.json"), text)?;
    for c in &checks {
        println!("{} {} = {} (limit {})", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.limit);
    }
    match error {
        Some(e) => Err(e),
        None => Ok(pass),
    }
}

fn summary(out: &mut Outputs, command: Command, body: Value, checks: &[Check]) -> Result<()> {
    out.json(
        "summary.json",
        &json!({
            "command": command.name(),
            "result": body,
            "checks": checks,
            "pass": checks.iter().all(|c| c.pass),
        }),
    )
}

fn linspace(lo: f64, hi: f64, m: usize) -> Vec<f64> {
    if m == 1 {
        return vec![lo];
    }
    (0..m).map(|i| lo + (hi - lo) * i as f64 / (m - 1) as f64).collect()
}

fn checked_simulation(cfg: &Config, n: usize, seed: u64) -> Result<SimulationRecord> {
    let drift = cfg.drift.build()?;
    let ic = cfg.initial.build()?;
    let sc = cfg.scheme_config(n, seed)?;
    if cfg.scheme.unchecked {
        return simulate_unchecked(&sc, &drift, &ic);
    }
    let report = verify_assumptions(&drift, &cfg.probe_config(sc.dim), seed)?;
    if !report.passed() {
        return Err(Error::AssumptionViolated(format!(
            "{} fails its declared constants (max |b| {:.4} vs {})",
            report.drift, report.max_abs_b_observed, report.declared_bound
        )));
    }
    let mut rec = simulate_unchecked(&sc, &drift, &ic)?;
    rec.assumptions = Some(report);
    Ok(rec)
}

fn cmd_simulate(cfg: &Config, out: &mut Outputs) -> Result<Vec<Check>> {
    let rec = checked_simulation(cfg, cfg.scheme.n, cfg.seed)?;
    let p = cfg.scheme.weight_exponent;
    let d = rec.config.dim;
    let mut header: Vec<String> = vec!["step".into(), "time".into()];
    header.extend((0..d).map(|i| format!("mean_{i}")));
    header.extend(["second_moment".into(), format!("moment_p{p}"), "density_error_bound".into()]);
    let rows: Vec<Vec<f64>> = rec
        .snapshots
        .iter()
        .map(|s| {
            let m = s.measure();
            let mut r = vec![s.step as f64, s.time];
            r.extend(m.mean());
            r.extend([m.moment(2.0), m.moment(p), s.density_error_bound]);
            r
        })
        .collect();
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    out.csv("results.csv", &header, &rows)?;
    if d == 1 {
        let grid = linspace(cfg.duhamel.grid_lo, cfg.duhamel.grid_hi, cfg.duhamel.grid_points);
        for s in &rec.snapshots {
            let v = s.density.eval_many(&grid, rec.config.summation, rec.config.radius_multiplier)?;
            let rows: Vec<Vec<f64>> =
                grid.iter().zip(v.values.iter()).map(|(&x, &y)| vec![x, y, v.error_bound]).collect();
            out.csv(&format!("densities/step_{:05}.csv", s.step), &["x", "density", "error_bound"], &rows)?;
        }
    }
    let last = rec.last().measure();
    let plot: Vec<Vec<f64>> = (0..last.len()).map(|i| last.point(i).to_vec()).collect();
    let cols: Vec<String> = (0..d).map(|i| format!("x{i}")).collect();
    let cols: Vec<&str> = cols.iter().map(String::as_str).collect();
    out.csv("plots/final_particles.csv", &cols, &plot)?;
    let body = json!({
        "drift": rec.drift.name(),
        "ic": rec.ic.name(),
        "steps": rec.config.grid.steps(),
        "particles": rec.config.particles,
        "final_mean": last.mean(),
        "assumptions": rec.assumptions,
    });
    summary(out, Command::Simulate, body, &[])?;
    Ok(Vec::new())
}

fn cmd_converge(cfg: &Config, out: &mut Outputs) -> Result<Vec<Check>> {
    let drift = cfg.drift.build()?;
    let ic = cfg.initial.build()?;
    let cc = cfg.convergence_config(cfg.seed)?;
    let study = convergence_study(&drift, &ic, &cc)?;
    let mut rows = Vec::new();
    for r in &study.rows {
        for (i, e) in r.seed_errors.iter().enumerate() {
            rows.push(vec![r.n as f64, cc.seeds[i] as f64, *e, r.mean_error, r.half_width]);
        }
    }
    out.csv("results.csv", &["n", "seed", "error", "mean_error", "half_width"], &rows)?;
    let plot: Vec<Vec<f64>> = study
        .rows
        .iter()
        .map(|r| {
            let fitted = (study.fit.intercept + study.fit.slope * (r.n as f64).ln()).exp();
            vec![r.n as f64, r.mean_error, r.mean_error - r.half_width, r.mean_error + r.half_width, fitted]
        })
        .collect();
    out.csv("plots/convergence.csv", &["n", "mean_error", "lower", "upper", "fitted"], &plot)?;
    let mut checks = vec![
        check("slope", study.fit.slope, format!("<= {}", cfg.converge.max_slope), study.fit.slope <= cfg.converge.max_slope),
        check(
            "slope_half_width",
            study.fit.half_width,
            format!("< {}", cfg.converge.max_half_width),
            study.fit.half_width < cfg.converge.max_half_width,
        ),
    ];
    if cfg.converge.require_monotone {
        checks.push(check("monotone", study.monotone_within_margin as u8 as f64, "= 1", study.monotone_within_margin));
    }
    summary(out, Command::Converge, serde_json::to_value(&study)?, &checks)?;
    Ok(checks)
}

fn cmd_duhamel(cfg: &Config, out: &mut Outputs) -> Result<Vec<Check>> {
    // the reconstruction needs every step up to the query time
    let mut full = cfg.clone();
    full.scheme.record = crate::scheme::RecordCadence::All;
    let rec = checked_simulation(&full, cfg.scheme.n, cfg.seed)?;
    let dc = &cfg.duhamel;
    let grid = linspace(dc.grid_lo, dc.grid_hi, dc.grid_points);
    let cc = cross_check(&rec, dc.time, grid, dc.nodes, dc.bridge)?;
    let rows: Vec<Vec<f64>> = (0..cc.grid.len())
        .map(|j| {
            let diff = (cc.duhamel[j] - cc.mixture[j]).abs();
            vec![cc.grid[j], cc.duhamel[j], cc.mixture[j], diff, cc.combined_error[j]]
        })
        .collect();
    out.csv("results.csv", &["x", "duhamel", "mixture", "abs_difference", "combined_error"], &rows)?;
    out.csv("plots/duhamel_vs_mixture.csv", &["x", "duhamel", "mixture"], &rows.iter().map(|r| r[..3].to_vec()).collect::<Vec<_>>())?;
    let checks = vec![
        check("sup_error_ratio", cc.sup_error_ratio, format!("<= {}", dc.max_ratio), cc.sup_error_ratio <= dc.max_ratio),
        check("duhamel_mass", cc.duhamel_mass, format!("1 ± {}", dc.mass_tolerance), (cc.duhamel_mass - 1.0).abs() <= dc.mass_tolerance),
        check("mixture_mass", cc.mixture_mass, format!("1 ± {}", dc.mass_tolerance), (cc.mixture_mass - 1.0).abs() <= dc.mass_tolerance),
    ];
    let body = json!({
        "time": cc.time,
        "max_abs_difference": cc.max_abs_difference,
        "max_combined_error": cc.max_combined_error,
        "sup_error_ratio": cc.sup_error_ratio,
        "pointwise_max_error_ratio": cc.max_error_ratio,
        "pointwise_exceedances": cc.pointwise_exceedances,
        "duhamel_mass": cc.duhamel_mass,
        "mixture_mass": cc.mixture_mass,
    });
    summary(out, Command::DuhamelCheck, body, &checks)?;
    Ok(checks)
}

fn cmd_regularity(cfg: &Config, out: &mut Outputs) -> Result<Vec<Check>> {
    let rc = &cfg.regularity;
    let ic = cfg.initial.build()?;
    let grid = cfg.regularity_grid(ic.dim())?;
    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    let mut checks = Vec::new();
    for &n in &rc.ns {
        let rec = checked_simulation(cfg, n, cfg.seed)?;
        let sup = holder_time_diagnostic(&rec, ic.alpha, HolderMode::SupNorm, &grid)?;
        let weighted = holder_time_diagnostic(&rec, ic.alpha, HolderMode::Weighted, &grid)?;
        let sqrt = if ic.sqrt_weighted_integral(rec.config.weight_exponent).is_some() {
            Some(holder_time_diagnostic(&rec, ic.alpha, HolderMode::WeightedSqrt, &grid)?)
        } else {
            None
        };
        let w = wasserstein_increment_diagnostic(&rec, rc.wasserstein_order, rc.subsample, cfg.seed)?;
        let measures: Vec<_> = rec.snapshots.iter().map(|s| s.measure()).collect();
        let tail = tail_scan(&measures, rc.tail_order, &rc.tail_radii)?;
        rows.push(vec![
            n as f64,
            sup.max_ratio,
            weighted.max_ratio,
            sqrt.as_ref().map_or(f64::NAN, |s| s.max_ratio),
            w.fit.slope,
            w.fit.half_width,
            tail.fit.slope,
        ]);
        let plot: Vec<Vec<f64>> = w
            .pairs
            .iter()
            .map(|pv| {
                let h = sup.pairs.iter().find(|q| q.s == pv.s && q.t == pv.t).map_or(f64::NAN, |q| q.increment);
                vec![pv.s, pv.t, pv.increment, h]
            })
            .collect();
        out.csv(&format!("plots/increments_n{n}.csv"), &["s", "t", "wasserstein", "sup_norm"], &plot)?;
        checks.push(check(
            &format!("wasserstein_slope_n{n}"),
            w.fit.slope,
            format!("in [{}, {}]", rc.min_w_slope, rc.max_w_slope),
            w.fit.slope >= rc.min_w_slope && w.fit.slope <= rc.max_w_slope,
        ));
        checks.push(check(
            &format!("tail_slope_n{n}"),
            tail.fit.slope,
            format!("<= {}", rc.max_tail_slope),
            tail.fit.slope <= rc.max_tail_slope,
        ));
        per_n.push(json!({"n": n, "sup_norm": sup, "weighted": weighted, "weighted_sqrt": sqrt, "wasserstein": w, "tail": tail}));
    }
    let ratios: Vec<f64> = rows.iter().map(|r| r[1]).collect();
    let spread = ratios.iter().copied().fold(0.0, f64::max) / ratios.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(check("sup_norm_ratio_spread", spread, format!("<= {}", rc.max_spread), spread <= rc.max_spread));
    out.csv(
        "results.csv",
        &["n", "sup_norm_max_ratio", "weighted_max_ratio", "weighted_sqrt_max_ratio", "wasserstein_slope", "wasserstein_half_width", "tail_slope"],
        &rows,
    )?;
    summary(out, Command::Regularity, json!({"runs": per_n, "sup_norm_ratio_spread": spread}), &checks)?;
    Ok(checks)
}

fn cmd_fp(cfg: &Config, out: &mut Outputs) -> Result<Vec<Check>> {
    let drift = cfg.drift.build()?;
    let ic = cfg.initial.build()?;
    let t_end = cfg.scheme.horizon;
    let mut fc = FPConfig::auto(drift, ic, t_end, cfg.fp.mesh, cfg.fp.cfl)?;
    fc.scheme = cfg.fp.scheme;
    if fc.scheme == crate::fokker_planck::TimeScheme::Explicit {
        fc.dt = fc.dt.min(fc.mesh * fc.mesh / 4.0);
    }
    let times = if cfg.fp.times.is_empty() {
        (1..=8).map(|j| t_end * j as f64 / 8.0).collect()
    } else {
        cfg.fp.times.clone()
    };
    let traj = fp_solve(&fc, t_end, &times)?;
    let mut rows = Vec::new();
    for (i, &t) in traj.times.iter().enumerate() {
        let m = fp_measures(&traj, t)?;
        rows.push(vec![t, traj.mass(i), m.moments[1].1, m.moments[2].1]);
        let dens: Vec<Vec<f64>> = traj.centers.iter().zip(&traj.densities[i]).map(|(&x, &y)| vec![x, y]).collect();
        out.csv(&format!("densities/fp_{i:03}.csv"), &["x", "density"], &dens)?;
    }
    out.csv("results.csv", &["time", "mass", "first_moment", "second_moment"], &rows)?;
    out.csv("plots/mass.csv", &["time", "mass"], &rows.iter().map(|r| r[..2].to_vec()).collect::<Vec<_>>())?;
    let checks = vec![check(
        "max_mass_error",
        traj.max_mass_error,
        format!("<= {}", cfg.fp.max_mass_error),
        traj.max_mass_error <= cfg.fp.max_mass_error,
    )];
    let body = json!({
        "half_width": traj.half_width,
        "mesh": traj.mesh,
        "dt": fc.dt,
        "steps": traj.steps,
        "max_mass_error": traj.max_mass_error,
        "clipped_mass": traj.clipped_mass,
        "max_boundary_density": traj.max_boundary_density,
    });
    summary(out, Command::FpSolve, body, &checks)?;
    Ok(checks)
}

fn cmd_assumptions(cfg: &Config, out: &mut Outputs) -> Result<Vec<Check>> {
    let drift = cfg.drift.build()?;
    let dim = drift.dim().unwrap_or(cfg.initial.build()?.dim());
    let report = verify_assumptions(&drift, &cfg.probe_config(dim), cfg.seed)?;
    out.csv(
        "results.csv",
        &["declared_bound", "max_abs_b", "declared_lip_density", "density_ratio", "declared_lip_measure", "measure_ratio"],
        &[vec![
            report.declared_bound,
            report.max_abs_b_observed,
            report.declared_lip_density,
            report.worst_density_lipschitz_ratio,
            report.declared_lip_measure,
            report.worst_measure_lipschitz_ratio,
        ]],
    )?;
    let checks = vec![
        check("bound", report.max_abs_b_observed, format!("<= {} x {}", report.declared_bound, crate::drift::SAFETY_FACTOR), report.bound_pass),
        check(
            "lipschitz",
            report.worst_density_lipschitz_ratio.max(report.worst_measure_lipschitz_ratio),
            "within declared moduli",
            report.lipschitz_pass,
        ),
    ];
    summary(out, Command::Assumptions, serde_json::to_value(&report)?, &checks)?;
    Ok(checks)
}
