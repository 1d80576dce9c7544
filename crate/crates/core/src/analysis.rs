//! Error norms, regularity diagnostics, tail scans, log-log rate fits and
//! the convergence harness.

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};

use crate::drift::{verify_assumptions, DriftSpec};
use crate::error::{Error, Result};
use crate::fokker_planck::{fp_solve, FPConfig, FPTrajectory};
use crate::gauss_sum::Summation;
use crate::initial::InitialDensity;
use crate::measures::{norm, wasserstein_p, EmpiricalMeasure};
use crate::rng::{Purpose, StreamKey};
use crate::scheme::{default_probes, simulate_unchecked, RecordCadence, SchemeConfig, SimulationRecord};

/// Two-sided 97.5% Student-t quantiles for 1..=30 degrees of freedom.
const T975: [f64; 30] = [
    12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228, 2.201, 2.179, 2.160, 2.145, 2.131,
    2.120, 2.110, 2.101, 2.093, 2.086, 2.080, 2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042,
];

pub fn student_t975(df: usize) -> f64 {
    match df {
        0 => f64::INFINITY,
        1..=30 => T975[df - 1],
        _ => 1.960 + 2.4 / df as f64,
    }
}

/// Least-squares fit of `log error = intercept + slope · log abscissa`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub abscissae: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// Euclidean norm of the log residuals.
    pub residual: f64,
    /// 95% confidence half-width of the slope (Student t, `m − 2` dof).
    pub half_width: f64,
}

pub fn rate_fit(abscissae: &[f64], errors: &[f64]) -> Result<RateFit> {
    if abscissae.len() != errors.len() {
        return Err(Error::domain("abscissae and errors differ in length"));
    }
    if abscissae.len() < 3 {
        return Err(Error::Insufficient(format!("rate fit needs >= 3 points, got {}", abscissae.len())));
    }
    if let Some(e) = errors.iter().find(|&&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::domain(format!("rate fit needs positive errors, got {e}")));
    }
    if abscissae.iter().any(|&x| !(x > 0.0)) {
        return Err(Error::domain("rate fit needs positive abscissae"));
    }
    let lx: Vec<f64> = abscissae.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = errors.iter().map(|y| y.ln()).collect();
    let m = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / m;
    let my = ly.iter().sum::<f64>() / m;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if !(sxx > 0.0) {
        return Err(Error::Degenerate("all abscissae are equal".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let dof = lx.len() - 2;
    let se = (rss / dof as f64 / sxx).sqrt();
    Ok(RateFit {
        abscissae: abscissae.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept,
        residual: rss.sqrt(),
        half_width: student_t975(dof) * se,
    })
}

/// Tensor midpoint grid on `[lo, hi]^d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalGrid {
    pub dim: usize,
    pub lo: f64,
    pub hi: f64,
    pub cells: usize,
}

impl EvalGrid {
    pub fn new(dim: usize, lo: f64, hi: f64, cells: usize) -> Result<Self> {
        if dim == 0 || dim > 3 || !(hi > lo) || cells == 0 {
            return Err(Error::domain("grid needs 1 <= d <= 3, lo < hi and cells > 0"));
        }
        Ok(Self { dim, lo, hi, cells })
    }

    pub fn spacing(&self) -> f64 {
        (self.hi - self.lo) / self.cells as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn axis(&self) -> Vec<f64> {
        let h = self.spacing();
        (0..self.cells).map(|i| self.lo + (i as f64 + 0.5) * h).collect()
    }

    /// Flat `cells^d × d` midpoints.
    pub fn points(&self) -> Vec<f64> {
        let axis = self.axis();
        let total = self.cells.pow(self.dim as u32);
        let mut out = Vec::with_capacity(total * self.dim);
        for flat in 0..total {
            let mut rem = flat;
            for _ in 0..self.dim {
                out.push(axis[rem % self.cells]);
                rem /= self.cells;
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedL1 {
    pub value: f64,
    pub mass_f: f64,
    pub mass_g: f64,
    /// Either density has more than 1e-8 of its mass outside the grid.
    pub tail_warning: bool,
}

/// `∫(1 + |x|^p)|f − g|` from values at quadrature points.
pub fn weighted_l1_from_values(points: &[f64], dim: usize, weights: &[f64], f: &[f64], g: &[f64], p: f64) -> WeightedL1 {
    let mut value = 0.0;
    let (mut mf, mut mg) = (0.0, 0.0);
    for (j, x) in points.chunks_exact(dim).enumerate() {
        let w = weights[j];
        value += w * (1.0 + norm(x).powf(p)) * (f[j] - g[j]).abs();
        mf += w * f[j];
        mg += w * g[j];
    }
    WeightedL1 { value, mass_f: mf, mass_g: mg, tail_warning: (1.0 - mf) > 1e-8 || (1.0 - mg) > 1e-8 }
}

/// `∫(1 + |x|^p)|f − g|` by the midpoint rule on `grid`.
pub fn weighted_l1_error(
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    g: &(dyn Fn(&[f64]) -> f64 + Sync),
    p: f64,
    grid: &EvalGrid,
) -> Result<WeightedL1> {
    if !(p >= 0.0) {
        return Err(Error::domain("weight exponent must be nonnegative"));
    }
    let pts = grid.points();
    let fv: Vec<f64> = pts.chunks(grid.dim).map(f).collect();
    let gv: Vec<f64> = pts.chunks(grid.dim).map(g).collect();
    let w = vec![grid.cell_volume(); fv.len()];
    Ok(weighted_l1_from_values(&pts, grid.dim, &w, &fv, &gv, p))
}

/// Grid indices at `T j / 8`, `j = 0..=8`, and the dyadic pairs among them
/// (`t − s = T/2^j`, `s` a multiple of the lag).
pub fn dyadic_pairs(record: &SimulationRecord) -> Result<Vec<(usize, usize)>> {
    let n = record.config.grid.steps();
    if n % 8 != 0 {
        return Err(Error::Insufficient(format!("dyadic times need n divisible by 8, got {n}")));
    }
    for j in 0..=8 {
        if record.at_step(j * n / 8).is_none() {
            return Err(Error::Insufficient(format!("time index {} is not recorded", j * n / 8)));
        }
    }
    let mut pairs = Vec::new();
    let mut lag = 1;
    while lag <= 8 {
        let mut s = 0;
        while s + lag <= 8 {
            pairs.push((s * n / 8, (s + lag) * n / 8));
            s += lag;
        }
        lag *= 2;
    }
    Ok(pairs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HolderMode {
    /// `‖ℓ_t − ℓ_s‖_∞ / (t − s)^{α/2}`.
    SupNorm,
    /// `∫(1+|x|^p)|ℓ_t − ℓ_s| / ((t − s)^{α/2} s^{−α/2})`, `s > 0` only.
    Weighted,
    /// `∫(1+|x|^p)|ℓ_t − ℓ_s| / (t − s)^{α/4}`; needs `∫(1+|x|^p)√ℓ_ν < ∞`.
    WeightedSqrt,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairValue {
    pub s: f64,
    pub t: f64,
    /// Norm of the increment.
    pub increment: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HolderDiagnostic {
    pub mode: HolderMode,
    pub pairs: Vec<PairValue>,
    pub max_ratio: f64,
    /// Increment vs `t − s`.
    pub fit: RateFit,
}

/// Time-Hölder ratios of the recorded densities over dyadic pairs, with the
/// densities evaluated on `grid`.
pub fn holder_time_diagnostic(
    record: &SimulationRecord,
    alpha: f64,
    mode: HolderMode,
    grid: &EvalGrid,
) -> Result<HolderDiagnostic> {
    if grid.dim != record.config.dim {
        return Err(Error::DimensionMismatch { expected: record.config.dim, got: grid.dim });
    }
    if mode == HolderMode::WeightedSqrt && record.ic.sqrt_weighted_integral(record.config.weight_exponent).is_none() {
        return Err(Error::domain("weighted_sqrt mode needs an initial law with a declared sqrt integral"));
    }
    let p = record.config.weight_exponent;
    let pairs = dyadic_pairs(record)?;
    let pts = grid.points();
    let cfg = &record.config;
    let mut cache: Vec<(usize, Vec<f64>)> = Vec::new();
    let mut values_at = |k: usize| -> Result<Vec<f64>> {
        if let Some((_, v)) = cache.iter().find(|(i, _)| *i == k) {
            return Ok(v.clone());
        }
        let snap = record.at_step(k).expect("checked by dyadic_pairs");
        let v = snap.density.eval_many(&pts, Summation::Truncated, cfg.radius_multiplier)?.values;
        cache.push((k, v.clone()));
        Ok(v)
    };
    let w = vec![grid.cell_volume(); pts.len() / grid.dim];
    let mut out = Vec::new();
    for (ks, kt) in pairs {
        let (s, t) = (cfg.grid.time(ks), cfg.grid.time(kt));
        if mode == HolderMode::Weighted && ks == 0 {
            continue;
        }
        let fs = values_at(ks)?;
        let ft = values_at(kt)?;
        let increment = match mode {
            HolderMode::SupNorm => fs.iter().zip(&ft).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max),
            _ => weighted_l1_from_values(&pts, grid.dim, &w, &ft, &fs, p).value,
        };
        let lag = t - s;
        let ratio = match mode {
            HolderMode::SupNorm => increment / lag.powf(alpha / 2.0),
            HolderMode::Weighted => increment / (lag.powf(alpha / 2.0) * s.powf(-alpha / 2.0)),
            HolderMode::WeightedSqrt => increment / lag.powf(alpha / 4.0),
        };
        out.push(PairValue { s, t, increment, ratio });
    }
    if out.len() < 3 {
        return Err(Error::Insufficient("fewer than 3 usable pairs".into()));
    }
    let fit = rate_fit(
        &out.iter().map(|v| v.t - v.s).collect::<Vec<_>>(),
        &out.iter().map(|v| v.increment.max(f64::MIN_POSITIVE)).collect::<Vec<_>>(),
    )?;
    let max_ratio = out.iter().map(|v| v.ratio).fold(0.0, f64::max);
    Ok(HolderDiagnostic { mode, pairs: out, max_ratio, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WassersteinDiagnostic {
    pub order: f64,
    pub subsample: usize,
    pub pairs: Vec<PairValue>,
    /// `log W_p` vs `log(t − s)`.
    pub fit: RateFit,
}

/// Exact `W_p` between same-index subsamples of the recorded clouds over
/// dyadic pairs. The subsample (at most `max_points`) is drawn once from
/// `seed` and reused for every time.
pub fn wasserstein_increment_diagnostic(
    record: &SimulationRecord,
    p: f64,
    max_points: usize,
    seed: u64,
) -> Result<WassersteinDiagnostic> {
    let pairs = dyadic_pairs(record)?;
    if pairs.len() < 6 {
        return Err(Error::Insufficient(format!("need >= 6 dyadic pairs, got {}", pairs.len())));
    }
    let n = record.config.particles;
    let m = max_points.min(n).min(crate::measures::DEFAULT_LP_CAP);
    let mut rng = StreamKey::new(seed).global(Purpose::Subsample);
    let mut idx = sample(&mut rng, n, m).into_vec();
    idx.sort_unstable();
    let cfg = &record.config;
    let sub = |k: usize| -> Result<EmpiricalMeasure> { record.at_step(k).expect("recorded").measure().select(&idx) };
    let mut out = Vec::new();
    for (ks, kt) in pairs {
        let w = wasserstein_p(p, &sub(ks)?, &sub(kt)?)?;
        let (s, t) = (cfg.grid.time(ks), cfg.grid.time(kt));
        if w > 0.0 {
            out.push(PairValue { s, t, increment: w, ratio: w / (t - s).sqrt() });
        }
    }
    let fit = rate_fit(
        &out.iter().map(|v| v.t - v.s).collect::<Vec<_>>(),
        &out.iter().map(|v| v.increment).collect::<Vec<_>>(),
    )?;
    Ok(WassersteinDiagnostic { order: p, subsample: m, pairs: out, fit })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailScan {
    pub radii: Vec<f64>,
    /// `sup_t tail_mass(p, R)` per radius.
    pub sup_tail: Vec<f64>,
    /// Fit over the radii with a positive tail.
    pub fit: RateFit,
}

/// Slope of `log sup_t tail_mass(p, R)` against `log R`.
pub fn tail_scan(measures: &[EmpiricalMeasure], p: f64, radii: &[f64]) -> Result<TailScan> {
    if radii.len() < 4 {
        return Err(Error::Insufficient(format!("tail scan needs >= 4 radii, got {}", radii.len())));
    }
    if radii.windows(2).any(|w| !(w[1] > w[0])) || !(radii[0] > 0.0) {
        return Err(Error::domain("radii must be positive and strictly increasing"));
    }
    if measures.is_empty() {
        return Err(Error::Insufficient("no measures to scan".into()));
    }
    let sup_tail: Vec<f64> =
        radii.iter().map(|&r| measures.iter().map(|m| m.tail_mass(p, r)).fold(0.0, f64::max)).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        radii.iter().zip(&sup_tail).filter(|(_, &t)| t > 0.0).map(|(&r, &t)| (r, t)).unzip();
    if xs.is_empty() {
        return Err(Error::Degenerate("tail mass is zero at every radius".into()));
    }
    if xs.len() < 3 {
        return Err(Error::Degenerate(format!("only {} radii have a nonzero tail", xs.len())));
    }
    Ok(TailScan { radii: radii.to_vec(), sup_tail, fit: rate_fit(&xs, &ys)? })
}

/// Reference density for [`convergence_study`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Reference {
    /// Fokker–Planck solve at `mesh` (certified against `mesh / 2`).
    FpOracle { mesh: f64, cfl: f64 },
    /// The same seed at the largest `n` in the ladder.
    FinestN,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: usize,
    /// Per-seed `max_t ∫(1+|x|)|ℓ̂ⁿ_t − ℓ_t|`.
    pub seed_errors: Vec<f64>,
    pub mean_error: f64,
    /// 95% Student-t half-width of the mean over seeds.
    pub half_width: f64,
    /// Per-time errors averaged over seeds (dyadic times `T j / 8`, `j = 1..=8`).
    pub time_errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceStudy {
    pub drift: String,
    pub ic: String,
    pub particles: usize,
    pub seeds: Vec<u64>,
    pub rows: Vec<ConvergenceRow>,
    pub fit: RateFit,
    /// Weighted L1 between the reference and its refinement.
    pub reference_self_error: f64,
    /// No mean error exceeds the previous one by more than the combined half-widths.
    pub monotone_within_margin: bool,
    pub times: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceConfig {
    pub ns: Vec<usize>,
    pub particles: usize,
    pub seeds: Vec<u64>,
    pub horizon: f64,
    pub weight_exponent: f64,
    pub reference: Reference,
    pub summation: Summation,
    pub radius_multiplier: f64,
}

impl ConvergenceConfig {
    pub fn new(ns: Vec<usize>, particles: usize, seeds: Vec<u64>) -> Self {
        Self {
            ns,
            particles,
            seeds,
            horizon: 1.0,
            weight_exponent: 1.0,
            reference: Reference::FpOracle { mesh: 1.0 / 400.0, cfl: 0.5 },
            summation: Summation::Truncated,
            radius_multiplier: 8.0,
        }
    }
}

/// Cell averages of a solution on mesh `h/2` mapped onto mesh `h`.
fn coarsen(fine: &[f64]) -> Vec<f64> {
    fine.chunks_exact(2).map(|c| 0.5 * (c[0] + c[1])).collect()
}

/// Runs the scheme for every `(n, seed)` and measures the weighted L1
/// distance to the reference at the 8 dyadic times.
pub fn convergence_study(drift: &DriftSpec, ic: &InitialDensity, cc: &ConvergenceConfig) -> Result<ConvergenceStudy> {
    if cc.weight_exponent != 1.0 {
        return Err(Error::domain("the convergence study is defined for p = 1"));
    }
    if cc.ns.len() < 3 {
        return Err(Error::Insufficient("need at least 3 values of n".into()));
    }
    if cc.seeds.is_empty() {
        return Err(Error::Insufficient("need at least one seed".into()));
    }
    let mut ns = cc.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    if ns.iter().any(|n| n % 8 != 0) {
        return Err(Error::domain("every n must be divisible by 8 so that the dyadic times are grid points"));
    }
    let d = ic.dim();
    let times: Vec<f64> = (1..=8).map(|j| cc.horizon * j as f64 / 8.0).collect();
    let probe_cfg = SchemeConfig::new(ns[0], cc.horizon, cc.particles, d, cc.seeds[0])?;
    let report = verify_assumptions(drift, &default_probes(&probe_cfg), cc.seeds[0])?;
    if !report.passed() {
        return Err(Error::AssumptionViolated(format!("{} fails its declared constants", report.drift)));
    }

    // reference on fixed quadrature points
    let (points, weights, reference, self_error): (Vec<f64>, Vec<f64>, Option<Vec<Vec<f64>>>, f64) =
        match &cc.reference {
            Reference::FpOracle { mesh, cfl } => {
                if d != 1 {
                    return Err(Error::domain("the Fokker-Planck reference is 1D only"));
                }
                let cfg = FPConfig::auto(drift.clone(), ic.clone(), cc.horizon, *mesh, *cfl)?;
                let coarse = fp_solve(&cfg, cc.horizon, &times)?;
                let mut fine_cfg = cfg.clone();
                fine_cfg.mesh = mesh / 2.0;
                fine_cfg.dt = cfg.dt / 2.0;
                let fine = fp_solve(&fine_cfg, cc.horizon, &times)?;
                let w = vec![coarse.mesh; coarse.centers.len()];
                let mut self_err = 0.0f64;
                let mut refs = Vec::new();
                for &t in &times {
                    let a = coarse.density_at(t).expect("stored");
                    let b = coarse_of(&fine, t);
                    self_err = self_err.max(weighted_l1_from_values(&coarse.centers, 1, &w, a, &b, 1.0).value);
                    refs.push(a.to_vec());
                }
                (coarse.centers.clone(), w, Some(refs), self_err)
            }
            Reference::FinestN => {
                let spread = (ic.moment(2.0) + 2.0 * cc.horizon).sqrt();
                let half = ic.moment(1.0) + drift.bound * cc.horizon + 8.0 * spread;
                let cells = if d == 1 { 4000 } else { 60 };
                let grid = EvalGrid::new(d, -half, half, cells)?;
                let pts = grid.points();
                let w = vec![grid.cell_volume(); pts.len() / d];
                (pts, w, None, 0.0)
            }
        };

    let run_errors = |n: usize, seed: u64, refs: &[Vec<f64>]| -> Result<Vec<f64>> {
        let rec = run(drift, ic, cc, n, seed)?;
        times
            .iter()
            .zip(refs)
            .map(|(&t, r)| {
                let snap = rec.at_time(t).expect("dyadic time recorded");
                let v = snap.density.eval_many(&points, cc.summation, cc.radius_multiplier)?.values;
                Ok(weighted_l1_from_values(&points, d, &weights, &v, r, 1.0).value)
            })
            .collect()
    };
    let eval_all = |rec: &SimulationRecord| -> Result<Vec<Vec<f64>>> {
        times
            .iter()
            .map(|&t| {
                let snap = rec.at_time(t).expect("dyadic time recorded");
                Ok(snap.density.eval_many(&points, cc.summation, cc.radius_multiplier)?.values)
            })
            .collect()
    };

    let study_ns: Vec<usize> = match cc.reference {
        Reference::FinestN => ns[..ns.len() - 1].to_vec(),
        _ => ns.clone(),
    };
    if study_ns.len() < 3 {
        return Err(Error::Insufficient("need at least 3 values of n besides the reference".into()));
    }
    let mut per_n: Vec<Vec<Vec<f64>>> = vec![Vec::new(); study_ns.len()];
    for &seed in &cc.seeds {
        let refs = match &reference {
            Some(r) => r.clone(),
            None => eval_all(&run(drift, ic, cc, *ns.last().unwrap(), seed)?)?,
        };
        for (i, &n) in study_ns.iter().enumerate() {
            per_n[i].push(run_errors(n, seed, &refs)?);
        }
    }

    let s = cc.seeds.len() as f64;
    let rows: Vec<ConvergenceRow> = study_ns
        .iter()
        .zip(&per_n)
        .map(|(&n, runs)| {
            let seed_errors: Vec<f64> = runs.iter().map(|e| e.iter().copied().fold(0.0, f64::max)).collect();
            let mean = seed_errors.iter().sum::<f64>() / s;
            let half_width = if seed_errors.len() > 1 {
                let var = seed_errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (s - 1.0);
                student_t975(seed_errors.len() - 1) * (var / s).sqrt()
            } else {
                f64::INFINITY
            };
            let time_errors = (0..times.len()).map(|j| runs.iter().map(|e| e[j]).sum::<f64>() / s).collect();
            ConvergenceRow { n, seed_errors, mean_error: mean, half_width, time_errors }
        })
        .collect();

    let smallest = rows.iter().map(|r| r.mean_error).fold(f64::INFINITY, f64::min);
    if self_error > smallest / 3.0 {
        return Err(Error::ReferenceBudget(format!(
            "reference self-error {self_error:.3e} exceeds a third of the smallest scheme error {smallest:.3e}"
        )));
    }
    let monotone = rows.windows(2).all(|w| w[1].mean_error <= w[0].mean_error + w[0].half_width + w[1].half_width);
    let fit = rate_fit(
        &rows.iter().map(|r| r.n as f64).collect::<Vec<_>>(),
        &rows.iter().map(|r| r.mean_error).collect::<Vec<_>>(),
    )?;
    Ok(ConvergenceStudy {
        drift: drift.name().into(),
        ic: ic.name().into(),
        particles: cc.particles,
        seeds: cc.seeds.clone(),
        rows,
        fit,
        reference_self_error: self_error,
        monotone_within_margin: monotone,
        times,
    })
}

fn coarse_of(fine: &FPTrajectory, t: f64) -> Vec<f64> {
    coarsen(fine.density_at(t).expect("stored"))
}

fn run(drift: &DriftSpec, ic: &InitialDensity, cc: &ConvergenceConfig, n: usize, seed: u64) -> Result<SimulationRecord> {
    let mut cfg = SchemeConfig::new(n, cc.horizon, cc.particles, ic.dim(), seed)?;
    cfg.record = RecordCadence::Dyadic;
    cfg.summation = cc.summation;
    cfg.radius_multiplier = cc.radius_multiplier;
    cfg.weight_exponent = cc.weight_exponent;
    simulate_unchecked(&cfg, drift, ic)
}
