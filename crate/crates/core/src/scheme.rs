//! Euler–Maruyama particle scheme with a first-step drift cutoff and the
//! one-step Gaussian-mixture density estimator.
//!
//! For `k >= 1`
//!
//! ```text
//! X_{k+1} = X_k + b(t_k, X_k, ℓ̂_{t_k}(X_k), μ̂_{t_k}) ε + √(2ε) Z
//! ```
//!
//! and step 0 is pure diffusion. `ℓ̂_{t_k}` is the exact within-step density
//! given cloud `k − 1`: `(1/N) Σ_i p_ε(x_i + b_i ε − x)`.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

use crate::drift::{verify_assumptions, AssumptionReport, DriftSpec, ProbeConfig};
use crate::error::{Error, Result};
use crate::gauss_sum::{gauss_sum, GaussSum, Summation};
use crate::heat_kernel::kernel_from_norm_sq;
use crate::initial::InitialDensity;
use crate::measures::EmpiricalMeasure;
use crate::rng::{Purpose, RngCheckpoint, StreamKey};

/// Uniform grid `t_k = k T / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    n: usize,
    horizon: f64,
}

impl TimeGrid {
    pub fn new(n: usize, horizon: f64) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("time grid needs n >= 1"));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::domain(format!("horizon must be positive, got {horizon}")));
        }
        Ok(Self { n, horizon })
    }

    pub fn steps(&self) -> usize {
        self.n
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn step_size(&self) -> f64 {
        self.horizon / self.n as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        if k == self.n {
            self.horizon
        } else {
            k as f64 * self.horizon / self.n as f64
        }
    }

    /// `(k, t_k, ε)` with `t_k <= t < t_{k+1}`; `t = T` maps to the last cell.
    pub fn time_map(&self, t: f64) -> Result<(usize, f64, f64)> {
        if !(0.0..=self.horizon).contains(&t) {
            return Err(Error::domain(format!("time {t} outside [0, {}]", self.horizon)));
        }
        let mut k = ((t / self.horizon) * self.n as f64).floor() as usize;
        k = k.min(self.n - 1);
        // guard against rounding on either side of a grid point
        while k > 0 && self.time(k) > t {
            k -= 1;
        }
        while k + 1 < self.n && self.time(k + 1) <= t {
            k += 1;
        }
        Ok((k, self.time(k), self.step_size()))
    }

    /// Grid index of `t` if it is a grid point (within 1e-12 relative).
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let x = t / self.horizon * self.n as f64;
        let k = x.round();
        ((x - k).abs() < 1e-9 && k >= 0.0 && k <= self.n as f64).then_some(k as usize)
    }
}

/// `N × d` particle positions at one grid index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleCloud {
    dim: usize,
    positions: Vec<f64>,
}

impl ParticleCloud {
    pub fn new(dim: usize, positions: Vec<f64>) -> Result<Self> {
        if dim == 0 || positions.is_empty() || positions.len() % dim != 0 {
            return Err(Error::domain("particle positions must be a nonempty N x d array"));
        }
        if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { particle: i / dim, step: 0 });
        }
        Ok(Self { dim, positions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn particle(&self, i: usize) -> &[f64] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn into_positions(self) -> Vec<f64> {
        self.positions
    }

    pub fn measure(&self) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(self.dim, self.positions.clone()).expect("cloud is a valid measure")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityMode {
    #[default]
    OneStepMixture,
    /// Gaussian KDE with Silverman bandwidth, for comparison.
    Kde,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DensityKind {
    ExactInitial,
    OneStepMixture,
    Kde,
}

/// Evaluable marginal density at a recorded time.
#[derive(Debug, Clone)]
pub enum DensityEstimate {
    ExactInitial(Arc<InitialDensity>),
    /// `(1/N) Σ p_τ(c_i − x)`; for the mixture `c_i = x_i + b_i dt`, `τ = dt`,
    /// for the KDE `c_i = x_i`, `τ = h²/2`.
    Kernel { kind: DensityKind, dim: usize, centers: Arc<Vec<f64>>, tau: f64 },
}

impl DensityEstimate {
    /// Within-step mixture: cloud at `t_k`, its frozen drifts, elapsed `dt`.
    pub fn one_step_mixture(prev: &ParticleCloud, frozen_drifts: &[f64], dt: f64) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::domain(format!("elapsed in-step time must be positive, got {dt}")));
        }
        if frozen_drifts.len() != prev.positions.len() {
            return Err(Error::DimensionMismatch { expected: prev.positions.len(), got: frozen_drifts.len() });
        }
        let centers = prev.positions.iter().zip(frozen_drifts).map(|(x, b)| x + b * dt).collect();
        Ok(DensityEstimate::Kernel {
            kind: DensityKind::OneStepMixture,
            dim: prev.dim,
            centers: Arc::new(centers),
            tau: dt,
        })
    }

    /// Gaussian KDE with the Silverman rule `h = σ̂ (4 / ((d + 2) N))^{1/(d+4)}`.
    pub fn kde(cloud: &ParticleCloud) -> Self {
        let (d, n) = (cloud.dim, cloud.len());
        let mut var = 0.0;
        for j in 0..d {
            let mean = (0..n).map(|i| cloud.positions[i * d + j]).sum::<f64>() / n as f64;
            var += (0..n).map(|i| (cloud.positions[i * d + j] - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0).max(1.0);
        }
        let sigma = (var / d as f64).sqrt().max(1e-12);
        let h = sigma * (4.0 / ((d as f64 + 2.0) * n as f64)).powf(1.0 / (d as f64 + 4.0));
        DensityEstimate::Kernel {
            kind: DensityKind::Kde,
            dim: d,
            centers: Arc::new(cloud.positions.clone()),
            tau: h * h / 2.0,
        }
    }

    pub fn kind(&self) -> DensityKind {
        match self {
            DensityEstimate::ExactInitial(_) => DensityKind::ExactInitial,
            DensityEstimate::Kernel { kind, .. } => *kind,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityEstimate::ExactInitial(ic) => ic.dim(),
            DensityEstimate::Kernel { dim, .. } => *dim,
        }
    }

    /// Single-point evaluation by direct summation.
    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            DensityEstimate::ExactInitial(ic) => ic.density(x),
            DensityEstimate::Kernel { dim, centers, tau, .. } => {
                let n = centers.len() / dim;
                centers
                    .chunks_exact(*dim)
                    .map(|c| kernel_from_norm_sq(*tau, *dim, c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum()))
                    .sum::<f64>()
                    / n as f64
            }
        }
    }

    /// Evaluation at many targets with an error bound.
    pub fn eval_many(&self, targets: &[f64], summation: Summation, radius_multiplier: f64) -> Result<GaussSum> {
        match self {
            DensityEstimate::ExactInitial(ic) => {
                let d = ic.dim();
                Ok(GaussSum { values: targets.par_chunks(d).map(|x| ic.density(x)).collect(), error_bound: 0.0 })
            }
            DensityEstimate::Kernel { dim, centers, tau, .. } => {
                gauss_sum(*dim, centers, *tau, targets, summation, radius_multiplier)
            }
        }
    }
}

/// `(1/N) Σ_i p_dt(x_i − x + b_i dt)` by direct summation.
pub fn density_estimate(prev: &ParticleCloud, frozen_drifts: &[f64], dt: f64, x: &[f64]) -> Result<f64> {
    if x.len() != prev.dim {
        return Err(Error::DimensionMismatch { expected: prev.dim, got: x.len() });
    }
    Ok(DensityEstimate::one_step_mixture(prev, frozen_drifts, dt)?.eval(x))
}

/// Which grid indices to keep in the record. 0 and `n` are always kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordCadence {
    /// `T j / 8`, `j = 0..=8`; needs `n` divisible by 8.
    Dyadic,
    All,
    Stride(usize),
}

impl RecordCadence {
    pub fn indices(&self, n: usize) -> Result<Vec<usize>> {
        let mut out: Vec<usize> = match *self {
            RecordCadence::Dyadic => {
                if n % 8 != 0 {
                    return Err(Error::domain(format!("dyadic recording needs n divisible by 8, got {n}")));
                }
                (0..=8).map(|j| j * n / 8).collect()
            }
            RecordCadence::All => (0..=n).collect(),
            RecordCadence::Stride(s) => {
                if s == 0 {
                    return Err(Error::domain("record stride must be positive"));
                }
                (0..=n).step_by(s).collect()
            }
        };
        if *out.last().unwrap() != n {
            out.push(n);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeConfig {
    pub grid: TimeGrid,
    pub particles: usize,
    pub dim: usize,
    pub density_mode: DensityMode,
    pub summation: Summation,
    pub radius_multiplier: f64,
    pub seed: u64,
    /// Wasserstein order `p` of the drift's measure argument.
    pub weight_exponent: f64,
    pub record: RecordCadence,
}

impl SchemeConfig {
    pub fn new(n: usize, horizon: f64, particles: usize, dim: usize, seed: u64) -> Result<Self> {
        let cfg = Self {
            grid: TimeGrid::new(n, horizon)?,
            particles,
            dim,
            density_mode: DensityMode::OneStepMixture,
            summation: Summation::Truncated,
            radius_multiplier: 8.0,
            seed,
            weight_exponent: 1.0,
            record: if n % 8 == 0 { RecordCadence::Dyadic } else { RecordCadence::All },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.particles < 2 {
            return Err(Error::domain(format!("need at least 2 particles, got {}", self.particles)));
        }
        if self.dim == 0 {
            return Err(Error::domain("dimension must be positive"));
        }
        if !(self.radius_multiplier >= 4.0) {
            return Err(Error::domain(format!(
                "truncation radius multiplier must be >= 4, got {}",
                self.radius_multiplier
            )));
        }
        if !(self.weight_exponent >= 1.0) {
            return Err(Error::domain("weight exponent p must be >= 1"));
        }
        self.record.indices(self.grid.steps())?;
        Ok(())
    }
}

/// Cloud and density at a recorded grid index.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub cloud: Arc<ParticleCloud>,
    /// Drifts applied on `[t_k, t_{k+1})`; `None` at `k = n`.
    pub drifts: Option<Arc<Vec<f64>>>,
    pub density: DensityEstimate,
    /// Bound on the truncation error of the density values fed to the drift.
    pub density_error_bound: f64,
}

impl Snapshot {
    pub fn measure(&self) -> EmpiricalMeasure {
        self.cloud.measure()
    }
}

#[derive(Debug, Clone)]
pub struct SimulationRecord {
    pub config: SchemeConfig,
    pub drift: DriftSpec,
    pub ic: InitialDensity,
    pub snapshots: Vec<Snapshot>,
    pub checkpoints: Vec<RngCheckpoint>,
    pub assumptions: Option<AssumptionReport>,
}

impl SimulationRecord {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn at_step(&self, k: usize) -> Option<&Snapshot> {
        self.snapshots.binary_search_by_key(&k, |s| s.step).ok().map(|i| &self.snapshots[i])
    }

    pub fn at_time(&self, t: f64) -> Option<&Snapshot> {
        self.config.grid.index_of(t).and_then(|k| self.at_step(k))
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("record always holds t = T")
    }
}

/// Output of one step.
pub struct StepOutput {
    pub cloud: ParticleCloud,
    /// Drifts applied during the step (zero at `k = 0`).
    pub drifts: Vec<f64>,
    /// `ℓ̂` at `t_{k+1}`.
    pub density: DensityEstimate,
    /// Truncation bound for the density values used in the drift.
    pub density_error_bound: f64,
}

/// Advances `cloud` from grid index `k` using per-particle noise from `key`.
pub fn step(
    cloud: &ParticleCloud,
    k: usize,
    density: &DensityEstimate,
    drift: &DriftSpec,
    config: &SchemeConfig,
    key: StreamKey,
) -> Result<StepOutput> {
    let d = cloud.dim;
    let mut noise = vec![0.0; cloud.positions.len()];
    noise.par_chunks_mut(d).enumerate().for_each(|(i, z)| {
        let mut rng = key.rng(i as u64, k as u64, Purpose::Increment);
        for v in z.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    });
    step_with_noise(cloud, k, density, drift, config, &noise)
}

/// Same as [`step`] with explicit standard normal increments (`N × d`).
pub fn step_with_noise(
    cloud: &ParticleCloud,
    k: usize,
    density: &DensityEstimate,
    drift: &DriftSpec,
    config: &SchemeConfig,
    noise: &[f64],
) -> Result<StepOutput> {
    let d = cloud.dim;
    let grid = &config.grid;
    if k >= grid.steps() {
        return Err(Error::domain(format!("step index {k} beyond the grid")));
    }
    if noise.len() != cloud.positions.len() {
        return Err(Error::DimensionMismatch { expected: cloud.positions.len(), got: noise.len() });
    }
    let eps = grid.step_size();
    let t_k = grid.time(k);
    let mut bound = 0.0;
    let drifts = if k == 0 {
        // drift cutoff on the first step
        vec![0.0; cloud.positions.len()]
    } else {
        let r = if drift.model.uses_density() {
            density.eval_many(&cloud.positions, config.summation, config.radius_multiplier)?
        } else {
            GaussSum { values: vec![0.0; cloud.len()], error_bound: 0.0 }
        };
        bound = r.error_bound;
        let mu = cloud.measure();
        let bound_drift = drift.bind(&mu);
        let mut out = vec![0.0; cloud.positions.len()];
        out.par_chunks_mut(d).zip(cloud.positions.par_chunks(d)).zip(r.values.par_iter()).for_each(
            |((o, x), &ri)| bound_drift.eval_into(t_k, x, ri.max(0.0), o),
        );
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Model {
                message: "non-finite drift value".into(),
                probe: format!("step {k}, particle {}", i / d),
            });
        }
        out
    };
    let sq = (2.0 * eps).sqrt();
    let positions: Vec<f64> = cloud
        .positions
        .par_iter()
        .zip(drifts.par_iter())
        .zip(noise.par_iter())
        .map(|((x, b), z)| x + b * eps + sq * z)
        .collect();
    if let Some(i) = positions.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { particle: i / d, step: k });
    }
    let next = ParticleCloud { dim: d, positions };
    let density = match config.density_mode {
        DensityMode::OneStepMixture => DensityEstimate::one_step_mixture(cloud, &drifts, eps)?,
        DensityMode::Kde => DensityEstimate::kde(&next),
    };
    Ok(StepOutput { cloud: next, drifts, density, density_error_bound: bound })
}

/// Default probe set used by [`simulate`] before running.
pub fn default_probes(config: &SchemeConfig) -> ProbeConfig {
    ProbeConfig { dim: config.dim, horizon: config.grid.horizon(), ..Default::default() }
}

/// Runs the assumption checker, then the scheme.
pub fn simulate(config: &SchemeConfig, drift: &DriftSpec, ic: &InitialDensity) -> Result<SimulationRecord> {
    let report = verify_assumptions(drift, &default_probes(config), config.seed)?;
    if !report.passed() {
        return Err(Error::AssumptionViolated(format!(
            "{}: max |b| {:.4} (declared {}), worst ratios r {:.4} / W {:.4}; {}",
            report.drift,
            report.max_abs_b_observed,
            report.declared_bound,
            report.worst_density_lipschitz_ratio,
            report.worst_measure_lipschitz_ratio,
            report.worst_bound_probe
        )));
    }
    let mut rec = simulate_unchecked(config, drift, ic)?;
    rec.assumptions = Some(report);
    Ok(rec)
}

/// Runs the scheme without the assumption check.
pub fn simulate_unchecked(config: &SchemeConfig, drift: &DriftSpec, ic: &InitialDensity) -> Result<SimulationRecord> {
    config.validate()?;
    if ic.dim() != config.dim {
        return Err(Error::DimensionMismatch { expected: config.dim, got: ic.dim() });
    }
    if let Some(d) = drift.dim() {
        if d != config.dim {
            return Err(Error::DimensionMismatch { expected: config.dim, got: d });
        }
    }
    let key = StreamKey::new(config.seed);
    let n = config.grid.steps();
    let keep = config.record.indices(n)?;
    let mut keep_iter = keep.iter().peekable();

    let mut cloud = Arc::new(ic.sample(config.particles, config.seed)?);
    let mut density = DensityEstimate::ExactInitial(Arc::new(ic.clone()));
    let mut density_bound = 0.0;
    let mut snapshots = Vec::with_capacity(keep.len());
    let mut checkpoints = vec![key.checkpoint(0, Purpose::Initial)];

    for k in 0..=n {
        let out = if k < n {
            checkpoints.push(key.checkpoint(k as u64, Purpose::Increment));
            Some(step(&cloud, k, &density, drift, config, key).map_err(|e| Error::Step { step: k, source: Box::new(e) })?)
        } else {
            None
        };
        if keep_iter.peek() == Some(&&k) {
            keep_iter.next();
            snapshots.push(Snapshot {
                step: k,
                time: config.grid.time(k),
                cloud: cloud.clone(),
                drifts: out.as_ref().map(|o| Arc::new(o.drifts.clone())),
                density: density.clone(),
                density_error_bound: density_bound,
            });
        }
        if let Some(o) = out {
            density_bound = o.density_error_bound;
            cloud = Arc::new(o.cloud);
            density = o.density;
        }
    }
    Ok(SimulationRecord {
        config: config.clone(),
        drift: drift.clone(),
        ic: ic.clone(),
        snapshots,
        checkpoints,
        assumptions: None,
    })
}
