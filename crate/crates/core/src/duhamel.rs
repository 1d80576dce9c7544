//! Independent evaluation of the scheme's marginal density through
//!
//! ```text
//! ℓⁿ_t(x) = P_t ℓ_ν(x) + ∫_0^t E⟨bⁿ_s, ∇p_{t−s}(X_s − x)⟩ ds
//! ```
//!
//! with `X_s` inside a step reconstructed from the stored endpoints. The
//! default `Conditional` mode integrates the bridge out analytically: given
//! both endpoints, `X_s` is Gaussian with linearly interpolated mean and
//! variance `2(s − t_k)(t_{k+1} − s)/ε` per coordinate, so the expected
//! kernel gradient is a gradient of `p` at a slightly larger time. `Sampled`
//! draws one bridge point per particle and node instead.
//!
//! Sums are direct over particles (no truncation), independent of the fast
//! summation used by the scheme.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::heat_kernel::normalization;
use crate::initial::InitialDensity;
use crate::quadrature::gauss_legendre;
use crate::rng::{Purpose, StreamKey};
use crate::scheme::{DensityEstimate, SimulationRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BridgeMode {
    #[default]
    Conditional,
    Sampled,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuhamelQuery {
    pub time: f64,
    /// Flat `M × d` evaluation points.
    pub points: Vec<f64>,
    /// Total number of time nodes over `[0, t]` (at least 16).
    pub nodes: usize,
    pub bridge: BridgeMode,
}

impl DuhamelQuery {
    pub fn new(time: f64, points: Vec<f64>) -> Self {
        Self { time, points, nodes: 64, bridge: BridgeMode::Conditional }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DuhamelResult {
    pub time: f64,
    pub dim: usize,
    pub points: Vec<f64>,
    pub values: Vec<f64>,
    /// `P_t ℓ_ν` at each point.
    pub heat_term: Vec<f64>,
    /// Standard error of the particle average of the drift term.
    pub mc_error: Vec<f64>,
    /// `|I_q − I_{q/2}|` between the rule and its half-order companion.
    pub quadrature_error: Vec<f64>,
}

struct Node {
    step: usize,
    /// `(s − t_k)/ε`.
    frac: f64,
    /// Kernel time at the node (`t − s`, plus the bridge variance / 2 in
    /// conditional mode).
    tau: f64,
    fine: f64,
    coarse: f64,
}

fn nodes_for_step(t_k: f64, t_end: f64, t: f64, order: usize, last: bool) -> Vec<(f64, f64, f64)> {
    // returns (s, fine weight, coarse weight); fine and coarse nodes are
    // listed separately with the other weight zero
    let mut out = Vec::new();
    let len = t_end - t_k;
    for (ord, fine) in [(order, true), ((order / 2).max(1), false)] {
        let (x, w) = gauss_legendre(ord);
        for (xi, wi) in x.iter().zip(&w) {
            let u = 0.5 * (xi + 1.0);
            let (s, ds) = if last {
                // s = t − (t − t_k) u², clustering nodes at s = t
                (t - len * u * u, 2.0 * len * u * 0.5 * wi)
            } else {
                (t_k + len * u, len * 0.5 * wi)
            };
            if fine {
                out.push((s, ds, 0.0));
            } else {
                out.push((s, 0.0, ds));
            }
        }
    }
    out
}

/// Evaluates the Duhamel representation on `q.points`.
pub fn duhamel_density(
    q: &DuhamelQuery,
    record: &SimulationRecord,
    drift: &DriftSpec,
    ic: &InitialDensity,
) -> Result<DuhamelResult> {
    if drift != &record.drift || ic != &record.ic {
        return Err(Error::domain("record was produced with a different drift or initial law"));
    }
    if q.nodes < 16 {
        return Err(Error::domain(format!("time quadrature needs at least 16 nodes, got {}", q.nodes)));
    }
    let grid = record.config.grid;
    let t = q.time;
    if !(t > 0.0) || t > grid.horizon() * (1.0 + 1e-12) {
        return Err(Error::NotCovered { time: t, reason: format!("outside (0, {}]", grid.horizon()) });
    }
    let d = record.config.dim;
    if q.points.is_empty() || q.points.len() % d != 0 {
        return Err(Error::domain("evaluation points must be a nonempty M x d array"));
    }
    let eps = grid.step_size();
    let t = t.min(grid.horizon());
    let (k_last, _, _) = grid.time_map(t)?;
    // the step containing t must have its end point recorded; t = t_k exactly
    // ends with the previous step
    let k_last = if grid.index_of(t) == Some(k_last) { k_last - 1 } else { k_last };
    let n_part = record.config.particles;
    let mut clouds = Vec::with_capacity(k_last + 2);
    let mut drifts = Vec::with_capacity(k_last + 1);
    for k in 0..=k_last + 1 {
        let snap = record.at_step(k).ok_or_else(|| Error::NotCovered {
            time: t,
            reason: format!("grid index {k} was not recorded; simulate with record cadence 'all'"),
        })?;
        clouds.push(snap.cloud.positions());
        if k <= k_last {
            drifts.push(
                snap.drifts
                    .as_ref()
                    .ok_or_else(|| Error::NotCovered { time: t, reason: format!("no drifts stored at step {k}") })?
                    .as_slice(),
            );
        }
    }
    if drifts[0].iter().any(|&b| b != 0.0) {
        return Err(Error::CutoffMismatch("drift on the first step is not zero".into()));
    }

    let steps_active = k_last.max(1);
    let order = q.nodes.div_ceil(steps_active).max(2);
    let mut nodes = Vec::new();
    for k in 1..=k_last {
        let t_k = grid.time(k);
        let last = k == k_last;
        let t_end = if last { t } else { grid.time(k + 1) };
        let ord = if last { 2 * order } else { order };
        for (s, fine, coarse) in nodes_for_step(t_k, t_end, t, ord, last) {
            let frac = (s - t_k) / eps;
            let mut tau = t - s;
            if q.bridge == BridgeMode::Conditional {
                tau += (s - t_k) * (t_k + eps - s) / eps;
            }
            if tau > 0.0 {
                nodes.push(Node { step: k, frac, tau, fine, coarse });
            }
        }
    }
    // per node constants: 1/(4τ) and p-normalization/(2τ)
    let consts: Vec<(f64, f64)> =
        nodes.iter().map(|nd| (1.0 / (4.0 * nd.tau), normalization(nd.tau, d) / (2.0 * nd.tau))).collect();

    // bridge draws for the sampled mode: one d-vector per (particle, node)
    let bridge_noise: Option<Vec<f64>> = (q.bridge == BridgeMode::Sampled).then(|| {
        let key = StreamKey::new(record.config.seed);
        let mut noise = vec![0.0; n_part * nodes.len() * d];
        noise.par_chunks_mut(nodes.len() * d).enumerate().for_each(|(i, out)| {
            let mut current = usize::MAX;
            let mut rng = key.rng(i as u64, 0, Purpose::Bridge);
            for (j, nd) in nodes.iter().enumerate() {
                if nd.step != current {
                    current = nd.step;
                    rng = key.rng(i as u64, nd.step as u64, Purpose::Bridge);
                }
                let v = 2.0 * nd.frac * (1.0 - nd.frac) * eps;
                for c in 0..d {
                    out[j * d + c] = v.sqrt() * rng.sample::<f64, _>(StandardNormal);
                }
            }
        });
        noise
    });

    let per_point: Vec<(f64, f64, f64)> = q
        .points
        .par_chunks(d)
        .map(|x| {
            let (mut sum_f, mut sum_f2, mut sum_c) = (0.0, 0.0, 0.0);
            let mut y = vec![0.0; d];
            for i in 0..n_part {
                let (mut di_f, mut di_c) = (0.0, 0.0);
                for (j, nd) in nodes.iter().enumerate() {
                    let k = nd.step;
                    let a = &clouds[k][i * d..(i + 1) * d];
                    let bpos = &clouds[k + 1][i * d..(i + 1) * d];
                    let b = &drifts[k][i * d..(i + 1) * d];
                    let mut r2 = 0.0;
                    let mut by = 0.0;
                    for c in 0..d {
                        let mut m = a[c] + nd.frac * (bpos[c] - a[c]);
                        if let Some(noise) = &bridge_noise {
                            m += noise[(i * nodes.len() + j) * d + c];
                        }
                        y[c] = m - x[c];
                        r2 += y[c] * y[c];
                        by += b[c] * y[c];
                    }
                    let (c1, c2) = consts[j];
                    let e = r2 * c1;
                    if e > 745.0 || by == 0.0 {
                        continue;
                    }
                    // ⟨b, ∇p_τ(y)⟩ = −⟨b, y⟩ p_τ(y) / (2τ)
                    let val = -by * c2 * (-e).exp();
                    di_f += nd.fine * val;
                    di_c += nd.coarse * val;
                }
                sum_f += di_f;
                sum_f2 += di_f * di_f;
                sum_c += di_c;
            }
            let n = n_part as f64;
            let mean = sum_f / n;
            let var = ((sum_f2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
            (mean, (var / n).sqrt(), (mean - sum_c / n).abs())
        })
        .collect();

    let heat_term: Vec<f64> = q.points.chunks(d).map(|x| ic.heat_flow(t, x)).collect::<Result<_>>()?;
    let values = heat_term.iter().zip(&per_point).map(|(h, p)| h + p.0).collect();
    Ok(DuhamelResult {
        time: t,
        dim: d,
        points: q.points.clone(),
        values,
        heat_term,
        mc_error: per_point.iter().map(|p| p.1).collect(),
        quadrature_error: per_point.iter().map(|p| p.2).collect(),
    })
}

/// Recorded density at `t` with its per-point Monte Carlo standard error
/// `sd_i(p_τ(c_i − x)) / √N`.
pub fn recorded_density_with_error(record: &SimulationRecord, t: f64, points: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let snap = record
        .at_time(t)
        .ok_or_else(|| Error::NotCovered { time: t, reason: "not a recorded grid time".into() })?;
    match &snap.density {
        DensityEstimate::ExactInitial(ic) => {
            let d = ic.dim();
            Ok((points.chunks(d).map(|x| ic.density(x)).collect(), vec![0.0; points.len() / d]))
        }
        DensityEstimate::Kernel { dim, centers, tau, .. } => {
            let d = *dim;
            let n = (centers.len() / d) as f64;
            let (c1, norm) = (1.0 / (4.0 * tau), normalization(*tau, d));
            let out: Vec<(f64, f64)> = points
                .par_chunks(d)
                .map(|x| {
                    let (mut s, mut s2) = (0.0, 0.0);
                    for c in centers.chunks_exact(d) {
                        let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                        let v = norm * (-r2 * c1).exp();
                        s += v;
                        s2 += v * v;
                    }
                    let mean = s / n;
                    let var = ((s2 / n - mean * mean) * n / (n - 1.0)).max(0.0);
                    (mean, (var / n).sqrt())
                })
                .collect();
            Ok((out.iter().map(|p| p.0).collect(), out.iter().map(|p| p.1).collect()))
        }
    }
}

/// Duhamel vs recorded-density comparison on a 1D grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CrossCheck {
    pub time: f64,
    pub grid: Vec<f64>,
    pub duhamel: Vec<f64>,
    pub mixture: Vec<f64>,
    /// `√(se_duhamel² + se_mixture²) + quadrature error` per point.
    pub combined_error: Vec<f64>,
    pub max_abs_difference: f64,
    /// Largest combined error over the grid.
    pub max_combined_error: f64,
    /// `max |duhamel − mixture| / max combined_error`.
    pub sup_error_ratio: f64,
    /// Pointwise `max_j |duhamel_j − mixture_j| / combined_error_j`; unreliable
    /// in the far tails where few particles contribute.
    pub max_error_ratio: f64,
    /// Grid points with a pointwise ratio above 3.
    pub pointwise_exceedances: usize,
    pub duhamel_mass: f64,
    pub mixture_mass: f64,
}

/// Compares both estimators at a recorded time `t` on a uniform 1D grid.
pub fn cross_check(
    record: &SimulationRecord,
    t: f64,
    grid: Vec<f64>,
    nodes: usize,
    bridge: BridgeMode,
) -> Result<CrossCheck> {
    if record.config.dim != 1 {
        return Err(Error::domain("cross check runs on 1D records"));
    }
    let q = DuhamelQuery { time: t, points: grid.clone(), nodes, bridge };
    let duh = duhamel_density(&q, record, &record.drift, &record.ic)?;
    let (mix, mix_se) = recorded_density_with_error(record, t, &grid)?;
    let combined: Vec<f64> = (0..grid.len())
        .map(|j| (duh.mc_error[j].powi(2) + mix_se[j].powi(2)).sqrt() + duh.quadrature_error[j])
        .collect();
    let mut max_diff = 0.0f64;
    let mut max_ratio = 0.0f64;
    let mut exceed = 0;
    for j in 0..grid.len() {
        let diff = (duh.values[j] - mix[j]).abs();
        max_diff = max_diff.max(diff);
        let r = if combined[j] > 0.0 {
            diff / combined[j]
        } else if diff > 0.0 {
            f64::INFINITY
        } else {
            0.0
        };
        max_ratio = max_ratio.max(r);
        exceed += (r > 3.0) as usize;
    }
    let max_combined = combined.iter().copied().fold(0.0, f64::max);
    Ok(CrossCheck {
        time: t,
        duhamel_mass: trapezoid(&grid, &duh.values),
        mixture_mass: trapezoid(&grid, &mix),
        grid,
        duhamel: duh.values,
        mixture: mix,
        combined_error: combined,
        max_abs_difference: max_diff,
        max_combined_error: max_combined,
        sup_error_ratio: if max_combined > 0.0 { max_diff / max_combined } else { f64::INFINITY },
        max_error_ratio: max_ratio,
        pointwise_exceedances: exceed,
    })
}

pub(crate) fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
}
