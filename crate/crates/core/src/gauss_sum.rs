//! Equal-weight Gaussian sums `(1/N) Σ_i p_τ(c_i − x_j)` over many targets.
//!
//! `Truncated` skips sources farther than `radius_multiplier · √(2τ)` from
//! each target. In 1D the kept sources are folded into per-box Taylor
//! expansions (boxes of width `√(4τ)`), so the cost is linear in the number
//! of sources plus targets. In higher dimensions a cell list with direct
//! summation is used. The returned bound covers both the skipped mass and
//! the series remainder.

use rayon::prelude::*;
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::heat_kernel::normalization;

/// Summation strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Summation {
    /// All sources, all targets.
    Exact,
    #[default]
    Truncated,
}

/// Relative accuracy target for the 1D series.
const SERIES_TOL: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct GaussSum {
    pub values: Vec<f64>,
    /// Uniform bound on `|computed − exact|` for every target.
    pub error_bound: f64,
}

/// Evaluates `(1/N) Σ_i p_τ(c_i − x_j)` for every target `x_j`.
///
/// `centers` and `targets` are flat row-major arrays with `dim` columns.
pub fn gauss_sum(
    dim: usize,
    centers: &[f64],
    tau: f64,
    targets: &[f64],
    summation: Summation,
    radius_multiplier: f64,
) -> Result<GaussSum> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::domain(format!("kernel time must be positive, got {tau}")));
    }
    if dim == 0 || centers.is_empty() || centers.len() % dim != 0 || targets.len() % dim != 0 {
        return Err(Error::domain("gauss_sum: empty or misshapen point arrays"));
    }
    match summation {
        Summation::Exact => Ok(GaussSum { values: exact(dim, centers, tau, targets), error_bound: 0.0 }),
        Summation::Truncated => {
            if !(radius_multiplier >= 1.0) {
                return Err(Error::domain("truncation radius multiplier must be >= 1"));
            }
            if dim == 1 {
                Ok(expansion_1d(centers, tau, targets, radius_multiplier))
            } else {
                Ok(cell_list(dim, centers, tau, targets, radius_multiplier))
            }
        }
    }
}

fn exact(dim: usize, centers: &[f64], tau: f64, targets: &[f64]) -> Vec<f64> {
    let n = centers.len() / dim;
    let norm = normalization(tau, dim) / n as f64;
    let inv = 1.0 / (4.0 * tau);
    targets
        .par_chunks(dim)
        .map(|x| {
            let mut s = 0.0;
            for c in centers.chunks_exact(dim) {
                let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                s += (-r2 * inv).exp();
            }
            norm * s
        })
        .collect()
}

fn cell_list(dim: usize, centers: &[f64], tau: f64, targets: &[f64], mult: f64) -> GaussSum {
    let n = centers.len() / dim;
    let radius = mult * (2.0 * tau).sqrt();
    let r2_max = radius * radius;
    let inv = 1.0 / (4.0 * tau);
    let norm = normalization(tau, dim);
    let cell_of = |x: &[f64]| -> Vec<i64> { x.iter().map(|v| (v / radius).floor() as i64).collect() };
    let mut cells: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (i, c) in centers.chunks_exact(dim).enumerate() {
        cells.entry(cell_of(c)).or_default().push(i);
    }
    // neighbor offsets in a fixed order
    let mut offsets: Vec<Vec<i64>> = vec![vec![]];
    for _ in 0..dim {
        offsets = offsets
            .into_iter()
            .flat_map(|o| {
                (-1..=1).map(move |k| {
                    let mut v = o.clone();
                    v.push(k);
                    v
                })
            })
            .collect();
    }
    let values = targets
        .par_chunks(dim)
        .map(|x| {
            let base = cell_of(x);
            let mut s = 0.0;
            let mut key = vec![0i64; dim];
            for off in &offsets {
                for k in 0..dim {
                    key[k] = base[k] + off[k];
                }
                if let Some(list) = cells.get(&key) {
                    for &i in list {
                        let c = &centers[i * dim..(i + 1) * dim];
                        let r2: f64 = c.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
                        if r2 <= r2_max {
                            s += (-r2 * inv).exp();
                        }
                    }
                }
            }
            norm * s / n as f64
        })
        .collect();
    GaussSum { values, error_bound: norm * (-mult * mult / 2.0).exp() }
}

struct Boxes {
    ids: Vec<i64>,
    /// `order` coefficients per box, box-major.
    coeffs: Vec<f64>,
    order: usize,
}

fn expansion_1d(centers: &[f64], tau: f64, targets: &[f64], mult: f64) -> GaussSum {
    let n = centers.len();
    let scale = (4.0 * tau).sqrt();
    let width = scale;
    let radius = mult * (2.0 * tau).sqrt();
    let norm = normalization(tau, 1);

    // |u| <= radius/scale + 1/2, |v| <= 1/2
    let u_max = radius / scale + 0.5;
    let z = 2.0 * u_max * 0.5;
    let mut order = 1usize;
    let mut term = z;
    while term > SERIES_TOL && order < 200 {
        order += 1;
        term *= z / order as f64;
    }
    let series_bound = term;

    // box coefficients A_k = (1/N) Σ exp(-v²) (2v)^k / k!
    let mut keyed: Vec<(i64, usize)> =
        centers.iter().enumerate().map(|(i, &c)| ((c / width).floor() as i64, i)).collect();
    keyed.sort_unstable();
    let mut ids = Vec::new();
    let mut coeffs = Vec::new();
    let inv_n = 1.0 / n as f64;
    let mut k = 0;
    while k < keyed.len() {
        let id = keyed[k].0;
        let center = (id as f64 + 0.5) * width;
        let start = coeffs.len();
        coeffs.resize(start + order, 0.0);
        while k < keyed.len() && keyed[k].0 == id {
            let v = (centers[keyed[k].1] - center) / scale;
            let mut t = (-v * v).exp() * inv_n;
            let tv = 2.0 * v;
            for (j, a) in coeffs[start..].iter_mut().enumerate() {
                *a += t;
                t *= tv / (j + 1) as f64;
            }
            k += 1;
        }
        ids.push(id);
    }
    let boxes = Boxes { ids, coeffs, order };

    let values = targets
        .par_iter()
        .map(|&x| {
            let lo = ((x - radius) / width).floor() as i64;
            let hi = ((x + radius) / width).floor() as i64;
            let first = boxes.ids.partition_point(|&b| b < lo);
            let mut s = 0.0;
            for (b, &id) in boxes.ids[first..].iter().enumerate() {
                if id > hi {
                    break;
                }
                let center = (id as f64 + 0.5) * width;
                let u = (x - center) / scale;
                let a = &boxes.coeffs[(first + b) * boxes.order..(first + b + 1) * boxes.order];
                let mut poly = 0.0;
                for &c in a.iter().rev() {
                    poly = poly * u + c;
                }
                s += (-u * u).exp() * poly;
            }
            norm * s
        })
        .collect();
    GaussSum { values, error_bound: norm * ((-mult * mult / 2.0).exp() + series_bound) }
}
