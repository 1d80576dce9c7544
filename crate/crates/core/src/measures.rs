//! Weighted empirical probability measures: moments, tail masses, and exact
//! Wasserstein distances.
//!
//! In one dimension `W_p` is computed from the sorted quantile coupling; in
//! higher dimension the discrete transport problem is solved exactly by
//! minimum-cost flow, up to a support-size cap. There is no approximate mode.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transport;

/// Default cap on the combined support size for exact transport in `d >= 2`.
pub const DEFAULT_LP_CAP: usize = 600;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalMeasure {
    dim: usize,
    /// Row-major `len × dim`.
    points: Vec<f64>,
    weights: Vec<f64>,
}

impl EmpiricalMeasure {
    /// Builds a measure from flat row-major points. `weights = None` means
    /// uniform weights `1/N`.
    pub fn new(dim: usize, points: Vec<f64>, weights: Option<Vec<f64>>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::domain("measure dimension must be >= 1"));
        }
        if points.is_empty() {
            return Err(Error::domain("empirical measure must be nonempty"));
        }
        if points.len() % dim != 0 {
            return Err(Error::DimensionMismatch { expected: dim, got: points.len() % dim });
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("measure points must be finite"));
        }
        let n = points.len() / dim;
        let weights = match weights {
            None => vec![1.0 / n as f64; n],
            Some(w) => {
                if w.len() != n {
                    return Err(Error::domain(format!("{} weights for {n} points", w.len())));
                }
                if w.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
                    return Err(Error::domain("weights must be nonnegative and finite"));
                }
                let s: f64 = w.iter().sum();
                if (s - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::domain(format!("weights sum to {s}, expected 1")));
                }
                w
            }
        };
        Ok(Self { dim, points, weights })
    }

    pub fn uniform(dim: usize, points: Vec<f64>) -> Result<Self> {
        Self::new(dim, points, None)
    }

    /// Normalizes arbitrary nonnegative masses to a probability measure.
    pub fn from_masses(dim: usize, points: Vec<f64>, masses: &[f64]) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0) {
            return Err(Error::domain("total mass must be positive"));
        }
        let w: Vec<f64> = masses.iter().map(|m| m / total).collect();
        Self::new(dim, points, Some(w))
    }

    pub fn dirac(point: &[f64]) -> Result<Self> {
        Self::uniform(point.len(), point.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (i, w) in self.weights.iter().enumerate() {
            for (mk, xk) in m.iter_mut().zip(self.point(i)) {
                *mk += w * xk;
            }
        }
        m
    }

    /// `Σ w_i |x_i|^p`.
    pub fn moment(&self, p: f64) -> f64 {
        (0..self.len()).map(|i| self.weights[i] * norm(self.point(i)).powf(p)).sum()
    }

    /// `Σ_{|x_i| > R} w_i |x_i|^p`; `p = 0` gives the mass outside the ball.
    pub fn tail_mass(&self, p: f64, radius: f64) -> f64 {
        (0..self.len())
            .filter_map(|i| {
                let r = norm(self.point(i));
                (r > radius).then(|| self.weights[i] * r.powf(p))
            })
            .sum()
    }

    /// Sub-measure on the given indices, reweighted uniformly.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut pts = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            pts.extend_from_slice(self.point(i));
        }
        Self::uniform(self.dim, pts)
    }

    /// Writes one point per row (`x0,..,x{d-1},weight`).
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<String> = (0..self.dim).map(|k| format!("x{k}")).collect();
        header.push("weight".into());
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row: Vec<String> = self.point(i).iter().map(|v| format!("{v:e}")).collect();
            row.push(format!("{:e}", self.weights[i]));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads rows of coordinates with an optional trailing `weight` column.
    /// Columns named `x*` are coordinates; without a header-declared weight
    /// column the measure is uniform.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        let weight_col = headers.iter().position(|h| h.trim() == "weight");
        let coord_cols: Vec<usize> =
            (0..headers.len()).filter(|&c| Some(c) != weight_col).collect();
        let dim = coord_cols.len();
        let mut pts = Vec::new();
        let mut wts = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            for &c in &coord_cols {
                pts.push(parse_field(&rec, c)?);
            }
            if let Some(c) = weight_col {
                wts.push(parse_field(&rec, c)?);
            }
        }
        if weight_col.is_some() {
            // tolerate rounding in serialized weights
            let s: f64 = wts.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::domain(format!("weights in CSV sum to {s}")));
            }
            let w = wts.iter().map(|v| v / s).collect();
            Self::new(dim, pts, Some(w))
        } else {
            Self::uniform(dim, pts)
        }
    }
}

fn parse_field(rec: &csv::StringRecord, c: usize) -> Result<f64> {
    let s = rec.get(c).unwrap_or("").trim();
    s.parse::<f64>().map_err(|_| Error::domain(format!("bad numeric field `{s}`")))
}

#[inline]
pub(crate) fn norm(x: &[f64]) -> f64 {
    if x.len() == 1 {
        x[0].abs()
    } else {
        x.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

fn dist_pow(x: &[f64], y: &[f64], p: f64) -> f64 {
    let d = if x.len() == 1 {
        (x[0] - y[0]).abs()
    } else {
        x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    if p == 1.0 {
        d
    } else if p == 2.0 {
        d * d
    } else {
        d.powf(p)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanEntry {
    pub source: usize,
    pub target: usize,
    pub mass: f64,
}

/// A coupling in `Γ(μ, ν)` with its total cost `Σ mass · |x − y|^p`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransportPlan {
    pub entries: Vec<PlanEntry>,
    pub cost: f64,
}

impl TransportPlan {
    pub fn source_marginal(&self, len: usize) -> Vec<f64> {
        let mut m = vec![0.0; len];
        for e in &self.entries {
            m[e.source] += e.mass;
        }
        m
    }

    pub fn target_marginal(&self, len: usize) -> Vec<f64> {
        let mut m = vec![0.0; len];
        for e in &self.entries {
            m[e.target] += e.mass;
        }
        m
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WassersteinOptions {
    /// Combined support size above which `d >= 2` instances are refused.
    pub lp_cap: usize,
}

impl Default for WassersteinOptions {
    fn default() -> Self {
        Self { lp_cap: DEFAULT_LP_CAP }
    }
}

/// Exact `W_p(μ, ν)`.
pub fn wasserstein_p(p: f64, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    Ok(wasserstein_with_plan(p, mu, nu, WassersteinOptions::default())?.0)
}

/// Exact `W_p(μ, ν)` together with an optimal plan.
pub fn wasserstein_with_plan(
    p: f64,
    mu: &EmpiricalMeasure,
    nu: &EmpiricalMeasure,
    opts: WassersteinOptions,
) -> Result<(f64, TransportPlan)> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(Error::domain(format!("Wasserstein order must be >= 1, got {p}")));
    }
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch { expected: mu.dim, got: nu.dim });
    }
    let plan = if mu.dim == 1 {
        quantile_plan(p, mu, nu)
    } else {
        let size = mu.len() + nu.len();
        if size > opts.lp_cap {
            return Err(Error::TooLargeForExact { size, cap: opts.lp_cap });
        }
        lp_plan(p, mu, nu)?
    };
    Ok((plan.cost.max(0.0).powf(1.0 / p), plan))
}

/// Exact `W_p` through the LP solver regardless of dimension; used to
/// cross-check the 1D quantile coupling.
pub fn wasserstein_lp(p: f64, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<f64> {
    if mu.dim != nu.dim {
        return Err(Error::DimensionMismatch { expected: mu.dim, got: nu.dim });
    }
    let plan = lp_plan(p, mu, nu)?;
    Ok(plan.cost.max(0.0).powf(1.0 / p))
}

fn lp_plan(p: f64, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> Result<TransportPlan> {
    let (m, n) = (mu.len(), nu.len());
    let mut cost = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            cost[i * n + j] = dist_pow(mu.point(i), nu.point(j), p);
        }
    }
    let (flow, total) = transport::solve(&mu.weights, &nu.weights, &cost)?;
    let mut entries = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let f = flow[i * n + j];
            if f > 0.0 {
                entries.push(PlanEntry { source: i, target: j, mass: f });
            }
        }
    }
    Ok(TransportPlan { entries, cost: total })
}

/// Monotone (north-west corner) coupling of the sorted supports. Ties are
/// broken by index.
fn quantile_plan(p: f64, mu: &EmpiricalMeasure, nu: &EmpiricalMeasure) -> TransportPlan {
    let order = |m: &EmpiricalMeasure| {
        let mut idx: Vec<usize> = (0..m.len()).collect();
        idx.sort_by(|&a, &b| m.points[a].total_cmp(&m.points[b]).then(a.cmp(&b)));
        idx
    };
    let (oa, ob) = (order(mu), order(nu));
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (mu.weights[oa[0]], nu.weights[ob[0]]);
    let mut entries = Vec::with_capacity(mu.len() + nu.len());
    let mut cost = 0.0;
    loop {
        let mass = ra.min(rb);
        if mass > 0.0 {
            let (s, t) = (oa[i], ob[j]);
            cost += mass * dist_pow(&mu.points[s..s + 1], &nu.points[t..t + 1], p);
            entries.push(PlanEntry { source: s, target: t, mass });
        }
        ra -= mass;
        rb -= mass;
        let advance_a = ra <= rb;
        if advance_a {
            i += 1;
            if i == oa.len() {
                break;
            }
            ra = mu.weights[oa[i]];
        } else {
            j += 1;
            if j == ob.len() {
                break;
            }
            rb = nu.weights[ob[j]];
        }
    }
    TransportPlan { entries, cost }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn m1(points: &[f64]) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(1, points.to_vec()).unwrap()
    }

    #[test]
    fn invariants_are_enforced() {
        assert!(EmpiricalMeasure::uniform(1, vec![]).is_err());
        assert!(EmpiricalMeasure::new(2, vec![1.0, 2.0, 3.0], None).is_err());
        assert!(EmpiricalMeasure::new(1, vec![1.0, 2.0], Some(vec![0.5, 0.6])).is_err());
        assert!(EmpiricalMeasure::new(1, vec![1.0, 2.0], Some(vec![-0.5, 1.5])).is_err());
        assert!(EmpiricalMeasure::new(1, vec![1.0, 2.0], Some(vec![0.25, 0.75])).is_ok());
    }

    #[test]
    fn dirac_distances() {
        let a = EmpiricalMeasure::dirac(&[1.0, 2.0]).unwrap();
        let b = EmpiricalMeasure::dirac(&[4.0, 6.0]).unwrap();
        for p in [1.0, 2.0, 3.5] {
            assert_relative_eq!(wasserstein_p(p, &a, &b).unwrap(), 5.0, max_relative = 1e-12);
        }
        let a = m1(&[0.3]);
        let b = m1(&[-1.2]);
        assert_relative_eq!(wasserstein_p(2.0, &a, &b).unwrap(), 1.5, max_relative = 1e-12);
    }

    #[test]
    fn translation_in_two_dimensions() {
        let pts = vec![0.0, 0.0, 1.0, 0.5, -0.3, 2.0, 0.7, -1.1];
        let v = [0.3, -0.4];
        let shifted: Vec<f64> = pts.chunks(2).flat_map(|c| [c[0] + v[0], c[1] + v[1]]).collect();
        let a = EmpiricalMeasure::uniform(2, pts).unwrap();
        let b = EmpiricalMeasure::uniform(2, shifted).unwrap();
        assert_relative_eq!(wasserstein_p(1.0, &a, &b).unwrap(), 0.5, max_relative = 1e-12);
    }

    #[test]
    fn two_point_example() {
        let a = m1(&[0.0, 0.0]);
        let b = m1(&[-1.0, 1.0]);
        assert_relative_eq!(wasserstein_p(1.0, &a, &b).unwrap(), 1.0, max_relative = 1e-12);
        assert_relative_eq!(wasserstein_lp(1.0, &a, &b).unwrap(), 1.0, max_relative = 1e-12);
    }

    #[test]
    fn plan_marginals_match() {
        let a = EmpiricalMeasure::new(1, vec![0.0, 1.0, 3.0], Some(vec![0.2, 0.5, 0.3])).unwrap();
        let b = EmpiricalMeasure::new(1, vec![0.5, 2.0], Some(vec![0.6, 0.4])).unwrap();
        let (_, plan) = wasserstein_with_plan(2.0, &a, &b, Default::default()).unwrap();
        for (x, y) in plan.source_marginal(3).iter().zip(a.weights()) {
            assert!((x - y).abs() < 1e-9);
        }
        for (x, y) in plan.target_marginal(2).iter().zip(b.weights()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn exact_mode_refuses_large_instances() {
        let pts: Vec<f64> = (0..800).map(|i| i as f64 * 0.01).collect();
        let a = EmpiricalMeasure::uniform(2, pts.clone()).unwrap();
        let b = EmpiricalMeasure::uniform(2, pts).unwrap();
        assert!(matches!(wasserstein_p(1.0, &a, &b), Err(Error::TooLargeForExact { size: 800, cap: 600 })));
        let c = EmpiricalMeasure::uniform(1, vec![0.0]).unwrap();
        assert!(matches!(wasserstein_p(1.0, &a, &c), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn moments_and_tails() {
        assert_eq!(m1(&[0.0]).moment(2.5), 0.0);
        assert_relative_eq!(m1(&[-1.0, 1.0]).moment(1.0), 1.0);
        assert_eq!(m1(&[0.5, -2.0]).tail_mass(1.0, 10.0), 0.0);
        assert_relative_eq!(m1(&[0.0, 2.0]).tail_mass(1.0, 1.0), 1.0);
        assert_relative_eq!(m1(&[0.0, 2.0]).tail_mass(0.0, 1.0), 0.5);
    }

    #[test]
    fn csv_round_trip_with_weights() {
        let a = EmpiricalMeasure::new(2, vec![0.1, 0.2, -3.0, 4.5], Some(vec![0.25, 0.75])).unwrap();
        let mut buf = Vec::new();
        a.write_csv(&mut buf).unwrap();
        let b = EmpiricalMeasure::read_csv(buf.as_slice()).unwrap();
        assert_eq!(a, b);
        let plain = "x0\n1.0\n2.0\n";
        let c = EmpiricalMeasure::read_csv(plain.as_bytes()).unwrap();
        assert_eq!(c.weights(), &[0.5, 0.5]);
    }
}
