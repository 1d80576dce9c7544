//! Drift functions `b(t, x, r, ϱ)` with declared bound and Lipschitz moduli,
//! plus a probe-based checker for those declarations.
//!
//! Catalog drifts depend on the measure `ϱ` only through its mean, so
//! [`DriftSpec::bind`] summarizes a measure once and the per-particle
//! evaluation is O(d).

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measures::{norm, wasserstein_p, EmpiricalMeasure};
use crate::probes::Halton;
use crate::rng::{Purpose, StreamKey};

/// Safety factor applied to declared constants by [`verify_assumptions`].
pub const SAFETY_FACTOR: f64 = 1.05;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum DriftModel {
    Zero,
    Constant { value: Vec<f64> },
    /// `min(r, cap) · direction` (density only).
    BurgersClamp { direction: Vec<f64>, cap: f64 },
    /// `sat_cap(mean(ϱ) − x)` (measure only).
    MeanFieldAttraction { cap: f64 },
    /// `mean(ϱ) − x` without saturation; violates the bound on large `x`.
    UnsaturatedMeanField,
    /// `weight · BurgersClamp + (1 − weight) · MeanFieldAttraction`.
    Mixed { weight: f64, direction: Vec<f64>, cap: f64 },
}

impl DriftModel {
    pub fn name(&self) -> &'static str {
        match self {
            DriftModel::Zero => "zero",
            DriftModel::Constant { .. } => "constant",
            DriftModel::BurgersClamp { .. } => "burgers_clamp",
            DriftModel::MeanFieldAttraction { .. } => "mean_field_attraction",
            DriftModel::UnsaturatedMeanField => "unsaturated_mean_field",
            DriftModel::Mixed { .. } => "mixed",
        }
    }

    /// True when `b` reads its density argument.
    pub fn uses_density(&self) -> bool {
        matches!(self, DriftModel::BurgersClamp { .. } | DriftModel::Mixed { .. })
    }

    fn uses_measure(&self) -> bool {
        matches!(
            self,
            DriftModel::MeanFieldAttraction { .. } | DriftModel::UnsaturatedMeanField | DriftModel::Mixed { .. }
        )
    }
}

/// A drift together with its declared constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    pub model: DriftModel,
    /// Declared `C` with `|b| <= C`.
    pub bound: f64,
    /// Declared Lipschitz modulus in the density argument.
    pub lip_density: f64,
    /// Declared Lipschitz modulus in `W_p`.
    pub lip_measure: f64,
    /// Wasserstein order `p`.
    pub order: f64,
}

fn unit(direction: &[f64]) -> Result<Vec<f64>> {
    let n = norm(direction);
    if direction.is_empty() || !(n > 0.0) {
        return Err(Error::domain("drift direction must be a nonzero vector"));
    }
    Ok(direction.iter().map(|v| v / n).collect())
}

impl DriftSpec {
    pub fn zero() -> Self {
        Self { model: DriftModel::Zero, bound: 0.0, lip_density: 0.0, lip_measure: 0.0, order: 1.0 }
    }

    pub fn constant(value: Vec<f64>) -> Result<Self> {
        if value.is_empty() || value.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("constant drift must be a finite nonempty vector"));
        }
        let bound = norm(&value);
        Ok(Self { model: DriftModel::Constant { value }, bound, lip_density: 0.0, lip_measure: 0.0, order: 1.0 })
    }

    pub fn burgers_clamp(direction: Vec<f64>, cap: f64) -> Result<Self> {
        check_cap(cap)?;
        let direction = unit(&direction)?;
        Ok(Self {
            model: DriftModel::BurgersClamp { direction, cap },
            bound: cap,
            lip_density: 1.0,
            lip_measure: 0.0,
            order: 1.0,
        })
    }

    pub fn mean_field_attraction(cap: f64) -> Result<Self> {
        check_cap(cap)?;
        Ok(Self {
            model: DriftModel::MeanFieldAttraction { cap },
            bound: cap,
            lip_density: 0.0,
            lip_measure: 1.0,
            order: 1.0,
        })
    }

    pub fn mixed(weight: f64, direction: Vec<f64>, cap: f64) -> Result<Self> {
        check_cap(cap)?;
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::domain(format!("mixed drift weight must lie in [0, 1], got {weight}")));
        }
        let direction = unit(&direction)?;
        Ok(Self {
            model: DriftModel::Mixed { weight, direction, cap },
            bound: cap,
            lip_density: weight,
            lip_measure: 1.0 - weight,
            order: 1.0,
        })
    }

    /// `mean(ϱ) − x` with a user-declared (and generally false) bound.
    pub fn unsaturated_mean_field(declared_bound: f64) -> Self {
        Self {
            model: DriftModel::UnsaturatedMeanField,
            bound: declared_bound,
            lip_density: 0.0,
            lip_measure: 1.0,
            order: 1.0,
        }
    }

    pub fn with_order(mut self, p: f64) -> Self {
        self.order = p;
        self
    }

    pub fn name(&self) -> &'static str {
        self.model.name()
    }

    /// Dimension the drift is tied to, if any.
    pub fn dim(&self) -> Option<usize> {
        match &self.model {
            DriftModel::Constant { value } => Some(value.len()),
            DriftModel::BurgersClamp { direction, .. } | DriftModel::Mixed { direction, .. } => {
                Some(direction.len())
            }
            _ => None,
        }
    }

    /// Summarizes `rho` for repeated evaluation.
    pub fn bind(&self, rho: &EmpiricalMeasure) -> BoundDrift<'_> {
        let mean = if self.model.uses_measure() { Some(rho.mean()) } else { None };
        BoundDrift { spec: self, mean, dim: rho.dim() }
    }
}

fn check_cap(cap: f64) -> Result<()> {
    if !(cap > 0.0) || !cap.is_finite() {
        return Err(Error::domain(format!("drift cap must be positive, got {cap}")));
    }
    Ok(())
}

/// A drift with its measure argument fixed.
#[derive(Debug, Clone)]
pub struct BoundDrift<'a> {
    spec: &'a DriftSpec,
    mean: Option<Vec<f64>>,
    dim: usize,
}

impl BoundDrift<'_> {
    /// Writes `b(t, x, r, ϱ)` into `out`. The catalog is time-homogeneous.
    #[inline]
    pub fn eval_into(&self, _t: f64, x: &[f64], r: f64, out: &mut [f64]) {
        match &self.spec.model {
            DriftModel::Zero => out.fill(0.0),
            DriftModel::Constant { value } => out.copy_from_slice(value),
            DriftModel::BurgersClamp { direction, cap } => {
                let a = r.min(*cap);
                for (o, e) in out.iter_mut().zip(direction) {
                    *o = a * e;
                }
            }
            DriftModel::MeanFieldAttraction { cap } => {
                saturated_pull(self.mean.as_deref().unwrap_or(&[]), x, *cap, out);
            }
            DriftModel::UnsaturatedMeanField => {
                let m = self.mean.as_deref().unwrap_or(&[]);
                for ((o, mk), xk) in out.iter_mut().zip(m).zip(x) {
                    *o = mk - xk;
                }
            }
            DriftModel::Mixed { weight, direction, cap } => {
                saturated_pull(self.mean.as_deref().unwrap_or(&[]), x, *cap, out);
                let a = r.min(*cap);
                for (o, e) in out.iter_mut().zip(direction) {
                    *o = weight * a * e + (1.0 - weight) * *o;
                }
            }
        }
    }

    pub fn eval(&self, t: f64, x: &[f64], r: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.eval_into(t, x, r, &mut out);
        out
    }
}

/// `sat_C(m − x)`: the projection of `m − x` onto the closed ball of radius `C`.
fn saturated_pull(mean: &[f64], x: &[f64], cap: f64, out: &mut [f64]) {
    let mut n2 = 0.0;
    for ((o, m), xk) in out.iter_mut().zip(mean).zip(x) {
        *o = m - xk;
        n2 += *o * *o;
    }
    let n = n2.sqrt();
    if n > cap {
        let s = cap / n;
        out.iter_mut().for_each(|o| *o *= s);
    }
}

/// Evaluates `b(t, x, r, ϱ)` with argument validation.
pub fn evaluate(spec: &DriftSpec, t: f64, x: &[f64], r: f64, rho: &EmpiricalMeasure) -> Result<Vec<f64>> {
    if !(r >= 0.0) {
        return Err(Error::domain(format!("density argument must be nonnegative, got {r}")));
    }
    if rho.dim() != x.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: rho.dim() });
    }
    if let Some(d) = spec.dim() {
        if d != x.len() {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    let out = spec.bind(rho).eval(t, x, r);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::Model {
            message: "non-finite drift value".into(),
            probe: format!("t={t}, x={x:?}, r={r}"),
        });
    }
    Ok(out)
}

/// Sampling configuration for [`verify_assumptions`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub count: usize,
    pub dim: usize,
    pub horizon: f64,
    /// Probes draw `x` uniformly from the ball of this radius.
    pub x_radius: f64,
    /// Density arguments are drawn from `[0, r_max]`.
    pub r_max: f64,
    /// Support size of each random probe measure.
    pub measure_size: usize,
    /// Largest point shift used for measure perturbations.
    pub shift: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { count: 1000, dim: 1, horizon: 1.0, x_radius: 10.0, r_max: 2.0, measure_size: 16, shift: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub drift: String,
    pub declared_bound: f64,
    pub declared_lip_density: f64,
    pub declared_lip_measure: f64,
    pub max_abs_b_observed: f64,
    pub worst_density_lipschitz_ratio: f64,
    pub worst_measure_lipschitz_ratio: f64,
    pub probe_count: usize,
    /// `|b| <= C`.
    pub bound_pass: bool,
    /// Lipschitz in `r` and `W_p`.
    pub lipschitz_pass: bool,
    /// Probe that produced the largest `|b|`.
    pub worst_bound_probe: String,
}

impl AssumptionReport {
    pub fn passed(&self) -> bool {
        self.bound_pass && self.lipschitz_pass
    }
}

/// Probes `b` on quasi-random `(t, x, r, ϱ)` and on finite-difference pairs in
/// `r` and in `ϱ`; pass iff every observed quantity is within
/// [`SAFETY_FACTOR`] of its declaration.
///
/// Measure pairs shift a random subset of the probe measure's points; the
/// ratio denominator is the exact `W_p` between the two measures.
pub fn verify_assumptions(spec: &DriftSpec, probes: &ProbeConfig, seed: u64) -> Result<AssumptionReport> {
    if probes.count < 100 {
        return Err(Error::domain(format!("need at least 100 probes, got {}", probes.count)));
    }
    let d = probes.dim;
    if let Some(sd) = spec.dim() {
        if sd != d {
            return Err(Error::DimensionMismatch { expected: sd, got: d });
        }
    }
    let key = StreamKey::new(seed);
    let mut halton = Halton::new(d + 2, 0);
    let mut max_abs = 0.0f64;
    let mut worst_probe = String::new();
    let mut worst_r = 0.0f64;
    let mut worst_m = 0.0f64;
    let p = spec.order;

    for k in 0..probes.count {
        let u = halton.next_point();
        let mut rng = key.rng(k as u64, 0, Purpose::Probe);
        let t = u[0] * probes.horizon;
        let r = u[1] * probes.r_max;
        // x uniform in the ball: direction from normals, radius from the
        // low-discrepancy coordinate
        let x: Vec<f64> = if d == 1 {
            vec![(2.0 * u[2] - 1.0) * probes.x_radius]
        } else {
            let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let gn = norm(&g).max(1e-300);
            let rad = probes.x_radius * u[2].powf(1.0 / d as f64);
            g.iter().map(|v| v / gn * rad).collect()
        };
        let center: Vec<f64> = (0..d).map(|_| rng.random_range(-probes.x_radius..=probes.x_radius)).collect();
        let mut pts = Vec::with_capacity(probes.measure_size * d);
        for _ in 0..probes.measure_size {
            for c in &center {
                pts.push(c + rng.sample::<f64, _>(StandardNormal));
            }
        }
        let rho = EmpiricalMeasure::uniform(d, pts.clone())?;
        let describe = || format!("probe {k}: t={t:.6}, x={x:?}, r={r:.6}, mean(rho)={:?}", rho.mean());
        let b = evaluate(spec, t, &x, r, &rho).map_err(|e| match e {
            Error::Model { message, .. } => Error::Model { message, probe: describe() },
            other => other,
        })?;
        let nb = norm(&b);
        if nb > max_abs {
            max_abs = nb;
            worst_probe = describe();
        }

        // density pair
        let dr = (rng.random::<f64>() - 0.5) * 0.2;
        let r2 = (r + dr).max(0.0);
        if r2 != r {
            let b2 = evaluate(spec, t, &x, r2, &rho)?;
            let ratio = dist(&b, &b2) / (r - r2).abs();
            worst_r = worst_r.max(ratio);
        }

        // measure pair: shift a random nonempty subset by delta along a random unit vector
        let delta = probes.shift * (0.05 + 0.95 * rng.random::<f64>());
        let dir: Vec<f64> = if d == 1 {
            vec![if rng.random::<bool>() { 1.0 } else { -1.0 }]
        } else {
            let g: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let gn = norm(&g).max(1e-300);
            g.iter().map(|v| v / gn).collect()
        };
        let mut moved = pts.clone();
        let mut any = false;
        for i in 0..probes.measure_size {
            if rng.random::<bool>() || (i + 1 == probes.measure_size && !any) {
                any = true;
                for (c, e) in moved[i * d..(i + 1) * d].iter_mut().zip(&dir) {
                    *c += delta * e;
                }
            }
        }
        let rho2 = EmpiricalMeasure::uniform(d, moved)?;
        let w = wasserstein_p(p, &rho, &rho2)?;
        if w > 0.0 {
            let b2 = evaluate(spec, t, &x, r, &rho2)?;
            worst_m = worst_m.max(dist(&b, &b2) / w);
        }
    }

    let tol = 1e-12;
    let bound_pass = max_abs <= spec.bound * SAFETY_FACTOR + tol;
    let lipschitz_pass = worst_r <= spec.lip_density * SAFETY_FACTOR + tol
        && worst_m <= spec.lip_measure * SAFETY_FACTOR + tol;
    Ok(AssumptionReport {
        drift: spec.name().to_string(),
        declared_bound: spec.bound,
        declared_lip_density: spec.lip_density,
        declared_lip_measure: spec.lip_measure,
        max_abs_b_observed: max_abs,
        worst_density_lipschitz_ratio: worst_r,
        worst_measure_lipschitz_ratio: worst_m,
        probe_count: probes.count,
        bound_pass,
        lipschitz_pass,
        worst_bound_probe: worst_probe,
    })
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point_mass(x: f64) -> EmpiricalMeasure {
        EmpiricalMeasure::uniform(1, vec![x]).unwrap()
    }

    #[test]
    fn catalog_values() {
        let rho = point_mass(1.0);
        assert_eq!(evaluate(&DriftSpec::zero(), 0.3, &[2.0], 0.7, &rho).unwrap(), vec![0.0]);
        let mf = DriftSpec::mean_field_attraction(5.0).unwrap();
        assert_eq!(evaluate(&mf, 0.9, &[0.0], 0.0, &rho).unwrap(), vec![1.0]);
        let bc = DriftSpec::burgers_clamp(vec![1.0], 1.0).unwrap();
        assert_eq!(evaluate(&bc, 0.0, &[0.0], 0.3, &rho).unwrap(), vec![0.3]);
        assert_eq!(evaluate(&bc, 0.0, &[0.0], 3.0, &rho).unwrap(), vec![1.0]);
        let c = DriftSpec::constant(vec![1.5, -2.0]).unwrap();
        assert_eq!(c.bound, 2.5);
        let rho2 = EmpiricalMeasure::uniform(2, vec![0.0, 0.0]).unwrap();
        assert_eq!(evaluate(&c, 0.0, &[1.0, 1.0], 0.0, &rho2).unwrap(), vec![1.5, -2.0]);
        // saturation
        assert_eq!(evaluate(&mf, 0.0, &[-10.0], 0.0, &rho).unwrap(), vec![5.0]);
    }

    #[test]
    fn evaluate_validates_arguments() {
        let rho = point_mass(0.0);
        let bc = DriftSpec::burgers_clamp(vec![1.0], 1.0).unwrap();
        assert!(evaluate(&bc, 0.0, &[0.0], -0.1, &rho).is_err());
        let rho2 = EmpiricalMeasure::uniform(2, vec![0.0, 0.0]).unwrap();
        assert!(matches!(evaluate(&bc, 0.0, &[0.0], 0.1, &rho2), Err(Error::DimensionMismatch { .. })));
        assert!(DriftSpec::burgers_clamp(vec![0.0], 1.0).is_err());
        assert!(DriftSpec::mixed(1.5, vec![1.0], 1.0).is_err());
    }

    #[test]
    fn evaluation_is_bitwise_deterministic() {
        let spec = DriftSpec::mixed(0.4, vec![1.0, 1.0], 0.8).unwrap();
        let rho = EmpiricalMeasure::uniform(2, vec![0.1, 0.2, -0.7, 1.3, 0.5, 0.5]).unwrap();
        let a = evaluate(&spec, 0.5, &[0.3, -0.2], 0.45, &rho).unwrap();
        let b = evaluate(&spec, 0.5, &[0.3, -0.2], 0.45, &rho).unwrap();
        assert_eq!(a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), b.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn argument_dependence_is_as_declared() {
        let bc = DriftSpec::burgers_clamp(vec![1.0], 1.0).unwrap();
        let mf = DriftSpec::mean_field_attraction(1.0).unwrap();
        let (rho_a, rho_b) = (point_mass(-2.0), point_mass(3.0));
        for k in 0..50 {
            let x = -3.0 + 0.13 * k as f64;
            let r = 0.02 * k as f64;
            // BurgersClamp ignores x and rho
            assert_eq!(evaluate(&bc, 0.0, &[x], r, &rho_a).unwrap(), evaluate(&bc, 0.7, &[-x], r, &rho_b).unwrap());
            // MeanFieldAttraction ignores r
            assert_eq!(evaluate(&mf, 0.0, &[x], r, &rho_a).unwrap(), evaluate(&mf, 0.0, &[x], 1.7 - r, &rho_a).unwrap());
        }
    }

    #[test]
    fn zero_drift_passes_with_zero_bound() {
        let rep = verify_assumptions(&DriftSpec::zero(), &ProbeConfig::default(), 1).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.max_abs_b_observed, 0.0);
    }

    #[test]
    fn catalog_passes_declared_constants() {
        for (spec, d) in [
            (DriftSpec::burgers_clamp(vec![1.0], 1.0).unwrap(), 1),
            (DriftSpec::mean_field_attraction(2.0).unwrap(), 1),
            (DriftSpec::mixed(0.5, vec![1.0], 1.0).unwrap(), 1),
            (DriftSpec::constant(vec![0.3, 0.4]).unwrap(), 2),
            (DriftSpec::mixed(0.3, vec![0.0, 1.0], 1.5).unwrap(), 2),
        ] {
            let cfg = ProbeConfig { count: 300, dim: d, ..Default::default() };
            let rep = verify_assumptions(&spec, &cfg, 11).unwrap();
            assert!(rep.passed(), "{rep:?}");
        }
    }

    #[test]
    fn burgers_density_ratio_is_one() {
        let spec = DriftSpec::burgers_clamp(vec![1.0], 1.0).unwrap();
        let rep = verify_assumptions(&spec, &ProbeConfig::default(), 5).unwrap();
        assert!((rep.worst_density_lipschitz_ratio - 1.0).abs() < 0.05, "{rep:?}");
    }

    #[test]
    fn unsaturated_drift_fails_the_bound() {
        let spec = DriftSpec::unsaturated_mean_field(5.0);
        let cfg = ProbeConfig { x_radius: 100.0, ..Default::default() };
        let rep = verify_assumptions(&spec, &cfg, 3).unwrap();
        assert!(!rep.bound_pass);
        assert!(rep.max_abs_b_observed > 5.0);
        assert!(rep.worst_bound_probe.contains("probe"));
    }

    #[test]
    fn too_few_probes_rejected() {
        let cfg = ProbeConfig { count: 99, ..Default::default() };
        assert!(verify_assumptions(&DriftSpec::zero(), &cfg, 0).is_err());
    }
}
