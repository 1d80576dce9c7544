//! 1D finite-volume solver for `∂_t ℓ = −∂_x(b(t, x, ℓ, μ_t) ℓ) + ∂²_x ℓ`
//! with no-flux boundaries on `[−L, L]`.
//!
//! Advection is explicit first-order upwind on cell interfaces; diffusion is
//! either backward Euler (one tridiagonal solve per step) or explicit.

use serde::{Deserialize, Serialize};

use crate::drift::DriftSpec;
use crate::error::{Error, Result};
use crate::initial::InitialDensity;
use crate::measures::EmpiricalMeasure;

/// Largest admissible boundary density.
pub const BOUNDARY_TOLERANCE: f64 = 1e-10;
/// Negative values above this are clipped silently (and tracked).
pub const CLIP_TOLERANCE: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeScheme {
    #[default]
    SemiImplicit,
    /// Explicit diffusion; needs `dt <= h²/4`.
    Explicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FPConfig {
    pub half_width: f64,
    pub mesh: f64,
    pub dt: f64,
    pub scheme: TimeScheme,
    pub drift: DriftSpec,
    pub ic: InitialDensity,
    pub weight_exponent: f64,
}

impl FPConfig {
    /// Domain wide enough for the Gaussian families up to `horizon`, with the
    /// time step at upwind CFL number `cfl`.
    pub fn auto(drift: DriftSpec, ic: InitialDensity, horizon: f64, mesh: f64, cfl: f64) -> Result<Self> {
        if ic.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: ic.dim() });
        }
        let center = ic.moment(1.0);
        let spread = (ic.moment(2.0) + 2.0 * horizon).sqrt();
        let half_width = ((center + drift.bound * horizon + 7.5 * spread) / mesh).ceil() * mesh;
        let dt = if drift.bound > 0.0 { (cfl * mesh / drift.bound).min(mesh) } else { mesh };
        Ok(Self { half_width, mesh, dt, scheme: TimeScheme::SemiImplicit, drift, ic, weight_exponent: 1.0 })
    }

    fn validate(&self) -> Result<usize> {
        if self.ic.dim() != 1 {
            return Err(Error::DimensionMismatch { expected: 1, got: self.ic.dim() });
        }
        if let Some(d) = self.drift.dim() {
            if d != 1 {
                return Err(Error::DimensionMismatch { expected: 1, got: d });
            }
        }
        if !(self.half_width > 0.0 && self.mesh > 0.0 && self.dt > 0.0) {
            return Err(Error::domain("half width, mesh and dt must be positive"));
        }
        let cells = (2.0 * self.half_width / self.mesh).round() as usize;
        if cells < 3 || ((cells as f64) * self.mesh - 2.0 * self.half_width).abs() > 1e-9 * self.half_width {
            return Err(Error::domain("2L must be a multiple of the mesh width with at least 3 cells"));
        }
        if self.drift.bound * self.dt / self.mesh > 1.0 {
            return Err(Error::Cfl(format!(
                "advective CFL number {} > 1 (C = {}, dt = {}, h = {})",
                self.drift.bound * self.dt / self.mesh,
                self.drift.bound,
                self.dt,
                self.mesh
            )));
        }
        if self.scheme == TimeScheme::Explicit && self.dt > self.mesh * self.mesh / 4.0 {
            return Err(Error::Cfl(format!("explicit diffusion needs dt <= h²/4 = {}", self.mesh * self.mesh / 4.0)));
        }
        Ok(cells)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FPTrajectory {
    pub half_width: f64,
    pub mesh: f64,
    pub centers: Vec<f64>,
    pub times: Vec<f64>,
    /// Cell values at each stored time.
    pub densities: Vec<Vec<f64>>,
    pub steps: usize,
    /// `max_t |∫ℓ(t) − 1|`.
    pub max_mass_error: f64,
    pub clipped_mass: f64,
    pub max_boundary_density: f64,
}

impl FPTrajectory {
    pub fn index_of(&self, t: f64) -> Option<usize> {
        self.times.iter().position(|&s| (s - t).abs() <= 1e-12 * t.abs().max(1.0))
    }

    pub fn density_at(&self, t: f64) -> Option<&[f64]> {
        self.index_of(t).map(|i| self.densities[i].as_slice())
    }

    /// Piecewise-linear interpolation between cell centres; zero outside.
    pub fn eval(&self, time_index: usize, x: f64) -> f64 {
        let v = &self.densities[time_index];
        let pos = (x + self.half_width) / self.mesh - 0.5;
        if pos < -0.5 || pos > v.len() as f64 - 0.5 {
            return 0.0;
        }
        let i = pos.floor();
        if i < 0.0 {
            return v[0];
        }
        let i = i as usize;
        if i + 1 >= v.len() {
            return v[v.len() - 1];
        }
        let f = pos - i as f64;
        (1.0 - f) * v[i] + f * v[i + 1]
    }

    pub fn mass(&self, time_index: usize) -> f64 {
        self.densities[time_index].iter().sum::<f64>() * self.mesh
    }
}

/// Mesh measure `Σ_i ℓ_i h δ_{x_i}` normalised to unit mass.
fn mesh_measure(centers: &[f64], values: &[f64]) -> Result<EmpiricalMeasure> {
    let masses: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
    EmpiricalMeasure::from_masses(1, centers.to_vec(), &masses)
}

/// Solves up to `horizon`, storing the solution at `output_times` (plus 0).
/// Steps are shortened so that every output time is hit exactly.
pub fn fp_solve(cfg: &FPConfig, horizon: f64, output_times: &[f64]) -> Result<FPTrajectory> {
    let cells = cfg.validate()?;
    let h = cfg.mesh;
    let centers: Vec<f64> = (0..cells).map(|i| -cfg.half_width + (i as f64 + 0.5) * h).collect();
    let mut u: Vec<f64> = centers.iter().map(|&x| cfg.ic.density(&[x])).collect();
    let m0 = u.iter().sum::<f64>() * h;
    u.iter_mut().for_each(|v| *v /= m0);

    let mut stops: Vec<f64> = output_times.iter().copied().filter(|&t| t > 0.0 && t <= horizon).collect();
    stops.push(horizon);
    stops.sort_by(f64::total_cmp);
    stops.dedup_by(|a, b| (*a - *b).abs() < 1e-12);

    let mut traj = FPTrajectory {
        half_width: cfg.half_width,
        mesh: h,
        centers: centers.clone(),
        times: vec![0.0],
        densities: vec![u.clone()],
        steps: 0,
        max_mass_error: 0.0,
        clipped_mass: 0.0,
        max_boundary_density: u[0].max(u[cells - 1]),
    };
    let mut b = vec![0.0; cells];
    let mut flux = vec![0.0; cells + 1];
    let mut rhs = vec![0.0; cells];
    let mut scratch = vec![0.0; cells];
    let mut t = 0.0;
    for &stop in &stops {
        let span = stop - t;
        let m = (span / cfg.dt - 1e-9).ceil().max(1.0) as usize;
        let dt = span / m as f64;
        for _ in 0..m {
            // drift at cell centres with μ_t from the current mesh density
            let mu = mesh_measure(&centers, &u)?;
            let bound = cfg.drift.bind(&mu);
            for i in 0..cells {
                let mut out = [0.0];
                bound.eval_into(t, &centers[i..i + 1], u[i].max(0.0), &mut out);
                b[i] = out[0];
            }
            if let Some(i) = b.iter().position(|v| !v.is_finite()) {
                return Err(Error::Model { message: "non-finite drift".into(), probe: format!("x = {}", centers[i]) });
            }
            flux[0] = 0.0;
            flux[cells] = 0.0;
            for i in 0..cells - 1 {
                let bf = 0.5 * (b[i] + b[i + 1]);
                flux[i + 1] = if bf >= 0.0 { bf * u[i] } else { bf * u[i + 1] };
            }
            let r = dt / (h * h);
            match cfg.scheme {
                TimeScheme::SemiImplicit => {
                    for i in 0..cells {
                        rhs[i] = u[i] - dt / h * (flux[i + 1] - flux[i]);
                    }
                    solve_neumann(r, &rhs, &mut u, &mut scratch);
                }
                TimeScheme::Explicit => {
                    for i in 0..cells {
                        let left = if i == 0 { u[i] } else { u[i - 1] };
                        let right = if i + 1 == cells { u[i] } else { u[i + 1] };
                        rhs[i] = u[i] - dt / h * (flux[i + 1] - flux[i]) + r * (left - 2.0 * u[i] + right);
                    }
                    u.copy_from_slice(&rhs);
                }
            }
            for v in u.iter_mut() {
                if *v < 0.0 {
                    if *v < CLIP_TOLERANCE {
                        return Err(Error::Degenerate(format!("negative density {v} beyond clipping tolerance")));
                    }
                    traj.clipped_mass += -*v * h;
                    *v = 0.0;
                }
                if !v.is_finite() {
                    return Err(Error::NonFinite { particle: 0, step: traj.steps });
                }
            }
            t += dt;
            traj.steps += 1;
            let edge = u[0].max(u[cells - 1]);
            traj.max_boundary_density = traj.max_boundary_density.max(edge);
            if edge > BOUNDARY_TOLERANCE {
                return Err(Error::DomainTooSmall(format!(
                    "boundary density {edge:.3e} at t = {t:.4} exceeds {BOUNDARY_TOLERANCE:e} on [-{0}, {0}]",
                    cfg.half_width
                )));
            }
            let mass = u.iter().sum::<f64>() * h;
            traj.max_mass_error = traj.max_mass_error.max((mass - 1.0).abs());
        }
        t = stop;
        traj.times.push(stop);
        traj.densities.push(u.clone());
    }
    Ok(traj)
}

/// Solves `(I − r Δ_h) u = rhs` with reflecting ends (Thomas algorithm).
fn solve_neumann(r: f64, rhs: &[f64], u: &mut [f64], c_prime: &mut [f64]) {
    let n = rhs.len();
    let diag = |i: usize| if i == 0 || i + 1 == n { 1.0 + r } else { 1.0 + 2.0 * r };
    let off = -r;
    let mut denom = diag(0);
    c_prime[0] = off / denom;
    u[0] = rhs[0] / denom;
    for i in 1..n {
        denom = diag(i) - off * c_prime[i - 1];
        c_prime[i] = off / denom;
        u[i] = (rhs[i] - off * u[i - 1]) / denom;
    }
    for i in (0..n - 1).rev() {
        let next = u[i + 1];
        u[i] -= c_prime[i] * next;
    }
}

/// Mesh measure at a stored time with its moments and tail masses.
#[derive(Debug, Clone)]
pub struct MeshMeasure {
    pub measure: EmpiricalMeasure,
    /// `(p, M_p)` for `p = 0, 1, 2`.
    pub moments: Vec<(f64, f64)>,
    /// `(R, tail_mass(p = 1, R))` for `R = 1..=8`.
    pub tails: Vec<(f64, f64)>,
}

pub fn fp_measures(traj: &FPTrajectory, t: f64) -> Result<MeshMeasure> {
    let i = traj
        .index_of(t)
        .ok_or_else(|| Error::NotCovered { time: t, reason: "not a stored solver time".into() })?;
    let measure = mesh_measure(&traj.centers, &traj.densities[i])?;
    let moments = [0.0, 1.0, 2.0].iter().map(|&p| (p, measure.moment(p))).collect();
    let tails = (1..=8).map(|r| (r as f64, measure.tail_mass(1.0, r as f64))).collect();
    Ok(MeshMeasure { measure, moments, tails })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn gauss(x: f64, m: f64, var: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * var)).exp() / (2.0 * PI * var).sqrt()
    }

    fn heat_cfg(mesh: f64, dt: f64) -> FPConfig {
        FPConfig {
            half_width: 12.0,
            mesh,
            dt,
            scheme: TimeScheme::SemiImplicit,
            drift: DriftSpec::zero(),
            ic: InitialDensity::standard_gaussian(1),
            weight_exponent: 1.0,
        }
    }

    fn max_err(traj: &FPTrajectory, k: usize, exact: impl Fn(f64) -> f64) -> f64 {
        traj.centers.iter().zip(&traj.densities[k]).map(|(&x, &v)| (v - exact(x)).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn heat_equation_matches_closed_form_and_conserves_mass() {
        let traj = fp_solve(&heat_cfg(0.05, 0.001), 1.0, &[0.5]).unwrap();
        assert_eq!(traj.times, vec![0.0, 0.5, 1.0]);
        assert!(max_err(&traj, 2, |x| gauss(x, 0.0, 3.0)) < 2e-3);
        assert!(traj.max_mass_error < 1e-12);
        assert_eq!(traj.clipped_mass, 0.0);
    }

    #[test]
    fn explicit_mode_and_its_stability_limit() {
        let mut cfg = heat_cfg(0.1, 0.002);
        cfg.scheme = TimeScheme::Explicit;
        let traj = fp_solve(&cfg, 0.5, &[]).unwrap();
        assert!(max_err(&traj, 1, |x| gauss(x, 0.0, 2.0)) < 2e-3);
        cfg.dt = 0.01;
        assert!(matches!(fp_solve(&cfg, 0.5, &[]), Err(Error::Cfl(_))));
    }

    #[test]
    fn constant_drift_translates() {
        let mut cfg = heat_cfg(0.02, 0.002);
        cfg.half_width = 14.0;
        cfg.drift = DriftSpec::constant(vec![1.0]).unwrap();
        let traj = fp_solve(&cfg, 1.0, &[]).unwrap();
        // upwind adds O(h) numerical diffusion
        assert!(max_err(&traj, 1, |x| gauss(x, 1.0, 3.0)) < 5e-3);
        cfg.dt = 0.05;
        assert!(matches!(fp_solve(&cfg, 1.0, &[]), Err(Error::Cfl(_))));
    }

    #[test]
    fn small_domain_is_rejected() {
        let mut cfg = heat_cfg(0.1, 0.01);
        cfg.half_width = 4.0;
        assert!(matches!(fp_solve(&cfg, 1.0, &[]), Err(Error::DomainTooSmall(_))));
    }

    #[test]
    fn mesh_moments() {
        let traj = fp_solve(&heat_cfg(0.05, 0.0025), 0.5, &[]).unwrap();
        let mm = fp_measures(&traj, 0.5).unwrap();
        assert!((mm.moments[0].1 - 1.0).abs() < 1e-12);
        assert!((mm.moments[2].1 - 2.0).abs() < 5e-3);
        // Gaussian tails decay fast
        assert!(mm.tails[6].1 < 1e-3 * mm.tails[0].1);
        assert!(fp_measures(&traj, 0.3).is_err());
    }

    #[test]
    fn interpolation() {
        let traj = fp_solve(&heat_cfg(0.05, 0.0025), 0.1, &[]).unwrap();
        let v = traj.eval(1, 0.0);
        assert!((v - gauss(0.0, 0.0, 1.2)).abs() < 1e-3);
        assert_eq!(traj.eval(1, 20.0), 0.0);
    }
}
