//! Initial laws with closed-form densities, exact samplers and declared
//! regularity data.

use rand::Rng;
use rand_distr::{Beta, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::heat_kernel::{kernel_from_norm_sq, semigroup_apply, SemigroupQuadrature};
use crate::quadrature::CompositeRule;
use crate::measures::norm;
use crate::rng::{Purpose, StreamKey};
use crate::scheme::ParticleCloud;

pub const DEFAULT_ALPHA: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    /// Isotropic `N(mean, sigma² I)`.
    Gaussian { mean: Vec<f64>, sigma: f64 },
    Mixture { components: Vec<GaussianComponent> },
    /// `K (1 − |x|²/radius²)_+^exponent`, centred at the origin. Hölder of
    /// order `exponent` at the rim.
    Bump { dim: usize, radius: f64, exponent: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialDensity {
    pub family: Family,
    /// Declared Hölder exponent in (0, 1).
    pub alpha: f64,
}

fn ln_beta(a: f64, b: f64) -> f64 {
    libm::lgamma(a) + libm::lgamma(b) - libm::lgamma(a + b)
}

/// `E|X|^q` for `X ~ N(m, σ² I_d)`: Poisson mixture of central chi moments.
fn gaussian_abs_moment(mean: &[f64], sigma: f64, q: f64) -> f64 {
    let d = mean.len() as f64;
    let half_lambda = mean.iter().map(|v| v * v).sum::<f64>() / (sigma * sigma) / 2.0;
    let chi = |j: f64| {
        let a = (d + 2.0 * j) / 2.0;
        (q / 2.0 * 2f64.ln() + libm::lgamma(a + q / 2.0) - libm::lgamma(a)).exp()
    };
    if half_lambda == 0.0 {
        return sigma.powf(q) * chi(0.0);
    }
    // sum the Poisson weights outward from the mode until negligible
    let mode = half_lambda.floor();
    let log_w = |j: f64| -half_lambda + j * half_lambda.ln() - libm::lgamma(j + 1.0);
    let mut total = 0.0;
    let mut j = mode;
    loop {
        let w = log_w(j).exp();
        total += w * chi(j);
        if w < 1e-18 && j > mode {
            break;
        }
        j += 1.0;
    }
    let mut j = mode - 1.0;
    while j >= 0.0 {
        let w = log_w(j).exp();
        total += w * chi(j);
        if w < 1e-18 {
            break;
        }
        j -= 1.0;
    }
    sigma.powf(q) * total
}

fn gaussian_density(mean: &[f64], sigma: f64, x: &[f64]) -> f64 {
    let d = mean.len() as i32;
    let r2: f64 = mean.iter().zip(x).map(|(m, v)| (v - m) * (v - m)).sum();
    (2.0 * PI * sigma * sigma).powf(-(d as f64) / 2.0) * (-r2 / (2.0 * sigma * sigma)).exp()
}

impl InitialDensity {
    pub fn gaussian(mean: Vec<f64>, sigma: f64) -> Result<Self> {
        check_gaussian(&mean, sigma)?;
        Ok(Self { family: Family::Gaussian { mean, sigma }, alpha: DEFAULT_ALPHA })
    }

    pub fn standard_gaussian(dim: usize) -> Self {
        Self { family: Family::Gaussian { mean: vec![0.0; dim], sigma: 1.0 }, alpha: DEFAULT_ALPHA }
    }

    pub fn mixture(components: Vec<GaussianComponent>) -> Result<Self> {
        let first = components.first().ok_or_else(|| Error::domain("mixture needs a component"))?;
        let d = first.mean.len();
        let mut total = 0.0;
        for c in &components {
            check_gaussian(&c.mean, c.sigma)?;
            if c.mean.len() != d {
                return Err(Error::DimensionMismatch { expected: d, got: c.mean.len() });
            }
            if !(c.weight >= 0.0) {
                return Err(Error::domain("mixture weights must be nonnegative"));
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::domain(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { family: Family::Mixture { components }, alpha: DEFAULT_ALPHA })
    }

    /// Bump with Hölder exponent `exponent`; the declared `alpha` equals it.
    pub fn bump(dim: usize, radius: f64, exponent: f64) -> Result<Self> {
        if dim == 0 || !(radius > 0.0) || !(exponent > 0.0 && exponent < 1.0) {
            return Err(Error::domain("bump needs dim >= 1, radius > 0 and exponent in (0, 1)"));
        }
        Ok(Self { family: Family::Bump { dim, radius, exponent }, alpha: exponent })
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
        }
        if let Family::Bump { exponent, .. } = self.family {
            if alpha > exponent {
                return Err(Error::domain("bump alpha cannot exceed its exponent"));
            }
        }
        self.alpha = alpha;
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        match self.family {
            Family::Gaussian { .. } => "gaussian",
            Family::Mixture { .. } => "mixture",
            Family::Bump { .. } => "bump",
        }
    }

    pub fn dim(&self) -> usize {
        match &self.family {
            Family::Gaussian { mean, .. } => mean.len(),
            Family::Mixture { components } => components[0].mean.len(),
            Family::Bump { dim, .. } => *dim,
        }
    }

    fn bump_constant(dim: usize, radius: f64, exponent: f64) -> f64 {
        let d = dim as f64;
        let ln_vol = d * radius.ln() + d / 2.0 * PI.ln() + libm::lgamma(exponent + 1.0)
            - libm::lgamma(exponent + 1.0 + d / 2.0);
        (-ln_vol).exp()
    }

    /// `ℓ_ν(x)`.
    pub fn density(&self, x: &[f64]) -> f64 {
        match &self.family {
            Family::Gaussian { mean, sigma } => gaussian_density(mean, *sigma, x),
            Family::Mixture { components } => {
                components.iter().map(|c| c.weight * gaussian_density(&c.mean, c.sigma, x)).sum()
            }
            Family::Bump { dim, radius, exponent } => {
                let s = x.iter().map(|v| v * v).sum::<f64>() / (radius * radius);
                if s >= 1.0 {
                    0.0
                } else {
                    Self::bump_constant(*dim, *radius, *exponent) * (1.0 - s).powf(*exponent)
                }
            }
        }
    }

    pub fn eval_density(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() });
        }
        Ok(self.density(x))
    }

    /// Declared `‖ℓ_ν‖_{C^α_b}` (sup norm plus α-Hölder seminorm).
    ///
    /// Gaussians: the oscillation is at most the peak `M` and the Lipschitz
    /// constant is `L = M e^{-1/2}/σ`, so the seminorm is at most `L^α M^{1−α}`.
    pub fn holder_norm(&self) -> f64 {
        let a = self.alpha;
        let peak_lip = |sigma: f64, d: usize| {
            let m = (2.0 * PI * sigma * sigma).powf(-(d as f64) / 2.0);
            (m, m * (-0.5f64).exp() / sigma)
        };
        match &self.family {
            Family::Gaussian { mean, sigma } => {
                let (m, l) = peak_lip(*sigma, mean.len());
                m + l.powf(a) * m.powf(1.0 - a)
            }
            Family::Mixture { components } => {
                let (mut m, mut l) = (0.0, 0.0);
                for c in components {
                    let (mc, lc) = peak_lip(c.sigma, c.mean.len());
                    m += c.weight * mc;
                    l += c.weight * lc;
                }
                m + l.powf(a) * m.powf(1.0 - a)
            }
            Family::Bump { dim, radius, exponent } => {
                // s = |x|²/ρ² is (2/ρ)-Lipschitz on the ball and (1 − s)_+^β is
                // β-Hölder with constant 1; α ≤ β on bounded oscillation.
                let k = Self::bump_constant(*dim, *radius, *exponent);
                let semi_beta = k * (2.0 / radius).powf(*exponent);
                let semi = if a < *exponent { semi_beta.powf(a / exponent) * k.powf(1.0 - a / exponent) } else { semi_beta };
                k + semi
            }
        }
    }

    /// `M_q(ν) = E|X_0|^q`.
    pub fn moment(&self, q: f64) -> f64 {
        match &self.family {
            Family::Gaussian { mean, sigma } => gaussian_abs_moment(mean, *sigma, q),
            Family::Mixture { components } => {
                components.iter().map(|c| c.weight * gaussian_abs_moment(&c.mean, c.sigma, q)).sum()
            }
            Family::Bump { dim, radius, exponent } => {
                let h = *dim as f64 / 2.0;
                radius.powf(q) * (ln_beta(h + q / 2.0, exponent + 1.0) - ln_beta(h, exponent + 1.0)).exp()
            }
        }
    }

    /// Declared `M_{p+α}(ν)`.
    pub fn moment_p_plus_alpha(&self, p: f64) -> f64 {
        self.moment(p + self.alpha)
    }

    /// `∫(1 + |x|^p) √ℓ_ν(x) dx`: exact for Gaussians and bumps, an upper
    /// bound (via `√(Σ a_j) ≤ Σ √a_j`) for mixtures.
    pub fn sqrt_weighted_integral(&self, p: f64) -> Option<f64> {
        let gauss = |mean: &[f64], sigma: f64| {
            let d = mean.len() as f64;
            let scale = (2.0 * PI * sigma * sigma).powf(-d / 4.0) * (4.0 * PI * sigma * sigma).powf(d / 2.0);
            scale * (1.0 + gaussian_abs_moment(mean, 2f64.sqrt() * sigma, p))
        };
        Some(match &self.family {
            Family::Gaussian { mean, sigma } => gauss(mean, *sigma),
            Family::Mixture { components } => {
                components.iter().map(|c| c.weight.sqrt() * gauss(&c.mean, c.sigma)).sum()
            }
            Family::Bump { dim, radius, exponent } => {
                let d = *dim as f64;
                let half = exponent / 2.0;
                let k = Self::bump_constant(*dim, *radius, *exponent);
                let mass = (d * radius.ln() + d / 2.0 * PI.ln() + libm::lgamma(half + 1.0)
                    - libm::lgamma(half + 1.0 + d / 2.0))
                .exp();
                let mom = radius.powf(p) * (ln_beta(d / 2.0 + p / 2.0, half + 1.0) - ln_beta(d / 2.0, half + 1.0)).exp();
                k.sqrt() * mass * (1.0 + mom)
            }
        })
    }

    /// `P_t ℓ_ν(x)`: closed form for the Gaussian families, quadrature otherwise.
    pub fn heat_flow(&self, t: f64, x: &[f64]) -> Result<f64> {
        if t == 0.0 {
            return self.eval_density(x);
        }
        if !(t > 0.0) {
            return Err(Error::domain(format!("heat flow time must be nonnegative, got {t}")));
        }
        match &self.family {
            Family::Gaussian { mean, sigma } => Ok(gaussian_density(mean, (sigma * sigma + 2.0 * t).sqrt(), x)),
            Family::Mixture { components } => Ok(components
                .iter()
                .map(|c| c.weight * gaussian_density(&c.mean, (c.sigma * c.sigma + 2.0 * t).sqrt(), x))
                .sum()),
            Family::Bump { dim, radius, .. } => {
                if *dim == 1 {
                    // panel edges on the rim, where the density is not smooth
                    let rule = CompositeRule::new(-radius, *radius, 512, 8);
                    return Ok(rule.integrate(|y| kernel_from_norm_sq(t, 1, (x[0] - y).powi(2)) * self.density(&[y])));
                }
                let f = |y: &[f64]| self.density(y);
                let quad = SemigroupQuadrature {
                    panels: 64,
                    scale: (radius * radius / t).max(1.0),
                    ..Default::default()
                };
                Ok(semigroup_apply(t, &f, x, quad)?.value)
            }
        }
    }

    /// Draws one point using `rng`.
    pub fn draw<R: Rng>(&self, rng: &mut R, out: &mut [f64]) {
        match &self.family {
            Family::Gaussian { mean, sigma } => {
                for (o, m) in out.iter_mut().zip(mean) {
                    *o = m + sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Family::Mixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = components.len() - 1;
                for (j, c) in components.iter().enumerate() {
                    acc += c.weight;
                    if u < acc {
                        chosen = j;
                        break;
                    }
                }
                let c = &components[chosen];
                for (o, m) in out.iter_mut().zip(&c.mean) {
                    *o = m + c.sigma * rng.sample::<f64, _>(StandardNormal);
                }
            }
            Family::Bump { dim, radius, exponent } => {
                let beta = Beta::new(*dim as f64 / 2.0, exponent + 1.0).expect("valid beta parameters");
                let r = radius * beta.sample(rng).sqrt();
                if *dim == 1 {
                    out[0] = if rng.random::<bool>() { r } else { -r };
                } else {
                    loop {
                        for o in out.iter_mut() {
                            *o = rng.sample::<f64, _>(StandardNormal);
                        }
                        let n = norm(out);
                        if n > 0.0 {
                            out.iter_mut().for_each(|o| *o *= r / n);
                            break;
                        }
                    }
                }
            }
        }
    }

    /// `count` independent draws, particle `i` from its own substream.
    pub fn sample(&self, count: usize, seed: u64) -> Result<ParticleCloud> {
        if count == 0 {
            return Err(Error::domain("need at least one particle"));
        }
        let d = self.dim();
        let key = StreamKey::new(seed);
        let mut positions = vec![0.0; count * d];
        use rayon::prelude::*;
        positions.par_chunks_mut(d).enumerate().for_each(|(i, out)| {
            let mut rng = key.rng(i as u64, 0, Purpose::Initial);
            self.draw(&mut rng, out);
        });
        ParticleCloud::new(d, positions)
    }

    /// Largest `|ℓ(x) − ℓ(y)| / |x − y|^α` over `pairs` random pairs near the mass.
    pub fn holder_probe(&self, pairs: usize, seed: u64) -> f64 {
        let d = self.dim();
        let key = StreamKey::new(seed);
        let mut rng = key.global(Purpose::Probe);
        let spread = self.moment(2.0).sqrt() + 1.0;
        let mut worst = 0.0f64;
        let mut x = vec![0.0; d];
        let mut y = vec![0.0; d];
        for k in 0..pairs {
            let h = spread * 10f64.powf(-4.0 * rng.random::<f64>());
            for j in 0..d {
                x[j] = rng.random_range(-2.0 * spread..2.0 * spread);
                y[j] = x[j] + h * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt();
            }
            if k % 4 == 0 {
                // rim-hugging pairs matter for the bump
                if let Family::Bump { radius, .. } = self.family {
                    x.iter_mut().for_each(|v| *v = 0.0);
                    x[0] = radius * (1.0 - 1e-3 * rng.random::<f64>());
                    y.copy_from_slice(&x);
                    y[0] = radius + rng.random::<f64>() * 1e-3;
                }
            }
            let dxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            if dxy > 0.0 {
                worst = worst.max((self.density(&x) - self.density(&y)).abs() / dxy.powf(self.alpha));
            }
        }
        worst
    }
}

fn check_gaussian(mean: &[f64], sigma: f64) -> Result<()> {
    if mean.is_empty() || mean.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("gaussian mean must be a finite nonempty vector"));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::domain(format!("gaussian sigma must be positive, got {sigma}")));
    }
    Ok(())
}
