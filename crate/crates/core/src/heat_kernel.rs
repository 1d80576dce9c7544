//! The Gaussian heat kernel `p_t(x) = (4πt)^(-d/2) exp(-|x|²/(4t))`, its
//! gradient, the semigroup `P_t f = p_t * f`, and the ratio functions used to
//! check the classical kernel estimates numerically.
//!
//! `p_t` is the density of `√2 B_t`, i.e. of a centred Gaussian with
//! covariance `2t I_d`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre;

/// A validated evaluation point for the kernel.
#[derive(Debug, Clone, Copy)]
pub struct KernelQuery<'a> {
    time: f64,
    point: &'a [f64],
}

impl<'a> KernelQuery<'a> {
    pub fn new(time: f64, point: &'a [f64]) -> Result<Self> {
        if !(time > 0.0) || !time.is_finite() {
            return Err(Error::domain(format!("heat kernel time must be positive, got {time}")));
        }
        if point.is_empty() {
            return Err(Error::domain("heat kernel point must have dimension >= 1"));
        }
        Ok(Self { time, point })
    }

    pub fn dim(&self) -> usize {
        self.point.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn point(&self) -> &'a [f64] {
        self.point
    }
}

#[inline]
pub(crate) fn norm_sq(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

/// `(4πt)^(-d/2)`.
#[inline]
pub fn normalization(time: f64, dim: usize) -> f64 {
    let c = 4.0 * PI * time;
    match dim {
        1 => 1.0 / c.sqrt(),
        2 => 1.0 / c,
        3 => 1.0 / (c * c.sqrt()),
        _ => c.powf(-(dim as f64) / 2.0),
    }
}

/// Kernel value from the squared norm; no validation.
#[inline]
pub fn kernel_from_norm_sq(time: f64, dim: usize, r2: f64) -> f64 {
    normalization(time, dim) * (-r2 / (4.0 * time)).exp()
}

pub fn eval_p(q: &KernelQuery<'_>) -> f64 {
    kernel_from_norm_sq(q.time, q.dim(), norm_sq(q.point))
}

pub fn eval_grad_p(q: &KernelQuery<'_>) -> Vec<f64> {
    let p = eval_p(q);
    let s = -p / (2.0 * q.time);
    q.point.iter().map(|x| s * x).collect()
}

/// Convenience wrapper validating `(t, x)` and returning `p_t(x)`.
pub fn heat_kernel(time: f64, point: &[f64]) -> Result<f64> {
    Ok(eval_p(&KernelQuery::new(time, point)?))
}

pub fn heat_kernel_grad(time: f64, point: &[f64]) -> Result<Vec<f64>> {
    Ok(eval_grad_p(&KernelQuery::new(time, point)?))
}

/// Resolution for [`semigroup_apply`].
#[derive(Debug, Clone, Copy)]
pub struct SemigroupQuadrature {
    /// Panels per axis (the error estimate reruns with half as many).
    pub panels: usize,
    pub order: usize,
    /// Variance scale of `f`; the box half-width is `8 √(2t · max(1, scale))`.
    pub scale: f64,
    /// Tail mass above which the result is flagged.
    pub tail_tolerance: f64,
}

impl Default for SemigroupQuadrature {
    fn default() -> Self {
        Self { panels: 32, order: 8, scale: 1.0, tail_tolerance: 1e-12 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SemigroupValue {
    pub value: f64,
    /// |fine − coarse| between the rule and the same rule with half the panels.
    pub quadrature_error: f64,
    /// Gaussian mass of `p_t(x − ·)` outside the integration box.
    pub tail_mass: f64,
    pub tail_warning: bool,
}

/// `P_t f(x) = ∫ p_t(x − y) f(y) dy` by tensor Gauss–Legendre quadrature on a
/// box centred at `x`. Supports `1 <= d <= 3`.
pub fn semigroup_apply(
    time: f64,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    quad: SemigroupQuadrature,
) -> Result<SemigroupValue> {
    let q = KernelQuery::new(time, x)?;
    let d = q.dim();
    if d > 3 {
        return Err(Error::domain(format!("semigroup quadrature supports d <= 3, got {d}")));
    }
    if quad.panels < 2 || quad.order < 1 {
        return Err(Error::domain("semigroup quadrature needs >= 2 panels"));
    }
    let half = 8.0 * (2.0 * time * quad.scale.max(1.0)).sqrt();
    let fine = tensor_integral(time, f, x, half, quad.panels, quad.order);
    let coarse = tensor_integral(time, f, x, half, quad.panels / 2, quad.order);
    let inside = libm::erf(half / (4.0 * time).sqrt()).powi(d as i32);
    let tail_mass = (1.0 - inside).max(0.0);
    Ok(SemigroupValue {
        value: fine,
        quadrature_error: (fine - coarse).abs(),
        tail_mass,
        tail_warning: tail_mass > quad.tail_tolerance,
    })
}

fn tensor_integral(
    time: f64,
    f: &(dyn Fn(&[f64]) -> f64 + Sync),
    x: &[f64],
    half: f64,
    panels: usize,
    order: usize,
) -> f64 {
    let d = x.len();
    let (gx, gw) = gauss_legendre(order);
    let width = 2.0 * half / panels as f64;
    // 1D offsets/weights shared by every axis
    let mut offs = Vec::with_capacity(panels * order);
    let mut wts = Vec::with_capacity(panels * order);
    for j in 0..panels {
        let lo = -half + j as f64 * width;
        for (xi, wi) in gx.iter().zip(&gw) {
            offs.push(lo + 0.5 * width * (xi + 1.0));
            wts.push(0.5 * width * wi);
        }
    }
    let m = offs.len();
    let total = m.pow(d as u32);
    let mut y = vec![0.0; d];
    let mut sum = 0.0;
    for flat in 0..total {
        let mut rem = flat;
        let mut w = 1.0;
        let mut r2 = 0.0;
        for k in 0..d {
            let idx = rem % m;
            rem /= m;
            let o = offs[idx];
            y[k] = x[k] + o;
            w *= wts[idx];
            r2 += o * o;
        }
        sum += w * kernel_from_norm_sq(time, d, r2) * f(&y);
    }
    sum
}

// ---------------------------------------------------------------------------
// Ratio functions for the kernel estimates. All are evaluated with the
// Gaussian exponents factored out so that far-field probes do not underflow
// to 0/0.
// ---------------------------------------------------------------------------

/// `|∇p_t(x)| / (t^(-1/2) p_{2t}(x))`.
pub fn gradient_ratio(time: f64, x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let r2 = norm_sq(x);
    // p_t / p_2t = 2^(d/2) exp(-r2/(8t))
    (r2.sqrt() / (2.0 * time.sqrt())) * 2f64.powf(d / 2.0) * (-r2 / (8.0 * time)).exp()
}

/// `|∇^i p_t(x) − ∇^i p_t(y)| / (|x−y|^α t^(-(i+α)/2) (p_{4t}(x) + p_{4t}(y)))`
/// for `i ∈ {0, 1}`.
pub fn space_holder_ratio(order: usize, alpha: f64, time: f64, x: &[f64], y: &[f64]) -> f64 {
    let d = x.len();
    let ax = norm_sq(x) / (4.0 * time);
    let ay = norm_sq(y) / (4.0 * time);
    // p_{4t}(z) = (16πt)^(-d/2) exp(-a_z / 4)
    let shift = (ax / 4.0).min(ay / 4.0);
    let denom_exp = (shift - ax / 4.0).exp() + (shift - ay / 4.0).exp();
    let ex = (shift - ax).exp();
    let ey = (shift - ay).exp();
    // (4πt)^(-d/2) / (16πt)^(-d/2) = 4^(d/2)
    let norm_ratio = 4f64.powf(d as f64 / 2.0);
    let num = match order {
        0 => (ex - ey).abs(),
        1 => {
            let s = 1.0 / (2.0 * time);
            x.iter()
                .zip(y)
                .map(|(xi, yi)| {
                    let v = s * (-xi * ex + yi * ey);
                    v * v
                })
                .sum::<f64>()
                .sqrt()
        }
        _ => panic!("only i in {{0, 1}} is supported"),
    };
    let dist = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    if dist == 0.0 {
        return 0.0;
    }
    let scale = dist.powf(alpha) * time.powf(-(order as f64 + alpha) / 2.0);
    norm_ratio * num / (scale * denom_exp)
}

/// `|∇^i p_t(x) − ∇^i p_s(x)| / (|t−s|^(α/2) (t^(-(i+α)/2) p_{2t}(x) + s^(-(i+α)/2) p_{2s}(x)))`.
pub fn time_holder_ratio(order: usize, alpha: f64, s: f64, t: f64, x: &[f64]) -> f64 {
    if s == t {
        return 0.0;
    }
    let d = x.len() as f64;
    let r2 = norm_sq(x);
    let (lt, ls) = (r2 / (4.0 * t), r2 / (4.0 * s));
    // denominators carry exp(-r2/(8t)) and exp(-r2/(8s)); shift by the larger one
    let shift = (lt / 2.0).min(ls / 2.0);
    let ip = order as f64;
    let dt = t.powf(-(ip + alpha) / 2.0) * (8.0 * PI * t).powf(-d / 2.0) * (shift - lt / 2.0).exp();
    let ds = s.powf(-(ip + alpha) / 2.0) * (8.0 * PI * s).powf(-d / 2.0) * (shift - ls / 2.0).exp();
    let pt = (4.0 * PI * t).powf(-d / 2.0) * (shift - lt).exp();
    let ps = (4.0 * PI * s).powf(-d / 2.0) * (shift - ls).exp();
    let num = match order {
        0 => (pt - ps).abs(),
        1 => {
            let (ct, cs) = (pt / (2.0 * t), ps / (2.0 * s));
            (ct - cs).abs() * r2.sqrt()
        }
        _ => panic!("only i in {{0, 1}} is supported"),
    };
    num / ((t - s).abs().powf(alpha / 2.0) * (dt + ds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn closed_form_values() {
        let v = heat_kernel(1.0 / (4.0 * PI), &[0.0]).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-15);
        let v = heat_kernel(0.25, &[0.0, 0.0]).unwrap();
        assert_relative_eq!(v, 1.0 / PI, max_relative = 1e-15);
        // high-precision reference π^(-1/2) e^(-1)
        let v = heat_kernel(0.25, &[1.0]).unwrap();
        assert_relative_eq!(v, 0.207_553_748_710_297_35, max_relative = 1e-14);
    }

    #[test]
    fn nonpositive_time_is_domain_error() {
        assert!(matches!(heat_kernel(0.0, &[1.0]), Err(Error::Domain(_))));
        assert!(matches!(heat_kernel(-1.0, &[1.0]), Err(Error::Domain(_))));
        assert!(heat_kernel_grad(0.0, &[1.0]).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let g = heat_kernel_grad(0.5, &[1.0]).unwrap();
        let h = 1e-6;
        let fd = (heat_kernel(0.5, &[1.0 + h]).unwrap() - heat_kernel(0.5, &[1.0 - h]).unwrap())
            / (2.0 * h);
        assert_relative_eq!(g[0], fd, max_relative = 1e-8);
        assert_relative_eq!(g[0], -0.241_970_724_519_143_35, max_relative = 1e-14);
        assert_eq!(heat_kernel_grad(0.3, &[0.0, 0.0, 0.0]).unwrap(), vec![0.0; 3]);
    }

    #[test]
    fn semigroup_of_constant_is_one() {
        let v = semigroup_apply(0.3, &|_| 1.0, &[0.2], SemigroupQuadrature::default()).unwrap();
        assert!((v.value - 1.0).abs() < 1e-12, "{v:?}");
        assert!(!v.tail_warning);
        let v2 =
            semigroup_apply(0.3, &|_| 1.0, &[0.2, -0.1], SemigroupQuadrature { panels: 16, ..Default::default() })
                .unwrap();
        assert!((v2.value - 1.0).abs() < 1e-12, "{v2:?}");
    }

    #[test]
    fn chapman_kolmogorov() {
        let s = 0.2;
        let f = move |y: &[f64]| kernel_from_norm_sq(s, y.len(), norm_sq(y));
        for &x in &[-1.0, 0.0, 0.7, 2.5] {
            let v = semigroup_apply(0.35, &f, &[x], SemigroupQuadrature::default()).unwrap();
            let exact = heat_kernel(0.55, &[x]).unwrap();
            assert!((v.value - exact).abs() < 1e-12, "x={x}: {} vs {exact}", v.value);
        }
    }

    #[test]
    fn too_narrow_box_raises_tail_warning() {
        let quad = SemigroupQuadrature { tail_tolerance: 1e-40, ..Default::default() };
        let v = semigroup_apply(0.1, &|_| 1.0, &[0.0], quad).unwrap();
        assert!(v.tail_warning);
    }

    #[test]
    fn ratios_are_stable_in_the_far_field() {
        // underflowing kernels must not yield NaN
        let r = gradient_ratio(1e-3, &[10.0]);
        assert!(r.is_finite());
        let r = space_holder_ratio(1, 0.5, 1e-3, &[10.0], &[-9.0]);
        assert!(r.is_finite());
        let r = time_holder_ratio(1, 0.5, 1e-3, 2e-3, &[10.0]);
        assert!(r.is_finite());
    }

    #[test]
    fn ratio_functions_agree_with_direct_formulas_near_origin() {
        let (t, x, y, a) = (0.4, [0.3, -0.2], [0.1, 0.5], 0.5);
        let q = KernelQuery::new(t, &x).unwrap();
        let g = eval_grad_p(&q);
        let direct = norm_sq(&g).sqrt() / (t.powf(-0.5) * heat_kernel(2.0 * t, &x).unwrap());
        assert_relative_eq!(gradient_ratio(t, &x), direct, max_relative = 1e-12);

        let p = |z: &[f64], tt: f64| heat_kernel(tt, z).unwrap();
        let dist = ((x[0] - y[0]).powi(2) + (x[1] - y[1]).powi(2)).sqrt();
        let direct0 = (p(&x, t) - p(&y, t)).abs()
            / (dist.powf(a) * t.powf(-a / 2.0) * (p(&x, 4.0 * t) + p(&y, 4.0 * t)));
        assert_relative_eq!(space_holder_ratio(0, a, t, &x, &y), direct0, max_relative = 1e-12);

        let s = 0.1;
        let direct_t = (p(&x, t) - p(&x, s)).abs()
            / ((t - s).powf(a / 2.0)
                * (t.powf(-a / 2.0) * p(&x, 2.0 * t) + s.powf(-a / 2.0) * p(&x, 2.0 * s)));
        assert_relative_eq!(time_holder_ratio(0, a, s, t, &x), direct_t, max_relative = 1e-12);
    }
}
