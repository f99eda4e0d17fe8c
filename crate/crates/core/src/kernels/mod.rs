//! Radial Lévy kernel j and free Green function G of the subordinate
//! Brownian motion in ℝ^d.
//!
//! Both are Gaussian mixtures, j(r) = ∫ (4πt)^{-d/2} e^{-r²/4t} μ(t) dt and G
//! the same over u. With s = r²/(4t) the integrand becomes
//! (s/(πr²))^{d/2} e^{-s} μ(r²/4s) r²/(4s²), which concentrates near s ~ 1
//! and is integrated by exp-sinh.

pub mod generator;

use std::cell::Cell;
use std::f64::consts::PI;

use statrs::function::gamma::gamma;

use crate::bernstein::{transience_check, Family, PhiSpec, Transience};
use crate::densities::{levy_density_mu, potential_density_u};
use crate::error::{Error, Result};
use crate::quadrature::{exp_sinh, Estimate, QuadOptions};
use crate::report::{RatioReport, Sample};

pub use generator::{apply_generator, GeneratorResult, Profile, DEFAULT_EPS_SCHEDULE};

/// Past this value e^{-s} underflows and the integrand is dropped.
const EXP_CUTOFF: f64 = 745.0;

#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    spec: PhiSpec,
    d: usize,
    quad: QuadOptions,
    transience: Option<Transience>,
}

/// Surface area of the unit sphere S^{k} ⊂ ℝ^{k+1}.
pub fn sphere_area(k: usize) -> f64 {
    let n = (k + 1) as f64;
    2.0 * PI.powf(0.5 * n) / gamma(0.5 * n)
}

impl KernelEvaluator {
    /// Tolerance 1e-10 where the densities are exact, 1e-8 where they come
    /// from inversion (whose own error is around 1e-7).
    pub fn new(spec: &PhiSpec, d: usize) -> Result<Self> {
        let tol = match spec.family() {
            Family::Stable | Family::Relativistic { .. } | Family::StableSum { .. } => 1e-10,
            _ => 1e-8,
        };
        Self::with_options(spec, d, QuadOptions::with_rel_tol(tol))
    }

    pub fn with_options(spec: &PhiSpec, d: usize, quad: QuadOptions) -> Result<Self> {
        if d == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let transience = transience_check(spec, d).ok().map(|r| r.verdict);
        Ok(Self {
            spec: spec.clone(),
            d,
            quad,
            transience,
        })
    }

    pub fn spec(&self) -> &PhiSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn quad_options(&self) -> QuadOptions {
        self.quad
    }

    fn mixture<F>(&self, r: f64, density: F) -> Result<Estimate>
    where
        F: Fn(f64) -> Result<f64>,
    {
        if !(r > 0.0) {
            return Err(Error::Domain(format!("r must be positive, got {r}")));
        }
        if r == f64::INFINITY {
            return Ok(Estimate {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
            });
        }
        let half_d = 0.5 * self.d as f64;
        let r2 = r * r;
        let scale = (PI * r2).powf(-half_d) * 0.25 * r2;
        let failure = Cell::new(None);
        let est = exp_sinh(
            |s, _| {
                let t = 0.25 * r2 / s;
                if s > EXP_CUTOFF || !t.is_finite() {
                    return 0.0;
                }
                match density(t) {
                    Ok(m) => s.powf(half_d - 2.0) * (-s).exp() * m,
                    Err(e) => {
                        failure.set(Some(e));
                        f64::NAN
                    }
                }
            },
            0.0,
            &self.quad,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        let est = est?;
        Ok(Estimate {
            value: scale * est.value,
            error: scale * est.error,
            evaluations: est.evaluations,
        })
    }

    /// j(r) with its quadrature error.
    pub fn levy_kernel_estimate(&self, r: f64) -> Result<Estimate> {
        self.mixture(r, |t| levy_density_mu(&self.spec, t))
    }

    pub fn levy_kernel_j(&self, r: f64) -> Result<f64> {
        Ok(self.levy_kernel_estimate(r)?.value)
    }

    /// G(r) with its quadrature error. Recurrent (spec, d) pairs have no
    /// finite Green function.
    pub fn green_estimate(&self, r: f64) -> Result<Estimate> {
        match self.transience {
            Some(Transience::Transient) => self.mixture(r, |t| potential_density_u(&self.spec, t)),
            Some(Transience::Recurrent) => Err(Error::Unsupported(format!(
                "{} is recurrent in dimension {}",
                self.spec, self.d
            ))),
            None => Err(Error::Unsupported(format!(
                "transience of {} in dimension {} is undetermined",
                self.spec, self.d
            ))),
        }
    }

    pub fn free_green_g(&self, r: f64) -> Result<f64> {
        Ok(self.green_estimate(r)?.value)
    }

    /// G at a point `x` of ℝ^d.
    pub fn free_green_at(&self, x: &[f64]) -> Result<f64> {
        self.free_green_g(x.iter().map(|c| c * c).sum::<f64>().sqrt())
    }

    /// One-dimensional marginal kernel
    /// j₁(s) = |S^{d-2}| ∫_0^∞ ρ^{d-2} j_d(√(ρ²+s²)) dρ; equal to j for d = 1.
    pub fn projected_kernel(&self, s: f64) -> Result<f64> {
        if self.d == 1 {
            return self.levy_kernel_j(s);
        }
        if !(s > 0.0) {
            return Err(Error::Domain(format!("s must be positive, got {s}")));
        }
        let k = (self.d - 2) as i32;
        let failure = Cell::new(None);
        // ρ = s x
        let est = exp_sinh(
            |x, _| match self.levy_kernel_j(s * (1.0 + x * x).sqrt()) {
                Ok(j) => x.powi(k) * j,
                Err(e) => {
                    failure.set(Some(e));
                    f64::NAN
                }
            },
            0.0,
            &QuadOptions::with_rel_tol(1e-8),
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        Ok(sphere_area(self.d - 2) * s.powi(k + 1) * est?.value)
    }
}

/// Comparability reports of the kernels against their small-r asymptotics.
#[derive(Debug, Clone)]
pub struct KernelAsymptotics {
    /// G(r) against r^{-d} / φ(r⁻²).
    pub green: RatioReport,
    /// j(r) against r^{-d} φ(r⁻²).
    pub jump: RatioReport,
    /// j(r)/j(2r) over the grid.
    pub doubling: RatioReport,
    /// j(r)/j(r+1) over the grid.
    pub shift: RatioReport,
}

impl KernelAsymptotics {
    pub fn all_pass(&self) -> bool {
        self.green.pass && self.jump.pass && self.doubling.pass && self.shift.pass
    }
}

pub fn check_kernel_asymptotics(ev: &KernelEvaluator, r_grid: &[f64], cap: f64) -> Result<KernelAsymptotics> {
    if r_grid.iter().any(|&r| !(r > 0.0 && r <= 1.0)) {
        return Err(Error::Domain("radii must lie in (0, 1]".into()));
    }
    let d = ev.dim() as i32;
    let spec = ev.spec();
    let mut green = Vec::new();
    let mut jump = Vec::new();
    let mut doubling = Vec::new();
    let mut shift = Vec::new();
    for &r in r_grid {
        let ln_phi = spec.ln_phi(r.powi(-2));
        let base = r.powi(-d);
        let j = ev.levy_kernel_j(r)?;
        green.push(Sample::scalar(r, ev.free_green_g(r)?, base * (-ln_phi).exp()));
        jump.push(Sample::scalar(r, j, base * ln_phi.exp()));
        doubling.push(Sample::scalar(r, j, ev.levy_kernel_j(2.0 * r)?));
        shift.push(Sample::scalar(r, j, ev.levy_kernel_j(r + 1.0)?));
    }
    Ok(KernelAsymptotics {
        green: RatioReport::new("kernel-G", green, cap),
        jump: RatioReport::new("kernel-j", jump, cap),
        doubling: RatioReport::bounded_above("kernel-j-doubling", doubling, f64::MAX),
        shift: RatioReport::bounded_above("kernel-j-shift", shift, f64::MAX),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::log_grid;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn stable_oracles() {
        let s = PhiSpec::stable(1.0).unwrap();
        let ev = KernelEvaluator::new(&s, 2).unwrap();
        assert!(rel(ev.levy_kernel_j(1.0).unwrap(), 1.0 / (2.0 * PI)) < 1e-8);
        assert!(rel(ev.free_green_g(1.0).unwrap(), 1.0 / (2.0 * PI)) < 1e-8);
        assert!(rel(ev.free_green_g(0.5).unwrap(), 1.0 / PI) < 1e-8);
        for r in log_grid(1e-2, 1.0, 7) {
            assert!(rel(ev.free_green_g(r).unwrap() * 2.0 * PI * r, 1.0) < 1e-8);
            assert!(rel(ev.levy_kernel_j(r).unwrap() * 2.0 * PI * r.powi(3), 1.0) < 1e-8);
        }
        let ev1 = KernelEvaluator::new(&s, 1).unwrap();
        assert!(rel(ev1.levy_kernel_j(1.0).unwrap(), 1.0 / PI) < 1e-8);
    }

    #[test]
    fn riesz_kernel_in_three_dimensions() {
        // A(d, α) r^{α-d} with A = Γ((d-α)/2) / (2^α π^{d/2} Γ(α/2))
        let alpha = 1.4;
        let s = PhiSpec::stable(alpha).unwrap();
        let ev = KernelEvaluator::new(&s, 3).unwrap();
        let a = gamma(0.5 * (3.0 - alpha)) / (2f64.powf(alpha) * PI.powf(1.5) * gamma(0.5 * alpha));
        for r in [0.01, 0.3, 1.0] {
            assert!(rel(ev.free_green_g(r).unwrap(), a * r.powf(alpha - 3.0)) < 1e-7);
        }
    }

    #[test]
    fn recurrent_green_is_unsupported() {
        let s = PhiSpec::stable(1.0).unwrap();
        let ev = KernelEvaluator::new(&s, 1).unwrap();
        assert!(matches!(ev.free_green_g(1.0), Err(Error::Unsupported(_))));
        let rel_spec = PhiSpec::relativistic(1.0).unwrap();
        let ev = KernelEvaluator::new(&rel_spec, 2).unwrap();
        assert!(matches!(ev.free_green_g(1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn kernels_decrease_and_green_is_radial() {
        for spec in [PhiSpec::stable_sum(1.0, 0.5).unwrap(), PhiSpec::log_power(1.0, 0.5).unwrap()] {
            let ev = KernelEvaluator::new(&spec, 2).unwrap();
            let grid = log_grid(1e-2, 10.0, 12);
            let j: Vec<f64> = grid.iter().map(|&r| ev.levy_kernel_j(r).unwrap()).collect();
            let g: Vec<f64> = grid.iter().map(|&r| ev.free_green_g(r).unwrap()).collect();
            assert!(j.windows(2).all(|w| w[1] < w[0]));
            assert!(g.windows(2).all(|w| w[1] < w[0]));
            let a = ev.free_green_at(&[0.3, 0.4]).unwrap();
            let b = ev.free_green_at(&[0.0, -0.5]).unwrap();
            assert!(rel(a, b) < 1e-14);
        }
    }

    #[test]
    fn quadrature_self_consistency() {
        let spec = PhiSpec::stable_sum(1.0, 0.5).unwrap();
        let coarse = KernelEvaluator::new(&spec, 2).unwrap();
        let fine = KernelEvaluator::with_options(&spec, 2, QuadOptions::with_rel_tol(5e-11)).unwrap();
        for r in [0.05, 0.5, 2.0] {
            let a = coarse.levy_kernel_estimate(r).unwrap();
            let b = fine.levy_kernel_estimate(r).unwrap();
            assert!((a.value - b.value).abs() <= a.error.max(1e-12 * a.value));
            let a = coarse.green_estimate(r).unwrap();
            let b = fine.green_estimate(r).unwrap();
            assert!((a.value - b.value).abs() <= a.error.max(1e-12 * a.value));
        }
    }

    #[test]
    fn projection_reproduces_one_dimensional_kernel() {
        let spec = PhiSpec::stable_sum(1.0, 0.5).unwrap();
        let one = KernelEvaluator::new(&spec, 1).unwrap();
        for d in [2, 3] {
            let ev = KernelEvaluator::new(&spec, d).unwrap();
            for s in [0.25, 0.5, 1.0] {
                let projected = ev.projected_kernel(s).unwrap();
                assert!(rel(projected, one.levy_kernel_j(s).unwrap()) < 1e-2, "d={d} s={s}");
            }
        }
    }

    #[test]
    fn asymptotic_reports() {
        let grid = log_grid(1e-4, 1.0, 12);
        let s = PhiSpec::stable(1.0).unwrap();
        let rep = check_kernel_asymptotics(&KernelEvaluator::new(&s, 2).unwrap(), &grid, 10.0).unwrap();
        assert!(rep.green.geometric_spread < 1.01 && rep.jump.geometric_spread < 1.01);
        assert!(rep.all_pass());
        let s = PhiSpec::stable_sum(1.0, 0.5).unwrap();
        let rep = check_kernel_asymptotics(&KernelEvaluator::new(&s, 2).unwrap(), &grid, 10.0).unwrap();
        assert!(rep.all_pass(), "{} {}", rep.green.summary(), rep.jump.summary());
        assert!(rep.doubling.samples.iter().all(|s| s.ratio > 1.0));
    }
}
