//! Potential density u and Lévy density μ of the subordinator.
//!
//! u ↔ 1/φ(λ) and t·μ(t) ↔ φ′(λ). Exact expressions are used where they
//! exist: power laws for the stable family, the tempered power law and a
//! renewal series for the relativistic family, and a spectral (Stieltjes)
//! integral for the sum of two stable exponents. The log-modulated families
//! are inverted numerically. [`Method::Inversion`] forces inversion for every
//! family and serves as a cross-check.

use std::f64::consts::PI;
use std::path::Path;

use statrs::function::gamma::{gamma, ln_gamma};

use crate::bernstein::{log_grid, Family, PhiSpec};
use crate::error::{Error, Result};
use crate::inversion::Stehfest;
use crate::quadrature::{exp_sinh, QuadOptions};
use crate::report::{RatioReport, Sample};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Closed form or series where available, inversion otherwise.
    Preferred,
    Inversion,
}

fn check_t(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("t must be positive and finite, got {t}")))
    }
}

fn stable_mu(rho: f64, t: f64) -> f64 {
    rho / gamma(1.0 - rho) * t.powf(-1.0 - rho)
}

fn stable_u(rho: f64, t: f64) -> f64 {
    t.powf(rho - 1.0) / gamma(rho)
}

/// Largest θt summed term by term; the series needs about θt/ρ terms.
const RELATIVISTIC_SERIES_LIMIT: f64 = 200.0;

/// Σ_{k≥1} m^{k-1} t^{kρ-1} e^{-θt} / Γ(kρ), the inverse of
/// 1/((λ+θ)^ρ − m) = Σ m^{k-1} (λ+θ)^{-kρ}; summed in log space.
fn relativistic_u(rho: f64, mass: f64, t: f64) -> f64 {
    let theta = mass.powf(1.0 / rho);
    if theta * t > RELATIVISTIC_SERIES_LIMIT {
        // renewal limit 1/φ′(0); the branch cut at −θ contributes O(e^{-θt})
        return 1.0 / (rho * theta.powf(rho - 1.0));
    }
    let (ln_m, ln_t) = (mass.ln(), t.ln());
    let log_term = |k: f64| (k - 1.0) * ln_m + (k * rho - 1.0) * ln_t - theta * t - ln_gamma(k * rho);
    // terms peak near kρ ≈ θt
    let peak = ((theta * t / rho).floor() as usize).max(1);
    let top = log_term(peak as f64);
    let mut sum = 0.0;
    let mut k = peak;
    loop {
        let term = (log_term(k as f64) - top).exp();
        sum += term;
        if k == 1 || term < 1e-18 * sum {
            break;
        }
        k -= 1;
    }
    let mut k = peak + 1;
    loop {
        let term = (log_term(k as f64) - top).exp();
        sum += term;
        if term < 1e-18 * sum {
            break;
        }
        k += 1;
    }
    (top + sum.ln()).exp()
}

/// u for φ = λ^a + λ^b via its Stieltjes representation
/// u(t) = (1/π) ∫_0^∞ e^{-ts} (s^a sin πa + s^b sin πb)
///        / (s^{2a} + s^{2b} + 2 s^{a+b} cos π(a−b)) ds.
fn stable_sum_u(a: f64, b: f64, t: f64) -> Result<f64> {
    let (sa, sb, cab) = ((PI * a).sin(), (PI * b).sin(), (PI * (a - b)).cos());
    let density = |s: f64| {
        // divide through by s^{2b} to keep magnitudes moderate
        let r = s.powf(a - b);
        s.powf(-b) * (r * sa + sb) / (r * r + 1.0 + 2.0 * r * cab)
    };
    let est = exp_sinh(
        |x, _| (-x).exp() * density(x / t),
        0.0,
        &QuadOptions::with_rel_tol(1e-11),
    )?;
    Ok(est.value / (PI * t))
}

fn invert(rule: &Stehfest, t: f64, f: impl Fn(f64) -> f64) -> Result<f64> {
    let v = rule.invert(f, t)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Inversion(format!("non-positive inverse {v} at t = {t}")))
    }
}

/// u(t) with the preferred evaluator.
pub fn potential_density_u(spec: &PhiSpec, t: f64) -> Result<f64> {
    potential_density_u_with(spec, t, Method::Preferred)
}

pub fn potential_density_u_with(spec: &PhiSpec, t: f64, method: Method) -> Result<f64> {
    check_t(t)?;
    let rho = spec.rho();
    match (method, spec.family()) {
        (Method::Preferred, Family::Stable) => Ok(stable_u(rho, t)),
        (Method::Preferred, Family::Relativistic { mass }) => Ok(relativistic_u(rho, *mass, t)),
        (Method::Preferred, Family::StableSum { beta }) => stable_sum_u(rho, 0.5 * beta, t),
        _ => invert(&Stehfest::default(), t, |l| (-spec.ln_phi(l)).exp()),
    }
}

/// μ(t) with the preferred evaluator.
pub fn levy_density_mu(spec: &PhiSpec, t: f64) -> Result<f64> {
    levy_density_mu_with(spec, t, Method::Preferred)
}

pub fn levy_density_mu_with(spec: &PhiSpec, t: f64, method: Method) -> Result<f64> {
    check_t(t)?;
    let rho = spec.rho();
    match (method, spec.family()) {
        (Method::Preferred, Family::Stable) => Ok(stable_mu(rho, t)),
        (Method::Preferred, Family::Relativistic { mass }) => {
            let theta = mass.powf(1.0 / rho);
            Ok(stable_mu(rho, t) * (-theta * t).exp())
        }
        (Method::Preferred, Family::StableSum { beta }) => {
            Ok(stable_mu(rho, t) + stable_mu(0.5 * beta, t))
        }
        _ => Ok(invert(&Stehfest::default(), t, |l| spec.phi_prime(l))? / t),
    }
}

/// u and μ tabulated on a log grid.
#[derive(Debug, Clone)]
pub struct DensityTable {
    spec: PhiSpec,
    grid: Vec<f64>,
    u_values: Vec<f64>,
    mu_values: Vec<f64>,
}

impl DensityTable {
    pub fn build(spec: &PhiSpec, t_range: (f64, f64), nodes: usize) -> Result<Self> {
        let (t_min, t_max) = t_range;
        if !(t_min > 0.0 && t_min < t_max) || nodes < 2 {
            return Err(Error::Domain(format!("bad table range {t_range:?} / {nodes} nodes")));
        }
        let grid = log_grid(t_min, t_max, nodes);
        let u_values = grid
            .iter()
            .map(|&t| potential_density_u(spec, t))
            .collect::<Result<Vec<_>>>()?;
        let mu_values = grid
            .iter()
            .map(|&t| levy_density_mu(spec, t))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            spec: spec.clone(),
            grid,
            u_values,
            mu_values,
        })
    }

    pub fn spec(&self) -> &PhiSpec {
        &self.spec
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn u_values(&self) -> &[f64] {
        &self.u_values
    }

    pub fn mu_values(&self) -> &[f64] {
        &self.mu_values
    }

    fn interpolate(&self, values: &[f64], t: f64, below: impl Fn(f64, f64) -> f64) -> Result<f64> {
        check_t(t)?;
        let (t_min, t_max) = (self.grid[0], *self.grid.last().expect("nodes"));
        if t > t_max {
            return Err(Error::Range(format!("t = {t} exceeds table maximum {t_max}")));
        }
        if t < t_min {
            return Ok(below(values[0], t));
        }
        let i = self.grid.partition_point(|&g| g <= t).clamp(1, self.grid.len() - 1) - 1;
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let s = (t / t0).ln() / (t1 / t0).ln();
        Ok(((1.0 - s) * values[i].ln() + s * values[i + 1].ln()).exp())
    }

    /// u(t), extended below the grid by u(t) ≍ t⁻¹ φ(t⁻¹)⁻¹.
    pub fn u(&self, t: f64) -> Result<f64> {
        let t0 = self.grid[0];
        let spec = &self.spec;
        self.interpolate(&self.u_values, t, |u0, t| {
            u0 * (t0 / t) * (spec.ln_phi(1.0 / t0) - spec.ln_phi(1.0 / t)).exp()
        })
    }

    /// μ(t), extended below the grid by μ(t) ≍ t⁻¹ φ(t⁻¹).
    pub fn mu(&self, t: f64) -> Result<f64> {
        let t0 = self.grid[0];
        let spec = &self.spec;
        self.interpolate(&self.mu_values, t, |m0, t| {
            m0 * (t0 / t) * (spec.ln_phi(1.0 / t) - spec.ln_phi(1.0 / t0)).exp()
        })
    }

    /// Nodes where u exceeds the upper bound (1 − e⁻¹)⁻¹ t⁻¹ / φ(t⁻¹).
    pub fn zahle_violations(&self) -> Vec<f64> {
        self.grid
            .iter()
            .zip(&self.u_values)
            .filter(|(t, u)| **u > zahle_upper(&self.spec, **t))
            .map(|(t, _)| *t)
            .collect()
    }

    /// CSV with columns `t, u, mu`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "u", "mu"])?;
        for ((t, u), m) in self.grid.iter().zip(&self.u_values).zip(&self.mu_values) {
            w.write_record([t.to_string(), u.to_string(), m.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// (1 − e⁻¹)⁻¹ t⁻¹ / φ(t⁻¹).
pub fn zahle_upper(spec: &PhiSpec, t: f64) -> f64 {
    (1.0 - (-1.0f64).exp()).recip() / t * (-spec.ln_phi(1.0 / t)).exp()
}

/// Upper bound check of u against [`zahle_upper`]. The report's ratios are
/// u / bound; its `ratio_min` is the empirical lower constant for
/// u(t) t φ(t⁻¹) up to the factor (1 − e⁻¹)⁻¹.
pub fn check_zahle_bound(spec: &PhiSpec, grid: &[f64]) -> Result<RatioReport> {
    let samples = grid
        .iter()
        .map(|&t| Ok(Sample::scalar(t, potential_density_u(spec, t)?, zahle_upper(spec, t))))
        .collect::<Result<Vec<_>>>()?;
    let report = RatioReport::bounded_above("zahle-bound", samples, 1.0);
    let lower = report.ratio_min * (1.0 - (-1.0f64).exp()).recip();
    Ok(report.with_note(format!("empirical inf of u(t) t phi(1/t): {lower:.6}")))
}

/// Reports of u(t)·t·φ(t⁻¹) and μ(t)·t/φ(t⁻¹) over `t_grid`.
pub fn check_density_asymptotics(spec: &PhiSpec, t_grid: &[f64], cap: f64) -> Result<(RatioReport, RatioReport)> {
    let mut u = Vec::with_capacity(t_grid.len());
    let mut mu = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let phi = spec.ln_phi(1.0 / t);
        u.push(Sample::scalar(t, potential_density_u(spec, t)?, (-phi).exp() / t));
        mu.push(Sample::scalar(t, levy_density_mu(spec, t)?, phi.exp() / t));
    }
    Ok((
        RatioReport::new("density-u", u, cap),
        RatioReport::new("density-mu", mu, cap),
    ))
}

/// Suprema of μ(t)/μ(2t) over `grid ∩ (0, K)` and of μ(t)/μ(t+1) over
/// `grid ∩ (1, ∞)`. Passes when both are finite and at most `cap`.
pub fn check_mu_doubling(spec: &PhiSpec, k: f64, grid: &[f64], cap: f64) -> Result<RatioReport> {
    let mut samples = Vec::new();
    for &t in grid.iter().filter(|&&t| t > 0.0 && t < k) {
        samples.push(Sample::scalar(t, levy_density_mu(spec, t)?, levy_density_mu(spec, 2.0 * t)?).tagged("doubling"));
    }
    for &t in grid.iter().filter(|&&t| t > 1.0) {
        samples.push(Sample::scalar(t, levy_density_mu(spec, t)?, levy_density_mu(spec, t + 1.0)?).tagged("shift"));
    }
    let sup = |tag: &str| {
        samples
            .iter()
            .filter(|s| s.tag == tag)
            .map(|s| s.ratio)
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (doubling, shift) = (sup("doubling"), sup("shift"));
    Ok(RatioReport::bounded_above("mu-doubling", samples, cap)
        .with_note(format!("sup mu(t)/mu(2t) = {doubling:.6}"))
        .with_note(format!("sup mu(t)/mu(t+1) = {shift:.6}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::check_complete_monotone;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    fn specs() -> Vec<PhiSpec> {
        vec![
            PhiSpec::stable(1.0).unwrap(),
            PhiSpec::relativistic(1.0).unwrap(),
            PhiSpec::stable_sum(1.0, 0.5).unwrap(),
            PhiSpec::log_power(1.0, 0.5).unwrap(),
            PhiSpec::log_power_neg(1.0, 0.5).unwrap(),
        ]
    }

    #[test]
    fn stable_values() {
        let s = PhiSpec::stable(1.0).unwrap();
        let sp = PI.sqrt();
        assert!(rel(potential_density_u(&s, 1.0).unwrap(), 1.0 / sp) < 1e-12);
        assert!(rel(potential_density_u(&s, 4.0).unwrap(), 0.5 / sp) < 1e-12);
        assert!(rel(levy_density_mu(&s, 1.0).unwrap(), 0.5 / sp) < 1e-12);
        assert!(rel(levy_density_mu(&s, 4.0).unwrap(), 0.5 / sp / 8.0) < 1e-12);
        assert!((levy_density_mu(&s, 4.0).unwrap() - 0.035_262).abs() < 1e-6);
        // inversion path agrees with the closed forms
        assert!(rel(potential_density_u_with(&s, 1.0, Method::Inversion).unwrap(), 1.0 / sp) < 1e-3);
        assert!(rel(levy_density_mu_with(&s, 1.0, Method::Inversion).unwrap(), 0.5 / sp) < 1e-3);
        assert!(potential_density_u(&s, 0.0).is_err());
    }

    #[test]
    fn exact_evaluators_agree_with_inversion() {
        for spec in [PhiSpec::relativistic(1.0).unwrap(), PhiSpec::stable_sum(1.2, 0.6).unwrap(), PhiSpec::relativistic(0.6).unwrap()] {
            for t in [1e-3, 0.05, 0.7, 3.0] {
                let exact = potential_density_u(&spec, t).unwrap();
                let inv = potential_density_u_with(&spec, t, Method::Inversion).unwrap();
                assert!(rel(exact, inv) < 1e-4, "{spec} u at {t}: {exact} {inv}");
                let exact = levy_density_mu(&spec, t).unwrap();
                let inv = levy_density_mu_with(&spec, t, Method::Inversion).unwrap();
                assert!(rel(exact, inv) < 1e-3, "{spec} mu at {t}: {exact} {inv}");
            }
        }
    }

    #[test]
    fn relativistic_u_tends_to_inverse_mean() {
        let s = PhiSpec::relativistic(1.0).unwrap();
        // 1/φ′(0) = 1/(ρ θ^{ρ-1}) = 2
        assert!(rel(potential_density_u(&s, 400.0).unwrap(), 2.0) < 1e-3);
        assert!(rel(potential_density_u(&s, 5000.0).unwrap(), 2.0) < 1e-4);
        // the series and the limit agree where they hand over
        let below = potential_density_u(&s, 0.999 * RELATIVISTIC_SERIES_LIMIT).unwrap();
        assert!(rel(below, 2.0) < 1e-12, "{below}");
        assert_eq!(potential_density_u(&s, 1e300).unwrap(), 2.0);
    }

    #[test]
    fn zahle_bound_holds() {
        let s = PhiSpec::stable(1.0).unwrap();
        assert!((zahle_upper(&s, 1.0) - 1.581_976_7).abs() < 1e-6);
        for spec in specs() {
            let r = check_zahle_bound(&spec, &log_grid(1e-4, 10.0, 25)).unwrap();
            assert!(r.pass, "{spec}: {}", r.summary());
        }
    }

    #[test]
    fn doubling_ratios() {
        let s = PhiSpec::stable(1.0).unwrap();
        let r = check_mu_doubling(&s, 1.0, &log_grid(1e-3, 10.0, 20), 100.0).unwrap();
        let want = 2f64.powf(1.5);
        for sample in &r.samples {
            if sample.tag == "doubling" || sample.x[0] == 1.0 {
                assert!(rel(sample.ratio, want) < 1e-12);
            }
            assert!(sample.ratio >= 1.0);
        }
        assert!(r.pass);
        let rel_spec = PhiSpec::relativistic(1.0).unwrap();
        let r = check_mu_doubling(&rel_spec, 1.0, &log_grid(1e-3, 50.0, 30), 100.0).unwrap();
        assert!(r.pass && r.ratio_max.is_finite());
    }

    #[test]
    fn asymptotic_reports_have_bounded_spread() {
        let grid = log_grid(1e-4, 1.0, 30);
        for spec in specs() {
            let (u, mu) = check_density_asymptotics(&spec, &grid, 10.0).unwrap();
            assert!(u.pass && mu.pass, "{spec}: {} / {}", u.summary(), mu.summary());
        }
    }

    #[test]
    fn table_invariants() {
        for spec in specs() {
            let table = DensityTable::build(&spec, (1e-3, 10.0), 30).unwrap();
            let (u, mu) = (table.u_values(), table.mu_values());
            assert!(u.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0), "{spec}");
            assert!(mu.windows(2).all(|w| w[1] < w[0] && w[1] > 0.0), "{spec}");
            assert!(table.zahle_violations().is_empty());
            let grid = table.grid().to_vec();
            assert!(check_complete_monotone(|t| table.u(t).unwrap(), &grid, 3).unwrap().pass, "{spec}");
            assert!(check_complete_monotone(|t| table.mu(t).unwrap(), &grid, 3).unwrap().pass, "{spec}");
        }
    }

    #[test]
    fn laplace_round_trip_of_tabulated_u() {
        for spec in specs() {
            let table = DensityTable::build(&spec, (1e-6, 100.0), 400).unwrap();
            for lambda in [1.0, 10.0, 100.0] {
                let est = exp_sinh(
                    |t, _| if t > 100.0 { 0.0 } else { (-lambda * t).exp() * table.u(t).unwrap() },
                    0.0,
                    &QuadOptions::with_rel_tol(1e-8),
                )
                .unwrap();
                let want = 1.0 / spec.phi(lambda);
                assert!(rel(est.value, want) < 5e-3, "{spec} at {lambda}: {} vs {want}", est.value);
            }
        }
    }

    #[test]
    fn levy_measure_integrable_near_zero() {
        for spec in specs() {
            let table = DensityTable::build(&spec, (1e-6, 1.0), 60).unwrap();
            let est = crate::quadrature::tanh_sinh(
                |t, _, _| t * table.mu(t).unwrap(),
                1e-6,
                1.0,
                &QuadOptions::with_rel_tol(1e-5),
            )
            .unwrap();
            assert!(est.value.is_finite() && est.value > 0.0);
        }
    }

    #[test]
    fn csv_export() {
        let s = PhiSpec::stable(1.0).unwrap();
        let table = DensityTable::build(&s, (0.1, 1.0), 5).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        table.write_csv(&path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["t", "u", "mu"]);
        assert_eq!(r.records().count(), 5);
    }
}
