//! Ladder-height exponent χ, renewal function V and its density v.
//!
//! χ(λ) = exp((1/π) ∫_0^∞ ln φ(λ²θ²) / (1+θ²) dθ), evaluated after θ = tan u
//! as a tanh-sinh integral over (0, π/2). V and v are recovered from the
//! Laplace pairs `∫ e^{-λt} dV(t) = 1/χ(λ)`, i.e. V ↔ 1/(λχ(λ)) and v ↔ 1/χ(λ).

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::path::Path;

use serde::Serialize;

use crate::bernstein::{log_grid, PhiSpec};
use crate::error::{Error, Result};
use crate::inversion::Stehfest;
use crate::quadrature::{tanh_sinh, Estimate, QuadOptions};
use crate::report::{RatioReport, Sample};

/// Quadrature settings for χ. The integral of ln φ can vanish (χ = 1), so
/// an absolute tolerance is needed besides the relative one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiQuadrature {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_level: u32,
}

impl Default for ChiQuadrature {
    fn default() -> Self {
        Self {
            rel_tol: 1e-11,
            abs_tol: 1e-12,
            max_level: 12,
        }
    }
}

impl ChiQuadrature {
    fn options(&self) -> QuadOptions {
        QuadOptions {
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
            max_level: self.max_level,
        }
    }
}

/// `ln χ(λ)` with the quadrature error of the exponent.
pub fn ln_chi_estimate(spec: &PhiSpec, lambda: f64, quad: &ChiQuadrature) -> Result<Estimate> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::Domain(format!("lambda must be positive, got {lambda}")));
    }
    let ln_lambda = lambda.ln();
    let est = tanh_sinh(
        |u, ua, ub| {
            // ln θ, taking tan of the distance to the nearer endpoint
            let ln_theta = if u < FRAC_PI_4 { ua.tan().ln() } else { -ub.tan().ln() };
            spec.ln_phi((2.0 * (ln_lambda + ln_theta)).exp())
        },
        0.0,
        FRAC_PI_2,
        &quad.options(),
    )?;
    Ok(Estimate {
        value: est.value / PI,
        error: est.error / PI,
        evaluations: est.evaluations,
    })
}

pub fn chi_eval(spec: &PhiSpec, lambda: f64) -> Result<f64> {
    Ok(ln_chi_estimate(spec, lambda, &ChiQuadrature::default())?.value.exp())
}

/// Bounds of χ(λ) / √φ(λ²), valid for every λ > 0.
pub const CHI_ENVELOPE: (f64, f64) = (0.207_879_576_350_761_9, 4.810_477_380_965_351);

/// Report χ(λ)/√φ(λ²) over `grid`; any value outside [`CHI_ENVELOPE`] is a
/// failed check naming the offending λ.
pub fn check_chi_phi_envelope(spec: &PhiSpec, grid: &[f64]) -> Result<RatioReport> {
    if grid.is_empty() {
        return Err(Error::Domain("empty grid".into()));
    }
    let samples = grid
        .iter()
        .map(|&l| Ok(Sample::scalar(l, chi_eval(spec, l)?, spec.phi(l * l).sqrt())))
        .collect::<Result<Vec<_>>>()?;
    let (lo, hi) = CHI_ENVELOPE;
    let offending: Vec<f64> = samples
        .iter()
        .filter(|s| !(s.ratio >= lo && s.ratio <= hi))
        .map(|s| s.x[0])
        .collect();
    if !offending.is_empty() {
        return Err(Error::Check(format!(
            "chi/sqrt(phi(lambda^2)) outside [{lo}, {hi}] at lambda = {offending:?}"
        )));
    }
    Ok(RatioReport::new("chi-envelope", samples, hi / lo)
        .with_note(format!("envelope [{lo:.4}, {hi:.4}]")))
}

/// Tabulated V and v on a log grid, with the inversion settings that produced
/// them.
#[derive(Debug, Clone)]
pub struct FluctuationTable {
    spec: PhiSpec,
    grid: Vec<f64>,
    renewal: Vec<f64>,
    density: Vec<f64>,
    inversion_order: usize,
    chi_quadrature: ChiQuadrature,
}

pub const DEFAULT_T_RANGE: (f64, f64) = (1e-4, 1e2);
pub const DEFAULT_NODES: usize = 200;

/// V(t) and v(t) at one point by direct inversion.
pub fn renewal_pointwise(spec: &PhiSpec, t: f64, rule: &Stehfest, quad: &ChiQuadrature) -> Result<(f64, f64)> {
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    let inv_chi = rule
        .abscissae(t)
        .map(|l| Ok((l, (-ln_chi_estimate(spec, l, quad)?.value).exp())))
        .collect::<Result<Vec<_>>>()?;
    let v_big: Vec<f64> = inv_chi.iter().map(|(l, c)| c / l).collect();
    let v_small: Vec<f64> = inv_chi.iter().map(|(_, c)| *c).collect();
    let big = rule.combine(t, &v_big);
    let small = rule.combine(t, &v_small);
    if !(big.is_finite() && small.is_finite()) {
        return Err(Error::Inversion(format!("non-finite renewal values at t = {t}")));
    }
    Ok((big, small))
}

pub fn build_fluctuation_table(spec: &PhiSpec, t_range: (f64, f64), nodes: usize) -> Result<FluctuationTable> {
    let (t_min, t_max) = t_range;
    if !(t_min > 0.0 && t_min < t_max) {
        return Err(Error::Domain(format!("need 0 < t_min < t_max, got {t_range:?}")));
    }
    if nodes < 16 {
        return Err(Error::Domain(format!("need at least 16 nodes, got {nodes}")));
    }
    let rule = Stehfest::default();
    let quad = ChiQuadrature::default();
    let grid = log_grid(t_min, t_max, nodes);
    let mut renewal = Vec::with_capacity(nodes);
    let mut density = Vec::with_capacity(nodes);
    for &t in &grid {
        let (big, small) = renewal_pointwise(spec, t, &rule, &quad)?;
        renewal.push(big);
        density.push(small);
    }
    repair_monotone(&mut renewal, &grid, true, "V")?;
    repair_monotone(&mut density, &grid, false, "v")?;
    Ok(FluctuationTable {
        spec: spec.clone(),
        grid,
        renewal,
        density,
        inversion_order: rule.order(),
        chi_quadrature: quad,
    })
}

/// Relative size below which a wrong-way step is inversion noise. Where v
/// flattens to a constant the rule's own error is about 1e-7.
const MONOTONE_NOISE: f64 = 1e-5;

/// Clamp monotonicity glitches to the previous node. Two wrong-way steps in
/// a row above [`MONOTONE_NOISE`], or a non-positive value, mean the
/// inversion is unstable.
fn repair_monotone(values: &mut [f64], grid: &[f64], increasing: bool, name: &str) -> Result<()> {
    let wrong = |a: f64, b: f64| if increasing { b <= a } else { b >= a };
    let significant = |a: f64, b: f64| wrong(a, b) && (b - a).abs() > MONOTONE_NOISE * a.abs();
    for (i, v) in values.iter().enumerate() {
        if !(*v > 0.0) {
            return Err(Error::Inversion(format!("{name} = {v} at t = {}", grid[i])));
        }
    }
    for i in 2..values.len() {
        if significant(values[i - 2], values[i - 1]) && significant(values[i - 1], values[i]) {
            return Err(Error::Inversion(format!(
                "{name} not monotone across t = {}..{}",
                grid[i - 2],
                grid[i]
            )));
        }
    }
    for i in 1..values.len() {
        if wrong(values[i - 1], values[i]) {
            values[i] = values[i - 1];
        }
    }
    Ok(())
}

impl FluctuationTable {
    /// Table on [`DEFAULT_T_RANGE`] with [`DEFAULT_NODES`] nodes.
    pub fn build_default(spec: &PhiSpec) -> Result<Self> {
        build_fluctuation_table(spec, DEFAULT_T_RANGE, DEFAULT_NODES)
    }

    pub fn spec(&self) -> &PhiSpec {
        &self.spec
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn renewal_values(&self) -> &[f64] {
        &self.renewal
    }

    pub fn density_values(&self) -> &[f64] {
        &self.density
    }

    pub fn inversion_order(&self) -> usize {
        self.inversion_order
    }

    pub fn chi_quadrature(&self) -> ChiQuadrature {
        self.chi_quadrature
    }

    pub fn t_min(&self) -> f64 {
        self.grid[0]
    }

    pub fn t_max(&self) -> f64 {
        *self.grid.last().expect("table has nodes")
    }

    fn locate(&self, t: f64) -> usize {
        let i = self.grid.partition_point(|&g| g <= t);
        i.clamp(1, self.grid.len() - 1) - 1
    }

    /// √(φ(a⁻²)/φ(b⁻²)), the asymptotic ratio V(b)/V(a) used below `t_min`.
    fn scale_ratio(&self, a: f64, b: f64) -> f64 {
        (0.5 * (self.spec.ln_phi(a.powi(-2)) - self.spec.ln_phi(b.powi(-2)))).exp()
    }

    /// V(t) for `0 ≤ t ≤ t_max`.
    pub fn renewal_v_big(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("t must be nonnegative, got {t}")));
        }
        if t > self.t_max() {
            return Err(Error::Range(format!("t = {t} exceeds table maximum {}", self.t_max())));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        if t < self.t_min() {
            return Ok(self.renewal[0] * self.scale_ratio(self.t_min(), t));
        }
        let i = self.locate(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let (v0, v1) = (self.renewal[i], self.renewal[i + 1]);
        // cubic Hermite in (ln t, ln V) with exact slopes t v / V
        let h = (t1 / t0).ln();
        let s = (t / t0).ln() / h;
        let (y0, y1) = (v0.ln(), v1.ln());
        let m0 = t0 * self.density[i] / v0 * h;
        let m1 = t1 * self.density[i + 1] / v1 * h;
        let (s2, s3) = (s * s, s * s * s);
        let y = (2.0 * s3 - 3.0 * s2 + 1.0) * y0
            + (s3 - 2.0 * s2 + s) * m0
            + (-2.0 * s3 + 3.0 * s2) * y1
            + (s3 - s2) * m1;
        Ok(y.exp().clamp(v0, v1))
    }

    /// V(t) for every `t ≥ 0`; above `t_max` the asymptotic form
    /// V(t) ≍ φ(t⁻²)^{-1/2} is anchored at the last node.
    pub fn renewal_extended(&self, t: f64) -> Result<f64> {
        if t > self.t_max() {
            let last = *self.renewal.last().expect("table has nodes");
            return Ok(last * self.scale_ratio(self.t_max(), t));
        }
        self.renewal_v_big(t)
    }

    /// v(t) for `0 < t ≤ t_max`, log-log linear between nodes.
    pub fn renewal_density(&self, t: f64) -> Result<f64> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("t must be positive, got {t}")));
        }
        if t > self.t_max() {
            return Err(Error::Range(format!("t = {t} exceeds table maximum {}", self.t_max())));
        }
        if t < self.t_min() {
            return Ok(self.density[0] * self.t_min() / t * self.scale_ratio(self.t_min(), t));
        }
        let i = self.locate(t);
        let (t0, t1) = (self.grid[i], self.grid[i + 1]);
        let s = (t / t0).ln() / (t1 / t0).ln();
        let y = (1.0 - s) * self.density[i].ln() + s * self.density[i + 1].ln();
        Ok(y.exp())
    }

    /// Reports of V(t)√φ(t⁻²) and v(t) t √φ(t⁻²) over `t_grid`.
    pub fn check_asymptotics(&self, t_grid: &[f64], cap: f64) -> Result<(RatioReport, RatioReport)> {
        let mut big = Vec::with_capacity(t_grid.len());
        let mut small = Vec::with_capacity(t_grid.len());
        for &t in t_grid {
            let scale = (-0.5 * self.spec.ln_phi(t.powi(-2))).exp();
            big.push(Sample::scalar(t, self.renewal_v_big(t)?, scale));
            small.push(Sample::scalar(t, self.renewal_density(t)?, scale / t));
        }
        Ok((
            RatioReport::new("renewal-V", big, cap),
            RatioReport::new("renewal-v", small, cap),
        ))
    }

    /// CSV with columns `t, V, v`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "V", "v"])?;
        for ((t, big), small) in self.grid.iter().zip(&self.renewal).zip(&self.density) {
            w.write_record([t.to_string(), big.to_string(), small.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Free-function form of [`FluctuationTable::renewal_v_big`].
#[allow(non_snake_case)]
pub fn renewal_V(table: &FluctuationTable, t: f64) -> Result<f64> {
    table.renewal_v_big(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bernstein::check_complete_monotone;
    use statrs::function::gamma::gamma;

    fn rel(a: f64, b: f64) -> f64 {
        (a / b - 1.0).abs()
    }

    #[test]
    fn chi_of_stable_is_square_root_of_phi_at_square() {
        let s = PhiSpec::stable(1.0).unwrap();
        assert!(rel(chi_eval(&s, 4.0).unwrap(), 2.0) < 1e-6);
        assert!(rel(chi_eval(&s, 1.0).unwrap(), 1.0) < 1e-6);
        for alpha in [0.6, 1.4] {
            let s = PhiSpec::stable(alpha).unwrap();
            for l in [0.1, 3.0, 100.0] {
                assert!(rel(chi_eval(&s, l).unwrap(), l.powf(0.5 * alpha)) < 1e-8);
            }
        }
    }

    #[test]
    fn chi_quadrature_is_stable_under_refinement() {
        let s = PhiSpec::stable_sum(1.0, 0.5).unwrap();
        let est = ln_chi_estimate(&s, 10.0, &ChiQuadrature::default()).unwrap();
        let finer = ChiQuadrature {
            rel_tol: 1e-14,
            abs_tol: 1e-15,
            max_level: 14,
        };
        let fine = ln_chi_estimate(&s, 10.0, &finer).unwrap();
        assert!((est.value.exp() / fine.value.exp() - 1.0).abs() < 1e-8);
    }

    #[test]
    fn stablesum_chi_inside_envelope() {
        let s = PhiSpec::stable_sum(1.0, 0.5).unwrap();
        let chi = chi_eval(&s, 10.0).unwrap();
        let root = s.phi(100.0).sqrt();
        assert!(chi >= CHI_ENVELOPE.0 * root && chi <= CHI_ENVELOPE.1 * root);
    }

    #[test]
    fn envelope_constants() {
        assert!((CHI_ENVELOPE.0 - (-FRAC_PI_2).exp()).abs() < 1e-15);
        assert!((CHI_ENVELOPE.1 - FRAC_PI_2.exp()).abs() < 1e-14);
    }

    #[test]
    fn envelope_report_for_stable_is_flat() {
        let s = PhiSpec::stable(1.0).unwrap();
        let r = check_chi_phi_envelope(&s, &log_grid(0.1, 100.0, 20)).unwrap();
        assert!(r.pass);
        assert!(r.geometric_spread < 1.0 + 1e-8);
        assert!(check_chi_phi_envelope(&s, &[]).is_err());
    }

    #[test]
    fn stable_table_matches_closed_form() {
        let s = PhiSpec::stable(1.0).unwrap();
        let table = build_fluctuation_table(&s, (1e-3, 10.0), 40).unwrap();
        assert_eq!(table.inversion_order(), crate::inversion::DEFAULT_ORDER);
        let v1 = renewal_V(&table, 1.0).unwrap();
        assert!(rel(v1, 2.0 / PI.sqrt()) < 1e-3);
        let v_quarter = table.renewal_v_big(0.25).unwrap();
        assert!(rel(v_quarter, 1.0 / PI.sqrt()) < 1e-3);
        assert_eq!(table.renewal_v_big(0.0).unwrap(), 0.0);
        // below t_min the power-law extension is exact for stable
        assert!(rel(table.renewal_v_big(1e-6).unwrap(), 1e-3 * 2.0 / PI.sqrt()) < 1e-3);
        assert!(matches!(table.renewal_v_big(11.0), Err(Error::Range(_))));
        let v = table.renewal_density(2.0).unwrap();
        assert!(rel(v, 1.0 / (PI * 2.0).sqrt()) < 1e-3);
        let rho = 0.5f64;
        let want = 3.7f64.powf(rho) / gamma(1.0 + rho);
        assert!(rel(table.renewal_v_big(3.7).unwrap(), want) < 1e-3);
    }

    #[test]
    fn table_invariants_for_stablesum() {
        let s = PhiSpec::stable_sum(1.0, 0.5).unwrap();
        let table = build_fluctuation_table(&s, (1e-4, 10.0), 60).unwrap();
        let big = table.renewal_values();
        let small = table.density_values();
        assert!(big.windows(2).all(|w| w[1] > w[0]));
        assert!(small.windows(2).all(|w| w[1] < w[0]));
        let grid = table.grid().to_vec();
        let cm = check_complete_monotone(|t| table.renewal_density(t).unwrap(), &grid, 4).unwrap();
        assert!(cm.pass, "{cm:?}");
        // V(t) - V(t_min) = ∫ v over interior nodes
        for &t in &grid[5..55] {
            let integral = tanh_sinh(
                |s, _, _| table.renewal_density(s).unwrap(),
                table.t_min(),
                t,
                &QuadOptions::with_rel_tol(1e-7),
            )
            .unwrap()
            .value;
            let diff = table.renewal_v_big(t).unwrap() - table.renewal_v_big(table.t_min()).unwrap();
            assert!(rel(diff, integral) < 5e-3, "t={t}");
        }
        // derivative of the interpolant against v
        for &t in &grid[3..57] {
            let h = 1e-6 * t;
            let d = (table.renewal_v_big(t + h).unwrap() - table.renewal_v_big(t - h).unwrap()) / (2.0 * h);
            assert!(rel(d, table.renewal_density(t).unwrap()) < 1e-2, "t={t}");
        }
        // V(0.01) against φ(10⁴)^{-1/2} with the reported spread
        let (rv, rsmall) = table.check_asymptotics(&log_grid(1e-4, 1.0, 30), 10.0).unwrap();
        assert!(rv.pass && rsmall.pass);
        let target = s.phi(1e4).powf(-0.5);
        let v = table.renewal_v_big(0.01).unwrap() / target;
        assert!(v >= rv.ratio_min && v <= rv.ratio_max);
    }

    #[test]
    fn stable_renewal_asymptotics_are_constant() {
        let s = PhiSpec::stable(1.0).unwrap();
        let table = build_fluctuation_table(&s, (1e-4, 1.0), 32).unwrap();
        let (rv, rsmall) = table.check_asymptotics(&log_grid(1e-4, 1.0, 20), 10.0).unwrap();
        assert!(rv.geometric_spread < 1.005 && rsmall.geometric_spread < 1.005);
    }

    #[test]
    fn table_rejects_bad_parameters() {
        let s = PhiSpec::stable(1.0).unwrap();
        assert!(build_fluctuation_table(&s, (1.0, 0.5), 20).is_err());
        assert!(build_fluctuation_table(&s, (0.1, 1.0), 8).is_err());
    }

    #[test]
    fn csv_export_has_header_and_rows() {
        let s = PhiSpec::stable(1.0).unwrap();
        let table = build_fluctuation_table(&s, (0.1, 1.0), 16).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        table.write_csv(&path).unwrap();
        let mut r = csv::Reader::from_path(&path).unwrap();
        assert_eq!(r.headers().unwrap(), vec!["t", "V", "v"]);
        assert_eq!(r.records().count(), 16);
    }

    #[test]
    fn default_tables_build_for_every_family() {
        // relativistic v flattens to a constant, where inversion noise is
        // of either sign
        let specs = [
            PhiSpec::stable(0.4).unwrap(),
            PhiSpec::relativistic(1.0).unwrap(),
            PhiSpec::relativistic(1.6).unwrap(),
            PhiSpec::stable_sum(1.2, 0.6).unwrap(),
            PhiSpec::log_power(1.0, 0.5).unwrap(),
            PhiSpec::log_power_neg(1.0, 0.5).unwrap(),
        ];
        for spec in specs {
            let table = FluctuationTable::build_default(&spec).unwrap();
            assert!(table.renewal_values().windows(2).all(|w| w[1] >= w[0]), "{spec}");
            assert!(table.density_values().windows(2).all(|w| w[1] <= w[0]), "{spec}");
        }
        let rel = FluctuationTable::build_default(&PhiSpec::relativistic(1.0).unwrap()).unwrap();
        // V(t) ~ √2 t for large t when φ(λ) = (λ+1)^{1/2} − 1
        assert!((rel.renewal_density(50.0).unwrap() / 2f64.sqrt() - 1.0).abs() < 1e-5);
    }
}
