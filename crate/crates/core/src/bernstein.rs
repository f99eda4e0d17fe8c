//! Laplace exponents of subordinators and their structural checks.
//!
//! Every exponent has zero drift and zero killing and behaves like
//! `λ^{α/2} ℓ(λ)` at infinity with `ℓ` slowly varying. The built-in families:
//!
//! | family        | φ(λ)                               | ℓ(λ)                         |
//! |---------------|------------------------------------|------------------------------|
//! | `stable`      | λ^{α/2}                            | 1                            |
//! | `relativistic`| (λ + m^{2/α})^{α/2} − m            | φ(λ) / λ^{α/2}               |
//! | `stablesum`   | λ^{α/2} + λ^{β/2}                  | 1 + λ^{(β−α)/2}              |
//! | `logpower`    | λ^{α/2} (ln(1+λ))^{γ/2}            | (ln(1+λ))^{γ/2}              |
//! | `logpowerneg` | λ^{α/2} (ln(1+λ))^{−β/2}           | (ln(1+λ))^{−β/2}             |

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{tanh_sinh, QuadOptions};

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// User-supplied exponent. `alpha` on the owning [`PhiSpec`] is declared, not
/// inferred.
#[derive(Clone)]
pub struct CustomPhi {
    pub name: String,
    pub phi: ScalarFn,
    /// Derivative; central differences of `phi` when absent.
    pub phi_prime: Option<ScalarFn>,
    /// Slowly varying part; `φ(λ) / λ^{α/2}` when absent.
    pub ell: Option<ScalarFn>,
    /// Exponent `γ` with `φ(λ) ≍ λ^γ` as `λ → 0`, used by the transience test.
    pub small_exponent: Option<f64>,
}

impl fmt::Debug for CustomPhi {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomPhi")
            .field("name", &self.name)
            .field("small_exponent", &self.small_exponent)
            .finish_non_exhaustive()
    }
}

#[derive(Debug, Clone)]
pub enum Family {
    Stable,
    Relativistic { mass: f64 },
    StableSum { beta: f64 },
    LogPower { gamma: f64 },
    LogPowerNeg { beta: f64 },
    Custom(CustomPhi),
}

/// Family tag without parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyKind {
    Stable,
    Relativistic,
    StableSum,
    LogPower,
    LogPowerNeg,
    Custom,
}

/// A complete Bernstein function with zero drift and killing. Immutable once
/// built; every evaluator is a pure function of `λ`.
#[derive(Debug, Clone)]
pub struct PhiSpec {
    family: Family,
    alpha: f64,
}

/// Relative step of the central difference used for custom derivatives.
pub const CUSTOM_DIFF_STEP: f64 = 1e-5;

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 2.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("alpha must lie in (0, 2), got {alpha}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("lambda must be positive and finite, got {lambda}")))
    }
}

impl PhiSpec {
    pub fn stable(alpha: f64) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { family: Family::Stable, alpha })
    }

    /// Relativistic stable exponent with unit mass.
    pub fn relativistic(alpha: f64) -> Result<Self> {
        Self::relativistic_with_mass(alpha, 1.0)
    }

    pub fn relativistic_with_mass(alpha: f64, mass: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(mass > 0.0 && mass.is_finite()) {
            return Err(Error::Domain(format!("mass must be positive, got {mass}")));
        }
        Ok(Self { family: Family::Relativistic { mass }, alpha })
    }

    pub fn stable_sum(alpha: f64, beta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(beta > 0.0 && beta < alpha) {
            return Err(Error::Domain(format!("stablesum needs 0 < beta < alpha, got beta={beta}")));
        }
        Ok(Self { family: Family::StableSum { beta }, alpha })
    }

    pub fn log_power(alpha: f64, gamma: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(gamma > 0.0 && gamma < 2.0 - alpha) {
            return Err(Error::Domain(format!(
                "logpower needs 0 < gamma < 2 - alpha, got gamma={gamma}"
            )));
        }
        Ok(Self { family: Family::LogPower { gamma }, alpha })
    }

    /// `β < α` strictly: at `β = α` the exponent tends to 1 at the origin and
    /// is no longer a Laplace exponent without killing.
    pub fn log_power_neg(alpha: f64, beta: f64) -> Result<Self> {
        check_alpha(alpha)?;
        if !(beta > 0.0 && beta < alpha) {
            return Err(Error::Domain(format!(
                "logpowerneg needs 0 < beta < alpha, got beta={beta}"
            )));
        }
        Ok(Self { family: Family::LogPowerNeg { beta }, alpha })
    }

    pub fn custom(alpha: f64, custom: CustomPhi) -> Result<Self> {
        check_alpha(alpha)?;
        Ok(Self { family: Family::Custom(custom), alpha })
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn kind(&self) -> FamilyKind {
        match self.family {
            Family::Stable => FamilyKind::Stable,
            Family::Relativistic { .. } => FamilyKind::Relativistic,
            Family::StableSum { .. } => FamilyKind::StableSum,
            Family::LogPower { .. } => FamilyKind::LogPower,
            Family::LogPowerNeg { .. } => FamilyKind::LogPowerNeg,
            Family::Custom(_) => FamilyKind::Custom,
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Index `α/2` of the subordinator.
    pub fn rho(&self) -> f64 {
        0.5 * self.alpha
    }

    pub fn drift(&self) -> f64 {
        0.0
    }

    pub fn killing(&self) -> f64 {
        0.0
    }

    /// φ(λ). Callers guarantee `λ > 0`; see [`phi_eval`] for the checked form.
    pub fn phi(&self, lambda: f64) -> f64 {
        let rho = self.rho();
        match &self.family {
            Family::Stable => lambda.powf(rho),
            Family::Relativistic { mass } => {
                let theta = mass.powf(1.0 / rho);
                mass * (rho * (lambda / theta).ln_1p()).exp_m1()
            }
            Family::StableSum { beta } => lambda.powf(rho) + lambda.powf(0.5 * beta),
            Family::LogPower { gamma } => lambda.powf(rho) * lambda.ln_1p().powf(0.5 * gamma),
            Family::LogPowerNeg { beta } => lambda.powf(rho) * lambda.ln_1p().powf(-0.5 * beta),
            Family::Custom(c) => (c.phi)(lambda),
        }
    }

    /// ln φ(λ), accurate when φ under- or overflows.
    pub fn ln_phi(&self, lambda: f64) -> f64 {
        let rho = self.rho();
        let ln_l = lambda.ln();
        match &self.family {
            Family::Stable => rho * ln_l,
            Family::Relativistic { mass } => {
                let theta = mass.powf(1.0 / rho);
                let x = rho * (lambda / theta).ln_1p();
                if x > 30.0 {
                    mass.ln() + x + (-(-x).exp()).ln_1p()
                } else {
                    mass.ln() + x.exp_m1().ln()
                }
            }
            Family::StableSum { beta } => {
                let b = 0.5 * beta;
                if lambda >= 1.0 {
                    rho * ln_l + ((b - rho) * ln_l).exp().ln_1p()
                } else {
                    b * ln_l + ((rho - b) * ln_l).exp().ln_1p()
                }
            }
            Family::LogPower { gamma } => rho * ln_l + 0.5 * gamma * ln_log1p(lambda),
            Family::LogPowerNeg { beta } => rho * ln_l - 0.5 * beta * ln_log1p(lambda),
            Family::Custom(c) => (c.phi)(lambda).ln(),
        }
    }

    pub fn phi_prime(&self, lambda: f64) -> f64 {
        let rho = self.rho();
        match &self.family {
            Family::Stable => rho * lambda.powf(rho - 1.0),
            Family::Relativistic { mass } => {
                let theta = mass.powf(1.0 / rho);
                rho * (lambda + theta).powf(rho - 1.0)
            }
            Family::StableSum { beta } => {
                let b = 0.5 * beta;
                rho * lambda.powf(rho - 1.0) + b * lambda.powf(b - 1.0)
            }
            Family::LogPower { gamma } => {
                let g = 0.5 * gamma;
                let l = lambda.ln_1p();
                lambda.powf(rho - 1.0) * l.powf(g - 1.0) * (rho * l + g * lambda / (1.0 + lambda))
            }
            Family::LogPowerNeg { beta } => {
                let b = 0.5 * beta;
                let l = lambda.ln_1p();
                lambda.powf(rho - 1.0) * l.powf(-b - 1.0) * (rho * l - b * lambda / (1.0 + lambda))
            }
            Family::Custom(c) => match &c.phi_prime {
                Some(d) => d(lambda),
                None => {
                    let h = CUSTOM_DIFF_STEP * lambda;
                    ((c.phi)(lambda + h) - (c.phi)(lambda - h)) / (2.0 * h)
                }
            },
        }
    }

    /// Slowly varying part `ℓ(λ) = φ(λ) / λ^{α/2}`.
    pub fn ell(&self, lambda: f64) -> f64 {
        let rho = self.rho();
        match &self.family {
            Family::Stable => 1.0,
            Family::Relativistic { .. } => (self.ln_phi(lambda) - rho * lambda.ln()).exp(),
            Family::StableSum { beta } => 1.0 + lambda.powf(0.5 * (beta - self.alpha)),
            Family::LogPower { gamma } => lambda.ln_1p().powf(0.5 * gamma),
            Family::LogPowerNeg { beta } => lambda.ln_1p().powf(-0.5 * beta),
            Family::Custom(c) => match &c.ell {
                Some(l) => l(lambda),
                None => (c.phi)(lambda) / lambda.powf(rho),
            },
        }
    }

    /// Exponent `γ` with `φ(λ) ≍ λ^γ` as `λ → 0`, or `None` for a custom
    /// exponent that did not declare one.
    pub fn small_exponent(&self) -> Option<f64> {
        let rho = self.rho();
        match &self.family {
            Family::Stable => Some(rho),
            Family::Relativistic { .. } => Some(1.0),
            Family::StableSum { beta } => Some(0.5 * beta),
            Family::LogPower { gamma } => Some(rho + 0.5 * gamma),
            Family::LogPowerNeg { beta } => Some(rho - 0.5 * beta),
            Family::Custom(c) => c.small_exponent,
        }
    }

    /// Whether an exact increment sampler exists for this family.
    pub fn is_samplable(&self) -> bool {
        matches!(
            self.family,
            Family::Stable | Family::Relativistic { .. } | Family::StableSum { .. }
        )
    }
}

fn ln_log1p(lambda: f64) -> f64 {
    lambda.ln_1p().ln()
}

/// Canonical spec string; parses back to an equal exponent for every
/// built-in family.
impl fmt::Display for PhiSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.alpha;
        match &self.family {
            Family::Stable => write!(f, "stable:alpha={a}"),
            Family::Relativistic { mass } => write!(f, "relativistic:alpha={a},m={mass}"),
            Family::StableSum { beta } => write!(f, "stablesum:alpha={a},beta={beta}"),
            Family::LogPower { gamma } => write!(f, "logpower:alpha={a},gamma={gamma}"),
            Family::LogPowerNeg { beta } => write!(f, "logpowerneg:alpha={a},beta={beta}"),
            Family::Custom(c) => write!(f, "custom:name={},alpha={a}", c.name),
        }
    }
}

impl FromStr for PhiSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (family, rest) = s.split_once(':').unwrap_or((s, ""));
        let mut alpha = None;
        let mut beta = None;
        let mut gamma = None;
        let mut mass = None;
        for pair in rest.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (key, value) = pair
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("expected key=value, got `{pair}`")))?;
            let value: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad number in `{pair}`")))?;
            let slot = match key.trim() {
                "alpha" => &mut alpha,
                "beta" => &mut beta,
                "gamma" => &mut gamma,
                "m" | "mass" => &mut mass,
                other => return Err(Error::Parse(format!("unknown parameter `{other}`"))),
            };
            *slot = Some(value);
        }
        let alpha = alpha.ok_or_else(|| Error::Parse(format!("`{s}` lacks alpha")))?;
        let need = |v: Option<f64>, name: &str| {
            v.ok_or_else(|| Error::Parse(format!("`{s}` lacks {name}")))
        };
        let spec = match family.trim().to_ascii_lowercase().as_str() {
            "stable" => Self::stable(alpha),
            "relativistic" => Self::relativistic_with_mass(alpha, mass.unwrap_or(1.0)),
            "stablesum" => Self::stable_sum(alpha, need(beta, "beta")?),
            "logpower" => Self::log_power(alpha, need(gamma, "gamma")?),
            "logpowerneg" => Self::log_power_neg(alpha, need(beta, "beta")?),
            "custom" => {
                return Err(Error::Parse(
                    "custom exponents are built in code, not parsed".into(),
                ))
            }
            other => return Err(Error::Parse(format!("unknown family `{other}`"))),
        }?;
        let unused = match spec.kind() {
            FamilyKind::Stable => beta.or(gamma).or(mass),
            FamilyKind::Relativistic => beta.or(gamma),
            FamilyKind::StableSum | FamilyKind::LogPowerNeg => gamma.or(mass),
            FamilyKind::LogPower => beta.or(mass),
            FamilyKind::Custom => None,
        };
        if unused.is_some() {
            return Err(Error::Parse(format!("`{s}` has parameters its family does not use")));
        }
        Ok(spec)
    }
}

pub fn phi_eval(spec: &PhiSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(spec.phi(lambda))
}

pub fn phi_prime(spec: &PhiSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(spec.phi_prime(lambda))
}

pub fn ell_eval(spec: &PhiSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(spec.ell(lambda))
}

/// Largest finite-difference order accepted by the monotonicity checks.
/// Divided differences of order `k` lose roughly `k` digits to cancellation
/// on grids with ratio near 1, so order 7 and beyond mostly measure noise.
pub const MAX_CM_ORDER: usize = 6;

/// Default relative tolerance of a difference against the magnitude of its
/// contributing terms.
pub const CM_REL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MonotonicityReport {
    pub pass: bool,
    /// Smallest signed, normalized difference `(-1)^k Δ^k f / scale`; negative
    /// when some difference has the wrong sign.
    pub worst_violation: f64,
    pub worst_order: usize,
    /// Left grid point of the worst difference.
    pub worst_at: f64,
    pub orders_checked: usize,
}

fn sign_pattern_check(
    values: &[f64],
    grid: &[f64],
    order: usize,
    rel_tol: f64,
    sign_of_order: impl Fn(usize) -> f64,
    min_order: usize,
) -> Result<MonotonicityReport> {
    if order > MAX_CM_ORDER {
        return Err(Error::Domain(format!("order {order} exceeds cap {MAX_CM_ORDER}")));
    }
    if grid.len() <= order {
        return Err(Error::Domain(format!(
            "grid of {} points is too short for order {order}",
            grid.len()
        )));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::Domain("grid must be strictly increasing".into()));
    }
    let mut diff = values.to_vec();
    let mut scale: Vec<f64> = values.iter().map(|v| v.abs()).collect();
    let mut report = MonotonicityReport {
        pass: true,
        worst_violation: f64::INFINITY,
        worst_order: 0,
        worst_at: grid[0],
        orders_checked: order,
    };
    for k in 0..=order {
        if k > 0 {
            for i in 0..diff.len() - 1 {
                let h = grid[i + k] - grid[i];
                diff[i] = (diff[i + 1] - diff[i]) / h;
                scale[i] = (scale[i + 1] + scale[i]) / h;
            }
            diff.pop();
            scale.pop();
        }
        if k < min_order {
            continue;
        }
        let sign = sign_of_order(k);
        for (i, (d, s)) in diff.iter().zip(&scale).enumerate() {
            let normalized = if *s > 0.0 { sign * d / s } else { 0.0 };
            if !normalized.is_finite() {
                return Err(Error::Check(format!("non-finite difference at {}", grid[i])));
            }
            if normalized < report.worst_violation {
                report.worst_violation = normalized;
                report.worst_order = k;
                report.worst_at = grid[i];
            }
            if normalized < -rel_tol {
                report.pass = false;
            }
        }
    }
    Ok(report)
}

/// Check `(-1)^k Δ^k f ≥ 0` for divided differences of every order `k ≤ order`
/// on `grid`, up to `CM_REL_TOL` times the size of the summed terms.
pub fn check_complete_monotone<F>(f: F, grid: &[f64], order: usize) -> Result<MonotonicityReport>
where
    F: Fn(f64) -> f64,
{
    check_complete_monotone_with_tol(f, grid, order, CM_REL_TOL)
}

pub fn check_complete_monotone_with_tol<F>(
    f: F,
    grid: &[f64],
    order: usize,
    rel_tol: f64,
) -> Result<MonotonicityReport>
where
    F: Fn(f64) -> f64,
{
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    completely_monotone_values(&values, grid, order, rel_tol)
}

/// Same check on values already tabulated at `grid`.
pub fn completely_monotone_values(
    values: &[f64],
    grid: &[f64],
    order: usize,
    rel_tol: f64,
) -> Result<MonotonicityReport> {
    if values.len() != grid.len() {
        return Err(Error::Domain("values and grid differ in length".into()));
    }
    sign_pattern_check(values, grid, order, rel_tol, |k| if k % 2 == 0 { 1.0 } else { -1.0 }, 0)
}

/// Bernstein sign pattern: `f ≥ 0` and `(-1)^{k-1} Δ^k f ≥ 0` for `1 ≤ k ≤ order`.
pub fn check_bernstein<F>(f: F, grid: &[f64], order: usize) -> Result<MonotonicityReport>
where
    F: Fn(f64) -> f64,
{
    let values: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let positive = values.iter().all(|v| *v >= 0.0);
    let mut report = sign_pattern_check(
        &values,
        grid,
        order,
        CM_REL_TOL,
        |k| if k % 2 == 1 { 1.0 } else { -1.0 },
        1,
    )?;
    report.pass &= positive;
    Ok(report)
}

pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transience {
    Transient,
    Recurrent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransienceReport {
    pub verdict: Transience,
    pub small_exponent: f64,
    /// `∫_ε^1 λ^{d/2-1} / φ(λ) dλ` with `ε = TRANSIENCE_EPS`.
    pub integral: f64,
}

pub const TRANSIENCE_EPS: f64 = 1e-8;

/// Classify the subordinate Brownian motion in dimension `d`: transient iff
/// `∫_0^1 λ^{d/2-1} / φ(λ) dλ < ∞`, decided by comparing the small-λ exponent
/// of φ with `d/2`.
pub fn transience_check(spec: &PhiSpec, d: usize) -> Result<TransienceReport> {
    if d == 0 {
        return Err(Error::Domain("dimension must be at least 1".into()));
    }
    let small_exponent = spec.small_exponent().ok_or_else(|| {
        Error::Unsupported("custom exponent without a declared small-lambda exponent".into())
    })?;
    let half_d = 0.5 * d as f64;
    let verdict = if small_exponent < half_d {
        Transience::Transient
    } else {
        Transience::Recurrent
    };
    // λ = e^y turns the integrand into λ^{d/2} / φ(λ)
    let integral = tanh_sinh(
        |y, _, _| (half_d * y - spec.ln_phi(y.exp())).exp(),
        TRANSIENCE_EPS.ln(),
        0.0,
        &QuadOptions::with_rel_tol(1e-8),
    )?
    .value;
    Ok(TransienceReport {
        verdict,
        small_exponent,
        integral,
    })
}
