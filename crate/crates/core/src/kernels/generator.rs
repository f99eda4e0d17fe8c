//! Principal-value generator on profiles of the last coordinate.
//!
//! For f(x) = F(x_d) the d-dimensional operator reduces to
//! 𝒜f(x) = ∫_0^∞ (F(x_d+s) + F(x_d−s) − 2F(x_d)) j₁(s) ds with j₁ the
//! one-dimensional marginal of j. The integral is truncated to s ≥ ε for
//! each ε of a decreasing schedule, then extrapolated to ε = 0.

use std::cell::Cell;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use statrs::function::gamma::gamma;

use super::KernelEvaluator;
use crate::error::{Error, Result};
use crate::quadrature::{exp_sinh, tanh_sinh, QuadOptions};

pub const DEFAULT_EPS_SCHEDULE: [f64; 4] = [1e-1, 1e-2, 1e-3, 1e-4];

/// Start of the outer tail, integrated separately on [TAIL_START, ∞).
pub const TAIL_START: f64 = 50.0;

/// A profile F of the last coordinate, with the points where F is not
/// smooth.
#[derive(Clone)]
pub struct Profile {
    name: String,
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    kinks: Vec<f64>,
}

impl fmt::Debug for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Profile")
            .field("name", &self.name)
            .field("kinks", &self.kinks)
            .finish_non_exhaustive()
    }
}

impl Profile {
    pub fn new(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static, kinks: Vec<f64>) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
            kinks,
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::new("constant", move |_| c, Vec::new())
    }

    /// w(x) = V(x⁺) for a renewal function V.
    pub fn renewal(v: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self::new("renewal", move |x| if x > 0.0 { v(x) } else { 0.0 }, vec![0.0])
    }

    /// w for the stable subordinator of index α/2, V(t) = t^{α/2} / Γ(1 + α/2).
    pub fn stable_renewal(alpha: f64) -> Self {
        let rho = 0.5 * alpha;
        let c = 1.0 / gamma(1.0 + rho);
        Self::renewal(move |t| c * t.powf(rho))
    }

    /// h(x) = V(x) 1_{(0, r)}(x): the renewal profile cut off at distance `r`
    /// from the boundary point 0.
    pub fn truncated_renewal(v: impl Fn(f64) -> f64 + Send + Sync + 'static, r: f64) -> Self {
        Self::new(
            "truncated-renewal",
            move |x| if x > 0.0 && x < r { v(x) } else { 0.0 },
            vec![0.0, r],
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn eval(&self, x: f64) -> f64 {
        (self.f)(x)
    }

    pub fn kinks(&self) -> &[f64] {
        &self.kinks
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GeneratorResult {
    /// Extrapolated ε → 0 value.
    pub value: f64,
    /// (ε, truncated integral) along the schedule.
    pub trace: Vec<(f64, f64)>,
    /// Bound on the excluded part |∫_{s<ε}| from the second-derivative
    /// Taylor estimate at the smallest ε.
    pub taylor_bound: f64,
    /// Contribution of s ≥ [`TAIL_START`].
    pub tail: f64,
}

/// 𝒜f(x) for the profile `f` at last coordinate `x > 0`.
pub fn apply_generator(ev: &KernelEvaluator, f: &Profile, x: f64, eps_schedule: &[f64]) -> Result<GeneratorResult> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::Domain(format!("x must be positive, got {x}")));
    }
    if eps_schedule.len() < 2
        || eps_schedule.iter().any(|e| !(*e > 0.0))
        || eps_schedule.windows(2).any(|w| !(w[1] < w[0]))
    {
        return Err(Error::Domain("epsilon schedule must be positive and decreasing, at least two values".into()));
    }
    let fx = f.eval(x);
    let failure = Cell::new(None);
    let kernel = |s: f64| match ev.projected_kernel(s) {
        Ok(j) => j,
        Err(e) => {
            failure.set(Some(e));
            f64::NAN
        }
    };
    let integrand = |s: f64| {
        let g = f.eval(x + s) + f.eval(x - s) - 2.0 * fx;
        if g == 0.0 {
            0.0
        } else {
            g * kernel(s)
        }
    };
    let opts = QuadOptions::with_rel_tol(1e-9);
    let panel = |a: f64, b: f64| -> Result<f64> {
        // split at distances where x ± s crosses a kink
        let mut cuts: Vec<f64> = f
            .kinks()
            .iter()
            .map(|k| (k - x).abs())
            .filter(|c| *c > a && *c < b)
            .collect();
        cuts.sort_by(f64::total_cmp);
        let mut edges = vec![a];
        edges.extend(cuts);
        edges.push(b);
        let mut total = 0.0;
        for w in edges.windows(2) {
            total += tanh_sinh(|s, _, _| integrand(s), w[0], w[1], &opts)?.value;
        }
        Ok(total)
    };
    let check = |r: Result<f64>| -> Result<f64> {
        if let Some(e) = failure.take() {
            return Err(e);
        }
        r
    };

    let tail = check(exp_sinh(|s, _| integrand(s), TAIL_START, &opts).map(|e| e.value))?;
    let first = eps_schedule[0];
    let mut value = tail + check(panel(first, TAIL_START.max(first)))?;
    let mut trace = vec![(first, value)];
    for w in eps_schedule.windows(2) {
        value += check(panel(w[1], w[0]))?;
        trace.push((w[1], value));
    }

    let alpha = ev.spec().alpha();
    let n = trace.len();
    let (e1, a1) = trace[n - 2];
    let (e2, a2) = trace[n - 1];
    // truncation error behaves like ε^{2-α}
    let factor = (e1 / e2).powf(2.0 - alpha) - 1.0;
    let extrapolated = a2 + (a2 - a1) / factor;

    let diffs: Vec<f64> = trace.windows(2).map(|w| (w[1].1 - w[0].1).abs()).collect();
    let scale = trace.iter().map(|t| t.1.abs()).fold(fx.abs(), f64::max).max(1.0);
    let floor = 1e-8 * scale;
    if diffs.last().copied().unwrap_or(0.0) > diffs[0].max(floor) {
        return Err(Error::Trace(trace.iter().map(|t| t.1).collect()));
    }

    let eps = e2;
    let h = (0.25 * eps).min(0.25 * x);
    let second = (f.eval(x + h) + f.eval(x - h) - 2.0 * fx) / (h * h);
    // ∫_0^ε s² j₁(s) ds with s = ε e^{-y}; the cut at y = 40 drops a
    // relative e^{-40(2-α)}
    let moment = check(
        tanh_sinh(
            |y, _, _| {
                let s = eps * (-y).exp();
                s * s * s * kernel(s)
            },
            0.0,
            40.0,
            &QuadOptions::with_rel_tol(1e-6),
        )
        .map(|e| e.value),
    )?;
    Ok(GeneratorResult {
        value: extrapolated,
        trace,
        taylor_bound: second.abs() * moment,
        tail,
    })
}
