//! Double-exponential quadrature.
//!
//! Both rules refine by halving the step (every level doubles the number of
//! panels of the underlying trapezoid sum) and stop once two successive
//! levels agree. Endpoint algebraic and logarithmic singularities are
//! handled without special treatment; callers receive the distance to each
//! finite endpoint so integrands can be evaluated without cancellation.

use std::f64::consts::FRAC_PI_2;

use crate::error::{Error, Result};

/// Tolerances and refinement budget for one integral.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_level: u32,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-10,
            abs_tol: 1e-300,
            max_level: 10,
        }
    }
}

impl QuadOptions {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        Self {
            rel_tol,
            ..Self::default()
        }
    }

    fn converged(&self, previous: f64, current: f64) -> bool {
        let diff = (current - previous).abs();
        diff <= self.abs_tol || diff <= self.rel_tol * current.abs()
    }
}

/// Integral value with the last level-to-level change as error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const MIN_LEVEL: u32 = 3;
const TANH_SINH_SPAN: f64 = 5.0;
const EXP_SINH_LOWER: f64 = 6.0;
const EXP_SINH_UPPER: f64 = 5.0;

fn refine<G>(mut level_sum: G, opts: &QuadOptions) -> Result<Estimate>
where
    G: FnMut(u32) -> Result<(f64, usize)>,
{
    // level 0 uses unit step, level k adds the odd multiples of 2^-k
    let (mut sum, mut evaluations) = level_sum(0)?;
    let mut estimate = sum;
    let mut previous = f64::NAN;
    for level in 1..=opts.max_level {
        let (added, n) = level_sum(level)?;
        evaluations += n;
        sum += added;
        previous = estimate;
        estimate = sum * 0.5f64.powi(level as i32);
        if !estimate.is_finite() {
            return Err(Error::Quadrature {
                previous,
                last: estimate,
            });
        }
        if level >= MIN_LEVEL && opts.converged(previous, estimate) {
            return Ok(Estimate {
                value: estimate,
                error: (estimate - previous).abs(),
                evaluations,
            });
        }
    }
    Err(Error::Quadrature {
        previous,
        last: estimate,
    })
}

fn level_nodes(level: u32, span: f64) -> impl Iterator<Item = f64> {
    let h = 0.5f64.powi(level as i32);
    let count = (span / h).floor() as i64;
    let step = if level == 0 { 1 } else { 2 };
    let first = if level == 0 { -count } else { -count | 1 };
    (0..)
        .map(move |i| first + step * i)
        .take_while(move |&j| j <= count)
        .map(move |j| j as f64 * h)
}

/// Tanh-sinh rule on a finite interval `[a, b]`.
///
/// The integrand is called as `f(x, x - a, b - x)` with both distances
/// computed directly from the transformation.
pub fn tanh_sinh<F>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> Result<Estimate>
where
    F: FnMut(f64, f64, f64) -> f64,
{
    if !(a < b) {
        if a == b {
            return Ok(Estimate {
                value: 0.0,
                error: 0.0,
                evaluations: 0,
            });
        }
        return Err(Error::Domain(format!("tanh_sinh needs a < b, got [{a}, {b}]")));
    }
    let half = 0.5 * (b - a);
    let mid = a + half;
    let mut level_sum = |level: u32| -> Result<(f64, usize)> {
        let mut acc = 0.0;
        let mut n = 0;
        for t in level_nodes(level, TANH_SINH_SPAN) {
            let u = FRAC_PI_2 * t.sinh();
            let e = (-2.0 * u.abs()).exp();
            // q = 1 - |tanh(u)|
            let q = 2.0 * e / (1.0 + e);
            if q == 0.0 {
                continue;
            }
            let weight = FRAC_PI_2 * t.cosh() * q * (2.0 - q);
            let offset = half * q;
            let (x, xa, xb) = if t > 0.0 {
                (b - offset, 2.0 * half - offset, offset)
            } else if t < 0.0 {
                (a + offset, offset, 2.0 * half - offset)
            } else {
                (mid, half, half)
            };
            let fx = f(x, xa, xb);
            n += 1;
            if fx != 0.0 {
                acc += weight * fx;
            }
        }
        Ok((half * acc, n))
    };
    refine(&mut level_sum, opts)
}

/// Exp-sinh rule on a half line `[a, inf)`.
///
/// The integrand is called as `f(x, x - a)`.
pub fn exp_sinh<F>(mut f: F, a: f64, opts: &QuadOptions) -> Result<Estimate>
where
    F: FnMut(f64, f64) -> f64,
{
    let mut level_sum = |level: u32| -> Result<(f64, usize)> {
        let mut acc = 0.0;
        let mut n = 0;
        let span = EXP_SINH_LOWER.max(EXP_SINH_UPPER);
        for t in level_nodes(level, span) {
            if !(-EXP_SINH_LOWER..=EXP_SINH_UPPER).contains(&t) {
                continue;
            }
            let offset = (FRAC_PI_2 * t.sinh()).exp();
            let weight = FRAC_PI_2 * t.cosh() * offset;
            let fx = f(a + offset, offset);
            n += 1;
            if fx != 0.0 {
                acc += weight * fx;
            }
        }
        Ok((acc, n))
    };
    refine(&mut level_sum, opts)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut rule = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut derivative = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            derivative = n as f64 * (x * pn - p0) / (x * x - 1.0);
            let dx = pn / derivative;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        rule.push((x, 2.0 / ((1.0 - x * x) * derivative * derivative)));
    }
    rule
}
