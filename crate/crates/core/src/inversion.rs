//! Gaver-Stehfest numerical Laplace inversion.
//!
//! Only real abscissae `k ln 2 / t` are used, so transforms that are only
//! known on the positive half line (such as the ladder-height exponent) can
//! be inverted. The method is accurate for smooth, completely monotone
//! originals, which is the class every caller in this crate inverts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default number of Stehfest terms. Larger orders amplify rounding in f64.
pub const DEFAULT_ORDER: usize = 14;

/// A fixed-order Gaver-Stehfest rule with precomputed weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stehfest {
    order: usize,
    weights: Vec<f64>,
}

impl Default for Stehfest {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER).expect("default order is valid")
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc * k as f64)
}

impl Stehfest {
    pub fn new(order: usize) -> Result<Self> {
        if order < 2 || !order.is_multiple_of(2) || order > 20 {
            return Err(Error::Domain(format!(
                "Stehfest order must be even and in [2, 20], got {order}"
            )));
        }
        let half = order / 2;
        let weights = (1..=order)
            .map(|k| {
                let mut sum = 0.0;
                for j in k.div_ceil(2)..=k.min(half) {
                    sum += (j as f64).powi(half as i32) * factorial(2 * j)
                        / (factorial(half - j)
                            * factorial(j)
                            * factorial(j - 1)
                            * factorial(k - j)
                            * factorial(2 * j - k));
                }
                if (k + half).is_multiple_of(2) {
                    sum
                } else {
                    -sum
                }
            })
            .collect();
        Ok(Self { order, weights })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Laplace abscissae used for inverting at `t`.
    pub fn abscissae(&self, t: f64) -> impl Iterator<Item = f64> + '_ {
        let scale = std::f64::consts::LN_2 / t;
        (1..=self.order).map(move |k| k as f64 * scale)
    }

    /// Combine transform values taken at [`Stehfest::abscissae`].
    pub fn combine(&self, t: f64, values: &[f64]) -> f64 {
        let scale = std::f64::consts::LN_2 / t;
        scale
            * self
                .weights
                .iter()
                .zip(values)
                .map(|(w, v)| w * v)
                .sum::<f64>()
    }

    /// Invert `transform` at `t > 0`.
    pub fn invert<F>(&self, mut transform: F, t: f64) -> Result<f64>
    where
        F: FnMut(f64) -> f64,
    {
        self.try_invert(|s| Ok(transform(s)), t)
    }

    /// Invert a fallible transform at `t > 0`.
    pub fn try_invert<F>(&self, mut transform: F, t: f64) -> Result<f64>
    where
        F: FnMut(f64) -> Result<f64>,
    {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("inversion point must be positive, got {t}")));
        }
        let values = self
            .abscissae(t)
            .map(&mut transform)
            .collect::<Result<Vec<_>>>()?;
        let value = self.combine(t, &values);
        if !value.is_finite() {
            return Err(Error::Inversion(format!("non-finite value at t = {t}")));
        }
        Ok(value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_zero() {
        // the rule annihilates constants in the transform, i.e. F = c
        for order in [8, 12, 14, 16] {
            let rule = Stehfest::new(order).unwrap();
            let sum: f64 = rule.weights.iter().sum();
            assert!(sum.abs() < 1e-6 * rule.weights.iter().map(|w| w.abs()).sum::<f64>());
        }
    }

    #[test]
    fn inverts_power_laws() {
        let rule = Stehfest::default();
        // 1/sqrt(s) <-> 1/sqrt(pi t)
        for t in [1e-3, 0.1, 1.0, 7.0, 100.0] {
            let got = rule.invert(|s| s.powf(-0.5), t).unwrap();
            let want = 1.0 / (std::f64::consts::PI * t).sqrt();
            assert!((got / want - 1.0).abs() < 1e-5, "t={t} got={got} want={want}");
        }
        // 1/s^2 <-> t
        let got = rule.invert(|s| s.powi(-2), 3.0).unwrap();
        assert!((got - 3.0).abs() < 1e-5);
    }

    #[test]
    fn inverts_exponential() {
        let rule = Stehfest::default();
        let got = rule.invert(|s| 1.0 / (s + 1.0), 1.0).unwrap();
        assert!((got - (-1.0f64).exp()).abs() < 1e-4);
    }

    #[test]
    fn rejects_bad_order_and_point() {
        assert!(Stehfest::new(7).is_err());
        assert!(Stehfest::default().invert(|s| 1.0 / s, 0.0).is_err());
    }
}
