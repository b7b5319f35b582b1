//! The power transform that turns the CKLS volatility into a square root.
//!
//! ```text
//! T(x)    = L^2 / (4 (1-k)^2) * x^{2(1-k)}
//! T^-1(y) = [2(1-k)/L]^{1/(1-k)} * y^{1/(2(1-k))}
//! T'(x) x^k = L sqrt(T(x))
//! ```
//!
//! All powers are taken as `exp(e * ln x)` on strictly positive inputs.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransformSpec {
    pub coeff: f64,
    pub expo: f64,
    pub inv_coeff: f64,
    pub inv_expo: f64,
    k: f64,
    l: f64,
}

#[inline]
fn pow_pos(x: f64, e: f64) -> f64 {
    (e * x.ln()).exp()
}

fn check(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, x))
    }
}

impl TransformSpec {
    pub fn new(k: f64, l: f64) -> Self {
        let one_minus_k = 1.0 - k;
        Self {
            coeff: l * l / (4.0 * one_minus_k * one_minus_k),
            expo: 2.0 * one_minus_k,
            inv_coeff: pow_pos(2.0 * one_minus_k / l, 1.0 / one_minus_k),
            inv_expo: 1.0 / (2.0 * one_minus_k),
            k,
            l,
        }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn forward(&self, x: f64) -> Result<f64> {
        check("transform forward", x)?;
        Ok(self.forward_unchecked(x))
    }

    /// `T(x)` without the domain check; the caller guarantees `x > 0`.
    #[inline]
    pub fn forward_unchecked(&self, x: f64) -> f64 {
        self.coeff * pow_pos(x, self.expo)
    }

    pub fn inverse(&self, y: f64) -> Result<f64> {
        check("transform inverse", y)?;
        Ok(self.inverse_unchecked(y))
    }

    #[inline]
    pub fn inverse_unchecked(&self, y: f64) -> f64 {
        self.inv_coeff * pow_pos(y, self.inv_expo)
    }

    /// `T'(x) = L^2 / (2(1-k)) x^{1-2k}`.
    pub fn d1(&self, x: f64) -> Result<f64> {
        check("transform d1", x)?;
        Ok(self.d1_unchecked(x))
    }

    #[inline]
    pub fn d1_unchecked(&self, x: f64) -> f64 {
        self.l * self.l / (2.0 * (1.0 - self.k)) * pow_pos(x, 1.0 - 2.0 * self.k)
    }

    /// `T''(x) = L^2 (1-2k) / (2(1-k)) x^{-2k}`; zero at `k = 1/2`.
    pub fn d2(&self, x: f64) -> Result<f64> {
        check("transform d2", x)?;
        Ok(self.l * self.l * (1.0 - 2.0 * self.k) / (2.0 * (1.0 - self.k))
            * pow_pos(x, -2.0 * self.k))
    }

    /// `T'(x) x^k - L sqrt(T(x))`, zero for the exact transform.
    pub fn ode_residual(&self, x: f64) -> Result<f64> {
        let lhs = self.d1(x)? * pow_pos(x, self.k);
        Ok(lhs - self.l * self.forward_unchecked(x).sqrt())
    }

    /// Tolerance the residual is held to at `x`: `1e-10 (1 + L sqrt(T(x)))`.
    pub fn ode_tolerance(&self, x: f64) -> f64 {
        1e-10 * (1.0 + self.l * self.forward_unchecked(x).sqrt())
    }

    /// Apply `T` to every value of a path.
    pub fn map_values(&self, values: &[f64]) -> Result<Vec<f64>> {
        values.iter().map(|&v| self.forward(v)).collect()
    }
}
