//! Model parameters, admissibility checks and the derived coefficient sets.
//!
//! The short rate follows
//!
//! ```text
//! d lambda = (a - b lambda) dt + sigma lambda^k dW,   1/2 <= k < 1
//! ```
//!
//! and after the power transform `X = T(lambda)` and the measure change the
//! process `X` is a square-root diffusion
//!
//! ```text
//! dX = a* (b* - X) dt + sigma* sqrt(X) dW~
//! a* = 2 b (1 - k),  b* = sigma^2 L^2 / (8 b (1 - k)),  sigma* = sigma L
//! ```
//!
//! while `Y = sqrt(X)` is a centred Ornstein-Uhlenbeck process with speed
//! `b (1 - k)` and volatility `sigma L / 2`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::transform::TransformSpec;

/// Unvalidated parameter tuple, as read from a config file or the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawParams {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub k: f64,
    pub lambda0: f64,
    #[serde(rename = "L")]
    pub l: f64,
}

/// Validated CKLS parameters. Construct through [`CklsParams::new`] or
/// [`validate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CklsParams {
    a: f64,
    b: f64,
    sigma: f64,
    k: f64,
    lambda0: f64,
    #[serde(rename = "L")]
    l: f64,
}

/// Validate a raw tuple. The error names the first violated constraint,
/// checked in the order: finiteness, positivity, elasticity range, the
/// boundary condition at `k = 1/2`.
pub fn validate(raw: RawParams) -> Result<CklsParams> {
    let named = [
        ("a", raw.a),
        ("b", raw.b),
        ("sigma", raw.sigma),
        ("k", raw.k),
        ("lambda0", raw.lambda0),
        ("L", raw.l),
    ];
    for (name, value) in named {
        if !value.is_finite() {
            return Err(Error::NonFinite { name, value });
        }
    }
    for (name, value) in named {
        if name != "k" && value <= 0.0 {
            return Err(Error::NonPositiveParameter { name, value });
        }
    }
    if !(0.5..1.0).contains(&raw.k) {
        return Err(Error::ElasticityOutOfRange { k: raw.k });
    }
    let sigma_sq = raw.sigma * raw.sigma;
    if raw.k == 0.5 && 2.0 * raw.a < sigma_sq {
        return Err(Error::FellerViolationAtHalf {
            two_a: 2.0 * raw.a,
            sigma_sq,
        });
    }
    Ok(CklsParams {
        a: raw.a,
        b: raw.b,
        sigma: raw.sigma,
        k: raw.k,
        lambda0: raw.lambda0,
        l: raw.l,
    })
}

impl CklsParams {
    pub fn new(a: f64, b: f64, sigma: f64, k: f64, lambda0: f64, l: f64) -> Result<Self> {
        validate(RawParams { a, b, sigma, k, lambda0, l })
    }

    /// Reference point `a = 0.2, b = 0.5, sigma = 0.3, k = 0.75, lambda0 = 1, L = 2`.
    pub fn reference() -> Self {
        Self::new(0.2, 0.5, 0.3, 0.75, 1.0, 2.0).expect("reference point is admissible")
    }

    /// Square-root case of the reference point (`k = 1/2`).
    pub fn reference_sqrt() -> Self {
        Self::new(0.2, 0.5, 0.3, 0.5, 1.0, 2.0).expect("reference point is admissible")
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn k(&self) -> f64 {
        self.k
    }
    pub fn lambda0(&self) -> f64 {
        self.lambda0
    }
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn raw(&self) -> RawParams {
        RawParams {
            a: self.a,
            b: self.b,
            sigma: self.sigma,
            k: self.k,
            lambda0: self.lambda0,
            l: self.l,
        }
    }

    /// Copy with a different starting value.
    pub fn with_lambda0(&self, lambda0: f64) -> Result<Self> {
        validate(RawParams { lambda0, ..self.raw() })
    }

    pub fn transform(&self) -> TransformSpec {
        TransformSpec::new(self.k, self.l)
    }

    pub fn cir(&self) -> CirParams {
        derive_cir(self)
    }

    pub fn ou(&self) -> OuParams {
        derive_ou(self)
    }

    pub fn aux(&self) -> AuxConstants {
        AuxConstants::from_params(self)
    }
}

/// Square-root diffusion `dX = a*(b* - X)dt + sigma* sqrt(X) dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirParams {
    pub a_star: f64,
    pub b_star: f64,
    pub sigma_star: f64,
    pub x0: f64,
}

impl CirParams {
    /// A free-standing square-root diffusion, not tied to CKLS parameters.
    pub fn new(a_star: f64, b_star: f64, sigma_star: f64, x0: f64) -> Result<Self> {
        for (name, value) in [
            ("a_star", a_star),
            ("b_star", b_star),
            ("sigma_star", sigma_star),
            ("x0", x0),
        ] {
            if !value.is_finite() {
                return Err(Error::NonFinite { name, value });
            }
            if value <= 0.0 {
                return Err(Error::NonPositiveParameter { name, value });
            }
        }
        Ok(Self { a_star, b_star, sigma_star, x0 })
    }

    /// Bessel order `2 a* b* / sigma*^2 - 1` of the transition law.
    pub fn kappa(&self) -> f64 {
        feller_ratio(self) - 1.0
    }

    /// Dimension `4 a* b* / sigma*^2` of the squared Bessel process behind `X`.
    pub fn besq_dim(&self) -> f64 {
        2.0 * feller_ratio(self)
    }

    pub fn with_x0(&self, x0: f64) -> Self {
        Self { x0, ..*self }
    }
}

/// Centred Ornstein-Uhlenbeck process `dY = -a_diamond Y dt + sigma_diamond dW`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuParams {
    pub a_diamond: f64,
    pub b_diamond: f64,
    pub sigma_diamond: f64,
    pub y0: f64,
}

/// Constants that recur in the transition law and the scale-function series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AuxConstants {
    pub kappa: f64,
    /// `b / (sigma^2 (1 - k))`, the exponent constant of the scale density.
    pub m: f64,
    pub dim_besq: f64,
}

impl AuxConstants {
    pub fn from_params(p: &CklsParams) -> Self {
        let c = derive_cir(p);
        Self {
            kappa: c.kappa(),
            m: p.b / (p.sigma * p.sigma * (1.0 - p.k)),
            dim_besq: c.besq_dim(),
        }
    }
}

pub fn derive_cir(p: &CklsParams) -> CirParams {
    let one_minus_k = 1.0 - p.k;
    CirParams {
        a_star: 2.0 * p.b * one_minus_k,
        b_star: p.sigma * p.sigma * p.l * p.l / (8.0 * p.b * one_minus_k),
        sigma_star: p.sigma * p.l,
        x0: p.transform().forward_unchecked(p.lambda0),
    }
}

pub fn derive_ou(p: &CklsParams) -> OuParams {
    OuParams {
        a_diamond: p.b * (1.0 - p.k),
        b_diamond: 0.0,
        sigma_diamond: 0.5 * p.sigma * p.l,
        y0: derive_cir(p).x0.sqrt(),
    }
}

/// `2 a* b* / sigma*^2`; at least 1 means the origin is never reached.
pub fn feller_ratio(c: &CirParams) -> f64 {
    2.0 * c.a_star * c.b_star / (c.sigma_star * c.sigma_star)
}

/// Parse a flat TOML table with keys `a, b, sigma, k, lambda0, L`.
///
/// Unknown, repeated or missing keys are errors.
pub fn parse_config(text: &str) -> Result<RawParams> {
    toml::from_str(text).map_err(|e| Error::Config(e.message().to_owned()))
}
