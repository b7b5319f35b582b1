//! Closed-form laws under the transformed measure, plus the stationary law
//! of the original model.
//!
//! The square-root diffusion `X` has a scaled noncentral chi-square
//! transition law:
//!
//! ```text
//! omega = 2 a* / ((1 - e^{-a* t}) sigma*^2),  theta = omega e^{-a* t} x0,  gamma = omega x
//! f(x | x0) = omega e^{-theta - gamma} (gamma / theta)^{kappa/2} I_kappa(2 sqrt(theta gamma))
//! ```
//!
//! Laws of `lambda = T^-1(X)` and `V = lambda^{2(1-k)} = X / coeff` follow by
//! change of variables. `S = lambda^{1-k}` is Gaussian:
//!
//! ```text
//! E S_t   = lambda0^{1-k} e^{-b(1-k)t}
//! Var S_t = sigma^2 (1-k) / (2b) (1 - e^{-2b(1-k)t})
//! ```
//!
//! The stationary density of the original model is
//! `C_k x^{-2k} exp(Lambda(x))` with
//!
//! ```text
//! Lambda(x) = (2/sigma^2) (a x^{1-2k}/(1-2k) - b x^{2-2k}/(2-2k))   k != 1/2
//! Lambda(x) = (2/sigma^2) (a ln x - b x)                             k == 1/2
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::{feller_ratio, CirParams, CklsParams};
use crate::quad::Integrator;
use crate::special::{ln_bessel_i, ln_gamma};

/// Which law a [`DensityCurve`] samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawTag {
    CirTransition,
    CirStationary,
    #[serde(rename = "ckls_stationary_P")]
    CklsStationaryP,
    #[serde(rename = "lambda_stationary_Q")]
    LambdaStationaryQ,
    #[serde(rename = "lambda_transition_Q")]
    LambdaTransitionQ,
    #[serde(rename = "v_transition_Q")]
    VTransitionQ,
}

impl LawTag {
    pub const ALL: [LawTag; 6] = [
        LawTag::CirTransition,
        LawTag::CirStationary,
        LawTag::CklsStationaryP,
        LawTag::LambdaStationaryQ,
        LawTag::LambdaTransitionQ,
        LawTag::VTransitionQ,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            LawTag::CirTransition => "cir_transition",
            LawTag::CirStationary => "cir_stationary",
            LawTag::CklsStationaryP => "ckls_stationary_P",
            LawTag::LambdaStationaryQ => "lambda_stationary_Q",
            LawTag::LambdaTransitionQ => "lambda_transition_Q",
            LawTag::VTransitionQ => "v_transition_Q",
        }
    }

    /// Whether the law depends on a horizon `t`.
    pub fn needs_horizon(&self) -> bool {
        matches!(
            self,
            LawTag::CirTransition | LawTag::LambdaTransitionQ | LawTag::VTransitionQ
        )
    }
}

impl fmt::Display for LawTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LawTag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        LawTag::ALL
            .into_iter()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown law `{s}`")))
    }
}

/// Density values on a grid, with the trapezoidal mass of the samples.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityCurve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
    pub mass: f64,
    pub law_tag: LawTag,
}

/// Parse a `lo:hi:n` grid specification into `n` equally spaced points.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let bad = || Error::InvalidArgument(format!("grid must be lo:hi:n, got `{spec}`"));
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
    let n: usize = parts[2].trim().parse().map_err(|_| bad())?;
    if !(lo.is_finite() && hi.is_finite()) || hi <= lo || n < 2 {
        return Err(bad());
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| lo + step * i as f64).collect())
}

fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    xs.windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

fn positive(what: &'static str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(what, x))
    }
}

/// Transition-law constants for horizon `t` and start `x0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionSpec {
    pub omega: f64,
    pub theta: f64,
    pub kappa: f64,
    pub t: f64,
}

impl TransitionSpec {
    pub fn new(c: &CirParams, x0: f64, t: f64) -> Result<Self> {
        positive("transition horizon", t)?;
        positive("transition start", x0)?;
        let decay = (-c.a_star * t).exp();
        let omega = 2.0 * c.a_star / (-(-c.a_star * t).exp_m1() * c.sigma_star * c.sigma_star);
        Ok(Self {
            omega,
            theta: omega * decay * x0,
            kappa: c.kappa(),
            t,
        })
    }

    /// Log density at `x > 0`.
    pub fn ln_density(&self, x: f64) -> Result<f64> {
        let gamma = self.omega * x;
        let z = 2.0 * (self.theta * gamma).sqrt();
        Ok(self.omega.ln() - self.theta - gamma
            + 0.5 * self.kappa * (gamma.ln() - self.theta.ln())
            + ln_bessel_i(self.kappa, z)?)
    }
}

/// Transition density of the square-root diffusion from `x0` to `x` over `t`.
pub fn cir_transition_density(x: f64, x0: f64, t: f64, c: &CirParams) -> Result<f64> {
    positive("cir_transition_density x", x)?;
    Ok(TransitionSpec::new(c, x0, t)?.ln_density(x)?.exp())
}

/// Transition density of `lambda` under the transformed measure, obtained as
/// `f_X(T(l) | T(l0)) T'(l)`.
pub fn lambda_transition_density_q(l: f64, l0: f64, t: f64, p: &CklsParams) -> Result<f64> {
    positive("lambda_transition_density_q l", l)?;
    positive("lambda_transition_density_q l0", l0)?;
    let tr = p.transform();
    let x = tr.forward_unchecked(l);
    let x0 = tr.forward_unchecked(l0);
    Ok(cir_transition_density(x, x0, t, &p.cir())? * tr.d1_unchecked(l))
}

/// The same density written out in `lambda` with the order fixed at `-1/2`,
/// where `I_{-1/2}(z) = sqrt(2 / (pi z)) cosh z`. Independent of the Bessel
/// series, used as a second route.
pub fn lambda_transition_density_q_explicit(
    l: f64,
    l0: f64,
    t: f64,
    p: &CklsParams,
) -> Result<f64> {
    positive("lambda_transition_density_q l", l)?;
    positive("lambda_transition_density_q l0", l0)?;
    positive("lambda_transition_density_q t", t)?;
    let (b, k, s, big_l) = (p.b(), p.k(), p.sigma(), p.l());
    let one_minus_k = 1.0 - k;
    let chi = big_l * big_l / (4.0 * one_minus_k * one_minus_k);
    let omega = 4.0 * b * one_minus_k / (-(-2.0 * b * one_minus_k * t).exp_m1() * s * s * big_l * big_l);
    // current value, then the lagged initial value
    let gamma = omega * chi * l.powf(2.0 * one_minus_k);
    let theta = omega * chi * (-2.0 * b * one_minus_k * t).exp() * l0.powf(2.0 * one_minus_k);
    let root = (theta * gamma).sqrt();
    // e^{-theta-gamma} cosh(2 root) = (e^{-(sqrt th - sqrt ga)^2} + e^{-(sqrt th + sqrt ga)^2}) / 2
    let (st, sg) = (theta.sqrt(), gamma.sqrt());
    let mix = 0.5 * ((-(st - sg).powi(2)).exp() + (-(st + sg).powi(2)).exp());
    let bessel_scale = (1.0 / (PI * root)).sqrt();
    let jac = big_l * big_l / (2.0 * one_minus_k) * l.powf(1.0 - 2.0 * k);
    Ok(jac * omega * (gamma / theta).powf(-0.25) * bessel_scale * mix)
}

/// Transition density of `V = lambda^{2(1-k)} = X / coeff` under the
/// transformed measure.
pub fn v_transition_density_q(v: f64, v0: f64, t: f64, p: &CklsParams) -> Result<f64> {
    positive("v_transition_density_q v", v)?;
    positive("v_transition_density_q v0", v0)?;
    let chi = p.transform().coeff;
    Ok(chi * cir_transition_density(chi * v, chi * v0, t, &p.cir())?)
}

/// Gamma stationary density with shape `kappa + 1` and rate `(kappa + 1)/b*`.
pub fn cir_stationary_density(x: f64, c: &CirParams) -> Result<f64> {
    positive("cir_stationary_density x", x)?;
    let shape = feller_ratio(c);
    let rate = shape / c.b_star;
    Ok((shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x).exp())
}

/// Stationary density of `lambda` under the transformed measure.
pub fn lambda_stationary_density_q(l: f64, p: &CklsParams) -> Result<f64> {
    positive("lambda_stationary_density_q l", l)?;
    let (b, k, s) = (p.b(), p.k(), p.sigma());
    let one_minus_k = 1.0 - k;
    let norm = 2.0 * (b * one_minus_k).sqrt() / (s * PI.sqrt());
    Ok(norm * l.powf(-k) * (-b * l.powf(2.0 * one_minus_k) / (s * s * one_minus_k)).exp())
}

/// Stationary law of the original model, normalised numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CklsStationary {
    a: f64,
    b: f64,
    sigma: f64,
    k: f64,
    /// `ln C_k`.
    pub ln_norm: f64,
    pub mean: f64,
    /// Upper end of the numerical support; the density there is below
    /// `1e-16` of its peak.
    pub x_max: f64,
}

impl CklsStationary {
    pub fn new(p: &CklsParams) -> Result<Self> {
        let mut law = Self {
            a: p.a(),
            b: p.b(),
            sigma: p.sigma(),
            k: p.k(),
            ln_norm: 0.0,
            mean: f64::NAN,
            x_max: f64::NAN,
        };
        let (peak_x, peak) = law.peak();
        let cutoff = peak + (1e-16_f64).ln();
        let mut x_max = peak_x.max(1e-300) * 2.0;
        while law.ln_unnormalised(x_max) > cutoff {
            x_max *= 2.0;
            if !x_max.is_finite() {
                return Err(Error::NormalizationFailure("density does not decay".into()));
            }
        }
        let integ = Integrator::with_rel_tol(1e-11);
        let mass = integ
            .graded(|x| (law.ln_unnormalised(x) - peak).exp(), 0.0, x_max)
            .map_err(|e| Error::NormalizationFailure(e.to_string()))?
            .value;
        let first = integ
            .graded(|x| x * (law.ln_unnormalised(x) - peak).exp(), 0.0, x_max)
            .map_err(|e| Error::NormalizationFailure(e.to_string()))?
            .value;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::NormalizationFailure(format!("mass {mass}")));
        }
        law.ln_norm = -peak - mass.ln();
        law.mean = first / mass;
        law.x_max = x_max;
        Ok(law)
    }

    /// `Lambda(x)`, the log of the exponential factor.
    pub fn exponent(&self, x: f64) -> f64 {
        let s2 = self.sigma * self.sigma;
        if self.k == 0.5 {
            2.0 / s2 * (self.a * x.ln() - self.b * x)
        } else {
            let e1 = 1.0 - 2.0 * self.k;
            let e2 = 2.0 - 2.0 * self.k;
            2.0 / s2 * (self.a * x.powf(e1) / e1 - self.b * x.powf(e2) / e2)
        }
    }

    fn ln_unnormalised(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        let v = -2.0 * self.k * x.ln() + self.exponent(x);
        if v.is_nan() {
            f64::NEG_INFINITY
        } else {
            v
        }
    }

    // Log-concave in ln x, so a coarse log scan then golden refinement finds the mode.
    fn peak(&self) -> (f64, f64) {
        let mut best = (1.0, self.ln_unnormalised(1.0));
        let mut x = 1e-12;
        while x < 1e12 {
            let v = self.ln_unnormalised(x);
            if v > best.1 {
                best = (x, v);
            }
            x *= 1.25;
        }
        let (mut lo, mut hi) = (best.0.ln() - 0.25, best.0.ln() + 0.25);
        let g = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..100 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if self.ln_unnormalised(m1.exp()) > self.ln_unnormalised(m2.exp()) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let xm = (0.5 * (lo + hi)).exp();
        let vm = self.ln_unnormalised(xm);
        if vm > best.1 {
            (xm, vm)
        } else {
            best
        }
    }

    pub fn norm(&self) -> f64 {
        self.ln_norm.exp()
    }

    pub fn density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        (self.ln_norm + self.ln_unnormalised(x)).exp()
    }

    /// Probability of `[lo, hi]`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> Result<f64> {
        Ok(Integrator::with_rel_tol(1e-9)
            .graded(|x| self.density(x), lo.max(0.0), hi)?
            .value)
    }
}

/// Stationary density of the original model under the real-world measure.
pub fn ckls_stationary_density_p(x: f64, p: &CklsParams) -> Result<f64> {
    positive("ckls_stationary_density_p x", x)?;
    Ok(CklsStationary::new(p)?.density(x))
}

/// Mean, variance and covariance of the square-root diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CirMoments {
    pub mean: f64,
    pub variance: f64,
    pub covariance: f64,
}

/// Moments at `t` and the covariance between `t` and `t_later >= t`.
pub fn cir_mean_var_cov(t: f64, t_later: f64, c: &CirParams) -> Result<CirMoments> {
    if !(t >= 0.0 && t_later >= t) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= t <= t', got t = {t}, t' = {t_later}"
        )));
    }
    let (a, b, s2, x0) = (c.a_star, c.b_star, c.sigma_star * c.sigma_star, c.x0);
    let e = |u: f64| (-a * u).exp();
    let mean = x0 * e(t) + b * (1.0 - e(t));
    let variance = x0 * s2 / a * (e(t) - e(2.0 * t)) + b * s2 / (2.0 * a) * (1.0 - e(t)).powi(2);
    let covariance = x0 * s2 / a * (e(t_later) - e(t + t_later))
        + b * s2 / (2.0 * a) * ((a * (t - t_later)).exp() + e(t + t_later) - 2.0 * e(t_later));
    Ok(CirMoments { mean, variance, covariance })
}

/// Exact raw moment `E[X_t^n]`.
///
/// `2 omega X_t` is noncentral chi-square with `nu = 4 a* b* / sigma*^2`
/// degrees of freedom and noncentrality `2 theta`; its cumulants are
/// `2^{j-1} (j-1)! (nu + j * 2 theta)` and raw moments follow from the
/// cumulant recursion.
pub fn cir_moment_n(n: u32, t: f64, c: &CirParams) -> Result<f64> {
    if n == 0 {
        return Ok(1.0);
    }
    if !(t >= 0.0) {
        return Err(Error::InvalidArgument(format!("need t >= 0, got {t}")));
    }
    if t == 0.0 {
        return Ok(c.x0.powi(n as i32));
    }
    let tr = TransitionSpec::new(c, c.x0, t)?;
    let nu = 2.0 * feller_ratio(c);
    let nc = 2.0 * tr.theta;
    let n = n as usize;
    let mut cumulants = vec![0.0; n + 1];
    let mut fact = 1.0; // (j-1)!
    for j in 1..=n {
        if j > 1 {
            fact *= (j - 1) as f64;
        }
        cumulants[j] = 2f64.powi(j as i32 - 1) * fact * (nu + j as f64 * nc);
    }
    let mut raw = vec![1.0; n + 1];
    for m in 1..=n {
        let mut acc = 0.0;
        let mut binom = 1.0; // C(m-1, j-1)
        for j in 1..=m {
            if j > 1 {
                binom *= (m - j + 1) as f64 / (j - 1) as f64;
            }
            acc += binom * cumulants[j] * raw[m - j];
        }
        raw[m] = acc;
    }
    Ok(raw[n] / (2.0 * tr.omega).powi(n as i32))
}

/// Power to which the time bracket is raised in [`cir_moment_n_binomial`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BracketPower {
    /// `[(e^{2a* t} - 1)/(2a*)]^{2j}`.
    Double,
    /// `[(e^{2a* t} - 1)/(2a*)]^{j}`.
    Single,
}

/// Binomial-sum moment approximation
///
/// ```text
/// sum_{j <= n/2} C(n, j) A^{n-2j} B^{2j} [(e^{2a* t} - 1)/(2a*)]^{p j}
/// A = e^{-a* t} x0 + b*(1 - e^{-a* t}),   B = sigma* e^{-a* t}
/// ```
///
/// Kept for comparison against [`cir_moment_n`]; neither bracket power
/// reproduces the true moments.
pub fn cir_moment_n_binomial(n: u32, t: f64, c: &CirParams, power: BracketPower) -> f64 {
    let (a, b) = (c.a_star, c.b_star);
    let decay = (-a * t).exp();
    let big_a = decay * c.x0 + b * (1.0 - decay);
    let big_b = c.sigma_star * decay;
    let bracket = (2.0 * a * t).exp_m1() / (2.0 * a);
    let p = match power {
        BracketPower::Double => 2,
        BracketPower::Single => 1,
    };
    let mut total = 0.0;
    let mut binom = 1.0; // C(n, j)
    for j in 0..=(n / 2) {
        if j > 0 {
            binom *= (n - j + 1) as f64 / j as f64;
        }
        total += binom
            * big_a.powi((n - 2 * j) as i32)
            * big_b.powi(2 * j as i32)
            * bracket.powi((p * j) as i32);
    }
    total
}

/// Moments of `S = lambda^{1-k}` under the transformed measure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SMoments {
    pub mean: f64,
    pub var: f64,
    pub cov: f64,
}

/// Mean and variance at `t`, covariance between `t` and `t_other`.
pub fn s_moments(t: f64, t_other: f64, p: &CklsParams) -> Result<SMoments> {
    if !(t >= 0.0 && t_other >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "need nonnegative times, got {t}, {t_other}"
        )));
    }
    let speed = p.b() * (1.0 - p.k());
    let scale = p.sigma() * p.sigma() * (1.0 - p.k()) / (2.0 * p.b());
    Ok(SMoments {
        mean: p.lambda0().powf(1.0 - p.k()) * (-speed * t).exp(),
        var: -scale * (-2.0 * speed * t).exp_m1(),
        cov: scale * ((-speed * (t - t_other).abs()).exp() - (-speed * (t + t_other)).exp()),
    })
}

/// Moment generating function `E exp(theta S_t) = exp(theta m + theta^2 v / 2)`.
pub fn s_mgf(theta: f64, t: f64, p: &CklsParams) -> Result<f64> {
    let m = s_moments(t, t, p)?;
    Ok((theta * m.mean + 0.5 * theta * theta * m.var).exp())
}

/// Mean and variance of the first-order expansion of `lambda_t` around its
/// noise-free path.
pub fn lambda_linear_approx(t: f64, p: &CklsParams) -> Result<(f64, f64)> {
    positive("lambda_linear_approx t", t)?;
    let (b, k, s, l0) = (p.b(), p.k(), p.sigma(), p.lambda0());
    let mean = l0 * (-b * t).exp();
    let var = s * s * l0.powf(2.0 * k) / (2.0 * b * (1.0 - k))
        * ((-2.0 * b * k * t).exp() - (-2.0 * b * t).exp());
    Ok((mean, var))
}

/// Chebyshev bound on the probability that the noise term exceeds `eps` times
/// the noise-free value of `S_t`.
pub fn chebyshev_tail(eps: f64, t: f64, p: &CklsParams) -> Result<f64> {
    positive("chebyshev_tail eps", eps)?;
    positive("chebyshev_tail t", t)?;
    let (b, k, s, l0) = (p.b(), p.k(), p.sigma(), p.lambda0());
    Ok(s * s * (1.0 - k) * (2.0 * b * (1.0 - k) * t).exp_m1()
        / (2.0 * b * eps * eps * l0.powf(2.0 * (1.0 - k))))
}

/// Evaluate a law on a grid. `t` is required for transition laws, whose
/// initial value comes from `lambda0`.
pub fn density_curve(law: LawTag, t: Option<f64>, grid: &[f64], p: &CklsParams) -> Result<DensityCurve> {
    let horizon = || {
        t.ok_or_else(|| Error::InvalidArgument(format!("law {law} needs a horizon t")))
    };
    let c = p.cir();
    let values: Vec<f64> = match law {
        LawTag::CirTransition => {
            let spec = TransitionSpec::new(&c, c.x0, horizon()?)?;
            grid.iter()
                .map(|&x| {
                    positive("density grid point", x)?;
                    Ok(spec.ln_density(x)?.exp())
                })
                .collect::<Result<_>>()?
        }
        LawTag::CirStationary => grid.iter().map(|&x| cir_stationary_density(x, &c)).collect::<Result<_>>()?,
        LawTag::CklsStationaryP => {
            let law = CklsStationary::new(p)?;
            grid.iter()
                .map(|&x| {
                    positive("density grid point", x)?;
                    Ok(law.density(x))
                })
                .collect::<Result<_>>()?
        }
        LawTag::LambdaStationaryQ => grid
            .iter()
            .map(|&x| lambda_stationary_density_q(x, p))
            .collect::<Result<_>>()?,
        LawTag::LambdaTransitionQ => {
            let t = horizon()?;
            grid.iter()
                .map(|&x| lambda_transition_density_q(x, p.lambda0(), t, p))
                .collect::<Result<_>>()?
        }
        LawTag::VTransitionQ => {
            let t = horizon()?;
            let v0 = p.lambda0().powf(2.0 * (1.0 - p.k()));
            grid.iter()
                .map(|&x| v_transition_density_q(x, v0, t, p))
                .collect::<Result<_>>()?
        }
    };
    Ok(DensityCurve {
        mass: trapezoid(grid, &values),
        grid: grid.to_vec(),
        values,
        law_tag: law,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p0() -> CklsParams {
        CklsParams::reference()
    }

    #[test]
    fn transition_constants() {
        let c = p0().cir();
        let tr = TransitionSpec::new(&c, c.x0, 1.0).unwrap();
        let omega = 2.0 * 0.25 / ((1.0 - (-0.25f64).exp()) * 0.36);
        assert_relative_eq!(tr.omega, omega, max_relative = 1e-14);
        assert_relative_eq!(tr.theta, omega * (-0.25f64).exp() * 16.0, max_relative = 1e-14);
        assert_relative_eq!(tr.kappa, -0.5, max_relative = 1e-14);
    }

    #[test]
    fn cir_moments_closed_forms() {
        let c = p0().cir();
        let m = cir_mean_var_cov(0.0, 0.0, &c).unwrap();
        assert_eq!((m.mean, m.variance), (16.0, 0.0));
        // mpmath oracle
        let m = cir_mean_var_cov(1.0, 1.0, &c).unwrap();
        assert_relative_eq!(m.mean, 12.540_444_247_236_772, max_relative = 1e-14);
        let far = cir_mean_var_cov(400.0, 400.0, &c).unwrap();
        assert_relative_eq!(far.mean, c.b_star, max_relative = 1e-12);
        assert_relative_eq!(far.variance, c.b_star * 0.36 / 0.5, max_relative = 1e-12);
        // covariance = e^{-a*(t'-t)} Var(t)
        let m = cir_mean_var_cov(0.7, 1.9, &c).unwrap();
        assert_relative_eq!(m.covariance, (-0.25f64 * 1.2).exp() * m.variance, max_relative = 1e-13);
        assert!(cir_mean_var_cov(1.0, 0.5, &c).is_err());
    }

    #[test]
    fn exact_raw_moments_match_oracle() {
        let c = p0().cir();
        // mpmath quadrature of x^n f(x) at t = 1
        assert_relative_eq!(cir_moment_n(1, 1.0, &c).unwrap(), 12.540_444_247_236_772, max_relative = 1e-13);
        assert_relative_eq!(cir_moment_n(2, 1.0, &c).unwrap(), 161.244_527_981_293_25, max_relative = 1e-13);
        assert_relative_eq!(cir_moment_n(3, 1.0, &c).unwrap(), 2_123.845_184_528_215_5, max_relative = 1e-13);
        assert_relative_eq!(cir_moment_n(4, 1.0, &c).unwrap(), 28_632.792_853_515_696, max_relative = 1e-13);
        let c1 = CklsParams::reference_sqrt().cir();
        assert_relative_eq!(cir_moment_n(2, 0.7, &c1).unwrap(), 8.852_845_622_755_712, max_relative = 1e-13);
        assert_relative_eq!(cir_moment_n(3, 0.7, &c1).unwrap(), 29.091_850_164_502_71, max_relative = 1e-13);
        assert_eq!(cir_moment_n(3, 0.0, &c).unwrap(), 4096.0);
    }

    #[test]
    fn second_moment_reproduces_variance() {
        let c = p0().cir();
        for &t in &[0.1, 1.0, 5.0] {
            let m = cir_mean_var_cov(t, t, &c).unwrap();
            let var = cir_moment_n(2, t, &c).unwrap() - m.mean * m.mean;
            assert_relative_eq!(var, m.variance, max_relative = 1e-9);
        }
    }

    #[test]
    fn binomial_form_first_moment_is_the_mean() {
        let c = p0().cir();
        let mean = cir_mean_var_cov(1.0, 1.0, &c).unwrap().mean;
        for power in [BracketPower::Double, BracketPower::Single] {
            assert_relative_eq!(cir_moment_n_binomial(1, 1.0, &c, power), mean, max_relative = 1e-14);
        }
    }

    #[test]
    fn explicit_lambda_route_agrees() {
        for p in [p0(), CklsParams::reference_sqrt(), CklsParams::new(0.3, 1.2, 0.4, 0.6, 0.5, 1.0).unwrap()] {
            for &t in &[0.2, 1.0, 3.0] {
                for &l in &[0.05, 0.3, 0.9, 1.0, 1.7, 4.0] {
                    let a = lambda_transition_density_q(l, p.lambda0(), t, &p).unwrap();
                    let b = lambda_transition_density_q_explicit(l, p.lambda0(), t, &p).unwrap();
                    assert_relative_eq!(a, b, max_relative = 1e-10);
                }
            }
        }
    }

    #[test]
    fn identity_transform_reduces_to_cir() {
        let p = CklsParams::new(0.3, 0.8, 0.5, 0.5, 0.6, 1.0).unwrap();
        let c = p.cir();
        for &x in &[0.1, 0.5, 1.3] {
            assert_relative_eq!(
                lambda_transition_density_q(x, 0.6, 0.9, &p).unwrap(),
                cir_transition_density(x, 0.6, 0.9, &c).unwrap(),
                max_relative = 1e-13
            );
        }
    }

    #[test]
    fn stationary_gamma_matches_reduced_form() {
        let p = p0();
        let c = p.cir();
        let (b, k, s, l) = (p.b(), p.k(), p.sigma(), p.l());
        for &x in &[0.01_f64, 0.2, 1.0, 3.3] {
            let reduced = 2.0 * (b * (1.0 - k)).sqrt() / (s * l * PI.sqrt())
                * x.powf(-0.5)
                * (4.0 * b * (k - 1.0) * x / (s * s * l * l)).exp();
            assert_relative_eq!(cir_stationary_density(x, &c).unwrap(), reduced, max_relative = 1e-12);
        }
    }

    #[test]
    fn lambda_stationary_is_pushforward() {
        let p = p0();
        let c = p.cir();
        let tr = p.transform();
        for &l in &[0.01, 0.2, 1.0, 3.3] {
            let push = cir_stationary_density(tr.forward(l).unwrap(), &c).unwrap() * tr.d1(l).unwrap();
            assert_relative_eq!(lambda_stationary_density_q(l, &p).unwrap(), push, max_relative = 1e-10);
        }
    }

    #[test]
    fn ckls_stationary_normaliser() {
        // mpmath oracle
        let law = CklsStationary::new(&p0()).unwrap();
        assert_relative_eq!(law.norm(), 1_064_834_342_880.214_6, max_relative = 1e-8);
        assert_relative_eq!(law.mean, 0.4, max_relative = 1e-8);
        let law = CklsStationary::new(&CklsParams::reference_sqrt()).unwrap();
        assert_relative_eq!(law.norm(), 4_125.810_653_926_852, max_relative = 1e-8);
        assert_relative_eq!(law.mean, 0.4, max_relative = 1e-8);
    }

    #[test]
    fn s_moment_values() {
        let m = s_moments(1.0, 1.0, &p0()).unwrap();
        assert_relative_eq!(m.mean, 0.882_496_902_584_595_4, max_relative = 1e-14);
        assert_relative_eq!(m.var, 0.004_976_982_380_893_390_5, max_relative = 1e-13);
        assert_relative_eq!(m.cov, m.var, max_relative = 1e-14);
        let z = s_moments(0.0, 0.0, &p0()).unwrap();
        assert_eq!((z.mean, z.var), (1.0, 0.0));
        assert_eq!(s_mgf(0.0, 1.0, &p0()).unwrap(), 1.0);
    }

    #[test]
    fn chebyshev_value() {
        assert_relative_eq!(
            chebyshev_tail(1.0, 1.0, &p0()).unwrap(),
            0.006_390_571_875_474_183,
            max_relative = 1e-13
        );
    }

    #[test]
    fn grid_parsing() {
        assert_eq!(parse_grid("0:1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        assert!(parse_grid("1:0:3").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("0:1:1").is_err());
    }

    #[test]
    fn law_tags_round_trip() {
        for tag in LawTag::ALL {
            assert_eq!(tag.as_str().parse::<LawTag>().unwrap(), tag);
        }
    }

    #[test]
    fn curve_needs_horizon_for_transition_laws() {
        let grid = parse_grid("0.1:30:50").unwrap();
        assert!(density_curve(LawTag::CirTransition, None, &grid, &p0()).is_err());
        let c = density_curve(LawTag::CirStationary, None, &grid, &p0()).unwrap();
        assert_eq!(c.values.len(), 50);
    }
}
