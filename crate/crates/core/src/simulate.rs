//! Path simulation under the real-world measure `P` and the transformed
//! measure `Q`.
//!
//! Square-root type equations use full-truncation Euler-Maruyama:
//!
//! ```text
//! x~_{n+1} = x~_n + mu(x~_n^+) dt + nu(x~_n^+) dW_n,   stored value x~_{n+1}^+
//! ```
//!
//! `S = lambda^{1-k}` is Gaussian under `Q` and is sampled exactly:
//!
//! ```text
//! S_{t+h} = S_t e^{-b(1-k)h} + N(0, sigma^2 (1-k) (1 - e^{-2b(1-k)h}) / (2b))
//! ```
//!
//! The square-root diffusion is also a time-changed squared Bessel process:
//!
//! ```text
//! X_t = e^{-a* t} Z(s(t)),   s(t) = sigma*^2 (e^{a* t} - 1) / (4 a*),   dZ = d ds + 2 sqrt(Z) dB
//! ```
//!
//! Ensembles run one ChaCha stream per path, in parallel, and collect results
//! in path order, so every summary is a pure function of the seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::Serialize;

use crate::analytic::TransitionSpec;
use crate::error::{Error, Result};
use crate::params::{feller_ratio, CirParams, CklsParams};

/// Reproducible random stream identified by `(seed, stream_id)`.
#[derive(Debug, Clone)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
    rng: ChaCha8Rng,
}

pub fn make_stream(seed: u64, stream_id: u64) -> RngStream {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id);
    RngStream { seed, stream_id, rng }
}

impl RngStream {
    #[inline]
    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Measure {
    P,
    Q,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    EmFullTruncation,
    ExactGaussian,
    BesqTimeChange,
}

/// A simulated path on a time grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Path {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub measure: Measure,
    pub scheme: Scheme,
    pub seed: u64,
    pub stream: u64,
    /// Brownian increments that drove each step (empty when not applicable).
    pub dw: Vec<f64>,
    /// Steps whose raw state was at or below zero before truncation.
    pub truncated_steps: usize,
    /// Index of the first grid point at which the path was censored.
    pub censored_from: Option<usize>,
}

impl Path {
    pub fn t_max(&self) -> f64 {
        *self.times.last().expect("non-empty path")
    }

    pub fn terminal(&self) -> f64 {
        *self.values.last().expect("non-empty path")
    }
}

/// Uniform grid on `[0, t_max]` with step as close to `dt` as divides evenly.
pub fn uniform_grid(t_max: f64, dt: f64) -> Result<(usize, f64)> {
    if !(t_max > 0.0 && t_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("t_max must be > 0, got {t_max}")));
    }
    if !(dt > 0.0 && dt <= t_max) {
        return Err(Error::InvalidArgument(format!(
            "dt must satisfy 0 < dt <= t_max, got dt = {dt}"
        )));
    }
    let n = ((t_max / dt).round() as usize).max(1);
    Ok((n, t_max / n as f64))
}

/// Drift and volatility of a scalar SDE, evaluated at a nonnegative state.
pub trait SquareRootType: Sync {
    fn drift(&self, x: f64) -> f64;
    fn vol(&self, x: f64) -> f64;

    /// One full-truncation step. Returns the raw (untruncated) state.
    #[inline]
    fn step(&self, x: f64, dt: f64, dw: f64) -> f64 {
        let xp = x.max(0.0);
        x + self.drift(xp) * dt + self.vol(xp) * dw
    }
}

/// `d lambda = (a - b lambda) dt + sigma lambda^k dW` under `P`.
#[derive(Debug, Clone, Copy)]
pub struct CklsP {
    pub a: f64,
    pub b: f64,
    pub sigma: f64,
    pub k: f64,
}

impl CklsP {
    pub fn new(p: &CklsParams) -> Self {
        Self { a: p.a(), b: p.b(), sigma: p.sigma(), k: p.k() }
    }
}

impl SquareRootType for CklsP {
    #[inline]
    fn drift(&self, x: f64) -> f64 {
        self.a - self.b * x
    }
    #[inline]
    fn vol(&self, x: f64) -> f64 {
        self.sigma * x.powf(self.k)
    }
}

/// `d lambda = (k sigma^2 / 2 lambda^{2k-1} - b lambda) dt + sigma lambda^k dW` under `Q`.
#[derive(Debug, Clone, Copy)]
pub struct CklsQ {
    pub b: f64,
    pub sigma: f64,
    pub k: f64,
}

impl CklsQ {
    pub fn new(p: &CklsParams) -> Self {
        Self { b: p.b(), sigma: p.sigma(), k: p.k() }
    }
}

impl SquareRootType for CklsQ {
    #[inline]
    fn drift(&self, x: f64) -> f64 {
        // powf(0, 0) == 1, which is the right value at k = 1/2
        0.5 * self.k * self.sigma * self.sigma * x.powf(2.0 * self.k - 1.0) - self.b * x
    }
    #[inline]
    fn vol(&self, x: f64) -> f64 {
        self.sigma * x.powf(self.k)
    }
}

/// `dX = a* (b* - X) dt + sigma* sqrt(X) dW`.
#[derive(Debug, Clone, Copy)]
pub struct SquareRoot {
    pub a_star: f64,
    pub b_star: f64,
    pub sigma_star: f64,
}

impl From<&CirParams> for SquareRoot {
    fn from(c: &CirParams) -> Self {
        Self { a_star: c.a_star, b_star: c.b_star, sigma_star: c.sigma_star }
    }
}

impl SquareRootType for SquareRoot {
    #[inline]
    fn drift(&self, x: f64) -> f64 {
        self.a_star * (self.b_star - x)
    }
    #[inline]
    fn vol(&self, x: f64) -> f64 {
        self.sigma_star * x.sqrt()
    }
}

/// Squared Bessel process `dZ = d ds + 2 sqrt(Z) dB`.
#[derive(Debug, Clone, Copy)]
pub struct SquaredBessel {
    pub dim: f64,
}

impl SquareRootType for SquaredBessel {
    #[inline]
    fn drift(&self, _x: f64) -> f64 {
        self.dim
    }
    #[inline]
    fn vol(&self, x: f64) -> f64 {
        2.0 * x.sqrt()
    }
}

/// Full-truncation Euler path of `sde` from `x0`, storing the increments.
pub fn em_path<S: SquareRootType>(
    sde: &S,
    x0: f64,
    t_max: f64,
    dt: f64,
    measure: Measure,
    rng: &mut RngStream,
) -> Result<Path> {
    let (n, h) = uniform_grid(t_max, dt)?;
    let sqrt_h = h.sqrt();
    let mut times = Vec::with_capacity(n + 1);
    let mut values = Vec::with_capacity(n + 1);
    let mut dw = Vec::with_capacity(n);
    let mut truncated = 0;
    let mut x = x0;
    times.push(0.0);
    values.push(x0.max(0.0));
    for i in 1..=n {
        let w = sqrt_h * rng.normal();
        x = sde.step(x, h, w);
        if x <= 0.0 {
            truncated += 1;
        }
        times.push(i as f64 * h);
        values.push(x.max(0.0));
        dw.push(w);
    }
    Ok(Path {
        times,
        values,
        measure,
        scheme: Scheme::EmFullTruncation,
        seed: rng.seed,
        stream: rng.stream_id,
        dw,
        truncated_steps: truncated,
        censored_from: None,
    })
}

/// Terminal value of a full-truncation Euler path without storing it.
/// Returns `(value, truncated_steps)`.
pub fn em_terminal<S: SquareRootType>(sde: &S, x0: f64, n: usize, h: f64, rng: &mut RngStream) -> (f64, usize) {
    let sqrt_h = h.sqrt();
    let mut x = x0;
    let mut truncated = 0;
    for _ in 0..n {
        x = sde.step(x, h, sqrt_h * rng.normal());
        if x <= 0.0 {
            truncated += 1;
        }
    }
    (x.max(0.0), truncated)
}

pub fn em_ckls_p(p: &CklsParams, t_max: f64, dt: f64, rng: &mut RngStream) -> Result<Path> {
    em_path(&CklsP::new(p), p.lambda0(), t_max, dt, Measure::P, rng)
}

pub fn em_x_q(c: &CirParams, t_max: f64, dt: f64, rng: &mut RngStream) -> Result<Path> {
    em_path(&SquareRoot::from(c), c.x0, t_max, dt, Measure::Q, rng)
}

pub fn em_lambda_q(p: &CklsParams, t_max: f64, dt: f64, rng: &mut RngStream) -> Result<Path> {
    em_path(&CklsQ::new(p), p.lambda0(), t_max, dt, Measure::Q, rng)
}

/// Exact one-step law of `S = lambda^{1-k}` under `Q`: `(mean factor, sd)`.
fn s_step(p: &CklsParams, h: f64) -> (f64, f64) {
    let speed = p.b() * (1.0 - p.k());
    let var = -p.sigma() * p.sigma() * (1.0 - p.k()) / (2.0 * p.b()) * (-2.0 * speed * h).exp_m1();
    ((-speed * h).exp(), var.sqrt())
}

/// Draw `S_t` from its exact Gaussian law.
pub fn sample_s(p: &CklsParams, t: f64, rng: &mut RngStream) -> f64 {
    let (decay, sd) = s_step(p, t);
    p.lambda0().powf(1.0 - p.k()) * decay + sd * rng.normal()
}

/// Exact simulation of `lambda` under `Q` on `grid` (ascending, from 0).
///
/// `S` is an Ornstein-Uhlenbeck process on the whole line; once it reaches
/// `S <= 0` the path is censored and `lambda` is absorbed at 0 from that
/// grid point on.
pub fn exact_lambda_q(p: &CklsParams, grid: &[f64], rng: &mut RngStream) -> Result<Path> {
    if grid.first() != Some(&0.0) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "grid must start at 0 and increase strictly".into(),
        ));
    }
    let one_minus_k = 1.0 - p.k();
    let mut s = p.lambda0().powf(one_minus_k);
    let mut values = Vec::with_capacity(grid.len());
    values.push(p.lambda0());
    let mut censored_from = None;
    for (i, w) in grid.windows(2).enumerate() {
        let (decay, sd) = s_step(p, w[1] - w[0]);
        s = s * decay + sd * rng.normal();
        if censored_from.is_none() && s <= 0.0 {
            censored_from = Some(i + 1);
        }
        values.push(if censored_from.is_some() { 0.0 } else { s.powf(1.0 / one_minus_k) });
    }
    Ok(Path {
        times: grid.to_vec(),
        values,
        measure: Measure::Q,
        scheme: Scheme::ExactGaussian,
        seed: rng.seed,
        stream: rng.stream_id,
        dw: Vec::new(),
        truncated_steps: 0,
        censored_from,
    })
}

/// Clock of the squared Bessel representation, `s(t)`.
pub fn besq_clock(c: &CirParams, t: f64) -> f64 {
    c.sigma_star * c.sigma_star * (c.a_star * t).exp_m1() / (4.0 * c.a_star)
}

/// Inverse clock, `t(s) = ln(1 + 4 a* s / sigma*^2) / a*`.
pub fn besq_clock_inverse(c: &CirParams, s: f64) -> f64 {
    (4.0 * c.a_star * s / (c.sigma_star * c.sigma_star)).ln_1p() / c.a_star
}

/// Square-root diffusion through its squared Bessel representation.
///
/// The Bessel process is stepped by full-truncation Euler on the clock
/// values of a uniform grid in `t`, then rescaled by `e^{-a* t}`.
pub fn cir_via_besq(c: &CirParams, t_max: f64, n_steps: usize, rng: &mut RngStream) -> Result<Path> {
    if n_steps == 0 {
        return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
    }
    let (_, h) = uniform_grid(t_max, t_max / n_steps as f64)?;
    let besq = SquaredBessel { dim: 2.0 * feller_ratio(c) };
    let mut z = c.x0;
    let mut s_prev = 0.0;
    let mut times = vec![0.0];
    let mut values = vec![c.x0];
    let mut truncated = 0;
    for i in 1..=n_steps {
        let t = i as f64 * h;
        let s = besq_clock(c, t);
        let ds = s - s_prev;
        z = besq.step(z, ds, ds.sqrt() * rng.normal());
        if z <= 0.0 {
            truncated += 1;
        }
        s_prev = s;
        times.push(t);
        values.push((-c.a_star * t).exp() * z.max(0.0));
    }
    Ok(Path {
        times,
        values,
        measure: Measure::Q,
        scheme: Scheme::BesqTimeChange,
        seed: rng.seed,
        stream: rng.stream_id,
        dw: Vec::new(),
        truncated_steps: truncated,
        censored_from: None,
    })
}

/// Terminal value of [`cir_via_besq`] without storing the path.
pub fn cir_via_besq_terminal(c: &CirParams, t_max: f64, n_steps: usize, rng: &mut RngStream) -> f64 {
    let besq = SquaredBessel { dim: 2.0 * feller_ratio(c) };
    let h = t_max / n_steps as f64;
    let (mut z, mut s_prev) = (c.x0, 0.0);
    for i in 1..=n_steps {
        let s = besq_clock(c, i as f64 * h);
        let ds = s - s_prev;
        z = besq.step(z, ds, ds.sqrt() * rng.normal());
        s_prev = s;
    }
    (-c.a_star * t_max).exp() * z.max(0.0)
}

/// Exact draw of `X_t` given `X_0 = x0`: `2 omega X_t` is a Poisson mixture
/// of central chi-squares with `nu + 2N` degrees of freedom, `N ~ Poisson(theta)`.
pub fn sample_cir_exact(c: &CirParams, x0: f64, t: f64, rng: &mut RngStream) -> Result<f64> {
    let tr = TransitionSpec::new(c, x0, t)?;
    let nu = 2.0 * feller_ratio(c);
    let n = Poisson::new(tr.theta)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng.rng());
    let chi2 = Gamma::new(0.5 * nu + n, 2.0)
        .map_err(|e| Error::InvalidArgument(e.to_string()))?
        .sample(rng.rng());
    Ok(chi2 / (2.0 * tr.omega))
}

/// Time average `(1/T) int_0^T lambda^q dt` by the trapezoidal rule.
pub fn ergodic_average(path: &Path, q: f64) -> Result<f64> {
    if q == 0.0 {
        return Ok(1.0);
    }
    if q < 0.0 {
        if let Some(&v) = path.values.iter().find(|&&v| v <= 0.0) {
            return Err(Error::domain("ergodic_average with negative exponent", v));
        }
    }
    let total = path.t_max() - path.times[0];
    let integral: f64 = path
        .times
        .windows(2)
        .zip(path.values.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0].powf(q) + v[1].powf(q)))
        .sum();
    Ok(integral / total)
}

/// Run `f` once per path on its own stream `(seed, path index)`, in
/// parallel, returning results in path order.
pub fn ensemble<T, F>(n_paths: usize, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut RngStream) -> T + Sync,
{
    (0..n_paths as u64)
        .into_par_iter()
        .map(|id| f(&mut make_stream(seed, id)))
        .collect()
}
