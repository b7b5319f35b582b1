//! Feller boundary machinery for one-dimensional diffusions.
//!
//! For `dX = mu(X) dt + nu(X) dW` on `(lo, hi)` with an interior anchor `c`:
//!
//! ```text
//! L(y)    = -2 int_c^y mu(z) / nu(z)^2 dz
//! psi(x)  = int_c^x exp(L(y)) dy                           scale function
//! m(z)    = 2 exp(-L(z)) / nu(z)^2                         speed density
//! phi(x)  = int_c^x exp(L(y)) int_c^y m(z) dz dy           exit integral
//! Phi(x)  = int_c^x m(y) int_c^y exp(L(z)) dz dy           entrance integral
//! ```
//!
//! The limits of `phi` and `Phi` at an endpoint give the four-way class:
//!
//! ```text
//! phi < inf, Phi < inf   regular
//! phi < inf, Phi = inf   exit
//! phi = inf, Phi < inf   entrance
//! phi = inf, Phi = inf   natural
//! ```
//!
//! Limits are read off probe sequences that approach the endpoint
//! geometrically. Every cumulative quantity is carried as a logarithm, so
//! `exp(L)` is never formed on its own and `M ~ 22` style exponents are safe.

use std::cell::RefCell;
use std::f64::consts::LN_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::girsanov::{kernel_q, q_drift};
use crate::params::{CirParams, CklsParams};
use crate::quad::{Estimate, Integrator, QuadError};
use crate::special::ln_gamma;

/// A coefficient function `x -> value`.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Probe values above this count as divergent.
pub const DIVERGENCE_THRESHOLD: f64 = 1e12;

/// Spacing of the nodes that carry `L`: four per decade.
const NODE_RATIO: f64 = 1.778_279_410_038_922_8;
/// Spacing of the probe sequence toward an endpoint.
const PROBE_RATIO: f64 = 4.0;
const MAX_PROBES_FINITE: usize = 160;
const MAX_PROBES_INFINITE: usize = 60;
const TAIL_REL_TOL: f64 = 1e-6;
const SERIES_MAX_TERMS: usize = 1_000_000;

/// A diffusion on an open interval of the real line.
#[derive(Clone)]
pub struct DiffusionSpec {
    name: String,
    drift: Coefficient,
    diffusion: Coefficient,
    lo: f64,
    hi: f64,
    anchor: f64,
}

impl fmt::Debug for DiffusionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DiffusionSpec")
            .field("name", &self.name)
            .field("lo", &self.lo)
            .field("hi", &self.hi)
            .field("anchor", &self.anchor)
            .finish()
    }
}

impl DiffusionSpec {
    pub fn new(name: impl Into<String>, drift: Coefficient, diffusion: Coefficient, lo: f64, hi: f64, anchor: f64) -> Result<Self> {
        if !(lo < anchor && anchor < hi) || !anchor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "anchor {anchor} must lie strictly inside ({lo}, {hi})"
            )));
        }
        if diffusion(anchor) == 0.0 {
            return Err(Error::InvalidArgument("diffusion vanishes at the anchor".into()));
        }
        Ok(Self {
            name: name.into(),
            drift,
            diffusion,
            lo,
            hi,
            anchor,
        })
    }

    /// Short-rate dynamics under the transformed measure:
    /// drift `k sigma^2 / 2 x^{2k-1} - b x`, diffusion `sigma x^k`.
    pub fn ckls_auxiliary(p: &CklsParams) -> Self {
        let (q, s, k) = (*p, p.sigma(), p.k());
        Self::positive("ckls_auxiliary", move |x| q_drift(x, &q), move |x| s * x.powf(k))
    }

    /// Short-rate dynamics under the original measure: drift `a - b x`.
    pub fn ckls_physical(p: &CklsParams) -> Self {
        let (a, b, s, k) = (p.a(), p.b(), p.sigma(), p.k());
        Self::positive("ckls_physical", move |x| a - b * x, move |x| s * x.powf(k))
    }

    /// `dX = a*(b* - X) dt + sigma* sqrt(X) dW`.
    pub fn cir(c: &CirParams) -> Self {
        let (a, b, s) = (c.a_star, c.b_star, c.sigma_star);
        Self::positive("cir", move |x| a * (b - x), move |x| s * x.sqrt())
    }

    /// `dX = -rate X dt + vol dW` on the real line.
    pub fn ornstein_uhlenbeck(rate: f64, vol: f64) -> Self {
        Self::line("ornstein_uhlenbeck", move |x| -rate * x, move |_| vol)
    }

    pub fn brownian() -> Self {
        Self::line("brownian", |_| 0.0, |_| 1.0)
    }

    /// `dX = X^2 dt + dW` on `(0, inf)`, which reaches `+inf` in finite time.
    pub fn square_drift() -> Self {
        Self::positive("square_drift", |x| x * x, |_| 1.0)
    }

    fn positive(
        name: &str,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            lo: 0.0,
            hi: f64::INFINITY,
            anchor: 1.0,
        }
    }

    fn line(
        name: &str,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            lo: f64::NEG_INFINITY,
            hi: f64::INFINITY,
            anchor: 0.0,
        }
    }

    pub fn with_anchor(&self, anchor: f64) -> Result<Self> {
        Self::new(
            self.name.clone(),
            self.drift.clone(),
            self.diffusion.clone(),
            self.lo,
            self.hi,
            anchor,
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }
    pub fn drift(&self, x: f64) -> f64 {
        (self.drift)(x)
    }
    pub fn diffusion(&self, x: f64) -> f64 {
        (self.diffusion)(x)
    }
    pub fn lo(&self) -> f64 {
        self.lo
    }
    pub fn hi(&self) -> f64 {
        self.hi
    }
    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    pub fn endpoint(&self, end: Endpoint) -> f64 {
        match end {
            Endpoint::Lo => self.lo,
            Endpoint::Hi => self.hi,
        }
    }

    fn check_interior(&self, x: f64) -> Result<()> {
        if x > self.lo && x < self.hi {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "x = {x} is outside ({}, {})",
                self.lo, self.hi
            )))
        }
    }

    fn side_of(&self, x: f64) -> Endpoint {
        if x < self.anchor {
            Endpoint::Lo
        } else {
            Endpoint::Hi
        }
    }

    /// Point `j` of the geometric sequence from the anchor toward `end`.
    fn geometric_point(&self, end: Endpoint, ratio: f64, j: f64) -> f64 {
        let (c, e) = (self.anchor, self.endpoint(end));
        if e.is_finite() {
            e + (c - e) * ratio.powf(-j)
        } else {
            c + end.sign() * c.abs().max(1.0) * (ratio.powf(j) - 1.0)
        }
    }

    /// Inverse of [`Self::geometric_point`].
    fn geometric_index(&self, end: Endpoint, ratio: f64, x: f64) -> f64 {
        let (c, e) = (self.anchor, self.endpoint(end));
        if e.is_finite() {
            ((c - e) / (x - e)).ln() / ratio.ln()
        } else {
            (1.0 + (x - c).abs() / c.abs().max(1.0)).ln() / ratio.ln()
        }
    }
}

/// Which end of the state interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Endpoint {
    Lo,
    Hi,
}

impl Endpoint {
    pub const BOTH: [Endpoint; 2] = [Endpoint::Lo, Endpoint::Hi];

    fn sign(self) -> f64 {
        match self {
            Endpoint::Lo => -1.0,
            Endpoint::Hi => 1.0,
        }
    }

    fn index(self) -> usize {
        match self {
            Endpoint::Lo => 0,
            Endpoint::Hi => 1,
        }
    }
}

impl FromStr for Endpoint {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lo" => Ok(Endpoint::Lo),
            "hi" => Ok(Endpoint::Hi),
            _ => Err(Error::InvalidArgument(format!("unknown endpoint `{s}` (expected lo|hi)"))),
        }
    }
}

/// Limit of a probed quantity at an endpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Limit {
    Finite(f64),
    PosInfinite,
    NegInfinite,
}

impl Limit {
    pub fn is_finite(&self) -> bool {
        matches!(self, Limit::Finite(_))
    }

    pub fn value(&self) -> f64 {
        match *self {
            Limit::Finite(v) => v,
            Limit::PosInfinite => f64::INFINITY,
            Limit::NegInfinite => f64::NEG_INFINITY,
        }
    }
}

impl Serialize for Limit {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match *self {
            Limit::Finite(v) => s.serialize_f64(v),
            Limit::PosInfinite => s.serialize_str("+inf"),
            Limit::NegInfinite => s.serialize_str("-inf"),
        }
    }
}

/// One point of a probe sequence.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Probe {
    pub x: f64,
    pub value: f64,
}

/// The three probed set-functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantity {
    Psi,
    Phi,
    BigPhi,
}

// ---------------------------------------------------------------------------
// Log-scale engine

/// Accept an estimate that ran out of panels once its error is negligible;
/// the remaining error budget is then rounding noise.
fn settle(est: Result<Estimate, QuadError>) -> Result<f64> {
    match est {
        Ok(e) => Ok(e.value),
        Err(QuadError::SubdivisionLimit { value, error }) if error <= 1e-8 * value.abs() => Ok(value),
        Err(e) => Err(e.into()),
    }
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::INFINITY || b == f64::INFINITY {
        return f64::INFINITY;
    }
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    a.max(b) + (-(a - b).abs()).exp().ln_1p()
}

/// `L(y)` with a lazily grown table of values at geometric nodes.
struct LogScale<'a> {
    spec: &'a DiffusionSpec,
    table: [RefCell<Vec<f64>>; 2],
    short: Integrator,
    outer: Integrator,
    inner: Integrator,
}

impl<'a> LogScale<'a> {
    fn new(spec: &'a DiffusionSpec) -> Self {
        Self {
            spec,
            table: [RefCell::new(vec![0.0]), RefCell::new(vec![0.0])],
            short: Integrator {
                rel_tol: 1e-13,
                abs_tol: 1e-14,
                max_panels: 500,
            },
            outer: Integrator::with_rel_tol(1e-9),
            inner: Integrator::with_rel_tol(1e-10),
        }
    }

    fn log_scale_density(&self, z: f64) -> f64 {
        let nu = self.spec.diffusion(z);
        -2.0 * self.spec.drift(z) / (nu * nu)
    }

    fn ln_speed_factor(&self, y: f64) -> f64 {
        LN_2 - 2.0 * self.spec.diffusion(y).abs().ln()
    }

    fn node(&self, end: Endpoint, j: usize) -> f64 {
        if j == 0 {
            return self.spec.anchor;
        }
        self.spec.geometric_point(end, NODE_RATIO, j as f64)
    }

    /// Monotone measure of how far `x` lies from the anchor toward `end`.
    ///
    /// Plain `|x - c|` loses all resolution next to a finite endpoint.
    fn depth(&self, end: Endpoint, x: f64) -> f64 {
        if x == self.spec.anchor {
            0.0
        } else {
            self.spec.geometric_index(end, std::f64::consts::E, x)
        }
    }

    /// Largest node index whose node lies between the anchor and `y`.
    fn index_below(&self, end: Endpoint, y: f64) -> usize {
        let guess = self.spec.geometric_index(end, NODE_RATIO, y);
        let mut j = if guess.is_finite() { guess.floor().max(0.0) as usize } else { 0 };
        let d = self.depth(end, y);
        while j > 0 && self.depth(end, self.node(end, j)) > d {
            j -= 1;
        }
        while self.depth(end, self.node(end, j + 1)) <= d && self.node(end, j + 1) != self.node(end, j) {
            j += 1;
        }
        j
    }

    fn node_value(&self, end: Endpoint, j: usize) -> Result<f64> {
        let mut table = self.table[end.index()].borrow_mut();
        while table.len() <= j {
            let i = table.len() - 1;
            let (a, b) = (self.node(end, i), self.node(end, i + 1));
            let step = settle(self.short.integrate(|z| self.log_scale_density(z), a, b))?;
            let next = table[i] + step;
            table.push(next);
        }
        Ok(table[j])
    }

    /// `L(to) - L(from)` for nearby points, integrated directly so that the
    /// difference keeps full relative accuracy when `L` itself is huge.
    fn diff(&self, from: f64, to: f64) -> Result<f64> {
        settle(self.short.integrate(|z| self.log_scale_density(z), from, to))
    }

    /// `L(y)`.
    fn at(&self, y: f64) -> Result<f64> {
        if y == self.spec.anchor {
            return Ok(0.0);
        }
        let end = self.spec.side_of(y);
        let j = self.index_below(end, y);
        let base = self.node_value(end, j)?;
        let from = self.node(end, j);
        let rest = self.diff(from, y)?;
        let value = base + rest;
        if value.is_nan() {
            return Err(Error::InvalidArgument(format!("log scale density is undefined near {y}")));
        }
        Ok(value)
    }

    /// Points from `from` to `to` (both on one side of the anchor) with every
    /// node strictly between them inserted, ordered from `from` to `to`.
    fn breakpoints(&self, from: f64, to: f64) -> Vec<f64> {
        let c = self.spec.anchor;
        let end = self.spec.side_of(if to == c { from } else { to });
        let outward = self.depth(end, to) >= self.depth(end, from);
        let (near, far) = if outward { (from, to) } else { (to, from) };
        let (d_near, d_far) = (self.depth(end, near), self.depth(end, far));
        let mut pts = vec![near];
        let mut j = self.index_below(end, near) + 1;
        loop {
            let x = self.node(end, j);
            let d = self.depth(end, x);
            if d >= d_far || x == pts[pts.len() - 1] {
                break;
            }
            if d > d_near {
                pts.push(x);
            }
            j += 1;
        }
        pts.push(far);
        if !outward {
            pts.reverse();
        }
        pts
    }

    /// `L(base + dir s) - L(base)`, integrated over the offset `s` itself.
    ///
    /// Working in offsets keeps every integration length exact, which
    /// matters inside boundary layers much thinner than `|base| * EPSILON`
    /// would allow if the endpoints were formed as coordinates.
    fn rise(&self, base: f64, dir: f64, s: f64) -> Result<f64> {
        if s == 0.0 {
            return Ok(0.0);
        }
        Ok(dir * settle(self.short.integrate(|t| self.log_scale_density(base + dir * t), 0.0, s))?)
    }

    /// Offsets in `[0, len]` from `base` toward `dir` that resolve boundary
    /// layers at both ends.
    ///
    /// Near an end the kernels behave like `exp(-|L'| s)`, so panels there
    /// are a few e-folds `1 / |L'|` wide, then widen geometrically.
    fn layer_offsets(&self, base: f64, dir: f64, len: f64) -> Vec<f64> {
        const EFOLDS: [f64; 8] = [1.0, 3.0, 6.0, 10.0, 16.0, 24.0, 36.0, 50.0];
        let half = 0.5 * len;
        let ladder = |x: f64| -> Vec<f64> {
            let w = 1.0 / self.log_scale_density(x).abs();
            let mut out: Vec<f64> = EFOLDS.iter().map(|t| t * w).collect();
            let mut far = 50.0 * w * PROBE_RATIO;
            while far < half {
                out.push(far);
                far *= PROBE_RATIO;
            }
            out.retain(|&d| d > len * 1e-15 && d < half);
            out
        };
        let mut pts = vec![0.0];
        pts.extend(ladder(base));
        pts.push(half);
        pts.extend(ladder(base + dir * len).into_iter().rev().map(|d| len - d));
        pts.push(len);
        pts.dedup();
        pts
    }

    /// `ln int_0^len exp(h(s)) ds` over layer-graded offsets from `base`.
    fn log_span(&self, integrator: &Integrator, base: f64, dir: f64, len: f64, h: &dyn Fn(f64) -> Result<f64>) -> Result<f64> {
        if len == 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        let pts = self.layer_offsets(base, dir, len);
        let mut shift = f64::NEG_INFINITY;
        for w in pts.windows(2) {
            shift = shift.max(h(w[0])?).max(h(0.5 * (w[0] + w[1]))?);
        }
        shift = shift.max(h(len)?);
        if shift == f64::NEG_INFINITY || shift == f64::INFINITY {
            return Ok(shift);
        }
        let failure = RefCell::new(None);
        let est = integrator.integrate_from(
            &|t| match h(t) {
                Ok(v) => (v - shift).exp(),
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    0.0
                }
            },
            &pts,
        );
        if let Some(e) = failure.into_inner() {
            return Err(e);
        }
        Ok(settle(est)?.ln() + shift)
    }

    /// `ln int_{u0}^{u1} exp(L)`, measured from whichever end holds the
    /// larger `L` so the exponent stays small where the mass sits.
    fn ln_psi_panel(&self, u0: f64, u1: f64) -> Result<f64> {
        let (dir, len) = ((u1 - u0).signum(), (u1 - u0).abs());
        let (l0, l1) = (self.at(u0)?, self.at(u1)?);
        let (base, dir, ref_l) = if l1 > l0 { (u1, -dir, l1) } else { (u0, dir, l0) };
        Ok(self.log_span(&self.outer, base, dir, len, &|t| self.rise(base, dir, t))? + ref_l)
    }

    /// `ln int_{u0}^{u1} m`, referenced to the end with the smaller `L`.
    fn ln_speed_panel(&self, u0: f64, u1: f64) -> Result<f64> {
        let (dir, len) = ((u1 - u0).signum(), (u1 - u0).abs());
        let (l0, l1) = (self.at(u0)?, self.at(u1)?);
        let (base, dir, ref_l) = if l1 < l0 { (u1, -dir, l1) } else { (u0, dir, l0) };
        let h = |t: f64| Ok(self.ln_speed_factor(base + dir * t) - self.rise(base, dir, t)?);
        Ok(self.log_span(&self.outer, base, dir, len, &h)? - ref_l)
    }

    /// `ln int K(y, z) dz` over `z` between `y = base + dir t` and `base`,
    /// for the exit or the entrance kernel.
    fn inner(&self, kind: Quantity, base: f64, dir: f64, t: f64) -> Result<f64> {
        let y = base + dir * t;
        let ln_kernel = |d: f64| -> Result<f64> {
            // L(z) - L(y) with z = y - dir d
            let fall = self.rise(y, -dir, d)?;
            Ok(match kind {
                Quantity::Phi => self.ln_speed_factor(y - dir * d) - fall,
                _ => self.ln_speed_factor(y) + fall,
            })
        };
        self.log_span(&self.inner, y, -dir, t, &ln_kernel)
    }
}

/// Cumulative `psi`, speed mass, `phi` and `Phi`, advanced from the anchor
/// outward one panel at a time.
struct Walker<'a> {
    scale: LogScale<'a>,
    at: f64,
    ln_psi: f64,
    ln_speed: f64,
    ln_phi: f64,
    ln_big_phi: f64,
    phi: bool,
    big_phi: bool,
}

impl<'a> Walker<'a> {
    fn new(spec: &'a DiffusionSpec, phi: bool, big_phi: bool) -> Self {
        Self {
            scale: LogScale::new(spec),
            at: spec.anchor,
            ln_psi: f64::NEG_INFINITY,
            ln_speed: f64::NEG_INFINITY,
            ln_phi: f64::NEG_INFINITY,
            ln_big_phi: f64::NEG_INFINITY,
            phi,
            big_phi,
        }
    }

    fn advance(&mut self, x: f64) -> Result<()> {
        let pts = self.scale.breakpoints(self.at, x);
        for w in pts.windows(2) {
            self.step(w[0], w[1])?;
        }
        self.at = x;
        Ok(())
    }

    /// Advance across one panel. Exponents are taken relative to `L(u0)` so
    /// that only differences of `L` within the panel are ever formed.
    fn step(&mut self, u0: f64, u1: f64) -> Result<()> {
        let s = &self.scale;
        let dir = (u1 - u0).signum();
        let len = (u1 - u0).abs();
        let l0 = s.at(u0)?;
        if self.phi {
            let offset = l0 + self.ln_speed;
            let h = |t: f64| -> Result<f64> { Ok(log_add(s.rise(u0, dir, t)? + offset, s.inner(Quantity::Phi, u0, dir, t)?)) };
            self.ln_phi = log_add(self.ln_phi, s.log_span(&s.outer, u0, dir, len, &h)?);
        }
        if self.big_phi {
            let offset = self.ln_psi - l0;
            let h = |t: f64| -> Result<f64> {
                let prefix = s.ln_speed_factor(u0 + dir * t) - s.rise(u0, dir, t)? + offset;
                Ok(log_add(prefix, s.inner(Quantity::BigPhi, u0, dir, t)?))
            };
            self.ln_big_phi = log_add(self.ln_big_phi, s.log_span(&s.outer, u0, dir, len, &h)?);
        }
        self.ln_psi = log_add(self.ln_psi, s.ln_psi_panel(u0, u1)?);
        self.ln_speed = log_add(self.ln_speed, s.ln_speed_panel(u0, u1)?);
        Ok(())
    }

    fn value(&self, q: Quantity) -> f64 {
        match q {
            Quantity::Psi => self.scale.spec.side_of(self.at).sign() * self.ln_psi.exp(),
            Quantity::Phi => self.ln_phi.exp(),
            Quantity::BigPhi => self.ln_big_phi.exp(),
        }
    }
}

// ---------------------------------------------------------------------------
// Point evaluations

/// Scale function `psi(x)`, zero at the anchor.
pub fn scale_psi(x: f64, spec: &DiffusionSpec) -> Result<f64> {
    spec.check_interior(x)?;
    let mut w = Walker::new(spec, false, false);
    w.advance(x)?;
    Ok(w.value(Quantity::Psi))
}

/// Exit integral `phi(x)`, zero at the anchor.
pub fn phi_fine(x: f64, spec: &DiffusionSpec) -> Result<f64> {
    spec.check_interior(x)?;
    let mut w = Walker::new(spec, true, false);
    w.advance(x)?;
    Ok(w.value(Quantity::Phi))
}

/// Entrance integral `Phi(x)`, zero at the anchor.
pub fn entrance_integral(x: f64, spec: &DiffusionSpec) -> Result<f64> {
    spec.check_interior(x)?;
    let mut w = Walker::new(spec, false, true);
    w.advance(x)?;
    Ok(w.value(Quantity::BigPhi))
}

/// Closed-form scale function of the auxiliary diffusion with anchor 1:
///
/// ```text
/// psi(x) = e^{-M} sum_j M^j / j! * (x^{(2j+1)(1-k)} - 1) / ((2j+1)(1-k))
/// ```
///
/// All terms share the sign of `x - 1`, so the sum is accumulated in log space.
pub fn psi_series(x: f64, p: &CklsParams) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain("psi_series", x));
    }
    if x == 1.0 {
        return Ok(0.0);
    }
    let m = p.aux().m;
    let one_k = 1.0 - p.k();
    let ln_x = x.ln();
    let ln_sum = log_series(m, |j| {
        let e = (2 * j + 1) as f64 * one_k;
        let t = e * ln_x;
        // ln |x^e - 1|
        let bracket = if t > 0.0 { t + (-(-t).exp_m1()).ln() } else { (-t.exp_m1()).ln() };
        bracket - e.ln()
    })?;
    Ok(ln_x.signum() * (ln_sum - m).exp())
}

/// `lim_{x -> 0+} psi_series(x) = -e^{-M} / (1-k) * sum_j M^j / ((2j+1) j!)`.
pub fn psi_series_lower_limit(p: &CklsParams) -> Result<f64> {
    let m = p.aux().m;
    let ln_sum = log_series(m, |j| -((2 * j + 1) as f64).ln())?;
    Ok(-(ln_sum - m).exp() / (1.0 - p.k()))
}

/// `ln sum_j M^j / j! * exp(extra(j))` for `extra` of slow variation.
fn log_series(m: f64, extra: impl Fn(usize) -> f64) -> Result<f64> {
    let ln_m = m.ln();
    let mut ln_sum = f64::NEG_INFINITY;
    let mut prev = f64::NEG_INFINITY;
    for j in 0..SERIES_MAX_TERMS {
        let ln_term = j as f64 * ln_m - ln_gamma(j as f64 + 1.0) + extra(j);
        ln_sum = log_add(ln_sum, ln_term);
        if ln_term < prev && ln_term < ln_sum + (1e-15_f64).ln() {
            return Ok(ln_sum);
        }
        prev = ln_term;
    }
    Err(Error::ConvergenceFailure {
        what: "psi_series",
        terms: SERIES_MAX_TERMS,
    })
}

// ---------------------------------------------------------------------------
// Probing

/// The first `n` probe values of `q` on the way to `end`.
pub fn probe_sequence(spec: &DiffusionSpec, end: Endpoint, q: Quantity, n: usize) -> Result<Vec<Probe>> {
    let mut w = Walker::new(spec, q == Quantity::Phi, q == Quantity::BigPhi);
    let mut out = Vec::with_capacity(n);
    for i in 1..=n {
        let x = spec.geometric_point(end, PROBE_RATIO, i as f64);
        if out.last().is_some_and(|p: &Probe| p.x == x) || x == spec.endpoint(end) {
            break;
        }
        w.advance(x)?;
        let value = w.value(q);
        out.push(Probe { x, value });
        if !value.is_finite() {
            break;
        }
    }
    Ok(out)
}

enum Reading {
    Finite(f64),
    Infinite,
}

/// Decide a limit from the magnitudes seen so far, or `None` to keep probing.
fn read_limit(values: &[f64]) -> Option<Reading> {
    let last = *values.last()?;
    if !last.is_finite() {
        return Some(Reading::Infinite);
    }
    let tail = &values[values.len().saturating_sub(5)..];
    let deltas: Vec<f64> = tail
        .windows(2)
        .map(|w| {
            let d = w[1] - w[0];
            if d <= 1e-14 * w[1].abs() { 0.0 } else { d }
        })
        .collect();
    let ratios: Vec<f64> = deltas
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (_, d) if d == 0.0 => 0.0,
            (p, _) if p == 0.0 => f64::INFINITY,
            (p, d) => d / p,
        })
        .collect();
    // A falling ratio above 1 is still pre-asymptotic growth.
    let settled = ratios.windows(2).all(|w| w[1] >= 0.9 * w[0]);
    let growing = |r: &[f64]| settled && r.iter().all(|&r| r >= 0.98);
    if last > DIVERGENCE_THRESHOLD && ratios.len() >= 2 && growing(&ratios[ratios.len() - 2..]) {
        return Some(Reading::Infinite);
    }
    if tail.len() < 5 {
        return None;
    }
    if deltas.iter().all(|&d| d == 0.0) {
        return Some(Reading::Finite(last));
    }
    if growing(&ratios) {
        return Some(Reading::Infinite);
    }
    if ratios.iter().all(|&r| r <= 0.9) {
        let r = ratios[ratios.len() - 1];
        let remainder = deltas[deltas.len() - 1] * r / (1.0 - r);
        if remainder <= TAIL_REL_TOL * last {
            return Some(Reading::Finite(last + remainder));
        }
    }
    None
}

/// Limit of `q` at `end` together with the probes that decided it.
pub fn probe_limit(spec: &DiffusionSpec, end: Endpoint, q: Quantity) -> Result<(Limit, Vec<Probe>)> {
    let cap = if spec.endpoint(end).is_finite() { MAX_PROBES_FINITE } else { MAX_PROBES_INFINITE };
    let sign = if q == Quantity::Psi { end.sign() } else { 1.0 };
    let mut w = Walker::new(spec, q == Quantity::Phi, q == Quantity::BigPhi);
    let mut probes: Vec<Probe> = Vec::new();
    let mut magnitudes = Vec::new();
    for i in 1..=cap {
        let x = spec.geometric_point(end, PROBE_RATIO, i as f64);
        if probes.last().is_some_and(|p| p.x == x) || x == spec.endpoint(end) {
            break;
        }
        w.advance(x)?;
        let value = w.value(q);
        probes.push(Probe { x, value });
        magnitudes.push(value.abs());
        match read_limit(&magnitudes) {
            Some(Reading::Finite(v)) => return Ok((Limit::Finite(sign * v), probes)),
            Some(Reading::Infinite) => {
                let lim = if sign > 0.0 { Limit::PosInfinite } else { Limit::NegInfinite };
                return Ok((lim, probes));
            }
            None => {}
        }
    }
    let recent: Vec<String> = probes
        .iter()
        .rev()
        .take(5)
        .rev()
        .map(|p| format!("({:e}, {:e})", p.x, p.value))
        .collect();
    Err(Error::Inconclusive(format!(
        "{:?} of {} at {:?}: last probes {}",
        q,
        spec.name,
        end,
        recent.join(", ")
    )))
}

// ---------------------------------------------------------------------------
// Classification

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryClass {
    Regular,
    Exit,
    Entrance,
    Natural,
}

impl BoundaryClass {
    pub fn from_finiteness(phi_finite: bool, big_phi_finite: bool) -> Self {
        match (phi_finite, big_phi_finite) {
            (true, true) => BoundaryClass::Regular,
            (true, false) => BoundaryClass::Exit,
            (false, true) => BoundaryClass::Entrance,
            (false, false) => BoundaryClass::Natural,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            BoundaryClass::Regular => "regular",
            BoundaryClass::Exit => "exit",
            BoundaryClass::Entrance => "entrance",
            BoundaryClass::Natural => "natural",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SubClass {
    Reflecting,
    Sticky,
    None,
}

/// Speed-measure mass of the boundary strip at two widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StripMass {
    pub narrow_width: f64,
    pub narrow_mass: f64,
    pub wide_width: f64,
    pub wide_mass: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub psi: Vec<Probe>,
    pub phi: Vec<Probe>,
    #[serde(rename = "Phi")]
    pub big_phi: Vec<Probe>,
    pub strip_mass: Option<StripMass>,
}

/// Class of one endpoint plus the probe evidence behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundaryReport {
    pub endpoint: Endpoint,
    pub endpoint_value: f64,
    pub psi_limit: Limit,
    pub phi_limit: Limit,
    #[serde(rename = "Phi_limit")]
    pub big_phi_limit: Limit,
    classification: BoundaryClass,
    sub_class: SubClass,
    pub evidence: Evidence,
}

impl BoundaryReport {
    pub fn classification(&self) -> BoundaryClass {
        self.classification
    }

    pub fn sub_class(&self) -> SubClass {
        self.sub_class
    }

    /// The class agrees with the finiteness of the two limits.
    pub fn is_consistent(&self) -> bool {
        self.classification == BoundaryClass::from_finiteness(self.phi_limit.is_finite(), self.big_phi_limit.is_finite())
    }
}

/// Classify `end` of `spec` by the finiteness of `phi` and `Phi` there.
///
/// Regular endpoints at a finite point are split by the speed mass of the strip
/// next to the boundary: mass that shrinks with the strip means the process
/// spends no time at the boundary (reflecting).
pub fn boundary_classify(end: Endpoint, spec: &DiffusionSpec) -> Result<BoundaryReport> {
    let (psi_limit, psi) = probe_limit(spec, end, Quantity::Psi)?;
    let (phi_limit, phi) = probe_limit(spec, end, Quantity::Phi)?;
    let (big_phi_limit, big_phi) = probe_limit(spec, end, Quantity::BigPhi)?;
    let classification = BoundaryClass::from_finiteness(phi_limit.is_finite(), big_phi_limit.is_finite());
    let e = spec.endpoint(end);
    let (sub_class, strip_mass) = if classification == BoundaryClass::Regular && e.is_finite() {
        let strip = StripMass {
            narrow_width: 1e-8,
            narrow_mass: strip_speed_mass(spec, end, 1e-8)?,
            wide_width: 1e-4,
            wide_mass: strip_speed_mass(spec, end, 1e-4)?,
        };
        let sub = if strip.narrow_mass < strip.wide_mass {
            SubClass::Reflecting
        } else {
            SubClass::Sticky
        };
        (sub, Some(strip))
    } else {
        (SubClass::None, None)
    };
    Ok(BoundaryReport {
        endpoint: end,
        endpoint_value: e,
        psi_limit,
        phi_limit,
        big_phi_limit,
        classification,
        sub_class,
        evidence: Evidence {
            psi,
            phi,
            big_phi,
            strip_mass,
        },
    })
}

/// Speed mass of the strip of width `width` next to a finite endpoint.
fn strip_speed_mass(spec: &DiffusionSpec, end: Endpoint, width: f64) -> Result<f64> {
    let e = spec.endpoint(end);
    let inward = (spec.anchor - e).signum();
    if width >= (spec.anchor - e).abs() {
        return Err(Error::InvalidArgument(format!("strip width {width} reaches the anchor")));
    }
    let scale = LogScale::new(spec);
    let strip = |from: f64, to: f64| -> Result<f64> {
        let mut acc = f64::NEG_INFINITY;
        for w in scale.breakpoints(from, to).windows(2) {
            acc = log_add(acc, scale.ln_speed_panel(w[0], w[1])?);
        }
        Ok(acc)
    };
    let mut ln_mass = f64::NEG_INFINITY;
    let mut outer = e + inward * width;
    for _ in 0..400 {
        let inner = e + inward * (outer - e).abs() / PROBE_RATIO;
        if inner == outer || inner == e {
            break;
        }
        let piece = strip(outer, inner)?;
        let before = ln_mass;
        ln_mass = log_add(ln_mass, piece);
        if piece < before + (1e-12_f64).ln() {
            return Ok(ln_mass.exp());
        }
        outer = inner;
    }
    Ok(ln_mass.exp())
}

/// Exit decision at one endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExitReport {
    pub endpoint: Endpoint,
    pub psi_limit: Limit,
    /// `None` when an infinite `psi` already rules out an exit.
    pub phi_limit: Option<Limit>,
    pub exits: bool,
    pub psi_evidence: Vec<Probe>,
    pub phi_evidence: Vec<Probe>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplosionVerdict {
    pub lo: ExitReport,
    pub hi: ExitReport,
}

impl ExplosionVerdict {
    pub fn exits_lo(&self) -> bool {
        self.lo.exits
    }
    pub fn exits_hi(&self) -> bool {
        self.hi.exits
    }
}

/// Whether the diffusion reaches each endpoint in finite time.
///
/// An infinite `psi` limit settles "no exit" without computing `phi`.
pub fn explosion_verdict(spec: &DiffusionSpec) -> Result<ExplosionVerdict> {
    let one = |end: Endpoint| -> Result<ExitReport> {
        let (psi_limit, psi_evidence) = probe_limit(spec, end, Quantity::Psi)?;
        if !psi_limit.is_finite() {
            return Ok(ExitReport {
                endpoint: end,
                psi_limit,
                phi_limit: None,
                exits: false,
                psi_evidence,
                phi_evidence: Vec::new(),
            });
        }
        let (phi_limit, phi_evidence) = probe_limit(spec, end, Quantity::Phi)?;
        Ok(ExitReport {
            endpoint: end,
            psi_limit,
            phi_limit: Some(phi_limit),
            exits: phi_limit.is_finite(),
            psi_evidence,
            phi_evidence,
        })
    };
    Ok(ExplosionVerdict {
        lo: one(Endpoint::Lo)?,
        hi: one(Endpoint::Hi)?,
    })
}

// ---------------------------------------------------------------------------
// Integrability checks

/// `coef * x^expo`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerTerm {
    pub coef: f64,
    pub expo: f64,
}

impl PowerTerm {
    fn new(coef: f64, expo: f64) -> Self {
        Self { coef, expo }
    }

    fn antiderivative(&self, a: f64, b: f64) -> f64 {
        if self.expo == -1.0 {
            self.coef * (b / a).ln()
        } else {
            let e = self.expo + 1.0;
            self.coef * (b.powf(e) - a.powf(e)) / e
        }
    }
}

/// Numeric versus closed-form integral of one function over `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpotCheck {
    pub function: &'static str,
    pub lo: f64,
    pub hi: f64,
    pub numeric: f64,
    pub closed_form: f64,
    pub ok: bool,
}

/// Local-integrability flags for the measure change.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IntegrabilityFlags {
    pub nonzero_diffusion: bool,
    pub inv_diffusion_sq: bool,
    pub drift_ratio: bool,
    pub kernel_sq_ratio: bool,
    /// The short rate under the original measure stays inside `(0, inf)`.
    pub original_no_exit: bool,
    pub spot_checks: Vec<SpotCheck>,
    pub notes: Vec<String>,
}

impl IntegrabilityFlags {
    pub fn all_ok(&self) -> bool {
        self.nonzero_diffusion && self.inv_diffusion_sq && self.drift_ratio && self.kernel_sq_ratio && self.original_no_exit
    }
}

const SPOT_ANCHORS: [f64; 3] = [0.1, 1.0, 10.0];

/// Check that `nu^{-2}`, `mu nu^{-2}` (both drifts) and `q^2 nu^{-2}` are
/// locally integrable on `(0, inf)`.
///
/// Each function is a finite sum of powers of `x`, which is bounded on every
/// compact subinterval of `(0, inf)`; the closed forms (with a logarithm for
/// `x^{-1}`) are compared with quadrature of the coefficient functions on
/// `[c, c+1]`.
pub fn engelbert_schmidt_check(p: &CklsParams) -> IntegrabilityFlags {
    let (a, b, s, k) = (p.a(), p.b(), p.sigma(), p.k());
    let s2 = s * s;
    let aux = DiffusionSpec::ckls_auxiliary(p);
    let phys = DiffusionSpec::ckls_physical(p);
    let mut notes = Vec::new();

    let inv_sq = vec![PowerTerm::new(1.0 / s2, -2.0 * k)];
    let drift_q = vec![PowerTerm::new(0.5 * k, -1.0), PowerTerm::new(-b / s2, 1.0 - 2.0 * k)];
    let drift_p = vec![PowerTerm::new(a / s2, -2.0 * k), PowerTerm::new(-b / s2, 1.0 - 2.0 * k)];
    let kernel_sq = vec![
        PowerTerm::new(0.25 * k * k, -2.0),
        PowerTerm::new(-k * a / s2, -1.0 - 2.0 * k),
        PowerTerm::new(a * a / (s2 * s2), -4.0 * k),
    ];

    let nu2 = |x: f64| aux.diffusion(x).powi(2);
    let functions: [(&'static str, &[PowerTerm], Box<dyn Fn(f64) -> f64 + '_>); 4] = [
        ("inv_diffusion_sq", &inv_sq, Box::new(|x| 1.0 / nu2(x))),
        ("drift_ratio_transformed", &drift_q, Box::new(|x| aux.drift(x) / nu2(x))),
        ("drift_ratio_original", &drift_p, Box::new(|x| phys.drift(x) / nu2(x))),
        (
            "kernel_sq_ratio",
            &kernel_sq,
            Box::new(|x| kernel_q(x, p).map_or(f64::NAN, |q| q.q_squared) / nu2(x)),
        ),
    ];
    let integrator = Integrator::with_rel_tol(1e-12);
    let mut spot_checks = Vec::new();
    for (name, terms, f) in &functions {
        let finite_terms = terms.iter().all(|t| t.coef.is_finite() && t.expo.is_finite());
        for &c in &SPOT_ANCHORS {
            let numeric = integrator.integrate(f, c, c + 1.0).map(|e| e.value).unwrap_or(f64::NAN);
            let closed_form: f64 = terms.iter().map(|t| t.antiderivative(c, c + 1.0)).sum();
            let ok = finite_terms
                && numeric.is_finite()
                && numeric.abs() < DIVERGENCE_THRESHOLD
                && (numeric - closed_form).abs() <= 1e-8 * closed_form.abs().max(1e-12);
            spot_checks.push(SpotCheck {
                function: name,
                lo: c,
                hi: c + 1.0,
                numeric,
                closed_form,
                ok,
            });
        }
    }
    let passed = |prefix: &str| spot_checks.iter().filter(|s| s.function.starts_with(prefix)).all(|s| s.ok);

    let nonzero_diffusion = s > 0.0 && SPOT_ANCHORS.iter().all(|&c| aux.diffusion(c) != 0.0);
    let original_no_exit = match explosion_verdict(&phys) {
        Ok(v) => !v.exits_lo() && !v.exits_hi(),
        Err(e) => {
            notes.push(format!("original-measure exit test failed: {e}"));
            false
        }
    };
    IntegrabilityFlags {
        nonzero_diffusion,
        inv_diffusion_sq: passed("inv_diffusion_sq"),
        drift_ratio: passed("drift_ratio"),
        kernel_sq_ratio: passed("kernel_sq_ratio"),
        original_no_exit,
        spot_checks,
        notes,
    }
}

// ---------------------------------------------------------------------------
// Martingale verdict

/// Whether the stochastic exponential of the kernel is a true martingale.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleVerdict {
    pub exits_at_lo: bool,
    pub exits_at_hi: bool,
    is_true_martingale: bool,
    pub assumptions_ok: bool,
    pub anchor: f64,
    pub assumptions: IntegrabilityFlags,
    pub explosion: ExplosionVerdict,
}

impl MartingaleVerdict {
    fn new(anchor: f64, assumptions: IntegrabilityFlags, explosion: ExplosionVerdict) -> Self {
        let assumptions_ok = assumptions.all_ok();
        Self {
            exits_at_lo: explosion.exits_lo(),
            exits_at_hi: explosion.exits_hi(),
            is_true_martingale: !explosion.exits_lo() && !explosion.exits_hi() && assumptions_ok,
            assumptions_ok,
            anchor,
            assumptions,
            explosion,
        }
    }

    pub fn is_true_martingale(&self) -> bool {
        self.is_true_martingale
    }
}

/// True martingale iff the transformed-measure short rate stays in
/// `(0, inf)` and the integrability flags hold. Anchor `c = 1`.
pub fn martingale_verdict(p: &CklsParams) -> Result<MartingaleVerdict> {
    martingale_verdict_with_anchor(p, 1.0)
}

pub fn martingale_verdict_with_anchor(p: &CklsParams, anchor: f64) -> Result<MartingaleVerdict> {
    let spec = DiffusionSpec::ckls_auxiliary(p).with_anchor(anchor)?;
    let assumptions = engelbert_schmidt_check(p);
    let explosion = explosion_verdict(&spec)?;
    Ok(MartingaleVerdict::new(anchor, assumptions, explosion))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p0() -> CklsParams {
        CklsParams::reference()
    }

    #[test]
    fn brownian_scale_and_exit_integrals() {
        let bm = DiffusionSpec::brownian();
        for x in [-7.5, -1.0, 0.3, 2.0, 40.0] {
            assert_relative_eq!(scale_psi(x, &bm).unwrap(), x, max_relative = 1e-12);
            assert_relative_eq!(phi_fine(x, &bm).unwrap(), x * x, max_relative = 1e-10);
            assert_relative_eq!(entrance_integral(x, &bm).unwrap(), x * x, max_relative = 1e-10);
        }
        assert_eq!(scale_psi(0.0, &bm).unwrap(), 0.0);
        assert_eq!(phi_fine(0.0, &bm).unwrap(), 0.0);
    }

    #[test]
    fn auxiliary_scale_matches_oracle_and_series() {
        let spec = DiffusionSpec::ckls_auxiliary(&p0());
        let oracle = [
            (0.1, -0.092_180_110_633_512_72),
            (0.5, -0.092_014_981_145_331_84),
            (2.0, 765.088_881_976_970_3),
            (10.0, 3.762_758_732_191_486_8e19),
        ];
        for (x, want) in oracle {
            assert_relative_eq!(scale_psi(x, &spec).unwrap(), want, max_relative = 1e-8);
            assert_relative_eq!(psi_series(x, &p0()).unwrap(), want, max_relative = 1e-12);
        }
        assert_relative_eq!(
            psi_series(1000.0, &p0()).unwrap(),
            5.554_135_642_059_198e293,
            max_relative = 1e-10
        );
        assert_eq!(psi_series(1.0, &p0()).unwrap(), 0.0);
    }

    #[test]
    fn series_lower_limits() {
        assert_relative_eq!(
            psi_series_lower_limit(&p0()).unwrap(),
            -0.092_180_154_858_323_79,
            max_relative = 1e-13
        );
        let p1 = CklsParams::reference_sqrt();
        assert_relative_eq!(
            psi_series_lower_limit(&p1).unwrap(),
            -0.094_794_474_207_579_94,
            max_relative = 1e-13
        );
        assert_relative_eq!(psi_series(0.1, &p1).unwrap(), -0.094_779_964_423_628_67, max_relative = 1e-12);
        assert_relative_eq!(psi_series(10.0, &p1).unwrap(), 7.685_418_396_277_013e41, max_relative = 1e-11);
    }

    #[test]
    fn probed_psi_limit_at_zero_matches_series() {
        let spec = DiffusionSpec::ckls_auxiliary(&p0());
        let (lim, probes) = probe_limit(&spec, Endpoint::Lo, Quantity::Psi).unwrap();
        assert!(probes.len() >= 5);
        assert_relative_eq!(lim.value(), psi_series_lower_limit(&p0()).unwrap(), max_relative = 1e-6);
        let (hi, _) = probe_limit(&spec, Endpoint::Hi, Quantity::Psi).unwrap();
        assert_eq!(hi, Limit::PosInfinite);
    }

    #[test]
    fn exit_integral_at_zero_is_finite() {
        let spec = DiffusionSpec::ckls_auxiliary(&p0());
        let (lim, _) = probe_limit(&spec, Endpoint::Lo, Quantity::Phi).unwrap();
        assert_relative_eq!(lim.value(), 20.165_111_682_907_777, max_relative = 1e-5);
        let spec = DiffusionSpec::ckls_auxiliary(&CklsParams::reference_sqrt());
        let (lim, _) = probe_limit(&spec, Endpoint::Lo, Quantity::Phi).unwrap();
        assert_relative_eq!(lim.value(), 8.645_573_310_921_002, max_relative = 1e-5);
    }

    #[test]
    fn classification_examples() {
        let entrance = DiffusionSpec::cir(&CirParams::new(1.0, 1.0, 1.0, 1.0).unwrap());
        let r = boundary_classify(Endpoint::Lo, &entrance).unwrap();
        assert_eq!(r.classification(), BoundaryClass::Entrance);
        assert!(r.is_consistent());

        let regular = DiffusionSpec::cir(&p0().cir());
        let r = boundary_classify(Endpoint::Lo, &regular).unwrap();
        assert_eq!(r.classification(), BoundaryClass::Regular);
        assert_eq!(r.sub_class(), SubClass::Reflecting);

        let ou = DiffusionSpec::ornstein_uhlenbeck(1.0, 1.0);
        let r = boundary_classify(Endpoint::Hi, &ou).unwrap();
        assert_eq!(r.classification(), BoundaryClass::Natural);
        assert_eq!(r.sub_class(), SubClass::None);
    }

    #[test]
    fn auxiliary_origin_is_regular_for_every_anchor() {
        let r = boundary_classify(Endpoint::Lo, &DiffusionSpec::ckls_auxiliary(&p0())).unwrap();
        // mpmath, inner integral in closed form via erfi
        assert_relative_eq!(r.big_phi_limit.value(), 6_896_434_153.451_073, max_relative = 1e-8);
        for anchor in [0.5, 1.0, 2.0] {
            let spec = DiffusionSpec::ckls_auxiliary(&p0()).with_anchor(anchor).unwrap();
            let r = boundary_classify(Endpoint::Lo, &spec).unwrap();
            assert_eq!(r.classification(), BoundaryClass::Regular, "anchor {anchor}");
            assert_eq!(r.sub_class(), SubClass::Reflecting, "anchor {anchor}");
        }
    }

    #[test]
    fn explosion_examples() {
        let v = explosion_verdict(&DiffusionSpec::brownian()).unwrap();
        assert!(!v.exits_lo() && !v.exits_hi());
        let v = explosion_verdict(&DiffusionSpec::square_drift()).unwrap();
        assert!(v.exits_hi());
        let v = explosion_verdict(&DiffusionSpec::ckls_physical(&p0())).unwrap();
        assert!(!v.exits_lo() && !v.exits_hi());
    }

    #[test]
    fn integrability_flags_hold() {
        for p in [p0(), CklsParams::reference_sqrt()] {
            let flags = engelbert_schmidt_check(&p);
            assert!(flags.all_ok(), "{flags:?}");
            assert_eq!(flags.spot_checks.len(), 12);
        }
    }

    #[test]
    fn verdict_reports_the_exit_at_zero() {
        let v = martingale_verdict(&p0()).unwrap();
        assert!(v.assumptions_ok);
        assert!(v.exits_at_lo);
        assert!(!v.exits_at_hi);
        assert_eq!(v.is_true_martingale(), !v.exits_at_lo && !v.exits_at_hi && v.assumptions_ok);
    }

    #[test]
    fn bad_anchor_is_rejected() {
        assert!(DiffusionSpec::brownian().with_anchor(f64::INFINITY).is_err());
        assert!(DiffusionSpec::square_drift().with_anchor(-1.0).is_err());
        assert!(scale_psi(-1.0, &DiffusionSpec::square_drift()).is_err());
    }
}
