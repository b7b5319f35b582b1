//! Girsanov kernel and the stochastic exponential that removes the CKLS
//! drift in favour of the transformed-measure drift.
//!
//! ```text
//! q(lambda) = (k sigma / 2) lambda^{k-1} - (a / sigma) lambda^{-k}
//! M_T       = exp( int_0^T q dW - 1/2 int_0^T q^2 ds ),   W~ = W - int q ds
//! ```
//!
//! Under `Q = M_T . P` the short rate has drift
//! `k sigma^2 / 2 lambda^{2k-1} - b lambda`. `M` is evaluated in log space on
//! the Euler grid; paths whose `ln M` leaves the double range are counted and
//! dropped, not clipped.

use rand_distr::{Distribution, Exp1};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::CklsParams;
use crate::simulate::{besq_clock, ensemble, make_stream, uniform_grid, Measure, Path};
use crate::special::erfc;
use crate::stats::Accumulator;

/// States below this are lifted before the kernel is evaluated.
pub const POSITIVITY_FLOOR: f64 = 1e-12;

/// Largest `|ln M|` that still maps to a finite, nonzero double.
const LN_RANGE: f64 = 708.0;

/// Kernel value at a state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KernelEval {
    pub lambda: f64,
    pub q: f64,
    pub q_squared: f64,
}

pub fn kernel_q(lambda: f64, p: &CklsParams) -> Result<KernelEval> {
    if !(lambda > 0.0) {
        return Err(Error::domain("kernel_q", lambda));
    }
    let q = kernel_value(lambda, lambda.powf(p.k()), p);
    Ok(KernelEval { lambda, q, q_squared: q * q })
}

/// `q` from a precomputed `lambda^k`.
#[inline]
fn kernel_value(lambda: f64, lambda_pow_k: f64, p: &CklsParams) -> f64 {
    0.5 * p.k() * p.sigma() * lambda_pow_k / lambda - p.a() / (p.sigma() * lambda_pow_k)
}

/// Root of `q`: `(2a / (k sigma^2))^{1/(2k-1)}`; `None` at `k = 1/2`, where
/// `q` is a nonzero constant times `lambda^{-1/2}`.
pub fn kernel_root(p: &CklsParams) -> Option<f64> {
    (p.k() != 0.5).then(|| (2.0 * p.a() / (p.k() * p.sigma() * p.sigma())).powf(1.0 / (2.0 * p.k() - 1.0)))
}

/// Drift of the short rate under the transformed measure.
pub fn q_drift(x: f64, p: &CklsParams) -> f64 {
    0.5 * p.k() * p.sigma() * p.sigma() * x.powf(2.0 * p.k() - 1.0) - p.b() * x
}

/// `(a - b x) + q(x) sigma x^k - q_drift(x)`, zero when drift and kernel are
/// consistent.
pub fn drift_shift_residual(x: f64, p: &CklsParams) -> Result<f64> {
    let q = kernel_q(x, p)?.q;
    Ok((p.a() - p.b() * x) + q * p.sigma() * x.powf(p.k()) - q_drift(x, p))
}

/// `ln M_T` along a stored path and how many states were floored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DdValue {
    pub log_m: f64,
    pub m: f64,
    pub floored_steps: usize,
}

/// Stochastic exponential along a `P` path, using the increments that drove it.
pub fn dd_exponential(path: &Path, p: &CklsParams) -> Result<DdValue> {
    if path.measure != Measure::P {
        return Err(Error::InvalidArgument("stochastic exponential needs a P path".into()));
    }
    if path.dw.len() + 1 != path.values.len() {
        return Err(Error::InvalidArgument("path carries no Brownian increments".into()));
    }
    let mut log_m = 0.0;
    let mut floored = 0;
    for (i, &dw) in path.dw.iter().enumerate() {
        let dt = path.times[i + 1] - path.times[i];
        let mut x = path.values[i];
        if x < POSITIVITY_FLOOR {
            x = POSITIVITY_FLOOR;
            floored += 1;
        }
        let q = kernel_value(x, x.powf(p.k()), p);
        log_m += q * dw - 0.5 * q * q * dt;
    }
    if log_m.abs() > LN_RANGE {
        return Err(Error::Overflow { log_m });
    }
    Ok(DdValue { log_m, m: log_m.exp(), floored_steps: floored })
}

/// One `P` path advanced jointly with `ln M` by full-truncation Euler.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedPath {
    /// `ln M` at each requested checkpoint index.
    pub log_m: Vec<f64>,
    pub terminal: f64,
    pub floored_steps: usize,
}

/// Advance `lambda` and `ln M` together for `n` steps of size `h`, recording
/// `ln M` after the step counts in `checkpoints`.
pub fn weighted_path(
    p: &CklsParams,
    n: usize,
    h: f64,
    checkpoints: &[usize],
    rng: &mut crate::simulate::RngStream,
) -> WeightedPath {
    let (a, b, sigma, k) = (p.a(), p.b(), p.sigma(), p.k());
    let sqrt_h = h.sqrt();
    let mut x = p.lambda0();
    let mut log_m = 0.0;
    let mut floored = 0;
    let mut marks = Vec::with_capacity(checkpoints.len());
    let mut next = 0;
    for step in 1..=n {
        let xp = x.max(0.0);
        let (xf, pk) = if xp < POSITIVITY_FLOOR {
            floored += 1;
            (POSITIVITY_FLOOR, POSITIVITY_FLOOR.powf(k))
        } else {
            (xp, xp.powf(k))
        };
        let vol_pow = if xp < POSITIVITY_FLOOR { xp.powf(k) } else { pk };
        let dw = sqrt_h * rng.normal();
        let q = kernel_value(xf, pk, p);
        log_m += q * dw - 0.5 * q * q * h;
        x += (a - b * xp) * h + sigma * vol_pow * dw;
        while next < checkpoints.len() && checkpoints[next] == step {
            marks.push(log_m);
            next += 1;
        }
    }
    WeightedPath { log_m: marks, terminal: x.max(0.0), floored_steps: floored }
}

/// Mean of `M_t` at one time, with a normal-theory 95% interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: f64,
    pub mean: f64,
    pub std_err: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
}

impl Checkpoint {
    fn from_acc(t: f64, acc: &Accumulator) -> Self {
        let (mean, se) = (acc.mean(), acc.std_err());
        Self { t, mean, std_err: se, ci95_lo: mean - 1.96 * se, ci95_hi: mean + 1.96 * se }
    }

    pub fn contains(&self, v: f64) -> bool {
        self.ci95_lo <= v && v <= self.ci95_hi
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub n_paths: usize,
    pub t_max: f64,
    pub dt: f64,
    #[serde(rename = "mean_MT")]
    pub mean_mt: f64,
    pub std_err: f64,
    pub ci95_lo: f64,
    pub ci95_hi: f64,
    pub frac_overflow: f64,
    pub floored_steps: usize,
    /// Estimates at a quarter, half, three quarters and all of the horizon.
    pub checkpoints: Vec<Checkpoint>,
}

impl MartingaleReport {
    pub fn all_contain_one(&self) -> bool {
        self.checkpoints.iter().all(|c| c.contains(1.0))
    }
}

/// Monte-Carlo estimate of `E^P[M_t]` at the quarter points of `[0, t_max]`.
pub fn martingale_estimate(
    p: &CklsParams,
    t_max: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<MartingaleReport> {
    let (n, h) = uniform_grid(t_max, dt)?;
    let marks: Vec<usize> = (1..=4).map(|j| ((n * j) as f64 / 4.0).round().max(1.0) as usize).collect();
    let paths = ensemble(n_paths, seed, |rng| weighted_path(p, n, h, &marks, rng));

    let mut accs = vec![Accumulator::default(); marks.len()];
    let mut overflow = 0usize;
    let mut floored = 0usize;
    for path in &paths {
        floored += path.floored_steps;
        if path.log_m.iter().any(|l| l.abs() > LN_RANGE) {
            overflow += 1;
            continue;
        }
        for (acc, &l) in accs.iter_mut().zip(&path.log_m) {
            acc.push(l.exp());
        }
    }
    let frac_overflow = overflow as f64 / n_paths as f64;
    if frac_overflow > 0.01 {
        return Err(Error::OverflowFraction { fraction: frac_overflow });
    }
    let checkpoints: Vec<Checkpoint> = marks
        .iter()
        .zip(&accs)
        .map(|(&m, acc)| Checkpoint::from_acc(m as f64 * h, acc))
        .collect();
    let last = *checkpoints.last().expect("four checkpoints");
    Ok(MartingaleReport {
        n_paths,
        t_max,
        dt: h,
        mean_mt: last.mean,
        std_err: last.std_err,
        ci95_lo: last.ci95_lo,
        ci95_hi: last.ci95_hi,
        frac_overflow,
        floored_steps: floored,
        checkpoints,
    })
}

/// Importance-sampling estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeightedEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub frac_overflow: f64,
}

/// `E^P[M_T f(lambda_T)]`, an estimate of `E^Q[f(lambda_T)]`.
pub fn q_expectation<F>(
    payoff: F,
    p: &CklsParams,
    t_max: f64,
    dt: f64,
    n_paths: usize,
    seed: u64,
) -> Result<WeightedEstimate>
where
    F: Fn(f64) -> f64 + Sync,
{
    let (n, h) = uniform_grid(t_max, dt)?;
    let paths = ensemble(n_paths, seed, |rng| weighted_path(p, n, h, &[n], rng));
    let mut acc = Accumulator::default();
    let mut overflow = 0usize;
    for path in &paths {
        let l = path.log_m[0];
        if l.abs() > LN_RANGE {
            overflow += 1;
            continue;
        }
        acc.push(l.exp() * payoff(path.terminal));
    }
    let frac_overflow = overflow as f64 / n_paths as f64;
    if frac_overflow > 0.01 {
        return Err(Error::OverflowFraction { fraction: frac_overflow });
    }
    Ok(WeightedEstimate { mean: acc.mean(), std_err: acc.std_err(), frac_overflow })
}

/// Tail report for the exponential-kernel example that breaks Novikov's
/// condition while keeping the exponential integrable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NovikovReport {
    pub threshold: f64,
    pub n_samples: usize,
    pub empirical_tail: f64,
    pub tail_std_err: f64,
    pub analytic_tail: f64,
    pub mean_integral: f64,
    pub mean_std_err: f64,
}

/// With `Z ~ Exp(1)` and `q_t = sqrt(Z / T)` on `[0, T]`, `int q^2 = Z`, so
/// `P(int q^2 > C) = e^{-C}` while `E exp(int q^2 / 2) = +inf`.
pub fn novikov_counterexample(threshold: f64, n_samples: usize, seed: u64) -> Result<NovikovReport> {
    if !(threshold >= 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be >= 0, got {threshold}")));
    }
    let horizon = 1.0;
    let mut rng = make_stream(seed, 0);
    let mut tail = Accumulator::default();
    let mut integral = Accumulator::default();
    for _ in 0..n_samples {
        let z: f64 = Exp1.sample(rng.rng());
        let q = (z / horizon).sqrt();
        let int_q2 = q * q * horizon;
        integral.push(int_q2);
        tail.push(if int_q2 > threshold { 1.0 } else { 0.0 });
    }
    Ok(NovikovReport {
        threshold,
        n_samples,
        empirical_tail: tail.mean(),
        tail_std_err: tail.std_err(),
        analytic_tail: (-threshold).exp(),
        mean_integral: integral.mean(),
        mean_std_err: integral.std_err(),
    })
}

/// `1 - E^P[M_t]`: the chance that the transformed-measure short rate
/// reaches 0 before `t`.
///
/// Under `Q`, `T(lambda)` is a square-root diffusion with unit Bessel
/// dimension, i.e. `e^{-a* t} B(s(t))^2` for a Brownian motion `B` from
/// `sqrt(x0)`. It reaches 0 by `t` with probability
/// `erfc(sqrt(x0 / (2 s(t))))`.
pub fn martingale_deficit(p: &CklsParams, t: f64) -> Result<f64> {
    if !(t > 0.0) {
        return Err(Error::domain("martingale_deficit t", t));
    }
    let c = p.cir();
    Ok(erfc((c.x0 / (2.0 * besq_clock(&c, t))).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulate::{em_ckls_p, Scheme};
    use approx::assert_relative_eq;

    #[test]
    fn kernel_at_reference() {
        let p = CklsParams::reference();
        let q = kernel_q(1.0, &p).unwrap().q;
        assert_relative_eq!(q, 0.1125 - 0.2 / 0.3, max_relative = 1e-14);
        let root = kernel_root(&p).unwrap();
        assert!(kernel_q(root, &p).unwrap().q.abs() < 1e-12);
        assert!(kernel_q(1e-10, &p).unwrap().q < -1e6);
        assert!(kernel_q(0.0, &p).is_err());
        assert!(kernel_root(&CklsParams::reference_sqrt()).is_none());
    }

    #[test]
    fn drift_shift_at_one() {
        let p = CklsParams::reference();
        assert!(drift_shift_residual(1.0, &p).unwrap().abs() < 1e-15);
        assert_relative_eq!(q_drift(1.0, &p), -0.46625, max_relative = 1e-14);
    }

    fn one_step_path(x0: f64, dw: f64, dt: f64) -> Path {
        Path {
            times: vec![0.0, dt],
            values: vec![x0, x0],
            measure: Measure::P,
            scheme: Scheme::EmFullTruncation,
            seed: 0,
            stream: 0,
            dw: vec![dw],
            truncated_steps: 0,
            censored_from: None,
        }
    }

    #[test]
    fn single_step_exponential() {
        let p = CklsParams::reference();
        let q = kernel_q(1.0, &p).unwrap().q;
        let v = dd_exponential(&one_step_path(1.0, 0.0, 0.01), &p).unwrap();
        assert_relative_eq!(v.m, (-0.5 * q * q * 0.01).exp(), max_relative = 1e-14);
        assert!(v.m < 1.0);
    }

    #[test]
    fn empty_path_has_unit_weight() {
        let p = CklsParams::reference();
        let mut path = one_step_path(1.0, 0.0, 0.01);
        path.times.pop();
        path.values.pop();
        path.dw.clear();
        assert_eq!(dd_exponential(&path, &p).unwrap().m, 1.0);
    }

    #[test]
    fn streamed_weight_matches_stored_path() {
        let p = CklsParams::reference();
        let path = em_ckls_p(&p, 1.0, 0.01, &mut make_stream(4, 2)).unwrap();
        let stored = dd_exponential(&path, &p).unwrap();
        let streamed = weighted_path(&p, 100, 0.01, &[100], &mut make_stream(4, 2));
        assert_relative_eq!(stored.log_m, streamed.log_m[0], max_relative = 1e-12);
        assert_relative_eq!(path.terminal(), streamed.terminal, max_relative = 1e-12);
    }

    #[test]
    fn overflow_is_reported() {
        let p = CklsParams::reference();
        let v = dd_exponential(&one_step_path(1e-30, 0.0, 1.0), &p);
        assert!(matches!(v, Err(Error::Overflow { .. })));
    }

    #[test]
    fn novikov_zero_threshold() {
        let r = novikov_counterexample(0.0, 1000, 1).unwrap();
        assert_eq!(r.empirical_tail, 1.0);
        assert_eq!(r.analytic_tail, 1.0);
    }

    #[test]
    fn deficit_is_tiny_at_the_reference_points() {
        assert!(martingale_deficit(&CklsParams::reference(), 1.0).unwrap() < 1e-30);
        let d1 = martingale_deficit(&CklsParams::reference_sqrt(), 1.0).unwrap();
        // mpmath: 4.83326464713057773e-9
        assert_relative_eq!(d1, 4.833_264_647_130_578e-9, max_relative = 1e-10);
        let low = CklsParams::reference().with_lambda0(1e-3).unwrap();
        // mpmath: 0.026115604609998181795
        assert_relative_eq!(martingale_deficit(&low, 1.0).unwrap(), 0.026_115_604_609_998_18, max_relative = 1e-9);
    }
}
