//! Acceptance suite: one PASS/FAIL line per criterion, details indented
//! below it. Exits non-zero when any criterion fails.
//!
//! ```text
//! P0 = (a 0.2, b 0.5, sigma 0.3, k 0.75, lambda0 1, L 2)
//! P1 = P0 with k = 0.5
//! ```

use std::process::ExitCode;
use std::time::{Duration, Instant};

use ckls_core::analytic::{
    cir_mean_var_cov, cir_moment_n, cir_moment_n_binomial, cir_transition_density, s_moments, BracketPower,
    CklsStationary,
};
use ckls_core::feller::{
    boundary_classify, martingale_verdict, martingale_verdict_with_anchor, probe_limit, probe_sequence,
    psi_series, scale_psi, BoundaryClass, DiffusionSpec, Endpoint, Quantity,
};
use ckls_core::girsanov::{drift_shift_residual, kernel_q, martingale_estimate, novikov_counterexample, q_drift, q_expectation};
use ckls_core::quad::Integrator;
use ckls_core::simulate::{
    cir_via_besq_terminal, em_ckls_p, em_terminal, ensemble, ergodic_average, exact_lambda_q, sample_cir_exact,
    uniform_grid, SquareRoot,
};
use ckls_core::special::normal_cdf;
use ckls_core::stats::{ks_distance, mean_var, raw_moment, Histogram};
use ckls_core::{CirParams, CklsParams, Result};

const SEED: u64 = 42;

struct Outcome {
    pass: bool,
    summary: String,
    details: Vec<String>,
}

impl Outcome {
    fn new(summary: impl Into<String>) -> Self {
        Self { pass: true, summary: summary.into(), details: Vec::new() }
    }

    /// Record a check; the criterion fails if any check does.
    fn check(&mut self, ok: bool, detail: String) {
        self.pass &= ok;
        self.details.push(format!("{} {detail}", if ok { "ok  " } else { "MISS" }));
    }

    fn runtime(&mut self, elapsed: Duration, limit: Duration) {
        let ok = elapsed <= limit;
        self.check(ok, format!("runtime {:.2} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()));
    }
}

struct Criterion {
    id: u32,
    name: &'static str,
    limit: Duration,
    run: fn() -> Result<Outcome>,
}

fn p0() -> CklsParams {
    CklsParams::reference()
}

fn p1() -> CklsParams {
    CklsParams::reference_sqrt()
}

fn points() -> [(&'static str, CklsParams); 2] {
    [("P0", p0()), ("P1", p1())]
}

fn log_grid(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    let n = ((hi / lo).log10() * per_decade as f64).round() as usize;
    (0..=n).map(|i| lo * (hi / lo).powf(i as f64 / n as f64)).collect()
}

fn z(mean: f64, se: f64, target: f64) -> f64 {
    (mean - target).abs() / se
}

// ---------------------------------------------------------------------------

fn transform_suite() -> Result<Outcome> {
    let mut out = Outcome::new("power transform round trip and ODE residual");
    for (name, p) in points() {
        let tr = p.transform();
        let (mut round_trip, mut residual) = (0.0f64, 0.0f64);
        for x in log_grid(1e-6, 1e6, 100) {
            let back = tr.inverse(tr.forward(x)?)?;
            round_trip = round_trip.max((back - x).abs() / x);
            residual = residual.max(tr.ode_residual(x)?.abs());
        }
        out.check(round_trip <= 1e-12, format!("{name}: max round-trip error {round_trip:.2e} (<= 1e-12)"));
        out.check(residual <= 1e-10, format!("{name}: max ODE residual {residual:.2e} (<= 1e-10)"));
    }
    Ok(out)
}

fn drift_identity() -> Result<Outcome> {
    let mut out = Outcome::new("drift shift (mu + q nu) equals the transformed drift");
    for (name, p) in points() {
        let mut worst = 0.0f64;
        for x in log_grid(1e-4, 1e4, 100) {
            let q = kernel_q(x, &p)?.q;
            let scale = (p.a() - p.b() * x).abs() + (q * p.sigma() * x.powf(p.k())).abs() + q_drift(x, &p).abs();
            worst = worst.max(drift_shift_residual(x, &p)?.abs() / scale);
        }
        out.check(worst <= 1e-12, format!("{name}: max relative residual {worst:.2e} (<= 1e-12)"));
    }
    Ok(out)
}

fn martingale_check() -> Result<Outcome> {
    let mut out = Outcome::new("E^P[M_t] 95% CI contains 1 at the quarter points");
    for (name, p) in points() {
        let report = martingale_estimate(&p, 1.0, 1e-3, 100_000, SEED)?;
        for c in &report.checkpoints {
            out.check(
                c.contains(1.0),
                format!("{name}: t = {:.2} mean {:.6} CI [{:.6}, {:.6}]", c.t, c.mean, c.ci95_lo, c.ci95_hi),
            );
        }
        out.check(
            report.frac_overflow < 0.01,
            format!("{name}: overflow fraction {:.2e} (< 1%)", report.frac_overflow),
        );
    }
    Ok(out)
}

fn q_law_check() -> Result<Outcome> {
    let mut out = Outcome::new("exact Q sampler reproduces the Gaussian law of S_1");
    let p = p0();
    let grid = [0.0, 1.0];
    let samples: Vec<f64> = ensemble(100_000, SEED, |rng| exact_lambda_q(&p, &grid, rng).map(|path| path.terminal()))
        .into_iter()
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .map(|l| l.powf(1.0 - p.k()))
        .collect();
    let s = s_moments(1.0, 1.0, &p)?;
    let mv = mean_var(&samples);
    let zm = z(mv.mean, mv.mean_se, s.mean);
    let zv = z(mv.var, mv.var_se, s.var);
    out.check(zm <= 3.0, format!("mean {:.6} vs {:.6}, |z| = {zm:.2} (<= 3)", mv.mean, s.mean));
    out.check(zv <= 3.0, format!("variance {:.6e} vs {:.6e}, |z| = {zv:.2} (<= 3)", mv.var, s.var));
    let sd = s.var.sqrt();
    let ks = ks_distance(&samples, |x| normal_cdf((x - s.mean) / sd));
    out.check(ks <= 0.01, format!("KS distance {ks:.4} (<= 0.01), N = 1e5"));
    Ok(out)
}

fn cir_consistency() -> Result<Outcome> {
    let mut out = Outcome::new("Euler square-root process matches the transition law at t = 1");
    let c = p0().cir();
    let (n, h) = uniform_grid(1.0, 1e-3)?;
    let sde = SquareRoot::from(&c);
    let samples: Vec<f64> = ensemble(100_000, SEED, |rng| em_terminal(&sde, c.x0, n, h, rng).0);
    let m = cir_mean_var_cov(1.0, 1.0, &c)?;
    let mv = mean_var(&samples);
    let zm = z(mv.mean, mv.mean_se, m.mean);
    let zv = z(mv.var, mv.var_se, m.variance);
    out.check(zm <= 3.0, format!("mean {:.5} vs {:.5}, |z| = {zm:.2} (<= 3)", mv.mean, m.mean));
    out.check(zv <= 3.0, format!("variance {:.5} vs {:.5}, |z| = {zv:.2} (<= 3)", mv.var, m.variance));

    let density = |x: f64| if x > 0.0 { cir_transition_density(x, c.x0, 1.0, &c).unwrap_or(f64::NAN) } else { 0.0 };
    let integ = Integrator::with_rel_tol(1e-10);
    let hist = Histogram::new(&samples, 0.0, 30.0, 60);
    let l1 = hist.l1_to(|a, b| integ.integrate(density, a, b).map(|e| e.value).unwrap_or(f64::NAN));
    out.check(l1 <= 0.05, format!("histogram L1 {l1:.4} (<= 0.05), 60 bins on [0, 30]"));

    let mass = integ.graded(density, 0.0, 200.0)?.value;
    out.check((mass - 1.0).abs() <= 1e-6, format!("density mass {mass:.12} (1 +- 1e-6)"));
    Ok(out)
}

fn besq_representation() -> Result<Outcome> {
    let mut out = Outcome::new("squared Bessel time change reproduces the mean at t = 1");
    let c = p0().cir();
    let samples: Vec<f64> = ensemble(100_000, SEED, |rng| cir_via_besq_terminal(&c, 1.0, 1000, rng));
    let target = cir_mean_var_cov(1.0, 1.0, &c)?.mean;
    let mv = mean_var(&samples);
    let zm = z(mv.mean, mv.mean_se, target);
    out.check(zm <= 3.0, format!("mean {:.5} vs {:.5}, |z| = {zm:.2} (<= 3)", mv.mean, target));
    Ok(out)
}

fn stationarity() -> Result<Outcome> {
    let mut out = Outcome::new("long P path settles on the stationary law");
    let p = p0();
    let law = CklsStationary::new(&p)?;
    let path = em_ckls_p(&p, 500.0, 1e-3, &mut ckls_core::simulate::make_stream(SEED, 0))?;
    let hist = Histogram::new(&path.values, 0.0, 1.5, 60);
    let l1 = hist.l1_to(|a, b| law.mass_between(a, b).unwrap_or(f64::NAN));
    out.check(l1 <= 0.1, format!("histogram L1 {l1:.4} (<= 0.1), 60 bins on [0, 1.5]"));
    let avg = ergodic_average(&path, 1.0)?;
    let rel = (avg - law.mean).abs() / law.mean;
    out.check(rel <= 0.05, format!("time average {avg:.5} vs {:.5}, rel. error {rel:.4} (<= 5%)", law.mean));
    Ok(out)
}

fn feller_suite() -> Result<Outcome> {
    let mut out = Outcome::new("Feller boundary engine");
    for (name, p) in points() {
        let spec = DiffusionSpec::ckls_auxiliary(&p);
        let mut worst = 0.0f64;
        for x in log_grid(0.1, 10.0, 20) {
            let (numeric, series) = (scale_psi(x, &spec)?, psi_series(x, &p)?);
            if series != 0.0 {
                worst = worst.max((numeric - series).abs() / series.abs());
            }
        }
        out.check(worst <= 1e-6, format!("(a) {name}: psi quadrature vs series, max rel. diff {worst:.2e} (<= 1e-6)"));
    }
    for (name, p) in points() {
        let spec = DiffusionSpec::ckls_auxiliary(&p);
        let (limit, _) = probe_limit(&spec, Endpoint::Lo, Quantity::Psi)?;
        let v = limit.value();
        let bound = -1.0 / (1.0 - p.k());
        out.check(v < 0.0 && v > bound, format!("(b) {name}: psi(0+) = {v:.10} in ({bound}, 0)"));
    }
    for (name, p) in points() {
        let spec = DiffusionSpec::ckls_auxiliary(&p);
        // 14 quartering steps from the anchor reach below 1e-8
        let probes = probe_sequence(&spec, Endpoint::Lo, Quantity::Phi, 14)?;
        let last = probes.last().expect("at least one probe");
        let max = probes.iter().map(|pr| pr.value).fold(f64::NEG_INFINITY, f64::max);
        out.check(
            max > 1e6,
            format!("(c) {name}: phi probes reach {max:.6} at x = {:.2e} (must exceed 1e6)", last.x),
        );
    }
    {
        let base = p0().cir();
        let ratio_two = CirParams::new(base.a_star, 4.0 * base.b_star, base.sigma_star, base.x0)?;
        let entrance = boundary_classify(Endpoint::Lo, &DiffusionSpec::cir(&ratio_two))?.classification();
        let regular = boundary_classify(Endpoint::Lo, &DiffusionSpec::cir(&base))?.classification();
        let natural = boundary_classify(Endpoint::Hi, &DiffusionSpec::cir(&base))?.classification();
        out.check(
            entrance == BoundaryClass::Entrance,
            format!("(d) ratio 2 origin: {} (expect entrance)", entrance.as_str()),
        );
        out.check(
            regular == BoundaryClass::Regular,
            format!("(d) ratio 1/2 origin: {} (expect regular)", regular.as_str()),
        );
        out.check(natural == BoundaryClass::Natural, format!("(d) +inf: {} (expect natural)", natural.as_str()));
    }
    for (name, p) in points() {
        let v = martingale_verdict(&p)?;
        out.check(
            v.is_true_martingale(),
            format!(
                "(e) {name}: is_true_martingale = {} (exits at 0: {}, at +inf: {})",
                v.is_true_martingale(),
                v.exits_at_lo,
                v.exits_at_hi
            ),
        );
    }
    for (name, p) in points() {
        let verdicts = [0.5, 1.0, 2.0]
            .iter()
            .map(|&c| martingale_verdict_with_anchor(&p, c).map(|v| (v.exits_at_lo, v.exits_at_hi, v.is_true_martingale())))
            .collect::<Result<Vec<_>>>()?;
        let same = verdicts.windows(2).all(|w| w[0] == w[1]);
        out.check(same, format!("(f) {name}: (exit 0, exit inf, martingale) for c = 0.5, 1, 2: {verdicts:?}"));
    }
    Ok(out)
}

fn reweighting_triangle() -> Result<Outcome> {
    let mut out = Outcome::new("E^P[M_1 T(lambda_1)] equals the transformed mean");
    for (name, p) in points() {
        let tr = p.transform();
        let est = q_expectation(|l| tr.forward_unchecked(l.max(0.0)), &p, 1.0, 1e-3, 100_000, SEED)?;
        let target = cir_mean_var_cov(1.0, 1.0, &p.cir())?.mean;
        let zm = z(est.mean, est.std_err, target);
        out.check(zm <= 3.0, format!("{name}: {:.5} +- {:.5} vs {target:.5}, |z| = {zm:.2} (<= 3)", est.mean, est.std_err));
    }
    Ok(out)
}

fn novikov() -> Result<Outcome> {
    let mut out = Outcome::new("Novikov counterexample tail and mean");
    let r = novikov_counterexample(1.0, 100_000, SEED)?;
    let zt = z(r.empirical_tail, r.tail_std_err, r.analytic_tail);
    let zm = z(r.mean_integral, r.mean_std_err, 1.0);
    out.check(zt <= 3.0, format!("P(int q^2 > 1) = {:.5} vs e^-1 = {:.5}, |z| = {zt:.2}", r.empirical_tail, r.analytic_tail));
    out.check(zm <= 3.0, format!("mean int q^2 = {:.5} vs 1, |z| = {zm:.2}", r.mean_integral));
    Ok(out)
}

fn moment_resolution() -> Result<Outcome> {
    let mut out = Outcome::new("n-th moment convention settled by exact sampling");
    let c = p0().cir();
    let samples: Vec<f64> = ensemble(1_000_000, SEED, |rng| sample_cir_exact(&c, c.x0, 1.0, rng))
        .into_iter()
        .collect::<Result<_>>()?;
    let mc: Vec<(u32, f64, f64)> = (2..=4).map(|n| {
        let (m, se) = raw_moment(&samples, n as i32);
        (n, m, se)
    }).collect();
    for (label, power) in [("bracket^(2j)", BracketPower::Double), ("bracket^j", BracketPower::Single)] {
        let zs: Vec<f64> = mc.iter().map(|&(n, m, se)| z(m, se, cir_moment_n_binomial(n, 1.0, &c, power))).collect();
        let rejected = zs.iter().any(|&v| v > 3.0);
        out.check(
            rejected,
            format!("binomial form with {label} rejected: |z| for n = 2, 3, 4 = {:.1}, {:.1}, {:.1}", zs[0], zs[1], zs[2]),
        );
    }
    for &(n, m, se) in &mc {
        let exact = cir_moment_n(n, 1.0, &c)?;
        let zn = z(m, se, exact);
        out.check(zn <= 3.0, format!("adopted E[X_1^{n}] = {exact:.6} vs MC {m:.6} +- {se:.6}, |z| = {zn:.2} (<= 3), N = 1e6"));
    }
    Ok(out)
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { id: 1, name: "transform suite", limit: Duration::from_secs(1), run: transform_suite },
        Criterion { id: 2, name: "algebraic Girsanov identity", limit: Duration::from_secs(1), run: drift_identity },
        Criterion { id: 3, name: "martingale check", limit: Duration::from_secs(120), run: martingale_check },
        Criterion { id: 4, name: "Q-law check", limit: Duration::from_secs(30), run: q_law_check },
        Criterion { id: 5, name: "CIR consistency", limit: Duration::from_secs(120), run: cir_consistency },
        Criterion { id: 6, name: "BESQ representation", limit: Duration::from_secs(60), run: besq_representation },
        Criterion { id: 7, name: "stationarity / ergodicity", limit: Duration::from_secs(120), run: stationarity },
        Criterion { id: 8, name: "Feller suite", limit: Duration::from_secs(30), run: feller_suite },
        Criterion { id: 9, name: "reweighting triangle", limit: Duration::from_secs(120), run: reweighting_triangle },
        Criterion { id: 10, name: "Novikov counterexample", limit: Duration::from_secs(10), run: novikov },
        Criterion { id: 11, name: "moment-formula resolution", limit: Duration::from_secs(120), run: moment_resolution },
    ];
    let mut failed = Vec::new();
    for c in &criteria {
        let start = Instant::now();
        let outcome = (c.run)();
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(mut o) => {
                o.runtime(elapsed, c.limit);
                o
            }
            Err(e) => Outcome { pass: false, summary: format!("error: {e}"), details: Vec::new() },
        };
        println!("{} {:>2} {}: {}", if outcome.pass { "PASS" } else { "FAIL" }, c.id, c.name, outcome.summary);
        for d in &outcome.details {
            println!("        {d}");
        }
        if !outcome.pass {
            failed.push(c.id);
        }
    }
    if failed.is_empty() {
        println!("all {} criteria pass", criteria.len());
        ExitCode::SUCCESS
    } else {
        println!("failed criteria: {failed:?}");
        ExitCode::FAILURE
    }
}
