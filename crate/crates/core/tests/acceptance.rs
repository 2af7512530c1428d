//! Acceptance suite. Runs without the libtest harness so every criterion prints a
//! `PASS`/`FAIL` line; exits non-zero if any criterion fails.
//!
//! `cargo test --test acceptance -- <filter>` runs the criteria whose name
//! contains `<filter>`.

use parabolic_lab::cloud::{
    analytic_bound_nonperiodic, periodic_stability_condition, spectral_bound_numeric, CloudCoefficients, CloudModel,
};
use parabolic_lab::exponents::{beta_constant, quasilinear_scaling_index, semilinear_scaling_index};
use parabolic_lab::heat::{
    scaling_roundtrip_test, scaling_transform, Basis, FourierBox, ScalingKind, SemilinearHeatModel,
};
use parabolic_lab::lab::{
    bernoulli_solution, prepare_contraction, run_fixed_point, verify_decay, FixedPointOptions, FixedPointProblem,
};
use parabolic_lab::linalg::{cvec_norm, C64};
use parabolic_lab::mild::{
    convergence_order, fit_decay_rate, picard_solve, run_simulation, EvolutionModel, Integrator, SolverConfig,
    TimeStep,
};
use parabolic_lab::quadrature::adaptive_gk;
use parabolic_lab::strip::{SpectralField, StripGeometry, StripSpace};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

/// `Ok` carries the measured quantities, `Err` says what went wrong.
type Outcome = Result<String, String>;

struct Criterion {
    id: u32,
    name: &'static str,
    budget: Duration,
    run: fn() -> Outcome,
}

const fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

const CRITERIA: &[Criterion] = &[
    Criterion { id: 1, name: "cumulative-operator-contracts", budget: secs(10), run: cumulative_operator_contracts },
    Criterion { id: 2, name: "spectral-bound-exact-without-coupling", budget: secs(5), run: spectral_bound_exact_without_coupling },
    Criterion { id: 3, name: "truncated-strip-bound-below-analytic", budget: secs(120), run: truncated_strip_bound_below_analytic },
    Criterion { id: 4, name: "periodic-condition-gives-negative-bound", budget: secs(120), run: periodic_condition_gives_negative_bound },
    Criterion { id: 5, name: "small-cloud-data-decay", budget: secs(60), run: small_cloud_data_decay },
    Criterion { id: 6, name: "integrator-self-convergence", budget: secs(120), run: integrator_self_convergence },
    Criterion { id: 7, name: "picard-matches-etdrk2", budget: secs(60), run: picard_matches_etdrk2 },
    Criterion { id: 8, name: "scaling-round-trip", budget: secs(120), run: scaling_round_trip },
    Criterion { id: 9, name: "critical-seminorm-invariance", budget: secs(10), run: critical_seminorm_invariance },
    Criterion { id: 10, name: "lab-contraction", budget: secs(60), run: lab_contraction },
    Criterion { id: 11, name: "lab-decay-closed-form", budget: secs(30), run: lab_decay_closed_form },
    Criterion { id: 12, name: "beta-constants-vs-quadrature", budget: secs(5), run: beta_constants_vs_quadrature },
    Criterion { id: 13, name: "heat-blowup-detection", budget: secs(60), run: heat_blowup_detection },
    Criterion { id: 14, name: "continuous-dependence", budget: secs(60), run: continuous_dependence },
];

fn main() {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for c in CRITERIA {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let elapsed = start.elapsed();
        let outcome = match outcome {
            Ok(detail) if elapsed > c.budget => Err(format!("{detail}; over the {:?} budget", c.budget)),
            other => other,
        };
        let (tag, detail) = match &outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {} ({:.2} s): {detail}", c.id, c.name, elapsed.as_secs_f64());
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn ok<T, E: std::fmt::Display>(r: Result<T, E>) -> Result<T, String> {
    r.map_err(|e| e.to_string())
}

fn scale(state: &mut [C64], factor: f64) {
    state.iter_mut().for_each(|v| *v *= factor);
}

fn relative_difference(a: &[C64], b: &[C64]) -> f64 {
    let diff: Vec<C64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    cvec_norm(&diff) / cvec_norm(b)
}

fn cumulative_operator_contracts() -> Outcome {
    let space = ok(StripSpace::new(StripGeometry::periodic(16, 24)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..1000 {
        // random trigonometric-in-x, polynomial-in-y fields
        let a: [f64; 6] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let shift = rng.random_range(0.0..2.0 * PI);
        let w = SpectralField::from_fn(&space, |x, y| {
            (a[0] + a[1] * y + a[2] * y * y) * (x + shift).cos()
                + (a[3] + a[4] * (3.0 * PI * y).cos()) * (2.0 * x).sin()
                + a[5] * (-(x * x)).exp()
        });
        let gap = w.apply_t().l2_norm_quadrature() - w.l2_norm_quadrature();
        worst = worst.max(gap);
        ensure(gap <= 1e-10, || format!("|Tw| - |w| = {gap:e}"))?;
    }
    Ok(format!("max |Tw| - |w| = {worst:.3e} over 1000 fields"))
}

fn spectral_bound_exact_without_coupling() -> Outcome {
    let space = ok(StripSpace::new(StripGeometry::periodic(16, 48)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let c = ok(CloudCoefficients::new(rng.random_range(0.1..3.0), rng.random_range(-5.0..5.0), 0.0))?;
        let bound = ok(spectral_bound_numeric(&space, &c, None))?.bound;
        let exact = c.eta - c.nu * PI * PI;
        worst = worst.max((bound - exact).abs());
        ensure((bound - exact).abs() <= 1e-6, || format!("{c:?}: {bound} vs {exact}"))?;
    }
    Ok(format!("max |s - (eta - nu pi^2)| = {worst:.3e}"))
}

fn random_coefficients(rng: &mut ChaCha8Rng) -> Result<CloudCoefficients, String> {
    ok(CloudCoefficients::new(
        rng.random_range(0.1..3.0),
        rng.random_range(-5.0..10.0),
        rng.random_range(-6.0..6.0),
    ))
}

fn truncated_strip_bound_below_analytic() -> Outcome {
    let space = ok(StripSpace::new(StripGeometry::truncated(8.0 * PI, 128, 24)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut margin = f64::INFINITY;
    for _ in 0..100 {
        let c = random_coefficients(&mut rng)?;
        let bound = ok(spectral_bound_numeric(&space, &c, None))?.bound;
        let analytic = analytic_bound_nonperiodic(&c);
        margin = margin.min(analytic - bound);
        ensure(bound <= analytic + 1e-6, || format!("{c:?}: {bound} > {analytic}"))?;
    }
    Ok(format!("min analytic - numeric = {margin:.3e} over 100 triples"))
}

fn periodic_condition_gives_negative_bound() -> Outcome {
    let space = ok(StripSpace::new(StripGeometry::periodic(32, 24)))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut accepted = 0;
    let mut top = f64::NEG_INFINITY;
    while accepted < 100 {
        let c = random_coefficients(&mut rng)?;
        // the condition, written out independently of the library predicate
        let holds = c.eta + c.beta * c.beta / (16.0 * c.nu) < PI * PI * c.nu;
        ensure(holds == periodic_stability_condition(&c), || format!("{c:?}: predicate disagrees"))?;
        if !holds {
            continue;
        }
        accepted += 1;
        let bound = ok(spectral_bound_numeric(&space, &c, None))?.bound;
        top = top.max(bound);
        ensure(bound < 0.0, || format!("{c:?}: bound {bound} >= 0"))?;
    }
    Ok(format!("max bound = {top:.4} over 100 admissible triples"))
}

fn cloud_model(nx: usize, ny: usize, nu: f64, eta: f64, beta: f64) -> Result<CloudModel, String> {
    let space = ok(StripSpace::new(StripGeometry::periodic(nx, ny)))?;
    ok(CloudModel::new(space, ok(CloudCoefficients::new(nu, eta, beta))?))
}

fn smooth_cloud_data(model: &CloudModel, h1: f64) -> Vec<C64> {
    let mut u0 = model.state_from_fn(|x, y| {
        (PI * y).sin() * (1.0 + 0.5 * x.cos()) + 0.3 * x.sin() * (2.0 * PI * y).sin()
    });
    let n = model.norms(&u0, &[1.0])[0];
    scale(&mut u0, h1 / n);
    u0
}

fn small_cloud_data_decay() -> Outcome {
    let model = cloud_model(64, 48, 1.0, 0.0, 1.0)?;
    let u0 = smooth_cloud_data(&model, 1e-2);
    let h1_0 = model.norms(&u0, &[1.0])[0];
    let mut config = SolverConfig::fixed(Integrator::Etdrk2, 1e-3, 5.0);
    config.record_every = 10;
    let traj = ok(run_simulation(&model, &u0, &config))?;
    ensure(traj.blowup.is_none(), || "blow-up flagged".into())?;
    let h1 = traj.orders.iter().position(|s| *s == 1.0).ok_or("H1 not recorded")?;
    let fit = ok(fit_decay_rate(&traj.times(), &traj.series(h1), 1.0, 5.0))?;
    let bound = traj.exp_weighted_sup(fit.rate / 2.0);
    ensure(fit.rate > 0.0, || format!("fitted rate {}", fit.rate))?;
    ensure(bound.is_finite() && bound < 10.0 * h1_0, || format!("weighted sup {bound} vs {}", 10.0 * h1_0))?;
    Ok(format!("rate {:.4}, weighted sup {bound:.4e} < {:.1e}", fit.rate, 10.0 * h1_0))
}

fn integrator_self_convergence() -> Outcome {
    let model = cloud_model(16, 16, 1.0, 0.5, 2.0)?;
    let u0 = smooth_cloud_data(&model, 1.0);
    let t_end = 0.25;
    let final_state = |integ: Integrator, dt: f64| -> Result<Vec<C64>, String> {
        Ok(ok(run_simulation(&model, &u0, &SolverConfig::fixed(integ, dt, t_end)))?.final_state)
    };
    let dts: Vec<f64> = (6..=10).map(|k| 2f64.powi(-k)).collect();
    let mut details = Vec::new();
    for (integ, expected, tol) in [(Integrator::Etdrk2, 2.0, 0.3), (Integrator::ExponentialEuler, 1.0, 0.2)] {
        let reference = final_state(integ, 2f64.powi(-14))?;
        let errors = dts
            .iter()
            .map(|&dt| Ok(relative_difference(&final_state(integ, dt)?, &reference)))
            .collect::<Result<Vec<_>, String>>()?;
        let order = convergence_order(&dts, &errors);
        details.push(format!("{integ:?} slope {order:.3}"));
        ensure((order - expected).abs() <= tol, || format!("{integ:?}: slope {order}, errors {errors:?}"))?;
    }
    Ok(details.join(", "))
}

fn picard_matches_etdrk2() -> Outcome {
    let model = cloud_model(16, 16, 1.0, 0.5, 2.0)?;
    let u0 = smooth_cloud_data(&model, 1.0);
    let t = 0.1;
    let etd = ok(run_simulation(&model, &u0, &SolverConfig::fixed(Integrator::Etdrk2, 1e-4, t)))?;
    let mut config = SolverConfig::fixed(Integrator::Picard, t, t);
    config.picard.tol = 1e-12;
    let picard = ok(picard_solve(&model, &u0, t, &config))?;
    let report = picard.picard.as_ref().ok_or("no Picard report")?;
    ensure(report.converged, || format!("Picard did not converge: {:?}", report.distances))?;
    let disc = relative_difference(&picard.final_state, &etd.final_state);
    ensure(disc < 1e-5, || format!("relative discrepancy {disc:e}"))?;
    Ok(format!("relative discrepancy {disc:.3e} after {} iterations", report.iterations))
}

fn gaussian(boxed: &FourierBox, amplitude: f64) -> Vec<C64> {
    boxed.from_grid(&boxed.nodes().iter().map(|x| amplitude * (-x * x).exp()).collect::<Vec<_>>())
}

fn scaling_round_trip() -> Outcome {
    let boxed = FourierBox::free_space();
    let kappa = 5.0;
    let u0 = gaussian(&boxed, 0.8);
    let config = SolverConfig::fixed(Integrator::Etdrk2, 1e-3, 0.5);
    let mut model = ok(SemilinearHeatModel::free_space(boxed.clone(), kappa))?;
    let mut details = Vec::new();
    for lambda in [2.0, 4.0] {
        model.nonlinear = true;
        let nonlinear = ok(scaling_roundtrip_test(&model, &boxed, &u0, lambda, ScalingKind::Semilinear, kappa, &config))?;
        model.nonlinear = false;
        let heat = ok(scaling_roundtrip_test(&model, &boxed, &u0, lambda, ScalingKind::Semilinear, kappa, &config))?;
        let (d, h) = (nonlinear.relative_discrepancy, heat.relative_discrepancy);
        details.push(format!("lambda {lambda}: {d:.2e} / heat {h:.2e}"));
        ensure(d <= 1e-3 && h <= 1e-6, || details.join(", "))?;
    }
    Ok(details.join(", "))
}

fn critical_seminorm_invariance() -> Outcome {
    let boxed = FourierBox::free_space();
    let basis = Basis::Fourier(boxed.clone());
    let u0 = gaussian(&boxed, 0.8);
    let mut details = Vec::new();
    for (kind, kappa, s_c) in [
        (ScalingKind::Semilinear, 5.0, semilinear_scaling_index(1, 2.0, 5.0)),
        (ScalingKind::Quasilinear, 3.0, quasilinear_scaling_index(1, 2.0, 3.0)),
    ] {
        let before = basis.homogeneous_seminorm(&u0, s_c);
        for lambda in [2.0, 4.0] {
            let scaled = ok(scaling_transform(&boxed, &u0, lambda, kind, kappa))?;
            let ratio = basis.homogeneous_seminorm(&scaled, s_c) / before;
            details.push(format!("{kind:?} s_c = {s_c} lambda {lambda}: {ratio:.6}"));
            ensure((ratio - 1.0).abs() < 0.01, || details.join(", "))?;
        }
    }
    Ok(details.join(", "))
}

fn lab_contraction() -> Outcome {
    let mut worst: f64 = 0.0;
    for seed in 0..50u64 {
        let m = 2 + (seed as usize * 7) % 31;
        let problem = ok(FixedPointProblem::random(m, seed))?;
        let (_, params) = ok(prepare_contraction(&problem))?;
        ensure(params.all_hold(), || format!("seed {seed}: inequalities fail"))?;
        let u0 = problem.normalized(&vec![1.0; m], problem.exponents.alpha, 0.9 * params.r);
        let report = ok(run_fixed_point(&problem, &params, &u0, &FixedPointOptions::default()))?;
        let top = report.iterate_ratios.iter().chain(&report.pair_ratios).copied().fold(0.0, f64::max);
        worst = worst.max(top);
        ensure(top <= 0.5, || format!("seed {seed} (m = {m}): ratio {top}"))?;
        ensure(report.converged, || format!("seed {seed}: not converged"))?;
    }
    Ok(format!("max observed ratio {worst:.3e} over 50 problems"))
}

fn lab_decay_closed_form() -> Outcome {
    let cases: [(&[f64], f64, f64); 3] = [(&[1.0], 1.0, 2.0), (&[1.0, 2.5, 6.0], 0.7, 2.0), (&[1.5, 4.0], 1.2, 3.0)];
    let mut details = Vec::new();
    for (mags, strength, q) in cases {
        let problem = ok(FixedPointProblem::diagonal(mags, strength, q))?;
        let varpi = 0.5 * mags[0];
        let report = ok(verify_decay(&problem, varpi, &[1e-3, 1e-2, 0.1]))?;
        ensure(report.entries.iter().all(|e| e.bounded), || format!("{mags:?}: unbounded small data"))?;
        ensure(report.m_report < 5.0 * report.omega0, || {
            format!("{mags:?}: M {} vs omega0 {}", report.m_report, report.omega0)
        })?;

        // Picard trajectory against the componentwise Bernoulli solution
        let (_, params) = ok(prepare_contraction(&problem))?;
        let y0: Vec<f64> = (0..mags.len()).map(|k| (0.1 - 0.03 * k as f64) * params.r).collect();
        let run = ok(run_fixed_point(&problem, &params, &y0, &FixedPointOptions::default()))?;
        let mut err: f64 = 0.0;
        for (t, u) in run.mesh.iter().zip(&run.trajectory) {
            for (k, lambda) in mags.iter().enumerate() {
                err = err.max((u[k] - bernoulli_solution(*lambda, strength, q, y0[k], *t)).abs());
            }
        }
        ensure(err < 1e-8, || format!("{mags:?}: closed-form error {err:e}"))?;
        details.push(format!("{mags:?}: M {:.3} / omega0 {:.3}, error {err:.1e}", report.m_report, report.omega0));
    }
    Ok(details.join("; "))
}

/// `B(a, b)` by adaptive quadrature after substitutions that remove both endpoint
/// singularities: `s = w^{1/a}` near 0 and `1 - s = w^{1/b}` near 1.
fn beta_by_quadrature(a: f64, b: f64) -> f64 {
    let left = |w: f64| (1.0 - w.powf(1.0 / a)).powf(b - 1.0) / a;
    let right = |w: f64| (1.0 - w.powf(1.0 / b)).powf(a - 1.0) / b;
    adaptive_gk(&left, 0.0, 0.5f64.powf(a), 1e-14) + adaptive_gk(&right, 0.0, 0.5f64.powf(b), 1e-14)
}

fn beta_constants_vs_quadrature() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let q = rng.random_range(1.2..5.0);
        let gamma = rng.random_range(0.0..0.5);
        let theta = rng.random_range(gamma..1.0);
        let mu = rng.random_range(0.0..0.95 / q);
        let value = ok(beta_constant(gamma, theta, mu, q))?;
        let oracle = beta_by_quadrature(1.0 + gamma - theta, 1.0 - mu * q);
        let rel = (value - oracle).abs() / oracle;
        worst = worst.max(rel);
        ensure(rel <= 1e-10, || format!("gamma {gamma} theta {theta} mu {mu} q {q}: {value} vs {oracle}"))?;
    }
    Ok(format!("max relative error {worst:.3e}"))
}

fn heat_blowup_detection() -> Outcome {
    let model = ok(SemilinearHeatModel::dirichlet(64, 1.0, 6.0, 2.0))?;
    let adaptive = |t_end: f64| {
        let mut config = SolverConfig::fixed(Integrator::Etdrk2, 1e-3, t_end);
        config.time_step = TimeStep::Adaptive {
            dt_max: 1e-2,
            max_relative_change: 0.05,
        };
        config
    };
    let large = ok(run_simulation(&model, &model.state_from_fn(|x| 50.0 * (PI * x).sin()), &adaptive(1.0)))?;
    let event = large.blowup.as_ref().ok_or("no blow-up flag for large data")?;
    ensure(event.time < 1.0, || format!("flag at t = {}", event.time))?;
    ensure(event.value > event.threshold, || format!("{event:?}"))?;
    // every monitored quantity rises monotonically up to the flag
    let mut growth = Vec::new();
    let source: Vec<f64> = large.records.iter().map(|r| r.source_norm).collect();
    let monitored = large
        .orders
        .iter()
        .enumerate()
        .map(|(i, order)| (format!("H^{order:.3}"), large.series(i)))
        .chain([("source".to_string(), source)]);
    for (name, series) in monitored {
        ensure(series.windows(2).all(|w| w[1] >= w[0]), || format!("{name} norm not monotone"))?;
        let factor = series.last().copied().unwrap_or(0.0) / series[0];
        ensure(factor > 1.0, || format!("{name} norm did not grow"))?;
        growth.push(format!("{name} x{factor:.3e}"));
    }

    let small = ok(run_simulation(&model, &model.state_from_fn(|x| 0.5 * (PI * x).sin()), &adaptive(5.0)))?;
    ensure(small.blowup.is_none(), || format!("small data flagged: {:?}", small.blowup))?;
    ensure((small.final_time - 5.0).abs() < 1e-9, || format!("small data stopped at {}", small.final_time))?;
    Ok(format!(
        "{} flagged at t = {:.3e} after {} records ({}); small data reached t = 5",
        event.quantity,
        event.time,
        large.records.len(),
        growth.join(", ")
    ))
}

fn continuous_dependence() -> Outcome {
    let model = cloud_model(16, 16, 1.0, 0.0, 1.0)?;
    let u0 = smooth_cloud_data(&model, 0.2);
    let order = model.space_order(model.exponents().alpha);
    let mut direction = model.state_from_fn(|x, y| (2.0 * x).cos() * y * (1.0 - y) + 0.2 * (3.0 * PI * y).sin());
    let n = model.norms(&direction, &[order])[0];
    scale(&mut direction, 1.0 / n);

    let mut config = SolverConfig::fixed(Integrator::Etdrk2, 1e-3, 1.0);
    config.snapshot_every = Some(10);
    let base = ok(run_simulation(&model, &u0, &config))?;
    let mut constants = Vec::new();
    for delta in [1e-3, 5e-4, 2.5e-4] {
        let perturbed: Vec<C64> = u0.iter().zip(&direction).map(|(u, d)| u + d * delta).collect();
        let run = ok(run_simulation(&model, &perturbed, &config))?;
        let sup = base
            .snapshots
            .iter()
            .zip(&run.snapshots)
            .map(|((_, a), (_, b))| {
                let diff: Vec<C64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
                model.norms(&diff, &[order])[0]
            })
            .fold(0.0, f64::max);
        constants.push(sup / delta);
    }
    let (lo, hi) = constants.iter().fold((f64::INFINITY, 0.0f64), |(l, h), c| (l.min(*c), h.max(*c)));
    let variation = (hi - lo) / lo;
    ensure(variation < 0.2, || format!("fitted constants {constants:?}"))?;
    Ok(format!("fitted constants {constants:.4?}, variation {:.2}%", 100.0 * variation))
}
