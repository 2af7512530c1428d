//! Fixed-point lab: constants, contraction parameters and observed ratios for a
//! few random matrix problems.

use parabolic_lab::lab::{prepare_contraction, run_fixed_point, FixedPointOptions, FixedPointProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for seed in 0..5 {
        let problem = FixedPointProblem::random(8 + 4 * seed as usize, seed)?;
        let (constants, params) = prepare_contraction(&problem)?;
        let u0 = problem.normalized(&vec![1.0; problem.dim()], problem.exponents.alpha, 0.9 * params.r);
        let report = run_fixed_point(&problem, &params, &u0, &FixedPointOptions::default())?;
        let worst = report.iterate_ratios.iter().chain(&report.pair_ratios).copied().fold(0.0, f64::max);
        println!(
            "m = {:2}, q = {}: omega0 = {:.3}, L = {:.3e}, r = {:.3e}, T = {:.3}, {} iterations, max ratio {:.2e}",
            problem.dim(),
            problem.exponents.q,
            constants.omega0,
            params.l,
            params.r,
            params.t,
            report.iterations,
            worst
        );
    }
    Ok(())
}
