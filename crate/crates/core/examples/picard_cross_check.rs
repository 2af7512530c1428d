//! The mild-solution Picard iteration and ETDRK2 agree on a short cloud run.

use parabolic_lab::cloud::{CloudCoefficients, CloudModel};
use parabolic_lab::linalg::cvec_norm;
use parabolic_lab::mild::{picard_solve, run_simulation, Integrator, SolverConfig};
use parabolic_lab::strip::{StripGeometry, StripSpace};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = StripSpace::new(StripGeometry::periodic(16, 16))?;
    let model = CloudModel::new(space, CloudCoefficients::new(1.0, 0.5, 2.0)?)?;
    let u0 = model.state_from_fn(|x, y| 0.5 * (PI * y).sin() * (1.0 + x.cos()));
    let t = 0.1;
    let etd = run_simulation(&model, &u0, &SolverConfig::fixed(Integrator::Etdrk2, 1e-4, t))?;
    let mut config = SolverConfig::fixed(Integrator::Picard, t, t);
    config.picard.tol = 1e-12;
    let picard = picard_solve(&model, &u0, t, &config)?;
    let report = picard.picard.as_ref().expect("picard report");
    let diff: Vec<_> = etd.final_state.iter().zip(&picard.final_state).map(|(a, b)| a - b).collect();
    println!(
        "{} Picard iterations, max ratio {:.3e}, relative discrepancy {:.3e}",
        report.iterations,
        report.ratios.iter().copied().fold(0.0, f64::max),
        cvec_norm(&diff) / cvec_norm(&etd.final_state)
    );
    Ok(())
}
