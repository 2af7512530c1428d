//! Small data on the periodic strip decay exponentially; fits the rate and the
//! weighted bound.

use parabolic_lab::cloud::{CloudCoefficients, CloudModel};
use parabolic_lab::mild::{fit_decay_rate, run_simulation, EvolutionModel, Integrator, SolverConfig};
use parabolic_lab::strip::{StripGeometry, StripSpace};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = StripSpace::new(StripGeometry::periodic(32, 24))?;
    let model = CloudModel::new(space, CloudCoefficients::new(1.0, 0.0, 1.0)?)?;
    let mut u0 = model.state_from_fn(|x, y| (PI * y).sin() * (1.0 + 0.5 * x.cos()));
    let h1 = model.norms(&u0, &[1.0])[0];
    u0.iter_mut().for_each(|v| *v *= 1e-2 / h1);

    let mut config = SolverConfig::fixed(Integrator::Etdrk2, 2e-3, 3.0);
    config.record_every = 25;
    let traj = run_simulation(&model, &u0, &config)?;
    let h1_index = traj.orders.iter().position(|s| *s == 1.0).expect("H1 recorded");
    let fit = fit_decay_rate(&traj.times(), &traj.series(h1_index), 0.6, 3.0)?;
    println!("fitted rate {:.4} (pi^2 = {:.4})", fit.rate, PI * PI);
    println!(
        "sup e^(rate t / 2)(|u|_H1 + t^(1/4)|u|_H3/2) = {:.3e} for |u0|_H1 = 1e-2",
        traj.exp_weighted_sup(fit.rate / 2.0)
    );
    Ok(())
}
