//! `u_t = ((1 + u^2) u_x)_x + |u_x|^4` with Neumann data: the generator is frozen
//! along the solution and the mean drifts only through the source.

use parabolic_lab::heat::{Diffusivity, QuasilinearHeatModel};
use parabolic_lab::mild::{run_simulation, Integrator, SolverConfig};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut model = QuasilinearHeatModel::neumann(32, 1.0, 4.0, 2.5, 0.27, Diffusivity::one_plus_square())?;
    let u0 = model.state_from_fn(|x| 1.0 + 0.2 * (PI * x).cos());
    for integrator in [Integrator::ExponentialEuler, Integrator::Etdrk2] {
        for nonlinear in [false, true] {
            model.nonlinear = nonlinear;
            let traj = run_simulation(&model, &u0, &SolverConfig::fixed(integrator, 1e-3, 0.1))?;
            println!(
                "{integrator:?}, source {}: mass {:.10} -> {:.10}",
                if nonlinear { "on" } else { "off" },
                model.mass(&u0),
                model.mass(&traj.final_state)
            );
        }
    }
    Ok(())
}
