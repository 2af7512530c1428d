//! Large data for `u_t = u_xx + |u|^5 u` blow up; small data decay.

use parabolic_lab::heat::SemilinearHeatModel;
use parabolic_lab::mild::{run_simulation, Integrator, SolverConfig, TimeStep};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let model = SemilinearHeatModel::dirichlet(64, 1.0, 6.0, 2.0)?;
    for amplitude in [50.0, 0.5] {
        let u0 = model.state_from_fn(|x| amplitude * (PI * x).sin());
        let mut config = SolverConfig::fixed(Integrator::Etdrk2, 1e-3, 5.0);
        config.time_step = TimeStep::Adaptive {
            dt_max: 1e-2,
            max_relative_change: 0.05,
        };
        let traj = run_simulation(&model, &u0, &config)?;
        match &traj.blowup {
            Some(b) => println!("A = {amplitude}: {} exceeded {:.3e} at t = {:.3e}", b.quantity, b.threshold, b.time),
            None => {
                let l2 = traj.orders.iter().position(|s| *s == 0.0).expect("L2 recorded");
                println!(
                    "A = {amplitude}: reached t = {} with |u|_L2 = {:.3e}",
                    traj.final_time,
                    traj.records.last().map_or(f64::NAN, |r| r.norms[l2])
                )
            }
        }
    }
    Ok(())
}
