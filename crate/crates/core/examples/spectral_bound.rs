//! Spectral bound of the linearised cloud operator against the closed-form bounds.

use parabolic_lab::cloud::{
    analytic_bound_nonperiodic, periodic_stability_condition, spectral_bound_numeric, CloudCoefficients,
};
use parabolic_lab::strip::{StripGeometry, StripSpace};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let truncated = StripSpace::new(StripGeometry::truncated(8.0 * PI, 128, 32))?;
    let periodic = StripSpace::new(StripGeometry::periodic(32, 32))?;
    for (nu, eta, beta) in [(1.0, 0.0, 0.0), (1.0, 5.0, 1.0), (0.5, 1.0, 3.0), (2.0, -1.0, 6.0)] {
        let c = CloudCoefficients::new(nu, eta, beta)?;
        let strip = spectral_bound_numeric(&truncated, &c, None)?;
        let circle = spectral_bound_numeric(&periodic, &c, None)?;
        println!(
            "nu={nu} eta={eta} beta={beta}: truncated {:+.6} (analytic {:+.6}), periodic {:+.6}, condition {}",
            strip.bound,
            analytic_bound_nonperiodic(&c),
            circle.bound,
            periodic_stability_condition(&c)
        );
    }
    Ok(())
}
