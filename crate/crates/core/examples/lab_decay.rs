//! Weighted exponential decay near the zero equilibrium and the size of the
//! neighbourhood where it holds, for the scalar logistic problem.

use parabolic_lab::lab::{verify_decay, FixedPointProblem};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let problem = FixedPointProblem::diagonal(&[1.0], 1.0, 2.0)?;
    let report = verify_decay(&problem, 0.5, &[1e-3, 1e-1, 0.5, 2.0, 5.0])?;
    for e in &report.entries {
        println!("scale {:>6}: bounded {}, quotient {:.4}", e.scale, e.bounded, e.quotient_sup);
    }
    println!(
        "M = {:.4} (linear constant {:.4}), largest passing scale {:?}",
        report.m_report, report.omega0, report.largest_passing_scale
    );
    Ok(())
}
