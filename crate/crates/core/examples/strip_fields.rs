//! Spectral fields on the periodic strip: norms, the cumulative operator and snapshots.

use parabolic_lab::strip::{SpectralField, StripGeometry, StripSpace};
use std::f64::consts::PI;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let space = StripSpace::new(StripGeometry::periodic(32, 24))?;
    let u = SpectralField::from_fn(&space, |x, y| (2.0 * x).cos() * (3.0 * PI * y).sin());
    for s in [0.0, 0.5, 1.0, 1.5] {
        println!("|u|_H^{s} = {:.12}", u.sobolev_norm(s));
    }
    let w = SpectralField::from_fn(&space, |x, y| x.sin() * (y * (1.0 - y)).exp());
    let tw = w.apply_t();
    println!("|w| = {:.6}, |T w| = {:.6}", w.sobolev_norm(0.0), tw.sobolev_norm(0.0));

    let mut bytes = Vec::new();
    u.write_snapshot(&mut bytes)?;
    let back = SpectralField::read_snapshot(&space, bytes.as_slice())?;
    println!("snapshot of {} bytes, round-trip sup error {:e}", bytes.len(), (&back - &u).sup_norm());
    Ok(())
}
