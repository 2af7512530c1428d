//! Critical exponents of the two heat-equation recipes and their Beta constants.

use parabolic_lab::exponents::{quasilinear_recipe, semilinear_recipe};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let semi = semilinear_recipe(1, 2.0, 6.0)?;
    println!(
        "semilinear n=1 p=2 kappa=6: s_c = {:.4}, alpha = {:.4}, xi = {:.4}, mu = {:.4}",
        semi.s_c, semi.exponents.alpha, semi.exponents.xi, semi.exponents.mu
    );
    let quasi = quasilinear_recipe(1, 2.5, 4.0, 0.27)?;
    let e = quasi.exponents;
    println!(
        "quasilinear n=1 p=2.5 kappa=4 tau=0.27: beta = {:.4}, alpha = {:.4}, xi = {:.4}",
        e.beta_exp.unwrap_or(f64::NAN),
        e.alpha,
        e.xi
    );
    for (name, b) in &e.beta_constants()?.b_theta {
        println!("  B_{name} = {b:.10}");
    }
    match semilinear_recipe(1, 2.0, 3.0) {
        Ok(_) => println!("kappa = 3 accepted"),
        Err(err) => println!("kappa = 3 rejected: {err}"),
    }
    Ok(())
}
