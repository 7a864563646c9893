//! The two experimental instances: a two-level atom and a spinful quantum dot,
//! both in GHz with bath temperatures in Kelvin. Prints their fixed-point residual
//! and slowest modes; the dot is degenerate and goes through the dense route.
//!
//! cargo run --release --example model_zoo

use mpemba::davies::Representation;
use mpemba::models::{self, defaults, DotOccupation};
use mpemba::spectral::{self, Route};

fn main() -> mpemba::Result<()> {
    let atom = models::two_level_atom(
        defaults::ATOM_EPSILON,
        defaults::ATOM_GAMMA,
        defaults::ATOM_TEMPERATURE_KELVIN,
    )?;
    let dot = models::quantum_dot(
        defaults::DOT_EPSILON,
        defaults::DOT_CHARGING,
        defaults::DOT_GAMMA,
        defaults::DOT_TEMPERATURE_KELVIN,
        DotOccupation::PerTransition,
    )?;
    for model in [atom, dot] {
        let g = model.generator(Representation::Dense)?;
        let spec = spectral::decompose(&g, Route::Dense)?;
        println!("{} [{}]", model.name, model.units);
        println!("  fixed-point residual {:.2e}", g.fixed_point_residual());
        for k in 2..=spec.len().min(6) {
            let l = spec.eigenvalue(k);
            println!("  λ{k} = {:+.6} {:+.6}i", l.re, l.im);
        }
    }
    Ok(())
}
