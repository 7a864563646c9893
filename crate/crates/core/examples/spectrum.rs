//! Builds Davies generators for the single qubit and a TFIM chain, decomposes them
//! through the block route and prints the slowest modes with the gap classification.
//!
//! cargo run --release --example spectrum

use mpemba::davies::Representation;
use mpemba::models;
use mpemba::spectral::{self, Route};

fn main() -> mpemba::Result<()> {
    let instances = [models::single_qubit(5.0, 10.0, 1.0)?, models::tfim(4, 1.0, 0.5, 0.1, 1.0)?];
    for model in &instances {
        let g = model.generator(Representation::Block)?;
        let spec = spectral::decompose(&g, Route::Block)?;
        let (gap, kind) = spectral::spectral_gap(&spec);
        println!("{} (d = {}): gap {gap:.6} {kind:?}", model.name, model.dim());
        println!("  fixed-point residual {:.2e}", g.fixed_point_residual());
        for k in 1..=spec.len().min(8) {
            let l = spec.eigenvalue(k);
            let what = if spec.mode(k).is_population() { "population" } else { "coherence" };
            println!("  λ{k:<2} = {:+.6} {:+.6}i  {what}", l.re, l.im);
        }
    }
    Ok(())
}
