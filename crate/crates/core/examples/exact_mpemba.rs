//! The exact transform on a qubit: removes every coherent amplitude, raises the
//! free energy and still relaxes first. Prints the certificate.
//!
//! cargo run --release --example exact_mpemba

use mpemba::davies::Representation;
use mpemba::operators::{bloch_to_state, state_to_bloch, BlochVector};
use mpemba::spectral::{self, Route};
use mpemba::{models, mpemba as mp};

fn main() -> mpemba::Result<()> {
    let model = models::single_qubit(5.0, 10.0, 1.0)?;
    let g = model.generator(Representation::Block)?;
    let spec = spectral::decompose(&g, Route::Block)?;
    let rho = bloch_to_state(&BlochVector::new([0.276, 0.359, 0.303])?);
    let horizon = 12.0 / spec.eigenvalue(2).re.abs();
    let run = mp::run(&g, &spec, &rho, &spectral::linear_times(horizon, 1200))?;
    let r = state_to_bloch(&run.transformed)?.components();
    println!("r' = ({:.4}, {:.4}, {:.4})", r[0], r[1], r[2]);
    print!("{}", run.certificate);
    Ok(())
}
