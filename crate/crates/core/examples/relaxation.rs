//! Relaxes a qubit towards its Gibbs state and prints the free energy, the
//! entropy production and its classical/coherent split along the way.
//!
//! cargo run --release --example relaxation

use mpemba::davies::Representation;
use mpemba::models;
use mpemba::operators::{bloch_to_state, BlochVector};
use mpemba::spectral::{self, Route};
use mpemba::thermo::ThermoTrajectory;

fn main() -> mpemba::Result<()> {
    let model = models::single_qubit(5.0, 10.0, 1.0)?;
    let g = model.generator(Representation::Block)?;
    let spec = spectral::decompose(&g, Route::Block)?;
    let rho = bloch_to_state(&BlochVector::new([0.276, 0.359, 0.303])?);
    let times = spectral::linear_times(3.0, 31);
    let grid = spectral::evolve_spectral(&spec, &rho, &times)?;
    let th = ThermoTrajectory::from_grid(&grid, g.hamiltonian(), g.basis(), g.beta())?;
    let pi = th.spohn_rate.as_ref().expect("31 points carry a Spohn rate");
    println!("F_eq = {:.6}", th.equilibrium_free_energy);
    println!("{:>5} {:>10} {:>11} {:>11} {:>11} {:>11}", "t", "F_neq", "D", "P", "C", "Pi");
    for i in (0..th.len()).step_by(3) {
        println!(
            "{:5.2} {:10.6} {:11.4e} {:11.4e} {:11.4e} {:11.4e}",
            th.times[i], th.free_energy[i], th.relative_entropy[i], th.classical[i], th.coherence[i], pi[i]
        );
    }
    Ok(())
}
