//! Checks on random unitaries that the exact transform maximizes the free energy
//! over the unitary orbit of a state.
//!
//! cargo run --release --example majorization

use mpemba::davies::Representation;
use mpemba::models;
use mpemba::mpemba::{exact_transform, majorization_check};
use mpemba::operators::random_mixed_state;

fn main() -> mpemba::Result<()> {
    for model in [models::single_qubit(5.0, 10.0, 1.0)?, models::tfim(3, 1.0, 0.5, 1.0, 1.0)?] {
        let g = model.generator(Representation::Block)?;
        let rho = random_mixed_state(model.dim(), 20, 3)?;
        let (rho_t, _) = exact_transform(&rho, g.basis())?;
        let report = majorization_check(&rho_t, g.hamiltonian(), g.basis(), g.beta(), 200, 11)?;
        println!(
            "{}: {} samples, max excess {:.2e}, holds {}",
            model.name,
            report.samples,
            report.max_free_energy_excess,
            report.holds()
        );
    }
    Ok(())
}
