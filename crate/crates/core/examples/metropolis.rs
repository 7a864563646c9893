//! Both annealing searches on a TFIM chain with h = J: the swap search removes the
//! overlap of a T = J Gibbs state with the slowest mode of a T = 4J bath, and the
//! unitary search removes a random state's overlap with the slowest complex pair.
//!
//! cargo run --release --example metropolis

use mpemba::davies::Representation;
use mpemba::metropolis::{self, MetropolisConfig};
use mpemba::models;
use mpemba::operators::{random_mixed_state, thermal_populations, InverseTemperature};
use mpemba::spectral::{self, Route};

fn main() -> mpemba::Result<()> {
    let hot = models::tfim(5, 1.0, 1.0, 4.0, 1.0)?.generator(Representation::Block)?;
    let spec = spectral::decompose(&hot, Route::Block)?;
    let p = thermal_populations(hot.basis().energies(), InverseTemperature::new(1.0)?);
    let targets = metropolis::diagonal_targets(&spec, &[2])?;
    let swap = metropolis::swap_metropolis(&targets, &p, &MetropolisConfig::swap(vec![2], 1))?;
    println!("swap: cost {:.3e}, converged at {:?}", swap.cost, swap.converged_at);

    let cold = models::tfim(5, 1.0, 1.0, 0.1, 1.0)?.generator(Representation::Block)?;
    let spec = spectral::decompose(&cold, Route::Block)?;
    let rho = random_mixed_state(32, 1000, 7)?;
    let modes = vec![2, 3];
    println!("unitary: initial cost {:.3e}", metropolis::cost(&spec, &rho, &modes)?);
    let out = metropolis::unitary_metropolis(&spec, &rho, &MetropolisConfig::unitary(modes, 1), false)?;
    println!("unitary: cost {:.3e}, converged at {:?}", out.cost, out.converged_at);
    Ok(())
}
