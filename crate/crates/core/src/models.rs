//! Model zoo: single qubit, transverse-field Ising chain, two-level atom in a
//! photonic bath and a spinful quantum dot.
//!
//! Units are `ħ = k_B = 1`. The atom and dot take energies in GHz and bath
//! temperatures in Kelvin, converted with [`GHZ_PER_KELVIN`].

use faer::Mat;

use crate::davies::{
    self, BathSpec, DaviesGenerator, Dissipators, JumpMatrix, Representation, Statistics,
};
use crate::error::{invalid, Result};
use crate::linalg::{self, re, CMat};
use crate::operators::{pauli, HermitianOperator, InverseTemperature};

/// `k_B / h` in GHz per Kelvin: `T [GHz] = GHZ_PER_KELVIN * T [K]`.
pub const GHZ_PER_KELVIN: f64 = 20.8366;

pub fn kelvin_to_ghz(kelvin: f64) -> f64 {
    GHZ_PER_KELVIN * kelvin
}

/// How the dissipative part of a model is specified.
#[derive(Clone, Debug)]
pub enum Dissipation {
    /// Generic Davies recipe over all pairs of energy levels.
    Davies(BathSpec),
    /// Explicit jump operators. `jumps` holds the same dissipator as energy-basis
    /// amplitudes when one exists, which enables the block representation.
    Explicit { beta: InverseTemperature, operators: Vec<CMat>, jumps: Option<JumpMatrix> },
}

/// A Hamiltonian with its dissipator and the parameters it was built from.
#[derive(Clone, Debug)]
pub struct ModelInstance {
    pub name: String,
    pub hamiltonian: HermitianOperator,
    pub dissipation: Dissipation,
    pub params: Vec<(String, f64)>,
    pub units: &'static str,
}

impl ModelInstance {
    pub fn dim(&self) -> usize {
        self.hamiltonian.dim()
    }

    pub fn beta(&self) -> InverseTemperature {
        match &self.dissipation {
            Dissipation::Davies(b) => b.beta(),
            Dissipation::Explicit { beta, .. } => *beta,
        }
    }

    pub fn param(&self, key: &str) -> Option<f64> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| *v)
    }

    /// Assembles the generator. Explicit models use their energy-basis jump
    /// matrix whenever a block form is requested.
    pub fn generator(&self, representation: Representation) -> Result<DaviesGenerator> {
        let dissipators = match &self.dissipation {
            Dissipation::Davies(bath) => Dissipators::Bath(*bath),
            Dissipation::Explicit { beta, jumps: Some(jumps), .. }
                if representation != Representation::Dense =>
            {
                Dissipators::Jumps { beta: *beta, jumps: jumps.clone() }
            }
            Dissipation::Explicit { beta, operators, .. } => {
                Dissipators::Operators { beta: *beta, operators: operators.clone() }
            }
        };
        DaviesGenerator::new(&self.hamiltonian, dissipators, representation)
    }

    /// Copy of the model with the bath temperature replaced.
    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        let beta = InverseTemperature::from_temperature(temperature)?;
        match &self.dissipation {
            Dissipation::Davies(b) => {
                let mut out = self.clone();
                out.dissipation = Dissipation::Davies(BathSpec::new(beta, b.statistics(), b.gamma())?);
                Ok(out)
            }
            Dissipation::Explicit { .. } => {
                invalid("explicit models fix their rates at construction; rebuild them instead")
            }
        }
    }
}

fn temperature_beta(temperature: f64) -> Result<InverseTemperature> {
    InverseTemperature::from_temperature(temperature)
}

/// `H = (omega / 2) σ_z` with a Bose bath.
pub fn single_qubit(omega: f64, temperature: f64, gamma: f64) -> Result<ModelInstance> {
    if !(omega > 0.0) {
        return invalid(format!("omega must be > 0, got {omega}"));
    }
    let hamiltonian = HermitianOperator::new(linalg::scale(&pauli::z(), re(omega / 2.0)))?;
    let bath = BathSpec::new(temperature_beta(temperature)?, Statistics::Bose, gamma)?;
    Ok(ModelInstance {
        name: "single_qubit".into(),
        hamiltonian,
        dissipation: Dissipation::Davies(bath),
        params: vec![("omega".into(), omega), ("temperature".into(), temperature), ("gamma".into(), gamma)],
        units: "energies, temperatures and rates in units of J",
    })
}

/// `op` acting on `site` (0-based, site 0 is the most significant qubit) of an `l`-qubit chain.
pub fn site_operator(op: &CMat, site: usize, l: usize) -> CMat {
    let id = linalg::identity(2);
    let mut out = if site == 0 { op.clone() } else { id.clone() };
    for j in 1..l {
        out = linalg::kron(&out, if j == site { op } else { &id });
    }
    out
}

/// Transverse-field Ising Hamiltonian `-J Σ Z_j Z_{j+1} + h Σ X_j` with open boundaries.
pub fn tfim_hamiltonian(l: usize, j: f64, h: f64) -> Result<HermitianOperator> {
    if !(2..=6).contains(&l) {
        return invalid(format!("chain length must be in 2..=6, got {l}"));
    }
    let d = 1 << l;
    let mut m = Mat::<linalg::c64>::zeros(d, d);
    let (z, x) = (pauli::z(), pauli::x());
    for site in 0..l - 1 {
        m -= linalg::scale(&(&site_operator(&z, site, l) * &site_operator(&z, site + 1, l)), re(j));
    }
    for site in 0..l {
        m += linalg::scale(&site_operator(&x, site, l), re(h));
    }
    HermitianOperator::new(m)
}

/// Transverse-field Ising chain with a Bose bath. A degenerate spectrum
/// (for instance `h = 0`) is allowed; only the dense generator is then available.
pub fn tfim(l: usize, j: f64, h: f64, temperature: f64, gamma: f64) -> Result<ModelInstance> {
    let hamiltonian = tfim_hamiltonian(l, j, h)?;
    let bath = BathSpec::new(temperature_beta(temperature)?, Statistics::Bose, gamma)?;
    Ok(ModelInstance {
        name: "tfim".into(),
        hamiltonian,
        dissipation: Dissipation::Davies(bath),
        params: vec![
            ("L".into(), l as f64),
            ("J".into(), j),
            ("h".into(), h),
            ("temperature".into(), temperature),
            ("gamma".into(), gamma),
        ],
        units: "energies, temperatures and rates in units of J",
    })
}

/// Two-level atom in a photonic bath, basis `(|g>, |e>)`, `H = epsilon σ⁺σ⁻`,
/// absorption `σ⁺` at rate `gamma n` and emission `σ⁻` at rate `gamma (n + 1)`,
/// `n` the Bose occupation at `epsilon`. Energies in GHz, temperature in Kelvin.
pub fn two_level_atom(epsilon: f64, gamma: f64, temperature_kelvin: f64) -> Result<ModelInstance> {
    if !(epsilon > 0.0 && gamma > 0.0) {
        return invalid("epsilon and gamma must be > 0");
    }
    let beta = temperature_beta(kelvin_to_ghz(temperature_kelvin))?;
    let n = davies::bose_occupation(beta, epsilon);
    let mut raising = Mat::<linalg::c64>::zeros(2, 2);
    raising[(1, 0)] = linalg::ONE;
    let lowering = linalg::adjoint(&raising);
    let hamiltonian = HermitianOperator::new(linalg::scale(&(&raising * &lowering), re(epsilon)))?;
    let up = (gamma * n).sqrt();
    let down = (gamma * (n + 1.0)).sqrt();
    let mut amps = Mat::<f64>::zeros(2, 2);
    amps[(1, 0)] = up;
    amps[(0, 1)] = down;
    Ok(ModelInstance {
        name: "two_level_atom".into(),
        hamiltonian,
        dissipation: Dissipation::Explicit {
            beta,
            operators: vec![linalg::scale(&raising, re(up)), linalg::scale(&lowering, re(down))],
            jumps: Some(JumpMatrix::new(amps)?),
        },
        params: vec![
            ("epsilon".into(), epsilon),
            ("gamma".into(), gamma),
            ("temperature_kelvin".into(), temperature_kelvin),
            ("occupation".into(), n),
        ],
        units: "energies and rates in GHz, temperature in Kelvin",
    })
}

/// Occupation used in the quantum-dot dissipator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DotOccupation {
    /// Fermi occupation at each transition energy: `epsilon` for `0 <-> σ` and
    /// `epsilon + E_c` for `σ <-> ↑↓`. The Gibbs state is then the fixed point.
    #[default]
    PerTransition,
    /// One occupation at `epsilon` for every transition, dissipating with the full
    /// `d_σ` operators.
    Single,
}

/// Dot annihilators in the Fock basis `{|0>, |↑>, |↓>, |↑↓>}` with `|↑↓> = d↑† d↓† |0>`.
pub fn dot_annihilators() -> (CMat, CMat) {
    let mut up = Mat::<linalg::c64>::zeros(4, 4);
    up[(0, 1)] = linalg::ONE;
    up[(2, 3)] = linalg::ONE;
    let mut down = Mat::<linalg::c64>::zeros(4, 4);
    down[(0, 2)] = linalg::ONE;
    down[(1, 3)] = re(-1.0);
    (up, down)
}

/// Spinful quantum dot `H = ε(n↑ + n↓) + E_c n↑n↓` coupled to a fermionic reservoir.
/// The spin degeneracy rules out the block form. Energies in GHz, temperature in Kelvin.
pub fn quantum_dot(
    epsilon: f64,
    charging: f64,
    gamma: f64,
    temperature_kelvin: f64,
    occupation: DotOccupation,
) -> Result<ModelInstance> {
    if !(epsilon > 0.0 && charging >= 0.0 && gamma > 0.0) {
        return invalid("epsilon and gamma must be > 0 and E_c >= 0");
    }
    let beta = temperature_beta(kelvin_to_ghz(temperature_kelvin))?;
    let hamiltonian = HermitianOperator::diagonal(&[0.0, epsilon, epsilon, 2.0 * epsilon + charging]);
    let (d_up, d_down) = dot_annihilators();
    let n_low = davies::fermi_occupation(beta, epsilon);
    let n_high = davies::fermi_occupation(beta, epsilon + charging);
    let mut operators = Vec::new();
    match occupation {
        DotOccupation::Single => {
            for d in [&d_up, &d_down] {
                operators.push(linalg::scale(&linalg::adjoint(d), re((gamma * n_low).sqrt())));
                operators.push(linalg::scale(d, re((gamma * (1.0 - n_low)).sqrt())));
            }
        }
        DotOccupation::PerTransition => {
            for d in [&d_up, &d_down] {
                // split d_σ into its 0<->σ and σ<->↑↓ parts
                let low = Mat::from_fn(4, 4, |i, j| if i == 0 { d[(i, j)] } else { linalg::ZERO });
                let high = d - &low;
                for (part, n) in [(low, n_low), (high, n_high)] {
                    operators.push(linalg::scale(&linalg::adjoint(&part), re((gamma * n).sqrt())));
                    operators.push(linalg::scale(&part, re((gamma * (1.0 - n)).sqrt())));
                }
            }
        }
    }
    Ok(ModelInstance {
        name: "quantum_dot".into(),
        hamiltonian,
        dissipation: Dissipation::Explicit { beta, operators, jumps: None },
        params: vec![
            ("epsilon".into(), epsilon),
            ("charging".into(), charging),
            ("gamma".into(), gamma),
            ("temperature_kelvin".into(), temperature_kelvin),
        ],
        units: "energies and rates in GHz, temperature in Kelvin",
    })
}

/// Default parameters of the zoo.
pub mod defaults {
    use std::f64::consts::PI;

    pub const QUBIT_OMEGA: f64 = 5.0;
    pub const QUBIT_TEMPERATURE: f64 = 10.0;
    pub const QUBIT_GAMMA: f64 = 1.0;

    pub const TFIM_L: usize = 5;
    pub const TFIM_J: f64 = 1.0;
    pub const TFIM_H: f64 = 0.5;
    pub const TFIM_TEMPERATURE: f64 = 0.1;
    pub const TFIM_GAMMA: f64 = 1.0;

    pub const ATOM_EPSILON: f64 = 2.0 * PI * 4.0;
    pub const ATOM_GAMMA: f64 = 2.0 * PI * 1.41e-3;
    pub const ATOM_TEMPERATURE_KELVIN: f64 = 0.1;

    pub const DOT_EPSILON: f64 = 242.0;
    pub const DOT_CHARGING: f64 = 1189.0;
    pub const DOT_GAMMA: f64 = 1.0;
    pub const DOT_TEMPERATURE_KELVIN: f64 = 2.0;
}
