//! Non-equilibrium free energy, relative entropies, the population/coherence
//! split of the entropy production, distances and the Spohn rate.
//!
//! Entropies are in nats. `x ln x` vanishes for `x <= 1e-300`.

use std::io::{self, Write};

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat};
use crate::operators::{self, DensityMatrix, HermitianOperator, InverseTemperature, SpectralBasis};
use crate::spectral::EvolutionGrid;

const SUPPORT_TOL: f64 = 1e-12;

fn xlogx(x: f64) -> f64 {
    if x <= 1e-300 {
        0.0
    } else {
        x * x.ln()
    }
}

/// Von Neumann entropy `-Tr ρ ln ρ`.
pub fn entropy(rho: &DensityMatrix) -> Result<f64> {
    Ok(-rho.eigenvalues()?.into_iter().map(xlogx).sum::<f64>())
}

/// Shannon entropy of a probability vector.
pub fn shannon(p: &[f64]) -> f64 {
    -p.iter().copied().map(xlogx).sum::<f64>()
}

fn finite_beta(beta: InverseTemperature) -> Result<f64> {
    match beta {
        InverseTemperature::Finite(b) if b > 0.0 => Ok(b),
        _ => invalid("free energies need a finite, positive inverse temperature"),
    }
}

/// `F_neq = Tr(H ρ) + Tr(ρ ln ρ) / beta`.
pub fn noneq_free_energy(
    rho: &DensityMatrix,
    h: &HermitianOperator,
    beta: InverseTemperature,
) -> Result<f64> {
    let b = finite_beta(beta)?;
    if rho.dim() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: rho.dim() });
    }
    let energy = linalg::trace_product(h.matrix(), rho.matrix()).re;
    Ok(energy - entropy(rho)? / b)
}

/// Quantum relative entropy `Tr ρ (ln ρ - ln σ)`; `f64::INFINITY` when the
/// support of `ρ` is not contained in that of `σ`.
pub fn relative_entropy(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::DimensionMismatch { expected: sigma.dim(), found: rho.dim() });
    }
    let (s_vals, w) = linalg::eigh(sigma.matrix())?;
    let rho_w = &(w.adjoint() * rho.matrix()) * &w;
    let mut cross = 0.0;
    for (i, &s) in s_vals.iter().enumerate() {
        let weight = rho_w[(i, i)].re;
        if s <= SUPPORT_TOL {
            if weight > SUPPORT_TOL {
                return Ok(f64::INFINITY);
            }
            continue;
        }
        cross += weight * s.ln();
    }
    Ok(-entropy(rho)? - cross)
}

/// `D(ρ ‖ τ_β)` using the exact `ln τ_β` in the energy eigenbasis, as `P + C`.
pub fn relative_entropy_to_thermal(
    rho: &DensityMatrix,
    basis: &SpectralBasis,
    beta: InverseTemperature,
) -> Result<f64> {
    let (p, c) = entropy_split(rho, basis, beta)?;
    Ok(p + c)
}

/// `(1 + e) ln(1 + e) - e`, accurate for small `e`.
fn bregman_ratio(e: f64) -> f64 {
    if e.abs() < 1e-2 {
        // Σ_{k≥2} (-e)^k / (k (k - 1))
        let mut acc = 0.0;
        let mut pow = e * e;
        for k in 2..12 {
            acc += pow / (k * (k - 1)) as f64;
            pow *= -e;
        }
        acc
    } else {
        (1.0 + e) * e.ln_1p() - e
    }
}

/// `Σ p_n ln(p_n / τ_n)` summed as `Σ [p ln(p/τ) - p + τ]`, which equals it for
/// normalized `p` and has only non-negative terms, so it keeps relative precision
/// close to equilibrium. `∞` when `p` puts weight where `τ` has none.
fn classical_relative_entropy(pops: &[f64], log_tau: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&p, &lt) in pops.iter().zip(log_tau) {
        let p = p.max(0.0);
        if lt == f64::NEG_INFINITY {
            if p > SUPPORT_TOL {
                return f64::INFINITY;
            }
            continue;
        }
        let tau = lt.exp();
        if p == 0.0 {
            acc += tau;
        } else if tau == 0.0 {
            // τ underflows while ln τ is finite
            acc += p * (p.ln() - lt) - p;
        } else {
            acc += tau * bregman_ratio((p - tau) / tau);
        }
    }
    acc
}

/// `(P, C)`: the classical part `Σ p_n ln(p_n / τ_n)` over energy populations and
/// the relative entropy of coherence `S(Δρ) - S(ρ)`. Their sum is `D(ρ ‖ τ_β)`.
pub fn entropy_split(
    rho: &DensityMatrix,
    basis: &SpectralBasis,
    beta: InverseTemperature,
) -> Result<(f64, f64)> {
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: rho.dim() });
    }
    let rho_e = linalg::hermitian_part(&basis.to_energy_basis(rho.matrix()));
    let pops: Vec<f64> = (0..basis.dim()).map(|i| rho_e[(i, i)].re.max(0.0)).collect();
    let log_tau = operators::log_thermal_populations(basis.energies(), beta);
    let classical = classical_relative_entropy(&pops, &log_tau);
    let s_rho = -linalg::eigvalsh(&rho_e)?.into_iter().map(xlogx).sum::<f64>();
    let coherence = (shannon(&pops) - s_rho).max(0.0);
    Ok((classical, coherence))
}

/// `Σ_{ij} |ρ_ij - τ_ij|` with both matrices read in the energy eigenbasis.
pub fn l1_elementwise(rho: &DensityMatrix, tau: &DensityMatrix, basis: &SpectralBasis) -> f64 {
    let diff = basis.to_energy_basis(&(rho.matrix() - tau.matrix()));
    let d = diff.nrows();
    (0..d).flat_map(|i| (0..d).map(move |j| (i, j))).map(|ij| diff[ij].norm()).sum()
}

/// `½ ‖ρ - σ‖₁` in the Schatten-1 norm.
pub fn trace_distance(rho: &DensityMatrix, sigma: &DensityMatrix) -> Result<f64> {
    let diff: CMat = rho.matrix() - sigma.matrix();
    Ok(0.5 * linalg::eigvalsh(&linalg::hermitian_part(&diff))?.iter().map(|x| x.abs()).sum::<f64>())
}

/// Second-order finite-difference derivative on a possibly non-uniform grid:
/// central in the interior, one-sided at the ends.
pub fn derivative(times: &[f64], values: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if n < 3 {
        return invalid(format!("derivative needs at least 3 grid points, got {n}"));
    }
    if values.len() != n {
        return Err(Error::GridMismatch);
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return invalid("grid must be strictly ascending");
    }
    let mut out = vec![0.0; n];
    for i in 1..n - 1 {
        let (h1, h2) = (times[i] - times[i - 1], times[i + 1] - times[i]);
        out[i] = -h2 / (h1 * (h1 + h2)) * values[i - 1]
            + (h2 - h1) / (h1 * h2) * values[i]
            + h1 / (h2 * (h1 + h2)) * values[i + 1];
    }
    let (h1, h2) = (times[1] - times[0], times[2] - times[1]);
    out[0] = -(2.0 * h1 + h2) / (h1 * (h1 + h2)) * values[0] + (h1 + h2) / (h1 * h2) * values[1]
        - h1 / (h2 * (h1 + h2)) * values[2];
    let (h1, h2) = (times[n - 2] - times[n - 3], times[n - 1] - times[n - 2]);
    out[n - 1] = (2.0 * h2 + h1) / (h2 * (h1 + h2)) * values[n - 1]
        - (h1 + h2) / (h1 * h2) * values[n - 2]
        + h2 / (h1 * (h1 + h2)) * values[n - 3];
    Ok(out)
}

/// Spohn entropy-production rate `Π = -beta dF_neq/dt`, equal to `-dD/dt`.
pub fn spohn_rate(times: &[f64], free_energy: &[f64], beta: InverseTemperature) -> Result<Vec<f64>> {
    let b = finite_beta(beta)?;
    Ok(derivative(times, free_energy)?.into_iter().map(|x| -b * x).collect())
}

/// Thermodynamic diagnostics along an evolution.
#[derive(Clone, Debug)]
pub struct ThermoTrajectory {
    pub times: Vec<f64>,
    pub free_energy: Vec<f64>,
    pub relative_entropy: Vec<f64>,
    pub classical: Vec<f64>,
    pub coherence: Vec<f64>,
    pub l1: Vec<f64>,
    pub trace_distance: Vec<f64>,
    /// Absent for fewer than three grid points and at zero temperature.
    pub spohn_rate: Option<Vec<f64>>,
    /// Equilibrium free energy `-ln Z / beta`.
    pub equilibrium_free_energy: f64,
    pub beta: f64,
}

impl ThermoTrajectory {
    /// Diagnostics for every state of `grid`. At zero temperature `F_neq` is the
    /// mean energy, `D` is `inf` once any weight leaves the ground manifold, and
    /// the Spohn rate is omitted.
    pub fn from_grid(
        grid: &EvolutionGrid,
        h: &HermitianOperator,
        basis: &SpectralBasis,
        beta: InverseTemperature,
    ) -> Result<Self> {
        let b = match beta {
            InverseTemperature::Infinite => f64::INFINITY,
            _ => finite_beta(beta)?,
        };
        let tau = operators::thermal_state(basis, beta);
        let n = grid.times.len();
        let mut out = Self {
            times: grid.times.clone(),
            free_energy: Vec::with_capacity(n),
            relative_entropy: Vec::with_capacity(n),
            classical: Vec::with_capacity(n),
            coherence: Vec::with_capacity(n),
            l1: Vec::with_capacity(n),
            trace_distance: Vec::with_capacity(n),
            spohn_rate: None,
            equilibrium_free_energy: operators::equilibrium_free_energy(basis.energies(), beta),
            beta: b,
        };
        for rho in &grid.states {
            out.free_energy.push(if beta.is_infinite() {
                linalg::trace_product(h.matrix(), rho.matrix()).re
            } else {
                noneq_free_energy(rho, h, beta)?
            });
            out.relative_entropy.push(relative_entropy_to_thermal(rho, basis, beta)?);
            let (p, c) = entropy_split(rho, basis, beta)?;
            out.classical.push(p);
            out.coherence.push(c);
            out.l1.push(l1_elementwise(rho, &tau, basis));
            out.trace_distance.push(trace_distance(rho, &tau)?);
        }
        if n >= 3 && !beta.is_infinite() {
            out.spohn_rate = Some(spohn_rate(&out.times, &out.free_energy, beta)?);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// CSV with columns `t,F_neq,D,P,C,L1,T1[,Pi]` and 17 significant digits.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        let with_pi = self.spohn_rate.is_some();
        writeln!(w, "t,F_neq,D,P,C,L1,T1{}", if with_pi { ",Pi" } else { "" })?;
        for i in 0..self.len() {
            let mut row = vec![
                fmt17(self.times[i]),
                fmt17(self.free_energy[i]),
                fmt17(self.relative_entropy[i]),
                fmt17(self.classical[i]),
                fmt17(self.coherence[i]),
                fmt17(self.l1[i]),
                fmt17(self.trace_distance[i]),
            ];
            if let Some(pi) = &self.spohn_rate {
                row.push(fmt17(pi[i]));
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// 17 significant digits; non-finite values as `inf`, `-inf`, `nan`.
pub fn fmt17(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:.16e}")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::davies::Representation;
    use crate::models;
    use crate::operators::{bloch_to_state, BlochVector};
    use crate::spectral::{decompose, evolve_spectral, evolve_structured, linear_times, Route};
    use proptest::prelude::*;

    fn qubit_setup() -> (models::ModelInstance, SpectralBasis) {
        let m = models::single_qubit(5.0, 10.0, 1.0).unwrap();
        let b = operators::diagonalize(&m.hamiltonian).unwrap();
        (m, b)
    }

    #[test]
    fn equilibrium_free_energy_is_recovered() {
        let (m, b) = qubit_setup();
        let tau = operators::thermal_state(&b, m.beta());
        let f = noneq_free_energy(&tau, &m.hamiltonian, m.beta()).unwrap();
        let z: f64 = b.energies().iter().map(|e| (-0.1 * e).exp()).sum();
        assert!((f + z.ln() / 0.1).abs() < 1e-10);
    }

    #[test]
    fn pure_excited_state_free_energy() {
        let (m, _) = qubit_setup();
        let up = bloch_to_state(&BlochVector::new([0.0, 0.0, 1.0]).unwrap());
        let f = noneq_free_energy(&up, &m.hamiltonian, m.beta()).unwrap();
        assert!((f - 2.5).abs() < 1e-12);
        assert!(noneq_free_energy(&up, &m.hamiltonian, InverseTemperature::Infinite).is_err());
    }

    #[test]
    fn relative_entropy_examples() {
        let up = bloch_to_state(&BlochVector::new([0.0, 0.0, 1.0]).unwrap());
        let mixed = DensityMatrix::maximally_mixed(2);
        assert!(relative_entropy(&mixed, &mixed).unwrap().abs() < 1e-10);
        assert!((relative_entropy(&up, &mixed).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(relative_entropy(&mixed, &up).unwrap(), f64::INFINITY);
    }

    #[test]
    fn zero_temperature_support_violation_is_infinite() {
        let (_, b) = qubit_setup();
        let mixed = DensityMatrix::maximally_mixed(2);
        let d = relative_entropy_to_thermal(&mixed, &b, InverseTemperature::Infinite).unwrap();
        assert_eq!(d, f64::INFINITY);
        let (p, _) = entropy_split(&mixed, &b, InverseTemperature::Infinite).unwrap();
        assert_eq!(p, f64::INFINITY);
    }

    #[test]
    fn split_examples() {
        let (_, b) = qubit_setup();
        let plus = bloch_to_state(&BlochVector::new([1.0, 0.0, 0.0]).unwrap());
        // tau = I/2 at beta = 0 limit: use a tiny beta through the populations directly
        let beta = InverseTemperature::new(1e-14).unwrap();
        let (p, c) = entropy_split(&plus, &b, beta).unwrap();
        assert!(p.abs() < 1e-12);
        assert!((c - 2f64.ln()).abs() < 1e-12);
        let diag = bloch_to_state(&BlochVector::new([0.0, 0.0, 0.3]).unwrap());
        let (_, c) = entropy_split(&diag, &b, InverseTemperature::new(0.1).unwrap()).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn relative_entropy_keeps_precision_near_equilibrium() {
        let (m, b) = qubit_setup();
        let tau = operators::thermal_populations(b.energies(), m.beta());
        let delta = 1e-9;
        let rho_e = linalg::diag_real(&[tau[0] + delta, tau[1] - delta]);
        let rho = DensityMatrix::new(b.from_energy_basis(&rho_e)).unwrap();
        let d = relative_entropy_to_thermal(&rho, &b, m.beta()).unwrap();
        // second-order expansion; the cubic correction is ~1e-27
        let oracle = 0.5 * delta * delta * (1.0 / tau[0] + 1.0 / tau[1]);
        assert!((d / oracle - 1.0).abs() < 1e-6, "{d} vs {oracle}");
    }

    #[test]
    fn l1_matches_elementwise_oracle() {
        let (m, b) = qubit_setup();
        let tau = operators::thermal_state(&b, m.beta());
        let r = [0.276, 0.359, 0.303];
        let rho = bloch_to_state(&BlochVector::new(r).unwrap());
        // energy basis is (|1>, |0>): populations swap, off-diagonals keep modulus
        let z_tau = (tau.matrix()[(0, 0)] - tau.matrix()[(1, 1)]).re;
        let oracle = (r[2] - z_tau).abs() + (r[0] * r[0] + r[1] * r[1]).sqrt();
        assert!((l1_elementwise(&rho, &tau, &b) - oracle).abs() < 1e-12);
        assert_eq!(l1_elementwise(&tau, &tau, &b), 0.0);
    }

    #[test]
    fn derivative_is_exact_for_quadratics_on_nonuniform_grids() {
        let t = [0.0, 0.1, 0.35, 0.4, 1.0, 1.7];
        let f: Vec<f64> = t.iter().map(|x| 3.0 * x * x - 2.0 * x + 1.0).collect();
        let df = derivative(&t, &f).unwrap();
        for (x, d) in t.iter().zip(&df) {
            assert!((d - (6.0 * x - 2.0)).abs() < 1e-10);
        }
        assert!(derivative(&t[..2], &f[..2]).is_err());
    }

    #[test]
    fn equilibrium_start_has_zero_spohn_rate() {
        let (m, b) = qubit_setup();
        let g = m.generator(Representation::Block).unwrap();
        let tau = g.thermal_state();
        let grid = evolve_structured(&g, &tau, &linear_times(2.0, 20)).unwrap();
        let traj = ThermoTrajectory::from_grid(&grid, &m.hamiltonian, &b, m.beta()).unwrap();
        assert!(traj.spohn_rate.unwrap().iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn spohn_rate_integrates_to_free_energy_drop() {
        let (m, b) = qubit_setup();
        let g = m.generator(Representation::Block).unwrap();
        let rho = bloch_to_state(&BlochVector::new([0.276, 0.359, 0.303]).unwrap());
        let times = linear_times(6.0, 2001);
        let grid = evolve_structured(&g, &rho, &times).unwrap();
        let traj = ThermoTrajectory::from_grid(&grid, &m.hamiltonian, &b, m.beta()).unwrap();
        let pi = traj.spohn_rate.as_ref().unwrap();
        assert!(pi.iter().all(|&x| x >= -1e-8));
        let integral: f64 = (1..times.len()).map(|i| 0.5 * (pi[i] + pi[i - 1]) * (times[i] - times[i - 1])).sum();
        let drop = traj.beta * (traj.free_energy[0] - traj.free_energy[times.len() - 1]);
        assert!((integral - drop).abs() < 0.01 * drop);
    }

    #[test]
    fn csv_layout() {
        let (m, b) = qubit_setup();
        let g = m.generator(Representation::Block).unwrap();
        let rho = DensityMatrix::maximally_mixed(2);
        let single = evolve_structured(&g, &rho, &[0.0]).unwrap();
        let traj = ThermoTrajectory::from_grid(&single, &m.hamiltonian, &b, m.beta()).unwrap();
        let mut buf = Vec::new();
        traj.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "t,F_neq,D,P,C,L1,T1");
        assert_eq!(lines.len(), 2);
        assert_eq!(fmt17(f64::INFINITY), "inf");
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt17(0.1).parse::<f64>().unwrap(), 0.1);
    }

    #[test]
    fn identities_along_a_qubit_trajectory() {
        let (m, b) = qubit_setup();
        let g = m.generator(Representation::Both).unwrap();
        let spec = decompose(&g, Route::Block).unwrap();
        let rho = bloch_to_state(&BlochVector::new([0.276, 0.359, 0.303]).unwrap());
        let grid = evolve_spectral(&spec, &rho, &linear_times(4.0, 100)).unwrap();
        let traj = ThermoTrajectory::from_grid(&grid, &m.hamiltonian, &b, m.beta()).unwrap();
        for i in 0..traj.len() {
            let d = traj.relative_entropy[i];
            assert!((traj.free_energy[i] - (d / traj.beta + traj.equilibrium_free_energy)).abs() < 1e-9);
            assert!((d - traj.classical[i] - traj.coherence[i]).abs() < 1e-9);
            let general = relative_entropy(&grid.states[i], &g.thermal_state()).unwrap();
            assert!((general - d).abs() < 1e-9);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn pinsker_klein_and_positivity(seed in 0u64..10_000, beta in 0.05f64..5.0) {
            let m = models::tfim(2, 1.0, 0.5, 1.0 / beta, 1.0).unwrap();
            let b = operators::diagonalize(&m.hamiltonian).unwrap();
            let rho = operators::random_mixed_state(4, 1 + (seed % 4) as usize, seed).unwrap();
            let tau = operators::thermal_state(&b, m.beta());
            let d = relative_entropy_to_thermal(&rho, &b, m.beta()).unwrap();
            let (p, c) = entropy_split(&rho, &b, m.beta()).unwrap();
            let t = trace_distance(&rho, &tau).unwrap();
            prop_assert!(d >= -1e-10 && p >= -1e-10 && c >= -1e-10);
            prop_assert!(d >= 2.0 * t * t - 1e-10);
            let f = noneq_free_energy(&rho, &m.hamiltonian, m.beta()).unwrap();
            prop_assert!(f >= operators::equilibrium_free_energy(b.energies(), m.beta()) - 1e-10);
        }
    }
}
