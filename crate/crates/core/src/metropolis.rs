//! Simulated-annealing searches that remove a state's overlap with chosen slow
//! modes: unitary Metropolis over products of single-qubit rotations, and swap
//! Metropolis over permutations of energy populations.
//!
//! Both walkers start at `T_eff = 1`, cool by `τ` on every accepted move only, and
//! return the best state seen.

use std::f64::consts::TAU;
use std::io::{self, Write};

use faer::Mat;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Result};
use crate::linalg::{self, c, c64, CMat, ZERO};
use crate::operators::DensityMatrix;
use crate::spectral::GeneratorSpectrum;
use crate::thermo::fmt17;

/// Annealing schedule and stopping rules.
#[derive(Clone, Debug, PartialEq)]
pub struct MetropolisConfig {
    /// Cooling factor `τ ∈ (0, 1)` applied on acceptance.
    pub cooling_tau: f64,
    pub threshold_eps: f64,
    /// Proposals per selected parameter.
    pub nano_n: usize,
    /// Parameter selections per selected qubit.
    pub micro_m: usize,
    /// Qubit selections per qubit; the macro loop runs `L * macro_m` times.
    pub macro_m: usize,
    /// 1-based mode indices entering the cost.
    pub target_modes: Vec<usize>,
    pub seed: u64,
    /// Hard cap on proposals across all loops.
    pub max_total_iterations: usize,
}

impl MetropolisConfig {
    /// Unitary search with `n = 200`, `m = 20`, `M = 20`, `τ = 0.999`, `ε = 1e-6`.
    pub fn unitary(target_modes: Vec<usize>, seed: u64) -> Self {
        Self {
            cooling_tau: 0.999,
            threshold_eps: 1e-6,
            nano_n: 200,
            micro_m: 20,
            macro_m: 20,
            target_modes,
            seed,
            max_total_iterations: usize::MAX,
        }
    }

    /// Swap search with `τ = 0.998`, `ε = 1e-6` and a budget of `10^6` proposals.
    pub fn swap(target_modes: Vec<usize>, seed: u64) -> Self {
        Self {
            cooling_tau: 0.998,
            threshold_eps: 1e-6,
            nano_n: 1,
            micro_m: 1,
            macro_m: 1,
            target_modes,
            seed,
            max_total_iterations: 1_000_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cooling_tau > 0.0 && self.cooling_tau < 1.0) {
            return invalid(format!("cooling constant must lie in (0, 1), got {}", self.cooling_tau));
        }
        if !(self.threshold_eps > 0.0) {
            return invalid(format!("threshold must be positive, got {}", self.threshold_eps));
        }
        if self.nano_n == 0 || self.micro_m == 0 || self.macro_m == 0 {
            return invalid("loop budgets must be positive");
        }
        Ok(())
    }
}

/// Per-qubit parameters `(α, β, γ, δ)` of `e^{iα} R_z(β) R_x(γ) R_z(δ)`, kept in `[0, 2π)`.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryAnsatz {
    params: Vec<[f64; 4]>,
    fermionic: bool,
}

fn wrap(x: f64) -> f64 {
    let w = x.rem_euclid(TAU);
    // rem_euclid can round up to exactly 2π
    if w >= TAU { 0.0 } else { w }
}

impl UnitaryAnsatz {
    pub fn new(params: Vec<[f64; 4]>, fermionic: bool) -> Result<Self> {
        if params.is_empty() || params.len() > 12 {
            return invalid(format!("ansatz needs 1..=12 qubits, got {}", params.len()));
        }
        if params.iter().flatten().any(|x| !x.is_finite()) {
            return invalid("ansatz parameters must be finite");
        }
        let params = params.into_iter().map(|p| p.map(wrap)).collect();
        Ok(Self { params, fermionic })
    }

    /// All parameters zero: the identity (times σ^z factors when fermionic).
    pub fn zeros(qubits: usize, fermionic: bool) -> Result<Self> {
        Self::new(vec![[0.0; 4]; qubits], fermionic)
    }

    pub fn random(qubits: usize, fermionic: bool, rng: &mut impl Rng) -> Result<Self> {
        Self::new(
            (0..qubits).map(|_| std::array::from_fn(|_| rng.random_range(0.0..TAU))).collect(),
            fermionic,
        )
    }

    pub fn qubits(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[[f64; 4]] {
        &self.params
    }

    pub fn is_fermionic(&self) -> bool {
        self.fermionic
    }

    /// Adds `delta` to parameter `which` of qubit `qubit`, modulo `2π`.
    pub fn shifted(&self, qubit: usize, which: usize, delta: f64) -> Self {
        let mut out = self.clone();
        out.params[qubit][which] = wrap(out.params[qubit][which] + delta);
        out
    }
}

/// `R_z(θ) = diag(e^{-iθ/2}, e^{iθ/2})`.
pub fn rz(theta: f64) -> CMat {
    let mut m = Mat::zeros(2, 2);
    m[(0, 0)] = c64::from_polar(1.0, -theta / 2.0);
    m[(1, 1)] = c64::from_polar(1.0, theta / 2.0);
    m
}

/// `R_x(θ) = exp(-iθX/2)`.
pub fn rx(theta: f64) -> CMat {
    let (s, co) = (theta / 2.0).sin_cos();
    let mut m = Mat::zeros(2, 2);
    m[(0, 0)] = c(co, 0.0);
    m[(1, 1)] = c(co, 0.0);
    m[(0, 1)] = c(0.0, -s);
    m[(1, 0)] = c(0.0, -s);
    m
}

/// `e^{iα} R_z(β) R_x(γ) R_z(δ)`.
pub fn single_qubit_unitary([alpha, beta, gamma, delta]: [f64; 4]) -> CMat {
    let m = &(&rz(beta) * &rx(gamma)) * &rz(delta);
    linalg::scale(&m, c64::from_polar(1.0, alpha))
}

/// `⊗_j U_j` with qubit 1 leftmost. The fermionic variant uses
/// `U_j (σ^z)^{(L - j) mod 2}` on site `j` (1-based), as in the product form.
pub fn build_ansatz_unitary(ansatz: &UnitaryAnsatz) -> CMat {
    let l = ansatz.qubits();
    let mut out: Option<CMat> = None;
    for (idx, p) in ansatz.params.iter().enumerate() {
        let mut u = single_qubit_unitary(*p);
        if ansatz.fermionic && (l - (idx + 1)) % 2 == 1 {
            u = &u * &crate::operators::pauli::z();
        }
        out = Some(match out {
            None => u,
            Some(acc) => linalg::kron(&acc, &u),
        });
    }
    out.expect("ansatz has at least one qubit")
}

/// `Σ_k |Tr(l_k ρ')|` over the 1-based `target_modes`.
pub fn cost(spec: &GeneratorSpectrum, rho_t: &DensityMatrix, target_modes: &[usize]) -> Result<f64> {
    spec.overlap_cost(target_modes, rho_t.matrix())
}

/// Metropolis rule: downhill always, uphill with probability `exp(-ΔC / T_eff)`.
/// Draws from `rng` only for uphill (or level) moves.
pub fn accept(delta: f64, t_eff: f64, rng: &mut impl Rng) -> bool {
    delta < 0.0 || rng.random::<f64>() < (-delta / t_eff).exp()
}

/// One proposal of a walker.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceStep {
    pub iteration: usize,
    /// Walker cost after the step.
    pub cost: f64,
    /// Effective temperature after the step.
    pub temperature: f64,
    pub accepted: bool,
}

/// Steps of a run. Entry 0 is the initial state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizationTrace {
    pub steps: Vec<TraceStep>,
}

impl OptimizationTrace {
    /// Proposals made, excluding the initial entry.
    pub fn iterations(&self) -> usize {
        self.steps.last().map(|s| s.iteration).unwrap_or(0)
    }

    /// Running minimum of the cost.
    pub fn best_costs(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.steps
            .iter()
            .map(|s| {
                best = best.min(s.cost);
                best
            })
            .collect()
    }

    /// CSV `iteration,cost,T_eff,accepted`.
    pub fn write_csv(&self, mut w: impl Write) -> io::Result<()> {
        writeln!(w, "iteration,cost,T_eff,accepted")?;
        for s in &self.steps {
            writeln!(w, "{},{},{},{}", s.iteration, fmt17(s.cost), fmt17(s.temperature), u8::from(s.accepted))?;
        }
        Ok(())
    }
}

/// Result of a unitary search.
#[derive(Clone, Debug)]
pub struct UnitaryOutcome {
    /// Best state seen, `U ρ U†`.
    pub state: DensityMatrix,
    pub unitary: CMat,
    pub ansatz: UnitaryAnsatz,
    pub cost: f64,
    pub converged: bool,
    /// Proposal count at which the threshold was crossed, if it was.
    pub converged_at: Option<usize>,
    pub trace: OptimizationTrace,
}

/// Unitary Metropolis on a state of `L` qubits (`d = 2^L`).
///
/// A state already below the threshold is returned unchanged at iteration 0.
/// Otherwise the walker starts from a random ansatz and runs the nested loops:
/// `L * M` qubit picks, `m` parameter picks per qubit, `n` increments
/// `δx ~ U[0, 2π)` per parameter, stopping once the cost drops below `ε`.
pub fn unitary_metropolis(
    spec: &GeneratorSpectrum,
    rho: &DensityMatrix,
    config: &MetropolisConfig,
    fermionic: bool,
) -> Result<UnitaryOutcome> {
    let d = rho.dim();
    if !d.is_power_of_two() || d < 2 {
        return invalid(format!("unitary Metropolis needs d = 2^L, got {d}"));
    }
    if spec.dim() != d {
        return invalid(format!("spectrum dimension {} does not match state dimension {d}", spec.dim()));
    }
    let modes = config.target_modes.clone();
    let m = rho.matrix().clone();
    let mut cost_of = |u: &CMat| -> Result<f64> {
        let rotated = &(u * &m) * u.adjoint();
        spec.overlap_cost(&modes, &rotated)
    };
    let qubits = d.trailing_zeros() as usize;
    let out = unitary_metropolis_with(qubits, fermionic, config, &mut cost_of)?;
    let state = rho.conjugate_by(&out.unitary);
    Ok(UnitaryOutcome {
        state,
        unitary: out.unitary,
        ansatz: out.ansatz,
        cost: out.cost,
        converged: out.converged,
        converged_at: out.converged_at,
        trace: out.trace,
    })
}

/// Result of [`unitary_metropolis_with`].
#[derive(Clone, Debug)]
pub struct AnsatzOutcome {
    pub unitary: CMat,
    pub ansatz: UnitaryAnsatz,
    pub cost: f64,
    pub converged: bool,
    pub converged_at: Option<usize>,
    pub trace: OptimizationTrace,
}

/// The unitary walker for an arbitrary non-negative cost of the ansatz unitary.
/// The identity is evaluated first and returned if already below the threshold.
pub fn unitary_metropolis_with(
    qubits: usize,
    fermionic: bool,
    config: &MetropolisConfig,
    cost_of: &mut dyn FnMut(&CMat) -> Result<f64>,
) -> Result<AnsatzOutcome> {
    config.validate()?;
    let mut trace = OptimizationTrace::default();
    let identity = linalg::identity(1 << qubits);
    let c0 = cost_of(&identity)?;
    if c0 < config.threshold_eps {
        trace.steps.push(TraceStep { iteration: 0, cost: c0, temperature: 1.0, accepted: true });
        return Ok(AnsatzOutcome {
            unitary: identity,
            ansatz: UnitaryAnsatz::zeros(qubits, false)?,
            cost: c0,
            converged: true,
            converged_at: Some(0),
            trace,
        });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ansatz = UnitaryAnsatz::random(qubits, fermionic, &mut rng)?;
    let mut unitary = build_ansatz_unitary(&ansatz);
    let mut current = cost_of(&unitary)?;
    let mut t_eff = 1.0;
    let mut best = (current, ansatz.clone(), unitary.clone());
    trace.steps.push(TraceStep { iteration: 0, cost: current, temperature: t_eff, accepted: true });
    let mut iteration = 0usize;
    let mut converged_at = (current < config.threshold_eps).then_some(0);

    'search: for _ in 0..qubits * config.macro_m {
        if converged_at.is_some() {
            break;
        }
        let qubit = rng.random_range(0..qubits);
        for _ in 0..config.micro_m {
            let which = rng.random_range(0..4);
            for _ in 0..config.nano_n {
                if iteration >= config.max_total_iterations {
                    break 'search;
                }
                iteration += 1;
                let delta_x = rng.random_range(0.0..TAU);
                let candidate = ansatz.shifted(qubit, which, delta_x);
                let cand_u = build_ansatz_unitary(&candidate);
                let cand_cost = cost_of(&cand_u)?;
                let accepted = accept(cand_cost - current, t_eff, &mut rng);
                if accepted {
                    ansatz = candidate;
                    unitary = cand_u;
                    current = cand_cost;
                    t_eff *= config.cooling_tau;
                    if current < best.0 {
                        best = (current, ansatz.clone(), unitary.clone());
                    }
                }
                trace.steps.push(TraceStep { iteration, cost: current, temperature: t_eff, accepted });
                if best.0 < config.threshold_eps {
                    converged_at = Some(iteration);
                    break 'search;
                }
            }
        }
    }
    Ok(AnsatzOutcome {
        unitary: best.2,
        ansatz: best.1,
        cost: best.0,
        converged: converged_at.is_some(),
        converged_at,
        trace,
    })
}

/// Result of a swap search.
#[derive(Clone, Debug)]
pub struct SwapOutcome {
    /// Best population vector seen; a permutation of the input.
    pub populations: Vec<f64>,
    pub cost: f64,
    pub converged: bool,
    pub converged_at: Option<usize>,
    pub trace: OptimizationTrace,
}

/// Energy-basis diagonals of the target left modes.
pub fn diagonal_targets(spec: &GeneratorSpectrum, modes: &[usize]) -> Result<Vec<Vec<c64>>> {
    modes
        .iter()
        .map(|&k| match spec.left_diagonal(k)? {
            Some(v) => Ok(v),
            None => invalid("swap Metropolis needs a spectrum with an energy basis"),
        })
        .collect()
}

fn diagonal_cost(targets: &[Vec<c64>], p: &[f64]) -> f64 {
    targets
        .iter()
        .map(|l| l.iter().zip(p).map(|(&w, &x)| w * x).fold(ZERO, |a, b| a + b).norm())
        .sum()
}

/// Swap Metropolis on energy populations `p`.
///
/// Each proposal picks four distinct indices and applies a uniformly random
/// non-identity permutation to their entries; for `d < 4` it swaps two entries.
/// The budget is `config.max_total_iterations` proposals.
pub fn swap_metropolis(targets: &[Vec<c64>], p: &[f64], config: &MetropolisConfig) -> Result<SwapOutcome> {
    config.validate()?;
    let d = p.len();
    if d < 2 {
        return invalid("swap Metropolis needs at least two populations");
    }
    if targets.iter().any(|l| l.len() != d) {
        return invalid("target modes and populations differ in length");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pops = p.to_vec();
    let mut current = diagonal_cost(targets, &pops);
    let mut t_eff = 1.0;
    let mut best = (current, pops.clone());
    let mut trace = OptimizationTrace::default();
    trace.steps.push(TraceStep { iteration: 0, cost: current, temperature: t_eff, accepted: true });
    let mut converged_at = (current < config.threshold_eps).then_some(0);
    let k = d.min(4);
    let mut iteration = 0usize;
    while converged_at.is_none() && iteration < config.max_total_iterations {
        iteration += 1;
        let idx = rand::seq::index::sample(&mut rng, d, k).into_vec();
        let mut perm: Vec<usize> = (0..k).collect();
        while perm.iter().enumerate().all(|(i, &x)| i == x) {
            perm.shuffle(&mut rng);
        }
        let mut candidate = pops.clone();
        for (i, &src) in perm.iter().enumerate() {
            candidate[idx[i]] = pops[idx[src]];
        }
        let cand_cost = diagonal_cost(targets, &candidate);
        let accepted = accept(cand_cost - current, t_eff, &mut rng);
        if accepted {
            pops = candidate;
            current = cand_cost;
            t_eff *= config.cooling_tau;
            if current < best.0 {
                best = (current, pops.clone());
            }
        }
        trace.steps.push(TraceStep { iteration, cost: current, temperature: t_eff, accepted });
        if best.0 < config.threshold_eps {
            converged_at = Some(iteration);
        }
    }
    Ok(SwapOutcome {
        populations: best.1,
        cost: best.0,
        converged: converged_at.is_some(),
        converged_at,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::davies::Representation;
    use crate::models;
    use crate::operators::{self, pauli};
    use crate::spectral::{decompose, Route};
    use proptest::prelude::*;

    fn unitarity_defect(u: &CMat) -> f64 {
        linalg::max_abs_diff(&(u * u.adjoint()), &linalg::identity(u.nrows()))
    }

    #[test]
    fn zero_parameters_give_identity() {
        let u = build_ansatz_unitary(&UnitaryAnsatz::zeros(3, false).unwrap());
        assert!(linalg::max_abs_diff(&u, &linalg::identity(8)) < 1e-15);
    }

    #[test]
    fn rz_pi_closed_form() {
        let u = build_ansatz_unitary(&UnitaryAnsatz::new(vec![[0.0, std::f64::consts::PI, 0.0, 0.0]], false).unwrap());
        assert!((u[(0, 0)] - c(0.0, -1.0)).norm() < 1e-15);
        assert!((u[(1, 1)] - c(0.0, 1.0)).norm() < 1e-15);
        assert!(u[(0, 1)].norm() < 1e-15 && u[(1, 0)].norm() < 1e-15);
    }

    #[test]
    fn fermionic_zero_parameters_insert_sigma_z() {
        // L = 2: exponents (L - j) mod 2 are 1 for j = 1 and 0 for j = 2
        let u = build_ansatz_unitary(&UnitaryAnsatz::zeros(2, true).unwrap());
        let expected = linalg::kron(&pauli::z(), &linalg::identity(2));
        assert!(linalg::max_abs_diff(&u, &expected) < 1e-15);
        let u3 = build_ansatz_unitary(&UnitaryAnsatz::zeros(3, true).unwrap());
        let expected3 = linalg::kron(&linalg::kron(&linalg::identity(2), &pauli::z()), &linalg::identity(2));
        assert!(linalg::max_abs_diff(&u3, &expected3) < 1e-15);
    }

    #[test]
    fn parameters_wrap() {
        let a = UnitaryAnsatz::new(vec![[7.0, -1.0, TAU, 0.5]], false).unwrap();
        let p = a.params()[0];
        assert!((p[0] - (7.0 - TAU)).abs() < 1e-15);
        assert!((p[1] - (TAU - 1.0)).abs() < 1e-15);
        assert_eq!(p[2], 0.0);
        assert!(p.iter().all(|x| (0.0..TAU).contains(x)));
        assert!(UnitaryAnsatz::new(vec![], false).is_err());
    }

    fn tfim_spec(l: usize, h: f64, t: f64) -> (models::ModelInstance, GeneratorSpectrum) {
        let m = models::tfim(l, 1.0, h, t, 1.0).unwrap();
        let g = m.generator(Representation::Block).unwrap();
        let s = decompose(&g, Route::Block).unwrap();
        (m, s)
    }

    #[test]
    fn cost_edge_cases() {
        let (m, s) = tfim_spec(2, 1.0, 1.0);
        let tau = operators::thermal_state(&operators::diagonalize(&m.hamiltonian).unwrap(), m.beta());
        assert!(cost(&s, &tau, &[2, 3, 4, 5]).unwrap() < 1e-14);
        let rho = operators::random_mixed_state(4, 3, 1).unwrap();
        assert_eq!(cost(&s, &rho, &[]).unwrap(), 0.0);
        assert!(cost(&s, &rho, &[0]).is_err());
        assert!(cost(&s, &rho, &[17]).is_err());
    }

    #[test]
    fn thermal_state_converges_immediately() {
        let (m, s) = tfim_spec(2, 1.0, 1.0);
        let tau = operators::thermal_state(&operators::diagonalize(&m.hamiltonian).unwrap(), m.beta());
        let out = unitary_metropolis(&s, &tau, &MetropolisConfig::unitary(vec![2, 3], 1), false).unwrap();
        assert!(out.converged);
        assert_eq!(out.converged_at, Some(0));
        assert_eq!(out.trace.iterations(), 0);
    }

    #[test]
    fn unitarily_invariant_state_cannot_converge() {
        // Tr(l_k I/d) is fixed under conjugation; pick a population mode where it is nonzero
        let (_, s) = tfim_spec(2, 0.7, 1.0);
        let mixed = DensityMatrix::maximally_mixed(4);
        let k = (2..=s.len())
            .find(|&k| s.mode(k).is_population() && cost(&s, &mixed, &[k]).unwrap() > 1e-3)
            .expect("a population mode with nonzero trace");
        let mut cfg = MetropolisConfig::unitary(vec![k], 3);
        cfg.nano_n = 20;
        cfg.micro_m = 5;
        cfg.macro_m = 2;
        let out = unitary_metropolis(&s, &mixed, &cfg, false).unwrap();
        assert!(!out.converged);
        assert_eq!(out.trace.iterations(), 2 * 2 * 5 * 20);
        assert!(out.cost > 1e-3);
    }

    #[test]
    fn unitary_search_is_deterministic_and_monotone_in_best() {
        let (_, s) = tfim_spec(3, 1.0, 0.5);
        let rho = operators::random_mixed_state(8, 4, 11).unwrap();
        let mut cfg = MetropolisConfig::unitary(vec![2, 3], 5);
        cfg.max_total_iterations = 3000;
        let a = unitary_metropolis(&s, &rho, &cfg, false).unwrap();
        let b = unitary_metropolis(&s, &rho, &cfg, false).unwrap();
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.best_costs().windows(2).all(|w| w[1] <= w[0]));
        assert!(a.trace.steps.iter().all(|s| s.cost >= 0.0));
        let mut last_t = f64::INFINITY;
        for st in a.trace.steps.iter().filter(|s| s.accepted) {
            assert!(st.temperature <= last_t);
            last_t = st.temperature;
        }
        assert!(unitarity_defect(&a.unitary) < 1e-12);
        let recomputed = cost(&s, &a.state, &cfg.target_modes).unwrap();
        assert!((recomputed - a.cost).abs() < 1e-12);
        let start = a.trace.steps[0].cost;
        assert!(a.cost <= start);
    }

    #[test]
    fn swap_preserves_populations_and_converges_on_zero_cost() {
        let (m, s) = tfim_spec(3, 1.0, 2.0);
        let basis = operators::diagonalize(&m.hamiltonian).unwrap();
        let tau = operators::thermal_populations(basis.energies(), m.beta());
        let targets = diagonal_targets(&s, &[2]).unwrap();
        let out = swap_metropolis(&targets, &tau, &MetropolisConfig::swap(vec![2], 0)).unwrap();
        assert_eq!(out.converged_at, Some(0));

        let hot = operators::thermal_populations(basis.energies(), operators::InverseTemperature::new(0.7).unwrap());
        let mut cfg = MetropolisConfig::swap(vec![2], 9);
        cfg.max_total_iterations = 2000;
        let out = swap_metropolis(&targets, &hot, &cfg).unwrap();
        let mut a = hot.clone();
        let mut b = out.populations.clone();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        assert_eq!(a, b);
        let again = swap_metropolis(&targets, &hot, &cfg).unwrap();
        assert_eq!(out.trace, again.trace);
    }

    #[test]
    fn small_dimension_swaps_pairs() {
        let targets = vec![vec![c(1.0, 0.0), c(-1.0, 0.0)]];
        let mut cfg = MetropolisConfig::swap(vec![2], 1);
        cfg.max_total_iterations = 10;
        let out = swap_metropolis(&targets, &[0.3, 0.7], &cfg).unwrap();
        assert_eq!(out.trace.iterations(), 10);
        assert!(out.trace.steps.iter().skip(1).all(|s| (s.cost - 0.4).abs() < 1e-15));
    }

    #[test]
    fn acceptance_law_matches_boltzmann_factor() {
        // chi-square over bins of ΔC at fixed T_eff
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let t_eff = 0.3;
        let bins = 10;
        let per_bin = 1000;
        let mut chi2 = 0.0;
        for b in 0..bins {
            let delta = 0.1 * (b as f64 + 0.5);
            let p = (-delta / t_eff).exp();
            let hits = (0..per_bin).filter(|_| accept(delta, t_eff, &mut rng)).count() as f64;
            let expected = p * per_bin as f64;
            chi2 += (hits - expected).powi(2) / (expected * (1.0 - p));
        }
        // 99.9% quantile of chi-square with 10 degrees of freedom
        assert!(chi2 < 29.59, "chi2 = {chi2}");
        assert!(accept(-1.0, 1e-300, &mut rng));
    }

    #[test]
    fn trace_csv() {
        let mut t = OptimizationTrace::default();
        t.steps.push(TraceStep { iteration: 0, cost: 0.5, temperature: 1.0, accepted: true });
        t.steps.push(TraceStep { iteration: 1, cost: 0.25, temperature: 0.999, accepted: false });
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().next().unwrap(), "iteration,cost,T_eff,accepted");
        assert!(text.lines().nth(2).unwrap().ends_with(",0"));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]
        #[test]
        fn ansatz_is_unitary(seed in 0u64..10_000, l in 1usize..5, fermionic in any::<bool>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = UnitaryAnsatz::random(l, fermionic, &mut rng).unwrap();
            prop_assert!(unitarity_defect(&build_ansatz_unitary(&a)) < 1e-12);
        }
    }
}
