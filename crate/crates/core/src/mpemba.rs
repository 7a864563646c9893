//! The exact Mpemba transformation `U = U₂U₁`, overlap certificates, crossing
//! detection and the majorization check.
//!
//! `U₁` diagonalizes `ρ` and `U₂` places its eigenvalues on the energy levels in
//! ascending order, so the smallest population sits on the ground state.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use faer::Mat;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::davies::DaviesGenerator;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, CMat, ZERO};
use crate::operators::{self, DensityMatrix, HermitianOperator, InverseTemperature, SpectralBasis};
use crate::spectral::{self, EvolutionGrid, GeneratorSpectrum};
use crate::thermo::{self, fmt17, ThermoTrajectory};

/// Overlaps at or below this are treated as eliminated.
pub const OVERLAP_TOL: f64 = 1e-10;

/// `(ρ', U)` with `ρ' = U ρ U†` diagonal in the energy eigenbasis and carrying the
/// eigenvalues of `ρ` in ascending order against ascending energies.
///
/// Equal eigenvalues keep the order the Hermitian eigensolver returns them in.
pub fn exact_transform(rho: &DensityMatrix, basis: &SpectralBasis) -> Result<(DensityMatrix, CMat)> {
    basis.require_nondegenerate()?;
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: rho.dim() });
    }
    let (vals, w) = linalg::eigh(rho.matrix())?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let d = rho.dim();
    let w_sorted = Mat::from_fn(d, d, |i, j| w[(i, order[j])]);
    let u = basis.vectors() * w_sorted.adjoint();
    let pops: Vec<f64> = order.iter().map(|&k| vals[k].max(0.0)).collect();
    let total: f64 = pops.iter().sum();
    let pops: Vec<f64> = pops.iter().map(|p| p / total).collect();
    let rho_t = DensityMatrix::new(basis.from_energy_basis(&linalg::diag_real(&pops)))?;
    Ok((rho_t, u))
}

/// `|Tr(l_k ρ)|` for every coherent mode `k` (1-based): modes of the coherence block,
/// or modes with non-real eigenvalues when the spectrum came from the dense route.
pub fn coherent_overlaps(spec: &GeneratorSpectrum, rho: &DensityMatrix) -> Result<BTreeMap<usize, f64>> {
    let amps = spec.amplitudes(rho)?;
    let scale = spec.eigenvalues().iter().map(|l| l.norm()).fold(1.0, f64::max);
    Ok(spec
        .modes()
        .iter()
        .enumerate()
        .filter(|(_, m)| match m.coherence() {
            Some(_) => true,
            None => !m.is_population() && m.eigenvalue().im.abs() > 1e-9 * scale,
        })
        .map(|(i, _)| (i + 1, amps[i].norm()))
        .collect())
}

/// Overlap certificate for a transformed state.
#[derive(Clone, Debug)]
pub struct OverlapCertificate {
    pub overlaps: BTreeMap<usize, f64>,
    pub max_overlap: f64,
    pub eliminated: bool,
}

/// Checks that every coherent-mode overlap of `rho_t` is at most [`OVERLAP_TOL`].
pub fn verify_overlap_elimination(spec: &GeneratorSpectrum, rho_t: &DensityMatrix) -> Result<OverlapCertificate> {
    let overlaps = coherent_overlaps(spec, rho_t)?;
    let max_overlap = overlaps.values().copied().fold(0.0, f64::max);
    Ok(OverlapCertificate { overlaps, max_overlap, eliminated: max_overlap <= OVERLAP_TOL })
}

/// Smallest time after which `b` stays strictly below `a` through the end of the
/// grid, linearly interpolated inside the bracketing interval.
///
/// Requires `b[0] > a[0]`. The comparison stops at the first point where both curves
/// are at or below `floor`, since their order there is set by roundoff. `None` when
/// `b` is still at or above `a` at the last compared point.
pub fn crossing_time(times: &[f64], a: &[f64], b: &[f64], floor: f64) -> Result<Option<f64>> {
    if a.len() != times.len() || b.len() != times.len() || times.is_empty() {
        return Err(Error::GridMismatch);
    }
    if !(b[0] > a[0]) {
        return invalid("the second curve must start strictly above the first");
    }
    let end = (0..times.len()).find(|&i| a[i] <= floor && b[i] <= floor).unwrap_or(times.len());
    let diff: Vec<f64> = a[..end].iter().zip(&b[..end]).map(|(x, y)| y - x).collect();
    let Some(last_above) = diff.iter().rposition(|&x| !(x < 0.0)) else {
        return Ok(Some(times[0]));
    };
    if last_above + 1 == diff.len() {
        return Ok(None);
    }
    let (i, j) = (last_above, last_above + 1);
    let frac = diff[i] / (diff[i] - diff[j]);
    Ok(Some(times[i] + frac * (times[j] - times[i])))
}

/// Resolution of `D` along computed trajectories.
pub const ENTROPY_FLOOR: f64 = 1e-14;

/// Crossing of the non-equilibrium free energies, `b` being the transformed state.
///
/// Both trajectories must share the time grid and inverse temperature. The curves
/// are compared through `D`, which orders states the same way as `F_neq` at fixed
/// `beta` but keeps full relative precision near equilibrium.
pub fn detect_crossing(a: &ThermoTrajectory, b: &ThermoTrajectory) -> Result<Option<f64>> {
    if a.times != b.times || a.beta != b.beta {
        return Err(Error::GridMismatch);
    }
    crossing_time(&a.times, &a.relative_entropy, &b.relative_entropy, ENTROPY_FLOOR)
}

/// Outcome of the Haar-sampled majorization test.
#[derive(Clone, Debug)]
pub struct MajorizationReport {
    pub samples: usize,
    /// `max_V F_neq(V ρ' V†) - F_neq(ρ')`; at most `1e-10` when the theorem holds.
    pub max_free_energy_excess: f64,
    pub free_energy_violations: usize,
    pub majorization_violations: usize,
}

impl MajorizationReport {
    pub fn holds(&self) -> bool {
        self.free_energy_violations == 0 && self.majorization_violations == 0
    }
}

/// Whether `p` majorizes `q`: equal sums and dominating partial sums of the
/// descending rearrangements.
pub fn majorizes(p: &[f64], q: &[f64], tol: f64) -> bool {
    if p.len() != q.len() {
        return false;
    }
    let mut ps = p.to_vec();
    let mut qs = q.to_vec();
    ps.sort_by(|a, b| b.total_cmp(a));
    qs.sort_by(|a, b| b.total_cmp(a));
    let (mut sp, mut sq) = (0.0, 0.0);
    for (x, y) in ps.iter().zip(&qs) {
        sp += x;
        sq += y;
        if sp < sq - tol {
            return false;
        }
    }
    (sp - sq).abs() <= tol
}

/// Samples `n` Haar unitaries `V` and checks `F_neq(V ρ' V†) ≤ F_neq(ρ') + 1e-10` and
/// that the energy populations of `ρ'` majorize those of `V ρ' V†`.
///
/// Sample `i` draws from stream `i` of a ChaCha generator keyed by `seed`, so the
/// result does not depend on the thread count.
pub fn majorization_check(
    rho_t: &DensityMatrix,
    h: &HermitianOperator,
    basis: &SpectralBasis,
    beta: InverseTemperature,
    n: usize,
    seed: u64,
) -> Result<MajorizationReport> {
    let f_ref = thermo::noneq_free_energy(rho_t, h, beta)?;
    let p_ref = basis.populations(rho_t.matrix());
    let per_sample: Vec<(f64, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let v = operators::random_unitary(rho_t.dim(), &mut rng);
            let rotated = rho_t.conjugate_by(&v);
            let f = thermo::noneq_free_energy(&rotated, h, beta)?;
            let q = basis.populations(rotated.matrix());
            Ok((f - f_ref, majorizes(&p_ref, &q, 1e-12)))
        })
        .collect::<Result<_>>()?;
    Ok(MajorizationReport {
        samples: n,
        max_free_energy_excess: per_sample.iter().map(|s| s.0).fold(f64::NEG_INFINITY, f64::max),
        free_energy_violations: per_sample.iter().filter(|s| s.0 > 1e-10).count(),
        majorization_violations: per_sample.iter().filter(|s| !s.1).count(),
    })
}

/// Log-slope over the final third of the points above `floor`.
pub fn tail_rate(times: &[f64], values: &[f64], floor: f64) -> Option<f64> {
    let valid: Vec<usize> = (0..times.len()).filter(|&i| values[i] > floor).collect();
    if valid.len() < 6 {
        return None;
    }
    let tail = &valid[2 * valid.len() / 3..];
    let t: Vec<f64> = tail.iter().map(|&i| times[i]).collect();
    let y: Vec<f64> = tail.iter().map(|&i| values[i]).collect();
    spectral::fit_log_slope(&t, &y, 0.0)
}

/// Floor below which L1 distances are treated as roundoff.
pub const L1_FLOOR: f64 = 1e-12;

/// Whether a genuine Mpemba effect can be claimed for the input.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Applicability {
    Applicable,
    /// The transform leaves the input unchanged, for instance a diagonal state
    /// whose populations are already inverted.
    AlreadyInverted,
}

/// Evidence that the exact transform produces a genuine Mpemba effect.
#[derive(Clone, Debug)]
pub struct MpembaCertificate {
    pub applicability: Applicability,
    /// `|Tr(l_k ρ')|` for every coherent mode `k`.
    pub residual_overlaps: BTreeMap<usize, f64>,
    /// `F_neq(ρ') - F_neq(ρ)`.
    pub free_energy_gain: f64,
    pub crossing_time: Option<f64>,
    /// Fitted L1-tail log-slopes `(before, after)`; negative for decay.
    pub fitted_rates: (Option<f64>, Option<f64>),
    /// `Re λ₂` and the real part of the slowest mode with a surviving amplitude.
    pub predicted_rates: (f64, Option<f64>),
    pub horizon: f64,
}

impl MpembaCertificate {
    pub fn max_residual_overlap(&self) -> f64 {
        self.residual_overlaps.values().copied().fold(0.0, f64::max)
    }

    /// Overlaps eliminated, free energy raised and a crossing found.
    pub fn is_genuine(&self) -> bool {
        self.applicability == Applicability::Applicable
            && self.max_residual_overlap() <= OVERLAP_TOL
            && self.free_energy_gain > 0.0
            && self.crossing_time.is_some()
    }

    /// Plain `key: value` report.
    pub fn write_report(&self, mut w: impl Write) -> io::Result<()> {
        write!(w, "{self}")
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(fmt17).unwrap_or_else(|| "none".into())
}

impl fmt::Display for MpembaCertificate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = match self.applicability {
            Applicability::Applicable if self.is_genuine() => "genuine",
            Applicability::Applicable => "not certified",
            Applicability::AlreadyInverted => "not applicable (transform leaves the input unchanged)",
        };
        writeln!(f, "status: {status}")?;
        writeln!(f, "free_energy_gain: {}", fmt17(self.free_energy_gain))?;
        writeln!(f, "crossing_time: {}", opt(self.crossing_time))?;
        writeln!(f, "horizon: {}", fmt17(self.horizon))?;
        writeln!(f, "rate_before: {}", opt(self.fitted_rates.0))?;
        writeln!(f, "rate_after: {}", opt(self.fitted_rates.1))?;
        writeln!(f, "predicted_before: {}", fmt17(self.predicted_rates.0))?;
        writeln!(f, "predicted_after: {}", opt(self.predicted_rates.1))?;
        writeln!(f, "max_residual_overlap: {}", fmt17(self.max_residual_overlap()))?;
        writeln!(f, "residual_overlaps:")?;
        for (k, v) in &self.residual_overlaps {
            writeln!(f, "  {k}: {}", fmt17(*v))?;
        }
        Ok(())
    }
}

/// Real part of the slowest non-stationary mode whose amplitude on `rho` exceeds
/// [`OVERLAP_TOL`].
pub fn slowest_surviving_rate(spec: &GeneratorSpectrum, rho: &DensityMatrix) -> Result<Option<f64>> {
    let amps = spec.amplitudes(rho)?;
    Ok((2..=spec.len()).find(|&k| amps[k - 1].norm() > OVERLAP_TOL).map(|k| spec.eigenvalue(k).re))
}

/// Both trajectories of a transform experiment.
#[derive(Clone, Debug)]
pub struct MpembaRun {
    pub transformed: DensityMatrix,
    pub unitary: CMat,
    pub original: EvolutionGrid,
    pub evolved_transformed: EvolutionGrid,
    pub thermo_original: ThermoTrajectory,
    pub thermo_transformed: ThermoTrajectory,
    pub certificate: MpembaCertificate,
}

fn evolve(g: &DaviesGenerator, spec: &GeneratorSpectrum, rho: &DensityMatrix, times: &[f64]) -> Result<EvolutionGrid> {
    if g.blocks().is_some() {
        spectral::evolve_structured(g, rho, times)
    } else {
        spectral::evolve_spectral(spec, rho, times)
    }
}

/// Applies the exact transform to `rho`, evolves both states over `times` and
/// assembles the certificate. The grid should reach at least `10 / |Re λ₂|`.
pub fn run(g: &DaviesGenerator, spec: &GeneratorSpectrum, rho: &DensityMatrix, times: &[f64]) -> Result<MpembaRun> {
    let (rho_t, u) = exact_transform(rho, g.basis())?;
    run_transformed(g, spec, rho, rho_t, u, times)
}

/// Certificate and trajectories for an already transformed state `rho_t = U rho U†`,
/// such as one found by a Metropolis search.
pub fn run_transformed(
    g: &DaviesGenerator,
    spec: &GeneratorSpectrum,
    rho: &DensityMatrix,
    rho_t: DensityMatrix,
    u: CMat,
    times: &[f64],
) -> Result<MpembaRun> {
    if rho_t.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: rho_t.dim() });
    }
    let basis = g.basis();
    let overlaps = verify_overlap_elimination(spec, &rho_t)?;
    let beta = g.beta();
    let h = g.hamiltonian();
    let gain = thermo::noneq_free_energy(&rho_t, h, beta)? - thermo::noneq_free_energy(rho, h, beta)?;
    let already = linalg::max_abs_diff(rho.matrix(), rho_t.matrix()) <= 1e-12;
    let original = evolve(g, spec, rho, times)?;
    let evolved_t = evolve(g, spec, &rho_t, times)?;
    let th_o = ThermoTrajectory::from_grid(&original, h, basis, beta)?;
    let th_t = ThermoTrajectory::from_grid(&evolved_t, h, basis, beta)?;
    let crossing = if already || !(th_t.relative_entropy[0] > th_o.relative_entropy[0]) {
        None
    } else {
        detect_crossing(&th_o, &th_t)?
    };
    let certificate = MpembaCertificate {
        applicability: if already { Applicability::AlreadyInverted } else { Applicability::Applicable },
        residual_overlaps: overlaps.overlaps,
        free_energy_gain: gain,
        crossing_time: crossing,
        fitted_rates: (tail_rate(times, &th_o.l1, L1_FLOOR), tail_rate(times, &th_t.l1, L1_FLOOR)),
        predicted_rates: (spec.eigenvalue(2).re, slowest_surviving_rate(spec, &rho_t)?),
        horizon: times.last().copied().unwrap_or(0.0),
    };
    Ok(MpembaRun {
        transformed: rho_t,
        unitary: u,
        original,
        evolved_transformed: evolved_t,
        thermo_original: th_o,
        thermo_transformed: th_t,
        certificate,
    })
}

/// `Σ_k |Tr(l_k ρ)|` over 1-based mode indices.
pub fn overlap_sum(spec: &GeneratorSpectrum, rho: &DensityMatrix, modes: &[usize]) -> Result<f64> {
    modes.iter().map(|&k| spec.amplitude(k, rho).map(|a| a.norm())).sum()
}

/// Whether `m` is diagonal in the energy eigenbasis up to `tol`.
pub fn is_energy_diagonal(m: &CMat, basis: &SpectralBasis, tol: f64) -> bool {
    let e = basis.to_energy_basis(m);
    let d = e.nrows();
    (0..d).all(|i| (0..d).all(|j| i == j || (e[(i, j)] - ZERO).norm() <= tol))
}
