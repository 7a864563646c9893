//! Hamiltonians, energy eigenbases, density matrices and state constructors.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, c, c64, re, CMat, ONE, ZERO};

/// Relative tolerance used to decide that two energy levels coincide.
pub const DEGENERACY_TOLERANCE: f64 = 1e-9;

const HERMITIAN_TOL: f64 = 1e-12;
const TRACE_TOL: f64 = 1e-10;
const POSITIVITY_TOL: f64 = 1e-10;

/// A Hermitian matrix, typically a Hamiltonian in energy units (ħ = k_B = 1).
#[derive(Clone, Debug)]
pub struct HermitianOperator {
    matrix: CMat,
}

impl HermitianOperator {
    pub fn new(matrix: CMat) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return invalid(format!(
                "operator must be square and non-empty, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            ));
        }
        let defect = linalg::hermiticity_defect(&matrix);
        let scale = linalg::max_abs(&matrix).max(1.0);
        if defect > HERMITIAN_TOL * scale {
            return invalid(format!("operator is not Hermitian (defect {defect:.3e})"));
        }
        // store the exactly Hermitian part
        Ok(Self { matrix: linalg::hermitian_part(&matrix) })
    }

    pub fn diagonal(values: &[f64]) -> Self {
        Self { matrix: linalg::diag_real(values) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }
}

/// Inverse temperature. Zero temperature is an explicit variant instead of a
/// huge float so that Boltzmann factors never overflow.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum InverseTemperature {
    Finite(f64),
    Infinite,
}

impl InverseTemperature {
    pub fn new(beta: f64) -> Result<Self> {
        if beta.is_nan() || beta < 0.0 {
            return invalid(format!("inverse temperature must be >= 0, got {beta}"));
        }
        if beta.is_infinite() {
            return Ok(Self::Infinite);
        }
        Ok(Self::Finite(beta))
    }

    /// `T = 0` maps to [`InverseTemperature::Infinite`].
    pub fn from_temperature(temperature: f64) -> Result<Self> {
        if temperature.is_nan() || temperature < 0.0 {
            return invalid(format!("temperature must be >= 0, got {temperature}"));
        }
        if temperature == 0.0 {
            Ok(Self::Infinite)
        } else {
            Self::new(1.0 / temperature)
        }
    }

    pub fn value(self) -> f64 {
        match self {
            Self::Finite(b) => b,
            Self::Infinite => f64::INFINITY,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Self::Infinite)
    }
}

/// Eigen-decomposition of a Hamiltonian with ascending energies.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    energies: Vec<f64>,
    vectors: CMat,
    degenerate: bool,
    min_spacing: f64,
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.energies.len()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Unitary whose columns are the energy eigenvectors.
    pub fn vectors(&self) -> &CMat {
        &self.vectors
    }

    pub fn is_degenerate(&self) -> bool {
        self.degenerate
    }

    pub fn min_spacing(&self) -> f64 {
        self.min_spacing
    }

    /// Fails with [`Error::Degenerate`] when two levels coincide.
    pub fn require_nondegenerate(&self) -> Result<()> {
        if self.degenerate {
            Err(Error::Degenerate { spacing: self.min_spacing })
        } else {
            Ok(())
        }
    }

    /// `V† m V`: components of `m` in the energy eigenbasis.
    pub fn to_energy_basis(&self, m: &CMat) -> CMat {
        &(self.vectors.adjoint() * m) * &self.vectors
    }

    /// `V m V†`.
    pub fn from_energy_basis(&self, m: &CMat) -> CMat {
        &(&self.vectors * m) * self.vectors.adjoint()
    }

    /// Reconstructs `H = V diag(h) V†`.
    pub fn reconstruct(&self) -> CMat {
        self.from_energy_basis(&linalg::diag_real(&self.energies))
    }

    /// Populations of `m` in the energy eigenbasis, `<n|m|n>`.
    pub fn populations(&self, m: &CMat) -> Vec<f64> {
        let d = self.dim();
        (0..d)
            .map(|n| {
                let mut acc = ZERO;
                for i in 0..d {
                    let vi = self.vectors[(i, n)].conj();
                    if vi == ZERO {
                        continue;
                    }
                    for j in 0..d {
                        acc += vi * m[(i, j)] * self.vectors[(j, n)];
                    }
                }
                acc.re
            })
            .collect()
    }
}

/// Diagonalizes a Hamiltonian. Energies come out ascending and each
/// eigenvector has its largest-magnitude component real and positive.
pub fn diagonalize(h: &HermitianOperator) -> Result<SpectralBasis> {
    let (energies, mut vectors) = linalg::eigh(h.matrix())?;
    let d = energies.len();
    for col in 0..d {
        let peak = (0..d).map(|i| vectors[(i, col)].norm()).fold(0.0, f64::max);
        let pivot = (0..d)
            .find(|&i| vectors[(i, col)].norm() >= peak * (1.0 - 1e-10))
            .unwrap_or(0);
        let z = vectors[(pivot, col)];
        let phase = if z.norm() > 0.0 { z.conj() / z.norm() } else { ONE };
        for i in 0..d {
            vectors[(i, col)] *= phase;
        }
    }
    let scale = linalg::max_abs(h.matrix()).max(1.0);
    let min_spacing = energies
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let degenerate = min_spacing < DEGENERACY_TOLERANCE * scale;
    Ok(SpectralBasis { energies, vectors, degenerate, min_spacing })
}

/// Normalized Boltzmann weights of the given (ascending) energies.
///
/// Computed relative to the ground energy so that no exponent is positive.
/// At infinite `beta` the weight is spread uniformly over the ground manifold.
pub fn thermal_populations(energies: &[f64], beta: InverseTemperature) -> Vec<f64> {
    log_thermal_populations(energies, beta)
        .into_iter()
        .map(f64::exp)
        .collect()
}

/// Natural log of [`thermal_populations`], accurate even where the weights underflow.
pub fn log_thermal_populations(energies: &[f64], beta: InverseTemperature) -> Vec<f64> {
    let ground = energies.iter().copied().fold(f64::INFINITY, f64::min);
    match beta {
        InverseTemperature::Finite(b) => {
            let exponents: Vec<f64> = energies.iter().map(|e| -b * (e - ground)).collect();
            let log_z = exponents.iter().map(|x| x.exp()).sum::<f64>().ln();
            exponents.into_iter().map(|x| x - log_z).collect()
        }
        InverseTemperature::Infinite => {
            let scale = energies.iter().fold(1.0f64, |m, e| m.max(e.abs()));
            let in_ground: Vec<bool> = energies
                .iter()
                .map(|e| (e - ground).abs() < DEGENERACY_TOLERANCE * scale)
                .collect();
            let count = in_ground.iter().filter(|&&g| g).count() as f64;
            in_ground
                .into_iter()
                .map(|g| if g { -count.ln() } else { f64::NEG_INFINITY })
                .collect()
        }
    }
}

/// Equilibrium free energy `-ln(Z) / beta`; the ground energy at zero temperature.
pub fn equilibrium_free_energy(energies: &[f64], beta: InverseTemperature) -> f64 {
    let ground = energies.iter().copied().fold(f64::INFINITY, f64::min);
    match beta {
        InverseTemperature::Finite(b) if b > 0.0 => {
            let z_shifted: f64 = energies.iter().map(|e| (-b * (e - ground)).exp()).sum();
            ground - z_shifted.ln() / b
        }
        InverseTemperature::Finite(_) => f64::NEG_INFINITY,
        InverseTemperature::Infinite => ground,
    }
}

/// A Hermitian, unit-trace, positive semidefinite matrix.
#[derive(Clone, Debug)]
pub struct DensityMatrix {
    matrix: CMat,
}

impl DensityMatrix {
    /// Validates the density-matrix invariants.
    pub fn new(matrix: CMat) -> Result<Self> {
        Self::with_tolerance(matrix, POSITIVITY_TOL)
    }

    /// Like [`DensityMatrix::new`] with a custom positivity tolerance.
    pub fn with_tolerance(matrix: CMat, positivity_tol: f64) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return invalid("density matrix must be square and non-empty");
        }
        let defect = linalg::hermiticity_defect(&matrix);
        if defect > HERMITIAN_TOL.max(positivity_tol) {
            return invalid(format!("density matrix is not Hermitian (defect {defect:.3e})"));
        }
        let tr = linalg::trace(&matrix);
        if (tr - ONE).norm() > TRACE_TOL.max(positivity_tol) {
            return invalid(format!("density matrix trace is {tr}, expected 1"));
        }
        let matrix = linalg::hermitian_part(&matrix);
        let min_eig = linalg::eigvalsh(&matrix)?[0];
        if min_eig < -positivity_tol {
            return invalid(format!("density matrix has negative eigenvalue {min_eig:.3e}"));
        }
        Ok(Self { matrix })
    }

    /// Wraps a matrix already known to be a state (Hermitian part is taken).
    pub(crate) fn from_raw(matrix: CMat) -> Self {
        Self { matrix: linalg::hermitian_part(&matrix) }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: linalg::scale(&linalg::identity(dim), re(1.0 / dim as f64)) }
    }

    /// `|psi><psi|` for a (not necessarily normalized) vector.
    pub fn pure(psi: &[c64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return invalid("state vector must be non-zero");
        }
        let d = psi.len();
        Ok(Self {
            matrix: Mat::from_fn(d, d, |i, j| psi[i] * psi[j].conj() / (norm * norm)),
        })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMat {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMat {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        linalg::trace(&self.matrix).re
    }

    pub fn purity(&self) -> f64 {
        linalg::trace_product(&self.matrix, &self.matrix).re
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        linalg::eigvalsh(&self.matrix)
    }

    /// `U rho U†`.
    pub fn conjugate_by(&self, u: &CMat) -> Self {
        Self::from_raw(&(u * &self.matrix) * u.adjoint())
    }
}

/// Gibbs state `exp(-beta H) / Z`, diagonal in the energy eigenbasis.
pub fn thermal_state(basis: &SpectralBasis, beta: InverseTemperature) -> DensityMatrix {
    let pops = thermal_populations(basis.energies(), beta);
    DensityMatrix::from_raw(basis.from_energy_basis(&linalg::diag_real(&pops)))
}

fn haar_vector(rng: &mut impl Rng, dim: usize) -> Vec<c64> {
    let mut v: Vec<c64> = (0..dim)
        .map(|_| c(rng.sample(StandardNormal), rng.sample(StandardNormal)))
        .collect();
    let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for z in &mut v {
        *z /= norm;
    }
    v
}

/// Rank-one projector onto a Haar-random vector (normalized complex Gaussian).
pub fn random_pure_state(dim: usize, seed: u64) -> Result<DensityMatrix> {
    if dim < 2 {
        return invalid(format!("dimension must be >= 2, got {dim}"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DensityMatrix::pure(&haar_vector(&mut rng, dim))
}

/// Uniform average of `n_samples` Haar-random pure states drawn from one seeded stream.
pub fn random_mixed_state(dim: usize, n_samples: usize, seed: u64) -> Result<DensityMatrix> {
    if dim < 2 {
        return invalid(format!("dimension must be >= 2, got {dim}"));
    }
    if n_samples == 0 {
        return invalid("need at least one sample");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = Mat::<c64>::zeros(dim, dim);
    let w = 1.0 / n_samples as f64;
    for _ in 0..n_samples {
        let v = haar_vector(&mut rng, dim);
        for i in 0..dim {
            for j in 0..dim {
                acc[(i, j)] += v[i] * v[j].conj() * w;
            }
        }
    }
    Ok(DensityMatrix::from_raw(acc))
}

/// Haar-random unitary from the QR decomposition of a complex Ginibre matrix.
pub fn random_unitary(dim: usize, rng: &mut impl Rng) -> CMat {
    let g = Mat::from_fn(dim, dim, |_, _| {
        c(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    let qr = g.qr();
    let q = qr.compute_Q();
    let r = qr.R();
    // fix the phases so the distribution is exactly Haar
    Mat::from_fn(dim, dim, |i, j| {
        let rjj = r[(j, j)];
        let phase = if rjj.norm() > 0.0 { rjj / rjj.norm() } else { ONE };
        q[(i, j)] * phase
    })
}

/// Pauli matrices and qubit ladder operators in the computational basis
/// `{|0>, |1>}`, with `sigma_z |0> = |0>`.
pub mod pauli {
    use super::*;

    pub fn x() -> CMat {
        Mat::from_fn(2, 2, |i, j| if i != j { ONE } else { ZERO })
    }

    pub fn y() -> CMat {
        let mut m = Mat::zeros(2, 2);
        m[(0, 1)] = c(0.0, -1.0);
        m[(1, 0)] = c(0.0, 1.0);
        m
    }

    pub fn z() -> CMat {
        linalg::diag_real(&[1.0, -1.0])
    }

    /// `|0><1|`
    pub fn raising() -> CMat {
        let mut m = Mat::zeros(2, 2);
        m[(0, 1)] = ONE;
        m
    }

    /// `|1><0|`
    pub fn lowering() -> CMat {
        let mut m = Mat::zeros(2, 2);
        m[(1, 0)] = ONE;
        m
    }
}

/// Bloch vector of a qubit state.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochVector([f64; 3]);

impl BlochVector {
    pub fn new(r: [f64; 3]) -> Result<Self> {
        let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        if !norm.is_finite() || norm > 1.0 + 1e-12 {
            return invalid(format!("Bloch vector norm {norm} exceeds 1"));
        }
        Ok(Self(r))
    }

    pub fn components(&self) -> [f64; 3] {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

/// `(I + r·sigma) / 2`.
pub fn bloch_to_state(r: &BlochVector) -> DensityMatrix {
    let [x, y, z] = r.0;
    let mut m = Mat::zeros(2, 2);
    m[(0, 0)] = re((1.0 + z) / 2.0);
    m[(1, 1)] = re((1.0 - z) / 2.0);
    m[(0, 1)] = c(x / 2.0, -y / 2.0);
    m[(1, 0)] = c(x / 2.0, y / 2.0);
    DensityMatrix { matrix: m }
}

pub fn state_to_bloch(rho: &DensityMatrix) -> Result<BlochVector> {
    if rho.dim() != 2 {
        return invalid(format!("Bloch vectors need a qubit, got dimension {}", rho.dim()));
    }
    let m = rho.matrix();
    let off = m[(1, 0)];
    BlochVector::new([2.0 * off.re, 2.0 * off.im, (m[(0, 0)] - m[(1, 1)]).re])
}

/// Removes all coherences in the energy eigenbasis.
pub fn dephase(rho: &DensityMatrix, basis: &SpectralBasis) -> Result<DensityMatrix> {
    if rho.dim() != basis.dim() {
        return Err(Error::DimensionMismatch { expected: basis.dim(), found: rho.dim() });
    }
    let pops = basis.populations(rho.matrix());
    Ok(DensityMatrix::from_raw(basis.from_energy_basis(&linalg::diag_real(&pops))))
}
