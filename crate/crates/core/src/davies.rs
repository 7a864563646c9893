//! Davies generators: dense vectorized form and the population/coherence block form.
//!
//! Jump amplitudes live in the energy eigenbasis. `J[a, b]` is the amplitude of
//! the transition `|b> -> |a>`, so the corresponding jump operator is
//! `J[a, b] |a><b|` and the rate is its square. Rates therefore scale as `gamma²`.

use std::io::{self, Write};

use faer::Mat;

use crate::error::{invalid, Error, Result};
use crate::linalg::{self, c, c64, re, CMat, I, ZERO};
use crate::operators::{
    self, DensityMatrix, HermitianOperator, InverseTemperature, SpectralBasis,
};

/// Quantum statistics of the bath modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Statistics {
    Bose,
    Fermi,
}

/// Mean Bose occupation `1 / (e^{beta x} - 1)` for `x > 0`.
pub fn bose_occupation(beta: InverseTemperature, x: f64) -> f64 {
    match beta {
        InverseTemperature::Finite(b) => 1.0 / (b * x).exp_m1(),
        InverseTemperature::Infinite => 0.0,
    }
}

/// Fermi occupation `1 / (e^{beta x} + 1)`.
pub fn fermi_occupation(beta: InverseTemperature, x: f64) -> f64 {
    match beta {
        InverseTemperature::Finite(b) => {
            let y = b * x;
            if y >= 0.0 {
                let e = (-y).exp();
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + y.exp())
            }
        }
        InverseTemperature::Infinite if x > 0.0 => 0.0,
        InverseTemperature::Infinite if x < 0.0 => 1.0,
        InverseTemperature::Infinite => 0.5,
    }
}

/// Thermal bath: inverse temperature, statistics and coupling `gamma`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BathSpec {
    beta: InverseTemperature,
    statistics: Statistics,
    gamma: f64,
}

impl BathSpec {
    pub fn new(beta: InverseTemperature, statistics: Statistics, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return invalid(format!("coupling gamma must be > 0, got {gamma}"));
        }
        if statistics == Statistics::Bose && beta == InverseTemperature::Finite(0.0) {
            return invalid("Bose occupations diverge at beta = 0");
        }
        Ok(Self { beta, statistics, gamma })
    }

    pub fn beta(&self) -> InverseTemperature {
        self.beta
    }

    pub fn statistics(&self) -> Statistics {
        self.statistics
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `(w_down, w_up)` for a Bohr frequency `x > 0`; `w_up / w_down = e^{-beta x}`.
    pub fn weights(&self, x: f64) -> (f64, f64) {
        match self.statistics {
            Statistics::Bose => {
                let n = bose_occupation(self.beta, x);
                (1.0 + n, n)
            }
            Statistics::Fermi => {
                let f = fermi_occupation(self.beta, x);
                (fermi_occupation(self.beta, -x), f)
            }
        }
    }
}

/// Real, non-negative jump amplitudes in the energy eigenbasis with zero diagonal.
#[derive(Clone, Debug)]
pub struct JumpMatrix {
    amplitudes: Mat<f64>,
}

impl JumpMatrix {
    pub fn new(amplitudes: Mat<f64>) -> Result<Self> {
        let d = amplitudes.nrows();
        if d != amplitudes.ncols() || d == 0 {
            return invalid("jump matrix must be square and non-empty");
        }
        for j in 0..d {
            if amplitudes[(j, j)] != 0.0 {
                return invalid(format!("jump matrix diagonal entry {j} is non-zero"));
            }
            for i in 0..d {
                let a = amplitudes[(i, j)];
                if !(a >= 0.0 && a.is_finite()) {
                    return invalid(format!("jump amplitude ({i}, {j}) = {a} is not >= 0"));
                }
            }
        }
        Ok(Self { amplitudes })
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.nrows()
    }

    pub fn amplitudes(&self) -> &Mat<f64> {
        &self.amplitudes
    }

    pub fn rate(&self, target: usize, source: usize) -> f64 {
        let a = self.amplitudes[(target, source)];
        a * a
    }

    /// Total escape rate out of level `source`.
    pub fn escape_rate(&self, source: usize) -> f64 {
        (0..self.dim()).map(|a| self.rate(a, source)).sum()
    }

    pub fn nonzero_count(&self) -> usize {
        let d = self.dim();
        (0..d)
            .flat_map(|i| (0..d).map(move |j| (i, j)))
            .filter(|&(i, j)| self.amplitudes[(i, j)] != 0.0)
            .count()
    }
}

/// Davies jump amplitudes for every ordered pair of levels.
///
/// For `h_n > h_m` the downward amplitude `J[m, n] = gamma sqrt(w_down)` sits
/// in the upper triangle and the upward amplitude `J[n, m] = gamma sqrt(w_up)`
/// in the lower triangle.
pub fn build_jump_matrix(basis: &SpectralBasis, bath: &BathSpec) -> Result<JumpMatrix> {
    basis.require_nondegenerate()?;
    jump_matrix_over_gaps(basis, bath, false)
}

/// Like [`build_jump_matrix`] but tolerates degenerate levels: pairs with a
/// vanishing Bohr frequency get no jump. The result depends on the eigenbasis
/// chosen inside each degenerate subspace and only feeds the dense generator.
pub fn build_jump_matrix_degenerate(basis: &SpectralBasis, bath: &BathSpec) -> Result<JumpMatrix> {
    jump_matrix_over_gaps(basis, bath, true)
}

fn jump_matrix_over_gaps(basis: &SpectralBasis, bath: &BathSpec, skip_zero: bool) -> Result<JumpMatrix> {
    let h = basis.energies();
    let d = h.len();
    let scale = h.iter().fold(1.0f64, |a, e| a.max(e.abs()));
    let mut amps = Mat::<f64>::zeros(d, d);
    for n in 0..d {
        for m in 0..n {
            let x = h[n] - h[m];
            if x < operators::DEGENERACY_TOLERANCE * scale {
                if skip_zero {
                    continue;
                }
                return Err(Error::Degenerate { spacing: x });
            }
            let (down, up) = bath.weights(x);
            amps[(m, n)] = bath.gamma * down.sqrt();
            amps[(n, m)] = bath.gamma * up.sqrt();
        }
    }
    JumpMatrix::new(amps)
}

/// Jump operators `J[a, b] V|a><b|V†` in the original basis, one per non-zero amplitude.
pub fn jump_operators(basis: &SpectralBasis, jumps: &JumpMatrix) -> Vec<CMat> {
    let d = basis.dim();
    let v = basis.vectors();
    let mut ops = Vec::new();
    for b in 0..d {
        for a in 0..d {
            let amp = jumps.amplitudes()[(a, b)];
            if amp == 0.0 {
                continue;
            }
            ops.push(Mat::from_fn(d, d, |i, j| v[(i, a)] * v[(j, b)].conj() * amp));
        }
    }
    ops
}

/// Vectorized Lindbladian for an arbitrary Hamiltonian and list of jump operators:
/// `-iH⊗1 + i1⊗Hᵀ + Σ L⊗conj(L) - ½ L†L⊗1 - ½ 1⊗(L†L)ᵀ`.
pub fn lindbladian_dense(h: &CMat, jump_ops: &[CMat]) -> CMat {
    let d = h.nrows();
    let mut k = Mat::<c64>::zeros(d, d);
    for l in jump_ops {
        k += l.adjoint() * l;
    }
    let mut g = coherent_and_anticommutator(h, &k);
    for l in jump_ops {
        add_kron_conj(&mut g, l);
    }
    g
}

/// `-iH⊗1 + i1⊗Hᵀ - ½ K⊗1 - ½ 1⊗Kᵀ`.
fn coherent_and_anticommutator(h: &CMat, k: &CMat) -> CMat {
    let d = h.nrows();
    let left = linalg::lincomb(&[(-I, h), (re(-0.5), k)]);
    let right = linalg::lincomb(&[(I, h), (re(-0.5), k)]);
    let mut g = Mat::<c64>::zeros(d * d, d * d);
    for i in 0..d {
        for k_ in 0..d {
            let row = i * d + k_;
            // (A ⊗ 1)[(i,k),(j,k)] = A[i,j]
            for j in 0..d {
                g[(row, j * d + k_)] += left[(i, j)];
            }
            // (1 ⊗ Bᵀ)[(i,k),(i,l)] = B[l,k]
            for l in 0..d {
                g[(row, i * d + l)] += right[(l, k_)];
            }
        }
    }
    g
}

/// `g += L ⊗ conj(L)` without materializing the Kronecker product.
fn add_kron_conj(g: &mut CMat, l: &CMat) {
    let d = l.nrows();
    for j in 0..d {
        for i in 0..d {
            let a = l[(i, j)];
            if a == ZERO {
                continue;
            }
            for ll in 0..d {
                for k in 0..d {
                    let b = l[(k, ll)];
                    if b != ZERO {
                        g[(i * d + k, j * d + ll)] += a * b.conj();
                    }
                }
            }
        }
    }
}

/// Dense vectorized Davies generator in the original basis of `h`.
///
/// Mathematically identical to [`lindbladian_dense`] over [`jump_operators`];
/// the jump sum is factored through the eigenbasis, costing `O(d⁵)` instead of `O(d⁶)`.
pub fn build_dense_generator(
    basis: &SpectralBasis,
    h: &HermitianOperator,
    jumps: &JumpMatrix,
) -> Result<CMat> {
    let d = basis.dim();
    if h.dim() != d || jumps.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: h.dim().min(jumps.dim()) });
    }
    let v = basis.vectors();
    let escape: Vec<f64> = (0..d).map(|b| jumps.escape_rate(b)).collect();
    // Σ L†L = V diag(escape) V†
    let k = basis.from_energy_basis(&linalg::diag_real(&escape));
    let mut g = coherent_and_anticommutator(h.matrix(), &k);

    // Σ_{a,b} rate(a,b) vec(v_a v_a†) vec(v_b v_b†)^H as (d²×d)(d×d)(d×d²)
    let outer = Mat::from_fn(d * d, d, |r, a| v[(r / d, a)] * v[(r % d, a)].conj());
    let rates = Mat::from_fn(d, d, |a, b| re(jumps.rate(a, b)));
    g += &(&outer * &rates) * outer.adjoint();
    Ok(g)
}

/// Classical rate matrix: `J∘J` off the diagonal, minus escape rates on it.
pub fn build_population_block(jumps: &JumpMatrix) -> Mat<f64> {
    let d = jumps.dim();
    Mat::from_fn(d, d, |i, j| {
        if i == j {
            -jumps.escape_rate(j)
        } else {
            jumps.rate(i, j)
        }
    })
}

/// Diagonal generator entry acting on the energy-basis coherence `|n><m|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherenceEntry {
    pub n: usize,
    pub m: usize,
    /// Row-major vectorized index `n * d + m`.
    pub position: usize,
    pub value: c64,
}

/// Coherence eigenvalues `-½(Γ_n + Γ_m) + i(h_m - h_n)` for every ordered pair `n != m`,
/// with `Γ_b` the escape rate of level `b`.
pub fn build_coherence_diagonal(
    basis: &SpectralBasis,
    jumps: &JumpMatrix,
) -> Result<Vec<CoherenceEntry>> {
    basis.require_nondegenerate()?;
    let d = basis.dim();
    if jumps.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: jumps.dim() });
    }
    let h = basis.energies();
    let escape: Vec<f64> = (0..d).map(|b| jumps.escape_rate(b)).collect();
    let mut out = Vec::with_capacity(d * (d - 1));
    for n in 0..d {
        for m in 0..d {
            if n != m {
                out.push(CoherenceEntry {
                    n,
                    m,
                    position: n * d + m,
                    value: c(-0.5 * (escape[n] + escape[m]), h[m] - h[n]),
                });
            }
        }
    }
    Ok(out)
}

/// Largest violation of detailed balance of the dissipative part of `g`
/// with respect to the inner product `<A, B> = Tr(tau A† B)`.
///
/// The dissipator `D = G + i[H, ·]` is extracted using `h`. In vectorized form
/// the inner product is `vec(A)^H K vec(B)` with `K = 1 ⊗ tauᵀ`, and
/// self-adjointness of `D†` reads `K M^H = M K` for the matrix `M` of `D`.
pub fn verify_detailed_balance(g: &CMat, h: &CMat, tau: &CMat) -> Result<f64> {
    let d = tau.nrows();
    if g.nrows() != d * d || h.nrows() != d {
        return Err(Error::DimensionMismatch { expected: d * d, found: g.nrows() });
    }
    let unitary = coherent_and_anticommutator(h, &Mat::zeros(d, d));
    let m = g - &unitary;
    let k = linalg::kron(&linalg::identity(d), &linalg::transpose(tau));
    let lhs = &k * m.adjoint();
    let rhs = &m * &k;
    Ok(linalg::max_abs_diff(&lhs, &rhs))
}

/// Which representations of the generator to assemble.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Representation {
    /// Population block and coherence list only. Never allocates a `d²×d²` matrix.
    Block,
    Dense,
    Both,
}

impl Representation {
    fn wants_block(self) -> bool {
        matches!(self, Self::Block | Self::Both)
    }

    fn wants_dense(self) -> bool {
        matches!(self, Self::Dense | Self::Both)
    }
}

/// Source of the dissipative part.
#[derive(Clone, Debug)]
pub enum Dissipators {
    /// Generic Davies recipe from the Hamiltonian spectrum.
    Bath(BathSpec),
    /// Energy-basis jump amplitudes given directly.
    Jumps { beta: InverseTemperature, jumps: JumpMatrix },
    /// Explicit jump operators in the original basis; dense representation only.
    Operators { beta: InverseTemperature, operators: Vec<CMat> },
}

/// Block form: classical rate matrix on populations plus diagonal coherence entries.
#[derive(Clone, Debug)]
pub struct BlockForm {
    pub pop_block: Mat<f64>,
    pub coherences: Vec<CoherenceEntry>,
}

/// A Lindblad generator with a thermal fixed point, in dense and/or block form.
#[derive(Clone, Debug)]
pub struct DaviesGenerator {
    hamiltonian: HermitianOperator,
    basis: SpectralBasis,
    beta: InverseTemperature,
    jumps: Option<JumpMatrix>,
    dense: Option<CMat>,
    blocks: Option<BlockForm>,
}

impl DaviesGenerator {
    pub fn new(
        hamiltonian: &HermitianOperator,
        dissipators: Dissipators,
        representation: Representation,
    ) -> Result<Self> {
        let basis = operators::diagonalize(hamiltonian)?;
        let d = basis.dim();
        let (beta, jumps, operators) = match dissipators {
            Dissipators::Bath(bath) => {
                let jumps = if basis.is_degenerate() && !representation.wants_block() {
                    build_jump_matrix_degenerate(&basis, &bath)?
                } else {
                    build_jump_matrix(&basis, &bath)?
                };
                (bath.beta, Some(jumps), None)
            }
            Dissipators::Jumps { beta, jumps } => {
                if jumps.dim() != d {
                    return Err(Error::DimensionMismatch { expected: d, found: jumps.dim() });
                }
                (beta, Some(jumps), None)
            }
            Dissipators::Operators { beta, operators } => {
                if let Some(bad) = operators.iter().find(|l| l.nrows() != d || l.ncols() != d) {
                    return Err(Error::DimensionMismatch { expected: d, found: bad.nrows() });
                }
                (beta, None, Some(operators))
            }
        };

        let blocks = if representation.wants_block() {
            let Some(jumps) = jumps.as_ref() else {
                return invalid("explicit jump operators only support the dense representation");
            };
            Some(BlockForm {
                pop_block: build_population_block(jumps),
                coherences: build_coherence_diagonal(&basis, jumps)?,
            })
        } else {
            None
        };

        let dense = if representation.wants_dense() {
            Some(match (&jumps, &operators) {
                (Some(j), _) => build_dense_generator(&basis, hamiltonian, j)?,
                (None, Some(ops)) => lindbladian_dense(hamiltonian.matrix(), ops),
                (None, None) => unreachable!("dissipators always yield jumps or operators"),
            })
        } else {
            None
        };

        Ok(Self { hamiltonian: hamiltonian.clone(), basis, beta, jumps, dense, blocks })
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    pub fn hamiltonian(&self) -> &HermitianOperator {
        &self.hamiltonian
    }

    pub fn basis(&self) -> &SpectralBasis {
        &self.basis
    }

    pub fn beta(&self) -> InverseTemperature {
        self.beta
    }

    pub fn jumps(&self) -> Option<&JumpMatrix> {
        self.jumps.as_ref()
    }

    pub fn dense(&self) -> Option<&CMat> {
        self.dense.as_ref()
    }

    pub fn blocks(&self) -> Option<&BlockForm> {
        self.blocks.as_ref()
    }

    /// The Gibbs state of the Hamiltonian at the generator's temperature.
    pub fn thermal_state(&self) -> DensityMatrix {
        operators::thermal_state(&self.basis, self.beta)
    }

    /// `max |G vec(tau)|`, from the dense form if present, otherwise from the blocks.
    pub fn fixed_point_residual(&self) -> f64 {
        let tau = self.thermal_state();
        if let Some(g) = &self.dense {
            let out = linalg::mat_vec(g, &linalg::vectorize(tau.matrix()));
            return out.iter().map(|z| z.norm()).fold(0.0, f64::max);
        }
        let blocks = self.blocks.as_ref().expect("generator has at least one representation");
        // tau is diagonal in the energy basis, so only the population block acts
        let pops = operators::thermal_populations(self.basis.energies(), self.beta);
        let d = pops.len();
        (0..d)
            .map(|i| (0..d).map(|j| blocks.pop_block[(i, j)] * pops[j]).sum::<f64>().abs())
            .fold(0.0, f64::max)
    }

    /// Text dump of the block form with the vectorization convention in the header.
    pub fn write_blocks(&self, mut w: impl Write) -> io::Result<()> {
        let Some(blocks) = &self.blocks else {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "no block form assembled"));
        };
        let d = self.dim();
        writeln!(w, "# davies-blocks v1")?;
        writeln!(w, "# vectorization: row-major, vec(|n><m|) = n*d + m")?;
        writeln!(w, "# basis: energy eigenbasis, energies ascending")?;
        writeln!(w, "dim {d}")?;
        write!(w, "energies")?;
        for e in self.basis.energies() {
            write!(w, " {e:.17e}")?;
        }
        writeln!(w)?;
        writeln!(w, "pop_block")?;
        for i in 0..d {
            let row: Vec<String> = (0..d).map(|j| format!("{:.17e}", blocks.pop_block[(i, j)])).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        writeln!(w, "coherences {}", blocks.coherences.len())?;
        for e in &blocks.coherences {
            writeln!(w, "{} {} {} {:.17e} {:.17e}", e.n, e.m, e.position, e.value.re, e.value.im)?;
        }
        Ok(())
    }
}

/// Unit-preserving check of the dense generator's dual: `G†(vec 1)`.
pub fn adjoint_identity_residual(g: &CMat, d: usize) -> f64 {
    let one = linalg::vectorize(&linalg::identity(d));
    let out = linalg::mat_vec(&linalg::adjoint(g), &one);
    out.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Unitary part `-i[H, ·]` as a dense superoperator.
pub fn commutator_superoperator(h: &CMat) -> CMat {
    let d = h.nrows();
    coherent_and_anticommutator(h, &Mat::zeros(d, d))
}
