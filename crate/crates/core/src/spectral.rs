//! Biorthogonal eigen-decomposition of generators and state evolution.
//!
//! Eigenvalues are ordered by `|Re λ|` ascending, ties by `Im λ` ascending, so
//! `λ₁ = 0` and the spectral gap is `|Re λ₂|`. Left and right eigenmatrices
//! satisfy `Tr(l_j r_k) = δ_jk` with no conjugation, `r₁ = τ`, `l₁ = 1`, and
//! `‖l_k‖_F = 1` for `k ≥ 2`; each `r_k` has its largest entry real positive.

use std::collections::HashMap;
use std::io::{self, Write};

use faer::Mat;

use crate::davies::DaviesGenerator;
use crate::error::{invalid, Error, Result};
use crate::linalg::{self, c64, re, CMat, ONE, ZERO};
use crate::operators::{self, DensityMatrix, SpectralBasis};

/// Threshold on the equilibrated eigenvector condition number beyond which a
/// generator is treated as defective.
pub const CONDITION_LIMIT: f64 = 1e12;

const ZERO_EIGENVALUE_TOL: f64 = 1e-9;
const TIE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
enum ModeData {
    /// Diagonal eigenmatrices, stored as energy-basis diagonals.
    Population { right: Vec<c64>, left: Vec<c64> },
    /// Right `phase V|n><m|V†`, left `conj(phase) V|m><n|V†`.
    Coherence { n: usize, m: usize, phase: c64 },
    Dense { right: CMat, left: CMat },
}

/// One eigenmode of a generator.
#[derive(Clone, Debug)]
pub struct Mode {
    eigenvalue: c64,
    data: ModeData,
}

impl Mode {
    pub fn eigenvalue(&self) -> c64 {
        self.eigenvalue
    }

    /// Energy-basis coherence `(n, m)` carried by this mode, if it is one.
    pub fn coherence(&self) -> Option<(usize, usize)> {
        match self.data {
            ModeData::Coherence { n, m, .. } => Some((n, m)),
            _ => None,
        }
    }

    pub fn is_population(&self) -> bool {
        matches!(self.data, ModeData::Population { .. })
    }
}

/// Whether `λ₂` is real or one of a complex-conjugate pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapKind {
    Real,
    ComplexPair,
}

/// Ordered eigenmodes of a generator.
#[derive(Clone, Debug)]
pub struct GeneratorSpectrum {
    dim: usize,
    modes: Vec<Mode>,
    basis: Option<SpectralBasis>,
    steady_state: DensityMatrix,
    gap_is_complex: bool,
    scale: f64,
}

impl GeneratorSpectrum {
    /// Hilbert-space dimension `d`; there are `d²` modes.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn eigenvalues(&self) -> Vec<c64> {
        self.modes.iter().map(|m| m.eigenvalue).collect()
    }

    /// Mode `k`, 1-based (`k = 1` is the steady state).
    pub fn mode(&self, k: usize) -> &Mode {
        &self.modes[k - 1]
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn eigenvalue(&self, k: usize) -> c64 {
        self.modes[k - 1].eigenvalue
    }

    pub fn steady_state(&self) -> &DensityMatrix {
        &self.steady_state
    }

    pub fn basis(&self) -> Option<&SpectralBasis> {
        self.basis.as_ref()
    }

    pub fn gap_is_complex(&self) -> bool {
        self.gap_is_complex
    }

    /// `true` when `Im λ_k` is non-zero beyond rounding.
    pub fn is_oscillating(&self, k: usize) -> bool {
        self.eigenvalue(k).im.abs() > TIE_TOL * self.scale
    }

    /// Right eigenmatrix `r_k` in the original basis (1-based).
    pub fn right(&self, k: usize) -> CMat {
        self.materialize(k, true)
    }

    /// Left eigenmatrix `l_k` in the original basis (1-based).
    pub fn left(&self, k: usize) -> CMat {
        self.materialize(k, false)
    }

    fn materialize(&self, k: usize, right: bool) -> CMat {
        let mode = &self.modes[k - 1];
        match &mode.data {
            ModeData::Dense { right: r, left: l } => if right { r.clone() } else { l.clone() },
            ModeData::Population { right: r, left: l } => {
                let basis = self.basis.as_ref().expect("structured modes carry a basis");
                let diag = if right { r } else { l };
                let d = self.dim;
                let e = Mat::from_fn(d, d, |i, j| if i == j { diag[i] } else { ZERO });
                basis.from_energy_basis(&e)
            }
            ModeData::Coherence { n, m, phase } => {
                let basis = self.basis.as_ref().expect("structured modes carry a basis");
                let v = basis.vectors();
                let d = self.dim;
                if right {
                    Mat::from_fn(d, d, |i, j| *phase * v[(i, *n)] * v[(j, *m)].conj())
                } else {
                    Mat::from_fn(d, d, |i, j| phase.conj() * v[(i, *m)] * v[(j, *n)].conj())
                }
            }
        }
    }

    fn check_dim(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: rho.dim() });
        }
        Ok(())
    }

    /// `Tr(l_k ρ)` for every mode, in order (index 0 is `k = 1`).
    pub fn amplitudes(&self, rho: &DensityMatrix) -> Result<Vec<c64>> {
        self.check_dim(rho)?;
        let rho_e = self.basis.as_ref().map(|b| b.to_energy_basis(rho.matrix()));
        Ok(self
            .modes
            .iter()
            .map(|mode| mode_amplitude(mode, rho.matrix(), rho_e.as_ref()))
            .collect())
    }

    /// `Tr(l_k ρ)`, 1-based.
    pub fn amplitude(&self, k: usize, rho: &DensityMatrix) -> Result<c64> {
        self.check_dim(rho)?;
        if k == 0 || k > self.modes.len() {
            return invalid(format!("mode index {k} outside 1..={}", self.modes.len()));
        }
        let rho_e = self.basis.as_ref().map(|b| b.to_energy_basis(rho.matrix()));
        Ok(mode_amplitude(&self.modes[k - 1], rho.matrix(), rho_e.as_ref()))
    }

    /// `Σ_k |Tr(l_k m)|` over 1-based `modes` for any operator `m` of matching size.
    pub fn overlap_cost(&self, modes: &[usize], m: &CMat) -> Result<f64> {
        if m.nrows() != self.dim || m.ncols() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.nrows() });
        }
        self.check_modes(modes)?;
        let structured = modes.iter().any(|&k| !matches!(self.modes[k - 1].data, ModeData::Dense { .. }));
        let m_e = match (&self.basis, structured) {
            (Some(b), true) => Some(b.to_energy_basis(m)),
            _ => None,
        };
        Ok(modes.iter().map(|&k| mode_amplitude(&self.modes[k - 1], m, m_e.as_ref()).norm()).sum())
    }

    fn check_modes(&self, modes: &[usize]) -> Result<()> {
        match modes.iter().find(|&&k| k == 0 || k > self.modes.len()) {
            Some(k) => invalid(format!("mode index {k} outside 1..={}", self.modes.len())),
            None => Ok(()),
        }
    }

    /// Energy-basis diagonal of `l_k` (1-based); `None` on the dense route.
    pub fn left_diagonal(&self, k: usize) -> Result<Option<Vec<c64>>> {
        self.check_modes(&[k])?;
        Ok(match &self.modes[k - 1].data {
            ModeData::Population { left, .. } => Some(left.clone()),
            ModeData::Coherence { .. } => Some(vec![ZERO; self.dim]),
            ModeData::Dense { .. } => None,
        })
    }

    /// `max_{j,k} |Tr(l_j r_k) - δ_jk|`, computed from the materialized matrices.
    pub fn biorthogonality_residual(&self) -> f64 {
        let n = self.modes.len();
        let lefts: Vec<CMat> = (1..=n).map(|k| self.left(k)).collect();
        let rights: Vec<CMat> = (1..=n).map(|k| self.right(k)).collect();
        let mut worst = 0.0f64;
        for (j, l) in lefts.iter().enumerate() {
            for (k, r) in rights.iter().enumerate() {
                let target = if j == k { ONE } else { ZERO };
                worst = worst.max((linalg::trace_product(l, r) - target).norm());
            }
        }
        worst
    }

    /// `ρ(t) = τ + Σ_{k≥2} Tr(l_k ρ) r_k e^{λ_k t}` without Hermitian projection.
    pub fn spectral_sum(&self, amplitudes: &[c64], t: f64) -> CMat {
        let d = self.dim;
        let mut energy = Mat::<c64>::zeros(d, d);
        let mut original = Mat::<c64>::zeros(d, d);
        for (k, (mode, &a)) in self.modes.iter().zip(amplitudes).enumerate() {
            let w = if k == 0 { a } else { a * (mode.eigenvalue * t).exp() };
            if w == ZERO {
                continue;
            }
            match &mode.data {
                ModeData::Population { right, .. } => {
                    for i in 0..d {
                        energy[(i, i)] += w * right[i];
                    }
                }
                ModeData::Coherence { n, m, phase } => energy[(*n, *m)] += w * *phase,
                ModeData::Dense { right, .. } => {
                    for j in 0..d {
                        for i in 0..d {
                            original[(i, j)] += w * right[(i, j)];
                        }
                    }
                }
            }
        }
        if let Some(b) = &self.basis {
            if self.modes.iter().any(|m| !matches!(m.data, ModeData::Dense { .. })) {
                original += b.from_energy_basis(&energy);
            }
        }
        original
    }

    /// Text table `k re im` with the gap classification in the header.
    pub fn write_table(&self, mut w: impl Write) -> io::Result<()> {
        let (gap, kind) = spectral_gap(self);
        writeln!(w, "# dim {}", self.dim)?;
        writeln!(
            w,
            "# gap {:.17e} {}",
            gap,
            match kind {
                GapKind::Real => "real",
                GapKind::ComplexPair => "complex-pair",
            }
        )?;
        writeln!(w, "k,re,im,gap")?;
        for (k, mode) in self.modes.iter().enumerate() {
            let flag = u8::from(k == 1 || (kind == GapKind::ComplexPair && k == 2));
            writeln!(
                w,
                "{},{:.17e},{:.17e},{}",
                k + 1,
                mode.eigenvalue.re,
                mode.eigenvalue.im,
                flag
            )?;
        }
        Ok(())
    }
}

fn mode_amplitude(mode: &Mode, rho: &CMat, rho_e: Option<&CMat>) -> c64 {
    match &mode.data {
        ModeData::Dense { left, .. } => linalg::trace_product(left, rho),
        ModeData::Population { left, .. } => {
            let rho_e = rho_e.expect("structured modes carry a basis");
            left.iter().enumerate().map(|(i, &w)| w * rho_e[(i, i)]).sum()
        }
        ModeData::Coherence { n, m, phase } => {
            let rho_e = rho_e.expect("structured modes carry a basis");
            phase.conj() * rho_e[(*n, *m)]
        }
    }
}

/// `(|Re λ₂|, classification)`.
pub fn spectral_gap(spec: &GeneratorSpectrum) -> (f64, GapKind) {
    if spec.len() < 2 {
        return (0.0, GapKind::Real);
    }
    let kind = if spec.gap_is_complex { GapKind::ComplexPair } else { GapKind::Real };
    (spec.eigenvalue(2).re.abs(), kind)
}

/// Which representation `decompose` should use.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Route {
    /// Block form when assembled, dense otherwise.
    Auto,
    Block,
    Dense,
}

/// Decomposes a Davies generator.
pub fn decompose(g: &DaviesGenerator, route: Route) -> Result<GeneratorSpectrum> {
    let use_block = match route {
        Route::Block => true,
        Route::Dense => false,
        Route::Auto => g.blocks().is_some(),
    };
    if use_block {
        decompose_block(g)
    } else {
        let Some(dense) = g.dense() else {
            return invalid("generator has no dense representation");
        };
        let mut spec = decompose_dense(dense)?;
        spec.basis = Some(g.basis().clone());
        Ok(spec)
    }
}

fn sort_key_order(values: &[c64], scale: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let tol = TIE_TOL * scale;
    // group by |Re| within tolerance, then Im ascending, then original index
    order.sort_by(|&a, &b| values[a].re.abs().total_cmp(&values[b].re.abs()));
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for idx in order {
        match groups.last_mut() {
            Some(g) if (values[idx].re.abs() - values[g[0]].re.abs()).abs() <= tol => g.push(idx),
            _ => groups.push(vec![idx]),
        }
    }
    for g in &mut groups {
        g.sort_by(|&a, &b| {
            let (ia, ib) = (values[a].im, values[b].im);
            if (ia - ib).abs() <= tol {
                a.cmp(&b)
            } else {
                ia.total_cmp(&ib)
            }
        });
    }
    groups.into_iter().flatten().collect()
}

fn largest_entry_phase<'a>(entries: impl Iterator<Item = &'a c64>) -> c64 {
    let mut best = ZERO;
    let mut best_norm = 0.0;
    let items: Vec<c64> = entries.copied().collect();
    let peak = items.iter().map(|z| z.norm()).fold(0.0, f64::max);
    for z in items {
        if z.norm() >= peak * (1.0 - 1e-10) {
            best = z;
            best_norm = z.norm();
            break;
        }
    }
    if best_norm == 0.0 {
        ONE
    } else {
        best.conj() / best_norm
    }
}

/// Decomposes an arbitrary dense vectorized generator (row-major convention).
pub fn decompose_dense(g: &CMat) -> Result<GeneratorSpectrum> {
    let n = g.nrows();
    let d = (n as f64).sqrt().round() as usize;
    if d * d != n || g.ncols() != n {
        return invalid(format!("generator of size {n} is not d² × d²"));
    }
    let scale = linalg::max_abs(g).max(1.0);
    let (values, vectors) = linalg::eig(g)?;
    let (inv, cond) = linalg::equilibrated_inverse(&vectors);
    if cond > CONDITION_LIMIT {
        return Err(Error::Defective { condition: cond });
    }
    let zero_idx = (0..n)
        .min_by(|&a, &b| values[a].norm().total_cmp(&values[b].norm()))
        .ok_or(Error::EigenSolver)?;
    let closest = values[zero_idx].norm();
    if closest > ZERO_EIGENVALUE_TOL * scale {
        return Err(Error::NoSteadyState { closest });
    }

    let mut vals = values.clone();
    vals[zero_idx] = ZERO;
    let mut order = sort_key_order(&vals, scale);
    // the steady state always comes first
    order.retain(|&i| i != zero_idx);
    order.insert(0, zero_idx);

    let mut modes = Vec::with_capacity(n);
    let mut steady = None;
    for (pos, &idx) in order.iter().enumerate() {
        let col: Vec<c64> = (0..n).map(|p| vectors[(p, idx)]).collect();
        let mut right = linalg::unvectorize(&col, d);
        let row: Vec<c64> = (0..n).map(|p| inv[(idx, p)]).collect();
        let mut left = linalg::transpose(&linalg::unvectorize(&row, d));
        if pos == 0 {
            let tr = linalg::trace(&right);
            right = linalg::hermitian_part(&linalg::scale(&right, ONE / tr));
            left = linalg::scale(&left, tr);
            steady = Some(DensityMatrix::from_raw(right.clone()));
        } else {
            let norm = linalg::frobenius(&left);
            left = linalg::scale(&left, re(1.0 / norm));
            right = linalg::scale(&right, re(norm));
            let phase = largest_entry_phase((0..d).flat_map(|j| (0..d).map(move |i| (i, j))).map(|ij| &right[ij]));
            right = linalg::scale(&right, phase);
            left = linalg::scale(&left, phase.conj());
        }
        modes.push(Mode { eigenvalue: vals[idx], data: ModeData::Dense { right, left } });
    }
    let steady_state = steady.expect("at least one mode");
    finish(d, modes, None, steady_state, scale)
}

fn finish(
    dim: usize,
    modes: Vec<Mode>,
    basis: Option<SpectralBasis>,
    steady_state: DensityMatrix,
    scale: f64,
) -> Result<GeneratorSpectrum> {
    let gap_is_complex = modes.len() > 1 && modes[1].eigenvalue.im.abs() > TIE_TOL * scale;
    Ok(GeneratorSpectrum { dim, modes, basis, steady_state, gap_is_complex, scale })
}

/// Eigen-decomposition of a classical rate matrix with thermal detailed balance,
/// through the symmetrized matrix `D^{-1/2} P D^{1/2}`.
///
/// Returns `(eigenvalues, right columns, left columns)` with `Σ_i left_i right_i = 1`.
/// Falls back to the generic real solver when the thermal weights under- or
/// overflow or detailed balance fails.
fn population_modes(
    pop: &Mat<f64>,
    pops: &[f64],
) -> Result<(Vec<c64>, Vec<Vec<c64>>, Vec<Vec<c64>>)> {
    let d = pop.nrows();
    let s: Vec<f64> = pops.iter().map(|p| p.sqrt()).collect();
    let usable = s.iter().all(|&x| x > 1e-150 && x.is_finite());
    let balanced = usable
        && (0..d).all(|i| {
            (0..i).all(|j| {
                let a = pop[(i, j)] * pops[j];
                let b = pop[(j, i)] * pops[i];
                (a - b).abs() <= 1e-8 * a.abs().max(b.abs())
            })
        });
    if balanced {
        let sym = Mat::from_fn(d, d, |i, j| {
            if i == j {
                pop[(i, i)]
            } else {
                (pop[(i, j)] * pop[(j, i)]).sqrt()
            }
        });
        let (vals, q) = linalg::eigh_real(&sym)?;
        let mut rights = Vec::with_capacity(d);
        let mut lefts = Vec::with_capacity(d);
        for k in 0..d {
            rights.push((0..d).map(|i| re(s[i] * q[(i, k)])).collect());
            lefts.push((0..d).map(|i| re(q[(i, k)] / s[i])).collect());
        }
        return Ok((vals.into_iter().map(re).collect(), rights, lefts));
    }
    let (vals, v) = linalg::eig_real(pop)?;
    let (inv, cond) = linalg::equilibrated_inverse(&v);
    if cond > CONDITION_LIMIT {
        return Err(Error::Defective { condition: cond });
    }
    let rights = (0..d).map(|k| (0..d).map(|i| v[(i, k)]).collect()).collect();
    let lefts = (0..d).map(|k| (0..d).map(|i| inv[(k, i)]).collect()).collect();
    Ok((vals, rights, lefts))
}

/// Decomposes the block form without ever forming a `d²×d²` matrix.
pub fn decompose_block(g: &DaviesGenerator) -> Result<GeneratorSpectrum> {
    let Some(blocks) = g.blocks() else {
        return invalid("generator has no block representation");
    };
    let basis = g.basis().clone();
    let d = basis.dim();
    let pop = &blocks.pop_block;
    let scale = (0..d).map(|i| pop[(i, i)].abs()).fold(1.0, f64::max);
    let pops = operators::thermal_populations(basis.energies(), g.beta());

    let (vals, rights, lefts) = population_modes(pop, &pops)?;
    let zero_idx = (0..d)
        .min_by(|&a, &b| vals[a].norm().total_cmp(&vals[b].norm()))
        .ok_or(Error::EigenSolver)?;
    if vals[zero_idx].norm() > ZERO_EIGENVALUE_TOL * scale {
        return Err(Error::NoSteadyState { closest: vals[zero_idx].norm() });
    }

    let mut all_vals = Vec::with_capacity(d * d);
    let mut data = Vec::with_capacity(d * d);
    for k in 0..d {
        if k == zero_idx {
            all_vals.push(ZERO);
            data.push(ModeData::Population {
                right: pops.iter().map(|&p| re(p)).collect(),
                left: vec![ONE; d],
            });
            continue;
        }
        let norm = lefts[k].iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let dot: c64 = lefts[k].iter().zip(&rights[k]).map(|(l, r)| l * r).sum();
        let mut left: Vec<c64> = lefts[k].iter().map(|z| z / norm).collect();
        let mut right: Vec<c64> = rights[k].iter().map(|z| z * norm / dot).collect();
        let phase = largest_entry_phase(right.iter());
        for z in &mut right {
            *z *= phase;
        }
        for z in &mut left {
            *z *= phase.conj();
        }
        all_vals.push(vals[k]);
        data.push(ModeData::Population { right, left });
    }
    let v = basis.vectors();
    for e in &blocks.coherences {
        // phase of the largest entry of V|n><m|V†
        let col_n = (0..d).max_by(|&a, &b| v[(a, e.n)].norm().total_cmp(&v[(b, e.n)].norm())).unwrap_or(0);
        let col_m = (0..d).max_by(|&a, &b| v[(a, e.m)].norm().total_cmp(&v[(b, e.m)].norm())).unwrap_or(0);
        let z = v[(col_n, e.n)] * v[(col_m, e.m)].conj();
        let phase = if z.norm() > 0.0 { z.conj() / z.norm() } else { ONE };
        all_vals.push(e.value);
        data.push(ModeData::Coherence { n: e.n, m: e.m, phase });
    }

    let scale = scale.max(basis.energies().iter().fold(0.0f64, |a, e| a.max(e.abs())));
    let mut order = sort_key_order(&all_vals, scale);
    order.retain(|&i| i != zero_idx);
    order.insert(0, zero_idx);
    let mut slots: Vec<Option<ModeData>> = data.into_iter().map(Some).collect();
    let modes = order
        .iter()
        .map(|&i| Mode { eigenvalue: all_vals[i], data: slots[i].take().expect("each mode used once") })
        .collect();
    let steady_state = operators::thermal_state(&basis, g.beta());
    finish(d, modes, Some(basis), steady_state, scale)
}

/// Time grid with the state at each time.
#[derive(Clone, Debug)]
pub struct EvolutionGrid {
    pub times: Vec<f64>,
    pub states: Vec<DensityMatrix>,
}

/// Positivity tolerance applied to evolved states.
pub const EVOLUTION_TOL: f64 = 1e-8;

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return invalid("time grid is empty");
    }
    if times.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return invalid("times must be finite and non-negative");
    }
    if times.windows(2).any(|w| w[1] < w[0]) {
        return invalid("times must be ascending");
    }
    Ok(())
}

fn validated(m: CMat) -> Result<DensityMatrix> {
    DensityMatrix::with_tolerance(m, EVOLUTION_TOL)
}

/// Evolution through the spectral expansion.
pub fn evolve_spectral(
    spec: &GeneratorSpectrum,
    rho: &DensityMatrix,
    times: &[f64],
) -> Result<EvolutionGrid> {
    check_times(times)?;
    let amps = spec.amplitudes(rho)?;
    let states = times
        .iter()
        .map(|&t| validated(linalg::hermitian_part(&spec.spectral_sum(&amps, t))))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvolutionGrid { times: times.to_vec(), states })
}

/// Caches `exp(A Δt)` for the distinct steps of a grid.
struct PropagatorCache<'a, T> {
    generator: &'a T,
    cache: HashMap<u64, T>,
}

fn step_key(dt: f64) -> u64 {
    // steps equal to ~12 significant digits share a propagator
    let rounded = format!("{dt:.12e}");
    rounded.parse::<f64>().unwrap_or(dt).to_bits()
}

impl<'a> PropagatorCache<'a, CMat> {
    fn get(&mut self, dt: f64) -> &CMat {
        let g = self.generator;
        self.cache
            .entry(step_key(dt))
            .or_insert_with(|| linalg::expm(&linalg::scale(g, re(dt))))
    }
}

impl<'a> PropagatorCache<'a, Mat<f64>> {
    fn get(&mut self, dt: f64) -> &Mat<f64> {
        let g = self.generator;
        self.cache.entry(step_key(dt)).or_insert_with(|| {
            let scaled = Mat::from_fn(g.nrows(), g.ncols(), |i, j| g[(i, j)] * dt);
            linalg::expm_real(&scaled)
        })
    }
}

/// Stepwise propagation with dense matrix exponentials of `G Δt`.
pub fn evolve_direct(g: &CMat, rho: &DensityMatrix, times: &[f64]) -> Result<EvolutionGrid> {
    check_times(times)?;
    let d = rho.dim();
    if g.nrows() != d * d {
        return Err(Error::DimensionMismatch { expected: g.nrows(), found: d * d });
    }
    let mut cache = PropagatorCache { generator: g, cache: HashMap::new() };
    let mut v = linalg::vectorize(rho.matrix());
    let mut t_prev = 0.0;
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - t_prev;
        if dt > 0.0 {
            v = linalg::mat_vec(cache.get(dt), &v);
        }
        t_prev = t;
        states.push(validated(linalg::hermitian_part(&linalg::unvectorize(&v, d)))?);
    }
    Ok(EvolutionGrid { times: times.to_vec(), states })
}

/// Propagation on the block form: coherences decay analytically and
/// populations are propagated with `exp(P Δt)`. Exact up to the accuracy of the
/// matrix exponential, and well conditioned at any temperature.
pub fn evolve_structured(
    g: &DaviesGenerator,
    rho: &DensityMatrix,
    times: &[f64],
) -> Result<EvolutionGrid> {
    check_times(times)?;
    let Some(blocks) = g.blocks() else {
        return invalid("structured evolution needs the block representation");
    };
    let basis = g.basis();
    let d = basis.dim();
    if rho.dim() != d {
        return Err(Error::DimensionMismatch { expected: d, found: rho.dim() });
    }
    let rho_e = basis.to_energy_basis(rho.matrix());
    let mut p: Vec<f64> = (0..d).map(|i| rho_e[(i, i)].re).collect();
    let mut cache = PropagatorCache { generator: &blocks.pop_block, cache: HashMap::new() };
    let mut t_prev = 0.0;
    let mut states = Vec::with_capacity(times.len());
    for &t in times {
        let dt = t - t_prev;
        if dt > 0.0 {
            let prop = cache.get(dt);
            p = (0..d).map(|i| (0..d).map(|j| prop[(i, j)] * p[j]).sum()).collect();
        }
        t_prev = t;
        let mut m = Mat::from_fn(d, d, |i, j| if i == j { re(p[i]) } else { ZERO });
        for e in &blocks.coherences {
            m[(e.n, e.m)] = rho_e[(e.n, e.m)] * (e.value * t).exp();
        }
        states.push(validated(linalg::hermitian_part(&basis.from_energy_basis(&m)))?);
    }
    Ok(EvolutionGrid { times: times.to_vec(), states })
}

/// Least-squares slope of `ln y` against `t` over the points with `y > floor`.
pub fn fit_log_slope(times: &[f64], values: &[f64], floor: f64) -> Option<f64> {
    let pts: Vec<(f64, f64)> = times
        .iter()
        .zip(values)
        .filter(|(_, &y)| y > floor && y.is_finite())
        .map(|(&t, &y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    if sxx == 0.0 {
        None
    } else {
        Some(sxy / sxx)
    }
}

/// `n` evenly spaced times on `[0, t_max]`.
pub fn linear_times(t_max: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![0.0],
        _ => (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect(),
    }
}

/// `0` followed by `n - 1` log-spaced times on `[t_min, t_max]`.
pub fn log_times(t_min: f64, t_max: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0; n];
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    let mut out = vec![0.0];
    out.extend((0..n - 1).map(|i| (a + (b - a) * i as f64 / (n - 2).max(1) as f64).exp()));
    out
}
