//! Acceptance criteria 1-10. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr (outside the test harness capture) and then asserts.
//!
//! Tests hold a shared lock so the allocation tracker of criterion 10 only sees
//! its own work.

use std::alloc::{GlobalAlloc, Layout, System};
use std::io::Write as _;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Mutex, MutexGuard};
use std::time::{Duration, Instant};

use mpemba::davies::{DaviesGenerator, Representation};
use mpemba::linalg::{self, c64, CMat};
use mpemba::metropolis::{self, MetropolisConfig};
use mpemba::models::{self, defaults, DotOccupation, ModelInstance};
use mpemba::mpemba::{self as mp, ENTROPY_FLOOR};
use mpemba::operators::{
    bloch_to_state, random_mixed_state, state_to_bloch, thermal_populations, BlochVector, DensityMatrix,
    InverseTemperature,
};
use mpemba::spectral::{self, decompose, linear_times, GeneratorSpectrum, Route};
use mpemba::thermo::{self, ThermoTrajectory};
use proptest::prelude::*;
use rayon::prelude::*;

struct Tracking;

static TRACK: AtomicBool = AtomicBool::new(false);
static PEAK_ALLOC: AtomicUsize = AtomicUsize::new(0);

unsafe impl GlobalAlloc for Tracking {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        if TRACK.load(Ordering::Relaxed) {
            PEAK_ALLOC.fetch_max(layout.size(), Ordering::Relaxed);
        }
        unsafe { System.alloc(layout) }
    }

    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }

    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        if TRACK.load(Ordering::Relaxed) {
            PEAK_ALLOC.fetch_max(new_size, Ordering::Relaxed);
        }
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: Tracking = Tracking;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(n: u32, pass: bool, detail: &str) {
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "criterion {n}: {status} - {detail}");
}

fn block_spectrum(model: &ModelInstance) -> (DaviesGenerator, GeneratorSpectrum) {
    let g = model.generator(Representation::Block).unwrap();
    let s = decompose(&g, Route::Block).unwrap();
    (g, s)
}

fn dense_residual(model: &ModelInstance) -> f64 {
    model.generator(Representation::Dense).unwrap().fixed_point_residual()
}

// 1. Fixed point of every zoo model.

#[test]
fn criterion_01_fixed_point() {
    let _g = serial();
    let start = Instant::now();
    let worst = std::cell::Cell::new(0.0f64);
    let cases = std::cell::Cell::new(0usize);
    let mut runner = proptest::test_runner::TestRunner::new(ProptestConfig { cases: 48, ..ProptestConfig::default() });
    let strategy = (0usize..4, 2usize..=4, 0.1f64..5.0, 0.05f64..10.0, 0.1f64..3.0, 0.5f64..5.0);
    let result = runner.run(&strategy, |(which, l, x, t, gamma, field)| {
        let model = match which {
            0 => models::single_qubit(x, t, gamma).unwrap(),
            1 => models::tfim(l, 1.0, field, t, gamma).unwrap(),
            2 => models::two_level_atom(defaults::ATOM_EPSILON * x, defaults::ATOM_GAMMA, t / 10.0).unwrap(),
            _ => models::quantum_dot(
                defaults::DOT_EPSILON * x,
                defaults::DOT_CHARGING,
                gamma,
                t / 2.0,
                DotOccupation::PerTransition,
            )
            .unwrap(),
        };
        let r = dense_residual(&model);
        worst.set(worst.get().max(r));
        cases.set(cases.get() + 1);
        prop_assert!(r <= 1e-10, "{}: residual {r:e}", model.name);
        Ok(())
    });
    let zoo = [
        models::single_qubit(defaults::QUBIT_OMEGA, defaults::QUBIT_TEMPERATURE, defaults::QUBIT_GAMMA).unwrap(),
        models::tfim(5, 1.0, 0.5, 0.1, 1.0).unwrap(),
        models::tfim(5, 1.0, 1.0, 4.0, 1.0).unwrap(),
        models::two_level_atom(defaults::ATOM_EPSILON, defaults::ATOM_GAMMA, defaults::ATOM_TEMPERATURE_KELVIN).unwrap(),
        models::quantum_dot(
            defaults::DOT_EPSILON,
            defaults::DOT_CHARGING,
            defaults::DOT_GAMMA,
            defaults::DOT_TEMPERATURE_KELVIN,
            DotOccupation::PerTransition,
        )
        .unwrap(),
    ];
    let defaults_worst = zoo.iter().map(dense_residual).fold(0.0, f64::max);
    let (worst, cases) = (worst.get().max(defaults_worst), cases.get());
    let elapsed = start.elapsed();
    let pass = result.is_ok() && defaults_worst <= 1e-10 && elapsed < Duration::from_secs(60);
    report(1, pass, &format!("{cases} random + {} default instances, max residual {worst:.2e}, {elapsed:.1?}", zoo.len()));
    result.unwrap();
    assert!(defaults_worst <= 1e-10 && elapsed < Duration::from_secs(60));
}

// 2. Block and dense eigenvalues agree.

fn multiset_distance(a: &[c64], b: &[c64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .unwrap();
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

#[test]
fn criterion_02_block_dense_oracle() {
    let _g = serial();
    let instances = [
        models::single_qubit(5.0, 10.0, 1.0).unwrap(),
        models::tfim(2, 1.0, 0.5, 0.1, 1.0).unwrap(),
        models::tfim(2, 1.0, 1.0, 4.0, 1.0).unwrap(),
        models::tfim(3, 1.0, 0.5, 0.1, 1.0).unwrap(),
        models::tfim(3, 1.0, 1.0, 1.0, 1.0).unwrap(),
    ];
    let mut worst = 0.0f64;
    for m in &instances {
        let g = m.generator(Representation::Both).unwrap();
        let block = decompose(&g, Route::Block).unwrap().eigenvalues();
        let dense = decompose(&g, Route::Dense).unwrap().eigenvalues();
        worst = worst.max(multiset_distance(&block, &dense));
    }
    let pass = worst <= 1e-8;
    report(2, pass, &format!("{} instances, max eigenvalue mismatch {worst:.2e}", instances.len()));
    assert!(pass);
}

// 3. Spectral expansion against stepwise propagation.

#[test]
fn criterion_03_spectral_vs_direct() {
    let _g = serial();
    let instances = [
        models::single_qubit(5.0, 10.0, 1.0).unwrap(),
        models::tfim(2, 1.0, 0.5, 0.5, 1.0).unwrap(),
        models::tfim(3, 1.0, 0.5, 0.1, 1.0).unwrap(),
        models::tfim(3, 1.0, 1.0, 2.0, 1.0).unwrap(),
    ];
    let times = linear_times(5.0, 200);
    let mut worst = 0.0f64;
    for (i, m) in instances.iter().enumerate() {
        let g = m.generator(Representation::Dense).unwrap();
        let s = decompose(&g, Route::Dense).unwrap();
        for seed in 0..3u64 {
            let rho = random_mixed_state(m.dim(), 20, 100 * i as u64 + seed).unwrap();
            let a = spectral::evolve_spectral(&s, &rho, &times).unwrap();
            let b = spectral::evolve_direct(g.dense().unwrap(), &rho, &times).unwrap();
            for (x, y) in a.states.iter().zip(&b.states) {
                worst = worst.max(linalg::max_abs_diff(x.matrix(), y.matrix()));
            }
        }
    }
    let pass = worst <= 1e-8;
    report(3, pass, &format!("{} states x 200 times, sup-norm gap {worst:.2e}", instances.len() * 3));
    assert!(pass);
}

// 4. Single-qubit reproduction.

#[test]
fn criterion_04_qubit_reproduction() {
    let _g = serial();
    let start = Instant::now();
    let (g, s) = block_spectrum(&models::single_qubit(5.0, 10.0, 1.0).unwrap());
    let rho = bloch_to_state(&BlochVector::new([0.276, 0.359, 0.303]).unwrap());
    let horizon = 12.0 / s.eigenvalue(2).re.abs();
    let run = mp::run(&g, &s, &rho, &linear_times(horizon, 1200)).unwrap();
    let r = state_to_bloch(&run.transformed).unwrap().components();
    let a = r[0].abs() <= 1e-3 && r[1].abs() <= 1e-3 && (r[2] - 0.545).abs() <= 1e-3;
    let c = &run.certificate;
    let b = c.crossing_time.is_some_and(f64::is_finite);
    let (before, after) = (c.fitted_rates.0.unwrap_or(0.0), c.fitted_rates.1.unwrap_or(0.0));
    let pop_rate = c.predicted_rates.1.unwrap_or(f64::NAN);
    let rc = (before / c.predicted_rates.0 - 1.0).abs() <= 0.05
        && (after / pop_rate - 1.0).abs() <= 0.05
        && s.mode(2).coherence().is_some();
    let max_c = run.thermo_transformed.coherence.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let d = max_c <= 1e-12;
    let elapsed = start.elapsed();
    let pass = a && b && rc && d && elapsed < Duration::from_secs(10);
    report(
        4,
        pass,
        &format!(
            "r' = ({:.4}, {:.4}, {:.4}); t_m = {:?}; rates {before:.4}/{:.4}, {after:.4}/{pop_rate:.4}; max C {max_c:.1e}; {elapsed:.1?}",
            r[0], r[1], r[2], c.crossing_time, c.predicted_rates.0
        ),
    );
    assert!(pass);
}

// 5. TFIM reproduction.

/// `Σ|Tr(l_k ρ)|` over a conjugate pair, evaluated on `U ρ U†`.
fn pair_overlap(s: &GeneratorSpectrum, modes: &[usize], m: &CMat) -> f64 {
    s.overlap_cost(modes, m).unwrap()
}

/// Unitarily rotates `rho` until its overlap with `modes` is close to `target`.
fn prepare_overlap(s: &GeneratorSpectrum, rho: &DensityMatrix, modes: &[usize], target: f64) -> (DensityMatrix, f64) {
    let cfg = MetropolisConfig {
        threshold_eps: 1e-3 * target,
        nano_n: 50,
        micro_m: 4,
        macro_m: 4,
        max_total_iterations: 40_000,
        ..MetropolisConfig::unitary(modes.to_vec(), 17)
    };
    let m = rho.matrix().clone();
    let mut cost = |u: &CMat| -> mpemba::Result<f64> {
        let rotated = &(u * &m) * u.adjoint();
        Ok((pair_overlap(s, modes, &rotated) - target).abs())
    };
    let out = metropolis::unitary_metropolis_with(5, false, &cfg, &mut cost).unwrap();
    let prepared = rho.conjugate_by(&out.unitary);
    let achieved = pair_overlap(s, modes, prepared.matrix());
    (prepared, achieved)
}

#[test]
fn criterion_05_tfim_reproduction() {
    let _g = serial();
    let start = Instant::now();
    let (g, s) = block_spectrum(&models::tfim(5, 1.0, 0.5, 0.1, 1.0).unwrap());
    let times = linear_times(15.0, 751);
    let rho = random_mixed_state(32, 1000, 1).unwrap();
    let low = mp::run(&g, &s, &rho, &times).unwrap();

    // (a) decay of D for the transformed state against the slowest surviving mode
    let fitted = mp::tail_rate(&times, &low.thermo_transformed.relative_entropy, 10.0 * ENTROPY_FLOOR).map(|x| x / 2.0);
    let predicted = mp::slowest_surviving_rate(&s, &low.transformed).unwrap();
    let part_a = match (fitted, predicted) {
        (Some(f), Some(p)) => (f / p - 1.0).abs() <= 0.10,
        _ => false,
    };

    // (b) crossing time shrinks with the initial overlap on the slowest complex pair
    let pair: Vec<usize> = (2..=s.len()).find(|&k| s.is_oscillating(k)).map(|k| vec![k, k + 1]).unwrap();
    let o_low = pair_overlap(&s, &pair, rho.matrix());
    let (high_state, o_high) = prepare_overlap(&s, &rho, &pair, 15.0 * o_low);
    let high = mp::run(&g, &s, &high_state, &times).unwrap();
    let (t_low, t_high) = (low.certificate.crossing_time, high.certificate.crossing_time);
    let ratio = t_low.zip(t_high).map(|(a, b)| b / a);
    let part_b = ratio.is_some_and(|r| (r / 0.5 - 1.0).abs() <= 0.30);

    let elapsed = start.elapsed();
    let pass = part_a && part_b && elapsed < Duration::from_secs(300);
    report(
        5,
        pass,
        &format!(
            "(a) fitted D rate/2 {fitted:?} vs slowest surviving Re λ {predicted:?} [λ2 = {:.4}, {}]; \
             (b) pair {pair:?}: O_low {o_low:.3e}, O_high {o_high:.3e}, t_m {t_low:?} / {t_high:?}, ratio {ratio:?}; {elapsed:.1?}",
            s.eigenvalue(2).re,
            if s.mode(2).is_population() { "population" } else { "coherence" },
        ),
    );
    assert!(part_a, "transformed-state decay rate");
    assert!(part_b, "crossing-time ratio");
    assert!(elapsed < Duration::from_secs(300));
}

// 6. Free-energy and entropy-production identities.

#[test]
fn criterion_06_identities() {
    let _g = serial();
    let instances = [
        models::single_qubit(5.0, 10.0, 1.0).unwrap(),
        models::single_qubit(1.0, 0.5, 0.3).unwrap(),
        models::tfim(2, 1.0, 0.7, 1.0, 1.0).unwrap(),
        models::tfim(3, 1.0, 0.5, 1.0, 1.0).unwrap(),
    ];
    let times = linear_times(4.0, 60);
    let results: Vec<(f64, f64, f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let m = &instances[i as usize % instances.len()];
            let (g, s) = block_spectrum(m);
            let rho = random_mixed_state(m.dim(), 1 + (i as usize % 7), 1000 + i).unwrap();
            let grid = spectral::evolve_spectral(&s, &rho, &times).unwrap();
            let th = ThermoTrajectory::from_grid(&grid, g.hamiltonian(), g.basis(), g.beta()).unwrap();
            let tau = g.thermal_state();
            let (mut e6, mut e7, mut rise) = (0.0f64, 0.0f64, 0.0f64);
            for (k, state) in grid.states.iter().enumerate() {
                let d_general = thermo::relative_entropy(state, &tau).unwrap();
                e6 = e6.max((th.free_energy[k] - (th.relative_entropy[k] / th.beta + th.equilibrium_free_energy)).abs());
                e7 = e7.max((d_general - (th.classical[k] + th.coherence[k])).abs());
                if k > 0 {
                    rise = rise.max(th.relative_entropy[k] - th.relative_entropy[k - 1]);
                }
            }
            let min_pi = th.spohn_rate.as_ref().unwrap().iter().copied().fold(f64::INFINITY, f64::min);
            (e6, e7, rise, min_pi)
        })
        .collect();
    let e6 = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let e7 = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let rise = results.iter().map(|r| r.2).fold(f64::NEG_INFINITY, f64::max);
    let min_pi = results.iter().map(|r| r.3).fold(f64::INFINITY, f64::min);
    let pass = e6 <= 1e-9 && e7 <= 1e-9 && rise <= 1e-12 && min_pi >= -1e-8;
    report(
        6,
        pass,
        &format!("100 trajectories: F identity {e6:.1e}, D = P + C {e7:.1e}, max D rise {rise:.1e}, min Spohn {min_pi:.1e}"),
    );
    assert!(pass);
}

// 7. Majorization.

#[test]
fn criterion_07_majorization() {
    let _g = serial();
    let mut lines = Vec::new();
    let mut pass = true;
    for (i, m) in [models::single_qubit(5.0, 10.0, 1.0).unwrap(), models::tfim(3, 1.0, 0.5, 1.0, 1.0).unwrap()]
        .iter()
        .enumerate()
    {
        let g = m.generator(Representation::Block).unwrap();
        for seed in 0..3u64 {
            let rho = random_mixed_state(m.dim(), 3, 10 * i as u64 + seed).unwrap();
            let (rho_t, _) = mp::exact_transform(&rho, g.basis()).unwrap();
            let r = mp::majorization_check(&rho_t, g.hamiltonian(), g.basis(), g.beta(), 100, seed).unwrap();
            pass &= r.holds() && r.max_free_energy_excess <= 1e-10;
            lines.push(format!("{} seed {seed}: max excess {:.2e}", m.name, r.max_free_energy_excess));
        }
    }
    report(7, pass, &lines.join("; "));
    assert!(pass);
}

// 8. Metropolis convergence.

#[test]
fn criterion_08_metropolis() {
    let _g = serial();
    let start = Instant::now();
    let (_, hot) = block_spectrum(&models::tfim(5, 1.0, 1.0, 4.0, 1.0).unwrap());
    let gh = models::tfim(5, 1.0, 1.0, 4.0, 1.0).unwrap().generator(Representation::Block).unwrap();
    let p = thermal_populations(gh.basis().energies(), InverseTemperature::new(1.0).unwrap());
    let targets = metropolis::diagonal_targets(&hot, &[2]).unwrap();
    let swap: Vec<Option<usize>> = (0..10u64)
        .into_par_iter()
        .map(|seed| metropolis::swap_metropolis(&targets, &p, &MetropolisConfig::swap(vec![2], seed)).unwrap().converged_at)
        .collect();
    let swap_ok = swap.iter().filter(|c| c.is_some_and(|k| k <= 2 * 5300)).count();

    let (_, cold) = block_spectrum(&models::tfim(5, 1.0, 1.0, 0.1, 1.0).unwrap());
    let rho = random_mixed_state(32, 1000, 7).unwrap();
    let pair = vec![2, 3];
    let unitary: Vec<Option<usize>> = (0..10u64)
        .into_par_iter()
        .map(|seed| {
            let cfg = MetropolisConfig { max_total_iterations: 4 * 60_500, ..MetropolisConfig::unitary(pair.clone(), seed) };
            metropolis::unitary_metropolis(&cold, &rho, &cfg, false).unwrap().converged_at
        })
        .collect();
    let unitary_ok = unitary.iter().filter(|c| c.is_some_and(|k| k <= 2 * 60_500)).count();
    let elapsed = start.elapsed();
    let pass = swap_ok >= 8 && unitary_ok >= 8 && elapsed < Duration::from_secs(600);
    report(
        8,
        pass,
        &format!("swap {swap_ok}/10 within 10600 {swap:?}; unitary {unitary_ok}/10 within 121000 {unitary:?}; {elapsed:.1?}"),
    );
    assert!(pass);
}

// 9. Atom and dot instances.

#[test]
fn criterion_09_experimental_instances() {
    let _g = serial();
    let atom =
        models::two_level_atom(defaults::ATOM_EPSILON, defaults::ATOM_GAMMA, defaults::ATOM_TEMPERATURE_KELVIN).unwrap();
    let (g, s) = block_spectrum(&atom);
    let plus = DensityMatrix::pure(&[linalg::re(0.5f64.sqrt()), linalg::re(0.5f64.sqrt())]).unwrap();
    let horizon = 10.0 / s.eigenvalue(2).re.abs();
    let run = mp::run(&g, &s, &plus, &linear_times(horizon, 1001)).unwrap();
    let c = &run.certificate;
    let atom_complex = s.gap_is_complex();
    let speedup = c.fitted_rates.0.zip(c.fitted_rates.1).map(|(b, a)| a / b);
    let atom_ok = atom_complex && c.is_genuine() && speedup.is_some_and(|x| x > 1.5);

    let dot = models::quantum_dot(
        defaults::DOT_EPSILON,
        defaults::DOT_CHARGING,
        defaults::DOT_GAMMA,
        defaults::DOT_TEMPERATURE_KELVIN,
        DotOccupation::PerTransition,
    )
    .unwrap();
    let gd = dot.generator(Representation::Dense).unwrap();
    let sd = decompose(&gd, Route::Dense).unwrap();
    let dot_real = !sd.gap_is_complex();
    let basis = linalg_basis(&dot);
    let initial = mpemba::operators::thermal_state(
        &basis,
        InverseTemperature::from_temperature(models::kelvin_to_ghz(0.1)).unwrap(),
    );
    // every mode sharing the slowest decay rate
    let re2 = sd.eigenvalue(2).re;
    let slow: Vec<usize> = (2..=sd.len()).filter(|&k| (sd.eigenvalue(k).re - re2).abs() <= 1e-6 * re2.abs()).collect();
    let out = metropolis::unitary_metropolis(&sd, &initial, &MetropolisConfig::unitary(slow.clone(), 3), true).unwrap();
    let dot_overlap_ok = out.cost < 2e-5;
    let pass = atom_ok && dot_real && dot_overlap_ok;
    report(
        9,
        pass,
        &format!(
            "atom: λ2 = {:.4e} {:+.4}i complex {atom_complex}, {} , rate ratio {speedup:?}; \
             dot: λ2 = {:.4} {:+.2}i real {dot_real}, overlap on modes {slow:?} = {:.1e} after {} iterations",
            s.eigenvalue(2).re,
            s.eigenvalue(2).im,
            c.to_string().lines().next().unwrap(),
            sd.eigenvalue(2).re,
            sd.eigenvalue(2).im,
            out.cost,
            out.trace.iterations(),
        ),
    );
    assert!(atom_ok, "atom");
    assert!(dot_overlap_ok, "dot overlap");
    assert!(dot_real, "dot slowest mode is complex");
}

fn linalg_basis(model: &ModelInstance) -> mpemba::operators::SpectralBasis {
    mpemba::operators::diagonalize(&model.hamiltonian).unwrap()
}

// 10. Block path performance and memory.

#[test]
fn criterion_10_block_performance() {
    let _g = serial();
    let model = models::tfim(5, 1.0, 0.5, 0.1, 1.0).unwrap();
    let dense_bytes = 1024 * 1024 * std::mem::size_of::<c64>();
    PEAK_ALLOC.store(0, Ordering::SeqCst);
    TRACK.store(true, Ordering::SeqCst);
    let start = Instant::now();
    let g = model.generator(Representation::Block).unwrap();
    let s = decompose(&g, Route::Block).unwrap();
    let elapsed = start.elapsed();
    TRACK.store(false, Ordering::SeqCst);
    let peak = PEAK_ALLOC.load(Ordering::SeqCst);
    let pass = s.len() == 1024 && elapsed < Duration::from_secs(60) && peak < dense_bytes;
    report(
        10,
        pass,
        &format!("L=5 block build + decomposition {elapsed:.2?}; largest allocation {peak} B (dense would be {dense_bytes} B)"),
    );
    assert!(pass);
}
