//! Config-driven experiment runner behind the `mpemba` binary.
//!
//! Every file is written under one output directory, chosen by `--out`, then
//! the `MPEMBA_OUT_DIR` environment variable, then `output.dir`, then `./out`.

pub mod config;

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::davies::{DaviesGenerator, Representation};
use crate::error::Error;
use crate::linalg::CMat;
use crate::metropolis::{self, MetropolisConfig, OptimizationTrace};
use crate::models::ModelInstance;
use crate::mpemba::{self, MpembaRun};
use crate::operators::DensityMatrix;
use crate::spectral::{self, EvolutionGrid, GeneratorSpectrum, Route};
use crate::thermo::{fmt17, ThermoTrajectory};

pub use config::ExperimentConfig;
use config::{AnnealSpec, TransformSpec, OBSERVABLES};

/// Environment variable that overrides `output.dir`.
pub const OUT_DIR_ENV: &str = "MPEMBA_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mpemba", version, about = "Davies relaxation, spectra and Mpemba transforms from experiment files")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generator eigenvalues and gap classification.
    Spectrum(CommonArgs),
    /// Thermodynamic trajectories of the initial and (if configured) transformed state.
    Evolve(CommonArgs),
    /// Transform certificate: residual overlaps, free-energy gain, crossing time, rates.
    Mpemba(CommonArgs),
    /// Annealing search on its own, with a per-iteration trace.
    Metropolis {
        #[command(flatten)]
        common: CommonArgs,
        /// Independent chains run in parallel; the best one is reported.
        #[arg(long)]
        chains: Option<usize>,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Overrides the random-state and annealing seeds.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Caps worker threads.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Use the dense generator when the Hamiltonian is degenerate.
    #[arg(long)]
    pub dense_fallback: bool,
}

/// Failure classes, each with its own exit status.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(Error),
    NotConverged(String),
    Io(PathBuf, io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Io(..) => 1,
            Self::Config(_) => 2,
            Self::Numerical(_) => 3,
            Self::NotConverged(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(m) => write!(f, "config error: {m}"),
            Self::Numerical(e) => write!(f, "numerical failure: {e}"),
            Self::NotConverged(m) => write!(f, "optimizer did not converge: {m}"),
            Self::Io(p, e) => write!(f, "cannot write {}: {e}", p.display()),
        }
    }
}

impl std::error::Error for CliError {}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        Self::Numerical(e)
    }
}

fn config_err(e: Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Files written by a command, relative to the output directory.
#[derive(Debug, Default)]
pub struct Report {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub summary: String,
}

/// Parses `args` and runs the command. `env_out` is the value of [`OUT_DIR_ENV`].
pub fn run(cli: Cli, env_out: Option<PathBuf>) -> Result<Report, CliError> {
    let (common, chains) = match &cli.command {
        Command::Spectrum(c) | Command::Evolve(c) | Command::Mpemba(c) => (c, None),
        Command::Metropolis { common, chains } => (common, *chains),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be >= 1".into()));
        }
        // a pool that was already built keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let text = fs::read_to_string(&common.config)
        .map_err(|e| CliError::Config(format!("{}: {e}", common.config.display())))?;
    let cfg = ExperimentConfig::from_toml(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", common.config.display())))?;
    let out_dir = common
        .out
        .clone()
        .or(env_out)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    let base = common.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let exp = Experiment { cfg, common, base, out: Output::new(out_dir)? };
    match &cli.command {
        Command::Spectrum(_) => exp.spectrum(),
        Command::Evolve(_) => exp.evolve(),
        Command::Mpemba(_) => exp.mpemba(),
        Command::Metropolis { .. } => exp.metropolis(chains),
    }
}

/// Writer confined to one directory; file names are fixed by the commands.
struct Output {
    dir: PathBuf,
    files: Vec<String>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        Ok(Self { dir, files: Vec::new() })
    }

    fn write(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> Result<(), CliError> {
        debug_assert!(!name.contains('/') && !name.contains(".."));
        let path = self.dir.join(name);
        let res = File::create(&path).and_then(|f| {
            let mut w = BufWriter::new(f);
            body(&mut w)?;
            w.flush()
        });
        res.map_err(|e| CliError::Io(path, e))?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn finish(self, summary: String) -> Report {
        Report { out_dir: self.dir, files: self.files, summary }
    }
}

struct Experiment<'a> {
    cfg: ExperimentConfig,
    common: &'a CommonArgs,
    base: PathBuf,
    out: Output,
}

/// State produced by the configured transform.
struct Transformed {
    state: DensityMatrix,
    unitary: CMat,
    anneal: Option<AnnealResult>,
}

struct AnnealResult {
    modes: Vec<usize>,
    cost: f64,
    converged: bool,
    converged_at: Option<usize>,
    trace: OptimizationTrace,
    chain_summaries: Vec<String>,
}

impl Experiment<'_> {
    fn model(&self) -> Result<ModelInstance, CliError> {
        self.cfg.build_model().map_err(config_err)
    }

    fn initial(&self, model: &ModelInstance) -> Result<DensityMatrix, CliError> {
        self.cfg.build_initial(model, &self.base, self.common.seed).map_err(config_err)
    }

    /// Block form when the Hamiltonian allows it, dense with `--dense-fallback`.
    fn generator(&self, model: &ModelInstance) -> Result<(DaviesGenerator, GeneratorSpectrum), CliError> {
        let g = match model.generator(Representation::Block) {
            Ok(g) => g,
            Err(Error::Degenerate { spacing }) if !self.common.dense_fallback => {
                return Err(CliError::Config(format!(
                    "{}; rerun with --dense-fallback to use the dense generator",
                    Error::Degenerate { spacing }
                )));
            }
            Err(Error::Degenerate { .. } | Error::Validation(_)) if self.common.dense_fallback => {
                model.generator(Representation::Dense)?
            }
            Err(Error::Validation(m)) => {
                return Err(CliError::Config(format!(
                    "{m}; rerun with --dense-fallback to use the dense generator"
                )))
            }
            Err(e) => return Err(e.into()),
        };
        let spec = spectral::decompose(&g, Route::Auto)?;
        Ok((g, spec))
    }

    fn anneal_spec(&self) -> Option<(&AnnealSpec, bool)> {
        match &self.cfg.transform {
            TransformSpec::UnitaryMetropolis(a) => Some((a, false)),
            TransformSpec::SwapMetropolis(a) => Some((a, true)),
            _ => None,
        }
    }

    fn transform(
        &self,
        g: &DaviesGenerator,
        spec: &GeneratorSpectrum,
        rho: &DensityMatrix,
        chains: Option<usize>,
    ) -> Result<Option<Transformed>, CliError> {
        match &self.cfg.transform {
            TransformSpec::None => Ok(None),
            TransformSpec::Exact => {
                let (state, unitary) = mpemba::exact_transform(rho, g.basis()).map_err(|e| match e {
                    Error::Degenerate { .. } => CliError::Config(format!(
                        "{e}; the exact transform needs a non-degenerate Hamiltonian, use a Metropolis transform"
                    )),
                    e => e.into(),
                })?;
                Ok(Some(Transformed { state, unitary, anneal: None }))
            }
            TransformSpec::UnitaryMetropolis(a) | TransformSpec::SwapMetropolis(a) => {
                let swap = matches!(self.cfg.transform, TransformSpec::SwapMetropolis(_));
                let base = a.metropolis_config(swap, self.common.seed).map_err(config_err)?;
                let n = chains.or(a.chains).unwrap_or(1);
                if n == 0 {
                    return Err(CliError::Config("chains must be >= 1".into()));
                }
                if let Some(&k) = base.target_modes.iter().find(|&&k| k < 2 || k > spec.len()) {
                    return Err(CliError::Config(format!(
                        "transform.modes: mode {k} outside 2..={}",
                        spec.len()
                    )));
                }
                let runs: Vec<_> = (0..n as u64)
                    .into_par_iter()
                    .map(|i| {
                        let cfg = MetropolisConfig { seed: base.seed.wrapping_add(i), ..base.clone() };
                        if swap {
                            swap_chain(g, spec, rho, &cfg)
                        } else {
                            unitary_chain(spec, rho, &cfg, a.fermionic)
                        }
                    })
                    .collect::<Result<_, CliError>>()?;
                let chain_summaries = runs
                    .iter()
                    .enumerate()
                    .map(|(i, (t, _))| {
                        let a = t.anneal.as_ref().expect("chains always anneal");
                        format!(
                            "chain {i}: seed {} cost {} converged_at {}",
                            base.seed.wrapping_add(i as u64),
                            fmt17(a.cost),
                            a.converged_at.map_or("none".into(), |k| k.to_string())
                        )
                    })
                    .collect();
                let (mut best, _) = runs
                    .into_iter()
                    .min_by(|(_, x), (_, y)| x.partial_cmp(y).expect("costs and iteration counts are finite"))
                    .expect("at least one chain");
                if let Some(a) = best.anneal.as_mut() {
                    a.chain_summaries = chain_summaries;
                }
                Ok(Some(best))
            }
        }
    }

    fn spectrum(mut self) -> Result<Report, CliError> {
        let model = self.model()?;
        let (_, spec) = self.generator(&model)?;
        self.out.write("spectrum.csv", |w| spec.write_table(w))?;
        let (gap, kind) = spectral::spectral_gap(&spec);
        if self.cfg.output.gnuplot {
            self.out.write("spectrum.gp", |w| {
                writeln!(w, "set datafile separator ','")?;
                writeln!(w, "set xlabel 'Re lambda'\nset ylabel 'Im lambda'")?;
                writeln!(w, "plot 'spectrum.csv' every ::1 using 2:3 with points title 'eigenvalues'")
            })?;
        }
        let summary = format!("{}: {} eigenvalues, gap {} ({kind:?})", model.name, spec.len(), fmt17(gap));
        Ok(self.out.finish(summary))
    }

    fn evolve(mut self) -> Result<Report, CliError> {
        let model = self.model()?;
        let rho = self.initial(&model)?;
        let (g, spec) = self.generator(&model)?;
        let times = self.cfg.time.times().map_err(config_err)?;
        let transformed = self.transform(&g, &spec, &rho, None)?;
        let grid = evolve(&g, &spec, &rho, &times)?;
        let th = ThermoTrajectory::from_grid(&grid, g.hamiltonian(), g.basis(), g.beta())?;
        self.write_trajectory("trajectory", &th, &grid)?;
        let mut summary = format!("{}: {} time points, D(0) = {}", model.name, th.len(), fmt17(th.relative_entropy[0]));
        if let Some(t) = transformed {
            let grid_t = evolve(&g, &spec, &t.state, &times)?;
            let th_t = ThermoTrajectory::from_grid(&grid_t, g.hamiltonian(), g.basis(), g.beta())?;
            self.write_trajectory("trajectory_transformed", &th_t, &grid_t)?;
            summary.push_str(&format!(", transformed D(0) = {}", fmt17(th_t.relative_entropy[0])));
            if let Some(a) = &t.anneal {
                self.write_anneal(a)?;
            }
        }
        if self.cfg.output.gnuplot {
            let transformed = self.out.files.iter().any(|f| f == "trajectory_transformed.csv");
            let cols = self.columns(&th);
            self.out.write("evolve.gp", |w| trajectory_script(w, &cols, transformed))?;
        }
        Ok(self.out.finish(summary))
    }

    fn mpemba(mut self) -> Result<Report, CliError> {
        if matches!(self.cfg.transform, TransformSpec::None) {
            return Err(CliError::Config("mpemba needs transform.kind = exact, unitary-metropolis or swap-metropolis".into()));
        }
        let model = self.model()?;
        let rho = self.initial(&model)?;
        let (g, spec) = self.generator(&model)?;
        let times = self.cfg.time.times().map_err(config_err)?;
        let t = self.transform(&g, &spec, &rho, None)?.expect("transform configured");
        let run: MpembaRun = mpemba::run_transformed(&g, &spec, &rho, t.state, t.unitary, &times)?;
        self.write_trajectory("trajectory", &run.thermo_original, &run.original)?;
        self.write_trajectory("trajectory_transformed", &run.thermo_transformed, &run.evolved_transformed)?;
        let cert = &run.certificate;
        let anneal = t.anneal;
        self.out.write("certificate.txt", |w| {
            cert.write_report(&mut *w)?;
            if let Some(a) = &anneal {
                let modes: Vec<String> = a.modes.iter().map(usize::to_string).collect();
                writeln!(w, "target_modes: {}", modes.join(" "))?;
                writeln!(w, "target_overlap: {}", fmt17(a.cost))?;
                writeln!(w, "optimizer_converged: {}", a.converged)?;
            }
            Ok(())
        })?;
        if let Some(a) = &anneal {
            self.write_anneal(a)?;
        }
        if self.cfg.output.gnuplot {
            let cols = self.columns(&run.thermo_original);
            self.out.write("mpemba.gp", |w| trajectory_script(w, &cols, true))?;
        }
        let summary = cert.to_string().lines().next().unwrap_or_default().to_string();
        if let Some(a) = anneal.filter(|a| !a.converged) {
            return Err(CliError::NotConverged(format!(
                "best overlap {} after {} iterations; outputs written to {}",
                fmt17(a.cost),
                a.trace.iterations(),
                self.out.dir.display()
            )));
        }
        Ok(self.out.finish(summary))
    }

    fn metropolis(mut self, chains: Option<usize>) -> Result<Report, CliError> {
        if self.anneal_spec().is_none() {
            return Err(CliError::Config(
                "metropolis needs transform.kind = unitary-metropolis or swap-metropolis".into(),
            ));
        }
        let model = self.model()?;
        let rho = self.initial(&model)?;
        let (g, spec) = self.generator(&model)?;
        let t = self.transform(&g, &spec, &rho, chains)?.expect("transform configured");
        let a = t.anneal.expect("metropolis transforms anneal");
        self.write_anneal(&a)?;
        if self.cfg.output.gnuplot {
            self.out.write("metropolis.gp", |w| {
                writeln!(w, "set datafile separator ','\nset logscale y")?;
                writeln!(w, "set xlabel 'iteration'\nset ylabel 'cost'")?;
                writeln!(w, "plot 'trace.csv' every ::1 using 1:2 with lines title 'cost'")
            })?;
        }
        if !a.converged {
            return Err(CliError::NotConverged(format!(
                "best cost {} after {} iterations; trace written to {}",
                fmt17(a.cost),
                a.trace.iterations(),
                self.out.dir.display()
            )));
        }
        let summary = format!(
            "converged: cost {} at iteration {}",
            fmt17(a.cost),
            a.converged_at.expect("converged runs record the iteration")
        );
        Ok(self.out.finish(summary))
    }

    fn write_anneal(&mut self, a: &AnnealResult) -> Result<(), CliError> {
        self.out.write("trace.csv", |w| a.trace.write_csv(w))?;
        self.out.write("metropolis.txt", |w| {
            writeln!(w, "cost: {}", fmt17(a.cost))?;
            writeln!(w, "converged: {}", a.converged)?;
            writeln!(w, "converged_at: {}", a.converged_at.map_or("none".into(), |k| k.to_string()))?;
            writeln!(w, "iterations: {}", a.trace.iterations())?;
            for line in &a.chain_summaries {
                writeln!(w, "{line}")?;
            }
            Ok(())
        })
    }

    fn columns(&self, th: &ThermoTrajectory) -> Vec<&'static str> {
        let wanted = self.cfg.output.observables.as_ref();
        OBSERVABLES
            .into_iter()
            .filter(|c| wanted.is_none_or(|w| w.iter().any(|x| x == c)))
            .filter(|&c| c != "Pi" || th.spohn_rate.is_some())
            .collect()
    }

    fn write_trajectory(&mut self, stem: &str, th: &ThermoTrajectory, grid: &EvolutionGrid) -> Result<(), CliError> {
        let cols = self.columns(th);
        self.out.write(&format!("{stem}.csv"), |w| write_columns(th, &cols, w))?;
        if self.cfg.output.states {
            self.out.write(&format!("{stem}_states.csv"), |w| write_states(grid, w))?;
        }
        Ok(())
    }
}

fn evolve(g: &DaviesGenerator, spec: &GeneratorSpectrum, rho: &DensityMatrix, times: &[f64]) -> Result<EvolutionGrid, CliError> {
    Ok(if g.blocks().is_some() {
        spectral::evolve_structured(g, rho, times)?
    } else {
        spectral::evolve_spectral(spec, rho, times)?
    })
}

/// Sort key for chains: `(cost, iterations)`.
type ChainKey = (f64, usize);

fn unitary_chain(
    spec: &GeneratorSpectrum,
    rho: &DensityMatrix,
    cfg: &MetropolisConfig,
    fermionic: bool,
) -> Result<(Transformed, ChainKey), CliError> {
    let o = metropolis::unitary_metropolis(spec, rho, cfg, fermionic).map_err(|e| match e {
        Error::Validation(m) => CliError::Config(m),
        e => e.into(),
    })?;
    let key = (o.cost, o.trace.iterations());
    let anneal = AnnealResult {
        modes: cfg.target_modes.clone(),
        cost: o.cost,
        converged: o.converged,
        converged_at: o.converged_at,
        trace: o.trace,
        chain_summaries: Vec::new(),
    };
    Ok((Transformed { state: o.state, unitary: o.unitary, anneal: Some(anneal) }, key))
}

/// Swap search on the energy populations of an energy-diagonal `rho`.
fn swap_chain(
    g: &DaviesGenerator,
    spec: &GeneratorSpectrum,
    rho: &DensityMatrix,
    cfg: &MetropolisConfig,
) -> Result<(Transformed, ChainKey), CliError> {
    let basis = g.basis();
    if !mpemba::is_energy_diagonal(rho.matrix(), basis, 1e-10) {
        return Err(CliError::Config("swap-metropolis needs an initial state diagonal in the energy basis".into()));
    }
    let targets = metropolis::diagonal_targets(spec, &cfg.target_modes).map_err(config_err)?;
    let p = basis.populations(rho.matrix());
    let o = metropolis::swap_metropolis(&targets, &p, cfg)?;
    let d = p.len();
    let diag = faer::Mat::from_fn(d, d, |i, j| if i == j { crate::linalg::re(o.populations[i]) } else { crate::linalg::ZERO });
    let state = DensityMatrix::new(basis.from_energy_basis(&diag))?;
    // the permutation as a unitary on the energy basis, mapped back to the original basis
    let mut perm = faer::Mat::<crate::linalg::c64>::zeros(d, d);
    let mut used = vec![false; d];
    for (i, &q) in o.populations.iter().enumerate() {
        let j = (0..d)
            .filter(|&j| !used[j])
            .min_by(|&a, &b| (p[a] - q).abs().total_cmp(&(p[b] - q).abs()))
            .expect("populations are a permutation");
        used[j] = true;
        perm[(i, j)] = crate::linalg::ONE;
    }
    let v = basis.vectors();
    let unitary = &(v * &perm) * v.adjoint();
    let key = (o.cost, o.trace.iterations());
    let anneal = AnnealResult {
        modes: cfg.target_modes.clone(),
        cost: o.cost,
        converged: o.converged,
        converged_at: o.converged_at,
        trace: o.trace,
        chain_summaries: Vec::new(),
    };
    Ok((Transformed { state, unitary, anneal: Some(anneal) }, key))
}

/// Trajectory CSV restricted to `cols`, always led by `t`.
pub fn write_columns(th: &ThermoTrajectory, cols: &[&str], w: &mut dyn Write) -> io::Result<()> {
    let series = |c: &str| -> Option<&[f64]> {
        Some(match c {
            "F_neq" => &th.free_energy,
            "D" => &th.relative_entropy,
            "P" => &th.classical,
            "C" => &th.coherence,
            "L1" => &th.l1,
            "T1" => &th.trace_distance,
            "Pi" => th.spohn_rate.as_deref()?,
            _ => return None,
        })
    };
    let picked: Vec<(&str, &[f64])> = cols.iter().filter_map(|&c| series(c).map(|s| (c, s))).collect();
    let header: Vec<&str> = std::iter::once("t").chain(picked.iter().map(|p| p.0)).collect();
    writeln!(w, "{}", header.join(","))?;
    for i in 0..th.len() {
        let row: Vec<String> = std::iter::once(fmt17(th.times[i])).chain(picked.iter().map(|p| fmt17(p.1[i]))).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

/// Every state of `grid` as `t,i,j,re,im` rows.
pub fn write_states(grid: &EvolutionGrid, w: &mut dyn Write) -> io::Result<()> {
    writeln!(w, "t,i,j,re,im")?;
    for (t, rho) in grid.times.iter().zip(&grid.states) {
        let m = rho.matrix();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                writeln!(w, "{},{i},{j},{},{}", fmt17(*t), fmt17(m[(i, j)].re), fmt17(m[(i, j)].im))?;
            }
        }
    }
    Ok(())
}

fn trajectory_script(w: &mut dyn Write, cols: &[&str], transformed: bool) -> io::Result<()> {
    writeln!(w, "set datafile separator ','\nset xlabel 't'\nset key autotitle columnhead")?;
    let mut plots = Vec::new();
    for (k, c) in cols.iter().enumerate() {
        plots.push(format!("'trajectory.csv' using 1:{} with lines title '{c}'", k + 2));
        if transformed {
            plots.push(format!("'trajectory_transformed.csv' using 1:{} with lines title '{c} transformed'", k + 2));
        }
    }
    writeln!(w, "plot {}", plots.join(", \\\n     "))
}
