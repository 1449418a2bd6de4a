//! Experiment drivers used by the command-line tool.
//!
//! Every driver returns plain records; the `write_*` helpers turn them into
//! CSV tables and [`run`] adds a JSON manifest. All outputs except wall-times
//! are deterministic for a fixed configuration and seed.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::config::{CoefficientKind, Experiment, RunConfig};
use crate::decomposition::{build_decomposition, Decomposition, DecompositionParams};
use crate::error::{Error, Result};
use crate::fem::{boundary_values, FineProblem};
use crate::gfem::MultiscaleMethod;
use crate::local_spaces::{eigensolve, Variant};
use crate::mesh::Mesh;
use crate::precond::{self, Method, Preconditioner, SolveReport};
use crate::sparse::write_vector_csv;

/// Fine problem and decomposition of one configuration.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: FineProblem,
    pub decomposition: Decomposition,
}

impl Instance {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let mesh = cfg.mesh.build()?;
        let coefficient = cfg.coefficient.build(&mesh, cfg.decomposition.grid2(), cfg.seed)?;
        Self::with_coefficient(cfg, mesh, coefficient)
    }

    pub fn with_coefficient(cfg: &RunConfig, mesh: Mesh, coefficient: CoefficientField) -> Result<Self> {
        let decomposition = build_decomposition(&mesh, &cfg.decomposition.params(mesh.dim())?)?;
        let g = cfg.problem.dirichlet;
        let dirichlet = boundary_values(&mesh, |_| g);
        let problem = FineProblem::new(mesh, coefficient, cfg.problem.source(), dirichlet)?;
        Ok(Self { problem, decomposition })
    }

    /// Same problem with a different oversampling width.
    pub fn with_oversampling(&self, layers: usize) -> Result<Decomposition> {
        let mut p: DecompositionParams = self.decomposition.params().clone();
        p.oversampling_layers = layers;
        build_decomposition(&self.problem.mesh, &p)
    }
}

fn label(x: Option<f64>) -> String {
    match x {
        Some(v) if v.is_finite() => format!("{v:e}"),
        _ => "inf".to_string(),
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Writes a header and rows of already formatted fields.
pub fn write_table(path: impl AsRef<Path>, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path.as_ref()).map_err(csv_error)?;
    w.write_record(header).map_err(csv_error)?;
    for r in rows {
        w.write_record(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayRow {
    pub variant: Variant,
    pub n: usize,
    pub ell: usize,
    pub coarse_dim: usize,
    pub coarse_rank: usize,
    /// Relative energy error of the multiscale solution.
    pub error: f64,
    /// `√(κκ*) max_i λ_{n_i+1}^{-1/2}`, when enough eigenvalues are available.
    pub bound: Option<f64>,
}

pub const DECAY_HEADER: [&str; 7] = ["variant", "n", "ell", "coarse_dim", "coarse_rank", "err", "bound"];

pub fn write_decay(path: impl AsRef<Path>, rows: &[DecayRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.variant.to_string(),
                r.n.to_string(),
                r.ell.to_string(),
                r.coarse_dim.to_string(),
                r.coarse_rank.to_string(),
                format!("{:e}", r.error),
                label(r.bound),
            ]
        })
        .collect();
    write_table(path, &DECAY_HEADER, &rows)
}

fn decay_rows(
    inst: &Instance,
    decomposition: &Decomposition,
    reference: &[f64],
    cfg: &RunConfig,
    variant: Variant,
    ns: &[usize],
) -> Result<Vec<DecayRow>> {
    let max_n = ns.iter().copied().max().unwrap_or(0);
    let opts = cfg.eigen.options(cfg.seed);
    let t = Instant::now();
    let method = MultiscaleMethod::new(&inst.problem, decomposition, variant, max_n, &opts)?;
    info!(
        "{variant}: local spaces for ell = {} in {:.2}s",
        decomposition.oversampling_layers(),
        t.elapsed().as_secs_f64()
    );
    ns.iter()
        .map(|&n| {
            let counts = method.uniform(n);
            let sol = method.solve(&counts)?;
            Ok(DecayRow {
                variant,
                n,
                ell: decomposition.oversampling_layers(),
                coarse_dim: sol.coarse_dim,
                coarse_rank: sol.coarse_rank,
                error: inst.problem.relative_energy_error(reference, &sol.nodal)?,
                bound: method.error_bound(&counts).ok(),
            })
        })
        .collect()
}

/// Error against `n` at the configured oversampling.
pub fn decay_n(cfg: &RunConfig, variants: &[Variant]) -> Result<Vec<DecayRow>> {
    let inst = Instance::from_config(cfg)?;
    let reference = inst.problem.solve_reference()?;
    let ns: Vec<usize> = (cfg.basis.n_min..=cfg.basis.n_max).collect();
    let mut rows = Vec::new();
    for &v in variants {
        rows.extend(decay_rows(&inst, &inst.decomposition, &reference, cfg, v, &ns)?);
    }
    Ok(rows)
}

/// Error against the oversampling width at fixed `n`.
pub fn decay_ell(cfg: &RunConfig, variants: &[Variant]) -> Result<Vec<DecayRow>> {
    let inst = Instance::from_config(cfg)?;
    let reference = inst.problem.solve_reference()?;
    let mut rows = Vec::new();
    for &v in variants {
        for &ell in &cfg.basis.ell_values {
            let d = inst.with_oversampling(ell)?;
            rows.extend(decay_rows(&inst, &d, &reference, cfg, v, &[cfg.basis.n_for_ell])?);
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRow {
    pub exponent: i32,
    pub variant: Variant,
    pub method: Method,
    pub n: usize,
    /// `None` when the iteration diverged or hit the iteration cap.
    pub iterations: Option<usize>,
    pub steps: usize,
    pub diverged: bool,
    pub final_relative_residual: f64,
    pub coarse_dim: usize,
}

impl IterationRow {
    pub fn label(&self) -> String {
        self.iterations.map_or_else(|| "inf".to_string(), |k| k.to_string())
    }
}

pub const ITERATION_HEADER: [&str; 9] = [
    "contrast",
    "variant",
    "method",
    "n",
    "iterations",
    "steps",
    "diverged",
    "final_rel_residual",
    "coarse_dim",
];

/// Coefficient of the configured kind with contrast `10^exponent`.
pub fn coefficient_with_contrast(cfg: &RunConfig, mesh: &Mesh, exponent: i32) -> Result<CoefficientField> {
    let mut c = cfg.coefficient.clone();
    match c.kind {
        CoefficientKind::Channel => c.exponent = exponent,
        CoefficientKind::Skyscraper => c.value = 10f64.powi(exponent),
        CoefficientKind::Constant => {}
        CoefficientKind::File => {
            return Err(Error::Config("contrast sweeps need a generated coefficient".into()));
        }
    }
    c.build(mesh, cfg.decomposition.grid2(), cfg.seed)
}

/// Iteration counts of the preconditioned solvers for every contrast, variant,
/// solver and number of local basis functions.
pub fn iteration_table(cfg: &RunConfig, variants: &[Variant], methods: &[Method]) -> Result<Vec<IterationRow>> {
    let max_n = cfg.iteration_table.n_values.iter().copied().max().unwrap_or(0);
    let opts = cfg.eigen.options(cfg.seed);
    let solver = cfg.solver.options();
    let mut rows = Vec::new();
    for &exponent in &cfg.iteration_table.exponents {
        let mesh = cfg.mesh.build()?;
        let coeff = coefficient_with_contrast(cfg, &mesh, exponent)?;
        let inst = Instance::with_coefficient(cfg, mesh, coeff)?;
        let p = &inst.problem;
        let mut b = Preconditioner::new(p, &inst.decomposition, None)?;
        for &v in variants {
            let t = Instant::now();
            let method = MultiscaleMethod::new(p, &inst.decomposition, v, max_n, &opts)?;
            info!("contrast 1e{exponent} {v}: local spaces in {:.2}s", t.elapsed().as_secs_f64());
            let u0 = precond::initial_vector(p, &method.particular, cfg.solver.initial_guess);
            for &n in &cfg.iteration_table.n_values {
                b.set_coarse(Some(method.coarse_space(&method.uniform(n))?))?;
                for &m in methods {
                    let rep = precond::solve(m, p, &b, &u0, &solver, None);
                    rows.push(IterationRow {
                        exponent,
                        variant: v,
                        method: m,
                        n,
                        iterations: rep.iterations,
                        steps: rep.steps,
                        diverged: rep.diverged,
                        final_relative_residual: rep.relative_residuals().last().copied().unwrap_or(0.0),
                        coarse_dim: b.coarse_dim(),
                    });
                    info!("contrast 1e{exponent} {v} {m:?} n = {n}: {}", rep.iterations_label());
                }
            }
        }
    }
    Ok(rows)
}

pub fn write_iterations(path: impl AsRef<Path>, rows: &[IterationRow]) -> Result<()> {
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                format!("1e{}", r.exponent),
                r.variant.to_string(),
                method_name(r.method).to_string(),
                r.n.to_string(),
                r.label(),
                r.steps.to_string(),
                r.diverged.to_string(),
                format!("{:e}", r.final_relative_residual),
                r.coarse_dim.to_string(),
            ]
        })
        .collect();
    write_table(path, &ITERATION_HEADER, &rows)
}

pub fn method_name(m: Method) -> &'static str {
    match m {
        Method::Richardson => "richardson",
        Method::Gmres => "gmres",
    }
}

/// Table with one row per contrast and one column per `n`, as in the usual
/// presentation of iteration counts.
pub fn iteration_grid(rows: &[IterationRow], variant: Variant, method: Method) -> (Vec<String>, Vec<Vec<String>>) {
    let mut ns: Vec<usize> = rows.iter().map(|r| r.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut exps: Vec<i32> = rows.iter().map(|r| r.exponent).collect();
    exps.sort_unstable();
    exps.dedup();
    let mut header = vec!["contrast".to_string()];
    header.extend(ns.iter().map(|n| format!("n={n}")));
    let table = exps
        .iter()
        .map(|&e| {
            let mut line = vec![format!("1e{e}")];
            for &n in &ns {
                let cell = rows
                    .iter()
                    .find(|r| r.exponent == e && r.n == n && r.variant == variant && r.method == method)
                    .map_or_else(String::new, IterationRow::label);
                line.push(cell);
            }
            line
        })
        .collect();
    (header, table)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRecord {
    pub variant: Variant,
    /// Variant actually solved after the degenerate-ring fallback.
    pub solved: Variant,
    pub subdomain: usize,
    pub grid: [usize; 2],
    /// Eigenvalues without the constant mode, ascending.
    pub eigenvalues: Vec<f64>,
    pub large_modes: usize,
}

impl SpectrumRecord {
    pub fn reciprocals(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| 1.0 / l).collect()
    }
}

/// Number of values of the descending sequence `r` before the first
/// consecutive ratio exceeding `ratio`; zero when there is no such gap.
pub fn count_large_modes(r: &[f64], ratio: f64) -> usize {
    r.windows(2)
        .position(|w| w[0] > ratio * w[1])
        .map_or(0, |k| k + 1)
}

pub fn spectrum(cfg: &RunConfig, variants: &[Variant]) -> Result<Vec<SpectrumRecord>> {
    let inst = Instance::from_config(cfg)?;
    let d = &inst.decomposition;
    let opts = cfg.eigen.options(cfg.seed);
    let k = cfg.spectrum.num_eigenvalues;
    let mut out = Vec::new();
    for &v in variants {
        for &[gx, gy] in &cfg.spectrum.subdomains {
            let g = d.grid();
            if gx >= g[0] || gy >= g[1] {
                return Err(Error::Config(format!("subdomain position [{gx}, {gy}] outside the grid")));
            }
            let i = d.subdomain_at([gx, gy, 0]);
            let res = eigensolve(&inst.problem.mesh, &inst.problem.coefficient, d, i, v, k + 1, &opts)?;
            let skip = usize::from(res.includes_constant);
            let eigenvalues: Vec<f64> = res.eigenvalues[skip..].iter().take(k).copied().collect();
            let r: Vec<f64> = eigenvalues.iter().map(|&l| 1.0 / l).collect();
            out.push(SpectrumRecord {
                variant: v,
                solved: res.variant,
                subdomain: i,
                grid: [gx, gy],
                large_modes: count_large_modes(&r, cfg.spectrum.gap_ratio),
                eigenvalues,
            });
        }
    }
    Ok(out)
}

pub const SPECTRUM_HEADER: [&str; 7] = ["variant", "subdomain", "gx", "gy", "k", "lambda", "inv_lambda"];
pub const SPECTRUM_SUMMARY_HEADER: [&str; 6] = ["variant", "solved", "subdomain", "gx", "gy", "large_modes"];

pub fn write_spectrum(dir: &Path, records: &[SpectrumRecord]) -> Result<Vec<PathBuf>> {
    let mut rows = Vec::new();
    for r in records {
        for (k, &l) in r.eigenvalues.iter().enumerate() {
            rows.push(vec![
                r.variant.to_string(),
                r.subdomain.to_string(),
                r.grid[0].to_string(),
                r.grid[1].to_string(),
                (k + 1).to_string(),
                format!("{l:e}"),
                format!("{:e}", 1.0 / l),
            ]);
        }
    }
    let a = dir.join("spectrum.csv");
    write_table(&a, &SPECTRUM_HEADER, &rows)?;
    let summary: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.variant.to_string(),
                r.solved.to_string(),
                r.subdomain.to_string(),
                r.grid[0].to_string(),
                r.grid[1].to_string(),
                r.large_modes.to_string(),
            ]
        })
        .collect();
    let b = dir.join("spectrum_summary.csv");
    write_table(&b, &SPECTRUM_SUMMARY_HEADER, &summary)?;
    Ok(vec![a, b])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub m: usize,
    pub ell: usize,
    pub variant: Variant,
    pub solved: Variant,
    pub saddle_dim: usize,
    pub nnz_per_row: f64,
    pub fill_in: isize,
    pub mean_seconds: f64,
    pub min_seconds: f64,
    pub repeats: usize,
    /// Skipped because the eigenproblem exceeds the configured size cap.
    pub skipped: bool,
}

pub const TIMING_HEADER: [&str; 11] = [
    "m",
    "ell",
    "variant",
    "solved",
    "saddle_dim",
    "nnz_per_row",
    "fill_in",
    "mean_seconds",
    "min_seconds",
    "repeats",
    "skipped",
];

/// Central subdomain of a 3×3×3 brick grid with `m` cells per brick and axis.
pub fn timing_instance(cfg: &RunConfig, m: usize, ell: usize) -> Result<(Mesh, CoefficientField, Decomposition, usize)> {
    let mesh = Mesh::unit(3, 3 * m)?;
    let coeff = cfg.coefficient.build(&mesh, [3, 3], cfg.seed)?;
    let mut p = DecompositionParams::new(vec![3, 3, 3], ell);
    p.overlap_layers = cfg.timing.overlap;
    let d = build_decomposition(&mesh, &p)?;
    let i = d.subdomain_at([1, 1, 1]);
    Ok((mesh, coeff, d, i))
}

/// Wall-time and factor fill of the local eigensolve. Runs on the calling
/// thread only; callers should use a single-thread pool for clean timings.
pub fn timing_fillin(cfg: &RunConfig, variants: &[Variant]) -> Result<Vec<TimingRow>> {
    let opts = cfg.eigen.options(cfg.seed);
    let t = &cfg.timing;
    let mut rows = Vec::new();
    for &m in &t.m_values {
        for &ell in &t.ell_values {
            let (mesh, coeff, d, i) = timing_instance(cfg, m, ell)?;
            let s = d.subdomain(i);
            let nev = t.num_eigenpairs + usize::from(!s.boundary);
            for &v in variants {
                let nodes = match v {
                    Variant::Ring if !s.ring_degenerate => s.ring_star_patch(&mesh).num_nodes(),
                    _ => s.omega_star_patch(&mesh).num_nodes(),
                };
                if nodes > t.max_dofs {
                    warn!("m = {m}, ell = {ell}, {v}: {nodes} nodes exceed the cap of {}", t.max_dofs);
                    rows.push(TimingRow {
                        m,
                        ell,
                        variant: v,
                        solved: v,
                        saddle_dim: nodes,
                        nnz_per_row: f64::NAN,
                        fill_in: 0,
                        mean_seconds: f64::NAN,
                        min_seconds: f64::NAN,
                        repeats: 0,
                        skipped: true,
                    });
                    continue;
                }
                let mut seconds = Vec::with_capacity(t.repeats);
                let mut last = None;
                for _ in 0..t.repeats {
                    let res = eigensolve(&mesh, &coeff, &d, i, v, nev, &opts)?;
                    seconds.push(res.stats.eigensolve_seconds());
                    last = Some(res);
                }
                let res = last.ok_or_else(|| Error::Config("timing needs at least one repeat".into()))?;
                let mean = seconds.iter().sum::<f64>() / seconds.len() as f64;
                info!(
                    "m = {m}, ell = {ell}, {v}: {:.3}s, {:.1} nnz/row",
                    mean,
                    res.stats.fill.nnz_per_row()
                );
                rows.push(TimingRow {
                    m,
                    ell,
                    variant: v,
                    solved: res.variant,
                    saddle_dim: res.stats.saddle_dim,
                    nnz_per_row: res.stats.fill.nnz_per_row(),
                    fill_in: res.stats.fill.fill_in(),
                    mean_seconds: mean,
                    min_seconds: seconds.iter().copied().fold(f64::INFINITY, f64::min),
                    repeats: seconds.len(),
                    skipped: false,
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_timing(path: impl AsRef<Path>, rows: &[TimingRow]) -> Result<()> {
    let num = |x: f64| if x.is_nan() { String::new() } else { format!("{x:e}") };
    let rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.m.to_string(),
                r.ell.to_string(),
                r.variant.to_string(),
                r.solved.to_string(),
                r.saddle_dim.to_string(),
                num(r.nnz_per_row),
                r.fill_in.to_string(),
                num(r.mean_seconds),
                num(r.min_seconds),
                r.repeats.to_string(),
                r.skipped.to_string(),
            ]
        })
        .collect();
    write_table(path, &TIMING_HEADER, &rows)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveRecord {
    pub variant: Variant,
    pub n: usize,
    pub coarse_dim: usize,
    pub coarse_rank: usize,
    /// Relative energy error of `u^G`.
    pub error: f64,
    pub bound: Option<f64>,
    /// Relative energy error of the iterative solution.
    pub iterative_error: f64,
    pub report: SolveReport,
    #[serde(skip)]
    pub nodal: Vec<f64>,
}

/// Multiscale solution plus a preconditioned iterative solve with the same coarse space.
pub fn solve(cfg: &RunConfig, variants: &[Variant]) -> Result<Vec<SolveRecord>> {
    let inst = Instance::from_config(cfg)?;
    let p = &inst.problem;
    let reference = p.solve_reference()?;
    let reference_dofs = p.dofmap.restrict(&reference);
    let opts = cfg.eigen.options(cfg.seed);
    let mut b = Preconditioner::new(p, &inst.decomposition, None)?;
    let mut out = Vec::new();
    for &v in variants {
        let method = MultiscaleMethod::new(p, &inst.decomposition, v, cfg.basis.n, &opts)?;
        let counts = method.uniform(cfg.basis.n);
        let sol = method.solve(&counts)?;
        let space = method.coarse_space(&counts)?;
        b.set_coarse(Some(space))?;
        let u0 = precond::initial_vector(p, &method.particular, cfg.solver.initial_guess);
        let report = precond::solve(cfg.solver.method, p, &b, &u0, &cfg.solver.options(), Some(&reference_dofs));
        let iterative = p.dofmap.prolong(&report.solution, &p.lift);
        out.push(SolveRecord {
            variant: v,
            n: cfg.basis.n,
            coarse_dim: sol.coarse_dim,
            coarse_rank: sol.coarse_rank,
            error: p.relative_energy_error(&reference, &sol.nodal)?,
            bound: method.error_bound(&counts).ok(),
            iterative_error: p.relative_energy_error(&reference, &iterative)?,
            report,
            nodal: sol.nodal,
        });
    }
    Ok(out)
}

/// Run summary written next to the tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub experiment: String,
    pub version: String,
    pub threads: usize,
    pub config: RunConfig,
    pub files: Vec<PathBuf>,
    pub wall_seconds: BTreeMap<String, f64>,
}

/// The tables an experiment run produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    Solve,
    Decay,
    Iterate,
    Spectrum,
    BenchFillin,
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Task::Solve => "solve",
            Task::Decay => "decay",
            Task::Iterate => "iterate",
            Task::Spectrum => "spectrum",
            Task::BenchFillin => "bench-fillin",
        }
    }

    pub fn experiment(&self) -> Experiment {
        match self {
            Task::Solve => Experiment::Solve,
            Task::Decay => Experiment::DecayN,
            Task::Iterate => Experiment::IterationTable,
            Task::Spectrum => Experiment::Spectrum,
            Task::BenchFillin => Experiment::TimingFillin,
        }
    }
}

/// Runs a task with the current rayon pool and writes its outputs into `out`.
pub fn run(task: Task, cfg: &RunConfig, out: &Path) -> Result<Manifest> {
    cfg.validate()?;
    std::fs::create_dir_all(out)?;
    let variants = cfg.variants.variants();
    let mut files = Vec::new();
    let mut wall = BTreeMap::new();
    let mut timed = |name: &str, t: Instant| {
        wall.insert(name.to_string(), t.elapsed().as_secs_f64());
    };
    match task {
        Task::Solve => {
            let t = Instant::now();
            let records = solve(cfg, &variants)?;
            timed("solve", t);
            for r in &records {
                let path = out.join(format!("solution_{}.csv", r.variant));
                write_vector_csv(&path, &r.nodal)?;
                files.push(path);
            }
            let path = out.join("solve.json");
            std::fs::write(&path, serde_json::to_string_pretty(&records).map_err(json_error)?)?;
            files.push(path);
        }
        Task::Decay => {
            let t = Instant::now();
            let rows = decay_n(cfg, &variants)?;
            timed("decay_n", t);
            let path = out.join("decay_n.csv");
            write_decay(&path, &rows)?;
            files.push(path);
            let t = Instant::now();
            let rows = decay_ell(cfg, &variants)?;
            timed("decay_ell", t);
            let path = out.join("decay_ell.csv");
            write_decay(&path, &rows)?;
            files.push(path);
        }
        Task::Iterate => {
            let t = Instant::now();
            let methods = [Method::Richardson, Method::Gmres];
            let rows = iteration_table(cfg, &variants, &methods)?;
            timed("iteration_table", t);
            let path = out.join("iterations.csv");
            write_iterations(&path, &rows)?;
            files.push(path);
            for &v in &variants {
                for m in methods {
                    let (header, table) = iteration_grid(&rows, v, m);
                    let header: Vec<&str> = header.iter().map(String::as_str).collect();
                    let path = out.join(format!("iterations_{v}_{}.csv", method_name(m)));
                    write_table(&path, &header, &table)?;
                    files.push(path);
                }
            }
        }
        Task::Spectrum => {
            let t = Instant::now();
            let records = spectrum(cfg, &variants)?;
            timed("spectrum", t);
            files.extend(write_spectrum(out, &records)?);
        }
        Task::BenchFillin => {
            let t = Instant::now();
            let rows = timing_fillin(cfg, &variants)?;
            timed("timing_fillin", t);
            let path = out.join("timing_fillin.csv");
            write_timing(&path, &rows)?;
            files.push(path);
        }
    }
    let manifest = Manifest {
        experiment: task.name().to_string(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        threads: rayon::current_num_threads(),
        config: cfg.clone(),
        files,
        wall_seconds: wall,
    };
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).map_err(json_error)?)?;
    Ok(manifest)
}

fn json_error(e: serde_json::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}
