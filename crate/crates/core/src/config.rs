//! Run configuration: a TOML file with optional sections, every field defaulted.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::coefficients::{
    channel_field, constant_field, load_field, skyscraper_field_with_fraction, ChannelGeometry, CoefficientField,
};
use crate::decomposition::DecompositionParams;
use crate::eigen::LanczosOptions;
use crate::error::{Error, Result};
use crate::factor::Ordering;
use crate::fem::Source;
use crate::local_spaces::{EigenOptions, Variant};
use crate::mesh::Mesh;
use crate::precond::{InitialGuess, Method, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    DecayN,
    DecayEll,
    IterationTable,
    Spectrum,
    TimingFillin,
    Solve,
}

impl Experiment {
    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::DecayN => "decay_n",
            Experiment::DecayEll => "decay_ell",
            Experiment::IterationTable => "iteration_table",
            Experiment::Spectrum => "spectrum",
            Experiment::TimingFillin => "timing_fillin",
            Experiment::Solve => "solve",
        }
    }
}

/// Which variants to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantSet {
    Full,
    Ring,
    Both,
}

impl VariantSet {
    pub fn variants(&self) -> Vec<Variant> {
        match self {
            VariantSet::Full => vec![Variant::Full],
            VariantSet::Ring => vec![Variant::Ring],
            VariantSet::Both => vec![Variant::Full, Variant::Ring],
        }
    }
}

impl std::str::FromStr for VariantSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(VariantSet::Full),
            "ring" => Ok(VariantSet::Ring),
            "both" => Ok(VariantSet::Both),
            other => Err(Error::Config(format!("unknown variant set {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub dim: usize,
    /// Cells per axis.
    pub cells: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self { dim: 2, cells: 128 }
    }
}

impl MeshConfig {
    pub fn build(&self) -> Result<Mesh> {
        Mesh::unit(self.dim, self.cells)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecompositionConfig {
    /// Subdomains per axis; a single value applies to every axis.
    pub subdomains: Vec<usize>,
    pub overlap: usize,
    /// Oversampling layers `ℓ`.
    pub oversampling: usize,
}

impl Default for DecompositionConfig {
    fn default() -> Self {
        Self {
            subdomains: vec![4],
            overlap: 2,
            oversampling: 2,
        }
    }
}

impl DecompositionConfig {
    pub fn params(&self, dim: usize) -> Result<DecompositionParams> {
        let spa = match self.subdomains.len() {
            1 => vec![self.subdomains[0]; dim],
            l if l == dim => self.subdomains.clone(),
            l => return Err(Error::Config(format!("{l} subdomain counts for a {dim}D mesh"))),
        };
        let mut p = DecompositionParams::new(spa, self.oversampling);
        p.overlap_layers = self.overlap;
        Ok(p)
    }

    pub fn grid2(&self) -> [usize; 2] {
        let s = &self.subdomains;
        [s[0], *s.get(1).unwrap_or(&s[0])]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CoefficientKind {
    Constant,
    Skyscraper,
    Channel,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoefficientConfig {
    pub kind: CoefficientKind,
    /// Constant value, or the peak value of a skyscraper field.
    pub value: f64,
    pub block_size: usize,
    pub fill_fraction: f64,
    /// Channel contrast exponent `j` (contrast `10^j`).
    pub exponent: i32,
    /// Channel layout; defaults to the built-in layout for the subdomain grid.
    pub channels: Option<ChannelGeometry>,
    pub path: Option<PathBuf>,
}

impl Default for CoefficientConfig {
    fn default() -> Self {
        Self {
            kind: CoefficientKind::Skyscraper,
            value: 2e6,
            block_size: 8,
            fill_fraction: 0.25,
            exponent: 6,
            channels: None,
            path: None,
        }
    }
}

impl CoefficientConfig {
    pub fn channel_geometry(&self, grid: [usize; 2]) -> ChannelGeometry {
        self.channels.clone().unwrap_or_else(|| ChannelGeometry::default_for(grid))
    }

    pub fn build(&self, mesh: &Mesh, grid: [usize; 2], seed: u64) -> Result<CoefficientField> {
        match self.kind {
            CoefficientKind::Constant => constant_field(mesh, self.value),
            CoefficientKind::Skyscraper => {
                skyscraper_field_with_fraction(mesh, seed, self.block_size, self.value, self.fill_fraction)
            }
            CoefficientKind::Channel => channel_field(mesh, self.exponent, &self.channel_geometry(grid)),
            CoefficientKind::File => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| Error::Config("coefficient kind \"file\" needs a path".into()))?;
                load_field(mesh, path)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemConfig {
    pub source: f64,
    /// Constant Dirichlet value on the whole boundary.
    pub dirichlet: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            source: 1.0,
            dirichlet: 0.0,
        }
    }
}

impl ProblemConfig {
    pub fn source(&self) -> Source {
        Source::Constant(self.source)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BasisConfig {
    /// Basis functions per subdomain for `solve`.
    pub n: usize,
    /// Sweep range for the decay experiment (inclusive).
    pub n_min: usize,
    pub n_max: usize,
    /// Oversampling values for the `ℓ` sweep.
    pub ell_values: Vec<usize>,
    /// Fixed `n` for the `ℓ` sweep.
    pub n_for_ell: usize,
}

impl Default for BasisConfig {
    fn default() -> Self {
        Self {
            n: 8,
            n_min: 1,
            n_max: 16,
            ell_values: vec![1, 2, 3, 4, 6, 8],
            n_for_ell: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EigenConfig {
    pub tol: f64,
    pub max_iterations: usize,
    pub block_size: usize,
    pub shift_scale: f64,
    pub ordering: Ordering,
}

impl Default for EigenConfig {
    fn default() -> Self {
        let e = EigenOptions::default();
        Self {
            tol: e.lanczos.tol,
            max_iterations: e.lanczos.max_iterations,
            block_size: e.lanczos.block_size,
            shift_scale: e.shift_scale,
            ordering: e.ordering,
        }
    }
}

impl EigenConfig {
    pub fn options(&self, seed: u64) -> EigenOptions {
        EigenOptions {
            lanczos: LanczosOptions {
                block_size: self.block_size,
                tol: self.tol,
                max_iterations: self.max_iterations,
                max_basis: None,
                seed,
                ..LanczosOptions::default()
            },
            shift_scale: self.shift_scale,
            ordering: self.ordering,
            ..EigenOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub method: Method,
    pub tol: f64,
    pub max_iterations: usize,
    pub divergence_factor: f64,
    pub initial_guess: InitialGuess,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let s = SolverOptions::default();
        Self {
            method: Method::Richardson,
            tol: s.tol,
            max_iterations: s.max_iterations,
            divergence_factor: s.divergence_factor,
            initial_guess: InitialGuess::Zero,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            tol: self.tol,
            max_iterations: self.max_iterations,
            divergence_factor: self.divergence_factor,
            explicit_residuals: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IterationTableConfig {
    pub exponents: Vec<i32>,
    pub n_values: Vec<usize>,
}

impl Default for IterationTableConfig {
    fn default() -> Self {
        Self {
            exponents: vec![0, 3, 6],
            n_values: (1..=10).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectrumConfig {
    /// Subdomains to report, by grid position.
    pub subdomains: Vec<[usize; 2]>,
    pub num_eigenvalues: usize,
    /// Consecutive ratio of sorted `1/λ` marking the spectral gap.
    pub gap_ratio: f64,
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        Self {
            subdomains: vec![[1, 0], [1, 1], [1, 2]],
            num_eigenvalues: 12,
            gap_ratio: 100.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimingConfig {
    /// Cells per axis of each of the 3×3×3 bricks.
    pub m_values: Vec<usize>,
    /// Overlap layers added to each brick.
    pub overlap: usize,
    pub ell_values: Vec<usize>,
    pub num_eigenpairs: usize,
    pub repeats: usize,
    /// Refuse saddle systems larger than this.
    pub max_dofs: usize,
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            m_values: vec![9, 13, 17, 21, 25],
            overlap: 1,
            ell_values: vec![1, 2, 3],
            num_eigenpairs: 5,
            repeats: 10,
            max_dofs: 400_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub variants: VariantSet,
    pub jobs: usize,
    pub output_dir: PathBuf,
    pub mesh: MeshConfig,
    pub decomposition: DecompositionConfig,
    pub coefficient: CoefficientConfig,
    pub problem: ProblemConfig,
    pub basis: BasisConfig,
    pub eigen: EigenConfig,
    pub solver: SolverConfig,
    pub iteration_table: IterationTableConfig,
    pub spectrum: SpectrumConfig,
    pub timing: TimingConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            experiment: Experiment::Solve,
            seed: 0,
            variants: VariantSet::Both,
            jobs: 1,
            output_dir: PathBuf::from("out"),
            mesh: MeshConfig::default(),
            decomposition: DecompositionConfig::default(),
            coefficient: CoefficientConfig::default(),
            problem: ProblemConfig::default(),
            basis: BasisConfig::default(),
            eigen: EigenConfig::default(),
            solver: SolverConfig::default(),
            iteration_table: IterationTableConfig::default(),
            spectrum: SpectrumConfig::default(),
            timing: TimingConfig::default(),
        }
    }
}

fn merge_tables(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge_tables(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

impl RunConfig {
    /// Defaults for each experiment at the scales used in the benchmarks.
    pub fn preset(experiment: Experiment) -> Self {
        let mut c = Self {
            experiment,
            ..Self::default()
        };
        match experiment {
            Experiment::IterationTable | Experiment::Spectrum => {
                c.mesh.cells = 256;
                c.coefficient.kind = CoefficientKind::Channel;
            }
            Experiment::Solve => {
                c.mesh.cells = 64;
            }
            Experiment::TimingFillin => {
                c.mesh.dim = 3;
                c.coefficient.kind = CoefficientKind::Constant;
                c.coefficient.value = 1.0;
            }
            _ => {}
        }
        c
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    /// Reads a TOML file whose entries override `base`; keys absent from the
    /// file keep the values of `base`.
    pub fn load_over(base: &RunConfig, path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::merge_toml(base, &text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn merge_toml(base: &RunConfig, text: &str) -> Result<Self> {
        let over: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let mut merged = toml::Table::try_from(base).map_err(|e| Error::Config(e.to_string()))?;
        merge_tables(&mut merged, over);
        merged.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_toml_string()?)?;
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mesh.dim == 2 || self.mesh.dim == 3) {
            return Err(Error::Config(format!("mesh dimension {} not supported", self.mesh.dim)));
        }
        if self.mesh.cells == 0 {
            return Err(Error::Config("mesh needs at least one cell per axis".into()));
        }
        if self.basis.n_min == 0 || self.basis.n_min > self.basis.n_max {
            return Err(Error::Config(format!(
                "basis range {}..={} is empty",
                self.basis.n_min, self.basis.n_max
            )));
        }
        if self.timing.repeats < 3 {
            return Err(Error::Config("timing needs at least 3 repeats".into()));
        }
        if !(self.solver.tol > 0.0) {
            return Err(Error::Config("solver tolerance must be positive".into()));
        }
        self.decomposition.params(self.mesh.dim)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_stable() {
        for e in [
            Experiment::DecayN,
            Experiment::DecayEll,
            Experiment::IterationTable,
            Experiment::Spectrum,
            Experiment::TimingFillin,
            Experiment::Solve,
        ] {
            let mut c = RunConfig::preset(e);
            c.solver.initial_guess = InitialGuess::Random(5);
            c.coefficient.channels = Some(ChannelGeometry::default_for([4, 4]));
            let text = c.to_toml_string().unwrap();
            let back = RunConfig::from_toml_str(&text).unwrap();
            assert_eq!(back, c);
            assert_eq!(back.to_toml_string().unwrap(), text);
        }
    }

    #[test]
    fn partial_files_use_defaults() {
        let c = RunConfig::from_toml_str(
            "experiment = \"decay_n\"\nseed = 3\n[mesh]\ncells = 64\n[coefficient]\nkind = \"constant\"\nvalue = 2.0\n",
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::DecayN);
        assert_eq!(c.mesh.cells, 64);
        assert_eq!(c.mesh.dim, 2);
        assert_eq!(c.decomposition, DecompositionConfig::default());
        assert_eq!(c.coefficient.kind, CoefficientKind::Constant);
        c.validate().unwrap();
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(RunConfig::from_toml_str("[mesh]\ncellz = 3\n").is_err());
        let mut c = RunConfig::default();
        c.timing.repeats = 2;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.decomposition.subdomains = vec![2, 2, 2];
        assert!(c.validate().is_err());
    }

    #[test]
    fn builds_fields() {
        let c = RunConfig::preset(Experiment::IterationTable);
        let mesh = Mesh::unit(2, 64).unwrap();
        let f = c.coefficient.build(&mesh, c.decomposition.grid2(), 0).unwrap();
        assert_eq!(f.contrast(), 1e6);
        let mut c = RunConfig::default();
        c.coefficient.kind = CoefficientKind::File;
        assert!(c.coefficient.build(&mesh, [4, 4], 0).is_err());
    }
}
