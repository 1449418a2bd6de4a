//! Per-subdomain building blocks: particular functions, discrete harmonic
//! spaces, the weighted local eigenproblems on `ω*` (full) or `R*` (ring), the
//! harmonic extension of ring eigenfunctions and the mean functionals.
//!
//! A function is discretely harmonic on a patch `D` when its stiffness residual
//! vanishes at every interior node of `D`. The harmonic space is parametrized
//! by the remaining free nodes (the inner boundary of `D`); nodes on the outer
//! boundary of the domain are fixed to zero. The eigenproblem
//! `a_D(u, φ) = λ a(I_h(w u), I_h(w φ))` on that space is solved with the
//! constraint imposed by Lagrange multipliers, i.e. through the indefinite
//! matrix `[[K_UU - σW, K_CUᵀ], [K_CU, 0]]`.

use std::time::Instant;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::coefficients::CoefficientField;
use crate::decomposition::Decomposition;
use crate::eigen::{largest_eigenpairs, LanczosOptions, PencilOperator};
use crate::error::{Error, Result};
use crate::factor::{amd_permutation, nested_dissection, pair_multipliers, FillStats, LuOptions, Ordering, SparseLu};
use crate::fem::{assemble_load_on, assemble_stiffness_on, CellPatch, Source};
use crate::mesh::Mesh;
use crate::sparse::{dot, CsrMatrix, TripletBuilder, UNMAPPED};

/// Which local eigenproblem builds the approximation space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// Eigenproblem on the whole oversampling domain `ω*`.
    Full,
    /// Eigenproblem on the oversampled ring `R*`, extended harmonically inward.
    Ring,
}

impl Variant {
    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Full => "full",
            Variant::Ring => "ring",
        }
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EigenOptions {
    pub lanczos: LanczosOptions,
    /// `σ = -shift_scale * tr(K_UU) / tr(W_UU)`.
    pub shift_scale: f64,
    pub ordering: Ordering,
    /// Iterative refinement steps per shift-invert solve.
    pub refinement_steps: usize,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            lanczos: LanczosOptions::default(),
            shift_scale: 1e-8,
            ordering: Ordering::NestedDissection,
            refinement_steps: 1,
        }
    }
}

/// Index sets of a discrete harmonic space on a patch, as patch-local node indices.
#[derive(Debug, Clone, PartialEq)]
pub struct HarmonicSpace {
    pub subdomain: usize,
    pub domain: Variant,
    /// Patch nodes not on the outer boundary (`U`).
    pub unknowns: Vec<usize>,
    /// Interior patch nodes carrying the harmonicity constraint (`C`).
    pub constrained: Vec<usize>,
    /// `U \ C`: the nodes parametrizing the space.
    pub free: Vec<usize>,
    /// Some patch nodes lie on the outer boundary and are fixed to zero.
    pub dirichlet_on_boundary: bool,
}

impl HarmonicSpace {
    pub fn new(mesh: &Mesh, patch: &CellPatch, subdomain: usize, domain: Variant) -> Self {
        let constrained = patch.interior_local_nodes(mesh);
        let unknowns: Vec<usize> = (0..patch.num_nodes()).filter(|&l| !mesh.is_boundary_node(patch.nodes[l])).collect();
        let dirichlet_on_boundary = unknowns.len() < patch.num_nodes();
        let mut is_c = vec![false; patch.num_nodes()];
        for &c in &constrained {
            is_c[c] = true;
        }
        let free = unknowns.iter().copied().filter(|&u| !is_c[u]).collect();
        Self {
            subdomain,
            domain,
            unknowns,
            constrained,
            free,
            dirichlet_on_boundary,
        }
    }

    pub fn dim(&self) -> usize {
        self.free.len()
    }
}

/// Solver for discrete harmonic extensions on a patch: given values at the
/// non-interior nodes, fills in the interior nodes.
#[derive(Debug, Clone)]
pub struct HarmonicExtender {
    interior: Vec<usize>,
    boundary: Vec<usize>,
    k_ib: CsrMatrix,
    lu: Option<SparseLu>,
    n: usize,
}

impl HarmonicExtender {
    pub fn new(mesh: &Mesh, coeff: &CoefficientField, patch: &CellPatch) -> Result<Self> {
        let k = assemble_stiffness_on(mesh, coeff, patch)?;
        Self::from_matrix(&k, patch.interior_local_nodes(mesh))
    }

    fn from_matrix(k: &CsrMatrix, interior: Vec<usize>) -> Result<Self> {
        let n = k.nrows();
        let mut is_i = vec![false; n];
        for &i in &interior {
            is_i[i] = true;
        }
        let boundary: Vec<usize> = (0..n).filter(|&l| !is_i[l]).collect();
        let k_ib = k.submatrix(&interior, &boundary);
        let lu = if interior.is_empty() {
            None
        } else {
            Some(SparseLu::factorize(&k.submatrix(&interior, &interior).with_symmetry_flag(true))?)
        };
        Ok(Self {
            interior,
            boundary,
            k_ib,
            lu,
            n,
        })
    }

    pub fn interior(&self) -> &[usize] {
        &self.interior
    }

    /// Takes a patch vector whose non-interior entries are prescribed and
    /// overwrites the interior entries with the discrete harmonic extension.
    pub fn extend_in_place(&self, values: &mut [f64]) {
        assert_eq!(values.len(), self.n);
        let Some(lu) = &self.lu else { return };
        let trace: Vec<f64> = self.boundary.iter().map(|&b| values[b]).collect();
        let mut rhs = self.k_ib.mul_vec(&trace);
        for r in rhs.iter_mut() {
            *r = -*r;
        }
        let x = lu.solve(&rhs);
        for (&i, v) in self.interior.iter().zip(x) {
            values[i] = v;
        }
    }
}

/// Extends a trace given on the nodes of the plateau `ω̃_i` (interior entries are
/// ignored) harmonically into its interior. Returns values on the plateau nodes.
pub fn harmonic_extend(
    mesh: &Mesh,
    coeff: &CoefficientField,
    decomposition: &Decomposition,
    i: usize,
    trace: &[f64],
) -> Result<Vec<f64>> {
    let patch = decomposition.subdomain(i).plateau_patch(mesh);
    if trace.len() != patch.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "trace has {} values, plateau has {} nodes",
            trace.len(),
            patch.num_nodes()
        )));
    }
    let ext = HarmonicExtender::new(mesh, coeff, &patch)?;
    let mut out = trace.to_vec();
    ext.extend_in_place(&mut out);
    Ok(out)
}

/// Timing and size statistics of one local eigensolve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenStats {
    pub build_seconds: f64,
    pub factor_seconds: f64,
    pub solve_seconds: f64,
    pub extension_seconds: f64,
    pub saddle_dim: usize,
    pub fill: FillStats,
    pub lanczos_iterations: usize,
    pub operator_applications: usize,
}

impl EigenStats {
    /// Build, factorization and iteration time (the extension is excluded).
    pub fn eigensolve_seconds(&self) -> f64 {
        self.build_seconds + self.factor_seconds + self.solve_seconds
    }
}

/// Eigenpairs of one subdomain together with the extended basis on `ω*`.
#[derive(Debug, Clone)]
pub struct LocalSpectralResult {
    pub subdomain: usize,
    pub requested: Variant,
    /// Variant actually solved (a degenerate ring falls back to `Full`).
    pub variant: Variant,
    /// Ascending; for interior subdomains the first value is the constant mode `0`.
    pub eigenvalues: Vec<f64>,
    pub includes_constant: bool,
    /// Patch nodes of the eigenproblem domain.
    pub domain_nodes: Vec<usize>,
    /// Eigenvectors on `domain_nodes`, normalized in the weighted energy.
    pub eigenvectors: Vec<Vec<f64>>,
    /// Nodes of `ω*`.
    pub star_nodes: Vec<usize>,
    /// Eigenvectors extended to `ω*` (identical to `eigenvectors` for `Full`).
    pub extended: Vec<Vec<f64>>,
    pub harmonic_dim: usize,
    /// Relative residuals reported by the iteration (zero for the constant mode).
    pub residuals: Vec<f64>,
    pub stats: EigenStats,
}

impl LocalSpectralResult {
    /// Number of eigenvalues excluding the constant mode.
    pub fn num_nonconstant(&self) -> usize {
        self.eigenvalues.len() - usize::from(self.includes_constant)
    }

    /// `k`-th eigenvalue (1-based) of the problem without the constant mode.
    pub fn nonconstant_eigenvalue(&self, k: usize) -> Option<f64> {
        let idx = k.checked_sub(1)? + usize::from(self.includes_constant);
        self.eigenvalues.get(idx).copied()
    }

    /// `d_n = λ_{n+1}^{-1/2}` with the constant mode excluded from the indexing.
    pub fn n_width(&self, n: usize) -> Option<f64> {
        self.nonconstant_eigenvalue(n + 1).map(|l| l.max(0.0).powf(-0.5))
    }

    /// `λ_{n+1}^{-1/2}` counting the constant mode: the local error factor of a
    /// space built from the first `n` basis functions of this subdomain.
    pub fn coarse_width(&self, n: usize) -> Option<f64> {
        self.eigenvalues.get(n).map(|l| l.max(0.0).powf(-0.5))
    }

    pub fn reciprocals(&self) -> Vec<f64> {
        self.eigenvalues.iter().map(|&l| if l > 0.0 { 1.0 / l } else { f64::INFINITY }).collect()
    }
}

/// Assembled pieces of a local eigenproblem, shared by the sparse solver and the dense oracle.
#[derive(Debug, Clone)]
pub struct LocalPencil {
    pub patch: CellPatch,
    pub space: HarmonicSpace,
    /// Neumann stiffness on the patch.
    pub k: CsrMatrix,
    /// Nodal weight (`χ` or `χᴿ`) on the patch nodes.
    pub weight: Vec<f64>,
    pub k_uu: CsrMatrix,
    pub w_uu: CsrMatrix,
    pub k_cu: CsrMatrix,
}

impl LocalPencil {
    pub fn new(
        mesh: &Mesh,
        coeff: &CoefficientField,
        decomposition: &Decomposition,
        i: usize,
        variant: Variant,
    ) -> Result<Self> {
        let s = decomposition.subdomain(i);
        let (patch, weight) = match variant {
            Variant::Full => {
                let patch = s.omega_star_patch(mesh);
                let w = decomposition.chi_on(i, &patch.nodes);
                (patch, w)
            }
            Variant::Ring => {
                let patch = s.ring_star_patch(mesh);
                let w = decomposition.chi_ring_on(i, &patch.nodes);
                (patch, w)
            }
        };
        let k = assemble_stiffness_on(mesh, coeff, &patch)?;
        let space = HarmonicSpace::new(mesh, &patch, i, variant);
        let w_full = k.scale_rows_cols(&weight, &weight);
        let k_uu = k.submatrix(&space.unknowns, &space.unknowns).with_symmetry_flag(true);
        let w_uu = w_full.submatrix(&space.unknowns, &space.unknowns).with_symmetry_flag(true);
        let k_cu = k.submatrix(&space.constrained, &space.unknowns);
        Ok(Self {
            patch,
            space,
            k,
            weight,
            k_uu,
            w_uu,
            k_cu,
        })
    }

    pub fn shift(&self, shift_scale: f64) -> f64 {
        let tk: f64 = self.k_uu.diagonal().iter().sum();
        let tw: f64 = self.w_uu.diagonal().iter().sum();
        if tw > 0.0 {
            -shift_scale * tk / tw
        } else {
            -shift_scale
        }
    }

    /// `[[K_UU - σ W_UU, K_CUᵀ], [K_CU, 0]]`.
    pub fn saddle_matrix(&self, sigma: f64) -> Result<CsrMatrix> {
        let a = self.k_uu.add_scaled(&self.w_uu, -sigma)?;
        let nu = a.nrows();
        let nc = self.k_cu.nrows();
        let mut b = TripletBuilder::with_capacity(nu + nc, nu + nc, a.nnz() + 2 * self.k_cu.nnz());
        for r in 0..nu {
            for (c, v) in a.row(r) {
                b.push(r, c, v);
            }
        }
        for r in 0..nc {
            for (c, v) in self.k_cu.row(r) {
                b.push(nu + r, c, v);
                b.push(c, nu + r, v);
            }
        }
        Ok(b.build().with_symmetry_flag(true))
    }

    /// Column order of the saddle matrix pairing every harmonicity multiplier
    /// with its node; `None` for orderings that need no pairing.
    pub fn saddle_order(&self, mesh: &Mesh, ordering: Ordering) -> Result<Option<Vec<usize>>> {
        let primal = match ordering {
            Ordering::Paired => amd_permutation(&self.k_uu)?,
            Ordering::NestedDissection => {
                let coords: Vec<[usize; 3]> =
                    self.space.unknowns.iter().map(|&u| mesh.node_coords(self.patch.nodes[u])).collect();
                nested_dissection(&coords)
            }
            Ordering::Amd | Ordering::Natural => return Ok(None),
        };
        let mut position = vec![usize::MAX; self.patch.num_nodes()];
        for (k, &u) in self.space.unknowns.iter().enumerate() {
            position[u] = k;
        }
        let owner: Vec<usize> = self.space.constrained.iter().map(|&c| position[c]).collect();
        pair_multipliers(&primal, &owner).map(Some)
    }

    /// Whether the constant vector lies in the admissible space.
    pub fn admits_constants(&self) -> bool {
        !self.space.dirichlet_on_boundary
    }
}

/// `OP x = top block of S(σ)⁻¹ [W x; 0]`.
struct SaddleOperator<'a> {
    lu: SparseLu,
    saddle: &'a CsrMatrix,
    w_uu: &'a CsrMatrix,
    nu: usize,
    refinement_steps: usize,
}

impl PencilOperator for SaddleOperator<'_> {
    fn dim(&self) -> usize {
        self.nu
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = self.lu.dim();
        let mut rhs = vec![0.0; n];
        self.w_uu.mul_vec_into(x, &mut rhs[..self.nu]);
        let mut work = vec![0.0; n];
        let mut sol = rhs.clone();
        self.lu.solve_in_place(&mut sol, &mut work);
        // Iterative refinement: threshold pivoting on the indefinite matrix
        // leaves errors far above roundoff for strongly varying coefficients.
        let mut res = vec![0.0; n];
        for _ in 0..self.refinement_steps {
            self.saddle.mul_vec_into(&sol, &mut res);
            for (r, b) in res.iter_mut().zip(&rhs) {
                *r = b - *r;
            }
            self.lu.solve_in_place(&mut res, &mut work);
            for (s, d) in sol.iter_mut().zip(&res) {
                *s += d;
            }
        }
        y.copy_from_slice(&sol[..self.nu]);
    }

    fn apply_w(&self, x: &[f64], y: &mut [f64]) {
        self.w_uu.mul_vec_into(x, y);
    }
}

/// Scales to unit weighted energy and fixes the sign so that the entry of
/// largest magnitude is positive.
fn normalize(v: &mut [f64], w: &CsrMatrix) {
    let n = w.bilinear(v, v).max(0.0).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    let mut best = 0;
    for (k, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() * (1.0 + 1e-12) {
            best = k;
        }
    }
    if v[best] < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

fn first_significant(v: &[f64]) -> usize {
    let m = v.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    v.iter().position(|x| x.abs() > 1e-8 * m).unwrap_or(v.len())
}

/// Orders pairs by ascending eigenvalue; numerically equal eigenvalues are
/// ordered by the position of the first significant eigenvector entry.
fn sort_pairs(values: &mut Vec<f64>, vectors: &mut Vec<Vec<f64>>, residuals: &mut Vec<f64>) {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    // Stable tie-break inside clusters.
    let mut out: Vec<usize> = Vec::with_capacity(idx.len());
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        let base = values[idx[start]];
        while end < idx.len() && (values[idx[end]] - base).abs() <= 1e-12 * base.abs().max(1e-300) {
            end += 1;
        }
        let mut cluster = idx[start..end].to_vec();
        cluster.sort_by_key(|&k| first_significant(&vectors[k]));
        out.extend(cluster);
        start = end;
    }
    *values = out.iter().map(|&k| values[k]).collect();
    *vectors = out.iter().map(|&k| vectors[k].clone()).collect();
    *residuals = out.iter().map(|&k| residuals[k]).collect();
}

/// Solves the local eigenproblem of subdomain `i` for the `n` smallest
/// eigenpairs (the constant mode included for interior subdomains).
pub fn eigensolve(
    mesh: &Mesh,
    coeff: &CoefficientField,
    decomposition: &Decomposition,
    i: usize,
    variant: Variant,
    n: usize,
    opts: &EigenOptions,
) -> Result<LocalSpectralResult> {
    let s = decomposition.subdomain(i);
    let solved = if variant == Variant::Ring && s.ring_degenerate {
        warn!("subdomain {i}: ring is degenerate, solving the full eigenproblem instead");
        Variant::Full
    } else {
        variant
    };
    let t0 = Instant::now();
    let pencil = LocalPencil::new(mesh, coeff, decomposition, i, solved)?;
    let dim = pencil.space.dim();
    let mut n = n;
    if n > dim {
        warn!("subdomain {i}: {n} eigenpairs requested, harmonic space has dimension {dim}");
        n = dim;
    }
    let sigma = pencil.shift(opts.shift_scale);
    let saddle = pencil.saddle_matrix(sigma)?;
    let build_seconds = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let lu_opts = LuOptions {
        ordering: opts.ordering,
        ..LuOptions::default()
    };
    let lu = match pencil.saddle_order(mesh, opts.ordering) {
        Ok(Some(q)) => SparseLu::factorize_ordered(&saddle, q, lu_opts),
        Ok(None) => SparseLu::factorize_with(&saddle, lu_opts),
        Err(e) => Err(e),
    }
    .map_err(|e| Error::Subdomain {
        subdomain: i,
        message: format!("saddle point factorization failed: {e}"),
    })?;
    let factor_seconds = t1.elapsed().as_secs_f64();
    let fill = lu.stats();

    let t2 = Instant::now();
    let nu = pencil.space.unknowns.len();
    let op = SaddleOperator {
        lu,
        saddle: &saddle,
        w_uu: &pencil.w_uu,
        nu,
        refinement_steps: opts.refinement_steps,
    };
    let includes_constant = pencil.admits_constants() && n > 0;
    let mut deflation = Vec::new();
    if includes_constant {
        let mut one = vec![1.0; nu];
        let norm = pencil.w_uu.bilinear(&one, &one).sqrt();
        if !(norm > 0.0) {
            return Err(Error::Subdomain {
                subdomain: i,
                message: "partition of unity weight has zero energy".into(),
            });
        }
        one.iter_mut().for_each(|x| *x /= norm);
        deflation.push(one);
    }
    let wanted = n - usize::from(includes_constant);
    let res = largest_eigenpairs(&op, wanted, &deflation, &opts.lanczos).map_err(|e| match e {
        Error::EigenNotConverged { .. } => {
            warn!("subdomain {i}: {e}");
            e
        }
        other => other,
    })?;
    let solve_seconds = t2.elapsed().as_secs_f64();

    let mut values = Vec::with_capacity(n);
    let mut vectors = Vec::with_capacity(n);
    let mut residuals = Vec::with_capacity(n);
    if includes_constant {
        values.push(0.0);
        vectors.push(deflation[0].clone());
        residuals.push(0.0);
    }
    for ((nu_k, v), r) in res.values.iter().zip(res.vectors).zip(res.residuals) {
        values.push(sigma + 1.0 / nu_k);
        vectors.push(v);
        residuals.push(r);
    }
    for v in vectors.iter_mut() {
        normalize(v, &pencil.w_uu);
    }
    sort_pairs(&mut values, &mut vectors, &mut residuals);

    // Scatter to all patch nodes (zero on the outer boundary).
    let np = pencil.patch.num_nodes();
    let eigenvectors: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| {
            let mut full = vec![0.0; np];
            for (&u, &x) in pencil.space.unknowns.iter().zip(v) {
                full[u] = x;
            }
            full
        })
        .collect();

    let t3 = Instant::now();
    let star_nodes = s.omega_star.nodes(mesh);
    let extended = match solved {
        Variant::Full => eigenvectors.clone(),
        Variant::Ring => extend_ring_vectors(mesh, coeff, decomposition, i, &pencil.patch, &star_nodes, &eigenvectors)?,
    };
    let extension_seconds = t3.elapsed().as_secs_f64();

    Ok(LocalSpectralResult {
        subdomain: i,
        requested: variant,
        variant: solved,
        eigenvalues: values,
        includes_constant,
        domain_nodes: pencil.patch.nodes.clone(),
        eigenvectors,
        star_nodes,
        extended,
        harmonic_dim: dim,
        residuals,
        stats: EigenStats {
            build_seconds,
            factor_seconds,
            solve_seconds,
            extension_seconds,
            saddle_dim: saddle.nrows(),
            fill,
            lanczos_iterations: res.iterations,
            operator_applications: res.operator_applications,
        },
    })
}

/// `u^ext`: the ring eigenfunction on `R* \ ω̃`, its harmonic extension on `ω̃`.
fn extend_ring_vectors(
    mesh: &Mesh,
    coeff: &CoefficientField,
    decomposition: &Decomposition,
    i: usize,
    ring_patch: &CellPatch,
    star_nodes: &[usize],
    vectors: &[Vec<f64>],
) -> Result<Vec<Vec<f64>>> {
    let s = decomposition.subdomain(i);
    let plateau = s.plateau_patch(mesh);
    let extender = HarmonicExtender::new(mesh, coeff, &plateau)?;
    let star_local = |g: usize| star_nodes.binary_search(&g).ok();
    // Source of every ω* node: an interior plateau node or a ring node.
    let mut from_plateau = vec![UNMAPPED; star_nodes.len()];
    for &l in extender.interior() {
        if let Some(k) = star_local(plateau.nodes[l]) {
            from_plateau[k] = l;
        }
    }
    let mut from_ring = vec![UNMAPPED; star_nodes.len()];
    for (l, &g) in ring_patch.nodes.iter().enumerate() {
        if let Some(k) = star_local(g) {
            from_ring[k] = l;
        }
    }
    for (k, &g) in star_nodes.iter().enumerate() {
        if from_plateau[k] == UNMAPPED && from_ring[k] == UNMAPPED && !mesh.is_boundary_node(g) {
            return Err(Error::Subdomain {
                subdomain: i,
                message: format!("node {g} of the oversampling domain is neither in the ring nor inside the plateau"),
            });
        }
    }
    let plateau_trace_src: Vec<usize> = plateau.nodes.iter().map(|&g| ring_patch.local(g).unwrap_or(UNMAPPED)).collect();
    vectors
        .iter()
        .map(|v| {
            let mut p: Vec<f64> = plateau_trace_src.iter().map(|&l| if l == UNMAPPED { 0.0 } else { v[l] }).collect();
            extender.extend_in_place(&mut p);
            Ok((0..star_nodes.len())
                .map(|k| {
                    if from_plateau[k] != UNMAPPED {
                        p[from_plateau[k]]
                    } else if from_ring[k] != UNMAPPED {
                        v[from_ring[k]]
                    } else {
                        0.0
                    }
                })
                .collect())
        })
        .collect()
}

pub fn eigensolve_full(
    mesh: &Mesh,
    coeff: &CoefficientField,
    decomposition: &Decomposition,
    i: usize,
    n: usize,
    opts: &EigenOptions,
) -> Result<LocalSpectralResult> {
    eigensolve(mesh, coeff, decomposition, i, Variant::Full, n, opts)
}

pub fn eigensolve_ring(
    mesh: &Mesh,
    coeff: &CoefficientField,
    decomposition: &Decomposition,
    i: usize,
    n: usize,
    opts: &EigenOptions,
) -> Result<LocalSpectralResult> {
    eigensolve(mesh, coeff, decomposition, i, Variant::Ring, n, opts)
}

/// Best approximation of `I_h(χ_i u)` by `span{I_h(χ_i u_k^ext) : k < n}` in
/// the energy on `ω_i`, for functions `u` given on the nodes of `ω*_i`.
#[derive(Debug, Clone)]
pub struct LocalApproximation {
    k_omega: CsrMatrix,
    /// Position in `ω*` of every node of `ω`.
    from_star: Vec<usize>,
    chi: Vec<f64>,
    basis: Vec<Vec<f64>>,
    k_basis: Vec<Vec<f64>>,
}

impl LocalApproximation {
    pub fn new(
        mesh: &Mesh,
        coeff: &CoefficientField,
        decomposition: &Decomposition,
        spectrum: &LocalSpectralResult,
    ) -> Result<Self> {
        let i = spectrum.subdomain;
        let patch = CellPatch::new(mesh, decomposition.subdomain(i).omega_cells(mesh));
        let k_omega = assemble_stiffness_on(mesh, coeff, &patch)?;
        let from_star = patch
            .nodes
            .iter()
            .map(|g| {
                spectrum.star_nodes.binary_search(g).map_err(|_| Error::Subdomain {
                    subdomain: i,
                    message: format!("node {g} of ω lies outside ω*"),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let chi = decomposition.chi_on(i, &patch.nodes);
        let basis: Vec<Vec<f64>> = spectrum
            .extended
            .iter()
            .map(|v| from_star.iter().zip(&chi).map(|(&k, c)| c * v[k]).collect())
            .collect();
        let k_basis = basis.iter().map(|b| k_omega.mul_vec(b)).collect();
        Ok(Self {
            k_omega,
            from_star,
            chi,
            basis,
            k_basis,
        })
    }

    pub fn available(&self) -> usize {
        self.basis.len()
    }

    /// `min_c ‖I_h(χ (u - Σ_{k<n} c_k u_k^ext))‖_{a,ω}`.
    pub fn error(&self, u_star: &[f64], n: usize) -> Result<f64> {
        if n > self.basis.len() {
            return Err(Error::DimensionMismatch(format!(
                "{n} basis functions requested, {} available",
                self.basis.len()
            )));
        }
        let target: Vec<f64> = self.from_star.iter().zip(&self.chi).map(|(&k, c)| c * u_star[k]).collect();
        let mut residual = target.clone();
        if n > 0 {
            let g = nalgebra::DMatrix::from_fn(n, n, |a, b| dot(&self.basis[a], &self.k_basis[b]));
            let r = nalgebra::DVector::from_fn(n, |a, _| dot(&self.k_basis[a], &target));
            let svd = g.svd(true, true);
            let eps = 1e-13 * svd.singular_values.max();
            let c = svd.solve(&r, eps).map_err(|e| Error::DimensionMismatch(e.to_string()))?;
            for (k, ck) in c.iter().enumerate() {
                for (x, b) in residual.iter_mut().zip(&self.basis[k]) {
                    *x -= ck * b;
                }
            }
        }
        Ok(dot(&residual, &self.k_omega.mul_vec(&residual)).max(0.0).sqrt())
    }
}

/// Local particular functions on `ω*_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalParticular {
    pub subdomain: usize,
    pub star_nodes: Vec<usize>,
    /// Zero-Dirichlet solution of the local problem with the source.
    pub psi: Vec<f64>,
    /// Boundary subdomains: harmonic function with the Dirichlet data on the outer
    /// boundary and natural conditions on the rest of `∂ω*`.
    pub psi_b: Option<Vec<f64>>,
}

impl LocalParticular {
    /// `ψ_i + ψ_i^b` on the nodes of `ω*`.
    pub fn combined(&self) -> Vec<f64> {
        match &self.psi_b {
            Some(b) => self.psi.iter().zip(b).map(|(x, y)| x + y).collect(),
            None => self.psi.clone(),
        }
    }
}

pub fn solve_particular(
    mesh: &Mesh,
    coeff: &CoefficientField,
    source: &Source,
    dirichlet: &[f64],
    decomposition: &Decomposition,
    i: usize,
) -> Result<LocalParticular> {
    let s = decomposition.subdomain(i);
    let patch = s.omega_star_patch(mesh);
    let k = assemble_stiffness_on(mesh, coeff, &patch)?;
    let np = patch.num_nodes();
    let subdomain_err = |e: Error| Error::Subdomain {
        subdomain: i,
        message: format!("local factorization failed: {e}"),
    };

    let mut psi = vec![0.0; np];
    if !source.is_zero() {
        let load = assemble_load_on(mesh, source, &patch)?;
        let interior = patch.interior_local_nodes(mesh);
        if !interior.is_empty() {
            let kii = k.submatrix(&interior, &interior).with_symmetry_flag(true);
            let lu = SparseLu::factorize(&kii).map_err(subdomain_err)?;
            let rhs: Vec<f64> = interior.iter().map(|&l| load[l]).collect();
            for (&l, v) in interior.iter().zip(lu.solve(&rhs)) {
                psi[l] = v;
            }
        }
    }

    let psi_b = if s.boundary {
        let outer: Vec<usize> = (0..np).filter(|&l| mesh.is_boundary_node(patch.nodes[l])).collect();
        let mut b = vec![0.0; np];
        for &l in &outer {
            b[l] = dirichlet[patch.nodes[l]];
        }
        if outer.iter().any(|&l| b[l] != 0.0) {
            let free: Vec<usize> = (0..np).filter(|&l| !mesh.is_boundary_node(patch.nodes[l])).collect();
            let kff = k.submatrix(&free, &free).with_symmetry_flag(true);
            let kfo = k.submatrix(&free, &outer);
            let g: Vec<f64> = outer.iter().map(|&l| b[l]).collect();
            let rhs: Vec<f64> = kfo.mul_vec(&g).iter().map(|x| -x).collect();
            let lu = SparseLu::factorize(&kff).map_err(subdomain_err)?;
            for (&l, v) in free.iter().zip(lu.solve(&rhs)) {
                b[l] = v;
            }
        }
        Some(b)
    } else {
        None
    };
    Ok(LocalParticular {
        subdomain: i,
        star_nodes: patch.nodes,
        psi,
        psi_b,
    })
}

/// `M(v) = ∫ A ∇(w v)·∇w / ∫ A ∇w·∇w` for the weight `w = χ_i` or `χᴿ_i`,
/// realized as a weight vector on the nodes of `ω*_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFunctional {
    pub subdomain: usize,
    pub variant: Variant,
    pub nodes: Vec<usize>,
    pub weights: Vec<f64>,
    /// `∫ A ∇w·∇w`.
    pub normalization: f64,
}

impl MeanFunctional {
    /// Applies the functional to a vector given on `self.nodes`.
    pub fn apply(&self, v: &[f64]) -> f64 {
        dot(&self.weights, v)
    }

    /// Applies the functional to a global nodal vector.
    pub fn apply_global(&self, v: &[f64]) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&n, w)| w * v[n]).sum()
    }
}

pub fn mean_functional(
    mesh: &Mesh,
    coeff: &CoefficientField,
    decomposition: &Decomposition,
    i: usize,
    variant: Variant,
) -> Result<MeanFunctional> {
    let s = decomposition.subdomain(i);
    let patch = s.omega_star_patch(mesh);
    let w = match variant {
        Variant::Full => decomposition.chi_on(i, &patch.nodes),
        Variant::Ring => decomposition.chi_ring_on(i, &patch.nodes),
    };
    let k = assemble_stiffness_on(mesh, coeff, &patch)?;
    let kw = k.mul_vec(&w);
    let normalization = dot(&w, &kw);
    if !(normalization > 0.0) {
        return Err(Error::Subdomain {
            subdomain: i,
            message: "mean functional has zero denominator".into(),
        });
    }
    let weights = w.iter().zip(&kw).map(|(a, b)| a * b / normalization).collect();
    Ok(MeanFunctional {
        subdomain: i,
        variant,
        nodes: patch.nodes,
        weights,
        normalization,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{constant_field, skyscraper_field};
    use crate::decomposition::{build_decomposition, DecompositionParams};
    use crate::oracle::{dense_solve, dense_stiffness_quadrature, schur_harmonic_eigen};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(n: usize, p: usize, ell: usize) -> (Mesh, Decomposition) {
        let mesh = Mesh::unit(2, n).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![p, p], ell)).unwrap();
        (mesh, d)
    }

    fn compare_with_oracle(mesh: &Mesh, c: &CoefficientField, d: &Decomposition, i: usize, variant: Variant, n: usize) {
        let res = eigensolve(mesh, c, d, i, variant, n, &EigenOptions::default()).unwrap();
        let pencil = LocalPencil::new(mesh, c, d, i, res.variant).unwrap();
        let pos = |set: &[usize]| -> Vec<usize> { set.iter().map(|l| pencil.space.unknowns.binary_search(l).unwrap()).collect() };
        let (oracle, _) = schur_harmonic_eigen(&pencil.k_uu, &pencil.w_uu, &pos(&pencil.space.constrained), &pos(&pencil.space.free)).unwrap();
        let scale = oracle.iter().copied().find(|&l| l > 1e-8).unwrap_or(1.0);
        for (k, l) in res.eigenvalues.iter().enumerate() {
            let r = oracle[k];
            assert!((l - r).abs() <= 1e-8 * r.abs().max(scale), "{variant:?} k={k}: {l} vs {r}");
        }
    }

    #[test]
    fn matches_dense_oracle_constant_and_random() {
        let (mesh, d) = setup(12, 2, 1);
        let c = constant_field(&mesh, 1.0).unwrap();
        for i in 0..d.num_subdomains() {
            compare_with_oracle(&mesh, &c, &d, i, Variant::Full, 6);
            compare_with_oracle(&mesh, &c, &d, i, Variant::Ring, 6);
        }
        let (mesh, d) = setup(16, 2, 2);
        let c = skyscraper_field(&mesh, 11, 2, 1e6).unwrap();
        compare_with_oracle(&mesh, &c, &d, 0, Variant::Ring, 8);
        compare_with_oracle(&mesh, &c, &d, 3, Variant::Full, 8);
    }

    #[test]
    fn interior_constant_mode_and_scale_invariance() {
        let (mesh, d) = setup(36, 3, 2);
        let i = d.subdomain_at([1, 1, 0]);
        let c = skyscraper_field(&mesh, 4, 3, 1e3).unwrap();
        for variant in [Variant::Full, Variant::Ring] {
            let r = eigensolve(&mesh, &c, &d, i, variant, 5, &EigenOptions::default()).unwrap();
            assert_eq!(r.variant, variant);
            assert!(r.includes_constant);
            assert_eq!(r.eigenvalues[0], 0.0);
            let v = &r.eigenvectors[0];
            let m = v.iter().cloned().fold(0.0, f64::max);
            assert!(v.iter().all(|x| (x - m).abs() <= 1e-8 * m));
            assert!(r.extended[0].iter().all(|x| (x - m).abs() <= 1e-8 * m));
            assert!(r.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
            assert!(r.eigenvalues.iter().all(|&l| l >= -1e-10));
            let scaled = eigensolve(&mesh, &c.scaled(37.0).unwrap(), &d, i, variant, 5, &EigenOptions::default()).unwrap();
            for (a, b) in r.eigenvalues.iter().zip(&scaled.eigenvalues) {
                assert!((a - b).abs() <= 1e-8 * a.abs().max(1e-8));
            }
        }
    }

    #[test]
    fn weighted_orthonormality_and_residuals() {
        let (mesh, d) = setup(36, 3, 2);
        let c = skyscraper_field(&mesh, 9, 2, 1e4).unwrap();
        for i in [0, 4] {
            for variant in [Variant::Full, Variant::Ring] {
                let r = eigensolve(&mesh, &c, &d, i, variant, 6, &EigenOptions::default()).unwrap();
                let pencil = LocalPencil::new(&mesh, &c, &d, i, variant).unwrap();
                let wfull = pencil.k.scale_rows_cols(&pencil.weight, &pencil.weight);
                for (a, va) in r.eigenvectors.iter().enumerate() {
                    for (b, vb) in r.eigenvectors.iter().enumerate() {
                        let g = wfull.bilinear(va, vb);
                        assert!((g - if a == b { 1.0 } else { 0.0 }).abs() < 1e-8, "{a} {b} {g}");
                    }
                    // Harmonic: the stiffness residual vanishes at constrained nodes.
                    let kv = pencil.k.mul_vec(va);
                    let e = pencil.k.bilinear(va, va).sqrt().max(1e-300);
                    for &cn in &pencil.space.constrained {
                        assert!(kv[cn].abs() <= 1e-9 * e.max(1.0), "{} at {cn}, energy {e}", kv[cn]);
                    }
                }
            }
        }
    }

    #[test]
    fn degenerate_ring_falls_back() {
        let (mesh, d) = setup(8, 1, 1);
        let c = constant_field(&mesh, 1.0).unwrap();
        let r = eigensolve(&mesh, &c, &d, 0, Variant::Ring, 3, &EigenOptions::default());
        // Single subdomain: χ ≡ 1 has zero energy only when no Dirichlet data is
        // present; here the whole boundary is Dirichlet, so the full problem is posed.
        let r = r.unwrap();
        assert_eq!(r.variant, Variant::Full);
        assert!(!r.includes_constant);
    }

    #[test]
    fn full_and_ring_agree_when_ring_fills_the_domain() {
        // Bricks of 4 cells with overlap 2: the plateau is a single node line,
        // η vanishes, χᴿ = χ and R* = ω*.
        let mesh = Mesh::unit(2, 12).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![3, 3], 1)).unwrap();
        let i = d.subdomain_at([1, 1, 0]);
        assert!(d.subdomain(i).ring_degenerate);
        let c = skyscraper_field(&mesh, 2, 2, 1e2).unwrap();
        let full = eigensolve(&mesh, &c, &d, i, Variant::Full, 5, &EigenOptions::default()).unwrap();
        let ring = eigensolve(&mesh, &c, &d, i, Variant::Ring, 5, &EigenOptions::default()).unwrap();
        for (a, b) in full.eigenvalues.iter().zip(&ring.eigenvalues) {
            assert!((a - b).abs() <= 1e-10 * a.abs().max(1e-10));
        }
    }

    #[test]
    fn extension_matches_ring_outside_plateau() {
        let (mesh, d) = setup(32, 2, 2);
        let c = skyscraper_field(&mesh, 8, 4, 1e3).unwrap();
        let i = 1;
        let r = eigensolve_ring(&mesh, &c, &d, i, 4, &EigenOptions::default()).unwrap();
        let s = d.subdomain(i);
        for (v, ext) in r.eigenvectors.iter().zip(&r.extended) {
            for (l, &g) in r.domain_nodes.iter().enumerate() {
                let coords = mesh.node_coords(g);
                let inside = (0..2).all(|k| s.plateau.lo[k] < coords[k] && coords[k] < s.plateau.hi[k]);
                if !inside {
                    let k = r.star_nodes.binary_search(&g).unwrap();
                    assert_eq!(ext[k], v[l]);
                }
            }
        }
    }

    #[test]
    fn extension_of_constants_and_linears() {
        let (mesh, d) = setup(16, 2, 1);
        let i = 3;
        let plateau = d.subdomain(i).plateau_patch(&mesh);
        let c = constant_field(&mesh, 2.0).unwrap();
        let trace = vec![1.5; plateau.num_nodes()];
        assert!(harmonic_extend(&mesh, &c, &d, i, &trace).unwrap().iter().all(|v| (v - 1.5).abs() < 1e-12));
        let lin: Vec<f64> = plateau
            .nodes
            .iter()
            .map(|&g| {
                let x = mesh.node_position(g);
                2.0 * x[0] - x[1]
            })
            .collect();
        let mut t = lin.clone();
        for &l in &plateau.interior_local_nodes(&mesh) {
            t[l] = 0.0;
        }
        let e = harmonic_extend(&mesh, &c, &d, i, &t).unwrap();
        for (a, b) in e.iter().zip(&lin) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn extension_minimizes_energy() {
        let (mesh, d) = setup(32, 2, 1);
        let i = 0;
        let c = skyscraper_field(&mesh, 6, 2, 1e5).unwrap();
        let patch = d.subdomain(i).plateau_patch(&mesh);
        let k = assemble_stiffness_on(&mesh, &c, &patch).unwrap();
        let interior = patch.interior_local_nodes(&mesh);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..3 {
            let trace: Vec<f64> = (0..patch.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let e = harmonic_extend(&mesh, &c, &d, i, &trace).unwrap();
            let best = k.bilinear(&e, &e);
            for _ in 0..5 {
                let mut other = e.clone();
                for &l in &interior {
                    other[l] += rng.random_range(-0.1..0.1);
                }
                assert!(best <= k.bilinear(&other, &other));
            }
        }
    }

    #[test]
    fn particular_functions() {
        let (mesh, d) = setup(16, 2, 2);
        let c = skyscraper_field(&mesh, 3, 2, 1e3).unwrap();
        let g0 = vec![0.0; mesh.num_nodes()];
        let zero = solve_particular(&mesh, &c, &Source::Constant(0.0), &g0, &d, 3).unwrap();
        assert!(zero.psi.iter().all(|&v| v == 0.0));

        // Dense oracle for the zero-Dirichlet local solve.
        let p = solve_particular(&mesh, &c, &Source::Constant(1.0), &g0, &d, 3).unwrap();
        let patch = d.subdomain(3).omega_star_patch(&mesh);
        let k = assemble_stiffness_on(&mesh, &c, &patch).unwrap();
        let f = assemble_load_on(&mesh, &Source::Constant(1.0), &patch).unwrap();
        let interior = patch.interior_local_nodes(&mesh);
        let kd = k.submatrix(&interior, &interior).to_dense();
        let rhs: Vec<f64> = interior.iter().map(|&l| f[l]).collect();
        let x = dense_solve(&kd, &rhs).unwrap();
        let xn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        for (&l, v) in interior.iter().zip(&x) {
            assert!((p.psi[l] - v).abs() <= 1e-10 * xn);
        }

        // Boundary data: ψᵇ equals g on the outer boundary and is harmonic at the free nodes.
        let g: Vec<f64> = (0..mesh.num_nodes())
            .map(|n| if mesh.is_boundary_node(n) { mesh.node_position(n)[0] + 1.0 } else { 0.0 })
            .collect();
        let pb = solve_particular(&mesh, &c, &Source::Constant(0.0), &g, &d, 0).unwrap();
        let b = pb.psi_b.unwrap();
        let patch0 = d.subdomain(0).omega_star_patch(&mesh);
        let k0 = assemble_stiffness_on(&mesh, &c, &patch0).unwrap();
        let kb = k0.mul_vec(&b);
        for (l, &gn) in patch0.nodes.iter().enumerate() {
            if mesh.is_boundary_node(gn) {
                assert_eq!(b[l], g[gn]);
            } else {
                assert!(kb[l].abs() < 1e-9 * c.alpha_max());
            }
        }
    }

    #[test]
    fn single_subdomain_particular_is_global_solution() {
        let (mesh, d) = setup(10, 1, 1);
        let c = skyscraper_field(&mesh, 3, 2, 1e2).unwrap();
        let problem = crate::fem::FineProblem::homogeneous(mesh.clone(), c.clone(), Source::Constant(1.0)).unwrap();
        let uh = problem.solve_reference().unwrap();
        let p = solve_particular(&mesh, &c, &Source::Constant(1.0), &problem.dirichlet, &d, 0).unwrap();
        for (a, b) in p.combined().iter().zip(&uh) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_functional_properties() {
        let (mesh, d) = setup(8, 2, 1);
        let c = skyscraper_field(&mesh, 2, 2, 1e2).unwrap();
        let kq = dense_stiffness_quadrature(&mesh, &c);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for variant in [Variant::Full, Variant::Ring] {
            let m = mean_functional(&mesh, &c, &d, 3, variant).unwrap();
            let ones = vec![3.25; m.nodes.len()];
            assert!((m.apply(&ones) - 3.25).abs() < 1e-10);
            let v: Vec<f64> = (0..mesh.num_nodes()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let shifted: Vec<f64> = v.iter().map(|x| x - m.apply_global(&v) + 2.0).collect();
            assert!((m.apply_global(&shifted) - 2.0).abs() < 1e-10);
            let w: Vec<f64> = (0..mesh.num_nodes())
                .map(|n| match variant {
                    Variant::Full => d.chi(3, n),
                    Variant::Ring => d.chi_ring(3, n),
                })
                .collect();
            let wv: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a * b).collect();
            let wn = nalgebra::DVector::from_vec(w.clone());
            let num = (nalgebra::DVector::from_vec(wv).transpose() * &kq * &wn)[(0, 0)];
            let den = (wn.transpose() * &kq * &wn)[(0, 0)];
            assert!((m.apply_global(&v) - num / den).abs() < 1e-12 * (num / den).abs().max(1.0));
        }
    }

    #[test]
    fn identical_rings_identical_spectra() {
        // Vertical stripes are translation invariant in y.
        let mesh = Mesh::unit(2, 48).unwrap();
        let vals = (0..mesh.num_cells()).map(|c| if mesh.cell_coords(c)[0] % 7 == 3 { 1e4 } else { 1.0 }).collect();
        let c = CoefficientField::from_values(&mesh, vals).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![4, 4], 2)).unwrap();
        let a = eigensolve_ring(&mesh, &c, &d, d.subdomain_at([1, 1, 0]), 6, &EigenOptions::default()).unwrap();
        let b = eigensolve_ring(&mesh, &c, &d, d.subdomain_at([1, 2, 0]), 6, &EigenOptions::default()).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).abs() <= 1e-10 * x.abs().max(1e-10));
        }
    }

    #[test]
    fn extended_space_meets_the_local_bound() {
        let (mesh, d) = setup(32, 4, 2);
        let c = skyscraper_field(&mesh, 5, 4, 1e4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for i in [0, 5] {
            let s = d.subdomain(i);
            let star = s.omega_star_patch(&mesh);
            let extender = HarmonicExtender::new(&mesh, &c, &star).unwrap();
            let ring = s.ring_star_patch(&mesh);
            let k_ring = assemble_stiffness_on(&mesh, &c, &ring).unwrap();
            let res = eigensolve(&mesh, &c, &d, i, Variant::Ring, 7, &EigenOptions::default()).unwrap();
            let approx = LocalApproximation::new(&mesh, &c, &d, &res).unwrap();
            for _ in 0..5 {
                let mut u: Vec<f64> = star
                    .nodes
                    .iter()
                    .map(|&g| if mesh.is_boundary_node(g) { 0.0 } else { rng.random_range(-1.0..1.0) })
                    .collect();
                extender.extend_in_place(&mut u);
                let on_ring: Vec<f64> = ring.nodes.iter().map(|g| u[star.local(*g).unwrap()]).collect();
                let norm = dot(&on_ring, &k_ring.mul_vec(&on_ring)).sqrt();
                for n in 1..=6 {
                    let err = approx.error(&u, n).unwrap();
                    let bound = res.coarse_width(n).unwrap() * norm;
                    assert!(err <= bound + 1e-8 * norm, "i = {i}, n = {n}: {err} > {bound}");
                }
            }
        }
    }
}
