//! Q1 finite elements on Cartesian meshes: element matrices, sparse assembly on
//! the whole mesh or on cell subsets, Dirichlet elimination and energy norms.

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::factor::{LuOptions, SparseLu};
use crate::mesh::{DofMap, Mesh};
use crate::sparse::CsrMatrix;

/// Unit-coefficient element stiffness and mass matrices of a mesh cell.
///
/// Both are tensor products of the 1D matrices `S = [[1,-1],[-1,1]]/h` and
/// `M = [[2,1],[1,2]] h/6`; the stiffness sums `S` on one axis times `M` on the others.
#[derive(Debug, Clone, PartialEq)]
pub struct ElementMatrices {
    pub corners: usize,
    pub stiffness: [[f64; 8]; 8],
    pub mass: [[f64; 8]; 8],
}

impl ElementMatrices {
    pub fn new(mesh: &Mesh) -> Self {
        let dim = mesh.dim();
        let h = mesh.h();
        let corners = 1 << dim;
        let s1 = |k: usize, a: usize, b: usize| if a == b { 1.0 / h[k] } else { -1.0 / h[k] };
        let m1 = |k: usize, a: usize, b: usize| if a == b { h[k] / 3.0 } else { h[k] / 6.0 };
        let mut stiffness = [[0.0; 8]; 8];
        let mut mass = [[0.0; 8]; 8];
        for a in 0..corners {
            for b in 0..corners {
                let bit = |k: usize, x: usize| (x >> k) & 1;
                mass[a][b] = (0..dim).map(|k| m1(k, bit(k, a), bit(k, b))).product();
                stiffness[a][b] = (0..dim)
                    .map(|k| {
                        (0..dim)
                            .map(|m| {
                                if m == k {
                                    s1(m, bit(m, a), bit(m, b))
                                } else {
                                    m1(m, bit(m, a), bit(m, b))
                                }
                            })
                            .product::<f64>()
                    })
                    .sum();
            }
        }
        Self {
            corners,
            stiffness,
            mass,
        }
    }
}

/// Right-hand side data `f`.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Constant(f64),
    /// One value per mesh cell.
    Cellwise(Vec<f64>),
    /// One value per mesh node, integrated as its Q1 interpolant.
    Nodal(Vec<f64>),
}

impl Source {
    fn validate(&self, mesh: &Mesh) -> Result<()> {
        match self {
            Source::Constant(_) => Ok(()),
            Source::Cellwise(v) if v.len() == mesh.num_cells() => Ok(()),
            Source::Nodal(v) if v.len() == mesh.num_nodes() => Ok(()),
            Source::Cellwise(v) | Source::Nodal(v) => Err(Error::DimensionMismatch(format!(
                "source has {} values for a mesh with {} cells and {} nodes",
                v.len(),
                mesh.num_cells(),
                mesh.num_nodes()
            ))),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Source::Constant(c) => *c == 0.0,
            Source::Cellwise(v) | Source::Nodal(v) => v.iter().all(|&x| x == 0.0),
        }
    }
}

/// A cell subset of the mesh together with the sorted global ids of its nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct CellPatch {
    pub cells: Vec<usize>,
    pub nodes: Vec<usize>,
}

impl CellPatch {
    /// `cells` must be sorted and duplicate free.
    pub fn new(mesh: &Mesh, cells: Vec<usize>) -> Self {
        debug_assert!(cells.windows(2).all(|w| w[0] < w[1]));
        let mut nodes: Vec<usize> = cells
            .iter()
            .flat_map(|&c| {
                let cn = mesh.cell_nodes(c);
                cn.into_iter().take(mesh.corners_per_cell())
            })
            .collect();
        nodes.sort_unstable();
        nodes.dedup();
        Self { cells, nodes }
    }

    pub fn whole(mesh: &Mesh) -> Self {
        Self {
            cells: (0..mesh.num_cells()).collect(),
            nodes: (0..mesh.num_nodes()).collect(),
        }
    }

    pub fn contains_cell(&self, cell: usize) -> bool {
        self.cells.binary_search(&cell).is_ok()
    }

    pub fn local(&self, node: usize) -> Option<usize> {
        self.nodes.binary_search(&node).ok()
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Nodes all of whose surrounding mesh cells lie in the patch and which are
    /// not on the outer boundary. Returned as local indices.
    pub fn interior_local_nodes(&self, mesh: &Mesh) -> Vec<usize> {
        let full = 1 << mesh.dim();
        self.nodes
            .iter()
            .enumerate()
            .filter(|&(_, &g)| {
                !mesh.is_boundary_node(g) && {
                    let mut count = 0;
                    for c in mesh.node_cells(g) {
                        if !self.contains_cell(c) {
                            return false;
                        }
                        count += 1;
                    }
                    count == full
                }
            })
            .map(|(l, _)| l)
            .collect()
    }

    /// Gathers a global nodal vector onto the patch nodes.
    pub fn gather(&self, global: &[f64]) -> Vec<f64> {
        self.nodes.iter().map(|&n| global[n]).collect()
    }

    /// Adds `alpha * local` into the global nodal vector.
    pub fn scatter_add(&self, local: &[f64], alpha: f64, global: &mut [f64]) {
        for (l, &n) in self.nodes.iter().enumerate() {
            global[n] += alpha * local[l];
        }
    }
}

/// Stiffness of `a(u, v) = ∫ A ∇u·∇v` over the patch cells, in patch-local node
/// numbering, without boundary conditions.
pub fn assemble_stiffness_on(mesh: &Mesh, coeff: &CoefficientField, patch: &CellPatch) -> Result<CsrMatrix> {
    if !coeff.matches(mesh) {
        return Err(Error::DimensionMismatch("coefficient grid does not match the mesh".into()));
    }
    let el = ElementMatrices::new(mesh);
    let whole = patch.cells.len() == mesh.num_cells();
    let n = patch.nodes.len();
    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::with_capacity(n * if mesh.dim() == 2 { 9 } else { 27 });
    let mut values = Vec::with_capacity(indices.capacity());
    indptr.push(0);
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(27);
    for &node in &patch.nodes {
        row.clear();
        let nc = mesh.node_coords(node);
        for cell in mesh.node_cells(node) {
            if !whole && !patch.contains_cell(cell) {
                continue;
            }
            let cc = mesh.cell_coords(cell);
            let a = (0..mesh.dim()).fold(0, |acc, k| acc | ((nc[k] - cc[k]) << k));
            let w = coeff.value(cell);
            let corners = mesh.cell_nodes(cell);
            for b in 0..el.corners {
                let g = corners[b];
                let v = w * el.stiffness[a][b];
                match row.iter_mut().find(|e| e.0 == g) {
                    Some(e) => e.1 += v,
                    None => row.push((g, v)),
                }
            }
        }
        row.sort_unstable_by_key(|e| e.0);
        for &(g, v) in &row {
            let l = if whole { g } else { patch.local(g).expect("neighbor node inside patch") };
            indices.push(l);
            values.push(v);
        }
        indptr.push(indices.len());
    }
    Ok(CsrMatrix::from_raw(n, n, indptr, indices, values)?.with_symmetry_flag(true))
}

/// Global stiffness on all mesh nodes (no boundary conditions applied).
pub fn assemble_stiffness(mesh: &Mesh, coeff: &CoefficientField) -> Result<CsrMatrix> {
    assemble_stiffness_on(mesh, coeff, &CellPatch::whole(mesh))
}

/// Consistent load `F(v) = ∫ f v` over the patch cells in patch-local numbering.
pub fn assemble_load_on(mesh: &Mesh, source: &Source, patch: &CellPatch) -> Result<Vec<f64>> {
    source.validate(mesh)?;
    let el = ElementMatrices::new(mesh);
    let corner_share = mesh.cell_volume() / el.corners as f64;
    let mut out = vec![0.0; patch.nodes.len()];
    if source.is_zero() {
        return Ok(out);
    }
    let whole = patch.cells.len() == mesh.num_cells();
    for &cell in &patch.cells {
        let corners = mesh.cell_nodes(cell);
        for a in 0..el.corners {
            let v = match source {
                Source::Constant(c) => c * corner_share,
                Source::Cellwise(f) => f[cell] * corner_share,
                Source::Nodal(f) => (0..el.corners).map(|b| el.mass[a][b] * f[corners[b]]).sum(),
            };
            let l = if whole { corners[a] } else { patch.local(corners[a]).expect("cell node inside patch") };
            out[l] += v;
        }
    }
    Ok(out)
}

pub fn assemble_load(mesh: &Mesh, source: &Source) -> Result<Vec<f64>> {
    assemble_load_on(mesh, source, &CellPatch::whole(mesh))
}

/// Nodal vector holding `g(x)` at boundary nodes and 0 inside.
pub fn boundary_values(mesh: &Mesh, g: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    (0..mesh.num_nodes())
        .map(|n| {
            if mesh.is_boundary_node(n) {
                g(&mesh.node_position(n)[..mesh.dim()])
            } else {
                0.0
            }
        })
        .collect()
}

/// Eliminates Dirichlet data: returns the interior block `K0`, the reduced load
/// `f0 = F_I - K_IB g_B` and the lift (g on the boundary, 0 inside).
pub fn apply_dirichlet(k: &CsrMatrix, load: &[f64], dofmap: &DofMap, g: &[f64]) -> (CsrMatrix, Vec<f64>, Vec<f64>) {
    let interior = dofmap.interior_nodes();
    let k0 = k.submatrix(interior, interior).with_symmetry_flag(true);
    let mut lift = vec![0.0; dofmap.num_nodes()];
    for &b in dofmap.boundary_nodes() {
        lift[b] = g[b];
    }
    let f0 = interior
        .iter()
        .map(|&node| {
            let coupling: f64 = k.row(node).filter(|&(j, _)| dofmap.dof(j).is_none()).map(|(j, v)| v * lift[j]).sum();
            load[node] - coupling
        })
        .collect();
    (k0, f0, lift)
}

/// `sqrt(vᵀ K v)`, failing when the quadratic form is clearly negative.
///
/// The form is evaluated as `Σ_i v_i Σ_j K_ij (v_j - v_i) + Σ_i r_i v_i²` with row
/// sums `r_i`; row sums at rounding level are treated as exact zeros so that
/// constants have zero Neumann energy without a `sqrt(eps)` floor.
pub fn energy_norm(k: &CsrMatrix, v: &[f64]) -> Result<f64> {
    let mut q = 0.0;
    for (i, &vi) in v.iter().enumerate() {
        let (mut diff, mut rsum, mut rabs) = (0.0, 0.0, 0.0);
        for (j, kij) in k.row(i) {
            diff += kij * (v[j] - vi);
            rsum += kij;
            rabs += kij.abs();
        }
        if rsum.abs() <= 64.0 * f64::EPSILON * rabs {
            rsum = 0.0;
        }
        q += vi * diff + rsum * vi * vi;
    }
    let scale: f64 = v.iter().map(|x| x * x).sum();
    if q < -1e-12 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite { value: q });
    }
    Ok(q.max(0.0).sqrt())
}

/// A fully assembled fine-scale problem `-div(A grad u) = f`, `u = g` on the boundary.
#[derive(Debug, Clone)]
pub struct FineProblem {
    pub mesh: Mesh,
    pub dofmap: DofMap,
    pub coefficient: CoefficientField,
    pub source: Source,
    /// Neumann stiffness on all nodes.
    pub k: CsrMatrix,
    /// Interior-interior block of `k`.
    pub k0: CsrMatrix,
    /// Load on all nodes.
    pub load: Vec<f64>,
    /// Nodal Dirichlet data; only boundary entries are meaningful.
    pub dirichlet: Vec<f64>,
    pub f0: Vec<f64>,
    pub lift: Vec<f64>,
}

impl FineProblem {
    pub fn new(mesh: Mesh, coefficient: CoefficientField, source: Source, dirichlet: Vec<f64>) -> Result<Self> {
        if dirichlet.len() != mesh.num_nodes() {
            return Err(Error::DimensionMismatch(format!(
                "Dirichlet data has {} entries, mesh has {} nodes",
                dirichlet.len(),
                mesh.num_nodes()
            )));
        }
        let dofmap = DofMap::new(&mesh);
        let k = assemble_stiffness(&mesh, &coefficient)?;
        let load = assemble_load(&mesh, &source)?;
        let (k0, f0, lift) = apply_dirichlet(&k, &load, &dofmap, &dirichlet);
        Ok(Self {
            mesh,
            dofmap,
            coefficient,
            source,
            k,
            k0,
            load,
            dirichlet,
            f0,
            lift,
        })
    }

    pub fn homogeneous(mesh: Mesh, coefficient: CoefficientField, source: Source) -> Result<Self> {
        let g = vec![0.0; mesh.num_nodes()];
        Self::new(mesh, coefficient, source, g)
    }

    pub fn num_dofs(&self) -> usize {
        self.dofmap.num_dofs()
    }

    /// Direct fine-scale solution `u_h` as a nodal vector.
    pub fn solve_reference(&self) -> Result<Vec<f64>> {
        let lu = SparseLu::factorize_with(&self.k0, LuOptions::default())?;
        let u0 = lu.solve(&self.f0);
        Ok(self.dofmap.prolong(&u0, &self.lift))
    }

    pub fn energy_norm(&self, nodal: &[f64]) -> Result<f64> {
        energy_norm(&self.k, nodal)
    }

    /// `‖u_h - u‖_a / ‖u_h‖_a` for nodal vectors.
    pub fn relative_energy_error(&self, reference: &[f64], approx: &[f64]) -> Result<f64> {
        let denom = self.energy_norm(reference)?;
        if denom == 0.0 {
            return Err(Error::ZeroReference);
        }
        let diff: Vec<f64> = reference.iter().zip(approx).map(|(a, b)| a - b).collect();
        Ok(self.energy_norm(&diff)? / denom)
    }
}
