//! Brick decompositions with overlap, oversampling domains, rings and the
//! partition of unity.
//!
//! Everything is built per axis and combined by tensor products. Along one axis
//! a subdomain owns the brick `[j b, (j+1) b)` of cells; `ω` adds `overlap`
//! layers on each side, `ω*` another `oversampling` layers, always clipped to
//! the domain. The 1D partition of unity weight of `ω` is the distance to the
//! nearest endpoint of `ω` that is not on the outer boundary, normalized over
//! all subdomains, so it ramps linearly across the `2 * overlap` overlap cells.
//! `χ` equals 1 on the plateau box; `η` is 1 on the plateau shrunk by one node on
//! every interior side and falls to 0 on the plateau boundary, which gives the
//! one-layer ramp. `χᴿ = χ - η` lives on the ring `R` around the plateau.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::CellPatch;
use crate::mesh::Mesh;

/// Axis-aligned box of cells `[lo, hi)` per axis; its nodes are `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub lo: [usize; 3],
    pub hi: [usize; 3],
}

impl CellBox {
    pub fn is_empty(&self) -> bool {
        (0..3).any(|k| self.hi[k] <= self.lo[k])
    }

    pub fn num_cells(&self) -> usize {
        if self.is_empty() {
            0
        } else {
            (0..3).map(|k| self.hi[k] - self.lo[k]).product()
        }
    }

    pub fn contains_cell(&self, c: [usize; 3]) -> bool {
        (0..3).all(|k| self.lo[k] <= c[k] && c[k] < self.hi[k])
    }

    pub fn contains_node(&self, c: [usize; 3], dim: usize) -> bool {
        !self.is_empty() && (0..dim).all(|k| self.lo[k] <= c[k] && c[k] <= self.hi[k])
    }

    /// Sorted global cell ids.
    pub fn cells(&self, mesh: &Mesh) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.num_cells());
        if self.is_empty() {
            return out;
        }
        for z in self.lo[2]..self.hi[2] {
            for y in self.lo[1]..self.hi[1] {
                for x in self.lo[0]..self.hi[0] {
                    out.push(mesh.cell_index([x, y, z]));
                }
            }
        }
        out
    }

    /// Sorted global node ids.
    pub fn nodes(&self, mesh: &Mesh) -> Vec<usize> {
        let mut out = Vec::new();
        if self.is_empty() {
            return out;
        }
        let dim = mesh.dim();
        let top = |k: usize| if k < dim { self.hi[k] } else { 0 };
        for z in self.lo[2]..=top(2) {
            for y in self.lo[1]..=top(1) {
                for x in self.lo[0]..=top(0) {
                    out.push(mesh.node_index([x, y, z]));
                }
            }
        }
        out
    }
}

/// Geometric parameters of the decomposition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionParams {
    pub subdomains_per_axis: Vec<usize>,
    /// Fine layers added to each brick to form `ω`.
    pub overlap_layers: usize,
    /// Fine layers added to `ω` (and to the ring) for oversampling.
    pub oversampling_layers: usize,
}

impl DecompositionParams {
    pub fn new(subdomains_per_axis: Vec<usize>, oversampling_layers: usize) -> Self {
        Self {
            subdomains_per_axis,
            overlap_layers: 2,
            oversampling_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subdomain {
    pub id: usize,
    /// Position in the subdomain grid.
    pub grid: [usize; 3],
    pub brick: CellBox,
    pub omega: CellBox,
    pub omega_star: CellBox,
    /// `ω̃`: cells on which `χ = 1`.
    pub plateau: CellBox,
    /// `R`: cells of `ω` touching a node where `χᴿ > 0`.
    pub ring: Vec<usize>,
    /// `R*`: `R` dilated by the oversampling layers.
    pub ring_star: Vec<usize>,
    /// `interior_sides[k][s]`: side `s` (0 low, 1 high) along axis `k` is inside the domain.
    pub interior_sides: [[bool; 2]; 3],
    /// `ω*` touches the outer boundary.
    pub boundary: bool,
    /// Physical overlap width; infinite when no side is interior.
    pub delta: f64,
    /// Diameter of `ω*`.
    pub diameter_star: f64,
    /// The ring problem coincides with (or cannot be posed apart from) the full one.
    pub ring_degenerate: bool,
}

impl Subdomain {
    pub fn omega_cells(&self, mesh: &Mesh) -> Vec<usize> {
        self.omega.cells(mesh)
    }

    pub fn omega_star_cells(&self, mesh: &Mesh) -> Vec<usize> {
        self.omega_star.cells(mesh)
    }

    pub fn plateau_cells(&self, mesh: &Mesh) -> Vec<usize> {
        self.plateau.cells(mesh)
    }

    pub fn omega_star_patch(&self, mesh: &Mesh) -> CellPatch {
        CellPatch {
            cells: self.omega_star.cells(mesh),
            nodes: self.omega_star.nodes(mesh),
        }
    }

    pub fn ring_star_patch(&self, mesh: &Mesh) -> CellPatch {
        CellPatch::new(mesh, self.ring_star.clone())
    }

    pub fn plateau_patch(&self, mesh: &Mesh) -> CellPatch {
        CellPatch {
            cells: self.plateau.cells(mesh),
            nodes: self.plateau.nodes(mesh),
        }
    }
}

/// One-dimensional partition of unity tables, one vector per subdomain index
/// along the axis, each indexed by node coordinate.
#[derive(Debug, Clone, PartialEq)]
struct AxisWeights {
    chi: Vec<Vec<f64>>,
    eta: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct Decomposition {
    mesh: Mesh,
    params: DecompositionParams,
    grid: [usize; 3],
    subdomains: Vec<Subdomain>,
    kappa: usize,
    kappa_star: usize,
    axes: Vec<AxisWeights>,
}

impl Decomposition {
    pub fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    pub fn params(&self) -> &DecompositionParams {
        &self.params
    }

    pub fn num_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn grid(&self) -> [usize; 3] {
        self.grid
    }

    pub fn subdomains(&self) -> &[Subdomain] {
        &self.subdomains
    }

    pub fn subdomain(&self, i: usize) -> &Subdomain {
        &self.subdomains[i]
    }

    pub fn subdomain_at(&self, grid: [usize; 3]) -> usize {
        grid[0] + self.grid[0] * (grid[1] + self.grid[1] * grid[2])
    }

    /// Maximal number of `ω_i` sharing a cell.
    pub fn kappa(&self) -> usize {
        self.kappa
    }

    /// Maximal number of `ω*_i` sharing a cell.
    pub fn kappa_star(&self) -> usize {
        self.kappa_star
    }

    pub fn oversampling_layers(&self) -> usize {
        self.params.oversampling_layers
    }

    fn weight(&self, i: usize, node: usize, table: impl Fn(&AxisWeights) -> &Vec<Vec<f64>>) -> f64 {
        let c = self.mesh.node_coords(node);
        let g = self.subdomains[i].grid;
        (0..self.mesh.dim()).map(|k| table(&self.axes[k])[g[k]][c[k]]).product()
    }

    /// `χ_i` at a mesh node.
    pub fn chi(&self, i: usize, node: usize) -> f64 {
        self.weight(i, node, |a| &a.chi)
    }

    /// `η_i` at a mesh node.
    pub fn eta(&self, i: usize, node: usize) -> f64 {
        self.weight(i, node, |a| &a.eta)
    }

    /// `χᴿ_i = χ_i - η_i`, with rounding-level negatives truncated to 0.
    pub fn chi_ring(&self, i: usize, node: usize) -> f64 {
        let v = (self.chi(i, node) - self.eta(i, node)).clamp(-1e-14, 1.0);
        if v < 0.0 {
            0.0
        } else {
            v
        }
    }

    pub fn chi_on(&self, i: usize, nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&n| self.chi(i, n)).collect()
    }

    pub fn chi_ring_on(&self, i: usize, nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&n| self.chi_ring(i, n)).collect()
    }

    pub fn eta_on(&self, i: usize, nodes: &[usize]) -> Vec<f64> {
        nodes.iter().map(|&n| self.eta(i, n)).collect()
    }

    /// Per-subdomain summary rows for the JSON dump.
    pub fn summary(&self) -> Vec<SubdomainSummary> {
        self.subdomains
            .iter()
            .map(|s| SubdomainSummary {
                id: s.id,
                omega_cells: s.omega.num_cells(),
                omega_star_cells: s.omega_star.num_cells(),
                ring_cells: s.ring.len(),
                ring_star_cells: s.ring_star.len(),
                delta: if s.delta.is_finite() { Some(s.delta) } else { None },
                boundary: s.boundary,
                ring_degenerate: s.ring_degenerate,
                kappa: self.kappa,
                kappa_star: self.kappa_star,
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubdomainSummary {
    pub id: usize,
    pub omega_cells: usize,
    pub omega_star_cells: usize,
    pub ring_cells: usize,
    pub ring_star_cells: usize,
    pub delta: Option<f64>,
    pub boundary: bool,
    pub ring_degenerate: bool,
    pub kappa: usize,
    pub kappa_star: usize,
}

/// Per-axis layout of one subdomain index.
#[derive(Debug, Clone, Copy)]
struct AxisLayout {
    brick: (usize, usize),
    omega: (usize, usize),
    star: (usize, usize),
    interior: [bool; 2],
    /// Node range on which the 1D `χ` equals one.
    plateau: (usize, usize),
}

fn axis_layout(n: usize, p: usize, j: usize, o: usize, ell: usize) -> AxisLayout {
    let b = n / p;
    let brick = (j * b, (j + 1) * b);
    let omega = (brick.0.saturating_sub(o), (brick.1 + o).min(n));
    let star = (omega.0.saturating_sub(ell), (omega.1 + ell).min(n));
    let interior = [omega.0 > 0, omega.1 < n];
    let plateau = (
        if interior[0] { omega.0 + 2 * o } else { 0 },
        if interior[1] { omega.1 - 2 * o } else { n },
    );
    AxisLayout {
        brick,
        omega,
        star,
        interior,
        plateau,
    }
}

fn axis_weights(n: usize, p: usize, layouts: &[AxisLayout]) -> Result<AxisWeights> {
    let raw: Vec<Vec<f64>> = layouts
        .iter()
        .map(|l| {
            (0..=n)
                .map(|x| {
                    if x < l.omega.0 || x > l.omega.1 {
                        return 0.0;
                    }
                    let mut d = f64::INFINITY;
                    if l.interior[0] {
                        d = d.min((x - l.omega.0) as f64);
                    }
                    if l.interior[1] {
                        d = d.min((l.omega.1 - x) as f64);
                    }
                    if d.is_infinite() {
                        1.0
                    } else {
                        d
                    }
                })
                .collect()
        })
        .collect();
    let mut chi = raw.clone();
    for x in 0..=n {
        let total: f64 = raw.iter().map(|r| r[x]).sum();
        if !(total > 0.0) {
            return Err(Error::PartitionOfUnity { node: x });
        }
        for c in chi.iter_mut() {
            c[x] /= total;
        }
    }
    debug_assert_eq!(chi.len(), p);
    let eta = layouts
        .iter()
        .map(|l| {
            let lo = if l.interior[0] { l.plateau.0 + 1 } else { 0 };
            let hi = if l.interior[1] { l.plateau.1.saturating_sub(1) } else { n };
            (0..=n).map(|x| if lo <= hi && x >= lo && x <= hi { 1.0 } else { 0.0 }).collect()
        })
        .collect();
    Ok(AxisWeights { chi, eta })
}

/// Builds subdomains, oversampling domains, rings and the 1D weight tables.
pub fn build_decomposition(mesh: &Mesh, params: &DecompositionParams) -> Result<Decomposition> {
    let dim = mesh.dim();
    let cells = mesh.cells_per_axis();
    if params.subdomains_per_axis.len() != dim {
        return Err(Error::InvalidDecomposition(format!(
            "expected {dim} subdomain counts, got {}",
            params.subdomains_per_axis.len()
        )));
    }
    let o = params.overlap_layers;
    let ell = params.oversampling_layers;
    if o == 0 {
        return Err(Error::InvalidDecomposition("overlap must be at least one layer, otherwise the ring is empty".into()));
    }
    let mut grid = [1usize; 3];
    for k in 0..dim {
        let p = params.subdomains_per_axis[k];
        if p == 0 || cells[k] % p != 0 {
            return Err(Error::InvalidDecomposition(format!(
                "{p} subdomains do not divide {} cells along axis {k}",
                cells[k]
            )));
        }
        if p > 1 && 2 * o > cells[k] / p {
            return Err(Error::InvalidDecomposition(format!(
                "overlap of {o} layers exceeds half the brick width {} along axis {k}",
                cells[k] / p
            )));
        }
        grid[k] = p;
    }

    let layouts: Vec<Vec<AxisLayout>> = (0..dim)
        .map(|k| (0..grid[k]).map(|j| axis_layout(cells[k], grid[k], j, o, ell)).collect())
        .collect();
    let axes: Vec<AxisWeights> = (0..dim)
        .map(|k| axis_weights(cells[k], grid[k], &layouts[k]))
        .collect::<Result<_>>()?;

    let to_box = |g: [usize; 3], pick: &dyn Fn(&AxisLayout) -> (usize, usize)| {
        let mut b = CellBox {
            lo: [0; 3],
            hi: [1; 3],
        };
        for k in 0..dim {
            let (lo, hi) = pick(&layouts[k][g[k]]);
            b.lo[k] = lo;
            b.hi[k] = hi;
        }
        b
    };

    let h = mesh.h();
    let m: usize = grid.iter().product();
    let mut decomposition = Decomposition {
        mesh: mesh.clone(),
        params: params.clone(),
        grid,
        subdomains: Vec::with_capacity(m),
        kappa: 0,
        kappa_star: 0,
        axes,
    };

    for id in 0..m {
        let g = [id % grid[0], (id / grid[0]) % grid[1], id / (grid[0] * grid[1])];
        let brick = to_box(g, &|l| l.brick);
        let omega = to_box(g, &|l| l.omega);
        let omega_star = to_box(g, &|l| l.star);
        let plateau = to_box(g, &|l| l.plateau);
        let mut interior_sides = [[false; 2]; 3];
        let mut boundary = false;
        let mut delta = f64::INFINITY;
        let mut diameter = 0.0;
        for k in 0..dim {
            let l = &layouts[k][g[k]];
            interior_sides[k] = l.interior;
            if l.interior[0] || l.interior[1] {
                delta = delta.min(2.0 * o as f64 * h[k]);
            }
            boundary |= l.star.0 == 0 || l.star.1 == cells[k];
            diameter += ((l.star.1 - l.star.0) as f64 * h[k]).powi(2);
        }
        decomposition.subdomains.push(Subdomain {
            id,
            grid: g,
            brick,
            omega,
            omega_star,
            plateau,
            ring: Vec::new(),
            ring_star: Vec::new(),
            interior_sides,
            boundary,
            delta,
            diameter_star: diameter.sqrt(),
            ring_degenerate: false,
        });
    }

    for id in 0..m {
        let (ring, ring_star) = ring_cells(&decomposition, id);
        let s = &decomposition.subdomains[id];
        let degenerate = ring.is_empty() || ring_star.len() == s.omega_star.num_cells();
        let s = &mut decomposition.subdomains[id];
        s.ring = ring;
        s.ring_star = ring_star;
        s.ring_degenerate = degenerate;
    }

    let count = |pick: &dyn Fn(&AxisLayout) -> (usize, usize)| -> usize {
        (0..dim)
            .map(|k| {
                (0..cells[k])
                    .map(|x| layouts[k].iter().filter(|l| (pick(l).0..pick(l).1).contains(&x)).count())
                    .max()
                    .unwrap_or(0)
            })
            .product()
    };
    decomposition.kappa = count(&|l| l.omega);
    decomposition.kappa_star = count(&|l| l.star);
    Ok(decomposition)
}

/// `R_i` (cells of `ω_i` with a corner where `χᴿ_i > 0`) and `R*_i` (its L∞
/// dilation by the oversampling layers, clipped to the domain).
pub fn ring_cells(decomposition: &Decomposition, i: usize) -> (Vec<usize>, Vec<usize>) {
    let mesh = &decomposition.mesh;
    let s = &decomposition.subdomains[i];
    let dim = mesh.dim();
    let star = s.omega_star;
    let ext: Vec<usize> = (0..3).map(|k| star.hi[k] - star.lo[k]).collect();
    let local = |c: [usize; 3]| (c[0] - star.lo[0]) + ext[0] * ((c[1] - star.lo[1]) + ext[1] * (c[2] - star.lo[2]));
    let mut mark = vec![false; star.num_cells()];
    let mut ring = Vec::new();
    for cell in s.omega.cells(mesh) {
        let nodes = mesh.cell_nodes(cell);
        if nodes[..mesh.corners_per_cell()].iter().any(|&n| decomposition.chi_ring(i, n) > 0.0) {
            ring.push(cell);
            mark[local(mesh.cell_coords(cell))] = true;
        }
    }
    let ell = decomposition.params.oversampling_layers;
    for k in 0..dim {
        let stride: usize = ext[..k].iter().product();
        let mut next = mark.clone();
        for (idx, flag) in next.iter_mut().enumerate() {
            if *flag {
                continue;
            }
            let x = (idx / stride) % ext[k];
            let lo = x.saturating_sub(ell);
            let hi = (x + ell).min(ext[k] - 1);
            *flag = (lo..=hi).any(|y| mark[idx - x * stride + y * stride]);
        }
        mark = next;
    }
    let ring_star = star
        .cells(mesh)
        .into_iter()
        .filter(|&c| mark[local(mesh.cell_coords(c))])
        .collect();
    (ring, ring_star)
}

/// Nodal partition of unity data of one subdomain, stored on the nodes of `ω*`.
/// Values outside `ω*` are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalWeights {
    pub nodes: Vec<usize>,
    pub chi: Vec<f64>,
    pub eta: Vec<f64>,
    pub chi_ring: Vec<f64>,
    /// `max |∇ I_h χ| δ`.
    pub c_chi: f64,
    /// `max |∇ I_h χᴿ| δ`.
    pub c_chi_ring: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PartitionOfUnity {
    pub weights: Vec<LocalWeights>,
}

impl PartitionOfUnity {
    /// `χ_i` expanded to a full nodal vector.
    pub fn chi_global(&self, i: usize, num_nodes: usize) -> Vec<f64> {
        let w = &self.weights[i];
        let mut out = vec![0.0; num_nodes];
        for (&n, &v) in w.nodes.iter().zip(&w.chi) {
            out[n] = v;
        }
        out
    }

    pub fn chi_ring_global(&self, i: usize, num_nodes: usize) -> Vec<f64> {
        let w = &self.weights[i];
        let mut out = vec![0.0; num_nodes];
        for (&n, &v) in w.nodes.iter().zip(&w.chi_ring) {
            out[n] = v;
        }
        out
    }
}

/// Maximal Euclidean gradient of the Q1 interpolant of `f` over the given
/// cells, evaluated at the cell corners.
pub fn max_interpolant_gradient(mesh: &Mesh, cells: &[usize], f: impl Fn(usize) -> f64) -> f64 {
    let dim = mesh.dim();
    let h = mesh.h();
    let corners = mesh.corners_per_cell();
    let mut best = 0.0f64;
    for &cell in cells {
        let nodes = mesh.cell_nodes(cell);
        let vals: Vec<f64> = nodes[..corners].iter().map(|&n| f(n)).collect();
        for a in 0..corners {
            let g2: f64 = (0..dim)
                .map(|k| {
                    let hi = a | (1 << k);
                    let lo = a & !(1 << k);
                    ((vals[hi] - vals[lo]) / h[k]).powi(2)
                })
                .sum();
            best = best.max(g2.sqrt());
        }
    }
    best
}

/// Materializes `χ_i`, `η_i`, `χᴿ_i` on every `ω*_i` together with the gradient certificates.
pub fn build_partition_of_unity(decomposition: &Decomposition) -> PartitionOfUnity {
    let mesh = decomposition.mesh();
    let weights = decomposition
        .subdomains()
        .iter()
        .map(|s| {
            let nodes = s.omega_star.nodes(mesh);
            let chi = decomposition.chi_on(s.id, &nodes);
            let eta = decomposition.eta_on(s.id, &nodes);
            let chi_ring = decomposition.chi_ring_on(s.id, &nodes);
            let cells = s.omega.cells(mesh);
            let (c_chi, c_chi_ring) = if s.delta.is_finite() {
                (
                    max_interpolant_gradient(mesh, &cells, |n| decomposition.chi(s.id, n)) * s.delta,
                    max_interpolant_gradient(mesh, &cells, |n| decomposition.chi_ring(s.id, n)) * s.delta,
                )
            } else {
                (0.0, 0.0)
            };
            LocalWeights {
                nodes,
                chi,
                eta,
                chi_ring,
                c_chi,
                c_chi_ring,
            }
        })
        .collect();
    PartitionOfUnity { weights }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn decomp(n: usize, p: usize, ell: usize) -> Decomposition {
        let mesh = Mesh::unit(2, n).unwrap();
        build_decomposition(&mesh, &DecompositionParams::new(vec![p, p], ell)).unwrap()
    }

    #[test]
    fn subdomain_counts() {
        assert_eq!(decomp(800, 8, 2).num_subdomains(), 64);
        assert_eq!(decomp(256, 4, 2).num_subdomains(), 16);
        let single = decomp(8, 1, 2);
        assert_eq!(single.num_subdomains(), 1);
        assert_eq!((single.kappa(), single.kappa_star()), (1, 1));
        assert!(single.subdomain(0).ring_degenerate);
        assert!(single.subdomain(0).ring.is_empty());
    }

    #[test]
    fn single_subdomain_weights() {
        let d = decomp(6, 1, 1);
        for n in 0..d.mesh().num_nodes() {
            assert_eq!(d.chi(0, n), 1.0);
            assert_eq!(d.chi_ring(0, n), 0.0);
        }
    }

    #[test]
    fn half_domain_ramp() {
        let mesh = Mesh::new(2, &[8, 2], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![2, 1], 1)).unwrap();
        let expected = [1.0, 1.0, 1.0, 0.75, 0.5, 0.25, 0.0, 0.0, 0.0];
        for (x, e) in expected.iter().enumerate() {
            let node = mesh.node_index([x, 1, 0]);
            assert!((d.chi(0, node) - e).abs() < 1e-15, "x = {x}");
            assert!((d.chi(1, node) - (1.0 - e)).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_bad_partitions() {
        let mesh = Mesh::unit(2, 10).unwrap();
        assert!(build_decomposition(&mesh, &DecompositionParams::new(vec![3, 3], 1)).is_err());
        let mut p = DecompositionParams::new(vec![2, 2], 1);
        p.overlap_layers = 0;
        assert!(build_decomposition(&mesh, &p).is_err());
        assert!(build_decomposition(&mesh, &DecompositionParams::new(vec![2], 1)).is_err());
    }

    #[test]
    fn interior_ring_is_annular() {
        let d = decomp(64, 4, 2);
        let s = d.subdomain(d.subdomain_at([1, 1, 0]));
        assert!(!s.boundary && !s.ring_degenerate);
        // The hole of R* contains the center of the brick.
        let mesh = d.mesh();
        let center = mesh.cell_index([24, 24, 0]);
        assert!(s.omega_star.contains_cell([24, 24, 0]));
        assert!(!s.ring_star.contains(&center));
        assert!(s.ring_star.len() < s.omega_star.num_cells());
        let corner = d.subdomain(0);
        assert!(corner.boundary);
    }

    #[test]
    fn set_inclusions_and_cover() {
        let d = decomp(32, 4, 2);
        let mesh = d.mesh();
        let mut covered = vec![0usize; mesh.num_cells()];
        let mut bricks = vec![0usize; mesh.num_cells()];
        for s in d.subdomains() {
            let omega: Vec<usize> = s.omega.cells(mesh);
            let star: Vec<usize> = s.omega_star.cells(mesh);
            for &c in &omega {
                covered[c] += 1;
                assert!(star.binary_search(&c).is_ok());
            }
            for c in s.brick.cells(mesh) {
                bricks[c] += 1;
            }
            for c in &s.ring {
                assert!(omega.binary_search(c).is_ok());
                assert!(s.ring_star.binary_search(c).is_ok());
            }
            for c in &s.ring_star {
                assert!(star.binary_search(c).is_ok());
            }
            let plateau = s.plateau.cells(mesh);
            let mut union: Vec<usize> = plateau.iter().chain(&s.ring).copied().collect();
            union.sort_unstable();
            union.dedup();
            assert_eq!(union, omega);
            assert!(s.ring.windows(2).all(|w| w[0] < w[1]));
            assert!(s.ring_star.windows(2).all(|w| w[0] < w[1]));
        }
        assert!(covered.iter().all(|&c| c >= 1));
        assert!(bricks.iter().all(|&c| c == 1));
        assert_eq!(*covered.iter().max().unwrap(), d.kappa());
    }

    #[test]
    fn kappa_by_exhaustive_count() {
        let d = decomp(32, 4, 3);
        let mesh = d.mesh();
        let mut count = vec![0usize; mesh.num_cells()];
        for s in d.subdomains() {
            for c in s.omega_star.cells(mesh) {
                count[c] += 1;
            }
        }
        assert_eq!(*count.iter().max().unwrap(), d.kappa_star());
        let mut nodes = vec![0usize; mesh.num_nodes()];
        for s in d.subdomains() {
            for n in s.omega.nodes(mesh) {
                nodes[n] += 1;
            }
        }
        assert!(nodes.iter().all(|&c| c <= 4));
    }

    #[test]
    fn pu_properties() {
        let d = decomp(32, 4, 2);
        let pu = build_partition_of_unity(&d);
        let mesh = d.mesh();
        for n in 0..mesh.num_nodes() {
            let s: f64 = (0..d.num_subdomains()).map(|i| d.chi(i, n)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
        for s in d.subdomains() {
            let w = &pu.weights[s.id];
            assert!(w.c_chi <= 4.0 && w.c_chi > 0.0);
            assert!(w.c_chi_ring.is_finite());
            for (k, &n) in w.nodes.iter().enumerate() {
                let c = mesh.node_coords(n);
                assert!((0.0..=1.0).contains(&w.chi[k]));
                assert!((0.0..=1.0).contains(&w.chi_ring[k]));
                assert!((w.chi[k] - w.eta[k] - w.chi_ring[k]).abs() < 1e-14);
                if w.chi[k] > 0.0 {
                    assert!(s.omega.contains_node(c, 2));
                }
                if s.plateau.contains_node(c, 2) {
                    assert_eq!(w.chi[k], 1.0);
                } else {
                    assert_eq!(w.eta[k], 0.0);
                }
                if w.chi_ring[k] > 0.0 {
                    assert!(mesh.node_cells(n).any(|cell| s.ring.binary_search(&cell).is_ok()));
                }
            }
        }
    }

    #[test]
    fn eta_is_one_off_the_ring() {
        let d = decomp(32, 4, 2);
        let mesh = d.mesh();
        for s in d.subdomains() {
            for cell in s.omega.cells(mesh) {
                if s.ring.binary_search(&cell).is_err() {
                    for &n in &mesh.cell_nodes(cell)[..4] {
                        assert_eq!(d.eta(s.id, n), 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn plateau_boundary_one_layer_inside_ring() {
        // Every node on the boundary of the plateau box that is not on the outer
        // boundary lies in R, and so does each of its neighbors; the plateau
        // boundary is therefore at least one layer away from the boundary of R.
        let d = decomp(32, 4, 1);
        let mesh = d.mesh();
        let s = d.subdomain(d.subdomain_at([1, 2, 0]));
        let ring = CellPatch::new(mesh, s.ring.clone());
        let interior: Vec<usize> = ring.interior_local_nodes(mesh).iter().map(|&l| ring.nodes[l]).collect();
        for n in s.plateau.nodes(mesh) {
            let c = mesh.node_coords(n);
            let on_edge = (0..2).any(|k| c[k] == s.plateau.lo[k] || c[k] == s.plateau.hi[k]);
            if on_edge && !mesh.is_boundary_node(n) {
                assert!(interior.binary_search(&n).is_ok(), "node {c:?}");
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn pu_sums_to_one(px in 1usize..5, py in 1usize..5, b in 4usize..9, o in 1usize..3, ell in 1usize..4, nodes in proptest::collection::vec(any::<u64>(), 50)) {
            let mesh = Mesh::new(2, &[px * b, py * b], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
            let mut params = DecompositionParams::new(vec![px, py], ell);
            params.overlap_layers = o;
            let d = build_decomposition(&mesh, &params).unwrap();
            for r in nodes {
                let n = (r % mesh.num_nodes() as u64) as usize;
                let s: f64 = (0..d.num_subdomains()).map(|i| d.chi(i, n)).sum();
                prop_assert!((s - 1.0).abs() < 1e-12);
                for i in 0..d.num_subdomains() {
                    let v = d.chi_ring(i, n);
                    prop_assert!((0.0..=1.0).contains(&v));
                    prop_assert!((d.chi(i, n) - d.eta(i, n) - v).abs() < 1e-14);
                }
            }
        }
    }
}
