//! Uniform Cartesian meshes with lexicographic (x fastest) node and cell numbering.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Axis-aligned box mesh of `dim` dimensions. Unused trailing axes have one
/// node layer and a single cell slot so index arithmetic is uniform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    dim: usize,
    cells: [usize; 3],
    origin: [f64; 3],
    extent: [f64; 3],
    h: [f64; 3],
}

impl Mesh {
    pub fn new(dim: usize, cells_per_axis: &[usize], origin: &[f64], extent: &[f64]) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::InvalidMesh(format!("dimension must be 2 or 3, got {dim}")));
        }
        if cells_per_axis.len() != dim || origin.len() != dim || extent.len() != dim {
            return Err(Error::InvalidMesh(format!("expected {dim} entries per axis vector")));
        }
        let mut cells = [1usize; 3];
        let mut o = [0.0; 3];
        let mut e = [1.0; 3];
        let mut h = [1.0; 3];
        for k in 0..dim {
            if cells_per_axis[k] == 0 {
                return Err(Error::InvalidMesh(format!("axis {k} has no cells")));
            }
            if !(extent[k] > 0.0) || !extent[k].is_finite() {
                return Err(Error::InvalidMesh(format!("axis {k} has non-positive extent {}", extent[k])));
            }
            cells[k] = cells_per_axis[k];
            o[k] = origin[k];
            e[k] = extent[k];
            h[k] = extent[k] / cells_per_axis[k] as f64;
        }
        Ok(Self {
            dim,
            cells,
            origin: o,
            extent: e,
            h,
        })
    }

    /// Unit square or cube with `n` cells per axis.
    pub fn unit(dim: usize, n: usize) -> Result<Self> {
        Self::new(dim, &vec![n; dim], &vec![0.0; dim], &vec![1.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> &[usize] {
        &self.cells[..self.dim]
    }

    pub fn h(&self) -> &[f64] {
        &self.h[..self.dim]
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin[..self.dim]
    }

    pub fn extent(&self) -> &[f64] {
        &self.extent[..self.dim]
    }

    /// Per-axis node counts with unused axes set to 1.
    pub fn node_shape(&self) -> [usize; 3] {
        let mut s = [1; 3];
        for k in 0..self.dim {
            s[k] = self.cells[k] + 1;
        }
        s
    }

    /// Per-axis cell counts with unused axes set to 1.
    pub fn cell_shape(&self) -> [usize; 3] {
        self.cells
    }

    pub fn num_nodes(&self) -> usize {
        self.node_shape().iter().product()
    }

    pub fn num_cells(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.h[..self.dim].iter().product()
    }

    pub fn corners_per_cell(&self) -> usize {
        1 << self.dim
    }

    #[inline]
    pub fn node_index(&self, ijk: [usize; 3]) -> usize {
        let s = self.node_shape();
        ijk[0] + s[0] * (ijk[1] + s[1] * ijk[2])
    }

    #[inline]
    pub fn node_coords(&self, node: usize) -> [usize; 3] {
        let s = self.node_shape();
        [node % s[0], (node / s[0]) % s[1], node / (s[0] * s[1])]
    }

    #[inline]
    pub fn cell_index(&self, ijk: [usize; 3]) -> usize {
        ijk[0] + self.cells[0] * (ijk[1] + self.cells[1] * ijk[2])
    }

    #[inline]
    pub fn cell_coords(&self, cell: usize) -> [usize; 3] {
        [
            cell % self.cells[0],
            (cell / self.cells[0]) % self.cells[1],
            cell / (self.cells[0] * self.cells[1]),
        ]
    }

    pub fn node_position(&self, node: usize) -> [f64; 3] {
        let c = self.node_coords(node);
        let mut x = [0.0; 3];
        for k in 0..self.dim {
            x[k] = self.origin[k] + c[k] as f64 * self.h[k];
        }
        x
    }

    /// Global node ids of the cell corners; corner `a` sits at offset bit `k` of `a` along axis `k`.
    #[inline]
    pub fn cell_nodes(&self, cell: usize) -> [usize; 8] {
        let c = self.cell_coords(cell);
        let mut out = [0usize; 8];
        for (a, slot) in out.iter_mut().enumerate().take(self.corners_per_cell()) {
            let mut ijk = c;
            for (k, v) in ijk.iter_mut().enumerate().take(self.dim) {
                *v += (a >> k) & 1;
            }
            *slot = self.node_index(ijk);
        }
        out
    }

    /// Cells sharing node `node` (up to 2^dim).
    pub fn node_cells(&self, node: usize) -> impl Iterator<Item = usize> + '_ {
        let c = self.node_coords(node);
        (0..self.corners_per_cell()).filter_map(move |a| {
            let mut ijk = [0usize; 3];
            for k in 0..3 {
                if k >= self.dim {
                    ijk[k] = 0;
                    continue;
                }
                let off = (a >> k) & 1;
                if c[k] < off || c[k] - off >= self.cells[k] {
                    return None;
                }
                ijk[k] = c[k] - off;
            }
            Some(self.cell_index(ijk))
        })
    }

    pub fn is_boundary_node(&self, node: usize) -> bool {
        let c = self.node_coords(node);
        (0..self.dim).any(|k| c[k] == 0 || c[k] == self.cells[k])
    }
}

/// Node-to-dof bookkeeping for Dirichlet elimination.
#[derive(Debug, Clone, PartialEq)]
pub struct DofMap {
    /// `node_to_dof[node]` is the interior dof index or `None` on the boundary.
    node_to_dof: Vec<Option<usize>>,
    boundary_nodes: Vec<usize>,
    interior_nodes: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let n = mesh.num_nodes();
        let mut node_to_dof = vec![None; n];
        let mut boundary_nodes = Vec::new();
        let mut interior_nodes = Vec::new();
        for node in 0..n {
            if mesh.is_boundary_node(node) {
                boundary_nodes.push(node);
            } else {
                node_to_dof[node] = Some(interior_nodes.len());
                interior_nodes.push(node);
            }
        }
        Self {
            node_to_dof,
            boundary_nodes,
            interior_nodes,
        }
    }

    pub fn dof(&self, node: usize) -> Option<usize> {
        self.node_to_dof[node]
    }

    /// Interior nodes in dof order.
    pub fn interior_nodes(&self) -> &[usize] {
        &self.interior_nodes
    }

    pub fn boundary_nodes(&self) -> &[usize] {
        &self.boundary_nodes
    }

    pub fn num_dofs(&self) -> usize {
        self.interior_nodes.len()
    }

    pub fn num_nodes(&self) -> usize {
        self.node_to_dof.len()
    }

    /// Restricts a nodal vector to interior dofs.
    pub fn restrict(&self, nodal: &[f64]) -> Vec<f64> {
        self.interior_nodes.iter().map(|&n| nodal[n]).collect()
    }

    /// Scatters interior dof values into a nodal vector whose boundary entries come from `boundary`.
    pub fn prolong(&self, dofs: &[f64], boundary: &[f64]) -> Vec<f64> {
        let mut out = boundary.to_vec();
        for (d, &node) in self.interior_nodes.iter().enumerate() {
            out[node] = dofs[d];
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts() {
        let m = Mesh::unit(2, 1).unwrap();
        assert_eq!((m.num_nodes(), m.num_cells()), (4, 1));
        let m = Mesh::unit(2, 800).unwrap();
        assert_eq!(m.num_nodes(), 641_601);
        let m = Mesh::unit(3, 4).unwrap();
        assert_eq!((m.num_nodes(), m.num_cells()), (125, 64));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(Mesh::unit(1, 4).is_err());
        assert!(Mesh::unit(4, 4).is_err());
        assert!(Mesh::new(2, &[0, 3], &[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(Mesh::new(2, &[3, 3], &[0.0, 0.0], &[1.0, -1.0]).is_err());
    }

    #[test]
    fn cell_nodes_are_lexicographic() {
        let m = Mesh::unit(2, 3).unwrap();
        let nodes = m.cell_nodes(m.cell_index([1, 2, 0]));
        assert_eq!(&nodes[..4], &[9, 10, 13, 14]);
        let m3 = Mesh::unit(3, 2).unwrap();
        let c = m3.cell_nodes(0);
        assert_eq!(&c[..8], &[0, 1, 3, 4, 9, 10, 12, 13]);
    }

    #[test]
    fn node_cells_inverse_of_cell_nodes() {
        let m = Mesh::new(3, &[3, 2, 4], &[0.0; 3], &[1.0; 3]).unwrap();
        for node in 0..m.num_nodes() {
            for cell in m.node_cells(node) {
                assert!(m.cell_nodes(cell)[..8].contains(&node));
            }
        }
        let total: usize = (0..m.num_nodes()).map(|n| m.node_cells(n).count()).sum();
        assert_eq!(total, 8 * m.num_cells());
    }

    #[test]
    fn dofmap_partitions_nodes() {
        let m = Mesh::unit(2, 4).unwrap();
        let d = DofMap::new(&m);
        assert_eq!(d.num_dofs(), 9);
        assert_eq!(d.boundary_nodes().len(), 16);
        let mut seen = vec![0; m.num_nodes()];
        for &n in d.interior_nodes().iter().chain(d.boundary_nodes()) {
            seen[n] += 1;
        }
        assert!(seen.iter().all(|&s| s == 1));
        for (k, &n) in d.interior_nodes().iter().enumerate() {
            assert_eq!(d.dof(n), Some(k));
        }
    }
}
