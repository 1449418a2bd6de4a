//! Overlapping subdomains, oversampling domains and rings of a 4x4 decomposition.

use msgfem::decomposition::{build_decomposition, DecompositionParams};
use msgfem::mesh::Mesh;

fn main() -> msgfem::Result<()> {
    let mesh = Mesh::unit(2, 64)?;
    let d = build_decomposition(&mesh, &DecompositionParams::new(vec![4, 4], 2))?;
    println!("kappa = {}, kappa* = {}", d.kappa(), d.kappa_star());
    println!(" id  grid    |ω|  |ω*|   |R|  |R*|  boundary  degenerate");
    for s in d.summary() {
        let g = d.subdomain(s.id).grid;
        println!(
            "{:3}  [{},{}]  {:5} {:5} {:5} {:5}  {:8}  {}",
            s.id, g[0], g[1], s.omega_cells, s.omega_star_cells, s.ring_cells, s.ring_star_cells, s.boundary, s.ring_degenerate
        );
    }
    // The partition of unity sums to one at every node.
    let worst = (0..mesh.num_nodes())
        .map(|v| ((0..d.num_subdomains()).map(|i| d.chi(i, v)).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    println!("max |Σχ - 1| = {worst:.1e}");
    Ok(())
}
