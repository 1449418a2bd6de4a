//! Q1 finite elements for `-Δu = 1` on the unit square, solved directly.

use msgfem::coefficients::constant_field;
use msgfem::fem::{FineProblem, Source};
use msgfem::mesh::Mesh;

fn main() -> msgfem::Result<()> {
    for n in [8, 16, 32, 64] {
        let mesh = Mesh::unit(2, n)?;
        let coeff = constant_field(&mesh, 1.0)?;
        let problem = FineProblem::homogeneous(mesh, coeff, Source::Constant(1.0))?;
        let u = problem.solve_reference()?;
        let centre = u[problem.mesh.node_index([n / 2, n / 2, 0])];
        println!(
            "n = {n:3}  dofs = {:5}  |u|_a = {:.6}  u(1/2, 1/2) = {centre:.6}",
            problem.num_dofs(),
            problem.energy_norm(&u)?
        );
    }
    // The centre value converges to 0.0736713...
    Ok(())
}
