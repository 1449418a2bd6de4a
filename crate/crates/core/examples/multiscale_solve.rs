//! The multiscale approximation `u^G` for growing local space sizes, against the
//! fine solution and the a priori bound.

use msgfem::coefficients::skyscraper_field;
use msgfem::decomposition::{build_decomposition, DecompositionParams};
use msgfem::fem::{FineProblem, Source};
use msgfem::gfem::MultiscaleMethod;
use msgfem::local_spaces::{EigenOptions, Variant};
use msgfem::mesh::Mesh;

fn main() -> msgfem::Result<()> {
    let mesh = Mesh::unit(2, 64)?;
    let coeff = skyscraper_field(&mesh, 11, 8, 1e6)?;
    let problem = FineProblem::homogeneous(mesh.clone(), coeff, Source::Constant(1.0))?;
    let d = build_decomposition(&mesh, &DecompositionParams::new(vec![4, 4], 2))?;
    let reference = problem.solve_reference()?;
    for variant in [Variant::Full, Variant::Ring] {
        let method = MultiscaleMethod::new(&problem, &d, variant, 12, &EigenOptions::default())?;
        println!("{variant}");
        for n in [1, 2, 4, 6, 8, 10, 12] {
            let n = method.uniform(n);
            let sol = method.solve(&n)?;
            let err = problem.relative_energy_error(&reference, &sol.nodal)?;
            println!(
                "  n = {:2}  dim = {:3}  error = {err:.3e}  bound = {:.3e}",
                n[0],
                sol.coarse_dim,
                method.error_bound(&n)?
            );
        }
    }
    Ok(())
}
