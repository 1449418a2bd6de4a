//! Richardson and GMRES with the two-level restricted additive Schwarz
//! preconditioner on a high-contrast channel coefficient.

use msgfem::coefficients::{channel_field, ChannelGeometry};
use msgfem::decomposition::{build_decomposition, DecompositionParams};
use msgfem::fem::{FineProblem, Source};
use msgfem::gfem::MultiscaleMethod;
use msgfem::local_spaces::{EigenOptions, Variant};
use msgfem::mesh::Mesh;
use msgfem::precond::{initial_vector, solve, InitialGuess, Method, Preconditioner, SolverOptions};

fn main() -> msgfem::Result<()> {
    let mesh = Mesh::unit(2, 128)?;
    let coeff = channel_field(&mesh, 6, &ChannelGeometry::default_for([4, 4]))?;
    let problem = FineProblem::homogeneous(mesh.clone(), coeff, Source::Constant(1.0))?;
    let d = build_decomposition(&mesh, &DecompositionParams::new(vec![4, 4], 2))?;
    let opts = SolverOptions::default();
    let u0 = initial_vector(&problem, &[], InitialGuess::Zero);

    let one_level = Preconditioner::new(&problem, &d, None)?;
    let r = solve(Method::Gmres, &problem, &one_level, &u0, &opts, None);
    println!("one level: GMRES {}", r.iterations_label());

    for variant in [Variant::Full, Variant::Ring] {
        let method = MultiscaleMethod::new(&problem, &d, variant, 10, &EigenOptions::default())?;
        let mut b = Preconditioner::new(&problem, &d, None)?;
        for n in [2, 4, 6, 8, 10] {
            b.set_coarse(Some(method.coarse_space(&method.uniform(n))?))?;
            let rich = solve(Method::Richardson, &problem, &b, &u0, &opts, None);
            let gmres = solve(Method::Gmres, &problem, &b, &u0, &opts, None);
            println!(
                "{variant} n = {n:2}: Richardson {:>4}  GMRES {:>4}",
                rich.iterations_label(),
                gmres.iterations_label()
            );
        }
    }
    Ok(())
}
