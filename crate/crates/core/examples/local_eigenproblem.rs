//! Full and ring eigenproblems on one subdomain, checked against the dense
//! Schur-complement formulation.

use msgfem::coefficients::skyscraper_field;
use msgfem::decomposition::{build_decomposition, DecompositionParams};
use msgfem::local_spaces::{eigensolve, EigenOptions, LocalPencil, Variant};
use msgfem::mesh::Mesh;
use msgfem::oracle::schur_harmonic_eigen;

fn main() -> msgfem::Result<()> {
    let mesh = Mesh::unit(2, 64)?;
    let coeff = skyscraper_field(&mesh, 3, 8, 1e4)?;
    let d = build_decomposition(&mesh, &DecompositionParams::new(vec![4, 4], 2))?;
    let i = d.subdomain_at([1, 1, 0]);
    for variant in [Variant::Full, Variant::Ring] {
        let res = eigensolve(&mesh, &coeff, &d, i, variant, 8, &EigenOptions::default())?;
        let pencil = LocalPencil::new(&mesh, &coeff, &d, i, res.variant)?;
        let pos = |set: &[usize]| -> Vec<usize> {
            set.iter().map(|l| pencil.space.unknowns.binary_search(l).unwrap()).collect()
        };
        let (dense, _) =
            schur_harmonic_eigen(&pencil.k_uu, &pencil.w_uu, &pos(&pencil.space.constrained), &pos(&pencil.space.free))?;
        println!("{variant}: harmonic space of dimension {}", res.harmonic_dim);
        for (k, l) in res.eigenvalues.iter().enumerate() {
            println!("  λ{:<2} = {l:12.6e}   dense {:12.6e}", k + 1, dense[k]);
        }
        println!("  d_4 = {:.3e}, factor nnz/row = {:.1}", res.n_width(4).unwrap(), res.stats.fill.nnz_per_row());
    }
    Ok(())
}
