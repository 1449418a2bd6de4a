//! Dense reference computations used to cross-check the sparse pipeline.
//!
//! Everything here is deliberately naive: explicit quadrature, dense
//! factorizations and dense eigen decompositions. Only meant for small problems
//! (a few thousand unknowns at most).

use nalgebra::{DMatrix, DVector};

use crate::coefficients::CoefficientField;
use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::sparse::CsrMatrix;

/// Largest system the dense fallback accepts.
pub const DENSE_LIMIT: usize = 3000;

fn gauss_points() -> [f64; 2] {
    let d = 0.5 / 3f64.sqrt();
    [0.5 - d, 0.5 + d]
}

/// Stiffness by 2-point Gauss quadrature per axis of the bilinear shape function
/// gradients, accumulated into a dense matrix over all mesh nodes.
pub fn dense_stiffness_quadrature(mesh: &Mesh, coeff: &CoefficientField) -> DMatrix<f64> {
    let n = mesh.num_nodes();
    let dim = mesh.dim();
    let h = mesh.h().to_vec();
    let corners = 1usize << dim;
    let gp = gauss_points();
    let weight = mesh.cell_volume() / corners as f64;
    let mut k = DMatrix::zeros(n, n);
    for cell in 0..mesh.num_cells() {
        let nodes = mesh.cell_nodes(cell);
        for q in 0..corners {
            let xi: Vec<f64> = (0..dim).map(|k| gp[(q >> k) & 1]).collect();
            let grads: Vec<Vec<f64>> = (0..corners)
                .map(|a| {
                    (0..dim)
                        .map(|k| {
                            (0..dim)
                                .map(|m| {
                                    let bit = (a >> m) & 1;
                                    if m == k {
                                        (if bit == 1 { 1.0 } else { -1.0 }) / h[m]
                                    } else if bit == 1 {
                                        xi[m]
                                    } else {
                                        1.0 - xi[m]
                                    }
                                })
                                .product()
                        })
                        .collect()
                })
                .collect();
            for a in 0..corners {
                for b in 0..corners {
                    let g: f64 = grads[a].iter().zip(&grads[b]).map(|(x, y)| x * y).sum();
                    k[(nodes[a], nodes[b])] += coeff.value(cell) * weight * g;
                }
            }
        }
    }
    k
}

/// `∫ f g` of two nodal Q1 functions by 2-point Gauss quadrature.
pub fn dense_mass_product(mesh: &Mesh, f: &[f64], g: &[f64]) -> f64 {
    let dim = mesh.dim();
    let corners = 1usize << dim;
    let gp = gauss_points();
    let weight = mesh.cell_volume() / corners as f64;
    let mut total = 0.0;
    for cell in 0..mesh.num_cells() {
        let nodes = mesh.cell_nodes(cell);
        for q in 0..corners {
            let shape = |a: usize| -> f64 {
                (0..dim)
                    .map(|m| {
                        let x = gp[(q >> m) & 1];
                        if (a >> m) & 1 == 1 {
                            x
                        } else {
                            1.0 - x
                        }
                    })
                    .product()
            };
            let fv: f64 = (0..corners).map(|a| shape(a) * f[nodes[a]]).sum();
            let gv: f64 = (0..corners).map(|a| shape(a) * g[nodes[a]]).sum();
            total += weight * fv * gv;
        }
    }
    total
}

/// Dense LU solve.
pub fn dense_solve(a: &DMatrix<f64>, b: &[f64]) -> Result<Vec<f64>> {
    if a.nrows() > DENSE_LIMIT {
        return Err(Error::DimensionMismatch(format!("dense oracle limited to {DENSE_LIMIT} unknowns")));
    }
    let lu = a.clone().lu();
    lu.solve(&DVector::from_column_slice(b))
        .map(|x| x.as_slice().to_vec())
        .ok_or(Error::SingularMatrix { pivot: 0 })
}

/// Eigenpairs of the symmetric definite pencil `A x = λ B x`, ascending, with
/// `B`-orthonormal eigenvectors as columns.
pub fn generalized_symmetric_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = a.nrows();
    let chol = b.clone().cholesky().ok_or(Error::NotPositiveSemidefinite { value: f64::NAN })?;
    let l = chol.l();
    let linv = l.clone().try_inverse().ok_or(Error::SingularMatrix { pivot: 0 })?;
    let mut c = &linv * a * linv.transpose();
    c = (&c + c.transpose()) * 0.5;
    let eig = c.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let ltinv = linv.transpose();
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &(&ltinv * eig.eigenvectors.column(i)));
    }
    Ok((values, vectors))
}

/// Eigenvalues of `A u = λ W u` restricted to the discrete harmonic space of the
/// unknowns, by explicit static condensation. `constrained` and `free` are
/// positions in the row numbering of `k` and `w`, which must partition it.
///
/// Returns the finite eigenvalues in ascending order and the corresponding
/// eigenvectors on the free positions (as columns).
pub fn schur_harmonic_eigen(
    k: &CsrMatrix,
    w: &CsrMatrix,
    constrained: &[usize],
    free: &[usize],
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let n = k.nrows();
    if constrained.len() + free.len() != n {
        return Err(Error::DimensionMismatch("constrained and free sets must partition the unknowns".into()));
    }
    if n > DENSE_LIMIT {
        return Err(Error::DimensionMismatch(format!("dense oracle limited to {DENSE_LIMIT} unknowns")));
    }
    let kd = k.to_dense();
    let wd = w.to_dense();
    let nf = free.len();
    let nc = constrained.len();
    let pick = |m: &DMatrix<f64>, r: &[usize], c: &[usize]| DMatrix::from_fn(r.len(), c.len(), |i, j| m[(r[i], c[j])]);
    // Extension operator E: free values -> all unknowns.
    let mut e = DMatrix::zeros(n, nf);
    for (j, &f) in free.iter().enumerate() {
        e[(f, j)] = 1.0;
    }
    if nc > 0 {
        let kcc = pick(&kd, constrained, constrained);
        let kcf = pick(&kd, constrained, free);
        let x = kcc.lu().solve(&(-kcf)).ok_or(Error::SingularMatrix { pivot: 0 })?;
        for (i, &c) in constrained.iter().enumerate() {
            for j in 0..nf {
                e[(c, j)] = x[(i, j)];
            }
        }
    }
    let mut a = e.transpose() * &kd * &e;
    a = (&a + a.transpose()) * 0.5;
    let mut ww = e.transpose() * &wd * &e;
    ww = (&ww + ww.transpose()) * 0.5;
    let ta = a.trace();
    let tw = ww.trace();
    let shift = if tw > 0.0 { -1e-3 * ta / tw } else { -1e-3 };
    let b = &a - &ww * shift;
    let (mu, vecs) = generalized_symmetric_eigen(&ww, &b)?;
    let mu_max = mu.iter().fold(0.0f64, |m, x| m.max(*x));
    let mut pairs: Vec<(f64, usize)> = mu
        .iter()
        .enumerate()
        .filter(|(_, &m)| m > 1e-13 * mu_max)
        .map(|(i, &m)| (shift + 1.0 / m, i))
        .collect();
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0));
    let values = pairs.iter().map(|p| p.0).collect();
    let vectors = DMatrix::from_fn(nf, pairs.len(), |i, j| vecs[(i, pairs[j].1)]);
    Ok((values, vectors))
}
