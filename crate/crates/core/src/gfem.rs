//! Global assembly of the multiscale method: local spaces glued with the
//! partition of unity into the coarse space `S_n`, the global particular
//! function `u^p`, and the Galerkin solution `u^G = u^p + u^s`.

use log::{info, warn};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::{CellBox, Decomposition};
use crate::error::{Error, Result};
use crate::fem::FineProblem;
use crate::local_spaces::{eigensolve, solve_particular, EigenOptions, LocalParticular, LocalSpectralResult, Variant};
use crate::mesh::DofMap;
use crate::sparse::CsrMatrix;

/// Sparse vector with sorted indices.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    pub indices: Vec<usize>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot_dense(&self, x: &[f64]) -> f64 {
        self.indices.iter().zip(&self.values).map(|(&i, v)| v * x[i]).sum()
    }

    pub fn axpy_into(&self, alpha: f64, y: &mut [f64]) {
        for (&i, v) in self.indices.iter().zip(&self.values) {
            y[i] += alpha * v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        self.axpy_into(1.0, &mut out);
        out
    }
}

/// Local eigenpairs of every subdomain for one variant.
#[derive(Debug, Clone)]
pub struct LocalSpaces {
    pub variant: Variant,
    /// Largest per-subdomain `n` these spectra support.
    pub max_n: usize,
    pub spectra: Vec<LocalSpectralResult>,
}

impl LocalSpaces {
    /// Solves all local eigenproblems for `max_n + 1` pairs (the extra one gives
    /// the error bound at `n = max_n`). Runs in the current rayon pool.
    pub fn compute(
        problem: &FineProblem,
        decomposition: &Decomposition,
        variant: Variant,
        max_n: usize,
        opts: &EigenOptions,
    ) -> Result<Self> {
        let spectra = (0..decomposition.num_subdomains())
            .into_par_iter()
            .map(|i| eigensolve(&problem.mesh, &problem.coefficient, decomposition, i, variant, max_n + 1, opts))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            variant,
            max_n,
            spectra,
        })
    }

    /// `max_i λ^{(i)}_{n_i+1}^{-1/2}` with the constant mode counted for interior subdomains.
    pub fn max_width(&self, n: &[usize]) -> Result<f64> {
        let mut worst: f64 = 0.0;
        for (s, &ni) in self.spectra.iter().zip(n) {
            let w = s.coarse_width(ni).ok_or(Error::InsufficientEigenvectors {
                subdomain: s.subdomain,
                available: s.eigenvalues.len(),
                required: ni + 1,
            })?;
            worst = worst.max(w);
        }
        Ok(worst)
    }

    /// `√(κκ*) · max_i λ^{(i)}_{n_i+1}^{-1/2}`.
    pub fn error_bound(&self, decomposition: &Decomposition, n: &[usize]) -> Result<f64> {
        let kk = (decomposition.kappa() * decomposition.kappa_star()) as f64;
        Ok(kk.sqrt() * self.max_width(n)?)
    }
}

fn boxes_intersect(a: &CellBox, b: &CellBox) -> bool {
    (0..3).all(|k| a.lo[k] < b.hi[k] && b.lo[k] < a.hi[k])
}

/// Subdomain pairs whose oversampling domains overlap (including `i == j`).
pub fn star_neighbors(decomposition: &Decomposition) -> Vec<Vec<usize>> {
    let subs = decomposition.subdomains();
    subs.iter()
        .map(|a| {
            subs.iter()
                .filter(|b| boxes_intersect(&a.omega_star, &b.omega_star))
                .map(|b| b.id)
                .collect()
        })
        .collect()
}

/// The global coarse space `S_n = span{ I_h(χ_i v) }` in interior-dof numbering.
#[derive(Debug, Clone)]
pub struct CoarseSpace {
    pub num_dofs: usize,
    pub functions: Vec<SparseVector>,
    /// `(subdomain, local index)` of each function.
    pub owners: Vec<(usize, usize)>,
    /// Number of functions contributed by each subdomain.
    pub counts: Vec<usize>,
    neighbors: Vec<Vec<usize>>,
    offsets: Vec<usize>,
}

impl CoarseSpace {
    /// Uses the first `n[i]` extended eigenvectors of subdomain `i` (for interior
    /// subdomains the first is the constant).
    pub fn build(dofmap: &DofMap, decomposition: &Decomposition, spaces: &LocalSpaces, n: &[usize]) -> Result<Self> {
        if n.len() != decomposition.num_subdomains() {
            return Err(Error::DimensionMismatch(format!(
                "{} basis sizes for {} subdomains",
                n.len(),
                decomposition.num_subdomains()
            )));
        }
        let mut functions = Vec::new();
        let mut owners = Vec::new();
        let mut counts = Vec::with_capacity(n.len());
        let mut offsets = Vec::with_capacity(n.len() + 1);
        for (i, spec) in spaces.spectra.iter().enumerate() {
            offsets.push(functions.len());
            let mut take = n[i];
            if take > spec.extended.len() {
                warn!(
                    "subdomain {i}: {} basis functions requested, {} available",
                    take,
                    spec.extended.len()
                );
                take = spec.extended.len();
            }
            let chi = decomposition.chi_on(i, &spec.star_nodes);
            for k in 0..take {
                let v = &spec.extended[k];
                let mut f = SparseVector::default();
                for (l, &node) in spec.star_nodes.iter().enumerate() {
                    let val = chi[l] * v[l];
                    if val != 0.0 {
                        if let Some(d) = dofmap.dof(node) {
                            f.indices.push(d);
                            f.values.push(val);
                        }
                    }
                }
                functions.push(f);
                owners.push((i, k));
            }
            counts.push(take);
        }
        offsets.push(functions.len());
        Ok(Self {
            num_dofs: dofmap.num_dofs(),
            functions,
            owners,
            counts,
            neighbors: star_neighbors(decomposition),
            offsets,
        })
    }

    pub fn dim(&self) -> usize {
        self.functions.len()
    }

    /// `R_Sᵀ c`.
    pub fn prolong(&self, c: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.num_dofs];
        for (f, &ci) in self.functions.iter().zip(c) {
            f.axpy_into(ci, &mut out);
        }
        out
    }

    /// `R_S r`.
    pub fn restrict(&self, r: &[f64]) -> Vec<f64> {
        self.functions.iter().map(|f| f.dot_dense(r)).collect()
    }

    /// `K_S = R_S K R_Sᵀ`, using that functions of subdomains with disjoint
    /// oversampling domains are `K`-orthogonal.
    pub fn galerkin(&self, k: &CsrMatrix) -> DMatrix<f64> {
        let m = self.dim();
        let rows: Vec<Vec<(usize, f64)>> = (0..m)
            .into_par_iter()
            .map(|a| {
                let fa = &self.functions[a];
                let mut y = std::collections::HashMap::with_capacity(fa.nnz() * 3);
                for (&j, &v) in fa.indices.iter().zip(&fa.values) {
                    for (r, kv) in k.row(j) {
                        *y.entry(r).or_insert(0.0) += kv * v;
                    }
                }
                let owner = self.owners[a].0;
                let mut out = Vec::new();
                for &nb in &self.neighbors[owner] {
                    for b in self.offsets[nb]..self.offsets[nb + 1] {
                        if b < a {
                            continue;
                        }
                        let fb = &self.functions[b];
                        let s: f64 = fb
                            .indices
                            .iter()
                            .zip(&fb.values)
                            .map(|(j, v)| y.get(j).map_or(0.0, |yj| yj * v))
                            .sum();
                        out.push((b, s));
                    }
                }
                out
            })
            .collect();
        let mut ks = DMatrix::zeros(m, m);
        for (a, row) in rows.into_iter().enumerate() {
            for (b, v) in row {
                ks[(a, b)] = v;
                ks[(b, a)] = v;
            }
        }
        ks
    }
}

/// Cholesky factorization with diagonal pivoting that stops at pivots below
/// `rel_tol · max diag`. Linearly dependent coarse functions are dropped.
#[derive(Debug, Clone)]
pub struct CoarseSolver {
    /// Lower factor of the leading `rank × rank` pivoted block.
    l: DMatrix<f64>,
    perm: Vec<usize>,
    rank: usize,
    n: usize,
}

impl CoarseSolver {
    pub fn new(a: &DMatrix<f64>, rel_tol: f64) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch("coarse matrix must be square".into()));
        }
        let mut w = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let max_diag = (0..n).map(|i| w[(i, i)]).fold(0.0f64, f64::max);
        if n > 0 && !(max_diag > 0.0) {
            return Err(Error::EmptyCoarseSpace);
        }
        let threshold = rel_tol * max_diag;
        let mut rank = 0;
        for k in 0..n {
            let (p, piv) = (k..n).map(|i| (i, w[(i, i)])).fold((k, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
            if piv <= threshold {
                break;
            }
            if p != k {
                w.swap_rows(k, p);
                w.swap_columns(k, p);
                perm.swap(k, p);
            }
            let d = w[(k, k)].sqrt();
            w[(k, k)] = d;
            for i in k + 1..n {
                w[(i, k)] /= d;
            }
            // Full symmetric trailing update so later row/column swaps stay valid.
            for j in k + 1..n {
                let ljk = w[(j, k)];
                if ljk == 0.0 {
                    continue;
                }
                for i in k + 1..n {
                    let v = w[(i, k)] * ljk;
                    w[(i, j)] -= v;
                }
            }
            rank += 1;
        }
        if rank < n {
            info!("coarse matrix: dropped {} of {} dependent functions", n - rank, n);
        }
        let l = DMatrix::from_fn(rank, rank, |i, j| if j <= i { w[(i, j)] } else { 0.0 });
        Ok(Self { l, perm, rank, n })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solution with the dropped components set to zero.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let r = self.rank;
        let mut y: Vec<f64> = (0..r).map(|i| b[self.perm[i]]).collect();
        for i in 0..r {
            let mut s = y[i];
            for j in 0..i {
                s -= self.l[(i, j)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        for i in (0..r).rev() {
            let mut s = y[i];
            for j in i + 1..r {
                s -= self.l[(j, i)] * y[j];
            }
            y[i] = s / self.l[(i, i)];
        }
        let mut x = vec![0.0; self.n];
        for i in 0..r {
            x[self.perm[i]] = y[i];
        }
        x
    }
}

/// Relative pivot threshold of the coarse factorization.
pub const COARSE_DROP_TOLERANCE: f64 = 1e-12;

/// `u^p = Σ_i I_h(χ_i (ψ_i + ψ_i^b))` as a nodal vector.
pub fn global_particular(decomposition: &Decomposition, num_nodes: usize, particulars: &[LocalParticular]) -> Vec<f64> {
    let mut up = vec![0.0; num_nodes];
    for p in particulars {
        let chi = decomposition.chi_on(p.subdomain, &p.star_nodes);
        for ((&node, c), v) in p.star_nodes.iter().zip(chi).zip(p.combined()) {
            up[node] += c * v;
        }
    }
    up
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiscaleSolution {
    pub variant: Variant,
    pub n: Vec<usize>,
    /// `u^G` on all nodes.
    pub nodal: Vec<f64>,
    pub coarse_coefficients: Vec<f64>,
    pub coarse_dim: usize,
    pub coarse_rank: usize,
}

/// Everything needed to evaluate the multiscale method for varying `n`.
#[derive(Debug)]
pub struct MultiscaleMethod<'a> {
    pub problem: &'a FineProblem,
    pub decomposition: &'a Decomposition,
    pub spaces: LocalSpaces,
    pub particulars: Vec<LocalParticular>,
    /// Global particular function on all nodes.
    pub particular: Vec<f64>,
}

impl<'a> MultiscaleMethod<'a> {
    pub fn new(
        problem: &'a FineProblem,
        decomposition: &'a Decomposition,
        variant: Variant,
        max_n: usize,
        opts: &EigenOptions,
    ) -> Result<Self> {
        let spaces = LocalSpaces::compute(problem, decomposition, variant, max_n, opts)?;
        Self::with_spaces(problem, decomposition, spaces)
    }

    pub fn with_spaces(problem: &'a FineProblem, decomposition: &'a Decomposition, spaces: LocalSpaces) -> Result<Self> {
        let particulars = (0..decomposition.num_subdomains())
            .into_par_iter()
            .map(|i| {
                solve_particular(
                    &problem.mesh,
                    &problem.coefficient,
                    &problem.source,
                    &problem.dirichlet,
                    decomposition,
                    i,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let particular = global_particular(decomposition, problem.mesh.num_nodes(), &particulars);
        Ok(Self {
            problem,
            decomposition,
            spaces,
            particulars,
            particular,
        })
    }

    pub fn uniform(&self, n: usize) -> Vec<usize> {
        vec![n; self.decomposition.num_subdomains()]
    }

    pub fn coarse_space(&self, n: &[usize]) -> Result<CoarseSpace> {
        CoarseSpace::build(&self.problem.dofmap, self.decomposition, &self.spaces, n)
    }

    /// Galerkin solution in `u^p + S_n`.
    pub fn solve(&self, n: &[usize]) -> Result<MultiscaleSolution> {
        let space = self.coarse_space(n)?;
        let ks = space.galerkin(&self.problem.k0);
        let solver = CoarseSolver::new(&ks, COARSE_DROP_TOLERANCE)?;
        let up = self.problem.dofmap.restrict(&self.particular);
        let kup = self.problem.k0.mul_vec(&up);
        let r: Vec<f64> = self.problem.f0.iter().zip(&kup).map(|(f, k)| f - k).collect();
        let c = solver.solve(&space.restrict(&r));
        let mut u = space.prolong(&c);
        for (x, p) in u.iter_mut().zip(&up) {
            *x += p;
        }
        Ok(MultiscaleSolution {
            variant: self.spaces.variant,
            n: space.counts.clone(),
            nodal: self.problem.dofmap.prolong(&u, &self.particular),
            coarse_coefficients: c,
            coarse_dim: space.dim(),
            coarse_rank: solver.rank(),
        })
    }

    pub fn error_bound(&self, n: &[usize]) -> Result<f64> {
        self.spaces.error_bound(self.decomposition, n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{constant_field, skyscraper_field};
    use crate::decomposition::{build_decomposition, DecompositionParams};
    use crate::fem::{boundary_values, Source};
    use crate::mesh::Mesh;
    use crate::oracle::dense_solve;

    #[test]
    fn pivoted_cholesky_handles_dependent_columns() {
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 0.0, 1.0, 1.0, 0.0]);
        let v = DMatrix::from_columns(&[b.column(0).into_owned(), b.column(1).into_owned(), (b.column(0) + b.column(1))]);
        let a = v.transpose() * &v;
        let s = CoarseSolver::new(&a, 1e-12).unwrap();
        assert_eq!(s.rank(), 2);
        let rhs = a.column(0).iter().cloned().collect::<Vec<_>>();
        let x = s.solve(&rhs);
        let ax = &a * nalgebra::DVector::from_vec(x);
        for (p, q) in ax.iter().zip(&rhs) {
            assert!((p - q).abs() < 1e-12);
        }
        let spd = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = CoarseSolver::new(&spd, 1e-12).unwrap();
        let x = s.solve(&[1.0, 2.0]);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14 && (x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn galerkin_matches_dense_product() {
        let mesh = Mesh::unit(2, 24).unwrap();
        let c = skyscraper_field(&mesh, 1, 3, 1e3).unwrap();
        let p = FineProblem::homogeneous(mesh.clone(), c, Source::Constant(1.0)).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![3, 3], 2)).unwrap();
        let m = MultiscaleMethod::new(&p, &d, Variant::Ring, 3, &EigenOptions::default()).unwrap();
        let s = m.coarse_space(&m.uniform(3)).unwrap();
        let ks = s.galerkin(&p.k0);
        for a in 0..s.dim() {
            let ka = p.k0.mul_vec(&s.functions[a].to_dense(s.num_dofs));
            for b in 0..s.dim() {
                let v = s.functions[b].dot_dense(&ka);
                assert!((ks[(a, b)] - v).abs() <= 1e-12 * ks[(a, a)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn coarse_correction_is_energy_projection() {
        // u^G minimizes the energy error over u^p + S_n.
        let mesh = Mesh::unit(2, 24).unwrap();
        let c = skyscraper_field(&mesh, 2, 2, 1e4).unwrap();
        let p = FineProblem::homogeneous(mesh.clone(), c, Source::Constant(1.0)).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![2, 2], 2)).unwrap();
        let m = MultiscaleMethod::new(&p, &d, Variant::Full, 4, &EigenOptions::default()).unwrap();
        let uh = p.solve_reference().unwrap();
        let n = m.uniform(4);
        let sol = m.solve(&n).unwrap();
        let space = m.coarse_space(&n).unwrap();
        let err = p.relative_energy_error(&uh, &sol.nodal).unwrap();
        // Dense oracle for the same Galerkin problem.
        let phi = DMatrix::from_fn(space.num_dofs, space.dim(), |i, j| space.functions[j].to_dense(space.num_dofs)[i]);
        let k0 = p.k0.to_dense();
        let ks = phi.transpose() * &k0 * &phi;
        let up = p.dofmap.restrict(&m.particular);
        let r = nalgebra::DVector::from_vec(p.f0.clone()) - &k0 * nalgebra::DVector::from_vec(up.clone());
        let rhs = (phi.transpose() * r).as_slice().to_vec();
        let cc = dense_solve(&ks, &rhs).unwrap();
        let mut ud = (&phi * nalgebra::DVector::from_vec(cc)).as_slice().to_vec();
        for (x, y) in ud.iter_mut().zip(&up) {
            *x += y;
        }
        let dense_nodal = p.dofmap.prolong(&ud, &m.particular);
        let diff = p.relative_energy_error(&dense_nodal, &sol.nodal).unwrap();
        assert!(diff < 1e-8, "{diff}");
        // Perturbing the coefficients can only increase the error.
        for j in 0..space.dim() {
            let mut c2 = sol.coarse_coefficients.clone();
            c2[j] += 1e-3;
            let mut u2 = space.prolong(&c2);
            for (x, y) in u2.iter_mut().zip(&up) {
                *x += y;
            }
            let e2 = p.relative_energy_error(&uh, &p.dofmap.prolong(&u2, &m.particular)).unwrap();
            assert!(e2 >= err - 1e-14);
        }
        assert!(err <= m.error_bound(&n).unwrap() + 1e-8);
    }

    #[test]
    fn constant_coefficient_converges_and_respects_dirichlet() {
        let mesh = Mesh::unit(2, 32).unwrap();
        let c = constant_field(&mesh, 1.0).unwrap();
        let g = boundary_values(&mesh, |x| x[0] * x[0] - x[1]);
        let p = FineProblem::new(mesh.clone(), c, Source::Constant(1.0), g.clone()).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![2, 2], 2)).unwrap();
        let uh = p.solve_reference().unwrap();
        let mut last = f64::INFINITY;
        for variant in [Variant::Full, Variant::Ring] {
            let m = MultiscaleMethod::new(&p, &d, variant, 10, &EigenOptions::default()).unwrap();
            for &node in p.dofmap.boundary_nodes() {
                assert!((m.particular[node] - g[node]).abs() < 1e-14);
            }
            let mut errs = Vec::new();
            for n in [2, 5, 10] {
                let sol = m.solve(&m.uniform(n)).unwrap();
                for &node in p.dofmap.boundary_nodes() {
                    assert_eq!(sol.nodal[node], m.particular[node]);
                }
                errs.push(p.relative_energy_error(&uh, &sol.nodal).unwrap());
            }
            assert!(errs.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{errs:?}");
            last = last.min(errs[2]);
        }
        assert!(last < 1e-2, "{last}");
    }

    #[test]
    fn single_subdomain_is_exact() {
        let mesh = Mesh::unit(2, 12).unwrap();
        let c = skyscraper_field(&mesh, 5, 2, 1e2).unwrap();
        let p = FineProblem::homogeneous(mesh.clone(), c, Source::Constant(1.0)).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![1, 1], 1)).unwrap();
        let m = MultiscaleMethod::new(&p, &d, Variant::Full, 1, &EigenOptions::default()).unwrap();
        let sol = m.solve(&m.uniform(1)).unwrap();
        let uh = p.solve_reference().unwrap();
        assert!(p.relative_energy_error(&uh, &sol.nodal).unwrap() < 1e-12);
    }
}
