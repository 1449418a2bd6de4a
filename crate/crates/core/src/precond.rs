//! Two-level hybrid restricted additive Schwarz preconditioner
//!
//! `B = Σ R_iᵀ χ_i K_i⁻¹ R_i + R_Sᵀ K_S⁻¹ R_S (I - K Σ R_iᵀ χ_i K_i⁻¹ R_i)`
//!
//! and the Richardson and GMRES drivers built on it.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::Decomposition;
use crate::error::{Error, Result};
use crate::factor::SparseLu;
use crate::fem::FineProblem;
use crate::gfem::{CoarseSolver, CoarseSpace, COARSE_DROP_TOLERANCE};
use crate::sparse::{dot, norm2, CsrMatrix};

/// Zero-Dirichlet solve on one oversampling domain.
#[derive(Debug, Clone)]
struct LocalSolve {
    dofs: Vec<usize>,
    chi: Vec<f64>,
    lu: SparseLu,
}

#[derive(Debug, Clone)]
pub struct Preconditioner {
    k0: CsrMatrix,
    locals: Vec<LocalSolve>,
    coarse: Option<(CoarseSpace, CoarseSolver)>,
    n: usize,
}

impl Preconditioner {
    /// Factorizes `K_i` on the interior dofs of every `ω*_i`. An empty coarse
    /// space gives the one-level method.
    pub fn new(problem: &FineProblem, decomposition: &Decomposition, coarse: Option<CoarseSpace>) -> Result<Self> {
        let mesh = &problem.mesh;
        let locals = (0..decomposition.num_subdomains())
            .into_par_iter()
            .map(|i| {
                let patch = decomposition.subdomain(i).omega_star_patch(mesh);
                let nodes: Vec<usize> = patch.interior_local_nodes(mesh).into_iter().map(|l| patch.nodes[l]).collect();
                let dofs: Vec<usize> = nodes
                    .iter()
                    .map(|&g| problem.dofmap.dof(g).expect("interior patch node is a dof"))
                    .collect();
                let chi = decomposition.chi_on(i, &nodes);
                let ki = problem.k0.submatrix(&dofs, &dofs).with_symmetry_flag(true);
                let lu = SparseLu::factorize(&ki).map_err(|e| Error::Subdomain {
                    subdomain: i,
                    message: format!("local factorization failed: {e}"),
                })?;
                Ok(LocalSolve { dofs, chi, lu })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut b = Self {
            k0: problem.k0.clone(),
            locals,
            coarse: None,
            n: problem.num_dofs(),
        };
        b.set_coarse(coarse)?;
        Ok(b)
    }

    /// Replaces the coarse level, keeping the local factorizations.
    pub fn set_coarse(&mut self, coarse: Option<CoarseSpace>) -> Result<()> {
        self.coarse = match coarse {
            Some(space) if space.dim() > 0 => {
                let ks = space.galerkin(&self.k0);
                let solver = CoarseSolver::new(&ks, COARSE_DROP_TOLERANCE)?;
                Some((space, solver))
            }
            _ => None,
        };
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn coarse_dim(&self) -> usize {
        self.coarse.as_ref().map_or(0, |c| c.0.dim())
    }

    /// `Σ_i R_iᵀ χ_i K_i⁻¹ R_i r`, summed in subdomain order.
    pub fn one_level(&self, r: &[f64]) -> Vec<f64> {
        let parts: Vec<Vec<f64>> = self
            .locals
            .par_iter()
            .map(|l| {
                let rhs: Vec<f64> = l.dofs.iter().map(|&d| r[d]).collect();
                let x = l.lu.solve(&rhs);
                x.iter().zip(&l.chi).map(|(a, c)| a * c).collect()
            })
            .collect();
        let mut z = vec![0.0; self.n];
        for (l, p) in self.locals.iter().zip(parts) {
            for (&d, v) in l.dofs.iter().zip(p) {
                z[d] += v;
            }
        }
        z
    }

    /// `z = z₁ + R_Sᵀ K_S⁻¹ R_S (r - K z₁)`.
    pub fn apply(&self, r: &[f64]) -> Vec<f64> {
        let mut z = self.one_level(r);
        if let Some((space, solver)) = &self.coarse {
            let kz = self.k0.mul_vec(&z);
            let t: Vec<f64> = r.iter().zip(&kz).map(|(a, b)| a - b).collect();
            let c = solver.solve(&space.restrict(&t));
            for (zi, v) in z.iter_mut().zip(space.prolong(&c)) {
                *zi += v;
            }
        }
        z
    }

    /// `B (f - K u)`.
    pub fn preconditioned_residual(&self, f: &[f64], u: &[f64]) -> Vec<f64> {
        let ku = self.k0.mul_vec(u);
        let r: Vec<f64> = f.iter().zip(&ku).map(|(a, b)| a - b).collect();
        self.apply(&r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Richardson,
    Gmres,
}

/// Starting vector of an iteration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitialGuess {
    Zero,
    /// The global particular function `u^p` (interior dofs).
    Particular,
    /// Uniform random dofs in `[-1, 1]` from a seed.
    Random(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iterations: usize,
    /// Stop once the preconditioned residual exceeds this multiple of the initial one.
    pub divergence_factor: f64,
    /// GMRES: recompute `B(f - K v_j)` explicitly instead of using the Givens estimate.
    pub explicit_residuals: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iterations: 1000,
            divergence_factor: 10.0,
            explicit_residuals: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: Method,
    /// Iterations to reach the tolerance; `None` stands for "did not converge".
    pub iterations: Option<usize>,
    pub steps: usize,
    pub converged: bool,
    pub diverged: bool,
    /// `‖B(f - K u^j)‖₂`, starting with `j = 0`.
    pub residuals: Vec<f64>,
    /// `‖u_h - u^j‖_a` when a reference was supplied.
    pub energy_errors: Option<Vec<f64>>,
    pub seconds: f64,
    #[serde(skip)]
    pub solution: Vec<f64>,
}

impl SolveReport {
    pub fn relative_residuals(&self) -> Vec<f64> {
        let r0 = self.residuals.first().copied().unwrap_or(1.0);
        let r0 = if r0 > 0.0 { r0 } else { 1.0 };
        self.residuals.iter().map(|r| r / r0).collect()
    }

    /// `e_{j+1} / e_j` in the energy norm.
    pub fn contraction_factors(&self) -> Vec<f64> {
        match &self.energy_errors {
            Some(e) => e.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect(),
            None => Vec::new(),
        }
    }

    /// Iteration count with non-convergence written as `inf`.
    pub fn iterations_label(&self) -> String {
        match self.iterations {
            Some(k) => k.to_string(),
            None => "inf".to_string(),
        }
    }
}

/// Energy norm of the error `u_ref - u` on interior dofs (boundary parts agree).
fn energy_error(k0: &CsrMatrix, reference: &[f64], u: &[f64]) -> f64 {
    let e: Vec<f64> = reference.iter().zip(u).map(|(a, b)| a - b).collect();
    k0.bilinear(&e, &e).max(0.0).sqrt()
}

pub fn initial_vector(problem: &FineProblem, particular: &[f64], guess: InitialGuess) -> Vec<f64> {
    match guess {
        InitialGuess::Zero => vec![0.0; problem.num_dofs()],
        InitialGuess::Particular => problem.dofmap.restrict(particular),
        InitialGuess::Random(seed) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..problem.num_dofs()).map(|_| rng.random_range(-1.0..1.0)).collect()
        }
    }
}

/// `u^{j+1} = u^j + B(f - K u^j)`. `reference` (interior dofs) enables the energy error history.
pub fn richardson(
    problem: &FineProblem,
    b: &Preconditioner,
    u0: &[f64],
    opts: &SolverOptions,
    reference: Option<&[f64]>,
) -> SolveReport {
    let t = Instant::now();
    let f = &problem.f0;
    let mut u = u0.to_vec();
    let mut energy = reference.map(|r| vec![energy_error(&problem.k0, r, &u)]);
    let mut z = b.preconditioned_residual(f, &u);
    let r0 = norm2(&z);
    let mut residuals = vec![r0];
    let mut converged = r0 == 0.0;
    let mut diverged = false;
    let mut steps = 0;
    while !converged && steps < opts.max_iterations {
        for (ui, zi) in u.iter_mut().zip(&z) {
            *ui += zi;
        }
        steps += 1;
        if let (Some(e), Some(r)) = (energy.as_mut(), reference) {
            e.push(energy_error(&problem.k0, r, &u));
        }
        z = b.preconditioned_residual(f, &u);
        let rn = norm2(&z);
        residuals.push(rn);
        if rn <= opts.tol * r0 {
            converged = true;
        } else if !(rn <= opts.divergence_factor * r0) {
            diverged = true;
            break;
        }
    }
    SolveReport {
        method: Method::Richardson,
        iterations: converged.then_some(steps),
        steps,
        converged,
        diverged,
        residuals,
        energy_errors: energy,
        seconds: t.elapsed().as_secs_f64(),
        solution: u,
    }
}

/// Left-preconditioned GMRES minimizing `‖B(f - K v)‖₂` over `v⁰ + K_j`, full
/// Arnoldi with modified Gram-Schmidt and Givens rotations.
pub fn gmres(
    problem: &FineProblem,
    b: &Preconditioner,
    u0: &[f64],
    opts: &SolverOptions,
    reference: Option<&[f64]>,
) -> SolveReport {
    let t = Instant::now();
    let f = &problem.f0;
    let r = b.preconditioned_residual(f, u0);
    let beta = norm2(&r);
    let mut residuals = vec![beta];
    let mut energy = reference.map(|re| vec![energy_error(&problem.k0, re, u0)]);
    if beta == 0.0 {
        return SolveReport {
            method: Method::Gmres,
            iterations: Some(0),
            steps: 0,
            converged: true,
            diverged: false,
            residuals,
            energy_errors: energy,
            seconds: t.elapsed().as_secs_f64(),
            solution: u0.to_vec(),
        };
    }
    let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
    // Columns of the (j+1) x j Hessenberg matrix, already rotated.
    let mut h: Vec<Vec<f64>> = Vec::new();
    let mut cs: Vec<f64> = Vec::new();
    let mut sn: Vec<f64> = Vec::new();
    let mut g = vec![beta];
    let mut converged = false;
    let mut diverged = false;
    let mut steps = 0;
    let solution_at = |h: &[Vec<f64>], g: &[f64], v: &[Vec<f64>]| -> Vec<f64> {
        let j = h.len();
        let mut y = vec![0.0; j];
        for i in (0..j).rev() {
            let mut s = g[i];
            for (k, yk) in y.iter().enumerate().skip(i + 1) {
                s -= h[k][i] * yk;
            }
            y[i] = s / h[i][i];
        }
        let mut u = u0.to_vec();
        for (yi, vi) in y.iter().zip(v) {
            for (a, b) in u.iter_mut().zip(vi) {
                *a += yi * b;
            }
        }
        u
    };
    while steps < opts.max_iterations {
        let j = steps;
        let kv = problem.k0.mul_vec(&v[j]);
        let mut w = b.apply(&kv);
        let mut col = vec![0.0; j + 2];
        for (i, vi) in v.iter().enumerate() {
            let hij = dot(&w, vi);
            col[i] = hij;
            for (a, b) in w.iter_mut().zip(vi) {
                *a -= hij * b;
            }
        }
        let hnext = norm2(&w);
        col[j + 1] = hnext;
        for i in 0..j {
            let (a, bb) = (col[i], col[i + 1]);
            col[i] = cs[i] * a + sn[i] * bb;
            col[i + 1] = -sn[i] * a + cs[i] * bb;
        }
        let (a, bb) = (col[j], col[j + 1]);
        let rho = a.hypot(bb);
        let (c, s) = if rho == 0.0 { (1.0, 0.0) } else { (a / rho, bb / rho) };
        col[j] = rho;
        col[j + 1] = 0.0;
        cs.push(c);
        sn.push(s);
        let gj = g[j];
        g[j] = c * gj;
        g.push(-s * gj);
        h.push(col);
        steps += 1;
        let breakdown = hnext <= 1e-14 * beta;
        let need_solution = opts.explicit_residuals || energy.is_some();
        let u = need_solution.then(|| solution_at(&h, &g, &v));
        let rn = if opts.explicit_residuals {
            norm2(&b.preconditioned_residual(f, u.as_ref().expect("solution computed")))
        } else {
            g[j + 1].abs()
        };
        if let (Some(e), Some(re), Some(u)) = (energy.as_mut(), reference, u.as_ref()) {
            e.push(energy_error(&problem.k0, re, u));
        }
        residuals.push(rn);
        if rn <= opts.tol * beta || breakdown {
            converged = rn <= opts.tol * beta || breakdown;
            break;
        }
        if !(rn <= opts.divergence_factor * beta) {
            diverged = true;
            break;
        }
        v.push(w.iter().map(|x| x / hnext).collect());
    }
    let solution = solution_at(&h, &g, &v);
    SolveReport {
        method: Method::Gmres,
        iterations: converged.then_some(steps),
        steps,
        converged,
        diverged,
        residuals,
        energy_errors: energy,
        seconds: t.elapsed().as_secs_f64(),
        solution,
    }
}

pub fn solve(
    method: Method,
    problem: &FineProblem,
    b: &Preconditioner,
    u0: &[f64],
    opts: &SolverOptions,
    reference: Option<&[f64]>,
) -> SolveReport {
    match method {
        Method::Richardson => richardson(problem, b, u0, opts, reference),
        Method::Gmres => gmres(problem, b, u0, opts, reference),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractionCheck {
    /// Largest observed `e_{j+1}/e_j` over the first Richardson steps.
    pub theta_measured: f64,
    /// One-shot relative error of the multiscale method.
    pub theta_bound: f64,
    pub contractive: bool,
    pub within_bound: bool,
}

/// Runs `steps` Richardson iterations from a random start and compares the
/// observed contraction with the one-shot relative error.
pub fn contraction_check(
    problem: &FineProblem,
    b: &Preconditioner,
    reference: &[f64],
    one_shot_error: f64,
    steps: usize,
    seed: u64,
) -> ContractionCheck {
    let u0 = initial_vector(problem, &[], InitialGuess::Random(seed));
    let opts = SolverOptions {
        tol: 0.0,
        max_iterations: steps,
        divergence_factor: f64::INFINITY,
        explicit_residuals: false,
    };
    let rep = richardson(problem, b, &u0, &opts, Some(reference));
    let e = rep.energy_errors.unwrap_or_default();
    let floor = e.first().copied().unwrap_or(0.0) * 1e-11;
    let theta_measured = e
        .windows(2)
        .filter(|w| w[0] > floor)
        .map(|w| w[1] / w[0])
        .fold(0.0, f64::max);
    ContractionCheck {
        theta_measured,
        theta_bound: one_shot_error,
        contractive: theta_measured < 1.0,
        within_bound: theta_measured <= one_shot_error + 0.05,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{constant_field, skyscraper_field};
    use crate::decomposition::{build_decomposition, DecompositionParams};
    use crate::fem::Source;
    use crate::gfem::MultiscaleMethod;
    use crate::local_spaces::{EigenOptions, Variant};
    use crate::mesh::Mesh;

    fn instance(n: usize, p: usize, seed: u64, contrast: f64) -> (FineProblem, Decomposition) {
        let mesh = Mesh::unit(2, n).unwrap();
        let c = if contrast == 1.0 {
            constant_field(&mesh, 1.0).unwrap()
        } else {
            skyscraper_field(&mesh, seed, 2, contrast).unwrap()
        };
        let pr = FineProblem::homogeneous(mesh.clone(), c, Source::Constant(1.0)).unwrap();
        let d = build_decomposition(&mesh, &DecompositionParams::new(vec![p, p], 2)).unwrap();
        (pr, d)
    }

    #[test]
    fn single_subdomain_is_exact_solve() {
        let (p, d) = instance(12, 1, 0, 1e3);
        let b = Preconditioner::new(&p, &d, None).unwrap();
        let rep = richardson(&p, &b, &vec![0.0; p.num_dofs()], &SolverOptions::default(), None);
        assert_eq!(rep.iterations, Some(1));
        let rep = gmres(&p, &b, &vec![0.0; p.num_dofs()], &SolverOptions::default(), None);
        assert_eq!(rep.iterations, Some(1));
    }

    #[test]
    fn linearity_and_error_recurrence() {
        let (p, d) = instance(24, 3, 1, 1e4);
        let m = MultiscaleMethod::new(&p, &d, Variant::Ring, 3, &EigenOptions::default()).unwrap();
        let b = Preconditioner::new(&p, &d, Some(m.coarse_space(&m.uniform(3)).unwrap())).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = p.num_dofs();
        let r1: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r2: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let alpha = 2.5;
        let combo: Vec<f64> = r1.iter().zip(&r2).map(|(a, b)| alpha * a + b).collect();
        let lhs = b.apply(&combo);
        let (b1, b2) = (b.apply(&r1), b.apply(&r2));
        let scale = norm2(&lhs);
        for i in 0..n {
            assert!((lhs[i] - alpha * b1[i] - b2[i]).abs() <= 1e-12 * scale);
        }
        // u^{j+1} - u = (I - BK)(u^j - u).
        let u = p.dofmap.restrict(&p.solve_reference().unwrap());
        let uj: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let step = b.preconditioned_residual(&p.f0, &uj);
        let next: Vec<f64> = uj.iter().zip(&step).map(|(a, s)| a + s).collect();
        let e: Vec<f64> = uj.iter().zip(&u).map(|(a, b)| a - b).collect();
        let bke = b.apply(&p.k0.mul_vec(&e));
        let scale = norm2(&e);
        for i in 0..n {
            let predicted = e[i] - bke[i];
            assert!((next[i] - u[i] - predicted).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn first_iterate_from_zero_is_multiscale_solution() {
        let (p, d) = instance(32, 2, 4, 1e3);
        let m = MultiscaleMethod::new(&p, &d, Variant::Full, 4, &EigenOptions::default()).unwrap();
        let n = m.uniform(4);
        let sol = m.solve(&n).unwrap();
        let b = Preconditioner::new(&p, &d, Some(m.coarse_space(&n).unwrap())).unwrap();
        let opts = SolverOptions {
            max_iterations: 1,
            ..SolverOptions::default()
        };
        let rep = richardson(&p, &b, &vec![0.0; p.num_dofs()], &opts, None);
        let u1 = p.dofmap.prolong(&rep.solution, &p.lift);
        let diff = p.relative_energy_error(&sol.nodal, &u1).unwrap();
        assert!(diff < 1e-9, "{diff}");
    }

    #[test]
    fn gmres_dominates_richardson() {
        for seed in 0..3 {
            let (p, d) = instance(24, 2, seed, 1e5);
            let m = MultiscaleMethod::new(&p, &d, Variant::Ring, 2, &EigenOptions::default()).unwrap();
            let b = Preconditioner::new(&p, &d, Some(m.coarse_space(&m.uniform(2)).unwrap())).unwrap();
            let u0 = initial_vector(&p, &m.particular, InitialGuess::Random(seed));
            let opts = SolverOptions {
                max_iterations: 40,
                explicit_residuals: true,
                ..SolverOptions::default()
            };
            let r = richardson(&p, &b, &u0, &opts, None);
            let g = gmres(&p, &b, &u0, &opts, None);
            assert_eq!(r.residuals[0], g.residuals[0]);
            for (a, bb) in g.residuals.iter().zip(&r.residuals) {
                assert!(*a <= *bb + 1e-12 * r.residuals[0], "{a} > {bb}");
            }
        }
    }

    #[test]
    fn gmres_givens_estimate_matches_explicit_residual() {
        let (p, d) = instance(24, 2, 7, 1e2);
        let b = Preconditioner::new(&p, &d, None).unwrap();
        let u0 = vec![0.0; p.num_dofs()];
        let mut opts = SolverOptions {
            max_iterations: 15,
            ..SolverOptions::default()
        };
        let est = gmres(&p, &b, &u0, &opts, None);
        opts.explicit_residuals = true;
        let exp = gmres(&p, &b, &u0, &opts, None);
        for (a, bb) in est.residuals.iter().zip(&exp.residuals) {
            assert!((a - bb).abs() <= 1e-8 * est.residuals[0]);
        }
    }

    #[test]
    fn coarse_dimension_gives_unit_eigenvalues() {
        // I - BK = (I - π_S)(I - Σ χ_i π_i) annihilates a subspace of dimension ≥ dim S.
        let (p, d) = instance(16, 2, 0, 1.0);
        let m = MultiscaleMethod::new(&p, &d, Variant::Full, 3, &EigenOptions::default()).unwrap();
        let b = Preconditioner::new(&p, &d, Some(m.coarse_space(&m.uniform(3)).unwrap())).unwrap();
        let n = p.num_dofs();
        let mut e = nalgebra::DMatrix::zeros(n, n);
        for j in 0..n {
            let mut x = vec![0.0; n];
            x[j] = 1.0;
            let y = b.apply(&p.k0.mul_vec(&x));
            for i in 0..n {
                e[(i, j)] = x[i] - y[i];
            }
        }
        let sv = e.singular_values();
        let smax = sv.max();
        let null = sv.iter().filter(|&&s| s <= 1e-9 * smax.max(1.0)).count();
        assert!(null >= b.coarse_dim(), "{null} < {}", b.coarse_dim());
    }

    #[test]
    fn contraction_is_bounded_by_one_shot_error() {
        let (p, d) = instance(32, 2, 0, 1.0);
        let m = MultiscaleMethod::new(&p, &d, Variant::Full, 6, &EigenOptions::default()).unwrap();
        let n = m.uniform(6);
        let uh = p.solve_reference().unwrap();
        let err = p.relative_energy_error(&uh, &m.solve(&n).unwrap().nodal).unwrap();
        let b = Preconditioner::new(&p, &d, Some(m.coarse_space(&n).unwrap())).unwrap();
        let c = contraction_check(&p, &b, &p.dofmap.restrict(&uh), err, 20, 9);
        assert!(c.contractive && c.within_bound, "{c:?}");
    }

    #[test]
    fn labels_and_reports() {
        let rep = SolveReport {
            method: Method::Richardson,
            iterations: None,
            steps: 3,
            converged: false,
            diverged: true,
            residuals: vec![2.0, 4.0, 30.0],
            energy_errors: Some(vec![1.0, 0.5, 0.25]),
            seconds: 0.0,
            solution: Vec::new(),
        };
        assert_eq!(rep.iterations_label(), "inf");
        assert_eq!(rep.relative_residuals(), vec![1.0, 2.0, 15.0]);
        assert_eq!(rep.contraction_factors(), vec![0.5, 0.5]);
    }
}
