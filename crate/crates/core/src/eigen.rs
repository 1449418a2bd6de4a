//! Block Lanczos with full reorthogonalization and thick restarts for the
//! dominant eigenpairs of an operator that is self-adjoint in a semidefinite
//! inner product `W`.
//!
//! The intended operator is a shift-inverted pencil `OP = (A - σW)⁻¹ W`
//! restricted to a constrained subspace; its largest eigenvalues `ν` map to the
//! smallest `λ = σ + 1/ν`. Rayleigh–Ritz uses `T = Qᵀ W (OP Q)` with a
//! `W`-orthonormal basis `Q`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::dot;

/// A linear operator self-adjoint with respect to the form `W`.
pub trait PencilOperator: Sync {
    fn dim(&self) -> usize;
    /// `y = OP x`.
    fn apply(&self, x: &[f64], y: &mut [f64]);
    /// `y = W x`.
    fn apply_w(&self, x: &[f64], y: &mut [f64]);
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LanczosOptions {
    pub block_size: usize,
    /// Relative residual `‖OP x - ν x‖_W ≤ tol |ν|`. Pairs whose residual is
    /// already at the roundoff level of the operator (`NOISE_FLOOR · |ν_max|`,
    /// or the measured asymmetry of the projected operator) also count as
    /// converged, so widely spread spectra still terminate.
    pub tol: f64,
    /// Maximal number of block expansions.
    pub max_iterations: usize,
    /// Basis capacity; derived from the request when `None`.
    pub max_basis: Option<usize>,
    /// When the residuals stop decreasing over several restarts, the pairs
    /// are accepted anyway as long as every residual is below this bound.
    pub stagnation_tol: f64,
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        Self {
            block_size: 4,
            tol: 1e-10,
            max_iterations: 500,
            max_basis: None,
            stagnation_tol: 1e-6,
            seed: 0x5eed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LanczosResult {
    /// Eigenvalues of `OP`, descending.
    pub values: Vec<f64>,
    /// `W`-orthonormal eigenvectors.
    pub vectors: Vec<Vec<f64>>,
    /// Relative residuals `‖OP x - ν x‖_W / |ν|`.
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub operator_applications: usize,
}

struct Basis<'a, O: PencilOperator> {
    op: &'a O,
    deflation: Vec<Vec<f64>>,
    deflation_w: Vec<Vec<f64>>,
    q: Vec<Vec<f64>>,
    wq: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
    applications: usize,
}

impl<O: PencilOperator> Basis<'_, O> {
    fn w(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.op.apply_w(x, &mut out);
        out
    }

    fn op(&mut self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.op.apply(x, &mut out);
        self.applications += 1;
        self.project_deflation(&mut out);
        out
    }

    fn project_deflation(&self, v: &mut [f64]) {
        basis_project(&self.deflation, &self.deflation_w, v);
    }

    /// Orthogonalizes the candidates against the basis and each other and
    /// appends the survivors together with their images under `OP`.
    fn extend(&mut self, candidates: Vec<Vec<f64>>) -> usize {
        let mut added = 0;
        for mut v in candidates {
            self.project_deflation(&mut v);
            let w0 = self.w(&v);
            let norm0 = dot(&v, &w0).max(0.0).sqrt();
            if !(norm0 > 0.0) || !norm0.is_finite() {
                continue;
            }
            for _ in 0..2 {
                for (qj, wqj) in self.q.iter().zip(&self.wq) {
                    let c = dot(wqj, &v);
                    for (a, b) in v.iter_mut().zip(qj) {
                        *a -= c * b;
                    }
                }
                self.project_deflation(&mut v);
            }
            let wv = self.w(&v);
            let norm = dot(&v, &wv).max(0.0).sqrt();
            if norm <= 1e-10 * norm0 {
                continue;
            }
            let inv = 1.0 / norm;
            let v: Vec<f64> = v.iter().map(|x| x * inv).collect();
            let wv: Vec<f64> = wv.iter().map(|x| x * inv).collect();
            let yv = self.op(&v);
            self.q.push(v);
            self.wq.push(wv);
            self.y.push(yv);
            added += 1;
        }
        added
    }

    fn random_block(&mut self, rng: &mut ChaCha8Rng, count: usize) -> Vec<Vec<f64>> {
        let n = self.op.dim();
        (0..count)
            .map(|_| {
                let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
                self.op(&x)
            })
            .collect()
    }
}

struct Ritz {
    values: Vec<f64>,
    coeffs: DMatrix<f64>,
    /// Largest entry of the skew part of the projected matrix; zero for an
    /// exactly self-adjoint operator, so it measures the roundoff in `OP`.
    skew: f64,
}

fn rayleigh_ritz<O: PencilOperator>(basis: &Basis<'_, O>) -> Ritz {
    let m = basis.q.len();
    let mut t = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            t[(i, j)] = dot(&basis.wq[i], &basis.y[j]);
        }
    }
    let skew = (&t - t.transpose()).amax() * 0.5;
    let t = (&t + t.transpose()) * 0.5;
    let eig = t.symmetric_eigen();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut coeffs = DMatrix::zeros(m, m);
    for (c, &k) in order.iter().enumerate() {
        coeffs.set_column(c, &eig.eigenvectors.column(k));
    }
    Ritz {
        values: order.iter().map(|&k| eig.eigenvalues[k]).collect(),
        coeffs,
        skew,
    }
}

fn combine(vectors: &[Vec<f64>], coeffs: &DMatrix<f64>, col: usize) -> Vec<f64> {
    let n = vectors[0].len();
    let mut out = vec![0.0; n];
    for (j, v) in vectors.iter().enumerate() {
        let c = coeffs[(j, col)];
        if c != 0.0 {
            for (o, x) in out.iter_mut().zip(v) {
                *o += c * x;
            }
        }
    }
    out
}

/// Residual level, relative to the largest Ritz value, below which further
/// iteration cannot make progress in double precision even for an exactly
/// self-adjoint operator.
pub const NOISE_FLOOR: f64 = 1e4 * f64::EPSILON;

/// Multiple of the measured asymmetry of the projected operator accepted as
/// residual floor.
const SKEW_FACTOR: f64 = 10.0;

/// Pairs with `ν ≥ SKEW_RANGE · ν_max` may use the asymmetry floor.
const SKEW_RANGE: f64 = 1e-3;

/// Rayleigh-Ritz evaluations without halving the worst residual after which
/// the iteration counts as stagnated.
const STALL_LIMIT: usize = 12;

/// Computes the `nev` largest eigenpairs of `op` in the `W`-orthogonal
/// complement of `deflation` (a `W`-orthonormal set of known eigenvectors).
///
/// Leading pairs that have converged are locked at restarts: they join the
/// deflation set, which also removes the roundoff that `OP` amplifies along
/// its dominant directions from every further application.
pub fn largest_eigenpairs<O: PencilOperator>(
    op: &O,
    nev: usize,
    deflation: &[Vec<f64>],
    opts: &LanczosOptions,
) -> Result<LanczosResult> {
    let n = op.dim();
    if nev == 0 {
        return Ok(LanczosResult {
            values: Vec::new(),
            vectors: Vec::new(),
            residuals: Vec::new(),
            iterations: 0,
            operator_applications: 0,
        });
    }
    let p = opts.block_size.max(1).min(n);
    let capacity = opts
        .max_basis
        .unwrap_or_else(|| (2 * nev + 2 * p).max(nev + 4 * p).max(20))
        .max(nev + p)
        .min(n);
    let mut basis = Basis {
        op,
        deflation: deflation.to_vec(),
        deflation_w: Vec::new(),
        q: Vec::new(),
        wq: Vec::new(),
        y: Vec::new(),
        applications: 0,
    };
    basis.deflation_w = deflation.iter().map(|d| basis.w(d)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);

    let mut locked_values: Vec<f64> = Vec::new();
    let mut locked_vectors: Vec<Vec<f64>> = Vec::new();
    let mut locked_residuals: Vec<f64> = Vec::new();

    let start = basis.random_block(&mut rng, p);
    basis.extend(start);
    let mut exhausted = false;
    let mut iterations = 0;
    let mut best_worst = f64::INFINITY;
    let mut stalled = 0usize;
    loop {
        let want = nev - locked_values.len();
        let m = basis.q.len();
        if m >= want.min(capacity) || exhausted {
            let ritz = rayleigh_ritz(&basis);
            let k = want.min(m);
            let mut residuals = Vec::with_capacity(k);
            let mut resid_vecs = Vec::with_capacity(k);
            for c in 0..k {
                let x = combine(&basis.q, &ritz.coeffs, c);
                let ox = combine(&basis.y, &ritz.coeffs, c);
                let r: Vec<f64> = ox.iter().zip(&x).map(|(a, b)| a - ritz.values[c] * b).collect();
                let wr = basis.w(&r);
                let rn = dot(&r, &wr).max(0.0).sqrt();
                residuals.push(rn / ritz.values[c].abs().max(f64::MIN_POSITIVE));
                resid_vecs.push(r);
            }
            // Absolute residual level that roundoff in `OP` does not let us
            // beat. The measured asymmetry only counts for pairs comparable to
            // the dominant one; smaller pairs wait until locking has removed
            // the dominant directions and with them most of the noise.
            let nu0 = ritz.values[0].abs();
            let done: Vec<bool> = (0..k)
                .map(|c| {
                    let nu = ritz.values[c].abs().max(f64::MIN_POSITIVE);
                    let mut floor = NOISE_FLOOR * nu0;
                    if nu >= SKEW_RANGE * nu0 {
                        floor = floor.max(SKEW_FACTOR * ritz.skew);
                    }
                    residuals[c] <= opts.tol.max(floor / nu)
                })
                .collect();
            let worst = residuals.iter().cloned().fold(0.0, f64::max);
            if worst < 0.5 * best_worst {
                best_worst = worst;
                stalled = 0;
            } else {
                stalled += 1;
            }
            let stagnated = k == want && stalled >= STALL_LIMIT && worst <= opts.stagnation_tol;
            if stagnated && !done.iter().all(|&d| d) {
                log::warn!("lanczos stagnated at residual {worst:.2e}; accepting {nev} pairs");
            }
            let converged = k == want && (stagnated || done.iter().all(|&d| d));
            log::trace!(
                "lanczos it {iterations} basis {m}, {} locked: {} of {k} done, worst {worst:.2e}",
                locked_values.len(),
                done.iter().filter(|&&d| d).count(),
            );
            if converged || exhausted {
                if k < want {
                    return Err(Error::EigenNotConverged {
                        requested: nev,
                        converged: locked_values.len() + k,
                        residual: f64::INFINITY,
                    });
                }
                locked_values.extend_from_slice(&ritz.values[..k]);
                locked_vectors.extend((0..k).map(|c| combine(&basis.q, &ritz.coeffs, c)));
                locked_residuals.extend(residuals);
                return Ok(LanczosResult {
                    values: locked_values,
                    vectors: locked_vectors,
                    residuals: locked_residuals,
                    iterations,
                    operator_applications: basis.applications,
                });
            }
            if iterations >= opts.max_iterations {
                let good = locked_values.len() + done.iter().take_while(|&&d| d).count();
                return Err(Error::EigenNotConverged {
                    requested: nev,
                    converged: good,
                    residual: worst,
                });
            }
            let lock = done.iter().take_while(|&&d| d).count().min(k.saturating_sub(1));
            if m + p > capacity || lock > 0 {
                // Lock the converged leading pairs, then thick restart with the
                // best remaining Ritz vectors and the residuals of the
                // unconverged wanted ones.
                for c in 0..lock {
                    let x = combine(&basis.q, &ritz.coeffs, c);
                    let wx = combine(&basis.wq, &ritz.coeffs, c);
                    locked_values.push(ritz.values[c]);
                    locked_residuals.push(residuals[c]);
                    basis.deflation.push(x.clone());
                    basis.deflation_w.push(wx);
                    locked_vectors.push(x);
                }
                let want = nev - locked_values.len();
                let keep = (want + p).min(m.saturating_sub(p + lock)).max(want.min(m - lock));
                let cols = lock..lock + keep;
                basis.q = cols.clone().map(|c| combine(&basis.q, &ritz.coeffs, c)).collect();
                basis.wq = cols.clone().map(|c| combine(&basis.wq, &ritz.coeffs, c)).collect();
                basis.y = cols.map(|c| combine(&basis.y, &ritz.coeffs, c)).collect();
                if lock > 0 {
                    for y in basis.y.iter_mut() {
                        basis_project(&basis.deflation, &basis.deflation_w, y);
                    }
                    best_worst = f64::INFINITY;
                    stalled = 0;
                }
                let candidates: Vec<Vec<f64>> = resid_vecs
                    .into_iter()
                    .zip(&done)
                    .skip(lock)
                    .filter(|(_, &d)| !d)
                    .map(|(v, _)| v)
                    .take(p)
                    .collect();
                iterations += 1;
                if basis.extend(candidates) == 0 {
                    let fresh = basis.random_block(&mut rng, p);
                    if basis.extend(fresh) == 0 {
                        exhausted = true;
                    }
                }
                continue;
            }
        }
        // Regular block Krylov expansion from the newest block.
        iterations += 1;
        let start = basis.q.len().saturating_sub(p);
        let candidates: Vec<Vec<f64>> = basis.y[start..].to_vec();
        if basis.extend(candidates) == 0 {
            let mut added = 0;
            for _ in 0..3 {
                let fresh = basis.random_block(&mut rng, p);
                added = basis.extend(fresh);
                if added > 0 {
                    break;
                }
            }
            if added == 0 {
                exhausted = true;
            }
        }
    }
}

fn basis_project(deflation: &[Vec<f64>], deflation_w: &[Vec<f64>], v: &mut [f64]) {
    for _ in 0..2 {
        for (d, wd) in deflation.iter().zip(deflation_w) {
            let c = dot(wd, v);
            for (a, b) in v.iter_mut().zip(d) {
                *a -= c * b;
            }
        }
    }
}
