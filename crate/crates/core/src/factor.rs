//! Sparse LU with threshold partial pivoting and a fill-reducing column ordering.
//!
//! Left-looking Gilbert-Peierls elimination: column `k` of the factors is obtained
//! from a sparse triangular solve with the already computed part of `L`, whose
//! nonzero pattern is found by a depth-first search. The column preorder comes from
//! approximate minimum degree on the pattern of `A + A^T`; a diagonal pivot is kept
//! whenever it is within `pivot_tolerance` of the column maximum, so symmetric
//! matrices keep their symmetric ordering and the fill statistics stay comparable.
//! Indefinite (saddle-point) systems are handled through the row pivoting.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

const NONE: usize = usize::MAX;

/// Fill-reducing ordering used before elimination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    #[default]
    Amd,
    Natural,
    /// For saddle-point systems: minimum degree on the primal block, each
    /// multiplier eliminated right after the unknown it belongs to. Callers
    /// that know the pairing build it with [`pair_multipliers`]; without that
    /// information it behaves like `Amd`.
    Paired,
    /// Like `Paired`, but the primal block is ordered by geometric nested
    /// dissection of the lattice nodes ([`nested_dissection`]). Falls back to
    /// `Amd` when no coordinates are available.
    NestedDissection,
}

#[derive(Debug, Clone, Copy)]
pub struct LuOptions {
    pub ordering: Ordering,
    /// Diagonal preference threshold in (0, 1]; 1 means plain partial pivoting.
    pub pivot_tolerance: f64,
    /// Pivots below `singular_tolerance * max|A|` are reported as singular.
    pub singular_tolerance: f64,
}

impl Default for LuOptions {
    fn default() -> Self {
        Self {
            ordering: Ordering::Amd,
            pivot_tolerance: 0.1,
            singular_tolerance: 1e-14,
        }
    }
}

/// Factor sparsity summary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FillStats {
    pub n: usize,
    pub nnz_matrix: usize,
    pub nnz_l: usize,
    pub nnz_u: usize,
}

impl FillStats {
    /// Average number of nonzeros per row of `L` and `U` together.
    pub fn nnz_per_row(&self) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        (self.nnz_l + self.nnz_u) as f64 / self.n as f64
    }

    /// Entries created beyond the pattern of the input matrix (the diagonal of
    /// the unit `L` is not counted).
    pub fn fill_in(&self) -> isize {
        (self.nnz_l + self.nnz_u) as isize - self.n as isize - self.nnz_matrix as isize
    }
}

/// `P A Q = L U` with unit lower `L`.
#[derive(Debug, Clone)]
pub struct SparseLu {
    n: usize,
    /// `q[k]`: original column eliminated at step `k`.
    q: Vec<usize>,
    /// `pinv[i]`: step at which original row `i` became pivotal.
    pinv: Vec<usize>,
    lp: Vec<usize>,
    li: Vec<usize>,
    lx: Vec<f64>,
    up: Vec<usize>,
    ui: Vec<usize>,
    ux: Vec<f64>,
    stats: FillStats,
}

struct Csc {
    colptr: Vec<usize>,
    rowind: Vec<usize>,
    values: Vec<f64>,
}

impl SparseLu {
    pub fn factorize(a: &CsrMatrix) -> Result<Self> {
        Self::factorize_with(a, LuOptions::default())
    }

    pub fn factorize_with(a: &CsrMatrix, opts: LuOptions) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!("cannot factorize {}x{} matrix", n, a.ncols())));
        }
        let t = a.transpose();
        let csc = Csc {
            colptr: t.indptr().to_vec(),
            rowind: t.indices().to_vec(),
            values: t.values().to_vec(),
        };
        let q = match opts.ordering {
            Ordering::Natural => (0..n).collect(),
            Ordering::Amd | Ordering::Paired | Ordering::NestedDissection => amd_order(n, &csc)?,
        };
        Self::factorize_csc(a, csc, q, opts)
    }

    /// Factorizes with a caller-supplied column order (`q[k]` is eliminated at step `k`).
    pub fn factorize_ordered(a: &CsrMatrix, q: Vec<usize>, opts: LuOptions) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n || q.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "order of length {} for a {}x{} matrix",
                q.len(),
                n,
                a.ncols()
            )));
        }
        let mut seen = vec![false; n];
        for &c in &q {
            if c >= n || std::mem::replace(&mut seen[c], true) {
                return Err(Error::DimensionMismatch("column order is not a permutation".into()));
            }
        }
        let t = a.transpose();
        let csc = Csc {
            colptr: t.indptr().to_vec(),
            rowind: t.indices().to_vec(),
            values: t.values().to_vec(),
        };
        Self::factorize_csc(a, csc, q, opts)
    }

    fn factorize_csc(a: &CsrMatrix, csc: Csc, q: Vec<usize>, opts: LuOptions) -> Result<Self> {
        let threshold = opts.singular_tolerance * a.max_abs();
        let mut lu = Self::eliminate(&csc, q, opts.pivot_tolerance.clamp(f64::MIN_POSITIVE, 1.0), threshold)?;
        lu.stats.nnz_matrix = a.nnz();
        Ok(lu)
    }

    fn eliminate(a: &Csc, q: Vec<usize>, tol: f64, threshold: f64) -> Result<Self> {
        let n = q.len();
        let est = 4 * a.rowind.len() + n;
        let mut lp = vec![0usize; n + 1];
        let mut up = vec![0usize; n + 1];
        let mut li: Vec<usize> = Vec::with_capacity(est);
        let mut lx: Vec<f64> = Vec::with_capacity(est);
        let mut ui: Vec<usize> = Vec::with_capacity(est);
        let mut ux: Vec<f64> = Vec::with_capacity(est);
        let mut pinv = vec![NONE; n];
        let mut x = vec![0.0f64; n];
        // xi[0..n] holds the reach output, xi[n..2n] is the DFS stack
        let mut xi = vec![0usize; 2 * n];
        let mut pstack = vec![0usize; n];
        let mut mark = vec![NONE; n];

        for k in 0..n {
            lp[k] = li.len();
            up[k] = ui.len();
            let col = q[k];
            let (b0, b1) = (a.colptr[col], a.colptr[col + 1]);

            // reach: topological order of the pattern of L \ A(:,col)
            let mut top = n;
            for p in b0..b1 {
                let start = a.rowind[p];
                if mark[start] == k {
                    continue;
                }
                top = dfs(start, k, &lp, &li, &pinv, &mut mark, &mut xi, &mut pstack, top, n);
            }
            for &i in &xi[top..n] {
                x[i] = 0.0;
            }
            for p in b0..b1 {
                x[a.rowind[p]] = a.values[p];
            }
            for px in top..n {
                let j = xi[px];
                let jcol = pinv[j];
                if jcol == NONE {
                    continue;
                }
                let xj = x[j];
                if xj == 0.0 {
                    continue;
                }
                // first entry of each L column is the unit diagonal
                for p in lp[jcol] + 1..lp[jcol + 1] {
                    x[li[p]] -= lx[p] * xj;
                }
            }

            let mut ipiv = NONE;
            let mut amax = -1.0f64;
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    let t = x[i].abs();
                    if t > amax {
                        amax = t;
                        ipiv = i;
                    }
                } else {
                    ui.push(pinv[i]);
                    ux.push(x[i]);
                }
            }
            if ipiv == NONE || amax <= threshold || !amax.is_finite() {
                return Err(Error::SingularMatrix { pivot: k });
            }
            if pinv[col] == NONE && x[col].abs() >= amax * tol {
                ipiv = col;
            }
            let pivot = x[ipiv];
            ui.push(k);
            ux.push(pivot);
            pinv[ipiv] = k;
            li.push(ipiv);
            lx.push(1.0);
            for &i in &xi[top..n] {
                if pinv[i] == NONE {
                    li.push(i);
                    lx.push(x[i] / pivot);
                }
                x[i] = 0.0;
            }
        }
        lp[n] = li.len();
        up[n] = ui.len();
        for r in li.iter_mut() {
            *r = pinv[*r];
        }
        let stats = FillStats {
            n,
            nnz_matrix: 0,
            nnz_l: li.len(),
            nnz_u: ui.len(),
        };
        Ok(Self {
            n,
            q,
            pinv,
            lp,
            li,
            lx,
            up,
            ui,
            ux,
            stats,
        })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn stats(&self) -> FillStats {
        self.stats
    }

    /// Nonzeros of `L` per row, in pivot order.
    pub fn l_row_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n];
        for &r in &self.li {
            c[r] += 1;
        }
        c
    }

    /// Nonzeros of `U` per row, in pivot order.
    pub fn u_row_counts(&self) -> Vec<usize> {
        let mut c = vec![0usize; self.n];
        for &r in &self.ui {
            c[r] += 1;
        }
        c
    }

    pub fn column_order(&self) -> &[usize] {
        &self.q
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        let mut work = vec![0.0; self.n];
        self.solve_in_place(&mut x, &mut work);
        x
    }

    /// Overwrites `b` with `A^{-1} b`; `work` must have length `dim()`.
    pub fn solve_in_place(&self, b: &mut [f64], work: &mut [f64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        assert_eq!(work.len(), n);
        for i in 0..n {
            work[self.pinv[i]] = b[i];
        }
        for k in 0..n {
            let yk = work[k];
            if yk != 0.0 {
                for p in self.lp[k] + 1..self.lp[k + 1] {
                    work[self.li[p]] -= self.lx[p] * yk;
                }
            }
        }
        for k in (0..n).rev() {
            let diag = self.up[k + 1] - 1;
            let yk = work[k] / self.ux[diag];
            work[k] = yk;
            if yk != 0.0 {
                for p in self.up[k]..diag {
                    work[self.ui[p]] -= self.ux[p] * yk;
                }
            }
        }
        for k in 0..n {
            b[self.q[k]] = work[k];
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    start: usize,
    stamp: usize,
    lp: &[usize],
    li: &[usize],
    pinv: &[usize],
    mark: &mut [usize],
    xi: &mut [usize],
    pstack: &mut [usize],
    mut top: usize,
    n: usize,
) -> usize {
    let stack = n;
    let mut head = 0usize;
    xi[stack] = start;
    while head != NONE {
        let j = xi[stack + head];
        let jcol = pinv[j];
        if mark[j] != stamp {
            mark[j] = stamp;
            pstack[head] = if jcol == NONE { 0 } else { lp[jcol] + 1 };
        }
        let mut done = true;
        if jcol != NONE {
            let end = lp[jcol + 1];
            let mut p = pstack[head];
            while p < end {
                let i = li[p];
                p += 1;
                if mark[i] == stamp {
                    continue;
                }
                pstack[head] = p;
                head += 1;
                xi[stack + head] = i;
                done = false;
                break;
            }
            if done {
                pstack[head] = end;
            }
        }
        if done {
            top -= 1;
            xi[top] = j;
            head = if head == 0 { NONE } else { head - 1 };
        }
    }
    top
}

/// Minimum degree order of a structurally symmetric matrix.
pub fn amd_permutation(a: &CsrMatrix) -> Result<Vec<usize>> {
    let n = a.nrows();
    let at = a.transpose();
    let sym = Csc {
        colptr: at.indptr().to_vec(),
        rowind: at.indices().to_vec(),
        values: Vec::new(),
    };
    amd_order(n, &sym)
}

/// Column order for `[[A, Bᵀ], [B, 0]]` with `A` of size `n`, where row `r`
/// of `B` belongs to primal unknown `owner[r]`: the primal order with
/// multiplier `r` placed directly after its owner, so that every pivot pair
/// forms a nonsingular 2x2 block.
pub fn pair_multipliers(primal: &[usize], owner: &[usize]) -> Result<Vec<usize>> {
    let n = primal.len();
    let mut follower = vec![NONE; n];
    for (r, &o) in owner.iter().enumerate() {
        if o >= n || follower[o] != NONE {
            return Err(Error::DimensionMismatch(format!("multiplier {r} has an invalid owner {o}")));
        }
        follower[o] = n + r;
    }
    let mut q = Vec::with_capacity(n + owner.len());
    for &u in primal {
        q.push(u);
        if follower[u] != NONE {
            q.push(follower[u]);
        }
    }
    Ok(q)
}

const DISSECTION_LEAF: usize = 16;
/// A cut must leave at least `1 / DISSECTION_BALANCE` of the points on each side.
const DISSECTION_BALANCE: usize = 6;

/// Nested dissection of lattice points whose graph couples points at
/// Chebyshev distance one (the Q1 stencil). Every coordinate plane is a
/// separator; each step takes the smallest one among the planes that leave at
/// least a sixth of the points on either side, and orders it after both halves.
pub fn nested_dissection(coords: &[[usize; 3]]) -> Vec<usize> {
    let mut order = Vec::with_capacity(coords.len());
    let mut all: Vec<usize> = (0..coords.len()).collect();
    dissect(coords, &mut all, &mut order);
    order
}

fn dissect(coords: &[[usize; 3]], set: &mut [usize], order: &mut Vec<usize>) {
    if set.len() <= DISSECTION_LEAF {
        order.extend_from_slice(set);
        return;
    }
    let mut lo = [usize::MAX; 3];
    let mut hi = [0; 3];
    for &p in set.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(coords[p][k]);
            hi[k] = hi[k].max(coords[p][k]);
        }
    }
    let n = set.len();
    // (separator size, imbalance, axis, plane)
    let mut best: Option<(usize, usize, usize, usize)> = None;
    for k in 0..3 {
        if hi[k] - lo[k] < 2 {
            continue;
        }
        let mut hist = vec![0usize; hi[k] - lo[k] + 1];
        for &p in set.iter() {
            hist[coords[p][k] - lo[k]] += 1;
        }
        let mut below = hist[0];
        for c in 1..hist.len() - 1 {
            let above = n - below - hist[c];
            if DISSECTION_BALANCE * below.min(above) >= n {
                let cand = (hist[c], below.abs_diff(above), k, lo[k] + c);
                if best.is_none_or(|b| (cand.0, cand.1) < (b.0, b.1)) {
                    best = Some(cand);
                }
            }
            below += hist[c];
        }
    }
    let (axis, cut) = match best {
        Some((_, _, axis, cut)) => (axis, cut),
        None => {
            let axis = (0..3).max_by_key(|&k| (hi[k] - lo[k], 3 - k)).unwrap_or(0);
            if hi[axis] - lo[axis] < 2 {
                order.extend_from_slice(set);
                return;
            }
            set.sort_by_key(|&p| coords[p][axis]);
            (axis, coords[set[n / 2]][axis].clamp(lo[axis] + 1, hi[axis] - 1))
        }
    };
    set.sort_by_key(|&p| (coords[p][axis], p));
    let left = set.partition_point(|&p| coords[p][axis] < cut);
    let right = set.partition_point(|&p| coords[p][axis] <= cut);
    let (a, rest) = set.split_at_mut(left);
    let (sep, b) = rest.split_at_mut(right - left);
    dissect(coords, a, order);
    dissect(coords, b, order);
    sep.sort_unstable();
    order.extend_from_slice(sep);
}

fn amd_order(n: usize, a: &Csc) -> Result<Vec<usize>> {
    if n == 0 {
        return Ok(Vec::new());
    }
    let control = amd::Control::default();
    let (p, _pinv, _info) = amd::order(n, &a.colptr, &a.rowind, &control)
        .map_err(|s| Error::DimensionMismatch(format!("AMD ordering failed: {s:?}")))?;
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    fn tridiag(n: usize) -> CsrMatrix {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 2.0);
            if i + 1 < n {
                b.push(i, i + 1, -1.0);
                b.push(i + 1, i, -1.0);
            }
        }
        b.build().with_symmetry_flag(true)
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul_vec(x);
        let r: f64 = ax.iter().zip(b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt();
        r / b.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_has_one_entry_per_row() {
        let lu = SparseLu::factorize(&CsrMatrix::identity(7)).unwrap();
        assert!(lu.l_row_counts().iter().all(|&c| c == 1));
        assert!(lu.u_row_counts().iter().all(|&c| c == 1));
        assert_eq!(lu.stats().nnz_per_row(), 2.0);
    }

    #[test]
    fn tridiagonal_has_no_fill() {
        for ordering in [Ordering::Natural, Ordering::Amd] {
            let a = tridiag(10);
            let lu = SparseLu::factorize_with(&a, LuOptions { ordering, ..Default::default() }).unwrap();
            assert_eq!(lu.stats().fill_in(), 0, "{ordering:?}");
            if ordering == Ordering::Natural {
                assert!(lu.l_row_counts().iter().all(|&c| c <= 2));
                assert!(lu.u_row_counts().iter().all(|&c| c <= 2));
            }
            let b: Vec<f64> = (0..10).map(|i| (i as f64).sin() + 1.0).collect();
            assert!(residual(&a, &lu.solve(&b), &b) < 1e-13);
        }
    }

    #[test]
    fn saddle_point_with_zero_diagonal() {
        // [[2, 0, 1], [0, 3, 1], [1, 1, 0]]
        let a = CsrMatrix::from_triplets(
            3,
            3,
            vec![(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (1, 2, 1.0), (2, 0, 1.0), (2, 1, 1.0)],
        );
        let lu = SparseLu::factorize(&a).unwrap();
        let b = [1.0, 2.0, 3.0];
        assert!(residual(&a, &lu.solve(&b), &b) < 1e-14);
    }

    #[test]
    fn zero_leading_pivot_is_pivoted_away() {
        let a = CsrMatrix::from_triplets(2, 2, vec![(0, 1, 1.0), (1, 0, 1.0)]);
        let lu = SparseLu::factorize_with(&a, LuOptions { ordering: Ordering::Natural, ..Default::default() }).unwrap();
        assert_eq!(lu.solve(&[3.0, 5.0]), vec![5.0, 3.0]);
    }

    #[test]
    fn singular_matrix_reports_pivot() {
        let a = CsrMatrix::from_triplets(3, 3, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        match SparseLu::factorize_with(&a, LuOptions { ordering: Ordering::Natural, ..Default::default() }) {
            Err(Error::SingularMatrix { pivot }) => assert_eq!(pivot, 1),
            other => panic!("expected singular error, got {other:?}"),
        }
        let empty_col = CsrMatrix::from_triplets(2, 2, vec![(0, 0, 1.0), (1, 0, 1.0)]);
        assert!(matches!(SparseLu::factorize(&empty_col), Err(Error::SingularMatrix { .. })));
    }

    #[test]
    fn random_unsymmetric_matches_dense() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 4.0 + rng.random::<f64>());
            for _ in 0..3 {
                let j = rng.random_range(0..n);
                b.push(i, j, rng.random::<f64>() - 0.5);
            }
        }
        let a = b.build();
        let lu = SparseLu::factorize(&a).unwrap();
        let rhs: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let x = lu.solve(&rhs);
        let dense = a.to_dense().lu().solve(&nalgebra::DVector::from_column_slice(&rhs)).unwrap();
        for i in 0..n {
            assert!((x[i] - dense[i]).abs() < 1e-10 * dense.amax());
        }
    }

    fn lattice(n: usize) -> Vec<[usize; 3]> {
        let mut pts = Vec::new();
        for z in 0..n {
            for y in 0..n {
                for x in 0..n {
                    pts.push([x, y, z]);
                }
            }
        }
        pts
    }

    #[test]
    fn nested_dissection_is_a_permutation_with_separators_last() {
        let pts = lattice(9);
        let q = nested_dissection(&pts);
        let mut sorted = q.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..pts.len()).collect::<Vec<_>>());
        // The top separator is a full coordinate plane of the cube.
        let top = &q[q.len() - 81..];
        let axis = (0..3).find(|&k| top.iter().all(|&p| pts[p][k] == pts[top[0]][k])).expect("planar separator");
        assert_eq!(pts[top[0]][axis], 4);
        assert_eq!(nested_dissection(&pts), q);
    }

    #[test]
    fn nested_dissection_of_a_hollow_box_cuts_through_the_hole() {
        let pts: Vec<[usize; 3]> = lattice(12)
            .into_iter()
            .filter(|p| p.iter().any(|&c| c < 3 || c > 8))
            .collect();
        let q = nested_dissection(&pts);
        let last = pts[q[q.len() - 1]];
        let axis = (0..3).find(|&k| q[q.len() - 20..].iter().all(|&p| pts[p][k] == last[k])).unwrap();
        assert!((3..=8).contains(&last[axis]), "cut at {} along axis {axis}", last[axis]);
    }

    #[test]
    fn paired_multipliers_follow_their_owner() {
        let q = pair_multipliers(&[2, 0, 1], &[1, 2]).unwrap();
        assert_eq!(q, vec![2, 4, 0, 1, 3]);
        assert!(pair_multipliers(&[0, 1], &[1, 1]).is_err());
    }

    #[test]
    fn factorize_ordered_rejects_non_permutations() {
        let a = tridiag(4);
        assert!(SparseLu::factorize_ordered(&a, vec![0, 1, 1, 3], LuOptions::default()).is_err());
        let lu = SparseLu::factorize_ordered(&a, vec![3, 1, 0, 2], LuOptions::default()).unwrap();
        let x = lu.solve(&[1.0, 0.0, 0.0, 1.0]);
        assert!(residual(&a, &x, &[1.0, 0.0, 0.0, 1.0]) < 1e-12);
    }
}
