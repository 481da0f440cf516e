//! Sparse direct LU with threshold partial pivoting.
//!
//! Left-looking Gilbert–Peierls factorization `P S A S Q = L U`. `S` is a
//! symmetric diagonal equilibration, `Q` an approximate-minimum-degree
//! ordering of the symmetrized pattern, and `P` is chosen column by column:
//! the diagonal is kept under a loose threshold, otherwise the sparsest row
//! passing the strict threshold is taken. Factorization and solves are
//! sequential, so results are bitwise reproducible.

use std::cell::Cell;
use std::sync::Arc;

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::sparse::linalg::amd;
use faer::sparse::SymbolicSparseColMatRef;
use thiserror::Error;

use crate::scalar::Real;
use crate::sparse::{CsrMatrix, CsrPattern};

/// A diagonal entry is kept as pivot if `|a| >= DIAGONAL_THRESHOLD * max`
/// over the candidate column.
pub const DIAGONAL_THRESHOLD: f64 = 0.001;
/// Off-diagonal pivots must satisfy `|a| >= PIVOT_THRESHOLD * max`.
pub const PIVOT_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinsolveError {
    /// `pivot` is the original column index that had no acceptable pivot.
    #[error("matrix is numerically singular at column {pivot}")]
    SingularMatrix { pivot: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("fill-reducing ordering failed: {0}")]
    Ordering(String),
}

thread_local! {
    static FACTORIZATIONS: Cell<u64> = const { Cell::new(0) };
    static SOLVES: Cell<u64> = const { Cell::new(0) };
}

/// Factorization and solve counts on the current thread.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub factorizations: u64,
    pub solves: u64,
}

pub fn counters() -> Counters {
    Counters {
        factorizations: FACTORIZATIONS.with(Cell::get),
        solves: SOLVES.with(Cell::get),
    }
}

pub fn reset_counters() {
    FACTORIZATIONS.with(|c| c.set(0));
    SOLVES.with(|c| c.set(0));
}

/// Column ordering, computed once per sparsity pattern.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ordering {
    n: usize,
    perm: Vec<usize>,
}

impl Ordering {
    pub fn identity(n: usize) -> Self {
        Ordering {
            n,
            perm: (0..n).collect(),
        }
    }

    /// AMD on the pattern of `A + A^T`.
    pub fn amd(pattern: &CsrPattern) -> Result<Self, LinsolveError> {
        let n = pattern.n();
        if n == 0 {
            return Ok(Ordering::identity(0));
        }
        // The CSR arrays of A are the CSC arrays of A^T, which has the same
        // symmetrized pattern.
        let sym = SymbolicSparseColMatRef::new_checked(
            n,
            n,
            pattern.row_ptr(),
            None,
            pattern.col_idx(),
        );
        let mut perm = vec![0usize; n];
        let mut perm_inv = vec![0usize; n];
        let mut mem = MemBuffer::new(amd::order_scratch::<usize>(n, pattern.nnz()));
        amd::order(
            &mut perm,
            &mut perm_inv,
            sym,
            amd::Control::default(),
            MemStack::new(&mut mem),
        )
        .map_err(|e| LinsolveError::Ordering(format!("{e:?}")))?;
        Ok(Ordering { n, perm })
    }

    pub fn perm(&self) -> &[usize] {
        &self.perm
    }
}

/// Compressed columns, used for `L` and `U`.
#[derive(Debug, Clone, Default)]
struct Csc<T> {
    ptr: Vec<usize>,
    idx: Vec<usize>,
    val: Vec<T>,
}

impl<T: Copy> Csc<T> {
    fn col(&self, j: usize) -> (&[usize], &[T]) {
        let (a, b) = (self.ptr[j], self.ptr[j + 1]);
        (&self.idx[a..b], &self.val[a..b])
    }
}

/// Reusable LU factors of one matrix.
#[derive(Debug, Clone)]
pub struct Factorization<T> {
    n: usize,
    /// Unit lower factor, diagonal stored first in each column.
    l: Csc<T>,
    /// Upper factor, diagonal stored last in each column.
    u: Csc<T>,
    /// `pinv[i]` is the pivot step that eliminated original row `i`.
    pinv: Vec<usize>,
    /// Symmetric equilibration: the factors are of `S A S`.
    scale: Vec<T>,
    q: Arc<Ordering>,
    id: u64,
}

/// Factorizes `a` with a fresh AMD ordering.
pub fn factorize<T: Real>(a: &CsrMatrix<T>) -> Result<Factorization<T>, LinsolveError> {
    let ord = Arc::new(Ordering::amd(a.pattern())?);
    factorize_with(a, ord)
}

/// Factorizes `a` reusing a column ordering computed for its pattern.
pub fn factorize_with<T: Real>(
    a: &CsrMatrix<T>,
    ordering: Arc<Ordering>,
) -> Result<Factorization<T>, LinsolveError> {
    let n = a.n();
    if ordering.n != n {
        return Err(LinsolveError::DimensionMismatch {
            expected: n,
            got: ordering.n,
        });
    }
    let scale = equilibrate(a);
    let mut csc = to_csc(a);
    for j in 0..n {
        for p in csc.ptr[j]..csc.ptr[j + 1] {
            csc.val[p] *= scale[csc.idx[p]] * scale[j];
        }
    }
    let anorm = csc.val.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    let tiny = T::epsilon() * anorm;
    let tol = T::lit(PIVOT_THRESHOLD);
    let q = &ordering.perm;
    let row_nnz: Vec<usize> = (0..n).map(|i| a.pattern().row(i).len()).collect();
    let diag_tol = T::lit(DIAGONAL_THRESHOLD);

    const NONE: usize = usize::MAX;
    let mut pinv = vec![NONE; n];
    let mut l = Csc {
        ptr: Vec::with_capacity(n + 1),
        idx: Vec::with_capacity(4 * csc.val.len()),
        val: Vec::with_capacity(4 * csc.val.len()),
    };
    let mut u = l.clone();
    l.ptr.push(0);
    u.ptr.push(0);

    let mut x = vec![T::zero(); n];
    let mut xi = vec![0usize; n];
    let mut stack = vec![(0usize, 0usize); n];
    let mut mark = vec![NONE; n];

    for k in 0..n {
        let col = q[k];
        let (rows, vals) = csc.col(col);
        let top = reach(&l, rows, &pinv, k, &mut xi, &mut stack, &mut mark);
        for &i in &xi[top..] {
            x[i] = T::zero();
        }
        for (&i, &v) in rows.iter().zip(vals) {
            x[i] = v;
        }
        // Sparse triangular solve with the columns of L found so far.
        for &j in &xi[top..] {
            let jn = pinv[j];
            if jn == NONE {
                continue;
            }
            let xj = x[j];
            let (li, lv) = l.col(jn);
            for (&i, &v) in li.iter().zip(lv).skip(1) {
                x[i] -= v * xj;
            }
        }
        let mut ipiv = NONE;
        let mut amax = T::zero();
        for &i in &xi[top..] {
            if pinv[i] == NONE {
                let t = x[i].abs();
                if t.is_nan() {
                    return Err(LinsolveError::SingularMatrix { pivot: col });
                }
                if t > amax {
                    amax = t;
                    ipiv = i;
                }
            } else {
                u.idx.push(pinv[i]);
                u.val.push(x[i]);
            }
        }
        if ipiv == NONE || !amax.is_finite() || amax <= tiny {
            return Err(LinsolveError::SingularMatrix { pivot: col });
        }
        if pinv[col] == NONE && x[col].abs() >= amax * diag_tol {
            ipiv = col;
        } else {
            // Among acceptable rows take the one sparsest in A.
            let cut = amax * tol;
            for &i in &xi[top..] {
                if pinv[i] == NONE && x[i].abs() >= cut && row_nnz[i] < row_nnz[ipiv] {
                    ipiv = i;
                }
            }
        }
        let pivot = x[ipiv];
        u.idx.push(k);
        u.val.push(pivot);
        u.ptr.push(u.idx.len());
        pinv[ipiv] = k;
        l.idx.push(ipiv);
        l.val.push(T::one());
        for &i in &xi[top..] {
            if pinv[i] == NONE {
                l.idx.push(i);
                l.val.push(x[i] / pivot);
            }
            x[i] = T::zero();
        }
        l.ptr.push(l.idx.len());
    }
    for i in &mut l.idx {
        *i = pinv[*i];
    }
    let id = FACTORIZATIONS.with(|c| {
        c.set(c.get() + 1);
        c.get()
    });
    log::debug!(
        "LU #{id}: n = {n}, nnz(A) = {}, nnz(L+U) = {}",
        a.nnz(),
        l.val.len() + u.val.len()
    );
    Ok(Factorization {
        n,
        l,
        u,
        pinv,
        scale,
        q: ordering,
        id,
    })
}

/// Symmetric scaling `s_i = 1 / sqrt(max(|row i|, |column i|))`.
fn equilibrate<T: Real>(a: &CsrMatrix<T>) -> Vec<T> {
    let n = a.n();
    let mut m = vec![T::zero(); n];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let v = v.abs();
            m[i] = m[i].max(v);
            m[j] = m[j].max(v);
        }
    }
    m.into_iter()
        .map(|v| {
            if v > T::zero() && v.is_finite() {
                T::one() / v.sqrt()
            } else {
                T::one()
            }
        })
        .collect()
}

/// Nonzero pattern of `L \ b`, in topological order, as `xi[top..]`.
/// `L` rows are still in original numbering during factorization.
fn reach<T: Copy>(
    l: &Csc<T>,
    b_rows: &[usize],
    pinv: &[usize],
    stamp: usize,
    xi: &mut [usize],
    stack: &mut [(usize, usize)],
    mark: &mut [usize],
) -> usize {
    let n = xi.len();
    let mut top = n;
    for &start in b_rows {
        if mark[start] == stamp {
            continue;
        }
        // Iterative depth-first search; each frame is (node, next child).
        let mut sp = 0;
        stack[0] = (start, 0);
        mark[start] = stamp;
        loop {
            let (j, next) = stack[sp];
            let jn = pinv[j];
            let children: &[usize] = if jn == usize::MAX {
                &[]
            } else {
                &l.col(jn).0[1..]
            };
            let mut pushed = false;
            for (c, &i) in children.iter().enumerate().skip(next) {
                if mark[i] != stamp {
                    mark[i] = stamp;
                    stack[sp].1 = c + 1;
                    sp += 1;
                    stack[sp] = (i, 0);
                    pushed = true;
                    break;
                }
            }
            if !pushed {
                top -= 1;
                xi[top] = j;
                if sp == 0 {
                    break;
                }
                sp -= 1;
            }
        }
    }
    top
}

fn to_csc<T: Real>(a: &CsrMatrix<T>) -> Csc<T> {
    let n = a.n();
    let mut count = vec![0usize; n + 1];
    for &j in a.pattern().col_idx() {
        count[j + 1] += 1;
    }
    for j in 0..n {
        count[j + 1] += count[j];
    }
    let ptr = count.clone();
    let mut idx = vec![0; a.nnz()];
    let mut val = vec![T::zero(); a.nnz()];
    for i in 0..n {
        let (cols, vals) = a.row(i);
        for (&j, &v) in cols.iter().zip(vals) {
            let p = count[j];
            idx[p] = i;
            val[p] = v;
            count[j] += 1;
        }
    }
    Csc { ptr, idx, val }
}

impl<T: Real> Factorization<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Sequence number of this factorization on its thread.
    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn ordering(&self) -> &Arc<Ordering> {
        &self.q
    }

    /// Stored entries of `L` and `U`.
    pub fn fill(&self) -> usize {
        self.l.val.len() + self.u.val.len()
    }

    pub fn solve(&self, b: &[T]) -> Result<Vec<T>, LinsolveError> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x)?;
        Ok(x)
    }

    pub fn solve_in_place(&self, b: &mut [T]) -> Result<(), LinsolveError> {
        if b.len() != self.n {
            return Err(LinsolveError::DimensionMismatch {
                expected: self.n,
                got: b.len(),
            });
        }
        let mut y = vec![T::zero(); self.n];
        for (i, &v) in b.iter().enumerate() {
            y[self.pinv[i]] = v * self.scale[i];
        }
        for j in 0..self.n {
            let yj = y[j];
            if yj == T::zero() {
                continue;
            }
            let (li, lv) = self.l.col(j);
            for (&i, &v) in li.iter().zip(lv).skip(1) {
                y[i] -= v * yj;
            }
        }
        for j in (0..self.n).rev() {
            let (ui, uv) = self.u.col(j);
            let last = ui.len() - 1;
            y[j] /= uv[last];
            let yj = y[j];
            if yj == T::zero() {
                continue;
            }
            for (&i, &v) in ui[..last].iter().zip(&uv[..last]) {
                y[i] -= v * yj;
            }
        }
        for (k, &col) in self.q.perm.iter().enumerate() {
            b[col] = y[k] * self.scale[col];
        }
        SOLVES.with(|c| c.set(c.get() + 1));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn residual(a: &CsrMatrix<f64>, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.mul(x);
        ax.iter()
            .zip(b)
            .map(|(p, q)| (p - q) * (p - q))
            .sum::<f64>()
            .sqrt()
    }

    fn norm(v: &[f64]) -> f64 {
        v.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    #[test]
    fn identity_returns_rhs() {
        let a = CsrMatrix::<f64>::identity(5);
        let f = factorize(&a).unwrap();
        let b = vec![1.0, -2.0, 3.5, 0.0, 7.0];
        assert_eq!(f.solve(&b).unwrap(), b);
    }

    #[test]
    fn swap_needs_pivoting() {
        let a = CsrMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let f = factorize(&a).unwrap();
        assert_eq!(f.solve(&[2.0, 3.0]).unwrap(), vec![3.0, 2.0]);
    }

    #[test]
    fn singular_is_reported() {
        let a = CsrMatrix::from_dense(&[vec![1.0, 1.0], vec![1.0, 1.0]]);
        assert!(matches!(
            factorize(&a),
            Err(LinsolveError::SingularMatrix { .. })
        ));
        let z = CsrMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 1.0), (2, 2, 0.0)]);
        assert_eq!(
            factorize(&z).unwrap_err(),
            LinsolveError::SingularMatrix { pivot: 2 }
        );
    }

    #[test]
    fn dimension_mismatch() {
        let f = factorize(&CsrMatrix::<f64>::identity(3)).unwrap();
        assert_eq!(
            f.solve(&[1.0]).unwrap_err(),
            LinsolveError::DimensionMismatch {
                expected: 3,
                got: 1
            }
        );
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = random_spd(30, 7);
        let f = factorize(&a).unwrap();
        assert!(f.solve(&[0.0; 30]).unwrap().iter().all(|&x| x == 0.0));
    }

    fn random_spd(n: usize, seed: u64) -> CsrMatrix<f64> {
        // B^T B + I with a sparse random B.
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = vec![vec![0.0; n]; n];
        for row in b.iter_mut() {
            for _ in 0..3 {
                row[rng.random_range(0..n)] = rng.random_range(-1.0..1.0);
            }
        }
        let mut d = vec![vec![0.0; n]; n];
        for i in 0..n {
            d[i][i] = 1.0;
            for j in 0..n {
                for r in &b {
                    d[i][j] += r[i] * r[j];
                }
            }
        }
        CsrMatrix::from_dense(&d)
    }

    #[test]
    fn random_spd_residual() {
        let a = random_spd(50, 1);
        let f = factorize(&a).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let x = f.solve(&b).unwrap();
        assert!(residual(&a, &x, &b) / norm(&b) <= 1e-10);
    }

    #[test]
    fn unsymmetric_random_matches_dense_oracle() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut d = vec![vec![0.0; n]; n];
        for (i, row) in d.iter_mut().enumerate() {
            row[(i + 1) % n] = 1.0;
            for _ in 0..3 {
                row[rng.random_range(0..n)] = rng.random_range(-2.0..2.0);
            }
        }
        let a = CsrMatrix::from_dense(&d);
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let x = factorize(&a).unwrap().solve(&b).unwrap();
        // Dense Gaussian elimination with partial pivoting as the oracle.
        let mut m: Vec<Vec<f64>> = d.iter().zip(&b).map(|(r, &bi)| {
            let mut r = r.clone();
            r.push(bi);
            r
        }).collect();
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| m[i][k].abs().total_cmp(&m[j][k].abs()))
                .unwrap();
            m.swap(k, p);
            for i in k + 1..n {
                let f = m[i][k] / m[k][k];
                for j in k..=n {
                    m[i][j] -= f * m[k][j];
                }
            }
        }
        let mut y = vec![0.0; n];
        for i in (0..n).rev() {
            let s: f64 = (i + 1..n).map(|j| m[i][j] * y[j]).sum();
            y[i] = (m[i][n] - s) / m[i][i];
        }
        let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(err < 1e-8 * (1.0 + norm(&y)), "{err}");
    }

    #[test]
    fn repeated_solves_are_bitwise_identical_and_counted() {
        let a = random_spd(50, 3);
        let before = counters();
        let f = factorize(&a).unwrap();
        let b: Vec<f64> = (0..50).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let x0 = f.solve(&b).unwrap();
        let anorm = a.max_abs() * 50.0;
        for _ in 0..99 {
            let x = f.solve(&b).unwrap();
            assert_eq!(x, x0);
            assert!(residual(&a, &x, &b) <= 1e-9 * (anorm * norm(&x) + norm(&b)));
        }
        let after = counters();
        assert_eq!(after.factorizations - before.factorizations, 1);
        assert_eq!(after.solves - before.solves, 100);
    }

    #[test]
    fn ordering_is_reusable() {
        let a = random_spd(20, 5);
        let ord = Arc::new(Ordering::amd(a.pattern()).unwrap());
        let mut a2 = a.clone();
        a2.scale(3.0);
        let f = factorize_with(&a2, ord.clone()).unwrap();
        let b = vec![1.0; 20];
        let x = f.solve(&b).unwrap();
        assert!(residual(&a2, &x, &b) < 1e-10);
        assert!(Arc::ptr_eq(f.ordering(), &ord));
        let mut p = ord.perm().to_vec();
        p.sort_unstable();
        assert_eq!(p, (0..20).collect::<Vec<_>>());
    }

    #[test]
    fn single_precision() {
        let a = CsrMatrix::<f32>::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let x = factorize(&a).unwrap().solve(&[1.0, 2.0]).unwrap();
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-6 && (x[1] - 7.0 / 11.0).abs() < 1e-6);
    }
}
