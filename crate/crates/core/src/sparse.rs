//! Symmetric sparse linear algebra at desk scale.
//!
//! Matrices live in compressed sparse rows over the full symmetric
//! pattern, built by mirroring lower-triangular triplets. Systems are
//! solved by an LDL^T factorization under a reverse Cuthill-McKee
//! ordering, with Jacobi-preconditioned conjugate gradients as the
//! iterative fallback, and the extreme eigenvalues come from power and
//! inverse iteration on the same pieces.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::math::{self, SplitMix64};

const NONE: usize = usize::MAX;

#[derive(Clone, Debug, PartialEq)]
pub enum SparseError {
    /// A pivot of the factorization (or a preconditioner diagonal) was
    /// not strictly positive.
    NotPositiveDefinite { pivot: usize },
    /// An iteration hit its cap before meeting the tolerance.
    NoConvergence { iterations: usize },
    /// Conjugate gradients met a direction with vanishing curvature.
    Breakdown { iteration: usize },
}

impl fmt::Display for SparseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SparseError::NotPositiveDefinite { pivot } => {
                write!(f, "matrix is not positive definite at pivot {pivot}")
            }
            SparseError::NoConvergence { iterations } => {
                write!(f, "no convergence after {iterations} iterations")
            }
            SparseError::Breakdown { iteration } => {
                write!(f, "conjugate gradient breakdown at iteration {iteration}")
            }
        }
    }
}

// ---------------------------------------------------------------------
// Storage
// ---------------------------------------------------------------------

/// Symmetric matrix in compressed sparse rows holding both triangles.
/// Column indices are ascending within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricCsr {
    pub n: usize,
    pub row_start: Vec<usize>,
    pub col: Vec<usize>,
    pub val: Vec<f64>,
}

impl SymmetricCsr {
    /// Builds the full symmetric matrix from lower-triangular triplets
    /// `(row, column, value)` with `row >= column`. Duplicates are
    /// summed; off-diagonal entries are mirrored.
    pub fn from_lower_triplets(n: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut full: Vec<(usize, usize, f64)> = Vec::with_capacity(2 * entries.len());
        for &(r, c, v) in entries {
            assert!(r < n && c <= r, "triplet ({r}, {c}) is not lower triangular");
            full.push((r, c, v));
            if r != c {
                full.push((c, r, v));
            }
        }
        full.sort_by_key(|&(r, c, _)| (r, c));
        let mut row_start = vec![0; n + 1];
        let mut col = Vec::with_capacity(full.len());
        let mut val = Vec::with_capacity(full.len());
        let mut prev = None;
        for &(r, c, v) in &full {
            if prev == Some((r, c)) {
                *val.last_mut().unwrap() += v;
            } else {
                col.push(c);
                val.push(v);
                row_start[r + 1] += 1;
                prev = Some((r, c));
            }
        }
        for r in 0..n {
            row_start[r + 1] += row_start[r];
        }
        SymmetricCsr { n, row_start, col, val }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0; self.n];
        for r in 0..self.n {
            let mut s = 0.0;
            for p in self.row_start[r]..self.row_start[r + 1] {
                s += self.val[p] * x[self.col[p]];
            }
            y[r] = s;
        }
        y
    }

    /// Diagonal entries; zeros where the pattern has none.
    pub fn diagonal(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for r in 0..self.n {
            for p in self.row_start[r]..self.row_start[r + 1] {
                if self.col[p] == r {
                    d[r] += self.val[p];
                }
            }
        }
        d
    }

    /// Largest deviation |a_rc - a_cr| over the stored pattern.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0;
        for r in 0..self.n {
            for p in self.row_start[r]..self.row_start[r + 1] {
                let c = self.col[p];
                let mut back = 0.0;
                for q in self.row_start[c]..self.row_start[c + 1] {
                    if self.col[q] == r {
                        back = self.val[q];
                        break;
                    }
                }
                worst = math::max(worst, math::abs(self.val[p] - back));
            }
        }
        worst
    }
}

// ---------------------------------------------------------------------
// Ordering
// ---------------------------------------------------------------------

/// Reverse Cuthill-McKee ordering of the pattern: breadth-first from a
/// minimum-degree vertex per component, neighbors visited by ascending
/// degree, then the whole order reversed. `perm[k]` is the original
/// index placed at position `k`.
pub fn rcm_ordering(a: &SymmetricCsr) -> Vec<usize> {
    let n = a.n;
    let degree = |v: usize| a.row_start[v + 1] - a.row_start[v];
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = VecDeque::new();
    loop {
        let start = (0..n).filter(|&v| !seen[v]).min_by_key(|&v| (degree(v), v));
        let Some(start) = start else { break };
        seen[start] = true;
        queue.push_back(start);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            let mut next: Vec<usize> = (a.row_start[v]..a.row_start[v + 1])
                .map(|p| a.col[p])
                .filter(|&w| w != v && !seen[w])
                .collect();
            next.sort_by_key(|&w| (degree(w), w));
            for w in next {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    order.reverse();
    order
}

// ---------------------------------------------------------------------
// LDL^T factorization
// ---------------------------------------------------------------------

/// Sparse LDL^T factorization of a permuted symmetric positive definite
/// matrix: P A P^T = L D L^T with unit lower triangular L (stored by
/// columns, strict part only) and positive diagonal D.
#[derive(Clone, Debug)]
pub struct LdltFactor {
    n: usize,
    /// `perm[k]` = original index at permuted position `k`.
    perm: Vec<usize>,
    col_start: Vec<usize>,
    row: Vec<usize>,
    val: Vec<f64>,
    diag: Vec<f64>,
}

/// Factorizes under the reverse Cuthill-McKee ordering.
pub fn factorize(a: &SymmetricCsr) -> Result<LdltFactor, SparseError> {
    let n = a.n;
    let perm = rcm_ordering(a);
    let mut iperm = vec![0; n];
    for (k, &v) in perm.iter().enumerate() {
        iperm[v] = k;
    }

    // Permuted upper triangle in compressed sparse columns. The full
    // pattern holds each off-diagonal pair twice, so exactly one copy
    // lands in the upper triangle.
    let mut count = vec![0usize; n + 1];
    for r in 0..n {
        for p in a.row_start[r]..a.row_start[r + 1] {
            let (ip, jp) = (iperm[r], iperm[a.col[p]]);
            if ip <= jp {
                count[jp + 1] += 1;
            }
        }
    }
    for k in 0..n {
        count[k + 1] += count[k];
    }
    let col_start_a = count.clone();
    let nnz = col_start_a[n];
    let mut row_a = vec![0usize; nnz];
    let mut val_a = vec![0.0; nnz];
    let mut fill = col_start_a.clone();
    for r in 0..n {
        for p in a.row_start[r]..a.row_start[r + 1] {
            let (ip, jp) = (iperm[r], iperm[a.col[p]]);
            if ip <= jp {
                row_a[fill[jp]] = ip;
                val_a[fill[jp]] = a.val[p];
                fill[jp] += 1;
            }
        }
    }

    // Symbolic phase: elimination tree and column counts via flagged
    // walks towards the root.
    let mut parent = vec![NONE; n];
    let mut flag = vec![NONE; n];
    let mut lnz = vec![0usize; n];
    for k in 0..n {
        flag[k] = k;
        for p in col_start_a[k]..col_start_a[k + 1] {
            let mut i = row_a[p];
            while i < k && flag[i] != k {
                if parent[i] == NONE {
                    parent[i] = k;
                }
                lnz[i] += 1;
                flag[i] = k;
                i = parent[i];
            }
        }
    }
    let mut col_start = vec![0usize; n + 1];
    for k in 0..n {
        col_start[k + 1] = col_start[k] + lnz[k];
    }
    let mut row = vec![0usize; col_start[n]];
    let mut val = vec![0.0; col_start[n]];
    let mut diag = vec![0.0; n];

    // Numeric phase: up-looking, one sparse triangular solve per row.
    let mut next = col_start.clone();
    let mut y = vec![0.0; n];
    let mut pattern = vec![0usize; n];
    let mut stack = vec![0usize; n];
    let mut flag = vec![NONE; n];
    for k in 0..n {
        let mut top = n;
        flag[k] = k;
        for p in col_start_a[k]..col_start_a[k + 1] {
            let i = row_a[p];
            y[i] += val_a[p];
            let mut len = 0;
            let mut i = i;
            while i < k && flag[i] != k {
                pattern[len] = i;
                len += 1;
                flag[i] = k;
                i = parent[i];
            }
            while len > 0 {
                len -= 1;
                top -= 1;
                stack[top] = pattern[len];
            }
        }
        diag[k] = y[k];
        y[k] = 0.0;
        for s in top..n {
            let i = stack[s];
            let yi = y[i];
            y[i] = 0.0;
            for p in col_start[i]..next[i] {
                y[row[p]] -= val[p] * yi;
            }
            let lki = yi / diag[i];
            diag[k] -= lki * yi;
            row[next[i]] = k;
            val[next[i]] = lki;
            next[i] += 1;
        }
        if diag[k] <= 0.0 {
            return Err(SparseError::NotPositiveDefinite { pivot: k });
        }
    }

    Ok(LdltFactor { n, perm, col_start, row, val, diag })
}

impl LdltFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves A x = b through the stored factorization.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = self.perm.iter().map(|&v| b[v]).collect();
        for j in 0..self.n {
            let yj = y[j];
            for p in self.col_start[j]..self.col_start[j + 1] {
                y[self.row[p]] -= self.val[p] * yj;
            }
        }
        for j in 0..self.n {
            y[j] /= self.diag[j];
        }
        for j in (0..self.n).rev() {
            let mut s = y[j];
            for p in self.col_start[j]..self.col_start[j + 1] {
                s -= self.val[p] * y[self.row[p]];
            }
            y[j] = s;
        }
        let mut x = vec![0.0; self.n];
        for (k, &v) in self.perm.iter().enumerate() {
            x[v] = y[k];
        }
        x
    }
}

// ---------------------------------------------------------------------
// Iterative pieces
// ---------------------------------------------------------------------

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    math::sqrt(dot(a, a))
}

/// Jacobi-preconditioned conjugate gradients to a relative residual.
/// Returns the solution and the iteration count.
pub fn cg_solve(
    a: &SymmetricCsr,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Result<(Vec<f64>, usize), SparseError> {
    assert_eq!(b.len(), a.n);
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok((vec![0.0; a.n], 0));
    }
    let d = a.diagonal();
    for (i, &di) in d.iter().enumerate() {
        if di <= 0.0 {
            return Err(SparseError::NotPositiveDefinite { pivot: i });
        }
    }
    let precondition = |r: &[f64]| -> Vec<f64> { r.iter().zip(&d).map(|(x, di)| x / di).collect() };
    let mut x = vec![0.0; a.n];
    let mut r = b.to_vec();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 0..max_iter {
        if norm(&r) <= tol * bnorm {
            return Ok((x, it));
        }
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(SparseError::Breakdown { iteration: it });
        }
        let alpha = rz / pap;
        for i in 0..a.n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        for i in 0..a.n {
            p[i] = z[i] + beta * p[i];
        }
    }
    if norm(&r) <= tol * bnorm {
        return Ok((x, max_iter));
    }
    Err(SparseError::NoConvergence { iterations: max_iter })
}

fn seed_vector(n: usize) -> Vec<f64> {
    let mut rng = SplitMix64::new(0x5eed_cafe);
    let mut x: Vec<f64> = (0..n).map(|_| rng.next_sym()).collect();
    let s = norm(&x);
    for v in x.iter_mut() {
        *v /= s;
    }
    x
}

/// Largest eigenvalue of a symmetric matrix by power iteration with a
/// Rayleigh quotient stop.
pub fn largest_eigenvalue(
    a: &SymmetricCsr,
    tol: f64,
    max_iter: usize,
) -> Result<f64, SparseError> {
    assert!(a.n > 0);
    let mut x = seed_vector(a.n);
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let y = a.matvec(&x);
        let next = dot(&x, &y);
        let s = norm(&y);
        if s == 0.0 {
            return Ok(0.0);
        }
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / s;
        }
        if math::abs(next - lambda) <= tol * math::max(math::abs(next), 1e-300) {
            return Ok(next);
        }
        lambda = next;
    }
    Err(SparseError::NoConvergence { iterations: max_iter })
}

/// Smallest eigenvalue of the factorized matrix by power iteration on
/// its inverse.
pub fn smallest_eigenvalue(
    factor: &LdltFactor,
    tol: f64,
    max_iter: usize,
) -> Result<f64, SparseError> {
    assert!(factor.n > 0);
    let mut x = seed_vector(factor.n);
    let mut mu = 0.0;
    for _ in 0..max_iter {
        let y = factor.solve(&x);
        let next = dot(&x, &y);
        let s = norm(&y);
        for (xi, yi) in x.iter_mut().zip(&y) {
            *xi = yi / s;
        }
        if math::abs(next - mu) <= tol * math::abs(next) {
            return Ok(1.0 / next);
        }
        mu = next;
    }
    Err(SparseError::NoConvergence { iterations: max_iter })
}
