//! Sparse non-symmetric linear systems.
//!
//! Direct LU from `faer` for the grid sizes the solvers normally see, with a
//! Jacobi-preconditioned BiCGSTAB fallback for very large grids.

use faer::linalg::solvers::Solve;
use faer::sparse::linalg::solvers::Lu;
use faer::sparse::{SparseColMat, Triplet};
use faer::Col;

use crate::error::{Error, Result};

/// Systems up to this size are factorized directly.
pub const DIRECT_LIMIT: usize = 200_000;

/// Compressed sparse rows; duplicate entries are summed on construction.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseMatrix {
    pub fn from_triplets(n: usize, mut triplets: Vec<(usize, usize, f64)>) -> Self {
        triplets.sort_by_key(|t| (t.0, t.1));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last = None;
        for (i, j, v) in triplets {
            assert!(i < n && j < n, "entry ({i}, {j}) outside a {n}x{n} matrix");
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                cols.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        Self {
            n,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).find(|&(j, _)| j == i).map_or(0.0, |e| e.1))
            .collect()
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    /// Max absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.n)
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn residual_inf(&self, x: &[f64], b: &[f64]) -> f64 {
        self.matvec(x)
            .iter()
            .zip(b)
            .fold(0.0_f64, |m, (ax, bi)| m.max((ax - bi).abs()))
    }

    pub fn factorize(&self) -> Result<Factorization> {
        // reports must be bit-reproducible
        faer::set_global_parallelism(faer::Par::Seq);
        let triplets: Vec<_> = (0..self.n)
            .flat_map(|i| self.row(i).map(move |(j, v)| Triplet::new(i, j, v)))
            .collect();
        let a = SparseColMat::<usize, f64>::try_new_from_triplets(self.n, self.n, &triplets)
            .map_err(|e| Error::LinearSolver(format!("matrix assembly failed: {e:?}")))?;
        let lu = a
            .sp_lu()
            .map_err(|e| Error::LinearSolver(format!("sparse LU failed: {e:?}")))?;
        Ok(Factorization { lu })
    }

    /// Solves `A x = b`, directly when small enough, with one step of
    /// iterative refinement.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        if self.n > DIRECT_LIMIT {
            return bicgstab(self, b, 1e-13, 20 * self.n.max(100));
        }
        let f = self.factorize()?;
        self.solve_factored(&f, b)
    }

    /// Solve with an existing factorization plus one refinement step.
    pub fn solve_factored(&self, f: &Factorization, b: &[f64]) -> Result<Vec<f64>> {
        let mut x = f.solve(b);
        let r: Vec<f64> = self.matvec(&x).iter().zip(b).map(|(ax, bi)| bi - ax).collect();
        for (xi, di) in x.iter_mut().zip(f.solve(&r)) {
            *xi += di;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::LinearSolver("direct solve produced non-finite values".into()));
        }
        Ok(x)
    }

    /// Lower bound on the infinity-norm condition number from two probe solves.
    pub fn condition_estimate(&self, f: &Factorization) -> f64 {
        let ones = vec![1.0; self.n];
        let alt: Vec<f64> = (0..self.n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let inv = [ones, alt]
            .iter()
            .map(|b| f.solve(b).iter().fold(0.0_f64, |m, v| m.max(v.abs())))
            .fold(0.0, f64::max);
        self.norm_inf() * inv
    }
}

pub struct Factorization {
    lu: Lu<usize, f64>,
}

impl Factorization {
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let rhs = Col::<f64>::from_fn(b.len(), |i| b[i]);
        let x = self.lu.solve(&rhs);
        (0..b.len()).map(|i| x[i]).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Jacobi-preconditioned BiCGSTAB; `tol` is relative to `|b|_2`.
pub fn bicgstab(a: &SparseMatrix, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n();
    let dinv: Vec<f64> = a
        .diagonal()
        .into_iter()
        .map(|d| if d != 0.0 { 1.0 / d } else { 1.0 })
        .collect();
    let precond = |v: &[f64]| -> Vec<f64> { v.iter().zip(&dinv).map(|(x, d)| x * d).collect() };
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let mut r = b.to_vec();
    let r0 = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    for _ in 0..max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        let phat = precond(&p);
        v = a.matvec(&phat);
        alpha = rho / dot(&r0, &v);
        let s: Vec<f64> = r.iter().zip(&v).map(|(ri, vi)| ri - alpha * vi).collect();
        if norm(&s) <= tol * bnorm {
            for i in 0..n {
                x[i] += alpha * phat[i];
            }
            return Ok(x);
        }
        let shat = precond(&s);
        let t = a.matvec(&shat);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * phat[i] + omega * shat[i];
            r[i] = s[i] - omega * t[i];
        }
        if norm(&r) <= tol * bnorm {
            return Ok(x);
        }
        if !omega.is_finite() || omega == 0.0 {
            break;
        }
    }
    Err(Error::LinearSolver(format!(
        "BiCGSTAB did not reach relative residual {tol:e} in {max_iter} iterations"
    )))
}
