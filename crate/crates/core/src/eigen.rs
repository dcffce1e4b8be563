//! Symmetric eigensolvers shared by the grid operator and the graph
//! estimator.
//!
//! Two routes are provided on purpose. The direct route (Sturm
//! bisection for tridiagonal matrices, cyclic Jacobi for small dense
//! ones) is simple enough to serve as an oracle. The iterative route
//! is shift-invert Lanczos with full reorthogonalization; the inner
//! solve is a banded Cholesky factorization when the matrix has small
//! bandwidth and a deflated conjugate-gradient solve otherwise. Known
//! kernel directions are projected out of every Krylov vector, so the
//! returned pairs are the smallest eigenpairs orthogonal to the kernel.

use crate::error::{Error, Result};
use rand::Rng;

/// Symmetric sparse matrix in CSR form. Both triangles are stored.
#[derive(Debug, Clone)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    vals: Vec<f64>,
}

impl SparseSym {
    /// Build from (row, col, value) triplets; duplicates are summed.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut cols = vec![0usize; triplets.len()];
        let mut vs = vec![0.0f64; triplets.len()];
        let mut cursor = counts.clone();
        for &(i, j, v) in triplets {
            let p = cursor[i];
            cols[p] = j;
            vs[p] = v;
            cursor[i] += 1;
        }
        // merge duplicate columns within each row
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        for i in 0..n {
            let lo = counts[i];
            let hi = counts[i + 1];
            let mut entries: Vec<(usize, f64)> =
                (lo..hi).map(|p| (cols[p], vs[p])).collect();
            entries.sort_unstable_by_key(|e| e.0);
            for (c, v) in entries {
                if let Some(last) = col_idx.last() {
                    if *last == c && col_idx.len() > row_ptr[i] {
                        *vals.last_mut().unwrap() += v;
                        continue;
                    }
                }
                col_idx.push(c);
                vals.push(v);
            }
            row_ptr[i + 1] = col_idx.len();
        }
        SparseSym {
            n,
            row_ptr,
            col_idx,
            vals,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[p] * x[self.col_idx[p]];
            }
            y[i] = acc;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[p] == i {
                    d[i] += self.vals[p];
                }
            }
        }
        d
    }

    /// Max absolute row sum; upper bound on the spectral radius.
    pub fn inf_norm(&self) -> f64 {
        (0..self.n)
            .map(|i| {
                (self.row_ptr[i]..self.row_ptr[i + 1])
                    .map(|p| self.vals[p].abs())
                    .sum::<f64>()
            })
            .fold(0.0, f64::max)
    }

    /// Largest |i - j| over stored entries.
    pub fn bandwidth(&self) -> usize {
        let mut bw = 0usize;
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                bw = bw.max(self.col_idx[p].abs_diff(i));
            }
        }
        bw
    }

    /// Dense row-major copy; intended for oracle-sized problems.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.n * self.n];
        for i in 0..self.n {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                a[i * self.n + self.col_idx[p]] += self.vals[p];
            }
        }
        a
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Remove the components of `v` along each (orthonormal) direction.
fn project_out(v: &mut [f64], dirs: &[Vec<f64>]) {
    for q in dirs {
        let c = dot(q, v);
        axpy(-c, q, v);
    }
}

// ---------------------------------------------------------------------------
// Symmetric tridiagonal: Sturm bisection + inverse iteration
// ---------------------------------------------------------------------------

/// Symmetric tridiagonal matrix: diagonal `d`, off-diagonal `e`
/// (`e[i]` couples `i` and `i + 1`).
#[derive(Debug, Clone)]
pub struct Tridiag {
    pub d: Vec<f64>,
    pub e: Vec<f64>,
}

impl Tridiag {
    pub fn new(d: Vec<f64>, e: Vec<f64>) -> Self {
        assert_eq!(e.len() + 1, d.len());
        Tridiag { d, e }
    }

    fn gershgorin(&self) -> (f64, f64) {
        let n = self.d.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = (if i > 0 { self.e[i - 1].abs() } else { 0.0 })
                + (if i + 1 < n { self.e[i].abs() } else { 0.0 });
            lo = lo.min(self.d[i] - r);
            hi = hi.max(self.d[i] + r);
        }
        (lo, hi)
    }

    /// Number of eigenvalues strictly below `x` (Sturm sequence on the
    /// LDL^T pivots).
    pub fn count_below(&self, x: f64) -> usize {
        let n = self.d.len();
        let max_e2 = self
            .e
            .iter()
            .map(|v| v * v)
            .fold(1.0f64, f64::max);
        let pivmin = f64::MIN_POSITIVE * max_e2;
        let mut count = 0usize;
        let mut q = 1.0f64;
        for i in 0..n {
            let e2 = if i == 0 {
                0.0
            } else {
                self.e[i - 1] * self.e[i - 1]
            };
            q = self.d[i] - x - e2 / q;
            if q.abs() < pivmin {
                q = -pivmin;
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// `j`-th smallest eigenvalue (0-indexed) by bisection.
    pub fn eigenvalue(&self, j: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        let width = (hi - lo).max(1e-300);
        lo -= 1e-12 * width;
        hi += 1e-12 * width;
        for _ in 0..110 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if self.count_below(mid) >= j + 1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    /// The `k` smallest eigenvalues, ascending.
    pub fn smallest(&self, k: usize) -> Vec<f64> {
        (0..k.min(self.d.len())).map(|j| self.eigenvalue(j)).collect()
    }

    /// The `k` largest eigenvalues, descending.
    pub fn largest(&self, k: usize) -> Vec<f64> {
        let n = self.d.len();
        (0..k.min(n)).map(|j| self.eigenvalue(n - 1 - j)).collect()
    }

    /// Solve (T - lambda I) x = b with partial pivoting. The factored
    /// system may be nearly singular; callers normalize the result.
    fn solve_shifted(&self, lambda: f64, b: &[f64]) -> Vec<f64> {
        let n = self.d.len();
        if n == 1 {
            let floor = f64::EPSILON * self.d[0].abs().max(1.0);
            let p = self.d[0] - lambda;
            let p = if p.abs() < floor { floor } else { p };
            return vec![b[0] / p];
        }
        // working bands: diag, first and second superdiagonal
        let mut diag: Vec<f64> = self.d.iter().map(|v| v - lambda).collect();
        let mut sup1: Vec<f64> = self.e.clone();
        let mut sup2 = vec![0.0f64; n.saturating_sub(2)];
        let mut sub: Vec<f64> = self.e.clone();
        let mut rhs = b.to_vec();
        let scale = self
            .d
            .iter()
            .chain(self.e.iter())
            .map(|v| v.abs())
            .fold(1.0, f64::max);
        for i in 0..n - 1 {
            if sub[i].abs() > diag[i].abs() {
                // swap rows i and i+1
                let old_diag_i = diag[i];
                let old_sup1_i = sup1[i];
                let old_sup2_i = if i + 2 < n { sup2[i] } else { 0.0 };
                diag[i] = sub[i];
                sub[i] = old_diag_i;
                let old_diag_next = diag[i + 1];
                diag[i + 1] = old_sup1_i;
                sup1[i] = old_diag_next;
                if i + 2 < n {
                    sup2[i] = sup1[i + 1];
                    sup1[i + 1] = old_sup2_i;
                }
                rhs.swap(i, i + 1);
            }
            // a pivot below rounding scale is noise; flooring it here
            // caps the amplification of a near-singular solve at 1/eps
            let mut p = diag[i];
            if p.abs() < f64::EPSILON * scale {
                p = f64::EPSILON * scale;
                diag[i] = p;
            }
            let m = sub[i] / p;
            diag[i + 1] -= m * sup1[i];
            if i + 2 < n {
                sup1[i + 1] -= m * sup2[i];
            }
            rhs[i + 1] -= m * rhs[i];
        }
        if diag[n - 1].abs() < f64::EPSILON * scale {
            diag[n - 1] = f64::EPSILON * scale;
        }
        // back substitution
        let mut x = vec![0.0f64; n];
        x[n - 1] = rhs[n - 1] / diag[n - 1];
        if n >= 2 {
            x[n - 2] = (rhs[n - 2] - sup1[n - 2] * x[n - 1]) / diag[n - 2];
        }
        for i in (0..n.saturating_sub(2)).rev() {
            x[i] = (rhs[i] - sup1[i] * x[i + 1] - sup2[i] * x[i + 2]) / diag[i];
        }
        x
    }

    /// Eigenvector for `lambda` by inverse iteration, kept orthogonal
    /// to `orth` (previously computed vectors in the same cluster).
    pub fn eigenvector(&self, lambda: f64, orth: &[Vec<f64>]) -> Vec<f64> {
        let n = self.d.len();
        // deterministic start with no symmetry the iteration could keep
        let mut state = 0x243f_6a88_85a3_08d3u64 ^ lambda.to_bits();
        let mut x: Vec<f64> = (0..n)
            .map(|_| {
                state ^= state << 13;
                state ^= state >> 7;
                state ^= state << 17;
                (state as f64 / u64::MAX as f64) - 0.5
            })
            .collect();
        for _ in 0..4 {
            project_out(&mut x, orth);
            let nrm = norm2(&x).max(1e-300);
            for v in x.iter_mut() {
                *v /= nrm;
            }
            x = self.solve_shifted(lambda, &x);
            // near-singular shifts amplify by up to 1/eps per solve;
            // rescale by the largest entry so the squared norm stays finite
            let mx = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if mx > 0.0 && mx.is_finite() {
                for v in x.iter_mut() {
                    *v /= mx;
                }
            }
        }
        project_out(&mut x, orth);
        let nrm = norm2(&x).max(1e-300);
        for v in x.iter_mut() {
            *v /= nrm;
        }
        x
    }

    /// The `k` smallest eigenpairs; clustered eigenvalues get vectors
    /// orthogonalized within the cluster.
    pub fn smallest_pairs(&self, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let vals = self.smallest(k);
        let vecs = self.pair_vectors(&vals);
        (vals, vecs)
    }

    /// The `k` largest eigenpairs, descending.
    pub fn largest_pairs(&self, k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
        let vals = self.largest(k);
        let vecs = self.pair_vectors(&vals);
        (vals, vecs)
    }

    fn pair_vectors(&self, vals: &[f64]) -> Vec<Vec<f64>> {
        self.pair_vectors_deflated(vals, &[])
    }

    /// Eigenvectors for `vals`, each kept orthogonal to every vector
    /// in `base` and to earlier vectors in the same eigenvalue cluster.
    pub fn pair_vectors_deflated(&self, vals: &[f64], base: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let (lo, hi) = self.gershgorin();
        let cluster_tol = 1e-8 * (hi - lo).abs().max(1e-300);
        let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(vals.len());
        let mut orth: Vec<Vec<f64>> = Vec::new();
        for (j, &lam) in vals.iter().enumerate() {
            let cluster_start = (0..j)
                .rev()
                .take_while(|&i| (vals[i] - lam).abs() < cluster_tol)
                .last()
                .unwrap_or(j);
            orth.clear();
            orth.extend(base.iter().cloned());
            orth.extend(vecs[cluster_start..j].iter().cloned());
            vecs.push(self.eigenvector(lam, &orth));
        }
        vecs
    }
}

// ---------------------------------------------------------------------------
// Dense cyclic Jacobi
// ---------------------------------------------------------------------------

/// Eigendecomposition of a dense symmetric matrix (row-major, n x n)
/// by cyclic Jacobi rotations. Returns eigenvalues ascending and the
/// matching eigenvectors.
pub fn jacobi_eigh(a_in: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(a_in.len(), n * n);
    let mut a = a_in.to_vec();
    let mut v = vec![0.0f64; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let frob: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    for _sweep in 0..60 {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-14 * frob {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq.abs() <= 1e-300 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (1.0 + theta * theta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - s * aiq;
                    a[i * n + q] = s * aip + c * aiq;
                }
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = c * apj - s * aqj;
                    a[q * n + j] = s * apj + c * aqj;
                }
                for i in 0..n {
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = c * vip - s * viq;
                    v[i * n + q] = s * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].partial_cmp(&a[j * n + j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors: Vec<Vec<f64>> = order
        .iter()
        .map(|&j| (0..n).map(|i| v[i * n + j]).collect())
        .collect();
    (values, vectors)
}

// ---------------------------------------------------------------------------
// Banded Cholesky
// ---------------------------------------------------------------------------

/// Cholesky factorization of a banded SPD matrix, lower band stored
/// row-major with `bw + 1` slots per row.
pub struct BandedCholesky {
    n: usize,
    bw: usize,
    l: Vec<f64>,
}

impl BandedCholesky {
    /// Factor `a + shift I`. Returns None if a pivot is not positive.
    pub fn factor(a: &SparseSym, shift: f64) -> Option<Self> {
        let n = a.n();
        let bw = a.bandwidth();
        let w = bw + 1;
        let mut band = vec![0.0f64; n * w];
        for i in 0..n {
            for p in a.row_ptr[i]..a.row_ptr[i + 1] {
                let j = a.col_idx[p];
                if j <= i {
                    band[i * w + (j + bw - i)] += a.vals[p];
                }
            }
            band[i * w + bw] += shift;
        }
        for i in 0..n {
            let jlo = i.saturating_sub(bw);
            for j in jlo..=i {
                let tlo = jlo.max(j.saturating_sub(bw));
                let mut sum = band[i * w + (j + bw - i)];
                for t in tlo..j {
                    sum -= band[i * w + (t + bw - i)] * band[j * w + (t + bw - j)];
                }
                if j < i {
                    band[i * w + (j + bw - i)] = sum / band[j * w + bw];
                } else {
                    if sum <= 0.0 {
                        return None;
                    }
                    band[i * w + bw] = sum.sqrt();
                }
            }
        }
        Some(BandedCholesky { n, bw, l: band })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, bw, w) = (self.n, self.bw, self.bw + 1);
        let mut y = b.to_vec();
        for i in 0..n {
            let jlo = i.saturating_sub(bw);
            let mut sum = y[i];
            for j in jlo..i {
                sum -= self.l[i * w + (j + bw - i)] * y[j];
            }
            y[i] = sum / self.l[i * w + bw];
        }
        for i in (0..n).rev() {
            let jhi = (i + bw).min(n - 1);
            let mut sum = y[i];
            for j in (i + 1)..=jhi {
                sum -= self.l[j * w + (i + bw - j)] * y[j];
            }
            y[i] = sum / self.l[i * w + bw];
        }
        y
    }
}

// ---------------------------------------------------------------------------
// Deflated preconditioned conjugate gradients
// ---------------------------------------------------------------------------

/// Solve (A + shift I) x = b restricted to the complement of the
/// orthonormal `deflate` directions, with Jacobi preconditioning.
fn cg_solve(
    a: &SparseSym,
    shift: f64,
    b: &[f64],
    deflate: &[Vec<f64>],
    inv_diag: &[f64],
    tol: f64,
    max_iter: usize,
) -> Vec<f64> {
    let n = a.n();
    let apply = |x: &[f64], y: &mut [f64]| {
        a.matvec(x, y);
        for i in 0..n {
            y[i] += shift * x[i];
        }
    };
    let mut x = vec![0.0f64; n];
    let mut r = b.to_vec();
    project_out(&mut r, deflate);
    let bnorm = norm2(&r).max(1e-300);
    let mut z: Vec<f64> = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
    project_out(&mut z, deflate);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0f64; n];
    for _ in 0..max_iter {
        if norm2(&r) <= tol * bnorm {
            break;
        }
        apply(&p, &mut ap);
        let denom = dot(&p, &ap);
        if denom.abs() < 1e-300 {
            break;
        }
        let alpha = rz / denom;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        project_out(&mut r, deflate);
        z = r.iter().zip(inv_diag).map(|(ri, di)| ri * di).collect();
        project_out(&mut z, deflate);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    x
}

// ---------------------------------------------------------------------------
// Shift-invert Lanczos
// ---------------------------------------------------------------------------

/// Options for [`lanczos_smallest`].
#[derive(Debug, Clone)]
pub struct LanczosOptions {
    /// Number of smallest (non-kernel) eigenpairs wanted.
    pub k: usize,
    /// Relative residual tolerance, scaled by the matrix inf-norm.
    pub tol: f64,
    /// Cap on the Krylov dimension; 0 picks `10 k sqrt(n)`.
    pub max_dim: usize,
    /// Regularizing shift as a fraction of the inf-norm.
    pub shift_rel: f64,
    /// Seed for the start vector.
    pub seed: u64,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            k: 6,
            tol: 1e-10,
            max_dim: 0,
            shift_rel: 1e-6,
            seed: 0x5eed_0001,
        }
    }
}

/// Eigenpairs with per-pair residuals `|A z - lambda z| / |A|_inf`.
#[derive(Debug, Clone)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Smallest `k` eigenpairs of a symmetric positive semidefinite matrix
/// orthogonal to the given orthonormal kernel directions.
///
/// Runs Lanczos on (A + mu I)^-1 with full reorthogonalization. The
/// inner solve is a banded Cholesky factorization when the bandwidth
/// is small and deflated CG otherwise; with CG the shift is widened to
/// keep the solve well conditioned (the shift cancels exactly in the
/// reported eigenvalues).
pub fn lanczos_smallest(
    a: &SparseSym,
    kernel: &[Vec<f64>],
    opts: &LanczosOptions,
) -> Result<EigenPairs> {
    const BANDED_LIMIT: usize = 300;
    let n = a.n();
    let n_eff = n.saturating_sub(kernel.len());
    let k = opts.k.min(n_eff);
    if k == 0 {
        return Ok(EigenPairs {
            values: vec![],
            vectors: vec![],
            residuals: vec![],
            iterations: 0,
        });
    }
    let norm_a = a.inf_norm().max(1e-300);
    let banded = a.bandwidth() <= BANDED_LIMIT;
    let shift_rel = if banded {
        opts.shift_rel
    } else {
        opts.shift_rel.max(1e-4)
    };
    let mu = shift_rel * norm_a;
    let chol = if banded {
        BandedCholesky::factor(a, mu)
    } else {
        None
    };
    let inv_diag: Vec<f64> = a.diag().iter().map(|d| 1.0 / (d + mu)).collect();
    let solve = |x: &[f64]| -> Vec<f64> {
        let mut rhs = x.to_vec();
        project_out(&mut rhs, kernel);
        let mut out = match &chol {
            Some(f) => f.solve(&rhs),
            None => cg_solve(a, mu, &rhs, kernel, &inv_diag, 1e-12, 100_000),
        };
        project_out(&mut out, kernel);
        out
    };

    let cap = if opts.max_dim > 0 {
        opts.max_dim
    } else {
        // budget 10 k sqrt(n), but full reorthogonalization makes
        // Krylov spaces beyond a few hundred vectors pointless
        ((10.0 * k as f64 * (n as f64).sqrt()) as usize)
            .max(2 * k + 16)
            .min(600)
    };
    let cap = cap.min(n_eff);

    let mut rng = crate::seeds::rng(opts.seed, 0);
    let mut v0: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();
    project_out(&mut v0, kernel);
    let nrm = norm2(&v0).max(1e-300);
    v0.iter_mut().for_each(|x| *x /= nrm);

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut worst_res = f64::INFINITY;

    let mut m = 0usize;
    while m < cap {
        let vj = basis[m].clone();
        let mut w = solve(&vj);
        let alpha = dot(&vj, &w);
        axpy(-alpha, &vj, &mut w);
        if m > 0 {
            let beta_prev = betas[m - 1];
            axpy(-beta_prev, &basis[m - 1], &mut w);
        }
        for _ in 0..2 {
            project_out(&mut w, kernel);
            project_out(&mut w, &basis);
        }
        alphas.push(alpha);
        let beta = norm2(&w);
        m += 1;
        let exhausted = beta <= 1e-14 * alpha.abs().max(1e-300) || m >= cap;
        if !exhausted {
            let mut next = w;
            next.iter_mut().for_each(|x| *x /= beta);
            betas.push(beta);
            basis.push(next);
        }
        let check_now = exhausted || (m >= 2 * k && m % 8 == 0);
        if check_now && m >= k {
            let t = Tridiag::new(alphas.clone(), betas[..m - 1].to_vec());
            let (thetas, svecs) = t.largest_pairs(k);
            let mut values = Vec::with_capacity(k);
            let mut vectors = Vec::with_capacity(k);
            let mut residuals = Vec::with_capacity(k);
            let mut az = vec![0.0f64; n];
            for (_theta, s) in thetas.iter().zip(&svecs) {
                let mut z = vec![0.0f64; n];
                for (col, &si) in basis.iter().zip(s.iter()) {
                    axpy(si, col, &mut z);
                }
                project_out(&mut z, kernel);
                let zn = norm2(&z).max(1e-300);
                z.iter_mut().for_each(|x| *x /= zn);
                a.matvec(&z, &mut az);
                let lam = dot(&z, &az);
                axpy(-lam, &z, &mut az);
                let res = norm2(&az) / norm_a;
                values.push(lam);
                vectors.push(z);
                residuals.push(res);
            }
            let mut order: Vec<usize> = (0..values.len()).collect();
            order.sort_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap());
            let values: Vec<f64> = order.iter().map(|&i| values[i]).collect();
            let vectors: Vec<Vec<f64>> = order.iter().map(|&i| vectors[i].clone()).collect();
            let residuals: Vec<f64> = order.iter().map(|&i| residuals[i]).collect();
            worst_res = residuals.iter().cloned().fold(0.0, f64::max);
            let converged = values.len() == k && worst_res <= opts.tol;
            let pairs = EigenPairs {
                values,
                vectors,
                residuals,
                iterations: m,
            };
            if converged {
                return Ok(pairs);
            }
            if exhausted {
                // the Krylov space cannot grow further; residuals at
                // roundoff level count as converged
                if worst_res <= (1e-11f64).max(opts.tol) {
                    return Ok(pairs);
                }
                break;
            }
        }
        if exhausted {
            break;
        }
    }
    Err(Error::ConvergenceFailure {
        iterations: m,
        residual: worst_res,
    })
}

/// All eigenpairs of a small sparse symmetric matrix via dense Jacobi.
pub fn dense_eigh(a: &SparseSym) -> (Vec<f64>, Vec<Vec<f64>>) {
    jacobi_eigh(&a.to_dense(), a.n())
}

/// Largest algebraic eigenpair of `a` restricted to the orthogonal
/// complement of the given orthonormal directions. Plain Lanczos with
/// full reorthogonalization and Ritz restarts; suited to extremal
/// eigenvalues of bounded operators such as normalized adjacency
/// matrices. The residual tolerance is relative to the inf-norm.
pub fn lanczos_largest(
    a: &SparseSym,
    deflate: &[Vec<f64>],
    tol: f64,
    seed: u64,
) -> Result<(f64, Vec<f64>)> {
    let n = a.n();
    let n_eff = n.saturating_sub(deflate.len());
    if n_eff == 0 {
        return Err(Error::invalid("no directions left after deflation"));
    }
    let norm_a = a.inf_norm().max(1e-300);
    let cap = n_eff.min(300);
    let mut rng = crate::seeds::rng(seed, 0);
    let mut start: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() - 0.5).collect();

    let mut last_res = f64::INFINITY;
    let mut total_iters = 0usize;
    for _restart in 0..40 {
        project_out(&mut start, deflate);
        let nrm = norm2(&start).max(1e-300);
        start.iter_mut().for_each(|x| *x /= nrm);
        let mut basis = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut m = 0usize;
        let mut w = vec![0.0f64; n];
        loop {
            let vj = basis[m].clone();
            a.matvec(&vj, &mut w);
            let alpha = dot(&vj, &w);
            axpy(-alpha, &vj, &mut w);
            if m > 0 {
                axpy(-betas[m - 1], &basis[m - 1], &mut w);
            }
            for _ in 0..2 {
                project_out(&mut w, deflate);
                project_out(&mut w, &basis);
            }
            alphas.push(alpha);
            m += 1;
            let beta = norm2(&w);
            if m >= cap || beta <= 1e-13 * norm_a {
                break;
            }
            let mut next = w.clone();
            next.iter_mut().for_each(|x| *x /= beta);
            betas.push(beta);
            basis.push(next);
        }
        total_iters += m;
        let t = Tridiag::new(alphas, betas);
        let (_, svecs) = t.largest_pairs(1);
        let s = &svecs[0];
        let mut z = vec![0.0f64; n];
        for (col, &si) in basis.iter().zip(s.iter()) {
            axpy(si, col, &mut z);
        }
        project_out(&mut z, deflate);
        let zn = norm2(&z).max(1e-300);
        z.iter_mut().for_each(|x| *x /= zn);
        let mut az = vec![0.0f64; n];
        a.matvec(&z, &mut az);
        let lam = dot(&z, &az);
        axpy(-lam, &z, &mut az);
        last_res = norm2(&az) / norm_a;
        if last_res <= tol {
            return Ok((lam, z));
        }
        start = z;
    }
    Err(Error::ConvergenceFailure {
        iterations: total_iters,
        residual: last_res,
    })
}

/// Multiplicity-safe variant of [`lanczos_smallest`].
///
/// A single Krylov sequence only ever sees one copy of a repeated
/// eigenvalue, so converged pairs are deflated and the iteration is
/// rerun until an extra verification pass finds nothing below the
/// current k-th value.
pub fn lanczos_fill(
    a: &SparseSym,
    kernel: &[Vec<f64>],
    opts: &LanczosOptions,
) -> Result<EigenPairs> {
    let n_eff = a.n().saturating_sub(kernel.len());
    let k = opts.k.min(n_eff);
    let norm_a = a.inf_norm().max(1e-300);
    let mut found: Vec<(f64, Vec<f64>, f64)> = Vec::new();
    let mut iterations = 0usize;
    let mut deflate: Vec<Vec<f64>> = kernel.to_vec();
    for pass in 0..(2 * k + 4) {
        let need = (k - found.len()).max(1);
        let sub = LanczosOptions {
            k: need,
            seed: opts.seed.wrapping_add(pass as u64),
            ..opts.clone()
        };
        let pairs = lanczos_smallest(a, &deflate, &sub)?;
        iterations += pairs.iterations;
        let smallest_new = pairs.values.first().copied();
        let kth_before = (found.len() >= k).then(|| found[k - 1].0);
        for ((v, z), r) in pairs
            .values
            .into_iter()
            .zip(pairs.vectors)
            .zip(pairs.residuals)
        {
            deflate.push(z.clone());
            found.push((v, z, r));
        }
        found.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        if let (Some(new), Some(kth)) = (smallest_new, kth_before) {
            // nothing new slots below the k-th value: done
            if new >= kth - 1e-9 * norm_a.max(kth.abs()) {
                break;
            }
        }
        if found.len() >= k && k == n_eff {
            break;
        }
    }
    found.truncate(k);
    Ok(EigenPairs {
        values: found.iter().map(|p| p.0).collect(),
        vectors: found.iter().map(|p| p.1.clone()).collect(),
        residuals: found.iter().map(|p| p.2).collect(),
        iterations,
    })
}
