//! Finite-volume discretization of the density-weighted Laplacian.
//!
//! For a density rho on a uniform grid the operator is assembled from
//! the weak form: face-averaged densities weight the squared gradient,
//! cell masses weight the values,
//!
//! ```text
//!   B(u, v) = sum_faces  rho_f (Du)_f (Dv)_f m_f / h^2
//!   M(u, v) = sum_cells  rho_i u_i v_i vol_i
//! ```
//!
//! with half cells at the domain boundary. No flux crosses the
//! boundary, which encodes the natural (zero weighted-flux) condition,
//! and the constant function is an exact kernel vector. The
//! generalized problem `B w = xi M w` is symmetrized with the
//! similarity transform `diag(sqrt(mass))`, so eigenfunctions come
//! back orthonormal in the density-weighted inner product.
//!
//! Gradient, weighted divergence, and the face inner product are
//! exposed as exact discrete adjoints of one another:
//! `<grad u, v>_F = -<u, weighted_div v>_M` holds to rounding. The
//! field dynamics module relies on this to keep its numeric evolution
//! and the mode expansion on the same discrete spectrum.

use crate::eigen::{self, dense_eigh, lanczos_fill, LanczosOptions, SparseSym, Tridiag};
use crate::error::{Error, Result};
use crate::measure::GridDensity;

/// Eigenvalues at or below this are treated as the constant kernel.
pub const ZERO_MODE_THRESHOLD: f64 = 1e-8;
/// The dense 2d direct route refuses problems larger than this.
pub const DENSE_ORACLE_LIMIT: usize = 2000;
/// Default relative residual tolerance for the iterative route.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// One grid face: the cells it joins and its quadrature weight
/// `m_f = rho_f * transverse cell measure * h`.
#[derive(Debug, Clone, Copy)]
struct Face {
    p: u32,
    q: u32,
    w: f64,
}

/// A vector field stored on grid faces, one component array per axis
/// (staggered layout). Component `a` has one value per face joining
/// neighbors along axis `a`.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    comps: Vec<Vec<f64>>,
}

impl FaceField {
    pub fn comps(&self) -> &[Vec<f64>] {
        &self.comps
    }

    pub fn comps_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.comps
    }

    pub fn scale(&mut self, s: f64) {
        for c in self.comps.iter_mut() {
            for v in c.iter_mut() {
                *v *= s;
            }
        }
    }

    pub fn axpy(&mut self, alpha: f64, other: &FaceField) {
        for (c, o) in self.comps.iter_mut().zip(&other.comps) {
            for (v, w) in c.iter_mut().zip(o) {
                *v += alpha * w;
            }
        }
    }
}

/// Assembled weighted Laplacian on a grid density.
pub struct WeightedLaplacian {
    density: GridDensity,
    mass: Vec<f64>,
    sqrt_mass: Vec<f64>,
    total_mass: f64,
    faces: Vec<Vec<Face>>,
    inv_h: Vec<f64>,
    stiffness: SparseSym,
    sym: SparseSym,
}

/// How to solve the eigenproblem.
#[derive(Debug, Clone)]
pub enum SpectrumMethod {
    /// Sturm bisection on the tridiagonal form in 1d; cyclic Jacobi on
    /// the dense form in 2d, capped at [`DENSE_ORACLE_LIMIT`] points.
    Direct,
    /// Shift-invert Lanczos with full reorthogonalization and
    /// deflation of converged pairs. `max_dim = 0` picks a default.
    Lanczos { tol: f64, max_dim: usize },
}

/// The `k` smallest eigenpairs, zero mode included.
#[derive(Debug, Clone)]
pub struct LaplaceSpectrum {
    xis: Vec<f64>,
    modes: Vec<Vec<f64>>,
    residuals: Vec<f64>,
}

impl LaplaceSpectrum {
    pub fn k(&self) -> usize {
        self.xis.len()
    }

    /// Eigenvalues ascending; `xis()[0]` is the exact zero mode.
    pub fn xis(&self) -> &[f64] {
        &self.xis
    }

    /// Eigenfunctions in original grid coordinates, orthonormal in the
    /// density-weighted inner product. `mode(0)` is constant.
    pub fn mode(&self, i: usize) -> &[f64] {
        &self.modes[i]
    }

    pub fn modes(&self) -> &[Vec<f64>] {
        &self.modes
    }

    /// Relative residuals `|A y - xi y| / |A|` per pair.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }

    /// Smallest eigenvalue above the zero-mode threshold.
    pub fn xi_min(&self) -> Option<f64> {
        self.xis.iter().copied().find(|&x| x > ZERO_MODE_THRESHOLD)
    }
}

impl WeightedLaplacian {
    /// Assemble stiffness, mass, and the symmetrized operator.
    pub fn assemble(density: &GridDensity) -> Self {
        let d = density.dim();
        let shape = density.shape().to_vec();
        let h = density.spacing().to_vec();
        let rho = density.rho();
        let n = density.len();

        let cell = |axis: usize, i: usize| -> f64 {
            let edge = i == 0 || i == shape[axis] - 1;
            h[axis] * if edge { 0.5 } else { 1.0 }
        };

        let mut mass = vec![0.0f64; n];
        match d {
            1 => {
                for i in 0..shape[0] {
                    mass[i] = rho[i] * cell(0, i);
                }
            }
            2 => {
                let n1 = shape[1];
                for i0 in 0..shape[0] {
                    for i1 in 0..n1 {
                        mass[i0 * n1 + i1] = rho[i0 * n1 + i1] * cell(0, i0) * cell(1, i1);
                    }
                }
            }
            _ => unreachable!("grid densities are at most 2d"),
        }

        let mut faces: Vec<Vec<Face>> = Vec::with_capacity(d);
        match d {
            1 => {
                let mut fs = Vec::with_capacity(shape[0] - 1);
                for i in 0..shape[0] - 1 {
                    let w = 0.5 * (rho[i] + rho[i + 1]) * h[0];
                    fs.push(Face {
                        p: i as u32,
                        q: (i + 1) as u32,
                        w,
                    });
                }
                faces.push(fs);
            }
            2 => {
                let (n0, n1) = (shape[0], shape[1]);
                let mut fs0 = Vec::with_capacity((n0 - 1) * n1);
                for i0 in 0..n0 - 1 {
                    for i1 in 0..n1 {
                        let p = i0 * n1 + i1;
                        let q = p + n1;
                        let w = 0.5 * (rho[p] + rho[q]) * cell(1, i1) * h[0];
                        fs0.push(Face {
                            p: p as u32,
                            q: q as u32,
                            w,
                        });
                    }
                }
                faces.push(fs0);
                let mut fs1 = Vec::with_capacity(n0 * (n1 - 1));
                for i0 in 0..n0 {
                    for i1 in 0..n1 - 1 {
                        let p = i0 * n1 + i1;
                        let q = p + 1;
                        let w = 0.5 * (rho[p] + rho[q]) * cell(0, i0) * h[1];
                        fs1.push(Face {
                            p: p as u32,
                            q: q as u32,
                            w,
                        });
                    }
                }
                faces.push(fs1);
            }
            _ => unreachable!(),
        }

        let sqrt_mass: Vec<f64> = mass.iter().map(|m| m.sqrt()).collect();
        let mut trip: Vec<(usize, usize, f64)> = Vec::new();
        let mut sym_trip: Vec<(usize, usize, f64)> = Vec::new();
        for (axis, fs) in faces.iter().enumerate() {
            let inv_h2 = 1.0 / (h[axis] * h[axis]);
            for f in fs {
                let (p, q) = (f.p as usize, f.q as usize);
                let c = f.w * inv_h2;
                trip.push((p, p, c));
                trip.push((q, q, c));
                trip.push((p, q, -c));
                trip.push((q, p, -c));
                sym_trip.push((p, p, c / mass[p]));
                sym_trip.push((q, q, c / mass[q]));
                let off = -c / (sqrt_mass[p] * sqrt_mass[q]);
                sym_trip.push((p, q, off));
                sym_trip.push((q, p, off));
            }
        }
        let stiffness = SparseSym::from_triplets(n, &trip);
        let sym = SparseSym::from_triplets(n, &sym_trip);
        let total_mass = mass.iter().sum();
        let inv_h = h.iter().map(|v| 1.0 / v).collect();

        WeightedLaplacian {
            density: density.clone(),
            mass,
            sqrt_mass,
            total_mass,
            faces,
            inv_h,
            stiffness,
            sym,
        }
    }

    pub fn n(&self) -> usize {
        self.mass.len()
    }

    pub fn dim(&self) -> usize {
        self.density.dim()
    }

    pub fn density(&self) -> &GridDensity {
        &self.density
    }

    /// Per-cell quadrature weights of the density-weighted inner
    /// product.
    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    /// Symmetrized operator `M^{-1/2} K M^{-1/2}`.
    pub fn sym_matrix(&self) -> &SparseSym {
        &self.sym
    }

    /// Density-weighted inner product of grid functions.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        self.mass
            .iter()
            .zip(u)
            .zip(v)
            .map(|((m, a), b)| m * a * b)
            .sum()
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Density-weighted average of a grid function.
    pub fn mean(&self, u: &[f64]) -> f64 {
        self.mass.iter().zip(u).map(|(m, a)| m * a).sum::<f64>() / self.total_mass
    }

    /// Zero-valued field in the staggered layout of this grid.
    pub fn zero_face_field(&self) -> FaceField {
        FaceField {
            comps: self.faces.iter().map(|fs| vec![0.0; fs.len()]).collect(),
        }
    }

    /// Face connectivity along one axis as `(p, q, weight)`, in the
    /// component order used by [`FaceField`].
    pub fn face_list(&self, axis: usize) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.faces[axis]
            .iter()
            .map(|f| (f.p as usize, f.q as usize, f.w))
    }

    /// Discrete gradient: forward differences onto faces.
    pub fn grad(&self, u: &[f64]) -> FaceField {
        let mut out = self.zero_face_field();
        for (axis, fs) in self.faces.iter().enumerate() {
            let inv_h = self.inv_h[axis];
            let comp = &mut out.comps[axis];
            for (slot, f) in comp.iter_mut().zip(fs) {
                *slot = (u[f.q as usize] - u[f.p as usize]) * inv_h;
            }
        }
        out
    }

    /// Face inner product with the face quadrature weights.
    pub fn face_inner(&self, a: &FaceField, b: &FaceField) -> f64 {
        let mut acc = 0.0;
        for (axis, fs) in self.faces.iter().enumerate() {
            for (f, (x, y)) in fs
                .iter()
                .zip(a.comps[axis].iter().zip(b.comps[axis].iter()))
            {
                acc += f.w * x * y;
            }
        }
        acc
    }

    pub fn face_norm(&self, a: &FaceField) -> f64 {
        self.face_inner(a, a).sqrt()
    }

    /// Density-weighted divergence `rho^{-1} div(rho v)`, the exact
    /// negative adjoint of [`Self::grad`]:
    /// `<u, weighted_div v>_M = -<grad u, v>_F`.
    pub fn weighted_div(&self, v: &FaceField) -> Vec<f64> {
        let mut out = vec![0.0f64; self.n()];
        for (axis, fs) in self.faces.iter().enumerate() {
            let inv_h = self.inv_h[axis];
            for (f, val) in fs.iter().zip(&v.comps[axis]) {
                let flux = f.w * val * inv_h;
                out[f.p as usize] += flux;
                out[f.q as usize] -= flux;
            }
        }
        for (o, m) in out.iter_mut().zip(&self.mass) {
            *o /= m;
        }
        out
    }

    /// The weighted Laplacian itself: `weighted_div(grad u)`, negative
    /// semidefinite.
    pub fn laplacian_mu(&self, u: &[f64]) -> Vec<f64> {
        let mut ku = vec![0.0f64; self.n()];
        self.stiffness.matvec(u, &mut ku);
        ku.iter_mut().zip(&self.mass).for_each(|(v, m)| *v = -*v / m);
        ku
    }

    /// Normalized kernel direction of the symmetrized operator.
    fn kernel_vector(&self) -> Vec<f64> {
        let nrm = self.total_mass.sqrt();
        self.sqrt_mass.iter().map(|s| s / nrm).collect()
    }

    /// Tridiagonal form of the symmetrized 1d operator.
    fn tridiagonal(&self) -> Tridiag {
        let n = self.n();
        let mut d = vec![0.0f64; n];
        let mut e = vec![0.0f64; n - 1];
        let inv_h2 = self.inv_h[0] * self.inv_h[0];
        for (i, f) in self.faces[0].iter().enumerate() {
            let c = f.w * inv_h2;
            d[i] += c / self.mass[i];
            d[i + 1] += c / self.mass[i + 1];
            e[i] = -c / (self.sqrt_mass[i] * self.sqrt_mass[i + 1]);
        }
        Tridiag::new(d, e)
    }

    /// The `k` smallest eigenpairs (zero mode first). 1d grids use the
    /// tridiagonal direct solver, 2d grids shift-invert Lanczos.
    pub fn spectrum(&self, k: usize) -> Result<LaplaceSpectrum> {
        match self.dim() {
            1 => self.spectrum_with(k, &SpectrumMethod::Direct),
            _ => self.spectrum_with(
                k,
                &SpectrumMethod::Lanczos {
                    tol: EIGEN_RESIDUAL_TOL,
                    max_dim: 0,
                },
            ),
        }
    }

    /// The `k` smallest eigenpairs with an explicit solver choice.
    pub fn spectrum_with(&self, k: usize, method: &SpectrumMethod) -> Result<LaplaceSpectrum> {
        let n = self.n();
        if k == 0 {
            return Err(Error::invalid("spectrum needs k >= 1"));
        }
        if k > n {
            return Err(Error::invalid(format!(
                "requested {k} modes from a grid with {n} points"
            )));
        }
        let kernel = self.kernel_vector();
        let norm_a = self.sym.inf_norm().max(1e-300);
        // (value, sym-coordinate vector, residual) for nonzero modes
        let pairs: Vec<(f64, Vec<f64>, f64)> = if k == 1 {
            vec![]
        } else {
            match method {
                SpectrumMethod::Direct => match self.dim() {
                    1 => {
                        // the zero mode is known exactly, so only the
                        // nonzero Sturm values get inverse iteration,
                        // each deflated against the kernel
                        let t = self.tridiagonal();
                        let vals = t.smallest(k);
                        let vecs = t
                            .pair_vectors_deflated(&vals[1..], std::slice::from_ref(&kernel));
                        self.finish_pairs(vecs, norm_a, &kernel)?
                    }
                    _ => {
                        if n > DENSE_ORACLE_LIMIT {
                            return Err(Error::invalid(format!(
                                "dense 2d solver is capped at {DENSE_ORACLE_LIMIT} points, grid has {n}"
                            )));
                        }
                        let (_, vecs) = dense_eigh(&self.sym);
                        self.package_direct(vecs[..k].to_vec(), norm_a, &kernel)?
                    }
                },
                SpectrumMethod::Lanczos { tol, max_dim } => {
                    let opts = LanczosOptions {
                        k: k - 1,
                        tol: *tol,
                        max_dim: *max_dim,
                        ..Default::default()
                    };
                    let got = lanczos_fill(&self.sym, &[kernel.clone()], &opts)?;
                    got.values
                        .into_iter()
                        .zip(got.vectors)
                        .zip(got.residuals)
                        .map(|((v, z), r)| (v, z, r))
                        .collect()
                }
            }
        };

        if pairs.len() + 1 != k {
            return Err(Error::invalid(format!(
                "solver returned {} of {} requested modes",
                pairs.len() + 1,
                k
            )));
        }
        let mut xis = vec![0.0f64];
        let mut modes = vec![vec![1.0 / self.total_mass.sqrt(); n]];
        let mut residuals = vec![0.0f64];
        for (xi, y, res) in pairs {
            let mut y = y;
            // exact zero mean in the weighted inner product
            let c = eigen::dot(&kernel, &y);
            for (v, kv) in y.iter_mut().zip(&kernel) {
                *v -= c * kv;
            }
            let nrm = eigen::norm2(&y).max(1e-300);
            let mut w: Vec<f64> = y
                .iter()
                .zip(&self.sqrt_mass)
                .map(|(v, s)| v / (nrm * s))
                .collect();
            canonical_sign(&mut w);
            xis.push(xi.max(0.0));
            modes.push(w);
            residuals.push(res);
        }
        Ok(LaplaceSpectrum {
            xis,
            modes,
            residuals,
        })
    }

    /// Turn dense-solver eigenvectors into nonzero-mode pairs: drop
    /// the one vector carrying the kernel, pass the rest along.
    fn package_direct(
        &self,
        vecs: Vec<Vec<f64>>,
        norm_a: f64,
        kernel: &[f64],
    ) -> Result<Vec<(f64, Vec<f64>, f64)>> {
        let mut drop_at = 0usize;
        let mut drop_abs = -1.0f64;
        for (i, z) in vecs.iter().enumerate() {
            let d = eigen::dot(kernel, z).abs();
            if d > drop_abs {
                drop_abs = d;
                drop_at = i;
            }
        }
        let kept: Vec<Vec<f64>> = vecs
            .into_iter()
            .enumerate()
            .filter_map(|(i, z)| (i != drop_at).then_some(z))
            .collect();
        self.finish_pairs(kept, norm_a, kernel)
    }

    /// Deflate the kernel from nonzero-mode vectors, normalize, and
    /// recompute values as Rayleigh quotients with their residuals.
    /// A vector that collapses under deflation is a solver fault.
    fn finish_pairs(
        &self,
        vecs: Vec<Vec<f64>>,
        norm_a: f64,
        kernel: &[f64],
    ) -> Result<Vec<(f64, Vec<f64>, f64)>> {
        let mut az = vec![0.0f64; self.n()];
        let mut out = Vec::with_capacity(vecs.len());
        for mut z in vecs {
            let c = eigen::dot(kernel, &z);
            for (v, kv) in z.iter_mut().zip(kernel) {
                *v -= c * kv;
            }
            let nrm = eigen::norm2(&z);
            if nrm < 1e-8 {
                return Err(Error::invalid(
                    "direct eigensolver produced a vector inside the constant kernel",
                ));
            }
            for v in z.iter_mut() {
                *v /= nrm;
            }
            self.sym.matvec(&z, &mut az);
            let lam = eigen::dot(&z, &az);
            for (a, b) in az.iter_mut().zip(&z) {
                *a -= lam * b;
            }
            let res = eigen::norm2(&az) / norm_a;
            out.push((lam, z, res));
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        Ok(out)
    }

    /// Smallest nonzero eigenvalue.
    pub fn poincare_constant(&self) -> Result<f64> {
        let s = self.spectrum(2)?;
        let xi_1 = s.xis()[1];
        if xi_1 <= ZERO_MODE_THRESHOLD {
            return Err(Error::DegenerateSpectrum { xi_1 });
        }
        Ok(xi_1)
    }

    /// Dirichlet energy over variance of a grid function; lower
    /// bounded by the smallest nonzero eigenvalue.
    pub fn rayleigh_quotient(&self, w: &[f64]) -> Result<f64> {
        let g = self.grad(w);
        let energy = self.face_inner(&g, &g);
        let sq = self.inner(w, w);
        let mean = self.mean(w);
        let var = sq - mean * mean * self.total_mass;
        if var <= 1e-13 * sq.max(1e-300) {
            return Err(Error::ZeroVariance);
        }
        Ok(energy / var)
    }
}

/// Flip sign so the entry of largest magnitude is positive; the first
/// such index wins, which keeps repeated runs bit-identical.
fn canonical_sign(w: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = 0.0f64;
    for (i, v) in w.iter().enumerate() {
        if v.abs() > best_abs {
            best_abs = v.abs();
            best = i;
        }
    }
    if w[best] < 0.0 {
        for v in w.iter_mut() {
            *v = -*v;
        }
    }
}
