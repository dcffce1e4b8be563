//! Time evolution of the linearized saddle dynamics on a grid density.
//!
//! The continuous system couples a scalar perturbation `u` with a
//! velocity field `v`:
//!
//! ```text
//!   u_t = -alpha u + beta rho^{-1} div(rho v) + gamma Lap_mu u
//!   v_t =  beta grad u
//! ```
//!
//! Two evolution routes are provided and kept on the same discrete
//! spectrum. The analytic route expands the initial data in Laplacian
//! eigenfunctions and applies the closed-form solution of each 2x2
//! mode system, including the confluent (double-root) case that the
//! optimal penalty produces on purpose. The numeric route steps the
//! full grid state with forward Euler or Heun using the exact same
//! gradient and weighted-divergence stencils, so the discrete modes
//! decouple to rounding and integrator error is pure time error.
//!
//! Velocity fields live on grid faces (staggered layout). The kernel
//! of the field-to-scalar coupling is spanned by discretely
//! divergence-free fields; [`kernel_field`] draws one from a
//! stream-function construction that telescopes to zero divergence.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Error, Result};
use crate::laplace::{FaceField, LaplaceSpectrum, WeightedLaplacian, ZERO_MODE_THRESHOLD};
use crate::lgan::LganCoefficients;
use crate::seeds;

pub use crate::lgan::euler_mode_modulus;

/// Default mode count for analytic expansions.
pub const DEFAULT_MODES: usize = 64;
/// Norm guard: a numeric run that crosses this is declared divergent.
pub const OVERFLOW_GUARD: f64 = 1e150;
/// Relative discriminant width treated as a double root.
const CONFLUENT_REL_TOL: f64 = 1e-12;

/// Instantaneous grid state of the coupled system.
#[derive(Debug, Clone)]
pub struct FieldState {
    pub u: Vec<f64>,
    pub v: FaceField,
    pub t: f64,
}

/// Time integrator choice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Euler,
    Heun,
}

impl std::str::FromStr for Scheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euler" => Ok(Scheme::Euler),
            "heun" => Ok(Scheme::Heun),
            other => Err(Error::UnknownKind { name: other.into() }),
        }
    }
}

/// Numeric integration parameters.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct IntegratorConfig {
    pub scheme: Scheme,
    pub tau: f64,
    pub steps: usize,
    /// Gradient-penalty weight applied inside the right-hand side.
    pub gamma: f64,
    /// Keep every n-th full state in the trace; 0 stores none.
    #[serde(default)]
    pub store_every: usize,
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::invalid(format!(
                "step size must be positive, got {}",
                self.tau
            )));
        }
        if self.steps == 0 {
            return Err(Error::invalid("at least one step required"));
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::invalid(format!(
                "penalty weight must be nonnegative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }
}

/// Per-mode projection of the initial data together with the mode's
/// own eigenvalues.
#[derive(Debug, Clone)]
pub struct ModeProjection {
    pub xi: f64,
    pub lambda_plus: Complex64,
    pub lambda_minus: Complex64,
    pub coeffs: ModeCoeffs,
}

/// Closed-form solution coefficients of one 2x2 mode system.
#[derive(Debug, Clone)]
pub enum ModeCoeffs {
    /// `u_k(t) = c+ e^{l+ t} + c- e^{l- t}`.
    Distinct { c_plus: Complex64, c_minus: Complex64 },
    /// Double root `l0`: `u_k(t) = (a + b t) e^{l0 t}`,
    /// `p_k(t) = (p + q t) e^{l0 t}`.
    Confluent { a: f64, b: f64, p: f64, q: f64 },
}

/// Eigen-expansion of initial data `(u0, v0)`.
#[derive(Debug, Clone)]
pub struct ModeExpansion {
    /// Weighted mean of `u0`; evolves as `c0 e^{-alpha t}`.
    pub c0: f64,
    pub modes: Vec<ModeProjection>,
    /// Scalar potential of the gradient part of `v0`, zero weighted
    /// mean.
    pub potential: Vec<f64>,
    /// Divergence-free part of `v0`; the dynamics leave it fixed.
    pub divfree: FaceField,
    /// Weighted face norm of `divfree`, cached for trace evaluation.
    pub divfree_norm: f64,
    /// Norm of the initial `u0` content outside the retained modes.
    pub truncation_residual: f64,
    /// Norm of the weighted divergence left in `divfree`.
    pub helmholtz_residual: f64,
}

/// Norm history of one evolution run.
#[derive(Debug, Clone)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    /// Weighted norm of `u` per step.
    pub u_norms: Vec<f64>,
    /// Weighted face norm of the full velocity field per step. Its
    /// time-varying part is the gradient component; the
    /// divergence-free component contributes a constant floor.
    pub v_norms: Vec<f64>,
    /// Weighted mean of `u` per step.
    pub mean_u: Vec<f64>,
    /// Least-squares slope of `log |u|` over the second half.
    pub measured_rate: f64,
    pub diverged: bool,
    /// Step size exceeded the linear stability estimate.
    pub cfl_flagged: bool,
    pub states: Option<Vec<FieldState>>,
}

fn fit_rate(times: &[f64], norms: &[f64]) -> f64 {
    let n = times.len();
    if n < 4 {
        return 0.0;
    }
    let from = n / 2;
    let pts: Vec<(f64, f64)> = times[from..]
        .iter()
        .zip(&norms[from..])
        .filter(|(_, v)| v.is_finite() && **v > 0.0)
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if pts.len() < 2 || pts.last().unwrap().0 == pts[0].0 {
        return 0.0;
    }
    let m = pts.len() as f64;
    let st: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let stt: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sty: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = m * stt - st * st;
    if denom.abs() < 1e-300 {
        return 0.0;
    }
    (m * sty - st * sy) / denom
}

/// Split a velocity field into a gradient part and a divergence-free
/// remainder: `v0 = divfree + grad(potential)`, potential with zero
/// weighted mean. In 1d the zero-flux boundary forces the
/// divergence-free part to vanish and the split is exact; in 2d the
/// potential is resolved on the supplied spectrum and the unresolved
/// divergence is reported as the residual.
pub fn helmholtz_decompose(
    spectrum: &LaplaceSpectrum,
    op: &WeightedLaplacian,
    v0: &FaceField,
) -> (Vec<f64>, FaceField, f64) {
    let n = op.n();
    if op.dim() == 1 {
        // integrate the face values back to a potential
        let h = op.density().spacing()[0];
        let mut pot = vec![0.0f64; n];
        for (i, val) in v0.comps()[0].iter().enumerate() {
            pot[i + 1] = pot[i] + val * h;
        }
        let mean = op.mean(&pot);
        for p in pot.iter_mut() {
            *p -= mean;
        }
        let divfree = op.zero_face_field();
        return (pot, divfree, 0.0);
    }

    let d = op.weighted_div(v0);
    let mut pot = vec![0.0f64; n];
    for (w, &xi) in spectrum.modes().iter().zip(spectrum.xis()).skip(1) {
        if xi <= ZERO_MODE_THRESHOLD {
            continue;
        }
        let b = -op.inner(&d, w) / xi;
        for (p, wi) in pot.iter_mut().zip(w) {
            *p += b * wi;
        }
    }
    let mean = op.mean(&pot);
    for p in pot.iter_mut() {
        *p -= mean;
    }
    let mut divfree = v0.clone();
    divfree.axpy(-1.0, &op.grad(&pot));
    let resid = op.norm(&op.weighted_div(&divfree));
    (pot, divfree, resid)
}

/// Expand `(u0, v0)` over the first `k` nonzero modes of the spectrum.
/// Modes at a double root get the confluent solution; everything else
/// solves the distinct-root 2x2 system.
pub fn project_initial_conditions(
    spectrum: &LaplaceSpectrum,
    op: &WeightedLaplacian,
    coeffs: &LganCoefficients,
    u0: &[f64],
    v0: &FaceField,
    k: usize,
) -> Result<ModeExpansion> {
    if u0.len() != op.n() {
        return Err(Error::invalid("initial scalar does not match the grid"));
    }
    let avail = spectrum.k().saturating_sub(1);
    if k > avail {
        return Err(Error::invalid(format!(
            "requested {k} modes but the spectrum holds {avail} nonzero modes"
        )));
    }
    let (potential, divfree, helmholtz_residual) = helmholtz_decompose(spectrum, op, v0);
    let c0 = op.mean(u0);

    let mut modes = Vec::with_capacity(k);
    let mut resid: Vec<f64> = u0.iter().map(|x| x - c0).collect();
    for idx in 1..=k {
        let xi = spectrum.xis()[idx];
        if xi <= ZERO_MODE_THRESHOLD {
            continue;
        }
        let w = spectrum.mode(idx);
        let a = op.inner(u0, w);
        let b = op.inner(&potential, w);
        for (r, wi) in resid.iter_mut().zip(w) {
            *r -= a * wi;
        }

        let damping = coeffs.alpha + coeffs.gamma * xi;
        let disc = damping * damping - 4.0 * coeffs.beta * coeffs.beta * xi;
        let scale = (damping * damping).max(4.0 * coeffs.beta * coeffs.beta * xi);
        if disc.abs() <= CONFLUENT_REL_TOL * scale {
            let l0 = -0.5 * damping;
            let b_slope = l0 * a - coeffs.beta * xi * b;
            let q_slope = coeffs.beta * a - l0 * b;
            modes.push(ModeProjection {
                xi,
                lambda_plus: Complex64::new(l0, 0.0),
                lambda_minus: Complex64::new(l0, 0.0),
                coeffs: ModeCoeffs::Confluent {
                    a,
                    b: b_slope,
                    p: b,
                    q: q_slope,
                },
            });
        } else {
            let root = Complex64::new(disc, 0.0).sqrt();
            let lp = (Complex64::new(-damping, 0.0) + root) / 2.0;
            let lm = (Complex64::new(-damping, 0.0) - root) / 2.0;
            let c_plus = (lp * a - coeffs.beta * xi * b) / (lp - lm);
            let c_minus = Complex64::new(a, 0.0) - c_plus;
            modes.push(ModeProjection {
                xi,
                lambda_plus: lp,
                lambda_minus: lm,
                coeffs: ModeCoeffs::Distinct { c_plus, c_minus },
            });
        }
    }
    let truncation_residual = op.norm(&resid);
    let divfree_norm = op.face_norm(&divfree);
    Ok(ModeExpansion {
        c0,
        modes,
        potential,
        divfree,
        divfree_norm,
        truncation_residual,
        helmholtz_residual,
    })
}

/// Mode amplitudes `(u_k, p_k)` at time `t`.
fn mode_values(m: &ModeProjection, t: f64) -> (f64, f64) {
    match &m.coeffs {
        ModeCoeffs::Distinct { c_plus, c_minus } => {
            let ep = (m.lambda_plus * t).exp();
            let em = (m.lambda_minus * t).exp();
            let u = c_plus * ep + c_minus * em;
            let p = c_plus / m.lambda_plus * ep + c_minus / m.lambda_minus * em;
            (u.re, p.re)
        }
        ModeCoeffs::Confluent { a, b, p, q } => {
            let e = (m.lambda_plus.re * t).exp();
            ((a + b * t) * e, (p + q * t) * e)
        }
    }
}

/// Closed-form evolution of an expansion; norms are evaluated in
/// coefficient space using mode orthonormality.
pub fn evolve_analytic(
    expansion: &ModeExpansion,
    coeffs: &LganCoefficients,
    times: &[f64],
) -> Result<SimulationTrace> {
    if times.is_empty() {
        return Err(Error::invalid("need at least one sample time"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("sample times must be strictly increasing"));
    }
    let mut u_norms = Vec::with_capacity(times.len());
    let mut v_norms = Vec::with_capacity(times.len());
    let mut mean_u = Vec::with_capacity(times.len());
    let df2 = expansion.divfree_norm * expansion.divfree_norm;
    for &t in times {
        let m0 = expansion.c0 * (-coeffs.alpha * t).exp();
        let mut u2 = m0 * m0;
        let mut grad2 = 0.0;
        for m in &expansion.modes {
            let (u, p) = mode_values(m, t);
            u2 += u * u;
            grad2 += m.xi * p * p;
        }
        u_norms.push(u2.sqrt());
        v_norms.push((df2 + grad2).sqrt());
        mean_u.push(m0);
    }
    let measured_rate = fit_rate(times, &u_norms);
    Ok(SimulationTrace {
        times: times.to_vec(),
        u_norms,
        v_norms,
        mean_u,
        measured_rate,
        diverged: false,
        cfl_flagged: false,
        states: None,
    })
}

/// Right-hand side of the discretized system.
fn rhs(
    op: &WeightedLaplacian,
    c: &LganCoefficients,
    gamma: f64,
    u: &[f64],
    v: &FaceField,
) -> (Vec<f64>, FaceField) {
    let mut du = op.weighted_div(v);
    let lap = if gamma > 0.0 {
        Some(op.laplacian_mu(u))
    } else {
        None
    };
    for (i, d) in du.iter_mut().enumerate() {
        *d = -c.alpha * u[i] + c.beta * *d + gamma * lap.as_ref().map_or(0.0, |l| l[i]);
    }
    let mut dv = op.grad(u);
    dv.scale(c.beta);
    (du, dv)
}

fn state_norms(op: &WeightedLaplacian, u: &[f64], v: &FaceField) -> (f64, f64, f64) {
    (op.norm(u), op.face_norm(v), op.mean(u))
}

/// Explicit time stepping of the full grid system. The penalty weight
/// comes from the config so stabilized and plain runs share
/// coefficients. Divergent runs stop at the overflow guard and are
/// flagged, not errored.
pub fn evolve_numeric(
    op: &WeightedLaplacian,
    coeffs: &LganCoefficients,
    u0: &[f64],
    v0: &FaceField,
    config: &IntegratorConfig,
) -> Result<SimulationTrace> {
    config.validate()?;
    if u0.len() != op.n() {
        return Err(Error::invalid("initial scalar does not match the grid"));
    }
    if u0.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("initial scalar must be finite"));
    }

    // stability estimate from the largest mode the grid can hold
    let xi_bound = op.sym_matrix().inf_norm();
    let damping = coeffs.alpha + config.gamma * xi_bound;
    let lam_bound = (coeffs.beta.abs() * xi_bound.sqrt()).max(damping);
    let cfl_flagged = config.tau * lam_bound > 2.0;

    let mut u = u0.to_vec();
    let mut v = v0.clone();
    let n_out = config.steps + 1;
    let mut times = Vec::with_capacity(n_out);
    let mut u_norms = Vec::with_capacity(n_out);
    let mut v_norms = Vec::with_capacity(n_out);
    let mut mean_u = Vec::with_capacity(n_out);
    let mut states: Vec<FieldState> = Vec::new();
    let mut diverged = false;

    let mut record = |step: usize, u: &[f64], v: &FaceField, states: &mut Vec<FieldState>| {
        let t = step as f64 * config.tau;
        let (un, vn, mu) = state_norms(op, u, v);
        times.push(t);
        u_norms.push(un);
        v_norms.push(vn);
        mean_u.push(mu);
        if config.store_every > 0 && step % config.store_every == 0 {
            states.push(FieldState {
                u: u.to_vec(),
                v: v.clone(),
                t,
            });
        }
        un
    };
    record(0, &u, &v, &mut states);

    for step in 1..=config.steps {
        match config.scheme {
            Scheme::Euler => {
                let (du, dv) = rhs(op, coeffs, config.gamma, &u, &v);
                for (x, d) in u.iter_mut().zip(&du) {
                    *x += config.tau * d;
                }
                v.axpy(config.tau, &dv);
            }
            Scheme::Heun => {
                let (k1u, k1v) = rhs(op, coeffs, config.gamma, &u, &v);
                let mut u1 = u.clone();
                for (x, d) in u1.iter_mut().zip(&k1u) {
                    *x += config.tau * d;
                }
                let mut v1 = v.clone();
                v1.axpy(config.tau, &k1v);
                let (k2u, k2v) = rhs(op, coeffs, config.gamma, &u1, &v1);
                let half = 0.5 * config.tau;
                for ((x, d1), d2) in u.iter_mut().zip(&k1u).zip(&k2u) {
                    *x += half * (d1 + d2);
                }
                v.axpy(half, &k1v);
                v.axpy(half, &k2v);
            }
        }
        let un = record(step, &u, &v, &mut states);
        if !un.is_finite() || un > OVERFLOW_GUARD {
            diverged = true;
            break;
        }
    }

    let measured_rate = fit_rate(&times, &u_norms);
    Ok(SimulationTrace {
        times,
        u_norms,
        v_norms,
        mean_u,
        measured_rate,
        diverged,
        cfl_flagged,
        states: if config.store_every > 0 {
            Some(states)
        } else {
            None
        },
    })
}

/// A random discretely divergence-free velocity field, from a stream
/// function on the dual vertices scaled by the local density so face
/// velocities stay order one. The 1d kernel holds only the zero
/// field.
pub fn kernel_field(op: &WeightedLaplacian, seed: u64) -> Result<FaceField> {
    if op.dim() != 2 {
        return Err(Error::TrivialKernel { dim: op.dim() });
    }
    let shape = op.density().shape().to_vec();
    let (n0, n1) = (shape[0], shape[1]);
    let rho = op.density().rho();
    let h = op.density().spacing().to_vec();
    let mut rng = seeds::rng(seed, 0x6b65);

    // stream values at the dual vertices between 2x2 cell blocks
    let mut eta = vec![0.0f64; (n0 - 1) * (n1 - 1)];
    for i0 in 0..n0 - 1 {
        for i1 in 0..n1 - 1 {
            let local = 0.25
                * (rho[i0 * n1 + i1]
                    + rho[i0 * n1 + i1 + 1]
                    + rho[(i0 + 1) * n1 + i1]
                    + rho[(i0 + 1) * n1 + i1 + 1]);
            eta[i0 * (n1 - 1) + i1] = local * rng.gen_range(-1.0..1.0);
        }
    }
    let eta_at = |i0: isize, i1: isize| -> f64 {
        if i0 < 0 || i1 < 0 || i0 >= (n0 - 1) as isize || i1 >= (n1 - 1) as isize {
            0.0
        } else {
            eta[i0 as usize * (n1 - 1) + i1 as usize]
        }
    };

    let mut out = op.zero_face_field();
    // fluxes phi = w v / h telescope the stream function, so every
    // cell's signed flux sum cancels term by term
    let faces0: Vec<(usize, usize, f64)> = op.face_list(0).collect();
    let faces1: Vec<(usize, usize, f64)> = op.face_list(1).collect();
    {
        let comp0 = &mut out.comps_mut()[0];
        for (slot, (p, _, w)) in comp0.iter_mut().zip(&faces0) {
            let (i0, i1) = (p / n1, p % n1);
            let phi = eta_at(i0 as isize, i1 as isize) - eta_at(i0 as isize, i1 as isize - 1);
            *slot = phi * h[0] / w;
        }
    }
    {
        let comp1 = &mut out.comps_mut()[1];
        for (slot, (p, _, w)) in comp1.iter_mut().zip(&faces1) {
            let (i0, i1) = (p / n1, p % n1);
            let phi = -(eta_at(i0 as isize, i1 as isize) - eta_at(i0 as isize - 1, i1 as isize));
            *slot = phi * h[1] / w;
        }
    }
    let nrm = op.face_norm(&out);
    if nrm <= 0.0 {
        return Err(Error::invalid("stream sample degenerated to zero"));
    }
    out.scale(1.0 / nrm);
    Ok(out)
}

/// A mean-free random grid field with unit weighted norm, blurred
/// over `rel_width` of each axis extent. Raw per-point noise loads
/// the marginally resolved oscillatory modes where explicit schemes
/// decay slower than the physical rate; blurring keeps the measured
/// rate on the physical branch.
pub fn smooth_random_field(
    op: &WeightedLaplacian,
    seed: u64,
    rel_width: f64,
) -> Result<Vec<f64>> {
    if !(rel_width > 0.0 && rel_width < 0.5) {
        return Err(Error::invalid("smoothing width must sit in (0, 0.5)"));
    }
    let shape = op.density().shape().to_vec();
    let mut rng = seeds::rng(seed, 0x736d);
    let mut field: Vec<f64> = (0..op.n()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    for (axis, &len) in shape.iter().enumerate() {
        let sigma = rel_width * (len as f64 - 1.0);
        field = blur_axis(&field, &shape, axis, len, sigma);
    }
    let mean = op.mean(&field);
    for v in field.iter_mut() {
        *v -= mean;
    }
    let nrm = op.norm(&field);
    if nrm <= 0.0 {
        return Err(Error::invalid("noise sample degenerated to zero"));
    }
    for v in field.iter_mut() {
        *v /= nrm;
    }
    Ok(field)
}

/// Truncated Gaussian blur along one axis of a row-major grid, with
/// edge kernels renormalized over the in-range taps.
fn blur_axis(field: &[f64], shape: &[usize], axis: usize, len: usize, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return field.to_vec();
    }
    let reach = (3.0 * sigma).ceil() as isize;
    let weights: Vec<f64> = (-reach..=reach)
        .map(|o| (-0.5 * (o as f64 / sigma) * (o as f64 / sigma)).exp())
        .collect();
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut out = vec![0.0f64; field.len()];
    for b in 0..outer {
        for j in 0..stride {
            let base = b * len * stride + j;
            for i in 0..len {
                let mut acc = 0.0;
                let mut wsum = 0.0;
                for (w, o) in weights.iter().zip(-reach..=reach) {
                    let p = i as isize + o;
                    if p < 0 || p >= len as isize {
                        continue;
                    }
                    acc += w * field[base + p as usize * stride];
                    wsum += w;
                }
                out[base + i * stride] = acc / wsum;
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::laplace::SpectrumMethod;
    use crate::measure::{gaussian_density, GridDensity};

    fn gaussian_op(n: usize) -> WeightedLaplacian {
        let g = gaussian_density(&[0.0], &[1.0], &[(-10.0, 10.0)], &[n]).unwrap();
        WeightedLaplacian::assemble(&g)
    }

    fn gaussian_op_2d(n: usize) -> WeightedLaplacian {
        let g = gaussian_density(&[0.0, 0.0], &[1.0, 1.0], &[(-7.0, 7.0), (-7.0, 7.0)], &[n, n])
            .unwrap();
        WeightedLaplacian::assemble(&g)
    }

    #[test]
    fn one_dimensional_split_has_no_divergence_free_part() {
        let op = gaussian_op(401);
        let s = op.spectrum(6).unwrap();
        let mut v = op.zero_face_field();
        for (i, slot) in v.comps_mut()[0].iter_mut().enumerate() {
            *slot = ((i % 17) as f64 * 0.11).sin();
        }
        let (pot, divfree, resid) = helmholtz_decompose(&s, &op, &v);
        assert!(op.face_norm(&divfree) == 0.0);
        assert!(resid == 0.0);
        assert!(op.mean(&pot).abs() < 1e-12);
        // gradient of the potential reproduces the field exactly
        let g = op.grad(&pot);
        let mut diff = v.clone();
        diff.axpy(-1.0, &g);
        assert!(op.face_norm(&diff) <= 1e-12 * op.face_norm(&v));
    }

    #[test]
    fn gradient_fields_round_trip_through_the_split() {
        let op = gaussian_op_2d(21);
        let s = op.spectrum_with(12, &SpectrumMethod::Direct).unwrap();
        let w = s.mode(3).to_vec();
        let v = op.grad(&w);
        let (pot, divfree, _) = helmholtz_decompose(&s, &op, &v);
        let mut diff = pot.clone();
        for (d, wi) in diff.iter_mut().zip(&w) {
            *d -= wi;
        }
        let mean = op.mean(&diff);
        let centered: Vec<f64> = diff.iter().map(|d| d - mean).collect();
        assert!(op.norm(&centered) <= 1e-8, "potential mismatch");
        assert!(op.face_norm(&divfree) <= 1e-8, "leftover divergence-free part");
    }

    #[test]
    fn stream_fields_have_no_gradient_part() {
        let op = gaussian_op_2d(21);
        let s = op.spectrum_with(12, &SpectrumMethod::Direct).unwrap();
        let v = kernel_field(&op, 11).unwrap();
        // weak divergence vanishes against every computed mode
        for idx in 0..s.k() {
            let pairing = op.face_inner(&op.grad(s.mode(idx)), &v);
            assert!(pairing.abs() <= 1e-10, "mode {idx} pairing {pairing}");
        }
        let (pot, divfree, resid) = helmholtz_decompose(&s, &op, &v);
        let grad_norm = op.face_norm(&op.grad(&pot));
        assert!(grad_norm <= 1e-6, "gradient part {grad_norm}");
        let mut diff = divfree.clone();
        diff.axpy(-1.0, &v);
        assert!(op.face_norm(&diff) <= 1e-6);
        assert!(resid <= 1e-9, "divergence residual {resid}");
        assert!(matches!(
            kernel_field(&gaussian_op(101), 3),
            Err(Error::TrivialKernel { dim: 1 })
        ));
    }

    #[test]
    fn eigen_initial_data_projects_onto_a_single_branch() {
        let op = gaussian_op(801);
        let s = op.spectrum(4).unwrap();
        // overdamped so both branches are real and representable
        let c = LganCoefficients::new(4.0, 1.0, 0.0).unwrap();
        let xi = s.xis()[1];
        let disc = (c.alpha * c.alpha - 4.0 * c.beta * c.beta * xi).sqrt();
        let lp = 0.5 * (-c.alpha + disc);
        let u0 = s.mode(1).to_vec();
        // v0 = (beta / lambda+) grad w puts all weight on one branch
        let mut v0 = op.grad(&u0);
        v0.scale(c.beta / lp);
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 3).unwrap();
        assert!(e.c0.abs() < 1e-10);
        let m = &e.modes[0];
        match &m.coeffs {
            ModeCoeffs::Distinct { c_plus, c_minus } => {
                assert!((c_plus.re - 1.0).abs() < 1e-6, "c+ = {c_plus}");
                assert!(c_minus.norm() < 1e-6, "c- = {c_minus}");
            }
            other => panic!("expected distinct branch, got {other:?}"),
        }
        for m in &e.modes[1..] {
            if let ModeCoeffs::Distinct { c_plus, c_minus } = &m.coeffs {
                assert!(c_plus.norm() + c_minus.norm() < 1e-6);
            }
        }
        assert!(e.truncation_residual < 1e-8);
    }

    #[test]
    fn resting_velocity_splits_the_branches_evenly() {
        let op = gaussian_op(801);
        let s = op.spectrum(3).unwrap();
        let c = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();
        let u0 = s.mode(1).to_vec();
        let v0 = op.zero_face_field();
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 2).unwrap();
        let m = &e.modes[0];
        if let ModeCoeffs::Distinct { c_plus, c_minus } = &m.coeffs {
            assert!(((c_plus + c_minus) - Complex64::new(1.0, 0.0)).norm() < 1e-8);
            let p0 = c_plus / m.lambda_plus + c_minus / m.lambda_minus;
            assert!(p0.norm() < 1e-10, "initial potential amplitude {p0}");
        } else {
            panic!("expected distinct branch");
        }
    }

    #[test]
    fn constant_data_keeps_only_the_mean() {
        let op = gaussian_op(401);
        let s = op.spectrum(4).unwrap();
        let c = LganCoefficients::new(2.0, 1.0, 0.0).unwrap();
        let u0 = vec![3.0; op.n()];
        let v0 = op.zero_face_field();
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 3).unwrap();
        assert!((e.c0 - 3.0).abs() < 1e-10);
        for m in &e.modes {
            if let ModeCoeffs::Distinct { c_plus, c_minus } = &m.coeffs {
                assert!(c_plus.norm() + c_minus.norm() < 1e-8);
            }
        }
        // the mean decays as a bare exponential
        let times: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let tr = evolve_analytic(&e, &c, &times).unwrap();
        for (t, m) in times.iter().zip(&tr.mean_u) {
            assert!((m - 3.0 * (-2.0 * t).exp()).abs() <= 1e-12);
        }
    }

    #[test]
    fn undamped_modes_keep_their_amplitude() {
        let op = gaussian_op(801);
        let s = op.spectrum(3).unwrap();
        let c = LganCoefficients::new(0.0, 1.0, 0.0).unwrap();
        let u0 = s.mode(1).to_vec();
        let v0 = op.zero_face_field();
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 2).unwrap();
        let times: Vec<f64> = (0..=600).map(|i| i as f64 * 0.05).collect();
        let tr = evolve_analytic(&e, &c, &times).unwrap();
        // energy u^2 + xi p^2 is conserved; the norm itself oscillates
        let xi = e.modes[0].xi;
        for t in &times {
            let (u, p) = mode_values(&e.modes[0], *t);
            let energy = u * u + xi * p * p;
            assert!(
                (energy - 1.0).abs() <= 1e-8 * (1.0 + *t),
                "energy drift {energy} at t={t}"
            );
        }
        assert!(tr.u_norms.iter().cloned().fold(0.0, f64::max) <= 1.0 + 1e-8);
    }

    #[test]
    fn least_squares_losses_decay_at_half_rate() {
        let op = gaussian_op(1201);
        let s = op.spectrum(9).unwrap();
        let c = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();
        // generic data spread over eight modes
        let mut u0 = vec![0.0; op.n()];
        for (j, w) in s.modes().iter().enumerate().skip(1) {
            let amp = 1.0 / (1.0 + j as f64);
            for (u, wi) in u0.iter_mut().zip(w) {
                *u += amp * wi;
            }
        }
        let v0 = op.zero_face_field();
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 8).unwrap();
        let times: Vec<f64> = (0..=400).map(|i| i as f64 * 0.05).collect();
        let tr = evolve_analytic(&e, &c, &times).unwrap();
        assert!(
            (tr.measured_rate + 0.5).abs() <= 0.025,
            "rate {} vs -0.5",
            tr.measured_rate
        );
        // norm bound with spectral abscissa -1/2
        let bound_violated = times.iter().zip(&tr.u_norms).any(|(t, un)| {
            *un > 2.0 * tr.u_norms[0] * (-0.5 * t).exp() * (1.0 + 1e-6)
        });
        assert!(!bound_violated);
    }

    #[test]
    fn confluent_modes_follow_the_double_root_solution() {
        let op = gaussian_op(1201);
        let s = op.spectrum(2).unwrap();
        let xi = s.xis()[1];
        let c = crate::lgan::optimal_parameters(1.0, xi, None).unwrap();
        let u0 = s.mode(1).to_vec();
        let v0 = op.zero_face_field();
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 1).unwrap();
        let m = &e.modes[0];
        assert!(matches!(m.coeffs, ModeCoeffs::Confluent { .. }));
        let l0 = m.lambda_plus.re;
        assert!((l0 + c.beta.abs() * xi.sqrt()).abs() < 1e-9);
        if let ModeCoeffs::Confluent { a, b, p, q } = m.coeffs {
            assert!((a - 1.0).abs() < 1e-9);
            assert!(p.abs() < 1e-10);
            // from the system: b = l0 a when p = 0, q = beta a
            assert!((b - l0).abs() < 1e-9);
            assert!((q - c.beta).abs() < 1e-9);
        }
        // and the decay is monotone after the transient hump
        let times: Vec<f64> = (0..=300).map(|i| i as f64 * 0.1).collect();
        let tr = evolve_analytic(&e, &c, &times).unwrap();
        let tail: Vec<f64> = tr.u_norms[100..].to_vec();
        assert!(tail.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    }

    #[test]
    fn euler_amplifies_each_mode_by_the_predicted_modulus() {
        // uniform weight so the discrete modes are exact cosines; an
        // eigensolver mode would carry residual into the step factor
        let n = 129usize;
        let m = n - 1;
        let h = 1.0 / m as f64;
        let g = crate::measure::GridDensity::from_values(&[(0.0, 1.0)], &[n], vec![1.0; n])
            .unwrap();
        let op = WeightedLaplacian::assemble(&g);
        let c = LganCoefficients::new(0.0, 1.3, 0.0).unwrap();
        // small enough that the fastest grid mode grows mildly, so
        // roundoff seeded there cannot outrun the tracked mode
        let tau = 1e-3;
        let cfg = IntegratorConfig {
            scheme: Scheme::Euler,
            tau,
            steps: 200,
            gamma: 0.0,
            store_every: 0,
        };
        for k in [1usize, 3, 7] {
            let theta = k as f64 * std::f64::consts::PI / m as f64;
            let xi = 4.0 / (h * h) * (theta / 2.0).sin().powi(2);
            let mut u0: Vec<f64> = (0..n).map(|i| (theta * i as f64).cos()).collect();
            let mean = op.mean(&u0);
            u0.iter_mut().for_each(|u| *u -= mean);
            let v0 = op.zero_face_field();
            let tr = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
            let want = euler_mode_modulus(&c, xi, tau).unwrap();
            for i in 1..tr.times.len() {
                let e_prev = tr.u_norms[i - 1].powi(2) + tr.v_norms[i - 1].powi(2);
                let e_cur = tr.u_norms[i].powi(2) + tr.v_norms[i].powi(2);
                let step_factor = (e_cur / e_prev).sqrt();
                // roundoff leaks into the stored norms a little more
                // with every step
                let tol = 1e-10 * (i as f64) * want;
                assert!(
                    (step_factor - want).abs() <= tol,
                    "mode {k} step {i}: {step_factor} vs {want}"
                );
            }
            assert!(want > 1.0 && !tr.diverged);
        }
    }

    #[test]
    fn heun_matches_the_analytic_trace() {
        let op = gaussian_op(601);
        let s = op.spectrum(4).unwrap();
        let c = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();
        let mut u0 = vec![0.0; op.n()];
        for w in s.modes().iter().skip(1) {
            for (u, wi) in u0.iter_mut().zip(w) {
                *u += wi;
            }
        }
        let v0 = op.zero_face_field();
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 3).unwrap();
        let tau = 1e-3;
        let steps = 5000;
        let cfg = IntegratorConfig {
            scheme: Scheme::Heun,
            tau,
            steps,
            gamma: 0.0,
            store_every: 0,
        };
        let tr_n = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
        let times: Vec<f64> = tr_n.times[1..].to_vec();
        let tr_a = evolve_analytic(&e, &c, &times).unwrap();
        for (i, t) in times.iter().enumerate() {
            let a = tr_a.u_norms[i];
            let n = tr_n.u_norms[i + 1];
            assert!(
                (a - n).abs() <= 1e-4 * (1.0 + a),
                "t={t}: analytic {a} vs heun {n}"
            );
        }
    }

    #[test]
    fn integrator_orders_show_in_terminal_errors() {
        let op = gaussian_op(401);
        let s = op.spectrum(2).unwrap();
        let c = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();
        let u0 = s.mode(1).to_vec();
        let v0 = op.zero_face_field();
        let e = project_initial_conditions(&s, &op, &c, &u0, &v0, 1).unwrap();
        let horizon = 2.0;
        let terminal_err = |scheme: Scheme, tau: f64| -> f64 {
            let steps = (horizon / tau).round() as usize;
            let cfg = IntegratorConfig {
                scheme,
                tau,
                steps,
                gamma: 0.0,
                store_every: 0,
            };
            let tr = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
            let ta = evolve_analytic(&e, &c, &[horizon]).unwrap();
            (tr.u_norms.last().unwrap() - ta.u_norms[0]).abs()
        };
        let he = terminal_err(Scheme::Heun, 0.02) / terminal_err(Scheme::Heun, 0.01);
        assert!((3.2..4.8).contains(&he), "heun refinement ratio {he}");
        let ee = terminal_err(Scheme::Euler, 0.02) / terminal_err(Scheme::Euler, 0.01);
        assert!((1.6..2.4).contains(&ee), "euler refinement ratio {ee}");
    }

    #[test]
    fn numeric_mean_follows_the_scalar_recurrence() {
        let op = gaussian_op(301);
        let c = LganCoefficients::new(0.8, 1.0, 0.0).unwrap();
        let u0 = vec![1.0; op.n()];
        let v0 = op.zero_face_field();
        let cfg = IntegratorConfig {
            scheme: Scheme::Euler,
            // keeps tau * gamma * xi_max under the explicit diffusion
            // stability bound; high modes must stay tame for the mean
            // cancellation to hold at roundoff size
            tau: 1e-3,
            steps: 300,
            gamma: 0.3,
            store_every: 0,
        };
        let tr = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
        let mut expect = 1.0f64;
        for (i, m) in tr.mean_u.iter().enumerate() {
            // divergence terms cancel in the mean only to roundoff
            // sized by the field scale, accumulating linearly
            let tol = 1e-10 * (i as f64 + 1.0);
            assert!(
                (m - expect).abs() <= tol,
                "step {i}: mean {m} vs {expect}"
            );
            expect *= 1.0 - cfg.tau * c.alpha;
        }
    }

    #[test]
    fn long_euler_runs_diverge_and_are_flagged() {
        let op = gaussian_op(301);
        let s = op.spectrum(2).unwrap();
        let c = LganCoefficients::new(0.0, 2.0, 0.0).unwrap();
        let u0 = s.mode(1).to_vec();
        let v0 = op.zero_face_field();
        let cfg = IntegratorConfig {
            scheme: Scheme::Euler,
            tau: 0.5,
            steps: 100_000,
            gamma: 0.0,
            store_every: 0,
        };
        let tr = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
        assert!(tr.diverged);
        assert!(tr.times.len() < 100_001);
        assert!(tr.u_norms.iter().all(|x| x.is_finite()));

        // a huge step against a stiff operator trips the step-size flag
        let cfg = IntegratorConfig {
            scheme: Scheme::Heun,
            tau: 1.0,
            steps: 1,
            gamma: 1.0,
            store_every: 0,
        };
        let tr = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
        assert!(tr.cfl_flagged);
    }

    #[test]
    fn stored_states_sample_the_requested_stride() {
        let op = gaussian_op(301);
        let c = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();
        let u0 = vec![0.1; op.n()];
        let v0 = op.zero_face_field();
        let cfg = IntegratorConfig {
            scheme: Scheme::Heun,
            tau: 0.01,
            steps: 100,
            gamma: 0.0,
            store_every: 25,
        };
        let tr = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
        let states = tr.states.unwrap();
        assert_eq!(states.len(), 5);
        assert!((states[1].t - 0.25).abs() < 1e-12);
        let bad = IntegratorConfig {
            scheme: Scheme::Heun,
            tau: -1.0,
            steps: 1,
            gamma: 0.0,
            store_every: 0,
        };
        assert!(evolve_numeric(&op, &c, &u0, &v0, &bad).is_err());
    }

    #[test]
    fn divergence_free_fields_ride_through_the_dynamics_untouched() {
        let g = GridDensity::from_values(
            &[(-6.0, 6.0), (-6.0, 6.0)],
            &[25, 25],
            {
                let mut v = Vec::with_capacity(625);
                for i in 0..25 {
                    for j in 0..25 {
                        let x = -6.0 + 0.5 * i as f64;
                        let y = -6.0 + 0.5 * j as f64;
                        v.push((-0.5 * (x * x + y * y)).exp());
                    }
                }
                v
            },
        )
        .unwrap();
        let op = WeightedLaplacian::assemble(&g);
        let c = LganCoefficients::new(1.0, 1.0, 0.0).unwrap();
        let v0 = kernel_field(&op, 21).unwrap();
        let u0 = vec![0.0; op.n()];
        let cfg = IntegratorConfig {
            scheme: Scheme::Heun,
            tau: 0.01,
            steps: 200,
            gamma: 0.0,
            store_every: 20,
        };
        let tr = evolve_numeric(&op, &c, &u0, &v0, &cfg).unwrap();
        for st in tr.states.unwrap() {
            let mut diff = st.v.clone();
            diff.axpy(-1.0, &v0);
            assert!(
                op.face_norm(&diff) <= 1e-8,
                "velocity drift {} at t={}",
                op.face_norm(&diff),
                st.t
            );
            assert!(op.norm(&st.u) <= 1e-8);
        }
    }

    #[test]
    fn smooth_noise_is_normalized_mean_free_and_low_frequency() {
        let g = gaussian_density(&[0.0], &[1.0], &[(-10.0, 10.0)], &[2001]).unwrap();
        let op = WeightedLaplacian::assemble(&g);
        let u = smooth_random_field(&op, 9, 0.025).unwrap();
        let again = smooth_random_field(&op, 9, 0.025).unwrap();
        assert_eq!(u, again);
        assert!(op.mean(&u).abs() <= 1e-12);
        assert!((op.norm(&u) - 1.0).abs() <= 1e-12);
        // raw noise sits near the top of the spectrum, the blur far below
        let raw: Vec<f64> = {
            let mut rng = seeds::rng(9, 0x736d);
            (0..op.n()).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        let smooth_q = op.rayleigh_quotient(&u).unwrap();
        let raw_q = op.rayleigh_quotient(&raw).unwrap();
        assert!(
            smooth_q < 100.0 && smooth_q * 50.0 < raw_q,
            "rayleigh quotients: smooth {smooth_q}, raw {raw_q}"
        );
    }

    #[test]
    fn smooth_noise_blurs_every_axis_of_a_plane() {
        let g = gaussian_density(&[0.0, 0.0], &[1.0, 1.0], &[(-6.0, 6.0), (-6.0, 6.0)], &[41, 41])
            .unwrap();
        let op = WeightedLaplacian::assemble(&g);
        let u = smooth_random_field(&op, 4, 0.05).unwrap();
        assert!(op.mean(&u).abs() <= 1e-12);
        assert!((op.norm(&u) - 1.0).abs() <= 1e-12);
        // neighbor differences along both axes stay small after the blur
        let n1 = 41usize;
        let mut max_d0 = 0.0f64;
        let mut max_d1 = 0.0f64;
        let amp = u.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        for i0 in 0..41 {
            for i1 in 0..41 {
                if i0 + 1 < 41 {
                    max_d0 = max_d0.max((u[(i0 + 1) * n1 + i1] - u[i0 * n1 + i1]).abs());
                }
                if i1 + 1 < 41 {
                    max_d1 = max_d1.max((u[i0 * n1 + i1 + 1] - u[i0 * n1 + i1]).abs());
                }
            }
        }
        assert!(max_d0 < 0.6 * amp && max_d1 < 0.6 * amp, "{max_d0} {max_d1} vs {amp}");
    }
}
