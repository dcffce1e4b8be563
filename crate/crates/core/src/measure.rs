//! Target densities on regular grids and point-sample containers.
//!
//! A [`GridDensity`] is a strictly positive probability density
//! sampled on a uniform tensor grid, normalized so that the Riemann
//! sum over all grid points times the cell volume equals one. Grids
//! are limited to one and two dimensions; higher-dimensional measures
//! are handled through the sample-based estimators instead.
//!
//! Closed-form constructors ([`gaussian_density`], [`mixture_density`])
//! require the domain to cover every component mean by six standard
//! deviations per axis, which keeps the truncated tail mass below
//! machine precision. [`smooth_samples`] applies the same rule to the
//! sample range and the smoothing bandwidth.

use crate::error::{Error, Result};
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

/// Grid operations support at most this many axes.
pub const MAX_GRID_DIM: usize = 2;
/// Required half-width of the domain around each mean, in standard
/// deviations (or bandwidths for sample smoothing).
pub const COVERAGE_SIGMAS: f64 = 6.0;
/// Density floor relative to the maximum value, applied before
/// normalization so the measure stays strictly positive.
pub const DENSITY_FLOOR_REL: f64 = 1e-300;
/// Normalization must hold to this tolerance after construction.
pub const NORMALIZATION_TOL: f64 = 1e-10;

/// Kernel evaluations are truncated beyond this many bandwidths; the
/// neglected mass is below 1e-31 of a single kernel.
const KERNEL_CUTOFF_BW: f64 = 12.0;

/// A strictly positive density on a uniform tensor grid.
///
/// Values are stored row-major (first axis slowest). Each axis has at
/// least three points, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity {
    domain: Vec<(f64, f64)>,
    shape: Vec<usize>,
    spacing: Vec<f64>,
    rho: Vec<f64>,
    log_partition: f64,
}

impl GridDensity {
    /// Validate, floor, and normalize raw grid values.
    pub fn from_values(
        domain: &[(f64, f64)],
        shape: &[usize],
        mut rho: Vec<f64>,
    ) -> Result<Self> {
        let d = domain.len();
        if d == 0 || d != shape.len() {
            return Err(Error::invalid(format!(
                "domain has {d} axes but shape has {}",
                shape.len()
            )));
        }
        if d > MAX_GRID_DIM {
            return Err(Error::DimensionTooHigh {
                dim: d,
                max: MAX_GRID_DIM,
            });
        }
        for (axis, &(lo, hi)) in domain.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "axis {axis}: domain [{lo}, {hi}] is not a finite interval"
                )));
            }
            if shape[axis] < 3 {
                return Err(Error::invalid(format!(
                    "axis {axis}: need at least 3 grid points, got {}",
                    shape[axis]
                )));
            }
        }
        let total: usize = shape.iter().product();
        if rho.len() != total {
            return Err(Error::invalid(format!(
                "expected {total} grid values, got {}",
                rho.len()
            )));
        }
        let mut max = 0.0f64;
        for &v in &rho {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "density values must be finite and nonnegative, found {v}"
                )));
            }
            max = max.max(v);
        }
        if max == 0.0 {
            return Err(Error::invalid("density is identically zero"));
        }
        let floor = DENSITY_FLOOR_REL * max;
        for v in rho.iter_mut() {
            if *v < floor {
                *v = floor;
            }
        }
        let spacing: Vec<f64> = domain
            .iter()
            .zip(shape)
            .map(|(&(lo, hi), &n)| (hi - lo) / (n - 1) as f64)
            .collect();
        let mut out = GridDensity {
            domain: domain.to_vec(),
            shape: shape.to_vec(),
            spacing,
            rho,
            log_partition: 0.0,
        };
        let sum = out.riemann_sum();
        out.log_partition = sum.ln();
        out.normalize();
        Ok(out)
    }

    fn riemann_sum(&self) -> f64 {
        self.rho.iter().sum::<f64>() * self.cell_volume()
    }

    /// Rescale so the Riemann sum is one. Exactly idempotent: when the
    /// sum already equals one to rounding, values are left untouched.
    pub fn normalize(&mut self) {
        let sum = self.riemann_sum();
        if (sum - 1.0).abs() <= 16.0 * f64::EPSILON {
            return;
        }
        for v in self.rho.iter_mut() {
            *v /= sum;
        }
    }

    pub fn dim(&self) -> usize {
        self.domain.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn domain(&self) -> &[(f64, f64)] {
        &self.domain
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    /// Log of the constant divided out at construction.
    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Number of grid points.
    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// Product of the per-axis spacings.
    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    /// Coordinate of grid index `i` along `axis`.
    pub fn coord(&self, axis: usize, i: usize) -> f64 {
        self.domain[axis].0 + self.spacing[axis] * i as f64
    }

    /// Flat row-major index of a multi-index.
    pub fn flat_index(&self, idx: &[usize]) -> usize {
        let mut flat = 0usize;
        for (axis, &i) in idx.iter().enumerate() {
            flat = flat * self.shape[axis] + i;
        }
        flat
    }

    /// Coordinates of the grid point at flat index `flat`.
    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut idx = vec![0usize; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = rem % self.shape[axis];
            rem /= self.shape[axis];
        }
        idx.iter()
            .enumerate()
            .map(|(axis, &i)| self.coord(axis, i))
            .collect()
    }
}

/// One Gaussian component with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureComponent {
    pub weight: f64,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

/// A finite mixture of axis-aligned Gaussians.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureSpec {
    components: Vec<MixtureComponent>,
}

impl MixtureSpec {
    /// Component weights must be positive and sum to one within 1e-9;
    /// the stored weights are renormalized to sum exactly.
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        let d = components[0].mean.len();
        let mut total = 0.0;
        for c in &components {
            if c.mean.len() != d || c.var.len() != d {
                return Err(Error::invalid(
                    "mixture components must share one dimension",
                ));
            }
            if !(c.weight > 0.0) {
                return Err(Error::invalid(format!(
                    "component weight {} must be positive",
                    c.weight
                )));
            }
            for &v in &c.var {
                if !(v > 0.0) || !v.is_finite() {
                    return Err(Error::NonPositiveVariance { value: v });
                }
            }
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!(
                "component weights sum to {total}, expected 1"
            )));
        }
        let components = components
            .into_iter()
            .map(|mut c| {
                c.weight /= total;
                c
            })
            .collect();
        Ok(MixtureSpec { components })
    }

    /// Equal-weight pair of unit-variance modes at 0 and `separation`
    /// on the line.
    pub fn two_modes(separation: f64) -> Self {
        MixtureSpec {
            components: vec![
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![0.0],
                    var: vec![1.0],
                },
                MixtureComponent {
                    weight: 0.5,
                    mean: vec![separation],
                    var: vec![1.0],
                },
            ],
        }
    }

    /// Single standard normal in `d` dimensions.
    pub fn standard_normal(d: usize) -> Self {
        MixtureSpec {
            components: vec![MixtureComponent {
                weight: 1.0,
                mean: vec![0.0; d],
                var: vec![1.0; d],
            }],
        }
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    /// Density value at a point.
    pub fn pdf(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in &self.components {
            let mut term = c.weight;
            for axis in 0..x.len() {
                let z = x[axis] - c.mean[axis];
                let v = c.var[axis];
                term *= (-0.5 * z * z / v).exp() / (2.0 * std::f64::consts::PI * v).sqrt();
            }
            acc += term;
        }
        acc
    }

    /// Draw `n` points; component choice and coordinates both come
    /// from the seeded stream.
    pub fn sample(&self, n: usize, seed: u64) -> SampleSet {
        let d = self.dim();
        let mut rng = crate::seeds::rng(seed, 0);
        let mut pts = Array2::<f64>::zeros((n, d));
        for i in 0..n {
            let mut u: f64 = rng.gen();
            let mut comp = &self.components[self.components.len() - 1];
            for c in &self.components {
                if u < c.weight {
                    comp = c;
                    break;
                }
                u -= c.weight;
            }
            for axis in 0..d {
                let z: f64 = StandardNormal.sample(&mut rng);
                pts[(i, axis)] = comp.mean[axis] + z * comp.var[axis].sqrt();
            }
        }
        SampleSet::new(pts).expect("sampled points are finite")
    }
}

/// Points in d dimensions with optional nonnegative weights.
#[derive(Debug, Clone)]
pub struct SampleSet {
    points: Array2<f64>,
    weights: Option<Vec<f64>>,
}

impl SampleSet {
    pub fn new(points: Array2<f64>) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::invalid("sample set is empty"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample coordinates must be finite"));
        }
        Ok(SampleSet {
            points,
            weights: None,
        })
    }

    pub fn with_weights(points: Array2<f64>, weights: Vec<f64>) -> Result<Self> {
        let mut s = Self::new(points)?;
        if weights.len() != s.n() {
            return Err(Error::invalid("one weight per sample required"));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        if weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("weights must not all vanish"));
        }
        s.weights = Some(weights);
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &Array2<f64> {
        &self.points
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    /// Coordinate-wise rescaled copy (weights preserved).
    pub fn scaled(&self, s: f64) -> SampleSet {
        SampleSet {
            points: &self.points * s,
            weights: self.weights.clone(),
        }
    }

    /// Per-axis sample standard deviation (weighted when weights are
    /// present).
    pub fn std_devs(&self) -> Vec<f64> {
        let n = self.n();
        let d = self.dim();
        let uniform = vec![1.0; n];
        let w = self.weights.as_deref().unwrap_or(&uniform);
        let wsum: f64 = w.iter().sum();
        let mut out = Vec::with_capacity(d);
        for axis in 0..d {
            let mean: f64 = (0..n)
                .map(|i| w[i] * self.points[(i, axis)])
                .sum::<f64>()
                / wsum;
            let var: f64 = (0..n)
                .map(|i| {
                    let z = self.points[(i, axis)] - mean;
                    w[i] * z * z
                })
                .sum::<f64>()
                / wsum;
            out.push(var.sqrt());
        }
        out
    }
}

fn check_coverage(
    domain: &[(f64, f64)],
    centers: impl Iterator<Item = (usize, f64, f64)>,
) -> Result<()> {
    for (axis, center, sigma) in centers {
        let (lo, hi) = domain[axis];
        let need_lo = center - COVERAGE_SIGMAS * sigma;
        let need_hi = center + COVERAGE_SIGMAS * sigma;
        if lo > need_lo || hi < need_hi {
            return Err(Error::DomainTooNarrow {
                axis,
                need_lo,
                need_hi,
                lo,
                hi,
            });
        }
    }
    Ok(())
}

/// Gaussian density with diagonal covariance, tabulated on a grid.
pub fn gaussian_density(
    mean: &[f64],
    var: &[f64],
    domain: &[(f64, f64)],
    shape: &[usize],
) -> Result<GridDensity> {
    if mean.len() != domain.len() || var.len() != domain.len() {
        return Err(Error::invalid(
            "mean, variance, and domain must share one dimension",
        ));
    }
    let spec = MixtureSpec::new(vec![MixtureComponent {
        weight: 1.0,
        mean: mean.to_vec(),
        var: var.to_vec(),
    }])?;
    mixture_density(&spec, domain, shape)
}

/// Mixture-of-Gaussians density tabulated on a grid.
pub fn mixture_density(
    spec: &MixtureSpec,
    domain: &[(f64, f64)],
    shape: &[usize],
) -> Result<GridDensity> {
    let d = domain.len();
    if spec.dim() != d {
        return Err(Error::invalid(
            "mixture dimension does not match the domain",
        ));
    }
    if d > MAX_GRID_DIM {
        return Err(Error::DimensionTooHigh {
            dim: d,
            max: MAX_GRID_DIM,
        });
    }
    check_coverage(
        domain,
        spec.components().iter().flat_map(|c| {
            (0..d).map(move |axis| (axis, c.mean[axis], c.var[axis].sqrt()))
        }),
    )?;
    // tensor structure: per-axis factor tables, then products
    let probe = GridDensity::from_values(
        domain,
        shape,
        vec![1.0; shape.iter().product()],
    )?;
    let mut rho = vec![0.0f64; probe.len()];
    for c in spec.components() {
        let factors: Vec<Vec<f64>> = (0..d)
            .map(|axis| {
                (0..shape[axis])
                    .map(|i| {
                        let z = probe.coord(axis, i) - c.mean[axis];
                        let v = c.var[axis];
                        (-0.5 * z * z / v).exp()
                            / (2.0 * std::f64::consts::PI * v).sqrt()
                    })
                    .collect()
            })
            .collect();
        match d {
            1 => {
                for (r, f) in rho.iter_mut().zip(&factors[0]) {
                    *r += c.weight * f;
                }
            }
            2 => {
                let n1 = shape[1];
                for i0 in 0..shape[0] {
                    let f0 = c.weight * factors[0][i0];
                    for i1 in 0..n1 {
                        rho[i0 * n1 + i1] += f0 * factors[1][i1];
                    }
                }
            }
            _ => unreachable!("dimension checked above"),
        }
    }
    GridDensity::from_values(domain, shape, rho)
}

/// Kernel density estimate of a sample set on a grid, Gaussian kernel
/// with standard deviation `bandwidth` per axis.
pub fn smooth_samples(
    samples: &SampleSet,
    bandwidth: f64,
    domain: &[(f64, f64)],
    shape: &[usize],
) -> Result<GridDensity> {
    let d = samples.dim();
    if d != domain.len() {
        return Err(Error::invalid("sample dimension does not match domain"));
    }
    if d > MAX_GRID_DIM {
        return Err(Error::DimensionTooHigh {
            dim: d,
            max: MAX_GRID_DIM,
        });
    }
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::NonPositiveVariance { value: bandwidth });
    }
    let pts = samples.points();
    check_coverage(
        domain,
        (0..d).flat_map(|axis| {
            let col = pts.column(axis);
            let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            [(axis, lo, bandwidth), (axis, hi, bandwidth)]
        }),
    )?;
    let probe = GridDensity::from_values(
        domain,
        shape,
        vec![1.0; shape.iter().product()],
    )?;
    let n = samples.n();
    let uniform = vec![1.0; n];
    let w = samples.weights().unwrap_or(&uniform);
    let wsum: f64 = w.iter().sum();
    let norm = 1.0 / (wsum * (2.0 * std::f64::consts::PI).sqrt().powi(d as i32) * bandwidth.powi(d as i32));
    let cutoff = KERNEL_CUTOFF_BW * bandwidth;
    let mut rho = vec![0.0f64; probe.len()];
    // per-sample accumulation over the index window within the cutoff
    let window = |axis: usize, x: f64| -> (usize, usize) {
        let h = probe.spacing()[axis];
        let lo = ((x - cutoff - domain[axis].0) / h).floor().max(0.0) as usize;
        let hi_f = ((x + cutoff - domain[axis].0) / h).ceil();
        let hi = (hi_f.max(0.0) as usize).min(shape[axis] - 1);
        (lo.min(shape[axis] - 1), hi)
    };
    let inv2b2 = 1.0 / (2.0 * bandwidth * bandwidth);
    match d {
        1 => {
            for i in 0..n {
                let x = pts[(i, 0)];
                let (lo, hi) = window(0, x);
                for g in lo..=hi {
                    let z = probe.coord(0, g) - x;
                    rho[g] += w[i] * (-z * z * inv2b2).exp();
                }
            }
        }
        2 => {
            let n1 = shape[1];
            for i in 0..n {
                let (x0, x1) = (pts[(i, 0)], pts[(i, 1)]);
                let (lo0, hi0) = window(0, x0);
                let (lo1, hi1) = window(1, x1);
                for g0 in lo0..=hi0 {
                    let z0 = probe.coord(0, g0) - x0;
                    let e0 = w[i] * (-z0 * z0 * inv2b2).exp();
                    for g1 in lo1..=hi1 {
                        let z1 = probe.coord(1, g1) - x1;
                        rho[g0 * n1 + g1] += e0 * (-z1 * z1 * inv2b2).exp();
                    }
                }
            }
        }
        _ => unreachable!("dimension checked above"),
    }
    for v in rho.iter_mut() {
        *v *= norm;
    }
    GridDensity::from_values(domain, shape, rho)
}
