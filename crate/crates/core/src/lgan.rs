//! Spectral map of linearized adversarial training.
//!
//! Near equilibrium the coupled update of discriminator perturbation
//! and generator velocity acts mode by mode on the eigenbasis of the
//! weighted Laplacian. Each eigenvalue `xi` contributes the quadratic
//!
//! ```text
//!   lambda^2 + (alpha + gamma xi) lambda + beta^2 xi = 0
//! ```
//!
//! whose roots decide stability: `alpha` is the curvature of the loss
//! pair at the equilibrium, `beta` the first-order coupling, `gamma`
//! the gradient-penalty weight. This module evaluates the map, picks
//! the penalty that makes the slowest mode critically damped, and
//! reports the spectral abscissa used as the predicted decay rate.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Relative threshold below which the discriminant counts as zero
/// (critically damped double root).
const DISCRIMINANT_REL_TOL: f64 = 1e-12;

/// A loss pair reduced to the derivative values the linearization
/// needs.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossSpec {
    /// Second derivative of the first loss at the equilibrium.
    pub phi1_d2: f64,
    /// Second derivative of the second loss at the equilibrium.
    pub phi2_d2: f64,
    /// First derivative of the second loss at the equilibrium.
    pub phi2_d1: f64,
}

impl LossSpec {
    /// Least-squares pairing: phi1 = (x-1)^2/2, phi2 = (x+1)^2/2.
    pub fn least_squares() -> Self {
        LossSpec {
            phi1_d2: 1.0,
            phi2_d2: 1.0,
            phi2_d1: 1.0,
        }
    }

    /// Linear pairing: phi1 = -x, phi2 = x.
    pub fn linear() -> Self {
        LossSpec {
            phi1_d2: 0.0,
            phi2_d2: 0.0,
            phi2_d1: 1.0,
        }
    }
}

/// Coefficients of the linearized mode quadratic.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LganCoefficients {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl LganCoefficients {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Result<Self> {
        if !(alpha.is_finite() && beta.is_finite() && gamma.is_finite()) {
            return Err(Error::InvalidLoss {
                reason: "coefficients must be finite".into(),
            });
        }
        if alpha < 0.0 {
            return Err(Error::InvalidLoss {
                reason: format!("alpha must be nonnegative, got {alpha}"),
            });
        }
        if gamma < 0.0 {
            return Err(Error::InvalidLoss {
                reason: format!("gamma must be nonnegative, got {gamma}"),
            });
        }
        if beta == 0.0 {
            return Err(Error::InvalidLoss {
                reason: "beta must be nonzero".into(),
            });
        }
        Ok(LganCoefficients { alpha, beta, gamma })
    }
}

/// Both roots of one mode quadratic with stability flags.
#[derive(Debug, Clone, Copy)]
pub struct ModeEigenvalue {
    pub xi: f64,
    pub plus: Complex64,
    pub minus: Complex64,
    /// Nonzero imaginary part (discriminant below the zero threshold).
    pub oscillatory: bool,
    /// Strictly negative real part.
    pub stable: bool,
}

/// Eigenvalues for a list of Laplacian modes.
#[derive(Debug, Clone)]
pub struct LganEigenvalues {
    modes: Vec<ModeEigenvalue>,
}

impl LganEigenvalues {
    pub fn modes(&self) -> &[ModeEigenvalue] {
        &self.modes
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }
}

/// Linearization of a loss pair: alpha is the mean curvature, beta the
/// first-order coupling, gamma passes through.
pub fn coefficients_from_losses(spec: &LossSpec, gamma: f64) -> Result<LganCoefficients> {
    if !(spec.phi1_d2.is_finite() && spec.phi2_d2.is_finite() && spec.phi2_d1.is_finite()) {
        return Err(Error::InvalidLoss {
            reason: "loss derivatives must be finite".into(),
        });
    }
    let curv = spec.phi1_d2 + spec.phi2_d2;
    if curv < 0.0 {
        return Err(Error::InvalidLoss {
            reason: format!("second derivatives must sum to a nonnegative value, got {curv}"),
        });
    }
    if spec.phi2_d1 == 0.0 {
        return Err(Error::InvalidLoss {
            reason: "phi2 must have nonzero slope at the equilibrium".into(),
        });
    }
    LganCoefficients::new(0.5 * curv, spec.phi2_d1, gamma)
}

/// Damping and discriminant of the quadratic at one mode.
fn mode_parts(c: &LganCoefficients, xi: f64) -> (f64, f64, f64) {
    let a = c.alpha + c.gamma * xi;
    let disc = a * a - 4.0 * c.beta * c.beta * xi;
    let scale = (a * a).max(4.0 * c.beta * c.beta * xi);
    (a, disc, scale)
}

/// Roots of the mode quadratic for every supplied eigenvalue.
///
/// Real parts are never positive for admissible coefficients, so the
/// linearized dynamics cannot diverge; they merely stop contracting
/// when the damping vanishes.
pub fn lgan_eigenvalues(c: &LganCoefficients, xis: &[f64]) -> Result<LganEigenvalues> {
    let mut modes = Vec::with_capacity(xis.len());
    for &xi in xis {
        if !(xi > 0.0) || !xi.is_finite() {
            return Err(Error::invalid(format!(
                "mode eigenvalues must be positive, got {xi}"
            )));
        }
        let (a, disc, scale) = mode_parts(c, xi);
        let zero_band = DISCRIMINANT_REL_TOL * scale;
        let root = Complex64::new(disc, 0.0).sqrt();
        let plus = (Complex64::new(-a, 0.0) + root) / 2.0;
        let minus = (Complex64::new(-a, 0.0) - root) / 2.0;
        modes.push(ModeEigenvalue {
            xi,
            plus,
            minus,
            oscillatory: disc < -zero_band,
            stable: plus.re.max(minus.re) < 0.0,
        });
    }
    Ok(LganEigenvalues { modes })
}

/// Penalty weight (and damping split) that puts the slowest mode
/// exactly at its double root: `alpha + gamma xi_min = 2 |beta|
/// sqrt(xi_min)`. With `alpha_choice` omitted the whole budget goes to
/// the penalty. The damping share caps at `|beta| sqrt(xi_min)`, the
/// point where `gamma` reaches `|beta|/sqrt(xi_min)`; any larger
/// `alpha` would reopen oscillations above `xi_min`.
pub fn optimal_parameters(
    beta: f64,
    xi_min: f64,
    alpha_choice: Option<f64>,
) -> Result<LganCoefficients> {
    if beta == 0.0 || !beta.is_finite() {
        return Err(Error::InvalidLoss {
            reason: "beta must be finite and nonzero".into(),
        });
    }
    if !(xi_min > 0.0) || !xi_min.is_finite() {
        return Err(Error::invalid(format!(
            "xi_min must be positive, got {xi_min}"
        )));
    }
    let sqrt_xi = xi_min.sqrt();
    let alpha_max = beta.abs() * sqrt_xi;
    let alpha = alpha_choice.unwrap_or(0.0);
    if !alpha.is_finite() || alpha < 0.0 || alpha > alpha_max {
        return Err(Error::InfeasibleAlpha {
            alpha,
            max: alpha_max,
        });
    }
    let gamma = (2.0 * beta.abs() * sqrt_xi - alpha) / xi_min;
    LganCoefficients::new(alpha, beta, gamma)
}

/// Spectral abscissa of the linearized dynamics: the real part of the
/// slow root at `xi_min`, the decay-rate bound of the mode expansion.
/// Without a penalty this also bounds every faster mode; with a
/// penalty the far tail relaxes toward `-beta^2/gamma` instead, which
/// can sit above this value.
pub fn max_real_part(c: &LganCoefficients, xi_min: f64) -> Result<f64> {
    if !(xi_min > 0.0) || !xi_min.is_finite() {
        return Err(Error::invalid(format!(
            "xi_min must be positive, got {xi_min}"
        )));
    }
    let (a, disc, _) = mode_parts(c, xi_min);
    if disc >= 0.0 {
        Ok(0.5 * (-a + disc.sqrt()))
    } else {
        Ok(-0.5 * a)
    }
}

/// Per-step amplification modulus of the forward Euler scheme on one
/// mode: `|1 + tau lambda|`, maximized over the two roots.
pub fn euler_mode_modulus(c: &LganCoefficients, xi: f64, tau: f64) -> Result<f64> {
    if !(xi > 0.0) || !xi.is_finite() {
        return Err(Error::invalid(format!(
            "mode eigenvalue must be positive, got {xi}"
        )));
    }
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::invalid(format!(
            "step size must be nonnegative, got {tau}"
        )));
    }
    let (a, disc, _) = mode_parts(c, xi);
    if disc < 0.0 {
        // complex pair: |1 + tau lambda|^2 collapses to a real form
        Ok((1.0 - tau * a + tau * tau * c.beta * c.beta * xi).max(0.0).sqrt())
    } else {
        let r = disc.sqrt();
        let m_plus = (1.0 + tau * 0.5 * (-a + r)).abs();
        let m_minus = (1.0 + tau * 0.5 * (-a - r)).abs();
        Ok(m_plus.max(m_minus))
    }
}
