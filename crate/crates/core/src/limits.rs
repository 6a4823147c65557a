//! Closed-form cooling limits and the subspace-population bound.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::operators::DensityMatrix;

/// The first-order formulas are flagged valid when their small parameter
/// is below this value.
pub const VALIDITY_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CoolingLimitReport {
    /// Minimum population left outside the ground state.
    pub p_min: f64,
    /// `πγ/(4g)`.
    pub cooling_factor: f64,
    /// `π/(2g)`.
    pub tau: f64,
    pub validity_parameter: f64,
    pub valid: bool,
}

impl CoolingLimitReport {
    fn new(p_min: f64, gamma: f64, g: f64, validity_parameter: f64) -> Self {
        CoolingLimitReport {
            p_min,
            cooling_factor: PI * gamma / (4.0 * g),
            tau: PI / (2.0 * g),
            validity_parameter,
            valid: validity_parameter < VALIDITY_THRESHOLD,
        }
    }
}

/// Minimum time `π/(2g)` to rotate a state onto an orthogonal one.
pub fn tau_speed_limit(g: f64) -> Result<f64> {
    if !(g.is_finite() && g > 0.0) {
        return Err(Error::Domain(format!("g must be positive, got {g}")));
    }
    Ok(PI / (2.0 * g))
}

fn check_rates(gamma: f64, g: f64) -> Result<()> {
    tau_speed_limit(g)?;
    if !(gamma.is_finite() && gamma >= 0.0) {
        return Err(Error::Domain(format!("gamma must be non-negative, got {gamma}")));
    }
    Ok(())
}

/// Two-level target: `P_min = (πγ/4g) P_T (1 − P_T/4)/(1 − 2P_T)`.
///
/// The formula is singular at `P_T = 1/2`, which is rejected.
pub fn pmin_qubit(gamma: f64, g: f64, p_t: f64) -> Result<CoolingLimitReport> {
    check_rates(gamma, g)?;
    if !(p_t.is_finite() && (0.0..0.5).contains(&p_t)) {
        return Err(Error::Domain(format!("excited population must lie in [0, 1/2), got {p_t}")));
    }
    let factor = PI * gamma / (4.0 * g);
    let p_min = factor * p_t * (1.0 - p_t / 4.0) / (1.0 - 2.0 * p_t);
    let validity = gamma / g * (1.0 - p_t) / (1.0 - 2.0 * p_t);
    Ok(CoolingLimitReport::new(p_min, gamma, g, validity))
}

/// Harmonic target:
/// `P_min = (πγ/4g) n̄ (1 + n̄(3+n̄)/(4(1+n̄)²) + n̄²(3+n̄)/(2(1+n̄)²))`.
pub fn pmin_oscillator(gamma: f64, g: f64, nbar: f64) -> Result<CoolingLimitReport> {
    check_rates(gamma, g)?;
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(Error::Domain(format!("nbar must be non-negative, got {nbar}")));
    }
    let factor = PI * gamma / (4.0 * g);
    let q = (1.0 + nbar).powi(2);
    let p_min = factor * nbar * (1.0 + nbar * (3.0 + nbar) / (4.0 * q) + nbar * nbar * (3.0 + nbar) / (2.0 * q));
    Ok(CoolingLimitReport::new(p_min, gamma, g, gamma / g * (nbar + 1.0)))
}

/// Sum of the `k` largest eigenvalues of `rho`: the most population any
/// `k`-dimensional subspace can hold after an arbitrary unitary.
pub fn max_subspace_population(rho: &DensityMatrix, k: usize) -> Result<f64> {
    if k == 0 || k > rho.dim() {
        return Err(Error::Domain(format!("subspace dimension {k} outside 1..={}", rho.dim())));
    }
    if k == rho.dim() {
        return Ok(1.0);
    }
    let vals = rho.eigenvalues();
    Ok(vals.iter().rev().take(k).sum())
}
