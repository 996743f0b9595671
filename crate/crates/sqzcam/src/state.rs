//! Closed-form photon statistics for the displaced squeezed vacuum state.
//!
//! The state is parameterized by the mean photon number of the displacement
//! (`n_alpha`, the leaked pump), the mean photon number of the squeezed
//! vacuum (`n_s`), and the relative phase `phi1` between them. Attenuation
//! enters as binomial thinning with transmission `eta`; thinning leaves the
//! quadratic noise coefficient `q` of the law
//! `var(n) = mean(n) + q * mean(n)^2` invariant, which is what makes `q` a
//! per-pixel-measurable squeezing witness.
//!
//! Every function here is a pure closed form; the `fock` module provides the
//! independent brute-force check of the same moments.

use serde::{Deserialize, Serialize};

use crate::error::{Result, SqzError};

/// Displaced-squeezed-vacuum parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateParams {
    /// Mean photon number of the leaked pump, |alpha * theta|^2.
    pub n_alpha: f64,
    /// Mean photon number of the squeezed vacuum, sinh^2 r.
    pub n_s: f64,
    /// Displacement-squeezing relative phase in radians.
    pub phi1: f64,
}

impl StateParams {
    pub fn new(n_alpha: f64, n_s: f64, phi1: f64) -> Result<Self> {
        if !(n_alpha.is_finite() && n_alpha >= 0.0) {
            return Err(SqzError::InvalidParameter(format!(
                "n_alpha = {n_alpha} must be finite and >= 0"
            )));
        }
        if !(n_s.is_finite() && n_s >= 0.0) {
            return Err(SqzError::InvalidParameter(format!(
                "n_s = {n_s} must be finite and >= 0"
            )));
        }
        if !phi1.is_finite() {
            return Err(SqzError::InvalidParameter(format!(
                "phi1 = {phi1} must be finite"
            )));
        }
        Ok(Self { n_alpha, n_s, phi1 })
    }

    /// Squeezing parameter r with sinh^2 r = n_s.
    pub fn squeezing_parameter(&self) -> f64 {
        self.n_s.sqrt().asinh()
    }

    /// Mean photon number of the pump before the beam splitter, given the
    /// mixing angle theta: n_pump = n_alpha / theta^2.
    pub fn pump_mean(&self, theta: f64) -> f64 {
        self.n_alpha / (theta * theta)
    }

    /// Same parameters at a different relative phase.
    pub fn with_phase(&self, phi1: f64) -> Self {
        Self { phi1, ..*self }
    }

    /// Total mean photon number n_alpha + n_s.
    pub fn mean_total(&self) -> f64 {
        self.n_alpha + self.n_s
    }

    /// Total photon-number variance of the state.
    ///
    /// `n_alpha + 2 n_alpha n_s + 2 n_s + 2 n_s^2
    ///  - 2 cos(2 phi1) n_alpha sqrt(n_s (1 + n_s))`
    pub fn variance_total(&self) -> f64 {
        let (a, s) = (self.n_alpha, self.n_s);
        a + 2.0 * a * s + 2.0 * s + 2.0 * s * s
            - 2.0 * (2.0 * self.phi1).cos() * a * (s * (1.0 + s)).sqrt()
    }

    /// Shot-noise reference: the variance of coherent light with the same
    /// mean photon number.
    pub fn shot_noise_limit(&self) -> f64 {
        self.mean_total()
    }

    /// Mean photon number after attenuation with transmission eta.
    pub fn pixel_mean(&self, eta: f64) -> Result<f64> {
        check_transmission(eta)?;
        Ok(eta * self.mean_total())
    }

    /// Photon-number variance after attenuation with transmission eta.
    ///
    /// Binomial thinning of the full-state statistics:
    /// `V(eta) = eta (1 - eta) M + eta^2 V(1)` with `M = mean_total` and
    /// `V(1) = variance_total`. Equivalently
    /// `eta M + eta^2 [ n_s (1 + 2 n_alpha + 2 n_s)
    ///                  - 2 n_alpha sqrt(n_s (1 + n_s)) cos(2 phi1) ]`.
    pub fn pixel_variance(&self, eta: f64) -> Result<f64> {
        check_transmission(eta)?;
        let m = self.mean_total();
        let v1 = self.variance_total();
        Ok(eta * (1.0 - eta) * m + eta * eta * v1)
    }

    /// Quadratic coefficient of the noise law var = mean + q * mean^2.
    ///
    /// `q < 0` certifies sub-Poissonian statistics. Invariant under
    /// attenuation, so a single pixel measures the same q as the full beam.
    pub fn q_coefficient(&self) -> Result<f64> {
        let m = self.mean_total();
        if m <= 0.0 {
            return Err(SqzError::InvalidParameter(
                "q undefined for zero mean photon number".into(),
            ));
        }
        let (a, s) = (self.n_alpha, self.n_s);
        let numer = s * (1.0 + 2.0 * a + 2.0 * s)
            - 2.0 * a * (s * (1.0 + s)).sqrt() * (2.0 * self.phi1).cos();
        Ok(numer / (m * m))
    }

    /// Quadrature variance seen by homodyne detection on the squeezed field.
    ///
    /// `(2 n_s + 1 - 2 sqrt(n_s (n_s + 1)) cos(phi1)) / 2`; note the single
    /// (not doubled) phase argument, matching the homodyne local-oscillator
    /// convention.
    pub fn homodyne_quadrature_variance(&self) -> f64 {
        let s = self.n_s;
        0.5 * (2.0 * s + 1.0 - 2.0 * (s * (s + 1.0)).sqrt() * self.phi1.cos())
    }
}

fn check_transmission(eta: f64) -> Result<()> {
    if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
        return Err(SqzError::InvalidTransmission(eta));
    }
    Ok(())
}

/// One sample of a phase sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub phi1: f64,
    pub variance: f64,
    pub shot_noise_limit: f64,
}

/// Total-variance and shot-noise curves over a list of phases.
pub fn phase_sweep(p: &StateParams, phases: &[f64]) -> Result<Vec<SweepPoint>> {
    if phases.is_empty() {
        return Err(SqzError::DegenerateInput("empty phase list".into()));
    }
    Ok(phases
        .iter()
        .map(|&phi1| {
            let q = p.with_phase(phi1);
            SweepPoint {
                phi1,
                variance: q.variance_total(),
                shot_noise_limit: q.shot_noise_limit(),
            }
        })
        .collect())
}

/// Phase at which the total variance crosses the shot-noise limit, i.e. the
/// root of q(phi1) = 0 in [0, pi/2]. `None` when the state never dips below
/// shot noise (squeezing not visible over the thermal-like floor).
pub fn crossing_phase(p: &StateParams) -> Option<f64> {
    let (a, s) = (p.n_alpha, p.n_s);
    if s <= 0.0 || a <= 0.0 {
        return None;
    }
    let ratio = s * (1.0 + 2.0 * a + 2.0 * s) / (2.0 * a * (s * (1.0 + s)).sqrt());
    if ratio > 1.0 {
        None
    } else {
        Some(0.5 * ratio.acos())
    }
}

/// Variance of an n_s estimate extracted from homodyne detection:
/// `2 n_s (n_s + 1)`, independent of which extremal quadrature is probed.
pub fn homodyne_sensitivity(n_s: f64) -> f64 {
    2.0 * n_s * (n_s + 1.0)
}

/// The error-propagation quotient behind [`homodyne_sensitivity`]:
/// signal variance over squared derivative, with the fourth moment of the
/// Gaussian quadrature taken as twice the squared second moment,
/// `2 <dX^2>^2 / |d<dX^2>/dn_s|^2`, evaluated at phase `phi1`.
///
/// At the extremal phases (cos phi1 = +-1, the squeezed and anti-squeezed
/// quadratures) this equals `2 n_s (n_s + 1)` exactly; at intermediate
/// phases the quotient is larger, i.e. the extremal quadratures are the
/// optimal operating points.
pub fn homodyne_sensitivity_quotient(n_s: f64, phi1: f64) -> f64 {
    let p = StateParams {
        n_alpha: 0.0,
        n_s,
        phi1,
    };
    let var_x = p.homodyne_quadrature_variance();
    // d<dX^2>/dn_s at fixed phi1
    let c = phi1.cos();
    let root = (n_s * (n_s + 1.0)).sqrt();
    let deriv = 1.0 - c * (2.0 * n_s + 1.0) / (2.0 * root);
    2.0 * var_x * var_x / (deriv * deriv)
}

/// q rewritten in terms of directly measured per-pixel moments:
/// `q = (V - n) / n^2`.
pub fn q_from_moments(mean: f64, variance: f64) -> f64 {
    (variance - mean) / (mean * mean)
}

/// Partial of q = (V - n)/n^2 with respect to the mean at fixed V.
pub fn dq_dmean(mean: f64, variance: f64) -> f64 {
    -(1.0 + 2.0 * q_from_moments(mean, variance) * mean) / (mean * mean)
}

/// Partial of q = (V - n)/n^2 with respect to the variance at fixed n.
pub fn dq_dvariance(mean: f64) -> f64 {
    1.0 / (mean * mean)
}

/// Partial of the closed-form q with respect to n_s at fixed n_alpha, phi1.
pub fn dq_dns(p: &StateParams) -> f64 {
    let (a, s) = (p.n_alpha, p.n_s);
    let c = (2.0 * p.phi1).cos();
    let t = a + s;
    let root = (s * (1.0 + s)).sqrt();
    let numer = s * (1.0 + 2.0 * a + 2.0 * s) - 2.0 * a * root * c;
    let dnumer = 1.0 + 2.0 * a + 4.0 * s - a * c * (1.0 + 2.0 * s) / root;
    dnumer / (t * t) - 2.0 * numer / (t * t * t)
}

/// Variance of an n_s estimate extracted from a single attenuated
/// photon-number sample via the q method.
///
/// Error propagation through q = (V - n)/n^2 with Var(n) = V and the
/// Gaussian fourth-moment rule Var(V) = 2 V^2, divided by the squared
/// closed-form derivative dq/dn_s.
pub fn camera_sensitivity(p: &StateParams, eta: f64) -> Result<f64> {
    check_transmission(eta)?;
    if eta == 0.0 {
        return Err(SqzError::InvalidTransmission(eta));
    }
    if p.n_s <= 0.0 {
        return Err(SqzError::InvalidParameter(
            "camera sensitivity requires n_s > 0".into(),
        ));
    }
    let n = p.pixel_mean(eta)?;
    let v = p.pixel_variance(eta)?;
    let var_q = dq_dmean(n, v).powi(2) * v + dq_dvariance(n).powi(2) * 2.0 * v * v;
    let deriv = dq_dns(p);
    if deriv.abs() < 1e-30 {
        return Err(SqzError::DegenerateDerivative(deriv.abs()));
    }
    Ok(var_q / (deriv * deriv))
}

/// Which side of the shot-noise limit the state's photon statistics sit on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PhaseBranch {
    Squeezed,
    AntiSqueezed,
}

/// Camera-vs-homodyne sensitivity comparison for one operating point.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SensitivityReport {
    pub homodyne_var_ns: f64,
    pub camera_var_ns: f64,
    /// camera_var_ns / homodyne_var_ns; tends to 1 as n_alpha grows.
    pub ratio: f64,
    pub phase_branch: PhaseBranch,
}

pub fn sensitivity_report(p: &StateParams, eta: f64) -> Result<SensitivityReport> {
    let homodyne_var_ns = homodyne_sensitivity(p.n_s);
    let camera_var_ns = camera_sensitivity(p, eta)?;
    let phase_branch = if p.q_coefficient()? < 0.0 {
        PhaseBranch::Squeezed
    } else {
        PhaseBranch::AntiSqueezed
    };
    Ok(SensitivityReport {
        homodyne_var_ns,
        camera_var_ns,
        ratio: camera_var_ns / homodyne_var_ns,
        phase_branch,
    })
}

/// Result of inverting the two measured q coefficients back to photon
/// numbers.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QInversion {
    pub n_s: f64,
    pub n_alpha: f64,
    /// Relative mismatch of (q_as - q_s) against the value implied by the
    /// recovered photon numbers; an independent consistency check on the
    /// two-branch measurement.
    pub consistency_residual: f64,
}

/// Closed-form recovery of (n_s, n_alpha) from the q coefficients of the
/// squeezed and anti-squeezed branches plus the measured total mean.
///
/// The phase terms cancel in `q_s + q_as`, giving
/// `n_s = (q_s + q_as) n_total^2 / (2 (1 + 2 n_total))` exactly;
/// `q_as - q_s = 4 n_alpha sqrt(n_s (n_s + 1)) / n_total^2` supplies the
/// consistency residual.
pub fn invert_q(q_s: f64, q_as: f64, n_total: f64) -> Result<QInversion> {
    if !(n_total.is_finite() && n_total > 0.0) {
        return Err(SqzError::InvalidParameter(format!(
            "n_total = {n_total} must be finite and > 0"
        )));
    }
    let n_s = (q_s + q_as) * n_total * n_total / (2.0 * (1.0 + 2.0 * n_total));
    if n_s < 0.0 || n_s > n_total {
        return Err(SqzError::NonPhysicalRecovery { n_s, n_total });
    }
    let n_alpha = n_total - n_s;
    let expected_diff = 4.0 * n_alpha * (n_s * (n_s + 1.0)).sqrt() / (n_total * n_total);
    let diff = q_as - q_s;
    let consistency_residual = if expected_diff != 0.0 {
        (diff - expected_diff) / expected_diff
    } else {
        diff
    };
    Ok(QInversion {
        n_s,
        n_alpha,
        consistency_residual,
    })
}
