//! Exact truncated Fock-basis computations for small photon numbers.
//!
//! This module is the brute-force ground truth for the closed forms in
//! [`crate::state`]: it builds the photon-number distribution of the
//! displaced squeezed vacuum from a three-term amplitude recurrence, applies
//! loss as an exact binomial convolution, and samples photon counts by
//! inversion. It is a correctness oracle, deliberately unclever about
//! performance.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng;
use statrs::function::gamma::ln_gamma;

use crate::error::{Result, SqzError};
use crate::state::StateParams;

/// Hard cap for automatic cutoff growth in [`dsv_distribution_auto`].
pub const DEFAULT_CUTOFF_CAP: usize = 4096;

/// Default tail tolerance for truncated distributions.
pub const DEFAULT_TAIL_TOL: f64 = 1e-12;

/// A photon-number distribution truncated at a finite cutoff.
#[derive(Debug, Clone)]
pub struct FockDistribution {
    probs: Vec<f64>,
    tail_mass: f64,
}

/// First two moments of a truncated distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Moments {
    pub mean: f64,
    pub variance: f64,
}

impl FockDistribution {
    /// Build from raw probabilities; normalization is taken at face value
    /// and the deficit from 1 becomes the tail mass.
    pub fn from_probs(probs: Vec<f64>, tail_tol: f64) -> Result<Self> {
        if probs.is_empty() {
            return Err(SqzError::InvalidParameter(
                "distribution needs at least the n = 0 entry".into(),
            ));
        }
        if probs.iter().any(|&p| !(0.0..=1.0 + 1e-12).contains(&p)) {
            return Err(SqzError::InvalidParameter(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
        let total = neumaier_sum(&probs);
        let tail_mass = (1.0 - total).max(0.0);
        if tail_mass > tail_tol {
            return Err(SqzError::InsufficientCutoff {
                cutoff: probs.len() - 1,
                tail_mass,
                tail_tol,
            });
        }
        Ok(Self { probs, tail_mass })
    }

    /// Highest photon number represented.
    pub fn cutoff(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Probability mass beyond the cutoff: 1 - sum(probs).
    pub fn tail_mass(&self) -> f64 {
        self.tail_mass
    }

    /// Mean and variance of the truncated distribution. Accuracy is bounded
    /// by the tail mass; size `tail_tol` for the comparison at hand.
    pub fn moments(&self) -> Moments {
        let mut weighted: Vec<f64> = self
            .probs
            .iter()
            .enumerate()
            .map(|(n, &p)| n as f64 * p)
            .collect();
        let mean = neumaier_sum(&weighted);
        for (n, w) in weighted.iter_mut().enumerate() {
            let d = n as f64 - mean;
            *w = d * d * self.probs[n];
        }
        let variance = neumaier_sum(&weighted);
        Moments { mean, variance }
    }

    /// Exact binomial loss channel: each photon survives independently with
    /// probability eta.
    pub fn apply_loss(&self, eta: f64) -> Result<Self> {
        if !(eta.is_finite() && (0.0..=1.0).contains(&eta)) {
            return Err(SqzError::InvalidTransmission(eta));
        }
        if eta == 1.0 {
            return Ok(self.clone());
        }
        let c = self.cutoff();
        let mut out = vec![0.0; c + 1];
        if eta == 0.0 {
            out[0] = neumaier_sum(&self.probs);
        } else {
            let lnfact = ln_factorials(c);
            let (ln_eta, ln_bar) = (eta.ln(), (1.0 - eta).ln());
            for (n, &p) in self.probs.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                for m in 0..=n {
                    let ln_pmf = lnfact[n] - lnfact[m] - lnfact[n - m]
                        + m as f64 * ln_eta
                        + (n - m) as f64 * ln_bar;
                    out[m] += p * ln_pmf.exp();
                }
            }
        }
        let total = neumaier_sum(&out);
        Ok(Self {
            probs: out,
            tail_mass: (1.0 - total).max(0.0),
        })
    }

    /// Inverse-CDF sampler over the truncated support.
    pub fn sampler(&self) -> FockSampler {
        let mut cdf = Vec::with_capacity(self.probs.len());
        let mut acc = 0.0;
        let mut comp = 0.0;
        for &p in &self.probs {
            // Neumaier running sum keeps the CDF monotone to full precision.
            let t = acc + p;
            comp += if acc.abs() >= p.abs() {
                (acc - t) + p
            } else {
                (p - t) + acc
            };
            acc = t;
            cdf.push(acc + comp);
        }
        FockSampler { cdf }
    }

    /// Write the distribution as `n,probability` CSV rows.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,probability")?;
        for (n, &p) in self.probs.iter().enumerate() {
            writeln!(w, "{n},{p:e}")?;
        }
        Ok(())
    }
}

/// Inverse-CDF sampler detached from the distribution so the hot path can
/// reuse the precomputed CDF across threads.
#[derive(Debug, Clone)]
pub struct FockSampler {
    cdf: Vec<f64>,
}

impl FockSampler {
    /// Draw one photon number. Conditioned on the truncated support; the
    /// tail mass (at most the construction tolerance) is never sampled.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        let total = *self.cdf.last().expect("non-empty CDF");
        let u = rng.gen::<f64>() * total;
        self.cdf.partition_point(|&c| c < u) as u64
    }
}

/// Photon-number distribution of the displaced squeezed vacuum
/// D(beta e^{i phi1}) S(r) |0>, exact up to the cutoff.
///
/// Amplitudes come from the three-term recurrence
/// `mu sqrt(n+1) c_{n+1} = gamma c_n - nu sqrt(n) c_{n-1}` with
/// `mu = cosh r`, `nu = sinh r`, `gamma = mu d + nu conj(d)`,
/// `d = beta e^{i phi1}`, which follows from
/// `(mu a + nu a†) |psi> = gamma |psi>`. The overall amplitude scale is
/// tracked in log space so displacements far beyond the double-precision
/// underflow threshold (|d|^2 of a few thousand) stay exact.
pub fn dsv_distribution(
    beta: Complex64,
    r: f64,
    phi1: f64,
    cutoff: usize,
    tail_tol: f64,
) -> Result<FockDistribution> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(SqzError::InvalidParameter(format!(
            "squeezing magnitude r = {r} must be finite and >= 0"
        )));
    }
    if !beta.re.is_finite() || !beta.im.is_finite() || !phi1.is_finite() {
        return Err(SqzError::InvalidParameter(
            "displacement and phase must be finite".into(),
        ));
    }
    let d = beta * Complex64::from_polar(1.0, phi1);
    let mu = r.cosh();
    let nu = r.sinh();
    let gamma = mu * d + nu * d.conj();

    // log|c_0| for c_0 = exp(-|d|^2/2 - (tanh r / 2) d*^2) / sqrt(mu);
    // the global phase is irrelevant for probabilities.
    let log_c0 = -0.5 * d.norm_sqr() - 0.5 * (nu / mu) * (d * d).re - 0.5 * mu.ln();

    let mut probs = vec![0.0; cutoff + 1];
    let mut prev = Complex64::new(0.0, 0.0); // scaled c_{-1}
    let mut cur = Complex64::new(1.0, 0.0); // scaled c_0
    let mut log_scale = log_c0;
    for n in 0..=cutoff {
        let ln_p = 2.0 * (cur.norm().ln() + log_scale);
        probs[n] = ln_p.exp(); // 0 when the amplitude underflows
        if n == cutoff {
            break;
        }
        let nf = n as f64;
        let next = (gamma * cur - nu * nf.sqrt() * prev) / (mu * (nf + 1.0).sqrt());
        prev = cur;
        cur = next;
        let mag = cur.norm().max(prev.norm());
        if mag > 1e120 {
            prev /= 1e120;
            cur /= 1e120;
            log_scale += 120.0 * std::f64::consts::LN_10;
        }
    }
    FockDistribution::from_probs(probs, tail_tol)
}

/// [`dsv_distribution`] with automatic cutoff growth: starts from a
/// moment-based estimate and doubles until the tail fits, up to `cap`.
pub fn dsv_distribution_auto(
    beta: Complex64,
    r: f64,
    phi1: f64,
    tail_tol: f64,
    cap: usize,
) -> Result<FockDistribution> {
    let n_alpha = beta.norm_sqr();
    let n_s = r.sinh().powi(2);
    let p = StateParams::new(n_alpha, n_s, phi1 + beta.arg())?;
    let sd = p.variance_total().sqrt();
    let mut cutoff = ((p.mean_total() + 10.0 * sd + 20.0).ceil() as usize).min(cap);
    loop {
        match dsv_distribution(beta, r, phi1, cutoff, tail_tol) {
            Ok(d) => return Ok(d),
            Err(SqzError::InsufficientCutoff { .. }) if cutoff < cap => {
                cutoff = (cutoff * 2).min(cap);
            }
            Err(e) => return Err(e),
        }
    }
}

/// Oracle distribution for the state described by [`StateParams`]:
/// beta = sqrt(n_alpha), r = asinh(sqrt(n_s)), at the params' phase.
pub fn from_state_params(p: &StateParams, tail_tol: f64, cap: usize) -> Result<FockDistribution> {
    dsv_distribution_auto(
        Complex64::new(p.n_alpha.sqrt(), 0.0),
        p.squeezing_parameter(),
        p.phi1,
        tail_tol,
        cap,
    )
}

/// Truncated Poisson distribution, built in log space.
pub fn poisson(lambda: f64, tail_tol: f64, cap: usize) -> Result<FockDistribution> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(SqzError::InvalidParameter(format!(
            "lambda = {lambda} must be finite and >= 0"
        )));
    }
    let mut cutoff = ((lambda + 10.0 * lambda.sqrt() + 20.0).ceil() as usize).min(cap);
    loop {
        let lnfact = ln_factorials(cutoff);
        let ln_lambda = if lambda > 0.0 { lambda.ln() } else { f64::NEG_INFINITY };
        let probs: Vec<f64> = (0..=cutoff)
            .map(|n| {
                if lambda == 0.0 {
                    if n == 0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    (-lambda + n as f64 * ln_lambda - lnfact[n]).exp()
                }
            })
            .collect();
        match FockDistribution::from_probs(probs, tail_tol) {
            Ok(d) => return Ok(d),
            Err(SqzError::InsufficientCutoff { .. }) if cutoff < cap => {
                cutoff = (cutoff * 2).min(cap);
            }
            Err(e) => return Err(e),
        }
    }
}

/// ln(n!) for n = 0..=max.
pub(crate) fn ln_factorials(max: usize) -> Vec<f64> {
    (0..=max).map(|n| ln_gamma(n as f64 + 1.0)).collect()
}

/// Neumaier-compensated sum; the oracle's probabilities deserve better than
/// naive accumulation at 1e-12 tolerances.
pub(crate) fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::{FRAC_PI_2, SQRT_2};

    #[test]
    fn vacuum_is_point_mass() {
        let d = dsv_distribution(Complex64::new(0.0, 0.0), 0.0, 0.0, 16, 1e-12).unwrap();
        assert_eq!(d.probs()[0], 1.0);
        assert!(d.probs()[1..].iter().all(|&p| p == 0.0));
        let m = d.moments();
        assert_eq!(m.mean, 0.0);
        assert_eq!(m.variance, 0.0);
    }

    #[test]
    fn squeezed_vacuum_has_no_odd_photons() {
        let r = 1.0f64.asinh();
        let d = dsv_distribution(Complex64::new(0.0, 0.0), r, 0.0, 64, 1e-12).unwrap();
        for n in (1..=d.cutoff()).step_by(2) {
            assert_eq!(d.probs()[n], 0.0, "odd term {n} must vanish exactly");
        }
        let m = d.moments();
        assert_relative_eq!(m.mean, 1.0, max_relative = 1e-10);
        // Squeezed vacuum: variance = 2 n_s (n_s + 1).
        assert_relative_eq!(m.variance, 4.0, max_relative = 1e-10);
    }

    #[test]
    fn coherent_state_is_poisson() {
        let d = dsv_distribution(Complex64::new(1.0, 0.0), 0.0, 0.0, 40, 1e-12).unwrap();
        let reference = poisson(1.0, 1e-12, 64).unwrap();
        for n in 0..=30 {
            assert_relative_eq!(d.probs()[n], reference.probs()[n], max_relative = 1e-10);
        }
    }

    #[test]
    fn dsv_moments_match_closed_forms() {
        let r = 1.0f64.asinh();
        let d = dsv_distribution(Complex64::new(2.0, 0.0), r, 0.0, 120, 1e-12).unwrap();
        let m = d.moments();
        assert_relative_eq!(m.mean, 5.0, max_relative = 1e-9);
        assert_relative_eq!(m.variance, 4.0 * (3.0 - 2.0 * SQRT_2) + 4.0, max_relative = 1e-9);

        let d = dsv_distribution(Complex64::new(2.0, 0.0), r, FRAC_PI_2, 120, 1e-12).unwrap();
        let m = d.moments();
        assert_relative_eq!(m.mean, 5.0, max_relative = 1e-9);
        assert_relative_eq!(m.variance, 4.0 * (3.0 + 2.0 * SQRT_2) + 4.0, max_relative = 1e-9);
    }

    #[test]
    fn amplitudes_stay_normalized() {
        for &(na, ns, phi) in &[(0.5, 0.25, 0.0), (4.0, 1.0, 0.7), (10.0, 2.0, FRAC_PI_2)] {
            let p = StateParams::new(na, ns, phi).unwrap();
            let d = from_state_params(&p, 1e-12, 1024).unwrap();
            let total = neumaier_sum(d.probs());
            assert_abs_diff_eq!(total + d.tail_mass(), 1.0, epsilon = 1e-12);
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn log_scaling_survives_large_displacement() {
        // |d|^2 = 5000 puts c_0 near exp(-2500), far below f64 underflow;
        // the log-scale bookkeeping must keep moments exact anyway.
        let p = StateParams::new(5000.0, 1.0, FRAC_PI_2).unwrap();
        let d = from_state_params(&p, 1e-12, 8192).unwrap();
        let m = d.moments();
        assert_relative_eq!(m.mean, p.mean_total(), max_relative = 1e-9);
        assert_relative_eq!(m.variance, p.variance_total(), max_relative = 1e-9);
    }

    #[test]
    fn insufficient_cutoff_is_signaled() {
        let err = dsv_distribution(Complex64::new(3.0, 0.0), 0.5, 0.0, 4, 1e-12).unwrap_err();
        assert!(matches!(err, SqzError::InsufficientCutoff { .. }));
        let err =
            dsv_distribution_auto(Complex64::new(20.0, 0.0), 0.0, 0.0, 1e-12, 64).unwrap_err();
        assert!(matches!(err, SqzError::InsufficientCutoff { .. }));
    }

    #[test]
    fn loss_identity_and_blackout() {
        let r = 0.8f64;
        let d = dsv_distribution(Complex64::new(1.5, 0.0), r, 0.4, 80, 1e-12).unwrap();
        let same = d.apply_loss(1.0).unwrap();
        assert_eq!(d.probs(), same.probs());
        let dark = d.apply_loss(0.0).unwrap();
        assert_relative_eq!(dark.probs()[0], 1.0, max_relative = 1e-12);
        assert!(dark.probs()[1..].iter().all(|&p| p == 0.0));
        assert!(d.apply_loss(1.1).is_err());
    }

    #[test]
    fn poisson_thinning_closure() {
        let lambda = 6.0;
        let eta = 0.37;
        let thinned = poisson(lambda, 1e-13, 256).unwrap().apply_loss(eta).unwrap();
        let direct = poisson(lambda * eta, 1e-13, 256).unwrap();
        for n in 0..=direct.cutoff().min(thinned.cutoff()) {
            assert_abs_diff_eq!(thinned.probs()[n], direct.probs()[n], epsilon = 1e-12);
        }
    }

    #[test]
    fn loss_moments_follow_thinning_law() {
        let p = StateParams::new(10.0, 1.0, 0.0).unwrap();
        let d = from_state_params(&p, 1e-14, 1024).unwrap();
        let m1 = d.moments();
        for &eta in &[0.1, 0.25, 0.5, 0.9] {
            let lossy = d.apply_loss(eta).unwrap();
            let m = lossy.moments();
            assert_relative_eq!(m.mean, eta * m1.mean, max_relative = 1e-10);
            assert_relative_eq!(
                m.variance,
                eta * (1.0 - eta) * m1.mean + eta * eta * m1.variance,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn loss_channels_compose() {
        let d = dsv_distribution(Complex64::new(1.2, 0.0), 0.6, 0.9, 80, 1e-12).unwrap();
        let (e1, e2) = (0.6, 0.45);
        let twice = d.apply_loss(e1).unwrap().apply_loss(e2).unwrap();
        let once = d.apply_loss(e1 * e2).unwrap();
        for n in 0..=d.cutoff() {
            assert_abs_diff_eq!(twice.probs()[n], once.probs()[n], epsilon = 1e-12);
        }
    }

    #[test]
    fn poisson_moments() {
        let m = poisson(3.0, 1e-12, 128).unwrap().moments();
        assert_relative_eq!(m.mean, 3.0, max_relative = 1e-9);
        assert_relative_eq!(m.variance, 3.0, max_relative = 1e-9);
    }

    #[test]
    fn sampler_on_vacuum_always_returns_zero() {
        use rand::SeedableRng;
        let d = dsv_distribution(Complex64::new(0.0, 0.0), 0.0, 0.0, 4, 1e-12).unwrap();
        let sampler = d.sampler();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            assert_eq!(sampler.sample(&mut rng), 0);
        }
    }

    #[test]
    fn csv_dump_has_row_per_level() {
        let d = poisson(1.0, 1e-12, 32).unwrap();
        let mut buf = Vec::new();
        d.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), d.cutoff() + 2);
        assert!(text.starts_with("n,probability"));
    }
}
