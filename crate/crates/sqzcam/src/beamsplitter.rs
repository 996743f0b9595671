//! Exact two-mode mixing of a coherent pump with squeezed vacuum.
//!
//! Builds (D(alpha) (x) S(r)) |0,0>, applies the beam-splitter unitary
//! B = exp(theta (a†b - a b†)) with pump reflectivity sin(theta), traces out
//! the pump mode, and returns the signal-mode photon distribution. This is
//! the exact (entangled) counterpart of the displaced-squeezed-vacuum
//! approximation, used to quantify how fast that approximation converges as
//! theta shrinks.
//!
//! B conserves total photon number, so it is applied block-by-block over
//! total-N subspaces using the su(2) factorization
//! `B = exp(tan(theta) a†b) (cos theta)^{b†b - a†a} exp(-tan(theta) a b†)`,
//! where each factor acts on a block as a short, exactly terminating series.
//! The factorization keeps blocks with hundreds of photons cheap and avoids
//! the cancellation a raw Taylor exponential would suffer.

use num_complex::Complex64;

use crate::error::{Result, SqzError};
use crate::fock::{neumaier_sum, FockDistribution};

/// Joint-state probability mass that may be lost to per-mode truncation.
const JOINT_TAIL_TOL: f64 = 1e-10;

/// Signal-mode photon distribution after exact mixing and partial trace.
///
/// `mode_cutoff` truncates each mode at construction; the output support
/// extends to twice that. The pump enters the signal with amplitude
/// -alpha sin(theta) (a phase convention; photon statistics are unaffected).
pub fn exact_mix_and_trace(
    alpha: Complex64,
    r: f64,
    theta: f64,
    mode_cutoff: usize,
) -> Result<FockDistribution> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(SqzError::InvalidParameter(format!(
            "squeezing magnitude r = {r} must be finite and >= 0"
        )));
    }
    if !theta.is_finite() || !(0.0..std::f64::consts::FRAC_PI_2).contains(&theta) {
        return Err(SqzError::InvalidParameter(format!(
            "mixing angle theta = {theta} must lie in [0, pi/2)"
        )));
    }

    let pump = coherent_amplitudes(alpha, mode_cutoff);
    let signal = squeezed_vacuum_amplitudes(r, mode_cutoff);

    let pump_mass: f64 = neumaier_sum(&pump.iter().map(|a| a.norm_sqr()).collect::<Vec<_>>());
    let signal_mass: f64 = neumaier_sum(&signal.iter().map(|s| s * s).collect::<Vec<_>>());
    let joint_tail = 1.0 - pump_mass * signal_mass;
    if joint_tail > JOINT_TAIL_TOL {
        return Err(SqzError::InsufficientCutoff {
            cutoff: mode_cutoff,
            tail_mass: joint_tail,
            tail_tol: JOINT_TAIL_TOL,
        });
    }

    // Effective supports; blocks beyond their sum hold nothing.
    let pump_top = top_index(&pump.iter().map(|a| a.norm()).collect::<Vec<_>>());
    let signal_top = top_index(&signal.iter().map(|s| s.abs()).collect::<Vec<_>>());
    let n_max = pump_top + signal_top;

    let tau = theta.tan();
    let ln_cos = theta.cos().ln();
    let mut sig_probs = vec![0.0; n_max + 1];

    let mut block = Vec::new();
    for n_total in 0..=n_max {
        block.clear();
        block.resize(n_total + 1, Complex64::new(0.0, 0.0));
        let mut occupied = false;
        for k in 0..=n_total {
            let m = n_total - k;
            if k <= pump_top && m <= signal_top {
                let amp = pump[k] * signal[m];
                if amp != Complex64::new(0.0, 0.0) {
                    block[k] = amp;
                    occupied = true;
                }
            }
        }
        if !occupied {
            continue;
        }

        apply_exp_pump_lowering(&mut block, -tau, n_total);
        for (k, amp) in block.iter_mut().enumerate() {
            // (cos theta)^{m - k} with m = n_total - k
            let exponent = (n_total - k) as f64 - k as f64;
            *amp *= (exponent * ln_cos).exp();
        }
        apply_exp_pump_raising(&mut block, tau, n_total);

        for (k, amp) in block.iter().enumerate() {
            sig_probs[n_total - k] += amp.norm_sqr();
        }
    }

    let total = neumaier_sum(&sig_probs);
    // Everything missing from 1 is per-mode truncation, already bounded.
    FockDistribution::from_probs(sig_probs, (1.0 - total).max(0.0) + 1e-15)
}

/// exp(c * a b†) on a total-N block: a b† takes |k, m> to
/// sqrt(k (m+1)) |k-1, m+1>, a strictly index-lowering nilpotent map, so the
/// series terminates on its own; we stop earlier once terms stop mattering.
fn apply_exp_pump_lowering(block: &mut [Complex64], c: f64, n_total: usize) {
    let mut term = block.to_vec();
    for j in 1..=n_total {
        let scale = c / j as f64;
        for k in 0..n_total {
            // sqrt(from) * sqrt(m + 1) with m = n_total - from
            let from = k + 1;
            let factor = ((from as f64) * ((n_total - from + 1) as f64)).sqrt();
            term[k] = term[from] * factor * scale;
        }
        term[n_total] = Complex64::new(0.0, 0.0);
        let mut max_term = 0.0f64;
        for (dst, t) in block.iter_mut().zip(term.iter()) {
            *dst += t;
            max_term = max_term.max(t.norm_sqr());
        }
        if max_term < 1e-64 {
            break;
        }
    }
}

/// exp(c * a†b) on a total-N block: a†b takes |k, m> to
/// sqrt((k+1) m) |k+1, m-1>, strictly index-raising.
fn apply_exp_pump_raising(block: &mut [Complex64], c: f64, n_total: usize) {
    let mut term = block.to_vec();
    for j in 1..=n_total {
        let scale = c / j as f64;
        for k in (1..=n_total).rev() {
            let from = k - 1;
            term[k] = term[from] * (k as f64).sqrt() * ((n_total - from) as f64).sqrt() * scale;
        }
        term[0] = Complex64::new(0.0, 0.0);
        let mut max_term = 0.0f64;
        for (dst, t) in block.iter_mut().zip(term.iter()) {
            *dst += t;
            max_term = max_term.max(t.norm_sqr());
        }
        if max_term < 1e-64 {
            break;
        }
    }
}

/// Coherent-state amplitudes alpha^k e^{-|alpha|^2/2} / sqrt(k!).
fn coherent_amplitudes(alpha: Complex64, cutoff: usize) -> Vec<Complex64> {
    let mut amps = Vec::with_capacity(cutoff + 1);
    let mut cur = Complex64::new((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    for k in 0..=cutoff {
        amps.push(cur);
        cur *= alpha / ((k + 1) as f64).sqrt();
    }
    amps
}

/// Squeezed-vacuum amplitudes: even levels only,
/// s_{m+2} = -(tanh r) sqrt((m+1)/(m+2)) s_m from s_0 = 1/sqrt(cosh r).
fn squeezed_vacuum_amplitudes(r: f64, cutoff: usize) -> Vec<f64> {
    let mut amps = vec![0.0; cutoff + 1];
    let t = r.tanh();
    amps[0] = 1.0 / r.cosh().sqrt();
    let mut m = 0;
    while m + 2 <= cutoff {
        amps[m + 2] = -t * (((m + 1) as f64) / ((m + 2) as f64)).sqrt() * amps[m];
        m += 2;
    }
    amps
}

fn top_index(magnitudes: &[f64]) -> usize {
    magnitudes
        .iter()
        .rposition(|&v| v > 1e-160)
        .unwrap_or(0)
}
