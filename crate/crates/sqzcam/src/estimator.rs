//! From frame batches to squeezing numbers: per-pixel statistics, pixel
//! integration, the quadratic noise-law fit, parameter recovery, and the
//! precision-vs-runs study.
//!
//! The integration curve mirrors the measurement procedure: point k is the
//! per-frame sum over the first k pixels, so the curve sweeps the effective
//! transmission eta from w_1 up to 1 while keeping all pixel correlations.
//! Its points are therefore statistically nested, and the fit standard
//! error derived from residual scatter is approximate by construction.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::gamma::digamma;

use crate::camera::{simulate_batch, FrameBatch, SensorGeometry};
use crate::error::{Result, SqzError};
use crate::rng::derive_seed;
use crate::state::{self, StateParams};

/// Per-pixel sample mean and unbiased sample variance over a batch.
#[derive(Debug, Clone, Serialize)]
pub struct PixelStats {
    pub per_pixel_mean: Vec<f64>,
    pub per_pixel_var: Vec<f64>,
    pub n_frames: usize,
}

/// One integration-curve point: mean and unbiased variance of the per-frame
/// partial sums over the first k pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    /// Pixels integrated (k, 1-based).
    pub k: usize,
    /// Effective transmission: sum of the first k pixel weights.
    pub eta: f64,
    pub mean: f64,
    pub variance: f64,
}

/// The variance-vs-intensity curve swept by pixel integration.
#[derive(Debug, Clone, Serialize)]
pub struct IntegrationCurve {
    pub points: Vec<CurvePoint>,
    pub n_frames: usize,
}

impl IntegrationCurve {
    /// CSV rows `k,eta,mean,variance`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,eta,mean,variance\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{},{}\n", p.k, p.eta, p.mean, p.variance));
        }
        out
    }
}

/// Welford accumulators for a vector of parallel series.
struct RunningStats {
    n: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningStats {
    fn new(len: usize) -> Self {
        Self {
            n: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn update(&mut self, values: impl Iterator<Item = f64>) {
        self.n += 1;
        let n = self.n as f64;
        for (i, x) in values.enumerate() {
            let d = x - self.mean[i];
            self.mean[i] += d / n;
            self.m2[i] += d * (x - self.mean[i]);
        }
    }

    fn variances(&self) -> Vec<f64> {
        let denom = (self.n - 1) as f64;
        self.m2.iter().map(|&m| m / denom).collect()
    }
}

/// Sample mean and unbiased (N-1) variance for every pixel, single pass.
pub fn accumulate_stats(batch: &FrameBatch) -> Result<PixelStats> {
    if batch.n_frames < 2 {
        return Err(SqzError::DegenerateInput(
            "pixel variance needs at least 2 frames".into(),
        ));
    }
    let pixels = batch.geometry.pixel_count();
    let mut stats = RunningStats::new(pixels);
    for f in 0..batch.n_frames {
        stats.update(batch.frame(f).iter().map(|&c| c as f64));
    }
    let per_pixel_var = stats.variances();
    Ok(PixelStats {
        per_pixel_mean: stats.mean,
        per_pixel_var,
        n_frames: batch.n_frames,
    })
}

/// Nested pixel integration: for each k, the per-frame partial sum over the
/// first k pixels in `order`, then mean and unbiased variance over frames.
///
/// The partial sums are taken per frame (before any averaging), so pixel
/// correlations propagate into the curve exactly as in the measurement.
pub fn integrate_pixels(batch: &FrameBatch, order: Option<&[usize]>) -> Result<IntegrationCurve> {
    if batch.n_frames < 2 {
        return Err(SqzError::DegenerateInput(
            "integration curve needs at least 2 frames".into(),
        ));
    }
    let pixels = batch.geometry.pixel_count();
    let identity: Vec<usize>;
    let order = match order {
        Some(o) => {
            let mut seen = vec![false; pixels];
            if o.len() != pixels || o.iter().any(|&i| i >= pixels || std::mem::replace(&mut seen[i], true)) {
                return Err(SqzError::InvalidParameter(
                    "order must be a permutation of the pixel indices".into(),
                ));
            }
            o
        }
        None => {
            identity = (0..pixels).collect();
            &identity
        }
    };

    let mut stats = RunningStats::new(pixels);
    let mut prefix = vec![0.0f64; pixels];
    for f in 0..batch.n_frames {
        let frame = batch.frame(f);
        let mut acc = 0u64;
        for (slot, &idx) in order.iter().enumerate() {
            acc += frame[idx] as u64;
            prefix[slot] = acc as f64;
        }
        stats.update(prefix.iter().copied());
    }

    let weights = batch.geometry.weights();
    let mut eta = 0.0;
    let variances = stats.variances();
    let points = (0..pixels)
        .map(|slot| {
            eta += weights[order[slot]];
            CurvePoint {
                k: slot + 1,
                eta: eta.min(1.0),
                mean: stats.mean[slot],
                variance: variances[slot],
            }
        })
        .collect();
    Ok(IntegrationCurve {
        points,
        n_frames: batch.n_frames,
    })
}

/// How a [`QFit`] was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum FitMode {
    /// v = x + q x^2 with the unit linear coefficient fixed; the measurement
    /// model, and the fit that reported q values come from.
    Constrained,
    /// Diagnostic v = a + b x + q x^2 free quadratic.
    FreeQuadratic { offset: f64, linear: f64 },
}

/// Fitted quadratic noise-law coefficient.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QFit {
    pub q: f64,
    /// Standard error from residual scatter; approximate because the curve
    /// points are nested partial sums of the same frames.
    pub q_se: f64,
    pub mode: FitMode,
    /// Root-mean-square residual of the fit (photons^2).
    pub residual_norm: f64,
}

fn check_fit_input(curve: &IntegrationCurve) -> Result<()> {
    if curve.points.len() < 2 {
        return Err(SqzError::DegenerateInput(
            "fit needs at least 2 curve points".into(),
        ));
    }
    if curve.points.iter().any(|p| !(p.mean > 0.0)) {
        return Err(SqzError::DegenerateInput(
            "fit needs strictly positive means".into(),
        ));
    }
    let x0 = curve.points[0].mean;
    if curve.points.iter().all(|p| p.mean == x0) {
        return Err(SqzError::DegenerateInput(
            "degenerate design: all means equal".into(),
        ));
    }
    Ok(())
}

/// Constrained least squares of v = x + q x^2:
/// `q = sum x^2 (v - x) / sum x^4`.
pub fn fit_q(curve: &IntegrationCurve) -> Result<QFit> {
    check_fit_input(curve)?;
    let mut num = 0.0;
    let mut den = 0.0;
    for p in &curve.points {
        let x2 = p.mean * p.mean;
        num += x2 * (p.variance - p.mean);
        den += x2 * x2;
    }
    let q = num / den;

    // Heteroscedasticity-robust (sandwich) standard error plus RMS residual.
    let mut se_num = 0.0;
    let mut ss = 0.0;
    for p in &curve.points {
        let x2 = p.mean * p.mean;
        let e = p.variance - p.mean - q * x2;
        se_num += x2 * x2 * e * e;
        ss += e * e;
    }
    Ok(QFit {
        q,
        q_se: se_num.sqrt() / den,
        mode: FitMode::Constrained,
        residual_norm: (ss / curve.points.len() as f64).sqrt(),
    })
}

/// Diagnostic free quadratic v = a + b x + q x^2 by normal equations, solved
/// on a rescaled abscissa for conditioning.
pub fn fit_free_quadratic(curve: &IntegrationCurve) -> Result<QFit> {
    check_fit_input(curve)?;
    if curve.points.len() < 3 {
        return Err(SqzError::DegenerateInput(
            "free quadratic needs at least 3 curve points".into(),
        ));
    }
    let scale = curve
        .points
        .iter()
        .map(|p| p.mean)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s = [0.0f64; 5]; // sums of x^0 .. x^4
    let mut t = [0.0f64; 3]; // sums of v x^0 .. v x^2
    for p in &curve.points {
        let x = p.mean / scale;
        let mut xp = 1.0;
        for (i, si) in s.iter_mut().enumerate() {
            *si += xp;
            if i < 3 {
                t[i] += p.variance * xp;
            }
            xp *= x;
        }
    }
    let m = [[s[0], s[1], s[2]], [s[1], s[2], s[3]], [s[2], s[3], s[4]]];
    let det = det3(&m);
    if det.abs() < 1e-300 {
        return Err(SqzError::DegenerateInput(
            "singular normal equations in free quadratic fit".into(),
        ));
    }
    let coeff: Vec<f64> = (0..3)
        .map(|col| {
            let mut mc = m;
            for row in 0..3 {
                mc[row][col] = t[row];
            }
            det3(&mc) / det
        })
        .collect();
    let (a, b, q) = (coeff[0], coeff[1] / scale, coeff[2] / (scale * scale));

    let mut se_num = 0.0;
    let mut ss = 0.0;
    let mut den = 0.0;
    for p in &curve.points {
        let x2 = p.mean * p.mean;
        let e = p.variance - a - b * p.mean - q * x2;
        se_num += x2 * x2 * e * e;
        den += x2 * x2;
        ss += e * e;
    }
    Ok(QFit {
        q,
        q_se: se_num.sqrt() / den,
        mode: FitMode::FreeQuadratic { offset: a, linear: b },
        residual_norm: (ss / curve.points.len() as f64).sqrt(),
    })
}

fn det3(m: &[[f64; 3]; 3]) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

/// Recovered squeezing and displacement photon numbers with propagated
/// uncertainties.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SqueezingEstimate {
    pub n_s_hat: f64,
    pub n_alpha_hat: f64,
    pub n_s_se: f64,
    pub n_alpha_se: f64,
    /// Relative mismatch of (q_as - q_s) against the recovered parameters.
    pub consistency_residual: f64,
    /// False when the raw inversion left the physical region; values are
    /// reported unclipped either way.
    pub physical: bool,
}

/// Invert the two fitted q coefficients through the closed form and
/// propagate the fit standard errors to the photon numbers.
pub fn estimate_squeezing(q_s: &QFit, q_as: &QFit, n_total: f64) -> Result<SqueezingEstimate> {
    if !(n_total.is_finite() && n_total > 0.0) {
        return Err(SqzError::InvalidParameter(format!(
            "n_total = {n_total} must be finite and > 0"
        )));
    }
    // dn_s/dq is the same for both branches.
    let dns_dq = n_total * n_total / (2.0 * (1.0 + 2.0 * n_total));
    let n_s_se = dns_dq * (q_s.q_se.powi(2) + q_as.q_se.powi(2)).sqrt();

    match state::invert_q(q_s.q, q_as.q, n_total) {
        Ok(inv) => Ok(SqueezingEstimate {
            n_s_hat: inv.n_s,
            n_alpha_hat: inv.n_alpha,
            n_s_se,
            n_alpha_se: n_s_se,
            consistency_residual: inv.consistency_residual,
            physical: true,
        }),
        Err(SqzError::NonPhysicalRecovery { n_s, .. }) => Ok(SqueezingEstimate {
            n_s_hat: n_s,
            n_alpha_hat: n_total - n_s,
            n_s_se,
            n_alpha_se: n_s_se,
            consistency_residual: f64::NAN,
            physical: false,
        }),
        Err(e) => Err(e),
    }
}

/// Precision of the R-run aggregated q estimate, one row per requested run
/// count.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PrecisionPoint {
    pub runs: usize,
    /// SD of the mean of q over `runs` runs (what improves as runs^-1/2).
    pub sd_mean_q: f64,
    /// SD of a single run's q estimate at this row's sample size.
    pub sd_single_q: f64,
}

/// Precision study for one phase branch.
#[derive(Debug, Clone, Serialize)]
pub struct PrecisionBranch {
    pub phi1: f64,
    pub points: Vec<PrecisionPoint>,
    /// Log-log slope of sd_mean_q vs runs; None with fewer than two rows.
    pub slope: Option<f64>,
    /// SD of q pooled over every run of the branch.
    pub pooled_sd: f64,
}

/// Two-branch precision study and the anti-squeezed / squeezed SD ratio.
#[derive(Debug, Clone, Serialize)]
pub struct PrecisionStudy {
    pub squeezed: PrecisionBranch,
    pub anti_squeezed: PrecisionBranch,
    pub sd_ratio: f64,
}

/// Run the simulate->integrate->fit pipeline many times and measure how the
/// precision of q improves with the number of runs, for the squeezed
/// (phi1 = 0) and anti-squeezed (phi1 = pi/2) branches of `base`.
///
/// For each requested run count R, `replicates` independent groups of R
/// runs are generated; the per-R SD estimate pools the group variances, and
/// `sd_mean_q = pooled_sd / sqrt(R)` is the precision of the R-run
/// aggregate. `replicates = 1` reproduces the single-group procedure; more
/// replicates only tighten the SD estimates, they do not change what is
/// being estimated. A small-sample log-bias correction keeps the log-log
/// slope centered.
pub fn precision_study(
    base: &StateParams,
    geometry: &SensorGeometry,
    frames_per_run: usize,
    run_counts: &[usize],
    replicates: usize,
    seed: u64,
) -> Result<PrecisionStudy> {
    if run_counts.is_empty() {
        return Err(SqzError::DegenerateInput("no run counts requested".into()));
    }
    if run_counts.iter().any(|&r| r < 2) {
        return Err(SqzError::DegenerateInput(
            "each run count must be at least 2 to define an SD".into(),
        ));
    }
    if replicates == 0 {
        return Err(SqzError::DegenerateInput("replicates must be >= 1".into()));
    }
    if frames_per_run < 2 {
        return Err(SqzError::DegenerateInput(
            "frames_per_run must be at least 2".into(),
        ));
    }

    let squeezed = precision_branch(
        &base.with_phase(0.0),
        geometry,
        frames_per_run,
        run_counts,
        replicates,
        seed,
        0,
    )?;
    let anti_squeezed = precision_branch(
        &base.with_phase(std::f64::consts::FRAC_PI_2),
        geometry,
        frames_per_run,
        run_counts,
        replicates,
        seed,
        1,
    )?;
    let sd_ratio = anti_squeezed.pooled_sd / squeezed.pooled_sd;
    Ok(PrecisionStudy {
        squeezed,
        anti_squeezed,
        sd_ratio,
    })
}

fn precision_branch(
    p: &StateParams,
    geometry: &SensorGeometry,
    frames_per_run: usize,
    run_counts: &[usize],
    replicates: usize,
    seed: u64,
    branch_tag: u64,
) -> Result<PrecisionBranch> {
    // Flatten every (run count, group, run) into one parallel work list.
    let mut specs = Vec::new();
    for (ri, &r) in run_counts.iter().enumerate() {
        for g in 0..replicates {
            for k in 0..r {
                specs.push((ri, g, k));
            }
        }
    }
    let qs: Vec<(usize, usize, f64)> = specs
        .par_iter()
        .map(|&(ri, g, k)| {
            let run_seed = derive_seed(
                seed,
                &[branch_tag, ri as u64, g as u64, k as u64],
            );
            let batch = simulate_batch(p, geometry, frames_per_run, run_seed)?;
            let curve = integrate_pixels(&batch, None)?;
            Ok((ri, g, fit_q(&curve)?.q))
        })
        .collect::<Result<_>>()?;

    let mut points = Vec::with_capacity(run_counts.len());
    let mut all_q = Vec::new();
    for (ri, &r) in run_counts.iter().enumerate() {
        // Pool the per-group variances: nu = replicates * (r - 1) dof.
        let mut pooled_var = 0.0;
        for g in 0..replicates {
            let group: Vec<f64> = qs
                .iter()
                .filter(|&&(i, gg, _)| i == ri && gg == g)
                .map(|&(_, _, q)| q)
                .collect();
            let mean = group.iter().sum::<f64>() / group.len() as f64;
            let var = group.iter().map(|q| (q - mean).powi(2)).sum::<f64>()
                / (group.len() as f64 - 1.0);
            pooled_var += var;
            all_q.extend_from_slice(&group);
        }
        pooled_var /= replicates as f64;
        let nu = (replicates * (r - 1)) as f64;
        // E[ln s] = ln sigma + (digamma(nu/2) - ln(nu/2)) / 2; undo it so the
        // fitted log-log slope is centered at -1/2.
        let log_bias = 0.5 * ((nu / 2.0).ln() - digamma(nu / 2.0));
        let sd = pooled_var.sqrt() * log_bias.exp();
        points.push(PrecisionPoint {
            runs: r,
            sd_mean_q: sd / (r as f64).sqrt(),
            sd_single_q: sd,
        });
    }

    let slope = fit_loglog_slope(&points);
    let pooled_sd = {
        let n = all_q.len() as f64;
        let mean = all_q.iter().sum::<f64>() / n;
        (all_q.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(PrecisionBranch {
        phi1: p.phi1,
        points,
        slope,
        pooled_sd,
    })
}

fn fit_loglog_slope(points: &[PrecisionPoint]) -> Option<f64> {
    let distinct: std::collections::BTreeSet<usize> = points.iter().map(|p| p.runs).collect();
    if distinct.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for p in points {
        let x = (p.runs as f64).ln();
        let y = p.sd_mean_q.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::FRAC_PI_2;

    fn curve_from_law(q0: f64, xs: &[f64]) -> IntegrationCurve {
        IntegrationCurve {
            points: xs
                .iter()
                .enumerate()
                .map(|(i, &x)| CurvePoint {
                    k: i + 1,
                    eta: (i + 1) as f64 / xs.len() as f64,
                    mean: x,
                    variance: x + q0 * x * x,
                })
                .collect(),
            n_frames: 1000,
        }
    }

    fn tiny_batch(counts: Vec<u32>, pixels: usize) -> FrameBatch {
        let g = SensorGeometry::uniform(1, pixels).unwrap();
        let p = StateParams::new(1.0, 0.0, 0.0).unwrap();
        let n_frames = counts.len() / pixels;
        FrameBatch::from_parts(g, p, 0, n_frames, counts).unwrap()
    }

    #[test]
    fn accumulate_stats_hand_example() {
        // Two frames, one pixel of interest: counts {0, 2} -> mean 1, var 2.
        let batch = tiny_batch(vec![0, 5, 2, 5], 2);
        let stats = accumulate_stats(&batch).unwrap();
        assert_eq!(stats.per_pixel_mean, vec![1.0, 5.0]);
        assert_eq!(stats.per_pixel_var, vec![2.0, 0.0]);
    }

    #[test]
    fn identical_frames_have_zero_variance() {
        let batch = tiny_batch(vec![3, 1, 3, 1, 3, 1], 2);
        let stats = accumulate_stats(&batch).unwrap();
        assert_eq!(stats.per_pixel_var, vec![0.0, 0.0]);
    }

    #[test]
    fn single_frame_batches_are_rejected() {
        let batch = tiny_batch(vec![1, 2], 2);
        assert!(matches!(
            accumulate_stats(&batch).unwrap_err(),
            SqzError::DegenerateInput(_)
        ));
        assert!(integrate_pixels(&batch, None).is_err());
    }

    #[test]
    fn integration_first_point_matches_pixel_stats() {
        let batch = tiny_batch(vec![1, 7, 3, 9, 5, 11, 7, 13], 2);
        let stats = accumulate_stats(&batch).unwrap();
        let curve = integrate_pixels(&batch, None).unwrap();
        assert_eq!(curve.points[0].mean, stats.per_pixel_mean[0]);
        assert_eq!(curve.points[0].variance, stats.per_pixel_var[0]);
        // Last point is the frame-total statistics.
        let totals: Vec<f64> = (0..4).map(|f| batch.frame_total(f) as f64).collect();
        let mean = totals.iter().sum::<f64>() / 4.0;
        let var = totals.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / 3.0;
        let last = curve.points.last().unwrap();
        assert_abs_diff_eq!(last.mean, mean, epsilon = 1e-12);
        assert_abs_diff_eq!(last.variance, var, epsilon = 1e-12);
        assert_abs_diff_eq!(last.eta, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn integration_respects_permutations() {
        let batch = tiny_batch(vec![1, 100, 2, 200, 3, 300], 2);
        let swapped = integrate_pixels(&batch, Some(&[1, 0])).unwrap();
        let stats = accumulate_stats(&batch).unwrap();
        assert_eq!(swapped.points[0].mean, stats.per_pixel_mean[1]);
        assert!(integrate_pixels(&batch, Some(&[0, 0])).is_err());
        assert!(integrate_pixels(&batch, Some(&[0, 5])).is_err());
        assert!(integrate_pixels(&batch, Some(&[0])).is_err());
    }

    #[test]
    fn noiseless_fit_recovery_is_exact() {
        for &q0 in &[-8.2842e-7, 0.0, 4.8284e-6, 1e-3] {
            let xs: Vec<f64> = (1..=64).map(|k| k as f64 * 1e4).collect();
            let fit = fit_q(&curve_from_law(q0, &xs)).unwrap();
            assert_abs_diff_eq!(fit.q, q0, epsilon = 1e-12_f64.max(q0.abs() * 1e-12));
            assert!(fit.q_se >= 0.0);
            assert_abs_diff_eq!(fit.residual_norm, 0.0, epsilon = 1e-6);
        }
    }

    #[test]
    fn fit_on_analytic_curve_recovers_theoretical_q() {
        // Points straight from the closed-form thinning law at the paper's
        // operating point.
        for &phi in &[0.0, FRAC_PI_2] {
            let p = StateParams::new(1e6, 1.0, phi).unwrap();
            let q_true = p.q_coefficient().unwrap();
            let points: Vec<CurvePoint> = (1..=1024)
                .map(|k| {
                    let eta = k as f64 / 1024.0;
                    CurvePoint {
                        k,
                        eta,
                        mean: p.pixel_mean(eta).unwrap(),
                        variance: p.pixel_variance(eta).unwrap(),
                    }
                })
                .collect();
            let curve = IntegrationCurve { points, n_frames: 1 << 20 };
            let fit = fit_q(&curve).unwrap();
            assert_relative_eq!(fit.q, q_true, max_relative = 1e-9);
            let free = fit_free_quadratic(&curve).unwrap();
            assert_relative_eq!(free.q, q_true, max_relative = 1e-6);
            if let FitMode::FreeQuadratic { offset, linear } = free.mode {
                assert_relative_eq!(linear, 1.0, max_relative = 1e-6);
                assert_abs_diff_eq!(offset / p.mean_total(), 0.0, epsilon = 1e-6);
            } else {
                panic!("free fit must report FreeQuadratic mode");
            }
        }
    }

    #[test]
    fn constrained_fit_is_grid_scale_invariant() {
        let p = StateParams::new(1e6, 1.0, 0.0).unwrap();
        let build = |scale: f64| {
            let points: Vec<CurvePoint> = (1..=256)
                .map(|k| {
                    let eta = scale * k as f64 / 256.0;
                    CurvePoint {
                        k,
                        eta,
                        mean: p.pixel_mean(eta).unwrap(),
                        variance: p.pixel_variance(eta).unwrap(),
                    }
                })
                .collect();
            IntegrationCurve { points, n_frames: 2 }
        };
        let full = fit_q(&build(1.0)).unwrap().q;
        let tenth = fit_q(&build(0.1)).unwrap().q;
        assert_relative_eq!(full, tenth, max_relative = 1e-9);
    }

    #[test]
    fn fit_rejects_degenerate_designs() {
        let xs = vec![5.0, 5.0, 5.0];
        assert!(fit_q(&curve_from_law(0.0, &xs)).is_err());
        let curve = IntegrationCurve { points: vec![], n_frames: 10 };
        assert!(fit_q(&curve).is_err());
        let mut bad = curve_from_law(0.0, &[1.0, 2.0]);
        bad.points[0].mean = -1.0;
        assert!(fit_q(&bad).is_err());
    }

    #[test]
    fn estimate_round_trips_exact_q_values() {
        let p0 = StateParams::new(1e6, 1.0, 0.0).unwrap();
        let p1 = p0.with_phase(FRAC_PI_2);
        let mk = |q: f64| QFit {
            q,
            q_se: 1e-9,
            mode: FitMode::Constrained,
            residual_norm: 0.0,
        };
        let est = estimate_squeezing(
            &mk(p0.q_coefficient().unwrap()),
            &mk(p1.q_coefficient().unwrap()),
            p0.mean_total(),
        )
        .unwrap();
        assert_relative_eq!(est.n_s_hat, 1.0, max_relative = 1e-6);
        assert_relative_eq!(est.n_alpha_hat, 1e6, max_relative = 1e-6);
        assert!(est.physical);
        assert!(est.n_s_se > 0.0);
        assert_abs_diff_eq!(est.consistency_residual, 0.0, epsilon = 1e-9);

        // Coherent light: q = q = 0.
        let est = estimate_squeezing(&mk(0.0), &mk(0.0), 1e6).unwrap();
        assert_eq!(est.n_s_hat, 0.0);
        assert_eq!(est.n_alpha_hat, 1e6);
    }

    #[test]
    fn non_physical_recovery_is_flagged_not_clipped() {
        let mk = |q: f64| QFit {
            q,
            q_se: 1e-9,
            mode: FitMode::Constrained,
            residual_norm: 0.0,
        };
        let est = estimate_squeezing(&mk(-2e-6), &mk(1e-6), 1e6).unwrap();
        assert!(!est.physical);
        assert!(est.n_s_hat < 0.0);
    }

    #[test]
    fn precision_study_validates_inputs() {
        let p = StateParams::new(100.0, 1.0, 0.0).unwrap();
        let g = SensorGeometry::uniform(2, 2).unwrap();
        assert!(precision_study(&p, &g, 100, &[], 1, 0).is_err());
        assert!(precision_study(&p, &g, 100, &[1], 1, 0).is_err());
        assert!(precision_study(&p, &g, 100, &[4], 0, 0).is_err());
        assert!(precision_study(&p, &g, 1, &[4], 1, 0).is_err());
    }

    #[test]
    fn precision_study_single_row_has_no_slope() {
        let p = StateParams::new(100.0, 1.0, 0.0).unwrap();
        let g = SensorGeometry::uniform(2, 2).unwrap();
        let study = precision_study(&p, &g, 50, &[4], 2, 11).unwrap();
        assert!(study.squeezed.slope.is_none());
        assert_eq!(study.squeezed.points.len(), 1);
        assert!(study.sd_ratio.is_finite());
        assert!(study.squeezed.points[0].sd_mean_q > 0.0);
        assert_relative_eq!(
            study.squeezed.points[0].sd_single_q,
            study.squeezed.points[0].sd_mean_q * 2.0,
            max_relative = 1e-12
        );
    }
}
