//! Monte Carlo generation of camera frame batches.
//!
//! Each frame draws one total photon number from the state's photon
//! statistics and splits it across pixels with a multinomial draw whose cell
//! probabilities are the pixel weights; pixel i therefore realizes the
//! binomial loss channel with transmission w_i. Frames are generated in
//! parallel, one independent RNG stream per frame, so a batch is a pure
//! function of (params, geometry, n_frames, seed).

use rand::Rng;
use rand_distr::{Binomial, Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SqzError};
use crate::fock::{self, FockSampler};
use crate::rng::frame_rng;
use crate::state::StateParams;

/// Above this mean photon number, total-photon sampling switches from the
/// exact Fock inverse-CDF to a rounded normal with the exact first two
/// moments; at 1e4 photons the skewness is already below the percent level
/// and exact construction is the only casualty.
pub const GAUSSIAN_SAMPLING_THRESHOLD: f64 = 1e4;

/// Cutoff cap for the exact sampling path; sized so any state below the
/// Gaussian threshold fits with a 1e-12 tail.
const EXACT_PATH_CUTOFF_CAP: usize = 1 << 14;

/// Pixel grid with per-pixel detection weights.
///
/// Weights are the multinomial cell probabilities and must sum to 1: the
/// camera detects every photon somewhere, and pixel i acts as an attenuator
/// of transmission w_i.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorGeometry {
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
}

impl SensorGeometry {
    pub fn new(rows: usize, cols: usize, weights: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SqzError::InvalidParameter(
                "sensor must have at least one row and one column".into(),
            ));
        }
        if weights.len() != rows * cols {
            return Err(SqzError::InvalidParameter(format!(
                "{} weights for a {rows}x{cols} sensor",
                weights.len()
            )));
        }
        if weights.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
            return Err(SqzError::InvalidParameter(
                "pixel weights must be finite and >= 0".into(),
            ));
        }
        let total = fock::neumaier_sum(&weights);
        if (total - 1.0).abs() > 1e-12 {
            return Err(SqzError::InvalidParameter(format!(
                "pixel weights sum to {total}, expected 1"
            )));
        }
        Ok(Self { rows, cols, weights })
    }

    /// Uniform weights w_i = 1 / (rows * cols).
    pub fn uniform(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SqzError::InvalidParameter(
                "sensor must have at least one row and one column".into(),
            ));
        }
        let n = rows * cols;
        Ok(Self {
            rows,
            cols,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_count(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Total-photon sampler for one parameter set.
#[derive(Debug, Clone)]
pub enum TotalSampler {
    /// Rounded normal with the state's exact mean and variance.
    Normal { mean: f64, sd: f64 },
    /// Exact inverse-CDF over the truncated Fock distribution.
    Exact(FockSampler),
}

impl TotalSampler {
    pub fn new(p: &StateParams) -> Result<Self> {
        let mean = p.mean_total();
        if mean >= GAUSSIAN_SAMPLING_THRESHOLD {
            Ok(Self::Normal {
                mean,
                sd: p.variance_total().sqrt(),
            })
        } else {
            let dist = fock::from_state_params(p, 1e-12, EXACT_PATH_CUTOFF_CAP)?;
            Ok(Self::Exact(dist.sampler()))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Self::Normal { mean, sd } => {
                let draw = Normal::new(*mean, *sd).expect("finite moments").sample(rng);
                draw.round().max(0.0) as u64
            }
            Self::Exact(sampler) => sampler.sample(rng),
        }
    }
}

/// One total-photon draw according to the state photon statistics.
///
/// Convenience wrapper that builds the sampler on every call; batch code
/// should construct [`TotalSampler`] once instead.
pub fn sample_total_photons<R: Rng + ?Sized>(p: &StateParams, rng: &mut R) -> Result<u64> {
    Ok(TotalSampler::new(p)?.sample(rng))
}

/// Multinomial split of n photons over the pixel grid, as a chain of
/// conditional binomials over the remaining mass. The counts always sum to
/// n exactly.
pub fn distribute_to_pixels<R: Rng + ?Sized>(
    n: u64,
    geometry: &SensorGeometry,
    rng: &mut R,
    out: &mut [u32],
) {
    assert_eq!(out.len(), geometry.pixel_count());
    debug_assert!(n <= u32::MAX as u64);
    out.fill(0);
    let mut remaining = n;
    let mut mass_left = 1.0f64;
    let last = geometry.pixel_count() - 1;
    for (i, &w) in geometry.weights.iter().enumerate() {
        if remaining == 0 {
            break;
        }
        if i == last {
            out[i] = remaining as u32;
            break;
        }
        if w <= 0.0 {
            mass_left -= w;
            continue;
        }
        let p = (w / mass_left).clamp(0.0, 1.0);
        let draw = if p >= 1.0 {
            remaining
        } else {
            Binomial::new(remaining, p).expect("p in [0,1]").sample(rng)
        };
        out[i] = draw as u32;
        remaining -= draw;
        mass_left -= w;
    }
}

/// A batch of simulated camera frames plus everything needed to regenerate
/// or interpret it.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBatch {
    pub geometry: SensorGeometry,
    pub params: StateParams,
    pub seed: u64,
    pub n_frames: usize,
    /// Frame-major, row-major pixel counts; length n_frames * pixel_count.
    counts: Vec<u32>,
}

impl FrameBatch {
    pub(crate) fn from_parts(
        geometry: SensorGeometry,
        params: StateParams,
        seed: u64,
        n_frames: usize,
        counts: Vec<u32>,
    ) -> Result<Self> {
        if counts.len() != n_frames * geometry.pixel_count() {
            return Err(SqzError::CorruptFile(format!(
                "count matrix has {} entries, expected {}",
                counts.len(),
                n_frames * geometry.pixel_count()
            )));
        }
        Ok(Self {
            geometry,
            params,
            seed,
            n_frames,
            counts,
        })
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn frame(&self, f: usize) -> &[u32] {
        let p = self.geometry.pixel_count();
        &self.counts[f * p..(f + 1) * p]
    }

    /// Total photon count of frame f.
    pub fn frame_total(&self, f: usize) -> u64 {
        self.frame(f).iter().map(|&c| c as u64).sum()
    }
}

/// Generate n_frames independent frames. Frame f's draws come from the
/// stream (seed, f), so the result does not depend on the rayon schedule.
pub fn simulate_batch(
    params: &StateParams,
    geometry: &SensorGeometry,
    n_frames: usize,
    seed: u64,
) -> Result<FrameBatch> {
    if n_frames == 0 {
        return Err(SqzError::InvalidParameter(
            "a batch needs at least one frame".into(),
        ));
    }
    // Guard the u32 per-pixel storage; 12 sigma above the mean never trips
    // at sane operating points but catches nonsense before it wraps.
    let ceiling = params.mean_total() + 12.0 * params.variance_total().sqrt();
    if ceiling >= u32::MAX as f64 {
        return Err(SqzError::InvalidParameter(format!(
            "total photon number ~{ceiling:.3e} exceeds the u32 frame format"
        )));
    }
    let sampler = TotalSampler::new(params)?;
    let pixels = geometry.pixel_count();
    let mut counts = vec![0u32; n_frames * pixels];
    counts
        .par_chunks_mut(pixels)
        .enumerate()
        .for_each(|(f, frame)| {
            let mut rng = frame_rng(seed, f as u64);
            let total = sampler.sample(&mut rng);
            distribute_to_pixels(total, geometry, &mut rng, frame);
        });
    FrameBatch::from_parts(geometry.clone(), *params, seed, n_frames, counts)
}
