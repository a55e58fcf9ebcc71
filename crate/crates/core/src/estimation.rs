//! Frame-based estimation of the power-normalized fourth-order cumulant.
//!
//! The received stream is squelched, cut into consecutive non-overlapping
//! frames of `J` samples, each frame is centered, and
//! `C42~(f) = C42^(f) / (C21^(f) - noise_var)^2` is computed per frame.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Smallest frame length accepted by [`frame_series`]; the variance
/// expressions used downstream are asymptotic in `J`.
pub const MIN_FRAME_LENGTH: usize = 100;

/// A frame is rejected when its estimated signal power falls below this
/// fraction of the noise variance.
pub const DEGENERATE_POWER_FRACTION: f64 = 0.05;

/// Removes the sample mean.
pub fn center_signal(r: &[Complex64]) -> Result<Vec<Complex64>> {
    if r.is_empty() {
        return Err(Error::Argument("cannot center an empty signal".into()));
    }
    let mean = r.iter().sum::<Complex64>() / r.len() as f64;
    Ok(r.iter().map(|&x| x - mean).collect())
}

/// Per-frame cumulant estimates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameCumulants {
    pub c42: f64,
    pub c21: f64,
    pub c20: Complex64,
}

/// Plug-in estimate `C42^ = M42^ - |M20^|^2 - 2 M21^^2` over a centered frame.
pub fn estimate_c42_frame(y: &[Complex64]) -> Result<FrameCumulants> {
    if y.len() < 4 {
        return Err(Error::Argument(format!("frame of {} samples is shorter than 4", y.len())));
    }
    let n = y.len() as f64;
    let mut m20 = Complex64::new(0.0, 0.0);
    let mut m21 = 0.0;
    let mut m42 = 0.0;
    for &s in y {
        let p = s.norm_sqr();
        m20 += s * s;
        m21 += p;
        m42 += p * p;
    }
    let (m20, m21, m42) = (m20 / n, m21 / n, m42 / n);
    Ok(FrameCumulants { c42: m42 - m20.norm_sqr() - 2.0 * m21 * m21, c21: m21, c20: m20 })
}

/// `c42 / (c21 - noise_var)^2`, rejecting frames whose signal power is not
/// clearly above the noise.
pub fn normalize_c42(c42: f64, c21: f64, noise_var: f64) -> Result<f64> {
    let signal_power = c21 - noise_var;
    let threshold = DEGENERATE_POWER_FRACTION * noise_var;
    if !(signal_power > threshold) || signal_power <= 0.0 {
        return Err(Error::DegenerateFrame { signal_power, threshold });
    }
    Ok(c42 / (signal_power * signal_power))
}

/// Where the squelch decision is taken.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SquelchGranularity {
    /// Per sample from the moving-average power; survivors are concatenated
    /// before framing.
    Sample,
    /// Per frame on the fixed grid of `J`-sample frames from the start of
    /// the capture; a frame is kept when its mean power clears the gate.
    Frame,
}

/// Power gate that removes idle stretches before framing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SquelchParams {
    /// Samples (or frames) are kept while the power exceeds `gate * noise_var`.
    pub gate: f64,
    /// Moving-average window in samples (sample granularity only).
    pub window: usize,
    pub granularity: SquelchGranularity,
}

impl Default for SquelchParams {
    fn default() -> Self {
        Self { gate: 2.0, window: 32, granularity: SquelchGranularity::Frame }
    }
}

impl SquelchParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.gate > 1.0) {
            return Err(Error::Config(format!("squelch gate must exceed 1, got {}", self.gate)));
        }
        if self.window < 8 {
            return Err(Error::Config(format!("squelch window must be at least 8, got {}", self.window)));
        }
        Ok(())
    }
}

/// Centered moving-average power over `window` samples, truncated at the edges.
fn local_power(r: &[Complex64], window: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(r.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for x in r {
        acc += x.norm_sqr();
        prefix.push(acc);
    }
    let half = window / 2;
    (0..r.len())
        .map(|n| {
            let lo = n.saturating_sub(half);
            let hi = (n + window - half).min(r.len());
            (prefix[hi] - prefix[lo]) / (hi - lo) as f64
        })
        .collect()
}

/// Keeps the samples whose local power exceeds `gate * noise_var`, in order.
pub fn squelch(r: &[Complex64], noise_var: f64, params: &SquelchParams) -> Vec<Complex64> {
    let threshold = params.gate * noise_var;
    local_power(r, params.window)
        .into_iter()
        .zip(r)
        .filter(|(p, _)| *p > threshold)
        .map(|(_, &x)| x)
        .collect()
}

fn mean_power(x: &[Complex64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum::<f64>() / x.len() as f64
}

/// Rough noise-floor estimate for captures without a known noise variance.
///
/// Takes block powers over non-overlapping windows and iterates the median of
/// the blocks that a squelch at the current estimate would reject.
pub fn estimate_noise_floor(r: &[Complex64], params: &SquelchParams) -> Option<f64> {
    let blocks: Vec<f64> = r
        .chunks_exact(params.window)
        .map(|c| c.iter().map(|x| x.norm_sqr()).sum::<f64>() / c.len() as f64)
        .collect();
    if blocks.is_empty() {
        return None;
    }
    let median = |mut v: Vec<f64>| -> Option<f64> {
        if v.is_empty() {
            return None;
        }
        v.sort_by(f64::total_cmp);
        Some(v[v.len() / 2])
    };
    let mut estimate = median(blocks.clone())?;
    for _ in 0..8 {
        let rejected: Vec<f64> = blocks.iter().copied().filter(|&p| p <= params.gate * estimate).collect();
        let next = median(rejected)?;
        if (next - estimate).abs() <= 1e-9 * estimate.max(f64::MIN_POSITIVE) {
            break;
        }
        estimate = next;
    }
    // median of a mean of `window` exponentials sits slightly below the mean
    Some(estimate / (1.0 - 1.0 / (3.0 * params.window as f64)))
}

/// Frame geometry and preprocessing for [`frame_series`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameParams {
    pub frame_length: usize,
    pub frames: usize,
    pub noise_variance: f64,
    pub squelch: Option<SquelchParams>,
}

/// Per-frame normalized C42 sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameSeries {
    /// `C42~(f)` per usable frame, in stream order.
    pub values: Vec<f64>,
    /// Estimated received power `C21^(f)` of each usable frame.
    pub powers: Vec<f64>,
    pub frame_length: usize,
    pub noise_variance: f64,
    pub frames_used: usize,
    /// Frames rejected as noise-only.
    pub frames_discarded: usize,
}

impl FrameSeries {
    /// Per-frame noisy power ratio `C21^(f) / (C21^(f) - noise_var)`.
    pub fn power_ratios(&self) -> impl Iterator<Item = f64> + '_ {
        self.powers.iter().map(move |&p| p / (p - self.noise_variance))
    }
}

/// Squelches `r`, splits it into at most `frames` frames of `frame_length`
/// samples and computes the normalized C42 of each.
pub fn frame_series(r: &[Complex64], params: &FrameParams) -> Result<FrameSeries> {
    if params.frame_length < MIN_FRAME_LENGTH {
        return Err(Error::Config(format!(
            "frame length {} is below the minimum of {MIN_FRAME_LENGTH}",
            params.frame_length
        )));
    }
    if !(params.noise_variance >= 0.0) {
        return Err(Error::Config(format!("noise variance must be non-negative, got {}", params.noise_variance)));
    }
    let j = params.frame_length;
    let concatenated;
    let frames: Box<dyn Iterator<Item = &[Complex64]>> = match &params.squelch {
        None => Box::new(r.chunks_exact(j)),
        Some(sq) => {
            sq.validate()?;
            match sq.granularity {
                SquelchGranularity::Sample => {
                    concatenated = squelch(r, params.noise_variance, sq);
                    Box::new(concatenated.chunks_exact(j))
                }
                SquelchGranularity::Frame => {
                    let threshold = sq.gate * params.noise_variance;
                    Box::new(r.chunks_exact(j).filter(move |f| mean_power(f) > threshold))
                }
            }
        }
    };

    let mut values = Vec::with_capacity(params.frames.min(r.len() / j.max(1)));
    let mut powers = Vec::with_capacity(params.frames.min(r.len() / j.max(1)));
    let mut discarded = 0;
    for frame in frames.take(params.frames) {
        let centered = center_signal(frame)?;
        let est = estimate_c42_frame(&centered)?;
        match normalize_c42(est.c42, est.c21, params.noise_variance) {
            Ok(v) => {
                values.push(v);
                powers.push(est.c21);
            }
            Err(Error::DegenerateFrame { .. }) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    if values.len() < 2 {
        return Err(Error::InsufficientData { usable: values.len(), required: 2 });
    }
    Ok(FrameSeries {
        frames_used: values.len(),
        values,
        powers,
        frame_length: params.frame_length,
        noise_variance: params.noise_variance,
        frames_discarded: discarded,
    })
}
