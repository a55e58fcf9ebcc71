//! Two-stage decision: maximum-likelihood class from the frame-average `W`,
//! then a chi-square test on the spread of the frames around that class's
//! mean to catch contention-based access.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::class_stats::{class_models, AccessMethod, ClassLabel, ClassModel, ClassStatistics, NoisyPowerRatio};
use crate::error::{Error, Result};
use crate::estimation::{frame_series, FrameParams, FrameSeries, SquelchParams};

/// Smallest variance any class may carry, so that zero-variance classes
/// (noiseless BPSK/PSK) keep a usable likelihood. The `1/J^2` part covers the
/// bias that per-frame centering leaves in otherwise deterministic frames.
pub fn variance_floor(j: usize) -> f64 {
    (100.0 / (j as f64 * j as f64)).max(1e-6)
}

/// How the noisy power ratio behind the class variances is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum RhoMode {
    /// A single ratio for the whole capture, usually from the mean SNR.
    Fixed { rho: NoisyPowerRatio },
    /// Each frame's ratio from its own estimated power; class variances are
    /// averaged over the frames.
    PerFrame,
}

/// Everything [`classify`] needs besides the samples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisParams {
    pub frame_length: usize,
    pub frames: usize,
    pub noise_variance: f64,
    pub squelch: Option<SquelchParams>,
    pub p_c_given_t: f64,
    /// User count assumed by the CDMA classes.
    pub cdma_users: usize,
    pub rho: RhoMode,
}

impl AnalysisParams {
    pub fn frame_params(&self) -> FrameParams {
        FrameParams {
            frame_length: self.frame_length,
            frames: self.frames,
            noise_variance: self.noise_variance,
            squelch: self.squelch,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p_c_given_t > 0.0 && self.p_c_given_t < 1.0) {
            return Err(Error::Config(format!("P_C|T must lie in (0, 1), got {}", self.p_c_given_t)));
        }
        if self.cdma_users == 0 {
            return Err(Error::Config("cdma_users must be at least 1".into()));
        }
        if self.frames < 2 {
            return Err(Error::Config(format!("need at least 2 frames, got {}", self.frames)));
        }
        if !(self.noise_variance >= 0.0 && self.noise_variance.is_finite()) {
            return Err(Error::Config(format!("noise variance must be finite and non-negative, got {}", self.noise_variance)));
        }
        if let Some(sq) = &self.squelch {
            sq.validate()?;
        }
        Ok(())
    }
}

/// Final decision.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Class(ClassLabel),
    Contention,
}

impl Verdict {
    pub fn access_method(self) -> AccessMethod {
        match self {
            Verdict::Class(l) => l.access_method(),
            Verdict::Contention => AccessMethod::Contention,
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Class(l) => write!(f, "{l}"),
            Verdict::Contention => f.write_str("contention"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub stage1_label: ClassLabel,
    pub contention: bool,
    pub verdict: Verdict,
    #[serde(rename = "W")]
    pub w: f64,
    pub varsigma2: f64,
    pub tau: f64,
    pub per_class_loglik: BTreeMap<ClassLabel, f64>,
    pub frames_used: usize,
    pub frames_discarded: usize,
}

/// Average of the frame values.
pub fn sample_mean_w(fs: &FrameSeries) -> Result<f64> {
    if fs.values.len() < 2 {
        return Err(Error::InsufficientData { usable: fs.values.len(), required: 2 });
    }
    Ok(fs.values.iter().sum::<f64>() / fs.values.len() as f64)
}

/// Gaussian log-likelihood of `w` under each class (mean of `frames` frames);
/// returns the best label, ties going to the lower index.
pub fn stage1_classify(w: f64, table: &[ClassStatistics], frames: usize) -> Result<(ClassLabel, BTreeMap<ClassLabel, f64>)> {
    if table.is_empty() {
        return Err(Error::Argument("class table is empty".into()));
    }
    if frames == 0 {
        return Err(Error::Argument("frame count must be positive".into()));
    }
    let mut loglik = BTreeMap::new();
    let mut best: Option<(ClassLabel, f64)> = None;
    for s in table {
        if !(s.var > 0.0) {
            return Err(Error::Argument(format!("class {} has non-positive variance {}", s.label, s.var)));
        }
        let v = s.var / frames as f64;
        let ll = -0.5 * ((w - s.mean).powi(2) / v + (2.0 * PI * v).ln());
        loglik.insert(s.label, ll);
        let better = match best {
            None => true,
            Some((bl, bll)) => ll > bll || (ll == bll && s.label < bl),
        };
        if better {
            best = Some((s.label, ll));
        }
    }
    Ok((best.expect("table is nonempty").0, loglik))
}

fn ln_gamma(x: f64) -> f64 {
    // Lanczos approximation (g = 7, n = 9)
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Regularized lower and upper incomplete gamma `(P(a, x), Q(a, x))`.
fn incomplete_gamma(a: f64, x: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..10_000 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term.abs() < sum.abs() * 1e-17 {
                break;
            }
        }
        let p = (sum.ln() + log_prefix).exp();
        (p, 1.0 - p)
    } else {
        // modified Lentz continued fraction for Q
        const TINY: f64 = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / TINY;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < TINY {
                d = TINY;
            }
            c = b + an / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (h.ln() + log_prefix).exp();
        (1.0 - q, q)
    }
}

/// Chi-square CDF with `dof` degrees of freedom.
pub fn chi_square_cdf(x: f64, dof: u32) -> f64 {
    incomplete_gamma(0.5 * dof as f64, 0.5 * x).0
}

fn chi_square_sf(x: f64, dof: u32) -> f64 {
    incomplete_gamma(0.5 * dof as f64, 0.5 * x).1
}

fn chi_square_pdf(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let k = 0.5 * dof as f64;
    ((k - 1.0) * x.ln() - 0.5 * x - k * 2f64.ln() - ln_gamma(k)).exp()
}

/// Inverse chi-square CDF by safeguarded Newton iteration.
pub fn chi_square_quantile(p: f64, dof: u32) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Argument(format!("probability must lie in (0, 1), got {p}")));
    }
    if dof == 0 {
        return Err(Error::Argument("degrees of freedom must be positive".into()));
    }
    let k = dof as f64;
    // Wilson-Hilferty starting point
    let z = normal_quantile(p);
    let c = 2.0 / (9.0 * k);
    let mut x = (k * (1.0 - c + z * c.sqrt()).powi(3)).max(1e-8);

    let (mut lo, mut hi) = (0.0, k.max(1.0));
    while chi_square_cdf(hi, dof) < p {
        lo = hi;
        hi *= 2.0;
    }
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    let upper_tail = p > 0.5;
    for _ in 0..200 {
        // residual measured on the smaller tail to keep precision
        let r = if upper_tail { (1.0 - p) - chi_square_sf(x, dof) } else { chi_square_cdf(x, dof) - p };
        if r.abs() <= 1e-15 * p.min(1.0 - p).max(1e-300) {
            break;
        }
        if r > 0.0 {
            hi = x;
        } else {
            lo = x;
        }
        let pdf = chi_square_pdf(x, dof);
        let mut next = if pdf > 0.0 { x - r / pdf } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x {
            x = next;
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Standard normal quantile (Acklam's rational approximation), used only
/// as a starting point.
fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [-3.969683028665376e1, 2.209460984245205e2, -2.759285104469687e2, 1.383577518672690e2, -3.066479806614716e1, 2.506628277459239];
    const B: [f64; 5] = [-5.447609879822406e1, 1.615858368580409e2, -1.556989798598866e2, 6.680131188771972e1, -1.328068155288572e1];
    const C: [f64; 6] = [-7.784894002430293e-3, -3.223964580411365e-1, -2.400758277161838, -2.549732539343734, 4.374664141464968, 2.938163982698783];
    const D: [f64; 4] = [7.784695709041462e-3, 3.224671290700398e-1, 2.445134137142996, 3.754408661907416];
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5]) / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < 0.02425 {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - 0.02425 {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Second moment of the frames about the class mean against its chi-square
/// threshold; returns `(contention, varsigma2, tau)`.
pub fn stage2_contention(fs: &FrameSeries, m_hat: &ClassStatistics, p_c_given_t: f64) -> Result<(bool, f64, f64)> {
    if !(p_c_given_t > 0.0 && p_c_given_t < 1.0) {
        return Err(Error::Argument(format!("P_C|T must lie in (0, 1), got {p_c_given_t}")));
    }
    let f = fs.values.len();
    if f < 2 {
        return Err(Error::InsufficientData { usable: f, required: 2 });
    }
    let varsigma2 = fs.values.iter().map(|v| (v - m_hat.mean).powi(2)).sum::<f64>() / f as f64;
    let tau = m_hat.var * chi_square_quantile(1.0 - p_c_given_t, f as u32)? / f as f64;
    Ok((varsigma2 >= tau, varsigma2, tau))
}

/// Class statistics for the frames at hand, variance floor applied.
pub fn analysis_table(models: &[ClassModel], fs: &FrameSeries, rho: RhoMode) -> Result<Vec<ClassStatistics>> {
    let j = fs.frame_length;
    let floor = variance_floor(j);
    let per_frame: Vec<NoisyPowerRatio> = match rho {
        RhoMode::Fixed { .. } => Vec::new(),
        RhoMode::PerFrame => fs.power_ratios().map(NoisyPowerRatio::new).collect::<Result<_>>()?,
    };
    Ok(models
        .iter()
        .map(|m| {
            let j_var = match rho {
                RhoMode::Fixed { rho } => m.j_var(rho),
                RhoMode::PerFrame => per_frame.iter().map(|&r| m.j_var(r)).sum::<f64>() / per_frame.len() as f64,
            };
            ClassStatistics { label: m.label, mean: m.mean, var: (j_var / j as f64).max(floor), j }
        })
        .collect())
}

/// Frames the capture, picks the most likely class and tests for contention.
pub fn classify(r: &[Complex64], params: &AnalysisParams) -> Result<ClassificationResult> {
    params.validate()?;
    let models = class_models(params.cdma_users)?;
    classify_with_models(r, params, &models)
}

/// [`classify`] with precomputed class models.
pub fn classify_with_models(r: &[Complex64], params: &AnalysisParams, models: &[ClassModel]) -> Result<ClassificationResult> {
    let fs = frame_series(r, &params.frame_params())?;
    let w = sample_mean_w(&fs)?;
    let table = analysis_table(models, &fs, params.rho)?;
    let (label, per_class_loglik) = stage1_classify(w, &table, fs.values.len())?;
    let m_hat = table.iter().find(|s| s.label == label).expect("label comes from the table");
    let (contention, varsigma2, tau) = stage2_contention(&fs, m_hat, params.p_c_given_t)?;
    Ok(ClassificationResult {
        stage1_label: label,
        contention,
        verdict: if contention { Verdict::Contention } else { Verdict::Class(label) },
        w,
        varsigma2,
        tau,
        per_class_loglik,
        frames_used: fs.frames_used,
        frames_discarded: fs.frames_discarded,
    })
}
