//! Ground-truth primary-user networks: TDMA, OFDMA, CDMA and contention
//! (unslotted ALOHA) traffic through flat Rayleigh fading and AWGN.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::class_stats::{AccessMethod, ClassLabel, NoisyPowerRatio};
use crate::classifier::{AnalysisParams, RhoMode, Verdict};
use crate::constellations::{Constellation, Modulation};
use crate::error::{Error, Result};
use crate::estimation::SquelchParams;

/// Spreading-code family for CDMA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CodeFamily {
    /// Rows of a Sylvester Hadamard matrix.
    Walsh,
    /// Independent random ±1 codes, drawn once per record.
    Random,
}

/// Where the analysis takes its noisy power ratio from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoSource {
    /// `1 + 10^(-snr_db/10)` from the configured mean SNR.
    ConfiguredSnr,
    /// From each frame's measured power.
    PerFrame,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub method: AccessMethod,
    pub n_total: usize,
    pub modulation: Modulation,
    #[serde(rename = "J")]
    pub j: usize,
    #[serde(rename = "F")]
    pub f: usize,
    /// Mean per-user SNR in dB; `null` in JSON means noiseless.
    #[serde(with = "snr_serde")]
    pub snr_db: f64,
    pub load_g: f64,
    pub packet_len: usize,
    pub slot_len: usize,
    pub n_sc: usize,
    pub n_p: usize,
    pub l_c: usize,
    pub codes: CodeFamily,
    pub p_c_given_t: f64,
    pub seed: u64,
    pub squelch: Option<SquelchParams>,
    /// Rayleigh fading on; off means unit gains.
    pub fading: bool,
    /// User count behind the CDMA hypothesis classes.
    pub cdma_users: usize,
    pub rho_source: RhoSource,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            method: AccessMethod::Tdma,
            n_total: 4,
            modulation: Modulation::Psk(4),
            j: 500,
            f: 200,
            snr_db: 10.0,
            load_g: 1.0,
            packet_len: 500,
            slot_len: 500,
            n_sc: 64,
            n_p: 4,
            l_c: 16,
            codes: CodeFamily::Random,
            p_c_given_t: 0.05,
            seed: 0,
            squelch: Some(SquelchParams::default()),
            fading: true,
            cdma_users: 16,
            rho_source: RhoSource::PerFrame,
        }
    }
}

mod snr_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        self.modulation.validate()?;
        if self.n_total < 1 {
            return bad("n_total must be at least 1".into());
        }
        if !(self.load_g >= 0.0) || !self.load_g.is_finite() {
            return bad(format!("load_g must be finite and non-negative, got {}", self.load_g));
        }
        if self.snr_db.is_nan() || self.snr_db == f64::NEG_INFINITY {
            return bad(format!("invalid snr_db {}", self.snr_db));
        }
        if self.j < crate::estimation::MIN_FRAME_LENGTH || self.f < 2 {
            return bad(format!("frame geometry J={} F={} too small", self.j, self.f));
        }
        if self.packet_len == 0 || self.slot_len == 0 {
            return bad("packet_len and slot_len must be positive".into());
        }
        if self.n_p >= self.n_sc {
            return bad(format!("cyclic prefix {} must be shorter than {} subcarriers", self.n_p, self.n_sc));
        }
        if self.l_c < 1 {
            return bad("l_c must be at least 1".into());
        }
        if !(self.p_c_given_t > 0.0 && self.p_c_given_t < 1.0) {
            return bad(format!("p_c_given_t must lie in (0, 1), got {}", self.p_c_given_t));
        }
        if self.cdma_users < 1 {
            return bad("cdma_users must be at least 1".into());
        }
        if let Some(sq) = &self.squelch {
            sq.validate()?;
        }
        match self.method {
            AccessMethod::Ofdma if self.n_sc % self.n_total != 0 => {
                bad(format!("{} subcarriers cannot be split evenly among {} users", self.n_sc, self.n_total))
            }
            AccessMethod::Cdma if self.codes == CodeFamily::Walsh && (self.n_total > self.l_c || !self.l_c.is_power_of_two()) => {
                bad(format!("{} Walsh codes of length {} are not available", self.n_total, self.l_c))
            }
            _ => Ok(()),
        }
    }

    /// Noise variance for unit-power users with unit mean fading power.
    pub fn noise_variance(&self) -> f64 {
        if self.snr_db == f64::INFINITY {
            0.0
        } else {
            10f64.powf(-self.snr_db / 10.0)
        }
    }

    /// Ground-truth label of the scenario.
    pub fn label(&self) -> Result<Verdict> {
        match self.method {
            AccessMethod::Contention => Ok(Verdict::Contention),
            m => Ok(Verdict::Class(ClassLabel::for_scenario(m, self.modulation)?)),
        }
    }

    /// Analysis parameters matching this scenario, for noise variance `noise_var`.
    pub fn analysis_params(&self, noise_var: f64) -> Result<AnalysisParams> {
        let rho = match self.rho_source {
            RhoSource::ConfiguredSnr => RhoMode::Fixed { rho: NoisyPowerRatio::from_snr_db(self.snr_db)? },
            RhoSource::PerFrame => RhoMode::PerFrame,
        };
        Ok(AnalysisParams {
            frame_length: self.j,
            frames: self.f,
            noise_variance: noise_var,
            squelch: self.squelch,
            p_c_given_t: self.p_c_given_t,
            cdma_users: self.cdma_users,
            rho,
        })
    }
}

/// A contiguous transmission starting at sample `start`.
#[derive(Debug, Clone, PartialEq)]
pub struct Burst {
    pub start: usize,
    pub samples: Vec<Complex64>,
}

impl Burst {
    pub fn span(&self) -> Range<usize> {
        self.start..self.start + self.samples.len()
    }
}

/// Everything one transmitter puts on the air; it sees a single channel gain.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Transmitter {
    pub bursts: Vec<Burst>,
}

/// Per-user activity `a_i(n)` as sorted, possibly overlapping intervals.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivityPattern {
    pub len: usize,
    pub users: Vec<Vec<Range<usize>>>,
}

impl ActivityPattern {
    pub fn is_active(&self, user: usize, n: usize) -> bool {
        self.users[user].iter().any(|r| r.contains(&n))
    }

    /// `sum_i a_i(n)` for every `n`.
    pub fn active_counts(&self) -> Vec<u32> {
        let mut diff = vec![0i64; self.len + 1];
        for r in self.users.iter().flatten() {
            let end = r.end.min(self.len);
            if r.start < end {
                diff[r.start] += 1;
                diff[end] -= 1;
            }
        }
        let mut acc = 0i64;
        diff[..self.len]
            .iter()
            .map(|d| {
                acc += d;
                acc as u32
            })
            .collect()
    }
}

/// Channel inputs plus activity of a generated network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSignal {
    pub len: usize,
    pub transmitters: Vec<Transmitter>,
    pub activity: ActivityPattern,
}

/// Draws i.i.d. unit-power symbols.
pub struct SymbolSource {
    points: Vec<Complex64>,
}

impl SymbolSource {
    pub fn new(modulation: Modulation) -> Result<Self> {
        Ok(Self { points: Constellation::new(modulation)?.points().to_vec() })
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Complex64 {
        self.points[rng.random_range(0..self.points.len())]
    }

    pub fn fill<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<Complex64> {
        (0..n).map(|_| self.draw(rng)).collect()
    }
}

/// Slotted TDMA with `len` samples: each slot is occupied with probability
/// `min(load_g, 1)` by the round-robin owner of that slot.
pub fn gen_tdma<R: Rng>(cfg: &ScenarioConfig, len: usize, rng: &mut R) -> Result<NetworkSignal> {
    let src = SymbolSource::new(cfg.modulation)?;
    let p = cfg.load_g.min(1.0);
    let mut transmitters = vec![Transmitter::default(); cfg.n_total];
    let mut users = vec![Vec::new(); cfg.n_total];
    for (slot, start) in (0..len).step_by(cfg.slot_len).enumerate() {
        let owner = slot % cfg.n_total;
        if rng.random::<f64>() < p {
            let n = cfg.slot_len.min(len - start);
            transmitters[owner].bursts.push(Burst { start, samples: src.fill(rng, n) });
            users[owner].push(start..start + n);
        }
    }
    Ok(NetworkSignal { len, transmitters, activity: ActivityPattern { len, users } })
}

/// OFDMA uplink: user `i` owns the `i`-th contiguous block of `n_sc / n_total`
/// subcarriers. Every OFDM symbol is an inverse FFT of length `n_sc` preceded
/// by an `n_p`-sample cyclic prefix; each user's share is generated separately
/// so that it can see its own channel.
pub fn gen_ofdma<R: Rng>(cfg: &ScenarioConfig, len: usize, rng: &mut R) -> Result<NetworkSignal> {
    if cfg.n_sc % cfg.n_total != 0 {
        return Err(Error::Config(format!("{} subcarriers cannot be split among {} users", cfg.n_sc, cfg.n_total)));
    }
    let src = SymbolSource::new(cfg.modulation)?;
    let ifft = FftPlanner::<f64>::new().plan_fft_inverse(cfg.n_sc);
    let scale = 1.0 / (cfg.n_sc as f64).sqrt();
    let block = cfg.n_sc / cfg.n_total;
    let sym_len = cfg.n_sc + cfg.n_p;
    let mut per_user = vec![Vec::with_capacity(len + sym_len); cfg.n_total];
    let mut buf = vec![Complex64::new(0.0, 0.0); cfg.n_sc];
    while per_user[0].len() < len {
        for (u, samples) in per_user.iter_mut().enumerate() {
            for (k, x) in buf.iter_mut().enumerate() {
                *x = if k / block == u { src.draw(rng) } else { Complex64::new(0.0, 0.0) };
            }
            ifft.process(&mut buf);
            samples.extend(buf[cfg.n_sc - cfg.n_p..].iter().map(|x| x * scale));
            samples.extend(buf.iter().map(|x| x * scale));
        }
    }
    Ok(always_on(len, per_user))
}

fn always_on(len: usize, per_user: Vec<Vec<Complex64>>) -> NetworkSignal {
    let users = vec![vec![0..len]; per_user.len()];
    let transmitters = per_user
        .into_iter()
        .map(|mut samples| {
            samples.truncate(len);
            Transmitter { bursts: vec![Burst { start: 0, samples }] }
        })
        .collect();
    NetworkSignal { len, transmitters, activity: ActivityPattern { len, users } }
}

/// Rows of the Sylvester Hadamard matrix of order `n` (a power of two).
pub fn walsh_codes(n: usize) -> Vec<Vec<f64>> {
    assert!(n.is_power_of_two(), "Walsh code length must be a power of two");
    let mut h = vec![vec![1.0]];
    while h.len() < n {
        let m = h.len();
        let mut next = vec![vec![0.0; 2 * m]; 2 * m];
        for i in 0..m {
            for k in 0..m {
                next[i][k] = h[i][k];
                next[i][k + m] = h[i][k];
                next[i + m][k] = h[i][k];
                next[i + m][k + m] = -h[i][k];
            }
        }
        h = next;
    }
    h
}

/// Synchronous CDMA: user `i` sends `c_i(n mod l_c) d_i(n / l_c)`, scaled so
/// the composite has unit power.
pub fn gen_cdma<R: Rng>(cfg: &ScenarioConfig, len: usize, rng: &mut R) -> Result<NetworkSignal> {
    let src = SymbolSource::new(cfg.modulation)?;
    let codes: Vec<Vec<f64>> = match cfg.codes {
        CodeFamily::Walsh => {
            if cfg.n_total > cfg.l_c || !cfg.l_c.is_power_of_two() {
                return Err(Error::Config(format!("{} Walsh codes of length {} are not available", cfg.n_total, cfg.l_c)));
            }
            walsh_codes(cfg.l_c).into_iter().take(cfg.n_total).collect()
        }
        CodeFamily::Random => (0..cfg.n_total)
            .map(|_| (0..cfg.l_c).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect())
            .collect(),
    };
    let scale = 1.0 / (cfg.n_total as f64).sqrt();
    let mut per_user = vec![Vec::with_capacity(len + cfg.l_c); cfg.n_total];
    while per_user[0].len() < len {
        for (samples, code) in per_user.iter_mut().zip(&codes) {
            let d = src.draw(rng) * scale;
            samples.extend(code.iter().map(|&c| d * c));
        }
    }
    Ok(always_on(len, per_user))
}

/// Unslotted ALOHA: Poisson packet starts at `load_g` packets per packet
/// duration, each packet owned by a uniformly drawn user; collided packets
/// are neither detected nor retransmitted.
pub fn gen_contention<R: Rng>(cfg: &ScenarioConfig, len: usize, rng: &mut R) -> Result<NetworkSignal> {
    let src = SymbolSource::new(cfg.modulation)?;
    let mut transmitters = vec![Transmitter::default(); cfg.n_total];
    let mut users = vec![Vec::new(); cfg.n_total];
    if cfg.load_g > 0.0 {
        let gap = Exp::new(cfg.load_g / cfg.packet_len as f64).map_err(|e| Error::Config(e.to_string()))?;
        let mut t = gap.sample(rng);
        while (t as usize) < len {
            let start = t as usize;
            let owner = rng.random_range(0..cfg.n_total);
            let n = cfg.packet_len.min(len - start);
            transmitters[owner].bursts.push(Burst { start, samples: src.fill(rng, n) });
            users[owner].push(start..start + n);
            t += gap.sample(rng);
        }
    }
    Ok(NetworkSignal { len, transmitters, activity: ActivityPattern { len, users } })
}

/// Circularly-symmetric complex Gaussian with `E|z|^2 = var`.
pub fn complex_gaussian<R: Rng>(rng: &mut R, var: f64) -> Complex64 {
    let s = (0.5 * var).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re * s, im * s)
}

/// Draws one channel gain per transmitter: Rayleigh with unit mean power, or
/// exactly one when fading is off.
pub fn draw_gains<R: Rng>(n: usize, fading: bool, rng: &mut R) -> Vec<Complex64> {
    (0..n).map(|_| if fading { complex_gaussian(rng, 1.0) } else { Complex64::new(1.0, 0.0) }).collect()
}

/// `r(n) = sum_i h_i s_i(n) + nu(n)` with noise variance `noise_var`.
pub fn apply_channel<R: Rng>(signal: &NetworkSignal, gains: &[Complex64], noise_var: f64, rng: &mut R) -> Vec<Complex64> {
    assert_eq!(gains.len(), signal.transmitters.len(), "one gain per transmitter");
    let mut r = vec![Complex64::new(0.0, 0.0); signal.len];
    for (tx, h) in signal.transmitters.iter().zip(gains) {
        for b in &tx.bursts {
            for (y, s) in r[b.span()].iter_mut().zip(&b.samples) {
                *y += h * s;
            }
        }
    }
    if noise_var > 0.0 {
        for y in r.iter_mut() {
            *y += complex_gaussian(rng, noise_var);
        }
    }
    r
}

/// Largest record [`synthesize_scenario`] will generate.
pub const MAX_RECORD_LEN: usize = 1 << 24;

/// Record length expected to leave about `F` frames after squelch, given the
/// realized channel gains.
fn record_len(cfg: &ScenarioConfig, gains: &[Complex64], noise_var: f64) -> usize {
    let needed = (cfg.j * cfg.f) as f64;
    // a transmitter survives the squelch when its local power clears the gate
    let audible = |h: &Complex64| match &cfg.squelch {
        Some(sq) => h.norm_sqr() > (sq.gate - 1.0) * noise_var,
        None => true,
    };
    let (retained, duty) = match cfg.method {
        AccessMethod::Tdma => (audible_fraction(gains, &audible), cfg.load_g.min(1.0)),
        AccessMethod::Contention => (audible_fraction(gains, &audible), 1.0 - (-cfg.load_g).exp()),
        // all users share every sample, so the record is audible or not as a whole
        AccessMethod::Ofdma | AccessMethod::Cdma => {
            let mean_gain = gains.iter().map(|h| h.norm_sqr()).sum::<f64>() / gains.len() as f64;
            (if audible(&Complex64::new(mean_gain.sqrt(), 0.0)) { 1.0 } else { 0.0 }, 1.0)
        }
    };
    let efficiency = retained * duty;
    if efficiency <= 0.0 {
        return (needed as usize).min(MAX_RECORD_LEN);
    }
    let margin = if efficiency >= 1.0 { 1.0 } else { 1.3 };
    let pad = 2 * cfg.slot_len.max(cfg.packet_len);
    ((needed * margin / efficiency) as usize + pad).min(MAX_RECORD_LEN)
}

fn audible_fraction(gains: &[Complex64], audible: impl Fn(&Complex64) -> bool) -> f64 {
    gains.iter().filter(|h| audible(h)).count() as f64 / gains.len() as f64
}

/// A synthesized capture.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub samples: Vec<Complex64>,
    pub noise_variance: f64,
    pub label: Verdict,
    pub gains: Vec<Complex64>,
    pub activity: ActivityPattern,
}

/// Generates the configured network, passes it through the channel and
/// returns the received samples with the ground-truth label.
pub fn synthesize_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let label = cfg.label()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let noise_var = cfg.noise_variance();
    let gains = draw_gains(cfg.n_total, cfg.fading, &mut rng);
    let len = record_len(cfg, &gains, noise_var);
    let signal = match cfg.method {
        AccessMethod::Tdma => gen_tdma(cfg, len, &mut rng)?,
        AccessMethod::Ofdma => gen_ofdma(cfg, len, &mut rng)?,
        AccessMethod::Cdma => gen_cdma(cfg, len, &mut rng)?,
        AccessMethod::Contention => gen_contention(cfg, len, &mut rng)?,
    };
    let samples = apply_channel(&signal, &gains, noise_var, &mut rng);
    Ok(Scenario { samples, noise_variance: noise_var, label, gains, activity: signal.activity })
}

/// JSON sidecar stored next to an exported capture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureMeta {
    pub config: ScenarioConfig,
    pub label: Verdict,
    pub noise_variance: f64,
    pub n_samples: usize,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes interleaved little-endian `f32` I/Q samples and the sidecar.
pub fn write_capture(path: &Path, samples: &[Complex64], meta: &CaptureMeta) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for s in samples {
        w.write_all(&(s.re as f32).to_le_bytes())?;
        w.write_all(&(s.im as f32).to_le_bytes())?;
    }
    w.flush()?;
    let side = BufWriter::new(File::create(sidecar_path(path))?);
    serde_json::to_writer_pretty(side, meta)?;
    Ok(())
}

/// Reads a capture written by [`write_capture`].
pub fn read_capture(path: &Path) -> Result<(Vec<Complex64>, CaptureMeta)> {
    let meta: CaptureMeta = serde_json::from_reader(BufReader::new(File::open(sidecar_path(path))?))?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::InvalidData,
            format!("capture length {} is not a whole number of I/Q pairs", bytes.len()),
        )));
    }
    if bytes.len() / 8 != meta.n_samples {
        return Err(Error::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("capture holds {} samples, sidecar declares {}", bytes.len() / 8, meta.n_samples),
        )));
    }
    let f = |b: &[u8]| f32::from_le_bytes(b.try_into().expect("4-byte chunk")) as f64;
    let samples = bytes.chunks_exact(8).map(|c| Complex64::new(f(&c[..4]), f(&c[4..]))).collect();
    Ok((samples, meta))
}
